"""Seeded synthetic trimodal datasets plus the on-disk dataset format.

Two generators: an interaction (XOR) classification set where no single
modality can predict the label, and a toy translation corpus whose homograph
tokens are only resolvable through the speech/video topic signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vocab import UNK

SCHEMA_HEADER = "#schema=fuselab-v1"

DEFAULT_SPEECH_DIM = 32
DEFAULT_VIDEO_DIM = 48


class SchemaError(Exception):
    """Dataset file does not carry the expected schema header or framing."""


@dataclass
class RawSample:
    """One event before vocabulary encoding; missing modalities are None."""

    topic: int
    label: int | None = None
    target_tokens: list[str] | None = None
    text_tokens: list[str] | None = None
    speech: np.ndarray | None = None
    video: np.ndarray | None = None


def _sample_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


# -- interaction (XOR) classification dataset --------------------------------

_FILLER = ["the", "sample", "shows", "a", "typical", "recording", "of",
           "routine", "daily", "activity", "nothing", "special", "here"]


def gen_interaction_dataset(n: int, seed: int,
                            speech_dim: int = DEFAULT_SPEECH_DIM,
                            video_dim: int = DEFAULT_VIDEO_DIM,
                            noise: float = 0.3) -> list[RawSample]:
    """4-class task: label = 2*d + (a xor b).

    Speech features prototype-encode (a, d) and video features (b, d), so a
    single modality can recover d but never the xor bit; text is label-free
    filler. Joint information makes the label deterministic at zero noise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    proto_rng = _sample_rng(seed, 0, stream=1)
    speech_protos = proto_rng.normal(0.0, 1.0, size=(2, 2, speech_dim))
    video_protos = proto_rng.normal(0.0, 1.0, size=(2, 2, video_dim))

    samples = []
    for i in range(n):
        rng = _sample_rng(seed, i)
        a, b, d = rng.integers(0, 2, size=3)
        label = int(2 * d + (a ^ b))
        speech = speech_protos[a, d] + rng.normal(0.0, noise, size=speech_dim)
        video = video_protos[b, d] + rng.normal(0.0, noise, size=video_dim)
        length = int(rng.integers(4, 9))
        text = [str(t) for t in rng.choice(_FILLER, size=length)]
        samples.append(RawSample(topic=int(d * 4 + a * 2 + b), label=label,
                                 text_tokens=text, speech=speech, video=video))
    return samples


# -- toy translation corpus --------------------------------------------------

TRANSLATION_SPEECH_DIM = 16
TRANSLATION_VIDEO_DIM = 24


def gen_toy_translation(n: int, seed: int, vocab_size: int = 24,
                        ambiguity_rate: float = 0.0, topic_skew: float = 0.75,
                        noise: float = 0.3, min_len: int = 4, max_len: int = 10
                        ) -> list[RawSample]:
    """Parallel corpus with a deterministic token map plus one local reorder.

    Source types split into regular tokens (translated one-to-one) and
    homographs whose translation depends on the sample's hidden topic (two
    topics). Regular tokens are drawn with probability `topic_skew` from the
    topic's own half of the regular vocabulary, so text carries a weak topic
    cue; speech/video features carry it strongly (noisy topic prototypes).
    The target sequence is the mapped source with its first two tokens
    swapped.
    """
    if vocab_size < 20:
        raise ValueError("vocab_size must be >= 20")
    if not 0.0 <= ambiguity_rate <= 1.0:
        raise ValueError("ambiguity_rate must lie in [0, 1]")

    n_homo = max(1, vocab_size // 4) if ambiguity_rate > 0 else 0
    homographs = [f"s{j:02d}" for j in range(n_homo)]
    regular = [f"s{j:02d}" for j in range(n_homo, vocab_size)]
    half = len(regular) // 2
    topic_pool = [regular[:half], regular[half:]]

    proto_rng = _sample_rng(seed, 0, stream=1)
    speech_protos = proto_rng.normal(0.0, 1.0, size=(2, TRANSLATION_SPEECH_DIM))
    video_protos = proto_rng.normal(0.0, 1.0, size=(2, TRANSLATION_VIDEO_DIM))

    samples = []
    for i in range(n):
        rng = _sample_rng(seed, i)
        topic = int(rng.integers(0, 2))
        length = int(rng.integers(min_len, max_len + 1))
        src: list[str] = []
        for _ in range(length):
            if n_homo and rng.random() < ambiguity_rate:
                src.append(str(rng.choice(homographs)))
            elif rng.random() < topic_skew:
                src.append(str(rng.choice(topic_pool[topic])))
            else:
                src.append(str(rng.choice(topic_pool[1 - topic])))
        tgt = reference_translation(src, topic, n_homo)
        speech = speech_protos[topic] + rng.normal(0.0, noise, size=TRANSLATION_SPEECH_DIM)
        video = video_protos[topic] + rng.normal(0.0, noise, size=TRANSLATION_VIDEO_DIM)
        samples.append(RawSample(topic=topic, target_tokens=tgt, text_tokens=src,
                                 speech=speech, video=video))
    return samples


def reference_translation(src: list[str], topic: int, homograph_count: int) -> list[str]:
    """Oracle target for a source sentence under the generator's rule."""
    out = []
    for tok in src:
        idx = int(tok[1:])
        if idx < homograph_count:
            out.append(f"t{idx:02d}{'ab'[topic]}")
        else:
            out.append(f"t{idx:02d}")
    if len(out) >= 2:
        out[0], out[1] = out[1], out[0]
    return out


# -- ablation ---------------------------------------------------------------

def apply_word_drop(token_ids: list[int], p: float,
                    rng: np.random.Generator) -> list[int]:
    """Replace each non-reserved token id by UNK independently with prob p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("word-drop probability must lie in [0, 1]")
    return [UNK if t >= 4 and rng.random() < p else t for t in token_ids]


# -- on-disk format ----------------------------------------------------------

def _fmt_floats(v: np.ndarray | None) -> str:
    if v is None:
        return ""
    return ",".join(repr(float(x)) for x in v)


def write_dataset(path, samples: list[RawSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SCHEMA_HEADER + "\n")
        for s in samples:
            if s.label is not None:
                label_or_target = str(s.label)
            elif s.target_tokens is not None:
                label_or_target = " ".join(s.target_tokens)
            else:
                raise ValueError("sample has neither label nor target")
            row = [str(s.topic), label_or_target,
                   " ".join(s.text_tokens) if s.text_tokens else "",
                   _fmt_floats(s.speech), _fmt_floats(s.video)]
            fh.write("\t".join(row) + "\n")


def read_dataset(path) -> list[RawSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != SCHEMA_HEADER:
            raise SchemaError(f"bad schema header in {path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 5:
                raise SchemaError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
            topic, label_or_target, text, speech, video = fields
            is_label = label_or_target.strip().lstrip("-").isdigit()
            samples.append(RawSample(
                topic=int(topic),
                label=int(label_or_target) if is_label else None,
                target_tokens=None if is_label else label_or_target.split(),
                text_tokens=text.split() if text else None,
                speech=np.array([float(x) for x in speech.split(",")]) if speech else None,
                video=np.array([float(x) for x in video.split(",")]) if video else None,
            ))
    return samples


def split_dataset(samples: list[RawSample], train: float = 0.8, val: float = 0.1
                  ) -> tuple[list[RawSample], list[RawSample], list[RawSample]]:
    """Disjoint index-based split (generation order is already random)."""
    n = len(samples)
    n_train = int(n * train)
    n_val = int(n * val)
    return (samples[:n_train], samples[n_train:n_train + n_val],
            samples[n_train + n_val:])
