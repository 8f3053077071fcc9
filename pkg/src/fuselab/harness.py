"""Training loop, evaluation, ablation sweeps, and run bookkeeping.

The total objective per batch is lambda1 * J_fusion + lambda2 * J_task.
With GAN fusion each batch first takes one discriminator step per module,
then one Adam step over every non-discriminator parameter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt_io
from . import layers
from .autodiff import Tensor
from .autofusion import AutoFusionNet, FusionOutput
from .config import ConfigError, ExperimentConfig, config_to_text, parse_config_text
from .data import RawSample, apply_word_drop, read_dataset
from .encoders import LatentBundle, TextEncoder, VectorEncoder
from .ganfusion import GanFusionStack
from .heads import AttentiveDecoder, ClassifierHead
from .layers import AdamState, adam_step, dropout
from .metrics import classification_report, corpus_bleu, silhouette
from .vocab import EOS, PAD, Vocabulary


@dataclass
class DataInfo:
    """Everything beyond the config needed to rebuild a model for a dataset."""

    n_classes: int = 0
    src_vocab: Vocabulary | None = None
    tgt_vocab: Vocabulary | None = None
    speech_dim: int = 0
    video_dim: int = 0

    @classmethod
    def from_samples(cls, samples: list[RawSample], task: str) -> "DataInfo":
        info = cls()
        texts = [s.text_tokens for s in samples if s.text_tokens]
        if texts:
            info.src_vocab = Vocabulary.from_corpus(texts)
        if task == "classification":
            info.n_classes = max(s.label for s in samples) + 1
        else:
            info.tgt_vocab = Vocabulary.from_corpus(
                s.target_tokens for s in samples)
        for s in samples:
            if s.speech is not None:
                info.speech_dim = len(s.speech)
            if s.video is not None:
                info.video_dim = len(s.video)
        return info

    def to_text(self) -> str:
        lines = [f"n_classes = {self.n_classes}",
                 f"speech_dim = {self.speech_dim}",
                 f"video_dim = {self.video_dim}"]
        if self.src_vocab is not None:
            lines.append("src_vocab = " + " ".join(self.src_vocab.id_to_token[4:]))
        if self.tgt_vocab is not None:
            lines.append("tgt_vocab = " + " ".join(self.tgt_vocab.id_to_token[4:]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DataInfo":
        info = cls()
        for line in text.splitlines():
            if "=" not in line:
                continue
            key, raw = (x.strip() for x in line.split("=", 1))
            if key in ("n_classes", "speech_dim", "video_dim"):
                setattr(info, key, int(raw))
            elif key == "src_vocab":
                info.src_vocab = Vocabulary(raw.split())
            elif key == "tgt_vocab":
                info.tgt_vocab = Vocabulary(raw.split())
        return info


@dataclass
class Batch:
    text_ids: np.ndarray | None = None      # (b, L)
    lengths: np.ndarray | None = None
    speech: np.ndarray | None = None
    video: np.ndarray | None = None
    labels: np.ndarray | None = None
    targets: np.ndarray | None = None       # (b, T), EOS-terminated, PAD-filled
    topics: np.ndarray | None = None


def encode_samples(samples: list[RawSample], cfg: ExperimentConfig,
                   info: DataInfo) -> list[dict]:
    encoded = []
    for s in samples:
        row: dict = {"topic": s.topic}
        if "text" in cfg.modalities:
            if s.text_tokens is None:
                raise ValueError("sample is missing the text modality")
            row["text"] = info.src_vocab.encode(s.text_tokens)
        if "speech" in cfg.modalities:
            row["speech"] = s.speech
        if "video" in cfg.modalities:
            row["video"] = s.video
        if cfg.task == "classification":
            row["label"] = s.label
        else:
            row["target"] = info.tgt_vocab.encode(s.target_tokens) + [EOS]
        encoded.append(row)
    return encoded


def make_batch(rows: list[dict], cfg: ExperimentConfig) -> Batch:
    b = Batch(topics=np.array([r["topic"] for r in rows]))
    if "text" in cfg.modalities:
        lengths = np.array([len(r["text"]) for r in rows])
        L = int(lengths.max())
        ids = np.full((len(rows), L), PAD, dtype=np.int64)
        for i, r in enumerate(rows):
            ids[i, :len(r["text"])] = r["text"]
        b.text_ids, b.lengths = ids, lengths
    if "speech" in cfg.modalities:
        b.speech = np.stack([r["speech"] for r in rows])
    if "video" in cfg.modalities:
        b.video = np.stack([r["video"] for r in rows])
    if cfg.task == "classification":
        b.labels = np.array([r["label"] for r in rows])
    else:
        T = max(len(r["target"]) for r in rows)
        tgt = np.full((len(rows), T), PAD, dtype=np.int64)
        for i, r in enumerate(rows):
            tgt[i, :len(r["target"])] = r["target"]
        b.targets = tgt
    return b


class FusionModel(layers.Module):
    """Encoders -> fusion -> task head, assembled from one config."""

    def __init__(self, cfg: ExperimentConfig, info: DataInfo,
                 rng: np.random.Generator):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.info = info
        dims: dict[str, int] = {}
        if "video" in cfg.modalities:
            self.video_enc = self.add_child(
                "video_enc", VectorEncoder(info.video_dim, cfg.video_latent, rng))
            dims["video"] = cfg.video_latent
        if "speech" in cfg.modalities:
            self.speech_enc = self.add_child(
                "speech_enc", VectorEncoder(info.speech_dim, cfg.speech_latent, rng))
            dims["speech"] = cfg.speech_latent
        if "text" in cfg.modalities:
            self.text_enc = self.add_child(
                "text_enc", TextEncoder(len(info.src_vocab), cfg.text_embed,
                                        cfg.text_hidden, rng))
            dims["text"] = cfg.text_hidden
        self.latent_dims = dims

        if cfg.fusion == "concat":
            self.d_fuse = sum(dims.values())
            self.fusion = None
        elif cfg.fusion == "auto":
            self.d_fuse = cfg.d_fuse
            ordered = [dims[m] for m in ("video", "speech", "text") if m in dims]
            self.fusion = self.add_child(
                "fusion", AutoFusionNet(ordered, cfg.d_fuse, rng))
        else:
            self.d_fuse = cfg.d_fuse
            self.fusion = self.add_child(
                "fusion", GanFusionStack(dims, cfg.d_fuse, cfg.d_noise,
                                         cfg.disc_hidden, cfg.noise_sigma, rng))

        if cfg.task == "classification":
            self.head = self.add_child(
                "head", ClassifierHead(self.d_fuse, cfg.head_hidden,
                                       info.n_classes, rng))
        else:
            self.decoder = self.add_child(
                "decoder", AttentiveDecoder(
                    len(info.tgt_vocab), cfg.dec_embed, cfg.dec_hidden,
                    cfg.text_hidden, self.d_fuse, rng,
                    condition_every_step=cfg.condition_every_step))

    # -- forward pieces ------------------------------------------------------
    def encode(self, batch: Batch) -> LatentBundle:
        latents: dict[str, Tensor] = {}
        states = mask = None
        if "video" in self.latent_dims:
            latents["video"] = self.video_enc(batch.video)
        if "speech" in self.latent_dims:
            latents["speech"] = self.speech_enc(batch.speech)
        if "text" in self.latent_dims:
            z, states, mask = self.text_enc(batch.text_ids, batch.lengths)
            latents["text"] = z
        return LatentBundle(latents=latents, text_states=states, text_mask=mask)

    def fuse(self, bundle: LatentBundle,
             noise_rng: np.random.Generator | None) -> FusionOutput:
        if self.cfg.fusion == "concat":
            ordered = [bundle.latents[m] for m in ("video", "speech", "text")
                       if m in bundle.latents]
            z = ad.concat(ordered, axis=1) if len(ordered) > 1 else ordered[0]
            return FusionOutput(z_fuse=z, j_fusion=Tensor(0.0))
        if self.cfg.fusion == "auto":
            ordered = [bundle.latents[m] for m in ("video", "speech", "text")
                       if m in bundle.latents]
            return self.fusion(ordered)
        return self.fusion.fuse(bundle, noise_rng,
                                saturating=self.cfg.saturating_gan)

    def task_loss(self, fused: FusionOutput, bundle: LatentBundle, batch: Batch,
                  drop_rng: np.random.Generator | None) -> Tensor:
        z = fused.z_fuse
        if self.cfg.dropout_p > 0.0 and drop_rng is not None:
            z = dropout(z, self.cfg.dropout_p, self.training, drop_rng)
        if self.cfg.task == "classification":
            logits = self.head(z)
            return self.head.loss(logits, batch.labels,
                                  kind=self.cfg.classification_loss)
        return self.decoder.teacher_forced_loss(
            z, bundle.text_states, bundle.text_mask, batch.targets)

    def predict(self, batch: Batch) -> list:
        """Deterministic inference: GAN noise off, eval mode."""
        bundle = self.encode(batch)
        fused = self.fuse(bundle, None)
        if self.cfg.task == "classification":
            return list(self.head(fused.z_fuse).data.argmax(axis=1))
        return self.decoder.decode_greedy(
            fused.z_fuse, bundle.text_states, bundle.text_mask,
            self.cfg.max_decode_len)

    def non_discriminator_parameters(self) -> dict[str, Tensor]:
        if self.cfg.fusion != "gan":
            return self.parameters()
        disc = {"fusion." + n for n in self.fusion.discriminator_parameters()}
        return {n: t for n, t in self.parameters().items() if n not in disc}

    def discriminator_parameters(self) -> dict[str, Tensor]:
        if self.cfg.fusion != "gan":
            return {}
        return {"fusion." + n: t
                for n, t in self.fusion.discriminator_parameters().items()}


@dataclass
class RunRecord:
    """Append-only log of one training run."""

    rows: list[tuple[int, str, str, float]] = field(default_factory=list)
    steps: list[tuple[int, float, float, float]] = field(default_factory=list)
    disc_accuracy: list[float] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def log(self, epoch: int, split: str, metric: str, value: float) -> None:
        if self.rows and epoch < self.rows[-1][0]:
            raise ValueError("epoch numbering must be monotone")
        self.rows.append((epoch, split, metric, float(value)))

    def log_step(self, step: int, j_fusion: float, j_task: float,
                 j_total: float) -> None:
        self.steps.append((step, j_fusion, j_task, j_total))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,split,metric,value\n")
            for epoch, split, metric, value in self.rows:
                fh.write(f"{epoch},{split},{metric},{value!r}\n")

    def write_summary(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite."""


def _check_finite(name: str, value: float) -> None:
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss term {name}: {value}")


def _task_metric(cfg: ExperimentConfig, metrics: dict[str, float]) -> float:
    return metrics["accuracy"] if cfg.task == "classification" else metrics["bleu4"]


def train(cfg: ExperimentConfig) -> tuple[ckpt_io.Checkpoint, RunRecord]:
    cfg.validate()
    train_raw = read_dataset(cfg.train_path)
    val_raw = read_dataset(cfg.val_path)
    info = DataInfo.from_samples(train_raw, cfg.task)

    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    init_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    noise_rng = np.random.default_rng(seeds[2])
    dropout_rng = np.random.default_rng(seeds[3])

    model = FusionModel(cfg, info, init_rng)
    if "speech" in cfg.modalities:
        model.speech_enc.fit_normalization(
            np.stack([s.speech for s in train_raw]))
    if "video" in cfg.modalities:
        model.video_enc.fit_normalization(
            np.stack([s.video for s in train_raw]))

    rows = encode_samples(train_raw, cfg, info)
    opt = AdamState(lr=cfg.lr)
    disc_opt = AdamState(lr=cfg.effective_disc_lr)
    main_params = model.non_discriminator_parameters()
    disc_params = model.discriminator_parameters()

    record = RunRecord()
    best_metric = -np.inf
    best_tensors: dict[str, np.ndarray] = {}
    best_epoch = -1
    stale = 0
    step = 0

    for epoch in range(cfg.epochs):
        model.train()
        order = shuffle_rng.permutation(len(rows))
        epoch_fusion, epoch_task, epoch_total = [], [], []
        for start in range(0, len(rows), cfg.batch_size):
            batch = make_batch([rows[i] for i in order[start:start + cfg.batch_size]],
                               cfg)
            bundle = model.encode(batch)

            if cfg.fusion == "gan":
                forwards = model.fusion.gan_forwards(bundle, noise_rng)
                model.zero_grads()
                d_loss = None
                for fwd in forwards:
                    term = model.fusion.modules[fwd.name].discriminator_loss(
                        fwd.z_tr, fwd.z_g)
                    d_loss = term if d_loss is None else d_loss + term
                _check_finite("discriminator", d_loss.item())
                d_loss.backward()
                adam_step(disc_params, disc_opt)
                model.zero_grads()
                record.disc_accuracy.append(float(np.mean(
                    [model.fusion.modules[f.name].discriminator_accuracy(
                        f.z_tr, f.z_g) for f in forwards])))
                fused = model.fusion.compose(forwards,
                                             saturating=cfg.saturating_gan)
            else:
                model.zero_grads()
                fused = model.fuse(bundle, noise_rng)

            j_task = model.task_loss(fused, bundle, batch, dropout_rng)
            j_total = Tensor(cfg.lambda1) * fused.j_fusion \
                + Tensor(cfg.lambda2) * j_task
            _check_finite("j_fusion", fused.j_fusion.item())
            _check_finite("j_task", j_task.item())
            j_total.backward()
            adam_step(main_params, opt)
            record.log_step(step, fused.j_fusion.item(), j_task.item(),
                            j_total.item())
            epoch_fusion.append(fused.j_fusion.item())
            epoch_task.append(j_task.item())
            epoch_total.append(j_total.item())
            step += 1

        record.log(epoch, "train", "j_fusion", float(np.mean(epoch_fusion)))
        record.log(epoch, "train", "j_task", float(np.mean(epoch_task)))
        record.log(epoch, "train", "j_total", float(np.mean(epoch_total)))

        val_metrics = evaluate_model(model, info, val_raw, word_drop_p=0.0,
                                     drop_seed=0)
        for name, value in sorted(val_metrics.items()):
            record.log(epoch, "val", name, value)

        metric = _task_metric(cfg, val_metrics)
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_tensors = {n: t.data.copy() for n, t in model.parameters().items()}
            best_tensors.update({n: b.copy() for n, b in model.buffers().items()})
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    for name, t in model.parameters().items():
        t.data[...] = best_tensors[name]
    for name in model.buffers():
        model.set_buffer(name, best_tensors[name])

    record.summary = {"best_epoch": best_epoch, "best_val_metric": best_metric,
                      "epochs_run": epoch + 1}

    ckpt = ckpt_io.Checkpoint(
        tensors=dict(sorted(best_tensors.items())),
        optimizer=_optimizer_entries(opt, disc_opt),
        rng={"shuffle": ckpt_io.generator_state_to_array(shuffle_rng),
             "noise": ckpt_io.generator_state_to_array(noise_rng),
             "dropout": ckpt_io.generator_state_to_array(dropout_rng)},
        config_text=config_to_text(cfg) + "[data]\n" + info.to_text(),
    )
    return ckpt, record


def _optimizer_entries(opt: AdamState, disc_opt: AdamState) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for prefix, state in (("adam", opt), ("adam_disc", disc_opt)):
        out[f"{prefix}.step"] = np.array(float(state.step_count))
        out[f"{prefix}.hyper"] = np.array([state.lr, state.beta1, state.beta2,
                                           state.eps])
        for name, m in state.m.items():
            out[f"{prefix}.m.{name}"] = m
        for name, v in state.v.items():
            out[f"{prefix}.v.{name}"] = v
    return out


def model_from_checkpoint(ckpt: ckpt_io.Checkpoint) -> tuple[FusionModel, ExperimentConfig, DataInfo]:
    cfg_text, _, data_text = ckpt.config_text.partition("[data]")
    cfg = parse_config_text(cfg_text)
    info = DataInfo.from_text(data_text)
    model = FusionModel(cfg, info, np.random.default_rng(0))
    expected = set(model.parameters()) | set(model.buffers())
    got = set(ckpt.tensors)
    if expected != got:
        missing = sorted(expected - got)[:3]
        extra = sorted(got - expected)[:3]
        raise ckpt_io.CheckpointError(
            f"tensor names do not match the model: missing {missing}, extra {extra}")
    for name, t in model.parameters().items():
        if t.data.shape != ckpt.tensors[name].shape:
            raise ckpt_io.CheckpointError(f"shape mismatch for {name}")
        t.data[...] = ckpt.tensors[name]
    for name in model.buffers():
        model.set_buffer(name, ckpt.tensors[name])
    model.eval()
    return model, cfg, info


def evaluate_model(model: FusionModel, info: DataInfo, samples: list[RawSample],
                   word_drop_p: float = 0.0, drop_seed: int = 0,
                   eval_batch: int = 64) -> dict[str, float]:
    """Metric map for one dataset; GAN noise is off at evaluation."""
    cfg = model.cfg
    was_training = model.training
    model.eval()
    rows = encode_samples(samples, cfg, info)
    if word_drop_p > 0.0 and "text" in cfg.modalities:
        drop_rng = np.random.default_rng([cfg.seed, 7, drop_seed])
        for r in rows:
            r["text"] = apply_word_drop(r["text"], word_drop_p, drop_rng)

    preds: list = []
    text_zg: list[np.ndarray] = []
    for start in range(0, len(rows), eval_batch):
        batch = make_batch(rows[start:start + eval_batch], cfg)
        preds.extend(model.predict(batch))
        if cfg.fusion == "gan" and "text" in cfg.modalities:
            bundle = model.encode(batch)
            fwd = model.fusion.modules["text"].gan_forward(bundle, None)
            text_zg.append(fwd.z_g.data)

    metrics: dict[str, float] = {}
    if cfg.task == "classification":
        labels = [r["label"] for r in rows]
        p, r, f1, acc = classification_report(preds, labels, info.n_classes)
        metrics.update(precision=p, recall=r, f1=f1, accuracy=acc)
    else:
        refs = [r["target"][:-1] for r in rows]  # strip terminal EOS
        report = corpus_bleu(preds, refs)
        metrics.update(bleu1=report.bleu1, bleu2=report.bleu2,
                       bleu3=report.bleu3, bleu4=report.bleu4,
                       brevity_penalty=report.brevity_penalty)
    if text_zg:
        topics = np.array([r["topic"] for r in rows])
        metrics["silhouette"] = silhouette(np.vstack(text_zg), topics)
    if was_training:
        model.train()
    return metrics


def evaluate_checkpoint(path, dataset_path, word_drop_p: float = 0.0,
                        drop_seed: int = 0) -> dict[str, float]:
    model, cfg, info = model_from_checkpoint(ckpt_io.load_checkpoint(path))
    samples = read_dataset(dataset_path)
    _validate_dataset_kind(cfg, samples)
    return evaluate_model(model, info, samples, word_drop_p=word_drop_p,
                          drop_seed=drop_seed)


def _validate_dataset_kind(cfg: ExperimentConfig, samples: list[RawSample]) -> None:
    if cfg.task == "classification" and any(s.label is None for s in samples):
        raise ConfigError("classification checkpoint given a translation dataset")
    if cfg.task == "translation" and any(s.target_tokens is None for s in samples):
        raise ConfigError("translation checkpoint given a classification dataset")


def ablate(model: FusionModel, info: DataInfo, samples: list[RawSample],
           p_grid: list[float] | None = None) -> list[tuple[float, float, float, float, float]]:
    """Word-drop sweep; returns rows of (p, bleu1, bleu2, bleu3, bleu4)."""
    if model.cfg.task != "translation":
        raise ConfigError("ablation sweep requires a translation model")
    if p_grid is None:
        p_grid = [round(0.1 * i, 1) for i in range(10)]
    rows = []
    for k, p in enumerate(p_grid):
        m = evaluate_model(model, info, samples, word_drop_p=p, drop_seed=1000 + k)
        rows.append((p, m["bleu1"], m["bleu2"], m["bleu3"], m["bleu4"]))
    return rows


def write_ablation_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p,bleu1,bleu2,bleu3,bleu4\n")
        for p, b1, b2, b3, b4 in rows:
            fh.write(f"{p!r},{b1!r},{b2!r},{b3!r},{b4!r}\n")
