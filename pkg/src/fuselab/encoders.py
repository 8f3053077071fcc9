"""Per-modality learners mapping raw inputs to unimodal latent vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .layers import Affine, Embedding, LSTMCell, Module

MODALITIES = ("video", "speech", "text")


@dataclass
class LatentBundle:
    """Unimodal latents per present modality, plus the text state sequence."""

    latents: dict[str, Tensor] = field(default_factory=dict)
    text_states: Tensor | None = None       # (b, L, h), padding rows zeroed
    text_mask: np.ndarray | None = None     # (b, L) float {0,1}

    def __post_init__(self):
        if not self.latents:
            raise ValueError("LatentBundle needs at least one modality")
        if "text" in self.latents and self.text_states is None:
            raise ValueError("text latent requires the encoder state sequence")

    @property
    def modalities(self) -> list[str]:
        return [m for m in MODALITIES if m in self.latents]


class TextEncoder(Module):
    """Embedding lookup + unrolled LSTM; summary latent taken at true lengths."""

    def __init__(self, vocab_size: int, embed_dim: int, hidden: int,
                 rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.embed = self.add_child("embed", Embedding(vocab_size, embed_dim, rng))
        self.cell = self.add_child("lstm", LSTMCell(embed_dim, hidden, rng))

    def __call__(self, token_ids: np.ndarray, lengths: np.ndarray) -> tuple[Tensor, Tensor, np.ndarray]:
        """Returns (z_t (b,h), states (b,L,h), mask (b,L))."""
        token_ids = np.asarray(token_ids, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        b, L = token_ids.shape
        if np.any(lengths < 1) or np.any(lengths > L):
            raise ValueError("sequence lengths must lie in [1, L]")
        mask = (np.arange(L)[None, :] < lengths[:, None]).astype(np.float64)

        h, c = self.cell.zero_state(b)
        per_step: list[Tensor] = []
        final_h: Tensor | None = None
        for step in range(L):
            x_t = self.embed(token_ids[:, step])
            h_new, c_new = self.cell(x_t, h, c)
            # freeze state on finished sequences so padding never leaks in
            keep = Tensor(mask[:, step:step + 1])
            inv = Tensor(1.0 - mask[:, step:step + 1])
            h = h_new * keep + h * inv
            c = c_new * keep + c * inv
            per_step.append(h_new * keep)
        z_t = h
        states = ad.concat([ad.reshape(s, (b, 1, self.hidden)) for s in per_step], axis=1)
        return z_t, states, mask


class Standardizer:
    """Per-feature mean/std frozen from the training split."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        features = np.asarray(features, dtype=np.float64)
        std = features.std(axis=0)
        return cls(features.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def __call__(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


class VectorEncoder(Module):
    """Standardize -> affine -> tanh learner for speech/video feature vectors."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.proj = self.add_child("proj", Affine(d_in, d_out, rng))
        self.norm_mean = self.add_buffer("norm_mean", np.zeros(d_in))
        self.norm_std = self.add_buffer("norm_std", np.ones(d_in))

    def fit_normalization(self, features: np.ndarray) -> None:
        s = Standardizer.fit(features)
        self.norm_mean[...] = s.mean
        self.norm_std[...] = s.std

    def __call__(self, features: np.ndarray) -> Tensor:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.d_in:
            raise DimensionError(
                f"expected (b, {self.d_in}) features, got {features.shape}")
        x = Tensor((features - self.norm_mean) / self.norm_std)
        return ad.tanh(self.proj(x))
