"""GAN-Fusion: one adversarial module per target modality.

Each module pushes its generator output z_g (target latent + noise) toward
z_tr, the autofused complement of the remaining modalities; a per-module
discriminator tells the two apart. Generator outputs are concatenated and
projected to the fused representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .autofusion import AutoFusionNet, FusionOutput
from .encoders import MODALITIES, LatentBundle
from .layers import Affine, Module

LOG_CLAMP = 1e-12


class FusionUnavailableError(Exception):
    """GAN-Fusion needs a complementary modality; caller should fall back."""


def clamped_log(x: Tensor, floor: float = LOG_CLAMP) -> Tensor:
    """log(max(x, floor)); gradient flows only through unclamped entries."""
    clipped = np.maximum(x.data, floor)
    out_data = np.log(clipped)
    live = (x.data >= floor).astype(np.float64)

    def bw(g):
        x._accumulate(g * live / clipped)

    return ad._make(out_data, (x,), bw)


class Generator(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = self.add_child("fc1", Affine(d_in, d_out, rng))
        self.fc2 = self.add_child("fc2", Affine(d_out, d_out, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ad.leaky_relu(self.fc1(x), alpha=0.2))


class Discriminator(Module):
    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = self.add_child("fc1", Affine(d_in, hidden, rng))
        self.fc2 = self.add_child("fc2", Affine(hidden, 1, rng))

    def __call__(self, x: Tensor, frozen: bool = False) -> Tensor:
        """Probability the input came from the autofused complement.

        With frozen=True the parameters are detached, so backward reaches the
        input (and the generator behind it) but never the discriminator.
        """
        if frozen:
            w1, b1 = self.fc1.W.detach(), self.fc1.b.detach()
            w2, b2 = self.fc2.W.detach(), self.fc2.b.detach()
        else:
            w1, b1, w2, b2 = self.fc1.W, self.fc1.b, self.fc2.W, self.fc2.b
        h = ad.leaky_relu(ad.matmul(x, w1) + b1, alpha=0.2)
        return ad.sigmoid(ad.matmul(h, w2) + b2)


@dataclass
class ModuleForward:
    """One gan_forward result, kept around for the discriminator step."""

    name: str
    z_g: Tensor
    z_tr: Tensor
    inner_loss: Tensor


class GanFusionModule(Module):
    """Adversarial alignment of one target modality against its complement."""

    def __init__(self, target: str, d_target: int, complements: list[tuple[str, int]],
                 d_noise: int, d_r: int, d_disc_hidden: int, noise_sigma: float,
                 rng: np.random.Generator):
        super().__init__()
        if not complements:
            raise FusionUnavailableError(
                f"target {target!r} has no complementary modality")
        self.target = target
        self.d_noise = d_noise
        self.d_r = d_r
        self.noise_sigma = noise_sigma
        self.complement_names = [n for n, _ in complements]
        self.generator = self.add_child(
            "generator", Generator(d_target + d_noise, d_r, rng))
        self.discriminator = self.add_child(
            "discriminator", Discriminator(d_r, d_disc_hidden, rng))
        comp_dims = [d for _, d in complements]
        self.inner: AutoFusionNet | None = None
        self.proj: Affine | None = None
        if len(complements) >= 2:
            self.inner = self.add_child("inner", AutoFusionNet(comp_dims, d_r, rng))
        elif comp_dims[0] != d_r:
            self.proj = self.add_child("proj", Affine(comp_dims[0], d_r, rng))

    def gan_forward(self, bundle: LatentBundle,
                    rng: np.random.Generator | None) -> ModuleForward:
        z_m = bundle.latents[self.target]
        b = z_m.shape[0]
        if self.noise_sigma > 0.0 and rng is not None:
            eps = rng.normal(0.0, self.noise_sigma, size=(b, self.d_noise))
        else:
            eps = np.zeros((b, self.d_noise))
        z_g = self.generator(ad.concat([z_m, Tensor(eps)], axis=1))

        comp = [bundle.latents[n] for n in self.complement_names]
        if self.inner is not None:
            inner_out = self.inner(comp)
            z_tr, inner_loss = inner_out.z_fuse, inner_out.j_fusion
        else:
            z_tr = comp[0] if self.proj is None else self.proj(comp[0])
            inner_loss = Tensor(0.0)
        return ModuleForward(self.target, z_g, z_tr, inner_loss)

    def discriminator_loss(self, z_tr: Tensor, z_g: Tensor) -> Tensor:
        """-[mean log D(z_tr) + mean log(1 - D(z_g))]; inputs are detached."""
        d_real = self.discriminator(z_tr.detach())
        d_fake = self.discriminator(z_g.detach())
        return -(ad.mean(clamped_log(d_real)) + ad.mean(clamped_log(Tensor(1.0) - d_fake)))

    def generator_loss(self, z_g: Tensor, saturating: bool = False) -> Tensor:
        """Non-saturating -mean log D(z_g) by default; literal minimax by flag."""
        d_fake = self.discriminator(z_g, frozen=True)
        if saturating:
            return ad.mean(clamped_log(Tensor(1.0) - d_fake))
        return -ad.mean(clamped_log(d_fake))

    def discriminator_accuracy(self, z_tr: Tensor, z_g: Tensor) -> float:
        d_real = self.discriminator(z_tr.detach()).data
        d_fake = self.discriminator(z_g.detach()).data
        return float(((d_real > 0.5).sum() + (d_fake <= 0.5).sum())
                     / (d_real.size + d_fake.size))


class GanFusionStack(Module):
    """One GanFusionModule per present modality plus the final fusion layer."""

    def __init__(self, dims: dict[str, int], d_fuse: int, d_noise: int,
                 d_disc_hidden: int, noise_sigma: float, rng: np.random.Generator,
                 d_r: int | None = None):
        super().__init__()
        present = [m for m in MODALITIES if m in dims]
        if len(present) < 2:
            raise FusionUnavailableError(
                f"gan fusion needs >= 2 modalities, got {present}")
        self.order = present
        self.d_r = d_fuse if d_r is None else d_r
        self.modules: dict[str, GanFusionModule] = {}
        for m in present:
            comp = [(n, dims[n]) for n in present if n != m]
            self.modules[m] = self.add_child(
                m, GanFusionModule(m, dims[m], comp, d_noise, self.d_r,
                                   d_disc_hidden, noise_sigma, rng))
        self.fc = self.add_child(
            "fc", Affine(self.d_r * len(present), d_fuse, rng))

    def discriminator_parameters(self) -> dict[str, Tensor]:
        out = {}
        for m, mod in self.modules.items():
            out.update(mod.discriminator.parameters(f"{m}.discriminator."))
        return out

    def generator_side_parameters(self) -> dict[str, Tensor]:
        disc = set(self.discriminator_parameters())
        return {n: t for n, t in self.parameters().items() if n not in disc}

    def gan_forwards(self, bundle: LatentBundle,
                     rng: np.random.Generator | None) -> list[ModuleForward]:
        missing = [m for m in self.order if m not in bundle.latents]
        if missing:
            raise FusionUnavailableError(f"bundle missing modalities {missing}")
        return [self.modules[m].gan_forward(bundle, rng) for m in self.order]

    def compose(self, forwards: list[ModuleForward],
                saturating: bool = False) -> FusionOutput:
        z_fuse = self.fc(ad.concat([f.z_g for f in forwards], axis=1))
        j = None
        for f in forwards:
            term = self.modules[f.name].generator_loss(f.z_g, saturating=saturating) \
                + f.inner_loss
            j = term if j is None else j + term
        return FusionOutput(z_fuse=z_fuse, j_fusion=j)

    def fuse(self, bundle: LatentBundle, rng: np.random.Generator | None,
             saturating: bool = False) -> FusionOutput:
        return self.compose(self.gan_forwards(bundle, rng), saturating=saturating)
