"""Trainable layers and the Adam optimizer built on the autodiff tensors."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor


class Module:
    """Minimal container: named parameters, named buffers, train/eval mode."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}
        self.training = True

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        self._buffers[name] = np.asarray(data, dtype=np.float64)
        return self._buffers[name]

    def add_child(self, name: str, child: "Module") -> "Module":
        self._children[name] = child
        return child

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        """Dotted-path name -> tensor, over this module and all children."""
        out = {prefix + n: t for n, t in self._params.items()}
        for cname, child in self._children.items():
            out.update(child.parameters(prefix + cname + "."))
        return out

    def buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + n: b for n, b in self._buffers.items()}
        for cname, child in self._children.items():
            out.update(child.buffers(prefix + cname + "."))
        return out

    def set_buffer(self, path: str, data: np.ndarray) -> None:
        mod = self
        parts = path.split(".")
        for p in parts[:-1]:
            mod = mod._children[p]
        mod._buffers[parts[-1]][...] = data

    def zero_grads(self) -> None:
        for t in self.parameters().values():
            t.zero_grad()

    def train(self) -> None:
        self.training = True
        for c in self._children.values():
            c.train()

    def eval(self) -> None:
        self.training = False
        for c in self._children.values():
            c.eval()


def count_parameters(module: Module) -> int:
    return int(np.sum([t.size for t in module.parameters().values()], dtype=np.int64)) \
        if module.parameters() else 0


class Affine(Module):
    """x @ W + b with W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(d_in)
        self.W = self.add_param("W", rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.b = self.add_param("b", np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.matmul(x, self.W) + self.b


class Embedding(Module):
    """Token-id lookup table; backward scatter-adds into the table."""

    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.vocab_size = vocab_size
        self.table = self.add_param("table", rng.normal(0.0, 0.1, size=(vocab_size, dim)))

    def __call__(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.min(initial=0) < 0 or ids.max(initial=0) >= self.vocab_size:
            raise IndexError(f"token id out of vocabulary (size {self.vocab_size})")
        table = self.table
        out_data = table.data[ids]

        def bw(g):
            full = np.zeros_like(table.data)
            np.add.at(full, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
            table._accumulate(full)

        return ad._make(out_data, (table,), bw)


class LSTMCell(Module):
    """Single LSTM step. Gate order i, f, o, g; forget-gate bias starts at 1."""

    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator):
        super().__init__()
        self.d_in, self.d_hidden = d_in, d_hidden
        bound = 1.0 / np.sqrt(d_in + d_hidden)
        self.W = self.add_param("W", rng.uniform(-bound, bound, size=(d_in, 4 * d_hidden)))
        self.U = self.add_param("U", rng.uniform(-bound, bound, size=(d_hidden, 4 * d_hidden)))
        b = np.zeros(4 * d_hidden)
        b[d_hidden:2 * d_hidden] = 1.0
        self.b = self.add_param("b", b)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[1] != self.d_in or h.shape[1] != self.d_hidden:
            raise DimensionError(
                f"lstm_step got x{x.shape}, h{h.shape}; expected widths "
                f"({self.d_in}, {self.d_hidden})")
        hd = self.d_hidden
        gates = ad.matmul(x, self.W) + ad.matmul(h, self.U) + self.b
        i = ad.sigmoid(ad.narrow(gates, 1, 0, hd))
        f = ad.sigmoid(ad.narrow(gates, 1, hd, hd))
        o = ad.sigmoid(ad.narrow(gates, 1, 2 * hd, hd))
        g = ad.tanh(ad.narrow(gates, 1, 3 * hd, hd))
        c_next = f * c + i * g
        h_next = o * ad.tanh(c_next)
        return h_next, c_next

    def zero_state(self, batch: int) -> tuple[Tensor, Tensor]:
        z = np.zeros((batch, self.d_hidden))
        return Tensor(z.copy()), Tensor(z.copy())


class BatchNorm(Module):
    """Batch normalization over the batch axis of a (b, d) tensor."""

    EPS = 1e-5
    MOMENTUM = 0.9

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.gamma = self.add_param("gamma", np.ones(dim))
        self.beta = self.add_param("beta", np.zeros(dim))
        self.running_mean = self.add_buffer("running_mean", np.zeros(dim))
        self.running_var = self.add_buffer("running_var", np.ones(dim))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.dim:
            raise DimensionError(f"batch_norm width {x.shape[1]} != {self.dim}")
        if self.training:
            if x.shape[0] < 2:
                raise ValueError("batch_norm in train mode needs batch size >= 2")
            mu = x.data.mean(axis=0)
            var = x.data.var(axis=0)
            self.running_mean *= self.MOMENTUM
            self.running_mean += (1 - self.MOMENTUM) * mu
            self.running_var *= self.MOMENTUM
            self.running_var += (1 - self.MOMENTUM) * var
            std = np.sqrt(var + self.EPS)
            xhat = (x.data - mu) / std
            gamma, beta = self.gamma, self.beta
            out_data = gamma.data * xhat + beta.data
            n = x.shape[0]

            def bw(g):
                beta._accumulate(g.sum(axis=0))
                gamma._accumulate((g * xhat).sum(axis=0))
                gx = g * gamma.data
                x._accumulate((gx - gx.mean(axis=0)
                               - xhat * (gx * xhat).mean(axis=0)) / std)

            return ad._make(out_data, (x, gamma, beta), bw)
        scale = Tensor(1.0 / np.sqrt(self.running_var + self.EPS))
        return self.gamma * ((x - Tensor(self.running_mean)) * scale) + self.beta


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0 or in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability {p} out of [0, 1)")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * Tensor(mask)


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray,
                          ignore_index: int | None = None) -> Tensor:
    """Mean NLL over non-ignored targets, with max-subtraction stabilization."""
    targets = np.asarray(targets, dtype=np.int64)
    b, v = logits.shape
    if targets.shape != (b,):
        raise DimensionError(f"targets shape {targets.shape} != ({b},)")
    valid = np.ones(b, dtype=bool) if ignore_index is None else targets != ignore_index
    if valid.any() and (targets[valid].min() < 0 or targets[valid].max() >= v):
        raise IndexError(f"target class out of range [0, {v})")
    n_valid = int(valid.sum())
    if n_valid == 0:
        return Tensor(0.0)

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    safe_t = np.where(valid, targets, 0)
    nll = logsumexp - shifted[np.arange(b), safe_t]
    loss_data = np.array((nll * valid).sum() / n_valid)
    probs = np.exp(shifted - logsumexp[:, None])

    def bw(g):
        grad = probs.copy()
        grad[np.arange(b), safe_t] -= 1.0
        grad *= (valid / n_valid)[:, None]
        logits._accumulate(g * grad)

    return ad._make(loss_data, (logits,), bw)


def multiclass_hinge(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over batch of sum_j!=y max(0, 1 + s_j - s_y)."""
    targets = np.asarray(targets, dtype=np.int64)
    b, v = logits.shape
    correct = ad.reshape(_gather(logits, targets), (b, 1))
    margins = ad.leaky_relu(logits - correct + 1.0, alpha=0.0)
    # the j == y term contributes a constant 1 per row; subtract it
    return (ad.sum(margins) - Tensor(float(b))) * Tensor(1.0 / b)


def _gather(logits: Tensor, targets: np.ndarray) -> Tensor:
    b = logits.shape[0]
    idx = (np.arange(b), targets)
    out_data = logits.data[idx]

    def bw(g):
        full = np.zeros_like(logits.data)
        np.add.at(full, idx, g)
        logits._accumulate(full)

    return ad._make(out_data, (logits,), bw)


class AdamState:
    """Per-parameter Adam moments keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; leaves grads untouched."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {name!r} has no gradient")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in sorted(params.items()):
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1 - state.beta1) * p.grad
        v *= state.beta2
        v += (1 - state.beta2) * p.grad * p.grad
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
