"""Multilayer perceptron surrogate with Swish activations.

The network is C-infinity, so value, Jacobian, and Hessian queries are all
exact: first and second derivatives are propagated analytically layer by
layer (forward-mode chain rule), with the input/output scaler factors folded
into the chain.

Targets spanning several orders of magnitude near their minimum (deep, flat
valleys) can optionally be fit in log space: training regresses
``log(y - min(y) + delta)`` and prediction applies ``exp`` plus the stored
offset, so callers always see natural units and derivative queries chain
through the exponential exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "MlpSurrogate",
    "TrainConfig",
    "deserialize",
    "mlp_forward",
    "mlp_hessian",
    "mlp_jacobian",
    "serialize",
    "swish",
    "swish_d1",
    "swish_d2",
    "train_mlp",
]


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def swish(z):
    """z * sigmoid(z)."""
    z = np.asarray(z, dtype=float)
    return z * _sigmoid(z)


def swish_d1(z):
    z = np.asarray(z, dtype=float)
    s = _sigmoid(z)
    return s + z * s * (1.0 - s)


def swish_d2(z):
    z = np.asarray(z, dtype=float)
    s = _sigmoid(z)
    sp = s * (1.0 - s)
    return sp * (2.0 + z * (1.0 - 2.0 * s))


@dataclass
class MlpSurrogate:
    """Feed-forward net: Swish on hidden layers, identity on the output.

    When ``y_transform`` is ``"log"`` the scaled network output is the log of
    the shifted target, and natural-unit values are recovered as
    ``exp(t) + y_offset``; derivatives chain through the exponential.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]  # weights[l] has shape (layer_dims[l+1], layer_dims[l])
    biases: list[np.ndarray]
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: np.ndarray
    y_scale: np.ndarray
    y_transform: str = "none"
    y_offset: Optional[np.ndarray] = None
    training_meta: dict = field(default_factory=dict)

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return mlp_forward(self, x)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        A = (X - self.x_shift) / self.x_scale
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            A = swish(A @ W.T + b)
        A = A @ self.weights[-1].T + self.biases[-1]
        T = A * self.y_scale + self.y_shift
        if self.y_transform == "log":
            return np.exp(T) + self.y_offset
        return T

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return mlp_jacobian(self, x)

    def hessian(self, x: np.ndarray, output_index: int) -> np.ndarray:
        return mlp_hessian(self, x, output_index)


def _check_dim(m: MlpSurrogate, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n_inputs,):
        raise ValueError(f"expected input of shape ({m.n_inputs},), got {x.shape}")
    return x


def mlp_forward(m: MlpSurrogate, x: np.ndarray) -> np.ndarray:
    x = _check_dim(m, x)
    a = (x - m.x_shift) / m.x_scale
    for W, b in zip(m.weights[:-1], m.biases[:-1]):
        a = swish(W @ a + b)
    out = m.weights[-1] @ a + m.biases[-1]
    t = out * m.y_scale + m.y_shift
    if m.y_transform == "log":
        return np.exp(t) + m.y_offset
    return t


def mlp_jacobian(m: MlpSurrogate, x: np.ndarray) -> np.ndarray:
    """d y / d x, shape (n_outputs, n_inputs), in problem units."""
    x = _check_dim(m, x)
    a = (x - m.x_shift) / m.x_scale
    J = np.diag(1.0 / m.x_scale)
    for W, b in zip(m.weights[:-1], m.biases[:-1]):
        z = W @ a + b
        J = swish_d1(z)[:, None] * (W @ J)
        a = swish(z)
    out = m.weights[-1] @ a + m.biases[-1]
    J = m.y_scale[:, None] * (m.weights[-1] @ J)
    if m.y_transform == "log":
        t = out * m.y_scale + m.y_shift
        J = np.exp(t)[:, None] * J
    return J


def _propagate_second(m: MlpSurrogate, x: np.ndarray):
    """Forward-propagate value, Jacobian, and Hessian tensors of all outputs."""
    n = m.n_inputs
    a = (x - m.x_shift) / m.x_scale
    J = np.diag(1.0 / m.x_scale)
    H = np.zeros((n, n, n))
    for W, b in zip(m.weights[:-1], m.biases[:-1]):
        z = W @ a + b
        Jz = W @ J
        Hz = np.tensordot(W, H, axes=1)
        d1 = swish_d1(z)
        d2 = swish_d2(z)
        J = d1[:, None] * Jz
        H = d2[:, None, None] * (Jz[:, :, None] * Jz[:, None, :]) + d1[:, None, None] * Hz
        a = swish(z)
    W = m.weights[-1]
    out = W @ a + m.biases[-1]
    Jt = m.y_scale[:, None] * (W @ J)
    Ht = m.y_scale[:, None, None] * np.tensordot(W, H, axes=1)
    t = out * m.y_scale + m.y_shift
    if m.y_transform == "log":
        e = np.exp(t)
        y = e + m.y_offset
        Jout = e[:, None] * Jt
        Hout = e[:, None, None] * (Jt[:, :, None] * Jt[:, None, :] + Ht)
        return y, Jout, Hout
    return t, Jt, Ht


def mlp_hessian(m: MlpSurrogate, x: np.ndarray, output_index: int) -> np.ndarray:
    """Exact Hessian of output ``output_index``, symmetrized."""
    x = _check_dim(m, x)
    if not 0 <= output_index < m.n_outputs:
        raise ValueError(f"output_index {output_index} out of range")
    _, _, H = _propagate_second(m, x)
    Hk = H[output_index]
    return 0.5 * (Hk + Hk.T)


def mlp_hessian_all(m: MlpSurrogate, x: np.ndarray) -> np.ndarray:
    """Hessians of all outputs at once, shape (n_outputs, n, n)."""
    x = _check_dim(m, x)
    _, _, H = _propagate_second(m, x)
    return 0.5 * (H + np.transpose(H, (0, 2, 1)))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    hidden_dims: tuple[int, ...] = (64, 64)
    epochs: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    validation_fraction: float = 0.1
    seed: int = 0
    early_stop_patience: int = 100
    weight_decay: float = 0.01  # decoupled; regularizes sparse high-dim fits
    target_transform: str = "none"  # "none" or "log"
    transform_shift: float = 1e-4  # log-shift delta as a fraction of output span

    def __post_init__(self):
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be nonempty")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.target_transform not in ("none", "log"):
            raise ValueError("target_transform must be 'none' or 'log'")
        if self.transform_shift <= 0:
            raise ValueError("transform_shift must be > 0")


def _init_params(dims: Sequence[int], rng: np.random.Generator):
    Ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        Ws.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return Ws, bs


def _forward_cached(Ws, bs, A0):
    acts = [A0]
    zs = []
    A = A0
    for W, b in zip(Ws[:-1], bs[:-1]):
        Z = A @ W.T + b
        zs.append(Z)
        A = swish(Z)
        acts.append(A)
    out = A @ Ws[-1].T + bs[-1]
    return out, acts, zs


def _backward(Ws, bs, acts, zs, G):
    gW = [None] * len(Ws)
    gb = [None] * len(bs)
    gW[-1] = G.T @ acts[-1]
    gb[-1] = G.sum(axis=0)
    for l in range(len(Ws) - 2, -1, -1):
        G = (G @ Ws[l + 1]) * swish_d1(zs[l])
        gW[l] = G.T @ acts[l]
        gb[l] = G.sum(axis=0)
    return gW, gb


def train_mlp(data, cfg: TrainConfig) -> MlpSurrogate:
    """Fit an MLP regressor to a Dataset (or an (X, Y) pair) by Adam on MSE.

    Scalers (zero mean / unit variance) are fit on the training rows;
    ``validation_fraction`` rows are held out for early stopping.  Training
    is deterministic for a fixed seed.
    """
    if isinstance(data, tuple):
        X, Y = data
    else:
        X, Y = data.X[data.valid], data.Y[data.valid]
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if n < 10:
        raise ValueError(f"need at least 10 valid training rows, got {n}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("training outputs must be finite")

    y_offset = None
    if cfg.target_transform == "log":
        span = Y.max(axis=0) - Y.min(axis=0)
        delta = cfg.transform_shift * np.where(span > 0, span, 1.0)
        y_offset = Y.min(axis=0) - delta
        Y = np.log(Y - y_offset)

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if tr_idx.size == 0:
        tr_idx, val_idx = perm, perm

    x_shift = X[tr_idx].mean(axis=0)
    x_scale = X[tr_idx].std(axis=0)
    x_scale[x_scale < 1e-12] = 1.0
    y_shift = Y[tr_idx].mean(axis=0)
    y_scale = Y[tr_idx].std(axis=0)
    flat_outputs = y_scale < 1e-12
    y_scale[flat_outputs] = 1.0

    Xtr = (X[tr_idx] - x_shift) / x_scale
    Ytr = (Y[tr_idx] - y_shift) / y_scale
    Xval = (X[val_idx] - x_shift) / x_scale
    Yval = (Y[val_idx] - y_shift) / y_scale

    dims = [X.shape[1], *cfg.hidden_dims, Y.shape[1]]
    Ws, bs = _init_params(dims, rng)
    mW = [np.zeros_like(W) for W in Ws]
    vW = [np.zeros_like(W) for W in Ws]
    mb = [np.zeros_like(b) for b in bs]
    vb = [np.zeros_like(b) for b in bs]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0

    def val_mse():
        pred, _, _ = _forward_cached(Ws, bs, Xval)
        return float(np.mean((pred - Yval) ** 2))

    best = (np.inf, None, None)
    mark = np.inf
    stale = 0
    history = []
    n_tr = Xtr.shape[0]
    lr = cfg.learning_rate
    decay_every = max(1, cfg.early_stop_patience // 3)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_tr)
        ep_loss = 0.0
        for start in range(0, n_tr, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            A0, Yb = Xtr[idx], Ytr[idx]
            out, acts, zs = _forward_cached(Ws, bs, A0)
            resid = out - Yb
            ep_loss += float(np.sum(resid**2))
            G = 2.0 * resid / (resid.size)
            gW, gb = _backward(Ws, bs, acts, zs, G)
            t += 1
            corr = lr * np.sqrt(1 - beta2**t) / (1 - beta1**t)
            for l in range(len(Ws)):
                mW[l] = beta1 * mW[l] + (1 - beta1) * gW[l]
                vW[l] = beta2 * vW[l] + (1 - beta2) * gW[l] ** 2
                Ws[l] -= corr * mW[l] / (np.sqrt(vW[l]) + eps) + lr * cfg.weight_decay * Ws[l]
                mb[l] = beta1 * mb[l] + (1 - beta1) * gb[l]
                vb[l] = beta2 * vb[l] + (1 - beta2) * gb[l] ** 2
                bs[l] -= corr * mb[l] / (np.sqrt(vb[l]) + eps)
        vm = val_mse()
        history.append((ep_loss / (n_tr * Y.shape[1]), vm))
        if vm < best[0]:
            best = (vm, [W.copy() for W in Ws], [b.copy() for b in bs])
        # staleness counts epochs without a *meaningful* improvement, so the
        # plateau schedule and early stop aren't defeated by 1e-9 wiggles
        if vm < mark * (1.0 - 1e-3):
            mark = vm
            stale = 0
        else:
            stale += 1
            if stale % decay_every == 0 and lr > 1e-5:
                lr *= 0.5
            if stale >= cfg.early_stop_patience:
                break
    if best[1] is not None:
        Ws, bs = best[1], best[2]

    pred_tr, _, _ = _forward_cached(Ws, bs, Xtr)
    meta = {
        "seed": cfg.seed,
        "epochs_run": len(history),
        "train_mse": float(np.mean((pred_tr - Ytr) ** 2)),
        "val_mse": best[0] if best[1] is not None else val_mse(),
        "flat_outputs": np.where(flat_outputs)[0].tolist(),
        "target_transform": cfg.target_transform,
        "history": history,
    }
    return MlpSurrogate(
        layer_dims=dims,
        weights=Ws,
        biases=bs,
        x_shift=x_shift,
        x_scale=x_scale,
        y_shift=y_shift,
        y_scale=y_scale,
        y_transform=cfg.target_transform,
        y_offset=y_offset,
        training_meta=meta,
    )


# ---------------------------------------------------------------------------
# Serialization: structured text, round-trip exact at double precision
# ---------------------------------------------------------------------------

_FMT_VERSION = "1"


def _fmt_vec(v: np.ndarray) -> str:
    return " ".join(f"{x:.17g}" for x in v)


def serialize(m: MlpSurrogate) -> str:
    lines = [
        f"mlp-model v{_FMT_VERSION}",
        "layer_dims: " + " ".join(str(d) for d in m.layer_dims),
        "x_shift: " + _fmt_vec(m.x_shift),
        "x_scale: " + _fmt_vec(m.x_scale),
        "y_shift: " + _fmt_vec(m.y_shift),
        "y_scale: " + _fmt_vec(m.y_scale),
        f"y_transform: {m.y_transform}",
    ]
    if m.y_transform == "log":
        lines.append("y_offset: " + _fmt_vec(m.y_offset))
    for l, (W, b) in enumerate(zip(m.weights, m.biases)):
        lines.append(f"W{l}: {W.shape[0]} {W.shape[1]}")
        for row in W:
            lines.append(_fmt_vec(row))
        lines.append(f"b{l}: " + _fmt_vec(b))
    return "\n".join(lines) + "\n"


class ModelParseError(ValueError):
    pass


def _parse_vec(line: str, lineno: int, key: str, size: int) -> np.ndarray:
    if not line.startswith(key + ":"):
        raise ModelParseError(f"line {lineno}: expected {key!r}, got {line[:40]!r}")
    vals = line.split(":", 1)[1].split()
    if len(vals) != size:
        raise ModelParseError(f"line {lineno}: expected {size} values for {key}")
    return np.array([float(v) for v in vals])


def deserialize(text: str) -> MlpSurrogate:
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("mlp-model v"):
        raise ModelParseError("line 1: not an mlp-model file")
    version = lines[0].split(" v", 1)[1]
    if version != _FMT_VERSION:
        raise ModelParseError(f"line 1: unsupported mlp-model version {version!r}")
    if len(lines) < 6 or not lines[1].startswith("layer_dims:"):
        raise ModelParseError("line 2: expected layer_dims")
    dims = [int(v) for v in lines[1].split(":", 1)[1].split()]
    if len(dims) < 2:
        raise ModelParseError("line 2: need at least input and output dims")
    x_shift = _parse_vec(lines[2], 3, "x_shift", dims[0])
    x_scale = _parse_vec(lines[3], 4, "x_scale", dims[0])
    y_shift = _parse_vec(lines[4], 5, "y_shift", dims[-1])
    y_scale = _parse_vec(lines[5], 6, "y_scale", dims[-1])
    if len(lines) < 7 or not lines[6].startswith("y_transform:"):
        raise ModelParseError("line 7: expected y_transform")
    y_transform = lines[6].split(":", 1)[1].strip()
    if y_transform not in ("none", "log"):
        raise ModelParseError(f"line 7: unknown y_transform {y_transform!r}")
    pos = 7
    y_offset = None
    if y_transform == "log":
        if pos >= len(lines):
            raise ModelParseError(f"line {pos+1}: expected y_offset")
        y_offset = _parse_vec(lines[pos], pos + 1, "y_offset", dims[-1])
        pos += 1
    Ws, bs = [], []
    for l in range(len(dims) - 1):
        rows, cols = dims[l + 1], dims[l]
        if pos >= len(lines) or not lines[pos].startswith(f"W{l}:"):
            raise ModelParseError(f"line {pos+1}: expected W{l} header")
        shape = lines[pos].split(":", 1)[1].split()
        if shape != [str(rows), str(cols)]:
            raise ModelParseError(f"line {pos+1}: W{l} shape mismatch with layer_dims")
        pos += 1
        W = np.empty((rows, cols))
        for r in range(rows):
            if pos >= len(lines):
                raise ModelParseError(f"line {pos+1}: truncated weight matrix W{l}")
            vals = lines[pos].split()
            if len(vals) != cols:
                raise ModelParseError(f"line {pos+1}: expected {cols} values in W{l} row")
            W[r] = [float(v) for v in vals]
            pos += 1
        Ws.append(W)
        if pos >= len(lines):
            raise ModelParseError(f"line {pos+1}: truncated file, missing b{l}")
        bs.append(_parse_vec(lines[pos], pos + 1, f"b{l}", rows))
        pos += 1
    return MlpSurrogate(
        layer_dims=dims,
        weights=Ws,
        biases=bs,
        x_shift=x_shift,
        x_scale=x_scale,
        y_shift=y_shift,
        y_scale=y_scale,
        y_transform=y_transform,
        y_offset=y_offset,
    )
