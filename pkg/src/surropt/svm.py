"""Soft-margin kernel SVM trained by two-variable SMO.

Used as the feasibility pre-filter in adaptive sampling.  Includes the
conservative retraining step: all support vectors of a first model are
relabeled feasible and the classifier is retrained, deliberately enlarging
the predicted-feasible region near constraint boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["SvmModel", "train_svm", "conservative_retrain", "svm_serialize", "svm_deserialize"]


@dataclass
class SvmModel:
    kernel: str  # "rbf" | "linear"
    gamma: float
    C: float
    support_X: np.ndarray  # standardized support vectors
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    x_shift: np.ndarray
    x_scale: np.ndarray
    support_indices: np.ndarray  # indices into the training set
    support_alpha: np.ndarray
    dual_objective: float = 0.0
    accept_all: bool = False

    def decision(self, x: np.ndarray) -> float:
        if self.accept_all:
            return 1.0
        z = (np.asarray(x, dtype=float) - self.x_shift) / self.x_scale
        k = _kernel_vec(self.kernel, self.gamma, self.support_X, z)
        return float(self.dual_coef @ k + self.bias)

    def predict(self, x: np.ndarray) -> tuple[int, float]:
        d = self.decision(x)
        return (1 if d >= 0 else -1), d

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict(x)[0] for x in X])


def _kernel_matrix(kernel: str, gamma: float, X: np.ndarray) -> np.ndarray:
    if kernel == "linear":
        return X @ X.T
    if kernel == "rbf":
        sq = np.sum(X**2, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2 * X @ X.T
        return np.exp(-gamma * np.maximum(d2, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


def _kernel_vec(kernel: str, gamma: float, X: np.ndarray, z: np.ndarray) -> np.ndarray:
    if kernel == "linear":
        return X @ z
    d2 = np.sum((X - z[None, :]) ** 2, axis=1)
    return np.exp(-gamma * d2)


def train_svm(
    X: np.ndarray,
    labels: np.ndarray,
    C: float = 10.0,
    kernel: str = "rbf",
    gamma: Optional[float] = None,
    tol: float = 1e-3,
    seed: int = 0,
    max_passes: int = 10_000,
) -> SvmModel:
    """Solve the soft-margin dual by SMO to KKT tolerance ``tol``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training points")
    classes = set(np.sign(y).tolist())
    if classes != {1.0, -1.0}:
        raise ValueError("both classes (+1/-1) must be present")

    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    Xs = (X - shift) / scale
    if gamma is None:
        v = float(Xs.var())
        gamma = 1.0 / (X.shape[1] * v) if v > 1e-12 else 1.0

    K = _kernel_matrix(kernel, gamma, Xs)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - 1'a
    kdiag = np.diag(K)

    # SMO with maximal-violating-pair selection (second-order j choice);
    # terminates when the dual KKT violation m - M drops below tol
    for _ in range(max_passes * n):
        yg = -y * grad
        up = ((y > 0) & (alpha < C - 1e-12)) | ((y < 0) & (alpha > 1e-12))
        low = ((y > 0) & (alpha > 1e-12)) | ((y < 0) & (alpha < C - 1e-12))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        m_up = yg[i]
        m_low = float(np.min(np.where(low, yg, np.inf)))
        if m_up - m_low <= tol:
            break
        cand = low & (yg < m_up)
        if not cand.any():
            break
        a_ij = np.maximum(kdiag[i] + kdiag - 2 * K[i], 1e-12)
        gain = np.where(cand, (m_up - yg) ** 2 / a_ij, -np.inf)
        j = int(np.argmax(gain))

        # analytic two-variable solve, clipped to the box
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            L, H = max(0.0, aj_old - ai_old), min(C, C + aj_old - ai_old)
        else:
            L, H = max(0.0, ai_old + aj_old - C), min(C, ai_old + aj_old)
        if L >= H:
            break
        eta = 2 * K[i, j] - K[i, i] - K[j, j]
        if eta >= 0:
            eta = -1e-12
        # b-free errors: E_k = y_k * grad_k
        aj = aj_old - y[j] * (y[i] * grad[i] - y[j] * grad[j]) / eta
        aj = min(H, max(L, aj))
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        d_i, d_j = ai - ai_old, aj - aj_old
        if abs(d_i) < 1e-14 and abs(d_j) < 1e-14:
            break
        alpha[i], alpha[j] = ai, aj
        grad += Q[:, i] * d_i + Q[:, j] * d_j

    # bias from free support vectors, else the midpoint of the KKT interval
    yg = -y * grad
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        b = float(np.mean(yg[free]))
    else:
        up = ((y > 0) & (alpha < C - 1e-12)) | ((y < 0) & (alpha > 1e-12))
        low = ((y > 0) & (alpha > 1e-12)) | ((y < 0) & (alpha < C - 1e-12))
        hi = float(np.max(np.where(up, yg, -np.inf))) if up.any() else 0.0
        lo = float(np.min(np.where(low, yg, np.inf))) if low.any() else 0.0
        b = (hi + lo) / 2

    sv = alpha > 1e-8
    idx = np.where(sv)[0]
    obj = float(alpha.sum() - 0.5 * (alpha * y) @ K @ (alpha * y))
    return SvmModel(
        kernel=kernel,
        gamma=float(gamma),
        C=float(C),
        support_X=Xs[sv],
        dual_coef=(alpha * y)[sv],
        bias=float(b),
        x_shift=shift,
        x_scale=scale,
        support_indices=idx,
        support_alpha=alpha[sv],
        dual_objective=obj,
    )


def accept_all_model(dim: int) -> SvmModel:
    """Trivial classifier that predicts every point feasible."""
    return SvmModel(
        kernel="rbf",
        gamma=1.0,
        C=1.0,
        support_X=np.zeros((0, dim)),
        dual_coef=np.zeros(0),
        bias=1.0,
        x_shift=np.zeros(dim),
        x_scale=np.ones(dim),
        support_indices=np.zeros(0, dtype=int),
        support_alpha=np.zeros(0),
        accept_all=True,
    )


def conservative_retrain(
    model: SvmModel, X: np.ndarray, labels: np.ndarray, **params
) -> SvmModel:
    """Relabel all support vectors of ``model`` as feasible and retrain."""
    new_labels = np.asarray(labels).copy()
    new_labels[model.support_indices] = 1
    if len(set(np.sign(new_labels).tolist())) < 2:
        return accept_all_model(X.shape[1])
    return train_svm(X, new_labels, **params)


# ---------------------------------------------------------------------------
# Serialization (same structured-text layout family as the surrogate models)
# ---------------------------------------------------------------------------

_FMT_VERSION = "1"


def svm_serialize(m: SvmModel) -> str:
    lines = [
        f"svm-model v{_FMT_VERSION}",
        f"kernel: {m.kernel}",
        f"gamma: {m.gamma:.17g}",
        f"C: {m.C:.17g}",
        f"bias: {m.bias:.17g}",
        f"accept_all: {int(m.accept_all)}",
        f"n_support: {m.support_X.shape[0]}",
        f"dim: {m.support_X.shape[1] if m.support_X.size else m.x_shift.size}",
        "x_shift: " + " ".join(f"{v:.17g}" for v in m.x_shift),
        "x_scale: " + " ".join(f"{v:.17g}" for v in m.x_scale),
        "dual_coef: " + " ".join(f"{v:.17g}" for v in m.dual_coef),
        "support_indices: " + " ".join(str(int(v)) for v in m.support_indices),
        "support_alpha: " + " ".join(f"{v:.17g}" for v in m.support_alpha),
    ]
    for row in m.support_X:
        lines.append("sv: " + " ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def svm_deserialize(text: str) -> SvmModel:
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("svm-model v"):
        raise ValueError("line 1: not an svm-model file")
    version = lines[0].split(" v", 1)[1]
    if version != _FMT_VERSION:
        raise ValueError(f"line 1: unsupported svm-model version {version!r}")

    def get(i: int, key: str) -> str:
        if i >= len(lines) or not lines[i].startswith(key + ":"):
            raise ValueError(f"line {i+1}: expected {key!r}")
        return lines[i].split(":", 1)[1].strip()

    kernel = get(1, "kernel")
    gamma = float(get(2, "gamma"))
    C = float(get(3, "C"))
    bias = float(get(4, "bias"))
    accept_all = bool(int(get(5, "accept_all")))
    n_sv = int(get(6, "n_support"))
    dim = int(get(7, "dim"))
    x_shift = np.array(get(8, "x_shift").split(), dtype=float)
    x_scale = np.array(get(9, "x_scale").split(), dtype=float)
    coef_s = get(10, "dual_coef")
    dual_coef = np.array(coef_s.split(), dtype=float) if coef_s else np.zeros(0)
    idx_s = get(11, "support_indices")
    idx = np.array([int(v) for v in idx_s.split()]) if idx_s else np.zeros(0, dtype=int)
    alpha_s = get(12, "support_alpha")
    alpha = np.array(alpha_s.split(), dtype=float) if alpha_s else np.zeros(0)
    rows = []
    for k in range(n_sv):
        rows.append(np.array(get(13 + k, "sv").split(), dtype=float))
        if rows[-1].size != dim:
            raise ValueError(f"line {14+k}: support vector has wrong dimension")
    support_X = np.array(rows).reshape(n_sv, dim)
    return SvmModel(
        kernel=kernel,
        gamma=gamma,
        C=C,
        support_X=support_X,
        dual_coef=dual_coef,
        bias=bias,
        x_shift=x_shift,
        x_scale=x_scale,
        support_indices=idx,
        support_alpha=alpha,
        accept_all=accept_all,
    )
