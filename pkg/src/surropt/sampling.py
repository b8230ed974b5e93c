"""Latin hypercube sampling and the two-scenario adaptive sampling strategy.

The adaptive strategy builds a global dataset before any optimization:
a small initial LHS over slightly expanded bounds, an optional feasibility
classifier (trained once, then conservatively retrained), and repeated
subregion refinement around the best feasible point found so far.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .problems import ProblemSpec
from .svm import SvmModel, conservative_retrain, train_svm

__all__ = [
    "Dataset",
    "SamplingConfig",
    "adaptive_sample",
    "expand_bounds",
    "label_feasibility",
    "lhs",
    "subregion",
]


@dataclass
class Dataset:
    """Sampled input/output/feasibility records."""

    X: np.ndarray  # (n, dim)
    Y: np.ndarray  # (n, n_outputs); NaN rows where valid is False
    feasible: np.ndarray  # (n,) bool
    valid: np.ndarray  # (n,) bool, black-box evaluation succeeded
    provenance: list[str] = field(default_factory=list)  # "initial" | "subregion"
    fallback_global: bool = False  # set when zero feasible points forced a global LHS fallback

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def feasible_fraction(self) -> float:
        return float(np.mean(self.feasible)) if len(self) else 0.0

    def append(self, X, Y, feasible, valid, provenance: str) -> None:
        self.X = np.vstack([self.X, X])
        self.Y = np.vstack([self.Y, Y])
        self.feasible = np.concatenate([self.feasible, feasible])
        self.valid = np.concatenate([self.valid, valid])
        self.provenance += [provenance] * len(X)

    def to_csv(self) -> str:
        n_in = self.X.shape[1]
        n_out = self.Y.shape[1]
        header = (
            [f"x{i+1}" for i in range(n_in)]
            + [f"y{j+1}" for j in range(n_out)]
            + ["feasible", "valid", "provenance"]
        )
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for i in range(len(self)):
            cells = [f"{v:.17g}" for v in self.X[i]]
            cells += [f"{v:.17g}" for v in self.Y[i]]
            cells += [
                "1" if self.feasible[i] else "0",
                "1" if self.valid[i] else "0",
                self.provenance[i],
            ]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        lines = text.strip().splitlines()
        if not lines:
            raise ValueError("empty dataset file")
        header = lines[0].split(",")
        n_in = sum(1 for h in header if h.startswith("x"))
        n_out = sum(1 for h in header if h.startswith("y"))
        expected = n_in + n_out + 3
        if header[-3:] != ["feasible", "valid", "provenance"]:
            raise ValueError(f"bad dataset header: {lines[0]!r}")
        X, Y, feas, valid, prov = [], [], [], [], []
        for k, line in enumerate(lines[1:], start=2):
            cells = line.split(",")
            if len(cells) != expected:
                raise ValueError(f"row {k}: expected {expected} cells, got {len(cells)}")
            try:
                X.append([float(c) for c in cells[:n_in]])
                Y.append([float(c) for c in cells[n_in : n_in + n_out]])
            except ValueError as exc:
                raise ValueError(f"row {k}: {exc}") from None
            feas.append(cells[-3] == "1")
            valid.append(cells[-2] == "1")
            prov.append(cells[-1])
        return cls(
            X=np.array(X, dtype=float).reshape(len(prov), n_in),
            Y=np.array(Y, dtype=float).reshape(len(prov), n_out),
            feasible=np.array(feas),
            valid=np.array(valid),
            provenance=prov,
        )


@dataclass
class SamplingConfig:
    budget: int
    initial_fraction: float = 0.10
    bound_expansion: float = 0.05
    subregion_fraction: float = 0.25
    rounds: int = 3
    rng_seed: int = 0
    candidate_factor: int = 3  # over-generation multiple when classifier-filtering

    def __post_init__(self):
        if not 0 < self.initial_fraction < 1:
            raise ValueError("initial_fraction must lie in (0,1)")
        if self.bound_expansion < 0:
            raise ValueError("bound_expansion must be >= 0")
        if self.budget < 10:
            raise ValueError("budget must be >= 10")


def lhs(bounds_lo: np.ndarray, bounds_hi: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Latin hypercube: per dimension, one point in each of n equal strata."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo = np.asarray(bounds_lo, dtype=float)
    hi = np.asarray(bounds_hi, dtype=float)
    rng = np.random.default_rng(seed)
    d = lo.size
    pts = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        u = rng.uniform(size=n)
        pts[:, j] = lo[j] + (perm + u) / n * (hi[j] - lo[j])
    return pts


def expand_bounds(lo: np.ndarray, hi: np.ndarray, frac: float) -> tuple[np.ndarray, np.ndarray]:
    """Widen each bound by frac of its range on both sides."""
    if frac < 0:
        raise ValueError("frac must be >= 0")
    span = hi - lo
    return lo - frac * span, hi + frac * span


def subregion(
    center: np.ndarray,
    bounds_lo: np.ndarray,
    bounds_hi: np.ndarray,
    frac: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Box of half-width frac*(hi-lo)/2 around center, clipped to the bounds."""
    half = frac * (bounds_hi - bounds_lo) / 2.0
    lo = np.clip(center - half, bounds_lo, bounds_hi)
    hi = np.clip(center + half, bounds_lo, bounds_hi)
    return lo, hi


def label_feasibility(spec: ProblemSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise feasibility: all white-box inequalities and output bounds hold."""
    n = X.shape[0]
    out = np.zeros(n, dtype=bool)
    for i in range(n):
        if np.any(~np.isfinite(Y[i])):
            continue
        out[i] = spec.feasible(X[i], Y[i])
    return out


def _evaluate_rows(
    spec: ProblemSpec,
    X: np.ndarray,
    evaluate: Callable[[np.ndarray], np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    Y = np.full((X.shape[0], spec.n_outputs), np.nan)
    valid = np.zeros(X.shape[0], dtype=bool)
    for i in range(X.shape[0]):
        try:
            Y[i] = evaluate(X[i])
            valid[i] = np.all(np.isfinite(Y[i]))
        except Exception:
            valid[i] = False
    return Y, valid


def adaptive_sample(
    spec: ProblemSpec,
    cfg: SamplingConfig,
    classifier_params: Optional[dict] = None,
    evaluate: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple[Dataset, Optional[SvmModel]]:
    """Two-scenario adaptive sampling.

    Scenario 1 (no constraints): staged LHS, no classifier.  Scenario 2:
    an SVM feasibility filter trained on the initial stage (and retrained
    conservatively) discards predicted-infeasible subregion candidates
    before they consume black-box evaluations.
    """
    if evaluate is None:
        evaluate = spec.evaluate
    rng = np.random.default_rng(cfg.rng_seed)
    seeds = rng.integers(0, 2**31 - 1, size=cfg.rounds + 2)

    exp_lo, exp_hi = expand_bounds(spec.bounds_lo, spec.bounds_hi, cfg.bound_expansion)
    n_init = min(cfg.budget, max(1, round(cfg.initial_fraction * cfg.budget)))

    X0 = lhs(exp_lo, exp_hi, n_init, int(seeds[0]))
    Y0, valid0 = _evaluate_rows(spec, X0, evaluate)
    feas0 = label_feasibility(spec, X0, Y0)
    data = Dataset(
        X=X0, Y=Y0, feasible=feas0, valid=valid0, provenance=["initial"] * n_init
    )

    model: Optional[SvmModel] = None
    if spec.has_constraints:
        labels = np.where(feas0, 1, -1)
        if len(set(labels.tolist())) == 2:
            params = classifier_params or {}
            base = train_svm(X0, labels, **params)
            model = conservative_retrain(base, X0, labels, **params)

    remaining = cfg.budget - n_init
    if remaining <= 0:
        return data, model

    per_round = [remaining // cfg.rounds] * cfg.rounds
    per_round[-1] += remaining - sum(per_round)

    for r, quota in enumerate(per_round):
        if quota <= 0:
            continue
        mask = data.valid & data.feasible
        if not np.any(mask):
            # no feasible anchor: spend the rest on global LHS and flag it
            left = remaining - sum(per_round[:r])
            Xg = lhs(exp_lo, exp_hi, left, int(seeds[r + 1]))
            Yg, vg = _evaluate_rows(spec, Xg, evaluate)
            data.append(Xg, Yg, label_feasibility(spec, Xg, Yg), vg, "subregion")
            data.fallback_global = True
            break
        best = int(np.argmin(np.where(mask, data.Y[:, 0], np.inf)))
        sub_lo, sub_hi = subregion(
            data.X[best], spec.bounds_lo, spec.bounds_hi, cfg.subregion_fraction
        )
        sub_lo = np.clip(sub_lo, exp_lo, exp_hi)
        sub_hi = np.clip(sub_hi, exp_lo, exp_hi)
        if model is not None:
            cand = lhs(sub_lo, sub_hi, cfg.candidate_factor * quota, int(seeds[r + 1]))
            pred = np.array([model.predict(c)[0] for c in cand])
            keep = cand[pred > 0][:quota]
            if keep.shape[0] < quota:
                # guarantee forward progress: top up with rejected candidates
                reject = cand[pred <= 0]
                keep = np.vstack([keep, reject[: quota - keep.shape[0]]])
        else:
            keep = lhs(sub_lo, sub_hi, quota, int(seeds[r + 1]))
        Yk, vk = _evaluate_rows(spec, keep, evaluate)
        data.append(keep, Yk, label_feasibility(spec, keep, Yk), vk, "subregion")

    return data, model
