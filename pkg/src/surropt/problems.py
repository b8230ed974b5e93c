"""Registry of black-box problem instances.

Ten analytic benchmark functions plus the Williams-Otto recycle process,
all behind a uniform evaluate-only interface.  Output convention: column 0
of a problem's output vector is the objective to be minimized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .williams_otto import WO_BOUNDS_HI, WO_BOUNDS_LO, WO_OPT_F, WO_OPT_X, wo_evaluate

__all__ = [
    "AffineInequality",
    "ProblemSpec",
    "UnknownProblemError",
    "available_problems",
    "benchmark_optimum",
    "evaluate_benchmark",
    "problem_spec",
]


class UnknownProblemError(KeyError):
    """Raised when a problem id is not in the registry."""


@dataclass(frozen=True)
class AffineInequality:
    """White-box constraint a @ x + b <= 0, evaluable without the black box."""

    a: np.ndarray
    b: float

    def value(self, x: np.ndarray) -> float:
        return float(self.a @ x + self.b)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.a

    def hess(self, x: np.ndarray) -> np.ndarray:
        n = self.a.size
        return np.zeros((n, n))


@dataclass(frozen=True)
class ProblemSpec:
    """A black-box optimization instance.

    ``evaluate`` maps an independent-variable vector to the black-box output
    vector (output 0 is the objective).  ``output_lo``/``output_hi`` are
    bounds on the dependent variables; infinities mean unbounded.
    """

    id: str
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    n_outputs: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    white_box_ineq: tuple[AffineInequality, ...] = ()
    output_lo: Optional[np.ndarray] = None
    output_hi: Optional[np.ndarray] = None
    known_x: Optional[np.ndarray] = None
    known_f: Optional[float] = None

    def __post_init__(self):
        if not np.all(self.bounds_lo < self.bounds_hi):
            raise ValueError(f"{self.id}: bounds_lo must be < bounds_hi elementwise")

    @property
    def dim_independent(self) -> int:
        return self.bounds_lo.size

    @property
    def has_constraints(self) -> bool:
        return bool(self.white_box_ineq) or self.output_lo is not None or self.output_hi is not None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim_independent,):
            raise ValueError(
                f"{self.id}: expected {self.dim_independent} inputs, got shape {x.shape}"
            )
        y = np.asarray(self.evaluator(x), dtype=float)
        return y.reshape(self.n_outputs)

    def feasible(self, x: np.ndarray, y: Optional[np.ndarray] = None, tol: float = 1e-9) -> bool:
        """Check all white-box inequalities and output bounds at (x, y)."""
        for c in self.white_box_ineq:
            if c.value(x) > tol:
                return False
        if self.output_lo is not None and y is not None:
            if np.any(y < self.output_lo - tol):
                return False
        if self.output_hi is not None and y is not None:
            if np.any(y > self.output_hi + tol):
                return False
        return True


# ---------------------------------------------------------------------------
# Analytic benchmark functions
# ---------------------------------------------------------------------------

def sphere(x: np.ndarray) -> float:
    return float(np.sum(x**2))


def quadratic_chain(x: np.ndarray) -> float:
    return float(np.sum(x**2) + np.sum((x[:-1] - x[1:]) ** 2))


def six_hump_camel(x: np.ndarray) -> float:
    x1, x2 = x
    return float(
        (4 - 2.1 * x1**2 + x1**4 / 3) * x1**2 + x1 * x2 + 4 * (-1 + x2**2) * x2**2
    )


def schaffer_n2(x: np.ndarray) -> float:
    x1, x2 = x
    num = np.sin(x1**2 - x2**2) ** 2 - 0.5
    den = (1 + 0.001 * (x1**2 + x2**2)) ** 2
    return float(0.5 + num / den)


def griewank(x: np.ndarray) -> float:
    i = np.arange(1, x.size + 1)
    return float(1 + np.sum(x**2) / 4000 - np.prod(np.cos(x / np.sqrt(i))))


def ackley(x: np.ndarray) -> float:
    d = x.size
    return float(
        -20 * np.exp(-0.2 * np.sqrt(np.sum(x**2) / d))
        - np.exp(np.sum(np.cos(2 * np.pi * x)) / d)
        + 20
        + np.e
    )


_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN_A = np.array(
    [[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]]
)
_HARTMANN_P = 1e-4 * np.array(
    [[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]]
)


def hartmann3(x: np.ndarray) -> float:
    inner = np.sum(_HARTMANN_A * (x[None, :] - _HARTMANN_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN_ALPHA * np.exp(-inner)))


def powell(x: np.ndarray) -> float:
    x1, x2, x3, x4 = x
    return float(
        (x1 + 10 * x2) ** 2
        + 5 * (x3 - x4) ** 2
        + (x2 - 2 * x3) ** 4
        + 10 * (x1 - x4) ** 4
    )


def rosenbrock(x: np.ndarray) -> float:
    return float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (x[:-1] - 1) ** 2))


def trid(x: np.ndarray) -> float:
    return float(np.sum((x - 1) ** 2) - np.sum(x[1:] * x[:-1]))


@dataclass(frozen=True)
class _BenchmarkEntry:
    fn: Callable[[np.ndarray], float]
    dim: int
    lo: float
    hi: float
    opt_x: Optional[np.ndarray]
    opt_f: Optional[float]


_BENCHMARKS: dict[str, _BenchmarkEntry] = {
    "sphere10": _BenchmarkEntry(sphere, 10, -2.0, 2.0, np.zeros(10), 0.0),
    "quad10": _BenchmarkEntry(quadratic_chain, 10, -2.0, 2.0, np.zeros(10), 0.0),
    "camel2": _BenchmarkEntry(
        six_hump_camel, 2, -2.0, 2.0, np.array([0.0898, -0.7126]), -1.0316
    ),
    "schaffer2": _BenchmarkEntry(schaffer_n2, 2, -2.0, 2.0, np.zeros(2), 0.0),
    "griewank5": _BenchmarkEntry(griewank, 5, -2.0, 2.0, np.zeros(5), 0.0),
    "ackley5": _BenchmarkEntry(ackley, 5, -2.0, 2.0, np.zeros(5), 0.0),
    "hartmann3": _BenchmarkEntry(
        hartmann3, 3, 0.0, 1.0, np.array([0.1146, 0.5556, 0.8525]), -3.8628
    ),
    "powell4": _BenchmarkEntry(powell, 4, -4.0, 5.0, np.zeros(4), 0.0),
    "rosenbrock4": _BenchmarkEntry(
        rosenbrock, 4, -2.048, 2.048, np.ones(4), 0.0
    ),
    "trid6": _BenchmarkEntry(
        trid, 6, -36.0, 36.0, np.arange(1, 7) * (7 - np.arange(1, 7)).astype(float), -50.0
    ),
}


def evaluate_benchmark(problem_id: str, x: np.ndarray) -> float:
    """Exact analytic value of a registered benchmark at x."""
    try:
        entry = _BENCHMARKS[problem_id]
    except KeyError:
        raise UnknownProblemError(problem_id) from None
    x = np.asarray(x, dtype=float)
    if x.shape != (entry.dim,):
        raise ValueError(f"{problem_id}: expected dim {entry.dim}, got shape {x.shape}")
    return entry.fn(x)


def benchmark_optimum(problem_id: str):
    """Catalogued (x*, f*) for reporting, or None if absent."""
    spec = problem_spec(problem_id)
    if spec.known_x is None:
        return None
    return spec.known_x, spec.known_f


def available_problems() -> list[str]:
    return sorted(list(_BENCHMARKS) + ["camel_constrained", "wo"])


def problem_spec(problem_id: str) -> ProblemSpec:
    """Bounds, constraints, and output layout for a registered problem id."""
    if problem_id in _BENCHMARKS:
        e = _BENCHMARKS[problem_id]
        return ProblemSpec(
            id=problem_id,
            bounds_lo=np.full(e.dim, e.lo),
            bounds_hi=np.full(e.dim, e.hi),
            n_outputs=1,
            evaluator=lambda x, fn=e.fn: np.array([fn(x)]),
            known_x=e.opt_x,
            known_f=e.opt_f,
        )
    if problem_id == "camel_constrained":
        # six-hump camel restricted to [-1,1]^2 with x2 - x1 <= 0
        return ProblemSpec(
            id=problem_id,
            bounds_lo=np.array([-1.0, -1.0]),
            bounds_hi=np.array([1.0, 1.0]),
            n_outputs=1,
            evaluator=lambda x: np.array([six_hump_camel(x)]),
            white_box_ineq=(AffineInequality(np.array([-1.0, 1.0]), 0.0),),
            known_x=np.array([0.0898, -0.7126]),
            known_f=-1.0316,
        )
    if problem_id == "wo":
        return ProblemSpec(
            id=problem_id,
            bounds_lo=WO_BOUNDS_LO.copy(),
            bounds_hi=WO_BOUNDS_HI.copy(),
            n_outputs=2,
            evaluator=wo_evaluate,
            output_lo=np.array([-np.inf, 0.0]),
            output_hi=np.array([np.inf, 4.763]),
            known_x=WO_OPT_X.copy(),
            known_f=WO_OPT_F,
        )
    raise UnknownProblemError(problem_id)
