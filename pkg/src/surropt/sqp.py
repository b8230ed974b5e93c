"""SQP-driven feasible-path optimizer over a smooth surrogate.

Each iteration assembles objective/constraint derivatives through the
surrogate via the chain rule, builds the (modified) Lagrangian Hessian or a
BFGS approximation, solves a convex QP for the step and multipliers, updates
the l1-merit penalties, backtracks under an Armijo condition on the merit,
and tests feasibility-plus-progress convergence criteria.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .problems import AffineInequality, ProblemSpec
from .qp import QpProblem, QpSolution, solve_qp

__all__ = [
    "NumericModel",
    "SqpConfig",
    "SqpResult",
    "bfgs_update",
    "chain_gradient",
    "check_convergence",
    "directional_derivative",
    "lagrangian_hessian",
    "line_search",
    "merit",
    "modify_hessian",
    "solve",
    "update_penalties",
]


@dataclass
class SqpConfig:
    eta: float = 0.1  # Armijo parameter
    tol: float = 1e-6
    beta: float = 0.618  # backtracking multiple
    n_max: int = 10  # line-search trial cap
    delta: float = 1e-8  # Hessian eigenvalue floor
    max_iterations: int = 200
    hessian_mode: str = "exact"  # "exact" | "bfgs"

    def __post_init__(self):
        if not 0 < self.eta < 0.5:
            raise ValueError("eta must lie in (0, 0.5)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.tol <= 0 or self.delta <= 0:
            raise ValueError("tol and delta must be > 0")
        if self.hessian_mode not in ("exact", "bfgs"):
            raise ValueError("hessian_mode must be 'exact' or 'bfgs'")


@dataclass
class IterRecord:
    iteration: int
    f_pred: float
    f_true: Optional[float]
    step_norm: float
    infeasibility: float
    alpha: float
    accepted: bool
    D: float
    merit_value: float
    merit_new: float
    rho: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    secant_residual: Optional[float] = None  # |B'dx - dL|_inf when BFGS update applied


@dataclass
class SqpResult:
    x: np.ndarray
    f_pred: float
    f_true: Optional[float]
    status: str
    evaluations_used: int
    trace: list[IterRecord]
    multipliers: np.ndarray

    def trace_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,f_pred,f_true,step_norm,infeasibility,alpha,accepted\n")
        for r in self.trace:
            ft = "" if r.f_true is None else f"{r.f_true:.17g}"
            buf.write(
                f"{r.iteration},{r.f_pred:.17g},{ft},{r.step_norm:.17g},"
                f"{r.infeasibility:.17g},{r.alpha:.17g},{int(r.accepted)}\n"
            )
        return buf.getvalue()


class NumericModel:
    """Smooth-model adapter for an analytic black box, using central
    differences for derivatives.  Lets the SQP layer run directly on a
    closed-form model (no surrogate)."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_inputs: int,
                 n_outputs: int, h_jac: float = 1e-6, h_hess: float = 1e-4):
        self.fn = fn
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.h_jac = h_jac
        self.h_hess = h_hess

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(x), dtype=float).reshape(self.n_outputs)

    def _try(self, x: np.ndarray):
        try:
            return self.predict(x)
        except Exception:
            return None

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        J = np.empty((self.n_outputs, self.n_inputs))
        y0 = None
        for i in range(self.n_inputs):
            e = np.zeros(self.n_inputs)
            e[i] = self.h_jac
            yp, ym = self._try(x + e), self._try(x - e)
            if yp is not None and ym is not None:
                J[:, i] = (yp - ym) / (2 * self.h_jac)
            else:
                if y0 is None:
                    y0 = self.predict(x)
                side = yp if yp is not None else ym
                if side is None:
                    raise FloatingPointError(f"finite differencing failed at {x}")
                sgn = 1.0 if yp is not None else -1.0
                J[:, i] = sgn * (side - y0) / self.h_jac
        return J

    def hessian(self, x: np.ndarray, output_index: int) -> np.ndarray:
        n, h = self.n_inputs, self.h_hess
        H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            Jp = self.jacobian(x + e)[output_index]
            Jm = self.jacobian(x - e)[output_index]
            H[i] = (Jp - Jm) / (2 * h)
        return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# Constraint assembly: every inequality is a scalar c(x, y) <= 0 whose
# derivatives chain through the model where it touches y = s(x).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _BoundRow:
    index: int
    sign: float  # +1: x_i - hi <= 0 ; -1: lo - x_i <= 0
    bound: float

    def value(self, x, y):
        return self.sign * x[self.index] - self.sign * self.bound

    def grad(self, x, J):
        g = np.zeros(x.size)
        g[self.index] = self.sign
        return g

    def needs_output(self):
        return None


@dataclass(frozen=True)
class _OutputRow:
    output: int
    sign: float  # +1: y_j - hi <= 0 ; -1: lo - y_j <= 0
    bound: float

    def value(self, x, y):
        return self.sign * y[self.output] - self.sign * self.bound

    def grad(self, x, J):
        return self.sign * J[self.output]

    def needs_output(self):
        return self.output


@dataclass(frozen=True)
class _AffineRow:
    ineq: AffineInequality

    def value(self, x, y):
        return self.ineq.value(x)

    def grad(self, x, J):
        return self.ineq.grad(x)

    def needs_output(self):
        return None


def build_inequalities(spec: ProblemSpec) -> list:
    rows: list = []
    for c in spec.white_box_ineq:
        rows.append(_AffineRow(c))
    for i in range(spec.dim_independent):
        rows.append(_BoundRow(i, -1.0, float(spec.bounds_lo[i])))
        rows.append(_BoundRow(i, +1.0, float(spec.bounds_hi[i])))
    if spec.output_lo is not None or spec.output_hi is not None:
        lo = spec.output_lo if spec.output_lo is not None else np.full(spec.n_outputs, -np.inf)
        hi = spec.output_hi if spec.output_hi is not None else np.full(spec.n_outputs, np.inf)
        for j in range(spec.n_outputs):
            if np.isfinite(lo[j]):
                rows.append(_OutputRow(j, -1.0, float(lo[j])))
            if np.isfinite(hi[j]):
                rows.append(_OutputRow(j, +1.0, float(hi[j])))
    return rows


# ---------------------------------------------------------------------------
# The operations the solver is assembled from
# ---------------------------------------------------------------------------


def chain_gradient(m, partial_x: Callable, partial_y: Callable, x: np.ndarray) -> np.ndarray:
    """Gradient of F(x, s(x)) over x: dF/dx + dF/dy . ds/dx."""
    y = m.predict(x)
    J = m.jacobian(x)
    return np.asarray(partial_x(x, y), dtype=float) + np.asarray(partial_y(x, y), dtype=float) @ J


def lagrangian_hessian(
    hess_f: np.ndarray,
    hess_h: Sequence[np.ndarray],
    hess_g: Sequence[np.ndarray],
    lam: np.ndarray,
    mu: np.ndarray,
) -> np.ndarray:
    """H = hess_f + sum lam_i hess_h_i - sum mu_j hess_g_j, symmetrized."""
    H = hess_f.copy()
    for li, Hh in zip(lam, hess_h):
        H += li * Hh
    for mj, Hg in zip(mu, hess_g):
        H -= mj * Hg
    return 0.5 * (H + H.T)


def modify_hessian(H: np.ndarray, delta: float) -> np.ndarray:
    """Clip eigenvalues below delta up to delta (Frobenius-minimal fix)."""
    sigma, Q = np.linalg.eigh(0.5 * (H + H.T))
    if np.all(sigma > delta):
        return H
    return (Q * np.maximum(sigma, delta)) @ Q.T


def bfgs_update(
    B: np.ndarray,
    dx: np.ndarray,
    dL: np.ndarray,
    eps: float = 1e-6,
    grad_norm: float = 1.0,
) -> np.ndarray:
    """Damped BFGS: update only when the curvature test passes."""
    curv = float(dL @ dx)
    if curv <= eps * grad_norm * float(dx @ dx):
        return B
    Bs = B @ dx
    sBs = float(dx @ Bs)
    if sBs <= 0:
        return B
    return B - np.outer(Bs, Bs) / sBs + np.outer(dL, dL) / curv


def merit(
    f_val: float,
    h_vals: np.ndarray,
    g_vals: np.ndarray,
    rho: np.ndarray,
    nu: np.ndarray,
) -> float:
    """l1 merit: f + rho'|h| + nu'max(0, g) for constraints in g <= 0 form."""
    return float(f_val + rho @ np.abs(h_vals) + nu @ np.maximum(0.0, g_vals))


def update_penalties(
    rho_prev: np.ndarray,
    nu_prev: np.ndarray,
    lam: np.ndarray,
    mu: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    rho = np.maximum(np.abs(lam), (rho_prev + np.abs(lam)) / 2.0)
    nu = np.maximum(np.abs(mu), (nu_prev + np.abs(mu)) / 2.0)
    return rho, nu


def directional_derivative(
    grad_f: np.ndarray,
    d: np.ndarray,
    h_vals: np.ndarray,
    g_vals: np.ndarray,
    rho: np.ndarray,
    nu: np.ndarray,
) -> float:
    return float(grad_f @ d - rho @ np.abs(h_vals) - nu @ np.maximum(0.0, g_vals))


def line_search(
    merit_at: Callable[[float], float],
    merit0: float,
    D: float,
    cfg: SqpConfig,
) -> tuple[float, bool]:
    """Backtrack alpha in {1, beta, beta^2, ...}; Armijo acceptance on the
    merit.  When no trial passes, the last alpha is returned unaccepted."""
    alpha = 1.0
    for _ in range(cfg.n_max):
        if merit_at(alpha) - merit0 < alpha * cfg.eta * D:
            return alpha, True
        last = alpha
        alpha *= cfg.beta
    return last, False


def check_convergence(
    infeasibility: float,
    f_new: float,
    f_old: float,
    d: np.ndarray,
    cfg: SqpConfig,
) -> Optional[str]:
    """Feasible (l1 violation below tol) and objective or step stalled."""
    if infeasibility >= cfg.tol:
        return None
    if abs(f_new - f_old) < cfg.tol:
        return "converged_feasible_small_df"
    if np.linalg.norm(d) < cfg.tol:
        return "converged_feasible_small_step"
    return None


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------


def solve(
    spec: ProblemSpec,
    m,
    x0: Optional[np.ndarray] = None,
    cfg: Optional[SqpConfig] = None,
    validate: bool = False,
    evaluate: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SqpResult:
    """Run the SQP feasible-path loop on model ``m`` over ``spec``.

    ``m`` provides predict / jacobian / hessian(x, k); output 0 is the
    objective.  With ``validate`` set, the true black box is evaluated at
    each accepted iterate and recorded in the trace (counted separately).
    """
    cfg = cfg or SqpConfig()
    x = np.asarray(x0, dtype=float).copy() if x0 is not None else spec.bounds_hi.astype(float).copy()
    n = spec.dim_independent
    rows = build_inequalities(spec)
    m_in = len(rows)
    needed_outputs = sorted({r.needs_output() for r in rows if r.needs_output() is not None} | {0})

    if evaluate is None:
        evaluate = spec.evaluate
    evals = 0

    def true_objective(xq):
        nonlocal evals
        try:
            y = evaluate(xq)
            evals += 1
            return float(y[0])
        except Exception:
            evals += 1
            return float("nan")

    def model_state(xq):
        y = m.predict(xq)
        J = m.jacobian(xq)
        g = np.array([r.value(xq, y) for r in rows])
        return y, J, g

    rho = np.zeros(0)  # no equality constraints in the eliminated problem
    nu = np.zeros(m_in)
    lam = np.zeros(0)
    mu = np.zeros(m_in)
    h_vals = np.zeros(0)

    B_bfgs = np.eye(n)
    trace: list[IterRecord] = []
    stall = 0
    status = "max_iter"

    y, J, g_vals = model_state(x)
    f_val = float(y[0])

    for k in range(cfg.max_iterations):
        if not (np.all(np.isfinite(J)) and np.isfinite(f_val)):
            raise FloatingPointError(f"non-finite derivatives at iterate {k}: x={x}")

        grad_f = J[0]
        G = np.vstack([r.grad(x, J) for r in rows]) if m_in else np.zeros((0, n))

        if cfg.hessian_mode == "exact":
            Hy = {j: m.hessian(x, j) for j in needed_outputs}
            hess_f = Hy[0]
            hess_g = []
            for r in rows:
                j = r.needs_output()
                if j is None:
                    hess_g.append(np.zeros((n, n)))
                else:
                    hess_g.append(r.sign * Hy[j])
            H = lagrangian_hessian(hess_f, [], hess_g, lam, mu)
            B = modify_hessian(H, cfg.delta)
        else:
            B = B_bfgs

        if not np.all(np.isfinite(B)):
            raise FloatingPointError(f"non-finite Hessian at iterate {k}: x={x}")

        qp = solve_qp(QpProblem(B=B, g=grad_f, A_in=G, b_in=g_vals))
        if qp.status != "optimal":
            status = "line_search_stall"
            break
        d, lam, mu = qp.d, qp.lam, qp.mu

        rho, nu = update_penalties(rho, nu, lam, mu)
        merit0 = merit(f_val, h_vals, g_vals, rho, nu)
        D = directional_derivative(grad_f, d, h_vals, g_vals, rho, nu)

        def merit_at(alpha):
            xt = x + alpha * d
            try:
                yt = m.predict(xt)
            except Exception:
                return np.inf  # evaluation failure: reject this trial point
            gt = np.array([r.value(xt, yt) for r in rows])
            val = merit(float(yt[0]), h_vals, gt, rho, nu)
            return val if np.isfinite(val) else np.inf

        alpha, accepted = line_search(merit_at, merit0, D, cfg)
        stall = 0 if accepted else stall + 1

        if not accepted and not np.isfinite(merit_at(alpha)):
            alpha = 0.0  # fallback step lands on an invalid point: stay put
        x_new = x + alpha * d
        y_new, J_new, g_new = model_state(x_new)
        f_new = float(y_new[0])
        infeas = float(np.sum(np.maximum(0.0, g_new)))
        f_true = true_objective(x_new) if validate else None

        secant_res = None
        if cfg.hessian_mode == "bfgs":
            def grad_L(J_, g_grads):
                return J_[0] - g_grads.T @ mu if m_in else J_[0]

            G_new = np.vstack([r.grad(x_new, J_new) for r in rows]) if m_in else np.zeros((0, n))
            dx = x_new - x
            dL = grad_L(J_new, G_new) - grad_L(J, G)
            gn = float(np.linalg.norm(J[0] - (G.T @ mu if m_in else 0)))
            B_next = bfgs_update(B_bfgs, dx, dL, grad_norm=gn)
            if B_next is not B_bfgs:
                secant_res = float(np.max(np.abs(B_next @ dx - dL)))
            B_bfgs = B_next

        trace.append(
            IterRecord(
                iteration=k,
                f_pred=f_new,
                f_true=f_true,
                step_norm=float(np.linalg.norm(d)),
                infeasibility=infeas,
                alpha=alpha,
                accepted=accepted,
                D=D,
                merit_value=merit0,
                merit_new=merit_at(alpha),
                rho=rho.copy(),
                nu=nu.copy(),
                lam=lam.copy(),
                mu=mu.copy(),
                secant_residual=secant_res,
            )
        )

        conv = check_convergence(infeas, f_new, f_val, d, cfg)
        x, y, J, g_vals, f_val = x_new, y_new, J_new, g_new, f_new
        if conv is not None:
            status = conv
            break
        if stall >= 3:
            status = "line_search_stall"
            break

    f_true_final = true_objective(x) if validate else None
    return SqpResult(
        x=x,
        f_pred=f_val,
        f_true=f_true_final,
        status=status,
        evaluations_used=evals,
        trace=trace,
        multipliers=mu,
    )
