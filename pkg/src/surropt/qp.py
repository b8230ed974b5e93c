"""Dense convex QP solver.

Solves  min 1/2 d'Bd + g'd  s.t.  A_eq d + b_eq = 0,  A_in d + b_in <= 0
with B symmetric positive definite, by a dual active-set method: start at
the unconstrained minimizer (dual feasible), add the most violated
constraint at a time, taking full or partial steps and dropping blocking
constraints.  Equalities are installed first and never dropped.  Exact
multipliers come out of the active-set bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["QpProblem", "QpSolution", "solve_qp"]

_ZTOL = 1e-12


@dataclass
class QpProblem:
    B: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray = None  # (m_eq, n); A_eq d + b_eq = 0
    b_eq: np.ndarray = None
    A_in: np.ndarray = None  # (m_in, n); A_in d + b_in <= 0
    b_in: np.ndarray = None

    def __post_init__(self):
        n = self.g.size
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        if self.A_in is None:
            self.A_in = np.zeros((0, n))
            self.b_in = np.zeros(0)
        self.B = np.asarray(self.B, dtype=float)
        if self.B.shape != (n, n):
            raise ValueError("B shape inconsistent with g")
        if np.max(np.abs(self.B - self.B.T)) > 1e-10:
            raise ValueError("B must be symmetric to 1e-10")
        if self.A_eq.shape[1] != n or self.A_in.shape[1] != n:
            raise ValueError("constraint row dimension mismatch")


@dataclass
class QpSolution:
    d: np.ndarray
    lam: np.ndarray  # equality multipliers
    mu: np.ndarray  # inequality multipliers (>= 0)
    status: str  # "optimal" | "infeasible" | "max_iter"
    iterations: int = 0


def solve_qp(p: QpProblem, tol: float = 1e-10) -> QpSolution:
    """Dual active-set solve; requires B positive definite."""
    n = p.g.size
    m_eq = p.A_eq.shape[0]
    m_in = p.A_in.shape[0]

    try:
        L = np.linalg.cholesky(p.B)
    except np.linalg.LinAlgError:
        raise ValueError("B must be positive definite") from None

    def b_solve(v):
        return np.linalg.solve(L.T, np.linalg.solve(L, v))

    # constraints in n_i'd >= c_i form; equalities may carry a flipped sign
    normals = np.vstack([-p.A_eq, -p.A_in])
    rhs = np.concatenate([p.b_eq, p.b_in])
    eq_sign = np.ones(m_eq)

    x = -b_solve(p.g)
    active: list[int] = []  # constraint indices, equalities stay in front
    u: list[float] = []

    max_iter = 50 * (n + m_eq + m_in + 1)
    it = 0

    def directions(idx_p):
        """Primal direction z and dual sensitivity r for candidate normal."""
        npv = normals[idx_p]
        if not active:
            return b_solve(npv), np.zeros(0)
        N = normals[active].T  # (n, q)
        BiN = np.apply_along_axis(b_solve, 0, N)
        G = N.T @ BiN
        r = np.linalg.solve(G, BiN.T @ npv)
        z = b_solve(npv) - BiN @ r
        return z, r

    def most_violated():
        # equalities first (forced in), then worst inequality
        for j in range(m_eq):
            if j in active:
                continue
            s = normals[j] @ x - rhs[j]
            if abs(s) > tol:
                if s > 0:
                    normals[j] = -normals[j]
                    rhs[j] = -rhs[j]
                    eq_sign[j] = -eq_sign[j]
                return j
            return j  # equality satisfied but must still be pinned active
        if m_in == 0:
            return None
        s = normals[m_eq:] @ x - rhs[m_eq:]
        s[[i - m_eq for i in active if i >= m_eq]] = np.inf
        worst = int(np.argmin(s))
        if s[worst] < -max(tol, tol * np.max(np.abs(rhs[m_eq:]) + 1)):
            return m_eq + worst
        return None

    while it < max_iter:
        it += 1
        pidx = most_violated()
        if pidx is None:
            break
        u_p = 0.0
        # inner loop: resolve constraint pidx, dropping blockers as needed
        while True:
            it += 1
            if it > max_iter:
                return _finish(p, x, active, u, eq_sign, m_eq, "max_iter", it)
            z, r = directions(pidx)
            s_p = normals[pidx] @ x - rhs[pidx]
            # partial step bound from active inequalities
            t1 = np.inf
            k_block = -1
            for pos, idx in enumerate(active):
                if idx < m_eq:
                    continue
                if r.size and r[pos] > _ZTOL:
                    cand = u[pos] / r[pos]
                    if cand < t1 - 1e-14:
                        t1, k_block = cand, pos
            denom = z @ normals[pidx]
            t2 = np.inf if denom <= _ZTOL else -s_p / denom
            if t2 < 0:
                t2 = 0.0
            t = min(t1, t2)
            if not np.isfinite(t):
                return _finish(p, x, active, u, eq_sign, m_eq, "infeasible", it)
            if np.isfinite(t2):
                x = x + t * z
            for pos in range(len(u)):
                if r.size:
                    u[pos] -= t * r[pos]
            u_p += t
            if t == t2 and np.isfinite(t2):
                active.append(pidx)
                u.append(u_p)
                break
            # dropped a blocking inequality; keep resolving the same pidx
            active.pop(k_block)
            u.pop(k_block)
            if not np.isfinite(t2) and t1 <= 0:
                return _finish(p, x, active, u, eq_sign, m_eq, "infeasible", it)

    return _finish(p, x, active, u, eq_sign, m_eq, "optimal", it)


def _finish(p, x, active, u, eq_sign, m_eq, status, it) -> QpSolution:
    lam = np.zeros(m_eq)
    mu = np.zeros(p.A_in.shape[0])
    for pos, idx in enumerate(active):
        if idx < m_eq:
            lam[idx] = eq_sign[idx] * u[pos]
        else:
            mu[idx - m_eq] = max(u[pos], 0.0)
    if status == "optimal" and active:
        # one KKT solve on the terminal active set removes drift accumulated
        # over many partial steps (matters when B is nearly singular)
        A_act = np.vstack(
            [p.A_eq[i] if i < m_eq else p.A_in[i - m_eq] for i in active]
        )
        b_act = np.array(
            [p.b_eq[i] if i < m_eq else p.b_in[i - m_eq] for i in active]
        )
        q = len(active)
        n = p.g.size
        K = np.block([[p.B, A_act.T], [A_act, np.zeros((q, q))]])
        try:
            sol = np.linalg.solve(K, np.concatenate([-p.g, -b_act]))
            d_ref, m_ref = sol[:n], sol[n:]
            ineq_ok = all(
                m_ref[pos] >= -1e-9 for pos, idx in enumerate(active) if idx >= m_eq
            )
            if ineq_ok and np.all(np.isfinite(d_ref)):
                x = d_ref
                for pos, idx in enumerate(active):
                    if idx < m_eq:
                        lam[idx] = m_ref[pos]
                    else:
                        mu[idx - m_eq] = max(m_ref[pos], 0.0)
        except np.linalg.LinAlgError:
            pass
    if status == "optimal":
        # stationarity/feasibility sanity; demote to max_iter if violated
        d_scale = 1 + np.max(np.abs(x)) if x.size else 1.0
        n_scale = 1 + np.max(np.abs(p.g)) + np.max(np.abs(p.B)) * d_scale
        stat = p.B @ x + p.g + p.A_eq.T @ lam + p.A_in.T @ mu
        feas = 0.0
        if p.A_eq.shape[0]:
            feas = max(feas, np.max(np.abs(p.A_eq @ x + p.b_eq)))
        if p.A_in.shape[0]:
            feas = max(feas, np.max(p.A_in @ x + p.b_in))
        if np.max(np.abs(stat)) > 1e-7 * n_scale or feas > 1e-7 * d_scale:
            status = "max_iter"
    return QpSolution(d=x, lam=lam, mu=mu, status=status, iterations=it)
