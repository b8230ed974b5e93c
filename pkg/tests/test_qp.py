"""Tests for the dense convex QP solver.

The main oracle is brute-force enumeration over active sets: for every subset
of inequality constraints, solve the corresponding KKT system directly and
keep the best feasible candidate with nonnegative multipliers.
"""

import itertools

import numpy as np
import pytest

from surropt.qp import QpProblem, QpSolution, solve_qp


def _objective(p: QpProblem, d: np.ndarray) -> float:
    return float(0.5 * d @ p.B @ d + p.g @ d)


def enumerate_qp(p: QpProblem, tol=1e-9):
    """Reference solve by trying every active subset of the inequalities."""
    n = p.g.size
    m_in = p.A_in.shape[0]
    best = None
    for r in range(m_in + 1):
        for subset in itertools.combinations(range(m_in), r):
            A = np.vstack([p.A_eq, p.A_in[list(subset)]])
            b = np.concatenate([p.b_eq, p.b_in[list(subset)]])
            q = A.shape[0]
            K = np.block([[p.B, A.T], [A, np.zeros((q, q))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-p.g, -b]))
            except np.linalg.LinAlgError:
                continue
            d, mults = sol[:n], sol[n + p.A_eq.shape[0] :]
            if m_in and np.max(p.A_in @ d + p.b_in) > tol:
                continue
            if mults.size and np.min(mults) < -tol:
                continue
            obj = _objective(p, d)
            if best is None or obj < best[0] - 1e-12:
                best = (obj, d)
    return best


def random_qp(rng, n_max=5, m_max=4, with_eq=True):
    n = int(rng.integers(1, n_max + 1))
    M = rng.normal(size=(n, n))
    B = M @ M.T + (0.1 + rng.uniform()) * np.eye(n)
    g = rng.normal(scale=2.0, size=n)
    m_in = int(rng.integers(0, m_max + 1))
    A_in = rng.normal(size=(m_in, n))
    b_in = rng.normal(size=m_in)
    m_eq = int(rng.integers(0, min(2, n))) if with_eq else 0
    A_eq = rng.normal(size=(m_eq, n))
    b_eq = rng.normal(scale=0.5, size=m_eq)
    return QpProblem(B=B, g=g, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)


def kkt_residuals(p: QpProblem, s: QpSolution):
    stat = p.B @ s.d + p.g + p.A_eq.T @ s.lam + p.A_in.T @ s.mu
    eq = np.abs(p.A_eq @ s.d + p.b_eq) if p.A_eq.shape[0] else np.zeros(0)
    slack = p.A_in @ s.d + p.b_in if p.A_in.shape[0] else np.zeros(0)
    return stat, eq, slack


# ---------------------------------------------------------------------------
# Closed-form cases
# ---------------------------------------------------------------------------


def test_unconstrained_minimizer():
    B = np.array([[4.0, 1.0], [1.0, 3.0]])
    g = np.array([1.0, -2.0])
    s = solve_qp(QpProblem(B=B, g=g))
    assert s.status == "optimal"
    assert np.allclose(s.d, -np.linalg.solve(B, g), atol=1e-12)
    assert s.mu.size == 0 and s.lam.size == 0


def test_single_active_bound():
    # min 1/2 d^2 + d  s.t. d >= 0   (written as -d <= 0)
    s = solve_qp(
        QpProblem(
            B=np.array([[1.0]]),
            g=np.array([1.0]),
            A_in=np.array([[-1.0]]),
            b_in=np.array([0.0]),
        )
    )
    assert s.status == "optimal"
    assert abs(s.d[0]) <= 1e-10
    assert abs(s.mu[0] - 1.0) <= 1e-10  # gradient balanced by the bound


def test_inactive_constraint_zero_multiplier():
    # unconstrained optimum d=-1 already satisfies d <= 5
    s = solve_qp(
        QpProblem(
            B=np.array([[2.0]]),
            g=np.array([2.0]),
            A_in=np.array([[1.0]]),
            b_in=np.array([-5.0]),
        )
    )
    assert s.status == "optimal"
    assert abs(s.d[0] + 1.0) <= 1e-10
    assert s.mu[0] == 0.0


def test_equality_closed_form():
    B = np.diag([2.0, 4.0])
    g = np.array([-1.0, -1.0])
    A = np.array([[1.0, 1.0]])
    b = np.array([-1.0])  # d1 + d2 = 1
    s = solve_qp(QpProblem(B=B, g=g, A_eq=A, b_eq=b))
    K = np.block([[B, A.T], [A, np.zeros((1, 1))]])
    ref = np.linalg.solve(K, np.concatenate([-g, -b]))
    assert s.status == "optimal"
    assert np.allclose(s.d, ref[:2], atol=1e-10)
    assert np.allclose(s.lam, ref[2:], atol=1e-10)


def test_infeasible_inequalities():
    # d <= 0 and d >= 1 simultaneously
    s = solve_qp(
        QpProblem(
            B=np.array([[1.0]]),
            g=np.array([0.0]),
            A_in=np.array([[1.0], [-1.0]]),
            b_in=np.array([0.0, 1.0]),
        )
    )
    assert s.status == "infeasible"


def test_rejects_indefinite_hessian():
    with pytest.raises(ValueError, match="positive definite"):
        solve_qp(QpProblem(B=np.array([[-1.0]]), g=np.array([1.0])))


def test_rejects_asymmetric_hessian():
    B = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        QpProblem(B=B, g=np.zeros(2))


def test_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        QpProblem(B=np.eye(3), g=np.zeros(2))
    with pytest.raises(ValueError):
        QpProblem(B=np.eye(2), g=np.zeros(2), A_in=np.ones((1, 3)), b_in=np.ones(1))


# ---------------------------------------------------------------------------
# Enumeration oracle and KKT invariants
# ---------------------------------------------------------------------------


def test_random_qps_match_enumeration():
    rng = np.random.default_rng(2024)
    n_solved = 0
    for _ in range(150):
        p = random_qp(rng)
        ref = enumerate_qp(p)
        s = solve_qp(p)
        if ref is None:
            assert s.status == "infeasible"
            continue
        assert s.status == "optimal"
        assert abs(_objective(p, s.d) - ref[0]) <= 1e-8 * (1 + abs(ref[0]))
        n_solved += 1
    assert n_solved > 100  # sanity: the generator mostly makes feasible QPs


def test_kkt_invariants_on_random_qps():
    rng = np.random.default_rng(7)
    for _ in range(150):
        p = random_qp(rng)
        s = solve_qp(p)
        if s.status != "optimal":
            continue
        stat, eq, slack = kkt_residuals(p, s)
        scale = 1 + np.max(np.abs(p.g)) + np.max(np.abs(p.B)) * (1 + np.max(np.abs(s.d)))
        assert np.max(np.abs(stat)) <= 1e-7 * scale
        if eq.size:
            assert np.max(eq) <= 1e-7 * (1 + np.max(np.abs(s.d)))
        if slack.size:
            assert np.max(slack) <= 1e-7 * (1 + np.max(np.abs(s.d)))
            assert np.min(s.mu) >= 0.0
            # complementary slackness
            assert np.max(np.abs(s.mu * slack)) <= 1e-6 * scale


def test_objective_scaling_invariance():
    # scaling B and g by c > 0 leaves d unchanged and scales multipliers by c
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = random_qp(rng, with_eq=False)
        s1 = solve_qp(p)
        if s1.status != "optimal":
            continue
        c = 7.5
        p2 = QpProblem(B=c * p.B, g=c * p.g, A_in=p.A_in.copy(), b_in=p.b_in.copy())
        s2 = solve_qp(p2)
        assert s2.status == "optimal"
        assert np.allclose(s2.d, s1.d, atol=1e-7)
        assert np.allclose(s2.mu, c * s1.mu, atol=1e-6 * (1 + c * np.max(np.abs(s1.mu), initial=0)))


def test_reported_iterations_positive():
    p = random_qp(np.random.default_rng(3))
    s = solve_qp(p)
    assert s.iterations >= 1
