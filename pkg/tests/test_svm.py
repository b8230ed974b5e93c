"""Tests for the soft-margin SVM feasibility classifier."""

import numpy as np
import pytest

from surropt.problems import problem_spec
from surropt.qp import QpProblem, solve_qp
from surropt.sampling import label_feasibility, lhs
from surropt.svm import (
    SvmModel,
    accept_all_model,
    conservative_retrain,
    svm_deserialize,
    svm_serialize,
    train_svm,
)


def _blobs(n=100, margin=0.5, seed=0):
    """Linearly separable 2-D blobs with the given margin around x1 = 0."""
    rng = np.random.default_rng(seed)
    half = n // 2
    pos = np.column_stack([rng.uniform(margin, 3.0, half), rng.uniform(-2, 2, half)])
    neg = np.column_stack([rng.uniform(-3.0, -margin, n - half), rng.uniform(-2, 2, n - half)])
    X = np.vstack([pos, neg])
    y = np.array([1] * half + [-1] * (n - half))
    return X, y


# ---------------------------------------------------------------------------
# train_svm


def test_two_point_linear_boundary():
    X = np.array([[0.0], [1.0]])
    y = np.array([1, -1])
    m = train_svm(X, y, kernel="linear")
    assert m.predict(np.array([0.0]))[0] == 1
    assert m.predict(np.array([1.0]))[0] == -1
    # symmetric pair: boundary at the midpoint
    assert m.decision(np.array([0.5])) == pytest.approx(0.0, abs=1e-9)


def test_xor_rbf():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1, 1, -1, -1])
    m = train_svm(X, y, kernel="rbf", gamma=1.0, C=10.0)
    pred = m.predict_batch(X)
    assert np.array_equal(pred, y)


def test_separable_blobs_perfect_accuracy():
    X, y = _blobs()
    m = train_svm(X, y)
    assert np.array_equal(m.predict_batch(X), y)


def test_single_class_raises():
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(ValueError):
        train_svm(X, np.ones(10))


def test_duplicate_points_opposite_labels_terminates():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    y = np.array([1, -1, 1, -1])
    m = train_svm(X, y)  # soft margin absorbs the contradiction
    assert isinstance(m, SvmModel)


def test_alpha_within_box():
    X, y = _blobs(seed=3)
    m = train_svm(X, y, C=10.0)
    assert np.all(m.support_alpha >= 0)
    assert np.all(m.support_alpha <= 10.0 + 1e-9)


def test_batch_equals_pointwise():
    X, y = _blobs(n=40, seed=1)
    m = train_svm(X, y)
    Z = np.random.default_rng(2).uniform(-3, 3, size=(25, 2))
    batch = m.predict_batch(Z)
    point = np.array([m.predict(z)[0] for z in Z])
    assert np.array_equal(batch, point)


def test_dual_objective_matches_qp_oracle():
    # solve the SVM dual as a dense QP (bounds + one equality) and compare
    X, y = _blobs(n=24, seed=5)
    C = 10.0
    m = train_svm(X, y, C=C)
    Xs = (X - m.x_shift) / m.x_scale
    sq = np.sum(Xs**2, axis=1)
    K = np.exp(-m.gamma * np.maximum(sq[:, None] + sq[None, :] - 2 * Xs @ Xs.T, 0))
    yv = y.astype(float)
    Q = np.outer(yv, yv) * K
    n = len(y)
    ridge = 1e-8
    sol = solve_qp(
        QpProblem(
            B=Q + ridge * np.eye(n),
            g=-np.ones(n),
            A_eq=yv[None, :],
            b_eq=np.zeros(1),
            A_in=np.vstack([np.eye(n), -np.eye(n)]),
            b_in=np.concatenate([-C * np.ones(n), np.zeros(n)]),
        )
    )
    assert sol.status == "optimal"
    alpha = sol.d
    ref_obj = float(alpha.sum() - 0.5 * alpha @ Q @ alpha)
    assert m.dual_objective == pytest.approx(ref_obj, rel=1e-3)


def test_decision_lipschitz_rbf():
    # |d(x) - d(x+delta)| <= L ||delta|| with L = sum|coef| * sqrt(2*gamma/e)
    X, y = _blobs(n=60, seed=7)
    m = train_svm(X, y)
    L = float(np.sum(np.abs(m.dual_coef))) * np.sqrt(2 * m.gamma / np.e)
    scale_min = float(np.min(m.x_scale))
    rng = np.random.default_rng(11)
    for _ in range(50):
        a = rng.uniform(-3, 3, size=2)
        delta = rng.normal(size=2) * 0.1
        lhs_val = abs(m.decision(a) - m.decision(a + delta))
        assert lhs_val <= L * np.linalg.norm(delta) / scale_min + 1e-12


# ---------------------------------------------------------------------------
# conservative_retrain


def test_retrain_noop_when_support_vectors_feasible():
    X, y = _blobs(n=40, seed=9)
    m = train_svm(X, y)
    feas_sv = np.all(y[m.support_indices] == 1)
    relabeled = y.copy()
    relabeled[m.support_indices] = 1
    if np.array_equal(relabeled, y):
        m2 = conservative_retrain(m, X, y)
        d1 = np.array([m.decision(x) for x in X])
        d2 = np.array([m2.decision(x) for x in X])
        assert np.max(np.abs(d1 - d2)) < 1e-6


def test_retrain_superset_on_camel():
    spec = problem_spec("camel_constrained")
    X = lhs(spec.bounds_lo, spec.bounds_hi, 50, seed=0)
    Y = np.array([spec.evaluate(x) for x in X])
    labels = np.where(label_feasibility(spec, X, Y), 1, -1)
    base = train_svm(X, labels)
    cons = conservative_retrain(base, X, labels)
    base_pos = set(np.where(base.predict_batch(X) == 1)[0].tolist())
    cons_pos = set(np.where(cons.predict_batch(X) == 1)[0].tolist())
    assert base_pos <= cons_pos


def test_retrain_forces_boundary_sv_feasible():
    X, y = _blobs(n=30, margin=0.2, seed=13)
    # flip one positive-side point to infeasible so it becomes a margin SV
    y = y.copy()
    flip = int(np.argmin(np.abs(X[:, 0] - 0.2)))
    y[flip] = -1
    base = train_svm(X, y)
    if flip in base.support_indices:
        cons = conservative_retrain(base, X, y)
        assert cons.predict(X[flip])[0] == 1


def test_retrain_single_class_becomes_accept_all():
    X = np.array([[0.0], [0.2], [1.0], [1.2]])
    y = np.array([1, 1, -1, -1])
    base = train_svm(X, y)
    # if every infeasible row is a support vector, relabeling leaves one class
    if set(base.support_indices.tolist()) >= {2, 3}:
        cons = conservative_retrain(base, X, y)
        assert cons.accept_all
        assert np.all(cons.predict_batch(X) == 1)


def test_accept_all_model():
    m = accept_all_model(3)
    assert m.predict(np.array([5.0, -2.0, 0.0]))[0] == 1
    assert m.decision(np.zeros(3)) > 0


# ---------------------------------------------------------------------------
# serialization


def test_svm_serialization_roundtrip():
    X, y = _blobs(n=30, seed=17)
    m = train_svm(X, y)
    back = svm_deserialize(svm_serialize(m))
    Z = np.random.default_rng(19).uniform(-3, 3, size=(20, 2))
    for z in Z:
        assert back.decision(z) == m.decision(z)


def test_svm_serialization_accept_all():
    m = accept_all_model(2)
    back = svm_deserialize(svm_serialize(m))
    assert back.accept_all
    assert back.predict(np.zeros(2))[0] == 1


def test_svm_deserialize_rejects_garbage():
    with pytest.raises(ValueError):
        svm_deserialize("not a model\n")
