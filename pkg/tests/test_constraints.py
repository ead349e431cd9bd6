import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_constraints
from ptctr.constraints import (DegenerateConstraintsError, RankPolicy, RawConstraints,
                               apply_projector, project_point, reduce)

dims = st.integers(1, 12)
seeds = st.integers(0, 2**32 - 1)


def _rc(A, b, **kw):
    return reduce(RawConstraints(A, b), **kw)


def test_identity_reduction():
    rc = _rc(np.eye(2), [3.0, 4.0])
    assert rc.rank == 2
    assert np.allclose(np.abs(rc.basis), np.eye(2))
    # the reduced plane is the single point (3, 4) whatever the SVD signs
    assert np.allclose(rc.particular_point(), [3.0, 4.0])


def test_rank_one_duplicate_rows():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    rc = _rc(A, [4.0, 8.0])
    assert rc.rank == 1
    assert np.allclose(np.abs(rc.basis[:, 0]), [1 / np.sqrt(2)] * 2)
    assert abs(abs(rc.rhs[0]) - 4 / np.sqrt(2)) < 1e-12
    xp = rc.particular_point()
    assert np.allclose(A @ xp, [4.0, 8.0])
    assert rc.consistent


def test_singular_values_descending_and_positive():
    A, b = random_constraints(3, 6, 9, rank=4)
    rc = _rc(A, b)
    assert rc.rank == 4
    assert np.all(np.diff(rc.singular_values) <= 0)
    assert rc.singular_values[-1] > 0


def test_zero_matrix_is_degenerate():
    with pytest.raises(DegenerateConstraintsError, match="degenerate constraints"):
        _rc(np.zeros((2, 3)), [1.0, 2.0])


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        RawConstraints(np.ones((2, 3)), np.ones(3))


def test_reduce_rejects_other_types():
    with pytest.raises(TypeError):
        reduce((np.eye(2), np.ones(2)))


@pytest.mark.parametrize("thr", [0.0, 1.0, -1e-3, 2.0])
def test_rank_policy_bounds(thr):
    with pytest.raises(ValueError):
        RankPolicy(thr)


def test_rank_policy_threshold_changes_rank():
    A = np.diag([1.0, 1e-6, 1e-12])
    b = np.zeros(3)
    assert _rc(A, b).rank == 2
    assert _rc(A, b, policy=RankPolicy(1e-3)).rank == 1


def test_inconsistent_system_is_least_squares_relaxation():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 3.0])
    rc = _rc(A, b)
    assert rc.rank == 1
    assert not rc.consistent
    # least-squares solutions satisfy x1 + x2 = 2
    x = project_point(rc, np.array([5.0, -1.0]))
    assert abs(x.sum() - 2.0) < 1e-12
    assert abs(rc.inconsistency - 1.0) < 1e-12


def test_project_feasible_point_is_fixed():
    rc = _rc(np.array([[1.0, 1.0]]), [4.0])
    x = np.array([1.5, 2.5])
    assert np.allclose(project_point(rc, x), x, atol=1e-12)


def test_project_origin_onto_line():
    # Lagrange: min ||x||^2 s.t. x1 + x2 = 4 -> (2, 2)
    rc = _rc(np.array([[1.0, 1.0]]), [4.0])
    assert np.allclose(project_point(rc, np.zeros(2)), [2.0, 2.0], atol=1e-12)


def test_project_single_row_closed_form():
    a = np.array([[1.0, 4.0, 2.0]])
    x0 = np.array([-0.5, 1.5, 1.0])
    rc = _rc(a, [3.0])
    expected = x0 + a.T @ np.linalg.solve(a @ a.T, np.array([3.0]) - a @ x0)
    x = project_point(rc, x0)
    assert np.allclose(x, expected, atol=1e-12)
    assert abs(a @ x - 3.0)[0] < 1e-12


def test_project_dimension_mismatch():
    rc = _rc(np.array([[1.0, 1.0]]), [4.0])
    with pytest.raises(ValueError):
        project_point(rc, np.zeros(3))
    with pytest.raises(ValueError):
        apply_projector(rc, np.zeros(3))


def test_projector_annihilates_normals_and_fixes_tangents(rng):
    A, b = random_constraints(1, 2, 6)
    rc = _rc(A, b)
    v = rc.basis @ rng.standard_normal(2)
    assert np.allclose(apply_projector(rc, v), 0.0, atol=1e-12)
    w = rng.standard_normal(6)
    w -= rc.basis @ (rc.basis.T @ w)
    assert np.allclose(apply_projector(rc, w), w, atol=1e-12)


def test_projector_matches_dense_oracle(rng):
    A, b = random_constraints(2, 2, 6)
    rc = _rc(A, b)
    v = rng.standard_normal(6)
    # oracle built from A directly, independent of the SVD
    P = np.eye(6) - A.T @ np.linalg.solve(A @ A.T, A)
    assert np.allclose(apply_projector(rc, v), P @ v, atol=1e-12)


def test_reduced_structure_invariants():
    A, b = random_constraints(7, 5, 8, rank=3)
    rc = _rc(A, b)
    V = rc.basis
    assert np.linalg.norm(V.T @ V - np.eye(rc.rank), "fro") <= 1e-12
    P = rc.dense_projector()
    assert np.max(np.abs(P - P.T)) <= 1e-12
    assert np.max(np.abs(P @ P - P)) <= 1e-12
    assert np.max(np.abs(P @ V)) <= 1e-12
    assert rc.rank <= min(A.shape)
    assert rc.rank == np.linalg.matrix_rank(A)


def test_multipliers_reconstruct_projected_gradient(rng):
    A, b = random_constraints(5, 3, 7)
    rc = _rc(A, b)
    g = rng.standard_normal(7)
    lam = rc.multipliers(g)
    assert np.allclose(g + A.T @ lam, apply_projector(rc, g), atol=1e-10)


@given(seed=seeds, m=dims, n=dims, data=st.data())
def test_projector_properties(seed, m, n, data):
    rank = data.draw(st.integers(1, min(m, n)))
    A, b = random_constraints(seed, m, n, rank)
    rc = _rc(A, b)
    rng = np.random.default_rng(seed + 1)
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    Pu, Pv = apply_projector(rc, u), apply_projector(rc, v)
    assert np.allclose(apply_projector(rc, Pu), Pu, atol=1e-10)
    assert abs(Pu @ v - u @ Pv) <= 1e-10 * (1 + np.linalg.norm(u) * np.linalg.norm(v))
    assert np.linalg.norm(Pu) <= np.linalg.norm(u) * (1 + 1e-12)
    x = project_point(rc, 10 * rng.standard_normal(n))
    assert np.max(np.abs(rc.residual(x))) <= 1e-10 * (1 + np.linalg.norm(rc.rhs))
    assert np.max(np.abs(A @ x - b)) <= 1e-8 * (1 + np.max(np.abs(b)))


@given(seed=seeds, n=st.integers(2, 10))
def test_projection_is_closest_feasible_point(seed, n):
    A, b = random_constraints(seed, 1 + seed % (n - 1), n)
    rc = _rc(A, b)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(n)
    x = project_point(rc, x0)
    # any other feasible point is farther from x0
    other = x + apply_projector(rc, rng.standard_normal(n))
    assert np.linalg.norm(x - x0) <= np.linalg.norm(other - x0) + 1e-12
