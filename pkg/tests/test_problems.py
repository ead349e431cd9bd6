import numpy as np
import pytest

from ptctr.constraints import project_point, reduce
from ptctr.problems import (EXAMPLE_IDS, PRESETS, REFERENCE_F_1000, REFERENCE_F_5000, analytic_oracle,
                            block_oracle, block_size, divisor, make_example, parse_problem_id)
from ptctr.solver import Status, solve

# m as a fraction of n, per example
ROW_RATIO = {1: 1 / 2, 2: 1 / 3, 3: 2 / 3, 4: 1 / 2, 5: 1 / 2,
             6: 2 / 3, 7: 1 / 2, 8: 1 / 3, 9: 1 / 2, 10: 1 / 3}
# first constraint row restricted to the first block, and its right-hand side
FIRST_ROW = {1: ([1, 1], 4), 2: ([1, 4, 2], 3), 3: ([1, 2, 1], 1), 4: ([1, 1], 1),
             5: ([1, 4], 3), 6: ([1, 2, 1], 1), 7: ([1, 1], 4), 8: ([2, 5, 1], 3),
             9: ([1, 1], 4), 10: ([1, 2, 2], 1)}
FEASIBLE_START = {1, 5, 9, 10}


def _x0_expected(example, n):
    if example in (1, 9):
        return np.full(n, 2.0)
    if example == 2:
        return np.r_[-0.5, 1.5, 1.0, np.zeros(n - 3)]
    if example == 3:
        return np.tile([1.0, 0.5, -1.0], n // 3)
    if example == 4:
        return np.ones(n)
    if example == 5:
        return np.tile([-1.0, 1.0], n // 2)
    if example == 6:
        return np.r_[2.0, np.zeros(n - 1)]
    if example == 7:
        return np.r_[2.0, 2.0, np.zeros(n - 2)]
    if example == 8:
        return np.r_[1.5, np.zeros(n - 1)]
    return np.tile([1.0, 0.0, 0.0], n // 3)


def _feasible_points(problem, count, seed):
    rng = np.random.default_rng(seed)
    rc = reduce(problem.constraints)
    return [project_point(rc, rng.uniform(-1.5, 1.5, problem.n)) for _ in range(count)]


def test_example1_dimensions_and_start_value():
    p = make_example(1, 1000)
    assert p.m == 500 and p.n == 1000
    assert np.all(p.x0 == 2.0)
    assert p.f(p.x0) == pytest.approx(22000.0, rel=1e-15)


@pytest.mark.parametrize("example", EXAMPLE_IDS)
def test_row_count_and_pattern(example):
    n = 12
    p = make_example(example, n)
    assert p.m == round(ROW_RATIO[example] * n)
    row, rhs = FIRST_ROW[example]
    A = p.constraints.A
    assert np.array_equal(A[0, :len(row)], row)
    assert np.all(A[0, len(row):] == 0)
    assert p.constraints.b[0] == rhs


def test_two_row_pattern_of_examples_3_and_6():
    for example in (3, 6):
        A = make_example(example, 6).constraints.A
        assert np.array_equal(A[1, :3], [2, -1, -3])
        assert np.array_equal(make_example(example, 6).constraints.b, [1, 4, 1, 4])
        assert np.array_equal(A[2, 3:], [1, 2, 1])


@pytest.mark.parametrize("example", EXAMPLE_IDS)
def test_initial_point_fidelity(example):
    p = make_example(example, 12)
    assert np.array_equal(p.x0, _x0_expected(example, 12))
    residual = np.max(np.abs(p.constraints.residual(p.x0)))
    assert (residual == 0.0) == (example in FEASIBLE_START)


@pytest.mark.parametrize("example", EXAMPLE_IDS)
def test_gradient_matches_central_differences(example):
    p = make_example(example, 12)
    for x in _feasible_points(p, 10, example):
        g = p.grad(x)
        fd = np.empty_like(x)
        for i in range(x.size):
            h = 1e-6 * max(1.0, abs(x[i]))
            e = np.zeros_like(x)
            e[i] = h
            fd[i] = (p.f(x + e) - p.f(x - e)) / (2 * h)
        assert np.max(np.abs(fd - g)) <= 1e-5 * (1 + np.max(np.abs(g)))


@pytest.mark.parametrize("example", EXAMPLE_IDS)
def test_hessian_matches_gradient_differences(example):
    p = make_example(example, 6)
    x = _feasible_points(p, 1, 100 + example)[0]
    H = p.hess(x)
    fd = np.empty_like(H)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1e-6
        fd[:, i] = (p.grad(x + e) - p.grad(x - e)) / 2e-6
    assert np.allclose(H, H.T)
    assert np.max(np.abs(H - fd)) <= 1e-5 * (1 + np.max(np.abs(H)))


@pytest.mark.parametrize("example", EXAMPLE_IDS)
def test_separability(example):
    blk = 6 if example == 2 else block_size(example)
    n = 4 * blk
    p = make_example(example, n)
    small = make_example(example, blk)
    rng = np.random.default_rng(example)
    x = rng.uniform(-1.5, 1.5, n)
    # constants such as Example 2's "- 5" are outside the block sum
    offset = small.f(np.zeros(blk)) * 4 - p.f(np.zeros(n))
    total = sum(small.f(x[i:i + blk]) for i in range(0, n, blk)) - offset
    assert p.f(x) == pytest.approx(total, rel=1e-12, abs=1e-12)
    y = x.copy()
    y[blk:2 * blk] += 0.3
    dg = p.grad(y) - p.grad(x)
    assert np.all(dg[:blk] == 0) and np.all(dg[2 * blk:] == 0)
    assert np.any(dg[blk:2 * blk] != 0)


@pytest.mark.parametrize("example, n", [(0, 6), (11, 6), (1, 3), (3, 4), (2, 9), (1, 0)])
def test_invalid_arguments(example, n):
    with pytest.raises(ValueError):
        make_example(example, n)


def test_divisors():
    assert [divisor(k) for k in EXAMPLE_IDS] == [2, 6, 3, 2, 2, 3, 2, 3, 2, 3]


def test_parse_problem_id():
    assert parse_problem_id("ex7") == 7
    assert parse_problem_id("EX10") == 10
    assert parse_problem_id(" 3 ") == 3
    for bad in ("ex0", "ex11", "foo", ""):
        with pytest.raises(ValueError):
            parse_problem_id(bad)


def test_presets_are_admissible_and_tabulated():
    for scale, table in (("paper1000", REFERENCE_F_1000), ("paper5000", REFERENCE_F_5000)):
        for k, n in PRESETS[scale].items():
            assert n % divisor(k) == 0
            assert (k, n) in table
            known = make_example(k, n).known_f_star
            assert known is not None and table[(k, n)] in known.source


def test_unknown_dimension_has_no_reference_value():
    assert make_example(1, 10).known_f_star is None


def test_oracle_block_values():
    o1 = block_oracle(1, 2)
    assert np.allclose(o1.x_block, [40 / 11, 4 / 11], rtol=1e-14)
    assert o1.f_block == pytest.approx(1760 / 121, rel=1e-14)
    o3 = block_oracle(3, 3)
    assert np.allclose(o3.x_block, [16 / 15, 1 / 3, -11 / 15], rtol=1e-14)
    assert o3.f_block == pytest.approx(402 / 225, rel=1e-14)


@pytest.mark.parametrize("example, n, expected", [
    (1, 1000, 500 * 1760 / 121), (1, 5000, 2500 * 1760 / 121), (3, 4800, 1600 * 402 / 225)])
def test_oracle_totals(example, n, expected):
    x, f = analytic_oracle(example, n)
    assert f == pytest.approx(expected, rel=1e-13)
    assert x.shape == (n,)


def test_oracle_reproduces_known_values():
    for example, n in ((1, 1000), (1, 5000), (3, 1200), (3, 4800)):
        known = make_example(example, n).known_f_star.value
        _, f = analytic_oracle(example, n)
        digits = 1e-5 if n >= 4800 else 5e-3
        assert abs(f - known) <= digits * abs(known)


def test_oracle_rejects_nonquadratic():
    with pytest.raises(ValueError):
        analytic_oracle(2, 6)


@pytest.mark.parametrize("example, n", [(1, 12), (3, 12)])
def test_solver_matches_oracle(example, n):
    report = solve(make_example(example, n))
    x, f = analytic_oracle(example, n)
    assert report.status is Status.CONVERGED
    assert abs(report.f_star - f) <= 1e-8 * abs(f)
    assert np.max(np.abs(report.x_star - x)) <= 1e-6 * (1 + np.max(np.abs(x)))
