import math

import numpy as np
import pytest

from reachflow.numkernel import (INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem,
                                 lp_max, mat_apply, mat_exp)

from oracles import lp_vertex_enum, matvec_loops, taylor_exp


class TestMatExp:
    def test_zero_matrix_is_exact_identity(self):
        out = mat_exp(np.zeros((3, 3)), 0.7)
        assert np.array_equal(out, np.eye(3))

    def test_zero_step_is_exact_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(mat_exp(a, 0.0), np.eye(2))

    def test_planar_rotation_quarter_turn(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        out = mat_exp(a, math.pi / 2)
        expected = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert np.allclose(out, expected, atol=1e-12)
        assert np.allclose(out, taylor_exp(a, math.pi / 2, terms=40), atol=1e-12)

    def test_diagonal_matches_scalar_exp(self):
        a = np.diag([0.3, -1.2, 2.0])
        out = mat_exp(a, 0.5)
        assert np.allclose(np.diag(out), np.exp(np.diag(a) * 0.5), atol=1e-13)

    def test_matches_taylor_oracle_on_random_matrices(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a = rng.normal(size=(4, 4))
            a /= max(1.0, np.linalg.norm(a, np.inf))
            r = rng.uniform(-1.0, 1.0)
            assert np.allclose(mat_exp(a, r), taylor_exp(a, r, terms=40), atol=1e-9)

    def test_semigroup_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            a = rng.normal(size=(4, 4))
            a /= max(1.0, 2.0 * np.linalg.norm(a, np.inf))  # keep it stable
            r1, r2 = rng.uniform(-1.0, 1.0, size=2)
            lhs = mat_exp(a, r1 + r2)
            rhs = mat_exp(a, r1) @ mat_exp(a, r2)
            assert np.allclose(lhs, rhs, atol=1e-9)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            mat_exp(np.zeros((2, 3)))


class TestMatApply:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(5, 5))
        x = rng.normal(size=5)
        assert np.allclose(mat_apply(a, x), matvec_loops(a, x), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mat_apply(np.eye(3), np.ones(2))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            mat_apply(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.ones(2))


def unit_box_constraints(n):
    eye = np.eye(n)
    a = np.vstack([eye, -eye])
    b = np.concatenate([np.ones(n), np.zeros(n)])
    return a, b


class TestLpMax:
    def test_unit_box_corner(self):
        a, b = unit_box_constraints(2)
        res = lp_max(LpProblem([1.0, 1.0], a, b))
        assert res.status == OPTIMAL
        assert res.value == pytest.approx(2.0, abs=1e-9)
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-8)

    def test_infeasible_pair(self):
        # x <= -1 and x >= 0
        res = lp_max(LpProblem([1.0], [[1.0], [-1.0]], [-1.0, 0.0]))
        assert res.status == INFEASIBLE

    def test_unbounded(self):
        res = lp_max(LpProblem([1.0], [[-1.0]], [0.0]))
        assert res.status == UNBOUNDED

    def test_degenerate_tie_picks_lexicographically_smallest(self):
        a, b = unit_box_constraints(2)
        res = lp_max(LpProblem([1.0, 0.0], a, b))  # whole edge x=1 optimal
        assert res.value == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(res.x, [1.0, 0.0], atol=1e-8)

    def test_zero_objective_returns_lexmin_vertex(self):
        a, b = unit_box_constraints(3)
        res = lp_max(LpProblem([0.0, 0.0, 0.0], a, b))
        assert res.value == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(res.x, [0.0, 0.0, 0.0], atol=1e-8)

    def test_matches_vertex_enumeration_oracle(self):
        rng = np.random.default_rng(17)
        for n in (2, 3):
            for _ in range(25):
                # a box plus random cuts, offsets chosen around an interior point
                eye = np.eye(n)
                extra = rng.normal(size=(5, n))
                extra /= np.linalg.norm(extra, axis=1, keepdims=True)
                a = np.vstack([eye, -eye, extra])
                p = rng.uniform(-1.0, 1.0, size=n)
                b = a @ p + rng.uniform(0.2, 2.0, size=a.shape[0])
                c = rng.normal(size=n)
                res = lp_max(LpProblem(c, a, b))
                oracle = lp_vertex_enum(c, a, b)
                assert res.status == OPTIMAL and oracle is not None
                assert res.value == pytest.approx(oracle[0], abs=1e-9)
                assert np.allclose(res.x, oracle[1], atol=1e-7)

    def test_value_dominates_random_feasible_points(self):
        rng = np.random.default_rng(23)
        eye = np.eye(4)
        a = np.vstack([eye, -eye, rng.normal(size=(6, 4))])
        p = rng.uniform(-0.5, 0.5, size=4)
        b = a @ p + rng.uniform(0.5, 1.5, size=a.shape[0])
        c = rng.normal(size=4)
        res = lp_max(LpProblem(c, a, b))
        assert res.status == OPTIMAL
        assert np.all(a @ res.x <= b + 1e-9)
        count = 0
        while count < 1000:
            x = rng.uniform(-3.0, 3.0, size=4)
            if np.all(a @ x <= b):
                assert c @ x <= res.value + 1e-9
                count += 1

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LpProblem([1.0, 2.0], np.eye(3), np.ones(3))
        with pytest.raises(ValueError):
            LpProblem([1.0, 2.0, 3.0], np.eye(3), np.ones(4))

    def test_no_constraints(self):
        res = lp_max(LpProblem([0.0, 0.0], np.zeros((0, 2)), np.zeros(0)))
        assert res.status == OPTIMAL and res.value == 0.0
        res = lp_max(LpProblem([1.0, 0.0], np.zeros((0, 2)), np.zeros(0)))
        assert res.status == UNBOUNDED
