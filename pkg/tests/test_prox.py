import numpy as np
import pytest

from modet.groups import GroupStructure, build_grid_groups, omega_norm
from modet.prox import (
    DualState,
    _project_l1_rows,
    oracle_prox,
    project_l1_ball,
    structured_prox,
    structured_prox_dual,
)


def two_group_structure():
    return GroupStructure([np.arange(0, 6), np.arange(3, 9)], [1.0, 1.0], 9)


def primal_objective(u, s, g, lam2):
    return 0.5 * np.sum((u - s) ** 2) + lam2 * omega_norm(s, g)


def simplex_grid_oracle_3d(v, radius, rounds=4, n=201):
    """Refined grid search over |x| on the simplex sum=radius (3d only).

    Valid when ||v||_1 > radius, where the projection saturates the ball.
    """
    a = np.abs(v)
    lo = np.zeros(2)
    hi = np.full(2, radius)
    c0 = c1 = 0.0
    for _ in range(rounds):
        w0 = np.linspace(lo[0], hi[0], n)
        w1 = np.linspace(lo[1], hi[1], n)
        W0, W1 = np.meshgrid(w0, w1, indexing="ij")
        W2 = radius - W0 - W1
        obj = (W0 - a[0]) ** 2 + (W1 - a[1]) ** 2
        obj = obj + np.where(W2 >= 0, (W2 - a[2]) ** 2, np.inf)
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        c0, c1 = w0[i], w1[j]
        step0 = (hi[0] - lo[0]) / (n - 1)
        step1 = (hi[1] - lo[1]) / (n - 1)
        lo = np.array([max(0.0, c0 - 2 * step0), max(0.0, c1 - 2 * step1)])
        hi = np.array([min(radius, c0 + 2 * step0), min(radius, c1 + 2 * step1)])
    w = np.array([c0, c1, radius - c0 - c1])
    return np.sign(v) * np.maximum(w, 0.0)


class TestProjectL1Ball:
    def test_axis_aligned_shrink(self):
        assert project_l1_ball(np.array([3.0, 0.0]), 1.0).tolist() == [1.0, 0.0]

    def test_interior_point_unchanged(self):
        v = np.array([0.2, -0.1, 0.05])
        out = project_l1_ball(v, 1.0)
        assert np.array_equal(out, v)

    def test_zero_radius(self):
        assert not project_l1_ball(np.array([1.0, -2.0]), 0.0).any()

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            project_l1_ball(np.array([1.0]), -0.1)

    def test_matches_simplex_grid_search(self):
        v = np.array([0.6, -0.4, 0.2])
        got = project_l1_ball(v, 0.5)
        ref = simplex_grid_oracle_3d(v, 0.5)
        assert np.abs(got - ref).max() < 1e-6
        # frozen from the grid oracle (exact value of this instance)
        assert np.allclose(got, [0.35, -0.15, 0.0], atol=1e-12)

    def test_feasible_and_closest(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            v = rng.normal(size=6)
            r = rng.uniform(0.1, 2.0)
            x = project_l1_ball(v, r)
            assert np.abs(x).sum() <= r + 1e-12
            d_best = np.sum((v - x) ** 2)
            for _ in range(40):
                cand = rng.normal(size=6)
                cand = cand / max(1.0, np.abs(cand).sum() / r)
                assert d_best <= np.sum((v - cand) ** 2) + 1e-12

    def test_rows_variant_matches_1d(self):
        rng = np.random.default_rng(1)
        V = rng.normal(size=(12, 5))
        V[3, 3:] = 0.0  # rows with padding-style zeros
        radii = rng.uniform(0.05, 2.0, size=12)
        radii[5] = 0.0
        out = _project_l1_rows(V, radii)
        for i in range(12):
            assert np.allclose(out[i], project_l1_ball(V[i], radii[i]), atol=1e-14)


class TestStructuredProx:
    def test_zero_input(self):
        g = two_group_structure()
        assert not structured_prox(np.zeros(9), g, 0.5).any()

    def test_full_shrinkage_single_group(self):
        g = GroupStructure([list(range(9))], [1.0], 9)
        rng = np.random.default_rng(2)
        u = rng.uniform(-1, 1, 9)
        lam2 = np.abs(u).sum()  # ball contains u exactly at the boundary
        s = structured_prox(u, g, lam2)
        assert np.abs(s).max() <= 1e-14

    def test_matches_oracle_on_overlapping_groups(self):
        g = two_group_structure()
        rng = np.random.default_rng(3)
        for _ in range(10):
            u = rng.uniform(-1, 1, 9)
            s = structured_prox(u, g, 0.3, tol=1e-11, max_iters=5000)
            ref = oracle_prox(u, g, 0.3)
            assert np.abs(s - ref).max() < 1e-5

    def test_moreau_identity_single_group(self):
        g = GroupStructure([list(range(7))], [1.0], 7)
        rng = np.random.default_rng(4)
        for _ in range(20):
            u = rng.normal(size=7)
            lam2 = rng.uniform(0.1, 2.0)
            s = structured_prox(u, g, lam2)
            assert np.abs(s + project_l1_ball(u, lam2) - u).max() < 1e-10

    def test_nonexpansive(self):
        g = build_grid_groups(4, 4)
        rng = np.random.default_rng(5)
        for _ in range(15):
            u1 = rng.normal(size=16)
            u2 = rng.normal(size=16)
            s1 = structured_prox(u1, g, 0.2, tol=1e-11, max_iters=3000)
            s2 = structured_prox(u2, g, 0.2, tol=1e-11, max_iters=3000)
            assert np.linalg.norm(s1 - s2) <= np.linalg.norm(u1 - u2) + 1e-9

    def test_optimality_certificate(self):
        g = build_grid_groups(4, 4)
        rng = np.random.default_rng(6)
        u = rng.uniform(-1, 1, 16)
        lam2 = 0.15
        s = structured_prox(u, g, lam2, tol=1e-12, max_iters=10000)
        base = primal_objective(u, s, g, lam2)
        for _ in range(50):
            direction = rng.normal(size=16)
            direction /= np.linalg.norm(direction)
            for sign in (1.0, -1.0):
                perturbed = primal_objective(u, s + sign * 1e-3 * direction, g, lam2)
                assert base <= perturbed + 1e-9

    def test_primal_dual_identity(self):
        g = two_group_structure()
        rng = np.random.default_rng(7)
        u = rng.uniform(-1, 1, 9)
        s, state, _, _ = structured_prox_dual(u, g, 0.4)
        scatter = np.zeros(10)
        np.add.at(scatter, g.index_matrix.ravel(), state.xi.ravel())
        assert np.abs(s - (u - scatter[:9])).max() < 1e-12
        assert np.abs(state.residual - (u - scatter[:9])).max() < 1e-12
        # dual feasibility
        assert (np.abs(state.xi).sum(axis=1) <= 0.4 + 1e-12).all()

    def test_shrinkage_monotone_in_lambda2(self):
        g = build_grid_groups(4, 4)
        rng = np.random.default_rng(8)
        for _ in range(10):
            u = rng.uniform(-1, 1, 16)
            lams = sorted(rng.uniform(0.01, 1.0, size=3))
            omegas = [
                omega_norm(structured_prox(u, g, lam, tol=1e-11, max_iters=3000), g)
                for lam in lams
            ]
            assert omegas[0] >= omegas[1] - 1e-10
            assert omegas[1] >= omegas[2] - 1e-10

    def test_dual_objective_nonincreasing_over_sweeps(self):
        g = build_grid_groups(5, 5)
        rng = np.random.default_rng(9)
        u = rng.uniform(-1, 1, 25)
        objs = []
        for k in range(1, 13):
            _, state, _, _ = structured_prox_dual(u, g, 0.2, tol=0.0, max_iters=k)
            objs.append(0.5 * np.sum(state.residual**2))
        assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))

    def test_sweep_orders_agree(self):
        g = build_grid_groups(5, 5)
        rng = np.random.default_rng(10)
        u = rng.uniform(-1, 1, 25)
        kw = dict(tol=1e-12, max_iters=20000)
        s_seq, _, _, _ = structured_prox_dual(u, g, 0.2, order="sequential", **kw)
        s_col, _, _, _ = structured_prox_dual(u, g, 0.2, order="colored", **kw)
        perm = rng.permutation(g.n_groups)
        s_perm, _, _, _ = structured_prox_dual(u, g, 0.2, order=perm, **kw)
        assert np.abs(s_seq - s_col).max() < 1e-9
        assert np.abs(s_seq - s_perm).max() < 1e-9

    def test_warm_start_reaches_same_answer(self):
        g = two_group_structure()
        rng = np.random.default_rng(11)
        u1 = rng.uniform(-1, 1, 9)
        u2 = u1 + 0.05 * rng.normal(size=9)
        _, state, _, _ = structured_prox_dual(u1, g, 0.3, tol=1e-11, max_iters=5000)
        warm, _, _, _ = structured_prox_dual(
            u2, g, 0.3, tol=1e-11, max_iters=5000, init=state
        )
        cold, _, _, _ = structured_prox_dual(u2, g, 0.3, tol=1e-11, max_iters=5000)
        assert np.abs(warm - cold).max() < 1e-8

    def test_rejects_bad_inputs(self):
        g = two_group_structure()
        with pytest.raises(ValueError):
            structured_prox(np.full(9, np.nan), g, 0.3)
        with pytest.raises(ValueError):
            structured_prox(np.zeros(8), g, 0.3)
        with pytest.raises(ValueError):
            structured_prox(np.zeros(9), g, 0.0)
        with pytest.raises(ValueError):
            structured_prox_dual(np.zeros(9), g, 0.3, order="sideways")
        with pytest.raises(ValueError):
            structured_prox_dual(
                np.zeros(9), g, 0.3, init=DualState(np.zeros((3, 4)), np.zeros(9))
            )


class TestOracleProx:
    def test_single_group_moreau(self):
        g = GroupStructure([list(range(6))], [1.0], 6)
        rng = np.random.default_rng(12)
        u = rng.normal(size=6)
        ref = u - project_l1_ball(u, 0.7)
        assert np.abs(oracle_prox(u, g, 0.7) - ref).max() < 1e-7

    def test_hand_worked_two_pixel_case(self):
        g = GroupStructure([[0, 1]], [1.0], 2)
        s = oracle_prox(np.array([1.0, 1.0]), g, 0.5)
        # l1 projection of (1,1) to radius 0.5 is (0.25,0.25)
        assert np.allclose(s, [0.75, 0.75], atol=1e-7)

    def test_disjoint_groups_separable(self):
        g = GroupStructure([[0, 1, 2], [3, 4, 5]], [1.0, 1.0], 6)
        rng = np.random.default_rng(13)
        u = rng.normal(size=6)
        s = oracle_prox(u, g, 0.4)
        for block in (slice(0, 3), slice(3, 6)):
            sub = GroupStructure([[0, 1, 2]], [1.0], 3)
            assert np.abs(s[block] - oracle_prox(u[block], sub, 0.4)).max() < 1e-7

    def test_desk_scale_limits(self):
        g = build_grid_groups(10, 10)
        with pytest.raises(ValueError):
            oracle_prox(np.zeros(100), g, 0.3)
