import numpy as np
import pytest

import convdensity as cd
from convdensity.surface import binned_estimates, penalty


def direct_setup(n=400, seed=3, p=2.0, mode="isotropic", d=1, k_min=None):
    target = cd.TargetSpec.gaussian(d=d)
    model = cd.NoiseModel.none(d=d)
    cd.certify_noise(model)
    consts = cd.kernel_constants("smooth", model, p=p)
    grid = cd.build_grid(n, d, model.gamma, mode=mode, k_min=k_min)
    tables = [cd.build_deconv_kernel("smooth", model, h) for h in grid.members]
    sample = cd.sample_model(target, model, n, seed=seed)
    return sample, grid, tables, consts


class TestPenalty:
    def test_unit_bandwidth(self):
        # sup bound forced to 1: only the 6 ln n term survives
        consts = make_consts(sup_bound=1.0, gamma=(0.0,))
        assert penalty([1.0], 50, 2.0, consts) == pytest.approx(6 * np.log(50))

    def test_worked_example(self):
        # d=1, gamma=0, sup bound 1, n=20, p=2, h=e^-2:
        # 6 ln 20 + 42 * 2 = 101.97439...
        consts = make_consts(sup_bound=1.0, gamma=(0.0,))
        value = penalty([np.exp(-2.0)], 20, 2.0, consts)
        assert value == pytest.approx(6 * np.log(20) + 84.0, rel=1e-12)
        assert value == pytest.approx(101.9743936, abs=1e-6)

    def test_increasing_in_log_bandwidth(self):
        consts = make_consts(sup_bound=1.0, gamma=(0.0,))
        assert (penalty([np.exp(-3.0)], 20, 2.0, consts)
                > penalty([np.exp(-2.0)], 20, 2.0, consts))


def make_consts(sup_bound, gamma):
    return cd.KernelConstants(
        kernel_name="smooth", d=len(gamma), gamma=gamma,
        weighted_l1=1.0, weighted_l2=1.0, fourier_l1=1.0, fourier_l2=1.0,
        sup_bound=sup_bound, l2_bound=1.0, p=2.0)


class TestErrorBound:
    def test_worked_example(self):
        # sigma2 = 0.25, n = 100, p = 2, sup bound 1, h = 1:
        # sqrt(2 * 6 ln 100 * 0.25/100) + 4 * 6 ln 100 / 300
        from convdensity.surface import _bound_from_parts

        consts = make_consts(sup_bound=1.0, gamma=(0.0,))
        value, _ = _bound_from_parts(0.25, [1.0], 100, 2.0, consts)
        lam = 6 * np.log(100)
        expect = np.sqrt(2 * lam * 0.25 / 100) + 4 * lam / 300
        assert float(value) == pytest.approx(expect, rel=1e-12)
        assert float(value) == pytest.approx(0.7401058338, abs=1e-9)

    def test_zero_second_moment_leaves_tail(self):
        from convdensity.surface import _bound_from_parts

        consts = make_consts(sup_bound=2.0, gamma=(0.0,))
        lam = penalty([0.5], 100, 2.0, consts)
        value, _ = _bound_from_parts(0.0, [0.5], 100, 2.0, consts)
        assert float(value) == pytest.approx(4 * 2.0 * lam / (3 * 100 * 0.5))

    def test_doubling_n_decreases_bound(self):
        from convdensity.surface import _bound_from_parts

        consts = make_consts(sup_bound=1.5, gamma=(0.0,))
        small, _ = _bound_from_parts(0.3, [0.5], 200, 2.0, consts)
        large, _ = _bound_from_parts(0.3, [0.5], 400, 2.0, consts)
        assert float(large) < float(small)


class TestPointEvaluations:
    def test_single_centered_observation(self):
        sample, grid, tables, consts = direct_setup(n=400)
        x = sample.points[0]
        table = tables[0]
        one = cd.Sample(points=sample.points[:1], seed=0)
        at_zero = float(table([[0.0]])[0])
        assert cd.estimate_at(one, table, x) == pytest.approx(at_zero)
        assert cd.empirical_second_moment(one, table, x) == pytest.approx(
            at_zero ** 2)

    def test_uniform_hand_count(self):
        # three points, unit-support box kernel at h=1: only |z| <= 1 count
        model = cd.NoiseModel.none()
        cd.certify_noise(model)
        table = cd.build_deconv_kernel("uniform", model, [1.0])
        sample = cd.Sample(points=np.array([[-0.4], [0.2], [3.0]]), seed=0)
        assert cd.estimate_at(sample, table, np.zeros(1)) == pytest.approx(1.0 / 3.0)

    def test_far_sample_gives_zero(self):
        sample, grid, tables, consts = direct_setup()
        x = np.array([50.0])
        assert cd.estimate_at(sample, tables[0], x) == 0.0
        assert cd.empirical_second_moment(sample, tables[0], x) == 0.0

    def test_error_bound_positive(self):
        sample, grid, tables, consts = direct_setup()
        val = cd.error_bound(sample, tables[0], np.zeros(1), consts, p=2.0)
        assert val > 0.0


class TestBuildSurface:
    def test_singleton_grid(self):
        sample, grid, tables, consts = direct_setup(n=100, k_min=0)
        assert grid.size == 1
        x = np.linspace(-2, 2, 7)[:, None]
        surf = cd.build_surface(sample, grid, tables, x, consts, 2.0)
        np.testing.assert_array_equal(surf.bounds_sup, surf.bounds)

    @pytest.mark.parametrize("mode,d", [("isotropic", 1), ("full", 2)])
    def test_envelope_matches_brute_force(self, mode, d):
        sample, grid, tables, consts = direct_setup(n=300, mode=mode, d=d,
                                                    k_min=-2)
        x = np.zeros((5, d))
        x[:, 0] = np.linspace(-1, 1, 5)
        surf = cd.build_surface(sample, grid, tables, x, consts, 2.0)
        exps = np.asarray(grid.exponents)
        for i in range(5):
            for g in range(grid.size):
                dom = np.all(exps >= exps[g], axis=1)
                assert surf.bounds_sup[i, g] == pytest.approx(
                    surf.bounds[i, dom].max(), rel=1e-15)

    def test_envelope_antitone(self):
        sample, grid, tables, consts = direct_setup(n=500)
        x = np.linspace(-2, 2, 9)[:, None]
        surf = cd.build_surface(sample, grid, tables, x, consts, 2.0)
        exps = np.asarray(grid.exponents)
        for g1 in range(grid.size):
            for g2 in range(grid.size):
                if np.all(exps[g1] <= exps[g2]):
                    assert np.all(surf.bounds_sup[:, g1]
                                  >= surf.bounds_sup[:, g2] - 1e-14)

    def test_empty_eval_points(self):
        sample, grid, tables, consts = direct_setup(n=100)
        surf = cd.build_surface(sample, grid, tables,
                                np.empty((0, 1)), consts, 2.0)
        assert surf.m == 0
        assert surf.estimates.shape == (0, grid.size)

    def test_permutation_equivariance(self):
        sample, grid, tables, consts = direct_setup(n=200)
        x = np.linspace(-2, 2, 11)[:, None]
        perm = np.random.default_rng(0).permutation(11)
        surf = cd.build_surface(sample, grid, tables, x, consts, 2.0)
        surf_p = cd.build_surface(sample, grid, tables, x[perm], consts, 2.0)
        np.testing.assert_array_equal(surf.estimates[perm], surf_p.estimates)
        np.testing.assert_array_equal(surf.bounds_sup[perm], surf_p.bounds_sup)

    def test_matches_reference_evaluations(self):
        sample, grid, tables, consts = direct_setup(n=150)
        x = np.array([[0.3], [-1.1]])
        surf = cd.build_surface(sample, grid, tables, x, consts, 2.0)
        for i, xi in enumerate(x):
            for g, table in enumerate(tables):
                assert surf.estimates[i, g] == pytest.approx(
                    cd.estimate_at(sample, table, xi), rel=1e-12)
                assert surf.second_moments[i, g] == pytest.approx(
                    cd.empirical_second_moment(sample, table, xi), rel=1e-12)


class TestBinnedPath:
    def test_binned_error_within_documented_bound(self):
        model = cd.NoiseModel.laplace(0.5, 1.0)
        cd.certify_noise(model)
        table = cd.build_deconv_kernel("smooth", model, [1.0])
        target = cd.TargetSpec.gaussian()
        sample = cd.sample_model(target, model, 2000, seed=6)
        x = np.linspace(-3, 3, 41)[:, None]
        f_binned, s2_binned = binned_estimates(table, sample, x)
        direct = np.array([cd.estimate_at(sample, table, xi) for xi in x])
        # documented bound: Lipschitz constant of M times the step
        nodes = table.axis_nodes(0)
        lip = np.max(np.abs(np.diff(table.values))) / table.step[0]
        bound = lip * table.step[0]
        assert np.max(np.abs(f_binned - direct)) <= bound + 1e-12
