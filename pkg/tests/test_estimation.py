import numpy as np
import pytest

from stratrd import (
    GroupCounts,
    InfeasibleConstraintError,
    StratumCounts,
    fit_conditional,
    fit_constrained,
    fit_unconstrained,
    newton_gamma_step,
    score_vector,
    smooth_zero_cells,
    solve_pi_quadratic,
    study_from_rows,
)
from stratrd._backend import kernels

import oracles

# published reference estimates for the two worked examples
EX1_PI1 = (0.3958, 0.6881, 0.6522)
EX1_PI2 = (0.2018, 0.4346, 0.6720)
EX1_GAMMA = (0.8115, 0.8321, 0.9184)
EX1_D_TILDE = 0.1742
EX1_PI1_TILDE = (0.3847, 0.6565, 0.7424)
EX1_GAMMA_TILDE = (0.8104, 0.8208, 0.9120)


class TestSolvePiQuadratic:
    def test_all_nonresponse_boundary(self):
        g = GroupCounts(1, 0, 0, 1, 0)
        for gamma in (0.2, 0.5, 0.9):
            pi, interior = solve_pi_quadratic(g, gamma)
            assert pi == pytest.approx(1e-10, abs=1e-16)
            assert not interior

    def test_all_response_boundary(self):
        g = GroupCounts(0, 0, 1, 0, 1)
        pi, interior = solve_pi_quadratic(g, 1.0)
        assert pi == pytest.approx(1.0 - 1e-10, rel=1e-12)
        assert not interior

    def test_zeroes_score(self):
        g = GroupCounts(8, 2, 8, 9, 3)
        gamma = 0.8115
        pi, interior = solve_pi_quadratic(g, gamma)
        assert interior
        # stationarity of the per-group likelihood in pi
        dpi = (
            (g.n1 + g.n2 + g.m1) / pi
            - g.m0 / (1.0 - pi)
            + g.n0 * (gamma - 2.0) / (1.0 + (gamma - 2.0) * pi)
        )
        assert abs(dpi) < 1e-8
        assert pi == pytest.approx(0.3958, abs=2e-3)  # near the joint optimum

    def test_random_residuals(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            counts = GroupCounts(*rng.integers(1, 30, size=5))
            gamma = float(rng.uniform(0.05, 0.95))
            pi, interior = solve_pi_quadratic(counts, gamma)
            if interior:
                dpi = (
                    (counts.n1 + counts.n2 + counts.m1) / pi
                    - counts.m0 / (1.0 - pi)
                    + counts.n0 * (gamma - 2.0) / (1.0 + (gamma - 2.0) * pi)
                )
                assert abs(dpi) < 1e-6 * (counts.n_total + counts.m_total)


class TestNewtonGammaStep:
    def test_fixed_point_at_mle(self, example1):
        fit = fit_unconstrained(example1)
        fp = fit.params
        s0 = example1.strata[0]
        g_new, ok = newton_gamma_step(s0, fp.pi1[0], fp.pi2[0], fp.gamma[0])
        assert ok
        assert abs(g_new - fp.gamma[0]) < 1e-7
        assert fp.gamma[0] == pytest.approx(0.8115, abs=1e-3)

    def test_update_direction(self, example1):
        rng = np.random.default_rng(8)
        s0 = example1.strata[0]
        row = s0.as_row()
        for _ in range(100):
            p1, p2 = rng.uniform(0.1, 0.45, 2)
            g = rng.uniform(0.1, 0.9)
            g_new, ok = newton_gamma_step(s0, p1, p2, g)
            assert ok
            d1 = (
                (row[2] + row[7]) / g
                - (row[1] + row[6]) / (1.0 - g)
                + row[0] * p1 / (1.0 + (g - 2.0) * p1)
                + row[5] * p2 / (1.0 + (g - 2.0) * p2)
            )
            d2 = kernels._gd2g(row[0], row[1], row[2], p1, g) + kernels._gd2g(
                row[5], row[6], row[7], p2, g
            ) if hasattr(kernels, "_gd2g") else None
            # direction of movement equals the sign of the gradient for a
            # concave 1-D objective
            if abs(d1) > 1e-12 and 1e-10 < g_new < 1 - 1e-10:
                assert np.sign(g_new - g) == np.sign(d1)

    def test_zero_hessian_flag(self):
        stratum = StratumCounts(
            group1=GroupCounts(0, 0, 0, 3, 2), group2=GroupCounts(0, 0, 0, 4, 1)
        )
        g_new, ok = newton_gamma_step(stratum, 0.3, 0.4, 0.5)
        assert not ok
        assert g_new == 0.5


class TestFitUnconstrained:
    def test_example1_reference(self, example1):
        fit = fit_unconstrained(example1)
        assert fit.converged and fit.interior
        fp = fit.params
        assert np.allclose(fp.pi1, EX1_PI1, atol=1e-3)
        assert np.allclose(fp.pi2, EX1_PI2, atol=1e-3)
        assert np.allclose(fp.gamma, EX1_GAMMA, atol=1e-3)
        d_hat = fp.differences()
        assert np.allclose(d_hat, (0.1939, 0.2536, -0.0198), atol=1e-3)

    def test_example2_reference(self, example2):
        fit = fit_unconstrained(example2)
        fp = fit.params
        # group 1 is CRT (boundary at zero in the female stratum)
        assert np.allclose(fp.pi1, (0.0, 0.2956), atol=1e-3)
        assert np.allclose(fp.pi2, (0.4340, 0.3226), atol=1e-3)
        assert np.allclose(fp.gamma, (0.8189, 0.6468), atol=1e-3)
        assert not fit.interior

    def test_grid_oracle_example1_stratum1(self, example1):
        row = example1.counts_array()[0]
        single = study_from_rows([row])
        fit = fit_unconstrained(single)
        (p1, p2, g), _ = oracles.grid_mle_stratum(row)
        assert abs(fit.params.pi1[0] - p1) < 1e-3
        assert abs(fit.params.pi2[0] - p2) < 1e-3
        assert abs(fit.params.gamma[0] - g) < 1e-3

    def test_stationarity_at_fit(self, example1):
        fit = fit_unconstrained(example1)
        assert np.max(np.abs(score_vector(example1, fit.params))) < 1e-6


class TestFitConstrained:
    def test_example1_reference(self, example1):
        fit = fit_constrained(example1)
        assert fit.converged and fit.interior
        cp = fit.params
        assert cp.d == pytest.approx(EX1_D_TILDE, abs=1e-3)
        assert np.allclose(cp.pi1, EX1_PI1_TILDE, atol=1e-3)
        assert np.allclose(cp.gamma, EX1_GAMMA_TILDE, atol=1e-3)
        assert np.allclose(cp.pi2, (0.2105, 0.4823, 0.5682), atol=1e-3)

    def test_example2_reference(self, example2):
        fit = fit_constrained(example2)
        cp = fit.params
        assert cp.d == pytest.approx(-0.2060, abs=1e-3)
        assert np.allclose(cp.pi1, (0.1420, 0.1924), atol=1e-3)
        assert np.allclose(cp.pi2, (0.3480, 0.3984), atol=1e-3)
        assert np.allclose(cp.gamma, (0.8036, 0.6721), atol=1e-3)

    def test_symmetric_groups_give_zero_d(self):
        rows = [
            [8, 3, 5, 6, 4, 8, 3, 5, 6, 4],
            [4, 6, 7, 9, 2, 4, 6, 7, 9, 2],
        ]
        fit = fit_constrained(study_from_rows(rows))
        assert abs(fit.params.d) < 1e-8

    def test_group_swap_antisymmetry(self, example1):
        fit = fit_constrained(example1)
        rows = example1.counts_array()
        swapped = study_from_rows(np.hstack([rows[:, 5:], rows[:, :5]]))
        fit_sw = fit_constrained(swapped)
        assert abs(fit.params.d + fit_sw.params.d) < 1e-8
        assert np.allclose(fit.params.pi2, fit_sw.params.pi1, atol=1e-8)
        assert np.allclose(fit.params.gamma, fit_sw.params.gamma, atol=1e-8)


class TestFitConditional:
    def test_at_dtilde_reproduces_constrained(self, example1):
        con = fit_constrained(example1)
        cond = fit_conditional(example1, con.params.d, constrained=con)
        assert np.max(np.abs(cond.params.pi1 - con.params.pi1)) < 1e-6
        assert np.max(np.abs(cond.params.gamma - con.params.gamma)) < 1e-6
        assert abs(cond.loglik - con.loglik) < 1e-9

    def test_zero_d_has_lower_loglik(self, example1):
        con = fit_constrained(example1)
        cond0 = fit_conditional(example1, 0.0, constrained=con)
        assert cond0.loglik < con.loglik - 1e-6

    def test_stationarity_residuals(self, example1):
        cond = fit_conditional(example1, 0.10)
        cp = cond.params
        s = score_vector(example1, cp.to_full())
        for k in range(3):
            # chained pi1 score and gamma score vanish per stratum
            assert abs(s[3 * k] + s[3 * k + 1]) < 1e-8
            assert abs(s[3 * k + 2]) < 1e-8

    def test_infeasible_d0(self, example1):
        with pytest.raises(InfeasibleConstraintError):
            fit_conditional(example1, 1.0)


class TestNestingAndOracles:
    def test_loglik_nesting_on_random_data(self):
        rng = np.random.default_rng(99)
        for _ in range(60):
            data = oracles.random_dataset(rng, S=int(rng.integers(2, 4)))
            fa = fit_unconstrained(data)
            f0 = fit_constrained(data, unconstrained=fa)
            if not (fa.converged and f0.converged):
                continue
            assert fa.loglik >= f0.loglik - 1e-8
            d_probe = float(np.clip(f0.params.d + rng.uniform(-0.15, 0.15), -0.9, 0.9))
            cond = fit_conditional(data, d_probe, constrained=f0)
            assert f0.loglik >= cond.loglik - 1e-8

    @pytest.mark.slow
    def test_grid_oracle_random_datasets(self):
        rng = np.random.default_rng(123)
        checked = 0
        while checked < 50:
            data = oracles.random_dataset(rng, S=1, n_range=(30, 70), m_range=(20, 50))
            fit = fit_unconstrained(data)
            if not fit.converged:
                continue
            row = data.counts_array()[0]
            (p1, p2, g), grid_ll = oracles.grid_mle_stratum(row)
            assert abs(fit.params.pi1[0] - p1) < 1e-3
            assert abs(fit.params.pi2[0] - p2) < 1e-3
            assert abs(fit.params.gamma[0] - g) < 1e-3
            assert fit.loglik >= grid_ll - 1e-9
            checked += 1

    def test_smoothed_data_fits(self, example2):
        sm = smooth_zero_cells(example2, 1e-4)
        fit = fit_unconstrained(sm)
        assert fit.converged
        assert fit.params.pi1[0] < 1e-3  # still effectively at the boundary
