import numpy as np
import pytest

from stratrd import (
    CommonDiffParams,
    FullParams,
    ParameterDomainError,
    chi2_quantile,
    chi2_sf,
    fisher_block,
    fit_constrained,
    fit_unconstrained,
    lr_test,
    score_test,
    study_from_rows,
    tridiag_inverse,
    wald_test,
)
from stratrd import numkit
from stratrd._backend import kernels
from stratrd.montecarlo import sample_stratum

import oracles


def _dense_information(rows, pi1, pi2, gamma):
    S = len(rows)
    out = np.zeros((3 * S, 3 * S))
    for s in range(S):
        n1 = rows[s][0] + rows[s][1] + rows[s][2]
        m1 = rows[s][3] + rows[s][4]
        n2 = rows[s][5] + rows[s][6] + rows[s][7]
        m2 = rows[s][8] + rows[s][9]
        blk = fisher_block(n1, n2, m1, m2, pi1[s], pi2[s], gamma[s])
        out[3 * s : 3 * s + 3, 3 * s : 3 * s + 3] = blk.matrix()
    return out


class TestFisherBlock:
    def test_zero_sizes(self):
        blk = fisher_block(0, 0, 0, 0, 0.3, 0.4, 0.5)
        assert np.all(blk.matrix() == 0.0)

    def test_expected_hessian_oracle(self):
        rng = np.random.default_rng(77)
        for _ in range(500):
            g = rng.uniform(0.15, 0.9)
            hi = 1.0 / (2.0 - g)
            p1, p2 = rng.uniform(0.08, hi - 0.08, 2)
            n1, n2 = rng.uniform(5, 80, 2)
            m1, m2 = rng.uniform(5, 80, 2)
            blk = fisher_block(n1, n2, m1, m2, p1, p2, g).matrix()
            rows = oracles.expected_rows([(n1, n2, m1, m2)], [p1], [p2], [g])
            want = -oracles.observed_hessian(rows, [p1], [p2], [g])
            assert np.max(np.abs(blk - want)) < 1e-8 * max(1.0, np.max(np.abs(want)))

    def test_finite_difference_hessian(self):
        rng = np.random.default_rng(78)
        from stratrd import log_likelihood

        for _ in range(25):
            g = rng.uniform(0.25, 0.8)
            hi = 1.0 / (2.0 - g)
            p1, p2 = rng.uniform(0.12, hi - 0.12, 2)
            n1, n2, m1, m2 = rng.uniform(10, 50, 4)
            rows = oracles.expected_rows([(n1, n2, m1, m2)], [p1], [p2], [g])
            data = study_from_rows(rows)

            def f(x):
                return log_likelihood(data, FullParams([x[0]], [x[1]], [x[2]]))

            want = -oracles.fd_hessian(f, np.array([p1, p2, g]), h=1e-5)
            got = fisher_block(n1, n2, m1, m2, p1, p2, g).matrix()
            scale = max(1.0, np.max(np.abs(want)))
            assert np.max(np.abs(got - want)) / scale < 1e-5

    def test_size_doubling_linearity(self):
        blk1 = fisher_block(10, 12, 8, 9, 0.3, 0.35, 0.6).matrix()
        blk2 = fisher_block(20, 24, 16, 18, 0.3, 0.35, 0.6).matrix()
        assert np.allclose(blk2, 2.0 * blk1, rtol=1e-12)

    def test_positive_definite_interior(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            g = rng.uniform(0.2, 0.9)
            hi = 1.0 / (2.0 - g)
            p1, p2 = rng.uniform(0.1, hi - 0.1, 2)
            blk = fisher_block(20, 25, 10, 15, p1, p2, g).matrix()
            np.linalg.cholesky(blk)  # raises if not PD

    def test_boundary_rejected(self):
        with pytest.raises(ParameterDomainError):
            fisher_block(10, 10, 10, 10, 0.0, 0.3, 0.5)


class TestTridiagInverse:
    def test_one_by_one(self):
        assert np.allclose(tridiag_inverse([4.0], []), [[0.25]])

    def test_two_by_two_hand(self):
        inv = tridiag_inverse([2.0, 2.0], [1.0])
        assert np.allclose(inv, [[2 / 3, -1 / 3], [-1 / 3, 2 / 3]], atol=1e-14)

    def test_dense_oracle(self):
        rng = np.random.default_rng(55)
        for _ in range(100):
            n = int(rng.integers(2, 8))
            b = rng.normal(size=n - 1)
            a = np.abs(rng.normal(size=n)) + 2.0 * np.abs(
                np.concatenate([[0], b]) ) + 2.0 * np.abs(np.concatenate([b, [0]])) + 0.5
            m = np.diag(a) + np.diag(b, 1) + np.diag(b, -1)
            got = tridiag_inverse(a, b)
            want = numkit.dense_inverse(m)
            assert np.max(np.abs(got - want)) < 1e-10 * max(1.0, np.max(np.abs(want)))

    def test_singular_raises(self):
        with pytest.raises(numkit.SingularMatrixError):
            tridiag_inverse([1.0, 1.0], [1.0])


class TestStatistics:
    def test_example1_score_lr(self, example1):
        sc = score_test(example1)
        lr = lr_test(example1)
        assert sc.statistic == pytest.approx(2.7487, abs=1e-3)
        assert sc.p_value == pytest.approx(0.2530, abs=1e-3)
        assert lr.statistic == pytest.approx(2.8475, abs=1e-3)
        assert lr.p_value == pytest.approx(0.2408, abs=1e-3)
        assert sc.df == lr.df == 2

    def test_score_simplified_equals_dense(self, example1):
        fit = fit_constrained(example1)
        cp = fit.params
        full = cp.to_full()
        stat, ok = kernels.score_stat(
            example1.prepared(), full.pi1, full.pi2, full.gamma
        )
        assert ok
        from stratrd import score_vector

        u = score_vector(example1, full)
        info = _dense_information(
            example1.counts_array(), full.pi1, full.pi2, full.gamma
        )
        dense = float(u @ numkit.dense_solve(info, u))
        assert abs(stat - dense) < 1e-10 * max(1.0, dense)

    def test_score_simplified_equals_dense_random(self):
        rng = np.random.default_rng(61)
        from stratrd import score_vector

        for _ in range(50):
            data = oracles.random_dataset(rng, S=int(rng.integers(2, 5)))
            f0 = fit_constrained(data)
            if not (f0.converged and f0.interior):
                continue
            full = f0.params.to_full()
            stat, ok = kernels.score_stat(
                data.prepared(), full.pi1, full.pi2, full.gamma
            )
            u = score_vector(data, full)
            info = _dense_information(
                data.counts_array(), full.pi1, full.pi2, full.gamma
            )
            dense = float(u @ numkit.dense_solve(info, u))
            assert abs(stat - dense) < 1e-10 * max(1.0, dense)

    def test_wald_tridiag_equals_dense(self, example1):
        fit = fit_unconstrained(example1)
        fp = fit.params
        stat, ok = kernels.wald_stat(
            example1.prepared(), fp.pi1, fp.pi2, fp.gamma
        )
        assert ok
        info = _dense_information(
            example1.counts_array(), fp.pi1, fp.pi2, fp.gamma
        )
        S = example1.n_strata
        C = np.zeros((S - 1, 3 * S))
        for s in range(S - 1):
            C[s, 3 * s] = 1.0
            C[s, 3 * s + 1] = -1.0
            C[s, 3 * (s + 1)] = -1.0
            C[s, 3 * (s + 1) + 1] = 1.0
        v = C @ fp.flat()
        mid = C @ numkit.dense_inverse(info) @ C.T
        dense = float(v @ numkit.dense_solve(mid, v))
        assert abs(stat - dense) < 1e-8 * max(1.0, dense)

    def test_wald_zero_when_equal_differences(self):
        rows = [
            [8, 3, 5, 6, 4, 4, 6, 7, 9, 2],
            [8, 3, 5, 6, 4, 4, 6, 7, 9, 2],
        ]
        data = study_from_rows(rows)
        w = wald_test(data)
        assert w.statistic < 1e-12

    def test_noise_floor_for_identical_groups_and_strata(self):
        rows = [[8, 3, 5, 6, 4, 8, 3, 5, 6, 4]] * 2
        data = study_from_rows(rows)
        for f in (lr_test, score_test, wald_test):
            res = f(data)
            assert 0.0 <= res.statistic < 1e-8

    def test_statistics_nonnegative_and_df(self):
        rng = np.random.default_rng(62)
        for _ in range(25):
            data = oracles.random_dataset(rng, S=int(rng.integers(2, 5)))
            fa = fit_unconstrained(data)
            f0 = fit_constrained(data, unconstrained=fa)
            if not (fa.converged and f0.converged):
                continue
            for res in (
                lr_test(data, fit_ha=fa, fit_h0=f0),
                score_test(data, fit_h0=f0),
                wald_test(data, fit_ha=fa),
            ):
                assert res.statistic >= 0.0
                assert res.df == data.n_strata - 1
                assert abs(res.p_value - chi2_sf(res.statistic, res.df)) < 1e-14

    def test_stratum_permutation_invariance(self, example1):
        perm = [2, 0, 1]
        data_p = study_from_rows(example1.counts_array()[perm])
        for f in (score_test, lr_test, wald_test):
            a = f(example1).statistic
            b = f(data_p).statistic
            assert abs(a - b) < 1e-9 * max(1.0, a)

    def test_single_stratum_rejected(self):
        data = study_from_rows([[5, 3, 2, 4, 1, 6, 2, 2, 3, 2]])
        with pytest.raises(ValueError, match="S >= 2"):
            lr_test(data)


class TestChi2Api:
    def test_reference_values(self):
        assert chi2_sf(0.0, 3) == 1.0
        assert abs(chi2_sf(5.8206, 2) - 0.0545) < 5e-4
        assert abs(chi2_quantile(0.95, 2) - 5.9915) < 1e-4


@pytest.mark.slow
class TestNullDistribution:
    def test_ks_against_chi2(self):
        # large-sample null: statistics should follow chi-square with S-1 df
        import scipy.stats

        S = 2
        truth = CommonDiffParams(0.0, [0.5] * S, [0.5] * S)
        full = truth.to_full()
        reps = 5000
        stats = {"SC": [], "LR": [], "W": []}
        for r in range(reps):
            rng = np.random.default_rng((987, r))
            rows = np.empty((S, 10))
            for s in range(S):
                st = sample_stratum(
                    (200, 200, 200, 200),
                    full.pi1[s], full.pi2[s], full.gamma[s], rng,
                )
                rows[s] = st.as_row()
            if (rows == 0).any():
                rows = rows + 1e-4
            h = kernels.prepare_counts(rows)
            p1, p2, g, _, conv, _ = kernels.fit_unconstrained(h, 10000, 1e-10, 1e-8)
            d, cp1, cg, _, conv2, _ = kernels.fit_constrained(
                h, p1, p2, g, 10000, 1e-10, 1e-8
            )
            if not (conv and conv2):
                continue
            cp2 = [cp1[i] - d for i in range(S)]
            ll_a = kernels.loglik(h, p1, p2, g)
            ll_0 = kernels.loglik(h, cp1, cp2, cg)
            stats["LR"].append(max(2.0 * (ll_a - ll_0), 0.0))
            stats["SC"].append(kernels.score_stat(h, cp1, cp2, cg)[0])
            stats["W"].append(kernels.wald_stat(h, p1, p2, g)[0])
        for name, values in stats.items():
            res = scipy.stats.kstest(values, "chi2", args=(S - 1,))
            assert res.pvalue > 0.01, f"{name}: KS p={res.pvalue}"
