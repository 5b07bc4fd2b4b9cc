import numpy as np
import pytest

from stratrd import (
    CommonDiffParams,
    FullParams,
    SimConfig,
    cell_probabilities,
    chi2_quantile,
    random_param_sets,
    run_coverage,
    run_power,
    run_type1,
    sample_stratum,
)


def _cfg(**kw):
    base = dict(
        mode="type1",
        sizes=((30, 30, 20, 20), (35, 35, 25, 25)),
        truth=CommonDiffParams(0.0, [0.45, 0.45], [0.4, 0.5]),
        replicates=200,
        alpha=0.05,
        seed=11,
    )
    base.update(kw)
    return SimConfig(**base)


class TestSampling:
    def test_zero_sizes(self):
        rng = np.random.default_rng(0)
        st = sample_stratum((0, 0, 0, 0), 0.4, 0.3, 0.5, rng)
        assert st.as_row() == (0.0,) * 10

    def test_perfect_correlation_no_discordant(self):
        rng = np.random.default_rng(1)
        st = sample_stratum((1000, 0, 0, 0), 0.5, 0.5, 1.0, rng)
        assert st.group1.n1 == 0
        assert st.group1.n0 + st.group1.n2 == 1000

    def test_goodness_of_fit(self):
        # aggregate bilateral frequencies over many draws against the cell
        # probabilities at pi = gamma = 0.5
        rng = np.random.default_rng(2024)
        draws = 100000
        n = 200
        counts = rng.multinomial(n, [0.25, 0.5, 0.25], size=draws).sum(axis=0)
        total = counts.sum()
        expected = total * np.array([0.25, 0.5, 0.25])
        stat = float(((counts - expected) ** 2 / expected).sum())
        assert stat < chi2_quantile(0.999, 2)

    def test_stream_determinism(self):
        a = sample_stratum((50, 60, 20, 30), 0.4, 0.35, 0.6, np.random.default_rng(7))
        b = sample_stratum((50, 60, 20, 30), 0.4, 0.35, 0.6, np.random.default_rng(7))
        assert a == b


class TestRunners:
    def test_alpha_one_rejects_everything(self):
        res = run_type1(_cfg(alpha=1.0, replicates=50))
        assert all(v == 1.0 for v in res.rejection_rates.values())

    def test_alpha_zero_power(self):
        truth = FullParams([0.45, 0.45], [0.45, 0.30], [0.4, 0.5])
        res = run_power(_cfg(mode="power", truth=truth, alpha=0.0, replicates=50))
        assert all(v == 0.0 for v in res.rejection_rates.values())

    def test_fixed_seed_bit_identical(self):
        r1 = run_type1(_cfg())
        r2 = run_type1(_cfg())
        assert r1 == r2

    def test_worker_count_invariance(self):
        results = [run_type1(_cfg(workers=w, replicates=64)) for w in (1, 4, 16)]
        assert results[0] == results[1] == results[2]

    def test_power_reduces_to_type1_under_null(self):
        cfg = _cfg(replicates=100)
        null_full = cfg.truth.to_full()
        r_type1 = run_type1(cfg)
        r_power = run_power(_cfg(mode="power", truth=null_full, replicates=100))
        assert r_power.rejection_rates == r_type1.rejection_rates

    def test_power_monotone_in_separation(self):
        near = FullParams([0.45, 0.45], [0.45, 0.40], [0.4, 0.5])
        far = FullParams([0.45, 0.45], [0.45, 0.30], [0.4, 0.5])
        cfg_near = _cfg(mode="power", truth=near, replicates=400,
                        sizes=((100, 100, 90, 90),) * 2)
        cfg_far = _cfg(mode="power", truth=far, replicates=400,
                       sizes=((100, 100, 90, 90),) * 2)
        p_near = run_power(cfg_near).rejection_rates
        p_far = run_power(cfg_far).rejection_rates
        for m in p_near:
            assert p_far[m] > p_near[m]

    def test_coverage_alpha_one(self):
        res = run_coverage(_cfg(mode="coverage", alpha=1.0, replicates=30))
        assert all(v == 0.0 for v in res.coverage.values())
        assert all(v < 1e-12 for v in res.mean_length.values())

    def test_counts_identity(self):
        res = run_coverage(_cfg(mode="coverage", replicates=60))
        assert res.evaluated + res.degenerate == res.replicates

    def test_coverage_worker_invariance(self):
        r1 = run_coverage(_cfg(mode="coverage", replicates=40, workers=1))
        r4 = run_coverage(_cfg(mode="coverage", replicates=40, workers=4))
        assert r1 == r4

    def test_width_shrinks_with_sample_size(self):
        small = _cfg(mode="coverage", replicates=150)
        big = _cfg(
            mode="coverage",
            replicates=150,
            sizes=tuple(tuple(4 * v for v in row) for row in small.sizes),
        )
        w_small = run_coverage(small).mean_length
        w_big = run_coverage(big).mean_length
        for m in w_small:
            ratio = w_big[m] / w_small[m]
            assert abs(ratio - 0.5) < 0.05

    def test_mode_truth_validation(self):
        with pytest.raises(TypeError):
            run_type1(_cfg(mode="power", truth=FullParams([0.4, 0.4], [0.3, 0.35], [0.5, 0.5])))
        with pytest.raises(ValueError):
            SimConfig(mode="bogus", sizes=((1, 1, 1, 1),),
                      truth=CommonDiffParams(0.0, [0.4], [0.5]))


class TestExpandGrid:
    def test_cross_product_and_labels(self):
        from stratrd.montecarlo import expand_grid

        doc = {
            "mode": "coverage",
            "grid": {
                "N": {"N1": [[35, 35, 15, 15], [40, 40, 20, 20]]},
                "d": {"d1": 0.0, "d2": 0.1},
                "gamma": {"g1": [0.4, 0.5], "g2": [0.6, 0.7]},
                "pi": {"p1": [0.45, 0.45]},
            },
            "replicates": 5,
            "seed": 2,
        }
        configs = expand_grid(doc)
        assert len(configs) == 4
        assert {c.label for c in configs} == {
            "N1.d1.g1.p1", "N1.d1.g2.p1", "N1.d2.g1.p1", "N1.d2.g2.p1"
        }
        assert all(c.replicates == 5 and c.seed == 2 for c in configs)

    def test_power_grid_uses_full_truth(self):
        from stratrd.montecarlo import expand_grid

        doc = {
            "mode": "power",
            "grid": {
                "N": {"N1": [[30, 30, 20, 20], [30, 30, 20, 20]]},
                "d": {"d1": [0.0, 0.15]},
                "gamma": {"g1": [0.4, 0.5]},
                "pi": {"p1": [0.45, 0.45]},
            },
            "replicates": 3,
        }
        (cfg,) = expand_grid(doc)
        assert isinstance(cfg.truth, FullParams)
        assert np.allclose(cfg.truth.pi2, [0.45, 0.30])

    def test_missing_axis_raises(self):
        from stratrd.montecarlo import expand_grid

        with pytest.raises(ValueError, match="axis"):
            expand_grid({"mode": "coverage", "grid": {"N": {}}})


class TestRandomParamSets:
    def test_constraints_hold(self):
        rng = np.random.default_rng(5)
        sets = random_param_sets(3, 50, rng)
        for cp in sets:
            full = cp.to_full()
            for s in range(3):
                for pi in (full.pi1[s], full.pi2[s]):
                    cells = cell_probabilities(pi, full.gamma[s]).as_tuple()
                    assert all(0.1 < c < 1.0 for c in cells)

    def test_center_point_accepted(self):
        cells = cell_probabilities(0.5, 0.5).as_tuple()
        assert all(0.1 < c < 1.0 for c in cells)

    def test_full_params_mode(self):
        rng = np.random.default_rng(6)
        sets = random_param_sets(2, 10, rng, common_d=False)
        assert all(isinstance(p, FullParams) for p in sets)

    def test_acceptance_rate_matches_grid_volume(self):
        # empirical acceptance rate of the rejection sampler vs a grid
        # estimate of P(accept) = E_d[vol(d)^2] for two strata
        rng = np.random.default_rng(77)
        n_prop = 100000
        u = rng.random((n_prop, 5))
        d = -1.0 + 2.0 * u[:, 0]
        pi1 = u[:, 1:3]
        gamma = u[:, 3:5]
        pi2 = pi1 - d[:, None]
        ok = np.ones(n_prop, dtype=bool)
        for pi in (pi1, pi2):
            pb0 = 1.0 - 2.0 * pi + pi * gamma
            pb1 = 2.0 * pi * (1.0 - gamma)
            pb2 = pi * gamma
            for cell in (pb0, pb1, pb2, 1.0 - pi, pi):
                ok &= ((cell > 0.1) & (cell < 1.0)).all(axis=1)
        empirical = ok.mean()

        m = 200
        ds = -1.0 + 2.0 * (np.arange(m) + 0.5) / m
        ps = (np.arange(m) + 0.5) / m
        gs = (np.arange(m) + 0.5) / m
        P, G = np.meshgrid(ps, gs, indexing="ij")
        vol = np.empty(m)
        for i, dv in enumerate(ds):
            good = np.ones_like(P, dtype=bool)
            for pi in (P, P - dv):
                pb0 = 1.0 - 2.0 * pi + pi * G
                pb1 = 2.0 * pi * (1.0 - G)
                pb2 = pi * G
                for cell in (pb0, pb1, pb2, 1.0 - pi, pi):
                    good &= (cell > 0.1) & (cell < 1.0)
            vol[i] = good.mean()
        grid_rate = float((vol ** 2).mean())
        assert abs(empirical - grid_rate) < 0.02
