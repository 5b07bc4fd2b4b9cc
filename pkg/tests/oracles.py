"""Independent oracles for the test suite.

Everything here recomputes quantities along a different path from the
library: cell-by-cell likelihood sums, central finite differences, a
cell-derivative-based Hessian, brute-force grid maximization, and dense
numpy linear algebra.
"""

from __future__ import annotations

import numpy as np

from stratrd.model import StudyData, cell_probabilities

# ---------------------------------------------------------------------------
# likelihood via explicit cell probabilities


def loglik_cellwise(data: StudyData, pi1, pi2, gamma) -> float:
    """Sum of count * log(cell probability), cell by cell."""
    total = 0.0
    for s, stratum in enumerate(data.strata):
        for grp, pi in ((stratum.group1, pi1[s]), (stratum.group2, pi2[s])):
            cp = cell_probabilities(pi, gamma[s])
            for count, p in zip(
                (grp.n0, grp.n1, grp.n2, grp.m0, grp.m1), cp.as_tuple()
            ):
                if count != 0.0:
                    if p <= 0.0:
                        return -np.inf
                    total += count * np.log(p)
    return total


# ---------------------------------------------------------------------------
# finite differences


def fd_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_hessian(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        out[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / (h * h)
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            v = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h * h)
            out[i, j] = out[j, i] = v
    return out


# ---------------------------------------------------------------------------
# cell-derivative Hessian of the log-likelihood (observed information path)


def _cell_derivs(pi, gamma):
    # each cell: (prob, d/dpi, d/dgamma, d2/dpi2, d2/dpidgamma, d2/dgamma2)
    return (
        (1.0 - 2.0 * pi + pi * gamma, gamma - 2.0, pi, 0.0, 1.0, 0.0),
        (2.0 * pi * (1.0 - gamma), 2.0 - 2.0 * gamma, -2.0 * pi, 0.0, -2.0, 0.0),
        (pi * gamma, gamma, pi, 0.0, 1.0, 0.0),
        (1.0 - pi, -1.0, 0.0, 0.0, 0.0, 0.0),
        (pi, 1.0, 0.0, 0.0, 0.0, 0.0),
    )


def _group_hess(counts, pi, gamma):
    """(d2/dpi2, d2/dpidg, d2/dg2) for one group, summed over its five cells."""
    hpp = hpg = hgg = 0.0
    for count, (p, dp, dg, dpp, dpg, dgg) in zip(counts, _cell_derivs(pi, gamma)):
        if count == 0.0:
            continue
        hpp += count * (dpp / p - dp * dp / (p * p))
        hpg += count * (dpg / p - dp * dg / (p * p))
        hgg += count * (dgg / p - dg * dg / (p * p))
    return hpp, hpg, hgg


def observed_hessian(rows, pi1, pi2, gamma) -> np.ndarray:
    """3S x 3S Hessian of the log-likelihood in (pi1, pi2, gamma) blocks."""
    rows = np.asarray(rows, dtype=float)
    S = rows.shape[0]
    out = np.zeros((3 * S, 3 * S))
    for s in range(S):
        h1 = _group_hess(rows[s, 0:5], pi1[s], gamma[s])
        h2 = _group_hess(rows[s, 5:10], pi2[s], gamma[s])
        k = 3 * s
        out[k, k] = h1[0]
        out[k + 1, k + 1] = h2[0]
        out[k, k + 2] = out[k + 2, k] = h1[1]
        out[k + 1, k + 2] = out[k + 2, k + 1] = h2[1]
        out[k + 2, k + 2] = h1[2] + h2[2]
    return out


def expected_rows(sizes, pi1, pi2, gamma) -> np.ndarray:
    """Replace cell counts by their expectations given sizes and parameters."""
    S = len(sizes)
    rows = np.empty((S, 10))
    for s in range(S):
        n1, n2, m1, m2 = sizes[s]
        cp1 = cell_probabilities(pi1[s], gamma[s]).as_tuple()
        cp2 = cell_probabilities(pi2[s], gamma[s]).as_tuple()
        rows[s, 0:3] = np.array(cp1[:3]) * n1
        rows[s, 3:5] = np.array(cp1[3:]) * m1
        rows[s, 5:8] = np.array(cp2[:3]) * n2
        rows[s, 8:10] = np.array(cp2[3:]) * m2
    return rows


def reparam_jacobian(S: int) -> np.ndarray:
    """d(full parameter vector)/d(d, pi_11, gamma_1, ..., pi_S1, gamma_S)."""
    J = np.zeros((3 * S, 2 * S + 1))
    for s in range(S):
        J[3 * s, 1 + 2 * s] = 1.0
        J[3 * s + 1, 0] = -1.0
        J[3 * s + 1, 1 + 2 * s] = 1.0
        J[3 * s + 2, 2 + 2 * s] = 1.0
    return J


# ---------------------------------------------------------------------------
# brute-force grid maximization for a single stratum


def _group_ll_vec(n0, n1, n2, m0, m1, pis, g):
    pb0 = 1.0 + (g - 2.0) * pis
    pb1 = 2.0 * pis * (1.0 - g)
    pb2 = pis * g
    pu0 = 1.0 - pis
    pu1 = pis
    ll = np.zeros_like(pis)
    for count, p in ((n0, pb0), (n1, pb1), (n2, pb2), (m0, pu0), (m1, pu1)):
        if count == 0.0:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            term = count * np.log(np.where(p > 0.0, p, np.nan))
        term = np.where(p > 0.0, term, -np.inf)
        ll = ll + term
    return ll


def grid_mle_stratum(row, step=5e-4):
    """Grid-search maximizer over pi1, pi2 in [0, 1/(2-g)] and gamma in [0, 1]."""
    row = [float(v) for v in row]
    best_ll = -np.inf
    best = None
    for g in np.arange(0.0, 1.0 + step / 2.0, step):
        hi = 1.0 / (2.0 - g)
        pis = np.arange(0.0, hi + step / 2.0, step)
        pis = pis[pis <= hi]
        ll1 = _group_ll_vec(*row[0:5], pis, g)
        ll2 = _group_ll_vec(*row[5:10], pis, g)
        i1 = int(np.argmax(ll1))
        i2 = int(np.argmax(ll2))
        tot = ll1[i1] + ll2[i2]
        if tot > best_ll:
            best_ll = tot
            best = (pis[i1], pis[i2], g)
    return best, best_ll


# ---------------------------------------------------------------------------
# random generation helpers (fixed-seed reproducible)


def random_interior_params(rng, S, margin=0.07):
    gamma = rng.uniform(0.2, 0.9, S)
    hi = 1.0 / (2.0 - gamma)
    pi1 = rng.uniform(margin, hi - margin)
    pi2 = rng.uniform(margin, hi - margin)
    return pi1, pi2, gamma


def random_dataset(rng, S, n_range=(25, 60), m_range=(15, 40)):
    """Counts sampled under parameters with all cells in (0.1, 1)."""
    from stratrd.montecarlo import random_param_sets, sample_stratum

    truth = random_param_sets(S, 1, rng)[0]
    full = truth.to_full()
    strata = []
    for s in range(S):
        n = int(rng.integers(*n_range))
        m = int(rng.integers(*m_range))
        strata.append(
            sample_stratum(
                (n, n, m, m), full.pi1[s], full.pi2[s], full.gamma[s], rng
            )
        )
    return StudyData(strata)
