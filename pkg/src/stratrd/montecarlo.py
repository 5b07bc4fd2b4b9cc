"""Seeded Monte Carlo engine: type I error, power, and interval coverage.

Replicates are independent work items.  Each replicate r draws its own
generator from ``(seed, r)``, so results are bit-identical for a given
configuration at any worker count; aggregation happens index-ordered in the
parent process.  Sampling delegates to numpy's PCG64 generator (multinomial
via sequential binomial conditioning; binomial via inversion for small
n*p and BTPE otherwise), which pins bit-level reproducibility to numpy.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import numkit
from ._backend import kernels
from .estimation import MAX_ITER, PARAM_TOL, SCORE_TOL
from .model import (
    CommonDiffParams,
    FullParams,
    GroupCounts,
    StratumCounts,
    cell_probabilities,
)

__all__ = [
    "SimConfig",
    "SimResult",
    "sample_stratum",
    "run_type1",
    "run_power",
    "run_coverage",
    "random_param_sets",
    "expand_grid",
]

TEST_METHODS = ("SC", "LR", "W")
CI_METHODS = ("W1", "W2", "W3", "PRO", "SC")


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell: truth, sizes, replicate budget, and a seed."""

    mode: str  # "type1", "power", or "coverage"
    sizes: tuple[tuple[float, float, float, float], ...]  # (n1, n2, m1, m2)
    truth: FullParams | CommonDiffParams
    replicates: int = 10000
    alpha: float = 0.05
    seed: int = 0
    methods: tuple[str, ...] = ()
    workers: int = 1
    smooth_epsilon: float = 1e-4
    label: str = ""

    def __post_init__(self):
        if self.mode not in ("type1", "power", "coverage"):
            raise ValueError(f"unknown simulation mode {self.mode!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if any(v < 0 for row in self.sizes for v in row):
            raise ValueError("sizes must be nonnegative")
        if len(self.sizes) != self.truth.n_strata:
            raise ValueError("sizes and truth disagree on the stratum count")
        if not self.methods:
            default = CI_METHODS if self.mode == "coverage" else TEST_METHODS
            object.__setattr__(self, "methods", default)
        valid = CI_METHODS if self.mode == "coverage" else TEST_METHODS
        for m in self.methods:
            if m not in valid:
                raise ValueError(f"method {m!r} not valid for mode {self.mode!r}")


@dataclass(frozen=True)
class SimResult:
    """Aggregated rates; degenerate replicates are excluded from denominators."""

    mode: str
    replicates: int
    evaluated: int
    degenerate: int
    rejection_rates: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)
    mean_length: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "replicates": self.replicates,
            "evaluated": self.evaluated,
            "degenerate": self.degenerate,
            "rejection_rates": dict(self.rejection_rates),
            "coverage": dict(self.coverage),
            "mean_length": dict(self.mean_length),
        }


def sample_stratum(
    sizes: Sequence[float],
    pi1: float,
    pi2: float,
    gamma: float,
    rng: np.random.Generator,
) -> StratumCounts:
    """Draw one stratum: multinomial bilateral triples, binomial unilateral counts."""
    n1, n2, m1, m2 = (int(round(v)) for v in sizes)
    row = _sample_row(
        n1, n2, m1, m2,
        _cell_triple(pi1, gamma), _cell_triple(pi2, gamma),
        pi1, pi2, rng,
    )
    return StratumCounts(
        group1=GroupCounts(*row[:5]), group2=GroupCounts(*row[5:])
    )


def _cell_triple(pi: float, gamma: float) -> np.ndarray:
    cp = cell_probabilities(pi, gamma)
    tri = np.array([cp.pb0, cp.pb1, cp.pb2])
    tri = np.clip(tri, 0.0, 1.0)
    return tri / tri.sum()


def _sample_row(n1, n2, m1, m2, tri1, tri2, pu1, pu2, rng) -> np.ndarray:
    row = np.empty(10)
    row[0:3] = rng.multinomial(n1, tri1) if n1 > 0 else 0.0
    r1 = int(rng.binomial(m1, pu1)) if m1 > 0 else 0
    row[3] = m1 - r1
    row[4] = r1
    row[5:8] = rng.multinomial(n2, tri2) if n2 > 0 else 0.0
    r2 = int(rng.binomial(m2, pu2)) if m2 > 0 else 0
    row[8] = m2 - r2
    row[9] = r2
    return row


# ---------------------------------------------------------------------------
# replicate workers


def _truth_state(truth) -> tuple:
    if isinstance(truth, CommonDiffParams):
        full = truth.to_full()
    else:
        full = truth
    return (
        tuple(float(x) for x in full.pi1),
        tuple(float(x) for x in full.pi2),
        tuple(float(x) for x in full.gamma),
    )


def _config_state(config: SimConfig) -> dict:
    return {
        "mode": config.mode,
        "sizes": tuple(tuple(int(round(v)) for v in row) for row in config.sizes),
        "truth": _truth_state(config.truth),
        "alpha": config.alpha,
        "seed": config.seed,
        "methods": tuple(config.methods),
        "eps": config.smooth_epsilon,
    }


def _replicate_rows(state, rng) -> np.ndarray:
    pi1, pi2, gamma = state["truth"]
    rows = np.empty((len(state["sizes"]), 10))
    for s, (n1, n2, m1, m2) in enumerate(state["sizes"]):
        tri1 = _cell_triple(pi1[s], gamma[s])
        tri2 = _cell_triple(pi2[s], gamma[s])
        rows[s] = _sample_row(
            n1, n2, m1, m2, tri1, tri2, pi1[s], pi2[s], rng
        )
    return rows


def _fit_pair(rows, eps):
    """Smooth when needed, then the two fits; None marks a degenerate replicate."""
    if eps > 0.0 and (rows == 0.0).any():
        rows = rows + eps
    h = kernels.prepare_counts(rows)
    p1, p2, g, _, conv, _ = kernels.fit_unconstrained(
        h, MAX_ITER, PARAM_TOL, SCORE_TOL
    )
    if not conv:
        return None
    d, cp1, cg, _, conv2, _ = kernels.fit_constrained(
        h, p1, p2, g, MAX_ITER, PARAM_TOL, SCORE_TOL
    )
    if not conv2:
        return None
    return h, (p1, p2, g), (d, cp1, cg)


def _tests_batch(state, start, stop) -> tuple[np.ndarray, np.ndarray]:
    methods = state["methods"]
    crit = state["crit"]
    reject = np.zeros((stop - start, len(methods)), dtype=np.uint8)
    degen = np.zeros(stop - start, dtype=np.uint8)
    for r in range(start, stop):
        rng = np.random.default_rng((state["seed"], r))
        rows = _replicate_rows(state, rng)
        fits = _fit_pair(rows, state["eps"])
        if fits is None:
            degen[r - start] = 1
            continue
        h, (p1, p2, g), (d, cp1, cg) = fits
        cp2 = [cp1[s] - d for s in range(len(cp1))]
        stats = {}
        if "LR" in methods:
            ll_a = kernels.loglik(h, p1, p2, g)
            ll_0 = kernels.loglik(h, cp1, cp2, cg)
            stats["LR"] = max(2.0 * (ll_a - ll_0), 0.0)
        if "SC" in methods:
            stats["SC"], _ = kernels.score_stat(h, cp1, cp2, cg)
        if "W" in methods:
            w, ok = kernels.wald_stat(h, p1, p2, g)
            if not ok:
                degen[r - start] = 1
                continue
            stats["W"] = w
        if any(not math.isfinite(stats[m]) for m in methods):
            degen[r - start] = 1
            continue
        for j, m in enumerate(methods):
            reject[r - start, j] = 1 if stats[m] > crit else 0
    return reject, degen


def _coverage_batch(state, start, stop):
    methods = state["methods"]
    z = state["z"]
    crit1 = state["crit1"]
    d0 = state["d0"]
    cover = np.zeros((stop - start, len(methods)), dtype=np.uint8)
    width = np.zeros((stop - start, len(methods)))
    degen = np.zeros(stop - start, dtype=np.uint8)
    for r in range(start, stop):
        rng = np.random.default_rng((state["seed"], r))
        rows = _replicate_rows(state, rng)
        fits = _fit_pair(rows, state["eps"])
        if fits is None:
            degen[r - start] = 1
            continue
        h, (p1, p2, g), (d, cp1, cg) = fits
        bad = False
        bounds = {}
        need_q = "W1" in methods or "W2" in methods
        if need_q:
            q, _ = kernels.stratum_dvar(h, p1, p2, g)
            q = np.asarray(q)
            dh = np.asarray(p1) - np.asarray(p2)
            sizes = np.asarray([sum(row) for row in state["sizes"]], dtype=float)
        for m in methods:
            if m == "W1" or m == "W2":
                w = sizes / sizes.sum() if m == "W1" else np.full(len(q), 1.0 / len(q))
                c = float(w @ dh)
                hw = z * math.sqrt(float((w * w) @ q))
                lo, hi = max(-1.0, c - hw), min(1.0, c + hw)
            elif m == "W3":
                v = kernels.info00_inv(h, d, cp1, cg)
                if not (math.isfinite(v) and v >= 0.0):
                    bad = True
                    break
                hw = z * math.sqrt(v)
                lo, hi = max(-1.0, d - hw), min(1.0, d + hw)
            else:
                kind = 0 if m == "PRO" else 1
                ll0 = kernels.loglik(
                    h, cp1, [cp1[s] - d for s in range(len(cp1))], cg
                )
                lo = kernels.ci_bound_search(
                    h, kind, -1, d, cp1, cg, ll0, crit1,
                    1e-4, MAX_ITER, PARAM_TOL, SCORE_TOL,
                )
                hi = kernels.ci_bound_search(
                    h, kind, +1, d, cp1, cg, ll0, crit1,
                    1e-4, MAX_ITER, PARAM_TOL, SCORE_TOL,
                )
                lo, hi = max(-1.0, lo), min(1.0, hi)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                bad = True
                break
            bounds[m] = (lo, hi)
        if bad:
            degen[r - start] = 1
            continue
        for j, m in enumerate(methods):
            lo, hi = bounds[m]
            cover[r - start, j] = 1 if lo <= d0 <= hi else 0
            width[r - start, j] = hi - lo
    return cover, width, degen


def _run_batch(args):
    state, start, stop = args
    if state["mode"] == "coverage":
        return (start,) + _coverage_batch(state, start, stop)
    return (start,) + _tests_batch(state, start, stop)


def _execute(config: SimConfig, state: dict):
    n = config.replicates
    workers = max(1, config.workers)
    chunks = []
    if workers == 1:
        chunks.append(_run_batch((state, 0, n)))
    else:
        step = max(1, -(-n // (workers * 4)))
        tasks = [(state, i, min(i + step, n)) for i in range(0, n, step)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_batch, tasks))
    return sorted(chunks, key=lambda c: c[0])


def _run_tests_mode(config: SimConfig) -> SimResult:
    state = _config_state(config)
    if config.alpha >= 1.0:
        state["crit"] = -math.inf
    elif config.alpha <= 0.0:
        state["crit"] = math.inf
    else:
        state["crit"] = numkit.chi2_quantile(
            1.0 - config.alpha, config.truth.n_strata - 1
        )
    n = config.replicates
    methods = state["methods"]
    reject = np.zeros((n, len(methods)), dtype=np.uint8)
    degen = np.zeros(n, dtype=np.uint8)
    for start, rej, dg in _execute(config, state):
        reject[start : start + len(dg)] = rej
        degen[start : start + len(dg)] = dg
    good = degen == 0
    evaluated = int(good.sum())
    denom = max(evaluated, 1)
    rates = {
        m: float(reject[good, j].sum()) / denom for j, m in enumerate(methods)
    }
    return SimResult(
        mode=config.mode,
        replicates=n,
        evaluated=evaluated,
        degenerate=int(degen.sum()),
        rejection_rates=rates,
    )


def run_type1(config: SimConfig) -> SimResult:
    """Empirical rejection rates under a common-difference truth."""
    if not isinstance(config.truth, CommonDiffParams):
        raise TypeError("type I error runs need a common-difference truth")
    if config.mode != "type1":
        config = replace(config, mode="type1")
    return _run_tests_mode(config)


def run_power(config: SimConfig) -> SimResult:
    """Empirical rejection rates under an unrestricted truth."""
    if config.mode != "power":
        config = replace(config, mode="power")
    return _run_tests_mode(config)


def run_coverage(config: SimConfig) -> SimResult:
    """Per-method coverage of the true common difference and mean widths."""
    if not isinstance(config.truth, CommonDiffParams):
        raise TypeError("coverage runs need a common-difference truth")
    if config.mode != "coverage":
        config = replace(config, mode="coverage")
    state = _config_state(config)
    state["d0"] = float(config.truth.d)
    if config.alpha >= 1.0:
        state["z"] = 0.0
        state["crit1"] = 0.0
    else:
        state["z"] = numkit.normal_quantile(1.0 - config.alpha / 2.0)
        state["crit1"] = numkit.chi2_quantile(1.0 - config.alpha, 1)
    n = config.replicates
    methods = state["methods"]
    cover = np.zeros((n, len(methods)), dtype=np.uint8)
    width = np.zeros((n, len(methods)))
    degen = np.zeros(n, dtype=np.uint8)
    for start, cv, wd, dg in _execute(config, state):
        cover[start : start + len(dg)] = cv
        width[start : start + len(dg)] = wd
        degen[start : start + len(dg)] = dg
    good = degen == 0
    evaluated = int(good.sum())
    denom = max(evaluated, 1)
    coverage = {
        m: float(cover[good, j].sum()) / denom for j, m in enumerate(methods)
    }
    lengths = {
        m: float(width[good, j].sum()) / denom for j, m in enumerate(methods)
    }
    return SimResult(
        mode="coverage",
        replicates=n,
        evaluated=evaluated,
        degenerate=int(degen.sum()),
        coverage=coverage,
        mean_length=lengths,
    )


# ---------------------------------------------------------------------------
# experiment grids


def expand_grid(doc: dict) -> list[SimConfig]:
    """Cross an experiment grid of named options into labelled configs.

    ``doc["grid"]`` maps the four axes "N", "d", "gamma", "pi" to
    ``{option_name: value}`` dictionaries: "N" options are per-stratum
    ``[n1, n2, m1, m2]`` rows, "d" options a scalar common difference (or a
    per-stratum list for power grids), "gamma"/"pi" options per-stratum
    lists.  Every combination becomes one config labelled
    ``"N1.d1.g1.p1"``-style from the option names.
    """
    grid = doc["grid"]
    for axis in ("N", "d", "gamma", "pi"):
        if axis not in grid:
            raise ValueError(f"grid: missing axis '{axis}'")
    mode = doc.get("mode", "coverage")
    out = []
    for n_name, sizes in grid["N"].items():
        for d_name, d_val in grid["d"].items():
            for g_name, gammas in grid["gamma"].items():
                for p_name, pis in grid["pi"].items():
                    if np.ndim(d_val) == 0:
                        truth = CommonDiffParams(float(d_val), pis, gammas)
                    else:
                        pi1 = np.asarray(pis, dtype=float)
                        truth = FullParams(
                            pi1, pi1 - np.asarray(d_val, dtype=float), gammas
                        )
                    truth.validate()
                    out.append(
                        SimConfig(
                            mode=mode,
                            sizes=tuple(tuple(float(v) for v in row) for row in sizes),
                            truth=truth,
                            replicates=int(doc.get("replicates", 10000)),
                            alpha=float(doc.get("alpha", 0.05)),
                            seed=int(doc.get("seed", 0)),
                            methods=tuple(doc.get("methods", ())),
                            workers=int(doc.get("workers", 1)),
                            smooth_epsilon=float(doc.get("smooth_epsilon", 1e-4)),
                            label=f"{n_name}.{d_name}.{g_name}.{p_name}",
                        )
                    )
    return out


# ---------------------------------------------------------------------------
# random parameter sets


def random_param_sets(
    n_strata: int,
    count: int,
    rng: np.random.Generator,
    common_d: bool = True,
):
    """Rejection-sample parameter sets with every cell probability in (0.1, 1).

    Proposals are uniform: gamma_s, pi_s1 on (0, 1) and the difference on
    (-1, 1); a proposal is kept only if all ten per-stratum cell
    probabilities land strictly inside (0.1, 1).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    n_d = 1 if common_d else n_strata
    while len(out) < count:
        batch = 2048
        u = rng.random((batch, n_d + 2 * n_strata))
        d = -1.0 + 2.0 * u[:, :n_d]
        pi1 = u[:, n_d : n_d + n_strata]
        gamma = u[:, n_d + n_strata :]
        pi2 = pi1 - d  # broadcasts over strata for a common difference
        ok = np.ones(batch, dtype=bool)
        for pi in (pi1, pi2):
            pb0 = 1.0 - 2.0 * pi + pi * gamma
            pb1 = 2.0 * pi * (1.0 - gamma)
            pb2 = pi * gamma
            for cell in (pb0, pb1, pb2, 1.0 - pi, pi):
                ok &= ((cell > 0.1) & (cell < 1.0)).all(axis=1)
        for i in np.nonzero(ok)[0]:
            if len(out) >= count:
                break
            if common_d:
                out.append(
                    CommonDiffParams(float(d[i, 0]), pi1[i].copy(), gamma[i].copy())
                )
            else:
                out.append(
                    FullParams(pi1[i].copy(), (pi1[i] - d[i]).copy(), gamma[i].copy())
                )
    return out
