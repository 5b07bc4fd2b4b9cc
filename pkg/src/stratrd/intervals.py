"""Five confidence intervals for the common risk difference.

W1/W2 are Wald intervals around a weighted combination of the per-stratum
fitted differences (sample-based and uniform weights).  W3 is a Wald interval
around the common-difference fit using the restricted information matrix.
PRO inverts the likelihood-ratio statistic and SC the score statistic, both
by a step-and-shrink search along d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numkit
from ._backend import kernels
from .estimation import FitResult, fit_constrained, fit_unconstrained
from .model import CommonDiffParams, StudyData

__all__ = [
    "CiResult",
    "CommonInfoMatrix",
    "common_info",
    "ci_wald_unconstrained",
    "ci_wald_constrained",
    "ci_profile_likelihood",
    "ci_score",
    "all_intervals",
]

SEARCH_STEP = 0.1
SEARCH_SHRINK = 1.0 / math.pi
SEARCH_TOL = 1e-4


@dataclass(frozen=True)
class CiResult:
    method: str
    lower: float
    upper: float
    center_estimate: float
    alpha: float
    flags: tuple[str, ...] = ()

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, d: float) -> bool:
        return self.lower <= d <= self.upper


@dataclass(frozen=True)
class CommonInfoMatrix:
    """Arrow-shaped information for (d, pi_11, gamma_1, ..., pi_S1, gamma_S).

    Dense first row/column coupling d to the per-stratum 2x2 diagonal blocks.
    """

    i_d: float
    i_s1: np.ndarray
    i_s2: np.ndarray
    i_s11: np.ndarray
    i_s12: np.ndarray
    i_s22: np.ndarray

    def matrix(self) -> np.ndarray:
        s = len(self.i_s1)
        out = np.zeros((2 * s + 1, 2 * s + 1))
        out[0, 0] = self.i_d
        for k in range(s):
            i, j = 1 + 2 * k, 2 + 2 * k
            out[0, i] = out[i, 0] = self.i_s1[k]
            out[0, j] = out[j, 0] = self.i_s2[k]
            out[i, i] = self.i_s11[k]
            out[i, j] = out[j, i] = self.i_s12[k]
            out[j, j] = self.i_s22[k]
        return out

    def inv00_cofactor_ratio(self) -> float:
        """Fast path for the (1,1) inverse entry: block-determinant products."""
        det2 = self.i_s11 * self.i_s22 - self.i_s12 * self.i_s12
        a = float(np.prod(det2))
        b = self.i_d * a
        for s in range(len(det2)):
            rest = float(np.prod(np.delete(det2, s)))
            b += (
                -self.i_s1[s]
                * (self.i_s1[s] * self.i_s22[s] - self.i_s2[s] * self.i_s12[s])
                + self.i_s2[s]
                * (self.i_s1[s] * self.i_s12[s] - self.i_s2[s] * self.i_s11[s])
            ) * rest
        return a / b


def common_info(data: StudyData, cparams: CommonDiffParams) -> CommonInfoMatrix:
    """Expected information of the common-difference parametrization."""
    from .inference import _check_interior

    rows = data.counts_array()
    s_count = data.n_strata
    i_s1 = np.empty(s_count)
    i_s2 = np.empty(s_count)
    i_s11 = np.empty(s_count)
    i_s12 = np.empty(s_count)
    i_s22 = np.empty(s_count)
    i_d = 0.0
    for s in range(s_count):
        p1 = float(cparams.pi1[s])
        p2 = p1 - cparams.d
        g = float(cparams.gamma[s])
        _check_interior(p1, p2, g)
        n1 = rows[s, 0] + rows[s, 1] + rows[s, 2]
        m1 = rows[s, 3] + rows[s, 4]
        n2 = rows[s, 5] + rows[s, 6] + rows[s, 7]
        m2 = rows[s, 8] + rows[s, 9]
        e11a, e13a, e33a = kernels.group_expected_info(n1, m1, p1, g)
        e11b, e13b, e33b = kernels.group_expected_info(n2, m2, p2, g)
        i_d += e11b
        i_s1[s] = -e11b
        i_s2[s] = -e13b
        i_s11[s] = e11a + e11b
        i_s12[s] = e13a + e13b
        i_s22[s] = e33a + e33b
    return CommonInfoMatrix(i_d, i_s1, i_s2, i_s11, i_s12, i_s22)


def _clamp_interval(center: float, halfwidth: float) -> tuple[float, float]:
    return max(-1.0, center - halfwidth), min(1.0, center + halfwidth)


def ci_wald_unconstrained(
    data: StudyData,
    weighting: str = "sample",
    alpha: float = 0.05,
    fit_ha: FitResult | None = None,
) -> CiResult:
    """Wald interval around weighted per-stratum differences (W1/W2).

    ``weighting`` is "sample" for (N_s + M_s)/N_all weights or "uniform"
    for 1/S.
    """
    if weighting not in ("sample", "uniform"):
        raise ValueError("weighting must be 'sample' or 'uniform'")
    if fit_ha is None:
        fit_ha = fit_unconstrained(data)
    fp = fit_ha.params
    rows = data.counts_array()
    sizes = rows.sum(axis=1)
    s_count = data.n_strata
    if weighting == "sample":
        w = sizes / sizes.sum()
        method = "W1"
    else:
        w = np.full(s_count, 1.0 / s_count)
        method = "W2"
    q, ok = kernels.stratum_dvar(data.prepared(), fp.pi1, fp.pi2, fp.gamma)
    flags = () if ok else ("ridged-singular-block",)
    if not fit_ha.interior:
        flags = flags + ("boundary-adjacent",)
    center = float(w @ fp.differences())
    halfwidth = numkit.normal_quantile(1.0 - alpha / 2.0) * math.sqrt(
        float((w * w) @ np.asarray(q))
    )
    lo, hi = _clamp_interval(center, halfwidth)
    return CiResult(method, lo, hi, center, alpha, flags)


def ci_wald_constrained(
    data: StudyData, alpha: float = 0.05, fit_h0: FitResult | None = None
) -> CiResult:
    """Wald interval around the common-difference fit (W3).

    The variance is the (1,1) entry of the inverse restricted information,
    taken from a dense inverse; the cofactor-ratio fast path is evaluated
    alongside and must agree to 1e-9.
    """
    if fit_h0 is None:
        fit_h0 = fit_constrained(data)
    cp = fit_h0.params
    info = common_info(data, cp)
    flags = ()
    try:
        v_dense = float(numkit.dense_inverse(info.matrix())[0, 0])
    except numkit.SingularMatrixError:
        v_dense = float(np.linalg.pinv(info.matrix())[0, 0])
        flags = ("pseudo-inverse",)
    else:
        v_fast = info.inv00_cofactor_ratio()
        if abs(v_fast - v_dense) > 1e-9:
            raise RuntimeError(
                "restricted-information variance mismatch: "
                f"cofactor ratio {v_fast!r} vs dense {v_dense!r}"
            )
    if not fit_h0.interior:
        flags = flags + ("boundary-adjacent",)
    halfwidth = numkit.normal_quantile(1.0 - alpha / 2.0) * math.sqrt(v_dense)
    lo, hi = _clamp_interval(cp.d, halfwidth)
    return CiResult("W3", lo, hi, cp.d, alpha, flags)


def _searched_interval(
    data: StudyData, kind: int, alpha: float, fit_h0: FitResult | None, method: str
) -> CiResult:
    if fit_h0 is None:
        fit_h0 = fit_constrained(data)
    cp = fit_h0.params
    h = data.prepared()
    crit = numkit.chi2_quantile(1.0 - alpha, 1) if alpha < 1.0 else 0.0
    from .estimation import MAX_ITER, PARAM_TOL, SCORE_TOL

    lo = kernels.ci_bound_search(
        h, kind, -1, cp.d, cp.pi1, cp.gamma, fit_h0.loglik, crit,
        SEARCH_TOL, MAX_ITER, PARAM_TOL, SCORE_TOL,
    )
    hi = kernels.ci_bound_search(
        h, kind, +1, cp.d, cp.pi1, cp.gamma, fit_h0.loglik, crit,
        SEARCH_TOL, MAX_ITER, PARAM_TOL, SCORE_TOL,
    )
    lo, hi = max(-1.0, lo), min(1.0, hi)
    flags = () if fit_h0.interior else ("boundary-adjacent",)
    return CiResult(method, lo, hi, cp.d, alpha, flags)


def ci_profile_likelihood(
    data: StudyData, alpha: float = 0.05, fit_h0: FitResult | None = None
) -> CiResult:
    """Bounds where the fixed-difference likelihood-ratio statistic crosses
    its one-degree chi-square quantile (PRO)."""
    return _searched_interval(data, 0, alpha, fit_h0, "PRO")


def ci_score(
    data: StudyData, alpha: float = 0.05, fit_h0: FitResult | None = None
) -> CiResult:
    """Bounds where the fixed-difference score statistic crosses its
    one-degree chi-square quantile (SC)."""
    return _searched_interval(data, 1, alpha, fit_h0, "SC")


def all_intervals(
    data: StudyData,
    alpha: float = 0.05,
    methods: tuple[str, ...] = ("W1", "W2", "W3", "PRO", "SC"),
) -> list[CiResult]:
    fit_ha = fit_unconstrained(data)
    fit_h0 = fit_constrained(data, unconstrained=fit_ha)
    out = []
    for m in methods:
        if m == "W1":
            out.append(ci_wald_unconstrained(data, "sample", alpha, fit_ha))
        elif m == "W2":
            out.append(ci_wald_unconstrained(data, "uniform", alpha, fit_ha))
        elif m == "W3":
            out.append(ci_wald_constrained(data, alpha, fit_h0))
        elif m == "PRO":
            out.append(ci_profile_likelihood(data, alpha, fit_h0))
        elif m == "SC":
            out.append(ci_score(data, alpha, fit_h0))
        else:
            raise ValueError(f"unknown interval method {m!r}")
    return out
