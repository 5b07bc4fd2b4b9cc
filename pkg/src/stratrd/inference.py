"""Fisher information blocks and the three homogeneity tests.

Each test compares the per-stratum risk differences across strata and refers
the statistic to a chi-square distribution with S - 1 degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from ._backend import kernels
from .estimation import FitResult, fit_constrained, fit_unconstrained
from .model import ParameterDomainError, StudyData

__all__ = [
    "FisherBlock",
    "TestResult",
    "fisher_block",
    "lr_test",
    "score_test",
    "wald_test",
    "tridiag_inverse",
    "chi2_sf",
    "chi2_quantile",
]

chi2_sf = numkit.chi2_sf
chi2_quantile = numkit.chi2_quantile


@dataclass(frozen=True)
class FisherBlock:
    """Expected information for one stratum's (pi1, pi2, gamma).

    The (pi1, pi2) cross entry is identically zero; the remaining five
    entries are stored explicitly.
    """

    i11: float
    i22: float
    i13: float
    i23: float
    i33: float

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.i11, 0.0, self.i13],
                [0.0, self.i22, self.i23],
                [self.i13, self.i23, self.i33],
            ]
        )


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    fit_h0: FitResult | None
    fit_ha: FitResult | None
    flags: tuple[str, ...] = ()


def fisher_block(
    n1: float, n2: float, m1: float, m2: float,
    pi1: float, pi2: float, gamma: float,
) -> FisherBlock:
    """Per-stratum expected information from the group sizes and parameters."""
    _check_interior(pi1, pi2, gamma)
    e11a, e13a, e33a = kernels.group_expected_info(n1, m1, pi1, gamma)
    e11b, e13b, e33b = kernels.group_expected_info(n2, m2, pi2, gamma)
    return FisherBlock(i11=e11a, i22=e11b, i13=e13a, i23=e13b, i33=e33a + e33b)


def _check_interior(pi1: float, pi2: float, gamma: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise ParameterDomainError(f"gamma={gamma} not strictly inside (0, 1)")
    hi = 1.0 / (2.0 - gamma)
    for pi, tag in ((pi1, "pi1"), (pi2, "pi2")):
        if not 0.0 < pi < hi:
            raise ParameterDomainError(
                f"{tag}={pi} not strictly inside (0, {hi:.6g})"
            )


def _require_tests_applicable(data: StudyData) -> None:
    if data.n_strata < 2:
        raise ValueError("df = 0: need S >= 2 for homogeneity tests")


def lr_test(data: StudyData, fit_ha: FitResult | None = None,
            fit_h0: FitResult | None = None) -> TestResult:
    """Likelihood-ratio test of a common risk difference across strata."""
    _require_tests_applicable(data)
    if fit_ha is None:
        fit_ha = fit_unconstrained(data)
    if fit_h0 is None:
        fit_h0 = fit_constrained(data, unconstrained=fit_ha)
    stat = 2.0 * (fit_ha.loglik - fit_h0.loglik)
    flags = ()
    if stat < 0.0:
        if stat < -1e-8:
            raise RuntimeError(
                f"negative likelihood-ratio statistic {stat}: optimizer fault"
            )
        stat = 0.0
        flags = ("clamped-negative",)
    df = data.n_strata - 1
    return TestResult(stat, df, chi2_sf(stat, df), fit_h0, fit_ha, flags)


def score_test(data: StudyData, fit_h0: FitResult | None = None) -> TestResult:
    """Score test evaluated at the common-difference fit."""
    _require_tests_applicable(data)
    if fit_h0 is None:
        fit_h0 = fit_constrained(data)
    cp = fit_h0.params
    stat, ok = kernels.score_stat(data.prepared(), cp.pi1, cp.pi2, cp.gamma)
    flags = () if ok else ("ridged-singular-block",)
    if not fit_h0.interior:
        flags = flags + ("boundary-adjacent",)
    df = data.n_strata - 1
    return TestResult(stat, df, chi2_sf(stat, df), fit_h0, None, flags)


def wald_test(data: StudyData, fit_ha: FitResult | None = None) -> TestResult:
    """Wald-type test evaluated at the unrestricted fit.

    The contrast covariance is tridiagonal; its inverse goes through the
    theta/phi recurrences with a dense fallback when those degenerate.
    """
    _require_tests_applicable(data)
    if fit_ha is None:
        fit_ha = fit_unconstrained(data)
    fp = fit_ha.params
    h = data.prepared()
    stat, ok = kernels.wald_stat(h, fp.pi1, fp.pi2, fp.gamma)
    flags = ()
    if not ok:
        q, _ = kernels.stratum_dvar(h, fp.pi1, fp.pi2, fp.gamma)
        q = np.asarray(q)
        s = len(q)
        mid = np.zeros((s - 1, s - 1))
        for i in range(s - 1):
            mid[i, i] = q[i] + q[i + 1]
            if i + 1 < s - 1:
                mid[i, i + 1] = mid[i + 1, i] = -q[i + 1]
        v = -np.diff(fp.differences())
        stat = float(v @ numkit.dense_solve(mid, v))
        flags = ("dense-fallback",)
    if not fit_ha.interior:
        flags = flags + ("boundary-adjacent",)
    df = data.n_strata - 1
    return TestResult(stat, df, chi2_sf(stat, df), None, fit_ha, flags)


def tridiag_inverse(a, b) -> np.ndarray:
    """Inverse of the symmetric tridiagonal matrix with diagonal ``a``, off-diagonal ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or len(b) != max(len(a) - 1, 0):
        raise ValueError("need diagonal length n and off-diagonal length n-1")
    flat = kernels.tridiag_inverse(a, b)
    if flat is None:
        raise numkit.SingularMatrixError(
            "tridiagonal matrix is singular (determinant recurrence hit zero)"
        )
    n = len(a)
    return np.asarray(flat, dtype=float).reshape(n, n)
