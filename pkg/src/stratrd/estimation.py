"""Maximum-likelihood fits: unrestricted, common-difference, and fixed-difference.

The unrestricted fit alternates an exact quadratic solve for each group's pi
with damped Newton updates of the shared gamma, stratum by stratum.  The
common-difference fit cycles per-stratum 2x2 Newton updates of (pi1, gamma)
with a pooled Newton update of d.  The fixed-difference fit alternates a
Newton update of pi1 with an exact cubic solve for gamma.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ._backend import kernels
from .model import (
    CommonDiffParams,
    FullParams,
    GroupCounts,
    StratumCounts,
    StudyData,
)

__all__ = [
    "FitResult",
    "InfeasibleConstraintError",
    "MAX_ITER",
    "PARAM_TOL",
    "SCORE_TOL",
    "solve_pi_quadratic",
    "newton_gamma_step",
    "fit_unconstrained",
    "fit_constrained",
    "fit_conditional",
]

MAX_ITER = 10000
PARAM_TOL = 1e-10
SCORE_TOL = 1e-8


class InfeasibleConstraintError(ValueError):
    """A fixed difference admits no valid parameters in some stratum."""


@dataclass(frozen=True)
class FitResult:
    """A converged (or best-effort) likelihood maximizer.

    ``converged`` means the iteration met its parameter-change or score
    tolerance; for boundary fits (``interior`` False) the scores of clamped
    coordinates are excluded from that criterion.
    """

    params: FullParams | CommonDiffParams
    loglik: float
    iterations: int
    converged: bool
    interior: bool


def solve_pi_quadratic(g: GroupCounts, gamma: float) -> tuple[float, bool]:
    """Stationary pi for one group at fixed gamma; flags non-interior roots."""
    return kernels.solve_pi_quadratic(g.n0, g.n1, g.n2, g.m0, g.m1, gamma)


def newton_gamma_step(
    stratum: StratumCounts, pi1: float, pi2: float, gamma: float
) -> tuple[float, bool]:
    """One Newton update of gamma; flag is False when the Hessian vanishes."""
    return kernels.newton_gamma_step(stratum.as_row(), pi1, pi2, gamma)


def fit_unconstrained(
    data: StudyData,
    max_iter: int = MAX_ITER,
    param_tol: float = PARAM_TOL,
    score_tol: float = SCORE_TOL,
) -> FitResult:
    """Stratum-by-stratum maximum likelihood under the unrestricted model."""
    h = data.prepared()
    pi1, pi2, gamma, iters, conv, interior = kernels.fit_unconstrained(
        h, max_iter, param_tol, score_tol
    )
    params = FullParams(pi1, pi2, gamma)
    ll = kernels.loglik(h, params.pi1, params.pi2, params.gamma)
    return FitResult(params, ll, iters, conv, interior)


def fit_constrained(
    data: StudyData,
    max_iter: int = MAX_ITER,
    param_tol: float = PARAM_TOL,
    score_tol: float = SCORE_TOL,
    unconstrained: Optional[FitResult] = None,
) -> FitResult:
    """Maximum likelihood under a common risk difference.

    Initialized from the unrestricted fit (computed here unless supplied)
    with d started at the mean of the per-stratum fitted differences.
    """
    if unconstrained is None:
        unconstrained = fit_unconstrained(data, max_iter, param_tol, score_tol)
    up = unconstrained.params
    h = data.prepared()
    d, pi1, gamma, iters, conv, interior = kernels.fit_constrained(
        h, up.pi1, up.pi2, up.gamma, max_iter, param_tol, score_tol
    )
    params = CommonDiffParams(d, pi1, gamma)
    ll = kernels.loglik(h, params.pi1, params.pi2, params.gamma)
    return FitResult(params, ll, iters, conv, interior)


def fit_conditional(
    data: StudyData,
    d0: float,
    max_iter: int = MAX_ITER,
    param_tol: float = PARAM_TOL,
    score_tol: float = SCORE_TOL,
    constrained: Optional[FitResult] = None,
) -> FitResult:
    """Maximum likelihood with the common difference fixed at ``d0``.

    Initialized from the common-difference fit (computed here unless
    supplied).  Strata decouple once d is fixed, so each is solved
    independently.
    """
    if abs(d0) >= 1.0 - 1e-9:
        raise InfeasibleConstraintError(
            f"fixed difference d0={d0} admits no valid parameters"
        )
    if constrained is None:
        constrained = fit_constrained(data, max_iter, param_tol, score_tol)
    cp = constrained.params
    h = data.prepared()
    pi1, gamma, iters, conv, interior = kernels.fit_conditional(
        h, d0, cp.pi1, cp.gamma, max_iter, param_tol, score_tol
    )
    params = CommonDiffParams(d0, pi1, gamma)
    ll = kernels.loglik(h, params.pi1, params.pi2, params.gamma)
    return FitResult(params, ll, iters, conv, interior)
