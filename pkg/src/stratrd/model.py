"""Data layout, probability mapping, log-likelihood, and analytic scores.

The intraclass model for paired-organ binary outcomes: a subject responds at
one site with probability pi, and at the second site, conditional on the
first, with probability gamma (shared by both groups of a stratum).  Each
stratum contributes a bilateral cohort (0/1/2 responses) and a unilateral
cohort (0/1 responses) for two groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._backend import kernels

PROB_TOL = 1e-12

__all__ = [
    "ParameterDomainError",
    "GroupCounts",
    "StratumCounts",
    "StudyData",
    "FullParams",
    "CommonDiffParams",
    "CellProbs",
    "cell_probabilities",
    "log_likelihood",
    "score_vector",
    "score_wrt_d",
    "smooth_zero_cells",
]


class ParameterDomainError(ValueError):
    """Parameters outside the valid cell-probability region."""


@dataclass(frozen=True)
class GroupCounts:
    """Observed counts for one group: bilateral triple and unilateral pair.

    ``n0, n1, n2`` count bilateral subjects with 0/1/2 responses; ``m0, m1``
    count unilateral subjects with 0/1 responses.  Stored as nonnegative
    reals so cell smoothing composes with every downstream operation.
    """

    n0: float
    n1: float
    n2: float
    m0: float
    m1: float

    def __post_init__(self):
        for name in ("n0", "n1", "n2", "m0", "m1"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"count {name} must be finite and >= 0, got {v}")

    @property
    def n_total(self) -> float:
        return self.n0 + self.n1 + self.n2

    @property
    def m_total(self) -> float:
        return self.m0 + self.m1


@dataclass(frozen=True)
class StratumCounts:
    group1: GroupCounts
    group2: GroupCounts

    def as_row(self) -> tuple[float, ...]:
        g1, g2 = self.group1, self.group2
        return (
            g1.n0, g1.n1, g1.n2, g1.m0, g1.m1,
            g2.n0, g2.n1, g2.n2, g2.m0, g2.m1,
        )


@dataclass(frozen=True)
class StudyData:
    """Ordered strata; tests of difference homogeneity need at least two."""

    strata: tuple[StratumCounts, ...]

    def __init__(self, strata: Iterable[StratumCounts]):
        object.__setattr__(self, "strata", tuple(strata))
        if len(self.strata) < 1:
            raise ValueError("a study needs at least one stratum")

    @property
    def n_strata(self) -> int:
        return len(self.strata)

    def counts_array(self) -> np.ndarray:
        return np.array([s.as_row() for s in self.strata], dtype=float)

    def prepared(self):
        return kernels.prepare_counts(self.counts_array())


def _as_prob_array(x, name: str, length: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (length,):
        raise ValueError(f"{name} must have length {length}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class FullParams:
    """Unrestricted parameters: per-stratum (pi1, pi2, gamma)."""

    pi1: np.ndarray
    pi2: np.ndarray
    gamma: np.ndarray

    def __init__(self, pi1, pi2, gamma):
        pi1 = np.atleast_1d(np.asarray(pi1, dtype=float))
        object.__setattr__(self, "pi1", pi1)
        object.__setattr__(self, "pi2", _as_prob_array(pi2, "pi2", len(pi1)))
        object.__setattr__(self, "gamma", _as_prob_array(gamma, "gamma", len(pi1)))

    @property
    def n_strata(self) -> int:
        return len(self.pi1)

    def validate(self, tol: float = PROB_TOL) -> None:
        for s in range(self.n_strata):
            g = self.gamma[s]
            if not -tol <= g <= 1.0 + tol:
                raise ParameterDomainError(f"gamma[{s}]={g} outside [0, 1]")
            hi = 1.0 / (2.0 - min(g, 1.0))
            for pi, tag in ((self.pi1[s], "pi1"), (self.pi2[s], "pi2")):
                if not -tol <= pi <= hi + tol:
                    raise ParameterDomainError(
                        f"{tag}[{s}]={pi} outside [0, 1/(2-gamma)]=[0, {hi:.6g}]"
                    )

    def is_interior(self, margin: float = 0.0) -> bool:
        for s in range(self.n_strata):
            g = self.gamma[s]
            if not margin < g < 1.0 - margin:
                return False
            hi = 1.0 / (2.0 - g)
            for pi in (self.pi1[s], self.pi2[s]):
                if not margin < pi < hi - margin:
                    return False
        return True

    def flat(self) -> np.ndarray:
        """Parameter vector ordered (pi_11, pi_12, gamma_1, ...)."""
        out = np.empty(3 * self.n_strata)
        out[0::3] = self.pi1
        out[1::3] = self.pi2
        out[2::3] = self.gamma
        return out

    def differences(self) -> np.ndarray:
        return self.pi1 - self.pi2


@dataclass(frozen=True)
class CommonDiffParams:
    """Null-restricted parameters: common difference d plus (pi1, gamma) per stratum."""

    d: float
    pi1: np.ndarray
    gamma: np.ndarray

    def __init__(self, d, pi1, gamma):
        object.__setattr__(self, "d", float(d))
        pi1 = np.atleast_1d(np.asarray(pi1, dtype=float))
        object.__setattr__(self, "pi1", pi1)
        object.__setattr__(self, "gamma", _as_prob_array(gamma, "gamma", len(pi1)))

    @property
    def n_strata(self) -> int:
        return len(self.pi1)

    @property
    def pi2(self) -> np.ndarray:
        return self.pi1 - self.d

    def to_full(self) -> FullParams:
        return FullParams(self.pi1, self.pi2, self.gamma)

    def validate(self, tol: float = PROB_TOL) -> None:
        if not -1.0 - tol <= self.d <= 1.0 + tol:
            raise ParameterDomainError(f"d={self.d} outside [-1, 1]")
        self.to_full().validate(tol)

    def flat(self) -> np.ndarray:
        """Parameter vector ordered (d, pi_11, gamma_1, ..., pi_S1, gamma_S)."""
        out = np.empty(1 + 2 * self.n_strata)
        out[0] = self.d
        out[1::2] = self.pi1
        out[2::2] = self.gamma
        return out


@dataclass(frozen=True)
class CellProbs:
    pb0: float
    pb1: float
    pb2: float
    pu0: float
    pu1: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.pb0, self.pb1, self.pb2, self.pu0, self.pu1)


def cell_probabilities(pi: float, gamma: float) -> CellProbs:
    """Cell probabilities of the bilateral triple and the unilateral pair.

    pb0 = 1 - 2*pi + pi*gamma, pb1 = 2*pi*(1 - gamma), pb2 = pi*gamma,
    pu0 = 1 - pi, pu1 = pi.
    """
    if not -PROB_TOL <= gamma <= 1.0 + PROB_TOL:
        raise ParameterDomainError(f"gamma={gamma} outside [0, 1]")
    hi = 1.0 / (2.0 - min(gamma, 1.0))
    if not -PROB_TOL <= pi <= hi + PROB_TOL:
        raise ParameterDomainError(
            f"pi={pi} outside [0, 1/(2-gamma)]=[0, {hi:.6g}]"
        )
    return CellProbs(
        pb0=1.0 - 2.0 * pi + pi * gamma,
        pb1=2.0 * pi * (1.0 - gamma),
        pb2=pi * gamma,
        pu0=1.0 - pi,
        pu1=pi,
    )


def _full_from(params) -> FullParams:
    return params.to_full() if isinstance(params, CommonDiffParams) else params


def log_likelihood(data: StudyData, params) -> float:
    """Log-likelihood without the multinomial normalizing constants.

    Positive counts on zero-probability cells yield ``-inf``; zero counts on
    zero-probability cells contribute nothing (0 log 0 := 0).
    """
    full = _full_from(params)
    if full.n_strata != data.n_strata:
        raise ValueError("parameter and data stratum counts differ")
    full.validate()
    return kernels.loglik(data.prepared(), full.pi1, full.pi2, full.gamma)


def _require_interior(full: FullParams) -> None:
    if not full.is_interior():
        raise ParameterDomainError(
            "scores are defined only at strictly interior parameters"
        )


def score_vector(data: StudyData, params) -> np.ndarray:
    """First derivatives ordered (d/dpi_11, d/dpi_12, d/dgamma_1, ...)."""
    full = _full_from(params)
    if full.n_strata != data.n_strata:
        raise ValueError("parameter and data stratum counts differ")
    full.validate()
    _require_interior(full)
    return np.asarray(
        kernels.score(data.prepared(), full.pi1, full.pi2, full.gamma)
    )


def score_wrt_d(data: StudyData, cparams: CommonDiffParams) -> float:
    """Derivative in d of the common-difference reparametrization."""
    cparams.validate()
    _require_interior(cparams.to_full())
    return kernels.score_wrt_d(
        data.prepared(), cparams.d, cparams.pi1, cparams.gamma
    )


def smooth_zero_cells(data: StudyData, epsilon: float = 1e-4) -> StudyData:
    """Add ``epsilon`` to every cell count (the zero-cell remedy)."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    if epsilon == 0.0:
        return data
    return StudyData(
        StratumCounts(
            group1=GroupCounts(
                s.group1.n0 + epsilon,
                s.group1.n1 + epsilon,
                s.group1.n2 + epsilon,
                s.group1.m0 + epsilon,
                s.group1.m1 + epsilon,
            ),
            group2=GroupCounts(
                s.group2.n0 + epsilon,
                s.group2.n1 + epsilon,
                s.group2.n2 + epsilon,
                s.group2.m0 + epsilon,
                s.group2.m1 + epsilon,
            ),
        )
        for s in data.strata
    )


def has_zero_cells(data: StudyData) -> bool:
    return any(v == 0.0 for s in data.strata for v in s.as_row())


def study_from_rows(rows: Sequence[Sequence[float]]) -> StudyData:
    """Build a study from S rows of ten counts (group 1 five, group 2 five)."""
    strata = []
    for row in rows:
        if len(row) != 10:
            raise ValueError("each stratum row needs exactly 10 counts")
        vals = [float(v) for v in row]
        strata.append(
            StratumCounts(
                group1=GroupCounts(*vals[:5]), group2=GroupCounts(*vals[5:])
            )
        )
    return StudyData(strata)
