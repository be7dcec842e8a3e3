"""Partial correlations and conditional-independence tests.

Four tests are selectable by the tuner: Fisher's Z transform of the partial
correlation, the Student's t test on the raw coefficient, a chi-squared test
of the Gaussian mutual information, and the same mutual-information test on
a James-Stein shrinkage estimate of the correlation matrix.

All tests share one convention: the null hypothesis is a zero partial
correlation, and a pair is declared independent when p_value > alpha.
Scalar and vectorized callers go through the same p-value kernels, so
decisions agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .exceptions import (
    IllConditionedDataError,
    InsufficientSamplesError,
    InvalidInputError,
)
from .simulate import Dataset

# Correlations are clamped away from +-1 before any logarithm.
R_EPS = 1e-12


class TestKind(Enum):
    """The selectable independence tests, in their canonical encoding order."""

    FISHER_Z = "zf"
    STUDENT_T = "t"
    MUTUAL_INFO_CHI2 = "mi"
    MUTUAL_INFO_SHRINK = "mi-sh"

    @classmethod
    def coerce(cls, value: "TestKind | str") -> "TestKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise InvalidInputError(f"unknown test {value!r}; expected one of: {names}")


TEST_KINDS: tuple[TestKind, ...] = tuple(TestKind)

ALPHA_LOG10_MIN = -5.0
ALPHA_LOG10_MAX = -1.0


@dataclass(frozen=True)
class PcParams:
    """The two tuned hyperparameters: significance level and test kind.

    alpha must satisfy log10(alpha) in [-5, -1].
    """

    alpha: float
    test: TestKind

    def __init__(self, alpha: float, test: TestKind | str):
        alpha = float(alpha)
        if not (alpha > 0 and math.isfinite(alpha)):
            raise InvalidInputError(f"alpha must be positive, got {alpha}")
        la = math.log10(alpha)
        if not (ALPHA_LOG10_MIN - 1e-9 <= la <= ALPHA_LOG10_MAX + 1e-9):
            raise InvalidInputError(
                f"log10(alpha) must lie in [{ALPHA_LOG10_MIN}, {ALPHA_LOG10_MAX}], got {la}"
            )
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "test", TestKind.coerce(test))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    independent: bool
    df_or_scale: float


def partial_correlation(
    corr: np.ndarray, i: int, j: int, cond: Iterable[int] = ()
) -> float:
    """Partial correlation of variables i and j given the set cond.

    Computed as -Om[i,j] / sqrt(Om[i,i] * Om[j,j]) from the inverse Om of
    the correlation submatrix over {i, j} | cond; clamped to [-1, 1].
    Raises IllConditionedDataError when the submatrix cannot be inverted.
    """
    cond = tuple(int(k) for k in cond)
    if i == j or i in cond or j in cond:
        raise InvalidInputError(f"indices must be distinct: i={i}, j={j}, cond={cond}")
    if not cond:
        return float(np.clip(corr[i, j], -1.0, 1.0))
    idx = (i, j, *cond)
    sub = corr[np.ix_(idx, idx)]
    try:
        om = np.linalg.inv(sub)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedDataError(
            f"singular correlation submatrix for ({i}, {j} | {cond})"
        ) from exc
    den = om[0, 0] * om[1, 1]
    if not (np.isfinite(den) and den > 0 and np.isfinite(om[0, 1])):
        raise IllConditionedDataError(
            f"non-invertible correlation submatrix for ({i}, {j} | {cond})"
        )
    return float(np.clip(-om[0, 1] / math.sqrt(den), -1.0, 1.0))


def _clamped(r):
    return np.clip(np.asarray(r, dtype=float), -1.0 + R_EPS, 1.0 - R_EPS)


def fisher_z_pvalues(r, N: int, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized statistic and p-value of the Fisher Z test."""
    z = np.arctanh(_clamped(r))
    stat = math.sqrt(N - c - 3.0) * np.abs(z)
    return stat, special.erfc(stat / math.sqrt(2.0))


def student_t_pvalues(r, N: int, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized statistic and p-value of the Student t test (df = N - c - 2)."""
    rc = _clamped(r)
    df = N - c - 2
    t = rc * np.sqrt(df / (1.0 - rc**2))
    return t, 2.0 * special.stdtr(df, -np.abs(t))


def mi_chi2_pvalues(r, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized 2*N*MI statistic and chi-squared(1) tail probability."""
    rc = _clamped(r)
    stat = -N * np.log1p(-(rc**2))
    return stat, special.erfc(np.sqrt(stat / 2.0))


def fisher_z_test(r: float, N: int, c: int, alpha: float) -> TestResult:
    """Fisher's Z test of a zero partial correlation with |cond| = c."""
    if N - c - 3 < 1:
        raise InsufficientSamplesError(f"fisher z needs N - c - 3 >= 1, got N={N}, c={c}")
    stat, p = fisher_z_pvalues(r, N, c)
    return TestResult(float(stat), float(p), bool(p > alpha), math.sqrt(N - c - 3.0))


def student_t_test(r: float, N: int, c: int, alpha: float) -> TestResult:
    if N - c - 2 < 1:
        raise InsufficientSamplesError(f"student t needs N - c - 2 >= 1, got N={N}, c={c}")
    stat, p = student_t_pvalues(r, N, c)
    return TestResult(float(stat), float(p), bool(p > alpha), float(N - c - 2))


def mi_chi2_test(r: float, N: int, c: int, alpha: float) -> TestResult:
    """Gaussian mutual-information test; the statistic is 2*N*MI ~ chi2(1).

    Near |r| = 1 the statistic saturates at a large finite value because r
    is clamped before the logarithm; the p-value underflows to 0 and the
    decision is dependent, with no exception raised.
    """
    if N < 2:
        raise InsufficientSamplesError(f"mutual information test needs N >= 2, got N={N}")
    stat, p = mi_chi2_pvalues(r, N)
    return TestResult(float(stat), float(p), bool(p > alpha), 1.0)


def shrinkage_intensity(data: Dataset, cols: Sequence[int]) -> float:
    """Closed-form James-Stein intensity for the correlation submatrix over cols.

    Ratio of the summed variance estimates of the off-diagonal sample
    correlations to their summed squares, clamped to [0, 1].
    """
    R, V = data.pair_shrinkage_stats()
    idx = tuple(cols)
    k = len(idx)
    rsub = R[np.ix_(idx, idx)]
    num = float(V[np.ix_(idx, idx)].sum())
    den = float((rsub**2).sum()) - k  # drop the unit diagonal
    if den <= 0.0:
        return 1.0
    return float(np.clip(num / den, 0.0, 1.0))


def mi_shrink_test(
    data: Dataset,
    i: int,
    j: int,
    cond: Iterable[int] = (),
    alpha: float = 0.05,
    shrinkage: float | None = None,
) -> TestResult:
    """Mutual-information test on the shrunk correlation matrix over {i, j} | cond.

    The submatrix is shrunk toward the identity, R* = lam*I + (1 - lam)*R,
    with lam the closed-form optimal intensity (overridable for testing via
    the shrinkage argument). For lam > 0 the submatrix is positive definite
    regardless of sample size.
    """
    N = data.n_rows
    if N < 3:
        raise InsufficientSamplesError(f"shrinkage test needs N >= 3, got N={N}")
    cond = tuple(int(k) for k in cond)
    idx = (i, j, *cond)
    lam = shrinkage_intensity(data, idx) if shrinkage is None else float(shrinkage)
    R, _ = data.pair_shrinkage_stats()
    rsub = R[np.ix_(idx, idx)] * (1.0 - lam)
    np.fill_diagonal(rsub, 1.0)
    r_star = partial_correlation(rsub, 0, 1, range(2, len(idx)))
    stat, p = mi_chi2_pvalues(r_star, N)
    return TestResult(float(stat), float(p), bool(p > alpha), 1.0)


def _rank_deficient(N: int, c: int) -> bool:
    # A sample correlation matrix has rank at most N - 1, so any submatrix
    # larger than that is singular.
    return c + 2 > N - 1


def ci_decision(
    data: Dataset, i: int, j: int, cond: Iterable[int], params: PcParams
) -> bool:
    """True iff columns i and j test independent given cond, under params.

    Applies the insufficient-samples policy: whenever the selected test's
    degrees-of-freedom precondition fails, or the correlation submatrix is
    singular, the pair is declared dependent (the edge is retained).
    """
    cond = tuple(int(k) for k in cond)
    N = data.n_rows
    c = len(cond)
    kind = params.test
    try:
        if kind is TestKind.FISHER_Z:
            if N - c - 3 < 1:
                return False
            r = partial_correlation(data.corr, i, j, cond)
            return fisher_z_test(r, N, c, params.alpha).independent
        if kind is TestKind.STUDENT_T:
            if N - c - 2 < 1:
                return False
            r = partial_correlation(data.corr, i, j, cond)
            return student_t_test(r, N, c, params.alpha).independent
        if kind is TestKind.MUTUAL_INFO_CHI2:
            if N < 2 or _rank_deficient(N, c):
                return False
            r = partial_correlation(data.corr, i, j, cond)
            return mi_chi2_test(r, N, c, params.alpha).independent
        if kind is TestKind.MUTUAL_INFO_SHRINK:
            if N < 3:
                return False
            return mi_shrink_test(data, i, j, cond, params.alpha).independent
    except IllConditionedDataError:
        return False
    raise InvalidInputError(f"unknown test kind {kind!r}")
