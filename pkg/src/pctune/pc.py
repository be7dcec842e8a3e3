"""The PC-stable structure learner.

Skeleton estimation by backward stepwise conditional-independence testing,
v-structure orientation from separation sets, and Meek completion to a
CPDAG. The stable variant freezes neighbor sets at the start of each
conditioning-set-size level, which makes the output independent of the
iteration order over vertex pairs.

Besides the sample learner there is a population variant, pc_population,
that consumes an exact correlation matrix and thresholds partial
correlations instead of running statistical tests; it serves as the oracle
the sample learner is validated against.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from itertools import combinations, islice
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator

from . import ci
from ._validation import check_correlation_matrix, check_data_matrix
from .ci import PcParams, TestKind
from .exceptions import InternalConsistencyError, InvalidInputError
from .graphs import Cpdag, Pdag, apply_meek_rules, format_graph
from .simulate import Dataset

logger = logging.getLogger(__name__)

# Unordered pair (a, b), a < b  ->  conditioning set that separated it.
SepSets = dict[tuple[int, int], tuple[int, ...]]

_CHUNK = 64  # conditioning sets evaluated per vectorized batch


def _pair_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


class _SampleEngine:
    """Vectorized CI decisions on one dataset for a fixed (alpha, test)."""

    def __init__(self, data: Dataset, params: PcParams):
        self.N = data.n_rows
        self.alpha = params.alpha
        self.kind = params.test
        self.corr, self.var_r = data.pair_shrinkage_stats()
        self._marginal: np.ndarray | None = None

    def level_allows_deletion(self, level: int) -> bool:
        """False when the sample-size policy makes every size-level test dependent."""
        N, c = self.N, level
        if self.kind is TestKind.FISHER_Z:
            return N - c - 3 >= 1
        if self.kind is TestKind.STUDENT_T:
            return N - c - 2 >= 1
        if self.kind is TestKind.MUTUAL_INFO_CHI2:
            return N >= 2 and c + 2 <= N - 1
        return N >= 3  # shrinkage keeps submatrices invertible at any level

    def _pvalues(self, r: np.ndarray, c: int) -> np.ndarray:
        if self.kind is TestKind.FISHER_Z:
            return ci.fisher_z_pvalues(r, self.N, c)[1]
        if self.kind is TestKind.STUDENT_T:
            return ci.student_t_pvalues(r, self.N, c)[1]
        return ci.mi_chi2_pvalues(r, self.N)[1]

    def _marginal_matrix(self) -> np.ndarray:
        if self._marginal is None:
            if self.kind is TestKind.MUTUAL_INFO_SHRINK:
                num = 2.0 * self.var_r
                den = 2.0 * self.corr**2
                with np.errstate(divide="ignore", invalid="ignore"):
                    lam = np.where(den <= 0.0, 1.0, np.clip(num / den, 0.0, 1.0))
                r = (1.0 - lam) * self.corr
            else:
                r = self.corr
            self._marginal = self._pvalues(r, 0) > self.alpha
        return self._marginal

    def _batch_pcorr(self, sub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Partial correlations r[b] and validity mask from stacked submatrices."""
        try:
            om = np.linalg.inv(sub)
        except np.linalg.LinAlgError:
            r = np.empty(sub.shape[0])
            ok = np.zeros(sub.shape[0], dtype=bool)
            for b in range(sub.shape[0]):
                try:
                    omb = np.linalg.inv(sub[b])
                except np.linalg.LinAlgError:
                    continue
                den = omb[0, 0] * omb[1, 1]
                if np.isfinite(den) and den > 0 and np.isfinite(omb[0, 1]):
                    r[b] = -omb[0, 1] / np.sqrt(den)
                    ok[b] = True
            return np.clip(np.where(ok, r, 0.0), -1.0, 1.0), ok
        with np.errstate(invalid="ignore", divide="ignore"):
            den = om[:, 0, 0] * om[:, 1, 1]
            r = -om[:, 0, 1] / np.sqrt(den)
        ok = np.isfinite(r) & np.isfinite(den) & (den > 0)
        return np.clip(np.where(ok, r, 0.0), -1.0, 1.0), ok

    def decide(self, i: int, j: int, conds: np.ndarray) -> np.ndarray:
        """Independence decisions for 0-based (i, j) and stacked 0-based cond rows.

        Singular or rank-deficient submatrices yield "dependent", matching
        the scalar ci_decision policy.
        """
        n_sets, level = conds.shape
        if level == 0:
            return np.repeat(self._marginal_matrix()[i, j], n_sets)
        idx = np.concatenate(
            [np.full((n_sets, 1), i), np.full((n_sets, 1), j), conds], axis=1
        )
        if self.kind is TestKind.MUTUAL_INFO_SHRINK:
            rsub = self.corr[idx[:, :, None], idx[:, None, :]]
            vsub = self.var_r[idx[:, :, None], idx[:, None, :]]
            k = level + 2
            num = vsub.sum(axis=(1, 2))
            den = (rsub**2).sum(axis=(1, 2)) - k
            with np.errstate(divide="ignore", invalid="ignore"):
                lam = np.where(den <= 0.0, 1.0, np.clip(num / den, 0.0, 1.0))
            sub = rsub * (1.0 - lam)[:, None, None]
            diag = np.arange(k)
            sub[:, diag, diag] = 1.0
        else:
            sub = self.corr[idx[:, :, None], idx[:, None, :]]
        r, ok = self._batch_pcorr(sub)
        return ok & (self._pvalues(r, level) > self.alpha)


class _OracleEngine:
    """Exact-correlation decisions: independent iff |partial correlation| < threshold."""

    def __init__(self, corr: np.ndarray, threshold: float):
        self.corr = check_correlation_matrix(corr)
        self.threshold = float(threshold)

    def level_allows_deletion(self, level: int) -> bool:
        return True

    def decide(self, i: int, j: int, conds: np.ndarray) -> np.ndarray:
        n_sets, level = conds.shape
        if level == 0:
            return np.repeat(abs(self.corr[i, j]) < self.threshold, n_sets)
        idx = np.concatenate(
            [np.full((n_sets, 1), i), np.full((n_sets, 1), j), conds], axis=1
        )
        sub = self.corr[idx[:, :, None], idx[:, None, :]]
        om = np.linalg.inv(sub)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = -om[:, 0, 1] / np.sqrt(om[:, 0, 0] * om[:, 1, 1])
        return np.abs(np.nan_to_num(r, nan=1.0)) < self.threshold


@dataclass
class _SkeletonOutput:
    pairs: set[tuple[int, int]]
    sep_sets: SepSets
    n_tests: int
    truncated: bool


def _first_separator(engine, i: int, j: int, cand: list[int], level: int):
    """First conditioning set (in lexicographic order) that tests independent.

    Returns (sep_set or None, tests_evaluated). Chunked so the engine can
    vectorize; counting matches a sequential scan.
    """
    tests = 0
    combos = combinations(cand, level)
    while True:
        chunk = list(islice(combos, _CHUNK))
        if not chunk:
            return None, tests
        conds = np.asarray(chunk, dtype=np.intp).reshape(len(chunk), level) - 1
        dec = engine.decide(i - 1, j - 1, conds)
        hits = np.flatnonzero(dec)
        if hits.size:
            tests += int(hits[0]) + 1
            return chunk[int(hits[0])], tests
        tests += len(chunk)


def _run_skeleton(engine, p: int, max_cond: int | None) -> _SkeletonOutput:
    adj: dict[int, set[int]] = {v: set(range(1, p + 1)) - {v} for v in range(1, p + 1)}
    edges = {(a, b) for a in range(1, p + 1) for b in range(a + 1, p + 1)}
    sep_sets: SepSets = {}
    n_tests = 0
    level = 0
    truncated = False
    while True:
        frozen = {v: sorted(adj[v]) for v in range(1, p + 1)}
        eligible = any(
            len(frozen[a]) - 1 >= level or len(frozen[b]) - 1 >= level
            for a, b in edges
        )
        if not eligible:
            break
        if max_cond is not None and level > max_cond:
            truncated = True
            break
        if not engine.level_allows_deletion(level):
            level += 1
            continue
        for a, b in sorted(edges):
            if (a, b) not in edges:
                continue
            for i, j in ((a, b), (b, a)):
                cand = [v for v in frozen[i] if v != j]
                if len(cand) < level:
                    continue
                sep, used = _first_separator(engine, i, j, cand, level)
                n_tests += used
                if sep is not None:
                    edges.discard((a, b))
                    adj[a].discard(b)
                    adj[b].discard(a)
                    sep_sets[(a, b)] = tuple(sep)
                    break
        level += 1
    return _SkeletonOutput(edges, sep_sets, n_tests, truncated)


def estimate_skeleton(
    data: Dataset, params: PcParams, max_cond: int | None = None
) -> tuple[Pdag, SepSets]:
    """Estimate the undirected skeleton and the separation sets.

    Starts from the complete undirected graph and deletes the edge {i, j}
    as soon as some conditioning set drawn from the frozen neighbors of one
    endpoint tests independent. Vertices are 1-based; column k of the data
    is vertex k.
    """
    if data.n_rows < 4:
        raise InvalidInputError(f"need at least 4 samples, got {data.n_rows}")
    out = _run_skeleton(_SampleEngine(data, params), data.p, max_cond)
    return Pdag(data.p, (), out.pairs), out.sep_sets


def orient_v_structures(skel: Pdag, sep_sets: Mapping) -> Pdag:
    """Orient unshielded triples i - k - j as colliders when k is not in their sepset.

    When a later triple would reverse an existing orientation, the earlier
    orientation is kept and the conflict is logged.
    """
    if skel.directed:
        raise InvalidInputError("expected an undirected skeleton")
    pdag, _ = _orient_v_structures(skel, sep_sets)
    return pdag


def _orient_v_structures(skel: Pdag, sep_sets: Mapping) -> tuple[Pdag, int]:
    adj: dict[int, set[int]] = {v: set() for v in range(1, skel.p + 1)}
    for a, b in skel.undirected:
        adj[a].add(b)
        adj[b].add(a)
    directed: set[tuple[int, int]] = set()
    conflicts = 0
    for k in range(1, skel.p + 1):
        for a, b in combinations(sorted(adj[k]), 2):
            if b in adj[a]:
                continue
            key = _pair_key(a, b)
            if key not in sep_sets:
                raise InternalConsistencyError(
                    f"non-adjacent tested pair {key} has no separation set"
                )
            if k in sep_sets[key]:
                continue
            for parent in (a, b):
                if (k, parent) in directed:
                    conflicts += 1
                    logger.debug(
                        "collider conflict: keeping %d -> %d, skipping %d -> %d",
                        k, parent, parent, k,
                    )
                else:
                    directed.add((parent, k))
    undirected = [
        (a, b)
        for a, b in skel.undirected
        if (a, b) not in directed and (b, a) not in directed
    ]
    return Pdag(skel.p, directed, undirected), conflicts


@dataclass(frozen=True)
class PcResult:
    """One learning run: everything needed to reproduce and report it."""

    params: PcParams
    cpdag: Cpdag
    sep_sets: SepSets
    n_ci_tests: int
    wall_time_s: float
    truncated: bool
    n_collider_conflicts: int

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.params.alpha,
            "test": self.params.test.value,
            "cpdag": format_graph(self.cpdag),
            "sep_sets": {f"{a},{b}": list(c) for (a, b), c in sorted(self.sep_sets.items())},
            "n_ci_tests": self.n_ci_tests,
            "wall_time_s": self.wall_time_s,
            "truncated": self.truncated,
            "n_collider_conflicts": self.n_collider_conflicts,
        }


def _finish(skel_out: _SkeletonOutput, p: int, sep_sets: SepSets) -> tuple[Cpdag, int]:
    skel = Pdag(p, (), skel_out.pairs)
    oriented, conflicts = _orient_v_structures(skel, sep_sets)
    closed = apply_meek_rules(oriented)
    return Cpdag(p, closed.directed, closed.undirected), conflicts


def pc_stable_result(
    data: Dataset, params: PcParams, max_cond: int | None = None
) -> PcResult:
    """Run the full learner and return the CPDAG with diagnostics."""
    if data.n_rows < 4:
        raise InvalidInputError(f"need at least 4 samples, got {data.n_rows}")
    t0 = time.perf_counter()
    out = _run_skeleton(_SampleEngine(data, params), data.p, max_cond)
    cpdag, conflicts = _finish(out, data.p, out.sep_sets)
    return PcResult(
        params=params,
        cpdag=cpdag,
        sep_sets=out.sep_sets,
        n_ci_tests=out.n_tests,
        wall_time_s=time.perf_counter() - t0,
        truncated=out.truncated,
        n_collider_conflicts=conflicts,
    )


def pc_stable(data: Dataset, params: PcParams, max_cond: int | None = None) -> Cpdag:
    """Skeleton, collider orientation, and Meek completion in one call.

    Deterministic given (data, params): equal inputs give equal CPDAGs.
    """
    return pc_stable_result(data, params, max_cond).cpdag


def pc_population(
    corr: np.ndarray, threshold: float = 1e-8, max_cond: int | None = None
) -> Cpdag:
    """Population-version learner on an exact correlation matrix.

    Partial correlations below threshold in absolute value count as
    independent; no statistical tests are involved.
    """
    corr = check_correlation_matrix(corr)
    out = _run_skeleton(_OracleEngine(corr, threshold), corr.shape[0], max_cond)
    cpdag, _ = _finish(out, corr.shape[0], out.sep_sets)
    return cpdag


class PCStable(BaseEstimator):
    """Scikit-learn style estimator wrapping pc_stable.

    Parameters
    ----------
    alpha : significance level of the conditional-independence tests,
        with log10(alpha) in [-5, -1].
    test : one of "zf", "t", "mi", "mi-sh" (or a TestKind).
    max_cond : optional cap on the conditioning-set size.

    Attributes (after fit)
    ----------------------
    cpdag_ : learned Cpdag over vertices 1..n_features_in_.
    sep_sets_ : separation sets recorded for every deleted edge.
    n_ci_tests_ : number of CI decisions evaluated.
    result_ : the full PcResult record.
    """

    def __init__(self, alpha: float = 0.01, test: TestKind | str = "zf",
                 max_cond: int | None = None):
        self.alpha = alpha
        self.test = test
        self.max_cond = max_cond

    def fit(self, X, y=None):
        X = check_data_matrix(X, min_rows=4)
        params = PcParams(self.alpha, self.test)
        self.result_ = pc_stable_result(Dataset(X), params, self.max_cond)
        self.cpdag_ = self.result_.cpdag
        self.sep_sets_ = self.result_.sep_sets
        self.n_ci_tests_ = self.result_.n_ci_tests
        self.n_features_in_ = X.shape[1]
        return self
