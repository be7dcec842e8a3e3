"""Sequential tuning of the learner's (alpha, test) hyperparameters.

Three strategies share one trace format: Bayesian optimization with an
information-theoretic acquisition (method "BO"), random search ("RS"),
and the fixed expert criterion ("EC"). The candidate solution at every
step is the best observation made so far.

The acquisition scores every point of a fixed finite grid. It follows the
predictive-entropy-search recipe: the entropy of the predictive
distribution minus its expected entropy after learning the minimizer's
location. The expectation is Monte Carlo: joint posterior samples on the
grid yield minimizer locations, and conditioning on a pseudo-observation
just below the incumbent at each sampled minimizer gives the reduced
entropies. For Gaussian predictives only the variances enter the
entropies, so the score rewards points whose uncertainty would shrink the
most if the optimum's neighborhood were pinned down.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ci import TEST_KINDS, PcParams, TestKind
from .exceptions import PctuneError
from .gp import (
    GaussianProcess,
    KernelHyper,
    _chol_with_jitter,
    _kernel_from_sq,
    _sq_diffs,
    canonicalize,
    decode_point,
    encode_params,
    sample_hyperparameters,
)

N_ALPHA_GRID = 101
N_MINIMIZER_SAMPLES = 32
N_HYPER_SAMPLES = 10
N_INITIAL_DESIGN = 4
_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class TrialRecord:
    """One observation of the tuning objective."""

    iteration: int
    method: str
    params: PcParams
    y: float
    best_so_far: float
    wall_time_s: float


class TuningAborted(PctuneError):
    """Objective evaluation failed; carries the trial records completed so far."""

    def __init__(self, message: str, records: list[TrialRecord]):
        super().__init__(message)
        self.records = records


class CandidateGrid:
    """Fixed acquisition-search set: equally spaced alpha values x 4 test kinds.

    Rows are ordered by (alpha index, kind index), so an argmax with ties
    broken toward the first row prefers the lowest encoded alpha and then
    the lowest category index.
    """

    def __init__(self, n_alpha: int = N_ALPHA_GRID):
        xs = np.linspace(0.0, 1.0, n_alpha)
        points = []
        params = []
        for x in xs:
            for k, kind in enumerate(TEST_KINDS):
                row = np.zeros(5)
                row[0] = x
                row[1 + k] = 1.0
                points.append(row)
                params.append(decode_point(row))
        self.X = np.asarray(points)
        self.params: tuple[PcParams, ...] = tuple(params)
        self.n_alpha = n_alpha

    def __len__(self) -> int:
        return len(self.params)

    def at(self, alpha_index: int, kind: TestKind) -> PcParams:
        return self.params[alpha_index * len(TEST_KINDS) + TEST_KINDS.index(kind)]


DEFAULT_GRID = CandidateGrid()

# One point per test kind at spread alpha positions before any model is fit.
_DESIGN_ALPHA_FRACTIONS = (0.125, 0.375, 0.625, 0.875)


def _initial_design(grid: CandidateGrid) -> list[PcParams]:
    return [
        grid.at(round(f * (grid.n_alpha - 1)), kind)
        for f, kind in zip(_DESIGN_ALPHA_FRACTIONS, TEST_KINDS)
    ]


def expert_criterion() -> PcParams:
    """The fixed literature recommendation: alpha = 0.01 with Fisher's Z."""
    return PcParams(0.01, TestKind.FISHER_Z)


def gaussian_entropy(var) -> np.ndarray:
    """Differential entropy 0.5*ln(2*pi*e*var) of a Gaussian, elementwise."""
    return 0.5 * np.log(2.0 * math.pi * math.e * np.maximum(var, _VAR_FLOOR))


def pes_acquisition(
    model: GaussianProcess,
    hyper_samples: Sequence[KernelHyper],
    grid: CandidateGrid,
    rng: np.random.Generator,
    n_minimizer_samples: int = N_MINIMIZER_SAMPLES,
) -> np.ndarray:
    """Information-gain score for every grid candidate, averaged over hyper samples.

    Per hyperparameter sample: draw joint posterior functions on the grid,
    record each draw's minimizer, and score each candidate by the entropy
    of its predictive distribution minus the mean entropy after
    conditioning on a pseudo-observation one posterior standard deviation
    (floored) below the incumbent at each sampled minimizer. Only the
    pseudo-observation's location enters the score: Gaussian conditioning
    changes variances independently of the observed value.

    Scores are computed on the model's standardized scale; standardization
    shifts both entropy terms equally, so the ranking is unaffected.
    """
    if not hyper_samples:
        raise PctuneError("need at least one hyperparameter sample")
    g = len(grid)
    Xc = canonicalize(model.X) if model.n_obs else np.zeros((0, grid.X.shape[1]))
    Gc = canonicalize(grid.X)
    D_xx = _sq_diffs(Xc, Xc)
    D_gx = _sq_diffs(Gc, Xc)
    D_gg = _sq_diffs(Gc, Gc)
    yt = model.standardized_y
    total = np.zeros(g)
    for hyper in hyper_samples:
        noise = hyper.noise
        K_gg = _kernel_from_sq(D_gg, hyper)
        if model.n_obs:
            K_xx = _kernel_from_sq(D_xx, hyper) + noise * np.eye(model.n_obs)
            L_xx = _chol_with_jitter(K_xx)
            K_gx = _kernel_from_sq(D_gx, hyper)
            V = np.linalg.solve(L_xx, K_gx.T)
            w = np.linalg.solve(L_xx, yt - hyper.mean)
            mu = hyper.mean + V.T @ w
            cov = K_gg - V.T @ V
            cov = (cov + cov.T) / 2.0
        else:
            mu = np.full(g, hyper.mean)
            cov = K_gg
        var = np.maximum(np.diag(cov), 0.0)
        # Thompson draws of the latent function on the grid.
        scale = max(float(np.mean(var)), _VAR_FLOOR)
        jitter = 1e-10 * scale
        while True:
            try:
                L = np.linalg.cholesky(cov + jitter * np.eye(g))
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
                if jitter > 1e-2 * scale:
                    L = np.diag(np.sqrt(var + _VAR_FLOOR))
                    break
        draws = mu[:, None] + L @ rng.standard_normal((g, n_minimizer_samples))
        minimizers = np.argmin(draws, axis=0)
        c_var = var[minimizers] + noise
        reduction = cov[:, minimizers] ** 2 / np.maximum(c_var, _VAR_FLOOR)[None, :]
        cond_var = np.maximum(var[:, None] - reduction, 0.0)
        score = gaussian_entropy(var + noise) - gaussian_entropy(cond_var + noise).mean(axis=1)
        total += score
    return total / len(hyper_samples)


def suggest_next(
    history: Sequence[TrialRecord],
    rng: np.random.Generator,
    grid: CandidateGrid = DEFAULT_GRID,
) -> PcParams:
    """Next point to evaluate: initial design first, then acquisition argmax."""
    design = _initial_design(grid)
    if len(history) < len(design):
        return design[len(history)]
    X = np.asarray([encode_params(r.params) for r in history])
    y = np.asarray([r.y for r in history])
    model = GaussianProcess(X, y)
    hypers = sample_hyperparameters(model, rng, M=N_HYPER_SAMPLES)
    scores = pes_acquisition(model, hypers, grid, rng)
    return grid.params[int(np.argmax(scores))]


def _run_method(
    method: str,
    propose: Callable[[list[TrialRecord]], PcParams],
    objective_fn: Callable[[PcParams], float],
    budget: int,
) -> list[TrialRecord]:
    records: list[TrialRecord] = []
    best = math.inf
    for it in range(1, budget + 1):
        t0 = time.perf_counter()
        params = propose(records)
        try:
            y = float(objective_fn(params))
        except Exception as exc:
            raise TuningAborted(
                f"{method} objective failed at iteration {it}: {exc}", records
            ) from exc
        best = min(best, y)
        records.append(
            TrialRecord(it, method, params, y, best, time.perf_counter() - t0)
        )
    return records


def run_bo(
    objective_fn: Callable[[PcParams], float],
    budget: int = 30,
    rng: np.random.Generator | None = None,
    grid: CandidateGrid = DEFAULT_GRID,
) -> list[TrialRecord]:
    """Bayesian-optimization loop: suggest, evaluate, record, `budget` times."""
    rng = np.random.default_rng() if rng is None else rng
    return _run_method(
        "BO", lambda hist: suggest_next(hist, rng, grid), objective_fn, budget
    )


def run_random_search(
    objective_fn: Callable[[PcParams], float],
    budget: int = 30,
    rng: np.random.Generator | None = None,
) -> list[TrialRecord]:
    """Baseline: alpha log-uniform over its box, test uniform over the four kinds."""
    rng = np.random.default_rng() if rng is None else rng

    def propose(_hist):
        x_alpha = rng.random()
        kind = TEST_KINDS[int(rng.integers(len(TEST_KINDS)))]
        return PcParams(10.0 ** (4.0 * x_alpha - 5.0), kind)

    return _run_method("RS", propose, objective_fn, budget)
