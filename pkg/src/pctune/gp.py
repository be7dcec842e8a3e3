"""Gaussian-process surrogate over the (alpha, test) hyperparameter space.

Points are encoded as 5-vectors: one continuous coordinate for alpha
(the affine image of log10(alpha) from [-5, -1] onto [0, 1]) followed by a
four-dimensional one-hot block for the test kind. Inside the kernel the
categorical block of every argument is snapped to its nearest one-hot
vertex, so mixed-valued relaxations still measure distances between valid
categories.

The model standardizes its observations internally; posteriors are
reported on the original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ci import TEST_KINDS, PcParams, TestKind
from .exceptions import InvalidInputError, NumericalError

DIM = 5
_SQRT5 = math.sqrt(5.0)
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


def encode_params(params: PcParams) -> np.ndarray:
    """Map (alpha, test) onto [0, 1] x one-hot(4)."""
    x = np.zeros(DIM)
    x[0] = (math.log10(params.alpha) + 5.0) / 4.0
    if not -1e-9 <= x[0] <= 1.0 + 1e-9:
        raise InvalidInputError(f"alpha {params.alpha} outside the encodable range")
    x[0] = min(max(x[0], 0.0), 1.0)
    x[1 + TEST_KINDS.index(params.test)] = 1.0
    return x


def decode_point(x: np.ndarray) -> PcParams:
    """Inverse of encode_params; the categorical block is read by argmax."""
    x = np.asarray(x, dtype=float)
    if x.shape != (DIM,):
        raise InvalidInputError(f"expected a {DIM}-vector, got shape {x.shape}")
    alpha = 10.0 ** (4.0 * float(x[0]) - 5.0)
    kind = TEST_KINDS[int(np.argmax(x[1:]))]
    return PcParams(alpha, kind)


def canonicalize(X: np.ndarray) -> np.ndarray:
    """Snap the categorical block of each row to its nearest one-hot vertex."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros_like(X)
    out[:, 0] = X[:, 0]
    out[np.arange(X.shape[0]), 1 + np.argmax(X[:, 1:], axis=1)] = 1.0
    return out


@dataclass(frozen=True)
class KernelHyper:
    """Matern-5/2 ARD hyperparameters on the standardized-observation scale."""

    amplitude: float = 1.0  # prior variance sigma_f^2
    lengthscales: tuple[float, ...] = (1.0,) * DIM
    noise: float = 1.0  # observation noise variance sigma_n^2
    mean: float = 0.0  # constant prior mean

    def __post_init__(self):
        if self.amplitude <= 0 or self.noise < 0 or any(l <= 0 for l in self.lengthscales):
            raise InvalidInputError(f"non-positive kernel hyperparameter: {self}")
        if len(self.lengthscales) != DIM:
            raise InvalidInputError(f"need {DIM} lengthscales")


def _sq_diffs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences (|A| x |B| x DIM), computed once per
    point set so repeated kernel evaluations only rescale by lengthscales."""
    return (A[:, None, :] - B[None, :, :]) ** 2


def _kernel_from_sq(D: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    ls = np.asarray(hyper.lengthscales)
    d2 = D @ (1.0 / ls**2)
    d = np.sqrt(np.maximum(d2, 0.0))
    return hyper.amplitude * (1.0 + _SQRT5 * d + 5.0 * d2 / 3.0) * np.exp(-_SQRT5 * d)


def kernel_matrix(A: np.ndarray, B: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    """Matern 5/2 with per-dimension lengthscales, after canonicalization."""
    return _kernel_from_sq(_sq_diffs(canonicalize(A), canonicalize(B)), hyper)


def matern_kernel(a: np.ndarray, b: np.ndarray, hyper: KernelHyper) -> float:
    """Kernel value between two encoded points."""
    return float(kernel_matrix(np.atleast_2d(a), np.atleast_2d(b), hyper)[0, 0])


def _chol_with_jitter(K: np.ndarray) -> np.ndarray:
    """Cholesky factor, escalating a diagonal jitter only if needed."""
    scale = float(np.mean(np.diag(K))) if K.shape[0] else 1.0
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            jitter = _JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX * max(scale, 1.0):
                raise NumericalError(
                    f"factorization failed at jitter {jitter:.2e} "
                    f"(n={K.shape[0]}, diag scale {scale:.3e})"
                )


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float


class GaussianProcess:
    """Exact GP regression on encoded points; immutable after construction.

    Observations are standardized internally (the hyperparameters refer to
    that scale); posterior means and variances are de-standardized before
    being returned.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, hyper: KernelHyper = KernelHyper()):
        X = np.atleast_2d(np.asarray(X, dtype=float)) if np.size(X) else np.zeros((0, DIM))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} points but {y.shape[0]} observations")
        if X.shape[0] and X.shape[1] != DIM:
            raise InvalidInputError(f"points must have {DIM} coordinates")
        self.X = X
        self.y = y
        self.hyper = hyper
        self.y_mean = float(np.mean(y)) if y.size else 0.0
        sd = float(np.std(y, ddof=1)) if y.size >= 2 else 0.0
        self.y_sd = sd if sd > 1e-12 else 1.0
        self._yt = (y - self.y_mean) / self.y_sd
        if X.shape[0]:
            K = kernel_matrix(X, X, hyper) + hyper.noise * np.eye(X.shape[0])
            self._L = _chol_with_jitter(K)
            resid = self._yt - hyper.mean
            self._weights = np.linalg.solve(
                self._L.T, np.linalg.solve(self._L, resid)
            )
        else:
            self._L = np.zeros((0, 0))
            self._weights = np.zeros(0)

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def noise_variance(self) -> float:
        """Observation noise on the original y scale."""
        return self.hyper.noise * self.y_sd**2

    @property
    def standardized_y(self) -> np.ndarray:
        return self._yt

    def posterior(self, x: np.ndarray) -> Posterior:
        """Latent-function posterior at one encoded point (original y scale)."""
        mu, var = self.posterior_grid(np.atleast_2d(x), full_cov=False)
        return Posterior(float(mu[0]), float(var[0]))

    def posterior_grid(
        self, Xq: np.ndarray, full_cov: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and (co)variance at query points, de-standardized.

        Returns (mean, variance-vector) or (mean, covariance-matrix) when
        full_cov is set. Variances are clamped at zero.
        """
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        h = self.hyper
        if self.n_obs == 0:
            mu = np.full(Xq.shape[0], h.mean)
            if full_cov:
                cov = kernel_matrix(Xq, Xq, h)
                return self._destandardize(mu, cov=cov)
            var = np.full(Xq.shape[0], h.amplitude)
            return self._destandardize(mu, var=var)
        Ks = kernel_matrix(Xq, self.X, h)
        mu = h.mean + Ks @ self._weights
        V = np.linalg.solve(self._L, Ks.T)
        if full_cov:
            cov = kernel_matrix(Xq, Xq, h) - V.T @ V
            cov = (cov + cov.T) / 2.0
            return self._destandardize(mu, cov=cov)
        var = np.maximum(h.amplitude - (V**2).sum(axis=0), 0.0)
        return self._destandardize(mu, var=var)

    def _destandardize(self, mu, var=None, cov=None):
        mu = self.y_mean + self.y_sd * mu
        if cov is not None:
            return mu, self.y_sd**2 * cov
        return mu, self.y_sd**2 * np.maximum(var, 0.0)

    def log_marginal_likelihood(self) -> float:
        """Marginal log-likelihood of the standardized observations."""
        if self.n_obs == 0:
            return 0.0
        resid = self._yt - self.hyper.mean
        return float(
            -0.5 * resid @ self._weights
            - np.sum(np.log(np.diag(self._L)))
            - 0.5 * self.n_obs * math.log(2.0 * math.pi)
        )


# --- hyperparameter sampling -------------------------------------------------
#
# Posterior over (amplitude, lengthscales, noise, mean) under log-normal
# priors (median 1, log-sd 1) for the positive parameters and a standard
# normal prior for the mean, explored by univariate slice sampling with
# stepping out (burn-in 20 sweeps, thinning 5).

_N_BURN = 20
_THIN = 5


def _hyper_to_vector(h: KernelHyper) -> np.ndarray:
    return np.array(
        [math.log(max(h.amplitude, 1e-8))]
        + [math.log(max(l, 1e-8)) for l in h.lengthscales]
        + [math.log(max(h.noise, 1e-8)), h.mean]
    )


def _vector_to_hyper(v: np.ndarray) -> KernelHyper:
    return KernelHyper(
        amplitude=math.exp(v[0]),
        lengthscales=tuple(math.exp(t) for t in v[1 : 1 + DIM]),
        noise=math.exp(v[1 + DIM]),
        mean=float(v[2 + DIM]),
    )


def _log_posterior(v: np.ndarray, D: np.ndarray, yt: np.ndarray) -> float:
    """Posterior density of the hyperparameter vector given precomputed
    squared differences D = _sq_diffs(Xc, Xc); -inf on any numerical failure."""
    if np.any(np.abs(v) > 20.0):
        return -math.inf
    h = _vector_to_hyper(v)
    n = yt.shape[0]
    try:
        K = _kernel_from_sq(D, h) + h.noise * np.eye(n)
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return -math.inf
    resid = yt - h.mean
    sol = np.linalg.solve(L, resid)
    loglik = -0.5 * sol @ sol - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    logprior = -0.5 * float(v @ v)  # standard normal on every coordinate
    out = loglik + logprior
    return out if math.isfinite(out) else -math.inf


def _slice_sweep(logpost, v: np.ndarray, rng: np.random.Generator, w: float = 1.0,
                 max_steps: int = 32) -> np.ndarray:
    """One full sweep of univariate slice sampling over all coordinates."""
    v = v.copy()
    lp = logpost(v)
    for k in range(v.size):
        height = lp - rng.exponential(1.0)
        lo = v[k] - w * rng.random()
        hi = lo + w
        steps = max_steps
        while steps > 0 and logpost(_with(v, k, lo)) > height:
            lo -= w
            steps -= 1
        steps = max_steps
        while steps > 0 and logpost(_with(v, k, hi)) > height:
            hi += w
            steps -= 1
        while True:
            cand = lo + (hi - lo) * rng.random()
            cand_lp = logpost(_with(v, k, cand))
            if cand_lp > height:
                v[k] = cand
                lp = cand_lp
                break
            if cand < v[k]:
                lo = cand
            else:
                hi = cand
            if hi - lo < 1e-12:  # degenerate slice; keep the current value
                break
    return v


def _with(v: np.ndarray, k: int, value: float) -> np.ndarray:
    out = v.copy()
    out[k] = value
    return out


def prior_median_hyper() -> KernelHyper:
    return KernelHyper()


def sample_hyperparameters(
    model: GaussianProcess, rng: np.random.Generator, M: int = 10
) -> list[KernelHyper]:
    """Draw M posterior samples of the kernel hyperparameters.

    With fewer than two observations the posterior is not informative and
    M copies of the prior medians are returned.
    """
    if model.n_obs < 2:
        return [prior_median_hyper()] * M
    D = _sq_diffs(canonicalize(model.X), canonicalize(model.X))
    yt = model.standardized_y

    def logpost(v):
        return _log_posterior(v, D, yt)

    v = _hyper_to_vector(model.hyper)
    if not math.isfinite(logpost(v)):
        v = np.zeros(DIM + 3)
    if not math.isfinite(logpost(v)):
        raise NumericalError("no finite starting state for hyperparameter sampling")
    for _ in range(_N_BURN):
        v = _slice_sweep(logpost, v, rng)
    samples = []
    for _ in range(M):
        for _ in range(_THIN):
            v = _slice_sweep(logpost, v, rng)
        samples.append(_vector_to_hyper(v))
    return samples
