"""Simulation of Gaussian Bayesian networks and sampling of datasets.

A Gaussian Bayesian network is a DAG whose vertices are ancestrally ordered
(every edge j -> i has j < i) together with linear edge weights and per-node
noise variances: each variable is a weighted sum of its parents plus
independent Gaussian noise.

Randomness is explicit: every sampling function takes a numpy Generator.
Reproducible streams are derived with rng_stream(), which maps a base seed
plus an integer key path onto non-overlapping SeedSequence spawn keys.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from ._validation import check_data_matrix
from .exceptions import IllConditionedDataError, InvalidInputError, InvalidScenarioError
from .graphs import Dag, Edge


def rng_stream(base_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by an integer key path.

    Streams with distinct key paths never overlap. Callers namespace their
    keys; the harness uses (namespace, replica, scenario, purpose).
    """
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class Scenario:
    """One network-learning scenario: p nodes, average neighbor size n, N samples.

    The edge-inclusion probability is d = n / (p - 1).
    """

    p: int
    n: float
    N: int

    def __post_init__(self):
        if self.p < 2:
            raise InvalidScenarioError(f"need p >= 2, got {self.p}")
        if self.N < 2:
            raise InvalidScenarioError(f"need N >= 2, got {self.N}")
        if not (0 < self.n <= self.p - 1):
            raise InvalidScenarioError(
                f"average neighbor size must be in (0, p-1] = (0, {self.p - 1}], got {self.n}"
            )

    @property
    def d(self) -> float:
        return self.n / (self.p - 1)


@dataclass(frozen=True)
class GaussianBayesNet:
    """DAG plus edge weights and per-node noise variances.

    Weights are keyed exactly by dag.edges; noise_var has one strictly
    positive entry per vertex.
    """

    dag: Dag
    weights: Mapping[Edge, float]
    noise_var: tuple[float, ...]

    def __init__(self, dag: Dag, weights: Mapping[Edge, float], noise_var: Iterable[float]):
        for j, i in dag.edges:
            if not j < i:
                raise InvalidInputError(
                    f"edge ({j}, {i}) violates the ancestral order (need j < i)"
                )
        w = {(int(j), int(i)): float(b) for (j, i), b in weights.items()}
        if set(w) != set(dag.edges):
            raise InvalidInputError("weights must be defined exactly on the DAG's edges")
        nv = tuple(float(v) for v in noise_var)
        if len(nv) != dag.p:
            raise InvalidInputError(f"need {dag.p} noise variances, got {len(nv)}")
        if any(v <= 0 for v in nv):
            raise InvalidInputError("noise variances must be strictly positive")
        object.__setattr__(self, "dag", dag)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise_var", nv)

    @property
    def p(self) -> int:
        return self.dag.p

    def coefficient_matrix(self) -> np.ndarray:
        """Strictly upper-triangular B with B[j-1, i-1] = weight of j -> i."""
        B = np.zeros((self.p, self.p))
        for (j, i), b in self.weights.items():
            B[j - 1, i - 1] = b
        return B


class Dataset:
    """N x p sample matrix with a lazily computed correlation matrix.

    The correlation matrix is cached under a lock, so concurrent readers see
    it initialized at most once. Construction rejects non-finite values;
    use load_dataset_csv for file ingestion, which drops non-finite rows.
    """

    def __init__(self, values: np.ndarray):
        values = check_data_matrix(values, name="values")
        self._values = values.copy()  # detach from the caller before freezing
        self._values.setflags(write=False)
        self._lock = threading.Lock()
        self._pair_stats: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n_rows(self) -> int:
        return self._values.shape[0]

    @property
    def p(self) -> int:
        return self._values.shape[1]

    @property
    def corr(self) -> np.ndarray:
        """Pearson correlation matrix: symmetric, unit diagonal, entries in [-1, 1]."""
        return self.pair_shrinkage_stats()[0]

    def _standardized(self) -> np.ndarray:
        x = self._values
        centered = x - x.mean(axis=0)
        sd = centered.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
        if np.any(sd <= 0) or not np.all(np.isfinite(sd)):
            raise IllConditionedDataError("a column has zero variance")
        return centered / sd

    def pair_shrinkage_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample correlation matrix R plus variance estimates of its entries.

        V[k, l] estimates Var(R[k, l]) from products of standardized columns
        (zero on the diagonal). James-Stein shrinkage intensities over any
        variable subset are ratios of sums of these entries, so both
        matrices are computed once per dataset and cached under a lock.
        """
        if self._pair_stats is None:
            with self._lock:
                if self._pair_stats is None:
                    z = self._standardized()
                    n = self.n_rows
                    sum_w = z.T @ z
                    sum_w = (sum_w + sum_w.T) / 2.0
                    sum_w2 = (z**2).T @ (z**2)
                    sum_w2 = (sum_w2 + sum_w2.T) / 2.0
                    # Var-hat of r_kl = n/(n-1)^3 * sum_m (w_m - mean w)^2
                    ss = np.maximum(sum_w2 - sum_w**2 / n, 0.0)
                    V = ss * n / (n - 1) ** 3
                    np.fill_diagonal(V, 0.0)
                    R = np.clip(sum_w / (n - 1), -1.0, 1.0)
                    np.fill_diagonal(R, 1.0)
                    R.setflags(write=False)
                    V.setflags(write=False)
                    self._pair_stats = (R, V)
        return self._pair_stats


def sample_dag(p: int, n: float, rng: np.random.Generator) -> Dag:
    """Random DAG: each pair j < i gets the edge j -> i with probability n/(p-1).

    Acyclic by construction since all edges point from lower to higher labels.
    """
    scenario = Scenario(p=p, n=n, N=2)  # reuse the range checks on p and n
    d = scenario.d
    pairs = [(j, i) for i in range(2, p + 1) for j in range(1, i)]
    mask = rng.random(len(pairs)) < d
    return Dag(p, (e for e, keep in zip(pairs, mask) if keep))


def sample_weights(
    dag: Dag,
    rng: np.random.Generator,
    low: float = 0.1,
    high: float = 1.0,
    noise_var: float = 1.0,
) -> GaussianBayesNet:
    """Attach i.i.d. Uniform[low, high] edge weights and constant noise variance."""
    edges = sorted(dag.edges)
    betas = rng.uniform(low, high, size=len(edges))
    return GaussianBayesNet(
        dag, dict(zip(edges, betas)), (noise_var,) * dag.p
    )


def sample_data(gbn: GaussianBayesNet, N: int, rng: np.random.Generator) -> Dataset:
    """Sample N rows by evaluating the recursive regressions in ancestral order."""
    if N < 1:
        raise InvalidInputError(f"need N >= 1, got {N}")
    p = gbn.p
    eps = rng.standard_normal((N, p)) * np.sqrt(np.asarray(gbn.noise_var))
    parents: dict[int, list[tuple[int, float]]] = {i: [] for i in range(1, p + 1)}
    for (j, i), b in gbn.weights.items():
        parents[i].append((j, b))
    X = np.empty((N, p))
    for i in range(1, p + 1):
        col = eps[:, i - 1].copy()
        for j, b in sorted(parents[i]):
            col += b * X[:, j - 1]
        X[:, i - 1] = col
    return Dataset(X)


def implied_covariance(gbn: GaussianBayesNet) -> np.ndarray:
    """Exact covariance of the network's joint Gaussian distribution.

    With B the coefficient matrix and O = diag(noise_var), the variables
    satisfy X = B^T X + eps, so Sigma = (I - B^T)^-1 O (I - B^T)^-T. The
    system matrix is unit-triangular, hence always invertible.
    """
    p = gbn.p
    A = np.eye(p) - gbn.coefficient_matrix().T  # unit lower-triangular
    L = np.linalg.solve(A, np.diag(np.sqrt(np.asarray(gbn.noise_var))))
    sigma = L @ L.T
    return (sigma + sigma.T) / 2.0


def covariance_to_correlation(sigma: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(d, d)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


# --- file formats -----------------------------------------------------------


def write_dataset_csv(dataset: Dataset, path) -> None:
    """CSV with header X1,...,Xp and one row per sample."""
    header = ",".join(f"X{i}" for i in range(1, dataset.p + 1))
    np.savetxt(path, dataset.values, delimiter=",", header=header, comments="")


def load_dataset_csv(path) -> Dataset:
    """Load a dataset CSV; rows containing non-finite values are dropped."""
    raw = np.genfromtxt(path, delimiter=",", skip_header=1)
    if raw.size == 0:
        raise InvalidInputError(f"no data rows in {path}")
    raw = np.atleast_2d(raw)
    keep = np.all(np.isfinite(raw), axis=1)
    if not np.any(keep):
        raise InvalidInputError(f"all rows of {path} contain non-finite values")
    return Dataset(raw[keep])


def format_gbn(gbn: GaussianBayesNet) -> str:
    """Text form: vertex count, weighted edge lines, then per-node noise lines."""
    lines = [str(gbn.p)]
    lines += [f"{j} -> {i} : {b!r}" for (j, i), b in sorted(gbn.weights.items())]
    lines += [f"node {i} : {v!r}" for i, v in enumerate(gbn.noise_var, start=1)]
    return "\n".join(lines) + "\n"


def parse_gbn(text: str) -> GaussianBayesNet:
    lines = [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    if not lines:
        raise InvalidInputError("empty network text")
    try:
        p = int(lines[0])
    except ValueError as exc:
        raise InvalidInputError(f"first line must be the vertex count: {lines[0]!r}") from exc
    weights: dict[Edge, float] = {}
    noise = {i: 1.0 for i in range(1, p + 1)}
    for line in lines[1:]:
        parts = line.split()
        if len(parts) == 5 and parts[1] == "->" and parts[3] == ":":
            weights[(int(parts[0]), int(parts[2]))] = float(parts[4])
        elif len(parts) == 4 and parts[0] == "node" and parts[2] == ":":
            noise[int(parts[1])] = float(parts[3])
        else:
            raise InvalidInputError(f"bad network line: {line!r}")
    dag = Dag(p, weights.keys())
    return GaussianBayesNet(dag, weights, tuple(noise[i] for i in range(1, p + 1)))


def write_gbn(gbn: GaussianBayesNet, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_gbn(gbn))


def load_gbn(path) -> GaussianBayesNet:
    with open(path) as fh:
        return parse_gbn(fh.read())
