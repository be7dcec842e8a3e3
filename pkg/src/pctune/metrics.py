"""Structural Hamming Distance over CPDAGs and the tuning objective.

Each unordered vertex pair has one of four states: absent, undirected,
or directed either way. SHD counts the pairs whose state differs, so any
two graphs over p vertices are at most p(p-1)/2 apart and two Markov
equivalent DAGs have distance zero after conversion to CPDAGs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .ci import PcParams
from .exceptions import InvalidInputError, PctuneError
from .graphs import Cpdag, Dag, Pdag, dag_to_cpdag
from .pc import pc_stable
from .simulate import Dataset, GaussianBayesNet, Scenario

_ABSENT = 0


def _pair_states(g: Pdag) -> dict[tuple[int, int], int]:
    states: dict[tuple[int, int], int] = {}
    for a, b in g.undirected:
        states[(a, b)] = 1
    for j, i in g.directed:
        states[(j, i) if j < i else (i, j)] = 2 if j < i else 3
    return states


def shd(a: Pdag, b: Pdag) -> int:
    """Number of vertex pairs whose edge state differs between the two graphs."""
    if a.p != b.p:
        raise InvalidInputError(f"vertex counts differ: {a.p} vs {b.p}")
    sa, sb = _pair_states(a), _pair_states(b)
    keys = set(sa) | set(sb)
    return sum(sa.get(k, _ABSENT) != sb.get(k, _ABSENT) for k in keys)


def normalized_shd(a: Pdag, b: Pdag) -> float:
    """SHD divided by the maximum edge number p(p-1)/2; always in [0, 1]."""
    if a.p < 2:
        raise InvalidInputError("normalization needs p >= 2")
    return shd(a, b) / (a.p * (a.p - 1) / 2)


@dataclass(frozen=True)
class ScenarioCase:
    """One frozen scenario inside a replica: network, data, and true class."""

    scenario: Scenario
    gbn: GaussianBayesNet
    dataset: Dataset
    truth: Cpdag

    @classmethod
    def from_gbn(cls, scenario: Scenario, gbn: GaussianBayesNet, dataset: Dataset):
        return cls(scenario, gbn, dataset, dag_to_cpdag(gbn.dag))


@dataclass(frozen=True)
class ObjectiveValue:
    """Mean normalized SHD over a scenario set, with the per-scenario values."""

    mean_nshd: float
    per_scenario: tuple[tuple[Scenario, float], ...]


def evaluate_objective(
    params: PcParams,
    replica: "Iterable[ScenarioCase]",
    max_cond: int | None = None,
) -> ObjectiveValue:
    """Average normalized SHD of the learner against the truth, per replica.

    `replica` is either an iterable of ScenarioCase or an object exposing
    them as a .cases attribute. Deterministic given (params, replica).
    """
    cases: Sequence[ScenarioCase] = tuple(getattr(replica, "cases", replica))
    if not cases:
        raise InvalidInputError("replica context holds no scenarios")
    per = []
    for case in cases:
        try:
            learned = pc_stable(case.dataset, params, max_cond)
            per.append((case.scenario, normalized_shd(learned, case.truth)))
        except PctuneError as exc:
            raise PctuneError(
                f"objective evaluation failed on scenario {case.scenario}: {exc}"
            ) from exc
    mean = sum(v for _, v in per) / len(per)
    return ObjectiveValue(mean, tuple(per))
