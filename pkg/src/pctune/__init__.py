"""pctune: PC-stable structure learning with tunable independence tests.

Learns Gaussian Bayesian network structures with the PC-stable algorithm
and tunes its two hyperparameters, the significance level and the
conditional-independence test, by Bayesian optimization of a normalized
structural-Hamming-distance objective over simulated networks. Random
search and a fixed expert recommendation are included as baselines.
"""

from .ci import (
    PcParams,
    TestKind,
    ci_decision,
    fisher_z_test,
    mi_chi2_test,
    mi_shrink_test,
    partial_correlation,
    student_t_test,
)
from .exceptions import PctuneError
from .graphs import (
    Cpdag,
    Dag,
    Pdag,
    apply_meek_rules,
    dag_to_cpdag,
    format_graph,
    is_acyclic,
    parse_cpdag,
    parse_dag,
    parse_pdag,
)
from .harness import ExperimentConfig, build_scenarios, report, run_experiment
from .metrics import ObjectiveValue, ScenarioCase, evaluate_objective, normalized_shd, shd
from .pc import (
    PCStable,
    PcResult,
    estimate_skeleton,
    orient_v_structures,
    pc_population,
    pc_stable,
)
from .simulate import (
    Dataset,
    GaussianBayesNet,
    Scenario,
    implied_covariance,
    rng_stream,
    sample_dag,
    sample_data,
    sample_weights,
)
from .tuner import (
    CandidateGrid,
    TrialRecord,
    expert_criterion,
    pes_acquisition,
    run_bo,
    run_random_search,
    suggest_next,
)

__version__ = "0.1.0"

__all__ = [
    "PcParams", "TestKind", "ci_decision", "fisher_z_test", "mi_chi2_test",
    "mi_shrink_test", "partial_correlation", "student_t_test",
    "PctuneError",
    "Cpdag", "Dag", "Pdag", "apply_meek_rules", "dag_to_cpdag", "format_graph",
    "is_acyclic", "parse_cpdag", "parse_dag", "parse_pdag",
    "ExperimentConfig", "build_scenarios", "report", "run_experiment",
    "ObjectiveValue", "ScenarioCase", "evaluate_objective", "normalized_shd", "shd",
    "PCStable", "PcResult", "estimate_skeleton", "orient_v_structures",
    "pc_population", "pc_stable",
    "Dataset", "GaussianBayesNet", "Scenario", "implied_covariance", "rng_stream",
    "sample_dag", "sample_data", "sample_weights",
    "CandidateGrid", "TrialRecord", "expert_criterion", "pes_acquisition",
    "run_bo", "run_random_search", "suggest_next",
]
