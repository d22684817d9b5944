"""Attribution projection calculus on structured source -> mediators -> destination networks."""
__version__ = "0.1.0"

from .attribution import (AttributionReport, attribution_conditional, attribution_marginal,
                          attribution_marginal_fd, attribution_matrix, attribution_uncertainty, decompose,
                          marginal_gradients)
from .discrete import DiscreteBN, DiscreteNetwork, EnumerationCapError, Factor
from .estimators import APClassifier, AttributionTransformer, SeparationLearner, SpuriousSuppressor
from .graph import architecture_graph, d_separated, model_graph
from .inference import (check_dimensional_sufficiency, conditional_label_prob, dominance_scores, label_marginals,
                        predict_label, sample_joint)
from .intervention import (InterventionQuery, InterventionResult, InvalidAdjustmentError, backdoor_adjust,
                           causal_effect, do_effect_ap, do_effect_oracle, frontdoor_adjust)
from .io import load_model, read_dataset, save_model, write_dataset
from .metrics import (MetricsReport, SuppressionConfig, compute_metrics, fairness_disparity, information_gain,
                      information_gain_exact, pearson_correlation, spurious_score, suppress_spurious)
from .network import (Dataset, DestinationSpec, EstimatorConfig, MediatorSpec, NetworkModel, Readout,
                      build_model)
from .separation import (SeparationCandidate, SeparationResult, conditional_mi, learn_separation,
                         separation_distance)
from .synth import (BenchReport, ScenarioSpec, convergence_study, generate_scenario, run_arch_benchmark,
                    scaling_study)
from .validate import ValidationReport, validate_suite

__all__ = [
    "__version__", "APClassifier", "AttributionReport", "AttributionTransformer", "BenchReport", "Dataset",
    "DestinationSpec", "DiscreteBN", "DiscreteNetwork", "EnumerationCapError", "EstimatorConfig", "Factor",
    "InterventionQuery", "InterventionResult", "InvalidAdjustmentError", "MediatorSpec", "MetricsReport",
    "NetworkModel", "Readout", "ScenarioSpec", "SeparationCandidate", "SeparationLearner", "SeparationResult",
    "SpuriousSuppressor", "SuppressionConfig", "ValidationReport", "architecture_graph",
    "attribution_conditional", "attribution_marginal", "attribution_marginal_fd", "attribution_matrix",
    "attribution_uncertainty", "backdoor_adjust", "build_model", "causal_effect",
    "check_dimensional_sufficiency", "compute_metrics", "conditional_label_prob", "conditional_mi",
    "convergence_study", "d_separated", "decompose", "do_effect_ap", "do_effect_oracle", "dominance_scores",
    "fairness_disparity", "frontdoor_adjust", "generate_scenario", "information_gain",
    "information_gain_exact", "label_marginals", "learn_separation", "load_model", "marginal_gradients",
    "model_graph", "pearson_correlation", "predict_label", "read_dataset", "run_arch_benchmark",
    "sample_joint", "save_model", "scaling_study", "separation_distance", "spurious_score",
    "suppress_spurious", "validate_suite", "write_dataset",
]
