"""Code-based chaining bounds on finite metric spaces."""
from .errors import (AdmissibilityError, ChainingError, DegenerateSpaceError, DivergenceError,
                     InfiniteLengthError, ModelError, ParameterError, StructuralError)
from .functionals import (BoundReport, bednorz_partition_bound, conditional_entropy, cross_entropy,
                          entropy_chain_bound, evaluate, ft_functional, m_functional, refinement_bound,
                          sigma_bar, sigma_code, sigma_code_ln, sigma_prime)
from .gaussian import (GaussianModel, McEstimate, canonical_metric, check_expected_sup, check_increment_condition,
                       check_tail_bound, estimate_sup, iid, rbf, sample)
from .lower_bound import assign_lower_codes, greedy_gaussian_partition, sudakov_check, verify_len_diff
from .metric import (MetricSpace, ProbabilityMeasure, ball, covering_number, diameter, euclidean,
                     normalize_diameter, validate_metric)
from .optimizer import fernique_self_bound, optimize_majorizing_measure
from .partition import PartitionTree, build_radial_partitions, cell_of, validate_tree
from .vlc import (VlcSequence, build_from_labeled_net, build_from_measures, build_from_single_measure,
                  kraft_sum, mixture_from_codes, shannon_lengths, validate_admissible)
from .weights import WeightSequence

__version__ = "0.1.0"
