"""Evidential deep-learning classifier with set-valued decisions."""

from .belief import Frame, GeneralMassFunction, MassVector, combine_dempster, hurwicz_expectation, is_normalized, vacuous
from .decision import Decision, ExpectedUtilityVector, decide, expected_utilities, probabilistic_baseline_decide
from .dslayer import PrototypeBank, ds_backward, ds_forward, init_prototypes
from .model import EvidentialClassifier
from .training import TrainingConfig, gradient_check, initialize_model, train, tune_nu
from .utility import Act, ActCatalog, build_catalog, extend_utility_matrix, meowa_weights

__version__ = "0.1.0"
