"""Prototypal analysis and prototypal regression in inner-product spaces.

Prototypes are convex combinations of the data, data points are
reconstructed as convex combinations of nearby prototypes, and regression
pairs every predictor prototype with a response prototype. Everything runs on
Gram matrices, so vectors, categories and sample sets (through kernel mean
embeddings) are handled alike.
"""

from .archetypes import (FitOptions, PrototypeModel, encode, fit_archetypal, fit_prototypal,
                         objective, update_A, update_B)
from .estimators import (ArchetypalAnalysis, MultiplePrototypalRegressor, PrototypalAnalysis,
                         PrototypalClassifier, PrototypalRegressor)
from .exceptions import InvalidArgumentError, NumericalError, ParseError
from .gram import EmpiricalDistribution, GramMatrix, KernelSpec, cross_gram, gram_matrix
from .regression import (MultipleRegressionModel, SimpleRegressionModel, class_probabilities, classify,
                         fit_multiple, fit_simple, predict_multiple, predict_simple)
from .rng import SplitMix64
from .simplex import project_to_simplex, solve_simplex_qp

__version__ = "0.1.0"
