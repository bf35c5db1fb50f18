"""Random feature models with learnable activation functions."""

from .basis import BasisConfig, ActivationCoeffs, eval_basis, eval_activation, fit_activation
from .features import (FeaturePool, LeverageWeights, WeightedFeatures, leverage_weights,
                       resample_weighted, sample_pool)
from .kernel import effective_dimension, gram_empirical, SpectrumRegime, spectrum_bound
from .solvers import SgdConfig, ridge_solve, ridge_solve_dual, sgd_joint
from .data import Dataset, SyntheticTruth, load_csv, standardize_split, synth_target
from .pipeline import PipelineConfig, RflafModel, run_leverage_weighted, run_plain, excess_risk

__version__ = "0.1.0"
