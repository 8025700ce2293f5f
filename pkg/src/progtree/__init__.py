"""Progressive oblique decision trees, RF+S and baseline forests."""
from .data import Dataset, FeatureMode, load_csv, minmax_normalize, train_val_split
from .splitspace import CandidatePool, CandidateSet, ObliqueSplit, WeightVector
from .tree import FitConfig, ObliqueTree, fit_tree, sample_equivalent
from .progressive import ProgressiveConfig, checkpoint, refine, resume, iteration_budget
from .forests import (FrcParams, RfParams, augment_features, fit_breiman_tree, fit_forest_rc,
                      fit_random_forest, fit_rf_plus_s, predict_ensemble)
from .experiments import XorSpec, expand_interactions, gen_xor, r2_score, rrs, run_benchmark

__version__ = "0.1.0"
