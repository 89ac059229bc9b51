"""Ensemble self-training with inter-model voting, augmentation consistency
and an error-aware pseudo-label budget."""
from .augment import AugmentConfig, Augmentor
from .core import Dataset, EnsembleState, Example, PseudoLabeledSet, Split, make_open_world_split
from .datasets import generate_dataset, load_csv
from .errors import BiCoGError
from .learners import CentroidLearner, KNNLearner, LogisticLearner, NoisyOracleLearner, build_learner
from .metrics import distribution_stats, evaluate, oracle_view
from .orchestrator import RunConfig, check_invariants, run, run_round, warmup
from .selector import budget, inter_consistency, intra_consistency, lower_bound_ok, measure_error
from .theory import lemma1_holds, mc_vote_error, pac_sample_bound, sufficient_condition_holds

__version__ = "0.1.0"
