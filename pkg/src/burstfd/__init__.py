"""Burst detection in neonatal EEG from a decimated separable-kernel
time-frequency distribution and gradient-boosted trees."""

from .boost import BoostConfig, TreeEnsemble, deserialize, predict_proba, serialize, train
from .epochs import EpochPlan, iter_record_slices, plan_epochs
from .errors import BurstfdError, ConfigError, FormatError, PreconditionError
from .evaluation import jackknife_ci, loso_cv, mann_whitney_one_sided, roc_auc
from .pipeline import PipelineConfig, run_benchmark, run_detect, run_eval
from .records import load_record, read_manifest
from .signal_pre import FilterSpec, Label, SignalRecord, analytic_signal
from .synth import SynthConfig, generate_synthetic_corpus
from .tf_engine import (GridSpec, KernelSpec, WindowSpec, cost_report, separable_tfd_efficient,
                        separable_tfd_full, wigner_ville)

__version__ = "0.1.0"
