"""Separation-utility frontier oracles and CMI-regularized training.

Subpackage map:
  dist        exact finite joints and information quantities (nats)
  estimators  hard/soft plug-in CMI, bias correction, concentration bounds
  frontier    brute-force predictor enumeration, envelopes, trade-off audits
  fixtures    canonical small joints for each trade-off regime
  neural      minimal MLP, exact gradients, balanced objective, Adam
  trainer     regularized training loop, k-fold protocol, weight sweeps
  metrics     accuracy/AUROC/EO gaps, threshold tuner, test-time CMI
  data        CSV ingestion, synthetic generation, leak-free fold views
  cli         the fairfront command
"""

from ._backend import BACKEND
from .dist import (
    JointPMF2,
    JointPMF3,
    PredictorTable,
    RandomizedPredictor,
    conditional_mutual_information,
    entropy,
    mutual_information,
    pushforward,
)
from .estimators import SampleBatch, SoftBatch, plugin_cmi_hard, soft_cmi

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "JointPMF2",
    "JointPMF3",
    "PredictorTable",
    "RandomizedPredictor",
    "SampleBatch",
    "SoftBatch",
    "conditional_mutual_information",
    "entropy",
    "mutual_information",
    "plugin_cmi_hard",
    "pushforward",
    "soft_cmi",
    "__version__",
]
