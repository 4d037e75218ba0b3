"""Change-point detection in dynamic networks through learned latent priors.

A decoder maps a latent vector to edge probabilities. Each time point has
its own Gaussian prior mean, and a group fused lasso on those means makes
them piecewise constant, so changes in the network show up as jumps in the
learned means.
"""

__version__ = "0.1.0"

from .admm import AdmmConfig, FitResult, fit
from .graphs import GraphFormatError, GraphSequence, load_graph_sequence, save_graph_sequence
from .langevin import LangevinConfig
from .localization import LocalizationConfig, detect
from .selection import refit_and_pick, select_lambda

__all__ = [
    "AdmmConfig", "FitResult", "fit", "GraphFormatError", "GraphSequence",
    "load_graph_sequence", "save_graph_sequence", "LangevinConfig", "LocalizationConfig",
    "detect", "refit_and_pick", "select_lambda",
]
