"""Ordinal severity classification of rare extreme events.

Extreme-value distributions, ordinal training losses, severity schemes, an
evaluation suite, a numpy MLP and the benchmark protocol that ties them
together.
"""

__version__ = "0.1.0"

from .errors import OrdinalExtremesError
from .extreme_dist import EgpdParams, egpd_cdf, fit_egpd, tdegpd_nll, tdegpd_pmf
from .losses import LOSS_NAMES, make_objective
from .metrics import evaluate
from .severity import SeverityScheme, classify, fit_egpd_scheme, fit_kmeans_scheme
