"""Proactive multivariate time-series anomaly detection.

Forecast the next window from the past (forward model) or reconstruct
the past from the next window (backward model), score timestamps by how
badly the prediction fails, and flag the highest-scoring ones.
"""

__version__ = "0.1.0"

from .backend import active_backend

__all__ = ["active_backend", "__version__"]
