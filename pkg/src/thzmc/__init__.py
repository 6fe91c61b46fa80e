"""Connection probability and ergodic capacity of single and multi-connectivity
in indoor THz networks with self-blockage and moving human blockers."""

from .analysis import Estimator, MetricResult, Strategy, StrategyKind
from .blockage import SystemParams
from .channel import AbsorptionSpectrum, LinkBudget, LinkGeometry, TransmissionWindow, W1, W2

__version__ = "0.1.0"

__all__ = ["AbsorptionSpectrum", "Estimator", "LinkBudget", "LinkGeometry", "MetricResult",
           "Strategy", "StrategyKind", "SystemParams", "TransmissionWindow", "W1", "W2"]
