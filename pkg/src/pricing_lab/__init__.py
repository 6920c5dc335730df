"""Pricing-based mechanisms for budgeted agents: ex ante curves, closeness,
sequential posted pricing and prophet-style thresholds."""

from .curves import concave_hull, price_posting_curve
from .dist import Agent, AgentModel, DiscreteDist
from .envs import KUnit, Partition, Graphic, ear_optimize
from .exante import closeness, exante_curve

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "AgentModel",
    "DiscreteDist",
    "Graphic",
    "KUnit",
    "Partition",
    "closeness",
    "concave_hull",
    "ear_optimize",
    "exante_curve",
    "price_posting_curve",
]
