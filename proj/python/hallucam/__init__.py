"""Gaussian-splat sensor synthesis, run supervision and trajectory evaluation."""

from ._hallucam import *  # noqa: F401,F403
from ._hallucam import __doc__  # noqa: F401

__version__ = "0.1.0"
