"""Directional-antenna neighbor discovery with successive interference
cancellation (SIC) and multi-packet reception (MPR).

The package bundles a seeded slot-synchronous simulator for the six
CRA/SBA protocol variants, closed-form evaluators for their discovery
probabilities and expected discovery time, and an experiment CLI.
"""

from .errors import ConfigurationError, DomainError
from .rng import RngStream

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "DomainError", "RngStream", "__version__"]
