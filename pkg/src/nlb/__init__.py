"""Forward recent sampling of temporal neighbors with constant-time table upkeep."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .sampler import NeighborTable, SamplerConfig, Scheme
from .stream import LinkStream, TemporalLink

__all__ = ["BACKEND", "LinkStream", "NeighborTable", "SamplerConfig", "Scheme", "TemporalLink",
           "__version__"]
