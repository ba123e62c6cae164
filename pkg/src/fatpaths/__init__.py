"""Routing laboratory for low-diameter interconnect topologies.

Subpackages cover topology generation, path-diversity metrics, layered
multipath routing construction, throughput bounds via multicommodity flow,
and a flowlet/trimming packet-level simulator.
"""

__version__ = "0.1.0"

from .errors import (
    DeadlockDetected,
    InvalidParameter,
    RetryExhausted,
)
from .topology import RouterGraph

__all__ = [
    "RouterGraph",
    "InvalidParameter",
    "RetryExhausted",
    "DeadlockDetected",
]
