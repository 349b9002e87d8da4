"""Monte Carlo simulator and power optimizer for cooperative IIoT subnetworks.

Single-hop, two-hop DF/AF relaying (TDMA and FDMA), and RIS-assisted uplink
transmission under a hard cycle-time budget, with total-transmit-power
minimization by sequential convex approximation.
"""

__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig
from .classify import Schedule, all_single_hop, classify_af, classify_df
from .protocol import MODES, Allocation
from .solver import BACKEND

__all__ = [
    "__version__",
    "ConfigError",
    "ScenarioConfig",
    "Schedule",
    "all_single_hop",
    "classify_af",
    "classify_df",
    "MODES",
    "Allocation",
    "BACKEND",
]
