"""Discriminating two non-orthogonal qubit states by continuous measurement,
with and without symmetry-restoring feedback."""

__version__ = "0.1.0"

from .qubit import BlochState, CodingEnsemble, coding_states, optimal_mutual_info  # noqa: E402
from .information import mutual_info_fb, mutual_info_nofb, optimal_rate, percent_increase  # noqa: E402
from .trajectory import SimConfig, simulate  # noqa: E402

__all__ = [
    "__version__",
    "BlochState",
    "CodingEnsemble",
    "coding_states",
    "optimal_mutual_info",
    "mutual_info_nofb",
    "mutual_info_fb",
    "optimal_rate",
    "percent_increase",
    "SimConfig",
    "simulate",
]
