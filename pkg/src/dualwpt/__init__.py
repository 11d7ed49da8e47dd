"""Dual-band RF wireless power transfer planner for energy-neutral positioning tags."""

from dualwpt.rfquant import Distance, Frequency, PowerQuantity, dbm_to_watts, erp_to_eirp, wavelength

__version__ = "0.1.0"

__all__ = [
    "Distance",
    "Frequency",
    "PowerQuantity",
    "dbm_to_watts",
    "erp_to_eirp",
    "wavelength",
]
