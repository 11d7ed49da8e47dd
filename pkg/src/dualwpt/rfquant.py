"""Power, frequency and distance quantities.

Power is stored linearly in watts; dBm is a view over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact
DIPOLE_GAIN_DBI = 2.15


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(ratio: float) -> float:
    if ratio <= 0:
        raise ValueError(f"dB undefined for non-positive ratio {ratio!r}")
    return 10.0 * math.log10(ratio)


@dataclass(frozen=True, order=True)
class PowerQuantity:
    """A non-negative power level, canonical unit watts."""

    watts: float

    def __post_init__(self):
        if math.isnan(self.watts) or self.watts < 0:
            raise ValueError(f"power must be >= 0 W, got {self.watts!r}")

    @classmethod
    def from_dbm(cls, dbm: float) -> PowerQuantity:
        return cls(10.0 ** ((dbm - 30.0) / 10.0))

    @classmethod
    def from_mw(cls, mw: float) -> PowerQuantity:
        return cls(mw * 1e-3)

    @property
    def mw(self) -> float:
        return self.watts * 1e3

    @property
    def dbm(self) -> float:
        if self.watts <= 0:
            raise ValueError("dBm undefined for zero power")
        return 10.0 * math.log10(self.watts) + 30.0

    def scaled(self, factor: float) -> PowerQuantity:
        return PowerQuantity(self.watts * factor)

    def plus_db(self, db: float) -> PowerQuantity:
        return PowerQuantity(self.watts * db_to_linear(db))

    def __str__(self):
        if self.watts <= 0:
            return "0 W"
        return f"{self.dbm:.2f} dBm"


@dataclass(frozen=True)
class Frequency:
    hertz: float

    def __post_init__(self):
        if not self.hertz > 0 or math.isinf(self.hertz):
            raise ValueError(f"frequency must be a positive finite value, got {self.hertz!r}")

    @classmethod
    def from_mhz(cls, mhz: float) -> Frequency:
        return cls(mhz * 1e6)

    @property
    def mhz(self) -> float:
        return self.hertz / 1e6


@dataclass(frozen=True)
class Distance:
    meters: float

    def __post_init__(self):
        if not self.meters > 0 or math.isinf(self.meters):
            raise ValueError(f"distance must be a positive finite value, got {self.meters!r}")


def dbm_to_watts(p_dbm: float) -> PowerQuantity:
    return PowerQuantity.from_dbm(p_dbm)


def watts_to_dbm(p: PowerQuantity | float) -> float:
    if isinstance(p, PowerQuantity):
        return p.dbm
    return PowerQuantity(p).dbm


def erp_to_eirp(erp: PowerQuantity) -> PowerQuantity:
    """ERP is referenced to a half-wave dipole, EIRP to an isotropic radiator."""
    if erp.watts <= 0:
        raise ValueError("ERP must be > 0 W")
    return erp.plus_db(DIPOLE_GAIN_DBI)


def eirp_to_erp(eirp: PowerQuantity) -> PowerQuantity:
    if eirp.watts <= 0:
        raise ValueError("EIRP must be > 0 W")
    return eirp.plus_db(-DIPOLE_GAIN_DBI)


def wavelength(f: Frequency) -> float:
    """Free-space wavelength in meters."""
    return SPEED_OF_LIGHT / f.hertz
