"""Antennas, beacons and free-space propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from dualwpt.regulations import DutySchedule
from dualwpt.rfquant import Distance, Frequency, PowerQuantity, db_to_linear, erp_to_eirp, wavelength

OMNIDIRECTIONAL = "omnidirectional"
DIRECTIONAL = "directional"

# Below this the far-field formula is not even approximately valid.
MIN_REFERENCE_DISTANCE_M = 0.25


class NearFieldError(ValueError):
    pass


@dataclass(frozen=True)
class Antenna:
    gain_dbi: float = 2.15
    horizontal_beamwidth_deg: float = 360.0
    pattern: str = OMNIDIRECTIONAL
    boresight_azimuth_deg: float = 0.0
    radiation_efficiency: float = 1.0

    def __post_init__(self):
        if self.pattern not in (OMNIDIRECTIONAL, DIRECTIONAL):
            raise ValueError(f"unknown antenna pattern {self.pattern!r}")
        if not 0 < self.horizontal_beamwidth_deg <= 360:
            raise ValueError("horizontal beamwidth must be in (0, 360] degrees")
        if self.pattern == OMNIDIRECTIONAL and self.horizontal_beamwidth_deg != 360:
            raise ValueError("an omnidirectional antenna has a 360 degree beamwidth")
        if not 0 < self.radiation_efficiency <= 1:
            raise ValueError("radiation efficiency must be in (0, 1]")

    @property
    def gain_linear(self) -> float:
        return db_to_linear(self.gain_dbi)

    @property
    def directional(self) -> bool:
        return self.pattern == DIRECTIONAL

    @classmethod
    def dipole(cls, radiation_efficiency: float = 1.0) -> Antenna:
        return cls(gain_dbi=2.15, radiation_efficiency=radiation_efficiency)

    @classmethod
    def patch(cls, beamwidth_deg: float, boresight_deg: float = 0.0, gain_dbi: float = 5.0) -> Antenna:
        return cls(
            gain_dbi=gain_dbi,
            horizontal_beamwidth_deg=beamwidth_deg,
            pattern=DIRECTIONAL,
            boresight_azimuth_deg=boresight_deg,
        )


@dataclass(frozen=True)
class Beacon:
    """A transmitter. ``erp`` already includes the antenna gain."""

    id: str
    position: tuple[float, float, float]
    antenna: Antenna
    erp: PowerQuantity
    frequency: Frequency
    duty: DutySchedule = field(default_factory=DutySchedule.continuous)
    channel: int | None = None
    steerable: bool = False

    def __post_init__(self):
        if self.erp.watts <= 0:
            raise ValueError(f"beacon {self.id}: ERP must be > 0")
        if len(self.position) != 3:
            raise ValueError(f"beacon {self.id}: position must be a 3-vector")

    @property
    def eirp(self) -> PowerQuantity:
        return erp_to_eirp(self.erp)


@dataclass(frozen=True)
class PropagationModel:
    path_loss_exponent: float = 2.0
    reference_distance: float = 1.0

    def __post_init__(self):
        if self.path_loss_exponent < 2:
            raise ValueError("path loss exponent must be >= 2")
        if self.reference_distance < MIN_REFERENCE_DISTANCE_M:
            raise ValueError(f"reference distance must be >= {MIN_REFERENCE_DISTANCE_M} m")


def distance_between(a: Sequence[float], b: Sequence[float]) -> float:
    return math.dist(a, b)


def free_space_path_gain(d: Distance, f: Frequency, model: PropagationModel = PropagationModel()) -> float:
    """Power ratio between isotropic radiators separated by ``d``.

    Exponent 2 is Friis, (lambda / 4 pi d)^2. Other exponents follow a
    log-distance law anchored at the Friis value at the reference distance.
    """
    d0 = model.reference_distance
    if d.meters < d0:
        raise NearFieldError(f"distance {d.meters} m is below the reference distance {d0} m")
    lam = wavelength(f)
    if model.path_loss_exponent == 2.0:
        return (lam / (4.0 * math.pi * d.meters)) ** 2
    return (lam / (4.0 * math.pi * d0)) ** 2 * (d0 / d.meters) ** model.path_loss_exponent


def received_power(
    beacon: Beacon,
    tag_antenna: Antenna,
    d: Distance,
    model: PropagationModel = PropagationModel(),
    polarization_loss: float = 1.0,
) -> PowerQuantity:
    """Power at the tag antenna terminals.

    The tag's radiation efficiency is deliberately not applied here; the
    harvester chain owns it.
    """
    gain = free_space_path_gain(d, beacon.frequency, model)
    return PowerQuantity(beacon.eirp.watts * tag_antenna.gain_linear * gain * polarization_loss)


def azimuth_deg(origin: Sequence[float], target: Sequence[float]) -> float:
    return math.degrees(math.atan2(target[1] - origin[1], target[0] - origin[0]))


def angle_difference_deg(a: float, b: float) -> float:
    """Signed smallest difference a - b, in [-180, 180)."""
    return (a - b + 180.0) % 360.0 - 180.0


def in_beam(beacon: Beacon, tag_position: Sequence[float], boresight_deg: float | None = None) -> bool:
    """Azimuth-only beam membership; elevation is ignored.

    ``boresight_deg`` overrides the antenna boresight, which is how a steered
    beacon is evaluated.
    """
    if not beacon.antenna.directional:
        raise ValueError(f"beacon {beacon.id} is omnidirectional; beam membership is undefined")
    if math.isclose(beacon.position[0], tag_position[0]) and math.isclose(beacon.position[1], tag_position[1]):
        return True
    if boresight_deg is None:
        boresight_deg = beacon.antenna.boresight_azimuth_deg
    off_axis = angle_difference_deg(azimuth_deg(beacon.position, tag_position), boresight_deg)
    return abs(off_axis) <= beacon.antenna.horizontal_beamwidth_deg / 2.0
