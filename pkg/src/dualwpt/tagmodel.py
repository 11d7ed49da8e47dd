"""Energy budget of the RF-acoustic positioning tag."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from dualwpt.harvester import HarvesterStage, StorageCapacitor, storage_energy
from dualwpt.linkbudget import Antenna

E_TAG_J = 3.15e-6
RANGINGS_PER_FIX = 4
RX_WINDOW_S = 1e-3
DECOMPOSITION_TOLERANCE = 0.01


class NotChargedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TagEnergyProfile:
    """Per-ranging energy cost.

    ``e_tag`` may be left out when the decomposition
    ``active_power * rx_window + turnon_energy`` is supplied instead; when
    both are given they must agree within 1 %.
    """

    e_tag: float | None = E_TAG_J
    rangings_per_fix: int = RANGINGS_PER_FIX
    active_power: float | None = None
    rx_window: float = RX_WINDOW_S
    turnon_time: float | None = None
    turnon_energy: float | None = None

    def __post_init__(self):
        if self.rangings_per_fix < 1:
            raise ValueError("rangings_per_fix must be >= 1")
        if self.rx_window <= 0:
            raise ValueError("rx_window must be > 0 s")
        decomposed = self.decomposed_energy
        if self.e_tag is None:
            if decomposed is None:
                raise ValueError("either e_tag or active_power must be given")
            if decomposed <= 0:
                raise ValueError("decomposed ranging energy must be > 0 J")
        else:
            if self.e_tag <= 0:
                raise ValueError("e_tag must be > 0 J")
            if decomposed is not None and abs(decomposed - self.e_tag) > DECOMPOSITION_TOLERANCE * self.e_tag:
                raise ValueError(
                    f"active_power * rx_window + turnon_energy = {decomposed:.4g} J "
                    f"disagrees with e_tag = {self.e_tag:.4g} J by more than 1 %"
                )

    @property
    def decomposed_energy(self) -> float | None:
        if self.active_power is None:
            return None
        return self.active_power * self.rx_window + (self.turnon_energy or 0.0)

    @property
    def ranging_energy(self) -> float:
        return self.e_tag if self.e_tag is not None else self.decomposed_energy


@dataclass(frozen=True)
class Tag:
    id: str
    position: tuple[float, float, float]
    antenna: Antenna = field(default_factory=Antenna.dipole)
    stages: tuple[HarvesterStage, ...] = (HarvesterStage(),)
    capacitor: StorageCapacitor = StorageCapacitor(22e-6)
    profile: TagEnergyProfile = TagEnergyProfile()

    def __post_init__(self):
        if not 1 <= len(self.stages) <= 2:
            raise ValueError(f"tag {self.id}: needs one or two harvester stages, got {len(self.stages)}")
        if len(self.position) != 3:
            raise ValueError(f"tag {self.id}: position must be a 3-vector")


def fix_energy(profile: TagEnergyProfile) -> float:
    """Energy for one 3D position estimate."""
    return profile.rangings_per_fix * profile.ranging_energy


class Feasibility(NamedTuple):
    feasible: bool
    margin: float
    usable: float
    required: float


def storage_feasible(cap: StorageCapacitor, profile: TagEnergyProfile, eta_ldo: float) -> Feasibility:
    """Whether one charge window, after LDO losses, pays for a full fix."""
    usable = storage_energy(cap, cap.v_ovdis, cap.v_chrdy) * eta_ldo
    required = fix_energy(profile)
    return Feasibility(usable >= required, usable - required, usable, required)


class FixRecord(NamedTuple):
    time: float
    energy: float
    v_before: float


def perform_fix(cap: StorageCapacitor, now: float) -> tuple[StorageCapacitor, FixRecord]:
    """Spend the charge window on one fix; the discharge is treated as instantaneous."""
    if cap.v_now < cap.v_chrdy and not math.isclose(cap.v_now, cap.v_chrdy, rel_tol=1e-12):
        raise NotChargedError(f"not charged: {cap.v_now:.4f} V < v_chrdy {cap.v_chrdy:.4f} V")
    spent = cap.stored_energy - cap.energy_at(cap.v_ovdis)
    return replace(cap, v_now=cap.v_ovdis), FixRecord(now, spent, cap.v_now)
