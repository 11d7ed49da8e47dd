"""Receive-side energy pipeline: efficiency chain, sensitivity window and storage capacitor."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from dualwpt.linkbudget import Antenna, Beacon, PropagationModel, free_space_path_gain
from dualwpt.rfquant import Distance, PowerQuantity

SENSITIVITY_MIN_DBM = -19.0
SENSITIVITY_MAX_DBM = 10.0
COLDSTART_SEARCH_LIMIT_M = 10_000.0

INITIAL = "initial"
UPDATE = "update"

OK = "ok"
NO_INPUT = "no_input"
BELOW_SENSITIVITY = "below_sensitivity"
CLIPPED = "clipped"


def _check_efficiency(name: str, value: float) -> None:
    if not 0 < value <= 1:
        raise ValueError(f"{name} must be in (0, 1], got {value!r}")


@dataclass(frozen=True)
class EfficiencyCurve:
    """Piecewise-linear RF-path efficiency over harvester input power (dBm).

    Values outside the tabulated range are held at the nearest end point.
    """

    input_dbm: tuple[float, ...]
    eta: tuple[float, ...]

    def __post_init__(self):
        if len(self.input_dbm) != len(self.eta) or not self.input_dbm:
            raise ValueError("efficiency curve needs matching, non-empty columns")
        if any(b <= a for a, b in zip(self.input_dbm, self.input_dbm[1:])):
            raise ValueError("efficiency curve input_dbm must be strictly increasing")
        for e in self.eta:
            if not 0 < e < 1:
                raise ValueError(f"eta_rf must be in (0, 1), got {e!r}")

    @classmethod
    def flat(cls, eta: float, at_dbm: float = -10.0) -> EfficiencyCurve:
        return cls((at_dbm,), (eta,))

    @classmethod
    def from_csv(cls, path: str | Path) -> EfficiencyCurve:
        """Read an ``input_dbm,eta_rf`` two-column CSV with a header row."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header != ["input_dbm", "eta_rf"]:
                raise ValueError(f"{path}: expected header 'input_dbm,eta_rf', got {','.join(header)!r}")
            xs, ys = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row or not "".join(row).strip():
                    continue
                if len(row) != 2:
                    raise ValueError(f"{path}:{lineno}: expected two columns")
                xs.append(float(row[0]))
                ys.append(float(row[1]))
        return cls(tuple(xs), tuple(ys))

    def covers(self, lo_dbm: float, hi_dbm: float) -> bool:
        if len(self.input_dbm) == 1:
            return True
        return self.input_dbm[0] <= lo_dbm and self.input_dbm[-1] >= hi_dbm

    def __call__(self, p_dbm: float) -> float:
        return float(np.interp(p_dbm, self.input_dbm, self.eta))


@dataclass(frozen=True)
class EfficiencyChain:
    eta_d: float
    eta_rf_curve: EfficiencyCurve
    eta_b: float
    eta_ldo: float
    eta_c: float

    def __post_init__(self):
        for name in ("eta_d", "eta_b", "eta_ldo", "eta_c"):
            _check_efficiency(name, getattr(self, name))

    def eta_rf(self, p_in_dbm: float) -> float:
        return self.eta_rf_curve(p_in_dbm)

    def charging_multiplier(self, p_in_dbm: float) -> float:
        """Antenna terminals to capacitor: eta_d * eta_rf * eta_b * eta_c."""
        return self.eta_d * self.eta_rf(p_in_dbm) * self.eta_b * self.eta_c


# Table values quoted at -10 dBm receive power.
CHAIN_868 = EfficiencyChain(0.7517, EfficiencyCurve.flat(0.3778), 0.7380, 0.7407, 0.99)
CHAIN_2400 = EfficiencyChain(0.8000, EfficiencyCurve.flat(0.1413), 0.7380, 0.7407, 0.99)
CHAIN_PRESETS = {"868": CHAIN_868, "2400": CHAIN_2400, "2450": CHAIN_2400}


@dataclass(frozen=True)
class HarvesterStage:
    chain: EfficiencyChain = CHAIN_868
    sensitivity_min: PowerQuantity = PowerQuantity.from_dbm(SENSITIVITY_MIN_DBM)
    sensitivity_max: PowerQuantity = PowerQuantity.from_dbm(SENSITIVITY_MAX_DBM)
    tuned_channels: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.sensitivity_min < self.sensitivity_max:
            raise ValueError("sensitivity_min must be below sensitivity_max")
        lo = self.sensitivity_min.dbm if self.sensitivity_min.watts > 0 else -math.inf
        if not self.chain.eta_rf_curve.covers(lo, self.sensitivity_max.dbm):
            raise ValueError("eta_rf curve does not cover the harvester sensitivity window")

    def accepts(self, channel: int | None) -> bool:
        """An untuned stage (no channels listed) takes every channel."""
        return not self.tuned_channels or channel is None or channel in self.tuned_channels


class HarvestResult(NamedTuple):
    power: float
    input_power: float
    status: str

    @property
    def clipped(self) -> bool:
        return self.status == CLIPPED


def harvested_power(p_rx: PowerQuantity, stage: HarvesterStage) -> HarvestResult:
    """Power delivered into the storage capacitor for a given receive power.

    The sensitivity window applies at the harvester input, after the
    antenna radiation efficiency. Input above the window is evaluated at the
    upper edge and flagged.
    """
    chain = stage.chain
    p_in = p_rx.watts * chain.eta_d
    if p_in <= 0:
        return HarvestResult(0.0, 0.0, NO_INPUT)
    if p_in < stage.sensitivity_min.watts:
        return HarvestResult(0.0, p_in, BELOW_SENSITIVITY)
    status = OK
    p_eval = p_in
    if p_in > stage.sensitivity_max.watts:
        p_eval = stage.sensitivity_max.watts
        status = CLIPPED
    p_dbm = 10.0 * math.log10(p_eval) + 30.0
    return HarvestResult(p_eval * chain.eta_rf(p_dbm) * chain.eta_b * chain.eta_c, p_in, status)


def combine_stages(stages: Sequence[HarvesterStage], per_stage_rx: Sequence[PowerQuantity]) -> float:
    """Total capacitor input from parallel stages sharing one storage element."""
    if len(stages) != len(per_stage_rx):
        raise ValueError("one receive power per stage is required")
    return math.fsum(harvested_power(p, s).power for s, p in zip(stages, per_stage_rx))


@dataclass(frozen=True)
class StorageCapacitor:
    """Storage element and its usable voltage window.

    ``v_initial_target`` is the cold-start target for the initial charge
    window (defaults to ``v_chrdy``); ``v_max`` caps charging (defaults to
    ``v_chrdy``).
    """

    capacitance: float
    v_chrdy: float = 3.10
    v_ovdis: float = 2.80
    v_now: float = 0.0
    v_initial_target: float | None = None
    v_max: float | None = None

    def __post_init__(self):
        if not self.capacitance > 0:
            raise ValueError("capacitance must be > 0 F")
        if not 0 <= self.v_ovdis <= self.v_chrdy:
            raise ValueError(f"need 0 <= v_ovdis <= v_chrdy, got {self.v_ovdis} V / {self.v_chrdy} V")
        if self.v_now < 0:
            raise ValueError("v_now must be >= 0 V")
        if self.v_initial_target is not None and not self.v_initial_target > 0:
            raise ValueError("v_initial_target must be > 0 V")
        if self.v_max is not None and self.v_max < self.v_chrdy:
            raise ValueError("v_max must be >= v_chrdy")

    @classmethod
    def microfarads(cls, uf: float, **kwargs) -> StorageCapacitor:
        return cls(capacitance=uf * 1e-6, **kwargs)

    @property
    def initial_target(self) -> float:
        return self.v_chrdy if self.v_initial_target is None else self.v_initial_target

    @property
    def ceiling(self) -> float:
        return self.v_chrdy if self.v_max is None else self.v_max

    def energy_at(self, v: float) -> float:
        return 0.5 * self.capacitance * v * v

    @property
    def stored_energy(self) -> float:
        return self.energy_at(self.v_now)

    def voltage_for_energy(self, energy: float) -> float:
        return math.sqrt(2.0 * max(energy, 0.0) / self.capacitance)

    def window(self, which: str) -> tuple[float, float]:
        if which == INITIAL:
            return 0.0, self.initial_target
        if which == UPDATE:
            return self.v_ovdis, self.v_chrdy
        raise ValueError(f"unknown charge window {which!r}; expected 'initial' or 'update'")


def storage_energy(cap: StorageCapacitor, v_from: float, v_to: float) -> float:
    """Energy in joules to raise the capacitor from ``v_from`` to ``v_to``."""
    if v_from < 0:
        raise ValueError("v_from must be >= 0 V")
    if v_to < v_from:
        raise ValueError(f"v_to ({v_to} V) is below v_from ({v_from} V)")
    return 0.5 * cap.capacitance * (v_to * v_to - v_from * v_from)


def charge_time(cap: StorageCapacitor, v_from: float, v_to: float, p_harv: float) -> float:
    """Seconds to charge at constant power; ``math.inf`` when nothing is harvested."""
    if p_harv < 0:
        raise ValueError("harvested power must be >= 0 W")
    energy = storage_energy(cap, v_from, v_to)
    if p_harv == 0:
        return math.inf
    return energy / p_harv


class LedgerEntry(NamedTuple):
    start: float
    duration: float
    power: float
    energy_in: float
    energy_stored: float


@dataclass(frozen=True)
class ChargeOutcome:
    capacitor: StorageCapacitor
    ledger: list[LedgerEntry] = field(default_factory=list)

    @property
    def energy_in(self) -> float:
        return math.fsum(e.energy_in for e in self.ledger)

    @property
    def energy_stored(self) -> float:
        return math.fsum(e.energy_stored for e in self.ledger)


def _check_profile(profile: Sequence[tuple[float, float]]) -> None:
    if not profile:
        raise ValueError("power profile is empty")
    for seg_duration, power in profile:
        if seg_duration <= 0:
            raise ValueError("profile segment durations must be > 0 s")
        if power < 0:
            raise ValueError("profile segment powers must be >= 0 W")


def integrate_charge(
    cap: StorageCapacitor,
    profile: Sequence[tuple[float, float]],
    duration: float,
) -> ChargeOutcome:
    """Advance the capacitor through ``duration`` seconds of a power profile.

    ``profile`` is a sequence of ``(segment_seconds, watts)`` pairs repeated
    cyclically. Charging stops at ``cap.ceiling``; energy offered beyond it
    shows up as ``energy_in`` but not ``energy_stored``.
    """
    _check_profile(profile)
    if duration < 0:
        raise ValueError("duration must be >= 0 s")
    energy = cap.stored_energy
    e_ceiling = max(cap.energy_at(cap.ceiling), energy)
    ledger = []
    t = 0.0
    i = 0
    while t < duration:
        seg_duration, power = profile[i % len(profile)]
        dt = min(seg_duration, duration - t)
        e_in = power * dt
        e_stored = min(e_in, e_ceiling - energy)
        energy += e_stored
        ledger.append(LedgerEntry(t, dt, power, e_in, e_stored))
        t += dt
        i += 1
    v_new = cap.v_now if energy == cap.stored_energy else cap.voltage_for_energy(energy)
    return ChargeOutcome(replace(cap, v_now=v_new), ledger)


def time_to_voltage(
    cap: StorageCapacitor,
    profile: Sequence[tuple[float, float]],
    v_target: float,
) -> float:
    """First time the cyclic profile lifts ``cap.v_now`` to ``v_target``."""
    _check_profile(profile)
    needed = cap.energy_at(v_target) - cap.stored_energy
    if needed <= 0:
        return 0.0
    per_cycle = math.fsum(d * p for d, p in profile)
    if per_cycle <= 0:
        return math.inf
    period = math.fsum(d for d, _ in profile)
    # Whole cycles that certainly fall short, then walk the last one.
    cycles = max(math.floor(needed / per_cycle) - 1, 0)
    t = cycles * period
    needed -= cycles * per_cycle
    while True:
        for seg_duration, power in profile:
            e = seg_duration * power
            if power > 0 and e >= needed:
                return t + needed / power
            needed -= e
            t += seg_duration


def max_coldstart_distance(
    beacon: Beacon,
    tag_antenna: Antenna,
    stage: HarvesterStage,
    model: PropagationModel = PropagationModel(),
) -> float:
    """Largest distance at which the harvester input still reaches its sensitivity.

    Returns ``math.inf`` when the threshold is never crossed within 10 km.
    """
    if stage.sensitivity_min.watts <= 0:
        return math.inf
    threshold_rx = stage.sensitivity_min.watts / stage.chain.eta_d
    d0 = model.reference_distance
    rx_at_d0 = beacon.eirp.watts * tag_antenna.gain_linear * free_space_path_gain(Distance(d0), beacon.frequency, model)
    d = d0 * (rx_at_d0 / threshold_rx) ** (1.0 / model.path_loss_exponent)
    return math.inf if d > COLDSTART_SEARCH_LIMIT_M else d
