"""ETSI transmission rules for the 865-868 MHz and 2.45 GHz RFID bands.

Only the clauses relevant to continuous power transfer are encoded. Rule
identifiers are stable and form part of the report/CLI contract:

    R868-CHAN       channel not one of the four high-power channels
    R868-PWR-OMNI   ERP above 500 mW for a beam wider than 180 degrees
    R868-PWR-180    ERP above 1 W for a beam of 90-180 degrees
    R868-PWR-90     ERP above 2 W for a beam of at most 90 degrees
    R868-DUTY       presence-sensing interleave broken (ON > 1 s or OFF < 100 ms)
    R868-CW         uninterrupted carrier (waivable)
    R2450-CHAN      channel outside 2446-2454 MHz
    R2450-BW45      horizontal beamwidth wider than 45 degrees
    R2450-SIDELOBE  sidelobe attenuation >= 15 dB not attested
    R2450-PROTECT   physical protection not attested
    R2450-PWR       EIRP above 36 dBm
    R2450-INDOOR    EIRP above 27 dBm outside buildings
    R2450-FHSS      EIRP above 27 dBm without frequency hopping
    R2450-DUTY15    EIRP above 27 dBm with more than 15 % duty in some 200 ms window
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

from dualwpt.rfquant import Frequency, PowerQuantity, eirp_to_erp, erp_to_eirp

if TYPE_CHECKING:
    from dualwpt.harvester import EfficiencyChain
    from dualwpt.linkbudget import Antenna, PropagationModel

# Relative slack on threshold comparisons, so that 30 ms / 200 ms counts as 15 %.
_EPS = 1e-9
# Power limits are quoted both in watts and in whole dBm (500 mW ~ 27 dBm);
# levels within this margin of a limit are treated as at the limit.
POWER_LIMIT_SLACK_DB = 0.05

R868_MAX_ON_S = 1.0
R868_MIN_OFF_S = 0.1
R2450_UNRESTRICTED_EIRP_DBM = 27.0
R2450_MAX_EIRP_DBM = 36.0
R2450_MAX_DUTY = 0.15
R2450_DUTY_WINDOW_S = 0.2
R2450_MAX_BEAMWIDTH_DEG = 45.0


class Band(enum.Enum):
    RFID_868 = "868"
    RFID_2450 = "2450"

    @property
    def edges_mhz(self) -> tuple[float, float]:
        return _BAND_EDGES_MHZ[self]

    @property
    def channels(self) -> dict[int, float]:
        """Channel number -> center frequency in MHz."""
        return dict(_CHANNELS_MHZ[self])

    def center_frequency(self, channel: int) -> Frequency:
        try:
            return Frequency.from_mhz(_CHANNELS_MHZ[self][channel])
        except KeyError:
            raise ValueError(f"band {self.value} has no channel {channel!r}") from None

    @classmethod
    def parse(cls, text: str) -> Band:
        key = str(text).strip().lower().removesuffix("mhz").strip()
        aliases = {"868": cls.RFID_868, "865-868": cls.RFID_868, "2450": cls.RFID_2450,
                   "2.45ghz": cls.RFID_2450, "2400": cls.RFID_2450, "2.4ghz": cls.RFID_2450}
        if key not in aliases:
            raise ValueError(f"unknown band {text!r}; expected '868' or '2450'")
        return aliases[key]


_BAND_EDGES_MHZ = {Band.RFID_868: (865.0, 868.0), Band.RFID_2450: (2446.0, 2454.0)}
_CHANNELS_MHZ = {
    Band.RFID_868: {1: 865.7, 2: 866.3, 3: 866.9, 4: 867.5},
    Band.RFID_2450: {1: 2450.0},
}


@dataclass(frozen=True)
class DutySchedule:
    """Periodic two-phase schedule starting with the ON phase at t = 0."""

    on_duration: float
    off_duration: float = 0.0

    def __post_init__(self):
        if not self.on_duration > 0 or math.isinf(self.on_duration):
            raise ValueError("on_duration must be a positive finite number of seconds")
        if not self.off_duration >= 0 or math.isinf(self.off_duration):
            raise ValueError("off_duration must be >= 0 seconds")

    @classmethod
    def continuous(cls) -> DutySchedule:
        return cls(on_duration=1.0, off_duration=0.0)

    @property
    def is_continuous(self) -> bool:
        return self.off_duration == 0

    @property
    def period(self) -> float:
        return self.on_duration + self.off_duration

    @property
    def duty_fraction(self) -> float:
        return 1.0 if self.is_continuous else self.on_duration / self.period

    def max_window_duty(self, window: float) -> float:
        """Largest ON fraction seen by any window of length ``window``."""
        if self.is_continuous:
            return 1.0
        whole, rest = divmod(window, self.period)
        return (whole * self.on_duration + min(self.on_duration, rest)) / window

    def is_on(self, t: float) -> bool:
        if self.is_continuous:
            return True
        return math.fmod(t, self.period) < self.on_duration


WAIVABLE_RULES = frozenset({"R868-CW"})


@dataclass(frozen=True)
class TransmissionPlan:
    band: Band
    channel: int
    power: PowerQuantity
    antenna: Antenna
    duty: DutySchedule = field(default_factory=DutySchedule.continuous)
    power_reference: str = "erp"
    indoor: bool = False
    fhss: bool = False
    sidelobe_attested: bool = True
    protection_attested: bool = True
    waivers: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.power.watts <= 0:
            raise ValueError("transmit power must be > 0")
        if self.power_reference not in ("erp", "eirp"):
            raise ValueError("power_reference must be 'erp' or 'eirp'")
        not_waivable = set(self.waivers) - WAIVABLE_RULES
        if not_waivable:
            raise ValueError(f"rules cannot be waived: {', '.join(sorted(not_waivable))}")

    @property
    def erp(self) -> PowerQuantity:
        return self.power if self.power_reference == "erp" else eirp_to_erp(self.power)

    @property
    def eirp(self) -> PowerQuantity:
        return self.power if self.power_reference == "eirp" else erp_to_eirp(self.power)

    @property
    def frequency(self) -> Frequency:
        return self.band.center_frequency(self.channel)


@dataclass(frozen=True, order=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ComplianceReport:
    compliant: bool
    violations: tuple[Violation, ...]
    max_allowed_power: PowerQuantity
    power_reference: str
    effective_duty: float
    waived: tuple[Violation, ...] = ()

    @property
    def violated_rules(self) -> list[str]:
        return [v.code for v in self.violations]

    def to_text(self) -> str:
        lines = [
            f"compliant: {'yes' if self.compliant else 'no'}",
            f"max_allowed_{self.power_reference}_dbm: {self.max_allowed_power.dbm:.2f}",
            f"effective_duty: {self.effective_duty:.4f}",
        ]
        lines += [f"violation {v.code}: {v.message}" for v in self.violations]
        lines += [f"waived {v.code}: {v.message}" for v in self.waived]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["rule", "status", "message"])
        for v in self.violations:
            writer.writerow([v.code, "violated", v.message])
        for v in self.waived:
            writer.writerow([v.code, "waived", v.message])
        return buf.getvalue()


def max_erp_868(beamwidth_deg: float) -> PowerQuantity:
    """Maximum ERP in the 865-868 MHz band for a given horizontal beamwidth."""
    if not 0 < beamwidth_deg <= 360:
        raise ValueError("beamwidth must be in (0, 360] degrees")
    if beamwidth_deg <= 90:
        return PowerQuantity(2.0)
    if beamwidth_deg <= 180:
        return PowerQuantity(1.0)
    return PowerQuantity(0.5)


def _power_tier_code_868(beamwidth_deg: float) -> str:
    if beamwidth_deg <= 90:
        return "R868-PWR-90"
    if beamwidth_deg <= 180:
        return "R868-PWR-180"
    return "R868-PWR-OMNI"


def _exceeds(value: float, limit: float) -> bool:
    return value > limit * (1 + _EPS)


def _rules_868(plan: TransmissionPlan) -> tuple[list[Violation], PowerQuantity]:
    found = []
    if plan.channel not in _CHANNELS_MHZ[Band.RFID_868]:
        found.append(Violation("R868-CHAN", f"channel {plan.channel} is not a high-power channel (1-4)"))
    bw = plan.antenna.horizontal_beamwidth_deg
    limit = max_erp_868(bw)
    if plan.erp.dbm > limit.dbm + POWER_LIMIT_SLACK_DB:
        found.append(Violation(
            _power_tier_code_868(bw),
            f"ERP {plan.erp.dbm:.2f} dBm exceeds {limit.dbm:.2f} dBm allowed at {bw:g} deg beamwidth",
        ))
    duty = plan.duty
    if duty.is_continuous:
        found.append(Violation("R868-CW", "continuous transmission without silent periods"))
    else:
        if _exceeds(duty.on_duration, R868_MAX_ON_S):
            found.append(Violation("R868-DUTY", f"ON period {duty.on_duration:g} s exceeds {R868_MAX_ON_S:g} s"))
        if duty.off_duration < R868_MIN_OFF_S * (1 - _EPS):
            found.append(Violation("R868-DUTY", f"silent period {duty.off_duration:g} s below {R868_MIN_OFF_S:g} s"))
    return found, limit


def _rules_2450(plan: TransmissionPlan) -> tuple[list[Violation], PowerQuantity]:
    found = []
    lo, hi = Band.RFID_2450.edges_mhz
    if plan.channel not in _CHANNELS_MHZ[Band.RFID_2450]:
        found.append(Violation("R2450-CHAN", f"channel {plan.channel} is outside {lo:g}-{hi:g} MHz"))
    bw = plan.antenna.horizontal_beamwidth_deg
    if _exceeds(bw, R2450_MAX_BEAMWIDTH_DEG):
        found.append(Violation("R2450-BW45", f"horizontal beamwidth {bw:g} deg exceeds {R2450_MAX_BEAMWIDTH_DEG:g} deg"))
    if not plan.sidelobe_attested:
        found.append(Violation("R2450-SIDELOBE", "sidelobe attenuation of at least 15 dB not attested"))
    if not plan.protection_attested:
        found.append(Violation("R2450-PROTECT", "physical protection not attested"))

    eirp_dbm = plan.eirp.dbm
    high_tier = plan.indoor and plan.fhss
    limit = PowerQuantity.from_dbm(R2450_MAX_EIRP_DBM if high_tier else R2450_UNRESTRICTED_EIRP_DBM)
    if eirp_dbm > R2450_MAX_EIRP_DBM + POWER_LIMIT_SLACK_DB:
        found.append(Violation("R2450-PWR", f"EIRP {eirp_dbm:.2f} dBm exceeds {R2450_MAX_EIRP_DBM:g} dBm"))
    elif eirp_dbm > R2450_UNRESTRICTED_EIRP_DBM + POWER_LIMIT_SLACK_DB:
        if not plan.indoor:
            found.append(Violation("R2450-INDOOR", f"EIRP {eirp_dbm:.2f} dBm requires in-building use"))
        if not plan.fhss:
            found.append(Violation("R2450-FHSS", f"EIRP {eirp_dbm:.2f} dBm requires FHSS"))
        worst = plan.duty.max_window_duty(R2450_DUTY_WINDOW_S)
        if _exceeds(worst, R2450_MAX_DUTY):
            found.append(Violation(
                "R2450-DUTY15",
                f"duty {worst:.2%} over a {R2450_DUTY_WINDOW_S * 1e3:g} ms window exceeds {R2450_MAX_DUTY:.0%}",
            ))
    return found, limit


def check_plan(plan: TransmissionPlan) -> ComplianceReport:
    """Evaluate every applicable rule; never raises for a well-formed plan."""
    if plan.band is Band.RFID_868:
        found, limit = _rules_868(plan)
        reference = "erp"
    else:
        found, limit = _rules_2450(plan)
        reference = "eirp"
    found = sorted(set(found))
    violations = tuple(v for v in found if v.code not in plan.waivers)
    waived = tuple(v for v in found if v.code in plan.waivers)
    return ComplianceReport(
        compliant=not violations,
        violations=violations,
        max_allowed_power=limit,
        power_reference=reference,
        effective_duty=plan.duty.duty_fraction,
        waived=waived,
    )


class NonCompliantPlanError(ValueError):
    def __init__(self, report: ComplianceReport):
        super().__init__("plan is not compliant: " + ", ".join(report.violated_rules))
        self.report = report


def effective_average_eirp(plan: TransmissionPlan) -> PowerQuantity:
    report = check_plan(plan)
    if not report.compliant:
        raise NonCompliantPlanError(report)
    return plan.eirp.scaled(plan.duty.duty_fraction)


@dataclass(frozen=True)
class BandRanking:
    name: str
    band: Band
    average_eirp: PowerQuantity
    peak_rx: PowerQuantity
    delivered_w: float


def compare_bands(
    candidates: Iterable[tuple[str, TransmissionPlan]],
    chain_868: EfficiencyChain,
    chain_2450: EfficiencyChain,
    distance_m: float = 5.0,
    tag_antenna: Antenna | None = None,
    model: PropagationModel | None = None,
) -> list[BandRanking]:
    """Rank compliant plans by average power delivered into the tag capacitor.

    Harvesting is evaluated at the peak received power during the ON phase
    and then averaged over the duty cycle, so sensitivity cut-off is
    respected. Ties fall back to average EIRP, then name.
    """
    from dualwpt.harvester import HarvesterStage, harvested_power
    from dualwpt.linkbudget import Antenna, PropagationModel, free_space_path_gain
    from dualwpt.rfquant import Distance

    tag_antenna = tag_antenna or Antenna.dipole()
    model = model or PropagationModel()
    d = Distance(distance_m)
    ranked = []
    for name, plan in candidates:
        avg = effective_average_eirp(plan)
        chain = chain_868 if plan.band is Band.RFID_868 else chain_2450
        gain = free_space_path_gain(d, plan.frequency, model)
        peak_rx = PowerQuantity(plan.eirp.watts * tag_antenna.gain_linear * gain)
        delivered = harvested_power(peak_rx, HarvesterStage(chain)).power * plan.duty.duty_fraction
        ranked.append(BandRanking(name, plan.band, avg, peak_rx, delivered))
    ranked.sort(key=lambda r: (-r.delivered_w, -r.average_eirp.watts, r.name))
    return ranked


def ranking_table(ranking: Sequence[BandRanking]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "plan", "band", "avg_eirp_dbm", "peak_rx_dbm", "delivered_w"])
    for i, r in enumerate(ranking, 1):
        writer.writerow([i, r.name, r.band.value, repr(r.average_eirp.dbm), repr(r.peak_rx.dbm), repr(r.delivered_w)])
    return buf.getvalue()
