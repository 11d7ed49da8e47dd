"""Event-driven multi-tag charging simulation and closed-form sweeps.

Power seen by every tag is constant between scheduled events (duty-cycle
edges, beam retargets), so capacitor threshold crossings are solved exactly
instead of stepping time.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from dualwpt.harvester import (
    CHAIN_868,
    CLIPPED,
    INITIAL,
    UPDATE,
    HarvesterStage,
    StorageCapacitor,
    charge_time,
    combine_stages,
    harvested_power,
)
from dualwpt.linkbudget import (
    Antenna,
    Beacon,
    NearFieldError,
    PropagationModel,
    azimuth_deg,
    distance_between,
    in_beam,
    received_power,
)
from dualwpt.rfquant import Distance, Frequency, PowerQuantity
from dualwpt.tagmodel import Tag, perform_fix

DUTY_ON = "duty_on"
DUTY_OFF = "duty_off"
TAG_CHARGED = "tag_charged"
FIX_PERFORMED = "fix_performed"
BEAM_RETARGET = "beam_retarget"

NEVER = "never"
NEAR_FIELD = "near_field"

# Crossings this close to another event time are treated as simultaneous.
_TIME_EPS = 1e-12


class ScenarioError(ValueError):
    def __init__(self, problems: Sequence[str]):
        super().__init__("invalid scenario: " + "; ".join(problems))
        self.problems = list(problems)


@dataclass(frozen=True)
class Room:
    length: float = 8.0
    width: float = 4.0
    height: float = 2.4

    def contains(self, p: Sequence[float]) -> bool:
        return 0 <= p[0] <= self.length and 0 <= p[1] <= self.width and 0 <= p[2] <= self.height


@dataclass(frozen=True)
class SchedulerPolicy:
    kind: str = "none"
    dwell: float = 1.0
    target_update_interval: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("none", "round_robin", "deficit_first"):
            raise ValueError(f"unknown scheduler policy {self.kind!r}")
        if not self.dwell > 0:
            raise ValueError("scheduler dwell must be > 0 s")

    @classmethod
    def none(cls) -> SchedulerPolicy:
        return cls("none")

    @classmethod
    def round_robin(cls, dwell: float = 1.0) -> SchedulerPolicy:
        return cls("round_robin", dwell)

    @classmethod
    def deficit_first(cls, targets: Mapping[str, float], dwell: float = 1.0) -> SchedulerPolicy:
        return cls("deficit_first", dwell, dict(targets))


@dataclass(frozen=True)
class Scenario:
    beacons: tuple[Beacon, ...]
    tags: tuple[Tag, ...]
    propagation: PropagationModel = PropagationModel()
    policy: SchedulerPolicy = SchedulerPolicy()
    sim_duration: float = 60.0
    room: Room = Room()
    random_seed: int = 0  # reserved; every model here is deterministic
    name: str = ""

    def problems(self) -> list[str]:
        found = []
        if not self.tags:
            found.append("scenario has no tags")
        if not self.sim_duration > 0 or math.isinf(self.sim_duration):
            found.append("sim_duration must be a positive finite number of seconds")
        for kind, ids in (("tag", [t.id for t in self.tags]), ("beacon", [b.id for b in self.beacons])):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            if dupes:
                found.append(f"duplicate {kind} ids: {', '.join(dupes)}")
        for b in self.beacons:
            if not self.room.contains(b.position):
                found.append(f"beacon {b.id} at {list(b.position)} lies outside the room")
            if b.steerable and not b.antenna.directional:
                found.append(f"beacon {b.id} is steerable but omnidirectional")
        d0 = self.propagation.reference_distance
        for t in self.tags:
            if not self.room.contains(t.position):
                found.append(f"tag {t.id} at {list(t.position)} lies outside the room")
            if not t.capacitor.v_ovdis < t.capacitor.v_chrdy:
                found.append(f"tag {t.id}: v_ovdis must be below v_chrdy")
            for b in self.beacons:
                if distance_between(b.position, t.position) < d0:
                    found.append(f"tag {t.id} is closer than the reference distance {d0} m to beacon {b.id}")
        if self.policy.kind == "deficit_first":
            for t in self.tags:
                interval = self.policy.target_update_interval.get(t.id)
                if interval is None or not interval > 0:
                    found.append(f"deficit_first needs a positive target update interval for tag {t.id}")
        return found

    def validate(self) -> None:
        found = self.problems()
        if found:
            raise ScenarioError(found)


class SimEvent(NamedTuple):
    time: float
    kind: str
    tag_id: str = ""
    beacon_id: str = ""


class TagStatus(NamedTuple):
    tag_id: str
    last_fix_time: float


def next_beam_target(
    policy: SchedulerPolicy,
    tags: Sequence[TagStatus],
    now: float,
    previous: str | None = None,
) -> str | None:
    """Pick the tag the steerable beam should serve next.

    ``deficit_first`` maximizes elapsed time since the last fix relative to
    the tag's target interval, lowest id winning ties. ``round_robin``
    cycles through ids in sorted order after ``previous``.
    """
    if policy.kind == "none" or not tags:
        return None
    ids = sorted(t.tag_id for t in tags)
    if policy.kind == "round_robin":
        if previous is None or previous not in ids:
            return ids[0]
        return ids[(ids.index(previous) + 1) % len(ids)]
    best, best_deficit = None, -math.inf
    for t in sorted(tags):
        deficit = (now - t.last_fix_time) / policy.target_update_interval[t.tag_id]
        if deficit > best_deficit:
            best, best_deficit = t.tag_id, deficit
    return best


@dataclass
class TagResult:
    tag_id: str
    initial_charge_time: float = math.inf
    fix_times: list[float] = field(default_factory=list)
    initial_energy: float = 0.0
    final_energy: float = 0.0
    harvested_energy: float = 0.0
    spent_energy: float = 0.0

    @property
    def intervals(self) -> list[float]:
        return [b - a for a, b in zip(self.fix_times, self.fix_times[1:])]

    @property
    def mean_update_interval(self) -> float | None:
        iv = self.intervals
        return math.fsum(iv) / len(iv) if iv else None

    @property
    def min_update_interval(self) -> float | None:
        return min(self.intervals, default=None)

    @property
    def max_update_interval(self) -> float | None:
        return max(self.intervals, default=None)


@dataclass
class BeaconResult:
    beacon_id: str
    on_time: float = 0.0
    energy_radiated: float = 0.0


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return NEVER
    return repr(float(x))


@dataclass
class SimResult:
    tags: dict[str, TagResult]
    beacons: dict[str, BeaconResult]
    events: list[SimEvent]
    duration: float

    def event_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tag_id", "event_time_s", "event_kind"])
        for e in self.events:
            writer.writerow([e.tag_id, _fmt(e.time), e.kind])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tag_id", "initial_charge_s", "mean_update_s", "fix_count"])
        for tid in sorted(self.tags):
            r = self.tags[tid]
            writer.writerow([tid, _fmt(r.initial_charge_time), _fmt(r.mean_update_interval), len(r.fix_times)])
        return buf.getvalue()

    def summary_text(self) -> str:
        lines = [f"simulated {self.duration:g} s"]
        for tid in sorted(self.tags):
            r = self.tags[tid]
            first = "never" if math.isinf(r.initial_charge_time) else f"{r.initial_charge_time:.3f} s"
            line = f"tag {tid}: first fix {first}, {len(r.fix_times)} fixes"
            if r.mean_update_interval is not None:
                line += (f", update interval mean {r.mean_update_interval:.3f} s"
                         f" (min {r.min_update_interval:.3f}, max {r.max_update_interval:.3f})")
            lines.append(line)
        for bid in sorted(self.beacons):
            b = self.beacons[bid]
            lines.append(f"beacon {bid}: on {b.on_time:.3f} s, radiated {b.energy_radiated:.4g} J")
        return "\n".join(lines) + "\n"


class _Engine:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.t = 0.0
        self.caps = {t.id: t.capacitor for t in scenario.tags}
        self.on = {b.id: True for b in scenario.beacons}
        self.boresight = {b.id: b.antenna.boresight_azimuth_deg for b in scenario.beacons if b.antenna.directional}
        self.target: str | None = None
        self.events: list[SimEvent] = []
        self.queue: list[tuple[float, int, str, str]] = []
        self.seq = itertools.count()
        self.tag_results = {t.id: TagResult(t.id, initial_energy=t.capacitor.stored_energy) for t in scenario.tags}
        self.beacon_results = {b.id: BeaconResult(b.id) for b in scenario.beacons}
        self.rx = {
            (b.id, t.id): received_power(b, t.antenna, Distance(distance_between(b.position, t.position)),
                                         scenario.propagation)
            for b in scenario.beacons for t in scenario.tags
        }
        self.steerable = [b for b in scenario.beacons if b.steerable]

    def push(self, time: float, kind: str, ref: str = "") -> None:
        heapq.heappush(self.queue, (time, next(self.seq), kind, ref))

    def covers(self, beacon: Beacon, tag: Tag) -> bool:
        if not beacon.antenna.directional:
            return True
        return in_beam(beacon, tag.position, self.boresight[beacon.id])

    def tag_power(self, tag: Tag) -> float:
        per_stage = []
        for stage in tag.stages:
            total = math.fsum(
                self.rx[b.id, tag.id].watts
                for b in self.sc.beacons
                if self.on[b.id] and stage.accepts(b.channel) and self.covers(b, tag)
            )
            per_stage.append(PowerQuantity(total))
        return combine_stages(tag.stages, per_stage)

    def retarget(self) -> None:
        statuses = [
            TagStatus(t.id, (self.tag_results[t.id].fix_times or [0.0])[-1]) for t in self.sc.tags
        ]
        self.target = next_beam_target(self.sc.policy, statuses, self.t, self.target)
        if self.target is None:
            return
        pos = next(t.position for t in self.sc.tags if t.id == self.target)
        for b in self.steerable:
            if not (math.isclose(b.position[0], pos[0]) and math.isclose(b.position[1], pos[1])):
                self.boresight[b.id] = azimuth_deg(b.position, pos)
            self.events.append(SimEvent(self.t, BEAM_RETARGET, self.target, b.id))

    def apply(self, kind: str, ref: str) -> None:
        if kind == BEAM_RETARGET:
            self.retarget()
            self.push(self.t + self.sc.policy.dwell, BEAM_RETARGET)
            return
        beacon = next(b for b in self.sc.beacons if b.id == ref)
        if kind == DUTY_OFF:
            self.on[ref] = False
            self.push(self.t + beacon.duty.off_duration, DUTY_ON, ref)
        else:
            self.on[ref] = True
            self.push(self.t + beacon.duty.on_duration, DUTY_OFF, ref)
        self.events.append(SimEvent(self.t, kind, "", ref))

    def run(self) -> SimResult:
        sc = self.sc
        for b in sc.beacons:
            self.events.append(SimEvent(0.0, DUTY_ON, "", b.id))
            if not b.duty.is_continuous:
                self.push(b.duty.on_duration, DUTY_OFF, b.id)
        if sc.policy.kind != "none" and self.steerable:
            self.apply(BEAM_RETARGET, "")

        while True:
            powers = {t.id: self.tag_power(t) for t in sc.tags}
            crossing = {}
            for tag in sc.tags:
                cap = self.caps[tag.id]
                needed = cap.energy_at(cap.v_chrdy) - cap.stored_energy
                if needed <= 0:
                    crossing[tag.id] = self.t
                elif powers[tag.id] > 0:
                    crossing[tag.id] = self.t + needed / powers[tag.id]
            t_sched = self.queue[0][0] if self.queue else math.inf
            t_next = min([t_sched, sc.sim_duration, *crossing.values()])
            slack = _TIME_EPS * max(1.0, t_next)
            crossed = sorted(tid for tid, tc in crossing.items() if tc <= t_next + slack)
            self.advance(t_next, powers, crossed)
            for tid in crossed:
                self.fix(tid)
            if self.t >= sc.sim_duration:
                break
            while self.queue and self.queue[0][0] <= self.t + slack:
                _, _, kind, ref = heapq.heappop(self.queue)
                self.apply(kind, ref)

        for tid, res in self.tag_results.items():
            res.final_energy = self.caps[tid].stored_energy
            if res.fix_times:
                res.initial_charge_time = res.fix_times[0]
        return SimResult(self.tag_results, self.beacon_results, self.events, sc.sim_duration)

    def advance(self, t_next: float, powers: Mapping[str, float], crossed: Iterable[str]) -> None:
        dt = t_next - self.t
        crossed = set(crossed)
        for tag in self.sc.tags:
            cap = self.caps[tag.id]
            if tag.id in crossed:
                gained = max(cap.energy_at(cap.v_chrdy) - cap.stored_energy, 0.0)
                v_new = max(cap.v_chrdy, cap.v_now)
            else:
                gained = powers[tag.id] * dt
                v_new = cap.voltage_for_energy(cap.stored_energy + gained) if gained else cap.v_now
            self.tag_results[tag.id].harvested_energy += gained
            self.caps[tag.id] = StorageCapacitor(
                cap.capacitance, cap.v_chrdy, cap.v_ovdis, v_new, cap.v_initial_target, cap.v_max,
            )
        for b in self.sc.beacons:
            if self.on[b.id]:
                res = self.beacon_results[b.id]
                res.on_time += dt
                res.energy_radiated += b.eirp.watts * dt
        self.t = t_next

    def fix(self, tag_id: str) -> None:
        self.events.append(SimEvent(self.t, TAG_CHARGED, tag_id))
        cap, record = perform_fix(self.caps[tag_id], self.t)
        self.caps[tag_id] = cap
        res = self.tag_results[tag_id]
        res.spent_energy += record.energy
        res.fix_times.append(self.t)
        self.events.append(SimEvent(self.t, FIX_PERFORMED, tag_id))


def run(scenario: Scenario) -> SimResult:
    """Simulate ``scenario``; deterministic for identical inputs."""
    scenario.validate()
    return _Engine(scenario).run()


class SweepRow(NamedTuple):
    distance: float
    seconds: float
    flag: str


def distance_grid(d_min: float, d_max: float, step: float) -> list[float]:
    """Inclusive grid; end points snapped to avoid float drift (0.5:0.25:4 has 15 points)."""
    if not step > 0:
        raise ValueError("distance step must be > 0")
    if d_max < d_min:
        raise ValueError("d_max must be >= d_min")
    n = math.floor((d_max - d_min) / step + 1e-9) + 1
    return [round(d_min + i * step, 12) for i in range(n)]


def sweep_charge_time(
    beacon: Beacon,
    tag: Tag,
    distances: Iterable[float],
    window: str,
    model: PropagationModel = PropagationModel(),
) -> list[SweepRow]:
    """Closed-form charge time versus beacon-tag distance.

    Every stage accepting the beacon's channel sees the full receive power.
    Flags: ``ok``, ``clipped`` (input above the harvester window),
    ``never`` (below sensitivity) and ``near_field`` (inside the reference
    distance, no value).
    """
    v_from, v_to = tag.capacitor.window(window)
    stages = [s for s in tag.stages if s.accepts(beacon.channel)]
    rows = []
    for d in distances:
        try:
            p_rx = received_power(beacon, tag.antenna, Distance(d), model)
        except NearFieldError:
            rows.append(SweepRow(d, math.nan, NEAR_FIELD))
            continue
        results = [harvested_power(p_rx, s) for s in stages]
        p_harv = math.fsum(r.power for r in results)
        seconds = charge_time(tag.capacitor, v_from, v_to, p_harv)
        if math.isinf(seconds):
            flag = NEVER
        elif any(r.status == CLIPPED for r in results):
            flag = CLIPPED
        else:
            flag = "ok"
        rows.append(SweepRow(d, seconds, flag))
    return rows


def paper_beacon(erp_dbm: float, frequency_mhz: float = 865.7, directional: bool = False) -> Beacon:
    """A beacon at the origin with the given ERP; directional beacons use a 5 dBi patch."""
    antenna = Antenna.patch(beamwidth_deg=90.0) if directional else Antenna()
    return Beacon(
        id="dir" if directional else "omni",
        position=(0.0, 0.0, 0.0),
        antenna=antenna,
        erp=PowerQuantity.from_dbm(erp_dbm),
        frequency=Frequency.from_mhz(frequency_mhz),
    )


def paper_tag(capacitance_uf: float = 22.0, v_initial_target: float | None = None, **cap_kwargs) -> Tag:
    """Single-stage tag with the 868 MHz chain and a 2.15 dBi dipole."""
    cap = StorageCapacitor.microfarads(capacitance_uf, v_initial_target=v_initial_target, **cap_kwargs)
    return Tag("tag", (0.0, 0.0, 0.0), Antenna.dipole(CHAIN_868.eta_d), (HarvesterStage(CHAIN_868),), cap)


def charge_time_family(
    omni_erp_dbm: float,
    directional_erp_dbm: float,
    tag: Tag,
    distances: Sequence[float],
    frequency_mhz: float = 865.7,
    model: PropagationModel = PropagationModel(),
) -> dict[tuple[str, str], list[SweepRow]]:
    """The four curves: (omni | directional) x (initial | update)."""
    family = {}
    for label, erp, directional in (("omni", omni_erp_dbm, False), ("directional", directional_erp_dbm, True)):
        beacon = paper_beacon(erp, frequency_mhz, directional)
        for window in (INITIAL, UPDATE):
            family[label, window] = sweep_charge_time(beacon, tag, distances, window, model)
    return family


TECHTILE_CAPACITANCE_UF = 39.7
TECHTILE_OMNI_ERP_DBM = 27.0
TECHTILE_DIRECTIONAL_ERP_DBM = 31.9
TECHTILE_GRID = (0.5, 4.0, 0.25)
TECHTILE_MODEL = PropagationModel(reference_distance=0.25)
REPLAY_PRESETS = {
    "omni_initial": (False, INITIAL),
    "omni_update": (False, UPDATE),
    "dir_initial": (True, INITIAL),
    "dir_update": (True, UPDATE),
}


class ReplayRow(NamedTuple):
    distance: float
    model_seconds: float
    flag: str
    measured_seconds: float | None


def replay_measurement_protocol(
    preset: str,
    measured: Mapping[float, float] | None = None,
) -> list[ReplayRow]:
    """Model charge times on the testbed measurement grid.

    ``measured`` maps distance in meters to a measured charge time; it is
    joined onto the model rows for side-by-side comparison only.
    """
    if preset not in REPLAY_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {', '.join(REPLAY_PRESETS)}")
    directional, window = REPLAY_PRESETS[preset]
    erp = TECHTILE_DIRECTIONAL_ERP_DBM if directional else TECHTILE_OMNI_ERP_DBM
    beacon = paper_beacon(erp, 865.7, directional)
    tag = paper_tag(TECHTILE_CAPACITANCE_UF)
    rows = sweep_charge_time(beacon, tag, distance_grid(*TECHTILE_GRID), window, TECHTILE_MODEL)
    measured = {round(k, 6): v for k, v in (measured or {}).items()}
    return [ReplayRow(r.distance, r.seconds, r.flag, measured.get(round(r.distance, 6))) for r in rows]


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["distance_m", "charge_time_s", "flag"])
    for r in rows:
        writer.writerow([_fmt(r.distance), "" if math.isnan(r.seconds) else _fmt(r.seconds), r.flag])
    return buf.getvalue()


def replay_csv(rows: Iterable[ReplayRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["distance_m", "model_charge_time_s", "flag", "measured_charge_time_s"])
    for r in rows:
        model = "" if math.isnan(r.model_seconds) else _fmt(r.model_seconds)
        writer.writerow([_fmt(r.distance), model, r.flag, _fmt(r.measured_seconds)])
    return buf.getvalue()

