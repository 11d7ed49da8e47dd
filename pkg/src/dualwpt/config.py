"""TOML documents describing scenarios, transmission plans and tags.

Every numeric key carries its unit as a suffix (``erp_dbm``,
``capacitance_uf``, ``duty_off_s``); unknown keys are rejected.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from dualwpt.harvester import CHAIN_PRESETS, EfficiencyChain, EfficiencyCurve, HarvesterStage, StorageCapacitor
from dualwpt.linkbudget import DIRECTIONAL, OMNIDIRECTIONAL, Antenna, Beacon, PropagationModel
from dualwpt.regulations import Band, DutySchedule, TransmissionPlan
from dualwpt.rfquant import Frequency, PowerQuantity
from dualwpt.simcore import Room, Scenario, SchedulerPolicy
from dualwpt.tagmodel import Tag, TagEnergyProfile


class ConfigError(ValueError):
    pass


def preset_names() -> list[str]:
    return sorted(p.name for p in resources.files("dualwpt.presets").iterdir() if not p.name.startswith("_"))


def resolve(path: str | Path) -> Path:
    """A filesystem path, or the name of a bundled preset."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("dualwpt.presets").joinpath(str(path))
    if bundled.is_file():
        return Path(str(bundled))
    return p


def load_document(path: str | Path) -> tuple[dict[str, Any], Path]:
    p = resolve(path)
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh), p.parent
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file or bundled preset") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


class _Section:
    """Key access that records what was read, then rejects leftovers."""

    def __init__(self, data: Any, where: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a table")
        self.data = data
        self.where = where
        self.seen: set[str] = set()

    def __contains__(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, default: Any = None, kind: type | tuple[type, ...] | None = None) -> Any:
        self.seen.add(key)
        if key not in self.data:
            return default
        value = self.data[key]
        if kind is None:
            return value
        kinds = kind if isinstance(kind, tuple) else (kind,)
        is_number = isinstance(value, (int, float)) and not isinstance(value, bool)
        if float in kinds and is_number:
            return float(value)
        if bool not in kinds and isinstance(value, bool) or not isinstance(value, kinds):
            raise ConfigError(f"{self.where}.{key}: expected {'/'.join(k.__name__ for k in kinds)}, got {value!r}")
        return value

    def require(self, key: str, kind: type | tuple[type, ...] | None = None) -> Any:
        if key not in self.data:
            raise ConfigError(f"{self.where}: missing required key {key!r}")
        return self.get(key, kind=kind)

    def vector(self, key: str) -> tuple[float, float, float]:
        value = self.require(key, list)
        if len(value) != 3 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{self.where}.{key}: expected three numbers")
        return tuple(float(v) for v in value)

    def sub(self, key: str) -> _Section:
        return _Section(self.get(key, {}), f"{self.where}.{key}")

    def done(self) -> None:
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            raise ConfigError(f"{self.where}: unknown key(s) {', '.join(unknown)}")


def _guard(where: str, build, *args, **kwargs):
    try:
        return build(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_propagation(sec: _Section) -> PropagationModel:
    model = _guard(
        sec.where,
        PropagationModel,
        path_loss_exponent=sec.get("path_loss_exponent", 2.0, float),
        reference_distance=sec.get("reference_distance_m", 1.0, float),
    )
    sec.done()
    return model


def _power(sec: _Section) -> tuple[PowerQuantity, str]:
    if "erp_dbm" in sec and "eirp_dbm" in sec:
        raise ConfigError(f"{sec.where}: give erp_dbm or eirp_dbm, not both")
    if "eirp_dbm" in sec:
        return PowerQuantity.from_dbm(sec.get("eirp_dbm", kind=float)), "eirp"
    return PowerQuantity.from_dbm(sec.require("erp_dbm", float)), "erp"


def _antenna(sec: _Section, default_pattern: str = OMNIDIRECTIONAL) -> Antenna:
    pattern = sec.get("pattern", default_pattern, str)
    default_bw = 360.0 if pattern == OMNIDIRECTIONAL else 90.0
    return _guard(
        sec.where,
        Antenna,
        gain_dbi=sec.get("gain_dbi", 2.15, float),
        horizontal_beamwidth_deg=sec.get("beamwidth_deg", default_bw, float),
        pattern=pattern,
        boresight_azimuth_deg=sec.get("boresight_deg", 0.0, float),
    )


def _duty(sec: _Section) -> DutySchedule:
    return _guard(
        sec.where,
        DutySchedule,
        on_duration=sec.get("duty_on_s", 1.0, float),
        off_duration=sec.get("duty_off_s", 0.0, float),
    )


def parse_beacon(sec: _Section) -> Beacon:
    power, reference = _power(sec)
    erp = power if reference == "erp" else power.plus_db(-2.15)
    beacon = _guard(
        sec.where,
        Beacon,
        id=str(sec.require("id", str)),
        position=sec.vector("position_m"),
        antenna=_antenna(sec),
        erp=erp,
        frequency=Frequency.from_mhz(sec.get("frequency_mhz", 865.7, float)),
        duty=_duty(sec),
        channel=sec.get("channel", None, int),
        steerable=sec.get("steerable", False, bool),
    )
    sec.done()
    return beacon


def parse_stage(sec: _Section, base_dir: Path) -> HarvesterStage:
    preset = str(sec.get("chain", "868", (str, int)))
    if preset not in CHAIN_PRESETS:
        raise ConfigError(f"{sec.where}.chain: unknown preset {preset!r}; expected one of {', '.join(CHAIN_PRESETS)}")
    base = CHAIN_PRESETS[preset]
    curve = base.eta_rf_curve
    if "eta_rf" in sec and "eta_rf_csv" in sec:
        raise ConfigError(f"{sec.where}: give eta_rf or eta_rf_csv, not both")
    if "eta_rf" in sec:
        curve = _guard(sec.where, EfficiencyCurve.flat, sec.get("eta_rf", kind=float))
    elif "eta_rf_csv" in sec:
        csv_path = Path(sec.get("eta_rf_csv", kind=str))
        if not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        try:
            curve = _guard(f"{sec.where}.eta_rf_csv", EfficiencyCurve.from_csv, csv_path)
        except OSError as exc:
            raise ConfigError(f"{sec.where}.eta_rf_csv: {exc}") from None
    chain = _guard(
        sec.where,
        EfficiencyChain,
        eta_d=sec.get("eta_d", base.eta_d, float),
        eta_rf_curve=curve,
        eta_b=sec.get("eta_b", base.eta_b, float),
        eta_ldo=sec.get("eta_ldo", base.eta_ldo, float),
        eta_c=sec.get("eta_c", base.eta_c, float),
    )
    channels = sec.get("channels", [], list)
    if not all(isinstance(c, int) and not isinstance(c, bool) for c in channels):
        raise ConfigError(f"{sec.where}.channels: expected a list of channel numbers")
    stage = _guard(
        sec.where,
        HarvesterStage,
        chain=chain,
        sensitivity_min=PowerQuantity.from_dbm(sec.get("sensitivity_min_dbm", -19.0, float)),
        sensitivity_max=PowerQuantity.from_dbm(sec.get("sensitivity_max_dbm", 10.0, float)),
        tuned_channels=frozenset(channels),
    )
    sec.done()
    return stage


def _optional_scaled(sec: _Section, key: str, scale: float) -> float | None:
    value = sec.get(key, None, float)
    return None if value is None else value * scale


def parse_capacitor(sec: _Section) -> StorageCapacitor:
    return _guard(
        sec.where,
        StorageCapacitor,
        capacitance=sec.get("capacitance_uf", 22.0, float) * 1e-6,
        v_chrdy=sec.get("v_chrdy_v", 3.10, float),
        v_ovdis=sec.get("v_ovdis_v", 2.80, float),
        v_now=sec.get("v_now_v", 0.0, float),
        v_initial_target=sec.get("v_initial_target_v", None, float),
        v_max=sec.get("v_max_v", None, float),
    )


def parse_profile(sec: _Section) -> TagEnergyProfile:
    e_tag = sec.get("e_tag_uj", 3.15, (float, str))
    if isinstance(e_tag, str):
        if e_tag != "derived":
            raise ConfigError(f"{sec.where}.e_tag_uj: expected a number or \"derived\"")
        e_tag = None
    else:
        e_tag *= 1e-6
    return _guard(
        sec.where,
        TagEnergyProfile,
        e_tag=e_tag,
        rangings_per_fix=sec.get("rangings_per_fix", 4, int),
        active_power=_optional_scaled(sec, "active_power_uw", 1e-6),
        rx_window=sec.get("rx_window_ms", 1.0, float) * 1e-3,
        turnon_time=_optional_scaled(sec, "turnon_time_ms", 1e-3),
        turnon_energy=_optional_scaled(sec, "turnon_energy_uj", 1e-6),
    )


def parse_tag(sec: _Section, base_dir: Path, defaults: dict[str, Any] | None = None) -> tuple[Tag, float | None]:
    """Returns the tag and its optional deficit-scheduler target interval."""
    if defaults:
        sec = _Section({**defaults, **sec.data}, sec.where)
    stage_tables = sec.get("stage", [{}], list)
    stages = tuple(parse_stage(_Section(s, f"{sec.where}.stage[{i}]"), base_dir) for i, s in enumerate(stage_tables))
    tag = _guard(
        sec.where,
        Tag,
        id=str(sec.get("id", "tag", str)),
        position=sec.vector("position_m") if "position_m" in sec else (0.0, 0.0, 0.0),
        antenna=_antenna(sec),
        stages=stages,
        capacitor=parse_capacitor(sec),
        profile=parse_profile(sec),
    )
    target = sec.get("target_update_s", None, float)
    sec.done()
    return tag, target


def parse_scenario(doc: dict[str, Any], base_dir: Path = Path(".")) -> Scenario:
    top = _Section(doc, "scenario")
    room_sec = top.sub("room")
    room = _guard("room", Room, room_sec.get("length_m", 8.0, float), room_sec.get("width_m", 4.0, float),
                  room_sec.get("height_m", 2.4, float))
    room_sec.done()
    model = parse_propagation(top.sub("propagation"))

    sim = top.sub("simulation")
    duration = sim.get("duration_s", 60.0, float)
    kind = sim.get("scheduler", "none", str)
    dwell = sim.get("dwell_s", 1.0, float)
    seed = sim.get("seed", 0, int)
    sim.done()

    beacons = tuple(parse_beacon(_Section(b, f"beacon[{i}]")) for i, b in enumerate(top.get("beacon", [], list)))
    defaults = top.get("tag_defaults", {}, dict)
    for forbidden in ("id", "position_m"):
        if forbidden in defaults:
            raise ConfigError(f"tag_defaults: {forbidden} must be set per tag")
    tags, targets = [], {}
    for i, t in enumerate(top.get("tag", [], list)):
        tag, target = parse_tag(_Section(t, f"tag[{i}]"), base_dir, defaults)
        tags.append(tag)
        if target is not None:
            targets[tag.id] = target
    policy = _guard("simulation", SchedulerPolicy, kind, dwell, targets)
    scenario = Scenario(
        beacons=beacons,
        tags=tuple(tags),
        propagation=model,
        policy=policy,
        sim_duration=duration,
        room=room,
        random_seed=seed,
        name=top.get("name", "", str),
    )
    top.done()
    return scenario


def parse_plan(doc: dict[str, Any]) -> TransmissionPlan:
    top = _Section(doc, "document")
    sec = top.sub("plan")
    top.done()
    band = _guard(sec.where, Band.parse, sec.require("band", (str, int)))
    power, reference = _power(sec)
    default_pattern = OMNIDIRECTIONAL if sec.data.get("beamwidth_deg", 360) == 360 else DIRECTIONAL
    waivers = sec.get("waive", [], list)
    plan = _guard(
        sec.where,
        TransmissionPlan,
        band=band,
        channel=sec.get("channel", 1, int),
        power=power,
        antenna=_antenna(sec, default_pattern),
        duty=_duty(sec),
        power_reference=reference,
        indoor=sec.get("indoor", False, bool),
        fhss=sec.get("fhss", False, bool),
        sidelobe_attested=sec.get("sidelobe_attested", True, bool),
        protection_attested=sec.get("protection_attested", True, bool),
        waivers=frozenset(str(w) for w in waivers),
    )
    sec.done()
    return plan


def parse_budget(doc: dict[str, Any], base_dir: Path = Path(".")) -> tuple[Tag, Beacon | None, PropagationModel]:
    """A ``[tag]`` table plus an optional ``[beacon]`` for the cold-start range."""
    top = _Section(doc, "document")
    tag, _ = parse_tag(top.sub("tag"), base_dir)
    beacon = None
    if "beacon" in top:
        beacon_doc = dict(top.get("beacon", kind=dict))
        beacon_doc.setdefault("id", "beacon")
        beacon_doc.setdefault("position_m", [0.0, 0.0, 0.0])
        beacon = parse_beacon(_Section(beacon_doc, "beacon"))
    model = parse_propagation(top.sub("propagation"))
    top.done()
    return tag, beacon, model
