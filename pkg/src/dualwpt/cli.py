"""Command line entry point.

Exit codes: 0 success/compliant, 1 non-compliant plan, 2 input error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from dualwpt.config import ConfigError, load_document, parse_budget, parse_plan, parse_scenario, preset_names
from dualwpt.harvester import CHAIN_PRESETS, INITIAL, UPDATE, HarvesterStage, StorageCapacitor, max_coldstart_distance
from dualwpt.linkbudget import Antenna, PropagationModel
from dualwpt.regulations import check_plan
from dualwpt.simcore import (
    REPLAY_PRESETS,
    ScenarioError,
    distance_grid,
    paper_beacon,
    replay_csv,
    replay_measurement_protocol,
    run,
    sweep_charge_time,
    sweep_csv,
)
from dualwpt.tagmodel import Tag, fix_energy, storage_feasible

log = logging.getLogger("dualwpt")

EXIT_OK = 0
EXIT_NONCOMPLIANT = 1
EXIT_INPUT = 2
EXIT_IO = 3


class InputError(Exception):
    pass


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", newline="") as fh:
        fh.write(text)


def cmd_sweep(args: argparse.Namespace) -> int:
    for flag, value in (("--d-min", args.d_min), ("--d-step", args.d_step)):
        if not value > 0:
            raise InputError(f"{flag} must be > 0, got {value:g}")
    if args.d_max < args.d_min:
        raise InputError(f"--d-max ({args.d_max:g}) must be >= --d-min ({args.d_min:g})")
    if not args.freq_mhz > 0:
        raise InputError("--freq-mhz must be > 0")
    try:
        model = PropagationModel(args.path_loss_exponent, args.ref_distance_m)
        chain = CHAIN_PRESETS[args.chain]
        cap = StorageCapacitor.microfarads(
            args.capacitance_uf,
            v_chrdy=args.v_chrdy_v,
            v_ovdis=args.v_ovdis_v,
            v_initial_target=args.v_initial_target_v,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    beacon = paper_beacon(args.erp_dbm, args.freq_mhz)
    tag = Tag("tag", (0.0, 0.0, 0.0), Antenna(gain_dbi=args.gain_dbi), (HarvesterStage(chain),), cap)
    rows = sweep_charge_time(beacon, tag, distance_grid(args.d_min, args.d_max, args.d_step), args.window, model)
    _write(sweep_csv(rows), args.out)
    return EXIT_OK


def cmd_regcheck(args: argparse.Namespace) -> int:
    doc, _ = load_document(args.plan)
    report = check_plan(parse_plan(doc))
    sys.stdout.write(report.to_csv() if args.csv else report.to_text())
    return EXIT_OK if report.compliant else EXIT_NONCOMPLIANT


def cmd_simulate(args: argparse.Namespace) -> int:
    doc, base_dir = load_document(args.scenario)
    scenario = parse_scenario(doc, base_dir)
    try:
        result = run(scenario)
    except ScenarioError as exc:
        raise InputError(str(exc)) from None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "events.csv").write_text(result.event_csv())
    (out_dir / "summary.csv").write_text(result.summary_csv())
    sys.stdout.write(result.summary_text())
    return EXIT_OK


def cmd_budget(args: argparse.Namespace) -> int:
    doc, base_dir = load_document(args.tag_config)
    tag, beacon, model = parse_budget(doc, base_dir)
    cap = tag.capacitor
    eta_ldo = tag.stages[0].chain.eta_ldo
    verdict = storage_feasible(cap, tag.profile, eta_ldo)
    stored = verdict.usable / eta_ldo
    uj = 1e6
    print(
        f"storage {stored * uj:.1f} µJ, fix {verdict.required * uj:.1f} µJ, "
        f"{'feasible' if verdict.feasible else 'infeasible'}, margin {verdict.margin * uj:.2f} µJ"
    )
    print(f"storage_energy_uj: {stored * uj:.4f}  "
          f"(C = {cap.capacitance * 1e6:g} µF, {cap.v_ovdis:g} V -> {cap.v_chrdy:g} V)")
    print(f"usable_after_ldo_uj: {verdict.usable * uj:.4f}  (eta_ldo = {eta_ldo:g})")
    print(f"fix_energy_uj: {verdict.required * uj:.4f}  "
          f"({tag.profile.rangings_per_fix} x {tag.profile.ranging_energy * uj:g} µJ)")
    print(f"feasible: {'yes' if verdict.feasible else 'no'}")
    print(f"margin_uj: {verdict.margin * uj:.4f}")
    if beacon is not None:
        d = min(max_coldstart_distance(beacon, tag.antenna, s, model) for s in tag.stages)
        shown = "unbounded" if math.isinf(d) else f"{d:.3f}"
        print(f"max_coldstart_distance_m: {shown}  (ERP {beacon.erp.dbm:g} dBm at {beacon.frequency.mhz:g} MHz)")
    return EXIT_OK


def _read_measured(path: str) -> dict[float, float]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"distance_m", "charge_time_s"} <= set(reader.fieldnames):
            raise InputError(f"{path}: expected columns distance_m,charge_time_s")
        try:
            return {float(row["distance_m"]): float(row["charge_time_s"]) for row in reader}
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None


def cmd_replay(args: argparse.Namespace) -> int:
    measured = _read_measured(args.measured) if args.measured else None
    _write(replay_csv(replay_measurement_protocol(args.preset, measured)), args.out)
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualwpt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="charge time versus distance as CSV")
    p.add_argument("--erp-dbm", type=float, default=27.0)
    p.add_argument("--freq-mhz", type=float, default=865.7)
    p.add_argument("--window", choices=[INITIAL, UPDATE], default=UPDATE)
    p.add_argument("--d-min", type=float, default=0.5)
    p.add_argument("--d-max", type=float, default=8.0)
    p.add_argument("--d-step", type=float, default=0.25)
    p.add_argument("--chain", choices=sorted(CHAIN_PRESETS), default="868")
    p.add_argument("--gain-dbi", type=float, default=2.15, help="tag antenna gain")
    p.add_argument("--capacitance-uf", type=float, default=22.0)
    p.add_argument("--v-chrdy-v", type=float, default=3.10)
    p.add_argument("--v-ovdis-v", type=float, default=2.80)
    p.add_argument("--v-initial-target-v", type=float, default=None,
                   help="cold-start target for the initial window (default: v_chrdy)")
    p.add_argument("--path-loss-exponent", type=float, default=2.0)
    p.add_argument("--ref-distance-m", type=float, default=0.25,
                   help="closer distances are reported as near_field")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("regcheck", help="check a transmission plan against the band rules")
    p.add_argument("plan", help="plan file or bundled preset name")
    p.add_argument("--csv", action="store_true", help="print the report as CSV")
    p.set_defaults(func=cmd_regcheck)

    p = sub.add_parser("simulate", help="run a scenario")
    p.add_argument("scenario", help="scenario file or bundled preset name")
    p.add_argument("--out-dir", default=".", help="directory for events.csv and summary.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("budget", help="storage window versus fix energy")
    p.add_argument("tag_config", help="tag file or bundled preset name")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("replay", help="model values on the testbed measurement grid")
    p.add_argument("preset", choices=sorted(REPLAY_PRESETS))
    p.add_argument("--measured", default=None, help="CSV with distance_m,charge_time_s to join")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
