"""``raycal`` command line: trace, calibrate, stats, compare.

Exit status: 0 success, 2 invalid input, 3 solver degeneracy under ``--strict``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

from . import io as rio
from .calibration import (
    assemble_system, error_statistics, log_solution_of_lin, solve_linear_domain, solve_log_domain,
)
from .errors import RaycalError
from .stats import (
    RESOLUTION_NS, compare_statistics, fixed, format_comparison, spread_report, synthesize_pdp,
)
from .svg import pdp_svg, scatter_svg
from .tracer import trace

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 2, 3

log = logging.getLogger("raycal")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raycal", description="Ray tracing and material calibration.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", type=Path, required=config_required, help="run config JSON")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="random seed (default: config value, 42)")

    def tracing(sp):
        sp.add_argument("--env", type=Path, help="environment JSON (overrides the config)")
        sp.add_argument("--nt", type=int, help="tessellation frequency")
        sp.add_argument("--max-bounces", type=int, help="maximum reflections per path")
        sp.add_argument("--scattering", choices=("on", "off"), help="diffuse scattering")

    t = sub.add_parser("trace", help="trace every link of a run config")
    common(t, config_required=True)
    tracing(t)

    c = sub.add_parser("calibrate", help="fit material losses to directional measurements")
    common(c, config_required=True)
    tracing(c)
    c.add_argument("--measurements", type=Path, help="measurements CSV (overrides the config)")
    c.add_argument("--threshold-deg", type=float, help="match threshold (default: sum of antenna HPBWs)")
    c.add_argument("--strict", action="store_true", help="exit 3 on a rank-deficient system")

    s = sub.add_parser("stats", help="delay/angular spreads and PDPs from a components CSV")
    common(s)
    s.add_argument("--components", type=Path, required=True)
    s.add_argument("--resolution-ns", type=float, help="PDP bin width (default: from config or 2.5)")
    s.add_argument("--svg", action="store_true", help="also write PDP plots")

    m = sub.add_parser("compare", help="measured vs predicted spread statistics")
    common(m)
    m.add_argument("--measured", type=Path, required=True, help="stats or components CSV")
    m.add_argument("--simulated", type=Path, required=True, help="stats or components CSV")
    m.add_argument("--svg", action="store_true", help="also write scatter plots")
    return p


def _config(args) -> rio.RunConfig:
    cfg = rio.load_run_config(args.config) if getattr(args, "config", None) else rio.RunConfig()
    tc = cfg.trace
    changes = {}
    if getattr(args, "nt", None) is not None:
        changes["tessellation_frequency"] = args.nt
    if getattr(args, "max_bounces", None) is not None:
        changes["max_reflections"] = args.max_bounces
    if getattr(args, "scattering", None) is not None:
        changes["scattering_enabled"] = args.scattering == "on"
    if changes:
        tc = dataclasses.replace(tc, **changes)
    upd = {"trace": tc}
    if getattr(args, "env", None) is not None:
        upd["environment"] = args.env
    if getattr(args, "measurements", None) is not None:
        upd["measurements"] = args.measurements
    if args.seed is not None:
        upd["seed"] = args.seed
    return dataclasses.replace(cfg, **upd)


def _need(value, what):
    if value is None:
        raise RaycalError(f"no {what} given (use the config or the command-line flag)")
    return value


def run_trace(args) -> int:
    cfg = _config(args)
    env = rio.load_environment_checked(_need(cfg.environment, "environment"))
    if not cfg.links:
        raise RaycalError("run config lists no links")
    tx_pat, rx_pat = cfg.tx_antenna.pattern(), cfg.rx_antenna.pattern()
    rows: List[rio.ComponentRow] = []
    summary = []
    for link in cfg.links:
        res = trace(env, link.tx, link.rx, tx_pat, rx_pat, cfg.trace)
        for k, c in enumerate(res.components):
            rows.append(rio.component_row(f"{link.id}/{k}", c))
        strongest = res.components[0].power_dbm if res.components else None
        summary.append([link.id, len(res.components), "" if strongest is None else rio.fmt(strongest),
                        "true" if not res.los_blocked else "false"])
    rio.atomic_write(args.out / "components.csv", rio.components_csv(rows))
    rio.atomic_write(args.out / "summary.csv",
                     rio._csv_text(["link", "n_components", "strongest_power_dbm", "los"], summary))
    for s in summary:
        print(f"{s[0]}: {s[1]} components, strongest {s[2] or '-'} dBm, LOS {s[3]}")
    return EXIT_OK


def _materials_table(system, log_sol, lin_sol, of_lin_log, stats) -> str:
    def v(x):
        return "-" if x is None else fixed(x, 1)

    lines = [f"{'material':<20}{'pen log':>10}{'ref log':>10}{'pen lin':>10}{'ref lin':>10}  (dB)"]
    lines.append("-" * len(lines[0]))
    for m in system.material_order:
        lines.append(f"{m:<20}{v(log_sol.losses.penetration_db(m)):>10}{v(log_sol.losses.reflection_db(m)):>10}"
                     f"{v(lin_sol.losses.penetration_db(m)):>10}{v(lin_sol.losses.reflection_db(m)):>10}")
    lines += [
        "",
        f"{'objective':<20}{'log opt':>10}{'lin opt':>10}",
        f"{'OF_dB (rms)':<20}{fixed(log_sol.of_db_rms, 2):>10}{fixed(lin_sol.of_db_rms, 2):>10}",
        f"{'OF_lin':<20}{fixed(of_lin_log, 3):>10}{fixed(lin_sol.of_lin, 3):>10}",
        "",
        f"records used {len(system.residuals)}, unmatched {len(system.unmatched_ids)}, "
        f"without unknowns {len(system.no_unknown_ids)}; rank {log_sol.rank}/{log_sol.n_unknowns}",
    ]
    if stats is not None:
        lines.append(f"error mean {fixed(stats.mean_db, 2)} dB, std {fixed(stats.std_db, 2)} dB, "
                     f"abs-error std {fixed(stats.abs_std_db, 2)} dB, best fit {stats.best_fit or 'n/a'}")
    for w in log_sol.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def run_calibrate(args) -> int:
    cfg = _config(args)
    env = rio.load_environment_checked(_need(cfg.environment, "environment"))
    tx_pat, rx_pat = cfg.tx_antenna.pattern(), cfg.rx_antenna.pattern()
    records = rio.read_measurements(_need(cfg.measurements, "measurements CSV"), tx_pat, rx_pat)
    system = assemble_system(records, env, cfg.trace, threshold_deg=args.threshold_deg)
    log_sol = solve_log_domain(system)
    lin_sol = solve_linear_domain(system, log_sol, seed=cfg.seed)
    of_lin_log = log_solution_of_lin(system, log_sol)
    stats = error_statistics(log_sol.record_residuals) if len(system.residuals) >= 3 else None

    f = rio.fmt

    def cell(x):
        return "" if math.isnan(x) else f(x)

    mat_rows = []
    n = len(system.material_order)
    for k, m in enumerate(system.material_order):
        pen, ref = k, n + k
        mat_rows.append([m, cell(log_sol.losses.values[pen]), cell(log_sol.std_errors[pen]),
                         cell(log_sol.losses.values[ref]), cell(log_sol.std_errors[ref]),
                         cell(lin_sol.losses.values[pen]), cell(lin_sol.losses.values[ref])])
    rio.atomic_write(args.out / "materials.csv", rio._csv_text(
        ["material", "pen_log_db", "pen_log_se_db", "ref_log_db", "ref_log_se_db", "pen_lin_db", "ref_lin_db"],
        mat_rows))
    res_rows = []
    for j, rid in enumerate(system.record_ids):
        c = system.matched[j]
        res_rows.append([rid, rio.format_signature(c.surface_signature), f(c.path_length_m),
                         f(system.residuals[j]), f(log_sol.record_residuals[j]), f(lin_sol.record_residuals[j])])
    rio.atomic_write(args.out / "residuals.csv", rio._csv_text(
        ["id", "signature", "path_length_m", "a_db", "residual_log_db", "residual_lin_db"], res_rows))
    table = _materials_table(system, log_sol, lin_sol, of_lin_log, stats)
    rio.atomic_write(args.out / "materials.txt", table)
    sys.stdout.write(table)
    if log_sol.rank_deficient and args.strict:
        log.error("rank-deficient calibration system (rank %d < %d)", log_sol.rank, log_sol.n_unknowns)
        return EXIT_DEGENERATE
    return EXIT_OK


def _reports_from(path):
    """``(location, SpreadReport)`` pairs from a stats CSV or a components CSV."""
    header = rio.sniff_header(path)
    if header == rio.STATS_HEADER:
        return rio.read_stats(path)
    groups = rio.group_by_location(rio.read_components(path))
    return [(loc, spread_report(rows_to_components(rows))) for loc, rows in groups.items()]


def rows_to_components(rows):
    return [r.to_component() for r in rows]


def run_stats(args) -> int:
    cfg = _config(args)
    groups = rio.group_by_location(rio.read_components(args.components))
    if not groups:
        raise RaycalError(f"{args.components}: no components")
    resolution = args.resolution_ns or cfg.resolution_ns
    if resolution is None:
        resolution = RESOLUTION_NS.get(float(cfg.trace.frequency_ghz), 2.5)
    reports, pdp_rows = [], []
    for loc, rows in groups.items():
        comps = rows_to_components(rows)
        reports.append((loc, spread_report(comps)))
        pdp = synthesize_pdp(comps, resolution)
        pdp_rows += [[loc, rio.fmt(t), rio.fmt(p)] for t, p in pdp.bins]
        if args.svg:
            rio.atomic_write(args.out / f"pdp_{_safe(loc)}.svg",
                             pdp_svg(pdp.delays_ns.tolist(), pdp.powers_mw.tolist(), f"PDP {loc}"))
    rio.atomic_write(args.out / "stats.csv", rio.stats_csv(reports))
    rio.atomic_write(args.out / "pdp.csv", rio._csv_text(["location", "delay_ns", "power_mw"], pdp_rows))
    for loc, r in reports:
        flag = " (degenerate)" if r.angular_degenerate else ""
        print(f"{loc}: {r.n_components} components, DS {r.rms_delay_spread_ns:.2f} ns, "
              f"AS {r.rms_angular_spread_deg:.2f} deg{flag}")
    return EXIT_OK


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def run_compare(args) -> int:
    meas = dict(_reports_from(args.measured))
    pred = dict(_reports_from(args.simulated))
    if set(meas) != set(pred):
        only_m = sorted(set(meas) - set(pred))
        only_p = sorted(set(pred) - set(meas))
        raise RaycalError(f"location sets differ: only measured {only_m}, only simulated {only_p}")
    locs = sorted(meas)
    rows = compare_statistics([meas[k] for k in locs], [pred[k] for k in locs])

    def f(x):
        return "" if x is None else rio.fmt(x)

    rio.atomic_write(args.out / "comparison.csv", rio._csv_text(
        ["statistic", "mean_measured", "mean_predicted", "mean_delta", "std_measured", "std_predicted",
         "std_delta"],
        [[r.statistic, f(r.mean_measured), f(r.mean_predicted), f(r.mean_delta), f(r.std_measured),
          f(r.std_predicted), f(r.std_delta)] for r in rows]))
    table = format_comparison(rows) + "\n"
    rio.atomic_write(args.out / "comparison.txt", table)
    if args.svg:
        rio.atomic_write(args.out / "angular_spread.svg", scatter_svg(
            [(meas[k].rms_angular_spread_deg, pred[k].rms_angular_spread_deg) for k in locs],
            "RMS angular spread", "(deg)"))
        rio.atomic_write(args.out / "delay_spread.svg", scatter_svg(
            [(meas[k].rms_delay_spread_ns, pred[k].rms_delay_spread_ns) for k in locs],
            "RMS delay spread", "(ns)"))
    sys.stdout.write(table)
    return EXIT_OK


COMMANDS = {"trace": run_trace, "calibrate": run_calibrate, "stats": run_stats, "compare": run_compare}


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (RaycalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
