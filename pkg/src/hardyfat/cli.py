"""Command-line front end: ``hardyfat <command> --config run.yaml --out results/``.

Every command reads the same YAML (or JSON) document; see ``fixtures/`` for one
per bundled example and the README for the schema.  Reports are JSON with
sorted keys; tables are CSV; plot data are two-column text files.

Exit codes: 0 success, 1 usage or malformed config, 2 fixture error
(degenerate domain, empty mask, inadmissible parameters), 3 a solver did not
converge (reports are still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .capacity import CapacityError, solve_capacity
from .cover import (
    CoverError,
    MergeParams,
    epsilon_threshold,
    merge_cover,
    random_cover,
    surviving_radius_bound,
    write_merge_trace,
)
from .fatness import FatnessError, fatness_scan, fatness_to_perfectness_bound
from .grid import DomainSpec, GridError, SpaceParams, build_grid, cantor_points, unit_ball_volume
from .hardy import HardyError, hardy_constant, mazya_check
from .perfectness import (
    PerfectnessError,
    boundary_points,
    hardy_perfectness_constant,
    log_hardy_perfectness_constant,
    perfectness_constant,
    sharp_threshold,
)
from .trend import growth_verdict

logger = logging.getLogger("hardyfat")

COMMANDS = ("capacity", "fatness", "perfectness", "hardy", "mazya", "cover", "equivalence")
FIXTURE_ERRORS = (GridError, CapacityError, CoverError, FatnessError, HardyError, PerfectnessError)

EXIT_OK, EXIT_USAGE, EXIT_FIXTURE, EXIT_NONCONVERGED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_config(path: str | Path) -> dict:
    try:
        cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _ladder(section: dict, cfg: dict, refinements: int | None) -> list[float]:
    ladder = section.get("ladder", cfg.get("ladder"))
    if ladder is None:
        raise ConfigError("missing resolution ladder")
    ladder = [float(h) for h in ladder]
    if refinements is not None:
        ladder = [ladder[0] / 2**k for k in range(refinements)]
    if not ladder or any(b >= a for a, b in zip(ladder, ladder[1:])) or ladder[-1] <= 0:
        raise ConfigError("ladder must be positive and strictly decreasing")
    return ladder


def _params(cfg: dict, h: float) -> SpaceParams:
    try:
        bbox = tuple(tuple(float(v) for v in corner) for corner in cfg["bbox"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("bbox must be [[lo...], [hi...]]") from None
    return SpaceParams(int(cfg.get("Q", 2)), h, bbox, cfg.get("c_A"))


def _spec(entries) -> DomainSpec:
    if not isinstance(entries, list) or not all(isinstance(e, dict) for e in entries):
        raise ConfigError("shape lists must be sequences of mappings")
    try:
        return DomainSpec.from_config(entries)
    except GridError as exc:
        raise ConfigError(str(exc)) from None


def _grid(cfg: dict, h: float):
    if "domain" not in cfg:
        raise ConfigError("missing domain")
    return build_grid(_spec(cfg["domain"]), _params(cfg, h))


def _mask_of(grid, entries):
    return grid.mask(_spec(entries).rasterize(grid.centers(), grid.lo, grid.h))


def _point_set(spec: dict) -> np.ndarray:
    kind = spec.get("kind", "cantor")
    if kind == "cantor":
        return cantor_points(float(spec.get("theta", 1 / 3)), int(spec["depth"]), float(spec.get("length", 1.0)), spec.get("which", "endpoints"))[:, None]
    if kind == "segment":
        n = int(spec.get("count", 64))
        return np.linspace(0.0, float(spec.get("length", 1.0)), n)[:, None]
    if kind == "points":
        return np.atleast_2d(np.asarray(spec["points"], dtype=float))
    raise ConfigError(f"unknown point set kind {kind!r}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _trend_or_none(values):
    vals = [v for v in values if v is not None]
    if len(vals) < 3 or any(not (v > 0 and math.isfinite(v)) for v in vals):
        return None
    return growth_verdict(vals).to_dict()


def cmd_capacity(cfg, args):
    p = float(cfg["p"])
    rows, ok = [], True
    for h in _ladder(cfg, cfg, args.refinements):
        grid = _grid(cfg, h)
        plate = _mask_of(grid, cfg["plate"])
        env = _mask_of(grid, cfg["environment"]) if "environment" in cfg else grid.domain()
        res = solve_capacity(grid, plate, env, p, tol=float(cfg.get("tol", 1e-8)))
        ok &= res.converged
        rows.append({"h": h, "value": res.value, "iterations": res.iterations, "converged": res.converged})
    report = {"p": p, "refinements": rows}
    plots = {"capacity_vs_h": (("h", "capacity"), [(r["h"], r["value"]) for r in rows])}
    return report, plots, {}, ok


def _fatness_ladder(cfg, section, p, ladder, workers):
    scans = []
    for h in ladder:
        grid = _grid(cfg, h)
        E = _mask_of(grid, section["set"]) if "set" in section else grid.complement()
        scans.append(
            fatness_scan(
                grid,
                E,
                p,
                center_count=int(section.get("centers", 6)),
                radius_levels=int(section.get("radius_levels", 5)),
                r_max=section.get("r_max"),
                min_cells=float(section.get("min_cells", 4.0)),
                workers=workers,
            )
        )
    inverse = [1 / s.c0_est if s.c0_est > 0 else math.inf for s in scans]
    trend = _trend_or_none(inverse)
    finest = scans[-1]
    collapsing = trend is not None and trend["label"] == "diverging"
    verdict = finest.fat_at_tested_scales and not collapsing
    summary = {
        "p": p,
        "refinements": [s.summary() for s in scans],
        "trend_of_inverse_c0": trend,
        "c0_trend": [s.c0_est for s in scans],
        "tested_radii": finest.radii(),
        "verdict": "fat at tested scales" if verdict else "not fat at tested scales",
        "positive": bool(verdict),
    }
    return scans, summary


def cmd_fatness(cfg, args):
    section = cfg.get("fatness", cfg)
    p = float(section.get("p", cfg.get("p")))
    scans, summary = _fatness_ladder(cfg, section, p, _ladder(section, cfg, args.refinements), args.workers)
    tables = {"fatness_rows.csv": scans[-1].to_csv()}
    plots = {"min_ratio_vs_r": (("r", "min_ratio"), scans[-1].min_ratio_by_radius())}
    return summary, plots, tables, all(s.converged for s in scans)


def _perfectness_ladder(cfg, section, ladder):
    rows = []
    for h in ladder:
        grid = _grid(cfg, h)
        pts = boundary_points(grid)
        rep = perfectness_constant(pts, r_min=h)
        rows.append({"h": h, "c_UP": rep.c_up, "witness_center": [float(v) for v in rep.witness_center], "witness_r": rep.witness_r, "points": int(len(pts))})
    trend = _trend_or_none([r["c_UP"] for r in rows])
    positive = trend is not None and trend["label"] == "bounded"
    return rows, {
        "refinements": rows,
        "trend": trend,
        "verdict": "uniformly perfect at tested scales" if positive else "not uniformly perfect at tested scales",
        "positive": positive,
    }


def cmd_perfectness(cfg, args):
    section = cfg.get("perfectness", cfg)
    if "points" in section:
        pts = _point_set(section["points"])
        rep = perfectness_constant(pts, r_min=section.get("r_min"), r_max=section.get("r_max"))
        report = json.loads(rep.to_json())
        return report, {}, {"per_center.csv": rep.per_center_csv(pts)}, True
    rows, summary = _perfectness_ladder(cfg, section, _ladder(section, cfg, args.refinements))
    plots = {"c_up_vs_h": (("h", "c_UP"), [(r["h"], r["c_UP"]) for r in rows])}
    return summary, plots, {}, True


def _hardy_job(job):
    cfg, h, p, restarts, seed = job
    c, _, ok = hardy_constant(_grid(cfg, h), p, restarts=restarts, seed=seed)
    return c, ok


def _hardy_ladder(cfg, section, p, ladder, seed, workers):
    restarts = int(section.get("restarts", 10))
    jobs = [(cfg, h, p, restarts, seed) for h in ladder]
    results = _map(_hardy_job, jobs, workers)
    rows = [{"h": h, "c_H_est": c, "converged": ok} for h, (c, ok) in zip(ladder, results)]
    trend = _trend_or_none([r["c_H_est"] for r in rows])
    positive = trend is not None and trend["label"] == "bounded"
    summary = {
        "p": p,
        "refinements": rows,
        "trend": trend,
        "verdict": "Hardy holds at tested scales" if positive else "Hardy fails at tested scales",
        "positive": positive,
        "note": "grid estimates bound the Hardy constant from below; the refinement trend is the signal",
    }
    return summary, all(r["converged"] for r in rows)


def cmd_hardy(cfg, args):
    section = cfg.get("hardy", cfg)
    p = float(section.get("p", cfg.get("p")))
    summary, ok = _hardy_ladder(cfg, section, p, _ladder(section, cfg, args.refinements), args.seed, args.workers)
    plots = {"c_h_vs_h": (("h", "c_H_est"), [(r["h"], r["c_H_est"]) for r in summary["refinements"]])}
    return summary, plots, {}, ok


def cmd_mazya(cfg, args):
    section = cfg.get("mazya", cfg)
    p = float(section.get("p", cfg.get("p")))
    h = _ladder(section, cfg, args.refinements)[-1]
    grid = _grid(cfg, h)
    lines = ["fixture_id,numerator,capacity,quotient"]
    rows = []
    for k, entries in enumerate(section["compacts"]):
        res = mazya_check(grid, _mask_of(grid, entries), p)
        rows.append({"fixture_id": k, "numerator": res.numerator, "capacity": res.capacity, "quotient": res.quotient})
        lines.append(f"{k},{res.numerator!r},{res.capacity!r},{res.quotient!r}")
    quotients = [r["quotient"] for r in rows]
    report = {"p": p, "h": h, "rows": rows, "max_quotient": max(quotients), "min_quotient": min(quotients)}
    return report, {}, {"mazya.csv": "\n".join(lines) + "\n"}, True


def cmd_cover(cfg, args):
    section = cfg.get("cover", cfg)
    pts = _point_set(section["points"])
    c_up = float(section["c_up"])
    alpha = float(section.get("alpha", 2.0))
    eps = float(section.get("eps_fraction", 0.9)) * epsilon_threshold(alpha * c_up)
    params = MergeParams(alpha, c_up, eps)
    rng = np.random.default_rng(args.seed)
    r_min = float(section["r_min"])
    r_max = float(section.get("r_max", 4 * r_min))
    x0 = pts[int(section.get("x0_index", 0))]
    r0 = float(section.get("r0", 0.5))
    rows, first_steps = [], None
    for trial in range(int(section.get("trials", 50))):
        cover = random_cover(pts, rng, r_min, r_max, eps)
        merged, steps = merge_cover(cover, params, target=pts)
        surv = surviving_radius_bound(merged, x0, r0, params, target=pts)
        rows.append({"trial": trial, "initial": len(cover), "merges": len(steps), "final": len(merged), "radius": surv.radius, "bound": surv.bound, "passed": surv.passed})
        if first_steps is None:
            first_steps = steps
    report = {
        "alpha": alpha,
        "c_up": c_up,
        "eps": eps,
        "eps_threshold": epsilon_threshold(alpha * c_up),
        "trials": rows,
        "all_passed": all(r["passed"] for r in rows),
    }
    return report, {}, {"merge_trace": first_steps or []}, True


def cmd_equivalence(cfg, args):
    """All four conditions on one domain, each judged by its refinement trend."""
    Q = int(cfg.get("Q", 2))
    c_A = float(cfg["c_A"]) if "c_A" in cfg else unit_ball_volume(Q)
    hardy_sec = cfg.get("hardy", {})
    fat_sec = cfg.get("fatness", {})
    perf_sec = cfg.get("perfectness", {})
    ok = True

    hardy_runs = {}
    for p in [float(Q)] + [float(x) for x in hardy_sec.get("extra_p", [])]:
        summary, conv = _hardy_ladder(cfg, hardy_sec, p, _ladder(hardy_sec, cfg, args.refinements), args.seed, args.workers)
        hardy_runs[f"p={p:g}"] = summary
        ok &= conv
    _, perf = _perfectness_ladder(cfg, perf_sec, _ladder(perf_sec, cfg, args.refinements))
    fat_runs = {}
    fat_ladder = _ladder(fat_sec, cfg, args.refinements)
    for eps in [0.0] + [float(e) for e in fat_sec.get("eps", [0.1, 0.25])]:
        scans, summary = _fatness_ladder(cfg, fat_sec, Q - eps, fat_ladder, args.workers)
        fat_runs[f"p={Q - eps:g}"] = summary
        ok &= all(s.converged for s in scans)

    hardy_q = hardy_runs[f"p={float(Q):g}"]
    fat_q = fat_runs[f"p={float(Q):g}"]
    lower = [v for k, v in fat_runs.items() if k != f"p={float(Q):g}"]
    conditions = {
        "1_hardy_p_eq_Q": hardy_q["positive"],
        "2_uniformly_perfect": perf["positive"],
        "3_fat_p_eq_Q": fat_q["positive"],
        "4_fat_p_below_Q": all(v["positive"] for v in lower),
    }

    c_H = hardy_q["refinements"][-1]["c_H_est"]
    c_up = perf["refinements"][-1]["c_UP"]
    cross = {
        "hardy_to_perfectness": {
            "c_H": c_H,
            "log_c_UP_bound": log_hardy_perfectness_constant(c_H, c_A, Q),
            "c_UP_bound": hardy_perfectness_constant(c_H, c_A, Q),
            "measured_c_UP_within_bound": math.log(c_up) <= log_hardy_perfectness_constant(c_H, c_A, Q),
        },
        "sharp_thresholds": {},
        "fatness_to_perfectness": {},
    }
    for key, run in fat_runs.items():
        p = run["p"]
        if p < Q:
            try:
                cross["sharp_thresholds"][key] = {"c_p": sharp_threshold(p, Q), "measured_c_UP": c_up}
            except PerfectnessError as exc:
                cross["sharp_thresholds"][key] = {"error": str(exc)}
            c0 = run["c0_trend"][-1]
            if 0 < c0 <= 1:
                bound = fatness_to_perfectness_bound(c0, p, Q)
                bound["measured_c_UP_within_bound"] = c_up <= bound["m_max"]
                cross["fatness_to_perfectness"][key] = bound
    report = {
        "Q": Q,
        "conditions": conditions,
        "all_positive": all(conditions.values()),
        "all_negative": not any(conditions.values()),
        "hardy": hardy_runs,
        "perfectness": perf,
        "fatness": fat_runs,
        "cross_bounds": cross,
    }
    plots = {
        f"c_h_vs_h_{k}": (("h", "c_H_est"), [(r["h"], r["c_H_est"]) for r in v["refinements"]])
        for k, v in hardy_runs.items()
    }
    plots["c_up_vs_h"] = (("h", "c_UP"), [(r["h"], r["c_UP"]) for r in perf["refinements"]])
    for k, v in fat_runs.items():
        plots[f"c0_vs_h_{k}"] = (("h", "c0_est"), [(r["h"], r["c0_est"]) for r in v["refinements"]])
    return report, plots, {}, ok


HANDLERS = {
    "capacity": cmd_capacity,
    "fatness": cmd_fatness,
    "perfectness": cmd_perfectness,
    "hardy": cmd_hardy,
    "mazya": cmd_mazya,
    "cover": cmd_cover,
    "equivalence": cmd_equivalence,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit_plot_data(plots: dict, out: Path) -> list[Path]:
    """One two-column text file per series: a ``# x y`` header, then rows."""
    written = []
    for name, ((xname, yname), rows) in sorted(plots.items()):
        path = out / f"{name.replace('=', '')}.dat"
        lines = [f"# {xname} {yname}"] + [f"{float(x)!r} {float(y)!r}" for x, y in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def run(cfg: dict, args) -> int:
    command = args.command
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, plots, tables, converged = HANDLERS[command](cfg, args)
    report = {
        "command": command,
        "config_sha256": config_hash(cfg),
        "seed": args.seed,
        "versions": {"hardyfat": __version__, "numpy": np.__version__, "scipy": _scipy_version()},
        "converged": converged,
        "result": report,
    }
    write_json(out / f"{command}.json", report)
    for name, content in tables.items():
        if name == "merge_trace":
            write_merge_trace(content, out / "merge_trace.csv")
        else:
            (out / name).write_text(content, encoding="utf-8")
    emit_plot_data(plots, out)
    return EXIT_OK if converged else EXIT_NONCONVERGED


def _scipy_version() -> str:
    import scipy

    return scipy.__version__


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardyfat", description=__doc__.splitlines()[0])
    parser.add_argument("command", help="one of: " + ", ".join(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML or JSON experiment config")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--refinements", type=int, default=None, help="ladder length, halving from its first h")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command not in COMMANDS:
        parser.print_usage(sys.stderr)
        print(f"hardyfat: unknown command {args.command!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        cfg_command = cfg.get("command", args.command)
        if cfg_command != args.command:
            raise ConfigError(f"config is for {cfg_command!r}, not {args.command!r}")
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        if args.refinements is not None and args.refinements < 1:
            raise ConfigError("--refinements must be positive")
        return run(cfg, args)
    except (ConfigError, KeyError, TypeError) as exc:
        print(f"hardyfat: malformed config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FIXTURE_ERRORS as exc:
        print(f"hardyfat: fixture error: {exc}", file=sys.stderr)
        return EXIT_FIXTURE


if __name__ == "__main__":
    sys.exit(main())
