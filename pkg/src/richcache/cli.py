"""Command line: trace analysis, planning, threshold search, simulation sweeps.

Every subcommand reads one YAML config (see ``docs/config.md``), lets flags
override its keys and writes deterministic files into ``--out-dir``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Any

import yaml

from richcache import scenarios
from richcache.optimize import OBJECTIVES, optimize_thresholds
from richcache.pdf import DiscretePdf
from richcache.policy import ThresholdProfile, rich_plan
from richcache.probmodel import RadioParams, chunk_pdfs_for_path, phi_general
from richcache.sim.config import ConfigError, DwellError, SimulationConfig
from richcache.sim.engine import run
from richcache.metrics import reports_to_csv
from richcache.trace import (
    CarPath,
    DwellMixture,
    SyntheticTraceSpec,
    TraceError,
    derive_coverage_from_positions,
    events_from_paths,
    generate_synthetic_trace,
    load_coverage_events,
    load_en_layout,
    load_positions,
    paths_from_events,
    significant_paths,
    trace_dwell_stats,
    write_coverage_events,
)

log = logging.getLogger("richcache")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

PRESETS = {
    "bimodal-3en": scenarios.bimodal_three_en_spec,
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# config ------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text())
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise DataError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return data, p.resolve().parent


def apply_overrides(cfg: dict, items: list[str]) -> dict:
    """``section.key=value`` pairs; values are parsed as YAML scalars/lists."""
    for item in items:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        node = cfg
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise UsageError(f"--set {dotted}: {key} is not a section")
        node[keys[-1]] = yaml.safe_load(raw)
    return cfg


def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None


def synthetic_spec(d: dict) -> SyntheticTraceSpec:
    if "preset" in d:
        name = d["preset"]
        if name not in PRESETS:
            raise UsageError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        kw = {k: d[k] for k in ("n_cars", "arrival_rate") if k in d}
        return PRESETS[name](**kw)
    try:
        routes = {tuple(r["ens"]): float(r.get("weight", 1.0)) for r in d["routes"]}
        dwell = {en: DwellMixture(tuple(tuple(c) for c in comps)) for en, comps in d["dwell"].items()}
        return SyntheticTraceSpec(
            routes=routes,
            dwell=dwell,
            n_cars=int(d["n_cars"]),
            arrival_rate=float(d.get("arrival_rate", 0.5)),
            gap_s=tuple(d.get("gap_s", (2.0, 6.0))),
            start_time=float(d.get("start_time", 0.0)),
            car_prefix=str(d.get("car_prefix", "car")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad synthetic trace spec: {exc}") from None


def load_trace(args, cfg: dict, base: Path) -> list[CarPath]:
    tcfg = dict(cfg.get("trace") or {})
    if getattr(args, "trace", None):
        tcfg = {"coverage": args.trace}
        base = Path.cwd()
    if getattr(args, "positions", None):
        if not args.layout:
            raise UsageError("--positions needs --layout")
        tcfg = {"positions": args.positions, "layout": args.layout}
        base = Path.cwd()
    if "coverage" in tcfg:
        path = _resolve(base, tcfg["coverage"])
        return paths_from_events(load_coverage_events(_read(path), str(path)))
    if "positions" in tcfg:
        pos_path, lay_path = _resolve(base, tcfg["positions"]), _resolve(base, tcfg["layout"])
        layout = load_en_layout(_read(lay_path), str(lay_path))
        pos = load_positions(_read(pos_path), str(pos_path))
        return paths_from_events(derive_coverage_from_positions(pos, layout))
    if "synthetic" in tcfg:
        syn = tcfg["synthetic"]
        return generate_synthetic_trace(synthetic_spec(syn), int(syn.get("seed", 0)))
    raise UsageError("no trace given: use --trace or a 'trace' section in the config")


def sim_config(cfg: dict, args) -> SimulationConfig:
    d = dict(cfg.get("simulation") or {})
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        return SimulationConfig.from_dict(d)
    except (ConfigError, ValueError, TypeError) as exc:
        raise UsageError(f"simulation config: {exc}") from None


# output -------------------------------------------------------------------------


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def _json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# subcommands -------------------------------------------------------------------


def cmd_analyze_trace(args, cfg, base) -> None:
    acfg = cfg.get("analysis") or {}
    bin_width = args.bin_width if args.bin_width is not None else float(acfg.get("bin_width", 1.0))
    boundary = args.fast_slow_boundary if args.fast_slow_boundary is not None else float(acfg.get("fast_slow_boundary", 10.0))
    path_len = args.path_len if args.path_len is not None else int(acfg.get("path_len", 3))
    min_cars = args.min_cars if args.min_cars is not None else int(acfg.get("min_cars", 1))
    if bin_width <= 0:
        raise UsageError("bin width must be positive")
    paths = load_trace(args, cfg, base)
    stats = trace_dwell_stats(paths, bin_width, boundary) if paths else {}
    sig = significant_paths(paths, path_len, min_cars)
    out = _out(args)
    report = {
        "n_cars": len(paths),
        "n_events": len(events_from_paths(paths)),
        "ens": {en: s.to_dict() for en, s in sorted(stats.items())},
        "significant_paths": [{"path": list(sp.en_sequence), "cars": sp.car_count} for sp in sig],
    }
    _write(out / "trace_stats.json", _json(report))
    fields = ["en_id", "sample_count", "mean_dwell", "min_dwell", "skewness", "kurtosis",
              "avg_concurrent_users", "fast_count", "slow_count"]
    rows = [{f: s.to_dict()[f] for f in fields} for _, s in sorted(stats.items())]
    _write(out / "dwell_stats.csv", _csv(rows, fields))
    rows = [{"path": "-".join(sp.en_sequence), "cars": sp.car_count} for sp in sig]
    _write(out / "significant_paths.csv", _csv(rows, ["path", "cars"]))


def _pdf_from(d: Any) -> DiscretePdf:
    if isinstance(d, dict):
        if "point" in d:
            return DiscretePdf.point(int(d["point"]))
        if "triangular" in d:
            mean, half = d["triangular"]
            return DiscretePdf.triangular(int(mean), int(half))
        if "masses" in d:
            return DiscretePdf.from_mapping({int(k): float(v) for k, v in d["masses"].items()})
    raise UsageError(f"cannot read a pdf from {d!r}; use point, triangular or masses")


def cmd_plan(args, cfg, base) -> None:
    pcfg = dict(cfg.get("plan") or {})
    taus = _floats(args.taus) if args.taus else [float(t) for t in pcfg.get("taus", [0.8])]
    try:
        profile = ThresholdProfile(tuple(taus))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n_chunks = args.n_chunks or pcfg.get("n_chunks")
    capacity = args.capacity if args.capacity is not None else pcfg.get("capacity")

    if args.stats or "stats" in pcfg:
        stats_path = Path(args.stats) if args.stats else _resolve(base, pcfg["stats"])
        try:
            stats = json.loads(_read(stats_path))["ens"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"{stats_path}: not a trace_stats.json file ({exc})") from None
        ens = args.path.split(",") if args.path else list(pcfg.get("path", []))
        if not ens:
            raise UsageError("planning from trace statistics needs --path")
        missing = [en for en in ens if en not in stats]
        if missing:
            raise DataError(f"{stats_path}: no statistics for ENs {missing}")
        dwell = [DiscretePdf.from_mapping({int(k): v for k, v in stats[en]["dwell_pdf"].items()}) for en in ens]
        users = tuple(stats[en]["avg_concurrent_users"] for en in ens)
        bin_width = stats[ens[0]]["bin_width"]
        radio = RadioParams(float(pcfg.get("bandwidth_b", 5.2e6)), float(pcfg.get("chunk_bits", 520_000)), users)
        caps = None if capacity is None else [int(capacity)] * len(ens)
        x_pdfs = chunk_pdfs_for_path(dwell, radio, caps, bin_width)
    elif "chunk_pdfs" in pcfg:
        x_pdfs = [_pdf_from(d) for d in pcfg["chunk_pdfs"]]
        ens = [str(i + 1) for i in range(len(x_pdfs))]
    else:
        raise UsageError("plan needs --stats with --path, or plan.chunk_pdfs in the config")
    if not n_chunks:
        n_chunks = sum(p.max_support for p in x_pdfs)
    phi = phi_general(x_pdfs, int(n_chunks))
    plan = rich_plan(phi, profile, keep_partial_on_failure=bool(pcfg.get("keep_partial_on_failure", False)))

    out = _out(args)
    _write(out / "phi.json", phi.to_json() + "\n")
    _write(out / "plan.json", _json({**plan.to_dict(), "ens": ens, "taus": list(profile.taus)}))
    fields = ["k", "p_k", "copies"] + [f"phi_{en}" for en in ens]
    rows = []
    copies = plan.copies()
    for k in range(phi.n_chunks):
        row = {"k": k + 1, "p_k": repr(float(plan.achieved_prob[k])), "copies": int(copies[k])}
        row.update({f"phi_{en}": repr(float(phi.phi[i, k])) for i, en in enumerate(ens)})
        rows.append(row)
    _write(out / "plan_summary.csv", _csv(rows, fields))


def _sweep_lists(args, cfg) -> dict[str, list]:
    sw = dict(cfg.get("sweep") or {})
    base_sim = cfg.get("simulation") or {}
    lists = {
        "policy": args.policies.split(",") if args.policies else sw.get("policies", [base_sim.get("policy", "rich")]),
        "c_hat": _floats(args.c_hat) if args.c_hat else sw.get("c_hat"),
        "seed": _ints(args.seeds) if args.seeds else sw.get("seeds"),
        "dwell_mu": _floats(args.dwell_mu) if args.dwell_mu else sw.get("dwell_mu"),
        "path_skip": _floats(args.path_skip) if args.path_skip else sw.get("path_skip"),
    }
    out = {k: list(v) for k, v in lists.items() if v is not None}
    if args.seed is not None and not args.seeds:
        out["seed"] = [args.seed]
    return out


def _point_config(base: SimulationConfig, point: dict, sigma: float) -> SimulationConfig:
    changes: dict[str, Any] = {"policy": point["policy"]}
    if "c_hat" in point:
        changes.update(c_hat=float(point["c_hat"]), cache_chunks=None)
    if "seed" in point:
        changes["seed"] = int(point["seed"])
    if "dwell_mu" in point:
        changes["dwell_error"] = DwellError(float(point["dwell_mu"]), sigma)
    if "path_skip" in point:
        changes["path_skip"] = float(point["path_skip"]) or None
    try:
        return base.with_(**changes)
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args, cfg, base) -> None:
    sim = sim_config(cfg, args)
    taus = _floats(args.taus) if args.taus else None
    if taus:
        try:
            sim = sim.with_(taus=tuple(taus))
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
    lists = _sweep_lists(args, cfg)
    sigma = float((cfg.get("sweep") or {}).get("dwell_sigma", 0.0))
    trace = load_trace(args, cfg, base)
    keys = list(lists)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(lists[k] for k in keys))]
    points.sort(key=lambda p: tuple(p[k] for k in keys))
    reports, extra = [], []
    for point in points:
        rep = run(_point_config(sim, point, sigma), trace, verbose=args.verbose)
        log.info("%s hit=%.4f", point, rep.cache_hit_probability)
        reports.append(rep)
        extra.append({k: v for k, v in point.items() if k in ("dwell_mu", "path_skip")})
    out = _out(args)
    _write(out / "results.csv", reports_to_csv(reports, extra if any(extra) else None))
    _write(out / "reports.json", _json([{"point": p, "report": r.to_dict()} for p, r in zip(points, reports)]))


def cmd_optimize(args, cfg, base) -> None:
    ocfg = dict(cfg.get("optimize") or {})
    grid = _floats(args.grid) if args.grid else [float(g) for g in ocfg.get("grid", [])]
    if not grid:
        raise UsageError("threshold grid is empty")
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise UsageError("grid values must lie in [0, 1]")
    objective = args.objective or ocfg.get("objective", "hit_probability")
    if objective not in OBJECTIVES:
        raise UsageError(f"unknown objective {objective!r}")
    n_positions = args.n_positions or ocfg.get("n_positions")
    seeds = _ints(args.seeds) if args.seeds else ocfg.get("seeds")
    sim = sim_config(cfg, args)
    trace = load_trace(args, cfg, base)
    res = optimize_thresholds(sim, trace, grid, objective, n_positions, seeds)
    out = _out(args)
    _write(out / "best_profile.json", _json({"taus": list(res.profile.taus), "objective": objective, "value": res.best_value}))
    rows = res.surface_rows()
    for r in rows:
        r["value"] = repr(r["value"])
    _write(out / "surface.csv", _csv(rows, list(rows[0])))


def cmd_generate_trace(args, cfg, base) -> None:
    if args.preset:
        spec = synthetic_spec({"preset": args.preset, **({"n_cars": args.n_cars} if args.n_cars else {})})
    else:
        syn = dict((cfg.get("trace") or {}).get("synthetic") or {})
        if not syn:
            raise UsageError("generate-trace needs --preset or trace.synthetic in the config")
        if args.n_cars:
            syn["n_cars"] = args.n_cars
        spec = synthetic_spec(syn)
    seed = args.seed if args.seed is not None else int(((cfg.get("trace") or {}).get("synthetic") or {}).get("seed", 0))
    paths = generate_synthetic_trace(spec, seed)
    buf = io.StringIO()
    write_coverage_events(sorted(events_from_paths(paths), key=lambda e: (e.t_enter, e.car_id)), buf)
    out = _out(args)
    _write(out / args.output, buf.getvalue())


# entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="override the seed")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. simulation.c_hat=0.2")

    p = _Parser(prog="richcache", description="Mobility-aware edge prefetching toolkit", parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    a = sub.add_parser("analyze-trace", parents=[common], help="dwell statistics and significant paths")
    a.add_argument("--trace", help="coverage-event CSV")
    a.add_argument("--positions", help="position-sample CSV (needs --layout)")
    a.add_argument("--layout", help="EN layout CSV")
    a.add_argument("--bin-width", type=float)
    a.add_argument("--fast-slow-boundary", type=float)
    a.add_argument("--path-len", type=int)
    a.add_argument("--min-cars", type=int)
    a.set_defaults(func=cmd_analyze_trace)

    pl = sub.add_parser("plan", parents=[common], help="download probabilities and a prefetch plan")
    pl.add_argument("--stats", help="trace_stats.json written by analyze-trace")
    pl.add_argument("--path", help="comma-separated EN sequence")
    pl.add_argument("--taus", help="comma-separated thresholds, one per EN position")
    pl.add_argument("--n-chunks", type=int)
    pl.add_argument("--capacity", type=int, help="cache size in chunks")
    pl.set_defaults(func=cmd_plan)

    o = sub.add_parser("optimize-thresholds", parents=[common], help="exhaustive threshold search")
    o.add_argument("--trace", help="coverage-event CSV")
    o.add_argument("--grid", help="comma-separated candidate thresholds")
    o.add_argument("--n-positions", type=int)
    o.add_argument("--objective", help=f"one of {sorted(OBJECTIVES)}")
    o.add_argument("--seeds", help="comma-separated seeds to average over")
    o.set_defaults(func=cmd_optimize, positions=None)

    s = sub.add_parser("simulate", parents=[common], help="simulation sweep")
    s.add_argument("--trace", help="coverage-event CSV")
    s.add_argument("--policies", help="comma-separated: rich,netpredict,pop")
    s.add_argument("--taus", help="comma-separated thresholds for RICH")
    s.add_argument("--c-hat", help="comma-separated normalized cache sizes")
    s.add_argument("--seeds", help="comma-separated seeds")
    s.add_argument("--dwell-mu", help="comma-separated dwell-error means (s)")
    s.add_argument("--path-skip", help="comma-separated skipped-path fractions")
    s.set_defaults(func=cmd_simulate, positions=None)

    g = sub.add_parser("generate-trace", parents=[common], help="synthetic coverage trace")
    g.add_argument("--preset", help=f"one of {sorted(PRESETS)}")
    g.add_argument("--n-cars", type=int)
    g.add_argument("--output", default="trace.csv", help="file name inside --out-dir")
    g.set_defaults(func=cmd_generate_trace)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if not args.command:
            raise UsageError("a subcommand is required (see --help)")
        cfg, base = load_config(args.config)
        apply_overrides(cfg, args.set)
        args.func(args, cfg, base)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TraceError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
