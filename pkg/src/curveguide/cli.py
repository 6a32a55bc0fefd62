"""Command line driver: ``curveguide <command> [flags]``.

All relative paths are resolved against ``--out DIR``. Exit codes: 0 success,
2 invalid input, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

from . import curvenet, perfview
from .curvenet import ComposedArea, CurveNet, compose_boundary_direction, compose_median, single_area
from .errors import CurveGuideError, InvalidInputError
from .feedsim import MachineKinematics, SimResult, simulate
from .fixtures import make_feature
from .geometry import FeatureModel
from .toolpath import (IsoProgram, StrategyParams, Tool, guidance_toolpath, parallel_planes_toolpath,
                       program_for_composed, stepover_from_cusp)

log = logging.getLogger("curveguide")

SET_POINTS = (2000.0 / 60.0, 4000.0 / 60.0, 6000.0 / 60.0)  # 2/4/6 m/min in mm/s

DEFAULT_CONFIG = {
    "feature": {"fixture": "master-like", "params": {}},
    "tool": {"ball_radius": 2.0},
    "strategy": {"chordal_tolerance": 0.01, "cusp_height": 0.01, "sweep": "zigzag", "overrun": 0.0},
    "kinematics": MachineKinematics().to_json(),
    "set_points": list(SET_POINTS),
    "net": {"stop_eps": curvenet.DEFAULT_STOP_EPS, "max_iters": curvenet.DEFAULT_MAX_ITERS},
    "boundary_direction": {"K": [0.25, 0.75], "P": 5.0, "starts": ["B1", "B2"]},
    "median": {"K": [0.25, 0.5, 0.75], "P": [5.0, 10.0, 20.0], "directions": ["toward-median", "from-median"],
               "levels": [1, "max"], "extra": [{"K": 0.25, "P": 5.0, "direction": "from-median", "levels": 6}]},
    "method": {"P0": 5.0, "K": 0.75, "K_refine": [0.7, 0.75, 0.8]},
    "write_programs": True,
}


# ---------------------------------------------------------------------------
# io helpers


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_atomic(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_json(path: Path, what: str):
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: expected {path}")
    with open(path) as fh:
        return json.load(fh)


def _resolve(out: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else out / q


def load_feature(out: Path, p: str) -> FeatureModel:
    return FeatureModel.from_json(read_json(_resolve(out, p), "feature file"))


def _merge(base: dict, over: dict) -> dict:
    res = copy.deepcopy(base)
    for k, v in over.items():
        res[k] = _merge(res[k], v) if isinstance(v, dict) and isinstance(res.get(k), dict) else v
    return res


def validate_config(cfg: dict) -> dict:
    """Check ranges early so the user gets an actionable message."""
    tool = Tool(**cfg["tool"])
    params = StrategyParams(**cfg["strategy"])
    params.check_tool(tool)
    MachineKinematics.from_json(cfg["kinematics"])
    if not cfg["set_points"] or any(not float(v) > 0 for v in cfg["set_points"]):
        raise InvalidInputError("set points must be > 0")
    Ks = list(cfg["boundary_direction"]["K"]) + list(cfg["median"]["K"]) + [cfg["method"]["K"]]
    Ks += list(cfg["method"]["K_refine"]) + [e["K"] for e in cfg["median"].get("extra", [])]
    for K in Ks:
        curvenet.check_ratio(K)
    Ps = [cfg["boundary_direction"]["P"], cfg["method"]["P0"]] + list(cfg["median"]["P"])
    for P in Ps:
        if not float(P) > 0:
            raise InvalidInputError(f"step P must be > 0, got {P}")
    return cfg


def load_config(path: str | None, out: Path) -> dict:
    cfg = DEFAULT_CONFIG
    if path:
        cfg = _merge(DEFAULT_CONFIG, read_json(_resolve(out, path) if not Path(path).exists() else Path(path),
                                               "config file"))
    return validate_config(cfg)


def _strategy(args) -> tuple[Tool, StrategyParams]:
    tool = Tool(args.tool_radius)
    params = StrategyParams(args.chordal, args.cusp, args.sweep, args.overrun, args.feed)
    params.check_tool(tool)
    return tool, params


# ---------------------------------------------------------------------------
# commands


def cmd_make_feature(args) -> list[Path]:
    params = {}
    for item in args.param or []:
        k, _, v = item.partition("=")
        if not _:
            raise InvalidInputError(f"parameter {item!r} must look like name=value")
        params[k] = int(v) if v.lstrip("-").isdigit() else float(v)
    feature = make_feature(args.name, **params)
    feature.validate()
    return [write_atomic(_resolve(args.out, args.file or f"{args.name}.feature.json"), dumps(feature.to_json()))]


def cmd_net(args) -> list[Path]:
    feature = load_feature(args.out, args.feature)
    b = {"B1": feature.boundary1, "B2": feature.boundary2}
    other = "B2" if args.start == "B1" else "B1"
    net = curvenet.build_net(b[args.start], b[other], args.K, args.P, feature, args.stop_eps, args.max_iters,
                             (args.start, other))
    return [write_atomic(_resolve(args.out, args.file or "net.json"), dumps(net.to_json()))]


def build_decomposition(feature: FeatureModel, kind: str, K=None, P=5.0, j=None, start="B1",
                        direction="from-median", levels=1, stop_eps=curvenet.DEFAULT_STOP_EPS,
                        max_iters=curvenet.DEFAULT_MAX_ITERS, net: CurveNet | None = None) -> ComposedArea:
    if kind == "single":
        return single_area(feature)
    if kind == "boundary-direction":
        if net is None:
            b = {"B1": feature.boundary1, "B2": feature.boundary2}
            other = "B2" if start == "B1" else "B1"
            net = curvenet.build_net(b[start], b[other], K, P, feature, stop_eps, max_iters, (start, other))
        return compose_boundary_direction(net, len(net.interior) if j is None else j)
    if kind == "median":
        return compose_median(feature, K, P, direction, levels, stop_eps, max_iters)
    if kind == "method-4step":
        return curvenet.guidance_method(feature, P, 0.75 if K is None else K)
    raise InvalidInputError(f"unknown decomposition type {kind!r}")


def cmd_decompose(args) -> list[Path]:
    feature = load_feature(args.out, args.feature)
    if args.K is None and (args.type == "median" or (args.type == "boundary-direction" and not args.net)):
        raise InvalidInputError(f"--K is required for --type {args.type}")
    net = None
    if args.net:
        net = CurveNet.from_json(read_json(_resolve(args.out, args.net), "net file"))
    comp = build_decomposition(feature, args.type, args.K, args.P, args.j, args.start, args.direction, args.levels,
                               args.stop_eps, args.max_iters, net)
    return [write_atomic(_resolve(args.out, args.file or "areas.json"), dumps(comp.to_json()))]


def cmd_toolpath(args) -> list[Path]:
    feature = load_feature(args.out, args.feature)
    tool, params = _strategy(args)
    comp = single_area(feature) if not args.areas else ComposedArea.from_json(
        read_json(_resolve(args.out, args.areas), "areas file"))
    if args.strategy == "parallel-planes":
        if len(comp) != 1:
            raise InvalidInputError("parallel planes run on a single machining area")
        prog = parallel_planes_toolpath(feature, comp.areas[0], args.basic_dir, tool, params)
    else:
        prog = program_for_composed(feature, comp, tool, params)
    stem = args.file or "program"
    return [write_atomic(_resolve(args.out, f"{stem}.json"), dumps(prog.to_json())),
            write_atomic(_resolve(args.out, f"{stem}.nc"), prog.to_gcode())]


def _kinematics(args) -> MachineKinematics:
    if args.kinematics:
        return MachineKinematics.from_json(read_json(_resolve(args.out, args.kinematics), "kinematics file"))
    return MachineKinematics()


def cmd_simulate(args) -> list[Path]:
    prog = IsoProgram.from_json(read_json(_resolve(args.out, args.program), "program file"))
    sim = simulate(prog, _kinematics(args), args.set_point)
    return [write_atomic(_resolve(args.out, args.file or "sim.json"), dumps(sim.to_json()))]


def cmd_report(args) -> list[Path]:
    out = args.out
    if args.compare:
        reports = [perfview.PerfReport.from_json(read_json(_resolve(out, p), "report file")) for p in args.compare]
        rows = perfview.compare(reports)
        return [write_atomic(_resolve(out, args.file or "comparison.csv"), perfview.comparison_csv(rows))]
    if not args.program:
        raise InvalidInputError("report needs --program (or --compare)")
    prog = IsoProgram.from_json(read_json(_resolve(out, args.program), "program file"))
    sim = simulate(prog, _kinematics(args), args.set_point)
    feature = load_feature(out, args.feature) if args.feature else None
    band = perfview.BAND_STEPOVERS * stepover_from_cusp(Tool(args.tool_radius), args.cusp)
    rep = perfview.make_report(prog, sim, args.name, feature, band if feature else None, args.threshold)
    stem = args.file or "report"
    return _write_report_files(out, stem, prog, sim, rep)


def _write_report_files(out: Path, stem: str, prog: IsoProgram, sim: SimResult, rep: perfview.PerfReport):
    return [
        write_atomic(out / f"{stem}.json", dumps(rep.to_json())),
        write_atomic(out / f"{stem}.lengths.csv", rep.block_length_hist.to_csv()),
        write_atomic(out / f"{stem}.feeds.csv", rep.feed_hist.to_csv()),
        write_atomic(out / f"{stem}.feedmap.csv", perfview.feed_map_csv(sim, prog)),
        write_atomic(out / f"{stem}.feedmap.svg", perfview.feed_map_svg(sim, prog)),
    ]


# ---------------------------------------------------------------------------
# pipeline


def _cells(feature: FeatureModel, cfg: dict):
    """Yield (cell name, family, parameters, ComposedArea) for the experiment matrix."""
    net_opts = cfg["net"]
    yield "single", "single", {}, single_area(feature)
    bd = cfg["boundary_direction"]
    bmap = {"B1": feature.boundary1, "B2": feature.boundary2}
    for K in bd["K"]:
        for start in bd["starts"]:
            other = "B2" if start == "B1" else "B1"
            net = curvenet.build_net(bmap[start], bmap[other], K, bd["P"], feature, net_opts["stop_eps"],
                                     net_opts["max_iters"], (start, other))
            for j in range(1, len(net.interior) + 1):
                comp = compose_boundary_direction(net, j)
                yield (f"bd-K{K:g}-{start}-MA{j}", "boundary-direction",
                       {"K": K, "P": bd["P"], "start": start, "j": j}, comp)
    md = cfg["median"]
    done = set()
    specs = [(K, P, d, lv) for K in md["K"] for P in md["P"] for d in md["directions"] for lv in md["levels"]]
    specs += [(e["K"], e["P"], e["direction"], e["levels"]) for e in md.get("extra", [])]
    nets_cache = {}
    for K, P, d, lv in specs:
        key = (K, P, d)
        if key not in nets_cache:
            nets_cache[key] = curvenet.median_nets(feature, K, P, d, net_opts["stop_eps"], net_opts["max_iters"])
        nets = nets_cache[key]
        avail = min(len(nets[0].interior), len(nets[1].interior))
        levels = avail if lv == "max" else min(int(lv), avail)
        if (K, P, d, levels) in done:
            continue
        done.add((K, P, d, levels))
        comp = compose_median(feature, K, P, d, levels, nets=nets)
        yield (f"median-K{K:g}-P{P:g}-{d}-L{levels}", "median",
               {"K": K, "P": P, "direction": d, "levels": levels}, comp)
    mt = cfg["method"]
    for K in mt["K_refine"]:
        comp = curvenet.guidance_method(feature, mt["P0"], K)
        yield f"method-K{K:g}", "method-4step", {"K": K, "P0": mt["P0"]}, comp


def cmd_pipeline(args) -> list[Path]:
    out: Path = args.out
    cfg = load_config(args.config, out)
    t0 = time.perf_counter()
    fsrc = cfg["feature"]
    if "file" in fsrc:
        feature = load_feature(out, fsrc["file"])
    else:
        feature = make_feature(fsrc["fixture"], **fsrc.get("params", {}))
    feature.validate()
    tool, params = Tool(**cfg["tool"]), StrategyParams(**cfg["strategy"])
    kin = MachineKinematics.from_json(cfg["kinematics"])
    band = perfview.BAND_STEPOVERS * stepover_from_cusp(tool, params.cusp_height)
    written = [write_atomic(out / "config.json", dumps(cfg)),
               write_atomic(out / "feature.json", dumps(feature.to_json()))]
    rows, failures = [], []
    cache: dict = {}

    def run_cell(name, family, cell_params, make_program, comp=None):
        cdir = out / "cells" / name
        prog = make_program()
        if comp is not None:
            written.append(write_atomic(cdir / "areas.json", dumps(comp.to_json())))
        if cfg["write_programs"]:
            written.append(write_atomic(cdir / "program.nc", prog.to_gcode()))
        for sp in cfg["set_points"]:
            sim = simulate(prog, kin, sp)
            rep = perfview.make_report(prog, sim, name, feature, band,
                                       meta={"family": family, "params": cell_params,
                                             "areas": len(comp) if comp is not None else 1})
            tag = f"sp{sp * 60 / 1000:.0f}"
            written.append(write_atomic(cdir / f"report-{tag}.json", dumps(rep.to_json())))
            rows.append({"cell": name, "family": family, "params": cell_params,
                         "areas": len(comp) if comp is not None else 1, "truncated": bool(comp and comp.truncated),
                         "set_point": sp, "total_time_s": rep.total_time, "path_length_mm": rep.path_length,
                         "blocks": rep.block_count, "short_block_share": rep.short_block_share(1.0),
                         "slow_fraction": rep.slow_fraction, "band_slow_fraction": rep.band_slow_fraction})
        log.info("cell %s done (%.1fs)", name, time.perf_counter() - t0)

    def guarded(*a, **kw):
        try:
            run_cell(*a, **kw)
        except CurveGuideError as exc:
            failures.append({"cell": a[0], "error": str(exc)})
            log.error("cell %s failed: %s", a[0], exc)

    area0 = single_area(feature).areas[0]
    guarded("parallel-planes", "parallel-planes", {}, lambda: parallel_planes_toolpath(feature, area0, None, tool,
                                                                                       params))
    try:
        cells = list(_cells(feature, cfg))
    except CurveGuideError as exc:
        failures.append({"cell": "decompositions", "error": str(exc)})
        cells = []
    for name, family, cp, comp in cells:
        guarded(name, family, cp, lambda comp=comp: program_for_composed(feature, comp, tool, params, cache), comp)
    rows = _rank_rows(rows)
    summary = {"feature": feature.name, "cells": rows, "failures": failures, "set_points": cfg["set_points"]}
    written.append(write_atomic(out / "summary.json", dumps(summary)))
    written.append(write_atomic(out / "summary.csv", _summary_csv(rows)))
    log.info("pipeline finished in %.1fs", time.perf_counter() - t0)
    if failures:
        raise CurveGuideError(f"{len(failures)} pipeline cells failed; see summary.json")
    return written


def _rank_rows(rows: list[dict]) -> list[dict]:
    """Add time change vs the single area and the (slow_fraction, time) rank per set point."""
    out = []
    for sp in sorted({r["set_point"] for r in rows}):
        group = [r for r in rows if r["set_point"] == sp]
        base = next((r["total_time_s"] for r in group if r["cell"] == "single"), group[0]["total_time_s"])
        order = sorted(range(len(group)), key=lambda i: (group[i]["slow_fraction"], group[i]["total_time_s"]))
        for rank, i in enumerate(order, 1):
            group[i]["rank"] = rank
        for r in group:
            r["delta_time_pct"] = 100.0 * (r["total_time_s"] - base) / base
            out.append(r)
    return out


def _summary_csv(rows: list[dict]) -> str:
    import csv
    import io

    cols = ["cell", "family", "areas", "truncated", "set_point", "total_time_s", "delta_time_pct", "path_length_mm",
            "blocks", "short_block_share", "slow_fraction", "band_slow_fraction", "rank", "params"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**{k: r[k] for k in cols if k != "params"}, "params": json.dumps(r["params"], sort_keys=True)})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument parsing


def _add_strategy_flags(p):
    p.add_argument("--tool-radius", type=float, default=2.0)
    p.add_argument("--cusp", type=float, default=0.01, help="cusp height (mm)")
    p.add_argument("--chordal", type=float, default=0.01, help="chordal tolerance (mm)")
    p.add_argument("--sweep", choices=["zigzag", "one-way"], default="zigzag")
    p.add_argument("--overrun", type=float, default=0.0)
    p.add_argument("--feed", type=float, default=6000.0, help="programmed feed (mm/min)")


def _add_net_flags(p):
    p.add_argument("--stop-eps", type=float, default=curvenet.DEFAULT_STOP_EPS)
    p.add_argument("--max-iters", type=int, default=curvenet.DEFAULT_MAX_ITERS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curveguide", description="Guidance-curve decomposition and feed simulation")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (base for relative paths)")
        p.add_argument("--file", help="output file name (or stem)")

    p = sub.add_parser("make-feature", help="write a fixture feature as JSON")
    p.add_argument("name")
    p.add_argument("--param", action="append", help="fixture parameter name=value")
    common(p)
    p.set_defaults(func=cmd_make_feature)

    p = sub.add_parser("net", help="build a curve net between the boundaries")
    p.add_argument("--feature", required=True)
    p.add_argument("--K", type=float, required=True)
    p.add_argument("--P", type=float, default=5.0)
    p.add_argument("--start", choices=["B1", "B2"], default="B1")
    _add_net_flags(p)
    common(p)
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("decompose", help="compose machining areas")
    p.add_argument("--feature", required=True)
    p.add_argument("--type", choices=["single", "boundary-direction", "median", "method-4step"], required=True)
    p.add_argument("--K", type=float)
    p.add_argument("--P", type=float, default=5.0)
    p.add_argument("--j", type=int, help="intermediate curves kept (boundary-direction); default all")
    p.add_argument("--start", choices=["B1", "B2"], default="B1")
    p.add_argument("--direction", choices=["toward-median", "from-median"], default="from-median")
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--net", help="precomputed net JSON (boundary-direction)")
    _add_net_flags(p)
    common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("toolpath", help="generate a finishing program")
    p.add_argument("--feature", required=True)
    p.add_argument("--areas", help="composed area JSON (default: single area)")
    p.add_argument("--strategy", choices=["guidance", "parallel-planes"], default="guidance")
    p.add_argument("--basic-dir", type=float, nargs=2, help="plane direction for parallel planes")
    _add_strategy_flags(p)
    common(p)
    p.set_defaults(func=cmd_toolpath)

    p = sub.add_parser("simulate", help="feed-rate simulation of a program")
    p.add_argument("--program", required=True)
    p.add_argument("--set-point", type=float, default=100.0, help="mm/s")
    p.add_argument("--kinematics", help="machine kinematics JSON")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="performance report or comparison")
    p.add_argument("--program")
    p.add_argument("--feature")
    p.add_argument("--name", default="program")
    p.add_argument("--set-point", type=float, default=100.0, help="mm/s")
    p.add_argument("--kinematics")
    p.add_argument("--threshold", type=float, default=perfview.SLOW_THRESHOLD)
    p.add_argument("--tool-radius", type=float, default=2.0)
    p.add_argument("--cusp", type=float, default=0.01)
    p.add_argument("--compare", nargs="+", help="report JSON files to compare")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run the full experiment matrix")
    p.add_argument("--config", help="JSON config (merged over defaults)")
    common(p)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        for path in args.func(args):
            print(path)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CurveGuideError, FileNotFoundError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
