"""Performance viewer: block statistics, feed classification, feed maps and
comparison of strategies or decompositions."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curvenet import ComposedArea
from .errors import InvalidInputError
from .feedsim import MachineKinematics, SimResult, simulate
from .geometry import FeatureModel, points_at_stations
from .toolpath import IsoProgram, StrategyParams, Tool, program_for_composed, stepover_from_cusp

SCHEMA_VERSION = 1
LENGTH_BINS = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, math.inf)
SLOW_THRESHOLD = 0.95
BAND_STEPOVERS = 2.0
COLORS = {"green": "#2ca02c", "yellow": "#e6b800", "red": "#d62728"}


@dataclass
class Histogram:
    edges: list
    counts: list
    shares: list  # length-weighted
    labels: list

    def __post_init__(self):
        if len(self.counts) != len(self.labels) or len(self.shares) != len(self.labels):
            raise InvalidInputError("histogram arrays disagree in length")

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def to_json(self) -> dict:
        return {"edges": [_num(e) for e in self.edges], "labels": list(self.labels), "counts": list(self.counts),
                "length_shares": list(self.shares)}

    @classmethod
    def from_json(cls, doc) -> "Histogram":
        return cls([_unnum(e) for e in doc["edges"]], doc["counts"], doc["length_shares"], doc["labels"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count", "length_share"])
        for label, c, s in zip(self.labels, self.counts, self.shares):
            lo, hi = label.split("..")
            w.writerow([lo, hi, c, repr(s)])
        return buf.getvalue()


def _num(x):
    return "inf" if math.isinf(x) else x


def _unnum(x):
    return math.inf if x == "inf" else x


def _hist(values, weights, edges, labels) -> Histogram:
    idx = np.searchsorted(np.asarray(edges[1:-1]), values, side="right")
    nb = len(labels)
    counts = np.bincount(idx, minlength=nb)[:nb]
    w = np.bincount(idx, weights=weights, minlength=nb)[:nb]
    shares = w / w.sum()
    return Histogram(list(edges), [int(c) for c in counts], [float(s) for s in shares], labels)


def block_length_hist(program: IsoProgram, edges: Sequence[float] = LENGTH_BINS) -> Histogram:
    L = program.block_lengths()
    labels = [f"{_fmt(a)}..{_fmt(b)}" for a, b in zip(edges[:-1], edges[1:])]
    return _hist(L, L, list(edges), labels)


def _fmt(x) -> str:
    return "inf" if math.isinf(x) else f"{x:g}"


def feed_hist(sim: SimResult) -> Histogram:
    """Length-weighted classes of mean feed: 10% steps of the set point plus an exact-100% class."""
    frac = sim.mean_feed / sim.set_point
    idx = np.minimum(np.floor(frac * 10.0 + 1e-12), 9).astype(int)
    idx = np.where(frac >= 1.0 - 1e-9, 10, idx)
    edges = [k / 10 for k in range(11)] + [1.0]
    labels = [f"{k / 10:g}..{(k + 1) / 10:g}" for k in range(10)] + ["1..1"]
    counts = np.bincount(idx, minlength=11)
    w = np.bincount(idx, weights=sim.lengths, minlength=11)
    return Histogram(edges, [int(c) for c in counts], [float(s) for s in w / w.sum()], labels)


def slow_mask(sim: SimResult, threshold: float = SLOW_THRESHOLD) -> np.ndarray:
    return sim.mean_feed < threshold * sim.set_point


def slow_fraction(sim: SimResult, threshold: float = SLOW_THRESHOLD, mask=None) -> float:
    """Path-length share of blocks whose mean feed is below ``threshold`` of the set point."""
    L = sim.lengths if mask is None else sim.lengths[mask]
    if L.sum() <= 0:
        return 0.0
    slow = slow_mask(sim, threshold) if mask is None else slow_mask(sim, threshold)[mask]
    return float(L[slow].sum() / L.sum())


def boundary_band(program: IsoProgram, feature: FeatureModel, width: float) -> np.ndarray:
    """Blocks whose midpoint lies within ``width`` of either boundary (measured in the station plane)."""
    s, e = program.block_arrays()
    mid = 0.5 * (s + e)
    d = feature.direction
    lo, hi = feature.station_range
    st = np.clip(mid[:, :2] @ d, lo, hi)
    near = np.zeros(len(mid), dtype=bool)
    for b in (feature.boundary1, feature.boundary2):
        bp = points_at_stations(b, st, d)
        near |= np.linalg.norm(bp - mid, axis=1) <= width
    return near


def feed_map(sim: SimResult, program: IsoProgram) -> list[dict]:
    if len(sim) != program.block_count:
        raise InvalidInputError(f"simulation has {len(sim)} blocks, program {program.block_count}")
    s, e = program.block_arrays()
    mid = 0.5 * (s + e)
    frac = sim.mean_feed / sim.set_point
    return [{"i": i, "x": float(m[0]), "y": float(m[1]), "z": float(m[2]), "mean_feed": float(f * sim.set_point),
             "fraction": float(f)} for i, (m, f) in enumerate(zip(mid, frac))]


def feed_map_csv(sim: SimResult, program: IsoProgram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "x", "y", "z", "mean_feed", "fraction"])
    for r in feed_map(sim, program):
        w.writerow([r["i"], f"{r['x']:.4f}", f"{r['y']:.4f}", f"{r['z']:.4f}", f"{r['mean_feed']:.4f}",
                    f"{r['fraction']:.6f}"])
    return buf.getvalue()


def feed_color(fraction: float) -> str:
    if fraction >= 0.95:
        return "green"
    if fraction >= 0.60:
        return "yellow"
    return "red"


def feed_map_svg(sim: SimResult, program: IsoProgram, scale: float = 5.0) -> str:
    """Top view of the program, runs of equally classed blocks drawn as one polyline."""
    if len(sim) != program.block_count:
        raise InvalidInputError(f"simulation has {len(sim)} blocks, program {program.block_count}")
    s, e = program.block_arrays()
    pts = np.vstack([s, e])[:, :2]
    x0, y0 = pts.min(axis=0) - 1.0
    x1, y1 = pts.max(axis=0) + 1.0
    W, H = (x1 - x0) * scale, (y1 - y0) * scale
    frac = sim.mean_feed / sim.set_point
    colors = [feed_color(f) for f in frac]

    def xy(p):
        return f"{(p[0] - x0) * scale:.2f},{(y1 - p[1]) * scale:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
           f'viewBox="0 0 {W:.2f} {H:.2f}">',
           f'<rect width="100%" height="100%" fill="white"/>']
    for a, b in program.pass_ranges:
        k = a
        while k < b:
            m = k
            while m + 1 < b and colors[m + 1] == colors[k]:
                m += 1
            coords = " ".join([xy(s[k])] + [xy(e[i]) for i in range(k, m + 1)])
            out.append(f'<polyline points="{coords}" fill="none" stroke="{COLORS[colors[k]]}" stroke-width="1"/>')
            k = m + 1
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# reports


@dataclass
class PerfReport:
    name: str
    set_point: float
    total_time: float
    block_count: int
    path_length: float
    block_length_hist: Histogram
    feed_hist: Histogram
    slow_fraction: float
    band_slow_fraction: float | None = None
    per_area: list = field(default_factory=list)
    threshold: float = SLOW_THRESHOLD
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.slow_fraction <= 1.0:
            raise InvalidInputError("slow fraction outside [0, 1]")

    def short_block_share(self, limit: float = 1.0) -> float:
        """Count share of blocks shorter than ``limit`` (limit must be a bin edge)."""
        edges = self.block_length_hist.edges
        k = edges.index(limit)
        return sum(self.block_length_hist.counts[:k]) / self.block_count

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "set_point": self.set_point,
            "total_time_s": self.total_time,
            "block_count": self.block_count,
            "path_length_mm": self.path_length,
            "slow_threshold": self.threshold,
            "slow_fraction": self.slow_fraction,
            "band_slow_fraction": self.band_slow_fraction,
            "block_length_hist": self.block_length_hist.to_json(),
            "feed_hist": self.feed_hist.to_json(),
            "per_area": self.per_area,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc) -> "PerfReport":
        if doc.get("schema") != SCHEMA_VERSION:
            raise InvalidInputError(f"unsupported report schema {doc.get('schema')!r}")
        return cls(doc["name"], doc["set_point"], doc["total_time_s"], doc["block_count"], doc["path_length_mm"],
                   Histogram.from_json(doc["block_length_hist"]), Histogram.from_json(doc["feed_hist"]),
                   doc["slow_fraction"], doc["band_slow_fraction"], doc["per_area"], doc["slow_threshold"],
                   doc["meta"])

    def __eq__(self, other):
        if not isinstance(other, PerfReport):
            return NotImplemented
        return self.to_json() == other.to_json()


def make_report(program: IsoProgram, sim: SimResult, name: str = "program", feature: FeatureModel | None = None,
                band_width: float | None = None, threshold: float = SLOW_THRESHOLD, meta=None) -> PerfReport:
    """Summarize a simulated program. The boundary band needs ``feature`` and ``band_width``."""
    if len(sim) != program.block_count:
        raise InvalidInputError("simulation does not match program")
    band = None
    if feature is not None and band_width is not None:
        band = slow_fraction(sim, threshold, boundary_band(program, feature, band_width))
    area_of = program.block_area_index()
    per_area = []
    dur = sim.durations
    for k in range(len(program.areas)):
        m = area_of == k
        per_area.append({"area": k, "blocks": int(m.sum()), "time_s": float(dur[m].sum()),
                         "slow_fraction": slow_fraction(sim, threshold, m)})
    return PerfReport(name, sim.set_point, sim.total_time, program.block_count, program.path_length,
                      block_length_hist(program), feed_hist(sim), slow_fraction(sim, threshold), band, per_area,
                      threshold, dict(meta or {}))


def compare(reports: Sequence[PerfReport]) -> list[dict]:
    """Comparison rows in input order, with time change vs the first report and a
    lexicographic (slow_fraction, time) rank; ties keep input order."""
    if len(reports) < 2:
        raise InvalidInputError("compare needs at least 2 reports")
    sp = {r.set_point for r in reports}
    if len(sp) != 1:
        raise InvalidInputError(f"reports use different set points: {sorted(sp)}")
    base = reports[0].total_time
    order = sorted(range(len(reports)), key=lambda i: (reports[i].slow_fraction, reports[i].total_time))
    rank = {i: r + 1 for r, i in enumerate(order)}
    return [{"name": r.name, "set_point": r.set_point, "total_time_s": r.total_time,
             "delta_time_pct": 100.0 * (r.total_time - base) / base, "slow_fraction": r.slow_fraction,
             "band_slow_fraction": r.band_slow_fraction, "blocks": r.block_count, "rank": rank[i]}
            for i, r in enumerate(reports)]


def comparison_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["name", "set_point", "total_time_s", "delta_time_pct", "slow_fraction", "band_slow_fraction", "blocks",
            "rank"]
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in cols})
    return buf.getvalue()


def evaluate(feature: FeatureModel, composed: ComposedArea, tool: Tool = Tool(),
             params: StrategyParams = StrategyParams(), kin: MachineKinematics = MachineKinematics(),
             set_point: float = 100.0, name: str | None = None, cache: dict | None = None):
    """Program, simulation and report of one decomposition."""
    prog = program_for_composed(feature, composed, tool, params, cache)
    sim = simulate(prog, kin, set_point)
    band = BAND_STEPOVERS * stepover_from_cusp(tool, params.cusp_height)
    rep = make_report(prog, sim, name or composed.name, feature, band, meta={"areas": len(composed)})
    return prog, sim, rep


def rank_candidates(feature: FeatureModel, candidates: Sequence[ComposedArea], tool: Tool = Tool(),
                    params: StrategyParams = StrategyParams(), kin: MachineKinematics = MachineKinematics(),
                    set_point: float = 100.0):
    """Simulate every candidate; best by (slow_fraction, time), ties to the earlier one.

    Returns ``(best, rows, reports)``.
    """
    if not candidates:
        raise InvalidInputError("no candidates")
    reports = [evaluate(feature, c, tool, params, kin, set_point, name=c.name or f"candidate-{i}")[2]
               for i, c in enumerate(candidates)]
    best = min(range(len(reports)), key=lambda i: (reports[i].slow_fraction, reports[i].total_time))
    rows = compare(reports) if len(reports) > 1 else [
        {"name": reports[0].name, "set_point": set_point, "total_time_s": reports[0].total_time,
         "delta_time_pct": 0.0, "slow_fraction": reports[0].slow_fraction,
         "band_slow_fraction": reports[0].band_slow_fraction, "blocks": reports[0].block_count, "rank": 1}]
    return candidates[best], rows, reports
