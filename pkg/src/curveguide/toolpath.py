"""Finishing toolpaths over machining areas.

Two strategies: parallel vertical planes clipped to the area, and morphing
between the two guides of the area. Passes are sampled densely on the surface
(cutter-contact points) and linearized into G1 blocks under a chordal
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

from .curvenet import ComposedArea, MachiningArea
from .errors import DegenerateInputError, EmptyProgramError, InvalidInputError
from .geometry import FeatureModel, Point3, as_points, perp, points_at_stations, unit2


@dataclass(frozen=True)
class Tool:
    ball_radius: float = 2.0

    def __post_init__(self):
        if not self.ball_radius > 0:
            raise InvalidInputError("tool radius must be > 0")


@dataclass(frozen=True)
class StrategyParams:
    chordal_tolerance: float = 0.01
    cusp_height: float = 0.01
    sweep: str = "zigzag"
    overrun: float = 0.0
    feed_set_point: float = 6000.0  # mm/min
    sample_step: float = 0.2  # mm between dense pass samples

    def __post_init__(self):
        if not self.chordal_tolerance > 0:
            raise InvalidInputError("chordal tolerance must be > 0")
        if not self.cusp_height > 0:
            raise InvalidInputError("cusp height must be > 0")
        if self.sweep not in ("zigzag", "one-way"):
            raise InvalidInputError(f"sweep must be 'zigzag' or 'one-way', got {self.sweep!r}")
        if self.overrun < 0:
            raise InvalidInputError("overrun must be >= 0")
        if not self.feed_set_point > 0:
            raise InvalidInputError("feed set point must be > 0")
        if not self.sample_step > 0:
            raise InvalidInputError("sample step must be > 0")

    def check_tool(self, tool: Tool) -> None:
        if self.cusp_height >= tool.ball_radius:
            raise InvalidInputError(
                f"cusp height {self.cusp_height} must be smaller than the tool radius {tool.ball_radius}")


def stepover_from_cusp(tool: Tool, cusp: float) -> float:
    """Pass spacing leaving scallop height ``cusp`` on a plane: ``2 sqrt(2 R h - h^2)``."""
    R = tool.ball_radius
    if not (0.0 < cusp < R):
        raise InvalidInputError(f"cusp height must lie in (0, {R}), got {cusp}")
    return 2.0 * math.sqrt(2.0 * R * cusp - cusp * cusp)


# ---------------------------------------------------------------------------
# program


@dataclass(frozen=True)
class IsoBlock:
    start: Point3
    end: Point3
    feed_set: float

    def __post_init__(self):
        if tuple(self.start) == tuple(self.end):
            raise DegenerateInputError("zero-length block")
        if not self.feed_set > 0:
            raise InvalidInputError("feed must be > 0")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(tuple(self.end), tuple(self.start))))


class IsoProgram:
    """Linear-move program organized as passes of connected G1 blocks.

    ``passes`` holds one ``(k, 3)`` vertex array per pass; the blocks of a pass
    join consecutive vertices. ``areas`` lists pass-index ranges per elementary
    area. ``dense`` optionally keeps the source polylines the passes were
    linearized from.
    """

    def __init__(self, passes: Sequence[np.ndarray], feed_set: float, areas=None, header=None, dense=None):
        self.passes = [np.asarray(p, dtype=float) for p in passes]
        if not self.passes:
            raise EmptyProgramError("program has no passes")
        for p in self.passes:
            if p.ndim != 2 or p.shape[1] != 3 or len(p) < 2:
                raise InvalidInputError("each pass needs at least 2 vertices")
            if np.any(np.linalg.norm(np.diff(p, axis=0), axis=1) <= 0.0):
                raise DegenerateInputError("zero-length block in pass")
        if not feed_set > 0:
            raise InvalidInputError("feed must be > 0")
        self.feed_set = float(feed_set)
        self.areas = [tuple(a) for a in (areas or [(0, len(self.passes))])]
        self.header = dict(header or {})
        self.dense = dense

    # block views
    @property
    def block_counts(self) -> np.ndarray:
        return np.array([len(p) - 1 for p in self.passes])

    @property
    def block_count(self) -> int:
        return int(self.block_counts.sum())

    @property
    def pass_ranges(self) -> list[tuple[int, int]]:
        ends = np.cumsum(self.block_counts)
        starts = ends - self.block_counts
        return [(int(a), int(b)) for a, b in zip(starts, ends)]

    def block_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        starts = np.concatenate([p[:-1] for p in self.passes])
        ends = np.concatenate([p[1:] for p in self.passes])
        return starts, ends

    def block_lengths(self) -> np.ndarray:
        s, e = self.block_arrays()
        return np.linalg.norm(e - s, axis=1)

    @property
    def path_length(self) -> float:
        return float(self.block_lengths().sum())

    @property
    def blocks(self) -> list[IsoBlock]:
        s, e = self.block_arrays()
        return [IsoBlock(Point3(*a), Point3(*b), self.feed_set) for a, b in zip(s, e)]

    def block_area_index(self) -> np.ndarray:
        """Elementary-area index of every block."""
        per_pass = np.zeros(len(self.passes), dtype=int)
        for i, (a, b) in enumerate(self.areas):
            per_pass[a:b] = i
        return np.repeat(per_pass, self.block_counts)

    def __eq__(self, other):
        if not isinstance(other, IsoProgram):
            return NotImplemented
        return (self.feed_set == other.feed_set and self.areas == other.areas and self.header == other.header
                and len(self.passes) == len(other.passes)
                and all(np.array_equal(a, b) for a, b in zip(self.passes, other.passes)))

    __hash__ = object.__hash__

    # serialization
    def to_json(self) -> dict:
        return {
            "feed_set": self.feed_set,
            "header": self.header,
            "areas": [list(a) for a in self.areas],
            "passes": [p.tolist() for p in self.passes],
        }

    @classmethod
    def from_json(cls, doc) -> "IsoProgram":
        return cls(doc["passes"], doc["feed_set"], [tuple(a) for a in doc["areas"]], doc.get("header"))

    def to_gcode(self) -> str:
        lines = ["(curveguide finishing program)"]
        for key, value in sorted(self.header.items()):
            lines.append(f"({key}={value})")
        lines.append("G21 G90")
        n = 0
        feed = f"{self.feed_set:.4f}".rstrip("0").rstrip(".")
        for p in self.passes:
            x, y, z = p[0]
            lines.append(f"G0 X{x:.4f} Y{y:.4f} Z{z:.4f}")
            for x, y, z in p[1:]:
                n += 1
                lines.append(f"N{n} G1 X{x:.4f} Y{y:.4f} Z{z:.4f} F{feed}")
        lines.append("M30")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_gcode(cls, text: str) -> "IsoProgram":
        """Parse the G0/G1 dialect written by :meth:`to_gcode` (4-decimal coordinates)."""
        passes, cur, feed = [], None, None
        for raw in text.splitlines():
            words = raw.split()
            if not words or raw.startswith("("):
                continue
            if words[0].startswith("N"):
                words = words[1:]
            if words[0] not in ("G0", "G1"):
                continue
            vals = {w[0]: float(w[1:]) for w in words[1:]}
            pt = [vals["X"], vals["Y"], vals["Z"]]
            if words[0] == "G0":
                if cur:
                    passes.append(cur)
                cur = [pt]
            else:
                feed = vals.get("F", feed)
                cur.append(pt)
        if cur:
            passes.append(cur)
        if feed is None:
            raise EmptyProgramError("no G1 blocks found")
        return cls(passes, feed)


def concat_programs(programs: Sequence[IsoProgram], header=None) -> IsoProgram:
    passes, areas, dense = [], [], []
    for prog in programs:
        base = len(passes)
        passes.extend(prog.passes)
        areas.extend((a + base, b + base) for a, b in prog.areas)
        dense.extend(prog.dense or [None] * len(prog.passes))
    return IsoProgram(passes, programs[0].feed_set, areas, header or programs[0].header, dense)


# ---------------------------------------------------------------------------
# linearization


def _segment_distances(pts: np.ndarray, i: int, w: int) -> np.ndarray:
    """Max deviation of interior points from chords ``[i, i + 1 .. i + w]``."""
    seg = pts[i:i + w + 1]
    a = seg[0]
    ab = seg[1:] - a  # (w, 3) chords
    ap = seg[1:] - a  # (w, 3) interior candidates
    L2 = np.einsum("ij,ij->i", ab, ab)
    # t[j, m] projection of point m onto chord j
    t = (ab @ ap.T) / np.maximum(L2, 1e-300)[:, None]
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab[:, None, :]
    d = np.linalg.norm(seg[1:][None, :, :] - proj, axis=2)
    mask = np.arange(w)[None, :] < np.arange(w)[:, None]
    d = np.where(mask, d, 0.0)
    return d.max(axis=1)


def linearize_indices(points, tol: float) -> np.ndarray:
    """Greedy chord subdivision: indices of kept vertices.

    From each kept vertex the chord is extended vertex by vertex until some
    intermediate dense point deviates more than ``tol``; the last admissible
    chord is kept.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    keep = [0]
    i = 0
    while i < n - 1:
        w = 64
        while True:
            w_eff = min(w, n - 1 - i)
            dev = _segment_distances(pts, i, w_eff)
            bad = np.nonzero(dev > tol)[0]
            if bad.size:
                j = i + int(bad[0])  # chord to i + bad[0] + 1 fails
                break
            if w_eff < w:
                j = n - 1
                break
            w *= 4
        j = max(j, i + 1)
        keep.append(j)
        i = j
    return np.array(keep)


def linearize(points, chordal_tolerance: float, feed_set: float = 6000.0) -> list[IsoBlock]:
    """Longest-chord G1 blocks within ``chordal_tolerance`` of a dense polyline."""
    pts = as_points(points)
    if len(pts) < 2:
        raise InvalidInputError("need at least 2 points")
    keep_pts = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 0])
    pts = pts[keep_pts]
    if len(pts) < 2:
        raise DegenerateInputError("all points coincide")
    idx = linearize_indices(pts, chordal_tolerance)
    return [IsoBlock(Point3(*pts[a]), Point3(*pts[b]), feed_set) for a, b in zip(idx[:-1], idx[1:])]


def _linearized(dense: np.ndarray, tol: float) -> np.ndarray:
    return dense[linearize_indices(dense, tol)]


# ---------------------------------------------------------------------------
# strategies


def _dense_stations(feature: FeatureModel, step: float) -> np.ndarray:
    lo, hi = feature.station_range
    n = max(2, int(math.ceil((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


def _header(tool: Tool, params: StrategyParams, strategy: str) -> dict:
    h = {"strategy": strategy, "ball_radius": tool.ball_radius}
    h.update({k: v for k, v in asdict(params).items()})
    return h


def _scallop_estimate(R: float, gap, sagitta):
    """Flat-section scallop of a chord ``gap`` plus the convex bulge of the surface under it."""
    gap = np.asarray(gap, dtype=float)
    flat = R - np.sqrt(np.maximum(R * R - gap * gap / 4.0, 0.0))
    return flat + np.maximum(sagitta, 0.0)


def max_gap(R: float, cusp: float, curvature: float = 0.0) -> float:
    """Largest chord between contacts keeping the scallop estimate within ``cusp``
    on a section with convex curvature ``curvature`` (sagitta ~ gap^2 k / 8)."""
    lo, hi = 0.0, 2.0 * R
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _scallop_estimate(R, mid, mid * mid * curvature / 8.0) <= cusp:
            lo = mid
        else:
            hi = mid
    return lo


def morph_passes(feature: FeatureModel, area: MachiningArea, tool: Tool, params: StrategyParams,
                 skip_lower: bool = False, allow_single: bool = True) -> list[np.ndarray]:
    """Dense pass polylines morphing from the lower to the upper guide.

    The pass count is the smallest keeping every adjacent pair within one
    stepover (3D distance at every dense station); where the surface bulges
    between two passes the allowed distance shrinks accordingly. With
    ``allow_single`` a strip narrower than one stepover gets one centre pass;
    with ``skip_lower`` the pass on the lower guide is omitted (already cut by
    the previous area).
    """
    params.check_tool(tool)
    R, h = tool.ball_radius, params.cusp_height
    w = stepover_from_cusp(tool, h)
    st = _dense_stations(feature, params.sample_step)
    lo = points_at_stations(area.lower, st, feature.direction)
    hi = points_at_stations(area.upper, st, feature.direction)
    surf = feature.surface
    width = np.linalg.norm(surf.project(hi) - surf.project(lo), axis=1).max()
    if allow_single and not skip_lower and width <= w:
        return [surf.project(0.5 * (lo + hi))]
    n = max(2, int(math.ceil(width / w - 1e-12)) + 1)
    while True:
        s = np.linspace(0.0, 1.0, n)
        grid = surf.project(lo[None, :, :] + s[:, None, None] * (hi - lo)[None, :, :])
        gap = np.linalg.norm(np.diff(grid, axis=0), axis=2)
        mid = 0.5 * (grid[1:] + grid[:-1])
        sag = surf.height(mid[..., 0], mid[..., 1]) - mid[..., 2]
        if np.max(_scallop_estimate(R, gap, sag)) <= h * (1.0 + 1e-12):
            break
        n += 1
    passes = list(grid)
    return passes[1:] if skip_lower else passes


def _mean_z(curve, feature) -> float:
    st = _dense_stations(feature, 2.0)
    return float(points_at_stations(curve, st, feature.direction)[:, 2].mean())


def _apply_sweep(passes: list[np.ndarray], dense: list, params: StrategyParams):
    if params.sweep == "zigzag":
        passes = [p[::-1] if i % 2 else p for i, p in enumerate(passes)]
        dense = [d[::-1] if (i % 2 and d is not None) else d for i, d in enumerate(dense)]
    return passes, dense


def _finish(dense: list[np.ndarray], params: StrategyParams, header: dict, areas, upward_flip: bool) -> IsoProgram:
    passes = [_linearized(d, params.chordal_tolerance) for d in dense]
    if upward_flip:
        passes, dense = passes[::-1], dense[::-1]
        total = len(passes)
        areas = [(total - b, total - a) for a, b in areas[::-1]]
    passes, dense = _apply_sweep(passes, dense, params)
    return IsoProgram(passes, params.feed_set_point, areas, header, dense)


def guidance_toolpath(feature: FeatureModel, area: MachiningArea, tool: Tool = Tool(),
                      params: StrategyParams = StrategyParams()) -> IsoProgram:
    """Morphing (guidance-curve) program over one elementary area."""
    dense = morph_passes(feature, area, tool, params)
    flip = _mean_z(area.upper, feature) < _mean_z(area.lower, feature)
    return _finish(dense, params, _header(tool, params, "guidance"), [(0, len(dense))], flip)


def program_for_composed(feature: FeatureModel, composed: ComposedArea, tool: Tool = Tool(),
                         params: StrategyParams = StrategyParams(), cache: dict | None = None) -> IsoProgram:
    """Guidance programs of all elementary areas, B1 side first.

    Shared guides are cut once: every area after the first omits its lower
    guide pass. ``cache`` (optional dict) memoizes linearized passes per area.
    """
    if len(composed) == 1:
        return guidance_toolpath(feature, composed.areas[0], tool, params)
    passes, dense, areas = [], [], []
    for i, area in enumerate(composed.areas):
        key = (id(area.lower), id(area.upper), i > 0, params, tool)
        hit = cache.get(key) if cache is not None else None
        if hit is None:
            d = morph_passes(feature, area, tool, params, skip_lower=i > 0, allow_single=False)
            lin = [_linearized(p, params.chordal_tolerance) for p in d]
            hit = (area, d, lin)
            if cache is not None:
                cache[key] = hit
        _, d, lin = hit
        areas.append((len(passes), len(passes) + len(lin)))
        passes.extend(lin)
        dense.extend(d)
    flip = _mean_z(composed.guides[-1], feature) < _mean_z(composed.guides[0], feature)
    if flip:
        passes, dense = passes[::-1], dense[::-1]
        total = len(passes)
        areas = [(total - b, total - a) for a, b in areas[::-1]]
    passes, dense = _apply_sweep(passes, dense, params)
    header = _header(tool, params, "guidance")
    header["areas"] = len(composed)
    return IsoProgram(passes, params.feed_set_point, areas, header, dense)


def _area_polygon(feature: FeatureModel, area: MachiningArea, step: float, overrun: float) -> Polygon:
    st = _dense_stations(feature, step)
    d = feature.direction
    lo = points_at_stations(area.lower, st, d)[:, :2]
    hi = points_at_stations(area.upper, st, d)[:, :2]
    if overrun > 0:
        lo = np.vstack([lo[0] - overrun * d, lo, lo[-1] + overrun * d])
        hi = np.vstack([hi[0] - overrun * d, hi, hi[-1] + overrun * d])
    poly = Polygon(np.vstack([lo, hi[::-1]]))
    if not poly.is_valid:
        poly = shapely.make_valid(poly)
    return poly


def parallel_planes_toolpath(feature: FeatureModel, area: MachiningArea, basic_dir=None, tool: Tool = Tool(),
                             params: StrategyParams = StrategyParams()) -> IsoProgram:
    """Parallel vertical planes along ``basic_dir`` clipped to the area.

    Plane spacing is uniform and chosen so the 3D distance between adjacent
    passes, including the surface slope across the planes, stays within one
    stepover. Every clipped piece is its own pass (tool entrance and exit).
    """
    params.check_tool(tool)
    w = stepover_from_cusp(tool, params.cusp_height)
    u = unit2(feature.direction if basic_dir is None else basic_dir)
    v = perp(u)
    poly = _area_polygon(feature, area, params.sample_step, params.overrun)
    coords = np.asarray(poly.exterior.coords) if isinstance(poly, Polygon) else np.asarray(
        poly.convex_hull.exterior.coords)
    cu, cv = coords @ u, coords @ v
    vmin, vmax = cv.min(), cv.max()
    # surface slope across the planes
    gx = np.linspace(coords[:, 0].min(), coords[:, 0].max(), 120)
    gy = np.linspace(coords[:, 1].min(), coords[:, 1].max(), 120)
    X, Y = np.meshgrid(gx, gy)
    surf = feature.surface
    fx, fy = surf.gradient(X, Y)
    fv = fx * v[0] + fy * v[1]
    slope = np.max(np.hypot(1.0, fv))
    # convex curvature of the sections across the planes
    eps = 1e-3
    fvv = (surf.height(X + eps * v[0], Y + eps * v[1]) - 2.0 * surf.height(X, Y)
           + surf.height(X - eps * v[0], Y - eps * v[1])) / eps ** 2
    kappa = float(np.max(np.maximum(-fvv, 0.0) / (1.0 + fv * fv) ** 1.5))
    gap = w if kappa <= 1e-9 else min(w, max_gap(tool.ball_radius, params.cusp_height, kappa))
    n_lines = max(2, int(math.ceil((vmax - vmin) * slope / gap - 1e-12)) + 1)
    # inset by a hair so planes on a straight guide still hit the polygon
    eps = 1e-9 * max(1.0, vmax - vmin)
    levels = np.linspace(vmin + eps, vmax - eps, n_lines)
    u0, u1 = cu.min() - 1.0, cu.max() + 1.0
    dense, line_of = [], []
    for k, lv in enumerate(levels):
        line = LineString([u0 * u + lv * v, u1 * u + lv * v])
        parts = _line_parts(poly.intersection(line))
        if len(parts) > 1:
            # a plane running along a straight guide yields one piece per polygon edge
            parts = _line_parts(shapely.line_merge(shapely.MultiLineString(parts)))
        pieces = [g for g in parts if g.length > 1e-6]
        pieces.sort(key=lambda g: min(np.asarray(g.coords) @ u))
        for g in pieces:
            a, b = np.asarray(g.coords)[[0, -1]]
            if (b - a) @ u < 0:
                a, b = b, a
            m = max(2, int(math.ceil(np.linalg.norm(b - a) / params.sample_step)) + 1)
            xy = a + np.linspace(0.0, 1.0, m)[:, None] * (b - a)
            z = feature.surface.z(xy[:, 0], xy[:, 1])
            dense.append(np.column_stack([xy, z]))
            line_of.append(k)
    if not dense:
        raise EmptyProgramError("parallel planes do not intersect the area")
    passes = [_linearized(d, params.chordal_tolerance) for d in dense]
    if _mean_z(area.upper, feature) < _mean_z(area.lower, feature):
        passes, dense, line_of = passes[::-1], dense[::-1], line_of[::-1]
        line_of = [n_lines - 1 - k for k in line_of]
    if params.sweep == "zigzag":
        rev = [bool(k % 2) for k in line_of]
        passes = [p[::-1] if r else p for p, r in zip(passes, rev)]
        dense = [d[::-1] if r else d for d, r in zip(dense, rev)]
    header = _header(tool, params, "parallel-planes")
    header["basic_dir"] = [float(u[0]), float(u[1])]
    return IsoProgram(passes, params.feed_set_point, [(0, len(passes))], header, dense)


def _line_parts(geom):
    if geom.is_empty:
        return []
    if geom.geom_type == "LineString":
        return [geom]
    if hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(_line_parts(g))
        return out
    return []
