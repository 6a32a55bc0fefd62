"""Intermediate curves, curve nets and composed machining areas.

An intermediate curve between guides A and B is built station by station:
on every station plane the point ``A_m + K (B_m - A_m)`` is formed, dropped
onto the surface, and a degree-5 spline is interpolated through the sequence.
Nets repeat the construction toward a target guide until the newest curve
comes within ``stop_eps`` of (or crosses) the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GeometryError, InvalidInputError, OutOfRangeError
from .geometry import (
    FeatureModel,
    SplineCurve,
    fit_spline,
    inflection_stations,
    min_distance_at,
    min_radius,
    points_at_stations,
)

DEFAULT_STOP_EPS = 0.4
DEFAULT_MAX_ITERS = 50
CHECK_STEP = 0.5  # mm between stations used for crossing / proximity checks


def check_ratio(K) -> float:
    K = float(K)
    if not (0.0 < K < 1.0):
        raise InvalidInputError(f"K must lie in the open interval (0, 1), got {K}")
    return K


@dataclass(frozen=True)
class StepP:
    """Station spacing with optional per-interval overrides ``(lo, hi, step)``."""

    value: float
    overrides: tuple = ()

    def __post_init__(self):
        if not (float(self.value) > 0.0):
            raise InvalidInputError(f"step P must be > 0, got {self.value}")
        ovs = tuple(sorted((float(a), float(b), float(h)) for a, b, h in self.overrides))
        for a, b, h in ovs:
            if not (b > a and h > 0):
                raise InvalidInputError(f"bad step override {(a, b, h)}")
        for (a0, b0, _), (a1, b1, _) in zip(ovs, ovs[1:]):
            if a1 < b0 - 1e-12:
                raise InvalidInputError("step overrides overlap")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "overrides", ovs)

    def stations(self, lo: float, hi: float) -> np.ndarray:
        """Station offsets from ``lo`` to ``hi`` (both included).

        Each run is anchored at its start; a regular station closer than a
        quarter step to the end of its run is dropped.
        """
        out: list[float] = []

        def run(a, b, h):
            n = int(math.floor((b - a) / h + 1e-9))
            pts = [a + i * h for i in range(n + 1)]
            if pts and b - pts[-1] < 0.25 * h and len(pts) > 1:
                pts.pop()
            out.extend(pts)

        cur = lo
        for a, b, h in self.overrides:
            a, b = max(a, lo), min(b, hi)
            if b <= a or b <= cur:
                continue
            if a > cur:
                run(cur, a, self.value)
            run(max(a, cur), b, h)
            cur = b
        if hi > cur:
            run(cur, hi, self.value)
        out.append(hi)
        st = np.array(sorted(out))
        keep = np.concatenate([[True], np.diff(st) > 1e-9])
        return st[keep]

    def to_json(self):
        return {"value": self.value, "overrides": [list(o) for o in self.overrides]}

    @classmethod
    def from_json(cls, doc) -> "StepP":
        if isinstance(doc, (int, float)):
            return cls(doc)
        return cls(doc["value"], tuple(tuple(o) for o in doc.get("overrides", ())))


def as_step(P) -> StepP:
    return P if isinstance(P, StepP) else StepP(P)


def feature_stations(feature: FeatureModel, P) -> np.ndarray:
    lo, hi = feature.station_range
    return as_step(P).stations(lo, hi)


def check_stations(feature: FeatureModel, step: float = CHECK_STEP) -> np.ndarray:
    lo, hi = feature.station_range
    n = max(2, int(math.ceil((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


def blend_points(curve_a: SplineCurve, curve_b: SplineCurve, K: float, stations, feature: FeatureModel,
                 project: bool = True) -> np.ndarray:
    """Station-wise points ``A + K (B - A)``, optionally dropped onto the surface."""
    try:
        pa = points_at_stations(curve_a, stations, feature.direction)
        pb = points_at_stations(curve_b, stations, feature.direction)
    except OutOfRangeError as exc:
        raise GeometryError(f"station plane misses a guide curve: {exc}") from exc
    pts = pa + K * (pb - pa)
    if project:
        pts = feature.surface.project(pts)
    return pts


def intermediate_curve(curve_a: SplineCurve, curve_b: SplineCurve, K, P, feature: FeatureModel,
                       mode: str = "interpolate", project: bool = True) -> SplineCurve:
    """Curve dividing every station segment ``[A_m, B_m]`` at ratio ``K``."""
    K = check_ratio(K)
    st = feature_stations(feature, P)
    if len(st) < 2:
        raise InvalidInputError("step P yields fewer than 2 station planes")
    return fit_spline(blend_points(curve_a, curve_b, K, st, feature, project), 5, mode=mode,
                      direction=feature.direction)


def median_curve(feature: FeatureModel, P, mode: str = "interpolate") -> SplineCurve:
    return intermediate_curve(feature.boundary1, feature.boundary2, 0.5, P, feature, mode=mode)


# ---------------------------------------------------------------------------
# nets and areas


@dataclass(frozen=True, eq=False)
class CurveNet:
    """Ordered curves ``start, C_1 .. C_n, target`` built toward ``target``."""

    curves: tuple
    ids: tuple
    K: float
    P: StepP
    truncated: bool = False

    def __post_init__(self):
        if len(self.curves) != len(self.ids) or len(self.curves) < 2:
            raise InvalidInputError("a net needs matching curves/ids and at least 2 curves")

    @property
    def direction(self) -> tuple[str, str]:
        return self.ids[0], self.ids[-1]

    @property
    def interior(self) -> tuple:
        return self.curves[1:-1]

    def __len__(self):
        return len(self.curves)

    def to_json(self) -> dict:
        return {
            "direction": list(self.direction),
            "K": self.K,
            "P": self.P.to_json(),
            "truncated": self.truncated,
            "ids": list(self.ids),
            "curves": [c.to_json() for c in self.curves],
        }

    @classmethod
    def from_json(cls, doc) -> "CurveNet":
        return cls(
            curves=tuple(SplineCurve.from_json(c) for c in doc["curves"]),
            ids=tuple(doc["ids"]),
            K=doc["K"],
            P=StepP.from_json(doc["P"]),
            truncated=doc.get("truncated", False),
        )

    def __eq__(self, other):
        if not isinstance(other, CurveNet):
            return NotImplemented
        return (self.ids == other.ids and self.K == other.K and self.P == other.P
                and self.truncated == other.truncated
                and all(a == b for a, b in zip(self.curves, other.curves)))

    __hash__ = object.__hash__


def build_net(start: SplineCurve, target: SplineCurve, K, P, feature: FeatureModel,
              stop_eps: float = DEFAULT_STOP_EPS, max_iters: int = DEFAULT_MAX_ITERS,
              ids: tuple[str, str] = ("B1", "B2"), prefix: str = "C") -> CurveNet:
    """Iterate intermediate curves from ``start`` toward ``target``.

    The candidate that comes within ``stop_eps`` of the target, or crosses it or
    its predecessor, is discarded and the net built so far is returned. Hitting
    ``max_iters`` sets ``truncated``.
    """
    K = check_ratio(K)
    P = as_step(P)
    if start is target or start == target:
        raise InvalidInputError("start and target must differ")
    if not stop_eps > 0:
        raise InvalidInputError("stop_eps must be > 0")
    if max_iters < 1:
        raise InvalidInputError("max_iters must be >= 1")
    checks = check_stations(feature)
    d = feature.direction
    curves = [start]
    truncated = True
    for _ in range(max_iters):
        cand = intermediate_curve(curves[-1], target, K, P, feature)
        gap, _ = min_distance_at(cand, target, checks, d)
        back, _ = min_distance_at(cand, curves[-1], checks, d)
        if gap <= stop_eps or back <= 0.0:
            truncated = False
            break
        curves.append(cand)
    curves.append(target)
    names = (ids[0],) + tuple(f"{prefix}{i}" for i in range(1, len(curves) - 1)) + (ids[1],)
    return CurveNet(tuple(curves), names, K, P, truncated)


@dataclass(frozen=True, eq=False)
class MachiningArea:
    """Elementary area between two guides; ``lower`` is on the B1 side."""

    lower: SplineCurve
    upper: SplineCurve
    lower_id: str = "B1"
    upper_id: str = "B2"


@dataclass(frozen=True, eq=False)
class ComposedArea:
    areas: tuple
    name: str = ""
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.areas:
            raise InvalidInputError("a composed area needs at least one elementary area")
        for a, b in zip(self.areas, self.areas[1:]):
            if a.upper_id != b.lower_id or not (a.upper is b.lower or a.upper == b.lower):
                raise InvalidInputError(f"areas {a.upper_id}/{b.lower_id} do not share a guide")

    def __len__(self):
        return len(self.areas)

    @property
    def guide_ids(self) -> list[str]:
        return [self.areas[0].lower_id] + [a.upper_id for a in self.areas]

    @property
    def guides(self) -> list[SplineCurve]:
        return [self.areas[0].lower] + [a.upper for a in self.areas]

    def to_json(self) -> dict:
        curves = {}
        for cid, c in zip(self.guide_ids, self.guides):
            curves[cid] = c.to_json()
        return {
            "name": self.name,
            "truncated": self.truncated,
            "meta": self.meta,
            "areas": [{"lower": a.lower_id, "upper": a.upper_id} for a in self.areas],
            "curves": curves,
        }

    @classmethod
    def from_json(cls, doc) -> "ComposedArea":
        curves = {k: SplineCurve.from_json(v) for k, v in doc["curves"].items()}
        areas = tuple(MachiningArea(curves[a["lower"]], curves[a["upper"]], a["lower"], a["upper"])
                      for a in doc["areas"])
        return cls(areas, doc.get("name", ""), doc.get("truncated", False), doc.get("meta", {}))

    def __eq__(self, other):
        if not isinstance(other, ComposedArea):
            return NotImplemented
        return (self.guide_ids == other.guide_ids and self.name == other.name
                and self.truncated == other.truncated and self.meta == other.meta
                and all(a == b for a, b in zip(self.guides, other.guides)))

    __hash__ = object.__hash__


def chain_areas(curves: Sequence[SplineCurve], ids: Sequence[str], name: str = "",
                truncated: bool = False, meta: dict | None = None) -> ComposedArea:
    areas = tuple(MachiningArea(curves[i], curves[i + 1], ids[i], ids[i + 1]) for i in range(len(curves) - 1))
    return ComposedArea(areas, name, truncated, dict(meta or {}))


def single_area(feature: FeatureModel) -> ComposedArea:
    return chain_areas([feature.boundary1, feature.boundary2], ["B1", "B2"], name="single")


def compose_boundary_direction(net: CurveNet, j: int) -> ComposedArea:
    """Composed area M_Aj: the first ``j`` interior curves of ``net``, j + 1 areas."""
    n = len(net.interior)
    if not (0 <= j <= n):
        raise InvalidInputError(f"j={j} outside 0..{n} available intermediate curves")
    curves = [net.curves[0], *net.interior[:j], net.curves[-1]]
    ids = [net.ids[0], *net.ids[1:j + 1], net.ids[-1]]
    if ids[0] == "B2":
        curves.reverse()
        ids.reverse()
    meta = {"type": "boundary-direction", "K": net.K, "P": net.P.value, "direction": list(net.direction), "j": j}
    return chain_areas(curves, ids, name=f"MA{j}", truncated=net.truncated, meta=meta)


def compose_median(feature: FeatureModel, K, P, direction: str = "from-median", levels: int = 1,
                   stop_eps: float = DEFAULT_STOP_EPS, max_iters: int = DEFAULT_MAX_ITERS,
                   nets: tuple[CurveNet, CurveNet] | None = None) -> ComposedArea:
    """Median pre-decomposition plus ``levels`` intermediate curves per half.

    ``direction`` is ``"toward-median"`` (nets from each boundary to the median)
    or ``"from-median"`` (nets from the median to each boundary). Precomputed
    ``nets`` (side 1, side 2) may be passed to avoid rebuilding them.
    """
    K = check_ratio(K)
    P = as_step(P)
    if levels < 0:
        raise InvalidInputError("levels must be >= 0")
    if direction not in ("toward-median", "from-median"):
        raise InvalidInputError(f"unknown median direction {direction!r}")
    if nets is None:
        nets = median_nets(feature, K, P, direction, stop_eps, max_iters)
    n1, n2 = nets
    truncated = len(n1.interior) < levels or len(n2.interior) < levels or n1.truncated or n2.truncated
    if direction == "toward-median":
        side1 = list(zip(n1.curves[: 1 + levels], n1.ids[: 1 + levels]))
        side2 = list(zip(n2.curves[: 1 + levels], n2.ids[: 1 + levels]))[::-1]
        cmed = (n1.curves[-1], n1.ids[-1])
    else:
        side1 = list(zip(n1.curves[1: 1 + levels], n1.ids[1: 1 + levels]))[::-1]
        side1.insert(0, (n1.curves[-1], n1.ids[-1]))
        side2 = list(zip(n2.curves[1: 1 + levels], n2.ids[1: 1 + levels]))
        side2.append((n2.curves[-1], n2.ids[-1]))
        cmed = (n1.curves[0], n1.ids[0])
    chain = side1 + [cmed] + side2
    meta = {"type": "median", "K": K, "P": P.value, "direction": direction, "levels": levels}
    return chain_areas([c for c, _ in chain], [i for _, i in chain],
                       name=f"median-{direction}-L{levels}", truncated=truncated, meta=meta)


def median_nets(feature: FeatureModel, K, P, direction: str = "from-median",
                stop_eps: float = DEFAULT_STOP_EPS, max_iters: int = DEFAULT_MAX_ITERS) -> tuple[CurveNet, CurveNet]:
    """The two half-area nets used by :func:`compose_median`."""
    cmed = median_curve(feature, P)
    b1, b2 = feature.boundary1, feature.boundary2
    if direction == "toward-median":
        return (build_net(b1, cmed, K, P, feature, stop_eps, max_iters, ("B1", "Cmed"), "L"),
                build_net(b2, cmed, K, P, feature, stop_eps, max_iters, ("B2", "Cmed"), "U"))
    return (build_net(cmed, b1, K, P, feature, stop_eps, max_iters, ("Cmed", "B1"), "L"),
            build_net(cmed, b2, K, P, feature, stop_eps, max_iters, ("Cmed", "B2"), "U"))


def determine_step(feature: FeatureModel, P0) -> StepP:
    """Adapt the station step to the inflections of both boundaries.

    Where two consecutive projected inflection stations are closer than
    ``2 * P0``, the interval between them gets the local step ``gap / 2``.
    """
    P0 = as_step(P0)
    d = feature.direction
    infl = sorted(inflection_stations(feature.boundary1, d) + inflection_stations(feature.boundary2, d))
    added = []
    for a, b in zip(infl, infl[1:]):
        gap = b - a
        if 1e-6 < gap < 2.0 * P0.value:
            added.append((a, b, gap / 2.0))
    if not added:
        return P0
    kept = [o for o in P0.overrides if all(o[1] <= a or o[0] >= b for a, b, _ in added)]
    return StepP(P0.value, tuple(kept) + tuple(added))


def guidance_method(feature: FeatureModel, P0=5.0, K: float = 0.75) -> ComposedArea:
    """Four-step guidance-curve definition.

    1. median between the boundaries (K = 0.5);
    2. station step adapted to the boundary inflections;
    3. in each half, one intermediate curve at ratio ``K`` starting from the
       guide whose smallest radius of curvature is greatest (no curve when both
       guides of the half are straight);
    4. candidates for other ratios come from :func:`guidance_candidates`.
    """
    K = check_ratio(K)
    P = determine_step(feature, P0)
    cmed = median_curve(feature, P)
    b1, b2 = feature.boundary1, feature.boundary2
    starts = {}
    inner = {}
    for label, side, side_id in (("C1", b1, "B1"), ("C2", b2, "B2")):
        r_side, r_med = min_radius(side), min_radius(cmed)
        if math.isinf(r_side) and math.isinf(r_med):
            continue
        # ties go to the median
        if r_side > r_med:
            start, other, starts[label] = side, cmed, side_id
        else:
            start, other, starts[label] = cmed, side, "Cmed"
        inner[label] = intermediate_curve(start, other, K, P, feature)
    curves, ids = [b1], ["B1"]
    if "C1" in inner:
        curves.append(inner["C1"])
        ids.append("C1")
    curves.append(cmed)
    ids.append("Cmed")
    if "C2" in inner:
        curves.append(inner["C2"])
        ids.append("C2")
    curves.append(b2)
    ids.append("B2")
    meta = {"type": "method-4step", "K": K, "P": P.value,
            "P_overrides": [list(o) for o in P.overrides], "starts": starts}
    return chain_areas(curves, ids, name=f"method-4step-K{K:g}", meta=meta)


def guidance_candidates(feature: FeatureModel, P0=5.0, K_refine: Sequence[float] = (0.75,)) -> list[ComposedArea]:
    """Step 4 candidates: the four-step decomposition for each ratio in ``K_refine``."""
    return [guidance_method(feature, P0, K) for K in K_refine]
