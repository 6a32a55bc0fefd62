"""Curve and surface kernel.

Interpolating B-spline curves on a [0, 1] parameter, height-field
surfaces, intersections with vertical station planes, curvature and inflection
scans. Station planes are vertical planes perpendicular to a 2D machining
direction ``d``; a point's *station* is ``dot(xy, d)`` and its *lateral*
coordinate is ``dot(xy, perp(d))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.interpolate import BSpline, RectBivariateSpline, make_interp_spline
from scipy.optimize import brentq

from .errors import (
    AmbiguityError,
    DegenerateInputError,
    GeometryError,
    InvalidInputError,
    OutOfRangeError,
)

PLANE_TOL = 1e-9
ON_SURFACE_TOL = 1e-6
_DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidInputError(f"non-finite {name} coordinate: {value}")
            object.__setattr__(self, name, value)

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def as_points(points) -> np.ndarray:
    """Coerce a sequence of Point3 / 2- or 3-tuples to an ``(n, 3)`` float array."""
    rows = [tuple(p) for p in points]
    arr = np.array([list(r) + [0.0] * (3 - len(r)) for r in rows], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError("points must be 2D or 3D coordinates")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("points must be finite")
    return arr


def unit2(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(2)
    n = math.hypot(v[0], v[1])
    if n < 1e-12:
        raise InvalidInputError("direction must be non-zero")
    return v / n


def perp(d: np.ndarray) -> np.ndarray:
    return np.array([-d[1], d[0]])


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class SplineCurve:
    """Clamped B-spline curve in 3D with parameter domain [0, 1]."""

    degree: int
    control_points: np.ndarray
    knots: np.ndarray

    def __post_init__(self):
        cp = np.array(self.control_points, dtype=float)
        kn = np.array(self.knots, dtype=float)
        k = int(self.degree)
        if k < 1:
            raise InvalidInputError("degree must be >= 1")
        if cp.ndim != 2 or cp.shape[1] != 3 or len(cp) < k + 1:
            raise InvalidInputError(f"need at least {k + 1} 3D control points")
        if len(kn) != len(cp) + k + 1:
            raise InvalidInputError("knot count must equal control points + degree + 1")
        if np.any(np.diff(kn) < 0):
            raise InvalidInputError("knots must be non-decreasing")
        if not (np.all(kn[: k + 1] == 0.0) and np.all(kn[-k - 1:] == 1.0)):
            raise InvalidInputError("knot vector must be clamped on [0, 1]")
        cp.setflags(write=False)
        kn.setflags(write=False)
        object.__setattr__(self, "degree", k)
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "knots", kn)

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(self.knots, self.control_points, self.degree, extrapolate=False)

    @cached_property
    def _derivs(self) -> dict:
        return {}

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return self._spline(t)

    def derivative(self, t, order: int = 1):
        if order not in self._derivs:
            self._derivs[order] = self._spline.derivative(order)
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return self._derivs[order](t)

    @property
    def start(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def end(self) -> np.ndarray:
        return self.control_points[-1]

    def __eq__(self, other):
        if not isinstance(other, SplineCurve):
            return NotImplemented
        return (
            self.degree == other.degree
            and np.array_equal(self.control_points, other.control_points)
            and np.array_equal(self.knots, other.knots)
        )

    __hash__ = object.__hash__

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "control_points": self.control_points.tolist(),
            "knots": self.knots.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SplineCurve":
        return cls(doc["degree"], doc["control_points"], doc["knots"])


def _averaged_knots(u: np.ndarray, k: int) -> np.ndarray:
    n = len(u)
    inner = [u[j:j + k].mean() for j in range(1, n - k)]
    return np.concatenate([np.zeros(k + 1), inner, np.ones(k + 1)])


_PARAM_KINDS = ("auto", "chord", "projected", "centripetal", "uniform")


def interpolation_params(points, param: str = "auto", direction=None) -> np.ndarray:
    """Node parameters in [0, 1] used by :func:`fit_spline`.

    ``chord`` is cumulative chord length. ``projected`` is cumulative length of
    the projection onto ``direction`` (default: the first-to-last xy
    direction), i.e. proportional to the station for graph-like data. ``auto`` picks ``projected`` when every
    step advances along that direction by at least half its chord (slopes
    under 60 degrees) and ``chord`` otherwise.
    """
    pts = as_points(points)
    if param not in _PARAM_KINDS:
        raise InvalidInputError(f"unknown parameterization {param!r}")
    steps = np.diff(pts, axis=0)
    chord = np.linalg.norm(steps, axis=1)
    if param in ("auto", "projected"):
        span = pts[-1, :2] - pts[0, :2] if direction is None else np.asarray(direction, float)
        norm = math.hypot(*span)
        proj = steps[:, :2] @ (span / norm) if norm > _DUPLICATE_TOL else np.zeros(len(steps))
        graph_like = bool(np.all(proj >= 0.5 * chord))
        if param == "projected" and not np.all(proj > _DUPLICATE_TOL):
            raise DegenerateInputError("points are not monotone along their end-to-end direction")
        lengths = proj if (param == "projected" or graph_like) else chord
    elif param == "centripetal":
        lengths = np.sqrt(chord)
    elif param == "uniform":
        lengths = np.ones_like(chord)
    else:
        lengths = chord
    u = np.concatenate([[0.0], np.cumsum(lengths)])
    return u / u[-1]


def fit_spline(points, target_degree: int = 5, mode: str = "interpolate",
               param: str = "auto", direction=None) -> SplineCurve:
    """Fit a clamped B-spline through (or on) ordered points.

    ``mode="interpolate"`` passes the curve through every point, with node
    parameters from :func:`interpolation_params` and averaged knots. Pass the
    machining ``direction`` for station-sampled data so the parameter is an
    exact linear function of the station.
    ``mode="control"`` uses the points directly as the control polygon of a
    uniform clamped spline. The degree falls back to ``len(points) - 1`` when
    too few points are given.
    """
    pts = as_points(points)
    if len(pts) < 2:
        raise InvalidInputError("fit_spline needs at least 2 points")
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(steps <= _DUPLICATE_TOL):
        raise DegenerateInputError("duplicate consecutive points")
    if target_degree < 1:
        raise InvalidInputError("target_degree must be >= 1")
    k = min(int(target_degree), len(pts) - 1)
    if mode == "control":
        inner = np.linspace(0.0, 1.0, len(pts) - k + 1)[1:-1]
        knots = np.concatenate([np.zeros(k + 1), inner, np.ones(k + 1)])
        return SplineCurve(k, pts, knots)
    if mode != "interpolate":
        raise InvalidInputError(f"unknown fit mode {mode!r}")
    u = interpolation_params(pts, param, direction)
    knots = _averaged_knots(u, k)
    spl = make_interp_spline(u, pts, k=k, t=knots)
    return SplineCurve(k, spl.c, knots)


# ---------------------------------------------------------------------------
# station planes


@dataclass(frozen=True)
class DiscretizationPlane:
    """Vertical plane ``dot(xy, normal) == station``."""

    station: float
    normal: tuple = (1.0, 0.0)

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(2)
        if abs(math.hypot(*n) - 1.0) > 1e-9:
            raise InvalidInputError("plane normal must be a unit 2D vector")
        object.__setattr__(self, "normal", (float(n[0]), float(n[1])))
        object.__setattr__(self, "station", float(self.station))


def planes(stations: Iterable[float], direction=(1.0, 0.0)) -> list[DiscretizationPlane]:
    d = tuple(unit2(direction))
    return [DiscretizationPlane(s, d) for s in stations]


def curve_station_extent(curve: SplineCurve, direction) -> tuple[float, float]:
    d = unit2(direction)
    a = float(curve.start[:2] @ d)
    b = float(curve.end[:2] @ d)
    return (a, b) if a <= b else (b, a)


def _plane_param(curve: SplineCurve, station: float, d: np.ndarray, samples: int = 513) -> float:
    ts = np.linspace(0.0, 1.0, samples)
    f = curve(ts)[:, :2] @ d - station

    def g(t):
        return float(curve(t)[:2] @ d - station)

    roots: list[float] = []
    zero = np.abs(f) <= 1e-12
    i = 0
    while i < samples:
        if zero[i]:
            j = i
            while j + 1 < samples and zero[j + 1]:
                j += 1
            if j > i:
                raise AmbiguityError(f"curve lies in plane at station {station}")
            roots.append(ts[i])
            i = j + 1
            continue
        if i + 1 < samples and not zero[i + 1] and f[i] * f[i + 1] < 0:
            roots.append(brentq(g, ts[i], ts[i + 1], xtol=1e-15, rtol=1e-15))
        i += 1
    if not roots:
        # tolerate stations within PLANE_TOL of an endpoint
        if abs(f[0]) <= PLANE_TOL:
            return 0.0
        if abs(f[-1]) <= PLANE_TOL:
            return 1.0
        raise OutOfRangeError(
            f"plane at station {station:.6g} is outside the curve extent "
            f"[{f.min() + station:.6g}, {f.max() + station:.6g}]"
        )
    if len(roots) > 1:
        raise AmbiguityError(f"plane at station {station:.6g} cuts the curve {len(roots)} times")
    return float(roots[0])


def curve_plane_point(curve: SplineCurve, plane: DiscretizationPlane) -> Point3:
    """Unique intersection of ``curve`` with a vertical station plane."""
    t = _plane_param(curve, plane.station, np.asarray(plane.normal))
    return Point3(*curve(t))


def params_at_stations(curve: SplineCurve, stations, direction, samples: int = 2049) -> np.ndarray:
    """Vectorized :func:`curve_plane_point` parameters for many stations.

    Falls back to the scalar root search when the curve is not monotone in the
    machining direction on the sampling grid.
    """
    d = unit2(direction)
    st = np.atleast_1d(np.asarray(stations, dtype=float))
    ts = np.linspace(0.0, 1.0, samples)
    s = curve(ts)[:, :2] @ d
    ds = np.diff(s)
    if not (np.all(ds > 0) or np.all(ds < 0)):
        return np.array([_plane_param(curve, x, d) for x in st])
    sign = 1.0 if s[-1] > s[0] else -1.0
    s = sign * s
    target = sign * st
    if np.any(target < s[0] - PLANE_TOL) or np.any(target > s[-1] + PLANE_TOL):
        bad = st[(target < s[0] - PLANE_TOL) | (target > s[-1] + PLANE_TOL)][0]
        raise OutOfRangeError(f"station {bad:.6g} is outside the curve extent")
    target = np.clip(target, s[0], s[-1])
    idx = np.clip(np.searchsorted(s, target), 1, samples - 1)
    lo = ts[idx - 1].copy()
    hi = ts[idx].copy()
    for _ in range(46):
        mid = 0.5 * (lo + hi)
        below = sign * (curve(mid)[:, :2] @ d) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def points_at_stations(curve: SplineCurve, stations, direction) -> np.ndarray:
    """``(m, 3)`` intersection points of ``curve`` with station planes."""
    return curve(params_at_stations(curve, stations, direction))


def _stations_of(planes_: Sequence[DiscretizationPlane]) -> tuple[np.ndarray, np.ndarray]:
    if not planes_:
        raise InvalidInputError("station list is empty")
    d = np.asarray(planes_[0].normal)
    for p in planes_:
        if not np.allclose(p.normal, d, atol=1e-12):
            raise InvalidInputError("all station planes must share one normal")
    return np.array([p.station for p in planes_]), d


def min_distance_at(curve_a: SplineCurve, curve_b: SplineCurve, stations, direction) -> tuple[float, float]:
    """Array form of :func:`min_distance` (stations as floats)."""
    st = np.atleast_1d(np.asarray(stations, dtype=float))
    if st.size == 0:
        raise InvalidInputError("station list is empty")
    d = unit2(direction)
    pa = points_at_stations(curve_a, st, d)
    pb = points_at_stations(curve_b, st, d)
    dist = np.linalg.norm(pb - pa, axis=1)
    lateral = (pb - pa)[:, :2] @ perp(d)
    flips = np.nonzero(np.sign(lateral[:-1]) * np.sign(lateral[1:]) < 0)[0]
    for i in flips:
        j = i if dist[i] <= dist[i + 1] else i + 1
        dist[j] = 0.0
    k = int(np.argmin(dist))
    return float(dist[k]), float(st[k])


def min_distance(curve_a: SplineCurve, curve_b: SplineCurve, stations: Sequence[DiscretizationPlane]) -> tuple[float, float]:
    """Minimum station-wise distance between two curves and where it occurs.

    A change of lateral order between adjacent stations is a crossing and is
    reported as distance 0 at the closer of the two stations.
    """
    st, d = _stations_of(stations)
    return min_distance_at(curve_a, curve_b, st, d)


# ---------------------------------------------------------------------------
# curvature


def curvature_profile(curve: SplineCurve, samples: int) -> list[tuple[float, float | None]]:
    """Curvature ``|c' x c''| / |c'|^3`` at ``samples`` uniform parameters.

    Samples with a vanishing first derivative report ``None``.
    """
    if samples < 2:
        raise InvalidInputError("samples must be >= 2")
    ts = np.linspace(0.0, 1.0, samples)
    d1 = curve.derivative(ts, 1)
    d2 = curve.derivative(ts, 2) if curve.degree >= 2 else np.zeros_like(d1)
    speed = np.linalg.norm(d1, axis=1)
    cross = np.linalg.norm(np.cross(d1, d2), axis=1)
    out = []
    for t, sp, cr in zip(ts, speed, cross):
        out.append((float(t), None if sp < 1e-12 else float(cr / sp**3)))
    return out


def min_radius(curve: SplineCurve, samples: int = 1024) -> float:
    """Smallest radius of curvature; ``inf`` for a straight curve."""
    kappas = [k for _, k in curvature_profile(curve, samples) if k is not None]
    kmax = max(kappas, default=0.0)
    return math.inf if kmax <= 1e-9 else 1.0 / kmax


def _signed_xy_turn(curve: SplineCurve, t):
    d1 = curve.derivative(t, 1)[..., :2]
    d2 = curve.derivative(t, 2)[..., :2]
    return d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0], np.linalg.norm(d1, axis=-1)


def inflection_stations(curve: SplineCurve, direction=(1.0, 0.0), samples: int = 1024,
                        tol: float = 1e-6) -> list[float]:
    """Stations where the planar (xy) curvature of ``curve`` changes sign.

    Sign changes are scanned on ``samples`` parameters and refined by bisection
    until the bracket spans less than ``tol`` mm along the machining direction.
    Sign flips inside numerical noise near zero curvature, and flips within the
    first or last 1 % of the parameter range, are ignored.
    """
    if curve.degree < 2:
        return []
    d = unit2(direction)
    samples = max(int(samples), 512)
    ts = np.linspace(0.0, 1.0, samples)
    w, speed = _signed_xy_turn(curve, ts)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(speed > 1e-12, w / np.maximum(speed, 1e-300) ** 3, 0.0)
    peak = np.max(np.abs(kappa))
    if peak <= 1e-9:
        return []
    floor = 1e-2 * peak
    sgn = np.where(np.abs(kappa) > floor, np.sign(kappa), 0.0)
    margin = 0.01
    found = []
    last_i = None
    for i in range(samples):
        if sgn[i] == 0:
            continue
        if last_i is not None and sgn[i] != sgn[last_i]:
            lo, hi = ts[last_i], ts[i]
            if lo >= margin and hi <= 1.0 - margin:
                found.append(_refine_inflection(curve, lo, hi, sgn[last_i], d, tol))
        last_i = i
    return found


def _refine_inflection(curve, lo, hi, lo_sign, d, tol) -> float:
    for _ in range(200):
        s_lo = float(curve(lo)[:2] @ d)
        s_hi = float(curve(hi)[:2] @ d)
        if abs(s_hi - s_lo) < tol:
            break
        mid = 0.5 * (lo + hi)
        w, _ = _signed_xy_turn(curve, mid)
        if np.sign(w) == lo_sign:
            lo = mid
        else:
            hi = mid
    return float(curve(0.5 * (lo + hi))[:2] @ d)


# ---------------------------------------------------------------------------
# surfaces


def _flat(x, y, z0=0.0):
    return np.full(np.broadcast(x, y).shape, float(z0))


def _flat_grad(x, y, z0=0.0):
    shape = np.broadcast(x, y).shape
    return np.zeros(shape), np.zeros(shape)


def _plane(x, y, a=0.0, b=0.0, c=0.0):
    return a * np.asarray(x, dtype=float) + b * np.asarray(y, dtype=float) + c


def _plane_grad(x, y, a=0.0, b=0.0, c=0.0):
    shape = np.broadcast(x, y).shape
    return np.full(shape, float(a)), np.full(shape, float(b))


def _wave(x, y, amplitude=2.0, wavelength_x=35.0, wavelength_y=60.0):
    wx = 2 * np.pi / wavelength_x
    wy = np.pi / wavelength_y
    return amplitude * np.sin(wx * np.asarray(x)) * np.cos(wy * np.asarray(y))


def _wave_grad(x, y, amplitude=2.0, wavelength_x=35.0, wavelength_y=60.0):
    wx = 2 * np.pi / wavelength_x
    wy = np.pi / wavelength_y
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (amplitude * wx * np.cos(wx * x) * np.cos(wy * y),
            -amplitude * wy * np.sin(wx * x) * np.sin(wy * y))


# name -> (height, gradient)
SURFACE_FIXTURES: dict[str, tuple[Callable, Callable]] = {
    "flat": (_flat, _flat_grad),
    "plane": (_plane, _plane_grad),
    "wave": (_wave, _wave_grad),
}


class SurfacePatch:
    """Height field ``z = f(x, y)`` over a rectangular domain."""

    kind = "abstract"

    def __init__(self, domain):
        (x0, x1), (y0, y1) = domain
        if not (x1 > x0 and y1 > y0):
            raise InvalidInputError("surface domain must have positive extent")
        self.domain = ((float(x0), float(x1)), (float(y0), float(y1)))

    def height(self, x, y):
        raise NotImplementedError

    def gradient(self, x, y):
        raise NotImplementedError

    def contains(self, x, y, tol: float = 1e-9) -> bool:
        (x0, x1), (y0, y1) = self.domain
        x = np.asarray(x)
        y = np.asarray(y)
        return bool(np.all((x >= x0 - tol) & (x <= x1 + tol) & (y >= y0 - tol) & (y <= y1 + tol)))

    def z(self, x, y):
        """Height with a domain check."""
        if not self.contains(x, y):
            raise OutOfRangeError(f"point outside surface domain {self.domain}")
        return self.height(x, y)

    def normal(self, x, y) -> np.ndarray:
        fx, fy = self.gradient(x, y)
        n = np.stack([-np.asarray(fx), -np.asarray(fy), np.ones(np.shape(fx))], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Drop ``(n, 3)`` points vertically onto the surface (domain-checked)."""
        pts = np.array(pts, dtype=float)
        pts[..., 2] = self.z(pts[..., 0], pts[..., 1])
        return pts

    def _domain_json(self):
        (x0, x1), (y0, y1) = self.domain
        return {"x": [x0, x1], "y": [y0, y1]}


class AnalyticSurface(SurfacePatch):
    def __init__(self, name: str, domain, params: dict | None = None):
        if name not in SURFACE_FIXTURES:
            raise InvalidInputError(f"unknown surface fixture {name!r}; known: {sorted(SURFACE_FIXTURES)}")
        super().__init__(domain)
        self.name = name
        self.params = {k: float(v) for k, v in (params or {}).items()}
        self._f, self._g = SURFACE_FIXTURES[name]

    @property
    def kind(self):
        return f"fixture:{self.name}"

    def height(self, x, y):
        return self._f(x, y, **self.params)

    def gradient(self, x, y):
        return self._g(x, y, **self.params)

    def to_json(self) -> dict:
        return {"kind": self.kind, "domain": self._domain_json(), "params": dict(sorted(self.params.items()))}


class BicubicSurface(SurfacePatch):
    kind = "bicubic"

    def __init__(self, xs, ys, zs):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        zs = np.asarray(zs, dtype=float)
        if zs.shape != (len(xs), len(ys)) or len(xs) < 4 or len(ys) < 4:
            raise InvalidInputError("bicubic grid needs z of shape (len(x), len(y)) with >= 4 nodes per axis")
        super().__init__(((xs[0], xs[-1]), (ys[0], ys[-1])))
        self.xs, self.ys, self.zs = xs, ys, zs
        self._spl = RectBivariateSpline(xs, ys, zs, kx=3, ky=3, s=0)

    def height(self, x, y):
        return self._spl.ev(x, y)

    def gradient(self, x, y):
        return self._spl.ev(x, y, dx=1), self._spl.ev(x, y, dy=1)

    def to_json(self) -> dict:
        return {"kind": "bicubic", "domain": self._domain_json(),
                "grid": {"x": self.xs.tolist(), "y": self.ys.tolist(), "z": self.zs.tolist()}}


def surface_from_json(doc: dict) -> SurfacePatch:
    kind = doc["kind"]
    if kind == "bicubic":
        g = doc["grid"]
        return BicubicSurface(g["x"], g["y"], g["z"])
    if kind.startswith("fixture:"):
        dom = doc["domain"]
        return AnalyticSurface(kind.split(":", 1)[1], (dom["x"], dom["y"]), doc.get("params"))
    raise InvalidInputError(f"unknown surface kind {kind!r}")


def project_to_surface(point, surface: SurfacePatch) -> Point3:
    x, y, _ = tuple(point)
    return Point3(x, y, float(surface.z(x, y)))


# ---------------------------------------------------------------------------
# feature


@dataclass(frozen=True, eq=False)
class FeatureModel:
    """Bottom feature: surface patch, two closed boundaries, machining direction."""

    surface: SurfacePatch
    boundary1: SplineCurve
    boundary2: SplineCurve
    machining_dir: tuple = (1.0, 0.0)
    name: str = "feature"

    def __post_init__(self):
        object.__setattr__(self, "machining_dir", tuple(float(v) for v in unit2(self.machining_dir)))

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.machining_dir)

    @cached_property
    def station_range(self) -> tuple[float, float]:
        a0, a1 = curve_station_extent(self.boundary1, self.direction)
        b0, b1 = curve_station_extent(self.boundary2, self.direction)
        lo, hi = max(a0, b0), min(a1, b1)
        if hi - lo <= PLANE_TOL:
            raise GeometryError("boundaries do not overlap along the machining direction")
        return lo, hi

    def validate(self, step: float = 0.5) -> None:
        """Check the feature invariants; raise GeometryError listing violations."""
        lo, hi = self.station_range
        st = np.linspace(lo, hi, max(3, int(math.ceil((hi - lo) / step)) + 1))
        problems = []
        for label, c in (("boundary1", self.boundary1), ("boundary2", self.boundary2)):
            ts = np.linspace(0, 1, 2049)
            s = c(ts)[:, :2] @ self.direction
            if not (np.all(np.diff(s) > 0) or np.all(np.diff(s) < 0)):
                problems.append(f"{label} is not monotone along the machining direction")
                continue
            pts = c(ts)
            if not self.surface.contains(pts[:, 0], pts[:, 1]):
                problems.append(f"{label} leaves the surface domain")
                continue
            dz = np.abs(pts[:, 2] - self.surface.height(pts[:, 0], pts[:, 1]))
            if dz.max() > ON_SURFACE_TOL:
                problems.append(f"{label} is off the surface by {dz.max():.3g} mm")
        if not problems:
            dist, where = min_distance_at(self.boundary1, self.boundary2, st, self.direction)
            if dist <= 0.0:
                problems.append(f"boundaries touch or cross near station {where:.4g}")
        if problems:
            raise GeometryError("; ".join(problems))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "surface": self.surface.to_json(),
            "boundary1": self.boundary1.to_json(),
            "boundary2": self.boundary2.to_json(),
            "machining_dir": list(self.machining_dir),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureModel":
        return cls(
            surface=surface_from_json(doc["surface"]),
            boundary1=SplineCurve.from_json(doc["boundary1"]),
            boundary2=SplineCurve.from_json(doc["boundary2"]),
            machining_dir=tuple(doc.get("machining_dir", (1.0, 0.0))),
            name=doc.get("name", "feature"),
        )
