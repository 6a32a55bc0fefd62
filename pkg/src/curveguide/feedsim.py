"""Jerk-limited feed-rate simulation of linear-block programs.

Each block is a straight move, so all axis quantities are the path quantity
scaled by the direction cosine; per-axis limits become path limits
``min(limit_i / |u_i|)``. Junction speeds are bounded by the velocity step an
axis can absorb in one interpolation cycle. Within a pass (v = 0 at both
ends) the motion is a chain of seven-phase S-curves joined at zero
acceleration where a boundary speed cap binds; every block carries its slice
of that chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CurveGuideError, EmptyProgramError, InvalidInputError
from .toolpath import IsoProgram

_SLACK = 1e-6
_BISECT_ITERS = 80


@dataclass(frozen=True)
class MachineKinematics:
    v_max: tuple = (500.0, 500.0, 500.0)  # mm/s
    a_max: tuple = (2500.0, 3000.0, 2000.0)  # mm/s^2
    j_max: tuple = (5000.0, 5000.0, 50000.0)  # mm/s^3
    t_cycle: float = 0.012  # s

    def __post_init__(self):
        for name in ("v_max", "a_max", "j_max"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 3 or not all(v > 0 and math.isfinite(v) for v in vals):
                raise InvalidInputError(f"{name} needs 3 positive values, got {vals}")
            object.__setattr__(self, name, vals)
        if not self.t_cycle > 0:
            raise InvalidInputError("t_cycle must be > 0")

    def to_json(self) -> dict:
        return {"v_max": list(self.v_max), "a_max": list(self.a_max), "j_max": list(self.j_max),
                "t_cycle": self.t_cycle}

    @classmethod
    def from_json(cls, doc) -> "MachineKinematics":
        return cls(tuple(doc["v_max"]), tuple(doc["a_max"]), tuple(doc["j_max"]), doc["t_cycle"])


def _unit(direction) -> np.ndarray:
    u = np.asarray(direction, dtype=float)
    n = np.linalg.norm(u)
    if u.shape != (3,) or not n > 0:
        raise InvalidInputError("direction must be a nonzero 3D vector")
    return u / n


def _scaled_limit(limits, u) -> float:
    au = np.abs(u)
    nz = au > 0
    return float(np.min(np.asarray(limits)[nz] / au[nz]))


def axis_limited_feed(direction, kin: MachineKinematics, set_point: float) -> float:
    """Path feed allowed by the per-axis speed limits along ``direction``."""
    return min(float(set_point), _scaled_limit(kin.v_max, _unit(direction)))


def path_limits(direction, kin: MachineKinematics) -> tuple[float, float, float]:
    """(v, a, j) path limits along a unit ``direction``."""
    u = _unit(direction)
    return _scaled_limit(kin.v_max, u), _scaled_limit(kin.a_max, u), _scaled_limit(kin.j_max, u)


def junction_feed(dir_in, dir_out, kin: MachineKinematics, set_point: float) -> float:
    """Feed allowed across the corner between two blocks.

    The velocity jump ``v * |du_i|`` of every axis must fit in one
    interpolation cycle at that axis' acceleration limit.
    """
    u0, u1 = _unit(dir_in), _unit(dir_out)
    v = min(axis_limited_feed(u0, kin, set_point), axis_limited_feed(u1, kin, set_point))
    du = np.abs(u1 - u0)
    nz = du > 1e-15
    if np.any(nz):
        v = min(v, float(np.min(np.asarray(kin.a_max)[nz] * kin.t_cycle / du[nz])))
    return v


# ---------------------------------------------------------------------------
# S-curve kinematics


def ramp_time(dv, a, j):
    """Time to change speed by ``dv`` with zero acceleration at both ends."""
    dv = np.maximum(dv, 0.0)
    full = dv * j >= a * a
    return np.where(full, dv / a + a / j, 2.0 * np.sqrt(dv / j))


def ramp_distance(v0, v1, a, j):
    """Distance covered by a jerk-limited speed change between ``v0`` and ``v1``."""
    return 0.5 * (v0 + v1) * ramp_time(np.abs(v1 - v0), a, j)


def reachable_speed(v0: float, L: float, a: float, j: float) -> float:
    """Highest speed reachable from ``v0`` within distance ``L`` (also the braking bound by symmetry)."""
    if L <= 0:
        return v0
    # triangular acceleration: x = sqrt(dv) solves x^3 + 2 v0 x - L sqrt(j) = 0
    p, q = 2.0 * v0, L * math.sqrt(j)
    disc = math.sqrt(q * q / 4.0 + p ** 3 / 27.0)
    x = np.cbrt(q / 2.0 + disc) + np.cbrt(q / 2.0 - disc)
    for _ in range(2):  # polish against cancellation
        x -= (x ** 3 + p * x - q) / (3 * x * x + p)
    dv = x * x
    if dv * j >= a * a:
        # trapezoidal: dv^2/(2a) + dv (v0/a + a/(2j)) + v0 a/j - L = 0
        A, B, C = 1.0 / (2.0 * a), v0 / a + a / (2.0 * j), v0 * a / j - L
        dv = (-B + math.sqrt(B * B - 4 * A * C)) / (2 * A)
    return v0 + dv


def _ramp_phases(dv, a, j):
    """(jerk-phase time, constant-accel time) of a speed change ``dv``."""
    dv = np.maximum(dv, 0.0)
    full = dv * j >= a * a
    tj = np.where(full, a / j, np.sqrt(dv / j))
    ta = np.where(full, dv / a - a / j, 0.0)
    return tj, np.maximum(ta, 0.0)


def solve_peaks(L, v0, v1, vlim, a, j):
    """Vectorized peak speed per block: cruise at ``vlim`` if room allows, else
    the largest peak whose up and down ramps fit exactly in ``L``."""
    L, v0, v1, vlim, a, j = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (L, v0, v1, vlim, a, j)))
    need = ramp_distance(v0, vlim, a, j) + ramp_distance(vlim, v1, a, j)
    vp = vlim.copy()
    short = need > L
    if np.any(short):
        lo = np.maximum(v0, v1)[short]
        hi = vlim[short].copy()
        args = (v0[short], v1[short], a[short], j[short], L[short])
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            fits = ramp_distance(args[0], mid, args[2], args[3]) + ramp_distance(mid, args[1], args[2], args[3]) <= args[4]
            lo = np.where(fits, mid, lo)
            hi = np.where(fits, hi, mid)
        vp[short] = lo
    return vp


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class BlockPlan:
    index: int
    length: float
    v_in: float
    v_out: float
    v_peak: float
    duration: float
    a_lim: float
    j_lim: float
    v_lim: float
    direction: tuple
    phases: tuple  # durations of the seven jerk phases inside this block
    jerks: tuple  # jerk level of each phase
    a_in: float = 0.0

    @property
    def mean_feed(self) -> float:
        return self.length / self.duration

    def sample(self, t):
        """(s, v, a, jerk) along the path at local times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return _eval_profile(np.asarray(self.phases)[None, :], np.asarray(self.jerks)[None, :],
                             np.array([self.v_in]), np.array([self.a_in]), np.zeros(t.size, dtype=int), t)


def _eval_profile(phases, jerks, v_in, a_in, rows, t):
    """Evaluate piecewise-constant-jerk profiles; ``rows`` selects the profile of each query."""
    t = np.asarray(t, dtype=float).copy()
    s = np.zeros_like(t)
    v = v_in[rows].astype(float)
    acc = a_in[rows].astype(float)
    jerk = np.zeros_like(t)
    for k in range(phases.shape[1]):
        d = phases[rows, k]
        jk = jerks[rows, k]
        h = np.clip(t, 0.0, d)
        s += v * h + acc * h * h / 2.0 + jk * h ** 3 / 6.0
        v += acc * h + jk * h * h / 2.0
        acc += jk * h
        inside = (t >= 0.0) & (t <= d) & (d > 0)
        jerk = np.where(inside, jk, jerk)
        t = t - d
    return s, v, acc, jerk


@dataclass
class SimResult:
    """Planned motion of a whole program (per-block arrays)."""

    set_point: float
    lengths: np.ndarray
    directions: np.ndarray
    v_in: np.ndarray
    v_out: np.ndarray
    v_peak: np.ndarray
    v_lim: np.ndarray
    a_lim: np.ndarray
    j_lim: np.ndarray
    phases: np.ndarray  # (n, 7)
    jerks: np.ndarray  # (n, 7)
    a_in: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def durations(self) -> np.ndarray:
        return self.phases.sum(axis=1)

    @property
    def mean_feed(self) -> np.ndarray:
        return self.lengths / self.durations

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    def __len__(self):
        return len(self.lengths)

    @property
    def plans(self) -> list[BlockPlan]:
        return [self.plan(i) for i in range(len(self))]

    def plan(self, i: int) -> BlockPlan:
        return BlockPlan(i, float(self.lengths[i]), float(self.v_in[i]), float(self.v_out[i]),
                         float(self.v_peak[i]), float(self.durations[i]), float(self.a_lim[i]),
                         float(self.j_lim[i]), float(self.v_lim[i]), tuple(self.directions[i]),
                         tuple(self.phases[i]), tuple(self.jerks[i]), float(self.a_in[i]))

    def sample_blocks(self, rows, t_local):
        return _eval_profile(self.phases, self.jerks, self.v_in, self.a_in, np.asarray(rows), t_local)

    def sample(self, times):
        """Global-time samples: (block index, s, v, a, jerk)."""
        dur = self.durations
        ends = np.cumsum(dur)
        times = np.asarray(times, dtype=float)
        rows = np.minimum(np.searchsorted(ends, times, side="right"), len(self) - 1)
        local = np.clip(times - (ends[rows] - dur[rows]), 0.0, dur[rows])
        s, v, a, jk = self.sample_blocks(rows, local)
        return rows, s, v, a, jk

    def peak_acceleration(self) -> np.ndarray:
        """Exact max |a| per block (acceleration is piecewise linear in time)."""
        cum = np.concatenate([np.zeros((len(self), 1)), np.cumsum(self.phases, axis=1)], axis=1)
        rows = np.repeat(np.arange(len(self)), cum.shape[1])
        _, _, a, _ = self.sample_blocks(rows, cum.ravel())
        return np.abs(a).reshape(cum.shape).max(axis=1)

    def to_json(self) -> dict:
        dur = self.durations
        return {
            "set_point": self.set_point,
            "total_time_s": self.total_time,
            "blocks": [
                {"i": i, "len_mm": float(self.lengths[i]), "v_in": float(self.v_in[i]),
                 "v_peak": float(self.v_peak[i]), "v_out": float(self.v_out[i]), "t_s": float(dur[i]),
                 "mean_feed": float(self.lengths[i] / dur[i])}
                for i in range(len(self))
            ],
        }


def _block_limits(program: IsoProgram, kin: MachineKinematics, set_point: float):
    s, e = program.block_arrays()
    vec = e - s
    L = np.linalg.norm(vec, axis=1)
    u = vec / L[:, None]
    au = np.abs(u)
    with np.errstate(divide="ignore"):
        inv = np.where(au > 0, 1.0 / au, np.inf)
    v_lim = np.minimum(set_point, np.min(np.asarray(kin.v_max) * inv, axis=1))
    a_lim = np.min(np.asarray(kin.a_max) * inv, axis=1)
    j_lim = np.min(np.asarray(kin.j_max) * inv, axis=1)
    return L, u, v_lim, a_lim, j_lim


def _junctions(u, v_lim, kin):
    """Junction speed caps between consecutive blocks (index k: between k and k+1)."""
    du = np.abs(u[1:] - u[:-1])
    big = du > 1e-15
    cap = np.where(big, np.asarray(kin.a_max) * kin.t_cycle / np.where(big, du, 1.0), np.inf)
    return np.minimum(np.minimum(v_lim[:-1], v_lim[1:]), cap.min(axis=1))


class _Spans:
    """S-curve profiles between consecutive binding points ``S`` (block-boundary indices)."""

    def __init__(self, S, w, cum, v_lim, a_lim, j_lim):
        self.S = S
        self.D = cum[S[1:]] - cum[S[:-1]]
        self.vlim = np.minimum.reduceat(v_lim, S[:-1])
        self.a = np.minimum.reduceat(a_lim, S[:-1])
        self.j = np.minimum.reduceat(j_lim, S[:-1])
        v0, v1 = w[:-1], w[1:]
        vp = np.maximum(solve_peaks(self.D, v0, v1, self.vlim, self.a, self.j), np.maximum(v0, v1))
        tj1, ta1 = _ramp_phases(vp - v0, self.a, self.j)
        tj2, ta2 = _ramp_phases(vp - v1, self.a, self.j)
        ramps = ramp_distance(v0, vp, self.a, self.j) + ramp_distance(vp, v1, self.a, self.j)
        tc = np.maximum(self.D - ramps, 0.0) / vp
        self.v0, self.v1, self.vp = v0, v1, vp
        self.phases = np.column_stack([tj1, ta1, tj1, tc, tj2, ta2, tj2])
        z = np.zeros(len(v0))
        self.jerks = np.column_stack([self.j, z, -self.j, z, -self.j, z, self.j])
        self.T = self.phases.sum(axis=1)
        self.zero = np.zeros(len(v0))

    def eval(self, rows, t):
        return _eval_profile(self.phases, self.jerks, self.v0, self.zero, rows, t)

    def time_at(self, rows, x):
        """Times at which spans ``rows`` reach distance ``x`` (bisection; s(t) is increasing)."""
        lo = np.zeros(len(rows))
        hi = self.T[rows].copy()
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            below = self.eval(rows, mid)[0] < x
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        t = 0.5 * (lo + hi)
        t = np.where(x <= 0.0, 0.0, t)
        return np.where(x >= self.D[rows], self.T[rows], t)


def _lookahead(S, cap, cum, a_lim, j_lim):
    """Forward/backward speed propagation between binding points (zero acceleration there)."""
    D = (cum[S[1:]] - cum[S[:-1]]).tolist()
    a = np.minimum.reduceat(a_lim, S[:-1]).tolist()
    j = np.minimum.reduceat(j_lim, S[:-1]).tolist()
    w = cap[S].tolist()
    m = len(w)
    for i in range(m - 1):
        r = reachable_speed(w[i], D[i], a[i], j[i])
        if r < w[i + 1]:
            w[i + 1] = r
    for i in range(m - 2, -1, -1):
        r = reachable_speed(w[i + 1], D[i], a[i], j[i])
        if r < w[i]:
            w[i] = r
    return np.array(w)


def plan_program(program: IsoProgram, kin: MachineKinematics = MachineKinematics(),
                 set_point: float = 100.0, continuous: bool = True) -> SimResult:
    """Lookahead feed planning of ``program`` at feed ``set_point`` (mm/s).

    Speeds at block boundaries are capped by the junction model and are 0 at
    pass ends. With ``continuous`` the acceleration carries across block
    boundaries and returns to zero only where a speed cap binds; otherwise
    every block is planned as its own rest-of-acceleration S-curve.
    """
    if not set_point > 0:
        raise InvalidInputError("set point must be > 0")
    if program.block_count == 0:
        raise EmptyProgramError("program has no blocks")
    L, u, v_lim, a_lim, j_lim = _block_limits(program, kin, set_point)
    n = len(L)
    cum = np.concatenate([[0.0], np.cumsum(L)])
    cap = np.zeros(n + 1)
    cap[1:n] = _junctions(u, v_lim, kin)
    bounds = sorted({a for a, _ in program.pass_ranges} | {b for _, b in program.pass_ranges})
    cap[bounds] = 0.0
    S = np.arange(n + 1) if not continuous else np.array(bounds)
    while True:
        w = _lookahead(S, cap, cum, a_lim, j_lim)
        spans = _Spans(S, w, cum, v_lim, a_lim, j_lim)
        free = np.setdiff1d(np.arange(n + 1), S)
        if free.size == 0:
            break
        rows = np.searchsorted(S, free) - 1
        t = spans.time_at(rows, cum[free] - cum[S[rows]])
        v = spans.eval(rows, t)[1]
        bad = v > cap[free] * (1 + 1e-12) + 1e-12
        if not np.any(bad):
            break
        # per violating span pin the tightest cap
        fb, rb, cb = free[bad], rows[bad], cap[free[bad]]
        order = np.lexsort((fb, cb, rb))
        first = np.concatenate([[True], rb[order][1:] != rb[order][:-1]])
        S = np.union1d(S, fb[order][first])
    # slice span profiles into blocks
    rows = np.searchsorted(S, np.arange(n), side="right") - 1
    base = cum[S[rows]]
    t_a = spans.time_at(rows, cum[:-1] - base)
    t_b = spans.time_at(rows, cum[1:] - base)
    Tc = np.concatenate([np.zeros((len(spans.T), 1)), np.cumsum(spans.phases, axis=1)], axis=1)[rows]
    pieces = np.clip(np.minimum(Tc[:, 1:], t_b[:, None]) - np.maximum(Tc[:, :-1], t_a[:, None]), 0.0, None)
    _, v_in, a_in, _ = spans.eval(rows, t_a)
    _, v_out, _, _ = spans.eval(rows, t_b)
    # binding points carry their planned speed exactly (0 at pass ends)
    at_start = np.isin(np.arange(n), S)
    at_end = np.isin(np.arange(1, n + 1), S)
    pos = np.searchsorted(S, np.arange(n + 1))
    v_in = np.where(at_start, w[np.minimum(pos[:-1], len(S) - 1)], v_in)
    a_in = np.where(at_start, 0.0, a_in)
    v_out = np.where(at_end, w[np.minimum(pos[1:], len(S) - 1)], v_out)
    t_peak = Tc[:, 3]
    v_peak = np.where((t_peak >= t_a) & (t_peak <= t_b), spans.vp[rows], np.maximum(v_in, v_out))
    res = SimResult(float(set_point), L, u, v_in, v_out, v_peak, v_lim, a_lim, j_lim, pieces,
                    spans.jerks[rows], a_in)
    res.checks = {"binding_points": int(len(S))}
    return res


def check_feasibility(result: SimResult, kin: MachineKinematics, samples: int = 1000) -> dict:
    """Worst per-axis utilization of v/a/j (1.0 = at the limit).

    Combines ``samples`` global instants with an analytic check of every
    block's peak speed, peak acceleration and jerk level.
    """
    lims = [np.asarray(kin.v_max), np.asarray(kin.a_max), np.asarray(kin.j_max)]
    au = np.abs(result.directions)
    t = np.linspace(0.0, result.total_time, samples)
    rows, _, v, a, jk = result.sample(t)
    sampled = [np.max(np.abs(q)[:, None] * au[rows] / lim) for q, lim in zip((v, a, jk), lims)]
    acc_peak = result.peak_acceleration()
    analytic = [np.max(q[:, None] * au / lim) for q, lim in
                zip((result.v_peak, acc_peak, result.j_lim), lims)]
    return {"v": float(max(sampled[0], analytic[0])), "a": float(max(sampled[1], analytic[1])),
            "j": float(max(sampled[2], analytic[2])), "samples": samples}


def simulate(program: IsoProgram, kin: MachineKinematics = MachineKinematics(), set_point: float = 100.0,
             samples: int = 1000) -> SimResult:
    """Plan and validate against the axis limits."""
    result = plan_program(program, kin, set_point)
    checks = check_feasibility(result, kin, samples)
    for key in ("v", "a", "j"):
        if checks[key] > 1.0 + _SLACK:
            raise CurveGuideError(f"axis {key} limit exceeded by factor {checks[key]:.6f}")
    result.checks.update(checks)
    return result
