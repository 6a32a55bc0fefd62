import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curveguide.curvenet import single_area
from curveguide.errors import EmptyProgramError, InvalidInputError
from curveguide.feedsim import (MachineKinematics, axis_limited_feed, check_feasibility, junction_feed,
                                path_limits, plan_program, reachable_speed, ramp_distance, simulate)
from curveguide.fixtures import wavy
from curveguide.toolpath import IsoProgram, guidance_toolpath

from oracles import integrate_jerk, numeric_duration

KIN = MachineKinematics()


def single_block(length, direction=(1, 0, 0)):
    u = np.asarray(direction, float) / np.linalg.norm(direction)
    return IsoProgram([[(0, 0, 0), tuple(length * u)]], 6000.0)


def random_program(seed, passes=3, blocks=40):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(passes):
        steps = rng.uniform(0.05, 5.0, blocks)
        ang = np.cumsum(rng.normal(0, 0.4, blocks))
        dz = rng.normal(0, 0.2, blocks)
        d = np.column_stack([np.cos(ang), np.sin(ang), dz])
        d /= np.linalg.norm(d, axis=1)[:, None]
        out.append(np.vstack([[0, 0, 0], np.cumsum(steps[:, None] * d, axis=0)]))
    return IsoProgram(out, 6000.0)


def test_axis_limited_feed_examples():
    assert axis_limited_feed((1, 0, 0), KIN, 100) == 100
    assert axis_limited_feed((1, 0, 0), KIN, 600) == 500
    diag = (1 / math.sqrt(2), 1 / math.sqrt(2), 0)
    assert axis_limited_feed(diag, KIN, 600) == 600
    assert axis_limited_feed(diag, KIN, 800) == pytest.approx(707.1068, abs=1e-4)
    with pytest.raises(InvalidInputError):
        axis_limited_feed((0, 0, 0), KIN, 100)
    assert path_limits((0, 0, 1), KIN) == (500.0, 2000.0, 50000.0)


def test_junction_feed_examples():
    assert junction_feed((1, 0, 0), (1, 0, 0), KIN, 100) == 100
    assert junction_feed((1, 0, 0), (0, 1, 0), KIN, 100) == pytest.approx(30.0)
    assert junction_feed((1, 0, 0), (-1, 0, 0), KIN, 100) == pytest.approx(15.0)


def test_kinematics_validation_and_json():
    with pytest.raises(InvalidInputError):
        MachineKinematics(v_max=(500, 0, 500))
    with pytest.raises(InvalidInputError):
        MachineKinematics(t_cycle=0)
    assert MachineKinematics.from_json(KIN.to_json()) == KIN


def test_reachable_speed_inverts_ramp_distance():
    for v0, L in [(0, 0.01), (0, 5), (20, 1), (0, 500), (100, 30)]:
        v1 = reachable_speed(v0, L, 2500, 5000)
        assert ramp_distance(v0, v1, 2500, 5000) == pytest.approx(L, rel=1e-9)


def test_single_block_example():
    res = plan_program(single_block(100.0), KIN, 100.0)
    assert res.total_time == pytest.approx(2 * 2 * math.sqrt(0.02) + 71.7157 / 100, abs=1e-5)
    assert res.total_time == pytest.approx(1.2828, abs=1e-3)
    assert res.mean_feed[0] == pytest.approx(77.95, abs=0.05)
    plan = res.plans[0]
    assert plan.v_in == 0 and plan.v_out == 0 and plan.v_peak == pytest.approx(100.0)
    assert plan.phases[0] == pytest.approx(math.sqrt(0.1 / 5), rel=1e-9)
    # oracle; the speed vanishes at the end, so the crossing time is only good to a few us
    assert numeric_duration(plan.phases, plan.jerks, 0.0, 100.0) == pytest.approx(res.total_time, rel=1e-5)


def test_collinear_split_is_transparent():
    one = plan_program(single_block(100.0), KIN, 100.0)
    two = plan_program(IsoProgram([[(0, 0, 0), (50, 0, 0), (100, 0, 0)]], 6000.0), KIN, 100.0)
    assert abs(one.total_time - two.total_time) < 1e-9


def test_zigzag_reversals_capped_at_15():
    pts = [(20.0 * (i % 2), 0, 0) for i in range(11)]
    res = simulate(IsoProgram([pts], 6000.0), KIN, 100.0)
    np.testing.assert_allclose(res.v_in[1:], 15.0, rtol=1e-9)
    np.testing.assert_allclose(res.v_out[:-1], 15.0, rtol=1e-9)
    assert np.all(res.mean_feed < 0.6 * 100.0)
    for i in range(len(res)):
        p = res.plan(i)
        s, v = integrate_jerk(p.phases, p.jerks, p.v_in, p.a_in)
        assert s == pytest.approx(20.0, abs=1e-6)
        assert v == pytest.approx(p.v_out, abs=1e-6)


def test_oracle_equivalence_random_blocks():
    rng = np.random.default_rng(20240501)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        L = rng.uniform(1, 500)
        sp = rng.uniform(10, 500)
        d = rng.normal(size=3)
        res = plan_program(single_block(L, d), KIN, sp)
        p = res.plans[0]
        t_num = numeric_duration(p.phases, p.jerks, 0.0, L)
        worst = max(worst, abs(t_num - p.duration) / p.duration)
    assert worst < 0.005
    assert time.perf_counter() - t0 < 10.0


def test_set_point_monotonicity():
    f = wavy(3)
    prog = guidance_toolpath(f, single_area(f).areas[0])
    times = [simulate(prog, KIN, sp).total_time for sp in (2000 / 60, 4000 / 60, 100.0)]
    assert times[0] > times[1] > times[2]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["v_max", "a_max", "j_max", "t_cycle"]),
       st.integers(0, 2), st.floats(1.1, 3.0))
def test_raising_a_limit_never_slows_down(seed, name, axis, factor):
    prog = random_program(seed)
    base = plan_program(prog, KIN, 150.0).total_time
    if name == "t_cycle":
        kin = MachineKinematics(t_cycle=KIN.t_cycle * factor)
    else:
        vals = list(getattr(KIN, name))
        vals[axis] *= factor
        kin = MachineKinematics(**{**KIN.to_json(), name: tuple(vals)})
    assert plan_program(prog, kin, 150.0).total_time <= base * (1 + 1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(10.0, 500.0))
def test_feasibility_and_junction_consistency(seed, sp):
    prog = random_program(seed)
    res = simulate(prog, KIN, sp)
    chk = check_feasibility(res, KIN)
    assert max(chk["v"], chk["a"], chk["j"]) <= 1 + 1e-6
    assert len(res) == prog.block_count
    assert res.total_time == pytest.approx(res.durations.sum())
    s, e = prog.block_arrays()
    for a, b in prog.pass_ranges:
        assert res.v_in[a] == 0 and res.v_out[b - 1] == 0
        for k in range(a, b - 1):
            assert res.v_out[k] == pytest.approx(res.v_in[k + 1], abs=1e-9)
            cap = junction_feed(e[k] - s[k], e[k + 1] - s[k + 1], KIN, sp)
            assert res.v_out[k] <= cap * (1 + 1e-9)
    assert np.all(res.v_in <= res.v_peak + 1e-9) and np.all(res.v_out <= res.v_peak + 1e-9)
    assert np.all(res.v_peak <= res.v_lim * (1 + 1e-9))


def test_distance_exactness_by_integration():
    prog = random_program(11, passes=1, blocks=60)
    res = plan_program(prog, KIN, 200.0)
    for i in range(len(res)):
        p = res.plan(i)
        dist, v_end = integrate_jerk(p.phases, p.jerks, p.v_in, p.a_in)
        assert dist == pytest.approx(p.length, abs=1e-6)
        assert v_end == pytest.approx(p.v_out, abs=1e-6)


def test_literal_mode_is_slower_but_agrees_on_one_block():
    prog = random_program(5)
    cont = plan_program(prog, KIN, 100.0)
    lit = plan_program(prog, KIN, 100.0, continuous=False)
    assert np.all(lit.a_in == 0)
    assert lit.total_time >= cont.total_time
    one = single_block(100.0)
    assert plan_program(one, KIN, 100.0, continuous=False).total_time == pytest.approx(
        plan_program(one, KIN, 100.0).total_time, abs=1e-12)
    assert check_feasibility(lit, KIN)["a"] <= 1 + 1e-6


def test_simulate_errors_and_json():
    with pytest.raises(EmptyProgramError):
        simulate(IsoProgram([], 6000.0))
    prog = single_block(10.0)
    with pytest.raises(InvalidInputError):
        simulate(prog, KIN, 0.0)
    doc = simulate(prog, KIN, 50.0).to_json()
    assert set(doc) == {"set_point", "total_time_s", "blocks"}
    assert set(doc["blocks"][0]) == {"i", "len_mm", "v_in", "v_peak", "v_out", "t_s", "mean_feed"}
    assert doc["blocks"][0]["mean_feed"] == pytest.approx(10.0 / doc["total_time_s"])


def test_sampled_motion_is_continuous():
    prog = random_program(2, passes=1)
    res = simulate(prog, KIN, 120.0)
    t = np.linspace(0, res.total_time, 20001)
    _, s, v, a, _ = res.sample(t)
    assert np.max(np.abs(np.diff(v))) < 1.0
    assert np.max(np.abs(np.diff(a))) < 20.0
