import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curveguide.curvenet import build_net, compose_boundary_direction, compose_median, single_area
from curveguide.errors import DegenerateInputError, EmptyProgramError, InvalidInputError
from curveguide.fixtures import converging, flat_straight, master_like, wavy
from curveguide.geometry import Point3, points_at_stations
from curveguide.toolpath import (IsoBlock, IsoProgram, StrategyParams, Tool, concat_programs,
                                 guidance_toolpath, linearize, linearize_indices, max_gap,
                                 parallel_planes_toolpath, program_for_composed, stepover_from_cusp)

from oracles import (chordal_deviation, polyline_distance, sagitta_chord, sampled_scallops,
                     scallop_two_spheres, seg_distance)


@pytest.fixture(scope="module")
def master():
    f = master_like()
    area = single_area(f).areas[0]
    return f, area, guidance_toolpath(f, area), parallel_planes_toolpath(f, area)


def test_stepover_values():
    assert stepover_from_cusp(Tool(2.0), 0.01) == pytest.approx(0.3994996871, abs=1e-9)
    # 2 sqrt(2 R h - h^2) at R=5, confirmed by the two-sphere oracle below
    assert stepover_from_cusp(Tool(5.0), 0.01) == pytest.approx(0.6321392252, abs=1e-9)
    with pytest.raises(InvalidInputError):
        stepover_from_cusp(Tool(2.0), 2.0)
    with pytest.raises(InvalidInputError):
        Tool(0.0)


def test_stepover_matches_two_sphere_scallop_on_plane():
    from curveguide.geometry import AnalyticSurface
    flat = AnalyticSurface("flat", ((-5, 5), (-5, 5)))
    for R in (2.0, 5.0):
        w = stepover_from_cusp(Tool(R), 0.01)
        assert scallop_two_spheres(flat, (0, 0, 0), (0, w, 0), R) == pytest.approx(0.01, abs=1e-9)


def test_max_gap_reduces_to_stepover_on_plane():
    assert max_gap(2.0, 0.01) == pytest.approx(stepover_from_cusp(Tool(2.0), 0.01), rel=1e-12)
    assert max_gap(2.0, 0.01, 0.1) < max_gap(2.0, 0.01)


def test_strategy_params_validation():
    with pytest.raises(InvalidInputError):
        StrategyParams(chordal_tolerance=0)
    with pytest.raises(InvalidInputError):
        StrategyParams(sweep="upward")
    with pytest.raises(InvalidInputError):
        StrategyParams(overrun=-1)
    with pytest.raises(InvalidInputError):
        StrategyParams(cusp_height=3.0).check_tool(Tool(2.0))


def test_linearize_collinear_is_one_block():
    pts = np.column_stack([np.linspace(0, 10, 101), np.linspace(0, 5, 101), np.zeros(101)])
    blocks = linearize(pts, 0.01)
    assert len(blocks) == 1 and blocks[0].length == pytest.approx(math.hypot(10, 5))


def test_linearize_circle_chords_respect_sagitta():
    R, tol = 50.0, 0.01
    th = np.linspace(0, math.pi / 2, 4001)
    pts = np.column_stack([R * np.cos(th), R * np.sin(th), np.zeros_like(th)])
    blocks = linearize(pts, tol)
    lengths = np.array([b.length for b in blocks])
    assert np.all(lengths <= 2.0)
    assert lengths.max() == pytest.approx(sagitta_chord(R, tol), rel=0.01)
    assert len(blocks) >= (R * math.pi / 2) / 2.0
    assert 40 <= len(blocks) <= 120
    for a, b in zip(blocks, blocks[1:]):
        assert tuple(a.end) == tuple(b.start)


def test_linearize_errors():
    with pytest.raises(DegenerateInputError):
        linearize([(1, 1, 1)] * 5, 0.01)
    with pytest.raises(InvalidInputError):
        linearize([(1, 1, 1)], 0.01)
    with pytest.raises(DegenerateInputError):
        IsoBlock(Point3(0, 0, 0), Point3(0, 0, 0), 100.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.001, 0.05))
def test_linearize_chordal_bound(seed, tol):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 20, 400)
    a, w = rng.uniform(0.5, 3, 2)
    pts = np.column_stack([t, a * np.sin(t / w), 0.3 * np.cos(t / (2 * w))])
    idx = linearize_indices(pts, tol)
    assert idx[0] == 0 and idx[-1] == len(pts) - 1
    for i, j in zip(idx[:-1], idx[1:]):
        for p in pts[i + 1:j]:
            assert seg_distance(p, pts[i], pts[j]) <= tol + 1e-12
        # greedy: one more dense point would break the tolerance
        if j < len(pts) - 1:
            assert max(seg_distance(p, pts[i], pts[j + 1]) for p in pts[i + 1:j + 1]) > tol


def test_parallel_planes_flat_straight():
    f = flat_straight()
    prog = parallel_planes_toolpath(f, single_area(f).areas[0])
    assert len(prog.passes) >= math.ceil(10 / 0.3995)
    assert all(c == 1 for c in prog.block_counts)
    np.testing.assert_allclose(prog.block_lengths(), 20.0, atol=1e-9)
    assert prog.header["basic_dir"] == [1.0, 0.0]


def test_parallel_planes_converging_lengths():
    f = converging()
    prog = parallel_planes_toolpath(f, single_area(f).areas[0], (1.0, 0.0))
    ys = np.array([p[0, 1] for p in prog.passes])
    order = np.argsort(ys)
    lengths = np.array([np.linalg.norm(p[-1] - p[0]) for p in prog.passes])[order]
    ys = ys[order]
    assert np.all(np.diff(lengths) <= 1e-9)
    # planes crossing the converging guide shorten strictly; the others span the full 20 mm
    cut = ys > 2.0
    assert np.all(np.diff(lengths[cut]) < 0)
    np.testing.assert_allclose(lengths[~cut], 20.0, atol=1e-9)
    np.testing.assert_allclose(lengths[cut], (10 - ys[cut]) / 0.4, atol=1e-6)


def test_strategies_agree_on_flat_straight():
    f = flat_straight()
    area = single_area(f).areas[0]
    pp = parallel_planes_toolpath(f, area)
    gd = guidance_toolpath(f, area)
    assert gd.path_length == pytest.approx(pp.path_length, rel=1e-3)
    assert len(gd.passes) == len(pp.passes)


def test_guidance_passes_follow_guides(master):
    f, area, gd, _ = master
    rng = np.random.default_rng(7)
    lo, hi = f.station_range
    stations = rng.uniform(lo, hi, 60)
    for guide in (area.lower, area.upper):
        pts = points_at_stations(guide, stations, f.direction)
        best = min(max(polyline_distance(p, poly) for p in pts) for poly in (gd.passes[0], gd.passes[-1]))
        assert best <= StrategyParams().chordal_tolerance


def test_chordal_bound_on_programs(master):
    _, _, gd, pp = master
    assert chordal_deviation(gd) <= 0.01 + 1e-12
    assert chordal_deviation(pp) <= 0.01 + 1e-12


def test_pass_continuity(master):
    _, _, gd, _ = master
    s, e = gd.block_arrays()
    for a, b in gd.pass_ranges:
        np.testing.assert_array_equal(s[a + 1:b], e[a:b - 1])


def test_scallop_bound_on_fixture(master):
    f, _, gd, pp = master
    rng = np.random.default_rng(2024)
    tool = Tool()
    assert sampled_scallops(f, gd, tool, 100, rng).max() <= 1.05 * 0.01
    assert sampled_scallops(f, pp, tool, 100, rng, by_level=True).max() <= 1.05 * 0.01


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 300))
def test_scallop_bound_on_random_features(seed):
    f = wavy(seed)
    prog = guidance_toolpath(f, single_area(f).areas[0])
    s = sampled_scallops(f, prog, Tool(), 30, np.random.default_rng(seed))
    assert s.max() <= 1.05 * 0.01


def test_short_blocks_guidance_vs_parallel(master):
    _, _, gd, pp = master
    short_g = np.mean(gd.block_lengths() < 1.0)
    short_p = np.mean(pp.block_lengths() < 1.0)
    assert short_g < 0.05
    assert short_p > short_g


def test_zigzag_and_one_way():
    f = flat_straight()
    area = single_area(f).areas[0]
    zz = guidance_toolpath(f, area)
    dirs = [np.sign(p[-1, 0] - p[0, 0]) for p in zz.passes]
    assert dirs[:4] == [1, -1, 1, -1]
    ow = guidance_toolpath(f, area, params=StrategyParams(sweep="one-way"))
    assert all(p[-1, 0] > p[0, 0] for p in ow.passes)


def test_program_starts_on_lower_side(master):
    f, area, gd, pp = master
    first_y = gd.passes[0][:, 1].mean()
    lower_z = points_at_stations(area.lower, np.linspace(0, 140, 50), f.direction)[:, 2].mean()
    upper_z = points_at_stations(area.upper, np.linspace(0, 140, 50), f.direction)[:, 2].mean()
    start_low = lower_z <= upper_z
    assert (first_y < gd.passes[-1][:, 1].mean()) == start_low
    assert (pp.passes[0][:, 1].mean() < pp.passes[-1][:, 1].mean()) == start_low


def test_degenerate_area_gives_single_pass():
    from curveguide.fixtures import feature_from_functions
    from curveguide.geometry import AnalyticSurface
    surface = AnalyticSurface("flat", ((-5, 25), (-5, 5)))
    f = feature_from_functions("thin", lambda x: 0 * x, lambda x: 0.3 + 0 * x, 0, 20, surface)
    prog = guidance_toolpath(f, single_area(f).areas[0])
    assert len(prog.passes) == 1
    np.testing.assert_allclose(prog.passes[0][:, 1], 0.15, atol=1e-9)


def test_composed_programs(master):
    f, _, gd, _ = master
    one = program_for_composed(f, single_area(f))
    assert one == gd
    net = build_net(f.boundary1, f.boundary2, 0.25, 5, f)
    ma1 = program_for_composed(f, compose_boundary_direction(net, 1))
    assert ma1.block_count >= gd.block_count
    assert ma1.path_length >= gd.path_length
    assert len(ma1.areas) == 2 and ma1.areas[0][1] == ma1.areas[1][0]
    assert ma1.block_area_index().max() == 1


def test_composed_cache_gives_identical_program():
    f = master_like()
    ca = compose_median(f, 0.5, 5, levels=1)
    cache = {}
    a = program_for_composed(f, ca, cache=cache)
    b = program_for_composed(f, ca, cache=cache)
    assert a == b and len(cache) == 4
    assert a == program_for_composed(f, ca)


def test_program_serialization_round_trips(master):
    _, _, gd, _ = master
    assert IsoProgram.from_json(gd.to_json()) == gd
    text = gd.to_gcode()
    assert text.startswith("(curveguide") and text.rstrip().endswith("M30")
    assert "(ball_radius=2.0)" in text and "(chordal_tolerance=0.01)" in text
    first_g1 = next(line for line in text.splitlines() if " G1 " in line)
    assert first_g1.startswith("N1 G1 X") and first_g1.endswith("F6000")
    back = IsoProgram.from_gcode(text)
    assert back.block_count == gd.block_count and len(back.passes) == len(gd.passes)
    for p, q in zip(back.passes, gd.passes):
        assert np.max(np.abs(p - q)) <= 5e-5
    with pytest.raises(EmptyProgramError):
        IsoProgram.from_gcode("G21 G90\nM30\n")


def test_program_rejects_bad_passes():
    with pytest.raises(EmptyProgramError):
        IsoProgram([], 100.0)
    with pytest.raises(DegenerateInputError):
        IsoProgram([[(0, 0, 0), (0, 0, 0)]], 100.0)
    with pytest.raises(InvalidInputError):
        IsoProgram([[(0, 0, 0)]], 100.0)


def test_concat_keeps_area_ranges():
    a = IsoProgram([[(0, 0, 0), (1, 0, 0)]], 100.0)
    b = IsoProgram([[(0, 1, 0), (1, 1, 0)], [(0, 2, 0), (1, 2, 0)]], 100.0)
    c = concat_programs([a, b])
    assert c.areas == [(0, 1), (1, 3)] and c.block_count == 3
