import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curveguide.errors import (AmbiguityError, DegenerateInputError, GeometryError, InvalidInputError, OutOfRangeError)
from curveguide.geometry import (AnalyticSurface, BicubicSurface, DiscretizationPlane, FeatureModel, Point3,
                                 SplineCurve, curvature_profile, curve_plane_point, fit_spline,
                                 inflection_stations, interpolation_params, min_distance, min_distance_at, min_radius, planes,
                                 points_at_stations, project_to_surface, surface_from_json)
from curveguide.fixtures import flat_straight, master_like


def line(a, b, n=2):
    return fit_spline(np.linspace(a, b, n))


def graph(fn, x0, x1, n):
    x = np.linspace(x0, x1, n)
    return fit_spline(np.column_stack([x, fn(x), np.zeros(n)]))


def test_point3_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        Point3(0.0, math.nan, 1.0)
    assert tuple(Point3(1, 2, 3)) == (1.0, 2.0, 3.0)


def test_fit_two_points_is_degree_one_segment():
    c = fit_spline([(0, 0, 0), (10, 0, 0)])
    assert c.degree == 1
    np.testing.assert_allclose(c(0.3), [3.0, 0, 0], atol=1e-12)


def test_fit_collinear_points_stays_on_line():
    x = np.linspace(0, 6, 7)
    c = fit_spline(np.column_stack([x, 2 * x, np.zeros(7)]))
    p = c(np.linspace(0, 1, 100))
    assert np.max(np.abs(p[:, 1] - 2 * p[:, 0])) < 1e-9


def test_fit_sin_interpolates_and_tracks_function():
    x = np.linspace(0, 6, 12)
    pts = np.column_stack([x, np.sin(x), np.zeros(12)])
    c = fit_spline(pts)
    assert c.degree == 5
    st_ = points_at_stations(c, x, (1, 0))
    np.testing.assert_allclose(st_, pts, atol=1e-9)
    mids = 0.5 * (x[1:] + x[:-1])
    pm = points_at_stations(c, mids, (1, 0))
    assert np.max(np.abs(pm[:, 1] - np.sin(mids))) < 1e-3


def test_fit_errors():
    with pytest.raises(InvalidInputError):
        fit_spline([(0, 0, 0)])
    with pytest.raises(DegenerateInputError):
        fit_spline([(0, 0, 0), (0, 0, 0), (1, 0, 0)])


def test_degree_falls_back_with_few_points():
    c = fit_spline([(0, 0, 0), (1, 1, 0), (2, 0, 0), (3, 1, 0)])
    assert c.degree == 3


def test_spline_rejects_unclamped_knots():
    with pytest.raises(InvalidInputError):
        SplineCurve(1, np.zeros((2, 3)), np.array([0.0, 0.1, 0.9, 1.0]))


def test_curve_json_round_trip():
    c = graph(np.sin, 0, 6, 12)
    assert SplineCurve.from_json(c.to_json()) == c


def test_station_parameterization_does_not_overshoot_end_planes():
    # a tilted end-to-end chord lets x(t) overshoot; the machining direction does not
    rng = np.random.default_rng(273)
    x = np.linspace(0, 20, 12)
    pts = np.column_stack([x, rng.uniform(0, 3, 12), np.zeros(12)])
    c = fit_spline(pts, direction=(1, 0))
    xs = c(np.linspace(0, 1, 2001))[:, 0]
    np.testing.assert_allclose(xs, np.linspace(0, 20, 2001), atol=1e-9)
    assert curve_plane_point(c, DiscretizationPlane(20.0, (1.0, 0.0))).x == pytest.approx(20.0)


def test_plane_point_on_line():
    p = curve_plane_point(line([0, 0, 0], [10, 0, 0]), DiscretizationPlane(4.0, (1.0, 0.0)))
    np.testing.assert_allclose(tuple(p), (4, 0, 0), atol=1e-9)


def test_plane_point_parabola_and_out_of_range():
    c = graph(lambda x: x * x, 0, 5, 30)
    p = curve_plane_point(c, DiscretizationPlane(3.0, (1.0, 0.0)))
    assert abs(p.x - 3) < 1e-9 and abs(p.y - 9) < 1e-3
    with pytest.raises(OutOfRangeError):
        curve_plane_point(c, DiscretizationPlane(-1.0, (1.0, 0.0)))


def test_plane_point_ambiguous_for_folded_curve():
    pts = [(0, 0, 0), (5, 1, 0), (10, 2, 0), (5, 3, 0), (0, 4, 0)]
    c = fit_spline(pts, param="chord")
    with pytest.raises(AmbiguityError):
        curve_plane_point(c, DiscretizationPlane(3.0, (1.0, 0.0)))


def test_plane_rejects_non_unit_normal():
    with pytest.raises(InvalidInputError):
        DiscretizationPlane(0.0, (2.0, 0.0))


def test_min_distance_parallel_lines():
    a = line([0, 0, 0], [10, 0, 0])
    b = line([0, 3, 0], [10, 3, 0])
    d, s = min_distance(a, b, planes(np.arange(0, 11, 1.0)))
    assert d == pytest.approx(3.0) and s == 0.0


def test_min_distance_detects_crossing():
    a = line([0, 0, 0], [10, 0, 0])
    b = line([0, -5, 0], [10, 5, 0])
    d, s = min_distance(a, b, planes(np.arange(0, 10.5, 1.0)))
    assert d == 0.0 and s == pytest.approx(5.0)


def test_min_distance_wave_gap():
    a = line([0, 0, 0], [6, 0, 0])
    b = graph(lambda x: 1 + 0.5 * np.sin(x), 0, 6, 61)
    d, s = min_distance(a, b, planes(np.arange(0, 6.0001, 0.1)))
    assert d == pytest.approx(0.5, abs=0.01)
    assert s == pytest.approx(3 * math.pi / 2, abs=0.06)


def test_min_distance_empty_stations():
    a = line([0, 0, 0], [6, 0, 0])
    with pytest.raises(InvalidInputError):
        min_distance(a, a, [])


def test_curvature_of_line_and_circle():
    assert all(k == pytest.approx(0.0, abs=1e-12) for _, k in curvature_profile(line([0, 0, 0], [5, 5, 0], 6), 50))
    assert min_radius(line([0, 0, 0], [5, 5, 0], 6)) == math.inf
    th = np.linspace(0.2, 1.4, 20)
    c = fit_spline(np.column_stack([7 * np.cos(th), 7 * np.sin(th), np.zeros(20)]))
    ks = np.array([k for _, k in curvature_profile(c, 200)])
    assert np.max(np.abs(ks - 1 / 7)) < 1e-3


@pytest.mark.parametrize("R", [2.0, 7.0, 50.0])
def test_circle_curvature_within_one_percent(R):
    th = np.linspace(-0.6, 0.6, 40)
    c = fit_spline(np.column_stack([R * np.sin(th), R * np.cos(th), np.zeros(40)]))
    ks = np.array([k for _, k in curvature_profile(c, 400)])[1:-1]
    assert np.max(np.abs(ks * R - 1)) < 0.01


def test_sin_max_curvature():
    c = graph(np.sin, 0, 2 * math.pi, 60)
    assert 1 / min_radius(c) == pytest.approx(1.0, abs=0.02)


def test_curvature_reports_undefined_when_derivative_vanishes():
    # repeated middle control point: zero speed at t=0.5 for a degree-2 curve
    c = SplineCurve(2, np.array([[0, 0, 0], [1, 1, 0], [1, 1, 0], [2, 0, 0]], float),
                    np.array([0, 0, 0, 0.5, 1, 1, 1.0]))
    ks = dict(curvature_profile(c, 3))
    assert ks[0.5] is None
    # both legs are straight; the undefined sample is skipped
    assert min_radius(c) == math.inf


def test_inflections():
    assert inflection_stations(line([0, 0, 0], [10, 2, 0], 5)) == []
    c = graph(np.sin, 0, 2 * math.pi, 120)
    infl = inflection_stations(c)
    assert len(infl) == 1 and infl[0] == pytest.approx(math.pi, abs=1e-3)
    th = np.linspace(0.3, 1.2, 30)
    arc = fit_spline(np.column_stack([10 * np.cos(th)[::-1], 10 * np.sin(th)[::-1], np.zeros(30)]))
    assert inflection_stations(arc) == []


@pytest.mark.parametrize("k", [1, 2, 3])
def test_inflection_count_for_sin_kx(k):
    c = graph(lambda x: np.sin(k * x), 0, 2 * math.pi, 120)
    assert len(inflection_stations(c)) == 2 * k - 1


def test_project_to_surface():
    flat = AnalyticSurface("flat", ((-5, 5), (-5, 5)))
    assert tuple(project_to_surface((1, 2, 9), flat)) == (1, 2, 0)
    pl = AnalyticSurface("plane", ((-5, 5), (-5, 5)), {"a": 1.0, "b": 1.0})
    assert tuple(project_to_surface((1, 2, 0), pl)) == (1, 2, 3)
    f = master_like()
    (x0, _), (y0, _) = f.surface.domain
    assert math.isfinite(project_to_surface((x0, y0, 0), f.surface).z)
    with pytest.raises(OutOfRangeError):
        project_to_surface((x0 - 1, y0, 0), f.surface)


def test_bicubic_surface_reproduces_cubic_and_round_trips():
    xs, ys = np.linspace(0, 10, 11), np.linspace(0, 5, 6)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    s = BicubicSurface(xs, ys, 0.01 * X ** 3 + 0.2 * Y ** 2)
    assert s.height(3.3, 2.2) == pytest.approx(0.01 * 3.3 ** 3 + 0.2 * 2.2 ** 2, abs=1e-9)
    s2 = surface_from_json(s.to_json())
    assert s2.height(7.1, 1.3) == s.height(7.1, 1.3)


def test_feature_validation_and_json():
    f = master_like()
    f.validate()
    g = FeatureModel.from_json(f.to_json())
    assert g.boundary1 == f.boundary1 and g.boundary2 == f.boundary2
    assert g.surface.height(10, 10) == f.surface.height(10, 10)
    assert f.station_range == pytest.approx((0.0, 140.0))


def test_feature_rejects_crossing_boundaries():
    f = flat_straight()
    crossing = line([0, 10, 0], [20, -2, 0], 9)
    with pytest.raises(GeometryError, match="cross"):
        FeatureModel(f.surface, f.boundary1, crossing).validate()


def test_feature_rejects_off_surface_boundary():
    f = flat_straight()
    lifted = line([0, 10, 0.5], [20, 10, 0.5])
    with pytest.raises(GeometryError, match="off the surface"):
        FeatureModel(f.surface, f.boundary1, lifted).validate()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=20), st.floats(0.5, 3.0))
def test_interpolation_exactness(ys, dx):
    x = np.arange(len(ys)) * dx
    pts = np.column_stack([x, ys, np.zeros(len(ys))])
    c = fit_spline(pts)
    np.testing.assert_allclose(c(interpolation_params(pts)), pts, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.integers(0, 10_000))
def test_plane_point_consistency(frac, seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 20, 15)
    c = fit_spline(np.column_stack([x, rng.uniform(-1, 1, 15), rng.uniform(-1, 1, 15)]))
    station = 20 * frac
    p = curve_plane_point(c, DiscretizationPlane(station, (1.0, 0.0)))
    assert abs(p.x - station) < 1e-9
    # the point is on the curve: the curve passes through it at some parameter
    ts = np.linspace(0, 1, 4001)
    assert np.min(np.linalg.norm(c(ts) - p.as_array(), axis=1)) < 0.05


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_min_distance_symmetry(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 20, 12)
    a = fit_spline(np.column_stack([x, rng.uniform(-1, 1, 12), np.zeros(12)]), direction=(1, 0))
    b = fit_spline(np.column_stack([x, rng.uniform(0, 3, 12), np.zeros(12)]), direction=(1, 0))
    S = planes(np.linspace(0, 20, 41))
    assert min_distance(a, b, S) == min_distance(b, a, S)
    assert min_distance_at(a, b, np.linspace(0, 20, 41), (1, 0)) == min_distance(a, b, S)
