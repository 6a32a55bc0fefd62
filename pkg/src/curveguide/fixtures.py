"""Synthetic bottom features.

``master-like`` is a parametric stand-in for a forging-die bottom feature:
two curved, non-parallel closed boundaries over a wavy floor, 140 mm long in
the machining direction. Its parameters are fixture definitions only.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .geometry import AnalyticSurface, FeatureModel, SurfacePatch, fit_spline

SAMPLE_STEP = 0.5  # mm between boundary samples


def boundary_from_function(fn: Callable, x0: float, x1: float, surface: SurfacePatch,
                           step: float = SAMPLE_STEP):
    """Boundary ``y = fn(x)`` on the surface, interpolated through samples every ``step`` mm."""
    n = max(2, int(math.ceil((x1 - x0) / step)) + 1)
    x = np.linspace(x0, x1, n)
    y = np.asarray(fn(x), dtype=float) * np.ones_like(x)
    z = surface.z(x, y)
    return fit_spline(np.column_stack([x, y, z]), 5, direction=(1.0, 0.0))


def feature_from_functions(name: str, b1: Callable, b2: Callable, x0: float, x1: float,
                           surface: SurfacePatch, step: float = SAMPLE_STEP) -> FeatureModel:
    return FeatureModel(
        surface=surface,
        boundary1=boundary_from_function(b1, x0, x1, surface, step),
        boundary2=boundary_from_function(b2, x0, x1, surface, step),
        machining_dir=(1.0, 0.0),
        name=name,
    )


def master_like(length: float = 140.0, amplitude: float = 2.0) -> FeatureModel:
    surface = AnalyticSurface("wave", ((-10.0, length + 10.0), (-5.0, 55.0)),
                              {"amplitude": amplitude, "wavelength_x": 35.0, "wavelength_y": 60.0})
    return feature_from_functions(
        "master-like",
        lambda x: 10.0 + 6.0 * np.sin(2 * np.pi * x / 70.0),
        lambda x: 40.0 - 0.1 * x + 4.0 * np.sin(2 * np.pi * x / 50.0 + 1.0),
        0.0, length, surface,
    )


def flat_straight(length: float = 20.0, width: float = 10.0) -> FeatureModel:
    surface = AnalyticSurface("flat", ((-5.0, length + 5.0), (-5.0, width + 5.0)))
    return feature_from_functions("flat-straight", lambda x: 0.0 * x, lambda x: width + 0.0 * x,
                                  0.0, length, surface)


def converging(length: float = 20.0, width: float = 10.0, slope: float = 0.4) -> FeatureModel:
    surface = AnalyticSurface("flat", ((-5.0, length + 5.0), (-5.0, width + 5.0)))
    return feature_from_functions("converging", lambda x: 0.0 * x, lambda x: width - slope * x,
                                  0.0, length, surface)


def wavy(seed: int = 0, length: float = 60.0) -> FeatureModel:
    """Random wavy-boundary feature; boundaries are kept at least 4 mm apart."""
    rng = np.random.default_rng(seed)
    a1, a2 = rng.uniform(0.5, 4.0, 2)
    w1, w2 = rng.uniform(15.0, 60.0, 2)
    p1, p2 = rng.uniform(0, 2 * np.pi, 2)
    gap = a1 + a2 + rng.uniform(4.0, 20.0)
    tilt = rng.uniform(-0.05, 0.05)
    surface_kind = rng.choice(["flat", "wave"])
    if surface_kind == "flat":
        surface = AnalyticSurface("flat", ((-5.0, length + 5.0), (-10.0, gap + 20.0)))
    else:
        surface = AnalyticSurface("wave", ((-5.0, length + 5.0), (-10.0, gap + 20.0)),
                                  {"amplitude": rng.uniform(0.5, 2.0), "wavelength_x": 35.0,
                                   "wavelength_y": 60.0})
    return feature_from_functions(
        f"wavy-{seed}",
        lambda x: a1 * np.sin(2 * np.pi * x / w1 + p1),
        lambda x: gap + tilt * x + a2 * np.sin(2 * np.pi * x / w2 + p2),
        0.0, length, surface,
    )


FEATURES: dict[str, Callable[..., FeatureModel]] = {
    "master-like": master_like,
    "flat-straight": flat_straight,
    "converging": converging,
    "wavy": wavy,
}


def make_feature(name: str, **params) -> FeatureModel:
    if name not in FEATURES:
        raise InvalidInputError(f"unknown feature fixture {name!r}; known: {', '.join(sorted(FEATURES))}")
    try:
        return FEATURES[name](**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for fixture {name!r}: {exc}") from exc
