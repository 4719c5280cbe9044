from __future__ import annotations

import math

import numpy as np
import pytest

from instability_atlas.dynamics import LiftedMap, standard_map
from instability_atlas.error import EmptyCloudError, ResolutionTooCoarseError
from instability_atlas.manifolds import loop_self_crossings
from instability_atlas.periodic import PeriodicOrbit, Window, find_all_pq
from instability_atlas.topology import (
    AnnulusTree,
    EquivalenceStatus,
    EssentialityStatus,
    classify_essentiality,
    hausdorff,
    k_equivalent,
    sample_K,
)


def hyperbolic_orbit(lifted_map: LiftedMap, p: int, q: int, window: Window, **kwargs: bool) -> PeriodicOrbit:
    orbits = find_all_pq(lifted_map, p, q, window, 20, 20, **kwargs)
    return next(orbit for orbit in orbits if orbit.is_hyperbolic)


def island_radius(orbit: PeriodicOrbit) -> float:
    points = orbit.as_array()
    return float(np.hypot(points[:, 0] - np.round(points[:, 0]), points[:, 1]).max())


def test_primary_resonance_below_breakup_is_essential() -> None:
    lifted_map = standard_map(0.8)
    saddle = hyperbolic_orbit(lifted_map, 0, 1, Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5))
    verdict = classify_essentiality(lifted_map, saddle, 10.0, 1.0 / 512.0)
    assert verdict.status == EssentialityStatus.ESSENTIAL
    assert verdict.is_essential
    assert verdict.certificate is not None
    np.testing.assert_array_equal(verdict.certificate[-1], verdict.certificate[0] + np.array([1.0, 0.0]))
    assert loop_self_crossings(verdict.certificate) == 0
    assert np.all((verdict.certificate[:, 1] >= verdict.band[0]) & (verdict.certificate[:, 1] <= verdict.band[1]))
    assert verdict.band[0] < -0.1 < 0.1 < verdict.band[1]


def test_chain_inside_an_island_is_not_essential(standard_k1: LiftedMap) -> None:
    window = Window(x0=-0.3, x1=0.3, y0=-0.3, y1=0.3)
    orbits = find_all_pq(standard_k1, 0, 7, window, 40, 40, coprime=False)
    inside = [orbit for orbit in orbits if orbit.is_hyperbolic and island_radius(orbit) < 0.35]
    assert inside
    chain = min(inside, key=island_radius)

    verdict = classify_essentiality(standard_k1, chain, 20.0, 1.0 / 256.0)
    assert verdict.status == EssentialityStatus.NOT_FOUND_UP_TO
    assert verdict.certificate is None
    assert verdict.separation_mask is not None


def test_zero_arclength_finds_nothing(saddle_k1: PeriodicOrbit, standard_k1: LiftedMap) -> None:
    verdict = classify_essentiality(standard_k1, saddle_k1, 0.0, 1.0 / 64.0)
    assert verdict.status == EssentialityStatus.NOT_FOUND_UP_TO
    assert verdict.arclength == 0.0


def test_resolution_limits(saddle_k1: PeriodicOrbit, standard_k1: LiftedMap) -> None:
    with pytest.raises(ValueError, match="positive"):
        classify_essentiality(standard_k1, saddle_k1, 1.0, 0.0)
    with pytest.raises(ResolutionTooCoarseError):
        classify_essentiality(standard_k1, saddle_k1, 1.0, 0.2)


def test_cloud_at_zero_arclength_is_the_orbit(standard_k1: LiftedMap) -> None:
    orbit = hyperbolic_orbit(standard_k1, 1, 2, Window(x0=0.0, x1=1.0, y0=0.0, y1=1.0))
    cloud = sample_K(standard_k1, orbit, 0.0)
    assert cloud.points.shape == (2, 2)
    assert cloud.orbit_id == orbit.orbit_id


def test_clouds_grow_with_arclength(standard_k15: LiftedMap, saddle_k15: PeriodicOrbit) -> None:
    short = sample_K(standard_k15, saddle_k15, 10.0)
    long = sample_K(standard_k15, saddle_k15, 20.0)
    assert len(long.points) > len(short.points)
    assert np.all((long.points[:, 0] >= 0.0) & (long.points[:, 0] < 1.0))
    tree = AnnulusTree(long.points, (min(long.y_range[0], short.y_range[0]), max(long.y_range[1], short.y_range[1])))
    distances, _ = tree.query(short.points)
    assert distances.max() < 1e-5


def test_hausdorff_distance() -> None:
    cloud = np.array([[0.1, 0.1], [0.2, 0.2]])
    assert hausdorff(cloud, cloud) == 0.0
    extended = np.vstack([cloud, [[0.2, 0.45]]])
    assert hausdorff(cloud, extended) == pytest.approx(0.25)
    assert hausdorff(extended, cloud) == pytest.approx(0.25)


def test_hausdorff_is_periodic_in_x() -> None:
    assert hausdorff(np.array([[0.95, 0.0]]), np.array([[0.05, 0.0]])) == pytest.approx(0.1)
    assert hausdorff(np.array([[1.95, 0.0]]), np.array([[-0.05, 0.0]])) == pytest.approx(0.0, abs=1e-12)


def test_hausdorff_of_empty_cloud() -> None:
    with pytest.raises(EmptyCloudError):
        hausdorff(np.empty((0, 2)), np.array([[0.0, 0.0]]))


def test_annulus_tree_wraps() -> None:
    tree = AnnulusTree(np.array([[0.98, 0.0], [0.5, 0.3]]), (0.0, 0.3))
    distances, indices = tree.query(np.array([[0.01, 0.0]]))
    assert distances[0] == pytest.approx(0.03)
    assert indices[0] == 0


def test_orbit_is_equivalent_to_itself(standard_k15: LiftedMap, saddle_k15: PeriodicOrbit) -> None:
    verdict = k_equivalent(standard_k15, saddle_k15, saddle_k15, 20.0)
    assert verdict.status == EquivalenceStatus.EQUIVALENT
    assert verdict.forward is not None
    assert verdict.forward == verdict.backward


def test_orbits_separated_by_circles_stay_undetermined() -> None:
    lifted_map = standard_map(0.3)
    lower = hyperbolic_orbit(lifted_map, 0, 1, Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5))
    upper = hyperbolic_orbit(lifted_map, 1, 1, Window(x0=0.0, x1=1.0, y0=0.5, y1=1.5))
    assert upper.points[0].y == pytest.approx(1.0)
    verdict = k_equivalent(lifted_map, lower, upper, 8.0)
    assert verdict.status == EquivalenceStatus.UNDETERMINED
    assert verdict.arclength == 8.0
    assert verdict.forward is None
    assert verdict.backward is None


@pytest.mark.slow
def test_resonances_in_the_chaotic_sea_are_equivalent(standard_k15: LiftedMap, saddle_k15: PeriodicOrbit) -> None:
    half = hyperbolic_orbit(standard_k15, 1, 2, Window(x0=0.0, x1=1.0, y0=0.0, y1=1.0))
    verdict = k_equivalent(standard_k15, saddle_k15, half, 64.0)
    assert verdict.status == EquivalenceStatus.EQUIVALENT
    assert verdict.forward is not None and verdict.backward is not None
    assert math.isfinite(verdict.arclength)


@pytest.mark.slow
def test_clouds_of_one_region_approach_each_other() -> None:
    lifted_map = standard_map(0.9)
    fixed = hyperbolic_orbit(lifted_map, 0, 1, Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5))
    third = hyperbolic_orbit(lifted_map, 1, 3, Window(x0=0.0, x1=1.0, y0=0.0, y1=0.6))
    distances = [
        hausdorff(sample_K(lifted_map, fixed, arclength), sample_K(lifted_map, third, arclength))
        for arclength in (25.0, 50.0, 100.0)
    ]
    assert distances[-1] < distances[0]


@pytest.mark.slow
def test_equivalence_inside_the_central_region_is_transitive() -> None:
    lifted_map = standard_map(0.9)
    fixed = hyperbolic_orbit(lifted_map, 0, 1, Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5))
    up = hyperbolic_orbit(lifted_map, 1, 3, Window(x0=0.0, x1=1.0, y0=0.0, y1=0.6))
    down = hyperbolic_orbit(lifted_map, -1, 3, Window(x0=0.0, x1=1.0, y0=-0.6, y1=0.0))
    for orbit_a, orbit_b in ((fixed, up), (up, down), (fixed, down)):
        verdict = k_equivalent(lifted_map, orbit_a, orbit_b, 128.0)
        assert verdict.status == EquivalenceStatus.EQUIVALENT, (orbit_a.describe(), orbit_b.describe())
        assert verdict.arclength <= 128.0
