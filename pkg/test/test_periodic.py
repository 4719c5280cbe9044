from __future__ import annotations

import math

import numpy as np
import pydantic
import pytest

from instability_atlas.arrays import annulus_distance
from instability_atlas.dynamics import LiftedMap, LiftPoint, birkhoff_rotation, nontwist_map, standard_map
from instability_atlas.error import (
    InvalidWindowError,
    NotConvergedError,
    PeriodDivisorError,
    ResidualTooLargeError,
    SingularJacobianError,
    ZeroVectorOnCircleError,
)
from instability_atlas.periodic import (
    PeriodicOrbit,
    Stability,
    Window,
    classify,
    find_all_pq,
    fixed_point_index,
    grid_points,
    lefschetz_sum,
    newton_pq,
    rationals_between,
    same_orbit,
    seed_grid,
)

UNIT_BAND = Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5)


def assert_orbit_invariants(orbit: PeriodicOrbit) -> None:
    assert math.gcd(orbit.p, orbit.q) == 1
    assert len(orbit.points) == orbit.q
    assert orbit.newton_residual < 1e-10
    assert all(0.0 <= point.x < 1.0 for point in orbit.points)
    (re1, im1), (re2, im2) = orbit.eigenvalues
    product = complex(re1, im1) * complex(re2, im2)
    assert product.real == pytest.approx(1.0, abs=1e-8)
    if orbit.stability == Stability.ELLIPTIC:
        assert abs(complex(re1, im1)) == pytest.approx(1.0, abs=1e-8)
        assert im1 > 0.0
    elif orbit.stability == Stability.HYPERBOLIC:
        assert im1 == 0.0
        assert im2 == 0.0
        assert abs(re2) < 1.0 < abs(re1)


def centre_and_saddle(orbits: list[PeriodicOrbit]) -> tuple[PeriodicOrbit, PeriodicOrbit]:
    centre = next(orbit for orbit in orbits if orbit.stability == Stability.ELLIPTIC)
    saddle = next(orbit for orbit in orbits if orbit.stability == Stability.HYPERBOLIC)
    return centre, saddle


def test_seed_grid_of_the_unit_square() -> None:
    seeds = seed_grid(Window(x0=0.0, x1=1.0, y0=0.0, y1=1.0), 2, 2)
    assert seeds == [
        LiftPoint(x=0.0, y=0.0),
        LiftPoint(x=0.5, y=0.0),
        LiftPoint(x=0.0, y=0.5),
        LiftPoint(x=0.5, y=0.5),
    ]


def test_single_seed_is_the_window_corner() -> None:
    assert seed_grid(Window(x0=0.2, x1=0.7, y0=-0.3, y1=0.1), 1, 1) == [LiftPoint(x=0.2, y=-0.3)]


def test_large_grid_has_no_duplicates() -> None:
    points = grid_points(Window(x0=0.0, x1=1.0, y0=-1.0, y1=1.0), 100, 100)
    assert points.shape == (10_000, 2)
    assert len(np.unique(points, axis=0)) == 10_000


def test_grid_needs_points() -> None:
    with pytest.raises(ValueError, match="at least one point"):
        grid_points(UNIT_BAND, 0, 3)


def test_window_parsing() -> None:
    assert Window.parse("0,1,-0.5,0.5") == UNIT_BAND
    for text in ("0,1,0.5", "0,1,a,b", "1,0,0,1", "0,1,0.5,0.5"):
        with pytest.raises(InvalidWindowError):
            Window.parse(text)


def test_window_contains_reduces_x() -> None:
    inside = UNIT_BAND.contains(np.array([[0.2, 0.0], [3.2, 0.1], [-0.8, -0.5], [0.2, 0.5], [0.2, 0.7]]))
    assert inside.tolist() == [True, True, True, False, False]


def test_newton_converges_to_the_saddle(standard_k1: LiftedMap) -> None:
    orbit = newton_pq(standard_k1, LiftPoint(x=0.4, y=0.1), 0, 1)
    assert annulus_distance(orbit.as_array()[0], np.array([0.5, 0.0])) < 1e-9
    assert orbit.stability == Stability.HYPERBOLIC
    assert_orbit_invariants(orbit)


def test_newton_converges_to_the_centre(standard_k1: LiftedMap) -> None:
    orbit = newton_pq(standard_k1, LiftPoint(x=0.05, y=0.05), 0, 1)
    assert annulus_distance(orbit.as_array()[0], np.array([0.0, 0.0])) < 1e-9
    assert orbit.stability == Stability.ELLIPTIC


def test_newton_fails_for_the_shear(integrable: LiftedMap) -> None:
    with pytest.raises((SingularJacobianError, NotConvergedError)):
        newton_pq(integrable, LiftPoint(x=0.3, y=0.4), 1, 2)


def test_newton_reports_period_divisors(standard_k1: LiftedMap) -> None:
    with pytest.raises(PeriodDivisorError):
        newton_pq(standard_k1, LiftPoint(x=0.501, y=0.0), 0, 2)


def test_classify_the_saddle(standard_k1: LiftedMap) -> None:
    result = classify(standard_k1, LiftPoint(x=0.5, y=0.0), 0, 1)
    assert result.stability == Stability.HYPERBOLIC
    (unstable, _), (stable, _) = result.eigenvalues
    assert unstable == pytest.approx((3.0 + math.sqrt(5.0)) / 2.0, abs=1e-6)
    assert stable == pytest.approx((3.0 - math.sqrt(5.0)) / 2.0, abs=1e-6)
    assert result.residue == pytest.approx(-0.25)


def test_classify_the_centre(standard_k1: LiftedMap) -> None:
    result = classify(standard_k1, LiftPoint(x=0.0, y=0.0), 0, 1)
    assert result.stability == Stability.ELLIPTIC
    assert result.trace == pytest.approx(1.0)
    assert result.residue == pytest.approx(0.25)


def test_classify_degenerate_centre() -> None:
    result = classify(standard_map(4.0), LiftPoint(x=0.0, y=0.0), 0, 1)
    assert result.stability == Stability.DEGENERATE
    assert result.trace == pytest.approx(-2.0)
    assert result.residue == pytest.approx(1.0)


def test_classify_needs_a_periodic_point(standard_k1: LiftedMap) -> None:
    with pytest.raises(ResidualTooLargeError):
        classify(standard_k1, LiftPoint(x=0.3, y=0.3), 0, 1)


def test_fixed_points_of_the_k1_map(fixed_points_k1: list[PeriodicOrbit]) -> None:
    assert len(fixed_points_k1) == 2
    centre, saddle = centre_and_saddle(fixed_points_k1)
    assert annulus_distance(centre.as_array()[0], np.array([0.0, 0.0])) < 1e-9
    assert annulus_distance(saddle.as_array()[0], np.array([0.5, 0.0])) < 1e-9
    for orbit in fixed_points_k1:
        assert_orbit_invariants(orbit)


def test_fixed_points_on_a_fine_grid(standard_k1: LiftedMap) -> None:
    orbits = find_all_pq(standard_k1, 0, 1, UNIT_BAND, 50, 50)
    assert sorted(orbit.stability for orbit in orbits) == [Stability.ELLIPTIC, Stability.HYPERBOLIC]


def test_find_all_pq_is_deterministic(standard_k1: LiftedMap) -> None:
    first = find_all_pq(standard_k1, 1, 2, Window(x0=0.0, x1=1.0, y0=0.0, y1=1.0), 20, 20)
    second = find_all_pq(standard_k1, 1, 2, Window(x0=0.0, x1=1.0, y0=0.0, y1=1.0), 20, 20)
    assert [orbit.orbit_id for orbit in first] == [orbit.orbit_id for orbit in second]


def test_poincare_birkhoff_pair() -> None:
    orbits = find_all_pq(standard_map(0.9), 1, 2, Window(x0=0.0, x1=1.0, y0=0.0, y1=1.0), 50, 50)
    stabilities = {orbit.stability for orbit in orbits}
    assert Stability.ELLIPTIC in stabilities
    assert Stability.HYPERBOLIC in stabilities
    for orbit in orbits:
        assert_orbit_invariants(orbit)


def test_nontwist_map_has_twin_chains(nontwist: LiftedMap) -> None:
    orbits = find_all_pq(nontwist, 1, 3, Window(x0=0.0, x1=1.0, y0=-1.0, y1=1.0), 40, 40)
    heights = [float(np.mean(orbit.as_array()[:, 1])) for orbit in orbits]
    assert any(height > 0.3 for height in heights)
    assert any(height < -0.3 for height in heights)


def test_nontwist_shear_is_singular_on_the_shearless_circle() -> None:
    with pytest.raises(SingularJacobianError):
        newton_pq(nontwist_map(0.5, 0.0), LiftPoint(x=0.2, y=0.1), 1, 2)


@pytest.mark.parametrize(("p", "q"), [(2, 4), (0, 2), (1, 0)])
def test_find_all_pq_rejects_types(standard_k1: LiftedMap, p: int, q: int) -> None:
    with pytest.raises(ValueError, match="gcd"):
        find_all_pq(standard_k1, p, q, UNIT_BAND, 2, 2)


def test_orbit_needs_q_points() -> None:
    with pytest.raises(pydantic.ValidationError):
        PeriodicOrbit(
            p=1,
            q=2,
            points=[LiftPoint(x=0.0, y=0.5)],
            stability=Stability.ELLIPTIC,
            eigenvalues=((0.5, 0.8), (0.5, -0.8)),
            residue=0.25,
            newton_residual=0.0,
        )


def test_same_orbit_is_taken_mod_1() -> None:
    a = np.array([[0.0, 0.5], [0.5, 0.5]])
    b = np.array([[0.5, 0.5], [1.0 - 1e-9, 0.5]])
    assert same_orbit(a, b)
    assert not same_orbit(a, b[:1])
    assert not same_orbit(a, b + [0.0, 1e-3])


def test_index_of_the_centre_and_the_saddle(fixed_points_k1: list[PeriodicOrbit], standard_k1: LiftedMap) -> None:
    centre, saddle = centre_and_saddle(fixed_points_k1)
    assert fixed_point_index(standard_k1, centre.points[0], 0, 1, 1e-3).value == 1
    saddle_index = fixed_point_index(standard_k1, saddle.points[0], 0, 1, 1e-3)
    assert saddle_index.value == -1
    assert saddle_index.samples >= 512
    assert saddle_index.turning_data.shape == (saddle_index.samples,)


def test_lefschetz_sum_of_the_fixed_points(fixed_points_k1: list[PeriodicOrbit], standard_k1: LiftedMap) -> None:
    total = lefschetz_sum(standard_k1, fixed_points_k1, 0, 1, 1e-3)
    assert total.annulus == 0
    assert total.sphere == 2
    assert sorted(total.indices) == [-1, 1]


def test_lefschetz_sum_of_the_half_resonance(standard_k1: LiftedMap) -> None:
    orbits = find_all_pq(standard_k1, 1, 2, Window(x0=0.0, x1=1.0, y0=0.0, y1=1.0), 30, 30)
    total = lefschetz_sum(standard_k1, orbits, 1, 2, 1e-4)
    assert total.annulus == 0
    assert len(total.indices) == 4


def test_index_needs_a_clear_circle(standard_k1: LiftedMap) -> None:
    with pytest.raises(ValueError, match="radius"):
        fixed_point_index(standard_k1, LiftPoint(x=0.5, y=0.0), 0, 1, 0.0)
    with pytest.raises(ZeroVectorOnCircleError):
        fixed_point_index(standard_k1, LiftPoint(x=0.25, y=0.0), 0, 1, 0.25)


@pytest.mark.parametrize("k", [0.5, 1.0, 1.5])
def test_index_matches_stability(k: float) -> None:
    lifted_map = standard_map(k)
    window = Window(x0=0.0, x1=1.0, y0=-0.5, y1=1.0)
    orbits = [*find_all_pq(lifted_map, 0, 1, window, 30, 30), *find_all_pq(lifted_map, 1, 2, window, 30, 30)]
    assert orbits
    for orbit in orbits:
        value = fixed_point_index(lifted_map, orbit.points[0], orbit.p, orbit.q, 1e-4).value
        if orbit.stability == Stability.ELLIPTIC:
            assert value == 1, orbit.describe()
        elif orbit.is_hyperbolic and orbit.has_positive_eigenvalues:
            assert value == -1, orbit.describe()


def test_orbits_rotate_at_their_type(standard_k15: LiftedMap) -> None:
    for p, q in ((0, 1), (1, 2), (1, 3)):
        for orbit in find_all_pq(standard_k15, p, q, Window(x0=0.0, x1=1.0, y0=-0.5, y1=1.0), 30, 30):
            stats = birkhoff_rotation(standard_k15, orbit.points[0], q)
            assert stats.rotation_estimate == pytest.approx(p / q, abs=orbit.newton_residual + 1e-12)


def test_rationals_between() -> None:
    assert rationals_between(0.0, 0.5, 4) == [(0, 1), (1, 2), (1, 3), (1, 4)]
    assert rationals_between(0.6, 0.65, 5) == []


def test_orbit_id_ignores_the_newton_residual(fixed_points_k1: list[PeriodicOrbit]) -> None:
    centre, saddle = centre_and_saddle(fixed_points_k1)
    assert saddle.model_copy(update={"newton_residual": 1e-12}).orbit_id == saddle.orbit_id
    assert saddle.orbit_id != centre.orbit_id
    assert saddle.describe().startswith("(0,1) Hyperbolic orbit")


def test_orbit_id_is_stable_below_the_dedup_grid(fixed_points_k1: list[PeriodicOrbit]) -> None:
    centre, saddle = centre_and_saddle(fixed_points_k1)

    def moved(orbit: PeriodicOrbit, x: float, y: float) -> PeriodicOrbit:
        return orbit.model_copy(update={"points": [LiftPoint(x=x, y=y)]})

    sx, sy = saddle.points[0].x, saddle.points[0].y
    assert moved(saddle, sx + 1e-9, sy - 1e-9).orbit_id == saddle.orbit_id
    assert moved(saddle, sx + 1.0, sy).orbit_id == saddle.orbit_id
    assert moved(saddle, sx + 1e-3, sy).orbit_id != saddle.orbit_id
    assert moved(centre, 1.0 - 1e-9, 0.0).orbit_id == moved(centre, 0.0, 0.0).orbit_id
    assert moved(centre, -1e-9, 0.0).orbit_id == moved(centre, 0.0, 0.0).orbit_id


@pytest.mark.slow
@pytest.mark.parametrize(("p", "q"), rationals_between(-0.4, 0.4, 5))
def test_every_rational_type_has_an_orbit(p: int, q: int) -> None:
    window = Window(x0=0.0, x1=1.0, y0=-1.0, y1=1.0)
    assert find_all_pq(standard_map(0.9), p, q, window, 60, 60)
