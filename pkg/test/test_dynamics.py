from __future__ import annotations

import math
import pickle

import numpy as np
import pytest

from instability_atlas.dynamics import (
    LiftedMap,
    LiftPoint,
    birkhoff_rotation,
    check_map,
    iterate,
    jacobian,
    lift_apply,
    lift_inverse,
    nontwist_map,
    rotation_interval_of_set,
    rotation_profile,
    shearless_point,
    standard_map,
)
from instability_atlas.error import EmptySeedSetError, MapFamilyError, NonFiniteError, OrbitCapError

STANDARD_AS_USER = {
    "fx": "x + y - k / (2 * pi) * sin(2 * pi * x)",
    "fy": "y - k / (2 * pi) * sin(2 * pi * x)",
    "k": 1.3,
}


def test_standard_map_formula() -> None:
    image = lift_apply(standard_map(1.0), LiftPoint(x=0.25, y=0.0))
    assert image.y == pytest.approx(-1.0 / (2.0 * math.pi))
    assert image.x == pytest.approx(0.25 - 1.0 / (2.0 * math.pi))


def test_standard_map_is_a_shear_at_k0(integrable: LiftedMap) -> None:
    image = lift_apply(integrable, LiftPoint(x=0.7, y=0.3))
    assert image == LiftPoint(x=0.7 + 0.3, y=0.3)


def test_nontwist_map_formula() -> None:
    image = lift_apply(nontwist_map(0.5, 0.05), LiftPoint(x=0.25, y=0.2))
    assert image.y == pytest.approx(0.15)
    assert image.x == pytest.approx(0.25 + 0.5 * (1.0 - 0.15**2))


def test_inverse_undoes_the_map(standard_k1: LiftedMap, nontwist: LiftedMap) -> None:
    for lifted_map in (standard_k1, nontwist):
        z = LiftPoint(x=2.3, y=-0.41)
        back = lift_inverse(lifted_map, lift_apply(lifted_map, z))
        assert back.x == pytest.approx(z.x, abs=1e-13)
        assert back.y == pytest.approx(z.y, abs=1e-13)


def test_deck_translation_commutes_with_the_lift(standard_k1: LiftedMap) -> None:
    z = LiftPoint(x=0.375, y=0.2)
    image = lift_apply(standard_k1, z)
    translated = lift_apply(standard_k1, z.translate(3))
    assert translated.y == image.y
    assert translated.x - image.x == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("lifted_map", [standard_map(0.9), standard_map(4.0), nontwist_map(0.5, 0.05)], ids=repr)
def test_shipped_families_pass_the_map_check(lifted_map: LiftedMap) -> None:
    result = check_map(lifted_map, samples=10_000)
    assert result.equivariance_y == 0.0
    assert result.equivariance_x <= 1e-12
    assert result.area_defect < 1e-12
    assert result.inverse_defect < 1e-10


def test_user_family_matches_the_standard_map() -> None:
    user = LiftedMap("user", STANDARD_AS_USER)
    reference = standard_map(1.3)
    rng = np.random.default_rng(3)
    x, y = rng.uniform(-2.0, 2.0, 50), rng.uniform(-1.0, 1.0, 50)
    np.testing.assert_allclose(user.apply(x, y), reference.apply(x, y), atol=1e-12)
    np.testing.assert_allclose(user.jacobian(x, y), reference.jacobian(x, y), atol=1e-8)
    np.testing.assert_allclose(user.inverse(x, y), reference.inverse(x, y), atol=1e-10)


def test_user_family_defaults_to_finite_difference_jacobian() -> None:
    user = LiftedMap("user", STANDARD_AS_USER)
    result = check_map(user, samples=200)
    assert result.area_defect < 1e-6
    assert result.equivariance_y == 0.0
    # Central differences carry a visible truncation error, symbolic entries do not
    x, y = np.array([0.1, 0.37]), np.array([0.2, -0.4])
    reference = standard_map(1.3).jacobian(x, y)
    assert np.max(np.abs(user.jacobian(x, y) - reference)) > 0.0


@pytest.mark.parametrize(
    "extra",
    [
        {"jacobian": "symbolic"},
        {
            "jxx": "1 - k * cos(2 * pi * x)",
            "jxy": "1",
            "jyx": "-k * cos(2 * pi * x)",
            "jyy": "1",
        },
    ],
    ids=["symbolic", "explicit"],
)
def test_user_family_exact_jacobian(extra: dict[str, str]) -> None:
    user = LiftedMap("user", {**STANDARD_AS_USER, **extra})
    reference = standard_map(1.3)
    rng = np.random.default_rng(5)
    x, y = rng.uniform(-2.0, 2.0, 50), rng.uniform(-1.0, 1.0, 50)
    np.testing.assert_allclose(user.jacobian(x, y), reference.jacobian(x, y), atol=1e-12)
    assert check_map(user, samples=200).area_defect < 1e-12


def test_user_family_survives_pickling() -> None:
    user = LiftedMap("user", STANDARD_AS_USER)
    clone = pickle.loads(pickle.dumps(user))  # noqa: S301
    assert clone.apply(0.1, 0.2) == user.apply(0.1, 0.2)


@pytest.mark.parametrize(
    ("family", "params"),
    [
        ("logistic", {"r": 3.9}),
        ("standard", {}),
        ("standard", {"k": "large"}),
        ("nontwist", {"a": 0.5}),
        ("user", {"fx": "x"}),
        ("user", {"fx": "__import__('os')", "fy": "y"}),
        ("user", {"fx": "x + z", "fy": "y"}),
        ("user", {"fx": "x.real", "fy": "y"}),
        ("user", {"fx": "x", "fy": "y", "jacobian": "numeric"}),
        ("user", {"fx": "x", "fy": "y", "ix": "x"}),
        ("user", {"fx": "x", "fy": "y", "jxx": "1", "jyy": "1"}),
    ],
)
def test_invalid_families_are_rejected(family: str, params: dict[str, float | str]) -> None:
    with pytest.raises(MapFamilyError):
        LiftedMap(family, params)


def test_jacobian_of_the_standard_map(standard_k1: LiftedMap) -> None:
    np.testing.assert_allclose(jacobian(standard_k1, LiftPoint(x=0.5, y=0.0)), [[2.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(jacobian(standard_k1, LiftPoint(x=0.0, y=0.3)), [[0.0, 1.0], [-1.0, 1.0]])


def test_iterate_returns_the_full_orbit(standard_k1: LiftedMap) -> None:
    z = LiftPoint(x=0.1, y=0.2)
    orbit = iterate(standard_k1, z, 5)
    assert orbit.shape == (6, 2)
    np.testing.assert_array_equal(orbit[0], [0.1, 0.2])
    assert LiftPoint.from_array(orbit[1]) == lift_apply(standard_k1, z)


def test_iterate_backwards(standard_k1: LiftedMap) -> None:
    z = LiftPoint(x=0.1, y=0.2)
    backwards = iterate(standard_k1, z, -4)
    forwards = iterate(standard_k1, LiftPoint.from_array(backwards[-1]), 4)
    np.testing.assert_allclose(forwards[-1], [0.1, 0.2], atol=1e-12)


def test_iterate_respects_the_cap(standard_k1: LiftedMap) -> None:
    with pytest.raises(OrbitCapError, match="cap 10"):
        iterate(standard_k1, LiftPoint(x=0.0, y=0.0), 11, cap=10)
    with pytest.raises(OrbitCapError):
        iterate(standard_k1, LiftPoint(x=0.0, y=0.0), -11, cap=10)
    assert iterate(standard_k1, LiftPoint(x=0.0, y=0.0), -10, cap=10).shape == (11, 2)


def test_iterate_reports_the_first_non_finite_index() -> None:
    squaring = LiftedMap("user", {"fx": "x", "fy": "y * y + 1"})
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError) as exc_info:
        iterate(squaring, LiftPoint(x=0.0, y=1.0), 50)
    assert exc_info.value.index == 11


def test_reduced_point() -> None:
    assert LiftPoint(x=-0.25, y=0.1).reduced() == LiftPoint(x=0.75, y=0.1)
    assert LiftPoint(x=-1e-20, y=0.0).reduced() == LiftPoint(x=0.0, y=0.0)
    assert LiftPoint(x=1.5, y=0.1).translate(-2) == LiftPoint(x=-0.5, y=0.1)


def test_rotation_number_of_the_shear(integrable: LiftedMap) -> None:
    stats = birkhoff_rotation(integrable, LiftPoint(x=0.3, y=0.3), 1000)
    assert stats.n_steps == 1000
    assert stats.rotation_estimate == pytest.approx(0.3, abs=1e-12)
    assert stats.rotation_error_bound < 1e-12
    assert stats.displacement == pytest.approx(300.0, abs=1e-9)


def test_rotation_number_of_a_fixed_point(standard_k1: LiftedMap) -> None:
    stats = birkhoff_rotation(standard_k1, LiftPoint(x=0.0, y=0.0), 100)
    assert stats.rotation_estimate == pytest.approx(0.0, abs=1e-12)


def test_rotation_interval_of_the_shear(integrable: LiftedMap) -> None:
    interval = rotation_interval_of_set(integrable, [LiftPoint(x=0.0, y=0.2), LiftPoint(x=0.0, y=0.4)], 500)
    assert interval.lo == pytest.approx(0.2, abs=1e-9)
    assert interval.hi == pytest.approx(0.4, abs=1e-9)
    assert interval.length == pytest.approx(0.2, abs=1e-9)
    assert interval.contains(0.3)
    assert not interval.contains(0.5)


def test_rotation_interval_of_a_period_two_orbit(standard_k1: LiftedMap) -> None:
    interval = rotation_interval_of_set(standard_k1, [LiftPoint(x=0.0, y=0.5)], 1000, widen=False)
    assert interval.lo == pytest.approx(0.5, abs=1e-12)
    assert interval.hi == pytest.approx(0.5, abs=1e-12)


def test_rotation_interval_needs_seeds(standard_k1: LiftedMap) -> None:
    with pytest.raises(EmptySeedSetError):
        rotation_interval_of_set(standard_k1, [], 10)


def test_rotation_profile_of_the_shear(integrable: LiftedMap) -> None:
    ys = np.linspace(-0.4, 0.4, 9)
    np.testing.assert_allclose(rotation_profile(integrable, ys, 200), ys, atol=1e-12)


def test_twist_maps_have_no_shearless_point(integrable: LiftedMap) -> None:
    assert shearless_point(integrable, (-0.4, 0.4), 100) is None


def test_shearless_point_of_the_nontwist_map(nontwist: LiftedMap) -> None:
    estimate = shearless_point(nontwist, (-0.5, 0.5), 2000)
    assert estimate is not None
    assert estimate.kind == "maximum"
    assert estimate.rotation == pytest.approx(0.5, abs=0.02)
    assert -0.5 < estimate.y < 0.5


@pytest.mark.slow
def test_golden_circle_rotation_number() -> None:
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    # The golden circle crosses x = 0 inside this band
    lifted_map = standard_map(0.5)
    ys = np.linspace(0.55, 0.7, 301)
    profile = rotation_profile(lifted_map, ys, 20_000)
    y = float(np.interp(golden, profile, ys))
    stats = birkhoff_rotation(lifted_map, LiftPoint(x=0.0, y=y), 1_000_000)
    assert stats.rotation_estimate == pytest.approx(golden, abs=1e-4)
