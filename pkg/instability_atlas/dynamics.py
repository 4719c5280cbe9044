"""Map families given by plane lifts, orbits and rotation numbers"""

from __future__ import annotations

import collections.abc
import enum
import logging
import typing as ty

import numpy as np
import pydantic

from .arrays import FloatArray
from .error import EmptySeedSetError, MapFamilyError, NonFiniteError, OrbitCapError
from .families import FamilyId, FormulaFactory, LiftFormula, nontwist, standard, user

__all__ = [
    "LiftPoint",
    "LiftedMap",
    "OrbitStats",
    "RotationInterval",
    "lift_apply",
    "lift_inverse",
    "jacobian",
    "iterate",
    "check_orbit_length",
    "birkhoff_rotation",
    "rotation_interval_of_set",
]

_logger = logging.getLogger(__name__)

FAMILY_FACTORIES: dict[str, FormulaFactory] = {
    "standard": standard.make_formula,
    "nontwist": nontwist.make_formula,
    "user": user.make_formula,
}

DEFAULT_ORBIT_CAP = 10**8
# Largest number of floats kept in memory to evaluate the displacement oscillation in a single pass
HISTORY_LIMIT = 2**24


class LiftPoint(pydantic.BaseModel):
    """Point of the universal cover, ``x`` unbounded and ``y`` the annulus height"""

    model_config = pydantic.ConfigDict(frozen=True)

    x: pydantic.FiniteFloat
    y: pydantic.FiniteFloat

    def translate(self, k: int = 1) -> LiftPoint:
        """Apply the deck translation ``T^k``"""
        return LiftPoint(x=self.x + k, y=self.y)

    def reduced(self) -> LiftPoint:
        """Representative with ``x`` in ``[0, 1)``"""
        x = self.x - np.floor(self.x)
        return LiftPoint(x=0.0 if x >= 1.0 else float(x), y=self.y)

    def as_array(self) -> FloatArray:
        return np.array([self.x, self.y], dtype=np.float64)

    @classmethod
    def from_array(cls, value: collections.abc.Sequence[float] | FloatArray) -> LiftPoint:
        return cls(x=float(value[0]), y=float(value[1]))


class LiftedMap:
    """Area-preserving annulus map given by its lift to the plane

    :param family: Name of the family, one of :data:`FAMILY_FACTORIES`
    :param params: Parameters of the family (``k`` for ``standard``, ``a`` and ``b`` for ``nontwist``, expression
        strings ``fx``/``fy`` and numeric constants for ``user``)
    :raises MapFamilyError: Raised for unknown families or invalid parameters
    """

    def __init__(self, family: str, params: collections.abc.Mapping[str, float | str]) -> None:
        try:
            factory = FAMILY_FACTORIES[family]
        except KeyError:
            raise MapFamilyError(f"Unknown map family '{family}', expected one of {sorted(FAMILY_FACTORIES)}") from None
        try:
            self._formula: LiftFormula = factory(params)
        except (KeyError, ValueError) as exc:
            raise MapFamilyError(str(exc)) from exc
        self.family = family
        self.params: dict[str, float | str] = dict(params)

    def __reduce__(self) -> tuple[ty.Any, ...]:
        return (LiftedMap, (self.family, self.params))

    def __repr__(self) -> str:
        params = ", ".join(f"{name}={value!r}" for name, value in sorted(self.params.items()))
        return f"LiftedMap({self.family}, {params})"

    @property
    def family_id(self) -> FamilyId:
        return self._formula.family_id

    def apply(self, x: ty.Any, y: ty.Any, *, check: bool = True) -> tuple[FloatArray, FloatArray]:
        """Evaluate the lift on arrays of points

        The formula only sees the fractional part of ``x``; the integer part is added back afterwards, so images of
        deck translates differ by exactly the translation in ``y`` and by one rounding in ``x``.

        :raises NonFiniteError: Raised if ``check`` is set and an image is not finite
        """
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        shift = np.floor(x)
        x_new, y_new = self._formula.forward(x - shift, y)
        x_new = shift + x_new
        if check:
            _check_finite(x_new, y_new, "lift")
        return x_new, y_new

    def inverse(self, x: ty.Any, y: ty.Any, *, check: bool = True) -> tuple[FloatArray, FloatArray]:
        """Evaluate the inverse lift on arrays of points"""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        shift = np.floor(x)
        x_old, y_old = self._formula.inverse(x - shift, y)
        x_old = shift + x_old
        if check:
            _check_finite(x_old, y_old, "inverse lift")
        return x_old, y_old

    def step(self, x: ty.Any, y: ty.Any, direction: int, *, check: bool = True) -> tuple[FloatArray, FloatArray]:
        """Apply the lift (``direction > 0``) or its inverse (``direction < 0``)"""
        if direction >= 0:
            return self.apply(x, y, check=check)
        return self.inverse(x, y, check=check)

    def jacobian(self, x: ty.Any, y: ty.Any, *, check: bool = True) -> FloatArray:
        """Derivative of the lift, shape ``(..., 2, 2)``"""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        jac = self._formula.jacobian(x - np.floor(x), y)
        if check and not np.all(np.isfinite(jac)):
            raise NonFiniteError("Jacobian is not finite, check the map parameters")
        return jac

    def power(self, x: ty.Any, y: ty.Any, n: int, *, check: bool = True) -> tuple[FloatArray, FloatArray]:
        """Apply ``f^n`` (``n`` may be negative)"""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        for _ in range(abs(n)):
            x, y = self.step(x, y, n, check=check)
        return x, y


def _check_finite(x: FloatArray, y: FloatArray, what: str, index: int | None = None) -> None:
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        where = "" if index is None else f" at step {index}"
        raise NonFiniteError(f"The {what} overflowed{where}, check the map parameters", index=index)


def standard_map(k: float) -> LiftedMap:
    return LiftedMap("standard", {"k": k})


def nontwist_map(a: float, b: float) -> LiftedMap:
    return LiftedMap("nontwist", {"a": a, "b": b})


def lift_apply(lifted_map: LiftedMap, z: LiftPoint) -> LiftPoint:
    x, y = lifted_map.apply(z.x, z.y)
    return LiftPoint(x=float(x), y=float(y))


def lift_inverse(lifted_map: LiftedMap, z: LiftPoint) -> LiftPoint:
    x, y = lifted_map.inverse(z.x, z.y)
    return LiftPoint(x=float(x), y=float(y))


def jacobian(lifted_map: LiftedMap, z: LiftPoint) -> FloatArray:
    return lifted_map.jacobian(z.x, z.y)


def check_orbit_length(n: int, cap: int = DEFAULT_ORBIT_CAP) -> None:
    """:raises OrbitCapError: Raised if ``|n|`` exceeds the cap"""
    if abs(n) > cap:
        raise OrbitCapError(f"Orbit length {abs(n)} exceeds the configured cap {cap}")


def iterate(lifted_map: LiftedMap, z: LiftPoint, n: int, cap: int = DEFAULT_ORBIT_CAP) -> FloatArray:
    """Orbit of ``z`` in lift coordinates

    :param n: Number of steps, negative values iterate the inverse
    :param cap: Largest accepted ``|n|``
    :raises OrbitCapError: Raised if ``|n|`` exceeds the cap
    :raises NonFiniteError: Raised with the index of the first non-finite iterate
    :return: Array of shape ``(|n| + 1, 2)`` with ``orbit[0] = z``
    """
    check_orbit_length(n, cap)

    orbit = np.empty((abs(n) + 1, 2), dtype=np.float64)
    orbit[0] = z.x, z.y
    x, y = np.float64(z.x), np.float64(z.y)
    for i in range(1, abs(n) + 1):
        x, y = lifted_map.step(x, y, n, check=False)
        if not (np.isfinite(x) and np.isfinite(y)):
            raise NonFiniteError(f"Orbit of ({z.x}, {z.y}) is not finite at index {i}", index=i)
        orbit[i] = x, y
    return orbit


class OrbitStats(pydantic.BaseModel):
    """Birkhoff quotient of the displacement along a finite orbit"""

    n_steps: int
    displacement: float
    rotation_estimate: float
    rotation_error_bound: float


class Confidence(str, enum.Enum):
    EXACT = "Exact"
    SAMPLED = "Sampled"


class RotationInterval(pydantic.BaseModel):
    lo: float
    hi: float
    confidence: Confidence = Confidence.SAMPLED

    @pydantic.model_validator(mode="after")
    def check_order(self) -> RotationInterval:
        if self.lo > self.hi:
            raise ValueError(f"Rotation interval [{self.lo}, {self.hi}] is empty")
        return self

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def birkhoff_batch(lifted_map: LiftedMap, points: FloatArray, n: int) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Birkhoff rotation estimates for many seeds at once

    The error bound of a seed is ``C / n`` where ``C`` is the oscillation of ``S_m - m * rho`` over the orbit,
    ``S_m`` the displacement after ``m`` steps and ``rho`` the final estimate.

    :param points: Seeds, shape ``(k, 2)``
    :param n: Orbit length, at least 1
    :return: 3-tuple of (displacement, rotation estimate, error bound) arrays
    """
    if n < 1:
        raise ValueError("Birkhoff averages need at least one step")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x0 = points[:, 0].copy()
    keep_history = (n + 1) * len(x0) <= HISTORY_LIMIT
    history = np.zeros((n + 1, len(x0))) if keep_history else None

    x, y = points[:, 0].copy(), points[:, 1].copy()
    for i in range(1, n + 1):
        x, y = lifted_map.apply(x, y, check=False)
        if history is not None:
            history[i] = x - x0
    _check_finite(x, y, "orbit")

    displacement = x - x0
    rotation = displacement / n
    if history is not None:
        deviation = history - np.arange(n + 1)[:, np.newaxis] * rotation
        oscillation = deviation.max(axis=0) - deviation.min(axis=0)
    else:
        oscillation = _oscillation(lifted_map, points, n, rotation)
    return displacement, rotation, oscillation / n


def _oscillation(lifted_map: LiftedMap, points: FloatArray, n: int, rotation: FloatArray) -> FloatArray:
    """Second pass over the orbits for seed sets too large to keep in memory"""
    x, y = points[:, 0].copy(), points[:, 1].copy()
    x0 = x.copy()
    high = np.zeros_like(x0)
    low = np.zeros_like(x0)
    for i in range(1, n + 1):
        x, y = lifted_map.apply(x, y, check=False)
        deviation = x - x0 - i * rotation
        np.maximum(high, deviation, out=high)
        np.minimum(low, deviation, out=low)
    return ty.cast(FloatArray, high - low)


def birkhoff_rotation(lifted_map: LiftedMap, z: LiftPoint, n: int) -> OrbitStats:
    """Rotation number estimate ``(p1(f^n(z)) - p1(z)) / n``"""
    displacement, rotation, bound = birkhoff_batch(lifted_map, np.array([[z.x, z.y]]), n)
    return OrbitStats(
        n_steps=n,
        displacement=float(displacement[0]),
        rotation_estimate=float(rotation[0]),
        rotation_error_bound=float(bound[0]),
    )


def rotation_interval_of_set(
    lifted_map: LiftedMap, seeds: collections.abc.Sequence[LiftPoint] | FloatArray, n: int, widen: bool = True
) -> RotationInterval:
    """Sampled rotation interval of the orbits through the seeds

    :param widen: Whether to widen the hull of the estimates by the per-seed error bounds
    :raises EmptySeedSetError: Raised if no seeds are given
    """
    points = _as_points(seeds)
    if len(points) == 0:
        raise EmptySeedSetError("Cannot estimate the rotation interval of an empty seed set")

    _, rotation, bound = birkhoff_batch(lifted_map, points, n)
    if not widen:
        bound = np.zeros_like(bound)
    interval = RotationInterval(lo=float(np.min(rotation - bound)), hi=float(np.max(rotation + bound)))
    _logger.debug("Rotation interval of %d seeds after %d steps: [%g, %g]", len(points), n, interval.lo, interval.hi)
    return interval


def _as_points(seeds: collections.abc.Sequence[LiftPoint] | FloatArray) -> FloatArray:
    if isinstance(seeds, np.ndarray):
        return np.atleast_2d(seeds).astype(np.float64).reshape(-1, 2)
    return np.array([[seed.x, seed.y] for seed in seeds], dtype=np.float64).reshape(-1, 2)


def rotation_profile(lifted_map: LiftedMap, ys: FloatArray, n: int, x0: float = 0.0) -> FloatArray:
    """Rotation estimates along the vertical line ``x = x0``"""
    ys = np.asarray(ys, dtype=np.float64)
    _, rotation, _ = birkhoff_batch(lifted_map, np.column_stack([np.full_like(ys, x0), ys]), n)
    return rotation


class ShearlessEstimate(pydantic.BaseModel):
    y: float
    rotation: float
    kind: ty.Literal["maximum", "minimum"]


def shearless_point(
    lifted_map: LiftedMap, y_range: tuple[float, float], n: int, samples: int = 101, x0: float = 0.0
) -> ShearlessEstimate | None:
    """Locate the interior extremum of the rotation profile, where the twist condition fails

    :return: The extremum refined by a parabola through its neighbours, or None if the profile is monotone
    """
    ys = np.linspace(y_range[0], y_range[1], samples)
    profile = rotation_profile(lifted_map, ys, n, x0)
    for kind, index in (("maximum", int(np.argmax(profile))), ("minimum", int(np.argmin(profile)))):
        if 0 < index < samples - 1:
            left, mid, right = profile[index - 1 : index + 2]
            curvature = left - 2.0 * mid + right
            offset = 0.0 if curvature == 0.0 else 0.5 * (left - right) / curvature
            offset = float(np.clip(offset, -1.0, 1.0))
            step = ys[1] - ys[0]
            return ShearlessEstimate(y=float(ys[index] + offset * step), rotation=float(mid), kind=kind)
    return None


class MapCheck(pydantic.BaseModel):
    """Sampled check of the invariants every lifted map must satisfy"""

    samples: int
    equivariance_x: float
    equivariance_y: float
    area_defect: float
    inverse_defect: float


def check_map(
    lifted_map: LiftedMap, samples: int = 100, seed: int = 0, y_range: tuple[float, float] = (-1.0, 1.0)
) -> MapCheck:
    """Check equivariance, area preservation and inverse consistency at random points

    The x coordinates are dyadic so that ``x + 1`` is exact.
    """
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2**20, samples) / 2.0**20
    y = rng.uniform(*y_range, samples)

    x1, y1 = lifted_map.apply(x, y)
    xt, yt = lifted_map.apply(x + 1.0, y)
    jac = lifted_map.jacobian(x, y)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    xb, yb = lifted_map.inverse(x1, y1)
    return MapCheck(
        samples=samples,
        equivariance_x=float(np.max(np.abs(xt - x1 - 1.0))),
        equivariance_y=float(np.max(np.abs(yt - y1))),
        area_defect=float(np.max(np.abs(det - 1.0))),
        inverse_defect=float(np.max(np.hypot(xb - x, yb - y))),
    )
