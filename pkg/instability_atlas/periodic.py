"""Periodic orbits of type (p, q): Newton search, stability classification and fixed point indices"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import logging
import math
import typing as ty

import numpy as np
import numpy.typing as npt
import pydantic

from .arrays import Array, FloatArray, annulus_distance, wrap_unit
from .dynamics import LiftedMap, LiftPoint
from .error import (
    AmbiguousWindingError,
    InvalidWindowError,
    NotConvergedError,
    PeriodDivisorError,
    ResidualTooLargeError,
    SingularJacobianError,
    ZeroVectorOnCircleError,
)

__all__ = [
    "Window",
    "Stability",
    "PeriodicOrbit",
    "FixedPointIndex",
    "seed_grid",
    "newton_pq",
    "classify",
    "fixed_point_index",
    "find_all_pq",
    "lefschetz_sum",
]

_logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
MAX_NEWTON_ITERS = 50
MAX_HALVINGS = 20
SINGULAR_TOL = 1e-12
RESIDUAL_LIMIT = 1e-8
DEGENERACY_BAND = 1e-9
DEDUP_TOL = 1e-6
INDEX_SAMPLES = 512
MAX_INDEX_SAMPLES = 2**16
WINDING_TOL = 1e-3


class Window(pydantic.BaseModel):
    """Rectangle ``[x0, x1) x [y0, y1)`` in lift coordinates"""

    model_config = pydantic.ConfigDict(frozen=True)

    x0: pydantic.FiniteFloat
    x1: pydantic.FiniteFloat
    y0: pydantic.FiniteFloat
    y1: pydantic.FiniteFloat

    @pydantic.model_validator(mode="after")
    def check_extent(self) -> Window:
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"Window [{self.x0}, {self.x1}) x [{self.y0}, {self.y1}) is empty")
        return self

    @classmethod
    def parse(cls, text: str) -> Window:
        """Parse a window given as ``x0,x1,y0,y1``

        :raises InvalidWindowError: Raised for malformed or empty windows
        """
        try:
            x0, x1, y0, y1 = (float(part) for part in text.split(","))
            return cls(x0=x0, x1=x1, y0=y0, y1=y1)
        except (ValueError, pydantic.ValidationError) as exc:
            raise InvalidWindowError(
                f"Invalid window '{text}', expected four numbers x0,x1,y0,y1 with x0 < x1 and y0 < y1"
            ) from exc

    @classmethod
    def unit_band(cls, y0: float, y1: float) -> Window:
        return cls(x0=0.0, x1=1.0, y0=y0, y1=y1)

    def contains(self, points: FloatArray, strict: bool = False) -> npt.NDArray[np.bool_]:
        """Whether points lie in the window, x compared after reduction into ``[x0, x0 + 1)`` for unit-wide windows"""
        points = np.atleast_2d(points)
        x = points[:, 0]
        if self.x1 - self.x0 >= 1.0:
            x = self.x0 + wrap_unit(x - self.x0)
        y = points[:, 1]
        if strict:
            return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)


def grid_points(window: Window, nx: int, ny: int) -> FloatArray:
    """Row-major lattice of ``nx * ny`` points, x varying fastest"""
    if nx < 1 or ny < 1:
        raise ValueError(f"Grid {nx}x{ny} needs at least one point per axis")
    xs = window.x0 + (window.x1 - window.x0) * np.arange(nx) / nx
    ys = window.y0 + (window.y1 - window.y0) * np.arange(ny) / ny
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def seed_grid(window: Window, nx: int, ny: int) -> list[LiftPoint]:
    return [LiftPoint(x=float(x), y=float(y)) for x, y in grid_points(window, nx, ny)]


class Stability(str, enum.Enum):
    DEGENERATE = "Degenerate"
    ELLIPTIC = "Elliptic"
    HYPERBOLIC = "Hyperbolic"


Eigenvalue = tuple[float, float]


class Classification(pydantic.BaseModel):
    stability: Stability
    eigenvalues: tuple[Eigenvalue, Eigenvalue]
    residue: float
    trace: float


class PeriodicOrbit(pydantic.BaseModel):
    """Periodic orbit of type ``(p, q)``, ``f^q(z) = T^p(z)``

    ``points[0]`` is the lexicographically smallest point mod 1 and the others follow in orbit order. Eigenvalues
    are stored as ``(real, imag)`` pairs, the expanding one first for saddles.
    """

    p: int
    q: pydantic.PositiveInt
    points: list[LiftPoint]
    stability: Stability
    eigenvalues: tuple[Eigenvalue, Eigenvalue]
    residue: float
    newton_residual: float

    @pydantic.model_validator(mode="after")
    def check_points(self) -> PeriodicOrbit:
        if len(self.points) != self.q:
            raise ValueError(f"Orbit of type ({self.p},{self.q}) needs {self.q} points, got {len(self.points)}")
        return self

    @property
    def orbit_id(self) -> str:
        """Content hash of the type and the points snapped to the ``DEDUP_TOL`` grid, x taken mod 1"""
        cells = np.round(self.as_array() / DEDUP_TOL).astype(np.int64)
        cells[:, 0] %= int(round(1.0 / DEDUP_TOL))
        coords = ";".join(f"{cx},{cy}" for cx, cy in cells.tolist())
        return hashlib.sha256(f"{self.p}/{self.q}:{coords}".encode()).hexdigest()

    @property
    def rotation(self) -> float:
        return self.p / self.q

    @property
    def is_hyperbolic(self) -> bool:
        return self.stability == Stability.HYPERBOLIC

    @property
    def has_positive_eigenvalues(self) -> bool:
        return all(re > 0.0 and im == 0.0 for re, im in self.eigenvalues)

    def as_array(self) -> FloatArray:
        return np.array([[point.x, point.y] for point in self.points], dtype=np.float64)

    def describe(self) -> str:
        point = self.points[0]
        return f"({self.p},{self.q}) {self.stability.value} orbit through ({point.x:.6f}, {point.y:.6f})"


class FixedPointIndex(pydantic.BaseModel):
    value: int
    radius: float
    samples: int
    turning_data: Array


class LefschetzSum(pydantic.BaseModel):
    """Index sum of ``f^q o T^-p`` over the found orbit points in one fundamental band

    On the sphere compactification the two ends add a fixed point of index +1 each.
    """

    annulus: int
    sphere: int
    indices: list[int]


class NewtonStatus(enum.IntEnum):
    CONVERGED = 0
    SINGULAR = 1
    NOT_CONVERGED = 2
    NON_FINITE = 3


@dataclasses.dataclass
class NewtonBatch:
    points: FloatArray
    residuals: FloatArray
    status: npt.NDArray[np.int8]


def power_with_jacobian(
    lifted_map: LiftedMap, x: FloatArray, y: FloatArray, q: int
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """``f^q`` and its derivative as the product of the per-step Jacobians"""
    jac = np.broadcast_to(np.eye(2), np.shape(x) + (2, 2)).copy()
    for _ in range(q):
        jac = lifted_map.jacobian(x, y, check=False) @ jac
        x, y = lifted_map.apply(x, y, check=False)
    return x, y, jac


def _residual(lifted_map: LiftedMap, x: FloatArray, y: FloatArray, p: int, q: int) -> tuple[FloatArray, FloatArray]:
    xq, yq = lifted_map.power(x, y, q, check=False)
    return xq - x - p, yq - y


def _sup_norm(gx: FloatArray, gy: FloatArray) -> FloatArray:
    return ty.cast(FloatArray, np.maximum(np.abs(gx), np.abs(gy)))


def _damped_update(
    lifted_map: LiftedMap, z: FloatArray, step: FloatArray, residual: FloatArray, p: int, q: int
) -> FloatArray:
    """Halve Newton steps that do not decrease the residual, at most :data:`MAX_HALVINGS` times"""
    scale = np.ones(len(z))
    trial = z + step
    pending = np.arange(len(z))
    for _ in range(MAX_HALVINGS):
        gx, gy = _residual(lifted_map, trial[pending, 0], trial[pending, 1], p, q)
        pending = pending[~(_sup_norm(gx, gy) < residual[pending])]
        if len(pending) == 0:
            break
        scale[pending] *= 0.5
        trial[pending] = z[pending] + scale[pending, np.newaxis] * step[pending]
    return trial


def _newton_step(jac: FloatArray, gx: FloatArray, gy: FloatArray) -> tuple[FloatArray, FloatArray]:
    a, b = jac[:, 0, 0] - 1.0, jac[:, 0, 1]
    c, d = jac[:, 1, 0], jac[:, 1, 1] - 1.0
    det = a * d - b * c
    return np.column_stack([-(d * gx - b * gy) / det, -(a * gy - c * gx) / det]), det


def newton_batch(
    lifted_map: LiftedMap,
    seeds: FloatArray,
    p: int,
    q: int,
    *,
    tol: float = NEWTON_TOL,
    max_iters: int = MAX_NEWTON_ITERS,
) -> NewtonBatch:
    """Solve ``f^q(z) - z - (p, 0) = 0`` from many seeds at once

    Seeds are retired as soon as they converge, hit a singular ``Df^q - I`` or leave the finite range. Converged
    seeds get one extra polishing step that is kept where it lowers the residual.
    """
    if q < 1:
        raise ValueError(f"Period q must be at least 1, got {q}")
    z = np.array(seeds, dtype=np.float64).reshape(-1, 2)
    status = np.full(len(z), NewtonStatus.NOT_CONVERGED, dtype=np.int8)
    residuals = np.full(len(z), np.inf)
    active = np.arange(len(z))

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for _ in range(max_iters + 1):
            if len(active) == 0:
                break
            xq, yq, jac = power_with_jacobian(lifted_map, z[active, 0], z[active, 1], q)
            gx, gy = xq - z[active, 0] - p, yq - z[active, 1]
            residual = _sup_norm(gx, gy)
            residuals[active] = residual

            finite = np.isfinite(residual) & np.all(np.isfinite(jac), axis=(1, 2))
            status[active[~finite]] = NewtonStatus.NON_FINITE
            done = finite & (residual < tol)
            status[active[done]] = NewtonStatus.CONVERGED

            step, det = _newton_step(jac, gx, gy)
            singular = finite & ~done & (np.abs(det) < SINGULAR_TOL)
            status[active[singular]] = NewtonStatus.SINGULAR

            stepping = finite & ~done & ~singular
            active = active[stepping]
            z[active] = _damped_update(lifted_map, z[active], step[stepping], residual[stepping], p, q)

        converged = np.flatnonzero(status == NewtonStatus.CONVERGED)
        if len(converged):
            xq, yq, jac = power_with_jacobian(lifted_map, z[converged, 0], z[converged, 1], q)
            step, _ = _newton_step(jac, xq - z[converged, 0] - p, yq - z[converged, 1])
            polished = z[converged] + step
            gx, gy = _residual(lifted_map, polished[:, 0], polished[:, 1], p, q)
            better = _sup_norm(gx, gy) < residuals[converged]
            z[converged[better]] = polished[better]
            residuals[converged[better]] = _sup_norm(gx, gy)[better]

    return NewtonBatch(points=z, residuals=residuals, status=status)


def classify(
    lifted_map: LiftedMap,
    orbit_point: LiftPoint,
    p: int,
    q: int,
    *,
    residual_limit: float = RESIDUAL_LIMIT,
    degeneracy_band: float = DEGENERACY_BAND,
) -> Classification:
    """Classify a periodic point by the eigenvalues of ``Df^q``

    :raises ResidualTooLargeError: Raised if the point is not periodic of type ``(p, q)`` within ``residual_limit``
    """
    x, y = np.array([orbit_point.x]), np.array([orbit_point.y])
    xq, yq, jac = power_with_jacobian(lifted_map, x, y, q)
    residual = float(_sup_norm(xq - x - p, yq - y)[0])
    if not residual <= residual_limit:
        raise ResidualTooLargeError(
            f"Point ({orbit_point.x}, {orbit_point.y}) has periodicity residual {residual:.3e} for type ({p},{q})"
        )

    matrix = jac[0]
    trace = float(np.trace(matrix))
    eigenvalues = np.linalg.eigvals(matrix)
    if abs(abs(trace) - 2.0) <= degeneracy_band:
        stability = Stability.DEGENERATE
    elif abs(trace) < 2.0:
        stability = Stability.ELLIPTIC
    else:
        stability = Stability.HYPERBOLIC

    if stability == Stability.ELLIPTIC:
        ordered = sorted(eigenvalues, key=lambda value: -value.imag)
    else:
        ordered = sorted(eigenvalues, key=lambda value: -abs(value))
    real = stability == Stability.HYPERBOLIC
    pairs = tuple((float(value.real), 0.0 if real else float(value.imag)) for value in ordered)
    return Classification(
        stability=stability,
        eigenvalues=ty.cast(tuple[Eigenvalue, Eigenvalue], pairs),
        residue=(2.0 - trace) / 4.0,
        trace=trace,
    )


def _orbit_points(lifted_map: LiftedMap, z: FloatArray, q: int) -> FloatArray:
    points = np.empty((q, 2))
    x, y = np.array([z[0]]), np.array([z[1]])
    for i in range(q):
        points[i] = x[0], y[0]
        x, y = lifted_map.apply(x, y)
    points[:, 0] = wrap_unit(points[:, 0])
    return points


def _canonical_points(lifted_map: LiftedMap, z: FloatArray, q: int, dedup_tol: float) -> FloatArray:
    """Orbit points mod 1 starting at the lexicographically smallest one

    :raises PeriodDivisorError: Raised if the orbit closes up mod 1 before ``q`` steps
    """
    points = _orbit_points(lifted_map, z, q)
    if q > 1 and np.any(annulus_distance(points[1:], points[0]) < dedup_tol):
        raise PeriodDivisorError(f"Orbit through ({z[0]:.6f}, {z[1]:.6f}) has a period dividing {q}")
    start = int(np.lexsort((points[:, 1], points[:, 0]))[0])
    return np.roll(points, -start, axis=0)


def _make_orbit(
    lifted_map: LiftedMap, points: FloatArray, p: int, q: int, degeneracy_band: float = DEGENERACY_BAND
) -> PeriodicOrbit:
    start = LiftPoint(x=float(points[0, 0]), y=float(points[0, 1]))
    gx, gy = _residual(lifted_map, points[:1, 0], points[:1, 1], p, q)
    classification = classify(lifted_map, start, p, q, degeneracy_band=degeneracy_band)
    return PeriodicOrbit(
        p=p,
        q=q,
        points=[LiftPoint(x=float(x), y=float(y)) for x, y in points],
        stability=classification.stability,
        eigenvalues=classification.eigenvalues,
        residue=classification.residue,
        newton_residual=float(_sup_norm(gx, gy)[0]),
    )


def newton_pq(
    lifted_map: LiftedMap,
    seed: LiftPoint,
    p: int,
    q: int,
    *,
    tol: float = NEWTON_TOL,
    max_iters: int = MAX_NEWTON_ITERS,
    dedup_tol: float = DEDUP_TOL,
) -> PeriodicOrbit:
    """Find the periodic orbit of type ``(p, q)`` Newton converges to from ``seed``

    :raises SingularJacobianError: Raised if ``Df^q - I`` is singular at an iterate
    :raises NotConvergedError: Raised if the residual is above ``tol`` after ``max_iters`` iterations
    :raises PeriodDivisorError: Raised if the limit is an orbit whose period divides ``q``
    """
    batch = newton_batch(lifted_map, np.array([[seed.x, seed.y]]), p, q, tol=tol, max_iters=max_iters)
    status = NewtonStatus(int(batch.status[0]))
    if status == NewtonStatus.SINGULAR:
        raise SingularJacobianError(f"Df^{q} - I is singular near ({seed.x}, {seed.y}), the point is parabolic")
    if status != NewtonStatus.CONVERGED:
        raise NotConvergedError(
            f"Newton for type ({p},{q}) from ({seed.x}, {seed.y}) did not converge, residual {batch.residuals[0]:.3e}"
        )
    points = _canonical_points(lifted_map, batch.points[0], q, dedup_tol)
    return _make_orbit(lifted_map, points, p, q)


def same_orbit(a: FloatArray, b: FloatArray, tol: float = DEDUP_TOL) -> bool:
    """Whether two point sets (mod 1) coincide within ``tol``"""
    if len(a) != len(b):
        return False
    distances = annulus_distance(a[:, np.newaxis, :], b[np.newaxis, :, :])
    return bool(np.max(np.min(distances, axis=1)) < tol)


def find_all_pq(
    lifted_map: LiftedMap,
    p: int,
    q: int,
    window: Window,
    nx: int,
    ny: int,
    *,
    tol: float = NEWTON_TOL,
    max_iters: int = MAX_NEWTON_ITERS,
    dedup_tol: float = DEDUP_TOL,
    degeneracy_band: float = DEGENERACY_BAND,
    coprime: bool = True,
) -> list[PeriodicOrbit]:
    """All distinct orbits of type ``(p, q)`` Newton reaches from a seed grid over ``window``

    :param coprime: Require ``gcd(p, q) = 1``; island chains around an elliptic point have types like ``(0, q)``
    :raises ValueError: Raised if ``p`` and ``q`` are not coprime and ``coprime`` is set
    :return: Orbits sorted by their first point
    """
    if q < 1 or (coprime and math.gcd(p, q) != 1):
        raise ValueError(f"Type ({p},{q}) must have q >= 1 and gcd(p, q) = 1")

    batch = newton_batch(lifted_map, grid_points(window, nx, ny), p, q, tol=tol, max_iters=max_iters)
    unique: list[FloatArray] = []
    divisors = 0
    for index in np.flatnonzero(batch.status == NewtonStatus.CONVERGED):
        try:
            points = _canonical_points(lifted_map, batch.points[index], q, dedup_tol)
        except PeriodDivisorError:
            divisors += 1
            continue
        if not any(same_orbit(points, known, dedup_tol) for known in unique):
            unique.append(points)

    orbits: list[PeriodicOrbit] = []
    for points in unique:
        try:
            orbits.append(_make_orbit(lifted_map, points, p, q, degeneracy_band))
        except ResidualTooLargeError as exc:
            _logger.debug("Dropping orbit: %s", exc)
    orbits.sort(key=lambda orbit: (orbit.points[0].x, orbit.points[0].y))

    counts = np.bincount(batch.status, minlength=len(NewtonStatus))
    _logger.info(
        "Found %d orbits of type (%d,%d) from %d seeds (%d converged, %d singular, %d not converged, %d divisors)",
        len(orbits),
        p,
        q,
        len(batch.status),
        counts[NewtonStatus.CONVERGED],
        counts[NewtonStatus.SINGULAR],
        counts[NewtonStatus.NOT_CONVERGED] + counts[NewtonStatus.NON_FINITE],
        divisors,
    )
    return orbits


def fixed_point_index(
    lifted_map: LiftedMap,
    z: LiftPoint,
    p: int,
    q: int,
    radius: float,
    samples: int = INDEX_SAMPLES,
) -> FixedPointIndex:
    """Winding number of ``w -> f^q(w) - T^p(w)`` around the circle of ``radius`` about ``z``

    The sampling is doubled until every angle increment is below a quarter turn.

    :raises ZeroVectorOnCircleError: Raised if the vector field vanishes on the circle
    :raises AmbiguousWindingError: Raised if the total turning is not close to a multiple of ``2 pi``
    """
    if radius <= 0.0:
        raise ValueError(f"Sampling radius must be positive, got {radius}")
    samples = max(samples, INDEX_SAMPLES)
    while True:
        theta = 2.0 * np.pi * np.arange(samples + 1) / samples
        wx = z.x + radius * np.cos(theta)
        wy = z.y + radius * np.sin(theta)
        gx, gy = _residual(lifted_map, wx, wy, p, q)
        if np.any(np.hypot(gx, gy) <= 1e-15 * max(1.0, radius)):
            raise ZeroVectorOnCircleError(f"A fixed point of type ({p},{q}) lies on the circle of radius {radius}")
        increments = np.diff(np.unwrap(np.arctan2(gy, gx)))
        if np.max(np.abs(increments)) < np.pi / 4.0:
            break
        if samples >= MAX_INDEX_SAMPLES:
            raise AmbiguousWindingError(
                f"Angle increments stay above a quarter turn with {samples} samples at radius {radius}"
            )
        samples *= 2

    winding = float(np.sum(increments)) / (2.0 * np.pi)
    if abs(winding - round(winding)) > WINDING_TOL:
        raise AmbiguousWindingError(f"Total turning {winding:.6f} is not an integer number of turns")
    return FixedPointIndex(value=round(winding), radius=radius, samples=samples, turning_data=increments)


def lefschetz_sum(
    lifted_map: LiftedMap, orbits: ty.Iterable[PeriodicOrbit], p: int, q: int, radius: float
) -> LefschetzSum:
    """Sum of the fixed point indices of ``f^q o T^-p`` over every point of the given orbits"""
    indices: list[int] = []
    for orbit in orbits:
        index = fixed_point_index(lifted_map, orbit.points[0], p, q, radius).value
        indices.extend([index] * orbit.q)
    total = sum(indices)
    return LefschetzSum(annulus=total, sphere=total + 2, indices=indices)


def rationals_between(lo: float, hi: float, q_max: int) -> list[tuple[int, int]]:
    """Coprime ``(p, q)`` with ``q <= q_max`` and ``lo <= p/q <= hi``, ordered by ``q`` then ``p``"""
    result = []
    for q in range(1, q_max + 1):
        for p in range(math.ceil(lo * q), math.floor(hi * q) + 1):
            if math.gcd(p, q) == 1:
                result.append((p, q))
    return result
