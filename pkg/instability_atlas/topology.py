"""Essential and inessential saddles, closures of branches and their comparison"""

from __future__ import annotations

import enum
import logging
import math
import typing as ty

import numpy as np
import pydantic
from matplotlib.figure import Figure
from scipy import ndimage
from scipy.spatial import cKDTree

from .arrays import Array, FloatArray, wrap_unit
from .dynamics import LiftedMap
from .error import (
    BranchGrowthFailedError,
    EmptyCloudError,
    NonFiniteError,
    NotFoundWithinCapError,
    ResolutionTooCoarseError,
)
from .manifolds import (
    DEFAULT_EPS,
    DEFAULT_MAX_GAP,
    DEFAULT_MAX_TURN,
    DEFAULT_POINT_CAP,
    BranchKind,
    BranchSign,
    HeteroclinicPoint,
    branch_seed,
    first_crossing,
    grow_branch,
    grow_orbit_branches,
    loop_self_crossings,
    primary_homoclinic,
)
from .periodic import PeriodicOrbit, same_orbit

__all__ = [
    "EssentialityStatus",
    "EssentialityVerdict",
    "ManifoldCloud",
    "classify_essentiality",
    "sample_K",
    "hausdorff",
    "k_equivalent",
]

_logger = logging.getLogger(__name__)

DEDUP_GRID = 1e-6
MAX_RESOLUTION = 1.0 / 8.0


class GrowthSettings(pydantic.BaseModel):
    """Branch growth parameters shared by the cloud based detectors"""

    eps: pydantic.PositiveFloat = DEFAULT_EPS
    max_gap: pydantic.PositiveFloat = DEFAULT_MAX_GAP
    max_turn: pydantic.PositiveFloat = DEFAULT_MAX_TURN
    point_cap: pydantic.PositiveInt = DEFAULT_POINT_CAP


class AnnulusTree:
    """Nearest neighbour index in the annulus metric, x periodic with period 1

    :param points: Indexed points, any lift
    :param y_range: Range containing the y coordinates of both indexed and queried points
    """

    def __init__(self, points: FloatArray, y_range: tuple[float, float]) -> None:
        self._y0 = y_range[0]
        span = y_range[1] - y_range[0]
        self._tree = cKDTree(self._embed(points), boxsize=[1.0, 2.0 * span + 1.0])

    def _embed(self, points: FloatArray) -> FloatArray:
        points = np.atleast_2d(points)
        return np.column_stack([wrap_unit(points[:, 0]), points[:, 1] - self._y0])

    def query(self, points: FloatArray, upper_bound: float = np.inf) -> tuple[FloatArray, np.ndarray]:
        distances, indices = self._tree.query(self._embed(points), distance_upper_bound=upper_bound)
        return distances, indices


def _common_range(*clouds: FloatArray) -> tuple[float, float]:
    ys = np.concatenate([cloud[:, 1] for cloud in clouds])
    return float(ys.min()), float(ys.max())


def directed_hausdorff(source: FloatArray, target: FloatArray) -> float:
    """Largest distance from a point of ``source`` to the nearest point of ``target``"""
    tree = AnnulusTree(target, _common_range(source, target))
    distances, _ = tree.query(source)
    return float(distances.max())


class ManifoldCloud(pydantic.BaseModel):
    """Points along all branches of a saddle orbit up to an arclength, reduced mod 1"""

    orbit_id: str
    arclength: float
    points: Array

    @property
    def y_range(self) -> tuple[float, float]:
        return float(self.points[:, 1].min()), float(self.points[:, 1].max())


class EssentialityStatus(str, enum.Enum):
    ESSENTIAL = "Essential"
    NOT_FOUND_UP_TO = "NotFoundUpTo"


class EssentialityVerdict(pydantic.BaseModel):
    """Outcome of the separation test

    ``NotFoundUpTo`` only states that the branches up to ``arclength`` do not separate the ends at ``resolution``.
    An ``Essential`` verdict carries a closed curve in the lift whose last point is the first one translated by 1.
    """

    orbit_id: str
    status: EssentialityStatus
    arclength: float
    resolution: float
    band: tuple[float, float]
    certificate: Array | None = None
    separation_mask: Array | None = pydantic.Field(default=None, exclude=True)

    @property
    def is_essential(self) -> bool:
        return self.status == EssentialityStatus.ESSENTIAL


def _densify(polyline: FloatArray, spacing: float) -> FloatArray:
    """Points along a polyline no further apart than ``spacing``"""
    if len(polyline) < 2:
        return polyline
    start, end = polyline[:-1], polyline[1:]
    counts = np.maximum(1, np.ceil(np.hypot(*(end - start).T) / spacing).astype(np.int64))
    rows = np.repeat(np.arange(len(start)), counts)
    first = np.cumsum(counts) - counts
    fraction = (np.arange(len(rows)) - np.repeat(first, counts)) / np.repeat(counts, counts)
    points = start[rows] + fraction[:, np.newaxis] * (end[rows] - start[rows])
    return np.vstack([points, polyline[-1:]])


def _grow(lifted_map: LiftedMap, orbit: PeriodicOrbit, arclength: float, growth: GrowthSettings) -> list[FloatArray]:
    try:
        branches = grow_orbit_branches(
            lifted_map,
            orbit,
            arclength,
            eps=growth.eps,
            max_gap=growth.max_gap,
            max_turn=growth.max_turn,
            point_cap=growth.point_cap,
        )
    except NonFiniteError as exc:
        raise BranchGrowthFailedError(f"Branches of {orbit.describe()} could not be grown: {exc}") from exc
    return [branch.polyline for branch in branches]


class _Components:
    """Connected components of the free cells of a periodic occupancy grid"""

    def __init__(self, occupied: np.ndarray) -> None:
        labels, count = ndimage.label(~occupied)
        parent = np.arange(count + 1)

        def find(label: int) -> int:
            while parent[label] != label:
                parent[label] = parent[parent[label]]
                label = parent[label]
            return int(label)

        for left, right in zip(labels[:, 0], labels[:, -1]):
            if left and right:
                parent[find(left)] = find(right)

        self.roots = np.array([find(label) for label in range(count + 1)])
        self.components = np.where(labels > 0, self.roots[labels], 0)

    def at(self, row: int, col: int) -> int:
        return int(self.components[row, col])


def classify_essentiality(
    lifted_map: LiftedMap,
    orbit: PeriodicOrbit,
    arclength: float,
    resolution: float,
    growth: GrowthSettings | None = None,
) -> EssentialityVerdict:
    """Decide whether the branches of ``orbit`` up to ``arclength`` contain an essential closed curve

    The union of all branches is rasterized onto a band of cells of size ``resolution``, x periodic. The orbit is
    essential if the free cells reached from the top edge and from the bottom edge are different components.

    :raises ResolutionTooCoarseError: Raised if ``resolution`` leaves fewer than 8 cells around the annulus
    :raises BranchGrowthFailedError: Raised if the branches cannot be grown
    """
    if resolution <= 0.0:
        raise ValueError(f"Resolution must be positive, got {resolution}")
    if resolution > MAX_RESOLUTION:
        raise ResolutionTooCoarseError(f"Resolution {resolution} leaves fewer than {int(1 / MAX_RESOLUTION)} columns")
    growth = growth or GrowthSettings()

    polylines = [orbit.as_array()] if arclength <= 0.0 else _grow(lifted_map, orbit, arclength, growth)
    cloud = np.vstack(polylines)
    lo = math.floor(cloud[:, 1].min() / resolution) * resolution - 2.0 * resolution
    hi = math.ceil(cloud[:, 1].max() / resolution) * resolution + 2.0 * resolution
    rows = int(round((hi - lo) / resolution))
    cols = int(round(1.0 / resolution))
    verdict = EssentialityVerdict(
        orbit_id=orbit.orbit_id,
        status=EssentialityStatus.NOT_FOUND_UP_TO,
        arclength=arclength,
        resolution=resolution,
        band=(lo, hi),
    )
    if arclength <= 0.0:
        return verdict

    occupied = np.zeros((rows, cols), dtype=bool)
    for polyline in polylines:
        points = _densify(polyline, resolution / 3.0)
        row = np.clip(np.floor((points[:, 1] - lo) / resolution).astype(np.int64), 0, rows - 1)
        col = np.floor(wrap_unit(points[:, 0]) * cols).astype(np.int64) % cols
        occupied[row, col] = True

    components = _Components(occupied)
    top, bottom = components.at(rows - 1, 0), components.at(0, 0)
    if top == bottom:
        _logger.info(
            "No essential curve for %s up to arclength %g at resolution %g", orbit.describe(), arclength, resolution
        )
        return verdict.model_copy(update={"separation_mask": occupied.astype(np.float64)})

    certificate = _certificate(components.components == top, lo, resolution, cloud)
    if certificate is None:
        _logger.warning("Separation found for %s but no closed boundary curve could be traced", orbit.describe())
    _logger.info("%s is essential at arclength %g", orbit.describe(), arclength)
    return verdict.model_copy(
        update={
            "status": EssentialityStatus.ESSENTIAL,
            "certificate": certificate,
            "separation_mask": occupied.astype(np.float64),
        }
    )


def _certificate(top_mask: np.ndarray, lo: float, resolution: float, cloud: FloatArray) -> FloatArray | None:
    """Trace the lower boundary of the top component and snap it onto the branch points

    The grid is tiled three times in x so that the boundary contour crosses a full period in the middle tile.
    A snapped loop that crosses itself is replaced by the traced contour; the result is a simple curve or ``None``.
    """
    rows, cols = top_mask.shape
    xs = (np.arange(3 * cols) + 0.5) / cols - 1.0
    ys = lo + (np.arange(rows) + 0.5) * resolution
    axes = Figure().add_subplot()
    contour = axes.contour(xs, ys, np.tile(top_mask.astype(np.float64), (1, 3)), levels=[0.5])
    lines = [np.asarray(line) for line in contour.allsegs[0] if len(line) > 1]
    if not lines:
        return None

    line = max(lines, key=lambda segment: np.ptp(segment[:, 0]))
    if line[-1, 0] < line[0, 0]:
        line = line[::-1]
    starts = np.flatnonzero(line[:, 0] >= 0.0)
    if len(starts) == 0:
        return None
    first = int(starts[0])
    target = line[first] + np.array([1.0, 0.0])
    distance = np.hypot(*(line[first + 1 :] - target).T)
    if len(distance) == 0 or distance.min() > 1e-6:
        return None
    last = first + 1 + int(np.argmin(distance))
    loop = line[first:last]

    tree = AnnulusTree(cloud, _common_range(cloud, loop))
    _, nearest = tree.query(loop)
    snapped = cloud[nearest].copy()
    snapped[:, 0] += np.round(loop[:, 0] - snapped[:, 0])
    for candidate in (_close_loop(snapped), _close_loop(loop)):
        if len(candidate) < 4:
            continue
        if (crossings := loop_self_crossings(candidate)) == 0:
            return candidate
        _logger.debug("Boundary curve with %d points crosses itself %d times", len(candidate), crossings)
    return None


def _close_loop(points: FloatArray) -> FloatArray:
    """Append the first point translated by one period and drop repeated points"""
    closed = np.vstack([points, points[:1] + np.array([1.0, 0.0])])
    keep = np.concatenate([[True], np.any(np.diff(closed, axis=0) != 0.0, axis=1)])
    return closed[keep]


def sample_K(
    lifted_map: LiftedMap, orbit: PeriodicOrbit, arclength: float, growth: GrowthSettings | None = None
) -> ManifoldCloud:
    """Union of the points of all branches of ``orbit`` up to ``arclength``, reduced mod 1 and deduplicated

    :raises BranchGrowthFailedError: Raised if the branches cannot be grown
    """
    growth = growth or GrowthSettings()
    polylines = [orbit.as_array()]
    if arclength > 0.0:
        polylines += _grow(lifted_map, orbit, arclength, growth)
    points = np.vstack(polylines)
    points[:, 0] = wrap_unit(points[:, 0])
    keys = np.round(points / DEDUP_GRID).astype(np.int64)
    keys[:, 0] %= int(round(1.0 / DEDUP_GRID))
    _, first = np.unique(keys, axis=0, return_index=True)
    points = points[np.sort(first)]
    _logger.debug("Cloud of %s at arclength %g has %d points", orbit.describe(), arclength, len(points))
    return ManifoldCloud(orbit_id=orbit.orbit_id, arclength=arclength, points=points)


def hausdorff(cloud_a: ManifoldCloud | FloatArray, cloud_b: ManifoldCloud | FloatArray) -> float:
    """Symmetric Hausdorff distance in the annulus metric

    :raises EmptyCloudError: Raised if a cloud has no points
    """
    a = cloud_a.points if isinstance(cloud_a, ManifoldCloud) else np.asarray(cloud_a, dtype=np.float64)
    b = cloud_b.points if isinstance(cloud_b, ManifoldCloud) else np.asarray(cloud_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptyCloudError("Hausdorff distance needs two non-empty clouds")
    a, b = a.reshape(-1, 2), b.reshape(-1, 2)
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


class EquivalenceStatus(str, enum.Enum):
    EQUIVALENT = "Equivalent"
    UNDETERMINED = "Undetermined"


class EquivalenceVerdict(pydantic.BaseModel):
    """Heteroclinic witnesses of ``W^u(A) & W^s(B)`` (forward) and ``W^u(B) & W^s(A)`` (backward)"""

    status: EquivalenceStatus
    arclength: float
    forward: HeteroclinicPoint | None = None
    backward: HeteroclinicPoint | None = None


def _connection(
    lifted_map: LiftedMap, source: PeriodicOrbit, target: PeriodicOrbit, arclength: float, growth: GrowthSettings
) -> HeteroclinicPoint | None:
    stable = grow_orbit_branches(
        lifted_map,
        target,
        arclength,
        kinds=(BranchKind.STABLE,),
        eps=growth.eps,
        max_gap=growth.max_gap,
        max_turn=growth.max_turn,
        point_cap=growth.point_cap,
    )
    witnesses = []
    for sign in BranchSign:
        seed = branch_seed(lifted_map, source, BranchKind.UNSTABLE, sign, growth.eps)
        unstable = grow_branch(lifted_map, seed, arclength, growth.max_gap, growth.max_turn, growth.point_cap)
        if (point := first_crossing(lifted_map, unstable, stable)) is not None:
            witnesses.append(point)
    return min(witnesses, key=lambda point: point.arclength, default=None)


def k_equivalent(
    lifted_map: LiftedMap,
    orbit_a: PeriodicOrbit,
    orbit_b: PeriodicOrbit,
    arclength_cap: float,
    *,
    start_arclength: float = 4.0,
    growth: GrowthSettings | None = None,
) -> EquivalenceVerdict:
    """Look for heteroclinic connections in both directions between two saddle orbits

    The arclength is doubled from ``start_arclength`` up to ``arclength_cap``. Identical orbits are related by
    their primary homoclinic point.
    """
    growth = growth or GrowthSettings()
    if (orbit_a.p, orbit_a.q) == (orbit_b.p, orbit_b.q) and same_orbit(orbit_a.as_array(), orbit_b.as_array()):
        try:
            point = primary_homoclinic(
                lifted_map,
                orbit_a,
                start_arclength=start_arclength,
                cap=arclength_cap,
                eps=growth.eps,
                max_gap=growth.max_gap,
                max_turn=growth.max_turn,
                point_cap=growth.point_cap,
            )
        except NotFoundWithinCapError:
            return EquivalenceVerdict(status=EquivalenceStatus.UNDETERMINED, arclength=arclength_cap)
        return EquivalenceVerdict(
            status=EquivalenceStatus.EQUIVALENT, arclength=point.arclength, forward=point, backward=point
        )

    arclength = min(start_arclength, arclength_cap)
    while True:
        forward = _connection(lifted_map, orbit_a, orbit_b, arclength, growth)
        backward = _connection(lifted_map, orbit_b, orbit_a, arclength, growth)
        if forward is not None and backward is not None:
            _logger.info(
                "%s and %s are connected both ways at arclength %g", orbit_a.describe(), orbit_b.describe(), arclength
            )
            return EquivalenceVerdict(
                status=EquivalenceStatus.EQUIVALENT, arclength=arclength, forward=forward, backward=backward
            )
        if arclength >= arclength_cap:
            _logger.info(
                "No two-way connection of %s and %s up to %g", orbit_a.describe(), orbit_b.describe(), arclength
            )
            return EquivalenceVerdict(
                status=EquivalenceStatus.UNDETERMINED, arclength=arclength, forward=forward, backward=backward
            )
        arclength = min(2.0 * arclength, arclength_cap)
