"""Stable and unstable branches of saddles as adaptive polylines, and their crossings"""

from __future__ import annotations

import dataclasses
import enum
import logging
import typing as ty

import numpy as np
import pydantic
from scipy.spatial import cKDTree

from .arrays import Array, FloatArray, polyline_arclength, wrap_unit
from .dynamics import LiftedMap, LiftPoint
from .error import BranchGrowthFailedError, InvalidEpsError, NotFoundWithinCapError, NotHyperbolicError
from .periodic import PeriodicOrbit, Stability, power_with_jacobian

__all__ = [
    "BranchKind",
    "BranchSign",
    "BranchSeed",
    "Branch",
    "HeteroclinicPoint",
    "branch_seed",
    "branch_point",
    "grow_branch",
    "branch_intersections",
    "primary_homoclinic",
]

_logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-7
DEFAULT_MAX_GAP = 1e-3
DEFAULT_MAX_TURN = 0.2
DEFAULT_POINT_CAP = 2_000_000
SEED_SAMPLES = 16
MAX_LEVELS = 10_000
MIN_TAU_STEP = 1e-13
ANGLE_FLOOR = 1e-4
REFINE_TOL = 1e-10
MAX_BISECTIONS = 60


class BranchKind(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"


class BranchSign(str, enum.Enum):
    PLUS = "Plus"
    MINUS = "Minus"


class BranchSeed(pydantic.BaseModel):
    """Fundamental segment of a branch

    The branch is parameterized by ``tau >= 0`` as ``g^floor(tau)(saddle + eps * multiplier^frac(tau) * direction)``
    where ``g = f^steps`` expands along ``direction`` by ``multiplier``. Unstable branches use positive ``steps``,
    stable branches negative ones; negative eigenvalues double the period so that each side of the saddle is
    invariant.
    """

    orbit: PeriodicOrbit
    point_index: int
    kind: BranchKind
    sign: BranchSign
    eps: float
    saddle: LiftPoint
    direction: tuple[float, float]
    multiplier: float
    steps: int
    segment: Array

    @property
    def arclength(self) -> float:
        """Length of the polyline from the saddle through the fundamental segment"""
        return float(polyline_arclength(np.vstack([self.saddle.as_array(), self.segment]))[-1])


class Branch(pydantic.BaseModel):
    """Branch polyline from the saddle outward, ``polyline[0]`` is the saddle and ``taus`` parameterize the rest

    ``unresolved_gaps`` counts segments left longer than ``max_gap`` by the parameter floor or the point cap.
    """

    seed: BranchSeed
    polyline: Array
    taus: Array
    arclength: float
    max_gap: float
    max_turn: float
    truncated: bool = False
    unresolved_gaps: int = 0

    @property
    def owner(self) -> PeriodicOrbit:
        return self.seed.orbit

    @property
    def kind(self) -> BranchKind:
        return self.seed.kind

    @property
    def sign(self) -> BranchSign:
        return self.seed.sign

    def reference(self) -> BranchRef:
        return BranchRef(
            orbit_id=self.owner.orbit_id,
            p=self.owner.p,
            q=self.owner.q,
            point_index=self.seed.point_index,
            kind=self.kind,
            sign=self.sign,
        )


class BranchRef(pydantic.BaseModel):
    orbit_id: str
    p: int
    q: int
    point_index: int
    kind: BranchKind
    sign: BranchSign


class HeteroclinicPoint(pydantic.BaseModel):
    """Crossing of an unstable and a stable branch

    ``location`` is the polyline crossing reduced mod 1, ``refined_location`` the crossing of the true branches
    when it was refined by bisection in the branch parameters.
    """

    location: LiftPoint
    from_branch: BranchRef
    to_branch: BranchRef
    crossing_angle: float
    near_tangency: bool
    arclength: float
    taus: tuple[float, float]
    refined_location: LiftPoint | None = None


def branch_seed(
    lifted_map: LiftedMap,
    orbit: PeriodicOrbit,
    kind: BranchKind,
    sign: BranchSign,
    eps: float = DEFAULT_EPS,
    point_index: int = 0,
) -> BranchSeed:
    """Linear fundamental segment of a branch along the eigenvector of ``Df^q`` at an orbit point

    :raises NotHyperbolicError: Raised if the orbit is not hyperbolic
    :raises InvalidEpsError: Raised if ``eps`` is not a positive finite number
    """
    if orbit.stability != Stability.HYPERBOLIC:
        raise NotHyperbolicError(f"Branches need a hyperbolic orbit, got {orbit.describe()}")
    if not (np.isfinite(eps) and eps > 0.0):
        raise InvalidEpsError(f"Seed offset eps must be positive, got {eps}")

    saddle = orbit.points[point_index]
    _, _, jac = power_with_jacobian(lifted_map, np.array([saddle.x]), np.array([saddle.y]), orbit.q)
    values, vectors = np.linalg.eig(jac[0])
    order = np.argsort(np.abs(values))
    chosen = int(order[-1] if kind == BranchKind.UNSTABLE else order[0])
    value = float(np.real(values[chosen]))
    vector = np.real(vectors[:, chosen])
    vector = vector / np.linalg.norm(vector)

    pointing_up = vector[1] > 0.0 if abs(vector[1]) > 1e-12 else vector[0] > 0.0
    if pointing_up != (sign == BranchSign.PLUS):
        vector = -vector

    period = orbit.q if value > 0.0 else 2 * orbit.q
    multiplier = abs(value) if value > 0.0 else value * value
    if kind == BranchKind.STABLE:
        multiplier = 1.0 / multiplier

    seed = BranchSeed(
        orbit=orbit,
        point_index=point_index,
        kind=kind,
        sign=sign,
        eps=eps,
        saddle=saddle,
        direction=(float(vector[0]), float(vector[1])),
        multiplier=multiplier,
        steps=period if kind == BranchKind.UNSTABLE else -period,
        segment=np.zeros((0, 2)),
    )
    taus = np.linspace(0.0, 1.0, SEED_SAMPLES + 1)
    return seed.model_copy(update={"segment": branch_point(lifted_map, seed, taus)})


def branch_point(lifted_map: LiftedMap, seed: BranchSeed, tau: ty.Any) -> FloatArray:
    """Points of the branch at parameters ``tau``, shape ``(n, 2)`` in the lift of the saddle"""
    tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    level = np.floor(tau).astype(np.int64)
    frac = tau - level
    offset = seed.eps * seed.multiplier**frac
    x = seed.saddle.x + offset * seed.direction[0]
    y = seed.saddle.y + offset * seed.direction[1]
    for step in range(int(level.max(initial=0))):
        moving = level > step
        x[moving], y[moving] = lifted_map.power(x[moving], y[moving], seed.steps)
    return np.column_stack([x, y])


def _turns(points: FloatArray) -> FloatArray:
    d = np.diff(points, axis=0)
    cross = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
    dot = np.einsum("ij,ij->i", d[:-1], d[1:])
    return ty.cast(FloatArray, np.abs(np.arctan2(cross, dot)))


@dataclasses.dataclass
class _Level:
    taus: FloatArray
    points: FloatArray


def _refine_level(
    lifted_map: LiftedMap,
    seed: BranchSeed,
    anchor: FloatArray,
    anchor_tau: float,
    level: _Level,
    max_gap: float,
    max_turn: float,
    budget: int,
) -> tuple[_Level, bool]:
    """Insert parameter midpoints into a level until its gaps and turns satisfy the limits

    ``anchor`` holds the last two points of the previous level; the segment joining it to the level is refined as
    part of the level.

    :return: 2-tuple of (refined level, whether the point budget ran out)
    """
    taus = np.concatenate([[np.nan, anchor_tau], level.taus])
    points = np.vstack([anchor, level.points])
    while True:
        gaps = np.hypot(*np.diff(points, axis=0).T)
        bad = gaps > max_gap
        turns = _turns(points)
        sharp = np.flatnonzero(turns > max_turn)
        bad[sharp] = True
        bad[sharp + 1] = True
        bad[0] = False
        bad &= np.diff(taus) > MIN_TAU_STEP * np.maximum(1.0, taus[1:])

        segments = np.flatnonzero(bad)
        if len(segments) == 0:
            return _Level(taus=taus[2:], points=points[2:]), False
        if len(segments) > budget - len(taus):
            _logger.warning("Point cap reached while refining a %s branch", seed.kind.value.lower())
            return _Level(taus=taus[2:], points=points[2:]), True

        mids = 0.5 * (taus[segments] + taus[segments + 1])
        taus = np.insert(taus, segments + 1, mids)
        points = np.insert(points, segments + 1, branch_point(lifted_map, seed, mids), axis=0)


def grow_branch(
    lifted_map: LiftedMap,
    seed: BranchSeed,
    target_arclength: float,
    max_gap: float = DEFAULT_MAX_GAP,
    max_turn: float = DEFAULT_MAX_TURN,
    point_cap: int = DEFAULT_POINT_CAP,
) -> Branch:
    """Grow a branch by iterating its fundamental segment, refining each new level

    The polyline is cut at the first vertex whose arclength reaches ``target_arclength``. Growth is deterministic and
    proceeds the same way for every target, so a shorter branch is a prefix of a longer one.

    :raises BranchGrowthFailedError: Raised if the branch stops growing
    :raises NonFiniteError: Raised if an iterate overflows
    """
    saddle = seed.saddle.as_array()
    levels = [_Level(taus=np.linspace(0.0, 1.0, SEED_SAMPLES + 1), points=seed.segment.copy())]
    length = float(polyline_arclength(np.vstack([saddle, seed.segment]))[-1])
    count = len(seed.segment) + 1
    truncated = False

    while length < target_arclength:
        if len(levels) > MAX_LEVELS:
            raise BranchGrowthFailedError(
                f"Branch of {seed.orbit.describe()} reached only arclength {length:.3f} after {MAX_LEVELS} levels"
            )
        previous = levels[-1]
        source = previous if len(levels) > 1 else _Level(taus=previous.taus[1:], points=previous.points[1:])
        x, y = lifted_map.power(source.points[:, 0], source.points[:, 1], seed.steps)
        level = _Level(taus=source.taus + 1.0, points=np.column_stack([x, y]))

        anchor = previous.points[-2:] if len(previous.points) > 1 else np.vstack([saddle, previous.points])
        level, truncated = _refine_level(
            lifted_map, seed, anchor, float(previous.taus[-1]), level, max_gap, max_turn, point_cap - count
        )
        levels.append(level)
        count += len(level.points)
        length += float(polyline_arclength(np.vstack([previous.points[-1:], level.points]))[-1])
        if truncated or count >= point_cap:
            truncated = True
            _logger.warning(
                "Branch of %s truncated at %d points and arclength %.3f", seed.orbit.describe(), count, length
            )
            break

    polyline = np.vstack([saddle] + [level.points for level in levels])
    taus = np.concatenate([level.taus for level in levels])
    cumulative = polyline_arclength(polyline)
    end = min(int(np.searchsorted(cumulative, target_arclength, side="left")), len(polyline) - 1)
    unresolved = int(np.count_nonzero(np.hypot(*np.diff(polyline[: end + 1], axis=0).T) > max_gap))
    if unresolved:
        _logger.warning(
            "%d segments of a branch of %s are longer than the gap limit %g",
            unresolved,
            seed.orbit.describe(),
            max_gap,
        )
    _logger.debug(
        "Grew %s %s branch of %s to %d points", seed.kind.value, seed.sign.value, seed.orbit.describe(), end + 1
    )
    return Branch(
        seed=seed,
        polyline=polyline[: end + 1],
        taus=taus[:end],
        arclength=float(cumulative[end]),
        max_gap=max_gap,
        max_turn=max_turn,
        truncated=truncated,
        unresolved_gaps=unresolved,
    )


def grow_orbit_branches(
    lifted_map: LiftedMap,
    orbit: PeriodicOrbit,
    arclength: float,
    *,
    kinds: ty.Iterable[BranchKind] = (BranchKind.UNSTABLE, BranchKind.STABLE),
    point_indices: ty.Iterable[int] | None = None,
    eps: float = DEFAULT_EPS,
    max_gap: float = DEFAULT_MAX_GAP,
    max_turn: float = DEFAULT_MAX_TURN,
    point_cap: int = DEFAULT_POINT_CAP,
) -> list[Branch]:
    """Both signs of the given branch kinds at the given orbit points (all points by default)"""
    indices = range(orbit.q) if point_indices is None else point_indices
    branches = []
    for index in indices:
        for kind in kinds:
            for sign in BranchSign:
                seed = branch_seed(lifted_map, orbit, kind, sign, eps, point_index=index)
                branches.append(grow_branch(lifted_map, seed, arclength, max_gap, max_turn, point_cap))
    return branches


@dataclasses.dataclass
class _Segments:
    """Polyline segments shifted so that their start lies in ``[0, 1)``, duplicated across the boundaries"""

    index: np.ndarray
    shift: np.ndarray
    start: FloatArray
    end: FloatArray

    @classmethod
    def from_polyline(cls, polyline: FloatArray) -> _Segments:
        start, end = polyline[:-1], polyline[1:]
        shift = -np.floor(start[:, 0])
        index = np.arange(len(start))
        parts = [(index, shift)]
        ends_x = end[:, 0] + shift
        parts.append((index[ends_x >= 1.0], shift[ends_x >= 1.0] - 1.0))
        parts.append((index[ends_x < 0.0], shift[ends_x < 0.0] + 1.0))
        index = np.concatenate([part[0] for part in parts])
        shift = np.concatenate([part[1] for part in parts])
        offset = np.column_stack([shift, np.zeros_like(shift)])
        return cls(index=index, shift=shift, start=start[index] + offset, end=end[index] + offset)

    def pieces(self, length: float) -> tuple[np.ndarray, FloatArray]:
        """Midpoints of sub-segments no longer than ``length``, with the segment row they belong to"""
        counts = np.maximum(1, np.ceil(np.hypot(*(self.end - self.start).T) / length).astype(np.int64))
        rows = np.repeat(np.arange(len(self.start)), counts)
        first = np.cumsum(counts) - counts
        fraction = (np.arange(len(rows)) - np.repeat(first, counts) + 0.5) / np.repeat(counts, counts)
        mids = self.start[rows] + fraction[:, np.newaxis] * (self.end[rows] - self.start[rows])
        return rows, mids


def _cross(a: FloatArray, b: FloatArray) -> FloatArray:
    return ty.cast(FloatArray, a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])


def _segment_crossing(
    p0: FloatArray, p1: FloatArray, q0: FloatArray, q1: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Parameters ``t``, ``u`` of the crossing of ``p0 + t r`` and ``q0 + u s``, and ``cross(r, s)``"""
    r = p1 - p0
    s = q1 - q0
    denom = _cross(r, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(q0 - p0, s) / denom
        u = _cross(q0 - p0, r) / denom
    return t, u, denom


def loop_self_crossings(loop: FloatArray) -> int:
    """Number of transversal crossings of non-adjacent segments of a closed curve in the annulus

    :param loop: Lift polyline whose last point is its first point translated by ``(1, 0)``
    """
    n = len(loop) - 1
    if n < 3:
        return 0
    segments = _Segments.from_polyline(loop)
    length = float(np.hypot(*(segments.end - segments.start).T).max())
    if length == 0.0:
        return 0
    mids = 0.5 * (segments.start + segments.end)
    pairs = cKDTree(mids).query_pairs(length * (1.0 + 1e-9), output_type="ndarray")
    if len(pairs) == 0:
        return 0
    a, b = pairs[:, 0], pairs[:, 1]
    i, j = segments.index[a], segments.index[b]
    gap = np.abs(i - j)
    # First and last segment meet at the closing point
    apart = (gap > 1) & (gap < n - 1)
    t, u, denom = _segment_crossing(segments.start[a], segments.end[a], segments.start[b], segments.end[b])
    hit = apart & (denom != 0.0) & (t > 0.0) & (t < 1.0) & (u > 0.0) & (u < 1.0)
    return len({(int(min(p, q)), int(max(p, q))) for p, q in zip(i[hit], j[hit])})


@dataclasses.dataclass
class _Crossing:
    i: int
    j: int
    t: float
    u: float
    relative_shift: float
    point: FloatArray
    angle: float
    arclength: float


def _polyline_crossings(b1: Branch, b2: Branch) -> list[_Crossing]:
    seg1 = _Segments.from_polyline(b1.polyline)
    seg2 = _Segments.from_polyline(b2.polyline)
    if len(seg1.start) == 0 or len(seg2.start) == 0:
        return []

    piece = max(b1.max_gap, b2.max_gap)
    rows1, mids1 = seg1.pieces(piece)
    rows2, mids2 = seg2.pieces(piece)
    pairs = cKDTree(mids1).sparse_distance_matrix(cKDTree(mids2), piece * (1.0 + 1e-9), output_type="ndarray")
    if len(pairs) == 0:
        return []
    candidates = np.unique(np.column_stack([rows1[pairs["i"]], rows2[pairs["j"]]]), axis=0)
    a, b = candidates[:, 0], candidates[:, 1]
    t, u, denom = _segment_crossing(seg1.start[a], seg1.end[a], seg2.start[b], seg2.end[b])
    hit = (denom != 0.0) & (t >= 0.0) & (t < 1.0) & (u >= 0.0) & (u < 1.0)
    i, j = seg1.index[a], seg2.index[b]
    # The shared saddle of homoclinic pairs is not a crossing
    hit &= ~((i == 0) & (t < 1e-9)) & ~((j == 0) & (u < 1e-9))

    cumulative = polyline_arclength(b1.polyline)
    seen: set[tuple[int, int, float]] = set()
    crossings = []
    for k in np.flatnonzero(hit):
        relative_shift = float(seg2.shift[b[k]] - seg1.shift[a[k]])
        key = (int(i[k]), int(j[k]), relative_shift)
        if key in seen:
            continue
        seen.add(key)
        r = seg1.end[a[k]] - seg1.start[a[k]]
        s = seg2.end[b[k]] - seg2.start[b[k]]
        sine = abs(float(denom[k])) / (np.hypot(*r) * np.hypot(*s))
        crossings.append(
            _Crossing(
                i=int(i[k]),
                j=int(j[k]),
                t=float(t[k]),
                u=float(u[k]),
                relative_shift=relative_shift,
                point=seg1.start[a[k]] + t[k] * r,
                angle=float(np.arcsin(min(1.0, sine))),
                arclength=float(cumulative[i[k]] + t[k] * np.hypot(*r)),
            )
        )
    crossings.sort(key=lambda crossing: (crossing.arclength, crossing.j))
    return crossings


def _tau(branch: Branch, vertex: int) -> float:
    return float(branch.taus[vertex - 1])


def _tau_at(branch: Branch, segment: int, t: float) -> float:
    """Parameter of the point at fraction ``t`` of a polyline segment, the saddle segment maps to the first vertex"""
    if segment == 0:
        return float(branch.taus[0])
    start = _tau(branch, segment)
    return start + t * (_tau(branch, segment + 1) - start)


def _refine_crossing(lifted_map: LiftedMap, b1: Branch, b2: Branch, crossing: _Crossing) -> FloatArray | None:
    """Bisect both parameter intervals around a polyline crossing, keeping the half pair that still crosses

    :return: Crossing of the true branches in the lift of ``b1``, or None if the crossing disappears
    """
    if crossing.i == 0 or crossing.j == 0:
        return crossing.point.copy()
    offset = np.array([crossing.relative_shift, 0.0])
    ta = [_tau(b1, crossing.i), _tau(b1, crossing.i + 1)]
    tb = [_tau(b2, crossing.j), _tau(b2, crossing.j + 1)]
    pa = [b1.polyline[crossing.i], b1.polyline[crossing.i + 1]]
    pb = [b2.polyline[crossing.j] + offset, b2.polyline[crossing.j + 1] + offset]

    for _ in range(MAX_BISECTIONS):
        if max(np.hypot(*(pa[1] - pa[0])), np.hypot(*(pb[1] - pb[0]))) < REFINE_TOL:
            break
        mid_a, mid_b = 0.5 * (ta[0] + ta[1]), 0.5 * (tb[0] + tb[1])
        ma = branch_point(lifted_map, b1.seed, mid_a)[0]
        mb = branch_point(lifted_map, b2.seed, mid_b)[0] + offset
        halves_a = (([ta[0], mid_a], [pa[0], ma]), ([mid_a, ta[1]], [ma, pa[1]]))
        halves_b = (([tb[0], mid_b], [pb[0], mb]), ([mid_b, tb[1]], [mb, pb[1]]))
        for (ta_half, pa_half), (tb_half, pb_half) in (
            (half_a, half_b) for half_a in halves_a for half_b in halves_b
        ):
            t, u, denom = _segment_crossing(pa_half[0], pa_half[1], pb_half[0], pb_half[1])
            if denom != 0.0 and 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
                ta, pa, tb, pb = ta_half, pa_half, tb_half, pb_half
                break
        else:
            return None

    t, _, _ = _segment_crossing(pa[0], pa[1], pb[0], pb[1])
    return ty.cast(FloatArray, pa[0] + np.clip(t, 0.0, 1.0) * (pa[1] - pa[0]))


def _to_point(
    lifted_map: LiftedMap | None, b1: Branch, b2: Branch, crossing: _Crossing, angle_floor: float
) -> HeteroclinicPoint | None:
    refined = None
    if lifted_map is not None:
        refined_lift = _refine_crossing(lifted_map, b1, b2, crossing)
        if refined_lift is None:
            _logger.debug("Dropping polyline crossing at arclength %.6f, absent on the branches", crossing.arclength)
            return None
        refined = LiftPoint(x=float(wrap_unit(refined_lift[0])), y=float(refined_lift[1]))
    if crossing.angle < angle_floor:
        _logger.warning("Near tangency with crossing angle %.3e at arclength %.4f", crossing.angle, crossing.arclength)
    return HeteroclinicPoint(
        location=LiftPoint(x=float(wrap_unit(crossing.point[0])), y=float(crossing.point[1])),
        from_branch=b1.reference(),
        to_branch=b2.reference(),
        crossing_angle=crossing.angle,
        near_tangency=crossing.angle < angle_floor,
        arclength=crossing.arclength,
        taus=(_tau_at(b1, crossing.i, crossing.t), _tau_at(b2, crossing.j, crossing.u)),
        refined_location=refined,
    )


def branch_intersections(
    b1: Branch, b2: Branch, lifted_map: LiftedMap | None = None, angle_floor: float = ANGLE_FLOOR
) -> list[HeteroclinicPoint]:
    """Crossings of two branches of different kinds in the annulus, ordered by arclength along ``b1``

    :param lifted_map: When given, every crossing is refined on the true branches and dropped if it disappears
    :raises ValueError: Raised if both branches are of the same kind
    """
    if b1.kind == b2.kind:
        raise ValueError("Intersections are computed between a stable and an unstable branch")
    points = []
    for crossing in _polyline_crossings(b1, b2):
        if (point := _to_point(lifted_map, b1, b2, crossing, angle_floor)) is not None:
            points.append(point)
    _logger.debug("Found %d crossings of %d and %d point branches", len(points), len(b1.polyline), len(b2.polyline))
    return points


def first_crossing(
    lifted_map: LiftedMap,
    unstable: Branch,
    stable: ty.Iterable[Branch],
    angle_floor: float = ANGLE_FLOOR,
) -> HeteroclinicPoint | None:
    """Refined crossing with the smallest arclength along ``unstable`` among all given stable branches"""
    crossings = sorted(
        ((crossing, branch) for branch in stable for crossing in _polyline_crossings(unstable, branch)),
        key=lambda item: item[0].arclength,
    )
    for crossing, branch in crossings:
        if (point := _to_point(lifted_map, unstable, branch, crossing, angle_floor)) is not None:
            return point
    return None


def primary_homoclinic(
    lifted_map: LiftedMap,
    orbit: PeriodicOrbit,
    sign: BranchSign = BranchSign.PLUS,
    *,
    start_arclength: float = 2.0,
    cap: float = 64.0,
    eps: float = DEFAULT_EPS,
    max_gap: float = DEFAULT_MAX_GAP,
    max_turn: float = DEFAULT_MAX_TURN,
    point_cap: int = DEFAULT_POINT_CAP,
) -> HeteroclinicPoint:
    """Homoclinic point with the smallest arclength along an unstable branch of ``orbit``

    The arclength is doubled from ``start_arclength`` until a crossing with a stable branch of the same orbit point
    is found or ``cap`` is reached.

    :raises NotFoundWithinCapError: Raised if no crossing exists up to arclength ``cap``
    """
    arclength = min(start_arclength, cap)
    while True:
        seed = branch_seed(lifted_map, orbit, BranchKind.UNSTABLE, sign, eps)
        unstable = grow_branch(lifted_map, seed, arclength, max_gap, max_turn, point_cap)
        stable = grow_orbit_branches(
            lifted_map,
            orbit,
            arclength,
            kinds=(BranchKind.STABLE,),
            point_indices=(0,),
            eps=eps,
            max_gap=max_gap,
            max_turn=max_turn,
            point_cap=point_cap,
        )
        if (point := first_crossing(lifted_map, unstable, stable)) is not None:
            _logger.info("Primary homoclinic point of %s at arclength %.4f", orbit.describe(), point.arclength)
            return point
        if arclength >= cap:
            raise NotFoundWithinCapError(f"No homoclinic point of {orbit.describe()} up to arclength {cap}")
        arclength = min(2.0 * arclength, cap)
