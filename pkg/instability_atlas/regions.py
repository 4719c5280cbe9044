"""Invariant circle barriers, regions of instability between them and the transport inside regions"""

from __future__ import annotations

import collections.abc
import enum
import itertools
import logging
import math
import typing as ty

import numpy as np
import pydantic
from scipy import ndimage

from .arrays import Array, FloatArray, wrap_unit
from .dynamics import (
    DEFAULT_ORBIT_CAP,
    LiftedMap,
    LiftPoint,
    RotationInterval,
    check_orbit_length,
    rotation_interval_of_set,
    rotation_profile,
)
from .error import EmptySeedSetError, InvalidBandError
from .manifolds import BranchKind, BranchSign, branch_seed, grow_branch, grow_orbit_branches
from .periodic import PeriodicOrbit, Stability, Window, find_all_pq, grid_points, rationals_between
from .topology import AnnulusTree, GrowthSettings, classify_essentiality

__all__ = [
    "Barrier",
    "Region",
    "ConnectingOrbitEvidence",
    "detect_barrier",
    "decompose",
    "connecting_orbit_search",
    "escape_time_stats",
    "region_boundary_orbits",
    "coverage_report",
]

_logger = logging.getLogger(__name__)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
CHUNK = 4096


class RegionSettings(pydantic.BaseModel):
    """Run lengths and thresholds of the barrier and region detectors"""

    n_targets: pydantic.PositiveInt = 20
    bisection_steps: pydantic.PositiveInt = 2_000
    bisection_iterations: pydantic.PositiveInt = 24
    n_cert: pydantic.PositiveInt = 100_000
    graph_nodes: pydantic.PositiveInt = 1024
    graph_tol: pydantic.PositiveFloat = 5e-3
    proxy_q_max: pydantic.PositiveInt = 50
    irrational_margin: pydantic.PositiveFloat = 0.1
    transport_seeds: pydantic.PositiveInt = 100
    refine_samples: pydantic.PositiveInt = 32
    rotation_steps: pydantic.PositiveInt = 10_000
    rotation_grid: tuple[pydantic.PositiveInt, pydantic.PositiveInt] = (8, 16)
    inventory_q_max: pydantic.PositiveInt = 8
    inventory_grid: pydantic.PositiveInt = 32
    classify_inventory: bool = True
    essentiality_arclength: pydantic.PositiveFloat = 20.0
    essentiality_resolution: pydantic.PositiveFloat = 1.0 / 512.0


class CoverageSettings(pydantic.BaseModel):
    saddle_q_max: pydantic.PositiveInt = 3
    saddle_grid: pydantic.PositiveInt = 24
    coverage_arclength: pydantic.PositiveFloat = 100.0
    ftle_steps: pydantic.PositiveInt = 500
    ftle_threshold: pydantic.PositiveFloat = 0.05
    regular_orbit_steps: pydantic.PositiveInt = 200
    rotation_steps: pydantic.PositiveInt = 2_000


# Barriers


def irrational_margin(rho: float, q_max: int) -> float:
    """Smallest ``q^2 |rho - p/q|`` over ``q <= q_max``"""
    return min(q * q * abs(rho - round(rho * q) / q) for q in range(1, q_max + 1))


def is_irrational_proxy(rho: float, q_max: int = 50, margin: float = 0.1) -> bool:
    """Whether ``rho`` stays at least ``margin / q^2`` away from every ``p/q`` with ``q <= q_max``"""
    return irrational_margin(rho, q_max) >= margin


def noble_numbers(lo: float, hi: float, count: int = 20, depth: int = 3, largest_term: int = 6) -> list[float]:
    """Numbers in ``[lo, hi]`` whose continued fraction ends in a tail of ones, simplest prefixes first"""
    found: dict[float, tuple[int, int]] = {}
    terms = range(1, largest_term + 1)
    prefixes = [prefix for length in range(depth + 1) for prefix in itertools.product(terms, repeat=length)]
    for integer in range(math.floor(lo), math.floor(hi) + 1):
        for prefix in prefixes:
            tail = GOLDEN
            for term in reversed(prefix):
                tail = term + 1.0 / tail
            value = integer + 1.0 / tail
            if lo <= value <= hi:
                key = round(value, 12)
                found.setdefault(key, (len(prefix), sum(prefix)))
    return sorted(found, key=lambda value: (found[value], value))[:count]


class BarrierDetector(str, enum.Enum):
    GRAPH_FIT = "GraphFit"
    TRANSPORT_EXCLUSION = "TransportExclusion"


class Barrier(pydantic.BaseModel):
    """Certified non-crossing band

    ``GraphFit`` barriers carry an orbit whose points form a graph ``y = psi(x)`` sampled at ``graph_nodes`` bin
    centres; ``band`` is the y-range of that orbit. ``TransportExclusion`` barriers only certify that no seed started
    on one edge of ``band`` reached the other edge in ``n_cert`` steps.
    """

    detector: BarrierDetector
    band: tuple[float, float]
    rotation_estimate: float
    irrational_margin: float
    n_cert: int
    seed: LiftPoint | None = None
    graph: Array | None = None
    transport_excluded: bool | None = None

    @property
    def is_graph(self) -> bool:
        return self.graph is not None

    def curve(self, x: FloatArray, fallback: float) -> FloatArray:
        """``psi(x)`` for graph barriers, ``fallback`` everywhere otherwise"""
        x = np.asarray(x, dtype=np.float64)
        if self.graph is None:
            return np.full_like(x, fallback)
        nodes = (np.arange(len(self.graph)) + 0.5) / len(self.graph)
        return ty.cast(FloatArray, np.interp(wrap_unit(x), nodes, self.graph, period=1.0))


def _bin_extrema(bins: np.ndarray, values: FloatArray, lo: FloatArray, hi: FloatArray) -> None:
    """Update per-bin minima and maxima in place"""
    order = np.argsort(bins, kind="stable")
    sorted_bins = bins[order]
    sorted_values = values[order]
    starts = np.flatnonzero(np.r_[True, sorted_bins[1:] != sorted_bins[:-1]])
    keys = sorted_bins[starts]
    lo[keys] = np.minimum(lo[keys], np.minimum.reduceat(sorted_values, starts))
    hi[keys] = np.maximum(hi[keys], np.maximum.reduceat(sorted_values, starts))


def graph_statistics(
    lifted_map: LiftedMap, seeds: FloatArray, n_steps: int, nodes: int
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Rotation estimates and per x-bin y extrema of the orbits through ``seeds``

    :return: 3-tuple of (rotation ``(k,)``, minima ``(k, nodes)``, maxima ``(k, nodes)``), empty bins are +/-inf
    """
    seeds = np.atleast_2d(seeds)
    k = len(seeds)
    lo = np.full(k * nodes, np.inf)
    hi = np.full(k * nodes, -np.inf)
    offsets = nodes * np.arange(k)
    x, y = seeds[:, 0].copy(), seeds[:, 1].copy()
    done = 0
    while done < n_steps:
        m = min(CHUNK, n_steps - done)
        xs, ys = np.empty((m, k)), np.empty((m, k))
        for i in range(m):
            x, y = lifted_map.apply(x, y, check=False)
            xs[i], ys[i] = x, y
        finite = np.isfinite(xs) & np.isfinite(ys)
        bins = (np.floor(wrap_unit(np.where(finite, xs, 0.0)) * nodes).astype(np.int64) % nodes) + offsets
        _bin_extrema(bins[finite], ys[finite], lo, hi)
        done += m
    rotation = (x - seeds[:, 0]) / n_steps
    return rotation, lo.reshape(k, nodes), hi.reshape(k, nodes)


def transport_excluded(lifted_map: LiftedMap, y_lo: float, y_hi: float, n_seeds: int, n_steps: int) -> bool:
    """Whether no seed started on one edge of the band reaches beyond the other edge within ``n_steps``"""
    xs = (np.arange(n_seeds) + 0.5) / n_seeds
    x = np.concatenate([xs, xs])
    y = np.concatenate([np.full(n_seeds, y_lo), np.full(n_seeds, y_hi)])
    from_below = np.arange(2 * n_seeds) < n_seeds
    done = 0
    while done < n_steps:
        m = min(256, n_steps - done)
        crossed = np.zeros(2 * n_seeds, dtype=bool)
        for _ in range(m):
            x, y = lifted_map.apply(x, y, check=False)
            crossed |= np.where(from_below, y > y_hi, y < y_lo)
        if crossed.any():
            _logger.debug("Transport across [%g, %g] after at most %d steps", y_lo, y_hi, done + m)
            return False
        done += m
    return True


def _bisect_targets(
    lifted_map: LiftedMap, band: tuple[float, float], targets: FloatArray, settings: RegionSettings
) -> FloatArray:
    """Heights on ``x = 0`` whose rotation estimates match the targets, bisected all at once"""
    edges = rotation_profile(lifted_map, np.array(band), settings.bisection_steps)
    increasing = edges[1] >= edges[0]
    lo = np.full(len(targets), band[0])
    hi = np.full(len(targets), band[1])
    for _ in range(settings.bisection_iterations):
        mid = 0.5 * (lo + hi)
        above = rotation_profile(lifted_map, mid, settings.bisection_steps) > targets
        if not increasing:
            above = ~above
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def _graph_fit(
    lifted_map: LiftedMap, seeds: FloatArray, settings: RegionSettings, prefer: ty.Literal["spread", "low", "high"]
) -> Barrier | None:
    rotation, lo, hi = graph_statistics(lifted_map, seeds, settings.n_cert, settings.graph_nodes)
    filled = np.all(np.isfinite(lo), axis=1)
    spread = np.where(filled, np.max(hi - lo, axis=1), np.inf)
    margins = np.array([irrational_margin(float(rho), settings.proxy_q_max) for rho in rotation])
    passing = np.flatnonzero((spread < settings.graph_tol) & (margins >= settings.irrational_margin))
    if len(passing) == 0:
        return None
    if prefer == "low":
        best = int(passing[np.argmin(seeds[passing, 1])])
    elif prefer == "high":
        best = int(passing[np.argmax(seeds[passing, 1])])
    else:
        best = int(passing[np.argmin(spread[passing])])
    graph = 0.5 * (lo[best] + hi[best])
    return Barrier(
        detector=BarrierDetector.GRAPH_FIT,
        band=(float(lo[best].min()), float(hi[best].max())),
        rotation_estimate=float(rotation[best]),
        irrational_margin=float(margins[best]),
        n_cert=settings.n_cert,
        seed=LiftPoint(x=float(seeds[best, 0]), y=float(seeds[best, 1])),
        graph=graph,
    )


def detect_barrier(
    lifted_map: LiftedMap,
    y_band: tuple[float, float],
    target_rotations: collections.abc.Sequence[float] | None = None,
    settings: RegionSettings | None = None,
) -> Barrier | None:
    """Look for an invariant circle in a band, falling back to a transport certificate

    Noble rotation numbers in the band (or ``target_rotations``) are located on ``x = 0`` by bisection; each
    candidate orbit of ``n_cert`` points is accepted if it fills every x-bin as a graph and its rotation passes
    :func:`is_irrational_proxy`. Without such an orbit the band is certified by :func:`transport_excluded`.

    :return: The strongest certificate, or None if transport crosses the band
    """
    settings = settings or RegionSettings()
    if not y_band[1] > y_band[0]:
        raise InvalidBandError(f"Band [{y_band[0]}, {y_band[1]}] has no height")

    if target_rotations is None:
        edges = rotation_profile(lifted_map, np.linspace(*y_band, 9), settings.bisection_steps)
        target_rotations = noble_numbers(float(edges.min()), float(edges.max()), settings.n_targets)
    if len(target_rotations) > 0:
        targets = np.asarray(target_rotations, dtype=np.float64)
        heights = _bisect_targets(lifted_map, y_band, targets, settings)
        seeds = np.column_stack([np.zeros_like(heights), heights])
        if (barrier := _graph_fit(lifted_map, seeds, settings, "spread")) is not None:
            excluded = transport_excluded(
                lifted_map, barrier.band[0] - 1e-3, barrier.band[1] + 1e-3, settings.transport_seeds, settings.n_cert
            )
            _logger.info("Invariant circle with rotation %.9f in band [%g, %g]", barrier.rotation_estimate, *y_band)
            return barrier.model_copy(update={"transport_excluded": excluded})

    if not transport_excluded(lifted_map, y_band[0], y_band[1], settings.transport_seeds, settings.n_cert):
        _logger.debug("No barrier in band [%g, %g]", *y_band)
        return None

    profile = rotation_profile(lifted_map, np.linspace(*y_band, 17), settings.bisection_steps)
    margins = [irrational_margin(float(rho), settings.proxy_q_max) for rho in profile]
    best = int(np.argmax(margins))
    _logger.info("Transport excluded across band [%g, %g]", *y_band)
    return Barrier(
        detector=BarrierDetector.TRANSPORT_EXCLUSION,
        band=y_band,
        rotation_estimate=float(profile[best]),
        irrational_margin=float(margins[best]),
        n_cert=settings.n_cert,
        transport_excluded=True,
    )


def refine_frontier(
    lifted_map: LiftedMap,
    barrier: Barrier,
    chaotic_side: ty.Literal["below", "above"],
    settings: RegionSettings | None = None,
) -> Barrier:
    """Move a frontier to the invariant circle of its band closest to the chaotic side

    :return: The closest circle found on ``x = 0``, or ``barrier`` if no circle passes the graph test
    """
    settings = settings or RegionSettings()
    lo, hi = barrier.band
    if barrier.seed is not None:
        lo, hi = (lo, barrier.seed.y) if chaotic_side == "below" else (barrier.seed.y, hi)
    heights = np.linspace(lo, hi, settings.refine_samples)
    seeds = np.column_stack([np.zeros_like(heights), heights])
    refined = _graph_fit(lifted_map, seeds, settings, "low" if chaotic_side == "below" else "high")
    if refined is None:
        return barrier
    _logger.debug("Frontier moved to the circle through y=%.6f", refined.band[0 if chaotic_side == "below" else 1])
    return refined.model_copy(update={"transport_excluded": barrier.transport_excluded})


# Regions


def scan_bands(y_range: tuple[float, float], resolution: int) -> list[tuple[float, float]]:
    """Equal bands covering ``y_range``

    :raises InvalidBandError: Raised if the range is empty or ``resolution < 1``
    """
    if not y_range[1] > y_range[0] or resolution < 1:
        raise InvalidBandError(f"Cannot scan {resolution} bands over {y_range}")
    edges = np.linspace(y_range[0], y_range[1], resolution + 1)
    return [(float(edges[i]), float(edges[i + 1])) for i in range(resolution)]


class FrontierKind(str, enum.Enum):
    BARRIER = "Barrier"
    END = "End"


class Frontier(pydantic.BaseModel):
    """Boundary of a region: a barrier, or the end of the scanned y-range"""

    kind: FrontierKind
    level: float
    barrier: Barrier | None = None

    @classmethod
    def end(cls, level: float) -> Frontier:
        return cls(kind=FrontierKind.END, level=level)

    @classmethod
    def of_barrier(cls, barrier: Barrier, facing: ty.Literal["below", "above"]) -> Frontier:
        """Frontier formed by ``barrier`` for a region lying on the ``facing`` side of it"""
        level = barrier.band[0] if facing == "below" else barrier.band[1]
        return cls(kind=FrontierKind.BARRIER, level=level, barrier=barrier)

    @property
    def is_end(self) -> bool:
        return self.kind == FrontierKind.END

    def curve(self, x: FloatArray) -> FloatArray:
        if self.barrier is None:
            return np.full_like(np.asarray(x, dtype=np.float64), self.level)
        return self.barrier.curve(x, self.level)


class Region(pydantic.BaseModel):
    """Region between two frontiers with its sampled rotation interval and periodic orbit inventory"""

    lower: Frontier
    upper: Frontier
    rotation_interval: RotationInterval
    orbits: list[PeriodicOrbit] = pydantic.Field(default_factory=list)
    orbit_inventory: list[str] = pydantic.Field(default_factory=list)
    essential_orbit_ids: list[str] = pydantic.Field(default_factory=list)

    @property
    def y_hull(self) -> tuple[float, float]:
        xs = np.linspace(0.0, 1.0, 257)
        return float(self.lower.curve(xs).min()), float(self.upper.curve(xs).max())

    def contains(self, points: FloatArray) -> np.ndarray:
        """Whether points lie strictly between the frontiers"""
        points = np.atleast_2d(points)
        return (points[:, 1] > self.lower.curve(points[:, 0])) & (points[:, 1] < self.upper.curve(points[:, 0]))

    def frontier(self, which: ty.Literal["upper", "lower"]) -> Frontier:
        return self.upper if which == "upper" else self.lower

    def region_seeds(self, nx: int, ny: int) -> FloatArray:
        lo, hi = self.y_hull
        seeds = grid_points(Window(x0=0.0, x1=1.0, y0=lo, y1=hi), nx, ny + 1)[nx:]
        return seeds[self.contains(seeds)]


class Decomposition(pydantic.BaseModel):
    bands: list[tuple[float, float]]
    barriers: list[Barrier | None]
    regions: list[Region]


def _region_inventory(
    lifted_map: LiftedMap, region: Region, settings: RegionSettings
) -> tuple[list[PeriodicOrbit], list[str]]:
    lo, hi = region.y_hull
    window = Window(x0=0.0, x1=1.0, y0=lo, y1=hi)
    interval = region.rotation_interval
    orbits: list[PeriodicOrbit] = []
    essential: list[str] = []
    for p, q in rationals_between(interval.lo, interval.hi, settings.inventory_q_max):
        for orbit in find_all_pq(lifted_map, p, q, window, settings.inventory_grid, settings.inventory_grid):
            if not np.all(region.contains(orbit.as_array())):
                continue
            orbits.append(orbit)
            if settings.classify_inventory and orbit.stability == Stability.HYPERBOLIC:
                verdict = classify_essentiality(
                    lifted_map, orbit, settings.essentiality_arclength, settings.essentiality_resolution
                )
                if verdict.is_essential:
                    essential.append(orbit.orbit_id)
    return orbits, essential


def build_region(lifted_map: LiftedMap, lower: Frontier, upper: Frontier, settings: RegionSettings) -> Region | None:
    """Estimate the rotation interval and the orbit inventory of the region between two frontiers"""
    region = Region(lower=lower, upper=upper, rotation_interval=RotationInterval(lo=0.0, hi=0.0))
    seeds = region.region_seeds(*settings.rotation_grid)
    if len(seeds) == 0:
        return None
    interval = rotation_interval_of_set(lifted_map, seeds, settings.rotation_steps, widen=False)
    region = region.model_copy(update={"rotation_interval": interval})
    orbits, essential = _region_inventory(lifted_map, region, settings)
    _logger.info(
        "Region between y=%.4f and y=%.4f: rotation [%.5f, %.5f], %d orbits, %d essential",
        lower.level,
        upper.level,
        interval.lo,
        interval.hi,
        len(orbits),
        len(essential),
    )
    return region.model_copy(
        update={
            "orbits": orbits,
            "orbit_inventory": [orbit.orbit_id for orbit in orbits],
            "essential_orbit_ids": essential,
        }
    )


def decompose(
    lifted_map: LiftedMap,
    y_range: tuple[float, float],
    barrier_scan_resolution: int,
    settings: RegionSettings | None = None,
    barriers: collections.abc.Sequence[Barrier | None] | None = None,
) -> Decomposition:
    """Split ``y_range`` into bands, detect barriers and turn the maximal barrier-free runs into regions

    :param barriers: Result of :func:`detect_barrier` for each of :func:`scan_bands`, detected here if not given
    """
    settings = settings or RegionSettings()
    bands = scan_bands(y_range, barrier_scan_resolution)
    if barriers is None:
        barriers = [detect_barrier(lifted_map, band, settings=settings) for band in bands]
    elif len(barriers) != len(bands):
        raise ValueError(f"Expected {len(bands)} band results, got {len(barriers)}")

    regions: list[Region] = []
    index = 0
    while index < len(bands):
        if barriers[index] is not None:
            index += 1
            continue
        start = index
        while index < len(bands) and barriers[index] is None:
            index += 1
        below = barriers[start - 1] if start > 0 else None
        above = barriers[index] if index < len(bands) else None
        lower = (
            Frontier.of_barrier(refine_frontier(lifted_map, below, "above", settings), "above")
            if below is not None
            else Frontier.end(y_range[0])
        )
        upper = (
            Frontier.of_barrier(refine_frontier(lifted_map, above, "below", settings), "below")
            if above is not None
            else Frontier.end(y_range[1])
        )
        if lower.is_end or upper.is_end:
            _logger.warning("Region starting in band [%g, %g] touches the end of the scanned range", *bands[start])
        if (region := build_region(lifted_map, lower, upper, settings)) is not None:
            regions.append(region)

    _logger.info(
        "%d of %d bands carry barriers, %d regions",
        sum(barrier is not None for barrier in barriers),
        len(bands),
        len(regions),
    )
    return Decomposition(bands=bands, barriers=list(barriers), regions=regions)


# Transport inside regions


class ConnectingOrbitEvidence(pydantic.BaseModel):
    """Closest approaches of one orbit to the two frontiers, forward in time to ``target`` and backward to ``source``

    ``n_forward``/``n_backward`` are the step indices at which the distances are attained.
    """

    start: LiftPoint
    direction: ty.Literal["up", "down"]
    forward_min_dist_to_upper: float
    backward_min_dist_to_lower: float
    n_forward: int
    n_backward: int
    n_steps: int
    delta: float
    found: bool
    frontier_is_end: bool = False


def _min_distance_run(
    lifted_map: LiftedMap, starts: FloatArray, frontier: Frontier, n_steps: int, direction: int, delta: float
) -> tuple[FloatArray, np.ndarray]:
    """Smallest vertical distance to a frontier along each orbit, stopping once every orbit came within ``delta``"""
    x, y = starts[:, 0].copy(), starts[:, 1].copy()
    best = np.abs(y - frontier.curve(x))
    index = np.zeros(len(x), dtype=np.int64)
    step = 0
    while step < n_steps and not np.all(best < delta):
        for _ in range(min(CHUNK, n_steps - step)):
            step += 1
            x, y = lifted_map.step(x, y, direction, check=False)
            distance = np.abs(y - frontier.curve(x))
            closer = distance < best
            best = np.where(closer, distance, best)
            index = np.where(closer, step, index)
    return best, index


def _connecting_seeds(lifted_map: LiftedMap, region: Region, n_seeds: int) -> FloatArray:
    """Points on short unstable branches of the inventory saddles nearest to either frontier"""
    saddles = [orbit for orbit in region.orbits if orbit.stability == Stability.HYPERBOLIC]
    if not saddles:
        seeds = region.region_seeds(max(1, int(math.sqrt(n_seeds))), max(1, int(math.sqrt(n_seeds))))
        return seeds[:n_seeds]

    nearest_upper = max(saddles, key=lambda orbit: float(orbit.as_array()[:, 1].max()))
    nearest_lower = min(saddles, key=lambda orbit: float(orbit.as_array()[:, 1].min()))
    points = []
    for orbit in dict.fromkeys([nearest_upper.orbit_id, nearest_lower.orbit_id]):
        saddle = nearest_upper if orbit == nearest_upper.orbit_id else nearest_lower
        for sign in BranchSign:
            branch = grow_branch(lifted_map, branch_seed(lifted_map, saddle, BranchKind.UNSTABLE, sign), 1.0)
            points.append(branch.polyline[1:])
    cloud = np.vstack(points)
    return cloud[np.linspace(0, len(cloud) - 1, min(n_seeds, len(cloud))).astype(np.int64)]


def connecting_orbit_search(
    lifted_map: LiftedMap,
    region: Region,
    n_seeds: int,
    n_steps: int,
    delta: float,
    direction: ty.Literal["up", "down"] = "up",
    candidates: int = 5,
    cap: int = DEFAULT_ORBIT_CAP,
) -> ConnectingOrbitEvidence:
    """Search for an orbit travelling from one frontier of ``region`` to the other

    All seeds are screened together; the best ``candidates`` by (forward, backward) distance are replayed one by one
    so that the reported distances and step indices are reproduced by :func:`replay_connecting_orbit`.
    """
    check_orbit_length(n_steps, cap)
    target = region.upper if direction == "up" else region.lower
    source = region.lower if direction == "up" else region.upper
    frontier_is_end = target.is_end or source.is_end
    if frontier_is_end:
        _logger.warning("Region touches an end of the scanned range, distances are measured to the scan boundary")

    seeds = _connecting_seeds(lifted_map, region, n_seeds)
    forward, _ = _min_distance_run(lifted_map, seeds, target, n_steps, 1, delta)
    backward, _ = _min_distance_run(lifted_map, seeds, source, n_steps, -1, delta)
    order = np.lexsort((backward, forward))
    success = np.flatnonzero((forward < delta) & (backward < delta))
    succeeded = set(success.tolist())
    ranked = list(success[np.lexsort((backward[success], forward[success]))]) + [i for i in order if i not in succeeded]

    best: ConnectingOrbitEvidence | None = None
    for candidate in ranked[:candidates]:
        evidence = replay_connecting_orbit(
            lifted_map, region, LiftPoint.from_array(seeds[candidate]), n_steps, delta, direction, cap=cap
        )
        if best is None or (evidence.found, -evidence.forward_min_dist_to_upper) > (
            best.found,
            -best.forward_min_dist_to_upper,
        ):
            best = evidence
        if evidence.found:
            break
    if best is None:
        raise EmptySeedSetError("No seeds for the connecting orbit search inside the region")
    best = best.model_copy(update={"frontier_is_end": frontier_is_end})
    _logger.info(
        "Connecting orbit search %s: forward %.3e, backward %.3e (%s)",
        direction,
        best.forward_min_dist_to_upper,
        best.backward_min_dist_to_lower,
        "found" if best.found else "not found",
    )
    return best


def replay_connecting_orbit(
    lifted_map: LiftedMap,
    region: Region,
    start: LiftPoint,
    n_steps: int,
    delta: float,
    direction: ty.Literal["up", "down"] = "up",
    cap: int = DEFAULT_ORBIT_CAP,
) -> ConnectingOrbitEvidence:
    """Closest approaches of the single orbit through ``start``"""
    check_orbit_length(n_steps, cap)
    target = region.upper if direction == "up" else region.lower
    source = region.lower if direction == "up" else region.upper
    starts = start.as_array()[np.newaxis, :]
    forward, n_forward = _min_distance_run(lifted_map, starts, target, n_steps, 1, delta)
    backward, n_backward = _min_distance_run(lifted_map, starts, source, n_steps, -1, delta)
    return ConnectingOrbitEvidence(
        start=start,
        direction=direction,
        forward_min_dist_to_upper=float(forward[0]),
        backward_min_dist_to_lower=float(backward[0]),
        n_forward=int(n_forward[0]),
        n_backward=int(n_backward[0]),
        n_steps=n_steps,
        delta=delta,
        found=bool(forward[0] < delta and backward[0] < delta),
        frontier_is_end=target.is_end or source.is_end,
    )


class EscapeStats(pydantic.BaseModel):
    """Exit times from the band ``W`` next to a frontier

    Trapped seeds are split into essential ones, whose orbits fill every x-bin as a graph (an invariant circle off
    the frontier), and inessential ones such as island orbits.
    """

    frontier: ty.Literal["upper", "lower"]
    band_width: float
    n_seeds: int
    n_cap: int
    escaped: int
    escaped_fraction: float
    trapped_essential: int
    trapped_inessential: int
    barrier_crossings: int
    median_escape_time: float | None
    histogram_counts: list[int]
    histogram_edges: list[float]


def _band_bounds(
    frontier: Frontier, which: ty.Literal["upper", "lower"], width: float, x: FloatArray
) -> tuple[FloatArray, FloatArray]:
    curve = frontier.curve(x)
    return (curve - width, curve) if which == "upper" else (curve, curve + width)


def escape_time_stats(
    lifted_map: LiftedMap,
    region: Region,
    frontier: ty.Literal["upper", "lower"],
    band_width: float,
    n_seeds: int,
    n_cap: int,
    seed: int = 0,
    graph_nodes: int = 64,
    graph_tol: float = 5e-3,
    cap: int = DEFAULT_ORBIT_CAP,
) -> EscapeStats:
    """Time for seeds in the band ``W`` of width ``band_width`` on the region side of a frontier to leave ``W``

    :raises InvalidBandError: Raised if ``band_width`` is not positive
    :raises OrbitCapError: Raised if ``n_cap`` exceeds ``cap``
    """
    if not band_width > 0.0:
        raise InvalidBandError(f"Band width must be positive, got {band_width}")
    check_orbit_length(n_cap, cap)
    rng = np.random.default_rng(seed)
    boundary = region.frontier(frontier)
    x = rng.uniform(0.0, 1.0, n_seeds)
    offset = rng.uniform(0.0, band_width, n_seeds)
    offset = np.where(offset == 0.0, 0.5 * band_width, offset)
    y = boundary.curve(x) - offset if frontier == "upper" else boundary.curve(x) + offset
    starts = np.column_stack([x, y])

    exit_time = np.full(n_seeds, -1, dtype=np.int64)
    crossings = np.zeros(n_seeds, dtype=bool)
    step = 0
    while step < n_cap and np.any(exit_time < 0):
        for _ in range(min(CHUNK, n_cap - step)):
            step += 1
            x, y = lifted_map.apply(x, y, check=False)
            lo, hi = _band_bounds(boundary, frontier, band_width, x)
            outside = (y <= lo) | (y >= hi)
            beyond = y > hi if frontier == "upper" else y < lo
            crossings |= (exit_time < 0) & beyond
            exit_time = np.where((exit_time < 0) & outside, step, exit_time)

    trapped = np.flatnonzero(exit_time < 0)
    trapped_essential = 0
    if len(trapped):
        _, lo_bins, hi_bins = graph_statistics(lifted_map, starts[trapped], min(n_cap, 100_000), graph_nodes)
        graph_like = np.all(np.isfinite(lo_bins), axis=1) & (np.max(hi_bins - lo_bins, axis=1) < graph_tol)
        trapped_essential = int(np.sum(graph_like))
    if trapped_essential:
        _logger.warning("%d seeds stay on invariant circles inside the frontier band", trapped_essential)

    times = exit_time[exit_time >= 0]
    edges = np.unique(np.geomspace(1.0, max(n_cap, 2), 21).round())
    counts, _ = np.histogram(times, bins=edges)
    escaped = len(times)
    _logger.info("%d of %d seeds left the %s frontier band within %d steps", escaped, n_seeds, frontier, n_cap)
    return EscapeStats(
        frontier=frontier,
        band_width=band_width,
        n_seeds=n_seeds,
        n_cap=n_cap,
        escaped=escaped,
        escaped_fraction=escaped / n_seeds if n_seeds else 0.0,
        trapped_essential=trapped_essential,
        trapped_inessential=len(trapped) - trapped_essential,
        barrier_crossings=int(np.sum(crossings)),
        median_escape_time=float(np.median(times)) if escaped else None,
        histogram_counts=[int(count) for count in counts],
        histogram_edges=[float(edge) for edge in edges],
    )


def region_boundary_orbits(
    lifted_map: LiftedMap,
    region: Region,
    frontier: ty.Literal["upper", "lower"],
    band_width: float,
    q_max: int,
    grid: int = 32,
    rotation_steps: int = 10_000,
) -> list[PeriodicOrbit]:
    """Periodic orbits with ``q <= q_max`` lying entirely in the band ``W`` next to a frontier

    :raises InvalidBandError: Raised if ``band_width`` is not positive
    """
    if not band_width > 0.0:
        raise InvalidBandError(f"Band width must be positive, got {band_width}")
    boundary = region.frontier(frontier)
    xs = np.linspace(0.0, 1.0, 257)
    lo, hi = _band_bounds(boundary, frontier, band_width, xs)
    window = Window(x0=0.0, x1=1.0, y0=float(lo.min()), y1=float(hi.max()))

    def inside(points: FloatArray) -> np.ndarray:
        band_lo, band_hi = _band_bounds(boundary, frontier, band_width, points[:, 0])
        return (points[:, 1] > band_lo) & (points[:, 1] < band_hi)

    seeds = grid_points(window, 16, 16)
    seeds = seeds[inside(seeds)]
    if len(seeds) == 0:
        return []
    interval = rotation_interval_of_set(lifted_map, seeds, rotation_steps, widen=False)
    orbits = []
    for p, q in rationals_between(interval.lo, interval.hi, q_max):
        found = find_all_pq(lifted_map, p, q, window, grid, grid)
        orbits += [orbit for orbit in found if np.all(inside(orbit.as_array()))]
    _logger.info(
        "%d orbits with q <= %d in the %s frontier band, rotation [%.6f, %.6f]",
        len(orbits),
        q_max,
        frontier,
        interval.lo,
        interval.hi,
    )
    return orbits


# Coverage


def finite_time_lyapunov(lifted_map: LiftedMap, points: FloatArray, n: int) -> FloatArray:
    """Growth rate of a tangent vector along ``n`` steps from each point"""
    points = np.atleast_2d(points)
    x, y = points[:, 0].copy(), points[:, 1].copy()
    v = np.column_stack([np.ones(len(x)), np.zeros(len(x))])
    total = np.zeros(len(x))
    for _ in range(n):
        v = np.einsum("nij,nj->ni", lifted_map.jacobian(x, y), v)
        norm = np.hypot(v[:, 0], v[:, 1])
        total += np.log(norm)
        v /= norm[:, np.newaxis]
        x, y = lifted_map.apply(x, y)
    return total / n


class CellClass(enum.IntEnum):
    UNRESOLVED = 0
    H_NEAR = 1
    E_NEAR = 2
    BOTH = 3


class CoverageReport(pydantic.BaseModel):
    """Grid classification by proximity to stable manifold clouds (H) and to regular orbits (E)

    ``classes`` holds :class:`CellClass` values, rows along y. Interface cells are unresolved cells with both an
    H-near and an E-near neighbour.
    """

    window: Window
    nx: int
    ny: int
    delta: float
    saddle_ids: list[str]
    h_near_fraction: float
    e_near_fraction: float
    unresolved_fraction: float
    interface_fraction: float
    classes: Array


def _coverage_saddles(
    lifted_map: LiftedMap, window: Window, budget: int, settings: CoverageSettings
) -> list[PeriodicOrbit]:
    seeds = grid_points(window, 8, 8)
    interval = rotation_interval_of_set(lifted_map, seeds, settings.rotation_steps, widen=False)
    saddles: list[PeriodicOrbit] = []
    rationals = rationals_between(interval.lo, interval.hi, settings.saddle_q_max)
    for p, q in sorted(rationals, key=lambda pq: (pq[1], abs(pq[0]))):
        for orbit in find_all_pq(lifted_map, p, q, window, settings.saddle_grid, settings.saddle_grid):
            if orbit.stability == Stability.HYPERBOLIC and len(saddles) < budget:
                saddles.append(orbit)
    return saddles


def coverage_report(
    lifted_map: LiftedMap,
    window: Window,
    nx: int,
    ny: int,
    delta: float,
    saddle_budget: int,
    settings: CoverageSettings | None = None,
    growth: GrowthSettings | None = None,
) -> CoverageReport:
    """Fraction of grid cells near the stable manifolds of up to ``saddle_budget`` saddles and near regular orbits"""
    settings = settings or CoverageSettings()
    growth = growth or GrowthSettings()
    half_cell = np.array([0.5 * (window.x1 - window.x0) / nx, 0.5 * (window.y1 - window.y0) / ny])
    centres = grid_points(window, nx, ny) + half_cell
    y_range = (window.y0 - 1.0, window.y1 + 1.0)

    saddles = _coverage_saddles(lifted_map, window, saddle_budget, settings)
    h_near = np.zeros(len(centres), dtype=bool)
    for saddle in saddles:
        branches = grow_orbit_branches(
            lifted_map,
            saddle,
            settings.coverage_arclength,
            kinds=(BranchKind.STABLE,),
            eps=growth.eps,
            max_gap=growth.max_gap,
            max_turn=growth.max_turn,
            point_cap=growth.point_cap,
        )
        cloud = np.vstack([branch.polyline for branch in branches])
        cloud = cloud[(cloud[:, 1] > y_range[0]) & (cloud[:, 1] < y_range[1])]
        if len(cloud):
            distances, _ = AnnulusTree(cloud, y_range).query(centres)
            h_near |= distances < delta

    ftle = finite_time_lyapunov(lifted_map, centres, settings.ftle_steps)
    regular = centres[ftle < settings.ftle_threshold]
    e_near = np.zeros(len(centres), dtype=bool)
    if len(regular):
        orbit_points = [regular]
        x, y = regular[:, 0].copy(), regular[:, 1].copy()
        for _ in range(settings.regular_orbit_steps):
            x, y = lifted_map.apply(x, y)
            orbit_points.append(np.column_stack([x, y]))
        cloud = np.vstack(orbit_points)
        cloud = cloud[(cloud[:, 1] > y_range[0]) & (cloud[:, 1] < y_range[1])]
        distances, _ = AnnulusTree(cloud, y_range).query(centres)
        e_near = distances < delta

    classes = (h_near * CellClass.H_NEAR + e_near * CellClass.E_NEAR).reshape(ny, nx)
    unresolved = classes == CellClass.UNRESOLVED
    near_h = ndimage.binary_dilation(classes == CellClass.H_NEAR)
    near_e = ndimage.binary_dilation(classes == CellClass.E_NEAR)
    interface = unresolved & near_h & near_e
    report = CoverageReport(
        window=window,
        nx=nx,
        ny=ny,
        delta=delta,
        saddle_ids=[saddle.orbit_id for saddle in saddles],
        h_near_fraction=float(h_near.mean()),
        e_near_fraction=float(e_near.mean()),
        unresolved_fraction=float(unresolved.mean()),
        interface_fraction=float(interface.mean()),
        classes=classes.astype(np.float64),
    )
    _logger.info(
        "Coverage with %d saddles: H-near %.3f, E-near %.3f, unresolved %.3f",
        len(saddles),
        report.h_near_fraction,
        report.e_near_fraction,
        report.unresolved_fraction,
    )
    return report
