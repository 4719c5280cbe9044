"""Phase portraits and diagnostic figures written as deterministic SVG, point data as CSV"""

from __future__ import annotations

import collections.abc
import logging
import math
import pathlib
import typing as ty

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .arrays import FloatArray, wrap_unit
from .dynamics import DEFAULT_ORBIT_CAP, LiftedMap, check_orbit_length
from .periodic import PeriodicOrbit, Window, grid_points
from .regions import Barrier, CoverageReport, Region

__all__ = ["phase_portrait", "render_portrait", "render_mask", "render_coverage", "write_csv"]

_logger = logging.getLogger(__name__)

SVG_SALT = "instability-atlas"


def phase_portrait(
    lifted_map: LiftedMap, window: Window, n_seeds: int, n_steps: int, cap: int = DEFAULT_ORBIT_CAP
) -> FloatArray:
    """Orbit points of a seed lattice, reduced mod 1 and clipped to the window

    :param n_seeds: Number of seeds, laid out on a near-square lattice in the window
    :raises OrbitCapError: Raised if ``n_steps`` exceeds ``cap``
    :return: Array of shape ``(m, 2)`` ordered by step, then seed
    """
    if n_seeds < 1:
        raise ValueError(f"Need at least one seed, got {n_seeds}")
    check_orbit_length(n_steps, cap)
    nx = max(1, math.isqrt(n_seeds))
    ny = max(1, math.ceil(n_seeds / nx))
    seeds = grid_points(window, nx, ny)[:n_seeds]
    x, y = seeds[:, 0].copy(), seeds[:, 1].copy()
    points = [seeds]
    for _ in range(n_steps):
        x, y = lifted_map.apply(x, y)
        points.append(np.column_stack([x, y]))
    cloud = np.vstack(points)
    cloud[:, 0] = wrap_unit(cloud[:, 0])
    cloud = cloud[window.contains(cloud)]
    _logger.info("Phase portrait with %d seeds and %d points", n_seeds, len(cloud))
    return cloud


def write_csv(path: pathlib.Path, header: collections.abc.Sequence[str], rows: FloatArray) -> None:
    """Write rows with shortest round-trip float formatting"""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(repr(float(value)) for value in row) for row in np.atleast_2d(rows)]
    path.write_text("\n".join(lines) + "\n")
    _logger.debug("Wrote %d rows to '%s'", len(lines) - 1, path)


def _save(figure: Figure, path: pathlib.Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(figure)
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        figure.savefig(path, format="svg", metadata={"Date": None})
    _logger.info("Wrote figure '%s'", path)


def _plot_wrapped(axes: ty.Any, polyline: FloatArray, **style: ty.Any) -> None:
    """Plot a lift polyline reduced mod 1, split where it wraps around"""
    reduced = np.column_stack([wrap_unit(polyline[:, 0]), polyline[:, 1]])
    breaks = np.flatnonzero(np.abs(np.diff(reduced[:, 0])) > 0.5) + 1
    for piece in np.split(reduced, breaks):
        axes.plot(piece[:, 0], piece[:, 1], **style)


def _barrier_curve(barrier: Barrier) -> tuple[FloatArray, FloatArray]:
    xs = np.linspace(0.0, 1.0, 513)
    return xs, barrier.curve(xs, 0.5 * (barrier.band[0] + barrier.band[1]))


def render_portrait(
    points: FloatArray,
    path: pathlib.Path,
    window: Window,
    *,
    barriers: collections.abc.Iterable[Barrier] = (),
    regions: collections.abc.Iterable[Region] = (),
    orbits: collections.abc.Iterable[PeriodicOrbit] = (),
    branches: collections.abc.Iterable[FloatArray] = (),
    title: str | None = None,
) -> None:
    """Scatter plot of orbit points with optional overlays"""
    figure = Figure(figsize=(7, 7))
    axes = figure.add_subplot()
    axes.plot(points[:, 0], points[:, 1], ",", color="black", rasterized=False)
    for region in regions:
        xs = np.linspace(0.0, 1.0, 513)
        axes.fill_between(xs, region.lower.curve(xs), region.upper.curve(xs), color="tab:orange", alpha=0.15, lw=0)
    for barrier in barriers:
        axes.plot(*_barrier_curve(barrier), color="tab:blue", lw=1.0)
    for branch in branches:
        _plot_wrapped(axes, branch, color="tab:red", lw=0.5)
    for orbit in orbits:
        marker = "x" if orbit.is_hyperbolic else "o"
        orbit_points = orbit.as_array()
        axes.plot(wrap_unit(orbit_points[:, 0]), orbit_points[:, 1], marker, color="tab:green", ms=4)
    axes.set_xlim(window.x0, window.x1)
    axes.set_ylim(window.y0, window.y1)
    axes.set_xlabel("x")
    axes.set_ylabel("y")
    if title:
        axes.set_title(title)
    _save(figure, path)


def render_mask(
    mask: FloatArray,
    extent: tuple[float, float, float, float],
    path: pathlib.Path,
    curves: collections.abc.Iterable[FloatArray] = (),
) -> None:
    """Occupancy or classification grid, rows along y, with lift curves drawn on top"""
    figure = Figure(figsize=(7, 4))
    axes = figure.add_subplot()
    axes.imshow(mask, origin="lower", extent=extent, aspect="auto", interpolation="nearest", cmap="viridis")
    for curve in curves:
        _plot_wrapped(axes, curve, color="tab:red", lw=1.0)
    axes.set_xlim(extent[0], extent[1])
    axes.set_ylim(extent[2], extent[3])
    axes.set_xlabel("x")
    axes.set_ylabel("y")
    _save(figure, path)


def render_coverage(report: CoverageReport, path: pathlib.Path) -> None:
    window = report.window
    render_mask(report.classes, (window.x0, window.x1, window.y0, window.y1), path)
