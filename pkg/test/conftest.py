from __future__ import annotations

import collections.abc
import pathlib

import pytest

from instability_atlas.dynamics import LiftedMap, nontwist_map, standard_map
from instability_atlas.periodic import PeriodicOrbit, Window, find_all_pq
from instability_atlas.store import RunStore


@pytest.fixture
def integrable() -> LiftedMap:
    return standard_map(0.0)


@pytest.fixture
def standard_k1() -> LiftedMap:
    return standard_map(1.0)


@pytest.fixture
def standard_k15() -> LiftedMap:
    return standard_map(1.5)


@pytest.fixture
def nontwist() -> LiftedMap:
    return nontwist_map(0.5, 0.05)


@pytest.fixture
def fixed_points_k1(standard_k1: LiftedMap) -> list[PeriodicOrbit]:
    """Elliptic (0, 0) and hyperbolic (1/2, 0) fixed points of the k=1 standard map"""
    return find_all_pq(standard_k1, 0, 1, Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5), 20, 20)


@pytest.fixture
def saddle_k1(fixed_points_k1: list[PeriodicOrbit]) -> PeriodicOrbit:
    return next(orbit for orbit in fixed_points_k1 if orbit.is_hyperbolic)


@pytest.fixture
def saddle_k15(standard_k15: LiftedMap) -> PeriodicOrbit:
    orbits = find_all_pq(standard_k15, 0, 1, Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5), 20, 20)
    return next(orbit for orbit in orbits if orbit.is_hyperbolic)


@pytest.fixture
def store(tmp_path: pathlib.Path) -> collections.abc.Iterator[RunStore]:
    with RunStore(tmp_path / "data") as run_store:
        yield run_store
