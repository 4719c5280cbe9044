"""Pydantic field type for numpy arrays and small annulus-geometry helpers shared by the detectors"""

from __future__ import annotations

import typing as ty

import numpy as np
import numpy.typing as npt
import pydantic

FloatArray = npt.NDArray[np.float64]


def _to_array(value: ty.Any) -> FloatArray:
    array = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise ValueError("array contains non-finite values")
    return array


def _to_list(array: FloatArray) -> list[ty.Any]:
    return ty.cast(list[ty.Any], np.asarray(array).tolist())


Array = ty.Annotated[
    FloatArray,
    pydantic.PlainValidator(_to_array),
    pydantic.PlainSerializer(_to_list, return_type=list),
    pydantic.WithJsonSchema({"type": "array", "items": {}}),
]


def wrap_unit(x: FloatArray) -> FloatArray:
    """Reduce lift coordinates to ``[0, 1)``"""
    reduced = x - np.floor(x)
    # x - floor(x) rounds to 1.0 for tiny negative x
    return ty.cast(FloatArray, np.where(reduced >= 1.0, 0.0, reduced))


def annulus_delta(a: FloatArray, b: FloatArray) -> FloatArray:
    """Difference ``a - b`` of points in the annulus, with the x component taken in ``[-1/2, 1/2)``"""
    delta = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    delta[..., 0] -= np.floor(delta[..., 0] + 0.5)
    return delta


def annulus_distance(a: FloatArray, b: FloatArray) -> FloatArray:
    """Euclidean distance in the annulus, x measured mod 1"""
    return ty.cast(FloatArray, np.hypot(*np.moveaxis(annulus_delta(a, b), -1, 0)))


def polyline_arclength(points: FloatArray) -> FloatArray:
    """Cumulative arclength of a polyline, starting at 0"""
    if len(points) == 0:
        return np.zeros(0)
    gaps = np.hypot(*np.diff(points, axis=0).T) if len(points) > 1 else np.zeros(0)
    return np.concatenate([[0.0], np.cumsum(gaps)])
