from __future__ import annotations

import collections.abc
import enum
import typing as ty

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]

TWO_PI = 2.0 * np.pi


class FamilyId(str, enum.Enum):
    STANDARD = "StandardMap"
    NONTWIST = "StandardNontwistMap"
    USER = "UserDefined"


class LiftFormula(ty.Protocol):
    """Closed-form lift of an annulus map.

    All three methods receive the fractional part ``r`` of the lift coordinate (``0 <= r < 1``) and the height ``y``.
    The caller adds the integer part back, which makes every family equivariant under the deck translation by
    construction.
    """

    family_id: FamilyId

    def forward(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Image ``(x', y')`` of the points ``(r, y)``"""
        ...

    def inverse(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Preimage ``(x, y)`` of the points ``(r, y)``"""
        ...

    def jacobian(self, r: FloatArray, y: FloatArray) -> FloatArray:
        """Derivative of :meth:`forward`, shape ``(..., 2, 2)`` with rows ``(x', y')``"""
        ...


class FormulaFactory(ty.Protocol):
    def __call__(self, params: collections.abc.Mapping[str, float | str]) -> LiftFormula:
        """
        Interface of the family constructors

        :param params: Named parameters of the family, as given in the configuration
        """
        ...


def stack_jacobian(a: FloatArray, b: FloatArray, c: FloatArray, d: FloatArray) -> FloatArray:
    """Stack the entries of ``[[a, b], [c, d]]`` into an array of shape ``(..., 2, 2)``"""
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], axis=-1), np.stack([c, d], axis=-1)], axis=-2)


def require_float(params: collections.abc.Mapping[str, float | str], name: str, family: str) -> float:
    """Get a numeric family parameter

    :raises KeyError: Raised if the parameter is missing
    :raises ValueError: Raised if the parameter is not a finite number
    """
    try:
        value = params[name]
    except KeyError:
        raise KeyError(f"Family '{family}' requires the parameter '{name}'") from None
    if isinstance(value, str):
        raise ValueError(f"Parameter '{name}' of family '{family}' must be a number, got '{value}'")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"Parameter '{name}' of family '{family}' must be finite")
    return value
