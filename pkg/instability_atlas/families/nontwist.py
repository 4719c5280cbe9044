from __future__ import annotations

import collections.abc
import dataclasses
import typing as ty

import numpy as np

from . import TWO_PI, FamilyId, FloatArray, require_float, stack_jacobian


@dataclasses.dataclass(frozen=True)
class NontwistFormula:
    """Standard non-twist map, ``y' = y - b sin(2pi x)``, ``x' = x + a (1 - y'^2)``

    The twist ``dx'/dy'`` vanishes on ``y' = 0``, which is where the shearless curve sits for small ``b``.
    """

    a: float
    b: float
    family_id: ty.ClassVar[FamilyId] = FamilyId.NONTWIST

    def forward(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        y_new = y - self.b * np.sin(TWO_PI * r)
        return r + self.a * (1.0 - y_new * y_new), y_new

    def inverse(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        x_old = r - self.a * (1.0 - y * y)
        return x_old, y + self.b * np.sin(TWO_PI * x_old)

    def jacobian(self, r: FloatArray, y: FloatArray) -> FloatArray:
        y_new = y - self.b * np.sin(TWO_PI * r)
        kick = -TWO_PI * self.b * np.cos(TWO_PI * r)
        shear = -2.0 * self.a * y_new
        return stack_jacobian(1.0 + shear * kick, shear, kick, np.ones_like(kick))


def make_formula(params: collections.abc.Mapping[str, float | str]) -> NontwistFormula:
    return NontwistFormula(a=require_float(params, "a", "nontwist"), b=require_float(params, "b", "nontwist"))
