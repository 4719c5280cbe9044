from __future__ import annotations

import collections.abc
import dataclasses
import typing as ty

import numpy as np

from . import TWO_PI, FamilyId, FloatArray, require_float, stack_jacobian


@dataclasses.dataclass(frozen=True)
class StandardFormula:
    """Chirikov standard map, ``y' = y - (k/2pi) sin(2pi x)``, ``x' = x + y'``"""

    k: float
    family_id: ty.ClassVar[FamilyId] = FamilyId.STANDARD

    def forward(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        y_new = y - self.k / TWO_PI * np.sin(TWO_PI * r)
        return r + y_new, y_new

    def inverse(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        x_old = r - y
        return x_old, y + self.k / TWO_PI * np.sin(TWO_PI * x_old)

    def jacobian(self, r: FloatArray, y: FloatArray) -> FloatArray:
        kc = self.k * np.cos(TWO_PI * r)
        one = np.ones_like(kc)
        return stack_jacobian(1.0 - kc, one, -kc, one)


def make_formula(params: collections.abc.Mapping[str, float | str]) -> StandardFormula:
    return StandardFormula(k=require_float(params, "k", "standard"))
