from __future__ import annotations

import os
import pathlib
import tomllib
import typing as ty

import pydantic

from .dynamics import DEFAULT_ORBIT_CAP, FAMILY_FACTORIES, LiftedMap
from .manifolds import DEFAULT_EPS, DEFAULT_MAX_GAP, DEFAULT_MAX_TURN, DEFAULT_POINT_CAP
from .periodic import DEDUP_TOL, DEGENERACY_BAND, MAX_NEWTON_ITERS, NEWTON_TOL
from .regions import CoverageSettings, RegionSettings
from .store import default_data_dir
from .topology import GrowthSettings

__all__ = ["Config", "MapConfig", "Tolerances", "Caps", "load_config"]


class MapConfig(pydantic.BaseModel):
    """Map family and its parameters"""

    family: str = "standard"
    params: dict[str, float | str] = pydantic.Field(default_factory=lambda: {"k": 0.9})

    @pydantic.field_validator("family")
    @classmethod
    def known_family(cls, family: str) -> str:
        if family not in FAMILY_FACTORIES:
            raise ValueError(f"Unknown map family '{family}', expected one of {sorted(FAMILY_FACTORIES)}")
        return family

    def build(self) -> LiftedMap:
        return LiftedMap(self.family, self.params)


class Tolerances(pydantic.BaseModel):
    newton_tol: pydantic.PositiveFloat = NEWTON_TOL
    dedup_tol: pydantic.PositiveFloat = DEDUP_TOL
    degeneracy_band: pydantic.PositiveFloat = DEGENERACY_BAND
    eps: pydantic.PositiveFloat = DEFAULT_EPS
    max_gap: pydantic.PositiveFloat = DEFAULT_MAX_GAP
    max_turn: pydantic.PositiveFloat = DEFAULT_MAX_TURN


class Caps(pydantic.BaseModel):
    orbit_steps: pydantic.PositiveInt = DEFAULT_ORBIT_CAP
    branch_points: pydantic.PositiveInt = DEFAULT_POINT_CAP
    newton_iters: pydantic.PositiveInt = MAX_NEWTON_ITERS


class Config(pydantic.BaseModel):
    """Overall configuration object"""

    map: MapConfig = pydantic.Field(default_factory=MapConfig)
    tolerances: Tolerances = pydantic.Field(default_factory=Tolerances)
    caps: Caps = pydantic.Field(default_factory=Caps)
    regions: RegionSettings = pydantic.Field(default_factory=RegionSettings)
    coverage: CoverageSettings = pydantic.Field(default_factory=CoverageSettings)
    output_dir: pathlib.Path = pathlib.Path("atlas-out")
    data_dir: pathlib.Path = pydantic.Field(default_factory=default_data_dir)
    seed: int = 0
    workers: pydantic.PositiveInt = pydantic.Field(default_factory=lambda: os.cpu_count() or 1)

    @property
    def growth(self) -> GrowthSettings:
        return GrowthSettings(
            eps=self.tolerances.eps,
            max_gap=self.tolerances.max_gap,
            max_turn=self.tolerances.max_turn,
            point_cap=self.caps.branch_points,
        )

    def with_overrides(self, **overrides: ty.Any) -> Config:
        """Copy with dotted-key overrides such as ``{"map.params": {...}, "seed": 3}`` applied, None values ignored"""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            *parents, leaf = key.split(".")
            target = data
            for parent in parents:
                target = target.setdefault(parent, {})
            target[leaf] = value
        return Config.model_validate(data)


def _merge(target: dict[str, ty.Any], key: str, value: ty.Any) -> None:
    if isinstance(value, dict) and isinstance(target.get(key), dict):
        for inner_key, inner_value in value.items():
            _merge(target[key], inner_key, inner_value)
    else:
        target[key] = value


def _nest_dotted(data: dict[str, ty.Any]) -> dict[str, ty.Any]:
    """Expand quoted dotted keys such as ``"map.family"`` into nested tables"""
    nested: dict[str, ty.Any] = {}
    for key, value in data.items():
        *parents, leaf = key.split(".")
        target = nested
        for parent in parents:
            target = target.setdefault(parent, {})
        _merge(target, leaf, _nest_dotted(value) if isinstance(value, dict) else value)
    return nested


def load_config(path: pathlib.Path) -> Config:
    """Read a ``.json`` or ``.toml`` configuration file

    :raises pydantic.ValidationError: Raised if the file does not describe a valid configuration
    """
    if path.suffix == ".toml":
        with path.open("rb") as handle:
            return Config.model_validate(_nest_dotted(tomllib.load(handle)))
    return Config.model_validate_json(path.read_text())
