import argparse
import asyncio
import collections.abc
import enum
import functools
import inspect
import json
import logging
import pathlib
import sys
import textwrap
import typing as ty

import numpy as np
import pydantic

from instability_atlas import __version__
from instability_atlas.config import Config, load_config
from instability_atlas.dynamics import LiftedMap
from instability_atlas.error import InvalidIdError, InvalidWindowError, MissingRecordError
from instability_atlas.manifolds import Branch, BranchKind, BranchSeed, BranchSign, branch_seed, grow_branch
from instability_atlas.periodic import PeriodicOrbit, Window, find_all_pq, same_orbit
from instability_atlas.plotting import phase_portrait, render_coverage, render_mask, render_portrait, write_csv
from instability_atlas.regions import (
    ConnectingOrbitEvidence,
    CoverageReport,
    Decomposition,
    EscapeStats,
    Region,
    connecting_orbit_search,
    coverage_report,
    decompose,
    detect_barrier,
    escape_time_stats,
    region_boundary_orbits,
    scan_bands,
)
from instability_atlas.store import RunStore, canonical_json
from instability_atlas.topology import EssentialityVerdict, classify_essentiality
from instability_atlas.workers import gather_map

_logger = logging.getLogger(__name__.split(".", 1)[0])

DEFAULT_CONFIG = Config()


class OrbitRecord(pydantic.BaseModel):
    id: str
    orbit: PeriodicOrbit


class BranchMetadata(pydantic.BaseModel):
    """Branch without its polyline, which is written as CSV"""

    id: str
    orbit_record: str
    seed: BranchSeed
    arclength: float
    max_gap: float
    max_turn: float
    truncated: bool
    n_points: int


class RegionRecord(pydantic.BaseModel):
    id: str
    region: Region


class RegionReport(pydantic.BaseModel):
    """Frontier diagnostics of one region"""

    region_id: str
    region: Region
    escape: dict[str, EscapeStats]
    boundary_orbits: dict[str, list[PeriodicOrbit]]


SCHEMAS: dict[str, ty.Any] = {
    "config": Config,
    "orbits": list[OrbitRecord],
    "manifold": BranchMetadata,
    "classify": EssentialityVerdict,
    "regions": list[RegionRecord],
    "connect": ConnectingOrbitEvidence,
    "coverage": CoverageReport,
    "report": RegionReport,
}


def configure_logging(verbose: bool) -> None:
    """Configure stream logging"""
    level = logging.DEBUG if verbose else logging.INFO
    _logger.setLevel(level)
    if _logger.handlers:
        return
    stdout_handler = logging.StreamHandler(sys.stdout)
    stdout_handler.addFilter(lambda record: record.levelno < logging.WARNING)
    stdout_handler.setFormatter(logging.Formatter("%(module)s: %(message)s"))

    stderr_handler = logging.StreamHandler()
    stderr_handler.setLevel(logging.WARNING)
    stderr_handler.setFormatter(logging.Formatter("%(levelname)s: %(module)s: %(message)s"))

    _logger.addHandler(stdout_handler)
    _logger.addHandler(stderr_handler)


# Argument types


def window_type(text: str) -> Window:
    try:
        return Window.parse(text)
    except InvalidWindowError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def grid_type(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected a grid like 50x50, got '{text}'") from None
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError(f"Grid dimensions must be positive, got '{text}'")
    return nx, ny


def positive_int(text: str) -> int:
    """Positive integer, scientific notation such as ``1e7`` accepted"""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected a positive integer, got '{text}'") from None
    if not value.is_integer() or value < 1:
        raise argparse.ArgumentTypeError(f"Expected a positive integer, got '{text}'")
    return int(value)


def range_type(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected a range like -1,1, got '{text}'") from None
    if not hi > lo:
        raise argparse.ArgumentTypeError(f"Range '{text}' is empty")
    return lo, hi


E = ty.TypeVar("E", bound=enum.Enum)


def enum_type(enum_class: type[E]) -> collections.abc.Callable[[str], E]:
    """Case-insensitive conversion to an enum member by value"""

    def convert(text: str) -> E:
        for member in enum_class:
            if member.value.lower() == text.lower():
                return member
        choices = ", ".join(member.value.lower() for member in enum_class)
        raise argparse.ArgumentTypeError(f"Expected one of {choices}, got '{text}'")

    return convert


def param_type(text: str) -> tuple[str, float | str]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"Expected NAME=VALUE, got '{text}'")
    try:
        return name, float(value)
    except ValueError:
        return name, value


# Parser


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Add the configuration and map selection arguments to a subcommand parser"""
    parser.add_argument("--config", dest="config_file", type=pathlib.Path, help="JSON or TOML configuration file")
    parser.add_argument("--family", help="Map family, overrides the configuration")
    parser.add_argument("--k", type=float, help="Kick strength of the standard map")
    parser.add_argument("--a", type=float, help="Winding parameter of the non-twist map")
    parser.add_argument("--b", type=float, help="Perturbation of the non-twist map")
    parser.add_argument(
        "--param", dest="params", type=param_type, action="append", default=[], help="Further map parameter NAME=VALUE"
    )
    parser.add_argument("--output-dir", type=pathlib.Path, help="Directory for reports and figures")
    parser.add_argument("--data-dir", type=pathlib.Path, help="Store directory [default: $ATLAS_DATA or ./atlas-data]")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--workers", type=positive_int, help="Number of worker processes")


def add_record_argument(parser: argparse.ArgumentParser, name: str, help: str) -> None:
    parser.add_argument(f"--{name}", dest="record_id", required=True, help=help)


def get_argument_parser() -> argparse.ArgumentParser:
    example_config_file_text = textwrap.indent(DEFAULT_CONFIG.model_dump_json(indent=2), prefix="    ")

    parser = argparse.ArgumentParser(
        prog="atlas",
        description=(
            "Regions of instability of area-preserving annulus maps.\n\n"
            f"Example configuration file:\n\n{example_config_file_text}"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", default=False, help="Enable verbose output")

    subparsers = parser.add_subparsers()

    scan_parser = subparsers.add_parser("scan", help="Draw a phase portrait")
    add_common_arguments(scan_parser)
    scan_parser.add_argument("--window", type=window_type, default=Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5))
    scan_parser.add_argument("--seeds", type=positive_int, default=100, help="Number of seeds [default: %(default)s]")
    scan_parser.add_argument("--steps", type=positive_int, default=1000, help="Steps per seed [default: %(default)s]")
    scan_parser.add_argument("--region", dest="region_ids", action="append", default=[], help="Region id to overlay")
    scan_parser.add_argument("--orbit", dest="orbit_ids", action="append", default=[], help="Orbit id to overlay")
    scan_parser.add_argument(
        "--branch", dest="branch_ids", action="append", default=[], help="Branch id from `atlas manifold` to overlay"
    )
    scan_parser.set_defaults(__func__=scan)

    orbits_parser = subparsers.add_parser("orbits", help="Find all periodic orbits of a type")
    add_common_arguments(orbits_parser)
    orbits_parser.add_argument("--p", type=int, required=True, help="Lift translation per period")
    orbits_parser.add_argument("--q", type=positive_int, required=True, help="Period")
    orbits_parser.add_argument("--window", type=window_type, default=Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5))
    orbits_parser.add_argument("--grid", type=grid_type, default=(50, 50), help="Seed grid [default: 50x50]")
    orbits_parser.add_argument(
        "--allow-multiples", action="store_true", default=False, help="Accept types with gcd(p, q) > 1"
    )
    orbits_parser.set_defaults(__func__=orbits)

    manifold_parser = subparsers.add_parser("manifold", help="Grow a stable or unstable branch")
    add_common_arguments(manifold_parser)
    add_record_argument(manifold_parser, "orbit", "Orbit id from `atlas orbits`")
    manifold_parser.add_argument(
        "--kind", type=enum_type(BranchKind), default=BranchKind.UNSTABLE, help="stable or unstable [default: unstable]"
    )
    manifold_parser.add_argument(
        "--sign", type=enum_type(BranchSign), default=BranchSign.PLUS, help="plus or minus [default: plus]"
    )
    manifold_parser.add_argument("--point-index", type=int, default=0, help="Orbit point the branch starts at")
    manifold_parser.add_argument("--arclength", type=float, default=10.0, help="Target arclength [default: 10]")
    manifold_parser.set_defaults(__func__=manifold)

    classify_parser = subparsers.add_parser("classify", help="Decide whether a saddle orbit is essential")
    add_common_arguments(classify_parser)
    add_record_argument(classify_parser, "orbit", "Orbit id from `atlas orbits`")
    classify_parser.add_argument("--arclength", type=float, default=20.0, help="Branch arclength [default: 20]")
    classify_parser.add_argument(
        "--resolution", type=positive_int, default=512, help="Grid cells per unit length [default: 512]"
    )
    classify_parser.add_argument("--figure", action="store_true", default=False, help="Also draw the mask as SVG")
    classify_parser.set_defaults(__func__=classify)

    regions_parser = subparsers.add_parser("regions", help="Detect barriers and regions of instability")
    add_common_arguments(regions_parser)
    regions_parser.add_argument("--y-range", type=range_type, default=(-1.0, 1.0), help="Scanned range [default: -1,1]")
    regions_parser.add_argument("--scan", type=positive_int, default=64, help="Number of bands [default: 64]")
    regions_parser.set_defaults(__func__=regions)

    connect_parser = subparsers.add_parser("connect", help="Search an orbit connecting the frontiers of a region")
    add_common_arguments(connect_parser)
    add_record_argument(connect_parser, "region", "Region id from `atlas regions`")
    connect_parser.add_argument("--delta", type=float, default=0.05, help="Target distance [default: 0.05]")
    connect_parser.add_argument("--steps", type=positive_int, default=10**7, help="Steps per direction")
    connect_parser.add_argument("--seeds", type=positive_int, default=100, help="Number of seeds [default: 100]")
    connect_parser.add_argument("--direction", choices=["up", "down"], default="up")
    connect_parser.set_defaults(__func__=connect)

    coverage_parser = subparsers.add_parser("coverage", help="Grid coverage by stable manifolds and regular orbits")
    add_common_arguments(coverage_parser)
    coverage_parser.add_argument("--window", type=window_type, default=Window(x0=0.0, x1=1.0, y0=-0.5, y1=0.5))
    coverage_parser.add_argument("--grid", type=grid_type, default=(256, 256), help="Grid [default: 256x256]")
    coverage_parser.add_argument("--delta", type=float, default=0.02, help="Proximity threshold [default: 0.02]")
    coverage_parser.add_argument("--saddles", type=positive_int, default=10, help="Saddle budget [default: 10]")
    coverage_parser.set_defaults(__func__=coverage)

    report_parser = subparsers.add_parser("report", help="Escape statistics and boundary orbits of a region")
    add_common_arguments(report_parser)
    add_record_argument(report_parser, "region", "Region id from `atlas regions`")
    report_parser.add_argument("--width", type=float, default=0.01, help="Width of the frontier band [default: 0.01]")
    report_parser.add_argument("--seeds", type=positive_int, default=1000, help="Escape seeds [default: 1000]")
    report_parser.add_argument("--cap", type=positive_int, default=10**6, help="Escape step cap [default: 1e6]")
    report_parser.add_argument("--q-max", type=positive_int, default=20, help="Largest boundary orbit period")
    report_parser.set_defaults(__func__=report)

    create_config_parser = subparsers.add_parser("create-config", help="Create a default configuration file")
    create_config_parser.add_argument("config_file", metavar="CONFIG_FILE", type=pathlib.Path)
    create_config_parser.set_defaults(__func__=create_config)

    schemas_parser = subparsers.add_parser("schemas", help="Write the JSON schemas of all reports")
    schemas_parser.add_argument("directory", metavar="DIR", type=pathlib.Path)
    schemas_parser.set_defaults(__func__=schemas)
    return parser


# Helpers


def resolve_config(
    config_file: pathlib.Path | None = None,
    family: str | None = None,
    k: float | None = None,
    a: float | None = None,
    b: float | None = None,
    params: collections.abc.Sequence[tuple[str, float | str]] = (),
    output_dir: pathlib.Path | None = None,
    data_dir: pathlib.Path | None = None,
    seed: int | None = None,
    workers: int | None = None,
    **kwargs: ty.Any,
) -> Config:
    """Configuration file with command line overrides applied"""
    config = load_config(config_file) if config_file is not None else Config()
    overrides = {name: value for name, value in (("k", k), ("a", a), ("b", b)) if value is not None}
    overrides.update(params)
    map_params: dict[str, float | str] | None = None
    if family is not None and family != config.map.family:
        map_params = overrides
    elif overrides:
        map_params = {**config.map.params, **overrides}
    return config.with_overrides(
        **{
            "map.family": family,
            "map.params": map_params,
            "output_dir": output_dir,
            "data_dir": data_dir,
            "seed": seed,
            "workers": workers,
        }
    )


def map_inputs(lifted_map: LiftedMap) -> dict[str, ty.Any]:
    return {"family": lifted_map.family, "params": lifted_map.params}


def write_json(path: pathlib.Path, data: ty.Any) -> None:
    """Write key-sorted, indented JSON"""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(json.loads(canonical_json(data)), indent=2, sort_keys=True) + "\n")
    _logger.info("Wrote '%s'", path)


def find_stored_orbit(
    store: RunStore, lifted_map: LiftedMap, orbit: PeriodicOrbit, tol: float
) -> tuple[str, PeriodicOrbit] | None:
    """Record of the same orbit stored by an earlier search, matched within ``tol`` rather than by hash"""
    for id_ in store.query(lifted_map.family, lifted_map.params, "orbit"):
        record = store.get(id_)
        if record is None:
            continue
        known = PeriodicOrbit.model_validate(record.payload)
        if (known.p, known.q) == (orbit.p, orbit.q) and same_orbit(known.as_array(), orbit.as_array(), tol):
            return id_, known
    return None


def load_record(store: RunStore, record_id: str, op: str) -> tuple[LiftedMap, ty.Any]:
    """Map and payload of a stored record

    :raises MissingRecordError: Raised if the store has no such record
    :raises InvalidIdError: Raised if the record was produced by another operation
    """
    record = store.get(record_id)
    if record is None:
        raise MissingRecordError(f"No record {record_id} in '{store.path}'")
    if record.op != op:
        raise InvalidIdError(f"Record {record_id} holds a '{record.op}' result, expected '{op}'")
    return LiftedMap(record.inputs["family"], record.inputs["params"]), record.payload


# Commands


def scan(
    window: Window,
    seeds: int,
    steps: int,
    region_ids: list[str],
    orbit_ids: list[str],
    branch_ids: list[str],
    **kwargs: ty.Any,
) -> None:
    """Implementation of the `scan` command"""
    config = resolve_config(**kwargs)
    lifted_map = config.map.build()
    with RunStore(config.data_dir) as store:
        regions = [Region.model_validate(load_record(store, id_, "region")[1]) for id_ in region_ids]
        overlay_orbits = [PeriodicOrbit.model_validate(load_record(store, id_, "orbit")[1]) for id_ in orbit_ids]
        branches = [Branch.model_validate(load_record(store, id_, "branch")[1]).polyline for id_ in branch_ids]
    points = phase_portrait(lifted_map, window, seeds, steps, cap=config.caps.orbit_steps)
    barriers = [
        frontier.barrier for region in regions for frontier in (region.lower, region.upper) if frontier.barrier
    ]
    write_csv(config.output_dir / "scan.csv", ["x", "y"], points)
    render_portrait(
        points,
        config.output_dir / "scan.svg",
        window,
        barriers=barriers,
        regions=regions,
        orbits=overlay_orbits,
        branches=branches,
        title=repr(lifted_map),
    )


def orbits(
    p: int, q: int, window: Window, grid: tuple[int, int], allow_multiples: bool, **kwargs: ty.Any
) -> None:
    """Implementation of the `orbits` command"""
    config = resolve_config(**kwargs)
    lifted_map = config.map.build()
    tolerances = config.tolerances
    inputs = {
        **map_inputs(lifted_map),
        "p": p,
        "q": q,
        "window": window.model_dump(),
        "grid": list(grid),
        "newton_tol": tolerances.newton_tol,
        "dedup_tol": tolerances.dedup_tol,
        "degeneracy_band": tolerances.degeneracy_band,
        "max_iters": config.caps.newton_iters,
        "coprime": not allow_multiples,
    }

    def compute() -> list[ty.Any]:
        found = find_all_pq(
            lifted_map,
            p,
            q,
            window,
            *grid,
            tol=tolerances.newton_tol,
            max_iters=config.caps.newton_iters,
            dedup_tol=tolerances.dedup_tol,
            degeneracy_band=tolerances.degeneracy_band,
            coprime=not allow_multiples,
        )
        return [orbit.model_dump(mode="json") for orbit in found]

    with RunStore(config.data_dir) as store:
        _, payload = store.cached("find_all_pq", inputs, compute)
        records = []
        for orbit_data in payload:
            orbit = PeriodicOrbit.model_validate(orbit_data)
            if (stored := find_stored_orbit(store, lifted_map, orbit, tolerances.dedup_tol)) is not None:
                id_, orbit = stored
            else:
                id_ = store.put("orbit", {**map_inputs(lifted_map), "orbit_id": orbit.orbit_id}, orbit_data)
            records.append(OrbitRecord(id=id_, orbit=orbit))
            _logger.info("%s: %s", id_, orbit.describe())
    write_json(config.output_dir / "orbits.json", [record.model_dump(mode="json") for record in records])


def manifold(
    record_id: str, kind: BranchKind, sign: BranchSign, point_index: int, arclength: float, **kwargs: ty.Any
) -> None:
    """Implementation of the `manifold` command"""
    config = resolve_config(**kwargs)
    growth = config.growth
    with RunStore(config.data_dir) as store:
        lifted_map, orbit_data = load_record(store, record_id, "orbit")
        orbit = PeriodicOrbit.model_validate(orbit_data)
        inputs = {
            **map_inputs(lifted_map),
            "orbit": record_id,
            "kind": kind.value,
            "sign": sign.value,
            "point_index": point_index,
            "arclength": arclength,
            **growth.model_dump(),
        }

        def compute() -> ty.Any:
            seed = branch_seed(lifted_map, orbit, kind, sign, eps=growth.eps, point_index=point_index)
            branch = grow_branch(lifted_map, seed, arclength, growth.max_gap, growth.max_turn, growth.point_cap)
            return branch.model_dump(mode="json")

        branch_id, payload = store.cached("branch", inputs, compute)
    branch = Branch.model_validate(payload)
    metadata = BranchMetadata(
        id=branch_id,
        orbit_record=record_id,
        seed=branch.seed,
        arclength=branch.arclength,
        max_gap=branch.max_gap,
        max_turn=branch.max_turn,
        truncated=branch.truncated,
        n_points=len(branch.polyline),
    )
    stem = f"branch-{orbit.orbit_id[:12]}-{point_index}-{kind.value.lower()}-{sign.value.lower()}"
    write_csv(config.output_dir / f"{stem}.csv", ["x", "y"], branch.polyline)
    write_json(config.output_dir / f"{stem}.json", metadata.model_dump(mode="json"))


def classify(record_id: str, arclength: float, resolution: int, figure: bool, **kwargs: ty.Any) -> None:
    """Implementation of the `classify` command"""
    config = resolve_config(**kwargs)
    growth = config.growth
    h = 1.0 / resolution
    with RunStore(config.data_dir) as store:
        lifted_map, orbit_data = load_record(store, record_id, "orbit")
        orbit = PeriodicOrbit.model_validate(orbit_data)
        run = functools.partial(classify_essentiality, lifted_map, orbit, arclength, h, growth)
        inputs = {**map_inputs(lifted_map), "orbit": record_id, "arclength": arclength, "resolution": h}
        _, payload = store.cached(
            "classify_essentiality", {**inputs, **growth.model_dump()}, lambda: run().model_dump(mode="json")
        )
    verdict = EssentialityVerdict.model_validate(payload)
    _logger.info("%s is %s", orbit.describe(), verdict.status.value)
    write_json(config.output_dir / f"classify-{orbit.orbit_id[:12]}.json", payload)
    if figure:
        mask = run().separation_mask
        if mask is not None:
            band = verdict.band
            curves = [verdict.certificate] if verdict.certificate is not None else []
            path = config.output_dir / f"classify-{orbit.orbit_id[:12]}.svg"
            render_mask(mask, (0.0, 1.0, band[0], band[1]), path, curves=curves)


async def regions(y_range: tuple[float, float], scan: int, **kwargs: ty.Any) -> None:
    """Implementation of the `regions` command"""
    config = resolve_config(**kwargs)
    lifted_map = config.map.build()
    inputs = {
        **map_inputs(lifted_map),
        "y_range": list(y_range),
        "scan": scan,
        "settings": config.regions.model_dump(mode="json"),
    }
    with RunStore(config.data_dir) as store:
        if (record := store.lookup("decompose", inputs)) is not None:
            decomposition_id, payload = record.id, record.payload
        else:
            bands = scan_bands(y_range, scan)
            detect = functools.partial(detect_barrier, lifted_map, settings=config.regions)
            barriers = await gather_map(detect, bands, config.workers)
            result = decompose(lifted_map, y_range, scan, config.regions, barriers=barriers)
            payload = result.model_dump(mode="json")
            decomposition_id = store.put("decompose", inputs, payload)
        decomposition = Decomposition.model_validate(payload)
        records = []
        for index, region in enumerate(decomposition.regions):
            region_inputs = {**map_inputs(lifted_map), "decomposition": decomposition_id, "index": index}
            id_ = store.put("region", region_inputs, payload["regions"][index])
            records.append(RegionRecord(id=id_, region=region))
            _logger.info(
                "Region %s: rotation [%.5f, %.5f], %d orbits",
                id_,
                region.rotation_interval.lo,
                region.rotation_interval.hi,
                len(region.orbits),
            )
    write_json(config.output_dir / "regions.json", [record.model_dump(mode="json") for record in records])


def connect(
    record_id: str, delta: float, steps: int, seeds: int, direction: ty.Literal["up", "down"], **kwargs: ty.Any
) -> None:
    """Implementation of the `connect` command"""
    config = resolve_config(**kwargs)
    with RunStore(config.data_dir) as store:
        lifted_map, region_data = load_record(store, record_id, "region")
        region = Region.model_validate(region_data)
        inputs = {
            **map_inputs(lifted_map),
            "region": record_id,
            "delta": delta,
            "steps": steps,
            "seeds": seeds,
            "direction": direction,
        }
        _, payload = store.cached(
            "connecting_orbit_search",
            inputs,
            lambda: connecting_orbit_search(
                lifted_map, region, seeds, steps, delta, direction, cap=config.caps.orbit_steps
            ).model_dump(mode="json"),
        )
    write_json(config.output_dir / f"connect-{record_id[:12]}-{direction}.json", payload)


def coverage(window: Window, grid: tuple[int, int], delta: float, saddles: int, **kwargs: ty.Any) -> None:
    """Implementation of the `coverage` command"""
    config = resolve_config(**kwargs)
    lifted_map = config.map.build()
    growth = config.growth
    inputs = {
        **map_inputs(lifted_map),
        "window": window.model_dump(),
        "grid": list(grid),
        "delta": delta,
        "saddles": saddles,
        "settings": config.coverage.model_dump(mode="json"),
        "growth": growth.model_dump(),
    }
    with RunStore(config.data_dir) as store:
        _, payload = store.cached(
            "coverage_report",
            inputs,
            lambda: coverage_report(lifted_map, window, *grid, delta, saddles, config.coverage, growth).model_dump(
                mode="json"
            ),
        )
    result = CoverageReport.model_validate(payload)
    ny, nx = result.classes.shape
    cells = np.column_stack(
        [
            np.tile(np.arange(nx), ny),
            np.repeat(np.arange(ny), nx),
            result.classes.ravel(),
        ]
    )
    write_csv(config.output_dir / "coverage.csv", ["ix", "iy", "class"], cells)
    render_coverage(result, config.output_dir / "coverage.svg")
    write_json(config.output_dir / "coverage.json", payload)


def report(record_id: str, width: float, seeds: int, cap: int, q_max: int, **kwargs: ty.Any) -> None:
    """Implementation of the `report` command"""
    config = resolve_config(**kwargs)
    with RunStore(config.data_dir) as store:
        lifted_map, region_data = load_record(store, record_id, "region")
        region = Region.model_validate(region_data)
        inputs = {
            **map_inputs(lifted_map),
            "region": record_id,
            "width": width,
            "seeds": seeds,
            "cap": cap,
            "q_max": q_max,
            "seed": config.seed,
        }

        def compute() -> ty.Any:
            escape = {}
            boundary = {}
            for frontier in ("lower", "upper"):
                if region.frontier(frontier).is_end:
                    continue
                escape[frontier] = escape_time_stats(
                    lifted_map, region, frontier, width, seeds, n_cap=cap, seed=config.seed, cap=config.caps.orbit_steps
                )
                boundary[frontier] = region_boundary_orbits(lifted_map, region, frontier, width, q_max)
            result = RegionReport(region_id=record_id, region=region, escape=escape, boundary_orbits=boundary)
            return result.model_dump(mode="json")

        _, payload = store.cached("region_report", inputs, compute, seed=config.seed)
    write_json(config.output_dir / f"report-{record_id[:12]}.json", payload)


def create_config(config_file: pathlib.Path, **kwargs: ty.Any) -> None:
    """Implementation of the `create-config` command

    :param config_file: Path of the configuration file
    """
    config_file.write_text(DEFAULT_CONFIG.model_dump_json(indent=2, exclude_none=True))
    _logger.info("Created default config file at '%s'", config_file)


def schemas(directory: pathlib.Path, **kwargs: ty.Any) -> None:
    """Implementation of the `schemas` command"""
    directory.mkdir(parents=True, exist_ok=True)
    for name, model in SCHEMAS.items():
        schema = pydantic.TypeAdapter(model).json_schema()
        (directory / f"{name}.schema.json").write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n")
    _logger.info("Wrote %d schemas to '%s'", len(SCHEMAS), directory)


async def async_main(argv: collections.abc.Sequence[str] | None = None) -> ty.NoReturn:
    """Async main function."""
    parser = get_argument_parser()
    namespace = parser.parse_args(argv)
    configure_logging(namespace.verbose)

    try:
        func = namespace.__func__
    except AttributeError:
        parser.error(parser.format_usage())

    try:
        ret = func(**vars(namespace))
        if inspect.isawaitable(ret):
            await ret
    except Exception as exc:
        if namespace.verbose:
            _logger.exception("Error!")
        parser.exit(status=1, message=json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")

    parser.exit(status=0)


def main(argv: collections.abc.Sequence[str] | None = None) -> None:
    asyncio.run(async_main(argv))


if __name__ == "__main__":
    main()
