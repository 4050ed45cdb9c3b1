"""Run configuration: TOML parsing, validation, defaults and serialisation.

Example::

    [mesh]
    nx = 16
    ny = 16
    hx = 1.0
    hy = 1.0
    material = "moderator"
    boundary = { left = "reflective", bottom = "reflective" }

    [[mesh.regions]]
    material = "fuel"
    i0 = 4
    i1 = 12
    j0 = 4
    j1 = 12

    [materials.fuel]
    sigma_t = [1.0]
    sigma_s = [[0.5]]
    nu_sigma_f = [0.6]
    chi = [1.0]

    [problem]
    directions = 4

Sections ``[partition]``, ``[hierarchy]``, ``[solver]`` and ``[output]`` are
optional; every key has a default.  Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .errors import ConfigurationError, InvalidCrossSectionError
from .interpolation import HierarchyParams
from .mesh import SIDES, Region, build_mesh
from .solver import EigenSolveParams
from .transport import CrossSectionLibrary, Material, TransportProblem, build_quadrature

__all__ = [
    "MeshConfig",
    "RegionConfig",
    "MaterialConfig",
    "PartitionConfig",
    "OutputConfig",
    "RunConfig",
    "PRECONDITIONERS",
    "NODE_ASSIGNMENTS",
    "parse_config",
    "load_config",
    "serialize_config",
]

PRECONDITIONERS = ("masm_sub", "masm_onelevel", "none")
NODE_ASSIGNMENTS = ("lowest", "balanced")


@dataclass
class RegionConfig:
    material: str
    i0: int
    i1: int
    j0: int
    j1: int


@dataclass
class MeshConfig:
    nx: int
    ny: int
    hx: float = 1.0
    hy: float = 1.0
    material: str = ""
    regions: list = field(default_factory=list)
    boundary: dict = field(default_factory=lambda: {s: "vacuum" for s in SIDES})


@dataclass
class MaterialConfig:
    sigma_t: list
    sigma_s: list
    nu_sigma_f: list
    chi: list


@dataclass
class PartitionConfig:
    np1: int = 1
    np2: int = 1
    node_assignment: str = "balanced"

    @property
    def n_parts(self) -> int:
        return self.np1 * self.np2


@dataclass
class OutputConfig:
    report: str = ""
    report_csv: str = ""
    flux_csv: str = ""
    matrix_market_dir: str = ""


@dataclass
class RunConfig:
    mesh: MeshConfig
    materials: dict
    groups: int
    directions: int
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    hierarchy: HierarchyParams = field(default_factory=HierarchyParams)
    solver: EigenSolveParams = field(default_factory=EigenSolveParams)
    preconditioner: str = "masm_sub"
    output: OutputConfig = field(default_factory=OutputConfig)

    # builders ------------------------------------------------------------
    @property
    def material_ids(self) -> dict:
        return {name: i for i, name in enumerate(self.materials)}

    def build_mesh(self):
        ids = self.material_ids
        regions = [Region(ids[r.material], r.i0, r.i1, r.j0, r.j1) for r in self.mesh.regions]
        return build_mesh(self.mesh.nx, self.mesh.ny, self.mesh.hx, self.mesh.hy,
                          ids[self.mesh.material], regions, self.mesh.boundary,
                          known_materials=set(ids.values()))

    def build_xs(self) -> CrossSectionLibrary:
        ids = self.material_ids
        return CrossSectionLibrary({
            ids[name]: Material(m.sigma_t, m.sigma_s, m.nu_sigma_f, m.chi, name=name)
            for name, m in self.materials.items()})

    def build_problem(self) -> TransportProblem:
        return TransportProblem(self.build_mesh(), self.build_xs(),
                                build_quadrature(self.directions))


# --------------------------------------------------------------------------
# Parsing helpers


def _key(path, name):
    return f"{path}.{name}" if path else name


def _check_keys(table, allowed, path, required=()):
    if not isinstance(table, dict):
        raise ConfigurationError("expected a table", key=path)
    for k in table:
        if k not in allowed:
            raise ConfigurationError(f"unknown key {k!r}", key=_key(path, k))
    for k in required:
        if k not in table:
            raise ConfigurationError("missing required key", key=_key(path, k))


def _coerce(value, like, key):
    if isinstance(like, bool):
        ok = isinstance(value, bool)
    elif isinstance(like, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(like, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(like, str):
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise ConfigurationError(
            f"expected {type(like).__name__}, got {type(value).__name__}", key=key)
    return value


def _scalar_dataclass(cls, table, path, extra=()):
    """Fill a dataclass of scalar fields from ``table`` using defaults as type hints."""
    names = {f.name: f for f in dataclasses.fields(cls)}
    _check_keys(table, set(names) | set(extra), path)
    kwargs = {}
    defaults = cls()
    for name in names:
        if name in table:
            kwargs[name] = _coerce(table[name], getattr(defaults, name), _key(path, name))
    return cls(**kwargs)


def _number_list(value, key, length=None):
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigurationError("expected a list of numbers", key=key)
    if length is not None and len(value) != length:
        raise ConfigurationError(f"expected {length} entries, got {len(value)}", key=key)
    return [float(v) for v in value]


def _parse_material(name, table, path):
    _check_keys(table, {"sigma_t", "sigma_s", "nu_sigma_f", "chi"}, path, required=("sigma_t",))
    sigma_t = _number_list(table["sigma_t"], _key(path, "sigma_t"))
    G = len(sigma_t)
    if G == 0:
        raise ConfigurationError("at least one group is required", key=_key(path, "sigma_t"))
    if "sigma_s" in table:
        rows = table["sigma_s"]
        if not isinstance(rows, list) or len(rows) != G:
            raise ConfigurationError(f"expected a {G}x{G} matrix", key=_key(path, "sigma_s"))
        sigma_s = [_number_list(r, _key(path, "sigma_s"), G) for r in rows]
    else:
        sigma_s = [[0.0] * G for _ in range(G)]
    nu_sigma_f = _number_list(table.get("nu_sigma_f", [0.0] * G), _key(path, "nu_sigma_f"), G)
    if "chi" in table:
        chi = _number_list(table["chi"], _key(path, "chi"), G)
    else:
        chi = [1.0] + [0.0] * (G - 1) if any(nu_sigma_f) else [0.0] * G
    mat = MaterialConfig(sigma_t, sigma_s, nu_sigma_f, chi)
    try:
        Material(sigma_t, sigma_s, nu_sigma_f, chi, name=name).validate()
    except InvalidCrossSectionError as exc:
        raise ConfigurationError(str(exc), key=path) from None
    return mat


def _parse_mesh(table, materials):
    path = "mesh"
    _check_keys(table, {f.name for f in dataclasses.fields(MeshConfig)}, path,
                required=("nx", "ny"))
    nx = _coerce(table["nx"], 1, "mesh.nx")
    ny = _coerce(table["ny"], 1, "mesh.ny")
    if nx < 1 or ny < 1:
        raise ConfigurationError("element counts must be >= 1", key="mesh")
    hx = _coerce(table.get("hx", 1.0), 1.0, "mesh.hx")
    hy = _coerce(table.get("hy", 1.0), 1.0, "mesh.hy")
    if hx <= 0 or hy <= 0:
        raise ConfigurationError("element sizes must be positive", key="mesh")
    if "material" in table:
        material = _coerce(table["material"], "", "mesh.material")
    elif len(materials) == 1:
        material = next(iter(materials))
    else:
        raise ConfigurationError("required when more than one material is defined",
                                 key="mesh.material")
    if material not in materials:
        raise ConfigurationError(f"undefined material {material!r}", key="mesh.material")
    regions = []
    raw_regions = table.get("regions", [])
    if not isinstance(raw_regions, list):
        raise ConfigurationError("expected an array of tables", key="mesh.regions")
    for n, r in enumerate(raw_regions):
        rpath = f"mesh.regions[{n}]"
        _check_keys(r, {"material", "i0", "i1", "j0", "j1"}, rpath,
                    required=("material", "i0", "i1", "j0", "j1"))
        vals = {k: _coerce(r[k], 0, _key(rpath, k)) for k in ("i0", "i1", "j0", "j1")}
        mname = _coerce(r["material"], "", _key(rpath, "material"))
        if mname not in materials:
            raise ConfigurationError(f"undefined material {mname!r}", key=_key(rpath, "material"))
        if not (0 <= vals["i0"] < vals["i1"] <= nx and 0 <= vals["j0"] < vals["j1"] <= ny):
            raise ConfigurationError("region lies outside the mesh", key=rpath)
        regions.append(RegionConfig(mname, **vals))
    boundary = {s: "vacuum" for s in SIDES}
    raw_bc = table.get("boundary", {})
    _check_keys(raw_bc, set(SIDES), "mesh.boundary")
    for side, kind in raw_bc.items():
        if kind not in ("vacuum", "reflective"):
            raise ConfigurationError(f"unknown boundary kind {kind!r}", key=f"mesh.boundary.{side}")
        boundary[side] = kind
    return MeshConfig(nx, ny, hx, hy, material, regions, boundary)


def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML text into a :class:`RunConfig`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML: {exc}") from None
    sections = {"mesh", "materials", "problem", "partition", "hierarchy", "solver", "output"}
    _check_keys(data, sections, "", required=("mesh", "materials"))

    raw_mats = data["materials"]
    _check_keys(raw_mats, set(raw_mats), "materials")
    if not raw_mats:
        raise ConfigurationError("at least one material is required", key="materials")
    materials = {name: _parse_material(name, m, f"materials.{name}")
                 for name, m in raw_mats.items()}
    groups_found = {len(m.sigma_t) for m in materials.values()}
    if len(groups_found) != 1:
        raise ConfigurationError(f"materials disagree on group count {sorted(groups_found)}",
                                 key="materials")
    G = groups_found.pop()

    problem = data.get("problem", {})
    _check_keys(problem, {"groups", "directions"}, "problem")
    groups = _coerce(problem.get("groups", G), 1, "problem.groups")
    if groups != G:
        raise ConfigurationError(f"materials define {G} groups", key="problem.groups")
    directions = _coerce(problem.get("directions", 4), 1, "problem.directions")
    if directions < 4 or directions % 4:
        raise ConfigurationError("must be a positive multiple of 4", key="problem.directions")

    mesh = _parse_mesh(data["mesh"], materials)

    partition = _scalar_dataclass(PartitionConfig, data.get("partition", {}), "partition")
    if partition.np1 < 1 or partition.np2 < 1:
        raise ConfigurationError("np1 and np2 must be >= 1", key="partition")
    if partition.n_parts > mesh.nx * mesh.ny:
        raise ConfigurationError("more parts than elements", key="partition")
    if partition.node_assignment not in NODE_ASSIGNMENTS:
        raise ConfigurationError(f"expected one of {NODE_ASSIGNMENTS}",
                                 key="partition.node_assignment")

    hierarchy = _scalar_dataclass(HierarchyParams, data.get("hierarchy", {}), "hierarchy")
    try:
        hierarchy.validate()
    except ValueError as exc:
        raise ConfigurationError(str(exc), key="hierarchy") from None
    if hierarchy.agg_levels > hierarchy.max_levels:
        raise ConfigurationError("agg_levels exceeds max_levels", key="hierarchy.agg_levels")

    raw_solver = dict(data.get("solver", {}))
    preconditioner = raw_solver.pop("preconditioner", "masm_sub")
    solver = _scalar_dataclass(EigenSolveParams, raw_solver, "solver")
    if preconditioner not in PRECONDITIONERS:
        raise ConfigurationError(f"expected one of {PRECONDITIONERS}", key="solver.preconditioner")
    try:
        solver.validate()
    except ValueError as exc:
        raise ConfigurationError(str(exc), key="solver") from None

    output = _scalar_dataclass(OutputConfig, data.get("output", {}), "output")
    return RunConfig(mesh, materials, groups, directions, partition, hierarchy, solver,
                     preconditioner, output)


def load_config(path) -> RunConfig:
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(config: RunConfig) -> str:
    """TOML text with every default spelled out; parses back to an equal config."""
    mesh = dataclasses.asdict(config.mesh)
    if not mesh["regions"]:
        del mesh["regions"]
    data = {
        "mesh": mesh,
        "materials": {k: dataclasses.asdict(v) for k, v in config.materials.items()},
        "problem": {"groups": config.groups, "directions": config.directions},
        "partition": dataclasses.asdict(config.partition),
        "hierarchy": dataclasses.asdict(config.hierarchy),
        "solver": {"preconditioner": config.preconditioner, **dataclasses.asdict(config.solver)},
        "output": dataclasses.asdict(config.output),
    }
    return tomli_w.dumps(data)
