"""Scenario configuration: TOML parsing, validation, defaults, echoing.

A scenario file describes the geometry sources (mesh file or structured
slab; network file or synthetic tree), the fiber preset, the physical
parameters (defaulting to the standard conduction set: 0.6/0.4/0.2 m/s
front speeds, 4 m/s network velocity, 10/2 ms junction delays), the
stimulation protocol, conduction blocks, solver options and outputs.
"""

import os
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .eikonal import ConductivityModel, SolverOptions

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "write_effective_config"]


class ConfigError(ValueError):
    """Invalid scenario configuration; message names the offending field."""


@dataclass(frozen=True)
class SlabSpec:
    dim: int
    lengths: tuple
    divisions: tuple


@dataclass(frozen=True)
class TreeSpec:
    depth: int
    segment_length: float
    branch_angle_deg: float = 35.0
    root: tuple = (0.0, 0.0, 0.0)
    initial_direction: tuple = (1.0, 0.0, 0.0)
    length_decay: float = 0.75
    angle_jitter_deg: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SphericalSource:
    center: tuple
    radius: float  # meters
    time: float  # seconds
    tag: str = "ectopic"


@dataclass(frozen=True)
class ScenarioConfig:
    mesh_file: str | None = None
    mesh_format: str = "custom-text"
    slab: SlabSpec | None = None
    network_file: str | None = None
    tree: TreeSpec | None = None
    fiber_preset: str = "axis-aligned"
    fiber_axis: int = 0
    fiber_file: str | None = None
    physics: ConductivityModel = field(default_factory=ConductivityModel)
    c_p: float = 4.0
    d_o: float = 10e-3
    d_a: float = 2e-3
    avn_time: float = 0.0
    muscular_sources: tuple = ()
    blocked_edges: tuple = ()
    solver: SolverOptions = field(default_factory=SolverOptions)
    n_max: int = 3
    early_stop: bool = True
    snap_radius: float | None = None
    output_dir: str = "out"

    def validate(self, base_dir="."):
        if (self.mesh_file is None) == (self.slab is None):
            raise ConfigError("mesh: exactly one of 'file' or 'slab' is required")
        if (self.network_file is None) == (self.tree is None):
            raise ConfigError("network: exactly one of 'file' or 'tree' is required")
        for key, path in (("mesh.file", self.mesh_file),
                          ("network.file", self.network_file),
                          ("fibers.file", self.fiber_file)):
            if path is not None:
                full = os.path.join(base_dir, path)
                if not os.path.exists(full):
                    raise ConfigError(f"{key}: file not found: {full}")
        if self.fiber_preset not in ("axis-aligned", "file"):
            raise ConfigError("fibers.preset: must be 'axis-aligned' or 'file'")
        if self.fiber_preset == "file" and self.fiber_file is None:
            raise ConfigError("fibers.file: required with preset 'file'")
        if not self.d_o > self.d_a > 0:
            raise ConfigError("physics: delays must satisfy d_o > d_a > 0")
        if self.c_p <= 0:
            raise ConfigError("physics.c_p: must be positive")
        if self.n_max < 1:
            raise ConfigError("coupling.n_max: must be >= 1")
        for k, src in enumerate(self.muscular_sources):
            if src.radius <= 0:
                raise ConfigError(f"stimuli.muscular[{k}].radius: must be positive")
        return self


def _section(data, name):
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: must be a table")
    return sec


def _pick(sec, name, keys):
    unknown = set(sec) - set(keys)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}: unknown key")
    return {k: sec[k] for k in keys if k in sec}


def load_config(path):
    """Parse and validate a scenario file; returns a ScenarioConfig."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    mesh_sec = _section(data, "mesh")
    slab = None
    if "slab" in mesh_sec:
        s = mesh_sec["slab"]
        try:
            slab = SlabSpec(
                dim=int(s["dim"]),
                lengths=tuple(float(x) for x in s["lengths"]),
                divisions=tuple(int(x) for x in s["divisions"]),
            )
        except KeyError as exc:
            raise ConfigError(f"mesh.slab.{exc.args[0]}: missing") from None

    net_sec = _section(data, "network")
    tree = None
    if "tree" in net_sec:
        t = _pick(net_sec["tree"], "network.tree", [
            "depth", "segment_length", "branch_angle_deg", "root",
            "initial_direction", "length_decay", "angle_jitter_deg", "seed",
        ])
        if "depth" not in t or "segment_length" not in t:
            raise ConfigError("network.tree: depth and segment_length are required")
        for key in ("root", "initial_direction"):
            if key in t:
                t[key] = tuple(float(x) for x in t[key])
        tree = TreeSpec(**t)

    fib_sec = _section(data, "fibers")
    phys_sec = _pick(_section(data, "physics"), "physics", [
        "sigma_f", "sigma_s", "sigma_n", "chi_cm", "c_f", "c_p", "d_o", "d_a",
    ])
    try:
        physics = ConductivityModel(**{
            k: float(v) for k, v in phys_sec.items()
            if k in ("sigma_f", "sigma_s", "sigma_n", "chi_cm", "c_f")
        })
    except ValueError as exc:
        raise ConfigError(f"physics: {exc}") from exc

    stim_sec = _section(data, "stimuli")
    sources = []
    for k, s in enumerate(stim_sec.get("muscular", [])):
        s = _pick(s, f"stimuli.muscular[{k}]", ["center", "radius", "time", "tag"])
        try:
            sources.append(SphericalSource(
                center=tuple(float(x) for x in s["center"]),
                radius=float(s["radius"]),
                time=float(s["time"]),
                tag=str(s.get("tag", "ectopic")),
            ))
        except KeyError as exc:
            raise ConfigError(
                f"stimuli.muscular[{k}].{exc.args[0]}: missing"
            ) from None

    solver_sec = _pick(_section(data, "solver"), "solver", [
        "mode", "dt", "bdf_order", "newton_tol", "newton_max_iter",
        "steady_tol", "max_pseudo_steps", "grad_regularization", "u_init",
        "stabilization",
        "linear_solver", "linear_rtol", "accel_factor", "accel_max_ratio",
    ])
    try:
        solver = SolverOptions(**solver_sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    coup_sec = _pick(_section(data, "coupling"), "coupling", [
        "n_max", "early_stop", "snap_radius",
    ])
    out_sec = _pick(_section(data, "output"), "output", ["directory"])
    blocks = _section(data, "blocks").get("edges", [])

    cfg = ScenarioConfig(
        mesh_file=mesh_sec.get("file"),
        mesh_format=mesh_sec.get("format", "custom-text"),
        slab=slab,
        network_file=net_sec.get("file"),
        tree=tree,
        fiber_preset=fib_sec.get("preset", "axis-aligned"),
        fiber_axis=int(fib_sec.get("axis", 0)),
        fiber_file=fib_sec.get("file"),
        physics=physics,
        c_p=float(phys_sec.get("c_p", 4.0)),
        d_o=float(phys_sec.get("d_o", 10e-3)),
        d_a=float(phys_sec.get("d_a", 2e-3)),
        avn_time=float(stim_sec.get("avn_time", 0.0)),
        muscular_sources=tuple(sources),
        blocked_edges=tuple(int(e) for e in blocks),
        solver=solver,
        n_max=int(coup_sec.get("n_max", 3)),
        early_stop=bool(coup_sec.get("early_stop", True)),
        snap_radius=coup_sec.get("snap_radius"),
        output_dir=str(out_sec.get("directory", "out")),
    )
    return cfg.validate(base_dir=os.path.dirname(os.path.abspath(path)))


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)}")


def write_effective_config(cfg, path):
    """Echo the fully resolved configuration (defaults included)."""
    lines = []

    def table(name, mapping):
        items = {k: v for k, v in mapping.items() if v is not None}
        if not items:
            return
        lines.append(f"[{name}]")
        for k, v in items.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")

    mesh = {"file": cfg.mesh_file, "format": cfg.mesh_format if cfg.mesh_file else None}
    table("mesh", mesh)
    if cfg.slab is not None:
        table("mesh.slab", asdict(cfg.slab))
    table("network", {"file": cfg.network_file})
    if cfg.tree is not None:
        table("network.tree", asdict(cfg.tree))
    table("fibers", {
        "preset": cfg.fiber_preset,
        "axis": cfg.fiber_axis if cfg.fiber_preset == "axis-aligned" else None,
        "file": cfg.fiber_file,
    })
    table("physics", {
        **asdict(cfg.physics), "c_p": cfg.c_p, "d_o": cfg.d_o, "d_a": cfg.d_a,
    })
    table("stimuli", {"avn_time": cfg.avn_time})
    for src in cfg.muscular_sources:
        lines.append("[[stimuli.muscular]]")
        for k, v in asdict(src).items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    table("blocks", {"edges": list(cfg.blocked_edges)})
    table("solver", asdict(cfg.solver))
    table("coupling", {
        "n_max": cfg.n_max, "early_stop": cfg.early_stop,
        "snap_radius": cfg.snap_radius,
    })
    table("output", {"directory": cfg.output_dir})
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
