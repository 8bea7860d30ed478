"""Scenario orchestration: build geometry, run the coupled solve, write outputs."""

import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from . import fileio
from .config import load_config, write_effective_config
from .coupling import couple, match_pmjs
from .eikonal import ConductivityModel, MuscleStimulusSet, build_conductivity
from .mesh import FiberField, axis_aligned_fibers, build_structured_slab
from .network import apply_blocks, build_synthetic_tree, load_network

__all__ = ["RunSummary", "summarize", "run_scenario", "build_geometry"]

log = logging.getLogger(__name__)

MS = 1e3  # seconds -> milliseconds


@dataclass(frozen=True)
class RunSummary:
    mean_ms: float
    std_ms: float
    tat_ms: float  # total (latest) activation time
    eat_ms: float  # earliest activation time
    pmj_counts: dict  # keyed 'OO', 'OA', 'A', 'C'
    wall_time_s: float = 0.0
    iterations: int = 0

    def as_dict(self):
        return {
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
            "tat_ms": self.tat_ms,
            "eat_ms": self.eat_ms,
            "pmj_counts": dict(self.pmj_counts),
            "wall_time_s": self.wall_time_s,
            "iterations": self.iterations,
        }


def summarize(u_m, registry, wall_time_s=0.0, iterations=0):
    """Activation statistics (in ms) and junction counts by type.

    u_m is the per-vertex activation field in seconds; every vertex must
    be finite (a never-activated muscle is an error).
    """
    unreached = int(np.sum(~np.isfinite(u_m)))
    if unreached:
        raise ValueError(f"muscle never fully activated: {unreached} unreached vertices")
    u_ms = np.asarray(u_m) * MS
    counts = {t.value: c for t, c in registry.counts().items()}
    return RunSummary(
        mean_ms=float(np.mean(u_ms)),
        std_ms=float(np.std(u_ms)),
        tat_ms=float(np.max(u_ms)),
        eat_ms=float(np.min(u_ms)),
        pmj_counts=counts,
        wall_time_s=wall_time_s,
        iterations=iterations,
    )


def _load_fibers_file(mesh, path):
    data = np.loadtxt(path, ndmin=2)
    if data.shape != (mesh.n_cells, 9):
        raise ValueError(
            f"fiber file must have {mesh.n_cells} rows of 9 numbers (f s n triads)"
        )
    m = mesh.vertices.shape[1]
    return FiberField(data[:, 0:m], data[:, 3:3 + m], data[:, 6:6 + m])


def build_geometry(cfg, base_dir="."):
    """Materialize mesh, network (blocks applied), fibers from a config."""
    if cfg.slab is not None:
        mesh = build_structured_slab(cfg.slab.dim, cfg.slab.lengths, cfg.slab.divisions)
    else:
        mesh = fileio.load_mesh(os.path.join(base_dir, cfg.mesh_file), cfg.mesh_format)
    if cfg.tree is not None:
        t = cfg.tree
        network = build_synthetic_tree(
            depth=t.depth,
            segment_length=t.segment_length,
            branch_angle_deg=t.branch_angle_deg,
            root=t.root,
            initial_direction=t.initial_direction,
            length_decay=t.length_decay,
            angle_jitter_deg=t.angle_jitter_deg,
            seed=t.seed,
        )
        network = type(network)(
            nodes=network.nodes, edges=network.edges, lengths=network.lengths,
            c_p=cfg.c_p, avn_node=network.avn_node,
            terminal_nodes=network.terminal_nodes,
        )
    else:
        network = load_network(os.path.join(base_dir, cfg.network_file), c_p=cfg.c_p)
    if cfg.blocked_edges:
        network = apply_blocks(network, cfg.blocked_edges)
    if cfg.fiber_preset == "file":
        fibers = _load_fibers_file(mesh, os.path.join(base_dir, cfg.fiber_file))
    else:
        fibers = axis_aligned_fibers(mesh, cfg.fiber_axis)
    return mesh, network, fibers


def _muscular_stimuli(cfg, mesh):
    sets = [
        MuscleStimulusSet.from_sphere(mesh, s.center, s.radius, s.time, s.tag)
        for s in cfg.muscular_sources
    ]
    return MuscleStimulusSet.merge(*sets) if sets else MuscleStimulusSet(())


def _write_classification_csv(registry, history, path):
    with open(path, "w") as fh:
        fh.write("iteration,pmj_id,terminal,vertex,u_p_ms,u_m_ms,type\n")
        for it, snapshot in enumerate(history, start=1):
            for pid, (entry, (tp_type, tp, tm)) in enumerate(
                zip(registry.entries, snapshot)
            ):
                fh.write(
                    f"{it},{pid},{entry.terminal},{entry.vertex},"
                    f"{tp * MS:.9g},{tm * MS:.9g},{tp_type.value}\n"
                )


def _write_network_csv(network, u_p, path):
    with open(path, "w") as fh:
        fh.write("node,x,y,z,u_p_ms,winning_source\n")
        for k, p in enumerate(network.nodes):
            fh.write(
                f"{k},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},"
                f"{u_p.times[k] * MS:.9g},{u_p.winning_source[k]}\n"
            )


def run_scenario(config, base_dir=None, output_dir=None):
    """Execute a full scenario; returns (RunSummary, CouplingState).

    config may be a path or an already-validated ScenarioConfig.  Writes
    the activation field (VTK + CSV), junction classification CSV, network
    activation CSV, summary JSON and the echoed effective configuration.
    """
    if isinstance(config, (str, os.PathLike)):
        base_dir = os.path.dirname(os.path.abspath(config))
        cfg = load_config(config)
    else:
        cfg = config
        base_dir = base_dir or "."
    out_dir = output_dir or os.path.join(base_dir, cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)

    t_start = time.perf_counter()
    mesh, network, fibers = build_geometry(cfg, base_dir)
    sigma = build_conductivity(cfg.physics, fibers)
    registry = match_pmjs(network, mesh, cfg.d_o, cfg.d_a, snap_radius=cfg.snap_radius)
    sources = _muscular_stimuli(cfg, mesh)
    state = couple(
        network, mesh, sigma, cfg.physics.c_f, registry,
        avn_time=cfg.avn_time, muscular_sources=sources,
        n_max=cfg.n_max, options=cfg.solver, early_stop=cfg.early_stop,
    )
    wall = time.perf_counter() - t_start
    summary = summarize(state.u_m, state.registry, wall_time_s=wall,
                        iterations=state.iterations)

    write_effective_config(cfg, os.path.join(out_dir, "effective_config.toml"))
    fileio.write_vtk(
        mesh, os.path.join(out_dir, "activation.vtk"),
        point_data={"activation_time_ms": state.u_m * MS},
    )
    fileio.write_field_csv(mesh, state.u_m * MS, os.path.join(out_dir, "activation.csv"))
    _write_classification_csv(
        state.registry, state.history, os.path.join(out_dir, "pmj_classification.csv")
    )
    _write_network_csv(network, state.u_p, os.path.join(out_dir, "network_activation.csv"))
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info(
        "scenario done: mean %.1f ms, TAT %.1f ms, EAT %.1f ms, PMJs %s",
        summary.mean_ms, summary.tat_ms, summary.eat_ms, summary.pmj_counts,
    )
    return summary, state
