"""Command-line front end.

Exit codes: 0 success, 2 configuration/validation error, 3 solver failure.
Log verbosity is controlled by the CARDIOWAVE_LOG environment variable
(DEBUG, INFO, WARNING, ...).
"""

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import fileio
from .config import ConfigError, load_config
from .eikonal import SolverError
from .mesh import MeshError, build_structured_slab
from .network import NetworkError, build_synthetic_tree, load_network, save_network

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


def _setup_logging():
    level = os.environ.get("CARDIOWAVE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _apply_overrides(cfg, args):
    changes = {}
    if args.mode is not None:
        changes["solver"] = dataclasses.replace(cfg.solver, mode=args.mode)
    if args.n_max is not None:
        changes["n_max"] = args.n_max
    if args.seed is not None and cfg.tree is not None:
        changes["tree"] = dataclasses.replace(cfg.tree, seed=args.seed)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _cmd_run(args):
    from .runner import run_scenario

    cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    if args.threads is not None and args.threads > 0:
        try:
            import numba

            numba.set_num_threads(args.threads)
        except (ImportError, ValueError):
            pass
    base_dir = os.path.dirname(os.path.abspath(args.config))
    summary, state = run_scenario(cfg, base_dir=base_dir, output_dir=args.output_dir)
    print(f"iterations: {summary.iterations} (fixed point: {state.fixed_point})")
    print(f"mean activation: {summary.mean_ms:.9g} ms (std {summary.std_ms:.9g})")
    print(f"TAT: {summary.tat_ms:.9g} ms  EAT: {summary.eat_ms:.9g} ms")
    counts = summary.pmj_counts
    print(
        f"PMJs: OO {counts['OO']}  OA {counts['OA']}  "
        f"A {counts['A']}  C {counts['C']}"
    )
    return EXIT_OK


def _cmd_validate(args):
    load_config(args.config)
    print(f"{args.config}: OK")
    return EXIT_OK


def _cmd_mesh_info(args):
    mesh = fileio.load_mesh(args.mesh, args.format)
    print(f"dim: {mesh.dim}")
    print(f"vertices: {mesh.n_vertices}")
    print(f"cells: {mesh.n_cells}")
    print(f"total measure: {mesh.measures.sum():.9g}")
    print(f"average edge length: {mesh.average_edge_length:.9g} m")
    print(f"bounding-box diagonal: {mesh.diameter:.9g} m")
    return EXIT_OK


def _cmd_network_info(args):
    net = load_network(args.network)
    degree = np.zeros(net.n_nodes, dtype=int)
    np.add.at(degree, net.edges.ravel(), 1)
    print(f"nodes: {net.n_nodes}")
    print(f"edges: {net.edges.shape[0]} (blocked: {len(net.blocked_edges)})")
    print(f"conduction velocity: {net.c_p:.9g} m/s")
    print(f"root node: {net.avn_node}")
    print(f"terminals: {len(net.terminal_nodes)}")
    print(f"total fiber length: {net.lengths.sum():.9g} m")
    return EXIT_OK


def _cmd_gen_slab(args):
    mesh = build_structured_slab(args.dim, args.lengths, args.divisions)
    fileio.save_mesh_text(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_vertices} vertices, {mesh.n_cells} cells")
    return EXIT_OK


def _cmd_gen_tree(args):
    net = build_synthetic_tree(
        depth=args.depth,
        segment_length=args.segment_length,
        branch_angle_deg=args.branch_angle,
        root=tuple(args.root),
        length_decay=args.length_decay,
        angle_jitter_deg=args.angle_jitter,
        seed=args.seed if args.seed is not None else 0,
    )
    save_network(net, args.output)
    print(
        f"wrote {args.output}: {net.n_nodes} nodes, "
        f"{len(net.terminal_nodes)} terminals"
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cardiowave",
        description="Coupled conduction-network / muscle activation solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario config")
    run.add_argument("config")
    run.add_argument("--mode", choices=["novel", "classic"])
    run.add_argument("--n-max", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--output-dir")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="validate a scenario config")
    val.add_argument("config")
    val.set_defaults(func=_cmd_validate)

    mi = sub.add_parser("mesh-info", help="print mesh statistics")
    mi.add_argument("mesh")
    mi.add_argument("--format", default="custom-text",
                    choices=["custom-text", "legacy-vtk-ascii"])
    mi.set_defaults(func=_cmd_mesh_info)

    ni = sub.add_parser("network-info", help="print network statistics")
    ni.add_argument("network")
    ni.set_defaults(func=_cmd_network_info)

    gs = sub.add_parser("gen-slab", help="generate a structured slab mesh")
    gs.add_argument("--dim", type=int, required=True, choices=[1, 2, 3])
    gs.add_argument("--lengths", type=float, nargs="+", required=True)
    gs.add_argument("--divisions", type=int, nargs="+", required=True)
    gs.add_argument("--output", required=True)
    gs.set_defaults(func=_cmd_gen_slab)

    gt = sub.add_parser("gen-tree", help="generate a synthetic branching network")
    gt.add_argument("--depth", type=int, required=True)
    gt.add_argument("--segment-length", type=float, required=True)
    gt.add_argument("--branch-angle", type=float, default=35.0)
    gt.add_argument("--root", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    gt.add_argument("--length-decay", type=float, default=0.75)
    gt.add_argument("--angle-jitter", type=float, default=0.0)
    gt.add_argument("--seed", type=int)
    gt.add_argument("--output", required=True)
    gt.set_defaults(func=_cmd_gen_tree)

    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError, NetworkError, fileio.ParseError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
