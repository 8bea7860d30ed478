"""Bidirectional network-muscle coupling at the fiber-muscle junctions.

Each junction pairs a terminal network node with a mesh vertex and is
classified per iteration from the two activation times and the junction
delays:

* antidromic  iff  u_p >= u_m + d_a   (muscle drives the network),
* orthodromic iff  u_p <= u_m - d_o   (network drives the muscle),
* collision otherwise (opposing fronts meet inside the delay window;
  nothing is transmitted).

Orthodromic junctions are sub-labeled by provenance: activated from the
network root (OO) or from a junction that was itself activated
antidromically (OA), the signature of a re-entrant circuit.  Ties use the
comparisons exactly as written above; an infinite time on one side forces
the opposite classification, infinite on both sides leaves a collision.
"""

import enum
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .eikonal import MuscleStimulusSet, SolverError, Stimulus, solve as solve_muscle
from .network import solve_network

__all__ = [
    "PmjType",
    "PmjEntry",
    "PmjRegistry",
    "CouplingState",
    "match_pmjs",
    "classify_pmjs",
    "couple",
]

log = logging.getLogger(__name__)

# Tie-breaking slack (seconds) for the delay-window comparisons.  A junction
# driving the muscle pins the vertex to exactly its own arrival plus the
# orthodromic delay; re-evaluating the boundary condition in floating point
# can then land an ulp on the wrong side and spuriously reclassify the
# junction as a collision.  One picosecond is many orders below the delays
# and the solver tolerances, and many orders above rounding at the
# millisecond scale.
_TIME_SLACK = 1e-12


class PmjType(enum.Enum):
    OO = "OO"  # orthodromic, activated from the network root
    OA = "OA"  # orthodromic, activated via antidromic propagation
    ANTIDROMIC = "A"
    COLLISION = "C"

    @property
    def is_orthodromic(self):
        return self in (PmjType.OO, PmjType.OA)


@dataclass(frozen=True)
class PmjEntry:
    terminal: int  # network node index
    vertex: int  # mesh vertex index
    d_o: float  # orthodromic delay, seconds
    d_a: float  # antidromic delay, seconds
    type: PmjType = PmjType.COLLISION
    distance: float = 0.0  # terminal-to-vertex pairing distance, meters

    def __post_init__(self):
        if not (self.d_o > self.d_a > 0):
            raise ValueError("delays must satisfy d_o > d_a > 0")


@dataclass(frozen=True)
class PmjRegistry:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        terms = [e.terminal for e in self.entries]
        verts = [e.vertex for e in self.entries]
        if len(set(terms)) != len(terms) or len(set(verts)) != len(verts):
            raise ValueError("junction pairings must be one-to-one")

    def __len__(self):
        return len(self.entries)

    def counts(self):
        out = {t: 0 for t in PmjType}
        for e in self.entries:
            out[e.type] += 1
        return out

    def types(self):
        return tuple(e.type for e in self.entries)


def match_pmjs(network, mesh, d_o, d_a, snap_radius=None):
    """Pair every network terminal with its nearest free mesh vertex.

    Conflicting terminals fall back to the next-nearest unclaimed vertex.
    A pairing farther than the snap radius (default twice the average mesh
    edge length) is an error.
    """
    if snap_radius is None:
        snap_radius = 2.0 * mesh.average_edge_length
    tree = cKDTree(mesh.vertices3)
    taken = set()
    entries = []
    nv = mesh.n_vertices
    for term in network.terminal_nodes:
        p = network.nodes[term]
        k = 1
        chosen = None
        while k <= nv:
            k = min(k, nv)
            dists, idxs = tree.query(p, k=k)
            dists, idxs = np.atleast_1d(dists), np.atleast_1d(idxs)
            for d, v in zip(dists, idxs):
                if int(v) not in taken:
                    chosen = (int(v), float(d))
                    break
            if chosen is not None:
                break
            k *= 2
        if chosen is None:
            raise ValueError(f"no free mesh vertex for terminal {term}")
        v, d = chosen
        if d > snap_radius:
            raise ValueError(
                f"terminal {term} is {d:.3e} m from the nearest free vertex, "
                f"beyond the snap radius {snap_radius:.3e} m"
            )
        taken.add(v)
        entries.append(
            PmjEntry(terminal=int(term), vertex=v, d_o=d_o, d_a=d_a, distance=d)
        )
    return PmjRegistry(tuple(entries))


def classify_pmjs(registry, u_p, u_m, avn_node):
    """Classify every junction from the current activation times.

    u_p is a network NodeActivation (times + winning source per node);
    u_m is the per-vertex muscle activation array (+inf allowed).
    """
    entries = []
    for e in registry.entries:
        tp = float(u_p.times[e.terminal])
        tm = float(u_m[e.vertex])
        if np.isinf(tp) and np.isinf(tm):
            new_type = PmjType.COLLISION
        elif tp >= tm + e.d_a - _TIME_SLACK:
            new_type = PmjType.ANTIDROMIC
        elif tp <= tm - e.d_o + _TIME_SLACK:
            src = int(u_p.winning_source[e.terminal])
            new_type = PmjType.OO if src == avn_node else PmjType.OA
        else:
            new_type = PmjType.COLLISION
        entries.append(replace(e, type=new_type))
    return PmjRegistry(tuple(entries))


@dataclass(frozen=True)
class CouplingState:
    u_p: object  # NodeActivation
    u_m: np.ndarray  # per-vertex muscle activation, seconds
    registry: PmjRegistry
    iterations: int
    history: tuple  # per-iteration classification snapshots
    fixed_point: bool  # classification unchanged over the last two iterations
    muscle_steps: int


def _orthodromic_stimuli(registry, u_p):
    out = []
    for e in registry.entries:
        if e.type.is_orthodromic and np.isfinite(u_p.times[e.terminal]):
            out.append(Stimulus(e.vertex, float(u_p.times[e.terminal]) + e.d_o, "pmj"))
    return out


def _antidromic_sources(registry, u_m):
    out = []
    for e in registry.entries:
        if e.type is PmjType.ANTIDROMIC and np.isfinite(u_m[e.vertex]):
            out.append((e.terminal, float(u_m[e.vertex]) + e.d_a))
    return out


def couple(
    network,
    mesh,
    sigma,
    c_f,
    registry,
    avn_time=0.0,
    muscular_sources=None,
    n_max=3,
    options=None,
    early_stop=True,
):
    """Fixed-point loop alternating the two activation solvers.

    Each iteration solves the muscle with the muscular sources plus the
    orthodromic junction stimuli (delayed by d_o), reclassifies, solves the
    network from the root plus the antidromic junctions (delayed by d_a),
    and reclassifies again.  Runs n_max iterations, stopping early when
    the classification repeats (unless disabled).
    """
    from .eikonal import SolverOptions

    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if options is None:
        options = SolverOptions()
    if muscular_sources is None:
        muscular_sources = MuscleStimulusSet(())
    avn = network.avn_node

    u_p = solve_network(network, [(avn, avn_time)])
    u_m = np.full(mesh.n_vertices, np.inf)
    registry = classify_pmjs(registry, u_p, u_m, avn)
    history = []
    muscle_steps = 0
    iterations = 0
    for i in range(n_max):
        iterations = i + 1
        stim = MuscleStimulusSet(
            tuple(muscular_sources.entries) + tuple(_orthodromic_stimuli(registry, u_p))
        )
        if len(stim) == 0:
            # fully blocked network with no muscular sources: nothing to solve
            u_m = np.full(mesh.n_vertices, np.inf)
        else:
            try:
                result = solve_muscle(mesh, sigma, c_f, stim, options)
            except SolverError as exc:
                raise type(exc)(
                    f"muscle solve failed at coupling iteration {iterations}: {exc}"
                ) from exc
            u_m = result.times
            muscle_steps += result.steps
        registry = classify_pmjs(registry, u_p, u_m, avn)
        sources = [(avn, avn_time)] + _antidromic_sources(registry, u_m)
        u_p = solve_network(network, sources)
        registry = classify_pmjs(registry, u_p, u_m, avn)
        history.append(
            tuple(
                (e.type, float(u_p.times[e.terminal]), float(u_m[e.vertex]))
                for e in registry.entries
            )
        )
        log.info(
            "coupling iteration %d: %s",
            iterations,
            {t.value: c for t, c in registry.counts().items()},
        )
        types_now = tuple(t for t, _, _ in history[-1])
        if len(history) >= 2:
            types_prev = tuple(t for t, _, _ in history[-2])
            if early_stop and types_now == types_prev:
                break
    fixed_point = len(history) >= 2 and tuple(
        t for t, _, _ in history[-1]
    ) == tuple(t for t, _, _ in history[-2])
    return CouplingState(
        u_p=u_p,
        u_m=u_m,
        registry=registry,
        iterations=iterations,
        history=tuple(history),
        fixed_point=fixed_point,
        muscle_steps=muscle_steps,
    )
