"""Purkinje conduction network: weighted graph Eikonal solve and utilities.

Activation is the classic multi-source shortest-path problem: along an
edge the front travels at the network conduction velocity, so arrival
times are graph distances divided by that velocity, offset by the source
times.  The solver also records, per node, which source won the
relaxation; the coupling layer uses that provenance to distinguish
junctions activated from the root from junctions activated by re-entrant
propagation.
"""

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "NetworkError",
    "ConductionNetwork",
    "NodeActivation",
    "NetworkSourceSet",
    "solve_network",
    "apply_blocks",
    "build_synthetic_tree",
    "load_network",
    "save_network",
]

_GEOMETRY_TOL = 1e-9


class NetworkError(ValueError):
    """Invalid network topology, geometry or source set."""


@dataclass(frozen=True)
class ConductionNetwork:
    """Weighted fiber graph with a root node and terminal junction markers."""

    nodes: np.ndarray  # (nn, 3), meters
    edges: np.ndarray  # (ne, 2) node indices
    lengths: np.ndarray  # (ne,), meters
    c_p: float  # conduction velocity, m/s
    avn_node: int
    terminal_nodes: np.ndarray
    blocked_edges: frozenset = field(default_factory=frozenset)
    geometric_lengths: bool = True  # False when lengths were given explicitly

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.atleast_2d(self.nodes), dtype=float)
        edges = np.ascontiguousarray(self.edges, dtype=np.int64)
        lengths = np.ascontiguousarray(self.lengths, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(
            self, "terminal_nodes", np.asarray(self.terminal_nodes, dtype=np.int64)
        )
        object.__setattr__(self, "blocked_edges", frozenset(self.blocked_edges))
        self._validate()

    def _validate(self):
        nn, ne = self.nodes.shape[0], self.edges.shape[0]
        if self.nodes.shape[1] != 3:
            raise NetworkError("node coordinates must be 3D")
        if not np.all(np.isfinite(self.nodes)):
            raise NetworkError("non-finite node coordinate")
        if ne and (self.edges.min() < 0 or self.edges.max() >= nn):
            raise NetworkError("edge references node index outside range")
        if self.lengths.shape != (ne,):
            raise NetworkError("one length per edge required")
        if np.any(self.lengths <= 0):
            raise NetworkError("edge lengths must be positive")
        if self.c_p <= 0:
            raise NetworkError("conduction velocity must be positive")
        if self.geometric_lengths and ne:
            d = np.linalg.norm(
                self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]], axis=1
            )
            if np.any(np.abs(d - self.lengths) > _GEOMETRY_TOL):
                raise NetworkError("edge length disagrees with node geometry")
        for e in self.blocked_edges:
            if not 0 <= e < ne:
                raise NetworkError(f"blocked edge index {e} out of range")
        if not 0 <= self.avn_node < nn:
            raise NetworkError("root node index out of range")
        degree = np.zeros(nn, dtype=int)
        np.add.at(degree, self.edges.ravel(), 1)
        for t in self.terminal_nodes:
            if not 0 <= t < nn:
                raise NetworkError(f"terminal node {t} out of range")
            if degree[t] != 1:
                raise NetworkError(f"terminal node {t} does not have degree 1")
        if self.avn_node in set(self.terminal_nodes.tolist()):
            raise NetworkError("root node cannot be a terminal")

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    def adjacency(self):
        """Neighbor lists excluding blocked edges: node -> [(nbr, delay_s)]."""
        adj = [[] for _ in range(self.n_nodes)]
        for k, (a, b) in enumerate(self.edges):
            if k in self.blocked_edges:
                continue
            w = self.lengths[k] / self.c_p
            adj[a].append((int(b), w))
            adj[b].append((int(a), w))
        return adj


@dataclass(frozen=True)
class NodeActivation:
    """Per-node activation times (seconds, +inf if unreached) and the
    winning source node of each reached node."""

    times: np.ndarray
    winning_source: np.ndarray  # source node index, -1 if unreached


@dataclass(frozen=True)
class NetworkSourceSet:
    """Prescribed activation times at network nodes."""

    entries: tuple  # of (node, time_s)

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple((int(n), float(t)) for n, t in self.entries)
        )
        for _, t in self.entries:
            if not np.isfinite(t):
                raise NetworkError("source time must be finite")


def solve_network(network, sources):
    """Multi-source shortest-path activation of the network.

    times[v] = min over sources s of t0(s) + dist(s, v) / c_p.  A source
    whose prescribed time exceeds its arrival from another source is
    overridden.  Ties break toward the lowest node index for determinism.
    """
    if isinstance(sources, NetworkSourceSet):
        entries = sources.entries
    else:
        entries = tuple((int(n), float(t)) for n, t in sources)
    if not entries:
        raise NetworkError("empty source set")
    nn = network.n_nodes
    for n, _ in entries:
        if not 0 <= n < nn:
            raise NetworkError(f"source node {n} out of range")
    adj = network.adjacency()
    times = np.full(nn, np.inf)
    origin = np.full(nn, -1, dtype=np.int64)
    heap = []
    for n, t in sorted(entries, key=lambda e: (e[1], e[0])):
        if t < times[n]:
            times[n] = t
            origin[n] = n
            heapq.heappush(heap, (t, n, n))
    settled = np.zeros(nn, dtype=bool)
    while heap:
        t, node, src = heapq.heappop(heap)
        if settled[node] or t > times[node]:
            continue
        settled[node] = True
        for nbr, w in adj[node]:
            cand = t + w
            if cand < times[nbr] or (cand == times[nbr] and src < origin[nbr]):
                times[nbr] = cand
                origin[nbr] = src
                heapq.heappush(heap, (cand, nbr, src))
    return NodeActivation(times=times, winning_source=origin)


def apply_blocks(network, edges):
    """Return a copy of the network with the given edges disconnected."""
    edges = {int(e) for e in edges}
    for e in edges:
        if not 0 <= e < network.edges.shape[0]:
            raise NetworkError(f"invalid edge index {e}")
    return replace(network, blocked_edges=network.blocked_edges | edges)


def build_synthetic_tree(
    depth,
    segment_length,
    branch_angle_deg=35.0,
    root=(0.0, 0.0, 0.0),
    initial_direction=(1.0, 0.0, 0.0),
    length_decay=0.75,
    angle_jitter_deg=0.0,
    seed=0,
):
    """Planar binary branching tree rooted at the AV-node analog.

    Deterministic for a fixed seed; branches live in the plane spanned by
    the initial direction and its in-plane normal (z = root z).  Leaves are
    marked as terminals.
    """
    if depth < 1:
        raise NetworkError("tree depth must be >= 1")
    if segment_length <= 0:
        raise NetworkError("segment length must be positive")
    rng = np.random.default_rng(seed)
    root = np.asarray(root, dtype=float)
    d0 = np.asarray(initial_direction, dtype=float)
    d0 = d0 / np.linalg.norm(d0)
    nodes = [root]
    edges = []
    # (node index, position, heading angle in the plane, level)
    theta0 = np.arctan2(d0[1], d0[0])
    frontier = [(0, root, theta0)]
    for level in range(depth):
        seg = segment_length * length_decay**level
        spread = np.deg2rad(branch_angle_deg)
        nxt = []
        for parent_idx, pos, theta in frontier:
            for sign in (+1.0, -1.0):
                jitter = (
                    np.deg2rad(angle_jitter_deg) * rng.uniform(-1.0, 1.0)
                    if angle_jitter_deg
                    else 0.0
                )
                ang = theta + sign * spread + jitter
                new = pos + seg * np.array([np.cos(ang), np.sin(ang), 0.0])
                idx = len(nodes)
                nodes.append(new)
                edges.append((parent_idx, idx))
                nxt.append((idx, new, ang))
        frontier = nxt
    nodes = np.asarray(nodes)
    edges = np.asarray(edges)
    lengths = np.linalg.norm(nodes[edges[:, 1]] - nodes[edges[:, 0]], axis=1)
    terminals = np.asarray([i for i, _, _ in frontier])
    return ConductionNetwork(
        nodes=nodes,
        edges=edges,
        lengths=lengths,
        c_p=4.0,
        avn_node=0,
        terminal_nodes=terminals,
    )


def load_network(path, c_p=None):
    """Read the network text format.

    Header ``nn ne c_p avn``, nn coordinate lines, ne edge lines
    ``a b [length]`` (length defaults to the Euclidean distance), then a
    trailing ``terminals: i j k ...`` line.
    """
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise NetworkError(f"{path}: empty network file")
    nn, ne = int(rows[0][0]), int(rows[0][1])
    file_cp, avn = float(rows[0][2]), int(rows[0][3])
    nodes = np.asarray([[float(t) for t in r] for r in rows[1 : 1 + nn]])
    edges = []
    lengths = []
    explicit = False
    for r in rows[1 + nn : 1 + nn + ne]:
        a, b = int(r[0]), int(r[1])
        edges.append((a, b))
        if len(r) > 2:
            lengths.append(float(r[2]))
            explicit = True
        else:
            lengths.append(float(np.linalg.norm(nodes[b] - nodes[a])))
    if len(rows) <= 1 + nn + ne:
        raise NetworkError(f"{path}: missing terminals line")
    term_row = rows[1 + nn + ne]
    if term_row[0].rstrip(":") != "terminals":
        raise NetworkError(f"{path}: missing terminals line")
    terminals = [int(t) for t in term_row[1:]]
    return ConductionNetwork(
        nodes=nodes,
        edges=np.asarray(edges),
        lengths=np.asarray(lengths),
        c_p=file_cp if c_p is None else c_p,
        avn_node=avn,
        terminal_nodes=np.asarray(terminals, dtype=np.int64),
        geometric_lengths=not explicit,
    )


def save_network(network, path):
    with open(path, "w") as fh:
        fh.write(
            f"{network.n_nodes} {network.edges.shape[0]} "
            f"{network.c_p:.17g} {network.avn_node}\n"
        )
        for p in network.nodes:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for (a, b), ln in zip(network.edges, network.lengths):
            if network.geometric_lengths:
                fh.write(f"{a} {b}\n")
            else:
                fh.write(f"{a} {b} {ln:.17g}\n")
        fh.write("terminals: " + " ".join(str(t) for t in network.terminal_nodes) + "\n")
