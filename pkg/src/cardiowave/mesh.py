"""Simplicial meshes (lines, triangles, tetrahedra) and nodal/fiber fields.

Meshes are immutable after construction.  Geometry needed by the FEM
assembly (cell measures, P1 basis gradients, lumped vertex masses) is
computed lazily and cached.  Vertices may be embedded in a higher
dimensional space than the topological dimension (e.g. a line mesh with 3D
coordinates); gradients are then taken in the ambient space via the
pseudo-inverse of the edge matrix.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "MeshError",
    "SimplicialMesh",
    "FiberField",
    "build_structured_slab",
    "axis_aligned_fibers",
]

_DEGENERACY_REL_TOL = 1e-12


class MeshError(ValueError):
    """Raised for invalid mesh topology or geometry."""


@dataclass(frozen=True)
class SimplicialMesh:
    """Conforming simplicial mesh of topological dimension 1, 2 or 3."""

    dim: int
    vertices: np.ndarray  # (nv, ambient_dim), meters
    cells: np.ndarray  # (nc, dim+1) vertex indices
    boundary_tags: np.ndarray | None = field(default=None)

    def __post_init__(self):
        vertices = np.ascontiguousarray(np.atleast_2d(self.vertices), dtype=float)
        if vertices.ndim != 2:
            raise MeshError("vertex array must be two-dimensional")
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "cells", cells)
        self._validate()

    def _validate(self):
        if self.dim not in (1, 2, 3):
            raise MeshError(f"unsupported topological dimension {self.dim}")
        nv = self.vertices.shape[0]
        if self.vertices.shape[1] < self.dim:
            raise MeshError("ambient dimension smaller than topological dimension")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinate")
        if self.cells.ndim != 2 or self.cells.shape[1] != self.dim + 1:
            raise MeshError(f"cells must have {self.dim + 1} vertices each")
        if self.cells.shape[0] == 0:
            raise MeshError("mesh has no cells")
        if self.cells.min() < 0 or self.cells.max() >= nv:
            bad = int(np.argmax((self.cells < 0) | (self.cells >= nv)))
            raise MeshError(
                f"cell {bad // (self.dim + 1)} references vertex index outside "
                f"[0, {nv})"
            )
        # Orientation fix-up: flip cells with negative signed measure, then
        # reject degenerate ones.
        signed = self._signed_or_unsigned_measures()
        scale = np.max(np.abs(self.vertices)) + 1.0
        tol = _DEGENERACY_REL_TOL * scale**self.dim
        if np.any(np.abs(signed) <= tol):
            raise MeshError(f"degenerate cell {int(np.argmin(np.abs(signed)))}")
        if self.vertices.shape[1] == self.dim:
            flip = signed < 0
            if np.any(flip):
                cells = self.cells.copy()
                cells[flip, 0], cells[flip, 1] = cells[flip, 1], cells[flip, 0]
                object.__setattr__(self, "cells", cells)
        if self._n_components() != 1:
            raise MeshError("mesh is not connected")
        if self.boundary_tags is not None and len(self.boundary_tags) != nv:
            raise MeshError("boundary_tags length must equal vertex count")

    def _signed_or_unsigned_measures(self):
        x = self.vertices[self.cells]
        edges = x[:, 1:, :] - x[:, :1, :]
        fact = float(np.prod(range(1, self.dim + 1)))
        if self.vertices.shape[1] == self.dim:
            return np.linalg.det(edges) / fact
        gram = np.einsum("cid,cjd->cij", edges, edges)
        return np.sqrt(np.maximum(np.linalg.det(gram), 0.0)) / fact

    def _n_components(self):
        nv = self.vertices.shape[0]
        i = np.repeat(self.cells[:, 0], self.dim)
        j = self.cells[:, 1:].ravel()
        adj = coo_matrix((np.ones(i.size), (i, j)), shape=(nv, nv))
        n, _ = connected_components(adj, directed=False)
        return n

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @cached_property
    def measures(self):
        """Unsigned cell measures (length / area / volume)."""
        return np.abs(self._signed_or_unsigned_measures())

    @cached_property
    def basis_gradients(self):
        """P1 basis gradients per cell, shape (nc, dim+1, ambient_dim)."""
        x = self.vertices[self.cells]
        edges = x[:, 1:, :] - x[:, :1, :]  # (nc, dim, m)
        gram = np.einsum("cid,cjd->cij", edges, edges)
        ginv = np.linalg.inv(gram)
        # rows of pinv(E): gradients of barycentric coordinates 1..dim
        grads_rest = np.einsum("cij,cjd->cid", ginv, edges)
        grads = np.empty((self.n_cells, self.dim + 1, self.vertices.shape[1]))
        grads[:, 1:, :] = grads_rest
        grads[:, 0, :] = -grads_rest.sum(axis=1)
        return grads

    @cached_property
    def lumped_mass(self):
        """Vertex-rule mass per vertex: sum of |c|/(dim+1) over incident cells."""
        m = np.zeros(self.n_vertices)
        np.add.at(m, self.cells, (self.measures / (self.dim + 1))[:, None])
        return m

    @cached_property
    def edges(self):
        """Unique vertex-pair edges (ne, 2), sorted indices."""
        nl = self.dim + 1
        pairs = []
        for a in range(nl):
            for b in range(a + 1, nl):
                pairs.append(self.cells[:, (a, b)])
        e = np.vstack(pairs)
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def average_edge_length(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.mean(np.linalg.norm(d, axis=1)))

    @cached_property
    def diameter(self):
        """Bounding-box diagonal, an upper bound on vertex distances."""
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(span))

    @cached_property
    def vertices3(self):
        """Vertex coordinates zero-padded to 3 columns."""
        v = np.zeros((self.n_vertices, 3))
        v[:, : self.vertices.shape[1]] = self.vertices[:, :3]
        return v

    @cached_property
    def boundary_vertices(self):
        """Indices of vertices on the mesh boundary (facet-based)."""
        nl = self.dim + 1
        facets = []
        for drop in range(nl):
            keep = [k for k in range(nl) if k != drop]
            facets.append(np.sort(self.cells[:, keep], axis=1))
        f = np.vstack(facets)
        uniq, counts = np.unique(f, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1])


@dataclass(frozen=True)
class FiberField:
    """Per-cell orthonormal triads (fiber, sheet, normal directions).

    For topological dimension < 3 the unused directions are zero vectors
    and the corresponding conductivities do not contribute.
    """

    f0: np.ndarray  # (nc, m)
    s0: np.ndarray
    n0: np.ndarray

    def __post_init__(self):
        f0 = np.ascontiguousarray(self.f0, dtype=float)
        s0 = np.ascontiguousarray(self.s0, dtype=float)
        n0 = np.ascontiguousarray(self.n0, dtype=float)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "n0", n0)
        if not (f0.shape == s0.shape == n0.shape):
            raise ValueError("triad arrays must share a shape")
        self.validate(tol=1e-10)

    def validate(self, tol):
        vecs = (self.f0, self.s0, self.n0)
        for k, v in enumerate(vecs):
            norms = np.linalg.norm(v, axis=1)
            used = norms > 0.5
            if k == 0 and not np.all(used):
                raise ValueError("fiber direction must be a unit vector")
            if np.any(np.abs(norms[used] - 1.0) > tol):
                raise ValueError("triad vector is not unit length")
        for a in range(3):
            for b in range(a + 1, 3):
                dots = np.einsum("cd,cd->c", vecs[a], vecs[b])
                if np.any(np.abs(dots) > tol):
                    raise ValueError("triad vectors are not orthogonal")


def axis_aligned_fibers(mesh, fiber_axis=0):
    """Constant triad aligned with the coordinate axes.

    The fiber direction is ``fiber_axis``; sheet and normal directions take
    the remaining axes in increasing order (zero-filled beyond the mesh's
    ambient dimension).
    """
    m = mesh.vertices.shape[1]
    if fiber_axis >= m:
        raise ValueError(f"fiber axis {fiber_axis} outside ambient dimension {m}")
    axes = [fiber_axis] + [a for a in range(3) if a != fiber_axis]
    vecs = []
    for a in axes:
        v = np.zeros((mesh.n_cells, m))
        if a < m:
            v[:, a] = 1.0
        vecs.append(v)
    # zero out directions beyond the topological dimension
    for k in range(mesh.dim, 3):
        vecs[k][:] = 0.0
    return FiberField(*vecs)


def build_structured_slab(dim, lengths, divisions):
    """Structured simplicial subdivision of a box.

    lengths and divisions are per-axis (length dim).  Quads split into two
    triangles, hexahedra into six tetrahedra (Kuhn subdivision).
    """
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    divisions = np.atleast_1d(np.asarray(divisions, dtype=np.int64))
    if len(lengths) != dim or len(divisions) != dim:
        raise MeshError("lengths and divisions must have one entry per axis")
    if np.any(divisions < 1):
        raise MeshError("divisions must be >= 1 per axis")
    if np.any(lengths <= 0):
        raise MeshError("lengths must be > 0")
    axes = [np.linspace(0.0, lengths[a], divisions[a] + 1) for a in range(dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([g.ravel() for g in grids])
    shape = tuple(divisions + 1)

    def vid(idx):
        return np.ravel_multi_index(idx, shape)

    cells = []
    if dim == 1:
        for i in range(divisions[0]):
            cells.append((i, i + 1))
    elif dim == 2:
        for i in range(divisions[0]):
            for j in range(divisions[1]):
                v00 = vid((i, j))
                v10 = vid((i + 1, j))
                v01 = vid((i, j + 1))
                v11 = vid((i + 1, j + 1))
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
    else:
        # Kuhn: six tetrahedra along vertex-ordering chains of the cube
        import itertools

        for i in range(divisions[0]):
            for j in range(divisions[1]):
                for k in range(divisions[2]):
                    base = np.array((i, j, k))
                    for perm in itertools.permutations(range(3)):
                        chain = [base.copy()]
                        for p in perm:
                            nxt = chain[-1].copy()
                            nxt[p] += 1
                            chain.append(nxt)
                        cells.append(tuple(vid(tuple(c)) for c in chain))
    return SimplicialMesh(dim=dim, vertices=vertices, cells=np.asarray(cells))
