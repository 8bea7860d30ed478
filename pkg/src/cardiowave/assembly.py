"""Sparse P1 finite-element assembly on simplicial meshes.

One-point quadrature is exact for the stiffness of affine elements with
per-cell constant tensors; the mass uses the vertex rule (lumped), which
keeps the reaction block diagonal.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from . import kernels

__all__ = ["AssemblyWorkspace", "assemble_operator", "assemble_stiffness"]

_SYM_TOL = 1e-10


@dataclass(frozen=True)
class AssemblyWorkspace:
    """Precomputed per-cell data shared by repeated assemblies on one mesh."""

    mesh: object
    sigma: np.ndarray  # (nc, m, m) per-cell tensors
    stiffness: csr_matrix
    lumped_mass: np.ndarray
    coo_rows: np.ndarray
    coo_cols: np.ndarray
    cell_weights: np.ndarray  # |c| / (dim+1)

    def scatter(self, blocks):
        """Assemble (nc, nl, nl) per-cell blocks into a CSR matrix."""
        nv = self.mesh.n_vertices
        return coo_matrix(
            (blocks.ravel(), (self.coo_rows, self.coo_cols)), shape=(nv, nv)
        ).tocsr()


def _check_sigma(sigma, ambient, n_cells):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        sigma = np.broadcast_to(np.eye(ambient) * float(sigma), (n_cells, ambient, ambient))
    elif sigma.ndim == 2:
        sigma = np.broadcast_to(sigma, (n_cells, ambient, ambient))
    if sigma.shape != (n_cells, ambient, ambient):
        raise ValueError(f"tensor field must have shape ({n_cells}, {ambient}, {ambient})")
    scale = np.max(np.abs(sigma)) + 1e-300
    if np.max(np.abs(sigma - np.swapaxes(sigma, 1, 2))) > _SYM_TOL * scale:
        raise ValueError("conductivity tensor is not symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (sigma + np.swapaxes(sigma, 1, 2)))
    if np.min(eigs) < -_SYM_TOL * scale:
        raise ValueError("conductivity tensor is indefinite")
    return np.ascontiguousarray(sigma)


def assemble_stiffness(mesh, sigma):
    """Anisotropic stiffness K[i,j] = sum_c |c| grad_i . Sigma_c grad_j."""
    sigma = _check_sigma(sigma, mesh.vertices.shape[1], mesh.n_cells)
    blocks = kernels.stiffness_cell_values(
        mesh.basis_gradients, sigma, mesh.measures
    )
    nl = mesh.dim + 1
    rows = np.repeat(mesh.cells, nl, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nl)).ravel()
    nv = mesh.n_vertices
    K = coo_matrix((blocks.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    return K, rows, cols, sigma


def assemble_operator(mesh, sigma, reaction_coefficient=0.0):
    """Reaction-diffusion operator diag(r * m_lumped) + K with workspace.

    sigma may be a scalar, a single (m, m) tensor, or a per-cell field.
    reaction_coefficient is a scalar or a per-vertex array.
    """
    K, rows, cols, sigma = assemble_stiffness(mesh, sigma)
    m = mesh.lumped_mass
    r = np.broadcast_to(np.asarray(reaction_coefficient, dtype=float), m.shape)
    A = K + csr_matrix(
        (r * m, (np.arange(mesh.n_vertices), np.arange(mesh.n_vertices))),
        shape=K.shape,
    )
    workspace = AssemblyWorkspace(
        mesh=mesh,
        sigma=sigma,
        stiffness=K,
        lumped_mass=m,
        coo_rows=rows,
        coo_cols=cols,
        cell_weights=mesh.measures / (mesh.dim + 1),
    )
    return A, workspace
