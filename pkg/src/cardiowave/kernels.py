"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

The fallback is selected by setting the environment variable
``CARDIOWAVE_NO_NUMBA=1`` before import (or automatically when numba is
unavailable).  Both paths produce identical results up to floating-point
associativity; the numba path loops per cell, the numpy path uses einsum.

Kernels covered here are the per-Newton-iteration costs of the nonlinear
front solver: scattering per-cell anisotropic stiffness/gradient data into
residual and Jacobian arrays.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("CARDIOWAVE_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

__all__ = [
    "USE_NUMBA",
    "stiffness_cell_values",
    "eikonal_terms",
    "stiffness_cell_values_numpy",
    "eikonal_terms_numpy",
]


def stiffness_cell_values_numpy(grads, sigma, measures):
    """Per-cell stiffness blocks K_c[i,j] = |c| grad_i . Sigma_c grad_j.

    grads: (nc, nl, d) P1 basis gradients, sigma: (nc, d, d), measures: (nc,).
    Returns (nc, nl, nl) dense blocks ready for COO scatter.
    """
    sg = np.einsum("cde,cie->cid", sigma, grads)
    blocks = np.einsum("cid,cjd->cij", grads, sg)
    return blocks * measures[:, None, None]


def eikonal_terms_numpy(u, cells, grads, sigma, weights, eps):
    """Nonlinear front-term residual and Jacobian data at state u.

    Per cell c with constant gradient g = sum_j u_j grad_j:
        q_c   = sqrt(g . Sigma_c g + eps)
        res_i += w_c q_c                      (vertex quadrature weight w_c)
        jac[i,j] += w_c (Sigma_c g) . grad_j / q_c

    Returns (residual (nv,), jac_blocks (nc, nl, nl), q (nc,)).
    """
    nv = u.shape[0]
    g = np.einsum("cl,cld->cd", u[cells], grads)
    sg = np.einsum("cde,ce->cd", sigma, g)
    q = np.sqrt(np.einsum("cd,cd->c", g, sg) + eps)
    res = np.zeros(nv)
    np.add.at(res, cells, (weights * q)[:, None])
    dq = np.einsum("cld,cd->cl", grads, sg) / q[:, None]
    nl = cells.shape[1]
    jac = np.broadcast_to((weights[:, None] * dq)[:, None, :], (cells.shape[0], nl, nl)).copy()
    return res, jac, q


if USE_NUMBA:

    @njit(cache=True)
    def _stiffness_cell_values_nb(grads, sigma, measures):
        nc, nl, d = grads.shape
        blocks = np.zeros((nc, nl, nl))
        for c in range(nc):
            for i in range(nl):
                for j in range(nl):
                    acc = 0.0
                    for a in range(d):
                        for b in range(d):
                            acc += grads[c, i, a] * sigma[c, a, b] * grads[c, j, b]
                    blocks[c, i, j] = acc * measures[c]
        return blocks

    @njit(cache=True)
    def _eikonal_terms_nb(u, cells, grads, sigma, weights, eps):
        nc, nl, d = grads.shape
        nv = u.shape[0]
        res = np.zeros(nv)
        jac = np.zeros((nc, nl, nl))
        q = np.zeros(nc)
        g = np.zeros(d)
        sg = np.zeros(d)
        for c in range(nc):
            for a in range(d):
                g[a] = 0.0
            for l in range(nl):
                ul = u[cells[c, l]]
                for a in range(d):
                    g[a] += ul * grads[c, l, a]
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += sigma[c, a, b] * g[b]
                sg[a] = acc
            gsg = 0.0
            for a in range(d):
                gsg += g[a] * sg[a]
            qc = np.sqrt(gsg + eps)
            q[c] = qc
            w = weights[c]
            for l in range(nl):
                res[cells[c, l]] += w * qc
            for j in range(nl):
                dqj = 0.0
                for a in range(d):
                    dqj += grads[c, j, a] * sg[a]
                dqj = w * dqj / qc
                for i in range(nl):
                    jac[c, i, j] = dqj
        return res, jac, q

    def stiffness_cell_values(grads, sigma, measures):
        return _stiffness_cell_values_nb(grads, sigma, measures)

    def eikonal_terms(u, cells, grads, sigma, weights, eps):
        return _eikonal_terms_nb(u, cells, grads, sigma, weights, eps)

else:
    stiffness_cell_values = stiffness_cell_values_numpy
    eikonal_terms = eikonal_terms_numpy
