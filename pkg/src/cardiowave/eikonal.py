"""Anisotropic Eikonal-diffusion activation solver on simplicial meshes.

The steady problem (front speed term plus curvature-linking diffusion,
unit source) is reached by implicit pseudo-time marching with Newton
linearization per step.  Two stimulus-handling modes exist:

* ``novel``: Dirichlet data is imposed only on the currently *active*
  stimuli, i.e. those whose prescribed time is earlier than both the
  pseudo-time clock and the current field at their vertex.  A stimulus
  beaten by an earlier front is therefore dropped permanently.
* ``classic``: every stimulus is a permanent Dirichlet constraint.

The pseudo-time clock starts at the earliest stimulus time so that
shifting all stimuli by a constant shifts the solution identically.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import gmres, spsolve

from .assembly import assemble_operator
from .mesh import FiberField

__all__ = [
    "ConductivityModel",
    "Stimulus",
    "MuscleStimulusSet",
    "SolverOptions",
    "SolverError",
    "NewtonDivergenceError",
    "LinearSolverError",
    "ConvergenceError",
    "NoActiveStimulusError",
    "build_conductivity",
    "active_stimuli",
    "EikonalDiffusionProblem",
    "EikonalResult",
    "solve",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NewtonDivergenceError(SolverError):
    pass


class LinearSolverError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class NoActiveStimulusError(SolverError):
    pass


@dataclass(frozen=True)
class ConductivityModel:
    """Conductivities (m^2/s), membrane scaling and front-speed parameter."""

    sigma_f: float = 1.00e-4
    sigma_s: float = 0.44e-4
    sigma_n: float = 0.11e-4
    chi_cm: float = 1.0  # product of surface-to-volume ratio and capacitance
    c_f: float = 60.0  # s^(-1/2)

    def __post_init__(self):
        if not (self.sigma_f >= self.sigma_s >= self.sigma_n > 0):
            raise ValueError("conductivities must satisfy sigma_f >= sigma_s >= sigma_n > 0")
        if self.chi_cm <= 0 or self.c_f <= 0:
            raise ValueError("chi_cm and c_f must be positive")


def build_conductivity(model, fibers):
    """Per-cell symmetric tensors with eigenpairs (sigma_d / chi_cm, triad).

    In topological dimension < 3 the zero-filled triad directions simply
    contribute nothing.
    """
    if not isinstance(fibers, FiberField):
        raise TypeError("fibers must be a FiberField")
    sig = np.einsum("cd,ce->cde", fibers.f0, fibers.f0) * model.sigma_f
    sig += np.einsum("cd,ce->cde", fibers.s0, fibers.s0) * model.sigma_s
    sig += np.einsum("cd,ce->cde", fibers.n0, fibers.n0) * model.sigma_n
    return sig / model.chi_cm


@dataclass(frozen=True)
class Stimulus:
    vertex: int
    time: float  # seconds
    tag: str = "pmj"  # pmj | ectopic | lead


@dataclass(frozen=True)
class MuscleStimulusSet:
    entries: tuple

    def __post_init__(self):
        entries = tuple(
            e if isinstance(e, Stimulus) else Stimulus(int(e[0]), float(e[1]), *e[2:])
            for e in self.entries
        )
        object.__setattr__(self, "entries", entries)
        for e in entries:
            if not np.isfinite(e.time):
                raise ValueError("stimulus time must be finite")

    def __len__(self):
        return len(self.entries)

    @staticmethod
    def from_sphere(mesh, center, radius, time, tag="ectopic"):
        """All vertices within radius of the center, or the nearest vertex
        if the sphere captures none; the center time applies uniformly."""
        c = np.zeros(3)
        center = np.asarray(center, dtype=float)
        c[: center.size] = center
        d = np.linalg.norm(mesh.vertices3 - c, axis=1)
        inside = np.flatnonzero(d <= radius)
        if inside.size == 0:
            inside = np.array([int(np.argmin(d))])
        return MuscleStimulusSet(tuple(Stimulus(int(v), time, tag) for v in inside))

    @staticmethod
    def merge(*sets):
        entries = []
        for s in sets:
            entries.extend(s.entries)
        return MuscleStimulusSet(tuple(entries))


@dataclass(frozen=True)
class SolverOptions:
    dt: float = 1e-3  # pseudo-time step, seconds
    bdf_order: int = 1
    newton_tol: float = 1e-9
    newton_max_iter: int = 25
    steady_tol: float = 1e-6  # seconds, max-norm step change
    max_pseudo_steps: int = 100000
    grad_regularization: float = 1e-20
    u_init: float | None = None
    # Coefficient of the mesh-dependent artificial diffusion added to the
    # Laplacian term only.  The front term dominates the physical diffusion
    # whenever the cell size exceeds the diffusion length sqrt(sigma)/c_f,
    # which destabilizes dip modes between isolated Dirichlet vertices; an
    # O(h) viscosity restores stability without altering planar-front
    # speeds (a linear profile has zero diffusion).  Set to 0 to disable.
    stabilization: float = 1.0
    mode: str = "novel"
    linear_solver: str = "direct"
    linear_rtol: float = 1e-10
    # Once every remaining stimulus decision is settled the step size is
    # ramped geometrically; steady state is unaffected.  Set to 1.0 to
    # disable.
    accel_factor: float = 1.3
    accel_max_ratio: float = 200.0

    def __post_init__(self):
        if self.dt <= 0 or self.newton_tol <= 0 or self.steady_tol <= 0:
            raise ValueError("dt, newton_tol and steady_tol must be positive")
        if self.bdf_order not in (1, 2):
            raise ValueError("bdf_order must be 1 or 2")
        if self.mode not in ("novel", "classic"):
            raise ValueError("mode must be 'novel' or 'classic'")
        if self.max_pseudo_steps < 1 or self.newton_max_iter < 1:
            raise ValueError("iteration limits must be >= 1")


def active_stimuli(stimuli, u_prev, t_next):
    """Indices of stimuli that are active at the next clock value.

    A stimulus is active iff its prescribed time is strictly below the
    next clock value *and* strictly below the current field at its vertex.
    """
    idx = []
    for k, s in enumerate(stimuli.entries):
        if s.time < t_next and s.time < u_prev[s.vertex]:
            idx.append(k)
    return np.asarray(idx, dtype=np.int64)


class EikonalDiffusionProblem:
    """Residual/Jacobian of the discretized nonlinear activation problem."""

    def __init__(self, mesh, sigma, c_f, grad_regularization=1e-20,
                 stabilization=1.0):
        _, self.ws = assemble_operator(mesh, sigma, 0.0)
        self.mesh = mesh
        self.c_f = float(c_f)
        self.eps = float(grad_regularization)
        self.mass = self.ws.lumped_mass
        self.stiffness = self.ws.stiffness
        eigvals, eigvecs = np.linalg.eigh(self.ws.sigma)
        pos = eigvals[eigvals > 0]
        self.sigma_min = float(np.min(pos)) if pos.size else float(np.min(eigvals))
        self.sigma_max = float(np.max(eigvals))
        if stabilization > 0:
            # Per-cell tensor viscosity beta * h_c * c_f * sqrt(Sigma_c),
            # added to the diffusion operator only.  sqrt matches the front
            # term's directional strength, so the mesh Peclet number is
            # bounded uniformly across the anisotropy directions.
            x = mesh.vertices[mesh.cells]
            nl = mesh.dim + 1
            h_c = np.zeros(mesh.n_cells)
            for a in range(nl):
                for b in range(a + 1, nl):
                    d = np.linalg.norm(x[:, a, :] - x[:, b, :], axis=1)
                    h_c = np.maximum(h_c, d)
            root = np.einsum(
                "cij,cj,ckj->cik", eigvecs, np.sqrt(np.maximum(eigvals, 0.0)), eigvecs
            )
            sigma_diff = self.ws.sigma + (
                float(stabilization) * self.c_f * h_c[:, None, None] * root
            )
            from .assembly import assemble_stiffness

            self.stiffness = assemble_stiffness(mesh, sigma_diff)[0]

    def _front_terms(self, u):
        from . import kernels

        return kernels.eikonal_terms(
            u,
            self.mesh.cells,
            self.mesh.basis_gradients,
            self.ws.sigma,
            self.ws.cell_weights,
            self.eps,
        )

    def residual(self, u, mass_coeff=0.0, mass_rhs=None):
        """R(u) = mass_coeff*m*u - m*mass_rhs + c_f*N(u) + K u - m."""
        res_front, _, _ = self._front_terms(u)
        r = self.c_f * res_front + self.stiffness @ u - self.mass
        if mass_coeff:
            r = r + mass_coeff * self.mass * u
        if mass_rhs is not None:
            r = r - self.mass * mass_rhs
        return r

    def jacobian(self, u, mass_coeff=0.0):
        _, jac_blocks, _ = self._front_terms(u)
        J = self.stiffness + self.c_f * self.ws.scatter(jac_blocks)
        if mass_coeff:
            n = self.mesh.n_vertices
            J = J + csr_matrix(
                (mass_coeff * self.mass, (np.arange(n), np.arange(n))), shape=J.shape
            )
        return J

    def _solve_linear(self, J, rhs, options):
        if options.linear_solver == "direct":
            return spsolve(J.tocsc(), rhs)
        diag = J.diagonal()
        if np.any(diag == 0):
            raise LinearSolverError("zero diagonal entry in Jacobian")
        from scipy.sparse.linalg import LinearOperator

        M = LinearOperator(J.shape, matvec=lambda x: x / diag)
        x, info = gmres(
            J, rhs, rtol=options.linear_rtol, atol=0.0, restart=100,
            maxiter=max(20, J.shape[0]), M=M,
        )
        if info != 0:
            raise LinearSolverError(f"GMRES failed to converge (info={info})")
        return x

    def newton_solve(self, u_start, dirichlet_idx, dirichlet_vals, options,
                     mass_coeff=0.0, mass_rhs=None):
        """Newton with halving line search; Dirichlet rows satisfied exactly."""
        n = self.mesh.n_vertices
        u = np.array(u_start, dtype=float)
        u[dirichlet_idx] = dirichlet_vals
        free = np.ones(n, dtype=bool)
        free[dirichlet_idx] = False
        if not np.any(free):
            return u, 0
        free_idx = np.flatnonzero(free)
        scale = float(np.linalg.norm(self.mass[free_idx]))  # unit-source scale

        def rnorm(v):
            return float(np.linalg.norm(self.residual(v, mass_coeff, mass_rhs)[free_idx]))

        r = rnorm(u)
        r_ref = max(r, scale * 1e-12)
        growth = 0
        for it in range(options.newton_max_iter):
            if r <= options.newton_tol * r_ref or r <= scale * 1e-12:
                return u, it
            J = self.jacobian(u, mass_coeff)
            Jff = J[free_idx][:, free_idx]
            rhs = -self.residual(u, mass_coeff, mass_rhs)[free_idx]
            delta = self._solve_linear(Jff, rhs, options)
            lam = 1.0
            for _ in range(10):
                u_try = u.copy()
                u_try[free_idx] += lam * delta
                r_try = rnorm(u_try)
                if np.isfinite(r_try) and (
                    r_try < r or r_try <= options.newton_tol * r_ref
                ):
                    break
                lam *= 0.5
            if not np.isfinite(r_try):
                raise NewtonDivergenceError(
                    f"non-finite residual after line search (iteration {it})"
                )
            if r_try >= r and r > options.newton_tol * r_ref:
                growth += 1
                if growth >= 3:
                    raise NewtonDivergenceError(
                        f"residual stalled at {r:.3e} (iteration {it})"
                    )
            else:
                growth = 0
            u, r = u_try, r_try
        if r > options.newton_tol * r_ref and r > scale * 1e-12:
            raise NewtonDivergenceError(
                f"no convergence in {options.newton_max_iter} Newton iterations "
                f"(residual {r:.3e})"
            )
        return u, options.newton_max_iter


def pseudo_time_step(problem, u_history, dirichlet_idx, dirichlet_vals, dt,
                     options, bdf_order=None):
    """One implicit pseudo-time step given the field history (newest last)."""
    order = bdf_order if bdf_order is not None else options.bdf_order
    if order == 2 and len(u_history) >= 2:
        alpha = 3.0
        u_bdf = 4.0 * u_history[-1] - u_history[-2]
    else:
        alpha = 1.0
        u_bdf = u_history[-1]
    return problem.newton_solve(
        u_history[-1], dirichlet_idx, dirichlet_vals, options,
        mass_coeff=alpha / dt, mass_rhs=u_bdf / dt,
    )


@dataclass(frozen=True)
class EikonalResult:
    times: np.ndarray  # per-vertex activation times, seconds
    active: np.ndarray  # indices into the stimulus set active at steady state
    steps: int
    pseudo_time: float


def _dedupe(stimuli):
    """Earliest prescribed time wins when several stimuli share a vertex."""
    best = {}
    for k, s in enumerate(stimuli.entries):
        if s.vertex not in best or s.time < stimuli.entries[best[s.vertex]].time:
            best[s.vertex] = k
    keep = sorted(best.values())
    return MuscleStimulusSet(tuple(stimuli.entries[k] for k in keep)), np.asarray(keep)


def solve(mesh, sigma, c_f, stimuli, options=SolverOptions()):
    """March the pseudo-time problem to steady state.

    Returns the activation field, the final active stimulus subset (as
    indices into the input set) and the number of pseudo-time steps.
    """
    if len(stimuli) == 0:
        raise ValueError("at least one stimulus is required")
    for s in stimuli.entries:
        if not 0 <= s.vertex < mesh.n_vertices:
            raise ValueError(f"stimulus vertex {s.vertex} out of range")
    problem = EikonalDiffusionProblem(
        mesh, sigma, c_f, grad_regularization=options.grad_regularization,
        stabilization=options.stabilization,
    )
    return _march(problem, stimuli, options)


def _march(problem, stimuli, options):
    mesh = problem.mesh
    dedup, keep = _dedupe(stimuli)
    stim_v = np.asarray([s.vertex for s in dedup.entries])
    stim_t = np.asarray([s.time for s in dedup.entries])
    t_min, t_max = float(stim_t.min()), float(stim_t.max())
    if options.u_init is not None:
        u0 = options.u_init
    else:
        u0 = t_max + mesh.diameter / (problem.c_f * np.sqrt(problem.sigma_min))
    u = np.full(mesh.n_vertices, float(u0))
    history = [u]
    t = t_min
    dt = options.dt
    prev_dt = dt
    active_prev = None
    ever_active = False
    # Activation is sticky: the field comparison blocks *activation* of a
    # stimulus beaten by an earlier front; once imposed, a stimulus's pinned
    # value equals its prescribed time, so re-testing the strict inequality
    # would spuriously drop it.
    active_mask = np.zeros(stim_v.size, dtype=bool)
    for step in range(1, options.max_pseudo_steps + 1):
        t_next = t + dt
        if options.mode == "novel":
            active_mask = active_mask | np.isin(
                np.arange(stim_v.size), active_stimuli(dedup, u, t_next)
            )
        else:
            active_mask[:] = True
        active = np.flatnonzero(active_mask)
        ever_active = ever_active or active.size > 0
        order = options.bdf_order if dt == prev_dt else 1
        try:
            u_new, n_newton = pseudo_time_step(
                problem, history, stim_v[active], stim_t[active], dt, options,
                bdf_order=order,
            )
        except NewtonDivergenceError:
            if dt > options.dt * (1 + 1e-12):
                # back off an accelerated step and retry at the base step
                dt = options.dt
                log.debug("step %d: Newton stalled, resetting dt", step)
                continue
            raise
        change = float(np.max(np.abs(u_new - u)))
        growth = float(np.max(u_new - u))
        if growth > 3.0 * dt + 10.0 * options.steady_tol:
            # The field cannot legitimately rise faster than the pseudo-time
            # clock; a larger jump means Newton found a spurious root of the
            # nonconvex front term.  Retry the step at the base step size.
            if dt > options.dt * (1 + 1e-12):
                dt = options.dt
                log.debug("step %d: unphysical growth %.3e, resetting dt", step, growth)
                continue
            raise ConvergenceError(
                f"pseudo-time step diverged (field grew by {growth:.3e} in one "
                f"base step)"
            )
        set_unchanged = active_prev is not None and np.array_equal(active, active_prev)
        # No pending stimulus decision remains when every inactive stimulus
        # can never activate (its prescribed time is at or above the field at
        # its vertex, so the strict comparison is false forever).
        inactive = np.flatnonzero(~active_mask)
        if options.mode == "classic":
            settled = t_next > t_max
        else:
            settled = bool(np.all(stim_t[inactive] >= u_new[stim_v[inactive]]))
        log.debug(
            "step %4d t=%.6f dt=%.2e active=%d newton=%d change=%.3e settled=%d",
            step, t_next, dt, active.size, n_newton, change, settled,
        )
        if settled and set_unchanged and change <= options.steady_tol:
            return EikonalResult(
                times=u_new, active=keep[active], steps=step, pseudo_time=t_next
            )
        if not ever_active and t_next > t_max + dt:
            raise NoActiveStimulusError(
                "no stimulus ever became active; check stimulus times against "
                "the initial field"
            )
        # Ramp the step once no pending decision remains and the transient is
        # quiet; ramping during the front sweep invites spurious Newton roots.
        prev_dt = dt
        if (
            options.accel_factor > 1.0
            and set_unchanged
            and settled
            and change <= 2.0 * dt
        ):
            dt = min(dt * options.accel_factor, options.dt * options.accel_max_ratio)
        history = (history + [u_new])[-2:]
        u = u_new
        t = t_next
        active_prev = active
    raise ConvergenceError(
        f"no steady state within {options.max_pseudo_steps} pseudo-time steps"
    )
