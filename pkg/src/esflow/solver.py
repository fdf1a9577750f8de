"""Linearly implicit BDF integrator for the coupled surface-flow system.

Unknowns per step: the nodal fields u = (H; n) in R^{4N} (mean curvature and
normal), the algebraic fields w = (V; z) in R^{4N} (normal velocity and
curvature gradient), the velocity v = V * n in R^{3N} (componentwise product
at the nodes) and the positions x in R^{3N}.

One step of size tau at BDF order q:

  1. extrapolate coordinates and fields from the history,
  2. assemble all surface-dependent blocks on the extrapolated surface,
  3. solve one coupled sparse 8N x 8N linear system for (u, w),
  4. interpolate the velocity v = V * n nodally,
  5. update the positions from the BDF formula,
  6. optionally renormalize n and project z to the tangent space nodewise.

The algebraic equation carries the time-independent correction vector fixed
at start-up so that w(0) equals the nodal exact initial data whenever those
are available in closed form.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import gmres, splu, LinearOperator

from ._layout import apply_blockwise, solve_blockwise, split_components, flatten_components
from .assembly import assemble_flow_blocks, energy_area_sweep
from .mesh import geometry_tables

#: BDF difference coefficients (delta_0 ... delta_q) and extrapolation weights.
BDF_DELTA = {1: (1.0, -1.0), 2: (1.5, -2.0, 0.5)}
BDF_GAMMA = {1: (1.0,), 2: (2.0, -1.0)}

MODES = ("willmore", "surface_diffusion")


class SolverError(Exception):
    pass


class NonFiniteStateError(SolverError):
    """A step produced NaN or Inf; carries the last good state for dumping."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class StepperConfig:
    tau: float
    order: int = 2
    mode: str = "willmore"
    projections: bool = True
    theta_policy: str = "exact"      # "exact" | "zero"
    linear_solver: str = "direct"    # "direct" | "iterative"
    lin_tol: float = 1e-10

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.order not in (1, 2):
            raise ValueError("bdf order must be 1 or 2")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.theta_policy not in ("exact", "zero"):
            raise ValueError("theta policy must be 'exact' or 'zero'")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError("linear solver must be 'direct' or 'iterative'")

    @property
    def use_cubic(self):
        return self.mode == "willmore"


@dataclass
class FlowState:
    """Current fields plus the BDF history (newest first)."""

    mesh: object
    time: float
    step_index: int
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    x_hist: list = field(default_factory=list)
    u_hist: list = field(default_factory=list)
    det_floor: np.ndarray = None

    @property
    def num_nodes(self):
        return self.mesh.num_nodes

    def scalar_part(self, vec4):
        return vec4[:self.num_nodes]

    def vector_part(self, vec4):
        return vec4[self.num_nodes:]

    def nodal_radii(self):
        return np.linalg.norm(split_components(self.x), axis=1)

    def normal_lengths(self):
        return np.linalg.norm(split_components(self.vector_part(self.u)), axis=1)


def componentwise_velocity(v_scalar, n_flat):
    """v = V * n at the nodes: scale each normal by its velocity value."""
    n_nodes = v_scalar.size
    return (n_flat.reshape(3, n_nodes) * v_scalar[None, :]).ravel()


def project_fields(u, w, n_nodes):
    """Renormalize the normal and remove its component from the gradient field.

    Returns new arrays; applying the projection twice changes nothing beyond
    roundoff.
    """
    u = u.copy()
    w = w.copy()
    nu = u[n_nodes:].reshape(3, n_nodes)
    lengths = np.sqrt((nu ** 2).sum(axis=0))
    nu /= lengths[None, :]
    zmat = w[n_nodes:].reshape(3, n_nodes)
    zmat -= (zmat * nu).sum(axis=0)[None, :] * nu
    return u, w


def init_state(mesh, surface, config):
    """Start-up: nodal exact data for u, one mass solve for w, correction.

    w is defined by the algebraic constraint M w = g - A u at t = 0; when the
    surface provides exact initial velocity data the correction vector
    theta = M (w_exact - w_constraint) is stored and w starts from the exact
    nodal values, otherwise theta = 0.
    """
    fields = surface.exact_fields(mesh.nodes)
    n_nodes = mesh.num_nodes
    x0 = mesh.coord_vector()
    u0 = np.concatenate([fields.H, flatten_components(fields.nu)])
    blocks = assemble_flow_blocks(mesh, x0, u0, use_cubic=config.use_cubic)
    rhs = np.concatenate([blocks.src_scalar, blocks.src_vector]) \
        - apply_blockwise(blocks.stiffness, u0, 4)
    mass_lu = splu(blocks.mass.tocsc())
    w_bar = solve_blockwise(mass_lu.solve, rhs, 4)
    if config.theta_policy == "exact" and surface.has_exact_velocity:
        w_exact = np.concatenate([fields.V, flatten_components(fields.z)])
        theta = apply_blockwise(blocks.mass, w_exact - w_bar, 4)
        w0 = w_exact
    else:
        theta = np.zeros(4 * n_nodes)
        w0 = w_bar
    v0 = componentwise_velocity(w0[:n_nodes], u0[n_nodes:])
    return FlowState(mesh=mesh, time=0.0, step_index=0, x=x0, u=u0, w=w0, v=v0,
                     theta=theta, x_hist=[x0], u_hist=[u0],
                     det_floor=blocks.min_det.copy())


def _combine(history, weights):
    out = weights[0] * history[0]
    for wgt, vec in zip(weights[1:], history[1:]):
        out += wgt * vec
    return out


def _step_matrix(blocks, reaction, dim, delta0, tau):
    """[[ (delta0/tau) M, -(A + R) ], [ A, M ]] for a dim-component pair."""
    eye = sp.identity(dim, format="csr")
    mass = sp.kron(eye, blocks.mass, format="csr")
    stiff = sp.kron(eye, blocks.stiffness, format="csr")
    return sp.bmat([[(delta0 / tau) * mass, -(stiff + reaction)],
                    [stiff, mass]], format="csc")


def _check_residual(lhs, sol, rhs, config):
    res = np.linalg.norm(lhs @ sol - rhs)
    ref = max(np.linalg.norm(rhs), 1.0)
    if not np.isfinite(res) or res > 1e-6 * ref:
        raise SolverError(f"linear solve residual {res:.3e} exceeds tolerance")


def _solve_pair(blocks, reaction, dim, delta0, tau, rhs_top, rhs_bottom, config):
    """Solve one decoupled (field, constraint) pair of the step system.

    The full 8N x 8N step matrix is block diagonal across the scalar pair
    (H, V) and the vector pair (n, z) because the reaction blocks do not mix
    them; factorizing the two diagonal blocks separately is exact and
    roughly halves the direct-solver cost.
    """
    lhs = _step_matrix(blocks, reaction, dim, delta0, tau)
    rhs = np.concatenate([rhs_top, rhs_bottom])
    if config.linear_solver == "direct":
        # the pair matrix has a structurally symmetric pattern
        sol = splu(lhs, permc_spec="MMD_AT_PLUS_A").solve(rhs)
    else:
        gram_lu = splu((blocks.mass + blocks.stiffness).tocsc())

        def precond(vec):
            return solve_blockwise(gram_lu.solve, vec, 2 * dim)

        prec = LinearOperator(lhs.shape, matvec=precond)
        sol, info = gmres(lhs, rhs, M=prec, rtol=config.lin_tol, atol=0.0,
                          maxiter=400, restart=80)
        if info != 0:
            raise SolverError(f"iterative solver failed to converge (info={info})")
    _check_residual(lhs, sol, rhs, config)
    half = dim * blocks.mass.shape[0]
    return sol[:half], sol[half:]


def bdf_step(state, config):
    """Advance one step; returns a new FlowState."""
    order = min(config.order, len(state.x_hist))
    delta = BDF_DELTA[order]
    gamma = BDF_GAMMA[order]
    tau = config.tau
    n_nodes = state.num_nodes

    x_tilde = _combine(state.x_hist, gamma)
    u_tilde = _combine(state.u_hist, gamma)
    if not (np.all(np.isfinite(x_tilde)) and np.all(np.isfinite(u_tilde))):
        raise NonFiniteStateError(
            f"non-finite extrapolated state at t={state.time:.6g}", state=state)
    blocks = assemble_flow_blocks(state.mesh, x_tilde, u_tilde,
                                  use_cubic=config.use_cubic)
    if state.det_floor is not None and np.any(blocks.min_det < 1e-14 * state.det_floor):
        eid = int(np.argmin(blocks.min_det / state.det_floor))
        raise SolverError(f"mesh degenerated at element {eid} "
                          f"(metric determinant collapsed)")

    u_tail = sum(d * u_prev for d, u_prev in zip(delta[1:], state.u_hist))
    mass_tail = apply_blockwise(blocks.mass, u_tail, 4) / tau
    theta_v, theta_z = state.theta[:n_nodes], state.theta[n_nodes:]
    h_new, v_new_scalar = _solve_pair(
        blocks, blocks.react_scalar, 1, delta[0], tau,
        -mass_tail[:n_nodes], blocks.src_scalar + theta_v, config)
    nu_new, z_new = _solve_pair(
        blocks, blocks.react_vector, 3, delta[0], tau,
        blocks.force_vector - mass_tail[n_nodes:], blocks.src_vector + theta_z,
        config)
    u_new = np.concatenate([h_new, nu_new])
    w_new = np.concatenate([v_new_scalar, z_new])
    v_new = componentwise_velocity(w_new[:n_nodes], u_new[n_nodes:])
    x_tail = sum(d * x_prev for d, x_prev in zip(delta[1:], state.x_hist))
    x_new = (tau * v_new - x_tail) / delta[0]
    if config.projections:
        u_new, w_new = project_fields(u_new, w_new, n_nodes)

    keep = config.order
    return FlowState(mesh=state.mesh, time=state.time + tau,
                     step_index=state.step_index + 1, x=x_new, u=u_new, w=w_new,
                     v=v_new, theta=state.theta,
                     x_hist=[x_new] + state.x_hist[:keep - 1],
                     u_hist=[u_new] + state.u_hist[:keep - 1],
                     det_floor=state.det_floor)


@dataclass
class RunSummary:
    """Per-step scalar observables of one flow run."""

    times: np.ndarray
    energy: np.ndarray
    area: np.ndarray
    min_radius: np.ndarray
    max_radius: np.ndarray
    min_normal_len: np.ndarray
    max_normal_len: np.ndarray
    final_state: FlowState

    COLUMNS = ("t", "energy", "area", "min_radius", "max_radius",
               "min_nu_len", "max_nu_len")

    def rows(self):
        for i in range(len(self.times)):
            yield (self.times[i], self.energy[i], self.area[i],
                   self.min_radius[i], self.max_radius[i],
                   self.min_normal_len[i], self.max_normal_len[i])

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in self.rows():
                if not all(np.isfinite(val) for val in row):
                    raise SolverError("refusing to write non-finite observables")
                fh.write(",".join(repr(float(val)) for val in row) + "\n")


def _observables(state):
    energy, area = energy_area_sweep(state.mesh, state.x, state.scalar_part(state.u))
    radii = state.nodal_radii()
    nlen = state.normal_lengths()
    return energy, area, radii.min(), radii.max(), nlen.min(), nlen.max()


def run(state, config, t_end, observer=None):
    """March the flow to t_end, recording observables after every step.

    The observer (if any) receives (step_index, time, x, u, w, observables)
    after projections; the arrays are copies and safe to keep.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    n_steps = int(round(t_end / config.tau))
    if abs(n_steps * config.tau - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("tau must divide the time interval")
    records = [(state.time,) + _observables(state)]
    for _ in range(n_steps):
        state = bdf_step(state, config)
        if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.u))
                and np.all(np.isfinite(state.w))):
            raise NonFiniteStateError(
                f"non-finite values at t={state.time:.6g} (step {state.step_index})",
                state=state)
        obs = _observables(state)
        records.append((state.time,) + obs)
        if observer is not None:
            observer(state.step_index, state.time, state.x.copy(), state.u.copy(),
                     state.w.copy(), obs)
    cols = np.array(records, dtype=float).T
    return RunSummary(times=cols[0], energy=cols[1], area=cols[2],
                      min_radius=cols[3], max_radius=cols[4],
                      min_normal_len=cols[5], max_normal_len=cols[6],
                      final_state=state)
