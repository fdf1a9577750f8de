"""Error measurement, convergence orders, and residual decay checks.

The error diagnostics rely on surfaces that are stationary under the flow
(the sphere and the 1/sqrt(2)-ratio torus): there the exact solution at any
time equals the initial data, so errors against the nodal interpolation of
the exact fields are well defined without reference trajectories.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.linalg import splu

from ._layout import apply_blockwise, flatten_components, solve_blockwise
from .assembly import (assemble_flow_blocks, assemble_mass, assemble_stiffness,
                       willmore_energy)
from .mesh import geometry_tables
from .solver import bdf_step, init_state, run


class DiagnosticsError(Exception):
    pass


def nodal_exact_vectors(mesh, surface):
    """Interpolated exact data (x*, u*, w*) on the mesh nodes."""
    ef = surface.exact_fields(mesh.nodes)
    x_star = mesh.coord_vector()
    u_star = np.concatenate([ef.H, flatten_components(ef.nu)])
    if not ef.has_velocity:
        raise DiagnosticsError(
            f"surface '{surface.name}' has no closed-form velocity data")
    w_star = np.concatenate([ef.V, flatten_components(ef.z)])
    return x_star, u_star, w_star


class NormContext:
    """Norms on a fixed reference surface (exact nodal positions).

    Provides the L2/H1 norms through the element sweep (cheap, renumbering
    invariant; geometry cached since the reference surface never moves) and
    the dual norm through factorized solves with K = M + A.
    """

    def __init__(self, mesh, x_star, mass=None, stiffness=None):
        self.mesh = mesh
        self.x = x_star
        self.mass = mass if mass is not None else assemble_mass(mesh, x_star)
        self.stiffness = (stiffness if stiffness is not None
                          else assemble_stiffness(mesh, x_star))
        self._geo = geometry_tables(mesh, x_star)
        self._mass_lu = None
        self._gram_lu = None

    def _gram_solve(self):
        if self._gram_lu is None:
            self._gram_lu = splu((self.mass + self.stiffness).tocsc())
        return self._gram_lu.solve

    def _mass_solve(self):
        if self._mass_lu is None:
            self._mass_lu = splu(self.mass.tocsc())
        return self._mass_lu.solve

    def _sweep(self, vec, dim, with_grad):
        geo = self._geo
        val = self.mesh.reference.values
        comp = vec.reshape(dim, self.mesh.num_nodes)
        total = 0.0
        for ell in range(dim):
            nodal = comp[ell][self.mesh.connectivity]
            vq = np.einsum("nq,en->eq", val, nodal, optimize=True)
            total += float(np.sum(geo.weights * vq ** 2))
            if with_grad:
                gq = np.einsum("eqnd,en->eqd", geo.basis_gradients, nodal,
                               optimize=True)
                total += float(np.sum(geo.weights * np.einsum("eqd,eqd->eq", gq, gq)))
        return np.sqrt(total)

    def k_norm(self, vec, dim=1):
        return self._sweep(vec, dim, with_grad=True)

    def m_norm(self, vec, dim=1):
        return self._sweep(vec, dim, with_grad=False)

    def dual_norm_of_residual(self, residual, dim=1):
        """sqrt(r^T K^{-1} r): dual norm of the defect d with M d = r."""
        y = solve_blockwise(self._gram_solve(), residual, dim)
        return float(np.sqrt(max(residual @ y, 0.0)))

    def m_norm_of_residual(self, residual, dim=1):
        """sqrt(r^T M^{-1} r): L2 norm of the defect d with M d = r."""
        y = solve_blockwise(self._mass_solve(), residual, dim)
        return float(np.sqrt(max(residual @ y, 0.0)))

    def dual_norm(self, vec, dim=1):
        """sqrt(v^T M K^{-1} M v) for a nodal vector v."""
        return self.dual_norm_of_residual(apply_blockwise(self.mass, vec, dim), dim)


def error_vs_exact(state, surface, ctx=None):
    """Per-variable H1-type errors against interpolated exact stationary data.

    Returns a dict with keys x, v, H, nu, V, z.  The reference surface for
    the norms is the exact nodal position vector (equal to the initial
    positions for stationary surfaces).
    """
    mesh = state.mesh
    x_star, u_star, w_star = nodal_exact_vectors(mesh, surface)
    if ctx is None:
        ctx = NormContext(mesh, x_star)
    n = mesh.num_nodes
    return {
        "x": ctx.k_norm(state.x - x_star, dim=3),
        "v": ctx.k_norm(state.v, dim=3),  # stationary: exact velocity is zero
        "H": ctx.k_norm(state.u[:n] - u_star[:n]),
        "nu": ctx.k_norm(state.u[n:] - u_star[n:], dim=3),
        "V": ctx.k_norm(state.w[:n] - w_star[:n]),
        "z": ctx.k_norm(state.w[n:] - w_star[n:], dim=3),
    }


@dataclass
class ErrorRecord:
    """One refinement level of a convergence study."""

    level: int
    h: float
    tau: float
    err_x: float
    err_v: float
    err_H: float
    err_nu: float
    err_V: float
    err_z: float
    energy_T: float

    ERROR_KEYS = ("x", "v", "H", "nu", "V", "z")

    def error(self, key):
        return getattr(self, "err_" + key)


def eoc(errors, widths):
    """Experimental orders log(e_{k-1}/e_k) / log(h_{k-1}/h_k); NaN-safe."""
    errors = np.asarray(errors, dtype=float)
    widths = np.asarray(widths, dtype=float)
    out = np.full(len(errors), np.nan)
    for k in range(1, len(errors)):
        if errors[k] > 0 and errors[k - 1] > 0 and widths[k] != widths[k - 1]:
            out[k] = np.log(errors[k - 1] / errors[k]) / np.log(widths[k - 1] / widths[k])
    return out


@dataclass
class StudyResult:
    records: list
    orders: dict   # variable -> array of per-level EOC values

    CSV_COLUMNS = ("level", "h", "tau", "err_x", "err_v", "err_H", "err_nu",
                   "err_V", "err_z", "energy_T", "eoc_x", "eoc_v", "eoc_H",
                   "eoc_nu", "eoc_V", "eoc_z")

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.CSV_COLUMNS) + "\n")
            for i, rec in enumerate(self.records):
                row = [str(rec.level), repr(float(rec.h)), repr(float(rec.tau))]
                for key in ErrorRecord.ERROR_KEYS:
                    row.append(repr(float(rec.error(key))))
                row.append(repr(float(rec.energy_T)))
                for key in ErrorRecord.ERROR_KEYS:
                    val = self.orders[key][i]
                    row.append("" if np.isnan(val) else repr(float(val)))
                fh.write(",".join(row) + "\n")

    def final_orders(self):
        return {key: self.orders[key][-1] for key in ErrorRecord.ERROR_KEYS}


def study_level(mesh, surface, config, t_end):
    """Run one study cell and track sup-in-time errors per variable."""
    x_star, _, _ = nodal_exact_vectors(mesh, surface)
    ctx = NormContext(mesh, x_star)
    state = init_state(mesh, surface, config)
    worst = {key: 0.0 for key in ErrorRecord.ERROR_KEYS}

    def track(current):
        errs = error_vs_exact(current, surface, ctx)
        for key, val in errs.items():
            worst[key] = max(worst[key], val)

    track(state)
    n_steps = int(round(t_end / config.tau))
    if abs(n_steps * config.tau - t_end) > 1e-9 * max(1.0, t_end):
        raise DiagnosticsError("tau must divide the study interval")
    for _ in range(n_steps):
        state = bdf_step(state, config)
        track(state)
    energy = willmore_energy(assemble_mass(mesh, state.x), state.u[:mesh.num_nodes])
    return worst, energy, state


def convergence_study(surface, meshes, config, t_end):
    """Sup-in-time K-norm errors and EOC over a mesh refinement sequence."""
    if len(meshes) < 2:
        raise DiagnosticsError("a convergence study needs at least two levels")
    records = []
    for level, mesh in enumerate(meshes):
        worst, energy, _ = study_level(mesh, surface, config, t_end)
        records.append(ErrorRecord(level=level, h=mesh.mesh_width(), tau=config.tau,
                                   err_x=worst["x"], err_v=worst["v"],
                                   err_H=worst["H"], err_nu=worst["nu"],
                                   err_V=worst["V"], err_z=worst["z"],
                                   energy_T=energy))
    widths = [rec.h for rec in records]
    orders = {key: eoc([rec.error(key) for rec in records], widths)
              for key in ErrorRecord.ERROR_KEYS}
    return StudyResult(records=records, orders=orders)


def temporal_refinement_study(mesh, surface, config, t_end, n_runs=3):
    """Solution differences under tau-halving on one fixed mesh.

    Returns the list of tau values, the K-norm distances between consecutive
    runs, and their ratios; a method of order p gives ratios near 2^p.
    All runs share the mesh, so the comparison needs no exact solution;
    norms are taken on the initial surface.
    """
    ctx = NormContext(mesh, mesh.coord_vector())
    solutions = []
    taus = []
    for k in range(n_runs):
        cfg = replace(config, tau=config.tau / 2 ** k)
        state = init_state(mesh, surface, cfg)
        summary = run(state, cfg, t_end)
        fs = summary.final_state
        solutions.append((fs.x, fs.u, fs.w))
        taus.append(cfg.tau)
    dists = []
    for a, b in zip(solutions[:-1], solutions[1:]):
        dx = ctx.k_norm(a[0] - b[0], dim=3)
        du = np.sqrt(ctx.k_norm(a[1][:mesh.num_nodes] - b[1][:mesh.num_nodes]) ** 2
                     + ctx.k_norm(a[1][mesh.num_nodes:] - b[1][mesh.num_nodes:], dim=3) ** 2)
        dw = np.sqrt(ctx.k_norm(a[2][:mesh.num_nodes] - b[2][:mesh.num_nodes]) ** 2
                     + ctx.k_norm(a[2][mesh.num_nodes:] - b[2][mesh.num_nodes:], dim=3) ** 2)
        dists.append(float(np.sqrt(dx ** 2 + du ** 2 + dw ** 2)))
    ratios = [dists[i] / dists[i + 1] for i in range(len(dists) - 1)]
    return taus, dists, ratios


@dataclass
class ResidualRecord:
    level: int
    h: float
    values: dict  # name -> residual norm


def _decay_orders(records):
    out = []
    for prev, cur in zip(records[:-1], records[1:]):
        entry = {}
        for name in cur.values:
            e0, e1 = prev.values[name], cur.values[name]
            if e0 > 0 and e1 > 0:
                entry[name] = float(np.log(e0 / e1) / np.log(prev.h / cur.h))
            else:
                entry[name] = np.nan
        out.append(entry)
    return out


def defect_check(surface, meshes, use_cubic=True):
    """Residuals of the semidiscrete equations at interpolated exact data.

    For stationary surfaces the time-derivative term vanishes, so inserting
    (x*, u*, w*) into the two coupled equations leaves the residual vectors

        r_u = -(A + R) w* - b,      r_w = M w* + A u* - g,

    reported per variable block in the defect L2 norm sqrt(r^T M^{-1} r) and
    the dual norm sqrt(r^T K^{-1} r).
    """
    records = []
    for level, mesh in enumerate(meshes):
        x_star, u_star, w_star = nodal_exact_vectors(mesh, surface)
        blocks = assemble_flow_blocks(mesh, x_star, u_star, use_cubic=use_cubic)
        ctx = NormContext(mesh, x_star, mass=blocks.mass, stiffness=blocks.stiffness)
        n = mesh.num_nodes
        v_star, z_star = w_star[:n], w_star[n:]
        r_u_scalar = -(blocks.stiffness @ v_star) - blocks.react_scalar @ v_star
        r_u_vector = -apply_blockwise(blocks.stiffness, z_star, 3) \
            - blocks.react_vector @ z_star - blocks.force_vector
        r_w_scalar = blocks.mass @ v_star + blocks.stiffness @ u_star[:n] \
            - blocks.src_scalar
        r_w_vector = apply_blockwise(blocks.mass, z_star, 3) \
            + apply_blockwise(blocks.stiffness, u_star[n:], 3) - blocks.src_vector
        values = {
            "du_H_m": ctx.m_norm_of_residual(r_u_scalar),
            "du_H_dual": ctx.dual_norm_of_residual(r_u_scalar),
            "du_nu_m": ctx.m_norm_of_residual(r_u_vector, dim=3),
            "du_nu_dual": ctx.dual_norm_of_residual(r_u_vector, dim=3),
            "dw_V_m": ctx.m_norm_of_residual(r_w_scalar),
            "dw_V_dual": ctx.dual_norm_of_residual(r_w_scalar),
            "dw_z_m": ctx.m_norm_of_residual(r_w_vector, dim=3),
            "dw_z_dual": ctx.dual_norm_of_residual(r_w_vector, dim=3),
        }
        records.append(ResidualRecord(level=level, h=mesh.mesh_width(), values=values))
    return records, _decay_orders(records)


def identity_residual(surface, meshes):
    """Weak-form residual of the curvature-gradient identity.

    With interpolated exact data the vector r = M z* + A n* - g_z measures
    how well the discrete surface reproduces grad H = (Laplace) nu + |S|^2 nu;
    reported in the dual norm, which decays at the field approximation order.
    """
    records = []
    for level, mesh in enumerate(meshes):
        x_star, u_star, w_star = nodal_exact_vectors(mesh, surface)
        blocks = assemble_flow_blocks(mesh, x_star, u_star)
        ctx = NormContext(mesh, x_star, mass=blocks.mass, stiffness=blocks.stiffness)
        n = mesh.num_nodes
        residual = apply_blockwise(blocks.mass, w_star[n:], 3) \
            + apply_blockwise(blocks.stiffness, u_star[n:], 3) - blocks.src_vector
        values = {
            "identity_dual": ctx.dual_norm_of_residual(residual, dim=3),
            "identity_m": ctx.m_norm_of_residual(residual, dim=3),
        }
        records.append(ResidualRecord(level=level, h=mesh.mesh_width(), values=values))
    return records, _decay_orders(records)
