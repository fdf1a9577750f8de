"""Batch front-end: run / converge / check / mesh.

Configuration is a flat key = value file with INI-style section headers
(see the repository README for the full key reference).  Numeric output is
written with shortest round-trip formatting so reruns are byte-identical.
"""

import argparse
import configparser
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (ErrorRecord, StudyResult, convergence_study, defect_check,
                          eoc, identity_residual, study_level)
from .mesh import (MeshError, SurfaceMesh, gen_sphere_mesh, gen_torus_mesh, read_off,
                   write_off, write_vtk)
from .solver import NonFiniteStateError, SolverError, StepperConfig, init_state, run
from .surfaces import Sphere, SurfaceError, Torus, make_surface
from .assembly import assemble_mass, surface_area, willmore_energy

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_ORDER = 3


class ConfigError(Exception):
    """Invalid configuration; message names the offending section/field."""


@dataclass
class RunConfig:
    surface_kind: str = "sphere"
    surface_params: dict = field(default_factory=dict)
    degree: int = 2
    generator: str = "icosphere"        # icosphere | torus_grid | file
    subdivisions: int = 2
    sections: int = 0                   # optional direct edge-section override
    n_major: int = 32
    n_minor: int = 24
    grading_ratio: float = 0.0          # 0 disables grading
    mesh_file: str = ""
    tau: float = 0.025
    t_end: float = 1.0
    bdf_order: int = 2
    projections: bool = True
    mode: str = "willmore"
    theta: str = "exact"
    linear_solver: str = "direct"
    lin_tol: float = 1e-10
    out_dir: str = "out"
    snapshot_stride: int = 0
    vtk_linear_subcells: bool = False
    levels: int = 3
    order_floor: float = 1.8
    synthetic: bool = False
    threads: int = 1


_SURFACE_PARAM_KEYS = {
    "sphere": {"radius"},
    "torus": {"major_radius", "minor_radius"},
    "ellipsoid": {"a", "b", "c"},
    "red_blood_cell": {"c0", "c1", "c2"},
    "perturbed_torus": {"major_radius", "minor_radius", "epsilon", "m"},
}


def _get(parser, section, key, cast, default, positive=False):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    try:
        if cast is bool:
            value = parser.getboolean(section, key)
        else:
            value = cast(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse '{raw}'") from None
    if positive and value <= 0:
        raise ConfigError(f"[{section}] {key}: must be positive, got {raw}")
    return value


def load_config(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    cfg = RunConfig()
    cfg.surface_kind = _get(parser, "surface", "kind", str, cfg.surface_kind)
    if cfg.surface_kind not in _SURFACE_PARAM_KEYS:
        raise ConfigError(f"[surface] kind: unknown surface '{cfg.surface_kind}'")
    for key in _SURFACE_PARAM_KEYS[cfg.surface_kind]:
        if parser.has_option("surface", key):
            cast = int if key == "m" else float
            cfg.surface_params[key] = _get(parser, "surface", key, cast, None)

    cfg.degree = _get(parser, "mesh", "degree", int, cfg.degree)
    if not 1 <= cfg.degree <= 4:
        raise ConfigError(f"[mesh] degree: must be in 1..4, got {cfg.degree}")
    cfg.generator = _get(parser, "mesh", "generator", str, cfg.generator)
    if cfg.generator not in ("icosphere", "torus_grid", "file"):
        raise ConfigError(f"[mesh] generator: unknown generator '{cfg.generator}'")
    cfg.subdivisions = _get(parser, "mesh", "subdivisions", int, cfg.subdivisions)
    if cfg.subdivisions < 0:
        raise ConfigError("[mesh] subdivisions: must be >= 0")
    cfg.sections = _get(parser, "mesh", "sections", int, cfg.sections)
    cfg.n_major = _get(parser, "mesh", "n_major", int, cfg.n_major, positive=True)
    cfg.n_minor = _get(parser, "mesh", "n_minor", int, cfg.n_minor, positive=True)
    cfg.grading_ratio = _get(parser, "mesh", "grading_ratio", float, cfg.grading_ratio)
    cfg.mesh_file = _get(parser, "mesh", "file", str, cfg.mesh_file)

    cfg.tau = _get(parser, "time", "tau", float, cfg.tau, positive=True)
    cfg.t_end = _get(parser, "time", "t_end", float, cfg.t_end, positive=True)
    cfg.bdf_order = _get(parser, "time", "bdf_order", int, cfg.bdf_order)
    if cfg.bdf_order not in (1, 2):
        raise ConfigError(f"[time] bdf_order: must be 1 or 2, got {cfg.bdf_order}")

    cfg.projections = _get(parser, "solver", "projections", bool, cfg.projections)
    cfg.mode = _get(parser, "solver", "mode", str, cfg.mode)
    if cfg.mode not in ("willmore", "surface_diffusion"):
        raise ConfigError(f"[solver] mode: unknown mode '{cfg.mode}'")
    cfg.theta = _get(parser, "solver", "theta", str, cfg.theta)
    if cfg.theta not in ("exact", "zero"):
        raise ConfigError(f"[solver] theta: must be 'exact' or 'zero'")
    cfg.linear_solver = _get(parser, "solver", "linear_solver", str, cfg.linear_solver)
    if cfg.linear_solver not in ("direct", "iterative"):
        raise ConfigError("[solver] linear_solver: must be 'direct' or 'iterative'")
    cfg.lin_tol = _get(parser, "solver", "lin_tol", float, cfg.lin_tol, positive=True)

    cfg.out_dir = _get(parser, "output", "directory", str, cfg.out_dir)
    cfg.snapshot_stride = _get(parser, "output", "snapshot_stride", int, cfg.snapshot_stride)
    if cfg.snapshot_stride < 0:
        raise ConfigError("[output] snapshot_stride: must be >= 0")
    cfg.vtk_linear_subcells = _get(parser, "output", "vtk_linear_subcells", bool,
                                   cfg.vtk_linear_subcells)

    cfg.levels = _get(parser, "study", "levels", int, cfg.levels)
    cfg.order_floor = _get(parser, "study", "order_floor", float, cfg.order_floor)
    cfg.synthetic = _get(parser, "study", "synthetic", bool, cfg.synthetic)
    return cfg


def build_surface(cfg):
    try:
        return make_surface(cfg.surface_kind, **cfg.surface_params)
    except SurfaceError as exc:
        raise ConfigError(str(exc)) from None


def build_mesh(cfg, surface, level=0):
    """Mesh for study level; each level shrinks h by about sqrt(2)."""
    factor = 2.0 ** (0.5 * level)
    if cfg.generator == "file":
        if not cfg.mesh_file:
            raise ConfigError("[mesh] file: required when generator = file")
        mesh = read_off(cfg.mesh_file)
        if cfg.degree > 1:
            from .mesh import curve_mesh
            mesh = curve_mesh(mesh, surface, cfg.degree)
        return mesh
    if cfg.generator == "icosphere":
        base = cfg.sections if cfg.sections else 2 ** cfg.subdivisions
        sections = max(1, round(base * factor))
        return gen_sphere_mesh(surface, 0, degree=cfg.degree, sections=sections)
    n_major = max(4, round(cfg.n_major * factor))
    n_minor = max(4, round(cfg.n_minor * factor))
    grading = cfg.grading_ratio if cfg.grading_ratio else None
    return gen_torus_mesh(surface, n_major, n_minor, degree=cfg.degree,
                          grading_ratio=grading)


def stepper_config(cfg):
    return StepperConfig(tau=cfg.tau, order=cfg.bdf_order, mode=cfg.mode,
                         projections=cfg.projections, theta_policy=cfg.theta,
                         linear_solver=cfg.linear_solver, lin_tol=cfg.lin_tol)


def cmd_run(cfg):
    surface = build_surface(cfg)
    mesh = build_mesh(cfg, surface)
    os.makedirs(cfg.out_dir, exist_ok=True)
    config = stepper_config(cfg)
    state = init_state(mesh, surface, config)

    snapshots = []
    if cfg.snapshot_stride:
        def observer(step, t, x, u, w, obs):
            if step % cfg.snapshot_stride == 0:
                snapshots.append((step, t, x, u, w))
    else:
        observer = None

    def write_snapshot(tag, x, u, w):
        n = mesh.num_nodes
        nu_len = np.linalg.norm(u[n:].reshape(3, n).T, axis=1)
        write_vtk(os.path.join(cfg.out_dir, f"surface_{tag}.vtk"), mesh, x,
                  point_data={"H": u[:n], "V": w[:n], "nu_len": nu_len},
                  linear_subcells=cfg.vtk_linear_subcells)

    try:
        write_snapshot("0000", state.x, state.u, state.w)
        summary = run(state, config, cfg.t_end, observer=observer)
    except (NonFiniteStateError, SolverError, MeshError) as exc:
        diag_path = os.path.join(cfg.out_dir, "diagnostics.txt")
        with open(diag_path, "w") as fh:
            fh.write(f"solver abort: {exc}\n")
            fh.write(traceback.format_exc())
        bad_state = getattr(exc, "state", None)
        if bad_state is not None:
            np.savez(os.path.join(cfg.out_dir, "abort_state.npz"),
                     x=bad_state.x, u=bad_state.u, w=bad_state.w, t=bad_state.time)
        print(f"error: {exc} (diagnostics in {diag_path})", file=sys.stderr)
        return EXIT_SOLVER
    for step, t, x, u, w in snapshots:
        write_snapshot(f"{step:04d}", x, u, w)
    fs = summary.final_state
    write_snapshot("final", fs.x, fs.u, fs.w)
    summary.write_csv(os.path.join(cfg.out_dir, "observables.csv"))
    print(f"run finished: t={fs.time:g}, energy={summary.energy[-1]:.6f}, "
          f"area={summary.area[-1]:.6f}, N={mesh.num_nodes}")
    return EXIT_OK


def _synthetic_study(cfg):
    """Analytic error injection: err = h^2 exactly, pipeline self-test."""
    widths = [2.0 ** (-0.5 * lev) for lev in range(cfg.levels)]
    records = []
    for lev, h in enumerate(widths):
        err = h ** 2
        records.append(ErrorRecord(level=lev, h=h, tau=cfg.tau, err_x=err, err_v=err,
                                   err_H=err, err_nu=err, err_V=err, err_z=err,
                                   energy_T=0.0))
    orders = {key: eoc([r.error(key) for r in records], widths)
              for key in ErrorRecord.ERROR_KEYS}
    return StudyResult(records=records, orders=orders)


def _study_cell(args):
    cfg, level = args
    surface = build_surface(cfg)
    mesh = build_mesh(cfg, surface, level=level)
    worst, energy, _ = study_level(mesh, surface, stepper_config(cfg), cfg.t_end)
    return level, mesh.mesh_width(), worst, energy


def cmd_converge(cfg, assert_order=None):
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.synthetic:
        result = _synthetic_study(cfg)
    else:
        surface = build_surface(cfg)
        if not surface.has_exact_velocity:
            raise ConfigError(
                "convergence study requires a stationary analytic surface "
                "(sphere or torus) with exact fields")
        if cfg.levels < 2:
            raise ConfigError("[study] levels: need at least 2")
        cells = [(cfg, level) for level in range(cfg.levels)]
        if cfg.threads > 1:
            with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(_study_cell, cells))
        else:
            results = [_study_cell(cell) for cell in cells]
        records = []
        for level, h, worst, energy in results:
            records.append(ErrorRecord(level=level, h=h, tau=cfg.tau,
                                       err_x=worst["x"], err_v=worst["v"],
                                       err_H=worst["H"], err_nu=worst["nu"],
                                       err_V=worst["V"], err_z=worst["z"],
                                       energy_T=energy))
        widths = [rec.h for rec in records]
        orders = {key: eoc([rec.error(key) for rec in records], widths)
                  for key in ErrorRecord.ERROR_KEYS}
        result = StudyResult(records=records, orders=orders)
    path = os.path.join(cfg.out_dir, "errors.csv")
    result.write_csv(path)
    finals = result.final_orders()
    print("final-level EOC: " + "  ".join(f"{k}={v:.3f}" for k, v in finals.items()))
    print(f"errors written to {path}")
    if assert_order is not None:
        failed = {k: v for k, v in finals.items() if not (v >= assert_order)}
        if failed:
            print(f"order floor {assert_order} violated: {failed}", file=sys.stderr)
            return EXIT_ORDER
    return EXIT_OK


def cmd_check(cfg, assert_order=None):
    """Residual-decay table for the defect and identity diagnostics."""
    floor = assert_order if assert_order is not None else cfg.order_floor
    surface = build_surface(cfg)
    if not surface.has_exact_velocity:
        raise ConfigError("check requires a surface with exact fields (sphere/torus)")
    meshes = [build_mesh(cfg, surface, level=lev) for lev in range(cfg.levels)]
    all_ok = True
    for label, (records, orders) in (
            ("defect", defect_check(surface, meshes)),
            ("identity", identity_residual(surface, meshes))):
        for rec in records:
            vals = "  ".join(f"{k}={v:.3e}" for k, v in rec.values.items())
            print(f"{label} level={rec.level} h={rec.h:.4f}  {vals}")
        final = orders[-1]
        for name, order in final.items():
            tiny = records[-1].values[name] < 1e-9
            ok = tiny or (order >= floor)
            all_ok &= ok
            status = "pass" if ok else "FAIL"
            shown = "exact" if tiny else f"{order:.2f}"
            print(f"{label} {name}: order {shown} (floor {floor}) {status}")
    return EXIT_OK if all_ok else EXIT_ORDER


def cmd_mesh(cfg):
    surface = build_surface(cfg)
    mesh = build_mesh(cfg, surface)
    os.makedirs(cfg.out_dir, exist_ok=True)
    mass = assemble_mass(mesh, mesh.coord_vector())
    area = surface_area(mass)
    print(f"N={mesh.num_nodes} E={mesh.num_elements} degree={mesh.degree} "
          f"h={mesh.mesh_width():.6f} area={area:.8f}")
    if mesh.degree == 1:
        write_off(os.path.join(cfg.out_dir, "mesh.off"), mesh)
    fields = surface.exact_fields(mesh.nodes)
    write_vtk(os.path.join(cfg.out_dir, "mesh.vtk"), mesh,
              point_data={"H": fields.H},
              linear_subcells=cfg.vtk_linear_subcells)
    return EXIT_OK


def main(argv=None):
    ap = argparse.ArgumentParser(prog="esflow",
                                 description="surface flow experiments")
    ap.add_argument("command", choices=("run", "converge", "check", "mesh"))
    ap.add_argument("--config", required=True, help="path to the config file")
    ap.add_argument("--assert-order", type=float, default=None,
                    help="fail (exit 3) when a final EOC falls below this floor")
    ap.add_argument("--out", default=None, help="output directory override")
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("ESFLOW_THREADS", "1")),
                    help="worker processes for study cells")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = args.out
        cfg.threads = max(1, args.threads)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "converge":
            return cmd_converge(cfg, assert_order=args.assert_order)
        if args.command == "check":
            return cmd_check(cfg, assert_order=args.assert_order)
        return cmd_mesh(cfg)
    except (ConfigError, SurfaceError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
