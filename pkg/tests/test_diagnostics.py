import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esflow._layout import flatten_components
from esflow.diagnostics import (DiagnosticsError, NormContext, convergence_study,
                                defect_check, eoc, error_vs_exact, identity_residual,
                                nodal_exact_vectors, study_level)
from esflow.mesh import SurfaceMesh, gen_sphere_mesh, gen_torus_mesh
from esflow.solver import StepperConfig, init_state
from esflow.surfaces import Ellipsoid, Sphere, Torus


class TestEOC:
    def test_synthetic_quadratic(self):
        widths = [0.4, 0.2, 0.1]
        errors = [3.0 * h ** 2 for h in widths]
        orders = eoc(errors, widths)
        assert np.isnan(orders[0])
        assert abs(orders[1] - 2.0) < 1e-12
        assert abs(orders[2] - 2.0) < 1e-12

    @given(st.floats(min_value=1e-6, max_value=1e6))
    @settings(max_examples=30, deadline=None)
    def test_scale_free(self, scale):
        widths = [0.5, 0.31, 0.17]
        errors = np.array([1.7 * h ** 1.3 for h in widths])
        base = eoc(errors, widths)
        scaled = eoc(scale * errors, widths)
        assert np.max(np.abs(base[1:] - scaled[1:])) < 1e-12

    def test_zero_errors_give_nan(self):
        orders = eoc([0.0, 0.0], [0.2, 0.1])
        assert np.isnan(orders[1])


class TestErrorVsExact:
    def test_zero_at_init_with_exact_theta(self):
        surf = Torus(1.0, 2 ** -0.5)
        mesh = gen_torus_mesh(surf, 10, 8, degree=2)
        state = init_state(mesh, surf, StepperConfig(tau=0.01))
        errs = error_vs_exact(state, surf)
        assert errs["x"] == 0.0
        assert errs["H"] == 0.0 and errs["nu"] == 0.0
        assert errs["V"] == 0.0 and errs["z"] == 0.0

    def test_w_error_nonzero_without_theta(self):
        surf = Torus(1.0, 2 ** -0.5)
        mesh = gen_torus_mesh(surf, 10, 8, degree=2)
        state = init_state(mesh, surf, StepperConfig(tau=0.01, theta_policy="zero"))
        errs = error_vs_exact(state, surf)
        assert errs["H"] == 0.0 and errs["nu"] == 0.0
        assert errs["z"] > 0.0

    def test_requires_exact_fields(self):
        surf = Ellipsoid(1.2, 1.0, 0.9)
        mesh = gen_sphere_mesh(surf, 0, degree=2, sections=3)
        with pytest.raises(DiagnosticsError):
            nodal_exact_vectors(mesh, surf)


class TestNormContext:
    def test_renumbering_invariance(self):
        surf = Torus(1.0, 0.5)
        mesh = gen_torus_mesh(surf, 6, 5, degree=2)
        rng = np.random.default_rng(0)
        perm = rng.permutation(mesh.num_nodes)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(mesh.num_nodes)
        mesh2 = SurfaceMesh(2, inv[mesh.connectivity], mesh.nodes[perm])
        vec = rng.normal(size=mesh.num_nodes)
        ctx1 = NormContext(mesh, mesh.coord_vector())
        ctx2 = NormContext(mesh2, mesh2.coord_vector())
        # element sweep in unchanged element order: bitwise equality
        assert ctx1.k_norm(vec) == ctx2.k_norm(vec[perm])
        assert ctx1.m_norm(vec) == ctx2.m_norm(vec[perm])

    def test_dual_norm_renumbering_tolerance(self):
        surf = Torus(1.0, 0.5)
        mesh = gen_torus_mesh(surf, 6, 5, degree=2)
        rng = np.random.default_rng(1)
        perm = rng.permutation(mesh.num_nodes)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(mesh.num_nodes)
        mesh2 = SurfaceMesh(2, inv[mesh.connectivity], mesh.nodes[perm])
        vec = rng.normal(size=mesh.num_nodes)
        d1 = NormContext(mesh, mesh.coord_vector()).dual_norm(vec)
        d2 = NormContext(mesh2, mesh2.coord_vector()).dual_norm(vec[perm])
        assert abs(d1 - d2) < 1e-12 * max(d1, 1.0)

    def test_dual_norm_below_m_norm(self):
        surf = Sphere(1.0)
        mesh = gen_sphere_mesh(surf, 1, degree=2)
        ctx = NormContext(mesh, mesh.coord_vector())
        rng = np.random.default_rng(2)
        for _ in range(5):
            v = rng.normal(size=mesh.num_nodes)
            assert ctx.dual_norm(v) <= ctx.m_norm(v) * (1 + 1e-12)


class TestResidualChecks:
    def test_sphere_defects_structurally_zero(self):
        surf = Sphere(1.0)
        meshes = [gen_sphere_mesh(surf, 0, degree=2, sections=n) for n in (3, 4)]
        records, _ = defect_check(surf, meshes)
        for rec in records:
            # H-equation and V-constraint defects vanish identically on the
            # discrete sphere; the z-constraint carries the real signal
            assert rec.values["du_H_m"] < 1e-10
            assert rec.values["du_nu_m"] < 1e-10
            assert rec.values["dw_V_m"] < 1e-10
            assert rec.values["dw_z_m"] > 1e-4

    def test_sphere_z_defect_decay(self):
        surf = Sphere(1.0)
        meshes = [gen_sphere_mesh(surf, 0, degree=2, sections=n) for n in (4, 6)]
        records, orders = defect_check(surf, meshes)
        assert orders[-1]["dw_z_m"] >= 1.8
        assert orders[-1]["dw_z_dual"] >= 1.8

    def test_torus_nu_defect_decay(self):
        surf = Torus(1.0, 2 ** -0.5)
        meshes = [gen_torus_mesh(surf, nm, nn, degree=2, grading_ratio=2.0)
                  for nm, nn in ((14, 10), (20, 14))]
        records, orders = defect_check(surf, meshes)
        assert orders[-1]["du_nu_dual"] >= 1.8
        assert orders[-1]["dw_z_dual"] >= 1.8

    def test_identity_residual_decay(self):
        surf = Torus(1.0, 2 ** -0.5)
        meshes = [gen_torus_mesh(surf, nm, nn, degree=2, grading_ratio=2.0)
                  for nm, nn in ((14, 10), (20, 14), (28, 20))]
        records, orders = identity_residual(surf, meshes)
        assert orders[-1]["identity_dual"] >= 1.8
        # consecutive-level ratio for sqrt(2) refinement and order >= 2
        ratio = records[1].values["identity_dual"] / records[2].values["identity_dual"]
        assert 1.6 <= ratio <= 2.6 or ratio > 2.6

    def test_flat_patch_residuals_vanish(self):
        # one flat element with constant data: all integrands are zero
        nodes = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                          [0.5, 0, 0], [0.5, 0.5, 0], [0, 0.5, 0]], dtype=float)
        mesh = SurfaceMesh(2, np.array([[0, 1, 2, 3, 4, 5]]), nodes)
        n = mesh.num_nodes
        u = np.zeros(4 * n)
        u[3 * n:] = 1.0        # nu = e_z, H = 0
        w = np.zeros(4 * n)    # V = 0, z = 0
        from esflow.assembly import assemble_flow_blocks
        from esflow._layout import apply_blockwise
        blocks = assemble_flow_blocks(mesh, mesh.coord_vector(), u)
        r_w = (apply_blockwise(blocks.mass, w, 4)
               + apply_blockwise(blocks.stiffness, u, 4)
               - np.concatenate([blocks.src_scalar, blocks.src_vector]))
        assert np.max(np.abs(r_w)) < 1e-13
        assert np.max(np.abs(blocks.force_vector)) < 1e-13


class TestStudy:
    def test_short_sphere_study_superconverges(self):
        surf = Sphere(1.0)
        meshes = [gen_sphere_mesh(surf, 0, degree=2, sections=n) for n in (3, 4)]
        cfg = StepperConfig(tau=0.025, order=2, theta_policy="zero")
        result = convergence_study(surf, meshes, cfg, t_end=0.1)
        finals = result.final_orders()
        for key in ("H", "nu", "V"):
            assert finals[key] >= 1.8
        # energy approaches the round-sphere value from below
        energies = [rec.energy_T for rec in result.records]
        assert abs(energies[-1] - 8 * np.pi) < abs(energies[0] - 8 * np.pi)

    def test_study_needs_two_levels(self):
        surf = Sphere(1.0)
        meshes = [gen_sphere_mesh(surf, 0, degree=2)]
        with pytest.raises(DiagnosticsError):
            convergence_study(surf, meshes, StepperConfig(tau=0.05), 0.1)

    def test_csv_output(self, tmp_path):
        surf = Sphere(1.0)
        meshes = [gen_sphere_mesh(surf, 0, degree=2, sections=n) for n in (2, 3)]
        cfg = StepperConfig(tau=0.05, order=1, theta_policy="zero")
        result = convergence_study(surf, meshes, cfg, t_end=0.1)
        path = tmp_path / "errors.csv"
        result.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("level,h,tau,err_x,err_v,err_H,err_nu,err_V,err_z,"
                            "energy_T,eoc_x,eoc_v,eoc_H,eoc_nu,eoc_V,eoc_z")
        assert len(lines) == 3
        # level 0 has empty EOC cells
        assert lines[1].endswith(",,,,,")
