import math

import numpy as np
import pytest

from raftsim import surface_fem as fem
from raftsim.sparse_linalg import bicgstab, zero_mean_project
from raftsim.surface_mesh import build_refined_sphere

from helpers import generalized_eigenvalues


@pytest.fixture(scope="module")
def sphere3():
    return build_refined_sphere(3)


class TestMassMatrix:
    def test_row_sums_total_area(self, sphere3):
        m = fem.assemble_mass(sphere3)
        ones = np.ones(sphere3.n_vertices)
        total = ones @ m.matvec(ones)
        assert abs(total - sphere3.area) <= 1e-12 * sphere3.area

    def test_symmetric(self, sphere3):
        m = fem.assemble_mass(sphere3)
        dense = m.to_dense()
        assert np.abs(dense - dense.T).max() < 1e-15

    def test_positive_definite_small(self):
        mesh = build_refined_sphere(1)
        dense = fem.assemble_mass(mesh).to_dense()
        np.linalg.cholesky(dense)  # raises if not SPD

    def test_single_triangle_local_form(self, tmp_path):
        # covered against the kernel directly in test_kernels; here check the
        # assembled 2x2-block structure on the smallest closed mesh
        mesh = build_refined_sphere(0)
        m = fem.assemble_mass(mesh)
        lump = fem.lumped_mass(mesh)
        assert abs(lump.sum() - mesh.area) <= 1e-12 * mesh.area
        assert np.all(lump > 0.0)
        np.testing.assert_allclose(m.matvec(np.ones(mesh.n_vertices)), lump, rtol=1e-14)


class TestStiffnessMatrix:
    def test_row_sums_vanish(self, sphere3):
        k = fem.assemble_stiffness(sphere3)
        ones = np.ones(sphere3.n_vertices)
        scale = np.abs(k.data).max()
        assert np.abs(k.matvec(ones)).max() < 1e-12 * scale

    def test_symmetric_psd(self, sphere3):
        k = fem.assemble_stiffness(sphere3)
        dense = k.to_dense()
        assert np.abs(dense - dense.T).max() < 1e-13
        eigs = np.linalg.eigvalsh(dense)
        assert eigs.min() > -1e-10 * eigs.max()

    def test_galerkin_consistency(self, sphere3):
        # assembled quadratic form equals the element-loop recomputation
        rng = np.random.default_rng(0)
        u = rng.standard_normal(sphere3.n_vertices)
        w = rng.standard_normal(sphere3.n_vertices)
        k = fem.assemble_stiffness(sphere3)
        assembled = w @ k.matvec(u)
        total = 0.0
        for tri, e_vec, area in zip(sphere3.triangles, sphere3.tri_edge_vectors,
                                    sphere3.tri_areas):
            local = e_vec @ e_vec.T / (4.0 * area)
            total += w[tri] @ local @ u[tri]
        assert abs(assembled - total) <= 1e-12 * max(abs(assembled), 1.0)


class TestSpectrum:
    def test_laplace_beltrami_eigenvalues_level3(self):
        mesh = build_refined_sphere(3)
        k = fem.assemble_stiffness(mesh)
        m = fem.assemble_mass(mesh)
        eigs = generalized_eigenvalues(k, m, n_eigs=9, rtol=1e-8)
        distinct = [eigs[0], eigs[1], eigs[4]]
        assert abs(distinct[0]) < 0.02
        assert abs(distinct[1] - 2.0) < 0.05 * 2.0
        assert abs(distinct[2] - 6.0) < 0.05 * 6.0
        # multiplicity 3 of the first nonzero eigenvalue
        assert np.abs(np.array(eigs[1:4]) - 2.0).max() < 0.05 * 2.0


class TestInterpolateIntegrate:
    def test_constant_one(self, sphere3):
        f = fem.interpolate(sphere3, lambda p: np.ones(len(p)))
        np.testing.assert_array_equal(f.values, np.ones(sphere3.n_vertices))
        assert abs(fem.integrate(f, sphere3) - sphere3.area) <= 1e-12 * sphere3.area

    def test_coordinate_function(self, sphere3):
        f = fem.interpolate(sphere3, lambda p: p[:, 2])
        np.testing.assert_array_equal(f.values, sphere3.vertices[:, 2])

    def test_theta_on_equator(self, sphere3):
        theta = fem.interpolate(sphere3, lambda p: np.arccos(np.clip(p[:, 2], -1, 1)))
        equator = np.abs(sphere3.vertices[:, 2]) < 1e-13
        assert equator.sum() > 0
        np.testing.assert_allclose(theta.values[equator], math.pi / 2.0, rtol=1e-12)

    def test_scalar_callable_supported(self, sphere3):
        f = fem.interpolate(sphere3, lambda p: float(p[0] + p[1]))
        np.testing.assert_allclose(f.values, sphere3.vertices[:, 0] + sphere3.vertices[:, 1])

    def test_non_finite_rejected(self, sphere3):
        with pytest.raises(ValueError, match="vertex"):
            fem.interpolate(sphere3, lambda p: np.where(p[:, 2] > 0.99, np.inf, 1.0))

    def test_odd_function_integrates_to_zero(self, sphere3):
        f = fem.interpolate(sphere3, lambda p: p[:, 2])
        assert abs(fem.integrate(f, sphere3)) < 1e-10 * sphere3.area

    def test_integral_linearity(self, sphere3):
        rng = np.random.default_rng(1)
        a = rng.standard_normal(sphere3.n_vertices)
        b = rng.standard_normal(sphere3.n_vertices)
        lhs = fem.integrate(2.0 * a + 3.0 * b, sphere3)
        rhs = 2.0 * fem.integrate(a, sphere3) + 3.0 * fem.integrate(b, sphere3)
        assert abs(lhs - rhs) < 1e-11 * (abs(lhs) + 1.0)

    def test_mesh_mismatch(self, sphere3):
        other = build_refined_sphere(1)
        f = fem.interpolate(other, lambda p: p[:, 0])
        with pytest.raises(ValueError):
            fem.integrate(f, sphere3)


class TestLumpedMass:
    def test_positive_and_sums_to_area(self, sphere3):
        lump = fem.lumped_mass(sphere3)
        assert np.all(lump > 0.0)
        assert abs(lump.sum() - sphere3.area) <= 1e-12 * sphere3.area

    def test_equals_mass_row_sums(self, sphere3):
        m = fem.assemble_mass(sphere3)
        np.testing.assert_allclose(lump := fem.lumped_mass(sphere3),
                                   m.matvec(np.ones(len(lump))), rtol=1e-13)


class TestErrorNorms:
    def test_exact_interpolant_zero_error(self, sphere3):
        exact = lambda p: p[:, 0] ** 2
        numeric = fem.interpolate(sphere3, exact)
        e_inf, e_1 = fem.error_norms(numeric, exact, sphere3)
        assert e_inf == 0.0 and e_1 == 0.0

    def test_constant_shift(self, sphere3):
        beta = -math.pi / 4.0
        eps = 0.02
        exact = lambda p: np.tanh((np.arccos(np.clip(p[:, 2], -1, 1)) + beta)
                                  / (math.sqrt(2.0) * eps))
        shifted = fem.interpolate(sphere3, exact).values + 0.1
        e_inf, _ = fem.error_norms(shifted, exact, sphere3)
        exact_max = np.abs(fem.interpolate(sphere3, exact).values).max()
        assert abs(e_inf - 0.1 / exact_max) < 1e-12

    def test_zero_denominator(self, sphere3):
        with pytest.raises(ZeroDivisionError):
            fem.error_norms(np.ones(sphere3.n_vertices),
                            lambda p: np.zeros(len(p)), sphere3)


class TestWeightedMass:
    def test_unit_weight_reduces_to_mass(self, sphere3):
        ops = fem.operators(sphere3)
        data = ops.weighted_mass_data(np.ones(sphere3.n_vertices))
        np.testing.assert_allclose(data, ops.mass.data, rtol=1e-13)

    def test_integral_identity(self, sphere3):
        # 1^T M_w 1 = integral of I_h[w]
        ops = fem.operators(sphere3)
        rng = np.random.default_rng(2)
        w = rng.uniform(0.5, 1.5, sphere3.n_vertices)
        data = ops.weighted_mass_data(w)
        mw = type(ops.mass)(ops.mass.n, ops.mass.indptr, ops.mass.indices, data)
        ones = np.ones(sphere3.n_vertices)
        assert abs(ones @ mw.matvec(ones) - fem.integrate(w, sphere3)) < 1e-11
