import math

import numpy as np
import pytest

from raftsim import raft_model as rm
from raftsim import surface_fem as fem
from raftsim import time_stepper as ts
from raftsim.surface_mesh import build_refined_sphere


@pytest.fixture(scope="module")
def sphere():
    return build_refined_sphere(3)


PAPER = rm.ModelParams()


def _uniform_fixed_point(mesh, params):
    u_inf = rm.u_equilibrium(params, mesh.area)
    v_star = params.c1 * u_inf / (params.c1 * u_inf + params.c2)
    total_mass = params.vol_bulk * u_inf + v_star * mesh.area
    params = params.with_(total_mass=total_mass)
    n = mesh.n_vertices
    phi_hat = -0.5
    mu = (phi_hat ** 3 - phi_hat) / params.eps \
        - (2.0 * v_star - 1.0 - phi_hat) / params.delta
    state = rm.SimState(phi=np.full(n, phi_hat), v=np.full(n, v_star),
                        mu=np.full(n, mu), u=u_inf)
    return state, params, u_inf


class TestStepReduced:
    def test_uniform_fixed_point(self, sphere):
        state, params, u_inf = _uniform_fixed_point(sphere, PAPER)
        new, _ = ts.step_reduced(state, 1e-4, params, sphere)
        assert np.abs(new.phi - state.phi).max() < 1e-8
        assert np.abs(new.v - state.v).max() < 1e-8
        assert abs(new.u - u_inf) < 1e-8

    def test_lipid_mass_conserved(self, sphere):
        state = rm.initial_state(sphere, PAPER, -0.25, 0.25, amplitude=0.3, seed=3)
        before = fem.integrate(state.phi, sphere)
        new, _ = ts.step_reduced(state, 1e-5, PAPER, sphere)
        after = fem.integrate(new.phi, sphere)
        assert abs(after - before) <= 1e-9 * sphere.area

    def test_cholesterol_bookkeeping(self, sphere):
        state = rm.initial_state(sphere, PAPER, -0.25, 0.25, amplitude=0.2, seed=4)
        new, _ = ts.step_reduced(state, 1e-5, PAPER, sphere)
        total = PAPER.vol_bulk * new.u + fem.integrate(new.v, sphere)
        assert abs(total - PAPER.total_mass) <= 1e-12 * PAPER.total_mass

    def test_rejects_wrong_exchange_law(self, sphere):
        params = PAPER.with_(exchange=rm.ExchangeLaw.ENERGY_DECREASING)
        state = rm.initial_state(sphere, params, -0.5, 0.25)
        with pytest.raises(ValueError):
            ts.step_reduced(state, 1e-5, params, sphere)

    def test_consistent_quadrature_variant(self, sphere):
        # the consistent-mass treatment of the nonlinear terms is a valid
        # alternative discretization: conservative and exact on constants
        state = rm.initial_state(sphere, PAPER, -0.25, 0.25, amplitude=0.1, seed=5)
        before = fem.integrate(state.phi, sphere)
        cons, _ = ts.step_reduced(state, 1e-6, PAPER, sphere, quadrature="consistent")
        assert abs(fem.integrate(cons.phi, sphere) - before) <= 1e-9 * sphere.area
        state_fp, params_fp, u_inf = _uniform_fixed_point(sphere, PAPER)
        new, _ = ts.step_reduced(state_fp, 1e-4, params_fp, sphere,
                                 quadrature="consistent")
        assert np.abs(new.phi - state_fp.phi).max() < 1e-8


class TestStepEnergyDecreasing:
    def test_well_fixed_point(self, sphere):
        n = sphere.n_vertices
        params = PAPER.with_(exchange=rm.ExchangeLaw.ENERGY_DECREASING, c=500.0,
                             total_mass=sphere.area)
        state = rm.SimState(phi=np.ones(n), v=np.ones(n), mu=np.zeros(n), u=0.0)
        new, _ = ts.step_energy_decreasing(state, 1e-4, params, sphere)
        assert np.abs(new.phi - 1.0).max() < 1e-8
        assert np.abs(new.v - 1.0).max() < 1e-8

    def test_mass_conserved(self, sphere):
        params = PAPER.with_(exchange=rm.ExchangeLaw.ENERGY_DECREASING, c=500.0)
        state = rm.initial_state(sphere, params, -0.5, 0.25, amplitude=0.3, seed=6)
        before = fem.integrate(state.phi, sphere)
        new, _ = ts.step_energy_decreasing(state, 1e-5, params, sphere)
        assert abs(fem.integrate(new.phi, sphere) - before) <= 1e-9 * sphere.area


class TestStepOk:
    def test_sigma_zero_equals_plain_cahn_hilliard(self, sphere):
        params = PAPER.with_(sigma_override=0.0)
        state = rm.initial_state(sphere, params, -0.3, 0.25, amplitude=0.2, seed=7)
        new, stats = ts.step_ok(state, 1e-5, params, sphere)
        assert stats.z is None
        # v and u untouched
        np.testing.assert_array_equal(new.v, state.v)
        # phi follows plain CH: mass conserved
        assert abs(fem.integrate(new.phi, sphere)
                   - fem.integrate(state.phi, sphere)) <= 1e-9 * sphere.area

    def test_nonlocal_potential_eigenmode(self, sphere):
        # phi = x3: K z = M (phi - mean) has solution z = phi / 2
        params = PAPER.with_(sigma_override=ts.ok_sigma(PAPER, sphere.area))
        n = sphere.n_vertices
        phi = sphere.vertices[:, 2].copy()
        state = rm.SimState(phi=phi, v=np.full(n, 0.25), mu=np.zeros(n),
                            u=rm.compute_u(np.full(n, 0.25), params, sphere))
        _, stats = ts.step_ok(state, 1e-6, params, sphere)
        assert stats.z is not None
        err = np.abs(stats.z - phi / 2.0).max() / np.abs(phi / 2.0).max()
        assert err < 0.02

    def test_mass_conserved(self, sphere):
        params = PAPER.with_(sigma_override=100.0)
        state = rm.initial_state(sphere, params, -0.5, 0.25, amplitude=0.2, seed=8)
        new, _ = ts.step_ok(state, 1e-5, params, sphere)
        assert abs(fem.integrate(new.phi, sphere)
                   - fem.integrate(state.phi, sphere)) <= 1e-9 * sphere.area


class TestOkSigma:
    def test_paper_value(self):
        sigma = ts.ok_sigma(PAPER, 4.0 * math.pi)
        u_inf = rm.u_equilibrium(PAPER, 4.0 * math.pi)
        assert sigma == pytest.approx((PAPER.c1 * u_inf + PAPER.c2) / 4.0, rel=1e-9)
        assert sigma == pytest.approx(473.911, abs=0.01)

    def test_c1_zero(self):
        params = PAPER.with_(c1=0.0)
        assert ts.ok_sigma(params, 4.0 * math.pi) == pytest.approx(PAPER.c2 / 4.0)

    def test_closed_form_matches_u_equilibrium(self):
        for area in (4.0 * math.pi, 10.0):
            for c1, c2 in ((500.0, 500.0), (100.0, 2000.0), (2000.0, 5.0)):
                params = PAPER.with_(c1=c1, c2=c2)
                via_u = (c1 * rm.u_equilibrium(params, area) + c2) / 4.0
                assert ts.ok_sigma(params, area) == pytest.approx(via_u, rel=1e-9)


class TestAdaptTau:
    CFG = ts.StepperConfig(tau_min=1e-7, tau_max=1e-2, adapt_const=1e-3)

    def test_zero_rate_gives_tau_max(self):
        assert ts.adapt_tau(0.0, self.CFG) == self.CFG.tau_max

    def test_arithmetic(self):
        assert ts.adapt_tau(10.0, self.CFG) == pytest.approx(1e-4)

    def test_huge_rate_clamps(self):
        assert ts.adapt_tau(1e12, self.CFG) == self.CFG.tau_min


class TestRun:
    def test_zero_t_end(self, sphere):
        state = rm.initial_state(sphere, PAPER, -0.5, 0.25, amplitude=1e-3, seed=1)
        result = ts.run(state, PAPER, sphere, ts.StepperConfig(), T_end=0.0)
        assert result.records == []
        np.testing.assert_array_equal(result.state.phi, state.phi)

    def test_fixed_point_detected_stationary(self, sphere):
        state, params, _ = _uniform_fixed_point(sphere, PAPER)
        config = ts.StepperConfig(stationary_tol=1e-4, stationary_steps=3,
                                  tau_min=1e-5, tau_max=1e-3)
        result = ts.run(state, params, sphere, config, T_end=10.0)
        assert result.stationary
        assert len(result.records) <= 10

    def test_records_and_snapshots(self, sphere):
        state = rm.initial_state(sphere, PAPER, -0.25, 0.25, amplitude=1e-3, seed=2)
        config = ts.StepperConfig(tau_min=1e-5, tau_max=1e-5, stationary_steps=10 ** 9)
        result = ts.run(state, PAPER, sphere, config, T_end=5e-5,
                        snapshot_times=(0.0, 3e-5))
        assert len(result.records) == 5
        assert [t for t, _ in result.snapshots] == [0.0, 3e-5]
        rec = result.records[0]
        assert rec.tau == pytest.approx(1e-5)
        assert np.isfinite(rec.energy_total)

    def test_conservation_along_run(self, sphere):
        state = rm.initial_state(sphere, PAPER, -0.25, 0.25, amplitude=1e-3, seed=3)
        config = ts.StepperConfig(tau_min=1e-6, tau_max=1e-3, adapt_const=1e-2,
                                  stationary_steps=10 ** 9)
        result = ts.run(state, PAPER, sphere, config, T_end=2e-3)
        int_phi = [fem.integrate(state.phi, sphere)] + [r.int_phi for r in result.records]
        drift = np.abs(np.diff(int_phi)).max()
        assert drift <= 1e-6 * sphere.area
        for r in result.records:
            total = PAPER.vol_bulk * r.u + r.int_v
            assert abs(total - PAPER.total_mass) <= 1e-12 * PAPER.total_mass


class TestConnectedComponents:
    def test_full_field_single_component(self, sphere):
        comps = ts.connected_components(np.ones(sphere.n_vertices), 0.0, mesh=sphere)
        assert len(comps) == 1
        assert comps[0].area == pytest.approx(sphere.area, rel=1e-12)

    def test_two_antipodal_caps(self, sphere):
        z = sphere.vertices[:, 2]
        field = np.where(np.abs(z) > 0.8, 1.0, -1.0)
        comps = ts.connected_components(field, 0.0, mesh=sphere)
        assert len(comps) == 2

    def test_empty_superlevel_set(self, sphere):
        comps = ts.connected_components(-np.ones(sphere.n_vertices), 0.0, mesh=sphere)
        assert comps == []

    def test_sorted_descending(self, sphere):
        z = sphere.vertices[:, 2]
        field = np.where(z > 0.9, 1.0, np.where(z < -0.5, 1.0, -1.0))
        comps = ts.connected_components(field, 0.0, mesh=sphere)
        assert len(comps) == 2
        assert comps[0].area >= comps[1].area
