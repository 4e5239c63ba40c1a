"""Semi-implicit time stepping for the reduced membrane system.

Each step solves one linear block system: the Cahn-Hilliard part and all
stiff interaction terms are implicit, the double-well curvature is lagged
(W''(phi^m) multiplies phi^(m+1)) and the bulk concentration u enters
explicitly.  Three variants share the machinery:

  reduced            full phi/mu/v system with the reaction exchange law
  energy_decreasing  exchange -c (theta - u), theta implicit in (v, phi)
  ohta_kawasaki      phi/mu system plus the explicit nonlocal potential

The sparsity pattern of every block equals the mass-matrix pattern, so the
flattened system is assembled once per run and only its values are
rewritten each step.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import raft_model, surface_fem
from .errors import NoConvergenceError, NumericalError
from .multigrid import MultigridPreconditioner
from .raft_model import ExchangeLaw, SimState
from .sparse_linalg import (
    SparseLUPreconditioner,
    SparseMatrix,
    bicgstab,
    direct_solve,
    interleave_blocks,
    zero_mean_project,
)

VARIANT_REDUCED = "reduced"
VARIANT_OK = "ohta_kawasaki"
VARIANT_ENERGY_DECREASING = "energy_decreasing"


@dataclass
class StepperConfig:
    """Time-stepping and solver settings.

    tau is chosen within [tau_min, tau_max] inversely proportional to the
    previous max rate of change of phi (adapt_const is that rate-tau
    product).  A run counts as almost stationary when the max rate stays
    below stationary_tol for stationary_steps consecutive steps.
    """

    tau_min: float = 1e-7
    tau_max: float = 1e-2
    adapt_const: float = 2e-4
    stationary_tol: float = 1e-4
    stationary_steps: int = 50
    rtol: float = 1e-9
    maxit: int = 400
    direct_threshold: int = 3000
    quadrature: str = "lumped"          # "lumped" | "consistent"
    variant: str = VARIANT_REDUCED

    def __post_init__(self):
        if not 0.0 < self.tau_min <= self.tau_max:
            raise ValueError("require 0 < tau_min <= tau_max")
        if self.adapt_const <= 0.0:
            raise ValueError("adapt_const must be positive")
        if self.quadrature not in ("lumped", "consistent"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if self.variant not in (VARIANT_REDUCED, VARIANT_OK, VARIANT_ENERGY_DECREASING):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class DiagnosticsRecord:
    """Per-step scalars, one record per accepted step.

    For the Ohta-Kawasaki variant the energy columns hold the OK functional
    instead: surface = Cahn-Hilliard part, bulk = nonlocal part.
    """

    t: float
    tau: float
    int_phi: float
    int_v: float
    u: float
    energy_surface: float
    energy_bulk: float
    energy_total: float
    max_rate: float
    solver_iterations: int
    solver_residual: float

    CSV_FIELDS = ("t", "tau", "int_phi", "int_v", "u", "energy_surface",
                  "energy_bulk", "energy_total", "max_rate",
                  "solver_iterations", "solver_residual")


@dataclass
class SolveStats:
    iterations: int
    residual: float
    method: str
    z: np.ndarray = None   # OK nonlocal potential, when applicable


def adapt_tau(prev_max_rate, config):
    """tau = clamp(adapt_const / max(rate, tiny), tau_min, tau_max)."""
    if prev_max_rate < 0.0:
        raise ValueError("rate must be nonnegative")
    tiny = 1e-300
    tau = config.adapt_const / max(prev_max_rate, tiny)
    return min(max(tau, config.tau_min), config.tau_max)


def ok_sigma(params, area_gamma):
    """Nonlocal strength sigma = (c1 u_inf + c2) / 4 expressed through the
    data (closed form in c1, c2, M, |B|, |Gamma|)."""
    c1, c2 = params.c1, params.c2
    m, vol = params.total_mass, params.vol_bulk
    half = 0.5 * (c2 + (m / vol) * c1 - (area_gamma / vol) * c1)
    tilde_sum = half + math.sqrt(half * half + c1 * c2 * area_gamma / vol)
    return 0.25 * tilde_sum


class SystemTemplate:
    """Monolithic linear system with per-step value updates.

    All blocks share the mass-matrix pattern, so the merged CSR pattern is
    fixed and `assemble` rewrites only values and the right-hand side.
    Unknowns are interleaved per vertex (phi_i, mu_i[, v_i]), which keeps
    the local field coupling adjacent and makes ILU(0) effective.
    """

    def __init__(self, fem, params, variant, quadrature="lumped"):
        self.fem = fem
        self.variant = variant
        self.quadrature = quadrature
        self.params = params
        n = fem.mesh.n_vertices
        self.n = n
        mass = fem.mass
        stiff = fem.stiffness
        if variant == VARIANT_OK:
            grid_fields = [[0, 1], [0, 1]]
        else:
            grid_fields = [[0, 1], [0, 1, 2], [0, 2]]
        self.flat, self.pos = interleave_blocks(grid_fields, mass, n)
        d = params.delta
        eps = params.eps
        dp = fem.diag_positions
        lump = fem.lumped
        self.flat.data[self.pos[(0, 1)]] = stiff.data
        self.flat.data[self.pos[(1, 1)]] = -mass.data
        if variant == VARIANT_OK:
            self._base_mu_phi = eps * stiff.data
        else:
            self._base_mu_phi = eps * stiff.data + (1.0 / d) * mass.data
            self.flat.data[self.pos[(1, 2)]] = -(2.0 / d) * mass.data
            v_phi = -(2.0 / d) * stiff.data
            if variant == VARIANT_ENERGY_DECREASING:
                v_phi = v_phi.copy()
                v_phi[dp] -= (2.0 * params.c / d) * lump
            self.flat.data[self.pos[(2, 0)]] = v_phi
            self._base_vv = (4.0 / d) * stiff.data
        self._z_prev = None
        self._last_tau = None
        self._ilu = None
        self._ilu_stale = True
        self._steps_since_refresh = 0
        self._mg = None
        self._mg_capable = fem.mesh.coarser is not None
        # row equilibration of the solved system: the raw rows span ~5
        # orders of magnitude (mass/tau vs the delta^-1 stiffness terms),
        # which puts the attainable Krylov accuracy at the solver tolerance
        self._row_ids = self.flat._row_ids()
        self._row_scale = None
        self._scaled = SparseMatrix(self.flat.n, self.flat.indptr,
                                    self.flat.indices, np.empty_like(self.flat.data))

    @property
    def k(self):
        return 2 if self.variant == VARIANT_OK else 3

    def _equilibrated(self, rhs):
        """Scale rows of the assembled system to unit max magnitude.

        The scale vector is frozen per tau (row norms are dominated by the
        stable mass/tau and stiffness terms), so the scaled matrix drifts
        only as fast as the underlying values and the frozen preconditioner
        stays valid.
        """
        if self._row_scale is None or self._scale_tau != self._last_tau:
            row_max = np.maximum.reduceat(np.abs(self.flat.data),
                                          self.flat.indptr[:-1])
            self._row_scale = 1.0 / np.maximum(row_max, 1e-300)
            self._rs_slots = self._row_scale[self._row_ids]
            self._scale_tau = self._last_tau
            self.mark_stale()
        np.multiply(self.flat.data, self._rs_slots, out=self._scaled.data)
        return self._scaled, rhs * self._row_scale

    def preconditioner(self):
        """Preconditioner for the current (scaled) system.

        Hierarchical meshes get a multigrid V-cycle rebuilt from the current
        state each step (nothing ages, no refactorization).  Meshes without
        a hierarchy fall back to a frozen sparse-LU that is refactored only
        when the Krylov iteration degrades.
        """
        if self._mg_capable:
            if self._mg is None:
                self._mg = MultigridPreconditioner(self)
            if self._pending_mg:
                self._mg.update()
                self._pending_mg = False
            return self._mg
        if self._ilu is None:
            self._ilu = SparseLUPreconditioner(self._scaled)
            self._ilu_stale = False
            self._steps_since_refresh = 0
        elif self._ilu_stale:
            self._ilu.refresh(self._scaled)
            self._ilu_stale = False
            self._steps_since_refresh = 0
        return self._ilu

    def note_iterations(self, iterations):
        """Hysteresis refresh policy: a mildly degraded Krylov iteration is
        cheaper than refactoring every few steps, so refresh only when the
        degradation persists past a refactoring's amortization window or
        becomes severe."""
        if self._mg_capable:
            return
        self._steps_since_refresh += 1
        if iterations > 35 or (iterations > 12 and self._steps_since_refresh >= 15):
            self._ilu_stale = True

    def mark_stale(self):
        self._ilu_stale = True

    def pack(self, *fields):
        x = np.empty(self.k * self.n)
        for f, values in enumerate(fields):
            x[f::self.k] = values
        return x

    def unpack(self, x):
        return tuple(x[f::self.k] for f in range(self.k))

    def assemble(self, state, tau, forcing_vals=None, z=None, sigma=0.0,
                 refresh_mg=True, ddw_floor=None):
        """Write per-step values and return (flat_matrix, rhs).

        ddw_floor clips the lagged double-well curvature from below; the
        multigrid preconditioner assembles its surrogate operator that way
        (the indefinite spinodal diagonal makes exact vertex blocks
        singular at unlucky tau).
        """
        self._pending_mg = refresh_mg and self._mg_capable
        fem = self.fem
        params = self.params
        mass, lump, dp = fem.mass, fem.lumped, fem.diag_positions
        eps, d = params.eps, params.delta
        phi, v, u = state.phi, state.v, state.u
        _, dw, ddw = raft_model.double_well(phi)
        if ddw_floor is not None:
            ddw = np.maximum(ddw, ddw_floor)

        if tau != self._last_tau:
            self._mass_over_tau = mass.data / tau
            self._last_tau = tau
        self.flat.data[self.pos[(0, 0)]] = self._mass_over_tau

        g = ddw * phi - dw
        if self.quadrature == "lumped":
            mu_phi = self._base_mu_phi.copy()
            mu_phi[dp] += lump * ddw / eps
            rhs_mu = lump * (g / eps)
        else:
            mu_phi = self._base_mu_phi + fem.weighted_mass_data(ddw) / eps
            rhs_mu = mass.matvec(g) / eps
        self.flat.data[self.pos[(1, 0)]] = mu_phi

        rhs_phi = mass.matvec(phi) / tau
        if self.variant == VARIANT_OK:
            if sigma != 0.0 and z is not None:
                rhs_mu = rhs_mu - sigma * mass.matvec(z)
            return self._equilibrated(self.pack(rhs_phi, rhs_mu))

        rhs_mu = rhs_mu - lump / d
        vv = (self._mass_over_tau + self._base_vv).copy()
        rhs_v = mass.matvec(v) / tau
        if self.variant == VARIANT_REDUCED:
            vv[dp] += lump * (params.c1 * u + params.c2)
            rhs_v = rhs_v + params.c1 * u * lump
        else:
            vv[dp] += (4.0 * params.c / d) * lump
            rhs_v = rhs_v + lump * (params.c * u + 2.0 * params.c / d)
        self.flat.data[self.pos[(2, 2)]] = vv
        if forcing_vals is not None:
            f1, f2 = forcing_vals
            if self.quadrature == "lumped":
                rhs_phi = rhs_phi + lump * f1
                rhs_v = rhs_v + lump * f2
            else:
                rhs_phi = rhs_phi + mass.matvec(f1)
                rhs_v = rhs_v + mass.matvec(f2)
        return self._equilibrated(self.pack(rhs_phi, rhs_mu, rhs_v))


def _get_template(fem, params, variant, quadrature):
    key = (variant, quadrature, params.eps, params.delta,
           params.c if variant == VARIANT_ENERGY_DECREASING else None)
    cache = getattr(fem, "_template_cache", None)
    if cache is None:
        cache = {}
        fem._template_cache = cache
    tpl = cache.get(key)
    if tpl is None:
        tpl = SystemTemplate(fem, params, variant, quadrature)
        cache[key] = tpl
    else:
        tpl.params = params
    return tpl


def _solve(flat, rhs, x0, config, precond="jacobi"):
    if flat.n <= config.direct_threshold:
        x = direct_solve(flat, rhs, max_n=config.direct_threshold)
        res = float(np.linalg.norm(rhs - flat.matvec(x)))
        return x, SolveStats(0, res, "direct")
    x, iters, res = bicgstab(flat, rhs, x0=x0, rtol=config.rtol,
                             maxit=config.maxit, precond=precond)
    return x, SolveStats(iters, res, "bicgstab")


def _advance(state, fields, tau, params, mesh):
    phi, mu = fields[0], fields[1]
    v = fields[2] if len(fields) == 3 else state.v
    new = SimState(phi=phi, mu=mu, v=v, u=0.0, t=state.t + tau, tau=tau)
    new.u = raft_model.compute_u(new.v, params, mesh)
    if not new.is_finite():
        raise NumericalError(f"non-finite state after step at t={state.t}")
    return new


def step_reduced(state, tau, params, mesh, fem=None, *, config=None,
                 forcing=None, quadrature=None):
    """One semi-implicit step of the reduced (reaction-law) system.

    `forcing`, when given, is a callable t -> (F1, F2) of nodal values added
    to the phi and v equations (manufactured-solution benchmarks).
    """
    if params.exchange is not ExchangeLaw.REACTION:
        raise ValueError("step_reduced requires the reaction exchange law")
    return _step_threefield(state, tau, params, mesh, fem, config, forcing,
                            VARIANT_REDUCED, quadrature)


def step_energy_decreasing(state, tau, params, mesh, fem=None, *, config=None,
                           forcing=None, quadrature=None):
    """One semi-implicit step with the energy-decreasing exchange law."""
    return _step_threefield(state, tau, params, mesh, fem, config, forcing,
                            VARIANT_ENERGY_DECREASING, quadrature)


def _step_threefield(state, tau, params, mesh, fem, config, forcing, variant,
                     quadrature):
    if not state.is_finite():
        raise NumericalError("non-finite input state")
    fem = fem or surface_fem.operators(mesh)
    config = config or StepperConfig(variant=variant)
    quadrature = quadrature or config.quadrature
    template = _get_template(fem, params, variant, quadrature)
    forcing_vals = forcing(state.t + tau) if forcing is not None else None
    flat, rhs = template.assemble(state, tau, forcing_vals=forcing_vals)
    x0 = template.pack(state.phi, state.mu, state.v)
    try:
        x, stats = _solve(flat, rhs, x0, config, precond=template.preconditioner())
    except NoConvergenceError:
        template.mark_stale()
        raise
    template.note_iterations(stats.iterations)
    return _advance(state, template.unpack(x), tau, params, mesh), stats


def step_ok(state, tau, params, mesh, fem=None, *, config=None, sigma=None,
            quadrature=None):
    """One Ohta-Kawasaki step: Cahn-Hilliard plus the lagged nonlocal term.

    The potential z solves K z = M (phi - mean(phi)) with zero weighted
    mean; sigma * M z enters the chemical-potential equation explicitly.
    v and the mass bookkeeping are untouched.
    """
    if not state.is_finite():
        raise NumericalError("non-finite input state")
    fem = fem or surface_fem.operators(mesh)
    config = config or StepperConfig(variant=VARIANT_OK)
    quadrature = quadrature or config.quadrature
    if sigma is None:
        sigma = params.sigma_override
    if sigma is None:
        sigma = ok_sigma(params, fem.mesh.area)
    template = _get_template(fem, params, VARIANT_OK, quadrature)
    n = fem.mesh.n_vertices
    z = None
    if sigma != 0.0:
        phi_bar = float(fem.lumped @ state.phi) / fem.mesh.area
        rhs_z = fem.mass.matvec(state.phi - phi_bar)
        z0 = template._z_prev
        z, _, _ = bicgstab(fem.stiffness, rhs_z, x0=z0,
                           rtol=min(config.rtol * 10, 1e-6), maxit=config.maxit)
        z = zero_mean_project(z, fem.lumped)
        template._z_prev = z
    flat, rhs = template.assemble(state, tau, z=z, sigma=sigma)
    x0 = template.pack(state.phi, state.mu)
    try:
        x, stats = _solve(flat, rhs, x0, config, precond=template.preconditioner())
    except NoConvergenceError:
        template.mark_stale()
        raise
    template.note_iterations(stats.iterations)
    stats.z = z
    return _advance(state, template.unpack(x), tau, params, mesh), stats


@dataclass
class RunResult:
    state: SimState
    records: list
    snapshots: list
    reason: str
    stationary: bool = False

    @property
    def final_max_rate(self):
        return self.records[-1].max_rate if self.records else math.inf


def run(state, params, mesh, config, T_end=None, snapshot_times=(),
        forcing=None, fem=None):
    """Advance until t >= T_end or the stationarity criterion fires.

    The first step uses tau_min; afterwards tau follows adapt_tau with a
    growth cap of 2x per step.  A failed solve halves tau and retries up to
    five times, then the run aborts with the partial results.
    Emits one DiagnosticsRecord per accepted step and (t, state) snapshots
    the first time t reaches each requested snapshot time.
    """
    fem = fem or surface_fem.operators(mesh)
    if T_end is None and config.stationary_tol <= 0.0:
        raise ValueError("need T_end or a positive stationary_tol")
    step_fn = {
        VARIANT_REDUCED: step_reduced,
        VARIANT_ENERGY_DECREASING: step_energy_decreasing,
        VARIANT_OK: step_ok,
    }[config.variant]
    records = []
    snapshots = []
    pending = sorted(snapshot_times)
    state = state.copy()
    while pending and pending[0] <= state.t:
        snapshots.append((pending.pop(0), state.copy()))
    tau = config.tau_min
    still = 0
    reason = "t_end"
    warned_negative_u = False
    while True:
        if T_end is not None and state.t >= T_end * (1.0 - 1e-12):
            reason = "t_end"
            break
        if T_end is not None:
            tau = min(tau, T_end - state.t)
        new_state = None
        for attempt in range(6):
            try:
                if config.variant == VARIANT_OK:
                    new_state, stats = step_fn(state, tau, params, mesh, fem,
                                               config=config)
                else:
                    new_state, stats = step_fn(state, tau, params, mesh, fem,
                                               config=config, forcing=forcing)
                break
            except (NoConvergenceError, NumericalError):
                # first retry reuses tau: the failed step marked the
                # preconditioner stale, so a refreshed factorization usually
                # suffices; afterwards halve tau
                if attempt > 0:
                    tau *= 0.5
                if tau < config.tau_min * 0.5:
                    break
        if new_state is None:
            return RunResult(state, records, snapshots, "aborted")
        max_rate = float(np.abs(new_state.phi - state.phi).max()) / tau
        state = new_state
        records.append(_make_record(state, tau, max_rate, stats, params, mesh, config))
        if state.u < 0.0 and not warned_negative_u:
            warnings.warn(f"bulk concentration negative (u={state.u:.3e}) at t={state.t:.3e}")
            warned_negative_u = True
        while pending and state.t >= pending[0] * (1.0 - 1e-12):
            snapshots.append((pending.pop(0), state.copy()))
        if max_rate < config.stationary_tol:
            still += 1
            if still >= config.stationary_steps:
                reason = "stationary"
                break
        else:
            still = 0
        tau = min(adapt_tau(max_rate, config), 2.0 * tau)
    return RunResult(state, records, snapshots, reason,
                     stationary=(reason == "stationary"))


def _make_record(state, tau, max_rate, stats, params, mesh, config):
    fem = surface_fem.operators(mesh)
    int_phi = fem.integrate(state.phi)
    int_v = fem.integrate(state.v)
    if config.variant == VARIANT_OK:
        w, _, _ = raft_model.double_well(state.phi)
        ch = (0.5 * params.eps * float(state.phi @ fem.stiffness.matvec(state.phi))
              + float(fem.lumped @ w) / params.eps)
        sigma = params.sigma_override
        if sigma is None:
            sigma = ok_sigma(params, mesh.area)
        nonlocal_part = 0.0
        if stats.z is not None:
            nonlocal_part = 0.5 * sigma * float(stats.z @ fem.stiffness.matvec(stats.z))
        e_surface, e_bulk = ch, nonlocal_part
    else:
        e_surface, e_bulk, _ = raft_model.free_energy(state, params, mesh)
    return DiagnosticsRecord(
        t=state.t, tau=tau, int_phi=int_phi, int_v=int_v, u=state.u,
        energy_surface=e_surface, energy_bulk=e_bulk,
        energy_total=e_surface + e_bulk, max_rate=max_rate,
        solver_iterations=stats.iterations, solver_residual=stats.residual,
    )


@dataclass
class Component:
    area: float
    vertices: np.ndarray


def connected_components(field, threshold=0.0, mesh=None):
    """Connected components of the superlevel set {field > threshold}.

    Components are vertex-graph components of the mesh restricted to
    vertices above the threshold, each with its lumped-mass area, sorted by
    area descending.
    """
    if isinstance(field, surface_fem.NodalField):
        mesh = field.mesh
        values = field.values
    else:
        if mesh is None:
            raise ValueError("mesh required when field is a bare array")
        values = np.asarray(field)
    lump = surface_fem.lumped_mass(mesh)
    offsets, neighbors = mesh.vertex_adjacency()
    mask = values > threshold
    label = np.full(mesh.n_vertices, -1, dtype=np.int64)
    comps = []
    for start in np.nonzero(mask)[0]:
        if label[start] >= 0:
            continue
        cid = len(comps)
        stack = [int(start)]
        label[start] = cid
        members = []
        while stack:
            i = stack.pop()
            members.append(i)
            for j in neighbors[offsets[i]:offsets[i + 1]]:
                if mask[j] and label[j] < 0:
                    label[j] = cid
                    stack.append(int(j))
        members = np.array(members, dtype=np.int64)
        comps.append(Component(area=float(lump[members].sum()), vertices=members))
    comps.sort(key=lambda c: c.area, reverse=True)
    return comps
