"""Continuous-model physics: parameters, potentials, exchange laws, the
constraint-determined bulk concentration and the free energy.

Mobilities and the gradient-energy prefactor are fixed to one and are not
parameters.  Everything here is a pure function of immutable inputs.
"""

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from . import surface_fem
from .sparse_linalg import zero_mean_project


class ExchangeLaw(enum.Enum):
    REACTION = "reaction"
    ENERGY_DECREASING = "energy_decreasing"


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the membrane model.

    eps: interface width; delta: lipid-cholesterol interaction strength;
    c1, c2: attachment/detachment rates of the reaction law; c: relaxation
    rate of the energy-decreasing law; total_mass: total cholesterol mass M;
    vol_bulk: bulk volume |B|; sigma_override: fixed nonlocal strength for
    the Ohta-Kawasaki dynamics (computed from the data when None).
    """

    eps: float = 0.02
    delta: float = 0.02
    c1: float = 500.0
    c2: float = 500.0
    c: float = 500.0
    total_mass: float = 20.0 * math.pi / 3.0
    vol_bulk: float = 4.0 * math.pi / 3.0
    exchange: ExchangeLaw = ExchangeLaw.REACTION
    sigma_override: float = None

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.total_mass <= 0.0:
            raise ValueError("total_mass must be positive")
        if self.vol_bulk <= 0.0:
            raise ValueError("vol_bulk must be positive")
        if self.exchange is ExchangeLaw.REACTION:
            if self.c1 < 0.0 or self.c2 < 0.0:
                raise ValueError("reaction rates c1, c2 must be nonnegative")
        elif self.c < 0.0:
            raise ValueError("relaxation rate c must be nonnegative")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class SimState:
    """Snapshot of the discrete evolution.

    u is the spatially constant bulk concentration, kept consistent with
    vol_bulk * u + int(v) = total_mass after every accepted step.
    """

    phi: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    u: float
    t: float = 0.0
    tau: float = 0.0

    def copy(self):
        return SimState(self.phi.copy(), self.v.copy(), self.mu.copy(),
                        self.u, self.t, self.tau)

    def is_finite(self):
        return (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.v))
                and np.all(np.isfinite(self.mu)) and np.isfinite(self.u))


def double_well(phi):
    """W(phi) = (1 - phi^2)^2 / 4 and its first two derivatives."""
    phi = np.asarray(phi, dtype=np.float64)
    w = 0.25 * (1.0 - phi ** 2) ** 2
    dw = phi ** 3 - phi
    ddw = 3.0 * phi ** 2 - 1.0
    return w, dw, ddw


def theta_of(v, phi, delta):
    """Cholesterol chemical potential theta = (2/delta)(2v - 1 - phi)."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    return (2.0 / delta) * (2.0 * np.asarray(v) - 1.0 - np.asarray(phi))


def compute_u(v, params, mesh):
    """Bulk concentration from mass conservation: u = (M - int v) / |B|.

    Negative values are allowed (they indicate a configuration fault and are
    flagged by the run diagnostics, not clamped here).
    """
    return (params.total_mass - surface_fem.integrate(v, mesh)) / params.vol_bulk


def exchange_q(u, v, phi, params):
    """Exchange term between bulk and membrane cholesterol."""
    if params.exchange is ExchangeLaw.REACTION:
        return params.c1 * u * (1.0 - np.asarray(v)) - params.c2 * np.asarray(v)
    return -params.c * (theta_of(v, phi, params.delta) - u)


def u_equilibrium(params, area_gamma):
    """Stationary bulk concentration of the reaction law.

    The positive root of
      p(z) = -c1 z^2 + (c1 (M - |Gamma|)/|B| - c2) z + c2 M / |B|,
    returned via the closed form (half-sum plus discriminant square root).
    """
    if params.exchange is not ExchangeLaw.REACTION:
        raise ValueError("u_equilibrium applies to the reaction law")
    if params.c1 <= 0.0:
        raise ValueError("u_equilibrium requires c1 > 0")
    c1, c2 = params.c1, params.c2
    m, vol = params.total_mass, params.vol_bulk
    half = 0.5 * ((m - area_gamma) / vol - c2 / c1)
    root = half + math.sqrt(half * half + c2 * m / (c1 * vol))
    return max(root, 0.0)


def equilibrium_poly(z, params, area_gamma):
    """p(z) whose positive zero is u_equilibrium; used for cross-checks."""
    c1, c2 = params.c1, params.c2
    m, vol = params.total_mass, params.vol_bulk
    return -c1 * z * z + (c1 * (m - area_gamma) / vol - c2) * z + c2 * m / vol


def free_energy(state, params, mesh):
    """(surface, bulk, total) free energy of a state.

    surface = (eps/2) phi^T K phi
            + sum_i lump_i [ W(phi_i)/eps + (2 v_i - 1 - phi_i)^2 / (2 delta) ]
    bulk    = |B| u^2 / 2   (u spatially constant in the reduced model)
    """
    ops = surface_fem.operators(mesh)
    phi = state.phi
    v = state.v
    w, _, _ = double_well(phi)
    coupling = (2.0 * v - 1.0 - phi) ** 2 / (2.0 * params.delta)
    dirichlet = 0.5 * params.eps * float(phi @ ops.stiffness.matvec(phi))
    surface = dirichlet + float(ops.lumped @ (w / params.eps + coupling))
    bulk = 0.5 * params.vol_bulk * state.u ** 2
    return surface, bulk, surface + bulk


def initial_state(mesh, params, phi_hat, v0, amplitude=0.0, seed=0):
    """Standard scenario initial data: phi = phi_hat + perturbation, v = v0.

    mu is seeded with the nodal (gradient-free) chemical potential as a warm
    start for the first implicit solve.
    """
    phi = phi_hat + make_perturbation(mesh, amplitude, seed)
    v = np.full(mesh.n_vertices, float(v0))
    _, dw, _ = double_well(phi)
    mu = dw / params.eps - (2.0 * v - 1.0 - phi) / params.delta
    u = compute_u(v, params, mesh)
    return SimState(phi=phi, v=v, mu=mu, u=u, t=0.0)


def make_perturbation(mesh, amplitude, seed):
    """Deterministic zero-mean perturbation field in [-amplitude, amplitude].

    Values come from a counter-based generator (Philox keyed by the seed, one
    draw per vertex index), then the lumped-weighted mean is removed so the
    perturbation does not move the configured average composition.
    """
    if amplitude < 0.0:
        raise ValueError("amplitude must be nonnegative")
    if amplitude == 0.0:
        return np.zeros(mesh.n_vertices)
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    raw = gen.uniform(-amplitude, amplitude, size=mesh.n_vertices)
    return zero_mean_project(raw, surface_fem.lumped_mass(mesh))
