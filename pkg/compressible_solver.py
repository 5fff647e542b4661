# compressible_solver.py

"""
Pseudospectral solver for the barotropic compressible Navier-Stokes system

    rho_t + div(rho v) = 0
    rho v_t + rho v . grad v - mu Lap v - (lam + mu) grad div v + grad P(rho) = 0

written for a = rho - 1 and v. The linear part about the rest state is split per
Fourier mode: the divergence-free part of v decays at rate mu |xi|^2, while the
longitudinal component q = xi.v/|xi| and a form the 2x2 acoustic system

    a' = -i|xi| q,    q' = -nu |xi|^2 q - i|xi| a,    nu = lam + 2 mu.

Integrators treat that system with exponential time differencing (etdrk4, phi-functions
of the 2x2 block) or implicitly (imex-bdf2); the remainder cns_rhs - linear part is
explicit. Both reduce to the quasi-static balance N = -L u when L is stiff.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List

import numpy as np

from errors import CFLError, ConfigError, VacuumError
from littlewood_paley import besov_norm
from phi_functions import phi_blocks
from spectral_core import (
    SpectralField, advect, dealiased_product, divergence, from_samples, gradient,
    laplacian, max_abs, physical_samples,
)
from trajectory import Trajectory, running_integral, step_schedule

log = logging.getLogger(__name__)

# --- CONFIGURATION ---
INTEGRATORS = ("etdrk4", "imex-bdf2")
CFL_SAFETY = 0.5
VACUUM_THRESHOLD = 0.01
MONITOR_CEILING = 1e6
OPERATOR_CACHE = 64         # (grid, params, h) triples whose ETD tables stay in memory


@dataclass(frozen=True)
class ViscosityParams:
    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError(f"shear viscosity must be positive, got {self.mu}")
        if not self.nu > 0:
            raise ConfigError(f"nu = lam + 2 mu must be positive, got {self.nu}")

    @property
    def nu(self):
        return self.lam + 2.0 * self.mu

    @property
    def in_theorem_regime(self):
        return self.mu <= self.nu


@dataclass(frozen=True)
class PressureLaw:
    """P(rho) = rho^gamma / gamma, so that P'(1) = 1."""

    gamma: float = 2.0

    def __post_init__(self):
        if not self.gamma >= 1.0:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")

    def pressure(self, rho):
        return np.power(rho, self.gamma) / self.gamma

    def derivative(self, rho):
        return np.power(rho, self.gamma - 1.0)


@dataclass(frozen=True, eq=False)
class CnsState:
    t: float
    a: SpectralField
    v: SpectralField
    params: ViscosityParams
    law: PressureLaw = field(default_factory=PressureLaw)


@dataclass(frozen=True)
class CnsConfig:
    grid: object
    params: ViscosityParams
    law: PressureLaw = field(default_factory=PressureLaw)
    dt: float = 1e-3
    t_end: float = 1.0
    save_every: int = 10
    integrator: str = "etdrk4"
    grading: int = 0

    def __post_init__(self):
        if not self.dt > 0 or not self.t_end > 0:
            raise ConfigError(f"dt and t_end must be positive, got dt={self.dt}, t_end={self.t_end}")
        if self.save_every < 1:
            raise ConfigError(f"save_every must be >= 1, got {self.save_every}")
        if self.grading < 0:
            raise ConfigError(f"grading must be >= 0, got {self.grading}")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")


def _density(a, t=None):
    rho = 1.0 + physical_samples(a)[0]
    rho_min = float(np.min(rho))
    if rho_min <= 0.0:
        raise VacuumError(rho_min, t)
    return rho


def pressure_kappa(law, a):
    """k(a) = P'(1 + a) - P'(1), evaluated pointwise and transformed back (dealiased)."""
    rho = _density(a)
    return from_samples(a.grid, (law.derivative(rho) - 1.0)[np.newaxis])


def cns_rhs(state):
    """(da/dt, dv/dt) with the momentum equation divided through by rho = 1 + a."""
    a, v = state.a, state.v
    mu, lam = state.params.mu, state.params.lam
    rho = _density(a, state.t)
    da = -divergence(v + dealiased_product(a, v))
    viscous = mu * laplacian(v) + (lam + mu) * gradient(divergence(v))
    forcing = (physical_samples(viscous)
               - state.law.derivative(rho) * physical_samples(gradient(a))) / rho
    dv = from_samples(a.grid, forcing) - advect(v, v)
    return da, dv


# --- PER-MODE LINEAR ALGEBRA ---

def _unit_wavevectors(grid):
    kabs = grid.kabs
    return np.divide(grid.kphys, kabs, out=np.zeros_like(grid.kphys), where=kabs > 0)


def _longitudinal(grid, v_coeffs):
    """q = khat . v per mode, and the transverse remainder v - khat q."""
    khat = _unit_wavevectors(grid)
    q = np.sum(khat * v_coeffs, axis=0)
    return q, v_coeffs - khat * q


def _linear(grid, params, a_coeffs, v_coeffs):
    k, k2 = grid.kabs, grid.k2
    q, transverse = _longitudinal(grid, v_coeffs)
    da = -1j * k * q
    dq = -params.nu * k2 * q - 1j * k * a_coeffs[0]
    dv = -params.mu * k2 * transverse + _unit_wavevectors(grid) * dq
    return da[np.newaxis], dv


def acoustic_matrix(k, nu):
    """M = [[0, -ik], [-ik, -nu k^2]] for every k, shape k.shape + (2, 2)."""
    k = np.asarray(k, dtype=np.float64)
    M = np.zeros(k.shape + (2, 2), dtype=np.complex128)
    M[..., 0, 1] = M[..., 1, 0] = -1j * k
    M[..., 1, 1] = -nu * k ** 2
    return M


class _ModeOperator:
    """A function of hL applied per mode: 2x2 on (a, q), scalar on the transverse part."""

    def __init__(self, grid, acoustic, transverse):
        self.grid = grid
        self.acoustic = acoustic
        self.transverse = transverse

    def __call__(self, a_coeffs, v_coeffs):
        q, rest = _longitudinal(self.grid, v_coeffs)
        a, m = a_coeffs[0], self.acoustic
        a_new = m[..., 0, 0] * a + m[..., 0, 1] * q
        q_new = m[..., 1, 0] * a + m[..., 1, 1] * q
        return a_new[np.newaxis], self.transverse * rest + _unit_wavevectors(self.grid) * q_new


@dataclass(frozen=True)
class _EtdOperators:
    half_exp: _ModeOperator
    half_phi1: _ModeOperator
    exp: _ModeOperator
    f1: _ModeOperator
    f2: _ModeOperator
    f3: _ModeOperator


@lru_cache(maxsize=OPERATOR_CACHE)
def _etd_operators(grid, params, h):
    """exp(hL/2), phi1(hL/2), exp(hL) and the ETDRK4 weights, tabulated over distinct |xi|^2."""
    distinct, inverse = np.unique(grid.k2, return_inverse=True)
    inverse = inverse.reshape(grid.shape)

    def tables(step):
        acoustic = phi_blocks(step * acoustic_matrix(np.sqrt(distinct), params.nu))
        transverse = phi_blocks((-params.mu * step * distinct)[:, np.newaxis, np.newaxis])
        return [m[inverse] for m in acoustic], [m[inverse][..., 0, 0] for m in transverse]

    half, full = tables(h / 2), tables(h)

    def combine(*weights):
        parts = [sum(w * m for w, m in zip(weights, table) if w) for table in full]
        return _ModeOperator(grid, *parts)

    return _EtdOperators(
        half_exp=_ModeOperator(grid, half[0][0], half[1][0]),
        half_phi1=_ModeOperator(grid, half[0][1], half[1][1]),
        exp=combine(1.0, 0.0, 0.0, 0.0),
        f1=combine(0.0, 1.0, -3.0, 4.0),
        f2=combine(0.0, 0.0, 1.0, -2.0),
        f3=combine(0.0, 0.0, -1.0, 4.0),
    )


def _remainder(state, a_coeffs, v_coeffs, t):
    grid = state.a.grid
    trial = CnsState(t, SpectralField(grid, a_coeffs), SpectralField(grid, v_coeffs),
                     state.params, state.law)
    da, dv = cns_rhs(trial)
    la, lv = _linear(grid, state.params, a_coeffs, v_coeffs)
    return da.coeffs - la, dv.coeffs - lv


def _axpy(x, scale, y):
    return x[0] + scale * y[0], x[1] + scale * y[1]


def _etdrk4(state, dt):
    """Cox-Matthews ETDRK4; the stage weights sum to phi1(hL), so N = -L u is kept when L is stiff."""
    ops = _etd_operators(state.a.grid, state.params, dt)
    u, t = (state.a.coeffs, state.v.coeffs), state.t

    n_u = _remainder(state, *u, t)
    half_u = ops.half_exp(*u)
    stage_a = _axpy(half_u, dt / 2, ops.half_phi1(*n_u))
    n_a = _remainder(state, *stage_a, t + dt / 2)
    stage_b = _axpy(half_u, dt / 2, ops.half_phi1(*n_a))
    n_b = _remainder(state, *stage_b, t + dt / 2)
    stage_c = _axpy(ops.half_exp(*stage_a), dt / 2,
                    ops.half_phi1(2.0 * n_b[0] - n_u[0], 2.0 * n_b[1] - n_u[1]))
    n_c = _remainder(state, *stage_c, t + dt)

    out = ops.exp(*u)
    out = _axpy(out, dt, ops.f1(*n_u))
    out = _axpy(out, 2.0 * dt, ops.f2(n_a[0] + n_b[0], n_a[1] + n_b[1]))
    return _axpy(out, dt, ops.f3(*n_c))


def _imex_bdf2(state, previous, dt):
    """(3/2 I - dt L) U^{n+1} = 2 U^n - U^{n-1}/2 + dt (2 N^n - N^{n-1}), solved per mode."""
    grid = state.a.grid
    params = state.params
    k, k2 = grid.kabs, grid.k2
    n_now = _remainder(state, state.a.coeffs, state.v.coeffs, state.t)
    n_prev = _remainder(previous, previous.a.coeffs, previous.v.coeffs, previous.t)
    ra = 2.0 * state.a.coeffs - 0.5 * previous.a.coeffs + dt * (2.0 * n_now[0] - n_prev[0])
    rv = 2.0 * state.v.coeffs - 0.5 * previous.v.coeffs + dt * (2.0 * n_now[1] - n_prev[1])

    rq, r_transverse = _longitudinal(grid, rv)
    off = 1j * dt * k
    diag = 1.5 + dt * params.nu * k2
    det = 1.5 * diag + dt ** 2 * k2
    a_new = (diag * ra[0] - off * rq) / det
    q_new = (1.5 * rq - off * ra[0]) / det
    v_new = r_transverse / (1.5 + dt * params.mu * k2) + _unit_wavevectors(grid) * q_new
    return a_new[np.newaxis], v_new


def cfl_limit(state):
    """0.5 min(dx / (max|v| + sqrt(P'(rho_max))), 2 / (nu max|a/(1+a)| k_max^2))."""
    grid = state.a.grid
    rho = _density(state.a, state.t)
    speed = max_abs(state.v) + math.sqrt(float(state.law.derivative(np.max(rho))))
    advective = grid.spacing / speed
    ratio = float(np.max(np.abs((rho - 1.0) / rho)))
    k2_max = float(np.max(grid.k2[grid.dealias_mask]))
    stiff = math.inf if ratio == 0.0 else 2.0 / (state.params.nu * ratio * k2_max)
    return CFL_SAFETY * min(advective, stiff)


def cns_step(state, dt, integrator="etdrk4", previous=None):
    """Advance one step; imex-bdf2 falls back to etdrk4 when no previous state exists.

    previous must lie exactly dt before state.
    """
    limit = cfl_limit(state)
    if dt > limit:
        raise CFLError(dt, limit)
    if integrator == "etdrk4" or (integrator == "imex-bdf2" and previous is None):
        a_new, v_new = _etdrk4(state, dt)
    elif integrator == "imex-bdf2":
        a_new, v_new = _imex_bdf2(state, previous, dt)
    else:
        raise ConfigError(f"unknown integrator {integrator!r}")
    zero = (slice(None),) + (0,) * state.a.grid.dim
    a_new[zero] = state.a.coeffs[zero]
    grid = state.a.grid
    new = CnsState(state.t + dt, SpectralField(grid, a_new), SpectralField(grid, v_new),
                   state.params, state.law)
    _density(new.a, new.t)
    return new


class CompressibleSolver:
    """Owns one compressible run; `run` returns an immutable Trajectory."""

    def __init__(self, config):
        self.config = config

    def _record(self, traj, state):
        da, dv = cns_rhs(state)
        traj.append(state.t, {"a": state.a, "v": state.v}, {"a": da, "v": dv})

    def run(self, a0, v0):
        cfg = self.config
        schedule = step_schedule(cfg.t_end, cfg.dt, cfg.save_every, cfg.grading)
        dt = schedule[-1][0]
        state = CnsState(0.0, a0, v0, cfg.params, cfg.law)
        traj = Trajectory("cns", cfg.grid, config=config_dict(cfg),
                          meta={"dt": dt, "steps": len(schedule), "integrator": cfg.integrator,
                                "grading": cfg.grading})
        self._record(traj, state)
        log.info("cns run: n=%d dim=%d mu=%g nu=%g gamma=%g dt=%g steps=%d grading=%d (%s)",
                 cfg.grid.n, cfg.grid.dim, cfg.params.mu, cfg.params.nu, cfg.law.gamma,
                 dt, len(schedule), cfg.grading, cfg.integrator)
        started = time.perf_counter()
        previous, last_h = None, None
        for h, save in schedule:
            usable = previous if h == last_h else None
            state, previous, last_h = cns_step(state, h, cfg.integrator, usable), state, h
            if save:
                self._record(traj, state)
                log.debug("cns t=%.4f max|v|=%.6e", state.t, max_abs(state.v))
        traj.meta["wall_time"] = time.perf_counter() - started
        log.info("cns run finished in %.2fs, %d snapshots", traj.meta["wall_time"], len(traj))
        return traj


def config_dict(cfg):
    return {
        "grid": {"dim": cfg.grid.dim, "n": cfg.grid.n, "length": cfg.grid.length},
        "mu": cfg.params.mu, "lambda": cfg.params.lam, "nu": cfg.params.nu,
        "gamma": cfg.law.gamma, "dt": cfg.dt, "t_end": cfg.t_end,
        "save_every": cfg.save_every, "integrator": cfg.integrator, "grading": cfg.grading,
    }


def rescale_config(mu, lam, t_end, length):
    """Normalise the shear viscosity to one: (1, lam/mu, mu t_end, length/mu)."""
    if not mu > 0:
        raise ConfigError(f"mu must be positive, got {mu}")
    return 1.0, lam / mu, mu * t_end, length / mu


# --- CONTINUATION MONITOR ---

@dataclass(frozen=True)
class MonitorReport:
    grad_v_integral: float
    a_sup_norm: float
    inf_rho: float
    flagged: bool
    reasons: List[str] = field(default_factory=list)


def continuation_monitor(traj, partition, ceiling=MONITOR_CEILING,
                         vacuum_threshold=VACUUM_THRESHOLD):
    """int_0^T ||grad v||_Linf, ||a||_{Linf(0,T; B^{d/2})} and inf rho over the run."""
    traj.require_nonempty()
    half = partition.grid.dim / 2.0
    grad_v = traj.profile(lambda s: max_abs(gradient(s.fields["v"])))
    a_norms = traj.profile(lambda s: besov_norm(partition, s.fields["a"], half).value)
    inf_rho = float(min(1.0 + np.min(physical_samples(s.fields["a"], False)) for s in traj))
    grad_integral = float(running_integral(traj.times, grad_v)[-1])
    a_sup = float(np.max(a_norms))

    reasons = []
    if inf_rho <= vacuum_threshold:
        reasons.append(f"inf rho = {inf_rho:.3e} <= {vacuum_threshold}")
    if not grad_integral <= ceiling:
        reasons.append(f"int |grad v|_Linf = {grad_integral:.3e} above {ceiling:.1e}")
    if not a_sup <= ceiling:
        reasons.append(f"|a|_B^{half:g} = {a_sup:.3e} above {ceiling:.1e}")
    return MonitorReport(grad_integral, a_sup, inf_rho, bool(reasons), reasons)


# --- LINEAR ACOUSTICS ---

def acoustic_roots(k, nu):
    """Roots of z^2 + nu k^2 z + k^2 = 0 as (slow, fast), computed without cancellation."""
    k = np.asarray(k, dtype=np.float64)
    tau = -0.5 * nu * k ** 2
    delta = np.sqrt((tau ** 2 - k ** 2).astype(np.complex128))
    fast = tau - delta
    slow = np.divide(k ** 2, fast, out=np.zeros_like(fast), where=fast != 0)
    return slow, fast


def scheme_growth_exponents(k, nu, dt, integrator="etdrk4"):
    """Discrete exponents log(z)/dt of the scheme applied to one linear acoustic mode.

    etdrk4 propagates the linear part with exp(dt M), so its exponents are the eigenvalues
    of the mode. For imex-bdf2 they come from the two dominant eigenvalues of the 4x4
    companion matrix.
    """
    M = acoustic_matrix(k, nu)
    if integrator == "etdrk4":
        z = np.linalg.eigvals(phi_blocks(dt * M, order=0)[0])
    elif integrator == "imex-bdf2":
        inverse = np.linalg.inv(1.5 * np.eye(2) - dt * M)
        companion = np.block([[2.0 * inverse, -0.5 * inverse], [np.eye(2), np.zeros((2, 2))]])
        eig = np.linalg.eigvals(companion)
        z = eig[np.argsort(-np.abs(eig))[:2]]
    else:
        raise ConfigError(f"unknown integrator {integrator!r}")
    return np.sort_complex(np.log(z.astype(np.complex128)) / dt)
