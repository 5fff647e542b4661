# functionals.py

"""
A priori functionals of the compressible/incompressible comparison.

With u = v - V the perturbation and s = d/2 - 1:

    X_d(T) = ||Qu, a, nu grad a||_{Linf(0,T; B^s)}
    Y_d(T) = ||Qu_t, nu grad^2 Qu, nu grad^2 a^l, grad a^h||_{L1(0,T; B^s)}
    Z_d(T) = ||Pu||_{Linf(0,T; B^s)}
    W_d(T) = ||Pu_t, mu grad^2 Pu||_{L1(0,T; B^s)}
    V_d(T) = ||V||_{Linf(0,T; B^s)} + ||V_t, grad^2 V||_{L1(0,T; B^s)}

Joint norms are sums of the individual norms. E(T) = Z_d + W_d + ||a||_{Linf(B^{d/2})} is
the incompressible-limit error whose decay in nu the sweep measures.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from errors import GridMismatchError, NegativeEnergyError, TimeGridMismatchError
from helmholtz import helmholtz_split
from incompressible_solver import DEFAULT_C, empirical_constant, vd_profile
from littlewood_paley import besov_norm, dyadic_block, joint_norm, split_low_high
from spectral_core import gradient, inner, l2_norm
from trajectory import Trajectory, running_integral, running_max

log = logging.getLogger(__name__)

# --- CONFIGURATION ---
TIME_TOL = 1e-12
RADICAND_TOL = 1e-12


def perturbation_fields(cns_traj, ins_traj):
    """u = v - V with its P/Q parts, a, and V, all with their time derivatives."""
    cns_traj.require_nonempty()
    ins_traj.require_nonempty()
    if cns_traj.grid != ins_traj.grid:
        raise GridMismatchError(f"grids differ: {cns_traj.grid} vs {ins_traj.grid}")
    if len(cns_traj) != len(ins_traj) or np.any(
        np.abs(cns_traj.times - ins_traj.times) > TIME_TOL * max(1.0, float(cns_traj.times[-1]))
    ):
        raise TimeGridMismatchError(
            f"snapshot times differ ({len(cns_traj)} cns vs {len(ins_traj)} ins snapshots)"
        )

    pert = Trajectory("perturbation", cns_traj.grid, config=dict(cns_traj.config),
                      meta={"ins_config": dict(ins_traj.config)})
    for c, i in zip(cns_traj, ins_traj):
        u = c.fields["v"] - i.fields["V"]
        u_t = c.rhs["v"] - i.rhs["V"]
        Pu, Qu = helmholtz_split(u)
        Pu_t, Qu_t = helmholtz_split(u_t)
        pert.append(
            c.t,
            {"u": u, "Pu": Pu, "Qu": Qu, "a": c.fields["a"], "V": i.fields["V"]},
            {"u": u_t, "Pu": Pu_t, "Qu": Qu_t, "a": c.rhs["a"], "V": i.rhs["V"]},
        )
    return pert


@dataclass
class FunctionalReport:
    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    V: np.ndarray
    E: np.ndarray
    nu: float
    mu: float = 1.0
    lj: Dict[int, np.ndarray] = field(default_factory=dict)
    qv_profile: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    @property
    def Xd(self):
        return float(self.X[-1])

    @property
    def Yd(self):
        return float(self.Y[-1])

    @property
    def Zd(self):
        return float(self.Z[-1])

    @property
    def Wd(self):
        return float(self.W[-1])

    @property
    def Vd(self):
        return float(self.V[-1])

    @property
    def error(self):
        return float(self.E[-1])

    def rows(self):
        """(T, Xd, Yd, Zd, Wd, Vd, E) per saved time."""
        return list(zip(self.times, self.X, self.Y, self.Z, self.W, self.V, self.E))


def compute_XYZWV(pert, partition, nu, mu=1.0, blocks=True):
    pert.require_nonempty()
    s = partition.grid.dim / 2.0 - 1.0
    times = pert.times

    def norm(f, order=0, exponent=s):
        return besov_norm(partition, f, exponent, order=order).value

    qu_sup = pert.profile(lambda snap: norm(snap.fields["Qu"]))
    a_sup = pert.profile(lambda snap: norm(snap.fields["a"]))
    grad_a_sup = pert.profile(lambda snap: nu * norm(snap.fields["a"], order=1))
    X = running_max(qu_sup) + running_max(a_sup) + running_max(grad_a_sup)

    def y_integrand(snap):
        low, high = split_low_high(partition, snap.fields["a"], nu)
        fields = [snap.rhs["Qu"], nu * snap.fields["Qu"], nu * low, high]
        return joint_norm(partition, fields, s, orders=(0, 2, 2, 1))

    Y = running_integral(times, pert.profile(y_integrand))
    Z = running_max(pert.profile(lambda snap: norm(snap.fields["Pu"])))
    W = running_integral(times, pert.profile(
        lambda snap: joint_norm(partition, [snap.rhs["Pu"], mu * snap.fields["Pu"]], s,
                                orders=(0, 2))
    ))
    V = vd_profile(pert, partition, "V")
    a_critical = running_max(pert.profile(lambda snap: norm(snap.fields["a"], exponent=s + 1)))
    E = Z + W + a_critical

    report = FunctionalReport(times, X, Y, Z, W, V, E, nu=float(nu), mu=float(mu),
                              qv_profile=qu_sup)
    if blocks:
        report.lj = lj_profiles(pert, partition, nu)
        report.diagnostics["lj_decay"] = lj_decay_table(report.lj, times, nu)
    report.diagnostics["a_critical_sup"] = float(a_critical[-1])
    return report


# --- LOCALISED ENERGY ---

def lj_energy(aj, quj, nu):
    """sqrt of int 2 a_j^2 + 2 |Qu_j|^2 + 2 nu Qu_j . grad a_j + |nu grad a_j|^2."""
    grad_a = gradient(aj)
    a2, q2, g2 = l2_norm(aj) ** 2, l2_norm(quj) ** 2, l2_norm(grad_a) ** 2
    radicand = 2 * a2 + 2 * q2 + 2 * nu * inner(quj, grad_a) + nu ** 2 * g2
    if radicand < -RADICAND_TOL * max(1.0, 2 * a2 + 2 * q2 + nu ** 2 * g2):
        raise NegativeEnergyError(f"L_j^2 = {radicand:.3e} is negative")
    return math.sqrt(max(radicand, 0.0))


def lj_equivalence_ratio(aj, quj, nu):
    """L_j / ||(Qu_j, a_j, nu grad a_j)||_{L2}; lies in [0.618, 1.618]."""
    scale = math.sqrt(l2_norm(quj) ** 2 + l2_norm(aj) ** 2 + (nu * l2_norm(gradient(aj))) ** 2)
    if scale == 0.0:
        return 1.0
    return lj_energy(aj, quj, nu) / scale


def lj_profiles(pert, partition, nu):
    """{j: L_j(t)} over the saved times."""
    return {
        j: pert.profile(lambda snap, j=j: lj_energy(
            dyadic_block(partition, snap.fields["a"], j),
            dyadic_block(partition, snap.fields["Qu"], j), nu))
        for j in partition.blocks
    }


def parabolic_split_rate(j, nu):
    """min(nu 2^{2j}, 1/nu): damping rate of block j relative to L_j^2."""
    return min(nu * 4.0 ** j, 1.0 / nu)


def lj_decay_table(lj, times, nu):
    """{j: split rate, observed mean decay rate of L_j} for blocks that start nonzero."""
    span = float(times[-1] - times[0])
    table = {}
    for j, profile in lj.items():
        entry = {"split_rate": parabolic_split_rate(j, nu), "observed_rate": None}
        if span > 0 and profile[0] > 0 and profile[-1] > 0:
            entry["observed_rate"] = float(math.log(profile[0] / profile[-1]) / span)
        table[j] = entry
    return table


# --- THEOREM-LEVEL CHECKS ---

@dataclass(frozen=True)
class TheoremInputs:
    """Initial-data norms entering the smallness condition and the bound."""

    a0_low: float       # ||a0||_{B^{d/2-1}}
    a0_high: float      # ||a0||_{B^{d/2}}
    qu0: float          # ||Qu0||_{B^{d/2-1}}
    M: float
    mu: float
    nu: float

    @property
    def data(self):
        return self.a0_low + self.nu * self.a0_high + self.qu0 + self.M ** 2 + self.mu ** 2

    def growth(self, C):
        """C e^{CM} (||a0|| + nu ||a0|| + ||Qu0|| + M^2 + mu^2)."""
        with np.errstate(over="ignore"):
            return float(C * np.exp(C * self.M) * self.data)


def theorem_inputs(a0, qu0, partition, M, mu, nu):
    s = partition.grid.dim / 2.0 - 1.0
    return TheoremInputs(
        besov_norm(partition, a0, s).value, besov_norm(partition, a0, s + 1).value,
        besov_norm(partition, qu0, s).value, float(M), float(mu), float(nu),
    )


def inputs_from_perturbation(pert, partition, M, mu, nu):
    first = pert[0]
    return theorem_inputs(first.fields["a"], first.fields["Qu"], partition, M, mu, nu)


@dataclass(frozen=True)
class SmallnessCheck:
    lhs: float
    rhs: float
    ratio: float
    largest_C: float

    @property
    def holds(self):
        return self.lhs <= self.rhs


def check_smallness(inputs, C=DEFAULT_C, report=None):
    """C e^{CM}(...) <= sqrt(nu) sqrt(mu); also the largest C for which it holds."""
    lhs = inputs.growth(C)
    rhs = math.sqrt(inputs.nu) * math.sqrt(inputs.mu)
    largest = empirical_constant(rhs, inputs.growth) if inputs.data > 0 else math.inf
    check = SmallnessCheck(lhs, rhs, lhs / rhs, largest)
    if report is not None:
        report.diagnostics["smallness"] = {
            "C": C, "lhs": lhs, "rhs": rhs, "ratio": check.ratio, "largest_C": largest,
        }
    return check


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    empirical_C: float

    @property
    def holds(self):
        return self.lhs <= self.rhs


def check_theorem_bound(report, inputs, C=DEFAULT_C):
    """X_d + Y_d + sqrt(nu) (Z_d + W_d) against C e^{CM}(...)."""
    lhs = report.Xd + report.Yd + math.sqrt(inputs.nu) * (report.Zd + report.Wd)
    check = BoundCheck(lhs, inputs.growth(C), empirical_constant(lhs, inputs.growth))
    report.constants["theorem_C"] = check.empirical_C
    report.diagnostics["bound"] = {"C": C, "lhs": lhs, "rhs": check.rhs,
                                   "empirical_C": check.empirical_C}
    return check
