# littlewood_paley.py

"""
Homogeneous Littlewood-Paley analysis on the periodic grid.

The radial profile chi equals 1 on |xi| <= 3/4 and 0 on |xi| >= 4/3, built from the
bump quotient psi(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}). The block profile is
phi(xi) = chi(xi/2) - chi(xi), supported in 3/4 <= |xi| <= 8/3. Block j multiplies the
coefficient at xi by phi(2^-j |xi_phys|), xi_phys = 2*pi*xi/length.

Besov norms are the l1 sum over blocks of 2^{js} ||Delta_j f||_{L2}; block L2 norms come
from the coefficients by Parseval, so no transform is needed to evaluate a norm.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict

import numpy as np

from errors import BlockRangeError, ComponentError, ExponentError, ZeroBlockError
from spectral_core import advect, apply_multiplier, dealiased_product, l2_norm

log = logging.getLogger(__name__)

# --- CONFIGURATION ---
CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0
COVERAGE_TOL = 1e-10
ZERO_RTOL = 1e-13          # block content below this fraction of the field is round-off


def _bump_quotient(t):
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    left = np.exp(-1.0 / ti)
    right = np.exp(-1.0 / (1.0 - ti))
    out[inside] = left / (left + right)
    return out


def chi_profile(r):
    """Smooth radial non-increasing cut-off: 1 on [0, 3/4], 0 on [4/3, inf)."""
    r_arr = np.asarray(r, dtype=np.float64)
    out = _bump_quotient((CHI_OUTER - r_arr) / (CHI_OUTER - CHI_INNER)).reshape(r_arr.shape)
    return float(out) if out.ndim == 0 else out


def phi_profile(r):
    """Dyadic annulus profile phi(r) = chi(r/2) - chi(r)."""
    r_arr = np.asarray(r, dtype=np.float64)
    out = np.asarray(chi_profile(r_arr / 2.0)) - np.asarray(chi_profile(r_arr))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BesovNorm:
    s: float
    value: float
    per_block: Dict[int, float]


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    grid: object
    j_min: int
    j_max: int
    weights: np.ndarray
    chi: Callable = field(default=chi_profile)
    phi: Callable = field(default=phi_profile)

    @property
    def blocks(self):
        return range(self.j_min, self.j_max + 1)

    def _index(self, j):
        if not self.j_min <= j <= self.j_max:
            raise BlockRangeError(f"block {j} outside [{self.j_min}, {self.j_max}]")
        return j - self.j_min

    def block_weight(self, j):
        return self.weights[self._index(j)]

    @cached_property
    def squared_weights(self):
        w2 = (self.weights ** 2).reshape(len(self.weights), -1)
        w2.setflags(write=False)
        return w2

    @cached_property
    def covered(self):
        """Nonzero modes on which the blocks sum to one."""
        total = np.sum(self.weights, axis=0)
        mask = np.abs(total - 1.0) <= COVERAGE_TOL
        mask[(0,) * self.grid.dim] = False
        return mask

    def check_covered(self, f):
        """Raise if f carries energy on nonzero modes no block accounts for."""
        uncovered = ~self.covered
        uncovered[(0,) * self.grid.dim] = False
        if np.any(np.abs(f.coeffs[:, uncovered]) > 0.0):
            raise BlockRangeError(
                f"field has content outside the covered range [{self.j_min}, {self.j_max}]"
            )


def build_partition(grid, j_min=None, j_max=None):
    """Tabulate phi(2^-j xi_phys) for every block needed to cover the resolved modes."""
    if j_min is None:
        j_min = math.floor(math.log2(2 * math.pi / grid.length) - 1)
    if j_max is None:
        j_max = math.ceil(math.log2(math.pi * grid.n / grid.length) + 1)
    if j_min > j_max:
        raise BlockRangeError(f"empty block range [{j_min}, {j_max}]")
    kabs = grid.kabs
    weights = np.stack([phi_profile(kabs / 2.0 ** j) for j in range(j_min, j_max + 1)])
    weights[(slice(None),) + (0,) * grid.dim] = 0.0
    weights.setflags(write=False)
    log.debug("partition for %s: blocks [%d, %d]", grid, j_min, j_max)
    return DyadicPartition(grid, int(j_min), int(j_max), weights)


def dyadic_block(p, f, j):
    return apply_multiplier(f, p.block_weight(j))


def low_cutoff(p, f, k):
    """S_k f = chi(2^-k D) f; the zero mode is kept."""
    return apply_multiplier(f, p.chi(p.grid.kabs / 2.0 ** k))


def _block_energies(p, f, order=0):
    power = np.sum(np.abs(f.coeffs) ** 2, axis=0)
    if order:
        power = power * p.grid.k2 ** order
    return p.grid.volume * (p.squared_weights @ power.reshape(-1))


def besov_norm(p, f, s, order=0):
    """||grad^order f|| in the homogeneous Besov space B^s_{2,1}.

    For order > 0 the block norm is that of the full derivative tensor, which by
    Parseval equals || |xi|^order Delta_j f ||_{L2}.
    """
    energies = _block_energies(p, f, order)
    per_block = {
        j: 2.0 ** (j * s) * math.sqrt(max(float(e), 0.0)) for j, e in zip(p.blocks, energies)
    }
    return BesovNorm(float(s), float(sum(per_block.values())), per_block)


def joint_norm(p, fields, s, orders=None):
    """Joint norm ||f, g, ...|| read as the sum of the individual norms.

    orders gives the derivative order taken on each field (all zero by default).
    """
    orders = [0] * len(fields) if orders is None else list(orders)
    if len(orders) != len(fields):
        raise ValueError(f"{len(fields)} fields but {len(orders)} derivative orders")
    return sum(besov_norm(p, f, s, order=k).value for f, k in zip(fields, orders))


def split_low_high(p, f, nu):
    """Low part: blocks with 2^k nu <= 1. High part: the rest. Means are dropped."""
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    low = np.zeros(p.grid.shape)
    high = np.zeros(p.grid.shape)
    for j, w in zip(p.blocks, p.weights):
        if 2.0 ** j * nu <= 1.0:
            low += w
        else:
            high += w
    return apply_multiplier(f, low), apply_multiplier(f, high)


# --- AUDITS ---

def _vanishes(part, whole):
    return part <= ZERO_RTOL * whole


def _empty(p, f):
    """True when f has no content off its mean beyond FFT round-off."""
    return _vanishes(besov_norm(p, f, 0.0).value, l2_norm(f))


def audit_bernstein(p, f, j):
    """Return (r_direct, r_reverse) for the block Delta_j f."""
    p.check_covered(f)
    fj = dyadic_block(p, f, j)
    norm = l2_norm(fj)
    if _vanishes(norm, l2_norm(f)):
        raise ZeroBlockError(f"block {j} of the field is empty")
    grad_norm = math.sqrt(
        p.grid.volume * float(np.sum(p.grid.k2 * np.sum(np.abs(fj.coeffs) ** 2, axis=0)))
    )
    scale = 2.0 ** j
    return grad_norm / (scale * norm), norm * scale / grad_norm


def audit_product_law(p, g, h, s1, s2):
    """||gh||_{B^{s1+s2-d/2}} / (||g||_{B^s1} ||h||_{B^s2}) with a dealiased product."""
    half = p.grid.dim / 2.0
    if s1 > half or s2 > half or s1 + s2 <= 0:
        raise ExponentError(f"need s1, s2 <= {half} and s1 + s2 > 0, got ({s1}, {s2})")
    if _empty(p, g) or _empty(p, h):
        return 0.0
    denominator = besov_norm(p, g, s1).value * besov_norm(p, h, s2).value
    product = dealiased_product(g, h)
    return besov_norm(p, product, s1 + s2 - half).value / denominator


def commutator_sum(p, w, f, s):
    """sum_j 2^{js} ||w . grad Delta_j f - Delta_j (w . grad f)||_{L2}."""
    transported = advect(w, f)
    total = 0.0
    for j in p.blocks:
        weight = p.block_weight(j)
        commutator = advect(w, apply_multiplier(f, weight)) - apply_multiplier(transported, weight)
        total += 2.0 ** (j * s) * l2_norm(commutator)
    return total


def audit_commutator(p, w, f, s):
    half = p.grid.dim / 2.0
    if not w.is_vector or not f.is_scalar:
        raise ComponentError("commutator audit needs a vector w and a scalar f")
    if not -half < s <= half:
        raise ExponentError(f"need -{half} < s <= {half}, got {s}")
    p.check_covered(f)
    if _empty(p, w) or _empty(p, f):
        raise ZeroBlockError("commutator audit with vanishing grad w or f")
    denominator = besov_norm(p, w, half, order=1).value * besov_norm(p, f, s).value
    return commutator_sum(p, w, f, s) / denominator


def audit_interpolation(p, f):
    """||f||_{B^{d/2}} / sqrt(||f||_{B^{d/2-1}} ||f||_{B^{d/2+1}}); at most 1 by Cauchy-Schwarz."""
    half = p.grid.dim / 2.0
    if _empty(p, f):
        raise ZeroBlockError("interpolation audit of a field with no nonzero modes")
    lower = besov_norm(p, f, half - 1).value
    upper = besov_norm(p, f, half + 1).value
    return besov_norm(p, f, half).value / math.sqrt(lower * upper)
