"""
Tests for the dyadic decomposition and Besov norms.

Validates:
- The chi/phi profiles and the partition of unity
- Block reconstruction, disjointness and the low-frequency cut-off
- Besov norms of single-frequency fields
- Bernstein, product, commutator and interpolation audits, with round-off in empty blocks
- Besov norms against a high-precision quadrature of the block definition
- Closed-form two-mode commutator and resolution stability of the audit ratios
"""

import math

import mpmath
import numpy as np
import pytest

from conftest import SQRT2_PI, random_field
from errors import BlockRangeError, ComponentError, ExponentError, ZeroBlockError
from littlewood_paley import (
    audit_bernstein, audit_commutator, audit_interpolation, audit_product_law,
    besov_norm, build_partition, chi_profile, commutator_sum, dyadic_block, joint_norm,
    low_cutoff, phi_profile, split_low_high,
)
from spectral_core import gradient, l2_norm, make_grid, transform


def _mode(grid, kx, ky=0):
    x, y = grid.coordinates()
    return transform(grid, np.sin(kx * x + ky * y))


class TestProfiles:
    """Radial cut-off and annulus profiles."""

    def test_chi_plateaus(self):
        assert chi_profile(0.0) == 1.0
        assert chi_profile(0.75) == 1.0
        assert chi_profile(4.0 / 3.0) == 0.0
        assert chi_profile(2.0) == 0.0

    def test_chi_non_increasing(self):
        values = chi_profile(np.linspace(0.0, 2.0, 401))
        assert np.all(np.diff(values) <= 1e-15)

    def test_phi_support(self):
        assert phi_profile(0.7) == 0.0
        assert phi_profile(2.7) == 0.0
        assert phi_profile(1.5) > 0.0

    def test_unit_frequency_sum(self):
        total = sum(phi_profile(2.0 ** -j) for j in range(-6, 7))
        assert total == pytest.approx(1.0, abs=1e-10)


class TestPartition:
    """Tabulated blocks on the grid."""

    def test_default_block_range(self, partition):
        assert partition.j_min == -1
        assert partition.j_max >= 4

    def test_covers_every_nonzero_mode(self, grid, partition):
        nonzero = grid.k2 > 0
        assert np.all(partition.covered[nonzero])
        assert np.allclose(np.sum(partition.weights, axis=0)[nonzero], 1.0, atol=1e-10)

    def test_reconstruction(self, grid, partition, rng):
        f = random_field(grid, rng, mean_zero=False)
        total = sum((dyadic_block(partition, f, j) for j in partition.blocks),
                    start=f.without_mean() * 0.0)
        assert np.allclose(total.coeffs, f.without_mean().coeffs, atol=1e-10)

    def test_distant_blocks_are_disjoint(self, grid, partition, rng):
        f = random_field(grid, rng)
        twice = dyadic_block(partition, dyadic_block(partition, f, 0), 2)
        assert np.all(twice.coeffs == 0.0)

    def test_low_cutoff_telescopes(self, grid, partition, rng):
        f = random_field(grid, rng)
        difference = low_cutoff(partition, f, 2) - low_cutoff(partition, f, 1)
        assert np.allclose(difference.coeffs, dyadic_block(partition, f, 1).coeffs, atol=1e-12)

    def test_out_of_range_block(self, partition):
        with pytest.raises(BlockRangeError):
            partition.block_weight(10)

    def test_empty_range(self, grid):
        with pytest.raises(BlockRangeError):
            build_partition(grid, 3, 1)


class TestBesovNorm:
    """Besov norms and the low/high split."""

    def test_single_frequency_b0_is_l2(self, partition, sin_x):
        assert besov_norm(partition, sin_x, 0.0).value == pytest.approx(SQRT2_PI, rel=1e-10)

    def test_single_frequency_weighting(self, partition, sin_x):
        c = chi_profile(1.0)
        expected = SQRT2_PI * (0.5 * c + (1.0 - c))
        assert besov_norm(partition, sin_x, 1.0).value == pytest.approx(expected, rel=1e-10)

    def test_per_block_entries(self, partition, sin_x):
        norm = besov_norm(partition, sin_x, 0.0)
        assert set(norm.per_block) == set(partition.blocks)
        assert norm.per_block[3] == pytest.approx(0.0, abs=1e-12)

    def test_derivative_order(self, grid, partition):
        f = _mode(grid, 2)
        plain = besov_norm(partition, f, 0.0).value
        assert besov_norm(partition, f, 0.0, order=1).value == pytest.approx(2 * plain)
        assert besov_norm(partition, f, 0.0, order=2).value == pytest.approx(4 * plain)

    def test_joint_norm_sums(self, grid, partition, rng):
        f, g = random_field(grid, rng), random_field(grid, rng)
        expected = besov_norm(partition, f, 0.5).value + besov_norm(partition, g, 0.5).value
        assert joint_norm(partition, [f, g], 0.5) == pytest.approx(expected)

    def test_joint_norm_orders(self, grid, partition, rng):
        f, g = random_field(grid, rng), random_field(grid, rng)
        expected = besov_norm(partition, f, 0.5).value + besov_norm(partition, g, 0.5, order=2).value
        assert joint_norm(partition, [f, g], 0.5, orders=(0, 2)) == pytest.approx(expected)
        with pytest.raises(ValueError):
            joint_norm(partition, [f, g], 0.5, orders=(1,))

    @pytest.mark.parametrize("nu", [0.25, 1.0, 10.0])
    def test_low_high_split(self, grid, partition, rng, nu):
        f = random_field(grid, rng, mean_zero=False)
        low, high = split_low_high(partition, f, nu)
        assert np.allclose((low + high).coeffs, f.without_mean().coeffs, atol=1e-10)

    def test_split_assigns_unit_frequency_to_low(self, partition, sin_x):
        low, high = split_low_high(partition, sin_x, 1.0)
        assert np.allclose(high.coeffs, 0.0)
        assert np.allclose(low.coeffs, sin_x.coeffs, atol=1e-12)

    def test_split_rejects_non_positive_nu(self, partition, sin_x):
        with pytest.raises(ValueError):
            split_low_high(partition, sin_x, 0.0)


class TestAudits:
    """Numerical audits of the harmonic-analysis inequalities."""

    def test_bernstein_bounds(self, grid, partition, rng):
        f = random_field(grid, rng)
        for j in range(-1, 4):
            direct, reverse = audit_bernstein(partition, f, j)
            assert direct <= 8.0 / 3.0 + 1e-10
            assert reverse <= 4.0 / 3.0 + 1e-10

    def test_bernstein_single_mode(self, grid, partition):
        direct, reverse = audit_bernstein(partition, _mode(grid, 2), 1)
        assert direct == pytest.approx(1.0)
        assert reverse == pytest.approx(1.0)

    def test_bernstein_empty_block(self, partition, sin_x):
        with pytest.raises(ZeroBlockError):
            audit_bernstein(partition, sin_x, 3)

    def test_bernstein_uncovered_field(self, grid):
        narrow = build_partition(grid, 0, 1)
        with pytest.raises(BlockRangeError):
            audit_bernstein(narrow, _mode(grid, 7), 0)

    def test_product_law_exponents(self, partition, sin_x):
        with pytest.raises(ExponentError):
            audit_product_law(partition, sin_x, sin_x, 2.0, 0.5)
        with pytest.raises(ExponentError):
            audit_product_law(partition, sin_x, sin_x, 0.5, -0.5)

    def test_product_law_ratio(self, grid, partition, rng):
        g, h = random_field(grid, rng), random_field(grid, rng)
        ratio = audit_product_law(partition, g, h, 0.5, 0.5)
        assert math.isfinite(ratio) and ratio > 0.0

    def test_constant_transport_commutes(self, grid, partition, rng):
        w = transform(grid, np.array([np.full(grid.shape, 0.7), np.full(grid.shape, -1.3)]))
        f = random_field(grid, rng)
        assert commutator_sum(partition, w, f, 0.0) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(ZeroBlockError):
            audit_commutator(partition, w, f, 0.0)

    def test_commutator_ratio(self, grid, partition, rng):
        w = random_field(grid, rng, components=2)
        f = random_field(grid, rng)
        ratio = audit_commutator(partition, w, f, 0.5)
        assert math.isfinite(ratio) and ratio >= 0.0

    def test_commutator_arguments(self, grid, partition, rng, sin_x):
        w = random_field(grid, rng, components=2)
        with pytest.raises(ComponentError):
            audit_commutator(partition, sin_x, sin_x, 0.0)
        with pytest.raises(ExponentError):
            audit_commutator(partition, w, sin_x, 1.5)
        with pytest.raises(ExponentError):
            audit_commutator(partition, w, sin_x, -1.0)

    def test_interpolation_ratio(self, grid, partition, rng):
        assert audit_interpolation(partition, random_field(grid, rng)) <= 1.0 + 1e-10

    def test_round_off_does_not_fill_a_block(self, grid, partition, rng, sin_x):
        noisy = sin_x + _round_off(grid, rng, sin_x)
        with pytest.raises(ZeroBlockError):
            audit_bernstein(partition, noisy, 3)

    def test_round_off_around_a_constant(self, grid, partition, rng):
        constant = transform(grid, np.ones(grid.shape))
        noisy = constant + _round_off(grid, rng, constant)
        with pytest.raises(ZeroBlockError):
            audit_interpolation(partition, noisy)
        assert audit_product_law(partition, noisy, random_field(grid, rng), 0.5, 0.5) == 0.0
        w = transform(grid, np.ones((2,) + grid.shape))
        w = w + _round_off(grid, rng, w)
        with pytest.raises(ZeroBlockError):
            audit_commutator(partition, w, random_field(grid, rng), 0.0)


def _round_off(grid, rng, like):
    """Broadband noise 1e-15 below `like`, the size FFT round-off leaves behind."""
    noise = random_field(grid, rng, components=like.components)
    return noise * (1e-15 * l2_norm(like) / l2_norm(noise))


# --- QUADRATURE ORACLE ---

def _mp_chi(r):
    inner, outer = mpmath.mpf(3) / 4, mpmath.mpf(4) / 3
    t = (outer - r) / (outer - inner)
    if t >= 1:
        return mpmath.mpf(1)
    if t <= 0:
        return mpmath.mpf(0)
    left, right = mpmath.exp(-1 / t), mpmath.exp(-1 / (1 - t))
    return left / (left + right)


def _mp_phi(r):
    return _mp_chi(r / 2) - _mp_chi(r)


def _quadrature_besov(modes, s, blocks):
    """sum_j 2^{js} ||Delta_j f||_{L2(T^2)} for f(x) = sum c cos(m x + theta), by mpmath.quad."""
    total = mpmath.mpf(0)
    for j in blocks:
        weighted = [(_mp_phi(mpmath.mpf(m) / mpmath.mpf(2) ** j) * c, m, theta)
                    for m, c, theta in modes]
        if all(w == 0 for w, _, _ in weighted):
            continue

        def squared(x, weighted=weighted):
            return sum(w * mpmath.cos(m * x + theta) for w, m, theta in weighted) ** 2

        energy = 2 * mpmath.pi * mpmath.quad(squared, mpmath.linspace(0, 2 * mpmath.pi, 9))
        total += mpmath.mpf(2) ** (j * s) * mpmath.sqrt(energy)
    return float(total)


class TestQuadratureOracle:
    """Besov norms of ten fixed trigonometric polynomials against mpmath quadrature."""

    @pytest.mark.parametrize("case", range(10))
    @pytest.mark.parametrize("s", [0.0, 1.0])
    def test_matches_quadrature(self, grid, partition, case, s):
        rng = np.random.default_rng(100 + case)
        modes = [(m, float(c), float(theta)) for m, c, theta in
                 zip(range(1, 6), rng.uniform(-1.0, 1.0, 5), rng.uniform(0.0, 2 * math.pi, 5))]
        x, _ = grid.coordinates()
        f = transform(grid, sum(c * np.cos(m * x + theta) for m, c, theta in modes))
        with mpmath.workdps(25):
            expected = _quadrature_besov(modes, s, partition.blocks)
        assert besov_norm(partition, f, s).value == pytest.approx(expected, rel=1e-2)


# --- CLOSED FORMS AND RESOLUTION STABILITY ---

class TestCommutatorClosedForm:
    """f = cos 2x, w = (cos y, 0): w . grad f lives on |xi| = sqrt 5, f on |xi| = 2."""

    def test_two_modes(self, grid, partition):
        x, y = grid.coordinates()
        f = transform(grid, np.cos(2 * x))
        w = transform(grid, np.array([np.cos(y), np.zeros(grid.shape)]))
        s, r = 0.5, math.sqrt(5.0)
        blocks = list(partition.blocks)
        # ||w . grad Delta_j f - Delta_j (w . grad f)|| = 2 pi |phi_j(2) - phi_j(sqrt 5)|
        numerator = sum(2.0 ** (j * s) * 2 * math.pi
                        * abs(phi_profile(2.0 / 2 ** j) - phi_profile(r / 2 ** j)) for j in blocks)
        grad_w = sum(2.0 ** j * phi_profile(1.0 / 2 ** j) for j in blocks) * SQRT2_PI
        f_norm = sum(2.0 ** (j * s) * phi_profile(2.0 / 2 ** j) for j in blocks) * SQRT2_PI
        assert numerator > 0.0
        assert commutator_sum(partition, w, f, s) == pytest.approx(numerator, rel=1e-10)
        assert audit_commutator(partition, w, f, s) == pytest.approx(
            numerator / (grad_w * f_norm), rel=1e-10)


def _band_limited(n, seed, components=1, band=6):
    """The same random trigonometric polynomial, |xi_i| <= band, sampled on an n-grid."""
    grid = make_grid(2, n)
    rng = np.random.default_rng(seed)
    m1, m2 = np.meshgrid(np.arange(-band, band + 1), np.arange(-band, band + 1), indexing="ij")
    keep = (m1 != 0) | (m2 != 0)
    m1, m2 = m1[keep], m2[keep]
    x, y = grid.coordinates()
    phase = m1 * x[..., np.newaxis] + m2 * y[..., np.newaxis]
    samples = []
    for _ in range(components):
        a, b = rng.standard_normal(m1.size), rng.standard_normal(m1.size)
        samples.append(np.cos(phase) @ a + np.sin(phase) @ b)
    return transform(grid, np.array(samples))


class TestResolutionStability:
    """Audit ratios of band-limited data computed at n = 64 and n = 128."""

    def test_product_law(self):
        ratios = []
        for n in (64, 128):
            g, h = _band_limited(n, 1), _band_limited(n, 2)
            ratios.append(audit_product_law(build_partition(g.grid), g, h, 0.5, 0.5))
        assert ratios[0] > 0.0
        assert ratios[1] / ratios[0] == pytest.approx(1.0, abs=0.2)

    @pytest.mark.parametrize("transport", ["independent", "gradient"])
    def test_commutator(self, transport):
        ratios = []
        for n in (64, 128):
            f = _band_limited(n, 3)
            w = _band_limited(n, 4, components=2) if transport == "independent" else gradient(f)
            ratios.append(audit_commutator(build_partition(f.grid), w, f, 0.5))
        assert ratios[0] > 0.0
        assert ratios[1] / ratios[0] == pytest.approx(1.0, abs=0.3)
