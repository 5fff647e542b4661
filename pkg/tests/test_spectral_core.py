"""
Tests for the periodic spectral layer.

Validates:
- Grid validation and the 2/3-rule mask
- Transforms, derivatives and Parseval norms
- Dealiased products and the transport term
- Snapshot files
"""

import math

import numpy as np
import pytest

from conftest import SQRT2_PI, random_field
from errors import ComponentError, GridError, GridMismatchError, ShapeMismatchError
from spectral_core import (
    SpectralField, advect, dealiased_product, derivative, divergence, gradient, inner,
    inverse_laplacian, inverse_transform, l2_norm, laplacian, load_snapshot, make_grid,
    max_abs, physical_samples, save_snapshot, transform, truncate,
)


class TestGrid:
    """Grid construction and derived tables."""

    @pytest.mark.parametrize("dim,n,length", [(1, 16, 1.0), (4, 16, 1.0), (2, 12, 1.0),
                                              (2, 4, 1.0), (2, 16, 0.0), (2, 16, -1.0)])
    def test_rejects_invalid_grids(self, dim, n, length):
        with pytest.raises(GridError):
            make_grid(dim, n, length)

    def test_dealias_mask_keeps_two_thirds(self, grid):
        # n = 16 keeps |xi_axis| <= 5 on each axis
        assert grid.dealias_mask.sum() == 11 ** 2
        assert grid.dealias_mask[5, 0] and not grid.dealias_mask[6, 0]

    def test_physical_wavevectors_scale_with_length(self):
        g = make_grid(2, 16, 4 * math.pi)
        assert g.kphys[0][1, 0] == pytest.approx(0.5)
        assert g.k2[1, 1] == pytest.approx(0.5)

    def test_tables_are_read_only(self, grid):
        with pytest.raises(ValueError):
            grid.k2[0, 0] = 1.0


class TestTransforms:
    """Forward/inverse transform and the field container."""

    def test_round_trip(self, grid, rng):
        samples = rng.standard_normal(grid.shape)
        back = inverse_transform(transform(grid, samples))
        assert np.max(np.abs(back - samples)) <= 1e-12 * np.max(np.abs(samples))

    def test_zero_mode_is_mean(self, grid):
        f = transform(grid, np.full(grid.shape, 3.0))
        assert f.mean()[0] == pytest.approx(3.0)
        assert np.allclose(f.without_mean().coeffs, 0.0)

    def test_sin_has_two_modes(self, sin_x):
        nonzero = np.argwhere(np.abs(sin_x.coeffs[0]) > 1e-14)
        assert sorted(map(tuple, nonzero)) == [(1, 0), (15, 0)]

    def test_shape_mismatch(self, grid):
        with pytest.raises(ShapeMismatchError):
            SpectralField(grid, np.zeros((3, 3)))
        with pytest.raises(ShapeMismatchError):
            transform(grid, np.zeros((8, 8)))

    def test_arithmetic_checks_components_and_grids(self, grid, sin_x):
        vector = SpectralField.zeros(grid, 2)
        with pytest.raises(ComponentError):
            sin_x + vector
        with pytest.raises(GridMismatchError):
            sin_x - SpectralField.zeros(make_grid(2, 32))

    def test_coefficients_are_immutable(self, sin_x):
        with pytest.raises(ValueError):
            sin_x.coeffs[0, 0, 0] = 1.0


class TestOperators:
    """Spectral derivatives and norms."""

    def test_derivative_of_sin(self, grid, sin_x):
        x, _ = grid.coordinates()
        assert np.allclose(inverse_transform(derivative(sin_x, 0)), np.cos(x), atol=1e-12)
        assert np.allclose(inverse_transform(derivative(sin_x, 0, 2)), -np.sin(x), atol=1e-12)

    def test_derivative_rejects_bad_axis(self, sin_x):
        with pytest.raises(ValueError):
            derivative(sin_x, 2)

    def test_divergence_of_gradient_is_laplacian(self, grid, rng):
        f = random_field(grid, rng)
        assert np.allclose(divergence(gradient(f)).coeffs, laplacian(f).coeffs, atol=1e-12)

    def test_gradient_layout(self, grid, rng):
        v = random_field(grid, rng, components=2)
        g = gradient(v)
        assert g.components == 4
        assert np.allclose(g.component(3).coeffs, derivative(v.component(1), 1).coeffs)

    def test_inverse_laplacian(self, grid, rng):
        f = random_field(grid, rng, mean_zero=False)
        back = laplacian(inverse_laplacian(f))
        assert np.allclose(back.coeffs, f.without_mean().coeffs, atol=1e-12)

    def test_parseval_norm_of_sin(self, sin_x):
        assert l2_norm(sin_x) == pytest.approx(SQRT2_PI, rel=1e-12)
        assert inner(sin_x, sin_x) == pytest.approx(2 * math.pi ** 2, rel=1e-12)

    def test_max_abs_of_rotating_vector(self, grid):
        x, _ = grid.coordinates()
        v = transform(grid, np.array([np.sin(x), np.cos(x)]))
        assert max_abs(v) == pytest.approx(1.0, abs=1e-12)


class TestNonlinear:
    """Dealiased products and transport."""

    def test_product_of_sin_and_cos(self, grid, sin_x):
        x, _ = grid.coordinates()
        cos_x = transform(grid, np.cos(x))
        product = inverse_transform(dealiased_product(sin_x, cos_x))
        assert np.allclose(product, 0.5 * np.sin(2 * x), atol=1e-12)

    def test_product_drops_aliased_modes(self, grid, rng):
        f = random_field(grid, rng)
        product = dealiased_product(f, f)
        assert np.all(product.coeffs[:, ~grid.dealias_mask] == 0.0)

    def test_product_agrees_with_finer_grid(self, rng):
        coarse, fine = make_grid(2, 16), make_grid(2, 32)
        f = random_field(coarse, rng)
        g = random_field(coarse, rng)

        def lift(h):
            coeffs = np.zeros((1,) + fine.shape, dtype=complex)
            for idx in np.argwhere(coarse.dealias_mask):
                xi = coarse.wavevectors[(slice(None),) + tuple(idx)]
                coeffs[(0,) + tuple(xi % fine.n)] = h.coeffs[(0,) + tuple(idx)]
            return SpectralField(fine, coeffs)

        on_fine = dealiased_product(lift(f), lift(g))
        on_coarse = dealiased_product(f, g)
        for idx in np.argwhere(coarse.dealias_mask):
            xi = coarse.wavevectors[(slice(None),) + tuple(idx)]
            assert on_coarse.coeffs[(0,) + tuple(idx)] == pytest.approx(
                on_fine.coeffs[(0,) + tuple(xi % fine.n)], abs=1e-10)

    def test_scalar_times_vector(self, grid, sin_x):
        v = transform(grid, np.ones((2,) + grid.shape))
        product = dealiased_product(sin_x, v)
        assert product.components == 2
        assert np.allclose(product.component(1).coeffs, truncate(sin_x).coeffs, atol=1e-14)

    def test_constant_transport(self, grid, sin_x):
        x, _ = grid.coordinates()
        w = transform(grid, np.array([np.ones(grid.shape), np.zeros(grid.shape)]))
        assert np.allclose(inverse_transform(advect(w, sin_x)), np.cos(x), atol=1e-12)

    def test_transport_needs_vector(self, sin_x):
        with pytest.raises(ComponentError):
            advect(sin_x, sin_x)

    def test_physical_samples_shape(self, sin_x):
        assert physical_samples(sin_x).shape == (1, 16, 16)


class TestSnapshots:
    """Snapshot files in both formats."""

    @pytest.mark.parametrize("suffix", [".csv", ".npz"])
    def test_save_and_load(self, tmp_path, grid, rng, suffix):
        f = random_field(grid, rng, components=2)
        path = save_snapshot(tmp_path / f"snap{suffix}", f, time=0.25)
        loaded, t = load_snapshot(path)
        assert t == 0.25
        assert loaded.grid == grid
        assert np.allclose(loaded.coeffs, f.coeffs, atol=1e-14)

    def test_rejects_foreign_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ShapeMismatchError):
            load_snapshot(path)
