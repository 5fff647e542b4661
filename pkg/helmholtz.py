# helmholtz.py

"""Leray/Helmholtz projectors as degree-zero Fourier multipliers.

Q v = xi xi^T / |xi|^2 v per mode (potential part); P v = v - Q v (divergence-free part).
The zero mode belongs to P: the mean velocity is trivially divergence-free.
"""

import numpy as np

from errors import ComponentError


def _longitudinal(v):
    if not v.is_vector:
        raise ComponentError(
            f"projection needs a {v.grid.dim}-vector field, got {v.components} components"
        )
    grid = v.grid
    k = grid.kphys
    k2 = grid.k2
    k_dot_v = np.sum(k * v.coeffs, axis=0)
    scale = np.divide(k_dot_v, k2, out=np.zeros_like(k_dot_v), where=k2 > 0)
    return k * scale


def project_Q(v):
    return v.with_coeffs(_longitudinal(v))


def project_P(v):
    return v.with_coeffs(v.coeffs - _longitudinal(v))


def helmholtz_split(v):
    """(Pv, Qv) in one pass."""
    q = _longitudinal(v)
    return v.with_coeffs(v.coeffs - q), v.with_coeffs(q)
