# phi_functions.py

"""
Matrix phi-functions for exponential time differencing.

phi_0(A) = e^A and phi_k(A) = sum_n A^n / (n + k)!. For a batch of small square blocks
they are read off a single matrix exponential of the augmented block matrix

    [[A, I, 0, 0],
     [0, 0, I, 0],
     [0, 0, 0, I],
     [0, 0, 0, 0]]

whose first block row is (e^A, phi_1(A), phi_2(A), phi_3(A)). No division by A or by
eigenvalue gaps is involved, so blocks near zero and blocks with a repeated eigenvalue
need no special cases.
"""

import numpy as np
from scipy.linalg import expm


def phi_blocks(blocks, order=3):
    """[phi_0(A), ..., phi_order(A)] for A of shape (..., r, r)."""
    blocks = np.asarray(blocks, dtype=np.complex128)
    if blocks.ndim < 2 or blocks.shape[-1] != blocks.shape[-2]:
        raise ValueError(f"need square blocks, got shape {blocks.shape}")
    r = blocks.shape[-1]
    size = r * (order + 1)
    augmented = np.zeros(blocks.shape[:-2] + (size, size), dtype=np.complex128)
    augmented[..., :r, :r] = blocks
    for i in range(order):
        augmented[..., i * r:(i + 1) * r, (i + 1) * r:(i + 2) * r] = np.eye(r)
    top = expm(augmented)[..., :r, :]
    return [top[..., i * r:(i + 1) * r] for i in range(order + 1)]
