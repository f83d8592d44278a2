"""Pure-numpy kernels; fallback when the compiled extension is unavailable.

Both backends must return bit-identical results: only elementwise IEEE-754
operations and integer counting are used, so vectorization does not change
any value.
"""

from __future__ import annotations

import numpy as np


def advance_particles(positions: np.ndarray, velocities: np.ndarray,
                      extent_z: float, extent_x: float):
    """Move particles one step and drop those leaving [0, extent) on any axis.

    Returns (positions, velocities) of the survivors, order preserved.
    """
    moved = positions + velocities
    keep = ((moved[:, 0] >= 0.0) & (moved[:, 0] < extent_z)
            & (moved[:, 1] >= 0.0) & (moved[:, 1] < extent_x))
    return np.ascontiguousarray(moved[keep]), np.ascontiguousarray(velocities[keep])


def bin_particles(positions: np.ndarray, box_size: float,
                  nbz: int, nbx: int) -> np.ndarray:
    """Per-box particle counts for in-domain positions (box-id order)."""
    bz = np.floor(positions[:, 0] / box_size).astype(np.int64)
    bx = np.floor(positions[:, 1] / box_size).astype(np.int64)
    return np.bincount(bz * nbx + bx, minlength=nbz * nbx).astype(np.int64)
