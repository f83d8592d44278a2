# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the per-step hot loops: particle advance with
absorbing boundaries, and particle-to-box binning.

Must stay bit-identical to _kernels_py: same IEEE-754 elementwise
arithmetic, same survivor order, same counting.
"""

import numpy as np


def advance_particles(const double[:, ::1] positions, const double[:, ::1] velocities,
                      double extent_z, double extent_x):
    """Move particles one step and drop those leaving [0, extent) on any axis.

    Returns (positions, velocities) of the survivors, order preserved.
    """
    cdef Py_ssize_t n = positions.shape[0]
    out_pos = np.empty((n, 2), dtype=np.float64)
    out_vel = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] op = out_pos
    cdef double[:, ::1] ov = out_vel
    cdef Py_ssize_t i, m = 0
    cdef double z, x
    for i in range(n):
        z = positions[i, 0] + velocities[i, 0]
        x = positions[i, 1] + velocities[i, 1]
        if z >= 0.0 and z < extent_z and x >= 0.0 and x < extent_x:
            op[m, 0] = z
            op[m, 1] = x
            ov[m, 0] = velocities[i, 0]
            ov[m, 1] = velocities[i, 1]
            m += 1
    return (np.ascontiguousarray(out_pos[:m]),
            np.ascontiguousarray(out_vel[:m]))


def bin_particles(const double[:, ::1] positions, double box_size,
                  Py_ssize_t nbz, Py_ssize_t nbx):
    """Per-box particle counts for in-domain positions (box-id order)."""
    counts = np.zeros(nbz * nbx, dtype=np.int64)
    cdef long long[::1] c = counts
    cdef Py_ssize_t i, bz, bx
    for i in range(positions.shape[0]):
        bz = <Py_ssize_t>(positions[i, 0] / box_size)
        bx = <Py_ssize_t>(positions[i, 1] / box_size)
        c[bz * nbx + bx] += 1
    return counts
