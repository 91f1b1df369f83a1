# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled raycast kernel; arithmetic mirrors _raycast_py.py op for op."""

from libc.math cimport INFINITY

BACKEND_NAME = "cython"


def raycast_into(double[::1] origin, double[:, :, ::1] dirs, double[:, ::1] boxes,
                 double[:, ::1] out_t, int[:, ::1] out_idx, signed char[:, ::1] out_axis):
    """Nearest box hit per pixel; same contract as _raycast_py.raycast_into."""
    cdef Py_ssize_t h = dirs.shape[0]
    cdef Py_ssize_t w = dirs.shape[1]
    cdef Py_ssize_t nbox = boxes.shape[0]
    cdef Py_ssize_t y, x, bi
    cdef int ax
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double d, o, lo, hi, t1, t2, tmp, tlo, thi, entry, best_t
    cdef int best_idx
    cdef signed char best_axis, axis
    cdef bint alive

    with nogil:
        for y in range(h):
            for x in range(w):
                best_t = INFINITY
                best_idx = -1
                best_axis = -1
                for bi in range(nbox):
                    tlo = -INFINITY
                    thi = INFINITY
                    axis = -1
                    alive = True
                    for ax in range(3):
                        d = dirs[y, x, ax]
                        if ax == 0:
                            o = ox
                        elif ax == 1:
                            o = oy
                        else:
                            o = oz
                        lo = boxes[bi, ax]
                        hi = boxes[bi, ax + 3]
                        if d == 0.0:
                            if o < lo or o > hi:
                                alive = False
                                break
                            continue
                        t1 = (lo - o) / d
                        t2 = (hi - o) / d
                        if t1 > t2:
                            tmp = t1
                            t1 = t2
                            t2 = tmp
                        if t1 > tlo:
                            tlo = t1
                            axis = <signed char> ax
                        if t2 < thi:
                            thi = t2
                    if not alive:
                        continue
                    if thi >= tlo and thi >= 0.0:
                        entry = tlo if tlo > 0.0 else 0.0
                        if entry < best_t:
                            best_t = entry
                            best_idx = <int> bi
                            best_axis = axis
                out_t[y, x] = best_t
                out_idx[y, x] = best_idx
                out_axis[y, x] = best_axis
