# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled combinatorial kernels.  Mirrors ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.intp_t idx_t


cdef inline double _qap_cost(const f64[:, :] d, const f64[:, :] f, const idx_t[:] p) noexcept nogil:
    cdef Py_ssize_t n = p.shape[0], i, j
    cdef double total = 0.0
    cdef idx_t pi
    for i in range(n):
        pi = p[i]
        for j in range(n):
            total += d[pi, p[j]] * f[i, j]
    return total


cdef inline double _tour_length(const f64[:, :] d, const idx_t[:] t) noexcept nogil:
    cdef Py_ssize_t n = t.shape[0], i
    cdef double total = 0.0
    for i in range(n - 1):
        total += d[t[i], t[i + 1]]
    total += d[t[n - 1], t[0]]
    return total


cdef inline double _swap_delta(const f64[:, :] d, const f64[:, :] f, const idx_t[:] p,
                               Py_ssize_t r, Py_ssize_t s) noexcept nogil:
    cdef Py_ssize_t n = p.shape[0], k
    cdef idx_t pr = p[r], ps = p[s], pk
    cdef double delta = (f[r, r] - f[s, s]) * (d[ps, ps] - d[pr, pr]) \
        + (f[r, s] - f[s, r]) * (d[ps, pr] - d[pr, ps])
    for k in range(n):
        if k == r or k == s:
            continue
        pk = p[k]
        delta += (f[k, r] - f[k, s]) * (d[pk, ps] - d[pk, pr]) \
            + (f[r, k] - f[s, k]) * (d[ps, pk] - d[pr, pk])
    return delta


def qap_cost(d, f, perm):
    cdef const f64[:, :] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const f64[:, :] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef const idx_t[:] pv = np.ascontiguousarray(perm, dtype=np.intp)
    return _qap_cost(dv, fv, pv)


def tour_length(d, tour):
    cdef const f64[:, :] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const idx_t[:] tv = np.ascontiguousarray(tour, dtype=np.intp)
    return _tour_length(dv, tv)


def swap_delta(d, f, perm, Py_ssize_t r, Py_ssize_t s):
    cdef const f64[:, :] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const f64[:, :] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef const idx_t[:] pv = np.ascontiguousarray(perm, dtype=np.intp)
    return _swap_delta(dv, fv, pv, r, s)


def two_opt(d, f, perm, Py_ssize_t max_iters, double tol=1e-9):
    """Best-improvement pairwise swap search; returns ``(perm, cost, iters)``."""
    cdef const f64[:, :] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const f64[:, :] fv = np.ascontiguousarray(f, dtype=np.float64)
    out = np.array(perm, dtype=np.intp, copy=True)
    cdef idx_t[:] p = out
    cdef Py_ssize_t n = p.shape[0], r, s, br, bs, iters = 0
    cdef double best, delta, cost
    cdef idx_t tmp
    cost = _qap_cost(dv, fv, p)
    with nogil:
        while iters < max_iters:
            best = -tol
            br = -1
            bs = -1
            for r in range(n - 1):
                for s in range(r + 1, n):
                    delta = _swap_delta(dv, fv, p, r, s)
                    if delta < best:
                        best = delta
                        br = r
                        bs = s
            if br < 0:
                break
            tmp = p[br]
            p[br] = p[bs]
            p[bs] = tmp
            iters += 1
        cost = _qap_cost(dv, fv, p)
    return out, cost, iters


cdef void _heap_walk_qap(const f64[:, :] d, const f64[:, :] f, idx_t[:] a, idx_t[:] best,
                         double* best_cost) noexcept nogil:
    # iterative Heap's algorithm over all orderings of a
    cdef Py_ssize_t n = a.shape[0], i = 1, k
    cdef idx_t tmp
    cdef idx_t c[32]
    cdef double cost
    for k in range(n):
        c[k] = 0
    cost = _qap_cost(d, f, a)
    if cost < best_cost[0]:
        best_cost[0] = cost
        for k in range(n):
            best[k] = a[k]
    while i < n:
        if c[i] < i:
            if i % 2 == 0:
                tmp = a[0]; a[0] = a[i]; a[i] = tmp
            else:
                tmp = a[c[i]]; a[c[i]] = a[i]; a[i] = tmp
            cost = _qap_cost(d, f, a)
            if cost < best_cost[0]:
                best_cost[0] = cost
                for k in range(n):
                    best[k] = a[k]
            c[i] += 1
            i = 1
        else:
            c[i] = 0
            i += 1


def brute_force_qap(d, f):
    """Exhaustive QAP optimum; returns ``(perm, cost)``."""
    cdef const f64[:, :] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const f64[:, :] fv = np.ascontiguousarray(f, dtype=np.float64)
    n = dv.shape[0]
    a_arr = np.arange(n, dtype=np.intp)
    best_arr = a_arr.copy()
    cdef idx_t[:] a = a_arr
    cdef idx_t[:] best = best_arr
    cdef double best_cost = INFINITY
    with nogil:
        _heap_walk_qap(dv, fv, a, best, &best_cost)
    return best_arr, best_cost


def brute_force_tsp(d):
    """Exhaustive TSP optimum over tours starting at city 0; returns ``(tour, length)``."""
    cdef const f64[:, :] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef Py_ssize_t n = dv.shape[0], i = 1, k, m
    tour_arr = np.arange(n, dtype=np.intp)
    best_arr = tour_arr.copy()
    if n <= 3:
        return best_arr, _tour_length(dv, best_arr)
    cdef idx_t[:] t = tour_arr
    cdef idx_t[:] best = best_arr
    cdef idx_t tmp
    cdef idx_t c[32]
    cdef double cost, best_cost
    m = n - 1  # permute positions 1..n-1
    with nogil:
        for k in range(m):
            c[k] = 0
        best_cost = _tour_length(dv, t)
        while i < m:
            if c[i] < i:
                if i % 2 == 0:
                    tmp = t[1]; t[1] = t[1 + i]; t[1 + i] = tmp
                else:
                    tmp = t[1 + c[i]]; t[1 + c[i]] = t[1 + i]; t[1 + i] = tmp
                cost = _tour_length(dv, t)
                if cost < best_cost:
                    best_cost = cost
                    for k in range(n):
                        best[k] = t[k]
                c[i] += 1
                i = 1
            else:
                c[i] = 0
                i += 1
    return best_arr, best_cost
