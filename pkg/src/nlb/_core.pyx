# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for table replay and retention Monte-Carlo.

Mirrors ``_pycore.py`` exactly; keep the two in sync.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, INFINITY
from libc.stdint cimport uint64_t, int64_t, uint8_t

NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t draw64(uint64_t key, uint64_t counter) noexcept nogil:
    return mix64(key + mix64(counter ^ GOLDEN))


cdef inline double unit(uint64_t x) noexcept nogil:
    return <double>(x >> 11) * INV53


cdef inline double open_unit(uint64_t x) noexcept nogil:
    return (<double>(x >> 11) + 0.5) * INV53


def replay(uint8_t[::1] occ, int64_t[::1] nbr, int64_t[::1] ts,
           int64_t[::1] feat, const int64_t[::1] src, const int64_t[::1] dst,
           const int64_t[::1] t, const int64_t[::1] fidx,
           const int64_t[::1] eidx, int64_t s, bint node_scheme,
           double alpha, uint64_t q1, uint64_t q2, uint64_t key):
    cdef Py_ssize_t i, n = src.shape[0]
    cdef int endpoint
    cdef int64_t u, v, tmp, tt, f, a
    cdef uint64_t h, ctr, us = <uint64_t>s
    if s == 0:
        return
    with nogil:
        for i in range(n):
            u = src[i]
            v = dst[i]
            tt = t[i]
            f = fidx[i]
            ctr = 2 * <uint64_t>eidx[i]
            for endpoint in range(2):
                if endpoint == 1:
                    if u == v:
                        break
                    tmp = u
                    u = v
                    v = tmp
                if node_scheme:
                    h = (q1 * <uint64_t>v) % us
                else:
                    h = (q1 * <uint64_t>v + q2 * <uint64_t>tt) % us
                a = u * s + <int64_t>h
                if occ[a]:
                    if unit(draw64(key, ctr + endpoint)) >= alpha:
                        continue
                else:
                    occ[a] = 1
                nbr[a] = v
                ts[a] = tt
                feat[a] = f


def retention_edge(double alpha, double lam, int64_t s, uint64_t q1,
                   uint64_t q2, int64_t pool, double warmup, deltas,
                   double res, uint64_t key, int64_t trial_start,
                   int64_t trial_stop):
    cdef double[::1] dl = np.ascontiguousarray(deltas, dtype=np.float64)
    cdef Py_ssize_t nd = dl.shape[0], k
    counts_arr = np.zeros(nd, dtype=np.int64)
    cdef int64_t[::1] counts = counts_arr
    cdef double dmax = dl[nd - 1] if nd else 0.0
    cdef uint8_t[::1] occ = np.zeros(max(s, 1), dtype=np.uint8)
    cdef int64_t trial, v, tq
    cdef uint64_t st, a, mark, us = <uint64_t>s
    cdef double t, ti, death
    with nogil:
        for trial in range(trial_start, trial_stop):
            st = draw64(key, <uint64_t>trial)
            for k in range(s):
                occ[k] = 0
            t = 0.0
            while True:
                st = st + GOLDEN
                t += -log(open_unit(mix64(st))) / lam
                st = st + GOLDEN
                v = <int64_t>(unit(mix64(st)) * pool)
                if t >= warmup:
                    break
                tq = <int64_t>(t * res)
                a = (q1 * <uint64_t>v + q2 * <uint64_t>tq) % us
                occ[a] = 1
            ti = t
            tq = <int64_t>(t * res)
            mark = (q1 * <uint64_t>v + q2 * <uint64_t>tq) % us
            occ[mark] = 1
            death = INFINITY
            while True:
                st = st + GOLDEN
                t += -log(open_unit(mix64(st))) / lam
                if t - ti > dmax:
                    break
                st = st + GOLDEN
                v = <int64_t>(unit(mix64(st)) * pool)
                tq = <int64_t>(t * res)
                a = (q1 * <uint64_t>v + q2 * <uint64_t>tq) % us
                if not occ[a]:
                    occ[a] = 1
                else:
                    st = st + GOLDEN
                    if unit(mix64(st)) < alpha and a == mark:
                        death = t - ti
                        break
            for k in range(nd):
                if death > dl[k]:
                    counts[k] += 1
    return counts_arr


def retention_node(double alpha, lams, int64_t s, uint64_t q1,
                   int64_t id_space, double warmup, deltas, double res,
                   uint64_t key, int64_t trial_start, int64_t trial_stop):
    cdef double[::1] dl = np.ascontiguousarray(deltas, dtype=np.float64)
    cdef double[::1] lam = np.ascontiguousarray(lams, dtype=np.float64)
    cdef Py_ssize_t nd = dl.shape[0], npool = lam.shape[0], k, j, m
    counts_arr = np.zeros(nd, dtype=np.int64)
    cdef int64_t[::1] counts = counts_arr
    cdef double dmax = dl[nd - 1] if nd else 0.0
    cdef double[::1] cum = np.cumsum(lam)
    cdef double total = cum[npool - 1]
    cdef int64_t[::1] ids = np.zeros(npool, dtype=np.int64)
    cdef uint64_t[::1] slot_of = np.zeros(npool, dtype=np.uint64)
    cdef uint8_t[::1] occ = np.zeros(max(s, 1), dtype=np.uint8)
    cdef int64_t[::1] held = np.zeros(max(s, 1), dtype=np.int64)
    cdef int64_t trial, cand
    cdef uint64_t st, a, us = <uint64_t>s
    cdef double t, ti, death, x
    cdef int phase, dup
    with nogil:
        for trial in range(trial_start, trial_stop):
            st = draw64(key, <uint64_t>trial)
            j = 0
            while j < npool:
                st = st + GOLDEN
                cand = <int64_t>(unit(mix64(st)) * id_space)
                dup = 0
                for m in range(j):
                    if ids[m] == cand:
                        dup = 1
                        break
                if dup:
                    continue
                ids[j] = cand
                slot_of[j] = (q1 * <uint64_t>cand) % us
                j += 1
            for k in range(s):
                occ[k] = 0
                held[k] = -1
            t = 0.0
            ti = warmup
            death = INFINITY
            phase = 0
            while True:
                st = st + GOLDEN
                t += -log(open_unit(mix64(st))) / total
                if phase == 0 and t >= warmup:
                    occ[slot_of[0]] = 1
                    held[slot_of[0]] = 0
                    phase = 1
                    t = ti
                    continue
                if phase == 1 and t - ti > dmax:
                    break
                st = st + GOLDEN
                x = unit(mix64(st)) * total
                j = 0
                while j < npool - 1 and x >= cum[j]:
                    j += 1
                a = slot_of[j]
                if not occ[a]:
                    occ[a] = 1
                    held[a] = j
                else:
                    st = st + GOLDEN
                    if unit(mix64(st)) < alpha:
                        held[a] = j
                        if phase == 1 and j != 0 and a == slot_of[0]:
                            death = t - ti
                            break
            for k in range(nd):
                if death > dl[k]:
                    counts[k] += 1
    return counts_arr
