"""Pure-Python kernels.

Line-for-line twin of ``_core.pyx``. Used when the compiled extension is
missing or ``NLB_PURE_PYTHON=1``; results are bit-identical to the compiled
path for the same inputs.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import GOLDEN, MASK64, draw64, mix64

_INV53 = 1.0 / 9007199254740992.0
NAME = "python"


def _unit(x):
    return (x >> 11) * _INV53


def _open_unit(x):
    return ((x >> 11) + 0.5) * _INV53


def replay(occ, nbr, ts, feat, src, dst, t, fidx, eidx,
           s, node_scheme, alpha, q1, q2, key):
    """Apply events sequentially to a flat ``|V| x s`` slot table in place."""
    if s == 0:
        return
    q1 &= MASK64
    q2 &= MASK64
    for i in range(len(src)):
        u = int(src[i])
        v = int(dst[i])
        tt = int(t[i])
        f = int(fidx[i])
        ctr = 2 * int(eidx[i])
        tw = tt & MASK64
        for endpoint in (0, 1):
            if endpoint == 1:
                if u == v:
                    break
                u, v = v, u
            if node_scheme:
                h = ((q1 * v) & MASK64) % s
            else:
                h = ((q1 * v + q2 * tw) & MASK64) % s
            a = u * s + h
            if occ[a]:
                if _unit(draw64(key, ctr + endpoint)) >= alpha:
                    continue
            else:
                occ[a] = 1
            nbr[a] = v
            ts[a] = tt
            feat[a] = f


def retention_edge(alpha, lam, s, q1, q2, pool, warmup, deltas, res,
                   key, trial_start, trial_stop):
    """Survival counts of a marked edge-keyed entry, one count per delta."""
    nd = len(deltas)
    counts = np.zeros(nd, dtype=np.int64)
    dmax = float(deltas[nd - 1]) if nd else 0.0
    dl = [float(d) for d in deltas]
    q1 &= MASK64
    q2 &= MASK64
    occ = [0] * s
    for trial in range(trial_start, trial_stop):
        st = draw64(key, trial)
        for k in range(s):
            occ[k] = 0
        t = 0.0
        while True:
            st = (st + GOLDEN) & MASK64
            t += -math.log(_open_unit(mix64(st))) / lam
            st = (st + GOLDEN) & MASK64
            v = int(_unit(mix64(st)) * pool)
            if t >= warmup:
                break
            tq = int(t * res)
            a = ((q1 * v + q2 * tq) & MASK64) % s
            # only occupancy matters for the marked entry's fate
            occ[a] = 1
        ti = t
        tq = int(t * res)
        mark = ((q1 * v + q2 * tq) & MASK64) % s
        occ[mark] = 1
        death = math.inf
        while True:
            st = (st + GOLDEN) & MASK64
            t += -math.log(_open_unit(mix64(st))) / lam
            if t - ti > dmax:
                break
            st = (st + GOLDEN) & MASK64
            v = int(_unit(mix64(st)) * pool)
            tq = int(t * res)
            a = ((q1 * v + q2 * tq) & MASK64) % s
            if not occ[a]:
                occ[a] = 1
            else:
                st = (st + GOLDEN) & MASK64
                if _unit(mix64(st)) < alpha and a == mark:
                    death = t - ti
                    break
        for k in range(nd):
            if death > dl[k]:
                counts[k] += 1
    return counts


def retention_node(alpha, lams, s, q1, id_space, warmup, deltas, res,
                   key, trial_start, trial_stop):
    """Survival counts of a marked neighbor under id-keyed hashing.

    Neighbor 0 of the pool is the marked one; ids are redrawn per trial so
    the slot of each competitor is a fresh uniform draw.
    """
    nd = len(deltas)
    counts = np.zeros(nd, dtype=np.int64)
    dmax = float(deltas[nd - 1]) if nd else 0.0
    dl = [float(d) for d in deltas]
    q1 &= MASK64
    npool = len(lams)
    cum = []
    total = 0.0
    for x in lams:
        total += float(x)
        cum.append(total)
    ids = [0] * npool
    slot_of = [0] * npool
    occ = [0] * s
    held = [-1] * s
    for trial in range(trial_start, trial_stop):
        st = draw64(key, trial)
        j = 0
        while j < npool:
            st = (st + GOLDEN) & MASK64
            cand = int(_unit(mix64(st)) * id_space)
            if cand in ids[:j]:
                continue
            ids[j] = cand
            slot_of[j] = ((q1 * cand) & MASK64) % s
            j += 1
        for k in range(s):
            occ[k] = 0
            held[k] = -1
        t = 0.0
        ti = warmup
        death = math.inf
        phase = 0
        while True:
            st = (st + GOLDEN) & MASK64
            t += -math.log(_open_unit(mix64(st))) / total
            if phase == 0 and t >= warmup:
                # marked insertion at ti, then restart the clock there
                occ[slot_of[0]] = 1
                held[slot_of[0]] = 0
                phase = 1
                t = ti
                continue
            if phase == 1 and t - ti > dmax:
                break
            st = (st + GOLDEN) & MASK64
            x = _unit(mix64(st)) * total
            j = 0
            while j < npool - 1 and x >= cum[j]:
                j += 1
            a = slot_of[j]
            if not occ[a]:
                occ[a] = 1
                held[a] = j
            else:
                st = (st + GOLDEN) & MASK64
                if _unit(mix64(st)) < alpha:
                    held[a] = j
                    if phase == 1 and j != 0 and a == slot_of[0]:
                        death = t - ti
                        break
        for k in range(nd):
            if death > dl[k]:
                counts[k] += 1
    return counts
