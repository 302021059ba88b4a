# distutils: language = c++
# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled region fusion kernel.

Statement-for-statement mirror of ``fusion_py``; every floating point
expression keeps the same evaluation order so both backends produce
bit-identical labelings. Keep the two in sync.
"""

from cython.operator cimport dereference as deref, preincrement as inc
from libc.math cimport sqrt
from libcpp.map cimport map as cmap
from libcpp.vector cimport vector

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"

STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_STRANDED = 2


cdef long _find(long[::1] parent, long x) noexcept:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


cdef bint _can_merge(long a, long b, long gamma_ab, double beta, long d,
                     double[:, ::1] feat, long[::1] size, long[::1] label) noexcept:
    cdef long la = label[a]
    cdef long lb = label[b]
    if la >= 0 and lb >= 0 and la != lb:
        return False
    cdef double acc = 0.0
    cdef double diff
    cdef long k
    for k in range(d):
        diff = feat[a, k] - feat[b, k]
        acc += diff * diff
    cdef double dist = sqrt(acc)
    cdef double lhs = (<double>(size[a] * size[b])) * dist
    cdef double rhs = (beta * <double>gamma_ab) * <double>(size[a] + size[b])
    return lhs <= rhs


cdef long _merge(long a, long b, long d,
                 double[:, ::1] feat, long[::1] size, long[::1] label,
                 unsigned char[::1] alive, long[::1] parent,
                 vector[cmap[long, long]]& adj, long* merges) noexcept:
    cdef long lo = a if a < b else b
    cdef long hi = b if a < b else a
    cdef long sl = size[lo]
    cdef long sh = size[hi]
    cdef long ns = sl + sh
    cdef double dsl = <double>sl
    cdef double dsh = <double>sh
    cdef double dns = <double>ns
    cdef long k, nb, g
    for k in range(d):
        feat[lo, k] = (dsl * feat[lo, k] + dsh * feat[hi, k]) / dns
    size[lo] = ns
    if label[lo] < 0:
        label[lo] = label[hi]
    adj[lo].erase(hi)
    cdef cmap[long, long].iterator it = adj[hi].begin()
    while it != adj[hi].end():
        nb = deref(it).first
        g = deref(it).second
        if nb != lo:
            adj[lo][nb] += g
            adj[nb].erase(hi)
            adj[nb][lo] += g
        inc(it)
    adj[hi].clear()
    alive[hi] = 0
    parent[hi] = lo
    merges[0] += 1
    return lo


def fuse(double[:, ::1] features, long[::1] sizes,
         long[::1] edge_u, long[::1] edge_v, long[::1] gamma,
         long[::1] seeds, double eta, long max_outer, bint force_finish):
    """See fusion_py.fuse; identical contract and semantics."""
    cdef long n = features.shape[0]
    cdef long d = features.shape[1]
    cdef long m = edge_u.shape[0]

    feat_np = np.asarray(features).copy()
    size_np = np.asarray(sizes).copy()
    label_np = np.full(n, -1, dtype=np.int64)
    alive_np = np.ones(n, dtype=np.uint8)
    parent_np = np.arange(n, dtype=np.int64)

    cdef double[:, ::1] feat = feat_np
    cdef long[::1] size = size_np
    cdef long[::1] label = label_np
    cdef unsigned char[::1] alive = alive_np
    cdef long[::1] parent = parent_np

    cdef vector[cmap[long, long]] adj = vector[cmap[long, long]](n)
    cdef long i, u, v
    for i in range(m):
        u = edge_u[i]
        v = edge_v[i]
        adj[u][v] += gamma[i]
        adj[v][u] += gamma[i]

    cdef long merges = 0
    cdef long n_seeds = 0
    for i in range(n):
        if seeds[i] + 1 > n_seeds:
            n_seeds = seeds[i] + 1

    # group the nodes covered by each scribble; no merge criteria here
    cdef long s, base, node
    for s in range(n_seeds):
        base = -1
        for node in range(n):
            if seeds[node] != s:
                continue
            if base < 0:
                base = node
                label[base] = s
            else:
                label[node] = s
                base = _merge(base, node, d, feat, size, label, alive, parent, adj, &merges)

    cdef long unlabeled = 0
    for i in range(n):
        if alive[i] and label[i] < 0:
            unlabeled += 1

    cdef long it_num = 0
    cdef double beta
    cdef long gcur, g, hit, nb
    cdef cmap[long, long].iterator mit
    while unlabeled > 0 and it_num < max_outer:
        it_num += 1
        beta = (it_num / 50.0) ** 2.2 * eta
        for gcur in range(n):
            if not alive[gcur]:
                continue
            g = gcur
            while True:
                hit = -1
                mit = adj[g].begin()
                while mit != adj[g].end():
                    nb = deref(mit).first
                    if _can_merge(g, nb, deref(mit).second, beta, d, feat, size, label):
                        hit = nb
                        break
                    inc(mit)
                if hit < 0:
                    break
                if label[g] < 0 or label[hit] < 0:
                    unlabeled -= 1
                g = _merge(g, hit, d, feat, size, label, alive, parent, adj, &merges)

    cdef long status = STATUS_OK
    cdef bint progress
    cdef long best, best_g
    if unlabeled > 0:
        if not force_finish:
            status = STATUS_BUDGET
        else:
            progress = True
            while unlabeled > 0 and progress:
                progress = False
                for i in range(n):
                    if not alive[i] or label[i] >= 0:
                        continue
                    best = -1
                    best_g = -1
                    mit = adj[i].begin()
                    while mit != adj[i].end():
                        nb = deref(mit).first
                        if label[nb] >= 0 and deref(mit).second > best_g:
                            best = nb
                            best_g = deref(mit).second
                        inc(mit)
                    if best >= 0:
                        unlabeled -= 1
                        _merge(i, best, d, feat, size, label, alive, parent, adj, &merges)
                        progress = True
            if unlabeled > 0:
                status = STATUS_STRANDED

    labels_np = np.empty(n, dtype=np.int64)
    cdef long[::1] labels = labels_np
    for i in range(n):
        labels[i] = label[_find(parent, i)]

    return (
        labels_np,
        int(it_num),
        int(merges),
        int(status),
        alive_np.astype(bool),
        size_np,
        feat_np,
    )
