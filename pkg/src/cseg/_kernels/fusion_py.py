"""Pure-Python region fusion kernel.

Fallback used when the compiled extension is unavailable (or when CSEG_PURE
is set). The compiled kernel in ``_fusion.pyx`` mirrors this code statement
for statement; both must produce bit-identical labelings, so every floating
point expression here is written in the exact evaluation order the C code
uses. Keep the two in sync.
"""

import math

import numpy as np

NAME = "python"

STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_STRANDED = 2


def fuse(features, sizes, edge_u, edge_v, gamma, seeds, eta, max_outer, force_finish):
    """Run scribble-seeded region fusion over a node graph.

    features: (n, d) float64 node means; sizes: (n,) int64 pixel counts;
    edge_u/edge_v/gamma: (m,) int64 unique undirected edges with boundary
    lengths; seeds: (n,) int64 scribble index per node or -1.

    Returns (labels, outer_iters, merges, status, alive, group_sizes,
    group_features); labels maps each node to a scribble index.
    """
    n, d = features.shape
    feat = [[float(x) for x in row] for row in features]
    size = [int(s) for s in sizes]
    label = [-1] * n
    alive = [True] * n
    parent = list(range(n))
    adj = [dict() for _ in range(n)]
    for u, v, g in zip(edge_u.tolist(), edge_v.tolist(), gamma.tolist()):
        adj[u][v] = adj[u].get(v, 0) + g
        adj[v][u] = adj[v].get(u, 0) + g

    merges = 0

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def merge(a, b):
        nonlocal merges
        lo, hi = (a, b) if a < b else (b, a)
        sl = size[lo]
        sh = size[hi]
        ns = sl + sh
        dsl = float(sl)
        dsh = float(sh)
        dns = float(ns)
        fl = feat[lo]
        fh = feat[hi]
        for k in range(d):
            fl[k] = (dsl * fl[k] + dsh * fh[k]) / dns
        size[lo] = ns
        if label[lo] < 0:
            label[lo] = label[hi]
        adj[lo].pop(hi, None)
        hi_adj = adj[hi]
        for nb in sorted(hi_adj):
            if nb == lo:
                continue
            g = hi_adj[nb]
            adj[lo][nb] = adj[lo].get(nb, 0) + g
            del adj[nb][hi]
            adj[nb][lo] = adj[nb].get(lo, 0) + g
        hi_adj.clear()
        alive[hi] = False
        parent[hi] = lo
        merges += 1
        return lo

    def can_merge(a, b, beta):
        la = label[a]
        lb = label[b]
        if la >= 0 and lb >= 0 and la != lb:
            return False
        fa = feat[a]
        fb = feat[b]
        acc = 0.0
        for k in range(d):
            diff = fa[k] - fb[k]
            acc += diff * diff
        dist = math.sqrt(acc)
        lhs = float(size[a] * size[b]) * dist
        rhs = (beta * float(adj[a][b])) * float(size[a] + size[b])
        return lhs <= rhs

    # group the nodes covered by each scribble; no merge criteria here
    by_seed = {}
    for node, s in enumerate(seeds.tolist()):
        if s >= 0:
            by_seed.setdefault(s, []).append(node)
    for s in sorted(by_seed):
        nodes = by_seed[s]
        base = nodes[0]
        label[base] = s
        for other in nodes[1:]:
            label[other] = s
            base = merge(base, other)

    unlabeled = sum(1 for i in range(n) if alive[i] and label[i] < 0)
    it = 0
    while unlabeled > 0 and it < max_outer:
        it += 1
        beta = (it / 50.0) ** 2.2 * eta
        for gcur in range(n):
            if not alive[gcur]:
                continue
            g = gcur
            while True:
                hit = -1
                for nb in sorted(adj[g]):
                    if can_merge(g, nb, beta):
                        hit = nb
                        break
                if hit < 0:
                    break
                if label[g] < 0 or label[hit] < 0:
                    unlabeled -= 1
                g = merge(g, hit)

    status = STATUS_OK
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
                    for nb in sorted(adj[i]):
                        if label[nb] >= 0 and adj[i][nb] > best_g:
                            best = nb
                            best_g = adj[i][nb]
                    if best >= 0:
                        unlabeled -= 1
                        merge(i, best)
                        progress = True
            if unlabeled > 0:
                status = STATUS_STRANDED

    labels = np.array([label[find(i)] for i in range(n)], dtype=np.int64)
    return (
        labels,
        it,
        merges,
        status,
        np.array(alive, dtype=bool),
        np.array(size, dtype=np.int64),
        np.array(feat, dtype=np.float64),
    )
