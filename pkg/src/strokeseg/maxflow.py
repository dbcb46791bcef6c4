"""Max-flow / min-cut on grid-shaped graphs.

Augmenting-path solver in the Boykov-Kolmogorov style: two search trees
grown from source and sink with orphan adoption and the distance/timestamp
reuse heuristics.  Terminal arcs are folded into per-node residuals
(pre-pushing min(source_cap, sink_cap) through each node).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

FREE, SRC, SNK = 0, 1, 2
NO_PARENT = -1  # linked directly to its terminal
ORPHAN = -2


@dataclass
class FlowNetwork:
    """Directed capacitated graph with designated source and sink nodes."""

    n_nodes: int
    source: int
    sink: int
    edges: np.ndarray  # (E, 2) int64 (u, v)
    caps: np.ndarray  # (E,) float64, >= 0


def _build_csr(n, edge_u, edge_v, cap_fwd, cap_bwd):
    """CSR adjacency with paired residual slots for both edge directions."""
    e = len(edge_u)
    du = np.concatenate([edge_u, edge_v])
    dv = np.concatenate([edge_v, edge_u])
    dc = np.concatenate([cap_fwd, cap_bwd]).astype(np.float64)
    order = np.argsort(du, kind="stable")
    pos = np.empty(2 * e, dtype=np.int64)
    pos[order] = np.arange(2 * e)
    e_to = dv[order].astype(np.int64)
    e_cap = dc[order]
    rev_id = np.concatenate([np.arange(e, 2 * e), np.arange(0, e)])
    e_rev = pos[rev_id][order]
    first = np.zeros(n + 1, dtype=np.int64)
    np.add.at(first, du + 1, 1)
    first = np.cumsum(first)
    return first, e_to, e_cap, e_rev


@njit(cache=True)
def _bk_maxflow(first, e_to, e_cap, e_rev, tr_cap):
    """Returns (added flow, side) where side[u] == SRC marks the source
    component of a minimum cut.  tr_cap > 0 is residual from the source,
    tr_cap < 0 residual (negated) toward the sink."""
    n = len(tr_cap)
    side = np.zeros(n, dtype=np.uint8)
    parent = np.full(n, NO_PARENT, dtype=np.int64)
    dist = np.zeros(n, dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    in_active = np.zeros(n, dtype=np.uint8)
    queue = np.empty(n + 1, dtype=np.int64)
    q_head, q_tail = 0, 0
    orphans = np.empty(n, dtype=np.int64)
    n_orph = 0
    walk = np.empty(n, dtype=np.int64)
    time = 1
    flow = 0.0

    for u in range(n):
        if tr_cap[u] > 0.0:
            side[u] = SRC
        elif tr_cap[u] < 0.0:
            side[u] = SNK
        else:
            continue
        parent[u] = NO_PARENT
        dist[u] = 1
        stamp[u] = 0
        in_active[u] = 1
        queue[q_tail] = u
        q_tail = (q_tail + 1) % (n + 1)

    while True:
        # ---- grow phase: find an augmenting path between the trees
        bridge = -1
        while q_head != q_tail:
            u = queue[q_head]
            if side[u] == FREE or parent[u] == ORPHAN:
                q_head = (q_head + 1) % (n + 1)
                in_active[u] = 0
                continue
            s_u = side[u]
            found = -1
            for e in range(first[u], first[u + 1]):
                res = e_cap[e] if s_u == SRC else e_cap[e_rev[e]]
                if res <= 0.0:
                    continue
                v = e_to[e]
                if side[v] == FREE:
                    side[v] = s_u
                    parent[v] = e_rev[e]  # edge v -> u
                    dist[v] = dist[u] + 1
                    stamp[v] = stamp[u]
                    if in_active[v] == 0:
                        in_active[v] = 1
                        queue[q_tail] = v
                        q_tail = (q_tail + 1) % (n + 1)
                elif side[v] == s_u:
                    if (
                        parent[v] != ORPHAN
                        and stamp[v] <= stamp[u]
                        and dist[v] > dist[u] + 1
                    ):
                        parent[v] = e_rev[e]
                        dist[v] = dist[u] + 1
                        stamp[v] = stamp[u]
                else:
                    found = e if s_u == SRC else e_rev[e]
                    break
            if found >= 0:
                bridge = found
                break
            q_head = (q_head + 1) % (n + 1)
            in_active[u] = 0
        if bridge < 0:
            return flow, side

        time += 1

        # ---- augment along source-root .. bridge .. sink-root
        a = e_to[e_rev[bridge]]  # source-side endpoint
        b = e_to[bridge]  # sink-side endpoint
        bottleneck = e_cap[bridge]
        u = a
        while parent[u] >= 0:
            pe = parent[u]  # u -> parent
            res = e_cap[e_rev[pe]]  # parent -> u
            if res < bottleneck:
                bottleneck = res
            u = e_to[pe]
        if tr_cap[u] < bottleneck:
            bottleneck = tr_cap[u]
        v = b
        while parent[v] >= 0:
            pe = parent[v]
            res = e_cap[pe]  # v -> parent (toward sink)
            if res < bottleneck:
                bottleneck = res
            v = e_to[pe]
        if -tr_cap[v] < bottleneck:
            bottleneck = -tr_cap[v]

        flow += bottleneck
        e_cap[bridge] -= bottleneck
        e_cap[e_rev[bridge]] += bottleneck
        u = a
        while parent[u] >= 0:
            pe = parent[u]
            e_cap[e_rev[pe]] -= bottleneck
            e_cap[pe] += bottleneck
            nxt = e_to[pe]
            if e_cap[e_rev[pe]] <= 0.0:
                parent[u] = ORPHAN
                orphans[n_orph] = u
                n_orph += 1
            u = nxt
        tr_cap[u] -= bottleneck
        if tr_cap[u] <= 0.0:
            parent[u] = ORPHAN
            orphans[n_orph] = u
            n_orph += 1
        v = b
        while parent[v] >= 0:
            pe = parent[v]
            e_cap[pe] -= bottleneck
            e_cap[e_rev[pe]] += bottleneck
            nxt = e_to[pe]
            if e_cap[pe] <= 0.0:
                parent[v] = ORPHAN
                orphans[n_orph] = v
                n_orph += 1
            v = nxt
        tr_cap[v] += bottleneck
        if tr_cap[v] >= 0.0:
            parent[v] = ORPHAN
            orphans[n_orph] = v
            n_orph += 1

        # ---- adoption: give every orphan a new rooted parent or free it
        while n_orph > 0:
            n_orph -= 1
            u = orphans[n_orph]
            if parent[u] != ORPHAN:
                continue
            s_u = side[u]
            best_e = -1
            best_d = np.iinfo(np.int64).max
            for e in range(first[u], first[u + 1]):
                q = e_to[e]
                if side[q] != s_u:
                    continue
                res = e_cap[e_rev[e]] if s_u == SRC else e_cap[e]
                if res <= 0.0:
                    continue
                # check q's chain reaches a terminal; stamp the walk
                w_len = 0
                x = q
                rooted = False
                base = 0
                while True:
                    if stamp[x] == time:
                        rooted = True
                        base = dist[x]
                        break
                    pe = parent[x]
                    if pe == NO_PARENT:
                        rooted = True
                        base = 1
                        stamp[x] = time
                        break
                    if pe == ORPHAN:
                        break
                    walk[w_len] = x
                    w_len += 1
                    x = e_to[pe]
                if not rooted:
                    continue
                for t in range(w_len):
                    y = walk[w_len - 1 - t]
                    dist[y] = base + 1 + t
                    stamp[y] = time
                d_q = base + w_len
                if d_q < best_d:
                    best_d = d_q
                    best_e = e
            if best_e >= 0:
                parent[u] = best_e
                dist[u] = best_d + 1
                stamp[u] = time
                continue
            # no parent found: u leaves the tree, neighbors get rechecked
            for e in range(first[u], first[u + 1]):
                q = e_to[e]
                if side[q] != s_u:
                    continue
                res = e_cap[e_rev[e]] if s_u == SRC else e_cap[e]
                if res > 0.0 and in_active[q] == 0:
                    in_active[q] = 1
                    queue[q_tail] = q
                    q_tail = (q_tail + 1) % (n + 1)
                pe = parent[q]
                if pe >= 0 and e_to[pe] == u:
                    parent[q] = ORPHAN
                    orphans[n_orph] = q
                    n_orph += 1
            side[u] = FREE


def solve_maxflow_arrays(n, edge_u, edge_v, cap_fwd, cap_bwd, tr_cap):
    """Max flow with folded terminal capacities; returns (flow, side array)."""
    tr = np.asarray(tr_cap, dtype=np.float64).copy()
    # pre-push through nodes holding both source and sink capacity happens
    # upstream; tr is already the net residual here
    first, e_to, e_cap, e_rev = _build_csr(
        int(n),
        np.asarray(edge_u, dtype=np.int64),
        np.asarray(edge_v, dtype=np.int64),
        np.asarray(cap_fwd, dtype=np.float64),
        np.asarray(cap_bwd, dtype=np.float64),
    )
    flow, side = _bk_maxflow(first, e_to, e_cap, e_rev, tr)
    return flow, side


def max_flow(net: FlowNetwork):
    """Maximum s-t flow of a general network.

    Returns (flow value, source_side) where source_side is a boolean array
    over all nodes; nodes unreachable from the source in the final residual
    graph (including the sink) are False.
    """
    if np.any(net.caps < 0):
        raise ValueError("capacities must be non-negative")
    s, t = net.source, net.sink
    edges = np.asarray(net.edges, dtype=np.int64).reshape(-1, 2)
    caps = np.asarray(net.caps, dtype=np.float64)

    # map regular nodes to a compact range
    regular = np.array([v for v in range(net.n_nodes) if v not in (s, t)])
    comp = np.full(net.n_nodes, -1, dtype=np.int64)
    comp[regular] = np.arange(len(regular))

    src_cap = np.zeros(len(regular))
    snk_cap = np.zeros(len(regular))
    direct = 0.0  # s -> t edges
    keep_u, keep_v, keep_c = [], [], []
    for (u, v), c in zip(edges, caps):
        if u == v or c == 0:
            continue
        if u == s and v == t:
            direct += c
        elif u == s:
            src_cap[comp[v]] += c
        elif v == t:
            snk_cap[comp[u]] += c
        elif v == s or u == t:
            continue  # cannot lie on any s->t path's cut
        else:
            keep_u.append(comp[u])
            keep_v.append(comp[v])
            keep_c.append(c)

    prepush = np.minimum(src_cap, snk_cap)
    tr = src_cap - snk_cap
    flow, side = solve_maxflow_arrays(
        len(regular),
        np.array(keep_u, dtype=np.int64),
        np.array(keep_v, dtype=np.int64),
        np.array(keep_c, dtype=np.float64),
        np.zeros(len(keep_c), dtype=np.float64),
        tr,
    )
    total = float(flow + prepush.sum() + direct)
    source_side = np.zeros(net.n_nodes, dtype=bool)
    source_side[s] = True
    source_side[regular] = side == SRC
    return total, source_side
