"""Shared independent oracles for the test suite.

These deliberately avoid the production code paths: the QP oracle solves
the SVM dual by projected gradient, the cut oracle enumerates s-t cuts,
and the labeling oracle enumerates entire labelings.
"""

import itertools

import numpy as np


def project_box_hyperplane(v, y, C):
    """Euclidean projection of v onto {0 <= a <= C, y'a = 0}.

    h(nu) = y' clip(v - nu*y, 0, C) is piecewise linear and non-increasing
    in the hyperplane multiplier nu; solve h(nu) = 0 exactly from its
    breakpoints.
    """
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def h(nu):
        return np.clip(v - nu * y, 0.0, C) @ y

    # each coordinate clamps at nu = y_i*v_i and nu = y_i*(v_i - C);
    # outside the breakpoint range h is constant (+/- C * class count)
    points = np.unique(np.concatenate([y * v, y * (v - C)]))
    values = np.array([h(nu) for nu in points])
    idx = int(np.searchsorted(-values, 0.0))  # first h(point) <= 0
    if idx == 0:
        nu = points[0]
    elif idx == len(points):
        nu = points[-1]
    else:
        lo, hi = points[idx - 1], points[idx]
        f_lo, f_hi = values[idx - 1], values[idx]
        nu = lo if f_lo == f_hi else lo + (f_lo / (f_lo - f_hi)) * (hi - lo)
    return np.clip(v - nu * y, 0.0, C)


def qp_dual_objective(K, y, alpha):
    ay = alpha * y
    return float(0.5 * ay @ K @ ay - alpha.sum())


def qp_reference_solve(K, y, C, iters=20_000, tol=1e-12):
    """Projected-gradient minimizer of 0.5 a'Qa - 1'a on the SVM dual set."""
    y = np.asarray(y, dtype=np.float64)
    Q = (y[:, None] * y[None, :]) * K
    lip = float(np.linalg.eigvalsh(Q).max()) + 1e-9
    alpha = np.zeros(len(y))
    prev_obj = np.inf
    for it in range(iters):
        grad = Q @ alpha - 1.0
        alpha = project_box_hyperplane(alpha - grad / lip, y, C)
        if it % 200 == 199:
            obj = qp_dual_objective(K, y, alpha)
            if prev_obj - obj < tol:
                break
            prev_obj = obj
    return alpha


def enumerate_min_cut(n_nodes, edges, source, sink):
    """Minimum s-t cut value by enumerating all vertex bipartitions."""
    others = [v for v in range(n_nodes) if v not in (source, sink)]
    best = np.inf
    for bits in itertools.product([0, 1], repeat=len(others)):
        side = {source: 0, sink: 1}
        side.update({v: b for v, b in zip(others, bits)})
        cut = sum(c for u, v, c in edges if side[u] == 0 and side[v] == 1)
        best = min(best, cut)
    return best


def enumerate_min_energy(n_nodes, unary, edges, weights, labels):
    """Global minimum of a Potts energy by enumerating all labelings."""
    best_energy = np.inf
    best_labeling = None
    for assign in itertools.product(labels, repeat=n_nodes):
        e = sum(unary[v][assign[v]] for v in range(n_nodes))
        for (u, v), w in zip(edges, weights):
            if assign[u] != assign[v]:
                e += w
        if e < best_energy:
            best_energy = e
            best_labeling = assign
    return best_energy, best_labeling
