"""Independent reference computations the tests check the package against.

Everything here is deliberately written along a different route than the
implementation: pure-Python scans instead of vectorized numpy, exhaustive
enumeration instead of incremental construction, and grid search instead
of SMO for the SVR dual.
"""

from __future__ import annotations

from itertools import combinations, product

import numpy as np


def brute_force_adjacency(labels) -> set[tuple[int, int]]:
    """Edge set from scanning every 4-neighboring pixel pair."""
    labels = np.asarray(labels)
    h, w = labels.shape
    edges = set()
    for y in range(h):
        for x in range(w):
            a = int(labels[y, x])
            for dy, dx in ((0, 1), (1, 0)):
                ny, nx = y + dy, x + dx
                if ny < h and nx < w:
                    b = int(labels[ny, nx])
                    if a != b:
                        edges.add((min(a, b), max(a, b)))
    return edges


def flood_fill_region(labels, start) -> set[tuple[int, int]]:
    """Pixels 4-connected to start and sharing its label."""
    labels = np.asarray(labels)
    h, w = labels.shape
    target = labels[start]
    seen = {start}
    queue = [start]
    while queue:
        y, x = queue.pop()
        for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and (ny, nx) not in seen:
                if labels[ny, nx] == target:
                    seen.add((ny, nx))
                    queue.append((ny, nx))
    return seen


def all_segments_connected(labels) -> bool:
    labels = np.asarray(labels)
    for seg in np.unique(labels):
        ys, xs = np.nonzero(labels == seg)
        pixels = set(zip(ys.tolist(), xs.tolist()))
        start = next(iter(pixels))
        if flood_fill_region(labels, start) != pixels:
            return False
    return True


def active_set_connected(mask, edges) -> bool:
    """Flood fill over the induced subgraph of the active vertices."""
    active = {i for i, bit in enumerate(mask) if bit}
    if not active:
        return False
    adj = {v: set() for v in active}
    for a, b in edges:
        if a in active and b in active:
            adj[a].add(b)
            adj[b].add(a)
    start = next(iter(active))
    seen = {start}
    queue = [start]
    while queue:
        v = queue.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return seen == active


def enumerate_connected_sets(n_vertices: int, edges) -> set[frozenset[int]]:
    """All non-empty vertex subsets inducing a connected subgraph."""
    result = set()
    for size in range(1, n_vertices + 1):
        for subset in combinations(range(n_vertices), size):
            mask = [1 if v in subset else 0 for v in range(n_vertices)]
            if active_set_connected(mask, edges):
                result.add(frozenset(subset))
    return result


def r_squared_mse_var(labels, predictions) -> float:
    """The MSE/Var form of R^2 (Eq. 9 route)."""
    f = np.asarray(labels, dtype=np.float64)
    g = np.asarray(predictions, dtype=np.float64)
    n = f.shape[0]
    mse = np.sum((f - g) ** 2) / n
    var = np.sum((f - f.mean()) ** 2) / n
    return 1.0 - mse / var


def quadratic_logit_ref(quad, lin, bias, mask) -> float:
    """Closed-form sigmoid(m'Qm + q'm + b) evaluated with plain loops."""
    m = list(float(v) for v in mask)
    d = len(m)
    z = float(bias)
    for i in range(d):
        z += lin[i] * m[i]
        for j in range(d):
            z += m[i] * quad[i][j] * m[j]
    return 1.0 / (1.0 + np.exp(-z))


def ridge_oracle(masks, labels, weights, lam):
    """Weighted ridge via the sqrt-weight augmented least-squares route."""
    z = np.asarray(masks, dtype=np.float64)
    n, d = z.shape
    design = np.concatenate([z, np.ones((n, 1))], axis=1)
    sw = np.sqrt(np.asarray(weights, dtype=np.float64))
    top = design * sw[:, None]
    bottom = np.concatenate([np.sqrt(lam) * np.eye(d), np.zeros((d, 1))], axis=1)
    augmented = np.concatenate([top, bottom], axis=0)
    target = np.concatenate([np.asarray(labels) * sw, np.zeros(d)])
    theta, *_ = np.linalg.lstsq(augmented, target, rcond=None)
    return theta[:d], float(theta[d])


# --- SVR dual oracle ---------------------------------------------------------


def svr_dual_objective(K, y, epsilon, beta) -> float:
    """Maximized dual value at beta (feasibility is the caller's job)."""
    beta = np.asarray(beta, dtype=np.float64)
    return float(y @ beta - epsilon * np.abs(beta).sum() - 0.5 * beta @ K @ beta)


def _evaluate_candidates(K, y, epsilon, c_box, free_grid):
    """Objective over a (P, n-1) grid of free coordinates; the last
    coordinate closes the equality constraint and infeasible rows drop out."""
    last = -free_grid.sum(axis=1)
    feasible = np.abs(last) <= c_box[-1] + 1e-12
    if not feasible.any():
        return None, None
    betas = np.concatenate([free_grid[feasible], last[feasible, None]], axis=1)
    vals = betas @ y - epsilon * np.abs(betas).sum(axis=1)
    vals -= 0.5 * np.einsum("ij,jk,ik->i", betas, K, betas)
    best = int(np.argmax(vals))
    return float(vals[best]), betas[best]


def _best_exchange(K, y, c_box, epsilon, beta, i, j):
    """Exact maximizer of the dual along beta_i += t, beta_j -= t.

    The 1-D slice is piecewise concave-quadratic with kinks where beta_i+t
    or beta_j-t crosses zero; each piece is solved in closed form and the
    best candidate wins.  Returns (gain, t)."""
    t_lo = max(-c_box[i] - beta[i], beta[j] - c_box[j])
    t_hi = min(c_box[i] - beta[i], beta[j] + c_box[j])
    if t_hi <= t_lo:
        return 0.0, 0.0
    g = K @ beta
    slope0 = y[i] - y[j] - g[i] + g[j]
    eta = K[i, i] + K[j, j] - 2.0 * K[i, j]

    cuts = sorted({t_lo, t_hi, min(max(-beta[i], t_lo), t_hi), min(max(beta[j], t_lo), t_hi)})
    candidates = set(cuts)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        sign_i = 1.0 if beta[i] + mid >= 0 else -1.0
        sign_j = 1.0 if beta[j] - mid >= 0 else -1.0
        # d/dt of: t*slope0 - eta*t^2/2 - eps*(sign_i*(beta_i+t) + sign_j*(beta_j-t))
        lin = slope0 - epsilon * (sign_i - sign_j)
        if eta > 0:
            candidates.add(min(max(lin / eta, lo), hi))

    def gain(t):
        return (
            t * slope0
            - 0.5 * eta * t * t
            - epsilon * (abs(beta[i] + t) + abs(beta[j] - t) - abs(beta[i]) - abs(beta[j]))
        )

    best_t = max(candidates, key=gain)
    return gain(best_t), best_t


def _pairwise_sweep(K, y, c_box, epsilon, beta, max_passes: int = 300):
    """Cyclic exhaustive sweeps over all coordinate pairs with exact line
    maximization; a full pass without improvement certifies optimality of
    the concave dual over the exchange-direction spanning set."""
    n = y.shape[0]
    beta = np.asarray(beta, dtype=np.float64).copy()
    for _ in range(max_passes):
        improved = False
        for i in range(n):
            for j in range(i + 1, n):
                gain, t = _best_exchange(K, y, c_box, epsilon, beta, i, j)
                if gain > 1e-14:
                    beta[i] += t
                    beta[j] -= t
                    improved = True
        if not improved:
            break
    return svr_dual_objective(K, y, epsilon, beta), beta


def grid_qp_oracle(K, y, c_box, epsilon, fine_steps: int = 2001):
    """Reference solution of the SVR dual, independent of the SMO code.

    For three samples and fewer (the spec's grid case) this is a dense
    product grid over the free coordinates at ~1e-3 of the box range; a
    pairwise exchange sweep then polishes the winner past the grid pitch.
    Larger problems cannot be gridded densely (up to seven free
    dimensions), so the exchange sweep runs from the origin: it searches
    exhaustively over all pair directions with exact piecewise-quadratic
    line solves, which certifies the optimum of this concave program.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    c_box = np.asarray(c_box, dtype=np.float64)
    n = y.shape[0]
    free = n - 1
    if free == 0:
        return svr_dual_objective(K, y, epsilon, np.zeros(1)), np.zeros(1)

    if free <= 2:
        axes = [np.linspace(-c_box[i], c_box[i], fine_steps) for i in range(free)]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
        _, start = _evaluate_candidates(K, y, epsilon, c_box, grid)
    else:
        start = np.zeros(n)
    return _pairwise_sweep(K, y, c_box, epsilon, start)


def random_connected_graph(rng, n_vertices: int, extra_edges: int) -> set[tuple[int, int]]:
    """Random spanning tree plus a few extra edges; always connected."""
    edges = set()
    order = list(range(n_vertices))
    rng.shuffle(order)
    for i in range(1, n_vertices):
        j = order[rng.randrange(i)]
        a, b = order[i], j
        edges.add((min(a, b), max(a, b)))
    attempts = 0
    while len(edges) < n_vertices - 1 + extra_edges and attempts < 50:
        a, b = rng.randrange(n_vertices), rng.randrange(n_vertices)
        attempts += 1
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return edges
