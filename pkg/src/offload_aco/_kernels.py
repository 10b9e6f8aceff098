"""Hot loops of the ant colony: transition rule, colony construction, pheromone updates.

Graphs arrive in CSR form: the out-edges of node ``v`` are the edge ids
``out_ptr[v]:out_ptr[v+1]`` and ``edge_dst[e]`` is the target of edge ``e``.
Randomness is pre-drawn by the caller so the compiled and interpreted paths
consume identical streams.
"""

import numpy as np

from ._jit import njit


@njit(cache=True)
def edge_score(e, tau_t, tau_c, w_t, w_c, lam, alpha, beta, eps):
    tau = lam * tau_t[e] + (1.0 - lam) * tau_c[e]
    eta = 1.0 / (lam * w_t[e] + (1.0 - lam) * w_c[e] + eps)
    return tau**alpha * eta**beta


@njit(cache=True)
def select_edge(out_ptr, node, tau_t, tau_c, w_t, w_c, lam, alpha, beta, q0, eps, u_exploit, u_sample):
    """Pseudo-random-proportional choice among the out-edges of ``node``; -1 at a dead end."""
    lo = out_ptr[node]
    hi = out_ptr[node + 1]
    if hi == lo:
        return -1
    if hi - lo == 1:
        return lo
    best = lo
    best_score = -1.0
    total = 0.0
    for e in range(lo, hi):
        s = edge_score(e, tau_t, tau_c, w_t, w_c, lam, alpha, beta, eps)
        total += s
        if s > best_score:
            best_score = s
            best = e
    if u_exploit < q0:
        return best
    if not total > 0.0:
        k = int(u_sample * (hi - lo))
        return lo + min(k, hi - lo - 1)
    threshold = u_sample * total
    acc = 0.0
    for e in range(lo, hi):
        acc += edge_score(e, tau_t, tau_c, w_t, w_c, lam, alpha, beta, eps)
        if threshold < acc:
            return e
    return hi - 1


@njit(cache=True)
def relax_toward(tau, e, rho, tau0, tau_min, tau_max):
    v = (1.0 - rho) * tau[e] + rho * tau0
    if v < tau_min:
        v = tau_min
    elif v > tau_max:
        v = tau_max
    tau[e] = v


@njit(cache=True)
def construct_colony(
    out_ptr, edge_dst, start, end,
    tau_t, tau_c, w_t, w_c, lams,
    alpha, beta, q0, rho_local, tau0, tau_min, tau_max, eps,
    uniforms, paths, lengths, cost_t, cost_c,
):
    """Walk every ant from ``start`` to ``end`` in index order.

    Each traversed edge gets a local pheromone update before the next step.
    Fills ``paths[k, :lengths[k]]`` with edge ids and the summed costs.
    Returns the number of steps taken, or -1 if an ant hit a dead end.
    """
    steps = 0
    for k in range(lams.shape[0]):
        node = start
        n = 0
        t = 0.0
        c = 0.0
        while node != end:
            if n >= paths.shape[1]:
                return -1
            e = select_edge(
                out_ptr, node, tau_t, tau_c, w_t, w_c, lams[k], alpha, beta, q0, eps,
                uniforms[k, n, 0], uniforms[k, n, 1],
            )
            if e < 0:
                return -1
            relax_toward(tau_t, e, rho_local, tau0, tau_min, tau_max)
            relax_toward(tau_c, e, rho_local, tau0, tau_min, tau_max)
            t += w_t[e]
            c += w_c[e]
            paths[k, n] = e
            n += 1
            node = edge_dst[e]
        lengths[k] = n
        cost_t[k] = t
        cost_c[k] = c
        steps += n
    return steps


@njit(cache=True)
def iteration_front(paths, lengths, cost_t, cost_c):
    """Mask of distinct, mutually non-dominated ant solutions."""
    m = lengths.shape[0]
    keep = np.ones(m, dtype=np.bool_)
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            if (
                cost_t[j] <= cost_t[i]
                and cost_c[j] <= cost_c[i]
                and (cost_t[j] < cost_t[i] or cost_c[j] < cost_c[i])
            ):
                keep[i] = False
                break
    for i in range(m):
        if not keep[i]:
            continue
        for j in range(i):
            if not keep[j] or lengths[j] != lengths[i]:
                continue
            same = True
            for s in range(lengths[i]):
                if paths[i, s] != paths[j, s]:
                    same = False
                    break
            if same:
                keep[i] = False
                break
    return keep


@njit(cache=True)
def deposit(tau_t, tau_c, rho_global, paths, lengths, selected, cost_t, cost_c, q, eps, tau_min, tau_max):
    """Evaporate everywhere, reward the edges of the selected solutions, clamp."""
    for e in range(tau_t.shape[0]):
        tau_t[e] *= 1.0 - rho_global
        tau_c[e] *= 1.0 - rho_global
    for k in range(lengths.shape[0]):
        if not selected[k]:
            continue
        dt = q / (cost_t[k] + eps)
        dc = q / (cost_c[k] + eps)
        for s in range(lengths[k]):
            e = paths[k, s]
            tau_t[e] += dt
            tau_c[e] += dc
    for e in range(tau_t.shape[0]):
        tau_t[e] = min(max(tau_t[e], tau_min), tau_max)
        tau_c[e] = min(max(tau_c[e], tau_min), tau_max)
