"""Numba inner loops for the value iteration and path simulation.

The (node, action) pairs are packed CSR-style: pair p of node n lives in
rows offsets[n] <= p < offsets[n+1].  A pair's one-step value is
base[p] + sum_k weights[p, k] * V[targets[p, k]], with discounting and
rewards folded into weights and base at assembly time.  Rows are padded
to a common width with zero weights.

Pairs are stored in tie-break priority order, so "first pair within
tolerance of the maximum" is the deterministic argmax rule.

The simulation kernel at the bottom runs Euler paths for the built-in
model families only; anything with callback dynamics goes through the
plain-Python engine in :mod:`harvseed.simulate`.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def gauss_seidel_sweep(V, order, offsets, weights, targets, base):
    """One in-place sweep over ``order``; returns (sup |delta|, min delta)."""
    width = weights.shape[1]
    sup = 0.0
    min_delta = 0.0
    for ii in range(order.shape[0]):
        node = order[ii]
        best = -1e300
        for p in range(offsets[node], offsets[node + 1]):
            acc = base[p]
            for k in range(width):
                acc += weights[p, k] * V[targets[p, k]]
            if acc > best:
                best = acc
        delta = best - V[node]
        if delta < min_delta:
            min_delta = delta
        if delta < 0.0:
            delta = -delta
        if delta > sup:
            sup = delta
        V[node] = best
    return sup, min_delta


@njit(cache=True)
def jacobi_sweep(V_old, V_new, offsets, weights, targets, base):
    """One synchronous sweep from V_old into V_new; same return values."""
    width = weights.shape[1]
    sup = 0.0
    min_delta = 0.0
    for node in range(V_old.shape[0]):
        best = -1e300
        for p in range(offsets[node], offsets[node + 1]):
            acc = base[p]
            for k in range(width):
                acc += weights[p, k] * V_old[targets[p, k]]
            if acc > best:
                best = acc
        delta = best - V_old[node]
        if delta < min_delta:
            min_delta = delta
        if delta < 0.0:
            delta = -delta
        if delta > sup:
            sup = delta
        V_new[node] = best
    return sup, min_delta


@njit(cache=True)
def select_actions(V, offsets, weights, targets, base, rel_tol):
    """Deterministic argmax: per node, the first pair whose value is
    within rel_tol (relative, floored at 1) of the node maximum.

    Returns the chosen pair index per node and the sup-norm Bellman
    residual max_n |max_p value(n, p) - V[n]|.
    """
    n = offsets.shape[0] - 1
    width = weights.shape[1]
    choice = np.empty(n, dtype=np.int64)
    residual = 0.0
    for node in range(n):
        best = -1e300
        for p in range(offsets[node], offsets[node + 1]):
            acc = base[p]
            for k in range(width):
                acc += weights[p, k] * V[targets[p, k]]
            if acc > best:
                best = acc
        scale = abs(best)
        if scale < 1.0:
            scale = 1.0
        threshold = best - rel_tol * scale
        chosen = offsets[node]
        for p in range(offsets[node], offsets[node + 1]):
            acc = base[p]
            for k in range(width):
                acc += weights[p, k] * V[targets[p, k]]
            if acc >= threshold:
                chosen = p
                break
        choice[node] = chosen
        diff = best - V[node]
        if diff < 0.0:
            diff = -diff
        if diff > residual:
            residual = diff
    return choice, residual


# ---------------------------------------------------------------------------
# path simulation

#: model-kind codes used by the simulation kernel
KIND_LOGISTIC = 1
KIND_COMPETITION = 2
KIND_PREDATOR_PREY = 3

#: policy-kind codes (per node)
P_DIFFUSION = 0
P_HARVEST = 1
P_SEED = 2
P_REFLECT = 3


@njit(cache=True)
def _chunk_1d(coeffs, f_level, f_slope, g_level, g_slope,
              gamma, dt, sqrt_dt, h, extent, n_nodes,
              pkind, pspecies, pseed, pharv, jump_cap,
              normals, step0, steps,
              X, disc, total, in_box_step, status, cap_hits, fail_step):
    """Single-species (logistic) chunk loop; scalar state per path."""
    inv_h = 1.0 / h
    b1 = coeffs[0]
    b2 = coeffs[1]
    sig = coeffs[2]
    fl = f_level[0]
    fsl = f_slope[0]
    gl = g_level[0]
    gsl = g_slope[0]
    last = n_nodes - 1

    for p in range(X.shape[0]):
        if status[p] != 0:
            continue
        x = X[p, 0]
        dc = disc[p]
        tt = total[p]
        ibs = in_box_step[p]
        for s in range(steps):
            node = int(x * inv_h + 0.5)
            if node > last:
                node = last
            loops = 0
            while pkind[node] != P_DIFFUSION and loops < jump_cap:
                code = pkind[node]
                if code == P_HARVEST:
                    tt += dc * (fl + fsl * x) * h
                    x -= h
                elif code == P_SEED:
                    tt -= dc * (gl + gsl * x) * h
                    x += h
                else:
                    x -= h
                if x < 0.0:
                    x = 0.0
                elif x > extent:
                    x = extent
                loops += 1
                node = int(x * inv_h + 0.5)
                if node > last:
                    node = last
            if loops >= jump_cap:
                cap_hits[p] = 1

            r = pharv[node, 0]
            c = pseed[node, 0]
            if r > 0.0 or c > 0.0:
                tt += dc * ((fl + fsl * x) * r - (gl + gsl * x) * c) * dt

            x = (x + (x * (b1 - b2 * x) + c - r) * dt
                 + sig * x * sqrt_dt * normals[p, s])
            if not np.isfinite(x):
                status[p] = 1
                fail_step[p] = step0 + s
                break
            if x < 0.0:
                x = 0.0
            elif x > extent:
                x = extent

            if x < h:
                if ibs < 0:
                    ibs = step0 + s
            else:
                ibs = -1
            dc *= gamma

        X[p, 0] = x
        disc[p] = dc
        total[p] = tt
        in_box_step[p] = ibs


@njit(cache=True)
def _chunk_2d(kind, coeffs, f_level, f_slope, g_level, g_slope,
              gamma, dt, sqrt_dt, h, extent, shape, strides,
              pkind, pspecies, pseed, pharv, jump_cap,
              normals, step0, steps,
              X, disc, total, in_box_step, status, cap_hits, fail_step):
    """Two-species chunk loop (competition / predator-prey)."""
    inv_h = 1.0 / h
    last1 = shape[0] - 1
    last2 = shape[1] - 1
    row = strides[0]

    for p in range(X.shape[0]):
        if status[p] != 0:
            continue
        x1 = X[p, 0]
        x2 = X[p, 1]
        dc = disc[p]
        tt = total[p]
        ibs = in_box_step[p]
        for s in range(steps):
            k1 = int(x1 * inv_h + 0.5)
            if k1 > last1:
                k1 = last1
            k2 = int(x2 * inv_h + 0.5)
            if k2 > last2:
                k2 = last2
            node = k1 * row + k2
            loops = 0
            while pkind[node] != P_DIFFUSION and loops < jump_cap:
                code = pkind[node]
                sp = pspecies[node]
                if sp == 0:
                    xs = x1
                else:
                    xs = x2
                if code == P_HARVEST:
                    tt += dc * (f_level[sp] + f_slope[sp] * xs) * h
                    xs -= h
                elif code == P_SEED:
                    tt -= dc * (g_level[sp] + g_slope[sp] * xs) * h
                    xs += h
                else:
                    xs -= h
                if xs < 0.0:
                    xs = 0.0
                elif xs > extent:
                    xs = extent
                if sp == 0:
                    x1 = xs
                else:
                    x2 = xs
                loops += 1
                k1 = int(x1 * inv_h + 0.5)
                if k1 > last1:
                    k1 = last1
                k2 = int(x2 * inv_h + 0.5)
                if k2 > last2:
                    k2 = last2
                node = k1 * row + k2
            if loops >= jump_cap:
                cap_hits[p] = 1

            r1 = pharv[node, 0]
            r2 = pharv[node, 1]
            c1 = pseed[node, 0]
            c2 = pseed[node, 1]
            rate_reward = ((f_level[0] + f_slope[0] * x1) * r1
                           + (f_level[1] + f_slope[1] * x2) * r2
                           - (g_level[0] + g_slope[0] * x1) * c1
                           - (g_level[1] + g_slope[1] * x2) * c2)
            if rate_reward != 0.0:
                tt += dc * rate_reward * dt

            if kind == KIND_COMPETITION:
                b0 = x1 * (coeffs[0] - coeffs[2] * x1 - coeffs[3] * x2)
                b1 = x2 * (coeffs[1] - coeffs[4] * x1 - coeffs[5] * x2)
                s0 = coeffs[6] * x1
                s1 = coeffs[7] * x2
            else:
                resp = x1 / (coeffs[2] + x1)
                b0 = x1 * (coeffs[0] - coeffs[3] * x1 - coeffs[4] * resp)
                b1 = x2 * (-coeffs[1] + coeffs[5] * resp - coeffs[6] * x2)
                s0 = coeffs[7] * x1
                s1 = coeffs[8] * x2
            x1 = x1 + (b0 + c1 - r1) * dt + s0 * sqrt_dt * normals[p, 2 * s]
            x2 = x2 + (b1 + c2 - r2) * dt + s1 * sqrt_dt * normals[p, 2 * s + 1]
            if not (np.isfinite(x1) and np.isfinite(x2)):
                status[p] = 1
                fail_step[p] = step0 + s
                break
            if x1 < 0.0:
                x1 = 0.0
            elif x1 > extent:
                x1 = extent
            if x2 < 0.0:
                x2 = 0.0
            elif x2 > extent:
                x2 = extent

            if x1 < h and x2 < h:
                if ibs < 0:
                    ibs = step0 + s
            else:
                ibs = -1
            dc *= gamma

        X[p, 0] = x1
        X[p, 1] = x2
        disc[p] = dc
        total[p] = tt
        in_box_step[p] = ibs


def simulate_chunk(kind, coeffs, d, f_level, f_slope, g_level, g_slope,
                   gamma, dt, sqrt_dt, h, extent, shape, strides,
                   pkind, pspecies, pseed, pharv, jump_cap,
                   normals, step0, steps,
                   X, disc, total, in_box_step, status, cap_hits, fail_step):
    """Advance every active path by ``steps`` Euler time points.

    Path state (``X``, ``disc``, running ``total`` reward, extinction
    streak, failure bookkeeping) lives in the caller's arrays so the
    caller can refill ``normals`` between chunks; path p consumes
    ``normals[p, s*d + i]`` at chunk step s, species i, exactly d draws
    per time point whether or not jumps fire.

    Each time point applies the policy's jump chain first (rewards
    undiscounted within the chain, capped at ``jump_cap`` moves), then
    accumulates the running reward, then takes one Euler step and
    clamps to [0, extent]^d.  Policy lookup rounds half-up to the
    nearest node.  A non-finite state marks ``status`` 1 and records
    the global step index in ``fail_step``.
    """
    if d == 1:
        _chunk_1d(coeffs, f_level, f_slope, g_level, g_slope,
                  gamma, dt, sqrt_dt, h, extent, shape[0],
                  pkind, pspecies, pseed, pharv, jump_cap,
                  normals, step0, steps,
                  X, disc, total, in_box_step, status, cap_hits, fail_step)
    else:
        _chunk_2d(kind, coeffs, f_level, f_slope, g_level, g_slope,
                  gamma, dt, sqrt_dt, h, extent, shape, strides,
                  pkind, pspecies, pseed, pharv, jump_cap,
                  normals, step0, steps,
                  X, disc, total, in_box_step, status, cap_hits, fail_step)
