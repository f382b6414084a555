"""Compiled inner loops for the quadratic-plus-abs function class."""

import numpy as np
from numba import njit

# selection rule codes shared with sgd.py
RULE_ACTIVE_PIECE = 0
RULE_MIN_NORM = 1
RULE_RANDOM_VERTEX = 2


@njit(cache=True, nogil=True)
def quad_abs_sgd(x0, head, tail, tol, rule_code, gammas, noise, signs,
                 x_star, radius, mbase, mbasis):
    """Subgradient recursion for f(x) = sum a_i x_i^2 + sum c_j |x_j|.

    Returns (xs, vs, fvals, dists, exit_index, diverged_at, steps_done).
    dists is the distance to the affine manifold (mbase, mbasis), recorded
    only while the iterate stays within `radius` of x_star (NaN outside).
    exit_index is the first n with ||x_n - x_star|| > radius, -1 if none.
    diverged_at is the first non-finite index, -1 if none.
    """
    n_steps = gammas.shape[0]
    d = x0.shape[0]
    k = head.shape[0]
    m = d - k
    kdim = mbasis.shape[1]

    xs = np.empty((n_steps + 1, d))
    vs = np.empty((n_steps, d))
    fvals = np.empty(n_steps + 1)
    dists = np.empty(n_steps + 1)

    x = x0.copy()
    xs[0] = x
    exit_index = -1
    diverged_at = -1
    steps_done = 0

    r2 = radius * radius
    s0 = 0.0
    for i in range(d):
        diff = x[i] - x_star[i]
        s0 += diff * diff
    if s0 > r2:
        exit_index = 0
    fvals[0] = _qa_value(x, head, tail, k)
    dists[0] = _affine_dist(x, mbase, mbasis, kdim) if s0 <= r2 else np.nan

    for n in range(n_steps):
        v = vs[n]
        for i in range(k):
            v[i] = 2.0 * head[i] * x[i]
        for j in range(m):
            xj = x[k + j]
            if xj > tol:
                v[k + j] = tail[j]
            elif xj < -tol:
                v[k + j] = -tail[j]
            else:
                if rule_code == RULE_ACTIVE_PIECE:
                    v[k + j] = tail[j]
                elif rule_code == RULE_MIN_NORM:
                    v[k + j] = 0.0
                else:
                    v[k + j] = tail[j] * signs[n, j]
        g = gammas[n]
        finite = True
        for i in range(d):
            x[i] = x[i] - g * v[i] + g * noise[n, i]
            if not np.isfinite(x[i]):
                finite = False
        xs[n + 1] = x
        steps_done = n + 1
        if not finite:
            diverged_at = n + 1
            fvals[n + 1] = np.nan
            dists[n + 1] = np.nan
            break
        s = 0.0
        for i in range(d):
            diff = x[i] - x_star[i]
            s += diff * diff
        inside = s <= r2
        if exit_index < 0 and not inside:
            exit_index = n + 1
        fvals[n + 1] = _qa_value(x, head, tail, k)
        dists[n + 1] = _affine_dist(x, mbase, mbasis, kdim) if inside else np.nan

    return xs, vs, fvals, dists, exit_index, diverged_at, steps_done


@njit(cache=True, nogil=True)
def _qa_value(x, head, tail, k):
    total = 0.0
    for i in range(k):
        total += head[i] * x[i] * x[i]
    for j in range(x.shape[0] - k):
        total += tail[j] * abs(x[k + j])
    return total


@njit(cache=True, nogil=True)
def _affine_dist(x, base, basis, kdim):
    d = x.shape[0]
    s = 0.0
    # ||w - basis basis^T w||, column by column
    coeffs = np.empty(kdim)
    for c in range(kdim):
        acc = 0.0
        for i in range(d):
            acc += basis[i, c] * (x[i] - base[i])
        coeffs[c] = acc
    for i in range(d):
        resid = x[i] - base[i]
        for c in range(kdim):
            resid -= basis[i, c] * coeffs[c]
        s += resid * resid
    return np.sqrt(s)


@njit(cache=True, nogil=True)
def abstract_block(w0, j_plus, j_minus, delta_scale, delta_cap, gammas, e, r, rt):
    """Lockstep recursion for the two-block toy system, one run per row.

    w0: (R, d) initial points; e: (R, T, d); r, rt: (R, T, dm).
    Updates, per run, with delta = delta_scale * min(||w||, delta_cap):
      w+ <- w+ - g J+ w+ + g e+
      w- <- w- + g (-J- + delta*I) w- + g (e- + r + rt)
    Returns w trajectory (R, T+1, d) and deltas (R, T) with ||Delta(w_n)||.
    """
    n_runs = w0.shape[0]
    d = w0.shape[1]
    dp = j_plus.shape[0]
    dm = j_minus.shape[0]
    n_steps = gammas.shape[0]

    w = np.empty((n_runs, n_steps + 1, d))
    hnorm = np.empty((n_runs, n_steps))
    for run in range(n_runs):
        w[run, 0] = w0[run]
    wp_new = np.empty(dp)
    wm_new = np.empty(dm)
    for n in range(n_steps):
        g = gammas[n]
        for run in range(n_runs):
            cur = w[run, n]
            norm_w = 0.0
            for i in range(d):
                norm_w += cur[i] * cur[i]
            norm_w = np.sqrt(norm_w)
            delta = delta_scale * min(norm_w, delta_cap)
            hnorm[run, n] = abs(delta)
            for i in range(dp):
                acc = 0.0
                for l in range(dp):
                    acc += j_plus[i, l] * cur[l]
                wp_new[i] = cur[i] - g * acc + g * e[run, n, i]
            for i in range(dm):
                acc = 0.0
                for l in range(dm):
                    acc += j_minus[i, l] * cur[dp + l]
                hw = -acc + delta * cur[dp + i]
                wm_new[i] = cur[dp + i] + g * hw + g * (
                    e[run, n, dp + i] + r[run, n, i] + rt[run, n, i])
            for i in range(dp):
                w[run, n + 1, i] = wp_new[i]
            for i in range(dm):
                w[run, n + 1, dp + i] = wm_new[i]
    return w, hnorm
