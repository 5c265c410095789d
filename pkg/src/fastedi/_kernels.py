"""Compiled inner loops. Python-side wrappers own validation and state."""

import math

import numpy as np
from numba import njit

# status codes returned by the validation pass of push_batch
OK = 0
BAD_ORDER = 1
BAD_COORD = 2
BAD_POLARITY = 3

# layout of the int64 scalar-state vector shared with fast.EdiAccumulator
ST_COUNTER = 0
ST_LAST_T = 1
ST_T_START = 2
ST_N_TOUCHED = 3
ST_POOL_USED = 4
ST_REJECTED = 5
ST_MERGED = 6
ST_SIZE = 7


@njit(cache=True, nogil=True)
def validate_batch(t, x, y, p, width, height, last_t):
    for i in range(t.shape[0]):
        if t[i] < last_t:
            return BAD_ORDER, i
        last_t = t[i]
        if x[i] < 0 or x[i] >= width or y[i] < 0 or y[i] >= height:
            return BAD_COORD, i
        if p[i] != 1 and p[i] != -1:
            return BAD_POLARITY, i
    return OK, -1


@njit(cache=True, nogil=True)
def push_batch(t, x, y, p, width, c_on, c_off, count_mode, cap,
               s, head, tail, length, folded, prev_v, touched,
               pool_v, pool_m, pool_next, state):
    """Step 1 for a validated batch. Pool capacity must cover ``len(t)`` more entries."""
    counter = state[ST_COUNTER]
    t0 = state[ST_T_START]
    nt = state[ST_N_TOUCHED]
    used = state[ST_POOL_USED]
    rejected = state[ST_REJECTED]
    merged = state[ST_MERGED]
    last_t = state[ST_LAST_T]
    for i in range(t.shape[0]):
        ti = t[i]
        last_t = ti
        if ti <= t0:
            rejected += 1
            continue
        pix = y[i] * width + x[i]
        if p[i] > 0:
            s[pix] += c_on
        else:
            s[pix] += c_off
        v = math.exp(s[pix])
        counter += 1
        marker = counter if count_mode else ti
        n = length[pix]
        if n == 0:
            touched[nt] = pix
            nt += 1
            head[pix] = used
            tail[pix] = used
            pool_v[used] = v
            pool_m[used] = marker
            pool_next[used] = -1
            length[pix] = 1
            used += 1
        elif cap > 0 and n >= cap:
            # fold the closed segment of the tail entry, then overwrite it.
            # Moving the tail marker also stretches the previous entry's
            # segment by the same span; take that back out of the fold.
            j = tail[pix]
            folded[pix] += (pool_v[j] - prev_v[pix]) * (marker - pool_m[j])
            pool_v[j] = v
            pool_m[j] = marker
            merged += 1
        else:
            prev_v[pix] = pool_v[tail[pix]]
            pool_next[tail[pix]] = used
            tail[pix] = used
            pool_v[used] = v
            pool_m[used] = marker
            pool_next[used] = -1
            length[pix] = n + 1
            used += 1
    state[ST_COUNTER] = counter
    state[ST_N_TOUCHED] = nt
    state[ST_POOL_USED] = used
    state[ST_REJECTED] = rejected
    state[ST_MERGED] = merged
    state[ST_LAST_T] = last_t


@njit(cache=True, nogil=True)
def finalize(base, end, denom, head, folded, pool_v, pool_m, pool_next, touched, n_touched, e_out):
    """Step 2: outer integral per touched pixel. Returns the multiply-add count.

    ``base`` is the marker value at which the initial latent value 1 starts
    contributing and ``end`` the marker at which the last entry stops.
    """
    ops = 0
    for j in range(n_touched):
        pix = touched[j]
        idx = head[pix]
        acc = folded[pix] + (pool_m[idx] - base) * 1.0
        ops += 1
        while True:
            nxt = pool_next[idx]
            if nxt < 0:
                acc += pool_v[idx] * (end - pool_m[idx])
                ops += 1
                break
            acc += pool_v[idx] * (pool_m[nxt] - pool_m[idx])
            ops += 1
            idx = nxt
        e_out[pix] = acc / denom
    return ops


@njit(cache=True, nogil=True)
def reset_touched(s, head, tail, length, folded, touched, state):
    for j in range(state[ST_N_TOUCHED]):
        pix = touched[j]
        s[pix] = 0.0
        head[pix] = -1
        tail[pix] = -1
        length[pix] = 0
        folded[pix] = 0.0
    state[ST_N_TOUCHED] = 0
    state[ST_POOL_USED] = 0
    state[ST_COUNTER] = 0
    state[ST_REJECTED] = 0
    state[ST_MERGED] = 0


@njit(cache=True, nogil=True)
def baseline_accumulate(t, x, y, p, width, n_pixels, c_on, c_off, t_start, t_end, count_mode):
    """Frame-wise reference integration: one full-frame addition per event.

    Returns (s, acc, weight_total).
    """
    s = np.zeros(n_pixels)
    latent = np.ones(n_pixels)
    acc = np.zeros(n_pixels)
    prev = t_start
    weight = 0.0
    for k in range(t.shape[0]):
        if not count_mode:
            dt = float(t[k] - prev)
            for i in range(n_pixels):
                acc[i] += latent[i] * dt
            weight += dt
            prev = t[k]
        pix = y[k] * width + x[k]
        if p[k] > 0:
            s[pix] += c_on
        else:
            s[pix] += c_off
        latent[pix] = math.exp(s[pix])
        if count_mode:
            for i in range(n_pixels):
                acc[i] += latent[i]
            weight += 1.0
    if not count_mode:
        dt = float(t_end - prev)
        for i in range(n_pixels):
            acc[i] += latent[i] * dt
        weight += dt
    return s, acc, weight


@njit(cache=True, nogil=True)
def log_crossings(r_prev, r_next, t_prev, t_next, r_ref, c_on, c_off, tol, pix_out, t_out, p_out, n_out):
    """Emit threshold crossings for one sample interval over all pixels.

    ``r_ref`` is updated in place. Output buffers must hold every crossing;
    returns the new fill level, or -1 when the buffers are too small.
    """
    n = n_out
    cap = pix_out.shape[0]
    span = float(t_next - t_prev)
    for i in range(r_prev.shape[0]):
        a = r_prev[i]
        b = r_next[i]
        ref = r_ref[i]
        if b - ref >= c_on - tol:
            while b - ref >= c_on - tol:
                ref += c_on
                if n >= cap:
                    return -1
                frac = (ref - a) / (b - a) if b != a else 1.0
                frac = min(max(frac, 0.0), 1.0)
                pix_out[n] = i
                t_out[n] = t_prev + int(math.floor(frac * span + 0.5))
                p_out[n] = 1
                n += 1
        elif b - ref <= c_off + tol:
            while b - ref <= c_off + tol:
                ref += c_off
                if n >= cap:
                    return -1
                frac = (ref - a) / (b - a) if b != a else 1.0
                frac = min(max(frac, 0.0), 1.0)
                pix_out[n] = i
                t_out[n] = t_prev + int(math.floor(frac * span + 0.5))
                p_out[n] = -1
                n += 1
        r_ref[i] = ref
    return n
