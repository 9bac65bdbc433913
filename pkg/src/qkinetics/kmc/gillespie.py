"""Gillespie direct-method kernel over occupation configurations.

Event rates live in a Fenwick tree indexed ``2c`` ("+" direction of channel
``c``) and ``2c + 1`` ("-" direction), so selection and the incremental
update after an event are both logarithmic in the channel count.  Rates are
stored in units of ``gamma`` as integer-valued floats; partial sums are exact
while the total stays below 2**53.

Uniform variates come from a numpy ``PCG64`` stream and are consumed two per
attempted event (waiting time, then selection), which keeps trajectories a
pure function of the seed regardless of how a run is chunked.
"""

from __future__ import annotations

import numpy as np
from numba import njit

REACHED = 0
ABSORBED = 1
MAX_EVENTS = 2
NEED_UNIFORMS = 3


@njit(cache=True, nogil=True)
def _pair_remove(n, i, j):
    if i == j:
        return n[i] * (n[i] - 1)
    return n[i] * n[j]


@njit(cache=True, nogil=True)
def _pair_add(n, i, j):
    if i == j:
        return (n[i] + 1) * (n[i] + 2)
    return (n[i] + 1) * (n[j] + 1)


@njit(cache=True, nogil=True)
def _channel_rates(n, chan, c):
    i1, i2, i3, i4 = chan[c, 0], chan[c, 1], chan[c, 2], chan[c, 3]
    plus = float(_pair_add(n, i1, i2) * _pair_remove(n, i3, i4))
    minus = float(_pair_remove(n, i1, i2) * _pair_add(n, i3, i4))
    return plus, minus


@njit(cache=True, nogil=True)
def _fenwick_add(tree, i, delta):
    size = tree.shape[0] - 1
    i += 1
    while i <= size:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def _fenwick_find(tree, target):
    # smallest 0-based index whose inclusive prefix sum exceeds target
    size = tree.shape[0] - 1
    pos = 0
    step = 1
    while step * 2 <= size:
        step *= 2
    rem = target
    while step > 0:
        nxt = pos + step
        if nxt <= size and tree[nxt] <= rem:
            pos = nxt
            rem -= tree[nxt]
        step //= 2
    return pos


@njit(cache=True, nogil=True)
def build_rates(n, chan):
    C = chan.shape[0]
    rates = np.zeros(2 * C)
    tree = np.zeros(2 * C + 1)
    total = 0.0
    for c in range(C):
        p, m = _channel_rates(n, chan, c)
        rates[2 * c] = p
        rates[2 * c + 1] = m
        total += p + m
    # linear-time Fenwick construction
    for i in range(1, 2 * C + 1):
        tree[i] += rates[i - 1]
        j = i + (i & (-i))
        if j <= 2 * C:
            tree[j] += tree[i]
    return rates, tree, total


@njit(cache=True, nogil=True)
def advance(n, chan, ptr, inc, rates, tree, total, gamma, uniforms, t, t_stop,
            max_events, out_dt, out_code, record):
    """Run events until ``t_stop``, absorption, ``max_events`` or uniforms run out.

    Mutates ``n``, ``rates`` and ``tree`` in place.  Returns
    ``(events, pairs_used, t, total, status)``.
    """
    events = 0
    used = 0
    n_pairs = uniforms.shape[0] // 2
    while True:
        if total <= 0.0:
            return events, used, t, total, ABSORBED
        if events >= max_events:
            return events, used, t, total, MAX_EVENTS
        if used >= n_pairs:
            return events, used, t, total, NEED_UNIFORMS
        u1 = uniforms[2 * used]
        u2 = uniforms[2 * used + 1]
        used += 1
        dt = -np.log1p(-u1) / (gamma * total)
        if t + dt > t_stop:
            # memoryless: the next attempt redraws from t_stop
            return events, used, t_stop, total, REACHED
        t += dt
        code = _fenwick_find(tree, u2 * total)
        c = code // 2
        sign = 1 if code % 2 == 0 else -1
        n[chan[c, 0]] += sign
        n[chan[c, 1]] += sign
        n[chan[c, 2]] -= sign
        n[chan[c, 3]] -= sign
        for k in range(4):
            m = chan[c, k]
            seen = False
            for kk in range(k):
                if chan[c, kk] == m:
                    seen = True
            if seen:
                continue
            for q in range(ptr[m], ptr[m + 1]):
                cc = inc[q]
                p, mi = _channel_rates(n, chan, cc)
                dp = p - rates[2 * cc]
                dm = mi - rates[2 * cc + 1]
                if dp != 0.0:
                    rates[2 * cc] = p
                    _fenwick_add(tree, 2 * cc, dp)
                    total += dp
                if dm != 0.0:
                    rates[2 * cc + 1] = mi
                    _fenwick_add(tree, 2 * cc + 1, dm)
                    total += dm
        if record:
            out_dt[events] = dt
            out_code[events] = code
        events += 1


def incidence(chan: np.ndarray, n_modes: int):
    """CSR map from each mode to the channels that touch it."""
    lists = [set() for _ in range(n_modes)]
    for c, row in enumerate(chan.tolist()):
        for m in row:
            lists[m].add(c)
    ptr = np.zeros(n_modes + 1, dtype=np.int64)
    for m, s in enumerate(lists):
        ptr[m + 1] = ptr[m] + len(s)
    inc = np.zeros(ptr[-1], dtype=np.int64)
    for m, s in enumerate(lists):
        inc[ptr[m]:ptr[m + 1]] = sorted(s)
    return ptr, inc
