"""Compiled inner loops.

Per-vertex randomness comes from a Philox4x64-10 counter-based generator
keyed by the replica and indexed by ``(vertex, state, tag)``. The uniform that
decides when vertex ``m`` leaves indegree ``k`` is therefore a fixed function
of ``(key, m, k)``, so every engine below (single vertex, merged event queue,
checkpoint stream) produces the same per-vertex evolution for the same key.
"""

import math

import numpy as np
from numba import njit
from numba.typed import List

from .rules import (
    CODE_AFFINE,
    CODE_CONST,
    CODE_POWER,
    CODE_TABLE_AFFINE,
    EULER_GAMMA,
)

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)

# counter tags separating the uses of one replica key
TAG_VERTEX = 0
TAG_COUPLING = 1

# beyond this the step index is treated as a continuous variable
EXACT_STEP_LIMIT = 2.0**52

SEQUENTIAL_WIDTH = 64


@njit(cache=True, nogil=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _LO32) + (p2 & _LO32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, a * b


@njit(cache=True, nogil=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def counter_uniform(k0, k1, a, b, tag):
    """Uniform on [0, 1) for counter (a, b, tag, 0) under key (k0, k1)."""
    x, _, _, _ = philox4x64(np.uint64(a), np.uint64(b), np.uint64(tag), np.uint64(0), k0, k1)
    return np.float64(x >> _S11) * (1.0 / 9007199254740992.0)


# ----------------------------------------------------------------------------
# rule evaluation

@njit(cache=True, nogil=True)
def f_at(code, p0, p1, table, k):
    if code == CODE_POWER:
        return p0 * (k + 1.0) ** p1
    if code == CODE_AFFINE:
        return p0 * k + 1.0
    if code == CODE_CONST:
        return p0
    n = table.size
    if k < n:
        return table[k]
    if code == CODE_TABLE_AFFINE:
        return table[n - 1] + p0 * (k - n + 1)
    return table[n - 1]


# ----------------------------------------------------------------------------
# special functions

@njit(cache=True, nogil=True)
def harmonic(m):
    """H_m for real m >= 0 (integer-valued below 32)."""
    if m < 32.0:
        s = 0.0
        for i in range(1, int(m) + 1):
            s += 1.0 / i
        return s
    r = 1.0 / (m * m)
    tail = r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r / 240)))
    return math.log(m) + EULER_GAMMA + 0.5 / m - tail


@njit(cache=True, nogil=True)
def harmonic_diff(b, a):
    """H_b - H_a for b >= a >= 0, accurate when both are large."""
    if a < 32.0:
        return harmonic(b) - harmonic(a)
    ra = 1.0 / (a * a)
    rb = 1.0 / (b * b)
    ta = ra * (1.0 / 12 - ra * (1.0 / 120 - ra * (1.0 / 252 - ra / 240)))
    tb = rb * (1.0 / 12 - rb * (1.0 / 120 - rb * (1.0 / 252 - rb / 240)))
    return math.log1p((b - a) / a) + 0.5 / b - 0.5 / a - tb + ta


@njit(cache=True, nogil=True)
def _stirling_tail(z):
    r = 1.0 / (z * z)
    return (1.0 / 12 - r * (1.0 / 360 - r * (1.0 / 1260 - r / 1680))) / z


@njit(cache=True, nogil=True)
def lg_ratio(x, a):
    """log Gamma(x - a) - log Gamma(x) for x - a > 0."""
    y = x - a
    if y < 32.0:
        return math.lgamma(y) - math.lgamma(x)
    return (
        (y - 0.5) * math.log1p(-a / x)
        - a * math.log(x)
        + a
        + _stirling_tail(y)
        - _stirling_tail(x)
    )


# ----------------------------------------------------------------------------
# skip-ahead inversion

@njit(cache=True, nogil=True)
def next_jump(n0, N, f, logv, lg_end):
    """First step q in (n0, N] whose edge hits a vertex sitting at weight f.

    The vertex entered its state at step ``n0``; the edge created at step
    ``i+1`` arrives with probability ``f/i``. ``logv`` is log of a uniform on
    (0, 1]. ``lg_end`` is ``lg_ratio(N, f)``. Returns N+1 if no jump.
    """
    if N <= n0:
        return N + 1
    if f >= n0:
        return n0 + 1
    if N - n0 <= SEQUENTIAL_WIDTH:
        s = 0.0
        for i in range(n0, N):
            s += math.log1p(-f / i)
            if s < logv:
                return i + 1
        return N + 1
    base = lg_ratio(float(n0), f)
    if lg_end - base >= logv:
        return N + 1
    h = 0.5 * (f + 1.0)
    guess = h + (n0 - h) * math.exp(-logv / f)
    if guess - n0 <= SEQUENTIAL_WIDTH:
        s = 0.0
        for i in range(n0, N):
            s += math.log1p(-f / i)
            if s < logv:
                return i + 1
        return N
    if guess >= N:
        q = N
    else:
        q = max(int(math.ceil(guess)), n0 + 1)
    # bracket: lo has log-survival >= logv, hi has < logv
    if lg_ratio(float(q), f) - base < logv:
        hi = q
        step = 1
        while True:
            c = hi - step
            if c <= n0:
                lo = n0
                break
            if lg_ratio(float(c), f) - base >= logv:
                lo = c
                break
            hi = c
            step *= 2
    else:
        lo = q
        step = 1
        while True:
            c = lo + step
            if c >= N:
                hi = N
                break
            if lg_ratio(float(c), f) - base < logv:
                hi = c
                break
            lo = c
            step *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if lg_ratio(float(mid), f) - base < logv:
            hi = mid
        else:
            lo = mid
    return hi


@njit(cache=True, nogil=True)
def _vertex_logv(k0, k1, m, k):
    return math.log1p(-counter_uniform(k0, k1, m, k, TAG_VERTEX))


@njit(cache=True, nogil=True)
def _end_cache(code, p0, p1, table, N, size):
    out = np.empty(size)
    for k in range(size):
        f = f_at(code, p0, p1, table, k)
        out[k] = lg_ratio(float(N), f) if N > f else 0.0
    return out


@njit(cache=True, nogil=True)
def vertex_jumps(code, p0, p1, table, m, N, k0, k1):
    """Jump steps of vertex m up to step N."""
    out = np.empty(16, dtype=np.int64)
    k = 0
    n0 = m
    while True:
        f = f_at(code, p0, p1, table, k)
        lg_end = lg_ratio(float(N), f) if N > f else 0.0
        q = next_jump(n0, N, f, _vertex_logv(k0, k1, m, k), lg_end)
        if q > N:
            break
        if k == out.size:
            grown = np.empty(2 * out.size, dtype=np.int64)
            grown[:k] = out
            out = grown
        out[k] = q
        k += 1
        n0 = q
    return out[:k]


@njit(cache=True, nogil=True)
def vertex_degrees_at(code, p0, p1, table, m, checkpoints, k0, k1):
    """Indegree of vertex m at each (sorted) checkpoint step."""
    N = checkpoints[-1]
    out = np.zeros(checkpoints.size, dtype=np.int64)
    k = 0
    n0 = m
    ci = 0
    while ci < checkpoints.size and checkpoints[ci] < m:
        ci += 1
    while ci < checkpoints.size:
        f = f_at(code, p0, p1, table, k)
        lg_end = lg_ratio(float(N), f) if N > f else 0.0
        q = next_jump(n0, N, f, _vertex_logv(k0, k1, m, k), lg_end)
        while ci < checkpoints.size and checkpoints[ci] < q:
            out[ci] = k
            ci += 1
        k += 1
        n0 = q
    return out


# ----------------------------------------------------------------------------
# whole-population engines

@njit(cache=True, nogil=True)
def hub_checkpoints(code, p0, p1, table, N, checkpoints, k0, k1):
    """Hub (smallest index among max indegree) at each checkpoint.

    Vertices are streamed in birth order, so a strictly larger degree is the
    only way to displace the current record holder.
    """
    nc = checkpoints.size
    hub = np.ones(nc, dtype=np.int64)
    best = np.full(nc, -1, dtype=np.int64)
    ties = np.zeros(nc, dtype=np.int64)
    cache = _end_cache(code, p0, p1, table, N, 256)
    for m in range(1, N + 1):
        ci = 0
        while ci < nc and checkpoints[ci] < m:
            ci += 1
        if ci == nc:
            break
        k = 0
        n0 = m
        while ci < nc:
            f = f_at(code, p0, p1, table, k)
            if k < cache.size:
                lg_end = cache[k]
            else:
                lg_end = lg_ratio(float(N), f) if N > f else 0.0
            q = next_jump(n0, N, f, _vertex_logv(k0, k1, m, k), lg_end)
            while ci < nc and checkpoints[ci] < q:
                if k > best[ci]:
                    best[ci] = k
                    hub[ci] = m
                    ties[ci] = 1
                elif k == best[ci]:
                    ties[ci] += 1
                ci += 1
            k += 1
            n0 = q
    return hub, best, ties


@njit(cache=True, nogil=True)
def _heap_push(keys, vals, size, key, val):
    i = size
    keys[i] = key
    vals[i] = val
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return size + 1


@njit(cache=True, nogil=True)
def _heap_pop(keys, vals, size):
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and keys[left + 1] < keys[left]:
            child = left + 1
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        vals[child], vals[i] = vals[i], vals[child]
        i = child
    return size


@njit(cache=True, nogil=True)
def hub_events(code, p0, p1, table, N, k0, k1, audit_every):
    """Merged event simulation of all vertices up to step N.

    Returns (steps, hubs, maxdegs, audit_failures, jump_counts) where the
    event arrays record every change of the hub identity, starting with
    vertex 1 at step 1. ``jump_counts[n]`` is the outdegree of vertex n.
    """
    deg = np.zeros(N + 1, dtype=np.int64)
    keys = np.empty(N + 1, dtype=np.int64)
    vals = np.empty(N + 1, dtype=np.int64)
    size = 0
    cache = _end_cache(code, p0, p1, table, N, 256)
    outdeg = np.zeros(N + 1, dtype=np.int64)

    ev_n = np.empty(64, dtype=np.int64)
    ev_h = np.empty(64, dtype=np.int64)
    ev_d = np.empty(64, dtype=np.int64)
    ev_n[0] = 1
    ev_h[0] = 1
    ev_d[0] = 0
    n_ev = 1
    hub = 1
    maxdeg = 0
    audit_fail = 0

    for n in range(1, N + 1):
        # vertex n is born at step n with indegree 0
        f = f_at(code, p0, p1, table, 0)
        q = next_jump(n, N, f, _vertex_logv(k0, k1, n, 0), cache[0])
        if q <= N:
            size = _heap_push(keys, vals, size, q, n)
        changed = False
        while size > 0 and keys[0] == n:
            m = vals[0]
            size = _heap_pop(keys, vals, size)
            outdeg[n] += 1
            k = deg[m] + 1
            deg[m] = k
            if k > maxdeg or (k == maxdeg and m < hub):
                if m != hub:
                    changed = True
                hub = m
                maxdeg = k
            f = f_at(code, p0, p1, table, k)
            if k < cache.size:
                lg_end = cache[k]
            else:
                lg_end = lg_ratio(float(N), f) if N > f else 0.0
            q = next_jump(n, N, f, _vertex_logv(k0, k1, m, k), lg_end)
            if q <= N:
                size = _heap_push(keys, vals, size, q, m)
        if changed and ev_h[n_ev - 1] != hub:
            if n_ev == ev_n.size:
                ev_n = np.concatenate((ev_n, np.empty(n_ev, dtype=np.int64)))
                ev_h = np.concatenate((ev_h, np.empty(n_ev, dtype=np.int64)))
                ev_d = np.concatenate((ev_d, np.empty(n_ev, dtype=np.int64)))
            ev_n[n_ev] = n
            ev_h[n_ev] = hub
            ev_d[n_ev] = maxdeg
            n_ev += 1
            if audit_every > 0 and n_ev % audit_every == 0:
                best = 0
                arg = 1
                for v in range(1, n + 1):
                    if deg[v] > best:
                        best = deg[v]
                        arg = v
                if best != maxdeg or arg != hub:
                    audit_fail += 1
    return ev_n[:n_ev], ev_h[:n_ev], ev_d[:n_ev], audit_fail, outdeg, deg


# ----------------------------------------------------------------------------
# bucket dynamics

BINOMIAL_INVERSION_MAX = 30.0


@njit(cache=True, nogil=True)
def binomial(rng, n, p):
    """Binomial(n, p): inversion when n*p is small, numpy's sampler otherwise."""
    if p <= 0.0 or n == 0:
        return 0
    if p >= 1.0:
        return n
    if n * p > BINOMIAL_INVERSION_MAX:
        return rng.binomial(n, p)
    q = 1.0 - p
    r = math.exp(n * math.log1p(-p))
    s = p / q
    a = (n + 1) * s
    u = rng.random()
    x = 0
    while u > r:
        u -= r
        x += 1
        if x >= n:
            return n
        r *= a / x - s
        if r <= 0.0:
            break
    return x


@njit(cache=True, nogil=True)
def bucket_run(code, p0, p1, table, N, checkpoints, record_outdegree, rng):
    """Evolve indegree counts from one vertex to N vertices.

    Returns (snapshots, edge totals at checkpoints, per-step outdegrees).
    ``outdeg[n]`` is the number of edges created by vertex n.
    """
    cap = 64
    c = np.zeros(cap, dtype=np.int64)
    fv = np.empty(cap)
    for k in range(cap):
        fv[k] = f_at(code, p0, p1, table, k)
    c[0] = 1
    kmax = 0
    total = 0
    snaps = List()
    totals = np.zeros(checkpoints.size, dtype=np.int64)
    outdeg = np.zeros(N + 1 if record_outdegree else 1, dtype=np.int32)
    ci = 0
    while ci < checkpoints.size and checkpoints[ci] == 1:
        snaps.append(c[: kmax + 1].copy())
        totals[ci] = 0
        ci += 1
    for n in range(1, N):
        if kmax + 2 >= cap:
            grown = np.zeros(2 * cap, dtype=np.int64)
            grown[:cap] = c
            fgrown = np.empty(2 * cap)
            fgrown[:cap] = fv
            for k in range(cap, 2 * cap):
                fgrown[k] = f_at(code, p0, p1, table, k)
            c = grown
            fv = fgrown
            cap *= 2
        step = 0
        top = kmax
        inv_n = 1.0 / n
        for k in range(top, -1, -1):
            ck = c[k]
            if ck == 0:
                continue
            b = binomial(rng, ck, fv[k] * inv_n)
            if b > 0:
                c[k] = ck - b
                c[k + 1] += b
                step += b
                if k + 1 > kmax:
                    kmax = k + 1
        c[0] += 1
        total += step
        if record_outdegree:
            outdeg[n + 1] = step
        while ci < checkpoints.size and checkpoints[ci] == n + 1:
            snaps.append(c[: kmax + 1].copy())
            totals[ci] = total
            ci += 1
    return snaps, totals, outdeg


# ----------------------------------------------------------------------------
# quantile coupling

@njit(cache=True, nogil=True)
def coupling_run(fvals, m, k0, k1, max_step):
    """Couple the sojourn times of one vertex with exponential clocks.

    ``fvals[j]`` is f(j) for the states j = 0..J-1 that are traversed.
    Returns (entry steps, discrete times, exponential times, status) where
    status is 0 on success and 1 if the entry step exceeded ``max_step``.
    """
    J = fvals.size
    entry = np.empty(J)
    ts = np.empty(J)
    te = np.empty(J)
    n0 = float(m)
    for j in range(J):
        f = fvals[j]
        entry[j] = n0
        logv = math.log1p(-counter_uniform(k0, k1, j, 0, TAG_COUPLING))
        te[j] = -logv / f
        if n0 < EXACT_STEP_LIMIT:
            ni = np.int64(n0)
            limit = np.int64(EXACT_STEP_LIMIT)
            q = next_jump(ni, limit, f, logv, lg_ratio(EXACT_STEP_LIMIT, f))
            if q <= limit:
                qf = float(q)
            else:
                h = 0.5 * (f + 1.0)
                qf = h + (n0 - h) * math.exp(-logv / f)
        else:
            h = 0.5 * (f + 1.0)
            qf = h + (n0 - h) * math.exp(-logv / f)
            if qf <= n0:
                qf = n0 + 1.0
        if qf > max_step:
            return entry[:j], ts[:j], te[:j], 1
        ts[j] = harmonic_diff(qf - 1.0, n0 - 1.0)
        n0 = qf
    return entry, ts, te, 0
