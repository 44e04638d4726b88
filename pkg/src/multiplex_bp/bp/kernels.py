"""Compiled inner loops for the three message-passing schemes.

Array conventions (0-based labels throughout):

* ``msg[e]``: intra-layer message carried by directed slot ``e`` (source
  ``src[e]``, target ``nbr[e]``); ``rev[e]`` is the opposite slot.  Slots of
  node ``i`` in layer ``l`` are ``indptr[l, i]:indptr[l, i + 1]``.
* ``V[l, m, i, j]``: message from ``i(l)`` to the constraint factor joining
  ``i, j`` in layers ``l, m``.
* ``logF[l, m, i, j]``: log of that factor's message back to ``i(l)``;
  ``S[l, i]`` is its sum over the active factors of ``i(l)``.
* ``U[m, l, i]``: correlated-model message from ``i(m)`` to ``i(l)``.
* ``counts``: ``[intra, variable->factor, factor->variable]`` updates.
"""

import numpy as np
from numba import njit

TINY = 1e-300


@njit(cache=True)
def seed_kernel_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def _softmax_into(logv, out):
    m = logv[0]
    for a in range(1, logv.shape[0]):
        if logv[a] > m:
            m = logv[a]
    s = 0.0
    for a in range(logv.shape[0]):
        out[a] = np.exp(logv[a] - m)
        s += out[a]
    for a in range(logv.shape[0]):
        out[a] /= s


@njit(cache=True)
def _store(new, old_row, damping):
    """Damp, write into ``old_row`` and return the L1 change."""
    d = 0.0
    for a in range(new.shape[0]):
        v = (1.0 - damping) * new[a] + damping * old_row[a]
        d += abs(v - old_row[a])
        old_row[a] = v
    return d


@njit(cache=True)
def _add_cavity(lo, hi, skip, rev, msg, c, out):
    # sum over incoming slots except ``skip`` of log(sum_t c[t, a] m_t)
    q = out.shape[0]
    for e in range(lo, hi):
        if e == skip:
            continue
        inc = msg[rev[e]]
        for a in range(q):
            s = 0.0
            for t in range(q):
                s += c[t, a] * inc[t]
            if s < TINY:
                s = TINY
            out[a] += np.log(s)


@njit(cache=True)
def factor_closed_form(x, y, z, w_fail, w_pass, out):
    """Weighted f_check factor message towards slot 1.

    ``x, y, z`` are the normalised messages of ``j(l), i(l'), j(l')``.
    Equals ``sum f(a, b, g, d) x_b y_g z_d`` evaluated in ``O(q)``.
    """
    q = x.shape[0]
    sxy = 0.0
    for b in range(q):
        sxy += x[b] * (1.0 - y[b])
    dw = w_pass - w_fail
    for a in range(q):
        same = x[a] * (y[a] * z[a] + (1.0 - y[a]) * (1.0 - z[a]))
        diff = (1.0 - z[a]) * (sxy - x[a] * (1.0 - y[a]))
        out[a] = w_fail + dw * (same + diff)


@njit(cache=True)
def refresh_factors(V, logF, S, active, w_fail, w_pass, counts):
    """Recompute every active factor->variable message and the sums ``S``."""
    L, _, N, _, q = V.shape
    buf = np.empty(q)
    S[:] = 0.0
    for l in range(L):
        for m in range(L):
            if l == m or not active[l, m]:
                continue
            for i in range(N):
                for j in range(N):
                    if i == j:
                        continue
                    factor_closed_form(V[l, m, j, i], V[m, l, i, j], V[m, l, j, i], w_fail, w_pass, buf)
                    for a in range(q):
                        v = buf[a] if buf[a] > TINY else TINY
                        lv = np.log(v)
                        logF[l, m, i, j, a] = lv
                        S[l, i, a] += lv
                    counts[2] += 1


@njit(cache=True)
def refresh_factors_into(V, logF, S, active, m, l, w_fail, w_pass, counts):
    """Recompute the messages from factors of layer pair ``(m, l)`` towards
    layer ``m`` and rebuild ``S[m]``."""
    L, _, N, _, q = V.shape
    buf = np.empty(q)
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            factor_closed_form(V[m, l, j, i], V[l, m, i, j], V[l, m, j, i], w_fail, w_pass, buf)
            for a in range(q):
                v = buf[a] if buf[a] > TINY else TINY
                logF[m, l, i, j, a] = np.log(v)
            counts[2] += 1
    S[m] = 0.0
    for l2 in range(L):
        if l2 == m or not active[m, l2]:
            continue
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                for a in range(q):
                    S[m, i, a] += logF[m, l2, i, j, a]


@njit(cache=True)
def _sample_into(perm, K, k):
    # partial Fisher-Yates: perm[:k] becomes a uniform k-subset of perm[:K]
    for s in range(k):
        r = s + np.random.randint(0, K - s)
        tmp = perm[s]
        perm[s] = perm[r]
        perm[r] = tmp


@njit(cache=True)
def _add_constraints(l, i, excl, logF, S, others, n_other, N, k, full, perm, perm_x, out):
    """Add the (possibly sampled) constraint log-messages of ``i(l)``.

    ``excl`` is the flat index of a factor to leave out, or -1.  Flat index
    ``f`` maps to layer ``others[f // (N - 1)]`` and partner node
    ``f % (N - 1)`` shifted past ``i``.
    """
    q = out.shape[0]
    if n_other == 0 or N < 2:
        return
    if full:
        for a in range(q):
            out[a] += S[l, i, a]
        if excl >= 0:
            m = others[excl // (N - 1)]
            j = excl % (N - 1)
            if j >= i:
                j += 1
            for a in range(q):
                out[a] -= logF[l, m, i, j, a]
        return
    K = n_other * (N - 1)
    if excl >= 0:
        kk = k if k < K - 1 else K - 1
        _sample_into(perm_x, K - 1, kk)
    else:
        kk = k if k < K else K
        _sample_into(perm, K, kk)
    for s in range(kk):
        if excl >= 0:
            f = perm_x[s]
            if f >= excl:
                f += 1
        else:
            f = perm[s]
        m = others[f // (N - 1)]
        j = f % (N - 1)
        if j >= i:
            j += 1
        for a in range(q):
            out[a] += logF[l, m, i, j, a]


@njit(cache=True)
def _field(B, l, c, h):
    N, _, q = B.shape
    tot = np.zeros(q)
    for i in range(N):
        for t in range(q):
            tot[t] += B[i, l, t]
    for a in range(q):
        s = 0.0
        for t in range(q):
            s += c[t, a] * tot[t]
        h[l, a] = s / N


@njit(cache=True)
def _refresh_belief(i, l, e, rev, msg, c, B, h, buf):
    """Online belief/field update after message ``e`` (from ``i``) changed.

    ``b^i`` is ``m^{i->j}`` times the edge term from ``j``; the field moves by
    the change in ``i``'s contribution.
    """
    N = B.shape[0]
    q = B.shape[2]
    out = msg[e]
    inc = msg[rev[e]]
    tot = 0.0
    for a in range(q):
        s = 0.0
        for t in range(q):
            s += c[t, a] * inc[t]
        buf[a] = out[a] * s
        tot += buf[a]
    if not tot > 0.0:
        return
    for a in range(q):
        buf[a] /= tot
    for a in range(q):
        d = 0.0
        for t in range(q):
            d += c[t, a] * (buf[t] - B[i, l, t])
        h[l, a] += d / N
    for a in range(q):
        B[i, l, a] = buf[a]


@njit(cache=True)
def _correlated_term(l, i, excl_layer, U, f, L, out):
    # sum over source layers m != l (and != excl_layer) of log(sum_t f[a,t] U[m,l,i,t])
    q = out.shape[0]
    for m in range(L):
        if m == l or m == excl_layer:
            continue
        for a in range(q):
            s = 0.0
            for t in range(q):
                s += f[a, t] * U[m, l, i, t]
            if s < TINY:
                s = TINY
            out[a] += np.log(s)


@njit(cache=True)
def sweep_kernel(
    mode,
    layers,
    order,
    order_ptr,
    src,
    indptr,
    rev,
    msg,
    B,
    h,
    c,
    log_n,
    intra_full,
    V,
    logF,
    S,
    active,
    others,
    n_others,
    k,
    full,
    w_fail,
    w_pass,
    U,
    fmat,
    damping,
    counts,
):
    """One sweep. ``mode``: 0 single layer, 1 constrained, 2 correlated.

    For each listed layer in turn: update its directed edges in ``order``
    (serially, each update visible to the next, beliefs and field refreshed
    online), recompute its beliefs and field, then send its interlayer
    messages; for the constrained model the factor messages from this layer
    towards the partner layers are refreshed right away so the next layer
    sees them.  Returns the summed L1 change of all updated messages.
    """
    N = B.shape[0]
    L = B.shape[1]
    q = B.shape[2]
    logv = np.empty(q)
    new = np.empty(q)
    Kmax = (L - 1) * (N - 1) + 1
    perm = np.arange(Kmax)
    perm_x = np.arange(Kmax)
    conv = 0.0

    for pos in range(layers.shape[0]):
        l = layers[pos]
        K = n_others[l] * (N - 1)
        for s in range(K):
            perm[s] = s
            perm_x[s] = s
        for oe in range(order_ptr[pos], order_ptr[pos + 1]):
            e = order[oe]
            i = src[e]
            for a in range(q):
                logv[a] = log_n[a] - h[l, a]
            _add_cavity(indptr[l, i], indptr[l, i + 1], e, rev, msg, c, logv)
            if mode == 1:
                _add_constraints(l, i, -1, logF, S, others[l], n_others[l], N, k, full, perm, perm_x, logv)
            elif mode == 2:
                _correlated_term(l, i, -1, U, fmat, L, logv)
            _softmax_into(logv, new)
            conv += _store(new, msg[e], damping)
            counts[0] += 1
            _refresh_belief(i, l, e, rev, msg, c, B, h, new)

        for i in range(N):
            for a in range(q):
                intra_full[l, i, a] = 0.0
            _add_cavity(indptr[l, i], indptr[l, i + 1], -1, rev, msg, c, intra_full[l, i])
            for a in range(q):
                logv[a] = log_n[a] - h[l, a] + intra_full[l, i, a]
            if mode == 1:
                _add_constraints(l, i, -1, logF, S, others[l], n_others[l], N, k, full, perm, perm_x, logv)
            elif mode == 2:
                _correlated_term(l, i, -1, U, fmat, L, logv)
            # serial update, so the field follows each belief; a synchronous
            # refresh oscillates on layers with few edges
            _softmax_into(logv, new)
            for a in range(q):
                d = 0.0
                for t in range(q):
                    d += c[t, a] * (new[t] - B[i, l, t])
                h[l, a] += d / N
            for a in range(q):
                B[i, l, a] = new[a]
        _field(B, l, c, h)

        if mode == 1:
            # variable -> factor messages of layer l, then the factor
            # messages they feed into the partner layers
            for oi in range(n_others[l]):
                m = others[l, oi]
                for i in range(N):
                    for j in range(N):
                        if i == j:
                            continue
                        for a in range(q):
                            logv[a] = log_n[a] - h[l, a] + intra_full[l, i, a]
                        jj = j if j < i else j - 1
                        excl = oi * (N - 1) + jj
                        _add_constraints(l, i, excl, logF, S, others[l], n_others[l], N, k, full, perm, perm_x, logv)
                        _softmax_into(logv, new)
                        conv += _store(new, V[l, m, i, j], damping)
                        counts[1] += 1
            for oi in range(n_others[l]):
                m = others[l, oi]
                refresh_factors_into(V, logF, S, active, m, l, w_fail, w_pass, counts)
        elif mode == 2:
            for m in range(L):
                if m == l:
                    continue
                for i in range(N):
                    for a in range(q):
                        logv[a] = log_n[a] - h[l, a] + intra_full[l, i, a]
                    _correlated_term(l, i, m, U, fmat, L, logv)
                    _softmax_into(logv, new)
                    conv += _store(new, U[l, m, i], damping)
                    counts[1] += 1
    return conv
