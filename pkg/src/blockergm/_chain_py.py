"""Pure-Python Metropolis-Hastings chain over one block's dyads.

Reference implementation of the compiled kernel in ``_chain.pyx``. The two
share a splitmix64 random stream and an identical arithmetic sequence, so for
the same arguments they produce byte-identical results (the benchmark and the
kernel tests rely on this).
"""
import math

import numpy as np

IS_COMPILED = False

_MASK = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


def _stats_from_scratch(A, codes, bins, w, m):
    s = [0.0] * w
    off = 0
    for t in range(len(codes)):
        code = codes[t]
        T = bins[t]
        if code == 0:
            c = 0
            for i in range(m):
                row = A[i]
                for j in range(i + 1, m):
                    if row[j]:
                        c += 1
            s[off] = float(c)
        elif code == 1:
            c = 0
            for i in range(m):
                for j in range(i + 1, m):
                    if A[i][j]:
                        for h in range(m):
                            if A[i][h] and A[j][h]:
                                c += 1
                                break
            s[off] = float(c)
        elif code == 2:
            for i in range(m):
                d = sum(A[i])
                if 1 <= d <= T:
                    s[off + d - 1] += 1.0
        elif code == 3:
            for i in range(m):
                for j in range(i + 1, m):
                    if A[i][j]:
                        c = 0
                        for h in range(m):
                            if A[i][h] and A[j][h]:
                                c += 1
                        if 1 <= c <= T:
                            s[off + c - 1] += 1.0
        off += T
    return s


def run_chain(adj, eta, codes, bins, burnin, interval, nsamples, seed,
              keep_states=False):
    """Run the within-block chain starting from ``adj``.

    Returns ``(stats, states, final)``: stats is (nsamples, w) float64,
    states is (nsamples, m, m) uint8 when requested (else None), final is the
    (m, m) uint8 end state.
    """
    adj = np.asarray(adj, dtype=np.uint8)
    m = adj.shape[0]
    eta = [float(x) for x in np.asarray(eta, dtype=np.float64)]
    codes = [int(c) for c in codes]
    bins = [int(b) for b in bins]
    w = sum(bins)
    out = np.zeros((nsamples, w), dtype=np.float64)
    states = np.zeros((nsamples, m, m), dtype=np.uint8) if keep_states else None

    A = [[int(adj[i, j]) for j in range(m)] for i in range(m)]
    di = []
    dj = []
    for i in range(m):
        for j in range(i + 1, m):
            di.append(i)
            dj.append(j)
    ndyads = len(di)
    if ndyads == 0:
        if keep_states:
            for r in range(nsamples):
                states[r] = adj
        return out, states, adj.copy()

    deg = [sum(A[i]) for i in range(m)]
    s_cur = _stats_from_scratch(A, codes, bins, w, m)
    need_common = any(c in (1, 3) for c in codes)
    delta = [0.0] * w
    common = [0] * m

    state = seed & _MASK

    def next_double():
        nonlocal state
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        z = z ^ (z >> 31)
        return (z >> 11) * _INV53

    total_sweeps = burnin + nsamples * interval
    rec = 0
    nterms = len(codes)
    for sweep in range(total_sweeps):
        for _ in range(ndyads):
            d = int(next_double() * ndyads)
            i = di[d]
            j = dj[d]
            Ai = A[i]
            Aj = A[j]
            present = Ai[j]
            if present:
                Ai[j] = 0
                Aj[i] = 0
                deg[i] -= 1
                deg[j] -= 1
            # delta = s(with dyad) - s(without dyad), on the without-state
            for c in range(w):
                delta[c] = 0.0
            ncom = 0
            if need_common:
                for h in range(m):
                    if Ai[h] and Aj[h]:
                        common[ncom] = h
                        ncom += 1
            off = 0
            for t in range(nterms):
                code = codes[t]
                T = bins[t]
                if code == 0:
                    delta[off] = 1.0
                elif code == 1:
                    dd = 1.0 if ncom > 0 else 0.0
                    for idx in range(ncom):
                        Ah = A[common[idx]]
                        seen = False
                        for ww in range(m):
                            if Ai[ww] and Ah[ww]:
                                seen = True
                                break
                        if not seen:
                            dd += 1.0
                        seen = False
                        for ww in range(m):
                            if Aj[ww] and Ah[ww]:
                                seen = True
                                break
                        if not seen:
                            dd += 1.0
                    delta[off] = dd
                elif code == 2:
                    for a in (i, j):
                        d0 = deg[a]
                        if 1 <= d0 <= T:
                            delta[off + d0 - 1] -= 1.0
                        if d0 + 1 <= T:
                            delta[off + d0] += 1.0
                elif code == 3:
                    if 1 <= ncom <= T:
                        delta[off + ncom - 1] += 1.0
                    for idx in range(ncom):
                        Ah = A[common[idx]]
                        for Aa in (Ai, Aj):
                            c1 = 0
                            for ww in range(m):
                                if Aa[ww] and Ah[ww]:
                                    c1 += 1
                            if 1 <= c1 <= T:
                                delta[off + c1 - 1] -= 1.0
                            if c1 + 1 <= T:
                                delta[off + c1] += 1.0
                off += T
            logr = 0.0
            for c in range(w):
                logr += eta[c] * delta[c]
            u = next_double()
            if present:
                lacc = -logr
                if lacc > 0.0:
                    lacc = 0.0
                if u < math.exp(lacc):
                    for c in range(w):
                        s_cur[c] -= delta[c]
                else:
                    Ai[j] = 1
                    Aj[i] = 1
                    deg[i] += 1
                    deg[j] += 1
            else:
                lacc = logr
                if lacc > 0.0:
                    lacc = 0.0
                if u < math.exp(lacc):
                    Ai[j] = 1
                    Aj[i] = 1
                    deg[i] += 1
                    deg[j] += 1
                    for c in range(w):
                        s_cur[c] += delta[c]
        if sweep >= burnin and (sweep - burnin + 1) % interval == 0:
            for c in range(w):
                out[rec, c] = s_cur[c]
            if keep_states:
                states[rec] = np.array(A, dtype=np.uint8)
            rec += 1
    final = np.array(A, dtype=np.uint8)
    return out, states, final
