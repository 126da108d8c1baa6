# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled Metropolis-Hastings chain over one block's dyads.

Mirror of ``_chain_py.run_chain``: same splitmix64 stream, same arithmetic
sequence, byte-identical output.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp

IS_COMPILED = True

cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline double next_double(unsigned long long *state) nogil:
    cdef unsigned long long z
    state[0] = state[0] + <unsigned long long>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <unsigned long long>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <unsigned long long>0x94D049BB133111EB
    z = z ^ (z >> 31)
    return <double>(z >> 11) * INV53


cdef void stats_from_scratch(unsigned char[:, ::1] A, int[::1] codes,
                             int[::1] bins, double[::1] s, Py_ssize_t m) nogil:
    cdef Py_ssize_t t, i, j, h, off
    cdef int code, T, c, d
    off = 0
    for t in range(codes.shape[0]):
        code = codes[t]
        T = bins[t]
        if code == 0:
            c = 0
            for i in range(m):
                for j in range(i + 1, m):
                    if A[i, j]:
                        c += 1
            s[off] = <double>c
        elif code == 1:
            c = 0
            for i in range(m):
                for j in range(i + 1, m):
                    if A[i, j]:
                        for h in range(m):
                            if A[i, h] and A[j, h]:
                                c += 1
                                break
            s[off] = <double>c
        elif code == 2:
            for i in range(m):
                d = 0
                for h in range(m):
                    if A[i, h]:
                        d += 1
                if 1 <= d <= T:
                    s[off + d - 1] += 1.0
        elif code == 3:
            for i in range(m):
                for j in range(i + 1, m):
                    if A[i, j]:
                        c = 0
                        for h in range(m):
                            if A[i, h] and A[j, h]:
                                c += 1
                        if 1 <= c <= T:
                            s[off + c - 1] += 1.0
        off += T


def run_chain(adj, eta, codes, bins, long burnin, long interval,
              long nsamples, unsigned long long seed, keep_states=False):
    """Run the within-block chain starting from ``adj``.

    Returns ``(stats, states, final)`` exactly like the pure-Python kernel.
    """
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] A_arr = np.array(adj, dtype=np.uint8, order="C")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] eta_arr = np.ascontiguousarray(eta, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] codes_arr = np.ascontiguousarray(codes, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] bins_arr = np.ascontiguousarray(bins, dtype=np.int32)

    cdef Py_ssize_t m = A_arr.shape[0]
    cdef int w = 0
    cdef Py_ssize_t t
    for t in range(bins_arr.shape[0]):
        w += bins_arr[t]

    out = np.zeros((nsamples, w), dtype=np.float64)
    states = np.zeros((nsamples, m, m), dtype=np.uint8) if keep_states else None

    cdef unsigned char[:, ::1] A = A_arr
    cdef double[::1] ev = eta_arr
    cdef int[::1] cv = codes_arr
    cdef int[::1] bv = bins_arr
    cdef double[:, ::1] ov = out

    cdef long ndyads = m * (m - 1) // 2
    cdef long r
    if ndyads == 0:
        if keep_states:
            for r in range(nsamples):
                states[r] = A_arr
        return out, states, A_arr.copy()

    cdef cnp.ndarray[cnp.int64_t, ndim=1] di_arr = np.zeros(ndyads, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dj_arr = np.zeros(ndyads, dtype=np.int64)
    cdef long[::1] di = di_arr
    cdef long[::1] dj = dj_arr
    cdef Py_ssize_t i, j
    cdef long pos = 0
    for i in range(m):
        for j in range(i + 1, m):
            di[pos] = i
            dj[pos] = j
            pos += 1

    cdef cnp.ndarray[cnp.int64_t, ndim=1] deg_arr = np.zeros(m, dtype=np.int64)
    cdef long[::1] deg = deg_arr
    for i in range(m):
        for j in range(m):
            if A[i, j]:
                deg[i] += 1

    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_arr = np.zeros(w, dtype=np.float64)
    cdef double[::1] s_cur = s_arr
    stats_from_scratch(A, cv, bv, s_cur, m)

    cdef bint need_common = False
    for t in range(cv.shape[0]):
        if cv[t] == 1 or cv[t] == 3:
            need_common = True

    cdef cnp.ndarray[cnp.float64_t, ndim=1] delta_arr = np.zeros(w, dtype=np.float64)
    cdef double[::1] delta = delta_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] common_arr = np.zeros(m, dtype=np.int64)
    cdef long[::1] common = common_arr

    cdef unsigned long long state = seed
    cdef long total_sweeps = burnin + nsamples * interval
    cdef long rec = 0
    cdef Py_ssize_t nterms = cv.shape[0]
    cdef long sweep, p, dsel
    cdef Py_ssize_t h, ww, idx, off, c
    cdef int code, T, ncom, c1, d0, side
    cdef unsigned char present
    cdef bint seen
    cdef double dd, logr, lacc, u
    cdef Py_ssize_t a

    for sweep in range(total_sweeps):
        for p in range(ndyads):
            dsel = <long>(next_double(&state) * ndyads)
            i = di[dsel]
            j = dj[dsel]
            present = A[i, j]
            if present:
                A[i, j] = 0
                A[j, i] = 0
                deg[i] -= 1
                deg[j] -= 1
            for c in range(w):
                delta[c] = 0.0
            ncom = 0
            if need_common:
                for h in range(m):
                    if A[i, h] and A[j, h]:
                        common[ncom] = h
                        ncom += 1
            off = 0
            for t in range(nterms):
                code = cv[t]
                T = bv[t]
                if code == 0:
                    delta[off] = 1.0
                elif code == 1:
                    dd = 1.0 if ncom > 0 else 0.0
                    for idx in range(ncom):
                        h = common[idx]
                        seen = False
                        for ww in range(m):
                            if A[i, ww] and A[h, ww]:
                                seen = True
                                break
                        if not seen:
                            dd += 1.0
                        seen = False
                        for ww in range(m):
                            if A[j, ww] and A[h, ww]:
                                seen = True
                                break
                        if not seen:
                            dd += 1.0
                    delta[off] = dd
                elif code == 2:
                    for side in range(2):
                        a = i if side == 0 else j
                        d0 = <int>deg[a]
                        if 1 <= d0 <= T:
                            delta[off + d0 - 1] -= 1.0
                        if d0 + 1 <= T:
                            delta[off + d0] += 1.0
                elif code == 3:
                    if 1 <= ncom <= T:
                        delta[off + ncom - 1] += 1.0
                    for idx in range(ncom):
                        h = common[idx]
                        for side in range(2):
                            a = i if side == 0 else j
                            c1 = 0
                            for ww in range(m):
                                if A[a, ww] and A[h, ww]:
                                    c1 += 1
                            if 1 <= c1 <= T:
                                delta[off + c1 - 1] -= 1.0
                            if c1 + 1 <= T:
                                delta[off + c1] += 1.0
                off += T
            logr = 0.0
            for c in range(w):
                logr += ev[c] * delta[c]
            u = next_double(&state)
            if present:
                lacc = -logr
                if lacc > 0.0:
                    lacc = 0.0
                if u < exp(lacc):
                    for c in range(w):
                        s_cur[c] -= delta[c]
                else:
                    A[i, j] = 1
                    A[j, i] = 1
                    deg[i] += 1
                    deg[j] += 1
            else:
                lacc = logr
                if lacc > 0.0:
                    lacc = 0.0
                if u < exp(lacc):
                    A[i, j] = 1
                    A[j, i] = 1
                    deg[i] += 1
                    deg[j] += 1
                    for c in range(w):
                        s_cur[c] += delta[c]
        if sweep >= burnin and (sweep - burnin + 1) % interval == 0:
            for c in range(w):
                ov[rec, c] = s_cur[c]
            if keep_states:
                states[rec] = A_arr
            rec += 1
    return out, states, A_arr
