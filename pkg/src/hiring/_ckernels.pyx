# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; results match hiring._kernels_py bit for bit."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

NAME = "cython"


def exact_table(values, probs, int k, int T):
    cdef int n = len(values)
    cdef int K = min(k, T)
    cdef Py_ssize_t size = (<Py_ssize_t>1) << n
    V_arr = np.zeros((K + 1, size), dtype=np.float64)
    C_arr = np.full((K + 1, size), -1, dtype=np.int64)
    pc_arr = np.zeros(size, dtype=np.int32)
    vals_arr = np.ascontiguousarray(values, dtype=np.float64)
    ps_arr = np.ascontiguousarray(probs, dtype=np.float64)
    cdef double[:, ::1] V = V_arr
    cdef cnp.int64_t[:, ::1] C = C_arr
    cdef int[::1] pc = pc_arr
    cdef double[::1] vals = vals_arr
    cdef double[::1] ps = ps_arr
    cdef Py_ssize_t mask, rest
    cdef int t, kk, i, arg
    cdef double best, val, p
    for mask in range(1, size):
        pc[mask] = pc[mask >> 1] + (mask & 1)
    for mask in range(1, size):
        t = n - pc[mask] + 1
        if t > T:
            continue
        for kk in range(1, K + 1):
            best = -1.0
            arg = -1
            for i in range(n):
                if (mask >> i) & 1:
                    rest = mask ^ ((<Py_ssize_t>1) << i)
                    p = ps[i]
                    val = p * (vals[i] + V[kk - 1, rest]) + (1.0 - p) * V[kk, rest]
                    if val > best:
                        best = val
                        arg = i
            V[kk, mask] = best
            C[kk, mask] = arg
    return V_arr, C_arr


def simulate_blocks(ptr_in, apps_in, left_in, right_in, coin_in, probs_in, values_in,
                    int k, int T, int root, U_in):
    cdef cnp.int64_t[::1] ptr = np.ascontiguousarray(ptr_in, dtype=np.int64)
    cdef cnp.int64_t[::1] apps = np.ascontiguousarray(apps_in, dtype=np.int64)
    cdef cnp.int64_t[::1] left = np.ascontiguousarray(left_in, dtype=np.int64)
    cdef cnp.int64_t[::1] right = np.ascontiguousarray(right_in, dtype=np.int64)
    cdef double[::1] coin = np.ascontiguousarray(coin_in, dtype=np.float64)
    cdef double[::1] probs = np.ascontiguousarray(probs_in, dtype=np.float64)
    cdef double[::1] values = np.ascontiguousarray(values_in, dtype=np.float64)
    cdef double[:, ::1] U = np.ascontiguousarray(U_in, dtype=np.float64)
    cdef Py_ssize_t trials = U.shape[0]
    cdef int n = probs.shape[0]
    out_arr = np.zeros(trials, dtype=np.float64)
    cdef double[::1] out = out_arr
    stamp_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] stamp = stamp_arr
    cdef Py_ssize_t tr, pos, j, u, a
    cdef double total, x
    cdef int hires, stages, accepted
    for tr in range(trials):
        pos = 0
        u = root
        total = 0.0
        hires = 0
        stages = 0
        while left[u] >= 0:
            accepted = 0
            for j in range(ptr[u], ptr[u + 1]):
                a = apps[j]
                if stamp[a] == tr:
                    raise RuntimeError(f"applicant {a} offered twice in trial {tr}")
                stamp[a] = tr
                x = U[tr, pos]
                pos += 1
                if x < probs[a]:
                    total += values[a]
                    accepted = 1
                    break
            stages += ptr[u + 1] - ptr[u]
            if stages > T:
                raise RuntimeError(f"more than T={T} stages in trial {tr}")
            if accepted:
                hires += 1
                if hires > k:
                    raise RuntimeError(f"more than k={k} hires in trial {tr}")
                u = right[u]
            elif coin[u] >= 0.0:
                x = U[tr, pos]
                pos += 1
                u = left[u] if x < coin[u] else right[u]
            else:
                u = left[u]
        out[tr] = total
    return out_arr
