"""Pure-Python reference kernels. The Cython module mirrors these line for line."""

from __future__ import annotations

import numpy as np

NAME = "python"


def exact_table(values, probs, k: int, T: int):
    """Bottom-up optimal values over (open positions, available mask).

    Returns (V, choice) of shape (K+1, 2**n) with K = min(k, T); a state
    with more open positions than remaining stages behaves like K.
    """
    n = len(values)
    K = min(k, T)
    size = 1 << n
    V = [[0.0] * size for _ in range(K + 1)]
    C = [[-1] * size for _ in range(K + 1)]
    vals = [float(x) for x in values]
    ps = [float(x) for x in probs]
    pc = [0] * size
    for mask in range(1, size):
        pc[mask] = pc[mask >> 1] + (mask & 1)
    for mask in range(1, size):
        t = n - pc[mask] + 1
        if t > T:
            continue
        for kk in range(1, K + 1):
            Vk = V[kk]
            Vd = V[kk - 1]
            best = -1.0
            arg = -1
            for i in range(n):
                if mask >> i & 1:
                    rest = mask ^ (1 << i)
                    p = ps[i]
                    val = p * (vals[i] + Vd[rest]) + (1.0 - p) * Vk[rest]
                    if val > best:
                        best = val
                        arg = i
            Vk[mask] = best
            C[kk][mask] = arg
    return np.array(V, dtype=np.float64), np.array(C, dtype=np.int64)


def simulate_blocks(ptr, apps, left, right, coin, probs, values, k: int, T: int, root: int, U):
    """Walk a flattened block tree once per row of U; return per-trial rewards."""
    trials = U.shape[0]
    n = len(probs)
    out = np.zeros(trials, dtype=np.float64)
    ptr = ptr.tolist()
    apps = apps.tolist()
    left = left.tolist()
    right = right.tolist()
    coin = coin.tolist()
    probs = [float(x) for x in probs]
    values = [float(x) for x in values]
    stamp = [-1] * n
    for tr in range(trials):
        row = U[tr].tolist()
        pos = 0
        u = root
        total = 0.0
        hires = 0
        stages = 0
        while left[u] >= 0:
            accepted = False
            for j in range(ptr[u], ptr[u + 1]):
                a = apps[j]
                if stamp[a] == tr:
                    raise RuntimeError(f"applicant {a} offered twice in trial {tr}")
                stamp[a] = tr
                x = row[pos]
                pos += 1
                if x < probs[a]:
                    total += values[a]
                    accepted = True
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
                x = row[pos]
                pos += 1
                u = left[u] if x < coin[u] else right[u]
            else:
                u = left[u]
        out[tr] = total
    return out
