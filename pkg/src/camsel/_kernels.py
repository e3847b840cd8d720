"""Small numeric kernels compiled with numba."""

from __future__ import annotations

import numpy as np
from numba import njit

_TOL = 1e-15
_EPS_LINE = 1e-12  # same as geometry.EPS_LINE
_MAX_SWEEPS = 60


@njit(cache=True)
def _triangular_factor(A, T, B):
    """Write into B (k, k) the R of a Householder QR of A (m, k), using scratch T (m, k)."""
    m, k = A.shape
    T[:] = A
    for j in range(k):
        norm = 0.0
        for r in range(j, m):
            norm += T[r, j] * T[r, j]
        norm = np.sqrt(norm)
        if norm == 0.0:
            continue
        alpha = -norm if T[j, j] >= 0 else norm
        T[j, j] -= alpha
        vv = 0.0
        for r in range(j, m):
            vv += T[r, j] * T[r, j]
        for c in range(j + 1, k):
            dot = 0.0
            for r in range(j, m):
                dot += T[r, j] * T[r, c]
            f = 2.0 * dot / vv
            for r in range(j, m):
                T[r, c] -= f * T[r, j]
        T[j, j] = alpha
    for r in range(k):
        for c in range(k):
            B[r, c] = T[r, c] if c >= r else 0.0


@njit(cache=True)
def _jacobi(B, rows, W):
    """One-sided Jacobi on B[:rows] (k columns) in place, accumulating rotations into W.

    Returns (column of the smallest norm, smallest norm, second-smallest norm).
    """
    k = B.shape[1]
    for r in range(k):
        for c in range(k):
            W[r, c] = 1.0 if r == c else 0.0
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                a = 0.0
                b = 0.0
                c = 0.0
                for r in range(rows):
                    a += B[r, p] * B[r, p]
                    b += B[r, q] * B[r, q]
                    c += B[r, p] * B[r, q]
                if c == 0.0 or abs(c) <= _TOL * np.sqrt(a * b):
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * c)
                tan = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / np.sqrt(1.0 + tan * tan)
                sn = cs * tan
                for r in range(rows):
                    x = B[r, p]
                    y = B[r, q]
                    B[r, p] = cs * x - sn * y
                    B[r, q] = sn * x + cs * y
                for r in range(k):
                    x = W[r, p]
                    y = W[r, q]
                    W[r, p] = cs * x - sn * y
                    W[r, q] = sn * x + cs * y
        if not rotated:
            break
    # ties go to the lower column
    best = -1
    nb, ns = np.inf, np.inf
    for p in range(k):
        acc = 0.0
        for r in range(rows):
            acc += B[r, p] * B[r, p]
        acc = np.sqrt(acc)
        if acc < nb:
            ns = nb
            best, nb = p, acc
        elif acc < ns:
            ns = acc
    return best, nb, ns


@njit(cache=True)
def _jacobi_null(A, V, s):
    n, m, k = A.shape
    B = np.empty((max(m, k), k))
    T = np.empty((m, k))
    W = np.empty((k, k))
    for t in range(n):
        if m > k:
            _triangular_factor(A[t], T, B)
        else:
            B[:m] = A[t]
        best, s[t, 0], s[t, 1] = _jacobi(B, min(m, k), W)
        for r in range(k):
            V[t, r] = W[r, best]


@njit(cache=True)
def _dlt_null(Ps, uv, conf, V, s, views):
    H, n = conf.shape
    G = np.zeros((2 * H, 4))
    T = np.empty((2 * H, 4))
    B = np.empty((4, 4))
    W = np.empty((4, 4))
    for t in range(n):
        m = 0
        views[t] = 0
        for h in range(H):
            if not conf[h, t] > 0:
                continue
            views[t] += 1
            for c in range(2):
                x = uv[h, t, c]
                norm = 0.0
                for j in range(4):
                    G[m, j] = x * Ps[h, 2, j] - Ps[h, c, j]
                    norm += G[m, j] * G[m, j]
                norm = np.sqrt(norm)
                if norm > 0 and np.isfinite(norm):
                    w = conf[h, t] / norm
                    for j in range(4):
                        G[m, j] *= w
                    m += 1
        if m > 4:
            _triangular_factor(G[:m], T[:m], B)
        else:
            for r in range(4):
                for j in range(4):
                    B[r, j] = G[r, j] if r < m else 0.0
        best, s[t, 0], s[t, 1] = _jacobi(B, 4, W)
        for r in range(4):
            V[t, r] = W[r, best]


def dlt_null(Ps: np.ndarray, uv: np.ndarray, conf: np.ndarray):
    """Weighted DLT null vectors of n points seen by H cameras ``Ps`` (H, 3, 4).

    Same rows as ``geometry.weighted_design``; zero-weight rows are dropped.
    Returns (v (n, 4), s_min, s_next, views with positive weight).
    """
    Ps = np.ascontiguousarray(Ps, dtype=float)
    uv = np.ascontiguousarray(uv, dtype=float)
    conf = np.ascontiguousarray(conf, dtype=float)
    n = conf.shape[1]
    V = np.empty((n, 4))
    s = np.empty((n, 2))
    views = np.empty(n, dtype=np.int64)
    if n:
        _dlt_null(Ps, uv, conf, V, s, views)
    return V, s[:, 0], s[:, 1], views


def smallest_singular(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Smallest right singular vector of each matrix in A (n, m, k), by one-sided Jacobi SVD.

    Returns (v, s_min, s_next): v is (n, k) with unit rows, s_min and s_next the
    smallest and second-smallest singular values.
    """
    A = np.ascontiguousarray(A, dtype=float)
    n, _, k = A.shape
    V = np.empty((n, k))
    s = np.empty((n, 2))
    if n:
        _jacobi_null(A, V, s)
    return V, s[:, 0], s[:, 1]


@njit(cache=True)
def greedy_associate(S, C, keys, present, threshold):
    """Greedy cross-view association on pair tables.

    S[v, w, i, j] and C[v, w, i, j] hold the summed symmetric epipolar
    distance and the joint count between pose i of view v and pose j of view
    w; ``present`` (V, K) marks existing poses and ``keys`` orders the views
    (camera ids). Returns (n_candidates, V) pose indices, -1 where a
    candidate has no pose in a view.
    """
    V, K = present.shape
    members = np.full((V * K, V), -1, dtype=np.int64)
    counts = np.zeros(V, dtype=np.int64)
    for v in range(V):
        for j in range(K):
            if present[v, j]:
                counts[v] += 1
    start = -1
    for v in range(V):
        if counts[v] == 0:
            continue
        if start < 0 or counts[v] > counts[start] or (counts[v] == counts[start] and keys[v] < keys[start]):
            start = v
    if start < 0:
        return members[:0]
    n_cand = 0
    for j in range(K):
        if present[start, j]:
            members[n_cand, start] = j
            n_cand += 1
    rest = np.argsort(keys, kind="mergesort")
    seq = np.empty(V, dtype=np.int64)
    seq[0] = start
    n_seq = 1
    for x in range(V):
        v = rest[x]
        if v != start and counts[v] > 0:
            seq[n_seq] = v
            n_seq += 1
    cost = np.empty(K * V * K)
    pose = np.empty(K * V * K, dtype=np.int64)
    cand = np.empty(K * V * K, dtype=np.int64)
    for step in range(1, n_seq):
        w = seq[step]
        existing = n_cand
        n_pairs = 0
        for i in range(K):
            if not present[w, i]:
                continue
            for c in range(existing):
                tot = 0.0
                cnt = 0.0
                for x in range(step):
                    v = seq[x]
                    m = members[c, v]
                    if m >= 0:
                        tot += S[v, w, m, i]
                        cnt += C[v, w, m, i]
                if cnt > 0 and tot / cnt < threshold:
                    cost[n_pairs] = tot / cnt
                    pose[n_pairs] = i
                    cand[n_pairs] = c
                    n_pairs += 1
        order = np.argsort(cost[:n_pairs], kind="mergesort")
        used_pose = np.zeros(K, dtype=np.bool_)
        used_cand = np.zeros(existing, dtype=np.bool_)
        for o in order:
            i = pose[o]
            c = cand[o]
            if used_pose[i] or used_cand[c]:
                continue
            members[c, w] = i
            used_pose[i] = True
            used_cand[c] = True
        for i in range(K):
            if present[w, i] and not used_pose[i]:
                members[n_cand, w] = i
                n_cand += 1
    return members[:n_cand]


@njit(cache=True)
def random_walk(pos, heading, speed, omega, drive, target, dt, max_speed, turn_rate, a, lo, hi, out):
    """Advance the floor random walk through every slot; see ``scene.root_trajectories``."""
    T = out.shape[0]
    P = pos.shape[0]
    gain = np.sqrt(1.0 - a * a) * turn_rate
    for p in range(P):
        out[0, p, 0] = pos[p, 0]
        out[0, p, 1] = pos[p, 1]
    for t in range(1, T):
        for p in range(P):
            omega[p] = a * omega[p] + gain * drive[t - 1, p]
            heading[p] += omega[p] * dt
            s = a * speed[p] + (1.0 - a) * target[t - 1, p] * max_speed
            speed[p] = min(max(s, 0.0), max_speed)
            x = pos[p, 0] + speed[p] * np.cos(heading[p]) * dt
            y = pos[p, 1] + speed[p] * np.sin(heading[p]) * dt
            if x > hi[0]:
                x = 2 * hi[0] - x
                heading[p] = np.pi - heading[p]
            elif x < lo[0]:
                x = 2 * lo[0] - x
                heading[p] = np.pi - heading[p]
            if y > hi[1]:
                y = 2 * hi[1] - y
                heading[p] = -heading[p]
            elif y < lo[1]:
                y = 2 * lo[1] - y
                heading[p] = -heading[p]
            pos[p, 0] = x
            pos[p, 1] = y
            out[t, p, 0] = x
            out[t, p, 1] = y


@njit(cache=True)
def _pair_sums(F, xa, pa, xb, pb, S, C):
    """Summed symmetric epipolar distance and joint count for the present pose pairs of two views."""
    K, J, _ = xa.shape
    for i in range(K):
        if not pa[i]:
            continue
        for j in range(K):
            if not pb[j]:
                continue
            tot = 0.0
            cnt = 0.0
            for q in range(J):
                ua, va = xa[i, q, 0], xa[i, q, 1]
                ub, vb = xb[j, q, 0], xb[j, q, 1]
                l0 = F[0, 0] * ua + F[0, 1] * va + F[0, 2]
                l1 = F[1, 0] * ua + F[1, 1] * va + F[1, 2]
                l2 = F[2, 0] * ua + F[2, 1] * va + F[2, 2]
                m0 = F[0, 0] * ub + F[1, 0] * vb + F[2, 0]
                m1 = F[0, 1] * ub + F[1, 1] * vb + F[2, 1]
                nb = np.sqrt(l0 * l0 + l1 * l1)
                na = np.sqrt(m0 * m0 + m1 * m1)
                if nb > _EPS_LINE and na > _EPS_LINE:
                    tot += 0.5 * abs(l0 * ub + l1 * vb + l2) * (1.0 / nb + 1.0 / na)
                    cnt += 1.0
            S[i, j] = tot
            C[i, j] = cnt


@njit(cache=True)
def associate_slot(uv, visible, Fs, keys, selected, threshold):
    """Greedy association of one slot's detections among the ``selected`` cameras.

    uv (N, K, J, 2) and visible (N, K) hold every camera's detections and
    Fs (N, N, 3, 3) the fundamental matrices. Returns the number of
    reporting cameras and a (n_candidates, 1 + N) table: the first column is
    the member count, then per camera the pose label or -1. Only candidates
    with at least two members are kept.
    """
    N, K = visible.shape
    views = np.empty(N, dtype=np.int64)
    V = 0
    for n in np.argsort(keys, kind="mergesort"):
        if selected[n]:
            for j in range(K):
                if visible[n, j]:
                    views[V] = n
                    V += 1
                    break
    out = np.full((N * K, 1 + N), -1, dtype=np.int64)
    if V < 2:
        return V, out[:0]
    S = np.zeros((V, V, K, K))
    C = np.zeros((V, V, K, K))
    present = np.zeros((V, K), dtype=np.bool_)
    vkeys = np.empty(V, dtype=np.int64)
    for a in range(V):
        vkeys[a] = keys[views[a]]
        for j in range(K):
            present[a, j] = visible[views[a], j]
    for a in range(V):
        for b in range(a + 1, V):
            x, y = views[a], views[b]
            _pair_sums(Fs[x, y], uv[x], visible[x], uv[y], visible[y], S[a, b], C[a, b])
            for i in range(K):
                for j in range(K):
                    S[b, a, j, i] = S[a, b, i, j]
                    C[b, a, j, i] = C[a, b, i, j]
    groups = greedy_associate(S, C, vkeys, present, threshold)
    n_out = 0
    for g in range(groups.shape[0]):
        size = 0
        for a in range(V):
            if groups[g, a] >= 0:
                size += 1
        if size < 2:
            continue
        out[n_out, 0] = size
        for a in range(V):
            out[n_out, 1 + views[a]] = groups[g, a]
        n_out += 1
    return V, out[:n_out]
