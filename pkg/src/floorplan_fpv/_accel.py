"""Hot kernels with a numba path and a pure-numpy fallback.

Set ``FPV_DISABLE_NUMBA=1`` before import to force the numpy path (also used
automatically when numba is not importable).
"""

import os

import numpy as np

_DISABLED = os.environ.get("FPV_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:
    USE_NUMBA = False


def _speed_up(func):
    """Compile with numba when enabled, otherwise return the python function."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


# ---------------------------------------------------------------------------
# scatter / segment reductions used by message passing
# ---------------------------------------------------------------------------


def _scatter_add_rows_loop(values, index, n_out):
    out = np.zeros((n_out, values.shape[1]), dtype=values.dtype)
    for e in range(values.shape[0]):
        r = index[e]
        for j in range(values.shape[1]):
            out[r, j] += values[e, j]
    return out


def _scatter_add_vec_loop(values, index, n_out):
    out = np.zeros(n_out, dtype=values.dtype)
    for e in range(values.shape[0]):
        out[index[e]] += values[e]
    return out


def _scatter_add_rows_numpy(values, index, n_out):
    out = np.zeros((n_out, values.shape[1]), dtype=values.dtype)
    np.add.at(out, index, values)
    return out


def _scatter_add_vec_numpy(values, index, n_out):
    return np.bincount(index, weights=values, minlength=n_out).astype(values.dtype, copy=False)


if USE_NUMBA:
    _scatter_add_rows_jit = _speed_up(_scatter_add_rows_loop)
    _scatter_add_vec_jit = _speed_up(_scatter_add_vec_loop)


def scatter_add(values: np.ndarray, index: np.ndarray, n_out: int) -> np.ndarray:
    """Sum ``values[e]`` into row ``index[e]`` of an ``n_out``-row result.

    Works for 1-D and 2-D ``values``; reduction order is the edge order, so the
    result is deterministic on both paths.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    index = np.ascontiguousarray(index, dtype=np.int64)
    if values.ndim == 1:
        if USE_NUMBA:
            return _scatter_add_vec_jit(values, index, n_out)
        return _scatter_add_vec_numpy(values, index, n_out)
    if USE_NUMBA:
        return _scatter_add_rows_jit(values, index, n_out)
    return _scatter_add_rows_numpy(values, index, n_out)


# ---------------------------------------------------------------------------
# fused edge kernels for the two convolutions
# ---------------------------------------------------------------------------


def _weighted_aggregate_loop(h, norm, src, dst, n_out):
    out = np.zeros((n_out, h.shape[1]))
    for e in range(src.shape[0]):
        i = dst[e]
        j = src[e]
        w = norm[e]
        for c in range(h.shape[1]):
            out[i, c] += w * h[j, c]
    return out


def _weighted_aggregate_back_loop(g, h, norm, src, dst):
    dh = np.zeros(h.shape)
    dnorm = np.zeros(src.shape[0])
    for e in range(src.shape[0]):
        i = dst[e]
        j = src[e]
        w = norm[e]
        acc = 0.0
        for c in range(h.shape[1]):
            dh[j, c] += w * g[i, c]
            acc += g[i, c] * h[j, c]
        dnorm[e] = acc
    return dh, dnorm


def _weighted_aggregate_numpy(h, norm, src, dst, n_out):
    return _scatter_add_rows_numpy(h[src] * norm[:, None], dst, n_out)


def _weighted_aggregate_back_numpy(g, h, norm, src, dst):
    gi = g[dst]
    dh = _scatter_add_rows_numpy(gi * norm[:, None], src, h.shape[0])
    return dh, np.einsum("ec,ec->e", gi, h[src])


def _sig(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    ez = np.exp(z)
    return ez / (1.0 + ez)


def _gated_aggregate_loop(proj, src, dst, n_out):
    # proj columns: [value | key | query], each of width d; gates are kept for backward
    d = proj.shape[1] // 3
    out = np.zeros((n_out, d))
    gate = np.empty((src.shape[0], d))
    for e in range(src.shape[0]):
        i = dst[e]
        j = src[e]
        for c in range(d):
            s = _sig(proj[i, d + c] + proj[j, 2 * d + c])
            gate[e, c] = s
            out[i, c] += s * proj[j, c]
    return out, gate


def _gated_aggregate_back_loop(g, proj, gate, src, dst):
    d = proj.shape[1] // 3
    dproj = np.zeros(proj.shape)
    for e in range(src.shape[0]):
        i = dst[e]
        j = src[e]
        for c in range(d):
            s = gate[e, c]
            gi = g[i, c]
            dproj[j, c] += gi * s
            dz = gi * proj[j, c] * s * (1.0 - s)
            dproj[i, d + c] += dz
            dproj[j, 2 * d + c] += dz
    return dproj


def _expit(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _gated_aggregate_numpy(proj, src, dst, n_out):
    d = proj.shape[1] // 3
    s = _expit(proj[dst, d : 2 * d] + proj[src, 2 * d :])
    return _scatter_add_rows_numpy(s * proj[src, :d], dst, n_out), s


def _gated_aggregate_back_numpy(g, proj, s, src, dst):
    d = proj.shape[1] // 3
    n = proj.shape[0]
    gi = g[dst]
    v = proj[src, :d]
    dz = gi * v * s * (1.0 - s)
    dproj = np.zeros(proj.shape)
    dproj[:, :d] = _scatter_add_rows_numpy(gi * s, src, n)
    dproj[:, d : 2 * d] = _scatter_add_rows_numpy(dz, dst, n)
    dproj[:, 2 * d :] = _scatter_add_rows_numpy(dz, src, n)
    return dproj


if USE_NUMBA:
    _sig = _speed_up(_sig)
    _weighted_aggregate_jit = _speed_up(_weighted_aggregate_loop)
    _weighted_aggregate_back_jit = _speed_up(_weighted_aggregate_back_loop)
    _gated_aggregate_jit = _speed_up(_gated_aggregate_loop)
    _gated_aggregate_back_jit = _speed_up(_gated_aggregate_back_loop)


def _prep(*arrays):
    return [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]


def _prep_idx(*arrays):
    return [np.ascontiguousarray(a, dtype=np.int64) for a in arrays]


def weighted_aggregate(h, norm, src, dst, n_out):
    """``out[dst[e]] += norm[e] * h[src[e]]``."""
    h, norm = _prep(h, norm)
    src, dst = _prep_idx(src, dst)
    if USE_NUMBA:
        return _weighted_aggregate_jit(h, norm, src, dst, n_out)
    return _weighted_aggregate_numpy(h, norm, src, dst, n_out)


def weighted_aggregate_backward(g, h, norm, src, dst):
    g, h, norm = _prep(g, h, norm)
    src, dst = _prep_idx(src, dst)
    if USE_NUMBA:
        return _weighted_aggregate_back_jit(g, h, norm, src, dst)
    return _weighted_aggregate_back_numpy(g, h, norm, src, dst)


def gated_aggregate(proj, src, dst, n_out):
    """``out[i] += sigmoid(key[i] + query[j]) * value[j]`` over edges ``j -> i``.

    Returns ``(out, gate)``; the per-edge gates feed the backward kernel.
    """
    (proj,) = _prep(proj)
    src, dst = _prep_idx(src, dst)
    if USE_NUMBA:
        return _gated_aggregate_jit(proj, src, dst, n_out)
    return _gated_aggregate_numpy(proj, src, dst, n_out)


def gated_aggregate_backward(g, proj, gate, src, dst):
    g, proj, gate = _prep(g, proj, gate)
    src, dst = _prep_idx(src, dst)
    if USE_NUMBA:
        return _gated_aggregate_back_jit(g, proj, gate, src, dst)
    return _gated_aggregate_back_numpy(g, proj, gate, src, dst)


# ---------------------------------------------------------------------------
# breadth-first distances on CSR adjacency
# ---------------------------------------------------------------------------


def _bfs_all_pairs_loop(indptr, indices, n):
    dist = np.full((n, n), -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[s, s] = 0
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            for p in range(indptr[u], indptr[u + 1]):
                v = indices[p]
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    queue[tail] = v
                    tail += 1
    return dist


def _bfs_all_pairs_numpy(indptr, indices, n):
    # frontier expansion with a dense boolean adjacency; fine for plan-sized graphs
    adj = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    adj[rows, indices] = True
    dist = np.full((n, n), -1, dtype=np.int64)
    reached = np.eye(n, dtype=bool)
    frontier = reached.copy()
    np.fill_diagonal(dist, 0)
    level = 0
    while frontier.any():
        level += 1
        nxt = (frontier.astype(np.int64) @ adj.astype(np.int64)) > 0
        nxt &= ~reached
        dist[nxt] = level
        reached |= nxt
        frontier = nxt
    return dist


if USE_NUMBA:
    _bfs_all_pairs_jit = _speed_up(_bfs_all_pairs_loop)


def bfs_all_pairs(indptr: np.ndarray, indices: np.ndarray, n: int) -> np.ndarray:
    """Unweighted shortest-path lengths; unreachable pairs are -1."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if USE_NUMBA:
        return _bfs_all_pairs_jit(indptr, indices, n)
    return _bfs_all_pairs_numpy(indptr, indices, n)


def tune_allocator(threshold: int = 256 * 1024 * 1024) -> bool:
    """Keep large temporaries on the glibc heap instead of fresh mmaps.

    Message passing allocates many short-lived arrays of a few MB; serving
    them from the heap avoids repeated page faults. No-op off glibc.
    """
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6")
        M_TRIM_THRESHOLD, M_MMAP_THRESHOLD = -1, -3
        ok = libc.mallopt(M_MMAP_THRESHOLD, threshold) == 1
        ok &= libc.mallopt(M_TRIM_THRESHOLD, 2 * threshold) == 1
        return bool(ok)
    except (OSError, AttributeError):
        return False


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
