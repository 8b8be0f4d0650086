# Numba kernels for level-wise exact split search on presorted features.
#
# One grower serves both random-forest and boosting trees: a node's score is
# the second-order gain 0.5*[GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)] - gamma
# and its value is -G/(H+lam). With g = -y, h = 1, lam = gamma = 0 the gain is
# half the variance reduction and the value is the node mean.
import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@numba.njit(cache=True)
def _splitmix(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _randbelow(state, m):
    return np.int64(_splitmix(state) % np.uint64(m))


@numba.njit(cache=True)
def grow_tree(X, sorted_idx, sorted_vals, g, h, in_sample, pool, mtry, max_depth,
              min_child, lam, gamma, seed):
    n, p = X.shape
    n_in = 0
    for r in range(n):
        if in_sample[r]:
            n_in += 1
    cap = 2 * max(n_in, 1) + 1
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    node_g = np.zeros(cap)
    node_h = np.zeros(cap)
    slot_of = np.full(cap, -1, dtype=np.int64)

    node_of = np.full(n, -1, dtype=np.int64)
    for r in range(n):
        if in_sample[r]:
            node_of[r] = 0
            node_g[0] += g[r]
            node_h[0] += h[r]
    value[0] = -node_g[0] / (node_h[0] + lam)
    n_nodes = 1

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    npool = pool.shape[0]
    scratch = np.empty(npool, dtype=np.int64)

    # working copy of the presorted lists, compacted as rows retire
    cur_idx = sorted_idx.copy()
    cur_val = sorted_vals.copy()
    L = n

    open_nodes = np.zeros(1, dtype=np.int64)
    depth = 0
    n_active = n_in
    while open_nodes.shape[0] > 0:
        m = open_nodes.shape[0]
        if 2 * n_active < L:
            for f in range(p):
                w = 0
                for i in range(L):
                    r = cur_idx[f, i]
                    if node_of[r] >= 0:
                        cur_idx[f, w] = r
                        cur_val[f, w] = cur_val[f, i]
                        w += 1
            L = n_active
        for s in range(m):
            slot_of[open_nodes[s]] = s

        best_gain = np.zeros(m)
        best_feat = np.full(m, -1, dtype=np.int64)
        best_thr = np.zeros(m)
        can_split = max_depth < 0 or depth < max_depth
        if can_split:
            allowed = np.zeros((m, p), dtype=np.bool_)
            used = np.zeros(p, dtype=np.bool_)
            for s in range(m):
                for t in range(npool):
                    scratch[t] = pool[t]
                take = min(mtry, npool)
                for t in range(take):
                    u = t + _randbelow(state, npool - t)
                    tmp = scratch[t]
                    scratch[t] = scratch[u]
                    scratch[u] = tmp
                    allowed[s, scratch[t]] = True
                    used[scratch[t]] = True
            GL = np.zeros(m)
            HL = np.zeros(m)
            last = np.zeros(m)
            seen = np.zeros(m, dtype=np.bool_)
            for f in range(p):
                if not used[f]:
                    continue
                GL[:] = 0.0
                HL[:] = 0.0
                seen[:] = False
                for i in range(L):
                    r = cur_idx[f, i]
                    j = node_of[r]
                    if j < 0:
                        continue
                    s = slot_of[j]
                    if not allowed[s, f]:
                        continue
                    v = cur_val[f, i]
                    if seen[s] and v > last[s]:
                        hl = HL[s]
                        hr = node_h[j] - hl
                        if hl >= min_child and hr >= min_child:
                            gl = GL[s]
                            gr = node_g[j] - gl
                            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                                          - node_g[j] * node_g[j] / (node_h[j] + lam)) - gamma
                            if gain > best_gain[s]:
                                best_gain[s] = gain
                                best_feat[s] = f
                                t_mid = 0.5 * (last[s] + v)
                                if t_mid <= last[s]:
                                    t_mid = v
                                best_thr[s] = t_mid
                    GL[s] += g[r]
                    HL[s] += h[r]
                    last[s] = v
                    seen[s] = True

        n_split = 0
        for s in range(m):
            if best_feat[s] >= 0:
                n_split += 1
        new_open = np.empty(2 * n_split, dtype=np.int64)
        w = 0
        for s in range(m):
            j = open_nodes[s]
            if best_feat[s] >= 0:
                feat[j] = best_feat[s]
                thr[j] = best_thr[s]
                left[j] = n_nodes
                right[j] = n_nodes + 1
                new_open[w] = n_nodes
                new_open[w + 1] = n_nodes + 1
                w += 2
                n_nodes += 2
        n_active = 0
        for r in range(n):
            j = node_of[r]
            if j < 0:
                continue
            s = slot_of[j]
            f = best_feat[s]
            if f < 0:
                node_of[r] = -1
                continue
            c = left[j] if X[r, f] < thr[j] else right[j]
            node_of[r] = c
            node_g[c] += g[r]
            node_h[c] += h[r]
            n_active += 1
        for t in range(new_open.shape[0]):
            c = new_open[t]
            value[c] = -node_g[c] / (node_h[c] + lam)
        for s in range(m):
            slot_of[open_nodes[s]] = -1
        open_nodes = new_open
        depth += 1

    return (feat[:n_nodes].copy(), thr[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), node_h[:n_nodes].copy())


@numba.njit(cache=True)
def predict_tree(X, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        j = 0
        while feat[j] >= 0:
            if X[i, feat[j]] < thr[j]:
                j = left[j]
            else:
                j = right[j]
        out[i] = value[j]
    return out
