"""Planar spatial primitives: distances, k-nearest neighbours, MST scale, k-means anchors.

Coordinates are projected kilometres, stored as ``(n, 2)`` float arrays.
Every neighbour query breaks distance ties by ascending point index so that
results do not depend on the kd-tree traversal order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree

from .errors import CapacityError, InvalidInputError

BRUTE_FORCE_BELOW = 64
DENSE_MST_CAP = 10_000
MST_GRAPH_K = 16


def as_coords(points, name="points", allow_empty=False) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not allow_empty and arr.shape[0] == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _dist(dx, dy):
    return np.sqrt(dx * dx + dy * dy)


def pairwise_distance(a, b) -> float:
    """Euclidean distance in km between two points.

    Computed as sqrt(dx*dx + dy*dy) to agree bit-for-bit with the kd-tree, so
    separations below about 1e-154 km underflow to 0.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != (2,) or b.shape != (2,):
        raise InvalidInputError("points must be (x, y) pairs")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("non-finite coordinate")
    return float(_dist(a[0] - b[0], a[1] - b[1]))


def distance_matrix(a, b=None) -> np.ndarray:
    a = as_coords(a, "a")
    b = a if b is None else as_coords(b, "b")
    return _dist(a[:, 0:1] - b[None, :, 0], a[:, 1:2] - b[None, :, 1])


@dataclass(frozen=True)
class NeighborGraph:
    """Per-query neighbour rows; ``indices[i]``/``distances[i]`` are ascending by distance."""

    k: int
    indices: np.ndarray
    distances: np.ndarray


def _sorted_rows(dist: np.ndarray, idx: np.ndarray, k: int):
    # lexicographic (distance, index) ordering per row
    order = np.lexsort((idx, dist), axis=-1)
    idx = np.take_along_axis(idx, order, axis=1)[:, :k]
    dist = np.take_along_axis(dist, order, axis=1)[:, :k]
    return idx, dist


class KNNIndex:
    """k-nearest-neighbour index over a fixed point set.

    Uses a kd-tree for candidate generation and recomputes exact distances so
    ties are resolved by index. Sets below ``BRUTE_FORCE_BELOW`` points are
    searched exhaustively.
    """

    def __init__(self, points):
        self.points = as_coords(points)
        self.n = self.points.shape[0]
        self._tree = cKDTree(self.points) if self.n >= BRUTE_FORCE_BELOW else None

    def query(self, queries, k: int, exclude=None) -> NeighborGraph:
        """k nearest points for each query row.

        ``exclude`` is an optional per-query index (or -1) that must not be
        returned, used to drop a training row from its own neighbour list.
        """
        queries = as_coords(queries, "queries", allow_empty=True)
        m = queries.shape[0]
        k = int(k)
        eligible = self.n - (0 if exclude is None else 1)
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        if k > eligible:
            raise CapacityError(f"k={k} exceeds the {eligible} eligible points")
        if exclude is None:
            exclude = np.full(m, -1, dtype=np.int64)
        else:
            exclude = np.asarray(exclude, dtype=np.int64).reshape(-1)
            if exclude.shape[0] != m:
                raise InvalidInputError("exclude must have one entry per query")
        out_idx = np.empty((m, k), dtype=np.int64)
        out_dist = np.empty((m, k))
        if m == 0:
            return NeighborGraph(k, out_idx, out_dist)
        if self._tree is None:
            self._brute(queries, k, exclude, np.arange(m), out_idx, out_dist)
        else:
            self._tree_query(queries, k, exclude, out_idx, out_dist)
        return NeighborGraph(k, out_idx, out_dist)

    def _brute(self, queries, k, exclude, rows, out_idx, out_dist, chunk=2048):
        for start in range(0, rows.size, chunk):
            r = rows[start:start + chunk]
            q = queries[r]
            d = _dist(q[:, 0:1] - self.points[None, :, 0], q[:, 1:2] - self.points[None, :, 1])
            ex = exclude[r]
            has = ex >= 0
            d[np.nonzero(has)[0], ex[has]] = np.inf
            idx = np.broadcast_to(np.arange(self.n), d.shape)
            i, dd = _sorted_rows(d, idx, k)
            out_idx[r] = i
            out_dist[r] = dd

    def _tree_query(self, queries, k, exclude, out_idx, out_dist):
        pending = np.arange(queries.shape[0])
        kk = min(self.n, 2 * k + 2)
        while pending.size:
            if kk >= self.n:
                self._brute(queries, k, exclude, pending, out_idx, out_dist)
                return
            tree_d, cand = self._tree.query(queries[pending], k=kk)
            q = queries[pending]
            d = _dist(self.points[cand, 0] - q[:, 0:1], self.points[cand, 1] - q[:, 1:2])
            d[cand == exclude[pending][:, None]] = np.inf
            idx, dd = _sorted_rows(d, cand, k)
            # complete when every unseen point is strictly farther than the k-th kept one
            reach = tree_d[:, -1]
            ok = reach > dd[:, -1] * (1.0 + 1e-12) + 1e-300
            out_idx[pending[ok]] = idx[ok]
            out_dist[pending[ok]] = dd[ok]
            pending = pending[~ok]
            kk = min(self.n, 2 * kk)


def knn(points, query, k: int, exclude_self: bool = False, self_index: int | None = None) -> NeighborGraph:
    """k nearest neighbours of a single query point.

    With ``exclude_self`` the point at ``self_index`` is skipped; when no index
    is given, the lowest-index point coinciding with the query is taken as self.
    """
    index = points if isinstance(points, KNNIndex) else KNNIndex(points)
    q = as_coords(query, "query")
    if q.shape[0] != 1:
        raise InvalidInputError("knn takes one query point; use KNNIndex.query for batches")
    exclude = None
    if exclude_self:
        if self_index is None:
            same = np.nonzero((index.points[:, 0] == q[0, 0]) & (index.points[:, 1] == q[0, 1]))[0]
            self_index = int(same[0]) if same.size else -1
        exclude = np.array([self_index])
        if self_index < 0:
            exclude = None
    return index.query(q, k, exclude=exclude)


def self_knn(points, k: int) -> NeighborGraph:
    """k nearest neighbours of every point among the others (own index excluded)."""
    index = points if isinstance(points, KNNIndex) else KNNIndex(points)
    return index.query(index.points, k, exclude=np.arange(index.n))


def prefix_knn(points, k: int):
    """For each row i, the k nearest rows among rows 0..i-1 (fewer when i <= k).

    Returns a list of index arrays (ascending distance, ties by lower row) and
    the matching distance arrays. Row 0 gets an empty set.
    """
    pts = as_coords(points)
    n = pts.shape[0]
    k = int(k)
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    nbr = [np.empty(0, dtype=np.int64)] * n
    dst = [np.empty(0)] * n
    head = min(n, max(4 * k + 2, BRUTE_FORCE_BELOW))
    for i in range(1, head):
        d = _dist(pts[:i, 0] - pts[i, 0], pts[:i, 1] - pts[i, 1])
        order = np.lexsort((np.arange(i), d))[:k]
        nbr[i] = order.astype(np.int64)
        dst[i] = d[order]
    if head >= n:
        return nbr, dst
    tree = cKDTree(pts)
    pending = np.arange(head, n)
    kk = min(n, 4 * k + 2)
    while pending.size:
        if kk >= n:
            for i in pending:
                d = _dist(pts[:i, 0] - pts[i, 0], pts[:i, 1] - pts[i, 1])
                order = np.lexsort((np.arange(i), d))[:k]
                nbr[i] = order.astype(np.int64)
                dst[i] = d[order]
            break
        tree_d, cand = tree.query(pts[pending], k=kk)
        q = pts[pending]
        d = _dist(pts[cand, 0] - q[:, 0:1], pts[cand, 1] - q[:, 1:2])
        d[cand >= pending[:, None]] = np.inf
        idx, dd = _sorted_rows(d, cand, k)
        ok = np.isfinite(dd[:, -1]) & (tree_d[:, -1] > dd[:, -1] * (1.0 + 1e-12) + 1e-300)
        for r in np.nonzero(ok)[0]:
            i = pending[r]
            nbr[i] = idx[r].astype(np.int64)
            dst[i] = dd[r]
        pending = pending[~ok]
        kk = min(n, 2 * kk)
    return nbr, dst


@numba.njit(cache=True)
def _prim_max_edge(x, y):
    n = x.shape[0]
    in_tree = np.zeros(n, dtype=np.bool_)
    best = np.full(n, np.inf)
    best[0] = 0.0
    longest = 0.0
    for _ in range(n):
        u = -1
        bu = np.inf
        for j in range(n):
            if not in_tree[j] and best[j] < bu:
                bu = best[j]
                u = j
        in_tree[u] = True
        if bu > longest:
            longest = bu
        for j in range(n):
            if not in_tree[j]:
                dx = x[u] - x[j]
                dy = y[u] - y[j]
                d = np.sqrt(dx * dx + dy * dy)
                if d < best[j]:
                    best[j] = d
    return longest


def mst_max_edge(points) -> float:
    """Longest edge of a Euclidean minimum spanning tree over the points."""
    pts = as_coords(points)
    n = pts.shape[0]
    if n < 2:
        raise InvalidInputError("mst_max_edge needs at least 2 points")
    if n <= DENSE_MST_CAP:
        return float(_prim_max_edge(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])))
    index = KNNIndex(pts)
    k = MST_GRAPH_K
    while True:
        g = self_knn(index, min(k, n - 1))
        rows = np.repeat(np.arange(n), g.k)
        # csgraph treats explicit zeros as missing edges
        w = np.maximum(g.distances.ravel(), 1e-300)
        graph = coo_matrix((w, (rows, g.indices.ravel())), shape=(n, n)).tocsr()
        ncomp, _ = connected_components(graph, directed=False)
        if ncomp == 1 or k >= n - 1:
            break
        k *= 2
    tree = minimum_spanning_tree(graph)
    longest = float(tree.data.max()) if tree.nnz else 0.0
    return 0.0 if longest <= 1e-200 else longest


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0


def _assign(points, centers, chunk=4096):
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dmin = np.empty(n)
    for s in range(0, n, chunk):
        p = points[s:s + chunk]
        d2 = (p[:, 0:1] - centers[None, :, 0]) ** 2 + (p[:, 1:2] - centers[None, :, 1]) ** 2
        lab = np.argmin(d2, axis=1)  # first minimum -> lowest center index on ties
        labels[s:s + chunk] = lab
        dmin[s:s + chunk] = d2[np.arange(p.shape[0]), lab]
    return labels, dmin


def _kmeans_pp(points, h, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for _ in range(1, h):
        total = d2.sum()
        if total > 0:
            j = int(rng.choice(n, p=d2 / total))
        else:
            free = np.nonzero(~taken)[0]
            j = int(free[rng.integers(free.size)])
        chosen.append(j)
        taken[j] = True
        d2 = np.minimum(d2, ((points - points[j]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans(points, h: int, seed: int, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Stops at an assignment fixpoint or after ``max_iter`` updates. An empty
    cluster keeps its previous centre, which keeps the inertia non-increasing.
    """
    pts = as_coords(points)
    n = pts.shape[0]
    h = int(h)
    if h < 1:
        raise InvalidInputError("h must be >= 1")
    if h > n:
        raise CapacityError(f"h={h} exceeds the number of points n={n}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(pts, h, rng)
    labels, dmin = _assign(pts, centers)
    history = [float(dmin.sum())]
    it = 0
    for it in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=h)
        sx = np.bincount(labels, weights=pts[:, 0], minlength=h)
        sy = np.bincount(labels, weights=pts[:, 1], minlength=h)
        nz = counts > 0
        centers[nz, 0] = sx[nz] / counts[nz]
        centers[nz, 1] = sy[nz] / counts[nz]
        new_labels, dmin = _assign(pts, centers)
        history.append(float(dmin.sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return KMeansResult(centers, labels, history, it)


def kmeans_anchors(points, h: int, seed: int, max_iter: int = 100) -> np.ndarray:
    """``h`` k-means cluster centres used as Nyström anchor points."""
    return kmeans(points, h, seed, max_iter).centers
