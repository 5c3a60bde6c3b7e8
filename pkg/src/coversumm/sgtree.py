"""SG-tree: an incrementally built cover-tree-family metric index.

Layout
------
Every node stores one representative vector (a *row* of the point store) and
an integer level. Children of a node at level ``l`` live at level ``l - 1``
and satisfy

* covering: ``d(node, child) <= base**l``
* sibling separation: ``d(a, b) > base**(l - 1)`` for any two children
* nesting: a node with children lists its own point as one of them

Each node also carries ``radius``, an upper bound on the distance from its
point to any point stored below it. Queries use ``d(q, node) - radius`` as a
lower bound for the whole subtree.

Bit-identical vectors are collapsed into a single row; the row keeps the list
of point ids that share it (``multiplicity`` is that list's length).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from operator import attrgetter, is_
from typing import Iterator, List, Optional, Protocol, Tuple

import numpy as np

from .vectorspace import DimensionMismatch, Point, c_einsum

__all__ = [
    "SGTree",
    "TreeNode",
    "ReservoirResult",
    "Violation",
    "NeighborIndex",
    "EmptyIndexError",
    "check_invariants",
]

# relative slack on every pruning test; keeps float rounding from discarding
# a subtree whose lower bound ties the search radius
_PRUNE_RTOL = 1e-9
# bound on the relative error of the squared-norm expansion used to screen
# children during insertion
_SCREEN_RTOL = 1e-8


def _dists(M: np.ndarray, q: np.ndarray) -> np.ndarray:
    # same arithmetic as vectorspace.distances without the argument checks
    diff = M - q
    return np.sqrt(c_einsum("ij,ij->i", diff, diff))


def _dist(a: np.ndarray, b: np.ndarray) -> float:
    diff = (a - b)[None, :]
    return float(np.sqrt(c_einsum("ij,ij->i", diff, diff))[0])


def _slack(r: float) -> float:
    return r + _PRUNE_RTOL * (1.0 + abs(r))


# extra columns stored after the vector in ``TreeNode.cmat``
_NORM, _RAD, _ROW = 0, 1, 2
_EXTRA = 3


class EmptyIndexError(LookupError):
    """Raised by queries that need at least one stored point."""


class TreeNode:
    """One tree node.

    ``cmat`` holds one row per child: the child's vector followed by its
    squared norm, its ``radius`` and its point-store row.
    """

    __slots__ = ("row", "level", "children", "radius", "parent", "is_self", "slot", "cmat")

    def __init__(self, row: int, level: int, parent: Optional["TreeNode"] = None, is_self: bool = False):
        self.row = row
        self.level = level
        self.children: List[TreeNode] = []
        self.radius = 0.0
        self.parent = parent
        self.is_self = is_self
        self.slot = -1
        self.cmat: Optional[np.ndarray] = None

    @property
    def _dim(self) -> int:
        return self.cmat.shape[1] - _EXTRA

    def child_vectors(self) -> np.ndarray:
        return self.cmat[: len(self.children), : self._dim]

    def child_norms(self) -> np.ndarray:
        return self.cmat[: len(self.children), self._dim + _NORM]

    def child_radii(self) -> np.ndarray:
        return self.cmat[: len(self.children), self._dim + _RAD]

    def child_rows(self) -> np.ndarray:
        return self.cmat[: len(self.children), self._dim + _ROW].astype(np.intp)

    def add_child(self, child: "TreeNode", vec: np.ndarray) -> None:
        n = len(self.children)
        dim = vec.shape[0]
        if self.cmat is None:
            self.cmat = np.empty((4, dim + _EXTRA), dtype=np.float64)
        elif n == self.cmat.shape[0]:
            grown = np.empty((2 * n, dim + _EXTRA), dtype=np.float64)
            grown[:n] = self.cmat
            self.cmat = grown
        line = self.cmat[n]
        line[:dim] = vec
        line[dim + _NORM] = vec @ vec
        line[dim + _RAD] = child.radius
        line[dim + _ROW] = child.row
        child.parent = self
        child.slot = n
        self.children.append(child)

    def remove_child(self, child: "TreeNode") -> None:
        i = child.slot
        n = len(self.children)
        self.cmat[i : n - 1] = self.cmat[i + 1 : n]
        del self.children[i]
        for j in range(i, n - 1):
            self.children[j].slot = j
        child.slot = -1

    def set_radius(self, r: float) -> None:
        self.radius = r
        parent = self.parent
        if parent is not None:
            parent.cmat[self.slot, parent._dim + _RAD] = r

    def __repr__(self):
        return (
            f"TreeNode(row={self.row}, level={self.level}, n_children={len(self.children)}, radius={self.radius:.4g})"
        )


@dataclass
class ReservoirResult:
    """Output of a reservoir search.

    ``members`` holds ``(point_id, distance)`` pairs sorted by
    ``(distance, id)``; ``nearest_k`` are the ids of the k best members.
    """

    members: List[Tuple[int, float]]
    d_k: float
    nearest_k: List[int]
    visits: int = 0

    @property
    def ids(self) -> List[int]:
        return [i for i, _ in self.members]


@dataclass(frozen=True)
class Violation:
    rule: str
    node: int
    other: Optional[int] = None
    detail: str = ""


class NeighborIndex(Protocol):
    """Operations the summarizers need from an index.

    Any exact or approximate nearest-neighbour structure exposing these can
    stand in for :class:`SGTree`.
    """

    def insert(self, point: Point) -> None: ...

    def delete(self, point_id: int) -> None: ...

    def knn(self, q, k: int) -> List[int]: ...

    def range(self, q, r: float) -> List[int]: ...

    def reservoir_search(self, q, lam: float, k: int) -> ReservoirResult: ...

    def __len__(self) -> int: ...


class SGTree:
    """Incremental SG-tree over float64 vectors with integer point ids.

    Parameters
    ----------
    dim : int, optional
        Vector dimensionality; fixed by the first insert when omitted.
    base : float
        Level ratio gamma > 1.
    top_width : float, optional
        Initial estimate of the data diameter used to place the first root.
        Defaults to twice the largest absolute coordinate of the first point.
    """

    def __init__(self, dim: Optional[int] = None, base: float = 2.0, top_width: Optional[float] = None):
        if not base > 1.0:
            raise ValueError(f"base must be > 1, got {base}")
        self.base = float(base)
        self.dim = dim
        self.top_width = top_width
        self.root: Optional[TreeNode] = None
        self.size = 0
        self._X = np.empty((0, dim or 0), dtype=np.float64)
        self._n_rows = 0
        self._row_ids: List[List[int]] = []
        self._row_top: List[Optional[TreeNode]] = []
        self._row_of_id: dict = {}
        self._row_of_key: dict = {}
        self._log_base = math.log(self.base)

    # ------------------------------------------------------------------ store

    def __len__(self) -> int:
        return self.size

    def __contains__(self, point_id: int) -> bool:
        return point_id in self._row_of_id

    def ids(self) -> List[int]:
        return sorted(self._row_of_id)

    def vector(self, point_id: int) -> np.ndarray:
        return self._X[self._row_of_id[point_id]]

    def multiplicity(self, point_id: int) -> int:
        return len(self._row_ids[self._row_of_id[point_id]])

    def n_nodes(self) -> int:
        return sum(1 for _ in self._iter_nodes())

    def covering_radius(self, level: int) -> float:
        return self.base**level

    def _check_vec(self, vec) -> np.ndarray:
        vec = np.ascontiguousarray(vec, dtype=np.float64)
        if vec.ndim != 1:
            raise DimensionMismatch(f"expected a 1-d vector, got shape {vec.shape}")
        if self.dim is None:
            self.dim = vec.shape[0]
            self._X = np.empty((0, self.dim), dtype=np.float64)
        elif vec.shape[0] != self.dim:
            raise DimensionMismatch(f"expected dim {self.dim}, got {vec.shape[0]}")
        # folds -0.0 into 0.0 so equal vectors share one byte key
        return vec + 0.0

    def _new_row(self, vec: np.ndarray) -> int:
        if self._n_rows == self._X.shape[0]:
            grown = np.empty((max(16, 2 * self._X.shape[0]), self.dim), dtype=np.float64)
            grown[: self._n_rows] = self._X[: self._n_rows]
            self._X = grown
        row = self._n_rows
        self._X[row] = vec
        self._n_rows += 1
        self._row_ids.append([])
        self._row_top.append(None)
        return row

    # ----------------------------------------------------------------- insert

    def insert(self, point: Point) -> None:
        self.insert_vector(point.id, point.vec)

    def insert_vector(self, point_id: int, vec) -> None:
        vec = self._check_vec(vec)
        if point_id in self._row_of_id:
            raise KeyError(f"point id {point_id} is already stored")
        key = vec.tobytes()
        row = self._row_of_key.get(key)
        if row is not None:
            ids = self._row_ids[row]
            ids.append(point_id)
            ids.sort()
        else:
            row = self._new_row(vec)
            self._row_of_key[key] = row
            self._row_ids[row].append(point_id)
            self._insert_row(row)
        self._row_of_id[point_id] = row
        self.size += 1

    def _initial_level(self, vec: np.ndarray) -> int:
        width = self.top_width if self.top_width is not None else 2.0 * float(np.max(np.abs(vec)))
        if not width > 0:
            return 0
        return math.ceil(math.log(width) / self._log_base)

    def _insert_row(self, row: int) -> None:
        X = self._X
        p = X[row]
        if self.root is None:
            self.root = TreeNode(row, self._initial_level(p))
            self._row_top[row] = self.root
            return
        d = _dist(X[self.root.row], p)
        while d > self.base**self.root.level:
            old = self.root
            new = TreeNode(old.row, old.level + 1)
            new.radius = old.radius
            old.is_self = True
            new.add_child(old, X[old.row])
            self.root = new
            self._row_top[old.row] = new
        node = self.root
        pp = float(p @ p)
        while True:
            if d > node.radius:
                node.set_radius(d)
            child_level = node.level - 1
            cover = self.base**child_level
            if node.children:
                M = node.child_vectors()
                cn = node.child_norms()
                # screen with |c|^2 - 2 c.p + |p|^2, then decide on exact distances
                approx = cn - 2.0 * (M @ p) + pp
                near = np.flatnonzero(approx <= cover * cover + _SCREEN_RTOL * (cn + pp + cover * cover))
                if near.size:
                    ds = _dists(M[near], p)
                    j = int(np.argmin(ds))
                    if ds[j] <= cover:
                        node = node.children[int(near[j])]
                        d = float(ds[j])
                        continue
                leaf = TreeNode(row, child_level)
                node.add_child(leaf, p)
                self._row_top[row] = leaf
                return
            if d == 0.0:
                raise ValueError("distinct vectors at distance 0.0 cannot be separated")
            # leaf: grow the implicit self-chain one level
            own = TreeNode(node.row, child_level, is_self=True)
            node.add_child(own, X[node.row])
            if d > cover:
                leaf = TreeNode(row, child_level)
                node.add_child(leaf, p)
                self._row_top[row] = leaf
                return
            node = own

    # ----------------------------------------------------------------- delete

    def delete(self, point_id: int) -> None:
        try:
            row = self._row_of_id.pop(point_id)
        except KeyError:
            raise KeyError(f"point id {point_id} is not stored") from None
        self.size -= 1
        ids = self._row_ids[row]
        ids.remove(point_id)
        if ids:
            return
        del self._row_of_key[self._X[row].tobytes()]
        top = self._row_top[row]
        self._row_top[row] = None
        if top is self.root:
            survivors = [r for r in self._rows_top_down(self.root) if r != row]
            self.root = None
            for r in survivors:
                self._row_top[r] = None
                self._insert_row(r)
            return
        parent = top.parent
        parent.remove_child(top)
        orphans = [r for r in self._rows_top_down(top) if r != row]
        if len(parent.children) == 1 and parent.children[0].is_self and not parent.children[0].children:
            parent.children = []
        for r in orphans:
            self._row_top[r] = None
        for r in orphans:
            self._insert_row(r)

    def _rows_top_down(self, start: TreeNode) -> List[int]:
        seen = set()
        out = []
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node.row not in seen:
                seen.add(node.row)
                out.append(node.row)
            queue.extend(node.children)
        return out

    # ---------------------------------------------------------------- queries

    def _vec(self, q) -> np.ndarray:
        q = np.ascontiguousarray(q, dtype=np.float64)
        if self.dim is not None and q.shape != (self.dim,):
            raise DimensionMismatch(f"expected a query of dim {self.dim}, got shape {q.shape}")
        return q

    def _root_distance(self, q: np.ndarray) -> float:
        return _dist(self._X[self.root.row], q)

    def knn(self, q, k: int, prune: bool = True) -> List[int]:
        return [i for i, _ in self.knn_with_distances(q, k, prune=prune)]

    def knn_with_distances(self, q, k: int, prune: bool = True) -> List[Tuple[int, float]]:
        """The ``min(k, len(self))`` nearest ids, ascending by ``(distance, id)``."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if self.root is None:
            return []
        d, rows = self._sweep(self._vec(q), k, 0.0, prune)
        return self._expand(d, rows)[:k]

    def range(self, q, r: float, prune: bool = True) -> List[int]:
        return [i for i, _ in self.range_with_distances(q, r, prune=prune)]

    def range_with_distances(self, q, r: float, prune: bool = True) -> List[Tuple[int, float]]:
        """All ids within ``r`` of ``q``, ascending by ``(distance, id)``."""
        if r < 0:
            raise ValueError(f"radius must be non-negative, got {r}")
        if self.root is None:
            return []
        d, rows = self._sweep(self._vec(q), None, r, prune)
        return [(pid, dist) for pid, dist in self._expand(d, rows) if dist <= r]

    def reservoir_search(self, q, lam: float, k: int, prune: bool = True) -> ReservoirResult:
        """One traversal returning every point within ``d_k + lam`` of ``q``.

        The running k-th distance only shrinks as the traversal proceeds, so
        the radius used for pruning always contains the final one.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if lam < 0:
            raise ValueError(f"lambda must be non-negative, got {lam}")
        if self.root is None:
            raise EmptyIndexError("reservoir search on an empty tree")
        d, rows = self._sweep(self._vec(q), k, lam, prune)
        found = self._expand(d, rows)
        d_k = found[min(k, len(found)) - 1][1]
        cutoff = d_k + lam
        members = [m for m in found if m[1] <= cutoff]
        return ReservoirResult(
            members=members, d_k=d_k, nearest_k=[pid for pid, _ in members[:k]], visits=self.last_visits
        )

    def _sweep(self, q: np.ndarray, k: Optional[int], extra: float, prune: bool):
        """Level-by-level traversal collecting rows within the search radius.

        The radius is ``extra`` when ``k`` is None (a range query) and
        ``d_k + extra`` otherwise, with ``d_k`` the running k-th smallest
        distance over rows seen so far. Children of one frontier share a
        level, so no row appears twice in a round and every child that is
        not a self-copy is a newly seen point. Returns the distances and rows
        of every collected row; the caller applies the final cutoff.
        """
        root = self.root
        cd = np.array([_dist(self._X[root.row], q)])
        cr = np.array([root.row], dtype=np.intp)
        frontier = [root] if root.children else []
        visits = 1
        radius = extra if k is None else math.inf
        while frontier:
            counts = np.empty(len(frontier), dtype=np.intp)
            blocks = []
            for i, n in enumerate(frontier):
                c = len(n.children)
                counts[i] = c
                blocks.append(n.cmat[:c])
            B = np.concatenate(blocks)
            dim = B.shape[1] - _EXTRA
            rad = B[:, dim + _RAD]
            rows = B[:, dim + _ROW].astype(np.intp)
            owner = np.repeat(np.fromiter((n.row for n in frontier), dtype=np.intp, count=len(frontier)), counts)
            ds = _dists(B[:, :dim], q)
            visits += len(ds)
            fresh = rows != owner
            cd = np.concatenate([cd, ds[fresh]])
            cr = np.concatenate([cr, rows[fresh]])
            if k is not None and len(cd) >= k:
                # rows are distinct points, so the k-th smallest row distance
                # bounds the final d_k from above
                radius = float(np.partition(cd, k - 1)[k - 1]) + extra
            if math.isfinite(radius):
                inside = cd <= _slack(radius)
                cd, cr = cd[inside], cr[inside]
            if prune:
                nxt = np.flatnonzero((rad > 0.0) & (ds - rad <= _slack(radius)))
            else:
                nxt = np.flatnonzero(rad > 0.0)
            starts = np.cumsum(counts) - counts
            owner_pos = np.searchsorted(starts, nxt, side="right") - 1
            offset = (nxt - starts[owner_pos]).tolist()
            frontier = [frontier[a].children[j] for a, j in zip(owner_pos.tolist(), offset)]
            frontier = [n for n in frontier if n.children]
        self.last_visits = visits
        return cd, cr

    def _expand(self, d: np.ndarray, rows: np.ndarray) -> List[Tuple[int, float]]:
        """``(id, distance)`` for every id stored on ``rows``, sorted by ``(distance, id)``."""
        row_ids = self._row_ids
        out = [(dist, pid) for dist, r in zip(d.tolist(), rows.tolist()) for pid in row_ids[r]]
        out.sort()
        return [(pid, dist) for dist, pid in out]

    # ------------------------------------------------------------- structure

    def _iter_nodes(self) -> Iterator[TreeNode]:
        if self.root is None:
            return
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)

    def check_invariants(self) -> List[Violation]:
        return check_invariants(self)


def _level_order(root: TreeNode):
    """Nodes breadth first, so each node's children are contiguous and in
    sibling order, with each node's parent index (-1 at the root) and its
    position among its siblings."""
    nodes: List[TreeNode] = [root]
    parent: List[int] = [-1]
    pos: List[int] = [0]
    # the loop also visits the nodes appended while it runs
    for i, node in enumerate(nodes):
        kids = node.children
        if kids:
            nodes.extend(kids)
            parent.extend([i] * len(kids))
            pos.extend(range(len(kids)))
    return nodes, np.array(parent, dtype=np.intp), np.array(pos, dtype=np.intp)


def _is_below(parent: np.ndarray, j: int) -> np.ndarray:
    """Mask of the strict descendants of node ``j`` in a breadth-first layout."""
    mask = np.zeros(len(parent), dtype=bool)
    for i in range(j + 1, len(parent)):
        p = parent[i]
        mask[i] = p == j or (p > j and mask[p])
    return mask


def _pair_dists(X: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # row i is bit-identical to distance(X[a[i]], X[b[i]]) as computed on insert
    diff = X[a] - X[b]
    return np.sqrt(c_einsum("ij,ij->i", diff, diff))


def check_invariants(tree: SGTree) -> List[Violation]:
    """List every structural violation; an empty list means the tree is sound.

    Checks levels, covering, sibling separation, nesting, parent pointers,
    the cached child data, radius soundness (against the true farthest
    descendant) and its geometric bound, multiplicities and the size count.
    """
    out: List[Violation] = []
    if tree.root is None:
        if tree.size:
            out.append(Violation("size", -1, detail=f"empty tree reports size {tree.size}"))
        return out
    X = tree._X
    base = tree.base
    nodes, parent, pos = _level_order(tree.root)
    m = len(nodes)
    rows = np.fromiter(map(attrgetter("row"), nodes), dtype=np.intp, count=m)
    levels = np.fromiter(map(attrgetter("level"), nodes), dtype=np.int64, count=m)
    slots = np.fromiter(map(attrgetter("slot"), nodes), dtype=np.intp, count=m)
    radii = np.fromiter(map(attrgetter("radius"), nodes), dtype=np.float64, count=m)
    linked = np.fromiter(
        map(is_, map(attrgetter("parent"), nodes[1:]), map(nodes.__getitem__, parent[1:].tolist())),
        dtype=bool,
        count=m - 1,
    )
    fan = np.bincount(parent[1:], minlength=m)

    buckets = list(map(tree._row_ids.__getitem__, np.unique(rows).tolist()))
    sizes = np.fromiter(map(len, buckets), dtype=np.intp, count=len(buckets))
    stored = int(sizes.sum())
    for j in np.flatnonzero(sizes == 0).tolist():
        out.append(Violation("multiplicity", int(np.unique(rows)[j]), detail="node without live ids"))

    # breadth-first order keeps each sibling group contiguous
    child = np.arange(1, m)
    par = parent[child]

    for j in np.flatnonzero(~linked).tolist():
        out.append(Violation("parent", int(rows[par[j]]), int(rows[child[j]]), "stale parent pointer"))
    for j in np.flatnonzero(slots[child] != pos[child]).tolist():
        c = child[j]
        out.append(Violation("cache", int(rows[par[j]]), int(rows[c]), f"slot {slots[c]} does not locate the child"))

    owners = np.flatnonzero(fan > 0)
    if owners.size:
        block = np.concatenate([nodes[i].cmat[: fan[i]] for i in owners.tolist()])
        dim = block.shape[1] - _EXTRA
        V = X[rows[child]]
        norms = np.einsum("ij,ij->i", V, V)
        ok = (
            np.all(block[:, :dim] == V, axis=1)
            & (np.abs(block[:, dim + _NORM] - norms) <= 1e-12 * (1.0 + norms))
            & (block[:, dim + _RAD] == radii[child])
            & (block[:, dim + _ROW] == rows[child])
        )
        for j in np.unique(par[~ok]).tolist():
            out.append(Violation("cache", int(rows[j]), detail="cached child data out of date"))
        has_self = np.bincount(par[rows[child] == rows[par]], minlength=m) > 0
        for j in owners[~has_self[owners]].tolist():
            out.append(Violation("nesting", int(rows[j]), detail="node with children lacks its self-child"))

    bad = np.flatnonzero(levels[child] != levels[par] - 1)
    for j in bad.tolist():
        c, p = child[j], par[j]
        out.append(Violation("level", int(rows[p]), int(rows[c]), f"child level {levels[c]} under level {levels[p]}"))

    # covering
    d = _pair_dists(X, rows[par], rows[child])
    cover = base ** levels[par].astype(np.float64)
    for j in np.flatnonzero(d > cover).tolist():
        out.append(Violation("covering", int(rows[par[j]]), int(rows[child[j]]), f"d={d[j]:.6g} > {cover[j]:.6g}"))

    # sibling separation over every pair sharing a parent
    group_end = np.cumsum(fan[owners])[np.searchsorted(owners, par)]
    after = group_end - np.arange(len(child)) - 1
    total = int(after.sum())
    if total:
        a = np.repeat(np.arange(len(child)), after)
        first = np.cumsum(after) - after
        b = a + 1 + np.arange(total) - np.repeat(first, after)
        exact = _pair_dists(X, rows[child[a]], rows[child[b]])
        sep = base ** (levels[par[a]].astype(np.float64) - 1.0)
        for j in np.flatnonzero(exact <= sep).tolist():
            out.append(
                Violation(
                    "separation", int(rows[child[a[j]]]), int(rows[child[b[j]]]), f"d={exact[j]:.6g} <= {sep[j]:.6g}"
                )
            )

    # radius: compare with the distance to every descendant
    over = np.zeros(len(nodes), dtype=bool)
    desc = np.arange(len(nodes))
    anc = parent.copy()
    while True:
        live = anc >= 0
        if not live.any():
            break
        a, desc = anc[live], desc[live]
        over[a[_pair_dists(X, rows[a], rows[desc]) > radii[a]]] = True
        anc = parent[a]
    for j in np.flatnonzero(over).tolist():
        sub = np.flatnonzero(_is_below(parent, j))
        true = float(_pair_dists(X, np.full(len(sub), rows[j]), rows[sub]).max())
        out.append(Violation("radius", int(rows[j]), detail=f"radius {radii[j]:.6g} < true {true:.6g}"))
    limit = base ** (levels.astype(np.float64) + 1) / (base - 1.0)
    for j in np.flatnonzero(radii > limit).tolist():
        out.append(Violation("radius-bound", int(rows[j]), detail=f"radius {radii[j]:.6g} > {limit[j]:.6g}"))

    if stored != tree.size:
        out.append(Violation("size", -1, detail=f"{stored} ids reachable, size says {tree.size}"))
    return out
