"""Dynamic connected components under edge insertions and deletions.

Two engines answer the same interface and must agree on every reachable state:

- ``NaiveEngine``       from-scratch union-find on every query; the correctness
                        oracle.  O(M) per operation, no hidden state.
- ``FullyDynamicEngine``spanning forest with replacement-edge search in the
                        Holm - de Lichtenberg - Thorup style: every open edge
                        carries a level, forests F_i hold tree edges of level
                        >= i as Euler tours in splay trees, and deleting a tree
                        edge searches for a replacement from its level down,
                        pushing inspected edges one level deeper to pay for the
                        search.  Validated by equivalence, not by the amortized
                        bound.

Boundary classes of size >= 2 become ghost nodes permanently wired to their
members.  Component counts include ghost-merged components over the full
vertex set (isolated vertices are size-1 components); largest-component size
counts lattice vertices only.
"""

from __future__ import annotations

import heapq
from collections import Counter

import numpy as np

from .errors import EdgeAbsent, EdgeAlreadyPresent, FkdynError

__all__ = ["create_engine", "NaiveEngine", "FullyDynamicEngine", "ENGINE_KINDS",
           "components_json"]

ENGINE_KINDS = ("naive", "fully_dynamic")


def _ghost_setup(geometry, bc):
    """Node/edge extension for ghost wirings: returns (num_nodes, endpoints).

    endpoints has one row per geometry edge followed by one row per permanent
    ghost edge (ghost node id, member vertex id).
    """
    nv = geometry.num_vertices
    rows = [(int(a), int(b)) for a, b in geometry.edges]
    ghosts = 0
    if bc is not None:
        for cls in bc.classes:
            if len(cls) >= 2:
                g = nv + ghosts
                ghosts += 1
                for v in sorted(cls):
                    rows.append((g, int(v)))
    endpoints = np.array(rows, dtype=np.int64).reshape(-1, 2)
    return nv + ghosts, endpoints


class _EngineBase:
    """Shared bookkeeping: open mask over geometry edges, ghost extension."""

    def __init__(self, geometry, bc=None, initial=None):
        self.geometry = geometry
        self.bc = bc
        self.num_lattice = geometry.num_vertices
        self.num_edges = geometry.num_edges
        self.num_nodes, self.endpoints = _ghost_setup(geometry, bc)
        self.open_mask = np.zeros(self.num_edges, dtype=bool)
        self.open_count = 0
        if initial is not None:
            initial = np.asarray(initial, dtype=bool)
            if initial.shape != (self.num_edges,):
                raise FkdynError("initial mask has wrong length")

    def _check_insert(self, e):
        if not (0 <= e < self.num_edges):
            raise FkdynError(f"edge id {e} out of range")
        if self.open_mask[e]:
            raise EdgeAlreadyPresent(f"edge {e} already open")

    def _check_delete(self, e):
        if not (0 <= e < self.num_edges):
            raise FkdynError(f"edge id {e} out of range")
        if not self.open_mask[e]:
            raise EdgeAbsent(f"edge {e} not open")

    def component_map(self) -> dict:
        """Debug dump: canonical component id (min lattice vertex) -> sorted members."""
        groups = {}
        for v in range(self.num_lattice):
            groups.setdefault(self._canon(v), []).append(v)
        return {str(k): sorted(vs) for k, vs in groups.items()}


# ---------------------------------------------------------------------------
# Naive engine
# ---------------------------------------------------------------------------


class NaiveEngine(_EngineBase):
    """Union-find recomputed from scratch at every operation."""

    kind = "naive"

    def __init__(self, geometry, bc=None, initial=None):
        super().__init__(geometry, bc, initial)
        if initial is not None:
            for e in np.flatnonzero(np.asarray(initial, dtype=bool)):
                self.open_mask[e] = True
            self.open_count = int(self.open_mask.sum())

    def _roots(self, skip_edge=None):
        parent = list(range(self.num_nodes))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ep = self.endpoints
        for e in range(self.num_edges):
            if e != skip_edge and self.open_mask[e]:
                ra, rb = find(int(ep[e, 0])), find(int(ep[e, 1]))
                if ra != rb:
                    parent[rb] = ra
        for e in range(self.num_edges, len(ep)):
            ra, rb = find(int(ep[e, 0])), find(int(ep[e, 1]))
            if ra != rb:
                parent[rb] = ra
        return [find(x) for x in range(self.num_nodes)]

    def _connected(self, u, v, skip_edge=None):
        roots = self._roots(skip_edge)
        return roots[u] == roots[v]

    @property
    def num_components(self) -> int:
        return len(set(self._roots()))

    def insert_edge(self, e: int) -> int:
        e = int(e)
        self._check_insert(e)
        joined = not self._connected(int(self.endpoints[e, 0]), int(self.endpoints[e, 1]))
        self.open_mask[e] = True
        self.open_count += 1
        return -1 if joined else 0

    def delete_edge(self, e: int) -> int:
        e = int(e)
        self._check_delete(e)
        split = not self._connected(
            int(self.endpoints[e, 0]), int(self.endpoints[e, 1]), skip_edge=e
        )
        self.open_mask[e] = False
        self.open_count -= 1
        return 1 if split else 0

    def is_bridge(self, e: int) -> bool:
        e = int(e)
        return not self._connected(
            int(self.endpoints[e, 0]), int(self.endpoints[e, 1]), skip_edge=e
        )

    def same_component(self, u: int, v: int) -> bool:
        return self._connected(int(u), int(v))

    def component_size(self, v: int) -> int:
        roots = self._roots()
        r = roots[int(v)]
        return sum(1 for x in range(self.num_lattice) if roots[x] == r)

    def largest_component(self) -> int:
        roots = self._roots()
        sizes = Counter(roots[v] for v in range(self.num_lattice))
        return max(sizes.values()) if sizes else 0

    def _canon(self, v):
        roots = self._roots()
        r = roots[int(v)]
        return min(x for x in range(self.num_lattice) if roots[x] == r)

    def component_map(self) -> dict:
        roots = self._roots()
        groups = {}
        for v in range(self.num_lattice):
            groups.setdefault(roots[v], []).append(v)
        return {str(min(vs)): sorted(vs) for vs in groups.values()}


# ---------------------------------------------------------------------------
# Splay-tree Euler tours
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("l", "r", "p", "w", "cnt", "agg_w", "agg_cnt", "loop_v")

    def __init__(self, loop_v=-1, w=0):
        self.l = None
        self.r = None
        self.p = None
        self.w = w          # lattice weight: 1 for a lattice-vertex loop node
        self.cnt = 1 if loop_v >= 0 else 0  # loop nodes count vertices
        self.agg_w = w
        self.agg_cnt = self.cnt
        self.loop_v = loop_v


def _update(x):
    aw = x.w
    ac = x.cnt
    l = x.l
    r = x.r
    if l is not None:
        aw += l.agg_w
        ac += l.agg_cnt
    if r is not None:
        aw += r.agg_w
        ac += r.agg_cnt
    x.agg_w = aw
    x.agg_cnt = ac


def _rotate(x):
    p = x.p
    g = p.p
    if p.l is x:
        b = x.r
        x.r = p
        p.l = b
    else:
        b = x.l
        x.l = p
        p.r = b
    if b is not None:
        b.p = p
    p.p = x
    x.p = g
    if g is not None:
        if g.l is p:
            g.l = x
        else:
            g.r = x
    _update(p)
    _update(x)


def _splay(x):
    while x.p is not None:
        p = x.p
        g = p.p
        if g is None:
            _rotate(x)
        elif (g.l is p) == (p.l is x):
            _rotate(p)
            _rotate(x)
        else:
            _rotate(x)
            _rotate(x)
    return x


def _top(x):
    while x.p is not None:
        x = x.p
    return x


def _connected_nodes(a, b):
    if a is b:
        return True
    _splay(a)
    _splay(b)
    return _top(a) is b


def _join(a, b):
    if a is None:
        return b
    if b is None:
        return a
    x = a
    while x.r is not None:
        x = x.r
    _splay(x)
    x.r = b
    b.p = x
    _update(x)
    return x


def _split_before(x):
    """Return (left, right) where right starts with x."""
    _splay(x)
    a = x.l
    if a is not None:
        a.p = None
        x.l = None
        _update(x)
    return a, x


def _split_after(x):
    """Return (left, right) where left ends with x."""
    _splay(x)
    b = x.r
    if b is not None:
        b.p = None
        x.r = None
        _update(x)
    return x, b


def _order_lt(a, b):
    """True iff a precedes b in the tour (same tree assumed)."""
    _splay(a)
    _splay(b)
    x = a
    while x.p is not b:
        x = x.p
    return x is b.l


def _collect_loops(root, out):
    stack = []
    node = root
    while stack or node is not None:
        while node is not None:
            stack.append(node)
            node = node.l
        node = stack.pop()
        if node.loop_v >= 0:
            out.append(node.loop_v)
        node = node.r
    return out


# ---------------------------------------------------------------------------
# Fully dynamic engine
# ---------------------------------------------------------------------------

_CLOSED = 0
_TREE = 1
_NONTREE = 2


class FullyDynamicEngine(_EngineBase):
    """HDT-style spanning forest with level-tagged non-tree edges."""

    kind = "fully_dynamic"

    def __init__(self, geometry, bc=None, initial=None):
        super().__init__(geometry, bc, initial)
        n = max(2, self.num_nodes)
        self.max_level = int(np.ceil(np.log2(n))) + 1
        ne_total = len(self.endpoints)
        self._state = np.zeros(ne_total, dtype=np.int8)
        self._level = np.zeros(ne_total, dtype=np.int16)
        # loops[i][v] lazily created; level 0 loops exist for all nodes
        self._loops = [dict() for _ in range(self.max_level + 2)]
        for v in range(self.num_nodes):
            self._loops[0][v] = _Node(loop_v=v, w=1 if v < self.num_lattice else 0)
        self._arcs = {}     # (edge, level) -> (node, node)
        self._nt_adj = [dict() for _ in range(self.max_level + 2)]
        self._tr_adj = [dict() for _ in range(self.max_level + 2)]
        self._count = self.num_nodes
        self._weights = Counter()
        self._heap = []
        for v in range(self.num_nodes):
            w = 1 if v < self.num_lattice else 0
            self._weights[w] += 1
        for w in self._weights:
            heapq.heappush(self._heap, -w)
        for e in range(self.num_edges, ne_total):
            self._insert_internal(e)
        if initial is not None:
            for e in np.flatnonzero(np.asarray(initial, dtype=bool)):
                self.insert_edge(int(e))

    # ----- component-size multiset ------------------------------------

    def _size_remove(self, w):
        self._weights[w] -= 1
        if self._weights[w] == 0:
            del self._weights[w]

    def _size_add(self, w):
        self._weights[w] += 1
        heapq.heappush(self._heap, -w)

    # ----- ETT helpers -------------------------------------------------

    def _loop(self, level, v):
        d = self._loops[level]
        node = d.get(v)
        if node is None:
            node = _Node(loop_v=v, w=1 if v < self.num_lattice else 0)
            d[v] = node
        return node

    def _ett_link(self, level, u, v):
        lu = self._loop(level, u)
        lv = self._loop(level, v)
        a, b = _split_before(lu)
        tu = _join(b, a)
        a, b = _split_before(lv)
        tv = _join(b, a)
        n1 = _Node()
        n2 = _Node()
        _join(_join(_join(tu, n1), tv), n2)
        return n1, n2

    def _ett_cut(self, n1, n2):
        if not _order_lt(n1, n2):
            n1, n2 = n2, n1
        a, rest = _split_before(n1)
        _, rest = _split_after(n1)
        _, rest2 = _split_before(n2)
        _, tail = _split_after(n2)
        _join(a, tail)

    def _adj_add(self, table, level, e):
        x, y = int(self.endpoints[e, 0]), int(self.endpoints[e, 1])
        table[level].setdefault(x, set()).add(e)
        table[level].setdefault(y, set()).add(e)

    def _adj_remove(self, table, level, e):
        x, y = int(self.endpoints[e, 0]), int(self.endpoints[e, 1])
        table[level][x].discard(e)
        table[level][y].discard(e)

    # ----- core operations --------------------------------------------

    def _connected(self, u, v):
        return _connected_nodes(self._loops[0][u], self._loops[0][v])

    def _comp_weight(self, v):
        lp = self._loops[0][v]
        _splay(lp)
        return lp.agg_w

    def _insert_internal(self, e) -> int:
        u, v = int(self.endpoints[e, 0]), int(self.endpoints[e, 1])
        if self._connected(u, v):
            self._state[e] = _NONTREE
            self._level[e] = 0
            self._adj_add(self._nt_adj, 0, e)
            return 0
        wu = self._comp_weight(u)
        wv = self._comp_weight(v)
        self._size_remove(wu)
        self._size_remove(wv)
        self._size_add(wu + wv)
        self._arcs[(e, 0)] = self._ett_link(0, u, v)
        self._state[e] = _TREE
        self._level[e] = 0
        self._adj_add(self._tr_adj, 0, e)
        self._count -= 1
        return -1

    def _delete_internal(self, e) -> int:
        u, v = int(self.endpoints[e, 0]), int(self.endpoints[e, 1])
        if self._state[e] == _NONTREE:
            self._adj_remove(self._nt_adj, int(self._level[e]), e)
            self._state[e] = _CLOSED
            return 0
        lvl = int(self._level[e])
        w_tot = self._comp_weight(u)
        for i in range(lvl, -1, -1):
            n1, n2 = self._arcs.pop((e, i))
            self._ett_cut(n1, n2)
        self._adj_remove(self._tr_adj, lvl, e)
        self._state[e] = _CLOSED

        replacement = None
        for i in range(lvl, -1, -1):
            lu = self._loops[i][u]
            lv = self._loops[i][v]
            _splay(lu)
            su = lu.agg_cnt
            _splay(lv)
            sv = lv.agg_cnt
            side = u if su <= sv else v
            s_loop = self._loops[i][side]
            _splay(s_loop)
            members = _collect_loops(s_loop, [])
            member_set = set(members)
            tr_level = self._tr_adj[i]
            nt_level = self._nt_adj[i]
            # push the smaller tree's level-i tree edges one level down
            for w in members:
                bucket = tr_level.get(w)
                if not bucket:
                    continue
                for f in list(bucket):
                    self._adj_remove(self._tr_adj, i, f)
                    self._adj_add(self._tr_adj, i + 1, f)
                    self._level[f] = i + 1
                    fx, fy = int(self.endpoints[f, 0]), int(self.endpoints[f, 1])
                    self._arcs[(f, i + 1)] = self._ett_link(i + 1, fx, fy)
            # scan level-i non-tree edges incident to the smaller tree
            for w in members:
                bucket = nt_level.get(w)
                if not bucket:
                    continue
                for f in list(bucket):
                    fx, fy = int(self.endpoints[f, 0]), int(self.endpoints[f, 1])
                    other = fy if fx == w else fx
                    if other in member_set:
                        self._adj_remove(self._nt_adj, i, f)
                        self._adj_add(self._nt_adj, i + 1, f)
                        self._level[f] = i + 1
                    else:
                        self._adj_remove(self._nt_adj, i, f)
                        self._state[f] = _TREE
                        self._level[f] = i
                        self._adj_add(self._tr_adj, i, f)
                        for j in range(i, -1, -1):
                            self._arcs[(f, j)] = self._ett_link(j, fx, fy)
                        replacement = f
                        break
                if replacement is not None:
                    break
            if replacement is not None:
                break

        if replacement is not None:
            return 0
        self._count += 1
        self._size_remove(w_tot)
        self._size_add(self._comp_weight(u))
        self._size_add(self._comp_weight(v))
        return 1

    # ----- public interface -------------------------------------------

    def insert_edge(self, e: int) -> int:
        e = int(e)
        self._check_insert(e)
        delta = self._insert_internal(e)
        self.open_mask[e] = True
        self.open_count += 1
        return delta

    def delete_edge(self, e: int) -> int:
        e = int(e)
        self._check_delete(e)
        delta = self._delete_internal(e)
        self.open_mask[e] = False
        self.open_count -= 1
        return delta

    def is_bridge(self, e: int) -> bool:
        e = int(e)
        u, v = int(self.endpoints[e, 0]), int(self.endpoints[e, 1])
        if not self.open_mask[e]:
            return not self._connected(u, v)
        if self._state[e] == _NONTREE:
            return False
        # open tree edge: probe by cut and re-link; observables are restored
        delta = self.delete_edge(e)
        self.insert_edge(e)
        return delta == 1

    @property
    def num_components(self) -> int:
        return self._count

    def same_component(self, u: int, v: int) -> bool:
        return self._connected(int(u), int(v))

    def component_size(self, v: int) -> int:
        return int(self._comp_weight(int(v)))

    def largest_component(self) -> int:
        while self._heap:
            w = -self._heap[0]
            if self._weights.get(w, 0) > 0:
                return int(w)
            heapq.heappop(self._heap)
        return 0

    def _canon(self, v):
        lp = self._loops[0][int(v)]
        _splay(lp)
        members = _collect_loops(lp, [])
        return min(m for m in members if m < self.num_lattice)


def create_engine(geometry, bc=None, kind: str = "fully_dynamic", initial=None):
    """Build a connectivity engine over a geometry with optional ghost wirings.

    ``initial`` is a boolean open-edge mask; omitted means the empty
    configuration.
    """
    if kind == "naive":
        return NaiveEngine(geometry, bc, initial)
    if kind == "fully_dynamic":
        return FullyDynamicEngine(geometry, bc, initial)
    raise FkdynError(f"unknown engine kind {kind!r}")


def components_json(engine) -> dict:
    """Component structure as the engine reports it, keyed for diffing.

    Maps each component's smallest lattice-vertex id (as a string, JSON-style)
    to the sorted list of its lattice vertices, using only the public query
    interface so both engines produce comparable dumps.
    """
    groups: dict = {}
    reps: list = []
    for v in range(engine.num_lattice):
        for rep in reps:
            if engine.same_component(rep, v):
                groups[rep].append(v)
                break
        else:
            reps.append(v)
            groups[v] = [v]
    return {str(rep): members for rep, members in sorted(groups.items())}
