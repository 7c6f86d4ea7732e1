"""Finite lattice geometries, boundary partitions, and edge balls.

Geometries are immutable after construction and safely shareable across
threads.  Vertices carry 0-based corner-anchored coordinates; the vertex id is
the C-order ravel of the coordinate tuple.  Edges are enumerated vertex-major,
axis-minor, which fixes a stable numbering for bit-exact reproducibility.

Three lattice kinds:

- ``torus``     all axes wrap; requires n >= 3 (smaller wraps create multi-edges)
- ``box``       no axis wraps; boundary = vertices with some coordinate in {0, n-1}
- ``cylinder``  a chosen subset of axes wraps; boundary comes from the others

A boundary condition is a partition of the boundary vertex set into classes;
vertices sharing a class are identified ("ghost-wired") when components are
counted.  The refinement order on partitions is the stochastic order used
everywhere: free (all singletons) is minimal, wired (one class) is maximal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import FkdynError, InvalidSideMask, TorusTooSmall

__all__ = [
    "LatticeGeometry",
    "SubGeometry",
    "ArbitraryGraph",
    "BoundaryCondition",
    "EdgeBall",
    "build_geometry",
    "make_boundary",
    "edge_ball",
    "restrict_partition",
    "induced_by_configuration",
    "descriptor",
    "central_vertices",
    "central_edges",
    "embed_box_in_torus",
]


def _build_incidence(num_vertices, edges):
    # CSR-style incidence: for v, incident edge ids are inc_edges[inc_ptr[v]:inc_ptr[v+1]].
    counts = np.zeros(num_vertices, dtype=np.int64)
    if len(edges):
        np.add.at(counts, edges[:, 0], 1)
        np.add.at(counts, edges[:, 1], 1)
    ptr = np.zeros(num_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    inc = np.zeros(ptr[-1], dtype=np.int64)
    fill = ptr[:-1].copy()
    for eid, (a, b) in enumerate(edges):
        inc[fill[a]] = eid
        fill[a] += 1
        inc[fill[b]] = eid
        fill[b] += 1
    return ptr, inc


class _GeometryBase:
    """Shared queries over (num_vertices, edges, boundary)."""

    def _finish_init(self):
        self.num_edges = len(self.edges)
        self._inc_ptr, self._inc_edges = _build_incidence(self.num_vertices, self.edges)
        self._edge_ids = {}
        for eid, (a, b) in enumerate(self.edges):
            a, b = int(a), int(b)
            key = (a, b) if a < b else (b, a)
            self._edge_ids[key] = eid
        self._boundary_set = frozenset(int(v) for v in self.boundary)

    def incident_edges(self, v: int) -> np.ndarray:
        return self._inc_edges[self._inc_ptr[v]:self._inc_ptr[v + 1]]

    def neighbors(self, v: int) -> list[int]:
        out = []
        for eid in self.incident_edges(v):
            a, b = self.edges[eid]
            out.append(int(b) if int(a) == v else int(a))
        return out

    def edge_id(self, u: int, v: int) -> int:
        key = (u, v) if u < v else (v, u)
        return self._edge_ids[key]

    def has_edge(self, u: int, v: int) -> bool:
        key = (u, v) if u < v else (v, u)
        return key in self._edge_ids

    def is_boundary_vertex(self, v: int) -> bool:
        return int(v) in self._boundary_set

    def degree(self, v: int) -> int:
        return int(self._inc_ptr[v + 1] - self._inc_ptr[v])


class LatticeGeometry(_GeometryBase):
    """d-dimensional side-n lattice with a deterministic vertex/edge numbering.

    Attributes
    ----------
    d, n : int
        Dimension and side length; the vertex count is N = n**d.
    kind : str
        'torus', 'box', or 'cylinder'.
    wrap_axes : tuple[bool, ...]
        Which axes wrap (all for torus, none for box).
    edges : ndarray of shape (M, 2)
        Endpoint vertex ids; edge e runs along axis ``edge_axis[e]``.
    boundary : ndarray
        Sorted boundary vertex ids (empty for the torus).
    """

    def __init__(self, d: int, n: int, kind: str, wrap_axes=None):
        if d < 1:
            raise FkdynError(f"dimension must be >= 1, got {d}")
        if n < 1:
            raise FkdynError(f"side must be >= 1, got {n}")
        kind = str(kind)
        if kind == "torus":
            wrap = (True,) * d
        elif kind == "box":
            wrap = (False,) * d
        elif kind == "cylinder":
            if wrap_axes is None:
                raise FkdynError("cylinder geometry needs wrap_axes")
            wrap_axes = list(wrap_axes)
            if len(wrap_axes) == d and all(isinstance(w, (bool, np.bool_)) for w in wrap_axes):
                wrap = tuple(bool(w) for w in wrap_axes)
            else:
                chosen = {int(a) for a in wrap_axes}
                if not chosen <= set(range(d)):
                    raise FkdynError(f"wrap_axes out of range for d={d}")
                wrap = tuple(a in chosen for a in range(d))
        else:
            raise FkdynError(f"unknown geometry kind {kind!r}")
        if any(wrap) and n < 3:
            raise TorusTooSmall(f"wrapped axes need n >= 3, got n={n}")
        self.d = int(d)
        self.n = int(n)
        self.kind = kind
        self.wrap_axes = wrap
        self.num_vertices = self.n ** self.d
        self._shape = (self.n,) * self.d
        self._strides = np.array(
            [self.n ** (self.d - 1 - i) for i in range(self.d)], dtype=np.int64
        )

        edges = []
        axes = []
        for v in range(self.num_vertices):
            c = self.coords(v)
            for a in range(self.d):
                if c[a] < self.n - 1:
                    w = v + self._strides[a]
                elif wrap[a]:
                    w = v - (self.n - 1) * self._strides[a]
                else:
                    continue
                edges.append((v, int(w)))
                axes.append(a)
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_axis = np.array(axes, dtype=np.int64)

        free_axes = [a for a in range(self.d) if not wrap[a]]
        if free_axes and self.n > 1:
            coords = np.stack(
                np.unravel_index(np.arange(self.num_vertices), self._shape), axis=1
            )
            on_bd = np.zeros(self.num_vertices, dtype=bool)
            for a in free_axes:
                on_bd |= (coords[:, a] == 0) | (coords[:, a] == self.n - 1)
            self.boundary = np.flatnonzero(on_bd)
        elif free_axes:
            self.boundary = np.arange(self.num_vertices)
        else:
            self.boundary = np.array([], dtype=np.int64)
        self._finish_init()

    def coords(self, v: int) -> tuple[int, ...]:
        return tuple(int(x) for x in np.unravel_index(int(v), self._shape))

    def vertex_id(self, coords) -> int:
        return int(np.ravel_multi_index(tuple(int(c) for c in coords), self._shape))

    def side_vertices(self, axis: int, face: int) -> np.ndarray:
        """Vertices on the (axis, face) side; face 0 is coordinate 0, face 1 is n-1."""
        if self.wrap_axes[axis]:
            raise InvalidSideMask(f"axis {axis} wraps; it has no sides")
        target = 0 if face == 0 else self.n - 1
        coords = np.stack(np.unravel_index(np.arange(self.num_vertices), self._shape), axis=1)
        return np.flatnonzero(coords[:, axis] == target)

    def plaquettes(self) -> np.ndarray:
        """All 2-cells as rows of 4 edge ids (the cell's bounding edges).

        A plaquette sits at a base vertex v and an axis pair a < b whenever all
        four bounding edges exist; on wrapped axes every position qualifies.
        """
        out = []
        for v in range(self.num_vertices):
            c = self.coords(v)
            for a in range(self.d):
                ok_a = c[a] < self.n - 1 or self.wrap_axes[a]
                if not ok_a:
                    continue
                va = self._step(v, c, a)
                for b in range(a + 1, self.d):
                    ok_b = c[b] < self.n - 1 or self.wrap_axes[b]
                    if not ok_b:
                        continue
                    vb = self._step(v, c, b)
                    ca = self.coords(va)
                    cb = self.coords(vb)
                    out.append(
                        (
                            self.edge_id(v, va),
                            self.edge_id(v, vb),
                            self.edge_id(va, self._step(va, ca, b)),
                            self.edge_id(vb, self._step(vb, cb, a)),
                        )
                    )
        return np.array(out, dtype=np.int64).reshape(-1, 4)

    def _step(self, v, c, axis):
        if c[axis] < self.n - 1:
            return int(v + self._strides[axis])
        return int(v - (self.n - 1) * self._strides[axis])

    def graph_distance_from(self, sources) -> np.ndarray:
        """BFS distances (lattice metric, wrapping where axes wrap)."""
        dist = np.full(self.num_vertices, -1, dtype=np.int64)
        frontier = [int(s) for s in sources]
        for s in frontier:
            dist[s] = 0
        while frontier:
            nxt = []
            for v in frontier:
                for w in self.neighbors(v):
                    if dist[w] < 0:
                        dist[w] = dist[v] + 1
                        nxt.append(w)
            frontier = nxt
        return dist

    def descriptor(self) -> dict:
        out = {"d": self.d, "n": self.n, "kind": self.kind}
        if self.kind == "cylinder":
            out["wrap_axes"] = [a for a in range(self.d) if self.wrap_axes[a]]
        return out


class SubGeometry(_GeometryBase):
    """Induced subgraph on a host vertex subset, reindexed locally.

    The boundary contains vertices that are on the host boundary or adjacent
    (in the host) to a vertex outside the subset.  ``host_vertices`` and
    ``host_edges`` map local ids back to the host.
    """

    kind = "sub"

    def __init__(self, host, vertices):
        self.host = host
        self.host_vertices = np.array(sorted(int(v) for v in vertices), dtype=np.int64)
        self.num_vertices = len(self.host_vertices)
        local = {int(v): i for i, v in enumerate(self.host_vertices)}
        self._local = local
        edges = []
        host_edges = []
        inside = np.zeros(host.num_vertices, dtype=bool)
        inside[self.host_vertices] = True
        for eid, (a, b) in enumerate(host.edges):
            if inside[a] and inside[b]:
                edges.append((local[int(a)], local[int(b)]))
                host_edges.append(eid)
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.host_edges = np.array(host_edges, dtype=np.int64)
        bd = []
        for i, v in enumerate(self.host_vertices):
            v = int(v)
            if host.is_boundary_vertex(v) or any(not inside[w] for w in host.neighbors(v)):
                bd.append(i)
        self.boundary = np.array(bd, dtype=np.int64)
        self._finish_init()

    def to_local_vertex(self, host_v: int) -> int:
        return self._local[int(host_v)]

    def to_local_edge(self, host_e: int) -> int:
        hit = np.flatnonzero(self.host_edges == int(host_e))
        if len(hit) == 0:
            raise FkdynError(f"host edge {host_e} not inside subgeometry")
        return int(hit[0])

    def descriptor(self) -> dict:
        return {
            "kind": "sub",
            "host": self.host.descriptor(),
            "vertices": [int(v) for v in self.host_vertices],
        }


class ArbitraryGraph(_GeometryBase):
    """Plain small graph for the exact-enumeration oracle and engine tests."""

    kind = "graph"

    def __init__(self, num_vertices: int, edges, boundary=()):
        self.num_vertices = int(num_vertices)
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= num_vertices):
            raise FkdynError("edge endpoint out of range")
        if any(int(a) == int(b) for a, b in self.edges):
            raise FkdynError("self-loops not supported")
        self.boundary = np.array(sorted(int(v) for v in boundary), dtype=np.int64)
        self._finish_init()

    def descriptor(self) -> dict:
        return {
            "kind": "graph",
            "num_vertices": self.num_vertices,
            "edges": [[int(a), int(b)] for a, b in self.edges],
        }


@dataclass(frozen=True)
class BoundaryCondition:
    """A partition of the boundary vertex set into ghost-wiring classes."""

    kind: str
    classes: tuple  # tuple of frozensets of vertex ids
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for cls in self.classes:
            if not cls:
                raise FkdynError("empty boundary class")
            if seen & cls:
                raise FkdynError("boundary classes overlap")
            seen |= cls
        object.__setattr__(self, "_cover", frozenset(seen))

    @property
    def cover(self) -> frozenset:
        return self._cover

    def class_of(self) -> dict:
        out = {}
        for i, cls in enumerate(self.classes):
            for v in cls:
                out[v] = i
        return out

    def refines(self, other: "BoundaryCondition") -> bool:
        """True iff every class of self sits inside one class of other (self <= other)."""
        if self.cover != other.cover:
            return False
        owner = other.class_of()
        for cls in self.classes:
            ids = {owner[v] for v in cls}
            if len(ids) != 1:
                return False
        return True

    def __le__(self, other):
        return self.refines(other)

    def is_free(self) -> bool:
        return all(len(c) == 1 for c in self.classes)

    def is_wired(self) -> bool:
        return len(self.classes) <= 1

    def descriptor(self) -> dict:
        out = {"kind": self.kind}
        out.update({k: v for k, v in self.params.items()})
        if self.kind == "explicit":
            out["classes"] = [sorted(int(v) for v in c) for c in self.classes]
        return out


def _partition_of(boundary, classes, kind, params=None):
    boundary = frozenset(int(v) for v in boundary)
    cls = tuple(frozenset(int(v) for v in c) for c in classes if len(c))
    bc = BoundaryCondition(kind, cls, params or {})
    if bc.cover != boundary:
        raise FkdynError("boundary classes must cover the boundary exactly")
    return bc


def build_geometry(d: int, n: int, kind: str, wrap_axes=None) -> LatticeGeometry:
    """Construct a torus, box, or cylinder lattice.

    Parameters
    ----------
    d, n : int
        Dimension (>= 1) and side (>= 1; >= 3 when any axis wraps).
    kind : str
        'torus', 'box', or 'cylinder' (the latter takes ``wrap_axes``).

    Raises
    ------
    TorusTooSmall
        If an axis wraps with n < 3.
    """
    return LatticeGeometry(d, n, kind, wrap_axes=wrap_axes)


def make_boundary(geometry, kind: str, **params) -> BoundaryCondition:
    """Build a boundary partition of the geometry's boundary vertices.

    Kinds
    -----
    free            all singletons
    wired           one class
    side_homogeneous
        ``sides=[(axis, face), ...]``; all vertices of the selected sides are
        merged into one single class, the remaining boundary vertices stay
        singletons.
    cylindrical     ``rest='free'|'wired'`` on the non-wrapped faces
    explicit        ``classes=[iterable, ...]`` covering the boundary exactly
    induced         ``classes=...`` precomputed by a helper (see
                    ``restrict_partition`` / ``induced_by_configuration``)
    """
    boundary = [int(v) for v in geometry.boundary]
    if kind == "free":
        return _partition_of(boundary, [{v} for v in boundary], "free")
    if kind == "wired":
        classes = [set(boundary)] if boundary else []
        return _partition_of(boundary, classes, "wired")
    if kind == "side_homogeneous":
        sides = params.get("sides")
        if not sides:
            raise InvalidSideMask("side_homogeneous needs a nonempty sides list")
        merged = set()
        for axis, face in sides:
            if not (0 <= axis < geometry.d) or face not in (0, 1):
                raise InvalidSideMask(f"invalid side ({axis}, {face})")
            merged |= {int(v) for v in geometry.side_vertices(axis, face)}
        if not merged:
            raise InvalidSideMask("selected sides contain no vertices")
        rest = [{v} for v in boundary if v not in merged]
        return _partition_of(
            boundary, [merged] + rest, "side_homogeneous",
            {"sides": [[int(a), int(f)] for a, f in sides]},
        )
    if kind == "cylindrical":
        rest = params.get("rest", "free")
        if rest == "free":
            classes = [{v} for v in boundary]
        elif rest == "wired":
            classes = [set(boundary)] if boundary else []
        else:
            raise FkdynError(f"cylindrical rest tag must be free or wired, got {rest!r}")
        wrapped = [a for a in range(geometry.d) if geometry.wrap_axes[a]]
        return _partition_of(boundary, classes, "cylindrical", {"axes": wrapped, "rest": rest})
    if kind in ("explicit", "induced"):
        classes = params.get("classes")
        if classes is None:
            raise FkdynError(f"{kind} boundary needs classes=...")
        return _partition_of(boundary, classes, kind)
    raise FkdynError(f"unknown boundary kind {kind!r}")


def restrict_partition(host_bc: BoundaryCondition, geometry: SubGeometry) -> list:
    """Host boundary classes intersected with a subgeometry's boundary, as local ids.

    Vertices of the subgeometry boundary that are not covered by the host
    partition come back as singletons.
    """
    bd_host = [int(geometry.host_vertices[i]) for i in geometry.boundary]
    covered = host_bc.cover
    classes = []
    for cls in host_bc.classes:
        hit = cls & set(bd_host)
        if hit:
            classes.append({geometry.to_local_vertex(v) for v in hit})
    for v in bd_host:
        if v not in covered:
            classes.append({geometry.to_local_vertex(v)})
    return classes


def induced_by_configuration(host, host_bc, region_vertices, open_edges) -> list:
    """Boundary classes induced by connectivity outside a region.

    Two boundary vertices of the region share a class iff they are joined by a
    path of open edges using only edges not fully inside the region (host
    ghost wirings participate).  ``open_edges`` is a boolean mask over host
    edge ids.  Returns classes as host vertex id sets.
    """
    region = set(int(v) for v in region_vertices)
    parent = list(range(host.num_vertices + len(host_bc.classes if host_bc else [])))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    if host_bc is not None:
        for i, cls in enumerate(host_bc.classes):
            for v in cls:
                union(host.num_vertices + i, int(v))
    for eid, (a, b) in enumerate(host.edges):
        if not open_edges[eid]:
            continue
        if int(a) in region and int(b) in region:
            continue  # interior edges do not induce outside wirings
        union(int(a), int(b))

    bd = [int(v) for v in region if host.is_boundary_vertex(v) or any(
        w not in region for w in host.neighbors(int(v))
    )]
    groups = {}
    for v in bd:
        groups.setdefault(find(v), set()).add(v)
    return list(groups.values())


@dataclass(frozen=True)
class EdgeBall:
    """Vertices within lattice distance m of an edge, with the induced edges."""

    geometry: object
    edge: int
    m: int
    vertices: np.ndarray
    edge_ids: np.ndarray

    def subgeometry(self) -> SubGeometry:
        return SubGeometry(self.geometry, self.vertices)


def edge_ball(geometry, e: int, m: int) -> EdgeBall:
    """Ball B_{m,e}: vertices at distance <= m from either endpoint of e.

    Distances follow the host metric, so balls wrap on wrapped axes and clip
    at box boundaries.  m' <= m gives nested vertex sets.
    """
    if m < 0:
        raise FkdynError("ball radius must be >= 0")
    a, b = geometry.edges[int(e)]
    dist = geometry.graph_distance_from([int(a), int(b)])
    vertices = np.flatnonzero((dist >= 0) & (dist <= m))
    inside = np.zeros(geometry.num_vertices, dtype=bool)
    inside[vertices] = True
    eids = np.flatnonzero(inside[geometry.edges[:, 0]] & inside[geometry.edges[:, 1]])
    return EdgeBall(geometry, int(e), int(m), vertices, eids)


def descriptor(geometry, bc: BoundaryCondition | None = None) -> dict:
    """The JSON descriptor {d, n, kind, boundary} echoed in configs and outputs."""
    out = geometry.descriptor()
    out["boundary"] = bc.descriptor() if bc is not None else None
    return out


def central_vertices(geometry: LatticeGeometry, side: int) -> np.ndarray:
    """Vertices of the centered side-`side` subbox (host vertex ids)."""
    lo = (geometry.n - side) // 2
    hi = lo + side
    coords = np.stack(
        np.unravel_index(np.arange(geometry.num_vertices), (geometry.n,) * geometry.d),
        axis=1,
    )
    ok = np.all((coords >= lo) & (coords < hi), axis=1)
    return np.flatnonzero(ok)


def central_edges(geometry: LatticeGeometry, side: int) -> np.ndarray:
    """Edges with both endpoints in the centered side-`side` subbox."""
    inside = np.zeros(geometry.num_vertices, dtype=bool)
    inside[central_vertices(geometry, side)] = True
    return np.flatnonzero(inside[geometry.edges[:, 0]] & inside[geometry.edges[:, 1]])


def embed_box_in_torus(box: LatticeGeometry, torus: LatticeGeometry, offset=None):
    """Map box vertex/edge ids into a torus (corner anchored at ``offset``).

    Returns (vertex_map, edge_map) arrays.  The torus must be at least as
    large as the box; translation invariance of the torus makes the anchor a
    free choice, default all-zero.
    """
    if box.d != torus.d or box.n > torus.n:
        raise FkdynError("box does not fit in torus")
    off = tuple(int(o) for o in (offset or (0,) * box.d))
    vmap = np.zeros(box.num_vertices, dtype=np.int64)
    for v in range(box.num_vertices):
        c = box.coords(v)
        vmap[v] = torus.vertex_id(tuple((c[i] + off[i]) % torus.n for i in range(box.d)))
    emap = np.zeros(box.num_edges, dtype=np.int64)
    for eid, (a, b) in enumerate(box.edges):
        emap[eid] = torus.edge_id(int(vmap[a]), int(vmap[b]))
    return vmap, emap


def all_pairs_sides(d: int):
    """Every (axis, face) side of a d-dimensional box."""
    return list(itertools.product(range(d), (0, 1)))
