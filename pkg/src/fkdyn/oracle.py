"""Exact computations on tiny instances: the ground truth for every stochastic test.

States are edge subsets encoded as bit masks (bit e = edge e open).  Component
counts for whole mask batches are computed by a vectorized label-merging pass:
labels start as vertex ids, permanent ghost edges are merged on every row,
then each dynamic edge merges the rows where its bit is set.  The number of
merges gives |Comp|; the label matrix gives bridges, largest components, and
crossing events.

The full-table model (all atoms in memory) is capped at 22 edges.  A streaming
variant computes scalar functionals (Z, event probabilities) in mask batches
up to 26 edges.  Transition matrices are capped at 16 edges: beyond that the
matrix itself no longer fits desk-scale memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateCut, EmptyEvent, FkdynError, NonIntegerQ, TooLargeToEnumerate

__all__ = [
    "ExactModel",
    "ExactChain",
    "exact_distribution",
    "exact_transition_matrix",
    "exact_mixing_time",
    "exact_conductance",
    "exact_conditional",
    "exact_event_probability",
    "batch_labels",
    "bridge_state_table",
    "largest_component_table",
    "exact_potts_distribution",
    "fk_pushforward_to_potts",
    "ConductanceResult",
    "export_json",
]

MAX_TABLE_EDGES = 22
MAX_STREAM_EDGES = 26
MAX_MATRIX_EDGES = 16
_BATCH = 1 << 20


def _validate_pq(p, q):
    if not (0.0 <= p <= 1.0):
        raise FkdynError(f"p must lie in [0, 1], got {p}")
    if q < 1.0:
        raise FkdynError(f"q must be >= 1, got {q}")


def _ghost_endpoints(graph, bc):
    nv = graph.num_vertices
    rows = [(int(a), int(b)) for a, b in graph.edges]
    if bc is not None:
        g = nv
        for cls in bc.classes:
            if len(cls) >= 2:
                for v in sorted(cls):
                    rows.append((g, int(v)))
                g += 1
        nv = g
    return nv, np.array(rows, dtype=np.int64).reshape(-1, 2)


def _popcount(masks):
    view = masks.astype(np.uint32).view(np.uint8).reshape(len(masks), 4)
    return np.unpackbits(view, axis=1).sum(axis=1).astype(np.int16)


def batch_labels(masks, num_nodes, endpoints, num_dynamic):
    """Component labels and counts for a batch of edge masks.

    Rows of ``endpoints`` beyond ``num_dynamic`` are permanently present
    (ghost wirings).  Returns (labels, counts): labels is (B, num_nodes) with
    equal labels iff same component; counts is |Comp| per row.
    """
    b = len(masks)
    labels = np.broadcast_to(np.arange(num_nodes, dtype=np.int16), (b, num_nodes)).copy()
    merges = np.zeros(b, dtype=np.int16)
    rows_all = np.arange(b)

    def merge(rows, a, bb):
        la = labels[rows, a]
        lb = labels[rows, bb]
        diff = la != lb
        if not diff.any():
            return
        rows = rows[diff]
        la = la[diff]
        lb = lb[diff]
        lo = np.minimum(la, lb)
        hi = np.maximum(la, lb)
        sub = labels[rows]
        labels[rows] = np.where(sub == hi[:, None], lo[:, None], sub)
        merges[rows] += 1

    for j in range(num_dynamic, len(endpoints)):
        merge(rows_all, int(endpoints[j, 0]), int(endpoints[j, 1]))
    for j in range(num_dynamic):
        rows = np.flatnonzero(masks & np.uint32(1 << j))
        if len(rows):
            merge(rows, int(endpoints[j, 0]), int(endpoints[j, 1]))
    return labels, (num_nodes - merges)


@dataclass
class ExactModel:
    """Full weight table of a random-cluster measure on a small graph."""

    graph: object
    bc: object
    p: float
    q: float
    num_edges: int
    num_nodes: int
    comp_counts: np.ndarray
    open_counts: np.ndarray
    weights: np.ndarray
    Z: float
    pi: np.ndarray

    @property
    def num_states(self) -> int:
        return 1 << self.num_edges

    def marginal_open(self, e: int) -> float:
        masks = np.arange(self.num_states, dtype=np.uint32)
        return float(self.pi[(masks & np.uint32(1 << e)) != 0].sum())

    def tv_to(self, other_pi) -> float:
        return 0.5 * float(np.abs(self.pi - np.asarray(other_pi)).sum())

    def labels(self):
        nv, endpoints = _ghost_endpoints(self.graph, self.bc)
        masks = np.arange(self.num_states, dtype=np.uint32)
        labels, _ = batch_labels(masks, nv, endpoints, self.num_edges)
        return labels


def exact_distribution(graph, p, q, bc=None) -> ExactModel:
    """Enumerate all 2^|E| atoms of the random-cluster measure.

    Parameters
    ----------
    graph : geometry-like (lattice, subgeometry, or arbitrary small graph)
    p, q : float
        Edge parameter in [0, 1] and cluster weight q >= 1 (real).
    bc : BoundaryCondition, optional
        Ghost wirings entering the component count.

    Raises
    ------
    TooLargeToEnumerate
        If |E| > 22.
    """
    _validate_pq(p, q)
    m = graph.num_edges
    if m > MAX_TABLE_EDGES:
        raise TooLargeToEnumerate(f"|E| = {m} exceeds the {MAX_TABLE_EDGES}-edge table cap")
    nv, endpoints = _ghost_endpoints(graph, bc)
    size = 1 << m
    comp = np.zeros(size, dtype=np.int16)
    opens = np.zeros(size, dtype=np.int16)
    for start in range(0, size, _BATCH):
        masks = np.arange(start, min(start + _BATCH, size), dtype=np.uint32)
        _, counts = batch_labels(masks, nv, endpoints, m)
        comp[start:start + len(masks)] = counts
        opens[start:start + len(masks)] = _popcount(masks)
    w = (
        np.power(float(p), opens.astype(np.float64))
        * np.power(1.0 - float(p), (m - opens).astype(np.float64))
        * np.power(float(q), comp.astype(np.float64))
    )
    z = float(w.sum())
    return ExactModel(graph, bc, float(p), float(q), m, nv, comp, opens, w, z, w / z)


def bridge_state_table(graph, bc=None) -> np.ndarray:
    """(2^M, M) booleans: is edge e a bridge at state s (endpoints split without e)."""
    m = graph.num_edges
    if m > MAX_MATRIX_EDGES:
        raise TooLargeToEnumerate(f"bridge table needs |E| <= {MAX_MATRIX_EDGES}")
    nv, endpoints = _ghost_endpoints(graph, bc)
    size = 1 << m
    masks = np.arange(size, dtype=np.uint32)
    labels, _ = batch_labels(masks, nv, endpoints, m)
    out = np.zeros((size, m), dtype=bool)
    for e in range(m):
        without = masks & np.uint32(~np.uint32(1 << e))
        u, v = int(endpoints[e, 0]), int(endpoints[e, 1])
        out[:, e] = labels[without, u] != labels[without, v]
    return out


def largest_component_table(model: ExactModel) -> np.ndarray:
    """|C1| (lattice vertices only) per state of an enumerable model."""
    labels = model.labels()
    nl = model.graph.num_vertices
    out = np.zeros(model.num_states, dtype=np.int32)
    for s in range(model.num_states):
        out[s] = np.bincount(labels[s, :nl]).max()
    return out


class ExactChain:
    """Discrete-time heat-bath kernel of an enumerable model.

    P(s, s^e) = (1/M) * (open or close probability given the bridge status of
    e at s minus e); the diagonal absorbs the rest.
    """

    def __init__(self, model: ExactModel):
        if model.num_edges > MAX_MATRIX_EDGES:
            raise TooLargeToEnumerate(
                f"transition matrix needs |E| <= {MAX_MATRIX_EDGES}"
            )
        from .dynamics import heat_bath_probability

        self.model = model
        m = model.num_edges
        size = model.num_states
        masks = np.arange(size, dtype=np.uint32)
        bridges = bridge_state_table(model.graph, model.bc)
        p_open = np.where(
            bridges,
            heat_bath_probability(model.p, model.q, True),
            heat_bath_probability(model.p, model.q, False),
        )
        rows = np.repeat(masks, m)
        cols = np.empty(size * m, dtype=np.int64)
        vals = np.empty(size * m, dtype=np.float64)
        for e in range(m):
            bit = np.uint32(1 << e)
            targets = masks ^ bit
            opening = (masks & bit) == 0
            pe = p_open[:, e]
            vals_e = np.where(opening, pe, 1.0 - pe) / m
            cols[e::m] = targets
            vals[e::m] = vals_e
        offdiag = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
        diag = 1.0 - np.asarray(offdiag.sum(axis=1)).ravel()
        self.P = (offdiag + sp.diags(diag)).tocsr()
        self.pi = model.pi
        self.num_states = size

    def stationarity_residual(self) -> float:
        return float(np.abs(self.pi @ self.P - self.pi).max())

    def reversibility_residual(self) -> float:
        flow = self.P.multiply(self.pi[:, None])
        return float(np.abs((flow - flow.T).todense()).max())

    def step_distribution(self, dist, steps=1) -> np.ndarray:
        out = np.asarray(dist, dtype=np.float64)
        for _ in range(steps):
            out = out @ self.P
        return out


def exact_transition_matrix(model: ExactModel) -> ExactChain:
    """Build the discrete-time kernel; stationary vector equals the model's pi."""
    return ExactChain(model)


def exact_mixing_time(chain: ExactChain, eps: float, max_steps: int = 200_000) -> int:
    """Smallest t with max-over-starts TV(P^t(x, .), pi) <= eps.

    Iterates all starts at once (dense matrix times sparse kernel); the worst
    TV distance is non-increasing in t, so the first crossing is the answer.
    """
    if not (0.0 < eps):
        raise FkdynError("eps must be positive")
    if eps >= 1.0:
        return 0
    size = chain.num_states
    a = np.eye(size, dtype=np.float64)
    pt = chain.P.T.tocsr()
    t = 0
    while t <= max_steps:
        d = 0.5 * np.abs(a - chain.pi[None, :]).sum(axis=1).max()
        if d <= eps:
            return t
        a = (pt @ a.T).T
        t += 1
    raise FkdynError(f"mixing time exceeds iteration cap {max_steps}")


@dataclass
class ConductanceResult:
    phi: float
    mixing_time_lower_bound: float
    pi_a: float


def exact_conductance(chain: ExactChain, a_states) -> ConductanceResult:
    """Phi(A) = flow(A, A^c) / (pi(A) pi(A^c)), and the bound t_mix >= 1/(2 Phi)."""
    size = chain.num_states
    mask = np.zeros(size, dtype=bool)
    mask[np.asarray(list(a_states), dtype=np.int64)] = True
    if not mask.any() or mask.all():
        raise DegenerateCut("A must be a proper nonempty subset of the state space")
    pi = chain.pi
    pa = float(pi[mask].sum())
    pac = float(pi[~mask].sum())
    if pa * pac == 0.0:
        raise DegenerateCut("pi(A) * pi(A^c) = 0")
    out_flow = float((pi[mask] * (chain.P[mask][:, ~mask].sum(axis=1).A1)).sum())
    phi = out_flow / (pa * pac)
    bound = np.inf if phi == 0.0 else 1.0 / (2.0 * phi)
    return ConductanceResult(phi, bound, pa)


def exact_conditional(model: ExactModel, predicate) -> np.ndarray:
    """Renormalized restriction of pi to the states selected by ``predicate``.

    ``predicate`` is either a boolean mask over states or a callable taking
    the model and returning one.  Returns a full-length probability vector
    supported on the event.
    """
    mask = predicate(model) if callable(predicate) else np.asarray(predicate, dtype=bool)
    if mask.shape != (model.num_states,):
        raise FkdynError("predicate mask has wrong shape")
    if not mask.any():
        raise EmptyEvent("predicate selects no state")
    total = float(model.pi[mask].sum())
    if total == 0.0:
        raise EmptyEvent("event has zero probability")
    out = np.where(mask, model.pi, 0.0)
    return out / total


def exact_event_probability(graph, p, q, bc, event_fn) -> float:
    """Streaming expectation of an indicator without storing the atom table.

    ``event_fn(masks, labels, counts)`` returns a boolean array per batch.
    Works up to 26 edges.
    """
    _validate_pq(p, q)
    m = graph.num_edges
    if m > MAX_STREAM_EDGES:
        raise TooLargeToEnumerate(f"|E| = {m} exceeds the {MAX_STREAM_EDGES}-edge streaming cap")
    nv, endpoints = _ghost_endpoints(graph, bc)
    size = 1 << m
    z = 0.0
    hit = 0.0
    for start in range(0, size, _BATCH):
        masks = np.arange(start, min(start + _BATCH, size), dtype=np.uint32)
        labels, counts = batch_labels(masks, nv, endpoints, m)
        opens = _popcount(masks)
        w = (
            np.power(float(p), opens.astype(np.float64))
            * np.power(1.0 - float(p), (m - opens).astype(np.float64))
            * np.power(float(q), counts.astype(np.float64))
        )
        z += float(w.sum())
        ind = event_fn(masks, labels, counts)
        hit += float(w[ind].sum())
    return hit / z


# ---------------------------------------------------------------------------
# Potts side (integer q)
# ---------------------------------------------------------------------------


def _check_integer_q(q):
    qi = int(round(q))
    if abs(q - qi) > 1e-12 or qi < 2:
        raise NonIntegerQ(f"Potts-side operations need integer q >= 2, got {q}")
    return qi


def exact_potts_distribution(graph, p, q) -> np.ndarray:
    """Potts Gibbs distribution over colorings, with edge weight 1-p on bichromatic edges.

    The coloring sigma is encoded base q by vertex id; returns the q^V vector.
    """
    qi = _check_integer_q(q)
    v = graph.num_vertices
    if qi ** v > (1 << 22):
        raise TooLargeToEnumerate("Potts state space too large")
    size = qi ** v
    states = np.arange(size, dtype=np.int64)
    digits = np.empty((size, v), dtype=np.int8)
    rem = states.copy()
    for i in range(v):
        digits[:, i] = rem % qi
        rem //= qi
    cut = np.zeros(size, dtype=np.int32)
    for a, b in graph.edges:
        cut += (digits[:, int(a)] != digits[:, int(b)]).astype(np.int32)
    w = np.power(1.0 - float(p), cut.astype(np.float64))
    return w / w.sum()


def fk_pushforward_to_potts(model: ExactModel, q=None) -> np.ndarray:
    """Color components uniformly: the exact pushforward of pi onto colorings.

    For each coloring sigma, sums pi(omega) q^(-#comp) over omega contained in
    sigma's monochromatic edge set.  Free boundary conditions only.
    """
    if model.bc is not None and not model.bc.is_free():
        raise FkdynError("pushforward defined for free boundary conditions")
    qi = _check_integer_q(model.q if q is None else q)
    graph = model.graph
    v = graph.num_vertices
    size = qi ** v
    masks = np.arange(model.num_states, dtype=np.uint32)
    contrib = model.pi * np.power(float(qi), -model.comp_counts.astype(np.float64))
    out = np.zeros(size, dtype=np.float64)
    digits = np.empty(v, dtype=np.int64)
    for sigma in range(size):
        rem = sigma
        for i in range(v):
            digits[i] = rem % qi
            rem //= qi
        mono = np.uint32(0)
        for e, (a, b) in enumerate(graph.edges):
            if digits[int(a)] == digits[int(b)]:
                mono |= np.uint32(1 << e)
        sel = (masks & ~mono) == 0
        out[sigma] = contrib[sel].sum()
    return out


def export_json(model: ExactModel, include_transitions: bool = True) -> dict:
    """JSON-ready view of an enumeration for cross-language differential tests.

    Atoms are indexed by their edge bitmask 0..2^|E|-1 and exported as
    parallel arrays; the kernel (when included and within the matrix cap)
    appears as sparse triplets of the row-major nonzeros.  Intended for small
    instances — the atom arrays grow as 2^|E|.
    """
    out = {
        "num_edges": model.num_edges,
        "num_vertices": model.num_nodes,
        "p": model.p,
        "q": model.q,
        "Z": model.Z,
        "atoms": {
            "open_count": model.open_counts.tolist(),
            "comp_count": model.comp_counts.tolist(),
            "weight": model.weights.tolist(),
            "pi": model.pi.tolist(),
        },
    }
    if include_transitions:
        coo = exact_transition_matrix(model).P.tocoo()
        out["P"] = {
            "row": coo.row.tolist(),
            "col": coo.col.tolist(),
            "value": coo.data.tolist(),
        }
    return out
