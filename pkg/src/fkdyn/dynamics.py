"""Heat-bath edge dynamics, monotone couplings, restricted chains, and cluster moves.

A single update touches one edge: given the uniform event (e, u), the edge is
set open iff u < r where r is the conditional probability of e being open
given the rest of the configuration.  That conditional depends only on whether
e's endpoints are connected without e (the bridge status), which the
connectivity engine answers incrementally.

Because r is non-decreasing in the configuration (adding edges can only
destroy bridges), driving several chains with the same (e, u) sequence
preserves edgewise order between ordered starts and ordered boundary
conditions: the grand coupling used throughout the estimators.

Continuous time is simulated as the superposed rate-|E| Poisson process:
exponential(1) jumps scaled by 1/|E| with uniform edge marks, which is
distributionally identical to independent per-edge rate-1 clocks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .connectivity import NaiveEngine, create_engine
from .errors import FkdynError, InitOutsidePhase, NonIntegerQ
from .rng import RandomnessStream

__all__ = [
    "heat_bath_probability",
    "ChainState",
    "make_chain",
    "apply_update",
    "run_discrete",
    "run_continuous",
    "CoupledFamily",
    "make_coupled_family",
    "run_coupled",
    "run_restricted",
    "PottsConfig",
    "swendsen_wang_step",
    "fk_to_potts",
    "potts_to_fk",
    "empirical_transition_counts",
    "run_ensemble_discrete",
    "run_ensemble_continuous",
    "pack_checkpoint",
    "unpack_checkpoint",
]


def heat_bath_probability(p: float, q: float, bridge: bool) -> float:
    """Conditional probability that an edge is open given the rest of ω.

    If the edge is a bridge (its endpoints are connected only through it),
    opening it merges two components and the weight q tilts the odds:
    p / (q(1-p) + p).  Otherwise the conditional is plain p.
    """
    if not (0.0 <= p <= 1.0):
        raise FkdynError(f"p must lie in [0, 1], got {p}")
    if q < 1.0:
        raise FkdynError(f"q must be >= 1, got {q}")
    if bridge:
        return p / (q * (1.0 - p) + p)
    return p


@dataclass
class ChainState:
    """One FK configuration under heat-bath dynamics.

    The connectivity engine owns the configuration; ``time`` accumulates
    continuous time, ``events`` counts processed events (the RNG address of
    the next event when a single stream drives the chain).  ``event_clock``
    is the absolute firing time of the last processed event: jump times are
    cumulative sums over the stream, so advancing a chain in many short
    windows visits exactly the events one long run would.
    """

    geometry: object
    bc: object
    p: float
    q: float
    engine: object
    time: float = 0.0
    events: int = 0
    event_clock: float = 0.0

    @property
    def open_mask(self) -> np.ndarray:
        return self.engine.open_mask.copy()

    @property
    def num_edges(self) -> int:
        return self.geometry.num_edges

    def clone(self) -> "ChainState":
        kind = "naive" if isinstance(self.engine, NaiveEngine) else "fully_dynamic"
        eng = create_engine(self.geometry, self.bc, kind=kind,
                            initial=self.engine.open_mask)
        return ChainState(self.geometry, self.bc, self.p, self.q, eng,
                          self.time, self.events, self.event_clock)


def make_chain(geometry, p, q, bc=None, initial="free", engine="fully_dynamic") -> ChainState:
    """Build a chain from an initial configuration: "free" (∅), "wired" (all
    edges open), or an explicit boolean mask."""
    if not (0.0 <= p <= 1.0):
        raise FkdynError(f"p must lie in [0, 1], got {p}")
    if q < 1.0:
        raise FkdynError(f"q must be >= 1, got {q}")
    m = geometry.num_edges
    if isinstance(initial, str):
        if initial == "free":
            mask = np.zeros(m, dtype=bool)
        elif initial == "wired":
            mask = np.ones(m, dtype=bool)
        else:
            raise FkdynError(f"unknown initial configuration {initial!r}")
    else:
        mask = np.asarray(initial, dtype=bool)
        if mask.shape != (m,):
            raise FkdynError("initial mask has wrong shape")
    eng = create_engine(geometry, bc, kind=engine, initial=mask)
    return ChainState(geometry, bc, float(p), float(q), eng)


def apply_update(chain: ChainState, e: int, u: float) -> bool:
    """One heat-bath update at edge e with threshold u; returns True if ω changed."""
    engine = chain.engine
    p, q = chain.p, chain.q
    if q == 1.0:
        # Bridge status cannot matter at q=1; the refresh is Bernoulli(p).
        want_open = u < p
        if want_open == bool(engine.open_mask[e]):
            return False
        if want_open:
            engine.insert_edge(e)
        else:
            engine.delete_edge(e)
        return True
    if engine.open_mask[e]:
        delta = engine.delete_edge(e)
        bridge = delta == 1
        r = heat_bath_probability(p, q, bridge)
        if u < r:
            engine.insert_edge(e)
            return False
        return True
    a, b = chain.geometry.edges[e]
    bridge = not engine.same_component(int(a), int(b))
    r = heat_bath_probability(p, q, bridge)
    if u < r:
        engine.insert_edge(e)
        return True
    return False


def run_discrete(chain: ChainState, steps: int, stream: RandomnessStream) -> ChainState:
    """Apply ``steps`` uniform-edge updates, consuming one event each."""
    if steps < 0:
        raise FkdynError("steps must be >= 0")
    m = chain.num_edges
    stream.jump_to(chain.events)
    for _ in range(steps):
        e, u, _ = stream.next_event(m)
        apply_update(chain, e, u)
        chain.events += 1
    return chain


def run_continuous(chain: ChainState, horizon: float, stream: RandomnessStream,
                   callback=None) -> ChainState:
    """Run the rate-|E| superposed Poisson dynamics up to continuous time ``horizon``.

    ``callback(chain, e, t, changed)`` fires after every processed event.
    """
    if horizon < 0:
        raise FkdynError("horizon must be >= 0")
    m = chain.num_edges
    stream.jump_to(chain.events)
    end = chain.time + horizon
    while True:
        e, u, w = stream.next_event(m)
        t_next = chain.event_clock + w / m
        if t_next > end:
            break
        chain.event_clock = t_next
        chain.time = t_next
        changed = apply_update(chain, e, u)
        chain.events += 1
        if callback is not None:
            callback(chain, e, t_next, changed)
    chain.time = end
    return chain


# ---------------------------------------------------------------------------
# Grand monotone coupling
# ---------------------------------------------------------------------------


@dataclass
class CoupledFamily:
    """Chains driven by one event stream, with declared dominance pairs.

    ``order`` lists pairs (lo, hi) of chain indices expected to satisfy
    ω_lo ≤ ω_hi edgewise at all times.  ``coupling_time`` is the first time
    all chains agree on every edge (None if not reached).  The disagreement
    trajectory records (time, #edges where some pair disagrees) at every
    change.
    """

    chains: list
    order: list = field(default_factory=list)
    coupling_time: float | None = None
    disagreement_times: list = field(default_factory=list)
    disagreement_counts: list = field(default_factory=list)
    order_violations: int = 0

    def disagreement_count(self) -> int:
        masks = np.stack([c.engine.open_mask for c in self.chains])
        return int((masks.any(axis=0) & ~masks.all(axis=0)).sum())


def _orderable(lo: ChainState, hi: ChainState) -> bool:
    mask_le = not (lo.engine.open_mask & ~hi.engine.open_mask).any()
    if lo.bc is None and hi.bc is None:
        return mask_le
    if lo.bc is None or hi.bc is None:
        return False
    return mask_le and lo.bc <= hi.bc


def make_coupled_family(chains, order=None) -> CoupledFamily:
    """Wrap chains for a shared-stream run; infer dominance pairs when omitted.

    Chain i is expected below chain j when both its initial configuration and
    its boundary condition are below j's.
    """
    chains = list(chains)
    m = chains[0].num_edges
    for c in chains:
        if c.num_edges != m or c.p != chains[0].p or c.q != chains[0].q:
            raise FkdynError("coupled chains must share edge space and parameters")
    if order is None:
        order = [
            (i, j)
            for i in range(len(chains))
            for j in range(len(chains))
            if i != j and _orderable(chains[i], chains[j])
        ]
    fam = CoupledFamily(chains, list(order))
    n0 = fam.disagreement_count()
    fam.disagreement_times.append(0.0)
    fam.disagreement_counts.append(n0)
    if n0 == 0:
        fam.coupling_time = 0.0
    return fam


def run_coupled(family: CoupledFamily, horizon: float, stream: RandomnessStream,
                check_order: bool = True, audit_every: int = 0,
                stop_on_couple: bool = False) -> CoupledFamily:
    """Drive every chain with identical (e, u) events up to ``horizon``.

    Order violations at the updated edge raise immediately when
    ``check_order``; ``audit_every`` > 0 adds periodic full-mask audits.
    The per-edge check is sufficient between audits: configurations only
    change at the updated edge, so order can only break there.
    ``stop_on_couple`` returns as soon as all chains agree (their clocks then
    read the coupling time, not the horizon).
    """
    chains = family.chains
    m = chains[0].num_edges
    base = chains[0]
    stream.jump_to(base.events)
    end = base.time + horizon
    t = base.time
    k = 0
    masks = np.stack([c.engine.open_mask for c in chains])
    disagree_mask = masks.any(axis=0) & ~masks.all(axis=0)
    disagree = int(disagree_mask.sum())
    if stop_on_couple and disagree == 0:
        return family
    while True:
        e, u, w = stream.next_event(m)
        t_next = base.event_clock + w / m
        if t_next > end:
            break
        t = t_next
        for c in chains:
            apply_update(c, e, u)
            c.events += 1
            c.time = t
            c.event_clock = t
        if check_order:
            for lo, hi in family.order:
                if chains[lo].engine.open_mask[e] and not chains[hi].engine.open_mask[e]:
                    family.order_violations += 1
                    raise FkdynError(
                        f"monotone coupling violated at edge {e}: chain {lo} above {hi}"
                    )
        # Only the touched edge can change the disagreement set.
        vals = [c.engine.open_mask[e] for c in chains]
        now = any(vals) and not all(vals)
        if now != disagree_mask[e]:
            disagree_mask[e] = now
            disagree += 1 if now else -1
            family.disagreement_times.append(t)
            family.disagreement_counts.append(disagree)
            if disagree == 0 and family.coupling_time is None:
                family.coupling_time = t
        if stop_on_couple and disagree == 0:
            return family
        k += 1
        if audit_every and k % audit_every == 0:
            for lo, hi in family.order:
                if (chains[lo].engine.open_mask & ~chains[hi].engine.open_mask).any():
                    family.order_violations += 1
                    raise FkdynError(f"full-mask order audit failed for pair ({lo}, {hi})")
    for c in chains:
        c.time = end
    return family


# ---------------------------------------------------------------------------
# Phase-restricted chain
# ---------------------------------------------------------------------------


def _predicate_holds(predicate, chain) -> bool:
    if hasattr(predicate, "holds"):
        return bool(predicate.holds(chain))
    return bool(predicate(chain))


def _predicate_on_boundary(predicate, chain) -> bool:
    if hasattr(predicate, "on_boundary"):
        return bool(predicate.on_boundary(chain))
    # Generic one-flip scan: tentatively flip each edge and test membership.
    engine = chain.engine
    for e in range(chain.num_edges):
        if engine.open_mask[e]:
            engine.delete_edge(e)
            inside = _predicate_holds(predicate, chain)
            engine.insert_edge(e)
        else:
            engine.insert_edge(e)
            inside = _predicate_holds(predicate, chain)
            engine.delete_edge(e)
        if not inside:
            return True
    return False


def run_restricted(chain: ChainState, predicate, horizon: float,
                   stream: RandomnessStream, track_boundary: bool = True,
                   callback=None):
    """Heat-bath dynamics conditioned to stay inside ``predicate``.

    Updates that would leave the region are rejected (the state is kept, the
    event's randomness is still consumed), which is exactly the heat-bath
    chain for the conditioned measure.  Returns (state, exit_attempts,
    hit_boundary_time): the number of rejected moves and the first time the
    state was one flip away from leaving (None if never observed).
    """
    if not _predicate_holds(predicate, chain):
        raise InitOutsidePhase("initial configuration is outside the restriction region")
    m = chain.num_edges
    stream.jump_to(chain.events)
    end = chain.time + horizon
    exit_attempts = 0
    hit_time = None
    if track_boundary and _predicate_on_boundary(predicate, chain):
        hit_time = chain.time
    while True:
        e, u, w = stream.next_event(m)
        t_next = chain.event_clock + w / m
        if t_next > end:
            break
        chain.event_clock = t_next
        chain.time = t_next
        changed = apply_update(chain, e, u)
        chain.events += 1
        if changed and not _predicate_holds(predicate, chain):
            # Revert the flip: rejected exit.
            if chain.engine.open_mask[e]:
                chain.engine.delete_edge(e)
            else:
                chain.engine.insert_edge(e)
            exit_attempts += 1
            changed = False
        if track_boundary and hit_time is None and changed:
            if _predicate_on_boundary(predicate, chain):
                hit_time = chain.time
        if callback is not None:
            callback(chain, e, chain.time, changed)
    chain.time = end
    return chain, exit_attempts, hit_time


# ---------------------------------------------------------------------------
# Swendsen–Wang and the Edwards–Sokal translations
# ---------------------------------------------------------------------------


@dataclass
class PottsConfig:
    """A spin assignment σ : V → {0, .., q-1} on a graph."""

    graph: object
    q: int
    colors: np.ndarray

    def cut_size(self) -> int:
        edges = self.graph.edges
        return int((self.colors[edges[:, 0]] != self.colors[edges[:, 1]]).sum())


def _check_integer_q(q) -> int:
    qi = int(round(float(q)))
    if abs(float(q) - qi) > 1e-12 or qi < 2:
        raise NonIntegerQ(f"spin-side operations need integer q >= 2, got {q}")
    return qi


def _component_reps(graph, open_edges: np.ndarray) -> np.ndarray:
    """Per-vertex representative: the smallest vertex id in its component."""
    parent = np.arange(graph.num_vertices, dtype=np.int64)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in graph.edges[open_edges]:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return np.array([find(v) for v in range(graph.num_vertices)], dtype=np.int64)


def fk_to_potts(chain: ChainState, q, stream: RandomnessStream) -> PottsConfig:
    """Color every component of ω uniformly at random (one draw per vertex;
    a component uses its smallest vertex's draw)."""
    qi = _check_integer_q(q)
    graph = chain.geometry
    if chain.bc is not None and not chain.bc.is_free():
        raise FkdynError("spin translation defined for free boundary conditions")
    reps = _component_reps(graph, chain.engine.open_mask)
    draws = stream.integers(0, graph.num_vertices, qi)
    return PottsConfig(graph, qi, draws[reps].astype(np.int32))


def potts_to_fk(sigma: PottsConfig, p: float, stream: RandomnessStream) -> np.ndarray:
    """Open each monochromatic edge independently with probability p."""
    if not (0.0 <= p <= 1.0):
        raise FkdynError(f"p must lie in [0, 1], got {p}")
    edges = sigma.graph.edges
    mono = sigma.colors[edges[:, 0]] == sigma.colors[edges[:, 1]]
    u = stream.uniforms(0, sigma.graph.num_edges)
    return mono & (u < p)


def swendsen_wang_step(sigma: PottsConfig, p: float, q, stream: RandomnessStream) -> PottsConfig:
    """One cluster move: percolate monochromatic edges at rate p, recolor
    components uniformly.  Consumes |E| uniforms then |V| color draws."""
    qi = _check_integer_q(q)
    if sigma.q != qi:
        raise FkdynError("configuration and step disagree on q")
    open_edges = potts_to_fk(sigma, p, stream.substream("percolate"))
    reps = _component_reps(sigma.graph, open_edges)
    draws = stream.substream("recolor").integers(0, sigma.graph.num_vertices, qi)
    return PottsConfig(sigma.graph, qi, draws[reps].astype(np.int32))


# ---------------------------------------------------------------------------
# Vectorized ensembles on enumerable instances
# ---------------------------------------------------------------------------


def empirical_transition_counts(graph, bc, p, q, samples_per_state: int,
                                stream: RandomnessStream) -> np.ndarray:
    """Empirical one-step kernel: for every state, count sampled transitions.

    Uses the exact bridge table, so it is an independent check of the event
    decoding + update rule against the oracle's matrix, not of the engines.
    """
    from .oracle import MAX_MATRIX_EDGES, bridge_state_table
    from .errors import TooLargeToEnumerate

    m = graph.num_edges
    if m > MAX_MATRIX_EDGES:
        raise TooLargeToEnumerate("empirical kernel needs an enumerable instance")
    bridges = bridge_state_table(graph, bc)
    p_b = heat_bath_probability(p, q, True)
    size = 1 << m
    counts = np.zeros((size, size), dtype=np.int64)
    for s in range(size):
        sub = stream.substream("state", s)
        e, u, _ = sub.events(0, samples_per_state, m)
        r = np.where(bridges[s, e], p_b, p)
        new_open = u < r
        cur_open = (s >> e) & 1
        flip = np.where(new_open != cur_open.astype(bool), np.int64(1) << e, 0)
        targets = s ^ flip
        counts[s] = np.bincount(targets, minlength=size)
    return counts


def _ensemble_update(states, e, u, bridges, p, p_b):
    r = np.where(bridges[states, e], p_b, p)
    new_open = u < r
    cur_open = ((states >> e.astype(np.uint32)) & 1).astype(bool)
    flip = np.where(new_open != cur_open, np.uint32(1) << e.astype(np.uint32), np.uint32(0))
    return states ^ flip


def run_ensemble_discrete(graph, bc, p, q, init_states, replicas: int, steps: int,
                          stream: RandomnessStream, observe=None):
    """Run many independent discrete chains at once on an enumerable instance.

    ``init_states`` is a scalar state or an array of per-replica states.
    Replica r consumes events at indices r*steps .. r*steps+steps-1 of
    ``stream``; the layout is addressable and thread-agnostic.  ``observe``
    (state_vector, step_index) is called after every step when given.
    Returns the final uint32 state vector.
    """
    from .oracle import MAX_MATRIX_EDGES, bridge_state_table
    from .errors import TooLargeToEnumerate

    m = graph.num_edges
    if m > MAX_MATRIX_EDGES:
        raise TooLargeToEnumerate("ensemble runner needs an enumerable instance")
    bridges = bridge_state_table(graph, bc)
    p_b = heat_bath_probability(p, q, True)
    states = np.full(replicas, init_states, dtype=np.uint32) \
        if np.isscalar(init_states) else np.asarray(init_states, dtype=np.uint32).copy()
    base = np.arange(replicas, dtype=np.uint64) * np.uint64(steps)
    for t in range(steps):
        e, u, _ = stream.events_at(base + np.uint64(t), m)
        states = _ensemble_update(states, e, u, bridges, p, p_b)
        if observe is not None:
            observe(states, t)
    return states


def run_ensemble_continuous(graph, bc, p, q, init_states, replicas: int, horizon: float,
                            stream: RandomnessStream, observe=None):
    """Continuous-time ensemble on an enumerable instance.

    Every replica runs its own superposed Poisson clock; event counts differ
    across replicas, so events are consumed replica-major in blocks.
    ``observe`` (states, times, event_index) is called after each synchronous
    event round with per-replica event times (inf once past the horizon).
    Returns (final states, per-replica event counts).
    """
    from .oracle import MAX_MATRIX_EDGES, bridge_state_table
    from .errors import TooLargeToEnumerate

    m = graph.num_edges
    if m > MAX_MATRIX_EDGES:
        raise TooLargeToEnumerate("ensemble runner needs an enumerable instance")
    bridges = bridge_state_table(graph, bc)
    p_b = heat_bath_probability(p, q, True)
    states = np.full(replicas, init_states, dtype=np.uint32) \
        if np.isscalar(init_states) else np.asarray(init_states, dtype=np.uint32).copy()
    times = np.zeros(replicas, dtype=np.float64)
    counts = np.zeros(replicas, dtype=np.int64)
    active = np.ones(replicas, dtype=bool)
    stride = np.uint64(1 << 32)
    base = np.arange(replicas, dtype=np.uint64) * stride
    k = 0
    while active.any():
        e, u, w = stream.events_at(base + np.uint64(k), m)
        t_next = times + w / m
        doing = active & (t_next <= horizon)
        times = np.where(doing, t_next, times)
        active &= t_next <= horizon
        if doing.any():
            upd = _ensemble_update(states[doing], e[doing], u[doing], bridges, p, p_b)
            states[doing] = upd
            counts[doing] += 1
        if observe is not None:
            observe(states, np.where(doing, times, np.inf), k)
        k += 1
        if k >= (1 << 31):
            raise FkdynError("continuous ensemble exceeded the event-index budget")
    return states, counts


_CHECKPOINT_MAGIC = b"FKC1"
_CHECKPOINT_HEADER = struct.Struct("<4sBHBddQQ")
_KIND_CODES = {"box": 0, "torus": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def checkpoint_size(num_edges: int) -> int:
    """Bytes per checkpoint record for a geometry with ``num_edges`` edges."""
    return _CHECKPOINT_HEADER.size + (num_edges + 7) // 8


def pack_checkpoint(chain: ChainState, seed: int = 0) -> bytes:
    """Serialize a chain snapshot to the compact binary layout.

    Layout (little-endian): magic "FKC1", then the header fields d (u8),
    n (u16), kind code (u8: 0 box, 1 torus), p (f64), q (f64), seed (u64),
    event_count (u64), followed by ceil(|E|/8) bytes holding the open mask in
    little-endian bit order by edge index.  The snapshot captures the
    configuration and the event counter — with counter-addressed streams the
    pair (seed, event_count) is the resume point — not the continuous clock.
    """
    geom = chain.geometry
    kind = getattr(geom, "kind", None)
    if kind not in _KIND_CODES:
        raise FkdynError(
            "checkpoints identify geometry by (d, n, kind); only box and "
            f"torus lattices are representable, not {kind!r}")
    header = _CHECKPOINT_HEADER.pack(
        _CHECKPOINT_MAGIC, geom.d, geom.n, _KIND_CODES[kind],
        chain.p, chain.q, seed, chain.events)
    bits = np.packbits(chain.engine.open_mask, bitorder="little").tobytes()
    return header + bits


def unpack_checkpoint(data: bytes, engine: str = "fully_dynamic"):
    """Rebuild (chain, seed) from :func:`pack_checkpoint` bytes.

    The chain comes back with the stored configuration, parameters, and
    event counter; clocks restart at zero (see pack_checkpoint).
    """
    from .lattice import build_geometry

    if len(data) < _CHECKPOINT_HEADER.size:
        raise FkdynError("checkpoint truncated before the header end")
    magic, d, n, kind_code, p, q, seed, events = _CHECKPOINT_HEADER.unpack_from(data)
    if magic != _CHECKPOINT_MAGIC:
        raise FkdynError(f"not a checkpoint (magic {magic!r})")
    if kind_code not in _KIND_NAMES:
        raise FkdynError(f"unknown geometry kind code {kind_code}")
    geom = build_geometry(d, n, _KIND_NAMES[kind_code])
    expected = checkpoint_size(geom.num_edges)
    if len(data) != expected:
        raise FkdynError(
            f"checkpoint is {len(data)} bytes; {expected} expected for "
            f"d={d} n={n} {_KIND_NAMES[kind_code]}")
    packed = np.frombuffer(data, dtype=np.uint8, offset=_CHECKPOINT_HEADER.size)
    mask = np.unpackbits(packed, count=geom.num_edges, bitorder="little").astype(bool)
    chain = make_chain(geom, p, q, bc=None, initial=mask, engine=engine)
    chain.events = int(events)
    return chain, int(seed)
