"""Spatial- and temporal-mixing diagnostics built on the grand coupling.

The workhorse is a coupled pair of chains started from the all-open and
all-closed configurations.  With a shared event stream the pair stays
edgewise ordered, so

  - the probability they disagree at an edge upper-bounds that edge's
    influence gap (the φ functional),
  - the first time they agree everywhere upper-bounds the mixing time,
  - and the top chain at a horizon where most pairs have coalesced is an
    equilibrium sample with a measured bias bound (the not-yet-coupled
    fraction).

TV distances between region marginals are never computed head-on: coupled
disagreement gives upper bounds, per-edge marginal gaps give lower bounds,
and both are labeled as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import make_chain, make_coupled_family, run_coupled, run_continuous, run_restricted
from .errors import BurnInNotConverged, FkdynError, RestrictedSamplerNotMixed
from .lattice import (
    build_geometry,
    central_edges,
    central_vertices,
    edge_ball,
    embed_box_in_torus,
    make_boundary,
    restrict_partition,
)
from .rng import RandomnessStream

__all__ = [
    "DecayFit",
    "fit_decay",
    "PhiEstimate",
    "estimate_phi",
    "CouplingSummary",
    "measure_coupling_time",
    "sample_equilibrium",
    "estimate_wsm",
    "estimate_ssm",
    "estimate_wsm_within_phase",
    "estimate_connectivity_decay",
    "RecurrenceEnvelope",
    "recurrence_envelope",
]


# ---------------------------------------------------------------------------
# Decay fitting
# ---------------------------------------------------------------------------


@dataclass
class DecayFit:
    """Log-linear fit value ≈ exp(intercept - rate * x) over the usable tail.

    Points at or below the noise floor (value <= 10 * stderr) are excluded;
    ``rate`` is NaN when fewer than two usable points remain.
    """

    xs: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    rate: float
    intercept: float
    r2: float
    used: np.ndarray
    label: str = ""


def fit_decay(xs, values, stderrs, label="") -> DecayFit:
    xs = np.asarray(xs, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    stderrs = np.asarray(stderrs, dtype=np.float64)
    used = (values > 10.0 * stderrs) & (values > 0.0)
    if used.sum() < 2:
        return DecayFit(xs, values, stderrs, float("nan"), float("nan"),
                        float("nan"), used, label)
    x = xs[used]
    y = np.log(values[used])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(xs, values, stderrs, float(-slope), float(intercept),
                    r2, used, label)


def _binom_err(frac: float, n: int) -> float:
    return math.sqrt(max(frac * (1.0 - frac), 1.0 / n) / n)


# ---------------------------------------------------------------------------
# φ: single-edge disagreement of the coupled ball pair
# ---------------------------------------------------------------------------


@dataclass
class PhiEstimate:
    e: int
    m: int
    t: float
    estimate: float
    stderr: float
    replicas: int


def estimate_phi(geometry, bc, e, m, t, p, q, replicas, seed) -> PhiEstimate:
    """Disagreement probability at edge e between wired- and free-dressed
    ball chains run for time t under one stream.

    The ball of radius m around e is cut out of the host; the top chain gets
    a fully wired ball boundary and the all-open start, the bottom chain the
    host-induced boundary condition and the all-closed start.  Monotonicity
    makes the disagreement indicator equal to top(e) - bottom(e); the coupled
    driver audits the order at every event.
    """
    ball = edge_ball(geometry, e, m)
    sub = ball.subgeometry()
    local_e = sub.to_local_edge(e)
    bc_top = make_boundary(sub, "wired")
    if bc is not None:
        bc_bot = make_boundary(sub, "induced", classes=restrict_partition(bc, sub))
    else:
        bc_bot = make_boundary(sub, "free")
    root = RandomnessStream(seed, ("phi", int(e), int(m)))
    hits = 0
    for r in range(replicas):
        top = make_chain(sub, p, q, bc=bc_top, initial="wired")
        bot = make_chain(sub, p, q, bc=bc_bot, initial="free")
        fam = make_coupled_family([bot, top], order=[(0, 1)])
        run_coupled(fam, t, root.substream("replica", r))
        if top.engine.open_mask[local_e] != bot.engine.open_mask[local_e]:
            hits += 1
    frac = hits / replicas
    return PhiEstimate(int(e), int(m), float(t), frac, _binom_err(frac, replicas), replicas)


# ---------------------------------------------------------------------------
# Coupling time
# ---------------------------------------------------------------------------


@dataclass
class CouplingSummary:
    """Per-replica coalescence times of the extremal pair, with quantiles.

    ``horizon_exceeded`` counts replicas that never coalesced within the cap
    (reported, not fatal: expected near criticality at large q).
    ``eps_times`` are the first times the disagreement fraction dropped to
    the target, a mixing-time proxy.
    """

    times: np.ndarray
    eps_times: np.ndarray
    replicas: int
    horizon_cap: float
    horizon_exceeded: int
    quantiles: dict = field(default_factory=dict)

    def quantile(self, which: float) -> float:
        finite = self.times[np.isfinite(self.times)]
        if len(finite) == 0:
            return float("nan")
        return float(np.quantile(finite, which))


def measure_coupling_time(geometry, bc, p, q, eps_target, replicas, seed,
                          horizon_cap=200.0) -> CouplingSummary:
    """Coalescence-time distribution of the all-open/all-closed coupled pair."""
    m = geometry.num_edges
    root = RandomnessStream(seed, ("couple-time",))
    times = np.full(replicas, np.inf)
    eps_times = np.full(replicas, np.inf)
    exceeded = 0
    thresh = eps_target * m
    for r in range(replicas):
        top = make_chain(geometry, p, q, bc=bc, initial="wired")
        bot = make_chain(geometry, p, q, bc=bc, initial="free")
        fam = make_coupled_family([bot, top], order=[(0, 1)])
        run_coupled(fam, horizon_cap, root.substream("replica", r), stop_on_couple=True)
        if fam.coupling_time is None:
            exceeded += 1
        else:
            times[r] = fam.coupling_time
        for tt, cc in zip(fam.disagreement_times, fam.disagreement_counts):
            if cc <= thresh:
                eps_times[r] = tt
                break
    summary = CouplingSummary(times, eps_times, replicas, horizon_cap, exceeded)
    finite = times[np.isfinite(times)]
    if len(finite):
        summary.quantiles = {
            "q25": float(np.quantile(finite, 0.25)),
            "median": float(np.quantile(finite, 0.5)),
            "q75": float(np.quantile(finite, 0.75)),
            "max": float(finite.max()),
            "mean": float(finite.mean()),
        }
    return summary


# ---------------------------------------------------------------------------
# Equilibrium sampling via coalescence
# ---------------------------------------------------------------------------


def sample_equilibrium(geometry, bc, p, q, horizon, stream):
    """One approximate stationary sample: top chain at the horizon.

    Runs the extremal coupled pair; once coalesced only one chain continues.
    Returns (open mask at the horizon, coupled flag).  The fraction of
    uncoupled replicas bounds the sampling bias in TV.
    """
    top = make_chain(geometry, p, q, bc=bc, initial="wired")
    bot = make_chain(geometry, p, q, bc=bc, initial="free")
    fam = make_coupled_family([bot, top], order=[(0, 1)])
    run_coupled(fam, horizon, stream, stop_on_couple=True)
    coupled = fam.coupling_time is not None
    if coupled and top.time < horizon:
        run_continuous(top, horizon - top.time, stream)
    return top.open_mask, coupled


def _plateau_horizon(make_pair, stream_of, replicas, stat_fn, t0=4.0, cap_doublings=8,
                     abs_tol=0.0):
    """Double the horizon until the paired statistic stabilizes.

    Runs all replica pairs in parallel time windows [0,T], [T,2T], ...; stops
    when consecutive window statistics agree within max(abs_tol, 3 combined
    stderr).  Returns (families, horizon, history).  Raises
    BurnInNotConverged at the doubling cap.
    """
    fams = [make_pair(r) for r in range(replicas)]
    streams = [stream_of(r) for r in range(replicas)]
    t = 0.0
    window = t0
    prev = None
    history = []
    for _ in range(cap_doublings):
        for fam, st in zip(fams, streams):
            run_coupled(fam, window, st)
        t += window
        vals = np.array([stat_fn(fam) for fam in fams], dtype=np.float64)
        mean = float(vals.mean())
        err = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        history.append((t, mean, err))
        if prev is not None:
            tol = max(abs_tol, 3.0 * math.hypot(err, prev[1]))
            if abs(mean - prev[0]) <= tol:
                return fams, t, history
        prev = (mean, err)
        window = t
    raise BurnInNotConverged(
        f"paired statistic still drifting after {len(history)} doublings: {history}"
    )


# ---------------------------------------------------------------------------
# WSM / SSM / within-phase estimators
# ---------------------------------------------------------------------------


def estimate_wsm(r_grid, p, q, replicas, seed, d=2, host="box") -> DecayFit:
    """Weak-spatial-mixing probe: wired vs free boxes compared on the core.

    For each side r, couples a wired-boundary all-open chain with a
    free-boundary all-closed chain on the side-r box, burns in to a sandwich
    plateau, and reports the probability of any disagreement on the central
    side-r/2 window (a TV upper bound).  Fits an exponential rate in r.
    """
    values, errs = [], []
    root = RandomnessStream(seed, ("wsm", host))
    for r in r_grid:
        if r % 2 or r < 4:
            raise FkdynError(f"r must be even and >= 4, got {r}")
        geom = build_geometry(d, r, host)
        core = central_edges(geom, r // 2)
        bc_top = make_boundary(geom, "wired")
        bc_bot = make_boundary(geom, "free")

        def make_pair(i):
            top = make_chain(geom, p, q, bc=bc_top, initial="wired")
            bot = make_chain(geom, p, q, bc=bc_bot, initial="free")
            return make_coupled_family([bot, top], order=[(0, 1)])

        def stat(fam):
            lo, hi = fam.chains
            return float((lo.engine.open_mask[core] != hi.engine.open_mask[core]).any())

        fams, _, _ = _plateau_horizon(
            make_pair, lambda i, _r=r: root.substream("r", _r, "replica", i),
            replicas, stat, abs_tol=2.0 / replicas)
        vals = np.array([stat(f) for f in fams])
        frac = float(vals.mean())
        values.append(frac)
        errs.append(_binom_err(frac, replicas))
    return fit_decay(np.asarray(r_grid, dtype=float), values, errs, label="wsm-upper")


def estimate_ssm(n, bc_kind, m_grid, p, q, replicas, seed, d=2,
                 edges_per_m=4) -> DecayFit:
    """Strong-spatial-mixing probe on a side-n box with boundary ``bc_kind``.

    For each radius m, takes a sample of host edges, builds the radius-m ball
    around each, couples wired-dressed/free-dressed ball chains to a plateau,
    and records the worst probability of disagreement on the radius-m/2
    inner ball.  Fits an exponential rate in m.
    """
    geom = build_geometry(d, n, "box")
    bc = make_boundary(geom, bc_kind) if isinstance(bc_kind, str) else bc_kind
    root = RandomnessStream(seed, ("ssm", n))
    picks = root.substream("edges").integers(0, edges_per_m, geom.num_edges)
    values, errs = [], []
    for m in m_grid:
        if m > n / 2:
            raise FkdynError(f"m must be <= n/2, got m={m}, n={n}")
        worst, worst_err = 0.0, 0.0
        for j, e in enumerate(picks):
            e = int(e)
            ball = edge_ball(geom, e, int(m))
            sub = ball.subgeometry()
            inner = edge_ball(geom, e, max(1, int(m) // 2))
            inner_local = np.array([sub.to_local_edge(int(h)) for h in inner.edge_ids],
                                   dtype=np.int64)
            bc_top = make_boundary(sub, "wired")
            bc_bot = make_boundary(sub, "induced", classes=restrict_partition(bc, sub))

            def make_pair(i):
                top = make_chain(sub, p, q, bc=bc_top, initial="wired")
                bot = make_chain(sub, p, q, bc=bc_bot, initial="free")
                return make_coupled_family([bot, top], order=[(0, 1)])

            def stat(fam):
                lo, hi = fam.chains
                return float((lo.engine.open_mask[inner_local]
                              != hi.engine.open_mask[inner_local]).any())

            fams, _, _ = _plateau_horizon(
                make_pair,
                lambda i, _m=int(m), _j=j: root.substream("m", _m, "edge", _j, "replica", i),
                replicas, stat, abs_tol=2.0 / replicas)
            vals = np.array([stat(f) for f in fams])
            frac = float(vals.mean())
            if frac >= worst:
                worst, worst_err = frac, _binom_err(frac, replicas)
        values.append(worst)
        errs.append(worst_err)
    return fit_decay(np.asarray(m_grid, dtype=float), values, errs, label="ssm-upper")


def _edge_frequencies(masks: np.ndarray, edge_ids: np.ndarray):
    sel = masks[:, edge_ids].astype(np.float64)
    return sel.mean(axis=0), sel


def estimate_wsm_within_phase(r_grid, n, p, q, phase, replicas, seed, d=2,
                              eps=0.25, restricted_horizon=None,
                              box_horizon=64.0) -> DecayFit:
    """Wired-box marginals vs the phase-restricted torus chain, on the core.

    For each r the wired side-r box sampler and the restricted side-n torus
    sampler are compared through per-edge open frequencies and adjacent-pair
    joint frequencies on the central window of side r/2 (at least 2, so the
    window always holds an edge; box edges mapped onto torus edges by the
    standard embedding).  The reported value is the
    largest marginal gap: a TV lower-bound diagnostic.  A split-half
    agreement test across replica halves guards against an unmixed
    restricted sampler.
    """
    from .phases import FreePhase, PhaseSpec, WiredPhase

    if phase not in ("wired", "free"):
        raise FkdynError(f"phase must be 'wired' or 'free', got {phase!r}")
    wired_side = phase == "wired"
    torus = build_geometry(d, n, "torus")
    spec = PhaseSpec(torus, eps)
    predicate = WiredPhase(spec) if wired_side else FreePhase(spec)
    root = RandomnessStream(seed, ("wsm-phase", phase, n))
    if restricted_horizon is None:
        restricted_horizon = 16.0 * (1 + math.log(max(2, n)))

    torus_masks = []
    for rep in range(replicas):
        chain = make_chain(torus, p, q, initial="wired" if wired_side else "free")
        run_restricted(chain, predicate, restricted_horizon,
                       root.substream("restricted", rep), track_boundary=False)
        torus_masks.append(chain.open_mask)
    torus_masks = np.stack(torus_masks)

    values, errs = [], []
    for r in r_grid:
        if not 2 <= r <= n // 2:
            raise FkdynError(f"r must lie in [2, n/2], got r={r}, n={n}")
        box = build_geometry(d, int(r), "box")
        bc_box = make_boundary(box, "wired" if wired_side else "free")
        vmap, emap = embed_box_in_torus(box, torus, offset=(0,) * d)
        core_box = central_edges(box, max(2, int(r) // 2))
        core_torus = emap[core_box]

        box_masks = []
        uncoupled = 0
        for rep in range(replicas):
            mask, coupled = sample_equilibrium(
                box, bc_box, p, q, box_horizon,
                root.substream("box", int(r), rep))
            uncoupled += not coupled
            box_masks.append(mask)
        box_masks = np.stack(box_masks)

        f_box, sel_box = _edge_frequencies(box_masks, core_box)
        f_tor, sel_tor = _edge_frequencies(torus_masks, core_torus)
        gaps = np.abs(f_box - f_tor)
        # Adjacent-pair joint frequencies on the first few core edges.
        for i in range(min(4, len(core_box) - 1)):
            jb = (sel_box[:, i] * sel_box[:, i + 1]).mean()
            jt = (sel_tor[:, i] * sel_tor[:, i + 1]).mean()
            gaps = np.append(gaps, abs(jb - jt))
        gap = float(gaps.max())
        err = math.sqrt(2.0) * _binom_err(0.5, replicas) + uncoupled / replicas

        half = replicas // 2
        split_gap = float(np.abs(sel_tor[:half].mean(axis=0)
                                 - sel_tor[half:].mean(axis=0)).max())
        split_tol = 3.0 * math.sqrt(2.0) * _binom_err(0.5, half)
        if split_gap > split_tol:
            raise RestrictedSamplerNotMixed(
                f"split-half torus marginals differ by {split_gap:.4f} (> {split_tol:.4f})"
            )
        values.append(gap)
        errs.append(err)
    return fit_decay(np.asarray(r_grid, dtype=float), values, errs,
                     label=f"wsm-within-{phase}-lower")


# ---------------------------------------------------------------------------
# Annulus-crossing connectivity probes
# ---------------------------------------------------------------------------


def _ring_vertices(geom, side: int) -> np.ndarray:
    """Vertices of the central side-``side`` subbox that touch its outside."""
    inner = set(int(v) for v in central_vertices(geom, side))
    ring = []
    for v in inner:
        if any(w not in inner for w in geom.neighbors(v)):
            ring.append(v)
    return np.array(sorted(ring), dtype=np.int64)


def _outer_ring(geom) -> np.ndarray:
    return np.array([v for v in range(geom.num_vertices)
                     if geom.is_boundary_vertex(v)], dtype=np.int64)


def open_crossing(geom, mask: np.ndarray, inner: np.ndarray, outer: np.ndarray) -> bool:
    """Is some inner-ring vertex joined to the outer ring by open edges?"""
    parent = np.arange(geom.num_vertices, dtype=np.int64)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in np.flatnonzero(mask):
        a, b = geom.edges[int(e)]
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    inner_roots = {find(int(v)) for v in inner}
    return any(find(int(v)) in inner_roots for v in outer)


def _edge_face_incidence(geom):
    faces = geom.plaquettes()
    edge_faces = [[] for _ in range(geom.num_edges)]
    for f, row in enumerate(faces):
        for e in row:
            edge_faces[int(e)].append(f)
    return faces, edge_faces


def closed_crossing(geom, mask: np.ndarray, inner: np.ndarray, outer: np.ndarray,
                    faces=None, edge_faces=None) -> bool:
    """Annulus crossing through closed edges under co-face adjacency.

    Two closed edges are adjacent when they lie on a common square face (the
    dual cells of the edges then share a codimension-2 cell; in the plane
    this is exactly dual-lattice adjacency).  The crossing runs from a closed
    edge touching the inner ring to one touching the outer ring.
    """
    if faces is None or edge_faces is None:
        faces, edge_faces = _edge_face_incidence(geom)
    closed = ~np.asarray(mask, dtype=bool)
    inner_set = set(int(v) for v in inner)
    outer_set = set(int(v) for v in outer)

    seeds = []
    targets = set()
    for e in np.flatnonzero(closed):
        a, b = (int(x) for x in geom.edges[int(e)])
        if a in inner_set or b in inner_set:
            seeds.append(int(e))
        if a in outer_set or b in outer_set:
            targets.add(int(e))
    if not seeds or not targets:
        return False
    seen = np.zeros(geom.num_edges, dtype=bool)
    stack = list(seeds)
    for e in seeds:
        seen[e] = True
    while stack:
        e = stack.pop()
        if e in targets:
            return True
        for f in edge_faces[e]:
            for h in faces[f]:
                h = int(h)
                if closed[h] and not seen[h]:
                    seen[h] = True
                    stack.append(h)
    return False


def estimate_connectivity_decay(kind, d, m_grid, p, q, replicas, seed,
                                bc_kind=None, horizon=64.0) -> DecayFit:
    """Annulus-crossing probability under the boxed measure, fitted in m.

    kind="ord": open crossing from the side-m/2 core ring to the box
    boundary, sampled under the wired-boundary measure.  kind="dis": closed
    co-face crossing under the free-boundary measure.  Each replica is an
    independent coalescence-based equilibrium sample.
    """
    if kind not in ("ord", "dis"):
        raise FkdynError(f"kind must be 'ord' or 'dis', got {kind!r}")
    if bc_kind is None:
        bc_kind = "wired" if kind == "ord" else "free"
    root = RandomnessStream(seed, ("connect", kind))
    values, errs = [], []
    for m in m_grid:
        geom = build_geometry(d, int(m), "box")
        bc = make_boundary(geom, bc_kind)
        inner = _ring_vertices(geom, max(1, int(m) // 2))
        outer = _outer_ring(geom)
        faces, edge_faces = (None, None)
        if kind == "dis":
            faces, edge_faces = _edge_face_incidence(geom)
        hits = 0
        for rep in range(replicas):
            mask, _ = sample_equilibrium(geom, bc, p, q, horizon,
                                         root.substream("m", int(m), rep))
            if kind == "ord":
                hits += open_crossing(geom, mask, inner, outer)
            else:
                hits += closed_crossing(geom, mask, inner, outer, faces, edge_faces)
        frac = hits / replicas
        values.append(frac)
        errs.append(_binom_err(frac, replicas))
    return fit_decay(np.asarray(m_grid, dtype=float), values, errs,
                     label=f"connectivity-{kind}")


# ---------------------------------------------------------------------------
# Doubling-recurrence envelope (pure numerics)
# ---------------------------------------------------------------------------


@dataclass
class RecurrenceEnvelope:
    """Iterated doubling bound a_{2k} <= d (2r)^d a_k^2 + exp(-r / c_star).

    r = min(c0 * ln(1/a_k), k); the sequence is clamped non-increasing, which
    is part of the hypothesis the bound is derived under.  ``threshold`` is
    the largest start value for which the bound strictly improves on a_k
    (above it the envelope can stall: ``no_contraction``).
    ``strict_threshold`` is where the much stronger step bound
    a_{2k} <= a_k^{1.99} kicks in; for typical parameters it sits below
    float resolution and is reported as 0.  ``holds`` says whether the
    fitted C e^{-k/C} envelope dominates every iterate.
    """

    d: int
    c_star: float
    c0: float
    k0: int
    eps0: float
    ks: np.ndarray
    a: np.ndarray
    contracted: np.ndarray
    threshold: float
    strict_threshold: float
    no_contraction: bool
    fit_c: float
    holds: bool
    fit: DecayFit


def _largest_stable_start(d, c_star, c0, strict: bool) -> float:
    """Largest a with the step bound below a (or below a^1.99 when strict)
    for every smaller start; r is the uncapped c0 * ln(1/a)."""
    grid = np.logspace(-305, math.log10(0.49), 12000)
    with np.errstate(divide="ignore", over="ignore"):
        r = c0 * -np.log(grid)
        lhs = d * (2.0 * r) ** d * grid ** 2 + np.exp(-r / c_star)
        ok = lhs < (grid ** 1.99 if strict else grid)
    below_ok = np.logical_and.accumulate(ok)
    if not below_ok.any():
        return 0.0
    return float(grid[np.flatnonzero(below_ok).max()])


def recurrence_envelope(d, c_star, k0, eps0, k_max, c0=None) -> RecurrenceEnvelope:
    """Iterate the doubling self-bound and report contraction diagnostics.

    The default c0 = 1.5 * c_star keeps the additive tail strictly smaller
    than the current value (exponent c0/c_star > 1) without inflating the
    polylogarithmic prefactor to the point of stalling.
    """
    if not (0.0 < eps0 < 0.5):
        raise FkdynError("eps0 must lie in (0, 1/2)")
    if k0 < 1:
        raise FkdynError("k0 must be >= 1")
    if c0 is None:
        c0 = 1.5 * c_star
    ks = [k0]
    a = [eps0]
    contracted = []
    k = k0
    while 2 * k <= k_max:
        ak = a[-1]
        r = min(c0 * -math.log(ak), float(k)) if ak > 0 else float(k)
        bound = d * (2.0 * r) ** d * ak * ak + math.exp(-r / c_star)
        nxt = min(ak, bound)
        contracted.append(bound <= ak ** 1.99)
        k *= 2
        ks.append(k)
        a.append(nxt)
    ks = np.array(ks, dtype=np.int64)
    a = np.array(a, dtype=np.float64)
    threshold = _largest_stable_start(d, c_star, c0, strict=False)
    strict_threshold = _largest_stable_start(d, c_star, c0, strict=True)
    fit = fit_decay(ks.astype(float), a, np.zeros_like(a), label="envelope")
    # A stalled sequence fits a slope of order float noise; require a real
    # decay rate before certifying the envelope.
    if math.isnan(fit.rate) or fit.rate <= 1e-9:
        fit_c, holds = float("nan"), False
    else:
        fit_c = 1.0 / fit.rate
        holds = bool(np.all(a <= fit_c * np.exp(-ks / fit_c) + 1e-12))
    return RecurrenceEnvelope(d, float(c_star), float(c0), int(k0), float(eps0),
                              ks, a, np.array(contracted, dtype=bool),
                              threshold, strict_threshold, eps0 > threshold,
                              fit_c, holds, fit)
