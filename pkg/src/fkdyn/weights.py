"""Phase-weight learning near criticality.

An annealing schedule walks the edge probability from a closed-form anchor
(p=0 for the free phase, p=1 for the wired phase) to the target value in
steps no wider than n^-d.  Each step's partition-function ratio is the mean
of an explicitly bounded weight ratio under the phase-restricted chain, the
log-ratios telescope onto the anchor, and the two directions combine into
the wired-phase mass m* = Z_wired / (Z_wired + Z_free) in log domain.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, logit

from .dynamics import make_chain, run_continuous, run_restricted
from .errors import AnchorStepZeroP, FkdynError
from .lattice import LatticeGeometry
from .phases import FreePhase, PhaseSpec, WiredPhase
from .rng import RandomnessStream

__all__ = [
    "Direction",
    "AnnealSchedule",
    "build_schedule",
    "refine_schedule",
    "anchor_partition",
    "RestrictedSamplerConfig",
    "RatioEstimate",
    "estimate_ratio",
    "anchor_step_ratio",
    "PhaseWeights",
    "learn_weights",
    "sample_random_phase_init",
    "ledger_rows",
    "summary_dict",
]

_GRID_TOL = 1e-12


class Direction(enum.Enum):
    """Anneal orientation: which anchor the schedule grows from."""

    FREE_UP = "FreeUp"      # p: 0 -> target, free-phase restriction, start at 0
    WIRED_DOWN = "WiredDown"  # p: 1 -> target, wired-phase restriction, start at 1


@dataclass(frozen=True)
class AnnealSchedule:
    """A strictly monotone p-grid plus the per-step sampling effort.

    ``grid[0]`` is the anchor, ``grid[-1]`` the target.  Steps are 1-indexed:
    step i moves p from ``grid[i-1]`` to ``grid[i]``.  ``max_spacing`` is the
    admissible step width (n^-d for lattice-built schedules); ``horizon_cap``
    bounds the equilibration time any single step may spend.
    """

    direction: Direction
    grid: tuple
    target: float
    max_spacing: float
    replicas: int = 16
    samples_per_replica: int = 24
    sample_spacing: float = 0.5
    equilibration: float = 2.0
    horizon_cap: float = 64.0
    anchor_boost: int = 8

    def __post_init__(self):
        grid = tuple(float(p) for p in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            raise FkdynError("schedule grid is empty")
        for p in grid:
            if not 0.0 <= p <= 1.0:
                raise FkdynError(f"grid value {p} outside [0, 1]")
        if abs(grid[-1] - self.target) > _GRID_TOL:
            raise FkdynError("schedule grid must end exactly at the target")
        diffs = np.diff(grid)
        sign = 1.0 if self.direction is Direction.FREE_UP else -1.0
        if len(grid) > 1 and not np.all(sign * diffs > 0):
            raise FkdynError("schedule grid must be strictly monotone toward the target")
        if np.abs(diffs).max(initial=0.0) > self.max_spacing + _GRID_TOL:
            raise FkdynError("schedule grid violates the maximal step spacing")
        if self.replicas < 2:
            raise FkdynError("need at least two replicas for a stderr")
        if self.samples_per_replica < 1 or self.anchor_boost < 1:
            raise FkdynError("sample counts must be positive")
        if self.sample_spacing <= 0 or self.equilibration <= 0 or self.horizon_cap <= 0:
            raise FkdynError("time parameters must be positive")

    @property
    def num_steps(self) -> int:
        return len(self.grid) - 1

    def step_bounds(self, i: int):
        if not 1 <= i <= self.num_steps:
            raise FkdynError(f"step index {i} outside 1..{self.num_steps}")
        return self.grid[i - 1], self.grid[i]


def build_schedule(n: int, d: int, target: float, direction: Direction,
                   **overrides) -> AnnealSchedule:
    """Uniform anneal grid from the direction's anchor to ``target``.

    The step count is the smallest K keeping every step at most n^-d wide
    (K = ceil(span * n^d)), with both endpoints exact.  ``overrides`` are
    forwarded to :class:`AnnealSchedule` (replica counts, horizons, ...);
    the default equilibration cap is exp(C (log n)^(d-1)) with C = 1.
    """
    if not 0.0 <= target <= 1.0:
        raise FkdynError(f"target {target} outside [0, 1]")
    if n < 1 or d < 1:
        raise FkdynError("need n >= 1 and d >= 1")
    anchor = 0.0 if direction is Direction.FREE_UP else 1.0
    span = abs(target - anchor)
    k = int(math.ceil(span * n ** d - _GRID_TOL))
    grid = np.linspace(anchor, target, k + 1)
    grid[0], grid[-1] = anchor, target
    c_horizon = overrides.pop("c_horizon", 1.0)
    overrides.setdefault(
        "horizon_cap", math.exp(c_horizon * math.log(max(n, 2)) ** (d - 1)))
    return AnnealSchedule(direction=direction, grid=tuple(grid), target=float(target),
                          max_spacing=float(n) ** (-d), **overrides)


def _occupancy_spread(ps: np.ndarray, q: float, m: int) -> np.ndarray:
    """Spread of the open-edge count, sqrt(M rho (1-rho)), at single-edge
    occupancy rho = p / (p + q(1-p)).  The same expression bounds the
    closed-count spread, so both directions share it."""
    return np.sqrt(m * ps * q * (1.0 - ps)) / (ps + q * (1.0 - ps))


def refine_schedule(schedule: AnnealSchedule, geometry, q: float,
                    *, max_log_sd: float = 0.25) -> AnnealSchedule:
    """Subdivide schedule steps until every step's weight spread is tame.

    Up to a constant, a step's per-sample log weight-ratio is the open count
    times the logit increment of p, so its spread is about the occupancy
    spread times |logit(p_next) - logit(p_prev)|.  Each step is split on an
    equal-spread grid in logit space until every piece stays below
    ``max_log_sd``; wide steps would otherwise hide their heavy right tail
    and bias the mean low.  A degenerate anchor additionally gets its first
    interior point pulled toward the anchor until the anchor configuration
    expects about one flipped edge there, keeping its revisit frequency
    observable.  Only points are added, so the spacing bound still holds.
    """
    if q < 1:
        raise FkdynError(f"q must be >= 1, got {q}")
    if max_log_sd <= 0:
        raise FkdynError("max_log_sd must be positive")
    if schedule.num_steps == 0:
        return schedule
    m = geometry.num_edges
    pts = list(schedule.grid)
    if _is_degenerate_anchor(pts[0]):
        if schedule.direction is Direction.FREE_UP:
            p_star = q / (m - 1 + q)
            if 0.0 < p_star < pts[1]:
                pts.insert(1, p_star)
        else:
            p_star = 1.0 - 1.0 / (q * (m - 1) + 1.0)
            if pts[1] < p_star < 1.0:
                pts.insert(1, p_star)
    refined = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        if _is_degenerate_anchor(a) or _is_degenerate_anchor(b):
            refined.append(b)
            continue
        ts = np.linspace(logit(a), logit(b), 129)
        spread = _occupancy_spread(expit(ts), q, m)
        seg = 0.5 * (spread[1:] + spread[:-1]) * np.abs(np.diff(ts))
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        pieces = max(1, int(math.ceil(cum[-1] / max_log_sd - _GRID_TOL)))
        if pieces > 1:
            marks = np.linspace(0.0, cum[-1], pieces + 1)[1:-1]
            refined.extend(float(p) for p in expit(np.interp(marks, cum, ts)))
        refined.append(b)
    return replace(schedule, grid=tuple(refined))


def anchor_partition(geometry, q: float, direction: Direction) -> float:
    """log of the restricted partition function at the schedule's anchor.

    At p=0 only the empty configuration carries weight: q^N over N vertices.
    At p=1 only the full configuration does: a single component on a
    connected host, so log q.
    """
    if q < 1:
        raise FkdynError(f"q must be >= 1, got {q}")
    if direction is Direction.FREE_UP:
        return geometry.num_vertices * math.log(q)
    parent = np.arange(geometry.num_vertices)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in geometry.edges:
        parent[find(int(a))] = find(int(b))
    roots = {find(v) for v in range(geometry.num_vertices)}
    if len(roots) != 1:
        raise FkdynError("the all-open anchor needs a connected host graph")
    return math.log(q)


@dataclass(frozen=True)
class RestrictedSamplerConfig:
    """How ratio steps draw their samples.

    ``eps`` sets the phase threshold (largest component >= ceil(eps N) is
    wired); ``restrict=False`` drops the phase restriction and samples the
    unconditioned dynamics (useful on instances whose phase split
    degenerates).  Chains use the free boundary of their geometry.
    """

    geometry: object
    q: float
    eps: float = 0.25
    seed: int = 0
    engine: str = "fully_dynamic"
    restrict: bool = True
    stream_label: str = "ratio"

    def predicate(self, direction: Direction):
        if not self.restrict:
            return None
        spec = PhaseSpec(self.geometry, self.eps)
        return FreePhase(spec) if direction is Direction.FREE_UP else WiredPhase(spec)


@dataclass(frozen=True)
class RatioEstimate:
    """One telescoping step: the partition-ratio mean and its spread.

    ``ratio`` estimates Z(p_next)/Z(p_prev) for the direction's restricted
    ensemble; ``bound`` is the algebraic range limit of the per-sample weight
    ratio (attained at an all-closed or all-open configuration), so any
    estimate must land in (0, bound].
    """

    step: int
    p_prev: float
    p_next: float
    ratio: float
    stderr: float
    samples: int
    horizon_used: float
    bound: float

    @property
    def log_ratio(self) -> float:
        return math.log(self.ratio)


def _weight_ratio(k: int, m: int, p_from: float, p_to: float) -> float:
    """W_{p_to}(w) / W_{p_from}(w) for a configuration with k open edges.

    The component factor cancels at fixed w, leaving pure Bernoulli algebra.
    """

    def pow_ratio(num, den, exponent):
        if exponent == 0:
            return 1.0
        if num == 0.0:
            return 0.0
        if den == 0.0:
            return math.inf
        return math.exp(exponent * math.log(num / den))

    return pow_ratio(p_to, p_from, k) * pow_ratio(1.0 - p_to, 1.0 - p_from, m - k)


def _ratio_bound(m: int, p_from: float, p_to: float) -> float:
    """Largest per-sample weight ratio (monotone in k, so an endpoint)."""
    return max(_weight_ratio(0, m, p_from, p_to), _weight_ratio(m, m, p_from, p_to))


def _advance(chain, predicate, horizon: float, stream) -> None:
    if predicate is None:
        run_continuous(chain, horizon, stream)
    else:
        run_restricted(chain, predicate, horizon, stream, track_boundary=False)


class _ReplicaSet:
    """Persistent replica chains carried across schedule steps."""

    def __init__(self, schedule: AnnealSchedule, cfg: RestrictedSamplerConfig,
                 p: float, stream_key):
        initial = "free" if schedule.direction is Direction.FREE_UP else "wired"
        self.predicate = cfg.predicate(schedule.direction)
        root = RandomnessStream(cfg.seed, stream_key)
        self.streams = root.spawn_replicas(schedule.replicas)
        self.chains = [
            make_chain(cfg.geometry, p, cfg.q, bc=None, initial=initial,
                       engine=cfg.engine)
            for _ in range(schedule.replicas)
        ]
        self.equilibrated = False

    def retune(self, p: float) -> None:
        for c in self.chains:
            c.p = p

    def run_all(self, horizon: float) -> None:
        for c, st in zip(self.chains, self.streams):
            _advance(c, self.predicate, horizon, st)

    def open_counts(self) -> np.ndarray:
        return np.array([int(c.engine.open_mask.sum()) for c in self.chains])

    def equilibrate(self, schedule: AnnealSchedule) -> float:
        """Adaptive burn-in: doubling windows until the replica-mean open
        count stops drifting, capped by the schedule horizon.  Warm replicas
        (already equilibrated at a neighbouring p) take a single window."""
        if self.equilibrated:
            self.run_all(schedule.equilibration)
            return schedule.equilibration
        window, total = schedule.equilibration, 0.0
        prev = None
        while True:
            self.run_all(window)
            total += window
            counts = self.open_counts()
            stat = counts.mean()
            se = counts.std(ddof=1) / math.sqrt(len(counts))
            if prev is not None:
                drift_tol = 3.0 * math.hypot(se, prev[1]) + 1e-9
                if abs(stat - prev[0]) <= drift_tol:
                    break
            prev = (stat, se)
            if total + 2 * window > schedule.horizon_cap:
                break
            window *= 2
        self.equilibrated = True
        return total

    def collect(self, samples: int, spacing: float, value_of) -> tuple:
        """Per-replica means of ``value_of(open_count)`` over spaced samples."""
        means = []
        for c, st in zip(self.chains, self.streams):
            vals = []
            for _ in range(samples):
                _advance(c, self.predicate, spacing, st)
                vals.append(value_of(int(c.engine.open_mask.sum())))
            means.append(float(np.mean(vals)))
        arr = np.array(means)
        return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(len(arr)))


def _forward_step(i: int, schedule: AnnealSchedule, cfg: RestrictedSamplerConfig,
                  replicas: _ReplicaSet | None):
    p_prev, p_next = schedule.step_bounds(i)
    m = cfg.geometry.num_edges
    if replicas is None:
        replicas = _ReplicaSet(schedule, cfg, p_prev,
                               (cfg.stream_label, schedule.direction.value, "step", i))
    else:
        replicas.retune(p_prev)
    used = replicas.equilibrate(schedule)
    mean, se = replicas.collect(
        schedule.samples_per_replica, schedule.sample_spacing,
        lambda k: _weight_ratio(k, m, p_prev, p_next))
    n_samples = schedule.replicas * schedule.samples_per_replica
    used += schedule.samples_per_replica * schedule.sample_spacing
    est = RatioEstimate(step=i, p_prev=p_prev, p_next=p_next, ratio=mean,
                        stderr=se, samples=n_samples, horizon_used=used,
                        bound=_ratio_bound(m, p_prev, p_next))
    return est, replicas


def _anchor_step(schedule: AnnealSchedule, cfg: RestrictedSamplerConfig):
    """Step 1 out of a zero-weight anchor, sampled at the first interior p.

    The restricted measure at the anchor is a point mass whose weight ratio
    into the anchor is explicit, so the step ratio is that closed form
    divided by the empirical frequency of the anchor configuration under the
    chain at p^(1) — a bounded-ratio estimate in the well-defined direction.
    """
    p0, p1 = schedule.step_bounds(1)
    m = cfg.geometry.num_edges
    replicas = _ReplicaSet(schedule, cfg, p1,
                           (cfg.stream_label, schedule.direction.value, "anchor"))
    used = replicas.equilibrate(schedule)
    if schedule.direction is Direction.FREE_UP:
        target_k, log_base = 0, m * math.log1p(-p1)
    else:
        target_k, log_base = m, m * math.log(p1)
    samples = schedule.samples_per_replica * schedule.anchor_boost
    freq, se_freq = replicas.collect(
        samples, schedule.sample_spacing,
        lambda k: 1.0 if k == target_k else 0.0)
    if freq <= 0.0:
        raise FkdynError(
            "the anchor configuration was never revisited; refine the schedule "
            "near the anchor or raise the sample budget")
    base = math.exp(log_base)
    est = RatioEstimate(step=1, p_prev=p0, p_next=p1, ratio=base / freq,
                        stderr=base * se_freq / freq ** 2,
                        samples=schedule.replicas * samples,
                        horizon_used=used + samples * schedule.sample_spacing,
                        bound=_ratio_bound(m, p0, p1))
    return est, replicas


def _is_degenerate_anchor(p: float) -> bool:
    return p in (0.0, 1.0)


def estimate_ratio(i: int, schedule: AnnealSchedule,
                   config: RestrictedSamplerConfig) -> RatioEstimate:
    """Estimate Z(p^(i)) / Z(p^(i-1)) for one schedule step.

    Replicas start from the direction's extreme configuration, equilibrate at
    p^(i-1), and average the per-sample weight ratio, whose component factor
    cancels.  The returned stderr is across independent replicas.

    Raises AnchorStepZeroP for step 1 of a grid anchored at p=0 or p=1: the
    weight ratio out of a zero-weight anchor is unbounded, so that step must
    go through :func:`anchor_step_ratio` instead.
    """
    if i == 1 and _is_degenerate_anchor(schedule.grid[0]):
        raise AnchorStepZeroP(
            "step 1 leaves a point-mass anchor (p=0 or p=1) where the forward "
            "weight ratio is unbounded; use anchor_step_ratio for this step")
    est, _ = _forward_step(i, schedule, config, None)
    return est


def anchor_step_ratio(schedule: AnnealSchedule,
                      config: RestrictedSamplerConfig) -> RatioEstimate:
    """The first schedule step out of a p=0 or p=1 anchor (see _anchor_step)."""
    if not _is_degenerate_anchor(schedule.grid[0]):
        raise FkdynError("the schedule anchor is interior; use estimate_ratio")
    if schedule.num_steps < 1:
        raise FkdynError("the schedule has no steps")
    est, _ = _anchor_step(schedule, config)
    return est


@dataclass(frozen=True)
class PhaseWeights:
    """Learned log-weights of the two phases and their combination.

    ``m_star`` is the wired-phase mass Z_wired / (Z_wired + Z_free) assembled
    by log-sum-exp; ``stderr`` propagates the per-step ratio errors by the
    delta method.  When the budget ran out mid-schedule the completed step
    rows are kept, the affected totals are NaN, and ``budget_exhausted`` is
    set.
    """

    log_wired_weight: float
    log_free_weight: float
    m_star: float
    stderr: float
    target_p: float
    q: float
    seed: int
    free_steps: tuple = ()
    wired_steps: tuple = ()
    budget_exhausted: bool = False


def _mixture_mass(log_wired: float, log_free: float) -> float:
    if math.isnan(log_wired) or math.isnan(log_free):
        return float("nan")
    if log_free == -math.inf:
        return 1.0
    if log_wired == -math.inf:
        return 0.0
    z = log_wired - log_free
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _log_var(steps) -> float:
    return float(sum((s.stderr / s.ratio) ** 2 for s in steps))


def _run_direction(schedule: AnnealSchedule, cfg: RestrictedSamplerConfig,
                   deadline) :
    """All ratio steps of one direction, warm-starting replicas across steps.

    Returns (steps, complete): on a blown deadline the remaining steps are
    left unestimated and ``complete`` is False.
    """
    steps, replicas = [], None
    for i in range(1, schedule.num_steps + 1):
        if deadline is not None and time.monotonic() > deadline:
            return tuple(steps), False
        if i == 1 and _is_degenerate_anchor(schedule.grid[0]):
            est, replicas = _anchor_step(schedule, cfg)
        else:
            est, replicas = _forward_step(i, schedule, cfg, replicas)
        steps.append(est)
    return tuple(steps), True


def learn_weights(geometry, p: float, q: float, budget=None, seed: int = 0,
                  *, eps: float = 0.25, replicas: int = 16,
                  samples_per_replica: int = 24, sample_spacing: float = 0.5,
                  equilibration: float = 2.0, horizon_cap=None,
                  c_horizon: float = 1.0, engine: str = "fully_dynamic",
                  restrict: bool = True, max_step_sd: float = 0.25) -> PhaseWeights:
    """Learn the wired-phase mass m* at edge probability ``p``.

    Runs both anneal directions on ``geometry`` (free boundary), refines each
    uniform grid so no step's weight spread exceeds ``max_step_sd`` (see
    :func:`refine_schedule`), telescopes the per-step log-ratios onto the
    closed-form anchors, and combines them in log domain.  ``budget`` is a
    wall-clock allowance in seconds (None = unlimited); when it runs out,
    partial results come back flagged.  The stderr treats steps as
    independent; warm-started neighbouring steps are weakly dependent, so it
    is a first-order figure, not a guarantee.
    """
    if not isinstance(geometry, LatticeGeometry):
        raise FkdynError("learn_weights needs a lattice geometry (n and d)")
    if not 0.0 <= p <= 1.0:
        raise FkdynError(f"p must lie in [0, 1], got {p}")
    if q < 1:
        raise FkdynError(f"q must be >= 1, got {q}")
    log_free_anchor = anchor_partition(geometry, q, Direction.FREE_UP)
    log_wired_anchor = anchor_partition(geometry, q, Direction.WIRED_DOWN)
    if p == 0.0:
        return PhaseWeights(-math.inf, log_free_anchor, 0.0, 0.0, p, q, seed)
    if p == 1.0:
        return PhaseWeights(log_wired_anchor, -math.inf, 1.0, 0.0, p, q, seed)
    if restrict:
        spec = PhaseSpec(geometry, eps)
        if spec.theta < 2 or spec.theta > geometry.num_vertices:
            raise FkdynError(
                "the phase threshold degenerates on this instance; "
                "adjust eps or disable the restriction")
    deadline = None if budget is None else time.monotonic() + float(budget)
    common = dict(replicas=replicas, samples_per_replica=samples_per_replica,
                  sample_spacing=sample_spacing, equilibration=equilibration)
    if horizon_cap is not None:
        common["horizon_cap"] = horizon_cap
    results = {}
    for direction in (Direction.FREE_UP, Direction.WIRED_DOWN):
        schedule = build_schedule(geometry.n, geometry.d, p, direction,
                                  c_horizon=c_horizon, **common)
        schedule = refine_schedule(schedule, geometry, q, max_log_sd=max_step_sd)
        cfg = RestrictedSamplerConfig(geometry=geometry, q=q, eps=eps, seed=seed,
                                      engine=engine, restrict=restrict,
                                      stream_label="weights")
        results[direction] = _run_direction(schedule, cfg, deadline)
    free_steps, free_done = results[Direction.FREE_UP]
    wired_steps, wired_done = results[Direction.WIRED_DOWN]
    nan = float("nan")
    log_free = (log_free_anchor + math.fsum(s.log_ratio for s in free_steps)
                if free_done else nan)
    log_wired = (log_wired_anchor + math.fsum(s.log_ratio for s in wired_steps)
                 if wired_done else nan)
    m = _mixture_mass(log_wired, log_free)
    if math.isnan(m):
        se = nan
    else:
        se = m * (1.0 - m) * math.sqrt(_log_var(free_steps) + _log_var(wired_steps))
    return PhaseWeights(log_wired, log_free, m, se, p, q, seed,
                        free_steps=free_steps, wired_steps=wired_steps,
                        budget_exhausted=not (free_done and wired_done))


def ledger_rows(weights: PhaseWeights) -> list:
    """One ledger row per completed telescoping step, both directions.

    Row keys: direction, i, p_prev, p_next, a_i, stderr, samples,
    horizon_used — the per-step record a run emits as CSV.
    """
    rows = []
    for direction, steps in ((Direction.FREE_UP, weights.free_steps),
                             (Direction.WIRED_DOWN, weights.wired_steps)):
        for s in steps:
            rows.append({
                "direction": direction.value,
                "i": s.step,
                "p_prev": s.p_prev,
                "p_next": s.p_next,
                "a_i": s.ratio,
                "stderr": s.stderr,
                "samples": s.samples,
                "horizon_used": s.horizon_used,
            })
    return rows


def summary_dict(weights: PhaseWeights) -> dict:
    """JSON summary of a weight-learning run.

    Carries the fixed result keys log_Zhat (wired total), log_Zcheck (free
    total), m_star, stderr, seed, plus the run context (p, q,
    budget_exhausted).  Totals that never completed are NaN here and lower
    to null in JSON.
    """
    return {
        "log_Zhat": weights.log_wired_weight,
        "log_Zcheck": weights.log_free_weight,
        "m_star": weights.m_star,
        "stderr": weights.stderr,
        "seed": weights.seed,
        "p": weights.target_p,
        "q": weights.q,
        "budget_exhausted": weights.budget_exhausted,
    }


def sample_random_phase_init(m_star: float, seed: int, geometry=None):
    """Draw the mixture initialization: all-open w.p. m*, else all-closed.

    With a geometry the draw comes back as a boolean edge mask ready for
    ``make_chain(initial=...)``; without one, as the matching initial-state
    tag ("wired" or "free").
    """
    if not 0.0 <= m_star <= 1.0:
        raise FkdynError(f"m* must lie in [0, 1], got {m_star}")
    u = float(RandomnessStream(seed, ("phase-init",)).uniforms(0, 1)[0])
    wired = u < m_star
    if geometry is None:
        return "wired" if wired else "free"
    return np.full(geometry.num_edges, wired, dtype=bool)
