"""Largest-component phases on the torus and their boundary layer.

A configuration is in the wired phase when its largest component holds at
least θ = ⌈ε·n^d⌉ vertices, in the free phase otherwise (ties at exactly θ go
to the wired phase so the two regions partition the state space).  The
boundary layer of a phase is the set of configurations one edge flip away
from leaving it; its stationary mass controls how long restricted dynamics
stay faithful to the unrestricted chain.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import FkdynError

__all__ = [
    "Phase",
    "PhaseSpec",
    "WiredPhase",
    "FreePhase",
    "CustomPredicate",
    "phase_of",
    "on_phase_boundary",
    "StabilityReport",
    "estimate_stability",
    "TrajectoryRecord",
    "hitting_time_tau",
]


class Phase(enum.Enum):
    WIRED = "Wired"
    FREE = "Free"


@dataclass(frozen=True)
class PhaseSpec:
    """Threshold rule |C1| >= ceil(eps * #vertices) over a host geometry."""

    geometry: object
    eps: float

    def __post_init__(self):
        if not (0.0 < self.eps < 0.5):
            raise FkdynError(f"eps must lie in (0, 1/2), got {self.eps}")

    @property
    def theta(self) -> int:
        return math.ceil(self.eps * self.geometry.num_vertices)


def _engine_of(omega):
    return omega.engine if hasattr(omega, "engine") else omega


def phase_of(omega, spec: PhaseSpec) -> Phase:
    """Wired iff the largest component reaches the threshold.  O(1) via the engine."""
    engine = _engine_of(omega)
    return Phase.WIRED if engine.largest_component() >= spec.theta else Phase.FREE


def _wired_exit_possible(engine, geometry, theta: int) -> bool:
    """Can one edge closure drop |C1| below theta?"""
    c1 = engine.largest_component()
    # Splitting C1 leaves a part of at least ceil(|C1|/2) vertices.
    if (c1 + 1) // 2 >= theta:
        return False
    mask = engine.open_mask
    for e in np.flatnonzero(mask):
        e = int(e)
        a, b = geometry.edges[e]
        if engine.component_size(int(a)) != c1:
            continue
        delta = engine.delete_edge(e)
        below = delta == 1 and engine.largest_component() < theta
        engine.insert_edge(e)
        if below:
            return True
    return False


def _free_exit_possible(engine, geometry, theta: int) -> bool:
    """Can one edge opening push the largest component to theta or beyond?"""
    mask = engine.open_mask
    for e in np.flatnonzero(~mask):
        e = int(e)
        a, b = geometry.edges[e]
        a, b = int(a), int(b)
        if engine.same_component(a, b):
            continue
        if engine.component_size(a) + engine.component_size(b) >= theta:
            return True
    return False


def on_phase_boundary(omega, spec: PhaseSpec) -> bool:
    """True iff some single edge flip moves ω to the opposite phase.

    Wired side: only closures of largest-component edges can exit, and none
    can when ⌈|C1|/2⌉ ≥ θ.  Free side: only openings that merge two
    components with combined size ≥ θ can exit; an O(1) size query per
    closed edge decides it.
    """
    engine = _engine_of(omega)
    geometry = omega.geometry if hasattr(omega, "geometry") else spec.geometry
    if engine.largest_component() >= spec.theta:
        return _wired_exit_possible(engine, geometry, spec.theta)
    return _free_exit_possible(engine, geometry, spec.theta)


class _PhasePredicateBase:
    """Restriction predicate usable by the restricted chain driver."""

    def __init__(self, spec: PhaseSpec):
        self.spec = spec

    def on_boundary(self, chain) -> bool:
        return on_phase_boundary(chain, self.spec)


class WiredPhase(_PhasePredicateBase):
    """|C1| >= theta: an increasing event."""

    phase = Phase.WIRED
    increasing = True

    def holds(self, chain) -> bool:
        return _engine_of(chain).largest_component() >= self.spec.theta

    def __call__(self, chain) -> bool:
        return self.holds(chain)


class FreePhase(_PhasePredicateBase):
    """|C1| < theta: a decreasing event."""

    phase = Phase.FREE
    increasing = False

    def holds(self, chain) -> bool:
        return _engine_of(chain).largest_component() < self.spec.theta

    def __call__(self, chain) -> bool:
        return self.holds(chain)


class CustomPredicate:
    """Wrap an arbitrary membership function (with optional boundary test).

    Without a boundary function the restricted driver falls back to the
    generic one-flip scan.
    """

    def __init__(self, fn, boundary_fn=None, increasing=None):
        self._fn = fn
        self.increasing = increasing
        if boundary_fn is not None:
            self.on_boundary = boundary_fn

    def holds(self, chain) -> bool:
        return bool(self._fn(chain))

    def __call__(self, chain) -> bool:
        return self.holds(chain)


@dataclass
class StabilityReport:
    """Fraction of phase samples sitting on the boundary layer."""

    estimate: float
    stderr: float
    samples: int
    boundary_count: int


def estimate_stability(spec: PhaseSpec, p: float, q: float, samples: int,
                       sampler) -> StabilityReport:
    """Estimate the boundary-layer mass of a phase from a sampler.

    ``sampler(i)`` must return the i-th (approximate) sample of the
    phase-conditioned measure, as a chain or engine.  The estimate is the
    boundary fraction with binomial standard error.
    """
    if samples <= 0:
        raise FkdynError("samples must be positive")
    hits = 0
    for i in range(samples):
        omega = sampler(i)
        if on_phase_boundary(omega, spec):
            hits += 1
    frac = hits / samples
    stderr = math.sqrt(max(frac * (1.0 - frac), 1.0 / samples) / samples)
    return StabilityReport(frac, stderr, samples, hits)


@dataclass
class TrajectoryRecord:
    """Snapshots (time, open mask) of one chain run, for post-hoc audits."""

    geometry: object
    bc: object
    times: list
    masks: list

    def append(self, time: float, mask: np.ndarray):
        self.times.append(float(time))
        self.masks.append(np.asarray(mask, dtype=bool).copy())


def hitting_time_tau(trajectory: TrajectoryRecord, spec: PhaseSpec):
    """First recorded time the state lies on its phase boundary; None if never.

    Replays the trajectory through a fresh engine (snapshots differ by few
    edges, so the replay is incremental).
    """
    from .connectivity import create_engine

    if not trajectory.times:
        return None
    engine = create_engine(trajectory.geometry, trajectory.bc,
                           initial=trajectory.masks[0])
    current = trajectory.masks[0].copy()

    class _View:
        pass

    view = _View()
    view.engine = engine
    view.geometry = trajectory.geometry
    for t, mask in zip(trajectory.times, trajectory.masks):
        for e in np.flatnonzero(mask != current):
            e = int(e)
            if mask[e]:
                engine.insert_edge(e)
            else:
                engine.delete_edge(e)
        current = mask.copy()
        if on_phase_boundary(view, spec):
            return t
    return None
