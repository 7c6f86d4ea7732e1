"""Phase membership, boundary-layer detection, and stability estimates."""

import math

import numpy as np
import pytest

from fkdyn.connectivity import create_engine
from fkdyn.errors import FkdynError
from fkdyn.lattice import build_geometry, make_boundary
from fkdyn.phases import (
    CustomPredicate,
    FreePhase,
    Phase,
    PhaseSpec,
    TrajectoryRecord,
    WiredPhase,
    estimate_stability,
    hitting_time_tau,
    on_phase_boundary,
    phase_of,
)


def _path(n=5):
    g = build_geometry(1, n, "box")
    return g, make_boundary(g, "free")


def _engine(g, bc, open_edges=()):
    mask = np.zeros(g.num_edges, dtype=bool)
    for e in open_edges:
        mask[e] = True
    return create_engine(g, bc, "fully_dynamic", initial=mask)


class TestPhaseSpec:
    @pytest.mark.parametrize("eps", [0.0, 0.5, 0.75, -0.1])
    def test_eps_outside_open_interval_rejected(self, eps):
        g, _ = _path()
        with pytest.raises(FkdynError):
            PhaseSpec(g, eps)

    def test_theta_is_ceiling_of_vertex_fraction(self):
        g = build_geometry(2, 4, "torus")  # 16 vertices
        assert PhaseSpec(g, 0.25).theta == 4
        assert PhaseSpec(g, 0.26).theta == 5
        g5, _ = _path(5)
        assert PhaseSpec(g5, 0.45).theta == 3


class TestPhaseOf:
    def test_threshold_partition_with_tie_going_wired(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)  # theta = 2
        assert phase_of(_engine(g, bc), spec) is Phase.FREE
        # A single open edge reaches the threshold exactly: tie goes wired.
        assert phase_of(_engine(g, bc, [0]), spec) is Phase.WIRED
        assert phase_of(_engine(g, bc, range(g.num_edges)), spec) is Phase.WIRED

    def test_accepts_chain_like_objects(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)

        class Shim:
            pass

        shim = Shim()
        shim.engine = _engine(g, bc, [0, 1])
        shim.geometry = g
        assert phase_of(shim, spec) is Phase.WIRED


class TestOnPhaseBoundary:
    def test_free_state_one_merge_away_is_on_boundary(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)  # theta = 2: any opening merges 1+1
        assert on_phase_boundary(_engine(g, bc), spec)

    def test_free_state_needing_two_openings_is_interior(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.45)  # theta = 3 > any single 1+1 merge
        assert not on_phase_boundary(_engine(g, bc), spec)

    def test_wired_state_one_closure_away_is_on_boundary(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)  # theta = 2
        assert on_phase_boundary(_engine(g, bc, [0]), spec)

    def test_wired_state_with_large_component_is_interior(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)
        # Fully open path: any split leaves a part of >= ceil(5/2) >= theta.
        assert not on_phase_boundary(_engine(g, bc, range(g.num_edges)), spec)

    def test_boundary_scan_leaves_engine_state_intact(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.45)
        engine = _engine(g, bc, [0, 1])
        before = engine.open_mask.copy()
        on_phase_boundary(engine, spec)
        assert np.array_equal(engine.open_mask, before)
        assert engine.largest_component() == 3


class TestPredicates:
    def test_wired_and_free_partition_and_monotonicity_flags(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)
        wired, free = WiredPhase(spec), FreePhase(spec)
        assert wired.increasing is True and free.increasing is False
        assert wired.phase is Phase.WIRED and free.phase is Phase.FREE
        for edges in [(), (0,), (1, 2), tuple(range(g.num_edges))]:
            engine = _engine(g, bc, edges)
            assert wired(engine) != free(engine)
            assert wired.holds(engine) == (phase_of(engine, spec) is Phase.WIRED)

    def test_predicates_expose_boundary_test(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)
        engine = _engine(g, bc, [0])
        assert WiredPhase(spec).on_boundary(engine) == on_phase_boundary(engine, spec)

    def test_custom_predicate_wraps_function_and_boundary(self):
        calls = []
        pred = CustomPredicate(lambda c: c > 3, boundary_fn=lambda c: calls.append(c) or True)
        assert pred(5) and pred.holds(4) and not pred(2)
        assert pred.increasing is None
        assert pred.on_boundary("state") is True
        assert calls == ["state"]
        assert CustomPredicate(lambda c: True, increasing=True).increasing is True


class TestEstimateStability:
    def test_boundary_fraction_with_binomial_stderr(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)  # theta = 2
        on = _engine(g, bc, [0])  # wired, one closure from exiting
        off = _engine(g, bc, range(g.num_edges))  # wired, interior

        report = estimate_stability(spec, 0.5, 2.0, 10,
                                    lambda i: on if i % 2 == 0 else off)
        assert report.samples == 10
        assert report.boundary_count == 5
        assert report.estimate == 0.5
        assert report.stderr == pytest.approx(math.sqrt(0.25 / 10))

    def test_degenerate_fraction_keeps_stderr_positive(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.4)
        interior = _engine(g, bc, range(g.num_edges))
        report = estimate_stability(spec, 0.5, 2.0, 8, lambda i: interior)
        assert report.estimate == 0.0
        assert report.stderr == pytest.approx(math.sqrt((1.0 / 8) / 8))

    def test_nonpositive_sample_count_rejected(self):
        g, _ = _path(5)
        spec = PhaseSpec(g, 0.4)
        with pytest.raises(FkdynError):
            estimate_stability(spec, 0.5, 2.0, 0, lambda i: None)


class TestHittingTime:
    def test_first_boundary_snapshot_is_reported(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.45)  # theta = 3
        traj = TrajectoryRecord(g, bc, [], [])
        traj.append(0.0, np.zeros(g.num_edges, dtype=bool))  # interior free
        mask = np.zeros(g.num_edges, dtype=bool)
        mask[0] = True  # {0,1} merged: opening edge 1 would reach 3
        traj.append(1.5, mask)
        mask2 = mask.copy()
        mask2[1] = True
        traj.append(2.0, mask2)
        assert hitting_time_tau(traj, spec) == 1.5

    def test_replay_handles_multi_edge_jumps(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.45)
        traj = TrajectoryRecord(g, bc, [], [])
        traj.append(0.0, np.zeros(g.num_edges, dtype=bool))
        jump = np.zeros(g.num_edges, dtype=bool)
        jump[[0, 1, 2, 3]] = True  # straight to the fully open path
        traj.append(3.0, jump)
        back = np.zeros(g.num_edges, dtype=bool)
        back[[0, 1]] = True  # component {0,1,2}: one closure exits wired
        traj.append(4.0, back)
        assert hitting_time_tau(traj, spec) == 4.0

    def test_never_hitting_returns_none(self):
        g, bc = _path(5)
        spec = PhaseSpec(g, 0.45)
        traj = TrajectoryRecord(g, bc, [], [])
        traj.append(0.0, np.zeros(g.num_edges, dtype=bool))
        traj.append(1.0, np.zeros(g.num_edges, dtype=bool))
        assert hitting_time_tau(traj, spec) is None
        empty = TrajectoryRecord(g, bc, [], [])
        assert hitting_time_tau(empty, spec) is None

    def test_append_stores_a_copy(self):
        g, bc = _path(5)
        traj = TrajectoryRecord(g, bc, [], [])
        live = np.zeros(g.num_edges, dtype=bool)
        traj.append(0.0, live)
        live[0] = True
        assert not traj.masks[0][0]
