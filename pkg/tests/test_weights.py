"""Anneal schedules, telescoping ratio steps, and phase-weight learning."""

import math

import numpy as np
import pytest

from fkdyn.errors import AnchorStepZeroP, FkdynError
from fkdyn.lattice import ArbitraryGraph, build_geometry
from fkdyn.oracle import exact_distribution, largest_component_table
from fkdyn.weights import (
    AnnealSchedule,
    Direction,
    RestrictedSamplerConfig,
    anchor_partition,
    anchor_step_ratio,
    build_schedule,
    estimate_ratio,
    learn_weights,
    ledger_rows,
    refine_schedule,
    sample_random_phase_init,
    summary_dict,
)


def _schedule(grid, direction=Direction.FREE_UP, **kw):
    kw.setdefault("max_spacing", 1.0)
    return AnnealSchedule(direction=direction, grid=grid, target=grid[-1], **kw)


class TestAnnealSchedule:
    def test_accepts_monotone_grid_and_indexes_steps(self):
        sched = _schedule((0.0, 0.2, 0.5))
        assert sched.num_steps == 2
        assert sched.step_bounds(1) == (0.0, 0.2)
        assert sched.step_bounds(2) == (0.2, 0.5)
        with pytest.raises(FkdynError, match="step index"):
            sched.step_bounds(3)
        with pytest.raises(FkdynError, match="step index"):
            sched.step_bounds(0)

    def test_grid_validation(self):
        with pytest.raises(FkdynError, match="empty"):
            AnnealSchedule(direction=Direction.FREE_UP, grid=(), target=0.5,
                           max_spacing=1.0)
        with pytest.raises(FkdynError, match="outside"):
            _schedule((0.0, 1.2))
        with pytest.raises(FkdynError, match="end exactly"):
            AnnealSchedule(direction=Direction.FREE_UP, grid=(0.0, 0.4),
                           target=0.5, max_spacing=1.0)
        with pytest.raises(FkdynError, match="monotone"):
            _schedule((0.0, 0.4, 0.3, 0.5))
        with pytest.raises(FkdynError, match="monotone"):
            _schedule((1.0, 0.4, 0.5), direction=Direction.WIRED_DOWN)
        with pytest.raises(FkdynError, match="spacing"):
            _schedule((0.0, 0.4, 0.5), max_spacing=0.3)

    def test_effort_validation(self):
        with pytest.raises(FkdynError, match="replicas"):
            _schedule((0.0, 0.5), replicas=1)
        with pytest.raises(FkdynError, match="positive"):
            _schedule((0.0, 0.5), samples_per_replica=0)
        with pytest.raises(FkdynError, match="positive"):
            _schedule((0.0, 0.5), sample_spacing=0.0)
        with pytest.raises(FkdynError, match="positive"):
            _schedule((0.0, 0.5), equilibration=-1.0)


class TestBuildSchedule:
    def test_step_count_is_smallest_k_within_spacing(self):
        sched = build_schedule(3, 2, 0.5, Direction.FREE_UP)
        assert sched.num_steps == math.ceil(0.5 * 9)
        assert sched.grid[0] == 0.0 and sched.grid[-1] == 0.5
        assert sched.max_spacing == pytest.approx(1.0 / 9)
        down = build_schedule(3, 2, 0.5, Direction.WIRED_DOWN)
        assert down.grid[0] == 1.0 and down.grid[-1] == 0.5
        assert down.num_steps == math.ceil(0.5 * 9)

    def test_default_horizon_cap_scales_with_side(self):
        assert build_schedule(3, 2, 0.5, Direction.FREE_UP).horizon_cap == \
            pytest.approx(3.0)
        assert build_schedule(3, 2, 0.5, Direction.FREE_UP,
                              c_horizon=2.0).horizon_cap == pytest.approx(9.0)
        assert build_schedule(5, 1, 0.5, Direction.FREE_UP).horizon_cap == \
            pytest.approx(math.e)

    def test_parameter_validation(self):
        with pytest.raises(FkdynError, match="target"):
            build_schedule(3, 2, 1.5, Direction.FREE_UP)
        with pytest.raises(FkdynError, match="n >= 1"):
            build_schedule(0, 2, 0.5, Direction.FREE_UP)


class TestRefineSchedule:
    def test_degenerate_anchor_gets_revisit_point(self):
        g = build_geometry(2, 3, "box")  # 12 edges
        up = build_schedule(3, 2, 0.5, Direction.FREE_UP)
        refined = refine_schedule(up, g, 1.0)
        assert any(abs(x - 1.0 / 12) < 1e-12 for x in refined.grid)
        down = build_schedule(3, 2, 0.5, Direction.WIRED_DOWN)
        refined_down = refine_schedule(down, g, 1.0)
        assert any(abs(x - 11.0 / 12) < 1e-12 for x in refined_down.grid)

    def test_only_adds_points_and_keeps_spacing(self):
        g = build_geometry(2, 3, "box")
        base = build_schedule(3, 2, 0.5, Direction.FREE_UP)
        refined = refine_schedule(base, g, 2.0)
        assert set(base.grid) <= set(refined.grid)
        assert len(refined.grid) > len(base.grid)
        diffs = np.diff(refined.grid)
        assert np.all(diffs > 0)
        assert diffs.max() <= base.max_spacing + 1e-12

    def test_loose_spread_tolerance_changes_nothing(self):
        g = build_geometry(2, 3, "box")
        base = build_schedule(3, 2, 0.5, Direction.FREE_UP)
        # q=2 keeps the anchor revisit point above the first grid point, and
        # a huge tolerance suppresses spread subdivision.
        assert refine_schedule(base, g, 2.0, max_log_sd=100.0).grid == base.grid

    def test_parameter_validation(self):
        g = build_geometry(2, 3, "box")
        base = build_schedule(3, 2, 0.5, Direction.FREE_UP)
        with pytest.raises(FkdynError, match="q must be"):
            refine_schedule(base, g, 0.5)
        with pytest.raises(FkdynError, match="max_log_sd"):
            refine_schedule(base, g, 2.0, max_log_sd=0.0)


class TestAnchorPartition:
    def test_closed_forms_at_both_anchors(self):
        g = build_geometry(2, 3, "box")
        assert anchor_partition(g, 3.0, Direction.FREE_UP) == \
            pytest.approx(9 * math.log(3.0))
        assert anchor_partition(g, 3.0, Direction.WIRED_DOWN) == \
            pytest.approx(math.log(3.0))

    def test_all_open_anchor_needs_connected_host(self):
        disconnected = ArbitraryGraph(4, [(0, 1), (2, 3)])
        with pytest.raises(FkdynError, match="connected"):
            anchor_partition(disconnected, 2.0, Direction.WIRED_DOWN)
        assert anchor_partition(disconnected, 2.0, Direction.FREE_UP) == \
            pytest.approx(4 * math.log(2.0))

    def test_q_below_one_rejected(self):
        g = build_geometry(2, 3, "box")
        with pytest.raises(FkdynError, match="q must be"):
            anchor_partition(g, 0.9, Direction.FREE_UP)


class TestRatioSteps:
    def test_degenerate_anchor_routes_to_anchor_step(self):
        g = build_geometry(1, 2, "box")
        sched = _schedule((0.0, 0.5), replicas=4, samples_per_replica=4)
        cfg = RestrictedSamplerConfig(geometry=g, q=2.0, seed=1, restrict=False)
        with pytest.raises(AnchorStepZeroP):
            estimate_ratio(1, sched, cfg)
        interior = _schedule((0.3, 0.5), replicas=4, samples_per_replica=4)
        with pytest.raises(FkdynError, match="interior"):
            anchor_step_ratio(interior, cfg)

    def test_single_edge_anchor_matches_hand_value(self):
        # One edge, q=2: Z(p)/Z(0) = (1-p) + p/q, so the 0 -> 1/2 anchor
        # step has ratio 3/4.
        g = build_geometry(1, 2, "box")
        sched = _schedule((0.0, 0.5), replicas=24, samples_per_replica=100,
                          sample_spacing=2.0)
        cfg = RestrictedSamplerConfig(geometry=g, q=2.0, seed=4, restrict=False)
        est = anchor_step_ratio(sched, cfg)
        assert est.p_prev == 0.0 and est.p_next == 0.5
        assert abs(est.ratio - 0.75) < 3 * est.stderr + 0.005
        assert est.bound == math.inf
        assert est.log_ratio == pytest.approx(math.log(est.ratio))

    def test_interior_telescope_is_exact_at_q_one(self):
        # With q=1 the partition function is identically 1, so every
        # interior ratio is 1 and the telescoping product must come back
        # within its (small) statistical error of 1.
        g = build_geometry(2, 3, "box")
        sched = _schedule((0.44, 0.46, 0.48, 0.5), max_spacing=0.02 + 1e-9,
                          replicas=16, samples_per_replica=256,
                          sample_spacing=1.0, equilibration=2.0)
        cfg = RestrictedSamplerConfig(geometry=g, q=1.0, seed=5, restrict=False)
        prod = 1.0
        for i in range(1, sched.num_steps + 1):
            est = estimate_ratio(i, sched, cfg)
            assert 0.0 < est.ratio <= est.bound
            assert est.samples == 16 * 256
            prod *= est.ratio
        assert abs(prod - 1.0) < 0.01


class TestLearnWeights:
    def test_extreme_p_short_circuits(self):
        g = build_geometry(2, 3, "box")
        at0 = learn_weights(g, 0.0, 2.0)
        assert at0.m_star == 0.0 and at0.stderr == 0.0
        assert at0.log_wired_weight == -math.inf
        assert at0.log_free_weight == pytest.approx(9 * math.log(2.0))
        assert at0.free_steps == () and at0.wired_steps == ()
        at1 = learn_weights(g, 1.0, 2.0)
        assert at1.m_star == 1.0
        assert at1.log_wired_weight == pytest.approx(math.log(2.0))
        assert at1.log_free_weight == -math.inf

    def test_parameter_validation(self):
        g = build_geometry(2, 3, "box")
        with pytest.raises(FkdynError, match="lattice"):
            learn_weights(ArbitraryGraph(3, [(0, 1)]), 0.5, 2.0)
        with pytest.raises(FkdynError, match="p must"):
            learn_weights(g, 1.5, 2.0)
        with pytest.raises(FkdynError, match="q must"):
            learn_weights(g, 0.5, 0.5)
        # On a 2x2 box the wired threshold is a single vertex: every
        # configuration is wired and the restriction degenerates.
        with pytest.raises(FkdynError, match="degenerates"):
            learn_weights(build_geometry(2, 2, "box"), 0.5, 2.0)

    def test_zero_budget_returns_flagged_partial(self):
        g = build_geometry(1, 5, "box")
        w = learn_weights(g, 0.5, 2.0, budget=0.0, seed=1)
        assert w.budget_exhausted is True
        assert math.isnan(w.m_star) and math.isnan(w.stderr)
        assert ledger_rows(w) == []
        summary = summary_dict(w)
        assert summary["budget_exhausted"] is True
        assert math.isnan(summary["m_star"])

    def test_matches_enumerated_phase_mass(self):
        g = build_geometry(1, 5, "box")
        model = exact_distribution(g, 0.5, 2.0)
        sizes = largest_component_table(model)
        theta = math.ceil(0.25 * g.num_vertices)
        exact = float(model.pi[sizes >= theta].sum())
        w = learn_weights(g, 0.5, 2.0, seed=3, replicas=8,
                          samples_per_replica=32, sample_spacing=1.0)
        assert w.budget_exhausted is False
        assert w.stderr > 0
        assert abs(w.m_star - exact) < 4 * w.stderr + 0.01

    def test_ledger_and_summary_shapes(self):
        g = build_geometry(1, 5, "box")
        w = learn_weights(g, 0.5, 2.0, seed=3, replicas=4,
                          samples_per_replica=8, sample_spacing=0.5)
        rows = ledger_rows(w)
        assert len(rows) == len(w.free_steps) + len(w.wired_steps)
        assert rows[0]["direction"] == "FreeUp"
        assert rows[-1]["direction"] == "WiredDown"
        for row in rows:
            assert set(row) == {"direction", "i", "p_prev", "p_next", "a_i",
                                "stderr", "samples", "horizon_used"}
        up = [r for r in rows if r["direction"] == "FreeUp"]
        assert up[0]["p_prev"] == 0.0 and up[-1]["p_next"] == 0.5
        summary = summary_dict(w)
        assert set(summary) == {"log_Zhat", "log_Zcheck", "m_star", "stderr",
                                "seed", "p", "q", "budget_exhausted"}
        assert summary["p"] == 0.5 and summary["q"] == 2.0 and summary["seed"] == 3
        assert summary["log_Zhat"] == w.log_wired_weight
        assert summary["log_Zcheck"] == w.log_free_weight


class TestPhaseInit:
    def test_geometry_draw_is_an_extreme_mask(self):
        g = build_geometry(2, 3, "box")
        mask = sample_random_phase_init(0.5, 7, geometry=g)
        assert mask.shape == (g.num_edges,) and mask.dtype == np.bool_
        assert mask.all() or not mask.any()

    def test_tag_draw_without_geometry(self):
        assert sample_random_phase_init(1.0, 1) == "wired"
        assert sample_random_phase_init(0.0, 1) == "free"
        assert sample_random_phase_init(0.5, 2) in ("wired", "free")

    def test_same_seed_same_draw(self):
        assert sample_random_phase_init(0.5, 11) == sample_random_phase_init(0.5, 11)

    def test_wired_frequency_tracks_m_star(self):
        draws = [sample_random_phase_init(0.3, s) == "wired" for s in range(400)]
        freq = float(np.mean(draws))
        assert abs(freq - 0.3) < 4 * math.sqrt(0.3 * 0.7 / 400)

    def test_m_star_validated(self):
        with pytest.raises(FkdynError, match="m\\*"):
            sample_random_phase_init(1.2, 0)
