import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fkdyn.dynamics import (
    PottsConfig,
    checkpoint_size,
    fk_to_potts,
    heat_bath_probability,
    make_chain,
    make_coupled_family,
    pack_checkpoint,
    potts_to_fk,
    run_continuous,
    run_coupled,
    run_discrete,
    run_restricted,
    swendsen_wang_step,
    unpack_checkpoint,
)
from fkdyn.errors import FkdynError, InitOutsidePhase, NonIntegerQ
from fkdyn.lattice import build_geometry, make_boundary
from fkdyn.phases import PhaseSpec, WiredPhase, phase_of
from fkdyn.rng import RandomnessStream


@given(st.floats(0.0, 1.0), st.floats(1.0, 100.0))
def test_heat_bath_probability_cases(p, q):
    plain = heat_bath_probability(p, q, False)
    bridged = heat_bath_probability(p, q, True)
    assert plain == p
    assert math.isclose(bridged, p / (p + q * (1 - p)), rel_tol=1e-12) or (
        p == 1.0 and bridged == 1.0)
    assert bridged <= plain + 1e-15


def test_q1_bridge_status_is_irrelevant():
    assert heat_bath_probability(0.37, 1.0, True) == 0.37
    assert heat_bath_probability(0.37, 1.0, False) == 0.37


def test_discrete_and_continuous_consume_the_same_addresses():
    g = build_geometry(2, 3, "box")
    a = make_chain(g, 0.5, 2.0)
    b = make_chain(g, 0.5, 2.0)
    stream = RandomnessStream(3, ("eq",))
    run_discrete(a, 200, stream)
    run_continuous(b, 1000.0, RandomnessStream(3, ("eq",)))
    # Same stream, same event decoding: the discrete chain's trajectory is a
    # prefix of the continuous one's.
    assert b.events > 200
    c = make_chain(g, 0.5, 2.0)
    run_discrete(c, b.events, RandomnessStream(3, ("eq",)))
    assert np.array_equal(b.open_mask, c.open_mask)


def test_continuous_split_horizon_is_exact():
    """Splitting a run at arbitrary points changes nothing, bit for bit."""
    g = build_geometry(2, 4, "torus")
    one = make_chain(g, 0.6, 3.0)
    run_continuous(one, 5.0, RandomnessStream(9, ("split",)))
    split = make_chain(g, 0.6, 3.0)
    stream = RandomnessStream(9, ("split",))
    for dt in (1.25, 0.5, 2.0, 0.05, 1.2):
        run_continuous(split, dt, stream)
    assert math.isclose(split.time, 5.0, rel_tol=1e-12)
    assert split.events == one.events
    assert np.array_equal(split.open_mask, one.open_mask)
    assert split.event_clock == one.event_clock


def test_zero_horizon_processes_nothing():
    g = build_geometry(1, 4, "box")
    chain = make_chain(g, 0.5, 2.0)
    run_continuous(chain, 0.0, RandomnessStream(0, ()))
    assert chain.events == 0 and chain.time == 0.0


def test_single_edge_marginal_matches_the_kernel():
    g = build_geometry(1, 2, "box")  # one edge
    p, q = 0.6, 3.0
    hits = 0
    n = 4000
    for r in range(n):
        chain = make_chain(g, p, q)
        run_discrete(chain, 1, RandomnessStream(100 + r, ("k",)))
        hits += int(chain.open_mask[0])
    want = heat_bath_probability(p, q, True)  # closed single edge is a bridge
    se = math.sqrt(want * (1 - want) / n)
    assert abs(hits / n - want) < 4 * se


def test_checkpoint_round_trip():
    g = build_geometry(2, 4, "torus")
    chain = make_chain(g, 0.55, 2.5)
    run_continuous(chain, 3.0, RandomnessStream(5, ("ckpt",)))
    blob = pack_checkpoint(chain, seed=77)
    assert len(blob) == checkpoint_size(g.num_edges)
    back, seed = unpack_checkpoint(blob)
    assert seed == 77
    assert back.p == chain.p and back.q == chain.q
    assert back.events == chain.events
    assert np.array_equal(back.open_mask, chain.open_mask)
    assert back.geometry.num_edges == g.num_edges


def test_checkpoint_rejects_corruption():
    g = build_geometry(2, 3, "box")
    chain = make_chain(g, 0.5, 2.0)
    blob = pack_checkpoint(chain)
    with pytest.raises(FkdynError):
        unpack_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(FkdynError):
        unpack_checkpoint(blob[:-1])
    cyl = make_chain(build_geometry(2, 4, "cylinder", wrap_axes=[0]), 0.5, 2.0)
    with pytest.raises(FkdynError):
        pack_checkpoint(cyl)


def test_coupled_extremes_stay_ordered_and_coalesce():
    g = build_geometry(2, 4, "torus")
    top = make_chain(g, 0.4, 2.0, initial="wired")
    bot = make_chain(g, 0.4, 2.0, initial="free")
    family = make_coupled_family([bot, top], order=[(0, 1)])
    run_coupled(family, 60.0, RandomnessStream(1, ("pair",)), audit_every=64,
                stop_on_couple=True)
    assert family.coupling_time is not None
    assert np.array_equal(family.chains[0].open_mask, family.chains[1].open_mask)


def test_three_level_sandwich_keeps_both_orders():
    g = build_geometry(2, 3, "box")
    mid_mask = RandomnessStream(8, ("mid",)).uniforms(0, g.num_edges) < 0.5
    bot = make_chain(g, 0.5, 2.0, initial="free")
    mid = make_chain(g, 0.5, 2.0, initial=mid_mask)
    top = make_chain(g, 0.5, 2.0, initial="wired")
    family = make_coupled_family([bot, mid, top], order=[(0, 1), (1, 2)])
    run_coupled(family, 10.0, RandomnessStream(2, ("tri",)), audit_every=32)
    low, me, hi = (c.open_mask for c in family.chains)
    assert not (low & ~me).any()
    assert not (me & ~hi).any()


def test_restricted_chain_never_leaves_the_phase():
    g = build_geometry(2, 3, "box")
    spec = PhaseSpec(g, 0.25)
    chain = make_chain(g, 0.8, 5.0, initial="wired")
    seen = []
    _, exits, hit = run_restricted(
        chain, WiredPhase(spec), 12.0, RandomnessStream(4, ("restr",)),
        callback=lambda c, e, t, ch: seen.append(phase_of(c, spec)))
    assert all(ph.name == "WIRED" for ph in seen)
    assert exits >= 0


def test_restricted_rejects_outside_initializer():
    g = build_geometry(2, 3, "box")
    spec = PhaseSpec(g, 0.25)
    chain = make_chain(g, 0.8, 5.0, initial="free")
    with pytest.raises(InitOutsidePhase):
        run_restricted(chain, WiredPhase(spec), 1.0,
                       RandomnessStream(4, ("restr",)))


def test_fk_to_potts_colors_components_uniformly():
    g = build_geometry(2, 3, "box")
    chain = make_chain(g, 0.7, 2.0)
    run_continuous(chain, 4.0, RandomnessStream(6, ("es",)))
    sigma = fk_to_potts(chain, 2, RandomnessStream(7, ("col",)))
    for u, v in g.edges[chain.open_mask]:
        assert sigma.colors[u] == sigma.colors[v]
    assert sigma.colors.min() >= 0 and sigma.colors.max() < 2


def test_potts_to_fk_opens_only_monochromatic_edges():
    g = build_geometry(2, 3, "box")
    colors = np.array([0, 0, 1, 0, 1, 1, 0, 1, 1])
    sigma = PottsConfig(g, 2, colors)
    mask = potts_to_fk(sigma, 0.9, RandomnessStream(8, ("perc",)))
    mono = colors[g.edges[:, 0]] == colors[g.edges[:, 1]]
    assert not (mask & ~mono).any()


def test_fk_to_potts_requires_integer_q():
    g = build_geometry(1, 3, "box")
    chain = make_chain(g, 0.5, 1.5)
    with pytest.raises(NonIntegerQ):
        fk_to_potts(chain, 1.5, RandomnessStream(0, ()))


def test_swendsen_wang_step_stays_valid():
    g = build_geometry(2, 3, "box")
    sigma = PottsConfig(g, 3, np.zeros(g.num_vertices, dtype=np.int64))
    stream = RandomnessStream(12, ("sw",))
    for k in range(10):
        sigma = swendsen_wang_step(sigma, 0.5, 3, stream.substream("step", k))
        assert sigma.colors.shape == (g.num_vertices,)
        assert sigma.colors.min() >= 0 and sigma.colors.max() < 3


def test_engines_produce_identical_trajectories():
    g = build_geometry(2, 4, "box")
    for q in (1.0, 2.0):
        a = make_chain(g, 0.45, q, engine="naive")
        b = make_chain(g, 0.45, q, engine="fully_dynamic")
        run_continuous(a, 6.0, RandomnessStream(13, ("tr", q)))
        run_continuous(b, 6.0, RandomnessStream(13, ("tr", q)))
        assert a.events == b.events
        assert np.array_equal(a.open_mask, b.open_mask)


def test_make_chain_validates_parameters():
    g = build_geometry(1, 3, "box")
    with pytest.raises(FkdynError):
        make_chain(g, 1.2, 2.0)
    with pytest.raises(FkdynError):
        make_chain(g, 0.5, 0.5)
