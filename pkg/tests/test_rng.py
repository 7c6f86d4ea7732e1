import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from fkdyn.rng import RandomnessStream


def test_same_seed_and_path_reproduce():
    a = RandomnessStream(7, ("chain", 0))
    b = RandomnessStream(7, ("chain", 0))
    ea, ua, wa = a.events(0, 100, 12)
    eb, ub, wb = b.events(0, 100, 12)
    assert np.array_equal(ea, eb) and np.array_equal(ua, ub) and np.array_equal(wa, wb)


def test_different_paths_decorrelate():
    a = RandomnessStream(7, ("chain", 0))
    b = RandomnessStream(7, ("chain", 1))
    _, ua, _ = a.events(0, 256, 12)
    _, ub, _ = b.events(0, 256, 12)
    assert not np.array_equal(ua, ub)


def test_different_seeds_decorrelate():
    _, ua, _ = RandomnessStream(1, ()).events(0, 256, 12)
    _, ub, _ = RandomnessStream(2, ()).events(0, 256, 12)
    assert not np.array_equal(ua, ub)


@given(st.integers(0, 500), st.integers(1, 200))
def test_event_addressing_is_offset_stable(k0, count):
    """Reading a window directly equals reading it inside a longer sweep."""
    stream = RandomnessStream(42, ("addr",))
    e_all, u_all, w_all = stream.events(0, k0 + count, 9)
    e_win, u_win, w_win = stream.events(k0, count, 9)
    assert np.array_equal(e_all[k0:], e_win)
    assert np.array_equal(u_all[k0:], u_win)
    assert np.array_equal(w_all[k0:], w_win)


def test_substream_matches_extended_path():
    parent = RandomnessStream(9, ("a",))
    child = parent.substream("b", 3)
    direct = RandomnessStream(9, ("a", "b", 3))
    _, u1, _ = child.events(0, 64, 5)
    _, u2, _ = direct.events(0, 64, 5)
    assert np.array_equal(u1, u2)


def test_spawn_replicas_are_distinct():
    streams = RandomnessStream(3, ("root",)).spawn_replicas(8)
    draws = [tuple(s.uniforms(0, 4)) for s in streams]
    assert len(set(draws)) == len(draws)


def test_events_ranges_and_types():
    e, u, w = RandomnessStream(0, ()).events(0, 10_000, 7)
    assert e.min() >= 0 and e.max() < 7
    assert (u >= 0).all() and (u < 1).all()
    assert (w > 0).all()  # exponential waiting times
    # Edge draws cover every edge on a long window.
    assert set(np.unique(e).tolist()) == set(range(7))


def test_uniforms_are_unbiased_enough():
    u = RandomnessStream(5, ("u",)).uniforms(0, 200_000)
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(np.mean(u < 0.25) - 0.25) < 0.005


def test_waiting_times_are_unit_exponential():
    _, _, w = RandomnessStream(11, ()).events(0, 200_000, 3)
    assert abs(w.mean() - 1.0) < 0.02
    assert abs(np.mean(w > 1.0) - np.exp(-1.0)) < 0.005
