import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkdyn.connectivity import components_json, create_engine
from fkdyn.lattice import build_geometry, make_boundary
from fkdyn.rng import RandomnessStream


def _nx_components(geometry, bc, open_mask):
    """Independent component count: ghost-merge each boundary class."""
    g = nx.Graph()
    g.add_nodes_from(range(geometry.num_vertices))
    for e in np.flatnonzero(open_mask):
        u, v = geometry.edges[e]
        g.add_edge(int(u), int(v))
    if bc is not None:
        for k, cls in enumerate(bc.classes):
            ghost = geometry.num_vertices + k
            for v in cls:
                g.add_edge(ghost, int(v))
    total = nx.number_connected_components(g)
    return total


@pytest.mark.parametrize("bc_kind", ["free", "wired"])
def test_engines_agree_with_networkx_on_random_masks(bc_kind):
    geometry = build_geometry(2, 4, "box")
    bc = make_boundary(geometry, bc_kind)
    u = RandomnessStream(3, ("mask", bc_kind)).uniforms(0, 50 * geometry.num_edges)
    masks = (u.reshape(50, geometry.num_edges) < 0.5)
    for mask in masks:
        for kind in ("naive", "fully_dynamic"):
            engine = create_engine(geometry, bc, kind=kind, initial=mask)
            assert engine.num_components == _nx_components(geometry, bc, mask)


def test_engines_match_each_other_on_a_long_script():
    geometry = build_geometry(2, 5, "box")
    bc = make_boundary(geometry, "wired")
    naive = create_engine(geometry, bc, kind="naive")
    fast = create_engine(geometry, bc, kind="fully_dynamic")
    stream = RandomnessStream(17, ("script",))
    e_seq, u_seq, _ = stream.events(0, 3000, geometry.num_edges)
    for e, u in zip(e_seq, u_seq):
        e = int(e)
        assert naive.is_bridge(e) == fast.is_bridge(e)
        want_open = u < 0.55
        if want_open and not naive.open_mask[e]:
            naive.insert_edge(e)
            fast.insert_edge(e)
        elif not want_open and naive.open_mask[e]:
            naive.delete_edge(e)
            fast.delete_edge(e)
        assert naive.num_components == fast.num_components
        assert naive.largest_component() == fast.largest_component()
        u2 = int(e_seq[(e + 7) % len(e_seq)])
        v2 = int(e_seq[(e + 13) % len(e_seq)]) % geometry.num_vertices
        assert naive.same_component(u2 % geometry.num_vertices, v2) == (
            fast.same_component(u2 % geometry.num_vertices, v2))
    assert np.array_equal(naive.open_mask, fast.open_mask)


def _is_bridge_brute(geometry, bc, open_mask, e):
    """e is a bridge iff its endpoints are disconnected in omega minus e."""
    without = open_mask.copy()
    without[e] = False
    g = nx.Graph()
    g.add_nodes_from(range(geometry.num_vertices))
    for k in np.flatnonzero(without):
        a, b = geometry.edges[k]
        g.add_edge(int(a), int(b))
    if bc is not None:
        for k, cls in enumerate(bc.classes):
            ghost = geometry.num_vertices + k
            for v in cls:
                g.add_edge(ghost, int(v))
    u, v = geometry.edges[e]
    return not nx.has_path(g, int(u), int(v))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_bridge_query_matches_brute_force(seed):
    geometry = build_geometry(2, 3, "box")
    bc = make_boundary(geometry, "wired")
    u = RandomnessStream(seed, ("bridge",)).uniforms(0, geometry.num_edges + 1)
    mask = u[:-1] < 0.5
    e = int(u[-1] * geometry.num_edges)
    for kind in ("naive", "fully_dynamic"):
        engine = create_engine(geometry, bc, kind=kind, initial=mask)
        assert engine.is_bridge(e) == _is_bridge_brute(geometry, bc, mask, e)


def test_wired_boundary_is_one_component_with_no_edges():
    geometry = build_geometry(2, 4, "box")
    bc = make_boundary(geometry, "wired")
    engine = create_engine(geometry, bc, kind="fully_dynamic")
    boundary = [int(v) for v in geometry.boundary]
    assert all(engine.same_component(boundary[0], v) for v in boundary[1:])
    # The four interior vertices stay singletons.
    assert engine.num_components == 1 + 4


def test_component_size_tracks_inserts():
    geometry = build_geometry(1, 5, "box")
    engine = create_engine(geometry, None, kind="fully_dynamic")
    assert engine.component_size(0) == 1
    engine.insert_edge(0)
    engine.insert_edge(1)
    assert engine.component_size(0) == 3
    assert engine.largest_component() == 3
    engine.delete_edge(0)
    assert engine.component_size(0) == 1
    assert engine.component_size(1) == 2


def test_components_json_is_engine_agnostic_and_sorted():
    geometry = build_geometry(2, 4, "torus")
    mask = RandomnessStream(5, ("json",)).uniforms(0, geometry.num_edges) < 0.4
    dumps = []
    for kind in ("naive", "fully_dynamic"):
        engine = create_engine(geometry, None, kind=kind, initial=mask)
        dumps.append(components_json(engine))
    assert dumps[0] == dumps[1]
    for rep, members in dumps[0].items():
        assert members == sorted(members)
        assert int(rep) == min(members)
    covered = sorted(v for members in dumps[0].values() for v in members)
    assert covered == list(range(geometry.num_vertices))
