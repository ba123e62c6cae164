import random

import numpy as np
import pytest

from fatpaths import layers as L
from fatpaths import throughput as tp
from fatpaths import topology as T
from fatpaths.errors import InvalidParameter


def two_router_link():
    return T.RouterGraph(name="link", num_routers=2, edges=((0, 1),),
                         concentration=1, network_radix=1)


def test_single_commodity_unit_edge():
    g = two_router_link()
    res = tp.mat_general(g, [tp.Commodity(0, 1, 1.0)], method="exact")
    assert res.throughput == pytest.approx(1.0, abs=1e-9)


def test_two_commodities_share_bottleneck():
    g = two_router_link()
    res = tp.mat_general(g, [tp.Commodity(0, 1, 1.0), tp.Commodity(0, 1, 1.0)], method="exact")
    assert res.throughput == pytest.approx(0.5, abs=1e-9)


def test_four_cycle_cross_commodities():
    g = T.RouterGraph(name="c4", num_routers=4, edges=((0, 1), (0, 3), (1, 2), (2, 3)),
                      concentration=1, network_radix=2)
    res = tp.mat_general(g, [tp.Commodity(0, 2, 1.0), tp.Commodity(1, 3, 1.0)], method="exact")
    assert res.throughput == pytest.approx(1.0, abs=1e-9)


def test_disconnected_commodity_zero():
    g = T.RouterGraph(name="two", num_routers=4, edges=((0, 1), (2, 3)),
                      concentration=1, network_radix=1)
    res = tp.mat_general(g, [tp.Commodity(0, 3, 1.0)])
    assert res.throughput == 0.0
    assert "disconnected_commodity" in res.diagnostics


def test_general_approx_within_eps_of_exact():
    rng = random.Random(3)
    for trial in range(4):
        g = T.gen_jellyfish(14, 4, seed=trial)
        comms = [tp.Commodity(*rng.sample(range(14), 2)) for _ in range(5)]
        exact = tp.mat_general(g, comms, method="exact").throughput
        approx = tp.mat_general(g, comms, eps=0.05, method="approx").throughput
        assert approx >= (1 - 0.05) * exact - 1e-9
        assert approx <= exact + 1e-9


def test_demand_scaling_halves_throughput():
    g = T.gen_clique(4)
    comms = [tp.Commodity(0, 1, 1.0), tp.Commodity(2, 3, 2.0)]
    t1 = tp.mat_general(g, comms, method="exact").throughput
    doubled = [tp.Commodity(c.src, c.dst, 2 * c.demand) for c in comms]
    t2 = tp.mat_general(g, doubled, method="exact").throughput
    assert t2 == pytest.approx(t1 / 2, rel=1e-9)


def test_delivered_meets_throughput_share():
    g = T.gen_slimfly(3)
    rng = random.Random(1)
    comms = [tp.Commodity(*rng.sample(range(18), 2)) for _ in range(6)]
    res = tp.mat_general(g, comms, method="exact")
    for c, d in zip(comms, res.delivered):
        assert d >= res.throughput * c.demand - 1e-9


# ---------------------------------------------------------------------------
# layered


def build_tables(g, n, rho, seed=0):
    ls = L.build_layers_random(g, n=n, rho=rho, seed=seed)
    return ls, L.forwarding_tables(g, ls, seed=seed)


def test_layered_single_layer_clique():
    g = T.gen_clique(3)
    ls, tables = build_tables(g, 1, 1.0)
    res = tp.mat_layered(g, ls, tables, [tp.Commodity(0, 1, 1.0)], method="exact")
    assert res.throughput == pytest.approx(1.0, abs=1e-9)
    assert res.per_commodity_flow[(0, 1)] == pytest.approx(1.0, abs=1e-9)


def test_layered_unreachable_layers_are_dropped():
    g = T.gen_slimfly(3)
    ls, tables = build_tables(g, 4, 0.6, seed=2)
    comms = [tp.Commodity(0, 17, 1.0)]
    full = tp.mat_layered(g, ls, tables, comms, method="exact")
    only1 = tp.mat_layered(
        g,
        L.LayerSet(layers=ls.layers[:1], method="RandomSample", rho=1.0),
        L.ForwardingTables(next_hop=tables.next_hop[:1], dist=tables.dist[:1]),
        comms,
        method="exact",
    )
    assert full.throughput >= only1.throughput - 1e-9


def test_layered_all_unreachable_pins_zero():
    g = T.RouterGraph(name="p2", num_routers=3, edges=((0, 1), (1, 2)),
                      concentration=1, network_radix=1)
    ls = L.LayerSet(layers=[L.Layer(index=1, directed_edges=((0, 1),))], method="manual")
    tables = L.forwarding_tables(g, ls, seed=0)
    res = tp.mat_layered(g, ls, tables, [tp.Commodity(0, 2, 1.0)])
    assert res.throughput == 0.0
    assert "all_layers_unreachable" in res.diagnostics


def test_layered_more_layers_never_worse():
    g = T.gen_slimfly(5)
    rng = random.Random(4)
    comms = [tp.Commodity(*rng.sample(range(50), 2)) for _ in range(8)]
    ls9 = L.build_layers_random(g, n=9, rho=0.7, seed=3)
    t9 = L.forwarding_tables(g, ls9, seed=3)
    for n_sub in (1, 3, 6, 9):
        sub = L.LayerSet(layers=ls9.layers[:n_sub], method="RandomSample", rho=0.7)
        tsub = L.ForwardingTables(next_hop=t9.next_hop[:n_sub], dist=t9.dist[:n_sub])
        res = tp.mat_layered(g, sub, tsub, comms, method="exact")
        if n_sub == 1:
            prev = res.throughput
        else:
            assert res.throughput >= prev - 1e-9
            prev = res.throughput


def test_layered_at_most_general():
    g = T.gen_slimfly(3)
    rng = random.Random(5)
    comms = [tp.Commodity(*rng.sample(range(18), 2)) for _ in range(6)]
    ls, tables = build_tables(g, 5, 0.7, seed=6)
    layered = tp.mat_layered(g, ls, tables, comms, method="exact").throughput
    general = tp.mat_general(g, comms, method="exact").throughput
    assert layered <= general + 1e-9


def test_layered_exact_vs_approx():
    g = T.gen_slimfly(3)
    rng = random.Random(7)
    comms = [tp.Commodity(*rng.sample(range(18), 2)) for _ in range(6)]
    ls, tables = build_tables(g, 5, 0.7, seed=8)
    exact = tp.mat_layered(g, ls, tables, comms, method="exact").throughput
    approx = tp.mat_layered(g, ls, tables, comms, eps=0.05, method="approx").throughput
    assert (1 - 0.05) * exact - 1e-9 <= approx <= exact + 1e-9


def test_ksp_solver_runs():
    g = T.gen_clique(4)
    comms = [tp.Commodity(0, 1, 1.0), tp.Commodity(2, 3, 1.0)]
    res = tp.mat_ksp(g, comms, k=3, method="exact")
    assert res.throughput > 0.5


def test_commodity_validation():
    with pytest.raises(InvalidParameter):
        tp.Commodity(0, 0, 1.0)
    with pytest.raises(InvalidParameter):
        tp.Commodity(0, 1, 0.0)


# ---------------------------------------------------------------------------
# LP emission


def test_emit_lp_tiny_instance(tmp_path):
    g = two_router_link()
    ls = L.LayerSet(layers=[L._full_layer(g)], method="RandomSample")
    tables = L.forwarding_tables(g, ls, seed=0)
    comms = [tp.Commodity(0, 1, 1.0)]
    arcs, arc_idx = tp._arcs_of(g)
    problem = tp.FixedPathProblem(
        arcs=arcs, caps=np.ones(len(arcs)), demands=[1.0],
        paths=[[(arc_idx[(0, 1)],)]], labels=[[1]],
    )
    out = str(tmp_path / "tiny.lp")
    tp.emit_lp(problem, out)
    text = open(out).read()
    constraint_lines = [l for l in text.splitlines() if ":" in l and not l.strip().startswith("obj")]
    assert len(constraint_lines) == 2  # one demand row, one used arc
    assert tp.solve_lp_file(out) == pytest.approx(1.0, abs=1e-6)


def test_lp_roundtrip_matches_internal(tmp_path):
    g = T.gen_clique(3)
    ls, tables = build_tables(g, 3, 1.0, seed=1)
    rng = random.Random(2)
    comms = [tp.Commodity(*rng.sample(range(4), 2), 1.0) for _ in range(3)]
    arcs, arc_idx = tp._arcs_of(g)
    paths, labels = [], []
    for c in comms:
        plist, llist = [], []
        for lid in range(1, ls.n + 1):
            walk = L.route(tables, lid, c.src, c.dst)
            if walk is L.UNREACHABLE:
                continue
            plist.append(tuple(arc_idx[(a, b)] for a, b in zip(walk, walk[1:])))
            llist.append(lid)
        paths.append(plist)
        labels.append(llist)
    problem = tp.FixedPathProblem(arcs=arcs, caps=np.ones(len(arcs)),
                                  demands=[c.demand for c in comms],
                                  paths=paths, labels=labels)
    internal = tp.solve_fixed_paths(problem, method="exact").throughput
    out = str(tmp_path / "rt.lp")
    tp.emit_lp(problem, out)
    external = tp.solve_lp_file(out)
    assert external == pytest.approx(internal, abs=1e-6)


def test_variable_count_contract():
    g = T.gen_slimfly(3)
    ls, tables = build_tables(g, 4, 0.7, seed=9)
    rng = random.Random(3)
    comms = [tp.Commodity(*rng.sample(range(18), 2)) for _ in range(5)]
    arcs, arc_idx = tp._arcs_of(g)
    reachable = 0
    for c in comms:
        for lid in range(1, ls.n + 1):
            if L.route(tables, lid, c.src, c.dst) is not L.UNREACHABLE:
                reachable += 1
    paths, labels = [], []
    for c in comms:
        plist, llist = [], []
        for lid in range(1, ls.n + 1):
            walk = L.route(tables, lid, c.src, c.dst)
            if walk is L.UNREACHABLE:
                continue
            plist.append(tuple(arc_idx[(a, b)] for a, b in zip(walk, walk[1:])))
            llist.append(lid)
        paths.append(plist)
        labels.append(llist)
    problem = tp.FixedPathProblem(arcs=arcs, caps=np.ones(len(arcs)),
                                  demands=[1.0] * len(comms), paths=paths, labels=labels)
    assert problem.n_vars == reachable + 1
