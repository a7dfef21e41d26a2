import numpy as np
import pytest

from ends_splitter.errors import CrossingWalls, NoRegularValue, NotATree
from ends_splitter.ends import make_end_function
from ends_splitter.groups import build_truncation, group_ball
from ends_splitter.harmonic import (
    HarmonicField,
    PartialField,
    pullback,
    solve_dirichlet,
)
from ends_splitter.walls import (
    Wall,
    WallConfig,
    WallSystem,
    action_on_tree,
    assert_noncrossing,
    build_wall_tree,
    build_walls,
    choose_threshold,
    indecomposable_regions,
    trichotomy,
    wall_tree_dot,
)

import oracles


def element(t, word):
    r = max((len(word), 1))
    for g in group_ball(t, r):
        if str(g) == word:
            return g
    raise KeyError(word)


def synthetic(t, values, domain=None):
    dom = np.ones(t.n, dtype=bool) if domain is None else domain
    return PartialField(truncation=t, values=np.asarray(values, float),
                        domain=dom, label="synthetic")


# -- trichotomy ----------------------------------------------------------------

def test_identity_is_eq_h(h_first_letter_r8):
    v = trichotomy(h_first_letter_r8, element(h_first_letter_r8.truncation, "e"))
    assert v.relation == "eq_h"
    assert v.max_slack == 0.0


def test_generator_toward_the_cluster_raises_the_field(h_first_letter_r8):
    t = h_first_letter_r8.truncation
    v = trichotomy(h_first_letter_r8, element(t, "a"))
    assert v.relation == "gt_h"
    # oracle: direct pointwise comparison
    p = pullback(h_first_letter_r8, element(t, "a"))
    dom = p.domain
    assert (p.values[dom] > h_first_letter_r8.values[dom] - 1e-12).all()


def test_all_radius1_verdicts_match_pointwise_scan(h_first_letter_r8):
    h = h_first_letter_r8
    t = h.truncation
    for g in group_ball(t, 1):
        v = trichotomy(h, g)
        p = pullback(h, g)
        dom = p.domain
        vals, base = p.values[dom], h.values[dom]
        ref = base if v.relation.endswith("_h") and "minus" not in v.relation \
            else 1 - base
        if v.relation.startswith("eq"):
            assert np.abs(vals - ref).max() <= 1e-9
        elif v.relation.startswith("lt"):
            assert (vals <= ref + 1e-9).all()
        elif v.relation.startswith("gt"):
            assert (vals >= ref - 1e-9).all()
        else:
            pytest.fail(f"unexpected violation for {g}")


def test_synthetic_complement_detects_eq_one_minus_h(h_first_letter_r8):
    h = h_first_letter_r8
    t = h.truncation
    k = synthetic(t, 1.0 - h.values)
    v = trichotomy(h, element(t, "e"), pulled=k)
    assert v.relation == "eq_one_minus_h"


def test_violation_carries_witness(t_f2_r4):
    # a field that is neither comparable to h nor to 1-h
    chi = make_end_function(t_f2_r4, 1, rule="first_letter:a")
    h = solve_dirichlet(t_f2_r4, chi)
    vals = h.values.copy()
    vals[0] = h.values[0] + 0.3
    vals[1] = h.values[1] - 0.3
    v = trichotomy(h, element(t_f2_r4, "e"), pulled=synthetic(t_f2_r4, vals))
    assert v.relation == "violation"
    assert v.witness in (0, 1)
    assert v.max_slack > 0


# -- thresholds -----------------------------------------------------------------

def test_first_free_threshold_is_chosen(h_first_letter_r8):
    t = h_first_letter_r8.truncation
    cfg = choose_threshold(h_first_letter_r8, group_ball(t, 1))
    assert cfg.threshold == pytest.approx(0.501)


def test_threshold_skips_crowded_values(t_f2_r4):
    vals = np.full(t_f2_r4.n, 0.501)
    h = HarmonicField(truncation=t_f2_r4, values=vals, boundary_spec=None,
                      residual=0.0, iterations=0)
    cfg = choose_threshold(h, [element(t_f2_r4, "e")])
    assert cfg.threshold == pytest.approx(0.502)


def test_no_regular_value_when_tolerance_swamps(t_f2_r4):
    rng = np.random.default_rng(0)
    vals = 0.5 + 0.1 * rng.random(t_f2_r4.n)
    h = HarmonicField(truncation=t_f2_r4, values=vals, boundary_spec=None,
                      residual=0.0, iterations=0)
    with pytest.raises(NoRegularValue):
        choose_threshold(h, [element(t_f2_r4, "e")], equality_tol=0.2)


# -- walls ----------------------------------------------------------------------

def test_identity_sample_gives_one_wall(h_first_letter_r8):
    h = h_first_letter_r8
    t = h.truncation
    sample = group_ball(t, 0)
    cfg = choose_threshold(h, sample, sample_radius=0)
    system = build_walls(h, cfg, sample)
    assert len(system.walls) == 1
    eu, ev, _ = t.edges()
    e = system.walls[0].edge_ids
    assert len(e) == 1
    ends = {t.word(int(eu[e[0]])), t.word(int(ev[e[0]]))}
    assert ends == {"e", "a"}


def test_duplicate_pullbacks_share_a_wall(h_first_letter_r8):
    h = h_first_letter_r8
    t = h.truncation
    e = element(t, "e")
    cfg = choose_threshold(h, [e], sample_radius=0)
    system = build_walls(h, cfg, [e, e])
    assert len(system.walls) == 1
    assert system.walls[0].labels == ["e", "e"]


def test_walls_pairwise_noncrossing(h_first_letter_r8):
    h = h_first_letter_r8
    t = h.truncation
    sample = group_ball(t, 2)
    cfg = choose_threshold(h, sample, sample_radius=2)
    system = build_walls(h, cfg, sample)
    assert len(system.walls) == 17
    assert_noncrossing(t, system)


def test_each_wall_separates_its_sides(h_first_letter_r8):
    h = h_first_letter_r8
    t = h.truncation
    sample = group_ball(t, 1)
    cfg = choose_threshold(h, sample, sample_radius=1)
    system = build_walls(h, cfg, sample)
    adj = oracles.adjacency_dict(t)
    eu, ev, _ = t.edges()
    for w in system.walls:
        cut = {(int(eu[e]), int(ev[e])) for e in w.edge_ids}
        cut |= {(b, a) for a, b in cut}
        dom = np.flatnonzero(system.domain)
        allowed = set(map(int, dom))
        plus = [v for v in allowed if w.side[v] > 0]
        minus = [v for v in allowed if w.side[v] < 0]
        # BFS from a plus vertex without using cut edges stays on one side
        seen = {plus[0]}
        stack = [plus[0]]
        while stack:
            v = stack.pop()
            for u in adj[v]:
                if u in allowed and (v, u) not in cut and u not in seen:
                    seen.add(u)
                    stack.append(u)
        assert seen.isdisjoint(minus)


# -- regions and the tree ----------------------------------------------------------

def test_no_walls_one_region(t_f2_r4):
    chi = make_end_function(t_f2_r4, 1, rule="first_letter:a")
    h = solve_dirichlet(t_f2_r4, chi)
    system = WallSystem(config=WallConfig(threshold=0.501), walls=[],
                        domain=np.ones(t_f2_r4.n, dtype=bool),
                        sample=[], empty_pullbacks=[])
    dec = indecomposable_regions(t_f2_r4, system)
    assert len(dec.regions) == 1
    assert dec.regions[0].size == t_f2_r4.n


def test_one_wall_two_regions(h_first_letter_r8):
    h = h_first_letter_r8
    t = h.truncation
    sample = group_ball(t, 0)
    cfg = choose_threshold(h, sample, sample_radius=0)
    system = build_walls(h, cfg, sample)
    dec = indecomposable_regions(t, system)
    assert len(dec.regions) == 2
    tree = build_wall_tree(t, system, dec)
    assert tree.n_nodes == 2 and tree.n_edges == 1


def test_region_count_matches_separation_closure(f2_small_system):
    t, system, dec = f2_small_system
    # oracle: union-find over unseparated pairs
    dom = [int(v) for v in np.flatnonzero(system.domain)]
    parent = {v: v for v in dom}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i, u in enumerate(dom):
        for v in dom[i + 1:]:
            if all(w.side[u] * w.side[v] >= 0 for w in system.walls):
                parent[find(u)] = find(v)
    classes = len({find(v) for v in dom})
    assert classes == len(dec.regions)


@pytest.fixture(scope="module")
def f2_small_system(f2):
    t = build_truncation(f2, 5)
    chi = make_end_function(t, 1, rule="first_letter:a")
    h = solve_dirichlet(t, chi)
    sample = group_ball(t, 2)
    cfg = choose_threshold(h, sample, sample_radius=2)
    system = build_walls(h, cfg, sample)
    dec = indecomposable_regions(t, system)
    return t, system, dec


def test_euler_relation(f2_small_system):
    t, system, dec = f2_small_system
    tree = build_wall_tree(t, system, dec)
    assert tree.n_edges == tree.n_nodes - 1


def test_randomized_end_data_trees_or_logged_diagnostics(t_f2_r6):
    # every nonconstant assignment either assembles a tree or surfaces a
    # sliver/crossing diagnostic; nothing third
    from ends_splitter.ends import all_nonconstant_end_functions
    trees = 0
    diagnostics = 0
    for chi in all_nonconstant_end_functions(t_f2_r6, 1):
        h = solve_dirichlet(t_f2_r6, chi)
        sample = group_ball(t_f2_r6, 1)
        cfg = choose_threshold(h, sample, sample_radius=1)
        system = build_walls(h, cfg, sample)
        try:
            dec = indecomposable_regions(t_f2_r6, system)
            tree = build_wall_tree(t_f2_r6, system, dec)
        except (CrossingWalls, NotATree):
            diagnostics += 1
            continue
        trees += 1
        assert tree.n_edges == tree.n_nodes - 1
    assert trees + diagnostics == 14
    # the single-branch assignments always build trees
    assert trees >= 8


def test_crossing_walls_detected(t_f2_r4):
    # synthetic pair on a path: one wall separates the other's endpoints
    from ends_splitter.groups import path_truncation
    t = path_truncation(2)   # vertices 0-1-2-3
    side_a = np.array([-1, -1, 1, 1], dtype=np.int8)
    side_b = np.array([-1, 1, 1, -1], dtype=np.int8)
    wall_a = Wall(labels=["a"], edge_ids=np.array([1]), side=side_a)
    wall_b = Wall(labels=["b"], edge_ids=np.array([0, 2]), side=side_b)
    system = WallSystem(config=WallConfig(threshold=0.5),
                        walls=[wall_a, wall_b],
                        domain=np.ones(4, dtype=bool), sample=[],
                        empty_pullbacks=[])
    with pytest.raises(CrossingWalls):
        assert_noncrossing(t, system)
    with pytest.raises((CrossingWalls, NotATree)):
        dec = indecomposable_regions(t, system)
        build_wall_tree(t, system, dec)


def test_wall_tree_dot_roundtrip(f2_small_system):
    t, system, dec = f2_small_system
    tree = build_wall_tree(t, system, dec)
    nodes, edges = oracles.parse_dot(wall_tree_dot(tree))
    assert len(nodes) == tree.n_nodes
    assert len(edges) == tree.n_edges


# -- the action -------------------------------------------------------------------

@pytest.fixture(scope="module")
def f2_action(f2):
    t = build_truncation(f2, 8)
    chi = make_end_function(t, 1, rule="first_letter:a")
    h = solve_dirichlet(t, chi)
    sample = group_ball(t, 2)
    cfg = choose_threshold(h, sample, sample_radius=2)
    system = build_walls(h, cfg, sample)
    dec = indecomposable_regions(t, system)
    tree = build_wall_tree(t, system, dec)
    action = action_on_tree(t, h, system, tree, sample)
    return t, h, system, tree, action, sample


def test_identity_acts_trivially(f2_action):
    t, h, system, tree, action, sample = f2_action
    rmap = action.region_maps["e"]
    assert rmap == list(range(tree.n_nodes))
    assert action.wall_images["e"] == [f"wall_{i}"
                                       for i in range(len(system.walls))]


def test_h_wall_precisely_invariant(f2_action):
    t, h, system, tree, action, sample = f2_action
    for g, outcome in action.h_wall_invariance.items():
        assert outcome in ("equal", "disjoint", "out_of_window")
        if g == "e":
            assert outcome == "equal"
        else:
            assert outcome != "overlap"


def test_translation_moves_the_wall_off_itself(f2_action):
    t, h, system, tree, action, sample = f2_action
    assert action.h_wall_invariance["aa"] == "disjoint"


def test_no_inversions_and_no_fixed_regions(f2_action):
    *_, action, sample = f2_action
    assert action.inversions == []
    assert action.fixed_regions == []


def test_stabilizers_contain_only_identity_here(f2_action):
    *_, action, sample = f2_action
    assert all(s == 1 for s in action.stabilizer_sizes)


def test_violation_counts_do_not_increase_with_radius(f2):
    counts = {}
    for rho in (6, 8):
        t = build_truncation(f2, rho)
        chi = make_end_function(t, 1, rule="first_letter:a")
        h = solve_dirichlet(t, chi)
        sample = group_ball(t, 2)
        counts[rho] = sum(
            1 for g in sample if trichotomy(h, g).is_violation())
    assert counts[8] <= counts[6]
