import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ends_splitter.errors import PresentationError
from ends_splitter.groups import (
    OUT_OF_BALL,
    Presentation,
    apply_generator,
    build_net,
    build_truncation,
    enumerate_elements,
    group_ball,
    path_truncation,
    _build_generic,
)

import oracles


# -- presentations -------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    lambda: Presentation.free(1),
    lambda: Presentation.free_product_of_cyclics([5]),
    lambda: Presentation.free_product_of_cyclics([2, 2]),
    lambda: Presentation.free_product_of_cyclics([0]),
    lambda: Presentation(kind="nope"),
])
def test_two_ended_and_invalid_presentations_rejected(bad):
    with pytest.raises(PresentationError):
        bad()


def test_rejection_names_the_presentation():
    with pytest.raises(PresentationError, match="FreeGroup"):
        Presentation.free(1)
    with pytest.raises(PresentationError, match="Z/2\\*Z/2"):
        Presentation.free_product_of_cyclics([2, 2])


def test_infinite_factor_encoding():
    p = Presentation.from_config({"kind": "free_product_cyclic",
                                  "orders": [2, "inf"]})
    assert p.orders == (2, 0)
    assert p.engine().n_letters == 3   # s involution, t and its inverse


# -- ball construction ----------------------------------------------------------

def test_f2_radius1_ball(f2):
    t = build_truncation(f2, 1)
    assert t.n == 5
    assert t.word(0) == "e"
    nb = t.nbr[0]
    assert sorted(int(x) for x in nb) == [1, 2, 3, 4]
    assert sorted(t.word(i) for i in range(1, 5)) == ["A", "B", "a", "b"]


def test_f2_sphere_sizes_match_closed_form_and_enumeration(f2):
    for rho in range(1, 7):
        t = build_truncation(f2, rho)
        assert t.n == 2 * 3 ** rho - 1
        assert t.n == len(oracles.free_ball_words(2, rho))


def test_rank3_sphere_sizes_match_enumeration():
    p = Presentation.free(3)
    for rho in range(1, 5):
        t = build_truncation(p, rho)
        assert t.n == len(oracles.free_ball_words(3, rho))


def test_fast_tree_layout_equals_generic_enumeration(f2):
    for rho in (1, 3, 5):
        fast = build_truncation(f2, rho)
        slow = _build_generic(f2, rho)
        assert np.array_equal(fast.nbr, slow.nbr)
        assert np.array_equal(fast.dist, slow.dist)
        assert np.array_equal(fast.parent, slow.parent)
        assert np.array_equal(fast.parent_letter, slow.parent_letter)


def test_z2z3_ball_matches_multiplication_table(z23):
    t = build_truncation(z23, 2)
    oracle = oracles.z2z3_elements(2)
    assert t.n == len(oracle)
    # length spectrum agrees
    ours = sorted(int(d) for d in t.dist)
    theirs = sorted(oracle.values())
    assert ours == theirs


def test_three_involution_sphere_sizes():
    # Z/2 * Z/2 * Z/2: alternating words over three involutions, so the
    # spheres are 3 * 2^(k-1)
    p = Presentation.free_product_of_cyclics([2, 2, 2])
    t = build_truncation(p, 6)
    sizes = [int((t.dist == k).sum()) for k in range(7)]
    assert sizes == [1] + [3 * 2 ** (k - 1) for k in range(1, 7)]


def test_infinite_factor_ball_sizes():
    # Z/2 * Z via string rewriting: s cancels s, t cancels T
    def reduce_prepend(l, w):
        if w and ((l == "s" and w[0] == "s")
                  or (l == "t" and w[0] == "T")
                  or (l == "T" and w[0] == "t")):
            return w[1:]
        return l + w

    seen = {""}
    frontier = [""]
    for _ in range(5):
        nxt = []
        for w in frontier:
            for l in "stT":
                u = reduce_prepend(l, w)
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        frontier = nxt

    p = Presentation.free_product_of_cyclics([2, 0])
    t = build_truncation(p, 5)
    assert t.n == len(seen)


def test_truncation_invariants(t_f2_r4, t_z23_r8):
    for t in (t_f2_r4, t_z23_r8):
        L = t.n_letters
        eng = t.presentation.engine()
        full_degree = L
        for v in range(t.n):
            for l in range(L):
                w = int(t.nbr[v, l])
                if w < 0:
                    continue
                # symmetry: the inverse letter leads back
                assert int(t.nbr[w, eng.inverse_letter(l)]) == v
        deg = t.degrees()
        assert (deg[t.interior_mask] == full_degree).all()
        assert int(t.dist.max()) == t.radius
        assert (t.dist[t.shell_mask] == t.radius).all()
        assert (t.dist[t.interior_mask] < t.radius).all()


# -- generator action ------------------------------------------------------------

def test_apply_generator_examples(t_f2_r4, z23):
    t = t_f2_r4
    va = apply_generator(t, 0, "a")
    assert t.word(va) == "a"
    assert apply_generator(t, va, "A") == 0

    tz = build_truncation(z23, 3)
    vs = apply_generator(tz, 0, "s")
    assert apply_generator(tz, vs, "s") == 0

    t3 = build_truncation(Presentation.free(2), 3)
    deep = int(np.flatnonzero(t3.dist == 3)[0])
    assert apply_generator(t3, deep, "b") is OUT_OF_BALL


@settings(max_examples=60, deadline=None)
@given(v=st.integers(0, 52), letters=st.lists(st.integers(0, 3), max_size=3))
def test_apply_generator_inverse_roundtrip(v, letters):
    t = build_truncation(Presentation.free(2), 3)
    eng = t.presentation.engine()
    cur = v
    trail = []
    for l in letters:
        nxt = apply_generator(t, cur, l)
        if nxt is OUT_OF_BALL:
            break
        trail.append(l)
        cur = nxt
    for l in reversed(trail):
        cur = apply_generator(t, cur, eng.inverse_letter(l))
        assert cur is not OUT_OF_BALL
    assert cur == v


def test_right_mult_table_matches_word_arithmetic(t_z23_r8):
    t = t_z23_r8
    eng = t.presentation.engine()
    rng = np.random.default_rng(3)
    for l in range(eng.n_letters):
        table = t.right_mult_table(l)
        for v in rng.integers(0, t.n, size=25):
            w = eng.mul_letter_right(t.element(int(v)).word, l)
            if eng.length(w) > t.radius:
                assert table[v] == -1
            else:
                assert eng.render(t.element(int(table[v])).word) == eng.render(w)


def test_group_ball_counts(t_f2_r4, t_z23_r8):
    assert len(group_ball(t_f2_r4, 0)) == 1
    assert len(group_ball(t_f2_r4, 1)) == 5
    oracle = oracles.z2z3_elements(2)
    assert len(group_ball(t_z23_r8, 2)) == len(oracle)


def test_group_ball_radius_guard(t_f2_r4):
    with pytest.raises(ValueError):
        group_ball(t_f2_r4, 5)


def test_element_algebra(f2):
    a, A, b = [e for e in enumerate_elements(f2, 1) if str(e) in "aAb"]
    assert str(a * b) == "ab"
    assert str(a * A) == "e"
    assert (a * b).inverse().length() == 2
    assert str((a * b) * (a * b).inverse()) == "e"


# -- word metric and nets ---------------------------------------------------------

def test_word_distance_matches_graph_bfs_on_tree(t_f2_r4):
    t = t_f2_r4
    rng = np.random.default_rng(11)
    for _ in range(30):
        u, v = (int(x) for x in rng.integers(0, t.n, size=2))
        d = t.graph_distances_from([u])
        assert t.word_distance(u, v) == int(d[v])


def test_net_delta1_is_everything(t_f2_r4):
    net = build_net(t_f2_r4, 1)
    assert net.size == t_f2_r4.n


def test_net_delta2_on_radius2_keeps_even_spheres(f2):
    t = build_truncation(f2, 2)
    net = build_net(t, 2)
    dists = sorted(set(int(t.dist[v]) for v in net.member_ids))
    assert dists == [0, 2]
    assert net.size == 1 + 12


def test_net_huge_delta_is_identity_alone(t_f2_r4):
    net = build_net(t_f2_r4, 2 * t_f2_r4.radius + 1)
    assert list(net.member_ids) == [0]


@pytest.mark.parametrize("delta", [2, 3])
def test_net_separation_and_cover(t_z23_r8, delta):
    t = t_z23_r8
    net = build_net(t, delta)
    ids = [int(v) for v in net.member_ids]
    assert 0 in ids
    for i, u in enumerate(ids):
        for v in ids[i + 1:]:
            assert t.word_distance(u, v) >= delta
    assert net.covering_radius <= delta


def test_path_truncation_shape():
    t = path_truncation(5)
    assert t.n == 7
    assert list(t.shell_ids()) == [0, 6]
    assert t.degrees().tolist() == [1, 2, 2, 2, 2, 2, 1]
