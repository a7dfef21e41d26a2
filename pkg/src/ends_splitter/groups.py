"""Cayley-graph truncations for groups with infinitely many ends.

Supported presentations are free groups of rank >= 2 and free products of
cyclic groups (at least two factors, not Z/2 * Z/2).  Both have linear-time
normal forms, so vertices of a truncation are canonical words and the word
metric is exact.

Conventions used throughout the package:

* The graph on a truncation joins ``v`` to ``l * v`` for each generator
  letter ``l`` (letters act on the left).  Distances from the identity are
  word lengths.
* The group acts on vertices on the right, ``v -> v * g``; this action is a
  graph automorphism and is what pullbacks of fields use.
* Vertex ids are breadth-first from the identity with a fixed letter order,
  so every construction is reproducible bit for bit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import PresentationError

# Generator name pools.  'e' is reserved for the identity.
_FREE_NAMES = "abcdfghijklmnopqr"
_CYCLIC_NAMES = "stuvwxyz"


class OutOfBall:
    """Sentinel value: a product left the truncation.  Not an error."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "OutOfBall"

    def __bool__(self):
        return False


OUT_OF_BALL = OutOfBall()


# ---------------------------------------------------------------------------
# Presentations and word engines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Presentation:
    """A presentation from the built-in family.

    ``kind`` is ``"free"`` (with ``rank``) or ``"free_product_cyclic"``
    (with ``orders``, where an order of 0 encodes an infinite cyclic
    factor).  Validation enforces infinitely many ends: free rank >= 2, or
    >= 2 cyclic factors that are not exactly Z/2 * Z/2.
    """

    kind: str
    rank: int = 0
    orders: tuple = ()

    def __post_init__(self):
        if self.kind == "free":
            if self.rank < 2:
                raise PresentationError(
                    f"{self.describe()}: free groups need rank >= 2 to have "
                    "infinitely many ends (rank 1 is two-ended)"
                )
            if self.rank > len(_FREE_NAMES):
                raise PresentationError(f"{self.describe()}: rank too large")
        elif self.kind == "free_product_cyclic":
            if len(self.orders) < 2:
                raise PresentationError(
                    f"{self.describe()}: a single cyclic factor has at most "
                    "two ends; need >= 2 factors"
                )
            for o in self.orders:
                if o != 0 and o < 2:
                    raise PresentationError(
                        f"{self.describe()}: cyclic orders must be >= 2 "
                        "(0 for an infinite factor)"
                    )
            if tuple(self.orders) == (2, 2):
                raise PresentationError(
                    f"{self.describe()}: Z/2 * Z/2 is two-ended"
                )
            if len(self.orders) > len(_CYCLIC_NAMES):
                raise PresentationError(f"{self.describe()}: too many factors")
        else:
            raise PresentationError(f"unknown presentation kind {self.kind!r}")

    @classmethod
    def free(cls, rank):
        return cls(kind="free", rank=rank)

    @classmethod
    def free_product_of_cyclics(cls, orders):
        return cls(kind="free_product_cyclic", orders=tuple(orders))

    @classmethod
    def from_config(cls, cfg):
        kind = cfg.get("kind")
        if kind == "free":
            return cls.free(int(cfg["rank"]))
        if kind == "free_product_cyclic":
            orders = []
            for o in cfg["orders"]:
                if o in (0, None, "inf"):
                    orders.append(0)
                else:
                    orders.append(int(o))
            return cls.free_product_of_cyclics(orders)
        raise PresentationError(f"unknown presentation kind {kind!r}")

    def to_config(self):
        if self.kind == "free":
            return {"kind": "free", "rank": self.rank}
        return {"kind": "free_product_cyclic", "orders": list(self.orders)}

    def describe(self):
        if self.kind == "free":
            return f"FreeGroup(rank={self.rank})"
        parts = "*".join("Z" if o == 0 else f"Z/{o}" for o in self.orders)
        return f"FreeProductOfCyclics({parts})"

    def engine(self):
        return _engine_for(self)


@lru_cache(maxsize=None)
def _engine_for(p):
    if p.kind == "free":
        return FreeEngine(p.rank)
    return CyclicProductEngine(p.orders)


class FreeEngine:
    """Reduced-word arithmetic for a free group.

    Letters are integers; letter ``2i`` is generator ``i`` and ``2i + 1``
    its inverse, so ``inv(l) == l ^ 1``.  Words are tuples of letters with
    no adjacent cancelling pair.
    """

    def __init__(self, rank):
        self.rank = rank
        self.n_letters = 2 * rank
        names = []
        for i in range(rank):
            g = _FREE_NAMES[i]
            names.extend([g, g.upper()])
        self.letter_names = names
        self.identity = ()

    def inverse_letter(self, l):
        return l ^ 1

    def mul_letter_left(self, l, w):
        if w and w[0] == (l ^ 1):
            return w[1:]
        return (l,) + w

    def mul_letter_right(self, w, l):
        if w and w[-1] == (l ^ 1):
            return w[:-1]
        return w + (l,)

    def mul(self, u, v):
        out = list(u)
        for l in v:
            if out and out[-1] == (l ^ 1):
                out.pop()
            else:
                out.append(l)
        return tuple(out)

    def inverse(self, w):
        return tuple((l ^ 1) for l in reversed(w))

    def length(self, w):
        return len(w)

    def letters_of(self, w):
        return list(w)

    def render(self, w):
        if not w:
            return "e"
        return "".join(self.letter_names[l] for l in w)


class CyclicProductEngine:
    """Normal-form arithmetic for a free product of cyclic groups.

    Words are tuples of syllables ``(factor, exp)``; adjacent syllables use
    distinct factors.  For a finite factor of order ``o`` the exponent is
    canonical in ``1..o-1``; for an infinite factor (order 0) it is any
    nonzero integer.  Word length charges each syllable its geodesic cost,
    ``min(e, o - e)`` for finite factors.
    """

    def __init__(self, orders):
        self.orders = tuple(orders)
        self.identity = ()
        letters = []   # (factor, delta)
        names = []
        for f, o in enumerate(self.orders):
            g = _CYCLIC_NAMES[f]
            if o == 2:
                letters.append((f, 1))
                names.append(g)
            else:
                letters.extend([(f, 1), (f, -1)])
                names.extend([g, g.upper()])
        self.letters = letters
        self.letter_names = names
        self.n_letters = len(letters)
        self._letter_index = {fd: i for i, fd in enumerate(letters)}

    def inverse_letter(self, l):
        f, d = self.letters[l]
        if self.orders[f] == 2:
            return l
        return self._letter_index[(f, -d)]

    def _canon(self, f, e):
        o = self.orders[f]
        if o:
            e %= o
        return e

    def mul_letter_left(self, l, w):
        f, d = self.letters[l]
        if w and w[0][0] == f:
            e = self._canon(f, w[0][1] + d)
            if e == 0:
                return w[1:]
            return ((f, e),) + w[1:]
        return ((f, self._canon(f, d)),) + w

    def mul_letter_right(self, w, l):
        f, d = self.letters[l]
        if w and w[-1][0] == f:
            e = self._canon(f, w[-1][1] + d)
            if e == 0:
                return w[:-1]
            return w[:-1] + ((f, e),)
        return w + ((f, self._canon(f, d)),)

    def mul(self, u, v):
        out = list(u)
        for f, e in v:
            if out and out[-1][0] == f:
                e2 = self._canon(f, out[-1][1] + e)
                if e2 == 0:
                    out.pop()
                else:
                    out[-1] = (f, e2)
            else:
                out.append((f, self._canon(f, e)))
        return tuple(out)

    def inverse(self, w):
        return tuple((f, self._canon(f, -e)) for f, e in reversed(w))

    def _syllable_length(self, f, e):
        o = self.orders[f]
        if o == 0:
            return abs(e)
        return min(e, o - e)

    def length(self, w):
        return sum(self._syllable_length(f, e) for f, e in w)

    def letters_of(self, w):
        out = []
        for f, e in w:
            o = self.orders[f]
            if o == 0:
                d = 1 if e > 0 else -1
                out.extend([self._letter_index[(f, d)]] * abs(e))
            elif e <= o - e:
                out.extend([self._letter_index[(f, 1)]] * e)
            else:
                out.extend([self._letter_index[(f, -1)]] * (o - e))
        return out

    def render(self, w):
        if not w:
            return "e"
        parts = []
        for f, e in w:
            o = self.orders[f]
            g = _CYCLIC_NAMES[f]
            if o == 0 and e < 0:
                g, e = g.upper(), -e
            elif o and e > o - e:
                g, e = g.upper(), o - e
            parts.append(g if e == 1 else f"{g}{e}")
        return "".join(parts)


@dataclass(frozen=True)
class Element:
    """A group element in normal form, usable on any truncation of the
    same presentation."""

    presentation: Presentation
    word: tuple

    def __mul__(self, other):
        eng = self.presentation.engine()
        return Element(self.presentation, eng.mul(self.word, other.word))

    def inverse(self):
        eng = self.presentation.engine()
        return Element(self.presentation, eng.inverse(self.word))

    def length(self):
        return self.presentation.engine().length(self.word)

    def letters(self):
        return self.presentation.engine().letters_of(self.word)

    def __str__(self):
        return self.presentation.engine().render(self.word)

    def __repr__(self):
        return f"Element({self})"


@dataclass(frozen=True)
class Vertex:
    id: int
    word: str


# ---------------------------------------------------------------------------
# Truncations
# ---------------------------------------------------------------------------

@dataclass
class Truncation:
    """The ball of radius ``radius`` around the identity, with its shell.

    ``nbr[v, l]`` is the id of ``l * v`` or -1 when that product leaves the
    ball.  ``parent`` strips the leading letter; ``parent_letter[v]`` is
    that letter, so ``v == parent_letter[v] * parent[v]`` for v != 0.
    Immutable after construction; safe for concurrent reads.
    """

    presentation: Presentation | None
    radius: int
    nbr: np.ndarray
    dist: np.ndarray
    parent: np.ndarray
    parent_letter: np.ndarray
    shell_mask: np.ndarray
    stored_words: list | None = None
    _caches: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.nbr.shape[0]

    @property
    def n_letters(self):
        return self.nbr.shape[1]

    @property
    def interior_mask(self):
        return ~self.shell_mask

    def interior_ids(self):
        return np.flatnonzero(self.interior_mask)

    def shell_ids(self):
        return np.flatnonzero(self.shell_mask)

    def degrees(self):
        if "deg" not in self._caches:
            self._caches["deg"] = (self.nbr >= 0).sum(axis=1).astype(np.int64)
        return self._caches["deg"]

    # -- words and elements -------------------------------------------------

    def element(self, v):
        """Group element of vertex ``v`` in normal form."""
        eng = self.presentation.engine()
        if self.stored_words is not None:
            return Element(self.presentation, self.stored_words[v])
        w = eng.identity
        letters = []
        while v != 0:
            letters.append(int(self.parent_letter[v]))
            v = int(self.parent[v])
        for l in letters:
            w = eng.mul_letter_right(w, l)
        return Element(self.presentation, w)

    def word(self, v):
        if self.presentation is None:
            return f"v{v}"
        return str(self.element(v))

    def vertex(self, v):
        return Vertex(id=int(v), word=self.word(v))

    def letter_id(self, letter):
        """Accepts a letter id or a one-character generator/inverse name."""
        if isinstance(letter, (int, np.integer)):
            return int(letter)
        eng = self.presentation.engine()
        return eng.letter_names.index(letter)

    # -- edges ---------------------------------------------------------------

    def edges(self):
        """Undirected edge arrays (eu, ev, eletter), eu < ev, sorted by
        (eu, eletter).  The fixed order makes energy sums reproducible."""
        if "edges" not in self._caches:
            L = self.n_letters
            u = np.repeat(np.arange(self.n, dtype=np.int64), L)
            l = np.tile(np.arange(L, dtype=np.int8), self.n)
            v = self.nbr.ravel().astype(np.int64)
            keep = (v >= 0) & (u < v)
            self._caches["edges"] = (u[keep], v[keep], l[keep])
        return self._caches["edges"]

    def n_edges(self):
        return len(self.edges()[0])

    def csr_adjacency(self):
        from scipy.sparse import coo_matrix

        if "csr" not in self._caches:
            eu, ev, _ = self.edges()
            data = np.ones(2 * len(eu))
            rows = np.concatenate([eu, ev])
            cols = np.concatenate([ev, eu])
            a = coo_matrix((data, (rows, cols)), shape=(self.n, self.n))
            self._caches["csr"] = a.tocsr()
        return self._caches["csr"]

    # -- the right action ----------------------------------------------------

    def right_mult_table(self, letter):
        """id table for v -> v * letter, -1 where the product leaves the
        ball.  Built once per letter by walking spheres outward."""
        letter = self.letter_id(letter)
        key = ("rmul", letter)
        if key not in self._caches:
            eng = self.presentation.engine()
            r = np.full(self.n, -1, dtype=np.int64)
            r[0] = self.nbr[0, letter]
            order = np.argsort(self.dist, kind="stable")[1:]
            # v = parent_letter * parent, so v*l = parent_letter * (parent*l);
            # walk spheres outward so parents are resolved first
            for start in _sphere_slices(self.dist, order):
                ids = order[start]
                rp = r[self.parent[ids]]
                ok = rp >= 0
                res = np.full(len(ids), -1, dtype=np.int64)
                res[ok] = self.nbr[rp[ok], self.parent_letter[ids[ok]]]
                r[ids] = res
            self._caches[key] = r
        return self._caches[key]

    def rmul_ids(self, ids, element):
        """Vectorized v -> v * g on an id array; -1 marks OutOfBall."""
        out = np.asarray(ids, dtype=np.int64).copy()
        for l in element.letters():
            table = self.right_mult_table(l)
            ok = out >= 0
            out[ok] = table[out[ok]]
        return out

    def word_ball_paths(self, r):
        """Geodesic letter sequences for all nontrivial elements of length
        <= r, in a deterministic order."""
        key = ("paths", r)
        if key not in self._caches:
            self._caches[key] = [
                e.letters() for e in enumerate_elements(self.presentation, r)
                if e.word
            ]
        return self._caches[key]

    def word_ball(self, center_ids, r):
        """Ids of the exact word-metric ball of radius r around a vertex
        set, clipped to the truncation.

        Balls around x are left translates {w * x : |w| <= r}, so the chase
        runs through the adjacency tables, innermost letter first.
        """
        centers = np.atleast_1d(np.asarray(center_ids, dtype=np.int64))
        if r <= 0:
            return np.unique(centers)
        pieces = [centers]
        for path in self.word_ball_paths(r):
            cur = centers.copy()
            for l in reversed(path):
                ok = cur >= 0
                cur[ok] = self.nbr[cur[ok], l]
            pieces.append(cur[cur >= 0])
        return np.unique(np.concatenate(pieces))

    def word_distance(self, u, v):
        """Exact word-metric distance between two vertices (length of the
        left quotient, matching edges v ~ l * v)."""
        a = self.element(u)
        b = self.element(v)
        return (b * a.inverse()).length()

    def graph_distances_from(self, sources, allowed_mask=None):
        """BFS distances inside the truncation (induced metric when
        allowed_mask is given); -1 marks unreachable."""
        dist = np.full(self.n, -1, dtype=np.int64)
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if allowed_mask is not None:
            sources = sources[allowed_mask[sources]]
        dist[sources] = 0
        frontier = sources
        d = 0
        while len(frontier):
            d += 1
            nxt = self.nbr[frontier].ravel()
            nxt = nxt[nxt >= 0]
            if allowed_mask is not None:
                nxt = nxt[allowed_mask[nxt]]
            nxt = nxt[dist[nxt] < 0]
            if len(nxt) == 0:
                break
            nxt = np.unique(nxt)
            dist[nxt] = d
            frontier = nxt
        return dist


def _sphere_slices(dist, order):
    """Contiguous slices of ``order`` grouped by distance value."""
    if len(order) == 0:
        return
    d = dist[order]
    bounds = np.flatnonzero(np.diff(d)) + 1
    start = 0
    for b in itertools.chain(bounds, [len(order)]):
        yield slice(start, b)
        start = b


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_truncation(p, radius):
    """The ball of the Cayley graph with full adjacency and a marked shell.

    Vertex ids are contiguous breadth-first from the identity (id 0).
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if not isinstance(p, Presentation):
        raise PresentationError(f"not a presentation: {p!r}")
    if p.kind == "free":
        return _build_free_tree(p, radius)
    return _build_generic(p, radius)


def _build_free_tree(p, radius):
    """Closed-form breadth-first layout of the 2n-regular tree ball."""
    L = 2 * p.rank
    sphere_sizes = [1] + [L * (L - 1) ** (k - 1) for k in range(1, radius + 1)]
    starts = np.concatenate([[0], np.cumsum(sphere_sizes)])
    n = int(starts[-1])

    nbr = np.full((n, L), -1, dtype=np.int64)
    dist = np.zeros(n, dtype=np.int32)
    parent = np.full(n, -1, dtype=np.int64)
    parent_letter = np.zeros(n, dtype=np.int8)

    # letters l != m^1 in increasing order, for each incoming letter m
    reduced = np.array(
        [[l for l in range(L) if l != (m ^ 1)] for m in range(L)],
        dtype=np.int8,
    )

    root_children = np.arange(1, L + 1, dtype=np.int64)
    nbr[0, :] = root_children
    nbr[root_children, np.arange(L) ^ 1] = 0
    parent[root_children] = 0
    parent_letter[root_children] = np.arange(L, dtype=np.int8)
    dist[root_children] = 1

    prev_ids = root_children
    prev_inc = np.arange(L, dtype=np.int8)
    for k in range(2, radius + 1):
        m = len(prev_ids)
        child_letters = reduced[prev_inc]                # (m, L-1)
        child_ids = starts[k] + np.arange(m * (L - 1), dtype=np.int64)
        child_ids = child_ids.reshape(m, L - 1)
        nbr[prev_ids[:, None], child_letters] = child_ids
        nbr[child_ids, child_letters ^ 1] = prev_ids[:, None]
        flat = child_ids.ravel()
        parent[flat] = np.repeat(prev_ids, L - 1)
        parent_letter[flat] = child_letters.ravel()
        dist[flat] = k
        prev_ids = flat
        prev_inc = child_letters.ravel()

    shell = dist == radius
    return Truncation(
        presentation=p, radius=radius, nbr=nbr, dist=dist, parent=parent,
        parent_letter=parent_letter, shell_mask=shell,
    )


def _build_generic(p, radius):
    """Sphere-by-sphere normal-form enumeration; works for every built-in
    presentation and doubles as the brute-force oracle for the tree
    layout."""
    eng = p.engine()
    L = eng.n_letters

    words = [eng.identity]
    index = {eng.identity: 0}
    dist_list = [0]
    parent_list = [-1]
    pletter_list = [0]

    sphere = [eng.identity]
    for k in range(1, radius + 1):
        nxt = []
        for w in sphere:
            for l in range(L):
                u = eng.mul_letter_left(l, w)
                if eng.length(u) != k or u in index:
                    continue
                index[u] = len(words)
                words.append(u)
                dist_list.append(k)
                parent_list.append(index[w])
                pletter_list.append(l)
                nxt.append(u)
        sphere = nxt

    n = len(words)
    nbr = np.full((n, L), -1, dtype=np.int64)
    for v, w in enumerate(words):
        for l in range(L):
            u = eng.mul_letter_left(l, w)
            nbr[v, l] = index.get(u, -1)

    dist = np.asarray(dist_list, dtype=np.int32)
    return Truncation(
        presentation=p, radius=radius, nbr=nbr, dist=dist,
        parent=np.asarray(parent_list, dtype=np.int64),
        parent_letter=np.asarray(pletter_list, dtype=np.int8),
        shell_mask=dist == radius,
        stored_words=words,
    )


def path_truncation(n_interior):
    """A path with ``n_interior`` interior vertices and both endpoints
    marked as shell.

    Stand-in for a two-ended truncation in spectral calibration; the
    presentation family itself rejects two-ended groups, so this bypasses
    presentations entirely.
    """
    n = n_interior + 2
    nbr = np.full((n, 2), -1, dtype=np.int64)
    nbr[:-1, 0] = np.arange(1, n)
    nbr[1:, 1] = np.arange(0, n - 1)
    dist = np.arange(n, dtype=np.int32)
    parent = np.arange(-1, n - 1, dtype=np.int64)
    shell = np.zeros(n, dtype=bool)
    shell[0] = shell[-1] = True
    return Truncation(
        presentation=None, radius=n - 1, nbr=nbr, dist=dist, parent=parent,
        parent_letter=np.zeros(n, dtype=np.int8), shell_mask=shell,
    )


# ---------------------------------------------------------------------------
# Group samples, generator action, nets
# ---------------------------------------------------------------------------

def enumerate_elements(p, r):
    """All group elements of word length <= r, deduplicated, breadth-first
    with the fixed letter order (identity first)."""
    eng = p.engine()
    out = [Element(p, eng.identity)]
    seen = {eng.identity}
    sphere = [eng.identity]
    for k in range(1, r + 1):
        nxt = []
        for w in sphere:
            for l in range(eng.n_letters):
                u = eng.mul_letter_left(l, w)
                if eng.length(u) != k or u in seen:
                    continue
                seen.add(u)
                out.append(Element(p, u))
                nxt.append(u)
        sphere = nxt
    return out


def group_ball(t, r):
    """Elements of word length <= r, for action and pullback samples."""
    if r > t.radius:
        raise ValueError("sample radius exceeds the truncation radius")
    return enumerate_elements(t.presentation, r)


def apply_generator(t, v, letter):
    """Right multiplication v -> v * letter; OUT_OF_BALL when the product
    has word length beyond the truncation radius."""
    if isinstance(v, Vertex):
        v = v.id
    table = t.right_mult_table(letter)
    res = int(table[v])
    return OUT_OF_BALL if res < 0 else res


@dataclass
class Net:
    """Greedy maximal delta-separated vertex set containing the identity.

    Members are pairwise at word distance >= spacing, and every vertex is
    within word distance spacing of a member.
    """

    spacing: int
    member_ids: np.ndarray
    covering_radius: int

    @property
    def size(self):
        return len(self.member_ids)


def build_net(t, delta):
    if delta < 1:
        raise ValueError("net spacing must be >= 1")
    if delta == 1:
        members = np.arange(t.n, dtype=np.int64)
        return Net(spacing=1, member_ids=members, covering_radius=0)

    if t.presentation is not None and t.presentation.kind == "free" and delta == 2:
        members = _net_tree_delta2(t)
    else:
        members = _net_greedy(t, delta)

    cover = t.graph_distances_from(members)
    covering_radius = int(cover.max())
    return Net(spacing=delta, member_ids=members,
               covering_radius=covering_radius)


def _net_tree_delta2(t):
    # Trees have no same-sphere edges, so whole spheres are kept at once.
    blocked = np.zeros(t.n, dtype=bool)
    members = []
    for sl in _sphere_slices(t.dist, np.arange(t.n)):
        ids = np.arange(sl.start, sl.stop, dtype=np.int64)
        keep = ids[~blocked[ids]]
        if len(keep) == 0:
            continue
        members.append(keep)
        nb = t.nbr[keep].ravel()
        blocked[nb[nb >= 0]] = True
    return np.concatenate(members)

def _net_greedy(t, delta):
    # Exact word-metric blocking: the ball around a kept member is its set
    # of left translates, reached through the adjacency tables.
    paths = t.word_ball_paths(delta - 1)
    tables = []
    for path in paths:
        tab = np.arange(t.n, dtype=np.int64)
        for l in reversed(path):
            ok = tab >= 0
            tab[ok] = t.nbr[tab[ok], l]
        tables.append(tab)
    block_matrix = np.stack(tables, axis=1) if tables else None

    blocked = np.zeros(t.n, dtype=bool)
    members = []
    for v in range(t.n):
        if blocked[v]:
            continue
        members.append(v)
        if block_matrix is not None:
            row = block_matrix[v]
            blocked[row[row >= 0]] = True
    return np.asarray(members, dtype=np.int64)
