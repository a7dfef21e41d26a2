"""Ends at truncation scale: complement components, end classes, clusters,
and the uniform connectivity function.

A complement component is "unbounded" exactly when it touches the shell,
the only finite certificate of escaping to infinity.  Ball-shaped removed
sets follow the interior convention: the complement of a radius-r ball
removes the closed ball of radius r - 1, which is the discrete reading of
removing the open ball.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EndsSplitterError

INFINITE_DIAMETER = -1   # profile sentinel: +infinity at window scale


@dataclass
class ComplementComponent:
    removed: np.ndarray
    members: np.ndarray
    unbounded: bool
    boundary_attachment: np.ndarray
    id: int = 0

    @property
    def size(self):
        return len(self.members)


def complement_components(t, removed):
    """Connected components of the truncation minus ``removed``.

    Deterministic: components are ordered by smallest member id.  The
    removed set is taken literally; callers that mean the complement of a
    radius-r ball pass the ball of radius r - 1.
    """
    removed = np.asarray(removed, dtype=np.int64)
    alive = np.ones(t.n, dtype=bool)
    alive[removed] = False
    removed_mask = ~alive

    comp = np.full(t.n, -1, dtype=np.int64)
    out = []
    for seed in range(t.n):
        if not alive[seed] or comp[seed] >= 0:
            continue
        members = _flood(t, seed, alive, comp, len(out))
        unbounded = bool(t.shell_mask[members].any())
        # vertices of the component adjacent to the removed set
        touches = (removed_mask[t.nbr[members]] & (t.nbr[members] >= 0)).any(axis=1)
        out.append(ComplementComponent(
            removed=removed, members=members, unbounded=unbounded,
            boundary_attachment=members[touches], id=len(out),
        ))
    return out


def _flood(t, seed, alive, comp, label):
    comp[seed] = label
    frontier = np.asarray([seed], dtype=np.int64)
    collected = [frontier]
    while len(frontier):
        nxt = t.nbr[frontier].ravel()
        nxt = nxt[nxt >= 0]
        nxt = nxt[alive[nxt]]
        nxt = nxt[comp[nxt] < 0]
        if len(nxt) == 0:
            break
        nxt = np.unique(nxt)
        comp[nxt] = label
        collected.append(nxt)
        frontier = nxt
    return np.sort(np.concatenate(collected))


@dataclass
class EndClass:
    """An unbounded component of the complement of a ball around the
    identity, standing in for a clopen set of ends."""

    id: int
    base_radius: int
    component: ComplementComponent
    representative_word: str

    @property
    def members(self):
        return self.component.members

    def summary(self):
        return {
            "id": self.id,
            "base_radius": self.base_radius,
            "representative_vertex_word": self.representative_word,
            "size": int(self.component.size),
            "unbounded": bool(self.component.unbounded),
        }


def end_classes(t, r):
    """End classes at base radius r: unbounded components of the complement
    of B_r(identity), i.e. of the vertex set at distance >= r."""
    if not (1 <= r < t.radius):
        raise ValueError(f"need 1 <= r < truncation radius, got r={r}")
    removed = np.flatnonzero(t.dist <= r - 1)
    comps = complement_components(t, removed)
    unbounded = [c for c in comps if c.unbounded]
    if not unbounded:
        raise EndsSplitterError(
            f"no unbounded complement component at base radius {r}; "
            "the truncation is too small"
        )
    classes = []
    for c in unbounded:
        rep = t.word(int(c.members[0]))
        classes.append(EndClass(
            id=len(classes), base_radius=r, component=c,
            representative_word=rep,
        ))
    return classes


@dataclass
class EndFunction:
    """A {0,1} assignment on the end classes at one base radius."""

    base_radius: int
    classes: list
    values: dict                     # class id -> 0/1
    _caches: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ids = {c.id for c in self.classes}
        if set(self.values) != ids:
            raise EndsSplitterError("end function must be total on end classes")
        for v in self.values.values():
            if v not in (0, 1):
                raise EndsSplitterError("end function values must be 0 or 1")

    @property
    def nonconstant(self):
        vals = set(self.values.values())
        return vals == {0, 1}

    def require_nonconstant(self):
        if not self.nonconstant:
            raise EndsSplitterError("chi must be nonconstant")

    def class_of_vertex(self, t):
        """Vertex -> end class id (-1 off the classes), cached."""
        if "class_of" not in self._caches:
            table = np.full(t.n, -1, dtype=np.int64)
            for c in self.classes:
                table[c.members] = c.id
            self._caches["class_of"] = table
        return self._caches["class_of"]

    def shell_values(self, t):
        """Values transported to shell vertices through their end class."""
        key = "shell_values"
        if key not in self._caches:
            table = self.class_of_vertex(t)
            vals = np.full(t.n, -1, dtype=np.int64)
            for c in self.classes:
                vals[c.members] = self.values[c.id]
            self._caches[key] = vals
        return self._caches[key]

    def assignments_by_word(self):
        return {c.representative_word: int(self.values[c.id])
                for c in self.classes}


def make_end_function(t, r, values_by_word=None, rule=None, default=None):
    """Build an EndFunction from explicit per-class values or a named rule.

    ``values_by_word`` keys are representative vertex words; ``rule``
    supports ``first_letter:<generator>``.
    """
    classes = end_classes(t, r)
    values = {}
    if rule is not None:
        if not rule.startswith("first_letter:"):
            raise EndsSplitterError(f"unknown chi rule {rule!r}")
        gen = rule.split(":", 1)[1]
        for c in classes:
            values[c.id] = 1 if c.representative_word.startswith(gen) else 0
    else:
        by_word = dict(values_by_word or {})
        for c in classes:
            if c.representative_word in by_word:
                values[c.id] = int(by_word.pop(c.representative_word))
            elif default is not None:
                values[c.id] = int(default)
            else:
                raise EndsSplitterError(
                    f"no value for end class {c.representative_word!r} "
                    "and no default given"
                )
        if by_word:
            raise EndsSplitterError(
                f"chi names unknown end classes: {sorted(by_word)}"
            )
    return EndFunction(base_radius=r, classes=classes, values=values)


def all_nonconstant_end_functions(t, r, limit=2 ** 16):
    """Every nonconstant {0,1} assignment at base radius r."""
    classes = end_classes(t, r)
    k = len(classes)
    if 2 ** k - 2 > limit:
        raise EndsSplitterError(
            f"{2 ** k - 2} assignments at base radius {r} exceed the "
            f"enumeration limit {limit}"
        )
    out = []
    for bits in itertools.product((0, 1), repeat=k):
        if len(set(bits)) < 2:
            continue
        values = {c.id: bits[i] for i, c in enumerate(classes)}
        out.append(EndFunction(base_radius=r, classes=classes, values=values))
    return out


def is_cluster(t, chi, component):
    """theta if every end class reaching the shell through the component
    carries chi-value theta; None when the component sees both values.

    The shell trace is the refined end set of the component, so nested or
    partially overlapping end classes are handled uniformly.
    """
    if not component.unbounded:
        raise EndsSplitterError("cluster verdicts are defined for unbounded "
                                "components only")
    vals = chi.shell_values(t)
    trace = component.members[t.shell_mask[component.members]]
    seen = np.unique(vals[trace])
    seen = seen[seen >= 0]
    if len(seen) == 1:
        return int(seen[0])
    return None


def refine_end_classes(t, coarse, fine):
    """Map each end class at the finer radius to the class containing it at
    the coarser radius."""
    mapping = {}
    table = np.full(t.n, -1, dtype=np.int64)
    for c in coarse:
        table[c.members] = c.id
    for f in fine:
        owners = np.unique(table[f.members])
        owners = owners[owners >= 0]
        if len(owners) != 1:
            raise EndsSplitterError("end classes failed to refine")
        mapping[f.id] = int(owners[0])
    return mapping


# ---------------------------------------------------------------------------
# Uniform connectivity
# ---------------------------------------------------------------------------

@dataclass
class PhiEntry:
    R: int
    r: int
    value: int                  # INFINITE_DIAMETER encodes the sentinel
    mode: str                   # "window-exact" or "sampled"
    subsets_checked: int
    witness: tuple = ()

    @property
    def is_infinite(self):
        return self.value == INFINITE_DIAMETER


@dataclass
class ConnectivityProfile:
    samples: dict = field(default_factory=dict)

    def add(self, entry):
        self.samples[entry.r] = entry

    def finite_values(self):
        return {r: e.value for r, e in self.samples.items()
                if not e.is_infinite}


def trace_diameter(t, removed_mask, component, trace_ids):
    """Diameter of the trace through the component's own path metric,
    avoiding shell vertices; INFINITE_DIAMETER when the trace only
    reconnects through the shell (the path may continue beyond the
    window)."""
    if len(trace_ids) <= 1:
        return 0
    allowed = np.zeros(t.n, dtype=bool)
    allowed[component.members] = True
    allowed[t.shell_ids()] = False
    allowed[trace_ids] = True
    best = 0
    for s in trace_ids:
        d = t.graph_distances_from([int(s)], allowed_mask=allowed)
        dt = d[trace_ids]
        if (dt < 0).any():
            return INFINITE_DIAMETER
        best = max(best, int(dt.max()))
    return best


def phi_for_subset(t, member_ids, R):
    """Max over complement components of the trace diameter for one subset
    K; returns (value, per-component detail)."""
    member_ids = np.asarray(member_ids, dtype=np.int64)
    inner = t.word_ball(member_ids, R - 1)
    outer_mask = np.zeros(t.n, dtype=bool)
    outer_mask[t.word_ball(member_ids, R)] = True
    removed_mask = np.zeros(t.n, dtype=bool)
    removed_mask[inner] = True
    comps = complement_components(t, inner)
    worst = 0
    for c in comps:
        trace = c.members[outer_mask[c.members]]
        dia = trace_diameter(t, removed_mask, c, trace)
        if dia == INFINITE_DIAMETER:
            return INFINITE_DIAMETER, len(comps)
        worst = max(worst, dia)
    return worst, len(comps)


def connectivity_phi(t, net, R, r, exhaustive_limit=10 ** 4, seed=0,
                     sample_count=200, window=None):
    """One profile entry: sup over net subsets K with diam(K) <= r of the
    worst trace diameter of complement components of B_R(K).

    Runs exhaustively when the anchored subset family is small enough,
    otherwise draws seeded samples and labels the entry accordingly.
    """
    if R < 1 or r < 0:
        raise ValueError("need R >= 1 and r >= 0")
    if window is None:
        window = max(t.radius - (2 * R + r), 1)
    members = net.member_ids[t.dist[net.member_ids] <= window]

    # candidate subsets anchored at their smallest-id member
    pools = []
    total = 0
    for anchor in members:
        ball = set(int(x) for x in t.word_ball([int(anchor)], r))
        pool = [int(m) for m in members if int(m) > int(anchor)
                and int(m) in ball]
        pools.append((int(anchor), pool))
        total += 2 ** len(pool)
        if total > exhaustive_limit:
            break

    rng = np.random.default_rng(seed)
    best = 0
    witness = ()
    checked = 0

    def consider(subset):
        nonlocal best, witness, checked
        if _word_diameter(t, subset) > r:
            return False
        value, _ = phi_for_subset(t, np.asarray(subset, dtype=np.int64), R)
        checked += 1
        if value == INFINITE_DIAMETER:
            best = INFINITE_DIAMETER
            witness = tuple(subset)
            return True
        if best != INFINITE_DIAMETER and value > best:
            best = value
            witness = tuple(subset)
        return False

    if total <= exhaustive_limit:
        mode = "window-exact"
        done = False
        for anchor, pool in pools:
            for k in range(0, len(pool) + 1):
                for extra in itertools.combinations(pool, k):
                    if consider((anchor,) + extra):
                        done = True
                        break
                if done:
                    break
            if done:
                break
    else:
        mode = "sampled"
        for _ in range(sample_count):
            anchor = int(rng.choice(members))
            ball = t.word_ball([anchor], r)
            ball = ball[np.isin(ball, members)]
            k = int(rng.integers(0, min(len(ball), 6)))
            pick = rng.choice(ball, size=k, replace=False) if k else []
            subset = sorted({anchor, *[int(x) for x in pick]})
            if consider(tuple(subset)):
                break

    return PhiEntry(R=R, r=r, value=best, mode=mode,
                    subsets_checked=checked, witness=witness)


def _word_diameter(t, ids):
    worst = 0
    for i, u in enumerate(ids):
        for v in ids[i + 1:]:
            worst = max(worst, t.word_distance(int(u), int(v)))
    return worst
