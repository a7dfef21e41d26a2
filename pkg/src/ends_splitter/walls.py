"""Walls, indecomposable regions, the wall tree, and the group action.

Walls live on edges: a wall of the pullback f = (v -> h(v*g)) at threshold
t is the set of edges where f - t changes sign.  The threshold is chosen
near 1/2 but bounded away from every sampled field value, so sign patterns
are stable and the discrete level set meets no vertex.

At a finite radius h is only approximately energy-minimizing, so failures
of the pointwise trichotomy are recorded as data with their witnesses,
never errors; their count shrinking under larger radii is the observable
shadow of minimality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CrossingWalls, EndsSplitterError, NoRegularValue, NotATree
from .harmonic import pullback

RELATIONS = ("eq_h", "lt_h", "gt_h", "eq_one_minus_h", "lt_one_minus_h",
             "gt_one_minus_h")


@dataclass
class WallConfig:
    threshold: float
    sample_radius: int = 3
    equality_tol: float = 1e-9
    step: float = 1e-3


@dataclass
class TrichotomyVerdict:
    g: str
    relation: str               # one of RELATIONS or "violation"
    max_slack: float
    witness: int | None = None

    def is_violation(self):
        return self.relation == "violation"


def trichotomy(h, g, equality_tol=1e-9, pulled=None):
    """Classify the pullback of h along g against h and 1 - h pointwise on
    the common domain.  ``pulled`` overrides the pullback (tests)."""
    f = pulled if pulled is not None else pullback(h, g)
    if not f.domain.any():
        raise EndsSplitterError(f"pullback domain of {g} is empty")
    dom = f.domain
    base = h.values[dom]
    vals = f.values[dom]
    ids = np.flatnonzero(dom)

    failures = {}
    for rel, ref in (("h", base), ("one_minus_h", 1.0 - base)):
        diff = vals - ref
        hi = float(diff.max())
        lo = float(diff.min())
        failures[f"eq_{rel}"] = float(np.abs(diff).max())
        # lt fails by the amount diff exceeds 0; gt symmetric
        failures[f"lt_{rel}"] = max(hi, 0.0) if lo < -equality_tol else np.inf
        failures[f"gt_{rel}"] = max(-lo, 0.0) if hi > equality_tol else np.inf

    for rel in RELATIONS:
        if failures[rel] <= equality_tol:
            return TrichotomyVerdict(g=str(g), relation=rel,
                                     max_slack=failures[rel])
    best = min(RELATIONS, key=lambda r: failures[r])
    # witness: the vertex realizing the smallest relation's failure
    if best.startswith("eq"):
        ref = base if best.endswith("_h") else 1.0 - base
        w = ids[int(np.argmax(np.abs(vals - ref)))]
    else:
        ref = base if best.endswith("_h") and "minus" not in best else 1.0 - base
        diff = vals - ref
        w = ids[int(np.argmax(diff if best.startswith("lt") else -diff))]
    return TrichotomyVerdict(g=str(g), relation="violation",
                             max_slack=float(failures[best]), witness=int(w))


def choose_threshold(h, sample, equality_tol=1e-9, step=1e-3,
                     sample_radius=None):
    """Smallest t = 1/2 + k*step that keeps distance >= equality_tol from
    every sampled pullback value; NoRegularValue if none below 0.6 works."""
    values = []
    for g in sample:
        f = pullback(h, g)
        values.append(f.values[f.domain])
    allv = np.unique(np.concatenate(values))
    k = 1
    while True:
        cand = 0.5 + k * step
        if cand >= 0.6:
            raise NoRegularValue(
                "no threshold in (0.5, 0.6) stays clear of the sampled "
                f"values at tolerance {equality_tol:.1e}"
            )
        lo = np.searchsorted(allv, cand - equality_tol, side="left")
        hi = np.searchsorted(allv, cand + equality_tol, side="right")
        if lo == hi:
            return WallConfig(
                threshold=float(cand),
                sample_radius=sample_radius if sample_radius is not None
                else max((g.length() for g in sample), default=0),
                equality_tol=equality_tol, step=step,
            )
        k += 1


@dataclass
class Wall:
    labels: list                # group elements sharing this wall
    edge_ids: np.ndarray        # sorted indices into the edge arrays
    side: np.ndarray            # int8 per vertex: +1 above, -1 below, 0 off-domain

    @property
    def label(self):
        return self.labels[0]

    def edge_key(self):
        return tuple(self.edge_ids.tolist())


@dataclass
class WallSystem:
    config: WallConfig
    walls: list
    domain: np.ndarray          # common valid domain (component of basepoint)
    sample: list
    empty_pullbacks: list       # g whose crossing set is empty in-window

    def wall_edge_mask(self, t):
        mask = np.zeros(t.n_edges(), dtype=bool)
        for w in self.walls:
            mask[w.edge_ids] = True
        return mask


def common_domain(h, sample):
    """Component of the basepoint inside the joint pullback domain."""
    t = h.truncation
    dom = np.ones(t.n, dtype=bool)
    for g in sample:
        ids = t.rmul_ids(np.arange(t.n, dtype=np.int64), g)
        dom &= ids >= 0
    if not dom[0]:
        raise EndsSplitterError("the basepoint fell out of the sample domain")
    dist = t.graph_distances_from([0], allowed_mask=dom)
    return dist >= 0


def build_walls(h, cfg, sample):
    """One wall per distinct crossing edge set over the sampled pullbacks,
    restricted to the common valid domain."""
    t = h.truncation
    dom = common_domain(h, sample)
    eu, ev, _ = t.edges()
    edom = dom[eu] & dom[ev]

    by_key = {}
    order = []
    empty = []
    for g in sample:
        f = pullback(h, g)
        vals = f.values
        above = vals > cfg.threshold
        crossing = edom & f.domain[eu] & f.domain[ev] & (above[eu] != above[ev])
        ids = np.flatnonzero(crossing)
        if len(ids) == 0:
            empty.append(str(g))
            continue
        key = tuple(ids.tolist())
        if key in by_key:
            by_key[key].labels.append(str(g))
            continue
        side = np.zeros(t.n, dtype=np.int8)
        side[dom & f.domain] = np.where(above[dom & f.domain], 1, -1)
        wall = Wall(labels=[str(g)], edge_ids=ids, side=side)
        by_key[key] = wall
        order.append(key)
    walls = [by_key[k] for k in order]
    return WallSystem(config=cfg, walls=walls, domain=dom, sample=sample,
                      empty_pullbacks=empty)


def assert_noncrossing(t, system):
    """Discrete non-crossing: distinct walls use distinct edges, and no
    wall separates the endpoints of another wall's edges.

    Two level cuts through one edge correspond to continuum walls meeting
    the same segment at different interior points; the edge-level
    resolution cannot represent the sliver between them, so such
    configurations are surfaced as diagnostics instead of being guessed
    at.
    """
    eu, ev, _ = t.edges()
    owner = {}
    for i, w in enumerate(system.walls):
        for e in w.edge_ids.tolist():
            if e in owner:
                raise CrossingWalls(
                    f"walls {system.walls[owner[e]].label} and {w.label} "
                    f"both cut the edge ({t.word(int(eu[e]))},"
                    f"{t.word(int(ev[e]))}); the sliver between their level "
                    "crossings has no vertex at this scale"
                )
            owner[e] = i
    endpoint_ids = [
        np.unique(np.concatenate([eu[w.edge_ids], ev[w.edge_ids]]))
        for w in system.walls
    ]
    for i, w1 in enumerate(system.walls):
        for j, pts in enumerate(endpoint_ids):
            if i == j:
                continue
            sides = w1.side[pts]
            if (sides > 0).any() and (sides < 0).any():
                raise CrossingWalls(
                    f"wall {w1.label} separates points of wall "
                    f"{system.walls[j].label}"
                )


@dataclass
class IndecomposableRegion:
    id: int
    members: np.ndarray
    adjacent_walls: list
    n_pieces: int = 1            # regions may be disconnected sets

    @property
    def size(self):
        return len(self.members)


@dataclass
class RegionDecomposition:
    labels: np.ndarray           # per vertex, -1 off the domain
    regions: list


def indecomposable_regions(t, system):
    """Maximal vertex classes unseparated by any wall (side-signature
    classes; such sets need not be connected).

    The independent route deletes wall edges and floods; each of its
    components must carry one signature, otherwise some wall separates
    points no wall edge cuts apart and CrossingWalls is raised.  A
    signature class spanning several flood components is a legitimately
    disconnected region and is reported through ``n_pieces``.
    """
    eu, ev, _ = t.edges()
    dom = system.domain
    wall_mask = system.wall_edge_mask(t)
    keep = dom[eu] & dom[ev] & ~wall_mask

    flood = _components(t, dom, eu[keep], ev[keep])

    ids = np.flatnonzero(dom)
    if system.walls:
        side_matrix = np.stack([w.side[ids] for w in system.walls], axis=1)
    else:
        side_matrix = np.zeros((len(ids), 1), dtype=np.int8)
    _, inverse = np.unique(side_matrix, axis=0, return_inverse=True)

    # deterministic region ids ordered by smallest member
    order = {}
    for pos, v in enumerate(ids):
        key = int(inverse[pos])
        if key not in order:
            order[key] = len(order)
    labels = np.full(t.n, -1, dtype=np.int64)
    labels[ids] = [order[int(k)] for k in inverse]

    # each flood component must sit inside one signature class
    pairs = {(int(flood[v]), int(labels[v])) for v in ids}
    flood_ids = {f for f, _ in pairs}
    if len(pairs) != len(flood_ids):
        raise CrossingWalls(
            "a wall separates vertices inside one wall-free component"
        )

    pieces = {}
    for f, s in pairs:
        pieces[s] = pieces.get(s, 0) + 1
    regions = []
    for lab in range(len(order)):
        members = np.flatnonzero(labels == lab)
        regions.append(IndecomposableRegion(
            id=lab, members=members, adjacent_walls=[],
            n_pieces=pieces.get(lab, 1)))
    return RegionDecomposition(labels=labels, regions=regions)


def _components(t, dom, eu, ev):
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    n = t.n
    data = np.ones(2 * len(eu), dtype=np.int8)
    rows = np.concatenate([eu, ev])
    cols = np.concatenate([ev, eu])
    g = coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    _, labels = connected_components(g, directed=False)
    labels = labels.astype(np.int64)
    labels[~dom] = -1
    return labels


@dataclass
class WallTree:
    regions: list
    walls: list
    incidence: list              # per wall: (minus region id, plus region id)
    region_of_vertex: np.ndarray

    @property
    def n_nodes(self):
        return len(self.regions)

    @property
    def n_edges(self):
        return len(self.walls)


def build_wall_tree(t, system, decomposition):
    """Incidence of regions and walls, with the tree checks.

    Every wall must touch exactly two regions (its sides); the graph must
    be connected and satisfy the Euler count, and an independent union-find
    pass must find no cycle.
    """
    labels = decomposition.labels
    eu, ev, _ = t.edges()
    assert_noncrossing(t, system)
    incidence = []
    for w in system.walls:
        us, vs = eu[w.edge_ids], ev[w.edge_ids]
        lo = np.where(w.side[us] < 0, us, vs)
        hi = np.where(w.side[us] < 0, vs, us)
        minus = np.unique(labels[lo])
        plus = np.unique(labels[hi])
        if len(minus) != 1 or len(plus) != 1:
            raise NotATree(
                f"wall {w.label} touches {len(minus)} minus-regions and "
                f"{len(plus)} plus-regions (need exactly 1 + 1)",
            )
        incidence.append((int(minus[0]), int(plus[0])))
        w_idx = len(incidence) - 1
        decomposition.regions[int(minus[0])].adjacent_walls.append(w_idx)
        decomposition.regions[int(plus[0])].adjacent_walls.append(w_idx)

    n = len(decomposition.regions)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in incidence:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise NotATree("wall incidence contains a cycle",
                           cycle=[a, b])
        parent[ra] = rb
    connected = len({find(i) for i in range(n)}) == 1
    euler = len(incidence) == n - 1
    if not (connected and euler):
        raise NotATree(
            f"wall graph disconnected or Euler count failed "
            f"({len(incidence)} edges, {n} nodes)"
        )
    return WallTree(regions=decomposition.regions, walls=system.walls,
                    incidence=incidence,
                    region_of_vertex=decomposition.labels)


def wall_tree_dot(tree):
    lines = ["graph walltree {"]
    for r in tree.regions:
        lines.append(f'  r{r.id} [shape=ellipse, label="R{r.id} ({r.size})"];')
    for i, (a, b) in enumerate(tree.incidence):
        label = "|".join(tree.walls[i].labels)
        lines.append(f'  r{a} -- r{b} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# The action on the tree
# ---------------------------------------------------------------------------

@dataclass
class ActionReport:
    region_maps: dict            # g -> list (region -> region, -1 off-window)
    wall_images: dict            # g -> list of per-wall outcomes
    stabilizer_sizes: list       # per wall: sampled stabilizer cardinality
    inversions: list             # (g, wall) pairs with swapped sides
    h_wall_invariance: dict      # g -> equal | disjoint | out_of_window
    fixed_regions: list          # regions fixed by every sampled g
    boundary_trace_constant: dict  # g -> {min: bool, max: bool}
    region_splits: dict          # g -> count of regions straddling unsampled walls
    anomalies: list              # genuine invariance violations

    def to_json_dict(self, tree=None):
        out = {
            "action": self.region_maps,
            "wall_images": self.wall_images,
            "stabilizers": self.stabilizer_sizes,
            "inversions": self.inversions,
            "h_wall_invariance": self.h_wall_invariance,
            "fixed_regions": self.fixed_regions,
            "boundary_trace_constant": self.boundary_trace_constant,
            "region_splits": self.region_splits,
            "anomalies": self.anomalies,
        }
        if tree is not None:
            out["nodes"] = [
                {"id": r.id, "size": int(r.size), "pieces": r.n_pieces}
                for r in tree.regions
            ]
            out["edges"] = [
                {"wall": "|".join(tree.walls[i].labels),
                 "regions": [a, b]}
                for i, (a, b) in enumerate(tree.incidence)
            ]
        return out


def action_on_tree(t, h, system, tree, sample):
    """The sampled right action on regions and walls.

    Reports per-element region maps, wall images (equal / disjoint /
    out-of-window), sampled edge stabilizers, inversion and fixed-region
    probes, and whether the pullback's min/max shell traces are constant.
    """
    eu, ev, _ = t.edges()
    labels = tree.region_of_vertex
    edge_index = {}
    for i, w in enumerate(system.walls):
        for e in w.edge_ids:
            edge_index[(int(eu[e]), int(ev[e]))] = i

    pair_index = {}
    for e in range(len(eu)):
        pair_index[(int(eu[e]), int(ev[e]))] = e

    region_maps = {}
    wall_images = {}
    inversions = []
    h_wall = {}
    stab_counts = [0] * len(system.walls)
    anomalies = []
    trace_const = {}
    region_splits = {}

    full_ids = np.arange(t.n, dtype=np.int64)
    for g in sample:
        gname = str(g)
        img = t.rmul_ids(full_ids, g)

        # region map by unanimous vote of in-window images; an image that
        # straddles walls outside the sampled family is recorded as a split
        rmap = [-1] * tree.n_nodes
        splits = 0
        for r in tree.regions:
            tgt = img[r.members]
            tgt = tgt[tgt >= 0]
            lab = np.unique(labels[tgt])
            lab = lab[lab >= 0]
            if len(lab) == 1:
                rmap[r.id] = int(lab[0])
            elif len(lab) > 1:
                splits += 1
        region_maps[gname] = rmap
        region_splits[gname] = splits

        # wall images
        outcomes = []
        for i, w in enumerate(system.walls):
            us, vs = eu[w.edge_ids], ev[w.edge_ids]
            iu, iv = img[us], img[vs]
            ok = (iu >= 0) & (iv >= 0)
            if not ok.all():
                outcomes.append("out_of_window")
                continue
            keys = set()
            missing = False
            for a, b in zip(iu.tolist(), iv.tolist()):
                key = (a, b) if (a, b) in pair_index else (b, a)
                if key not in pair_index:
                    missing = True
                    break
                keys.add(pair_index[key])
            if missing:
                anomalies.append(
                    f"image of wall {w.label} under {gname} leaves the edge set"
                )
                outcomes.append("out_of_window")
                continue
            target = None
            for j, w2 in enumerate(system.walls):
                if keys == set(w2.edge_ids.tolist()):
                    target = j
                    break
            if target is not None:
                outcomes.append(f"wall_{target}")
                if target == i:
                    stab_counts[i] += 1
                    # inversion probe: does g swap the two sides?
                    a, b = tree.incidence[i]
                    if rmap[a] == b and rmap[b] == a and a != b:
                        inversions.append((gname, i))
            else:
                overlap = any(keys & set(w2.edge_ids.tolist())
                              for w2 in system.walls)
                outcomes.append("disjoint" if not overlap else "partial_overlap")
                if overlap:
                    anomalies.append(
                        f"image of wall {w.label} under {gname} partially "
                        "overlaps another wall"
                    )
        wall_images[gname] = outcomes

        # precise invariance of the base wall
        base = set(system.walls[0].edge_ids.tolist()) if system.walls else set()
        if system.walls:
            us, vs = eu[system.walls[0].edge_ids], ev[system.walls[0].edge_ids]
            iu, iv = img[us], img[vs]
            if ((iu < 0) | (iv < 0)).any():
                h_wall[gname] = "out_of_window"
            else:
                keys = set()
                valid = True
                for a, b in zip(iu.tolist(), iv.tolist()):
                    key = (a, b) if (a, b) in pair_index else (b, a)
                    if key not in pair_index:
                        valid = False
                        break
                    keys.add(pair_index[key])
                if not valid:
                    h_wall[gname] = "out_of_window"
                elif keys == base:
                    h_wall[gname] = "equal"
                elif keys & base:
                    h_wall[gname] = "overlap"
                else:
                    h_wall[gname] = "disjoint"

        # shell traces of min/max against h: constancy probe
        f = pullback(h, g)
        shell = t.shell_ids()
        sh = shell[f.domain[shell]]
        if len(sh):
            mn = np.minimum(h.values[sh], f.values[sh])
            mx = np.maximum(h.values[sh], f.values[sh])
            trace_const[gname] = {
                "min": bool(np.ptp(mn) <= 2 * system.config.equality_tol),
                "max": bool(np.ptp(mx) <= 2 * system.config.equality_tol),
            }

    fixed = []
    for r in tree.regions:
        if all(region_maps[str(g)][r.id] == r.id for g in sample):
            fixed.append(r.id)

    return ActionReport(
        region_maps=region_maps, wall_images=wall_images,
        stabilizer_sizes=stab_counts, inversions=inversions,
        h_wall_invariance=h_wall, fixed_regions=fixed,
        boundary_trace_constant=trace_const, region_splits=region_splits,
        anomalies=anomalies,
    )
