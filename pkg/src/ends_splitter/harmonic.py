"""Discrete Dirichlet problems for end functions, energies, pullbacks, and
spectral estimates.

Boundary data lives on shell vertices through their end class; every other
vertex is an interior unknown with the mean-value equation.  The energy of
a field is the sum of squared differences over edges, summed in the fixed
edge order so reports are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from .errors import (
    EndsSplitterError,
    InvalidBoundary,
    MismatchedTruncations,
    NonConvergence,
)


@dataclass
class SolverConfig:
    tolerance: float = 1e-9          # max mean-value defect on the interior
    max_iterations: int = 10 ** 6
    scheme: str = "gauss_seidel"     # gauss_seidel | jacobi | conjugate_direction

    def __post_init__(self):
        if self.tolerance <= 0:
            raise EndsSplitterError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise EndsSplitterError("max_iterations must be >= 1")
        if self.scheme not in ("gauss_seidel", "jacobi", "conjugate_direction"):
            raise EndsSplitterError(f"unknown scheme {self.scheme!r}")


@dataclass
class HarmonicField:
    truncation: object
    values: np.ndarray
    boundary_spec: object            # EndFunction or None for synthetic fields
    residual: float
    iterations: int

    def interior_range(self):
        vals = self.values[self.truncation.interior_mask]
        return float(vals.min()), float(vals.max())

    def summary(self):
        lo, hi = self.interior_range()
        return {
            "energy": energy(self).total,
            "residual": self.residual,
            "iterations": self.iterations,
            "min_interior": lo,
            "max_interior": hi,
        }

    def to_csv(self, path):
        t = self.truncation
        with open(path, "w") as fh:
            fh.write("word,value\n")
            for v in range(t.n):
                fh.write(f"{t.word(v)},{self.values[v]:.17g}\n")


@dataclass
class PartialField:
    """A field defined on part of a truncation (pullbacks, lattice ops)."""

    truncation: object
    values: np.ndarray
    domain: np.ndarray               # boolean mask
    label: str = ""

    def domain_size(self):
        return int(self.domain.sum())


def _domain_of(f):
    if isinstance(f, PartialField):
        return f.domain
    return np.ones(f.truncation.n, dtype=bool)


# ---------------------------------------------------------------------------
# Dirichlet solve
# ---------------------------------------------------------------------------

def boundary_values(t, chi):
    """Shell values transported through end classes; InvalidBoundary if a
    shell vertex is in no end class."""
    vals = chi.shell_values(t)
    shell = t.shell_ids()
    missing = shell[vals[shell] < 0]
    if len(missing):
        raise InvalidBoundary(
            f"{len(missing)} shell vertices belong to no end class at base "
            f"radius {chi.base_radius} (first: {t.word(int(missing[0]))!r})"
        )
    return vals


def mean_value_defect(t, values):
    """Max over interior vertices of |value - mean of neighbors|."""
    adj = t.csr_adjacency()
    deg = t.degrees()
    means = adj.dot(values) / deg
    inter = t.interior_mask
    return float(np.abs(values - means)[inter].max())


def _color_classes(t):
    """Independent interior vertex classes for sweep ordering.

    Distance parity is the red-black split whenever the graph is bipartite;
    otherwise fall back to greedy coloring in id order.
    """
    inter = t.interior_ids()
    parity = t.dist % 2
    eu, ev, _ = t.edges()
    if (parity[eu] != parity[ev]).all():
        return [inter[parity[inter] == 0], inter[parity[inter] == 1]]
    color = np.full(t.n, -1, dtype=np.int64)
    for v in inter:
        nb = t.nbr[v]
        nb = nb[nb >= 0]
        used = set(color[nb].tolist())
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return [inter[color[inter] == c] for c in range(int(color.max()) + 1)]


def solve_dirichlet(t, chi, cfg=None):
    """Harmonic extension of chi into the truncation.

    The result satisfies the mean-value equation on every interior vertex
    up to cfg.tolerance, which pins the field to the unique energy
    minimizer with these boundary values.
    """
    cfg = cfg or SolverConfig()
    bvals = boundary_values(t, chi)
    shell = t.shell_mask
    x = np.full(t.n, 0.5, dtype=np.float64)
    x[shell] = bvals[shell].astype(np.float64)

    adj = t.csr_adjacency()
    deg = t.degrees().astype(np.float64)
    inter = t.interior_mask

    if cfg.scheme == "conjugate_direction":
        x, iters = _solve_cg(t, adj, deg, x, cfg)
    elif cfg.scheme == "jacobi":
        x, iters = _solve_jacobi(t, adj, deg, x, cfg)
    else:
        x, iters = _solve_gauss_seidel(t, adj, deg, x, cfg)

    res = mean_value_defect(t, x)
    if res > cfg.tolerance:
        raise NonConvergence(
            f"solver hit {iters} iterations with defect {res:.3e} above "
            f"tolerance {cfg.tolerance:.1e}", residual=res, iterations=iters,
        )
    np.clip(x, 0.0, 1.0, out=x)
    return HarmonicField(truncation=t, values=x, boundary_spec=chi,
                         residual=res, iterations=iters)


def _solve_gauss_seidel(t, adj, deg, x, cfg):
    classes = _color_classes(t)
    rows = [(adj[ids], deg[ids], ids) for ids in classes]
    check_every = 4
    for it in range(1, cfg.max_iterations + 1):
        for a, d, ids in rows:
            x[ids] = a.dot(x) / d
        if it % check_every == 0 or it == cfg.max_iterations:
            if mean_value_defect(t, x) <= cfg.tolerance:
                return x, it
    return x, cfg.max_iterations


def _solve_jacobi(t, adj, deg, x, cfg):
    inter = t.interior_mask
    for it in range(1, cfg.max_iterations + 1):
        means = adj.dot(x) / deg
        new = np.where(inter, means, x)
        x = new
        if it % 4 == 0 or it == cfg.max_iterations:
            if mean_value_defect(t, x) <= cfg.tolerance:
                return x, it
    return x, cfg.max_iterations


def _solve_cg(t, adj, deg, x, cfg):
    """Conjugate directions on the interior block of the Dirichlet system."""
    inter = t.interior_ids()
    n_i = len(inter)
    sel = np.zeros(t.n, dtype=bool)
    sel[inter] = True

    def apply_l(u_full):
        return deg * u_full - adj.dot(u_full)

    # rhs: contributions of fixed shell values into interior rows
    xb = x.copy()
    xb[sel] = 0.0
    rhs = -apply_l(xb)[inter]

    u = x[inter].copy()
    full = np.zeros(t.n)

    def apply_a(ui):
        full[:] = 0.0
        full[inter] = ui
        return apply_l(full)[inter]

    r = rhs - apply_a(u)
    p = r.copy()
    rs = float(r @ r)
    it = 0
    tol_stop = cfg.tolerance * deg[inter].min() * 0.25
    for it in range(1, min(cfg.max_iterations, 10 * n_i + 10) + 1):
        ap = apply_a(p)
        alpha = rs / float(p @ ap)
        u += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= tol_stop or np.abs(r).max() <= tol_stop:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    x = x.copy()
    x[inter] = u
    return x, it


# ---------------------------------------------------------------------------
# Energy and the bilinear form
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    total: float
    per_region: dict | None = None


def _edge_values(f):
    t = f.truncation
    eu, ev, _ = t.edges()
    dom = _domain_of(f)
    keep = dom[eu] & dom[ev]
    return eu, ev, keep


def energy(f, edge_filter=None, per_region=None):
    """Dirichlet energy: sum over edges of the squared difference.

    ``edge_filter`` restricts to a boolean edge mask; ``per_region`` maps
    region names to edge masks for a partial-energy breakdown.
    """
    t = f.truncation
    eu, ev, keep = _edge_values(f)
    diffs = f.values[eu] - f.values[ev]
    sq = diffs * diffs
    if edge_filter is not None:
        keep = keep & edge_filter
    total = float(sq[keep].sum())
    regions = None
    if per_region is not None:
        regions = {name: float(sq[keep & mask].sum())
                   for name, mask in per_region.items()}
    return EnergyReport(total=total, per_region=regions)


def energy_form(u, v):
    """Bilinear form: sum over common-domain edges of the product of edge
    differences.  energy_form(u, u) == energy(u).total."""
    if u.truncation is not v.truncation:
        raise MismatchedTruncations("fields live on different truncations")
    t = u.truncation
    eu, ev, _ = t.edges()
    dom = _domain_of(u) & _domain_of(v)
    keep = dom[eu] & dom[ev]
    du = u.values[eu] - u.values[ev]
    dv = v.values[eu] - v.values[ev]
    return float((du * dv)[keep].sum())


def field_difference(u, v):
    if u.truncation is not v.truncation:
        raise MismatchedTruncations("fields live on different truncations")
    dom = _domain_of(u) & _domain_of(v)
    return PartialField(truncation=u.truncation, values=u.values - v.values,
                        domain=dom, label="difference")


# ---------------------------------------------------------------------------
# Pullbacks and lattice operations
# ---------------------------------------------------------------------------

def pullback(h, g):
    """The field v -> h(v * g) on {v : v * g stays in the ball}."""
    t = h.truncation
    ids = t.rmul_ids(np.arange(t.n, dtype=np.int64), g)
    dom = ids >= 0
    vals = np.zeros(t.n, dtype=np.float64)
    vals[dom] = h.values[ids[dom]]
    return PartialField(truncation=t, values=vals, domain=dom, label=str(g))


@dataclass
class CrossingSet:
    """The discrete locus where two fields exchange order: edges whose
    difference changes strict sign, plus near-equality vertices."""

    edge_mask: np.ndarray
    equal_vertices: np.ndarray

    def edge_count(self):
        return int(self.edge_mask.sum())


def lattice_ops(h, k, equality_tol=1e-9):
    """Pointwise max/min of two fields on their common domain, with the
    crossing locus."""
    t = h.truncation
    if isinstance(k, HarmonicField):
        k = PartialField(truncation=t, values=k.values,
                         domain=np.ones(t.n, dtype=bool), label="field")
    if t is not k.truncation:
        raise MismatchedTruncations("fields live on different truncations")
    dom = _domain_of(h) & k.domain
    g_plus = PartialField(t, np.maximum(h.values, k.values), dom, "max")
    g_minus = PartialField(t, np.minimum(h.values, k.values), dom, "min")

    eu, ev, _ = t.edges()
    keep = dom[eu] & dom[ev]
    du = h.values[eu] - k.values[eu]
    dv = h.values[ev] - k.values[ev]
    crossing = keep & (du * dv < 0)
    equal = np.flatnonzero(dom & (np.abs(h.values - k.values) <= equality_tol))
    return g_plus, g_minus, CrossingSet(edge_mask=crossing, equal_vertices=equal)


# ---------------------------------------------------------------------------
# Spectral estimates
# ---------------------------------------------------------------------------

@dataclass
class SpectralReport:
    cheeger_lower: float
    lambda1_lower: float
    lambda1_estimate: float
    iterations: int


def spectral_gap(t, tol=1e-12, max_iterations=10 ** 4):
    """Smallest Dirichlet eigenvalue of the interior Laplacian by inverse
    power iteration, with a sweep-cut lower bound.

    The sweep over the converged vector yields a boundary-to-volume ratio
    eta with eta^2/4 below the Rayleigh quotient, so the reported pair is
    ordered by construction.
    """
    inter = t.interior_ids()
    if len(inter) < 2:
        raise EndsSplitterError("need at least 2 interior vertices")
    deg = t.degrees().astype(np.float64)
    adj = t.csr_adjacency()
    sub = adj[inter][:, inter].tocsr()
    l_int = csr_matrix(
        (deg[inter], (np.arange(len(inter)), np.arange(len(inter)))),
        shape=sub.shape,
    ) - sub

    lu = splu(l_int.tocsc())
    v = np.ones(len(inter))
    v /= np.linalg.norm(v)
    lam = None
    it = 0
    converged = False
    for it in range(1, max_iterations + 1):
        w = lu.solve(v)
        w /= np.linalg.norm(w)
        lam_new = float(w @ (l_int.dot(w)))
        if lam is not None and abs(lam_new - lam) <= tol * max(lam_new, 1e-30):
            lam = lam_new
            v = w
            converged = True
            break
        lam = lam_new
        v = w
    if not converged:
        raise NonConvergence(
            f"inverse iteration did not settle within {max_iterations} "
            "steps", residual=lam, iterations=it,
        )

    eta = _sweep_cut(t, inter, np.abs(v))
    report = SpectralReport(
        cheeger_lower=eta,
        lambda1_lower=eta * eta / 4.0,
        lambda1_estimate=lam,
        iterations=it,
    )
    if report.lambda1_lower > report.lambda1_estimate + 1e-9:
        raise NonConvergence(
            "sweep bound exceeded the Rayleigh quotient; iteration did not "
            "converge", residual=report.lambda1_lower - report.lambda1_estimate,
            iterations=it,
        )
    return report


def _sweep_cut(t, inter, vec):
    """Min over sweep prefixes of |boundary edges| / degree volume."""
    order = inter[np.argsort(-vec, kind="stable")]
    deg = t.degrees()
    in_set = np.zeros(t.n, dtype=bool)
    vol = 0
    boundary = 0
    best = math.inf
    for v in order:
        nb = t.nbr[v]
        nb = nb[nb >= 0]
        inside = int(in_set[nb].sum())
        boundary += int(deg[v]) - 2 * inside
        vol += int(deg[v])
        in_set[v] = True
        best = min(best, boundary / vol)
    return float(best)


def dirichlet_lambda1_radial_free(rank, radius):
    """Ground Dirichlet eigenvalue of the free-group ball via the radial
    reduction (the ground state is radial on a regular tree ball)."""
    d = 2 * rank
    m = radius   # interior radial indices 0..radius-1
    mat = np.zeros((m, m))
    for i in range(m):
        mat[i, i] = d
        if i > 0:
            mat[i, i - 1] = -1.0
        if i + 1 < m:
            # the identity has d children, deeper vertices d - 1
            mat[i, i + 1] = -float(d) if i == 0 else -(d - 1.0)
    # sphere-count weights make the radial operator self-adjoint
    w = np.ones(m)
    for i in range(1, m):
        w[i] = d * (d - 1) ** (i - 1)
    s = np.sqrt(w)
    sym = (mat / s[None, :]) * s[:, None]
    if not np.allclose(sym, sym.T):
        raise AssertionError("radial reduction lost self-adjointness")
    vals = np.linalg.eigvalsh(sym)
    return float(vals[0])


# ---------------------------------------------------------------------------
# Decay profiles
# ---------------------------------------------------------------------------

@dataclass
class DecayProfile:
    anchor: np.ndarray
    theta: int
    by_distance: dict

    def ratios(self):
        out = {}
        ds = sorted(self.by_distance)
        for d in ds:
            if d + 1 in self.by_distance and self.by_distance[d] > 0:
                out[d] = self.by_distance[d + 1] / self.by_distance[d]
        return out


def decay_profile(h, anchor_ids, component, theta):
    """Per-distance max deviation |h - theta| inside a component, measured
    in its induced path metric from the attachment layer (distance 0)."""
    t = h.truncation
    anchor_ids = np.asarray(anchor_ids, dtype=np.int64)
    allowed = np.zeros(t.n, dtype=bool)
    allowed[component.members] = True
    anchor_mask = np.zeros(t.n, dtype=bool)
    anchor_mask[anchor_ids] = True
    touch = component.members[
        (anchor_mask[t.nbr[component.members]]
         & (t.nbr[component.members] >= 0)).any(axis=1)
    ]
    if len(touch) == 0:
        raise EndsSplitterError("component does not touch the anchor")
    dist = t.graph_distances_from(touch, allowed_mask=allowed)
    dev = np.abs(h.values - theta)
    by_distance = {}
    for v in component.members:
        d = int(dist[v])
        if d < 0:
            continue
        cur = by_distance.get(d, 0.0)
        if dev[v] > cur:
            by_distance[d] = float(dev[v])
        elif d not in by_distance:
            by_distance[d] = cur
    return DecayProfile(anchor=anchor_ids, theta=theta, by_distance=by_distance)
