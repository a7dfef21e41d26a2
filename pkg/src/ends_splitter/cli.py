"""Scenario-driven command line: solve, necks, gap, tree.

Scenario files are JSON with ``"schema": 1``; unknown fields are rejected.
Every run writes into ``<out>/<scenario-name>/``.  ``report.json`` is
byte-identical for a fixed scenario and seed regardless of ``--threads``;
wall-clock timings therefore live in a separate ``timings.json``.

Exit codes: 0 success, 1 configuration, 2 numerical, 3 structural.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .errors import (
    CrossingWalls,
    DegenerateDrop,
    EndsSplitterError,
    NeckCoverageError,
    NoRegularValue,
    NonConvergence,
    NotATree,
    PresentationError,
    ScenarioError,
)
from .ends import all_nonconstant_end_functions, make_end_function
from .groups import Presentation, build_net, build_truncation, group_ball
from .harmonic import SolverConfig, energy, solve_dirichlet
from .necks import (
    dual_graph,
    dual_graph_dot,
    energy_gap_estimate,
    PartitionParams,
    partition_K,
    special_sets,
)
from .walls import (
    action_on_tree,
    build_wall_tree,
    build_walls,
    choose_threshold,
    indecomposable_regions,
    trichotomy,
    wall_tree_dot,
)

_SCENARIO_FIELDS = {
    "schema", "name", "group", "truncation_radius", "base_radius", "neck_R",
    "net_delta", "chi", "solver", "wall", "seed",
}
_SOLVER_FIELDS = {"tolerance", "max_iterations", "scheme"}
_WALL_FIELDS = {"sample_radius", "equality_tol", "step"}


class Scenario:
    def __init__(self, cfg, name):
        unknown = set(cfg) - _SCENARIO_FIELDS
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        if cfg.get("schema") != 1:
            raise ScenarioError('scenario must declare "schema": 1')
        if "group" not in cfg or "truncation_radius" not in cfg:
            raise ScenarioError("scenario needs group and truncation_radius")
        self.name = cfg.get("name", name)
        self.group_cfg = cfg["group"]
        self.presentation = Presentation.from_config(self.group_cfg)
        self.truncation_radius = int(cfg["truncation_radius"])
        self.base_radius = int(cfg.get("base_radius", 1))
        self.neck_R = int(cfg.get("neck_R", 1))
        self.net_delta = int(cfg.get("net_delta", 1))
        self.chi_spec = cfg.get("chi", None)
        self.seed = int(cfg.get("seed", 0))

        solver = dict(cfg.get("solver", {}))
        unknown = set(solver) - _SOLVER_FIELDS
        if unknown:
            raise ScenarioError(f"unknown solver fields: {sorted(unknown)}")
        self.solver = SolverConfig(
            tolerance=float(solver.get("tolerance", 1e-9)),
            max_iterations=int(solver.get("max_iterations", 10 ** 6)),
            scheme=solver.get("scheme", "gauss_seidel"),
        )

        wall = dict(cfg.get("wall", {}))
        unknown = set(wall) - _WALL_FIELDS
        if unknown:
            raise ScenarioError(f"unknown wall fields: {sorted(unknown)}")
        self.wall_sample_radius = int(wall.get("sample_radius", 3))
        self.wall_equality_tol = float(wall.get("equality_tol", 1e-9))
        self.wall_step = float(wall.get("step", 1e-3))

        if not (self.truncation_radius > self.base_radius
                and self.base_radius >= self.neck_R >= 1):
            raise ScenarioError(
                "need truncation_radius > base_radius >= neck_R >= 1, got "
                f"{self.truncation_radius} / {self.base_radius} / {self.neck_R}"
            )

    def echo(self):
        return {
            "name": self.name,
            "group": self.group_cfg,
            "truncation_radius": self.truncation_radius,
            "base_radius": self.base_radius,
            "neck_R": self.neck_R,
            "net_delta": self.net_delta,
            "chi": self.chi_spec,
            "solver": {
                "tolerance": self.solver.tolerance,
                "max_iterations": self.solver.max_iterations,
                "scheme": self.solver.scheme,
            },
            "wall": {
                "sample_radius": self.wall_sample_radius,
                "equality_tol": self.wall_equality_tol,
                "step": self.wall_step,
            },
            "seed": self.seed,
        }

    def resolve_chi(self, t, spec=None):
        spec = self.chi_spec if spec is None else spec
        if spec is None:
            raise ScenarioError("scenario has no chi")
        if isinstance(spec, str):
            if spec.startswith("first_letter:"):
                chi = make_end_function(t, self.base_radius, rule=spec)
            else:
                raise ScenarioError(f"unknown chi rule {spec!r}")
        elif isinstance(spec, dict):
            chi = make_end_function(
                t, self.base_radius, values_by_word=spec.get("map", {}),
                default=spec.get("default"),
            )
        else:
            raise ScenarioError("chi must be a rule string or a map object")
        if not chi.nonconstant:
            raise ScenarioError("chi must be nonconstant")
        return chi

    def resolve_chi_list(self, t):
        spec = self.chi_spec
        if spec == "all":
            return all_nonconstant_end_functions(t, self.base_radius)
        if isinstance(spec, list):
            return [self.resolve_chi(t, s) for s in spec]
        return [self.resolve_chi(t)]


def load_scenario(path, overrides=None):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except json.JSONDecodeError as ex:
        raise ScenarioError(
            f"malformed scenario JSON at line {ex.lineno} column {ex.colno}: "
            f"{ex.msg}"
        )
    name = os.path.splitext(os.path.basename(path))[0]
    if overrides:
        cfg.update(overrides)
    return Scenario(cfg, name)


def _json_dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, separators=(",", ": "))
        fh.write("\n")


class _Stages:
    def __init__(self, verbose):
        self.timings = {}
        self.verbose = verbose
        self._t0 = None
        self._name = None

    def start(self, name):
        if self.verbose:
            print(f"[stage] {name}", file=sys.stderr, flush=True)
        self._name = name
        self._t0 = time.monotonic()

    def stop(self):
        if self._name is not None:
            self.timings[self._name] = round(time.monotonic() - self._t0, 6)
            self._name = None


def _prepare(scn, stages):
    stages.start("build_truncation")
    t = build_truncation(scn.presentation, scn.truncation_radius)
    stages.stop()
    stages.start("build_net")
    net = build_net(t, scn.net_delta)
    stages.stop()
    return t, net


def _base_report(scn, t, command):
    eu, _, _ = t.edges()
    return {
        "schema": 1,
        "command": command,
        "scenario": scn.echo(),
        "truncation": {
            "vertices": int(t.n),
            "edges": int(len(eu)),
            "shell": int(t.shell_mask.sum()),
        },
        "warnings": [],
    }


def _solve_stage(scn, t, stages, chi=None):
    stages.start("resolve_chi")
    chi = chi or scn.resolve_chi(t)
    stages.stop()
    stages.start("solve_dirichlet")
    h = solve_dirichlet(t, chi, scn.solver)
    stages.stop()
    lo, hi = h.interior_range()
    block = {
        "scheme": scn.solver.scheme,
        "tolerance": scn.solver.tolerance,
        "iterations": h.iterations,
        "residual": h.residual,
        "energy": energy(h).total,
        "min_interior": lo,
        "max_interior": hi,
        "h_identity": float(h.values[0]),
    }
    return chi, h, block


def run_solve(scn, outdir, stages):
    t, _ = _prepare(scn, stages)
    chi, h, block = _solve_stage(scn, t, stages)
    report = _base_report(scn, t, "solve")
    report["chi"] = {"base_radius": chi.base_radius,
                     "assignments": chi.assignments_by_word(),
                     "end_classes": [c.summary() for c in chi.classes]}
    report["solve"] = block
    stages.start("write_outputs")
    h.to_csv(os.path.join(outdir, "field.csv"))
    _json_dump(report, os.path.join(outdir, "report.json"))
    stages.stop()
    return report


def run_necks(scn, outdir, stages):
    t, net = _prepare(scn, stages)
    chi = scn.resolve_chi(t)
    stages.start("special_sets")
    neck_report = special_sets(t, net, scn.neck_R, chi)
    stages.stop()

    stages.start("dual_graph")
    k_ids = neck_report.center_ids["K"]
    dual = None
    if k_ids:
        part = partition_K(t, k_ids, PartitionParams(D=2 * scn.neck_R, d=0))
        dual = dual_graph(t, part.groups, scn.neck_R)
    stages.stop()

    report = _base_report(scn, t, "necks")
    report["chi"] = {"base_radius": chi.base_radius,
                     "assignments": chi.assignments_by_word()}
    report["necks"] = neck_report.to_json_dict()
    report["warnings"] = list(neck_report.warnings)
    if dual is not None:
        report["dual"] = {
            "nodes": dual.n_nodes,
            "edges": dual.n_edges,
            "is_tree": dual.is_tree,
        }
    stages.start("write_outputs")
    _json_dump(neck_report.to_json_dict(), os.path.join(outdir, "necks.json"))
    if dual is not None:
        with open(os.path.join(outdir, "dual.dot"), "w") as fh:
            fh.write(dual_graph_dot(dual))
    _json_dump(report, os.path.join(outdir, "report.json"))
    stages.stop()
    return report


def run_gap(scn, outdir, stages):
    t, net = _prepare(scn, stages)
    stages.start("resolve_chi")
    chis = scn.resolve_chi_list(t)
    stages.stop()
    stages.start("energy_gap_estimate")
    bracket = energy_gap_estimate(t, net, scn.neck_R, chis,
                                  solver_cfg=scn.solver)
    stages.stop()
    report = _base_report(scn, t, "gap")
    report["gap"] = bracket.to_json_dict()
    stages.start("write_outputs")
    _json_dump(report, os.path.join(outdir, "report.json"))
    stages.stop()
    return report


def run_tree(scn, outdir, stages):
    t, _ = _prepare(scn, stages)
    chi, h, block = _solve_stage(scn, t, stages)

    stages.start("walls")
    sample = group_ball(t, scn.wall_sample_radius)
    verdicts = [trichotomy(h, g, scn.wall_equality_tol) for g in sample]
    cfg = choose_threshold(h, sample, equality_tol=scn.wall_equality_tol,
                           step=scn.wall_step,
                           sample_radius=scn.wall_sample_radius)
    system = build_walls(h, cfg, sample)
    stages.stop()

    stages.start("wall_tree")
    decomposition = indecomposable_regions(t, system)
    tree = build_wall_tree(t, system, decomposition)
    action = action_on_tree(t, h, system, tree, sample)
    stages.stop()

    report = _base_report(scn, t, "tree")
    report["solve"] = block
    report["tree"] = {
        "threshold": cfg.threshold,
        "sample_radius": scn.wall_sample_radius,
        "sample_size": len(sample),
        "walls": tree.n_edges,
        "regions": tree.n_nodes,
        "is_tree": True,
        "empty_pullbacks": system.empty_pullbacks,
        "trichotomy": {v.g: v.relation for v in verdicts},
        "violations": sum(1 for v in verdicts if v.is_violation()),
        "inversions": len(action.inversions),
        "fixed_regions": action.fixed_regions,
    }
    stages.start("write_outputs")
    with open(os.path.join(outdir, "tree.dot"), "w") as fh:
        fh.write(wall_tree_dot(tree))
    _json_dump(action.to_json_dict(tree), os.path.join(outdir, "action.json"))
    _json_dump(report, os.path.join(outdir, "report.json"))
    stages.stop()
    return report


_RUNNERS = {"solve": run_solve, "necks": run_necks, "gap": run_gap,
            "tree": run_tree}

_CONFIG_ERRORS = (ScenarioError, PresentationError, NoRegularValue, ValueError)
_NUMERIC_ERRORS = (NonConvergence,)
_STRUCTURAL_ERRORS = (NotATree, CrossingWalls, NeckCoverageError,
                      DegenerateDrop)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ends-splitter",
        description="harmonic end-functions, necks, and wall trees on "
                    "Cayley-graph truncations",
    )
    parser.add_argument("command", choices=sorted(_RUNNERS))
    parser.add_argument("--scenario", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=0,
                        help="accepted for the determinism contract; results "
                             "never depend on it")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--radius", type=int, default=None)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    outroot = args.out or os.environ.get("ENDS_SPLITTER_OUT", "out")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.radius is not None:
        overrides["truncation_radius"] = args.radius

    stages = _Stages(args.verbose)
    try:
        scn = load_scenario(args.scenario, overrides)
        outdir = os.path.join(outroot, scn.name)
        os.makedirs(outdir, exist_ok=True)
        report = _RUNNERS[args.command](scn, outdir, stages)
    except _CONFIG_ERRORS as ex:
        _emit_error(1, ex)
        return 1
    except _NUMERIC_ERRORS as ex:
        _emit_error(2, ex)
        return 2
    except _STRUCTURAL_ERRORS as ex:
        _emit_error(3, ex)
        return 3
    except EndsSplitterError as ex:
        _emit_error(1, ex)
        return 1

    _json_dump(stages.timings, os.path.join(outdir, "timings.json"))
    for w in report.get("warnings", []):
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps({"ok": True, "out": outdir}, sort_keys=True))
    return 0


def _emit_error(code, ex):
    print(json.dumps({
        "ok": False,
        "exit_code": code,
        "error": type(ex).__name__,
        "message": str(ex),
    }, sort_keys=True))


if __name__ == "__main__":
    sys.exit(main())
