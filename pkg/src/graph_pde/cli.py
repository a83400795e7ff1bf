"""
Command-line interface for graph-pde
Solve, verify, reproduce counterexamples, run consistency studies and
record a replayable manifest for every run
"""

import argparse
import functools
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from .config import OUTPUT_DIR, VERSION, GraphPDEConfig, Scheme, SolverConfig
from .exceptions import (GraphPDEError, GraphValidationError, LemmaViolationError, PreconditionError, SolverError,
                         SpecError)
from .fd_bridge import SCHEMES, is_decreasing, run_consistency
from .graph_core import (Graph, distances_from, grid_graph, load_field, load_graph, path_distance,
                         random_digraph, random_tree, require_valid, save_field, save_graph)
from .operators import OperatorSpec, classify_ellipticity, evaluate, load_spec, make_spec, residual_norm
from .solvers import SolveStatus, detect_infeasibility, solve, solve_gauss_seidel
from .utils import make_rng, read_json, setup_logging, write_csv, write_json
from .verify import FAMILIES, comparison_check, comparison_fuzz, counterexample_catalog, harnack_check, propagate_max

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_VERIFICATION = 4

MANIFEST_NAME = "manifest.json"

# Fitted-order bars for fd-consistency; None means no order bar
ORDER_BARS = {
    'second-diff': 1.9,
    'abs-gradient': 0.9,
    'abs-gradient-minus': 0.9,
    'inf-laplacian-ball': None,
    'lambda1': None,
}


class UsageError(GraphPDEError):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so exit codes stay ours"""

    def error(self, message: str):
        raise UsageError(message)


class RunManifest(BaseModel):
    command: str
    argv: List[str]
    inputs: Dict[str, str]
    config: Dict[str, Any]
    seed: int
    version: str
    outputs: List[str]
    defaults: Dict[str, Any] = Field(default_factory=dict)


class _Run:
    """Collects inputs and outputs of one command for its manifest"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out_dir = Path(args.output_dir)
        self.inputs: Dict[str, str] = {}
        self.outputs: List[str] = []

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def wrote(self, path: str) -> None:
        self.outputs.append(Path(path).name)

    def input(self, key: str, value: Optional[str]) -> Optional[str]:
        if value is not None:
            self.inputs[key] = str(value)
        return value


# -- shared helpers ----------------------------------------------------------

def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _required(args: argparse.Namespace, *names: str) -> None:
    missing = ["--" + n for n in names if not getattr(args, n, None)]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def _load_graph(run: _Run, path: Optional[str]) -> Graph:
    if not path:
        raise UsageError("--graph is required")
    run.input('graph', path)
    return require_valid(load_graph(path))


def _spec(run: _Run, args: argparse.Namespace) -> OperatorSpec:
    if getattr(args, 'spec', None):
        run.input('spec', args.spec)
        return load_spec(args.spec)
    if not getattr(args, 'op', None):
        raise UsageError("either --spec or --op is required")
    fields: Dict[str, Any] = {}
    if args.p is not None:
        fields['p'] = args.p
    if args.rhs is not None:
        fields['source'] = args.rhs
    if args.lam is not None:
        fields['lam'] = args.lam
    try:
        return make_spec(args.op, **fields)
    except ValidationError as e:
        raise SpecError(str(e)) from e


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    try:
        return SolverConfig(tolerance=args.tol, max_iterations=args.max_iter, damping=args.damping,
                            stagnation_window=args.window, scheme=args.scheme, initial_value=args.init,
                            debug_checks=args.debug_checks)
    except ValidationError as e:
        raise UsageError(str(e)) from e


def _add_spec_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--spec', help='OperatorSpec JSON file')
    parser.add_argument('--op', help='operator kind, e.g. laplacian, eikonal-plus, normalized-p')
    parser.add_argument('--p', help='exponent for normalized-p (number or inf)')
    parser.add_argument('--rhs', type=float, help='constant source term')
    parser.add_argument('--lam', type=float, help='zeroth-order coefficient')


def _add_solver_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--tol', type=float, default=GraphPDEConfig.TOLERANCE)
    parser.add_argument('--max-iter', type=int, default=GraphPDEConfig.MAX_ITERATIONS)
    parser.add_argument('--damping', type=float, default=GraphPDEConfig.DAMPING)
    parser.add_argument('--window', type=int, default=GraphPDEConfig.STAGNATION_WINDOW)
    parser.add_argument('--scheme', choices=[s.value for s in Scheme], default=Scheme.FIXED_POINT_T.value)
    parser.add_argument('--init', type=float, help='constant initial value on interior vertices')
    parser.add_argument('--warm-start', help='field CSV used as the initial guess')
    parser.add_argument('--debug-checks', action='store_true')


# -- commands ----------------------------------------------------------------

def cmd_solve(run: _Run) -> int:
    args = run.args
    graph = _load_graph(run, args.graph)
    spec = _spec(run, args)
    config = _solver_config(args)
    g = load_field(graph, run.input('boundary', args.boundary)) if args.boundary else None
    initial = load_field(graph, run.input('warm_start', args.warm_start)) if args.warm_start else None

    if Scheme(config.scheme) is Scheme.EIKONAL_LABEL_SETTING:
        report = solve(spec, graph, g, config)
    else:
        report = detect_infeasibility(spec, graph, g, config, initial)
    run.wrote(save_field(graph, report.solution, run.path("solution.csv")))
    run.wrote(write_json(report.to_dict(), run.path("report.json")))
    run.wrote(write_csv(report.history_frame(), run.path("history.csv")))

    if report.converged:
        print(f"✅ {report.status.value}: residual {report.residual_inf_norm:.3e} after {report.iterations} iterations")
        return EXIT_OK
    print(f"❌ {report.status.value}: residual {report.residual_inf_norm:.3e} ({report.diagnosis})")
    return EXIT_NONCONVERGENCE


def _verify_comparison(run: _Run, graph: Graph, spec: OperatorSpec) -> Tuple[bool, Dict[str, Any]]:
    args = run.args
    _required(args, "u", "v")
    u = load_field(graph, run.input('u', args.u))
    v = load_field(graph, run.input('v', args.v))
    result = comparison_check(spec, graph, u, v, tol=args.tol)
    if result.passed:
        print("✅ comparison: u <= v holds")
    else:
        w = result.witness
        print(f"❌ comparison fails: M = {w.M:.6g} at {w.violating_vertex}; |W| = {len(w.W)}")
    return result.passed, result.to_dict()


def _verify_harnack(run: _Run, graph: Graph, spec: OperatorSpec) -> Tuple[bool, Dict[str, Any]]:
    _required(run.args, "solution")
    u = load_field(graph, run.input('solution', run.args.solution))
    result = harnack_check(spec, graph, u, tol=run.args.tol)
    counts = pd.Series(list(result.branches.values()), dtype=object).value_counts().to_dict()
    status = "✅" if result.passed else "❌"
    print(f"{status} harnack dichotomy: {counts}")
    return result.passed, result.to_dict()


def _verify_propagate(run: _Run, graph: Graph, spec: OperatorSpec) -> Tuple[bool, Dict[str, Any]]:
    _required(run.args, "u", "v")
    u = load_field(graph, run.input('u', run.args.u))
    v = load_field(graph, run.input('v', run.args.v))
    try:
        trace = propagate_max(spec, graph, u, v, tol=run.args.tol)
    except LemmaViolationError as e:
        print(f"❌ {e}")
        return False, e.trace.to_dict() if e.trace else {'error': str(e)}
    print(f"✅ maximum propagates: {len(trace.visited)} vertices visited, boundary reached at {trace.reached_boundary}")
    return True, trace.to_dict()


def _verify_ellipticity(run: _Run, spec: OperatorSpec) -> Tuple[bool, Dict[str, Any]]:
    args = run.args
    graph = _load_graph(run, args.graph) if args.graph else grid_graph((3, 3))
    trials = GraphPDEConfig.CLASSIFY_TRIALS if args.trials is None else args.trials
    report = classify_ellipticity(spec, graph, trials=trials, seed=args.seed)
    for name, result in report.properties.items():
        print(f"  {name.replace('_', ' ')}: {result.label}")
    expected = args.expect or []
    missing = [name for name in expected if not report.holds(name)]
    if missing:
        print(f"❌ expected properties violated: {missing}")
    return not missing, report.to_dict()


def _verify_comparison_fuzz(run: _Run, spec: OperatorSpec) -> Tuple[bool, Dict[str, Any]]:
    args = run.args
    trials = GraphPDEConfig.FUZZ_TRIALS if args.trials is None else args.trials
    report = comparison_fuzz(spec, args.family, trials=trials, seed=args.seed, margin=2 * args.tol,
                             threads=args.threads, output_dir=run.path("fuzz_bundles"), progress=True)
    status = "✅" if report.passed else "❌"
    print(f"{status} comparison fuzz ({report.theorem}): {len(report.violations)} violations, "
          f"{report.unconverged} unconverged of {report.trials} trials")
    return report.passed, report.to_dict()


def cmd_verify(run: _Run) -> int:
    args = run.args
    spec = _spec(run, args)
    try:
        if args.check == 'ellipticity':
            passed, payload = _verify_ellipticity(run, spec)
        elif args.check == 'comparison-fuzz':
            passed, payload = _verify_comparison_fuzz(run, spec)
        else:
            graph = _load_graph(run, args.graph)
            checks = {'comparison': _verify_comparison, 'harnack': _verify_harnack,
                      'propagate': _verify_propagate}
            passed, payload = checks[args.check](run, graph, spec)
    except PreconditionError as e:
        run.wrote(write_json({'check': args.check, 'outcome': 'precondition', 'error': str(e),
                              'vertices': e.vertices}, run.path(f"verify_{args.check}.json")))
        print(f"⚠️ precondition not satisfied: {e}")
        return EXIT_VERIFICATION
    payload = {'check': args.check, 'outcome': 'passed' if passed else 'failed', 'result': payload}
    run.wrote(write_json(payload, run.path(f"verify_{args.check}.json")))
    return EXIT_OK if passed else EXIT_VERIFICATION


def cmd_counterexample(run: _Run) -> int:
    case = counterexample_catalog(run.args.name)
    graph = case.graph
    run.wrote(write_json(case.graph_document, run.path(f"{case.name}.json")))
    transcript: Dict[str, Any] = {'name': case.name, 'spec': case.spec.to_dict(), 'expected': case.expected}

    if case.name == 'k3_nonexistence':
        config = SolverConfig(max_iterations=10**4, stagnation_window=GraphPDEConfig.STAGNATION_WINDOW)
        report = detect_infeasibility(case.spec, graph, config=config)
        transcript['report'] = report.to_dict()
        reproduced = report.status is SolveStatus.INFEASIBLE_DETECTED
        print(f"{'✅' if reproduced else '❌'} K3: {report.status.value}, residual floor {report.residual_floor}")
    else:
        residuals = {}
        for label, field in case.fields.items():
            run.wrote(save_field(graph, field, run.path(f"{label}.csv")))
            residuals[label] = residual_norm(graph, evaluate(case.spec, graph, field).values)
        solved = {}
        for label, start in (('gauss_seidel_plus', 1.0), ('gauss_seidel_minus', -1.0)):
            report = solve_gauss_seidel(case.spec, graph, config=SolverConfig(initial_value=start))
            run.wrote(save_field(graph, report.solution, run.path(f"{label}.csv")))
            solved[label] = report
        transcript['residuals'] = residuals
        transcript['solves'] = {k: r.to_dict() for k, r in solved.items()}
        distinct = not np.array_equal(solved['gauss_seidel_plus'].solution.values,
                                      solved['gauss_seidel_minus'].solution.values)
        reproduced = all(r == 0 for r in residuals.values()) and distinct and all(
            r.converged for r in solved.values())
        print(f"{'✅' if reproduced else '❌'} median12: residuals {residuals}, distinct solutions: {distinct}")

    transcript['reproduced'] = reproduced
    run.wrote(write_json(transcript, run.path(f"{case.name}_transcript.json")))
    return EXIT_OK if reproduced else EXIT_VERIFICATION


def cmd_fd_consistency(run: _Run) -> int:
    args = run.args
    steps = _floats(args.steps or args.radii or "0.1,0.05,0.025")
    table = run_consistency(args.scheme, args.fn, steps, args.directions)
    run.wrote(write_csv(table, run.path(f"consistency_{args.scheme}_{args.fn}.csv")))

    order = float(table['fitted_order'].iloc[0])
    bar = ORDER_BARS[args.scheme] if args.min_order is None else args.min_order
    ok = True
    if bar is not None and not math.isnan(order):
        ok = order >= bar
    if args.scheme == 'inf-laplacian-ball':
        ok = ok and is_decreasing(table['error'])
    print(table.to_string(index=False))
    print(f"{'✅' if ok else '❌'} {args.scheme} on {args.fn}: fitted order {order:.3f}")
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_generate(run: _Run) -> int:
    args = run.args
    rng = make_rng(args.seed)
    if args.kind == 'grid':
        graph = grid_graph(_ints(args.shape), args.step)
    elif args.kind == 'tree':
        graph = random_tree(args.n, rng)
    else:
        graph = random_digraph(args.n, rng, n_boundary=args.n_boundary)
    if args.random_g:
        low, high = _floats(args.random_g)
        values = {b: float(rng.uniform(low, high)) for b in graph.boundary_list}
    else:
        values = {b: args.g for b in graph.boundary_list}
    graph = graph.with_boundary_values(values)
    run.wrote(save_graph(graph, run.path(args.name)))
    print(f"✅ generated {graph!r}")
    return EXIT_OK


def cmd_distance(run: _Run) -> int:
    args = run.args
    graph = _load_graph(run, args.graph)
    if args.target:
        d = path_distance(graph, args.source, args.target)
        rows = [(args.target, float(d))]
    else:
        rows = [(v, float(d)) for v, d in distances_from(graph, args.source).items()]
    frame = pd.DataFrame(rows, columns=['vertex', 'distance'])
    run.wrote(write_csv(frame, run.path("distances.csv")))
    for vertex, d in rows:
        print(f"  d({args.source}, {vertex}) = {'UNREACHABLE' if math.isinf(d) else repr(d)}")
    return EXIT_OK


def cmd_replay(run: _Run) -> int:
    manifest = RunManifest.model_validate(read_json(run.args.manifest))
    if manifest.version != VERSION:
        logger.warning(f"Manifest recorded with version {manifest.version}, running {VERSION}")
    if manifest.command == 'replay':
        raise UsageError("refusing to replay a replay manifest")
    return main(manifest.argv)


COMMANDS = {
    'solve': cmd_solve,
    'verify': cmd_verify,
    'counterexample': cmd_counterexample,
    'fd-consistency': cmd_fd_consistency,
    'generate': cmd_generate,
    'distance': cmd_distance,
    'replay': cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='graph-pde', description='Elliptic PDEs on weighted directed graphs')
    parser.add_argument('--version', action='version', version=VERSION)
    parser.add_argument('--seed', type=int, default=GraphPDEConfig.DEFAULT_SEED)
    parser.add_argument('--threads', type=int, help=f'worker cap (env {GraphPDEConfig.THREADS_ENV})')
    parser.add_argument('--output-dir', '-o', default=OUTPUT_DIR)
    parser.add_argument('--log-level', default='WARNING')
    parser.add_argument('--log-file')
    sub = parser.add_subparsers(dest='command', required=True)

    # --seed and --threads are accepted after the command too; unset there, the global value stands
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=argparse.SUPPRESS)
    common.add_argument('--threads', type=int, default=argparse.SUPPRESS)
    add_parser = functools.partial(sub.add_parser, parents=[common])

    p = add_parser('solve', help='solve a Dirichlet problem')
    p.add_argument('--graph', required=True)
    p.add_argument('--boundary', help='field CSV overriding the boundary values in the graph file')
    _add_spec_args(p)
    _add_solver_args(p)

    p = add_parser('verify', help='run a well-posedness check')
    p.add_argument('check', choices=['comparison', 'harnack', 'ellipticity', 'propagate', 'comparison-fuzz'])
    p.add_argument('--graph')
    p.add_argument('--u')
    p.add_argument('--v')
    p.add_argument('--solution')
    p.add_argument('--trials', type=int, help='default: ellipticity 10**4, comparison-fuzz 200')
    p.add_argument('--family', choices=sorted(FAMILIES), default='tree', help='graph family for comparison-fuzz')
    p.add_argument('--expect', nargs='*', help='ellipticity properties that must hold')
    p.add_argument('--tol', type=float, default=GraphPDEConfig.TOLERANCE)
    _add_spec_args(p)

    p = add_parser('counterexample', help='reproduce a catalog counterexample')
    p.add_argument('name')

    p = add_parser('fd-consistency', help='finite-difference consistency study')
    p.add_argument('--scheme', required=True, choices=list(SCHEMES))
    p.add_argument('--fn', required=True)
    p.add_argument('--steps')
    p.add_argument('--radii')
    p.add_argument('--directions', type=int)
    p.add_argument('--min-order', type=float)

    p = add_parser('generate', help='write a generated graph')
    p.add_argument('--kind', choices=['grid', 'tree', 'digraph'], default='grid')
    p.add_argument('--shape', default='5,5')
    p.add_argument('--step', type=float, default=1.0)
    p.add_argument('--n', type=int, default=10)
    p.add_argument('--n-boundary', type=int, default=2)
    p.add_argument('--g', type=float, default=0.0)
    p.add_argument('--random-g', help='LOW,HIGH for uniform random boundary values')
    p.add_argument('--name', default='graph.json')

    p = add_parser('distance', help='shortest directed path distances')
    p.add_argument('--graph', required=True)
    p.add_argument('--from', dest='source', required=True)
    p.add_argument('--to', dest='target')

    p = add_parser('replay', help='re-run a recorded manifest')
    p.add_argument('manifest')
    return parser


def _exit_code(error: BaseException) -> int:
    if isinstance(error, (GraphValidationError, SpecError)):
        return EXIT_VALIDATION
    if isinstance(error, (PreconditionError, LemmaViolationError)):
        return EXIT_VERIFICATION
    if isinstance(error, SolverError):
        return EXIT_NONCONVERGENCE
    return EXIT_USAGE


def _manifest_config(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {'output_dir', 'log_file', 'log_level'}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"❌ usage: {e}", file=sys.stderr)
        return EXIT_USAGE
    problems = GraphPDEConfig.validate_config()
    if problems:
        print(f"❌ invalid configuration: {'; '.join(problems)}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(args.log_file, args.log_level)
    if args.threads is not None:
        args.threads = GraphPDEConfig.threads(args.threads)
    run = _Run(args)
    try:
        code = COMMANDS[args.command](run)
    except (GraphPDEError, ValidationError, json.JSONDecodeError, FileNotFoundError, ValueError, KeyError) as e:
        code = _exit_code(e)
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        logger.error(f"{args.command} failed: {e}")
        return code

    if args.command != 'replay':
        manifest = RunManifest(command=args.command, argv=argv, inputs=run.inputs,
                               config=_manifest_config(args), seed=args.seed, version=VERSION,
                               outputs=sorted(run.outputs), defaults=GraphPDEConfig.as_dict())
        write_json(manifest.model_dump(), run.path(MANIFEST_NAME))
    return code
