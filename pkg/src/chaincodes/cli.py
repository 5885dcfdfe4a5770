"""Batch front-end: ``chaincodes <group> <action> [options]``.

Exit status is 0 on success, 1 when a PASS/FAIL check or validation fails,
and 2 for unusable input (bad JSON, bad flags, structural errors).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import functionals as fn
from .errors import ChainingError
from .gaussian import (GaussianModel, canonical_metric, check_expected_sup, check_increment_condition,
                       check_tail_bound, estimate_sup)
from .lower_bound import assign_lower_codes, greedy_gaussian_partition, sudakov_check, verify_len_diff
from .metric import MetricSpace, ProbabilityMeasure, diameter, normalize_diameter, validate_metric
from .optimizer import fernique_self_bound, optimize_majorizing_measure
from .partition import PartitionTree, build_radial_partitions, validate_tree
from .vlc import (VlcSequence, build_from_labeled_net, build_from_measures, build_from_single_measure,
                  emit_codewords, measure_conditionals, validate_admissible)
from .weights import WeightSequence

METHODS = ("measures", "labeled-net", "single-measure", "lower")
FUNCTIONALS = ("ft", "m", "sigma-bar", "sigma-code", "refinement", "bednorz", "entropy-chain")


class InputError(Exception):
    pass


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _write(out, text: str):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if not getattr(args, "no_seed", False):
        raise InputError("--seed is required (pass --no-seed to draw one from system entropy)")
    seed = int(np.random.SeedSequence().entropy % (2**63))
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _names(text) -> list[str] | None:
    if text is None:
        return None
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise InputError(f"--{name.replace('_', '-')} is required")


def _space(args) -> MetricSpace:
    _need(args, "space")
    return MetricSpace.from_json(_read_json(args.space))


def _model(args) -> GaussianModel:
    _need(args, "cov")
    return GaussianModel.from_json(_read_json(args.cov))


def _measure(path, space: MetricSpace) -> ProbabilityMeasure:
    if path is None:
        return ProbabilityMeasure.uniform(space.n)
    return ProbabilityMeasure.from_json(_read_json(path), space)


def _weights(source) -> WeightSequence:
    if source in (None, "dyadic"):
        return WeightSequence.dyadic()
    obj = _read_json(source)
    return WeightSequence.from_values(obj["p"] if isinstance(obj, dict) else obj)


def _normalized(space: MetricSpace) -> MetricSpace:
    return normalize_diameter(space) if diameter(space) > 1 else space


def _quiet_metric(model: GaussianModel, scale: float) -> MetricSpace:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return canonical_metric(model, scale)


def _build_codes(tree: PartitionTree, method: str, measure: ProbabilityMeasure | None) -> VlcSequence:
    mu = ProbabilityMeasure.uniform(tree.n) if measure is None else measure
    if method == "measures":
        return build_from_measures(tree, mu, measure_conditionals(tree, mu) if measure is not None else None)
    if method == "labeled-net":
        return build_from_labeled_net(tree)
    if method == "single-measure":
        return build_from_single_measure(tree, mu)
    if method == "lower":
        return assign_lower_codes(tree)
    raise InputError(f"unknown code method {method!r}")


# -- subcommands -----------------------------------------------------------------

def cmd_space_gen(args) -> int:
    space = MetricSpace.from_json(_read_json(args.input))
    if args.normalize:
        space = normalize_diameter(space)
    _write(args.out, json.dumps(space.to_json(), indent=2) + "\n")
    return 0


def cmd_space_validate(args) -> int:
    space = MetricSpace.from_json(_read_json(args.input))
    problems = validate_metric(space)
    for p in problems:
        print(p)
    if not problems:
        print(f"OK: {space.n} points, diameter {diameter(space)!r}")
    return 1 if problems else 0


def cmd_partition_build(args) -> int:
    if args.greedy_gaussian:
        model = _model(args)
        metric = _normalized(_quiet_metric(model, args.scale))
        tree = greedy_gaussian_partition(model, metric, args.r, args.depth, args.mc_n, _seed(args))
    else:
        tree = build_radial_partitions(_normalized(_space(args)), args.r, args.depth)
    problems = validate_tree(tree)
    for p in problems:
        print(p, file=sys.stderr)
    _write(args.out, json.dumps(tree.to_json(), indent=2) + "\n")
    return 1 if problems else 0


def cmd_codes_build(args) -> int:
    _need(args, "tree")
    tree = PartitionTree.from_json(_read_json(args.tree))
    measure = None if args.measure is None else _measure(args.measure, tree.space)
    vlc = _build_codes(tree, args.method, measure)
    obj = vlc.to_json()
    if args.emit:
        for level, words in zip(obj["levels"], emit_codewords(vlc)):
            for row, word in zip(level, words):
                row["codeword"] = word
    problems = validate_admissible(vlc)
    for p in problems:
        print(p, file=sys.stderr)
    _write(args.out, json.dumps(obj, indent=2) + "\n")
    return 1 if problems else 0


def cmd_bound_eval(args) -> int:
    _need(args, "functional")
    p = _weights(args.p)
    vlc = tree = space = None
    if args.codes:
        vlc = VlcSequence.from_json(_read_json(args.codes))
        tree, space = vlc.tree, vlc.tree.space
    if args.tree:
        tree = PartitionTree.from_json(_read_json(args.tree))
        space = tree.space
    if args.space:
        space = _space(args)
    f = args.functional
    if f in ("sigma-bar", "sigma-code", "refinement") and vlc is None:
        raise InputError(f"--codes is required for {f}")
    if f in ("bednorz", "entropy-chain") and tree is None:
        raise InputError(f"--tree is required for {f}")
    if space is None:
        raise InputError("--space is required")
    mu = _measure(args.measure, space)
    nu = _measure(args.nu, space) if f == "m" else None
    report = fn.evaluate(f, space=space, vlc=vlc, tree=tree, mu=mu, nu=nu, p=p)
    _write(args.out, report.to_csv() if args.format == "csv" else report.dumps() + "\n")
    return 0


def cmd_simulate_sup(args) -> int:
    model = _model(args)
    est = estimate_sup(model, _names(args.subset), args.n, _seed(args), args.center)
    _write(args.out, "value,half_width,samples,seed\n"
                     f"{est.value!r},{est.half_width!r},{est.samples},{est.seed}\n")
    return 0


def _verify_setup(args):
    model = _model(args)
    metric = _quiet_metric(model, args.scale)
    space = _normalized(metric)
    tree = build_radial_partitions(space, args.r, args.depth)
    measure = None if args.measure is None else _measure(args.measure, space)
    return model, metric, _build_codes(tree, args.method, measure)


def cmd_verify(args) -> int:
    kind = args.check
    if kind == "increment":
        model = _model(args)
        metric = _quiet_metric(model, args.scale)
        exponent = 1.0 if args.scale >= math.sqrt(2) - 1e-12 else 2.0
        res = check_increment_condition(model, metric, _floats(args.u), args.n, _seed(args), exponent)
        _write(args.out, res.to_csv())
        for s in res.skipped:
            print(f"skipped zero-distance pair {s}", file=sys.stderr)
        return 0 if res.passed else 1
    if kind == "theorem1":
        model, metric, vlc = _verify_setup(args)
        t0 = args.t0 if args.t0 is not None else metric.labels[0]
        res = check_tail_bound(model, metric, vlc, _weights(args.p), t0, _floats(args.u), args.n, _seed(args))
        _write(args.out, res.to_csv())
        return 0 if res.passed else 1
    if kind == "corollary":
        model, metric, vlc = _verify_setup(args)
        res = check_expected_sup(model, metric, vlc, _weights(args.p), args.n, _seed(args))
        _write(args.out, "E_sup,half_width,bound,ok\n"
                         f"{res.estimate.value!r},{res.estimate.half_width!r},{res.bound!r},"
                         f"{'PASS' if res.passed else 'FAIL'}\n")
        return 0 if res.passed else 1
    if kind == "len-diff":
        model = _model(args)
        seed = _seed(args)
        metric = _normalized(_quiet_metric(model, args.scale))
        tree = greedy_gaussian_partition(model, metric, args.r, args.depth, args.mc_n, seed)
        rep = verify_len_diff(model, assign_lower_codes(tree), args.r, args.n, seed)
        _write(args.out, rep.to_csv())
        print(f"sup ratio: {rep.sup_ratio!r}", file=sys.stderr)
        if args.max_ratio is not None:
            return 0 if rep.sup_ratio <= args.max_ratio else 1
        return 0
    if kind == "sudakov":
        model = _model(args)
        _need(args, "points")
        rep = sudakov_check(model, _names(args.points), None, args.a, args.n, _seed(args))
        _write(args.out, "G_H,a_sqrt_log_m,min_G_Hl,c_hat\n"
                         f"{rep.g_union.value!r},{rep.scale!r},{rep.min_piece!r},{rep.constant!r}\n")
        return 0
    raise InputError(f"unknown check {kind!r}")


def cmd_optimize(args) -> int:
    space = _space(args)
    seed = _seed(args)
    if args.objective == "mm":
        res = optimize_majorizing_measure(space, args.iters, args.tol, seed)
        obj = {"objective": "sup_t I_mu(t)", "value": res.value, "baseline": res.baseline}
        trace = res.trace
    else:
        res = fernique_self_bound(space, args.iters, args.tol, seed)
        # an infinite sup (massless point) is written as null to keep the JSON strict
        sup_ft = res.sup_ft if math.isfinite(res.sup_ft) else None
        obj = {"objective": "M(mu,mu)", "value": res.value, "sup_ft": sup_ft, "baseline": res.baseline}
        trace = res.trace
    obj["measure"] = res.measure.to_json(space)
    _write(args.out, json.dumps(obj, indent=2) + "\n")
    if args.trace:
        Path(args.trace).write_text("iteration,objective\n" +
                                    "".join(f"{i},{v!r}\n" for i, v in enumerate(trace)))
    return 0


def _svg(report: fn.BoundReport) -> str:
    import io

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(report.labels) + 2), 3.2))
    pos = np.arange(len(report.labels))
    ax.bar(pos, report.values, color="#4c72b0", label=report.functional)
    ranked = np.sort(report.values)[::-1]
    ax.step(pos, ranked, where="mid", color="#dd8452", label="sorted")
    ax.set_xticks(pos, report.labels, rotation=90 if len(pos) > 12 else 0)
    ax.set_ylabel(report.functional)
    ax.legend(frameon=False)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    return buf.getvalue()


def cmd_report(args) -> int:
    report = fn.BoundReport.from_json(_read_json(args.input))
    if args.out == "csv":
        text = report.to_csv()
    elif args.out == "json":
        text = report.dumps() + "\n"
    else:
        text = _svg(report)
    _write(args.file, text)
    return 0


# -- parser ------------------------------------------------------------------------

def _seed_flags(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--no-seed", action="store_true", help="draw a seed from system entropy")


def _code_flags(p):
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--method", choices=METHODS, default="single-measure")
    p.add_argument("--measure")
    p.add_argument("--p", default="dyadic", help="'dyadic' or a JSON file with level weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaincodes", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file whose keys supply default flag values")
    groups = parser.add_subparsers(dest="group", required=True)

    space = groups.add_parser("space").add_subparsers(dest="action", required=True)
    p = space.add_parser("gen", help="materialize a metric space from a JSON generator")
    p.add_argument("input")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_space_gen)
    p = space.add_parser("validate", help="list metric-axiom violations")
    p.add_argument("input")
    p.set_defaults(func=cmd_space_validate)

    part = groups.add_parser("partition").add_subparsers(dest="action", required=True)
    p = part.add_parser("build")
    p.add_argument("--space")
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--greedy-gaussian", action="store_true")
    p.add_argument("--cov")
    p.add_argument("--scale", type=float, default=math.sqrt(2))
    p.add_argument("--mc-n", type=int, default=10_000)
    _seed_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_partition_build)

    codes = groups.add_parser("codes").add_subparsers(dest="action", required=True)
    p = codes.add_parser("build")
    p.add_argument("--tree")
    p.add_argument("--method", choices=METHODS, default="single-measure")
    p.add_argument("--measure")
    p.add_argument("--emit", action="store_true", help="include canonical prefix codewords")
    p.add_argument("--out")
    p.set_defaults(func=cmd_codes_build)

    bound = groups.add_parser("bound").add_subparsers(dest="action", required=True)
    p = bound.add_parser("eval")
    p.add_argument("--functional", choices=FUNCTIONALS)
    p.add_argument("--space")
    p.add_argument("--tree")
    p.add_argument("--codes")
    p.add_argument("--measure")
    p.add_argument("--nu")
    p.add_argument("--p", default="dyadic")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound_eval)

    sim = groups.add_parser("simulate").add_subparsers(dest="action", required=True)
    p = sim.add_parser("sup")
    p.add_argument("--cov")
    p.add_argument("--subset", help="comma-separated labels (default: all)")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--center")
    _seed_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate_sup)

    p = groups.add_parser("verify")
    p.add_argument("check", choices=("increment", "theorem1", "corollary", "len-diff", "sudakov"))
    p.add_argument("--cov")
    p.add_argument("--scale", type=float, default=math.sqrt(2),
                   help="canonical-metric multiplier (sqrt 2 matches the 2exp(-u^2) increment tail)")
    p.add_argument("--u", default="0.5,1,1.5,2")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--t0")
    _code_flags(p)
    p.add_argument("--mc-n", type=int, default=10_000)
    p.add_argument("--max-ratio", type=float)
    p.add_argument("--points")
    p.add_argument("--a", type=float)
    _seed_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify, action=None)

    p = groups.add_parser("optimize")
    p.add_argument("objective", choices=("mm", "fernique"))
    p.add_argument("--space")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--trace", help="write the objective trace as CSV")
    _seed_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize, action=None)

    p = groups.add_parser("report")
    p.add_argument("input", help="bound report JSON")
    p.add_argument("--out", choices=("csv", "json", "svg"), default="csv")
    p.add_argument("--file", help="destination (default stdout)")
    p.set_defaults(func=cmd_report, action=None)
    return parser


def _leaf_parser(parser: argparse.ArgumentParser, args) -> argparse.ArgumentParser:
    node = parser
    for name in (args.group, getattr(args, "action", None)):
        if name is None:
            break
        sub = next(a for a in node._actions if isinstance(a, argparse._SubParsersAction))
        if name not in sub.choices:
            break
        node = sub.choices[name]
        if not any(isinstance(a, argparse._SubParsersAction) for a in node._actions):
            break
    return node


def _config_defaults(parser, args) -> None:
    """Install config-file values as defaults of the chosen subcommand."""
    config = _read_json(args.config)
    if not isinstance(config, dict):
        raise InputError(f"{args.config}: config must be a JSON object")
    leaf = _leaf_parser(parser, args)
    dests = {a.dest for a in leaf._actions}
    values = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            raise InputError(f"{args.config}: unknown option {key!r} for this command")
        values[dest] = value
    leaf.set_defaults(**values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            _config_defaults(parser, args)
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (InputError, ChainingError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
