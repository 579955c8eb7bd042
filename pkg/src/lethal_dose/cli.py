"""Command-line front end.

    ldc accuracy --task memorization --m 50 --k 5 --n 100 --trials 10000
    ldc min-n --task memorization --m 100 --k 10 --tau 0.9 --bound-only
    ldc sweep --task bijection --grid 4,8,16,32 --tau 0.75 --N 2000 --seed 7

Exit status: 0 success, 1 invalid arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import rng as rngmod
from .aggregation import PartitionPlan
from .attacks import attack_from_json, matched_attack
from .coupling import (FiniteDistribution, GaussianDistribution, maximal_coupling_sample, tv_finite,
                       tv_gaussian_same_cov)
from .harness import (brute_force_certificate_check, dpa_certified_curve, estimate_accuracy, find_min_n,
                      finite_universe, measure_lethal_dose, min_n_bound, pick_swap_target, scaling_sweep)
from .learners import canonical_learner, learner_from_json
from .tasks import BijectionTask, Dataset, GaussianTask, MemorizationTask

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    """Invalid command-line input; the message names the offending flag."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


def write_csv(path: str | Path | None, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    if path is None:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_manifest(args, started: float) -> None:
    path = args.manifest or (args.out and f"{args.out}.manifest.json")
    if not path:
        return
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "manifest", "out")}
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    manifest = {
        "seed": args.seed,
        "command": args.command,
        "config": config,
        "input_hash": hashlib.sha256(blob).hexdigest(),
        "version": __version__,
        "wall_time": round(time.time() - started, 3),
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


# -- argument helpers --------------------------------------------------------

def _int_list(flag):
    def parse(text):
        try:
            values = [int(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects comma-separated integers, got {text!r}")
        if not values:
            raise argparse.ArgumentTypeError(f"{flag} must not be empty")
        return values
    return parse


def _json_arg(flag):
    def parse(text):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise argparse.ArgumentTypeError(f"{flag} is not valid JSON: {exc}")
    return parse


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $LDC_THREADS or CPU count); results do not depend on it")
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--manifest", default=None, help="JSON run manifest path (default: <out>.manifest.json)")
    p.add_argument("--config", default=None, help="JSON file of flag values; explicit flags take precedence")


def _add_task(p: argparse.ArgumentParser, default: str | None = None) -> None:
    p.add_argument("--task", choices=["bijection", "memorization", "gaussian"], default=default,
                   required=default is None, help="task family")
    p.add_argument("--k", type=int, default=None, help="number of labels")
    p.add_argument("--m", type=int, default=None, help="number of inputs (memorization)")
    p.add_argument("--d", type=int, default=None, help="input dimension (gaussian)")
    p.add_argument("--centers", type=_json_arg("--centers"), default=None,
                   help='gaussian class centers as JSON, e.g. "[[1,0],[3,0]]"')
    p.add_argument("--g", type=_json_arg("--g"), default=None,
                   help="hidden labelling as a JSON list (default: drawn from the seed)")
    p.add_argument("--x0", type=_json_arg("--x0"), default=None,
                   help="query input: an int, or a JSON list for gaussian (default 0 / origin)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldc", description="Lethal-dose experiments for data poisoning.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("accuracy", help="Monte Carlo clean accuracy at x0")
    _add_task(p)
    p.add_argument("--learner", type=_json_arg("--learner"), default=None,
                   help='learner JSON {"name":..., "params":{...}} (default: task\'s canonical learner)')
    p.add_argument("--n", type=int, required=True, help="training set size")
    p.add_argument("--trials", type=int, default=10000, help="Monte Carlo rounds (>= 30)")
    _add_common(p)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("min-n", help="clean sample complexity n(tau) and its closed-form bound")
    _add_task(p)
    p.add_argument("--tau", type=float, required=True, help="target accuracy")
    p.add_argument("--trials", type=int, default=4000, help="rounds per evaluated n (>= 30)")
    p.add_argument("--bound-only", action="store_true", help="print the closed-form bound and exit")
    p.add_argument("--cap", type=int, default=10**6, help="largest n searched")
    _add_common(p)
    p.set_defaults(func=cmd_min_n)

    p = sub.add_parser("attack", help="lethal dose: attack size and post-attack accuracy")
    _add_task(p)
    p.add_argument("--attack", type=_json_arg("--attack"), default=None,
                   help="attack JSON (default: the task's matched construction)")
    p.add_argument("--N", type=int, required=True, help="clean training set size")
    p.add_argument("--trials", type=int, default=1000, help="independent trials")
    p.add_argument("--epsilon", type=float, default=0.01, help="gaussian shift overshoot (> 0)")
    p.add_argument("--k-part", type=int, default=None, help="defend with DPA over this many partitions")
    p.add_argument("--pilot", type=int, default=0, help="pilot rounds for choosing the swap target")
    _add_common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", help="scaling check: n_hat * dose / N across a grid")
    p.add_argument("--task", choices=["bijection", "memorization"], required=True, help="task family")
    p.add_argument("--grid", type=_int_list("--grid"), required=True, help="k values (bijection) or m values")
    p.add_argument("--k", type=int, default=5, help="labels for memorization grids")
    p.add_argument("--tau", type=float, required=True, help="target accuracy")
    p.add_argument("--N", type=int, required=True, help="training set size for the dose")
    p.add_argument("--trials", type=int, default=2000, help="rounds per evaluated n")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dpa-curve", help="certified fraction vs attack size for DPA")
    _add_task(p)
    p.add_argument("--learner", type=_json_arg("--learner"), default=None, help="base learner JSON")
    p.add_argument("--k-part", type=_int_list("--k-part"), required=True, help="partition counts, comma-separated")
    p.add_argument("--N", type=int, required=True, help="training set size")
    p.add_argument("--queries", type=int, default=500, help="number of query points")
    _add_common(p)
    p.set_defaults(func=cmd_dpa_curve)

    p = sub.add_parser("certify-check", help="exhaustive soundness check of the DPA certificate")
    _add_task(p, default="memorization")
    p.add_argument("--n", type=int, default=6, help="clean dataset size (<= 10)")
    p.add_argument("--k-part", type=int, default=3, help="number of partitions")
    p.add_argument("--t-max", type=int, default=2, help="largest attack size enumerated (<= 3)")
    _add_common(p)
    p.set_defaults(func=cmd_certify_check)

    p = sub.add_parser("tv", help="total variation distance")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--gaussian", action="store_true", help="unit-covariance Gaussians")
    grp.add_argument("--p", type=_json_arg("--p"), default=None, help="finite distribution U as JSON list")
    p.add_argument("--q", type=_json_arg("--q"), default=None, help="finite distribution V as JSON list")
    p.add_argument("--dist", type=float, default=None, help="distance between Gaussian means")
    _add_common(p)
    p.set_defaults(func=cmd_tv)

    p = sub.add_parser("couple", help="maximal coupling diagnostics")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--gaussian", action="store_true", help="couple N(0, I) with N(mu2, I)")
    grp.add_argument("--p", type=_json_arg("--p"), default=None, help="finite U as JSON list")
    p.add_argument("--q", type=_json_arg("--q"), default=None, help="finite V as JSON list")
    p.add_argument("--dist", type=float, default=None, help="distance between Gaussian means (1-D)")
    p.add_argument("--draws", type=int, default=100000, help="number of coupled draws")
    _add_common(p)
    p.set_defaults(func=cmd_couple)
    return parser


# -- validation --------------------------------------------------------------

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def make_task(args):
    g = rngmod.stream(args.seed, "task")
    kind = args.task
    if kind == "bijection":
        _require(args.k is not None and args.k >= 2, "--k must be given and >= 2 for the bijection task")
        if args.g is not None:
            return _build(lambda: BijectionTask(args.k, tuple(args.g)), "--g")
        return BijectionTask.random(args.k, g)
    if kind == "memorization":
        _require(args.m is not None and args.m >= 1, "--m must be given and >= 1 for the memorization task")
        _require(args.k is not None and args.k >= 2, "--k must be given and >= 2 for the memorization task")
        if args.g is not None:
            return _build(lambda: MemorizationTask(args.m, args.k, tuple(args.g)), "--g")
        return MemorizationTask.random(args.m, args.k, g)
    if args.centers is not None:
        task = _build(lambda: GaussianTask(tuple(map(tuple, args.centers))), "--centers")
        _require(args.k is None or args.k == task.k, "--k disagrees with the number of --centers")
        _require(args.d is None or args.d == task.d, "--d disagrees with the dimension of --centers")
        return task
    _require(args.k is not None and args.k >= 2, "--k must be given and >= 2 (or pass --centers)")
    _require(args.d is not None and args.d >= 1, "--d must be given and >= 1 (or pass --centers)")
    return GaussianTask(tuple(map(tuple, g.normal(0.0, 3.0, size=(args.k, args.d)))))


def _build(fn, flag):
    try:
        return fn()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{flag}: {exc}")


def query_point(args, task):
    if task.kind == "gaussian":
        x0 = tuple([0.0] * task.d) if args.x0 is None else tuple(float(v) for v in np.atleast_1d(args.x0))
        _require(len(x0) == task.d, f"--x0 must have {task.d} coordinates")
        return x0
    x0 = 0 if args.x0 is None else args.x0
    _require(isinstance(x0, int) and 0 <= x0 < task.n_inputs, f"--x0 must be an input id in [0, {task.n_inputs})")
    return x0


def make_learner(args, task):
    if args.learner is None:
        return canonical_learner(task)
    return _build(lambda: learner_from_json(args.learner), "--learner")


def _task_cols(task) -> list:
    return [task.kind, task.k, getattr(task, "m", ""), getattr(task, "d", "")]


TASK_HEADER = ["task", "k", "m", "d"]


# -- subcommands -------------------------------------------------------------

def cmd_accuracy(args) -> int:
    _require(args.n >= 0, "--n must be >= 0")
    _require(args.trials >= 30, "--trials must be >= 30")
    task = make_task(args)
    x0 = query_point(args, task)
    est = estimate_accuracy(make_learner(args, task), task, x0, args.n, args.trials,
                            rngmod.stream(args.seed, "accuracy"))
    print(f"p_hat={est.p_hat:.6f} ci=[{est.ci_low:.6f}, {est.ci_high:.6f}] trials={est.trials}")
    write_csv(args.out, TASK_HEADER + ["n", "trials", "p_hat", "ci_lo", "ci_hi"],
              [_task_cols(task) + [args.n, est.trials, est.p_hat, est.ci_low, est.ci_high]])
    return EXIT_OK


def cmd_min_n(args) -> int:
    _require(0 < args.tau < 1, "--tau must lie in (0, 1)")
    if args.bound_only:
        _require(args.task in ("bijection", "memorization"), "--bound-only needs --task bijection or memorization")
        _require(args.k is not None, "--k is required")
        try:
            bound = min_n_bound(args.task, args.tau, args.k, args.m)
        except ValueError as exc:
            raise UsageError(f"--tau/--k/--m: {exc}")
        print(f"{bound:.2f}")
        return EXIT_OK
    _require(args.trials >= 30, "--trials must be >= 30")
    task = make_task(args)
    x0 = query_point(args, task)
    _require(1 / task.n_labels < args.tau, f"--tau must exceed 1/k = {1 / task.n_labels:g}")
    res = find_min_n(canonical_learner(task), task, x0, args.tau, args.trials,
                     rngmod.stream(args.seed, "min-n"), cap=args.cap)
    bound = "n/a" if res.bound_closed_form is None else f"{res.bound_closed_form:.2f}"
    print(f"n_hat={res.n_hat} bound={bound} slack={res.slack} consistent={res.consistent_with_bound}")
    write_csv(args.out, TASK_HEADER + ["tau", "n", "p_hat", "ci_lo", "ci_hi", "trials", "n_hat"],
              [_task_cols(task) + [args.tau, n, e.p_hat, e.ci_low, e.ci_high, e.trials, res.n_hat]
               for n, e in res.estimates.items()])
    return EXIT_OK


def cmd_attack(args) -> int:
    _require(args.N >= 0, "--N must be >= 0")
    _require(args.trials >= 1, "--trials must be >= 1")
    _require(args.epsilon > 0, "--epsilon must be > 0")
    task = make_task(args)
    x0 = query_point(args, task)
    learner = canonical_learner(task)
    if args.attack is not None:
        attack = _build(lambda: attack_from_json(args.attack, task), "--attack")
    else:
        y1 = None
        if task.kind == "bijection":
            y1 = pick_swap_target(learner, task, x0, args.N, rngmod.stream(args.seed, "pilot"), args.pilot)
        attack = _build(lambda: matched_attack(task, x0, y1, args.epsilon), "--x0")
    if args.k_part is not None:
        from .aggregation import DPALearner
        _require(args.k_part >= 1, "--k-part must be >= 1")
        learner = DPALearner(learner, args.k_part, task.n_labels)
    rep = measure_lethal_dose(learner, task, x0, attack, args.N, args.trials, rngmod.stream(args.seed, "attack"))
    print(f"attack={rep.attack} expected_size={rep.expected_size:.4f} realized_mean={rep.realized_mean:.4f} "
          f"post_acc={rep.post_acc:.4f} ci=[{rep.ci_lo:.4f}, {rep.ci_hi:.4f}] chance={rep.chance:.4f}")
    write_csv(args.out, TASK_HEADER + ["N", "attack", "trials", "expected_size", "expected_touched",
                                       "realized_mean", "realized_sd", "touched_mean", "post_acc", "ci_lo", "ci_hi"],
              [_task_cols(task) + [rep.N, rep.attack, rep.trials, rep.expected_size, rep.expected_touched,
                                   rep.realized_mean, rep.realized_sd, rep.touched_mean, rep.post_acc,
                                   rep.ci_lo, rep.ci_hi]])
    return EXIT_OK


def cmd_sweep(args) -> int:
    _require(all(v >= 2 for v in args.grid), "--grid values must be >= 2")
    _require(args.trials >= 30, "--trials must be >= 30")
    _require(args.N >= 1, "--N must be >= 1")
    lo = 0.5 if args.task == "bijection" else 1 / args.k
    _require(lo < args.tau < 1, f"--tau must lie in ({lo:g}, 1) for {args.task}")
    res = scaling_sweep(args.task, args.grid, args.tau, args.N, rngmod.stream(args.seed, "sweep"),
                        trials_per_n=args.trials, k=args.k)
    for row in res.rows:
        print(f"{row.task_params} n_hat={row.n_hat} dose={row.lethal_expected:.2f} product={row.product:.4f}")
    print(f"max/min product ratio: {res.ratio:.4f}")
    write_csv(args.out, ["task", "k", "m", "tau", "N", "n_hat", "bound", "lethal_expected", "lethal_touched",
                         "product"],
              [[args.task, r.task_params["k"], r.task_params.get("m", ""), args.tau, r.N, r.n_hat,
                "" if r.bound_closed_form is None else r.bound_closed_form, r.lethal_expected, r.lethal_touched,
                r.product] for r in res.rows])
    return EXIT_OK


def cmd_dpa_curve(args) -> int:
    _require(all(v >= 1 for v in args.k_part), "--k-part values must be >= 1")
    _require(args.queries >= 1, "--queries must be >= 1")
    task = make_task(args)
    base = make_learner(args, task)
    rows = []
    for kp in args.k_part:
        curve = dpa_certified_curve(task, base, kp, args.N, args.queries, rngmod.stream(args.seed, "dpa-curve"))
        print(f"k_part={kp} accuracy={curve.accuracy:.4f} base_accuracy={curve.base_accuracy:.4f} "
              f"median_certified={curve.median_certified_size:g}")
        rows += [[kp, t, frac, curve.base_accuracy, curve.median_certified_size] for t, frac in curve.table()]
    write_csv(args.out, ["k_part", "t", "certified_fraction", "base_accuracy", "median_certified_size"], rows)
    return EXIT_OK


def cmd_certify_check(args) -> int:
    _require(args.task != "gaussian", "--task must be finite for exhaustive checking")
    task = make_task(args)
    universe = finite_universe(task)
    _require(len(universe) <= 12, "--m/--k give a universe larger than 12 samples")
    _require(0 <= args.n <= 10, "--n must be in [0, 10]")
    _require(0 <= args.t_max <= 3, "--t-max must be in [0, 3]")
    _require(args.k_part >= 1, "--k-part must be >= 1")
    D = task.sample(args.n, rngmod.stream(args.seed, "certify-data"))
    plan = PartitionPlan(args.k_part)
    rows, failed = [], False
    for x0 in range(task.n_inputs):
        res = brute_force_certificate_check(universe, D, plan, canonical_learner(task), x0, args.t_max,
                                            task.n_labels)
        failed |= not res.ok
        rows.append([x0, res.certificate.prediction, res.certificate.certified_size, res.certificate.raw_bound,
                     res.checked_radius, res.datasets_checked, res.ok])
        print(f"x0={x0} prediction={res.certificate.prediction} certified={res.certificate.certified_size} "
              f"checked={res.datasets_checked} ok={res.ok}"
              + ("" if res.ok else f" counterexample={res.counterexample!r}"))
    write_csv(args.out, ["x0", "prediction", "certified_size", "raw_bound", "checked_radius",
                         "datasets_checked", "ok"], rows)
    return EXIT_RUNTIME if failed else EXIT_OK


def _finite_pair(args):
    _require(args.q is not None, "--q is required with --p")
    try:
        return FiniteDistribution(args.p), FiniteDistribution(args.q)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--p/--q: {exc}")


def cmd_tv(args) -> int:
    if args.gaussian:
        _require(args.dist is not None and args.dist >= 0, "--dist must be given and >= 0 with --gaussian")
        value = tv_gaussian_same_cov([0.0], [args.dist])
    else:
        U, V = _finite_pair(args)
        _require(len(U) == len(V), "--p and --q must have the same length")
        value = tv_finite(U, V)
    print(f"{value:.6f}")
    write_csv(args.out, ["tv"], [[value]])
    return EXIT_OK


def cmd_couple(args) -> int:
    _require(args.draws >= 1, "--draws must be >= 1")
    if args.gaussian:
        _require(args.dist is not None and args.dist >= 0, "--dist must be given and >= 0 with --gaussian")
        U, V = GaussianDistribution([0.0]), GaussianDistribution([args.dist])
        delta = tv_gaussian_same_cov(U.mean, V.mean)
    else:
        U, V = _finite_pair(args)
        _require(len(U) == len(V), "--p and --q must have the same length")
        delta = tv_finite(U, V)
    g = rngmod.stream(args.seed, "couple")
    pairs = [maximal_coupling_sample(U, V, g) for _ in range(args.draws)]
    mismatch = sum(not p.matched for p in pairs) / args.draws
    se = (delta * (1 - delta) / args.draws) ** 0.5
    print(f"tv={delta:.6f} mismatch={mismatch:.6f} se={se:.6f} draws={args.draws}")
    if isinstance(U, FiniteDistribution):
        us = np.bincount([p.u for p in pairs], minlength=len(U)) / args.draws
        vs = np.bincount([p.v for p in pairs], minlength=len(V)) / args.draws
        marg = [[f"u[{i}]", float(f)] for i, f in enumerate(us)] + [[f"v[{i}]", float(f)] for i, f in enumerate(vs)]
    else:
        us = np.array([float(np.ravel(p.u)[0]) for p in pairs])
        vs = np.array([float(np.ravel(p.v)[0]) for p in pairs])
        marg = [["u_mean", us.mean()], ["u_var", us.var(ddof=1)], ["v_mean", vs.mean()], ["v_var", vs.var(ddof=1)]]
    write_csv(args.out, ["statistic", "value"], [["tv", delta], ["mismatch", mismatch], ["se", se]] + marg)
    return EXIT_OK


def _load_config(argv: list[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        data = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: cannot read {known.config}: {exc}")
    if not isinstance(data, dict):
        raise UsageError("--config must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.time()
    parser = build_parser()
    try:
        config = _load_config(argv)
        if config and argv and argv[0] in parser._subparsers._group_actions[0].choices:
            sub = parser._subparsers._group_actions[0].choices[argv[0]]
            unknown = set(config) - {a.dest for a in sub._actions}
            if unknown:
                raise UsageError(f"--config: unknown keys {sorted(unknown)}")
            for action in sub._actions:
                if action.dest in config:
                    action.required = False
            sub.set_defaults(**config)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.threads is not None:
            _require(args.threads >= 1, "--threads must be >= 1")
        rngmod.set_threads(args.threads)
        try:
            code = args.func(args)
        finally:
            rngmod.set_threads(None)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - map any failure to the runtime exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_manifest(args, started)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
