"""Command-line entry point: ``ncmsg <command> ...``.

Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
failure (optimizer stall, degenerate data), with the failing stage named.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from . import datagen as dg
from . import divergence as dv
from . import ml
from . import model as md
from . import optim as op
from .errors import (ConvergenceError, DatasetError, DegenerateDataError, DimensionError,
                     InvalidPointError, StallError, StepTooLargeError)
from .manifold import ParameterPoint

logger = logging.getLogger("ncmsg")

DEFAULT_BETA_GRID = [10.0 ** e for e in range(-13, -2)]
NUMERICAL_ERRORS = (StallError, DegenerateDataError, ConvergenceError, StepTooLargeError)


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def workers_from_env():
    """Worker count from ``NCMSG_THREADS`` (default: every core)."""
    value = os.environ.get("NCMSG_THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        count = int(value)
    except ValueError as exc:
        raise UsageError(f"NCMSG_THREADS must be an integer, got {value!r}") from exc
    if count < 1:
        raise UsageError("NCMSG_THREADS must be at least 1")
    return count


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(name, exc) from exc


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, rows, config):
    """CSV with a leading ``# config: {...}`` comment; stdout when ``path`` is None."""
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _opt_config(args):
    return op.OptimizerConfig(max_iterations=args.max_iter, grad_norm_tolerance=args.tol)


def _add_opt_flags(p, max_iter=1000):
    p.add_argument("--tol", type=float, default=1e-6, help="gradient-norm tolerance")
    p.add_argument("--max-iter", type=int, default=max_iter)


def _load_points(path):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    entries = payload if isinstance(payload, list) else payload.get("points", [payload])
    try:
        return [ParameterPoint.from_dict(e.get("theta", e)) for e in entries]
    except (KeyError, AttributeError, TypeError) as exc:
        raise UsageError(f"{path}: not a parameter file ({exc})") from exc


# --- commands -----------------------------------------------------------------

def cmd_simulate(args):
    if args.classes >= 1:
        thetas = dg.class_parameters(args.p, args.n, args.classes, args.nu, args.seed)
        batches = dg.labeled_batches(thetas, args.batches, args.seed + 10_000)
    else:
        thetas = [dg.sample_parameters(dg.SyntheticConfig(args.p, args.n, args.nu, args.seed))]
        rng = np.random.default_rng(args.seed + 10_000)
        batches = [dg.sample_batch(thetas[0], rng) for _ in range(args.batches)]
    out = Path(args.out)
    dg.save_dataset(out, batches)
    with open(out / "parameters.json", "w", encoding="utf-8") as fh:
        json.dump([t.to_dict() for t in thetas], fh)
    print(f"wrote {len(batches)} batches to {out}")


def cmd_fit(args):
    batches = dg.load_dataset(args.data)
    reg = md.RegularizationSpec(args.kappa, args.beta)
    config = _opt_config(args)
    points, rows = [], []
    for i, b in enumerate(batches):
        theta, report = _stage(f"fit batch {i}", _fit_one, b, reg, config)
        points.append({"batch": i, "label": b.label, "converged": report.converged,
                       "theta": theta.to_dict()})
        rows.extend([i] + list(r) for r in report.rows())
    Path(args.out).write_text(json.dumps({"points": points}), encoding="utf-8")
    write_table(Path(args.out).with_suffix(".report.csv"),
                ["batch", "iteration", "cost", "grad_norm", "step"], rows, _config(args))
    print(f"fitted {len(points)} batches; "
          f"{sum(p['converged'] for p in points)} reached the tolerance")


def _fit_one(batch, reg, config):
    from .estimators import fit_ncmsg

    return fit_ncmsg(batch, reg, config)


def cmd_kl(args):
    a, b = _load_points(args.a)[0], _load_points(args.b)[0]
    value = dv.sym_kl(a, b) if args.symmetric else dv.kl(a, b)
    print(repr(value))


def cmd_barycenter(args):
    points = [q for path in args.inputs for q in _load_points(path)]
    if not points:
        raise UsageError("no input points")
    center, report = _stage("barycenter", dv.barycenter, points, _opt_config(args))
    Path(args.out).write_text(json.dumps(center.to_dict()), encoding="utf-8")
    print(f"barycenter of {len(points)} points: {report.iterations} iterations, "
          f"grad norm {report.grad_norm_trace[-1]:.3e}")


def _parse_spec(text):
    parts = [s.strip() for s in text.split(",")]
    if len(parts) < 2 or len(parts) > 4:
        raise UsageError("--spec expects descriptor,divergence[,beta[,kappa]]")
    try:
        beta = float(parts[2]) if len(parts) > 2 else 0.0
        kappa = float(parts[3]) if len(parts) > 3 else 1.0
        return ml.ClassifierSpec(parts[0], parts[1], md.RegularizationSpec(kappa, beta))
    except ValueError as exc:
        raise UsageError(f"--spec: {exc}") from exc


def cmd_classify_train(args):
    spec = _parse_spec(args.spec)
    batches = dg.load_dataset(args.data)
    model = _stage("train", ml.train, batches, spec, _opt_config(args),
                   workers=workers_from_env())
    Path(args.out).write_text(model.to_json(), encoding="utf-8")
    print(f"trained {spec.name} on {len(batches)} batches, {model.k} classes")


def _load_model(path):
    try:
        return ml.CentroidModel.from_json(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"no such model file: {path}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"{path}: malformed model ({exc})") from exc


def cmd_classify_predict(args):
    model = _load_model(args.model)
    batches = dg.load_dataset(args.data)
    labels = _stage("predict", ml.predict, model, batches, _opt_config(args),
                    workers_from_env())
    write_table(args.out, ["batch", "predicted"], list(enumerate(labels)), _config(args))


def cmd_classify_eval(args):
    model = _load_model(args.model)
    batches = dg.load_dataset(args.data)
    if any(b.label is None for b in batches):
        raise UsageError("evaluation needs labeled batches")
    labels = _stage("predict", ml.predict, model, batches, _opt_config(args),
                    workers_from_env())
    print(repr(ml.f1_weighted([b.label for b in batches], labels)))


def cmd_classify_tune(args):
    if not 0 < args.val_fraction < 1:
        raise UsageError("--val-fraction must lie in (0, 1)")
    batches = dg.load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(batches))
    n_val = max(1, int(round(args.val_fraction * len(batches))))
    val = [batches[i] for i in order[:n_val]]
    fit = [batches[i] for i in order[n_val:]]
    rows = []
    for beta in args.betas:
        spec = ml.ClassifierSpec(ml.Descriptor.NCMSG_THETA, ml.Divergence.NCMSG_SYM_KL,
                                 md.RegularizationSpec(args.kappa, beta))
        model = _stage(f"tune beta={beta:g} train", ml.train, fit, spec, _opt_config(args),
                       workers=workers_from_env())
        pred = _stage(f"tune beta={beta:g} predict", ml.predict, model, val,
                      _opt_config(args), workers_from_env())
        rows.append([beta, ml.f1_weighted([b.label for b in val], pred)])
    best = max(rows, key=lambda r: r[1])
    write_table(args.out, ["beta", "f1_weighted"], rows, _config(args))
    print(f"# best beta {best[0]!r} (F1 {best[1]:.4f})", file=sys.stderr)


def cmd_bench_convergence(args):
    config = _opt_config(args)
    rows = []
    seeds = range(args.seed, args.seed + args.seeds)
    for seed in seeds:
        if args.problem == "nll":
            for beta in args.beta:
                problem = bench.nll_problem(args.p, args.n, args.nu, beta, seed)
                run = bench.convergence_run(problem, args.optimizer, config)
                rows += bench.trace_rows(run, label=f"beta={beta!r}",
                                         optimizer=args.optimizer, seed=seed)
        else:
            for m in args.m:
                problem = bench.barycenter_problem(m, args.p, args.n, args.nu, seed)
                run = bench.convergence_run(problem, args.optimizer, config)
                rows += bench.trace_rows(run, label=f"M={m}", optimizer=args.optimizer,
                                         seed=seed)
    write_table(args.out, ["problem", "optimizer", "seed", "iteration", "cost", "grad_norm",
                           "step", "status"], rows, _config(args))
    if args.plot:
        from .plots import plot_convergence

        plot_convergence(rows, args.plot)


def cmd_bench_mse(args):
    config = op.OptimizerConfig(max_iterations=args.max_iter, grad_norm_tolerance=args.tol)
    rows = bench.mse_benchmark(args.p, args.n_grid, args.trials, args.nu, args.seed, config,
                               workers_from_env())
    write_table(args.out, ["method", "n", "mse_mu", "mse_sigma", "failures"], rows,
                _config(args))
    if args.plot:
        from .plots import plot_mse

        plot_mse(rows, args.plot)


def cmd_bench_robustness(args):
    thetas = dg.class_parameters(args.p, args.n, args.classes, args.nu, args.seed)
    train = dg.labeled_batches(thetas, args.batches, args.seed + 10_000)
    test = dg.labeled_batches(thetas, args.batches, args.seed + 20_000)
    xf = dg.RigidTransform.random(args.p, np.random.default_rng(args.seed + 30_000),
                                  args.angle, args.offset)
    specs = ml.six_classifiers(md.RegularizationSpec(args.kappa, args.beta))
    rows = _stage("robustness", bench.robustness_benchmark, train, test, specs, xf, args.mode,
                  args.t_grid, _opt_config(args), workers_from_env())
    write_table(args.out, ["classifier", "mode", "t", "f1_weighted"], rows, _config(args))
    if args.plot:
        from .plots import plot_robustness

        plot_robustness(rows, args.plot)


# --- parser -------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="ncmsg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--batches", type=int, default=1, help="batches per class")
    p.add_argument("--classes", type=int, default=0, help="0 for a single unlabeled source")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="regularized MLE of every batch")
    p.add_argument("--data", required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--kappa", type=float, default=1.0)
    _add_opt_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kl", help="divergence between two parameter files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--symmetric", action="store_true")
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("barycenter", help="symmetrized-KL center of mass")
    p.add_argument("--inputs", nargs="+", required=True)
    _add_opt_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_barycenter)

    p = sub.add_parser("classify", help="nearest-centroid classification")
    csub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    spec_help = "descriptor,divergence[,beta[,kappa]]"
    c = csub.add_parser("train")
    c.add_argument("--data", required=True)
    c.add_argument("--spec", required=True, help=spec_help)
    _add_opt_flags(c, 500)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_classify_train)
    for name, func in (("predict", cmd_classify_predict), ("eval", cmd_classify_eval)):
        c = csub.add_parser(name)
        c.add_argument("--model", required=True)
        c.add_argument("--data", required=True)
        _add_opt_flags(c, 500)
        if name == "predict":
            c.add_argument("--out")
        c.set_defaults(func=func)
    c = csub.add_parser("tune", help="choose beta on a train/validation split")
    c.add_argument("--data", required=True)
    c.add_argument("--betas", type=_floats, default=DEFAULT_BETA_GRID)
    c.add_argument("--kappa", type=float, default=1.0)
    c.add_argument("--val-fraction", type=float, default=0.2)
    c.add_argument("--seed", type=int, default=0)
    _add_opt_flags(c, 500)
    c.add_argument("--out")
    c.set_defaults(func=cmd_classify_tune)

    p = sub.add_parser("bench", help="benchmark harnesses")
    bsub = p.add_subparsers(dest="harness", required=True, parser_class=_Parser)
    b = bsub.add_parser("convergence", help="per-iteration cost and gradient norm")
    b.add_argument("--problem", choices=["nll", "barycenter"], default="nll")
    b.add_argument("--beta", type=_floats, default=[0.0, 1e-5, 1e-3])
    b.add_argument("--m", type=_ints, default=[2, 10], help="barycenter sizes")
    b.add_argument("--optimizer", choices=sorted(bench.OPTIMIZERS), default="fim")
    b.add_argument("--p", type=int, default=10)
    b.add_argument("--n", type=int, default=150)
    b.add_argument("--nu", type=float, default=1.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    _add_opt_flags(b)
    b.add_argument("--out")
    b.add_argument("--plot", help="also render a PNG to this path")
    b.set_defaults(func=cmd_bench_convergence)

    b = bsub.add_parser("mse", help="estimation error versus n")
    b.add_argument("--n-grid", type=_ints, default=[20, 100, 1000])
    b.add_argument("--trials", type=int, default=200)
    b.add_argument("--nu", type=float, default=0.1)
    b.add_argument("--p", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    _add_opt_flags(b)
    b.add_argument("--out")
    b.add_argument("--plot")
    b.set_defaults(func=cmd_bench_mse)

    b = bsub.add_parser("robustness", help="F1 under rigid transforms of the test set")
    b.add_argument("--mode", choices=[m.value for m in dg.TransformMode], default="both")
    b.add_argument("--t-grid", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    b.add_argument("--p", type=int, default=5)
    b.add_argument("--n", type=int, default=40)
    b.add_argument("--classes", type=int, default=3)
    b.add_argument("--batches", type=int, default=100, help="train and test batches per class")
    b.add_argument("--nu", type=float, default=1.0)
    b.add_argument("--beta", type=float, default=0.1)
    b.add_argument("--kappa", type=float, default=1.0)
    b.add_argument("--angle", type=float, default=np.pi, help="rotation angle at t=1")
    b.add_argument("--offset", type=float, default=3.0, help="mean shift norm at t=1")
    b.add_argument("--seed", type=int, default=0)
    _add_opt_flags(b, 500)
    b.add_argument("--out")
    b.add_argument("--plot")
    b.set_defaults(func=cmd_bench_robustness)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericalFailure as exc:
        print(f"ncmsg: numerical failure in {exc}", file=sys.stderr)
        return 2
    except (UsageError, DatasetError, DimensionError, InvalidPointError, ValueError,
            OSError) as exc:
        print(f"ncmsg: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
