#!/usr/bin/env python3
"""
Regularized MSVM command line

Sub-commands:
    gen      generate synthetic train/test CSVs and the relevance mask
    train    fit a model and write the model file
    predict  label samples with a saved model
    cv       pick (lambda1, lambda2) by stratified cross validation
    bench    repeat a synthetic or real-data experiment and write a TSV report
    config   print the configuration in use

Exit codes: 0 success, 1 a fit stopped at maxit or the solver failed,
2 usage, configuration or I/O error.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from config.config_manager import get_config_manager, reset_config_manager
from services.benchmark_runner import (
    Experiment,
    TrialError,
    create_bench_config_from_file,
    format_summary,
    run_benchmark,
)
from services.data_pipeline import SyntheticSpec, Variant, cv_grid_search, make_split
from services.dataset_io import (
    DataFormatError,
    load_csv,
    load_model,
    read_samples,
    save_mask,
    save_model,
    write_csv,
)
from services.run_logger import RunLogger, TraceWriter
from solvers.admm_solver import DivergenceError, default_hyperparams, fit
from solvers.core_model import Classifier, RegularizerKind, predict_batch, truncate
from solvers.linear_solver import FactorizationError

logger = logging.getLogger("msvm_cli")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_USAGE = 2

HP_FLAGS = ('lambda3', 'alpha', 'mu', 'nu', 'tol', 'maxit')

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")

def _label_column(text: str):
    if text.lower() == 'none':
        return None
    return int(text) if text.lstrip('-').isdigit() else text

def _add_solver_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("solver overrides")
    group.add_argument("--lambda3", type=float, help="intercept ridge weight (default 1)")
    group.add_argument("--alpha", type=float, help="penalty for the A split (default 50J/n)")
    group.add_argument("--mu", type=float, help="penalty for the U split (default sqrt(pJ))")
    group.add_argument("--nu", type=float, help="penalty for the V split (default sqrt(pJ))")
    group.add_argument("--tol", type=float, help="stopping tolerance (default 1e-5)")
    group.add_argument("--maxit", type=int, help="iteration limit (default 5000)")
    group.add_argument("--strategy", choices=["auto", "direct", "woodbury"],
                       help="linear system strategy")

def _overrides(args) -> dict:
    return {name: getattr(args, name) for name in HP_FLAGS if getattr(args, name) is not None}

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msvm", description="Regularized multiclass SVM via ADMM")
    parser.add_argument("--config", help="configuration YAML (default config/system_config.yaml)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic data")
    gen.add_argument("--variant", choices=[v.value for v in Variant], default="five-class")
    gen.add_argument("--n", type=int, help="training samples")
    gen.add_argument("--n-test", type=int, help="test samples (default: same as --n)")
    gen.add_argument("--p", type=int, help="dimension (four-class only)")
    gen.add_argument("--s", type=int, help="informative block size (four-class only)")
    gen.add_argument("--rho", type=float, help="block correlation (four-class only)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="out", help="output directory")

    train = sub.add_parser("train", help="fit a model")
    train.add_argument("data", help="training CSV")
    train.add_argument("--reg", choices=[k.value for k in RegularizerKind], default="elastic")
    train.add_argument("--lambda1", type=float, default=0.0)
    train.add_argument("--lambda2", type=float, default=None)
    train.add_argument("--label-column", type=_label_column, default=-1)
    train.add_argument("--trace", help="write per-iteration TSV here")
    train.add_argument("--truncate", action="store_true", help="zero small weights before saving")
    train.add_argument("--out", default="model.txt", help="model file")
    _add_solver_flags(train)

    pred = sub.add_parser("predict", help="label samples with a saved model")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--label-column", type=_label_column, default="auto",
                      help="label column, 'none' for unlabeled data (default: detected from the column count)")
    pred.add_argument("--out", help="write predicted labels here (default stdout)")

    cv = sub.add_parser("cv", help="cross-validated lambda selection")
    cv.add_argument("data", help="training CSV")
    cv.add_argument("--reg", choices=[k.value for k in RegularizerKind], default="elastic")
    cv.add_argument("--grid1", type=_float_list, help="lambda1 values (default grid)")
    cv.add_argument("--grid2", type=_float_list, help="lambda2 values")
    cv.add_argument("--folds", type=int)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--label-column", type=_label_column, default=-1)
    _add_solver_flags(cv)

    bench = sub.add_parser("bench", help="repeat a synthetic or real-data experiment")
    bench.add_argument("--experiment", choices=[e.value for e in Experiment], default="example1")
    bench.add_argument("--trials", type=int)
    bench.add_argument("--n", dest="n_train", type=int, help="training samples per trial")
    bench.add_argument("--n-test", type=int)
    bench.add_argument("--p", type=int)
    bench.add_argument("--s", type=int)
    bench.add_argument("--rho", type=float)
    bench.add_argument("--reg", action="append", choices=[k.value for k in RegularizerKind],
                       help="model to run (repeatable, default all configured)")
    bench.add_argument("--lambda1", type=float, help="fixed lambda1 for every model")
    bench.add_argument("--lambda2", type=float, help="fixed lambda2 for every model")
    bench.add_argument("--tune", action=argparse.BooleanOptionalAction, default=None,
                       help="tune lambdas first (hold-out for synthetic data, k-fold CV for real data)")
    bench.add_argument("--seed", dest="base_seed", type=int, help="base seed; trial i uses seed+i")
    bench.add_argument("--omit-time", action="store_true", help="write 0 in the time column")
    bench.add_argument("--workers", type=int, default=1, help="threads for trials and tuning candidates")
    bench.add_argument("--out", default="bench.tsv")
    real = bench.add_argument_group("real data")
    real.add_argument("--train", dest="train_path", type=Path, help="training CSV")
    real.add_argument("--test", dest="test_path", type=Path, help="test CSV")
    real.add_argument("--top-k", type=int, help="keep the k genes ranked highest on the training file")
    real.add_argument("--label-column", type=_label_column)
    real.add_argument("--folds", type=int, help="cross-validation folds for tuning")
    _add_solver_flags(bench)

    sub.add_parser("config", help="print the configuration in use")

    return parser

def cmd_gen(args) -> int:
    config = get_config_manager().generators
    if args.variant == Variant.FIVE_CLASS.value:
        n = args.n or config.five_class.n
        n_test = args.n_test or n
        spec = SyntheticSpec(Variant.FIVE_CLASS, n=n, seed=args.seed)
    else:
        defaults = config.four_class
        n = args.n or defaults.n
        n_test = args.n_test or n
        spec = SyntheticSpec(Variant.FOUR_CLASS, n=n,
                             p=args.p if args.p is not None else defaults.p,
                             s=args.s if args.s is not None else defaults.s,
                             rho=args.rho if args.rho is not None else defaults.rho,
                             seed=args.seed)

    split = make_split(spec, n_test)
    out = Path(args.out)
    write_csv(out / "train.csv", split.train)
    write_csv(out / "test.csv", split.test)
    save_mask(out / "mask.csv", split.relevance_mask)

    print(f"Generated {spec.variant.value}: n={split.train.n}, n_test={split.test.n}, "
          f"p={split.train.p}, J={split.train.J}, seed={spec.seed}")
    print(f"Files: {out / 'train.csv'}, {out / 'test.csv'}, {out / 'mask.csv'}")
    return EXIT_OK

def cmd_train(args) -> int:
    config = get_config_manager()
    data = load_csv(args.data, args.label_column)
    kind = RegularizerKind.from_name(args.reg)
    lambda2 = args.lambda2
    if lambda2 is None:
        lambda2 = config.grid.elastic_lambda2 if kind is RegularizerKind.ELASTIC_NET else 0.0

    hp = default_hyperparams(data.n, data.p, data.J, args.lambda1, lambda2, config.solver)
    for name, value in _overrides(args).items():
        setattr(hp, name, value)

    trace = TraceWriter(args.trace) if args.trace else None
    try:
        report = fit(data, hp, kind, progress_callback=trace, strategy=args.strategy)
    finally:
        if trace:
            trace.close()

    clf = report.classifier
    if args.truncate:
        W = truncate(clf.W, config.metrics.truncate_rel_tol, config.metrics.train_zero_tol)
        clf = Classifier(W, clf.b)
    save_model(args.out, clf)

    r_a, r_u, r_v = report.residuals
    print(f"model: {kind.value}  lambda1={hp.lambda1:g}  lambda2={hp.lambda2:g}")
    print(f"converged: {report.converged}  iterations: {report.iterations}  "
          f"solver: {report.strategy}")
    print(f"objective: {report.objective:.8g}  split objective: {report.split_objective:.8g}")
    print(f"residuals: r_A={r_a:.3e}  r_U={r_u:.3e}  r_V={r_v:.3e}  "
          f"rel_obj_change={report.rel_obj_change:.3e}")
    print(f"time: {report.wall_time:.3f}s")
    print(f"Model written: {args.out}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED

def cmd_predict(args) -> int:
    clf = load_model(args.model)
    label_column = args.label_column
    if label_column == "auto":
        # one extra column means a trailing label column
        features, _, _ = read_samples(args.data, label_column=None)
        label_column = -1 if features.shape[0] == clf.p + 1 else None

    if label_column is None:
        features, labels, _ = read_samples(args.data, label_column=None)
    else:
        features, labels, _ = read_samples(args.data, label_column=label_column,
                                           num_classes=max(clf.J, 2))
    if features.shape[0] != clf.p:
        raise ValueError(f"data has p={features.shape[0]}, model expects p={clf.p}")

    predicted = predict_batch(clf, features)
    text = "\n".join(str(int(v)) for v in predicted) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"Predictions written: {args.out}")
    else:
        sys.stdout.write(text)

    if labels is not None:
        print(f"accuracy: {float(np.mean(predicted == labels)):.6f}")
    return EXIT_OK

def cmd_cv(args) -> int:
    config = get_config_manager()
    data = load_csv(args.data, args.label_column)
    kind = RegularizerKind.from_name(args.reg)

    settings = config.solver
    if args.strategy:
        settings = dataclasses.replace(settings, strategy=args.strategy)

    result = cv_grid_search(data, kind, args.grid1, args.grid2, args.folds, args.seed,
                            settings, _overrides(args))

    folds = len(result.scores[0].fold_accuracies)
    print("lambda1\tlambda2\t" + "\t".join(f"fold{f + 1}" for f in range(folds)) + "\tmean")
    for score in result.scores:
        cells = "\t".join(f"{a:.4f}" for a in score.fold_accuracies)
        print(f"{score.lambda1:g}\t{score.lambda2:g}\t{cells}\t{score.mean_accuracy:.4f}")
    print(f"selected: lambda1={result.lambda1:g} lambda2={result.lambda2:g}")
    return EXIT_OK

def cmd_bench(args) -> int:
    config = get_config_manager()
    kinds = [RegularizerKind.from_name(k) for k in args.reg] if args.reg else None
    bench = create_bench_config_from_file(
        args.experiment,
        trials=args.trials,
        n_train=args.n_train,
        n_test=args.n_test,
        p=args.p,
        s=args.s,
        rho=args.rho,
        kinds=kinds,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        base_seed=args.base_seed,
        tune=args.tune,
        include_time=False if args.omit_time else None,
        workers=args.workers,
        hp_overrides=_overrides(args),
        strategy=args.strategy,
        output=Path(args.out),
        train_path=args.train_path,
        test_path=args.test_path,
        top_k=args.top_k,
        label_column=args.label_column,
        folds=args.folds
    )

    run_logger = RunLogger(config.logging.directory, config.logging.save_detailed_runs)
    try:
        report = run_benchmark(bench, run_logger)
    finally:
        run_logger.close()

    print(format_summary(report, bench.columns))
    print(f"Report written: {bench.output}")
    return EXIT_OK if report.all_converged else EXIT_NOT_CONVERGED

def cmd_config(args) -> int:
    config = get_config_manager()
    config.print_config_summary()
    for warning in config.validate_config()['warnings']:
        print(f"warning: {warning}")
    return EXIT_OK

COMMANDS = {
    'gen': cmd_gen,
    'train': cmd_train,
    'predict': cmd_predict,
    'cv': cmd_cv,
    'bench': cmd_bench,
    'config': cmd_config
}

def _setup_logging(config, level_name: Optional[str]):
    level = getattr(logging, (level_name or config.logging.level).upper(), logging.INFO)
    handlers = None if config.logging.console_output else [logging.NullHandler()]
    logging.basicConfig(level=level, handlers=handlers,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.config:
        reset_config_manager()
    config = get_config_manager(args.config)
    _setup_logging(config, args.log_level)

    issues = config.validate_config()
    for warning in issues['warnings']:
        logger.warning(warning)
    if issues['errors']:
        for error in issues['errors']:
            print(f"config error: {error}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except (DivergenceError, FactorizationError, TrialError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (OSError, DataFormatError, ValueError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
