"""Command-line entry point: ``tbma {exponents,pe,train,figure} ...``.

Exit codes: 0 on success, 1 on configuration or usage errors, 2 on runtime
errors.
"""

from __future__ import annotations

import argparse
import contextlib
import sys
from pathlib import Path

from .config import ConfigError, default_config, load_config
from .detect import Detector
from .experiments import (DEFAULT_TRIALS, EXPONENTS, FIGURES, ExperimentRecord, emit_csv,
                          estimate_pe, figure_plans, run_sweep)
from .exponents import exponent_report
from .learning import DEFAULT_EPOCHS, Target, fit_learned, evaluate_pe, save_model, write_dataset

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, trials_default: int = DEFAULT_TRIALS) -> None:
    p.add_argument("--config", type=Path, help="key = value config file (defaults if omitted)")
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--out", type=Path, help="output file (stdout if omitted)")
    p.add_argument("--trials", type=int, default=trials_default, help="Monte Carlo trials")
    p.add_argument("--workers", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tbma", description="TBMA two-cell fog-RAN simulation and analysis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exponents", help="edge and cloud error exponents")
    _common(p)

    p = sub.add_parser("pe", help="Monte Carlo joint error probability")
    _common(p)
    p.add_argument("--detector", default=Detector.EDGE_OPTIMAL.value,
                   choices=[d.value for d in Detector])
    p.add_argument("--train-size", type=int, default=10_000, help="training samples (learned detectors)")
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)

    p = sub.add_parser("train", help="train a learned detector and save the model")
    _common(p, trials_default=10_000)
    p.add_argument("--target", default=Target.CLOUD.value, choices=[t.value for t in Target])
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--dataset-out", type=Path, help="also write the training set as CSV")

    p = sub.add_parser("figure", help="run the sweep behind a figure and emit CSV")
    p.add_argument("name", choices=FIGURES)
    _common(p)
    p.add_argument("--train-size", type=int, default=10_000, help="training samples (fig7)")
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS, help="training epochs (fig7, fig8)")
    return parser


@contextlib.contextmanager
def _output(path: Path | None):
    if path is None:
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    with fh:
        yield fh


def _config(args):
    if args.config is None:
        return default_config()
    try:
        return load_config(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc


def _check_counts(args) -> None:
    if args.trials <= 0:
        raise UsageError("--trials must be positive")
    if args.workers <= 0:
        raise UsageError("--workers must be positive")


def cmd_exponents(args) -> None:
    cfg = _config(args)
    rep = exponent_report(cfg)
    rec = ExperimentRecord("exponents", "", "", EXPONENTS, e_edge=rep.e_edge, e_cloud=rep.e_cloud,
                           sigma2_q1=rep.spec.sigma2_q1, sigma2_q2=rep.spec.sigma2_q2, seed=args.seed)
    with _output(args.out) as fh:
        emit_csv([rec], fh)


def cmd_pe(args) -> None:
    cfg = _config(args)
    kind = Detector(args.detector)
    if kind in (Detector.EDGE_OPTIMAL, Detector.CLOUD_OPTIMAL):
        rec = estimate_pe(cfg, kind, args.trials, args.seed, workers=args.workers)
    else:
        det = fit_learned(cfg, kind, args.train_size, args.seed, epochs=args.epochs)
        pe, lo, hi = evaluate_pe(det, cfg, args.trials, args.seed, args.workers)
        spec = det.spec
        rec = ExperimentRecord("pe", "train_size", args.train_size, kind.value, pe, lo, hi, args.trials,
                               sigma2_q1=spec.sigma2_q1 if spec else None,
                               sigma2_q2=spec.sigma2_q2 if spec else None, seed=args.seed)
    with _output(args.out) as fh:
        emit_csv([rec], fh)


def cmd_train(args) -> None:
    import numpy as np

    from .fronthaul import solve_quantization_variance
    from .learning import MlpModel, generate_dataset, train

    if args.out is None:
        raise UsageError("train needs --out for the model file")
    cfg = _config(args)
    target = Target(args.target)
    spec = solve_quantization_variance(cfg) if target is Target.CLOUD else None
    rng = np.random.default_rng(args.seed)
    ds = generate_dataset(cfg, args.trials, target, spec, rng, args.seed)
    model = MlpModel.for_target(ds.n_features, target, rng)
    model, losses = train(model, ds, args.epochs)
    if args.dataset_out:
        write_dataset(ds, args.dataset_out)
    save_model(model, args.out)
    print(f"trained {target.value} on {len(ds)} samples: loss {losses[0]:.6g} -> {losses[-1]:.6g}",
          file=sys.stderr)


def cmd_figure(args) -> None:
    base = _config(args)
    plans = figure_plans(args.name, base, trials=args.trials, seed=args.seed,
                         training_size=args.train_size, epochs=args.epochs)
    records = (r for plan in plans for r in run_sweep(plan, args.workers))
    with _output(args.out) as fh:
        emit_csv(records, fh)


COMMANDS = {"exponents": cmd_exponents, "pe": cmd_pe, "train": cmd_train, "figure": cmd_figure}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_counts(args)
        COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"tbma: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 2
        print(f"tbma: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
