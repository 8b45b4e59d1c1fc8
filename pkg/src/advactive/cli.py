"""Command line entry point: ``advactive run`` and ``advactive plot``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .attacker import AttackConfig, CandidateSource
from .datasets import DatasetSpec, Task
from .errors import AdvActiveError
from .harness import DEFAULT_BUDGET, ExperimentConfig, read_curve, run_experiment, write_csv
from .plotting import render_plot
from .selection import Companion, StrategyConfig, StrategyKind
from .svm import SolverConfig


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advactive", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a multi-trial active-learning experiment")
    run.add_argument("--task", choices=[t.value for t in Task], default=Task.SYNTHETIC2D.value)
    run.add_argument("--strategy", choices=[k.value for k in StrategyKind], default="uncertainty")
    run.add_argument("--p", type=_probability, default=0.5, help="companion probability for --strategy mixed")
    run.add_argument("--mix-with", choices=[c.value for c in Companion], default="meu")
    run.add_argument("--attack", choices=["on", "off"], default="off")
    run.add_argument("--attack-source", choices=[s.value for s in CandidateSource], default="all_pool")
    run.add_argument("--trials", type=int, default=10)
    run.add_argument("--budget", type=int, default=None, help="queries per trial (default 50 synthetic, 100 MNIST)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--c", type=float, default=1.0, help="SVM regularization C")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--mnist-images")
    run.add_argument("--mnist-labels")

    plot = sub.add_parser("plot", help="render curves from one or more run directories")
    plot.add_argument("--in", dest="inputs", action="append", required=True, help="run directory (repeatable)")
    plot.add_argument("--out", required=True, help="SVG file to write")
    plot.add_argument("--title")
    return parser


def config_from_args(args) -> ExperimentConfig:
    task = Task(args.task)
    dataset = DatasetSpec.reference_synthetic(args.seed) if task is Task.SYNTHETIC2D else DatasetSpec.reference_mnist(args.seed)
    kind = StrategyKind(args.strategy)
    strategy = StrategyConfig(kind, args.p if kind is StrategyKind.MIXED else 0.0, Companion(args.mix_with))
    return ExperimentConfig(
        dataset=dataset,
        strategy=strategy,
        attack=AttackConfig(args.attack == "on", 1, CandidateSource(args.attack_source)),
        solver=SolverConfig(C=args.c),
        budget=DEFAULT_BUDGET[task] if args.budget is None else args.budget,
        trials=args.trials,
        master_seed=args.seed,
        output_dir=str(args.out),
        mnist_images=args.mnist_images,
        mnist_labels=args.mnist_labels,
    )


def _run(args) -> None:
    config = config_from_args(args)
    log = logging.getLogger("advactive")
    result = run_experiment(
        config, progress=lambda rec: log.info("trial %d done, final error %.4f", rec.trial_index, rec.errors[-1])
    )
    out = Path(args.out)
    write_csv(result, out)
    render_plot([(config.label, result.curve)], out / "curve.svg")
    print(f"{config.label}: final mean test error {result.curve.mean[-1]:.6f}; results in {out}")


def _plot(args) -> None:
    curves = [read_curve(d) for d in args.inputs]
    render_plot(curves, args.out, args.title)
    print(f"wrote {args.out}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args) if args.command == "run" else _plot(args)
    except (AdvActiveError, OSError, KeyError, ValueError) as exc:
        print(f"advactive: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
