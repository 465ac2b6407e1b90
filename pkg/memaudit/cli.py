"""The `memaudit` command.

Usage examples::

    memaudit validate-t1 --trials 10000
    memaudit validate-t2 --pi0 0.5 --trials 1000
    memaudit gen-synthetic --pi0 0.5 --output scores.csv
    memaudit --alpha 0.1 wrap --input scores.csv
    memaudit metrics --input scores.csv
    memaudit --config attack.cfg attack --repetitions 50
    memaudit ablation calibration-size --sizes 10,100,1000

Every subcommand writes its machine-readable output to `--output-dir` and a short summary to the standard
output. Exit codes: 0 on success, 1 for command-line usage errors, 2 when a score file cannot be read or parsed,
3 for configuration errors and contract violations.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from memaudit.attack import MembershipAttack, check_blackbox_surrogate
from memaudit.config import SCORE_FUNCTIONS, AttackConfig, TaskConfig, optional_config
from memaudit.conformal import batch_pvalues, build_calibration
from memaudit.exceptions import ContractViolation, InvalidConfig, MemauditError, ScoreFileError
from memaudit.experiments import (
    FDR_ALPHAS,
    VALIDITY_ALPHAS,
    attack_experiment,
    calibration_size_experiment,
    fdr_control_experiment,
    member_ratio_experiment,
    pvalue_validity_experiment,
)
from memaudit.fdr import truth_from_labels
from memaudit.files import FORMATS, export_report, import_scores, read_samples_csv, write_scores
from memaudit.metrics import compute_metrics, write_roc_csv
from memaudit.synthetic import SyntheticSpec, generate_synthetic, simulate_victim
from memaudit.version import __version__
from memaudit.wrapper import wrap_external

logger = logging.getLogger(__name__)

#: Environment variable overriding the default seed.
SEED_ENV_VAR = "MEMAUDIT_SEED"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE_ERROR = 2
EXIT_CONFIG_ERROR = 3


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    # Usage errors exit with 1 (argparse uses 2, which is reserved for score file errors)
    def error(self, message: str) -> None:  # type: ignore
        self.print_usage(sys.stderr)
        raise UsageError("{prog}: error: {m}".format(prog=self.prog, m=message))


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("a comma-separated list of numbers is expected")


def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("a comma-separated list of integers is expected")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="memaudit", description="Membership inference audits with false discovery rate control."
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    parser.add_argument(
        "--seed", type=int, default=None, help="master seed (default: ${v}, or 0)".format(v=SEED_ENV_VAR)
    )
    parser.add_argument("--alpha", type=float, default=None, help="FDR / significance level")
    parser.add_argument("--config", default=None, help="INI configuration file")
    parser.add_argument("--output-dir", default=".", help="where output files are written (default: .)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")

    subparsers = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)

    attack = subparsers.add_parser("attack", help="run the attack against a simulated victim")
    attack.add_argument("--repetitions", type=int, default=1)
    attack.add_argument("--blackbox", action="store_true", help="hide the victim architecture")
    attack.add_argument("--score-function", choices=SCORE_FUNCTIONS, default=None)

    wrap = subparsers.add_parser("wrap", help="FDR-controlled decisions on external scores")
    wrap.add_argument("--input", required=True, help="score file")
    wrap.add_argument("--format", choices=FORMATS, default=None)
    wrap.add_argument("--report", default="report.json", help="report file name (default: report.json)")

    t1 = subparsers.add_parser("validate-t1", help="p-value validity experiment")
    t1.add_argument("--trials", type=int, default=10000)
    t1.add_argument("--calibration", type=int, default=1000)
    t1.add_argument("--test", type=int, default=1)
    t1.add_argument("--alphas", type=_float_list, default=list(VALIDITY_ALPHAS))

    t2 = subparsers.add_parser("validate-t2", help="FDR control experiment")
    t2.add_argument("--trials", type=int, default=1000)
    t2.add_argument("--pi0", type=float, default=0.5)
    t2.add_argument("--shift", type=float, default=2.0, help="member score shift")
    t2.add_argument("--calibration", type=int, default=1000)
    t2.add_argument("--test", type=int, default=1000)
    t2.add_argument("--alphas", type=_float_list, default=list(FDR_ALPHAS))

    metrics = subparsers.add_parser("metrics", help="accuracy, AUROC and ROC of scores or p-values")
    source = metrics.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", help="score file (test records need a truth label)")
    source.add_argument("--samples", help="per-sample CSV written by 'wrap' or 'attack'")
    metrics.add_argument("--format", choices=FORMATS, default=None)
    metrics.add_argument("--threshold", type=float, default=None)

    gen = subparsers.add_parser("gen-synthetic", help="write a synthetic score file")
    gen.add_argument("--calibration", type=int, default=1000)
    gen.add_argument("--test", type=int, default=1000)
    gen.add_argument("--pi0", type=float, default=0.5)
    gen.add_argument("--shift", type=float, default=2.0)
    gen.add_argument("--format", choices=FORMATS, default="csv")
    gen.add_argument("--output", default=None, help="file name (default: synthetic_scores.<format>)")

    ablation = subparsers.add_parser("ablation", help="calibration size and member ratio ablations")
    ablation.add_argument("kind", choices=("calibration-size", "member-ratio"))
    ablation.add_argument("--trials", type=int, default=200)
    ablation.add_argument("--sizes", type=_int_list, default=[10, 50, 100, 500, 1000])
    ablation.add_argument("--pi0s", type=_float_list, default=[0.1, 0.25, 0.5, 0.75, 0.9])
    ablation.add_argument("--shift", type=float, default=2.0)
    ablation.add_argument("--test", type=int, default=1000)
    ablation.add_argument("--calibration", type=int, default=1000)
    ablation.add_argument("--pi0", type=float, default=0.5)

    return parser


def resolve_seed(cli_seed: Optional[int]) -> Optional[int]:
    """`--seed` if given, else the environment variable, else `None`.

    :raises: :class:`memaudit.exceptions.InvalidConfig` if the environment variable is not an integer.
    """
    if cli_seed is not None:
        return cli_seed
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise InvalidConfig("{v} must be an integer, got {r!r}".format(v=SEED_ENV_VAR, r=raw))


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the `memaudit` command and return its exit code."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)

    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    _configure_logging(args.verbose)

    try:
        os.makedirs(args.output_dir, exist_ok=True)
        logger.info("memaudit %s: %s", __version__, args.command)
        return COMMANDS[args.command](args)
    except ContractViolation as exc:
        print("Contract violation: {e}".format(e=exc), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ScoreFileError as exc:
        print("Cannot read the score file: {e}".format(e=exc), file=sys.stderr)
        return EXIT_PARSE_ERROR
    except MemauditError as exc:
        print("Error: {e}".format(e=exc), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as exc:
        print("I/O error: {e}".format(e=exc), file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli_main())


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def _output(args: argparse.Namespace, name: str) -> str:
    return os.path.join(args.output_dir, name)


def _write_json(path: str, content: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(content, f, indent=2, sort_keys=True)
        f.write("\n")


def _alphas(args: argparse.Namespace) -> List[float]:
    return [args.alpha] if args.alpha is not None else list(args.alphas)


def _seed(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    return 0 if seed is None else seed


def run_validate_t1(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        n_calibration=args.calibration,
        n_test=args.test,
        pi0=1.0,
        member_shift=0.0,
        n_trials=args.trials,
        seed=_seed(args),
    )
    curve = pvalue_validity_experiment(spec, _alphas(args))
    path = _output(args, "validity_curve.csv")
    curve.to_csv(path)
    _print_curve(curve, curve.holds())
    print("Curve written to {p}".format(p=path))
    return EXIT_OK


def run_validate_t2(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        n_calibration=args.calibration,
        n_test=args.test,
        pi0=args.pi0,
        member_shift=args.shift,
        n_trials=args.trials,
        seed=_seed(args),
    )
    curve = fdr_control_experiment(spec, _alphas(args))
    path = _output(args, "fdr_curve.csv")
    curve.to_csv(path)
    _print_curve(curve, curve.holds())
    print("Curve written to {p}".format(p=path))
    return EXIT_OK


def _print_curve(curve: Any, holds: np.ndarray) -> None:
    for line, ok in zip(curve.summary_lines(), holds):
        print("{line} {status}".format(line=line, status="OK" if ok else "ABOVE BOUND (3 SE)"))


def run_wrap(args: argparse.Namespace) -> int:
    alpha = args.alpha if args.alpha is not None else AttackConfig().alpha
    result = wrap_external(import_scores(args.input, args.format), alpha)
    report_path, samples = result.export(_output(args, args.report))

    print(
        "{r} of {n} test samples declared members at alpha={a}".format(
            r=result.decisions.n_rejected, n=len(result), a=alpha
        )
    )
    if result.report is not None:
        print(
            "Realized FDR {fdr:.4f} (guaranteed in expectation: {b:.4f})".format(
                fdr=result.report.fdr, b=result.report.bound
            )
        )
    print("Report written to {r} and {s}".format(r=report_path, s=samples))
    return EXIT_OK


def run_metrics(args: argparse.Namespace) -> int:
    if args.samples is not None:
        rows = read_samples_csv(args.samples)
        truth = truth_from_labels([r.truth for r in rows])
        values = np.array([r.p_value for r in rows])
        kind = "p-values"
    else:
        score_file = import_scores(args.input, args.format)
        truth = truth_from_labels([r.truth for r in score_file.test_records])
        values = score_file.test_scores()
        kind = "scores"
        if score_file.calibration_records:
            values = batch_pvalues(build_calibration(score_file.calibration_scores()), values)
            kind = "p-values"
    if truth is None:
        raise InvalidConfig("Metrics need a truth label for every test sample")

    report = compute_metrics(values, truth, args.threshold)
    write_roc_csv(report.roc, _output(args, "roc.csv"))
    _write_json(_output(args, "metrics.json"), dict(report.to_dict(), computed_on=kind))

    print("Metrics computed on {k} of {n} samples".format(k=kind, n=values.size))
    print(
        "AUROC {a:.4f}, accuracy {acc:.4f} (threshold {t:.6g})".format(
            a=report.auroc, acc=report.accuracy, t=report.threshold
        )
    )
    for fpr, tpr in sorted(report.tpr_at_fpr.items()):
        print("TPR at FPR {f:g}: {t:.4f}".format(f=fpr, t=tpr))
    return EXIT_OK


def run_gen_synthetic(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        n_calibration=args.calibration,
        n_test=args.test,
        pi0=args.pi0,
        member_shift=args.shift,
        n_trials=1,
        seed=_seed(args),
    )
    path = _output(args, args.output or "synthetic_scores.{f}".format(f=args.format))
    write_scores(generate_synthetic(spec).to_score_file(), path, args.format)
    print(
        "{c} calibration and {t} test scores ({n} non-members) written to {p}".format(
            c=spec.n_calibration, t=spec.n_test, n=spec.n_non_members, p=path
        )
    )
    return EXIT_OK


def run_ablation(args: argparse.Namespace) -> int:
    alpha = args.alpha if args.alpha is not None else AttackConfig().alpha
    spec = SyntheticSpec(
        n_calibration=args.calibration,
        n_test=args.test,
        pi0=args.pi0,
        member_shift=args.shift,
        n_trials=args.trials,
        seed=_seed(args),
    )
    if args.kind == "calibration-size":
        table = calibration_size_experiment(spec, args.sizes, alpha)
    else:
        table = member_ratio_experiment(spec, args.pi0s, alpha)

    path = _output(args, "ablation_{k}.csv".format(k=args.kind.replace("-", "_")))
    table.to_csv(path)
    for row in table.rows:
        print(" ".join("{k}={v:.4g}".format(k=k, v=v) for k, v in row.items()))
    print("Table written to {p}".format(p=path))
    return EXIT_OK


def _attack_configs(args: argparse.Namespace) -> Any:
    sections = optional_config(args.config)
    task = TaskConfig.make_from_sections(sections)
    cfg = AttackConfig.make_from_sections(sections)

    changes = {}  # type: Dict[str, Any]
    seed = resolve_seed(args.seed)
    if seed is not None:
        changes["seed"] = seed
        task = task.replace(seed=seed)
    if args.alpha is not None:
        changes["alpha"] = args.alpha
    if args.blackbox:
        changes["blackbox"] = True
    if args.score_function is not None:
        changes["score_function"] = args.score_function
    return task, cfg.replace(**changes)


def run_attack_command(args: argparse.Namespace) -> int:
    task, cfg = _attack_configs(args)
    if args.repetitions > 1:
        return _run_attack_repetitions(args, task, cfg)

    check_blackbox_surrogate(cfg, task.victim_arch)
    simulation = simulate_victim(task)
    attack = MembershipAttack(cfg, simulation.victim(disclose_architecture=not cfg.blackbox))
    attack.fit(simulation.auxiliary)
    result = attack.run(simulation.test.features, truth=simulation.truth, labels=simulation.test.labels)
    evaluation = result.evaluate()

    report_path, samples = export_report(
        result.report,
        result.decisions,
        _output(args, "report.json"),
        adjusted=result.adjusted,
        sample_ids=[str(i) for i in simulation.test.sample_ids],
        truth=result.truth,
    )
    write_roc_csv(compute_metrics(result.pvalues.values, simulation.truth).roc, _output(args, "roc.csv"))
    manifest = attack.manifest()
    manifest.update(task=task.to_dict(), victim_train_accuracy=simulation.train_accuracy, evaluation=evaluation)
    _write_json(_output(args, "manifest.json"), manifest)

    print("Victim train accuracy {a:.4f}".format(a=simulation.train_accuracy))
    print(
        "{r} of {n} test samples declared members at alpha={a}".format(
            r=result.decisions.n_rejected, n=len(result), a=cfg.alpha
        )
    )
    print(
        "Realized FDR {fdr:.4f} (guaranteed in expectation: {b:.4f})".format(
            fdr=result.report.fdr, b=result.report.bound  # type: ignore
        )
    )
    print(
        "AUROC {p:.4f} on p-values, {s:.4f} on raw scores".format(
            p=evaluation["auroc_pvalues"], s=evaluation["auroc_raw_scores"]
        )
    )
    print("Report written to {r} and {s}".format(r=report_path, s=samples))
    return EXIT_OK


def _run_attack_repetitions(args: argparse.Namespace, task: TaskConfig, cfg: AttackConfig) -> int:
    table = attack_experiment(task, cfg, args.repetitions)
    path = _output(args, "attack_repetitions.csv")
    table.to_csv(path)

    mean_fdr, se = table.mean("fdr"), table.stderr("fdr")
    status = "OK" if mean_fdr <= cfg.alpha + 3 * se else "ABOVE ALPHA (3 SE)"
    print("{n} repetitions".format(n=len(table)))
    print("Mean victim train accuracy {a:.4f}".format(a=table.mean("victim_train_accuracy")))
    print("Mean AUROC {a:.4f} on p-values".format(a=table.mean("auroc_pvalues")))
    print(
        "Mean realized FDR {f:.4f} +/- {se:.4f} (alpha={a}): {status}".format(
            f=mean_fdr, se=se, a=cfg.alpha, status=status
        )
    )
    print("Per-repetition results written to {p}".format(p=path))
    return EXIT_OK


COMMANDS = {
    "attack": run_attack_command,
    "wrap": run_wrap,
    "validate-t1": run_validate_t1,
    "validate-t2": run_validate_t2,
    "metrics": run_metrics,
    "gen-synthetic": run_gen_synthetic,
    "ablation": run_ablation,
}
