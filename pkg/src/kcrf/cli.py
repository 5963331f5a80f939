"""Batch command line: train, predict, eval, cv, cholesky-report.

Exit codes: 0 success, 1 usage, 2 I/O or parse error, 3 numerical error.
"""
import argparse
import contextlib
import json
import logging
import sys

from .data import load_dataset
from .exceptions import ConfigurationError, DimensionError, KCRFError, NumericalError
from .lowrank import candidate_anchors, incomplete_cholesky
from .metrics import evaluate, format_report
from .model import KernelCRFModel, atomic_write, cross_validate, fit
from .objective import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3

logger = logging.getLogger("kcrf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def load_config(path, **overrides):
    d = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"{path}: invalid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
    d.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(d)


@contextlib.contextmanager
def _log_stream(path):
    if path is None:
        yield None
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def cmd_train(args):
    config = load_config(args.config)
    data = load_dataset(args.data)
    if not data.is_labeled:
        raise ConfigurationError("training data contains unlabeled sequences")
    with _log_stream(args.log) as log:
        model, state = fit(data, config, log=log)
    model.save(args.model)
    print(f"final_objective\t{state.objective:.12g}")
    print(f"converged\t{str(state.converged).lower()}")
    print(f"iterations\t{state.iteration}")
    print(f"basis_size\t{model.basis.size}")
    if not state.converged:
        print(f"warning: not converged (remaining bound {state.total_bound:.3g})",
              file=sys.stderr)
    return EXIT_OK


def _check_dims(model, data):
    if data.feature_dim != model.feature_dim:
        raise DimensionError(
            f"model feature dimension {model.feature_dim} != data feature dimension "
            f"{data.feature_dim}")


def cmd_predict(args):
    model = KernelCRFModel.load(args.model)
    data = load_dataset(args.data, alphabet=model.alphabet)
    _check_dims(model, data)
    if data.empty_blocks:
        print(f"warning: skipped {data.empty_blocks} empty sequence block(s)", file=sys.stderr)
    predictions = [model.alphabet.decode(model.predict(s)) for s in data.sequences]
    lines = ["" if entry is None else predictions[entry[0]][entry[1]]
             for entry in data.layout]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args):
    model = KernelCRFModel.load(args.model)
    data = load_dataset(args.data, alphabet=model.alphabet)
    _check_dims(model, data)
    if not data.is_labeled:
        raise ConfigurationError("evaluation data must be labeled")
    metrics = evaluate([s.labels for s in data.sequences],
                       model.predict_all(data.sequences), len(model.alphabet))
    print(format_report(metrics, model.alphabet))
    return EXIT_OK


def cmd_cv(args):
    config = load_config(args.config)
    data = load_dataset(args.data)
    if not data.is_labeled:
        raise ConfigurationError("cross-validation data must be labeled")
    if args.folds < 2 or args.folds > len(data):
        raise UsageError(f"--folds must be between 2 and {len(data)}")
    report = cross_validate(data, config, args.folds, args.seed)
    lines = ["fold\taccuracy\texact_match\tobjective\tconverged"]
    for r in report["folds"]:
        lines.append(f"{r['fold']}\t{r['accuracy']:.6f}\t{r['exact_match']:.6f}\t"
                     f"{r['objective']:.10g}\t{str(r['converged']).lower()}")
    lines.append(f"mean\t{report['mean_accuracy']:.6f}")
    lines.append(f"sd\t{report['sd_accuracy']:.6f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        atomic_write(args.out, text)
    return EXIT_OK


def cmd_cholesky_report(args):
    config = load_config(args.config)
    data = load_dataset(args.data)
    spec = config.kernel_spec()
    n = len(data.alphabet)
    candidates = candidate_anchors(data.sequences, spec, n)
    factor = incomplete_cholesky(candidates, spec, config.rank_budget, config.residual_tol, n)
    lines = ["step\tpivot\tresidual\tcaptured_fraction"]
    lines += [f"{s}\t{p}\t{r:.12g}\t{c:.12g}" for s, p, r, c in factor.report_rows()]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="kcrf", description="Kernel conditional random fields")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model")
    p.add_argument("data")
    p.add_argument("--config")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--log", help="write the per-iteration log here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="Viterbi-decode a data file")
    p.add_argument("data")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a model on labeled data")
    p.add_argument("data")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    p.add_argument("data")
    p.add_argument("--config")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("cholesky-report", help="dump greedy pivot selection")
    p.add_argument("data")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cholesky_report)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (KCRFError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
