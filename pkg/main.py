import argparse
import asyncio
import json
import logging
import os
import sys
from typing import Optional

from src.core.config_loader import apply_constants, ensure_configs, load_config, resolve_out_dir
from src.core.errors import BaseError, ConfigParse
from src.enums import NodeStrategy, Verb
from src.ext.commands import ARTIFACTS, ExperimentConfig, RunContext, run_experiment
from src.ext.suite import run_suite
from src.utils import setup_logging, silence_debug_loggers

# CLI flag -> the artifact file it names
_DESTINATIONS = {
    "out": ("net.json", "ridge.json", "features.json", "values.csv", "verify.json"),
    "report": ("report.json",),
    "save_set": ("set.txt",),
}


def _global_flags() -> argparse.ArgumentParser:
    # accepted before and after the verb; SUPPRESS keeps a later default from hiding an earlier value
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed of every random draw")
    parent.add_argument("--samples", type=int, default=argparse.SUPPRESS, help="default grid density")
    parent.add_argument("--out-dir", default=argparse.SUPPRESS, help="output root (overrides TFNN_OUT_DIR)")
    parent.add_argument("--config", default=argparse.SUPPRESS, help="config file (default config.yml)")
    parent.add_argument("--debug", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    return parent


def _add_set_source(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--space", help='product space, e.g. "interval:-1,1*interval:-1,1" or "cube:2"')
    source.add_argument("--set", help="set file of the sample points")


def _add_build_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--activation", default="relu", help='e.g. "relu", "leaky_relu:0.1", "tanh"')
    parser.add_argument("--eps", type=float, required=True, help="requested sup error")
    parser.add_argument("--out", help="network file (default <out-dir>/<verb>/net.json)")
    parser.add_argument("--report", help="report file (default <out-dir>/<verb>/report.json)")
    parser.add_argument("--save-set", help="also write the working sample as a set file")


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    parser = argparse.ArgumentParser(
        prog="tfnn", description="Builds and verifies feature-map networks.", parents=[flags]
    )
    verbs = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = verbs.add_parser(Verb.FIT_UNIVARIATE.value, parents=[flags], help="fit a ridge expansion of u on [a, b]")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--target", help="abs, sin, cos, exp, square or step")
    target.add_argument("--target-file", help="csv of t,u pairs")
    p.add_argument("--activation", default="relu")
    p.add_argument("--interval", type=float, nargs=2, required=True, metavar=("A", "B"))
    p.add_argument("--terms", type=int, required=True)
    p.add_argument("--strategy", default=NodeStrategy.NESTED.value, choices=[s.value for s in NodeStrategy])
    p.add_argument("--eps", type=float)
    p.add_argument("--out", help="ridge file")
    p.add_argument("--report")

    p = verbs.add_parser(Verb.BUILD_SHALLOW.value, parents=[flags], help="shallow net over a feature family")
    _add_set_source(p)
    p.add_argument("--target", required=True)
    p.add_argument("--family", default="coordinate", help='"coordinate" or "directions:1,0;0,1"')
    p.add_argument("--knots", default=None)
    p.add_argument("--strategy", default=NodeStrategy.NESTED.value, choices=[s.value for s in NodeStrategy])
    _add_build_flags(p)

    p = verbs.add_parser(Verb.BUILD_LCS.value, parents=[flags], help="shallow net over exp(s * l) features")
    _add_set_source(p)
    p.add_argument("--target", required=True)
    p.add_argument("--base", default="coordinate")
    p.add_argument("--scales", type=float, nargs="+", required=True)
    p.add_argument("--include-base", action="store_true", default=None)
    p.add_argument("--knots", default=None)
    _add_build_flags(p)

    p = verbs.add_parser(Verb.BUILD_FUNCTIONAL.value, parents=[flags], help="net over point evaluations of u")
    p.add_argument("--family", required=True, choices=("linear", "sine", "affine"))
    p.add_argument("--params", type=float, nargs="+", required=True, help="parameter box as lo hi [lo hi]")
    p.add_argument("--domain", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--grid-points", type=int, default=None, help="grid points of the domain")
    p.add_argument("--param-samples", type=int, default=None, help="samples per parameter")
    p.add_argument("--nodes", type=int, default=None, help="number of point evaluations")
    p.add_argument("--target", required=True)
    p.add_argument("--knots", default=None)
    _add_build_flags(p)

    p = verbs.add_parser(Verb.BUILD_DEEP_NARROW.value, parents=[flags], help="register network of width n + m + 2")
    _add_set_source(p)
    p.add_argument("--target", required=True)
    p.add_argument("--features", default="coordinate")
    p.add_argument("--h", type=float, default=None, help="identity block step")
    _add_build_flags(p)

    p = verbs.add_parser(Verb.KST_FEATURES.value, parents=[flags], help="sum-form inner features of a space")
    p.add_argument("--space", required=True)
    p.add_argument("--mode", default="pl", help='"sprecher[:gamma,depth]", "pl[:seed]" or "finite"')
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--target", default=None, help="also report the outer-function residual")
    p.add_argument("--outer-knots", type=int, default=None)
    p.add_argument("--eps", type=float)
    p.add_argument("--out", help="feature file")
    p.add_argument("--report")
    p.add_argument("--save-set")

    p = verbs.add_parser(Verb.BUILD_OSTRAND.value, parents=[flags], help="deep narrow net over sum-form features")
    p.add_argument("--space", required=True)
    p.add_argument("--mode", default="pl")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--target", required=True)
    p.add_argument("--outer-knots", type=int, default=None)
    _add_build_flags(p)

    p = verbs.add_parser(Verb.EVAL.value, parents=[flags], help="evaluate a saved network")
    p.add_argument("--net", required=True)
    p.add_argument("--points", required=True, help="set file")
    p.add_argument("--target", default=None)
    p.add_argument("--out", help="values csv")

    p = verbs.add_parser(Verb.VERIFY.value, parents=[flags], help="re-measure a saved network")
    p.add_argument("--net", required=True)
    p.add_argument("--set", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--out", help="also write the result here")

    p = verbs.add_parser(Verb.SUITE.value, parents=[flags], help="run a suite document")
    p.add_argument("file", help="suite document (JSON)")
    return parser


def experiment_from_args(args: argparse.Namespace, samples: int) -> ExperimentConfig:
    verb = Verb(args.verb)
    skip = {"verb", "seed", "samples", "out_dir", "config", "debug", "eps", "grid", "out", "report", "save_set",
            "target_file", "param_samples", "params", "interval"}
    inputs = {k: v for k, v in vars(args).items() if k not in skip and v is not None}

    if getattr(args, "target_file", None):
        inputs["target"] = f"table:{args.target_file}"
    if getattr(args, "interval", None):
        inputs["interval"] = list(args.interval)
    if getattr(args, "params", None):
        if len(args.params) % 2:
            raise ConfigParse("--params", "expected lo hi pairs")
        inputs["params"] = [args.params[i:i + 2] for i in range(0, len(args.params), 2)]
    if getattr(args, "param_samples", None):
        inputs["samples"] = args.param_samples

    experiment = ExperimentConfig(
        name=verb.value,
        command=verb,
        inputs=inputs,
        eps=getattr(args, "eps", None),
        seed=getattr(args, "seed", 0),
        grid=getattr(args, "grid", None) or samples,
    )
    experiment.check_inputs(verb.value)
    return experiment


def run_verb(args: argparse.Namespace, config: dict, out_dir: str, _logger: logging.Logger) -> int:
    samples = getattr(args, "samples", None) or int(config["samples"])
    if args.verb == Verb.SUITE.value:
        report = asyncio.run(
            run_suite(args.file, out_dir, config, seed=getattr(args, "seed", None), samples=samples)
        )
        return 0 if report.ok else 1

    experiment = experiment_from_args(args, samples)
    ctx = RunContext(out_dir=out_dir, base_dir=os.getcwd(), samples=samples)
    outcome = run_experiment(experiment, ctx)

    for filename in ARTIFACTS[experiment.command]:
        if filename not in outcome.artifacts:
            continue
        flag = next((k for k, names in _DESTINATIONS.items() if filename in names), None)
        path = getattr(args, flag, None) if flag else None
        if path is None:
            if filename == "set.txt" or (experiment.command is Verb.VERIFY and flag == "out"):
                continue
            path = os.path.join(out_dir, experiment.name, filename)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(outcome.artifacts[filename])
        _logger.info(f"Wrote {path}")

    if experiment.command is Verb.VERIFY:
        print(outcome.artifacts["verify.json"])
    else:
        print(json.dumps(outcome.row()))
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _logger = logging.getLogger("tfnn")

    setup_logging(level=logging.INFO)
    config = load_config(_logger, auto_exit=False, filepath=getattr(args, "config", "config.yml"))
    debug = getattr(args, "debug", False) or (config and config.get("debug") is True)
    config = ensure_configs(_logger, config)
    setup_logging(level=logging.DEBUG if debug else logging.INFO, log_file=config.get("log-file"))
    silence_debug_loggers(_logger, ["asyncio", "numexpr", "matplotlib"])

    try:
        apply_constants(_logger, config)
        out_dir = resolve_out_dir(config, getattr(args, "out_dir", None))
        return run_verb(args, config, out_dir, _logger)
    except BaseError as e:
        _logger.error(e.error_msg)
        return 1
    except Exception as e:  # noqa
        _logger.exception(f"Unexpected error: {e}")
        return 2


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        exit(1)
