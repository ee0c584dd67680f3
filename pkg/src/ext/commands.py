from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd

from src.core.builders import (
    build_deep_narrow, build_functional_net, build_lcs_shallow, build_shallow_universal
)
from src.core.domain import FunctionClassV, ProductSpace, dump_set, load_set, sup_seminorm
from src.core.errors import ConfigParse, MissingInput, ShapeMismatch, UnknownVerb
from src.core.features import (
    FeatureMap, FeatureVectorMap, check_injectivity, make_coordinate_family, make_direction_family
)
from src.core.kst import build_ostrand_deep_narrow, fit_outer_functions, ostrand_features
from src.core.network import depth_of, load_network, width_of
from src.core.targets import resolve_target, resolve_univariate
from src.core.univariate import fit_univariate
from src.enums import NodeStrategy, PsiKind, Verb
from src.static import Constants
from src.utils import closest_match

logger = logging.getLogger("tfnn.commands")

__all__ = (
    "ExperimentConfig",
    "RunContext",
    "Outcome",
    "HANDLERS",
    "ARTIFACTS",
    "FILE_INPUTS",
    "parse_verb",
    "verify_net",
    "run_experiment",
)

# verbs that need an eps to judge their budget
_NEEDS_EPS = frozenset({
    Verb.BUILD_SHALLOW, Verb.BUILD_LCS, Verb.BUILD_FUNCTIONAL, Verb.BUILD_DEEP_NARROW, Verb.BUILD_OSTRAND,
})

REQUIRED_INPUTS: dict[Verb, tuple[str, ...]] = {
    Verb.FIT_UNIVARIATE: ("target", "interval", "terms"),
    Verb.BUILD_SHALLOW: ("target",),
    Verb.BUILD_LCS: ("target", "scales"),
    Verb.BUILD_FUNCTIONAL: ("target", "family", "params"),
    Verb.BUILD_DEEP_NARROW: ("target",),
    Verb.KST_FEATURES: ("space",),
    Verb.BUILD_OSTRAND: ("space", "target"),
    Verb.EVAL: ("net", "points"),
    Verb.VERIFY: ("net", "set", "target"),
}

# verbs whose working set comes from either a set file or a product space spec
_NEEDS_SET = frozenset({Verb.BUILD_SHALLOW, Verb.BUILD_LCS, Verb.BUILD_DEEP_NARROW})

# inputs that name files, per verb
FILE_INPUTS: dict[Verb, tuple[str, ...]] = {
    **{verb: ("set",) for verb in _NEEDS_SET},
    Verb.EVAL: ("net", "points"),
    Verb.VERIFY: ("net", "set"),
}

ARTIFACTS: dict[Verb, tuple[str, ...]] = {
    Verb.FIT_UNIVARIATE: ("ridge.json", "report.json"),
    Verb.BUILD_SHALLOW: ("net.json", "report.json", "set.txt"),
    Verb.BUILD_LCS: ("net.json", "report.json", "set.txt"),
    Verb.BUILD_FUNCTIONAL: ("net.json", "report.json", "set.txt"),
    Verb.BUILD_DEEP_NARROW: ("net.json", "report.json", "set.txt"),
    Verb.KST_FEATURES: ("features.json", "report.json", "set.txt"),
    Verb.BUILD_OSTRAND: ("net.json", "report.json", "set.txt", "features.json"),
    Verb.EVAL: ("values.csv",),
    Verb.VERIFY: ("verify.json",),
    Verb.SUITE: (),
}


def parse_verb(raw: Any, field_name: str = "command") -> Verb:
    try:
        return Verb(str(raw).strip().lower())
    except ValueError:
        raise UnknownVerb(str(raw), field_name, closest_match(str(raw), [v.value for v in Verb])) from None


@dataclass
class ExperimentConfig:
    name: str
    command: Verb
    inputs: dict = field(default_factory=dict)
    eps: Optional[float] = None
    seed: int = 0
    grid: Optional[int] = None

    @classmethod
    def from_dict(cls, data: Any, where: str = "experiment", defaults: Optional[dict] = None) -> ExperimentConfig:
        """
        Summary:
            Validates one experiment record of a suite document.

        Args:
            data: The record.
            where: Field path used in error messages, e.g. "experiments[3]".
            defaults: Values used for missing `seed`, `grid` and `eps` keys.

        Returns:
            The experiment.
        """
        if not isinstance(data, dict):
            raise ConfigParse(where, "expected a mapping")
        defaults = defaults or {}

        name = data.get("name")
        if not isinstance(name, str) or not name.strip():
            raise ConfigParse(f"{where}.name", "expected a nonempty string")
        if os.sep in name or name.startswith("."):
            raise ConfigParse(f"{where}.name", f"'{name}' cannot be used as a directory name")
        if "command" not in data:
            raise MissingInput(f"{where}.command")
        command = parse_verb(data["command"], f"{where}.command")

        inputs = data.get("inputs", {})
        if not isinstance(inputs, dict):
            raise ConfigParse(f"{where}.inputs", "expected a mapping")

        try:
            eps = data.get("eps", defaults.get("eps"))
            eps = None if eps is None else float(eps)
        except (TypeError, ValueError):
            raise ConfigParse(f"{where}.eps", f"'{data.get('eps')}' is not a number") from None
        if eps is not None and not eps > 0:
            raise ConfigParse(f"{where}.eps", "must be > 0")

        try:
            seed = int(data.get("seed", defaults.get("seed", 0)))
        except (TypeError, ValueError):
            raise ConfigParse(f"{where}.seed", f"'{data.get('seed')}' is not an integer") from None
        if seed < 0:
            raise ConfigParse(f"{where}.seed", "must be >= 0")

        grid = data.get("grid", defaults.get("grid"))
        if grid is not None:
            try:
                grid = int(grid)
            except (TypeError, ValueError):
                raise ConfigParse(f"{where}.grid", f"'{grid}' is not an integer") from None
            if grid < 2:
                raise ConfigParse(f"{where}.grid", "must be >= 2")

        experiment = cls(name.strip(), command, dict(inputs), eps, seed, grid)
        experiment.check_inputs(where)
        return experiment

    def check_inputs(self, where: str = "experiment") -> None:
        if self.command is Verb.SUITE:
            raise ConfigParse(f"{where}.command", "suites cannot run other suites")
        if self.command in _NEEDS_EPS and self.eps is None:
            raise MissingInput(f"{where}.eps")
        for key in REQUIRED_INPUTS.get(self.command, ()):
            if self.inputs.get(key) is None:
                raise MissingInput(f"{where}.inputs.{key}")
        if self.command in _NEEDS_SET and self.inputs.get("set") is None and self.inputs.get("space") is None:
            raise MissingInput(f"{where}.inputs.space")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "command": self.command.value,
            "inputs": self.inputs,
            "eps": self.eps,
            "seed": self.seed,
            "grid": self.grid,
        }


@dataclass
class RunContext:
    """Where inputs are read from and artifacts go."""
    out_dir: str
    base_dir: str = "."
    samples: int = 33

    def resolve(self, path: str) -> str:
        """'@name/file' points into the output root; other relative paths are read from base_dir."""
        path = str(path)
        if path.startswith("@"):
            return os.path.join(self.out_dir, path[1:])
        if os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)

    def resolve_target(self, name: str) -> str:
        key, sep, raw = str(name).partition(":")
        if key.strip().lower() == "table" and sep:
            return f"table:{self.resolve(raw)}"
        return str(name)

    def input_paths(self, experiment: ExperimentConfig) -> list[tuple[str, str]]:
        """(field, resolved path) of every file the experiment reads."""
        paths = [
            (key, self.resolve(experiment.inputs[key]))
            for key in FILE_INPUTS.get(experiment.command, ())
            if experiment.inputs.get(key)
        ]
        target = experiment.inputs.get("target")
        if target is not None:
            key, sep, raw = str(target).partition(":")
            if key.strip().lower() == "table" and sep:
                paths.append(("target", self.resolve(raw)))
        return paths

    def grid_of(self, experiment: ExperimentConfig) -> int:
        return experiment.grid if experiment.grid is not None else self.samples


@dataclass
class Outcome:
    """One row of metrics plus the artifact texts keyed by file name."""
    n: Optional[int]
    m: Optional[int]
    M: Optional[int]
    width: Optional[int]
    depth: Optional[int]
    term_count: Optional[int]
    sup_error: Optional[float]
    eps: Optional[float]
    budget_flag: bool
    artifacts: dict[str, str] = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "M": self.M,
            "width": self.width,
            "depth": self.depth,
            "term_count": self.term_count,
            "sup_error": self.sup_error,
            "eps": self.eps,
            "budget_flag": self.budget_flag,
        }


def _activation(experiment: ExperimentConfig) -> str:
    return str(experiment.inputs.get("activation", "relu"))


def _working_set(experiment: ExperimentConfig, ctx: RunContext):
    if experiment.inputs.get("set"):
        return load_set(ctx.resolve(experiment.inputs["set"])), None
    space = ProductSpace.from_spec(str(experiment.inputs["space"]))
    return space.grid(ctx.grid_of(experiment)), space


def _feature_family(spec: Any, d: int, field_name: str) -> list[FeatureMap]:
    """"coordinate" or "directions:1,0;0,1;1,1"."""
    raw = str(spec or "coordinate").strip()
    kind, _, rest = raw.partition(":")
    kind = kind.strip().lower()
    if kind == "coordinate":
        return make_coordinate_family(d)
    if kind == "directions":
        try:
            directions = [[float(v) for v in part.split(",")] for part in rest.split(";") if part.strip()]
        except ValueError:
            raise ConfigParse(field_name, f"bad direction list '{rest}'") from None
        return make_direction_family(d, directions)
    raise ConfigParse(field_name, f"unknown feature family '{raw}' (use coordinate or directions:...)")


def _parse_mode(raw: Any, seed: int) -> tuple[PsiKind, int, int, int]:
    """(kind, seed, gamma, depth) from "sprecher", "sprecher:10,4", "pl", "pl:<seed>" or "finite"."""
    text = str(raw or "pl").strip().lower()
    kind, _, rest = text.partition(":")
    gamma, depth = Constants.sprecher_gamma, Constants.sprecher_depth
    try:
        if kind == "sprecher":
            if rest:
                values = [int(v) for v in rest.split(",")]
                gamma = values[0]
                depth = values[1] if len(values) > 1 else depth
            return PsiKind.SPRECHER, seed, gamma, depth
        if kind in ("pl", "monotone_pl"):
            return PsiKind.MONOTONE_PL, int(rest) if rest else seed, gamma, depth
        if kind in ("finite", "finite_table"):
            return PsiKind.FINITE_TABLE, seed, gamma, depth
    except ValueError:
        pass
    raise ConfigParse("mode", f"'{raw}' is not one of sprecher[:gamma,depth], pl[:seed], finite")


def _knots(experiment: ExperimentConfig) -> int | str:
    knots = experiment.inputs.get("knots", Constants.default_knots)
    return knots if knots == "data" else int(knots)


def _build_outcome(net, report, K, **artifacts: str) -> Outcome:
    return Outcome(
        n=report.n,
        m=report.m,
        M=report.M,
        width=report.width,
        depth=report.depth,
        term_count=report.term_count,
        sup_error=report.achieved_error,
        eps=report.requested_eps,
        budget_flag=bool(report.budget_exceeded),
        artifacts={"net.json": net.to_json(), "report.json": report.to_json(), "set.txt": dump_set(K), **artifacts},
    )


def fit_univariate_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    inputs = experiment.inputs
    try:
        lo, hi = (float(v) for v in inputs["interval"])
        terms = int(inputs["terms"])
    except (TypeError, ValueError):
        raise ConfigParse("inputs.interval", "expected [a, b] and an integer terms count") from None
    strategy = NodeStrategy(inputs.get("strategy", NodeStrategy.NESTED.value))
    target = resolve_univariate(ctx.resolve_target(inputs["target"]))

    def fit(count: int):
        if callable(target):
            return fit_univariate(target, _activation(experiment), count, strategy, experiment.seed, interval=(lo, hi))
        grid, values = target
        return fit_univariate(
            values, _activation(experiment), count, strategy, experiment.seed, grid=grid, interval=(lo, hi)
        )

    ridge = fit(terms)
    halved = fit(terms // 2).sup_error if terms >= 2 else None
    eps = experiment.eps
    report = {
        "terms_requested": terms,
        "terms_kept": ridge.n_terms,
        "sup_error": ridge.sup_error,
        "halved_terms_sup_error": halved,
        "requested_eps": eps,
    }
    return Outcome(
        n=1,
        m=1,
        M=1,
        width=ridge.n_terms,
        depth=0,
        term_count=ridge.n_terms,
        sup_error=ridge.sup_error,
        eps=eps,
        budget_flag=bool(eps is not None and ridge.sup_error > eps),
        artifacts={"ridge.json": ridge.to_json(), "report.json": json.dumps(report, indent=2)},
    )


def build_shallow_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    K, _ = _working_set(experiment, ctx)
    family = _feature_family(experiment.inputs.get("family"), K.dim, "inputs.family")
    g = resolve_target(ctx.resolve_target(experiment.inputs["target"]), K)
    net, report = build_shallow_universal(
        g, K, family, _activation(experiment), experiment.eps, _knots(experiment),
        Constants.terms_schedule, experiment.seed,
        knot_cap=Constants.knot_cap,
        strategy=experiment.inputs.get("strategy", NodeStrategy.NESTED.value),
    )
    return _build_outcome(net, report, K)


def build_lcs_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    K, _ = _working_set(experiment, ctx)
    base = _feature_family(experiment.inputs.get("base"), K.dim, "inputs.base")
    try:
        scales = [float(s) for s in experiment.inputs["scales"]]
    except (TypeError, ValueError):
        raise ConfigParse("inputs.scales", "expected a list of numbers") from None
    g = resolve_target(ctx.resolve_target(experiment.inputs["target"]), K)
    net, report = build_lcs_shallow(
        g, K, base, scales, _activation(experiment), experiment.eps,
        include_base=bool(experiment.inputs.get("include_base", False)),
        knots=_knots(experiment),
        terms_schedule=Constants.terms_schedule,
        seed=experiment.seed,
        knot_cap=Constants.knot_cap,
    )
    return _build_outcome(net, report, K)


def build_functional_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    inputs = experiment.inputs
    try:
        lo, hi = (float(v) for v in inputs.get("domain", (0.0, 1.0)))
        box = [(float(a), float(b)) for a, b in inputs["params"]]
        V = FunctionClassV(
            np.linspace(lo, hi, int(inputs.get("grid_points", 65))),
            str(inputs["family"]),
            box,
            int(inputs.get("samples", ctx.grid_of(experiment))),
        )
    except (TypeError, ValueError) as e:
        raise ConfigParse("inputs", f"bad function class: {e}") from None
    K = V.sample()
    g = resolve_target(ctx.resolve_target(inputs["target"]), K)
    net, report = build_functional_net(
        g, V, _activation(experiment), experiment.eps, int(inputs.get("nodes", 9)), experiment.seed,
        knots=_knots(experiment),
        terms_schedule=Constants.terms_schedule,
        knot_cap=Constants.knot_cap,
    )
    return _build_outcome(net, report, K)


def build_deep_narrow_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    K, _ = _working_set(experiment, ctx)
    F = FeatureVectorMap(_feature_family(experiment.inputs.get("features"), K.dim, "inputs.features"))
    g = resolve_target(ctx.resolve_target(experiment.inputs["target"]), K)
    h = experiment.inputs.get("h")
    net, report = build_deep_narrow(
        g, K, F, _activation(experiment), experiment.eps, experiment.seed, h=None if h is None else float(h)
    )
    return _build_outcome(net, report, K)


def _ostrand_setup(experiment: ExperimentConfig, ctx: RunContext):
    space = ProductSpace.from_spec(str(experiment.inputs["space"]))
    mode, seed, gamma, depth = _parse_mode(experiment.inputs.get("mode"), experiment.seed)
    grid = ctx.grid_of(experiment)
    K = space.grid(grid)
    features = ostrand_features(space, mode, seed, grid=grid, gamma=gamma, depth=depth, K=K)
    return space, K, features


def kst_features_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    space, K, features = _ostrand_setup(experiment, ctx)
    injectivity = check_injectivity(features.feature_map(), K)

    residual = None
    if experiment.inputs.get("target") is not None:
        g = resolve_target(ctx.resolve_target(experiment.inputs["target"]), K)
        knots = int(experiment.inputs.get("outer_knots", 64))
        residual = max(fit_outer_functions(g[:, k], K, features, knots)[1] for k in range(g.shape[1]))

    report = {
        "space": space.to_dict(),
        "mode": features.mode.value,
        "weighting": features.weighting,
        "seed": features.seed,
        "feature_count": features.n,
        "grid_points": K.size,
        "injectivity": injectivity.to_dict(),
        "outer_residual": residual,
    }
    eps = experiment.eps
    return Outcome(
        n=features.n,
        m=None,
        M=features.M,
        width=features.n,
        depth=0,
        term_count=None,
        sup_error=residual,
        eps=eps,
        budget_flag=bool(eps is not None and residual is not None and residual > eps),
        artifacts={
            "features.json": features.to_json(),
            "report.json": json.dumps(report, indent=2),
            "set.txt": dump_set(K),
        },
    )


def build_ostrand_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    space, K, features = _ostrand_setup(experiment, ctx)
    g = resolve_target(ctx.resolve_target(experiment.inputs["target"]), K)
    net, report = build_ostrand_deep_narrow(
        g, space, _activation(experiment), experiment.eps, features.mode, experiment.seed,
        K=K,
        features=features,
        outer_knots=int(experiment.inputs.get("outer_knots", 64)),
    )
    return _build_outcome(net, report, K, **{"features.json": features.to_json()})


def verify_net(net_file: str, set_file: str, target_name: str) -> dict:
    """
    Summary:
        Re-measures a saved network from its artifacts alone.

    Args:
        net_file: Network JSON.
        set_file: Set file of the points to measure on.
        target_name: A built-in target or "table:<csv>".

    Returns:
        {"sup_error", "width", "depth", "mesh"}; mesh is the declared mesh of the set, reported
        next to the sample error.
    """
    net = load_network(net_file)
    K = load_set(set_file)
    g = resolve_target(target_name, K)
    if g.shape[1] != net.m:
        raise ShapeMismatch(net.m, g.shape[1])
    values = net.evaluate(K.points)
    return {
        "sup_error": sup_seminorm(values, g),
        "width": width_of(net),
        "depth": depth_of(net),
        "mesh": K.mesh,
    }


def eval_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    net = load_network(ctx.resolve(experiment.inputs["net"]))
    K = load_set(ctx.resolve(experiment.inputs["points"]))
    values = net.evaluate(K.points)
    frame = pd.DataFrame(values, columns=[f"y{k}" for k in range(values.shape[1])])
    csv_text = frame.to_csv(index=False, float_format=Constants.csv_float_format)

    sup_error = None
    if experiment.inputs.get("target") is not None:
        g = resolve_target(ctx.resolve_target(experiment.inputs["target"]), K)
        if g.shape[1] != net.m:
            raise ShapeMismatch(net.m, g.shape[1])
        sup_error = sup_seminorm(values, g)
    eps = experiment.eps
    return Outcome(
        n=K.dim,
        m=net.m,
        M=None,
        width=width_of(net),
        depth=depth_of(net),
        term_count=None,
        sup_error=sup_error,
        eps=eps,
        budget_flag=bool(eps is not None and sup_error is not None and sup_error > eps),
        artifacts={"values.csv": csv_text},
    )


def verify_cmd(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    result = verify_net(
        ctx.resolve(experiment.inputs["net"]),
        ctx.resolve(experiment.inputs["set"]),
        ctx.resolve_target(experiment.inputs["target"]),
    )
    net = load_network(ctx.resolve(experiment.inputs["net"]))
    eps = experiment.eps
    return Outcome(
        n=None,
        m=net.m,
        M=None,
        width=result["width"],
        depth=result["depth"],
        term_count=None,
        sup_error=result["sup_error"],
        eps=eps,
        budget_flag=bool(eps is not None and result["sup_error"] > eps),
        artifacts={"verify.json": json.dumps(result, indent=2)},
    )


HANDLERS: dict[Verb, Callable[[ExperimentConfig, RunContext], Outcome]] = {
    Verb.FIT_UNIVARIATE: fit_univariate_cmd,
    Verb.BUILD_SHALLOW: build_shallow_cmd,
    Verb.BUILD_LCS: build_lcs_cmd,
    Verb.BUILD_FUNCTIONAL: build_functional_cmd,
    Verb.BUILD_DEEP_NARROW: build_deep_narrow_cmd,
    Verb.KST_FEATURES: kst_features_cmd,
    Verb.BUILD_OSTRAND: build_ostrand_cmd,
    Verb.EVAL: eval_cmd,
    Verb.VERIFY: verify_cmd,
}


def run_experiment(experiment: ExperimentConfig, ctx: RunContext) -> Outcome:
    """Runs one experiment synchronously; nothing is written to disk."""
    if experiment.command not in HANDLERS:
        raise UnknownVerb(experiment.command.value)
    for field_name, path in ctx.input_paths(experiment):
        if not os.path.exists(path):
            raise MissingInput(f"inputs.{field_name}", path)
    logger.debug(f"[{experiment.name}] {experiment.command.value} with inputs {experiment.inputs}")
    return HANDLERS[experiment.command](experiment, ctx)
