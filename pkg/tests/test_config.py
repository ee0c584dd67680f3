import logging
import os
import tempfile

import numpy as np

from src.core.builders import build_shallow_universal
from src.core.config_loader import apply_constants, default_config, ensure_configs, load_config, resolve_out_dir
from src.core.domain import ProductSpace
from src.core.errors import ConfigParse
from src.core.features import make_coordinate_family
from src.static import Constants
from . import expect

logger = logging.getLogger("tfnn.tests")

_SAVED = ("knot_cap", "fit_grid", "injectivity_tol", "lstsq_cond", "ridge_damping", "terms_schedule")


def _snapshot() -> dict:
    return {name: getattr(Constants, name) for name in _SAVED}


def _restore(saved: dict) -> None:
    for name, value in saved.items():
        setattr(Constants, name, value)


def test_load_config_files():
    with tempfile.TemporaryDirectory() as tmp:
        missing = load_config(logger, auto_exit=False, filepath=os.path.join(tmp, "config.yml"))
        expect(missing == {}, {}, missing, "a missing config.yml gives an empty config")

        cases = {"broken.yml": "seed: [1, 2\n", "list.yml": "- 1\n- 2\n"}
        for name, text in cases.items():
            path = os.path.join(tmp, name)
            with open(path, "w", encoding="utf-8") as f:
                f.write(text)
            got = load_config(logger, auto_exit=False, filepath=path)
            expect(got == {}, {}, got, f"{name} falls back to an empty config")

        path = os.path.join(tmp, "good.yml")
        with open(path, "w", encoding="utf-8") as f:
            f.write("seed: 7\nconstants:\n  knot-cap: 65\n")
        got = load_config(logger, auto_exit=False, filepath=path)
        expect(got == {"seed": 7, "constants": {"knot-cap": 65}}, "seed and knot-cap", got, "yaml mapping")


def test_ensure_configs_fills_defaults():
    config = ensure_configs(logger, {"seed": 3, "constants": {"knot-cap": 65}})
    expect(config["seed"] == 3, 3, config["seed"], "present keys are kept")
    expect(config["samples"] == default_config["samples"], default_config["samples"], config["samples"],
           "missing keys take the defaults")
    expect(config["constants"]["knot-cap"] == 65, 65, config["constants"]["knot-cap"], "nested keys are kept")
    expect(config["constants"]["max-concurrency"] == 2, 2, config["constants"].get("max-concurrency"),
           "missing nested keys take the defaults")

    config = ensure_configs(logger, {"constants": "fast"})
    expect(config["constants"] == default_config["constants"], default_config["constants"], config["constants"],
           "a non-mapping section is replaced")
    expect(default_config["constants"]["knot-cap"] == Constants.knot_cap, Constants.knot_cap,
           default_config["constants"]["knot-cap"], "defaults are not mutated")


def test_ensure_configs_write_back():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "config.yml")
        ensure_configs(logger, {"seed": 1}, write_back=True, filepath=path)
        got = load_config(logger, auto_exit=False, filepath=path)
    expect(got["seed"] == 1 and "constants" in got, "seed 1 with constants", got, "completed config is written")


def test_apply_constants():
    saved = _snapshot()
    try:
        apply_constants(logger, {"constants": {"terms-cap": 16, "knot-cap": 33, "injectivity-tol": "1e-9"}})
        expect(Constants.terms_schedule == (2, 4, 8, 16), (2, 4, 8, 16), Constants.terms_schedule,
               "terms double up to the cap")
        expect(Constants.knot_cap == 33, 33, Constants.knot_cap, "knot cap")
        expect(Constants.injectivity_tol == 1e-9, 1e-9, Constants.injectivity_tol, "strings are converted")

        apply_constants(logger, {"constants": {"terms-cap": 100}})
        expect(Constants.terms_schedule[-1] == 64, 64, Constants.terms_schedule, "the cap is rounded down")
    finally:
        _restore(saved)


def test_apply_constants_rejects_bad_values():
    for constants in ({"knot-cap": "many"}, {"terms-cap": 1}, {"fit-grid": 0}):
        saved = _snapshot()
        try:
            apply_constants(logger, {"constants": constants})
        except ConfigParse as e:
            expect(e.field == "constants", "constants", e.field, "the section is named")
            continue
        finally:
            _restore(saved)
        assert False, f"❌ {constants} should be rejected"


def test_resolve_out_dir():
    previous = os.environ.pop(Constants.out_dir_env, None)
    try:
        expect(resolve_out_dir({}) == "out", "out", resolve_out_dir({}), "default output root")
        expect(resolve_out_dir({"out-dir": "cfg"}) == "cfg", "cfg", resolve_out_dir({"out-dir": "cfg"}), "config")
        os.environ[Constants.out_dir_env] = "env"
        got = resolve_out_dir({"out-dir": "cfg"})
        expect(got == "env", "env", got, "the environment wins over the config")
        got = resolve_out_dir({"out-dir": "cfg"}, "flag")
        expect(got == "flag", "flag", got, "the flag wins over everything")
    finally:
        os.environ.pop(Constants.out_dir_env, None)
        if previous is not None:
            os.environ[Constants.out_dir_env] = previous


def test_library_defaults_follow_constants():
    K = ProductSpace.cube(1).grid(33)
    g = np.sin(3.0 * K.points[:, 0])
    saved = _snapshot()
    try:
        apply_constants(logger, {"constants": {"terms-cap": 2}})
        net, report = build_shallow_universal(g, K, make_coordinate_family(1), "relu", 1e-8)
        expect(report.term_count <= 3, "<= 3", report.term_count, "two ridge terms plus the bias node")
        expect(report.budget_exceeded, True, report.budget_exceeded, "two terms cannot reach 1e-8")
    finally:
        _restore(saved)
    net, report = build_shallow_universal(g, K, make_coordinate_family(1), "relu", 1e-8)
    expect(report.term_count > 3, "> 3", report.term_count, "the restored schedule goes past two terms")
