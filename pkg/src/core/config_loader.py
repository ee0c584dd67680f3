import copy
import logging
import os
from typing import Optional

import yaml

from src.static import Constants
from src.utils import exit_tfnn
from .errors import ConfigParse

ROOT_PATH = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

default_config = {
    "debug": False,
    "out-dir": "out",
    "samples": 33,
    "seed": 0,
    "log-file": None,
    "constants": {
        "knot-cap": Constants.knot_cap,
        "terms-cap": Constants.terms_schedule[-1],
        "fit-grid": Constants.fit_grid,
        "injectivity-tol": Constants.injectivity_tol,
        "lstsq-cond": Constants.lstsq_cond,
        "ridge-damping": Constants.ridge_damping,
        "max-concurrency": 2,
    },
}


def load_config(logger: logging.Logger, *, auto_exit: bool = True, filepath: str = "config.yml") -> Optional[dict]:
    if not os.path.isabs(filepath):
        filepath = os.path.join(ROOT_PATH, filepath)
    if not os.path.exists(filepath):
        logger.debug(
            "   - config.yml file not found. Using default configs (see config.yml.example)."
        )
        return {}

    with open(filepath, "r", encoding="utf-8") as f:
        try:
            loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            logger.critical(
                "   - config.yml file is not a valid YAML file. Please follow the instructions "
                "listed in the README.md file."
            )
            logger.critical("   - Error: " + str(e))
            if auto_exit:
                exit_tfnn()
            return {}

    if not isinstance(loaded, dict):
        logger.critical("   - config.yml must contain a mapping at the top level.")
        if auto_exit:
            exit_tfnn()
        return {}
    return loaded


def _fill_missing(logger: logging.Logger, target: dict, defaults: dict, where: str, announce: bool) -> bool:
    edited = False
    for key, value in defaults.items():
        if key in target:
            continue
        if announce:
            logger.warning(f"    - config.yml file is missing optional key: '{where}{key}'. Using default configs.")
        target[key] = copy.deepcopy(value)
        edited = True
    return edited


def ensure_configs(
        logger: logging.Logger, config: Optional[dict], *, write_back: bool = False,
        filepath: str = "config.yml") -> dict:
    """Fills every missing key from `default_config`; with write_back the completed mapping is saved."""
    config = dict(config or {})
    config_edited = _fill_missing(logger, config, default_config, "", write_back)

    for key, value in default_config.items():
        if not isinstance(value, dict):
            continue
        if not isinstance(config[key], dict):
            logger.warning(f"    - config.yml key '{key}' must be a mapping. Using default configs.")
            config[key] = copy.deepcopy(value)
            config_edited = True
            continue
        config[key] = dict(config[key])
        config_edited |= _fill_missing(logger, config[key], value, f"{key}.", write_back)

    if config_edited and write_back:
        if not os.path.isabs(filepath):
            filepath = os.path.join(ROOT_PATH, filepath)
        with open(filepath, "w", encoding="utf-8") as f:
            yaml.safe_dump(config, f, sort_keys=False)
        logger.warning(f"    - {os.path.basename(filepath)} has been completed with the default configs.")

    return config


def resolve_out_dir(config: dict, cli_value: Optional[str] = None) -> str:
    """--out-dir flag, then the TFNN_OUT_DIR variable, then the config key."""
    if cli_value:
        return cli_value
    env_value = os.environ.get(Constants.out_dir_env)
    if env_value:
        return env_value
    return config.get("out-dir") or default_config["out-dir"]


def apply_constants(logger: logging.Logger, config: dict) -> None:
    """Copies the numeric keys of the `constants` section onto the Constants class."""
    constants = config.get("constants") or {}
    try:
        Constants.knot_cap = int(constants.get("knot-cap", Constants.knot_cap))
        Constants.fit_grid = int(constants.get("fit-grid", Constants.fit_grid))
        Constants.injectivity_tol = float(constants.get("injectivity-tol", Constants.injectivity_tol))
        Constants.lstsq_cond = float(constants.get("lstsq-cond", Constants.lstsq_cond))
        Constants.ridge_damping = float(constants.get("ridge-damping", Constants.ridge_damping))
        cap = int(constants.get("terms-cap", Constants.terms_schedule[-1]))
    except (TypeError, ValueError) as e:
        raise ConfigParse("constants", str(e)) from None
    if cap < 2 or Constants.knot_cap < 2 or Constants.fit_grid < 2:
        raise ConfigParse("constants", "knot-cap, terms-cap and fit-grid must be >= 2")
    schedule, n = [], 2
    while n <= cap:
        schedule.append(n)
        n *= 2
    Constants.terms_schedule = tuple(schedule)
    logger.debug(
        f"constants: knot-cap={Constants.knot_cap}, terms={Constants.terms_schedule}, "
        f"fit-grid={Constants.fit_grid}, injectivity-tol={Constants.injectivity_tol:g}"
    )
