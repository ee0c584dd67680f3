from __future__ import annotations

import asyncio
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import aiofiles
import pandas as pd
import yaml

from src.core.errors import BaseError, ConfigParse, MissingInput
from src.static import Constants
from .commands import ARTIFACTS, ExperimentConfig, Outcome, RunContext, run_experiment

logger = logging.getLogger("tfnn.suite")

__all__ = (
    "SuiteReport",
    "load_suite",
    "run_suite",
)


@dataclass
class SuiteReport:
    """CSV rows in config order; experiments that raised are listed in `errors` and keep an empty row."""
    rows: list[dict] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)
    csv_path: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(Constants.csv_columns))

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format=Constants.csv_float_format)


def load_suite(config_file: str, defaults: Optional[dict] = None) -> list[ExperimentConfig]:
    """
    Summary:
        Reads a suite document: a JSON (or YAML) mapping with an `experiments` list and
        optional `defaults`, or a bare list of experiments.

    Args:
        config_file: Path of the document.
        defaults: Fallback seed / grid / eps, overridden by the document's own defaults.

    Returns:
        The experiments in document order.
    """
    if not os.path.exists(config_file):
        raise MissingInput("config_file", config_file)
    with open(config_file, "r", encoding="utf-8") as f:
        try:
            document = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigParse("<document>", str(e).replace("\n", " ")) from None

    merged = dict(defaults or {})
    if document is None:
        experiments = []
    elif isinstance(document, list):
        experiments = document
    elif isinstance(document, dict):
        experiments = document.get("experiments", [])
        own = document.get("defaults", {})
        if not isinstance(own, dict):
            raise ConfigParse("defaults", "expected a mapping")
        merged.update(own)
    else:
        raise ConfigParse("<document>", "expected a mapping or a list of experiments")
    if not isinstance(experiments, list):
        raise ConfigParse("experiments", "expected a list")

    parsed: list[ExperimentConfig] = []
    seen: set[str] = set()
    for i, record in enumerate(experiments):
        experiment = ExperimentConfig.from_dict(record, f"experiments[{i}]", merged)
        if experiment.name in seen:
            raise ConfigParse(f"experiments[{i}].name", f"duplicate experiment name '{experiment.name}'")
        seen.add(experiment.name)
        parsed.append(experiment)
    return parsed


async def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(text)


def _empty_row() -> dict:
    return {
        "n": None, "m": None, "M": None, "width": None, "depth": None, "term_count": None,
        "sup_error": math.nan, "eps": None, "budget_flag": False,
    }


async def _run_one(
        experiment: ExperimentConfig,
        ctx: RunContext,
        semaphore: asyncio.Semaphore,
        dependencies: list[asyncio.Task],
) -> tuple[dict, Optional[str]]:
    if dependencies:
        await asyncio.gather(*dependencies, return_exceptions=True)

    async with semaphore:
        logger.info(f"[{experiment.name}] Running {experiment.command.value}...")
        start = time.perf_counter()
        error: Optional[str] = None
        try:
            outcome: Outcome = await asyncio.to_thread(run_experiment, experiment, ctx)
            row = outcome.row()
            directory = os.path.join(ctx.out_dir, experiment.name)
            for filename, text in outcome.artifacts.items():
                await _write_text(os.path.join(directory, filename), text)
        except BaseError as e:
            logger.error(f"[{experiment.name}] {e.error_msg}")
            row, error = _empty_row(), e.error_msg
        except Exception as e:  # noqa
            logger.exception(f"[{experiment.name}] Unexpected error: {e}")
            row, error = _empty_row(), f"{type(e).__name__}: {e}"
        runtime_ms = (time.perf_counter() - start) * 1000.0

    if error is None:
        flag = " [budget exceeded]" if row["budget_flag"] else ""
        logger.info(f"[{experiment.name}] Done in {runtime_ms:.0f} ms, sup_error={row['sup_error']}{flag}")
    return {"experiment": experiment.name, **row, "runtime_ms": runtime_ms, "seed": experiment.seed}, error


async def run_suite(
        config_file: str,
        out_dir: str,
        config: Optional[dict] = None,
        *,
        seed: Optional[int] = None,
        samples: Optional[int] = None,
) -> SuiteReport:
    """
    Summary:
        Runs every experiment of a suite document and writes its artifacts under
        <out_dir>/<experiment name>/ plus one CSV of rows named after the document.

        Experiments run concurrently (up to `max-concurrency`), except that an experiment
        reading an artifact of an earlier one ("@name/file" inputs) waits for it. Rows are
        written in document order.

    Args:
        config_file: The suite document.
        out_dir: Output root.
        config: The loaded config.yml mapping.
        seed: Seed of experiments that do not set their own.
        samples: Grid density of experiments that do not set their own.

    Returns:
        The report; `ok` is False if any experiment raised. Budget flags are not errors.
    """
    config = config or {}
    defaults = {}
    if seed is not None:
        defaults["seed"] = seed
    experiments = load_suite(config_file, defaults)

    ctx = RunContext(
        out_dir=out_dir,
        base_dir=os.path.dirname(os.path.abspath(config_file)),
        samples=int(samples if samples is not None else config.get("samples", 33)),
    )
    max_concurrency = int((config.get("constants") or {}).get("max-concurrency", 2))
    semaphore = asyncio.Semaphore(max(1, max_concurrency))

    def outputs(experiment: ExperimentConfig) -> list[str]:
        return [
            os.path.normpath(os.path.join(out_dir, experiment.name, filename))
            for filename in ARTIFACTS[experiment.command]
        ]

    # every input must exist already or be written by an earlier experiment
    produced: set[str] = set()
    for i, experiment in enumerate(experiments):
        for field_name, path in ctx.input_paths(experiment):
            path = os.path.normpath(path)
            if path not in produced and not os.path.exists(path):
                raise MissingInput(f"experiments[{i}].inputs.{field_name}", path)
        produced.update(outputs(experiment))

    producers: dict[str, asyncio.Task] = {}
    tasks: list[asyncio.Task] = []
    for experiment in experiments:
        dependencies = [
            producers[os.path.normpath(path)]
            for _, path in ctx.input_paths(experiment)
            if os.path.normpath(path) in producers
        ]
        task = asyncio.create_task(_run_one(experiment, ctx, semaphore, dependencies))
        for path in outputs(experiment):
            producers[path] = task
        tasks.append(task)

    results = await asyncio.gather(*tasks)

    report = SuiteReport()
    for experiment, (row, error) in zip(experiments, results):
        report.rows.append(row)
        if error is not None:
            report.errors[experiment.name] = error

    stem = os.path.splitext(os.path.basename(config_file))[0]
    report.csv_path = os.path.join(out_dir, f"{stem}.csv")
    await _write_text(report.csv_path, report.to_csv())
    logger.info(
        f"Suite '{stem}': {len(experiments) - len(report.errors)}/{len(experiments)} experiment(s) succeeded. "
        f"CSV written to {report.csv_path}"
    )
    return report
