"""
Runs every test_* function of the tests/test_*.py modules.

    python -m tests                 # everything
    python -m tests builders        # modules whose name contains "builders"
    python -m tests kst sprecher    # and only tests whose name contains "sprecher"

# Path: tests/__main__.py
"""
from __future__ import annotations

import importlib
import inspect
import logging
import os
import sys
import time
import traceback as tb
from typing import Callable, Optional

from src.utils import setup_logging

logger: logging.Logger = logging.getLogger("test")

root_path = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def discover(module_filter: Optional[str] = None) -> list[str]:
    names = sorted(
        f[:-3] for f in os.listdir(os.path.join(root_path, "tests"))
        if f.startswith("test_") and f.endswith(".py")
    )
    if module_filter:
        names = [n for n in names if module_filter in n]
    return names


def collect(module) -> list[Callable[[], None]]:
    tests = [
        obj for name, obj in vars(module).items()
        if name.startswith("test_") and inspect.isfunction(obj) and obj.__module__ == module.__name__
    ]
    return sorted(tests, key=lambda fn: fn.__code__.co_firstlineno)


def run_module(name: str, test_filter: Optional[str] = None) -> tuple[int, int]:
    short = name.removeprefix("test_")
    print(f"🔎 [{short}] Running tests...")
    try:
        module = importlib.import_module(f"tests.{name}")
    except Exception as e:  # noqa
        print(f"❌ [{short}] Could not import the test module: {e}")
        print("".join(tb.format_exception(type(e), e, e.__traceback__)))
        return 0, 1

    checks_to_run = collect(module)
    if test_filter:
        checks_to_run = [fn for fn in checks_to_run if test_filter in fn.__name__]

    checks_passed = 0
    for check in checks_to_run:
        start = time.perf_counter()
        try:
            check()
            checks_passed += 1
            logger.debug(f"{check.__name__} passed in {time.perf_counter() - start:.2f}s")
        except AssertionError as e:
            print(e if str(e) else f"❌ {check.__name__} failed")
            print("".join(tb.format_exception(type(e), e, e.__traceback__)[-2:]))
        except Exception as e:  # noqa
            print(f"❌ Unexpected error: {e} --- {check.__name__}")
            exc = tb.format_exception(type(e), e, e.__traceback__)
            print("".join(exc))
    emoji = "❌" if checks_passed != len(checks_to_run) else "✅"
    print(f"{emoji} [{short}] Passed {checks_passed}/{len(checks_to_run)} tests")
    return checks_passed, len(checks_to_run)


def main(argv: list[str]) -> int:
    setup_logging(level=logging.WARNING)
    module_filter = argv[0] if argv else None
    test_filter = argv[1] if len(argv) > 1 else None

    modules = discover(module_filter)
    if not modules:
        print(f"⚠️ No test module matches '{module_filter}'! No tests will be run.")
        return 1

    successful_modules = 0
    for name in modules:
        passed, total = run_module(name, test_filter)
        if passed == total:
            successful_modules += 1

    if successful_modules == len(modules):
        print("🎉 All tests passed!")
        return 0
    print(f"❌ {len(modules) - successful_modules}/{len(modules)} test modules failed!")
    return 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
