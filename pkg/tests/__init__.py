from __future__ import annotations

from typing import Any

__all__ = ("expect",)


def expect(condition: bool, expected: Any, got: Any, error_msg: str) -> None:
    """Asserts `condition`, printing what was expected and what came back when it fails."""
    if not condition:
        print(f"Expected: {expected}")
        print(f"   ↳ Got: {got}")
    assert condition, f"❌ {error_msg}"
