from __future__ import annotations

from typing import Any, Optional, Sequence

__all__ = (
    "BaseError",
    "NoKLPoint",
    "ZeroDerivative",
    "IncompatiblePoint",
    "LengthMismatch",
    "ZeroDirection",
    "InjectivityFailure",
    "UnknownActivation",
    "UnknownTarget",
    "UnsupportedSpace",
    "ConfigParse",
    "UnknownVerb",
    "MissingInput",
    "ParseError",
    "ShapeMismatch",
)


class BaseError(Exception):
    """Base class for all errors in the library."""

    error_msg: str = "An unknown error occurred."

    def __init__(self, error_msg: Optional[str] = None):
        if error_msg is not None:
            self.error_msg = error_msg
        super().__init__(self.error_msg)

    def __str__(self) -> str:
        return self.error_msg


def _did_you_mean(suggestion: Optional[str]) -> str:
    return f" Did you mean '{suggestion}'?" if suggestion else ""


class NoKLPoint(BaseError):
    """Raised when no grid point has a stable nonzero derivative of the activation."""

    def __init__(self, activation: str, grid_size: int):
        self.activation = activation
        self.grid_size = grid_size
        super().__init__(
            f"Activation '{self.activation}' has no point with a stable nonzero derivative "
            f"among the {self.grid_size} searched grid points."
        )


class ZeroDerivative(BaseError):
    """Raised when an identity block is requested at a point with zero derivative."""

    def __init__(self, activation: str, t0: float):
        self.activation = activation
        self.t0 = t0
        super().__init__(
            f"Cannot build an identity block for '{self.activation}': derivative at t0={self.t0!r} is zero."
        )


class IncompatiblePoint(BaseError):
    """Raised when a feature cannot be evaluated on a point."""

    def __init__(self, feature: str, reason: str):
        self.feature = feature
        self.reason = reason
        super().__init__(f"Feature {self.feature} cannot be evaluated here: {self.reason}.")


class LengthMismatch(BaseError):
    """Raised when two value sequences do not line up."""

    def __init__(self, left_shape: Sequence[int], right_shape: Sequence[int]):
        self.left_shape = tuple(left_shape)
        self.right_shape = tuple(right_shape)
        super().__init__(f"Value shapes do not match: {self.left_shape} vs {self.right_shape}.")


class ZeroDirection(BaseError):
    """Raised when a direction family contains a zero or malformed direction."""

    def __init__(self, index: int, direction: Sequence[float]):
        self.index = index
        self.direction = tuple(direction)
        super().__init__(f"Direction #{self.index} {self.direction} is zero or has the wrong length.")


class InjectivityFailure(BaseError):
    """Raised when a feature vector map identifies two distinct sample points."""

    def __init__(self, witness: tuple[Any, Any], indices: Optional[tuple[int, int]] = None):
        self.witness = witness
        self.indices = indices
        where = f" (points #{indices[0]} and #{indices[1]})" if indices is not None else ""
        super().__init__(
            f"Feature map is not injective on the sample{where}: "
            f"{_fmt_point(witness[0])} and {_fmt_point(witness[1])} share an image."
        )


class UnknownActivation(BaseError):
    """Raised when an activation identifier cannot be parsed."""

    def __init__(self, spec: str, suggestion: Optional[str] = None):
        self.spec = spec
        self.suggestion = suggestion
        super().__init__(f"Unknown activation '{self.spec}'.{_did_you_mean(suggestion)}")


class UnknownTarget(BaseError):
    """Raised when a target name is neither built in nor a readable value table."""

    def __init__(self, name: str, suggestion: Optional[str] = None):
        self.name = name
        self.suggestion = suggestion
        super().__init__(f"Unknown target '{self.name}'.{_did_you_mean(suggestion)}")


class UnsupportedSpace(BaseError):
    """Raised when a product space has no inner-function construction."""

    def __init__(self, description: str):
        self.description = description
        super().__init__(f"No inner-function construction for the space {self.description}.")


class ConfigParse(BaseError):
    """Raised when a suite or config document is malformed."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"Invalid configuration field '{self.field}': {self.reason}.")


class UnknownVerb(BaseError):
    """Raised when an experiment names a command that does not exist."""

    def __init__(self, verb: str, field: str = "command", suggestion: Optional[str] = None):
        self.verb = verb
        self.field = field
        self.suggestion = suggestion
        super().__init__(f"Unknown command '{self.verb}' in field '{self.field}'.{_did_you_mean(suggestion)}")


class MissingInput(BaseError):
    """Raised when a referenced input file or parameter is absent."""

    def __init__(self, field: str, value: Any = None):
        self.field = field
        self.value = value
        detail = f" ({self.value})" if self.value is not None else ""
        super().__init__(f"Missing input for field '{self.field}'{detail}.")


class ParseError(BaseError):
    """Raised when an artifact file cannot be parsed."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"Could not parse '{self.path}': {self.reason}.")


class ShapeMismatch(BaseError):
    """Raised when a network's output arity differs from the target arity."""

    def __init__(self, net_outputs: int, target_outputs: int):
        self.net_outputs = net_outputs
        self.target_outputs = target_outputs
        super().__init__(
            f"Network has {self.net_outputs} output(s) but the target has {self.target_outputs}."
        )


def _fmt_point(point: Any) -> str:
    try:
        return "(" + ", ".join(f"{float(v):.6g}" for v in point) + ")"
    except TypeError:
        return f"{float(point):.6g}"
