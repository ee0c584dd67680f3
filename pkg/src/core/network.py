from __future__ import annotations

import json
import logging
import os
from typing import Optional, Sequence

import numpy as np

from src.enums import NetworkKind
from .activation import Activation, parse_activation
from .errors import ParseError
from .features import FeatureMap

logger = logging.getLogger("tfnn.network")

__all__ = (
    "ShallowTFNN",
    "DeepTFNN",
    "eval_shallow",
    "eval_deep",
    "width_of",
    "depth_of",
    "embed_shallow_as_deep",
    "network_from_dict",
    "save_network",
    "load_network",
)


def _as_points(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    return arr


def _feature_values(features: Sequence[FeatureMap], points: np.ndarray) -> np.ndarray:
    """Values of every neuron's feature, shape (N, r); shared feature objects are evaluated once."""
    cache: dict[int, np.ndarray] = {}
    columns = []
    for f in features:
        key = id(f)
        if key not in cache:
            cache[key] = f.evaluate(points)
        columns.append(cache[key])
    return np.column_stack(columns) if columns else np.zeros((points.shape[0], 0))


def _unique_features(features: Sequence[FeatureMap]) -> tuple[list[dict], list[int]]:
    records: list[dict] = []
    positions: dict[int, int] = {}
    index: list[int] = []
    for f in features:
        key = id(f)
        if key not in positions:
            positions[key] = len(records)
            records.append(f.to_dict())
        index.append(positions[key])
    return records, index


def _finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


class ShallowTFNN:
    """H(x) = A sigma(T(x)) - b with T(x) = (w_i f_i(x) - theta_i)_i."""

    def __init__(
            self,
            features: Sequence[FeatureMap],
            in_weights,
            in_biases,
            out_matrix,
            out_bias,
            activation: Activation | str,
    ):
        self.features: list[FeatureMap] = list(features)
        self.in_weights = _finite("in_weights", np.asarray(in_weights, dtype=float).ravel())
        self.in_biases = _finite("in_biases", np.asarray(in_biases, dtype=float).ravel())
        self.out_bias = _finite("out_bias", np.asarray(out_bias, dtype=float).ravel())
        self.out_matrix = _finite("out_matrix", np.asarray(out_matrix, dtype=float).reshape(self.out_bias.size, -1))
        self.activation = parse_activation(activation)

        r = len(self.features)
        if not (self.in_weights.size == self.in_biases.size == r == self.out_matrix.shape[1]):
            raise ValueError(
                f"inconsistent shallow net: {r} features, {self.in_weights.size} weights, "
                f"{self.in_biases.size} biases, out_matrix {self.out_matrix.shape}"
            )

    @property
    def r(self) -> int:
        return len(self.features)

    @property
    def m(self) -> int:
        return int(self.out_bias.size)

    def pre_activations(self, points) -> np.ndarray:
        pts = _as_points(points)
        return _feature_values(self.features, pts) * self.in_weights - self.in_biases

    def evaluate(self, points) -> np.ndarray:
        hidden = self.activation(self.pre_activations(points))
        return hidden @ self.out_matrix.T - self.out_bias

    def to_deep(self) -> DeepTFNN:
        """Deep net with no hidden layers: T_1 o sigma o T_0."""
        return DeepTFNN(
            self.features, self.in_weights, self.in_biases, [], (self.out_matrix, self.out_bias), self.activation
        )

    def to_dict(self) -> dict:
        records, index = _unique_features(self.features)
        return {
            "kind": NetworkKind.SHALLOW.value,
            "activation": self.activation.spec,
            "m": self.m,
            "shapes": {"r": self.r, "m": self.m},
            "features": records,
            "layers": [
                {
                    "feature_index": index,
                    "weights": self.in_weights.tolist(),
                    "biases": self.in_biases.tolist(),
                },
                {"matrix": self.out_matrix.tolist(), "bias": self.out_bias.tolist()},
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> ShallowTFNN:
        features = [FeatureMap.from_dict(f) for f in data["features"]]
        first, out = data["layers"][0], data["layers"][1]
        return cls(
            [features[i] for i in first["feature_index"]],
            first["weights"],
            first["biases"],
            np.array(out["matrix"], dtype=float).reshape(len(out["bias"]), -1),
            out["bias"],
            data["activation"],
        )

    def __repr__(self) -> str:
        return f"ShallowTFNN(r={self.r}, m={self.m}, activation={self.activation.spec})"


class DeepTFNN:
    """H = T_{l+1} o sigma o T_l o ... o sigma o T_0 with a feature first layer T_0."""

    def __init__(
            self,
            features: Sequence[FeatureMap],
            weights,
            biases,
            hidden: Sequence[tuple],
            output: tuple,
            activation: Activation | str,
    ):
        self.features: list[FeatureMap] = list(features)
        self.weights = _finite("weights", np.asarray(weights, dtype=float).ravel())
        self.biases = _finite("biases", np.asarray(biases, dtype=float).ravel())
        self.activation = parse_activation(activation)

        width = len(self.features)
        if not (self.weights.size == self.biases.size == width):
            raise ValueError("feature layer weights/biases must match the feature count")

        self.hidden: list[tuple[np.ndarray, np.ndarray]] = []
        for j, (A, b) in enumerate(hidden, start=1):
            b = _finite(f"b_{j}", np.asarray(b, dtype=float).ravel())
            A = _finite(f"A_{j}", np.asarray(A, dtype=float).reshape(b.size, -1))
            if A.shape[1] != width:
                raise ValueError(f"A_{j} has {A.shape[1]} columns, previous layer has width {width}")
            self.hidden.append((A, b))
            width = A.shape[0]

        out_b = _finite("output bias", np.asarray(output[1], dtype=float).ravel())
        out_A = _finite("output matrix", np.asarray(output[0], dtype=float).reshape(out_b.size, -1))
        if out_A.shape[1] != width:
            raise ValueError(f"output matrix has {out_A.shape[1]} columns, last layer has width {width}")
        self.output: tuple[np.ndarray, np.ndarray] = (out_A, out_b)

    @property
    def m(self) -> int:
        return int(self.output[1].size)

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def width(self) -> int:
        return max([len(self.features)] + [A.shape[0] for A, _ in self.hidden])

    def layer_outputs(self, points) -> list[np.ndarray]:
        """sigma(T_0(x)), sigma(T_1(...)), ..., one array per layer 0..l."""
        pts = _as_points(points)
        z = self.activation(_feature_values(self.features, pts) * self.weights - self.biases)
        outputs = [z]
        for A, b in self.hidden:
            z = self.activation(z @ A.T - b)
            outputs.append(z)
        return outputs

    def evaluate(self, points) -> np.ndarray:
        z = self.layer_outputs(points)[-1]
        A, b = self.output
        return z @ A.T - b

    def to_dict(self) -> dict:
        records, index = _unique_features(self.features)
        layers: list[dict] = [
            {"feature_index": index, "weights": self.weights.tolist(), "biases": self.biases.tolist()}
        ]
        layers.extend({"matrix": A.tolist(), "bias": b.tolist()} for A, b in self.hidden)
        layers.append({"matrix": self.output[0].tolist(), "bias": self.output[1].tolist()})
        return {
            "kind": NetworkKind.DEEP.value,
            "activation": self.activation.spec,
            "m": self.m,
            "shapes": {
                "widths": [len(self.features)] + [A.shape[0] for A, _ in self.hidden],
                "depth": self.depth,
                "m": self.m,
            },
            "features": records,
            "layers": layers,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> DeepTFNN:
        features = [FeatureMap.from_dict(f) for f in data["features"]]
        layers = data["layers"]
        first, out = layers[0], layers[-1]
        hidden = [
            (np.array(layer["matrix"], dtype=float).reshape(len(layer["bias"]), -1), layer["bias"])
            for layer in layers[1:-1]
        ]
        return cls(
            [features[i] for i in first["feature_index"]],
            first["weights"],
            first["biases"],
            hidden,
            (np.array(out["matrix"], dtype=float).reshape(len(out["bias"]), -1), out["bias"]),
            data["activation"],
        )

    def __repr__(self) -> str:
        return f"DeepTFNN(width={self.width}, depth={self.depth}, m={self.m}, activation={self.activation.spec})"


def eval_shallow(H: ShallowTFNN, x) -> np.ndarray:
    """Outputs for a single point (shape (m,)) or for every row of a point array (shape (N, m))."""
    values = H.evaluate(x)
    return values[0] if np.ndim(x) <= 1 else values


def eval_deep(H: DeepTFNN, x) -> np.ndarray:
    values = H.evaluate(x)
    return values[0] if np.ndim(x) <= 1 else values


def width_of(H: DeepTFNN | ShallowTFNN) -> int:
    if isinstance(H, ShallowTFNN):
        return H.r
    return H.width


def depth_of(H: DeepTFNN | ShallowTFNN) -> int:
    if isinstance(H, ShallowTFNN):
        return 0
    return H.depth


def embed_shallow_as_deep(H: ShallowTFNN, l: int, bound: float, h: Optional[float] = None) -> DeepTFNN:
    """
    Summary:
        Views a shallow net as a deep one of depth l: the first hidden layer re-encodes the
        shallow outputs through identity blocks, the remaining l - 1 layers pass them on.

    Args:
        H: The shallow net.
        l: Target depth, >= 1.
        bound: Identity blocks are accurate for outputs in [-bound, bound].
        h: Step of the differentiable identity block; tuned automatically when omitted.

    Returns:
        The deep net. Exact for relu-family activations on outputs within the bound.
    """
    from .builders import make_identity_block, tune_identity_step
    from .activation import find_kl_point

    if l < 1:
        raise ValueError("l must be >= 1")
    if bound <= 0:
        raise ValueError("bound must be positive")

    sigma = H.activation
    kl = None
    if not sigma.is_relu_family:
        kl = find_kl_point(sigma, np.linspace(-2.0, 2.0, 17))
        if h is None:
            h = tune_identity_step(sigma, kl, 1e-9 / l)
    block = make_identity_block(sigma, kl, h, H.m, bound=bound)

    pre, shift = block.pre_scale, block.pre_shift
    post, post_shift = block.post_scale, block.post_shift

    hidden = [(pre[:, None] * H.out_matrix, pre * H.out_bias - shift)]
    for _ in range(l - 1):
        hidden.append((np.diag(pre * post), -(pre * post_shift + shift)))
    output = (np.diag(post), -post_shift)

    deep = DeepTFNN(H.features, H.in_weights, H.in_biases, hidden, output, sigma)
    logger.debug(f"embedded {H!r} as {deep!r}")
    return deep


def network_from_dict(data: dict) -> ShallowTFNN | DeepTFNN:
    kind = NetworkKind(data["kind"])
    if kind is NetworkKind.SHALLOW:
        return ShallowTFNN.from_dict(data)
    return DeepTFNN.from_dict(data)


def save_network(net: ShallowTFNN | DeepTFNN, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(net.to_json())


def load_network(path: str) -> ShallowTFNN | DeepTFNN:
    if not os.path.exists(path):
        raise ParseError(path, "file not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return network_from_dict(json.load(f))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(path, f"{type(e).__name__}: {e}") from None
