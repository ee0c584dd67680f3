from enum import Enum


class MetricKind(Enum):
    """Metric rule of a sampled compact set."""
    EUCLIDEAN = "euclidean"
    MAX = "max"
    DISCRETE = "discrete"
    SUP = "sup"


class FeatureKind(Enum):
    """Kind tag of a scalar feature map."""
    COORDINATE = "coordinate"
    QUADRATURE = "quadrature"
    POINT_EVAL = "point_eval"
    EXPONENTIAL = "exponential"
    OSTRAND_SUM = "ostrand_sum"
    CUSTOM = "custom"


class NodeStrategy(Enum):
    """Placement rule for the (w, theta) nodes of a ridge expansion."""
    EQUISPACED = "equispaced"
    NESTED = "nested"
    RANDOM = "random"


class PsiKind(Enum):
    """Kind tag of an inner function."""
    FINITE_TABLE = "finite_table"
    SPRECHER = "sprecher"
    MONOTONE_PL = "monotone_pl"


class NetworkKind(Enum):
    """Top-level kind of a serialized network."""
    SHALLOW = "shallow"
    DEEP = "deep"


class FactorKind(Enum):
    """Factor of a product space."""
    INTERVAL = "interval"
    FINITE = "finite"


class Verb(Enum):
    """Commands understood by the CLI and by suite documents."""
    FIT_UNIVARIATE = "fit-univariate"
    BUILD_SHALLOW = "build-shallow"
    BUILD_LCS = "build-lcs"
    BUILD_FUNCTIONAL = "build-functional"
    BUILD_DEEP_NARROW = "build-deep-narrow"
    KST_FEATURES = "kst-features"
    BUILD_OSTRAND = "build-ostrand"
    EVAL = "eval"
    VERIFY = "verify"
    SUITE = "suite"
