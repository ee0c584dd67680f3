import numpy as np

from src.core.domain import ProductSpace, SampledCompactSet
from src.core.errors import IncompatiblePoint, ZeroDirection
from src.core.features import (
    CoordinateFeature,
    CustomFeature,
    ExponentialFeature,
    FeatureMap,
    FeatureVectorMap,
    PointEvalFeature,
    QuadratureFeature,
    check_injectivity,
    d_property_residual,
    eval_feature,
    make_coordinate_family,
    make_direction_family,
    make_exponential_dictionary,
    trapezoid_weights,
)
from src.core.kst import ostrand_features_finite
from . import expect


def test_coordinate_and_point_eval():
    got = eval_feature(CoordinateFeature(0), (0.3, 0.7))
    expect(got == 0.3, 0.3, got, "coordinate(0) at (0.3, 0.7)")
    u = np.sin(np.linspace(0.0, 1.0, 9))
    got = eval_feature(PointEvalFeature(5), u)
    expect(got == u[5], u[5], got, "point evaluation reads u(y_5)")


def test_coordinate_out_of_range():
    try:
        eval_feature(CoordinateFeature(2), (1.0, 2.0))
    except IncompatiblePoint:
        pass
    else:
        assert False, "❌ coordinate 2 of a 2-vector must raise"


def test_trapezoid_quadrature():
    w = trapezoid_weights([0.0, 0.5, 1.0])
    expect(np.allclose(w, [0.25, 0.5, 0.25]), [0.25, 0.5, 0.25], w, "trapezoid weights")
    got = eval_feature(QuadratureFeature(w), [0.0, 0.5, 1.0])
    expect(got == 0.5, 0.5, got, "trapezoid rule is exact for u(t) = t")
    moment = trapezoid_weights(np.linspace(0.0, 1.0, 3), moment=1)
    expect(np.allclose(moment, [0.0, 0.25, 0.25]), [0.0, 0.25, 0.25], moment, "first moment weights")


def test_coordinate_family():
    expect(len(make_coordinate_family(1)) == 1, 1, None, "d = 1 gives one coordinate")
    family = make_coordinate_family(3)
    got = [eval_feature(f, (1.0, 2.0, 3.0)) for f in family]
    expect(got == [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], got, "coordinates of (1, 2, 3)")


def test_direction_family():
    got = eval_feature(make_direction_family(2, [(1.0, 1.0)])[0], (0.25, 0.5))
    expect(got == 0.75, 0.75, got, "<(1, 1), x>")
    got = eval_feature(make_direction_family(2, [(1.0, -1.0)])[0], (0.4, 0.4))
    expect(got == 0.0, 0.0, got, "<(1, -1), (x, x)>")
    got = eval_feature(make_direction_family(2, [(2.0, 0.0)])[0], (0.5, 9.0))
    expect(got == 1.0, 1.0, got, "<(2, 0), (0.5, 9)>")

    for bad in ([(0.0, 0.0)], [(1.0, 0.0, 0.0)]):
        try:
            make_direction_family(2, bad)
        except ZeroDirection:
            continue
        assert False, f"❌ {bad} should be rejected"


def test_exponential_dictionary():
    base = [CoordinateFeature(0)]
    zero = ExponentialFeature(base[0], 0.0)
    expect(eval_feature(zero, (3.7,)) == 1.0, 1.0, eval_feature(zero, (3.7,)), "scale 0 is the constant 1")
    one = ExponentialFeature(base[0], 1.0)
    expect(eval_feature(one, (0.0,)) == 1.0, 1.0, eval_feature(one, (0.0,)), "exp(0) = 1")

    family = make_exponential_dictionary(base, [0.0, 1.0, -2.0], include_base=True)
    expect(len(family) == 4, 4, len(family), "constant, base and two nonzero scales")
    expect(family[0].scale == 0.0 and family[1] is base[0], "1, x", family[:2], "constant first, then the base")

    grid = np.linspace(-1.0, 1.0, 21).reshape(-1, 1)
    s, t = ExponentialFeature(base[0], 0.7), ExponentialFeature(base[0], -1.3)
    product = s.evaluate(grid) * t.evaluate(grid)
    closed = ExponentialFeature(base[0], 0.7 - 1.3).evaluate(grid)
    deviation = float(np.max(np.abs(product - closed)))
    expect(deviation < 1e-14, 0.0, deviation, "exp(s f) exp(t f) = exp((s + t) f)")


def test_feature_dicts_rebuild():
    features = [
        CoordinateFeature(1),
        PointEvalFeature(3),
        QuadratureFeature([0.5, 0.5], label="mean"),
        ExponentialFeature(CoordinateFeature(0), 2.0),
        CustomFeature([[0.0, 0.0], [1.0, 1.0]], [5.0, 7.0]),
    ]
    x = np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
    for f in features:
        back = FeatureMap.from_dict(f.to_dict())
        expect(type(back) is type(f), type(f).__name__, type(back).__name__, "feature kind survives to_dict")
        points = x[:, :2] if isinstance(f, (QuadratureFeature, CustomFeature)) else x
        expect(np.array_equal(back.evaluate(points), f.evaluate(points)), f.evaluate(points),
               back.evaluate(points), f"{f!r} evaluates the same after from_dict")


def test_custom_feature_unknown_point():
    f = CustomFeature([[0.0], [1.0]], [1.0, 2.0])
    try:
        f.evaluate([[0.5]])
    except IncompatiblePoint:
        pass
    else:
        assert False, "❌ custom tables only know their own points"


def test_check_injectivity_coordinates():
    K = ProductSpace.cube(2).grid(5)
    report = check_injectivity(FeatureVectorMap(make_coordinate_family(2)), K)
    expect(report.injective, True, report.injective, "coordinates separate grid points")
    expect(abs(report.min_separation - 0.25) < 1e-15, 0.25, report.min_separation, "grid spacing")


def test_check_injectivity_even_map():
    points = np.array([[-0.5], [0.5]])
    F = FeatureVectorMap([CustomFeature(points, points[:, 0] ** 2)])
    report = check_injectivity(F, SampledCompactSet(points))
    expect(not report.injective, False, report.injective, "x^2 identifies -0.5 and 0.5")
    witness = [float(w[0]) for w in report.witness]
    expect(witness == [-0.5, 0.5], [-0.5, 0.5], witness, "witness is the identified pair")
    expect(report.indices == (0, 1), (0, 1), report.indices, "witness indices")
    expect(report.min_separation == 0.0, 0.0, report.min_separation, "identified images are 0 apart")


def test_check_injectivity_finite_sum_feature():
    space = ProductSpace.from_spec("finite:2*finite:2")
    features = ostrand_features_finite(space)
    report = check_injectivity(features.feature_map(), space.grid(2))
    expect(report.injective, True, report.injective, "mixed-radix sum separates {0,1}^2")
    expect(abs(report.min_separation - 1.0 / 3.0) < 1e-15, 1.0 / 3.0, report.min_separation,
           "images {0, 1, 2, 3} scaled into [0, 1]")


def test_d_property_additive_target():
    K = ProductSpace.cube(2).grid(9)
    g = K.points.sum(axis=1)
    residual = d_property_residual(make_coordinate_family(2), K, g, 8)
    expect(residual <= 1e-10, "<= 1e-10", residual, "x + y is additive over the coordinates")


def test_d_property_exact_composition():
    K = ProductSpace.cube(2).grid(9)
    f = make_direction_family(2, [(1.0, 2.0)])
    g = np.cos(4.0 * f[0].evaluate(K.points))
    residual = d_property_residual(f, K, g, "data")
    expect(residual <= 1e-10, "<= 1e-10", residual, "knots at the sample images reproduce u(f(x))")


def test_d_property_product_target_fails():
    K = ProductSpace.cube(2).grid(9)
    g = K.points[:, 0] * K.points[:, 1]
    residual = d_property_residual(make_coordinate_family(2), K, g, 8)
    expect(residual > 0.01, "> 0.01", residual, "xy is not additive over the coordinates")
