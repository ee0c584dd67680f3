import itertools

import numpy as np

from src.core.domain import ProductSpace
from src.core.errors import UnsupportedSpace
from src.core.features import check_injectivity
from src.core.kst import (
    InnerPsi,
    OstrandFeatureSet,
    OuterFunction,
    build_ostrand_deep_narrow,
    fit_outer_functions,
    kolmogorov_features,
    ostrand_features,
    ostrand_features_finite,
    sprecher_psi,
)
from src.core.targets import resolve_target
from src.enums import PsiKind
from . import expect


def test_sprecher_psi_endpoints():
    expect(sprecher_psi(0.0) == 0.0, 0.0, sprecher_psi(0.0), "psi(0) = 0")
    expect(sprecher_psi(1.0) == 1.0, 1.0, sprecher_psi(1.0), "psi(1) = 1")
    got, want = sprecher_psi(1.5), 1.0 + sprecher_psi(0.5)
    expect(got == want, want, got, "psi(x) = 1 + psi(x - 1) beyond 1")


def test_sprecher_psi_is_monotone():
    values = sprecher_psi(np.linspace(0.0, 1.0, 201))
    expect(np.all(np.diff(values) >= 0.0), "non-decreasing", values, "psi is monotone on [0, 1]")


def test_sprecher_psi_rejects_bad_parameters():
    for gamma, depth in ((9, 4), (10, 0), (10, 9)):
        try:
            sprecher_psi(0.5, gamma, depth)
        except ValueError:
            continue
        assert False, f"❌ gamma={gamma}, depth={depth} should be rejected"


def test_finite_features_two_bits():
    space = ProductSpace.from_spec("finite:2*finite:2")
    features = ostrand_features_finite(space)
    expect(features.n == 1 and features.M == 0, (1, 0), (features.n, features.M), "one feature when M = 0")
    values = sorted(features.features[0].evaluate(space.grid(2).points).tolist())
    expect(np.allclose(values, [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]), [0, 1 / 3, 2 / 3, 1], values,
           "mixed-radix values scaled into [0, 1]")


def test_finite_features_labels():
    space = ProductSpace.from_spec("finite:a,b,c")
    values = ostrand_features_finite(space).features[0].evaluate(space.grid(2).points)
    expect(np.allclose(values, [0.0, 0.5, 1.0]), [0.0, 0.5, 1.0], values, "three labels map to 0, 1/2 and 1")

    space = ProductSpace.from_spec("finite:3*finite:2")
    values = ostrand_features_finite(space).features[0].evaluate(space.grid(2).points)
    expect(len(set(np.round(values, 12))) == 6, 6, values, "six distinct values on a 3 x 2 product")


def test_finite_features_need_finite_space():
    try:
        ostrand_features_finite(ProductSpace.cube(2))
    except UnsupportedSpace:
        pass
    else:
        assert False, "❌ interval factors have no finite tables"


def test_kolmogorov_features_counts():
    features = kolmogorov_features(2, PsiKind.MONOTONE_PL, seed=0, grid=33)
    expect(features.n == 5, 5, features.n, "2d + 1 features for d = 2")
    expect(features.mode is PsiKind.MONOTONE_PL, PsiKind.MONOTONE_PL, features.mode, "mode is recorded")
    features = kolmogorov_features(3, "monotone_pl", seed=1, grid=5)
    expect(features.n == 7, 7, features.n, "2d + 1 features for d = 3")


def test_monotone_inner_functions():
    features = kolmogorov_features(2, seed=4, grid=9)
    t = np.linspace(0.0, 1.0, 51)
    for row in features.psis:
        for psi in row:
            values = psi.evaluate(t)
            expect(np.all(np.diff(values) > 0.0), "increasing", values, "monotone_pl inner functions increase")
            expect(values[0] == 0.0 and values[-1] <= 1.0, "[0, 1]", values, "values stay within [0, 1]")


def test_kolmogorov_features_reject_bad_input():
    for d, mode in ((1, "monotone_pl"), (2, "finite_table")):
        try:
            kolmogorov_features(d, mode)
        except ValueError:
            continue
        assert False, f"❌ d={d} with mode {mode} should be rejected"


def test_ostrand_features_dispatch():
    finite = ostrand_features(ProductSpace.from_spec("finite:2*finite:2"))
    expect(finite.mode is PsiKind.FINITE_TABLE, PsiKind.FINITE_TABLE, finite.mode, "finite products use tables")
    cube = ostrand_features(ProductSpace.from_spec("interval:-1,1*interval:-1,1"), grid=9)
    expect(cube.n == 5, 5, cube.n, "equal intervals use the cube construction")
    try:
        ostrand_features(ProductSpace.from_spec("interval:0,1*finite:2"))
    except UnsupportedSpace:
        pass
    else:
        assert False, "❌ mixed products are unsupported"


def test_inner_psi_validation():
    try:
        InnerPsi(PsiKind.FINITE_TABLE, [0.0, 1.0], [0.0, 1.5])
    except ValueError:
        pass
    else:
        assert False, "❌ inner function values above 1 must be rejected"


def test_feature_set_json():
    features = kolmogorov_features(2, seed=2, grid=9)
    back = OstrandFeatureSet.from_json(features.to_json())
    points = ProductSpace.cube(2).grid(9).points
    got, want = back.feature_map().evaluate(points), features.feature_map().evaluate(points)
    expect(np.array_equal(got, want), want, got, "features evaluate the same after from_json")
    expect(back.seed == features.seed, features.seed, back.seed, "seed is kept")


def test_outer_functions_for_every_boolean_function():
    space = ProductSpace.from_spec("finite:2*finite:2")
    K = space.grid(2)
    features = ostrand_features_finite(space)
    for bits in itertools.product("01", repeat=4):
        table = "".join(bits)
        f = resolve_target(f"boolean:{table}", K)
        outer, residual = fit_outer_functions(f, K, features, "data")
        expect(residual <= 1e-12, "<= 1e-12", residual, f"boolean:{table} through the single feature")


def test_outer_functions_constant():
    space = ProductSpace.from_spec("finite:2*finite:3")
    K = space.grid(2)
    outer, residual = fit_outer_functions(np.full(K.size, 2.5), K, ostrand_features_finite(space))
    expect(residual == 0.0, 0.0, residual, "constants are exact")
    values = outer.evaluate(np.zeros((3, 1)))
    expect(np.all(values == 2.5), 2.5, values, "the outer function is the constant")


def test_ostrand_deep_narrow_boolean():
    space = ProductSpace.from_spec("finite:2*finite:2")
    K = space.grid(2)
    for table in ("0110", "1000", "0111"):
        net, report = build_ostrand_deep_narrow(resolve_target(f"boolean:{table}", K), space, "relu", 0.01)
        expect(report.width <= 4, "<= 4", report.width, f"boolean:{table} width 2M + m + 3")
        expect(report.achieved_error <= 0.01, "<= 0.01", report.achieved_error, f"boolean:{table} within eps")
        expect(report.extras["mode"] == "finite_table", "finite_table", report.extras["mode"], "feature mode")


def test_ostrand_deep_narrow_cube():
    space = ProductSpace.cube(2)
    K = space.grid(17)
    net, report = build_ostrand_deep_narrow(resolve_target("sin_cos", K), space, "relu", 0.1, grid=17)
    expect(report.width <= 8, "<= 8", report.width, "width 2M + m + 3 on the unit square")
    expect(report.extras["ostrand_width_bound"] == 8, 8, report.extras["ostrand_width_bound"], "reported bound")
    expect(len(report.extras["outer_residuals"]) == 1, 1, report.extras["outer_residuals"], "one output")
    expect(report.M == 2, 2, report.M, "M of the unit square")


def test_sprecher_features_on_the_square():
    features = kolmogorov_features(2, "sprecher", grid=33)
    expect(features.n == 5, 5, features.n, "2d + 1 Sprecher features")
    check = check_injectivity(features.feature_map(), ProductSpace.cube(2).grid(33))
    expect(check.injective, True, check.witness, "Sprecher features separate the 33 x 33 grid")


def test_outer_functions_for_xy():
    K = ProductSpace.cube(2).grid(33)
    features = kolmogorov_features(2, "monotone_pl", seed=0, grid=33)
    outer, residual = fit_outer_functions(resolve_target("xy", K), K, features, 64)
    expect(residual <= 0.05, "<= 0.05", residual, "xy through five monotone_pl features with 64 knots")
    expect(len(outer.tables) == 5, 5, len(outer.tables), "one outer function per feature")


def test_ostrand_report_keeps_outer_functions():
    space = ProductSpace.from_spec("finite:2*finite:2")
    K = space.grid(2)
    target = resolve_target("boolean:0110", K)
    net, report = build_ostrand_deep_narrow(target, space, "relu", 0.01)
    expect(len(report.extras["outer_functions"]) == 1, 1, report.extras["outer_functions"], "one per output")

    outer = OuterFunction.from_dict(report.extras["outer_functions"][0])
    s = ostrand_features_finite(space).feature_map().evaluate(K.points)
    got = outer.evaluate(s)
    expect(np.allclose(got, target[:, 0], atol=1e-9), target[:, 0], got, "h(s(x)) reproduces xor")
