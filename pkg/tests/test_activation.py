import math

import numpy as np

from src.core.activation import (
    Activation,
    eval_activation,
    find_kl_point,
    is_polynomial_on_interval,
    lipschitz_on,
    parse_activation,
)
from src.core.errors import NoKLPoint, UnknownActivation
from . import expect


def test_eval_known_values():
    tanh, relu, softplus = parse_activation("tanh"), parse_activation("relu"), parse_activation("softplus")
    expect(eval_activation(tanh, 0.0) == 0.0, 0.0, eval_activation(tanh, 0.0), "tanh(0) should be 0")
    expect(eval_activation(relu, -1.0) == 0.0, 0.0, eval_activation(relu, -1.0), "relu(-1) should be 0")
    got = eval_activation(softplus, 0.0)
    expect(abs(got - math.log(2.0)) < 1e-15, math.log(2.0), got, "softplus(0) should be ln 2")


def test_eval_array_is_elementwise():
    relu = parse_activation("relu")
    got = eval_activation(relu, np.array([-2.0, 0.0, 3.5]))
    expect(np.array_equal(got, [0.0, 0.0, 3.5]), [0.0, 0.0, 3.5], got, "relu should act elementwise")


def test_parse_identifiers():
    leaky = parse_activation("leaky_relu:0.1")
    expect(leaky.params == (0.1,), (0.1,), leaky.params, "leaky slope should be parsed")
    expect(leaky.spec == "leaky_relu:0.1", "leaky_relu:0.1", leaky.spec, "spec should round-trip")
    got = eval_activation(leaky, -2.0)
    expect(abs(got + 0.2) < 1e-15, -0.2, got, "leaky relu slope on the negative side")

    default_leaky = parse_activation("leaky-relu")
    expect(default_leaky.params == (0.01,), (0.01,), default_leaky.params, "leaky relu defaults to slope 0.01")

    cubic = parse_activation("poly:0,-1,0,2")
    expect(eval_activation(cubic, 1.0) == 1.0, 1.0, eval_activation(cubic, 1.0), "2t^3 - t at 1")


def test_parse_unknown_suggests():
    try:
        parse_activation("rellu")
    except UnknownActivation as e:
        expect(e.suggestion == "relu", "relu", e.suggestion, "misspelled activation should suggest relu")
    else:
        assert False, "❌ 'rellu' should not parse"

    for bad in ("tanh:2", "poly", "leaky_relu:x"):
        try:
            parse_activation(bad)
        except UnknownActivation:
            continue
        assert False, f"❌ '{bad}' should not parse"


def test_activation_flags():
    expect(parse_activation("leaky_relu").is_relu_family, True, False, "leaky relu is relu-family")
    expect(not parse_activation("tanh").is_relu_family, False, True, "tanh is not relu-family")
    expect(parse_activation("poly:1,3").is_affine, True, False, "3t + 1 is affine")
    expect(not parse_activation("poly:0,0,1").is_affine, False, True, "t^2 is not affine")
    expect(Activation("sin").spec == "sin", "sin", Activation("sin").spec, "bare names keep their spec")


def test_find_kl_point_tanh_prefers_small_t():
    grid = np.arange(-2.0, 2.0 + 1e-12, 0.25)
    kl = find_kl_point(parse_activation("tanh"), grid)
    expect(kl.t0 == 0.0, 0.0, kl.t0, "grid ordered by |t| should give t0 = 0 for tanh")
    expect(abs(kl.derivative - 1.0) < 1e-6, 1.0, kl.derivative, "tanh'(0) = 1")


def test_find_kl_point_relu():
    kl = find_kl_point(parse_activation("relu"), [2.0, 1.0], 1e-4)
    expect(kl.t0 == 1.0, 1.0, kl.t0, "relu should pick t0 = 1")
    expect(abs(kl.derivative - 1.0) < 1e-9, 1.0, kl.derivative, "relu'(1) = 1")


def test_find_kl_point_skips_kink():
    kl = find_kl_point(parse_activation("relu"), [0.0, -1.0, 0.5])
    expect(kl.t0 == 0.5, 0.5, kl.t0, "the kink at 0 and the flat part at -1 must be skipped")


def test_find_kl_point_constant_fails():
    try:
        find_kl_point(parse_activation("poly:1"), np.linspace(-1.0, 1.0, 9))
    except NoKLPoint as e:
        expect(e.grid_size == 9, 9, e.grid_size, "all grid points should be searched")
    else:
        assert False, "❌ a constant activation has no KL point"


def test_is_polynomial_on_interval():
    cubic = parse_activation("poly:0,-1,0,2")
    expect(is_polynomial_on_interval(cubic, [-1.0, 1.0], 4, 1e-9), True, False, "2t^3 - t is a polynomial")
    expect(is_polynomial_on_interval(cubic, [-1.0, 1.0], 3, 1e-9), True, False, "degree 3 suffices")
    affine = parse_activation("poly:1,3")
    expect(is_polynomial_on_interval(affine, [-1.0, 1.0], 1, 1e-9), True, False, "3t + 1 is affine")
    tanh = parse_activation("tanh")
    expect(not is_polynomial_on_interval(tanh, [-1.0, 1.0], 6, 1e-9), False, True, "tanh is not a polynomial")
    relu = parse_activation("relu")
    expect(not is_polynomial_on_interval(relu, [-1.0, 1.0], 1, 1e-9), False, True, "relu has a kink at 0")
    expect(is_polynomial_on_interval(relu, [0.5, 2.0], 1, 1e-9), True, False, "relu is linear on t > 0")


def test_is_polynomial_ignores_rounding():
    quintic = parse_activation("poly:0,0,0,0,0,1")
    # sixth differences are rounding only, scaled up by 1 / (6! h^6)
    expect(is_polynomial_on_interval(quintic, [-3.0, 3.0], 5, 1e-9), True, False, "t^5 on [-3, 3]")
    expect(not is_polynomial_on_interval(quintic, [-3.0, 3.0], 4, 1e-9), False, True, "t^5 is not quartic")


def test_lipschitz_on():
    got = lipschitz_on(parse_activation("tanh"), -1.0, 1.0)
    expect(abs(got - 1.0) < 1e-6, 1.0, got, "tanh is 1-Lipschitz, attained near 0")
    got = lipschitz_on(parse_activation("leaky_relu:0.1"), -1.0, -0.5)
    expect(abs(got - 0.1) < 1e-9, 0.1, got, "leaky relu slope on t < 0")
