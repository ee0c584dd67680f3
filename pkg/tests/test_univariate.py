import numpy as np

from src.core.univariate import RidgeExpansion, fit_univariate, node_schedule
from src.enums import NodeStrategy
from . import expect


def test_abs_with_two_relu_terms():
    ridge = fit_univariate(np.abs, "relu", 2, interval=(-1.0, 1.0))
    expect(ridge.sup_error <= 1e-10, "<= 1e-10", ridge.sup_error, "|t| = relu(t) + relu(-t)")
    expect(ridge.n_terms == 2, 2, ridge.n_terms, "the constant node is pruned")
    weights = sorted(w for _, w, _ in ridge.terms)
    expect(weights == [-1.0, 1.0], [-1.0, 1.0], weights, "weights +-1 on [-1, 1]")
    thetas = [t for _, _, t in ridge.terms]
    expect(all(t == 0.0 for t in thetas), [0.0, 0.0], thetas, "both hinges sit at 0")


def test_constant_is_exact_with_tanh():
    ridge = fit_univariate(lambda t: np.ones_like(t), "tanh", 1, interval=(-1.0, 1.0))
    expect(ridge.sup_error <= 1e-12, "<= 1e-12", ridge.sup_error, "constants need a w = 0 node")
    values = ridge.evaluate(np.linspace(-1.0, 1.0, 7))
    expect(np.allclose(values, 1.0, atol=1e-12), 1.0, values, "the expansion is constant 1")
    expect(any(w == 0.0 for _, w, _ in ridge.terms), "a w = 0 term", ridge.terms, "bias node is kept")


def test_sine_with_equispaced_tanh():
    ridge = fit_univariate(np.sin, "tanh", 32, NodeStrategy.EQUISPACED, interval=(0.0, np.pi))
    expect(ridge.sup_error <= 0.01, "<= 0.01", ridge.sup_error, "sin on [0, pi] with 32 tanh terms")
    expect(ridge.strategy == "equispaced", "equispaced", ridge.strategy, "strategy is recorded")


def test_tabulated_target():
    grid = np.linspace(-2.0, 2.0, 41)
    ridge = fit_univariate(np.maximum(grid, 0.0) * 3.0, "relu", 4, grid=grid)
    expect(ridge.sup_error <= 1e-10, "<= 1e-10", ridge.sup_error, "3 relu(t) from a value table")
    expect(ridge.interval == (-2.0, 2.0), (-2.0, 2.0), ridge.interval, "interval defaults to the grid range")


def test_nested_schedule_is_a_prefix():
    w8, t8 = node_schedule(-1.0, 2.0, 8, NodeStrategy.NESTED)
    w16, t16 = node_schedule(-1.0, 2.0, 16, NodeStrategy.NESTED)
    expect(np.array_equal(w8, w16[:8]) and np.array_equal(t8, t16[:8]), (w8, t8), (w16[:8], t16[:8]),
           "nested nodes for 8 terms are the first 8 for 16")


def test_doubling_never_hurts_nested():
    errors = [fit_univariate(np.abs, "tanh", n, NodeStrategy.NESTED, interval=(-1.0, 1.0)).sup_error
              for n in (2, 4, 8, 16)]
    for before, after in zip(errors, errors[1:]):
        expect(after <= before, f"<= {before}", after, "doubling the nested budget never raises the error")


def test_schedule_edge_cases():
    w, theta = node_schedule(1.0, 1.0, 4)
    expect(w.size == 0 and theta.size == 0, 0, w.size, "a degenerate interval has no nodes")
    w, theta = node_schedule(0.0, 1.0, 5, NodeStrategy.RANDOM, seed=3)
    w2, theta2 = node_schedule(0.0, 1.0, 5, NodeStrategy.RANDOM, seed=3)
    expect(np.array_equal(w, w2) and np.array_equal(theta, theta2), (w, theta), (w2, theta2),
           "random nodes are reproducible from the seed")
    expect(np.all(w != 0.0), "nonzero", w, "random weights are nonzero")


def test_rejects_zero_terms():
    try:
        fit_univariate(np.abs, "relu", 0, interval=(-1.0, 1.0))
    except ValueError:
        pass
    else:
        assert False, "❌ n_terms = 0 must be rejected"


def test_ridge_json():
    ridge = fit_univariate(np.abs, "leaky_relu:0.1", 4, interval=(-1.0, 1.0))
    back = RidgeExpansion.from_json(ridge.to_json())
    grid = np.linspace(-1.0, 1.0, 17)
    expect(np.array_equal(back.evaluate(grid), ridge.evaluate(grid)), ridge.evaluate(grid), back.evaluate(grid),
           "ridge expansions evaluate the same after from_json")
    expect(back.activation.spec == "leaky_relu:0.1", "leaky_relu:0.1", back.activation.spec, "activation id")


def test_scale_covariance():
    for sigma in ("tanh", "relu"):
        base = fit_univariate(np.sin, sigma, 16, interval=(0.0, np.pi))
        for s in (2.0, 0.5):
            scaled = fit_univariate(lambda t: np.sin(s * t), sigma, 16, interval=(0.0, np.pi / s))
            gap = abs(scaled.sup_error - base.sup_error)
            expect(gap <= 1e-12, "<= 1e-12", gap, f"{sigma}: u(s t) on [a / s, b / s] with s = {s}")
