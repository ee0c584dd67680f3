import os
import tempfile

import numpy as np

from src.core.domain import (
    FunctionClassV,
    ProductSpace,
    SampledCompactSet,
    dump_set,
    epsilon_net,
    image_interval,
    load_set,
    save_set,
    sup_seminorm,
)
from src.core.errors import LengthMismatch, ParseError
from src.core.features import CoordinateFeature, CustomFeature
from src.enums import FactorKind, MetricKind
from . import expect


def test_sup_seminorm():
    expect(sup_seminorm(np.zeros(3), np.zeros(3)) == 0.0, 0.0, None, "zero function has zero norm")
    got = sup_seminorm([-1.0, 0.0, 1.0], [0.0, 0.0, 0.0])
    expect(got == 1.0, 1.0, got, "g(x) = x on {-1, 0, 1}")
    got = sup_seminorm([[3.0, 4.0]] * 4, [[0.0, 0.0]] * 4)
    expect(got == 5.0, 5.0, got, "the norm of (3, 4) is 5")


def test_sup_seminorm_shape_mismatch():
    try:
        sup_seminorm(np.zeros((3, 2)), np.zeros((3, 1)))
    except LengthMismatch as e:
        expect(e.left_shape == (3, 2), (3, 2), e.left_shape, "shapes should be reported")
    else:
        assert False, "❌ mismatched shapes must raise"


def test_set_validation():
    for points, mesh in (([[0.0], [0.0]], 0.0), ([[0.0], [np.nan]], 0.0), ([[0.0]], -1.0)):
        try:
            SampledCompactSet(points, mesh=mesh)
        except ValueError:
            continue
        assert False, f"❌ {points} with mesh {mesh} should be rejected"


def test_epsilon_net():
    K = SampledCompactSet(np.linspace(0.0, 1.0, 101))
    same = epsilon_net(K, 0.0)
    expect(same.size == 101, 101, same.size, "eps = 0 keeps the full set")

    single = epsilon_net(SampledCompactSet([[0.3]]), 0.5)
    expect(single.size == 1 and single.points[0, 0] == 0.3, 0.3, single.points, "a single point stays")

    net = epsilon_net(K, 0.1)
    expect(net.size <= 11, "<= 11", net.size, "greedy net on 101 points should be small")
    covering = max(float(np.min(np.abs(net.points[:, 0] - x))) for x in K.points[:, 0])
    expect(covering <= 0.1, "<= 0.1", covering, "every point must be within eps of the net")
    expect(abs(net.mesh - (K.mesh + covering)) < 1e-15, K.mesh + covering, net.mesh,
           "mesh grows by the covering radius")


def test_image_interval():
    K = SampledCompactSet(np.linspace(0.0, 1.0, 11))
    got = image_interval(CoordinateFeature(0), K)
    expect(got == (0.0, 1.0), (0.0, 1.0), got, "coordinate image on [0, 1]")

    constant = CustomFeature(K.points, np.full(11, 2.0))
    got = image_interval(constant, K)
    expect(got == (2.0, 2.0), (2.0, 2.0), got, "constant feature has a degenerate image")

    pts = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    square = CustomFeature(pts, pts ** 2)
    got = image_interval(square, SampledCompactSet(pts))
    expect(got == (0.0, 1.0), (0.0, 1.0), got, "x^2 image on the symmetric set")

    padded = image_interval(CoordinateFeature(0), SampledCompactSet(pts, mesh=0.25))
    expect(padded == (-1.25, 1.25), (-1.25, 1.25), padded, "mesh times Lipschitz bound pads the image")


def test_product_space_from_spec():
    space = ProductSpace.from_spec("interval:-1,1*finite:a,b,c")
    expect(space.dims == (1, 0), (1, 0), space.dims, "intervals have dim 1, finite factors 0")
    expect(space.M == 1, 1, space.M, "M sums the factor dimensions")
    expect(space.factors[1].labels == ("a", "b", "c"), ("a", "b", "c"), space.factors[1].labels, "labels")

    cube = ProductSpace.from_spec("cube:3")
    expect(cube.is_cube and cube.M == 3, 3, cube.M, "cube:3 is three unit intervals")

    finite = ProductSpace.from_spec("finite:2*finite:3")
    expect(finite.is_finite, True, finite.is_finite, "all-finite product")
    expect(finite.factors[1].labels == ("0", "1", "2"), ("0", "1", "2"), finite.factors[1].labels, "finite:3")

    for bad in ("sphere:2", "interval:1,0", "interval:1"):
        try:
            ProductSpace.from_spec(bad)
        except ParseError:
            continue
        assert False, f"❌ '{bad}' should not parse"


def test_product_space_grid():
    space = ProductSpace.from_spec("interval:0,1*finite:2")
    K = space.grid(5)
    expect(K.size == 10, 10, K.size, "5 interval samples times 2 labels")
    expect(K.metric is MetricKind.MAX, MetricKind.MAX, K.metric, "product grids use the max metric")
    expect(K.mesh == 0.125, 0.125, K.mesh, "half the interval spacing")
    expect(K.labels == [[], ["0", "1"]], [[], ["0", "1"]], K.labels, "labels follow the factors")
    expect(np.array_equal(K.points[:2], [[0.0, 0.0], [0.0, 1.0]]), "first factor slowest", K.points[:2],
           "grid order follows itertools.product")


def test_product_space_to_dict():
    space = ProductSpace.from_spec("interval:-1,1*finite:x,y")
    data = space.to_dict()
    expect(data["dims"] == [1, 0] and data["M"] == 1, [1, 0], data, "dims and M are recorded")
    back = ProductSpace.from_dict(data)
    expect(back == space, space, back, "product spaces rebuild from their dict")
    expect(back.factors[0].kind is FactorKind.INTERVAL, FactorKind.INTERVAL, back.factors[0].kind, "kind")


def test_function_class_sample():
    V = FunctionClassV(np.linspace(0.0, 1.0, 5), "linear", [(0.0, 1.0)], samples=3)
    K = V.sample()
    expect(K.size == 3 and K.dim == 5, (3, 5), (K.size, K.dim), "3 members on a 5-point grid")
    expect(K.metric is MetricKind.SUP, MetricKind.SUP, K.metric, "sampled functions use the sup metric")
    expect(np.allclose(K.points[2], np.linspace(0.0, 1.0, 5)), "t", K.points[2], "a = 1 gives u(t) = t")
    expect(abs(K.mesh - 0.25) < 1e-15, 0.25, K.mesh, "neighbouring members differ by 0.5 in sup")
    expect(V.lipschitz_bound == 1.0, 1.0, V.lipschitz_bound, "Lipschitz bound from the parameter box")
    expect(V.check_equicontinuity(), True, False, "linear family is equicontinuous")


def test_function_class_rejects_bad_family():
    for family, box in (("cubic", [(0.0, 1.0)]), ("affine", [(0.0, 1.0)])):
        try:
            FunctionClassV(np.linspace(0.0, 1.0, 3), family, box)
        except ValueError:
            continue
        assert False, f"❌ family {family} with box {box} should be rejected"


def test_set_file_round_trip():
    K = ProductSpace.from_spec("interval:-1,1*finite:a,b").grid(3)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "set.txt")
        save_set(K, path)
        back = load_set(path)
    expect(np.array_equal(back.points, K.points), K.points, back.points, "points survive a save/load")
    expect(back.mesh == K.mesh and back.metric is K.metric, (K.metric, K.mesh), (back.metric, back.mesh),
           "header survives a save/load")
    expect(back.labels == [[], ["a", "b"]], [[], ["a", "b"]], back.labels, "labels are written as names")


def test_set_file_keeps_function_grid():
    V = FunctionClassV(np.linspace(0.0, 2.0, 9), "sine", [(0.0, 2.0)], samples=4)
    text = dump_set(V.sample())
    expect(" domain=0.0:2.0" in text.splitlines()[0], "domain=0.0:2.0", text.splitlines()[0], "domain header")
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "set.txt")
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        back = load_set(path)
    expect(np.allclose(back.grid, V.domain_grid), V.domain_grid, back.grid, "grid rebuilt from the domain header")


def test_load_set_errors():
    with tempfile.TemporaryDirectory() as tmp:
        cases = {
            "empty.txt": "",
            "ragged.txt": "# metric=euclidean mesh=0\n1,2\n3\n",
            "metric.txt": "# metric=taxicab mesh=0\n1\n",
            "nopoints.txt": "# metric=max mesh=0\n",
        }
        for name, text in cases.items():
            path = os.path.join(tmp, name)
            with open(path, "w", encoding="utf-8") as f:
                f.write(text)
            try:
                load_set(path)
            except ParseError:
                continue
            assert False, f"❌ {name} should not load"
        try:
            load_set(os.path.join(tmp, "missing.txt"))
        except ParseError as e:
            expect("not found" in e.reason, "file not found", e.reason, "missing set files are parse errors")
        else:
            assert False, "❌ missing file should not load"
