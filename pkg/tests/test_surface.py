"""Nonlinearity surface probe: closed forms, grid shape, determinism."""

from fractions import Fraction

import numpy as np

from ffnas import genotype as gt
from ffnas import surface


def relu_genotype(layers=1, stack=1, ratio=Fraction(1)):
    return gt.FfnGenotype(tuple(
        gt.LayerFfnSpec(
            nodes=(gt.input_node(), gt.linear_node(0, True),
                   gt.math_node("ReLU", (1,)), gt.linear_node(2, False)),
            output=3, stack=stack, ratio=ratio)
        for _ in range(layers)))


def relu_closed_form(x, y, layers, w_mid, stack=1):
    """Scalar recurrence for the all-ones single-ReLU-path probe network.

    Each dag pass: expand sums both channels, ReLU, contract replicates
    w_mid * relu(sum) into both channels; then residual and the mean op.
    """
    vx, vy = x, y
    for _ in range(layers):
        cx, cy = vx, vy
        for _ in range(stack):
            c = w_mid * max(cx + cy, 0.0)
            cx = cy = c
        m = ((vx + cx) + (vy + cy)) / 2.0
        vx = vy = m
    return (vx + vy) / 2.0


def test_single_relu_dag_matches_closed_form():
    g = relu_genotype(layers=1)
    rows = surface.nonlinearity_surface(g, d_ref=2, resolution=25)
    for x, y, z, flag in rows:
        assert flag == 0
        expected = relu_closed_form(x, y, layers=1, w_mid=2)
        assert abs(z - expected) < 1e-10


def test_multilayer_stacked_relu_matches_closed_form():
    g = relu_genotype(layers=3, stack=2, ratio=Fraction(1, 2))
    w_mid = gt.intermediate_width(Fraction(1, 2), 6)
    rows = surface.nonlinearity_surface(g, d_ref=6, resolution=10)
    for x, y, z, flag in rows:
        expected = relu_closed_form(x, y, layers=3, w_mid=w_mid, stack=2)
        assert abs(z - expected) < 1e-10


def test_surface_is_piecewise_linear_in_x_plus_y():
    g = relu_genotype(layers=1)
    rows = surface.nonlinearity_surface(g, d_ref=2, resolution=40)
    by_sum = {}
    for x, y, z, _ in rows:
        by_sum.setdefault(round(x + y, 9), set()).add(round(z, 9))
    for s, zs in by_sum.items():
        assert len(zs) == 1, f"z not a function of x+y at {s}"


def test_grid_has_exactly_resolution_squared_rows():
    g = relu_genotype()
    rows = surface.nonlinearity_surface(g, d_ref=2, resolution=100)
    assert rows.shape == (10_000, 4)
    assert rows[:, 0].min() == -15.0 and rows[:, 0].max() == 5.0
    assert rows[:, 1].min() == -15.0 and rows[:, 1].max() == 5.0


def test_identical_model_and_grid_bit_identical():
    rng = np.random.default_rng(0)
    g = gt.sample_uniform(gt.SearchSpaceDef(layers=2), rng)
    a = surface.nonlinearity_surface(g, d_ref=8, resolution=30)
    b = surface.nonlinearity_surface(g, d_ref=8, resolution=30)
    assert np.array_equal(a, b)


def test_overflowing_network_flags_cells_without_crashing():
    # Mul towers square the magnitude repeatedly; stack 4 with wide banks
    # drives |values| past the float64 ceiling at the grid corners
    nodes = (gt.input_node(), gt.linear_node(0, True),
             gt.math_node("Mul", (1, 1)), gt.math_node("Mul", (2, 2)),
             gt.math_node("Mul", (3, 3)), gt.math_node("Mul", (4, 4)),
             gt.linear_node(5, False))
    g = gt.FfnGenotype(tuple(
        gt.LayerFfnSpec(nodes=nodes, output=6, stack=4, ratio=Fraction(1))
        for _ in range(4)))
    rows = surface.nonlinearity_surface(g, d_ref=64, resolution=20)
    flagged = rows[:, 3].sum()
    assert flagged > 0
    finite = rows[rows[:, 3] == 0]
    assert np.isfinite(finite[:, 2]).all()


def test_csv_roundtrip(tmp_path):
    g = relu_genotype()
    rows = surface.nonlinearity_surface(g, d_ref=2, resolution=12)
    path = tmp_path / "surface.csv"
    surface.write_surface_csv(path, rows)
    text = path.read_text().splitlines()
    assert text[0] == "x,y,z,flag"
    assert len(text) == 1 + 144
    data = surface.read_surface_csv(path)
    np.testing.assert_allclose(data["z"], rows[:, 2], atol=0, rtol=0)
