import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cliffmoll.algebra import Multivector
from cliffmoll.grid import (Ball, CliffordField, EmptyDomainError, FieldFormatError, Grid, ball_domain,
                            boundary_mesh, box_domain, build_grid, constant_field, grid_for_domain,
                            read_field, sample_field, shrink_domain, vector_field, write_field)


def test_build_grid_spacing_and_nodes():
    g = build_grid([-1, 0], [1, 2], 5)
    assert g.dims == (5, 5)
    assert g.spacing == (0.5, 0.5)
    assert np.allclose(g.nodes()[4, 2], [1.0, 1.0])
    assert np.allclose(g.hi(), [1.0, 2.0])
    assert g.cell_volume == 0.25


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((1, 3), (0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        Grid((3, 3), (0.0, 0.0), (1.0, -1.0))


def test_ball_and_box_sdf():
    b = ball_domain([0.0, 0.0], 2.0)
    assert b.sdf(np.array([3.0, 0.0])) == pytest.approx(1.0)
    assert b.measure() == pytest.approx(4 * math.pi)
    box = box_domain([0, 0], [2, 1])
    assert box.sdf(np.array([1.0, 0.5])) == pytest.approx(-0.5)
    assert box.sdf(np.array([3.0, 2.0])) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        box_domain([0, 0], [0, 1])
    with pytest.raises(ValueError):
        ball_domain([0, 0], -1)


def test_shrunk_domain_is_strict():
    b = ball_domain([0.0, 0.0], 1.0)
    g = build_grid([-1, -1], [1, 1], 5)
    inner = shrink_domain(b, 0.5).mask(g)
    # the node at distance exactly 0.5 from the boundary is excluded
    assert inner.sum() == 1
    with pytest.raises(EmptyDomainError):
        shrink_domain(b, 1.0, g)


@pytest.mark.parametrize("m", [16, 100, 513])
def test_circle_mesh_quadrature(m):
    mesh = boundary_mesh(ball_domain([0.5, -0.5], 2.0), m)
    assert mesh.weights.sum() == pytest.approx(4 * math.pi)
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)
    # int_S nu dS = 0, and int_S x_1 nu_1 dS = volume
    assert np.allclose(mesh.weights @ mesh.normals, 0.0, atol=1e-12)
    assert mesh.weights @ (mesh.centroids[:, 0] * mesh.normals[:, 0]) == pytest.approx(4 * math.pi)


def test_sphere_mesh_quadrature():
    mesh = boundary_mesh(ball_domain([0.0, 0.0, 0.0], 1.0), 2000)
    assert mesh.weights.sum() == pytest.approx(4 * math.pi)
    assert 1500 < mesh.m < 2500
    vol = mesh.weights @ (mesh.centroids[:, 2] * mesh.normals[:, 2])
    assert vol == pytest.approx(4 * math.pi / 3, rel=1e-2)


@pytest.mark.parametrize("n", [2, 3])
def test_box_mesh_quadrature(n):
    box = box_domain([0.0] * n, [2.0] + [1.0] * (n - 1))
    mesh = boundary_mesh(box, 600)
    area = 6.0 if n == 2 else 2 * (2 + 1 + 2)
    assert mesh.weights.sum() == pytest.approx(area)
    assert mesh.weights @ (mesh.centroids[:, 0] * mesh.normals[:, 0]) == pytest.approx(2.0)


def test_sample_and_constant_fields():
    g = build_grid([-1, -1], [1, 1], 9)
    b = ball_domain([0.0, 0.0], 1.0)
    f = sample_field(lambda x: Multivector(2, [x[0], x[1], 0.0, 1.0]), g, b)
    fv = sample_field(lambda x: np.stack([x[..., 0], x[..., 1], 0 * x[..., 0], 1 + 0 * x[..., 0]], -1),
                      g, b, vectorized=True)
    assert np.array_equal(f.data, fv.data)
    assert np.array_equal(f.mask, b.mask(g))
    c = constant_field(Multivector.scalar(2, 3.0), g, b)
    assert np.all(c.data[..., 0] == 3.0)
    v = vector_field(g)
    assert np.allclose(v.data[..., 1:3], g.nodes())
    with pytest.raises(ValueError):
        sample_field(lambda x: np.full(x.shape[:-1] + (4,), np.nan), g, vectorized=True)


def test_field_arithmetic_and_components():
    g = build_grid([0, 0], [1, 1], 3)
    a = constant_field(Multivector(2, [1.0, 2.0, 3.0, 4.0]), g)
    b = a.scaled(2.0)
    assert np.all((b - a).data == a.data)
    comps = a.components()
    assert len(comps) == 4 and np.all(comps[3] == 4.0)
    assert a.at((1, 1)) == Multivector(2, [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValueError):
        CliffordField(g, np.zeros((3, 3, 2)), np.ones((3, 3), bool))


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 3), res=st.integers(2, 6), seed=st.integers(0, 2**31))
def test_clf1_round_trip(tmp_path_factory, n, res, seed):
    rng = np.random.default_rng(seed)
    g = build_grid(rng.uniform(-2, 0, n), rng.uniform(0.5, 2, n), res)
    f = CliffordField(g, rng.normal(size=g.dims + (1 << n,)), rng.random(g.dims) < 0.5)
    path = tmp_path_factory.mktemp("clf") / "f.clf"
    write_field(f, path)
    back = read_field(path)
    assert back.grid == g
    assert np.array_equal(back.data, f.data)
    assert np.array_equal(back.mask, f.mask)


def test_clf1_rejects_bad_files(tmp_path):
    g = build_grid([0, 0], [1, 1], 3)
    f = constant_field(Multivector.scalar(2), g)
    path = tmp_path / "f.clf"
    write_field(f, path)
    raw = path.read_bytes()
    cases = {
        "magic": raw.replace(b"CLF1", b"XYZ1", 1),
        "version": raw.replace(b"CLF1", b"CLF2", 1),
        "truncated": raw[:-5],
        "components": raw.replace(b"components=4", b"components=8", 1),
        "noheader": b"no newline at all",
    }
    for name, blob in cases.items():
        bad = tmp_path / f"{name}.clf"
        bad.write_bytes(blob)
        with pytest.raises(FieldFormatError):
            read_field(bad)


def test_grid_for_domain_padding():
    g = grid_for_domain(Ball((0.0, 0.0), 1.0), 23, pad=0.1)
    assert np.allclose(g.origin, [-1.2, -1.2])
    assert np.allclose(g.hi(), [1.2, 1.2])
