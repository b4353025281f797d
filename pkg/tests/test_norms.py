import math

import numpy as np
import pytest

from cliffmoll.algebra import Multivector
from cliffmoll.grid import CliffordField, EmptyDomainError, build_grid, constant_field, sample_field
from cliffmoll.norms import (NormSpec, StencilError, central_first, central_second, clifford_inner_product,
                             holder_seminorm, lp_norm, multi_indices, partial_derivative, sobolev_norm,
                             sup_norm)


def square(res):
    return build_grid([0.0, 0.0], [1.0, 1.0], res)


def test_central_differences_exact_on_quadratics():
    g = square(11)
    x = g.nodes()
    u = 3 * x[..., 0] ** 2 - x[..., 0] * x[..., 1]
    d0 = central_first(u, g.spacing[0], 0)
    dd = central_second(u, g.spacing[0], 0)
    assert np.allclose(d0[1:-1], (6 * x[..., 0] - x[..., 1])[1:-1])
    assert np.allclose(dd[1:-1], 6.0)
    assert np.all(np.isnan(d0[0])) and np.all(np.isnan(d0[-1]))
    mixed = partial_derivative(u, g, (1, 1))
    assert np.allclose(mixed[1:-1, 1:-1], -1.0)


def test_multi_indices_order():
    assert multi_indices(2, 1) == [(0, 0), (1, 0), (0, 1)]
    assert len(multi_indices(3, 2)) == 10


def test_lp_norm_of_constant():
    g = square(21)
    f = constant_field(Multivector(2, [3.0, 0.0, 4.0, 0.0]), g)
    region = np.ones(g.dims, bool)
    # |f| = 5 everywhere, measure of the node cells = 21^2 * h^2
    vol = g.size * g.cell_volume
    assert lp_norm(f, 2.0) == pytest.approx(5 * math.sqrt(vol))
    assert lp_norm(f, 1.0, region) == pytest.approx(5 * vol)
    assert sup_norm(f) == 5.0


def test_sobolev_norm_of_linear_field():
    g = square(41)
    x = g.nodes()
    u = 2 * x[..., 0] + x[..., 1]
    inner = np.zeros(g.dims, bool)
    inner[1:-1, 1:-1] = True
    vol = inner.sum() * g.cell_volume
    expected = math.sqrt(np.sum(u[inner] ** 2) * g.cell_volume + (4 + 1) * vol)
    assert sobolev_norm(u, NormSpec(2, 1), inner, g) == pytest.approx(expected)
    assert sobolev_norm(u, p=math.inf, k=1, region=inner, grid=g) == pytest.approx(float(u[inner].max()))


def test_stencil_margin_violation():
    g = square(11)
    u = np.ones(g.dims)
    with pytest.raises(StencilError):
        sobolev_norm(u, NormSpec(2, 1), np.ones(g.dims, bool), g)
    with pytest.raises(EmptyDomainError):
        lp_norm(u, 2, np.zeros(g.dims, bool), g)


def test_norm_spec_validation():
    with pytest.raises(ValueError):
        NormSpec(1.0, 0)
    with pytest.raises(ValueError):
        NormSpec(2.0, -1)


def test_holder_seminorm():
    g = square(15)
    x = g.nodes()
    lin = 3 * x[..., 0] - 4 * x[..., 1]
    assert holder_seminorm(lin, 1.0, grid=g) == pytest.approx(5.0)
    sq = np.sqrt(np.abs(x[..., 0]))
    # sqrt is 1/2-Hoelder with constant 1, attained at the origin
    assert holder_seminorm(sq, 0.5, grid=g) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        holder_seminorm(lin, 1.5, grid=g)


def test_holder_sampling_is_seeded():
    g = build_grid([0.0, 0.0], [1.0, 1.0], 80)
    u = np.sin(5 * g.nodes()[..., 0])
    a = holder_seminorm(u, 0.5, grid=g, seed=3, n_random=20000)
    b = holder_seminorm(u, 0.5, grid=g, seed=3, n_random=20000)
    assert a == b
    assert a <= holder_seminorm(u, 0.5, grid=g, all_pairs_limit=10**9) + 1e-12


def test_clifford_inner_product():
    g = square(5)
    e1 = constant_field(Multivector.generator(2, 1), g)
    e2 = constant_field(Multivector.generator(2, 2), g)
    vol = g.size * g.cell_volume
    # conj(e1) e1 = -e1 e1 = 1
    assert clifford_inner_product(e1, e1) == Multivector.scalar(2, vol)
    # conj(e1) e2 = -e12
    assert np.allclose(clifford_inner_product(e1, e2).coeffs, [0, 0, 0, -vol])
    other = sample_field(lambda x: np.zeros(x.shape[:-1] + (4,)), square(6), vectorized=True)
    with pytest.raises(ValueError):
        clifford_inner_product(e1, other)
    assert isinstance(e1, CliffordField)
