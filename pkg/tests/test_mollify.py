import math

import numpy as np
import pytest
from scipy import integrate

from cliffmoll.algebra import Multivector
from cliffmoll.grid import EmptyDomainError, ball_domain, box_domain, build_grid, constant_field, sample_field
from cliffmoll.mollify import (MIN_EPS_CELLS, SmoothApproxError, UnderResolvedError, auto_layers, bump,
                               convolve, global_smooth_approx, kernel_constant, layer_decomposition,
                               make_kernel, mollify_clifford, mollify_scalar, partition_of_unity, phi,
                               smooth_step, smoothness_report)

# int_{|x|<1} exp(1/(|x|^2-1)) dx from 30-digit mpmath quadrature
BUMP_INTEGRALS = {
    1: 0.443993816168079437823,
    2: 0.466512393178330068880,
    3: 0.4410888872766044004563,
}
KERNEL_CONSTANTS = {1: 2.25228362104358101050, 2: 2.14356577579223660100}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_kernel_constant_against_frozen_integrals(n):
    assert kernel_constant(n) * BUMP_INTEGRALS[n] == pytest.approx(1.0, abs=1e-12)
    if n in KERNEL_CONSTANTS:
        assert kernel_constant(n) == pytest.approx(KERNEL_CONSTANTS[n], rel=1e-12)


def test_bump_integral_n1_with_mpmath():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 25
    val = mpmath.quad(lambda x: mpmath.exp(1 / (x * x - 1)), [-1, 0, 1])
    assert float(val) == pytest.approx(BUMP_INTEGRALS[1], rel=1e-15)


def test_bump_support_and_symmetry():
    assert bump(np.array([1.0, 1.5]))[0] == 0.0
    x = np.array([[0.3, -0.2], [-0.3, 0.2]])
    v = phi(x, 0.5)
    assert v[0] == v[1] > 0
    assert phi(np.array([[0.6, 0.0]]), 0.5)[0] == 0.0
    # phi_eps(x) = eps^-n phi(x / eps)
    assert phi(np.array([[0.1, 0.1]]), 0.5)[0] == pytest.approx(4 * phi(np.array([[0.2, 0.2]]))[0])


@pytest.mark.parametrize("n,h", [(1, 1 / 64), (2, 1 / 48), (3, 1 / 24)])
def test_discrete_mass(n, h):
    assert abs(make_kernel(n, 1.0, h).mass - 1.0) <= 1e-6


def test_radial_quadrature_mass_2d():
    k = kernel_constant(2)
    val, _ = integrate.dblquad(lambda r, t: k * bump(np.array(r * r)) * r, 0, 2 * math.pi, 0, 1)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_constant_reproduced_on_shrunk_domain():
    d = ball_domain([0.0, 0.0], 1.0)
    g = build_grid([-1.1, -1.1], [1.1, 1.1], 101)
    one = constant_field(Multivector(2, [2.0, -1.0, 0.5, 3.0]), g, d)
    for eps in (0.4, 0.2, 0.1):
        out = mollify_clifford(one, eps, d)
        assert out.mask.any()
        assert np.max(np.abs(out.data[out.mask] - one.data[out.mask])) <= 1e-10
        assert np.all(np.isnan(out.data[~out.mask]))


def test_linear_field_reproduced():
    # symmetric kernel: mollification preserves affine functions
    d = box_domain([-1, -1], [1, 1])
    g = build_grid([-1, -1], [1, 1], 81)
    u = 2 * g.nodes()[..., 0] - g.nodes()[..., 1] + 0.5
    out, inside = mollify_scalar(u, g, 0.2, d)
    assert np.allclose(out[inside], u[inside], atol=1e-12)


def test_second_order_on_fixed_region():
    d = ball_domain([0.0, 0.0], 1.0)
    g = build_grid([-1.1, -1.1], [1.1, 1.1], 256)
    u = np.sin(g.nodes()[..., 0])
    common = None
    errs = []
    for eps in (0.4, 0.2, 0.1):
        out, inside = mollify_scalar(u, g, eps, d)
        common = inside if common is None else common
        errs.append(np.max(np.abs(out - u)[common]))
    slope = np.polyfit(np.log([0.4, 0.2, 0.1]), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_under_resolved_and_empty():
    d = ball_domain([0.0, 0.0], 1.0)
    g = build_grid([-1.1, -1.1], [1.1, 1.1], 41)
    u = np.ones(g.dims)
    with pytest.raises(UnderResolvedError):
        mollify_scalar(u, g, (MIN_EPS_CELLS - 1) * g.h, d)
    with pytest.raises(EmptyDomainError):
        mollify_scalar(u, g, 1.0, d)
    with pytest.raises(ValueError):
        make_kernel(2, 0.0, 0.1)


def test_convolve_commutes_with_translation():
    g = build_grid([0, 0], [1, 1], 64)
    rng = np.random.default_rng(0)
    u = np.zeros(g.dims)
    u[20:40, 20:40] = rng.normal(size=(20, 20))
    a = convolve(u, g, 0.08)
    b = convolve(np.roll(u, 3, axis=0), g, 0.08)
    assert np.allclose(np.roll(a, 3, axis=0), b, atol=1e-13)


def test_mollified_field_is_smooth():
    d = ball_domain([0.0, 0.0], 1.0)
    g = build_grid([-1.1, -1.1], [1.1, 1.1], 128)
    step = sample_field(lambda x: np.stack([(x[..., 0] > 0).astype(float)] + [0 * x[..., 0]] * 3, -1),
                        g, d, vectorized=True)
    out = mollify_clifford(step, 0.3, d)
    rep = smoothness_report(out, max_order=2)
    raw = smoothness_report(step.data, g, out.mask, max_order=1)
    assert rep.max_derivative[1] < raw.max_derivative[1] / 3
    assert set(rep.max_derivative) == {1, 2}


def test_smooth_step_profile():
    t = np.linspace(-2, 2, 401)
    s = smooth_step(t)
    assert np.all(s[t <= -1] == 0) and np.all(s[t >= 1] == 1)
    assert np.all(np.diff(s) >= -1e-15)
    assert s[200] == pytest.approx(0.5, abs=1e-12)


def test_layers_cover_and_partition_sums_to_one():
    d = ball_domain([0.0, 0.0], 1.0)
    g = build_grid([-1.4, -1.4], [1.4, 1.4], 400)
    ld = layer_decomposition(d, g, 2)
    assert not ld.uncovered().any()
    pou = partition_of_unity(ld)
    total = np.sum(pou.weights, axis=0)
    assert np.allclose(total[d.mask(g)], 1.0)
    dist = ld.distance()
    for layer, w in zip(ld.layers, pou.weights):
        support = w > 0
        assert np.all(layer.contains(dist[support]))
    open_ld = layer_decomposition(d, g, 2, closed=False)
    assert open_ld.uncovered().any()
    with pytest.raises(UnderResolvedError):
        layer_decomposition(d, build_grid([-1.4, -1.4], [1.4, 1.4], 40), 3)


def test_auto_layers_grows_with_resolution():
    coarse = build_grid([-1.4, -1.4], [1.4, 1.4], 128)
    fine = build_grid([-1.4, -1.4], [1.4, 1.4], 600)
    assert auto_layers(coarse) == 0
    assert auto_layers(fine) >= 2


def sin_field(res):
    d = ball_domain([0.0, 0.0], 1.0)
    g = build_grid([-1.4, -1.4], [1.4, 1.4], res)
    f = sample_field(lambda x: np.stack([np.sin(x[..., 0])] + [0 * x[..., 0]] * 3, -1), g, d, vectorized=True)
    return f, d


def test_global_smooth_approx_meets_budget():
    f, d = sin_field(160)
    res = global_smooth_approx(f, d, 0.1)
    assert res.achieved <= 0.1
    assert res.bound <= 0.1
    for row in res.rows:
        assert row.attained <= row.budget
        assert row.budget == pytest.approx(0.1 / 4 / 2 ** (row.layer + 1))
    half = global_smooth_approx(f, d, 0.05)
    assert [r.budget for r in half.rows] == pytest.approx([r.budget / 2 for r in res.rows])


def test_global_smooth_approx_with_layers():
    f, d = sin_field(400)
    res = global_smooth_approx(f, d, 40.0)
    assert res.m == 1
    assert res.achieved <= res.bound <= 40.0
    assert {r.layer for r in res.rows} == {0, 1}


def test_global_smooth_approx_reports_failure():
    f, d = sin_field(64)
    with pytest.raises(SmoothApproxError) as info:
        global_smooth_approx(f, d, 1e-12)
    rows = info.value.rows
    assert rows and rows[-1].attained > rows[-1].budget
    with pytest.raises(ValueError):
        global_smooth_approx(f, d, -1.0)
