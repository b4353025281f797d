import math

import numpy as np
import pytest

from cliffmoll.algebra import GradientPotential, Multivector
from cliffmoll.dirac import (CalibrationError, DiracConfig, annulus_residual, apply_dirac, ball_volume,
                             calibrate_kernel, cauchy_kernel, check_regular, kernel_field, kernel_vectors,
                             sphere_area)
from cliffmoll.grid import build_grid, sample_field, vector_field
from cliffmoll.norms import StencilError


def test_sphere_area_and_ball_volume():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_dirac_of_position_is_minus_n():
    for n in (2, 3):
        g = build_grid([-1] * n, [1] * n, 7)
        cfg = DiracConfig(GradientPotential.zero(n))
        for side in ("left", "right"):
            d = apply_dirac(vector_field(g), cfg, side)
            assert np.allclose(d.data[d.mask], Multivector.scalar(n, -n).coeffs)
            # boundary nodes lack a stencil
            assert not d.mask[(0,) * n]


def test_left_and_right_differ_on_bivectors():
    g = build_grid([-1, -1], [1, 1], 9)
    cfg = DiracConfig(GradientPotential.zero(2))
    # f = x1 e12: D f = e1 e12 = -e2, f D = e12 e1 = e2
    f = sample_field(lambda x: np.stack([0 * x[..., 0]] * 3 + [x[..., 0]], -1), g, vectorized=True)
    left = apply_dirac(f, cfg, "left")
    right = apply_dirac(f, cfg, "right")
    assert np.allclose(left.data[left.mask], [0, 0, -1, 0])
    assert np.allclose(right.data[right.mask], [0, 0, 1, 0])
    with pytest.raises(ValueError):
        apply_dirac(f, cfg, "middle")


def test_potential_term():
    # D_gamma acting on exp(c.x) e0 vanishes exactly in the continuum
    c = (0.3, -0.2)
    cfg = DiracConfig(GradientPotential(c))
    errs = []
    for res in (33, 65):
        g = build_grid([-1, -1], [1, 1], res)
        f = sample_field(lambda x: np.stack([np.exp(x @ np.array(c))] + [0 * x[..., 0]] * 3, -1),
                         g, vectorized=True)
        errs.append(check_regular(f, cfg).max_residual)
    assert errs[1] < errs[0] / 3.5


def test_strict_stencil():
    g = build_grid([-1, -1], [1, 1], 5)
    cfg = DiracConfig(GradientPotential.zero(2))
    with pytest.raises(StencilError):
        apply_dirac(vector_field(g), cfg, strict=True)


def test_calibrated_kernel_value():
    cfg = calibrate_kernel(2)
    assert cfg.omega_n == pytest.approx(2 * math.pi)
    assert cfg.kernel_sign == -1
    assert cfg.boundary_sign == -1
    psi = cauchy_kernel(np.array([1.0, 0.0]), cfg)
    assert np.allclose(psi.coeffs, [0.0, -1 / (2 * math.pi), 0.0, 0.0])
    # Psi is odd
    assert np.allclose(kernel_vectors(np.array([-0.3, 0.4]), cfg), -kernel_vectors(np.array([0.3, -0.4]), cfg))
    with pytest.raises(ValueError):
        kernel_vectors(np.zeros(2), cfg)


def test_calibration_with_potential_keeps_every_candidate():
    cfg = calibrate_kernel(2, GradientPotential((0.3, -0.2)))
    rows = cfg.residuals["rows"]
    assert len(rows) == 8
    assert {(r.kernel_sign, r.omega_name, r.boundary_sign) for r in rows} == {
        (s, o, b) for s in (-1, 1) for o in ("sphere-area", "ball-volume") for b in (-1, 1)}
    best = min((r for r in rows if r.kernel_sign == cfg.kernel_sign), key=lambda r: r.reconstruction_error)
    assert best.reconstruction_error <= 0.05
    assert cfg.kernel_sign == 1
    assert not cfg.residuals["tie"]


def test_calibration_n3():
    cfg = calibrate_kernel(3)
    assert cfg.omega_n == pytest.approx(4 * math.pi)
    assert cfg.residuals["reconstruction_error"] < 1e-3


def test_calibration_failure_lists_rows():
    with pytest.raises(CalibrationError) as info:
        calibrate_kernel(2, residual_tol=1e-9)
    assert len(info.value.rows) == 8


@pytest.mark.parametrize("c", [(0.0, 0.0), (0.3, -0.2)])
@pytest.mark.parametrize("side", ["left", "right"])
def test_fundamental_solution_second_order(c, side):
    cfg = calibrate_kernel(2, GradientPotential(c))
    hs = [1 / 32, 1 / 64, 1 / 128]
    res = [annulus_residual(cfg, h, side=side) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(res), 1)[0]
    assert abs(slope - 2) <= 0.3


def test_wrong_sign_is_not_regular():
    good = calibrate_kernel(2, GradientPotential((0.3, -0.2)))
    bad = DiracConfig(good.potential, -good.kernel_sign, good.omega_n, good.boundary_sign)
    assert annulus_residual(bad, 1 / 64) > 20 * annulus_residual(good, 1 / 64)


def test_kernel_field_masks_the_source():
    cfg = calibrate_kernel(2)
    g = build_grid([-1, -1], [1, 1], 5)
    f = kernel_field(g, cfg)
    assert not f.mask[2, 2]
    assert np.all(np.isnan(f.data[2, 2]))
    with pytest.raises(ValueError):
        DiracConfig(GradientPotential.zero(2), kernel_sign=0)
