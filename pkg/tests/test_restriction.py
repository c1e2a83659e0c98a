import math

import numpy as np
import pytest

from loewner_lab import (
    DomainError,
    DrivingFunction,
    GeometryError,
    SlitHull,
    TwoSlitConfig,
    commutation_check,
    energy,
    inverse_transform,
    loop_measure,
    one_point_minimizer,
    psi_derivatives,
    restricted_energy,
    restriction_identity,
    zipper_hcap,
)
from loewner_lab.restriction import (
    complex_step_derivative,
    far_curve_driving_end,
    image_curve_energy,
    phi_ratio,
)

SLIT = SlitHull.vertical_slit(5.0, 1.0)
AXIS = DrivingFunction.zero(1.0)


def test_psi_at_zero_two_methods():
    d1, d2, s = psi_derivatives(SLIT, AXIS, 0.0)
    cs = complex_step_derivative(SLIT)
    assert abs(d1.real - cs) <= 1e-8 * abs(cs)
    # closed form: g(z) = x0 + sqrt((z - x0)^2 + h^2), g'(0) = x0 / sqrt(x0^2 + h^2)
    assert d1.real == pytest.approx(5.0 / math.sqrt(26.0), rel=1e-12)
    assert abs(d1.imag) < 1e-14


def test_psi_closed_form_second_derivative():
    x0, h = 5.0, 1.0
    r = math.sqrt(x0 * x0 + h * h)
    d1, d2, s = psi_derivatives(SLIT, AXIS, 0.0)
    # the branch at 0 has sqrt(x0^2 + h^2) = -r
    assert d2.real == pytest.approx(-h * h / r**3, rel=1e-10)


def test_psi_far_hull():
    d1, _, _ = psi_derivatives(SlitHull.vertical_slit(50.0, 1.0), AXIS, 0.0)
    assert abs(d1 - 1.0) <= 1e-3


def test_psi_zipper_matches_exact_at_positive_time():
    # at t > 0 the flowed hull is re-zipped; compare with t -> 0 limit
    d1a, d2a, sa = psi_derivatives(SLIT, AXIS, 0.0)
    d1b, d2b, sb = psi_derivatives(SLIT, AXIS, 1e-8)
    assert abs(d1a - d1b) <= 1e-6 * abs(d1a)
    assert abs(sa - sb) <= 1e-4 * abs(sa)


def test_psi_collision():
    # the trace of lambda = 4t ends near 3.1 + 1.3i, so it must cross the slit
    hull = SlitHull.vertical_slit(1.5, 3.0)
    with pytest.raises(GeometryError):
        psi_derivatives(hull, DrivingFunction([0.0, 1.0], [0.0, 4.0]), 1.0)


def test_phi_ratio_matches_driving():
    U = DrivingFunction([0.0, 0.05, 0.1], [0.0, 0.2, -0.1])
    for s in (0.03, 0.1):
        assert phi_ratio(U, s) == pytest.approx(-2.0 * float(U(s)), abs=1e-4)
    assert phi_ratio(U, 0.0) == 0.0


def test_zipper_hcap_examples():
    # hcap of the unit half-disk is 1, of a vertical slit of height h it is h^2 / 2
    assert zipper_hcap(SlitHull.half_disk(0.0, 1.0)) == pytest.approx(1.0, abs=1e-4)
    assert zipper_hcap(SlitHull.vertical_slit(5.0, 2.0)) == pytest.approx(2.0, rel=1e-10)


def test_loop_measure_zero_time():
    assert loop_measure(SLIT, AXIS, 0.0) == 0.0


def test_loop_measure_far_hull_monotone():
    vals = [loop_measure(SlitHull.vertical_slit(x0, 1.0), AXIS, 1.0) for x0 in (2.0, 3.0, 5.0, 10.0, 20.0)]
    assert all(v > 0 for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.02 * vals[0]


def test_loop_measure_mobius_invariance():
    # z -> c z / (c - z) with real c < 0 preserves H and fixes 0
    c = -4.0

    def mob(z):
        return c * z / (c - z)

    ys = np.linspace(0.0, 2.0, 501)[1:]
    img = mob(1j * ys)
    lam = inverse_transform(img)
    arc = mob(5.0 + 1j * np.linspace(0.0, 1.0, 401))
    a = loop_measure(SLIT, AXIS, 1.0)
    b = loop_measure(arc, lam, lam.horizon)
    assert b == pytest.approx(a, rel=0.01)


def test_restricted_energy_empty_hull():
    lam = one_point_minimizer(math.pi / 3).driving
    assert restricted_energy(None, lam, 0.15) == energy(lam, 0.15).total


def test_restriction_identity_axis():
    rep = restriction_identity(SLIT, AXIS, 1.0)
    assert rep.energy == 0.0
    assert rep.driving_form > 0
    assert rep.driving_form == pytest.approx(rep.schwarzian_form, rel=0.01)
    d = rep.to_dict()
    assert d["residual"] == pytest.approx(rep.residual)


def test_restriction_identity_curved():
    lam = one_point_minimizer(math.pi / 3).driving
    hull = SlitHull.vertical_slit(-3.0, 1.5)
    rep = restriction_identity(hull, lam, 0.15)
    assert rep.driving_form == pytest.approx(rep.schwarzian_form, rel=0.02)


def test_restriction_zipper_oracle():
    rep = restriction_identity(SLIT, AXIS, 1.0)
    z = image_curve_energy(SLIT, AXIS, 1.0, resolution=1e-3)
    assert z == pytest.approx(rep.driving_form, rel=0.02)


def test_log_psi_t_decreases():
    vals = [3 * math.log(abs(psi_derivatives(SLIT, AXIS, t)[0])) for t in (0.0, 2.0, 8.0, 32.0)]
    assert all(v < 0 for v in vals)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_far_hull_excess_vanishes():
    lam = DrivingFunction([0.0, 0.5, 1.0], [0.0, 0.3, 0.1])
    e = energy(lam).total
    ex = [restricted_energy(SlitHull.vertical_slit(x0, 1.0), lam, 1.0) - e for x0 in (3.0, 6.0, 12.0, 24.0)]
    assert all(abs(b) < abs(a) for a, b in zip(ex, ex[1:]))
    assert abs(ex[-1]) < 1e-3


# -- commutation -----------------------------------------------------------------


def _generic(resolution):
    W = one_point_minimizer(math.pi / 3, step=resolution).driving
    U = DrivingFunction([0.0, 0.1], [0.0, 0.05])
    return TwoSlitConfig(W, U, 0.15, 0.1, resolution=resolution)


def test_commutation_empty_second_slit():
    W = one_point_minimizer(math.pi / 3).driving
    res = commutation_check(TwoSlitConfig(W, DrivingFunction.zero(), 0.15, 0.0))
    assert abs(res.residual) <= 1e-6
    assert res.lhs == pytest.approx(energy(W, 0.15).total, abs=1e-12)


def test_commutation_mirror_symmetric():
    W = DrivingFunction([0.0, 0.1], [0.0, 0.05])
    res = commutation_check(TwoSlitConfig(W, W.mirrored(), 0.1, 0.1, resolution=4e-3))
    assert abs(res.residual) <= 1e-9 * max(abs(res.lhs), abs(res.rhs))


def test_commutation_generic_and_refines():
    coarse = commutation_check(_generic(4e-3))
    fine = commutation_check(_generic(2e-3))
    for r in (coarse, fine):
        assert abs(r.residual) <= 0.02 * max(abs(r.lhs), abs(r.rhs))
    assert abs(fine.residual) < abs(coarse.residual)
    assert fine.diagnostics["separation"] > 0


def test_far_curve_driving_end_at_zero_time():
    U = DrivingFunction([0.0, 0.1], [0.0, 0.05])
    W = DrivingFunction.zero(0.1)
    assert far_curve_driving_end(W, 0.0, U, 0.1, 2e-3) == pytest.approx(0.05, abs=1e-9)
    assert far_curve_driving_end(W, 0.05, U, 0.0, 2e-3) == 0.0


def test_two_slit_config_validation():
    W = DrivingFunction.zero(1.0)
    with pytest.raises(DomainError):
        TwoSlitConfig(W, W, 0.0, 1.0)
    with pytest.raises(DomainError):
        TwoSlitConfig(W, W, 1.0, 1.0, resolution=0.0)
    # a slit from 0 and one from infinity along the same axis collide
    with pytest.raises(GeometryError):
        TwoSlitConfig(DrivingFunction.zero(2.0), DrivingFunction.zero(2.0), 2.0, 2.0).check()
