import math

import numpy as np
import pytest

from loewner_lab import (
    ConstraintSet,
    DomainError,
    DrivingFunction,
    compatible,
    energy,
    flow_points,
    minimize_constrained,
    multi_point_construction,
    one_point_minimizer,
    trace,
)
from loewner_lab.minimizers import (
    compatibility_report,
    grid_search_lower,
    hitting_time,
    minimal_energy,
    minimizer_state,
    radial_minimizer_driving,
)

ANGLES = [math.pi / 6, math.pi / 4, math.pi / 3, math.pi / 2, 2 * math.pi / 3]


def _distance_to_curve(lam, z, resolution=1e-4):
    pts = trace(lam, resolution=resolution).points
    return float(np.min(np.abs(pts - z)))


@pytest.mark.parametrize("theta", ANGLES)
def test_one_point_energy(theta):
    res = one_point_minimizer(theta)
    assert abs(res.energy - minimal_energy(theta)) <= 1e-3
    assert res.energy == pytest.approx(energy(res.driving).total, abs=1e-14)


def test_right_angle_is_zero_driver():
    res = one_point_minimizer(math.pi / 2)
    assert np.all(res.driving.values == 0.0)
    assert res.energy == 0.0
    assert res.hitting_times[0] == pytest.approx(0.25, abs=1e-15)


def test_pi_over_six_energy():
    assert one_point_minimizer(math.pi / 6).energy == pytest.approx(8 * math.log(2), abs=1e-3)


def test_pi_over_three_visits_point():
    res = one_point_minimizer(math.pi / 3)
    assert res.energy == pytest.approx(-8 * math.log(math.sqrt(3) / 2), abs=1e-3)
    assert _distance_to_curve(res.driving, np.exp(1j * math.pi / 3)) <= 1e-3


def test_minimizer_swallows_target_at_hitting_time():
    theta = math.pi / 4
    res = one_point_minimizer(theta)
    lam = res.driving
    assert lam.horizon == pytest.approx(hitting_time(theta), abs=1e-15)
    cs = ConstraintSet(((np.exp(1j * theta), 1),))
    assert compatibility_report(lam, cs, lam.horizon) == [("hit", True)]
    # shortly before the hit the point is still free
    assert compatibility_report(lam, cs, 0.9 * lam.horizon)[0][0] != "hit"


def test_scaled_target():
    res = one_point_minimizer(math.pi / 3, r=2.0)
    assert res.energy == pytest.approx(minimal_energy(math.pi / 3), abs=1e-3)
    assert res.hitting_times[0] == pytest.approx(4 * hitting_time(math.pi / 3))


@pytest.mark.parametrize("theta", [0.0, math.pi, -1.0])
def test_one_point_domain(theta):
    with pytest.raises(DomainError):
        one_point_minimizer(theta)


def test_remainder_energy():
    # 1/2 int_t^tau lambda'^2 = -8 ln sin(arg z_t) along the minimizer
    theta = math.pi / 3
    res = one_point_minimizer(theta, step=1e-4)
    lam = res.driving
    tau = lam.horizon
    total = energy(lam).total
    z = np.exp(1j * theta)
    for t in np.linspace(0.0, 0.95 * tau, 10):
        rem = total - energy(lam, t).total if t > 0 else total
        arg = theta if t == 0 else float(np.angle(flow_points(lam, [z], t).positions[0]))
        assert rem == pytest.approx(-8 * math.log(math.sin(arg)), abs=1e-3)


def test_minimizer_state_matches_flow():
    theta = math.pi / 3
    lam = one_point_minimizer(theta, step=1e-4).driving
    ts = np.array([0.02, 0.1, 0.2])
    phis, vals = minimizer_state(theta, ts)
    assert np.max(np.abs(vals - lam(ts))) <= 1e-6
    for t, p in zip(ts, phis):
        arg = float(np.angle(flow_points(lam, [np.exp(1j * theta)], t).positions[0]))
        assert arg == pytest.approx(p, abs=1e-6)


def test_radial_driving_examples():
    xi = radial_minimizer_driving(math.pi / 2, t_max=5.0)
    assert np.allclose(xi.values, math.pi / 2, atol=1e-15)
    xi = radial_minimizer_driving(math.pi / 3, t_max=2.0)
    assert math.cos(xi(math.log(2))) == pytest.approx(0.25, abs=1e-6)
    xi = radial_minimizer_driving(math.pi / 3, t_max=40.0)
    assert xi.values[-1] == pytest.approx(math.pi / 2, abs=1e-12)


def test_multi_point_single_point_matches():
    a = multi_point_construction([np.exp(1j * math.pi / 3)])
    b = one_point_minimizer(math.pi / 3)
    assert np.array_equal(a.driving.times, b.driving.times)
    assert np.array_equal(a.driving.values, b.driving.values)


def test_multi_point_visits_both():
    zs = [np.exp(1j * math.pi / 3), 2 * np.exp(1j * math.pi / 4)]
    res = multi_point_construction(zs)
    for z in zs:
        assert _distance_to_curve(res.driving, z) <= 1e-3
    assert res.energy >= minimal_energy(math.pi / 3) - 1e-9
    assert res.energy >= minimal_energy(math.pi / 4) - 1e-9
    assert math.isfinite(res.energy)


def test_multi_point_mirror_pair_both_orders():
    z = 0.5 + 1.2j
    pts = [z, -z.conjugate()]
    for order in ([0, 1], [1, 0]):
        res = multi_point_construction(pts, order=order)
        assert res.diagnostics["order"] == order
        assert compatible(res.driving, ConstraintSet(((z, 1), (-z.conjugate(), 1))), res.driving.horizon).all()


def test_multi_point_domain():
    with pytest.raises(DomainError):
        multi_point_construction([1j, 1j])
    with pytest.raises(DomainError):
        multi_point_construction([1.0 + 0j])


def test_compatible_examples():
    zero = DrivingFunction.zero(2.0)
    assert compatible(zero, ConstraintSet(((1 + 1j, 1),)), 2.0).all()
    assert not compatible(zero, ConstraintSet(((-1 + 1j, 1),)), 2.0).any()
    lam = one_point_minimizer(math.pi / 3).driving
    for side in (1, -1):
        cs = ConstraintSet(((np.exp(1j * math.pi / 3), side),))
        assert compatible(lam, cs, lam.horizon).all()


def test_constraint_set_validation():
    with pytest.raises(DomainError):
        ConstraintSet(((1.0 + 0j, 1),))
    with pytest.raises(DomainError):
        ConstraintSet(((1j, 0),))
    with pytest.raises(DomainError):
        ConstraintSet(((1j, 1), (1j, -1)))
    cs = ConstraintSet(((1 + 1j, 1),))
    assert cs.mirrored().points == ((-1 + 1j, -1),)
    assert cs.horizon() == pytest.approx(4.0)


def test_constrained_single_point():
    cs = ConstraintSet(((np.exp(1j * math.pi / 6), -1),))
    res = minimize_constrained(cs)
    assert res.energy == pytest.approx(8 * math.log(2), rel=0.02)
    assert res.energy >= minimal_energy(math.pi / 6) - 1e-2
    assert compatible(res.driving, cs, res.diagnostics["horizon"]).all()
    assert res.energy == pytest.approx(energy(res.driving).total, abs=1e-12)


@pytest.mark.parametrize("r, side", [(1.0, 1), (1.0, -1), (2.5, 1)])
def test_constrained_axis_point(r, side):
    cs = ConstraintSet(((1j * r, side),))
    res = minimize_constrained(cs)
    assert res.energy <= 1e-3
    # 3-knot brute-force oracle agrees
    assert grid_search_lower(cs, cs.horizon(), np.linspace(-1, 1, 5)) <= 1e-3


def test_grid_search_lower_is_upper_for_constrained():
    cs = ConstraintSet(((np.exp(1j * math.pi / 4), -1),))
    T = cs.horizon()
    g = grid_search_lower(cs, T, np.linspace(-4, 4, 9))
    # any compatible 3-knot driver costs at least the one-point optimum
    assert g >= minimal_energy(math.pi / 4) - 1e-9


def test_mirror_pair_two_minimizers():
    z = 0.6 + 1j
    cs = ConstraintSet(((z, -1), (-z.conjugate(), 1)))
    a = minimize_constrained(cs)
    b = minimize_constrained(cs, starts=[a.driving.mirrored()])
    assert b.energy == pytest.approx(a.energy, rel=0.01)
    # distinct drivers: one is the reflection of the other
    assert abs(a.driving.values[-1] + b.driving.values[-1]) < 0.05 * abs(a.driving.values[-1])
    assert abs(a.driving.values[-1]) > 0.1


def test_mirror_equivariance():
    cs = ConstraintSet(((np.exp(1j * math.pi / 6), -1),))
    a = minimize_constrained(cs)
    b = minimize_constrained(cs.mirrored())
    assert b.energy == pytest.approx(a.energy, rel=0.01)
    assert np.sign(b.driving.values[-1]) == -np.sign(a.driving.values[-1])


def test_constraint_monotonicity():
    z1 = np.exp(1j * math.pi / 4)
    z2 = 1.5 * np.exp(1j * math.pi / 3)
    small = ConstraintSet(((z1, -1),))
    big = ConstraintSet(((z1, -1), (z2, -1)))
    T = big.horizon()
    start = multi_point_construction([z1, z2]).driving
    a = minimize_constrained(small, T=T, starts=[start])
    b = minimize_constrained(big, T=T, starts=[start])
    assert b.energy >= a.energy - 0.02 * a.energy


def test_minimize_constrained_empty():
    with pytest.raises(DomainError):
        minimize_constrained(ConstraintSet(()))
