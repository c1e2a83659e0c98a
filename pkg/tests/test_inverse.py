import math

import numpy as np
import pytest

from loewner_lab import (
    CurveSample,
    DomainError,
    DrivingFunction,
    energy,
    inverse_transform,
    one_point_minimizer,
    rev_driving,
    reverse_curve,
    trace,
    zipper_decomposition,
)
from loewner_lab.inverse import tail_times, trace_at


def test_vertical_segment():
    pts = 2j * np.linspace(0.0, 1.0, 1001)[1:]
    lam = inverse_transform(pts)
    # hcap(i(0,2]) = 2, so the driver lives on [0, 1]
    assert lam.horizon == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(lam.values)) < 1e-3


def test_round_trip_minimizer():
    lam = one_point_minimizer(math.pi / 3).driving
    cs = trace(lam, resolution=1e-3)
    back = inverse_transform(cs)
    assert np.max(np.abs(back(cs.times) - lam(cs.times))) <= 1e-2


def test_mirror_input_negates():
    lam = DrivingFunction([0.0, 0.4, 1.0], [0.0, 0.3, -0.1])
    pts = trace(lam, resolution=1e-3).points
    a = inverse_transform(pts)
    b = inverse_transform(-np.conj(pts))
    assert np.max(np.abs(a.values + b.values)) < 1e-9


def test_round_trip_order():
    lam = DrivingFunction.from_callable(lambda t: np.sin(3 * t), 1.0, 1e-4)
    errs = []
    for r in (2e-2, 1e-2, 5e-3):
        ts = np.linspace(0.0, 1.0, int(round(1 / r)) + 1)[1:]
        d = inverse_transform(trace_at(lam, ts))
        errs.append(np.max(np.abs(d(ts) - lam(ts))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0)


def test_round_trip_curve():
    # a circular arc leaving 0 vertically
    s = np.linspace(0.0, 0.5 * math.pi, 400)[1:]
    pts = 1 - np.cos(s) + 1j * np.sin(s)
    lam = inverse_transform(pts)
    cs = trace_at(lam, lam.times[1:])
    assert np.max(np.abs(cs - pts)) <= 1e-2


def test_zipper_steps_sum():
    lam = one_point_minimizer(math.pi / 4).driving
    cs = trace(lam, resolution=1e-2)
    steps = zipper_decomposition(cs)
    assert all(s.capacity > 0 for s in steps)
    assert 2 * sum(s.capacity for s in steps) == pytest.approx(2 * cs.times[-1], rel=1e-9)
    assert sum(s.driving_increment for s in steps) == pytest.approx(lam.values[-1], abs=1e-9)


def test_reverse_axis():
    t = np.linspace(0.0, 1.0, 11)
    cs = CurveSample(t, 2j * np.sqrt(t))
    rev = reverse_curve(cs, 0.0)
    assert np.allclose(rev.real, 0.0)
    assert np.all(np.diff(rev.imag) > 0)
    assert rev[0] == pytest.approx(0.5j)


def test_reverse_marked_point():
    th = math.pi / 3
    lam = one_point_minimizer(th).driving
    cs = trace(lam, resolution=1e-3)
    rev = reverse_curve(cs, 1.0, driving=lam)
    assert np.min(np.abs(rev - np.exp(1j * (math.pi - th)))) < 1e-3


def test_reverse_involution():
    lam = DrivingFunction([0.0, 0.3, 0.6], [0.0, 0.4, 0.1])
    cs = trace(lam, resolution=1e-3)
    cs = CurveSample(cs.times[1:], cs.points[1:])
    once = reverse_curve(cs, 0.0)
    twice = reverse_curve(CurveSample(np.arange(once.size, dtype=float), once), 0.0)
    assert np.max(np.abs(np.sort_complex(twice) - np.sort_complex(cs.points))) < 1e-6


def test_rev_zero():
    rev = rev_driving(DrivingFunction.zero(1.0), 1.0, 10.0, 1e-2)
    assert np.max(np.abs(rev.values)) < 1e-9


def test_rev_energy_monotone_in_horizon():
    lam = DrivingFunction([0.0, 1.0], [0.0, 1.0])
    rev = rev_driving(lam, 1.0, 10.0, 1e-2)
    S = np.linspace(0.0, rev.horizon, 25)[1:]
    e = np.array([energy(rev, s).total for s in S])
    assert np.all(np.diff(e) >= -1e-15)


def test_rev_linear_coarse():
    lam = DrivingFunction([0.0, 1.0], [0.0, 1.0])
    e = energy(rev_driving(lam, 1.0, 10.0, 1e-2)).total
    assert abs(e - 0.5) / 0.5 < 0.1


def test_tail_times_shape():
    s = tail_times(1e-2, 10.0)
    assert s[0] == pytest.approx(1e-2) and s[-1] == pytest.approx(10.0)
    assert np.all(np.diff(s) > 0)


def test_rev_rejects_bad_horizon():
    with pytest.raises(DomainError):
        rev_driving(DrivingFunction.zero(1.0), 0.0, 1.0)
