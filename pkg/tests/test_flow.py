import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loewner_lab import (
    CurveSample,
    DomainError,
    DrivingFunction,
    NonSimpleTraceError,
    RadialDriving,
    SlitHull,
    flow_points,
    hcap,
    inverse_transform,
    one_point_minimizer,
    radial_flow,
    radial_trace,
    trace,
    welding,
)
from loewner_lab.flow import welding_swallow_times
from loewner_lab.minimizers import disk_map, radial_minimizer_driving

ZERO = DrivingFunction.zero(1.0)


def test_flow_i_swallowed_at_quarter():
    st_ = flow_points(ZERO, [1j], 0.25 + 1e-3)
    assert not st_.alive[0]
    assert abs(st_.tau[0] - 0.25) < 1e-6
    lo, hi = st_.tau_bracket[0]
    assert lo <= 0.25 <= hi


def test_flow_explicit_point():
    z = 1 + 1j
    st_ = flow_points(ZERO, [z], 10.0)
    assert st_.alive[0]
    assert abs(st_.positions[0] - np.sqrt(z * z + 40)) < 1e-6


def test_flow_boundary_point():
    for x in (0.3, 2.0):
        for T in (0.5, 7.0):
            st_ = flow_points(ZERO, [x], T)
            assert st_.alive[0] and abs(st_.positions[0] - math.sqrt(x * x + 4 * T)) < 1e-12


def test_flow_explicit_grid():
    rng = np.random.default_rng(1)
    z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(0.5, 3, 100)
    st_ = flow_points(ZERO, z, 0.1)
    ref = np.sqrt(z * z + 0.4)
    ref = np.where(ref.imag < 0, -ref, ref)
    assert np.max(np.abs(st_.positions - ref) / np.abs(ref)) < 1e-6


def test_flow_rejects_bad_points():
    with pytest.raises(DomainError):
        flow_points(ZERO, [0j], 1.0)
    with pytest.raises(DomainError):
        flow_points(ZERO, [1 - 1j], 1.0)


def test_flow_w_property():
    st_ = flow_points(ZERO, [1 + 1j], 0.5)
    p = st_.positions[0]
    assert st_.w[0] == pytest.approx(p.real / p.imag)


def test_trace_axis():
    cs = trace(ZERO, 1.0, 1e-3)
    assert abs(cs.points[-1] - 2j) < 1e-5
    assert np.max(np.abs(cs.points - 2j * np.sqrt(cs.times))) < 1e-10


def test_trace_minimizer_visits_point():
    lam = one_point_minimizer(math.pi / 3).driving
    cs = trace(lam, resolution=1e-3)
    assert np.min(np.abs(cs.points - np.exp(1j * math.pi / 3))) < 1e-3


def test_trace_reflection():
    lam = DrivingFunction([0.0, 1.0], [0.0, 1.0])
    a = trace(lam, resolution=1e-3).points
    b = trace(lam.mirrored(), resolution=1e-3).points
    assert np.max(np.abs(a + np.conj(b))) < 1e-6


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=1, max_size=5))
def test_trace_reflection_property(slopes):
    lam = DrivingFunction.from_slopes(slopes, [0.2] * len(slopes))
    a = trace(lam, resolution=1e-2).points
    b = trace(lam.mirrored(), resolution=1e-2).points
    assert np.max(np.abs(a + np.conj(b))) < 1e-8


def test_capacity_parametrization():
    lam = one_point_minimizer(math.pi / 3).driving
    cs = trace(lam, resolution=1e-3)
    for k in np.linspace(20, cs.times.size - 1, 10).astype(int):
        cap = 2 * inverse_transform(cs.points[: k + 1]).horizon
        assert abs(cap - 2 * cs.times[k]) <= 1e-4 * 2 * cs.times[k]
    assert hcap(cs) == pytest.approx(2 * cs.times[-1])


def test_swallowing_matches_trace_time():
    lam = DrivingFunction([0.0, 0.5, 1.0], [0.0, 0.5, -0.2])
    cs = trace(lam, resolution=1e-3)
    idx = [150, 400, 700]
    st_ = flow_points(lam, cs.points[idx], 1.0)
    assert not st_.alive.any()
    assert np.max(np.abs(st_.tau - cs.times[idx])) < 1e-4


def test_non_simple_samples_detected():
    # finite-energy traces are simple, so the detectors are exercised on synthetic input
    from loewner_lab.flow import _check_simple

    s = np.linspace(0.0, 1.0, 200)
    loop = 0.5j + 0.4 * np.exp(2j * np.pi * 1.1 * s) * 1j
    with pytest.raises(NonSimpleTraceError):
        _check_simple(loop, 1e-1)
    # the polyline returns to an earlier sample
    revisit = np.array([0.25j, 0.5j, 1j, 0.5 + 1j, 0.5 + 0.5j, 0.5j])
    with pytest.raises(NonSimpleTraceError):
        inverse_transform(revisit)


def test_hcap_half_disk_and_slit():
    assert abs(hcap(SlitHull.half_disk(0.0, 1.0)) - 1.0) < 1e-4
    h = 1.3
    # the explicit map sqrt(z^2 + h^2) = z + h^2/(2z) + ...
    assert hcap(SlitHull.vertical_slit(0.0, h)) == pytest.approx(h * h / 2, rel=1e-10)
    K = SlitHull.vertical_slit(0.4, 0.7)
    assert hcap(K.scaled(2.0)) == pytest.approx(4 * hcap(K), rel=1e-10)


def test_hcap_composed():
    K1 = SlitHull.vertical_slit(0.0, 1.0)
    K2 = SlitHull.vertical_slit(2.0, 0.5)
    # capacities add under composition
    assert hcap(SlitHull.compose(K1, K2)) == pytest.approx(0.5 + 0.125, rel=1e-9)


def test_hcap_rejects_unbounded():
    cs = CurveSample([0.0, 1.0], [0j, complex(np.inf, 1.0)])
    with pytest.raises(DomainError):
        hcap(cs)


def test_curve_sample_serialization():
    cs = trace(DrivingFunction([0.0, 0.3], [0.0, 0.2]), resolution=1e-2)
    for back in (CurveSample.from_csv(cs.to_csv()), CurveSample.from_json(cs.to_json())):
        assert np.array_equal(back.points, cs.points)


def test_radial_fixed_points():
    xi = RadialDriving([0.0, 2.0], [0.0, 0.0])
    st_ = radial_flow(xi, [0j, -1 + 0j], 2.0)
    assert abs(st_.positions[0]) < 1e-14
    assert abs(st_.positions[1] + 1) < 1e-12


def test_radial_minimizer_tip_reaches_origin():
    xi = radial_minimizer_driving(math.pi / 3, t_max=8.0)
    tip = radial_trace(xi, [8.0])
    assert abs(tip[0]) < 1e-3


def test_radial_minimizer_matches_chordal():
    th = math.pi / 3
    xi = radial_minimizer_driving(th, t_max=4.0)
    rt = radial_trace(xi, [0.5, 1.0, 2.0, 4.0])
    cs = trace(one_point_minimizer(th, step=1e-4).driving, resolution=1e-4)
    img = disk_map(th)(cs.points)
    for p in rt:
        assert np.min(np.abs(img - p)) < 5e-4


def test_welding_axis():
    w = welding(ZERO, 1.0, np.linspace(0.1, 2.0, 12))
    assert np.max(np.abs(w.x_neg + w.x_pos)) < 1e-6
    assert np.max(np.abs(w.ratio_1 - 1)) < 1e-6
    on = w.on_curve
    assert np.all(np.diff(w.curve_time[on]) < 0)


def test_welding_minimizer_oracle():
    lam = one_point_minimizer(math.pi / 3).driving
    T = lam.horizon
    w = welding(lam, T, np.linspace(0.05, 0.8, 8))
    assert np.all(w.x_neg < 0) and np.all(w.x_pos > 0)
    assert np.all(np.isfinite(w.ratio_1)) and np.all(np.isfinite(w.ratio_2))
    assert np.all((w.ratio_1 > 0) & (w.ratio_2 > 0))
    on = w.on_curve
    sw = welding_swallow_times(lam, T, w)
    assert np.max(np.abs(sw[on, 0] - sw[on, 1])) < 1e-5
    assert np.max(np.abs(sw[on, 0] - w.curve_time[on])) < 1e-5
