"""Inverse Loewner transform (zipper), curve reversal and ``Rev(lambda)``.

The zipper maps out the curve one sample at a time.  The elementary map
is the flow of a driving function that is linear on the step: for a
target point ``w`` there is exactly one slope/duration pair whose tip is
``w`` (the tip argument decreases monotonically in the scaled duration),
so the fit is exact and the elementary maps are the same exact segment
maps used by :func:`loewner_flow.trace`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .driving import DrivingFunction, energy
from .errors import DomainError, NonSimpleTraceError, NumericalAccuracyError, ResolutionError
from .flow import CurveSample, reverse_flow_points


@dataclass(frozen=True)
class ZipperStep:
    """One elementary map of the zipper.

    ``tip`` is the image point mapped to 0, ``capacity`` the capacity-time
    increment and ``driving_increment`` the change of the driving value.
    """

    tip: complex
    capacity: float
    driving_increment: float


def _as_points(curve) -> np.ndarray:
    if isinstance(curve, CurveSample):
        pts = curve.points
    else:
        pts = np.asarray(curve, dtype=complex).ravel()
    # the base point itself carries no information
    start = 0
    while start < pts.size and abs(pts[start]) < 1e-14:
        start += 1
    return np.ascontiguousarray(pts[start:])


def zipper_steps(curve):
    """Slopes and durations of the elementary maps for a sampled arc."""
    pts = _as_points(curve)
    if pts.size == 0:
        raise DomainError("curve has no points off the base")
    if np.any(~np.isfinite(pts)):
        raise DomainError("curve samples must be finite")
    if pts[0].imag <= 0:
        raise NonSimpleTraceError("curve must leave the real line into the upper half-plane")
    m, h, code, idx = K.zipper(pts)
    if code == 1:
        raise NonSimpleTraceError(f"sample {idx} left the upper half-plane while unzipping (self-intersection)")
    if code == 2:
        gap = abs(pts[idx] - pts[idx - 1]) if idx > 0 else abs(pts[0])
        raise ResolutionError(
            f"slit fit failed at sample {idx}; refine the sampling", suggested_resolution=0.5 * gap
        )
    return m, h


def inverse_transform(curve) -> DrivingFunction:
    """Driving function of a sampled simple arc starting on the real line at 0.

    Parameters
    ----------
    curve : CurveSample or sequence of complex
        Samples of the arc in traversal order; a leading 0 is ignored.

    Returns
    -------
    DrivingFunction
        Knots at the accumulated capacity times of the samples.
    """
    m, h = zipper_steps(curve)
    return DrivingFunction.from_slopes(m, h)


def zipper_decomposition(curve) -> list[ZipperStep]:
    pts = _as_points(curve)
    m, h = zipper_steps(curve)
    return [ZipperStep(complex(p), float(hh), float(mm * hh)) for p, mm, hh in zip(pts, m, h)]


def tail_times(resolution: float, tail_capacity: float, growth: float = 0.05) -> np.ndarray:
    """Capacity offsets ``s`` sampling the vertical-ray tail after ``T``.

    The spacing is ``r`` next to the tip and grows like ``8 s^2 r`` so that
    the image under ``-1/z`` keeps capacity steps of order ``r``; far out
    it is capped at a geometric ratio ``1 + growth``.
    """
    if tail_capacity <= 0:
        return np.zeros(0)
    r = resolution
    s = [r]
    while s[-1] < tail_capacity:
        cur = s[-1]
        step = max(r, 8.0 * cur * cur * r)
        step = min(step, growth * cur) if step > r else step
        s.append(cur + max(step, r))
    s = np.array(s)
    s[-1] = tail_capacity
    if s.size > 1 and s[-1] <= s[-2]:
        s = s[:-1]
    return s


def _head_times(resolution: float, growth: float = 0.05) -> np.ndarray:
    """Geometric trace times in ``(r^2, r)`` near the base point.

    Matching the reversed-capacity spacing there would need ``O(r^-3)``
    samples; a geometric grid resolves the shape at ``O(log(1/r))`` cost.
    """
    r = resolution
    n = int(math.ceil(math.log(1.0 / r) / math.log1p(growth)))
    return r * (1.0 + growth) ** -np.arange(n, 0, -1)


def trace_at(lam: DrivingFunction, times) -> np.ndarray:
    """Trace points ``gamma_t`` at arbitrary capacity times."""
    times = np.asarray(times, dtype=float)
    T = float(times.max())
    m, h = lam.segments(T)
    knots = np.concatenate([[0.0], np.cumsum(h)])
    allt = np.union1d(knots, times)
    allt = allt[allt > 0]
    allt = np.concatenate([[0.0], allt])
    # slope of the piece containing each sub-interval
    idx = np.clip(np.searchsorted(knots, allt[:-1], side="right") - 1, 0, m.size - 1)
    mm = m[idx]
    hh = np.diff(allt)
    pos = np.searchsorted(allt, times)
    if pos.size * 4 < allt.size:
        tips, status = K.trace_selected(mm, hh, pos.astype(np.int64))
        if status:
            raise NumericalAccuracyError("reverse flow failed to converge")
        return tips
    tips, status = K.trace_knots(mm, hh)
    if status:
        raise NumericalAccuracyError("reverse flow failed to converge")
    return tips[pos]


def reverse_curve(
    curve: CurveSample,
    tail_capacity: float,
    driving: DrivingFunction | None = None,
    resolution: float | None = None,
    guard: float = 1e-12,
) -> np.ndarray:
    """Reversed curve ``-1/gamma`` including the analytic tail.

    After ``T = curve.times[-1]`` the driving is constant, so the rest of
    the curve is ``f_T^{-1}(2 i sqrt(s))``; it is sampled on
    :func:`tail_times` up to ``s = tail_capacity``.  The result starts at
    the image of the far tail (near 0) and ends at the image of the
    sample closest to the base point.
    """
    if tail_capacity < 0:
        raise DomainError("tail capacity must be nonnegative")
    T = float(curve.times[-1])
    if resolution is None:
        resolution = float(np.min(np.diff(curve.times))) if curve.times.size > 1 else 1e-3
    pts = curve.points
    if tail_capacity > 0:
        if driving is None:
            driving = inverse_transform(curve)
            T = driving.horizon
        s = tail_times(resolution, tail_capacity)
        tail = reverse_flow_points(driving, 2j * np.sqrt(s), T)
        pts = np.concatenate([pts, tail])
    small = np.abs(pts) < guard
    if small.any():
        n_trim = int(small.sum()) - int(abs(pts[0]) < guard)
        if n_trim > 0:
            warnings.warn(f"reverse_curve trimmed {n_trim} samples closer than {guard} to 0")
        pts = pts[~small]
    return (-1.0 / pts)[::-1]


def rev_driving(
    lam: DrivingFunction,
    T: float,
    tail_capacity: float,
    resolution: float = 1e-3,
) -> DrivingFunction:
    """``Rev(lambda)``: driving function of the reversed curve ``-1/gamma``.

    ``lambda`` is taken constant after ``T``.  The trace is sampled on a
    uniform grid of spacing ``resolution`` plus a geometric refinement
    near the base point, since those samples become the far end of the
    reversed curve.
    """
    if T <= 0:
        raise DomainError("horizon must be positive")
    n = max(1, int(math.ceil(T / resolution - 1e-9)))
    grid = np.linspace(0.0, T, n + 1)[1:]
    head = _head_times(resolution)
    head = head[head < grid[0]]
    times = np.concatenate([head, grid])
    pts = trace_at(lam, times)
    curve = CurveSample(np.concatenate([[0.0], times]), np.concatenate([[0.0], pts]))
    rev = reverse_curve(curve, tail_capacity, driving=lam, resolution=resolution)
    return inverse_transform(rev)


def convergence_table(lam: DrivingFunction, T: float, levels) -> list[dict]:
    """Forward versus reversed energy over ``(resolution, tail_capacity)`` levels.

    Rows carry the CSV columns ``resolution, tail_capacity, energy_fwd,
    energy_rev, rel_err``.
    """
    e_fwd = energy(lam, T).total
    rows = []
    for res, tail in levels:
        e_rev = energy(rev_driving(lam, T, tail, res)).total
        rel = abs(e_rev - e_fwd) / e_fwd if e_fwd > 0 else abs(e_rev)
        rows.append(
            {
                "resolution": float(res),
                "tail_capacity": float(tail),
                "energy_fwd": float(e_fwd),
                "energy_rev": float(e_rev),
                "rel_err": float(rel),
            }
        )
    return rows
