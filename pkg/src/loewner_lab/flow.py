"""Forward chordal and radial Loewner evolution.

Chordal flows use the exact segment maps of :mod:`loewner_lab._kernels`:
on each linear piece of the driving function the centered equation
``f' = 2/f - m`` is solved implicitly through its first integral.  The
radial equation has no such integral and is integrated with the
Dormand-Prince controller of :mod:`loewner_lab.ode`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .driving import DrivingFunction
from .errors import (
    DomainError,
    GeometryError,
    MalformedInputError,
    NonSimpleTraceError,
    NumericalAccuracyError,
)
from .hulls import SlitHull
from .ode import dopri5


@dataclass(frozen=True)
class FlowConfig:
    """Tolerances shared by the flow operations.

    Attributes
    ----------
    swallow_rel : float
        A point ``z`` is dead once ``|f_t(z)| < swallow_rel * (1 + |z|)``.
    rtol, atol : float
        Tolerances of the adaptive integrator (radial flow).
    lift_off : float
        Lift-off factor ``y0 = lift_off * sqrt(resolution)`` for the
        radial reverse flow.
    simple_tol : float
        Relative distance below which two non-adjacent trace samples are
        treated as touching.
    hcap_rtol : float
        Relative tolerance of the capacity cross-check.
    """

    swallow_rel: float = 1e-6
    rtol: float = 1e-9
    atol: float = 1e-12
    lift_off: float = 1e-4
    simple_tol: float = 1e-3
    hcap_rtol: float = 1e-4


DEFAULT_CONFIG = FlowConfig()


@dataclass(frozen=True, eq=False)
class FlowState:
    """Centered positions ``f_T(z)`` of marked points.

    ``tau`` holds swallowing times (nan for alive points) and
    ``tau_bracket`` the interval in which the swallowing was detected.
    """

    time: float
    labels: tuple
    positions: np.ndarray
    alive: np.ndarray
    tau: np.ndarray
    tau_bracket: np.ndarray
    driving_value: float

    @property
    def w(self) -> np.ndarray:
        """``cot(arg f_T(z))`` for alive points (nan for dead ones)."""
        p = self.positions
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(self.alive, p.real / p.imag, np.nan)
        return out


@dataclass(frozen=True, eq=False)
class CurveSample:
    """Curve samples in capacity parametrization (``hcap(gamma[0,t]) = 2t``)."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        p = np.asarray(self.points, dtype=complex).ravel()
        if t.size != p.size or t.size == 0:
            raise MalformedInputError("times and points must have equal nonzero length")
        if np.any(np.diff(t) <= 0):
            raise MalformedInputError("curve times must be increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re", "im"])
        for t, z in zip(self.times, self.points):
            w.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CurveSample":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "re", "im"]:
            raise MalformedInputError("curve CSV must have header 't,re,im'")
        try:
            data = [(float(r[0]), float(r[1]), float(r[2])) for r in rows[1:] if r]
        except (ValueError, IndexError) as exc:
            raise MalformedInputError(f"bad curve CSV row: {exc}") from exc
        t, x, y = (np.array(c) for c in zip(*data))
        return cls(t, x + 1j * y)

    def to_dict(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "re": [float(z.real) for z in self.points],
            "im": [float(z.imag) for z in self.points],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSample":
        try:
            return cls(d["times"], np.asarray(d["re"], float) + 1j * np.asarray(d["im"], float))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInputError("curve JSON needs 'times', 're', 'im'") from exc

    @classmethod
    def from_json(cls, text: str) -> "CurveSample":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise MalformedInputError(f"invalid JSON: {exc}") from exc


@dataclass(frozen=True, eq=False)
class WeldingPairs:
    """Boundary pairs ``(x_neg, x_pos)`` glued by ``f_T`` to one curve point.

    ``curve_time`` is the capacity time of the curve point; pairs outside
    the image of the curve (the ``f_T(x), f_T(-x)`` extension) carry
    ``on_curve = False`` and ``curve_time = 0``.
    """

    x_neg: np.ndarray
    x_pos: np.ndarray
    curve_time: np.ndarray
    on_curve: np.ndarray
    ratio_1: np.ndarray
    ratio_2: np.ndarray

    @property
    def phi(self):
        return self.x_pos, self.x_neg


# ---------------------------------------------------------------------------
# chordal flow


def flow_points(
    lam: DrivingFunction,
    points: Sequence[complex],
    T: float,
    config: FlowConfig = DEFAULT_CONFIG,
    labels: Sequence | None = None,
) -> FlowState:
    """Centered Loewner flow ``f_T(z)`` of marked points.

    Parameters
    ----------
    lam : DrivingFunction
    points : sequence of complex
        Points of the closed upper half-plane, none equal to 0.
    T : float
        Capacity time horizon.

    Returns
    -------
    FlowState
        Dead points carry their swallowing time ``tau``.
    """
    z = np.atleast_1d(np.asarray(points, dtype=complex)).copy()
    if np.any(z.imag < 0) or np.any(z == 0):
        raise DomainError("points must lie in the closed upper half-plane and differ from 0")
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    thr = config.swallow_rel * (1.0 + np.abs(z))
    if T > 0:
        m, h = lam.segments(T)
        out, tau, status = K.flow_forward(z, m, h, thr, 0.0)
        if status:
            raise NumericalAccuracyError("segment map failed to converge")
    else:
        out, tau = z, np.full(z.size, -1.0)
    alive = tau < 0
    tau = np.where(alive, np.nan, tau)
    # the analytic closest-approach time is exact up to the threshold scale
    half = 0.5 * (config.swallow_rel * (1.0 + np.abs(z))) ** 2
    bracket = np.column_stack([tau - half, tau + half])
    if labels is None:
        labels = tuple(range(z.size))
    return FlowState(float(T), tuple(labels), out, alive, tau, bracket, float(lam(T)))


def _check_simple(points: np.ndarray, tol: float):
    """Raise if two non-adjacent samples nearly coincide."""
    if points.size < 4:
        return
    pts = np.column_stack([points.real, points.imag])
    gaps = np.abs(np.diff(points))
    local = np.minimum(np.concatenate([[gaps[0]], gaps]), np.concatenate([gaps, [gaps[-1]]]))
    tree = cKDTree(pts)
    radius = tol * float(np.median(gaps))
    for i, j in tree.query_pairs(radius):
        if abs(i - j) > 2 and abs(points[i] - points[j]) < tol * min(local[i], local[j]):
            raise NonSimpleTraceError(f"trace samples {i} and {j} touch within tolerance")


def trace(
    lam: DrivingFunction,
    T: float | None = None,
    resolution: float = 1e-3,
    config: FlowConfig = DEFAULT_CONFIG,
) -> CurveSample:
    """Trace ``gamma`` sampled at capacity steps no larger than ``resolution``.

    Each sample ``gamma_t`` is the reverse-time flow of the tip ``0`` at
    time ``t`` down to time 0, computed exactly segment by segment.  The
    first sample is the base point 0.
    """
    if T is None:
        T = lam.horizon
    if T <= 0 or resolution <= 0:
        raise DomainError("horizon and resolution must be positive")
    fine = lam.refined(resolution, T)
    m, h = fine.segments(T)
    tips, status = K.trace_knots(m, h)
    if status:
        raise NumericalAccuracyError("reverse flow failed to converge")
    if np.any(tips[1:].imag <= 0):
        raise NonSimpleTraceError("trace touches the real line")
    _check_simple(tips[1:], config.simple_tol)
    times = np.concatenate([[0.0], np.cumsum(h)])
    return CurveSample(times, tips)


def reverse_flow_points(lam: DrivingFunction, w: Sequence[complex], T: float) -> np.ndarray:
    """Preimages ``f_T^{-1}(w)`` of points of the upper half-plane."""
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    m, h = lam.segments(T)
    out, status = K.flow_backward(w, m, h)
    if status:
        raise NumericalAccuracyError("reverse flow failed to converge")
    return out


def _chordal_hcap_check(curve: CurveSample, rtol: float):
    from .inverse import inverse_transform

    d = inverse_transform(curve.points)
    cap = 2.0 * d.horizon
    ref = 2.0 * curve.times[-1]
    if abs(cap - ref) > rtol * max(ref, 1e-300) + 1e-12:
        raise NumericalAccuracyError(
            f"capacity cross-check failed: timestamps give {ref}, inverse transform gives {cap}"
        )
    return cap


def hcap(obj, check: bool = True, config: FlowConfig = DEFAULT_CONFIG) -> float:
    """Half-plane capacity of a :class:`CurveSample` or :class:`SlitHull`.

    For a curve this is ``2 * times[-1]``; with ``check`` the value is
    compared against the capacity accumulated by the inverse transform.
    """
    if isinstance(obj, SlitHull):
        return obj.hcap()
    if isinstance(obj, CurveSample):
        if not np.all(np.isfinite(obj.points)):
            raise DomainError("unbounded curve")
        if check and obj.points.size > 1:
            _chordal_hcap_check(obj, config.hcap_rtol)
        return 2.0 * float(obj.times[-1])
    raise DomainError("hcap expects a CurveSample or SlitHull")


# ---------------------------------------------------------------------------
# welding


def _tip_images(m, h, t_grid, T):
    """Boundary images ``x-(t), x+(t)`` at time ``T`` of the tip at time ``t``."""
    knots = np.concatenate([[0.0], np.cumsum(h)])
    xm = np.empty(len(t_grid))
    xp = np.empty(len(t_grid))
    for i, t in enumerate(t_grid):
        k = int(np.searchsorted(knots, t, side="right")) - 1
        k = min(max(k, 0), m.size - 1)
        first = knots[k + 1] - t
        if first <= 0:
            mm, hh = m[k + 1 :], h[k + 1 :]
        else:
            mm = np.concatenate([[m[k]], m[k + 1 :]])
            hh = np.concatenate([[first], h[k + 1 :]])
        if hh.size == 0:
            xm[i] = xp[i] = 0.0
            continue
        xp[i], s1 = K.flow_forward_real_tip(mm, hh, 1)
        xm[i], s2 = K.flow_forward_real_tip(mm, hh, -1)
        if s1 or s2:
            raise NumericalAccuracyError("boundary flow failed to converge")
    return xm, xp


def welding(
    lam: DrivingFunction,
    T: float,
    grid: Sequence[float],
    xtol: float = 1e-12,
) -> WeldingPairs:
    """Conformal welding of ``gamma[0, T]`` at positive boundary points.

    For ``x`` in the image ``(0, x+(0)]`` of the right side of the curve,
    the curve time ``t`` with ``x+(t) = x`` is found by bisection and the
    partner is ``x-(t)``.  Beyond that interval the pairing is extended by
    ``f_T(y) <-> f_T(-y)``.  Lemma ratios: ``x / -phi(x)`` and, for the
    equally spaced triples ``(0, x, 2x)``, ``(phi(0) - phi(x)) / (phi(x) - phi(2x))``.
    """
    x = np.asarray(grid, dtype=float)
    if np.any(x <= 0):
        raise DomainError("welding grid must be positive")
    m, h = lam.segments(T)

    def pair(xv):
        _, xp0 = _tip_images(m, h, [0.0], T)
        if xv > xp0[0]:
            y, ok = K.backward_real(float(xv), m, h)
            if not ok:
                raise NumericalAccuracyError("boundary preimage left the real line")
            zneg, _, _ = K.flow_forward(np.array([complex(-y, 0.0)]), m, h, np.array([0.0]), 0.0)
            return zneg[0].real, 0.0, False
        lo, hi = 0.0, T
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            _, xp = _tip_images(m, h, [mid], T)
            if xp[0] > xv:
                lo = mid
            else:
                hi = mid
            if hi - lo <= xtol * max(T, 1.0):
                break
        else:
            raise NumericalAccuracyError("welding bisection did not converge", bracket=(lo, hi))
        t = 0.5 * (lo + hi)
        xm, _ = _tip_images(m, h, [t], T)
        return xm[0], t, True

    res = [pair(v) for v in x]
    xneg = np.array([r[0] for r in res])
    ct = np.array([r[1] for r in res])
    onc = np.array([r[2] for r in res])
    ratio1 = x / (-xneg)
    res2 = [pair(2 * v) for v in x]
    phi2 = np.array([r[0] for r in res2])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio2 = (0.0 - xneg) / (xneg - phi2)
    return WeldingPairs(xneg, x, ct, onc, ratio1, ratio2)


def welding_swallow_times(lam: DrivingFunction, T: float, pairs: WeldingPairs) -> np.ndarray:
    """Oracle: times at which the reverse boundary flow of each pair meets the curve.

    Running the real flow backward from ``T``, a boundary point ``x`` hits
    the tip (``|x| -> 0``) exactly at the capacity time of the curve point
    it is glued to.  Returns an array of shape ``(n, 2)``.
    """
    m, h = lam.segments(T)
    knots = np.concatenate([[0.0], np.cumsum(h)])
    out = np.empty((pairs.x_pos.size, 2))
    for i, (a, b) in enumerate(zip(pairs.x_neg, pairs.x_pos)):
        for c, x0 in enumerate((a, b)):
            v = float(x0)
            tm = 0.0
            for j in range(m.size - 1, -1, -1):
                # on a zero-slope-free piece Phi(x) decreases by 2s; tip reached when Phi = Phi(0)
                p = K.phi_diff(complex(v, 0.0), complex(-v, 0.0), m[j])
                s = -0.5 * p.real
                if 0.0 <= s <= h[j]:
                    tm = knots[j + 1] - s
                    break
                y, ok = K.backward_real(v, np.array([m[j]]), np.array([h[j]]))
                if not ok:
                    tm = knots[j + 1]
                    break
                v = y
            out[i, c] = tm
    return out


# ---------------------------------------------------------------------------
# radial flow


@dataclass(frozen=True, eq=False)
class RadialDriving:
    """Piecewise-linear driving function on the circle (angle ``xi(t)``)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.size == 0 or t.size != v.size or np.any(np.diff(t) <= 0) or t[0] != 0:
            raise MalformedInputError("radial driving needs increasing times from 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


def _radial_rhs(xi0, slope, t0, sign):
    def f(t, h, active):
        e = np.exp(1j * (xi0 + slope * (t - t0)))
        out = np.zeros_like(h)
        ha = h[active]
        out[active] = sign * ha * (ha + e) / (ha - e)
        return out

    return f


def radial_flow(
    xi: RadialDriving,
    points: Sequence[complex],
    T: float,
    config: FlowConfig = DEFAULT_CONFIG,
) -> FlowState:
    """Radial Loewner flow ``h_t(z)`` in the unit disk.

    Integrates ``dh/dt = -h (h + e^{i xi}) / (h - e^{i xi})`` piece by piece
    of the linear driving; a point dies when ``|h - e^{i xi}|`` falls
    below the swallowing threshold.
    """
    z = np.atleast_1d(np.asarray(points, dtype=complex)).copy()
    if np.any(np.abs(z) > 1 + 1e-12):
        raise DomainError("points must lie in the closed unit disk")
    thr = config.swallow_rel * (1.0 + np.abs(z))
    knots = np.unique(np.concatenate([xi.times[xi.times < T], [T]]))
    y = z
    dead = np.zeros(z.size, dtype=bool)
    tau = np.full(z.size, np.nan)
    bracket = np.full((z.size, 2), np.nan)
    for a, b in zip(knots[:-1], knots[1:]):
        xa, xb = xi(a), xi(b)
        slope = (xb - xa) / (b - a)
        idx = np.flatnonzero(~dead)
        if idx.size == 0:
            break

        def ev(t, hh, xa=xa, slope=slope, a=a, thr=thr[idx]):
            return np.abs(hh - np.exp(1j * (xa + slope * (t - a)))) < thr

        yy, hit, br = dopri5(_radial_rhs(xa, slope, a, -1.0), a, b, y[idx], config.rtol, config.atol, event=ev)
        y[idx] = yy
        if hit.any():
            j = idx[hit]
            dead[j] = True
            bracket[j] = br[hit]
            tau[j] = br[hit].mean(axis=1)
    return FlowState(float(T), tuple(range(z.size)), y, ~dead, tau, bracket, float(xi(T)))


def radial_trace(
    xi: RadialDriving,
    times: Sequence[float],
    config: FlowConfig = DEFAULT_CONFIG,
    resolution: float = 1e-3,
) -> np.ndarray:
    """Radial trace points ``gamma_t``: reverse radial flow from a lifted tip.

    The reverse flow starts at ``(1 - y0) e^{i xi(t)}`` with
    ``y0 = lift_off * sqrt(resolution)``.
    """
    y0 = config.lift_off * math.sqrt(resolution)
    out = np.empty(len(times), dtype=complex)
    for i, t in enumerate(times):
        p = np.array([(1.0 - y0) * np.exp(1j * xi(t))])
        knots = np.unique(np.concatenate([xi.times[xi.times < t], [t]]))[::-1]
        for b, a in zip(knots[:-1], knots[1:]):
            xb, xa = xi(b), xi(a)
            slope = (xb - xa) / (b - a)
            p, _, _ = dopri5(_radial_rhs(xa, slope, a, -1.0), b, a, p, config.rtol, config.atol)
        out[i] = p[0]
    return out
