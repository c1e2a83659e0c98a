"""Loewner energy under domain restriction and the two-slit commutation relation.

For a hull ``K`` away from the curve, ``psi_t`` maps ``H minus f_t(K)`` onto
``H``, fixes 0 and infinity and satisfies ``psi_t(z) - z = O(1)``.  Its
derivatives at 0 are obtained by flowing a boundary parametrization of
``K`` with the centered Loewner flow, unzipping the flowed arc with the
exact segment maps and differentiating the composed map at the image of 0.

The energy of ``psi_0(gamma[0,t])`` is evaluated three ways:

* driving form ``1/2 int (W' - 3 psi_s''(0)/psi_s'(0))^2 ds``;
* Schwarzian form ``I(gamma) + 3 ln psi_0'(0) + 12 m - 3 ln psi_t'(0)``
  with the loop measure ``m = -(1/3) int S psi_s(0) ds``;
* directly, by unzipping the image curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C

from . import _kernels as K
from .driving import DrivingFunction, energy
from .errors import DomainError, GeometryError, NumericalAccuracyError
from .flow import flow_points
from .hulls import SlitHull
from .inverse import _head_times, inverse_transform, trace_at

DEFAULT_BOUNDARY = 400


# ---------------------------------------------------------------------------
# hull jets


def hull_arc(K_hull, n: int = DEFAULT_BOUNDARY) -> np.ndarray:
    """Boundary arc of a hull, starting at its base point on the real line.

    ``K_hull`` is an elementary :class:`SlitHull` or an explicit sampled
    arc (first sample real).  A half-disk arc stops one sample short of
    its second foot so that every non-base sample lies in ``H``.
    """
    if isinstance(K_hull, SlitHull):
        arc = K_hull.boundary(n)
        if K_hull.parts[0][0] == "disk":
            arc = arc[:-1]
    else:
        arc = np.asarray(K_hull, dtype=complex).ravel()
        if arc.size < 2 or abs(arc[0].imag) > 1e-14 or np.any(arc[1:].imag <= 0):
            raise DomainError("a hull arc starts on the real line and then stays in H")
    if abs(arc[0]) == 0.0:
        raise DomainError("the hull must be at positive distance from 0")
    return arc


def _polylines_cross(a: np.ndarray, b: np.ndarray) -> bool:
    """Whether two polylines have a pair of properly crossing segments."""
    p, r = a[:-1, None], (a[1:] - a[:-1])[:, None]
    q, u = b[None, :-1], (b[1:] - b[:-1])[None, :]

    def cross(x, y):
        return x.real * y.imag - x.imag * y.real

    den = cross(r, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = cross(q - p, u) / den
        v = cross(q - p, r) / den
    return bool(np.any((den != 0) & (s > 0) & (s < 1) & (v > 0) & (v < 1)))


def check_clear(K_hull, lam: DrivingFunction, t: float, n: int = DEFAULT_BOUNDARY, resolution: float = 1e-2):
    """Raise :class:`GeometryError` if ``gamma[0,t]`` meets the hull boundary.

    A simple curve crossing a slit swallows only the crossing point, which
    the flowed boundary samples rarely see, so the check is geometric.
    """
    if t <= 0:
        return
    arc = hull_arc(K_hull, n)
    pts = trace_at(lam, _sample_times(lam, t, resolution))
    if _polylines_cross(pts, arc):
        raise GeometryError("the trace meets the hull before the requested time")


def zipper_hcap(K_hull, n: int = DEFAULT_BOUNDARY) -> float:
    """Half-plane capacity of a hull by unzipping its boundary arc.

    Independent of the explicit map-out: the capacity is twice the total
    capacity time consumed by the zipper.
    """
    arc = hull_arc(K_hull, n)
    ms, hs, code, idx = K.zipper(np.ascontiguousarray(arc[1:] - arc[0].real))
    if code:
        raise GeometryError(f"hull boundary could not be unzipped at sample {idx}")
    return float(2.0 * hs.sum())


def _arc_jet(arc: np.ndarray):
    """``(psi', psi'', psi''')`` at 0 for the hull bounded by ``arc``."""
    base = arc[0].real
    pts = np.ascontiguousarray(arc[1:] - base)
    ms, hs, code, idx = K.zipper(pts)
    if code:
        raise GeometryError(f"flowed hull boundary could not be unzipped at sample {idx}")
    _, d1, d2, d3, status = K.forward_with_derivs(complex(-base, 0.0), ms, hs)
    if status:
        raise NumericalAccuracyError("segment map failed while differentiating at 0")
    return d1.real, d2.real, d3.real


def flowed_arc(K_hull, lam: DrivingFunction, t: float, n: int = DEFAULT_BOUNDARY) -> np.ndarray:
    """Boundary arc of ``K_t = f_t(K)`` in centered coordinates."""
    arc = hull_arc(K_hull, n)
    if t <= 0:
        return arc
    st = flow_points(lam, arc, t)
    if not np.all(st.alive):
        raise GeometryError("the trace meets the hull before the requested time")
    out = st.positions.copy()
    out[0] = out[0].real
    if out[0].real == 0.0:
        raise GeometryError("the hull base reached the tip")
    return out


def psi_jet(K_hull, lam: DrivingFunction, t: float, n: int = DEFAULT_BOUNDARY):
    """``(psi_t'(0), psi_t''(0), psi_t'''(0))``."""
    if t <= 0 and isinstance(K_hull, SlitHull):
        _, d1, d2, d3 = K_hull.derivatives(np.array([0.0 + 0.0j]))
        return float(d1[0].real), float(d2[0].real), float(d3[0].real)
    return _arc_jet(flowed_arc(K_hull, lam, t, n))


def schwarzian(d1, d2, d3):
    return d3 / d1 - 1.5 * (d2 / d1) ** 2


def psi_derivatives(K_hull, lam: DrivingFunction, t: float, n: int = DEFAULT_BOUNDARY):
    """``psi_t'(0)``, ``psi_t''(0)`` and the Schwarzian ``S psi_t(0)``.

    Parameters
    ----------
    K_hull : SlitHull or sequence of complex
        Hull at positive distance from 0 and from ``gamma[0,t]``.
    lam : DrivingFunction
    t : float
        Capacity time.
    n : int
        Boundary samples used for ``t > 0``.
    """
    check_clear(K_hull, lam, t, n)
    d1, d2, d3 = psi_jet(K_hull, lam, t, n)
    return d1, d2, schwarzian(d1, d2, d3)


def complex_step_derivative(K_hull: SlitHull, h: float = 1e-20) -> float:
    """``g_K'(0)`` by complex-step differentiation of the real map-out."""
    return float(K_hull.map_out(np.array([1j * h]))[0].imag / h)


# ---------------------------------------------------------------------------
# quadrature along the flow


def _cheb_nodes(T: float, deg: int) -> np.ndarray:
    k = np.arange(deg + 1)
    x = np.cos(math.pi * (k + 0.5) / (deg + 1))[::-1]
    return 0.5 * T * (x + 1.0)


def _jets_on_nodes(K_hull, lam, T, deg, n):
    s = _cheb_nodes(T, deg)
    jets = np.array([psi_jet(K_hull, lam, float(si), n) for si in s])
    return s, jets


@dataclass(frozen=True)
class FlowQuadrature:
    """Chebyshev interpolants of the jet along ``s in [0, T]``.

    ``ratio`` interpolates ``psi_s''(0)/psi_s'(0)`` and ``schwarz`` the
    Schwarzian ``S psi_s(0)``; ``tail`` estimates the interpolation error
    from the trailing coefficients.
    """

    T: float
    ratio: np.ndarray
    schwarz: np.ndarray
    log_d1: tuple
    tail: float
    nodes: int


def flow_quadrature(K_hull, lam: DrivingFunction, T: float, nodes: int = 32, n: int = DEFAULT_BOUNDARY):
    if T <= 0:
        raise DomainError("horizon must be positive")
    check_clear(K_hull, lam, T, n)
    deg = nodes - 1
    s, jets = _jets_on_nodes(K_hull, lam, T, deg, n)
    x = 2.0 * s / T - 1.0
    r = jets[:, 1] / jets[:, 0]
    S = schwarzian(jets[:, 0], jets[:, 1], jets[:, 2])
    cr = C.chebfit(x, r, deg)
    cs = C.chebfit(x, S, deg)
    scale = max(np.max(np.abs(S)), np.max(np.abs(r)), 1e-300)
    tail = float(max(np.max(np.abs(cr[-3:])), np.max(np.abs(cs[-3:]))) / scale)
    d0 = psi_jet(K_hull, lam, 0.0, n)[0]
    dT = psi_jet(K_hull, lam, T, n)[0]
    return FlowQuadrature(float(T), cr, cs, (math.log(abs(d0)), math.log(abs(dT))), tail, nodes)


def _integral(coef, T, a=0.0, b=None):
    """``int_a^b`` of the Chebyshev series ``coef`` on ``[0, T]``."""
    if b is None:
        b = T
    anti = C.chebint(coef) * (0.5 * T)
    xa, xb = 2.0 * np.asarray(a) / T - 1.0, 2.0 * np.asarray(b) / T - 1.0
    return C.chebval(xb, anti) - C.chebval(xa, anti)


def loop_measure(
    K_hull,
    lam: DrivingFunction,
    t: float,
    nodes: int = 32,
    n: int = DEFAULT_BOUNDARY,
    neg_tol: float = 1e-9,
    quad: FlowQuadrature | None = None,
) -> float:
    """Brownian loop measure of loops meeting both ``gamma[0,t]`` and ``K``.

    Computed as ``-(1/3) int_0^t S psi_s(0) ds`` with a Chebyshev
    interpolant of the Schwarzian.  The integrand ``-S/6`` is a capacity
    seen from 0 and must be nonnegative.
    """
    if t <= 0:
        return 0.0
    if quad is None:
        quad = flow_quadrature(K_hull, lam, t, nodes, n)
    s = _cheb_nodes(t, 200)
    vals = C.chebval(2.0 * s / t - 1.0, quad.schwarz)
    if np.max(vals) > neg_tol * max(1.0, np.max(np.abs(vals))):
        raise NumericalAccuracyError("Schwarzian at 0 became positive along the flow")
    return float(-_integral(quad.schwarz, t) / 3.0)


def _cross_terms(lam: DrivingFunction, T: float, coef) -> float:
    """``int_0^T W'(s) c(s) ds`` for piecewise-linear ``W``."""
    m, h = lam.segments(T)
    knots = np.concatenate([[0.0], np.cumsum(h)])
    return float(np.sum(m * _integral(coef, T, knots[:-1], knots[1:])))


def restricted_energy(
    K_hull,
    lam: DrivingFunction,
    t: float,
    nodes: int = 32,
    n: int = DEFAULT_BOUNDARY,
    quad: FlowQuadrature | None = None,
) -> float:
    """``1/2 int_0^t (W_s' - 3 psi_s''(0)/psi_s'(0))^2 ds``.

    This is the energy of ``psi_0(gamma[0,t])`` in ``(H, 0, infinity)``.
    ``K_hull=None`` stands for the empty hull.
    """
    base = energy(lam, t).total if t > 0 else 0.0
    if K_hull is None or t <= 0:
        return base
    if quad is None:
        quad = flow_quadrature(K_hull, lam, t, nodes, n)
    cross = _cross_terms(lam, t, quad.ratio)
    sq = _integral(C.chebmul(quad.ratio, quad.ratio), t)
    return float(base - 3.0 * cross + 4.5 * sq)


@dataclass(frozen=True)
class RestrictionReport:
    """Both restriction-identity evaluations at one time ``t``."""

    t: float
    energy: float
    log_psi0: float
    log_psit: float
    loop_measure: float
    driving_form: float
    schwarzian_form: float
    tail: float

    @property
    def residual(self) -> float:
        return self.driving_form - self.schwarzian_form

    def to_dict(self) -> dict:
        d = {k: float(getattr(self, k)) for k in self.__dataclass_fields__}
        d["residual"] = float(self.residual)
        return d


def restriction_identity(K_hull, lam: DrivingFunction, t: float, nodes: int = 32, n: int = DEFAULT_BOUNDARY):
    """Driving form against ``I + 3 ln psi_0' + 12 m - 3 ln psi_t'``."""
    quad = flow_quadrature(K_hull, lam, t, nodes, n)
    e = energy(lam, t).total
    ml = loop_measure(K_hull, lam, t, quad=quad)
    drv = restricted_energy(K_hull, lam, t, quad=quad)
    l0, lt = quad.log_d1
    sch = e + 3.0 * l0 + 12.0 * ml - 3.0 * lt
    return RestrictionReport(float(t), e, l0, lt, ml, drv, sch, quad.tail)


def map_out_arc(K_hull, z, n: int = DEFAULT_BOUNDARY) -> np.ndarray:
    """``g_K(z) - g_K(0)`` for points off the hull."""
    z = np.asarray(z, dtype=complex)
    if isinstance(K_hull, SlitHull):
        g = K_hull.map_out(z)
        return g - K_hull.map_out(np.array([0.0 + 0.0j]))[0]
    arc = hull_arc(K_hull, n)
    base = arc[0].real
    ms, hs, code, idx = K.zipper(np.ascontiguousarray(arc[1:] - base))
    if code:
        raise GeometryError(f"hull boundary could not be unzipped at sample {idx}")
    out = np.empty(z.size, dtype=complex)
    for j, zj in enumerate(z.ravel()):
        v, *_ = K.forward_with_derivs(zj - base, ms, hs)
        out[j] = v
    v0, *_ = K.forward_with_derivs(complex(-base, 0.0), ms, hs)
    return (out - v0).reshape(z.shape)


def image_curve_energy(K_hull, lam: DrivingFunction, t: float, resolution: float = 1e-3, n: int = DEFAULT_BOUNDARY) -> float:
    """Energy of ``psi_0(gamma[0,t])`` by unzipping the image curve."""
    if t <= 0:
        return 0.0
    times = _sample_times(lam, t, resolution)
    pts = trace_at(lam, times)
    img = map_out_arc(K_hull, pts, n)
    img = img.real + 1j * np.maximum(img.imag, 0.0)
    return energy(inverse_transform(img)).total


def _sample_times(lam: DrivingFunction, T: float, resolution: float) -> np.ndarray:
    """Uniform grid plus driving knots plus a geometric head near 0."""
    k = max(1, int(math.ceil(T / resolution - 1e-9)))
    grid = np.linspace(0.0, T, k + 1)[1:]
    knots = lam.times[(lam.times > 0) & (lam.times < T)]
    head = _head_times(min(resolution, grid[0]))
    head = head[head < grid[0]]
    return np.unique(np.concatenate([head, knots, grid]))


# ---------------------------------------------------------------------------
# two slits


@dataclass(frozen=True)
class TwoSlitConfig:
    """A curve ``gamma`` from 0 and a curve ``gamma~`` from infinity.

    ``W`` drives ``gamma``; ``U`` drives ``-1/gamma~``.  ``T`` and ``S`` are
    the capacity horizons of the two pieces.
    """

    W: DrivingFunction
    U: DrivingFunction
    T: float
    S: float
    separation_tol: float = 1e-3
    resolution: float = 2e-3
    nodes: int = 32

    def __post_init__(self):
        if self.T <= 0 or self.S < 0:
            raise DomainError("T must be positive and S nonnegative")
        if self.resolution <= 0 or self.nodes < 4:
            raise DomainError("resolution must be positive and nodes at least 4")

    def separation(self) -> float:
        """Distance between ``gamma^T`` and ``gamma~^S`` on their samples."""
        if self.S == 0:
            return math.inf
        a = trace_at(self.W, _sample_times(self.W, self.T, self.resolution))
        b = -1.0 / trace_at(self.U, _sample_times(self.U, self.S, self.resolution))
        return float(np.min(np.abs(a[:, None] - b[None, :])))

    def check(self):
        sep = self.separation()
        scale = max(math.sqrt(self.T), 1.0)
        if sep < self.separation_tol * scale:
            raise GeometryError(f"traces are not disjoint (distance {sep:.3g})")
        return sep


def far_curve_driving_end(W: DrivingFunction, t: float, U: DrivingFunction, S: float, resolution: float) -> float:
    """``U_S^t``: final driving value of ``-1/f_t(gamma~^S)``.

    ``gamma~^S = -1/trace(U)[0,S]`` is flowed by the centered flow of ``W``
    to time ``t`` and the inverted image is unzipped.
    """
    if S <= 0:
        return 0.0
    times = _sample_times(U, S, resolution)
    far = -1.0 / trace_at(U, times)
    if t > 0:
        st = flow_points(W, far, t)
        if not np.all(st.alive):
            raise GeometryError("the traces meet before the requested time")
        far = st.positions
    img = -1.0 / far
    img = img.real + 1j * np.maximum(img.imag, 0.0)
    return float(inverse_transform(img).values[-1])


def _restricted_pair_energy(W, T, U, S, resolution, nodes):
    """``1/2 int_0^T (W' + 6 U_S^t)^2 dt`` and the node values ``U_S^t``."""
    base = energy(W, T).total
    if S <= 0:
        return base, np.zeros(0)
    deg = nodes - 1
    s = _cheb_nodes(T, deg)
    vals = np.array([far_curve_driving_end(W, float(ti), U, S, resolution) for ti in s])
    coef = C.chebfit(2.0 * s / T - 1.0, vals, deg)
    cross = _cross_terms(W, T, coef)
    sq = _integral(C.chebmul(coef, coef), T)
    return float(base + 6.0 * cross + 18.0 * sq), vals


@dataclass(frozen=True)
class CommutationResult:
    lhs: float
    rhs: float
    residual: float
    energy_W: float
    energy_U: float
    restricted_W: float
    restricted_U: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "diagnostics"}
        d = {k: float(v) for k, v in d.items()}
        d["diagnostics"] = self.diagnostics
        return d


def commutation_check(config: TwoSlitConfig) -> CommutationResult:
    """Energy of the two slits added in either order.

    ``lhs = I(gamma~^S) + I_{H minus gamma~^S}(gamma^T)`` and ``rhs`` is the
    same with the roles exchanged by ``z -> -1/z``; the two agree exactly.
    """
    sep = config.check()
    W, U, T, S = config.W, config.U, config.T, config.S
    eW = energy(W, T).total
    eU = energy(U, S).total if S > 0 else 0.0
    rW, uvals = _restricted_pair_energy(W, T, U, S, config.resolution, config.nodes)
    if S > 0:
        rU, wvals = _restricted_pair_energy(U, S, W, T, config.resolution, config.nodes)
    else:
        rU, wvals = 0.0, np.zeros(0)
    lhs = eU + rW
    rhs = eW + rU
    diag = {
        "separation": sep,
        "U_S_t_nodes": uvals.tolist(),
        "W_T_s_nodes": wvals.tolist(),
    }
    return CommutationResult(lhs, rhs, lhs - rhs, eW, eU, rW, rU, diag)


def phi_ratio(U: DrivingFunction, s: float, radius: float | None = None, n: int = 64) -> float:
    """``phi_{s,0}''(0)/phi_{s,0}'(0)`` by Cauchy integrals on a small circle.

    ``phi_{s,0} = -1/f~_s(-1/z)`` with ``f~`` the centered flow of ``U``;
    the lower half of the circle is filled in by Schwarz reflection.
    """
    if s <= 0:
        return 0.0
    if radius is None:
        ext = np.max(np.abs(trace_at(U, _sample_times(U, s, 1e-2))))
        radius = 0.25 / (ext + abs(float(U(s))) + 1.0)
    th = (np.arange(n) + 0.5) * 2.0 * math.pi / n
    z = radius * np.exp(1j * th)
    up = z.imag > 0
    w = -1.0 / z[up]
    fw = flow_points(U, w, s).positions
    vals = np.empty(n, dtype=complex)
    vals[up] = -1.0 / fw
    vals[~up] = np.conj(vals[up][::-1])
    coef = np.fft.fft(vals) / n
    k = np.arange(n)
    a = coef * np.exp(-1j * k * th[0]) / radius ** k
    return float((2.0 * a[2] / a[1]).real)
