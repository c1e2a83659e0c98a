"""Compiled kernels for Loewner flows driven by piecewise-linear functions.

On a segment where the driving function has constant slope ``m`` the
centered flow ``f_t = g_t - lambda_t`` obeys ``dz/ds = 2/z - m``.  The
equation has the first integral

    Phi(z(s)) = Phi(z(0)) + 2 s,
    Phi(z) = (4/m^2) * (-m z/2 - log(1 - m z/2)),

with ``Phi(z) = z^2/2`` for ``m = 0``.  Every map below solves that
relation with Newton's method, so a segment is crossed in one implicit
step with no time-discretisation error.  Differences of ``Phi`` are
evaluated in a cancellation-free form because the points of interest
range from the swallowing scale up to far-field images of a tail.
"""

import cmath
import math

import numpy as np
from numba import njit

_NEWTON_MAXIT = 60
_NEWTON_RTOL = 2e-15


@njit(cache=True)
def phi_diff(z0, dz, m):
    """Return ``Phi(z0 + dz) - Phi(z0)`` for slope ``m``."""
    a = 1.0 - 0.5 * m * z0
    q = 0.5 * m * dz / a
    aq = abs(q)
    if aq < 0.1:
        # S(q) = sum_{n>=2} q^(n-2)/n by Horner; the closed form cancels for small q
        nt = 2
        r = 1.0
        while r > 1e-17 and nt < 40:
            r *= aq
            nt += 1
        s = 1.0 / nt + 0.0j
        for n in range(nt - 1, 1, -1):
            s = s * q + 1.0 / n
    else:
        s = (-cmath.log(1.0 - q) - q) / (q * q)
    r = dz / a
    return z0 * r + r * r * s


@njit(cache=True)
def _newton(z0, m, c, dz):
    """Solve ``Phi(z0 + dz) - Phi(z0) = c`` for ``dz`` from a guess."""
    a = 1.0 - 0.5 * m * z0
    for _ in range(_NEWTON_MAXIT):
        z = z0 + dz
        d = phi_diff(z0, dz, m) - c
        q = 0.5 * m * dz / a
        deriv = z / (a * (1.0 - q))
        if deriv == 0.0:
            return dz, False
        step = d / deriv
        az = abs(z)
        if abs(step) > 0.5 * az and az > 0.0:
            step *= 0.5 * az / abs(step)
        dz = dz - step
        if abs(step) <= _NEWTON_RTOL * abs(z0 + dz):
            return dz, True
    # next to the fixed point 2/m the residual is roundoff-limited
    return dz, abs(step) <= 1e-10 * abs(z0 + dz)


@njit(cache=True)
def _newton_log(z0, m, c):
    """Solve the same relation near the fixed point ``2/m``.

    With ``v = 1 - m z/2`` and ``v = v0 e^d`` it reads
    ``v0 (e^d - 1) - d = m^2 c / 4``, which is well conditioned for ``|v0| < 1/2``.
    """
    v0 = 1.0 - 0.5 * m * z0
    k = 0.25 * m * m * c
    d = 0.0j
    for _ in range(_NEWTON_MAXIT):
        e = cmath.exp(d)
        g = v0 * (e - 1.0) - d - k
        gp = v0 * e - 1.0
        if gp == 0.0:
            break
        step = g / gp
        d = d - step
        if abs(step) <= _NEWTON_RTOL * (1.0 + abs(d)):
            ex = cmath.exp(d) - 1.0 if abs(d) > 1e-5 else d * (1.0 + d * (0.5 + d / 6.0))
            return -2.0 / m * v0 * ex, True
    return 0.0j, False


@njit(cache=True)
def _upper_sqrt(w):
    r = cmath.sqrt(w)
    if r.imag < 0.0:
        r = -r
    return r


@njit(cache=True)
def _substeps(z, m, h):
    """Substep count keeping the Newton guess inside its basin."""
    if m == 0.0:
        return 1
    if abs(z) * abs(z) < 16.0 * h:
        n = int(math.ceil(25.0 * m * m * h))
        return max(n, 1)
    return 1


@njit(cache=True)
def _forward_once(z0, m, h, side):
    """One forward step; ``side`` selects the root for real points."""
    if z0.imag == 0.0:
        sq = math.sqrt(z0.real * z0.real + 4.0 * h)
        if side == 0:
            side = 1 if z0.real > 0.0 else -1
        guess = complex(side * sq - m * h, 0.0)
    else:
        guess = _upper_sqrt(z0 * z0 + 4.0 * h) - m * h
    if m == 0.0:
        return guess, True
    if abs(1.0 - 0.5 * m * z0) < 0.5:
        dz, ok = _newton_log(z0, m, 2.0 * h)
    else:
        dz, ok = _newton(z0, m, 2.0 * h, guess - z0)
    z = z0 + dz
    if z0.imag == 0.0:
        z = complex(z.real, 0.0)
    elif z.imag < 0.0:
        # roundoff next to the boundary puts the point on it; a wrong root is far below
        if z.imag > -1e-9 * abs(z):
            z = complex(z.real, 0.0)
        else:
            ok = False
    return z, ok


@njit(cache=True)
def _substep(z, m):
    """Largest substep for which the drift ``m`` is a small perturbation."""
    a = abs(m)
    if a < 1e-150:
        # m^2 underflows; the drift is negligible on any finite step
        return math.inf
    return max(0.5 * abs(z) / a, 0.04 / (a * a))


@njit(cache=True)
def _adaptive(z0, m, h, side, forward):
    """Exact segment map in substeps of size :func:`_substep`, halving on failure."""
    if m == 0.0:
        if forward:
            return _forward_once(z0, m, h, side)
        return _backward_once(z0, m, h)
    z = z0
    rem = h
    shrink = 1.0
    while rem > 0.0:
        hs = min(rem, shrink * _substep(z, m))
        if rem - hs < 1e-3 * hs:
            hs = rem
        if forward:
            w, ok = _forward_once(z, m, hs, side)
        else:
            w, ok = _backward_once(z, m, hs)
        if not ok:
            shrink *= 0.5
            if shrink < 1e-12:
                return z0, False
            continue
        z = w
        rem -= hs
        if shrink < 1.0:
            shrink = min(1.0, 2.0 * shrink)
    return z, True


@njit(cache=True)
def forward_map(z0, m, h, side=0):
    """Image of ``z0`` under the centered flow across one segment.

    ``side`` (+1 or -1) is required only when ``z0 == 0`` and picks the
    right or left boundary image of the tip.  Returns ``(z, ok)``.
    """
    return _adaptive(z0, m, h, side, True)


@njit(cache=True)
def _backward_once(z, m, h):
    guess = _upper_sqrt(z * z - 4.0 * h) + m * h
    if m == 0.0:
        return guess, True
    if abs(1.0 - 0.5 * m * z) < 0.5:
        dz, ok = _newton_log(z, m, -2.0 * h)
    else:
        dz, ok = _newton(z, m, -2.0 * h, guess - z)
    w = z + dz
    if w.imag < 0.0:
        if w.imag > -1e-9 * abs(w):
            w = complex(w.real, 0.0)
        else:
            ok = False
    return w, ok


@njit(cache=True)
def backward_map(z, m, h):
    """Preimage of ``z`` under the centered flow across one segment."""
    return _adaptive(z, m, h, 0, False)


@njit(cache=True)
def swallow_check(z0, m, h, thr):
    """Time within the segment at which ``z0`` is swallowed, else -1.

    Along the flow ``Phi`` moves on a horizontal line, so the closest
    approach to the tip happens when ``Re Phi(z) = Phi(0)`` and there
    ``|z|^2 / 2 ~ |Im (Phi(0) - Phi(z0))|``.
    """
    if z0.imag == 0.0:
        return -1.0
    p = phi_diff(z0, -z0, m)
    s = 0.5 * p.real
    if s < 0.0 or s > h:
        return -1.0
    if math.sqrt(2.0 * abs(p.imag)) < thr:
        return s
    return -1.0


@njit(cache=True)
def flow_forward(z, ms, hs, thr, t_start):
    """Forward centered flow of many points across all segments.

    Returns final positions, swallowing times (-1 for alive points) and
    a status flag (0 ok, 1 Newton failure).
    """
    n = z.size
    out = z.copy()
    tau = np.full(n, -1.0)
    status = 0
    t = t_start
    for j in range(ms.size):
        m = ms[j]
        h = hs[j]
        for i in range(n):
            if tau[i] >= 0.0:
                continue
            s = swallow_check(out[i], m, h, thr[i])
            if s >= 0.0:
                tau[i] = t + s
                out[i] = 0.0j
                continue
            w, ok = forward_map(out[i], m, h, 0)
            if not ok:
                status = 1
            if abs(w) < thr[i] or (w.imag <= 0.0 < out[i].imag):
                # imaginary part underflowed: numerically on the curve
                tau[i] = t + h
                out[i] = 0.0j
            else:
                out[i] = w
        t += h
    return out, tau, status


@njit(cache=True)
def flow_forward_real_tip(ms, hs, side):
    """Forward flow of the boundary images ``0+`` or ``0-`` of a tip.

    ``ms, hs`` describe the driving after the tip time.  Returns the real
    image at the end and a status flag.
    """
    x = 0.0j
    status = 0
    for j in range(ms.size):
        if j == 0:
            x, ok = forward_map(x, ms[j], hs[j], side)
        else:
            x, ok = forward_map(x, ms[j], hs[j], 0)
        if not ok:
            status = 1
    return x.real, status


@njit(cache=True)
def flow_backward(z, ms, hs):
    """Backward flow from the end of the last segment to time 0."""
    n = z.size
    out = z.copy()
    status = 0
    for i in range(n):
        w = out[i]
        for j in range(ms.size - 1, -1, -1):
            w, ok = backward_map(w, ms[j], hs[j])
            if not ok:
                status = 1
        out[i] = w
    return out, status


@njit(cache=True)
def trace_knots(ms, hs):
    """Trace points at every knot: tip at knot k flowed back to time 0."""
    n = ms.size
    tips = np.zeros(n + 1, dtype=np.complex128)
    status = 0
    for k in range(1, n + 1):
        w = 0.0j
        for j in range(k - 1, -1, -1):
            w, ok = backward_map(w, ms[j], hs[j])
            if not ok:
                status = 1
        tips[k] = w
    return tips, status


@njit(cache=True)
def trace_selected(ms, hs, knots):
    """Trace points at the given knot indices only."""
    tips = np.zeros(knots.size, dtype=np.complex128)
    status = 0
    for i in range(knots.size):
        w = 0.0j
        for j in range(knots[i] - 1, -1, -1):
            w, ok = backward_map(w, ms[j], hs[j])
            if not ok:
                status = 1
        tips[i] = w
    return tips, status


@njit(cache=True)
def _tip_scaled(sigma):
    """Tip of a slope-2 segment of duration ``sigma`` (scaled units)."""
    w, ok = backward_map(0.0j, 2.0, sigma)
    return w


@njit(cache=True)
def fit_segment(w):
    """Linear-driving segment ``(m, h)`` whose tip is exactly ``w``.

    In scaled units the tip of a slope-2 segment of duration sigma has an
    argument decreasing from pi/2 to 0; solve ``arg tip = arg w`` and scale
    back.  Returns ``(m, h, ok)``.
    """
    sign = 1.0
    if w.real < 0.0:
        w = complex(-w.real, w.imag)
        sign = -1.0
    r = abs(w)
    alpha = math.atan2(w.imag, w.real)
    gap = 0.5 * math.pi - alpha
    if gap < 1e-12:
        return 0.0, 0.25 * r * r, True
    if alpha <= 0.0:
        return 0.0, 0.0, False
    lo = 0.0
    hi = 0.0
    sigma = 2.25 * gap * gap
    # bracket
    probe = sigma
    for _ in range(200):
        zeta = _tip_scaled(probe)
        if math.atan2(zeta.imag, zeta.real) < alpha:
            hi = probe
            break
        lo = probe
        probe *= 2.0
    if hi == 0.0:
        return 0.0, 0.0, False
    if sigma >= hi or sigma <= lo:
        sigma = 0.5 * (lo + hi)
    ok = False
    for _ in range(200):
        zeta = _tip_scaled(sigma)
        th = math.atan2(zeta.imag, zeta.real)
        f = th - alpha
        if f > 0.0:
            lo = sigma
        else:
            hi = sigma
        dzeta = -2.0 * (1.0 - zeta) / zeta
        dth = (dzeta / zeta).imag
        cand = sigma - f / dth if dth != 0.0 else 0.5 * (lo + hi)
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if abs(cand - sigma) <= 1e-15 * sigma or hi - lo <= 1e-15 * hi:
            sigma = cand
            ok = True
            break
        sigma = cand
    zeta = _tip_scaled(sigma)
    az = abs(zeta)
    m = 2.0 * az / r
    h = sigma * r * r / (az * az)
    return sign * m, h, ok


@njit(cache=True)
def zipper(points):
    """Inverse Loewner transform of a sampled arc starting at 0.

    Returns slopes, durations and a status pair ``(code, index)``: code 0
    ok, 1 a point left the upper half-plane (non-simple input), 2 a slit
    fit failed.
    """
    n = points.size
    w = points.copy()
    ms = np.zeros(n)
    hs = np.zeros(n)
    for k in range(n):
        wk = w[k]
        if not (wk.imag > 0.0):
            return ms[:k], hs[:k], 1, k
        m, h, ok = fit_segment(wk)
        if not ok:
            return ms[:k], hs[:k], 2, k
        ms[k] = m
        hs[k] = h
        for j in range(k + 1, n):
            z, ok2 = forward_map(w[j], m, h, 0)
            w[j] = z
    return ms, hs, 0, n


@njit(cache=True)
def forward_with_derivs(x, ms, hs):
    """Forward flow of a point with its first three derivatives.

    The derivatives of one segment map ``F`` follow from differentiating
    ``Phi(F(z)) = Phi(z) + 2h`` and are combined by the chain rule.
    Returns ``(value, d1, d2, d3, status)``.
    """
    v = x
    d1 = 1.0 + 0.0j
    d2 = 0.0j
    d3 = 0.0j
    status = 0
    for j in range(ms.size):
        m = ms[j]
        z1, ok = forward_map(v, m, hs[j], 0)
        if not ok:
            status = 1
        a0 = 1.0 - 0.5 * m * v
        a1 = 1.0 - 0.5 * m * z1
        p1_0 = v / a0
        p2_0 = 1.0 / (a0 * a0)
        p3_0 = m / (a0 * a0 * a0)
        p1_1 = z1 / a1
        p2_1 = 1.0 / (a1 * a1)
        p3_1 = m / (a1 * a1 * a1)
        f1 = p1_0 / p1_1
        f2 = (p2_0 - p2_1 * f1 * f1) / p1_1
        f3 = (p3_0 - p3_1 * f1 * f1 * f1 - 3.0 * p2_1 * f1 * f2) / p1_1
        n3 = f3 * d1 * d1 * d1 + 3.0 * f2 * d1 * d2 + f1 * d3
        n2 = f2 * d1 * d1 + f1 * d2
        n1 = f1 * d1
        d1 = n1
        d2 = n2
        d3 = n3
        v = z1
    return v, d1, d2, d3, status


@njit(cache=True)
def backward_real(x, ms, hs):
    """Backward flow of a real point from the end of the segments to time 0.

    Returns ``(y, ok)``; ``ok`` is False if the point meets the curve,
    i.e. the backward flow would leave the real line.
    """
    v = x
    for j in range(ms.size - 1, -1, -1):
        m = ms[j]
        h = hs[j]
        n = _substeps(complex(v, 0.0), m, h)
        hsub = h / n
        for _ in range(n):
            d = v * v - 4.0 * hsub
            if d <= 0.0:
                return v, False
            guess = math.copysign(math.sqrt(d), v) + m * hsub
            if m != 0.0:
                if abs(1.0 - 0.5 * m * v) < 0.5:
                    dz, ok = _newton_log(complex(v, 0.0), m, -2.0 * hsub)
                else:
                    dz, ok = _newton(complex(v, 0.0), m, -2.0 * hsub, complex(guess - v, 0.0))
                if not ok:
                    return v, False
                guess = v + dz.real
            if guess * v <= 0.0:
                return v, False
            v = guess
    return v, True
