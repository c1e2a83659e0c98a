"""Embedded Dormand-Prince 5(4) integrator for complex vector ODEs.

All components share the step size.  Components can be frozen by an
event function (used for swallowing), which records the step interval
in which the event fired.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalAccuracyError

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [
        71 / 57600,
        0.0,
        -71 / 16695,
        71 / 1920,
        -17253 / 339200,
        22 / 525,
        -1 / 40,
    ]
)


def dopri5(f, t0, t1, y0, rtol=1e-9, atol=1e-12, h0=None, event=None, max_steps=200_000, h_min=1e-15):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1`` (either direction).

    Parameters
    ----------
    f : callable
        ``f(t, y, active)`` returning the derivative for the active
        components (a boolean mask); inactive entries are ignored.
    event : callable, optional
        ``event(t, y)`` returning a boolean mask of components to freeze.
    Returns
    -------
    y : ndarray
        State at ``t1`` (frozen components keep their event state).
    hit : ndarray of bool
        Components frozen by the event.
    bracket : ndarray, shape (n, 2)
        Time interval of the step in which each event fired (nan if none).
    """
    y = np.array(y0, dtype=complex)
    n = y.size
    active = np.ones(n, dtype=bool)
    bracket = np.full((n, 2), np.nan)
    if event is not None:
        ev = event(t0, y)
        active &= ~ev
        bracket[ev] = t0
    span = t1 - t0
    if span == 0 or not active.any():
        return y, ~active, bracket
    direction = np.sign(span)
    h = abs(span) if h0 is None else min(abs(h0), abs(span))
    t = t0
    k = np.zeros((7, n), dtype=complex)
    steps = 0
    fsal = None
    while direction * (t1 - t) > 0:
        if steps > max_steps:
            raise NumericalAccuracyError("adaptive integrator exceeded its step budget", bracket=(t, t1))
        steps += 1
        h = min(h, abs(t1 - t))
        hs = direction * h
        k[0] = fsal if fsal is not None else f(t, y, active)
        for i in range(1, 7):
            yi = y + hs * np.dot(_A[i], k[:i])
            k[i] = f(t + _C[i] * hs, yi, active)
        y_new = y + hs * np.dot(_B, k)
        err = hs * np.dot(_E, k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = np.abs(err[active]) / scale[active]
        enorm = float(np.sqrt(np.mean(ratio * ratio))) if ratio.size else 0.0
        if not np.all(np.isfinite(y_new[active])):
            enorm = np.inf
        if enorm <= 1.0:
            t_new = t + hs
            y[active] = y_new[active]
            fsal = k[6].copy()
            if event is not None:
                ev = event(t_new, y) & active
                if ev.any():
                    bracket[ev, 0] = min(t, t_new)
                    bracket[ev, 1] = max(t, t_new)
                    active &= ~ev
                    fsal = None
                    if not active.any():
                        return y, ~active, bracket
            t = t_new
            fac = 0.9 * enorm ** (-0.2) if enorm > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
        else:
            fsal = None
            if not np.isfinite(enorm):
                h *= 0.1
            else:
                h *= max(0.1, 0.9 * enorm ** (-0.2))
            if h < h_min * max(1.0, abs(t)):
                raise NumericalAccuracyError("step size underflow", bracket=(t, t + hs))
    return y, ~active, bracket
