"""SLE Monte Carlo, Schramm's passage formula and the conditioned SDE.

Random numbers come from a counter-based generator: the normal used by
path ``p`` at step ``k`` is a hash of ``(seed, p, k)``.  Paths can thus be
computed in any order or in parallel with identical results.

Paths are advanced with scale-adaptive capacity steps
``dt = c * min |z_i|^2`` over the undecided points, and the driving
function is linear on every step, so each step applies the exact segment
map.  For one point, ``w = Re z / Im z`` is a time-changed diffusion,
and the steps are uniform in its natural clock.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from numba import njit, prange
from scipy import integrate, special

from . import _kernels as K
from .driving import DrivingFunction
from .errors import DomainError
from .minimizers import ConstraintSet

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def set_threads_from_env() -> int:
    """Apply ``LOEWNER_LAB_THREADS`` as a cap on numba workers."""
    n = os.environ.get("LOEWNER_LAB_THREADS")
    if n:
        k = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(k)
    return numba.get_num_threads()


# ---------------------------------------------------------------------------
# counter-based normals


@njit(cache=True)
def _mix(x):
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True)
def _uniform(seed, path, step, lane):
    x = _mix(np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15))
    x = _mix(x ^ np.uint64(path))
    x = _mix(x ^ (np.uint64(step) << np.uint64(1)) ^ np.uint64(lane))
    # 53 random bits in (0, 1)
    return ((x >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def normal(seed, path, step):
    """Standard normal keyed by ``(seed, path, step)`` (Box-Muller)."""
    u1 = _uniform(seed, path, step, 0)
    u2 = _uniform(seed, path, step, 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def _normals(seed, path, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = normal(seed, path, k)
    return out


def sample_sle_driver(kappa: float, T: float, dt: float, seed: int, path: int = 0) -> DrivingFunction:
    """``sqrt(kappa) B`` on a uniform grid of spacing ``dt`` (last step shortened to hit ``T``)."""
    if kappa < 0:
        raise DomainError("kappa must be nonnegative")
    if dt <= 0 or T <= 0:
        raise DomainError("dt and T must be positive")
    n = int(math.ceil(T / dt - 1e-12))
    t = np.minimum(np.arange(n + 1) * dt, T)
    h = np.diff(t)
    inc = math.sqrt(kappa) * np.sqrt(h) * _normals(np.uint64(seed), np.uint64(path), n)
    return DrivingFunction(t, np.concatenate([[0.0], np.cumsum(inc)]))


# ---------------------------------------------------------------------------
# Schramm's formula


def _check_kappa(kappa):
    if not 0.0 < kappa <= 4.0:
        raise DomainError("kappa must lie in (0, 4]")


def _tail_scaled(a: float, w: float) -> float:
    """``int_w^oo (s^2+1)^-a ds / (w^2+1)^(1 - a)`` for ``w >= 0``.

    With ``s = tan u`` the integrand becomes ``cos(u)^(2a-2)`` on
    ``[atan w, pi/2]``; dividing by its value at the lower end keeps the
    quadrature well scaled for small ``kappa``.
    """
    u0 = math.atan(w)
    lc0 = math.log(math.cos(u0))
    p = 2.0 * a - 2.0
    if p == 0.0:
        return 0.5 * math.pi - u0
    f = lambda u: math.exp(p * (math.log(math.cos(u)) - lc0)) if u < 0.5 * math.pi else 0.0
    # the integrand decays on the scale 1/sqrt(p) past u0
    brk = min(0.5 * math.pi, u0 + 8.0 / math.sqrt(p))
    v1, _ = integrate.quad(f, u0, brk, epsabs=0.0, epsrel=1e-13, limit=200)
    v2 = 0.0
    if brk < 0.5 * math.pi:
        v2, _ = integrate.quad(f, brk, 0.5 * math.pi, epsabs=0.0, epsrel=1e-13, limit=200)
    return v1 + v2


def _full(a: float) -> float:
    """``int_0^oo (s^2+1)^-a ds = B(a - 1/2, 1/2) / 2``."""
    return 0.5 * math.exp(special.betaln(a - 0.5, 0.5))


def log_schramm_h(kappa: float, w: float) -> float:
    """``ln h_kappa(w)``, accurate far into the small-probability tail."""
    _check_kappa(kappa)
    a = 4.0 / kappa
    if w < 0:
        return math.log1p(-math.exp(log_schramm_h(kappa, -w)))
    lc0 = math.log(math.cos(math.atan(w)))
    return math.log(0.5 * _tail_scaled(a, w) / _full(a)) + (2.0 * a - 2.0) * lc0


def schramm_h(kappa: float, w: float) -> float:
    """Probability that SLE_kappa passes to the right of a point with ``cot(arg z) = w``.

    ``h(w) = (1/2) int_w^oo (s^2+1)^(-4/kappa) ds / int_0^oo (s^2+1)^(-4/kappa) ds``
    """
    _check_kappa(kappa)
    if w == 0:
        return 0.5
    if w < 0:
        return 1.0 - schramm_h(kappa, -w)
    return math.exp(log_schramm_h(kappa, w))


def schramm_h_closed(kappa: float, w: float) -> float:
    """Regularized incomplete beta form ``(1/2) I_{1/(1+w^2)}(a - 1/2, 1/2)``."""
    _check_kappa(kappa)
    a = 4.0 / kappa
    v = 0.5 * special.betainc(a - 0.5, 0.5, 1.0 / (1.0 + w * w))
    return v if w >= 0 else 1.0 - v


def F(w):
    """Drift profile ``8w / (w^2 + 1)``."""
    return 8.0 * np.asarray(w) / (np.asarray(w) ** 2 + 1.0)


def epsilon_kappa(kappa: float, w: float) -> float:
    """Correction ``kappa (w^2+1)^(-4/kappa) / int_w^oo (s^2+1)^(-4/kappa) ds - F(w)`` for ``w >= 0``."""
    _check_kappa(kappa)
    if w < 0:
        raise DomainError("epsilon_kappa is defined for w >= 0")
    a = 4.0 / kappa
    # (w^2+1)^-a / int = cos(u0)^2 / tail_scaled
    c2 = 1.0 / (1.0 + w * w)
    return kappa * c2 / _tail_scaled(a, w) - float(F(w))


def epsilon_table(kappa: float, n: int = 2001):
    """``eps_kappa`` sampled uniformly in ``u = atan w`` on ``[0, pi/2]``, oddly extended.

    Near ``u = pi/2`` the correction behaves like ``-kappa cot u``.
    """
    u = np.linspace(0.0, 0.5 * math.pi, n)
    e = np.empty(n)
    for i, uv in enumerate(u[:-1]):
        e[i] = epsilon_kappa(kappa, math.tan(uv))
    e[-1] = 0.0
    return u, e


# ---------------------------------------------------------------------------
# passage probabilities


@njit(cache=True)
def _run_path(zs, kappa, seed, path, c, dt_max, T, w_stop, thr_rel, max_steps, bridge, codes):
    n = zs.size
    z = zs.copy()
    alive = np.ones(n, dtype=np.bool_)
    t = 0.0
    k = 0
    timed = T > 0.0
    capped = False
    while True:
        scale = math.inf
        for i in range(n):
            if alive[i] and z[i].imag > 0.0 and abs(z[i].real) < w_stop * z[i].imag:
                a2 = z[i].real * z[i].real + z[i].imag * z[i].imag
                if a2 < scale:
                    scale = a2
        if timed:
            if t >= T:
                break
            dt = min(dt_max, T - t)
            if scale < math.inf:
                dt = min(dt, c * scale)
        else:
            if scale == math.inf:
                break
            dt = min(dt_max, c * scale)
        if k >= max_steps:
            capped = True
            break
        dx = math.sqrt(kappa * dt) * normal(seed, path, k)
        m = dx / dt
        for i in range(n):
            if not alive[i]:
                continue
            a2 = z[i].real * z[i].real + z[i].imag * z[i].imag
            # the tip cannot reach a point this far within one step
            if a2 < 16.0 * dt or abs(m) * dt > 0.5 * math.sqrt(a2):
                thr = thr_rel * (1.0 + abs(zs[i]))
                if K.swallow_check(z[i], m, dt, thr) >= 0.0:
                    alive[i] = False
                    continue
            w, ok = K.forward_map(z[i], m, dt, 0)
            if bridge and w.imag > 0.0:
                # mean effect of the Brownian bridge left out by the linear piece
                w = w + kappa * dt * dt / (3.0 * w * w * w)
            z[i] = w
        t += dt
        k += 1
    for i in range(n):
        if not alive[i]:
            codes[i] = 2
        elif z[i].real >= 0.0:
            codes[i] = 1
        else:
            codes[i] = -1
    return k, capped


@njit(cache=True, parallel=True)
def _passage_kernel(zs, kappa, seed, first, n_paths, c, dt_max, T, w_stop, thr_rel, max_steps, bridge):
    codes = np.zeros((n_paths, zs.size), dtype=np.int8)
    steps = np.zeros(n_paths, dtype=np.int64)
    capped = np.zeros(n_paths, dtype=np.bool_)
    for p in prange(n_paths):
        row = np.zeros(zs.size, dtype=np.int8)
        s, cp = _run_path(zs, kappa, seed, first + p, c, dt_max, T, w_stop, thr_rel, max_steps, bridge, row)
        codes[p, :] = row
        steps[p] = s
        capped[p] = cp
    return codes, steps, capped


@dataclass(frozen=True)
class PassageConfig:
    """Path discretisation.

    ``c`` scales the adaptive step ``c |z|^2``.  In untimed mode a path ends
    once every point has ``|Re z| >= w_stop Im z``; afterwards a side flips
    with probability ``h_kappa(w_stop)``.  By default ``w_stop`` is chosen
    so that this is at most ``flip_tol``.
    """

    def resolved_w_stop(self, kappa: float) -> float:
        if self.w_stop is not None:
            return float(self.w_stop)
        return stop_threshold(kappa, self.flip_tol)

    c: float = 0.04
    w_stop: float | None = None
    flip_tol: float = 1e-7
    bridge_correction: bool = True
    dt_max: float = math.inf
    swallow_rel: float = 1e-9
    max_steps: int = 1_000_000


@dataclass(frozen=True)
class PassageEstimate:
    kappa: float
    constraint: ConstraintSet
    probability: float
    half_width: float
    samples: int
    seed: int
    ci: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "constraint": self.constraint.to_dict(),
            "p": self.probability,
            "ci": list(self.ci),
            "half_width": self.half_width,
            "n": self.samples,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }


def stop_threshold(kappa: float, flip_tol: float) -> float:
    """Smallest ``w`` (on a doubling grid) with ``h_kappa(w) <= flip_tol``."""
    if kappa <= 0:
        return 1.0
    w = 1.0
    lt = math.log(flip_tol)
    while log_schramm_h(min(kappa, 4.0), w) > lt and w < 1e12:
        w *= 2.0
    return w


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    hw = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - hw)
    hi = 1.0 if k == n else min(1.0, mid + hw)
    return lo, hi


def passage_codes(kappa, points, n_samples, seed, T=None, dt=math.inf, config=PassageConfig(), first_path=0):
    """Per-path side codes: ``+1`` right of the curve, ``-1`` left, ``2`` swallowed."""
    zs = np.ascontiguousarray(np.asarray(points, dtype=complex).ravel())
    set_threads_from_env()
    if kappa == 0:
        kappa = 0.0
    return _passage_kernel(
        zs,
        float(kappa),
        np.uint64(seed),
        np.uint64(first_path),
        int(n_samples),
        float(config.c),
        float(min(dt, config.dt_max)),
        -1.0 if T is None else float(T),
        float(config.resolved_w_stop(kappa)) if kappa > 0 else 1.0,
        float(config.swallow_rel),
        int(config.max_steps),
        bool(config.bridge_correction),
    )


def estimate_passage(
    kappa: float,
    constraints: ConstraintSet,
    T: float | None = None,
    dt: float = math.inf,
    n_samples: int = 10_000,
    seed: int = 0,
    config: PassageConfig = PassageConfig(),
) -> PassageEstimate:
    """Monte Carlo estimate of ``P(SLE_kappa in D(constraints))``.

    With ``T`` given, points are classified at capacity time ``T`` (hit, or
    the sign of ``Re f_T``) and ``dt`` caps the step.  With ``T = None``
    each path runs until every point is decided (see :class:`PassageConfig`).
    """
    _check_kappa(kappa)
    if T is not None and T < constraints.horizon():
        raise DomainError("T must be at least the R^2/2 horizon of the constraint set")
    codes, steps, capped = passage_codes(kappa, constraints.z, n_samples, seed, T, dt, config)
    sides = constraints.sides.astype(np.int8)
    ok = np.all((codes == 2) | (codes == sides[None, :]), axis=1)
    k = int(ok.sum())
    p = k / n_samples
    lo, hi = wilson_interval(k, n_samples)
    return PassageEstimate(
        float(kappa),
        constraints,
        p,
        0.5 * (hi - lo),
        int(n_samples),
        int(seed),
        (lo, hi),
        {
            "count": k,
            "mean_steps": float(steps.mean()),
            "capped_paths": int(capped.sum()),
            "swallowed": int((codes == 2).any(axis=1).sum()),
            "mode": "untimed" if T is None else "timed",
            "c": config.c,
            "w_stop": config.resolved_w_stop(kappa),
        },
    )


# ---------------------------------------------------------------------------
# large deviations


@dataclass(frozen=True)
class RateRow:
    kappa: float
    rate: float
    reference: float
    bound: bool = False
    half_width: float | None = None


def single_point_probability(kappa: float, theta: float, side: int) -> float:
    """``P`` that the point ``e^{i theta}`` ends on ``side`` (``-1``: curve passes right)."""
    w = 1.0 / math.tan(theta)
    return schramm_h(kappa, -side * w)


def rate_reference(theta: float, side: int) -> float:
    """``4 ln(w^2 + 1)`` when the event is atypical, else 0."""
    s = -side / math.tan(theta)
    return 4.0 * math.log1p(s * s) if s > 0 else 0.0


def ld_rate(
    kappas: Sequence[float],
    constraints: ConstraintSet | None = None,
    theta: float | None = None,
    side: int = -1,
    mode: str = "quadrature",
    n_samples: int = 100_000,
    seed: int = 0,
    config: PassageConfig = PassageConfig(),
    kappa_floor: float = 0.25,
) -> list[RateRow]:
    """``-kappa ln P`` along a decreasing sequence of ``kappa``.

    ``mode="quadrature"`` is available for a single point ``e^{i theta}``.
    In ``mode="mc"`` kappas below ``kappa_floor`` are skipped and a zero
    count yields the rule-of-three bound ``p <= 3/n`` as a one-sided rate.
    """
    ks = [float(k) for k in kappas]
    if any(b >= a for a, b in zip(ks, ks[1:])):
        raise DomainError("kappa sequence must be strictly decreasing")
    if theta is None:
        if constraints is None or len(constraints.points) != 1:
            if mode == "quadrature":
                raise DomainError("quadrature rates need a single point")
        else:
            z, side = constraints.points[0]
            if abs(abs(z) - 1.0) > 1e-12:
                z = z / abs(z)
            theta = float(np.angle(z))
    ref = rate_reference(theta, side) if theta is not None else float("nan")
    rows = []
    for k in ks:
        if mode == "quadrature":
            w = 1.0 / math.tan(theta)
            lp = log_schramm_h(k, -side * w)
            rows.append(RateRow(k, -k * lp, ref))
        elif mode == "mc":
            if k < kappa_floor:
                continue
            cs = constraints if constraints is not None else ConstraintSet(((np.exp(1j * theta), side),))
            est = estimate_passage(k, cs, None, n_samples=n_samples, seed=seed, config=config)
            if est.diagnostics["count"] == 0:
                rows.append(RateRow(k, -k * math.log(3.0 / n_samples), ref, True))
            else:
                p = est.probability
                hw = k * est.half_width / p
                rows.append(RateRow(k, -k * math.log(p), ref, False, hw))
        else:
            raise DomainError("mode must be 'quadrature' or 'mc'")
    return rows


# ---------------------------------------------------------------------------
# conditioned SDE


@njit(cache=True)
def _interp_u(u, tab_u, tab_e):
    n = tab_u.size
    x = u / tab_u[-1] * (n - 1)
    i = min(int(x), n - 2)
    f = x - i
    return tab_e[i] * (1.0 - f) + tab_e[i + 1] * f


@njit(cache=True)
def _conditioned_kernel(z0, kappa, T, dt, c, seed, path, tab_u, tab_e, clipped, thr, max_steps):
    ts = np.zeros(max_steps + 1)
    xs = np.zeros(max_steps + 1)
    z = z0
    sk = math.sqrt(kappa)
    tau = -1.0
    t = 0.0
    k = 0
    while t < T and k < max_steps:
        a2 = z.real * z.real + z.imag * z.imag
        if a2 < thr * thr:
            tau = t
            break
        h = min(dt, c * a2, T - t)
        y = z.imag
        w = z.real / y
        f = 8.0 * w / (w * w + 1.0)
        if clipped and f > 0.0:
            f = 0.0
        e = 0.0
        if tab_u.size > 1:
            e = _interp_u(math.atan(abs(w)), tab_u, tab_e)
            if w < 0.0:
                e = -e
        dx = (f + e) / y * h
        if kappa > 0.0:
            dx += sk * math.sqrt(h) * normal(seed, path, k)
        m = dx / h
        s = K.swallow_check(z, m, h, thr)
        if s >= 0.0:
            ts[k + 1] = t + s
            xs[k + 1] = xs[k] + m * s
            tau = t + s
            k += 1
            break
        z, ok = K.forward_map(z, m, h, 0)
        t += h
        ts[k + 1] = t
        xs[k + 1] = xs[k] + dx
        k += 1
        if not ok or z.imag <= 0.0:
            # landed on the boundary: the point was reached within this step
            tau = t
            break
    return ts[: k + 1], xs[: k + 1], tau


@dataclass(frozen=True, eq=False)
class ConditionedPath:
    driving: DrivingFunction
    tau: float | None


def simulate_conditioned(
    kappa: float,
    z: complex,
    T: float,
    dt: float = 1e-4,
    seed: int = 0,
    path: int = 0,
    drift: str = "plain",
    swallow_rel: float = 1e-6,
    table: tuple | None = None,
    c: float = 0.01,
    max_steps: int = 1_000_000,
) -> ConditionedPath:
    """Euler-Maruyama for ``dX = sqrt(kappa) dB + (F(w) + eps_kappa(w)) / Im z dt``.

    ``z_t`` follows the exact flow of the linear piece of ``X`` on each
    step, so only the drift is frozen over a step.  Steps are
    ``min(dt, c |z_t|^2)``: the drift is singular at the hit, and the
    shrinking steps resolve it (the path stops once ``|z_t|`` falls below
    ``swallow_rel |z|``).  ``drift="clipped"``
    replaces ``F`` by ``min(F, 0)``.  The path stops at the swallowing
    time of ``z`` if that comes before ``T``.
    """
    if kappa < 0:
        raise DomainError("kappa must be nonnegative")
    if kappa > 4:
        raise DomainError("kappa must not exceed 4")
    z = complex(z)
    if not z.imag > 0:
        raise DomainError("z must lie in the upper half-plane")
    if drift not in ("plain", "clipped"):
        raise DomainError("drift must be 'plain' or 'clipped'")
    if kappa > 0:
        tu, te = table if table is not None else epsilon_table(kappa)
    else:
        tu, te = np.zeros(1), np.zeros(1)
    ts, xs, tau = _conditioned_kernel(
        z, float(kappa), float(T), float(dt), float(c), np.uint64(seed), np.uint64(path),
        np.asarray(tu, dtype=float), np.asarray(te, dtype=float), drift == "clipped",
        swallow_rel * abs(z), int(max_steps),
    )
    keep = np.concatenate([[True], np.diff(ts) > 0])
    return ConditionedPath(DrivingFunction(ts[keep], xs[keep]), None if tau < 0 else float(tau))
