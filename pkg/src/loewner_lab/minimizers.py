"""Energy minimizers under point constraints.

One-point minimizer
-------------------
Along ``lambda' = 8 Re z / |z|^2`` with ``z' = 2/z - lambda'`` the polar
coordinates ``z = r e^{i phi}`` satisfy

    d(r^2)/dt = -4 (1 + 2 cos^2 phi),    dphi/dt = 2 sin(2 phi) / r^2,

which is separable: ``r^2 = r0^2 sin^3(theta) cos(phi) / (cos(theta) sin^3(phi))``.
Using ``phi`` as the integration variable the capacity time is
explicit and the driving function is the integral of
``2 r / sin(phi)``, which we evaluate by Gauss-Legendre quadrature.  The
singular point ``z = 0`` is reached at ``phi = pi/2`` without stiffness.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .driving import DEFAULT_STEP, DrivingFunction, energy
from .errors import DomainError, GeometryError, NumericalAccuracyError
from .flow import DEFAULT_CONFIG, FlowConfig, RadialDriving, flow_points


@dataclass(frozen=True)
class ConstraintSet:
    """Labeled points ``(z_i, side_i)``; side +1 means ``z_i`` ends right of the curve."""

    points: tuple

    def __post_init__(self):
        pts = []
        for z, s in self.points:
            z = complex(z)
            if not z.imag > 0:
                raise DomainError("constraint points must lie in the open upper half-plane")
            if s not in (1, -1):
                raise DomainError("side labels must be +1 or -1")
            pts.append((z, int(s)))
        zs = [p[0] for p in pts]
        if len(set(zs)) != len(zs):
            raise DomainError("constraint points must be distinct")
        object.__setattr__(self, "points", tuple(pts))

    @property
    def z(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=complex)

    @property
    def sides(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=float)

    def mirrored(self) -> "ConstraintSet":
        return ConstraintSet(tuple((-complex(z).conjugate(), -s) for z, s in self.points))

    def horizon(self) -> float:
        """``R^2 / 2`` with ``R = 2 max |z_i|``."""
        R = 2.0 * float(np.max(np.abs(self.z)))
        return 0.5 * R * R

    def to_dict(self) -> dict:
        return {"points": [[z.real, z.imag, s] for z, s in self.points]}


@dataclass(frozen=True, eq=False)
class MinimizerResult:
    """Driver, its energy and per-point status (``hit`` / ``right`` / ``left`` / ``violated``)."""

    driving: DrivingFunction
    energy: float
    hitting_times: tuple
    status: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "driving": self.driving.to_dict(),
            "energy": self.energy,
            "hitting_times": [None if t is None else float(t) for t in self.hitting_times],
            "status": list(self.status),
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# one point


def minimal_energy(theta: float) -> float:
    """``-8 ln sin(theta)``."""
    return -8.0 * math.log(math.sin(theta))


def hitting_time(theta: float) -> float:
    """Capacity time at which the one-point minimizer reaches ``e^{i theta}``."""
    s, c = math.sin(theta), math.cos(theta)
    return 0.25 * s * s + c * c / 12.0


def _time_of_phi(theta, phi):
    s, c = math.sin(theta), math.cos(theta)
    ct0 = c / s
    ct = np.cos(phi) / np.sin(phi)
    return s**3 / (4.0 * c) * (ct0 + ct0**3 / 3.0 - ct - ct**3 / 3.0)


def _driving_of_phi(theta, phi, nodes=16):
    """``lambda(phi) = int_theta^phi 2 sqrt(rho) / sin`` by composite Gauss-Legendre."""
    s, c = math.sin(theta), math.cos(theta)
    k = 2.0 * math.sqrt(s**3 / c)
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = phi[:-1], phi[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    p = mid[:, None] + half[:, None] * x[None, :]
    f = k * np.sqrt(np.maximum(np.cos(p), 0.0)) / np.sin(p) ** 2.5
    inc = (f * w[None, :]).sum(axis=1) * half
    return np.concatenate([[0.0], np.cumsum(inc)])


def one_point_minimizer(theta: float, step: float = DEFAULT_STEP, r: float = 1.0) -> MinimizerResult:
    """Energy minimizer among drivers whose curve visits ``r e^{i theta}``.

    Parameters
    ----------
    theta : float
        Angle in ``(0, pi)``.
    step : float
        Maximal capacity spacing of the samples (before scaling).
    r : float
        Modulus of the target (scaling invariance).
    """
    if not 0.0 < theta < math.pi:
        raise DomainError("theta must lie in (0, pi)")
    if r <= 0:
        raise DomainError("target modulus must be positive")
    if theta > 0.5 * math.pi:
        res = one_point_minimizer(math.pi - theta, step, r)
        return MinimizerResult(res.driving.mirrored(), res.energy, res.hitting_times, res.status)
    tau = hitting_time(theta)
    if abs(theta - 0.5 * math.pi) < 1e-14:
        lam = DrivingFunction([0.0, tau], [0.0, 0.0])
    else:
        n = max(8, int(math.ceil(tau / step)))
        # nearly uniform in time: t(phi) is close to linear at both ends
        u = np.linspace(0.0, 1.0, n + 1)
        phi = theta + (0.5 * math.pi - theta) * u
        t = _time_of_phi(theta, phi)
        t[0], t[-1] = 0.0, tau
        lam = DrivingFunction(t, _driving_of_phi(theta, phi))
    if r != 1.0:
        lam = DrivingFunction(lam.times * r * r, lam.values * r)
    return MinimizerResult(lam, energy(lam).total, (tau * r * r,), ("hit",))


def minimizer_state(theta: float, t) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(arg z_t, lambda_t)`` along the one-point minimizer (theta <= pi/2)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    tau = hitting_time(theta)
    phis = np.empty_like(t)
    for i, tv in enumerate(t):
        if tv >= tau:
            phis[i] = 0.5 * math.pi
            continue
        lo, hi = theta, 0.5 * math.pi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _time_of_phi(theta, np.array([mid]))[0] < tv:
                lo = mid
            else:
                hi = mid
        phis[i] = 0.5 * (lo + hi)
    lam = np.array([_driving_of_phi(theta, np.linspace(theta, p, 64))[-1] for p in phis])
    return phis, lam


def radial_minimizer_driving(theta: float, t_max: float = 10.0, step: float = DEFAULT_STEP) -> RadialDriving:
    """Radial driving ``xi(t) = arccos(e^{-t} cos theta)``."""
    if not 0.0 < theta < math.pi:
        raise DomainError("theta must lie in (0, pi)")
    n = max(1, int(math.ceil(t_max / step)))
    t = np.linspace(0.0, t_max, n + 1)
    return RadialDriving(t, np.arccos(np.exp(-t) * math.cos(theta)))


def disk_map(theta: float):
    """Mobius map ``H -> D`` sending ``e^{i theta} -> 0``, ``0 -> e^{i theta}``, ``oo -> e^{-i theta}``."""
    a = np.exp(1j * theta)

    def psi(z):
        z = np.asarray(z, dtype=complex)
        return np.conj(a) * (z - a) / (z - np.conj(a))

    return psi


# ---------------------------------------------------------------------------
# several points


def _append(lam: DrivingFunction, piece: DrivingFunction) -> DrivingFunction:
    t = np.concatenate([lam.times, lam.times[-1] + piece.times[1:]])
    v = np.concatenate([lam.values, lam.values[-1] + piece.values[1:]])
    return DrivingFunction(t, v)


def _construct(zs, order, step, rotate=None, config=DEFAULT_CONFIG):
    lam = DrivingFunction.zero()
    taus = [None] * len(zs)
    for idx in order:
        t_now = lam.horizon
        if t_now > 0:
            st = flow_points(lam, [zs[idx]], t_now, config)
            if not st.alive[0]:
                taus[idx] = float(st.tau[0])
                continue
            w = complex(st.positions[0])
        else:
            w = complex(zs[idx])
        if rotate is not None:
            w = w * np.exp(1j * rotate[idx])
        ang = float(np.angle(w))
        if not 0 < ang < math.pi:
            raise GeometryError("rotated target left the upper half-plane")
        piece = one_point_minimizer(ang, step, abs(w)).driving
        lam = _append(lam, piece)
        taus[idx] = lam.horizon
    return lam, taus


def multi_point_construction(
    points: Sequence[complex],
    step: float = DEFAULT_STEP,
    order: Sequence[int] | None = None,
    config: FlowConfig = DEFAULT_CONFIG,
) -> MinimizerResult:
    """Finite-energy driver whose curve visits every point.

    Hits the first point with a one-point minimizer, then the centered
    image of the next one, and so on.  A point already swallowed when its
    turn comes has been visited by the curve.  Orders are retried if a
    numerical failure occurs.
    """
    zs = [complex(z) for z in points]
    if any(not z.imag > 0 for z in zs):
        raise DomainError("points must lie in the open upper half-plane")
    if len(set(zs)) != len(zs):
        raise DomainError("points must be distinct")
    first = list(order) if order is not None else list(range(len(zs)))
    orders = [first] + [list(p) for p in itertools.permutations(range(len(zs))) if list(p) != first]
    errors = []
    for od in orders[:24]:
        try:
            lam, taus = _construct(zs, od, step, config=config)
        except (GeometryError, NumericalAccuracyError) as exc:
            errors.append(str(exc))
            continue
        return MinimizerResult(
            lam, energy(lam).total, tuple(taus), tuple("hit" for _ in zs), {"order": od}
        )
    raise GeometryError("all visiting orders failed: " + "; ".join(errors))


# ---------------------------------------------------------------------------
# constraints


HIT_CAPACITY = 1e-5


def compatibility_report(
    lam: DrivingFunction, constraints: ConstraintSet, T: float, config=DEFAULT_CONFIG, hit_capacity=HIT_CAPACITY
):
    """Per-point ``(status, ok)`` with status ``hit``, ``right`` or ``left``.

    A point whose centered image comes within capacity time
    ``|f_t(z)|^2 / 4 <= hit_capacity (1 + |z|)^2`` of being swallowed at
    some ``t <= T`` lies on the curve up to discretisation and counts as
    hit.
    """
    rel = max(config.swallow_rel, 2.0 * math.sqrt(hit_capacity))
    st = flow_points(lam, constraints.z, T, replace(config, swallow_rel=rel))
    out = []
    for alive, p, side in zip(st.alive, st.positions, constraints.sides):
        if not alive:
            out.append(("hit", True))
            continue
        where = "right" if p.real >= 0 else "left"
        w = p.real / p.imag
        out.append((where, bool(side * w >= 0)))
    return out


def compatible(
    lam: DrivingFunction, constraints: ConstraintSet, T: float, config=DEFAULT_CONFIG, hit_capacity=HIT_CAPACITY
) -> np.ndarray:
    """Membership test of ``D^T``: hit by time ``T`` or ``eps_i w_i(T) >= 0``."""
    return np.array([ok for _, ok in compatibility_report(lam, constraints, T, config, hit_capacity)])


@dataclass(frozen=True)
class OptimizerConfig:
    """Penalty-method settings for :func:`minimize_constrained`."""

    rounds: int = 8
    weight0: float = 1.0
    weight_factor: float = 10.0
    fd_step: float = 1e-4
    margin: float = 0.05
    w_clip: float = 1e6
    maxiter: int = 200
    start_rotation: float = 0.002
    dense_fraction: float = 0.75
    energy_cap: float = 1e3


def _knot_grid(T, knots, t_c, dense_fraction):
    if t_c is None or t_c >= T:
        return np.linspace(0.0, T, knots + 1)
    nd = max(2, int(round(dense_fraction * knots)))
    dense = np.linspace(0.0, t_c, nd + 1)
    rest = np.linspace(t_c, T, knots - nd + 1)[1:]
    return np.concatenate([dense, rest])


class _Objective:
    def __init__(self, grid, zs, sides, cfg, flow_cfg):
        self.grid = grid
        self.h = np.diff(grid)
        self.zs = zs
        self.sides = sides
        self.cfg = cfg
        self.thr = flow_cfg.swallow_rel * (1.0 + np.abs(zs))
        self.weight = cfg.weight0
        self.released = np.zeros(zs.size, dtype=bool)

    def state(self, x):
        v = np.concatenate([[0.0], x])
        m = np.diff(v) / self.h
        out, tau, status = K.flow_forward(self.zs, m, self.h, self.thr, 0.0)
        return m, out, tau

    def violation(self, out, tau):
        dead = tau >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.clip(out.real / out.imag, -self.cfg.w_clip, self.cfg.w_clip)
        g = np.maximum(0.0, self.cfg.margin - self.sides * w)
        g[dead | self.released] = 0.0
        return g, dead

    def __call__(self, x):
        v = np.concatenate([[0.0], x])
        e = 0.5 * float(np.sum(np.diff(v) ** 2 / self.h))
        if e > self.cfg.energy_cap:
            # line-search probes this far out are rejected anyway; steep
            # slopes make the flow expensive, so skip it
            return e
        m, out, tau = self.state(x)
        g, _ = self.violation(out, tau)
        return e + self.weight * float(np.sum(g * g))

    def grad(self, x):
        f0 = self(x)
        gr = np.empty_like(x)
        step = self.cfg.fd_step
        for i in range(x.size):
            xp = x.copy()
            xp[i] += step
            gr[i] = (self(xp) - f0) / step
        return gr


def minimize_constrained(
    constraints: ConstraintSet,
    T: float | None = None,
    knots: int = 64,
    starts: Sequence[DrivingFunction] | None = None,
    config: OptimizerConfig = OptimizerConfig(),
    flow_config: FlowConfig = DEFAULT_CONFIG,
) -> MinimizerResult:
    """Numerical minimization of ``I_T`` over ``D^T(constraints)``.

    Piecewise-linear drivers with ``knots`` free knot values are optimized
    by a quadratic penalty method (weights growing geometrically over the
    outer rounds, forward-difference gradients, L-BFGS inner loop).
    Default starts: the multi-point construction aimed slightly to the
    feasible side of every point (in two orders) and ``lambda = 0``.  The
    best compatible driver found is returned; it is an upper bound on the
    constrained infimum.
    """
    if len(constraints.points) == 0:
        raise DomainError("constraint set is empty")
    if T is None:
        T = constraints.horizon()
    zs = constraints.z
    sides = constraints.sides
    cands = []

    def grid_for(lam):
        h = lam.horizon
        if lam.times.size == knots + 1 and abs(h - T) <= 1e-12 * T:
            # already a knot driver on [0, T], e.g. an earlier result
            return np.array(lam.times)
        t_c = min(T, 1.25 * h) if 0.0 < h < T else None
        return _knot_grid(T, knots, t_c, config.dense_fraction)

    def project(lam, grid):
        return DrivingFunction(grid, np.concatenate([[0.0], np.asarray(lam(grid[1:]), dtype=float)]))

    prepared = []
    if starts is None:
        orders = [list(range(zs.size))]
        if zs.size > 1:
            orders.append(list(range(zs.size))[::-1])
        for od in orders:
            # aim slightly to the feasible side so the projection stays compatible
            rot = config.start_rotation
            for _ in range(6):
                try:
                    lam, _ = _construct(list(zs), od, DEFAULT_STEP, rotate=sides * rot, config=flow_config)
                except (GeometryError, NumericalAccuracyError):
                    break
                if lam.horizon <= T:
                    grid = grid_for(lam)
                    proj = project(lam, grid)
                    if compatible(proj, constraints, T, flow_config).all():
                        prepared.append((grid, proj))
                        break
                rot *= 2.0
        zero_grid = prepared[0][0] if prepared else _knot_grid(T, knots, None, config.dense_fraction)
        prepared.append((zero_grid, DrivingFunction.zero(T)))
    else:
        for lam in starts:
            grid = grid_for(lam)
            prepared.append((grid, project(lam, grid)))
    runs = []
    for k, (grid, start) in enumerate(prepared):
        x = np.asarray(start(grid[1:]), dtype=float)
        obj = _Objective(grid, zs, sides, config, flow_config)
        best = None
        nfev = 0
        converged = True
        for rnd in range(config.rounds):
            obj.weight = config.weight0 * config.weight_factor**rnd
            res = minimize(obj, x, jac=obj.grad, method="L-BFGS-B", options={"maxiter": config.maxiter})
            nfev += int(res.nfev)
            converged = converged and bool(res.success)
            x = res.x
            m, out, tau = obj.state(x)
            g, dead = obj.violation(out, tau)
            obj.released |= dead
            cand = DrivingFunction(grid, np.concatenate([[0.0], x]))
            ok = compatible(cand, constraints, T, flow_config).all()
            e = energy(cand).total
            if ok and (best is None or e < best[1]):
                best = (cand, e)
        # the projected start is a fallback
        if compatible(start, constraints, T, flow_config).all():
            e = energy(start).total
            if best is None or e < best[1]:
                best = (start, e)
        runs.append({"start": k, "energy": None if best is None else best[1], "nfev": nfev, "converged": converged})
        if best is not None:
            cands.append(best)
    if not cands:
        raise NumericalAccuracyError("no compatible driver found")
    lam, e = min(cands, key=lambda c: c[1])
    st = flow_points(lam, zs, T, flow_config)
    rep = compatibility_report(lam, constraints, T, flow_config)
    taus = tuple(None if a else float(t) for a, t in zip(st.alive, st.tau))
    return MinimizerResult(
        lam,
        e,
        taus,
        tuple(s for s, _ in rep),
        {"runs": runs, "knots": int(knots), "horizon": float(T), "converged": all(r["converged"] for r in runs)},
    )


def grid_search_lower(constraints: ConstraintSet, T: float, values: Sequence[float]) -> float:
    """Brute-force minimum over 3-knot drivers with knot values from ``values``.

    The knots sit at ``T/3, 2T/3, T``; a coarse oracle for small problems.
    """
    grid = np.linspace(0.0, T, 4)
    best = math.inf
    for a in values:
        for b in values:
            for c in values:
                lam = DrivingFunction(grid, [0.0, a, b, c])
                if compatible(lam, constraints, T).all():
                    best = min(best, energy(lam).total)
    return best


def prop_rev_sweep(lam: DrivingFunction, T: float, counts=(1, 2, 3), offset: float = 0.02, knots: int = 64):
    """Heuristic sweep of constrained infima for points placed along a curve.

    For each count ``n`` the points ``gamma(t_k)`` (``t_k`` equally spaced)
    are pushed off the curve by ``offset`` to both sides and labeled with
    the side they lie on, so every constraint set squeezes the curve.  Every constrained infimum is a lower bound for the
    energy of the curve; the optimizer returns upper bounds of those
    infima, so the sweep is a heuristic, not an estimate with guarantees.
    """
    from .inverse import trace_at

    rows = []
    for n in counts:
        ts = T * (np.arange(1, n + 1) / (n + 1))
        g = trace_at(lam, ts)
        d = trace_at(lam, ts + 1e-4) - g
        normal = -1j * d / np.abs(d)
        pts = tuple((complex(p + sd * offset * nv), sd) for p, nv in zip(g, normal) for sd in (1, -1))
        cs = ConstraintSet(pts)
        # lam itself is compatible, so it is a natural start
        res = minimize_constrained(cs, T=max(T, cs.horizon()), knots=knots, starts=[lam])
        rows.append({"n_points": int(n), "constrained_energy": res.energy, "energy": energy(lam, T).total})
    return rows
