"""Piecewise-linear driving functions and their Loewner energy.

A driving function is stored by its samples ``(times, values)`` with
``times[0] = values[0] = 0``, linear interpolation in between and a
constant extension after the last sample.  On this representation the
energy ``(1/2) int lambda'(s)^2 ds`` is a finite sum, so scaling and
additivity hold exactly up to floating point rounding.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, MalformedInputError

DEFAULT_STEP = 1e-3


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DrivingFunction:
    """Sampled real driving function of capacity time.

    Parameters
    ----------
    times : array_like
        Strictly increasing capacity times starting at 0.
    values : array_like
        Driving values, same length, ``values[0] == 0``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if t.size == 0 or t.size != v.size:
            raise MalformedInputError("times and values must be nonempty and of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise MalformedInputError("driving samples must be finite")
        if t[0] != 0.0 or v[0] != 0.0:
            raise MalformedInputError("a driving function starts at (0, 0)")
        if np.any(np.diff(t) <= 0.0):
            raise MalformedInputError("times must be strictly increasing")
        object.__setattr__(self, "times", _as_readonly(t))
        object.__setattr__(self, "values", _as_readonly(v))

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, T: float = 0.0) -> "DrivingFunction":
        if T > 0:
            return cls([0.0, T], [0.0, 0.0])
        return cls([0.0], [0.0])

    @classmethod
    def from_callable(cls, f: Callable, T: float, step: float = DEFAULT_STEP) -> "DrivingFunction":
        """Sample ``f`` on a uniform grid of spacing at most ``step``.

        ``f(0)`` is subtracted so the result starts at 0.
        """
        if T <= 0 or step <= 0:
            raise DomainError("T and step must be positive")
        n = max(1, int(math.ceil(T / step - 1e-9)))
        t = np.linspace(0.0, T, n + 1)
        v = np.asarray(f(t), dtype=float) * np.ones_like(t)
        return cls(t, v - v[0])

    @classmethod
    def from_slopes(cls, slopes: Sequence[float], durations: Sequence[float]) -> "DrivingFunction":
        m = np.asarray(slopes, dtype=float)
        h = np.asarray(durations, dtype=float)
        t = np.concatenate([[0.0], np.cumsum(h)])
        v = np.concatenate([[0.0], np.cumsum(m * h)])
        return cls(t, v)

    # evaluation ---------------------------------------------------------
    @property
    def horizon(self) -> float:
        """Last sample time."""
        return float(self.times[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.times)

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.times)

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def __len__(self):
        return self.times.size

    def segments(self, T: float | None = None):
        """Slopes and durations of the linear pieces covering ``[0, T]``.

        Beyond the last sample a zero-slope piece is appended.
        """
        if T is None:
            T = self.horizon
        m = self.slopes
        h = self.durations
        if T >= self.horizon:
            if T > self.horizon:
                m = np.append(m, 0.0)
                h = np.append(h, T - self.horizon)
            return m, h
        k = int(np.searchsorted(self.times, T, side="left"))
        m = m[:k].copy()
        h = h[:k].copy()
        h[-1] = T - self.times[k - 1]
        if h[-1] <= 0.0:
            m, h = m[:-1], h[:-1]
        return m, h

    def refined(self, step: float, T: float | None = None) -> "DrivingFunction":
        """Same function with extra knots so no piece is longer than ``step``.

        The represented function is unchanged; the result extends to ``T``
        when ``T`` exceeds the horizon.
        """
        m, h = self.segments(self.horizon if T is None else T)
        if step <= 0:
            raise DomainError("step must be positive")
        counts = np.maximum(1, np.ceil(h / step - 1e-9).astype(int))
        mm = np.repeat(m, counts)
        hh = np.repeat(h / counts, counts)
        t = np.concatenate([[0.0], np.cumsum(hh)])
        v = np.concatenate([[0.0], np.cumsum(mm * hh)])
        # pin original knots exactly
        if counts.size:
            idx = np.concatenate([[0], np.cumsum(counts)])
            t0 = np.concatenate([[0.0], np.cumsum(h)])
            t[idx] = t0
            v[idx] = np.concatenate([[0.0], np.cumsum(m * h)])
        return DrivingFunction(t, v)

    def mirrored(self) -> "DrivingFunction":
        """Driving of the reflected curve ``x -> -x``."""
        return DrivingFunction(self.times, -self.values)

    # serialization -----------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "lambda"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DrivingFunction":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "lambda"]:
            raise MalformedInputError("driving CSV must have header 't,lambda'")
        try:
            data = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
        except (ValueError, IndexError) as exc:
            raise MalformedInputError(f"bad driving CSV row: {exc}") from exc
        if not data:
            raise MalformedInputError("driving CSV has no samples")
        t, v = zip(*data)
        return cls(t, v)

    def to_dict(self) -> dict:
        return {"times": [float(x) for x in self.times], "values": [float(x) for x in self.values]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "DrivingFunction":
        try:
            return cls(d["times"], d["values"])
        except (KeyError, TypeError) as exc:
            raise MalformedInputError("driving JSON needs 'times' and 'values'") from exc

    @classmethod
    def from_json(cls, text: str) -> "DrivingFunction":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedInputError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(d)


@dataclass(frozen=True)
class EnergyReport:
    """Energy of a driving function up to a horizon."""

    total: float
    per_interval: np.ndarray
    horizon: float


def energy(lam: DrivingFunction, T: float | None = None) -> EnergyReport:
    """Loewner energy ``(1/2) int_0^T lambda'^2`` of a piecewise-linear driver.

    Each linear piece of slope ``m`` and length ``h`` contributes
    ``m^2 h / 2``; the constant extension contributes nothing.
    """
    if T is None:
        T = lam.horizon
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    m, h = lam.segments(T) if T > 0 else (np.zeros(0), np.zeros(0))
    parts = 0.5 * m * m * h
    parts.setflags(write=False)
    return EnergyReport(float(parts.sum()), parts, float(T))


def energy_partition_sup(lam: DrivingFunction, partition) -> float:
    """Partition sum ``sum |lambda(t_j) - lambda(t_{j-1})|^2 / (t_j - t_{j-1})``.

    The sum carries no 1/2 prefactor, so its supremum over partitions is
    ``2 I_T``.
    """
    p = np.asarray(partition, dtype=float)
    if p.size < 2 or p[0] != 0.0 or np.any(np.diff(p) <= 0.0):
        raise MalformedInputError("partition must start at 0 and be strictly increasing")
    d = np.diff(lam(p))
    return float(np.sum(d * d / np.diff(p)))


def holder_half_norm_bound(lam: DrivingFunction, T: float | None = None):
    """Sample-pair estimate of the 1/2-Holder seminorm and its energy bound.

    Returns ``(norm_estimate, bound)`` with ``bound = sqrt(2 I_T)``.
    """
    if T is None:
        T = lam.horizon
    t = lam.times[lam.times <= T]
    if t[-1] < T:
        t = np.append(t, T)
    v = lam(t)
    best = 0.0
    chunk = max(1, 4_000_000 // max(t.size, 1))
    for i0 in range(0, t.size, chunk):
        ti = t[i0 : i0 + chunk, None]
        vi = v[i0 : i0 + chunk, None]
        dt = t[None, :] - ti
        mask = dt > 0
        if not mask.any():
            continue
        r = np.abs(v[None, :] - vi)[mask] / np.sqrt(dt[mask])
        best = max(best, float(r.max()))
    return best, math.sqrt(2.0 * energy(lam, T).total)


def scale_driving(lam: DrivingFunction, u: float) -> DrivingFunction:
    """Driving of the scaled curve ``u * gamma``: ``t -> u lambda(t / u^2)``."""
    if not u > 0:
        raise DomainError("scale factor must be positive")
    return DrivingFunction(lam.times * (u * u), lam.values * u)


def shift_restart(lam: DrivingFunction, s: float) -> DrivingFunction:
    """Driving of ``f_s(gamma[s, oo))``: ``t -> lambda(s + t) - lambda(s)``."""
    if s < 0:
        raise DomainError("restart time must be nonnegative")
    base = float(lam(s))
    keep = lam.times > s
    t = np.concatenate([[0.0], lam.times[keep] - s])
    v = np.concatenate([[0.0], lam.values[keep] - base])
    return DrivingFunction(t, v)


def piecewise_linear_knots(times, values) -> DrivingFunction:
    """Convenience constructor prepending ``(0, 0)`` when missing."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size == 0 or t[0] != 0.0:
        t = np.concatenate([[0.0], t])
        v = np.concatenate([[0.0], v])
    return DrivingFunction(t, v)
