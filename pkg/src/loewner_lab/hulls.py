"""Compact hulls with explicit hydrodynamically normalized map-outs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


def _slit_map(z, x0, h):
    u = np.asarray(z, dtype=complex) - x0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = u * np.sqrt(1.0 + (h * h) / (u * u))
    return r


@dataclass(frozen=True)
class SlitHull:
    """A hull ``K`` with mapping-out function ``g_K(z) = z + hcap/z + ...``.

    Use the constructors :meth:`vertical_slit`, :meth:`half_disk` and
    :meth:`compose`.  ``parts`` lists elementary pieces in application
    order: the map-out is ``g_n o ... o g_1``, where piece ``k`` is given
    in the coordinates produced by the previous pieces.
    """

    kind: str
    params: tuple
    parts: tuple = field(default=())

    @classmethod
    def vertical_slit(cls, x0: float, height: float) -> "SlitHull":
        if height <= 0:
            raise DomainError("slit height must be positive")
        return cls("vertical-slit", (float(x0), float(height)), (("slit", float(x0), float(height)),))

    @classmethod
    def half_disk(cls, x0: float, radius: float) -> "SlitHull":
        if radius <= 0:
            raise DomainError("radius must be positive")
        return cls("half-disk", (float(x0), float(radius)), (("disk", float(x0), float(radius)),))

    @classmethod
    def compose(cls, first: "SlitHull", second: "SlitHull") -> "SlitHull":
        """Hull ``K1 u g_{K1}^{-1}(K2)`` where ``K2`` lives in the image of ``g_{K1}``."""
        return cls("composed", first.params + second.params, first.parts + second.parts)

    # maps ----------------------------------------------------------------
    def map_out(self, z):
        """Evaluate ``g_K`` at points of the closed upper half-plane off ``K``."""
        w = np.asarray(z, dtype=complex)
        for kind, x0, p in self.parts:
            if kind == "slit":
                w = x0 + _slit_map(w, x0, p)
            else:
                w = w + p * p / (w - x0)
        return w

    def derivatives(self, z):
        """``(g, g', g'', g''')`` at ``z`` via the chain rule."""
        v = np.asarray(z, dtype=complex)
        d1 = np.ones_like(v)
        d2 = np.zeros_like(v)
        d3 = np.zeros_like(v)
        for kind, x0, p in self.parts:
            u = v - x0
            if kind == "slit":
                r = _slit_map(v, x0, p)
                f0 = x0 + r
                f1 = u / r
                f2 = p * p / r**3
                f3 = -3.0 * p * p * u / r**5
            else:
                f0 = v + p * p / u
                f1 = 1.0 - p * p / u**2
                f2 = 2.0 * p * p / u**3
                f3 = -6.0 * p * p / u**4
            d1, d2, d3 = f1 * d1, f2 * d1 * d1 + f1 * d2, f3 * d1**3 + 3 * f2 * d1 * d2 + f1 * d3
            v = f0
        return v, d1, d2, d3

    @property
    def extent(self) -> float:
        """Radius of a disk about 0 containing the hull."""
        ext = 0.0
        for _, x0, p in self.parts:
            ext += abs(x0) + p
        return ext

    def hcap(self, n: int = 256) -> float:
        """Expansion coefficient of ``g_K`` read off a large circle.

        The mean of ``z (g(z) - z)`` over ``|z| = R`` equals the ``1/z``
        coefficient; Schwarz reflection lets the upper half-circle carry
        the full average, and the periodic trapezoid rule converges
        geometrically.
        """
        R = 2.0 * self.extent + 1.0
        th = (np.arange(n) + 0.5) * math.pi / n
        z = R * np.exp(1j * th)
        vals = z * (self.map_out(z) - z)
        return float(np.mean(vals.real))

    def boundary(self, n: int = 400) -> np.ndarray:
        """Boundary arc of an elementary hull, from its base on the real line.

        For a slit the samples are denser near both ends; for a half-disk
        the arc runs from ``x0 + r`` to ``x0 - r``.
        """
        if len(self.parts) != 1:
            raise DomainError("boundary sampling is available for elementary hulls only")
        kind, x0, p = self.parts[0]
        s = 0.5 * (1.0 - np.cos(np.linspace(0.0, math.pi, n + 1)))
        if kind == "slit":
            return x0 + 1j * p * s
        return x0 + p * np.exp(1j * math.pi * s)

    def scaled(self, r: float) -> "SlitHull":
        parts = tuple((k, x0 * r, p * r) for k, x0, p in self.parts)
        return SlitHull(self.kind, tuple(v * r for v in self.params), parts)
