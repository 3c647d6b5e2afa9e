"""Ground profiles ``z = h(x)`` with analytic normals."""

from __future__ import annotations

import numpy as np

from ..contact import FlatGround


class SineTerrain:
    """Flat ground with a band of raised-cosine waves.

    Over ``[start, start + length]`` the height is
    ``peak/2 · (1 - cos(2π (x - start) / λ))`` with ``λ = length / waves``,
    so the profile rises from zero and returns to zero at both ends.
    """

    def __init__(self, peak: float = 0.2, length: float = 11.5, waves: int = 5, start: float = 1.0):
        if peak < 0 or length <= 0 or int(waves) < 1:
            raise ValueError(f"invalid sine terrain (peak={peak}, length={length}, waves={waves})")
        self.peak = float(peak)
        self.length = float(length)
        self.waves = int(waves)
        self.start = float(start)
        self.wavelength = self.length / self.waves

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.start) & (x <= self.start + self.length)
        return 2.0 * np.pi * (x - self.start) / self.wavelength, inside

    def height(self, x):
        ph, inside = self._phase(x)
        return np.where(inside, 0.5 * self.peak * (1.0 - np.cos(ph)), 0.0)

    def slope(self, x):
        ph, inside = self._phase(x)
        return np.where(inside, 0.5 * self.peak * (2.0 * np.pi / self.wavelength) * np.sin(ph), 0.0)

    def normal(self, x):
        s = self.slope(x)
        n = np.stack([-s, np.ones_like(s)], -1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @property
    def max_slope(self) -> float:
        return 0.5 * self.peak * 2.0 * np.pi / self.wavelength


def make_terrain(kind: str = "flat", **params):
    if kind == "flat":
        return FlatGround(float(params.get("z0", 0.0)))
    if kind == "sine":
        return SineTerrain(**params)
    raise ValueError(f"unknown terrain kind {kind!r}; expected 'flat' or 'sine'")
