"""Space-time points and axis-aligned boxes.

A point is x = (x0, xhat): one time-like coordinate followed by n >= 1
spatial coordinates.  Vectorized code passes raw arrays of shape
(..., n+1); SpaceTimePoint is the user-facing record for single points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpaceTimePoint:
    """A single space-time point (x0, xhat)."""

    x0: float
    xhat: tuple

    def __post_init__(self):
        xh = tuple(float(v) for v in np.atleast_1d(self.xhat))
        if len(xh) < 1:
            raise ValueError("xhat needs at least one spatial coordinate")
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "xhat", xh)

    @property
    def n(self) -> int:
        return len(self.xhat)

    def as_array(self) -> np.ndarray:
        return np.array((self.x0,) + self.xhat, dtype=float)

    @classmethod
    def from_array(cls, arr) -> "SpaceTimePoint":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[0], tuple(arr[1:]))


def point_array(p) -> np.ndarray:
    """Coerce a SpaceTimePoint / sequence / array to a flat (n+1,) array."""
    if isinstance(p, SpaceTimePoint):
        return p.as_array()
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("a space-time point needs shape (n+1,) with n >= 1")
    return arr


@dataclass(frozen=True)
class Box:
    """Axis-aligned space-time box [t0, t1] x prod_i [xlo_i, xhi_i]."""

    t0: float
    t1: float
    xlo: tuple
    xhi: tuple

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))
        object.__setattr__(self, "xlo", tuple(float(v) for v in np.atleast_1d(self.xlo)))
        object.__setattr__(self, "xhi", tuple(float(v) for v in np.atleast_1d(self.xhi)))
        if len(self.xlo) != len(self.xhi) or len(self.xlo) < 1:
            raise ValueError("xlo/xhi must be equal-length, nonempty")
        if not (self.t1 > self.t0):
            raise ValueError("need t1 > t0")
        if any(b <= a for a, b in zip(self.xlo, self.xhi)):
            raise ValueError("need xhi > xlo per axis")

    @property
    def n(self) -> int:
        return len(self.xlo)

    @property
    def T(self) -> float:
        return self.t1 - self.t0

    def lo_array(self) -> np.ndarray:
        return np.array((self.t0,) + self.xlo, dtype=float)

    def hi_array(self) -> np.ndarray:
        return np.array((self.t1,) + self.xhi, dtype=float)

    def contains(self, pts, pad: float = 1e-9):
        """Boolean mask over pts of shape (..., n+1), True if inside (padded)."""
        pts = np.asarray(pts, dtype=float)
        lo = self.lo_array() - pad
        hi = self.hi_array() + pad
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def contains_spatial(self, xhat, pad: float = 1e-9):
        xhat = np.asarray(xhat, dtype=float)
        lo = np.asarray(self.xlo) - pad
        hi = np.asarray(self.xhi) + pad
        return np.all((xhat >= lo) & (xhat <= hi), axis=-1)

    def spatial_diameter(self) -> float:
        d = np.asarray(self.xhi) - np.asarray(self.xlo)
        return float(np.sqrt(np.sum(d * d)))

    def diameter(self) -> float:
        d = self.hi_array() - self.lo_array()
        return float(np.sqrt(np.sum(d * d)))

    def as_dict(self) -> dict:
        return {
            "t": [self.t0, self.t1],
            "x": [[a, b] for a, b in zip(self.xlo, self.xhi)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Box":
        xs = d["x"]
        return cls(d["t"][0], d["t"][1], tuple(a for a, _ in xs), tuple(b for _, b in xs))


# Default working box for the 1-D example fields.
DEFAULT_BOX = Box(0.0, 1.0, (-1.5,), (1.5,))
