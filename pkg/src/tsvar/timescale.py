"""Finite time scales: strictly increasing point sets with jump operators.

A time scale here is a finite set of real points t0 < t1 < ... < t_{N-1}
with N >= 3 (so the interior is nonempty).  The forward jump sigma maps each
point to its successor and clamps at the maximum; the backward jump rho maps
to the predecessor and clamps at the minimum.  The graininess functions are
mu(t) = sigma(t) - t and nu(t) = t - rho(t), so mu vanishes only at the
maximum and nu only at the minimum.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeScale",
    "TimeScaleError",
    "PointClass",
    "from_points",
    "uniform",
    "h_integers",
    "q_scale",
    "sigma",
    "rho",
    "mu",
    "nu",
    "point_class",
    "kappa_range",
    "kappa_sub_range",
    "kappa2_range",
    "kappa2_sub_range",
    "interior_range",
]


class TimeScaleError(ValueError):
    pass


class PointClass(enum.Enum):
    RIGHT_SCATTERED = "right-scattered"
    RIGHT_DENSE = "right-dense"
    LEFT_SCATTERED = "left-scattered"
    LEFT_DENSE = "left-dense"
    ISOLATED = "isolated"
    DENSE = "dense"


@dataclass(frozen=True)
class TimeScale:
    points: np.ndarray
    label: str | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 3:
            raise TimeScaleError("a time scale needs at least 3 points")
        if not np.all(np.isfinite(pts)):
            raise TimeScaleError("time scale points must be finite")
        gaps = np.diff(pts)
        if np.any(gaps == 0):
            raise TimeScaleError("duplicate points are not allowed")
        if np.any(gaps < 0):
            raise TimeScaleError("points must be strictly increasing")
        # forward/backward gaps with the clamped-endpoint convention
        object.__setattr__(self, "_mu", np.append(gaps, 0.0))
        object.__setattr__(self, "_nu", np.insert(gaps, 0, 0.0))

    def __len__(self) -> int:
        return int(self.points.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeScale) and np.array_equal(self.points, other.points)

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    @property
    def mu_values(self) -> np.ndarray:
        """mu at every point; mu(b) = 0."""
        return self._mu

    @property
    def nu_values(self) -> np.ndarray:
        """nu at every point; nu(a) = 0."""
        return self._nu

    def index_of(self, t: float) -> int:
        """Index of ``t`` in the point set; raises if absent."""
        i = int(np.searchsorted(self.points, t))
        if i >= len(self) or self.points[i] != t:
            raise TimeScaleError(f"{t!r} is not a point of the time scale")
        return i


def from_points(xs) -> TimeScale:
    """Build a time scale from an ascending list of at least 3 distinct reals."""
    return TimeScale(np.asarray(xs, dtype=float), label="explicit")


def uniform(a: float, b: float, n: int) -> TimeScale:
    """n equally spaced points from a to b (step (b-a)/(n-1))."""
    if n < 3:
        raise TimeScaleError("uniform scale needs n >= 3")
    if not b > a:
        raise TimeScaleError("uniform scale needs b > a")
    return TimeScale(np.linspace(a, b, int(n)), label="uniform")


def h_integers(a: float, b: float, h: float) -> TimeScale:
    """The points a, a+h, ..., b; (b-a)/h must be an integer >= 2."""
    if h <= 0:
        raise TimeScaleError("h must be positive")
    steps = (b - a) / h
    m = round(steps)
    if m < 2 or abs(steps - m) > 1e-9 * max(1.0, abs(steps)):
        raise TimeScaleError("(b-a)/h must be an integer >= 2")
    return TimeScale(np.linspace(a, b, m + 1), label="h-integers")


def q_scale(q: float, kmin: int, kmax: int) -> TimeScale:
    """Geometric points q^kmin, ..., q^kmax for q > 1."""
    if q <= 1:
        raise TimeScaleError("q must exceed 1")
    if kmax < kmin + 2:
        raise TimeScaleError("q-scale needs kmax >= kmin + 2")
    ks = np.arange(int(kmin), int(kmax) + 1)
    return TimeScale(np.power(float(q), ks), label="q-scale")


def sigma(ts: TimeScale, t: float) -> float:
    """Forward jump: next point, clamped at the maximum."""
    i = ts.index_of(t)
    return float(ts.points[min(i + 1, len(ts) - 1)])


def rho(ts: TimeScale, t: float) -> float:
    """Backward jump: previous point, clamped at the minimum."""
    i = ts.index_of(t)
    return float(ts.points[max(i - 1, 0)])


def mu(ts: TimeScale, t: float) -> float:
    """Forward graininess sigma(t) - t."""
    return float(ts.mu_values[ts.index_of(t)])


def nu(ts: TimeScale, t: float) -> float:
    """Backward graininess t - rho(t)."""
    return float(ts.nu_values[ts.index_of(t)])


def point_class(ts: TimeScale, t: float) -> frozenset[PointClass]:
    """All classifications of ``t`` consistent with its sigma/rho values."""
    s, r = sigma(ts, t), rho(ts, t)
    out = set()
    out.add(PointClass.RIGHT_SCATTERED if s > t else PointClass.RIGHT_DENSE)
    out.add(PointClass.LEFT_SCATTERED if r < t else PointClass.LEFT_DENSE)
    if r < t < s:
        out.add(PointClass.ISOLATED)
    if r == t == s:
        out.add(PointClass.DENSE)
    return frozenset(out)


def kappa_range(ts: TimeScale) -> range:
    """Indices of the scale minus its maximum point."""
    return range(0, len(ts) - 1)


def kappa_sub_range(ts: TimeScale) -> range:
    """Indices of the scale minus its minimum point."""
    return range(1, len(ts))


def kappa2_range(ts: TimeScale) -> range:
    """Indices of the scale minus its two largest points."""
    return range(0, len(ts) - 2)


def kappa2_sub_range(ts: TimeScale) -> range:
    """Indices of the scale minus its two smallest points."""
    return range(2, len(ts))


def interior_range(ts: TimeScale) -> range:
    """Indices with both endpoints removed (the sup domain of the weak norm)."""
    return range(1, len(ts) - 1)
