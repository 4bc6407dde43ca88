"""Small planar-geometry helpers shared across the package.

Angles are radians in (-pi, pi], measured counter-clockwise from the +x
axis. Polylines are dense enough that per-segment linear interpolation is
adequate; no spline fitting happens anywhere.
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = (a + math.pi) % TWO_PI - math.pi
    if a == -math.pi:
        return math.pi
    return a


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Unsigned angle in [0, pi] between two nonzero vectors."""
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return abs(math.atan2(cross, dot))


def polygon_signed_area(pts: np.ndarray) -> float:
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class Polyline:
    """A 2D polyline with arclength parametrization.

    Args:
        points: (n, 2) array-like of vertices, n >= 2, consecutive
            vertices distinct.
    """

    def __init__(self, points) -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("polyline needs an (n, 2) array with n >= 2")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("polyline has a zero-length segment")
        self.points = pts
        self._seg = seg
        self._seg_len = seg_len
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum[-1])

    def interpolate(self, s: float) -> np.ndarray:
        """Point at arclength s (clamped to [0, length])."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self._seg) - 1)
        t = (s - self.cum[i]) / self._seg_len[i]
        return self.points[i] + t * self._seg[i]

    def tangent_at(self, s: float) -> float:
        """Heading of the segment containing arclength s."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self._seg) - 1)
        return math.atan2(self._seg[i, 1], self._seg[i, 0])

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Project a point onto the polyline.

        Returns:
            (arclength of the closest point, distance to it).
        """
        p = np.array([x, y], dtype=float)
        rel = p - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg) / (self._seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        closest = self.points[:-1] + t[:, None] * self._seg
        d2 = np.sum((closest - p) ** 2, axis=1)
        i = int(np.argmin(d2))
        s = self.cum[i] + t[i] * self._seg_len[i]
        return float(s), float(math.sqrt(d2[i]))

    def sample(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Evenly spaced points every `step` metres (endpoints included).

        Returns:
            (arclengths, (m, 2) points).
        """
        n = max(int(math.ceil(self.length / step)), 1)
        ss = np.linspace(0.0, self.length, n + 1)
        idx = np.clip(np.searchsorted(self.cum, ss, side="right") - 1, 0, len(self._seg) - 1)
        t = (ss - self.cum[idx]) / self._seg_len[idx]
        pts = self.points[idx] + t[:, None] * self._seg[idx]
        return ss, pts


def arc_points(cx: float, cy: float, radius: float, a0: float, a1: float, step: float = 0.08) -> np.ndarray:
    """Vertices approximating a circular arc from angle a0 to a1 (radians).

    The sign of (a1 - a0) picks the direction; step is the maximum angular
    spacing.
    """
    n = max(int(math.ceil(abs(a1 - a0) / step)), 2)
    ang = np.linspace(a0, a1, n + 1)
    return np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
