"""Arc-length parameterized reference paths for Frenet-frame planning.

A ReferencePath is fitted through a lane centerline and indexed by arc
length, with linear extensions beyond both ends so queries slightly
outside the fitted span stay well defined.  Collinear centerlines take a
closed-form straight-line representation; everything else uses a cubic
spline re-parameterized by arc length.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline


class PathError(ValueError):
    """Degenerate centerline or out-of-domain Frenet query."""


class FrenetSingularityError(PathError):
    """Lateral offset reaches the local center of curvature."""


class ReferencePath:
    """Smooth curve through centerline points, indexed by arc length s.

    The left normal is the tangent rotated +90 deg, so positive lateral
    offsets d lie to the left of the travel direction.  position/
    tangent/normal/curvature accept scalars or arrays of any shape.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise PathError("centerline needs >= 2 (x, y) points")
        keep = np.concatenate(([True], np.hypot(*np.diff(pts, axis=0).T) > 1e-12))
        pts = pts[keep]
        if pts.shape[0] < 2:
            raise PathError("degenerate centerline (zero length)")

        span = pts[-1] - pts[0]
        span_len = float(np.hypot(*span))
        if span_len > 0:
            axis = span / span_len
            off = (pts - pts[0]) @ np.array([-axis[1], axis[0]])
            along = (pts - pts[0]) @ axis
            self._straight = (np.max(np.abs(off)) < 1e-9
                              and np.all(np.diff(along) > 0))
        else:
            self._straight = False

        if self._straight:
            self._p0 = pts[0].copy()
            self._t0 = axis
            self._t1 = axis
            self.total_length = span_len
            self._p1 = pts[-1].copy()
            self._lut_s = np.array([0.0, self.total_length])
            self._lut_p = np.vstack([self._p0, self._p1])
            return

        if pts.shape[0] == 2:
            # two points define a segment; add the midpoint for a stable fit
            pts = np.vstack([pts[0], 0.5 * (pts[0] + pts[1]), pts[1]])
        chord = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))))
        fx = CubicSpline(chord, pts[:, 0], bc_type="natural")
        fy = CubicSpline(chord, pts[:, 1], bc_type="natural")

        # re-parameterize by arc length: densely sample the chord fit,
        # accumulate true arc length, refit on the arc grid
        dense = [np.linspace(chord[i], chord[i + 1], 17)[:-1] for i in range(len(chord) - 1)]
        u = np.concatenate(dense + [chord[-1:]])
        xs, ys = fx(u), fy(u)
        arc = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(xs), np.diff(ys)))))
        arc, idx = np.unique(arc, return_index=True)
        self._sx = CubicSpline(arc, xs[idx], bc_type="natural")
        self._sy = CubicSpline(arc, ys[idx], bc_type="natural")
        self.total_length = float(arc[-1])

        self._p0 = np.array([float(self._sx(0.0)), float(self._sy(0.0))])
        self._p1 = np.array([float(self._sx(self.total_length)),
                             float(self._sy(self.total_length))])
        self._t0 = self._unit_tangent_at(0.0)
        self._t1 = self._unit_tangent_at(self.total_length)

        # projection lookup table, ~0.25 m spacing (bounded size)
        n_lut = int(min(max(round(self.total_length / 0.25), 8), 4096))
        self._lut_s = np.linspace(0.0, self.total_length, n_lut + 1)
        self._lut_p = np.stack([self._sx(self._lut_s), self._sy(self._lut_s)], axis=1)

    def _unit_tangent_at(self, s: float) -> np.ndarray:
        d = np.array([float(self._sx(s, 1)), float(self._sy(s, 1))])
        n = np.hypot(*d)
        return d / n if n > 0 else np.array([1.0, 0.0])

    @property
    def is_straight(self) -> bool:
        return self._straight

    # -- evaluation ---------------------------------------------------------

    def frame(self, s):
        """Batched (position, tangent, curvature) at arc positions s.

        One spline pass instead of three; the workhorse of the planner
        kernel.  Shapes: s (...,) -> pos (..., 2), tan (..., 2), kappa (...).
        """
        s = np.asarray(s, dtype=float)
        if self._straight:
            pos = self._p0 + s[..., None] * self._t0
            tan = np.broadcast_to(self._t0, s.shape + (2,))
            return pos, tan, np.zeros_like(s)
        sc = np.clip(s, 0.0, self.total_length)
        x, y = self._sx(sc), self._sy(sc)
        dx, dy = self._sx(sc, 1), self._sy(sc, 1)
        ddx, ddy = self._sx(sc, 2), self._sy(sc, 2)
        below = s < 0.0
        above = s > self.total_length
        if np.any(below) or np.any(above):
            x = np.where(below, self._p0[0] + s * self._t0[0], x)
            y = np.where(below, self._p0[1] + s * self._t0[1], y)
            ds = s - self.total_length
            x = np.where(above, self._p1[0] + ds * self._t1[0], x)
            y = np.where(above, self._p1[1] + ds * self._t1[1], y)
            dx = np.where(below, self._t0[0], np.where(above, self._t1[0], dx))
            dy = np.where(below, self._t0[1], np.where(above, self._t1[1], dy))
            ddx = np.where(below | above, 0.0, ddx)
            ddy = np.where(below | above, 0.0, ddy)
        norm = np.maximum(np.hypot(dx, dy), 1e-12)
        tan = np.stack([dx / norm, dy / norm], axis=-1)
        kappa = (dx * ddy - dy * ddx) / norm ** 3
        return np.stack([x, y], axis=-1), tan, kappa

    def position(self, s):
        pos, _, _ = self.frame(s)
        return pos

    def tangent(self, s):
        _, tan, _ = self.frame(s)
        return tan

    def normal(self, s):
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def curvature(self, s):
        _, _, kappa = self.frame(s)
        return kappa

    def yaw(self, s):
        t = self.tangent(s)
        return np.arctan2(t[..., 1], t[..., 0])

    # -- Frenet conversions -------------------------------------------------

    def to_cartesian(self, s: float, d: float) -> np.ndarray:
        """Map Frenet (s, d) to a Cartesian point; s must lie on the path."""
        if s < -1e-9 or s > self.total_length + 1e-9:
            raise PathError(f"s={s} outside [0, {self.total_length}]")
        kappa = float(self.curvature(s))
        if kappa != 0.0 and 1.0 - kappa * d <= 0.0:
            raise FrenetSingularityError("frenet singularity")
        return self.position(s) + d * self.normal(s)

    def project(self, point) -> tuple:
        """Closest-point projection -> (s, d); d > 0 left of the path."""
        s, d = self.project_many(np.asarray(point, dtype=float)[None, :])
        return float(s[0]), float(d[0])

    def from_cartesian(self, point) -> tuple:
        return self.project(point)

    def project_many(self, points) -> tuple:
        """Vectorized closest-point projection: (P, 2) -> (s, d) arrays."""
        p = np.asarray(points, dtype=float)
        if p.size == 0:
            return np.zeros(0), np.zeros(0)
        if self._straight:
            rel = p - self._p0
            s = rel @ self._t0
            d = rel @ np.array([-self._t0[1], self._t0[0]])
            return s, d
        d2 = np.sum((self._lut_p[None, :, :] - p[:, None, :]) ** 2, axis=2)
        s = self._lut_s[np.argmin(d2, axis=1)].astype(float).copy()
        L = self.total_length
        # Newton refinement on g(s) = (p - c(s)) . c'(s)
        for _ in range(12):
            sc = np.clip(s, 0.0, L)
            cx, cy = self._sx(sc), self._sy(sc)
            tx, ty = self._sx(sc, 1), self._sy(sc, 1)
            gx, gy = p[:, 0] - cx, p[:, 1] - cy
            g = gx * tx + gy * ty
            ccx, ccy = self._sx(sc, 2), self._sy(sc, 2)
            dg = -(tx * tx + ty * ty) + gx * ccx + gy * ccy
            step = np.where(np.abs(dg) > 1e-12, g / dg, 0.0)
            s = s - step
            if np.max(np.abs(step)) < 1e-10:
                break
        below = s < 0.0
        above = s > L
        if np.any(below):
            s = np.where(below, (p - self._p0) @ self._t0, s)
        if np.any(above):
            s = np.where(above, L + (p - self._p1) @ self._t1, s)
        rel = p - self.position(s)
        nor = self.normal(s)
        d = np.sum(rel * nor, axis=1)
        return s, d


def build_reference_path(lane) -> ReferencePath:
    """Fit an arc-length reference path to a lane centerline."""
    return ReferencePath(lane.centerline)
