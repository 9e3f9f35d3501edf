"""Planar geometry primitives shared by the planner, simulator, and rasterizer.

Conventions: points are (x, y) in meters, angles in radians, oriented boxes
are rectangles given by center, yaw, and full extents (length along the
box's local x axis, width along local y).
"""

from __future__ import annotations

import numpy as np

_TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angle(s) to [-pi, pi)."""
    return (np.asarray(a, dtype=float) + np.pi) % _TWO_PI - np.pi


def interp_angle(a0: float, a1: float, frac: float) -> float:
    """Interpolate from a0 toward a1 along the shorter arc, frac in [0, 1]."""
    return float(wrap_angle(a0 + float(wrap_angle(a1 - a0)) * frac))


def rot_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s], [s, c]])


def point_box_distance(points, center, yaw, length, width):
    """Euclidean distance from points (..., 2) to one oriented box (0 inside)."""
    pts = np.asarray(points, dtype=float)
    rel = pts - np.asarray(center, dtype=float)
    c, s = np.cos(yaw), np.sin(yaw)
    lx = rel[..., 0] * c + rel[..., 1] * s
    ly = -rel[..., 0] * s + rel[..., 1] * c
    dx = np.maximum(np.abs(lx) - 0.5 * length, 0.0)
    dy = np.maximum(np.abs(ly) - 0.5 * width, 0.0)
    return np.hypot(dx, dy)


def point_box_distance_steps(points, centers, yaws, length, width):
    """Per-step distance from trajectory points to a moving oriented box.

    points:  (..., S, 2) positions, one per step
    centers: (S, 2) box centers, yaws: (S,)
    Returns distances of shape (..., S); 0 when inside the box.
    """
    pts = np.asarray(points, dtype=float)
    rel = pts - np.asarray(centers, dtype=float)
    c = np.cos(yaws)
    s = np.sin(yaws)
    lx = rel[..., 0] * c + rel[..., 1] * s
    ly = -rel[..., 0] * s + rel[..., 1] * c
    dx = np.maximum(np.abs(lx) - 0.5 * length, 0.0)
    dy = np.maximum(np.abs(ly) - 0.5 * width, 0.0)
    return np.hypot(dx, dy)


def point_segments_distance(points, seg_a, seg_b):
    """Distance from points (P, 2) to each segment (M, 2)-(M, 2) -> (P, M)."""
    p = np.asarray(points, dtype=float)[:, None, :]
    a = np.asarray(seg_a, dtype=float)[None, :, :]
    b = np.asarray(seg_b, dtype=float)[None, :, :]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-18)
    t = np.clip(np.sum((p - a) * ab, axis=-1) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.hypot(p[..., 0] - proj[..., 0], p[..., 1] - proj[..., 1])


def point_polyline_distance(points, polyline):
    """Min distance from points (..., 2) to an open polyline (M >= 2, 2)."""
    poly = np.asarray(polyline, dtype=float)
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 2)
    if poly.shape[0] == 2:
        a, b = poly[0], poly[1]
        ab = b - a
        denom = max(float(ab @ ab), 1e-18)
        t = np.clip((flat - a) @ ab / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d = np.hypot(flat[:, 0] - proj[:, 0], flat[:, 1] - proj[:, 1])
    else:
        d = point_segments_distance(flat, poly[:-1], poly[1:]).min(axis=1)
    return d.reshape(pts.shape[:-1])


def box_corners(center, yaw, length, width):
    """Corners (4, 2) of an oriented box, counter-clockwise."""
    c, s = np.cos(yaw), np.sin(yaw)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(center, dtype=float)


def boxes_overlap(center_a, yaw_a, len_a, wid_a, center_b, yaw_b, len_b, wid_b) -> bool:
    """Separating-axis overlap test for two oriented boxes (closed: touching counts)."""
    ca = box_corners(center_a, yaw_a, len_a, wid_a)
    cb = box_corners(center_b, yaw_b, len_b, wid_b)
    for yaw in (yaw_a, yaw_a + 0.5 * np.pi, yaw_b, yaw_b + 0.5 * np.pi):
        axis = np.array([np.cos(yaw), np.sin(yaw)])
        pa = ca @ axis
        pb = cb @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True
