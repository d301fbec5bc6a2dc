"""Rotated-box geometry: canonical forms, minimum-area fitting, per-pixel
distance encoding, and exact polygon overlap.

Coordinates follow image conventions: x grows right, y grows down, and quad
vertices wind clockwise on screen (which makes the standard shoelace sum
positive). Angles are radians; a positive angle turns the box's width axis
from +x toward +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

QUARTER_PI = math.pi / 4.0
HALF_PI = math.pi / 2.0

_AREA_EPS = 1e-12
_COINCIDENT_EPS = 1e-9


class DegenerateGeometryError(ValueError):
    """Shape too degenerate to process: zero area or coincident vertices."""


class OutOfBoxError(ValueError):
    """A pixel that must lie inside a box lies outside it."""


class InvalidGeometryError(ValueError):
    """Geometry values outside their domain, e.g. non-positive distances."""


def signed_area(pts) -> float:
    """Shoelace signed area; positive for screen-clockwise vertex order."""
    p = np.asarray(pts, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(a, b, c, d) -> bool:
    """True if open segments ab and cd properly intersect."""

    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


@dataclass(frozen=True)
class Quad:
    """Simple 4-gon; vertices clockwise on screen, first vertex top-left-most."""

    pts: np.ndarray  # (4, 2) float64

    def __post_init__(self):
        pts = np.asarray(self.pts, dtype=np.float64)
        if pts.shape != (4, 2):
            raise ValueError(f"quad needs 4 vertices, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("quad vertices must be finite")
        object.__setattr__(self, "pts", pts)

    @classmethod
    def from_points(cls, pts, validate: bool = True) -> "Quad":
        """Build a Quad in canonical order from 4 vertices in any rotation
        of a consistent winding; flips counter-clockwise input."""
        p = np.asarray(pts, dtype=np.float64).reshape(4, 2)
        area = signed_area(p)
        if validate:
            if abs(area) < _AREA_EPS:
                raise DegenerateGeometryError("quad has (near-)zero area")
            for i in range(4):
                for j in range(i + 1, 4):
                    if np.hypot(*(p[i] - p[j])) < _COINCIDENT_EPS:
                        raise DegenerateGeometryError("coincident quad vertices")
        if area < 0:
            p = p[::-1].copy()
        if validate:
            if _segments_cross(p[0], p[1], p[2], p[3]) or _segments_cross(
                p[1], p[2], p[3], p[0]
            ):
                raise DegenerateGeometryError("self-intersecting quad")
        # roll so the top-left-most vertex (min x+y, ties by y then x) is first
        keys = [(p[i, 0] + p[i, 1], p[i, 1], p[i, 0]) for i in range(4)]
        p = np.roll(p, -int(min(range(4), key=lambda i: keys[i])), axis=0)
        return cls(p)

    @classmethod
    def from_flat(cls, values, validate: bool = True) -> "Quad":
        """From [x1, y1, x2, y2, x3, y3, x4, y4]."""
        return cls.from_points(np.asarray(values, dtype=np.float64).reshape(4, 2), validate)

    def as_flat(self) -> np.ndarray:
        return self.pts.reshape(-1).copy()

    def area(self) -> float:
        return abs(signed_area(self.pts))

    def centroid(self) -> np.ndarray:
        return self.pts.mean(axis=0)

    def translated(self, dx: float, dy: float) -> "Quad":
        return Quad(self.pts + np.array([dx, dy], dtype=np.float64))

    def scaled(self, sx: float, sy: float | None = None) -> "Quad":
        sy = sx if sy is None else sy
        return Quad(self.pts * np.array([sx, sy], dtype=np.float64))


@dataclass(frozen=True)
class RBox:
    """Rotated rectangle: center, width/height extents, rotation angle.

    Canonical form keeps theta in [-pi/4, +pi/4] with the width assigned to
    the near-horizontal edge pair; ties at the boundary resolve to +pi/4.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InvalidGeometryError(f"box extents must be positive, got w={self.w} h={self.h}")
        if not all(map(math.isfinite, (self.cx, self.cy, self.w, self.h, self.theta))):
            raise InvalidGeometryError("box fields must be finite")

    def area(self) -> float:
        return self.w * self.h

    @property
    def is_canonical(self) -> bool:
        return -QUARTER_PI < self.theta <= QUARTER_PI

    def canonical(self) -> "RBox":
        """Fold theta into (-pi/4, +pi/4], swapping extents per quarter turn."""
        if self.is_canonical:
            return self
        turns = math.floor((self.theta + QUARTER_PI) / HALF_PI)
        t = self.theta - turns * HALF_PI
        if t <= -QUARTER_PI + 1e-12:  # boundary tie goes to +pi/4
            t += HALF_PI
            turns += 1
        if turns % 2:
            return replace(self, w=self.h, h=self.w, theta=t)
        return replace(self, theta=t)


@dataclass(frozen=True)
class PixelGeometry:
    """Perpendicular distances from a pixel to the four box edges, plus angle.

    Distance order is top, right, bottom, left; all are strictly positive for
    interior pixels.
    """

    d_top: float
    d_right: float
    d_bottom: float
    d_left: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.d_top, self.d_right, self.d_bottom, self.d_left, self.theta],
            dtype=np.float64,
        )


def convex_hull(points) -> np.ndarray:
    """Convex hull (monotone chain), returned counter-clockwise in math axes."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    if len(pts) < 3:
        return pts

    def half(iterable):
        out = []
        for p in iterable:
            while len(out) >= 2:
                a, b = out[-1] - out[-2], p - out[-2]
                if a[0] * b[1] - a[1] * b[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def min_area_rect(quad) -> RBox:
    """Fit the minimum-area enclosing rotated rectangle of a quad.

    One side of the optimum is collinear with a convex-hull edge, so hull
    edge angles are enumerated exhaustively and the smallest-area frame wins.
    """
    pts = quad.pts if isinstance(quad, Quad) else np.asarray(quad, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateGeometryError("need at least 3 points")
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.hypot(*(pts[i] - pts[j])) < _COINCIDENT_EPS:
                raise DegenerateGeometryError("coincident vertices")
    hull = convex_hull(pts)
    if len(hull) < 3 or abs(signed_area(hull)) < _AREA_EPS:
        raise DegenerateGeometryError("zero-area point set")

    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    best = None
    for ex, ey in edges:
        norm = math.hypot(ex, ey)
        if norm < _COINCIDENT_EPS:
            continue
        ux, uy = ex / norm, ey / norm
        # rotate hull into the edge frame: R(-phi) @ p
        xs = hull[:, 0] * ux + hull[:, 1] * uy
        ys = -hull[:, 0] * uy + hull[:, 1] * ux
        x0, x1 = xs.min(), xs.max()
        y0, y1 = ys.min(), ys.max()
        area = (x1 - x0) * (y1 - y0)
        if best is None or area < best[0]:
            best = (area, ux, uy, x0, x1, y0, y1)

    _, ux, uy, x0, x1, y0, y1 = best
    mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    cx = mx * ux - my * uy
    cy = mx * uy + my * ux
    return RBox(cx, cy, x1 - x0, y1 - y0, math.atan2(uy, ux)).canonical()


def rbox_to_quad(r: RBox) -> Quad:
    """Corner vertices of a rotated box, canonical quad order."""
    c, s = math.cos(r.theta), math.sin(r.theta)
    hw, hh = r.w / 2.0, r.h / 2.0
    local = np.array([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)], dtype=np.float64)
    rot = np.array([[c, s], [-s, c]], dtype=np.float64)  # row-vector form of R(theta)
    return Quad.from_points(local @ rot + np.array([r.cx, r.cy]), validate=False)


def rbox_corners(cx, cy, w, h, theta) -> np.ndarray:
    """Vectorized corner computation; inputs are broadcastable arrays,
    output has shape (..., 4, 2). Corner order matches rbox_to_quad up to roll."""
    cx, cy, w, h, theta = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (cx, cy, w, h, theta))
    )
    c, s = np.cos(theta), np.sin(theta)
    hw, hh = w / 2.0, h / 2.0
    lx = np.stack([-hw, hw, hw, -hw], axis=-1)
    ly = np.stack([-hh, -hh, hh, hh], axis=-1)
    x = cx[..., None] + lx * c[..., None] - ly * s[..., None]
    y = cy[..., None] + lx * s[..., None] + ly * c[..., None]
    return np.stack([x, y], axis=-1)


def encode_pixel_geometry(r: RBox, p) -> PixelGeometry:
    """Distances from pixel p (inside r) to the box edges, measured
    perpendicular to the rotated edges in input-image pixels."""
    px, py = float(p[0]), float(p[1])
    c, s = math.cos(r.theta), math.sin(r.theta)
    dx, dy = px - r.cx, py - r.cy
    qx = c * dx + s * dy
    qy = -s * dx + c * dy
    d_left = r.w / 2.0 + qx
    d_right = r.w / 2.0 - qx
    d_top = r.h / 2.0 + qy
    d_bottom = r.h / 2.0 - qy
    if min(d_left, d_right, d_top, d_bottom) < 0:
        raise OutOfBoxError(f"pixel ({px}, {py}) lies outside the box")
    return PixelGeometry(d_top, d_right, d_bottom, d_left, r.theta)


def decode_pixel_geometry(p, g: PixelGeometry) -> RBox:
    """Reconstruct the rotated box from a pixel location and its distances."""
    if min(g.d_top, g.d_right, g.d_bottom, g.d_left) <= 0:
        raise InvalidGeometryError("distances must be strictly positive to decode")
    px, py = float(p[0]), float(p[1])
    w = g.d_left + g.d_right
    h = g.d_top + g.d_bottom
    qx = (g.d_left - g.d_right) / 2.0
    qy = (g.d_top - g.d_bottom) / 2.0
    c, s = math.cos(g.theta), math.sin(g.theta)
    cx = px - (c * qx - s * qy)
    cy = py - (s * qx + c * qy)
    return RBox(cx, cy, w, h, g.theta).canonical()


def decode_geometry_grid(xs, ys, d_top, d_right, d_bottom, d_left, theta) -> np.ndarray:
    """Vectorized decode of N pixel geometries to corner arrays (N, 4, 2).

    Same math as decode_pixel_geometry followed by rbox_to_quad, without the
    canonical vertex roll (corner order is already consistent).
    """
    xs, ys, d_top, d_right, d_bottom, d_left, theta = (
        np.asarray(a, dtype=np.float64)
        for a in (xs, ys, d_top, d_right, d_bottom, d_left, theta)
    )
    w = d_left + d_right
    h = d_top + d_bottom
    qx = (d_left - d_right) / 2.0
    qy = (d_top - d_bottom) / 2.0
    c, s = np.cos(theta), np.sin(theta)
    cx = xs - (c * qx - s * qy)
    cy = ys - (s * qx + c * qy)
    return rbox_corners(cx, cy, w, h, theta)


def clip_polygon(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon by a convex clip polygon.

    Both wound clockwise on screen. Returns the clipped polygon's vertices;
    empty array when disjoint.
    """
    subject = np.asarray(subject, dtype=np.float64)
    clip = np.asarray(clip, dtype=np.float64)
    output = [tuple(v) for v in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            return np.empty((0, 2))
        ex, ey = clip[(i + 1) % n] - clip[i]
        ox, oy = clip[i]
        inputs = output
        output = []
        prev = inputs[-1]
        prev_in = ex * (prev[1] - oy) - ey * (prev[0] - ox) >= 0
        for cur in inputs:
            cur_in = ex * (cur[1] - oy) - ey * (cur[0] - ox) >= 0
            if cur_in != prev_in:
                # edge crossing: intersect prev->cur with the clip line
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                denom = ex * dy - ey * dx
                if denom != 0:
                    t = (ey * (prev[0] - ox) - ex * (prev[1] - oy)) / denom
                    output.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.asarray(output, dtype=np.float64)


def polygon_intersection_area(a, b) -> float:
    """Area of the intersection of two convex polygons; 0 when disjoint."""
    pa = a.pts if isinstance(a, Quad) else np.asarray(a, dtype=np.float64)
    pb = b.pts if isinstance(b, Quad) else np.asarray(b, dtype=np.float64)
    inter = clip_polygon(pa, pb)
    if len(inter) < 3:
        return 0.0
    return abs(signed_area(inter))


def quad_iou(a, b) -> float:
    """Intersection over union of two convex quads, in [0, 1]."""
    pa = a.pts if isinstance(a, Quad) else np.asarray(a, dtype=np.float64)
    pb = b.pts if isinstance(b, Quad) else np.asarray(b, dtype=np.float64)
    inter = polygon_intersection_area(pa, pb)
    if inter == 0.0:
        return 0.0
    union = abs(signed_area(pa)) + abs(signed_area(pb)) - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def rotated_iou(a: RBox, b: RBox) -> float:
    """Exact IoU of two rotated boxes via convex polygon clipping."""
    return quad_iou(rbox_to_quad(a), rbox_to_quad(b))


def shrink_rbox(r: RBox, factor: float) -> RBox:
    """Pull each side inward by factor * min(w, h); extents floored at 5%
    of the original so thin boxes keep a nonempty core."""
    m = 2.0 * factor * min(r.w, r.h)
    return replace(r, w=max(r.w - m, 0.05 * r.w), h=max(r.h - m, 0.05 * r.h))
