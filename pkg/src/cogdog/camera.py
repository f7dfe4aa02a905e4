"""Three-camera panorama geometry: project points to boxes and back.

The rig concatenates a left, front, and right camera into one panorama by
angular concatenation. Azimuth is measured clockwise from the robot heading
(positive to the robot's right), which is the direction panorama x grows, so
the left camera carries a negative yaw offset and panorama x increases
strictly with azimuth across seams. Each segment maps angle to pixel
linearly (equirectangular per segment), which keeps seams continuous.

Robot frame: x forward, y left, z up. World poses are (x, y, yaw) with yaw
counter-clockwise positive. Depth is the straight-line distance from the
camera center at (0, 0, mount_height) in the robot frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dsl import ObjectRef

_DEGENERATE_EPS = 1e-9


class PerceptionError(ValueError):
    pass


class DegeneratePoint(PerceptionError):
    pass


class OutOfBounds(PerceptionError):
    pass


class NonPositiveDepth(PerceptionError):
    pass


@dataclass(frozen=True)
class Camera:
    yaw_offset: float  # rad, clockwise-positive (panorama x direction)
    hfov: float  # rad
    vfov: float  # rad
    width_px: int
    height_px: int
    mount_height: float  # m above the robot origin

    def __post_init__(self):
        if not 0 < self.hfov < math.pi:
            raise ValueError("hfov must be in (0, pi)")
        if not 0 < self.vfov < math.pi:
            raise ValueError("vfov must be in (0, pi)")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("pixel dimensions must be positive")

    @property
    def az_min(self) -> float:
        return self.yaw_offset - self.hfov / 2

    @property
    def az_max(self) -> float:
        return self.yaw_offset + self.hfov / 2


@dataclass(frozen=True)
class CameraRig:
    """Ordered (left, front, right) cameras with contiguous azimuth ranges."""

    cameras: tuple[Camera, ...]
    max_range: float = 8.0  # m, detections beyond this do not project
    depth_quantization: float = 0.0  # m, 0 means exact depth

    def __post_init__(self):
        if len(self.cameras) != 3:
            raise ValueError("rig requires exactly 3 cameras (left, front, right)")
        for a, b in zip(self.cameras, self.cameras[1:]):
            if abs(a.az_max - b.az_min) > 1e-9:
                raise ValueError("camera azimuth ranges must be contiguous and non-overlapping")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.depth_quantization < 0:
            raise ValueError("depth_quantization must be >= 0")

    @property
    def width_px(self) -> int:
        return sum(c.width_px for c in self.cameras)

    @property
    def height_px(self) -> int:
        return max(c.height_px for c in self.cameras)

    @property
    def coverage(self) -> tuple[float, float]:
        return (self.cameras[0].az_min, self.cameras[-1].az_max)

    def camera_for_azimuth(self, azimuth: float) -> tuple[Camera, int] | None:
        """Owning camera and its panorama x offset; intervals are left-closed."""
        offset = 0
        for cam in self.cameras:
            if cam.az_min <= azimuth < cam.az_max:
                return cam, offset
            offset += cam.width_px
        return None

    def camera_for_x(self, x: float) -> tuple[Camera, int]:
        if not 0 <= x <= self.width_px:
            raise OutOfBounds(f"panorama x {x} outside [0, {self.width_px}]")
        offset = 0
        for cam in self.cameras:
            if x < offset + cam.width_px:
                return cam, offset
            offset += cam.width_px
        # x exactly at the right edge belongs to the last camera.
        last = self.cameras[-1]
        return last, self.width_px - last.width_px


def default_rig(
    hfov_deg: float = 90.0,
    vfov_deg: float = 60.0,
    width_px: int = 640,
    height_px: int = 480,
    mount_height: float = 0.3,
    max_range: float = 8.0,
    depth_quantization: float = 0.0,
) -> CameraRig:
    """Left/front/right cameras at -90/0/+90 degrees, 270 degrees total."""
    hfov = math.radians(hfov_deg)
    vfov = math.radians(vfov_deg)
    cams = tuple(
        Camera(math.radians(yaw), hfov, vfov, width_px, height_px, mount_height)
        for yaw in (-90.0, 0.0, 90.0)
    )
    return CameraRig(cams, max_range=max_range, depth_quantization=depth_quantization)


def rig_from_json(data: dict) -> CameraRig:
    """Build a rig from world-file JSON; all angles in the file are degrees."""
    cams = tuple(
        Camera(
            yaw_offset=math.radians(c["yaw_deg"]),
            hfov=math.radians(c.get("hfov_deg", 90.0)),
            vfov=math.radians(c.get("vfov_deg", 60.0)),
            width_px=int(c.get("width_px", 640)),
            height_px=int(c.get("height_px", 480)),
            mount_height=float(c.get("mount_height_m", 0.3)),
        )
        for c in data["cameras"]
    )
    return CameraRig(
        cams,
        max_range=float(data.get("max_range_m", 8.0)),
        depth_quantization=float(data.get("depth_quantization_m", 0.0)),
    )


def rig_to_json(rig: CameraRig) -> dict:
    return {
        "cameras": [
            {
                "yaw_deg": math.degrees(c.yaw_offset),
                "hfov_deg": math.degrees(c.hfov),
                "vfov_deg": math.degrees(c.vfov),
                "width_px": c.width_px,
                "height_px": c.height_px,
                "mount_height_m": c.mount_height,
            }
            for c in rig.cameras
        ],
        "max_range_m": rig.max_range,
        "depth_quantization_m": rig.depth_quantization,
    }


def azimuth_of(point: tuple[float, float, float]) -> float:
    """Clockwise azimuth of a robot-frame point (0 is dead ahead)."""
    return math.atan2(-point[1], point[0])


Bbox = tuple[float, float, float, float]


def _clamped_interval(center: float, half: float, lo: float, hi: float) -> tuple[float, float]:
    """Shrink a half-extent so the interval fits [lo, hi] without moving its
    center; only a center exactly on the boundary shifts the box inward."""
    half = min(half, (hi - lo) / 2)
    effective = min(half, center - lo, hi - center)
    if effective > 0:
        return center - effective, center + effective
    if center <= lo:
        return lo, lo + half
    return hi - half, hi


def project(point: tuple[float, float, float], rig: CameraRig, extent: float) -> Bbox | None:
    """Project a robot-frame point to a panorama box, or None if not visible.

    ``extent`` is the object radius in meters; the box inflates by its angular
    size at the point's distance and clamps to the panorama while keeping its
    center fixed, so localize() inverts project() exactly. Elevation outside
    the vertical field of view clamps to the image edge rather than hiding the
    point; visibility is decided by azimuth coverage and range only.
    """
    if extent <= 0:
        raise ValueError("extent must be positive")
    x, y, z = point
    owner = rig.camera_for_azimuth(azimuth_of(point))
    m0 = rig.cameras[0].mount_height
    if math.sqrt(x * x + y * y + (z - m0) ** 2) < _DEGENERATE_EPS:
        raise DegeneratePoint("point coincides with the camera center")
    if owner is None:
        return None
    cam, x_offset = owner
    horiz = math.hypot(x, y)
    dz = z - cam.mount_height
    dist = math.hypot(horiz, dz)
    if dist < _DEGENERATE_EPS:
        raise DegeneratePoint("point coincides with the camera center")
    if dist > rig.max_range:
        return None
    az = azimuth_of(point)
    el = math.atan2(dz, horiz)
    el = max(-cam.vfov / 2, min(cam.vfov / 2, el))
    cx = x_offset + (az - cam.az_min) / cam.hfov * cam.width_px
    cy = (cam.vfov / 2 - el) / cam.vfov * cam.height_px
    half_ang = math.atan2(extent, dist)
    hx = half_ang / cam.hfov * cam.width_px
    hy = half_ang / cam.vfov * cam.height_px
    x1, x2 = _clamped_interval(cx, hx, 0.0, float(rig.width_px))
    y1, y2 = _clamped_interval(cy, hy, 0.0, float(rig.height_px))
    return (x1, y1, x2, y2)


def localize(bbox: Bbox, depth: float, rig: CameraRig) -> tuple[float, float, float]:
    """Invert the box center back to a robot-frame point at the given depth."""
    if depth <= 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    x1, y1, x2, y2 = bbox
    if not (0 <= x1 < x2 <= rig.width_px and 0 <= y1 < y2 <= rig.height_px):
        raise OutOfBounds(f"bbox {bbox} outside panorama {rig.width_px}x{rig.height_px}")
    cx = (x1 + x2) / 2
    cy = (y1 + y2) / 2
    cam, x_offset = rig.camera_for_x(cx)
    az = cam.az_min + (cx - x_offset) / cam.width_px * cam.hfov
    el = cam.vfov / 2 - cy / cam.height_px * cam.vfov
    horiz = depth * math.cos(el)
    return (
        horiz * math.cos(az),
        -horiz * math.sin(az),
        cam.mount_height + depth * math.sin(el),
    )


def camera_distance(point: tuple[float, float, float], rig: CameraRig) -> float:
    """Distance from the camera center to a robot-frame point."""
    owner = rig.camera_for_azimuth(azimuth_of(point))
    cam = owner[0] if owner else rig.cameras[0]
    return math.hypot(math.hypot(point[0], point[1]), point[2] - cam.mount_height)


def to_world(
    point: tuple[float, float, float], pose: tuple[float, float, float]
) -> tuple[float, float, float]:
    """Robot-frame point to world frame: rotate by yaw, translate; z unchanged."""
    px, py, pz = point
    rx, ry, yaw = pose
    c, s = math.cos(yaw), math.sin(yaw)
    return (rx + px * c - py * s, ry + px * s + py * c, pz)


def to_robot(
    point: tuple[float, float, float], pose: tuple[float, float, float]
) -> tuple[float, float, float]:
    """Inverse of :func:`to_world`."""
    wx, wy, wz = point
    rx, ry, yaw = pose
    dx, dy = wx - rx, wy - ry
    c, s = math.cos(yaw), math.sin(yaw)
    return (dx * c + dy * s, -dx * s + dy * c, wz)


@dataclass(frozen=True)
class Detection:
    """A detected object: its reference, panorama box, and 3D localization."""

    ref: ObjectRef
    bbox: Bbox
    depth: float
    point_robot: tuple[float, float, float]
    point_world: tuple[float, float, float]
