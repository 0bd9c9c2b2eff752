"""Pinhole projection and synthesis of paired 2D-3D supervision.

Pairs store float32 values (the on-disk precision); the stored keypoints are
the exact float32 rounding of projecting the stored target and translation,
so reprojection is reproducible bit-for-bit from the file contents alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEAR_PLANE_MM = 100.0


class CameraError(Exception):
    pass


class BehindCamera(CameraError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise CameraError("focal lengths must be positive")
        if not (0 < self.cx < self.image_width and 0 < self.cy < self.image_height):
            raise CameraError("principal point must lie inside the image")


# Mocap-style default: 1000x1000 px sensor, ~1145 px focal length.
DEFAULT_INTRINSICS = Intrinsics(1145.0, 1145.0, 500.0, 500.0, 1000, 1000)


@dataclass
class Pair2D3D:
    keypoints2d: np.ndarray   # (J, 2) float32 px
    target3d: np.ndarray      # (J, 3) float32 mm, root-relative
    translation: np.ndarray   # (3,) float32 mm, camera frame
    intrinsics: Intrinsics


def project(pose, translation, intrinsics):
    """Perspective projection u = fx X/Z + cx, v = fy Y/Z + cy per joint."""
    pts = np.asarray(pose, dtype=np.float64) + np.asarray(translation, dtype=np.float64)
    z = pts[:, 2]
    if np.any(z <= NEAR_PLANE_MM):
        raise BehindCamera(f"joint depth {z.min():.1f} mm is at or behind the near plane")
    u = intrinsics.fx * pts[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / z + intrinsics.cy
    return np.stack([u, v], axis=1)


def in_image(keypoints, intrinsics):
    kp = np.asarray(keypoints)
    return bool(np.all((kp[:, 0] >= 0) & (kp[:, 0] <= intrinsics.image_width)
                       & (kp[:, 1] >= 0) & (kp[:, 1] <= intrinsics.image_height)))


def make_pair(pose, translation, intrinsics):
    """Quantize a placement to float32 and project; the pair's reprojection
    identity holds bitwise on the quantized values."""
    target32 = np.asarray(pose, dtype=np.float32)
    trans32 = np.asarray(translation, dtype=np.float32)
    kp = project(target32.astype(np.float64), trans32.astype(np.float64), intrinsics)
    return Pair2D3D(kp.astype(np.float32), target32, trans32, intrinsics)


def reprojects_exactly(pair):
    """Reprojection-consistency check used by tests and loaders."""
    kp = project(pair.target3d.astype(np.float64),
                 pair.translation.astype(np.float64), pair.intrinsics)
    return bool(np.array_equal(kp.astype(np.float32), pair.keypoints2d))


def generate_pairs(poses, intrinsics=DEFAULT_INTRINSICS, depth_range=(3000.0, 8000.0),
                   rng_seed=0, max_attempts=100, on_skip=None):
    """Yield one Pair2D3D per pose, placing each at a random depth with the
    lateral offset rejection-sampled until all joints project in-image.

    The first attempt is always centered on the principal ray; later attempts
    aim the root at a uniformly drawn pixel in the central half of the image.
    Placement for pose i depends only on (rng_seed, i), so runs are
    deterministic and shardable.
    """
    lo, hi = depth_range
    if lo <= NEAR_PLANE_MM:
        raise CameraError(f"depth_range must start beyond {NEAR_PLANE_MM} mm")
    if hi < lo:
        raise CameraError("depth_range must be ordered")
    w, h = intrinsics.image_width, intrinsics.image_height
    poses = getattr(poses, "poses", poses)
    for index, pose in enumerate(poses):
        rng = np.random.default_rng([rng_seed, index])
        placed = None
        for attempt in range(max_attempts):
            z = rng.uniform(lo, hi)
            if attempt == 0:
                tx, ty = 0.0, 0.0
            else:
                u0 = rng.uniform(0.25 * w, 0.75 * w)
                v0 = rng.uniform(0.25 * h, 0.75 * h)
                tx = (u0 - intrinsics.cx) * z / intrinsics.fx
                ty = (v0 - intrinsics.cy) * z / intrinsics.fy
            try:
                pair = make_pair(pose, (tx, ty, z), intrinsics)
            except BehindCamera:
                continue
            if in_image(pair.keypoints2d, intrinsics):
                placed = pair
                break
        if placed is None:
            if on_skip is not None:
                on_skip(index)
            continue
        yield placed


def save_camera(path, intrinsics):
    with open(path, "w") as fh:
        for key in ("fx", "fy", "cx", "cy"):
            fh.write(f"{key} = {getattr(intrinsics, key)!r}\n")
        fh.write(f"width = {intrinsics.image_width}\n")
        fh.write(f"height = {intrinsics.image_height}\n")


def load_camera(path):
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    try:
        return Intrinsics(float(values["fx"]), float(values["fy"]),
                          float(values["cx"]), float(values["cy"]),
                          int(values["width"]), int(values["height"]))
    except KeyError as exc:
        raise CameraError(f"camera file missing key {exc}") from exc
