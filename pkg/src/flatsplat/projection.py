"""Perspective projection of flat Gaussians onto a camera image plane.

Cameras sit on the Y axis looking at the origin. Camera space follows the
x-right / y-down / z-forward convention; pixel (i, j) has its center at
(i + 0.5, j + 0.5), so an on-axis point projects exactly to (W/2, H/2).

The 2D covariance follows the standard splatting construction: the world
covariance is rotated into camera space and pushed through the Jacobian of
the perspective map at the mean (factored as B = J W R, so cov2d =
B diag(s^2) B^T), then floored with an anti-aliasing term. All the batched
matrix products are written out component-wise — the matrices are tiny and
this path runs once per training iteration. `project_backward` is the exact
reverse-mode transpose of the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import CameraRig, Mode, Scene

NEAR_PLANE = 0.01
COV2D_FLOOR = 0.3      # px^2 added to both diagonal entries before inversion
FRUSTUM_MARGIN = 1.3   # view-ray clamp used inside the Jacobian


@dataclass
class Camera:
    """One physical camera of a rig, resolved into matrices and intrinsics."""

    position: np.ndarray      # (3,)
    world_to_cam: np.ndarray  # (3, 3), rows: right, down, forward
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = NEAR_PLANE

    @property
    def resolution(self):
        return (self.width, self.height)

    def tan_half_fov(self):
        return self.cx / self.fx, self.cy / self.fy


def _intrinsics(rig: CameraRig):
    w, h = rig.width, rig.height
    f = (h / 2.0) / math.tan(rig.fov_vert / 2.0)
    return f, f, w / 2.0, h / 2.0, w, h


def primary_camera(rig: CameraRig) -> Camera:
    fx, fy, cx, cy, w, h = _intrinsics(rig)
    return Camera(
        position=np.array([0.0, -rig.cam_dist, 0.0]),
        world_to_cam=np.array([[1.0, 0.0, 0.0],
                               [0.0, 0.0, -1.0],
                               [0.0, 1.0, 0.0]]),
        fx=fx, fy=fy, cx=cx, cy=cy, width=w, height=h)


def mirror_camera(rig: CameraRig) -> Camera:
    fx, fy, cx, cy, w, h = _intrinsics(rig)
    return Camera(
        position=np.array([0.0, rig.cam_dist, 0.0]),
        world_to_cam=np.array([[-1.0, 0.0, 0.0],
                               [0.0, 0.0, -1.0],
                               [0.0, -1.0, 0.0]]),
        fx=fx, fy=fy, cx=cx, cy=cy, width=w, height=h)


def get_camera(rig: CameraRig, which: str = "primary") -> Camera:
    if which == "primary":
        return primary_camera(rig)
    if which == "mirror":
        return mirror_camera(rig)
    raise ValueError(f"unknown camera {which!r}")


@dataclass
class ProjectedGaussian:
    """Screen-space footprint of one Gaussian (spec-level single view)."""

    mean2d: np.ndarray   # (2,) pixels
    cov2d: np.ndarray    # (2, 2) px^2, symmetric positive definite
    depth: float         # camera-space forward distance
    alpha_peak: float    # activated opacity
    color: np.ndarray    # (3,)


@dataclass
class SceneProjection:
    """Vectorized projection of every Gaussian plus backward-pass caches."""

    valid: np.ndarray      # (N,) bool — survives near-plane and viewport culling
    mean2d: np.ndarray     # (N, 2)
    conic: np.ndarray      # (N, 3): inverse 2D covariance as (a, b, c)
    cov2d: np.ndarray      # (N, 3): (A, B, C) upper triangle
    depth: np.ndarray      # (N,)
    radius: np.ndarray     # (N,) 3-sigma extent in pixels
    # caches for the backward pass
    t_cam: np.ndarray      # (N, 3)
    txp: np.ndarray        # (N,) clamped view-ray x used by the Jacobian
    typ: np.ndarray
    clamp_x: np.ndarray    # (N,) bool
    clamp_y: np.ndarray
    m_jw: np.ndarray       # (N, 2, 3) J @ W
    b_mr: np.ndarray       # (N, 2, 3) J @ W @ R
    rotations: np.ndarray  # (N, 3, 3)


def project_scene(scene: Scene, camera: Camera) -> SceneProjection:
    n = scene.size
    rot = scene.rotations()
    scales = scene.scales
    w3 = camera.world_to_cam

    rel = scene.means - camera.position
    t = rel @ w3.T
    tz = t[:, 2]
    in_front = tz > camera.near
    tz_safe = np.where(in_front, tz, 1.0)
    inv_z = 1.0 / tz_safe

    mean2d = np.empty((n, 2))
    mean2d[:, 0] = camera.fx * t[:, 0] * inv_z + camera.cx
    mean2d[:, 1] = camera.fy * t[:, 1] * inv_z + camera.cy

    # Jacobian of the perspective map, with the view ray clamped to a margin
    # around the frustum so footprints far outside stay bounded.
    tanx, tany = camera.tan_half_fov()
    limx, limy = FRUSTUM_MARGIN * tanx, FRUSTUM_MARGIN * tany
    ux = t[:, 0] * inv_z
    uy = t[:, 1] * inv_z
    clamp_x = np.abs(ux) > limx
    clamp_y = np.abs(uy) > limy
    txp = np.where(clamp_x, np.sign(ux) * limx * tz_safe, t[:, 0])
    typ = np.where(clamp_y, np.sign(uy) * limy * tz_safe, t[:, 1])

    # M = J @ W with J = [[fx/z, 0, -fx x'/z^2], [0, fy/z, -fy y'/z^2]]
    j00 = camera.fx * inv_z
    j11 = camera.fy * inv_z
    j02 = -camera.fx * txp * inv_z * inv_z
    j12 = -camera.fy * typ * inv_z * inv_z
    m = np.empty((n, 2, 3))
    for k in range(3):
        m[:, 0, k] = j00 * w3[0, k] + j02 * w3[2, k]
        m[:, 1, k] = j11 * w3[1, k] + j12 * w3[2, k]

    # B = M @ R; cov2d = B diag(s^2) B^T + floor
    b = np.empty((n, 2, 3))
    for i in range(2):
        for k in range(3):
            b[:, i, k] = (m[:, i, 0] * rot[:, 0, k]
                          + m[:, i, 1] * rot[:, 1, k]
                          + m[:, i, 2] * rot[:, 2, k])
    s2 = scales ** 2
    a = (s2 * b[:, 0, :] ** 2).sum(axis=1) + COV2D_FLOOR
    bb = (s2 * b[:, 0, :] * b[:, 1, :]).sum(axis=1)
    c = (s2 * b[:, 1, :] ** 2).sum(axis=1) + COV2D_FLOOR

    det = a * c - bb * bb
    det_safe = np.where(det > 0, det, 1.0)
    conic = np.stack([c / det_safe, -bb / det_safe, a / det_safe], axis=1)

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))

    on_screen = ((mean2d[:, 0] + radius > 0.0)
                 & (mean2d[:, 0] - radius < camera.width)
                 & (mean2d[:, 1] + radius > 0.0)
                 & (mean2d[:, 1] - radius < camera.height))
    valid = in_front & (det > 0) & on_screen

    return SceneProjection(
        valid=valid, mean2d=mean2d, conic=conic,
        cov2d=np.stack([a, bb, c], axis=1), depth=tz, radius=radius,
        t_cam=t, txp=txp, typ=typ, clamp_x=clamp_x, clamp_y=clamp_y,
        m_jw=m, b_mr=b, rotations=rot)


def project(gaussian, camera: Camera):
    """Project a single FlatGaussian; returns ProjectedGaussian or None (culled)."""
    scene = Scene(
        means=gaussian.mean[None], quats=gaussian.quat[None],
        scales=gaussian.scales[None],
        opacity_logits=np.array([gaussian.opacity_logit]),
        colors=gaussian.color[None], mode=Mode.AMORPHOUS)
    proj = project_scene(scene, camera)
    if not proj.valid[0]:
        return None
    a, b, c = proj.cov2d[0]
    return ProjectedGaussian(
        mean2d=proj.mean2d[0].copy(),
        cov2d=np.array([[a, b], [b, c]]),
        depth=float(proj.depth[0]),
        alpha_peak=gaussian.opacity,
        color=gaussian.color.copy())


def project_backward(proj: SceneProjection, camera: Camera,
                     d_mean2d, d_conic, scene: Scene):
    """Chain screen-space gradients back to world parameters.

    Args:
        d_mean2d: (N, 2) gradient w.r.t. projected means (pixels).
        d_conic:  (N, 3) gradient w.r.t. the conic (a, b, c) parametrization.
    Returns:
        d_means (N, 3), d_rot (N, 3, 3), d_scales (N, 2) for (s2, s3).
    """
    t = proj.t_cam
    tz = np.where(proj.depth > camera.near, proj.depth, 1.0)
    scales = scene.scales
    rot = proj.rotations
    w3 = camera.world_to_cam
    b = proj.b_mr
    m = proj.m_jw

    # conic = inv(cov2d): dL/dcov = -Lam G Lam with G = [[ga, gb/2],[gb/2, gc]]
    la, lb, lc = proj.conic[:, 0], proj.conic[:, 1], proj.conic[:, 2]
    ga, gb, gc = d_conic[:, 0], 0.5 * d_conic[:, 1], d_conic[:, 2]
    p00 = la * ga + lb * gb
    p01 = la * gb + lb * gc
    p10 = lb * ga + lc * gb
    p11 = lb * gb + lc * gc
    gcov00 = -(p00 * la + p01 * lb)
    gcov01 = -(p00 * lb + p01 * lc)
    gcov11 = -(p10 * lb + p11 * lc)

    # cov2d = B diag(s^2) B^T:  dL/dB = 2 G B D, dL/ds_k = 2 s_k (B^T G B)_kk
    s2 = scales ** 2
    db = np.empty_like(b)
    for k in range(3):
        db[:, 0, k] = 2.0 * (gcov00 * b[:, 0, k] + gcov01 * b[:, 1, k]) * s2[:, k]
        db[:, 1, k] = 2.0 * (gcov01 * b[:, 0, k] + gcov11 * b[:, 1, k]) * s2[:, k]
    d_scales = np.empty((scene.size, 2))
    for k in (1, 2):
        btgb = (gcov00 * b[:, 0, k] ** 2
                + 2.0 * gcov01 * b[:, 0, k] * b[:, 1, k]
                + gcov11 * b[:, 1, k] ** 2)
        d_scales[:, k - 1] = 2.0 * scales[:, k] * btgb

    # B = M @ R:  dL/dR = M^T dB,  dL/dM = dB R^T
    d_rot = np.empty_like(rot)
    for j in range(3):
        for k in range(3):
            d_rot[:, j, k] = (m[:, 0, j] * db[:, 0, k]
                              + m[:, 1, j] * db[:, 1, k])
    dm = np.empty_like(m)
    for i in range(2):
        for j in range(3):
            dm[:, i, j] = (db[:, i, 0] * rot[:, j, 0]
                           + db[:, i, 1] * rot[:, j, 1]
                           + db[:, i, 2] * rot[:, j, 2])

    # M = J @ W: only four J entries exist
    dj00 = dm[:, 0, 0] * w3[0, 0] + dm[:, 0, 1] * w3[0, 1] + dm[:, 0, 2] * w3[0, 2]
    dj02 = dm[:, 0, 0] * w3[2, 0] + dm[:, 0, 1] * w3[2, 1] + dm[:, 0, 2] * w3[2, 2]
    dj11 = dm[:, 1, 0] * w3[1, 0] + dm[:, 1, 1] * w3[1, 1] + dm[:, 1, 2] * w3[1, 2]
    dj12 = dm[:, 1, 0] * w3[2, 0] + dm[:, 1, 1] * w3[2, 1] + dm[:, 1, 2] * w3[2, 2]

    fx, fy = camera.fx, camera.fy
    inv_z = 1.0 / tz
    inv_z2 = inv_z * inv_z
    d_txp = dj02 * (-fx * inv_z2)
    d_typ = dj12 * (-fy * inv_z2)
    d_tz = (dj00 * (-fx * inv_z2)
            + dj11 * (-fy * inv_z2)
            + dj02 * (2.0 * fx * proj.txp * inv_z2 * inv_z)
            + dj12 * (2.0 * fy * proj.typ * inv_z2 * inv_z))
    # through the frustum clamp: txp = sign * lim * tz when clamped, else t.x
    tanx, tany = camera.tan_half_fov()
    limx, limy = FRUSTUM_MARGIN * tanx, FRUSTUM_MARGIN * tany
    sx = np.sign(t[:, 0] * inv_z)
    sy = np.sign(t[:, 1] * inv_z)
    d_tx = np.where(proj.clamp_x, 0.0, d_txp)
    d_ty = np.where(proj.clamp_y, 0.0, d_typ)
    d_tz = d_tz + np.where(proj.clamp_x, d_txp * sx * limx, 0.0)
    d_tz = d_tz + np.where(proj.clamp_y, d_typ * sy * limy, 0.0)

    # mean2d uses the unclamped ray
    d_tx = d_tx + d_mean2d[:, 0] * fx * inv_z
    d_ty = d_ty + d_mean2d[:, 1] * fy * inv_z
    d_tz = d_tz - (d_mean2d[:, 0] * fx * t[:, 0]
                   + d_mean2d[:, 1] * fy * t[:, 1]) * inv_z2

    # t = W (mu - p)  ->  dL/dmu = W^T dL/dt
    d_means = np.empty((scene.size, 3))
    for k in range(3):
        d_means[:, k] = (d_tx * w3[0, k] + d_ty * w3[1, k] + d_tz * w3[2, k])

    invalid = ~proj.valid
    d_means[invalid] = 0.0
    d_rot[invalid] = 0.0
    d_scales[invalid] = 0.0
    return d_means, d_rot, d_scales
