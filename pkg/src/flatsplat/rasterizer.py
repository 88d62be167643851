"""Differentiable forward rendering and its analytic backward pass.

Rendering: project every Gaussian, sort front-to-back by camera depth
(global, stable), bin footprints into pixel tiles and alpha-composite
per pixel. `render_backward` chains per-pixel loss gradients through the
compositing, the screen-space footprint and the projection back to the
world-space parameters of the active control mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import TILE
from .projection import Camera, SceneProjection, project_backward, project_scene
from .scene import Mode, Scene, sigmoid
from .triangles import quat_to_matrix_backward, rotation_from_phi_jac


@dataclass
class ParamGrads:
    """Per-Gaussian loss gradients; culled Gaussians hold exact zeros."""

    d_means: np.ndarray           # (N, 3); y is zeroed for 2d, routed to gamma for graphite
    d_quats: np.ndarray           # (N, 4) amorphous rotation gradient
    d_phi: np.ndarray             # (N,) 2d/graphite rotation gradient
    d_gamma: np.ndarray           # (N,) graphite offset gradient
    d_scales: np.ndarray          # (N, 2) w.r.t. (s2, s3)
    d_opacity_logits: np.ndarray  # (N,)
    d_colors: np.ndarray          # (N, 3)

    @classmethod
    def zeros(cls, n):
        return cls(
            d_means=np.zeros((n, 3)), d_quats=np.zeros((n, 4)),
            d_phi=np.zeros(n), d_gamma=np.zeros(n), d_scales=np.zeros((n, 2)),
            d_opacity_logits=np.zeros(n), d_colors=np.zeros((n, 3)))

    def add_(self, other):
        self.d_means += other.d_means
        self.d_quats += other.d_quats
        self.d_phi += other.d_phi
        self.d_gamma += other.d_gamma
        self.d_scales += other.d_scales
        self.d_opacity_logits += other.d_opacity_logits
        self.d_colors += other.d_colors
        return self


@dataclass
class RenderCache:
    projection: SceneProjection
    order: np.ndarray         # original indices of visible Gaussians, by depth
    tile_offsets: np.ndarray  # (ntiles + 1,)
    pair_gauss: np.ndarray    # (P,) indices into the sorted arrays
    mean2d_s: np.ndarray
    conic_s: np.ndarray
    radius_s: np.ndarray
    opacity_s: np.ndarray
    color_s: np.ndarray
    trans: np.ndarray         # (H, W) final transmittance
    stop: np.ndarray          # (H, W) int32 pair bound per pixel
    image: np.ndarray
    alpha_cache: np.ndarray   # (P, TILE*TILE) f32 forward alphas; sign flags clamp


def depth_sort(depths):
    """Stable ascending permutation over depths; ties keep input order."""
    return np.argsort(np.asarray(depths), kind="stable")


def _tile_pairs(mean2d, radius, width, height):
    """(tile, gaussian) incidence lists; input arrays are depth-sorted."""
    tiles_x = (width + TILE - 1) // TILE
    tiles_y = (height + TILE - 1) // TILE
    k = mean2d.shape[0]
    tx0 = np.clip(np.floor((mean2d[:, 0] - radius) / TILE), 0, tiles_x - 1).astype(np.int64)
    tx1 = np.clip(np.floor((mean2d[:, 0] + radius) / TILE), 0, tiles_x - 1).astype(np.int64)
    ty0 = np.clip(np.floor((mean2d[:, 1] - radius) / TILE), 0, tiles_y - 1).astype(np.int64)
    ty1 = np.clip(np.floor((mean2d[:, 1] + radius) / TILE), 0, tiles_y - 1).astype(np.int64)
    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = nx * ny
    offsets = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    gauss = np.repeat(np.arange(k, dtype=np.int64), counts)
    within = np.arange(total, dtype=np.int64) - offsets[gauss]
    lx = within % nx[gauss]
    ly = within // nx[gauss]
    tile = (ty0[gauss] + ly) * tiles_x + (tx0[gauss] + lx)
    order = np.lexsort((gauss, tile))  # by tile, then by depth rank
    tile_sorted = tile[order]
    pair_gauss = gauss[order]
    tile_offsets = np.searchsorted(
        tile_sorted, np.arange(tiles_x * tiles_y + 1, dtype=np.int64))
    return tiles_x, tile_offsets, pair_gauss


def render_forward(scene: Scene, camera: Camera, background=None,
                   dtype=np.float64):
    """Render and keep every intermediate the backward pass needs.

    dtype selects the compositing precision: float64 for exactness (the
    default, used by gradient checks), float32 for training throughput.
    """
    if background is None:
        background = scene.background
    background = np.asarray(background, dtype=dtype)
    w, h = camera.width, camera.height

    proj = project_scene(scene, camera)
    vis = np.nonzero(proj.valid)[0]
    order = vis[depth_sort(proj.depth[vis])]

    image = np.empty((h, w, 3), dtype=dtype)
    trans = np.ones((h, w), dtype=dtype)
    stop = np.zeros((h, w), dtype=np.int32)
    alpha_cache = np.zeros((0, 0), dtype=np.float32)

    mean2d_s = np.ascontiguousarray(proj.mean2d[order], dtype=dtype)
    conic_s = np.ascontiguousarray(proj.conic[order], dtype=dtype)
    radius_s = np.ascontiguousarray(proj.radius[order], dtype=dtype)
    opacity_s = np.ascontiguousarray(sigmoid(scene.opacity_logits[order]),
                                     dtype=dtype)
    color_s = np.ascontiguousarray(scene.colors[order], dtype=dtype)

    if order.size == 0:
        image[:] = background.astype(dtype)
        tiles_x = (w + TILE - 1) // TILE
        tiles_y = (h + TILE - 1) // TILE
        tile_offsets = np.zeros(tiles_x * tiles_y + 1, dtype=np.int64)
        pair_gauss = np.zeros(0, dtype=np.int64)
    else:
        tiles_x, tile_offsets, pair_gauss = _tile_pairs(
            mean2d_s, radius_s, w, h)
        alpha_cache = np.zeros((pair_gauss.shape[0], TILE * TILE),
                               dtype=np.float32)
        _kernels.composite_forward(
            TILE, w, h, tiles_x, tile_offsets, pair_gauss,
            mean2d_s, conic_s, radius_s, opacity_s, color_s, background,
            image, trans, stop, alpha_cache)

    cache = RenderCache(
        projection=proj, order=order, tile_offsets=tile_offsets,
        pair_gauss=pair_gauss, mean2d_s=mean2d_s, conic_s=conic_s,
        radius_s=radius_s, opacity_s=opacity_s, color_s=color_s, trans=trans,
        stop=stop, image=image, alpha_cache=alpha_cache)
    return image, cache


def render(scene: Scene, camera: Camera, background=None):
    """Alpha-composited (H, W, 3) image of the scene through one camera."""
    image, _ = render_forward(scene, camera, background)
    return image


def render_backward(scene: Scene, camera: Camera, loss_grad,
                    cache: RenderCache | None = None,
                    background=None, dtype=np.float64,
                    target=None) -> ParamGrads:
    """Gradients of a scalar loss w.r.t. every Gaussian parameter.

    Args:
        loss_grad: (H, W, 3) d(loss)/d(pixel) for the image this camera
            rendered; resolution must match the camera.
        cache: optional cache from render_forward for the same scene/camera;
            recomputed when omitted.
        target: optionally the image the loss compared against, validated to
            the same resolution (the gradient math itself only needs
            loss_grad).
    """
    loss_grad = np.asarray(loss_grad)
    expect = (camera.height, camera.width, 3)
    if loss_grad.shape != expect:
        raise ValueError(
            f"loss_grad shape {loss_grad.shape} does not match the camera "
            f"resolution {expect}")
    if target is not None and np.asarray(target).shape != expect:
        raise ValueError(
            f"target shape {np.asarray(target).shape} does not match the "
            f"camera resolution {expect}")
    if cache is None:
        _, cache = render_forward(scene, camera, background, dtype=dtype)
    dtype = cache.mean2d_s.dtype
    loss_grad = np.ascontiguousarray(loss_grad, dtype=dtype)
    if background is None:
        background = scene.background
    background = np.asarray(background, dtype=dtype)

    n = scene.size
    grads = ParamGrads.zeros(n)
    order = cache.order
    if order.size == 0:
        return grads

    pair_grad = np.zeros((cache.pair_gauss.shape[0], 9), dtype=dtype)
    tiles_x = (camera.width + TILE - 1) // TILE
    _kernels.composite_backward(
        TILE, camera.width, camera.height, tiles_x, cache.tile_offsets,
        cache.pair_gauss, cache.mean2d_s, cache.conic_s, cache.radius_s,
        cache.opacity_s, cache.color_s, background, loss_grad, cache.trans,
        cache.stop, cache.alpha_cache, pair_grad)

    k = order.size
    acc = np.zeros((k, 9), dtype=np.float64)
    np.add.at(acc, cache.pair_gauss, pair_grad.astype(np.float64))

    # screen-space gradients indexed by original Gaussian
    d_mean2d = np.zeros((n, 2))
    d_conic = np.zeros((n, 3))
    d_opacity = np.zeros(n)
    d_mean2d[order] = acc[:, 0:2]
    d_conic[order] = acc[:, 2:5]
    d_opacity[order] = acc[:, 5]
    grads.d_colors[order] = acc[:, 6:9]

    d_means, d_rot, d_scales = project_backward(
        cache.projection, camera, d_mean2d, d_conic, scene)
    grads.d_scales = d_scales

    opa = sigmoid(scene.opacity_logits)
    grads.d_opacity_logits = d_opacity * opa * (1.0 - opa)

    if scene.mode is Mode.AMORPHOUS:
        grads.d_means = d_means
        grads.d_quats = quat_to_matrix_backward(scene.quats, d_rot)
    else:
        grads.d_phi = np.einsum("nij,nij->n", d_rot, rotation_from_phi_jac(scene.phi))
        if scene.mode is Mode.GRAPHITE:
            grads.d_gamma = d_means[:, 1].copy()
        d_means = d_means.copy()
        d_means[:, 1] = 0.0
        grads.d_means = d_means
    return grads
