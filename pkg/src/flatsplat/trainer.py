"""Scene fitting: initialization, mirror objective, optimization loop.

Training minimizes (1 - lambda) * L1 + lambda * D-SSIM between renders and
the target image. With the mirror camera enabled the objective adds a second
term: the opposite camera must reproduce the horizontally flipped target,
which anchors out-of-plane structure. After every step the parameters are
projected back onto the active mode's manifold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.spatial import cKDTree

from .images import hflip
from .metrics import MetricReport, dssim, l1
from .optim import Adam
from .projection import mirror_camera, primary_camera
from .rasterizer import ParamGrads, render, render_backward, render_forward
from .scene import CameraRig, Mode, Scene, logit, sigmoid
from .triangles import FLAT_SCALE, quat_normalize, quaternion_from_phi


class TrainingDiverged(RuntimeError):
    """Loss or a parameter became non-finite; the message names the culprit."""


@dataclass
class TrainConfig:
    mode: Mode = Mode.AMORPHOUS
    n_init: int = 2000
    iterations: int = 2000
    dssim_weight: float = 0.2            # lambda in the combined loss
    lr_means: float = 1.6e-4             # scaled by scene extent
    lr_scales: float = 5e-3
    lr_rotation: float = 1e-3            # quaternion or phi
    lr_opacity: float = 5e-2
    lr_color: float = 2.5e-3
    lr_gamma: float = 1.6e-4             # scaled by scene extent
    cam_dist: float = 2.4
    fov_vert: float = math.radians(60.0)
    mirror: bool = True
    densify_interval: int = 100          # 0 disables densify/prune entirely
    densify_grad_threshold: float = 2e-4 # scaled by extent
    densify_stop_frac: float = 0.6
    densify_split_size: float = 0.02     # split above this fraction of extent
    prune_opacity: float = 0.005
    seed: int = 0
    eval_interval: int = 250

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if not 0.0 <= self.dssim_weight <= 1.0:
            raise ValueError("dssim_weight must lie in [0, 1]")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        for f in fields(self):
            if f.name.startswith("lr_") and getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be > 0")

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["mode"] = self.mode.value
        return out


def plane_extents(cam_dist, fov_vert, aspect):
    """Half-extents (dev_x, dev_z) of the visible XZ-plane region."""
    if cam_dist <= 0:
        raise ValueError("cam_dist must be > 0")
    if not 0.0 < fov_vert < math.pi:
        raise ValueError("fov_vert must lie in (0, pi)")
    dev_z = cam_dist * math.tan(0.5 * fov_vert)
    return dev_z * aspect, dev_z


def bilinear_sample(image, xy):
    """Sample (H, W, C) at continuous pixel coords; centers at half-integers."""
    h, w = image.shape[:2]
    x = np.clip(np.asarray(xy)[:, 0] - 0.5, 0.0, w - 1.0)
    y = np.clip(np.asarray(xy)[:, 1] - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    return ((1 - fy) * ((1 - fx) * image[y0, x0] + fx * image[y0, x1])
            + fy * ((1 - fx) * image[y1, x0] + fx * image[y1, x1]))


def init_scene(config: TrainConfig, target) -> Scene:
    """Seeded initialization: uniform means on the visible XZ rectangle,
    colors sampled from the target under each projected mean, isotropic
    in-plane scales at the mean nearest-neighbor spacing."""
    target = np.asarray(target, dtype=np.float64)
    h, w = target.shape[:2]
    rig = CameraRig(cam_dist=config.cam_dist, fov_vert=config.fov_vert,
                    resolution=(w, h), mirror_enabled=config.mirror)
    dev_x, dev_z = plane_extents(config.cam_dist, config.fov_vert, rig.aspect)
    rng = np.random.default_rng(config.seed)
    n = config.n_init

    means = np.zeros((n, 3))
    means[:, 0] = rng.uniform(-dev_x, dev_x, n)
    means[:, 2] = rng.uniform(-dev_z, dev_z, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    quats = quaternion_from_phi(phi)

    if n > 1:
        tree = cKDTree(means[:, [0, 2]])
        dist, _ = tree.query(means[:, [0, 2]], k=2)
        spacing = float(np.mean(dist[:, 1]))
    else:
        spacing = 0.5 * max(dev_x, dev_z)
    scales = np.column_stack([
        np.full(n, FLAT_SCALE), np.full(n, spacing), np.full(n, spacing)])

    scene = Scene(
        means=means, quats=quats, scales=scales,
        opacity_logits=np.full(n, float(logit(0.1))),
        colors=np.full((n, 3), 0.5),
        mode=config.mode,
        phi=phi if config.mode is not Mode.AMORPHOUS else np.zeros(n),
        gamma=np.zeros(n),
        background=np.zeros(3),
        camera=rig)
    from .projection import project_scene

    proj = project_scene(scene, primary_camera(rig))
    scene.colors = np.clip(bilinear_sample(target, proj.mean2d), 0.0, 1.0)
    return scene


def loss(rendered, target, lam):
    """Combined training loss and its per-pixel gradient w.r.t. the render."""
    v1, g1 = l1(rendered, target)
    if lam == 0.0:
        return v1, g1
    v2, g2 = dssim(rendered, target)
    return (1.0 - lam) * v1 + lam * v2, (1.0 - lam) * g1 + lam * g2


# compositing dtype for training; float32 measured no faster on this
# latency-bound loop, so keep full precision
TRAIN_DTYPE = np.float64


def _objective(scene, rig, target, lam, dtype=TRAIN_DTYPE):
    cam1 = primary_camera(rig)
    img1, cache1 = render_forward(scene, cam1, dtype=dtype)
    v1, g1 = loss(img1, target, lam)
    grads = render_backward(scene, cam1, g1, cache=cache1)
    parts = {"primary": v1}
    total = v1
    # densification statistics are per view (norms summed per camera, one
    # count per camera), so the mirror setting shifts no thresholds
    pos_norm = _positional_norms(grads, scene.mode)
    views = 1
    if rig.mirror_enabled:
        cam2 = mirror_camera(rig)
        img2, cache2 = render_forward(scene, cam2, dtype=dtype)
        v2, g2 = loss(img2, hflip(target), lam)
        grads2 = render_backward(scene, cam2, g2, cache=cache2)
        pos_norm += _positional_norms(grads2, scene.mode)
        views = 2
        grads.add_(grads2)
        parts["mirror"] = v2
        total = v1 + v2
    return total, grads, parts, pos_norm, views


def _positional_norms(grads: ParamGrads, mode: Mode):
    pos = grads.d_means.copy()
    if mode is Mode.GRAPHITE:
        pos[:, 1] = grads.d_gamma
    return np.linalg.norm(pos, axis=1)


def mirror_objective(scene, rig: CameraRig, target, lam):
    """Total mirror-pair loss and summed gradients (single camera when the
    rig has the mirror disabled)."""
    total, grads, _, _, _ = _objective(scene, rig, target, lam)
    return total, grads


def constrain(scene: Scene) -> Scene:
    """Project a scene onto its mode manifold; idempotent."""
    out = scene.copy()
    out.scales[:, 0] = FLAT_SCALE
    out.scales[:, 1:] = np.maximum(out.scales[:, 1:], 1e-12)
    out.colors = np.clip(out.colors, 0.0, 1.0)
    if out.mode is Mode.AMORPHOUS:
        out.quats = quat_normalize(out.quats)
    else:
        out.quats = quaternion_from_phi(out.phi)
        if out.mode is Mode.TWO_D:
            out.means[:, 1] = 0.0
            out.gamma[:] = 0.0
        else:
            out.means[:, 1] = out.gamma
    return out


class Trainer:
    """Owns the scene, raw parameters, optimizer state and densify buffers."""

    def __init__(self, config: TrainConfig, target):
        self.config = config
        self.target = np.asarray(target, dtype=np.float64)
        self.scene = init_scene(config, self.target)
        self.rig = self.scene.camera
        dev_x, dev_z = plane_extents(config.cam_dist, config.fov_vert,
                                     self.rig.aspect)
        self.extent = max(dev_x, dev_z)
        self.rng = np.random.default_rng(config.seed + 1)
        self.iteration = 0
        self.params = self._params_from_scene(self.scene)
        self.optimizer = Adam(self._learning_rates())
        n = self.scene.size
        self.grad_accum = np.zeros(n)
        self.grad_count = np.zeros(n)
        self._sync_scene()  # scene holds the canonical parametrization

    # ------------------------------------------------------------ parameters

    def _learning_rates(self):
        c = self.config
        lrs = {"means": c.lr_means * self.extent, "log_scales": c.lr_scales,
               "opacity": c.lr_opacity, "colors": c.lr_color}
        if self.config.mode is Mode.AMORPHOUS:
            lrs["quats"] = c.lr_rotation
        else:
            lrs["phi"] = c.lr_rotation
            if self.config.mode is Mode.GRAPHITE:
                lrs["gamma"] = c.lr_gamma * self.extent
        return lrs

    def _params_from_scene(self, scene):
        params = {
            "log_scales": np.log(scene.scales[:, 1:].copy()),
            "opacity": scene.opacity_logits.copy(),
            "colors": scene.colors.copy(),
        }
        if scene.mode is Mode.AMORPHOUS:
            params["means"] = scene.means.copy()
            params["quats"] = scene.quats.copy()
        else:
            params["means"] = scene.means[:, [0, 2]].copy()
            params["phi"] = scene.phi.copy()
            if scene.mode is Mode.GRAPHITE:
                params["gamma"] = scene.gamma.copy()
        return params

    def _sync_scene(self):
        """Write raw parameters into the scene, projecting onto the mode."""
        p = self.params
        scene = self.scene
        mode = self.config.mode
        np.clip(p["colors"], 0.0, 1.0, out=p["colors"])
        scene.colors = p["colors"].copy()
        scene.opacity_logits = p["opacity"].copy()
        scene.scales[:, 0] = FLAT_SCALE
        scene.scales[:, 1:] = np.exp(p["log_scales"])
        if mode is Mode.AMORPHOUS:
            p["quats"][:] = quat_normalize(p["quats"])
            scene.quats = p["quats"].copy()
            scene.means = p["means"].copy()
        else:
            scene.phi = p["phi"].copy()
            scene.quats = quaternion_from_phi(scene.phi)
            scene.means[:, 0] = p["means"][:, 0]
            scene.means[:, 2] = p["means"][:, 1]
            if mode is Mode.GRAPHITE:
                scene.gamma = p["gamma"].copy()
                scene.means[:, 1] = scene.gamma
            else:
                scene.means[:, 1] = 0.0

    def _param_grads(self, grads: ParamGrads):
        scales = self.scene.scales[:, 1:]
        out = {
            "log_scales": grads.d_scales * scales,
            "opacity": grads.d_opacity_logits,
            "colors": grads.d_colors,
        }
        if self.config.mode is Mode.AMORPHOUS:
            out["means"] = grads.d_means
            out["quats"] = grads.d_quats
        else:
            out["means"] = grads.d_means[:, [0, 2]]
            out["phi"] = grads.d_phi
            if self.config.mode is Mode.GRAPHITE:
                out["gamma"] = grads.d_gamma
        return out

    # ------------------------------------------------------------------ step

    def step(self):
        """One forward/backward/update/constrain cycle; returns stats."""
        cfg = self.config
        total, grads, parts, pos_norm, views = _objective(
            self.scene, self.rig, self.target, cfg.dssim_weight)
        if not np.isfinite(total):
            raise TrainingDiverged(self._diagnose_nonfinite(grads))
        gdict = self._param_grads(grads)
        self.optimizer.step(self.params, gdict)
        self._sync_scene()

        touched = pos_norm > 0
        self.grad_accum[touched] += pos_norm[touched]
        self.grad_count[touched] += views

        self.iteration += 1
        stats = {"iteration": self.iteration, "loss": float(total),
                 "n_gaussians": self.scene.size}
        stats.update({f"loss_{k}": float(v) for k, v in parts.items()})
        stats["grad_norms"] = {k: float(np.linalg.norm(v))
                               for k, v in gdict.items()}
        return stats

    def _diagnose_nonfinite(self, grads):
        for name, arr in (("means", self.scene.means),
                          ("scales", self.scene.scales),
                          ("opacity_logits", self.scene.opacity_logits),
                          ("colors", self.scene.colors),
                          ("d_means", grads.d_means)):
            bad = np.argwhere(~np.isfinite(np.atleast_2d(arr)))
            if bad.size:
                return (f"non-finite value in {name} at gaussian "
                        f"{int(bad[0][0])}")
        return "non-finite loss"

    # --------------------------------------------------------------- densify

    def densify_and_prune(self):
        """Clone/split high-gradient Gaussians, drop near-transparent ones."""
        cfg = self.config
        n = self.scene.size
        avg = self.grad_accum / np.maximum(self.grad_count, 1.0)
        opacity = sigmoid(self.params["opacity"])
        prune = opacity < cfg.prune_opacity
        over = avg > cfg.densify_grad_threshold * self.extent
        over &= ~prune
        max_scale = np.max(self.scene.scales[:, 1:], axis=1)
        big = max_scale > cfg.densify_split_size * self.extent
        split = over & big
        clone = over & ~big
        keep = ~prune & ~split

        keep_idx = np.nonzero(keep)[0]
        clone_idx = np.nonzero(clone & keep)[0]
        split_idx = np.nonzero(split)[0]

        new_rows = []
        for idx in clone_idx:
            new_rows.append(self._child_row(idx, offset=False))
        for idx in split_idx:
            new_rows.append(self._child_row(idx, offset=True))
            new_rows.append(self._child_row(idx, offset=True))

        for name, p in self.params.items():
            kept = p[keep_idx]
            if new_rows:
                extra = np.stack([row[name] for row in new_rows])
                kept = np.concatenate([kept, extra], axis=0)
            self.params[name] = kept
        self.optimizer.remap(keep_idx, len(new_rows))

        n_new = keep_idx.size + len(new_rows)
        self.scene = self._rebuild_scene(n_new)
        self._sync_scene()
        self.grad_accum = np.zeros(n_new)
        self.grad_count = np.zeros(n_new)
        return {"pruned": int(prune.sum()), "cloned": int(clone_idx.size),
                "split": int(split_idx.size), "n_gaussians": n_new}

    def _child_row(self, idx, offset):
        row = {name: p[idx].copy() for name, p in self.params.items()}
        if offset:
            scales = np.exp(row["log_scales"])
            rot = self.scene.rotations()[idx]
            xi = self.rng.standard_normal(2)
            shift = rot[:, 1] * xi[0] * scales[0] + rot[:, 2] * xi[1] * scales[1]
            if self.config.mode is Mode.AMORPHOUS:
                row["means"] = row["means"] + shift
            else:
                row["means"] = row["means"] + shift[[0, 2]]
            row["log_scales"] = row["log_scales"] - np.log(1.6)
        return row

    def _rebuild_scene(self, n):
        base = self.scene
        return Scene(
            means=np.zeros((n, 3)), quats=np.tile([1.0, 0, 0, 0], (n, 1)),
            scales=np.column_stack([np.full(n, FLAT_SCALE), np.ones(n), np.ones(n)]),
            opacity_logits=np.zeros(n), colors=np.zeros((n, 3)),
            mode=base.mode, phi=np.zeros(n), gamma=np.zeros(n),
            background=base.background.copy(), camera=base.camera)

    # ------------------------------------------------------------------ loop

    def evaluate(self):
        img = render(self.scene, primary_camera(self.rig))
        return MetricReport.compute(img, self.target)

    def run(self, log_stream=None):
        cfg = self.config
        history = []
        for _ in range(cfg.iterations):
            stats = self.step()
            it = self.iteration
            if (cfg.densify_interval > 0
                    and it % cfg.densify_interval == 0
                    and it < cfg.densify_stop_frac * cfg.iterations):
                stats.update(self.densify_and_prune())
            if it % cfg.eval_interval == 0 or it == cfg.iterations:
                report = self.evaluate()
                record = {"iteration": it, "loss": stats["loss"],
                          **report.to_dict(),
                          "n_gaussians": self.scene.size}
                if "loss_mirror" in stats:
                    record["loss_primary"] = stats["loss_primary"]
                    record["loss_mirror"] = stats["loss_mirror"]
                history.append(record)
                if log_stream is not None:
                    log_stream.write(json.dumps(record) + "\n")
                    log_stream.flush()
        return self.scene, history


def train_step(trainer: Trainer):
    """Single optimization step; returns (scene, stats)."""
    stats = trainer.step()
    return trainer.scene, stats


def train(target, config: TrainConfig, log_stream=None):
    """Fit a scene to the target image; returns (scene, metric history)."""
    trainer = Trainer(config, target)
    return trainer.run(log_stream=log_stream)
