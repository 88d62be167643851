"""Scene model: flat Gaussians, control modes, cameras, JSON serialization.

A Scene stores all per-Gaussian parameters as packed numpy arrays (ordered,
index-aligned). The three control modes constrain where Gaussians may live:

* amorphous — free movement in 3D, rotation stored as a quaternion.
* 2d        — pinned to the XZ plane, a single in-plane angle phi per Gaussian.
* graphite  — plane-parallel discs with a trainable out-of-plane offset gamma
              per Gaussian (mean.y == gamma), rotation again from phi.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .triangles import (FLAT_SCALE, quat_normalize, quat_to_matrix,
                        quaternion_from_phi, rotation_from_phi,
                        triangle_from_gaussian)

SCENE_FORMAT_VERSION = 1

# Activation-space default for fresh Gaussians: sigmoid(OPACITY_LOGIT_INIT) = 0.1
OPACITY_LOGIT_INIT = math.log(0.1 / 0.9)


class SceneFormatError(ValueError):
    """Malformed or unsupported scene file; the message names the field."""


class Mode(str, enum.Enum):
    AMORPHOUS = "amorphous"
    TWO_D = "2d"
    GRAPHITE = "graphite"


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass
class FlatGaussian:
    """One Gaussian component; the degenerate axis always carries FLAT_SCALE."""

    mean: np.ndarray          # (3,) world units
    quat: np.ndarray          # (4,) unit quaternion (w, x, y, z)
    scales: np.ndarray        # (3,) with scales[0] == FLAT_SCALE
    opacity_logit: float
    color: np.ndarray         # (3,) RGB in [0, 1]

    @property
    def rotation(self):
        return quat_to_matrix(self.quat)

    @property
    def opacity(self):
        return float(sigmoid(self.opacity_logit))

    @property
    def covariance(self):
        r = self.rotation
        return r @ np.diag(np.asarray(self.scales) ** 2) @ r.T


@dataclass
class CameraRig:
    """Primary camera at (0, -cam_dist, 0) looking +Y; optional mirror opposite."""

    cam_dist: float = 2.4
    fov_vert: float = math.radians(60.0)
    resolution: tuple[int, int] = (128, 128)   # (W, H)
    mirror_enabled: bool = True

    def __post_init__(self):
        if self.cam_dist <= 0:
            raise ValueError("cam_dist must be > 0")
        if not (0.0 < self.fov_vert < math.pi):
            raise ValueError("fov_vert must be in (0, pi)")
        w, h = self.resolution
        if w <= 0 or h <= 0:
            raise ValueError("resolution must be positive")

    @property
    def aspect(self):
        w, h = self.resolution
        return w / h

    @property
    def width(self):
        return int(self.resolution[0])

    @property
    def height(self):
        return int(self.resolution[1])

    def to_dict(self):
        return {
            "cam_dist": float(self.cam_dist),
            "fov_vert": float(self.fov_vert),
            "aspect": float(self.aspect),
            "resolution": [self.width, self.height],
            "mirror_enabled": bool(self.mirror_enabled),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            rig = cls(
                cam_dist=float(d["cam_dist"]),
                fov_vert=float(d["fov_vert"]),
                resolution=(int(d["resolution"][0]), int(d["resolution"][1])),
                mirror_enabled=bool(d.get("mirror_enabled", True)),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise SceneFormatError(f"camera: missing or invalid field ({exc})")
        if "aspect" in d and abs(float(d["aspect"]) - rig.aspect) > 1e-6:
            raise SceneFormatError("camera.aspect: inconsistent with resolution")
        return rig


@dataclass
class Scene:
    """Ordered collection of flat Gaussians plus mode bookkeeping."""

    means: np.ndarray            # (N, 3)
    quats: np.ndarray            # (N, 4) unit
    scales: np.ndarray           # (N, 3), column 0 pinned to FLAT_SCALE
    opacity_logits: np.ndarray   # (N,)
    colors: np.ndarray           # (N, 3) in [0, 1]
    mode: Mode = Mode.AMORPHOUS
    phi: np.ndarray = None       # (N,) used by 2d / graphite
    gamma: np.ndarray = None     # (N,) used by graphite
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    camera: CameraRig | None = None

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.quats = np.atleast_2d(np.asarray(self.quats, dtype=np.float64))
        self.scales = np.atleast_2d(np.asarray(self.scales, dtype=np.float64))
        self.opacity_logits = np.atleast_1d(
            np.asarray(self.opacity_logits, dtype=np.float64))
        self.colors = np.atleast_2d(np.asarray(self.colors, dtype=np.float64))
        n = self.size
        if self.phi is None:
            self.phi = np.zeros(n)
        if self.gamma is None:
            self.gamma = np.zeros(n)
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=np.float64))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        self.background = np.asarray(self.background, dtype=np.float64)
        self.mode = Mode(self.mode)

    @property
    def size(self):
        return int(self.means.shape[0]) if self.means.size else 0

    def rotations(self):
        """(N, 3, 3) rotation matrices per the active mode."""
        if self.mode is Mode.AMORPHOUS:
            return quat_to_matrix(self.quats)
        return rotation_from_phi(self.phi)

    def opacities(self):
        return sigmoid(self.opacity_logits)

    def gaussian(self, i) -> FlatGaussian:
        return FlatGaussian(
            mean=self.means[i].copy(),
            quat=self.quats[i].copy(),
            scales=self.scales[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            color=self.colors[i].copy(),
        )

    @classmethod
    def empty(cls, mode=Mode.AMORPHOUS, background=(0.0, 0.0, 0.0), camera=None):
        return cls(
            means=np.zeros((0, 3)), quats=np.zeros((0, 4)),
            scales=np.zeros((0, 3)), opacity_logits=np.zeros(0),
            colors=np.zeros((0, 3)), mode=mode, phi=np.zeros(0),
            gamma=np.zeros(0), background=np.asarray(background, dtype=np.float64),
            camera=camera,
        )

    @classmethod
    def from_gaussians(cls, gaussians, mode=Mode.AMORPHOUS, **kwargs):
        if not gaussians:
            return cls.empty(mode=mode, **kwargs)
        return cls(
            means=np.stack([g.mean for g in gaussians]),
            quats=np.stack([g.quat for g in gaussians]),
            scales=np.stack([g.scales for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
            mode=mode, **kwargs,
        )

    def copy(self):
        return Scene(
            means=self.means.copy(), quats=self.quats.copy(),
            scales=self.scales.copy(), opacity_logits=self.opacity_logits.copy(),
            colors=self.colors.copy(), mode=self.mode, phi=self.phi.copy(),
            gamma=self.gamma.copy(), background=self.background.copy(),
            camera=self.camera,
        )

    def triangles(self):
        """(N, 3, 3) triangle vertices, index-aligned with the Gaussians."""
        return triangle_from_gaussian(self.means, self.rotations(), self.scales)

    def validate(self, atol=1e-6):
        """Check the stored invariants; raises ValueError naming the failure."""
        n = self.size
        for name, arr, shape in (
                ("means", self.means, (n, 3)), ("quats", self.quats, (n, 4)),
                ("scales", self.scales, (n, 3)), ("colors", self.colors, (n, 3))):
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
        if n == 0:
            return
        qn = np.linalg.norm(self.quats, axis=1)
        if np.max(np.abs(qn - 1.0)) > atol:
            raise ValueError("quats: norm deviates from 1 beyond tolerance")
        if np.max(np.abs(self.scales[:, 0] - FLAT_SCALE)) > 0:
            raise ValueError("scales: first scale must equal FLAT_SCALE exactly")
        if np.min(self.scales[:, 1:]) <= 0:
            raise ValueError("scales: s2 and s3 must be positive")
        if np.min(self.colors) < -1e-12 or np.max(self.colors) > 1 + 1e-12:
            raise ValueError("colors: values outside [0, 1]")
        if self.mode is not Mode.AMORPHOUS:
            # Degenerate axis (first rotation column) parallel to e2.
            r1 = self.rotations()[:, :, 0]
            tilt = np.sqrt(r1[:, 0] ** 2 + r1[:, 2] ** 2)
            if np.max(tilt) > atol:
                raise ValueError("rotation: degenerate axis not parallel to e2")
        if self.mode is Mode.TWO_D and np.max(np.abs(self.means[:, 1])) > atol:
            raise ValueError("means: 2d mode requires mean.y == 0")
        if self.mode is Mode.GRAPHITE:
            if np.max(np.abs(self.means[:, 1] - self.gamma)) > atol:
                raise ValueError("means: graphite mode requires mean.y == gamma")


@dataclass
class TriangleSoup:
    """Disconnected triangles (one per Gaussian) with display attributes."""

    triangles: np.ndarray   # (N, 3, 3)
    colors: np.ndarray      # (N, 3)
    opacities: np.ndarray   # (N,)

    @classmethod
    def from_scene(cls, scene: Scene):
        return cls(triangles=scene.triangles(), colors=scene.colors.copy(),
                   opacities=scene.opacities())

    @property
    def size(self):
        return int(self.triangles.shape[0])


def _vec(values, n, what):
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError):
        raise SceneFormatError(f"{what}: expected {n} numbers")
    if len(out) != n:
        raise SceneFormatError(f"{what}: expected {n} numbers, got {len(out)}")
    return out


def scene_to_dict(scene: Scene) -> dict:
    doc = {
        "version": SCENE_FORMAT_VERSION,
        "mode": scene.mode.value,
        "background": [float(v) for v in scene.background],
        "camera": scene.camera.to_dict() if scene.camera is not None else None,
        "gaussians": [],
    }
    with_phi = scene.mode is not Mode.AMORPHOUS
    with_gamma = scene.mode is Mode.GRAPHITE
    for i in range(scene.size):
        g = {
            "mean": [float(v) for v in scene.means[i]],
            "quat": [float(v) for v in scene.quats[i]],
            "scales": [float(v) for v in scene.scales[i]],
            "opacity_logit": float(scene.opacity_logits[i]),
            "color": [float(v) for v in scene.colors[i]],
        }
        if with_phi:
            g["phi"] = float(scene.phi[i])
        if with_gamma:
            g["gamma"] = float(scene.gamma[i])
        doc["gaussians"].append(g)
    return doc


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SceneFormatError("document: expected a JSON object")
    version = doc.get("version")
    if version != SCENE_FORMAT_VERSION:
        raise SceneFormatError(
            f"version: expected {SCENE_FORMAT_VERSION}, got {version!r}")
    try:
        mode = Mode(doc.get("mode"))
    except ValueError:
        raise SceneFormatError(f"mode: unknown mode {doc.get('mode')!r}")
    background = np.array(_vec(doc.get("background", [0, 0, 0]), 3, "background"))
    camera = None
    if doc.get("camera") is not None:
        camera = CameraRig.from_dict(doc["camera"])
    raw = doc.get("gaussians")
    if not isinstance(raw, list):
        raise SceneFormatError("gaussians: expected a list")
    n = len(raw)
    means = np.zeros((n, 3))
    quats = np.zeros((n, 4))
    scales = np.zeros((n, 3))
    logits = np.zeros(n)
    colors = np.zeros((n, 3))
    phi = np.zeros(n)
    gamma = np.zeros(n)
    for i, g in enumerate(raw):
        where = f"gaussians[{i}]"
        if not isinstance(g, dict):
            raise SceneFormatError(f"{where}: expected an object")
        means[i] = _vec(g.get("mean"), 3, f"{where}.mean")
        quats[i] = _vec(g.get("quat"), 4, f"{where}.quat")
        scales[i] = _vec(g.get("scales"), 3, f"{where}.scales")
        try:
            logits[i] = float(g.get("opacity_logit"))
        except (TypeError, ValueError):
            raise SceneFormatError(f"{where}.opacity_logit: expected a number")
        colors[i] = _vec(g.get("color"), 3, f"{where}.color")
        if "phi" in g:
            phi[i] = float(g["phi"])
        elif mode is not Mode.AMORPHOUS:
            raise SceneFormatError(f"{where}.phi: required in mode {mode.value}")
        if "gamma" in g:
            gamma[i] = float(g["gamma"])
        elif mode is Mode.GRAPHITE:
            raise SceneFormatError(f"{where}.gamma: required in graphite mode")
    return Scene(means=means, quats=quats, scales=scales, opacity_logits=logits,
                 colors=colors, mode=mode, phi=phi, gamma=gamma,
                 background=background, camera=camera)


def scene_save(scene: Scene, path) -> None:
    """Write the scene as canonical JSON (stable key order, compact)."""
    doc = scene_to_dict(scene)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def scene_load(path) -> Scene:
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"document: invalid JSON ({exc})")
    return scene_from_dict(doc)
