"""Triangle-soup export/import, selections, affine edits, keyframe animation.

The soup is the editing surface: one disconnected triangle per Gaussian,
written as OBJ or ASCII PLY plus a JSON sidecar carrying color/opacity and
mode bookkeeping (neither mesh format has per-face alpha). Importing runs
the inverse parametrization per face and re-derives the per-mode parameters,
so a round trip without edits reproduces the scene.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .projection import get_camera
from .rasterizer import render
from .scene import CameraRig, Mode, Scene, SceneFormatError
from .triangles import (FLAT_SCALE, DegenerateTriangleError,
                        gaussian_from_triangle, matrix_to_quat, quat_normalize,
                        quat_slerp, quat_to_matrix, quaternion_from_phi)

PLANE_TOL = 1e-6


class SoupFormatError(ValueError):
    """Mesh file malformed or inconsistent with the scene."""


class ModeConstraintError(ValueError):
    """An edit violates the active control mode (message names the vertex)."""


@dataclass
class Selection:
    """Subset of Gaussian indices, always sorted and deduplicated."""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.unique(np.asarray(self.indices, dtype=np.int64))

    def __len__(self):
        return int(self.indices.size)

    def mask(self, n):
        if self.indices.size and (self.indices[0] < 0 or self.indices[-1] >= n):
            raise IndexError("selection indices out of range")
        m = np.zeros(n, dtype=bool)
        m[self.indices] = True
        return m

    @classmethod
    def all(cls, scene):
        return cls(np.arange(scene.size))


def select_rect(scene: Scene, rect) -> Selection:
    """Gaussians whose mean (x, z) lies inside (x0, z0, x1, z1)."""
    x0, z0, x1, z1 = map(float, rect)
    if not (x0 < x1 and z0 < z1):
        raise ValueError("rect must satisfy x0 < x1 and z0 < z1")
    x = scene.means[:, 0]
    z = scene.means[:, 2]
    inside = (x >= x0) & (x <= x1) & (z >= z0) & (z <= z1)
    return Selection(np.nonzero(inside)[0])


def select_polygon(scene: Scene, points) -> Selection:
    """Gaussians whose mean (x, z) lies inside a polygon (even-odd rule)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        raise ValueError("polygon needs at least 3 points")
    x = scene.means[:, 0]
    z = scene.means[:, 2]
    inside = np.zeros(scene.size, dtype=bool)
    j = pts.shape[0] - 1
    for i in range(pts.shape[0]):
        xi, zi = pts[i]
        xj, zj = pts[j]
        crosses = ((zi > z) != (zj > z))
        with np.errstate(divide="ignore", invalid="ignore"):
            xhit = (xj - xi) * (z - zi) / (zj - zi) + xi
        inside ^= crosses & (x < xhit)
        j = i
    return Selection(np.nonzero(inside)[0])


# ------------------------------------------------------------------ mesh IO

def _sidecar_path(path):
    return Path(str(path) + ".json")


def _write_obj(tri, path):
    with open(path, "w", encoding="ascii") as fh:
        for v in tri.reshape(-1, 3):
            fh.write("v %.10g %.10g %.10g\n" % (v[0], v[1], v[2]))
        for i in range(tri.shape[0]):
            fh.write("f %d %d %d\n" % (3 * i + 1, 3 * i + 2, 3 * i + 3))


def _write_ply(tri, path):
    n = tri.shape[0]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {3 * n}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        fh.write(f"element face {n}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        for v in tri.reshape(-1, 3):
            fh.write("%.10g %.10g %.10g\n" % (v[0], v[1], v[2]))
        for i in range(n):
            fh.write("3 %d %d %d\n" % (3 * i, 3 * i + 1, 3 * i + 2))


def export_soup(scene: Scene, path) -> None:
    """Write the triangle soup as OBJ or PLY (by suffix) plus a sidecar."""
    path = Path(path)
    tri = scene.triangles()
    if path.suffix.lower() == ".ply":
        _write_ply(tri, path)
    elif path.suffix.lower() == ".obj":
        _write_obj(tri, path)
    else:
        raise SoupFormatError(f"{path}: unsupported mesh suffix (.obj or .ply)")
    sidecar = {
        "version": 1,
        "mode": scene.mode.value,
        "background": [float(v) for v in scene.background],
        "camera": scene.camera.to_dict() if scene.camera else None,
        "faces": [],
    }
    for i in range(scene.size):
        face = {"color": [float(v) for v in scene.colors[i]],
                "opacity_logit": float(scene.opacity_logits[i])}
        if scene.mode is not Mode.AMORPHOUS:
            face["phi"] = float(scene.phi[i])
        if scene.mode is Mode.GRAPHITE:
            face["gamma"] = float(scene.gamma[i])
        sidecar["faces"].append(face)
    _sidecar_path(path).write_text(json.dumps(sidecar), encoding="ascii")


def _read_obj(path):
    verts = []
    faces = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise SoupFormatError(f"{path}:{ln}: malformed vertex")
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) != 3:
                raise SoupFormatError(f"{path}:{ln}: only triangles supported")
            faces.append(idx)
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def _read_ply(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise SoupFormatError(f"{path}: not a PLY file")
    n_vert = n_face = None
    body_at = None
    for i, line in enumerate(lines[1:], 1):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n_vert = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            n_face = int(parts[2])
        elif parts[:1] == ["end_header"]:
            body_at = i + 1
            break
    if body_at is None or n_vert is None or n_face is None:
        raise SoupFormatError(f"{path}: incomplete PLY header")
    verts = np.array([[float(v) for v in lines[body_at + i].split()[:3]]
                      for i in range(n_vert)])
    faces = []
    for i in range(n_face):
        parts = lines[body_at + n_vert + i].split()
        if parts[0] != "3":
            raise SoupFormatError(f"{path}: face {i} is not a triangle")
        faces.append([int(v) for v in parts[1:4]])
    return verts, np.asarray(faces, dtype=np.int64)


def read_mesh(path):
    path = Path(path)
    if path.suffix.lower() == ".ply":
        return _read_ply(path)
    if path.suffix.lower() == ".obj":
        return _read_obj(path)
    raise SoupFormatError(f"{path}: unsupported mesh suffix (.obj or .ply)")


def _phi_from_edge(edge_xz, where):
    norm = np.hypot(edge_xz[0], edge_xz[1])
    if norm <= 1e-12:
        raise ModeConstraintError(
            f"{where}: first edge projects to a point on the XZ plane; "
            f"cannot derive the in-plane angle")
    return float(np.arctan2(edge_xz[1], -edge_xz[0]))


def rebuild_gaussians(scene: Scene, triangles, which=None):
    """Replace (a subset of) the scene's Gaussians from triangle geometry.

    Runs the inverse parametrization and re-derives the per-mode parameters:
    2d rejects out-of-plane vertices, graphite takes gamma from mean.y.
    Returns a new scene; colors/opacities are kept.
    """
    triangles = np.asarray(triangles, dtype=np.float64)
    out = scene.copy()
    idx = np.arange(scene.size) if which is None else np.asarray(which)
    if triangles.shape[0] != idx.size:
        raise SoupFormatError(
            f"geometry count {triangles.shape[0]} != selection size {idx.size}")
    if idx.size == 0:
        return out

    if out.mode is Mode.TWO_D:
        bad = np.argwhere(np.abs(triangles[:, :, 1]) > PLANE_TOL)
        if bad.size:
            f, v = int(bad[0][0]), int(bad[0][1])
            raise ModeConstraintError(
                f"face {int(idx[f])} vertex {v}: y = "
                f"{triangles[f, v, 1]:.3e} violates the 2d plane constraint")

    try:
        means, rots, scales = gaussian_from_triangle(triangles)
    except DegenerateTriangleError as exc:
        raise DegenerateTriangleError(str(exc)) from None

    out.means[idx] = means
    out.scales[idx] = scales
    if out.mode is Mode.AMORPHOUS:
        out.quats[idx] = matrix_to_quat(rots)
    else:
        phi = np.array([
            _phi_from_edge(rots[i, [0, 2], 1], f"face {int(idx[i])}")
            for i in range(idx.size)])
        out.phi[idx] = phi
        out.quats[idx] = quaternion_from_phi(phi)
        if out.mode is Mode.GRAPHITE:
            out.gamma[idx] = means[:, 1]
        else:
            out.means[idx, 1] = 0.0
    return out


def import_soup(scene: Scene, path) -> Scene:
    """Rebuild the scene's geometry from a previously exported mesh file."""
    verts, faces = read_mesh(path)
    if faces.shape[0] != scene.size:
        raise SoupFormatError(
            f"{path}: {faces.shape[0]} faces but the scene has "
            f"{scene.size} gaussians")
    if faces.size and (faces.min() < 0 or faces.max() >= verts.shape[0]):
        raise SoupFormatError(f"{path}: face references a missing vertex")
    triangles = verts[faces]

    out = scene
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        doc = json.loads(sidecar.read_text())
        facedocs = doc.get("faces", [])
        if len(facedocs) != scene.size:
            raise SoupFormatError(
                f"{sidecar}: {len(facedocs)} face attributes for "
                f"{scene.size} gaussians")
        out = scene.copy()
        for i, fd in enumerate(facedocs):
            out.colors[i] = fd["color"]
            out.opacity_logits[i] = fd["opacity_logit"]
    return rebuild_gaussians(out, triangles)


# ------------------------------------------------------------ affine editing

def apply_affine(scene: Scene, selection: Selection, matrix) -> Scene:
    """Transform the selected triangles by a 4x4 affine and rebuild them."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise ValueError("expected a 4x4 affine matrix")
    linear = m[:3, :3]
    if abs(np.linalg.det(linear)) < 1e-12:
        raise ValueError("affine matrix is singular")
    idx = selection.indices
    selection.mask(scene.size)  # bounds check
    if idx.size == 0:
        return scene.copy()
    tri = scene.triangles()[idx]
    tri = tri @ linear.T + m[:3, 3]
    return rebuild_gaussians(scene, tri, which=idx)


# ------------------------------------------------------- keyframe animation

@dataclass
class KeyframeTransform:
    """Affine transform as interpolatable components about a pivot."""

    translate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotate: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.translate = np.asarray(self.translate, dtype=np.float64)
        self.rotate = quat_normalize(np.asarray(self.rotate, dtype=np.float64))
        scale = np.asarray(self.scale, dtype=np.float64)
        self.scale = np.full(3, float(scale)) if scale.ndim == 0 else scale
        self.pivot = np.asarray(self.pivot, dtype=np.float64)

    def matrix(self):
        m = np.eye(4)
        rs = quat_to_matrix(self.rotate) * self.scale[None, :]
        m[:3, :3] = rs
        m[:3, 3] = self.translate + self.pivot - rs @ self.pivot
        return m

    @classmethod
    def identity(cls):
        return cls()


def interpolate_transform(a: KeyframeTransform, b: KeyframeTransform, s):
    """Component-wise lerp for translation/scale/pivot, slerp for rotation."""
    return KeyframeTransform(
        translate=(1 - s) * a.translate + s * b.translate,
        rotate=quat_slerp(a.rotate, b.rotate, s),
        scale=(1 - s) * a.scale + s * b.scale,
        pivot=(1 - s) * a.pivot + s * b.pivot)


@dataclass
class Keyframe:
    time: float
    transform: KeyframeTransform
    selection: Selection


@dataclass
class KeyframeTrack:
    keyframes: list

    def __post_init__(self):
        if len(self.keyframes) < 2:
            raise ValueError("a track needs at least 2 keyframes")
        times = [k.time for k in self.keyframes]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")

    def at(self, t):
        """Interpolated (transform, selection) at time t (clamped ends)."""
        ks = self.keyframes
        if t <= ks[0].time:
            return ks[0].transform, ks[0].selection
        if t >= ks[-1].time:
            return ks[-1].transform, ks[-1].selection
        for a, b in zip(ks, ks[1:]):
            if a.time <= t <= b.time:
                s = (t - a.time) / (b.time - a.time)
                return interpolate_transform(a.transform, b.transform, s), a.selection
        raise AssertionError("unreachable")


def animate(scene: Scene, track: KeyframeTrack, n_frames, camera="primary"):
    """Render n_frames evenly spaced over t in [0, 1] under the track."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    rig = scene.camera or CameraRig()
    cam = get_camera(rig, camera)
    frames = []
    for k in range(n_frames):
        t = k / (n_frames - 1) if n_frames > 1 else 0.0
        transform, selection = track.at(t)
        deformed = apply_affine(scene, selection, transform.matrix())
        frames.append(render(deformed, cam))
    return frames


# ------------------------------------------------------------- track JSON IO

def selection_from_dict(scene: Scene, doc) -> Selection:
    if doc is None or doc.get("all"):
        return Selection.all(scene)
    if "indices" in doc:
        return Selection(np.asarray(doc["indices"], dtype=np.int64))
    if "rect" in doc:
        return select_rect(scene, doc["rect"])
    if "polygon" in doc:
        return select_polygon(scene, doc["polygon"])
    raise SceneFormatError("selection: expected all/indices/rect/polygon")


def transform_from_dict(doc) -> KeyframeTransform:
    kw = {}
    if "translate" in doc:
        kw["translate"] = np.asarray(doc["translate"], dtype=np.float64)
    if "scale" in doc:
        kw["scale"] = np.asarray(doc["scale"], dtype=np.float64)
    if "pivot" in doc:
        kw["pivot"] = np.asarray(doc["pivot"], dtype=np.float64)
    if "rotate_axis" in doc or "rotate_angle" in doc:
        axis = np.asarray(doc.get("rotate_axis", [0, 1, 0]), dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        half = float(doc.get("rotate_angle", 0.0)) / 2.0
        kw["rotate"] = np.concatenate([[np.cos(half)], np.sin(half) * axis])
    elif "rotate" in doc:
        kw["rotate"] = np.asarray(doc["rotate"], dtype=np.float64)
    return KeyframeTransform(**kw)


def track_from_dict(scene: Scene, doc) -> KeyframeTrack:
    if "keyframes" not in doc:
        raise SceneFormatError("track: missing 'keyframes'")
    frames = []
    for i, kf in enumerate(doc["keyframes"]):
        try:
            frames.append(Keyframe(
                time=float(kf["time"]),
                transform=transform_from_dict(kf),
                selection=selection_from_dict(scene, kf.get("selection"))))
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneFormatError(f"keyframes[{i}]: {exc}")
    return KeyframeTrack(frames)


def track_load(scene: Scene, path) -> KeyframeTrack:
    return track_from_dict(scene, json.loads(Path(path).read_text()))
