"""Local HTTP session server for the browser editor.

Sessions hold a scene plus a bounded undo stack. Every successful mutation
bumps a monotonically increasing revision; renders are pure functions of the
scene content, so responses carry a content-derived ETag (identical scene
bytes give an identical tag, e.g. after an edit is undone) and validators
can short-circuit with 304 until the next mutation. Mutations on a session
are serialized behind a per-session lock; physics runs on a worker thread
with frames retrievable as they complete.
"""

from __future__ import annotations

import hashlib
import threading
import uuid
from collections import deque

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .editing import ModeConstraintError, rebuild_gaussians
from .images import image_png_bytes
from .physics import MaterialParams, Simulation
from .projection import get_camera
from .rasterizer import render
from .scene import CameraRig, Mode, Scene, SceneFormatError, scene_from_dict, scene_to_dict
from .trainer import plane_extents
from .triangles import DegenerateTriangleError

UNDO_DEPTH = 32


def _scene_digest(scene: Scene) -> str:
    h = hashlib.sha256()
    for arr in (scene.means, scene.quats, scene.scales, scene.opacity_logits,
                scene.colors, scene.phi, scene.gamma, scene.background):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(scene.mode.value.encode())
    return h.hexdigest()[:24]


class Session:
    def __init__(self, scene: Scene):
        self.id = uuid.uuid4().hex[:16]
        self.scene = scene
        self.revision = 0
        self.lock = threading.Lock()
        self.undo_stack = deque(maxlen=UNDO_DEPTH)
        self.digest = _scene_digest(scene)
        self.render_cache = {}
        self.sim_thread = None
        self.sim_status = {"state": "idle", "frames_done": 0, "frames_total": 0}
        self.sim_frames = []
        self.sim_trails = []  # per frame: [[x, z] per tracked particle]

    def summary(self):
        rig = self.scene.camera or CameraRig()
        dev_x, dev_z = plane_extents(rig.cam_dist, rig.fov_vert, rig.aspect)
        return {
            "session_id": self.id,
            "revision": self.revision,
            "n_gaussians": self.scene.size,
            "mode": self.scene.mode.value,
            "extents": {"dev_x": dev_x, "dev_z": dev_z},
            "resolution": [rig.width, rig.height],
            "mirror_enabled": rig.mirror_enabled,
            "background": [float(v) for v in self.scene.background],
            "cam_dist": float(rig.cam_dist),
            "fov_vert": float(rig.fov_vert),
        }

    def mutate(self, new_scene: Scene):
        """Swap in an edited scene: push undo, bump revision, drop caches."""
        self.undo_stack.append(self.scene)
        self.scene = new_scene
        self.revision += 1
        self.digest = _scene_digest(new_scene)
        self.render_cache.clear()

    def undo(self):
        if not self.undo_stack:
            return False
        self.scene = self.undo_stack.pop()
        self.revision += 1
        self.digest = _scene_digest(self.scene)
        self.render_cache.clear()
        return True


def create_app(scene_path=None) -> FastAPI:
    app = FastAPI(title="flatsplat session server")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"], expose_headers=["ETag"])
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def _register(scene: Scene) -> Session:
        session = Session(scene)
        with registry_lock:
            sessions[session.id] = session
        return session

    if scene_path is not None:
        from .scene import scene_load

        _register(scene_load(scene_path))

    def _get(session_id) -> Session | None:
        with registry_lock:
            return sessions.get(session_id)

    def _error(status, message):
        return JSONResponse({"error": message}, status_code=status)

    @app.get("/sessions")
    def list_sessions():
        with registry_lock:
            return [s.summary() for s in sessions.values()]

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return _error(400, "body: expected a scene JSON document")
        try:
            scene = scene_from_dict(doc)
        except SceneFormatError as exc:
            return _error(400, str(exc))
        return _register(scene).summary()

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        return session.summary()

    @app.get("/sessions/{session_id}/render")
    def render_view(session_id: str, request: Request,
                    width: int | None = None, height: int | None = None,
                    camera: str = "primary"):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        if camera not in ("primary", "mirror"):
            return _error(400, f"camera: unknown camera {camera!r}")
        with session.lock:
            rig = session.scene.camera or CameraRig()
            w = rig.width if width is None else width
            h = rig.height if height is None else height
            if w <= 0 or h <= 0 or w > 4096 or h > 4096:
                return _error(400, "width/height out of range")
            etag = f'"{session.digest}-{camera}-{w}x{h}"'
            if request.headers.get("if-none-match") == etag:
                return Response(status_code=304)
            key = (camera, w, h)
            png = session.render_cache.get(key)
            if png is None:
                view = CameraRig(cam_dist=rig.cam_dist, fov_vert=rig.fov_vert,
                                 resolution=(w, h),
                                 mirror_enabled=rig.mirror_enabled)
                img = render(session.scene, get_camera(view, camera))
                png = image_png_bytes(img)
                session.render_cache[key] = png
        return Response(content=png, media_type="image/png",
                        headers={"ETag": etag,
                                 "X-Revision": str(session.revision)})

    @app.get("/sessions/{session_id}/soup")
    def soup(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        with session.lock:
            tri = session.scene.triangles()
            return {"revision": session.revision,
                    "mode": session.scene.mode.value,
                    "triangles": tri.tolist()}

    @app.post("/sessions/{session_id}/edits")
    async def apply_edits(session_id: str, request: Request):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        try:
            doc = await request.json()
            edits = doc["edits"]
            parsed = [(int(e["index"]), int(e["vertex"]),
                       [float(v) for v in e["position"]]) for e in edits]
        except Exception:
            return _error(400, "body: expected {edits: [{index, vertex, "
                               "position[3]}]}")
        with session.lock:
            scene = session.scene
            if not parsed:
                return {"revision": session.revision}
            for index, vertex, pos in parsed:
                if not (0 <= index < scene.size):
                    return _error(422, f"edit index {index} out of range")
                if vertex not in (0, 1, 2):
                    return _error(422, f"vertex slot {vertex} out of range")
                if len(pos) != 3:
                    return _error(400, "position: expected 3 numbers")
            tri = scene.triangles()
            affected = sorted({index for index, _, _ in parsed})
            for index, vertex, pos in parsed:
                tri[index, vertex] = pos
            try:
                new_scene = rebuild_gaussians(scene, tri[affected],
                                              which=np.asarray(affected))
            except ModeConstraintError as exc:
                return _error(409, str(exc))
            except DegenerateTriangleError as exc:
                return _error(422, str(exc))
            session.mutate(new_scene)
            return {"revision": session.revision}

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        with session.lock:
            if not session.undo():
                return _error(409, "nothing to undo")
            return {"revision": session.revision}

    @app.post("/sessions/{session_id}/simulate", status_code=202)
    async def simulate_session(session_id: str, request: Request):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        try:
            doc = await request.json() if await request.body() else {}
        except Exception:
            doc = {}
        if session.scene.mode is not Mode.TWO_D:
            return _error(409, f"physics requires a 2d-mode scene (session "
                               f"scene is {session.scene.mode.value!r})")
        with session.lock:
            if session.sim_status["state"] == "running":
                return _error(409, "a simulation is already running")
            frames = int(doc.get("frames", 30))
            substeps = int(doc.get("substeps", 25))
            try:
                material = MaterialParams(
                    youngs_modulus=float(doc.get("youngs_modulus", 1e4)),
                    poisson=float(doc.get("poisson", 0.3)),
                    density=float(doc.get("density", 1.0)),
                    gravity=tuple(doc.get("gravity", (0.0, -9.8))),
                    material=doc.get("material", "elastic"))
            except (ValueError, NotImplementedError) as exc:
                return _error(422, str(exc))
            session.sim_frames = []
            session.sim_trails = []
            session.sim_status = {"state": "running", "frames_done": 0,
                                  "frames_total": frames}
            scene = session.scene.copy()

        trail_count = int(doc.get("trail_count", 10))

        def worker():
            try:
                sim = Simulation(scene, material)
                rig = scene.camera or CameraRig()
                cam = get_camera(rig, "primary")
                rng = np.random.default_rng(0)
                tracked = rng.choice(
                    sim.particles.size,
                    size=min(trail_count, sim.particles.size), replace=False)
                for _ in range(frames):
                    frame_scene = sim.frame(substeps)
                    png = image_png_bytes(render(frame_scene, cam))
                    points = [[float(sim.particles.x[p, 0]),
                               float(sim.particles.x[p, 1])] for p in tracked]
                    with session.lock:
                        session.sim_frames.append(png)
                        session.sim_trails.append(points)
                        session.sim_status["frames_done"] += 1
                with session.lock:
                    session.sim_status["state"] = "done"
            except Exception as exc:
                with session.lock:
                    session.sim_status["state"] = "error"
                    session.sim_status["error"] = str(exc)

        session.sim_thread = threading.Thread(target=worker, daemon=True)
        session.sim_thread.start()
        return {"status": "started", "frames_total": frames}

    @app.get("/sessions/{session_id}/trajectories")
    def trajectories(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        with session.lock:
            return {"frames_done": session.sim_status["frames_done"],
                    "trails": list(session.sim_trails)}

    @app.get("/sessions/{session_id}/simulation")
    def simulation_status(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        with session.lock:
            return dict(session.sim_status)

    @app.get("/sessions/{session_id}/frames/{k}")
    def frame(session_id: str, k: int):
        session = _get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        with session.lock:
            status = dict(session.sim_status)
            if k < 0 or (status["frames_total"]
                         and k >= status["frames_total"]):
                return _error(404, f"frame {k} out of range")
            if k < status["frames_done"]:
                return Response(content=session.sim_frames[k],
                                media_type="image/png")
        if status["state"] == "error":
            return _error(500, status.get("error", "simulation failed"))
        return JSONResponse({"status": status["state"],
                             "frames_done": status["frames_done"],
                             "frames_total": status["frames_total"]},
                            status_code=202)

    return app
