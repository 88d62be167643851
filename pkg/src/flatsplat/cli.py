"""Command-line entry point: train / render / eval / export / import /
edit / animate / simulate / serve.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Diagnostics go to
stderr; machine-readable output goes to files or stdout. All file outputs
land under --out-dir.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np


def _out_path(args, name):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = Path(name)
    if path.is_absolute():
        raise ValueError(f"output path {name} must be relative to --out-dir")
    return out_dir / path


def _load_scene(path):
    from .scene import scene_load

    return scene_load(path)


def _camera_for(scene, which, width=None, height=None):
    from .projection import get_camera
    from .scene import CameraRig

    rig = scene.camera or CameraRig()
    if width or height:
        w = width or rig.width
        h = height or rig.height
        rig = CameraRig(cam_dist=rig.cam_dist, fov_vert=rig.fov_vert,
                        resolution=(w, h), mirror_enabled=rig.mirror_enabled)
    return get_camera(rig, which)


def _add_common(p):
    p.add_argument("--out-dir", default=".", help="directory for all outputs")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--config", default=None, help="JSON config file")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flatsplat",
        description="Fit images with flat Gaussians; edit them as triangles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a scene to an image")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--mode", choices=["amorphous", "2d", "graphite"])
    p.add_argument("--n-init", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--mirror", choices=["on", "off"])
    p.add_argument("--out", default="scene.json")
    p.add_argument("--log", default="metrics.jsonl")

    p = sub.add_parser("render", help="render a scene to an image file")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", choices=["primary", "mirror"], default="primary")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out", default="render.png")

    p = sub.add_parser("eval", help="report PSNR / MS-SSIM / L1 vs an image")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--image", required=True)

    p = sub.add_parser("export", help="write the triangle soup mesh")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", default="soup.obj")

    p = sub.add_parser("import", help="rebuild a scene from an edited mesh")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", default="scene_imported.json")

    p = sub.add_parser("edit", help="apply an affine edit to a selection")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--select", help="rect x0,z0,x1,z1 (default: all)")
    p.add_argument("--translate", help="dx,dy,dz")
    p.add_argument("--rotate-y", type=float, help="degrees about the Y axis")
    p.add_argument("--scale", type=float, help="uniform scale about origin")
    p.add_argument("--out", default="scene_edited.json")

    p = sub.add_parser("animate", help="render keyframe animation frames")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--track", required=True, help="keyframe track JSON")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--camera", choices=["primary", "mirror"], default="primary")

    p = sub.add_parser("simulate", help="run the physics engine on a 2d scene")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--substeps", type=int, default=25)
    p.add_argument("--youngs-modulus", type=float, default=1e4)
    p.add_argument("--poisson", type=float, default=0.3)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--gravity", default="0,-9.8")
    p.add_argument("--traj", help="trajectory CSV filename")
    p.add_argument("--traj-count", type=int, default=10)

    p = sub.add_parser("serve", help="start the local editing session server")
    _add_common(p)
    p.add_argument("--scene", help="preload a scene file")
    p.add_argument("--port", type=int, default=7878)
    p.add_argument("--host", default="127.0.0.1")
    return parser


def _merge_train_config(args):
    from .trainer import TrainConfig

    from .scene import Mode

    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    cfg = TrainConfig.from_dict(doc)
    if args.mode is not None:
        cfg.mode = Mode(args.mode)
    if args.n_init is not None:
        cfg.n_init = args.n_init
    if args.iters is not None:
        cfg.iterations = args.iters
    if args.mirror is not None:
        cfg.mirror = args.mirror == "on"
    if args.seed is not None:
        cfg.seed = args.seed
    return TrainConfig.from_dict(cfg.to_dict())  # re-validate


def cmd_train(args):
    from .images import image_load
    from .scene import scene_save
    from .trainer import train

    target = image_load(args.image)
    cfg = _merge_train_config(args)
    log_path = _out_path(args, args.log)
    with open(log_path, "w") as log_stream:
        scene, history = train(target, cfg, log_stream=log_stream)
    scene_save(scene, _out_path(args, args.out))
    final = history[-1] if history else {}
    print(json.dumps({"scene": str(_out_path(args, args.out)),
                      "log": str(log_path), **final}))
    return 0


def cmd_render(args):
    from .images import image_save
    from .rasterizer import render

    scene = _load_scene(args.scene)
    cam = _camera_for(scene, args.camera, args.width, args.height)
    image_save(render(scene, cam), _out_path(args, args.out))
    return 0


def cmd_eval(args):
    from .images import image_load
    from .metrics import MetricReport
    from .rasterizer import render

    scene = _load_scene(args.scene)
    target = image_load(args.image)
    h, w = target.shape[:2]
    cam = _camera_for(scene, "primary")
    if (cam.width, cam.height) != (w, h):
        raise ValueError(
            f"scene resolution {(cam.width, cam.height)} does not match "
            f"image {(w, h)}")
    report = MetricReport.compute(render(scene, cam), target)
    print(report.to_json())
    return 0


def cmd_export(args):
    from .editing import export_soup

    export_soup(_load_scene(args.scene), _out_path(args, args.out))
    return 0


def cmd_import(args):
    from .editing import import_soup
    from .scene import scene_save

    scene = _load_scene(args.scene)
    out = import_soup(scene, args.mesh)
    scene_save(out, _out_path(args, args.out))
    return 0


def cmd_edit(args):
    from .editing import Selection, apply_affine, select_rect
    from .scene import scene_save

    scene = _load_scene(args.scene)
    if args.select:
        rect = [float(v) for v in args.select.split(",")]
        selection = select_rect(scene, rect)
    else:
        selection = Selection.all(scene)
    m = np.eye(4)
    if args.scale is not None:
        m[:3, :3] *= args.scale
    if args.rotate_y is not None:
        a = math.radians(args.rotate_y)
        rot = np.array([[math.cos(a), 0, math.sin(a)],
                        [0, 1, 0],
                        [-math.sin(a), 0, math.cos(a)]])
        m[:3, :3] = rot @ m[:3, :3]
    if args.translate:
        m[:3, 3] = [float(v) for v in args.translate.split(",")]
    out = apply_affine(scene, selection, m)
    scene_save(out, _out_path(args, args.out))
    print(json.dumps({"selected": len(selection), "out": args.out}))
    return 0


def cmd_animate(args):
    from .editing import animate, track_load
    from .images import image_save

    scene = _load_scene(args.scene)
    track = track_load(scene, args.track)
    frames = animate(scene, track, args.frames, camera=args.camera)
    for k, frame in enumerate(frames):
        image_save(frame, _out_path(args, "out_%04d.png" % k))
    print(json.dumps({"frames": len(frames), "out_dir": args.out_dir}))
    return 0


def cmd_simulate(args):
    import csv

    from .images import image_save
    from .physics import MaterialParams, simulate
    from .projection import get_camera
    from .rasterizer import render
    from .scene import CameraRig

    scene = _load_scene(args.scene)
    gravity = tuple(float(v) for v in args.gravity.split(","))
    material = MaterialParams(youngs_modulus=args.youngs_modulus,
                              poisson=args.poisson, density=args.density,
                              gravity=gravity)
    seed = args.seed if args.seed is not None else 0
    traj_count = args.traj_count if args.traj else 0
    scenes, rows = simulate(scene, material, frames=args.frames,
                            substeps=args.substeps,
                            trajectory_count=traj_count, seed=seed)
    cam = get_camera(scene.camera or CameraRig(), "primary")
    for k, s in enumerate(scenes):
        image_save(render(s, cam), _out_path(args, "out_%04d.png" % k))
    if args.traj:
        with open(_out_path(args, args.traj), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "particle", "x", "z"])
            writer.writerows(rows)
    print(json.dumps({"frames": len(scenes), "out_dir": args.out_dir}))
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(scene_path=args.scene)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_HANDLERS = {
    "train": cmd_train, "render": cmd_render, "eval": cmd_eval,
    "export": cmd_export, "import": cmd_import, "edit": cmd_edit,
    "animate": cmd_animate, "simulate": cmd_simulate, "serve": cmd_serve,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # surface everything as a diagnostic, exit 1
        print(f"flatsplat {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
