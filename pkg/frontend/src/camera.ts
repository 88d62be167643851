// Client-side mirror of the server's camera model. Cameras sit on the Y
// axis looking at the origin; pixel (i, j) has its center at (i+0.5, j+0.5).

export interface CameraSpec {
  camDist: number;
  fovVert: number;
  width: number;
  height: number;
  camera: "primary" | "mirror";
}

type Vec3 = [number, number, number];

function rows(spec: CameraSpec): [Vec3, Vec3, Vec3] {
  // world-to-camera rotation rows: right, down, forward
  if (spec.camera === "primary") {
    return [[1, 0, 0], [0, 0, -1], [0, 1, 0]];
  }
  return [[-1, 0, 0], [0, 0, -1], [0, -1, 0]];
}

function position(spec: CameraSpec): Vec3 {
  return [0, spec.camera === "primary" ? -spec.camDist : spec.camDist, 0];
}

function focal(spec: CameraSpec): number {
  return spec.height / 2 / Math.tan(spec.fovVert / 2);
}

export function project(p: Vec3, spec: CameraSpec): [number, number] | null {
  const [r, d, f] = rows(spec);
  const o = position(spec);
  const rel: Vec3 = [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
  const x = r[0] * rel[0] + r[1] * rel[1] + r[2] * rel[2];
  const y = d[0] * rel[0] + d[1] * rel[1] + d[2] * rel[2];
  const z = f[0] * rel[0] + f[1] * rel[1] + f[2] * rel[2];
  if (z <= 0.01) return null;
  const fl = focal(spec);
  return [fl * (x / z) + spec.width / 2, fl * (y / z) + spec.height / 2];
}

function viewRay(u: number, v: number, spec: CameraSpec): { origin: Vec3; dir: Vec3 } {
  const fl = focal(spec);
  const xc = (u - spec.width / 2) / fl;
  const yc = (v - spec.height / 2) / fl;
  const [r, d, f] = rows(spec);
  // dir = W^T (xc, yc, 1)
  const dir: Vec3 = [
    r[0] * xc + d[0] * yc + f[0],
    r[1] * xc + d[1] * yc + f[1],
    r[2] * xc + d[2] * yc + f[2],
  ];
  return { origin: position(spec), dir };
}

// Intersect the view ray with the horizontal plane y = planeY.
export function unprojectToPlane(
  u: number, v: number, spec: CameraSpec, planeY = 0,
): Vec3 | null {
  const { origin, dir } = viewRay(u, v, spec);
  if (Math.abs(dir[1]) < 1e-12) return null;
  const t = (planeY - origin[1]) / dir[1];
  if (t <= 0) return null;
  return [origin[0] + t * dir[0], planeY, origin[2] + t * dir[2]];
}

// Dragging with the out-of-plane modifier moves a vertex along world Y:
// keep the anchor's (x, z) and take the y of the closest point of the view
// ray to that vertical line. Given t, the optimal y is origin_y + t*dir_y,
// so t only has to minimize the horizontal residual.
export function unprojectAlongY(
  u: number, v: number, spec: CameraSpec, anchor: Vec3,
): Vec3 {
  const { origin, dir } = viewRay(u, v, spec);
  const dx = dir[0];
  const dz = dir[2];
  const wx = anchor[0] - origin[0];
  const wz = anchor[2] - origin[2];
  const denom = dx * dx + dz * dz;
  const t = denom < 1e-12 ? 0 : (dx * wx + dz * wz) / denom;
  return [anchor[0], origin[1] + t * dir[1], anchor[2]];
}
