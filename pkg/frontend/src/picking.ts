// Vertex picking and box selection in screen space.

import { CameraSpec, project } from "./camera.js";

export const PICK_RADIUS_PX = 8;

export interface Pick {
  index: number;
  vertex: number;
  distance: number;
}

export function projectSoup(
  triangles: number[][][], spec: CameraSpec,
): ([number, number] | null)[][] {
  return triangles.map((tri) =>
    tri.map((v) => project([v[0], v[1], v[2]], spec)),
  );
}

export function nearestVertex(
  projected: ([number, number] | null)[][],
  screen: [number, number],
  radius: number = PICK_RADIUS_PX,
): Pick | null {
  let best: Pick | null = null;
  for (let i = 0; i < projected.length; i++) {
    for (let k = 0; k < 3; k++) {
      const p = projected[i][k];
      if (!p) continue;
      const d = Math.hypot(p[0] - screen[0], p[1] - screen[1]);
      if (d <= radius && (!best || d < best.distance)) {
        best = { index: i, vertex: k, distance: d };
      }
    }
  }
  return best;
}

// Gaussians whose projected centroid lies inside a screen-space rectangle.
export function boxSelect(
  projected: ([number, number] | null)[][],
  a: [number, number], b: [number, number],
): number[] {
  const x0 = Math.min(a[0], b[0]);
  const x1 = Math.max(a[0], b[0]);
  const y0 = Math.min(a[1], b[1]);
  const y1 = Math.max(a[1], b[1]);
  const out: number[] = [];
  for (let i = 0; i < projected.length; i++) {
    const pts = projected[i].filter((p): p is [number, number] => p !== null);
    if (!pts.length) continue;
    const cx = pts.reduce((s, p) => s + p[0], 0) / pts.length;
    const cy = pts.reduce((s, p) => s + p[1], 0) / pts.length;
    if (cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1) out.push(i);
  }
  return out;
}
