// Canvas drawing for the triangle wireframe, selection and trajectories.
// Takes the 2D context interface so tests can pass a recording stub.

export interface Ctx2D {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
}

export function drawWireframe(
  ctx: Ctx2D,
  projected: ([number, number] | null)[][],
  selection: number[],
): void {
  const selected = new Set(selection);
  for (let pass = 0; pass < 2; pass++) {
    ctx.strokeStyle = pass === 0 ? "rgba(80,200,255,0.35)" : "rgba(255,170,40,0.9)";
    ctx.lineWidth = pass === 0 ? 1 : 1.5;
    for (let i = 0; i < projected.length; i++) {
      if (selected.has(i) !== (pass === 1)) continue;
      const [a, b, c] = projected[i];
      if (!a || !b || !c) continue;
      ctx.beginPath();
      ctx.moveTo(a[0], a[1]);
      ctx.lineTo(b[0], b[1]);
      ctx.lineTo(c[0], c[1]);
      ctx.closePath();
      ctx.stroke();
    }
  }
}

export function drawVertexHandles(
  ctx: Ctx2D,
  projected: ([number, number] | null)[][],
  indices: number[],
): void {
  ctx.fillStyle = "rgba(255,255,255,0.9)";
  for (const i of indices) {
    for (const p of projected[i] ?? []) {
      if (!p) continue;
      ctx.beginPath();
      ctx.arc(p[0], p[1], 2.5, 0, Math.PI * 2);
      ctx.fill();
    }
  }
}

// trails: per frame, a list of [x, z] plane points; draw each particle's
// path up to the playback cursor.
export function drawTrails(
  ctx: Ctx2D,
  trails: number[][][],
  cursor: number,
  toScreen: (x: number, z: number) => [number, number] | null,
): number {
  if (!trails.length) return 0;
  const count = trails[0].length;
  const upTo = Math.min(cursor + 1, trails.length);
  ctx.lineWidth = 1.2;
  for (let p = 0; p < count; p++) {
    ctx.strokeStyle = `hsla(${(p * 47) % 360}, 90%, 60%, 0.85)`;
    ctx.beginPath();
    let started = false;
    for (let f = 0; f < upTo; f++) {
      const pt = trails[f][p];
      const s = toScreen(pt[0], pt[1]);
      if (!s) continue;
      if (!started) {
        ctx.moveTo(s[0], s[1]);
        started = true;
      } else {
        ctx.lineTo(s[0], s[1]);
      }
    }
    if (started) ctx.stroke();
  }
  return count;
}
