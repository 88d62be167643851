// In-memory stand-in for the flatsplat session server, implementing the
// documented HTTP contract: content-derived ETags, undo stack, 2d plane
// constraint (409), degenerate-triangle rejection (422), async simulation.

interface MockSession {
  id: string;
  mode: string;
  revision: number;
  triangles: number[][][];
  undo: number[][][][];
  sim: { state: string; done: number; total: number };
  trails: number[][][];
  pendingFrames: number; // frames released per status poll
}

function hashState(tri: number[][][]): string {
  const s = JSON.stringify(tri);
  let h = 2166136261;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 16777619);
  }
  return (h >>> 0).toString(16);
}

function pngBytes(tag: string): ArrayBuffer {
  // not a real PNG; deterministic bytes standing in for encoded pixels
  const data = new TextEncoder().encode("PNG:" + tag);
  return data.buffer.slice(0) as ArrayBuffer;
}

function crossNorm(tri: number[][]): number {
  const ax = tri[1][0] - tri[0][0], ay = tri[1][1] - tri[0][1], az = tri[1][2] - tri[0][2];
  const bx = tri[2][0] - tri[0][0], by = tri[2][1] - tri[0][1], bz = tri[2][2] - tri[0][2];
  const cx = ay * bz - az * by, cy = az * bx - ax * bz, cz = ax * by - ay * bx;
  return Math.hypot(cx, cy, cz);
}

export class MockServer {
  sessions = new Map<string, MockSession>();
  requests: string[] = [];
  private counter = 0;

  makeSession(mode: string, triangles: number[][][]): string {
    const id = `mock${this.counter++}`;
    this.sessions.set(id, {
      id, mode, revision: 0,
      triangles: JSON.parse(JSON.stringify(triangles)),
      undo: [], sim: { state: "idle", done: 0, total: 0 },
      trails: [], pendingFrames: 0,
    });
    return id;
  }

  summary(s: MockSession) {
    return {
      session_id: s.id, revision: s.revision, n_gaussians: s.triangles.length,
      mode: s.mode, extents: { dev_x: 1.386, dev_z: 1.386 },
      resolution: [64, 64], mirror_enabled: true, background: [0, 0, 0],
      cam_dist: 2.4, fov_vert: Math.PI / 3,
    };
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    this.requests.push(`${init?.method ?? "GET"} ${url}`);
    const u = new URL(url, "http://mock");
    const parts = u.pathname.split("/").filter(Boolean);
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : null;

    if (parts[0] !== "sessions") return json({ error: "not found" }, 404);

    if (parts.length === 1) {
      if (method === "POST") {
        if (!body || typeof body.mode !== "string") {
          return json({ error: "mode: missing" }, 400);
        }
        const id = this.makeSession(body.mode, body.triangles ?? []);
        return json(this.summary(this.sessions.get(id)!), 201);
      }
      return json([...this.sessions.values()].map((s) => this.summary(s)));
    }

    const session = this.sessions.get(parts[1]);
    if (!session) return json({ error: `unknown session ${parts[1]}` }, 404);
    const leaf = parts[2];

    if (!leaf) return json(this.summary(session));

    if (leaf === "render") {
      const etag = `"${hashState(session.triangles)}-${u.searchParams.get("camera") ?? "primary"}"`;
      const inm = (init?.headers as Record<string, string>)?.["If-None-Match"];
      if (inm === etag) return new Response(null, { status: 304 });
      return new Response(pngBytes(etag), {
        status: 200,
        headers: { ETag: etag, "X-Revision": String(session.revision),
                   "content-type": "image/png" },
      });
    }

    if (leaf === "soup") {
      return json({ revision: session.revision, mode: session.mode,
                    triangles: session.triangles });
    }

    if (leaf === "edits" && method === "POST") {
      const edits = body.edits as { index: number; vertex: number;
                                    position: number[] }[];
      if (!edits.length) return json({ revision: session.revision });
      const next = JSON.parse(JSON.stringify(session.triangles));
      for (const e of edits) {
        if (session.mode === "2d" && Math.abs(e.position[1]) > 1e-6) {
          return json({ error: `face ${e.index} vertex ${e.vertex}: y = ` +
                        `${e.position[1]} violates the 2d plane constraint` }, 409);
        }
        next[e.index][e.vertex] = e.position;
        if (crossNorm(next[e.index]) < 1e-12) {
          return json({ error: `triangle ${e.index} is degenerate` }, 422);
        }
      }
      session.undo.push(session.triangles);
      session.triangles = next;
      session.revision += 1;
      return json({ revision: session.revision });
    }

    if (leaf === "undo" && method === "POST") {
      const prev = session.undo.pop();
      if (!prev) return json({ error: "nothing to undo" }, 409);
      session.triangles = prev;
      session.revision += 1;
      return json({ revision: session.revision });
    }

    if (leaf === "simulate" && method === "POST") {
      if (session.mode !== "2d") {
        return json({ error: `physics requires a 2d-mode scene (session ` +
                      `scene is '${session.mode}')` }, 409);
      }
      session.sim = { state: "running", done: 0, total: body.frames ?? 30 };
      session.pendingFrames = session.sim.total;
      session.trails = [];
      const trailCount = body.trail_count ?? 10;
      for (let f = 0; f < session.sim.total; f++) {
        session.trails.push(
          Array.from({ length: trailCount }, (_, p) => [p * 0.1, f * 0.05]),
        );
      }
      return json({ status: "started", frames_total: session.sim.total }, 202);
    }

    if (leaf === "simulation") {
      // each poll completes one more frame
      if (session.sim.state === "running") {
        session.sim.done = Math.min(session.sim.done + 1, session.sim.total);
        if (session.sim.done === session.sim.total) session.sim.state = "done";
      }
      return json({ state: session.sim.state, frames_done: session.sim.done,
                    frames_total: session.sim.total });
    }

    if (leaf === "frames") {
      const k = Number(parts[3]);
      if (k < 0 || (session.sim.total && k >= session.sim.total)) {
        return json({ error: `frame ${k} out of range` }, 404);
      }
      if (k < session.sim.done) {
        return new Response(pngBytes(`frame-${k}`), {
          status: 200, headers: { "content-type": "image/png" } });
      }
      return json({ status: session.sim.state, frames_done: session.sim.done,
                    frames_total: session.sim.total }, 202);
    }

    if (leaf === "trajectories") {
      return json({ frames_done: session.sim.done,
                    trails: session.trails.slice(0, session.sim.done) });
    }

    return json({ error: "not found" }, 404);
  };
}

function json(bodyDoc: unknown, status = 200): Response {
  return new Response(JSON.stringify(bodyDoc), {
    status, headers: { "content-type": "application/json" },
  });
}

export function squareSoup(n: number, y = 0): number[][][] {
  const out: number[][][] = [];
  for (let i = 0; i < n; i++) {
    const cx = -0.8 + (1.6 * i) / Math.max(n - 1, 1);
    out.push([
      [cx, y, 0.0],
      [cx + 0.2, y, 0.0],
      [cx, y, 0.25],
    ]);
  }
  return out;
}
