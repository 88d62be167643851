// Typed client for the flatsplat session server. The fetch implementation is
// injectable so tests can run against an in-memory mock of the same contract.

export interface SessionSummary {
  session_id: string;
  revision: number;
  n_gaussians: number;
  mode: string;
  extents: { dev_x: number; dev_z: number };
  resolution: [number, number];
  mirror_enabled: boolean;
  background: [number, number, number];
  cam_dist: number;
  fov_vert: number;
}

export interface RenderResponse {
  etag: string;
  revision: number;
  bytes: ArrayBuffer;
  notModified: boolean;
}

export interface EditPayload {
  index: number;
  vertex: number;
  position: [number, number, number];
}

export interface SimParams {
  frames: number;
  substeps?: number;
  youngs_modulus?: number;
  poisson?: number;
  density?: number;
  gravity?: [number, number];
  trail_count?: number;
}

export interface SimStatus {
  state: "idle" | "running" | "done" | "error";
  frames_done: number;
  frames_total: number;
  error?: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorMessage(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    return body.error ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorMessage(resp));
    }
    return (await resp.json()) as T;
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.json("/sessions");
  }

  createSession(sceneDoc: unknown): Promise<SessionSummary> {
    return this.json("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(sceneDoc),
    });
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.json(`/sessions/${id}`);
  }

  async render(
    id: string,
    opts: { camera?: string; width?: number; height?: number; etag?: string } = {},
  ): Promise<RenderResponse> {
    const params = new URLSearchParams();
    if (opts.camera) params.set("camera", opts.camera);
    if (opts.width) params.set("width", String(opts.width));
    if (opts.height) params.set("height", String(opts.height));
    const headers: Record<string, string> = {};
    if (opts.etag) headers["If-None-Match"] = opts.etag;
    const resp = await this.fetchImpl(
      `${this.baseUrl}/sessions/${id}/render?${params}`,
      { headers },
    );
    if (resp.status === 304) {
      return { etag: opts.etag!, revision: -1, bytes: new ArrayBuffer(0), notModified: true };
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorMessage(resp));
    }
    return {
      etag: resp.headers.get("ETag") ?? "",
      revision: Number(resp.headers.get("X-Revision") ?? -1),
      bytes: await resp.arrayBuffer(),
      notModified: false,
    };
  }

  soup(id: string): Promise<{ revision: number; mode: string; triangles: number[][][] }> {
    return this.json(`/sessions/${id}/soup`);
  }

  postEdits(id: string, edits: EditPayload[]): Promise<{ revision: number }> {
    return this.json(`/sessions/${id}/edits`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ edits }),
    });
  }

  undo(id: string): Promise<{ revision: number }> {
    return this.json(`/sessions/${id}/undo`, { method: "POST" });
  }

  simulate(id: string, params: SimParams): Promise<{ status: string; frames_total: number }> {
    return this.json(`/sessions/${id}/simulate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(params),
    });
  }

  simulationStatus(id: string): Promise<SimStatus> {
    return this.json(`/sessions/${id}/simulation`);
  }

  async frame(id: string, k: number): Promise<ArrayBuffer | null> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/frames/${k}`);
    if (resp.status === 202) return null;
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return resp.arrayBuffer();
  }

  trajectories(id: string): Promise<{ frames_done: number; trails: number[][][] }> {
    return this.json(`/sessions/${id}/trajectories`);
  }
}
