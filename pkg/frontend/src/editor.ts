// Editor session: wires the API client, state transitions and canvas math.
// Every mutation round-trips through the server — nothing edits scene state
// locally; the displayed image is always a render the server produced.

import { ApiClient, ApiError, SessionSummary } from "./api.js";
import { CameraSpec, project, unprojectAlongY, unprojectToPlane } from "./camera.js";
import { boxSelect, nearestVertex, projectSoup } from "./picking.js";
import * as S from "./state.js";

export interface EditorHooks {
  // called with fresh PNG bytes whenever the displayed render changes
  onRender?(bytes: ArrayBuffer, etag: string): void;
  onState?(state: S.EditorState): void;
}

export class Editor {
  state: S.EditorState = S.initialState();
  summary: SessionSummary | null = null;
  soup: number[][][] = [];
  soupRevision = -1;

  constructor(private api: ApiClient, private hooks: EditorHooks = {}) {}

  private emit() {
    this.hooks.onState?.(this.state);
  }

  cameraSpec(): CameraSpec {
    const s = this.summary!;
    return {
      camDist: s.cam_dist,
      fovVert: s.fov_vert,
      width: s.resolution[0],
      height: s.resolution[1],
      camera: this.state.camera,
    };
  }

  // ---------------------------------------------------------------- connect

  async connect(sceneDoc?: unknown): Promise<void> {
    let summary: SessionSummary;
    if (sceneDoc !== undefined) {
      summary = await this.api.createSession(sceneDoc);
    } else {
      const sessions = await this.api.listSessions();
      if (!sessions.length) {
        throw new ApiError(404, "no sessions on the server; load a scene");
      }
      summary = sessions[0];
    }
    this.summary = summary;
    this.state = S.connected(this.state, summary.session_id, summary.mode,
                             summary.revision);
    await this.refresh();
  }

  async reconnect(): Promise<void> {
    // resume at the server's revision (it is the single source of truth)
    this.summary = await this.api.getSession(this.state.sessionId!);
    this.state = S.serverAck(this.state, this.summary.revision);
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const id = this.state.sessionId!;
    const render = await this.api.render(id, {
      camera: this.state.camera,
      etag: this.state.displayedEtag ?? undefined,
    });
    const soup = await this.api.soup(id);
    this.soup = soup.triangles;
    this.soupRevision = soup.revision;
    this.state = S.serverAck(this.state, soup.revision);
    if (!render.notModified) {
      const revision = render.revision >= 0 ? render.revision : soup.revision;
      this.state = S.displayed(this.state, revision, render.etag);
      this.hooks.onRender?.(render.bytes, render.etag);
    }
    this.emit();
  }

  // ----------------------------------------------------------------- camera

  async toggleCamera(): Promise<void> {
    this.state = S.toggleCamera(this.state);
    this.state = { ...this.state, displayedEtag: null };
    await this.refresh();
  }

  // ------------------------------------------------------------------ edits

  projectedSoup(): ([number, number] | null)[][] {
    return projectSoup(this.soup, this.cameraSpec());
  }

  pointerDown(screen: [number, number], outOfPlane = false): boolean {
    const pick = nearestVertex(this.projectedSoup(), screen);
    if (!pick) return false;
    const position = this.soup[pick.index][pick.vertex] as [number, number, number];
    const axis: S.Axis = outOfPlane ? "y" : "plane";
    this.state = S.beginDrag(this.state, pick.index, pick.vertex, axis,
                             screen, position);
    this.emit();
    return true;
  }

  pointerMove(screen: [number, number]): void {
    const drag = this.state.drag;
    if (!drag) return;
    const spec = this.cameraSpec();
    let target: [number, number, number];
    if (drag.axis === "y") {
      target = unprojectAlongY(screen[0], screen[1], spec, drag.startPosition);
    } else {
      const hit = unprojectToPlane(screen[0], screen[1], spec,
                                   drag.startPosition[1]);
      if (!hit) return;
      target = hit;
    }
    this.state = S.updateDrag(this.state, screen, target);
    this.emit();
  }

  async pointerUp(): Promise<void> {
    const { state, edit } = S.endDrag(this.state);
    this.state = state;
    if (!edit) {
      this.emit();
      return; // zero-pixel drag: no request
    }
    try {
      const resp = await this.api.postEdits(this.state.sessionId!, [edit]);
      this.state = S.serverAck(this.state, resp.revision);
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 422)) {
        this.state = S.setToast(this.state, err.message);
        this.emit();
      } else {
        throw err;
      }
    }
  }

  async undo(): Promise<void> {
    try {
      const resp = await this.api.undo(this.state.sessionId!);
      this.state = S.serverAck(this.state, resp.revision);
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.state = S.setToast(this.state, err.message);
        this.emit();
      } else {
        throw err;
      }
    }
  }

  select(a: [number, number], b: [number, number]): void {
    this.state = S.setSelection(this.state, boxSelect(this.projectedSoup(), a, b));
    this.emit();
  }

  planeToScreen(x: number, z: number): [number, number] | null {
    return project([x, 0, z], this.cameraSpec());
  }
}
