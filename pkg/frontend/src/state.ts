// Editor state and its pure transition helpers. The canvas layer calls
// these and performs IO; everything here is synchronous and testable.
//
// Invariants: a drag commits exactly once, on release (zero-movement drags
// commit nothing); the displayed revision never exceeds the server's.

export type Axis = "plane" | "y";

export interface DragState {
  index: number;
  vertex: number;
  axis: Axis;
  startScreen: [number, number];
  startPosition: [number, number, number];
  position: [number, number, number];
  moved: boolean;
}

export interface SimState {
  state: "idle" | "running" | "done" | "error";
  framesDone: number;
  framesTotal: number;
  cursor: number;
  playing: boolean;
}

export interface EditorState {
  sessionId: string | null;
  mode: string;
  serverRevision: number;
  displayedRevision: number;
  displayedEtag: string | null;
  camera: "primary" | "mirror";
  selection: number[];
  drag: DragState | null;
  wireframe: boolean;
  trails: boolean;
  toast: string | null;
  sim: SimState;
}

export function initialState(): EditorState {
  return {
    sessionId: null,
    mode: "",
    serverRevision: 0,
    displayedRevision: 0,
    displayedEtag: null,
    camera: "primary",
    selection: [],
    drag: null,
    wireframe: true,
    trails: false,
    toast: null,
    sim: { state: "idle", framesDone: 0, framesTotal: 0, cursor: 0, playing: false },
  };
}

export function connected(state: EditorState, sessionId: string, mode: string,
                          revision: number): EditorState {
  return { ...state, sessionId, mode, serverRevision: revision };
}

export function displayed(state: EditorState, revision: number,
                          etag: string): EditorState {
  if (revision > state.serverRevision) {
    throw new Error("displayed revision would exceed the server revision");
  }
  return { ...state, displayedRevision: revision, displayedEtag: etag };
}

export function serverAck(state: EditorState, revision: number): EditorState {
  return { ...state, serverRevision: Math.max(state.serverRevision, revision) };
}

export function beginDrag(state: EditorState, index: number, vertex: number,
                          axis: Axis, screen: [number, number],
                          position: [number, number, number]): EditorState {
  // out-of-plane handles are disabled for plane-locked scenes
  const resolved: Axis = state.mode === "2d" ? "plane" : axis;
  return {
    ...state,
    drag: {
      index, vertex, axis: resolved, startScreen: screen,
      startPosition: position, position, moved: false,
    },
  };
}

export function updateDrag(state: EditorState, screen: [number, number],
                           position: [number, number, number]): EditorState {
  if (!state.drag) return state;
  const [sx, sy] = state.drag.startScreen;
  const moved = state.drag.moved || screen[0] !== sx || screen[1] !== sy;
  return { ...state, drag: { ...state.drag, position, moved } };
}

// Returns the edit to POST, or null for a zero-pixel drag.
export function endDrag(state: EditorState):
    { state: EditorState; edit: { index: number; vertex: number;
      position: [number, number, number] } | null } {
  const drag = state.drag;
  const next = { ...state, drag: null };
  if (!drag || !drag.moved) {
    return { state: next, edit: null };
  }
  return {
    state: next,
    edit: { index: drag.index, vertex: drag.vertex, position: drag.position },
  };
}

export function setToast(state: EditorState, message: string | null): EditorState {
  return { ...state, toast: message };
}

export function setSelection(state: EditorState, indices: number[]): EditorState {
  return { ...state, selection: [...indices].sort((a, b) => a - b) };
}

export function toggleCamera(state: EditorState): EditorState {
  return { ...state, camera: state.camera === "primary" ? "mirror" : "primary" };
}

export function simUpdated(state: EditorState, status: {
  state: SimState["state"]; frames_done: number; frames_total: number;
}): EditorState {
  const cursor = Math.min(state.sim.cursor, Math.max(status.frames_done - 1, 0));
  return {
    ...state,
    sim: { ...state.sim, state: status.state, framesDone: status.frames_done,
           framesTotal: status.frames_total, cursor },
  };
}

export function simSeek(state: EditorState, cursor: number): EditorState {
  const bounded = Math.max(0, Math.min(cursor, state.sim.framesTotal - 1));
  return { ...state, sim: { ...state.sim, cursor: bounded } };
}

export function physicsAvailable(state: EditorState): boolean {
  return state.mode === "2d";
}
