import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Editor } from "../src/editor.js";
import { project, unprojectAlongY, unprojectToPlane } from "../src/camera.js";
import { boxSelect, nearestVertex, projectSoup } from "../src/picking.js";
import { PhysicsPanel } from "../src/physics.js";
import * as S from "../src/state.js";
import { MockServer, squareSoup } from "./mock_server.js";

const SPEC = {
  camDist: 2.4, fovVert: Math.PI / 3, width: 64, height: 64,
  camera: "primary" as const,
};

function makeEditor(mode = "2d", renders: { bytes: ArrayBuffer; etag: string }[] = []) {
  const server = new MockServer();
  const id = server.makeSession(mode, squareSoup(5));
  const api = new ApiClient("http://mock", server.fetch);
  const editor = new Editor(api, {
    onRender: (bytes, etag) => renders.push({ bytes, etag }),
  });
  return { server, id, api, editor };
}

describe("camera math", () => {
  it("projects the origin to the image center", () => {
    expect(project([0, 0, 0], SPEC)).toEqual([32, 32]);
  });

  it("unprojects back to the plane point", () => {
    const p: [number, number, number] = [0.4, 0, -0.3];
    const screen = project(p, SPEC)!;
    const back = unprojectToPlane(screen[0], screen[1], SPEC, 0)!;
    expect(back[0]).toBeCloseTo(0.4, 9);
    expect(back[2]).toBeCloseTo(-0.3, 9);
  });

  it("moves along world Y under the out-of-plane modifier", () => {
    const anchor: [number, number, number] = [0.2, 0, 0.1];
    const lifted: [number, number, number] = [0.2, 0.3, 0.1];
    const screen = project(lifted, SPEC)!;
    const back = unprojectAlongY(screen[0], screen[1], SPEC, anchor);
    expect(back[0]).toBeCloseTo(0.2, 9);
    expect(back[1]).toBeCloseTo(0.3, 6);
    expect(back[2]).toBeCloseTo(0.1, 9);
  });
});

describe("picking", () => {
  it("picks the nearest vertex within 8px and nothing beyond", () => {
    const projected = projectSoup(squareSoup(3), SPEC);
    const target = projected[1][2]!;
    const hit = nearestVertex(projected, [target[0] + 3, target[1] - 2]);
    expect(hit).not.toBeNull();
    expect(hit!.index).toBe(1);
    expect(hit!.vertex).toBe(2);
    expect(nearestVertex(projected, [target[0] + 30, target[1] + 30])).toBeNull();
  });

  it("box-selects by projected centroid", () => {
    const projected = projectSoup(squareSoup(5), SPEC);
    const all = boxSelect(projected, [0, 0], [64, 64]);
    expect(all).toEqual([0, 1, 2, 3, 4]);
    expect(boxSelect(projected, [0, 0], [1, 1])).toEqual([]);
  });
});

describe("editor session", () => {
  let renders: { bytes: ArrayBuffer; etag: string }[];

  beforeEach(() => {
    renders = [];
  });

  it("connects and shows the first render", async () => {
    const { editor } = makeEditor("2d", renders);
    await editor.connect();
    expect(editor.state.sessionId).not.toBeNull();
    expect(renders.length).toBe(1);
    expect(editor.state.displayedEtag).toBe(renders[0].etag);
  });

  it("surfaces a connection failure", async () => {
    const api = new ApiClient("http://mock", async () =>
      new Response(JSON.stringify([]), { status: 200 }));
    const editor = new Editor(api);
    await expect(editor.connect()).rejects.toThrow(/no sessions/);
  });

  it("zero-pixel drag posts no request", async () => {
    const { server, editor } = makeEditor("2d", renders);
    await editor.connect();
    const projected = editor.projectedSoup();
    const at = projected[0][0]!;
    const before = server.requests.filter((r) => r.includes("edits")).length;
    expect(editor.pointerDown([at[0], at[1]])).toBe(true);
    await editor.pointerUp();
    const after = server.requests.filter((r) => r.includes("edits")).length;
    expect(after).toBe(before);
    expect(editor.state.drag).toBeNull();
  });

  it("drag then undo restores the pre-edit render byte-identically (same ETag)", async () => {
    const { editor } = makeEditor("2d", renders);
    await editor.connect();
    const preEtag = editor.state.displayedEtag!;
    const preBytes = new Uint8Array(renders[0].bytes.slice(0));

    const projected = editor.projectedSoup();
    const at = projected[2][1]!;
    editor.pointerDown([at[0], at[1]]);
    editor.pointerMove([at[0] + 6, at[1] + 1]);
    await editor.pointerUp();
    expect(editor.state.displayedEtag).not.toBe(preEtag);
    expect(editor.state.serverRevision).toBe(1);

    await editor.undo();
    expect(editor.state.serverRevision).toBe(2);
    expect(editor.state.displayedEtag).toBe(preEtag);
    const lastBytes = new Uint8Array(renders[renders.length - 1].bytes);
    expect([...lastBytes]).toEqual([...preBytes]);
  });

  it("2d out-of-plane drags are forced onto the plane (control disabled)", async () => {
    const { editor } = makeEditor("2d", renders);
    await editor.connect();
    const projected = editor.projectedSoup();
    const at = projected[1][0]!;
    editor.pointerDown([at[0], at[1]], true); // out-of-plane modifier held
    expect(editor.state.drag!.axis).toBe("plane"); // disabled for 2d scenes
    editor.pointerMove([at[0] + 4, at[1] + 4]);
    await editor.pointerUp();
    expect(editor.state.toast).toBeNull(); // edit stayed legal
  });

  it("a 409 from the server surfaces as a constraint toast", async () => {
    const { server, editor } = makeEditor("2d", renders);
    await editor.connect();
    // bypass the UI constraint to emulate a stale client hitting the server
    editor.state = S.beginDrag(
      { ...editor.state, mode: "graphite" }, 0, 0, "y", [10, 10],
      [0, 0, 0]);
    editor.state = S.updateDrag(editor.state, [10, 16], [0, 0.4, 0]);
    await editor.pointerUp();
    expect(editor.state.toast).toMatch(/vertex|plane/);
    expect(server.sessions.values().next().value!.revision).toBe(0);
  });

  it("amorphous scenes keep the Y axis control", async () => {
    const { editor } = makeEditor("amorphous", renders);
    await editor.connect();
    const at = editor.projectedSoup()[0][0]!;
    editor.pointerDown([at[0], at[1]], true);
    expect(editor.state.drag!.axis).toBe("y");
    editor.pointerMove([at[0], at[1] - 8]);
    await editor.pointerUp();
    expect(editor.state.toast).toBeNull();
    expect(editor.state.serverRevision).toBe(1);
  });

  it("reconnect resumes at the server revision", async () => {
    const { server, editor, id } = makeEditor("2d", renders);
    await editor.connect();
    // another client edits twice behind our back
    const session = server.sessions.get(id)!;
    session.undo.push(session.triangles);
    session.triangles = squareSoup(5, 0).map((tri) =>
      tri.map(([x, y, z]) => [x + 0.05, y, z]));
    session.revision = 7;
    await editor.reconnect();
    expect(editor.state.serverRevision).toBe(7);
    expect(editor.state.displayedRevision).toBe(7);
  });

  it("toggling the camera refetches the view", async () => {
    const { editor } = makeEditor("2d", renders);
    await editor.connect();
    await editor.toggleCamera();
    expect(editor.state.camera).toBe("mirror");
    expect(renders.length).toBe(2);
    expect(renders[1].etag).toContain("mirror");
  });
});

describe("physics panel", () => {
  function panel(mode: string) {
    const server = new MockServer();
    server.makeSession(mode, squareSoup(4));
    const api = new ApiClient("http://mock", server.fetch);
    const editor = new Editor(api);
    const frames: number[] = [];
    const p = new PhysicsPanel(api, () => editor.state,
                               (s) => { editor.state = s; },
                               { onFrame: (_b, k) => frames.push(k) }, 0);
    return { server, api, editor, p, frames };
  }

  it("is disabled with an explanation for non-2d scenes", async () => {
    const { editor, p } = panel("graphite");
    await editor.connect();
    expect(p.enabled).toBe(false);
    expect(p.disabledReason()).toMatch(/2d/);
    await expect(p.start({ frames: 2 })).rejects.toThrow(/2d/);
  });

  it("runs a simulation to completion and bounds the scrubber", async () => {
    const { editor, p } = panel("2d");
    await editor.connect();
    await p.start({ frames: 4, trail_count: 6 });
    while (editor.state.sim.state === "running") {
      await p.poll();
    }
    expect(editor.state.sim.framesDone).toBe(4);
    expect(p.scrubberBounds()).toEqual([0, 3]);
    expect(p.frames.filter((f) => f !== null).length).toBe(4);
    // zero-gravity static playback: mock frames are deterministic per index
    expect(p.seek(2)).not.toBeNull();
    expect(editor.state.sim.cursor).toBe(2);
    p.seek(99);
    expect(editor.state.sim.cursor).toBe(3); // clamped to the last frame
  });

  it("trail overlay carries the requested sample count", async () => {
    const { editor, p } = panel("2d");
    await editor.connect();
    editor.state = { ...editor.state, trails: true };
    await p.start({ frames: 3, trail_count: 6 });
    while (editor.state.sim.state === "running") {
      await p.poll();
    }
    expect(p.trails.length).toBe(3);
    expect(p.trails[0].length).toBe(6);
  });
});

describe("state invariants", () => {
  it("displayed revision can never exceed the server revision", () => {
    const st = S.connected(S.initialState(), "s", "2d", 3);
    expect(() => S.displayed(st, 4, '"x"')).toThrow();
    expect(S.displayed(st, 3, '"x"').displayedRevision).toBe(3);
  });

  it("drag commits only on release", () => {
    let st = S.beginDrag(S.initialState(), 1, 2, "plane", [5, 5], [0, 0, 0]);
    st = S.updateDrag(st, [9, 5], [0.1, 0, 0]);
    const { edit } = S.endDrag(st);
    expect(edit).toEqual({ index: 1, vertex: 2, position: [0.1, 0, 0] });
    const still = S.endDrag(S.beginDrag(S.initialState(), 0, 0, "plane",
                                        [5, 5], [0, 0, 0]));
    expect(still.edit).toBeNull();
  });
});
