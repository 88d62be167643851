// Browser bootstrap: DOM wiring for the editor against a running
// `flatsplat serve` instance (default http://127.0.0.1:7878, override with
// ?server=).

import { ApiClient } from "./api.js";
import { Editor } from "./editor.js";
import { drawTrails, drawVertexHandles, drawWireframe } from "./overlay.js";
import { PhysicsPanel } from "./physics.js";

function byId<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function boot() {
  const params = new URLSearchParams(location.search);
  const server = params.get("server") ?? "http://127.0.0.1:7878";
  const api = new ApiClient(server);

  const image = byId<HTMLImageElement>("render");
  const canvas = byId<HTMLCanvasElement>("overlay");
  const toast = byId<HTMLDivElement>("toast");
  const status = byId<HTMLDivElement>("status");
  const scrubber = byId<HTMLInputElement>("sim-scrubber");

  let objectUrl: string | null = null;
  const editor = new Editor(api, {
    onRender(bytes) {
      if (objectUrl) URL.revokeObjectURL(objectUrl);
      objectUrl = URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
      image.src = objectUrl;
      requestAnimationFrame(redraw);
    },
    onState(state) {
      toast.textContent = state.toast ?? "";
      toast.style.display = state.toast ? "block" : "none";
      status.textContent =
        `session ${state.sessionId ?? "-"} rev ${state.displayedRevision} ` +
        `cam ${state.camera} mode ${state.mode} ` +
        `selected ${state.selection.length}`;
    },
  });

  const physics = new PhysicsPanel(
    api,
    () => editor.state,
    (s) => { editor.state = s; },
    {
      onFrame(bytes) {
        if (objectUrl) URL.revokeObjectURL(objectUrl);
        objectUrl = URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
        image.src = objectUrl;
        requestAnimationFrame(redraw);
      },
    },
  );

  function redraw() {
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (!editor.summary) return;
    if (editor.state.wireframe) {
      const projected = editor.projectedSoup();
      drawWireframe(ctx, projected, editor.state.selection);
      drawVertexHandles(ctx, projected, editor.state.selection);
    }
    if (editor.state.trails && physics.trails.length) {
      drawTrails(ctx, physics.trails, editor.state.sim.cursor,
                 (x, z) => editor.planeToScreen(x, z));
    }
  }

  function canvasPoint(ev: MouseEvent): [number, number] {
    const rect = canvas.getBoundingClientRect();
    return [
      ((ev.clientX - rect.left) / rect.width) * canvas.width,
      ((ev.clientY - rect.top) / rect.height) * canvas.height,
    ];
  }

  let boxStart: [number, number] | null = null;
  canvas.addEventListener("mousedown", (ev) => {
    const p = canvasPoint(ev);
    if (ev.shiftKey) {
      boxStart = p;
      return;
    }
    if (!editor.pointerDown(p, ev.altKey)) {
      boxStart = p; // empty space: start a box selection
    }
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (editor.state.drag) {
      editor.pointerMove(canvasPoint(ev));
      redraw();
    }
  });
  canvas.addEventListener("mouseup", (ev) => {
    const p = canvasPoint(ev);
    if (editor.state.drag) {
      void editor.pointerUp();
    } else if (boxStart) {
      editor.select(boxStart, p);
      redraw();
    }
    boxStart = null;
  });

  byId<HTMLButtonElement>("undo").addEventListener("click", () => void editor.undo());
  byId<HTMLButtonElement>("camera").addEventListener("click", () => void editor.toggleCamera());
  byId<HTMLInputElement>("wireframe").addEventListener("change", (ev) => {
    editor.state = { ...editor.state, wireframe: (ev.target as HTMLInputElement).checked };
    redraw();
  });
  byId<HTMLInputElement>("trails").addEventListener("change", (ev) => {
    editor.state = { ...editor.state, trails: (ev.target as HTMLInputElement).checked };
    redraw();
  });

  const playButton = byId<HTMLButtonElement>("sim-play");
  playButton.addEventListener("click", () => {
    if (!physics.enabled) {
      editor.state = { ...editor.state, toast: physics.disabledReason() };
      return;
    }
    const frames = Number(byId<HTMLInputElement>("sim-frames").value) || 30;
    void physics.start({
      frames,
      substeps: 25,
      youngs_modulus: Number(byId<HTMLInputElement>("sim-e").value) || 1e4,
      poisson: Number(byId<HTMLInputElement>("sim-nu").value) || 0.3,
      gravity: [0, Number(byId<HTMLInputElement>("sim-g").value) || -9.8],
    }).then(() => {
      scrubber.max = String(physics.scrubberBounds()[1]);
    });
  });
  scrubber.addEventListener("input", () => {
    physics.seek(Number(scrubber.value));
    redraw();
  });

  const fileInput = byId<HTMLInputElement>("scene-file");
  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const doc = JSON.parse(await file.text());
    await editor.connect(doc);
    canvas.width = editor.summary!.resolution[0];
    canvas.height = editor.summary!.resolution[1];
    redraw();
  });

  try {
    await editor.connect();
    canvas.width = editor.summary!.resolution[0];
    canvas.height = editor.summary!.resolution[1];
    redraw();
  } catch (err) {
    status.textContent = `not connected: ${(err as Error).message}`;
    status.classList.add("error");
  }
}

document.addEventListener("DOMContentLoaded", () => void boot());
