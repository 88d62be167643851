// Physics panel: start/poll a server-side simulation, fetch frames for
// playback, expose trail data for the overlay. Disabled for non-2d scenes.

import { ApiClient, SimParams } from "./api.js";
import * as S from "./state.js";

export interface PhysicsHooks {
  onFrame?(bytes: ArrayBuffer, index: number): void;
  onState?(state: S.EditorState): void;
}

export class PhysicsPanel {
  frames: (ArrayBuffer | null)[] = [];
  trails: number[][][] = [];
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private api: ApiClient,
    private getState: () => S.EditorState,
    private setState: (s: S.EditorState) => void,
    private hooks: PhysicsHooks = {},
    private pollMs = 120,
  ) {}

  get enabled(): boolean {
    return S.physicsAvailable(this.getState());
  }

  disabledReason(): string | null {
    return this.enabled
      ? null
      : "physics needs a 2d-mode scene (this one is "
        + `'${this.getState().mode}')`;
  }

  async start(params: SimParams): Promise<void> {
    if (!this.enabled) {
      throw new Error(this.disabledReason()!);
    }
    const state = this.getState();
    this.frames = new Array(params.frames).fill(null);
    this.trails = [];
    await this.api.simulate(state.sessionId!, params);
    this.setState(S.simUpdated(state, {
      state: "running", frames_done: 0, frames_total: params.frames,
    }));
    await this.poll();
  }

  async poll(): Promise<void> {
    const state = this.getState();
    if (!state.sessionId) return;
    const status = await this.api.simulationStatus(state.sessionId);
    this.setState(S.simUpdated(this.getState(), status));
    await this.fetchReadyFrames(status.frames_done);
    if (this.getState().trails) {
      const t = await this.api.trajectories(state.sessionId);
      this.trails = t.trails;
    }
    this.hooks.onState?.(this.getState());
    if (status.state === "running") {
      this.timer = setTimeout(() => void this.poll(), this.pollMs);
    }
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private async fetchReadyFrames(done: number): Promise<void> {
    const id = this.getState().sessionId!;
    for (let k = 0; k < Math.min(done, this.frames.length); k++) {
      if (this.frames[k] === null) {
        this.frames[k] = await this.api.frame(id, k);
      }
    }
  }

  seek(cursor: number): ArrayBuffer | null {
    this.setState(S.simSeek(this.getState(), cursor));
    const frame = this.frames[this.getState().sim.cursor] ?? null;
    if (frame) {
      this.hooks.onFrame?.(frame, this.getState().sim.cursor);
    }
    return frame;
  }

  scrubberBounds(): [number, number] {
    return [0, Math.max(this.getState().sim.framesTotal - 1, 0)];
  }
}
