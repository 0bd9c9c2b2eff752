import { AnnotationClient } from "./client.js";
import { Action, actionForKey, DEFAULT_STEPS, StepSizes } from "./keyboard.js";
import { DEFAULT_ORBIT, describeSelection, OrbitView, Primitive, render2d, render3d } from "./scene.js";
import { isSessionState, SessionState, TreeDef } from "./types.js";

/** Render sink: the browser wires real canvases, tests wire recorders. */
export interface Panel {
  draw(prims: Primitive[]): void;
}

export interface AppPanels {
  three: Panel;
  two: Panel;
  status?: (message: string) => void;
  banner?: (message: string | null) => void;
}

export interface ViewState {
  sessionId: string | null;
  selectedBone: number;
  steps: StepSizes;
  orbit: OrbitView;
  panelSize: number;
}

/**
 * UI state machine. Every coordinate on screen originates from a service
 * payload; the app never recomputes kinematics or projections. Keystrokes
 * map to at most one request each, serialized by the client's queue.
 */
export class App {
  view: ViewState;
  state: SessionState | null = null;
  lastError: string | null = null;

  constructor(
    private readonly client: AnnotationClient,
    private readonly tree: TreeDef,
    private readonly panels: AppPanels,
    panelSize = 520,
  ) {
    this.view = {
      sessionId: null,
      selectedBone: 0,
      steps: { ...DEFAULT_STEPS },
      orbit: { ...DEFAULT_ORBIT },
      panelSize,
    };
  }

  async start(index?: number): Promise<void> {
    this.applyState(await this.client.createSession(index));
  }

  /** Accepts a payload if it is well-formed; otherwise keeps the last good
   * frame and raises the error banner. */
  applyState(payload: unknown): void {
    if (!isSessionState(payload)) {
      this.setBanner("malformed state payload; keeping last good frame");
      return;
    }
    this.state = payload;
    this.view.sessionId = payload.session_id;
    this.setBanner(null);
    this.redraw();
  }

  redraw(): void {
    if (!this.state) {
      return;
    }
    this.panels.three.draw(
      render3d(this.state, this.tree, this.view.orbit, this.view.panelSize, this.view.selectedBone),
    );
    this.panels.two.draw(render2d(this.state, this.tree, this.view.selectedBone));
    this.panels.status?.(describeSelection(this.tree, this.view.selectedBone));
  }

  setBanner(message: string | null): void {
    this.lastError = message;
    this.panels.banner?.(message);
  }

  selectBone(delta: number): void {
    const n = this.tree.bone_children.length;
    this.view.selectedBone = (this.view.selectedBone + delta + n) % n;
    this.redraw();
  }

  /** One keystroke, at most one request; no session means no request. */
  async handleKey(key: string, ctrl = false): Promise<void> {
    const sid = this.view.sessionId;
    if (!sid) {
      return;
    }
    const action = actionForKey(key, ctrl, this.view.steps);
    if (!action) {
      return;
    }
    await this.dispatch(sid, action);
  }

  private async dispatch(sid: string, action: Action): Promise<void> {
    if (action.kind === "select") {
      this.selectBone(action.delta);
      return;
    }
    try {
      switch (action.kind) {
        case "bone":
          this.applyState(
            await this.client.editBone(sid, this.view.selectedBone, action.dtheta, action.dphi),
          );
          break;
        case "global":
          this.applyState(await this.client.editGlobal(sid, action.axis, action.dangle));
          break;
        case "undo":
          this.applyState(await this.client.undo(sid));
          break;
        case "save": {
          const saved = await this.client.save(sid);
          this.panels.status?.(`saved pose ${saved.count} -> ${saved.path}`);
          break;
        }
      }
    } catch (err) {
      this.setBanner(err instanceof Error ? err.message : String(err));
    }
  }
}
