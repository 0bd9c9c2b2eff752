/** Keyboard bindings (documented in the UI help panel):
 *    [ / ]        select previous / next bone
 *    arrows       rotate the selected bone (up/down = theta, left/right = phi)
 *    Q / E        rotate the whole skeleton about the vertical axis
 *    W / S        tilt the whole skeleton about the x axis
 *    U            undo the last edit
 *    Ctrl+S       save the pose
 */

export interface StepSizes {
  theta: number;
  phi: number;
  global: number;
}

export const DEFAULT_STEPS: StepSizes = { theta: 0.05, phi: 0.05, global: 0.1 };

export type Action =
  | { kind: "select"; delta: number }
  | { kind: "bone"; dtheta: number; dphi: number }
  | { kind: "global"; axis: number; dangle: number }
  | { kind: "undo" }
  | { kind: "save" };

export function actionForKey(key: string, ctrl: boolean, steps: StepSizes): Action | null {
  if (ctrl) {
    return key.toLowerCase() === "s" ? { kind: "save" } : null;
  }
  switch (key) {
    case "[":
      return { kind: "select", delta: -1 };
    case "]":
      return { kind: "select", delta: 1 };
    case "ArrowUp":
      return { kind: "bone", dtheta: -steps.theta, dphi: 0 };
    case "ArrowDown":
      return { kind: "bone", dtheta: steps.theta, dphi: 0 };
    case "ArrowLeft":
      return { kind: "bone", dtheta: 0, dphi: -steps.phi };
    case "ArrowRight":
      return { kind: "bone", dtheta: 0, dphi: steps.phi };
    default:
      break;
  }
  switch (key.toLowerCase()) {
    case "q":
      return { kind: "global", axis: 1, dangle: -steps.global };
    case "e":
      return { kind: "global", axis: 1, dangle: steps.global };
    case "w":
      return { kind: "global", axis: 0, dangle: -steps.global };
    case "s":
      return { kind: "global", axis: 0, dangle: steps.global };
    case "u":
      return { kind: "undo" };
    default:
      return null;
  }
}
