import { SessionState, TreeDef } from "./types.js";

/**
 * Pure view layer: both panels render to primitive lists that a canvas
 * adapter replays. The 2D panel echoes the service keypoints verbatim; all
 * projection math for it happened on the server. The 3D panel uses an
 * orbit camera that exists purely for on-screen inspection and is unrelated
 * to the annotation camera intrinsics.
 */

export type Primitive =
  | { kind: "line"; x1: number; y1: number; x2: number; y2: number; color: string; width: number }
  | { kind: "circle"; x: number; y: number; r: number; color: string }
  | { kind: "label"; x: number; y: number; text: string; color: string };

export interface OrbitView {
  azimuth: number;
  elevation: number;
  zoom: number;
}

export const DEFAULT_ORBIT: OrbitView = { azimuth: 0.6, elevation: 0.25, zoom: 1.0 };

const BONE_COLOR = "#7f8c8d";
const SELECTED_COLOR = "#e67e22";
const JOINT_COLOR = "#2c3e50";
const KEYPOINT_COLOR = "#27ae60";

/** Orbit projection of one mm-scale point onto a square panel. Poses are
 * y-down, so screen y follows the pose y after the orbit rotation. */
export function orbitProject(
  point: readonly number[],
  view: OrbitView,
  panelSize: number,
): [number, number] {
  const [x, y, z] = point;
  const ca = Math.cos(view.azimuth);
  const sa = Math.sin(view.azimuth);
  const xr = ca * x + sa * z;
  const zr = -sa * x + ca * z;
  const ce = Math.cos(view.elevation);
  const se = Math.sin(view.elevation);
  const yr = ce * y - se * zr;
  const scale = (view.zoom * panelSize) / 2400;
  return [panelSize / 2 + xr * scale, panelSize / 2 + yr * scale];
}

export function render3d(
  state: SessionState,
  tree: TreeDef,
  view: OrbitView,
  panelSize: number,
  selectedBone: number,
): Primitive[] {
  const prims: Primitive[] = [];
  const screen = state.joints.map((j) => orbitProject(j, view, panelSize));
  tree.bone_children.forEach((child, bone) => {
    const parent = tree.parents[child];
    const [x1, y1] = screen[parent];
    const [x2, y2] = screen[child];
    prims.push({
      kind: "line",
      x1,
      y1,
      x2,
      y2,
      color: bone === selectedBone ? SELECTED_COLOR : BONE_COLOR,
      width: bone === selectedBone ? 3 : 2,
    });
  });
  screen.forEach(([x, y]) => prims.push({ kind: "circle", x, y, r: 3, color: JOINT_COLOR }));
  return prims;
}

export function render2d(state: SessionState, tree: TreeDef, selectedBone: number): Primitive[] {
  const prims: Primitive[] = [];
  const kp = state.keypoints2d;
  tree.bone_children.forEach((child, bone) => {
    const parent = tree.parents[child];
    prims.push({
      kind: "line",
      x1: kp[parent][0],
      y1: kp[parent][1],
      x2: kp[child][0],
      y2: kp[child][1],
      color: bone === selectedBone ? SELECTED_COLOR : BONE_COLOR,
      width: bone === selectedBone ? 3 : 1.5,
    });
  });
  // keypoint markers carry the exact service-provided pixel coordinates
  kp.forEach(([x, y], joint) => {
    prims.push({
      kind: "circle",
      x,
      y,
      r: 4,
      color: joint === tree.bone_children[selectedBone] ? SELECTED_COLOR : KEYPOINT_COLOR,
    });
  });
  return prims;
}

export function describeSelection(tree: TreeDef, selectedBone: number): string {
  const child = tree.bone_children[selectedBone];
  return `bone ${selectedBone}: ${tree.joint_names[tree.parents[child]]} -> ${tree.joint_names[child]}`;
}
