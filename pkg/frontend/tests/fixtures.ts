import { SessionState, TreeDef } from "../src/types.js";

/** 4-joint chain: root -> a -> b plus a sibling c off the root. */
export const CHAIN_TREE: TreeDef = {
  joint_names: ["root", "a", "b", "c"],
  parents: [-1, 0, 1, 0],
  root: 0,
  bone_children: [1, 2, 3],
  limb_classes: ["Torso", "Torso", "Torso"],
};

export function chainState(): SessionState {
  return {
    session_id: "f00d",
    joints: [
      [0, 0, 0],
      [10.25, -3.5, 1.125],
      [20.0625, -7.25, 2.5],
      [-5.5, 4.75, -1.25],
    ],
    bones_spherical: [
      [11, 0.5, 0.25],
      [11, 0.55, 0.3],
      [7, 1.5, -2.0],
    ],
    keypoints2d: [
      [500, 500],
      [512.3456789012345, 488.9876543210987],
      [524.0001220703125, 477.5],
      [493.25, 505.625],
    ],
    translation: [0, 0, 5000],
    intrinsics: { fx: 1145, fy: 1145, cx: 500, cy: 500, width: 1000, height: 1000 },
    history_depth: 0,
    dirty: false,
  };
}
