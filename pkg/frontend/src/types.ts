/** Wire types mirroring the annotation service payloads. */

export interface IntrinsicsPayload {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface SessionState {
  session_id: string;
  joints: number[][];
  bones_spherical: number[][];
  keypoints2d: number[][];
  translation: number[];
  intrinsics: IntrinsicsPayload;
  history_depth: number;
  dirty: boolean;
}

export interface TreeDef {
  joint_names: string[];
  parents: number[];
  root: number;
  bone_children: number[];
  limb_classes: string[];
}

export interface SaveResult {
  path: string;
  count: number;
}

/** Shape check for incoming state payloads; the app keeps the last good
 * frame and shows a banner when this fails. */
export function isSessionState(value: unknown): value is SessionState {
  const v = value as SessionState;
  return (
    typeof v === "object" &&
    v !== null &&
    typeof v.session_id === "string" &&
    Array.isArray(v.joints) &&
    Array.isArray(v.keypoints2d) &&
    Array.isArray(v.bones_spherical) &&
    Array.isArray(v.translation) &&
    v.joints.length > 0 &&
    v.keypoints2d.length === v.joints.length &&
    typeof v.intrinsics === "object" &&
    v.intrinsics !== null &&
    typeof v.intrinsics.fx === "number" &&
    typeof v.history_depth === "number"
  );
}
