"""Kinematic-tree skeleton model.

Poses are (J, 3) float arrays in millimeters, root-relative (root pinned at
the origin), with camera-style right-handed axes: x right, y down, z forward.
Bone vectors point from a parent joint to its child joint and are kept in the
canonical order: sorted by child joint index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MIN_BONE_MM = 1.0
COLLINEAR_TOL = 1e-8
FRAME_AXIS = np.array([0.0, 0.0, 1.0])
FRAME_AXIS_FALLBACK = np.array([0.0, 1.0, 0.0])

UPPER_LIMB = "UpperLimb"
LOWER_LIMB = "LowerLimb"
TORSO = "Torso"
LIMB_CLASSES = (UPPER_LIMB, LOWER_LIMB, TORSO)

# Joints every frame construction needs to locate by role.
REFERENCE_ROLES = ("left_shoulder", "right_shoulder", "left_hip", "right_hip",
                   "spine", "thorax")


class SkeletonError(Exception):
    pass


class DegeneratePose(SkeletonError):
    pass


class InvalidBone(SkeletonError):
    pass


class DegenerateFrame(SkeletonError):
    pass


class ZeroBone(SkeletonError):
    pass


class SphericalBone(NamedTuple):
    """Length plus local orientation of one bone: polar angle theta is taken
    from the frame's k axis, azimuth phi is atan2(j component, i component)."""

    r: float
    theta: float
    phi: float


@dataclass(frozen=True)
class KinematicTree:
    """Rooted joint tree with per-bone limb classes and frame reference roles.

    Bones are indexed in canonical order (sorted by child joint index), so
    bone b connects parents[bone_child[b]] -> bone_child[b].
    """

    joint_names: tuple[str, ...]
    parents: tuple[int, ...]
    limb_class_of_bone: tuple[str, ...]
    reference: dict[str, int]

    root: int = field(init=False)
    bone_child: tuple[int, ...] = field(init=False)
    bone_parent_joint: tuple[int, ...] = field(init=False)
    parent_bone_of: tuple[int | None, ...] = field(init=False)
    topo_bones: tuple[int, ...] = field(init=False)
    mirror_bone: tuple[int, ...] = field(init=False)
    uses_shoulder_line: tuple[bool, ...] = field(init=False)
    frame_levels: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        names, parents = self.joint_names, self.parents
        n = len(names)
        if len(parents) != n or len(set(names)) != n:
            raise ValueError("joint names and parents must be unique and aligned")
        roots = [j for j, p in enumerate(parents) if p < 0]
        if len(roots) != 1:
            raise ValueError("tree must have exactly one root")
        root = roots[0]
        for j, p in enumerate(parents):
            if j == root:
                continue
            if not 0 <= p < n:
                raise ValueError(f"joint {j} has out-of-range parent {p}")
            # walking to the root must terminate: no cycles
            seen, cur = {j}, p
            while cur != root:
                if cur in seen:
                    raise ValueError("parent map contains a cycle")
                seen.add(cur)
                cur = parents[cur]
        bone_child = tuple(sorted(j for j in range(n) if j != root))
        if len(self.limb_class_of_bone) != len(bone_child):
            raise ValueError("one limb class required per bone")
        for cls in self.limb_class_of_bone:
            if cls not in LIMB_CLASSES:
                raise ValueError(f"unknown limb class {cls!r}")
        missing = [r for r in REFERENCE_ROLES if r not in self.reference]
        if missing:
            raise ValueError(f"missing reference roles: {missing}")
        bone_parent_joint = tuple(parents[c] for c in bone_child)
        bone_of_child = {c: b for b, c in enumerate(bone_child)}
        parent_bone = tuple(
            bone_of_child.get(pj) if pj != root else None for pj in bone_parent_joint
        )
        for b, cls in enumerate(self.limb_class_of_bone):
            if cls == LOWER_LIMB and parent_bone[b] is None:
                raise ValueError(f"lower-limb bone {b} has no parent bone")

        # breadth-first bone order: parents are always rebuilt before children
        children_of: dict[int, list[int]] = {}
        for c in bone_child:
            children_of.setdefault(parents[c], []).append(c)
        topo, queue = [], [root]
        while queue:
            j = queue.pop(0)
            for c in sorted(children_of.get(j, ())):
                topo.append(bone_of_child[c])
                queue.append(c)

        # left/right mirror pairing derived from joint names
        def mirrored(name):
            if name.startswith("left_"):
                return "right_" + name[5:]
            if name.startswith("right_"):
                return "left_" + name[6:]
            return name

        name_to_joint = {nm: j for j, nm in enumerate(names)}
        mirror = []
        for b, c in enumerate(bone_child):
            twin = name_to_joint.get(mirrored(names[c]), c)
            mirror.append(bone_of_child.get(twin, b))

        thorax = self.reference["thorax"]

        def below_thorax(j):
            while j != root:
                if j == thorax:
                    return True
                j = parents[j]
            return j == thorax

        uses_shoulder = tuple(below_thorax(pj) for pj in bone_parent_joint)

        object.__setattr__(self, "root", root)
        object.__setattr__(self, "bone_child", bone_child)
        object.__setattr__(self, "bone_parent_joint", bone_parent_joint)
        object.__setattr__(self, "parent_bone_of", parent_bone)
        object.__setattr__(self, "topo_bones", tuple(topo))
        object.__setattr__(self, "mirror_bone", tuple(mirror))
        object.__setattr__(self, "uses_shoulder_line", uses_shoulder)
        object.__setattr__(self, "frame_levels",
                           tuple(tuple(level) for level in _frame_levels(self)))
        object.__setattr__(self, "_child_idx", np.array(bone_child))
        object.__setattr__(self, "_parent_idx", np.array(bone_parent_joint))

    @property
    def n_joints(self):
        return len(self.joint_names)

    @property
    def n_bones(self):
        return len(self.bone_child)

    def bone_of_child(self, joint):
        return self.bone_child.index(joint)

    def offspring_joints(self, joint):
        """Strict descendants of `joint`, in increasing index order."""
        out, frontier = [], [joint]
        while frontier:
            j = frontier.pop()
            kids = [c for c in self.bone_child if self.parents[c] == j]
            out.extend(kids)
            frontier.extend(kids)
        return sorted(out)

    def subtree_bones(self, joint):
        """Bones rooted at `joint`: parent joint equals it or one of its offspring."""
        allowed = {joint} | set(self.offspring_joints(joint))
        return [b for b, pj in enumerate(self.bone_parent_joint) if pj in allowed]

    def descendant_bones(self, bone):
        """Bones strictly below `bone` in the tree."""
        sub = self.subtree_bones(self.bone_child[bone])
        return [b for b in sub if b != bone]


def default_tree():
    """Standard 17-joint mocap skeleton (pelvis-rooted, 16 bones)."""
    names = (
        "pelvis", "right_hip", "right_knee", "right_ankle",
        "left_hip", "left_knee", "left_ankle",
        "spine", "thorax", "neck", "head",
        "left_shoulder", "left_elbow", "left_wrist",
        "right_shoulder", "right_elbow", "right_wrist",
    )
    parents = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
    classes = (
        TORSO, UPPER_LIMB, LOWER_LIMB,        # right leg chain
        TORSO, UPPER_LIMB, LOWER_LIMB,        # left leg chain
        TORSO, TORSO, TORSO, TORSO,           # spine / neck / head
        TORSO, UPPER_LIMB, LOWER_LIMB,        # left arm chain
        TORSO, UPPER_LIMB, LOWER_LIMB,        # right arm chain
    )
    reference = {"left_shoulder": 11, "right_shoulder": 14,
                 "left_hip": 4, "right_hip": 1, "spine": 7, "thorax": 8}
    return KinematicTree(names, parents, classes, reference)


def neutral_pose():
    """Upright 17-joint pose (mm, root-relative) used as a built-in source."""
    p = np.zeros((17, 3))
    p[1] = (130, 0, 0)        # right hip
    p[2] = (140, 450, 20)     # right knee
    p[3] = (150, 900, 0)      # right ankle
    p[4] = (-130, 0, 0)
    p[5] = (-140, 450, 20)
    p[6] = (-150, 900, 0)
    p[7] = (0, -250, -10)     # spine
    p[8] = (0, -500, 0)       # thorax
    p[9] = (0, -580, 40)      # neck/nose
    p[10] = (0, -700, 10)     # head top
    p[11] = (-190, -470, 0)
    p[12] = (-220, -200, 30)
    p[13] = (-240, 60, 20)
    p[14] = (190, -470, 0)
    p[15] = (220, -200, 30)
    p[16] = (240, 60, 20)
    return p


def save_tree(path, tree):
    """Write the text tree-definition format."""
    lines = ["format evotree 1", f"joints {tree.n_joints}"]
    for j, name in enumerate(tree.joint_names):
        lines.append(f"joint {j} {name} {tree.parents[j]}")
    for b, child in enumerate(tree.bone_child):
        lines.append(f"bone {child} {tree.limb_class_of_bone[b]}")
    for role in REFERENCE_ROLES:
        lines.append(f"ref {role} {tree.reference[role]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tree(path):
    """Parse the text tree-definition format written by save_tree."""
    joints, classes, reference = {}, {}, {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "joint":
                joints[int(tok[1])] = (tok[2], int(tok[3]))
            elif tok[0] == "bone":
                classes[int(tok[1])] = tok[2]
            elif tok[0] == "ref":
                reference[tok[1]] = int(tok[2])
    names = tuple(joints[j][0] for j in sorted(joints))
    parents = tuple(joints[j][1] for j in sorted(joints))
    children = sorted(classes)
    return KinematicTree(names, parents, tuple(classes[c] for c in children), reference)


def validate_pose(pose, tree):
    """Check Pose invariants; returns the pose as a float64 array."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (tree.n_joints, 3):
        raise DegeneratePose(f"expected shape {(tree.n_joints, 3)}, got {pose.shape}")
    if not np.all(np.isfinite(pose)):
        raise DegeneratePose("pose has non-finite coordinates")
    if np.any(pose[tree.root] != 0.0):
        raise DegeneratePose("root joint must sit exactly at the origin")
    bones = _raw_bones(pose, tree)
    lengths = np.sqrt(np.sum(bones * bones, axis=1))
    short = np.nonzero(lengths <= MIN_BONE_MM)[0]
    if short.size:
        raise DegeneratePose(f"bone {short[0]} is degenerate ({lengths[short[0]]:.3g} mm)")
    return pose


def _raw_bones(pose, tree):
    return pose[tree._child_idx] - pose[tree._parent_idx]


def bones_of(pose, tree):
    """Bone vectors (child minus parent) in canonical order, shape (B, 3)."""
    pose = validate_pose(pose, tree)
    return _raw_bones(pose, tree)


def forward_kinematics(bones, tree):
    """Accumulate bone vectors from the root into joint positions."""
    bones = np.asarray(bones, dtype=np.float64)
    if bones.shape != (tree.n_bones, 3):
        raise InvalidBone(f"expected shape {(tree.n_bones, 3)}, got {bones.shape}")
    if not np.all(np.isfinite(bones)):
        raise InvalidBone("non-finite bone vector")
    lengths = np.linalg.norm(bones, axis=1)
    short = np.nonzero(lengths <= MIN_BONE_MM)[0]
    if short.size:
        raise InvalidBone(f"bone {short[0]} is degenerate ({lengths[short[0]]:.3g} mm)")
    joints = np.zeros((tree.n_joints, 3))
    for b in tree.topo_bones:
        joints[tree.bone_child[b]] = joints[tree.bone_parent_joint[b]] + bones[b]
    return joints


def _cross_rows(a, b):
    """Row-wise cross product; much cheaper than np.cross for (n, 3) data."""
    out = np.empty(np.broadcast(a, b).shape)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _norm_rows(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _rows_frames(v1, v2, fallbacks):
    """Tolerant core of the frame construction over (n, 3) axis rows.

    Returns (frames, ok); rows whose primary axis vanishes or whose secondary
    candidates are all collinear get an identity frame and ok=False.
    """
    n1 = _norm_rows(v1)
    ok = n1 >= COLLINEAR_TOL
    safe_v1 = np.where(ok[:, None], v1, np.array([1.0, 0.0, 0.0]))
    safe_n1 = np.where(ok, n1, 1.0)
    v2 = np.array(v2, dtype=np.float64)
    candidates = list(fallbacks)
    while True:
        n2 = _norm_rows(v2)
        collinear = (_norm_rows(_cross_rows(safe_v1, v2)) < COLLINEAR_TOL * safe_n1 * n2)
        bad = ok & (collinear | (n2 < COLLINEAR_TOL))
        if not bad.any():
            break
        if not candidates:
            ok &= ~bad
            break
        v2[bad] = candidates.pop(0)[bad]
    i = safe_v1 / safe_n1[:, None]
    j = v2 - np.sum(v2 * i, axis=1)[:, None] * i
    nj = _norm_rows(j)
    j = j / np.where(nj < COLLINEAR_TOL, 1.0, nj)[:, None]
    k = _cross_rows(i, j)
    frames = np.stack([i, j, k], axis=2)
    if not ok.all():
        frames[~ok] = np.eye(3)
    return frames, ok


def _frames_from_axes(v1, v2, fallbacks):
    """Strict frame construction: raises DegenerateFrame on any bad row."""
    frames, ok = _rows_frames(np.asarray(v1, dtype=np.float64), v2, fallbacks)
    if not ok.all():
        raise DegenerateFrame("frame axes are collinear or zero and fallbacks exhausted")
    return frames


def _reference_axes(pose, tree):
    ref = tree.reference
    shoulder_line = pose[ref["right_shoulder"]] - pose[ref["left_shoulder"]]
    hip_line = pose[ref["right_hip"]] - pose[ref["left_hip"]]
    backbone = pose[ref["spine"]] - pose[ref["thorax"]]
    return shoulder_line, hip_line, backbone


def _frame_levels(tree):
    """Bone groups in frame-dependency order: reference-line bones first,
    then lower-limb bones whose parent frame is already available."""
    level0 = [b for b in range(tree.n_bones)
              if tree.limb_class_of_bone[b] != LOWER_LIMB]
    levels = [level0]
    done = set(level0)
    pending = [b for b in range(tree.n_bones) if b not in done]
    while pending:
        ready = [b for b in pending if tree.parent_bone_of[b] in done]
        if not ready:
            raise DegenerateFrame("unresolvable frame dependency")
        levels.append(ready)
        done.update(ready)
        pending = [b for b in pending if b not in done]
    return levels


def pose_frames_batch(poses, tree, a=FRAME_AXIS):
    """Local frames for a batch of poses.

    Returns (frames (N, B, 3, 3), bones (N, B, 3), ok (N,)); poses with an
    unrecoverable frame get ok=False instead of raising.
    """
    poses = np.asarray(poses, dtype=np.float64)
    n = poses.shape[0]
    bones = poses[:, tree._child_idx] - poses[:, tree._parent_idx]
    frames = np.empty((n, tree.n_bones, 3, 3))
    ok = np.ones(n, dtype=bool)
    ref = tree.reference
    shoulder = poses[:, ref["right_shoulder"]] - poses[:, ref["left_shoulder"]]
    hip = poses[:, ref["right_hip"]] - poses[:, ref["left_hip"]]
    backbone = poses[:, ref["spine"]] - poses[:, ref["thorax"]]

    levels = tree.frame_levels
    level0 = levels[0]
    use_sh = np.array([tree.uses_shoulder_line[b] for b in level0])
    v1 = np.where(use_sh[None, :, None], shoulder[:, None, :], hip[:, None, :])
    v2 = np.broadcast_to(backbone[:, None, :], (n, len(level0), 3))
    rows = n * len(level0)
    fb = [np.broadcast_to(a, (rows, 3)), np.broadcast_to(FRAME_AXIS_FALLBACK, (rows, 3))]
    f0, ok0 = _rows_frames(v1.reshape(rows, 3), v2.reshape(rows, 3), fb)
    frames[:, level0] = f0.reshape(n, len(level0), 3, 3)
    ok &= ok0.reshape(n, len(level0)).all(axis=1)

    for ready in levels[1:]:
        ms = [tree.parent_bone_of[b] for b in ready]
        rows = n * len(ready)
        v1 = bones[:, ms].reshape(rows, 3)
        rm = frames[:, ms].reshape(rows, 3, 3)
        v2 = _cross_rows(rm @ a, v1)
        fb = [_cross_rows(rm @ FRAME_AXIS_FALLBACK, v1)]
        f, okl = _rows_frames(v1, v2, fb)
        frames[:, ready] = f.reshape(n, len(ready), 3, 3)
        ok &= okl.reshape(n, len(ready)).all(axis=1)
    return frames, bones, ok


def pose_frames(pose, tree, a=FRAME_AXIS):
    """Local frame of every bone of one pose, shape (B, 3, 3); columns are
    the basis vectors.

    Upper-limb and torso bones orient against the shoulder or hip line plus
    the backbone; lower-limb bones orient against their parent bone and the
    parent frame's image of the constant axis `a`.
    """
    frames, _, ok = pose_frames_batch(np.asarray(pose, dtype=np.float64)[None], tree, a)
    if not ok[0]:
        raise DegenerateFrame("frame axes are collinear or zero and fallbacks exhausted")
    return frames[0]


def local_frame(bone_index, pose, tree, a=FRAME_AXIS):
    """Frame of a single bone (see pose_frames)."""
    return pose_frames(pose, tree, a)[bone_index]


def to_local(bone, frame):
    """Express a global bone vector in a local frame: R^T b."""
    return np.asarray(frame).T @ np.asarray(bone, dtype=np.float64)


def to_spherical(v):
    """Convert a nonzero 3-vector to (r, theta, phi); poles pin phi to 0."""
    v = np.asarray(v, dtype=np.float64)
    r = float(np.linalg.norm(v))
    if r == 0.0:
        raise ZeroBone("cannot convert the zero vector")
    theta = float(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
    phi = 0.0 if theta in (0.0, np.pi) else float(np.arctan2(v[1], v[0]))
    if phi == -np.pi:
        phi = np.pi
    return SphericalBone(r, theta, phi)


def from_spherical(r, theta=None, phi=None):
    """Inverse of to_spherical; accepts a SphericalBone or (r, theta, phi)."""
    if theta is None:
        r, theta, phi = r
    if r <= 0:
        raise ZeroBone(f"radius must be positive, got {r}")
    st = np.sin(theta)
    return np.array([r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)])


def spherical_rows(vectors):
    """Vectorized to_spherical for (N, 3) input; returns (N, 3) of (r, theta, phi)."""
    v = np.asarray(vectors, dtype=np.float64)
    r = _norm_rows(v)
    if np.any(r == 0.0):
        raise ZeroBone("cannot convert a zero vector")
    theta = np.arccos(np.clip(v[:, 2] / r, -1.0, 1.0))
    phi = np.arctan2(v[:, 1], v[:, 0])
    phi[(theta == 0.0) | (theta == np.pi)] = 0.0
    phi[phi == -np.pi] = np.pi
    return np.stack([r, theta, phi], axis=1)


def vectors_from_spherical(rows):
    """Vectorized from_spherical for (N, 3) rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if np.any(rows[:, 0] <= 0):
        raise ZeroBone("radius must be positive")
    st = np.sin(rows[:, 1])
    return np.stack([rows[:, 0] * st * np.cos(rows[:, 2]),
                     rows[:, 0] * st * np.sin(rows[:, 2]),
                     rows[:, 0] * np.cos(rows[:, 1])], axis=1)


def canonicalize_angles(theta, phi):
    """Map any (theta, phi) onto theta in [0, pi], phi in (-pi, pi], phi=0 at poles."""
    theta = float(np.mod(theta, 2.0 * np.pi))
    if theta > np.pi:
        theta = 2.0 * np.pi - theta
        phi = phi + np.pi
    phi = float(np.mod(phi + np.pi, 2.0 * np.pi)) - np.pi
    if phi == -np.pi:
        phi = np.pi
    if theta == 0.0 or theta == np.pi:
        phi = 0.0
    return theta, phi


def spherical_of_pose(pose, tree, a=FRAME_AXIS):
    """Per-bone (r, theta, phi) in local frames, shape (B, 3)."""
    pose = np.asarray(pose, dtype=np.float64)
    bones = _raw_bones(pose, tree)
    frames = pose_frames(pose, tree, a)
    local = np.einsum("mji,mj->mi", frames, bones)
    return spherical_rows(local)


def spherical_batch(poses, tree, a=FRAME_AXIS):
    """Per-bone spherical coordinates for a batch of poses.

    Returns (sph (N, B, 3), ok (N,)); poses with degenerate frames or
    zero-length bones get ok=False instead of raising.
    """
    poses = np.asarray(poses, dtype=np.float64)
    n = poses.shape[0]
    frames, bones, ok = pose_frames_batch(poses, tree, a)
    m = n * tree.n_bones
    local = np.einsum("mji,mj->mi", frames.reshape(m, 3, 3), bones.reshape(m, 3))
    r = _norm_rows(local)
    nonzero = r > 0.0
    ok &= nonzero.reshape(n, tree.n_bones).all(axis=1)
    safe_r = np.where(nonzero, r, 1.0)
    theta = np.arccos(np.clip(local[:, 2] / safe_r, -1.0, 1.0))
    phi = np.arctan2(local[:, 1], local[:, 0])
    phi[(theta == 0.0) | (theta == np.pi)] = 0.0
    phi[phi == -np.pi] = np.pi
    return np.stack([r, theta, phi], axis=1).reshape(n, tree.n_bones, 3), ok


def _cross3(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _gs3(v1, candidates):
    """Scalar Gram-Schmidt frame from v1 and the first usable secondary axis."""
    n1 = float(np.sqrt(v1 @ v1))
    if n1 < COLLINEAR_TOL:
        raise DegenerateFrame("primary frame axis has zero length")
    for cand in candidates:
        n2 = float(np.sqrt(cand @ cand))
        cross = _cross3(v1, cand)
        if n2 >= COLLINEAR_TOL and float(np.sqrt(cross @ cross)) >= COLLINEAR_TOL * n1 * n2:
            i = v1 / n1
            j = cand - float(cand @ i) * i
            j = j / float(np.sqrt(j @ j))
            return np.stack([i, j, _cross3(i, j)], axis=1)
    raise DegenerateFrame("frame axes are collinear or zero and fallbacks exhausted")


def _frame_in_table(b, joints, bone_vecs, memo, tree, a):
    """Frame of one bone against the current (partially rebuilt) joint table."""
    if b in memo:
        return memo[b]
    if tree.limb_class_of_bone[b] == LOWER_LIMB:
        m = tree.parent_bone_of[b]
        rm = _frame_in_table(m, joints, bone_vecs, memo, tree, a)
        v1 = bone_vecs[m]
        candidates = [_cross3(rm @ a, v1), _cross3(rm @ FRAME_AXIS_FALLBACK, v1)]
    else:
        shoulder_line, hip_line, backbone = _reference_axes(joints, tree)
        v1 = shoulder_line if tree.uses_shoulder_line[b] else hip_line
        candidates = [backbone, a, FRAME_AXIS_FALLBACK]
    frame = _gs3(v1, candidates)
    memo[b] = frame
    return frame


def _rebuild(pose, tree, bones, locals_target, a):
    """Re-derive the bones in locals_target from their (r, theta, phi), in
    breadth-first order against the evolving joint table; all other joints
    keep their original positions bit-for-bit."""
    joints = np.array(pose, dtype=np.float64)
    vecs = np.array(bones, dtype=np.float64)
    memo: dict[int, np.ndarray] = {}
    for b in tree.topo_bones:
        if b not in locals_target:
            continue
        frame = _frame_in_table(b, joints, vecs, memo, tree, a)
        vecs[b] = frame @ from_spherical(*locals_target[b])
        joints[tree.bone_child[b]] = joints[tree.bone_parent_joint[b]] + vecs[b]
    return joints


def set_bone_orientation(pose, tree, bone_index, theta, phi, a=FRAME_AXIS):
    """Point one bone at the requested local (theta, phi), keeping its length.

    Descendant bones keep their own local spherical coordinates in frames
    re-derived from the updated geometry (frames travel with the parent bone);
    every other joint is untouched.
    """
    pose = validate_pose(pose, tree)
    bones = _raw_bones(pose, tree)
    theta, phi = canonicalize_angles(theta, phi)
    r = float(np.sqrt(bones[bone_index] @ bones[bone_index]))
    memo: dict[int, np.ndarray] = {}
    targets = {bone_index: (r, theta, phi)}
    for d in tree.descendant_bones(bone_index):
        frame = _frame_in_table(d, pose, bones, memo, tree, a)
        targets[d] = to_spherical(frame.T @ bones[d])
    return _rebuild(pose, tree, bones, targets, a)
