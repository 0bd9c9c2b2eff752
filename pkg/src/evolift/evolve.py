"""Evolutionary operators over pose populations: subtree crossover, orientation
/ global-rotation / bone-length mutation, validity-based selection, and the
generation loop."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import skeleton, validity as validity_mod
from .skeleton import (bones_of, forward_kinematics, set_bone_orientation,
                       validate_pose)

GLOBAL_TILT_FRACTION = 0.25  # tilt noise relative to the yaw noise level


class EvolveError(Exception):
    pass


class InvalidCrossoverPoint(EvolveError):
    pass


class FactorOutOfRange(EvolveError):
    pass


class EmptyPopulationError(EvolveError):
    pass


class Origin(IntEnum):
    SEED = 0
    CROSSOVER = 1
    MUTATION = 2


@dataclass(frozen=True)
class Provenance:
    generation: int
    origin: Origin
    parents: tuple[int, int] | None = None


@dataclass
class Population:
    poses: list[np.ndarray]
    provenance: list[Provenance]

    @classmethod
    def from_poses(cls, poses, generation=0):
        poses = [np.asarray(p, dtype=np.float64) for p in poses]
        prov = [Provenance(generation, Origin.SEED) for _ in poses]
        return cls(poses, prov)

    def __len__(self):
        return len(self.poses)


@dataclass(frozen=True)
class EvolutionConfig:
    generations: int = 5
    noise_sigma: float = 0.2
    pairs_per_generation: int = 64
    mutation_probability: float = 0.5
    global_orientation_sigma: float = 1.0
    length_sigma: float = 0.05
    length_clip: tuple[float, float] = (0.7, 1.3)
    rng_seed: int = 0

    def __post_init__(self):
        if self.generations < 1:
            raise EvolveError("generations must be >= 1")
        if self.noise_sigma < 0 or self.global_orientation_sigma < 0 or self.length_sigma < 0:
            raise EvolveError("noise levels must be non-negative")
        if not 0.0 <= self.mutation_probability <= 1.0:
            raise EvolveError("mutation_probability must lie in [0, 1]")
        if self.pairs_per_generation < 1:
            raise EvolveError("pairs_per_generation must be >= 1")
        lo, hi = self.length_clip
        if not lo < hi:
            raise EvolveError("length_clip must satisfy min < max")


def crossover(parent_a, parent_b, joint_q, tree):
    """Exchange the global bone vectors of the subtree rooted at joint q.

    Returns the two children: chosen bones of A with the rest of B, and vice
    versa. The union of the children's bone multisets equals the parents'.
    """
    if joint_q == tree.root:
        raise InvalidCrossoverPoint("crossover at the root swaps whole poses")
    ba = bones_of(parent_a, tree)
    bb = bones_of(parent_b, tree)
    chosen = tree.subtree_bones(joint_q)
    child_c = bb.copy()
    child_c[chosen] = ba[chosen]
    child_d = ba.copy()
    child_d[chosen] = bb[chosen]
    return forward_kinematics(child_c, tree), forward_kinematics(child_d, tree)


def mutate_orientation(pose, tree, bone_index, g_theta, g_phi):
    """Add noise to one bone's local (theta, phi); length and every
    non-descendant joint stay fixed."""
    pose = validate_pose(pose, tree)
    bones = skeleton._raw_bones(pose, tree)
    frame = skeleton._frame_in_table(bone_index, pose, bones, {}, tree,
                                     skeleton.FRAME_AXIS)
    _, theta, phi = skeleton.to_spherical(frame.T @ bones[bone_index])
    return set_bone_orientation(pose, tree, bone_index, theta + g_theta, phi + g_phi)


def _axis_rotation(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def mutate_global(pose, angles):
    """Rigidly rotate the whole pose about its root: yaw about the vertical
    (y) axis first, then the two small tilts about x and z."""
    yaw, tilt_x, tilt_z = angles
    rot = _axis_rotation(2, tilt_z) @ _axis_rotation(0, tilt_x) @ _axis_rotation(1, yaw)
    return np.asarray(pose, dtype=np.float64) @ rot.T


def mutate_length(pose, tree, bone_index, factor, clip=(0.7, 1.3)):
    """Scale one bone's length (and its left/right twin's, keeping the body
    symmetric) by `factor`; orientations are unchanged and descendants follow."""
    if not clip[0] <= factor <= clip[1]:
        raise FactorOutOfRange(f"factor {factor} outside {clip}")
    bones = bones_of(pose, tree)
    bones[bone_index] *= factor
    twin = tree.mirror_bone[bone_index]
    if twin != bone_index:
        bones[twin] *= factor
    return forward_kinematics(bones, tree)


def natural_selection(candidates, model, tree):
    """Keep exactly the candidates the validity model accepts, in order."""
    candidates = list(candidates)
    if not candidates:
        return []
    keep = validity_mod.accept_mask(np.stack(candidates), model, tree)
    return [p for p, k in zip(candidates, keep) if k]


SELECTION_CHUNK = 512  # candidates validated per vectorized batch


def evolve(seed, config, model, tree, progress=None):
    """Run the generation loop: sample parent pairs, cross them over at a
    random non-root joint, mutate each child with the configured probability,
    keep the valid ones. Returns a new Population containing the seed plus
    all survivors; fully deterministic for a given rng_seed.

    Candidates are validated in fixed-size chunks, so memory stays
    proportional to the survivors retained, not to candidates examined.
    """
    if len(seed) == 0:
        raise EmptyPopulationError("seed population is empty")
    rng = np.random.default_rng(config.rng_seed)
    poses = list(seed.poses)
    prov = list(seed.provenance)
    non_root = [j for j in range(tree.n_joints) if j != tree.root]
    lo, hi = config.length_clip

    for gen in range(1, config.generations + 1):
        n_start = len(poses)
        children, child_prov = [], []
        buffer, buffer_prov = [], []
        rejected = 0

        def flush():
            nonlocal rejected
            if not buffer:
                return
            keep = validity_mod.accept_mask(np.stack(buffer), model, tree)
            for cand, rec, k in zip(buffer, buffer_prov, keep):
                if k:
                    children.append(cand)
                    child_prov.append(rec)
                else:
                    rejected += 1
            buffer.clear()
            buffer_prov.clear()

        for _ in range(config.pairs_per_generation):
            ia, ib = rng.integers(0, n_start, size=2)
            q = non_root[rng.integers(0, len(non_root))]
            pair = crossover(poses[ia], poses[ib], q, tree)
            for child in pair:
                origin = Origin.CROSSOVER
                ok = True
                if rng.random() < config.mutation_probability:
                    bone = int(rng.integers(0, tree.n_bones))
                    g_theta, g_phi = rng.normal(0.0, config.noise_sigma, size=2)
                    origin = Origin.MUTATION
                    try:
                        child = mutate_orientation(child, tree, bone, g_theta, g_phi)
                    except skeleton.SkeletonError:
                        ok = False
                if rng.random() < config.mutation_probability:
                    yaw = rng.normal(0.0, config.global_orientation_sigma)
                    tilts = rng.normal(0.0, config.global_orientation_sigma * GLOBAL_TILT_FRACTION,
                                       size=2)
                    origin = Origin.MUTATION
                    if ok:
                        child = mutate_global(child, (yaw, tilts[0], tilts[1]))
                if rng.random() < config.mutation_probability:
                    bone = int(rng.integers(0, tree.n_bones))
                    factor = float(np.clip(1.0 + rng.normal(0.0, config.length_sigma), lo, hi))
                    origin = Origin.MUTATION
                    if ok:
                        try:
                            child = mutate_length(child, tree, bone, factor, clip=(lo, hi))
                        except skeleton.SkeletonError:
                            ok = False
                if not ok:
                    rejected += 1
                    continue
                buffer.append(child)
                buffer_prov.append(Provenance(gen, origin, (int(ia), int(ib))))
                if len(buffer) >= SELECTION_CHUNK:
                    flush()
        flush()
        poses.extend(children)
        prov.extend(child_prov)
        if progress is not None:
            progress(gen, len(poses), len(children), rejected)
    return Population(poses, prov)
