"""Bit-exact binary file formats (poses, pairs, validity grids, cascades) and
flat key-value config files. All integers and floats are little-endian
regardless of host; loaders reject corrupt or truncated files outright."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import skeleton
from .camera import Intrinsics, in_image, NEAR_PLANE_MM
from .evolve import Origin, Provenance
from .regressor import Cascade, DeepLearner, LearnerConfig
from .validity import ValidityModel

SKEL_MAGIC = b"SKEL1"
PAIR_MAGIC = b"PAIR1"
GRID_MAGIC = b"VGRID1"
CASC_MAGIC = b"CASC1"
PROV_MAGIC = b"PROV1"
VERSION = 1
_NO_PARENT = 0xFFFFFFFF


class DatastoreError(Exception):
    pass


class BadMagic(DatastoreError):
    pass


class VersionMismatch(DatastoreError):
    pass


class TruncatedFile(DatastoreError):
    pass


class InvariantViolation(DatastoreError):
    def __init__(self, index, message):
        super().__init__(f"record {index}: {message}")
        self.index = index


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFile(f"wanted {n} bytes, file ended after {len(data)}")
    return data


def _expect_magic(fh, magic):
    got = fh.read(len(magic))
    if got != magic:
        raise BadMagic(f"expected {magic!r}, found {got!r}")


def _expect_version(fh):
    version = struct.unpack("<I", _read_exact(fh, 4))[0]
    if version != VERSION:
        raise VersionMismatch(f"file version {version}, supported {VERSION}")


def _expect_eof(fh):
    if fh.read(1):
        raise TruncatedFile("unexpected trailing bytes")


def _read_array(fh, dtype, count):
    raw = _read_exact(fh, np.dtype(dtype).itemsize * count)
    return np.frombuffer(raw, dtype=dtype, count=count)


# -- skeleton files ----------------------------------------------------------

class SkeletonWriter:
    """Streaming SKEL1 writer; records are flushed in append order and the
    header count is backfilled on close."""

    def __init__(self, path, tree=None):
        self.tree = tree if tree is not None else skeleton.default_tree()
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(SKEL_MAGIC)
        self._fh.write(struct.pack("<III", VERSION, 0, self.tree.n_joints))

    def append(self, pose):
        pose = skeleton.validate_pose(pose, self.tree)
        self._fh.write(pose.astype("<f4").tobytes())
        self.count += 1

    def close(self):
        self._fh.flush()
        self._fh.seek(len(SKEL_MAGIC) + 4)
        self._fh.write(struct.pack("<I", self.count))
        self._fh.close()
        return self.count

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def save_skeletons(path, poses, tree=None):
    with SkeletonWriter(path, tree) as writer:
        for pose in poses:
            writer.append(pose)
    return writer.count


def _read_skel_header(fh):
    _expect_magic(fh, SKEL_MAGIC)
    _expect_version(fh)
    count, joints = struct.unpack("<II", _read_exact(fh, 8))
    return count, joints


def iter_skeletons(path, tree=None):
    """Stream poses from a SKEL1 file, validating each against the tree."""
    tree = tree if tree is not None else skeleton.default_tree()
    with open(path, "rb") as fh:
        count, joints = _read_skel_header(fh)
        if joints != tree.n_joints:
            raise InvariantViolation(0, f"file has {joints} joints, tree {tree.n_joints}")
        for i in range(count):
            flat = _read_array(fh, "<f4", joints * 3)
            pose = flat.astype(np.float64).reshape(joints, 3)
            try:
                skeleton.validate_pose(pose, tree)
            except skeleton.SkeletonError as exc:
                raise InvariantViolation(i, str(exc)) from exc
            yield pose
        _expect_eof(fh)


def load_skeletons(path, tree=None):
    poses = list(iter_skeletons(path, tree))
    return np.array(poses) if poses else np.zeros((0, 17, 3))


def append_skeleton(path, pose, tree=None):
    """Append one pose to a SKEL1 file, creating the file if needed."""
    tree = tree if tree is not None else skeleton.default_tree()
    if not os.path.exists(path):
        return save_skeletons(path, [pose], tree)
    pose = skeleton.validate_pose(pose, tree)
    with open(path, "r+b") as fh:
        count, joints = _read_skel_header(fh)
        if joints != tree.n_joints:
            raise InvariantViolation(0, f"file has {joints} joints, tree {tree.n_joints}")
        fh.seek(0, os.SEEK_END)
        fh.write(pose.astype("<f4").tobytes())
        fh.seek(len(SKEL_MAGIC) + 4)
        fh.write(struct.pack("<I", count + 1))
    return count + 1


# -- provenance --------------------------------------------------------------

def save_provenance(path, provenance):
    with open(path, "wb") as fh:
        fh.write(PROV_MAGIC)
        fh.write(struct.pack("<II", VERSION, len(provenance)))
        for rec in provenance:
            pa, pb = rec.parents if rec.parents is not None else (_NO_PARENT, _NO_PARENT)
            fh.write(struct.pack("<IBII", rec.generation, int(rec.origin), pa, pb))
    return len(provenance)


def load_provenance(path):
    out = []
    with open(path, "rb") as fh:
        _expect_magic(fh, PROV_MAGIC)
        _expect_version(fh)
        count = struct.unpack("<I", _read_exact(fh, 4))[0]
        for _ in range(count):
            gen, origin, pa, pb = struct.unpack("<IBII", _read_exact(fh, 13))
            parents = None if pa == _NO_PARENT else (pa, pb)
            out.append(Provenance(gen, Origin(origin), parents))
        _expect_eof(fh)
    return out


# -- 2D-3D pair files --------------------------------------------------------

@dataclass
class PairDataset:
    keypoints2d: np.ndarray   # (N, J, 2) float64 holding exact float32 values
    target3d: np.ndarray      # (N, J, 3)
    translations: np.ndarray  # (N, 3)
    intrinsics: Intrinsics

    def __len__(self):
        return self.keypoints2d.shape[0]


class PairWriter:
    """Streaming PAIR1 writer with a file-level intrinsics block."""

    def __init__(self, path, intrinsics, joint_count=17):
        self.joint_count = joint_count
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(PAIR_MAGIC)
        self._fh.write(struct.pack("<III", VERSION, 0, joint_count))
        self._fh.write(struct.pack("<dddd", intrinsics.fx, intrinsics.fy,
                                   intrinsics.cx, intrinsics.cy))
        self._fh.write(struct.pack("<II", intrinsics.image_width, intrinsics.image_height))

    def append(self, pair):
        rec = np.concatenate([pair.keypoints2d.ravel(), pair.target3d.ravel(),
                              pair.translation.ravel()])
        self._fh.write(rec.astype("<f4").tobytes())
        self.count += 1

    def close(self):
        self._fh.flush()
        self._fh.seek(len(PAIR_MAGIC) + 4)
        self._fh.write(struct.pack("<I", self.count))
        self._fh.close()
        return self.count

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_pairs(path, root_index=0):
    with open(path, "rb") as fh:
        _expect_magic(fh, PAIR_MAGIC)
        _expect_version(fh)
        count, joints = struct.unpack("<II", _read_exact(fh, 8))
        fx, fy, cx, cy = struct.unpack("<dddd", _read_exact(fh, 32))
        width, height = struct.unpack("<II", _read_exact(fh, 8))
        intrinsics = Intrinsics(fx, fy, cx, cy, width, height)
        per = joints * 2 + joints * 3 + 3
        flat = _read_array(fh, "<f4", count * per).astype(np.float64)
        _expect_eof(fh)
    flat = flat.reshape(count, per)
    kp = flat[:, :joints * 2].reshape(count, joints, 2)
    tg = flat[:, joints * 2:joints * 5].reshape(count, joints, 3)
    tr = flat[:, joints * 5:]
    for i in range(count):
        if not np.all(np.isfinite(flat[i])):
            raise InvariantViolation(i, "non-finite values")
        if np.any(tg[i, root_index] != 0.0):
            raise InvariantViolation(i, "target root is not at the origin")
        if not in_image(kp[i], intrinsics):
            raise InvariantViolation(i, "keypoints leave the image")
        if np.any(tg[i, :, 2] + tr[i, 2] <= NEAR_PLANE_MM):
            raise InvariantViolation(i, "joint at or behind the near plane")
    return PairDataset(kp, tg, tr, intrinsics)


# -- validity grids ----------------------------------------------------------

def save_validity_model(path, model):
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<IIIII", VERSION, model.n_bones, model.theta_bins,
                             model.phi_bins, model.dilation_radius))
        for b in range(model.n_bones):
            fh.write(np.packbits(model.occupancy[b].ravel()).tobytes())


def load_validity_model(path):
    with open(path, "rb") as fh:
        _expect_magic(fh, GRID_MAGIC)
        _expect_version(fh)
        bones, tb, pb, dil = struct.unpack("<IIII", _read_exact(fh, 16))
        nbytes = (tb * pb + 7) // 8
        occ = np.zeros((bones, tb, pb), dtype=bool)
        for b in range(bones):
            packed = np.frombuffer(_read_exact(fh, nbytes), dtype=np.uint8)
            occ[b] = np.unpackbits(packed, count=tb * pb).reshape(tb, pb).astype(bool)
        _expect_eof(fh)
    return ValidityModel(occ, tb, pb, dil)


# -- cascades ----------------------------------------------------------------

def _write_named_tensor(fh, name, arr):
    raw = name.encode()
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_named_tensor(fh):
    name_len = struct.unpack("<H", _read_exact(fh, 2))[0]
    name = _read_exact(fh, name_len).decode()
    ndim = struct.unpack("<B", _read_exact(fh, 1))[0]
    shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
    data = _read_array(fh, "<f8", int(np.prod(shape, dtype=np.int64)))
    return name, data.reshape(shape).copy()


def save_cascade(path, cascade):
    base = cascade.learners[0].config
    with open(path, "wb") as fh:
        fh.write(CASC_MAGIC)
        fh.write(struct.pack("<IIIIII", VERSION, cascade.length, base.width,
                             base.blocks, base.input_dim, base.output_dim))
        fh.write(struct.pack("<dB", base.dropout_rate, int(cascade.concat_estimates)))
        for arr in (cascade.input_mean, cascade.input_std,
                    cascade.output_mean, cascade.output_std):
            fh.write(struct.pack("<I", arr.size))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for learner in cascade.learners:
            fh.write(struct.pack("<I", learner.config.input_dim))
            names = learner.param_names() + sorted(learner.stats)
            fh.write(struct.pack("<I", len(names)))
            for name in learner.param_names():
                _write_named_tensor(fh, "p:" + name, learner.params[name])
            for name in sorted(learner.stats):
                _write_named_tensor(fh, "s:" + name, learner.stats[name])


def load_cascade(path):
    with open(path, "rb") as fh:
        _expect_magic(fh, CASC_MAGIC)
        _expect_version(fh)
        length, width, blocks, in_dim, out_dim = struct.unpack(
            "<IIIII", _read_exact(fh, 20))
        dropout, concat = struct.unpack("<dB", _read_exact(fh, 9))
        stats_arrays = []
        for _ in range(4):
            size = struct.unpack("<I", _read_exact(fh, 4))[0]
            stats_arrays.append(_read_array(fh, "<f8", size).copy())
        learners = []
        for _ in range(length):
            stage_in = struct.unpack("<I", _read_exact(fh, 4))[0]
            cfg = LearnerConfig(width=width, blocks=blocks, dropout_rate=dropout,
                                input_dim=stage_in, output_dim=out_dim)
            learner = DeepLearner(cfg)
            n_tensors = struct.unpack("<I", _read_exact(fh, 4))[0]
            for _ in range(n_tensors):
                name, arr = _read_named_tensor(fh)
                kind, key = name.split(":", 1)
                table = learner.params if kind == "p" else learner.stats
                if key not in table or table[key].shape != arr.shape:
                    raise InvariantViolation(len(learners), f"unexpected tensor {name}")
                table[key] = arr
            learners.append(learner)
        _expect_eof(fh)
    return Cascade(learners, *stats_arrays, concat_estimates=bool(concat))


# -- flat key-value configs ----------------------------------------------------

def save_config(path, values):
    with open(path, "w") as fh:
        for key, val in values.items():
            fh.write(f"{key} = {val}\n")


def load_config(path):
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise DatastoreError(f"bad config line: {raw.rstrip()}")
            values[key.strip()] = val.strip()
    return values


# -- community-format import --------------------------------------------------

def convert_npy(path_in, path_out, tree=None, scale=1.0):
    """Import the common (N, 17, 3) pose array layout, re-centering each pose
    on its root joint and scaling coordinates into millimeters."""
    tree = tree if tree is not None else skeleton.default_tree()
    arr = np.load(path_in, allow_pickle=False)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2 and arr.shape == (tree.n_joints, 3):
        arr = arr[None]
    if arr.ndim == 2 and arr.shape[1] == tree.n_joints * 3:
        arr = arr.reshape(-1, tree.n_joints, 3)
    if arr.ndim != 3 or arr.shape[1:] != (tree.n_joints, 3):
        raise DatastoreError(f"cannot interpret array of shape {arr.shape}")
    arr = arr * scale
    arr = arr - arr[:, tree.root:tree.root + 1, :]
    with SkeletonWriter(path_out, tree) as writer:
        for i, pose in enumerate(arr):
            try:
                writer.append(pose)
            except skeleton.SkeletonError as exc:
                raise InvariantViolation(i, str(exc)) from exc
    return writer.count
