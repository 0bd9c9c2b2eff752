"""Anthropometric validity prior: per-bone binary occupancy grids over the
local (theta, phi) orientation space, fitted from a seed population and
dilated to tolerate small excursions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import skeleton

DEFAULT_THETA_BINS = 36
DEFAULT_PHI_BINS = 72
DEFAULT_DILATION = 1


class ValidityError(Exception):
    pass


class EmptyPopulation(ValidityError):
    pass


@dataclass(frozen=True)
class ValidityModel:
    """One boolean occupancy grid per bone, shape (B, theta_bins, phi_bins)."""

    occupancy: np.ndarray
    theta_bins: int
    phi_bins: int
    dilation_radius: int

    def __post_init__(self):
        if self.theta_bins < 4 or self.phi_bins < 4:
            raise ValidityError("need at least 4 bins per axis")
        expect = (self.occupancy.shape[0], self.theta_bins, self.phi_bins)
        if self.occupancy.shape != expect:
            raise ValidityError(f"occupancy shape {self.occupancy.shape} != {expect}")

    @property
    def n_bones(self):
        return self.occupancy.shape[0]

    def cell_of(self, theta, phi):
        """Grid cell holding one (theta, phi); theta clamps, phi edge wraps onto
        the last bin (phi = pi belongs to the bin ending at pi)."""
        ti = min(int(theta / np.pi * self.theta_bins), self.theta_bins - 1)
        pi_ = min(int((phi + np.pi) / (2.0 * np.pi) * self.phi_bins), self.phi_bins - 1)
        return max(ti, 0), max(pi_, 0)

    def cells_of(self, sph):
        """Vectorized cell_of over (B, 3) spherical rows -> (B, 2) int indices."""
        ti = np.clip((sph[:, 1] / np.pi * self.theta_bins).astype(int), 0, self.theta_bins - 1)
        pi_ = np.clip(((sph[:, 2] + np.pi) / (2.0 * np.pi) * self.phi_bins).astype(int),
                      0, self.phi_bins - 1)
        return np.stack([ti, pi_], axis=1)


def _shift_rows(grid, dt):
    out = np.zeros_like(grid)
    if dt > 0:
        out[dt:] = grid[:-dt]
    elif dt < 0:
        out[:dt] = grid[-dt:]
    else:
        out[:] = grid
    return out


def dilate(grid, radius):
    """Binary dilation with a (2r+1)^2 square element; phi wraps, theta clamps."""
    out = grid.copy()
    for dt in range(-radius, radius + 1):
        shifted = _shift_rows(grid, dt)
        for dp in range(-radius, radius + 1):
            out |= np.roll(shifted, dp, axis=1)
    return out


def fit_from_population(poses, tree, theta_bins=DEFAULT_THETA_BINS,
                        phi_bins=DEFAULT_PHI_BINS, dilation_radius=DEFAULT_DILATION):
    """Mark every seed pose's per-bone orientation cells, then dilate.

    Every fitting pose is accepted by the resulting model by construction.
    """
    poses = list(poses)
    if not poses:
        raise EmptyPopulation("cannot fit a validity model from zero poses")
    occ = np.zeros((tree.n_bones, theta_bins, phi_bins), dtype=bool)
    model = ValidityModel(occ, theta_bins, phi_bins, dilation_radius)
    for pose in poses:
        skeleton.validate_pose(pose, tree)
        sph = skeleton.spherical_of_pose(pose, tree)
        cells = model.cells_of(sph)
        occ[np.arange(tree.n_bones), cells[:, 0], cells[:, 1]] = True
    if dilation_radius > 0:
        for b in range(tree.n_bones):
            occ[b] = dilate(occ[b], dilation_radius)
    return model


def accept_mask(poses, model, tree):
    """Vectorized validity over a (N, J, 3) batch -> boolean (N,).

    Degenerate poses (non-finite, off-origin root, short bones, unbuildable
    frames) are rejected rather than raised.
    """
    poses = np.asarray(poses, dtype=np.float64)
    n = poses.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool)
    ok = np.isfinite(poses).reshape(n, -1).all(axis=1)
    ok &= (poses[:, tree.root] == 0.0).all(axis=1)
    safe = np.where(ok[:, None, None], poses, 0.0)
    bones = safe[:, tree._child_idx] - safe[:, tree._parent_idx]
    ok &= (np.sqrt((bones * bones).sum(axis=2)) > skeleton.MIN_BONE_MM).all(axis=1)
    sph, frames_ok = skeleton.spherical_batch(safe, tree)
    ok &= frames_ok
    cells = np.stack([
        np.clip((sph[:, :, 1] / np.pi * model.theta_bins).astype(int),
                0, model.theta_bins - 1),
        np.clip(((sph[:, :, 2] + np.pi) / (2.0 * np.pi) * model.phi_bins).astype(int),
                0, model.phi_bins - 1),
    ], axis=2)
    hit = model.occupancy[np.arange(model.n_bones)[None, :],
                          cells[:, :, 0], cells[:, :, 1]]
    return ok & hit.all(axis=1)


def validity(pose, model, tree):
    """Fitness of a candidate pose: 0.0 if every bone orientation falls in an
    occupied cell, -inf otherwise. Degenerate poses and frames score -inf."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (tree.n_joints, 3):
        return -np.inf
    return 0.0 if accept_mask(pose[None], model, tree)[0] else -np.inf


def is_valid(pose, model, tree):
    return validity(pose, model, tree) == 0.0
