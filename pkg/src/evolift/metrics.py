"""Pose evaluation: MPJPE, Procrustes-aligned MPJPE, PCK and AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PCK_THRESHOLD_MM = 150.0
AUC_THRESHOLDS_MM = np.arange(0.0, 151.0, 5.0)  # 31 points, 0..150 mm


class MetricsError(Exception):
    pass


class ShapeMismatch(MetricsError):
    pass


class DegenerateAlignment(MetricsError):
    pass


class EmptyEval(MetricsError):
    pass


def _paired(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise ShapeMismatch(f"shapes {pred.shape} and {gt.shape} do not pair up")
    return pred, gt


def joint_errors(pred, gt):
    """Per-joint Euclidean distances, shape (..., J)."""
    pred, gt = _paired(pred, gt)
    return np.linalg.norm(pred - gt, axis=-1)


def mpjpe(pred, gt):
    """Mean per-joint position error in mm (protocol 1 when inputs are
    root-relative); accepts single poses or batches."""
    return float(joint_errors(pred, gt).mean())


def similarity_align(pred, gt, with_scale=True):
    """Optimal rotation + translation (+ uniform scale) of pred onto gt,
    reflections disallowed. Returns the aligned prediction."""
    pred, gt = _paired(pred, gt)
    if pred.ndim != 2 or pred.shape[0] < 3:
        raise ShapeMismatch("alignment needs a single pose with >= 3 joints")
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    p0, g0 = pred - mu_p, gt - mu_g
    norm_p = np.linalg.norm(p0)
    if norm_p == 0:
        raise DegenerateAlignment("prediction collapses to a point")
    h = g0.T @ p0
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] < 1e-9 * s[0]:
        raise DegenerateAlignment("joints are collinear")
    sign = np.sign(np.linalg.det(u @ vt))
    d = np.ones(3)
    d[-1] = sign
    rot = u @ np.diag(d) @ vt
    scale = (s * d).sum() / (norm_p ** 2) if with_scale else 1.0
    return scale * p0 @ rot.T + mu_g


def procrustes_mpjpe(pred, gt, with_scale=True):
    """MPJPE after similarity alignment of pred onto gt (protocol 2)."""
    return mpjpe(similarity_align(pred, gt, with_scale=with_scale), gt)


def pck(preds, gts, threshold_mm=PCK_THRESHOLD_MM):
    """Percentage of joints with error within the threshold (non-strict, so
    an exact hit counts as correct even at threshold zero)."""
    errors = joint_errors(preds, gts)
    if errors.size == 0:
        raise EmptyEval("no joints to evaluate")
    return float((errors <= threshold_mm).mean() * 100.0)


def auc(preds, gts, thresholds_mm=AUC_THRESHOLDS_MM):
    """Mean PCK over a threshold sweep (default 0..150 mm in 5 mm steps)."""
    errors = joint_errors(preds, gts)
    if errors.size == 0:
        raise EmptyEval("no joints to evaluate")
    t = np.asarray(thresholds_mm, dtype=np.float64)
    return float((errors[..., None] <= t).mean() * 100.0)


@dataclass
class EvalReport:
    mpjpe_mm: float
    p_mpjpe_mm: float
    pck_percent: float
    pck_threshold_mm: float
    auc_percent: float
    per_joint_mm: np.ndarray
    sample_count: int

    def to_text(self):
        lines = [
            f"samples          {self.sample_count}",
            f"mpjpe_mm         {self.mpjpe_mm:.6f}",
            f"p_mpjpe_mm       {self.p_mpjpe_mm:.6f}",
            f"pck{self.pck_threshold_mm:.0f}_percent   {self.pck_percent:.6f}",
            f"auc_percent      {self.auc_percent:.6f}",
        ]
        return "\n".join(lines) + "\n"

    def to_kv(self):
        return {
            "samples": self.sample_count,
            "mpjpe_mm": self.mpjpe_mm,
            "p_mpjpe_mm": self.p_mpjpe_mm,
            "pck_threshold_mm": self.pck_threshold_mm,
            "pck_percent": self.pck_percent,
            "auc_percent": self.auc_percent,
        }

    def per_joint_csv(self):
        lines = ["joint,mean_error_mm"]
        lines += [f"{j},{e!r}" for j, e in enumerate(self.per_joint_mm)]
        return "\n".join(lines) + "\n"


def evaluate(preds, gts, pck_threshold_mm=PCK_THRESHOLD_MM, with_scale=True):
    """Full report over a batch of (N, J, 3) predictions and ground truths."""
    preds, gts = _paired(preds, gts)
    if preds.ndim == 2:
        preds, gts = preds[None], gts[None]
    if preds.shape[0] == 0:
        raise EmptyEval("no samples to evaluate")
    errors = joint_errors(preds, gts)
    aligned = [procrustes_mpjpe(p, g, with_scale=with_scale) for p, g in zip(preds, gts)]
    return EvalReport(
        mpjpe_mm=float(errors.mean()),
        p_mpjpe_mm=float(np.mean(aligned)),
        pck_percent=pck(preds, gts, pck_threshold_mm),
        pck_threshold_mm=pck_threshold_mm,
        auc_percent=auc(preds, gts),
        per_joint_mm=errors.mean(axis=0),
        sample_count=int(preds.shape[0]),
    )
