"""Pixel-level distillation quality metrics against synthetic ground truth.

These are a desk-scale proxy for task success, never the real thing: they
measure whether the safe objects stayed untouched, the clutter actually
reads as background afterwards, and the arm stayed bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenes import Scene


@dataclass(frozen=True)
class MetricThresholds:
    tau_target: float = 0.9
    tau_residual: float = 0.05
    tau_anchor: float = 0.9
    bg_epsilon: int = 25  # per-channel deviation below which a pixel reads as background


@dataclass
class DistillationMetrics:
    target_preservation_iou: float
    distractor_residual_ratio: float
    anchor_preservation_iou: float
    robot_exactness: bool
    success: bool

    def to_dict(self) -> dict:
        return {
            "target_preservation_iou": self.target_preservation_iou,
            "distractor_residual_ratio": self.distractor_residual_ratio,
            "anchor_preservation_iou": self.anchor_preservation_iou,
            "robot_exactness": self.robot_exactness,
            "success": self.success,
        }


def _preservation(scene: Scene, outputs: list[np.ndarray], role: str) -> float:
    """Worst-frame fraction of visible role pixels left bit-identical to the live frame."""
    masks = [o.mask for o in scene.by_role(role)]
    if not masks:
        return 1.0
    static = np.zeros_like(masks[0])
    for m in masks:
        static |= m
    worst = 1.0
    for t, out in enumerate(outputs):
        visible = static & ~scene.robot_masks[t]
        total = int(np.count_nonzero(visible))
        if total == 0:
            continue
        unchanged = np.all(out == scene.frames[t], axis=2)
        kept = int(np.count_nonzero(visible & unchanged))
        worst = min(worst, kept / total)
    return worst


def _residual(scene: Scene, outputs: list[np.ndarray], epsilon: int) -> float:
    """Worst-frame fraction of visible distractor pixels still deviating from background.

    A distractor pixel "survives" when the output there still does not look
    like the true background (max per-channel deviation above epsilon).
    """
    masks = [o.mask for o in scene.by_role("distractor")]
    if not masks:
        return 0.0
    static = np.zeros_like(masks[0])
    for m in masks:
        static |= m
    bg = scene.background.astype(np.int16)
    worst = 0.0
    for t, out in enumerate(outputs):
        visible = static & ~scene.robot_masks[t]
        total = int(np.count_nonzero(visible))
        if total == 0:
            continue
        deviation = np.abs(out.astype(np.int16) - bg).max(axis=2)
        surviving = int(np.count_nonzero(visible & (deviation > epsilon)))
        worst = max(worst, surviving / total)
    return worst


def _robot_exact(scene: Scene, outputs: list[np.ndarray]) -> bool:
    for t, out in enumerate(outputs):
        robot = scene.robot_masks[t]
        if robot.any() and not np.array_equal(out[robot], scene.frames[t][robot]):
            return False
    return True


def compute_metrics(
    scene: Scene, outputs: list[np.ndarray], thresholds: MetricThresholds | None = None
) -> DistillationMetrics:
    th = thresholds or MetricThresholds()
    if len(outputs) != len(scene.frames):
        raise ValueError(f"{len(outputs)} outputs for {len(scene.frames)} frames")
    target_iou = _preservation(scene, outputs, "target")
    anchor_iou = _preservation(scene, outputs, "anchor")
    residual = _residual(scene, outputs, th.bg_epsilon)
    robot_ok = _robot_exact(scene, outputs)
    success = (
        target_iou >= th.tau_target
        and residual <= th.tau_residual
        and anchor_iou >= th.tau_anchor
        and robot_ok
    )
    return DistillationMetrics(
        target_preservation_iou=target_iou,
        distractor_residual_ratio=residual,
        anchor_preservation_iou=anchor_iou,
        robot_exactness=robot_ok,
        success=success,
    )
