"""Two-layer target refinement: cross-validation plus spatial disambiguation.

Open-set segmenters answer each text prompt independently, so a lookalike
distractor can score well on the target prompt. Layer 1 assigns every
target hypothesis a genuineness margin: its own confidence minus the
strongest distractor detection that overlaps it (IoU strictly above the
configured threshold). Negative margins are kept, not clamped — they are
what lets layer 2 punish imposters. Layer 2 groups the hypotheses into
connected components and keeps exactly the top component by

    score = (1 + max genuineness) * max target-channel confidence,

which is non-negative because genuineness lies in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, NoTargetFound
from .masks import ConnectedComponent, connected_components, iou
from .segmentation import Instance


@dataclass(frozen=True)
class RefinementConfig:
    eta: float = 0.3  # IoU overlap threshold; conflict requires IoU > eta, strictly
    connectivity: int = 8

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise InvalidConfig(f"eta must be in (0, 1), got {self.eta}")
        if self.connectivity not in (4, 8):
            raise InvalidConfig(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass(frozen=True)
class ScoredInstance:
    instance: Instance
    genuineness: float  # confidence margin in [-1, 1]
    best_conflict: Instance | None  # distractor achieving the max, if any


@dataclass(frozen=True)
class ComponentScore:
    component: ConnectedComponent
    g_star: float
    sigma_star: float
    score: float


@dataclass
class RefinementTrace:
    """Machine-readable account of a refinement decision (for the explain command)."""

    eta: float
    instances: list[dict]
    components: list[dict]
    selected_component: int | None

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "instances": self.instances,
            "components": self.components,
            "selected_component": self.selected_component,
        }


def _bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def _bboxes_overlap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def cross_validate(
    targets: list[Instance], distractors: list[Instance], cfg: RefinementConfig
) -> list[ScoredInstance]:
    """Layer 1: genuineness = own confidence minus strongest conflicting distractor.

    The max over an empty conflict set is 0, so an unchallenged hypothesis
    keeps its full confidence as margin.
    """
    shapes = {inst.mask.shape for inst in targets} | {inst.mask.shape for inst in distractors}
    if len(shapes) > 1:
        raise DimensionMismatch(f"instance masks disagree on shape: {sorted(shapes)}")
    dist_boxes = [_bbox(d.mask) for d in distractors]
    scored = []
    for target in targets:
        tbox = _bbox(target.mask)
        best_sigma = 0.0
        best: Instance | None = None
        for dist, dbox in zip(distractors, dist_boxes):
            if not _bboxes_overlap(tbox, dbox):
                continue
            if iou(target.mask, dist.mask) > cfg.eta and dist.confidence > best_sigma:
                best_sigma = dist.confidence
                best = dist
        scored.append(
            ScoredInstance(
                instance=target,
                genuineness=target.confidence - best_sigma,
                best_conflict=best,
            )
        )
    return scored


def score_components(
    scored: list[ScoredInstance], cfg: RefinementConfig
) -> list[ComponentScore]:
    """Layer 2 scoring of every connected component of the hypothesis union."""
    masks = [s.instance.mask for s in scored if s.instance.mask.any()]
    if not masks:
        raise NoTargetFound("no non-empty target hypotheses to disambiguate")
    full = np.zeros(masks[0].shape, dtype=bool)
    for m in masks:
        if m.shape != full.shape:
            raise DimensionMismatch(f"instance mask {m.shape} vs {full.shape}")
        full |= m
    components = connected_components(full, connectivity=cfg.connectivity)
    boxes = [_bbox(s.instance.mask) for s in scored]
    out = []
    for comp in components:
        g_star = -1.0
        sigma_star = 0.0
        for s, box in zip(scored, boxes):
            if not _bboxes_overlap(box, comp.bbox):
                continue
            if not (s.instance.mask & comp.mask).any():
                continue
            g_star = max(g_star, s.genuineness)
            sigma_star = max(sigma_star, s.instance.confidence)
        out.append(
            ComponentScore(
                component=comp,
                g_star=g_star,
                sigma_star=sigma_star,
                score=(1.0 + g_star) * sigma_star,
            )
        )
    return out


def select_component(scored: list[ScoredInstance], cfg: RefinementConfig) -> np.ndarray:
    """Keep exactly the top-scoring component (score, then area, then raster order)."""
    ranked = sorted(
        score_components(scored, cfg),
        key=lambda c: (-c.score, -c.component.area, c.component.min_index),
    )
    return ranked[0].component.mask


def refine_target(
    target_instances: list[Instance],
    distractor_instances: list[Instance],
    cfg: RefinementConfig,
    with_trace: bool = False,
) -> tuple[np.ndarray, RefinementTrace | None]:
    """Full two-layer refinement of the target channel.

    Anchor channels are not refined; callers pass them through untouched.
    """
    if not target_instances:
        raise NoTargetFound("target channel returned no instances")
    scored = cross_validate(target_instances, distractor_instances, cfg)
    component_scores = score_components(scored, cfg)
    ranked = sorted(
        enumerate(component_scores),
        key=lambda ic: (-ic[1].score, -ic[1].component.area, ic[1].component.min_index),
    )
    selected_idx, best = ranked[0]
    trace = None
    if with_trace:
        trace = RefinementTrace(
            eta=cfg.eta,
            instances=[
                {
                    "concept": s.instance.concept,
                    "confidence": s.instance.confidence,
                    "genuineness": s.genuineness,
                    "conflict_confidence": (
                        s.best_conflict.confidence if s.best_conflict else None
                    ),
                    "conflict_concept": s.best_conflict.concept if s.best_conflict else None,
                    "area": int(np.count_nonzero(s.instance.mask)),
                }
                for s in scored
            ],
            components=[
                {
                    "index": i,
                    "g_star": c.g_star,
                    "sigma_star": c.sigma_star,
                    "score": c.score,
                    "area": c.component.area,
                    "bbox": list(c.component.bbox),
                    "selected": i == selected_idx,
                }
                for i, c in enumerate(component_scores)
            ],
            selected_component=selected_idx,
        )
    return best.component.mask, trace


def top_confidence_target(target_instances: list[Instance]) -> np.ndarray:
    """Naive single-pick selection used by the no-refinement ablation.

    Highest confidence wins; ties break by larger area, then first raster
    pixel, so the pick stays deterministic.
    """
    if not target_instances:
        raise NoTargetFound("target channel returned no instances")

    def key(inst: Instance):
        ys, xs = np.nonzero(inst.mask)
        min_index = int((ys * inst.mask.shape[1] + xs).min()) if ys.size else 0
        return (-inst.confidence, -int(ys.size), min_index)

    return sorted(target_instances, key=key)[0].mask.copy()
