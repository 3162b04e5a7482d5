"""Inpainting-mask composition and cached clean-scene construction.

The gate is set-theoretic: the distractor union is dilated by a small
radius, then everything within a larger dilation of the safe-set mask is
subtracted. Because subtraction is the last step, no safe pixel can ever
enter the inpainting mask — protection is architectural, not probabilistic.
Safe and distractor inputs may arrive as soft masks; they are binarized at
the configured threshold before any dilation.

The clean scene (distractors and initial robot silhouette inpainted out of
the first observation) is built once per episode and cached; concurrent
callers for the same episode share one build.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, NoTargetFound
from .inpainting import InpaintingBackend
from .instructions import ConceptDecomposition
from .masks import as_mask, binarize, dilate, subtract, union
from .refinement import RefinementConfig, RefinementTrace, refine_target, top_confidence_target
from .segmentation import SegmentationBackend, segment_set, union_channel

logger = logging.getLogger("scenegate.distiller")


@dataclass(frozen=True)
class GatingConfig:
    r_dist: int = 3  # distractor dilation radius
    r_safe: int = 6  # safe-set dilation radius; must be >= r_dist
    r_robot: int = 5  # robot dilation radius for the clean-scene mask
    binarize_threshold: float = 0.5

    def __post_init__(self):
        if self.r_dist < 0 or self.r_robot < 0:
            raise InvalidConfig("dilation radii must be >= 0")
        if self.r_safe < self.r_dist:
            raise InvalidConfig(
                f"safe radius {self.r_safe} must be >= distractor radius {self.r_dist}"
            )
        if not (0.0 < self.binarize_threshold < 1.0):
            raise InvalidConfig("binarize threshold must be in (0, 1)")


def _binarized(mask: np.ndarray, threshold: float) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype == bool:
        return m
    return binarize(m, threshold)


def compose_gate(m_dist: np.ndarray, m_safe: np.ndarray, cfg: GatingConfig) -> np.ndarray:
    """dilate(distractors, r_dist) minus dilate(safe, r_safe).

    Inputs are binarized before dilation; the subtraction guarantees the
    output never intersects the dilated safe mask.
    """
    if cfg.r_safe < cfg.r_dist:
        raise InvalidConfig("safe radius must be >= distractor radius")
    d = _binarized(m_dist, cfg.binarize_threshold)
    s = _binarized(m_safe, cfg.binarize_threshold)
    if d.shape != s.shape:
        raise DimensionMismatch(f"mask shapes differ: {d.shape} vs {s.shape}")
    return subtract(dilate(d, cfg.r_dist), dilate(s, cfg.r_safe))


def compose_inpaint_mask(
    m_inp: np.ndarray, m_robot: np.ndarray, cfg: GatingConfig
) -> np.ndarray:
    """Add the dilated robot silhouette so no stale robot pixels survive in the cache."""
    robot = _binarized(m_robot, cfg.binarize_threshold)
    return union(as_mask(m_inp), dilate(robot, cfg.r_robot))


@dataclass
class CleanScene:
    """Cached per-episode background with distractors and robot removed."""

    image: np.ndarray
    inpaint_mask: np.ndarray  # everything that was filled
    gate_mask: np.ndarray  # distractor-only region driving the compositing alpha
    safe_mask: np.ndarray
    distractor_mask: np.ndarray
    target_mask: np.ndarray
    robot_mask: np.ndarray
    provenance: dict
    warnings: list[str] = field(default_factory=list)
    trace: RefinementTrace | None = None

    @property
    def passthrough(self) -> bool:
        return bool(self.provenance.get("passthrough", False))


class SceneDistiller:
    """Runs the heavy first-frame pipeline and caches one clean scene per episode."""

    def __init__(
        self,
        seg_backend: SegmentationBackend,
        inpaint_backend: InpaintingBackend,
        gating: GatingConfig | None = None,
        refine: RefinementConfig | None = None,
        refinement_mode: str = "two_layer",
        fail_open: bool = True,
    ):
        if refinement_mode not in ("two_layer", "top_confidence"):
            raise InvalidConfig(f"unknown refinement mode {refinement_mode!r}")
        self.seg_backend = seg_backend
        self.inpaint_backend = inpaint_backend
        self.gating = gating or GatingConfig()
        self.refine = refine or RefinementConfig()
        self.refinement_mode = refinement_mode
        self.fail_open = fail_open
        self._lock = threading.Lock()
        self._cache: dict[str, object] = {}

    def build_clean_scene(
        self,
        observation: np.ndarray,
        decomposition: ConceptDecomposition,
        robot_mask: np.ndarray | None = None,
        episode_key: str | None = None,
    ) -> CleanScene:
        if episode_key is None:
            return self._build(observation, decomposition, robot_mask)
        while True:
            with self._lock:
                entry = self._cache.get(episode_key)
                if isinstance(entry, CleanScene):
                    return entry
                if isinstance(entry, Exception):
                    raise entry
                if entry is None:
                    event = threading.Event()
                    self._cache[episode_key] = event
                    break
            entry.wait()
        try:
            result = self._build(observation, decomposition, robot_mask)
        except Exception as exc:
            with self._lock:
                event = self._cache[episode_key]
                self._cache[episode_key] = exc
            event.set()
            raise
        with self._lock:
            event = self._cache[episode_key]
            self._cache[episode_key] = result
        event.set()
        return result

    def _build(
        self,
        observation: np.ndarray,
        decomposition: ConceptDecomposition,
        robot_mask: np.ndarray | None,
    ) -> CleanScene:
        shape = observation.shape[:2]
        timings: dict[str, float] = {}

        t0 = time.perf_counter()
        channels = segment_set(
            self.seg_backend, observation, list(decomposition.all_concepts())
        )
        timings["segment_ms"] = (time.perf_counter() - t0) * 1000.0

        if robot_mask is not None:
            robot0 = as_mask(robot_mask)
            if robot0.shape != shape:
                raise DimensionMismatch(
                    f"robot mask {robot0.shape} does not match observation {shape}"
                )
        else:
            robot0 = union_channel(channels.get(decomposition.robot_concept, []), shape)

        distractor_instances = [
            inst for c in decomposition.distractors for inst in channels.get(c, [])
        ]
        target_instances = channels.get(decomposition.target, [])

        t0 = time.perf_counter()
        trace = None
        try:
            if self.refinement_mode == "two_layer":
                target_refined, trace = refine_target(
                    target_instances, distractor_instances, self.refine, with_trace=True
                )
            else:
                target_refined = top_confidence_target(target_instances)
        except NoTargetFound as exc:
            if not self.fail_open:
                raise
            timings["refine_ms"] = (time.perf_counter() - t0) * 1000.0
            logger.warning("no target found; passing raw observation through: %s", exc)
            return self._passthrough(observation, shape, robot0, timings, str(exc))
        timings["refine_ms"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        anchor_union = (
            union_channel(channels.get(decomposition.anchor, []), shape)
            if decomposition.anchor is not None
            else np.zeros(shape, dtype=bool)
        )
        m_safe = union(target_refined, anchor_union)
        m_dist = np.zeros(shape, dtype=bool)
        for concept in decomposition.distractors:
            m_dist |= union_channel(channels.get(concept, []), shape)
        m_inp = compose_gate(m_dist, m_safe, self.gating)
        m_lama = compose_inpaint_mask(m_inp, robot0, self.gating)
        timings["gate_ms"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        image = self.inpaint_backend.inpaint(observation, m_lama)
        timings["inpaint_ms"] = (time.perf_counter() - t0) * 1000.0

        return CleanScene(
            image=image,
            inpaint_mask=m_lama,
            gate_mask=m_inp,
            safe_mask=m_safe,
            distractor_mask=m_dist,
            target_mask=target_refined,
            robot_mask=robot0,
            provenance={
                "segmentation_backend": self.seg_backend.name,
                "inpainting_backend": self.inpaint_backend.name,
                "refinement_mode": self.refinement_mode,
                "timings_ms": timings,
            },
            trace=trace,
        )

    def _passthrough(
        self,
        observation: np.ndarray,
        shape: tuple[int, int],
        robot0: np.ndarray,
        timings: dict,
        reason: str,
    ) -> CleanScene:
        empty = np.zeros(shape, dtype=bool)
        return CleanScene(
            image=observation.copy(),
            inpaint_mask=empty,
            gate_mask=empty.copy(),
            safe_mask=empty.copy(),
            distractor_mask=empty.copy(),
            target_mask=empty.copy(),
            robot_mask=robot0,
            provenance={
                "segmentation_backend": self.seg_backend.name,
                "inpainting_backend": self.inpaint_backend.name,
                "refinement_mode": self.refinement_mode,
                "timings_ms": timings,
                "passthrough": True,
            },
            warnings=[f"fail-open passthrough: {reason}"],
        )
