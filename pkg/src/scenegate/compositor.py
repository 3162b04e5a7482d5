"""Per-frame compositing of live observations against the cached clean scene.

All heavy work (segmentation, refinement, gating, inpainting) happens once
at episode start. Every later frame is a Gaussian-feathered alpha blend of
the frozen clean scene over the live image, followed by an unconditional
bit-exact overwrite of the live robot pixels so the policy never loses
sight of its own arm. After initialization no backend is ever called again;
the call counters in the episode report prove it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .distiller import CleanScene, GatingConfig, SceneDistiller
from .errors import (
    DimensionMismatch,
    EpisodeAlreadyInitialized,
    UninitializedEpisode,
)
from .imio import ensure_image
from .inpainting import InpaintingBackend
from .instructions import ConceptDecomposition, GrammarRule, decompose
from .masks import as_mask, gaussian_blur
from .refinement import RefinementConfig
from .segmentation import SegmentationBackend


@dataclass(frozen=True)
class FrameInput:
    observation: np.ndarray
    robot_mask: np.ndarray
    timestep: int


@dataclass
class EpisodeReport:
    frames: int
    init_ms: float
    frame_ms: list[float]
    phase_ms: dict[str, float]
    backend_calls: dict[str, int]
    backend_calls_after_init: dict[str, int]
    warnings: list[str]

    def frame_ms_percentile(self, p: float) -> float:
        if not self.frame_ms:
            return 0.0
        return float(np.percentile(np.asarray(self.frame_ms), p))

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "init_ms": self.init_ms,
            "frame_ms_p50": self.frame_ms_percentile(50),
            "frame_ms_p90": self.frame_ms_percentile(90),
            "phase_ms": self.phase_ms,
            "backend_calls": self.backend_calls,
            "backend_calls_after_init": self.backend_calls_after_init,
            "warnings": self.warnings,
        }


@dataclass
class EpisodeState:
    decomposition: ConceptDecomposition | None
    clean_scene: CleanScene | None
    alpha: np.ndarray | None  # frozen blurred gate mask
    frozen_safe_mask: np.ndarray | None
    initial_output: np.ndarray
    frame_counter: int = 0
    last_timestep: int = 0
    _clean_f64: np.ndarray | None = None


def blend_frames(alpha: np.ndarray, clean_f64: np.ndarray, live: np.ndarray) -> np.ndarray:
    """alpha*clean + (1-alpha)*live per channel, rounded half-up to uint8."""
    a = alpha[..., None]
    out = a * clean_f64 + (1.0 - a) * live.astype(np.float64)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


class Episode:
    """One observation stream: initialize at t=0, then distill frames in order."""

    def __init__(
        self,
        *,
        seg_backend: SegmentationBackend | None = None,
        inpaint_backend: InpaintingBackend | None = None,
        lexicon: dict[str, list[str]] | None = None,
        domain: str = "kitchen",
        grammar: list[GrammarRule] | None = None,
        gating: GatingConfig | None = None,
        refine: RefinementConfig | None = None,
        blur_sigma: float = 2.0,
        refinement_mode: str = "two_layer",
        robot_overwrite: bool = True,
        identity: bool = False,
        fail_open: bool = True,
    ):
        self.identity = identity
        self.blur_sigma = blur_sigma
        self.robot_overwrite = robot_overwrite
        self.domain = domain
        self.lexicon = lexicon
        self.grammar = grammar
        self.seg_backend = seg_backend
        self.inpaint_backend = inpaint_backend
        if not identity:
            if seg_backend is None or inpaint_backend is None or lexicon is None:
                raise ValueError("non-identity episodes need backends and a lexicon")
            self.distiller = SceneDistiller(
                seg_backend,
                inpaint_backend,
                gating=gating,
                refine=refine,
                refinement_mode=refinement_mode,
                fail_open=fail_open,
            )
        else:
            self.distiller = None
        self.state: EpisodeState | None = None
        self._frame_ms: list[float] = []
        self._init_ms = 0.0
        self._warnings: list[str] = []

    def _counters(self) -> dict[str, int]:
        return {
            "segment": self.seg_backend.calls if self.seg_backend else 0,
            "inpaint": self.inpaint_backend.calls if self.inpaint_backend else 0,
        }

    def initialize(
        self, observation: np.ndarray, robot_mask: np.ndarray, instruction: str
    ) -> EpisodeState:
        if self.state is not None:
            raise EpisodeAlreadyInitialized("episode was already initialized")
        observation = ensure_image(observation)
        robot0 = as_mask(robot_mask)
        if robot0.shape != observation.shape[:2]:
            raise DimensionMismatch(
                f"robot mask {robot0.shape} vs observation {observation.shape[:2]}"
            )
        t0 = time.perf_counter()
        if self.identity:
            self.state = EpisodeState(
                decomposition=None,
                clean_scene=None,
                alpha=None,
                frozen_safe_mask=None,
                initial_output=observation.copy(),
            )
            self._init_ms = (time.perf_counter() - t0) * 1000.0
            self._calls_after_init = self._counters()
            return self.state

        decomposition = decompose(instruction, self.lexicon, self.domain, self.grammar)
        clean = self.distiller.build_clean_scene(
            observation, decomposition, robot_mask=robot0, episode_key="episode"
        )
        alpha = gaussian_blur(clean.gate_mask, self.blur_sigma)
        clean_f64 = clean.image.astype(np.float64)
        if self.robot_overwrite:
            # t=0 output: the clean scene itself, with the live robot painted back
            out0 = clean.image.copy()
            out0[robot0] = observation[robot0]
        else:
            # without the overwrite stage, t=0 gets the same blend as every
            # later frame so the arm is only lost where the alpha mask covers it
            out0 = blend_frames(alpha, clean_f64, observation)
        self._warnings.extend(clean.warnings)
        self.state = EpisodeState(
            decomposition=decomposition,
            clean_scene=clean,
            alpha=alpha,
            frozen_safe_mask=clean.safe_mask,
            initial_output=out0,
            _clean_f64=clean_f64,
        )
        self._init_ms = (time.perf_counter() - t0) * 1000.0
        self._calls_after_init = self._counters()
        return self.state

    def distill(self, frame: FrameInput) -> np.ndarray:
        if self.state is None:
            raise UninitializedEpisode("call initialize() before distilling frames")
        state = self.state
        observation = ensure_image(frame.observation)
        robot = as_mask(frame.robot_mask)
        if frame.timestep <= state.last_timestep and state.frame_counter > 0:
            raise ValueError(
                f"timestep {frame.timestep} not after {state.last_timestep}; frames must be ordered"
            )
        if frame.timestep <= 0:
            raise ValueError("t=0 is produced by initialize(); distill frames have timestep > 0")
        t0 = time.perf_counter()
        if self.identity:
            out = observation.copy()
        else:
            if observation.shape[:2] != state.alpha.shape:
                raise DimensionMismatch(
                    f"frame {observation.shape[:2]} vs episode {state.alpha.shape}"
                )
            if robot.shape != state.alpha.shape:
                raise DimensionMismatch(f"robot mask {robot.shape} vs episode {state.alpha.shape}")
            out = blend_frames(state.alpha, state._clean_f64, observation)
            if self.robot_overwrite:
                out[robot] = observation[robot]
        self._frame_ms.append((time.perf_counter() - t0) * 1000.0)
        state.frame_counter += 1
        state.last_timestep = frame.timestep
        return out

    def close(self) -> EpisodeReport:
        if self.state is None:
            raise UninitializedEpisode("cannot close an episode that never initialized")
        clean = self.state.clean_scene
        phase_ms = {}
        if clean is not None:
            phase_ms = dict(clean.provenance.get("timings_ms", {}))
        return EpisodeReport(
            frames=self.state.frame_counter,
            init_ms=self._init_ms,
            frame_ms=list(self._frame_ms),
            phase_ms=phase_ms,
            backend_calls=self._counters(),
            backend_calls_after_init=dict(self._calls_after_init),
            warnings=list(self._warnings),
        )
