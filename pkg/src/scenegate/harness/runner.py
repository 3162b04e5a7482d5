"""Episode runner, ablation sweeps, and latency benchmarking.

Sweeps are seed-matched: every variant consumes the exact same rendered
scene for a given (taxonomy, count, seed, episode) key. Result rows carry
no wall-clock fields so reruns are byte-identical; timings are reported in
a separate file keyed by the same columns.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..compositor import Episode, EpisodeReport, FrameInput
from ..distiller import GatingConfig
from ..inpainting import make_inpainter
from ..refinement import RefinementConfig
from ..segmentation import MockSegmentationBackend
from ..util import atomic_write_text, stable_seed
from .metrics import DistillationMetrics, MetricThresholds, compute_metrics
from .scenes import Scene, generate_scene, make_task_scene_spec

VARIANTS = ("full", "no_refinement", "mean_color_fill", "no_robot_protection", "baseline_identity")


@dataclass(frozen=True)
class PipelineSettings:
    gating: GatingConfig = field(default_factory=GatingConfig)
    refine: RefinementConfig = field(default_factory=RefinementConfig)
    blur_sigma: float = 2.0
    inpainter: str = "diffusion"
    refinement_mode: str = "two_layer"
    robot_overwrite: bool = True
    identity: bool = False
    fail_open: bool = True


def variant_settings(variant: str, base: PipelineSettings | None = None) -> PipelineSettings:
    base = base or PipelineSettings()
    if variant == "full":
        return base
    if variant == "no_refinement":
        return replace(base, refinement_mode="top_confidence")
    if variant == "mean_color_fill":
        return replace(base, inpainter="mean")
    if variant == "no_robot_protection":
        return replace(base, robot_overwrite=False)
    if variant == "baseline_identity":
        return replace(base, identity=True)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def make_episode(scene: Scene, settings: PipelineSettings) -> Episode:
    if settings.identity:
        return Episode(identity=True)
    seg = MockSegmentationBackend(scene.mock_objects(), scene.confusion, seed=scene.seed)
    inpaint = make_inpainter(settings.inpainter)
    return Episode(
        seg_backend=seg,
        inpaint_backend=inpaint,
        lexicon=scene.lexicon,
        domain=scene.domain,
        gating=settings.gating,
        refine=settings.refine,
        blur_sigma=settings.blur_sigma,
        refinement_mode=settings.refinement_mode,
        robot_overwrite=settings.robot_overwrite,
        fail_open=settings.fail_open,
    )


@dataclass
class EpisodeResult:
    metrics: DistillationMetrics
    report: EpisodeReport
    outputs: list[np.ndarray] | None = None


def run_episode(
    scene: Scene,
    settings: PipelineSettings | None = None,
    thresholds: MetricThresholds | None = None,
    keep_outputs: bool = False,
) -> EpisodeResult:
    settings = settings or PipelineSettings()
    episode = make_episode(scene, settings)
    state = episode.initialize(scene.frames[0], scene.robot_masks[0], scene.instruction)
    outputs = [state.initial_output]
    for t in range(1, len(scene.frames)):
        outputs.append(
            episode.distill(
                FrameInput(
                    observation=scene.frames[t], robot_mask=scene.robot_masks[t], timestep=t
                )
            )
        )
    metrics = compute_metrics(scene, outputs, thresholds)
    report = episode.close()
    return EpisodeResult(
        metrics=metrics, report=report, outputs=outputs if keep_outputs else None
    )


@dataclass
class SweepSpec:
    taxonomy: str = "semantic"
    counts: tuple[int, ...] = (0, 2, 6, 12, 18)
    seeds: tuple[int, ...] = tuple(range(10))
    episodes_per_seed: int = 2
    variants: tuple[str, ...] = VARIANTS
    size: tuple[int, int] = (160, 160)
    frames: int = 8
    background: str = "gradient"
    settings: PipelineSettings = field(default_factory=PipelineSettings)
    thresholds: MetricThresholds = field(default_factory=MetricThresholds)


RESULT_COLUMNS = (
    "variant",
    "taxonomy",
    "count",
    "seed",
    "episode",
    "success",
    "target_iou",
    "residual",
    "anchor_iou",
    "robot_exact",
)
TIMING_COLUMNS = ("variant", "taxonomy", "count", "seed", "episode", "init_ms", "frame_ms_p50")


@dataclass
class SweepReport:
    spec: SweepSpec
    rows: list[dict]
    timing_rows: list[dict]

    def mean_success(self, variant: str, count: int | None = None) -> float:
        rows = [
            r
            for r in self.rows
            if r["variant"] == variant and (count is None or r["count"] == count)
        ]
        if not rows:
            return 0.0
        return sum(r["success"] for r in rows) / len(rows)

    def aggregate(self) -> dict:
        out: dict[str, dict] = {}
        for variant in self.spec.variants:
            out[variant] = {
                str(count): {
                    "success": self.mean_success(variant, count),
                    "episodes": sum(
                        1
                        for r in self.rows
                        if r["variant"] == variant and r["count"] == count
                    ),
                }
                for count in self.spec.counts
            }
        return {
            "taxonomy": self.spec.taxonomy,
            "variants": out,
            "thresholds": self.spec.thresholds.__dict__,
        }

    def results_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r["variant"],
                    r["taxonomy"],
                    r["count"],
                    r["seed"],
                    r["episode"],
                    int(r["success"]),
                    f"{r['target_iou']:.6f}",
                    f"{r['residual']:.6f}",
                    f"{r['anchor_iou']:.6f}",
                    int(r["robot_exact"]),
                ]
            )
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TIMING_COLUMNS)
        for r in self.timing_rows:
            writer.writerow(
                [
                    r["variant"],
                    r["taxonomy"],
                    r["count"],
                    r["seed"],
                    r["episode"],
                    f"{r['init_ms']:.3f}",
                    f"{r['frame_ms_p50']:.3f}",
                ]
            )
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "results.csv", self.results_csv())
        atomic_write_text(out_dir / "timings.csv", self.timings_csv())
        atomic_write_text(
            out_dir / "aggregate.json", json.dumps(self.aggregate(), indent=2, sort_keys=True)
        )

    def ordering_violations(self) -> list[str]:
        """Expected dominance relations on the semantic-clutter ablation."""
        issues = []
        have = set(self.spec.variants)
        s = {v: self.mean_success(v) for v in have}
        chain = [v for v in ("full", "no_refinement", "mean_color_fill") if v in have]
        for a, b in zip(chain, chain[1:]):
            if s[a] < s[b]:
                issues.append(f"{a} ({s[a]:.3f}) < {b} ({s[b]:.3f})")
        if "full" in have and "no_robot_protection" in have and s["full"] < s["no_robot_protection"]:
            issues.append(
                f"full ({s['full']:.3f}) < no_robot_protection ({s['no_robot_protection']:.3f})"
            )
        if "baseline_identity" in have:
            for v in have - {"baseline_identity"}:
                if s[v] < s["baseline_identity"]:
                    issues.append(f"{v} ({s[v]:.3f}) < baseline_identity")
        return issues


def _episode_scene(spec: SweepSpec, count: int, seed: int, episode: int) -> Scene:
    scene_seed = stable_seed("sweep", spec.taxonomy, count, seed, episode)
    return generate_scene(
        make_task_scene_spec(
            spec.taxonomy,
            count,
            scene_seed,
            size=spec.size,
            frames=spec.frames,
            background=spec.background,
        )
    )


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepReport:
    keys = [
        (count, seed, episode)
        for count in spec.counts
        for seed in spec.seeds
        for episode in range(spec.episodes_per_seed)
    ]

    def run_key(key):
        count, seed, episode = key
        scene = _episode_scene(spec, count, seed, episode)
        results = []
        for variant in spec.variants:
            settings = variant_settings(variant, spec.settings)
            res = run_episode(scene, settings, spec.thresholds)
            results.append((variant, res))
        return key, results

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            finished = dict(pool.map(run_key, keys))
        ordered = [(k, finished[k]) for k in keys]
    else:
        ordered = [run_key(k) for k in keys]

    rows, timing_rows = [], []
    for (count, seed, episode), results in ordered:
        for variant, res in results:
            m = res.metrics
            base = {
                "variant": variant,
                "taxonomy": spec.taxonomy,
                "count": count,
                "seed": seed,
                "episode": episode,
            }
            rows.append(
                base
                | {
                    "success": bool(m.success),
                    "target_iou": m.target_preservation_iou,
                    "residual": m.distractor_residual_ratio,
                    "anchor_iou": m.anchor_preservation_iou,
                    "robot_exact": bool(m.robot_exactness),
                }
            )
            timing_rows.append(
                base
                | {
                    "init_ms": res.report.init_ms,
                    "frame_ms_p50": res.report.frame_ms_percentile(50),
                }
            )
    return SweepReport(spec=spec, rows=rows, timing_rows=timing_rows)


def run_latency_bench(
    scene: Scene, settings: PipelineSettings | None = None, warmup_frames: int = 2
) -> dict:
    """Wall-clock structure of one episode: heavy init, light per-frame compositing."""
    settings = settings or PipelineSettings()
    episode = make_episode(scene, settings)
    t0 = time.perf_counter()
    episode.initialize(scene.frames[0], scene.robot_masks[0], scene.instruction)
    init_ms = (time.perf_counter() - t0) * 1000.0
    timings = []
    for t in range(1, len(scene.frames)):
        frame = FrameInput(
            observation=scene.frames[t], robot_mask=scene.robot_masks[t], timestep=t
        )
        t1 = time.perf_counter()
        episode.distill(frame)
        dt = (time.perf_counter() - t1) * 1000.0
        if t > warmup_frames:
            timings.append(dt)
    report = episode.close()
    arr = np.asarray(timings) if timings else np.asarray([0.0])
    return {
        "init_ms": init_ms,
        "frame_ms_p50": float(np.percentile(arr, 50)),
        "frame_ms_p90": float(np.percentile(arr, 90)),
        "frame_ms_mean": float(arr.mean()),
        "frames_timed": len(timings),
        "phase_ms": report.phase_ms,
        "backend_calls": report.backend_calls,
        "hardware": f"{platform.platform()} / {platform.machine()} / {_cpu_count()} cpus",
    }


def _cpu_count() -> int:
    import os

    return os.cpu_count() or 1
