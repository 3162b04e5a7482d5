from .scenes import (
    BackgroundSpec,
    ObjectSpec,
    RobotSpec,
    Scene,
    SceneObject,
    SceneSpec,
    generate_scene,
    make_task_scene_spec,
)
from .metrics import DistillationMetrics, MetricThresholds, compute_metrics
from .runner import (
    EpisodeResult,
    PipelineSettings,
    SweepSpec,
    make_episode,
    run_episode,
    run_latency_bench,
    run_sweep,
    variant_settings,
)

__all__ = [
    "BackgroundSpec",
    "DistillationMetrics",
    "EpisodeResult",
    "MetricThresholds",
    "ObjectSpec",
    "PipelineSettings",
    "RobotSpec",
    "Scene",
    "SceneObject",
    "SceneSpec",
    "SweepSpec",
    "compute_metrics",
    "generate_scene",
    "make_episode",
    "make_task_scene_spec",
    "run_episode",
    "run_latency_bench",
    "run_sweep",
    "variant_settings",
]
