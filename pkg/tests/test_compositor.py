import numpy as np
import pytest

from scenegate.compositor import Episode, FrameInput, blend_frames
from scenegate.errors import (
    DimensionMismatch,
    EpisodeAlreadyInitialized,
    UninitializedEpisode,
)
from scenegate.inpainting import HarmonicInpainter
from scenegate.segmentation import MockSegmentationBackend

from fixtures import worked_example_scene

LEXICON = {"kitchen": ["spatula", "fork", "knife"]}


def make_episode(fx, **kwargs):
    return Episode(
        seg_backend=MockSegmentationBackend(fx["objects"], fx["rules"]),
        inpaint_backend=HarmonicInpainter(),
        lexicon=LEXICON,
        domain="kitchen",
        **kwargs,
    )


def shifted_robot(fx, dx):
    robot = np.zeros_like(fx["masks"]["robot"])
    src = fx["masks"]["robot"]
    robot[:, dx:] = src[:, : src.shape[1] - dx]
    return robot


class TestBlend:
    def test_alpha_zero_is_live(self):
        rng = np.random.default_rng(0)
        clean = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        live = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        out = blend_frames(np.zeros((8, 8)), clean.astype(np.float64), live)
        assert np.array_equal(out, live)

    def test_alpha_one_is_clean(self):
        rng = np.random.default_rng(1)
        clean = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        live = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        out = blend_frames(np.ones((8, 8)), clean.astype(np.float64), live)
        assert np.array_equal(out, clean)

    def test_bounded_by_endpoints(self):
        rng = np.random.default_rng(2)
        clean = rng.integers(0, 256, (10, 10, 3)).astype(np.uint8)
        live = rng.integers(0, 256, (10, 10, 3)).astype(np.uint8)
        alpha = rng.random((10, 10))
        out = blend_frames(alpha, clean.astype(np.float64), live).astype(int)
        lo = np.minimum(clean, live).astype(int) - 1
        hi = np.maximum(clean, live).astype(int) + 1
        assert np.all(out >= lo) and np.all(out <= hi)

    def test_round_half_up(self):
        clean = np.full((1, 1, 3), 3, dtype=np.uint8)
        live = np.full((1, 1, 3), 0, dtype=np.uint8)
        out = blend_frames(np.full((1, 1), 0.5), clean.astype(np.float64), live)
        assert out[0, 0, 0] == 2  # 1.5 rounds up


class TestEpisodeLifecycle:
    def test_double_init_rejected(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        with pytest.raises(EpisodeAlreadyInitialized):
            ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")

    def test_distill_before_init_rejected(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        with pytest.raises(UninitializedEpisode):
            ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], 1))
        with pytest.raises(UninitializedEpisode):
            ep.close()

    def test_timestep_must_increase(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], 1))
        with pytest.raises(ValueError):
            ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], 1))

    def test_timestep_zero_rejected_in_distill(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        with pytest.raises(ValueError):
            ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], 0))

    def test_dimension_mismatch(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        with pytest.raises(DimensionMismatch):
            ep.distill(
                FrameInput(np.zeros((8, 8, 3), dtype=np.uint8), np.zeros((8, 8), dtype=bool), 1)
            )


class TestDistillation:
    def test_initial_output_is_clean_scene_with_robot(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        state = ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        clean = state.clean_scene
        robot = fx["masks"]["robot"]
        assert np.array_equal(state.initial_output[robot], fx["image"][robot])
        assert np.array_equal(state.initial_output[~robot], clean.image[~robot])
        # clutter is gone even on the first output
        assert not np.array_equal(
            state.initial_output[fx["masks"]["spatula"]], fx["image"][fx["masks"]["spatula"]]
        )

    def test_alpha_nonzero_exactly_where_clutter_was(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        state = ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        assert state.alpha[fx["masks"]["spatula"]].min() > 0.5
        assert state.alpha[fx["masks"]["spoon"]].max() == 0.0

    def test_robot_overwrite_bit_exact_through_inpainted_region(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        state = ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        # robot arm moved on top of the inpainted lookalike region
        robot_t = fx["masks"]["spatula"].copy()
        live = fx["image"].copy()
        live[robot_t] = (30, 28, 38)
        out = ep.distill(FrameInput(live, robot_t, 1))
        assert np.array_equal(out[robot_t], live[robot_t])
        # around the robot, inside the inpainted zone, the clean scene shows
        ring = state.clean_scene.gate_mask & ~robot_t
        interior = state.alpha >= 0.999
        check = ring & interior
        if check.any():
            assert np.array_equal(out[check], state.clean_scene.image[check])

    def test_static_pixels_unchanged(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        state = ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        out = ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], 1))
        safe = fx["masks"]["spoon"] | fx["masks"]["towel"]
        assert np.array_equal(out[safe], fx["image"][safe])

    def test_backend_quiescence(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        for t in range(1, 6):
            ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], t))
        report = ep.close()
        assert report.backend_calls == report.backend_calls_after_init
        assert report.backend_calls["segment"] == 6
        assert report.backend_calls["inpaint"] == 1
        assert report.frames == 5

    def test_temporal_determinism(self):
        fx = worked_example_scene()
        streams = []
        for _ in range(2):
            ep = make_episode(fx)
            state = ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
            outs = [state.initial_output]
            for t in range(1, 4):
                outs.append(ep.distill(FrameInput(fx["image"], shifted_robot(fx, 4 * t), t)))
            streams.append(outs)
        for a, b in zip(*streams):
            assert np.array_equal(a, b)

    def test_identity_mode_passthrough(self):
        fx = worked_example_scene()
        ep = Episode(identity=True)
        state = ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        assert np.array_equal(state.initial_output, fx["image"])
        out = ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], 1))
        assert np.array_equal(out, fx["image"])
        report = ep.close()
        assert report.backend_calls == {"segment": 0, "inpaint": 0}

    def test_no_robot_overwrite_mode(self):
        fx = worked_example_scene()
        ep = make_episode(fx, robot_overwrite=False)
        ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        robot_t = fx["masks"]["spatula"].copy()  # arm fully inside inpainted zone
        live = fx["image"].copy()
        live[robot_t] = (30, 28, 38)
        out = ep.distill(FrameInput(live, robot_t, 1))
        assert not np.array_equal(out[robot_t], live[robot_t])

    def test_report_fields(self):
        fx = worked_example_scene()
        ep = make_episode(fx)
        ep.initialize(fx["image"], fx["masks"]["robot"], "put spoon on towel")
        ep.distill(FrameInput(fx["image"], fx["masks"]["robot"], 1))
        report = ep.close()
        d = report.to_dict()
        assert d["frames"] == 1
        assert d["init_ms"] > 0
        assert set(report.phase_ms) == {"segment_ms", "refine_ms", "gate_ms", "inpaint_ms"}
        assert report.init_ms >= report.phase_ms["segment_ms"] + report.phase_ms["inpaint_ms"]
