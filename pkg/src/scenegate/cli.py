"""Command-line entry point.

Subcommands:
  distill         run the full pipeline over an episode bundle
  explain         dump the refinement trace and an annotated overlay for frame 0
  bench           run ablation sweeps or the latency benchmark
  record-fixture  capture wire-protocol exchanges for the replay backend

Exit codes: 0 success, 2 usage/config error, 3 backend error,
4 no target found while running --fail-closed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from . import rle, wire
from .compositor import Episode, FrameInput
from .config import RunConfig, load_run_config
from .errors import (
    BackendUnavailable,
    InvalidConfig,
    NoTargetFound,
    ProtocolError,
    SceneGateError,
)
from .imio import load_png, save_png
from .inpainting import FixtureInpaintingBackend, make_inpainter
from .instructions import decompose, default_lexicon, load_grammar, load_lexicon
from .harness import (
    MetricThresholds,
    PipelineSettings,
    SweepSpec,
    run_latency_bench,
    run_sweep,
)
from .harness.runner import VARIANTS
from .harness.scenes import from_bundle, generate_scene, make_task_scene_spec
from .refinement import cross_validate, score_components
from .segmentation import (
    FixtureSegmentationBackend,
    MockSegmentationBackend,
    WireSegmentationBackend,
    segment_set,
)
from .util import atomic_write_text


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("pipeline configuration")
    g.add_argument("--config", help="JSON config file (lowest-precedence overrides)")
    g.add_argument("--instruction", help="task instruction, e.g. 'put spoon on towel'")
    g.add_argument("--lexicon", help="path to a distractor lexicon JSON file")
    g.add_argument("--grammar", help="path to a grammar JSON file")
    g.add_argument("--domain", help="lexicon domain key")
    g.add_argument("--eta", type=float, help="IoU threshold for conflict detection")
    g.add_argument("--rd", type=int, help="distractor dilation radius (px)")
    g.add_argument("--rs", type=int, help="safe-set dilation radius (px), >= --rd")
    g.add_argument("--re", type=int, help="robot dilation radius (px)")
    g.add_argument("--blur-sigma", dest="blur_sigma", type=float, help="compositing blur sigma")
    g.add_argument("--seg-backend", dest="seg_backend", choices=["mock", "wire", "fixture"])
    g.add_argument("--seg-endpoint", dest="seg_endpoint", help="stdio:<cmd> or tcp:<host>:<port>")
    g.add_argument("--inpaint-backend", dest="inpaint_backend", choices=["mean", "diffusion", "wire"])
    g.add_argument("--inpaint-endpoint", dest="inpaint_endpoint")
    g.add_argument("--fixture", help="recorded fixture file for replay backends")
    fail = g.add_mutually_exclusive_group()
    fail.add_argument("--fail-open", dest="fail_open", action="store_const", const=True,
                      help="pass raw frames through when no target is found (default)")
    fail.add_argument("--fail-closed", dest="fail_open", action="store_const", const=False,
                      help="abort the episode when no target is found")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, help="parallel workers for sweeps")
    g.add_argument("--out", help="output directory")
    parser.set_defaults(fail_open=None)


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "instruction", "lexicon", "grammar", "domain", "eta", "rd", "rs", "re",
            "blur_sigma", "seg_backend", "seg_endpoint", "inpaint_backend",
            "inpaint_endpoint", "fixture", "fail_open", "seed", "jobs", "out",
        )
    }
    return load_run_config(getattr(args, "config", None), None, overrides)


def _load_lexicon(cfg: RunConfig) -> dict:
    return load_lexicon(cfg.lexicon) if cfg.lexicon else default_lexicon()


def _build_backends(cfg: RunConfig, scene):
    if cfg.seg_backend == "mock":
        if scene is None:
            raise InvalidConfig("mock segmentation needs an episode bundle with ground truth")
        seg = MockSegmentationBackend(scene.mock_objects(), scene.confusion, seed=cfg.seed)
    elif cfg.seg_backend == "wire":
        seg = WireSegmentationBackend(wire.WireClient(wire.open_transport(cfg.seg_endpoint)))
    else:
        seg = FixtureSegmentationBackend.from_file(cfg.fixture)
    if cfg.inpaint_backend == "wire":
        inpaint = make_inpainter("wire", endpoint=cfg.inpaint_endpoint)
    elif cfg.fixture and cfg.inpaint_backend == "diffusion" and cfg.seg_backend == "fixture":
        # replaying a full recorded episode: prefer recorded inpaint responses when present
        replay = FixtureInpaintingBackend.from_file(cfg.fixture)
        inpaint = replay if replay._responses else make_inpainter(cfg.inpaint_backend)
    else:
        inpaint = make_inpainter(cfg.inpaint_backend)
    return seg, inpaint


def _load_frame_stream(bundle: Path):
    """Plain input mode: numbered PNGs plus robot-mask RLE sidecars."""
    frames_dir = bundle / "frames" if (bundle / "frames").is_dir() else bundle
    frame_paths = sorted(frames_dir.glob("*.png"))
    if not frame_paths:
        raise InvalidConfig(f"{bundle} contains no frames")
    frames = [load_png(p) for p in frame_paths]
    robot_masks = []
    for t, path in enumerate(frame_paths):
        candidates = [
            bundle / "robot" / f"{path.stem}.rle.json",
            bundle / "gt" / f"robot_{path.stem}.rle.json",
        ]
        sidecar = next((c for c in candidates if c.exists()), None)
        if sidecar is None:
            raise InvalidConfig(f"missing robot-mask sidecar for frame {path.name}")
        robot_masks.append(rle.decode(json.loads(sidecar.read_text(encoding="utf-8"))))
    return frames, robot_masks


def cmd_distill(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    bundle = Path(args.input)
    if (bundle / "scene.json").exists():
        scene = from_bundle(bundle)
        frames, robot_masks = scene.frames, scene.robot_masks
        instruction = cfg.instruction or scene.instruction
        domain = args.domain or scene.domain
        lexicon = _load_lexicon(cfg) if cfg.lexicon else scene.lexicon
    elif bundle.is_dir():
        scene = None
        frames, robot_masks = _load_frame_stream(bundle)
        if not cfg.instruction:
            raise InvalidConfig("plain frame streams need --instruction")
        instruction = cfg.instruction
        domain = cfg.domain
        lexicon = _load_lexicon(cfg)
    else:
        raise InvalidConfig(f"input {bundle} is not a directory")
    if not frames:
        raise InvalidConfig(f"{bundle} contains no frames")
    seg, inpaint = _build_backends(cfg, scene)
    episode = Episode(
        seg_backend=seg,
        inpaint_backend=inpaint,
        lexicon=lexicon,
        domain=domain,
        grammar=load_grammar(cfg.grammar) if cfg.grammar else None,
        gating=cfg.gating(),
        refine=cfg.refinement(),
        blur_sigma=cfg.blur_sigma,
        fail_open=cfg.fail_open,
    )
    state = episode.initialize(frames[0], robot_masks[0], instruction)

    out_dir = Path(cfg.out or "distilled")
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    save_png(frames_dir / "0000.png", state.initial_output)
    for t in range(1, len(frames)):
        out = episode.distill(
            FrameInput(observation=frames[t], robot_mask=robot_masks[t], timestep=t)
        )
        save_png(frames_dir / f"{t:04d}.png", out)

    clean = state.clean_scene
    save_png(out_dir / "clean_scene.png", clean.image)
    atomic_write_text(out_dir / "gate_mask.rle.json", json.dumps(rle.encode(clean.gate_mask)))
    atomic_write_text(
        out_dir / "inpaint_mask.rle.json", json.dumps(rle.encode(clean.inpaint_mask))
    )
    atomic_write_text(
        out_dir / "provenance.json", json.dumps(clean.provenance, indent=2, sort_keys=True)
    )
    report = episode.close()
    atomic_write_text(
        out_dir / "episode_report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True)
    )
    print(f"distilled {len(frames)} frames -> {out_dir}")
    return 0


_OVERLAY_COLORS = {
    "distractor": (220, 60, 60),
    "target": (70, 110, 230),
    "selected": (60, 200, 90),
}


def _tint(image: np.ndarray, mask: np.ndarray, color, strength: float) -> None:
    c = np.asarray(color, dtype=np.float64)
    image[mask] = np.floor(image[mask] * (1 - strength) + c * strength + 0.5).astype(np.uint8)


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    scene = from_bundle(Path(args.input))
    instruction = cfg.instruction or scene.instruction
    domain = args.domain or scene.domain
    lexicon = _load_lexicon(cfg) if cfg.lexicon else scene.lexicon
    seg, _ = _build_backends(cfg, scene)
    decomp = decompose(instruction, lexicon, domain)
    frame0 = scene.frames[0]
    channels = segment_set(seg, frame0, list(decomp.all_concepts()))
    targets = channels.get(decomp.target, [])
    distractors = [i for c in decomp.distractors for i in channels.get(c, [])]
    if not targets:
        raise NoTargetFound(f"no instances for target concept {decomp.target!r}")
    scored = cross_validate(targets, distractors, cfg.refinement())
    comps = score_components(scored, cfg.refinement())
    ranked = sorted(
        range(len(comps)),
        key=lambda i: (-comps[i].score, -comps[i].component.area, comps[i].component.min_index),
    )
    selected = ranked[0]

    trace = {
        "instruction": instruction,
        "target": decomp.target,
        "anchor": decomp.anchor,
        "distractors": list(decomp.distractors),
        "eta": cfg.eta,
        "instances": [
            {
                "confidence": s.instance.confidence,
                "genuineness": s.genuineness,
                "conflict_confidence": s.best_conflict.confidence if s.best_conflict else None,
            }
            for s in scored
        ],
        "components": [
            {
                "index": i,
                "g_star": c.g_star,
                "sigma_star": c.sigma_star,
                "score": c.score,
                "selected": i == selected,
            }
            for i, c in enumerate(comps)
        ],
    }
    out_dir = Path(cfg.out or "explain")
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "trace.json", json.dumps(trace, indent=2, sort_keys=True))

    overlay = frame0.copy()
    for inst in distractors:
        _tint(overlay, inst.mask, _OVERLAY_COLORS["distractor"], 0.35)
    for s in scored:
        _tint(overlay, s.instance.mask, _OVERLAY_COLORS["target"], 0.35)
    _tint(overlay, comps[selected].component.mask, _OVERLAY_COLORS["selected"], 0.5)
    pil = PILImage.fromarray(overlay)
    draw = ImageDraw.Draw(pil)
    for i, c in enumerate(comps):
        x0, y0, x1, y1 = c.component.bbox
        color = _OVERLAY_COLORS["selected" if i == selected else "target"]
        draw.rectangle([x0, y0, x1, y1], outline=color)
        draw.text((x0, max(0, y0 - 10)), f"{c.score:.2f}", fill=color)
    save_png(out_dir / "overlay.png", np.asarray(pil))
    print(json.dumps(trace["components"], indent=2))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    settings = PipelineSettings(
        gating=cfg.gating(), refine=cfg.refinement(), blur_sigma=cfg.blur_sigma,
        inpainter=cfg.inpaint_backend if cfg.inpaint_backend != "wire" else "diffusion",
        fail_open=cfg.fail_open,
    )
    out_dir = Path(cfg.out or "bench")
    if args.mode == "latency":
        size = (args.size, args.size)
        spec = make_task_scene_spec(
            args.taxonomy, args.max_count, cfg.seed, size=size, frames=args.frames,
            background=args.background,
        )
        result = run_latency_bench(generate_scene(spec), settings)
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "latency.json", json.dumps(result, indent=2, sort_keys=True))
        print(json.dumps(result, indent=2, sort_keys=True))
        return 0

    try:
        counts = tuple(int(c) for c in args.counts.split(",") if c.strip())
    except ValueError as exc:
        raise InvalidConfig(f"bad sweep counts {args.counts!r}: {exc}") from exc
    if not counts:
        raise InvalidConfig("empty sweep counts")
    variants = tuple(args.variants.split(",")) if args.variants else VARIANTS
    for v in variants:
        if v not in VARIANTS:
            raise InvalidConfig(f"unknown variant {v!r}")
    sweep = SweepSpec(
        taxonomy=args.taxonomy,
        counts=counts,
        seeds=tuple(range(args.seeds)),
        episodes_per_seed=args.episodes,
        variants=variants,
        size=(args.size, args.size),
        frames=args.frames,
        background=args.background,
        settings=settings,
        thresholds=MetricThresholds(
            tau_target=cfg.tau_target,
            tau_residual=cfg.tau_residual,
            tau_anchor=cfg.tau_anchor,
            bg_epsilon=cfg.bg_epsilon,
        ),
    )
    report = run_sweep(sweep, jobs=cfg.jobs)
    report.write(out_dir)
    for variant in variants:
        marks = " ".join(
            f"{count}:{report.mean_success(variant, count):.2f}" for count in counts
        )
        print(f"{variant:22s} {marks}")
    if args.check:
        issues = report.ordering_violations()
        if issues:
            for issue in issues:
                print(f"ordering violation: {issue}", file=sys.stderr)
            return 1
        print("ordering check passed")
    return 0


def cmd_record_fixture(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    if args.input:
        image = from_bundle(Path(args.input)).frames[0]
    elif args.image:
        image = load_png(args.image)
    else:
        raise InvalidConfig("record-fixture needs --input bundle or --image")
    concepts = [c for c in (args.concepts.split(",") if args.concepts else []) if c]
    client = wire.WireClient(wire.open_transport(args.endpoint))
    records: list[dict] = []
    seg = WireSegmentationBackend(client, record_to=records)
    errors = 0
    for concept in concepts:
        try:
            seg.segment(image, concept)
        except (BackendUnavailable, ProtocolError) as exc:
            errors += 1
            print(f"warning: segment {concept!r} failed: {exc}", file=sys.stderr)
    if args.inpaint_mask:
        mask = rle.decode(json.loads(Path(args.inpaint_mask).read_text(encoding="utf-8")))
        request = wire.inpaint_request(client.next_id("inpaint"), image, mask)
        try:
            response = client.call(request)
            records.append({"request": request, "response": response})
        except (BackendUnavailable, ProtocolError) as exc:
            errors += 1
            print(f"warning: inpaint failed: {exc}", file=sys.stderr)
    client.close()
    out = Path(cfg.out or "fixture.jsonl")
    lines = [json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in records]
    atomic_write_text(out, "\n".join(lines) + ("\n" if lines else ""))
    print(f"recorded {len(records)} exchanges ({errors} errors) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenegate",
        description="Language-gated distractor removal for robot camera streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distill", help="distill an episode bundle into clean frames")
    p.add_argument("--input", required=True, help="episode bundle directory")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("explain", help="show refinement scoring for frame 0 of a bundle")
    p.add_argument("--input", required=True, help="episode bundle directory")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("bench", help="ablation sweeps and latency benchmarks")
    p.add_argument("--mode", choices=["sweep", "latency"], default="sweep")
    p.add_argument("--taxonomy", choices=["semantic", "random", "attribute"], default="semantic")
    p.add_argument("--counts", default="0,2,6,12,18", help="comma-separated distractor counts")
    p.add_argument("--max-count", dest="max_count", type=int, default=18,
                   help="distractor count for latency mode")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds")
    p.add_argument("--episodes", type=int, default=2, help="episodes per seed")
    p.add_argument("--variants", help="comma-separated subset of variants")
    p.add_argument("--size", type=int, default=160, help="canvas side in pixels")
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--background", choices=["solid", "gradient", "noise"], default="gradient")
    p.add_argument("--check", action="store_true", help="fail when variant ordering is violated")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("record-fixture", help="record wire exchanges for replay")
    p.add_argument("--endpoint", required=True, help="stdio:<cmd> or tcp:<host>:<port>")
    p.add_argument("--input", help="episode bundle (frame 0 is used)")
    p.add_argument("--image", help="single PNG image")
    p.add_argument("--concepts", help="comma-separated concepts to segment")
    p.add_argument("--inpaint-mask", dest="inpaint_mask", help="RLE JSON mask to also inpaint")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_record_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NoTargetFound as exc:
        print(f"no target found: {exc}", file=sys.stderr)
        return 4
    except (BackendUnavailable, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except SceneGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
