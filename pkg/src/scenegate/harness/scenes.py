"""Synthetic cluttered tabletop scenes with exact ground truth.

Objects are flat-shaded primitives placed on a collision-aware grid: each
object is drawn fully inside its own grid cell with a fixed inset, so
footprints are pairwise disjoint by construction and keep a guaranteed gap
from every neighbor. A parameterized two-segment arm silhouette sweeps
across the workspace over the episode, deliberately crossing the clutter
region. Everything is derived from the scene seed; identical seeds yield
bit-identical frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rle
from ..errors import PlacementInfeasible
from ..imio import load_png, save_png
from ..segmentation import ConfusionModel, MockSceneObject
from ..util import atomic_write_text, stable_seed

ROBOT_COLOR = (30, 28, 38)

SEMANTIC_POOL = ["spatula", "fork", "knife"]
RANDOM_POOL = ["cube", "ball", "cup", "banana", "bottle", "sponge"]
ATTRIBUTE_POOL = ["red handle", "blue handle", "yellow handle", "black handle", "white handle"]

_SHAPE_FOR_LABEL = {
    "spoon": "capsule",
    "spatula": "square",
    "fork": "triangle",
    "knife": "bar",
    "towel": "square",
    "plate": "disc",
    "carrot": "triangle",
}
_FALLBACK_SHAPES = ["disc", "square", "ellipse", "triangle"]


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str = "gradient"  # solid | gradient | noise


@dataclass(frozen=True)
class ObjectSpec:
    label: str
    role: str  # target | anchor | distractor
    attributes: tuple[str, ...] = ()
    shape: str | None = None

    @property
    def phrase(self) -> str:
        if not self.attributes:
            return self.label
        return f"{self.label} with {' and '.join(self.attributes)}"


@dataclass(frozen=True)
class RobotSpec:
    arm_radius: int = 5
    gripper_half: int = 6


@dataclass
class SceneSpec:
    seed: int
    size: tuple[int, int] = (160, 160)
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    objects: list[ObjectSpec] = field(default_factory=list)
    robot: RobotSpec = field(default_factory=RobotSpec)
    frames: int = 8
    cell: int = 24
    instruction: str = "put spoon on towel"
    domain: str = "kitchen"
    lexicon: dict[str, list[str]] = field(default_factory=dict)
    confusion: ConfusionModel = field(default_factory=ConfusionModel)


@dataclass
class SceneObject:
    uid: str
    label: str  # full phrase; the key the confusion table sees
    role: str
    mask: np.ndarray  # static footprint (objects do not move)
    color: tuple[int, int, int]


@dataclass
class Scene:
    spec: SceneSpec
    background: np.ndarray
    objects: list[SceneObject]
    robot_masks: list[np.ndarray]
    frames: list[np.ndarray]

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def instruction(self) -> str:
        return self.spec.instruction

    @property
    def domain(self) -> str:
        return self.spec.domain

    @property
    def lexicon(self) -> dict[str, list[str]]:
        return self.spec.lexicon

    @property
    def confusion(self) -> ConfusionModel:
        return self.spec.confusion

    def by_role(self, role: str) -> list[SceneObject]:
        return [o for o in self.objects if o.role == role]

    def mock_objects(self) -> list[MockSceneObject]:
        objs = [MockSceneObject(uid=o.uid, label=o.label, mask=o.mask) for o in self.objects]
        objs.append(MockSceneObject(uid="robot", label="robot", mask=self.robot_masks[0]))
        return objs

    def visible_mask(self, obj: SceneObject, t: int) -> np.ndarray:
        return obj.mask & ~self.robot_masks[t]


def _shape_mask(shape: str, size: tuple[int, int], cy: int, cx: int, half: int) -> np.ndarray:
    h, w = size
    yy, xx = np.ogrid[:h, :w]
    y = yy - cy
    x = xx - cx
    if shape == "disc":
        return (y * y + x * x) <= half * half
    if shape == "square":
        return (np.abs(y) <= half) & (np.abs(x) <= half)
    if shape == "ellipse":
        rx = max(2, int(0.6 * half))
        return (y / half) ** 2 + (x / rx) ** 2 <= 1.0
    if shape == "triangle":
        return (y >= -half) & (y <= half) & (np.abs(x) <= 0.5 * (y + half))
    if shape == "bar":
        return (np.abs(y) <= half) & (np.abs(x) <= max(1, int(0.25 * half)))
    if shape == "capsule":
        # handle segment plus a round head: a spoon-ish silhouette
        r = max(2, int(0.3 * half))
        handle = (y >= -half) & (y <= int(0.2 * half)) & (np.abs(x) <= r)
        head_cy = int(0.5 * half)
        head_r = max(2, int(0.5 * half))
        head = (yy - (cy + head_cy)) ** 2 + x * x <= head_r * head_r
        return handle | head
    raise ValueError(f"unknown shape {shape!r}")


def _capsule_mask(
    size: tuple[int, int], p0: tuple[float, float], p1: tuple[float, float], radius: float
) -> np.ndarray:
    h, w = size
    yy, xx = np.mgrid[:h, :w].astype(np.float64)
    vx, vy = p1[0] - p0[0], p1[1] - p0[1]
    norm2 = vx * vx + vy * vy
    if norm2 == 0:
        d2 = (xx - p0[0]) ** 2 + (yy - p0[1]) ** 2
    else:
        t = np.clip(((xx - p0[0]) * vx + (yy - p0[1]) * vy) / norm2, 0.0, 1.0)
        d2 = (xx - (p0[0] + t * vx)) ** 2 + (yy - (p0[1] + t * vy)) ** 2
    return d2 <= radius * radius


def robot_mask_at(spec: SceneSpec, t: int) -> np.ndarray:
    h, w = spec.size
    frames = max(2, spec.frames)
    u = t / (frames - 1)
    pivot = (0.12 * w, -8.0)
    eff_x = 0.08 * w + (0.90 - 0.08) * w * u
    eff_y = 0.65 * h - 0.25 * h * np.sin(np.pi * u)
    arm = _capsule_mask(spec.size, pivot, (eff_x, eff_y), spec.robot.arm_radius)
    g = spec.robot.gripper_half
    yy, xx = np.ogrid[:h, :w]
    gripper = (np.abs(yy - eff_y) <= g) & (np.abs(xx - eff_x) <= g)
    return arm | gripper


def _render_background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.size
    kind = spec.background.kind
    if kind == "solid":
        color = rng.integers(80, 181, size=3)
        return np.full((h, w, 3), color, dtype=np.uint8)
    if kind == "gradient":
        c0 = rng.integers(60, 111, size=3).astype(np.float64)
        c1 = rng.integers(150, 201, size=3).astype(np.float64)
        direction = rng.integers(0, 3)
        yy, xx = np.mgrid[:h, :w].astype(np.float64)
        if direction == 0:
            u = xx / max(1, w - 1)
        elif direction == 1:
            u = yy / max(1, h - 1)
        else:
            u = (xx + yy) / max(1, w + h - 2)
        bg = c0[None, None, :] + (c1 - c0)[None, None, :] * u[..., None]
        return np.floor(bg + 0.5).astype(np.uint8)
    if kind == "noise":
        base = rng.integers(90, 171, size=3).astype(np.float64)
        noise = rng.normal(0.0, 12.0, size=(h, w, 3))
        # coarse blotches: smooth the noise with a small box filter
        k = 5
        pad = np.pad(noise, ((k, k), (k, k), (0, 0)), mode="edge")
        smooth = np.zeros_like(noise)
        for dy in range(-k, k + 1):
            for dx in range(-k, k + 1):
                smooth += pad[k + dy : k + dy + h, k + dx : k + dx + w]
        smooth /= (2 * k + 1) ** 2
        return np.clip(np.floor(base + smooth * 3.0 + 0.5), 0, 255).astype(np.uint8)
    raise ValueError(f"unknown background kind {kind!r}")


def _object_color(
    background: np.ndarray, cell_box: tuple[int, int, int, int], rng: np.random.Generator
) -> tuple[int, int, int]:
    y0, y1, x0, x1 = cell_box
    local = background[y0:y1, x0:x1].reshape(-1, 3).mean(axis=0)
    offset = rng.integers(90, 141, size=3)
    color = np.where(local < 128, local + offset, local - offset)
    return tuple(int(c) for c in np.clip(color, 0, 255))


def generate_scene(spec: SceneSpec) -> Scene:
    """Render a full episode: frames, per-object masks, per-frame robot masks."""
    h, w = spec.size
    rng = np.random.default_rng(stable_seed(spec.seed, "scene"))
    background = _render_background(spec, rng)
    robot_masks = [robot_mask_at(spec, t) for t in range(spec.frames)]

    cell = spec.cell
    rows, cols = h // cell, w // cell
    oy = (h - rows * cell) // 2
    ox = (w - cols * cell) // 2
    inset = 4
    # keep objects clear of the arm's starting pose and its clean-scene dilation
    blocked_zone = _dilate_quick(robot_masks[0], 8)
    free_cells = []
    for r in range(rows):
        for c in range(cols):
            y0, x0 = oy + r * cell, ox + c * cell
            if not blocked_zone[y0 : y0 + cell, x0 : x0 + cell].any():
                free_cells.append((r, c))
    if len(spec.objects) > len(free_cells):
        raise PlacementInfeasible(
            f"{len(spec.objects)} objects requested but only {len(free_cells)} free cells"
        )
    order = rng.permutation(len(free_cells))

    objects: list[SceneObject] = []
    half_max = cell // 2 - inset
    for i, ospec in enumerate(spec.objects):
        r, c = free_cells[order[i]]
        y0, x0 = oy + r * cell, ox + c * cell
        box = (y0, y0 + cell, x0, x0 + cell)
        if ospec.role == "anchor":
            half = half_max
        else:
            half = int(rng.integers(5, half_max + 1))
        play = half_max - half
        jy = int(rng.integers(-min(2, play), min(2, play) + 1)) if play > 0 else 0
        jx = int(rng.integers(-min(2, play), min(2, play) + 1)) if play > 0 else 0
        cy, cx = y0 + cell // 2 + jy, x0 + cell // 2 + jx
        shape = ospec.shape or _SHAPE_FOR_LABEL.get(ospec.label, _FALLBACK_SHAPES[i % 4])
        mask = _shape_mask(shape, spec.size, cy, cx, half)
        cell_box = np.zeros((h, w), dtype=bool)
        cell_box[y0 + inset // 2 : y0 + cell - inset // 2, x0 + inset // 2 : x0 + cell - inset // 2] = True
        mask &= cell_box
        color = _object_color(background, box, rng)
        objects.append(
            SceneObject(
                uid=f"{ospec.role}{i:02d}",
                label=ospec.phrase,
                role=ospec.role,
                mask=mask,
                color=color,
            )
        )

    frames = []
    for t in range(spec.frames):
        img = background.copy()
        for obj in objects:
            img[obj.mask] = obj.color
        img[robot_masks[t]] = ROBOT_COLOR
        frames.append(img)

    return Scene(
        spec=spec, background=background, objects=objects, robot_masks=robot_masks, frames=frames
    )


def _dilate_quick(mask: np.ndarray, radius: int) -> np.ndarray:
    from ..masks import dilate

    return dilate(mask, radius)


def _semantic_confusion(
    target: str, anchor: str, distractor_labels: list[str]
) -> ConfusionModel:
    """Sampled-confidence regime: lookalikes answer the target prompt and vice versa."""
    model = ConfusionModel()
    model.add(target, target, mean=0.8, std=0.05)
    model.add(anchor, anchor, mean=0.95, std=0.01)
    model.add("robot", "robot", mean=0.95, std=0.01)
    for label in dict.fromkeys(distractor_labels):
        model.add(label, label, mean=0.9, std=0.02)
        model.add(label, target, mean=0.6, std=0.06)
        model.add(target, label, mean=0.6, std=0.06)
    return model


def _random_confusion(target: str, anchor: str, distractor_labels: list[str]) -> ConfusionModel:
    model = ConfusionModel()
    model.add(target, target, mean=0.8, std=0.05)
    model.add(anchor, anchor, mean=0.95, std=0.01)
    model.add("robot", "robot", mean=0.95, std=0.01)
    for label in dict.fromkeys(distractor_labels):
        model.add(label, label, mean=0.9, std=0.02)
    return model


def _attribute_confusion(
    base_label: str, anchor: str, phrases: list[str], target_phrase: str
) -> ConfusionModel:
    """Category prompts hit every variant; the full attribute phrase hits only its owner."""
    model = ConfusionModel()
    model.add(anchor, anchor, mean=0.95, std=0.01)
    model.add("robot", "robot", mean=0.95, std=0.01)
    for phrase in dict.fromkeys(phrases + [target_phrase]):
        model.add(phrase, base_label, mean=0.9, std=0.02)
        model.add(phrase, phrase, mean=0.9, std=0.02)
        # adjective alias: "spoon with green handle" also answers "green spoon"
        words = phrase.split()
        if len(words) >= 3 and words[1] == "with":
            model.add(phrase, f"{words[2]} {base_label}", mean=0.9, std=0.02)
    return model


def make_task_scene_spec(
    taxonomy: str,
    distractor_count: int,
    seed: int,
    *,
    size: tuple[int, int] = (160, 160),
    frames: int = 8,
    background: str = "gradient",
    cell: int | None = None,
) -> SceneSpec:
    """Scene spec for the default pick-and-place task under one distractor taxonomy."""
    target_label, anchor_label = "spoon", "towel"
    objects = [
        ObjectSpec(label=anchor_label, role="anchor"),
        ObjectSpec(label=target_label, role="target", attributes=(
            ("green handle",) if taxonomy == "attribute" else ()
        )),
    ]
    if taxonomy == "semantic":
        labels = [SEMANTIC_POOL[i % len(SEMANTIC_POOL)] for i in range(distractor_count)]
        objects += [ObjectSpec(label=lb, role="distractor") for lb in labels]
        instruction = "put spoon on towel"
        domain = "kitchen"
        lexicon = {domain: list(SEMANTIC_POOL)}
        confusion = _semantic_confusion(target_label, anchor_label, labels)
    elif taxonomy == "random":
        labels = [RANDOM_POOL[i % len(RANDOM_POOL)] for i in range(distractor_count)]
        objects += [ObjectSpec(label=lb, role="distractor") for lb in labels]
        instruction = "put spoon on towel"
        domain = "tabletop_random"
        lexicon = {domain: list(RANDOM_POOL)}
        confusion = _random_confusion(target_label, anchor_label, labels)
    elif taxonomy == "attribute":
        attrs = [ATTRIBUTE_POOL[i % len(ATTRIBUTE_POOL)] for i in range(distractor_count)]
        objects += [
            ObjectSpec(label=target_label, role="distractor", attributes=(a,), shape="capsule")
            for a in attrs
        ]
        instruction = "put spoon with green handle on towel"
        domain = "kitchen_attribute"
        lexicon = {domain: [target_label, "spatula", "fork", "knife"]}
        confusion = _attribute_confusion(
            target_label,
            anchor_label,
            [o.phrase for o in objects if o.role == "distractor"],
            "spoon with green handle",
        )
    else:
        raise ValueError(f"unknown taxonomy {taxonomy!r}")
    return SceneSpec(
        seed=seed,
        size=size,
        background=BackgroundSpec(kind=background),
        objects=objects,
        frames=frames,
        cell=cell if cell is not None else (32 if max(size) >= 224 else 24),
        instruction=instruction,
        domain=domain,
        lexicon=lexicon,
        confusion=confusion,
    )


def to_bundle(scene: Scene, directory: str | Path) -> None:
    """Write the on-disk episode bundle: scene.json, frames/, gt/, background.png."""
    directory = Path(directory)
    (directory / "frames").mkdir(parents=True, exist_ok=True)
    (directory / "gt").mkdir(parents=True, exist_ok=True)
    meta = {
        "seed": scene.spec.seed,
        "size": list(scene.spec.size),
        "frames": scene.spec.frames,
        "instruction": scene.spec.instruction,
        "domain": scene.spec.domain,
        "lexicon": scene.spec.lexicon,
        "confusion": scene.spec.confusion.to_json(),
        "objects": [
            {"uid": o.uid, "label": o.label, "role": o.role, "color": list(o.color)}
            for o in scene.objects
        ],
    }
    atomic_write_text(directory / "scene.json", json.dumps(meta, indent=2, sort_keys=True))
    save_png(directory / "background.png", scene.background)
    for t, frame in enumerate(scene.frames):
        save_png(directory / "frames" / f"{t:04d}.png", frame)
    for obj in scene.objects:
        atomic_write_text(
            directory / "gt" / f"{obj.uid}_0000.rle.json", json.dumps(rle.encode(obj.mask))
        )
    for t, mask in enumerate(scene.robot_masks):
        atomic_write_text(
            directory / "gt" / f"robot_{t:04d}.rle.json", json.dumps(rle.encode(mask))
        )


def from_bundle(directory: str | Path) -> Scene:
    directory = Path(directory)
    meta = json.loads((directory / "scene.json").read_text(encoding="utf-8"))
    spec = SceneSpec(
        seed=meta["seed"],
        size=tuple(meta["size"]),
        frames=meta["frames"],
        instruction=meta["instruction"],
        domain=meta["domain"],
        lexicon=meta["lexicon"],
        confusion=ConfusionModel.from_json(meta["confusion"]),
    )
    frames = [
        load_png(p) for p in sorted((directory / "frames").glob("*.png"))
    ]
    robot_masks = [
        rle.decode(json.loads(p.read_text(encoding="utf-8")))
        for p in sorted((directory / "gt").glob("robot_*.rle.json"))
    ]
    objects = []
    for entry in meta["objects"]:
        mask_path = directory / "gt" / f"{entry['uid']}_0000.rle.json"
        mask = rle.decode(json.loads(mask_path.read_text(encoding="utf-8")))
        objects.append(
            SceneObject(
                uid=entry["uid"],
                label=entry["label"],
                role=entry["role"],
                mask=mask,
                color=tuple(entry["color"]),
            )
        )
    background = load_png(directory / "background.png")
    return Scene(
        spec=spec, background=background, objects=objects, robot_masks=robot_masks, frames=frames
    )
