"""Hand-built deterministic scenes shared across test modules."""

from __future__ import annotations

import numpy as np

from scenegate.segmentation import ConfusionModel, MockSceneObject


def box_mask(h, w, y0, y1, x0, x1):
    m = np.zeros((h, w), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def worked_example_scene(h=48, w=64):
    """Target + lookalike distractor + anchor + robot with fixed confidences.

    The lookalike answers the target prompt at 0.6 and its own prompt at 0.9;
    the genuine target answers its own prompt at 0.8 and conflicts with
    nothing, so the two component scores come out at 0.42 and 1.44.
    """
    spoon = box_mask(h, w, 8, 20, 6, 14)
    spatula = box_mask(h, w, 8, 22, 30, 44)
    towel = box_mask(h, w, 30, 44, 40, 60)
    robot = box_mask(h, w, 40, 48, 0, 8)

    image = np.full((h, w, 3), 120, dtype=np.uint8)
    image[spoon] = (200, 180, 60)
    image[spatula] = (60, 60, 200)
    image[towel] = (220, 220, 220)
    image[robot] = (30, 28, 38)

    objects = [
        MockSceneObject(uid="spoon0", label="spoon", mask=spoon),
        MockSceneObject(uid="spatula0", label="spatula", mask=spatula),
        MockSceneObject(uid="towel0", label="towel", mask=towel),
        MockSceneObject(uid="robot", label="robot", mask=robot),
    ]
    rules = ConfusionModel()
    rules.add("spoon", "spoon", confidence=0.8)
    rules.add("spatula", "spoon", confidence=0.6)
    rules.add("spatula", "spatula", confidence=0.9)
    rules.add("towel", "towel", confidence=0.95)
    rules.add("robot", "robot", confidence=0.95)
    return {
        "image": image,
        "objects": objects,
        "rules": rules,
        "masks": {"spoon": spoon, "spatula": spatula, "towel": towel, "robot": robot},
    }


def selection_trap_scene(h=48, w=64):
    """Confusion fixture where naive top-confidence selection picks the imposter.

    The lookalike outranks the target on the target prompt (0.85 vs 0.8), and
    the target leaks into the lookalike's channel at 0.6, so a wrong pick
    sends the genuine target into the inpainting mask.
    """
    fx = worked_example_scene(h, w)
    rules = fx["rules"]
    rules.add("spatula", "spoon", confidence=0.85)
    rules.add("spoon", "spatula", confidence=0.6)
    return fx
