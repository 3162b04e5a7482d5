"""Text-prompted instance segmentation behind one interface.

Three interchangeable backends:

* MockSegmentationBackend — table-driven detections over known scene
  objects, with optional seeded-Gaussian confidences. This is how the
  harness reifies semantic-confusion failure modes deterministically.
* WireSegmentationBackend — client for the line protocol in `wire`,
  used to plug in a real neural segmenter.
* FixtureSegmentationBackend — byte-exact replay of recorded exchanges,
  for golden tests with no server running.

Every concept is queried independently; a backend never sees which other
concepts are part of the same scene pass. That independence is exactly
why downstream refinement exists.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import wire
from .errors import BackendUnavailable, DimensionMismatch, ProtocolError
from .imio import ensure_image
from .masks import as_mask
from .util import stable_seed

logger = logging.getLogger("scenegate.segmentation")


@dataclass(frozen=True)
class Instance:
    """One segmentation hypothesis: mask, confidence, and the query that produced it."""

    mask: np.ndarray
    confidence: float
    concept: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class DetectionRule:
    """How one (object label, query concept) pair answers.

    Either a fixed confidence, or a seeded normal (mean, std) clipped to
    [0, 1]. Sampling depends only on (seed, object uid, query), never on
    call order.
    """

    confidence: float | None = None
    mean: float | None = None
    std: float = 0.0

    def resolve(self, seed: int, object_uid: str, concept: str) -> float:
        if self.confidence is not None:
            return float(self.confidence)
        if self.mean is None:
            raise ValueError("rule needs either a confidence or a mean")
        if self.std == 0.0:
            return float(np.clip(self.mean, 0.0, 1.0))
        rng = np.random.default_rng(stable_seed(seed, object_uid, concept))
        return float(np.clip(rng.normal(self.mean, self.std), 0.0, 1.0))


@dataclass
class ConfusionModel:
    """Map (true object label, query concept) -> detection rule."""

    rules: dict[tuple[str, str], DetectionRule] = field(default_factory=dict)

    def get(self, label: str, concept: str) -> DetectionRule | None:
        return self.rules.get((label, concept))

    def add(self, label: str, concept: str, **kwargs) -> None:
        self.rules[(label, concept)] = DetectionRule(**kwargs)

    def to_json(self) -> list[dict]:
        out = []
        for (label, concept), rule in sorted(self.rules.items()):
            entry = {"label": label, "concept": concept}
            if rule.confidence is not None:
                entry["confidence"] = rule.confidence
            else:
                entry["mean"] = rule.mean
                entry["std"] = rule.std
            out.append(entry)
        return out

    @classmethod
    def from_json(cls, raw: list[dict]) -> "ConfusionModel":
        model = cls()
        for entry in raw:
            model.rules[(entry["label"], entry["concept"])] = DetectionRule(
                confidence=entry.get("confidence"),
                mean=entry.get("mean"),
                std=entry.get("std", 0.0),
            )
        return model


@dataclass(frozen=True)
class MockSceneObject:
    """Ground-truth object the mock backend can detect: uid, label, t=0 mask."""

    uid: str
    label: str
    mask: np.ndarray


class SegmentationBackend:
    """Base: validates inputs/outputs and counts calls (thread-safe counter)."""

    name = "base"

    def __init__(self):
        self.calls = 0
        self._count_lock = threading.Lock()

    def segment(self, image: np.ndarray, concept: str) -> list[Instance]:
        image = ensure_image(image)
        if not concept:
            raise ValueError("concept must be non-empty")
        with self._count_lock:
            self.calls += 1
        shape = image.shape[:2]
        out = []
        for inst in self._segment(image, concept):
            if inst.mask.shape != shape:
                raise DimensionMismatch(
                    f"backend {self.name} returned mask {inst.mask.shape} for image {shape}"
                )
            if not inst.mask.any():
                logger.warning("dropping zero-area instance from %s for %r", self.name, concept)
                continue
            out.append(inst)
        return out

    def _segment(self, image: np.ndarray, concept: str) -> list[Instance]:
        raise NotImplementedError


class MockSegmentationBackend(SegmentationBackend):
    """Deterministic detections driven entirely by a confusion table."""

    name = "mock"

    def __init__(self, objects: list[MockSceneObject], confusion: ConfusionModel, seed: int = 0):
        super().__init__()
        self.objects = list(objects)
        self.confusion = confusion
        self.seed = seed
        for obj in self.objects:
            obj.mask.setflags(write=False)

    def _segment(self, image: np.ndarray, concept: str) -> list[Instance]:
        instances = []
        for obj in self.objects:
            rule = self.confusion.get(obj.label, concept)
            if rule is None:
                continue
            conf = rule.resolve(self.seed, obj.uid, concept)
            instances.append(Instance(mask=as_mask(obj.mask), confidence=conf, concept=concept))
        return instances


class WireSegmentationBackend(SegmentationBackend):
    name = "wire"

    def __init__(self, client: wire.WireClient, record_to: list[dict] | None = None):
        super().__init__()
        self.client = client
        self.record_to = record_to  # optional verbatim request/response capture

    def _segment(self, image: np.ndarray, concept: str) -> list[Instance]:
        request = wire.segment_request(self.client.next_id("segment"), image, concept)
        response = self.client.call(request)
        if self.record_to is not None:
            self.record_to.append({"request": request, "response": response})
        pairs = wire.parse_instances(response, image.shape[:2])
        return [Instance(mask=m, confidence=c, concept=concept) for m, c in pairs]


def fixture_key(request: dict) -> str:
    """Canonical lookup key for a recorded exchange: the request minus its id."""
    payload = {k: v for k, v in request.items() if k != "id"}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def load_fixture_records(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


class FixtureSegmentationBackend(SegmentationBackend):
    """Replays recorded wire exchanges byte-identically."""

    name = "fixture"

    def __init__(self, records: list[dict]):
        super().__init__()
        self._responses = {
            fixture_key(rec["request"]): rec["response"]
            for rec in records
            if rec["request"].get("op") == "segment"
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureSegmentationBackend":
        return cls(load_fixture_records(path))

    def _segment(self, image: np.ndarray, concept: str) -> list[Instance]:
        request = wire.segment_request("replay", image, concept)
        key = fixture_key(request)
        if key not in self._responses:
            raise BackendUnavailable(f"no recorded fixture for concept {concept!r} on this image")
        response = self._responses[key]
        if "error" in response:
            raise BackendUnavailable(f"recorded backend error: {response['error']}")
        pairs = wire.parse_instances(response, image.shape[:2])
        return [Instance(mask=m, confidence=c, concept=concept) for m, c in pairs]


def segment_set(
    backend: SegmentationBackend, image: np.ndarray, concepts: list[str]
) -> dict[str, list[Instance]]:
    """Independent per-concept queries; result for a concept never depends on the others."""
    results: dict[str, list[Instance]] = {}
    failures: dict[str, Exception] = {}
    for concept in concepts:
        if concept in results:
            continue
        try:
            results[concept] = backend.segment(image, concept)
        except (BackendUnavailable, ProtocolError) as exc:
            failures[concept] = exc
    if failures:
        detail = "; ".join(f"{c!r}: {e}" for c, e in failures.items())
        raise BackendUnavailable(f"segmentation failed for {detail}")
    return results


def union_channel(instances: list[Instance], shape: tuple[int, int]) -> np.ndarray:
    """Pixelwise union of instance masks for one concept channel."""
    out = np.zeros(shape, dtype=bool)
    for inst in instances:
        if inst.mask.shape != tuple(shape):
            raise DimensionMismatch(
                f"instance mask {inst.mask.shape} does not match channel shape {tuple(shape)}"
            )
        out |= inst.mask
    return out
