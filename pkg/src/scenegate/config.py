"""Layered run configuration: defaults < config file < environment < flags."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .distiller import GatingConfig
from .errors import InvalidConfig
from .refinement import RefinementConfig

ENV_PREFIX = "SCENEGATE_"


@dataclass
class RunConfig:
    instruction: str | None = None
    domain: str = "kitchen"
    lexicon: str | None = None  # path; None -> packaged defaults
    grammar: str | None = None
    eta: float = 0.3
    connectivity: int = 8
    rd: int = 3
    rs: int = 6
    re: int = 5
    binarize_threshold: float = 0.5
    blur_sigma: float = 2.0
    seg_backend: str = "mock"
    seg_endpoint: str | None = None
    inpaint_backend: str = "diffusion"
    inpaint_endpoint: str | None = None
    fixture: str | None = None
    fail_open: bool = True
    seed: int = 0
    jobs: int = 1
    out: str | None = None
    tau_target: float = 0.9
    tau_residual: float = 0.05
    tau_anchor: float = 0.9
    bg_epsilon: int = 25

    def validate(self) -> "RunConfig":
        GatingConfig(
            r_dist=self.rd,
            r_safe=self.rs,
            r_robot=self.re,
            binarize_threshold=self.binarize_threshold,
        )
        RefinementConfig(eta=self.eta, connectivity=self.connectivity)
        if self.blur_sigma < 0:
            raise InvalidConfig("blur sigma must be >= 0")
        if self.seg_backend not in ("mock", "wire", "fixture"):
            raise InvalidConfig(f"unknown segmentation backend {self.seg_backend!r}")
        if self.inpaint_backend not in ("mean", "diffusion", "wire"):
            raise InvalidConfig(f"unknown inpainting backend {self.inpaint_backend!r}")
        if self.seg_backend == "wire" and not self.seg_endpoint:
            raise InvalidConfig("--seg-backend wire requires --seg-endpoint")
        if self.inpaint_backend == "wire" and not self.inpaint_endpoint:
            raise InvalidConfig("--inpaint-backend wire requires --inpaint-endpoint")
        if self.seg_backend == "fixture" and not self.fixture:
            raise InvalidConfig("--seg-backend fixture requires --fixture")
        if self.jobs < 1:
            raise InvalidConfig("jobs must be >= 1")
        if not (0.0 < self.tau_target <= 1.0 and 0.0 < self.tau_anchor <= 1.0):
            raise InvalidConfig("preservation thresholds must be in (0, 1]")
        if not (0.0 <= self.tau_residual <= 1.0):
            raise InvalidConfig("residual threshold must be in [0, 1]")
        return self

    def gating(self) -> GatingConfig:
        return GatingConfig(
            r_dist=self.rd,
            r_safe=self.rs,
            r_robot=self.re,
            binarize_threshold=self.binarize_threshold,
        )

    def refinement(self) -> RefinementConfig:
        return RefinementConfig(eta=self.eta, connectivity=self.connectivity)


def _coerce(name: str, kind, raw: str):
    if kind in ("bool", bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(f"cannot parse boolean {name}={raw!r}")
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise InvalidConfig(f"cannot parse {name}={raw!r}: {exc}") from exc
    return raw


_FIELD_TYPES = {
    "eta": float,
    "connectivity": int,
    "rd": int,
    "rs": int,
    "re": int,
    "binarize_threshold": float,
    "blur_sigma": float,
    "fail_open": bool,
    "seed": int,
    "jobs": int,
    "tau_target": float,
    "tau_residual": float,
    "tau_anchor": float,
    "bg_epsilon": int,
}


def load_run_config(
    config_file: str | Path | None = None,
    env: dict | None = None,
    overrides: dict | None = None,
) -> RunConfig:
    """Merge configuration sources, lowest precedence first, then re-validate."""
    merged = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
    valid = set(merged)

    if config_file:
        try:
            raw = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config file {config_file}: {exc}") from exc
        unknown = set(raw) - valid
        if unknown:
            raise InvalidConfig(f"unknown config keys in {config_file}: {sorted(unknown)}")
        merged.update(raw)

    env = os.environ if env is None else env
    for name in valid:
        key = ENV_PREFIX + name.upper()
        if key in env:
            merged[name] = _coerce(name, _FIELD_TYPES.get(name, str), env[key])

    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in valid:
            raise InvalidConfig(f"unknown config override {name!r}")
        merged[name] = value

    return RunConfig(**merged).validate()
