"""Experiment configuration: nested dataclasses loaded from TOML or JSON."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .camera import DEFAULT_INTRINSICS, CameraIntrinsics
from .detector import NoiseConfig
from .epnp import RansacConfig
from .fusion import FusionConfig
from .matching import DEFAULT_GAMMA
from .sampler import SamplerConfig, TruncNormal

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    n_frames: int = 100
    seed: int = 0
    gamma: float = DEFAULT_GAMMA
    null_weight: float = 1.0
    shuffle_queries: bool = False
    workers: int = 1
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def _sampler(data: dict) -> SamplerConfig:
    data = dict(data)
    for key in ("camera_r", "focus_r"):
        if key in data:
            tn = data[key]
            data[key] = TruncNormal(**tn) if isinstance(tn, dict) else TruncNormal(*tn)
    for key in ("camera_theta", "focus_theta", "focus_phi"):
        if key in data:
            data[key] = tuple(float(x) for x in data[key])
    return _build(SamplerConfig, data, "sampler")


def config_from_dict(data: dict) -> PipelineConfig:
    data = dict(data)
    parts = {}
    if "sampler" in data:
        parts["sampler"] = _sampler(data.pop("sampler"))
    if "noise" in data:
        parts["noise"] = _build(NoiseConfig, data.pop("noise"), "noise")
    if "ransac" in data:
        parts["ransac"] = _build(RansacConfig, data.pop("ransac"), "ransac")
    if "fusion" in data:
        fc = _build(FusionConfig, data.pop("fusion"), "fusion")
        if fc.scalar_d not in ("d1", "d3", "mean"):
            raise ConfigError(f"fusion.scalar_d must be d1, d3 or mean, got {fc.scalar_d!r}")
        if fc.sigma_eta_method not in ("empirical", "concentrated"):
            raise ConfigError(f"unknown fusion.sigma_eta_method {fc.sigma_eta_method!r}")
        parts["fusion"] = fc
    if "intrinsics" in data:
        try:
            parts["intrinsics"] = CameraIntrinsics.from_dict(data.pop("intrinsics"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"[intrinsics]: {exc}") from exc
    cfg = _build(PipelineConfig, {**data, **parts}, "top level")
    if cfg.n_frames < 0 or cfg.workers < 1:
        raise ConfigError("n_frames must be >= 0 and workers >= 1")
    return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        raw = path.read_bytes()
        data = tomllib.loads(raw.decode()) if path.suffix == ".toml" else json.loads(raw)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def worker_count(requested: int) -> int:
    cap = os.environ.get("POSEFUSE_THREADS")
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"POSEFUSE_THREADS must be an integer, got {cap!r}") from exc
    return max(1, requested)
