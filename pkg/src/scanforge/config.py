"""Pipeline configuration: paper-default values, TOML file + flag overrides."""
from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InvalidParameterError
from .local_align import LocalAlignConfig
from .rectify import CannyParams
from .registration import RansacParams

SEED_ENV_VAR = "SCANFORGE_SEED"

EVAL_SIZES_DEFAULT = (176, 256, 384, 576, "full")


@dataclass(frozen=True)
class RectifyOptions:
    width: int = 1080
    height: int = 720

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError("rectified size must be positive")


@dataclass(frozen=True)
class StyleOptions:
    k: int = 100
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InvalidParameterError("style count k must be >= 1")


@dataclass(frozen=True)
class BalanceOptions:
    s_low: float = 0.01
    s_high: float = 0.01


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    jobs: int = 0  # 0 = all available cores
    canny: CannyParams = field(default_factory=CannyParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    balance: BalanceOptions = field(default_factory=BalanceOptions)
    rectify: RectifyOptions = field(default_factory=RectifyOptions)
    style: StyleOptions = field(default_factory=StyleOptions)
    train_align: LocalAlignConfig = field(default_factory=LocalAlignConfig)
    eval_align: LocalAlignConfig = field(
        default_factory=lambda: LocalAlignConfig(
            frame_width=1072, frame_height=720, second_crop=0.80, stride_frac=0.50, patch_size=176
        )
    )
    eval_sizes: tuple = EVAL_SIZES_DEFAULT

    def resolved_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(
            self,
            seed=seed,
            ransac=replace(self.ransac, seed=seed),
            train_align=replace(self.train_align, seed=seed),
            eval_align=replace(self.eval_align, seed=seed),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eval_sizes"] = list(self.eval_sizes)
        d["derived"] = {
            "train_align": self.train_align.describe(),
            "eval_align": {
                str(s): _describe_eval_size(self.eval_align, s) for s in self.eval_sizes
            },
        }
        return d


def _describe_eval_size(base: LocalAlignConfig, size) -> dict:
    from .dataset import eval_config_for_size

    try:
        _, cfg = eval_config_for_size(base, size)
        return cfg.describe()
    except InvalidParameterError as exc:
        return {"error": str(exc)}


def _section(data: dict, name: str, cls, known_extra: dict | None = None):
    section = data.pop(name, {})
    if not isinstance(section, dict):
        raise InvalidParameterError(f"config section [{name}] must be a table")
    valid = {f.name for f in fields(cls)}
    unknown = set(section) - valid
    if unknown:
        raise InvalidParameterError(f"unknown keys in [{name}]: {sorted(unknown)}")
    merged = dict(known_extra or {})
    merged.update(section)
    return cls(**merged)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Resolve the pipeline config: defaults <- TOML file <- explicit overrides.

    Unknown keys anywhere are rejected. The seed falls back to the
    SCANFORGE_SEED environment variable when neither flag nor file sets it.
    """
    data: dict = {}
    if path is not None:
        raw = Path(path).read_bytes()
        try:
            data = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise InvalidParameterError(f"{path}: {exc}") from exc

    overrides = dict(overrides or {})

    seed = data.pop("seed", None)
    if "seed" in overrides:
        seed = overrides.pop("seed")
    if seed is None:
        env = os.environ.get(SEED_ENV_VAR)
        seed = int(env) if env else 0
    jobs = data.pop("jobs", 0)
    if "jobs" in overrides and overrides["jobs"] is not None:
        jobs = overrides.pop("jobs")
    else:
        overrides.pop("jobs", None)

    eval_sizes = data.pop("eval_sizes", list(EVAL_SIZES_DEFAULT))

    canny = _section(data, "canny", CannyParams)
    ransac = _section(data, "ransac", RansacParams)
    balance = _section(data, "balance", BalanceOptions)
    rect = _section(data, "rectify", RectifyOptions)
    style = _section(data, "style", StyleOptions)
    train_align = _section(data, "train_align", LocalAlignConfig)
    eval_align = _section(
        data,
        "eval_align",
        LocalAlignConfig,
        {
            "frame_width": 1072,
            "frame_height": 720,
            "second_crop": 0.80,
            "stride_frac": 0.50,
            "patch_size": 176,
        },
    )
    if data:
        raise InvalidParameterError(f"unknown top-level config keys: {sorted(data)}")
    if overrides:
        raise InvalidParameterError(f"unknown override keys: {sorted(overrides)}")

    cfg = PipelineConfig(
        seed=int(seed),
        jobs=int(jobs),
        canny=canny,
        ransac=ransac,
        balance=balance,
        rectify=rect,
        style=style,
        train_align=train_align,
        eval_align=eval_align,
        eval_sizes=tuple(eval_sizes),
    )
    return cfg.with_seed(int(seed))
