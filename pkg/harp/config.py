from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from enum import StrEnum
from pathlib import Path

import yaml

_LOGGER = logging.getLogger(__name__)

SEED_ENV_VAR = "HARP_SEED"
DEFAULT_THRESHOLD = 100
DEFAULT_MAX_LEVELS = 32


class Method(StrEnum):
    DEEPWALK = "deepwalk"
    LINE = "line"
    NODE2VEC = "node2vec"

    @property
    def uses_walks(self) -> bool:
        return self is not Method.LINE


class Objective(StrEnum):
    HIERARCHICAL_SOFTMAX = "hierarchical_softmax"
    NEGATIVE_SAMPLING = "negative_sampling"


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 128
    window: int = 10
    walks_per_node: int = 40
    walk_length: int = 10
    line_iterations: int = 50
    negatives: int = 5
    lr_start: float = 0.025
    lr_end: float = 0.001
    objective: Objective = Objective.HIERARCHICAL_SOFTMAX
    p: float = 1.0
    q: float = 1.0
    seed: int = 0
    thread_count: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "objective", Objective(self.objective))
        for name in ("dim", "window", "walks_per_node", "walk_length", "line_iterations"):
            value = getattr(self, name)
            if value < 1:
                raise ValueError(f"Invalid {name}: {value!r}")
        if self.negatives < 0:
            raise ValueError(f"Invalid negatives: {self.negatives!r}")
        if not self.lr_start >= self.lr_end >= 0:
            raise ValueError(
                f"Learning rates must satisfy lr_start >= lr_end >= 0, "
                f"got {self.lr_start} and {self.lr_end}"
            )
        if self.p <= 0 or self.q <= 0:
            raise ValueError(f"Invalid node2vec parameters: p={self.p}, q={self.q}")
        if self.thread_count < 1:
            raise ValueError(f"Invalid thread_count: {self.thread_count!r}")

    @classmethod
    def for_method(cls, method: Method | str, **overrides: object) -> TrainConfig:
        match Method(method):
            case Method.DEEPWALK:
                preset: dict[str, object] = {
                    "dim": 128,
                    "objective": Objective.HIERARCHICAL_SOFTMAX,
                }
            case Method.NODE2VEC:
                preset = {"dim": 128, "objective": Objective.NEGATIVE_SAMPLING}
            case Method.LINE:
                preset = {"dim": 64, "objective": Objective.NEGATIVE_SAMPLING}
        preset.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**preset)  # type: ignore[arg-type]

    def with_seed(self, seed: int) -> TrainConfig:
        return replace(self, seed=seed)

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["objective"] = str(self.objective)
        return data


@dataclass(frozen=True)
class HarpConfig:
    method: Method
    train: TrainConfig
    threshold: int = DEFAULT_THRESHOLD
    max_levels: int = DEFAULT_MAX_LEVELS
    seed: int = 0
    refine: TrainConfig | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if self.threshold < 1:
            raise ValueError(f"Invalid threshold: {self.threshold!r}")
        if self.max_levels < 0:
            raise ValueError(f"Invalid max_levels: {self.max_levels!r}")
        if self.refine is not None and self.refine.dim != self.train.dim:
            raise ValueError("Refinement settings must keep the embedding dimension.")

    @classmethod
    def for_method(cls, method: Method | str, **overrides: object) -> HarpConfig:
        threshold = overrides.pop("threshold", None)
        max_levels = overrides.pop("max_levels", None)
        seed = overrides.get("seed")
        train = TrainConfig.for_method(method, **overrides)
        return cls(
            Method(method),
            train,
            threshold=int(threshold) if threshold is not None else DEFAULT_THRESHOLD,  # type: ignore[arg-type]
            max_levels=int(max_levels) if max_levels is not None else DEFAULT_MAX_LEVELS,  # type: ignore[arg-type]
            seed=int(seed) if seed is not None else train.seed,  # type: ignore[arg-type]
        )

    def level_config(self, level: int, coarsest: int) -> TrainConfig:
        if level < coarsest and self.refine is not None:
            return self.refine
        return self.train

    def to_dict(self) -> dict[str, object]:
        return {
            "method": str(self.method),
            "train": self.train.to_dict(),
            "threshold": self.threshold,
            "max_levels": self.max_levels,
            "seed": self.seed,
            "refine": self.refine.to_dict() if self.refine is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> HarpConfig:
        refine = data.get("refine")
        return cls(
            Method(str(data["method"])),
            TrainConfig(**data["train"]),  # type: ignore[arg-type]
            threshold=int(data.get("threshold", DEFAULT_THRESHOLD)),  # type: ignore[arg-type]
            max_levels=int(data.get("max_levels", DEFAULT_MAX_LEVELS)),  # type: ignore[arg-type]
            seed=int(data.get("seed", 0)),  # type: ignore[arg-type]
            refine=TrainConfig(**refine) if isinstance(refine, dict) else None,
        )


_CONFIG_KEYS = {item.name for item in fields(TrainConfig)} | {"threshold", "max_levels"}


def load_config_file(path: Path | str) -> dict[str, object]:
    source = Path(path)
    data = yaml.safe_load(source.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Invalid config file {source.as_posix()}: expected a mapping")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"Unknown config keys in {source.as_posix()}: {', '.join(unknown)}")
    _LOGGER.info("Loaded config file: %s", source.as_posix())
    return data


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"Invalid {SEED_ENV_VAR}: {raw!r}") from exc
