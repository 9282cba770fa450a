"""Experiment configuration: a flat JSON document, optionally overridden by CLI flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

POLICIES = ("full", "warm_only", "etc_oracle_warm", "uniform_pure", "radius_probe")
R_MODES = ("fixed", "lower_bound_cumulative", "lower_bound_simple")
THETA_MODES = ("uniform", "fixed")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One sweep over ``d_grid x n_grid`` with ``seeds`` runs per cell.

    ``r_mode`` is ``"lower_bound_cumulative"``, ``"lower_bound_simple"`` or
    ``"fixed"``; in the fixed case ``r`` gives the radius (JSON may also spell
    this ``{"fixed": 0.5}``). ``etc_scale`` defaults to ``constant_scale``;
    ``mix_weight`` of ``None`` keeps the default ``min(1/2, sqrt(alpha)/4)``.
    """

    policy: str = "full"
    d_grid: list[int] = field(default_factory=lambda: [5])
    n_grid: list[int] = field(default_factory=lambda: [4096])
    r_mode: str = "fixed"
    r: float = 1.0
    noise_sigma: float = 1.0
    constant_scale: float = 1.0
    seeds: int = 10
    base_seed: int = 0
    output_path: str = "results.csv"
    etc_scale: float | None = None
    mix_weight: float | None = None
    alpha: float = 1.0 / 64.0
    theta_mode: str = "uniform"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.r_mode not in R_MODES:
            raise ConfigError(f"r_mode must be one of {R_MODES}, got {self.r_mode!r}")
        if self.theta_mode not in THETA_MODES:
            raise ConfigError(f"theta_mode must be one of {THETA_MODES}, got {self.theta_mode!r}")
        if not self.d_grid or not self.n_grid:
            raise ConfigError("d_grid and n_grid must be non-empty")
        if any(not isinstance(d, int) or d < 1 for d in self.d_grid):
            raise ConfigError(f"d_grid must hold positive integers, got {self.d_grid}")
        if any(not isinstance(n, int) or n < 1 for n in self.n_grid):
            raise ConfigError(f"n_grid must hold positive integers, got {self.n_grid}")
        if not isinstance(self.seeds, int) or self.seeds < 1:
            raise ConfigError("seeds must be a positive integer")
        if not 0.0 < self.r <= 1.0:
            raise ConfigError("r must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.constant_scale <= 0 or (self.etc_scale is not None and self.etc_scale <= 0):
            raise ConfigError("scales must be positive")
        if self.mix_weight is not None and not 0.0 < self.mix_weight <= 0.5:
            raise ConfigError("mix_weight must lie in (0, 1/2]")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")

    @property
    def etc_constant_scale(self) -> float:
        return self.constant_scale if self.etc_scale is None else self.etc_scale

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        if isinstance(data.get("r_mode"), dict):
            spec = data["r_mode"]
            if set(spec) != {"fixed"}:
                raise ConfigError(f"r_mode object must be {{'fixed': r}}, got {spec}")
            data["r_mode"] = "fixed"
            data["r"] = spec["fixed"]
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)
