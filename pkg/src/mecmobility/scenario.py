"""Scenario configuration, frame calendar and seeded random streams."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

# -174 dBm/Hz over 10 MHz, in watts
DEFAULT_NOISE_POWER = 10 ** ((-174 + 70 - 30) / 10)


@dataclass(frozen=True)
class TaskSpec:
    input_bits: float = 5000.0
    cycles_per_bit: float = 2640.0
    deadline: float = 0.01
    arrival_prob: float = 0.5

    def __post_init__(self):
        if self.input_bits <= 0:
            raise ValueError("input_bits must be positive")
        if self.cycles_per_bit <= 0:
            raise ValueError("cycles_per_bit must be positive")
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError("arrival_prob must lie in [0, 1]")

    @property
    def total_cycles(self) -> float:
        """CPU cycles needed for one whole task."""
        return self.cycles_per_bit * self.input_bits


@dataclass(frozen=True)
class FrameSchedule:
    slot_len: float = 0.01
    frame_size: int = 500
    migration_delay: int = 5
    horizon: int = 2500

    def __post_init__(self):
        if self.slot_len <= 0:
            raise ValueError("slot_len must be positive")
        if self.frame_size < 1:
            raise ValueError("frame_size must be >= 1")
        if not 0 <= self.migration_delay < self.frame_size:
            raise ValueError("migration_delay must satisfy 0 <= C < T")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def alpha(self) -> float:
        return self.migration_delay / self.frame_size

    @property
    def frame_duration(self) -> float:
        return self.slot_len * self.frame_size

    @property
    def num_slots(self) -> int:
        return self.frame_size * self.horizon


@dataclass(frozen=True)
class ScenarioConfig:
    task: TaskSpec = field(default_factory=TaskSpec)
    schedule: FrameSchedule = field(default_factory=FrameSchedule)
    num_bs: int = 25
    area_side: float = 2000.0
    bandwidth: float = 1e7
    noise_power: float = DEFAULT_NOISE_POWER
    peak_power: float = 1.0
    compute_rate_range: tuple[float, float] = (1e10, 2e10)
    control_V: float = 5000.0
    reliability_eps: float = 1e-3
    user_speed: float = 5.0
    hysteresis_margin: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.task.deadline > self.schedule.slot_len:
            raise ValueError("task deadline must not exceed the slot length")
        if self.num_bs < 1:
            raise ValueError("num_bs must be >= 1")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        if self.bandwidth <= 0 or self.noise_power <= 0 or self.peak_power <= 0:
            raise ValueError("bandwidth, noise_power and peak_power must be positive")
        lo, hi = self.compute_rate_range
        if not 0 < lo <= hi:
            raise ValueError("compute_rate_range must satisfy 0 < f_lo <= f_hi")
        object.__setattr__(self, "compute_rate_range", (float(lo), float(hi)))
        if self.control_V < 0:
            raise ValueError("control_V must be non-negative")
        if not 0 < self.reliability_eps < 1:
            raise ValueError("reliability_eps must lie in (0, 1)")
        if self.user_speed <= 0:
            raise ValueError("user_speed must be positive")
        if self.hysteresis_margin < 0:
            raise ValueError("hysteresis_margin must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["compute_rate_range"] = list(self.compute_rate_range)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        _check_keys(cls, data, "scenario")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key == "task":
                _check_keys(TaskSpec, value, "task")
                kwargs[key] = TaskSpec(**value)
            elif key == "schedule":
                _check_keys(FrameSchedule, value, "schedule")
                kwargs[key] = FrameSchedule(**value)
            elif key == "compute_rate_range":
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with changes; dotted keys reach into ``task``/``schedule``."""
        nested: dict[str, dict[str, Any]] = {}
        flat: dict[str, Any] = {}
        for key, value in changes.items():
            if "." in key:
                head, tail = key.split(".", 1)
                nested.setdefault(head, {})[tail] = value
            else:
                flat[key] = value
        for head, sub in nested.items():
            if head not in ("task", "schedule"):
                raise KeyError(f"unknown section {head!r}")
            flat[head] = dataclasses.replace(getattr(self, head), **sub)
        return dataclasses.replace(self, **flat)


def _check_keys(cls, data, where):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML scenario file; missing keys take the default values."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return ScenarioConfig.from_dict(data)


def dump_config(cfg: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def slot_index_sets(k: int, migrated: bool, schedule: FrameSchedule) -> tuple[range, range]:
    """Return (migration slots, offloadable slots) of frame ``k``."""
    if k < 0:
        raise ValueError("frame index must be >= 0")
    start = k * schedule.frame_size
    end = start + schedule.frame_size
    cut = start + (schedule.migration_delay if migrated else 0)
    return range(start, cut), range(cut, end)


# stream identifiers, fixed forever: changing them changes every trajectory
ARRIVALS, FADING, COMPUTE, MOBILITY, SPEED = 0, 1, 2, 3, 4


class RngStreams:
    """Counter-based random substreams derived from one master seed.

    Every (stream, index...) tuple maps to its own ``numpy`` generator via
    ``SeedSequence.spawn_key``, so a draw never depends on how many numbers
    another stream consumed.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, stream: int, *index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(stream, *index))
        return np.random.default_rng(ss)

    def arrivals(self, k: int, rho: float, frame_size: int, users: int = 1) -> np.ndarray:
        """Bernoulli task-arrival indicators for frame ``k``, shape (T, users)."""
        return self.generator(ARRIVALS, k).random((frame_size, users)) < rho

    def fading(self, k: int, frame_size: int, users: int = 1) -> np.ndarray:
        """Unit-mean exponential small-scale gains of each user's serving link."""
        return self.generator(FADING, k).exponential(1.0, (frame_size, users))

    def mobility(self, user: int) -> np.random.Generator:
        return self.generator(MOBILITY, user)


def sample_arrival(rng: np.random.Generator, rho: float) -> int:
    """Single Bernoulli(rho) arrival indicator."""
    return int(rng.random() < rho)
