"""Per-slot uplink offloading: latency, energy, power thresholds, optimal power."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig

INFEASIBLE = math.inf  # p_min sentinel: compute time alone already misses the deadline


@dataclass(frozen=True)
class SlotDecisionContext:
    gain: float
    compute_rate: float
    queue_len: float
    control_V: float
    during_migration: bool
    arrival: int

    def __post_init__(self):
        if self.gain <= 0 or self.compute_rate <= 0:
            raise ValueError("gain and compute_rate must be positive")


@dataclass(frozen=True)
class SlotOutcome:
    power: float
    failed: int
    energy: float
    dropped: bool


@dataclass(frozen=True)
class OffloadModel:
    """Task and radio constants shared by every per-slot computation."""

    input_bits: float
    total_cycles: float
    deadline: float
    bandwidth: float
    noise_power: float
    peak_power: float

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "OffloadModel":
        return cls(
            input_bits=cfg.task.input_bits,
            total_cycles=cfg.task.total_cycles,
            deadline=cfg.task.deadline,
            bandwidth=cfg.bandwidth,
            noise_power=cfg.noise_power,
            peak_power=cfg.peak_power,
        )

    def time_budget(self, f):
        """Transmission time left after remote computing, [tau_d - xi/f]^+."""
        return np.maximum(self.deadline - self.total_cycles / np.asarray(f, dtype=float), 0.0)

    def snr_requirement(self, f):
        """2^(L / (W budget)) - 1; ``inf`` when the budget is zero."""
        budget = self.time_budget(f)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(budget > 0, np.expm1(self.input_bits / (self.bandwidth * budget) * math.log(2.0)),
                            np.inf)

    def latency(self, h, f, p):
        rate = self.bandwidth * np.log2(1.0 + np.asarray(p) * h / self.noise_power)
        return _scalar(self.input_bits / rate + self.total_cycles / np.asarray(f, dtype=float))

    def energy(self, h, p):
        """Transmit energy p * L / rate of one offload at power ``p``."""
        p = np.asarray(p, dtype=float)
        rate = self.bandwidth * np.log2(1.0 + p * h / self.noise_power)
        return _scalar(self.input_bits * p / rate)

    def p_min(self, h, f):
        """Smallest power meeting the deadline; ``INFEASIBLE`` if none exists."""
        req = self.snr_requirement(f)
        return _scalar(self.noise_power / np.asarray(h, dtype=float) * req)

    def p_max(self, f, Q, V):
        """Largest power worth spending on a task at drop price ``Q``.

        ``V == 0`` makes energy free, so the cap is the peak power (or 0 when
        even that cannot meet the deadline).
        """
        budget = self.time_budget(f)
        Q = np.asarray(Q, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            cap = np.where(V > 0, Q / (V * budget), np.inf)
        cap = np.where(budget > 0, np.minimum(cap, self.peak_power), 0.0)
        return _scalar(cap)

    def optimal_power(self, ctx: SlotDecisionContext) -> SlotOutcome:
        """Threshold rule: offload at p_min if it does not exceed p_max, else drop."""
        if not ctx.arrival:
            return SlotOutcome(0.0, 0, 0.0, False)
        if ctx.during_migration:
            return SlotOutcome(0.0, 1, 0.0, True)
        pmin = self.p_min(ctx.gain, ctx.compute_rate)
        pmax = self.p_max(ctx.compute_rate, ctx.queue_len, ctx.control_V)
        if pmin <= pmax and pmin != INFEASIBLE:
            return SlotOutcome(pmin, 0, pmin * float(self.time_budget(ctx.compute_rate)), False)
        return SlotOutcome(0.0, 1, 0.0, True)

    def offload_slots(self, h, f, cap, arrivals, offloadable):
        """Vectorised threshold rule for a block of slots.

        ``cap`` is the power threshold in force (p_max for the proposed
        controller, a reliability-mode cap for the benchmarks).  Returns
        (power, failed, energy) arrays shaped like ``h``.
        """
        budget = self.time_budget(f)
        pmin = self.noise_power / h * self.snr_requirement(f)
        go = arrivals & offloadable & (pmin <= cap) & (budget > 0)
        power = np.where(go, pmin, 0.0)
        failed = arrivals & ~go
        return power, failed, power * budget


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x
