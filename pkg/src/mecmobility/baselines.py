"""Handover benchmarks: RSS-only, RSS with hysteresis, and their power rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .offloading import OffloadModel, SlotDecisionContext, SlotOutcome

SAVING_FRACTION = 0.05  # power cap in energy-saving mode, as a fraction of peak


@dataclass
class BenchmarkState:
    """Running reliability bookkeeping of a benchmark user."""

    association: int
    hysteresis_margin: float = 2.0
    failures: int = 0
    elapsed: int = 0

    @property
    def failure_rate(self) -> float:
        return self.failures / self.elapsed if self.elapsed else 0.0


def rss_only_decision(H, current: int) -> tuple[int, bool]:
    """Strongest large-scale gain wins outright (lowest index on ties)."""
    best = int(np.argmax(H))
    return best, best != current


def rss_hysteresis_decision(H, current: int, margin: float) -> tuple[int, bool]:
    """Move to the strongest other BS only if it beats the current one by (1 + margin)."""
    H = np.asarray(H, dtype=float)
    if len(H) == 1:
        return current, False
    others = H.copy()
    others[current] = -np.inf
    cand = int(np.argmax(others))
    if H[cand] > (1.0 + margin) * H[current]:
        return cand, True
    return current, False


def benchmark_cap(failure_rate, eps: float, peak_power: float):
    """Peak power while the running failure rate exceeds eps, 5% of it otherwise."""
    return np.where(np.asarray(failure_rate) > eps, peak_power, SAVING_FRACTION * peak_power)


def benchmark_power(model: OffloadModel, ctx: SlotDecisionContext, failure_rate: float,
                    eps: float) -> SlotOutcome:
    if not ctx.arrival:
        return SlotOutcome(0.0, 0, 0.0, False)
    if ctx.during_migration:
        return SlotOutcome(0.0, 1, 0.0, True)
    cap = float(benchmark_cap(failure_rate, eps, model.peak_power))
    pmin = model.p_min(ctx.gain, ctx.compute_rate)
    if pmin <= cap:
        return SlotOutcome(pmin, 0, pmin * float(model.time_budget(ctx.compute_rate)), False)
    return SlotOutcome(0.0, 1, 0.0, True)


def benchmark_slots(model: OffloadModel, h, f, arrivals, offloadable, failures, elapsed: int,
                    eps: float):
    """Run the benchmark power rule over a frame of slots.

    ``h``, ``arrivals`` and ``offloadable`` are (T, M); ``f`` and ``failures``
    (failures so far per user) are (M,); ``elapsed`` is the global slot index of
    the first slot.  The mode switches slot by slot as the running rate moves.
    Returns (power, failed, energy, failures_after).
    """
    f = np.asarray(f, dtype=float)
    budget = model.time_budget(f)
    pmin = model.noise_power / h * model.snr_requirement(f)
    eligible = arrivals & offloadable & (budget > 0)
    go_hi = eligible & (pmin <= model.peak_power)
    go_lo = eligible & (pmin <= SAVING_FRACTION * model.peak_power)
    T, M = h.shape
    go = np.empty((T, M), dtype=bool)
    F = np.asarray(failures, dtype=np.int64).copy()
    if M == 1:
        fcount = int(F[0])
        hi, lo, arr = go_hi[:, 0].tolist(), go_lo[:, 0].tolist(), arrivals[:, 0].tolist()
        col = [False] * T
        for s in range(T):
            g = hi[s] if fcount > eps * (elapsed + s) else lo[s]
            col[s] = g
            if arr[s] and not g:
                fcount += 1
        go[:, 0] = col
        F[0] = fcount
    else:
        for s in range(T):
            g = np.where(F > eps * (elapsed + s), go_hi[s], go_lo[s])
            go[s] = g
            F += arrivals[s] & ~g
    power = np.where(go, pmin, 0.0)
    failed = arrivals & ~go
    return power, failed, power * budget, F
