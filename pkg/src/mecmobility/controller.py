"""Two-timescale Lyapunov controller: virtual queue, frame costs, migration rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import exp_integral_e1
from .offloading import OffloadModel


def queue_update(Q: float, failed: int, eps: float) -> float:
    """One slot of the reliability-debt queue: [Q + X - eps]^+."""
    if Q < 0:
        raise ValueError("queue length must be non-negative")
    return max(Q + failed - eps, 0.0)


def queue_path(Q0, failed, eps):
    """Queue lengths after each slot for a block of failure indicators.

    Closed form of the Lindley recursion along axis 0:
    Q_t = S_t - min(-Q0, min_{s<=t} S_s) with S the running sum of X - eps.
    Works for shape (T,) or (T, users).
    """
    steps = np.asarray(failed, dtype=float) - eps
    S = np.cumsum(steps, axis=0)
    floor = np.minimum(np.minimum.accumulate(S, axis=0), -np.asarray(Q0, dtype=float))
    return np.maximum(S - floor, 0.0)


@dataclass
class VirtualQueue:
    eps: float
    Q: float = 0.0

    def update(self, failed: int) -> float:
        self.Q = queue_update(self.Q, failed, self.eps)
        return self.Q


def e_and_hmin(model: OffloadModel, f, Q, V):
    """Energy constant e and drop threshold h_min of Z's closed form.

    ``e/h`` is the energy of an offload at gain ``h``; gains below ``h_min``
    are dropped.  BSs whose CPU cannot meet the deadline get ``inf`` for both.
    """
    f = np.asarray(f, dtype=float)
    req = model.snr_requirement(f)
    budget = model.time_budget(f)
    pmax = np.asarray(model.p_max(f, Q, V), dtype=float)
    feasible = budget > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(feasible, model.noise_power * budget * req, np.inf)
        hmin = np.where(feasible, model.noise_power * req / pmax, np.inf)
    return _out(e), _out(hmin)


def z_from_ratios(scale, nu, Q):
    """Z = scale * E1(nu) + Q (1 - e^-nu) with scale = V e / H and nu = h_min / H."""
    scale = np.asarray(scale, dtype=float)
    nu = np.asarray(nu, dtype=float)
    e1 = np.asarray(exp_integral_e1(nu), dtype=float)
    energy = np.where(np.isinf(nu), 0.0, scale * e1)
    return energy + Q * -np.expm1(-nu)


def z_frame_closed_form(model: OffloadModel, H, f, Q, V):
    """Expected per-arrival cost Z_n under Rayleigh fading, for each BS.

    Infeasible BSs (f <= xi / tau_d) cost Q: every arrival is dropped.
    """
    H = np.asarray(H, dtype=float)
    f = np.broadcast_to(np.asarray(f, dtype=float), H.shape)
    e, hmin = e_and_hmin(model, f, Q, V)
    e = np.asarray(e, dtype=float)
    hmin = np.asarray(hmin, dtype=float)
    feasible = np.isfinite(e)
    with np.errstate(invalid="ignore"):
        scale = np.where(feasible, V * np.where(feasible, e, 0.0) / H, 0.0)
        nu = np.where(feasible, hmin / H, np.inf)
    Z = z_from_ratios(scale, nu, Q)
    return _out(np.where(feasible, Z, Q))


def z_sum(Z, Q, is_same_bs, rho: float, T: int, C: int):
    """Frame-total expected cost; switching BS spends C slots in outage."""
    Z = np.asarray(Z, dtype=float)
    same = np.asarray(is_same_bs, dtype=bool)
    return _out(np.where(same, rho * T * Z, rho * (T - C) * Z + rho * C * Q))


@dataclass(frozen=True)
class FrameDecision:
    chosen: int
    migrated: bool
    Z: np.ndarray
    Z_sum: np.ndarray | None = None
    rule: str = "exact"

    @property
    def runner_up(self) -> int | None:
        """Index of the second-cheapest BS by Z, or None with a single BS."""
        if len(self.Z) < 2:
            return None
        order = np.argsort(self.Z, kind="stable")
        return int(order[1] if order[0] == self.chosen else order[0])


def _best_other(values, prev: int, largest: bool = False) -> int:
    vals = np.array(values, dtype=float)
    vals[prev] = -np.inf if largest else np.inf
    return int(np.argmax(vals) if largest else np.argmin(vals))


def migrate_decision(Z, Q: float, prev: int, alpha: float) -> FrameDecision:
    """Per-frame association rule.

    The candidate is the cheapest other BS n'; the user moves iff
    (1 - alpha) Z_n' + alpha Q < Z_prev.  An exact tie keeps the current BS.
    """
    Z = np.asarray(Z, dtype=float)
    if len(Z) == 1:
        return FrameDecision(prev, False, Z)
    cand = _best_other(Z, prev)
    if (1.0 - alpha) * Z[cand] + alpha * Q < Z[prev]:
        return FrameDecision(cand, True, Z)
    return FrameDecision(prev, False, Z)


def argmin_z_sum(Z, Q: float, prev: int, rho: float, T: int, C: int) -> int:
    """Brute-force minimiser of Z_sum over all BSs (stay wins ties, then low index)."""
    zs = np.asarray(z_sum(Z, Q, np.arange(len(Z)) == prev, rho, T, C), dtype=float)
    best = float(zs.min())
    if zs[prev] == best:
        return prev
    return int(np.flatnonzero(zs == best)[0])


def alpha_threshold(alpha: float) -> float:
    """ln(1 / (1 - alpha)); zero when migration is instantaneous."""
    return -math.log1p(-alpha)


def prop3_policy(model: OffloadModel, H, f: float, Q: float, V: float, prev: int,
                 alpha: float) -> FrameDecision:
    """Fast rule for a common CPU rate at every BS.

    The target is the strongest other BS.  Stay/migrate tests compare large-scale
    gains against h_alpha = h_min / ln(1/(1 - alpha)); when neither fires the
    exact rule decides.  The stay test ignores the E1 energy term and is
    therefore not guaranteed to agree with the exact rule.
    """
    H = np.asarray(H, dtype=float)
    budget = float(model.time_budget(f))
    if budget <= 0:
        raise ValueError("common CPU rate cannot meet the deadline")
    Z = np.asarray(z_frame_closed_form(model, H, f, Q, V), dtype=float).reshape(-1)
    if len(H) == 1:
        return FrameDecision(prev, False, Z, rule="single")
    _, hmin = e_and_hmin(model, f, Q, V)
    cand = _best_other(H, prev, largest=True)
    thr = alpha_threshold(alpha)
    h_alpha = hmin / thr if thr > 0 else math.inf
    if H[prev] > h_alpha:
        return FrameDecision(prev, False, Z, rule="stay")
    if np.isfinite(h_alpha):
        factor = min(h_alpha / (h_alpha + H[cand]), 0.5)
    else:
        factor = 0.5
    if H[prev] <= H[cand] * factor:
        return FrameDecision(cand, True, Z, rule="migrate")
    exact = migrate_decision(Z, Q, prev, alpha)
    return FrameDecision(exact.chosen, exact.migrated, Z, rule="exact")


def prop4_policy(model: OffloadModel, H, f, Q: float, V: float, prev: int,
                 alpha: float) -> FrameDecision:
    """Fast rule for heterogeneous CPU rates when the peak power never binds.

    Works on nu_n = h_min,n / H_n.  Raises ``ValueError`` if some BS's power
    cap would be clipped by the peak power (the caller must use the exact rule).
    """
    H = np.asarray(H, dtype=float)
    f = np.broadcast_to(np.asarray(f, dtype=float), H.shape)
    budget = np.asarray(model.time_budget(f))
    if np.any(budget <= 0):
        raise ValueError("every BS must be able to meet the deadline")
    if V <= 0 or not np.all(model.peak_power > Q / (V * budget)):
        raise ValueError("peak power binds at some BS; use the exact rule")
    Z = np.asarray(z_frame_closed_form(model, H, f, Q, V), dtype=float).reshape(-1)
    if len(H) == 1:
        return FrameDecision(prev, False, Z, rule="single")
    _, hmin = e_and_hmin(model, f, Q, V)
    nu = np.asarray(hmin, dtype=float) / H
    cand = _best_other(nu, prev)
    thr = alpha_threshold(alpha)
    if nu[prev] < thr:
        return FrameDecision(prev, False, Z, rule="stay")
    if nu[prev] >= max(nu[cand] + thr, 2.0 * nu[cand]):
        return FrameDecision(cand, True, Z, rule="migrate")
    exact = migrate_decision(Z, Q, prev, alpha)
    return FrameDecision(exact.chosen, exact.migrated, Z, rule="exact")


@dataclass(frozen=True)
class DriftDiagnostics:
    """Drift constants and the per-frame check of the relaxed drift bound.

    ``realized[k]`` is 1/2 (Q((k+1)T)^2 - Q(kT)^2) + V sum E(t); ``bound[k]`` is
    B2 T + sum [V E(t) + Q(kT)(X(t) - eps)] on the same frame.
    """

    B1: float
    B2: float
    E_max: float
    T: int
    V: float
    realized: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    mean_queue: float = 0.0

    @property
    def bound_holds(self) -> bool:
        return bool(np.all(self.realized <= self.bound))

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.bound - self.realized)) if len(self.bound) else math.inf

    def queue_bound(self, delta):
        """Long-run mean-queue bound (B2 + V E_max) / delta for slack ``delta``."""
        return (self.B2 + self.V * self.E_max) / np.asarray(delta, dtype=float)


def drift_constants(rho: float, eps: float, T: int) -> tuple[float, float]:
    B1 = 0.5 * (rho + eps ** 2)
    B2 = B1 + (T - 1) * ((1 - eps) * rho + eps ** 2) / 2
    return B1, B2


def max_energy(model: OffloadModel, f_hi: float) -> float:
    return model.peak_power * float(model.time_budget(f_hi))


def drift_diagnostics(q_start, q_end, energy, failures, *, rho: float, eps: float, T: int,
                      V: float, model: OffloadModel, f_hi: float) -> DriftDiagnostics:
    """Per-frame drift-plus-penalty against its bound, from frame-level sums."""
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    energy = np.asarray(energy, dtype=float)
    failures = np.asarray(failures, dtype=float)
    B1, B2 = drift_constants(rho, eps, T)
    realized = 0.5 * (q_end ** 2 - q_start ** 2) + V * energy
    bound = B2 * T + V * energy + q_start * (failures - eps * T)
    return DriftDiagnostics(B1, B2, max_energy(model, f_hi), T, V, realized, bound,
                            float(q_start.mean()) if len(q_start) else 0.0)


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x
