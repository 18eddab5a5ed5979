"""Frame/slot simulation of the proposed controller and the handover benchmarks."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import benchmark_slots, rss_hysteresis_decision, rss_only_decision
from .controller import (DriftDiagnostics, drift_diagnostics, migrate_decision, queue_path,
                         z_frame_closed_form)
from .environment import World, draw_user_speeds
from .multiuser import (AssociationMatrix, MultiuserScenario, MultiuserSettings, algorithm2,
                        load_rate)
from .offloading import OffloadModel
from .scenario import RngStreams, ScenarioConfig

SCHEMES = ("proposed", "rss", "rss-hyst")
_ALIASES = {"rss_only": "rss", "rss_hysteresis": "rss-hyst", "rss-only": "rss",
            "rss-hysteresis": "rss-hyst"}
FINAL_WINDOW = 0.2  # share of frames used for the converged failure rate


def canonical_scheme(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")
    return name


FRAME_FIELDS = ("chosen", "migrated", "q_start", "q_end", "energy", "failures", "arrivals",
                "z_chosen", "z_runner_up")


class MetricsAccumulator:
    """Per-frame counters of one single-user run."""

    def __init__(self, horizon: int):
        self.cols = {
            "chosen": np.zeros(horizon, dtype=np.int64),
            "migrated": np.zeros(horizon, dtype=bool),
            "q_start": np.zeros(horizon),
            "q_end": np.zeros(horizon),
            "energy": np.zeros(horizon),
            "failures": np.zeros(horizon, dtype=np.int64),
            "arrivals": np.zeros(horizon, dtype=np.int64),
            "z_chosen": np.full(horizon, np.nan),
            "z_runner_up": np.full(horizon, np.nan),
        }
        self.frames = 0

    def record(self, k: int, **values) -> None:
        for key, v in values.items():
            self.cols[key][k] = v
        self.frames = k + 1

    @property
    def total_energy(self) -> float:
        return float(self.cols["energy"][: self.frames].sum())

    @property
    def total_failures(self) -> int:
        return int(self.cols["failures"][: self.frames].sum())

    @property
    def total_arrivals(self) -> int:
        return int(self.cols["arrivals"][: self.frames].sum())


@dataclass
class MetricsReport:
    scheme: str
    config: ScenarioConfig
    E_av: float
    X_av: float
    mean_queue: float
    migration_pct: float
    final_window_X_av: float
    total_energy: float
    failures: int
    arrivals: int
    slots: int
    frames: dict[str, np.ndarray] = field(repr=False)
    drift: DriftDiagnostics | None = field(default=None, repr=False)
    runtime: float = 0.0

    @property
    def frame_energy_avg(self) -> np.ndarray:
        """Per-frame average energy per slot (the histogram quantity)."""
        return self.frames["energy"] / self.config.schedule.frame_size

    def meets_reliability(self, slack: float = 1.2) -> bool:
        return self.final_window_X_av <= slack * self.config.reliability_eps

    def summary(self) -> dict:
        out = {
            "scheme": self.scheme,
            "seed": self.config.seed,
            "E_av": self.E_av,
            "X_av": self.X_av,
            "final_window_X_av": self.final_window_X_av,
            "mean_queue": self.mean_queue,
            "migration_pct": self.migration_pct,
            "total_energy": self.total_energy,
            "failures": self.failures,
            "arrivals": self.arrivals,
            "slots": self.slots,
            "runtime_s": self.runtime,
        }
        if self.drift is not None:
            out.update(B1=self.drift.B1, B2=self.drift.B2, E_max=self.drift.E_max,
                       drift_bound_holds=self.drift.bound_holds,
                       drift_worst_margin=self.drift.worst_margin)
        return out


def _final_window(failures: np.ndarray, T: int) -> float:
    K = len(failures)
    w = max(1, int(round(FINAL_WINDOW * K)))
    return float(failures[-w:].sum()) / (w * T)


def simulate(cfg: ScenarioConfig, scheme: str = "proposed") -> MetricsReport:
    """Run one single-user replication for ``cfg.schedule.horizon`` frames."""
    scheme = canonical_scheme(scheme)
    t0 = time.perf_counter()
    model = OffloadModel.from_config(cfg)
    streams = RngStreams(cfg.seed)
    world = World(cfg, streams)
    sch = cfg.schedule
    T, C, K = sch.frame_size, sch.migration_delay, sch.horizon
    rho, eps, V = cfg.task.arrival_prob, cfg.reliability_eps, cfg.control_V
    acc = MetricsAccumulator(K)

    prev = int(np.argmax(world.large_scale()[0]))  # start on the nearest BS
    Q = 0.0
    F = np.zeros(1, dtype=np.int64)  # benchmark running failure count
    offloadable = np.ones((T, 1), dtype=bool)
    for k in range(K):
        H = world.large_scale()[0]
        f = world.compute_rates(k)
        z_chosen = z_runner = np.nan
        if scheme == "proposed":
            Z = z_frame_closed_form(model, H, f, Q, V)
            dec = migrate_decision(np.atleast_1d(Z), Q, prev, sch.alpha)
            n, migrated = dec.chosen, dec.migrated
            z_chosen = dec.Z[n]
            if dec.runner_up is not None:
                z_runner = dec.Z[dec.runner_up]
        elif scheme == "rss":
            n, migrated = rss_only_decision(H, prev)
        else:
            n, migrated = rss_hysteresis_decision(H, prev, cfg.hysteresis_margin)

        offloadable[:] = True
        if migrated:
            offloadable[:C] = False
        arrivals = streams.arrivals(k, rho, T)
        h = streams.fading(k, T) * H[n]
        if scheme == "proposed":
            cap = model.p_max(f[n], Q, V)
            _, failed, energy = model.offload_slots(h, f[n], cap, arrivals, offloadable)
        else:
            _, failed, energy, F = benchmark_slots(model, h, f[n:n + 1], arrivals, offloadable,
                                                   F, k * T, eps)
        q_end = float(queue_path(Q, failed[:, 0], eps)[-1])
        acc.record(k, chosen=n, migrated=migrated, q_start=Q, q_end=q_end,
                   energy=float(energy.sum()), failures=int(failed.sum()),
                   arrivals=int(arrivals.sum()), z_chosen=z_chosen, z_runner_up=z_runner)
        Q = q_end
        prev = n
        world.advance(sch.frame_duration)

    cols = acc.cols
    slots = K * T
    drift = None
    if scheme == "proposed":
        drift = drift_diagnostics(cols["q_start"], cols["q_end"], cols["energy"], cols["failures"],
                                  rho=rho, eps=eps, T=T, V=V, model=model,
                                  f_hi=cfg.compute_rate_range[1])
    return MetricsReport(
        scheme=scheme,
        config=cfg,
        E_av=acc.total_energy / slots,
        X_av=acc.total_failures / slots,
        mean_queue=float(cols["q_start"].mean()),
        migration_pct=100.0 * float(cols["migrated"].mean()),
        final_window_X_av=_final_window(cols["failures"], T),
        total_energy=acc.total_energy,
        failures=acc.total_failures,
        arrivals=acc.total_arrivals,
        slots=slots,
        frames=cols,
        drift=drift,
        runtime=time.perf_counter() - t0,
    )


def run_single_user(cfg: ScenarioConfig) -> MetricsReport:
    return simulate(cfg, "proposed")


def run_benchmark(cfg: ScenarioConfig, scheme: str) -> MetricsReport:
    scheme = canonical_scheme(scheme)
    if scheme == "proposed":
        raise ValueError("run_benchmark expects a benchmark scheme")
    return simulate(cfg, scheme)


@dataclass
class MultiuserReport:
    scheme: str
    config: ScenarioConfig
    num_users: int
    user_energy: np.ndarray  # per-user E_av
    user_failure_rate: np.ndarray  # per-user X_av
    user_final_window_X_av: np.ndarray
    speeds: np.ndarray
    frames: dict[str, np.ndarray] = field(repr=False)
    runtime: float = 0.0

    @property
    def mean_energy(self) -> float:
        return float(self.user_energy.mean())

    @property
    def worst_energy(self) -> float:
        return float(self.user_energy.max())

    @property
    def migration_pct(self) -> float:
        return 100.0 * float(self.frames["migrations"].sum()) / (self.num_users * len(self.frames["migrations"]))

    def energy_by_speed(self) -> dict[float, tuple[float, float]]:
        """Mean and worst per-user energy for every speed value present."""
        out = {}
        for v in np.unique(self.speeds):
            sel = self.user_energy[self.speeds == v]
            out[float(v)] = (float(sel.mean()), float(sel.max()))
        return out

    def summary(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": self.config.seed,
            "num_users": self.num_users,
            "mean_energy": self.mean_energy,
            "worst_energy": self.worst_energy,
            "mean_X_av": float(self.user_failure_rate.mean()),
            "max_X_av": float(self.user_failure_rate.max()),
            "migration_pct": self.migration_pct,
            "mean_max_load": float(self.frames["max_load"].mean()),
            "mean_alg2_iterations": float(self.frames["iterations"].mean()),
            "energy_by_speed": {str(k): v for k, v in self.energy_by_speed().items()},
            "runtime_s": self.runtime,
        }


def run_multiuser(cfg: ScenarioConfig, num_users: int, settings: MultiuserSettings | None = None,
                  scheme: str = "proposed", speeds=None) -> MultiuserReport:
    """Multiuser run: per-frame association by Algorithm 2 (or per-user
    hysteresis), per-slot power control and one virtual queue per user.

    CPU rates follow the load model F * degradation^(y - 1).  ``speeds``
    overrides the per-user speeds otherwise drawn from ``settings.speeds``.
    """
    scheme = canonical_scheme(scheme)
    if num_users < 1:
        raise ValueError("need at least one user")
    settings = settings or MultiuserSettings()
    t0 = time.perf_counter()
    model = OffloadModel.from_config(cfg)
    streams = RngStreams(cfg.seed)
    if speeds is None:
        speeds = draw_user_speeds(streams, num_users, settings.speeds)
    world = World(cfg, streams, num_users, speeds)
    sch = cfg.schedule
    T, C, K = sch.frame_size, sch.migration_delay, sch.horizon
    rho, eps, V = cfg.task.arrival_prob, cfg.reliability_eps, cfg.control_V
    M, N = num_users, cfg.num_bs
    users = np.arange(M)

    frames = {
        "iterations": np.zeros(K, dtype=np.int64),
        "cost_initial": np.full(K, np.nan),
        "cost_final": np.full(K, np.nan),
        "migrations": np.zeros(K, dtype=np.int64),
        "max_load": np.zeros(K, dtype=np.int64),
        "energy": np.zeros(K),
        "failures": np.zeros(K, dtype=np.int64),
        "mean_queue": np.zeros(K),
    }
    energy_u = np.zeros(M)
    fail_u = np.zeros(M, dtype=np.int64)
    window_from = K - max(1, int(round(FINAL_WINDOW * K)))
    fail_window = np.zeros(M, dtype=np.int64)

    prev = np.argmax(world.large_scale(), axis=1)
    Q = np.zeros(M)
    F = np.zeros(M, dtype=np.int64)
    for k in range(K):
        H = world.large_scale()
        if scheme == "proposed":
            scen = MultiuserScenario(model, H, Q, prev, V, rho, T, C,
                                     base_rate=settings.base_rate, degradation=settings.degradation)
            res = algorithm2(AssociationMatrix(prev, N), scen)
            assign = res.X.assignment
            frames["iterations"][k] = res.iterations
            frames["cost_initial"][k] = res.initial_cost
            frames["cost_final"][k] = res.final_cost
        elif scheme == "rss":
            assign = np.argmax(H, axis=1)
        else:
            assign = np.array([rss_hysteresis_decision(H[i], prev[i], cfg.hysteresis_margin)[0]
                               for i in range(M)])
        loads = np.bincount(assign, minlength=N)
        f = load_rate(settings.base_rate, settings.degradation, loads[assign])
        migrated = assign != prev
        offloadable = np.ones((T, M), dtype=bool)
        offloadable[:C, migrated] = False
        arrivals = streams.arrivals(k, rho, T, M)
        h = streams.fading(k, T, M) * H[users, assign]
        if scheme == "proposed":
            cap = model.p_max(f, Q, V)
            _, failed, energy = model.offload_slots(h, f, cap, arrivals, offloadable)
        else:
            _, failed, energy, F = benchmark_slots(model, h, f, arrivals, offloadable, F, k * T, eps)
        e_k = energy.sum(axis=0)
        x_k = failed.sum(axis=0)
        energy_u += e_k
        fail_u += x_k
        if k >= window_from:
            fail_window += x_k
        frames["migrations"][k] = int(migrated.sum())
        frames["max_load"][k] = int(loads.max())
        frames["energy"][k] = float(e_k.sum())
        frames["failures"][k] = int(x_k.sum())
        frames["mean_queue"][k] = float(Q.mean())
        Q = queue_path(Q, failed, eps)[-1]
        prev = assign
        world.advance(sch.frame_duration)

    slots = K * T
    return MultiuserReport(
        scheme=scheme,
        config=cfg,
        num_users=M,
        user_energy=energy_u / slots,
        user_failure_rate=fail_u / slots,
        user_final_window_X_av=fail_window / ((K - window_from) * T),
        speeds=np.asarray(speeds, dtype=float),
        frames=frames,
        runtime=time.perf_counter() - t0,
    )
