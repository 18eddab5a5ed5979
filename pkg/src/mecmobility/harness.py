"""Experiment orchestration: parameter sweeps, the eps_min search and file output."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .scenario import ScenarioConfig
from .simulate import FRAME_FIELDS, MetricsReport, canonical_scheme, simulate

FEASIBILITY_SLACK = 1.2  # final-window X_av may exceed eps by this factor
EPS_BRACKET = (1e-5, 1e-1)
EPS_ITERATIONS = 12
EPS_REPLICATIONS = 3

# parameter aliases accepted by sweeps, mapped to ScenarioConfig.replace keys
PARAMETERS = {
    "V": "control_V",
    "eps": "reliability_eps",
    "rho": "task.arrival_prob",
    "C": "schedule.migration_delay",
    "speed": "user_speed",
    "K": "schedule.horizon",
}


def parameter_key(name: str) -> str:
    return PARAMETERS.get(name, name)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    replications: int = 1
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    schemes: tuple[str, ...] = ("proposed",)

    def __post_init__(self):
        if len(self.values) < 1:
            raise ValueError("a sweep needs at least one value")
        if self.replications < 1:
            raise ValueError("a sweep needs at least one replication")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(canonical_scheme(s) for s in self.schemes))
        if parameter_key(self.parameter).split(".")[0] not in {
                f.name for f in dataclasses.fields(ScenarioConfig)}:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")

    def config_for(self, value, replication: int) -> ScenarioConfig:
        return self.base.replace(**{parameter_key(self.parameter): value,
                                    "seed": self.base.seed + replication})

    @classmethod
    def from_dict(cls, data: dict[str, Any], base: ScenarioConfig | None = None) -> "SweepSpec":
        data = dict(data)
        if "base" in data:
            base = ScenarioConfig.from_dict(data.pop("base"))
        unknown = set(data) - {"parameter", "values", "replications", "schemes"}
        if unknown:
            raise ValueError(f"sweep: unknown keys {sorted(unknown)}")
        return cls(parameter=data["parameter"], values=tuple(data["values"]),
                   replications=int(data.get("replications", 1)),
                   base=base or ScenarioConfig(),
                   schemes=tuple(data.get("schemes", ("proposed",))))


def _run_point(args) -> dict:
    spec, scheme, value, rep = args
    row = {"parameter": spec.parameter, "value": value, "replication": rep, "scheme": scheme}
    try:
        row.update(simulate(spec.config_for(value, rep), scheme).summary())
        row["error"] = ""
    except Exception as exc:  # flagged row, the sweep carries on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[dict]

    def aggregate(self, metrics: Sequence[str] = ("E_av", "X_av", "final_window_X_av",
                                                   "mean_queue", "migration_pct")) -> list[dict]:
        """Mean of each metric per (scheme, value), skipping flagged rows."""
        out = []
        for scheme in self.spec.schemes:
            for value in self.spec.values:
                rows = [r for r in self.rows
                        if r["scheme"] == scheme and r["value"] == value and not r["error"]]
                agg = {"parameter": self.spec.parameter, "value": value, "scheme": scheme,
                       "runs": len(rows)}
                for m in metrics:
                    agg[m] = float(np.mean([r[m] for r in rows])) if rows else math.nan
                out.append(agg)
        return out

    def series(self, metric: str, scheme: str = "proposed") -> np.ndarray:
        scheme = canonical_scheme(scheme)
        return np.array([a[metric] for a in self.aggregate() if a["scheme"] == scheme])


def sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """One run per (scheme, value, replication); replication r uses seed base + r."""
    jobs = [(spec, s, v, r)
            for s in spec.schemes for v in spec.values for r in range(spec.replications)]
    return SweepResult(spec, _map(_run_point, jobs, workers))


@dataclass
class EpsMinResult:
    scheme: str
    eps_min: float | None  # None when even the top of the bracket fails
    supported: bool
    probes: list[tuple[float, bool, list[float]]]  # (eps, feasible, final-window X_av per rep)

    def summary(self) -> dict:
        return {"scheme": self.scheme, "eps_min": self.eps_min, "supported": self.supported,
                "probes": [{"eps": e, "feasible": ok, "final_window_X_av": xs}
                           for e, ok, xs in self.probes]}


def feasible_at(cfg: ScenarioConfig, scheme: str, eps: float, replications: int = EPS_REPLICATIONS,
                slack: float = FEASIBILITY_SLACK, workers: int = 1) -> tuple[bool, list[float]]:
    """Majority vote over replications of final-window X_av <= slack * eps."""
    cfgs = [cfg.replace(reliability_eps=eps, seed=cfg.seed + r) for r in range(replications)]
    reports = _map(_simulate_scheme, [(c, scheme) for c in cfgs], workers)
    xs = [r.final_window_X_av for r in reports]
    votes = sum(x <= slack * eps for x in xs)
    return 2 * votes > replications, xs


def _simulate_scheme(args) -> MetricsReport:
    cfg, scheme = args
    return simulate(cfg, scheme)


def epsilon_min(cfg: ScenarioConfig, scheme: str = "proposed", *, bracket=EPS_BRACKET,
                iterations: int = EPS_ITERATIONS, replications: int = EPS_REPLICATIONS,
                slack: float = FEASIBILITY_SLACK, workers: int = 1) -> EpsMinResult:
    """Smallest supported reliability threshold by bisection on a log scale.

    Feasibility is assumed monotone in eps.  Returns the upper end of the final
    bracket; the lower end of ``bracket`` is returned if it is already feasible.
    """
    scheme = canonical_scheme(scheme)
    lo, hi = bracket
    if not 0 < lo < hi < 1:
        raise ValueError("bracket must satisfy 0 < lo < hi < 1")
    if iterations < 1:
        raise ValueError("need at least one bisection iteration")
    probes = []

    def probe(eps):
        ok, xs = feasible_at(cfg, scheme, eps, replications, slack, workers)
        probes.append((float(eps), ok, xs))
        return ok

    if not probe(hi):
        return EpsMinResult(scheme, None, False, probes)
    if probe(lo):
        return EpsMinResult(scheme, lo, True, probes)
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return EpsMinResult(scheme, hi, True, probes)


def environment_info() -> dict:
    import scipy

    return {"package": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def write_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """UTF-8 CSV with a header taken from the union of row keys (first-seen order)."""
    header: list[str] = []
    for r in rows:
        header.extend(k for k in r if k not in header)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: _plain(v) for k, v in r.items()})


def write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=_plain, sort_keys=False)
        fh.write("\n")


def frame_rows(report: MetricsReport) -> list[dict]:
    """Per-frame log of a single-user run, one dict per frame."""
    cols = report.frames
    K = len(cols["chosen"])
    return [{"frame": k, **{name: _plain(cols[name][k]) for name in FRAME_FIELDS}}
            for k in range(K)]


def run_summary(report, extra: dict | None = None) -> dict:
    return {"config": report.config.to_dict(), "metrics": report.summary(),
            "environment": environment_info(), **(extra or {})}


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return v
