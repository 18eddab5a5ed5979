"""Command-line entry point: run, bench, sweep, epsmin and multiuser."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .harness import (SweepSpec, epsilon_min, environment_info, frame_rows, run_summary, sweep,
                      write_csv, write_json)
from .multiuser import MultiuserSettings
from .scenario import ScenarioConfig, load_config
from .simulate import SCHEMES, run_multiuser, simulate

log = logging.getLogger("mecmobility")


def _base_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _replicated(cfg: ScenarioConfig, scheme: str, n: int, out: Path, stem: str) -> None:
    rows = []
    for r in range(n):
        rep = simulate(cfg.replace(seed=cfg.seed + r), scheme)
        suffix = f"_rep{r}" if n > 1 else ""
        write_csv(out / f"{stem}_frames{suffix}.csv", frame_rows(rep))
        rows.append({"replication": r, **rep.summary()})
        log.info("%s seed=%d E_av=%.4g X_av=%.4g final-window X_av=%.4g", scheme, rep.config.seed,
                 rep.E_av, rep.X_av, rep.final_window_X_av)
    write_csv(out / f"{stem}_summary.csv", rows)
    write_json(out / f"{stem}_summary.json", {"config": cfg.to_dict(), "scheme": scheme,
                                              "runs": rows, "environment": environment_info()})


def cmd_run(args) -> None:
    _replicated(_base_config(args), args.scheme, args.replications, _out_dir(args), "run")


def cmd_bench(args) -> None:
    if args.scheme == "proposed":
        raise ValueError("bench expects --scheme rss or rss-hyst")
    _replicated(_base_config(args), args.scheme, args.replications, _out_dir(args), "bench")


def cmd_sweep(args) -> None:
    cfg = _base_config(args)
    with open(args.spec) as fh:
        data = yaml.safe_load(fh) or {}
    if args.replications is not None:
        data["replications"] = args.replications
    spec = SweepSpec.from_dict(data, base=cfg)
    res = sweep(spec, workers=args.workers)
    out = _out_dir(args)
    write_csv(out / "sweep_runs.csv", res.rows)
    write_csv(out / "sweep_mean.csv", res.aggregate())
    write_json(out / "sweep_summary.json", {"config": cfg.to_dict(), "parameter": spec.parameter,
                                            "values": list(spec.values),
                                            "replications": spec.replications,
                                            "aggregate": res.aggregate(),
                                            "environment": environment_info()})
    flagged = [r for r in res.rows if r["error"]]
    for r in flagged:
        log.warning("flagged run value=%s rep=%s: %s", r["value"], r["replication"], r["error"])


def cmd_epsmin(args) -> None:
    cfg = _base_config(args)
    res = epsilon_min(cfg, args.scheme, replications=args.replications, workers=args.workers)
    out = _out_dir(args)
    write_csv(out / "epsmin_probes.csv", [{"eps": e, "feasible": ok,
                                           **{f"x_rep{i}": x for i, x in enumerate(xs)}}
                                          for e, ok, xs in res.probes])
    write_json(out / "epsmin_summary.json", {"config": cfg.to_dict(), **res.summary(),
                                             "environment": environment_info()})
    if res.supported:
        print(f"eps_min({res.scheme}) = {res.eps_min:.4g}")
    else:
        print(f"eps_min({res.scheme}): unsupported within the search bracket")


def cmd_multiuser(args) -> None:
    cfg = _base_config(args)
    rep = run_multiuser(cfg, args.users, MultiuserSettings(), args.scheme)
    out = _out_dir(args)
    frames = rep.frames
    write_csv(out / "multiuser_frames.csv",
              [{"frame": k, **{name: frames[name][k].item() for name in frames}}
               for k in range(len(frames["energy"]))])
    write_csv(out / "multiuser_users.csv",
              [{"user": i, "speed": float(rep.speeds[i]), "E_av": float(rep.user_energy[i]),
                "X_av": float(rep.user_failure_rate[i])} for i in range(rep.num_users)])
    write_json(out / "multiuser_summary.json", run_summary(rep))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file (defaults otherwise)")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--scheme", choices=SCHEMES, default="proposed")
    common.add_argument("--workers", type=int, default=1, help="parallel processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mecmobility", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, reps in (("run", cmd_run, 1), ("bench", cmd_bench, 1)):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--replications", type=int, default=reps)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("sweep", parents=[common])
    sp.add_argument("spec", help="YAML sweep spec: parameter, values, replications, schemes")
    sp.add_argument("--replications", type=int)
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("epsmin", parents=[common])
    sp.add_argument("--replications", type=int, default=3)
    sp.set_defaults(func=cmd_epsmin)
    sp = sub.add_parser("multiuser", parents=[common])
    sp.add_argument("--users", type=int, default=100)
    sp.add_argument("--replications", type=int, default=1)
    sp.set_defaults(func=cmd_multiuser)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "replications", None) is not None and args.replications < 1:
        print("error: --replications must be >= 1", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except (ValueError, KeyError, TypeError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
