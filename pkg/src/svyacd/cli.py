"""Command-line entry point: ``svyacd estimate | simulate | validate``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .data import DataError
from .io import ConfigError, canonical_json, load_config, read_kv, run_config, validate
from .simulate import SENSITIVITY_METHODS, SimConfig, config_dict, run_sensitivity, run_study

log = logging.getLogger("svyacd")

_SIM_FLOATS = {"tau0", "tauX", "beta0", "betaA", "betaX", "gamma0", "gammaA", "gammaX",
               "gammaAX", "sigmaS", "sigmaO", "alpha"}
_SIM_INTS = {"N", "n_reps", "seed", "setting_id"}


def sim_config_from_file(path, setting=None, reps=None, seed=None):
    """Build a SimConfig from a key = value file plus CLI overrides.

    Extra keys: ``setting`` (1-8, toggles tau_X, beta_A, beta_X), ``on``
    (magnitude of active toggles, default 1), ``sensitivity`` (comma list
    of gamma_AX values to sweep).
    """
    raw = read_kv(path) if path else {}
    kw = {}
    for k, v in raw.items():
        if k in _SIM_FLOATS:
            kw[k] = float(v)
        elif k in _SIM_INTS:
            kw[k] = int(float(v))
        elif k in ("truth", "selection"):
            kw[k] = v
        elif k == "methods":
            kw[k] = tuple(s.strip() for s in v.split(",") if s.strip())
    setting = setting if setting is not None else raw.get("setting")
    on = float(raw.get("on", 1.0))
    if setting is not None:
        # explicit coefficients in the file override the setting toggles
        cfg = SimConfig.for_setting(int(setting), on=on, **kw)
    else:
        cfg = SimConfig(**kw)
    if reps is not None:
        cfg = replace(cfg, n_reps=reps)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    sweep = raw.get("sensitivity")
    gammas = [float(s) for s in sweep.split(",")] if sweep else None
    return cfg, gammas


def _write_sim(result, out: Path, per_rep: bool, tag: str = ""):
    out.mkdir(parents=True, exist_ok=True)
    summary = result.summary.reset_index()
    summary.to_csv(out / f"report{tag}.csv", index=False, float_format="%.17g")
    payload = {
        "config": config_dict(result.config),
        "true_acd": result.true_acd,
        "failures": result.failures,
        "resamples": result.resamples,
        "summary": summary.to_dict(orient="records"),
    }
    (out / f"report{tag}.json").write_text(canonical_json(payload), encoding="utf-8")
    if per_rep:
        result.per_rep.to_csv(out / f"per_rep{tag}.csv", index=False, float_format="%.17g")


def cmd_estimate(args) -> int:
    config = load_config(args.config)
    report = run_config(config, args.data, args.out)
    table = [{k: r.get(k) for k in ("method", "acd", "se", "ci_low", "ci_high", "error")} for r in report["results"]]
    for row in table:
        if row["error"]:
            print(f"{row['method']:<14} FAILED  {row['error']}")
        else:
            print(f"{row['method']:<14} {row['acd']: .4f}  se {row['se']:.4f}  "
                  f"CI ({row['ci_low']: .4f}, {row['ci_high']: .4f})")
    print(f"n = {report['n']}; dropped {report['dropped']} (complete-case)")
    return 1 if report["failed"] else 0


def cmd_simulate(args) -> int:
    cfg, gammas = sim_config_from_file(args.config, args.setting, args.reps, args.seed)
    out = Path(args.out) if args.out else None
    if args.sensitivity or gammas:
        base = cfg if cfg.setting_id else SimConfig.for_setting(8, n_reps=cfg.n_reps, seed=cfg.seed)
        results = run_sensitivity(base, gammas or (0.0, 0.01, 0.05, 0.1, 0.5), SENSITIVITY_METHODS)
        failed = False
        for g, res in results.items():
            print(f"gamma_AX = {g}: true ACD {res.true_acd:.4f}")
            print(res.summary[["mean_estimate", "bias", "analytic_se", "mc_se", "mse", "coverage"]]
                  .round(4).to_string())
            failed |= bool(res.failures)
            if out:
                _write_sim(res, out, args.per_rep, tag=f"_gammaAX_{g:g}")
        return 1 if failed else 0
    res = run_study(cfg, progress=True)
    print(f"setting {cfg.setting_id}: true ACD {res.true_acd:.4f}, {cfg.n_reps} replicates")
    print(res.summary[["mean_estimate", "percent_bias", "analytic_se", "mc_se", "mse", "coverage"]]
          .round(4).to_string())
    if out:
        _write_sim(res, out, args.per_rep)
    return 1 if res.failures else 0


def cmd_validate(args) -> int:
    config = load_config(args.config)
    info = validate(config, args.data)
    print(json.dumps(info, indent=2, default=str))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="svyacd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="run the method battery on a CSV dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--out", help="directory for report.csv and report.json")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="run the Monte Carlo study")
    s.add_argument("--config", help="simulation config file")
    s.add_argument("--setting", type=int, choices=range(1, 9))
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--sensitivity", action="store_true", help="sweep gamma_AX on the chosen setting")
    s.add_argument("--out")
    s.add_argument("--per-rep", action="store_true", help="also write per_rep.csv")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="check a dataset against a config")
    v.add_argument("--data", required=True)
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SVYACD_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
