"""Command-line entry point: ``rblab <command> --config file.json --out dir``."""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

from . import config as cfgmod
from .calibration import calibrate_d
from .errors import OutputExists, RblabError, SchemaError
from .estimators import RateConstants, estimate_all
from .experiment import Campaign, all_rows, resolve_workers, run_experiment, write_campaign
from .jsonio import dumps17
from .paths import SamplePath
from .sde import DriftPoly, euler_maruyama, simulate_noise

THREADS_ENV = "RBLAB_THREADS"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rblab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in cfgmod.COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON configuration file")
        s.add_argument("--out", type=Path, required=True, help="output directory (must not exist)")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dot-path override, repeatable")
        s.add_argument("--threads", type=int, default=None, help=f"worker count, 0 = auto (env {THREADS_ENV})")
        s.add_argument("--seed", type=int, default=None, help="seed (master seed for campaigns)")
        s.add_argument("--cache-dir", type=Path, default=None, help=argparse.SUPPRESS)
        if name == "calibrate-d":
            s.add_argument("--h", type=float, default=None, help="Hurst parameter to calibrate")
    return p


def _threads(arg) -> int:
    if arg is None:
        env = os.environ.get(THREADS_ENV)
        if env is not None and env.strip():
            try:
                arg = int(env)
            except ValueError:
                raise SchemaError(f"{THREADS_ENV}={env!r} is not an integer") from None
        else:
            arg = 0
    return resolve_workers(arg)


def _seed_overrides(command: str, seed) -> list:
    if seed is None:
        return []
    key = {
        "simulate-noise": "seed",
        "solve": "seed",
        "experiment": "master_seed",
        "calibrate-d": "calibration.master_seed",
    }.get(command)
    if key is None:
        raise SchemaError(f"--seed has no meaning for {command}")
    return [f"{key}={int(seed)}"]


def load_config(args):
    doc = {}
    if args.config is not None:
        try:
            doc = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot read config: {exc}") from None
    overrides = list(args.overrides) + _seed_overrides(args.command, args.seed)
    if getattr(args, "h", None) is not None:
        overrides.append(f"h={args.h!r}")
    return cfgmod.parse_config(doc, args.command, overrides)


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps17(obj), encoding="utf-8")


def _rates(d_cfg, h, workers, cache_dir, scheme="cell", completion=None):
    """RateConstants plus the calibration record (``None`` for overrides)."""
    if d_cfg.source == "override":
        return RateConstants(d_override=d_cfg.value), None
    c = d_cfg.calibration
    cal = calibrate_d(h, c.n_values, c.replications, c.master_seed, c.inner_resolution,
                      scheme, completion, workers, cache_dir)
    return cal.rates(d_cfg.tolerance), cal


# -- workflows --------------------------------------------------------------


def run_simulate_noise(cfg, out: Path, workers, cache_dir) -> None:
    simulate_noise(cfgmod.spec(cfg)).write_csv(out / "noise.csv")


def run_solve(cfg, out: Path, workers, cache_dir) -> None:
    model = cfgmod.model_spec(cfg.model, cfg.seed)
    euler_maruyama(model).write(out)


def run_estimate(cfg, out: Path, workers, cache_dir) -> None:
    path = SamplePath.read_csv(cfg.path)
    needs_d = {"lambda_known", "lambda_plugin"} & set(cfg.estimators)
    cal = None
    if needs_d:
        h_cal = cfg.h
        if h_cal is None:
            from .estimators import estimate_diffusion
            h_cal = min(max(estimate_diffusion(path).h_hat, 0.501), 0.999)
        rates, cal = _rates(cfg.d_h, h_cal, workers, cache_dir)
    else:
        rates = RateConstants()
    drift = None if cfg.drift is None else DriftPoly(tuple(cfg.drift))
    report = estimate_all(path, drift, cfg.estimators, rates, h=cfg.h, sigma=cfg.sigma)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    if cal is not None:
        _write_json(out / "d_table.json", cal.to_dict())


def run_calibrate(cfg, out: Path, workers, cache_dir) -> None:
    c = cfg.calibration
    cal = calibrate_d(cfg.h, c.n_values, c.replications, c.master_seed, c.inner_resolution,
                      cfg.scheme, cfg.completion, workers, cache_dir)
    _write_json(out / "d_table.json", cal.to_dict())


def run_experiment_cmd(cfg, out: Path, workers, cache_dir) -> None:
    m = cfg.model
    model = cfgmod.model_spec(m, 0)
    needs_d = {"lambda_known", "lambda_plugin"} & set(cfg.estimators)
    if needs_d:
        rates, cal = _rates(cfg.d_h, m.h, workers, cache_dir, m.scheme, m.completion)
    else:
        rates, cal = RateConstants(), None
    campaign = Campaign(model, tuple(cfg.obs_sizes), cfg.replications, cfg.master_seed,
                        tuple(cfg.estimators), rates, m.h, m.sigma, m.lam)
    results = run_experiment(campaign, workers, cache_dir)
    write_campaign(out, all_rows(results))
    if cal is not None:
        _write_json(out / "d_table.json", cal.to_dict())


WORKFLOWS = {
    "simulate-noise": run_simulate_noise,
    "solve": run_solve,
    "estimate": run_estimate,
    "calibrate-d": run_calibrate,
    "experiment": run_experiment_cmd,
}


def dispatch(args) -> int:
    """Run one command; output appears in ``args.out`` only on success."""
    cfg = load_config(args)
    workers = _threads(args.threads)
    out = args.out
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise OutputExists(f"output directory {out} exists and is not empty")
    parent = out.resolve().parent
    parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=parent))
    try:
        _write_json(tmp / "config.json", cfgmod.dump_config(cfg))
        WORKFLOWS[args.command](cfg, tmp, workers, args.cache_dir)
        if out.exists():
            out.rmdir()
        os.rename(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except RblabError as err:
        payload = {"error": err.tag, "message": str(err), "command": args.command}
        print(json.dumps(payload), file=sys.stderr)
        return 2 if isinstance(err, SchemaError) or err.tag in ("RangeError", "OutputExists") else 1


if __name__ == "__main__":
    sys.exit(main())
