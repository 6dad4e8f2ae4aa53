"""Command-line front end: simulate, estimate, study, ppfit, period."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .geometry import ConvexPolygon, GeometryError
from .io import load_tessellation, load_window, provenance, save_tessellation, write_csv, write_json
from .models import BUILTIN_MODELS, ExponentialModel
from .pointprocess import PointPattern, PointProcessError, PpModel, fit_logistic
from .pseudolikelihood import NoisConfig, PseudoLikelihoodError, nois
from .smf import ChainFrozenError, SmfChain
from .tessellation import InvalidTessellationError

log = logging.getLogger("ttessel")

# per-model defaults: simulation settings and NOIS settings
MODEL_DEFAULTS = {
    "crtt": {"theta": [0.64], "burnin": 12500, "period": 3704,
             "delta": 0.0, "max_iter": 0, "init": "crtt-start"},
    "angle": {"theta": [2.49, 2.5], "burnin": 30000, "period": 9473,
              "delta": 0.005, "max_iter": 150, "init": "crtt-start"},
    "area": {"theta": [0.53, 835.2], "burnin": 11000, "period": 7223,
             "delta": -0.005, "max_iter": 100, "init": "crtt-start"},
}
STUDY_SIDES = [1.0, 1.75, 2.5]


class ConfigError(ValueError):
    pass


def _resolve(args, parser):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if args.config:
        try:
            with open(args.config) as fh:
                override = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        unknown = set(override) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(override)
    model = cfg.get("model")
    if model is not None:
        if model not in MODEL_DEFAULTS:
            raise ConfigError(f"unknown model {model!r}")
        for key, val in MODEL_DEFAULTS[model].items():
            if key in cfg and cfg[key] is None:
                cfg[key] = val
    return cfg


def _model(cfg) -> ExponentialModel:
    try:
        return ExponentialModel.from_config({"model": cfg["model"], "theta": cfg["theta"]})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _square(side) -> ConvexPolygon:
    side = float(side)
    if not side > 0:
        raise ConfigError("side lengths must be positive")
    return ConvexPolygon.rectangle(side)


def _nonneg(cfg, *keys):
    for k in keys:
        if cfg.get(k) is not None and cfg[k] < 0:
            raise ConfigError(f"--{k.replace('_', '-')} must be >= 0")


def _stabilization(energy):
    """Means of the third and fourth quarters of a trace and their z-score."""
    n = len(energy) // 4
    if n < 2:
        return None
    q3 = np.asarray(energy[2 * n:3 * n])
    q4 = np.asarray(energy[3 * n:4 * n])
    se = math.sqrt(q3.var(ddof=1) / n + q4.var(ddof=1) / n)
    z = 0.0 if se == 0 else (q4.mean() - q3.mean()) / se
    return {"third_quarter_mean": float(q3.mean()), "fourth_quarter_mean": float(q4.mean()), "z": float(z)}


# ----------------------------------------------------------------------
def cmd_simulate(cfg):
    _nonneg(cfg, "burnin", "period", "samples")
    model = _model(cfg)
    side = cfg["side"][0] if isinstance(cfg["side"], list) else cfg["side"]
    chain = SmfChain(model, _square(side), rng=np.random.SeedSequence(cfg["seed"]))
    out = cfg["out"]
    meta = provenance(cfg)
    files = []
    for k, tess in enumerate(chain.iter_samples(cfg["samples"], cfg["burnin"], cfg["period"])):
        path = os.path.join(out, f"tessellation_{k:04d}.json")
        stats = tess.statistics_basic()
        save_tessellation(path, tess, {
            "iteration": chain.iteration, "model": model.to_config(),
            "statistics": dict(zip(("nseint", "nnbseint", "nbseint", "u", "a2", "angle_sum"), stats)),
            **meta})
        files.append(path)
    write_csv(os.path.join(out, "trace.csv"),
              ["iteration", "energy", "nseint", "nnbseint", "nbseint", "accepted_move_type"],
              chain.trace_rows(), meta)
    diag = _stabilization(chain.energy_trace)
    summary = {**meta, "samples": files, "final_iteration": chain.iteration,
               "accepted": chain.accepted, "proposed": chain.proposed, "energy_stabilization": diag}
    write_json(os.path.join(out, "simulate.json"), summary)
    if diag:
        print(f"energy: third-quarter mean {diag['third_quarter_mean']:.6g}, "
              f"fourth-quarter mean {diag['fourth_quarter_mean']:.6g}, z={diag['z']:.3f}")
    print(f"wrote {len(files)} tessellation(s) to {out}")
    return summary


def _nois_config(cfg):
    try:
        return NoisConfig(epsilon=cfg["epsilon"], delta=cfg["delta"], max_iterations=cfg["max_iter"],
                          initial_theta=cfg["init"] if cfg["init"] != "zeros" else None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _estimate_one(model, tess, ncfg, seed):
    res = nois(model, tess, ncfg, np.random.default_rng(seed))
    return res


def cmd_estimate(cfg):
    try:
        tess = load_tessellation(cfg["tessellation"])
    except OSError as exc:
        raise ConfigError(f"cannot read tessellation: {exc}") from None
    model = _model(cfg)
    res = _estimate_one(model, tess, _nois_config(cfg), np.random.SeedSequence(cfg["seed"]))
    out = cfg["out"]
    meta = provenance(cfg)
    trace = [{"iteration": k, "theta": [float(x) for x in th], "lpl": float(L)}
             for k, (th, L) in enumerate(res.trace)]
    result = {**meta, "theta_hat": [float(x) for x in res.theta], "iterations": res.iterations,
              "converged": res.converged, "n_dummy": res.n_dummy, "trace": trace}
    write_json(os.path.join(out, "estimate.json"), result)
    write_csv(os.path.join(out, "nois_trace.csv"),
              ["iteration"] + [f"theta{i + 1}" for i in range(model.d)] + ["lpl"],
              ([k] + [float(x) for x in th] + [float(L)] for k, (th, L) in enumerate(res.trace)), meta)
    print("theta_hat = " + ", ".join(f"{x:.6g}" for x in res.theta))
    return result


def _study_chain(job):
    model_cfg, side, n, burnin, period, seed_seq, ncfg_kw = job
    model = ExponentialModel.from_config(model_cfg)
    chain_seed, est_seed = seed_seq.spawn(2)
    chain = SmfChain(model, _square(side), rng=np.random.default_rng(chain_seed))
    est_seeds = est_seed.spawn(n)
    ncfg = NoisConfig(**ncfg_kw)
    rows = []
    for k, tess in enumerate(chain.iter_samples(n, burnin, period)):
        chain.clear_trace()
        s = tess.statistics_basic()
        try:
            res = nois(model, tess, ncfg, np.random.default_rng(est_seeds[k]))
            theta = [float(x) for x in res.theta]
            its, conv, err = res.iterations, res.converged, ""
        except PseudoLikelihoodError as exc:
            theta = [math.nan] * model.d
            its, conv, err = 0, False, type(exc).__name__
        rows.append({"side": side, "iteration": chain.iteration, "theta": theta, "n_cells": tess.n_cells,
                     "nseint": s[0], "nnbseint": s[1], "u": s[3], "iterations": its,
                     "converged": conv, "error": err})
    return rows


def summarize(values):
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"n": 0}
    q = np.quantile(v, [0.1, 0.25, 0.5, 0.75, 0.9])
    return {"n": int(v.size), "mean": float(v.mean()), "decile_first": float(q[0]), "q1": float(q[1]),
            "median": float(q[2]), "q3": float(q[3]), "decile_last": float(q[4]),
            "iqr": float(q[3] - q[1])}


def run_study(model_cfg, sides, replicates, burnin, period, seed, ncfg_kw, chains=1, workers=1):
    """Replicate study: per side, ``chains`` independent chains share the replicates."""
    root = np.random.SeedSequence(seed)
    side_seeds = root.spawn(len(sides))
    jobs = []
    for side, ss in zip(sides, side_seeds):
        chain_seeds = ss.spawn(chains)
        for c in range(chains):
            n = replicates // chains + (1 if c < replicates % chains else 0)
            if n:
                jobs.append((model_cfg, float(side), n, burnin, period, chain_seeds[c], ncfg_kw))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_study_chain, jobs))
    else:
        results = [_study_chain(j) for j in jobs]
    rows = []
    for side in sides:
        rep = 0
        for job, res in zip(jobs, results):
            if job[1] != float(side):
                continue
            for r in res:
                r["replicate"] = rep
                rep += 1
                rows.append(r)
    return rows


def cmd_study(cfg):
    _nonneg(cfg, "burnin", "period")
    if cfg["replicates"] < 1:
        raise ConfigError("--replicates must be >= 1")
    if cfg["chains"] < 1 or cfg["workers"] < 1:
        raise ConfigError("--chains and --workers must be >= 1")
    model = _model(cfg)
    sides = cfg["side"] or STUDY_SIDES
    for s in sides:
        _square(s)
    ncfg = _nois_config(cfg)
    ncfg_kw = {"epsilon": ncfg.epsilon, "delta": ncfg.delta, "max_iterations": ncfg.max_iterations,
               "initial_theta": ncfg.initial_theta}
    rows = run_study(model.to_config(), sides, cfg["replicates"], cfg["burnin"], cfg["period"],
                     cfg["seed"], ncfg_kw, cfg["chains"], cfg["workers"])
    out = cfg["out"]
    meta = provenance(cfg)
    header = ["side", "replicate", "iteration"] + [f"theta{i + 1}" for i in range(model.d)] + [
        "n_cells", "nseint", "nnbseint", "u", "nois_iterations", "converged", "error"]
    write_csv(os.path.join(out, "replicates.csv"), header,
              ([r["side"], r["replicate"], r["iteration"], *r["theta"], r["n_cells"], r["nseint"],
                r["nnbseint"], r["u"], r["iterations"], int(r["converged"]), r["error"]] for r in rows), meta)
    summary = {}
    for side in sides:
        sel = [r for r in rows if r["side"] == float(side)]
        summary[repr(float(side))] = {
            "theta": [summarize([r["theta"][i] for r in sel]) for i in range(model.d)],
            "mean_cells": float(np.mean([r["n_cells"] for r in sel])),
        }
    result = {**meta, "summary": summary}
    write_json(os.path.join(out, "summary.json"), result)
    for side in sides:
        th = summary[repr(float(side))]["theta"][0]
        print(f"side {side}: theta1 median {th.get('median', float('nan')):.4f} IQR {th.get('iqr', float('nan')):.4f}")
    return result


def cmd_ppfit(cfg):
    if cfg["rho"] is None or not cfg["rho"] > 0:
        raise ConfigError("--rho must be a positive number")
    if cfg["window"]:
        try:
            window = load_window(cfg["window"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read window: {exc}") from None
    else:
        window = _square(cfg["side"][0] if isinstance(cfg["side"], list) else cfg["side"])
    try:
        X = PointPattern.read_csv(cfg["pattern"], window)
    except OSError as exc:
        raise ConfigError(f"cannot read pattern: {exc}") from None
    if cfg["pp_model"] == "strauss":
        if not cfg["radius"]:
            raise ConfigError("--radius is required for the strauss model")
        model = PpModel.strauss([0.0, 0.0], cfg["radius"])
    else:
        model = PpModel.poisson(0.0)
    fit = fit_logistic(model, X, cfg["rho"], np.random.default_rng(np.random.SeedSequence(cfg["seed"])))
    n = len(X)
    result = {**provenance(cfg), "theta_hat": [float(x) for x in fit.theta], "converged": fit.converged,
              "iterations": fit.iterations, "loglik": fit.loglik, "n_points": n, "n_dummy": fit.n_dummy,
              "window_area": X.area,
              "poisson_benchmark": math.log(n / X.area) if n else None}
    write_json(os.path.join(cfg["out"], "ppfit.json"), result)
    print("theta_hat = " + ", ".join(f"{x:.6g}" for x in fit.theta))
    return result


def cmd_period(cfg):
    _nonneg(cfg, "burnin")
    if not 0 < cfg["fraction"] < 1:
        raise ConfigError("--fraction must lie in (0, 1)")
    model = _model(cfg)
    side = cfg["side"][0] if isinstance(cfg["side"], list) else cfg["side"]
    chain = SmfChain(model, _square(side), rng=np.random.SeedSequence(cfg["seed"]))
    chain.run(cfg["burnin"])
    period = chain.sampling_period(cfg["fraction"], pilot=cfg["pilot"], max_pilot=cfg["max_pilot"])
    result = {**provenance(cfg), "period": period}
    if cfg["out"]:
        write_json(os.path.join(cfg["out"], "period.json"), result)
    print(period)
    return result


# ----------------------------------------------------------------------
def build_parser():
    p = argparse.ArgumentParser(prog="ttessel", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        sp.add_argument("--config", help="JSON file whose keys override the flags")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="out")
        if model:
            sp.add_argument("--model", choices=BUILTIN_MODELS, default="crtt")
            sp.add_argument("--theta", type=float, nargs="+", default=None)

    def nois_flags(sp):
        sp.add_argument("--delta", type=float, default=None, help="NOIS tolerance (negative: never stop early)")
        sp.add_argument("--max-iter", dest="max_iter", type=int, default=None)
        sp.add_argument("--epsilon", type=float, default=1.0, help="Newton step size")
        sp.add_argument("--init", choices=["crtt-start", "zeros"], default=None)

    sp = sub.add_parser("simulate", help="run an SMF chain and save sampled tessellations")
    common(sp)
    sp.add_argument("--side", type=float, default=1.0)
    sp.add_argument("--burnin", type=int, default=None)
    sp.add_argument("--period", type=int, default=None)
    sp.add_argument("--samples", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="fit a model to a tessellation file by NOIS")
    common(sp)
    sp.add_argument("tessellation")
    nois_flags(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("study", help="replicate simulation and estimation study")
    common(sp)
    sp.add_argument("--side", type=float, action="append", default=None)
    sp.add_argument("--replicates", type=int, default=100)
    sp.add_argument("--burnin", type=int, default=None)
    sp.add_argument("--period", type=int, default=None)
    sp.add_argument("--chains", type=int, default=1, help="independent chains per side")
    sp.add_argument("--workers", type=int, default=1)
    nois_flags(sp)
    sp.set_defaults(func=cmd_study)

    sp = sub.add_parser("ppfit", help="logistic fit of a point pattern")
    common(sp, model=False)
    sp.add_argument("pattern", help="CSV with x,y columns")
    sp.add_argument("--window", help="JSON window polygon (default: square of --side)")
    sp.add_argument("--side", type=float, default=1.0)
    sp.add_argument("--model", dest="pp_model", choices=["poisson", "strauss"], default="poisson")
    sp.add_argument("--radius", type=float, default=None)
    sp.add_argument("--rho", type=float, required=True, help="dummy point intensity")
    sp.set_defaults(func=cmd_ppfit)

    sp = sub.add_parser("period", help="calibrate the sampling period by segment renewal")
    common(sp)
    sp.set_defaults(out=None)
    sp.add_argument("--side", type=float, default=1.0)
    sp.add_argument("--burnin", type=int, default=None)
    sp.add_argument("--fraction", type=float, default=0.75)
    sp.add_argument("--pilot", type=int, default=20000)
    sp.add_argument("--max-pilot", dest="max_pilot", type=int, default=2_000_000)
    sp.set_defaults(func=cmd_period)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args, parser)
        cfg.pop("verbose", None)
        args.func(cfg)
    except (ConfigError, InvalidTessellationError, PointProcessError, GeometryError,
            PseudoLikelihoodError) as exc:
        print(f"ttessel {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ChainFrozenError as exc:
        print(f"ttessel {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
