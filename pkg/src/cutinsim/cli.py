"""Command line interface.

Every command resolves one configuration (defaults, optional JSON file,
--set overrides, then --seed/--out flags), writes its artifacts under
the output directory, and embeds the fully resolved configuration in
its JSON output.  Reruns with identical inputs produce byte-identical
files.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .annealing import optimize
from .behavior_model import MixedBehaviorModel, generate_situations, qq_points
from .config import ESTIMATOR_METHODS, EstimatorSettings, RunConfig, load_config
from .cross_entropy import ce_optimize, proposal_from_theta
from .errors import (
    ConfigError,
    CutinsimError,
    DataError,
    NumericalError,
)
from .estimators import GridProposal, cmc_estimate, is_estimate, nominal_proposal
from .grid import GridSpec
from .observations import read_observations, write_observations
from .policy import (
    MixedPolicyParams,
    RationalityVector,
    UtilitySpec,
    behavior_category_of,
)
from .scenario import (
    CutInAction,
    DiscreteSpeedDist,
    SubjectState,
    is_rare_event,
    rollout,
)
from .serialize import (
    load_json,
    save_json,
    write_ce_trace_csv,
    write_qq_csv,
    write_sa_trace_csv,
    write_samples_csv,
    write_trajectory_csv,
)
from .synthetic import synthesize

__all__ = ["main", "build_parser"]

_METHOD_NAMES = {"cmc": "CMC", "is-ce": "IS_CE", "is-br": "IS_BR"}


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _resolve(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, sets=tuple(args.set),
                       seed=args.seed, output_dir=args.out)


def _outdir(cfg: RunConfig) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _emit(cfg: RunConfig, command: str, result: dict, name: str) -> str:
    """Write the command's JSON artifact with the resolved config embedded."""
    doc = cfg.to_dict()
    # The output location does not influence any result; leaving it out
    # keeps artifacts byte-identical across output directories.
    doc.pop("output_dir")
    path = os.path.join(_outdir(cfg), name)
    save_json({"command": command, "config": doc, "result": result}, path)
    print(f"wrote {path}")
    return path


def _artifact_result(path: str) -> dict:
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise DataError(f"{path}: expected a JSON object")
    result = doc.get("result", doc)
    if not isinstance(result, dict):
        raise DataError(f"{path}: malformed artifact result")
    return result


def _floats(raw: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p for p in raw.split(",") if p.strip()]
    if len(parts) != n:
        raise ConfigError(f"{what} needs {n} comma-separated numbers, got {raw!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


# ---------------------------------------------------------------------------
# Proposal construction for the importance-sampling estimators
# ---------------------------------------------------------------------------

def _br_proposal(cfg: RunConfig, scene, args) -> GridProposal:
    if args.proposal:
        result = _artifact_result(args.proposal)
        if "best_lambda" not in result:
            raise ConfigError(
                f"{args.proposal} is not an annealing artifact; "
                "is-br needs the output of 'optimize --kind sa' or --lam")
        lam = RationalityVector.from_dict(result["best_lambda"])
    elif args.lam:
        lam = RationalityVector(*_floats(args.lam, 3, "--lam"))
    else:
        raise ConfigError(
            "is-br needs a behavior vector: pass --proposal <optimize-sa "
            "artifact> or --lam LAM_GAP,LAM_TTC,LAM_PROGRESS")
    masses = scene.policy_masses(lam)
    dist = scene.scenario.subject_speeds
    descriptor = {"kind": "br", "bid": behavior_category_of(lam),
                  **lam.to_dict()}
    return GridProposal(dist.values, dist.prob_array(), masses, descriptor)


def _ce_proposal(cfg: RunConfig, scene, nominal: GridProposal,
                 args) -> GridProposal:
    if args.proposal:
        result = _artifact_result(args.proposal)
        if "theta" not in result:
            raise ConfigError(
                f"{args.proposal} is not a cross-entropy artifact; "
                "is-ce needs the output of 'optimize --kind ce' or --theta")
        t = result["theta"]
        theta = (t["v_mean"], t["v_std"], t["gap_mean"], t["gap_std"])
        mix = float(result.get("defensive_mix", cfg.ce.defensive_mix))
    elif args.theta:
        theta = _floats(args.theta, 4, "--theta")
        mix = cfg.ce.defensive_mix
    else:
        raise ConfigError(
            "is-ce needs proposal parameters: pass --proposal <optimize-ce "
            "artifact> or --theta V_MEAN,V_STD,GAP_MEAN,GAP_STD")
    return proposal_from_theta(theta, nominal, scene, mix)


# ---------------------------------------------------------------------------
# Fitted-model artifact bundle
# ---------------------------------------------------------------------------

def _load_fit_bundle(path: str):
    """Recover (band params, speed dists, uspec, gspec, ttc_cap) from fit.json."""
    result = _artifact_result(path)
    try:
        fits = result["fit"]
        uspec = UtilitySpec(**result["utility"])
        gspec = GridSpec.from_dict(result["grid"])
        ttc_cap = float(result["ttc_cap"])
        dists = {b: DiscreteSpeedDist.from_dict(d)
                 for b, d in result["speed_dists"].items()}
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a fit artifact ({exc})") from exc
    params = {b: MixedPolicyParams.from_dict(f["params"])
              for b, f in fits.items()}
    return params, dists, uspec, gspec, ttc_cap


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _resolve(args)
    obs = synthesize(cfg.synth, cfg.seed)
    csv_path = os.path.join(_outdir(cfg), "synthetic.csv")
    write_observations(obs, csv_path)
    print(f"wrote {csv_path}")
    _emit(cfg, "synth", {"n_rows": len(obs), "band_counts": obs.band_counts()},
          "synth.json")
    return 0


def cmd_estimate(args) -> int:
    cfg = _resolve(args)
    est = cfg.estimator
    if args.method is not None or args.n is not None:
        est = EstimatorSettings(
            n=args.n if args.n is not None else est.n,
            method=args.method if args.method is not None else est.method)
        cfg = replace(cfg, estimator=est)
    scene = cfg.scene()
    nominal = nominal_proposal(scene, cfg.nominal)
    sink: list | None = [] if args.samples else None
    if est.method == "cmc":
        proposal = nominal
        res = cmc_estimate(nominal, est.n, scene, cfg.seed, sample_sink=sink)
    else:
        if est.method == "is-br":
            proposal = _br_proposal(cfg, scene, args)
        else:
            proposal = _ce_proposal(cfg, scene, nominal, args)
        res = is_estimate(nominal, proposal, est.n, scene, cfg.seed,
                          method=_METHOD_NAMES[est.method], sample_sink=sink)
    result = {"estimate": res.to_dict(), "proposal": proposal.descriptor}
    _emit(cfg, "estimate", result, "estimate.json")
    if sink is not None:
        path = os.path.join(cfg.output_dir, "samples.csv")
        write_samples_csv(sink, path)
        print(f"wrote {path}")
    print(f"p_hat = {res.p_hat!r} (ci95 = {res.ci95!r}, "
          f"events = {res.n_events}/{res.n})")
    return 0


def cmd_optimize(args) -> int:
    cfg = _resolve(args)
    scene = cfg.scene()
    if args.kind == "sa":
        res = optimize(cfg.sa_config(), scene)
        state = res.state
        result = {
            "best_bid": res.best_bid,
            "best_lambda": res.best_lambda.to_dict(),
            "p_max_per_bid": {b: state.p_max_per_bid[b]
                              for b in sorted(state.p_max_per_bid)},
            "lambda_max_per_bid": {b: state.lambda_max_per_bid[b].to_dict()
                                   for b in sorted(state.lambda_max_per_bid)},
            "exhausted": state.exhausted,
            "n_evaluations": len(state.trace),
        }
        _emit(cfg, "optimize", result, "optimize_sa.json")
        trace_path = os.path.join(cfg.output_dir, "sa_trace.csv")
        write_sa_trace_csv(state.trace, trace_path)
        print(f"wrote {trace_path}")
        rate = state.p_max_per_bid[res.best_bid]
        print(f"best category {res.best_bid} at rate {rate!r} "
              f"with lambda {res.best_lambda.as_tuple()!r}")
    else:
        nominal = nominal_proposal(scene, cfg.nominal)
        res = ce_optimize(nominal, scene, cfg.ce, cfg.seed)
        desc = res.proposal.descriptor
        result = {
            "theta": {k: desc[k]
                      for k in ("v_mean", "v_std", "gap_mean", "gap_std")},
            "defensive_mix": desc["defensive_mix"],
            "converged": res.converged,
            "iterations": res.iterations,
        }
        _emit(cfg, "optimize", result, "optimize_ce.json")
        trace_path = os.path.join(cfg.output_dir, "ce_trace.csv")
        write_ce_trace_csv(res.trace, trace_path)
        print(f"wrote {trace_path}")
        print(f"theta = {tuple(result['theta'][k] for k in result['theta'])!r} "
              f"(converged = {res.converged}, iterations = {res.iterations})")
    return 0


def cmd_fit(args) -> int:
    cfg = _resolve(args)
    obs = read_observations(args.data, sensor_given=args.sensor_ttc,
                            strict=not args.lenient)
    f = cfg.fit
    model = MixedBehaviorModel(
        gap_star=f.gap_star, ttc_star=f.ttc_star, v_star=f.v_star,
        v_max=f.v_max, gap_max=f.gap_max, n_v=f.n_v, n_gap=f.n_gap,
        lambda_bound=f.lambda_bound, min_obs=f.min_obs, max_nfev=f.max_nfev,
        ttc_cap=f.ttc_cap, seed=cfg.seed)
    model.fit(obs)
    result = {
        "fit": model.result_.to_dict(),
        "utility": {"gap_star": f.gap_star, "ttc_star": f.ttc_star,
                    "v_star": f.v_star},
        "grid": model.gspec_.to_dict(),
        "ttc_cap": f.ttc_cap,
        "speed_dists": {b: model.band_speed_dists_[b].to_dict()
                        for b in sorted(model.band_speed_dists_)},
    }
    _emit(cfg, "fit", result, "fit.json")
    for band in model.result_.bands():
        bf = model.result_.band_fits[band]
        print(f"{band}: residual = {bf.residual_norm!r}, "
              f"converged = {bf.converged}, n_obs = {bf.n_obs}")
    return 0


def cmd_qq(args) -> int:
    cfg = _resolve(args)
    obs = read_observations(args.data, sensor_given=args.sensor_ttc,
                            strict=not args.lenient)
    params, dists, uspec, gspec, ttc_cap = _load_fit_bundle(args.fit)
    present = obs.band_counts()
    if args.band is not None:
        if args.band not in params:
            raise ConfigError(
                f"band {args.band!r} is not in the fit artifact "
                f"(has: {', '.join(sorted(params))})")
        bands = [args.band]
    else:
        bands = [b for b in sorted(params) if present.get(b, 0) > 0]
        if not bands:
            raise DataError("no fitted band has observations in the data")
    summary: dict = {"n_points": args.n_points, "pearson_r": {}}
    out = _outdir(cfg)
    for band in bands:
        band_obs = obs.select_band(band)
        summary["pearson_r"][band] = {}
        for metric in ("ttc", "gap"):
            qq = qq_points(band_obs, params[band], metric, args.n_points,
                           uspec=uspec, gspec=gspec,
                           speed_dist=dists.get(band), ttc_cap=ttc_cap)
            path = os.path.join(out, f"qq_{band.lower()}_{metric}.csv")
            write_qq_csv(qq, path)
            print(f"wrote {path}")
            summary["pearson_r"][band][metric] = qq.pearson_r
            print(f"{band} {metric}: pearson r = {qq.pearson_r!r}")
    _emit(cfg, "qq", summary, "qq.json")
    return 0


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    params, dists, uspec, gspec, _ = _load_fit_bundle(args.fit)
    if args.band not in params:
        raise ConfigError(
            f"band {args.band!r} is not in the fit artifact "
            f"(has: {', '.join(sorted(params))})")
    if args.band not in dists:
        raise DataError(f"fit artifact lacks a speed distribution for {args.band!r}")
    categories = None
    if args.categories:
        categories = frozenset(c.strip() for c in args.categories.split(",")
                               if c.strip())
    obs = generate_situations(params[args.band], args.n, dists[args.band],
                              cfg.seed, uspec=uspec, gspec=gspec,
                              category_filter=categories,
                              jitter=not args.no_jitter)
    csv_path = os.path.join(_outdir(cfg), "generated.csv")
    write_observations(obs, csv_path)
    print(f"wrote {csv_path}")
    result = {"band": args.band, "n": args.n,
              "categories": sorted(categories) if categories else None,
              "jitter": not args.no_jitter}
    _emit(cfg, "generate", result, "generate.json")
    return 0


def cmd_trajectory(args) -> int:
    cfg = _resolve(args)
    scene = cfg.scene()
    traj = rollout(SubjectState(args.speed), CutInAction(args.v_lc, args.gap),
                   scene, seed=cfg.seed)
    csv_path = os.path.join(_outdir(cfg), "trajectory.csv")
    write_trajectory_csv(traj, csv_path)
    print(f"wrote {csv_path}")
    event = is_rare_event(traj, cfg.rare)
    result = {"speed": args.speed, "v_lc": args.v_lc, "gap": args.gap,
              "event": event, "min_gap": float(traj.gap_series.min())}
    _emit(cfg, "trajectory-dump", result, "trajectory.json")
    print(f"event = {event}, min gap = {result['min_gap']!r}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON config; missing keys fall back to defaults")
    common.add_argument("--seed", type=int, metavar="N",
                        help="run seed (overrides the config)")
    common.add_argument("--out", metavar="DIR",
                        help="output directory (overrides the config)")
    common.add_argument("--set", action="append", default=[],
                        metavar="KEY.PATH=VALUE",
                        help="override one config value; repeatable")

    parser = argparse.ArgumentParser(
        prog="cutinsim",
        description="Rare-event estimation for vehicle cut-in scenarios "
                    "with bounded-rationality driving policies.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic observation dataset")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", parents=[common],
                       help="estimate the near-crash probability")
    p.add_argument("--method", choices=ESTIMATOR_METHODS,
                   help="estimator (default from config)")
    p.add_argument("--n", type=int, metavar="N",
                   help="sample budget (default from config)")
    p.add_argument("--proposal", metavar="PATH",
                   help="optimize artifact supplying the proposal")
    p.add_argument("--lam", metavar="G,T,P",
                   help="behavior vector for is-br, e.g. -2,-2,8")
    p.add_argument("--theta", metavar="VM,VS,GM,GS",
                   help="truncated-normal parameters for is-ce")
    p.add_argument("--samples", action="store_true",
                   help="also write the per-sample log samples.csv")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("optimize", parents=[common],
                       help="search for a high-risk proposal")
    p.add_argument("--kind", choices=("sa", "ce"), required=True,
                   help="sa: anneal over behavior categories; "
                        "ce: cross-entropy on action parameters")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("fit", parents=[common],
                       help="fit mixed-behavior parameters per speed band")
    p.add_argument("--data", required=True, metavar="PATH",
                   help="observations CSV (v_s,v_lc,gap,ttc)")
    p.add_argument("--lenient", action="store_true",
                   help="skip malformed rows instead of failing")
    p.add_argument("--sensor-ttc", action="store_true",
                   help="accept ttc as measured rather than derived")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("qq", parents=[common],
                       help="quantile-quantile check of a fitted model")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--fit", required=True, metavar="PATH",
                   help="fit artifact (fit.json)")
    p.add_argument("--band", choices=("LOW", "MED", "HIGH"),
                   help="restrict to one speed band")
    p.add_argument("--n-points", type=int, default=200, metavar="N")
    p.add_argument("--lenient", action="store_true",
                   help="skip malformed rows instead of failing")
    p.add_argument("--sensor-ttc", action="store_true",
                   help="accept ttc as measured rather than derived")
    p.set_defaults(func=cmd_qq)

    p = sub.add_parser("generate", parents=[common],
                       help="sample situations from a fitted model")
    p.add_argument("--fit", required=True, metavar="PATH",
                   help="fit artifact (fit.json)")
    p.add_argument("--band", required=True, choices=("LOW", "MED", "HIGH"))
    p.add_argument("--n", type=int, default=1000, metavar="N")
    p.add_argument("--categories", metavar="B1,B2,...",
                   help="restrict to these behavior categories")
    p.add_argument("--no-jitter", action="store_true",
                   help="emit cell centers instead of jittered points")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("trajectory-dump", parents=[common],
                       help="roll out one cut-in and dump the trajectory")
    p.add_argument("--speed", type=float, required=True,
                   help="subject speed [m/s]")
    p.add_argument("--v-lc", type=float, required=True,
                   help="cut-in speed at lane crossing [m/s]")
    p.add_argument("--gap", type=float, required=True,
                   help="bumper-to-bumper gap at lane crossing [m]")
    p.set_defaults(func=cmd_trajectory)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CutinsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
