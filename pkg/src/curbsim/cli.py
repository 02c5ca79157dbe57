"""Command-line driver.

Subcommands: gen, ingest, preprocess, schedule, eval, sweep, cost.
Parameters come from flags, optionally backed by a JSON config file
(flat key/value object; flags win). Every stochastic command requires
--seed. Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baselines import POLICY_KINDS, SchedulePolicy
from .crowd import crowd_from_likelihoods
from .dataio import (
    CascadeDataset,
    DataFormatError,
    ResultRow,
    ResultsTable,
    export_dataset,
    export_results,
    ingest,
    preprocess,
)
from .evaluate import (
    EvalParams,
    SweepSpec,
    misinfo_reduction,
    misinfo_reduction_macro,
    n_dispatched,
    policy_cost,
    precision,
    replay_evaluate,
    sweep,
)
from .kernel import KernelParams
from .scheduler import ControlParams
from .seeding import derive_rng
from .simulate import (
    DEFAULT_GAMMA,
    DEFAULT_HORIZON,
    DEFAULT_OMEGA,
    DEFAULT_P_F1_M0,
    DEFAULT_P_F1_M1,
    SimConfig,
    expand_skeleton,
    sample_flags,
    synthetic_dataset,
)

USAGE_ERROR = 1
DATA_ERROR = 2
INTERNAL_ERROR = 3

# config keys (JSON file) mirror the long flag names with underscores
COMMON_DEFAULTS = {
    "gamma": DEFAULT_GAMMA,
    "omega": DEFAULT_OMEGA,
    "p_f1_m1": DEFAULT_P_F1_M1,
    "p_f1_m0": DEFAULT_P_F1_M0,
    "p_d": None,  # default: dataset fake fraction
    "prior_strength": 1.0,
    "horizon_start": DEFAULT_HORIZON[0],
    "horizon_end": DEFAULT_HORIZON[1],
}


class UsageError(ValueError):
    pass


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise UsageError("config file must hold a JSON object")
    return config


def _setting(args: argparse.Namespace, config: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    if key in COMMON_DEFAULTS:
        return COMMON_DEFAULTS[key]
    return default


def _kernel(args, config) -> KernelParams:
    return KernelParams(
        gamma=float(_setting(args, config, "gamma")),
        omega=float(_setting(args, config, "omega")),
    )


def _horizon(args, config) -> tuple[float, float]:
    return (
        float(_setting(args, config, "horizon_start")),
        float(_setting(args, config, "horizon_end")),
    )


def _eval_params(args, config, dataset: CascadeDataset) -> EvalParams:
    p1 = float(_setting(args, config, "p_f1_m1"))
    p0 = float(_setting(args, config, "p_f1_m0"))
    p_d = _setting(args, config, "p_d")
    p_d = dataset.fake_fraction() if p_d is None else float(p_d)
    strength = float(_setting(args, config, "prior_strength"))
    crowd = crowd_from_likelihoods(p1, p0, p_d, strength)
    t0, tf = _horizon(args, config)
    return EvalParams(
        crowd=crowd, kernel=_kernel(args, config), t0=t0, tf=tf,
        p_f1_m1=p1, p_f1_m0=p0,
    )


def _policy(args, config) -> SchedulePolicy:
    kind = _setting(args, config, "policy")
    if kind is None:
        raise UsageError("--policy is required")
    if kind not in POLICY_KINDS:
        raise UsageError(f"unknown policy {kind!r}; choose from {POLICY_KINDS}")
    if kind == "flag_sum":
        threshold = _setting(args, config, "threshold")
        if threshold is None:
            raise UsageError("flag_sum needs --threshold")
        return SchedulePolicy(kind=kind, threshold=int(threshold))
    q = _setting(args, config, "q")
    if q is None:
        raise UsageError(f"{kind} needs --q")
    return SchedulePolicy(kind=kind, q=float(q))


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for stochastic commands")
    return int(args.seed)


def cmd_gen(args, config) -> int:
    seed = _require_seed(args)
    t0, tf = _horizon(args, config)
    sim = SimConfig(
        kernel=_kernel(args, config),
        t0=t0,
        tf=tf,
        p_f1_m1=float(_setting(args, config, "p_f1_m1")),
        p_f1_m0=float(_setting(args, config, "p_f1_m0")),
        seed=seed,
    )
    dataset = synthetic_dataset(
        n_stories=int(_setting(args, config, "n_stories", 50)),
        fake_fraction=float(_setting(args, config, "fake_fraction", 0.15)),
        posts_per_story=(
            int(_setting(args, config, "posts_min", 5)),
            int(_setting(args, config, "posts_max", 20)),
        ),
        sim=sim,
        rng=derive_rng(seed, "gen"),
        reshare_range=(
            float(_setting(args, config, "reshare_min", 0.0)),
            float(_setting(args, config, "reshare_max", 0.05)),
        ),
    )
    export_dataset(dataset, args.out)
    print(
        f"wrote {dataset.n_stories()} stories "
        f"({dataset.total_exposures()} exposures) to {args.out}"
    )
    return 0


def cmd_ingest(args, config) -> int:
    dataset = ingest(args.input, format=args.format)
    if args.expand:
        seed = _require_seed(args)
        t0, tf = _horizon(args, config)
        sim = SimConfig(
            kernel=_kernel(args, config),
            t0=t0,
            tf=tf,
            p_f1_m1=float(_setting(args, config, "p_f1_m1")),
            p_f1_m0=float(_setting(args, config, "p_f1_m0")),
            seed=seed,
        )
        for sid, record in dataset.stories.items():
            rng = derive_rng(seed, "expand", sid)
            events = expand_skeleton(record.events, sim, rng)
            events = sample_flags(events, record.label, (sim.p_f1_m1, sim.p_f1_m0), rng)
            record.events = events
            record.user_ids = [f"x{i}" for i in range(len(events))]
    export_dataset(dataset, args.out)
    print(f"ingested {dataset.n_stories()} stories -> {args.out}")
    return 0


def cmd_preprocess(args, config) -> int:
    seed = _require_seed(args)
    dataset = ingest(args.input)
    filtered = preprocess(
        dataset,
        derive_rng(seed, "preprocess"),
        max_events=int(_setting(args, config, "max_events", 3000)),
        tail_decile_cap=float(_setting(args, config, "tail_decile_cap", 0.01)),
        fake_cap=float(_setting(args, config, "fake_cap", 0.15)),
    )
    export_dataset(filtered, args.out)
    for line in filtered.provenance.log:
        print(line, file=sys.stderr)
    print(
        f"kept {filtered.n_stories()}/{dataset.n_stories()} stories -> {args.out}"
    )
    return 0


def cmd_schedule(args, config) -> int:
    seed = _require_seed(args)
    dataset = ingest(args.data)
    params = _eval_params(args, config, dataset)
    policy = _policy(args, config)
    outcomes = replay_evaluate(dataset, policy, params, seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("story_id,time\n")
        for o in outcomes:
            t = "" if o.decision.time is None else str(o.decision.time)
            fh.write(f"{o.story_id},{t}\n")
    print(f"dispatched {n_dispatched(outcomes)}/{len(outcomes)} stories -> {args.out}")
    return 0


def cmd_eval(args, config) -> int:
    seed = _require_seed(args)
    dataset = ingest(args.data)
    params = _eval_params(args, config, dataset)
    policy = _policy(args, config)
    n_seeds = int(_setting(args, config, "n_seeds", 1))
    rows = []
    for s in range(seed, seed + n_seeds):
        outcomes = replay_evaluate(dataset, policy, params, s)
        rows.append(
            ResultRow(
                policy=policy.kind,
                q=policy.q,
                threshold=policy.threshold,
                seed=s,
                n_fact_checks=n_dispatched(outcomes),
                precision=precision(outcomes),
                misinfo_reduction=misinfo_reduction(outcomes),
                misinfo_reduction_macro=misinfo_reduction_macro(outcomes),
                runtime_s=0.0,
            )
        )
    def fmt(values):
        known = [v for v in values if v is not None]
        return f"{np.mean(known):.4f}" if known else "n/a"

    print(f"policy={policy.kind} seeds={n_seeds}")
    print(f"  fact_checks       mean {np.mean([r.n_fact_checks for r in rows]):.2f}")
    print(f"  precision         mean {fmt([r.precision for r in rows])}")
    print(f"  reduction         mean {fmt([r.misinfo_reduction for r in rows])}")
    print(f"  reduction (macro) mean {fmt([r.misinfo_reduction_macro for r in rows])}")
    if args.out:
        export_results(ResultsTable(rows=rows), args.out, format=args.out_format)
        print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


def cmd_sweep(args, config) -> int:
    seed = _require_seed(args)
    dataset = ingest(args.data)
    params = _eval_params(args, config, dataset)
    kind = _setting(args, config, "policy")
    if kind not in POLICY_KINDS:
        raise UsageError(f"unknown policy {kind!r}")
    try:
        grid = tuple(float(x) for x in args.grid.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --grid: {exc}") from exc
    n_seeds = int(_setting(args, config, "n_seeds", 1))
    spec = SweepSpec(
        policy_kind=kind,
        grid=grid,
        seeds=tuple(range(seed, seed + n_seeds)),
        params=params,
        measure_runtime=not args.no_runtime,
    )
    table = sweep(spec, dataset)
    table.rows.sort(key=lambda r: (r.policy, r.q or 0.0, r.threshold or 0, r.seed))
    export_results(table, args.out, format=args.out_format)
    for failure in table.failures:
        print(f"failed: {failure}", file=sys.stderr)
    print(f"wrote {len(table.rows)} rows -> {args.out}")
    return 0


def cmd_cost(args, config) -> int:
    seed = _require_seed(args)
    dataset = ingest(args.data)
    params = _eval_params(args, config, dataset)
    policy = _policy(args, config)
    t0, tf = _horizon(args, config)
    cost_q = _setting(args, config, "cost_q")
    ctrl = ControlParams(
        q=float(cost_q) if cost_q is not None else (policy.q or 1.0), t0=t0, tf=tf
    )
    result = policy_cost(
        dataset,
        policy,
        params.crowd,
        ctrl,
        n_runs=int(_setting(args, config, "n_runs", 100)),
        seed=seed,
        kernel=params.kernel,
        likelihoods=(params.p_f1_m1, params.p_f1_m0),
    )
    print(f"cost mean={result.mean:.6g} stderr={result.stderr:.3g}")
    print(
        f"  misinfo={result.misinfo_mean:.6g} control={result.control_mean:.6g} "
        f"terminal={result.terminal_mean:.6g}"
    )
    print(f"  mean fact-checks per run: {result.mean_fact_checks:.2f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curbsim",
        description="Crowd-powered fact-checking: simulate, schedule, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"curbsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON config file (flags override it)")
        if seed:
            p.add_argument("--seed", type=int, help="RNG seed (required)")
        for key in ("gamma", "omega", "p_f1_m1", "p_f1_m0", "p_d", "prior_strength",
                    "horizon_start", "horizon_end"):
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-stories", dest="n_stories", type=int)
    p.add_argument("--fake-fraction", dest="fake_fraction", type=float)
    p.add_argument("--posts-min", dest="posts_min", type=int)
    p.add_argument("--posts-max", dest="posts_max", type=int)
    p.add_argument("--reshare-min", dest="reshare_min", type=float)
    p.add_argument("--reshare-max", dest="reshare_max", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("ingest", help="read a dataset file; optionally expand skeletons")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("canonical_jsonl", "cascade_csv"),
                   default="canonical_jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--expand", action="store_true",
                   help="synthesize exposures/flags around the ingested skeleton")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="apply the dataset filters")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-events", dest="max_events", type=int)
    p.add_argument("--tail-decile-cap", dest="tail_decile_cap", type=float)
    p.add_argument("--fake-cap", dest="fake_cap", type=float)
    p.set_defaults(func=cmd_preprocess)

    def policy_flags(p):
        p.add_argument("--policy", choices=POLICY_KINDS)
        p.add_argument("--q", type=float)
        p.add_argument("--threshold", type=int)

    p = sub.add_parser("schedule", help="sample dispatch decisions for a dataset")
    common(p)
    p.add_argument("--data", required=True)
    policy_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("eval", help="replay a policy and report the two metrics")
    common(p)
    p.add_argument("--data", required=True)
    policy_flags(p)
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--out")
    p.add_argument("--out-format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate a policy over a tunable grid")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--policy", choices=POLICY_KINDS)
    p.add_argument("--grid", required=True, help="comma-separated q (or threshold) values")
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--no-runtime", action="store_true",
                   help="write runtime_s as 0.0 for byte-reproducible output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost", help="Monte Carlo estimate of the control objective")
    common(p)
    p.add_argument("--data", required=True)
    policy_flags(p)
    p.add_argument("--cost-q", dest="cost_q", type=float,
                   help="cost weight (defaults to the policy q)")
    p.add_argument("--n-runs", dest="n_runs", type=int)
    p.set_defaults(func=cmd_cost)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 0 for --help/--version
        return 0 if exc.code == 0 else USAGE_ERROR
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except Exception as exc:  # noqa: BLE001 - surface as internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
