"""Command-line front door.

Subcommands: train, eval, bench-lsap, bench-cell, sinkhorn-demo, gen.  All
outputs are CSV with a header row and deterministic given --seed (measured
wall-clock columns excepted).  Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from . import cell, datasets, lsap, nn, oracles, training
from .opcount import OpCounter
from .sinkhorn import SinkhornConfig, affinity_trace

EPILOG = """\
CSV schemas (all files start with a header row):
  train log        iteration,trainLoss,valCost,bestSoFar
  eval             instances,meanCost,oracleMeanCost,degradationPercent,feasibleFraction
  bench-lsap       n,m,instances,snnMeanCost,oracleMeanCost,degradationPercent,
                   feasibleFraction,snnForwardOps,snnSecondsPerInstance,
                   hungarianSecondsPerInstance
  bench-cell       n,pMacroDbm,pSmallDbm,instances,snnMeanRate,baselineMeanRate,
                   oracleMeanRate,snnSecondsPerInstance,baselineSecondsPerInstance,
                   snnForwardOps   (oracleMeanRate is nan for n > 5)
  sinkhorn-demo    iteration,affinityK<k>...  (mean affinity per iteration,
                   one column per cascade count; row 0 is the exp-normalized
                   input, i.e. the row softmax before any full iteration)
  gen              instanceId,i,j,value plus a <out>.meta.json sidecar

Checkpoints are text files: one SNNCKPT v1 network block per sub-network
followed by a `META <count>` section of `key value` lines.
"""


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, TypeError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snnassign",
        description="Assignment networks with a Sinkhorn output layer: "
                    "training, exact baselines and benchmarks.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, write checkpoint and log")
    p.add_argument("--problem", choices=("lsap", "cell"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, help="jobs for lsap (defaults to --n)")
    p.add_argument("--pmacro-dbm", type=float, default=20.0)
    p.add_argument("--psmall-dbm", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=20000, help="training iterations")
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=training.TRAIN_SINKHORN.tau,
                   help="training-time Sinkhorn temperature; sharper settings "
                        "saturate and stall short runs")
    p.add_argument("--cascades", type=int,
                   default=training.TRAIN_SINKHORN.cascades)
    p.add_argument("--sinkhorn-iters", type=int,
                   default=training.TRAIN_SINKHORN.total_iterations)
    p.add_argument("--val-size", type=int, default=1000)
    p.add_argument("--val-period", type=int, default=500)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against its oracle")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--problem", choices=("lsap", "cell"),
                   help="cross-checked against the checkpoint")
    p.add_argument("--n", type=int, help="cross-checked against the checkpoint")
    p.add_argument("--m", type=int, help="cross-checked against the checkpoint")
    p.add_argument("--trials", type=int, default=1000, help="test instances")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True, help="metrics CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-lsap", help="score and time a trained LSAP model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_lsap)

    p = sub.add_parser("bench-cell",
                       help="compare trained cell models with the baselines")
    p.add_argument("--checkpoint", action="append", required=True,
                   help="repeatable, one trained cell checkpoint per row")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_cell)

    p = sub.add_parser("sinkhorn-demo",
                       help="mean affinity per iteration for several cascade counts")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--tau", type=float, default=20.0)
    p.add_argument("--cascades", default="1,4",
                   help="comma-separated cascade counts, each dividing --iters")
    p.add_argument("--iters", type=int, default=20, help="total Sinkhorn iterations")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sinkhorn_demo)

    p = sub.add_parser("gen", help="write a dataset CSV plus JSON sidecar")
    p.add_argument("--problem", choices=("lsap", "cell"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, help="jobs for lsap (defaults to --n)")
    p.add_argument("--pmacro-dbm", type=float, default=20.0)
    p.add_argument("--psmall-dbm", type=float, default=10.0)
    p.add_argument("--trials", type=int, default=1000, help="instance count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    return parser


def _sinkhorn_config(args) -> SinkhornConfig:
    return SinkhornConfig(tau=args.tau, cascades=args.cascades,
                          total_iterations=args.sinkhorn_iters)


def _make_problem(args):
    if args.problem == "lsap":
        m = args.m if args.m is not None else args.n
        return training.LsapProblem(args.n, m)
    return training.CellProblem(args.n, args.pmacro_dbm, args.psmall_dbm)


def cmd_train(args) -> int:
    problem = _make_problem(args)
    cfg = training.TrainConfig(
        learning_rate=args.lr, batch_size=args.batch, iterations=args.iters,
        validation_size=args.val_size, validation_period=args.val_period,
        seed=args.seed, sinkhorn=_sinkhorn_config(args))
    model, log = training.train(problem, cfg)
    extra = {"seed": args.seed}
    if args.problem == "cell":
        extra.update(pmacro_dbm=args.pmacro_dbm, psmall_dbm=args.psmall_dbm)
    training.save_checkpoint(args.out, model, extra)
    training.write_log_csv(args.log or args.out + ".log.csv", log)
    final = log[-1] if log else None
    print(f"trained {args.problem} n={problem.n} for {args.iters} iterations; "
          f"best validation cost "
          f"{final[3] if final else float('nan'):.6g} -> {args.out}")
    return 0


def _checked_load(args):
    model, meta = training.load_checkpoint(args.checkpoint)
    if getattr(args, "problem", None) and args.problem != meta["problem"]:
        raise ValueError(
            f"checkpoint is for problem {meta['problem']!r}, not {args.problem!r}")
    if getattr(args, "n", None) is not None and args.n != int(meta["n"]):
        raise ValueError(f"checkpoint has n={meta['n']}, flags say n={args.n}")
    if getattr(args, "m", None) is not None and int(meta.get("m", -1)) != args.m:
        raise ValueError(f"checkpoint has m={meta.get('m')}, flags say m={args.m}")
    return model, meta


def _problem_from_meta(meta) -> object:
    if meta["problem"] == "lsap":
        return training.LsapProblem(int(meta["n"]), int(meta["m"]))
    return training.CellProblem(int(meta["n"]),
                                float(meta.get("pmacro_dbm", 20.0)),
                                float(meta.get("psmall_dbm", 10.0)))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _metric_str(v) -> str:
    return format(float(v), ".12g")


def cmd_eval(args) -> int:
    model, meta = _checked_load(args)
    problem = _problem_from_meta(meta)
    test_set = training.make_test_set(problem, args.trials, args.seed)
    metrics = training.evaluate(model, problem, test_set)
    _write_csv(args.out,
               ["instances", "meanCost", "oracleMeanCost",
                "degradationPercent", "feasibleFraction"],
               [[metrics.instances, _metric_str(metrics.mean_cost),
                 _metric_str(metrics.oracle_mean_cost),
                 _metric_str(metrics.degradation_percent),
                 _metric_str(metrics.feasible_fraction)]])
    print(f"eval {meta['problem']} n={meta['n']}: "
          f"degradation {metrics.degradation_percent:.4g}% over "
          f"{metrics.instances} instances -> {args.out}")
    return 0


def _time_per_call(fn, calls) -> float:
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(calls):
        fn()
    return (time.perf_counter() - start) / calls


def cmd_bench_lsap(args) -> int:
    model, meta = _checked_load(args)
    if meta["problem"] != "lsap":
        raise ValueError("bench-lsap expects an lsap checkpoint")
    problem = _problem_from_meta(meta)
    costs = training.make_test_set(problem, args.trials, args.seed)
    metrics = training.evaluate(model, problem, costs)
    ops = nn.count_forward_ops(model.params, model.sinkhorn).total
    one = costs[0]
    snn_t = _time_per_call(lambda: oracles.harden(model.infer_soft(one[None])[0]),
                           min(args.trials, 50))
    hung_t = _time_per_call(
        lambda: lsap.lsap_oracle(lsap.AssignmentInstance(one)),
        min(args.trials, 50))
    _write_csv(args.out,
               ["n", "m", "instances", "snnMeanCost", "oracleMeanCost",
                "degradationPercent", "feasibleFraction", "snnForwardOps",
                "snnSecondsPerInstance", "hungarianSecondsPerInstance"],
               [[problem.n, problem.m, metrics.instances,
                 _metric_str(metrics.mean_cost),
                 _metric_str(metrics.oracle_mean_cost),
                 _metric_str(metrics.degradation_percent),
                 _metric_str(metrics.feasible_fraction), ops,
                 format(snn_t, ".6g"), format(hung_t, ".6g")]])
    print(f"bench-lsap ({problem.n},{problem.m}): degradation "
          f"{metrics.degradation_percent:.4g}%, {ops} forward ops -> {args.out}")
    return 0


def joint_forward_ops(model: training.JointModel) -> OpCounter:
    """Per-instance op count of the full joint forward pass."""
    counter = OpCounter()
    x = np.zeros(model.n * model.n)
    trunk, _ = nn.forward(model.shared, x, counter=counter)
    nn.forward(model.assignment_head, trunk, sinkhorn=model.sinkhorn,
               counter=counter)
    nn.forward(model.power_head, trunk, counter=counter)
    return counter


def cmd_bench_cell(args) -> int:
    rows = []
    for ckpt_path in args.checkpoint:
        model, meta = training.load_checkpoint(ckpt_path)
        if meta["problem"] != "cell":
            raise ValueError(f"{ckpt_path} is not a cell checkpoint")
        problem = _problem_from_meta(meta)
        scenarios = training.make_test_set(problem, args.trials, args.seed)
        metrics = training.evaluate(model, problem, scenarios)
        baseline_mean = float(np.mean(
            [cell.hungarian_wmmse_baseline(s)[2] for s in scenarios]))
        oracle_mean = (metrics.oracle_mean_cost
                       if problem.n <= cell.ORACLE_LIMIT else float("nan"))
        snn_t = _time_per_call(
            lambda: training.forward_joint(model, scenarios[0]), 20)
        base_t = _time_per_call(
            lambda: cell.hungarian_wmmse_baseline(scenarios[0]), 5)
        rows.append([problem.n, problem.p_macro_dbm, problem.p_small_dbm,
                     metrics.instances, _metric_str(metrics.mean_cost),
                     _metric_str(baseline_mean), _metric_str(oracle_mean),
                     format(snn_t, ".6g"), format(base_t, ".6g"),
                     joint_forward_ops(model).total])
    _write_csv(args.out,
               ["n", "pMacroDbm", "pSmallDbm", "instances", "snnMeanRate",
                "baselineMeanRate", "oracleMeanRate", "snnSecondsPerInstance",
                "baselineSecondsPerInstance", "snnForwardOps"],
               rows)
    print(f"bench-cell: {len(rows)} row(s) -> {args.out}")
    return 0


def cmd_sinkhorn_demo(args) -> int:
    cascade_counts = [int(v) for v in args.cascades.split(",") if v]
    if not cascade_counts:
        raise ValueError("need at least one cascade count")
    for k in cascade_counts:
        if k < 1 or args.iters % k:
            raise ValueError(f"cascade count {k} must divide --iters {args.iters}")
    rng = np.random.default_rng(args.seed)
    batch = rng.standard_normal((args.trials, args.n, args.n))
    columns = []
    for k in cascade_counts:
        trace = affinity_trace(batch, args.tau, k, args.iters)
        columns.append(trace.mean(axis=0))
    header = ["iteration"] + [f"affinityK{k}" for k in cascade_counts]
    rows = [[t] + [format(col[t], ".12g") for col in columns]
            for t in range(args.iters + 1)]
    _write_csv(args.out, header, rows)
    finals = ", ".join(f"K={k}: {col[-1]:.4f}"
                       for k, col in zip(cascade_counts, columns))
    print(f"sinkhorn-demo n={args.n} tau={args.tau:g} ({finals}) -> {args.out}")
    return 0


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.problem == "lsap":
        m = args.m if args.m is not None else args.n
        arr = lsap.sample_costs(args.n, m, args.trials, rng)
        meta = {"problem": "lsap", "n": args.n, "m": m, "seed": args.seed,
                "units": "dimensionless cost, uniform on [1, 100]"}
    else:
        arr = cell.sample_gain_matrices(args.n, args.trials, rng)
        meta = {"problem": "cell", "n": args.n, "seed": args.seed,
                "pmacro_dbm": args.pmacro_dbm, "psmall_dbm": args.psmall_dbm,
                "noise_dbm": cell.NOISE_DBM,
                "units": "linear channel power gain, BS row -> UE column"}
    datasets.write_matrix_dataset(args.out, arr, meta)
    print(f"gen {args.problem}: {arr.shape[0]} instances -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
