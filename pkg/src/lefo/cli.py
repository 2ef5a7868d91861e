"""Command-line entry point: ``lefo <command> ...``.

Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
numerical or runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bound import certificates_to_csv, mlp_loss_fn, summarize, sweep_checkpoints
from .config import RunConfig, load_config
from .errors import IoFailure, ValidationError
from .game import FOLLOWER_SIDE, LEADER_SIDE, Checkpoints, evaluate_accuracy, lefo_train
from .predictor import load_checkpoint, mlp_init, save_checkpoint, training_pairs
from .sim import ChannelConfig, emit_report, latency_to_csv, measure_inference_time, run_session
from .trace_io import KINDS, N_FEATURES, apply_deadband, generate_synthetic_trace, parse_trace, train_test_split, write_trace

LEADER_FILE = "leader.json"
FOLLOWER_FILE = "follower.json"
CHECKPOINTS_FILE = "checkpoints.npz"
CONFIG_FILE = "config.json"
TRAIN_TRACE_FILE = "train_trace.csv"


def _out(path):
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise IoFailure(f"output directory {p.parent} does not exist")
    return p


def _load_run(run_dir):
    run = Path(run_dir)
    if not run.is_dir():
        raise ValidationError(f"run directory {run} does not exist")
    leader, _ = load_checkpoint(run / LEADER_FILE)
    follower, _ = load_checkpoint(run / FOLLOWER_FILE)
    cfg = load_config(run / CONFIG_FILE)
    return run, leader, follower, cfg


def cmd_gen(args):
    trace = generate_synthetic_trace(args.kind, args.n, args.rate, args.seed)
    write_trace(trace, _out(args.out))
    print(f"wrote {len(trace)} samples of {args.kind!r} to {args.out}")


def cmd_train(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    trace = parse_trace(args.trace)
    if cfg.deadband is not None:
        trace = apply_deadband(trace, cfg.deadband)
    train, holdout = train_test_split(trace, cfg.split.train_fraction)
    m = cfg.model
    leader = mlp_init(m.leader_depth, m.width, m.window * N_FEATURES, N_FEATURES, m.leader_seed)
    follower = mlp_init(m.follower_depth, m.width, m.window * N_FEATURES, N_FEATURES, m.follower_seed)
    leader, follower, report, ckpts = lefo_train(
        leader, follower, train, holdout, cfg.game, cfg.sgd, cfg.ksg, cfg.kl
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(leader, out / LEADER_FILE, cfg.sgd)
    save_checkpoint(follower, out / FOLLOWER_FILE, cfg.sgd)
    ckpts.save(out / CHECKPOINTS_FILE)
    report.to_json(out / "game_report.json")
    report.to_csv(out / "game_report.csv")
    (out / CONFIG_FILE).write_text(json.dumps(cfg.to_dict(), indent=1))
    write_trace(train, out / TRAIN_TRACE_FILE)
    last = report.records[-1]
    print(
        f"{report.iterations_used} iterations, converged={report.converged}, "
        f"U_H={last.u_human:.4f} U_R={last.u_robot:.4f} objective={last.objective:.4f}"
    )


def cmd_bound(args):
    run, leader, follower, cfg = _load_run(args.run_dir)
    ckpts = Checkpoints.load(run / CHECKPOINTS_FILE)
    net, snaps = (leader, ckpts.leader) if args.net == "leader" else (follower, ckpts.follower)
    train = parse_trace(run / TRAIN_TRACE_FILE)
    x, y = training_pairs(net, train.data)
    loss = mlp_loss_fn(net, x, y)
    power = cfg.power if args.max_iters is None else replace(cfg.power, max_iters=args.max_iters)
    certs = sweep_checkpoints(lambda i: loss, snaps, power)
    try:
        certificates_to_csv(certs, _out(args.out))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    s = summarize(certs)
    print(
        f"{s['certificates']} certificates, {s['holds']} hold; "
        f"{s['unstressed_holds']}/{s['unstressed']} hold among small-gradient checkpoints"
    )


def cmd_simulate(args):
    run, leader, follower, cfg = _load_run(args.run_dir)
    trace = parse_trace(args.trace)
    ch = cfg.channel
    channel = ChannelConfig(
        loss_probability=ch.loss_probability if args.loss is None else args.loss,
        burst_length_mean=ch.burst_length_mean if args.burst is None else args.burst,
        seed=ch.seed if args.seed is None else args.seed,
        direction=ch.direction if args.direction is None else args.direction,
    )
    report = run_session(trace, leader, follower, channel)
    fmt = "csv" if str(args.out).endswith(".csv") else "json"
    emit_report(report, _out(args.out), fmt)
    rec, base = report.recovered_nrmse(), report.baseline_nrmse()
    print(f"drops {report.drop_count}; recovered NRMSE {rec}; hold NRMSE {base}")


def cmd_bench(args):
    run, leader, follower, _ = _load_run(args.run_dir)
    tables = {
        "leader": measure_inference_time(leader, args.trials, args.warmup),
        "follower": measure_inference_time(follower, args.trials, args.warmup),
    }
    latency_to_csv(tables, _out(args.out))
    for net, lat in tables.items():
        s = next(iter(lat.values()))
        print(f"{net}: mean {s.mean:.4f} ms, p95 {s.p95:.4f} ms, max {s.max:.4f} ms")


def cmd_accuracy(args):
    run, leader, follower, _ = _load_run(args.run_dir)
    test = parse_trace(args.trace)
    reports = [evaluate_accuracy(leader, test, LEADER_SIDE), evaluate_accuracy(follower, test, FOLLOWER_SIDE)]
    try:
        with _out(args.out).open("w", newline="") as fh:
            w = csv.DictWriter(fh, ["side", "axis", "accuracy", "nrmse"])
            w.writeheader()
            for r in reports:
                w.writerows(r.csv_rows())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    for r in reports:
        print(f"{r.side}: mean accuracy {r.mean_accuracy:.2f}% ({r.metric})")


def build_parser():
    p = argparse.ArgumentParser(prog="lefo", description="Leader-follower haptic prediction toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic haptic trace")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--rate", type=float, default=1000.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="run leader-follower training")
    t.add_argument("--trace", required=True)
    t.add_argument("--config")
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bound", help="certify the loss bound between checkpoints")
    b.add_argument("--run-dir", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--net", choices=("leader", "follower"), default="leader")
    b.add_argument("--max-iters", type=int)
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate", help="replay a trace over a lossy channel")
    s.add_argument("--trace", required=True)
    s.add_argument("--run-dir", required=True)
    s.add_argument("--loss", type=float)
    s.add_argument("--burst", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--direction", choices=("human_to_robot", "robot_to_human", "both"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    n = sub.add_parser("bench", help="measure forward-pass latency")
    n.add_argument("--run-dir", required=True)
    n.add_argument("--trials", type=int, default=1000)
    n.add_argument("--warmup", type=int, default=20)
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_bench)

    a = sub.add_parser("accuracy", help="score one-step prediction accuracy on a trace")
    a.add_argument("--run-dir", required=True)
    a.add_argument("--trace", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_accuracy)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numeric and runtime failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
