"""Lossy-channel teleoperation replay.

The human stream travels to the robot and the robot's feedback travels back;
each direction can drop samples.  A dropped sample is replaced on the
receiving side by the local predictor's output (the follower predicts the
human, the leader predicts the robot), and substituted values feed later
prediction windows.  A zero-order-hold replay on the same drop pattern
provides the baseline.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import IoFailure, TooFewTrials, ValidationError, WrongWindowLength
from .game import FOLLOWER_SIDE, LEADER_SIDE, AccuracyReport, score_accuracy
from .predictor import predict_next
from .trace_io import FEATURES, N_FEATURES

H2R = "human_to_robot"
R2H = "robot_to_human"
DIRECTIONS = (H2R, R2H)
# which predictor fills gaps in each direction, and the side tag it reports
RECEIVER = {H2R: ("follower", FOLLOWER_SIDE), R2H: ("leader", LEADER_SIDE)}
LATENCY_NOTE = (
    "one forward pass yields all nine features, so per-feature latencies are identical by construction"
)


@dataclass(frozen=True)
class ChannelConfig:
    loss_probability: float = 0.1
    burst_length_mean: float = 1.0
    seed: int = 0
    direction: str = "both"

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValidationError("loss_probability must lie in [0, 1]")
        if not self.burst_length_mean >= 1.0:
            raise ValidationError("burst_length_mean must be >= 1")
        if self.direction not in DIRECTIONS + ("both",):
            raise ValidationError(f"direction must be one of {DIRECTIONS + ('both',)}")

    @property
    def directions(self):
        return DIRECTIONS if self.direction == "both" else (self.direction,)


def _drop_sequence(n, p, burst, rng):
    if p <= 0.0:
        return np.zeros(n, dtype=bool)
    if p >= 1.0:
        return np.ones(n, dtype=bool)
    u = rng.random(n)
    if burst == 1.0:
        return u < p
    # two-state Markov chain with stationary loss rate p and mean burst length `burst`
    stay = 1.0 - 1.0 / burst
    enter = min(1.0, p / (burst * (1.0 - p)))
    mask = np.empty(n, dtype=bool)
    lost = u[0] < p
    for i in range(n):
        if i:
            lost = u[i] < (stay if lost else enter)
        mask[i] = lost
    return mask


def simulate_lossy_channel(trace, cfg):
    """Per-direction drop masks (True = sample lost).

    Each direction draws from its own child seed, so a direction's mask does
    not depend on whether the other direction is simulated.
    """
    n = len(trace)
    children = np.random.SeedSequence(int(cfg.seed) & ((1 << 64) - 1)).spawn(len(DIRECTIONS))
    masks = {}
    for d, child in zip(DIRECTIONS, children):
        if d in cfg.directions:
            masks[d] = _drop_sequence(n, cfg.loss_probability, cfg.burst_length_mean, np.random.default_rng(child))
        else:
            masks[d] = np.zeros(n, dtype=bool)
    return masks


@dataclass(frozen=True)
class LatencyStats:
    mean: float
    median: float
    p95: float
    max: float
    count: int

    @classmethod
    def from_ms(cls, samples):
        s = np.asarray(samples, dtype=np.float64)
        if s.size == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0)
        return cls(
            float(s.mean()), float(np.median(s)), float(np.percentile(s, 95)), float(s.max()), int(s.size)
        )


def _per_feature(stats):
    return {f: stats for f in FEATURES}


@dataclass
class SessionReport:
    total: int
    drop_count: dict
    drop_rate: dict
    recovered: dict  # direction -> AccuracyReport | None
    baseline: dict  # direction -> AccuracyReport | None
    latency_ms: dict = field(default_factory=dict)  # feature -> LatencyStats
    latency_note: str = LATENCY_NOTE
    channel: dict = field(default_factory=dict)

    def to_dict(self):
        def acc(r):
            return None if r is None else r.to_dict()

        return {
            "total": self.total,
            "drop_count": dict(self.drop_count),
            "drop_rate": dict(self.drop_rate),
            "recovered": {d: acc(r) for d, r in self.recovered.items()},
            "baseline": {d: acc(r) for d, r in self.baseline.items()},
            "latency_ms": {f: asdict(s) for f, s in self.latency_ms.items()},
            "latency_note": self.latency_note,
            "channel": dict(self.channel),
        }

    @classmethod
    def from_dict(cls, doc):
        def acc(r):
            return None if r is None else AccuracyReport.from_dict(r)

        return cls(
            doc["total"],
            dict(doc["drop_count"]),
            dict(doc["drop_rate"]),
            {d: acc(r) for d, r in doc["recovered"].items()},
            {d: acc(r) for d, r in doc["baseline"].items()},
            {f: LatencyStats(**s) for f, s in doc["latency_ms"].items()},
            doc.get("latency_note", LATENCY_NOTE),
            dict(doc.get("channel", {})),
        )

    def deterministic_dict(self):
        """Everything except wall-clock latency fields."""
        d = self.to_dict()
        d.pop("latency_ms")
        return d

    def recovered_nrmse(self):
        """Mean NRMSE over directions and non-degenerate axes of recovered samples."""
        vals = [r.mean_nrmse for r in self.recovered.values() if r is not None and r.mean_nrmse is not None]
        return float(np.mean(vals)) if vals else None

    def baseline_nrmse(self):
        vals = [r.mean_nrmse for r in self.baseline.values() if r is not None and r.mean_nrmse is not None]
        return float(np.mean(vals)) if vals else None


def _replay(data, mask, params, timings):
    """Closed-loop substitution; returns (predicted-fill, hold-fill) streams."""
    w = params.window
    recv = np.array(data)
    hold = np.array(data)
    for n in np.flatnonzero(mask):
        t0 = time.perf_counter_ns()
        recv[n] = predict_next(params, recv[n - w : n])
        timings.append((time.perf_counter_ns() - t0) / 1e6)
        hold[n] = hold[n - 1]
    return recv, hold


def run_session(trace, leader, follower, channel):
    """Replay ``trace`` through a lossy channel in both directions.

    The first ``window`` samples are the session handshake and always arrive,
    so every substitution has a full window behind it.  Accuracy is scored
    only on dropped samples, against the ground-truth range of the whole
    trace.
    """
    if leader.window != follower.window:
        raise ValidationError("leader and follower must use the same window length")
    w = leader.window
    if len(trace) <= w:
        raise WrongWindowLength(f"trace of {len(trace)} samples is too short for window {w}")
    masks = simulate_lossy_channel(trace, channel)
    nets = {"leader": leader, "follower": follower}
    truth = trace.data
    axis_range = np.ptp(truth, axis=0)
    timings = []
    recovered, baseline, drop_count, drop_rate = {}, {}, {}, {}
    for d in DIRECTIONS:
        mask = masks[d].copy()
        mask[:w] = False
        drop_count[d] = int(mask.sum())
        drop_rate[d] = drop_count[d] / len(trace)
        net_name, side = RECEIVER[d]
        if not mask.any():
            recovered[d] = None
            baseline[d] = None
            continue
        recv, hold = _replay(truth, mask, nets[net_name], timings)
        recovered[d] = score_accuracy(truth[mask], recv[mask], side, axis_range)
        baseline[d] = score_accuracy(truth[mask], hold[mask], side, axis_range)
    stats = LatencyStats.from_ms(timings)
    return SessionReport(
        len(trace), drop_count, drop_rate, recovered, baseline, _per_feature(stats), channel=asdict(channel)
    )


def measure_inference_time(params, trials=1000, warmup=20, seed=0):
    """Single-sample forward-pass latency in milliseconds, per output feature.

    BLAS is limited to one thread for the duration of the measurement.
    """
    if trials < 30:
        raise TooFewTrials(f"need at least 30 trials, got {trials}")
    rng = np.random.default_rng(seed)
    window = rng.standard_normal((params.window, N_FEATURES))
    samples = np.empty(trials)
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            predict_next(params, window)
        for i in range(trials):
            t0 = time.perf_counter_ns()
            predict_next(params, window)
            samples[i] = (time.perf_counter_ns() - t0) / 1e6
    return _per_feature(LatencyStats.from_ms(samples))


def latency_to_csv(tables, path):
    """``tables`` maps a network name to its per-feature latency stats."""
    try:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["net", "feature", "mean_ms", "median_ms", "p95_ms", "max_ms", "count"])
            for net, latency in tables.items():
                for f, s in latency.items():
                    w.writerow([net, f, repr(s.mean), repr(s.median), repr(s.p95), repr(s.max), s.count])
    except OSError as exc:
        raise IoFailure(f"cannot write latency table to {path}: {exc}") from exc
    return Path(path)


def emit_report(report, path, format="json"):
    """Write a SessionReport as JSON (lossless) or tidy CSV (one row per direction and axis)."""
    path = Path(path)
    try:
        if format == "json":
            path.write_text(json.dumps(report.to_dict(), indent=1))
        elif format == "csv":
            cols = ["direction", "axis", "recovered_accuracy", "recovered_nrmse",
                    "baseline_accuracy", "baseline_nrmse", "drop_count", "drop_rate"]
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for d in DIRECTIONS:
                    rec, base = report.recovered.get(d), report.baseline.get(d)
                    for j, ax in enumerate(FEATURES):
                        def cell(r, attr):
                            v = None if r is None else getattr(r, attr)[j]
                            return "" if v is None else repr(v)

                        w.writerow([d, ax, cell(rec, "accuracy"), cell(rec, "nrmse"), cell(base, "accuracy"),
                                    cell(base, "nrmse"), report.drop_count[d], repr(report.drop_rate[d])])
        else:
            raise ValidationError(f"unknown report format {format!r}")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {path}: {exc}") from exc
    return path


def load_report(path):
    return SessionReport.from_dict(json.loads(Path(path).read_text()))
