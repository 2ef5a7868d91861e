"""Leader-follower training game and accuracy scoring.

The follower (robot side) learns to predict the human stream and is scored
by histogram KL; the leader (human side) learns to predict the robot stream
and is scored by KSG mutual information.  Gradient steps on both sides use
mean squared error as a differentiable surrogate; the utilities are
evaluated on a held-out batch to drive the alternation and stopping rule.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteLoss,
    TooFewSamples,
    ValidationError,
)
from .info_metrics import (
    HistogramKlConfig,
    KsgConfig,
    PairedSignalSet,
    histogram_kl,
    ksg_mutual_information,
)
from .predictor import (
    FeatureScaler,
    SgdConfig,
    clip_gradients,
    make_windows,
    mse_value_and_grads,
    predict_batch,
    sgd_step,
    training_pairs,
    dropout_masks,
    zero_velocity,
)
from .trace_io import FEATURES, N_FEATURES

LEADER_SIDE = "leader_predicting_robot"
FOLLOWER_SIDE = "follower_predicting_human"
SIDES = (LEADER_SIDE, FOLLOWER_SIDE)
ACCURACY_METRIC = "nrmse-complement/v1: 100*max(0, 1 - RMSE/ptp(truth))"
MI_JITTER = 1e-10


@dataclass(frozen=True)
class GameConfig:
    max_iterations: int = 50
    tolerance: float = 1e-3
    inner_steps_leader: int = 10
    inner_steps_follower: int = 10
    utility_batch: int = 256
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValidationError("max_iterations must be an integer >= 1")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        for name in ("inner_steps_leader", "inner_steps_follower"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.utility_batch < 2:
            raise ValidationError("utility_batch must be >= 2")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    u_robot: float
    u_human: float
    objective: float
    leader_loss: float
    follower_loss: float


@dataclass
class GameReport:
    records: list
    converged: bool
    iterations_used: int
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "records": [asdict(r) for r in self.records],
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            [IterationRecord(**r) for r in doc["records"]],
            bool(doc["converged"]),
            int(doc["iterations_used"]),
            doc.get("config", {}),
        )

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def to_csv(self, path):
        cols = [f.name for f in IterationRecord.__dataclass_fields__.values()]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.records:
                w.writerow([repr(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c) for c in cols])


@dataclass
class AccuracyReport:
    """Per-axis accuracy; ``None`` marks an axis with zero ground-truth range."""

    side: str
    accuracy: list
    nrmse: list
    metric: str = ACCURACY_METRIC
    axes: tuple = FEATURES
    n_samples: int = 0

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValidationError(f"side must be one of {SIDES}")

    @property
    def mean_accuracy(self):
        vals = [a for a in self.accuracy if a is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def mean_nrmse(self):
        vals = [a for a in self.nrmse if a is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def degenerate_axes(self):
        return [ax for ax, a in zip(self.axes, self.accuracy) if a is None]

    def to_dict(self):
        return {
            "side": self.side,
            "metric": self.metric,
            "axes": list(self.axes),
            "accuracy": list(self.accuracy),
            "nrmse": list(self.nrmse),
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            doc["side"], list(doc["accuracy"]), list(doc["nrmse"]), doc["metric"], tuple(doc["axes"]), doc["n_samples"]
        )

    def csv_rows(self):
        for ax, a, e in zip(self.axes, self.accuracy, self.nrmse):
            yield {"side": self.side, "axis": ax, "accuracy": "" if a is None else repr(a), "nrmse": "" if e is None else repr(e)}

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, ["side", "axis", "accuracy", "nrmse"])
            w.writeheader()
            w.writerows(self.csv_rows())


def score_accuracy(truth, predicted, side, axis_range=None):
    """Accuracy per axis: 100 * max(0, 1 - RMSE / peak-to-peak range).

    ``axis_range`` defaults to the range of ``truth``; axes whose range is
    zero are reported as ``None`` (not applicable).
    """
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, N_FEATURES)
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1, N_FEATURES)
    if truth.shape != predicted.shape:
        raise DimensionMismatch(f"truth {truth.shape} vs predicted {predicted.shape}")
    rng = np.ptp(truth, axis=0) if axis_range is None else np.asarray(axis_range, dtype=np.float64)
    acc, nrmse = [], []
    for j in range(N_FEATURES):
        if rng[j] <= 0 or len(truth) == 0:
            acc.append(None)
            nrmse.append(None)
            continue
        rmse = math.sqrt(float(np.mean((truth[:, j] - predicted[:, j]) ** 2)))
        e = rmse / float(rng[j])
        nrmse.append(e)
        acc.append(100.0 * max(0.0, 1.0 - e))
    return AccuracyReport(side, acc, nrmse, n_samples=len(truth))


def evaluate_accuracy(params, test, side):
    """One-step-ahead accuracy of ``params`` over every window of ``test``."""
    windows, nxt = make_windows(test.data, params.window)
    pred = predict_batch(params, windows)
    return score_accuracy(nxt, pred, side)


def utility_robot(actual_human, predicted_human, cfg=HistogramKlConfig()):
    """Sum over the 9 feature axes of histogram KL(actual || predicted)."""
    a = np.asarray(actual_human, dtype=np.float64)
    p = np.asarray(predicted_human, dtype=np.float64)
    if a.shape != p.shape:
        raise DimensionMismatch(f"actual {a.shape} vs predicted {p.shape}")
    if a.ndim != 2 or len(a) < 2:
        raise TooFewSamples("utility batches need at least 2 samples")
    return float(sum(histogram_kl(a[:, j], p[:, j], cfg) for j in range(a.shape[1])))


def utility_human(actual_robot, predicted_robot, cfg=KsgConfig(), seed=0):
    """KSG mutual information between actual and predicted robot samples.

    Both arrays are (N, 9) in trace column order.  Each axis is divided by
    the actual signal's standard deviation and a 1e-10 seeded jitter is
    added so exact repeats (for example zero force between contacts) do not
    collapse neighbour distances.
    """
    a = np.asarray(actual_robot, dtype=np.float64)
    p = np.asarray(predicted_robot, dtype=np.float64)
    if a.shape != p.shape:
        raise DimensionMismatch(f"actual {a.shape} vs predicted {p.shape}")
    if len(a) <= cfg.k:
        raise TooFewSamples(f"need more than k={cfg.k} samples, got {len(a)}")
    scale = a.std(axis=0)
    scale[scale < 1e-12] = 1.0
    rng = np.random.default_rng(seed)
    a = a / scale + rng.normal(0.0, MI_JITTER, a.shape)
    p = p / scale + rng.normal(0.0, MI_JITTER, p.shape)
    return ksg_mutual_information(PairedSignalSet.from_trace_order(a, p), cfg)


def minimax_objective(u_human, u_robot):
    """Game value: leader utility minus follower utility."""
    return float(u_human) - float(u_robot)


@dataclass
class Checkpoints:
    """Flat parameter snapshots, index 0 is the initial state."""

    leader: list
    follower: list

    def __len__(self):
        return len(self.leader)

    def save(self, path):
        np.savez(path, leader=np.array(self.leader), follower=np.array(self.follower))

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(list(z["leader"]), list(z["follower"]))


def _run_steps(params, velocity, x, y, steps, sgd, batch_rng, drop_rng, dropout, iteration):
    losses = []
    m = len(x)
    for _ in range(steps):
        idx = batch_rng.integers(0, m, size=min(sgd.batch_size, m))
        masks = dropout_masks(params, sgd.dropout_rate, drop_rng, len(idx)) if dropout else None
        loss, grads = mse_value_and_grads(params, x[idx], y[idx], masks)
        if not math.isfinite(loss) or not all(np.isfinite(gw).all() and np.isfinite(gb).all() for gw, gb in grads):
            raise NonFiniteLoss(iteration)
        params, velocity = sgd_step(params, clip_gradients(grads, sgd.clip_norm), velocity, sgd)
        losses.append(loss)
    return params, velocity, (float(np.mean(losses)) if losses else float("nan"))


def attach_scaler(params, data):
    if params.scaler is not None:
        return params
    return replace(params, scaler=FeatureScaler.fit(data))


def lefo_train(leader, follower, train, holdout, game_cfg=GameConfig(), sgd_cfg=SgdConfig(),
               ksg_cfg=KsgConfig(), kl_cfg=HistogramKlConfig()):
    """Alternate follower and leader updates until the game value settles.

    Each outer iteration runs ``inner_steps_follower`` SGD steps on the
    follower (with dropout), then ``inner_steps_leader`` on the leader, then
    evaluates both utilities on the first ``utility_batch`` holdout windows.
    Training stops early once consecutive game values differ by less than
    ``tolerance``.  Returns ``(leader, follower, report, checkpoints)``.
    """
    if leader.window != follower.window:
        raise ValidationError("leader and follower must use the same window length")
    w = leader.window
    if len(train) <= w + 1:
        raise TooFewSamples(f"training trace too short for window {w}")
    if len(holdout) - w <= ksg_cfg.k:
        raise TooFewSamples(f"holdout needs more than {w + ksg_cfg.k} samples")
    leader = attach_scaler(leader, train.data)
    follower = attach_scaler(follower, train.data)

    xl, yl = training_pairs(leader, train.data)
    xf, yf = training_pairs(follower, train.data)
    hw, hnext = make_windows(holdout.data, w)
    hw, hnext = hw[: game_cfg.utility_batch], hnext[: game_cfg.utility_batch]

    streams = np.random.SeedSequence(int(sgd_cfg.seed) & ((1 << 64) - 1)).spawn(3)
    f_batch, f_drop, l_batch = (np.random.default_rng(s) for s in streams)
    vl, vf = zero_velocity(leader), zero_velocity(follower)

    checkpoints = Checkpoints([leader.flat()], [follower.flat()])
    records = []
    converged = False
    prev = None
    for it in range(1, game_cfg.max_iterations + 1):
        follower, vf, f_loss = _run_steps(
            follower, vf, xf, yf, game_cfg.inner_steps_follower, sgd_cfg, f_batch, f_drop, True, it
        )
        leader, vl, l_loss = _run_steps(
            leader, vl, xl, yl, game_cfg.inner_steps_leader, sgd_cfg, l_batch, None, False, it
        )
        u_r = utility_robot(hnext, predict_batch(follower, hw), kl_cfg)
        u_h = utility_human(hnext, predict_batch(leader, hw), ksg_cfg, seed=game_cfg.seed + it)
        obj = minimax_objective(u_h, u_r)
        if not math.isfinite(obj):
            raise NonFiniteLoss(it, f"non-finite game value at iteration {it}")
        records.append(IterationRecord(it, u_r, u_h, obj, l_loss, f_loss))
        checkpoints.leader.append(leader.flat())
        checkpoints.follower.append(follower.flat())
        if prev is not None and abs(obj - prev) < game_cfg.tolerance:
            converged = True
            break
        prev = obj

    report = GameReport(
        records,
        converged,
        len(records),
        {"game": asdict(game_cfg), "sgd": asdict(sgd_cfg), "ksg": asdict(ksg_cfg), "kl": asdict(kl_cfg)},
    )
    return leader, follower, report, checkpoints
