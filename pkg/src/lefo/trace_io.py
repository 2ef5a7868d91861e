"""Haptic trace containers, CSV I/O, synthetic generation, deadband filtering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    InvalidCount,
    MissingColumn,
    NonFiniteValue,
    NonMonotoneTime,
    TooShort,
    TooShortForSplit,
    ValidationError,
)

COLUMNS = ("t", "px", "py", "pz", "vx", "vy", "vz", "fx", "fy", "fz")
FEATURES = COLUMNS[1:]
N_FEATURES = 9
POS = slice(0, 3)
VEL = slice(3, 6)
FORCE = slice(6, 9)
KINDS = ("tapping", "tap_and_hold", "horizontal_fast", "horizontal_slow", "drag")

RATE_TOL = 1e-9
_SEED_MASK = (1 << 64) - 1


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HapticSample:
    t: float
    pos: tuple
    vel: tuple
    force: tuple

    def __post_init__(self):
        vals = (*self.pos, *self.vel, *self.force)
        if len(vals) != N_FEATURES or not all(math.isfinite(v) for v in vals):
            raise ValidationError("HapticSample needs 9 finite feature values")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValidationError("HapticSample time must be finite and >= 0")

    @property
    def features(self):
        return np.array((*self.pos, *self.vel, *self.force))


@dataclass(frozen=True)
class DeadbandConfig:
    vel_threshold_fraction: float = 0.10
    force_threshold_fraction: float = 0.10

    def __post_init__(self):
        for name in ("vel_threshold_fraction", "force_threshold_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True, eq=False)
class Trace:
    """Ordered haptic samples stored column-wise.

    ``t`` has shape (N,), ``data`` has shape (N, 9) in the order
    px, py, pz, vx, vy, vz, fx, fy, fz.  Both arrays are read-only.
    """

    t: np.ndarray
    data: np.ndarray
    name: str = "trace"
    sample_rate_hz: Optional[float] = None
    seed: Optional[int] = None
    _samples: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        t = _frozen(self.t)
        data = _frozen(self.data)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "data", data)
        if t.ndim != 1 or data.shape != (t.shape[0], N_FEATURES):
            raise ValidationError(f"expected t (N,) and data (N, 9), got {t.shape}, {data.shape}")
        if len(t) < 2:
            raise TooShort(f"trace needs at least 2 samples, got {len(t)}")
        bad = ~np.isfinite(data).all(axis=1) | ~np.isfinite(t)
        if bad.any():
            raise NonFiniteValue(int(np.argmax(bad)))
        if t[0] < 0:
            raise ValidationError("timestamps must be >= 0")
        if not (np.diff(t) > 0).all():
            raise NonMonotoneTime("timestamps must be strictly increasing")
        if self.sample_rate_hz is not None:
            if not self.sample_rate_hz > 0:
                raise ValidationError("sample_rate_hz must be positive")
            err = np.abs(np.diff(t) - 1.0 / self.sample_rate_hz).max()
            if err > RATE_TOL:
                raise ValidationError(
                    f"sample spacing deviates from 1/{self.sample_rate_hz} Hz by {err:.3g} s"
                )
        if self.seed is not None:
            object.__setattr__(self, "seed", int(self.seed) & _SEED_MASK)

    def __len__(self):
        return len(self.t)

    @property
    def samples(self):
        if self._samples is None:
            out = [
                HapticSample(float(ti), tuple(row[POS]), tuple(row[VEL]), tuple(row[FORCE]))
                for ti, row in zip(self.t.tolist(), self.data.tolist())
            ]
            object.__setattr__(self, "_samples", out)
        return self._samples

    @property
    def pos(self):
        return self.data[:, POS]

    @property
    def vel(self):
        return self.data[:, VEL]

    @property
    def force(self):
        return self.data[:, FORCE]

    def slice(self, start, stop, name=None):
        return Trace(
            self.t[start:stop],
            self.data[start:stop],
            name=name or self.name,
            sample_rate_hz=self.sample_rate_hz,
            seed=self.seed,
        )

    def same_samples(self, other):
        """Bit-exact equality of timestamps and features."""
        return (
            self.t.shape == other.t.shape
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.data, other.data)
        )

    @classmethod
    def from_samples(cls, samples, **kw):
        t = [s.t for s in samples]
        data = [s.features for s in samples]
        return cls(np.asarray(t), np.asarray(data).reshape(len(t), N_FEATURES), **kw)


def _infer_rate(t):
    dt = np.diff(t)
    rate = (len(t) - 1) / (t[-1] - t[0])
    nearest = round(rate)
    if nearest > 0 and abs(rate - nearest) < 1e-6 * nearest:
        rate = float(nearest)
    if np.abs(dt - 1.0 / rate).max() <= RATE_TOL:
        return float(rate)
    return None


def parse_trace(path, format="csv", name=None):
    """Read a trace CSV with header ``t,px,py,pz,vx,vy,vz,fx,fy,fz``.

    Row indices in errors are 0-based data rows (the header is not counted).
    The sample rate is inferred when spacing is uniform within 1e-9 s.
    """
    if format != "csv":
        raise ValidationError(f"unsupported trace format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TooShort(f"{path}: empty file") from None
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        if len(header) != len(COLUMNS):
            raise MissingColumn(f"{path}: expected exactly {len(COLUMNS)} columns, got {len(header)}")
        order = [header.index(c) for c in COLUMNS]
        rows = []
        for i, rec in enumerate(reader):
            if len(rec) != len(header):
                raise MissingColumn(f"{path}: data row {i} has {len(rec)} fields")
            try:
                vals = [float(rec[j]) for j in order]
            except ValueError:
                raise NonFiniteValue(i, f"{path}: unparsable value in data row {i}") from None
            if not all(math.isfinite(v) for v in vals):
                raise NonFiniteValue(i, f"{path}: non-finite value in data row {i}")
            rows.append(vals)
    if len(rows) < 2:
        raise TooShort(f"{path}: need at least 2 data rows, got {len(rows)}")
    arr = np.array(rows, dtype=np.float64)
    t = arr[:, 0]
    if not (np.diff(t) > 0).all():
        bad = int(np.argmax(np.diff(t) <= 0)) + 1
        raise NonMonotoneTime(f"{path}: time does not increase at data row {bad}")
    return Trace(t, arr[:, 1:], name=name or path.stem, sample_rate_hz=_infer_rate(t))


def write_trace(trace, path):
    """Write ``trace`` as CSV; 17 significant digits make the round trip exact."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for ti, row in zip(trace.t.tolist(), trace.data.tolist()):
            fh.write(",".join(f"{v:.17g}" for v in (ti, *row)) + "\n")
    return path


def apply_deadband(trace, cfg):
    """Hold-last-emitted perceptual deadband on velocity and force.

    A vector is emitted when its Chebyshev-norm change from the last emitted
    vector reaches ``fraction * running peak`` of that feature's Chebyshev
    norm; otherwise the last emitted vector is repeated.  Position and time
    pass through untouched.
    """
    out = np.array(trace.data)
    for sl, frac in ((VEL, cfg.vel_threshold_fraction), (FORCE, cfg.force_threshold_fraction)):
        if frac == 0:
            continue
        raw = trace.data[:, sl]
        peak = np.maximum.accumulate(np.abs(raw).max(axis=1))
        last = raw[0]
        for n in range(1, len(raw)):
            if np.abs(raw[n] - last).max() < frac * peak[n]:
                out[n, sl] = last
            else:
                last = raw[n]
    return Trace(trace.t, out, name=trace.name, sample_rate_hz=trace.sample_rate_hz, seed=trace.seed)


def train_test_split(trace, train_fraction):
    """Contiguous temporal split; ``train`` gets ``floor(N * train_fraction)`` samples."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must lie in (0, 1)")
    n = len(trace)
    cut = int(math.floor(n * train_fraction + 1e-9))
    if cut < 2 or n - cut < 2:
        raise TooShortForSplit(f"split of {n} samples at {train_fraction} gives parts ({cut}, {n - cut})")
    return trace.slice(0, cut, f"{trace.name}-train"), trace.slice(cut, n, f"{trace.name}-test")


# --- synthetic traces ------------------------------------------------------


def _contact_profile(t, period, duty, rise):
    """Periodic contact depth in [0, 1], exactly zero outside contact windows."""
    phase = np.mod(t, period) / period
    inside = phase < duty
    x = np.where(inside, phase / duty, 0.0)
    # smooth rise/fall edges, flat top when duty is long
    edge = np.clip(np.minimum(x, 1.0 - x) / rise, 0.0, 1.0)
    return np.where(inside, np.sin(0.5 * np.pi * edge) ** 2, 0.0)


def generate_synthetic_trace(kind, n, sample_rate_hz, seed):
    """Deterministic stand-in for recorded kinaesthetic traces.

    Positions are damped sinusoids plus smoothed seeded noise; velocity is the
    backward difference of position (forward difference at sample 0).
    Tapping kinds press into a virtual surface at z = 0 with a spring wall, so
    force is exactly zero between contacts.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown trace kind {kind!r}; choose from {KINDS}")
    if int(n) != n or n < 2:
        raise InvalidCount(f"n must be an integer >= 2, got {n}")
    if not sample_rate_hz > 0:
        raise ValidationError("sample_rate_hz must be positive")
    n = int(n)
    seed = int(seed) & _SEED_MASK
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate_hz
    duration = max(t[-1], 1.0 / sample_rate_hz)

    def wobble(amp, freq, damp=0.2):
        ph = rng.uniform(0, 2 * np.pi)
        f = freq * rng.uniform(0.8, 1.25)
        return amp * np.exp(-damp * t / max(duration, 1.0)) * np.sin(2 * np.pi * f * t + ph)

    def smooth_noise(sigma):
        w = rng.normal(0.0, sigma, n)
        k = max(3, int(0.02 * sample_rate_hz) | 1)
        return np.convolve(w, np.ones(k) / k)[k // 2 : k // 2 + n]

    pos = np.zeros((n, 3))
    force = np.zeros((n, 3))
    stiffness = rng.uniform(300.0, 500.0)  # N/m
    sensor = 2e-3  # N, force sensor noise

    if kind in ("tapping", "tap_and_hold"):
        period = rng.uniform(0.4, 0.6)
        duty, rise = (0.3, 0.5) if kind == "tapping" else (0.6, 0.15)
        depth = rng.uniform(0.004, 0.008)
        contact = _contact_profile(t, period, duty, rise)
        phase = np.mod(t, period) / period
        lift = np.clip((phase - duty) / (1.0 - duty), 0.0, 1.0)
        hover = 0.01 * np.sin(np.pi * lift) ** 2
        pos[:, 0] = wobble(0.005, 0.8) + smooth_noise(2e-5)
        pos[:, 1] = wobble(0.005, 0.6) + smooth_noise(2e-5)
        pos[:, 2] = hover - depth * contact
        pen = np.clip(-pos[:, 2], 0.0, None)
        force[:, 2] = stiffness * pen
        mu = rng.uniform(0.2, 0.4)
        force[:, 0] = mu * force[:, 2] * np.sin(2 * np.pi * 0.8 * t)
        force[:, 1] = mu * force[:, 2] * np.cos(2 * np.pi * 0.6 * t)
        # sensor noise only while the stylus touches the surface
        force += (pen > 0)[:, None] * rng.normal(0.0, sensor, (n, 3))
    elif kind in ("horizontal_fast", "horizontal_slow"):
        freq = 2.0 if kind == "horizontal_fast" else 0.7
        pos[:, 0] = wobble(0.04, freq, damp=0.1) + smooth_noise(2e-5)
        pos[:, 1] = wobble(0.01, 0.5 * freq, damp=0.1) + smooth_noise(2e-5)
        pos[:, 2] = 0.02 + smooth_noise(1e-5)
        # free-air motion: only device friction and sensor noise
        force[:, 0] = rng.normal(0.0, sensor, n)
        force[:, 1] = rng.normal(0.0, sensor, n)
        force[:, 2] = rng.normal(0.0, 1e-5, n)
    else:  # drag
        pos[:, 0] = wobble(0.005, 0.5) + smooth_noise(2e-5)
        pos[:, 1] = wobble(0.04, 1.0, damp=0.1) + smooth_noise(2e-5)
        pos[:, 2] = -rng.uniform(0.002, 0.004) + wobble(3e-4, 1.5) + smooth_noise(1e-5)
        force[:, 2] = stiffness * np.clip(-pos[:, 2], 0.0, None)

    vel = np.empty_like(pos)
    vel[1:] = np.diff(pos, axis=0) * sample_rate_hz
    vel[0] = vel[1]
    if kind == "drag":
        mu = rng.uniform(0.3, 0.5)
        # regularised Coulomb friction opposing the sliding direction
        force[:, 1] = -mu * force[:, 2] * np.tanh(vel[:, 1] / 0.02)
        force[:, 0] = rng.normal(0.0, sensor, n)
        force[:, 1:] += rng.normal(0.0, sensor, (n, 2))

    data = np.hstack([pos, vel, force])
    return Trace(t, data, name=f"{kind}-{seed}", sample_rate_hz=float(sample_rate_hz), seed=seed)
