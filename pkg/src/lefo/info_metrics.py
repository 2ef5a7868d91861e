"""Information-theoretic utilities: digamma, Chebyshev distance, KSG mutual
information and histogram KL divergence.  All quantities are in nats."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import (
    DegenerateData,
    DimensionMismatch,
    EmptyInput,
    NonPositiveArgument,
    TooFewSamples,
    ValidationError,
)

EULER_GAMMA = 0.57721566490153286061
GROUPS = ("force", "velocity", "position")

# B_{2k} / (2k) for k = 1..7
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_SHIFT_TO = 10.0


def digamma(x):
    """psi(x) for x > 0, scalar or array.

    Shifts the argument up to >= 10 with psi(x) = psi(x + 1) - 1/x, then sums
    the asymptotic series ln x - 1/(2x) - sum B_2k / (2k x^2k).
    """
    arr = np.asarray(x, dtype=np.float64)
    if not (arr > 0).all():
        raise NonPositiveArgument("digamma is only defined here for x > 0")
    z = arr.copy()
    acc = np.zeros_like(z)
    while True:
        small = z < _SHIFT_TO
        if not small.any():
            break
        acc -= np.where(small, 1.0 / np.where(small, z, 1.0), 0.0)
        z = np.where(small, z + 1.0, z)
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_ASYMPTOTIC):
        series = (series + c) * inv2
    out = np.log(z) - 0.5 / z - series + acc
    return float(out) if np.ndim(x) == 0 else out


def chebyshev_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


@dataclass(frozen=True)
class KsgConfig:
    """``grouping`` picks the marginal unit: each scalar axis ("axis") or each
    3-vector feature block ("block").  The estimate is the mean over groups."""

    k: int = 11
    grouping: str = "axis"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError("k must be a positive integer")
        if self.grouping not in ("axis", "block"):
            raise ValidationError("grouping must be 'axis' or 'block'")


@dataclass(frozen=True, eq=False)
class PairedSignalSet:
    """N paired (actual, predicted) samples for force, velocity and position.

    Each of ``actual`` and ``predicted`` is (N, 9) in force, velocity,
    position block order (3 columns each).
    """

    actual: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        a = np.array(self.actual, dtype=np.float64)
        p = np.array(self.predicted, dtype=np.float64)
        if a.ndim == 1:
            a, p = a[:, None], p[:, None]
        if a.shape != p.shape or a.ndim != 2:
            raise DimensionMismatch(f"actual {a.shape} and predicted {p.shape} differ")
        if not (np.isfinite(a).all() and np.isfinite(p).all()):
            raise ValidationError("paired signals must be finite")
        a.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "actual", a)
        object.__setattr__(self, "predicted", p)

    @property
    def n(self):
        return self.actual.shape[0]

    @property
    def dim(self):
        return self.actual.shape[1]

    @classmethod
    def from_blocks(cls, force, velocity, position):
        """Each argument is an ``(actual, predicted)`` pair of (N, 3) arrays."""
        a = np.hstack([np.asarray(force[0]), np.asarray(velocity[0]), np.asarray(position[0])])
        p = np.hstack([np.asarray(force[1]), np.asarray(velocity[1]), np.asarray(position[1])])
        return cls(a, p)

    @classmethod
    def from_trace_order(cls, actual, predicted):
        """Build from (N, 9) arrays in trace column order (position, velocity, force)."""
        a = np.asarray(actual, dtype=np.float64)
        p = np.asarray(predicted, dtype=np.float64)
        order = np.r_[6:9, 3:6, 0:3]
        return cls(a[:, order], p[:, order])

    def groups(self, grouping):
        if grouping == "axis":
            return [[j] for j in range(self.dim)]
        if self.dim % 3:
            raise DimensionMismatch("block grouping needs a multiple of 3 columns")
        return [list(range(j, j + 3)) for j in range(0, self.dim, 3)]


@dataclass(frozen=True)
class NeighborCounts:
    """Per-point marginal counts, shape (N, G) for G groups."""

    actual: np.ndarray
    predicted: np.ndarray
    groups: tuple


def _cheb_rows(x, rows):
    # (len(rows), N) Chebyshev distances from x[rows] to all of x
    return np.abs(x[rows, None, :] - x[None, :, :]).max(axis=2)


def _radii_numpy(s, p, k, chunk=256):
    """Reference brute-force scan (vectorised numpy); see :func:`_radii`."""
    n = len(s)
    eps_s = np.empty(n)
    eps_p = np.empty(n)
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(lo + chunk, n))
        ds = _cheb_rows(s, rows)
        dp = _cheb_rows(p, rows)
        joint = np.maximum(ds, dp)
        joint[np.arange(len(rows)), rows] = np.inf
        kth = np.partition(joint, k - 1, axis=1)[:, k - 1 : k]
        closer = joint < kth
        tied = joint == kth
        need = k - closer.sum(axis=1, keepdims=True)
        chosen = closer | (tied & (np.cumsum(tied, axis=1) <= need))
        eps_s[rows] = np.where(chosen, ds, -np.inf).max(axis=1)
        eps_p[rows] = np.where(chosen, dp, -np.inf).max(axis=1)
    return eps_s, eps_p


@numba.njit(cache=True)
def _cheb(x, i, j):
    d = 0.0
    for c in range(x.shape[1]):
        v = abs(x[i, c] - x[j, c])
        if v > d:
            d = v
    return d


@numba.njit(cache=True)
def _radii(s, p, k):
    """Marginal radii from the k nearest joint neighbours, exact O(N^2) scan.

    Neighbours are kept in a sorted buffer; a candidate displaces the current
    k-th only when strictly closer, so ties go to the lowest index.  Also
    returns each point's nearest joint distance.
    """
    n = s.shape[0]
    scalar = s.shape[1] == 1 and p.shape[1] == 1
    s1 = s[:, 0].copy()
    p1 = p[:, 0].copy()
    eps_s = np.empty(n)
    eps_p = np.empty(n)
    nearest = np.empty(n)
    bd = np.empty(k)
    bi = np.empty(k, np.int64)
    for i in range(n):
        m = 0
        for j in range(n):
            if j == i:
                continue
            if scalar:
                d = max(abs(s1[i] - s1[j]), abs(p1[i] - p1[j]))
            else:
                d = max(_cheb(s, i, j), _cheb(p, i, j))
            if m < k:
                q = m
                m += 1
            elif d < bd[k - 1]:
                q = k - 1
            else:
                continue
            while q > 0 and bd[q - 1] > d:
                bd[q] = bd[q - 1]
                bi[q] = bi[q - 1]
                q -= 1
            bd[q] = d
            bi[q] = j
        a = 0.0
        b = 0.0
        for q in range(k):
            a = max(a, _cheb(s, i, bi[q]))
            b = max(b, _cheb(p, i, bi[q]))
        eps_s[i] = a
        eps_p[i] = b
        nearest[i] = bd[0]
    return eps_s, eps_p, nearest


@numba.njit(cache=True)
def _count_within(x, eps):
    n = x.shape[0]
    out = np.zeros(n, np.int64)
    if x.shape[1] == 1:
        x1 = x[:, 0].copy()
        for i in range(n):
            c = 0
            xi = x1[i]
            e = eps[i]
            for j in range(n):
                if abs(xi - x1[j]) <= e:
                    c += 1
            out[i] = c - 1
        return out
    for i in range(n):
        c = 0
        for j in range(n):
            if j != i and _cheb(x, i, j) <= eps[i]:
                c += 1
        out[i] = c
    return out


def _group_counts(s, p, k):
    """KSG2 marginal counts for one (actual, predicted) group."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    eps_s, eps_p, nearest = _radii(s, p, k)
    if (nearest == 0).any():
        raise DegenerateData("duplicate joint points (zero nearest-neighbour distance)")
    if (eps_s == 0).any() or (eps_p == 0).any():
        raise DegenerateData("zero nearest-neighbour distance in a marginal (duplicate or constant values)")
    return _count_within(s, eps_s), _count_within(p, eps_p)


def _check(data, cfg):
    if data.n <= cfg.k:
        raise TooFewSamples(f"need more than k={cfg.k} samples, got {data.n}")


def neighbor_counts(data, cfg=KsgConfig()):
    """Marginal neighbour counts for each point and group (self excluded).

    For point i the k nearest neighbours are found in the joint
    (actual, predicted) space of the group under the Chebyshev norm.  The
    largest actual-side (predicted-side) distance among them is the marginal
    radius; the count is the number of other points within that radius,
    boundary included, so every count is at least k.
    """
    _check(data, cfg)
    groups = data.groups(cfg.grouping)
    cs, cp = [], []
    for cols in groups:
        n_s, n_p = _group_counts(data.actual[:, cols], data.predicted[:, cols], cfg.k)
        cs.append(n_s)
        cp.append(n_p)
    return NeighborCounts(np.column_stack(cs), np.column_stack(cp), tuple(tuple(c) for c in groups))


def ksg_mutual_information(data, cfg=KsgConfig()):
    """KSG (second form) mutual information between actual and predicted.

        psi(N) + psi(k) - 1/k - mean_i[ mean_g (psi(n_actual) + psi(n_predicted)) ]

    The count terms are averaged over the G groups, so the result is the
    mean per-group MI in nats (identical to the two-variable estimator when
    G == 1).
    """
    return float(np.mean(ksg_per_group(data, cfg)))


def ksg_per_group(data, cfg=KsgConfig()):
    """Per-group KSG estimates, shape (G,)."""
    counts = neighbor_counts(data, cfg)
    n = counts.actual.shape[0]
    const = digamma(n) + digamma(cfg.k) - 1.0 / cfg.k
    return const - (digamma(counts.actual) + digamma(counts.predicted)).mean(axis=0)


def counts_to_csv(counts, path):
    """Debug export: one row per point with actual/predicted counts per group."""
    n, g = counts.actual.shape
    header = ["point"] + [f"n_actual_{j}" for j in range(g)] + [f"n_predicted_{j}" for j in range(g)]
    table = np.column_stack([np.arange(n), counts.actual, counts.predicted])
    np.savetxt(path, table, fmt="%d", delimiter=",", header=",".join(header), comments="")


@dataclass(frozen=True)
class HistogramKlConfig:
    bins: int = 32
    smoothing_epsilon: float = 1e-9

    def __post_init__(self):
        if int(self.bins) != self.bins or self.bins < 2:
            raise ValidationError("bins must be an integer >= 2")
        if not self.smoothing_epsilon > 0:
            raise ValidationError("smoothing_epsilon must be positive")


def kl_divergence(p, q):
    """Discrete KL(p || q) of two probability vectors with q > 0 where p > 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes {p.shape} and {q.shape} differ")
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def histogram_kl(actual, predicted, cfg=HistogramKlConfig()):
    """KL(actual || predicted) after binning both over the union of their ranges."""
    a = np.asarray(actual, dtype=np.float64).ravel()
    b = np.asarray(predicted, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyInput("histogram_kl needs non-empty inputs")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValidationError("histogram_kl inputs must be finite")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, cfg.bins + 1)
    ca, _ = np.histogram(a, bins=edges)
    cb, _ = np.histogram(b, bins=edges)
    p = ca + cfg.smoothing_epsilon
    q = cb + cfg.smoothing_epsilon
    # rounding can leave a tiny negative sum when p and q nearly coincide
    return max(0.0, kl_divergence(p / p.sum(), q / q.sum()))


def gaussian_mi(cov, dx):
    """Closed-form MI of a jointly Gaussian vector split after ``dx`` coordinates."""
    cov = np.asarray(cov, dtype=np.float64)
    _, ld = np.linalg.slogdet(cov)
    _, lx = np.linalg.slogdet(cov[:dx, :dx])
    _, ly = np.linalg.slogdet(cov[dx:, dx:])
    return 0.5 * (lx + ly - ld)


def harmonic_digamma(n):
    """psi(n) for positive integer n via -gamma + sum_{m<n} 1/m."""
    if n < 1 or int(n) != n:
        raise NonPositiveArgument("harmonic_digamma needs a positive integer")
    return -EULER_GAMMA + math.fsum(1.0 / m for m in range(1, int(n)))
