"""Second-order loss-increase certificates between training checkpoints.

Around a checkpoint where the gradient (nearly) vanishes, a second-order
Taylor expansion bounds the loss increase of a step ``d`` by
``0.5 * lambda_max * |d|^2``, where ``lambda_max`` is the largest eigenvalue
of the Hessian there.  The eigenvalue is found by power iteration on
finite-difference Hessian-vector products, so no Hessian is ever formed.

Loss callables take a flat parameter vector and return ``(value, gradient)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import LengthMismatch, NoConvergence, ValidationError, ZeroDirection
from .predictor import flat_grads, mse_value_and_grads

SLACK = 1e-6
GRAD_STRESS = 1e-2
CSV_COLUMNS = ("iter", "loss_delta", "delta_theta_sq", "lambda_max", "bound", "holds", "grad_norm")
INDEFINITE_NOTE = "dominant curvature is negative; the bound presumes a positive semi-definite Hessian"


@dataclass(frozen=True)
class PowerIterConfig:
    max_iters: int = 100
    rel_tolerance: float = 1e-6
    hvp_step: float = 1e-4
    seed: int = 0
    grad_threshold: float = GRAD_STRESS

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.rel_tolerance > 0 or not self.hvp_step > 0:
            raise ValidationError("rel_tolerance and hvp_step must be positive")
        object.__setattr__(self, "seed", int(self.seed) & ((1 << 64) - 1))


@dataclass(frozen=True)
class BoundCertificate:
    loss_delta: float
    delta_theta_sq: float
    lambda_max: float
    bound: float
    holds: bool
    grad_norm: float = 0.0
    slack: float = SLACK
    assumption_stressed: bool = False
    eig_converged: bool = True
    eig_iterations: int = 0
    taylor_residual: float = 0.0
    note: str = ""

    def row(self, iteration):
        return [iteration, repr(self.loss_delta), repr(self.delta_theta_sq), repr(self.lambda_max),
                repr(self.bound), str(self.holds).lower(), repr(self.grad_norm)]


def delta_theta(theta_prev, theta_next):
    a = np.asarray(theta_prev, dtype=np.float64).ravel()
    b = np.asarray(theta_next, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"parameter vectors differ in length: {a.size} vs {b.size}")
    d = b - a
    return d, float(d @ d)


def hessian_vector_product(loss, theta, v, cfg=PowerIterConfig()):
    """Central-difference H @ v; exact (to rounding) for quadratic losses."""
    theta = np.asarray(theta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != theta.shape:
        raise LengthMismatch(f"direction has shape {v.shape}, parameters {theta.shape}")
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise ZeroDirection("Hessian-vector product needs a nonzero direction")
    u = v / nv
    eps = cfg.hvp_step * (1.0 + float(np.linalg.norm(theta)))
    _, gp = loss(theta + eps * u)
    _, gm = loss(theta - eps * u)
    return (np.asarray(gp) - np.asarray(gm)) / (2.0 * eps) * nv


def _power(loss, theta, cfg, shift=0.0):
    theta = np.asarray(theta, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    v = rng.standard_normal(theta.shape)
    v /= np.linalg.norm(v)
    lam = None
    for it in range(1, cfg.max_iters + 1):
        hv = hessian_vector_product(loss, theta, v, cfg) - shift * v
        new = float(v @ hv)
        norm = float(np.linalg.norm(hv))
        if norm == 0.0:
            return shift, it  # v lies in the null space of the shifted operator
        if lam is not None and abs(new - lam) <= cfg.rel_tolerance * max(abs(new), 1e-300):
            return new + shift, it
        lam = new
        v = hv / norm
    raise NoConvergence(lam + shift, cfg.max_iters)


def max_eigenvalue(loss, theta, cfg=PowerIterConfig()):
    """Magnitude-dominant Hessian eigenvalue at ``theta`` by power iteration.

    Returns ``(lambda, iterations)``.  Convergence is declared when the
    Rayleigh quotient changes by less than ``rel_tolerance`` relative to its
    magnitude; otherwise :class:`NoConvergence` carries the last estimate.
    """
    return _power(loss, theta, cfg)


def top_eigenvalue(loss, theta, cfg=PowerIterConfig()):
    """Algebraically largest Hessian eigenvalue.

    Runs plain power iteration first; if the dominant eigenvalue is negative
    it repeats on ``H - lambda_dom * I``, whose dominant eigenvalue is
    ``lambda_top - lambda_dom``.  Returns ``(lambda_top, iterations, converged, dominant)``.
    """
    converged = True
    try:
        dom, iters = _power(loss, theta, cfg)
    except NoConvergence as exc:
        dom, iters, converged = float(exc.estimate), exc.iterations, False
    if dom >= 0.0:
        return dom, iters, converged, dom
    try:
        top, more = _power(loss, theta, cfg, shift=dom)
    except NoConvergence as exc:
        top, more, converged = float(exc.estimate), exc.iterations, False
    return top, iters + more, converged, dom


def certify_bound(loss_prev, theta_prev, theta_next, cfg=PowerIterConfig()):
    """Check ``loss(theta_next) - loss(theta_prev) <= 0.5 * lambda_max * |d|^2``.

    ``loss_prev`` is the loss built on the data of the earlier checkpoint.
    ``lambda_max`` is the algebraically largest eigenvalue (see
    :func:`top_eigenvalue`); if the dominant curvature was negative the
    certificate carries a note.  A certificate whose gradient norm at ``theta_prev`` exceeds
    ``cfg.grad_threshold`` is flagged ``assumption_stressed``; its ``holds``
    flag is still reported honestly.
    """
    theta_prev = np.asarray(theta_prev, dtype=np.float64)
    d, d2 = delta_theta(theta_prev, theta_next)
    f0, g0 = loss_prev(theta_prev)
    f1, _ = loss_prev(np.asarray(theta_next, dtype=np.float64))
    loss_delta = float(f1) - float(f0)
    g0 = np.asarray(g0, dtype=np.float64)
    grad_norm = float(np.linalg.norm(g0))
    lam, iters, converged, dominant = top_eigenvalue(loss_prev, theta_prev, cfg)
    bound = 0.5 * lam * d2
    residual = 0.0
    if d2 > 0.0:
        quad = float(d @ hessian_vector_product(loss_prev, theta_prev, d, cfg))
        residual = loss_delta - (float(g0 @ d) + 0.5 * quad)
    return BoundCertificate(
        loss_delta=loss_delta,
        delta_theta_sq=d2,
        lambda_max=lam,
        bound=bound,
        holds=bool(loss_delta <= bound + SLACK),
        grad_norm=grad_norm,
        assumption_stressed=grad_norm > cfg.grad_threshold,
        eig_converged=converged,
        eig_iterations=iters,
        taylor_residual=residual,
        note=INDEFINITE_NOTE if dominant < 0 else "",
    )


def sweep_checkpoints(loss_builder, checkpoints, cfg=PowerIterConfig()):
    """One certificate per adjacent checkpoint pair.

    ``loss_builder(i)`` returns the loss callable for checkpoint ``i``; the
    pair ``(i, i + 1)`` is certified with ``loss_builder(i)``.
    """
    if len(checkpoints) < 2:
        raise ValidationError("need at least two checkpoints")
    return [
        certify_bound(loss_builder(i), checkpoints[i], checkpoints[i + 1], cfg)
        for i in range(len(checkpoints) - 1)
    ]


def certificates_to_csv(certs, path, start=1):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i, c in enumerate(certs, start):
            w.writerow(c.row(i))


# --- loss helpers ------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticLoss:
    """0.5 * theta' A theta (+ b' theta); a convenient exact oracle."""

    a: np.ndarray
    b: Optional[np.ndarray] = None

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        at = self.a @ theta
        value = 0.5 * float(theta @ at)
        if self.b is not None:
            value += float(self.b @ theta)
            at = at + self.b
        return value, at


def mlp_loss_fn(template, x, y):
    """Full-batch MSE of the network ``template`` as a function of its flat parameters."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def loss(theta):
        value, grads = mse_value_and_grads(template.with_flat(theta), x, y)
        return value, flat_grads(grads)

    return loss


def summarize(certs):
    """Counts for reporting: total, holding, stressed, and holding-among-unstressed."""
    calm = [c for c in certs if not c.assumption_stressed]
    return {
        "certificates": len(certs),
        "holds": sum(c.holds for c in certs),
        "assumption_stressed": len(certs) - len(calm),
        "unstressed_holds": sum(c.holds for c in calm),
        "unstressed": len(calm),
        "max_abs_taylor_residual": max((abs(c.taylor_residual) for c in certs), default=0.0),
        "indefinite": sum(bool(c.note) for c in certs),
        "all_unstressed_hold": all(c.holds for c in calm),
    }
