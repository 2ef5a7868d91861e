"""
A second-order bound on the loss increase between checkpoints
===============================================================

Near a stationary point, moving the parameters by ``d`` can raise the loss
by at most ``0.5 * lambda_max * |d|^2``.  We check this first on a quadratic,
where it is exact, then on checkpoints from a short training run.
"""

import numpy as np

from lefo.bound import PowerIterConfig, QuadraticLoss, certify_bound, mlp_loss_fn, summarize, sweep_checkpoints
from lefo.game import GameConfig, lefo_train
from lefo.predictor import SgdConfig, follower_init, leader_init, training_pairs
from lefo.trace_io import generate_synthetic_trace, train_test_split

###############################################################################
# Quadratic loss
# --------------
# At the minimum of 0.5 x'Ax + b'x, a step along the top eigenvector meets
# the bound with equality; any other step stays below it.

rng = np.random.default_rng(3)
q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
a = (q * np.array([0.5, 1.0, 2.0, 4.0, 8.0])) @ q.T
b = rng.normal(size=5)
x0 = -np.linalg.solve(a, b)
loss = QuadraticLoss(a, b)
cfg = PowerIterConfig(max_iters=2000, rel_tolerance=1e-12)
for name, d in (("random step", rng.normal(size=5)), ("top eigenvector", q[:, -1])):
    c = certify_bound(loss, x0, x0 + d, cfg)
    print(f"{name:16s} increase {c.loss_delta:.6f}  bound {c.bound:.6f}  lambda_max {c.lambda_max:.4f}")

###############################################################################
# Training checkpoints
# --------------------
# During training the gradient is rarely zero, so certificates at checkpoints
# with a large gradient are flagged; the bound is only promised for the rest.

trace = generate_synthetic_trace("tapping", 400, 1000.0, seed=0)
train, hold = train_test_split(trace, 0.6)
leader, follower, _, ckpts = lefo_train(
    leader_init(1), follower_init(2), train, hold, GameConfig(max_iterations=6, tolerance=1e-12), SgdConfig(seed=0)
)
x, y = training_pairs(follower, train.data)
certs = sweep_checkpoints(lambda i: mlp_loss_fn(follower, x, y), ckpts.follower, PowerIterConfig(max_iters=30))
for i, c in enumerate(certs, 1):
    print(f"step {i}: increase {c.loss_delta:+.2e}  bound {c.bound:.2e}  |grad| {c.grad_norm:.2e}  holds {c.holds}")
print(summarize(certs))
