import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_trace
from lefo.bound import (
    CSV_COLUMNS,
    INDEFINITE_NOTE,
    BoundCertificate,
    PowerIterConfig,
    QuadraticLoss,
    certificates_to_csv,
    certify_bound,
    delta_theta,
    hessian_vector_product,
    max_eigenvalue,
    mlp_loss_fn,
    summarize,
    sweep_checkpoints,
    top_eigenvalue,
)
from lefo.errors import LengthMismatch, NoConvergence, ValidationError, ZeroDirection
from lefo.game import GameConfig, lefo_train
from lefo.predictor import MlpParams, SgdConfig, mlp_init, training_pairs

DIAG31 = QuadraticLoss(np.diag([3.0, 1.0]))
TIGHT = PowerIterConfig(max_iters=5000, rel_tolerance=1e-10)


def random_spd(rng, dim):
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eig = rng.uniform(0.1, 10.0, dim)
    return (q * eig) @ q.T, eig, q


# --- delta ---------------------------------------------------------------------


def test_delta_identical():
    d, sq = delta_theta([1.0, 2.0], [1.0, 2.0])
    assert d.tolist() == [0.0, 0.0] and sq == 0.0


def test_delta_arithmetic():
    d, sq = delta_theta([1, 2], [3, 2])
    assert d.tolist() == [2.0, 0.0] and sq == 4.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10), st.data())
def test_delta_norm_symmetric(a, data):
    b = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(a), max_size=len(a)))
    assert delta_theta(a, b)[1] == delta_theta(b, a)[1]


def test_delta_length_mismatch():
    with pytest.raises(LengthMismatch):
        delta_theta([1.0], [1.0, 2.0])


# --- HVP -----------------------------------------------------------------------


def test_hvp_quadratic_exact():
    hv = hessian_vector_product(DIAG31, np.zeros(2), np.array([1.0, 0.0]))
    assert np.allclose(hv, [3.0, 0.0], rtol=0, atol=1e-8)


def test_hvp_zero_direction():
    with pytest.raises(ZeroDirection):
        hessian_vector_product(DIAG31, np.zeros(2), np.zeros(2))


@pytest.mark.parametrize("seed", range(5))
def test_hvp_linear_in_direction(seed):
    rng = np.random.default_rng(seed)
    a, _, _ = random_spd(rng, 6)
    loss = QuadraticLoss(a)
    theta, v = rng.normal(size=6), rng.normal(size=6)
    one = hessian_vector_product(loss, theta, v)
    two = hessian_vector_product(loss, theta, 2 * v)
    assert np.linalg.norm(two - 2 * one) <= 1e-6 * np.linalg.norm(two)
    assert np.allclose(one, a @ v, rtol=1e-7, atol=1e-9)


def jax_hessian(params, x, y):
    import jax
    import jax.numpy as jnp

    jax.config.update("jax_enable_x64", True)
    shapes = [w.shape for w in params.weights]

    def loss(theta):
        h, i = jnp.asarray(x), 0
        for li, (o, n) in enumerate(shapes):
            w = theta[i : i + o * n].reshape(o, n)
            i += o * n
            b = theta[i : i + o]
            i += o
            h = h @ w.T + b
            if li < len(shapes) - 1:
                h = jnp.maximum(h, 0.0)
        return jnp.mean((h - jnp.asarray(y)) ** 2)

    return np.asarray(jax.hessian(loss)(jnp.asarray(params.flat())))


@pytest.mark.parametrize("seed", range(4))
def test_hvp_matches_exact_hessian_on_small_net(seed):
    rng = np.random.default_rng(seed)
    params = mlp_init(3, 5, 3, 2, seed)
    params = params.with_flat(params.flat() + rng.normal(0, 0.1, params.n_params))
    assert params.n_params <= 100
    x, y = rng.normal(size=(8, 3)), rng.normal(size=(8, 2))
    h = jax_hessian(params, x, y)
    loss = mlp_loss_fn(params, x, y)
    for _ in range(3):
        v = rng.normal(size=params.n_params)
        got = hessian_vector_product(loss, params.flat(), v, PowerIterConfig(hvp_step=1e-6))
        assert np.linalg.norm(got - h @ v) <= 1e-6 * np.linalg.norm(h @ v)


# --- eigenvalues ---------------------------------------------------------------


def test_dominant_eigenvalue_diag():
    lam, iters = max_eigenvalue(DIAG31, np.zeros(2))
    assert abs(lam - 3.0) < 1e-6 and iters >= 2


@pytest.mark.parametrize("seed", range(5))
def test_identity_any_start(seed):
    lam, _ = max_eigenvalue(QuadraticLoss(np.eye(4)), np.zeros(4), PowerIterConfig(seed=seed))
    assert abs(lam - 1.0) < 1e-6


def test_slow_gap_converges():
    lam, _ = max_eigenvalue(QuadraticLoss(np.diag([3.0, 2.999])), np.zeros(2), PowerIterConfig(max_iters=10_000))
    assert abs(lam - 3.0) < 1e-3


def test_no_convergence_carries_estimate():
    a = np.diag([3.0, 2.9999, 0.5])
    with pytest.raises(NoConvergence) as ei:
        max_eigenvalue(QuadraticLoss(a), np.zeros(3), PowerIterConfig(max_iters=2, rel_tolerance=1e-15))
    assert 0.5 <= ei.value.estimate <= 3.0 and ei.value.iterations == 2


def test_top_eigenvalue_for_indefinite_hessian():
    loss = QuadraticLoss(np.diag([-5.0, 2.0, 1.0]))
    dom, _ = max_eigenvalue(loss, np.zeros(3), TIGHT)
    assert dom == pytest.approx(-5.0, abs=1e-6)
    top, _, converged, dominant = top_eigenvalue(loss, np.zeros(3), TIGHT)
    assert top == pytest.approx(2.0, abs=1e-6) and converged and dominant < 0


@pytest.mark.parametrize("seed", range(10))
def test_rayleigh_quotient_below_top(seed):
    rng = np.random.default_rng(seed)
    a, _, _ = random_spd(rng, int(rng.integers(2, 11)))
    loss = QuadraticLoss(a)
    # near-equal top eigenvalues may exhaust the budget; the estimate is still usable
    lam, _, _, _ = top_eigenvalue(loss, np.zeros(len(a)), TIGHT)
    for _ in range(10):
        v = rng.normal(size=len(a))
        v /= np.linalg.norm(v)
        assert v @ hessian_vector_product(loss, np.zeros(len(a)), v) <= lam + 1e-6


# --- certificates --------------------------------------------------------------


def test_no_step_certificate():
    c = certify_bound(DIAG31, [0.3, -0.2], [0.3, -0.2])
    assert c.loss_delta == 0.0 and c.bound == 0.0 and c.holds


def test_tight_along_top_eigenvector():
    c = certify_bound(DIAG31, [0.0, 0.0], [1.0, 0.0])
    assert c.loss_delta == pytest.approx(1.5, abs=1e-12)
    assert c.bound == pytest.approx(1.5, abs=1e-6)
    assert c.holds


def test_loose_along_other_eigenvector():
    c = certify_bound(DIAG31, [0.0, 0.0], [0.0, 1.0])
    assert c.loss_delta == pytest.approx(0.5, abs=1e-12)
    assert c.bound == pytest.approx(1.5, abs=1e-6)
    assert c.holds


def test_bound_field_consistency():
    c = certify_bound(DIAG31, [0.1, 0.1], [0.5, -0.3])
    assert c.bound == 0.5 * c.lambda_max * c.delta_theta_sq
    assert c.holds == (c.loss_delta <= c.bound + c.slack)
    assert c.slack == 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_quadratic_exactness_and_bound(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 11))
    a, _, _ = random_spd(rng, dim)
    centre = rng.normal(size=dim)
    loss = QuadraticLoss(a, -a @ centre)  # minimum at centre
    step = rng.normal(size=dim)
    c = certify_bound(loss, centre, centre + step, TIGHT)
    assert c.loss_delta == pytest.approx(0.5 * step @ a @ step, abs=1e-8)
    assert c.holds and c.loss_delta <= c.bound + 1e-12
    assert abs(c.taylor_residual) < 1e-6
    assert not c.assumption_stressed


def test_gradient_stress_flag():
    loss = QuadraticLoss(np.eye(2))
    c = certify_bound(loss, [1.0, 0.0], [1.1, 0.0])
    assert c.grad_norm == pytest.approx(1.0)
    assert c.assumption_stressed
    assert not certify_bound(loss, [1e-4, 0.0], [0.0, 0.0]).assumption_stressed


def test_indefinite_note():
    c = certify_bound(QuadraticLoss(np.diag([-5.0, 2.0])), [0.0, 0.0], [0.0, 1.0], TIGHT)
    assert c.note == INDEFINITE_NOTE
    assert c.lambda_max == pytest.approx(2.0, abs=1e-6)


def test_sweep_counts():
    cks = [np.array([0.1 * i, -0.05 * i]) for i in range(11)]
    certs = sweep_checkpoints(lambda i: DIAG31, cks)
    assert len(certs) == 10


def test_sweep_identical_pair():
    certs = sweep_checkpoints(lambda i: DIAG31, [np.zeros(2), np.zeros(2)])
    assert len(certs) == 1
    c = certs[0]
    assert c.loss_delta == 0 and c.delta_theta_sq == 0 and c.bound == 0 and c.holds


def test_sweep_needs_two():
    with pytest.raises(ValidationError):
        sweep_checkpoints(lambda i: DIAG31, [np.zeros(2)])


def test_csv_schema(tmp_path):
    certs = sweep_checkpoints(lambda i: DIAG31, [np.zeros(2), np.ones(2), np.array([2.0, 1.0])])
    certificates_to_csv(certs, tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert lines[1].split(",")[5] in ("true", "false")


def test_constant_trace_smoke_run():
    const = np.tile(np.linspace(0.2, 1.0, 9), (120, 1))
    train, hold = make_trace(const[:80]), make_trace(const[80:])
    leader = mlp_init(3, 12, 36, 9, 1)
    follower = mlp_init(2, 12, 36, 9, 2)
    leader, follower, rep, ck = lefo_train(leader, follower, train, hold, GameConfig(max_iterations=4), SgdConfig(seed=0))
    for net, snaps in ((leader, ck.leader), (follower, ck.follower)):
        x, y = training_pairs(net, train.data)
        loss = mlp_loss_fn(net, x, y)
        certs = sweep_checkpoints(lambda i: loss, snaps, PowerIterConfig(max_iters=30))
        assert len(certs) == rep.iterations_used
        assert all(c.holds for c in certs)
        assert summarize(certs)["all_unstressed_hold"]


def test_power_config_validation():
    with pytest.raises(ValidationError):
        PowerIterConfig(max_iters=0)
    with pytest.raises(ValidationError):
        PowerIterConfig(hvp_step=0.0)
    assert PowerIterConfig(seed=-1).seed == 2**64 - 1
