import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_trace
from lefo.errors import (
    InvalidCount,
    MissingColumn,
    NonFiniteValue,
    NonMonotoneTime,
    TooShort,
    TooShortForSplit,
    ValidationError,
)
from lefo.trace_io import (
    COLUMNS,
    FORCE,
    KINDS,
    VEL,
    DeadbandConfig,
    HapticSample,
    Trace,
    apply_deadband,
    generate_synthetic_trace,
    parse_trace,
    train_test_split,
    write_trace,
)


def write_rows(path, rows, header=",".join(COLUMNS)):
    path.write_text(header + "\n" + "\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
    return path


def test_two_row_file_parses(tmp_path):
    p = write_rows(tmp_path / "a.csv", [[0, *range(9)], [0.001, *range(9)]])
    tr = parse_trace(p)
    assert len(tr) == 2
    assert tr.sample_rate_hz == 1000.0
    assert tr.name == "a"


def test_nan_in_force_reports_row(tmp_path):
    rows = [[i / 1000, *([0.0] * 9)] for i in range(8)]
    rows[5][8] = "nan"
    with pytest.raises(NonFiniteValue) as ei:
        parse_trace(write_rows(tmp_path / "b.csv", rows))
    assert ei.value.row == 5


def test_missing_column(tmp_path):
    p = write_rows(tmp_path / "c.csv", [[0, *range(8)], [1, *range(8)]], header="t,px,py,pz,vx,vy,vz,fx,fy")
    with pytest.raises(MissingColumn):
        parse_trace(p)


def test_non_monotone_time(tmp_path):
    p = write_rows(tmp_path / "d.csv", [[0.0, *range(9)], [0.002, *range(9)], [0.001, *range(9)]])
    with pytest.raises(NonMonotoneTime):
        parse_trace(p)


def test_single_row_is_too_short(tmp_path):
    with pytest.raises(TooShort):
        parse_trace(write_rows(tmp_path / "e.csv", [[0, *range(9)]]))


def test_validation_errors_are_value_errors():
    assert issubclass(NonFiniteValue, ValueError)


def test_columns_may_be_reordered(tmp_path):
    header = ",".join(reversed(COLUMNS))
    p = write_rows(tmp_path / "f.csv", [list(reversed([0.0, *range(9)])), list(reversed([0.001, *range(9)]))], header)
    tr = parse_trace(p)
    assert np.array_equal(tr.data[0], np.arange(9.0))


def test_round_trip_of_synthetic_trace_is_bit_exact(tmp_path):
    tr = generate_synthetic_trace("tap_and_hold", 1000, 1000.0, 3)
    back = parse_trace(write_trace(tr, tmp_path / "g.csv"))
    assert np.array_equal(back.t, tr.t)
    assert np.array_equal(back.data, tr.data)
    assert back.sample_rate_hz == 1000.0


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(st.lists(st.lists(finite, min_size=9, max_size=9), min_size=2, max_size=20))
def test_write_parse_identity(tmp_path_factory, rows):
    tr = make_trace(rows)
    back = parse_trace(write_trace(tr, tmp_path_factory.mktemp("rt") / "x.csv"))
    assert back.same_samples(tr)


def test_trace_invariants():
    with pytest.raises(ValidationError):
        Trace(np.array([0.0]), np.zeros((1, 9)))
    with pytest.raises(ValidationError):
        Trace(np.array([0.0, 0.0]), np.zeros((2, 9)))
    with pytest.raises(ValidationError):
        Trace(np.array([-1.0, 0.0]), np.zeros((2, 9)))
    with pytest.raises(ValidationError):
        Trace(np.array([0.0, 0.002]), np.zeros((2, 9)), sample_rate_hz=1000.0)
    bad = np.zeros((3, 9))
    bad[2, 4] = np.inf
    with pytest.raises(NonFiniteValue) as ei:
        Trace(np.arange(3) / 1000, bad)
    assert ei.value.row == 2


def test_trace_data_is_read_only():
    tr = make_trace(np.zeros((3, 9)))
    with pytest.raises(ValueError):
        tr.data[0, 0] = 1.0


def test_samples_round_trip():
    tr = generate_synthetic_trace("drag", 20, 500.0, 1)
    samples = tr.samples
    assert isinstance(samples[0], HapticSample)
    assert np.array_equal(Trace.from_samples(samples, sample_rate_hz=500.0).data, tr.data)


# --- deadband ----------------------------------------------------------------


def test_zero_deadband_is_identity():
    tr = generate_synthetic_trace("tapping", 300, 1000.0, 0)
    assert apply_deadband(tr, DeadbandConfig(0.0, 0.0)).same_samples(tr)


def test_constant_velocity_passes_through():
    data = np.zeros((50, 9))
    data[:, 0] = np.arange(50) * 0.001
    data[:, VEL] = [1.0, 0.0, 0.0]
    tr = make_trace(data)
    assert apply_deadband(tr, DeadbandConfig(0.1, 0.1)).same_samples(tr)


def test_ramp_hold_pattern():
    # v_n = 1 + 0.05 n, threshold 10% of the running peak; hand trace of the
    # hold rule: a new value is emitted once the accumulated change reaches
    # 0.1 * peak, which happens every third step here.
    data = np.zeros((10, 9))
    data[:, 3] = 1.0 + 0.05 * np.arange(10)
    out = apply_deadband(make_trace(data), DeadbandConfig(0.1, 0.0)).data[:, 3]
    expected = [1.0, 1.0, 1.0, 1.15, 1.15, 1.15, 1.30, 1.30, 1.30, 1.45]
    assert np.allclose(out, expected, rtol=0, atol=1e-12)


def test_deadband_never_touches_position_or_time():
    tr = generate_synthetic_trace("drag", 400, 1000.0, 5)
    out = apply_deadband(tr, DeadbandConfig(0.3, 0.3))
    assert np.array_equal(out.t, tr.t)
    assert np.array_equal(out.pos, tr.pos)
    assert len(out) == len(tr)


@given(
    st.lists(st.lists(st.floats(-10, 10), min_size=9, max_size=9), min_size=2, max_size=40),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_deadband_idempotent(rows, fv, ff):
    tr = make_trace(rows)
    cfg = DeadbandConfig(fv, ff)
    once = apply_deadband(tr, cfg)
    assert apply_deadband(once, cfg).same_samples(once)


@given(st.lists(st.lists(st.floats(-10, 10), min_size=9, max_size=9), min_size=2, max_size=40), st.floats(0, 1))
def test_deadband_outputs_are_earlier_inputs(rows, frac):
    tr = make_trace(rows)
    out = apply_deadband(tr, DeadbandConfig(frac, frac))
    for sl in (VEL, FORCE):
        for n in range(len(tr)):
            assert any(np.array_equal(out.data[n, sl], tr.data[m, sl]) for m in range(n + 1))


def test_deadband_config_range():
    with pytest.raises(ValidationError):
        DeadbandConfig(1.5, 0.1)


# --- synthetic traces --------------------------------------------------------


def test_two_sample_tapping_timestamps():
    tr = generate_synthetic_trace("tapping", 2, 1000.0, 42)
    assert len(tr) == 2
    assert tr.t.tolist() == [0.0, 0.001]


@pytest.mark.parametrize("kind", KINDS)
def test_generation_is_deterministic(kind):
    a = generate_synthetic_trace(kind, 500, 1000.0, 9)
    b = generate_synthetic_trace(kind, 500, 1000.0, 9)
    assert a.same_samples(b)
    assert a.seed == 9


def test_horizontal_fast_has_near_zero_vertical_force():
    tr = generate_synthetic_trace("horizontal_fast", 1000, 1000.0, 7)
    assert np.abs(tr.force[:, 2]).max() < 1e-3
    tr = generate_synthetic_trace("horizontal_slow", 1000, 1000.0, 7)
    assert np.abs(tr.force[:, 2]).max() < 1e-3


@pytest.mark.parametrize("kind", ["tapping", "tap_and_hold"])
def test_tapping_has_impulses_and_zero_force_between_contacts(kind):
    tr = generate_synthetic_trace(kind, 3000, 1000.0, 4)
    fz = tr.force[:, 2]
    contact = fz != 0
    assert contact.any() and (~contact).any()
    assert np.all(tr.force[~contact] == 0.0)
    # several separate contact episodes
    onsets = np.flatnonzero(np.diff(contact.astype(int)) == 1)
    assert len(onsets) >= 3


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", [0, 1, 2**63 + 5])
def test_velocity_is_discrete_derivative(kind, seed):
    tr = generate_synthetic_trace(kind, 400, 1000.0, seed)
    fd = np.diff(tr.pos, axis=0) * 1000.0
    assert np.allclose(tr.vel[1:], fd, rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("n", [0, 1, -3])
def test_invalid_count(n):
    with pytest.raises(InvalidCount):
        generate_synthetic_trace("tapping", n, 1000.0, 0)


def test_unknown_kind_and_bad_rate():
    with pytest.raises(ValidationError):
        generate_synthetic_trace("wiggle", 10, 1000.0, 0)
    with pytest.raises(ValidationError):
        generate_synthetic_trace("drag", 10, 0.0, 0)


# --- split -------------------------------------------------------------------


def test_split_lengths():
    tr = make_trace(np.zeros((10, 9)))
    a, b = train_test_split(tr, 0.8)
    assert (len(a), len(b)) == (8, 2)


def test_split_too_short():
    with pytest.raises(TooShortForSplit):
        train_test_split(make_trace(np.zeros((10, 9))), 0.95)


@given(st.integers(4, 200), st.floats(0.01, 0.99))
def test_split_concatenation_reproduces_original(n, frac):
    data = np.arange(n * 9, dtype=float).reshape(n, 9)
    tr = make_trace(data)
    cut = math.floor(n * frac + 1e-9)
    if cut < 2 or n - cut < 2:
        with pytest.raises(TooShortForSplit):
            train_test_split(tr, frac)
        return
    a, b = train_test_split(tr, frac)
    assert len(a) + len(b) == n
    assert np.array_equal(np.concatenate([a.data, b.data]), data)
    assert np.array_equal(np.concatenate([a.t, b.t]), tr.t)
