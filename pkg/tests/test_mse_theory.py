import numpy as np
import pytest

from conftest import random_tp_vector
from gptomo.core_model import QFunctionParams, tp_complete
from gptomo.errors import NotIC
from gptomo.mse_theory import (
    E1,
    E2,
    E3,
    _trace_against_y,
    mse_formula_nontp,
    mse_formula_tp,
    survival,
    vtp_rows,
    y_block,
)
from gptomo.phase_space import make_grid, output_log_q, probability_table

DESIGN6 = np.array([0.9 + 0.1j, -0.8 + 0.5j, 0.2 - 0.9j, -0.3 - 0.2j, 0.6 + 0.7j, -0.7 - 0.8j])


def test_y_block_example():
    Y = y_block(np.array([0.01, 0.99]), 100)
    assert Y[0, 0] == pytest.approx((1 - 0.99**100) ** 2 * 99, rel=1e-12)
    assert Y[0, 0] == pytest.approx(39.8, abs=0.05)


def test_y_block_limits():
    pt = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(y_block(pt, 10**6), np.diag(1 / pt) - 1, atol=1e-12)
    Y = y_block(np.array([0.0, 0.4, 0.6]), 50)
    np.testing.assert_array_equal(Y[0], 0)
    np.testing.assert_array_equal(Y[:, 0], 0)
    small = y_block(np.array([1e-12, 0.5]), 100)
    assert np.all(np.isfinite(small)) and small[0, 0] < 1e-7


def test_survival():
    assert survival(0.0, 10) == 0
    assert survival(1.0, 3) == 1
    assert survival(1e-20, 10**6) == pytest.approx(1e-14, rel=1e-6)


def test_identity_stub():
    pt = np.array([[0.1, 0.2, 0.3, 0.4]])
    N = 7
    got = _trace_against_y(np.eye(4), pt, N)
    np.testing.assert_allclose(got, np.diag(y_block(pt[0], N)) / N, rtol=1e-14)


def test_constant_matrices():
    assert E1.shape == (4, 3) and E2.shape == (4, 4) and E3.shape == (2, 2)
    np.testing.assert_array_equal(E3, [[1, 1j], [1, -1j]])


def test_nontp_scaling_when_every_bin_survives():
    # tight grid: every bin carries enough mass that survival factors are 1
    g = make_grid(6, 1.2)
    p = tp_complete(np.array([1.0, 0.1, 0, 0.05, 0, -0.3, 0.1, 0.05, 0]))
    _, pt, _ = probability_table(p, DESIGN6 * 0.4, g)
    N = int(1e7)
    assert pt.min() >= 50 / N
    r = mse_formula_nontp(p, DESIGN6 * 0.4, g, 2 * N).total / mse_formula_nontp(p, DESIGN6 * 0.4, g, N).total
    assert 0.49 <= r <= 0.51


def test_tp_scaling_when_every_bin_survives():
    g = make_grid(6, 1.2)
    t = np.array([1.0, 0.1, 0, 0.05, 0, -0.3, 0.1, 0.05, 0])
    amps = DESIGN6[:3] * 0.4
    N = int(1e7)
    r = mse_formula_tp(t, amps, g, 2 * N).total / mse_formula_tp(t, amps, g, N).total
    assert 0.49 <= r <= 0.51


def test_nontp_requires_ic(grid):
    ring = np.exp(2j * np.pi * np.arange(8) / 8)
    with pytest.raises(NotIC):
        mse_formula_nontp(QFunctionParams(a2=1.0), ring, grid, 1000)


def test_tp_minimum_inputs(grid, rng):
    t = random_tp_vector(rng)
    with pytest.raises(NotIC):
        mse_formula_tp(t, DESIGN6[:2], grid, 1000)
    r = mse_formula_tp(t, DESIGN6[:3], grid, 1000)
    assert np.isfinite(r.total) and r.total > 0 and len(r.per_parameter) == 9
    assert r.normalized == pytest.approx(r.total / 9)


def fd_rows(t, amps, grid, h=1e-6):
    cols = []
    for i in range(9):
        e = np.zeros(9)
        e[i] = h
        lp = np.concatenate([output_log_q(tp_complete(t + e), a, grid.bin_centers) for a in amps])
        lm = np.concatenate([output_log_q(tp_complete(t - e), a, grid.bin_centers) for a in amps])
        cols.append((lp - lm) / (2 * h))
    return np.stack(cols, axis=1)


def test_vtp_rows_match_finite_differences(rng):
    g = make_grid(6, 2.5)
    for _ in range(5):
        t = random_tp_vector(rng)
        amps = rng.uniform(-1, 1, 3) + 1j * rng.uniform(-1, 1, 3)
        an = vtp_rows(t, amps, g)
        fd = fd_rows(t, amps, g)
        np.testing.assert_allclose(an, fd, rtol=1e-6, atol=1e-6 * np.max(np.abs(fd)))
