import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tp_process, random_tp_vector
from gptomo.core_model import (
    QFunctionParams,
    assemble_matrices,
    beam_splitter_process,
    build_row_v,
    check_tp,
    log_q_value,
    params_from_matrices,
    params_from_vector,
    positivity_status,
    printed_row_v,
    project_physical,
    real_representation,
    params_from_real,
    tp_complete,
    tp_vector,
    vector_from_params,
)
from gptomo.errors import SingularA3
from gptomo.process_gen import idle_deformed


def random_params(rng):
    c = lambda: complex(*rng.normal(size=2))
    return QFunctionParams(rng.uniform(0, 2), rng.uniform(0, 2), c(), c(), c(), c(), c(), c(),
                           float(rng.normal()))


def explicit_log_q(p, alpha, z):
    # direct sum over the 4x4 quadratic form
    A, B = assemble_matrices(p)
    Z = [alpha, np.conj(alpha), z, np.conj(z)]
    quad = sum(np.conj(Z[i]) * A[i, j] * Z[j] for i in range(4) for j in range(4))
    lin = sum(np.conj(B[i]) * Z[i] for i in range(4))
    return (-quad + lin).real + p.c0


def test_zero_fields():
    A, B = assemble_matrices(QFunctionParams())
    assert not A.any() and not B.any()


def test_hermitian(rng):
    for _ in range(20):
        A, _ = assemble_matrices(random_params(rng))
        np.testing.assert_allclose(A, A.conj().T, atol=1e-15)


def test_beam_splitter_a2_block():
    th = 0.7
    A, _ = assemble_matrices(beam_splitter_process(th))
    np.testing.assert_allclose(A[:2, 2:], -np.cos(th) / 2 * np.array([[0, 1], [1, 0]]), atol=1e-16)


def test_matrix_round_trip(rng):
    p = random_params(rng)
    A, B = assemble_matrices(p)
    q = params_from_matrices(A, B, p.c0)
    np.testing.assert_allclose(vector_from_params(q, True), vector_from_params(p, True), atol=1e-14)
    Ap, Bp = real_representation(p)
    r = params_from_real(Ap, Bp, p.c0)
    np.testing.assert_allclose(vector_from_params(r, True), vector_from_params(p, True), atol=1e-14)


def test_log_q_examples(rng):
    assert log_q_value(idle_deformed(1.0), 0, 0) == 0.0
    bs = beam_splitter_process(np.pi / 3)
    assert log_q_value(bs, 1.0, 1.0) == pytest.approx(-0.25, abs=1e-15)
    for _ in range(50):
        p = random_params(rng)
        a, z = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        assert log_q_value(p, a, z) == pytest.approx(explicit_log_q(p, a, z), abs=1e-12)


def test_printed_row_examples():
    np.testing.assert_array_equal(printed_row_v(0, 0), np.eye(15)[14])
    want = 2 * np.array([0.5, 0.5, 1, 0, 0, -1, 1, 0, -1, 0, 0, -1, 0, -1, 0.5])
    np.testing.assert_allclose(printed_row_v(1, 1j), want, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_row_identity(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng)
    a, z = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
    lhs = -build_row_v(a, z) @ vector_from_params(p, with_c0=True)
    assert lhs == pytest.approx(log_q_value(p, a, z), abs=1e-12)


def test_vector_round_trip(rng):
    p = random_params(rng)
    x = vector_from_params(p, with_c0=True)
    np.testing.assert_allclose(vector_from_params(params_from_vector(x), True), x, atol=0)
    with pytest.raises(ValueError):
        params_from_vector(np.zeros(9))


def test_tp_complete_beam_splitter():
    p = tp_complete(tp_vector(beam_splitter_process(np.pi / 3)))
    assert p.a1 == pytest.approx(0.25, abs=1e-15)
    assert abs(p.c1) < 1e-15 and abs(p.b1) < 1e-15 and abs(p.c0) < 1e-15


def test_tp_complete_full_loss():
    p = tp_complete(np.array([1.0, 0, 0, 0, 0, 0, 0, 0, 0]))
    assert p.a1 == 0 and p.b1 == 0 and p.c0 == pytest.approx(0, abs=1e-15)


def test_tp_complete_rejects_inadmissible():
    with pytest.raises(SingularA3):
        tp_complete(np.array([1.0, 0, 0, 0.6, 0, 0, 0, 0, 0]))
    with pytest.raises(ValueError):
        tp_complete(np.zeros(8))


def test_check_tp_examples(rng):
    for _ in range(20):
        assert check_tp(random_tp_process(rng)).max_residual < 1e-12
    r = check_tp(idle_deformed(1.0))
    assert r.W == pytest.approx((1 - np.tanh(1) ** 2) / np.sqrt(2), rel=1e-12)
    assert r.w0 == pytest.approx(0, abs=1e-15)
    assert not r.is_tp
    for th in np.linspace(0, np.pi / 2, 7):
        assert check_tp(beam_splitter_process(th)).is_tp


def test_positivity(rng):
    bs = beam_splitter_process(0.4)
    assert positivity_status(bs, "CP").passed
    assert np.linalg.matrix_rank(assemble_matrices(bs)[0], tol=1e-12) == 2
    bad = QFunctionParams(a2=1.0, c2=0.6)
    assert not positivity_status(bad, "TP").passed
    for _ in range(50):
        assert positivity_status(random_tp_process(rng), "CP").passed
    with pytest.raises(ValueError):
        positivity_status(bs, "XX")


def test_projection_examples():
    bs = beam_splitter_process(0.3)
    assert project_physical(bs) is bs
    Ap = np.diag([2.0, 1.0, 1.0, -1.0])
    q = project_physical(params_from_real(Ap, np.zeros(4), 0.0))
    np.testing.assert_allclose(real_representation(q)[0], np.diag([1.5, 0.75, 0.75, 0.0]), atol=1e-14)


def test_projection_small_perturbation():
    bs = beam_splitter_process(0.3)
    Ap, Bp = real_representation(bs)
    d, V = np.linalg.eigh(Ap)
    d[0] -= 1e-3  # zero eigenvalue pushed negative
    q = project_physical(params_from_real((V * d) @ V.T, Bp, 0.0))
    Aq = real_representation(q)[0]
    assert np.linalg.eigvalsh(Aq)[0] >= -1e-14
    assert np.max(np.abs(Aq - Ap)) < 2e-3


def test_beam_splitter_limits():
    A, _ = assemble_matrices(beam_splitter_process(np.pi / 2))
    np.testing.assert_allclose(A[:2, :], 0, atol=1e-16)
    np.testing.assert_allclose(A[2:, 2:], np.eye(2) / 2)
    bs0 = beam_splitter_process(0.0)
    idle = idle_deformed(30.0)
    np.testing.assert_allclose(vector_from_params(bs0), vector_from_params(idle), atol=1e-15)


def test_tp_vector_indices(rng):
    t = random_tp_vector(rng)
    np.testing.assert_allclose(tp_vector(tp_complete(t)), t, atol=0)
