import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_problem
from qlrb.truth import exp_reluctivity
from qlrb.eim import (
    EimModel,
    SnapshotBank,
    build_bank,
    delta_M,
    eim_build,
    eim_coefficients,
    eim_interpolate,
)


def bank_of(fields):
    fields = np.asarray(fields, dtype=float)
    return SnapshotBank(np.arange(fields.shape[0], dtype=float), [1], fields[:, None, :])


def random_bank(seed, P=6, nk=5, n_elem=30):
    rng = np.random.default_rng(seed)
    x = (np.arange(n_elem) + 0.5) / n_elem
    mus = rng.uniform(1, 5, P)
    ts = rng.uniform(0, 1, nk)
    fields = np.exp(mus[:, None, None] * np.sin(np.pi * x)[None, None, :] ** 2
                    * ts[None, :, None]) + rng.uniform(0, 0.1, (P, nk, 1))
    return SnapshotBank(mus, np.arange(1, nk + 1), fields)


@pytest.fixture(scope="module")
def benchmark_bank():
    p = small_problem(n_elem=40, K=40)
    return build_bank(p, np.linspace(1, 5.5, 12))


def test_single_field_bank():
    f = np.array([0.5, -2.0, 1.0, 0.25])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = eim_build(bank_of([f]), 0.0, M_max=4)
    assert model.M == 1 and model.degenerate
    np.testing.assert_allclose(model.basis[0], f / -2.0)
    assert model.interp_indices[0] == 1


def test_two_independent_fields_exact():
    f1 = np.array([1.0, 2.0, 3.0, 0.5, 0.1])
    f2 = np.array([0.3, -1.0, 0.7, 2.0, 1.2])
    model = eim_build(bank_of([f1, f2]), 0.0, 2)
    assert model.M == 2
    for f in (f1, f2):
        # oracle: solve the 2x2 interpolation system directly
        Q = model.basis
        c = np.linalg.solve(Q[:, model.interp_indices].T, f[model.interp_indices])
        np.testing.assert_allclose(c @ Q, f, atol=1e-12)
        np.testing.assert_allclose(eim_interpolate(model, f), f, atol=1e-12)


def test_zero_bank_is_degenerate():
    with pytest.warns(RuntimeWarning):
        model = eim_build(bank_of(np.zeros((3, 5))), 0.0, 3)
    assert model.M == 1 and model.degenerate
    np.testing.assert_allclose(eim_interpolate(model, np.zeros(5)), 0.0)


def test_build_validation():
    with pytest.raises(ValueError):
        eim_build(bank_of([[1.0, 2.0]]), -1.0, 2)
    with pytest.raises(ValueError):
        eim_build(bank_of([[1.0, 2.0]]), 0.0, 0)
    with pytest.raises(ValueError):
        SnapshotBank([1.0], [1, 2], np.zeros((1, 3, 4)))


@given(st.integers(0, 10_000), st.integers(1, 10))
def test_model_invariants(seed, M_max):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = eim_build(random_bank(seed), 0.0, M_max)
    B, M = model.B, model.M
    assert np.array_equal(B, np.tril(B)) and np.all(np.diag(B) == 1.0)
    assert len(set(model.interp_indices.tolist())) == M
    for m in range(M):
        assert model.basis[m, model.interp_indices[m]] == 1.0
        assert np.max(np.abs(model.basis[m])) <= 1.0 + 1e-14
    np.testing.assert_allclose(model.basis[:, model.interp_indices].T, B, atol=1e-12)
    deltas = [d for _, _, d in model.training_log]
    assert deltas[-1] <= deltas[0]


@given(st.integers(0, 10_000))
def test_interpolation_exact_at_points(seed):
    rng = np.random.default_rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = eim_build(random_bank(seed), 0.0, 6)
    f = rng.standard_normal(model.n_elem)
    g = eim_interpolate(model, f)
    np.testing.assert_allclose(g[model.interp_indices], f[model.interp_indices], atol=1e-12)
    # members of the span are reproduced everywhere
    c = rng.standard_normal(model.M)
    np.testing.assert_allclose(eim_interpolate(model, c @ model.basis), c @ model.basis,
                               atol=1e-12 * max(1, np.abs(c).sum()))


def test_coefficients(benchmark_bank):
    model = eim_build(benchmark_bank, 0.0, 8)
    for j in range(model.M):
        np.testing.assert_allclose(eim_coefficients(model, model.B[:, j]), np.eye(model.M)[j],
                                   atol=1e-13)
    assert np.all(eim_coefficients(model, np.zeros(model.M)) == 0)
    v = np.random.default_rng(0).uniform(-1, 1, model.M)
    assert np.max(np.abs(model.B @ eim_coefficients(model, v) - v)) < 1e-12


def test_selected_snapshots_reproduced(benchmark_bank):
    model = eim_build(benchmark_bank, 0.0, 8)
    for mu, k, _ in model.training_log:
        p = int(np.flatnonzero(benchmark_bank.mus == mu)[0])
        j = int(np.flatnonzero(benchmark_bank.steps == k)[0])
        f = benchmark_bank.fields[p, j]
        g = eim_interpolate(model, f)
        np.testing.assert_allclose(g[model.interp_indices], f[model.interp_indices],
                                   rtol=0, atol=1e-12)


def test_nestedness(benchmark_bank):
    big = eim_build(benchmark_bank, 0.0, 8)
    for m in (1, 3, 5):
        small = eim_build(benchmark_bank, 0.0, m)
        np.testing.assert_array_equal(small.interp_indices, big.interp_indices[:m])
        np.testing.assert_array_equal(small.basis, big.basis[:m])
        np.testing.assert_array_equal(small.B, big.B[:m, :m])
        t = big.truncate(m)
        assert t.digest() == small.digest()


def test_tolerance_stop(benchmark_bank):
    model = eim_build(benchmark_bank, 1e-2, 8)
    deltas = [d for _, _, d in model.training_log]
    assert model.M < 8 and all(d > 1e-2 for d in deltas)


def test_delta_M_zero_on_span():
    model = EimModel.identity(10)
    grads = np.random.default_rng(2).uniform(-0.5, 0.5, (4, 10))
    assert delta_M(model, exp_reluctivity(), grads, 3.0) <= 1e-12


def test_bank_from_trajectories(benchmark_bank):
    assert benchmark_bank.fields.shape == (12, 40, 40)
    assert np.all(benchmark_bank.fields >= 2.0)  # nu = exp(mu s^2) + 1 >= 2
