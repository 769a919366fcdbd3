import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from memoryless.model import (InitialPriors, SignalModel, StateSpace, UniformStream,
                              is_globally_identifiable, kl_divergence, lambda_matrix,
                              sample_signal, signals_from_uniforms)


def distributions(size, min_value=1e-3):
    return arrays(float, size, elements=st.floats(min_value, 1.0)).map(lambda a: a / a.sum())


# -- KL ------------------------------------------------------------------------

def test_kl_examples():
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(
        0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-15)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.14384, abs=1e-5)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)


def test_kl_errors():
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6).flatmap(lambda k: st.tuples(distributions(k), distributions(k))))
def test_kl_matches_summation_and_is_nonnegative(pq):
    p, q = pq
    d = kl_divergence(p, q)
    assert d == pytest.approx(oracles.kl(p, q), abs=1e-12)
    assert d >= 0.0
    assert kl_divergence(p, p) == 0.0
    if not np.allclose(p, q, rtol=0, atol=1e-6):
        assert d > 0.0


# -- lambda matrix and identifiability ----------------------------------------------

def test_lambda_examples():
    sig = SignalModel(([[0.5, 0.5], [0.25, 0.75]], [[0.4, 0.6], [0.4, 0.6]]))
    lam = lambda_matrix(sig, 0)
    assert lam[0, 1] == pytest.approx(-0.14384, abs=1e-5)
    assert lam[1, 1] == 0.0
    assert (lam[:, 0] == 0.0).all()


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(2, 4), st.integers(2, 4), st.data())
def test_lambda_nonpositive_with_zero_truth_column(n, k, s, data):
    tables = [np.stack([data.draw(distributions(s)) for _ in range(k)]) for _ in range(n)]
    truth = data.draw(st.integers(0, k - 1))
    lam = lambda_matrix(SignalModel(tuple(tables)), truth)
    assert lam.shape == (n, k)
    assert (lam <= 0).all()
    assert (lam[:, truth] == 0.0).all()
    for i in range(n):
        for j in range(k):
            assert lam[i, j] == pytest.approx(-oracles.kl(tables[i][truth], tables[i][j]), abs=1e-12)


def three_state_model(with_second=True):
    informative = [[0.5, 0.5], [0.2, 0.8], [0.5, 0.5]]
    second = [[0.5, 0.5], [0.5, 0.5], [0.7, 0.3]]
    flat = [[0.5, 0.5]] * 3
    return SignalModel((informative, second if with_second else flat, flat))


def test_identifiability_examples():
    flat = SignalModel(([[0.5, 0.5]] * 2, [[0.5, 0.5]] * 2))
    assert not is_globally_identifiable(flat, 0)
    two = SignalModel(([[0.5, 0.5]] * 2, [[0.5, 0.5], [0.3, 0.7]]))
    report = is_globally_identifiable(two, 0)
    assert report and report.witnesses == {1: [1]}
    full = is_globally_identifiable(three_state_model(), 0)
    assert full and full.witnesses == {1: [0], 2: [1]}
    lam = lambda_matrix(three_state_model(), 0)
    assert lam[0, 1] < 0 and lam[0, 2] == 0 and lam[1, 1] == 0 and lam[1, 2] < 0
    assert not is_globally_identifiable(three_state_model(with_second=False), 0)


# -- construction checks ----------------------------------------------------------

def test_signal_model_rejects_zeros_by_default():
    with pytest.raises(ValueError):
        SignalModel(([[1.0, 0.0], [0.5, 0.5]],))
    SignalModel(([[1.0, 0.0], [0.5, 0.5]],), allow_zeros=True)


def test_state_space_and_priors():
    space = StateSpace(("a", "b", "c"), 1)
    assert space.false_states == [0, 2]
    with pytest.raises(ValueError):
        StateSpace(("a", "a"), 0)
    pri = InitialPriors(np.array([[0.9, 0.1], [0.5, 0.5]]))
    np.testing.assert_allclose(pri.psi(0)[0], [0.0, math.log(1 / 9)])
    with pytest.raises(ValueError):
        InitialPriors(np.array([[1.0, 0.0]]))


# -- sampling ----------------------------------------------------------------------

def test_degenerate_row_always_same_signal():
    sig = SignalModel(([[1.0, 0.0], [0.5, 0.5]],), allow_zeros=True)
    rng = np.random.default_rng(3)
    assert {sample_signal(sig, 0, 0, rng) for _ in range(1000)} == {0}


def test_sampling_is_deterministic():
    sig = SignalModel(([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]],))
    a = [sample_signal(sig, 0, 0, np.random.default_rng(11)) for _ in range(5)]
    b = [sample_signal(sig, 0, 0, np.random.default_rng(11)) for _ in range(5)]
    assert a == b
    u1 = UniformStream(5, 3).span(0, 3000)
    u2 = UniformStream(5, 3).span(0, 3000)
    assert np.array_equal(u1, u2)


def test_stream_random_access():
    stream = UniformStream(9, 4, block_size=16)
    full = stream.span(0, 100)
    fresh = UniformStream(9, 4, block_size=16)
    assert np.array_equal(fresh.at(77), full[77])
    assert np.array_equal(fresh.span(30, 50), full[30:50])
    other = UniformStream(9, 4, stream=1, block_size=16).span(0, 100)
    assert not np.array_equal(other, full)


def test_sample_frequency_in_binomial_band():
    row = np.array([0.2, 0.3, 0.5])
    sig = SignalModel((np.stack([row, row[::-1]]),))
    rng = np.random.default_rng(2024)
    n = 100_000
    draws = np.array([sample_signal(sig, 0, 0, rng) for _ in range(n)])
    counts = np.bincount(draws, minlength=3)
    sd = np.sqrt(n * row * (1 - row))
    assert (np.abs(counts - n * row) <= 3 * sd).all()


def test_stream_signals_chi_square():
    row = np.array([0.1, 0.25, 0.4, 0.25])
    sig = SignalModel((np.stack([row, np.full(4, 0.25)]),))
    u = UniformStream(17, 1).span(0, 100_000)
    signals = signals_from_uniforms(sig, 0, u)[:, 0]
    counts = np.bincount(signals, minlength=4)
    expected = 100_000 * row
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 0.999 quantile of chi-square with 3 degrees of freedom
    assert chi2 < 16.266
