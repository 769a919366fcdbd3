import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from memoryless._kernel import _run_block_py, run_block


def blocks(rng, steps, n, k):
    current = np.log(rng.dirichlet(np.ones(k), n))
    lls = np.log(rng.uniform(0.05, 1.0, (steps, n, k)))
    w = rng.uniform(0.0, 1.0, (steps, n, n)) * (rng.uniform(size=(steps, n, n)) < 0.6)
    return current, lls, w


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 6), st.integers(2, 4))
def test_fallback_matches_compiled(seed, steps, n, k):
    current, lls, w = blocks(np.random.default_rng(seed), steps, n, k)
    a, b = np.empty_like(lls), np.empty_like(lls)
    assert run_block(current, lls, w, a) == _run_block_py(current, lls, w, b) == -1
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(np.exp(a).sum(axis=-1), 1.0, atol=1e-12)


def test_zero_weight_on_impossible_state_is_skipped():
    current = np.array([[0.0, -np.inf], [np.log(0.5), np.log(0.5)]])
    lls = np.zeros((1, 2, 2))
    w = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    for kernel in (run_block, _run_block_py):
        out = np.empty_like(lls)
        assert kernel(current, lls, w, out) == -1
        np.testing.assert_allclose(np.exp(out[0]), 0.5)


def test_reports_first_failed_step():
    rng = np.random.default_rng(3)
    current, lls, w = blocks(rng, 8, 3, 2)
    lls[5, 1, :] = -np.inf
    for kernel in (run_block, _run_block_py):
        out = np.empty_like(lls)
        assert kernel(current, lls, w, out) == 5
