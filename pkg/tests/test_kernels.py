import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cascadeopt import _kernels


def _case(seed, M, n, P):
    rng = np.random.default_rng(seed)
    margins = np.round(rng.random((M - 1, n)), 2)  # coarse values so ties with thetas occur
    losses = rng.integers(0, 2, (M, n)).astype(np.int64)
    thetas = np.round(rng.random((P, M - 1)), 2)
    return margins, losses, thetas


def _reference(margins, losses, thetas):
    M, n = losses.shape
    reach = np.zeros((len(thetas), M), dtype=np.int64)
    loss = np.zeros(len(thetas), dtype=np.int64)
    for p, th in enumerate(thetas):
        for x in range(n):
            stage = next((i for i in range(M - 1) if margins[i, x] >= th[i]), M - 1)
            reach[p, : stage + 1] += 1
            loss[p] += losses[stage, x]
    return reach, loss


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 40), st.integers(1, 12))
def test_numpy_path_matches_reference(seed, M, n, P):
    m, l, t = _case(seed, M, n, P)
    got = _kernels.walk_counts_numpy(m, l, t)
    ref = _reference(m, l, t)
    assert np.array_equal(got[0], ref[0]) and np.array_equal(got[1], ref[1])


@pytest.mark.skipif(_kernels.walk_counts_numba is None, reason="numba unavailable")
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 40), st.integers(1, 12))
def test_numba_matches_numpy_bitwise(seed, M, n, P):
    m, l, t = _case(seed, M, n, P)
    a = _kernels.walk_counts_numba(m, l, t)
    b = _kernels.walk_counts_numpy(m, l, t)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_numpy_chunking(monkeypatch):
    m, l, t = _case(1, 3, 50, 300)
    ref = _kernels.walk_counts_numpy(m, l, t)
    monkeypatch.setattr(_kernels, "_CHUNK", 64)
    got = _kernels.walk_counts_numpy(m, l, t)
    assert np.array_equal(got[0], ref[0]) and np.array_equal(got[1], ref[1])


def test_env_flag_forces_numpy():
    code = "from cascadeopt import _kernels; print(_kernels.USING_NUMBA)"
    env = {**os.environ, "CASCADEOPT_NO_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_single_stage():
    reach, loss = _kernels.walk_counts(np.zeros((0, 3)), np.array([[1, 0, 1]]), np.zeros((2, 0)))
    assert reach.tolist() == [[3], [3]] and loss.tolist() == [2, 2]
