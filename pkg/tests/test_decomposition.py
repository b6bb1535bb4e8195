import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from microcast.decomposition import ScaleStack, decompose_batch, decompose_causal, reconstruct, warmup_length
from microcast.errors import CorruptStackError, InvalidArgumentError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
levels_st = st.integers(1, 4)


def series_st(min_size=16, max_size=128):
    return arrays(np.float64, st.integers(min_size, max_size), elements=finite)


@pytest.mark.parametrize("levels", [1, 2, 3, 4])
def test_constant_is_fixed_point(levels):
    s = decompose_causal(np.full(64, 3.25), levels)
    assert all(np.all(d == 0.0) for d in s.details)
    assert np.all(s.approx == 3.25)


def test_unit_impulse_level_one():
    x = np.zeros(10)
    x[4] = 1.0
    s = decompose_causal(x, 1)
    d, a = s.details[0], s.approx
    assert d[4] == 0.5 and d[5] == -0.5 and a[4] == 0.5 and a[5] == 0.5
    assert np.count_nonzero(d) == 2 and np.count_nonzero(a) == 2


def test_second_level_uses_lag_two():
    x = np.zeros(12)
    x[4] = 1.0
    s = decompose_causal(x, 2)
    # a_1 = [.5 at 4, 5]; a_2(t) = (a_1(t) + a_1(t-2)) / 2
    assert s.approx[4:8].tolist() == [0.25, 0.25, 0.25, 0.25]
    assert s.details[1][4:8].tolist() == [0.25, 0.25, -0.25, -0.25]


def test_warmup_and_bands_shape():
    s = decompose_causal(np.arange(32.0), 3)
    assert s.warmup == warmup_length(3) == 7
    assert s.bands().shape == (4, 32)


def test_too_short_or_bad_levels():
    with pytest.raises(InvalidArgumentError):
        decompose_causal(np.zeros(7), 3)
    with pytest.raises(InvalidArgumentError):
        decompose_causal(np.zeros(8), 0)
    with pytest.raises(InvalidArgumentError):
        decompose_causal(np.zeros((2, 8)), 1)


def test_reconstruction_random_series_fast():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        x = rng.normal(size=1024) * 10
        s = decompose_causal(x, 1 + i % 4)
        worst = max(worst, float(np.max(np.abs(x - reconstruct(s)))))
    assert worst < 1e-9
    assert time.perf_counter() - t0 < 1.0


def test_reconstruct_constant_stack():
    s = decompose_causal(np.full(16, -2.0), 2)
    assert np.all(reconstruct(s) == -2.0)


def test_zeroing_details_returns_approximation():
    rng = np.random.default_rng(4)
    s = decompose_causal(rng.normal(size=200), 3)
    bare = ScaleStack(s.levels, tuple(np.zeros_like(d) for d in s.details), s.approx, s.warmup, s.source_len)
    assert np.array_equal(reconstruct(bare), s.approx)
    # the approximation is smoother than the input
    assert np.std(np.diff(s.approx)) < np.std(np.diff(reconstruct(s)))


def test_corrupt_stack_rejected():
    s = decompose_causal(np.arange(16.0), 2)
    with pytest.raises(CorruptStackError):
        reconstruct(ScaleStack(2, s.details[:1], s.approx, s.warmup, s.source_len))
    with pytest.raises(CorruptStackError):
        reconstruct(ScaleStack(2, (s.details[0][:-1], s.details[1]), s.approx, s.warmup, s.source_len))
    with pytest.raises(CorruptStackError):
        reconstruct(ScaleStack(2, s.details, s.approx[:-1], s.warmup, s.source_len))


def test_batch_matches_single():
    rng = np.random.default_rng(5)
    blocks = rng.normal(size=(3, 4, 20))
    out = decompose_batch(blocks, 2)
    assert out.shape == (3, 4, 3, 20)
    for i in range(3):
        for j in range(4):
            assert np.array_equal(out[i, j], decompose_causal(blocks[i, j], 2).bands())


@settings(max_examples=50, deadline=None)
@given(x=series_st(), levels=levels_st, data=st.data())
def test_causality_suffix_mutation(x, levels, data):
    if x.size < (1 << levels):
        return
    cut = data.draw(st.integers(1, x.size - 1))
    y = x.copy()
    y[cut:] = data.draw(arrays(np.float64, x.size - cut, elements=finite))
    bx = decompose_causal(x, levels).bands()
    by = decompose_causal(y, levels).bands()
    assert np.array_equal(bx[:, :cut], by[:, :cut])


@settings(max_examples=50, deadline=None)
@given(x=series_st(), levels=levels_st)
def test_reconstruction_property(x, levels):
    s = decompose_causal(x, levels)
    assert np.max(np.abs(reconstruct(s) - x)) <= 1e-9 * max(1.0, np.max(np.abs(x)))


@settings(max_examples=50, deadline=None)
@given(x=series_st(32, 32), y=series_st(32, 32), a=finite, b=finite, levels=levels_st)
def test_linearity(x, y, a, b, levels):
    lhs = decompose_causal(a * x + b * y, levels).bands()
    rhs = a * decompose_causal(x, levels).bands() + b * decompose_causal(y, levels).bands()
    scale = 1.0 + abs(a) * np.max(np.abs(x)) + abs(b) * np.max(np.abs(y))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale * 8


@settings(max_examples=50, deadline=None)
@given(x=series_st(), k=st.integers(1, 20), levels=levels_st)
def test_shift_covariance_with_replicated_prefix(x, k, levels):
    shifted = np.concatenate([np.full(k, x[0]), x])
    assert np.array_equal(decompose_causal(shifted, levels).bands()[:, k:], decompose_causal(x, levels).bands())
