import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crsnet.logiclayers import (DomainError, RbMask, ShapeError, apply_rb, clip_weights, conj_backward,
                                conj_forward, conj_layer_forward, conj_layer_forward_binary, disj_backward,
                                disj_forward, disj_layer_forward, layer_backward, prod_leave_one_out,
                                sample_rb_mask)


def fd_scalar(f, x, eps=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


def close_rel(a, b, rtol=1e-4, atol=1e-10):
    return np.allclose(a, b, rtol=rtol, atol=atol)


@pytest.mark.parametrize("h,w,out", [([1, 1], [1, 1], 1.0), ([0.3, 0.9], [0, 0], 1.0), ([0.5], [1], 0.5)])
def test_conj_forward_examples(h, w, out):
    assert conj_forward(h, w) == pytest.approx(out)


@pytest.mark.parametrize("h,w,out", [([0.3, 0.9], [0, 0], 0.0), ([1], [1], 1.0), ([0.5, 0.5], [1, 1], 0.75)])
def test_disj_forward_examples(h, w, out):
    assert disj_forward(h, w) == pytest.approx(out)


def test_forward_errors():
    with pytest.raises(ShapeError):
        conj_forward([1, 0], [1])
    with pytest.raises(DomainError):
        conj_forward([1.2], [0.5])
    with pytest.raises(DomainError):
        disj_forward([0.5], [-0.1])


def test_backward_examples():
    assert np.allclose(conj_backward([1, 1], [1, 1], 1.0)[1], [0, 0])
    assert np.allclose(conj_backward([0.5], [1], 1.0)[1], [-0.5])
    assert np.allclose(disj_backward([0, 0], [1, 1], 1.0)[1], [0, 0])
    assert np.allclose(disj_backward([1], [0.5], 1.0)[1], [1.0])
    with pytest.raises(ShapeError):
        disj_backward([1, 0], [1], 1.0)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("fwd,bwd", [(conj_forward, conj_backward), (disj_forward, disj_backward)])
def test_scalar_backward_finite_difference(seed, fwd, bwd):
    rng = np.random.default_rng(seed)
    h, w = rng.uniform(0.05, 0.95, 6), rng.uniform(0.05, 0.95, 6)
    up = rng.normal()
    gh, gw = bwd(h, w, up)
    assert close_rel(gw, up * fd_scalar(lambda v: fwd(h, v), w))
    assert close_rel(gh, up * fd_scalar(lambda v: fwd(v, w), h))


@given(arrays(np.float64, st.integers(1, 6), elements=st.one_of(st.just(0.0), st.floats(1e-6, 1.0))))
def test_leave_one_out_matches_brute_force(F):
    prod, loo = prod_leave_one_out(F)
    assert prod == pytest.approx(np.prod(F), abs=1e-15)
    brute = [np.prod(np.delete(F, i)) for i in range(len(F))]
    assert np.allclose(loo, brute, atol=1e-15)


@pytest.mark.parametrize("n", range(1, 5))
def test_binary_semantics_exhaustive(n):
    """With 0/1 inputs and weights the activations are exactly AND / OR of the selected inputs."""
    for h in itertools.product([0, 1], repeat=n):
        for w in itertools.product([0, 1], repeat=n):
            sel = [hi for hi, wi in zip(h, w) if wi]
            assert conj_forward(h, w) == float(all(sel))
            assert disj_forward(h, w) == float(any(sel))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_layer_kernels_match_scalar(seed):
    rng = np.random.default_rng(seed)
    b, n_in, n_out = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 5)
    H = rng.random((b, n_in))
    W = rng.random((n_out, n_in))
    W[rng.random(W.shape) < 0.2] = 1.0
    c, _ = conj_layer_forward(H, W)
    d, _ = disj_layer_forward(H, W)
    for i in range(b):
        for j in range(n_out):
            assert c[i, j] == pytest.approx(conj_forward(H[i], W[j]), abs=1e-14)
            assert d[i, j] == pytest.approx(disj_forward(H[i], W[j]), abs=1e-14)
    X = (rng.random((b, n_in)) < 0.5).astype(float)
    fast, _ = conj_layer_forward_binary(X, W)
    assert np.allclose(fast, conj_layer_forward(X, W)[0], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_layer_backward_finite_difference(seed):
    rng = np.random.default_rng(seed)
    H = rng.uniform(0.05, 0.95, (3, 5))
    W = rng.uniform(0.05, 0.95, (4, 5))
    G = rng.normal(size=(3, 4))
    for fwd in (conj_layer_forward, disj_layer_forward):
        _, cache = fwd(H, W)
        dH, dW = layer_backward(cache, G)
        loss_w = lambda v: np.sum(G * fwd(H, v.reshape(W.shape))[0])
        loss_h = lambda v: np.sum(G * fwd(v.reshape(H.shape), W)[0])
        assert close_rel(dW.ravel(), fd_scalar(loss_w, W.ravel()))
        assert close_rel(dH.ravel(), fd_scalar(loss_h, H.ravel()))


def test_binary_kernel_backward_with_saturated_weights():
    rng = np.random.default_rng(3)
    X = (rng.random((6, 5)) < 0.5).astype(float)
    W = rng.uniform(0.05, 0.95, (3, 5))
    W[0, 1] = 1.0
    W[2, [0, 3]] = 1.0
    G = rng.normal(size=(6, 3))
    _, cache = conj_layer_forward_binary(X, W)
    _, dW = layer_backward(cache, G, need_input_grad=False)
    _, ref = layer_backward(conj_layer_forward(X, W)[1], G)
    assert np.allclose(dW, ref, atol=1e-12)


@pytest.mark.parametrize("w,out", [(1.5, 1.0), (-0.2, 0.0), (0.37, 0.37)])
def test_clip_examples(w, out):
    assert clip_weights(np.array([w]))[0] == out


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-5, 5)))
def test_clip_idempotent(W):
    once = clip_weights(W)
    assert np.array_equal(clip_weights(once), once)
    assert once.min() >= 0 and once.max() <= 1


def test_rb_mask_rates():
    assert not sample_rb_mask((20, 20), 0.0, 0).M.any()
    assert sample_rb_mask((20, 20), 1.0, 0).M.all()
    assert abs(sample_rb_mask((100, 100), 0.5, 1).M.mean() - 0.5) < 0.02
    with pytest.raises(ValueError):
        sample_rb_mask((2, 2), 1.5, 0)


def test_apply_rb_examples():
    W = np.array([[0.7, 0.7, 0.5]])
    mask = RbMask(np.array([[True, False, True]]), 0.5, 0.5)
    eff, through = apply_rb(W, mask)
    assert eff.tolist() == [[1.0, 0.7, 0.0]]
    assert through.tolist() == [[0.0, 1.0, 0.0]]
    with pytest.raises(ShapeError):
        apply_rb(W, RbMask(np.ones((2, 2), bool), 1.0))
