"""Differentiable conjunction / disjunction activations.

A conjunction neuron computes ``prod_j (1 - w_j (1 - h_j))`` and a disjunction
neuron ``1 - prod_j (1 - h_j w_j)``.  Gradients use leave-one-out products
computed with a zero count, so a factor that is exactly 0 never gets divided.

The scalar functions (``conj_forward`` ...) take one neuron and validate their
inputs.  The ``*_layer_*`` functions are the batched kernels used in training
and skip the domain checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Kind(str, Enum):
    CONJUNCTION = "conjunction"
    DISJUNCTION = "disjunction"


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass
class LayerWeights:
    kind: Kind
    W: np.ndarray  # (n_out, n_in)
    index: int

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise ShapeError(f"layer {self.index}: weight matrix must be 2-D, got {self.W.shape}")
        if self.index < 1:
            raise ValueError("layer index starts at 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass
class RbMask:
    M: np.ndarray  # bool, same shape as W
    rate: float
    threshold: float = 0.5


def _check_pair(h, w, *, domain=True):
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if h.shape != w.shape or h.ndim != 1:
        raise ShapeError(f"h and W_i must be vectors of equal length, got {h.shape} and {w.shape}")
    if domain:
        for name, v in (("h", h), ("W_i", w)):
            if np.any((v < 0) | (v > 1)) or not np.all(np.isfinite(v)):
                raise DomainError(f"{name} entries must lie in [0, 1]")
    return h, w


def prod_leave_one_out(F: np.ndarray):
    """Product over the last axis and, for every position, the product of the others.

    Zero factors are counted instead of divided by: with two or more zeros every
    leave-one-out product is 0; with exactly one, only the zero's own entry is
    nonzero (the product of the remaining factors).
    """
    F = np.asarray(F, dtype=np.float64)
    zero = F == 0.0
    n_zero = zero.sum(axis=-1, keepdims=True)
    safe = np.where(zero, 1.0, F)
    p_nonzero = safe.prod(axis=-1, keepdims=True)
    prod = np.where(n_zero == 0, p_nonzero, 0.0)
    loo = np.where(
        n_zero == 0,
        p_nonzero / safe,
        np.where((n_zero == 1) & zero, p_nonzero, 0.0),
    )
    return prod[..., 0], loo


def conj_forward(h, w) -> float:
    h, w = _check_pair(h, w)
    return float(np.prod(1.0 - w * (1.0 - h)))


def disj_forward(h, w) -> float:
    h, w = _check_pair(h, w)
    return float(1.0 - np.prod(1.0 - h * w))


def conj_backward(h, w, upstream: float):
    h, w = _check_pair(h, w, domain=False)
    _, loo = prod_leave_one_out(1.0 - w * (1.0 - h))
    return upstream * w * loo, upstream * (h - 1.0) * loo


def disj_backward(h, w, upstream: float):
    # d/dx of 1 - prod(1 - h w): the two minus signs cancel.
    h, w = _check_pair(h, w, domain=False)
    _, loo = prod_leave_one_out(1.0 - h * w)
    return upstream * w * loo, upstream * h * loo


# ---------------------------------------------------------------------------
# batched kernels: H is (batch, n_in), W is (n_out, n_in), output (batch, n_out)


def conj_layer_forward(H: np.ndarray, W: np.ndarray):
    if H.shape[1] != W.shape[1]:
        raise ShapeError(f"input width {H.shape[1]} does not match fan-in {W.shape[1]}")
    F = 1.0 - W[None, :, :] * (1.0 - H[:, None, :])
    out, loo = prod_leave_one_out(F)
    return out, ("conj", H, W, loo)


def disj_layer_forward(H: np.ndarray, W: np.ndarray):
    if H.shape[1] != W.shape[1]:
        raise ShapeError(f"input width {H.shape[1]} does not match fan-in {W.shape[1]}")
    F = 1.0 - H[:, None, :] * W[None, :, :]
    p, loo = prod_leave_one_out(F)
    return 1.0 - p, ("disj", H, W, loo)


def conj_layer_forward_binary(X: np.ndarray, W: np.ndarray):
    """Conjunction layer for inputs known to be in {0, 1}.

    With binary inputs each factor is either 1 (h=1) or 1-w (h=0), so the log
    product is a matrix product.  Weights equal to 1 are tracked as zero factors.
    """
    if X.shape[1] != W.shape[1]:
        raise ShapeError(f"input width {X.shape[1]} does not match fan-in {W.shape[1]}")
    off = 1.0 - X
    full = W >= 1.0
    log1m = np.log1p(-np.where(full, 0.0, W))
    log_p = off @ log1m.T
    n_zero = off @ full.T.astype(np.float64)
    p_nonzero = np.exp(log_p)
    out = np.where(n_zero == 0, p_nonzero, 0.0)
    return out, ("conj_bin", X, W, (p_nonzero, n_zero, full))


def layer_backward(cache, G: np.ndarray, need_input_grad: bool = True):
    """Gradients of ``sum(G * out)`` w.r.t. the layer input and weights."""
    tag, H, W = cache[0], cache[1], cache[2]
    if tag == "conj_bin":
        p_nonzero, n_zero, full = cache[3]
        off = 1.0 - H
        a = (G * np.where(n_zero == 0, p_nonzero, 0.0)).T @ off
        b = (G * np.where(n_zero == 1, p_nonzero, 0.0)).T @ off
        dW = -np.where(full, b, a / np.where(full, 1.0, 1.0 - W))
        return None, dW
    loo = cache[3]
    if tag == "conj":
        # d out / d w_ij = (h_j - 1) loo ; d out / d h_j = w_ij loo
        GL = G[:, :, None] * loo
        dW = np.einsum("bij,bj->ij", GL, H - 1.0)
        dH = np.einsum("bij,ij->bj", GL, W) if need_input_grad else None
    else:
        GL = G[:, :, None] * loo
        dW = np.einsum("bij,bj->ij", GL, H)
        dH = np.einsum("bij,ij->bj", GL, W) if need_input_grad else None
    return dH, dW


def clip_weights(W):
    """Project weights back into [0, 1]; accepts an array or LayerWeights."""
    if isinstance(W, LayerWeights):
        return LayerWeights(W.kind, np.clip(W.W, 0.0, 1.0), W.index)
    return np.clip(np.asarray(W, dtype=np.float64), 0.0, 1.0)


def sample_rb_mask(shape, rate: float, rng, threshold: float = 0.5) -> RbMask:
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"binarization rate must lie in [0, 1], got {rate}")
    rng = np.random.default_rng(rng)
    return RbMask(rng.random(shape) < rate, rate, threshold)


def apply_rb(W: np.ndarray, mask: RbMask | None, threshold: float | None = None):
    """Replace masked entries by ``1[w > T]``.

    Returns the effective weights and the float pass-through factor (0 where an
    entry was frozen, 1 elsewhere) to multiply into the weight gradient.
    """
    if mask is None:
        return W, None
    M = np.asarray(mask.M, dtype=bool)
    if M.shape != W.shape:
        raise ShapeError(f"mask shape {M.shape} does not match weights {W.shape}")
    T = mask.threshold if threshold is None else threshold
    eff = np.where(M, (W > T).astype(np.float64), W)
    return eff, (~M).astype(np.float64)
