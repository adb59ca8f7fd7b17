"""Hard-concrete gates for group (input-neuron) sparsity.

One gate per input neuron of a layer.  Gate ``g`` multiplies column ``g`` of
the layer's weight matrix, so its group size is the layer's fan-out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

BETA = 2.0 / 3.0
GAMMA = -0.1
ZETA = 1.1


@dataclass
class GateParams:
    log_alpha: np.ndarray
    group_sizes: np.ndarray
    beta: float = BETA
    gamma: float = GAMMA
    zeta: float = ZETA

    def __post_init__(self):
        self.log_alpha = np.asarray(self.log_alpha, dtype=np.float64)
        self.group_sizes = np.broadcast_to(
            np.asarray(self.group_sizes, dtype=np.float64), self.log_alpha.shape
        ).copy()
        if not self.gamma < 0.0 < 1.0 < self.zeta:
            raise ValueError(f"need gamma < 0 < 1 < zeta, got gamma={self.gamma}, zeta={self.zeta}")
        if self.beta <= 0:
            raise ValueError("temperature beta must be positive")
        if np.any(self.group_sizes < 1):
            raise ValueError("group sizes must be >= 1")

    @property
    def size(self) -> int:
        return self.log_alpha.shape[0]

    def with_log_alpha(self, log_alpha) -> "GateParams":
        return GateParams(log_alpha, self.group_sizes, self.beta, self.gamma, self.zeta)


@dataclass
class GateSample:
    z: np.ndarray
    u: np.ndarray
    s: np.ndarray  # pre-stretch sigmoid, kept for the backward pass


def init_gates(n_groups: int, group_size: int, drop_rate: float, rng, noise: float = 0.01,
               **constants) -> GateParams:
    """Locations start at ``log(1-p) - log(p)`` plus small Gaussian noise."""
    if not 0.0 < drop_rate < 1.0:
        raise ValueError("initial drop rate must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    mean = np.log(1.0 - drop_rate) - np.log(drop_rate)
    return GateParams(rng.normal(mean, noise, n_groups), group_size, **constants)


def stretch(params: GateParams, s) -> np.ndarray:
    return np.clip(s * (params.zeta - params.gamma) + params.gamma, 0.0, 1.0)


def gates_from_uniform(params: GateParams, u) -> GateSample:
    u = np.asarray(u, dtype=np.float64)
    s = expit((np.log(u) - np.log1p(-u) + params.log_alpha) / params.beta)
    return GateSample(stretch(params, s), u, s)


def sample_gates(params: GateParams, rng) -> GateSample:
    rng = np.random.default_rng(rng)
    tiny = np.finfo(np.float64).tiny
    # open interval: keep log(u) and log(1-u) finite
    u = np.clip(rng.random(params.size), tiny, 1.0 - np.finfo(np.float64).eps)
    return gates_from_uniform(params, u)


def gate_backward(params: GateParams, sample: GateSample, upstream) -> np.ndarray:
    s = sample.s
    s_bar = s * (params.zeta - params.gamma) + params.gamma
    inside = ((s_bar > 0.0) & (s_bar < 1.0)).astype(np.float64)
    return np.asarray(upstream) * inside * (params.zeta - params.gamma) * s * (1.0 - s) / params.beta


def deterministic_gates(params: GateParams) -> np.ndarray:
    return stretch(params, expit(params.log_alpha))


def active_probability(params: GateParams) -> np.ndarray:
    """P(z > 0) per gate, i.e. 1 - Q(s <= 0)."""
    return expit(params.log_alpha - params.beta * np.log(-params.gamma / params.zeta))


def _active_probability_grad(params: GateParams) -> np.ndarray:
    p = active_probability(params)
    return p * (1.0 - p)


def l0_penalty(params: GateParams) -> float:
    return float(np.sum(params.group_sizes * active_probability(params)))


def l0_penalty_grad(params: GateParams) -> np.ndarray:
    return params.group_sizes * _active_probability_grad(params)


def _group_sq_norms(params: GateParams, W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != params.size:
        raise ValueError(f"weights {W.shape} are not grouped by {params.size} input gates")
    if np.any(W.shape[0] != params.group_sizes):
        raise ValueError("column length does not match the declared group sizes")
    return np.sum(W * W, axis=0)


def gated_l2_penalty(params: GateParams, W: np.ndarray) -> float:
    """Sum over gates of P(active) times the squared norm of that gate's column."""
    return float(np.sum(active_probability(params) * _group_sq_norms(params, W)))


def gated_l2_grads(params: GateParams, W: np.ndarray):
    """Gradients of ``gated_l2_penalty`` w.r.t. (W, log_alpha)."""
    sq = _group_sq_norms(params, W)
    p = active_probability(params)
    return 2.0 * W * p[None, :], _active_probability_grad(params) * sq
