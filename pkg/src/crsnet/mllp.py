"""Multi-layer logical perceptron: assembly, loss, gradients and training."""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import l0gates
from .l0gates import GateParams
from .logiclayers import (
    Kind,
    LayerWeights,
    RbMask,
    ShapeError,
    apply_rb,
    conj_layer_forward,
    conj_layer_forward_binary,
    disj_layer_forward,
    layer_backward,
    sample_rb_mask,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class GateConfig:
    input_drop_rate: float = 0.5
    hidden_drop_rate: float = 0.2
    gate_output_layer: bool = True
    beta: float = l0gates.BETA
    gamma: float = l0gates.GAMMA
    zeta: float = l0gates.ZETA


@dataclass
class MllpModel:
    layers: list[LayerWeights]
    gates: list[GateParams | None]
    input_width: int
    class_count: int

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a model needs at least one conjunction and one disjunction layer")
        if len(self.gates) != len(self.layers):
            raise ConfigError("one gate entry (or None) per layer")
        fan_in = self.input_width
        for i, layer in enumerate(self.layers):
            expected = Kind.CONJUNCTION if i % 2 == 0 else Kind.DISJUNCTION
            if layer.kind != expected:
                raise ConfigError(f"layer {i + 1} must be a {expected.value} layer")
            if layer.W.shape[1] != fan_in:
                raise ShapeError(f"layer {i + 1} expects fan-in {fan_in}, got {layer.W.shape}")
            gate = self.gates[i]
            if gate is not None and gate.size != fan_in:
                raise ShapeError(f"layer {i + 1} gates cover {gate.size} inputs, expected {fan_in}")
            fan_in = layer.W.shape[0]
        if self.layers[-1].kind != Kind.DISJUNCTION or fan_in != self.class_count:
            raise ConfigError("the last layer must be a disjunction layer with one node per class")

    @property
    def level_count(self) -> int:
        return len(self.layers) // 2

    @property
    def use_l0(self) -> bool:
        return any(g is not None for g in self.gates)

    @property
    def weights(self) -> list[np.ndarray]:
        return [layer.W for layer in self.layers]

    def to_dict(self) -> dict:
        return {
            "input_width": self.input_width,
            "class_count": self.class_count,
            "layers": [{"kind": l.kind.value, "W": l.W.tolist()} for l in self.layers],
            "gates": [
                None if g is None else {
                    "log_alpha": g.log_alpha.tolist(),
                    "group_size": int(g.group_sizes[0]),
                    "beta": g.beta, "gamma": g.gamma, "zeta": g.zeta,
                }
                for g in self.gates
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MllpModel":
        layers = [LayerWeights(l["kind"], np.array(l["W"], dtype=np.float64).reshape(len(l["W"]), -1), i + 1)
                  for i, l in enumerate(d["layers"])]
        gates = [
            None if g is None else GateParams(g["log_alpha"], g["group_size"], g["beta"], g["gamma"], g["zeta"])
            for g in d["gates"]
        ]
        return cls(layers, gates, d["input_width"], d["class_count"])


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 128
    learning_rate: float = 5e-3
    lr_decay_factor: float = 0.75
    lr_decay_every_epochs: int = 100
    weight_decay: float = 1e-8
    l0_lambda: float = 1e-3
    rb_rate: float = 0.0
    rb_threshold: float = 0.5
    rb_refresh_every_epochs: int = 1
    seed: int = 0
    # divide by the training-set size: "l0" the L0 term only, "both" also the L2 term
    penalty_normalization: str = "l0"
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.rb_rate <= 1.0:
            raise ConfigError("rb_rate must lie in [0, 1]")
        if self.rb_refresh_every_epochs < 1 or self.lr_decay_every_epochs < 1:
            raise ConfigError("schedules must be >= 1 epoch")
        if self.penalty_normalization not in ("l0", "both", "none"):
            raise ConfigError(f"unknown penalty normalization {self.penalty_normalization!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        self.adam_betas = tuple(self.adam_betas)


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    mse: float
    active_weight_count: int
    active_weight_fraction: float
    learning_rate: float


def parse_architecture(arch: str | list[int]) -> list[int]:
    """``"64"`` -> [64]; ``"256x3"`` -> [256, 256, 256]; ``"64,32,64"`` -> [64, 32, 64]."""
    if not isinstance(arch, str):
        return [int(w) for w in arch]
    widths: list[int] = []
    for part in arch.replace(" ", "").replace("×", "x").split(","):
        if not part:
            continue
        if "x" in part:
            width, times = part.split("x")
            widths += [int(width)] * int(times)
        else:
            widths.append(int(part))
    if any(w < 1 for w in widths):
        raise ConfigError(f"bad architecture {arch!r}")
    return widths


def build_model(input_width: int, hidden_widths, class_count: int, use_l0: bool = False,
                gate_config: GateConfig | None = None, seed=0) -> MllpModel:
    hidden = parse_architecture(hidden_widths)
    if not hidden:
        raise ConfigError("at least one hidden (conjunction) layer is required")
    if len(hidden) % 2 == 0:
        raise ConfigError(
            f"{len(hidden)} hidden layers: the count must be odd so the output layer is a disjunction"
        )
    gate_config = gate_config or GateConfig()
    rng = np.random.default_rng(seed)
    widths = [input_width] + hidden + [class_count]
    layers, gates = [], []
    for i in range(len(widths) - 1):
        n_in, n_out = widths[i], widths[i + 1]
        kind = Kind.CONJUNCTION if i % 2 == 0 else Kind.DISJUNCTION
        layers.append(LayerWeights(kind, rng.uniform(0.0, 0.1, (n_out, n_in)), i + 1))
        is_output = i == len(widths) - 2
        if use_l0 and (gate_config.gate_output_layer or not is_output):
            drop = gate_config.input_drop_rate if i == 0 else gate_config.hidden_drop_rate
            gates.append(l0gates.init_gates(n_in, n_out, drop, rng, beta=gate_config.beta,
                                            gamma=gate_config.gamma, zeta=gate_config.zeta))
        else:
            gates.append(None)
    return MllpModel(layers, gates, input_width, class_count)


# ---------------------------------------------------------------------------
# forward / backward


def _forward(model: MllpModel, X, gate_values, masks, binary_input: bool):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_width:
        raise ShapeError(f"expected inputs of width {model.input_width}, got {X.shape}")
    h = X
    caches = []
    for i, layer in enumerate(model.layers):
        z = gate_values[i]
        w_gated = layer.W if z is None else layer.W * z[None, :]
        mask = masks[i] if masks is not None else None
        w_eff, pass_through = apply_rb(w_gated, mask)
        if i == 0 and binary_input:
            h_next, cache = conj_layer_forward_binary(h, w_eff)
        elif layer.kind == Kind.CONJUNCTION:
            h_next, cache = conj_layer_forward(h, w_eff)
        else:
            h_next, cache = disj_layer_forward(h, w_eff)
        caches.append((cache, pass_through, z))
        h = h_next
    return h, caches


def _is_binary(X) -> bool:
    X = np.asarray(X)
    return bool(np.all((X == 0) | (X == 1)))


def forward_train(model: MllpModel, X, rb_masks=None, gate_samples=None):
    z = [None if s is None else s.z for s in (gate_samples or [None] * len(model.layers))]
    out, _ = _forward(model, X, z, rb_masks, _is_binary(X))
    return out


def eval_gate_values(model: MllpModel):
    return [None if g is None else l0gates.deterministic_gates(g) for g in model.gates]


def forward_eval(model: MllpModel, X):
    out, _ = _forward(model, X, eval_gate_values(model), None, _is_binary(X))
    return out


def predict_classes(model: MllpModel, X) -> np.ndarray:
    return np.argmax(forward_eval(model, X), axis=1)


def compute_loss(predictions, labels, model: MllpModel, l0_lambda: float, weight_decay: float,
                 l0_scale: float = 1.0, l2_scale: float = 1.0):
    """Total loss and its parts ``{"mse", "l2", "l0"}``.

    MSE is averaged over the batch and the output components.  Layers with gates
    use the gate-weighted L2 term; layers without use the plain squared norm.
    The penalties are multiplied by ``l0_scale`` and ``l2_scale`` respectively.
    """
    P = np.asarray(predictions, dtype=np.float64)
    Y = np.asarray(labels, dtype=np.float64)
    if P.shape != Y.shape:
        raise ShapeError(f"predictions {P.shape} vs labels {Y.shape}")
    mse = float(np.mean((P - Y) ** 2))
    l2 = 0.0
    l0 = 0.0
    for layer, gate in zip(model.layers, model.gates):
        if gate is None:
            l2 += float(np.sum(layer.W ** 2))
        else:
            l2 += l0gates.gated_l2_penalty(gate, layer.W)
            l0 += l0gates.l0_penalty(gate)
    parts = {"mse": mse, "l2": l2_scale * weight_decay * l2, "l0": l0_scale * l0_lambda * l0}
    return parts["mse"] + parts["l2"] + parts["l0"], parts


def loss_and_grads(model: MllpModel, X, Y, gate_samples=None, rb_masks=None,
                   l0_lambda: float = 1e-3, weight_decay: float = 1e-8, l0_scale: float = 1.0,
                   l2_scale: float = 1.0, binary_input=None):
    """Loss, its parts, and exact gradients w.r.t. every weight and gate location.

    ``gate_samples`` holds one GateSample (or None) per layer; with the samples'
    ``u`` held fixed the result is a deterministic function of the parameters.
    Frozen (masked) entries get no gradient from the data term but still carry the
    gradient of the L2 term.
    """
    n_layers = len(model.layers)
    gate_samples = gate_samples or [None] * n_layers
    for i, (g, s) in enumerate(zip(model.gates, gate_samples)):
        if (g is None) != (s is None):
            raise ValueError(f"layer {i + 1}: gate sample given without gates or vice versa")
    if binary_input is None:
        binary_input = _is_binary(X)
    z = [None if s is None else s.z for s in gate_samples]
    out, caches = _forward(model, X, z, rb_masks, binary_input)
    Y = np.asarray(Y, dtype=np.float64)
    total, parts = compute_loss(out, Y, model, l0_lambda, weight_decay, l0_scale, l2_scale)

    grad_W: list[np.ndarray] = [None] * n_layers
    grad_la: list[np.ndarray | None] = [None] * n_layers
    G = 2.0 * (out - Y) / out.size
    for i in reversed(range(n_layers)):
        cache, pass_through, zi = caches[i]
        G_in, dW_eff = layer_backward(cache, G, need_input_grad=i > 0)
        if pass_through is not None:
            dW_eff = dW_eff * pass_through
        W = model.layers[i].W
        if zi is None:
            grad_W[i] = dW_eff
        else:
            grad_W[i] = dW_eff * zi[None, :]
            dz = np.sum(dW_eff * W, axis=0)
            grad_la[i] = l0gates.gate_backward(model.gates[i], gate_samples[i], dz)
        G = G_in

    l0_lambda = l0_scale * l0_lambda
    weight_decay = l2_scale * weight_decay
    for i, (layer, gate) in enumerate(zip(model.layers, model.gates)):
        if gate is None:
            grad_W[i] = grad_W[i] + 2.0 * weight_decay * layer.W
        else:
            dW_l2, dla_l2 = l0gates.gated_l2_grads(gate, layer.W)
            grad_W[i] = grad_W[i] + weight_decay * dW_l2
            grad_la[i] = grad_la[i] + weight_decay * dla_l2 + l0_lambda * l0gates.l0_penalty_grad(gate)
    return total, parts, grad_W, grad_la


def count_active_weights(model: MllpModel) -> tuple[int, float]:
    active = 0
    total = 0
    for layer, z in zip(model.layers, eval_gate_values(model)):
        live = layer.W > 0
        if z is not None:
            live &= (z > 0)[None, :]
        active += int(live.sum())
        total += live.size
    return active, (active / total if total else 0.0)


# ---------------------------------------------------------------------------
# optimisation


class _Adam:
    def __init__(self, params, betas, eps):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr, frozen=None):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, (p, g) in enumerate(zip(params, grads)):
            m = self.b1 * self.m[k] + (1.0 - self.b1) * g
            v = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            fr = None if frozen is None else frozen[k]
            if fr is None:
                self.m[k], self.v[k] = m, v
                p -= update
            else:
                self.m[k] = np.where(fr, self.m[k], m)
                self.v[k] = np.where(fr, self.v[k], v)
                p -= np.where(fr, 0.0, update)


class _Sgd:
    def __init__(self, params, *_):
        pass

    def step(self, params, grads, lr, frozen=None):
        for k, (p, g) in enumerate(zip(params, grads)):
            fr = None if frozen is None else frozen[k]
            p -= lr * (g if fr is None else np.where(fr, 0.0, g))


def _learning_rate(config: TrainConfig, epoch: int) -> float:
    return config.learning_rate * config.lr_decay_factor ** (epoch // config.lr_decay_every_epochs)


def train(model: MllpModel, data, config: TrainConfig, callback=None):
    """Train a copy of ``model`` on ``data`` (anything with binary ``X`` and one-hot ``Y``).

    Returns the trained copy and one EpochMetrics per epoch.
    """
    model = copy.deepcopy(model)
    X = np.asarray(data.X, dtype=np.float64)
    Y = np.asarray(data.Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ShapeError("X and Y row counts differ")
    if Y.shape[1] != model.class_count:
        raise ShapeError(f"labels have {Y.shape[1]} classes, model has {model.class_count}")
    binary = _is_binary(X)
    if not binary:
        log.warning("training inputs are not binary; using the general conjunction kernel")

    shuffle_ss, rb_ss, gate_ss = np.random.SeedSequence(config.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    rb_rng = np.random.default_rng(rb_ss)
    gate_rng = np.random.default_rng(gate_ss)

    param_slots = [(i, "W") for i in range(len(model.layers))]
    param_slots += [(i, "la") for i, g in enumerate(model.gates) if g is not None]

    def params():
        return [model.layers[i].W if kind == "W" else model.gates[i].log_alpha for i, kind in param_slots]

    opt_cls = _Adam if config.optimizer == "adam" else _Sgd
    opt = opt_cls(params(), config.adam_betas, config.adam_eps)
    n = X.shape[0]
    inv_n = 1.0 / n if n else 1.0
    l0_scale = inv_n if config.penalty_normalization in ("l0", "both") else 1.0
    l2_scale = inv_n if config.penalty_normalization == "both" else 1.0
    masks = None
    history: list[EpochMetrics] = []

    for epoch in range(config.epochs):
        lr = _learning_rate(config, epoch)
        if config.rb_rate > 0 and epoch % config.rb_refresh_every_epochs == 0:
            masks = [sample_rb_mask(l.W.shape, config.rb_rate, rb_rng, config.rb_threshold)
                     for l in model.layers]
        frozen = None
        if masks is not None:
            frozen = [masks[i].M if kind == "W" else None for i, kind in param_slots]

        order = shuffle_rng.permutation(n)
        loss_sum = mse_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            samples = [None if g is None else l0gates.sample_gates(g, gate_rng) for g in model.gates]
            loss, parts, gW, gla = loss_and_grads(
                model, X[idx], Y[idx], samples, masks,
                l0_lambda=config.l0_lambda, weight_decay=config.weight_decay,
                l0_scale=l0_scale, l2_scale=l2_scale, binary_input=binary,
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}, batch starting {start}")
            grads = [gW[i] if kind == "W" else gla[i] for i, kind in param_slots]
            opt.step(params(), grads, lr, frozen)
            for layer in model.layers:
                np.clip(layer.W, 0.0, 1.0, out=layer.W)
            loss_sum += loss * len(idx)
            mse_sum += parts["mse"] * len(idx)

        count, frac = count_active_weights(model)
        m = EpochMetrics(epoch, loss_sum / n, mse_sum / n, count, frac, lr)
        history.append(m)
        if callback is not None:
            callback(model, m)
    return model, history


def metrics_to_dicts(history: list[EpochMetrics]) -> list[dict]:
    return [asdict(m) for m in history]
