"""Concept rule sets: the discrete rule graph extracted from a trained MLLP.

Layer ``l`` (1-based) holds a boolean matrix of shape ``(n_l, n_{l-1})``.  Odd
layers are rules (AND over their children), even layers are rule sets (OR).
An empty rule is TRUE and an empty rule set is FALSE.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import l0gates
from .logiclayers import ShapeError


@dataclass
class CrsModel:
    layers: list[np.ndarray]
    feature_names: list[str] | None = None
    class_names: list[str] | None = None
    node_ids: list[np.ndarray] | None = None  # original index of each node, per layer

    def __post_init__(self):
        self.layers = [np.asarray(W, dtype=bool) for W in self.layers]
        if not self.layers or len(self.layers) % 2:
            raise ValueError("a CRS needs an even number of layers (rule / rule-set pairs)")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.shape[1] != a.shape[0]:
                raise ShapeError(f"layer widths do not chain: {a.shape} then {b.shape}")
        if self.node_ids is None:
            self.node_ids = [np.arange(W.shape[0]) for W in self.layers]
        if self.feature_names is None:
            self.feature_names = [f"x{j}" for j in range(self.input_width)]
        if self.class_names is None:
            self.class_names = [f"class_{c}" for c in range(self.class_count)]

    @property
    def input_width(self) -> int:
        return self.layers[0].shape[1]

    @property
    def class_count(self) -> int:
        return self.layers[-1].shape[0]

    @property
    def level_count(self) -> int:
        return len(self.layers) // 2

    def children(self, layer: int, node: int) -> list[int]:
        """Children of ``node`` in 1-based ``layer``."""
        return np.flatnonzero(self.layers[layer - 1][node]).tolist()

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "class_names": list(self.class_names),
            "layers": [
                {
                    "kind": "rule" if l % 2 == 0 else "ruleset",
                    "n_in": int(W.shape[1]),
                    "ids": [int(i) for i in ids],
                    "rows": [np.flatnonzero(row).tolist() for row in W],
                }
                for l, (W, ids) in enumerate(zip(self.layers, self.node_ids))
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CrsModel":
        layers = []
        for spec in d["layers"]:
            W = np.zeros((len(spec["rows"]), spec["n_in"]), dtype=bool)
            for i, row in enumerate(spec["rows"]):
                W[i, row] = True
            layers.append(W)
        ids = [np.array(spec["ids"], dtype=int) for spec in d["layers"]]
        return cls(layers, d.get("feature_names"), d.get("class_names"), ids)


@dataclass
class ComplexityReport:
    total_literals: int
    per_layer: list[list[int]]
    rule_count: int
    pruned: bool = False
    per_layer_totals: list[int] = field(default_factory=list)


def extract_crs(model, T: float = 0.5, T_prime: float = 0.5, feature_names=None,
                class_names=None) -> CrsModel:
    """Edge kept iff ``w > T`` and, when the layer is gated, its input gate ``z_hat > T'``."""
    layers = []
    for layer, gate in zip(model.layers, model.gates):
        B = layer.W > T
        if gate is not None:
            B &= (l0gates.deterministic_gates(gate) > T_prime)[None, :]
        layers.append(B)
    return CrsModel(layers, feature_names, class_names)


def crs_forward(crs: CrsModel, X) -> np.ndarray:
    """Boolean output of every class node, shape (n, |C|) (or (|C|,) for one input)."""
    X = np.asarray(X)
    single = X.ndim == 1
    H = np.atleast_2d(X).astype(bool)
    if H.shape[1] != crs.input_width:
        raise ShapeError(f"expected inputs of width {crs.input_width}, got {H.shape[1]}")
    for l, W in enumerate(crs.layers):
        Wi = W.T.astype(np.int64)
        if l % 2 == 0:
            # rule fires iff none of its children is false
            H = ((~H).astype(np.int64) @ Wi) == 0
        else:
            H = (H.astype(np.int64) @ Wi) > 0
    return H[0] if single else H


def crs_predict(crs: CrsModel, X) -> np.ndarray:
    return crs_forward(crs, X).astype(np.int8)


def crs_classify(crs: CrsModel, X) -> np.ndarray:
    """Class index per row: first class whose rule set fires, class 0 if none do."""
    out = np.atleast_2d(crs_forward(crs, X))
    return np.argmax(out, axis=1)


def complexity(crs: CrsModel, pruned: bool = False) -> ComplexityReport:
    per_layer = [W.sum(axis=1).astype(int).tolist() for W in crs.layers]
    totals = [int(sum(p)) for p in per_layer]
    rules = sum(W.shape[0] for W in crs.layers[0::2])
    return ComplexityReport(int(sum(totals)), per_layer, rules, pruned, totals)


# ---------------------------------------------------------------------------
# pruning


def _simplify_constants(nodes):
    """Fold constant nodes into their parents; returns True if anything changed."""
    changed = False
    below: dict[int, bool] = {}  # constant value of nodes in the layer below
    last = len(nodes) - 1
    for l, layer in enumerate(nodes):
        is_rule = l % 2 == 0
        absorbing, identity = (False, True) if is_rule else (True, False)
        here: dict[int, bool] = {}
        for i, kids in enumerate(layer):
            hits = sorted(c for c in kids if below.get(c) is absorbing)
            if hits:
                here[i] = absorbing
                if not is_rule and l == last:
                    # an output fixed to TRUE keeps one TRUE rule as witness
                    new = frozenset(hits[:1])
                else:
                    new = kids
            else:
                new = frozenset(c for c in kids if below.get(c) is not identity)
                if not new:
                    here[i] = identity
            if new != kids:
                layer[i] = new
                changed = True
        # parents drop or absorb these constants; the nodes are then dead
        below = here
    return changed


def _drop_dead(nodes, ids):
    changed = False
    for l in range(len(nodes) - 2, -1, -1):
        used = set().union(*nodes[l + 1]) if nodes[l + 1] else set()
        keep = [i for i in range(len(nodes[l])) if i in used]
        if len(keep) != len(nodes[l]):
            changed = True
            _reindex(nodes, ids, l, keep, {i: k for k, i in enumerate(keep)})
    return changed


def _merge_duplicates(nodes, ids):
    changed = False
    for l in range(len(nodes) - 1):
        first: dict[frozenset, int] = {}
        target = {}
        for i, kids in enumerate(nodes[l]):
            target[i] = first.setdefault(kids, i)
        if len(first) == len(nodes[l]):
            continue
        changed = True
        keep = sorted(first.values())
        pos = {i: k for k, i in enumerate(keep)}
        _reindex(nodes, ids, l, keep, {i: pos[target[i]] for i in target})
    return changed


def _reindex(nodes, ids, l, keep, mapping):
    nodes[l] = [nodes[l][i] for i in keep]
    ids[l] = [ids[l][i] for i in keep]
    nodes[l + 1] = [frozenset(mapping[c] for c in kids if c in mapping) for kids in nodes[l + 1]]


def prune(crs: CrsModel) -> CrsModel:
    """Semantics-preserving simplification repeated to a fixpoint.

    Folds constant nodes (an empty rule is TRUE, an empty rule set FALSE, and
    constants propagate through their parents), removes nodes that no output
    depends on, and merges nodes of a layer that have identical children.
    """
    nodes = [[frozenset(np.flatnonzero(row).tolist()) for row in W] for W in crs.layers]
    ids = [list(map(int, i)) for i in crs.node_ids]
    while True:
        changed = _simplify_constants(nodes)
        changed |= _drop_dead(nodes, ids)
        changed |= _merge_duplicates(nodes, ids)
        if not changed:
            break
    widths = [crs.input_width] + [len(layer) for layer in nodes]
    layers = []
    for l, layer in enumerate(nodes):
        W = np.zeros((widths[l + 1], widths[l]), dtype=bool)
        for i, kids in enumerate(layer):
            W[i, sorted(kids)] = True
        layers.append(W)
    return CrsModel(layers, list(crs.feature_names), list(crs.class_names),
                    [np.array(i, dtype=int) for i in ids])


# ---------------------------------------------------------------------------
# text export


def _render_conj(literals: list[str]) -> str:
    if not literals:
        return "TRUE"
    return "(" + " ∧ ".join(literals) + ")"


def _render_disj(terms: list[str]) -> str:
    if not terms:
        return "FALSE"
    return " ∨ ".join(terms)


def _ordered(terms: list[tuple[int, str]]) -> list[str]:
    # longest first, then lexicographic
    return [t for _, t in sorted(terms, key=lambda p: (-p[0], p[1]))]


def export_rules(crs: CrsModel, feature_names=None, class_names=None) -> str:
    features = list(feature_names or crs.feature_names)
    classes = list(class_names or crs.class_names)
    lines: list[str] = []

    def literal(j: int) -> str:
        return features[j]

    if crs.level_count == 1:
        rules, outputs = crs.layers
        for c in range(crs.class_count):
            terms = []
            for r in np.flatnonzero(outputs[c]):
                kids = np.flatnonzero(rules[r]).tolist()
                terms.append((len(kids), _render_conj([literal(j) for j in kids])))
            lines.append(f"{classes[c]} ← {_render_disj(_ordered(terms))}")
        return "\n".join(lines) + "\n"

    def name(l: int, i: int) -> str:
        prefix = "r" if l % 2 == 1 else "s"
        return f"{prefix}{l}_{int(crs.node_ids[l - 1][i])}"

    for l in range(1, len(crs.layers)):
        W = crs.layers[l - 1]
        for i in range(W.shape[0]):
            kids = np.flatnonzero(W[i]).tolist()
            refs = [literal(j) if l == 1 else name(l - 1, j) for j in kids]
            if l % 2 == 1:
                body = _render_conj(refs)
            else:
                body = _render_disj(_ordered([(1, r) for r in refs]))
            lines.append(f"{name(l, i)} := {body}")
    last = len(crs.layers)
    for c in range(crs.class_count):
        kids = np.flatnonzero(crs.layers[-1][c]).tolist()
        lines.append(f"{classes[c]} ← {_render_disj(_ordered([(1, name(last - 1, j)) for j in kids]))}")
    return "\n".join(lines) + "\n"
