"""The six architectures: MLP_1/2, Gate_1/2 and Concat_1/2.

MLPs see the full ``[cues | stimulus]`` vector. Attention nets route the 4n
cue block through Dense1, whose sigmoid output splits into A (width 2n) and
B. A conditions the stimulus stream at the first attention stage and B at
the second::

    gate:   Gate1 = A * stim -> Dense3 -> Dense2 -> Gate2 = B * Dense2 -> out
    concat: [A | stim] -> Dense3 -> Dense2 -> [B | Dense2] -> out

Dense3 is the layer added from Multi-3 on. The Multi-2 builds go straight
from the first attention stage to Dense2, and the three-layer Multi-2 builds
put Dense3 after the second stage instead. Variant 1 squeezes Dense2,
the layer feeding the second stage, to two units. Default widths reproduce the hidden
layer counts and hidden unit totals of the published capacity table; see
``CAPACITY`` and ``default_widths``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .nn_core import Network, Node

KINDS = ("mlp", "gate", "concat")
MODEL_NAMES = ("MLP_1", "MLP_2", "Gate_1", "Gate_2", "Concat_1", "Concat_2")
REPRESENTATIVE = ("MLP_2", "Gate_2", "Concat_2")

# (kind, variant, n) -> (total hidden units, hidden layers)
CAPACITY = {
    ("mlp", 1, 2): (14, 2), ("mlp", 2, 2): (18, 3),
    ("gate", 1, 2): (10, 2), ("gate", 2, 2): (12, 3),
    ("concat", 1, 2): (10, 2), ("concat", 2, 2): (12, 3),
    ("mlp", 1, 3): (36, 3), ("mlp", 2, 3): (42, 4),
    ("gate", 1, 3): (12, 3), ("gate", 2, 3): (18, 3),
    ("concat", 1, 3): (12, 3), ("concat", 2, 3): (18, 3),
    ("mlp", 1, 4): (48, 3), ("mlp", 2, 4): (56, 4),
    ("gate", 1, 4): (26, 3), ("gate", 2, 4): (36, 3),
    ("concat", 1, 4): (26, 3), ("concat", 2, 4): (36, 3),
}

# A 2-layer bottleneck attention net is Dense1 (2n + 2) + Dense2 (2) units,
# which cannot reach the tabulated 10 for n = 2.
UNIT_TOTAL_EXCEPTIONS = frozenset({("gate", 1, 2), ("concat", 1, 2)})

# Dense2 width (= |B|) of the non-bottleneck attention nets
_DENSE2_WIDE = {2: 3, 3: 3, 4: 8}


class SpecError(ValueError):
    pass


def _even_split(total: int, layers: int) -> tuple[int, ...]:
    base, extra = divmod(total, layers)
    return tuple(base + 1 if i < extra else base for i in range(layers))


def default_widths(kind: str, variant: int, n: int) -> tuple[int, ...]:
    """Hidden dense widths in network order.

    For attention nets this is ``(Dense1, Dense2[, Dense3])`` with
    Dense1 = 2n + Dense2.
    """
    if (kind, variant, n) in CAPACITY:
        units, layers = CAPACITY[kind, variant, n]
    else:
        # beyond the tabulated environments, scale like Multi-4
        units, layers = CAPACITY[kind, variant, 4]
    if kind == "mlp":
        return _even_split(units, layers)
    d2 = 2 if variant == 1 else _DENSE2_WIDE.get(n, 2 * n)
    d1 = 2 * n + d2
    if layers == 2:
        return (d1, d2)
    return (d1, d2, max(units - d1 - d2, 1))


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    variant: int
    n: int
    layer_widths: tuple[int, ...] = ()
    activation: str = "sigmoid"
    override: bool = False
    bottleneck: bool = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown model kind {self.kind!r}")
        if self.variant not in (1, 2):
            raise SpecError(f"variant must be 1 or 2, got {self.variant}")
        if self.n < 1:
            raise SpecError("n must be >= 1")
        widths = tuple(self.layer_widths) or default_widths(self.kind, self.variant, self.n)
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in widths))
        object.__setattr__(self, "bottleneck", self.kind != "mlp" and self.variant == 1)
        self.validate()

    @property
    def name(self) -> str:
        return {"mlp": "MLP", "gate": "Gate", "concat": "Concat"}[self.kind] + f"_{self.variant}"

    @property
    def hidden_units(self) -> int:
        return sum(self.layer_widths)

    @property
    def hidden_layers(self) -> int:
        return len(self.layer_widths)

    @property
    def intermediate_layer(self) -> bool:
        """Whether Dense3 sits between the attention stages (Multi-3 and up)."""
        return self.kind != "mlp" and self.n >= 3 and self.hidden_layers == 3

    @property
    def a_width(self) -> int:
        return 2 * self.n

    @property
    def b_width(self) -> int:
        return self.layer_widths[0] - self.a_width

    def validate(self) -> None:
        w = self.layer_widths
        if any(x < 1 for x in w):
            raise SpecError(f"{self.name}: widths must be >= 1, got {w}")
        if self.kind != "mlp":
            if len(w) not in (2, 3):
                raise SpecError(f"{self.name}: attention nets have 2 or 3 hidden layers, got {len(w)}")
            if self.b_width != w[1]:
                raise SpecError(f"{self.name}: Dense1 must split into A={self.a_width} and B=Dense2={w[1]}")
            if self.bottleneck and w[1] != 2:
                raise SpecError(f"{self.name}: bottleneck Dense2 must have 2 units, got {w[1]}")
            if not self.bottleneck and w[1] == 2:
                raise SpecError(f"{self.name}: variant 2 must not bottleneck Dense2")
        key = (self.kind, self.variant, self.n)
        if self.override or key not in CAPACITY:
            return
        units, layers = CAPACITY[key]
        if self.hidden_layers != layers:
            raise SpecError(f"{self.name} Multi-{self.n}: {self.hidden_layers} hidden layers, capacity table says {layers}")
        if key not in UNIT_TOTAL_EXCEPTIONS and self.hidden_units != units:
            raise SpecError(f"{self.name} Multi-{self.n}: {self.hidden_units} hidden units, capacity table says {units}")


def parse_model(name: str, n: int, **kw) -> ModelSpec:
    m = re.fullmatch(r"(?i)(mlp|gate|concat)_?([12])", name.strip())
    if not m:
        raise SpecError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    return ModelSpec(m.group(1).lower(), int(m.group(2)), n, **kw)


def build_mlp(spec: ModelSpec, rng: np.random.Generator | None = None) -> Network:
    if spec.kind != "mlp":
        raise SpecError("build_mlp needs an mlp spec")
    n = spec.n
    nodes = [Node("input", "input", size=6 * n)]
    prev = "input"
    taps = []
    for i, w in enumerate(spec.layer_widths, start=1):
        name = f"Dense{i}"
        nodes.append(Node(name, "dense", (prev,), w, spec.activation))
        taps.append(name)
        prev = name
    nodes.append(Node("Output", "dense", (prev,), 2 * n))
    return Network(nodes, 6 * n, taps, rng, name=spec.name)


def _attention(spec: ModelSpec, mix: str, rng) -> Network:
    n = spec.n
    w = spec.layer_widths
    a, b = spec.a_width, spec.b_width
    if mix == "gate":
        first, second = ("Gate1", "gate"), ("Gate2", "gate")
    else:
        first, second = ("Concat1", "concat"), ("Concat2", "concat")
    nodes = [
        Node("cue", "input", size=4 * n, start=0),
        Node("stimulus", "input", size=2 * n, start=4 * n),
        Node("Dense1", "dense", ("cue",), w[0], spec.activation),
        Node("Dense1A", "slice", ("Dense1",), a, start=0),
        Node("Dense1B", "slice", ("Dense1",), b, start=a),
        Node(first[0], first[1], ("Dense1A", "stimulus")),
    ]
    taps = ["Dense1A", "Dense1B", "Dense2"]
    extra = len(w) == 3
    prev = first[0]
    if spec.intermediate_layer:
        # Dense2 (width |B|, the bottleneck in variant 1) still feeds the second stage
        nodes.append(Node("Dense3", "dense", (prev,), w[2], spec.activation))
        prev = "Dense3"
    nodes += [Node("Dense2", "dense", (prev,), w[1], spec.activation),
              Node(second[0], second[1], ("Dense1B", "Dense2"))]
    prev = second[0]
    if extra and not spec.intermediate_layer:
        nodes.append(Node("Dense3", "dense", (prev,), w[2], spec.activation))
        prev = "Dense3"
    if extra:
        taps.append("Dense3")
    nodes.append(Node("Output", "dense", (prev,), 2 * n))
    return Network(nodes, 6 * n, taps, rng, name=spec.name)


def build_gate(spec: ModelSpec, rng: np.random.Generator | None = None) -> Network:
    if spec.kind != "gate":
        raise SpecError("build_gate needs a gate spec")
    return _attention(spec, "gate", rng)


def build_concat(spec: ModelSpec, rng: np.random.Generator | None = None) -> Network:
    if spec.kind != "concat":
        raise SpecError("build_concat needs a concat spec")
    return _attention(spec, "concat", rng)


def build(spec: ModelSpec, rng: np.random.Generator | None = None) -> Network:
    return {"mlp": build_mlp, "gate": build_gate, "concat": build_concat}[spec.kind](spec, rng)


def named_taps(net: Network) -> list[str]:
    return list(net.taps)


def describe(spec: ModelSpec) -> str:
    net = build(spec)
    lines = [f"{spec.name}  (Multi-{spec.n}, kind={spec.kind}, variant={spec.variant}, "
             f"bottleneck={spec.bottleneck})"]
    for node, size in zip(net.nodes, net.sizes):
        src = ", ".join(node.inputs) or f"x[{node.start}:{node.start + node.size}]"
        extra = ""
        if node.op == "dense":
            layer = net.layers[node.name]
            extra = f"  {node.activation}, params={layer.weights.size + layer.biases.size}"
        lines.append(f"  {node.name:<9} {node.op:<7} width={size:<3} <- {src}{extra}")
    units, layers = spec.hidden_units, spec.hidden_layers
    lines.append(f"  hidden layers={layers}  hidden units={units}  parameters={net.n_params}")
    key = (spec.kind, spec.variant, spec.n)
    if key in CAPACITY:
        lines.append(f"  capacity table: units={CAPACITY[key][0]} layers={CAPACITY[key][1]}")
    return "\n".join(lines)
