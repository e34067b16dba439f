"""Small layered networks with hand-written reverse-mode gradients.

A network is an ordered list of nodes (inputs, dense layers, slices,
multiplicative gates and concatenations) ending in a linear dense layer
whose softmax gives response probabilities. All parameters live in one
flat float64 buffer; each dense layer's weights (out x in) and biases are
views into it, so the optimiser works on a single array.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit


class DimensionError(ValueError):
    pass


class WiringError(ValueError):
    pass


sigmoid = expit


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def xavier_init(in_size: int, out_size: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weight matrix of shape (out_size, in_size)."""
    if in_size < 1 or out_size < 1:
        raise ValueError("layer sizes must be >= 1")
    limit = np.sqrt(6.0 / (in_size + out_size))
    return rng.uniform(-limit, limit, size=(out_size, in_size))


@dataclass(frozen=True)
class Node:
    """One step of the computation graph.

    ``op`` is one of ``input`` (columns ``start:start+size`` of the raw
    input), ``dense``, ``slice`` (columns of another node), ``gate``
    (elementwise product of two nodes) or ``concat``.
    """

    name: str
    op: str
    inputs: tuple[str, ...] = ()
    size: int = 0
    activation: str = "identity"
    start: int = 0


@dataclass
class DenseLayer:
    name: str
    weights: np.ndarray
    biases: np.ndarray
    activation: str

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]


_ACTIVATIONS = ("sigmoid", "relu", "identity")


class Network:
    """Feed-forward graph over named nodes.

    ``taps`` names the hidden activations reported by :meth:`forward` with
    ``return_taps=True``. The last node must be a linear dense layer; its
    softmax is the network output.
    """

    def __init__(self, nodes: Sequence[Node], input_size: int, taps: Sequence[str] = (),
                 rng: np.random.Generator | None = None, name: str = "net"):
        self.name = name
        self.nodes = tuple(nodes)
        self.input_size = input_size
        self.taps = tuple(taps)
        self._index = {}
        sizes = []
        for i, node in enumerate(self.nodes):
            if node.name in self._index:
                raise WiringError(f"duplicate node name {node.name}")
            src = [self._index.get(s) for s in node.inputs]
            if any(j is None for j in src):
                raise WiringError(f"{node.name}: unknown input among {node.inputs}")
            sizes.append(self._infer_size(node, [sizes[j] for j in src]))
            self._index[node.name] = i
        self.sizes = tuple(sizes)
        last = self.nodes[-1]
        if last.op != "dense" or last.activation != "identity":
            raise WiringError("the final node must be a linear dense layer")
        for t in self.taps:
            if t not in self._index:
                raise WiringError(f"unknown tap {t}")

        # parameter layout
        offset = 0
        layout = {}
        for i, node in enumerate(self.nodes):
            if node.op == "dense":
                fan_in = sizes[self._index[node.inputs[0]]]
                layout[node.name] = (offset, node.size, fan_in)
                offset += node.size * fan_in + node.size
        self.n_params = offset
        self.params = np.zeros(offset)
        self.grad = np.zeros(offset)
        self.layers: dict[str, DenseLayer] = {}
        self._grad_views: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for name, (o, out_size, in_size) in layout.items():
            nw = out_size * in_size
            w = self.params[o:o + nw].reshape(out_size, in_size)
            b = self.params[o + nw:o + nw + out_size]
            self.layers[name] = DenseLayer(name, w, b, self.nodes[self._index[name]].activation)
            self._grad_views[name] = (self.grad[o:o + nw].reshape(out_size, in_size),
                                      self.grad[o + nw:o + nw + out_size])
        self._compile()
        if rng is not None:
            self.initialize(rng)

    def _infer_size(self, node: Node, in_sizes: list[int]) -> int:
        op = node.op
        if op == "input":
            if node.size < 1 or node.start + node.size > self.input_size:
                raise WiringError(f"{node.name}: input columns out of range")
            return node.size
        if op == "dense":
            if len(in_sizes) != 1 or node.size < 1:
                raise WiringError(f"{node.name}: dense needs one input and size >= 1")
            if node.activation not in _ACTIVATIONS:
                raise WiringError(f"{node.name}: unknown activation {node.activation}")
            return node.size
        if op == "slice":
            if len(in_sizes) != 1 or node.start + node.size > in_sizes[0] or node.size < 1:
                raise WiringError(f"{node.name}: slice out of range")
            return node.size
        if op == "gate":
            if len(in_sizes) != 2 or in_sizes[0] != in_sizes[1]:
                raise WiringError(f"{node.name}: gate streams must have equal width, got {in_sizes}")
            return in_sizes[0]
        if op == "concat":
            if len(in_sizes) != 2:
                raise WiringError(f"{node.name}: concat takes two streams")
            return in_sizes[0] + in_sizes[1]
        raise WiringError(f"{node.name}: unknown op {op}")

    def _compile(self):
        # integer-indexed program for the hot loop
        prog = []
        for node in self.nodes:
            src = tuple(self._index[s] for s in node.inputs)
            layer = self.layers.get(node.name)
            gviews = self._grad_views.get(node.name)
            prog.append((node.op, src, node.start, node.size, node.activation, layer, gviews))
        self._prog = prog
        # a node needs an input gradient unless everything upstream is raw input
        needs = []
        for op, src, *_ in prog:
            needs.append(op != "input" and (op == "dense" or any(needs[j] for j in src)))
        self._needs_grad = needs

    # -- parameters -------------------------------------------------------

    def initialize(self, rng: np.random.Generator) -> None:
        """Xavier-uniform weights, zero biases, in node order."""
        for node in self.nodes:
            if node.op == "dense":
                layer = self.layers[node.name]
                layer.weights[...] = xavier_init(layer.in_size, layer.out_size, rng)
                layer.biases[...] = 0.0

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise DimensionError(f"expected {self.params.shape} parameters, got {flat.shape}")
        self.params[...] = flat

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name, layer in self.layers.items():
            out.append((f"{name}/weights", layer.weights))
            out.append((f"{name}/biases", layer.biases))
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for name, (gw, gb) in self._grad_views.items():
            out[f"{name}/weights"] = gw.copy()
            out[f"{name}/biases"] = gb.copy()
        return out

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def tap_sizes(self) -> dict[str, int]:
        return {t: self.sizes[self._index[t]] for t in self.taps}

    # -- computation ------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise DimensionError(f"{self.name}: expected input width {self.input_size}, got shape {x.shape}")
        return x

    def _run(self, x: np.ndarray) -> list[np.ndarray]:
        acts: list[np.ndarray] = []
        for op, src, start, size, act, layer, _ in self._prog:
            if op == "dense":
                z = acts[src[0]] @ layer.weights.T + layer.biases
                if act == "sigmoid":
                    z = sigmoid(z)
                elif act == "relu":
                    z = np.maximum(z, 0.0)
                acts.append(z)
            elif op == "input":
                acts.append(x[:, start:start + size])
            elif op == "slice":
                acts.append(acts[src[0]][:, start:start + size])
            elif op == "gate":
                acts.append(acts[src[0]] * acts[src[1]])
            else:
                acts.append(np.concatenate((acts[src[0]], acts[src[1]]), axis=1))
        return acts

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self._run(self._check_input(x))[-1]

    def forward(self, x: np.ndarray, return_taps: bool = False):
        """Response probabilities for a batch (or a single input vector).

        With ``return_taps`` also returns ``{tap name: activations}``.
        """
        single = np.ndim(x) == 1
        acts = self._run(self._check_input(x))
        probs = softmax(acts[-1])
        if single:
            probs = probs[0]
        if not return_taps:
            return probs
        taps = {t: acts[self._index[t]] for t in self.taps}
        if single:
            taps = {k: v[0] for k, v in taps.items()}
        return probs, taps

    def backward(self, x: np.ndarray, targets: np.ndarray) -> tuple[float, int]:
        """Mean cross-entropy and its gradient, written into ``self.grad``.

        ``targets`` is either a one-hot batch or an integer label vector.
        Returns ``(loss, number of argmax-correct rows)``.
        """
        x = self._check_input(x)
        targets = np.asarray(targets)
        if targets.ndim == 2:
            if targets.shape != (x.shape[0], self.output_size):
                raise DimensionError(f"targets shape {targets.shape} does not match batch")
            labels = targets.argmax(axis=1)
        else:
            if targets.shape != (x.shape[0],):
                raise DimensionError(f"labels shape {targets.shape} does not match batch")
            labels = targets
        return self._backward(x, labels)

    def _backward(self, x: np.ndarray, labels: np.ndarray) -> tuple[float, int]:
        acts = self._run(x)
        logits = acts[-1]
        batch = x.shape[0]
        rows = np.arange(batch)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        s = e.sum(axis=1, keepdims=True)
        probs = e / s
        loss = float(np.mean(np.log(s[:, 0]) - shifted[rows, labels]))
        correct = int(np.count_nonzero(logits.argmax(axis=1) == labels))

        d: list = [None] * len(acts)
        dl = probs
        dl[rows, labels] -= 1.0
        dl /= batch
        d[-1] = dl
        needs = self._needs_grad
        prog = self._prog
        for i in range(len(prog) - 1, -1, -1):
            g = d[i]
            if g is None:
                continue
            op, src, start, size, act, layer, gviews = prog[i]
            if op == "dense":
                a = acts[i]
                if act == "sigmoid":
                    g = g * a * (1.0 - a)
                elif act == "relu":
                    g = g * (a > 0)
                gw, gb = gviews
                j = src[0]
                np.matmul(g.T, acts[j], out=gw)
                np.sum(g, axis=0, out=gb)
                if needs[j]:
                    _acc(d, j, g @ layer.weights)
            elif op == "slice":
                j = src[0]
                if needs[j]:
                    full = np.zeros_like(acts[j])
                    full[:, start:start + size] = g
                    _acc(d, j, full)
            elif op == "gate":
                j, k = src
                if needs[j]:
                    _acc(d, j, g * acts[k])
                if needs[k]:
                    _acc(d, k, g * acts[j])
            elif op == "concat":
                j, k = src
                w = acts[j].shape[1]
                if needs[j]:
                    _acc(d, j, g[:, :w])
                if needs[k]:
                    _acc(d, k, g[:, w:])
        return loss, correct

    def loss(self, x: np.ndarray, targets: np.ndarray) -> float:
        probs = self.forward(self._check_input(x))
        targets = np.asarray(targets)
        labels = targets.argmax(axis=1) if targets.ndim == 2 else targets
        return float(-np.mean(np.log(probs[np.arange(len(labels)), labels])))

    def predict(self, x: np.ndarray) -> np.ndarray:
        # argmax ties resolve to the lowest index
        return self.logits(x).argmax(axis=1)

    def copy(self) -> "Network":
        clone = Network(self.nodes, self.input_size, self.taps, name=self.name)
        clone.params[...] = self.params
        return clone

    # -- snapshots --------------------------------------------------------

    def snapshot(self) -> list[dict]:
        return [{"name": name, "shape": list(arr.shape), "values": arr.ravel().tolist()}
                for name, arr in self.named_parameters()]

    def load_snapshot(self, tensors: list[dict]) -> None:
        named = dict(self.named_parameters())
        if {t["name"] for t in tensors} != set(named):
            raise DimensionError("snapshot tensor names do not match the network")
        for t in tensors:
            arr = named[t["name"]]
            if list(arr.shape) != list(t["shape"]):
                raise DimensionError(f"{t['name']}: shape {t['shape']} != {list(arr.shape)}")
            arr[...] = np.asarray(t["values"], dtype=np.float64).reshape(arr.shape)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot()))

    def load(self, path: str | Path) -> None:
        self.load_snapshot(json.loads(Path(path).read_text()))


def _acc(d: list, j: int, g: np.ndarray) -> None:
    d[j] = g if d[j] is None else d[j] + g


@dataclass
class AdamState:
    shape: tuple[int, ...]
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.m = np.zeros(self.shape)
        self.v = np.zeros(self.shape)

    @classmethod
    def for_network(cls, net: Network, **hyper) -> "AdamState":
        return cls(net.params.shape, **hyper)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Bias-corrected Adam update of ``params`` in place; returns ``params``."""
    if params.shape != state.m.shape or grads.shape != state.m.shape:
        raise DimensionError("parameter/gradient shapes do not match the optimiser state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
