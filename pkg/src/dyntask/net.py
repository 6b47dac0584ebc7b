"""Shared-trunk network with task branches and exact manual backprop.

The trunk is shared between tasks; each branch ends in a small embedding
layer (whose activations feed the verification metric and the center loss)
followed by a logit layer. A branch may be omitted (``None``) to build the
degenerate single-task network. Branch gradients are scaled by their task
weights before they merge into the trunk, so a zero task weight annihilates a
branch exactly.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .numerics import Rng, as_f64

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "identity"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise InvalidArgumentError(
                f"layer dims must be >= 1, got {self.in_dim}x{self.out_dim}"
            )
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")


def _check_chain(name: str, layers: tuple[LayerSpec, ...], in_dim: int) -> int:
    d = in_dim
    for i, spec in enumerate(layers):
        if spec.in_dim != d:
            raise ShapeError(
                f"{name} layer {i} expects input dim {spec.in_dim}, chain provides {d}"
            )
        d = spec.out_dim
    return d


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    trunk: tuple[LayerSpec, ...]
    branch1: tuple[LayerSpec, ...] | None
    branch2: tuple[LayerSpec, ...] | None

    def __post_init__(self):
        object.__setattr__(self, "trunk", tuple(self.trunk))
        if self.branch1 is not None:
            object.__setattr__(self, "branch1", tuple(self.branch1))
        if self.branch2 is not None:
            object.__setattr__(self, "branch2", tuple(self.branch2))
        if not self.trunk:
            raise InvalidArgumentError("trunk must have at least one layer")
        if self.branch1 is None and self.branch2 is None:
            raise InvalidArgumentError("network needs at least one branch")
        d_z = _check_chain("trunk", self.trunk, self.input_dim)
        for name, branch in (("branch1", self.branch1), ("branch2", self.branch2)):
            if branch is not None:
                if not branch:
                    raise InvalidArgumentError(f"{name} must have at least one layer")
                _check_chain(name, branch, d_z)

    @property
    def d_z(self) -> int:
        return self.trunk[-1].out_dim

    @property
    def k1(self) -> int:
        return self.branch1[-1].out_dim if self.branch1 else 0

    @property
    def k2(self) -> int:
        return self.branch2[-1].out_dim if self.branch2 else 0

    @property
    def embed_dim1(self) -> int:
        """Width of the branch-1 embedding (input of its final layer)."""
        if not self.branch1:
            return 0
        return self.branch1[-1].in_dim


def desk_spec(
    input_dim: int = 16,
    n_identities: int = 20,
    n_expressions: int = 6,
    trunk_dims: tuple[int, ...] = (32, 16),
    bottleneck_dim: int = 8,
    include_branch1: bool = True,
    include_branch2: bool = True,
) -> NetworkSpec:
    """Default desk-scale topology: ReLU trunk, linear bottleneck + logit branches."""
    trunk = []
    d = input_dim
    for out in trunk_dims:
        trunk.append(LayerSpec(d, out, "relu"))
        d = out
    branch1 = None
    if include_branch1:
        branch1 = (LayerSpec(d, bottleneck_dim), LayerSpec(bottleneck_dim, n_identities))
    branch2 = None
    if include_branch2:
        branch2 = (LayerSpec(d, bottleneck_dim), LayerSpec(bottleneck_dim, n_expressions))
    return NetworkSpec(input_dim, tuple(trunk), branch1, branch2)


@dataclass
class Layer:
    w: np.ndarray  # (in_dim, out_dim)
    b: np.ndarray  # (out_dim,)

    def copy(self) -> "Layer":
        return Layer(self.w.copy(), self.b.copy())


@dataclass
class NetworkParams:
    spec: NetworkSpec
    shared: list[Layer]
    branch1: list[Layer] | None
    branch2: list[Layer] | None

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.spec,
            [l.copy() for l in self.shared],
            [l.copy() for l in self.branch1] if self.branch1 is not None else None,
            [l.copy() for l in self.branch2] if self.branch2 is not None else None,
        )


def _xavier_layer(rng: Rng, spec: LayerSpec) -> Layer:
    limit = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
    w = rng.uniform(-limit, limit, size=(spec.in_dim, spec.out_dim))
    return Layer(w, np.zeros(spec.out_dim))


def init_params(spec: NetworkSpec, rng: Rng) -> NetworkParams:
    """Xavier-uniform weights with zero biases.

    Each section draws from its own child stream, so a single-branch network
    initialised with the same seed gets bitwise-identical trunk and branch
    parameters to the full network.
    """

    def section(name, layer_specs):
        if layer_specs is None:
            return None
        r = rng.split(name)
        return [_xavier_layer(r, ls) for ls in layer_specs]

    return NetworkParams(
        spec,
        section("init/shared", spec.trunk),
        section("init/branch1", spec.branch1),
        section("init/branch2", spec.branch2),
    )


@dataclass
class SectionTrace:
    inputs: list[np.ndarray]  # what each layer consumed
    pres: list[np.ndarray]  # pre-activations
    out: np.ndarray


@dataclass
class ForwardTrace:
    batch: np.ndarray
    trunk: SectionTrace
    z: np.ndarray
    branch1: SectionTrace | None
    x1: np.ndarray | None
    logits1: np.ndarray | None
    branch2: SectionTrace | None
    x2: np.ndarray | None
    logits2: np.ndarray | None
    dropout_masks: list | None = None


def _activate(kind: str, pre: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(pre, 0.0)
    return pre


def _run_section(layers, layer_specs, h, masks=None) -> SectionTrace:
    inputs, pres = [], []
    for i, (layer, spec) in enumerate(zip(layers, layer_specs)):
        inputs.append(h)
        pre = h @ layer.w + layer.b
        pres.append(pre)
        h = _activate(spec.activation, pre)
        if masks is not None and masks[i] is not None:
            h = h * masks[i]
    return SectionTrace(inputs, pres, h)


def forward(
    params: NetworkParams,
    batch,
    dropout: float = 0.0,
    rng: Rng | None = None,
) -> ForwardTrace:
    """Run the trunk and both branches; returns every intermediate needed by backward.

    Dropout (inverted scaling) is applied to trunk activations except the final
    trunk output, only when ``dropout > 0`` and an rng is supplied; evaluation
    paths leave it off.
    """
    x = as_f64(batch)
    spec = params.spec
    if x.ndim != 2:
        raise ShapeError(f"batch must be 2-D, got shape {x.shape}")
    if x.shape[1] != spec.input_dim:
        raise ShapeError(f"batch has {x.shape[1]} columns, network expects {spec.input_dim}")

    masks = None
    if dropout > 0.0:
        if rng is None:
            raise InvalidArgumentError("dropout requires an rng")
        if not 0.0 < dropout < 1.0:
            raise InvalidArgumentError(f"dropout must be in (0, 1), got {dropout}")
        masks = []
        for i, ls in enumerate(spec.trunk):
            if i == len(spec.trunk) - 1:
                masks.append(None)  # keep the shared feature itself intact
            else:
                keep = rng.uniform(size=(x.shape[0], ls.out_dim)) >= dropout
                masks.append(keep.astype(np.float64) / (1.0 - dropout))

    trunk = _run_section(params.shared, spec.trunk, x, masks)
    z = trunk.out

    def branch(layers, layer_specs):
        if layers is None:
            return None, None, None
        st = _run_section(layers, layer_specs, z)
        return st, st.inputs[-1], st.out

    b1, x1, logits1 = branch(params.branch1, spec.branch1)
    b2, x2, logits2 = branch(params.branch2, spec.branch2)
    return ForwardTrace(x, trunk, z, b1, x1, logits1, b2, x2, logits2, masks)


@dataclass
class NetworkGrads:
    shared: list[Layer]
    branch1: list[Layer] | None
    branch2: list[Layer] | None


def _section_backward(layers, layer_specs, st: SectionTrace, upstream, inject=None, masks=None):
    """Backprop one section; returns per-layer grads and the grad w.r.t. the section input.

    ``inject`` is an extra gradient on the input of the final layer (the
    embedding), used to route the center-loss term into branch 1.
    """
    grads: list[Layer | None] = [None] * len(layers)
    g = upstream
    for i in reversed(range(len(layers))):
        if masks is not None and masks[i] is not None:
            g = g * masks[i]
        if layer_specs[i].activation == "relu":
            g = g * (st.pres[i] > 0.0)
        grads[i] = Layer(st.inputs[i].T @ g, g.sum(axis=0))
        g = g @ layers[i].w.T
        if inject is not None and i == len(layers) - 1:
            g = g + inject
    return grads, g


def backward(
    params: NetworkParams,
    trace: ForwardTrace,
    grad_logits1: np.ndarray | None,
    grad_logits2: np.ndarray | None,
    grad_x1: np.ndarray | None,
    w,
) -> NetworkGrads:
    """Gradients of the weighted total loss for every parameter.

    Upstream gradients are per-task loss gradients; each branch's contribution
    is scaled by its task weight w[i] on entry, so branch parameters receive
    w[i] * dL_i/dtheta and the trunk receives the weighted sum. ``grad_x1``
    (the center-loss term) is injected at the branch-1 embedding.
    """
    w = as_f64(w)
    if w.shape != (2,):
        raise ShapeError(f"expected 2 task weights, got shape {w.shape}")
    spec = params.spec
    gz = np.zeros_like(trace.z)

    b1_grads = None
    if params.branch1 is not None:
        if grad_logits1 is None:
            raise InvalidArgumentError("branch1 present but grad_logits1 is None")
        if grad_logits1.shape != trace.logits1.shape:
            raise ShapeError(
                f"grad_logits1 shape {grad_logits1.shape} != logits1 {trace.logits1.shape}"
            )
        inject = None
        if grad_x1 is not None:
            if grad_x1.shape != trace.x1.shape:
                raise ShapeError(f"grad_x1 shape {grad_x1.shape} != x1 {trace.x1.shape}")
            inject = w[0] * grad_x1
        b1_grads, g = _section_backward(
            params.branch1, spec.branch1, trace.branch1, w[0] * grad_logits1, inject
        )
        gz = gz + g

    b2_grads = None
    if params.branch2 is not None:
        if grad_logits2 is None:
            raise InvalidArgumentError("branch2 present but grad_logits2 is None")
        if grad_logits2.shape != trace.logits2.shape:
            raise ShapeError(
                f"grad_logits2 shape {grad_logits2.shape} != logits2 {trace.logits2.shape}"
            )
        b2_grads, g = _section_backward(
            params.branch2, spec.branch2, trace.branch2, w[1] * grad_logits2
        )
        gz = gz + g

    sh_grads, _ = _section_backward(
        params.shared, spec.trunk, trace.trunk, gz, masks=trace.dropout_masks
    )
    return NetworkGrads(sh_grads, b1_grads, b2_grads)


def _iter_named_layers(obj):
    for name, section in (("shared", obj.shared), ("branch1", obj.branch1), ("branch2", obj.branch2)):
        if section is None:
            continue
        for i, layer in enumerate(section):
            yield f"{name}.{i}", layer


def params_to_vector(params: NetworkParams) -> np.ndarray:
    parts = []
    for _, layer in _iter_named_layers(params):
        parts.append(layer.w.ravel())
        parts.append(layer.b.ravel())
    return np.concatenate(parts)


def grads_to_vector(grads: NetworkGrads) -> np.ndarray:
    parts = []
    for _, layer in _iter_named_layers(grads):
        parts.append(layer.w.ravel())
        parts.append(layer.b.ravel())
    return np.concatenate(parts)


def vector_to_params(vec: np.ndarray, like: NetworkParams) -> NetworkParams:
    out = like.copy()
    needed = sum(l.w.size + l.b.size for _, l in _iter_named_layers(like))
    if vec.size != needed:
        raise ShapeError(f"vector has {vec.size} entries, network needs {needed}")
    pos = 0
    for _, layer in _iter_named_layers(out):
        for arr in (layer.w, layer.b):
            n = arr.size
            arr[...] = vec[pos : pos + n].reshape(arr.shape)
            pos += n
    return out


def _spec_to_doc(spec: NetworkSpec) -> dict:
    def enc(layers):
        if layers is None:
            return None
        return [[ls.in_dim, ls.out_dim, ls.activation] for ls in layers]

    return {
        "input_dim": spec.input_dim,
        "trunk": enc(spec.trunk),
        "branch1": enc(spec.branch1),
        "branch2": enc(spec.branch2),
    }


def _spec_from_doc(doc: dict) -> NetworkSpec:
    def dec(rows):
        if rows is None:
            return None
        return tuple(LayerSpec(int(r[0]), int(r[1]), str(r[2])) for r in rows)

    return NetworkSpec(int(doc["input_dim"]), dec(doc["trunk"]), dec(doc["branch1"]), dec(doc["branch2"]))


def save_checkpoint(params: NetworkParams, path) -> None:
    """Write a self-describing JSON checkpoint: a flat list of named tensors.

    Floats are serialised with shortest-repr precision, so values round-trip
    exactly.
    """
    tensors = []
    for name, layer in _iter_named_layers(params):
        for suffix, arr in (("w", layer.w), ("b", layer.b)):
            tensors.append(
                {"name": f"{name}.{suffix}", "shape": list(arr.shape), "data": arr.ravel().tolist()}
            )
    doc = {"format": "dyntask-checkpoint", "version": 1, "spec": _spec_to_doc(params.spec), "tensors": tensors}
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path) -> NetworkParams:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "dyntask-checkpoint":
        raise InvalidArgumentError(f"{path} is not a dyntask checkpoint")
    spec = _spec_from_doc(doc["spec"])
    by_name = {t["name"]: t for t in doc["tensors"]}

    def section(name, layer_specs):
        if layer_specs is None:
            return None
        layers = []
        for i, ls in enumerate(layer_specs):
            wt = by_name[f"{name}.{i}.w"]
            bt = by_name[f"{name}.{i}.b"]
            w = np.array(wt["data"], dtype=np.float64).reshape(wt["shape"])
            b = np.array(bt["data"], dtype=np.float64).reshape(bt["shape"])
            if w.shape != (ls.in_dim, ls.out_dim) or b.shape != (ls.out_dim,):
                raise ShapeError(f"checkpoint tensor {name}.{i} has unexpected shape")
            layers.append(Layer(w, b))
        return layers

    return NetworkParams(
        spec,
        section("shared", spec.trunk),
        section("branch1", spec.branch1),
        section("branch2", spec.branch2),
    )
