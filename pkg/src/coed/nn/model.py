"""CoED layers and model: self, in- and out-messages over learned edge directions."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..fuzzy_graph import DEFAULT_EPSILON, FuzzyDiGraph
from .autodiff import SparsePattern, Tape, Tensor

ACTIVATIONS = ("relu", "identity", "normalize")
NORMALIZATIONS = ("symmetric", "none")


class NonFiniteError(FloatingPointError):
    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


def theta_from_raw(raw):
    """Map unconstrained reals into (0, pi/2) with ``theta(0) = pi/4``."""
    return 0.25 * np.pi * (1.0 + np.tanh(raw))


def raw_from_theta(theta, clip: float = 1e-12):
    """Inverse of :func:`theta_from_raw`; boundary angles are clipped inward."""
    t = np.clip(np.asarray(theta, dtype=float) / (0.25 * np.pi) - 1.0, -1 + clip, 1 - clip)
    return np.arctanh(t)


@dataclass
class CoEDLayerParams:
    w_self: np.ndarray  # (D_in, D_out)
    w_in: np.ndarray
    w_out: np.ndarray
    bias: np.ndarray    # (1, D_out)

    def __post_init__(self):
        shapes = {self.w_self.shape, self.w_in.shape, self.w_out.shape}
        if len(shapes) != 1:
            raise ValueError(f"weight matrices disagree in shape: {shapes}")
        if self.bias.shape != (1, self.w_self.shape[1]):
            raise ValueError("bias must have shape (1, D_out)")

    @property
    def shape(self):
        return self.w_self.shape

    @classmethod
    def init(cls, d_in: int, d_out: int, rng: np.random.Generator, n_terms: float = 1.5):
        # Var(W) = 1 / (fan_in * sum of squared term scales) keeps pre-activation variance
        a = np.sqrt(3.0 / (d_in * n_terms))
        w = [rng.uniform(-a, a, size=(d_in, d_out)) for _ in range(3)]
        return cls(w[0], w[1], w[2], np.zeros((1, d_out)))


class CoEDModel:
    """Stack of CoED layers sharing one fixed graph topology.

    Args:
        graph: topology; its angles are used only to initialise phases when
            ``init_theta_from_graph`` is set.
        dims: feature sizes ``[D_in, H, ..., D_out]``; one layer per step.
        alpha: weight of in-messages, out-messages get ``1 - alpha``.
        use_self_feature: include the ``F W_self`` term.
        activation: ``"relu"``, ``"identity"`` or ``"normalize"`` (unit rows).
        final_activation: apply the activation after the last layer too.
        layerwise_theta: one phase set per layer instead of a shared one.
        normalization: ``"symmetric"`` for the degree-normalized propagation
            matrices, ``"none"`` for raw ``Re L_F`` / ``Im L_F`` aggregation.
    """

    def __init__(self, graph: FuzzyDiGraph, dims, *, alpha: float = 0.5,
                 use_self_feature: bool = True, activation: str = "relu",
                 final_activation: Optional[bool] = None, layerwise_theta: bool = False,
                 seed: int = 0, init_theta_from_graph: bool = False,
                 epsilon: float = DEFAULT_EPSILON, normalization: str = "symmetric"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if len(dims) < 2:
            raise ValueError("need at least one layer")
        if normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        self.normalization = normalization
        self.graph = graph
        self.alpha = float(alpha)
        self.use_self_feature = bool(use_self_feature)
        self.activation = activation
        if final_activation is None:
            final_activation = activation == "normalize"
        self.final_activation = bool(final_activation)
        self.layerwise_theta = bool(layerwise_theta)
        self.epsilon = float(epsilon)
        rng = np.random.default_rng(seed)
        n_terms = float(self.use_self_feature) + self.alpha**2 + (1 - self.alpha) ** 2
        self.layers: List[CoEDLayerParams] = [
            CoEDLayerParams.init(a, b, rng, n_terms) for a, b in zip(dims[:-1], dims[1:])
        ]
        n_sets = len(self.layers) if self.layerwise_theta else 1
        base = raw_from_theta(graph.theta) if init_theta_from_graph else np.zeros(graph.n_edges)
        self.raw_phases = np.tile(base, (n_sets, 1))
        # constant angles used instead of raw_phases when set (boundary values allowed)
        self.fixed_theta: Optional[np.ndarray] = None
        self._pattern = None

    # -- structure -------------------------------------------------------------

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> List[int]:
        return [self.layers[0].shape[0]] + [l.shape[1] for l in self.layers]

    @property
    def pattern(self) -> SparsePattern:
        if self._pattern is None:
            rows, cols = self.graph.directed_entries()
            self._pattern = SparsePattern(rows, cols, self.graph.n_nodes)
        return self._pattern

    def theta(self, layer: int = 0) -> np.ndarray:
        """Current edge angles seen by ``layer``."""
        if self.fixed_theta is not None:
            return self.fixed_theta.copy()
        return theta_from_raw(self.raw_phases[layer if self.layerwise_theta else 0])

    def learned_graph(self, layer: int = 0) -> FuzzyDiGraph:
        return self.graph.with_theta(self.theta(layer))

    def make_layerwise(self):
        """Switch to per-layer phases, copying the shared set into every layer."""
        if not self.layerwise_theta:
            self.raw_phases = np.tile(self.raw_phases[0], (self.n_layers, 1))
            self.layerwise_theta = True

    def parameters(self) -> Dict[str, np.ndarray]:
        """Named views of every trainable array."""
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"layers.{k}.w_self"] = layer.w_self
            out[f"layers.{k}.w_in"] = layer.w_in
            out[f"layers.{k}.w_out"] = layer.w_out
            out[f"layers.{k}.bias"] = layer.bias
        out["raw_phases"] = self.raw_phases
        return out

    def n_parameters(self) -> int:
        return sum(v.size for v in self.parameters().values())

    def copy(self) -> "CoEDModel":
        m = copy.copy(self)
        m.layers = [CoEDLayerParams(l.w_self.copy(), l.w_in.copy(), l.w_out.copy(), l.bias.copy())
                    for l in self.layers]
        m.raw_phases = self.raw_phases.copy()
        return m

    def set_generator_weights(self, w_self, w_in, w_out, true_theta):
        """Load weights shared across all layers plus exact phases.

        In/out weights are divided by ``alpha`` / ``1 - alpha`` so the layer
        map equals ``F W_self + P_in F W_in + P_out F W_out``.
        """
        for layer in self.layers:
            layer.w_self[...] = w_self
            layer.w_in[...] = np.asarray(w_in) / self.alpha
            layer.w_out[...] = np.asarray(w_out) / (1.0 - self.alpha)
            layer.bias[...] = 0.0
        self.fixed_theta = np.asarray(true_theta, dtype=float).copy()
        self.raw_phases[...] = raw_from_theta(true_theta)[None, :]

    # -- forward ---------------------------------------------------------------

    def propagation(self, tape: Tape, raw: Tensor):
        """Differentiable ``(p_in, p_out)`` values on the 2E directed entries."""
        pat = self.pattern
        n = self.graph.n_nodes
        theta = tape.affine(tape.tanh(raw), 0.25 * np.pi, 0.25 * np.pi)
        return self._propagation_from_theta(tape, theta, pat, n)

    def _propagation_from_theta(self, tape, theta, pat, n):
        c, s = tape.cos(theta), tape.sin(theta)
        w_in = tape.concat([c, s])
        w_out = tape.concat([s, c])
        if self.normalization == "none":
            return w_in, w_out
        g_in = tape.rsqrt_floor(tape.segment_sum(w_in, pat.rows, n), self.epsilon)
        g_out = tape.rsqrt_floor(tape.segment_sum(w_out, pat.rows, n), self.epsilon)
        p_in = tape.mul(w_in, tape.mul(tape.gather(g_in, pat.rows), tape.gather(g_out, pat.cols)))
        p_out = tape.mul(w_out, tape.mul(tape.gather(g_out, pat.rows), tape.gather(g_in, pat.cols)))
        return p_in, p_out

    def _activate(self, tape, h, last):
        if last and not self.final_activation:
            return h
        if self.activation == "relu":
            return tape.relu(h)
        if self.activation == "normalize":
            return tape.row_normalize(h)
        return h

    def forward(self, features, tape: Optional[Tape] = None, freeze_theta: bool = False) -> Tensor:
        """Run every layer.

        Args:
            features: (N, D) or (N, B, D) array or Tensor.
            tape: recording tape; a disabled tape is used when omitted.
            freeze_theta: treat phases as constants.

        Returns:
            Output tensor with the same leading axes as ``features``.
        """
        tape = Tape(enabled=False) if tape is None else tape
        x = features if isinstance(features, Tensor) else tape.const(features)
        if x.shape[0] != self.graph.n_nodes:
            raise ValueError(f"features have {x.shape[0]} rows, graph has {self.graph.n_nodes} nodes")
        if x.shape[-1] != self.dims[0]:
            raise ValueError(f"feature dim {x.shape[-1]} != model input dim {self.dims[0]}")
        override = self.fixed_theta
        pat, n = self.pattern, self.graph.n_nodes
        props = []
        for k in range(self.raw_phases.shape[0]):
            if override is not None:
                props.append(self._propagation_from_theta(tape, tape.const(override), pat, n))
            else:
                raw = tape.leaf(self.raw_phases[k], name=f"raw_phases.{k}",
                                requires_grad=not freeze_theta)
                props.append(self.propagation(tape, raw))
        for k, layer in enumerate(self.layers):
            p_in, p_out = props[k if self.layerwise_theta else 0]
            w_self = tape.leaf(layer.w_self, f"layers.{k}.w_self")
            w_in = tape.leaf(layer.w_in, f"layers.{k}.w_in")
            w_out = tape.leaf(layer.w_out, f"layers.{k}.w_out")
            bias = tape.leaf(layer.bias[0], f"layers.{k}.bias")
            m_in = tape.spmm(p_in, pat, x)
            m_out = tape.spmm(p_out, pat, x)
            terms = [tape.scale(tape.matmul(m_in, w_in), self.alpha),
                     tape.scale(tape.matmul(m_out, w_out), 1.0 - self.alpha)]
            if self.use_self_feature:
                terms.insert(0, tape.matmul(x, w_self))
            h = tape.add(tape.sum_all(terms), bias)
            x = self._activate(tape, h, last=k == self.n_layers - 1)
            if not np.all(np.isfinite(x.value)):
                raise NonFiniteError(f"non-finite activations in layer {k}", layer=k)
        return x


def collect_grads(model: CoEDModel, grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Reshape tape gradients into the layout of :meth:`CoEDModel.parameters`."""
    out = {}
    for name, arr in model.parameters().items():
        if name == "raw_phases":
            rows = [grads.get(f"raw_phases.{k}", np.zeros(arr.shape[1])) for k in range(arr.shape[0])]
            out[name] = np.stack(rows) if rows else np.zeros_like(arr)
        elif name.endswith(".bias"):
            out[name] = grads.get(name, np.zeros(arr.shape[1])).reshape(arr.shape)
        else:
            out[name] = grads.get(name, np.zeros_like(arr))
    return out
