"""Desk-scale graph encoder for object-based scene context.

Per-object keypoint graphs pass through two symmetric-normalized graph
convolutions (self-loops added internally, ReLU activations), mean pooling
plus a projected global-attribute vector, and a scene-level mean projection.
The resulting context vector gates image features multiplicatively with a
residual, so an empty scene leaves the features untouched. A small
token-conditioned MLP provides per-channel scale-and-shift modulation.

This module exists to pin down shapes, invariants and gradients at desk
scale (M <= 24 nodes); it is not a training stack.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import GraphError, ShapeError


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _relu_prime(x: np.ndarray) -> np.ndarray:
    return (x > 0.0).astype(np.float64)


def _identity(x: np.ndarray) -> np.ndarray:
    return x


def _ones_like(x: np.ndarray) -> np.ndarray:
    return np.ones_like(x)


def _readonly(values, shape_hint: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{shape_hint} must be {ndim}-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{shape_hint} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObjectGraph:
    """Keypoint graph of one scene object.

    ``node_features`` is an (M, f) matrix for the M visible keypoints,
    ``edges`` an undirected index-pair list (self-loops are implicit and
    rejected here), ``global_attributes`` the per-object vector such as
    (speed, distance, direction).
    """

    node_features: np.ndarray
    edges: tuple[tuple[int, int], ...]
    global_attributes: np.ndarray

    def __post_init__(self) -> None:
        feats = _readonly(self.node_features, "node_features", 2)
        if feats.shape[0] < 1:
            raise GraphError("a graph needs at least one node")
        attrs = _readonly(self.global_attributes, "global_attributes", 1)
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        _validate_edges(feats.shape[0], edges)
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "global_attributes", attrs)

    @property
    def num_nodes(self) -> int:
        return int(self.node_features.shape[0])


@dataclass(frozen=True, eq=False)
class ModulationMlp:
    """Two affine layers regressing per-channel (scale, shift) from a token."""

    w_in: np.ndarray
    b_in: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "w_in", _readonly(self.w_in, "w_in", 2))
        object.__setattr__(self, "b_in", _readonly(self.b_in, "b_in", 1))
        object.__setattr__(self, "w_out", _readonly(self.w_out, "w_out", 2))
        object.__setattr__(self, "b_out", _readonly(self.b_out, "b_out", 1))


@dataclass(frozen=True, eq=False)
class GraphEncoderParams:
    """Weights of the scene-context encoder.

    Row-vector convention throughout: inputs multiply weights from the left,
    so ``w1`` is (f, h), ``w_attr`` is (p, h) and ``w_scene`` is (h, h).
    """

    w1: np.ndarray
    w2: np.ndarray
    w_attr: np.ndarray
    w_scene: np.ndarray
    modulation: ModulationMlp | None = None

    def __post_init__(self) -> None:
        w1 = _readonly(self.w1, "w1", 2)
        w2 = _readonly(self.w2, "w2", 2)
        w_attr = _readonly(self.w_attr, "w_attr", 2)
        w_scene = _readonly(self.w_scene, "w_scene", 2)
        h = w1.shape[1]
        if h < 1:
            raise ValueError("hidden width must be positive")
        if w2.shape != (h, h) or w_attr.shape[1] != h or w_scene.shape != (h, h):
            raise ShapeError(
                "inconsistent hidden widths: "
                f"w1 {w1.shape}, w2 {w2.shape}, w_attr {w_attr.shape}, w_scene {w_scene.shape}"
            )
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "w_attr", w_attr)
        object.__setattr__(self, "w_scene", w_scene)

    @property
    def hidden_dim(self) -> int:
        return int(self.w1.shape[1])


@dataclass(frozen=True, eq=False)
class SceneContext:
    """Aggregated scene vector plus the number of objects behind it."""

    vector: np.ndarray
    object_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", _readonly(self.vector, "vector", 1))
        if self.object_count < 0:
            raise ValueError("object_count must be non-negative")


def _validate_edges(num_nodes: int, edges: Sequence[tuple[int, int]]) -> None:
    for i, j in edges:
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise GraphError(f"edge ({i}, {j}) out of range for {num_nodes} nodes")
        if i == j:
            raise GraphError(f"self-loop ({i}, {j}) in edge list; self-loops are implicit")


def normalized_adjacency(num_nodes: int, edges: Sequence[tuple[int, int]]) -> np.ndarray:
    """Symmetric-normalized adjacency with self-loops: D^-1/2 (A + I) D^-1/2."""
    _validate_edges(num_nodes, edges)
    adj = np.eye(num_nodes, dtype=np.float64)
    for i, j in edges:
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    inv_sqrt_deg = 1.0 / np.sqrt(adj.sum(axis=1))
    return adj * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


def gcn_layer(
    features: np.ndarray,
    edges: Sequence[tuple[int, int]],
    weight: np.ndarray,
) -> np.ndarray:
    """One graph convolution: relu(D^-1/2 (A + I) D^-1/2 X W)."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeError(f"features must be (M, f), got shape {feats.shape}")
    w = np.asarray(weight, dtype=np.float64)
    if w.shape[0] != feats.shape[1]:
        raise ShapeError(f"weight rows {w.shape[0]} do not match feature width {feats.shape[1]}")
    propagation = normalized_adjacency(feats.shape[0], edges)
    return _relu(propagation @ feats @ w)


def _embed_object(
    graph: ObjectGraph,
    params: GraphEncoderParams,
    phi: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    if graph.node_features.shape[1] != params.w1.shape[0]:
        raise ShapeError(
            f"node feature width {graph.node_features.shape[1]} does not match "
            f"w1 input width {params.w1.shape[0]}"
        )
    if graph.global_attributes.shape[0] != params.w_attr.shape[0]:
        raise ShapeError(
            f"attribute width {graph.global_attributes.shape[0]} does not match "
            f"w_attr input width {params.w_attr.shape[0]}"
        )
    propagation = normalized_adjacency(graph.num_nodes, graph.edges)
    hidden1 = phi(propagation @ graph.node_features @ params.w1)
    hidden2 = phi(propagation @ hidden1 @ params.w2)
    pooled = hidden2.mean(axis=0)
    attr_proj = phi(graph.global_attributes @ params.w_attr)
    return pooled + attr_proj


def embed_object(graph: ObjectGraph, params: GraphEncoderParams) -> np.ndarray:
    """Embed one object: mean-pooled second convolution plus projected attributes."""
    return _embed_object(graph, params, _relu)


def aggregate_scene(
    objects: Sequence[np.ndarray],
    params: GraphEncoderParams,
) -> SceneContext:
    """Project the mean of the per-object embeddings to the scene vector."""
    if len(objects) == 0:
        raise GraphError("aggregate_scene needs at least one object embedding")
    stack = np.asarray(objects, dtype=np.float64)
    mean = stack.mean(axis=0)
    return SceneContext(mean @ params.w_scene, len(objects))


def encode_scene(
    graphs: Sequence[ObjectGraph],
    params: GraphEncoderParams,
) -> SceneContext:
    """Encode all scene objects; an empty scene yields the passthrough context."""
    if len(graphs) == 0:
        return SceneContext(np.zeros(params.hidden_dim), 0)
    return aggregate_scene([embed_object(g, params) for g in graphs], params)


def fuse_with_features(image_features: np.ndarray, scene: SceneContext) -> np.ndarray:
    """Gated residual fusion: features * scene + features.

    With zero objects the input array is returned unchanged (bit-exact
    passthrough to the object-free baseline behaviour).
    """
    if scene.object_count == 0:
        return image_features
    feats = np.asarray(image_features, dtype=np.float64)
    if feats.shape[-1] != scene.vector.shape[0]:
        raise ShapeError(
            f"channel width {feats.shape[-1]} does not match scene width {scene.vector.shape[0]}"
        )
    return feats * scene.vector + feats


def condition_modulate(
    features: np.ndarray,
    token: np.ndarray,
    mlp: ModulationMlp,
) -> np.ndarray:
    """Per-channel scale-and-shift of a feature grid, regressed from a token."""
    feats = np.asarray(features, dtype=np.float64)
    tok = np.asarray(token, dtype=np.float64)
    channels = feats.shape[-1]
    if tok.shape[0] != mlp.w_in.shape[0]:
        raise ShapeError(f"token width {tok.shape[0]} does not match mlp input {mlp.w_in.shape[0]}")
    hidden = _relu(tok @ mlp.w_in + mlp.b_in)
    scale_shift = hidden @ mlp.w_out + mlp.b_out
    if scale_shift.shape[0] != 2 * channels:
        raise ShapeError(
            f"modulation output width {scale_shift.shape[0]} must be twice the "
            f"channel width {channels}"
        )
    alpha = scale_shift[:channels]
    beta = scale_shift[channels:]
    return feats * alpha + beta


def kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform init with ReLU gain: bound = sqrt(6 / fan_in)."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder_params(
    rng: np.random.Generator,
    feature_dim: int,
    hidden_dim: int,
    attr_dim: int = 3,
) -> GraphEncoderParams:
    return GraphEncoderParams(
        w1=kaiming_uniform(rng, feature_dim, hidden_dim),
        w2=kaiming_uniform(rng, hidden_dim, hidden_dim),
        w_attr=kaiming_uniform(rng, attr_dim, hidden_dim),
        w_scene=kaiming_uniform(rng, hidden_dim, hidden_dim),
    )


def init_modulation_mlp(
    rng: np.random.Generator,
    token_dim: int,
    hidden_dim: int,
    channels: int,
) -> ModulationMlp:
    """Hidden layer Kaiming-uniform; output layer starts at identity (scale 1, shift 0)."""
    b_out = np.concatenate([np.ones(channels), np.zeros(channels)])
    return ModulationMlp(
        w_in=kaiming_uniform(rng, token_dim, hidden_dim),
        b_in=np.zeros(hidden_dim),
        w_out=np.zeros((hidden_dim, 2 * channels)),
        b_out=b_out,
    )


_PARAM_FIELDS = ("w1", "w2", "w_attr", "w_scene")


def _scene_head_loss(
    params: GraphEncoderParams,
    graphs: Sequence[ObjectGraph],
    image_features: np.ndarray,
    phi: Callable[[np.ndarray], np.ndarray],
) -> float:
    if len(graphs) == 0:
        raise GraphError("gradient check needs at least one object graph")
    embeddings = [_embed_object(g, params, phi) for g in graphs]
    scene = aggregate_scene(embeddings, params)
    return float(fuse_with_features(image_features, scene).sum())


def encoder_param_gradients(
    params: GraphEncoderParams,
    graphs: Sequence[ObjectGraph],
    image_features: np.ndarray,
    *,
    linear: bool = False,
) -> dict[str, np.ndarray]:
    """Backpropagated gradients of the scalar head (sum of the fused grid)."""
    phi = _identity if linear else _relu
    phi_prime = _ones_like if linear else _relu_prime

    feats = np.asarray(image_features, dtype=np.float64)
    channel_sums = feats.reshape(-1, feats.shape[-1]).sum(axis=0)

    embeddings = [_embed_object(g, params, phi) for g in graphs]
    scene_mean = np.asarray(embeddings).mean(axis=0)

    grads = {name: np.zeros_like(getattr(params, name)) for name in _PARAM_FIELDS}
    # head: loss = <channel_sums, scene_mean @ w_scene> + const
    grads["w_scene"] = np.outer(scene_mean, channel_sums)
    d_embedding = (params.w_scene @ channel_sums) / len(graphs)

    for graph in graphs:
        propagation = normalized_adjacency(graph.num_nodes, graph.edges)
        z1 = propagation @ graph.node_features @ params.w1
        h1 = phi(z1)
        z2 = propagation @ h1 @ params.w2
        attr_z = graph.global_attributes @ params.w_attr

        grads["w_attr"] += np.outer(graph.global_attributes, d_embedding * phi_prime(attr_z))
        d_h2 = np.tile(d_embedding / graph.num_nodes, (graph.num_nodes, 1))
        d_z2 = d_h2 * phi_prime(z2)
        grads["w2"] += (propagation @ h1).T @ d_z2
        d_z1 = (propagation @ d_z2 @ params.w2.T) * phi_prime(z1)
        grads["w1"] += (propagation @ graph.node_features).T @ d_z1
    return grads


def relu_kink_margin(params: GraphEncoderParams, graphs: Sequence[ObjectGraph]) -> float:
    """Smallest |pre-activation| across the encoder; near zero means the
    gradient check sits on a ReLU kink and the instance should be resampled."""
    margin = np.inf
    for graph in graphs:
        propagation = normalized_adjacency(graph.num_nodes, graph.edges)
        z1 = propagation @ graph.node_features @ params.w1
        z2 = propagation @ _relu(z1) @ params.w2
        attr_z = graph.global_attributes @ params.w_attr
        for z in (z1, z2, attr_z):
            if z.size:
                margin = min(margin, float(np.abs(z).min()))
    return margin


def encoder_grad_check(
    params: GraphEncoderParams,
    graphs: Sequence[ObjectGraph],
    image_features: np.ndarray,
    *,
    linear: bool = False,
    step: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Entries where both gradients are below 1e-8 in magnitude are compared
    absolutely. ``linear`` swaps ReLU for identity, which must drive the
    error to float noise.
    """
    phi = _identity if linear else _relu
    analytic = encoder_param_gradients(params, graphs, image_features, linear=linear)
    worst = 0.0
    for name in _PARAM_FIELDS:
        base = np.array(getattr(params, name))
        flat = base.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            hi = _scene_head_loss(replace(params, **{name: base}), graphs, image_features, phi)
            flat[i] = original - step
            lo = _scene_head_loss(replace(params, **{name: base}), graphs, image_features, phi)
            flat[i] = original
            fd = (hi - lo) / (2.0 * step)
            ana = float(analytic[name].ravel()[i])
            scale = max(abs(ana), abs(fd))
            if scale < 1e-8:
                worst = max(worst, abs(ana - fd))
            else:
                worst = max(worst, abs(ana - fd) / scale)
    return worst
