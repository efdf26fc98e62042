"""Embedded verification suite: naive oracles plus property checks.

The oracles here recompute every metric with plain Python loops and the
gradient checks use central differences, deliberately sharing no code with
the production kernels. `objsal selfcheck` runs the whole suite on random
instances derived from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import loss as loss_mod
from . import metrics
from .core import (
    BinaryFixationMap,
    EvalFrame,
    FixationSet,
    PanopticMap,
    SaliencyMap,
    SegmentInfo,
)
from .graphcontext import (
    ObjectGraph,
    embed_object,
    encoder_grad_check,
    init_encoder_params,
    relu_kink_margin,
)
from .gtgen import GtGenConfig, render_ground_truth

ORACLE_TOLERANCE = 1e-9
EXACT_TOLERANCE = 1e-12
GRADIENT_TOLERANCE = 1e-5


# ---------------------------------------------------------------------------
# Naive loop oracles (pure Python, no numpy reductions)


def _flatten(rows) -> list[float]:
    return [float(v) for row in rows for v in row]


def _normalize(flat: list[float]) -> list[float]:
    total = sum(flat)
    return [v / total for v in flat]


def oracle_sim(pred_rows, gt_rows) -> float:
    p = _normalize(_flatten(pred_rows))
    g = _normalize(_flatten(gt_rows))
    return sum(min(a, b) for a, b in zip(p, g))


def oracle_cc(pred_rows, gt_rows) -> float:
    p = _flatten(pred_rows)
    g = _flatten(gt_rows)
    n = len(p)
    mp = sum(p) / n
    mg = sum(g) / n
    cov = sum((a - mp) * (b - mg) for a, b in zip(p, g))
    vp = sum((a - mp) ** 2 for a in p)
    vg = sum((b - mg) ** 2 for b in g)
    return cov / math.sqrt(vp * vg)


def oracle_kld(pred_rows, gt_rows, epsilon: float) -> float:
    p = _normalize(_flatten(pred_rows))
    g = _normalize(_flatten(gt_rows))
    return sum(b * math.log(b / (a + epsilon) + epsilon) for a, b in zip(p, g))


def oracle_nss(pred_rows, bit_rows) -> float:
    p = _flatten(pred_rows)
    bits = _flatten(bit_rows)
    n = len(p)
    mean = sum(p) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in p) / n)
    sampled = [(v - mean) / std for v, b in zip(p, bits) if b]
    return sum(sampled) / len(sampled)


def oracle_auc(pred_rows, bit_rows) -> float:
    """Exhaustive-threshold ROC area: every distinct saliency value is a
    threshold, trapezoid rule over the resulting points."""
    p = _flatten(pred_rows)
    bits = [bool(b) for b in _flatten(bit_rows)]
    positives = [v for v, b in zip(p, bits) if b]
    n_pos = len(positives)
    n_neg = len(p) - n_pos
    thresholds = sorted(set(p), reverse=True)
    points = [(0.0, 0.0)]
    for t in thresholds:
        tp = sum(1 for v in positives if v >= t)
        fp = sum(1 for v, b in zip(p, bits) if not b and v >= t)
        points.append((fp / n_neg, tp / n_pos))
    points.append((1.0, 1.0))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y1 + y0) / 2.0
    return area


def oracle_osim(pred_rows, gt_rows, id_rows) -> float:
    p = _normalize(_flatten(pred_rows))
    g = _normalize(_flatten(gt_rows))
    ids = [int(v) for v in _flatten(id_rows)]
    pred_mass: dict[int, float] = {}
    gt_mass: dict[int, float] = {}
    for sid, a, b in zip(ids, p, g):
        pred_mass[sid] = pred_mass.get(sid, 0.0) + a
        gt_mass[sid] = gt_mass.get(sid, 0.0) + b
    return sum(min(pred_mass[sid], gt_mass[sid]) for sid in pred_mass)


def oracle_object_embedding(graph: ObjectGraph, params) -> np.ndarray:
    """Unvectorized recomputation of the object embedding."""
    m = graph.num_nodes
    adj = [[1.0 if i == j else 0.0 for j in range(m)] for i in range(m)]
    for i, j in graph.edges:
        adj[i][j] = 1.0
        adj[j][i] = 1.0
    deg = [sum(row) for row in adj]
    norm = [
        [adj[i][j] / math.sqrt(deg[i] * deg[j]) for j in range(m)] for i in range(m)
    ]

    def conv(feats: list[list[float]], weight) -> list[list[float]]:
        rows_in = len(feats)
        width_out = weight.shape[1]
        mixed = [
            [sum(norm[i][k] * feats[k][c] for k in range(rows_in)) for c in range(len(feats[0]))]
            for i in range(rows_in)
        ]
        out = [
            [
                max(0.0, sum(mixed[i][c] * float(weight[c, o]) for c in range(len(mixed[0]))))
                for o in range(width_out)
            ]
            for i in range(rows_in)
        ]
        return out

    h1 = conv([list(map(float, row)) for row in graph.node_features], params.w1)
    h2 = conv(h1, params.w2)
    hidden = params.w1.shape[1]
    pooled = [sum(h2[i][c] for i in range(m)) / m for c in range(hidden)]
    attrs = [float(a) for a in graph.global_attributes]
    attr_proj = [
        max(0.0, sum(attrs[k] * float(params.w_attr[k, c]) for k in range(len(attrs))))
        for c in range(hidden)
    ]
    return np.array([pooled[c] + attr_proj[c] for c in range(hidden)])


# ---------------------------------------------------------------------------
# Random instance generation


def random_saliency(rng: np.random.Generator, height: int, width: int) -> SaliencyMap:
    return SaliencyMap(rng.uniform(0.05, 1.0, size=(height, width)))


def random_panoptic(rng: np.random.Generator, height: int, width: int, segments: int) -> PanopticMap:
    ids = rng.integers(0, segments, size=(height, width))
    table = {
        sid: SegmentInfo(f"segment_{sid}", is_thing=bool(sid % 2))
        for sid in range(segments)
    }
    present = set(int(v) for v in np.unique(ids))
    table = {sid: info for sid, info in table.items() if sid in present}
    return PanopticMap(ids, table)


def random_fixations(rng: np.random.Generator, height: int, width: int, count: int) -> BinaryFixationMap:
    bits = np.zeros((height, width), dtype=bool)
    rows = rng.integers(0, height, size=count)
    cols = rng.integers(0, width, size=count)
    bits[rows, cols] = True
    return BinaryFixationMap(bits)


def random_frame(
    rng: np.random.Generator,
    height: int = 8,
    width: int = 8,
    segments: int = 4,
    fixation_count: int = 5,
    frame_id: str = "random",
) -> EvalFrame:
    return EvalFrame(
        predicted=random_saliency(rng, height, width),
        ground_truth=random_saliency(rng, height, width),
        fixations=random_fixations(rng, height, width, fixation_count),
        panoptic=random_panoptic(rng, height, width, segments),
        frame_id=frame_id,
    )


def random_graph(rng: np.random.Generator, feature_dim: int = 6, max_nodes: int = 24) -> ObjectGraph:
    nodes = int(rng.integers(1, max_nodes + 1))
    feats = rng.normal(size=(nodes, feature_dim))
    edges = []
    for i in range(1, nodes):
        j = int(rng.integers(0, i))
        edges.append((j, i))
    attrs = rng.normal(size=3)
    return ObjectGraph(feats, tuple(edges), attrs)


# ---------------------------------------------------------------------------
# Property suite


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str


def _check_oracle_equivalence(rng: np.random.Generator, frames: int, fault: float) -> PropertyResult:
    worst = 0.0
    for _ in range(frames):
        frame = random_frame(rng)
        pred = frame.predicted.values.tolist()
        gt = frame.ground_truth.values.tolist()
        bits = frame.fixations.bits.astype(int).tolist()
        ids = frame.panoptic.segment_ids.tolist()
        report = metrics.evaluate_frame(frame)
        expected = {
            "sim": oracle_sim(pred, gt),
            "cc": oracle_cc(pred, gt),
            "kld": oracle_kld(pred, gt, metrics.DEFAULT_KLD_EPSILON),
            "nss": oracle_nss(pred, bits),
            "auc": oracle_auc(pred, bits),
            "osim": oracle_osim(pred, gt, ids) + fault,
        }
        for name, want in expected.items():
            got = report.value(name)
            worst = max(worst, abs(got - want))
    passed = worst <= ORACLE_TOLERANCE
    return PropertyResult(
        "metric_oracle_equivalence",
        passed,
        f"max |kernel - naive oracle| = {worst:.3e} over {frames} frames",
    )


def _check_dominance(rng: np.random.Generator, frames: int) -> PropertyResult:
    worst_gap = 0.0
    worst_refine = 0.0
    worst_merge = 0.0
    for _ in range(frames):
        side = int(rng.integers(6, 17))
        segments = int(rng.integers(1, 9))
        frame = random_frame(rng, side, side, segments)
        sim_value = metrics.sim(frame.predicted, frame.ground_truth)
        osim_value = metrics.osim(frame.predicted, frame.ground_truth, frame.panoptic).value
        worst_gap = max(worst_gap, sim_value - osim_value)

        per_pixel = PanopticMap(
            np.arange(side * side).reshape(side, side),
            {i: SegmentInfo(f"px{i}", True) for i in range(side * side)},
        )
        refined = metrics.osim(frame.predicted, frame.ground_truth, per_pixel).value
        worst_refine = max(worst_refine, abs(refined - sim_value))

        ids = frame.panoptic.segment_ids
        present = sorted(int(v) for v in np.unique(ids))
        if len(present) >= 2:
            a, b = present[0], present[1]
            merged_ids = np.where(ids == b, a, ids)
            table = {
                sid: info for sid, info in frame.panoptic.segments.items() if sid != b
            }
            merged = metrics.osim(
                frame.predicted, frame.ground_truth, PanopticMap(merged_ids, table)
            ).value
            worst_merge = max(worst_merge, osim_value - merged)
    passed = max(worst_gap, worst_refine, worst_merge) <= EXACT_TOLERANCE
    return PropertyResult(
        "osim_dominance_refinement_coarsening",
        passed,
        f"max violation {max(worst_gap, worst_refine, worst_merge):.3e} over {frames} frames",
    )


def _check_loss_composition(rng: np.random.Generator, frames: int) -> PropertyResult:
    weights = loss_mod.LossWeights()
    worst = 0.0
    for _ in range(frames):
        frame = random_frame(rng)
        breakdown = loss_mod.combined_loss(
            frame.predicted, frame.ground_truth, frame.fixations, frame.panoptic, weights
        )
        phat = frame.predicted.values / frame.predicted.total
        ghat = frame.ground_truth.values / frame.ground_truth.total
        by_hand = (
            weights.lambda_kld * metrics.kld(frame.predicted, frame.ground_truth)
            + weights.lambda_cc * metrics.cc(frame.predicted, frame.ground_truth)
            + weights.lambda_sim * metrics.sim(frame.predicted, frame.ground_truth)
            + weights.lambda_nss * metrics.nss(frame.predicted, frame.fixations)
            + weights.lambda_mse * float(((phat - ghat) ** 2).mean())
            + weights.lambda_osim
            * metrics.osim(frame.predicted, frame.ground_truth, frame.panoptic).value
        )
        worst = max(worst, abs(breakdown.total - by_hand))
    passed = worst <= EXACT_TOLERANCE
    return PropertyResult(
        "loss_composition",
        passed,
        f"max |combined - hand-composed| = {worst:.3e} over {frames} frames",
    )


def gradient_max_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    """Relative error where gradients are meaningful, absolute below 1e-8."""
    worst = 0.0
    for a, f in zip(analytic.ravel(), fd.ravel()):
        scale = max(abs(a), abs(f))
        if scale < 1e-8:
            worst = max(worst, abs(a - f))
        else:
            worst = max(worst, abs(a - f) / scale)
    return worst


def gradient_mismatch(analytic: np.ndarray, fd: np.ndarray, rel: float = GRADIENT_TOLERANCE, floor: float = 1e-8) -> float:
    """Worst entrywise |a - f| against the mixed tolerance rel * scale + floor.

    The absolute floor absorbs central-difference rounding noise (~1e-9 for
    loss values of order 10 at step 1e-6); a result <= 1 passes.
    """
    diff = np.abs(analytic - fd)
    scale = np.maximum(np.abs(analytic), np.abs(fd))
    return float((diff / (rel * scale + floor)).max())


def _check_loss_gradient(rng: np.random.Generator, frames: int) -> PropertyResult:
    weights = loss_mod.LossWeights()
    worst = 0.0
    for _ in range(frames):
        frame = random_frame(rng)
        analytic = loss_mod.grad_combined_loss(
            frame.predicted, frame.ground_truth, frame.fixations, frame.panoptic, weights
        )

        def objective(raw: np.ndarray) -> float:
            return loss_mod.combined_loss(
                SaliencyMap(raw),
                frame.ground_truth,
                frame.fixations,
                frame.panoptic,
                weights,
            ).total

        fd = loss_mod.fd_gradient(objective, frame.predicted.values, step=1e-6)
        worst = max(worst, gradient_mismatch(analytic, fd))
    passed = worst <= 1.0
    return PropertyResult(
        "loss_gradient_finite_difference",
        passed,
        f"worst mismatch {worst:.3f} of the mixed 1e-5 relative + 1e-8 absolute budget "
        f"over {frames} frames",
    )


def _check_encoder_gradient(rng: np.random.Generator, instances: int) -> PropertyResult:
    worst = 0.0
    for _ in range(instances):
        while True:
            params = init_encoder_params(rng, feature_dim=5, hidden_dim=6)
            graphs = [random_graph(rng, feature_dim=5, max_nodes=6) for _ in range(2)]
            if relu_kink_margin(params, graphs) > 1e-4:
                break
        image = rng.normal(size=(3, 4, 6))
        worst = max(worst, encoder_grad_check(params, graphs, image))
    passed = worst <= GRADIENT_TOLERANCE
    return PropertyResult(
        "encoder_gradient_finite_difference",
        passed,
        f"max relative error {worst:.3e} over {instances} instances",
    )


def _check_graph_invariance(rng: np.random.Generator, graphs: int) -> PropertyResult:
    worst = 0.0
    for _ in range(graphs):
        graph = random_graph(rng, feature_dim=5, max_nodes=8)
        params = init_encoder_params(rng, feature_dim=5, hidden_dim=6)
        base = embed_object(graph, params)
        perm = rng.permutation(graph.num_nodes)
        inverse = np.argsort(perm)
        permuted = ObjectGraph(
            graph.node_features[perm],
            tuple((int(inverse[i]), int(inverse[j])) for i, j in graph.edges),
            graph.global_attributes,
        )
        worst = max(worst, float(np.abs(embed_object(permuted, params) - base).max()))
    passed = worst <= EXACT_TOLERANCE
    return PropertyResult(
        "graph_node_permutation_invariance",
        passed,
        f"max embedding drift {worst:.3e} over {graphs} graphs",
    )


def _check_gtgen_window(rng: np.random.Generator, traces: int) -> PropertyResult:
    config = GtGenConfig(pixels_per_degree=4.0)
    worst = 0.0
    for _ in range(traces):
        points = tuple(
            (float(rng.uniform(10, 50)), float(rng.uniform(10, 50))) for _ in range(5)
        )
        full = render_ground_truth(FixationSet(points), config, 64, 64)
        last3 = render_ground_truth(FixationSet(points[-3:]), config, 64, 64)
        worst = max(worst, float(np.abs(full.values - last3.values).max()))
        worst = max(worst, abs(full.total - 1.0))
    passed = worst <= 1e-9
    return PropertyResult(
        "gtgen_window_equivalence",
        passed,
        f"max deviation {worst:.3e} over {traces} traces",
    )


def run_selfcheck(seed: int = 0, *, inject_fault: bool = False) -> list[PropertyResult]:
    """Run every embedded property check on seed-derived random instances."""
    rng = np.random.default_rng(seed)
    fault = 1e-6 if inject_fault else 0.0
    return [
        _check_oracle_equivalence(np.random.default_rng(rng.integers(2**63)), 40, fault),
        _check_dominance(np.random.default_rng(rng.integers(2**63)), 100),
        _check_loss_composition(np.random.default_rng(rng.integers(2**63)), 20),
        _check_loss_gradient(np.random.default_rng(rng.integers(2**63)), 5),
        _check_encoder_gradient(np.random.default_rng(rng.integers(2**63)), 3),
        _check_graph_invariance(np.random.default_rng(rng.integers(2**63)), 20),
        _check_gtgen_window(np.random.default_rng(rng.integers(2**63)), 5),
    ]
