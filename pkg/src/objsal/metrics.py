"""Metric kernels for attention-map evaluation.

Conventions shared by every kernel:

* ``sim``, ``osim`` and ``kld`` compare unit-sum distributions; raw inputs
  are normalized on the fly and an all-zero map raises ``ZeroMassError``.
* ``cc``, ``nss`` and ``auc_judd`` are invariant under positive affine
  (respectively strictly monotone) transforms of the predicted map, so they
  operate on values as given.
* Standard deviations are population (divide by N) everywhere.
* All kernels are pure functions; batch callers may run frames concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import BinaryFixationMap, EvalFrame, PanopticMap, SaliencyMap
from .errors import (
    DegenerateInputError,
    EmptyFixationsError,
    ShapeError,
    ZeroMassError,
)

DEFAULT_KLD_EPSILON = 1e-7

#: Report column order, with the direction in which each metric improves.
METRIC_NAMES = ("cc", "kld", "auc", "sim", "nss", "osim")
HIGHER_IS_BETTER = {
    "cc": True,
    "kld": False,
    "auc": True,
    "sim": True,
    "nss": True,
    "osim": True,
}


@dataclass(frozen=True)
class MetricOptions:
    """Knobs shared by full-frame evaluation."""

    kld_epsilon: float = DEFAULT_KLD_EPSILON
    things_only: bool = False
    include_per_segment: bool = False


@dataclass(frozen=True)
class SegmentMasses:
    """Attention mass gathered by one segment in both maps."""

    pred_mass: float
    gt_mass: float
    contribution: float


@dataclass(frozen=True)
class OsimResult:
    value: float
    per_segment: dict[int, SegmentMasses]


@dataclass(frozen=True)
class MetricReport:
    """Per-frame metric values; ``None`` marks a metric that was undefined.

    ``undefined`` maps each ``None`` metric to the reason it could not be
    computed, so batch aggregation can exclude and count it instead of
    aborting the run.
    """

    frame_id: str
    cc: float | None
    kld: float | None
    auc: float | None
    sim: float | None
    nss: float | None
    osim: float | None
    undefined: Mapping[str, str] = field(default_factory=dict)
    per_segment: Mapping[int, SegmentMasses] | None = None

    def value(self, metric: str) -> float | None:
        return getattr(self, metric)


def _require_same_shape(*grids: tuple[str, tuple[int, int]]) -> None:
    shapes = dict(grids)
    if len(set(shapes.values())) != 1:
        raise ShapeError(f"shape mismatch: {shapes}")


def _distribution(saliency: SaliencyMap) -> np.ndarray:
    # maps tagged unit-sum are trusted as-is (their total is validated to 1e-9
    # at construction); anything else is normalized here
    if saliency.normalization == "unit-sum":
        return saliency.values
    total = float(saliency.values.sum())
    if total <= 0.0:
        raise ZeroMassError("map has zero total mass")
    return saliency.values / total


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / 2.0)


def _counts_at(values: np.ndarray, descending: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per descending threshold t: (#values >= t, #values > t)."""
    if descending.size <= 12:
        ge = np.array([np.count_nonzero(values >= t) for t in descending], dtype=np.float64)
        gt = np.array([np.count_nonzero(values > t) for t in descending], dtype=np.float64)
        return ge, gt
    ordered = np.sort(values)
    ge = (values.size - np.searchsorted(ordered, descending, side="left")).astype(np.float64)
    gt = (values.size - np.searchsorted(ordered, descending, side="right")).astype(np.float64)
    return ge, gt


def _sim_from_abs_diff(abs_diff_sum: float) -> float:
    # sum_i min(p_i, g_i) = 1 - sum_i |p_i - g_i| / 2 for unit-sum maps;
    # float64 sums can overshoot the closed interval by ~1e-16
    return min(max(1.0 - 0.5 * abs_diff_sum, 0.0), 1.0)


def _sim_of(p: np.ndarray, g: np.ndarray) -> float:
    return _sim_from_abs_diff(float(np.abs(p - g).sum()))


def sim(predicted: SaliencyMap, ground_truth: SaliencyMap) -> float:
    """Histogram intersection of two unit-sum maps, in [0, 1]."""
    _require_same_shape(("predicted", predicted.shape), ("ground_truth", ground_truth.shape))
    return _sim_of(_distribution(predicted), _distribution(ground_truth))


def _osim_value(
    p: np.ndarray, g: np.ndarray, panoptic: PanopticMap, diff: np.ndarray | None = None
) -> float:
    """All-segment value via sum_s min(P_s, G_s) = 1 - sum_s |P_s - G_s| / 2,
    which needs a single weighted histogram over the mass difference."""
    flat = panoptic.segment_ids.ravel()
    diff = (p - g).ravel() if diff is None else diff.ravel()
    max_id = int(flat.max())
    if max_id < 4 * flat.size:
        mass_diff = np.bincount(flat, weights=diff, minlength=max_id + 1)
    else:  # sparse ids: avoid a giant bincount table
        _, inverse = np.unique(flat, return_inverse=True)
        mass_diff = np.bincount(inverse, weights=diff)
    value = 1.0 - 0.5 * float(np.abs(mass_diff).sum())
    return min(max(value, 0.0), 1.0)


def _osim_table(
    p: np.ndarray, g: np.ndarray, panoptic: PanopticMap, things_only: bool
) -> dict[int, SegmentMasses]:
    flat = panoptic.segment_ids.ravel()
    max_id = int(flat.max())
    if max_id < 4 * flat.size:
        pred_mass = np.bincount(flat, weights=p.ravel(), minlength=max_id + 1)
        gt_mass = np.bincount(flat, weights=g.ravel(), minlength=max_id + 1)

        def masses(sid: int) -> tuple[float, float]:
            if sid > max_id:
                return 0.0, 0.0
            return float(pred_mass[sid]), float(gt_mass[sid])

    else:  # sparse ids: avoid a giant bincount table
        uniq, inverse = np.unique(flat, return_inverse=True)
        pred_mass = np.bincount(inverse, weights=p.ravel())
        gt_mass = np.bincount(inverse, weights=g.ravel())
        index = {int(u): k for k, u in enumerate(uniq)}

        def masses(sid: int) -> tuple[float, float]:
            k = index.get(sid)
            if k is None:
                return 0.0, 0.0
            return float(pred_mass[k]), float(gt_mass[k])

    per_segment: dict[int, SegmentMasses] = {}
    for sid in sorted(panoptic.segments):
        if things_only and not panoptic.segments[sid].is_thing:
            continue
        pm, gm = masses(sid)
        per_segment[sid] = SegmentMasses(pm, gm, min(pm, gm))
    return per_segment


def _osim_of(p: np.ndarray, g: np.ndarray, panoptic: PanopticMap, things_only: bool) -> OsimResult:
    per_segment = _osim_table(p, g, panoptic, things_only)
    if things_only:
        value = min(sum(s.contribution for s in per_segment.values()), 1.0)
    else:
        value = _osim_value(p, g, panoptic)
    return OsimResult(value, per_segment)


def osim(
    predicted: SaliencyMap,
    ground_truth: SaliencyMap,
    panoptic: PanopticMap,
    *,
    things_only: bool = False,
) -> OsimResult:
    """Object-based similarity: per-segment minimum of aggregated mass.

    Both maps are unit-sum normalized, attention mass is summed inside each
    panoptic segment, and the per-segment minima are added up. Segments with
    zero mass in both maps contribute 0 but stay in the diagnostic table;
    ``things_only`` restricts the sum (and the table) to countable objects.
    """
    _require_same_shape(
        ("predicted", predicted.shape),
        ("ground_truth", ground_truth.shape),
        ("panoptic", panoptic.shape),
    )
    return _osim_of(_distribution(predicted), _distribution(ground_truth), panoptic, things_only)


def _cc_from_moments(
    n: int, sum_p: float, sum_g: float, dot_pp: float, dot_gg: float, dot_pg: float
) -> float:
    pvar = dot_pp - sum_p * sum_p / n
    gvar = dot_gg - sum_g * sum_g / n
    if pvar <= 1e-13 * dot_pp or gvar <= 1e-13 * dot_gg:
        raise DegenerateInputError("correlation is undefined for a constant map")
    value = (dot_pg - sum_p * sum_g / n) / float(np.sqrt(pvar * gvar))
    return min(max(value, -1.0), 1.0)


def cc(predicted: SaliencyMap, ground_truth: SaliencyMap) -> float:
    """Pearson correlation over all pixels, in [-1, 1].

    Computed from raw moments (one pass per array); a variance below the
    float64 resolution of the second moment counts as a constant map.
    """
    _require_same_shape(("predicted", predicted.shape), ("ground_truth", ground_truth.shape))
    p = predicted.values.ravel()
    g = ground_truth.values.ravel()
    return _cc_from_moments(
        p.size, float(p.sum()), float(g.sum()), float(p @ p), float(g @ g), float(p @ g)
    )


def kld(
    predicted: SaliencyMap,
    ground_truth: SaliencyMap,
    epsilon: float = DEFAULT_KLD_EPSILON,
) -> float:
    """Kullback-Leibler divergence of the prediction from the ground truth.

    Computed on unit-sum maps as ``sum(g * ln(g / (p + eps) + eps))`` with the
    stabilizer ``eps`` in both the denominator and the log argument, which
    bounds the self-divergence ``kld(m, m)`` above by ``eps``.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    _require_same_shape(("predicted", predicted.shape), ("ground_truth", ground_truth.shape))
    return _kld_of(_distribution(predicted), _distribution(ground_truth), epsilon)


def _kld_of(p: np.ndarray, g: np.ndarray, epsilon: float) -> float:
    work = p + epsilon
    np.divide(g, work, out=work)
    work += epsilon
    np.log(work, out=work)
    work *= g
    return float(work.sum())


def _nss_from_moments(
    values: np.ndarray, bits: np.ndarray, n: int, sum_p: float, dot_pp: float
) -> float:
    mean = sum_p / n
    second_moment = dot_pp / n
    variance = second_moment - mean * mean
    if variance <= 1e-13 * second_moment:
        raise DegenerateInputError("NSS is undefined for a constant map")
    std = float(np.sqrt(variance))
    return float((values[bits] - mean).mean() / std)


def nss(predicted: SaliencyMap, fixations: BinaryFixationMap) -> float:
    """Mean z-scored predicted saliency sampled at fixated pixels.

    Mean and standard deviation (population) are taken over all pixels;
    only the fixated pixels are gathered and averaged.
    """
    _require_same_shape(("predicted", predicted.shape), ("fixations", fixations.shape))
    bits = fixations.bits
    if not bits.any():
        raise EmptyFixationsError("NSS needs at least one fixation")
    flat = predicted.values.ravel()
    return _nss_from_moments(
        predicted.values, bits, flat.size, float(flat.sum()), float(flat @ flat)
    )


def auc_judd(predicted: SaliencyMap, fixations: BinaryFixationMap) -> float:
    """ROC area with fixated pixels as positives (Judd variant).

    Thresholds sweep the distinct saliency values at fixated pixels. Each
    threshold contributes its strict-above entry point and inclusive exit
    point, so ties between fixated and non-fixated pixels are averaged by
    the trapezoid rule and the result equals exhaustive threshold
    enumeration exactly.
    """
    _require_same_shape(("predicted", predicted.shape), ("fixations", fixations.shape))
    sal = predicted.values.ravel()
    fix = fixations.bits.ravel()
    n_pos = int(fix.sum())
    if n_pos == 0:
        raise EmptyFixationsError("AUC needs at least one fixation")
    n_neg = sal.size - n_pos
    if n_neg == 0:
        raise DegenerateInputError("AUC needs at least one non-fixated pixel")
    pos = sal[fix]
    thresholds = np.unique(pos)[::-1]
    ge_all, gt_all = _counts_at(sal, thresholds)
    ge_pos, gt_pos = _counts_at(pos, thresholds)
    tpr = np.empty(2 * thresholds.size + 2)
    fpr = np.empty_like(tpr)
    tpr[0] = fpr[0] = 0.0
    tpr[1:-1:2] = gt_pos / n_pos
    tpr[2:-1:2] = ge_pos / n_pos
    fpr[1:-1:2] = (gt_all - gt_pos) / n_neg
    fpr[2:-1:2] = (ge_all - ge_pos) / n_neg
    tpr[-1] = fpr[-1] = 1.0
    return min(max(_trapezoid(fpr, tpr), 0.0), 1.0)


def evaluate_frame(frame: EvalFrame, options: MetricOptions = MetricOptions()) -> MetricReport:
    """Compute all six metrics for one frame.

    Degenerate inputs never abort the frame: the affected metric is reported
    as ``None`` with a reason in ``undefined`` so batch aggregation can count
    the exclusion.
    """
    undefined: dict[str, str] = {}
    values: dict[str, float] = {}
    flat_p = frame.predicted.values.ravel()
    flat_g = frame.ground_truth.values.ravel()
    n = flat_p.size
    # shared single-pass moments feed cc, nss and the normalizations
    sum_p = float(flat_p.sum())
    sum_g = float(flat_g.sum())
    dot_pp = float(flat_p @ flat_p)
    dot_gg = float(flat_g @ flat_g)
    dot_pg = float(flat_p @ flat_g)

    per_segment = None
    if sum_p <= 0.0 or sum_g <= 0.0:
        for name in ("sim", "kld", "osim"):
            undefined[name] = "zero_mass"
    else:
        pred_dist = frame.predicted.values / sum_p
        gt_dist = frame.ground_truth.values / sum_g
        values["kld"] = _kld_of(pred_dist, gt_dist, options.kld_epsilon)
        diff = pred_dist - gt_dist
        if options.include_per_segment or options.things_only:
            result = _osim_of(pred_dist, gt_dist, frame.panoptic, options.things_only)
            values["osim"] = result.value
            if options.include_per_segment:
                per_segment = result.per_segment
        else:
            values["osim"] = _osim_value(pred_dist, gt_dist, frame.panoptic, diff=diff)
        np.abs(diff, out=diff)
        values["sim"] = _sim_from_abs_diff(float(diff.sum()))

    try:
        values["cc"] = _cc_from_moments(n, sum_p, sum_g, dot_pp, dot_gg, dot_pg)
    except DegenerateInputError:
        undefined["cc"] = "zero_variance"
    if not frame.fixations.bits.any():
        undefined["nss"] = "no_fixations"
    else:
        try:
            values["nss"] = _nss_from_moments(
                frame.predicted.values, frame.fixations.bits, n, sum_p, dot_pp
            )
        except DegenerateInputError:
            undefined["nss"] = "zero_variance"

    if sum_p <= 0.0:
        # an absent prediction carries no ranking information
        undefined["auc"] = "zero_mass"
    else:
        try:
            values["auc"] = auc_judd(frame.predicted, frame.fixations)
        except EmptyFixationsError:
            undefined["auc"] = "no_fixations"
        except DegenerateInputError:
            undefined["auc"] = "all_fixated"

    return MetricReport(
        frame_id=frame.frame_id,
        cc=values.get("cc"),
        kld=values.get("kld"),
        auc=values.get("auc"),
        sim=values.get("sim"),
        nss=values.get("nss"),
        osim=values.get("osim"),
        undefined=undefined,
        per_segment=per_segment,
    )
