"""Composite training objective over attention maps, with analytic gradients.

The total is a weighted sum of six terms (kld, cc, sim, nss, mse, osim);
negative weights on the similarity-style terms turn their maximization into
minimization of the total. Values reuse the metric kernels unchanged.

Gradients are taken with respect to the raw predicted map. Terms that see
the prediction through unit-sum normalization (kld, sim, mse by default,
osim) pick up the normalization Jacobian: with s = sum(p) and q = p / s,
d f / d p_j = (d f / d q_j - <d f / d q, q>) / s. The min() in sim and osim
is piecewise linear; at an exact tie both sides receive subgradient 0.5,
which also matches what a central difference sees there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import metrics
from .core import BinaryFixationMap, PanopticMap, SaliencyMap
from .errors import DegenerateInputError, EmptyFixationsError, ShapeError

TERM_ORDER = ("kld", "cc", "sim", "nss", "mse", "osim")


@dataclass(frozen=True)
class LossWeights:
    """Weighting coefficients of the six loss terms."""

    lambda_kld: float = 10.0
    lambda_cc: float = -2.0
    lambda_sim: float = -1.0
    lambda_nss: float = -1.0
    lambda_mse: float = 1.0
    lambda_osim: float = -1.0

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not np.isfinite(value):
                raise ValueError(f"loss weight for {name} must be finite")

    def as_dict(self) -> dict[str, float]:
        return {
            "kld": self.lambda_kld,
            "cc": self.lambda_cc,
            "sim": self.lambda_sim,
            "nss": self.lambda_nss,
            "mse": self.lambda_mse,
            "osim": self.lambda_osim,
        }


@dataclass(frozen=True)
class TermValue:
    raw_value: float
    weighted: float


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss plus the raw and weighted value of every term."""

    total: float
    per_term: Mapping[str, TermValue]


def _check_inputs(
    predicted: SaliencyMap,
    ground_truth: SaliencyMap,
    fixations: BinaryFixationMap,
    panoptic: PanopticMap,
) -> None:
    shapes = {
        "predicted": predicted.shape,
        "ground_truth": ground_truth.shape,
        "fixations": fixations.shape,
        "panoptic": panoptic.shape,
    }
    if len(set(shapes.values())) != 1:
        raise ShapeError(f"loss inputs disagree on shape: {shapes}")
    if predicted.total <= 0.0 or ground_truth.total <= 0.0:
        raise DegenerateInputError("loss needs maps with positive mass")
    if float(predicted.values.std()) == 0.0 or float(ground_truth.values.std()) == 0.0:
        raise DegenerateInputError("loss needs maps with positive variance")


def combined_loss(
    predicted_raw: SaliencyMap,
    ground_truth: SaliencyMap,
    fixations: BinaryFixationMap,
    panoptic: PanopticMap,
    weights: LossWeights = LossWeights(),
    *,
    kld_epsilon: float = metrics.DEFAULT_KLD_EPSILON,
    mse_on_raw: bool = False,
) -> LossBreakdown:
    """Evaluate the weighted six-term objective on one frame.

    ``mse_on_raw`` switches the mean-squared-error term from unit-sum
    normalized maps (the default, keeping all terms on comparable scale)
    to the raw pixel values.
    """
    _check_inputs(predicted_raw, ground_truth, fixations, panoptic)
    if mse_on_raw:
        diff = predicted_raw.values - ground_truth.values
    else:
        diff = (
            predicted_raw.values / predicted_raw.total
            - ground_truth.values / ground_truth.total
        )
    values = {
        "kld": metrics.kld(predicted_raw, ground_truth, kld_epsilon),
        "cc": metrics.cc(predicted_raw, ground_truth),
        "sim": metrics.sim(predicted_raw, ground_truth),
        "nss": metrics.nss(predicted_raw, fixations),
        "mse": float((diff * diff).mean()),
        "osim": metrics.osim(predicted_raw, ground_truth, panoptic).value,
    }
    weight = weights.as_dict()
    per_term = {
        name: TermValue(values[name], weight[name] * values[name]) for name in TERM_ORDER
    }
    total = 0.0
    for name in TERM_ORDER:
        total += per_term[name].weighted
    return LossBreakdown(total, per_term)


def _tie_aware_indicator(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """1 where lhs < rhs, 0 where lhs > rhs, 0.5 at exact ties."""
    return np.where(lhs < rhs, 1.0, np.where(lhs > rhs, 0.0, 0.5))


def grad_combined_loss(
    predicted_raw: SaliencyMap,
    ground_truth: SaliencyMap,
    fixations: BinaryFixationMap,
    panoptic: PanopticMap,
    weights: LossWeights = LossWeights(),
    *,
    kld_epsilon: float = metrics.DEFAULT_KLD_EPSILON,
    mse_on_raw: bool = False,
) -> np.ndarray:
    """Analytic gradient of :func:`combined_loss` w.r.t. every raw pixel."""
    _check_inputs(predicted_raw, ground_truth, fixations, panoptic)
    p = predicted_raw.values
    g = ground_truth.values
    n = p.size
    s_p = float(p.sum())
    s_g = float(g.sum())
    phat = p / s_p
    ghat = g / s_g
    w = weights

    # terms seen through unit-sum normalization: accumulate d/dq first
    grad_q = np.zeros_like(p)
    if w.lambda_kld != 0.0:
        denom = phat + kld_epsilon
        ratio = ghat / denom
        grad_q += w.lambda_kld * (-(ghat * ghat) / (denom * denom * (ratio + kld_epsilon)))
    if w.lambda_sim != 0.0:
        grad_q += w.lambda_sim * _tie_aware_indicator(phat, ghat)
    if w.lambda_mse != 0.0 and not mse_on_raw:
        grad_q += w.lambda_mse * 2.0 * (phat - ghat) / n
    if w.lambda_osim != 0.0:
        flat = panoptic.segment_ids.ravel()
        uniq, inverse = np.unique(flat, return_inverse=True)
        pred_mass = np.bincount(inverse, weights=phat.ravel())
        gt_mass = np.bincount(inverse, weights=ghat.ravel())
        indicator = _tie_aware_indicator(pred_mass, gt_mass)
        grad_q += w.lambda_osim * indicator[inverse].reshape(p.shape)
    grad = (grad_q - float(np.vdot(grad_q, phat))) / s_p

    # terms evaluated directly on the raw map
    if w.lambda_cc != 0.0:
        pc = p - p.mean()
        gc = g - g.mean()
        pvar = float(np.vdot(pc, pc))
        gvar = float(np.vdot(gc, gc))
        cov = float(np.vdot(pc, gc))
        denom = float(np.sqrt(pvar * gvar))
        grad += w.lambda_cc * (gc - (cov / pvar) * pc) / denom
    if w.lambda_nss != 0.0:
        bits = fixations.bits
        n_fix = int(bits.sum())
        if n_fix == 0:
            raise EmptyFixationsError("NSS term needs at least one fixation")
        mu = float(p.mean())
        sigma = float(p.std())
        nss_val = float(((p - mu) / sigma)[bits].mean())
        grad += w.lambda_nss * (
            (bits.astype(np.float64) - n_fix / n) / (n_fix * sigma)
            - nss_val * (p - mu) / (n * sigma * sigma)
        )
    if w.lambda_mse != 0.0 and mse_on_raw:
        grad += w.lambda_mse * 2.0 * (p - g) / n
    return grad


def fd_gradient(
    func: Callable[[np.ndarray], float],
    values: np.ndarray,
    step: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a grid.

    Serves as the independent oracle for :func:`grad_combined_loss`; it
    never shares code with the analytic path.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    base = np.array(values, dtype=np.float64)
    grad = np.empty_like(base)
    flat = base.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        hi = func(base)
        flat[i] = original - step
        lo = func(base)
        flat[i] = original
        out[i] = (hi - lo) / (2.0 * step)
    return grad
