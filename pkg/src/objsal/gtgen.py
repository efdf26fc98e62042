"""Ground-truth attention map synthesis from gaze fixation history.

A map is the superposition of isotropic Gaussians centred on the most
recent fixations (a configurable window, default 3), truncated at a
radius of a few standard deviations and unit-sum normalized over the
image. The Gaussian width is given in degrees of visual angle and
converted to pixels with a dataset-supplied pixels-per-degree factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .core import FixationSet, SaliencyMap, normalize_unit_sum, round_to_pixel
from .errors import BoundsError, ConfigError, EmptyFixationsError


def dva_to_pixels(sigma_dva: float, pixels_per_degree: float) -> float:
    """Convert a width in degrees of visual angle to pixels."""
    if sigma_dva <= 0.0 or pixels_per_degree <= 0.0:
        raise ConfigError("sigma_dva and pixels_per_degree must be positive")
    return sigma_dva * pixels_per_degree


@dataclass(frozen=True)
class GtGenConfig:
    """Parameters of ground-truth map synthesis.

    ``pixels_per_degree`` has no sensible universal default because it
    depends on the recording optics and the stored frame resolution, so it
    is required.
    """

    pixels_per_degree: float
    fixation_window: int = 3
    sigma_dva: float = 3.0
    truncation_radius: float = 4.0

    def __post_init__(self) -> None:
        if self.pixels_per_degree <= 0.0:
            raise ConfigError("pixels_per_degree must be positive")
        if self.fixation_window < 1:
            raise ConfigError("fixation_window must be at least 1")
        if self.sigma_dva <= 0.0:
            raise ConfigError("sigma_dva must be positive")
        if self.truncation_radius <= 0.0:
            raise ConfigError("truncation_radius must be positive")

    @property
    def sigma_px(self) -> float:
        return dva_to_pixels(self.sigma_dva, self.pixels_per_degree)


def render_ground_truth(
    fixations: FixationSet,
    config: GtGenConfig,
    width: int,
    height: int,
) -> SaliencyMap:
    """Render the most recent fixations as a unit-sum Gaussian mixture.

    Only the last ``config.fixation_window`` fixations contribute, all with
    equal weight. Each Gaussian is cut off beyond
    ``config.truncation_radius`` standard deviations; mass lost at image
    borders is not reflected, the final unit-sum normalization absorbs it.
    """
    if len(fixations) == 0:
        raise EmptyFixationsError("cannot render a map from zero fixations")
    window = fixations.points[-config.fixation_window:]
    sigma = config.sigma_px
    radius = config.truncation_radius * sigma
    reach = int(ceil(radius))

    accumulated = np.zeros((height, width), dtype=np.float64)
    for x, y in window:
        col, row = round_to_pixel(x, y)
        if not (0 <= col < width and 0 <= row < height):
            raise BoundsError(
                f"fixation ({x}, {y}) outside {width}x{height} image bounds"
            )
        x0, x1 = max(col - reach, 0), min(col + reach, width - 1)
        y0, y1 = max(row - reach, 0), min(row + reach, height - 1)
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - col
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - row
        dist_sq = dy[:, None] ** 2 + dx[None, :] ** 2
        patch = np.exp(-dist_sq / (2.0 * sigma * sigma))
        patch[dist_sq > radius * radius] = 0.0
        accumulated[y0 : y1 + 1, x0 : x1 + 1] += patch

    return normalize_unit_sum(SaliencyMap(accumulated))
