"""推定集合と真の集合の損失・距離。

積分はすべてセル和（セル面積 spacing² を掛ける）で、格子の測度規約と揃える。
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from odfset import config
from odfset.errors import EmptyBoundary, InvalidField
from odfset.grid import (
    BinaryMask,
    Polyline,
    ScalarField,
    Window,
    check_same_grid,
    oriented_distance_field,
    zero_isocontour,
)

logger = logging.getLogger(__name__)

# CSV 1 行の列順
REPORT_COLUMNS = (
    "symmetric_difference_area",
    "lq_char_distance",
    "l2_odf_distance",
    "misclassification_fraction",
    "hausdorff_boundary",
)


@dataclass(frozen=True)
class MetricReport:
    symmetric_difference_area: float
    lq_char_distance: float
    l2_odf_distance: float
    misclassification_fraction: float
    hausdorff_boundary: float

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not value >= 0:
                raise InvalidField(f"{name} must be nonnegative, got {value}")
        if self.misclassification_fraction > 1.0:
            raise InvalidField("misclassification fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_row(self) -> list[float]:
        return [getattr(self, name) for name in REPORT_COLUMNS]


def symmetric_difference(a: BinaryMask, b: BinaryMask) -> float:
    """λ(A Δ B) = XOR セル数 × spacing²。"""
    grid = check_same_grid([a, b])
    return int(np.count_nonzero(a.bits ^ b.bits)) * grid.cell_area


def lq_char_distance(a: BinaryMask, b: BinaryMask, q: float = 1.0) -> float:
    """‖χ_A − χ_B‖_{L^q}。|χ_A − χ_B| ∈ {0, 1} なので q 乗は対称差の測度に一致する。"""
    if not q >= 1.0:
        raise InvalidField(f"q must be >= 1, got {q}")
    grid = check_same_grid([a, b])
    diff = (a.bits ^ b.bits).astype(np.float64)
    return float((np.sum(diff ** q) * grid.cell_area) ** (1.0 / q))


def l2_odf_distance(a: ScalarField, b: ScalarField, window: Window | None = None) -> float:
    """(∫_W |b_A − b_B|² dx)^{1/2}。"""
    grid = check_same_grid([a, b])
    diff = a.values - b.values
    if window is not None:
        diff = diff[window.slices(grid)]
    return float(np.sqrt(np.sum(diff * diff) * grid.cell_area))


def hausdorff_boundary(
    p: Sequence[Polyline],
    q: Sequence[Polyline],
    spacing: float = 1.0,
) -> float:
    """境界折れ線の対称ハウスドルフ距離。各辺を spacing/2 間隔で細分した点集合で測る。"""
    if not p or not q:
        raise EmptyBoundary("Hausdorff distance needs two non-empty boundaries")
    step = spacing / 2.0
    u = np.vstack([line.densify(step) for line in p])
    v = np.vstack([line.densify(step) for line in q])
    return float(max(directed_hausdorff(u, v)[0], directed_hausdorff(v, u)[0]))


def compare(
    truth: BinaryMask,
    estimate: BinaryMask,
    q: float = 1.0,
    window: Window | None = None,
) -> MetricReport:
    """真の集合と推定集合の MetricReport。ODF・境界はマスクから計算する。

    どちらかが全面 true / false のとき ODF 距離と境界距離は inf。
    """
    grid = check_same_grid([truth, estimate])
    sd = symmetric_difference(truth, estimate)

    if truth.is_degenerate or estimate.is_degenerate:
        logger.warning("[metrics] degenerate mask; ODF and boundary distances set to inf")
        l2 = hausdorff = math.inf
    else:
        b_truth = oriented_distance_field(truth)
        b_est = oriented_distance_field(estimate)
        l2 = l2_odf_distance(b_truth, b_est, window)
        hausdorff = hausdorff_boundary(
            zero_isocontour(b_truth, config.ZERO_TOLERANCE),
            zero_isocontour(b_est, config.ZERO_TOLERANCE),
            grid.spacing,
        )

    report = MetricReport(
        symmetric_difference_area=sd,
        lq_char_distance=lq_char_distance(truth, estimate, q),
        l2_odf_distance=l2,
        misclassification_fraction=sd / grid.total_area,
        hausdorff_boundary=hausdorff,
    )
    logger.debug("[metrics] %s", report)
    return report
