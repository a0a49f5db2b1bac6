"""ランダム閉集合の期待値：ODF 期待値・標本平均集合・Vorob'ev・距離平均（DA）。

どの推定量も実現の列から直接計算するか、集約量（平均 ODF・被覆関数・
平均測度）から計算する。モデルからの推定は実現を保持せず集約量を逐次加算する。
"""

import logging
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
import xarray as xr

from odfset import config
from odfset.errors import DegenerateSet, InvalidField
from odfset.grid import (
    BinaryMask,
    GridSpec,
    Polyline,
    ScalarField,
    Window,
    check_same_grid,
    lipschitz_excess,
    oriented_distance_field,
    stack_fields,
    sublevel_mask,
    validate_weights,
    weighted_mean_fields,
    zero_isocontour,
)
from odfset.parallel import map_ordered
from odfset.shapes import RandomSetModel, draw_parameters, render

logger = logging.getLogger(__name__)

ESTIMATORS = ("odf", "vorobev", "da")


# ── 型 ──────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SetEstimate:
    """集合の推定値。mask は source_field の threshold_used におけるレベル集合。

    estimator:
        odf / empirical / da   mask = {source_field ≤ threshold_used}
        vorobev / vorobev_quantile  mask = {coverage ≥ threshold_used}
    """

    mask: BinaryMask
    boundary: list[Polyline]
    source_field: ScalarField
    estimator: str
    threshold_used: float
    details: dict = dc_field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.mask.grid

    @property
    def measure(self) -> float:
        return self.mask.measure

    def manifest(self) -> dict:
        return {
            "schema_version": config.SCHEMA_VERSION,
            "estimator": self.estimator,
            "threshold_used": self.threshold_used,
            "measure": self.measure,
            "grid": self.grid.to_dict(),
            "details": self.details,
        }


@dataclass(frozen=True, eq=False)
class CoverageField:
    """被覆関数 p(x) = P(x ∈ A)。値は [0, 1]。"""

    field: ScalarField

    def __post_init__(self) -> None:
        v = self.field.values
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise InvalidField("coverage values must lie in [0, 1]")

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def levels(self) -> np.ndarray:
        """実際に現れる正の被覆値を降順で返す。"""
        attained = np.unique(self.values)
        return attained[attained > 0][::-1]

    def superlevel(self, level: float) -> BinaryMask:
        """励起集合 {p ≥ level}。"""
        return BinaryMask(self.grid, self.values >= level)


# ── ODF 期待値 ──────────────────────────────────────────

def _warn_non_lipschitz(fields: Sequence[ScalarField]) -> None:
    for i, f in enumerate(fields):
        excess = lipschitz_excess(f)
        if excess > config.LIPSCHITZ_TOLERANCE:
            logger.warning(
                "[expect] field %d is not 1-Lipschitz (excess %.3g); is it an ODF?", i, excess
            )


def odf_expectation_from_mean(
    mean_field: ScalarField,
    tolerance: float = config.ZERO_TOLERANCE,
    estimator: str = "odf",
    details: dict | None = None,
) -> SetEstimate:
    """平均 ODF のゼロ下位集合と、そのゼロ等値線。"""
    mask = sublevel_mask(mean_field, 0.0)
    boundary = zero_isocontour(mean_field, tolerance)
    logger.info(
        "[expect] %s: measure=%.6g, %d boundary polylines", estimator, mask.measure, len(boundary)
    )
    return SetEstimate(mask, boundary, mean_field, estimator, 0.0, details or {})


def odf_expectation(
    fields: Sequence[ScalarField],
    weights: Sequence[float] | None = None,
    *,
    check_lipschitz: bool = True,
    tolerance: float = config.ZERO_TOLERANCE,
) -> SetEstimate:
    """E[A] = {x : E b_A(x) ≤ 0}。weights は有限台の分布の確率。"""
    fields = list(fields)
    if check_lipschitz:
        _warn_non_lipschitz(fields)
    mean = weighted_mean_fields(fields, weights)
    return odf_expectation_from_mean(mean, tolerance, details={"m": len(fields)})


def empirical_mean_set(
    fields: Sequence[ScalarField],
    *,
    check_lipschitz: bool = True,
    tolerance: float = config.ZERO_TOLERANCE,
) -> SetEstimate:
    """標本平均集合 Ā_m：一様重みの ODF 期待値。"""
    fields = list(fields)
    if check_lipschitz:
        _warn_non_lipschitz(fields)
    mean = weighted_mean_fields(fields)
    return odf_expectation_from_mean(mean, tolerance, "empirical", {"m": len(fields)})


# ── 被覆関数・Vorob'ev 期待値 ───────────────────────────

def coverage(
    masks: Sequence[BinaryMask],
    weights: Sequence[float] | None = None,
) -> CoverageField:
    """各セルを含むマスクの（重み付き）割合。一様重みでは厳密に k/m。"""
    masks = list(masks)
    grid = check_same_grid(masks)
    if weights is None:
        counts = np.sum([m.bits for m in masks], axis=0, dtype=np.int64)
        values = counts / len(masks)
    else:
        w = validate_weights(weights, len(masks))
        stack = stack_fields([m.bits.astype(np.float64) for m in masks], grid)
        values = stack.weighted(xr.DataArray(w, dims="sample")).sum("sample").values
        values = np.clip(values, 0.0, 1.0)
    return CoverageField(ScalarField(grid, values))


def vorobev_from_coverage(
    cov: CoverageField,
    target_measure: float,
    tolerance: float = config.ZERO_TOLERANCE,
) -> SetEstimate:
    """被覆関数と平均測度 E λ(A) から Vorob'ev 期待値を求める。

    q は励起集合の測度が目標以上となる最大の被覆値。すぐ上の値の励起集合が
    空でなく、その不足量が q の超過量と等しいときはそちらを選ぶ（測度の同点）。
    """
    grid = cov.grid
    target = target_measure / grid.cell_area
    slack = config.MEASURE_RTOL * max(target, 1.0)
    levels = cov.levels()
    counts = np.array([int(np.count_nonzero(cov.values >= u)) for u in levels])

    if target <= slack or not len(levels):
        q = float(np.nextafter(levels[0] if len(levels) else 0.0, np.inf))
        mask = cov.superlevel(q)
        details = {"target_measure": target_measure, "measure_tie": False, "levels": len(levels)}
        logger.info("[expect] vorobev: zero target measure, empty estimate")
        return SetEstimate(mask, [], cov.field, "vorobev", q, details)

    idx = int(np.nonzero(counts >= target - slack)[0][0])
    tie = False
    if idx > 0:
        excess = counts[idx] - target
        deficit = target - counts[idx - 1]
        if abs(excess - deficit) <= slack:
            idx -= 1
            tie = True
    q = float(levels[idx])
    lower = float(levels[idx + 1]) if idx + 1 < len(levels) else 0.0
    mask = cov.superlevel(q)
    boundary = zero_isocontour(cov.field, tolerance, level=(q + lower) / 2.0)

    details = {
        "target_measure": target_measure,
        "measure_tie": tie,
        "levels": len(levels),
    }
    logger.info(
        "[expect] vorobev: q=%.6g measure=%.6g target=%.6g%s",
        q, mask.measure, target_measure, " (measure tie)" if tie else "",
    )
    return SetEstimate(mask, boundary, cov.field, "vorobev", q, details)


def vorobev_expectation(
    masks: Sequence[BinaryMask],
    weights: Sequence[float] | None = None,
    tolerance: float = config.ZERO_TOLERANCE,
) -> SetEstimate:
    """E_V[A]：測度が E λ(A) を挟む被覆関数の励起集合。"""
    masks = list(masks)
    cov = coverage(masks, weights)
    w = validate_weights(weights, len(masks))
    target = float(np.dot(w, [m.measure for m in masks]))
    return vorobev_from_coverage(cov, target, tolerance)


def vorobev_quantile(
    masks: Sequence[BinaryMask] | CoverageField,
    level: float,
    weights: Sequence[float] | None = None,
    tolerance: float = config.ZERO_TOLERANCE,
) -> SetEstimate:
    """level ∈ (0, 1] の励起集合 {p ≥ level}。"""
    if not 0.0 < level <= 1.0:
        raise InvalidField(f"quantile level must lie in (0, 1], got {level}")
    cov = masks if isinstance(masks, CoverageField) else coverage(masks, weights)
    mask = cov.superlevel(level)
    below = cov.values[cov.values < level]
    lower = float(below.max()) if below.size else 0.0
    boundary = zero_isocontour(cov.field, tolerance, level=(level + lower) / 2.0)
    return SetEstimate(mask, boundary, cov.field, "vorobev_quantile", float(level))


def vorobev_median(masks: Sequence[BinaryMask] | CoverageField, **kwargs) -> SetEstimate:
    """Vorob'ev 中央値 {p ≥ 1/2}。期待 L¹ 損失を最小にする。"""
    return vorobev_quantile(masks, 0.5, **kwargs)


# ── 距離平均（DA）期待値 ────────────────────────────────

def _lq_norm(diff: np.ndarray, q_norm: float, cell_area: float) -> float:
    if np.isinf(q_norm):
        return float(diff.max()) if diff.size else 0.0
    return float((np.sum(diff ** q_norm) * cell_area) ** (1.0 / q_norm))


def _da_candidates(window_values: np.ndarray) -> np.ndarray:
    return np.unique(np.append(window_values.ravel(), 0.0))


def _thinned_ranks(n: int, max_candidates: int, zero_rank: int) -> np.ndarray:
    ranks = np.round(np.linspace(0, n - 1, max_candidates)).astype(np.int64)
    return np.unique(np.append(ranks, zero_rank))


def distance_average_from_mean(
    mean_field: ScalarField,
    q_norm: float = config.DEFAULT_Q_NORM,
    window: Window | None = None,
    tolerance: float = config.ZERO_TOLERANCE,
    max_candidates: int | None = config.DA_MAX_CANDIDATES,
    threads: int | None = None,
) -> SetEstimate:
    """平均 ODF F のレベル集合のうち、自身の ODF が F に L^q で最も近いもの。

    候補しきい値はウィンドウ内の F の相異なる値と 0 で、既定ではすべてを走査する。
    全面 true / false になる候補は除外し、criterion が等しい候補は小さい s を採る。

    Args:
        mean_field: 平均 ODF F
        q_norm: criterion の L^q ノルム（q ≥ 1、np.inf 可）
        window: criterion を評価する部分矩形（既定: 格子全体）
        tolerance: 境界抽出のプラトー判定
        max_candidates: 指定時は順位で等間隔に間引いて粗く走査し、最良の順位の
            両隣の間にある候補をすべて走査し直す（None で全走査）
        threads: 候補評価の並列スレッド数

    Returns:
        estimator="da" の SetEstimate。details に q_norm・criterion・走査した候補数を記録

    Raises:
        InvalidField: q_norm < 1
        DegenerateSet: すべての候補が全面 true / false になる
    """
    if not q_norm >= 1.0:
        raise InvalidField(f"q_norm must be >= 1, got {q_norm}")
    if max_candidates is not None and max_candidates < 2:
        raise InvalidField(f"max_candidates must be >= 2, got {max_candidates}")
    grid = mean_field.grid
    window = window or Window(0, grid.dims[0], 0, grid.dims[1])
    rs, cs = window.slices(grid)
    target = mean_field.values[rs, cs]
    candidates = _da_candidates(target)
    n = len(candidates)

    def _criterion(s: float) -> float | None:
        mask = sublevel_mask(mean_field, s)
        if mask.is_degenerate:
            return None
        b = oriented_distance_field(mask).values[rs, cs]
        return _lq_norm(np.abs(b - target), q_norm, grid.cell_area)

    scores: dict[int, float | None] = {}

    def _scan(ranks) -> None:
        ranks = [int(k) for k in ranks if int(k) not in scores]
        scores.update(zip(ranks, map_ordered(_criterion, candidates[ranks], threads)))

    def _best() -> int | None:
        # 順位の昇順に見るので、同点なら小さい s が残る
        best = None
        for k in sorted(scores):
            if scores[k] is not None and (best is None or scores[k] < scores[best]):
                best = k
        return best

    thinned = max_candidates is not None and n > max_candidates
    if thinned:
        coarse = _thinned_ranks(n, max_candidates, int(np.searchsorted(candidates, 0.0)))
        _scan(coarse)
        best = _best()
        if best is not None:
            pos = int(np.searchsorted(coarse, best))
            lo = coarse[pos - 1] if pos > 0 else 0
            hi = coarse[pos + 1] if pos + 1 < len(coarse) else n - 1
            _scan(range(lo, hi + 1))
        logger.warning(
            "[expect] da: thinned %d candidate thresholds, scanned %d", n, len(scores)
        )
    else:
        _scan(range(n))

    skipped = sum(score is None for score in scores.values())
    if skipped:
        logger.warning("[expect] da: skipped %d degenerate candidate levels", skipped)
    best = _best()
    if best is None:
        raise DegenerateSet("every distance-average candidate level set is degenerate")
    best_s, best_score = float(candidates[best]), scores[best]

    mask = sublevel_mask(mean_field, best_s)
    boundary = zero_isocontour(mean_field, tolerance, level=best_s)
    details = {
        "q_norm": q_norm,
        "criterion": best_score,
        "candidates": n,
        "scanned": len(scores),
        "skipped": skipped,
        "window": [window.row0, window.row1, window.col0, window.col1],
    }
    logger.info("[expect] da: s=%.6g criterion=%.6g measure=%.6g", best_s, best_score, mask.measure)
    return SetEstimate(mask, boundary, mean_field, "da", best_s, details)


def distance_average_expectation(
    fields: Sequence[ScalarField],
    q_norm: float = config.DEFAULT_Q_NORM,
    window: Window | None = None,
    weights: Sequence[float] | None = None,
    **kwargs,
) -> SetEstimate:
    """E_DA[A]：代表関数を ODF に固定した距離平均期待値。"""
    mean = weighted_mean_fields(list(fields), weights)
    return distance_average_from_mean(mean, q_norm, window, **kwargs)


def expected_boundary(
    estimate: SetEstimate,
    tolerance: float = config.ZERO_TOLERANCE,
) -> list[Polyline]:
    """E[∂A] = {x : E b_A(x) = threshold}。面領域（プラトー）は外周ループで返す。

    Vorob'ev 系の推定値は被覆関数の段差上の境界をそのまま返す。
    """
    if estimate.estimator.startswith("vorobev"):
        return list(estimate.boundary)
    return zero_isocontour(estimate.source_field, tolerance, level=estimate.threshold_used)


# ── モデルからの集約 ────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ModelAggregate:
    """m 個の実現から逐次加算した平均 ODF・被覆関数・平均測度。"""

    grid: GridSpec
    m: int
    mean_odf: ScalarField
    coverage: CoverageField
    mean_measure: float


def aggregate_model(
    model: RandomSetModel,
    m: int,
    grid: GridSpec,
    chunk: int = 64,
    threads: int | None = None,
) -> ModelAggregate:
    """モデルの実現を chunk ずつ描画して加算する。加算順は draw 番号順で固定。"""
    odf_sum = np.zeros(grid.dims)
    counts = np.zeros(grid.dims, dtype=np.int64)
    measure_sum = 0
    for start in range(0, m, chunk):
        n = min(chunk, m - start)
        thetas = draw_parameters(model, n, start)
        rendered = map_ordered(lambda t: render(model.shape_at(t), grid), thetas, threads)
        for mask, odf in rendered:
            odf_sum += odf.values
            counts += mask.bits
            measure_sum += mask.count
    logger.info("[expect] aggregated %d realizations of %s on %s", m, model.family, grid.dims)
    return ModelAggregate(
        grid=grid,
        m=m,
        mean_odf=ScalarField(grid, odf_sum / m),
        coverage=CoverageField(ScalarField(grid, counts / m)),
        mean_measure=measure_sum * grid.cell_area / m,
    )


def estimate_from_aggregate(
    agg: ModelAggregate,
    estimator: str = "odf",
    *,
    q_norm: float = config.DEFAULT_Q_NORM,
    window: Window | None = None,
    tolerance: float = config.ZERO_TOLERANCE,
    max_candidates: int | None = config.DA_MAX_CANDIDATES,
    threads: int | None = None,
) -> SetEstimate:
    if estimator == "odf":
        return odf_expectation_from_mean(agg.mean_odf, tolerance, details={"m": agg.m})
    if estimator == "vorobev":
        return vorobev_from_coverage(agg.coverage, agg.mean_measure, tolerance)
    if estimator == "da":
        return distance_average_from_mean(
            agg.mean_odf, q_norm, window, tolerance, max_candidates, threads
        )
    raise InvalidField(f"unknown estimator {estimator!r}; valid: {list(ESTIMATORS)}")
