"""モンテカルロ一致性実験と画像平均パイプライン。

各実験は ExperimentReport（設定のエコー・集計行・成果物）を返し、
export.write_experiment がディレクトリに書き出す。反復 k の乱数は
SeedSequence(seed, spawn_key=(...)) から導くため、実行順やスレッド数に依存しない。
"""

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
import pandas as pd

from odfset import config
from odfset.errors import BadConfig, OdfsetError, UnknownExperiment
from odfset.expectations import (
    SetEstimate,
    distance_average_expectation,
    odf_expectation,
    odf_expectation_from_mean,
    vorobev_expectation,
)
from odfset.grid import (
    BinaryMask,
    GridSpec,
    ScalarField,
    Window,
    check_same_grid,
    oriented_distance_field,
    zero_isocontour,
)
from odfset.metrics import MetricReport, compare
from odfset.parallel import map_ordered
from odfset.shapes import (
    Bernoulli,
    Law,
    RandomSetModel,
    UNIFORMS_PER_DRAW,
    Uniform,
    expected_odf_field,
    law_from_dict,
    separable_decomposition,
)

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["median", "q25", "q75"]

# 残差画像の画素値
RESIDUAL_FALSE_POSITIVE = 0     # 推定 ∖ 真
RESIDUAL_FALSE_NEGATIVE = 128   # 真 ∖ 推定
RESIDUAL_AGREEMENT      = 255


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """rows の先頭列はパラメータ列（m など）と median, q25, q75。

    artifacts はファイル名 → 書き出し対象（BinaryMask / ScalarField /
    Polyline のリスト / DataFrame / uint8 画像配列）。
    """

    name: str
    config: dict
    rows: pd.DataFrame
    artifacts: dict = dc_field(default_factory=dict)


def _replicate_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _summarize(values: np.ndarray) -> dict:
    q25, median, q75 = np.percentile(values, [25, 50, 75])
    return {"median": float(median), "q25": float(q25), "q75": float(q75)}


def _law_label(law: Law) -> str:
    if isinstance(law, Uniform):
        return f"uniform({law.low[0]:g},{law.high[0]:g})"
    return f"{law.type}({','.join(f'{v:g}' for v in law.mean())})"


def _draw(law: Law, rng: np.random.Generator, m: int) -> np.ndarray:
    return law.transform(rng.random((m, UNIFORMS_PER_DRAW)))[:, 0]


# ── 半径比（標本平均集合の一致性）─────────────────────

def radius_ratio_experiment(
    law: Law,
    m_values: Sequence[int] = config.DEFAULT_M_VALUES,
    reps: int = config.DEFAULT_REPS,
    seed: int = config.DEFAULT_SEED,
) -> ExperimentReport:
    """半径 Θ の円板の標本平均集合は半径 Θ̄_m の円板になる。Θ̄_m / EΘ の分布を m ごとに集計する。"""
    if reps < 1:
        raise BadConfig(f"reps must be >= 1, got {reps}")
    expected = float(law.mean()[0])
    if not expected > 0:
        raise BadConfig(f"radius law must have a positive mean, got {expected}")
    if any(int(m) < 1 for m in m_values):
        raise BadConfig(f"m_values must be >= 1, got {list(m_values)}")
    sd = float(law.sd()[0]) if isinstance(law, Uniform) else 0.0

    rows, samples = [], []
    for m in m_values:
        ratios = np.array([
            _draw(law, _replicate_rng(seed, m, rep), m).mean() / expected for rep in range(reps)
        ])
        row = {"m": int(m), **_summarize(ratios)}
        row["median_abs_dev"] = float(np.median(np.abs(ratios - 1.0)))
        row["se"] = sd / expected / math.sqrt(m)
        row["law"] = _law_label(law)
        rows.append(row)
        samples.append(pd.DataFrame({"law": row["law"], "m": int(m), "rep": np.arange(reps), "ratio": ratios}))
        logger.info("[experiment] radius-ratio %s m=%d: median=%.6f", row["law"], m, row["median"])

    cfg = {"law": law.to_dict(), "m_values": list(m_values), "reps": reps, "seed": seed}
    return ExperimentReport("radius-ratio", cfg, pd.DataFrame(rows), {"samples.csv": pd.concat(samples)})


# ── 境界角の差（分離形からの復元）────────────────────

def _fit_line_angle(vertices: np.ndarray) -> float:
    """原点を通る直線を SVD で当てはめ、x₁ 軸からの角度を (−π/2, π/2] で返す。"""
    _, _, vt = np.linalg.svd(vertices, full_matrices=False)
    dx, dy = vt[0]
    if dx == 0.0:
        return math.pi / 2.0
    angle = math.atan(dy / dx)
    return math.pi / 2.0 if angle == -math.pi / 2.0 else angle


def mean_angle_from_field(thetas: np.ndarray, grid: GridSpec) -> float:
    """上半平面の平均 ODF を分離形 hᵀ(x)·mean g(θ) で描き、ゼロ等値線の傾きから角度を得る。"""
    decomp = separable_decomposition("upper_half_plane")
    mean_g = decomp.g_vector(thetas).mean(axis=0)
    field = ScalarField(grid, decomp.h_matrix(grid.points()) @ mean_g)
    polylines = zero_isocontour(field)
    vertices = np.vstack([line.vertices for line in polylines])
    return _fit_line_angle(vertices)


def angle_diff_experiment(
    law: Law,
    m_values: Sequence[int] = config.DEFAULT_M_VALUES,
    reps: int = config.DEFAULT_REPS,
    seed: int = config.DEFAULT_SEED,
    grid_dims: int = config.ANGLE_GRID_DIMS,
) -> ExperimentReport:
    """標本平均集合の境界角 θ̂_m と (a+b)/2 の差を m ごとに集計する。"""
    if reps < 1:
        raise BadConfig(f"reps must be >= 1, got {reps}")
    if any(int(m) < 1 for m in m_values):
        raise BadConfig(f"m_values must be >= 1, got {list(m_values)}")
    grid = GridSpec.centered((0.0, 0.0), 1.0, grid_dims)
    center = float(law.mean()[0])

    rows = []
    for m in m_values:
        diffs = np.array([
            mean_angle_from_field(_draw(law, _replicate_rng(seed, m, rep), m), grid) - center
            for rep in range(reps)
        ])
        row = {"m": int(m), **_summarize(diffs)}
        row["median_abs_diff"] = float(np.median(np.abs(diffs)))
        row["law"] = _law_label(law)
        rows.append(row)
        logger.info("[experiment] angle-diff %s m=%d: median=%.3g", row["law"], m, row["median"])

    cfg = {"law": law.to_dict(), "m_values": list(m_values), "reps": reps, "seed": seed, "grid_dims": grid_dims}
    return ExperimentReport("angle-diff", cfg, pd.DataFrame(rows))


# ── 明滅する円板の等値線 ────────────────────────────────

def fit_conic_semi_axes(vertices: np.ndarray) -> tuple[float, float]:
    """一般二次曲線を SVD で当てはめ、楕円の (長半径, 短半径) を返す。楕円でなければ (nan, nan)。"""
    x, y = vertices[:, 0], vertices[:, 1]
    design = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
    _, _, vt = np.linalg.svd(design, full_matrices=False)
    a, b, c, d, e, f = vt[-1]
    quad = np.array([[a, b / 2.0], [b / 2.0, c]])
    if np.linalg.det(quad) <= 0:
        return math.nan, math.nan
    x0, y0 = np.linalg.solve(2.0 * quad, [-d, -e])
    f0 = f + (d * x0 + e * y0) / 2.0
    eig = np.linalg.eigvalsh(quad)
    axes = np.sqrt(-f0 / eig)
    return float(axes.max()), float(axes.min())


def flashing_disc_contours(
    p: float,
    r: float,
    a_values: Sequence[float],
    levels: Sequence[float] = (0.0,),
    grid: GridSpec | None = None,
) -> ExperimentReport:
    """E b = p|x| + (1−p)|x−a| − r の c 等値線（焦点 0, a のデカルトの卵形線）を抽出して検証する。

    a は x₁ 軸上 (|a|, 0) に置く。検証列は頂点ごとの |p|x| + (1−p)|x−a| − r − c|。
    """
    if not 0.0 <= p <= 1.0:
        raise BadConfig(f"p must lie in [0, 1], got {p}")
    if grid is None:
        reach = max(a_values) / 2.0 + r + max(levels) + 0.5
        grid = GridSpec.centered((max(a_values) / 2.0, 0.0), reach, 256)

    rows, artifacts = [], {}
    for a_norm in a_values:
        a = np.array([float(a_norm), 0.0])
        model = RandomSetModel("flashing_disc", Bernoulli(p), params={"a": list(a), "r": r})
        field = expected_odf_field(model, grid)
        artifacts[f"field_a{a_norm:g}.csv"] = field
        for level in levels:
            polylines = zero_isocontour(field, level=level)
            row = {"a_norm": float(a_norm), "level": float(level), "p": p}
            if polylines:
                vertices = np.vstack([line.vertices for line in polylines])
                residual = np.abs(
                    p * np.hypot(vertices[:, 0], vertices[:, 1])
                    + (1.0 - p) * np.hypot(vertices[:, 0] - a[0], vertices[:, 1] - a[1])
                    - r - level
                )
                row.update(_summarize(residual))
                row["max_residual"] = float(residual.max())
                row["n_vertices"] = len(vertices)
                row["semimajor"] = fit_conic_semi_axes(vertices)[0] if p == 0.5 else math.nan
                artifacts[f"contours_a{a_norm:g}_c{level:g}.csv"] = polylines
            else:
                row.update({"median": math.nan, "q25": math.nan, "q75": math.nan})
                row.update({"max_residual": math.nan, "n_vertices": 0, "semimajor": math.nan})
            row["n_contours"] = len(polylines)
            rows.append(row)
            logger.info(
                "[experiment] flashing-discs p=%g |a|=%g c=%g: %d contours",
                p, a_norm, level, len(polylines),
            )

    df = pd.DataFrame(rows)
    df = df[["a_norm", *SUMMARY_COLUMNS, "level", "p", "n_contours", "n_vertices", "max_residual", "semimajor"]]
    cfg = {"p": p, "r": r, "a_values": list(a_values), "levels": list(levels), "grid": grid.to_dict()}
    return ExperimentReport("flashing-discs", cfg, df, artifacts)


# ── 画像平均パイプライン ────────────────────────────────

FONT_5X7 = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "B": ("11110", "10001", "10001", "11110", "10001", "10001", "11110"),
    "C": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "D": ("11110", "10001", "10001", "10001", "10001", "10001", "11110"),
    "E": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "F": ("11111", "10000", "10000", "11110", "10000", "10000", "10000"),
    "G": ("01110", "10001", "10000", "10111", "10001", "10001", "01111"),
    "H": ("10001", "10001", "10001", "11111", "10001", "10001", "10001"),
    "I": ("01110", "00100", "00100", "00100", "00100", "00100", "01110"),
    "J": ("00111", "00010", "00010", "00010", "00010", "10010", "01100"),
    "K": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "M": ("10001", "11011", "10101", "10101", "10001", "10001", "10001"),
    "N": ("10001", "11001", "10101", "10011", "10001", "10001", "10001"),
    "O": ("01110", "10001", "10001", "10001", "10001", "10001", "01110"),
    "P": ("11110", "10001", "10001", "11110", "10000", "10000", "10000"),
    "Q": ("01110", "10001", "10001", "10001", "10101", "10010", "01101"),
    "R": ("11110", "10001", "10001", "11110", "10100", "10010", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "V": ("10001", "10001", "10001", "10001", "10001", "01010", "00100"),
    "W": ("10001", "10001", "10001", "10101", "10101", "10101", "01010"),
    "X": ("10001", "10001", "01010", "00100", "01010", "10001", "10001"),
    "Y": ("10001", "10001", "01010", "00100", "00100", "00100", "00100"),
    "Z": ("11111", "00001", "00010", "00100", "01000", "10000", "11111"),
    " ": ("00000",) * 7,
}


def synthetic_text_mask(text: str = "ODF SET", scale: int = 3, margin: int = 4) -> BinaryMask:
    """5×7 のブロック文字で text を描いた真の集合（spacing 1、原点 (0, 0)）。

    行 0 が画像の最上段になる（PGM と同じ向き）。
    """
    glyphs = []
    for ch in text.upper():
        if ch not in FONT_5X7:
            raise BadConfig(f"character {ch!r} is not in the block font")
        glyph = np.array([[c == "1" for c in line] for line in FONT_5X7[ch]])
        glyphs.extend([glyph, np.zeros((7, 1), dtype=bool)])
    bits = np.hstack(glyphs[:-1]) if glyphs else np.zeros((7, 1), dtype=bool)
    bits = np.kron(bits, np.ones((scale, scale), dtype=bool))
    bits = np.pad(bits, margin)
    return BinaryMask(GridSpec(dims=bits.shape), bits)


def noisy_realization_generator(
    truth: BinaryMask,
    flip_prob: float = config.DEFAULT_FLIP_PROB,
    m: int = config.DEFAULT_IMAGE_M,
    seed: int = config.DEFAULT_SEED,
    stream: int = 0,
) -> list[BinaryMask]:
    """各セルを確率 flip_prob で独立に反転させた m 枚。

    k 枚目は (seed, stream, k) だけで決まるので、m を増やしても先頭は変わらない。
    """
    if not 0.0 <= flip_prob < 0.5:
        raise BadConfig(f"flip_prob must lie in [0, 0.5), got {flip_prob}")
    realizations = []
    for k in range(m):
        flips = _replicate_rng(seed, stream, k).random(truth.grid.dims) < flip_prob
        realizations.append(BinaryMask(truth.grid, truth.bits ^ flips))
    return realizations


def residual_image(truth: BinaryMask, estimate: BinaryMask) -> np.ndarray:
    """推定 ∖ 真 = 黒（0）、真 ∖ 推定 = 灰（128）、一致 = 白（255）の uint8 画像。"""
    check_same_grid([truth, estimate])
    image = np.full(truth.grid.dims, RESIDUAL_AGREEMENT, dtype=np.uint8)
    image[estimate.bits & ~truth.bits] = RESIDUAL_FALSE_POSITIVE
    image[truth.bits & ~estimate.bits] = RESIDUAL_FALSE_NEGATIVE
    return image


@dataclass(frozen=True, eq=False)
class EstimatorOutcome:
    estimate: SetEstimate
    report: MetricReport
    residual: np.ndarray


@dataclass(frozen=True, eq=False)
class ImageAveragingResult:
    outcomes: dict
    single_realization_misclassification: float


def image_averaging_pipeline(
    truth: BinaryMask,
    realizations: Sequence[BinaryMask],
    estimators: Sequence[str] = ("odf", "vorobev", "da"),
    q_norm: float = config.DEFAULT_Q_NORM,
    window: Window | None = None,
    threads: int | None = None,
) -> ImageAveragingResult:
    """ノイズ入りの実現から各推定量で真の集合を復元し、誤分類率などで採点する。"""
    realizations = list(realizations)
    check_same_grid([truth, *realizations])
    single = float(np.mean([compare(truth, r).misclassification_fraction for r in realizations]))

    fields = None
    if {"odf", "da"} & set(estimators):
        fields = map_ordered(oriented_distance_field, realizations, threads)

    outcomes = {}
    for name in estimators:
        if name == "odf":
            estimate = odf_expectation(fields)
        elif name == "vorobev":
            estimate = vorobev_expectation(realizations)
        elif name == "da":
            estimate = distance_average_expectation(fields, q_norm, window, threads=threads)
        else:
            raise BadConfig(f"unknown estimator {name!r}; valid: odf, vorobev, da")
        report = compare(truth, estimate.mask)
        outcomes[name] = EstimatorOutcome(estimate, report, residual_image(truth, estimate.mask))
        logger.info(
            "[experiment] image-average %s: misclassified %.2f%% (single %.2f%%)",
            name, 100 * report.misclassification_fraction, 100 * single,
        )
    return ImageAveragingResult(outcomes, single)


def misclassification_curve(
    truth: BinaryMask,
    m_values: Sequence[int] = (1, 5, 15, 45),
    flip_prob: float = config.DEFAULT_FLIP_PROB,
    seeds: int = 20,
    seed: int = config.DEFAULT_SEED,
    threads: int | None = None,
) -> pd.DataFrame:
    """ODF 推定量の誤分類率を m ごとに seeds 本の系列で集計する。m は先頭 m 枚の入れ子。"""
    m_max = max(m_values)

    def _one_stream(stream: int) -> list[float]:
        realizations = noisy_realization_generator(truth, flip_prob, m_max, seed, stream)
        running = np.cumsum([oriented_distance_field(r).values for r in realizations], axis=0)
        errors = []
        for m in m_values:
            mean = ScalarField(truth.grid, running[m - 1] / m)
            estimate = odf_expectation_from_mean(mean)
            errors.append(compare(truth, estimate.mask).misclassification_fraction)
        return errors

    table = np.array(map_ordered(_one_stream, range(seeds), threads))
    rows = [{"m": int(m), **_summarize(table[:, i])} for i, m in enumerate(m_values)]
    return pd.DataFrame(rows)


def image_average_experiment(
    truth: BinaryMask,
    m: int = config.DEFAULT_IMAGE_M,
    flip_prob: float = config.DEFAULT_FLIP_PROB,
    seed: int = config.DEFAULT_SEED,
    estimators: Sequence[str] = ("odf", "vorobev", "da"),
    q_norm: float = config.DEFAULT_Q_NORM,
    curve_m_values: Sequence[int] = (1, 5, 15, 45),
    curve_seeds: int = 20,
    threads: int | None = None,
) -> ExperimentReport:
    realizations = noisy_realization_generator(truth, flip_prob, m, seed)
    result = image_averaging_pipeline(truth, realizations, estimators, q_norm, threads=threads)

    rows = []
    artifacts = {"truth.pgm": truth, "realization_0.pgm": realizations[0]}
    for name, outcome in result.outcomes.items():
        value = outcome.report.misclassification_fraction
        row = {"m": m, "median": value, "q25": value, "q75": value, "estimator": name}
        row.update(outcome.report.to_dict())
        row["single_realization"] = result.single_realization_misclassification
        rows.append(row)
        artifacts[f"estimate_{name}.pgm"] = outcome.estimate.mask
        artifacts[f"residual_{name}.pgm"] = outcome.residual

    curve = misclassification_curve(truth, curve_m_values, flip_prob, curve_seeds, seed, threads)
    curve["estimator"] = "odf_curve"
    df = pd.concat([pd.DataFrame(rows), curve], ignore_index=True)
    cfg = {
        "m": m, "flip_prob": flip_prob, "seed": seed, "estimators": list(estimators),
        "q_norm": q_norm, "curve_m_values": list(curve_m_values), "curve_seeds": curve_seeds,
        "grid": truth.grid.to_dict(),
    }
    return ExperimentReport("image-average", cfg, df, artifacts)


# ── 名前付き実験 ────────────────────────────────────────

EXPERIMENT_DEFAULTS = {
    "radius-ratio": {
        "laws": [[0.8, 1.2], [0.5, 1.5]],
        "m_values": config.DEFAULT_M_VALUES,
        "reps": config.DEFAULT_REPS,
        "full_scale": False,
    },
    "angle-diff": {
        "laws": [[math.pi / 8, 3 * math.pi / 8], [0.0, math.pi / 2]],
        "m_values": config.DEFAULT_M_VALUES,
        "reps": config.DEFAULT_REPS,
        "full_scale": False,
        "grid_dims": config.ANGLE_GRID_DIMS,
    },
    "flashing-discs": {
        "p_values": [0.8, 0.5],
        "r": 1.0,
        "a_values": [3.0, 2.0, 1.5],
        "levels": [0.0],
        "dims": 256,
    },
    "image-average": {
        "text": "ODF SET",
        "scale": 3,
        "truth": None,
        "m": config.DEFAULT_IMAGE_M,
        "flip_prob": config.DEFAULT_FLIP_PROB,
        "estimators": ["odf", "vorobev", "da"],
        "q_norm": config.DEFAULT_Q_NORM,
        "curve_m_values": [1, 5, 15, 45],
        "curve_seeds": 20,
    },
}
EXPERIMENTS = tuple(EXPERIMENT_DEFAULTS)


# ── 設定値の検査 ────────────────────────────────────────

def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return (
        isinstance(value, (int, float, np.integer, np.floating))
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def _int_at_least(low: int):
    return lambda v: _is_int(v) and v >= low


def _list_of(check, allow_empty: bool = False):
    return lambda v: isinstance(v, list) and (allow_empty or len(v) > 0) and all(check(x) for x in v)


def _is_law(value) -> bool:
    if isinstance(value, dict):
        return True
    return isinstance(value, list) and len(value) == 2 and all(_is_number(x) for x in value)


_CONFIG_CHECKS = {
    "seed":           (_int_at_least(0), "an integer >= 0"),
    "m_values":       (_list_of(_int_at_least(1)), "a non-empty list of integers >= 1"),
    "curve_m_values": (_list_of(_int_at_least(1)), "a non-empty list of integers >= 1"),
    "reps":           (_int_at_least(1), "an integer >= 1"),
    "m":              (_int_at_least(1), "an integer >= 1"),
    "curve_seeds":    (_int_at_least(1), "an integer >= 1"),
    "scale":          (_int_at_least(1), "an integer >= 1"),
    "dims":           (_int_at_least(2), "an integer >= 2"),
    "grid_dims":      (_int_at_least(2), "an integer >= 2"),
    "laws":           (_list_of(_is_law), "a non-empty list of [low, high] pairs or law objects"),
    "p_values":       (_list_of(lambda v: _is_number(v) and 0.0 <= v <= 1.0), "a non-empty list of numbers in [0, 1]"),
    "levels":         (_list_of(_is_number), "a non-empty list of numbers"),
    "a_values":       (_list_of(lambda v: _is_number(v) and v > 0), "a non-empty list of positive numbers"),
    "r":              (lambda v: _is_number(v) and v > 0, "a positive number"),
    "flip_prob":      (lambda v: _is_number(v) and 0.0 <= v < 0.5, "a number in [0, 0.5)"),
    "q_norm":         (lambda v: (_is_number(v) or v == math.inf) and v >= 1.0, "a number >= 1"),
    "estimators":     (_list_of(lambda v: v in ("odf", "vorobev", "da")), "a non-empty list of odf, vorobev, da"),
    "text":           (lambda v: isinstance(v, str), "a string"),
    "truth":          (lambda v: v is None or isinstance(v, str), "null or a PGM path"),
    "full_scale":     (lambda v: isinstance(v, bool), "true or false"),
}


def _check_config(name: str, cfg: dict) -> None:
    for key, value in cfg.items():
        check = _CONFIG_CHECKS.get(key)
        if check is not None and not check[0](value):
            raise BadConfig(f"{name}: {key} must be {check[1]}, got {value!r}")


def resolve_config(name: str, overrides: dict | None = None) -> dict:
    """既定値に overrides を重ねた設定。未知のキー・スキーマ版・型や範囲の誤りは BadConfig。"""
    if name not in EXPERIMENT_DEFAULTS:
        raise UnknownExperiment(f"unknown experiment {name!r}; valid: {list(EXPERIMENTS)}")
    overrides = dict(overrides or {})
    version = overrides.pop("schema_version", config.SCHEMA_VERSION)
    if version != config.SCHEMA_VERSION:
        raise BadConfig(f"unsupported config schema_version {version}")
    allowed = set(EXPERIMENT_DEFAULTS[name]) | {"seed"}
    unknown = set(overrides) - allowed
    if unknown:
        raise BadConfig(f"unknown keys for {name}: {sorted(unknown)}")
    cfg = {"schema_version": config.SCHEMA_VERSION, "seed": config.DEFAULT_SEED}
    cfg.update(EXPERIMENT_DEFAULTS[name])
    cfg.update(overrides)
    _check_config(name, cfg)
    return cfg


def _parse_law(spec) -> Law:
    if not isinstance(spec, dict):
        lo, hi = spec
        return Uniform([lo], [hi])
    try:
        return law_from_dict(spec)
    except OdfsetError:
        raise
    except (TypeError, ValueError) as exc:
        raise BadConfig(f"malformed law {spec!r}: {exc}") from exc


def _combine(name: str, cfg: dict, reports: list[ExperimentReport]) -> ExperimentReport:
    rows = pd.concat([r.rows for r in reports], ignore_index=True)
    artifacts = {}
    for report in reports:
        for key, value in report.artifacts.items():
            if key in artifacts and isinstance(value, pd.DataFrame):
                artifacts[key] = pd.concat([artifacts[key], value], ignore_index=True)
            else:
                artifacts[key] = value
    return ExperimentReport(name, cfg, rows, artifacts)


def run_experiment(
    name: str,
    overrides: dict | None = None,
    truth: BinaryMask | None = None,
    threads: int | None = None,
) -> ExperimentReport:
    """名前付き実験を設定から実行する。

    Args:
        name: radius-ratio | angle-diff | flashing-discs | image-average
        overrides: 既定値に重ねる設定（設定 JSON の中身）
        truth: image-average の真の集合を差し替えるマスク
        threads: 並列スレッド数。結果はスレッド数によらない

    Returns:
        解決済みの設定・集計行・成果物を持つ ExperimentReport

    Raises:
        UnknownExperiment: name が未知
        BadConfig: 未知のキー・スキーマ版の不一致・型や範囲の誤り
    """
    cfg = resolve_config(name, overrides)
    seed = int(cfg["seed"])
    logger.info("[experiment] %s: seed=%d", name, seed)

    if name in ("radius-ratio", "angle-diff"):
        reps = config.FULL_REPS if cfg["full_scale"] else int(cfg["reps"])
        reports = []
        for law in map(_parse_law, cfg["laws"]):
            if name == "radius-ratio":
                reports.append(radius_ratio_experiment(law, cfg["m_values"], reps, seed))
            else:
                reports.append(angle_diff_experiment(law, cfg["m_values"], reps, seed, cfg["grid_dims"]))
        return _combine(name, cfg, reports)

    if name == "flashing-discs":
        a_max = max(cfg["a_values"])
        reach = a_max / 2.0 + cfg["r"] + max(cfg["levels"]) + 0.5
        grid = GridSpec.centered((a_max / 2.0, 0.0), reach, int(cfg["dims"]))
        reports = [
            flashing_disc_contours(p, cfg["r"], cfg["a_values"], cfg["levels"], grid)
            for p in cfg["p_values"]
        ]
        combined = _combine(name, cfg, reports)
        # 同名の場は p ごとに異なるので接頭辞で区別する
        artifacts = {}
        for p, report in zip(cfg["p_values"], reports):
            artifacts.update({f"p{p:g}_{key}": value for key, value in report.artifacts.items()})
        return ExperimentReport(name, cfg, combined.rows, artifacts)

    if truth is None:
        truth = synthetic_text_mask(cfg["text"], int(cfg["scale"]))
    report = image_average_experiment(
        truth,
        m=int(cfg["m"]),
        flip_prob=float(cfg["flip_prob"]),
        seed=seed,
        estimators=cfg["estimators"],
        q_norm=float(cfg["q_norm"]),
        curve_m_values=cfg["curve_m_values"],
        curve_seeds=int(cfg["curve_seeds"]),
        threads=threads,
    )
    return ExperimentReport(name, cfg, report.rows, report.artifacts)
