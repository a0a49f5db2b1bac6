"""
tests/test_metrics.py

odfset/metrics.py のユニットテスト。

検証項目:
  - symmetric_difference / lq_char_distance: 0、セル数 × 面積、lq^q = 対称差
  - l2_odf_distance: 定数差の閉形式、円板と拡大円板
  - hausdorff_boundary: 同心円、平行移動した正方形、空境界
  - 対称性・三角不等式（乱択）
  - compare: MetricReport の値と退化マスク
"""

import math

import numpy as np
import pytest

from odfset import metrics
from odfset import shapes as s
from odfset.errors import EmptyBoundary, GridMismatch, InvalidField
from odfset.grid import BinaryMask, GridSpec, Polyline, ScalarField, Window, oriented_distance_field


# ── ヘルパー関数 ────────────────────────────────────────────────────────────────

GRID = GridSpec.centered((0.0, 0.0), 2.0, 32)


def _disc(grid: GridSpec, center, r: float) -> BinaryMask:
    return s.render(s.Ball(center, r), grid)[0]


def _random_mask(rng, grid: GridSpec = GRID) -> BinaryMask:
    return BinaryMask(grid, rng.uniform(size=grid.dims) < rng.uniform(0.1, 0.9))


def _circle(r: float, n: int = 720, center=(0.0, 0.0)) -> Polyline:
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    return Polyline(np.column_stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)]), closed=True)


def _square(offset=(0.0, 0.0)) -> Polyline:
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]) + np.asarray(offset)
    return Polyline(corners, closed=True)


# ── 特性関数の距離 ──────────────────────────────────────────────────────────────

class TestCharacteristicDistances:
    def test_equal_masks(self):
        disc = _disc(GRID, (0, 0), 1.0)
        assert metrics.symmetric_difference(disc, disc) == 0.0
        assert metrics.lq_char_distance(disc, disc, 2.0) == 0.0

    def test_empty_against_k_cells(self):
        empty = BinaryMask(GRID, np.zeros(GRID.dims, dtype=bool))
        disc = _disc(GRID, (0, 0), 1.0)
        assert metrics.symmetric_difference(empty, disc) == pytest.approx(disc.count * GRID.cell_area)

    def test_unit_area_difference(self):
        spec = GridSpec(spacing=0.5, dims=(4, 4))
        a = np.zeros(spec.dims, dtype=bool)
        a[:2, :2] = True
        zero = BinaryMask(spec, np.zeros(spec.dims, dtype=bool))
        assert metrics.lq_char_distance(BinaryMask(spec, a), zero, q=2.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0])
    def test_lq_power_is_symmetric_difference(self, q):
        rng = np.random.default_rng(int(q * 10))
        for _ in range(50):
            a, b = _random_mask(rng), _random_mask(rng)
            assert metrics.lq_char_distance(a, b, q) ** q == pytest.approx(metrics.symmetric_difference(a, b), rel=1e-12)

    def test_invalid_q(self):
        disc = _disc(GRID, (0, 0), 1.0)
        with pytest.raises(InvalidField):
            metrics.lq_char_distance(disc, disc, 0.5)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            metrics.symmetric_difference(_disc(GRID, (0, 0), 1.0), _disc(GRID.scaled(2.0), (0, 0), 1.0))


# ── ODF の L² 距離 ──────────────────────────────────────────────────────────────

class TestL2OdfDistance:
    def test_identical_fields(self):
        field = oriented_distance_field(_disc(GRID, (0, 0), 1.0))
        assert metrics.l2_odf_distance(field, field) == 0.0

    def test_constant_difference_on_area(self):
        zero = ScalarField(GRID, np.zeros(GRID.dims))
        values = np.zeros(GRID.dims)
        values[4:12, 8:20] = 0.7
        area = 8 * 12 * GRID.cell_area
        assert metrics.l2_odf_distance(zero, ScalarField(GRID, values)) == pytest.approx(0.7 * math.sqrt(area))

    def test_window(self):
        zero = ScalarField(GRID, np.zeros(GRID.dims))
        ones = ScalarField(GRID, np.ones(GRID.dims))
        window = Window(0, 8, 0, 8)
        assert metrics.l2_odf_distance(zero, ones, window) == pytest.approx(math.sqrt(64 * GRID.cell_area))

    def test_disc_vs_dilated_disc(self):
        """半径 1 と 1.3 の円板の ODF 差は連続体では定数 0.3。"""
        spec = GridSpec.centered((0.0, 0.0), 2.0, 512)
        a = oriented_distance_field(_disc(spec, (0, 0), 1.0))
        b = oriented_distance_field(_disc(spec, (0, 0), 1.3))
        expected = 0.3 * math.sqrt(spec.total_area)
        assert metrics.l2_odf_distance(a, b) == pytest.approx(expected, rel=0.01)


# ── ハウスドルフ距離 ────────────────────────────────────────────────────────────

class TestHausdorffBoundary:
    def test_identical(self):
        assert metrics.hausdorff_boundary([_circle(1.0)], [_circle(1.0)], spacing=0.02) == 0.0

    def test_concentric_circles(self):
        d = metrics.hausdorff_boundary([_circle(1.0)], [_circle(1.2)], spacing=0.02)
        assert d == pytest.approx(0.2, abs=0.01)

    def test_translated_square(self):
        d = metrics.hausdorff_boundary([_square()], [_square((0.3, 0.0))], spacing=0.01)
        assert d == pytest.approx(0.3, abs=1e-12)

    def test_empty_boundary(self):
        with pytest.raises(EmptyBoundary):
            metrics.hausdorff_boundary([], [_square()])


# ── 距離の性質 ──────────────────────────────────────────────────────────────────

class TestMetricProperties:
    def test_symmetry(self):
        rng = np.random.default_rng(30)
        for _ in range(30):
            a, b = _random_mask(rng), _random_mask(rng)
            assert metrics.symmetric_difference(a, b) == metrics.symmetric_difference(b, a)
            assert metrics.lq_char_distance(a, b, 2.0) == metrics.lq_char_distance(b, a, 2.0)
            fa, fb = oriented_distance_field(a), oriented_distance_field(b)
            assert metrics.l2_odf_distance(fa, fb) == pytest.approx(metrics.l2_odf_distance(fb, fa))

    def test_triangle_inequality(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            fields = [
                oriented_distance_field(_disc(GRID, rng.uniform(-0.5, 0.5, size=2), rng.uniform(0.3, 1.2)))
                for _ in range(3)
            ]
            ab = metrics.l2_odf_distance(fields[0], fields[1])
            bc = metrics.l2_odf_distance(fields[1], fields[2])
            ac = metrics.l2_odf_distance(fields[0], fields[2])
            assert ac <= ab + bc + 1e-12

            circles = [[_circle(r, 180, rng.uniform(-1, 1, size=2))] for r in rng.uniform(0.2, 1.5, size=3)]
            hab = metrics.hausdorff_boundary(circles[0], circles[1], 0.05)
            hbc = metrics.hausdorff_boundary(circles[1], circles[2], 0.05)
            hac = metrics.hausdorff_boundary(circles[0], circles[2], 0.05)
            assert hac <= hab + hbc + 1e-12


# ── compare ────────────────────────────────────────────────────────────────────

class TestCompare:
    def test_identical_masks(self):
        disc = _disc(GRID, (0.1, 0.0), 1.0)
        report = metrics.compare(disc, disc)
        assert report.to_row() == [0.0, 0.0, 0.0, 0.0, 0.0]

    def test_shifted_disc(self):
        spec = GridSpec.centered((0.0, 0.0), 2.0, 64)
        truth = _disc(spec, (0.0, 0.0), 1.0)
        estimate = _disc(spec, (0.25, 0.0), 1.0)
        report = metrics.compare(truth, estimate, q=2.0)
        sd = metrics.symmetric_difference(truth, estimate)
        assert report.symmetric_difference_area == sd
        assert report.misclassification_fraction == pytest.approx(sd / spec.total_area)
        assert report.lq_char_distance == pytest.approx(math.sqrt(sd))
        assert report.hausdorff_boundary == pytest.approx(0.25, abs=spec.spacing)

    def test_degenerate_mask(self):
        empty = BinaryMask(GRID, np.zeros(GRID.dims, dtype=bool))
        disc = _disc(GRID, (0, 0), 1.0)
        report = metrics.compare(disc, empty)
        assert report.symmetric_difference_area == pytest.approx(disc.measure)
        assert math.isinf(report.l2_odf_distance)
        assert math.isinf(report.hausdorff_boundary)

    def test_report_columns(self):
        report = metrics.MetricReport(1.0, 2.0, 3.0, 0.5, 4.0)
        assert list(report.to_dict()) == list(metrics.REPORT_COLUMNS)
        assert report.to_row() == [1.0, 2.0, 3.0, 0.5, 4.0]

    @pytest.mark.parametrize(
        "values",
        [(-1.0, 0.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 1.5, 0.0), (0.0, 0.0, math.nan, 0.0, 0.0)],
    )
    def test_invalid_report(self, values):
        with pytest.raises(InvalidField):
            metrics.MetricReport(*values)
