"""
tests/test_export.py

odfset/export.py のユニットテスト。
tmp_path フィクスチャで隔離されたファイル I/O を使用する。

検証項目:
  - PGM: P2 / P5 / 16bit の読み書き、ヘッダのコメント、不正な入力は ParseError
  - read_mask_pgm: 0/255 以外・maxval ≠ 255 の拒否、invert
  - 場: CSV の往復（任意の倍精度値も完全一致）、16bit PGM と .json サイドカー
  - 折れ線 CSV: ヘッダ x,y、空行区切り、閉じた折れ線の始点の繰り返し
  - write_estimate / write_metric_report / write_experiment の出力ファイル
  - 一時ファイル（_tmp_*）が成功・失敗の両方で残らないこと
"""

import json
import math
import pathlib

import numpy as np
import pandas as pd
import pytest

from odfset import config as cfg
from odfset import export
from odfset.errors import BadConfig, ParseError
from odfset.experiments import ExperimentReport
from odfset.expectations import odf_expectation
from odfset.grid import BinaryMask, GridSpec, Polyline, ScalarField, oriented_distance_field
from odfset.metrics import REPORT_COLUMNS, MetricReport
from odfset.shapes import Ball, RandomSetModel, Uniform, render


# ── ヘルパー関数 ────────────────────────────────────────────────────────────────

GRID = GridSpec.centered((0.0, 0.0), 2.0, 16)


def _disc(r: float = 1.0) -> BinaryMask:
    return render(Ball((0.0, 0.0), r), GRID)[0]


def _tmp_files(root: pathlib.Path) -> list[pathlib.Path]:
    return [p for p in root.rglob("_tmp_*")]


# ── PGM ─────────────────────────────────────────────────────────────────────────

class TestPgm:
    @pytest.mark.parametrize("binary", [True, False])
    def test_array_round_trip(self, tmp_path, binary):
        image = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        path = export.write_pgm_array(tmp_path / "a.pgm", image, binary=binary)
        values, maxval = export.read_pgm_array(path)
        assert maxval == 255
        np.testing.assert_array_equal(values, image)

    def test_sixteen_bit_big_endian(self, tmp_path):
        image = np.array([[0, 256, 65535]], dtype=np.uint16)
        path = export.write_pgm_array(tmp_path / "a.pgm", image, maxval=65535)
        assert path.read_bytes().endswith(b"\x00\x00\x01\x00\xff\xff")
        values, maxval = export.read_pgm_array(path)
        assert maxval == 65535
        np.testing.assert_array_equal(values, image)

    def test_header_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P2\n# created by hand\n3 1\n# maxval next\n255\n0 255 0\n")
        values, _ = export.read_pgm_array(path)
        np.testing.assert_array_equal(values, [[0, 255, 0]])

    @pytest.mark.parametrize(
        "content",
        [
            b"P3\n1 1\n255\n0 0 0\n",
            b"P2\n2 2\n255\n0 0 0\n",
            b"P2\n1 1\n255\n300\n",
            b"P2\n1 1\n255\nabc\n",
            b"P5\n4 4\n255\n\x00\x00",
            b"P2\n2\n",
        ],
    )
    def test_malformed(self, tmp_path, content):
        path = tmp_path / "bad.pgm"
        path.write_bytes(content)
        with pytest.raises(ParseError):
            export.read_pgm_array(path)


class TestMaskPgm:
    def test_round_trip(self, tmp_path):
        disc = _disc()
        path = export.write_mask_pgm(tmp_path / "m.pgm", disc)
        loaded = export.read_mask_pgm(path, grid=GRID)
        assert loaded.equals(disc)

    def test_default_grid(self, tmp_path):
        path = export.write_mask_pgm(tmp_path / "m.pgm", _disc(), binary=False)
        loaded = export.read_mask_pgm(path)
        assert loaded.grid == GridSpec(dims=GRID.dims)
        np.testing.assert_array_equal(loaded.bits, _disc().bits)

    def test_invert(self, tmp_path):
        path = export.write_mask_pgm(tmp_path / "m.pgm", _disc())
        loaded = export.read_mask_pgm(path, grid=GRID, invert=True)
        assert loaded.equals(_disc().complement())

    def test_rejects_grey_values(self, tmp_path):
        path = export.write_pgm_array(tmp_path / "g.pgm", np.array([[0, 7], [255, 0]], dtype=np.uint8))
        with pytest.raises(ParseError):
            export.read_mask_pgm(path)

    def test_rejects_other_maxval(self, tmp_path):
        path = tmp_path / "g.pgm"
        path.write_bytes(b"P2\n2 1\n15\n0 15\n")
        with pytest.raises(ParseError):
            export.read_mask_pgm(path)


# ── 場 ──────────────────────────────────────────────────────────────────────────

class TestFieldFiles:
    def test_csv_round_trip_is_exact(self, tmp_path):
        field = oriented_distance_field(_disc())
        path = export.write_field_csv(tmp_path / "f.csv", field)
        loaded = export.read_field_csv(path, grid=GRID)
        np.testing.assert_array_equal(loaded.values, field.values)
        assert loaded.grid == GRID

    def test_csv_round_trip_of_arbitrary_doubles(self, tmp_path):
        """最下位ビットまで乱れた倍精度値も 1 ULP もずれずに戻ること。"""
        values = np.random.default_rng(3).normal(scale=7.0, size=(9, 11))
        field = ScalarField(GridSpec(dims=(9, 11)), values)
        loaded = export.read_field_csv(export.write_field_csv(tmp_path / "f.csv", field))
        np.testing.assert_array_equal(loaded.values, values)

    def test_csv_has_no_header(self, tmp_path):
        field = ScalarField(GridSpec(dims=(2, 3)), np.arange(6, dtype=float).reshape(2, 3))
        path = export.write_field_csv(tmp_path / "f.csv", field)
        assert path.read_text().splitlines() == ["0,1,2", "3,4,5"]

    def test_csv_not_numeric(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("1,2\n3,x\n")
        with pytest.raises(ParseError):
            export.read_field_csv(path)

    def test_pgm16_with_sidecar(self, tmp_path):
        field = oriented_distance_field(_disc())
        path = export.write_field_pgm16(tmp_path / "f.pgm", field)
        sidecar = json.loads((tmp_path / "f.json").read_text())
        assert sidecar["min"] == pytest.approx(field.values.min())
        assert sidecar["max"] == pytest.approx(field.values.max())
        loaded = export.read_field_pgm16(path)
        assert loaded.grid == GRID
        step = (sidecar["max"] - sidecar["min"]) / cfg.FIELD_PGM_MAXVAL
        assert np.max(np.abs(loaded.values - field.values)) <= step / 2 + 1e-12

    def test_pgm16_constant_field(self, tmp_path):
        field = ScalarField(GRID, np.full(GRID.dims, 0.25))
        loaded = export.read_field_pgm16(export.write_field_pgm16(tmp_path / "f.pgm", field))
        np.testing.assert_array_equal(loaded.values, field.values)

    def test_pgm16_missing_sidecar(self, tmp_path):
        path = export.write_pgm_array(tmp_path / "f.pgm", np.zeros((2, 2), dtype=np.uint16), maxval=65535)
        with pytest.raises(ParseError):
            export.read_field_pgm16(path)


# ── 折れ線 ──────────────────────────────────────────────────────────────────────

class TestPolylinesCsv:
    def test_format(self, tmp_path):
        square = Polyline(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), closed=True)
        segment = Polyline(np.array([[0.5, 0.5], [2.0, 0.5]]), closed=False)
        path = export.write_polylines_csv(tmp_path / "b.csv", [square, segment])
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y"
        assert lines[1] == lines[5] == "0,0"
        assert lines[6] == ""
        assert lines[7:] == ["0.5,0.5", "2,0.5"]

    def test_round_trip(self, tmp_path):
        t = np.linspace(0.0, 2 * math.pi, 40, endpoint=False)
        circle = Polyline(np.column_stack([np.cos(t), np.sin(t)]), closed=True)
        segment = Polyline(np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.7]]), closed=False)
        loaded = export.read_polylines_csv(export.write_polylines_csv(tmp_path / "b.csv", [circle, segment]))
        assert [p.closed for p in loaded] == [True, False]
        np.testing.assert_array_equal(loaded[0].vertices, circle.vertices)
        np.testing.assert_array_equal(loaded[1].vertices, segment.vertices)

    def test_round_trip_of_arbitrary_doubles(self, tmp_path):
        rng = np.random.default_rng(4)
        lines = [Polyline(rng.normal(size=(25, 2)), closed=False), Polyline(rng.normal(size=(7, 2)), closed=True)]
        loaded = export.read_polylines_csv(export.write_polylines_csv(tmp_path / "b.csv", lines))
        for got, want in zip(loaded, lines):
            np.testing.assert_array_equal(got.vertices, want.vertices)

    def test_empty(self, tmp_path):
        path = export.write_polylines_csv(tmp_path / "b.csv", [])
        assert path.read_text() == "x,y\n"
        assert export.read_polylines_csv(path) == []

    def test_missing_header(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("0,0\n1,1\n")
        with pytest.raises(ParseError):
            export.read_polylines_csv(path)


# ── JSON・モデル ────────────────────────────────────────────────────────────────

class TestJson:
    @pytest.mark.parametrize("content", ["{not json", "[1, 2]"])
    def test_invalid(self, tmp_path, content):
        path = tmp_path / "x.json"
        path.write_text(content)
        with pytest.raises(ParseError):
            export.load_json(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            export.load_json(tmp_path / "missing.json")

    def test_model_round_trip(self, tmp_path):
        model = RandomSetModel("ball", Uniform([0.5], [1.5]), seed=3, params={"center": [0.0, 0.0]})
        loaded = export.load_model(export.write_model(tmp_path / "model.json", model))
        assert loaded.to_dict() == model.to_dict()


# ── 推定結果・採点 ──────────────────────────────────────────────────────────────

class TestWriteEstimate:
    def test_files_and_manifest(self, tmp_path):
        fields = [oriented_distance_field(_disc(r)) for r in (0.75, 1.25)]
        estimate = odf_expectation(fields)
        paths = export.write_estimate(tmp_path / "est", estimate)
        assert set(paths) == {"mask", "boundary", "field", "manifest"}
        assert all(p.exists() for p in paths.values())

        manifest = json.loads(paths["manifest"].read_text())
        assert manifest["estimator"] == "odf"
        assert manifest["schema_version"] == cfg.SCHEMA_VERSION
        assert manifest["measure"] == pytest.approx(estimate.measure)
        assert GridSpec.from_dict(manifest["grid"]) == GRID
        assert export.read_mask_pgm(paths["mask"], grid=GRID).equals(estimate.mask)
        assert _tmp_files(tmp_path) == []


class TestWriteMetricReport:
    def test_json_and_csv(self, tmp_path):
        report = MetricReport(1.5, 2.0, 0.25, 0.125, math.inf)
        paths = export.write_metric_report(tmp_path, report, stem="score")
        assert paths["json"].name == "score.json"
        data = json.loads(paths["json"].read_text())
        assert list(data) == list(REPORT_COLUMNS)
        assert data["hausdorff_boundary"] == math.inf
        df = pd.read_csv(paths["csv"])
        assert list(df.columns) == list(REPORT_COLUMNS)
        assert df.iloc[0]["symmetric_difference_area"] == 1.5


# ── 実験ディレクトリ ────────────────────────────────────────────────────────────

class TestWriteExperiment:
    def _report(self) -> ExperimentReport:
        rows = pd.DataFrame({"m": [10, 100], "median": [1.0, 0.5], "q25": [0.9, 0.4], "q75": [1.1, 0.6]})
        artifacts = {
            "truth.pgm": _disc(),
            "field.csv": oriented_distance_field(_disc()),
            "contours.csv": [Polyline(np.array([[0.0, 0.0], [1.0, 1.0]]), closed=False)],
            "residual.pgm": np.full(GRID.dims, 128, dtype=np.uint8),
            "samples.csv": pd.DataFrame({"rep": [0, 1], "ratio": [1.0, 1.1]}),
        }
        return ExperimentReport("demo", {"seed": 1, "schema_version": 1}, rows, artifacts)

    def test_default_output_dir(self, tmp_path, monkeypatch):
        """出力先が {OUTPUT_DIR}/{name}/ になること。"""
        monkeypatch.setattr(cfg, "OUTPUT_DIR", str(tmp_path))
        out_dir = export.write_experiment(self._report())
        assert out_dir == tmp_path / "demo"
        names = {p.name for p in out_dir.iterdir()}
        assert names == {"config.json", "report.csv", "truth.pgm", "field.csv", "contours.csv", "residual.pgm", "samples.csv"}
        assert json.loads((out_dir / "config.json").read_text()) == {"seed": 1, "schema_version": 1}
        assert list(pd.read_csv(out_dir / "report.csv").columns) == ["m", "median", "q25", "q75"]
        values, _ = export.read_pgm_array(out_dir / "residual.pgm")
        assert np.all(values == 128)

    def test_unknown_artifact_type(self, tmp_path):
        report = ExperimentReport("demo", {}, pd.DataFrame(), {"odd.bin": {"a": 1}})
        with pytest.raises(BadConfig):
            export.write_experiment(report, tmp_path)


# ── 一時ファイル ────────────────────────────────────────────────────────────────

class TestAtomicWrite:
    def test_tmp_file_cleaned_up_on_success(self, tmp_path):
        export.write_mask_pgm(tmp_path / "m.pgm", _disc())
        export.write_field_pgm16(tmp_path / "f.pgm", oriented_distance_field(_disc()))
        assert _tmp_files(tmp_path) == []

    def test_tmp_file_cleaned_up_on_failure(self, tmp_path):
        """書き込み中の例外でも _tmp_ ファイルが残らず、元のファイルも上書きされないこと。"""
        target = tmp_path / "m.pgm"
        target.write_bytes(b"original")

        def failing_write(tmp):
            tmp.write_bytes(b"partial")
            raise RuntimeError("disk full")

        with pytest.raises(RuntimeError):
            export._atomic_write(target, failing_write)
        assert target.read_bytes() == b"original"
        assert _tmp_files(tmp_path) == []
