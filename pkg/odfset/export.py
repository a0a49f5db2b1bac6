"""ファイル入出力：PGM マスク・場の CSV / 16bit PGM・境界折れ線 CSV・推定結果・実験ディレクトリ。

書き込みはすべて同じディレクトリの _tmp_ ファイルに出力してから置き換える。
"""

import io
import json
import logging
import pathlib
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from odfset import config
from odfset.errors import BadConfig, InvalidField, ParseError
from odfset.expectations import SetEstimate
from odfset.grid import BinaryMask, GridSpec, Polyline, ScalarField
from odfset.metrics import REPORT_COLUMNS, MetricReport
from odfset.shapes import RandomSetModel, model_from_dict

logger = logging.getLogger(__name__)


def _atomic_write(path: pathlib.Path, write: Callable[[pathlib.Path], None]) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(f"_tmp_{path.name}")
    try:
        write(tmp_path)
        tmp_path.replace(path)
    finally:
        # 成功・失敗にかかわらず一時ファイルを削除
        if tmp_path.exists():
            tmp_path.unlink()
    logger.debug("[export] wrote %s", path)
    return path


def _write_text(path: pathlib.Path, text: str) -> pathlib.Path:
    return _atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


def _json_text(data) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False, allow_nan=True) + "\n"


# ── PGM ─────────────────────────────────────────────────

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """ヘッダのトークンを count 個読み、(トークン, 本体の開始位置) を返す。# 以降はコメント。"""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm_array(path) -> tuple[np.ndarray, int]:
    """P2 / P5 の PGM を (rows, cols) 配列と maxval で返す。"""
    data = pathlib.Path(path).read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"{path}: unsupported PNM subformat {magic!r} (need P2 or P5)")
    try:
        cols, rows, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ParseError(f"{path}: malformed PGM header") from exc
    if cols < 1 or rows < 1 or not 0 < maxval < 65536:
        raise ParseError(f"{path}: bad PGM dimensions or maxval")

    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        body = data[pos + 1:]
        expected = rows * cols * dtype.itemsize
        if len(body) < expected:
            raise ParseError(f"{path}: PGM body has {len(body)} bytes, expected {expected}")
        values = np.frombuffer(body[:expected], dtype=dtype).astype(np.int64)
    else:
        try:
            values = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError as exc:
            raise ParseError(f"{path}: non-integer sample in P2 body") from exc
        if values.size != rows * cols:
            raise ParseError(f"{path}: P2 body has {values.size} samples, expected {rows * cols}")
    if values.size and (values.min() < 0 or values.max() > maxval):
        raise ParseError(f"{path}: sample outside [0, {maxval}]")
    return values.reshape(rows, cols), maxval


def write_pgm_array(path, image: np.ndarray, maxval: int = config.PGM_MAXVAL, binary: bool = True) -> pathlib.Path:
    image = np.asarray(image)
    rows, cols = image.shape
    header = f"{'P5' if binary else 'P2'}\n{cols} {rows}\n{maxval}\n".encode("ascii")
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        body = image.astype(dtype).tobytes()
    else:
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in image).encode("ascii") + b"\n"
    return _atomic_write(path, lambda tmp: tmp.write_bytes(header + body))


def read_mask_pgm(path, grid: GridSpec | None = None, invert: bool = False) -> BinaryMask:
    """0 = 背景（false）、255 = 前景（true）。invert で前景を反転する。

    grid を省略すると spacing 1、原点 (0, 0) の格子になる。
    """
    values, maxval = read_pgm_array(path)
    if maxval != config.PGM_MAXVAL:
        raise ParseError(f"{path}: mask PGM maxval must be {config.PGM_MAXVAL}, got {maxval}")
    if not np.all((values == 0) | (values == config.PGM_MAXVAL)):
        raise ParseError(f"{path}: mask PGM must contain only 0 and {config.PGM_MAXVAL}")
    grid = grid or GridSpec(dims=values.shape)
    bits = values == config.PGM_MAXVAL
    return BinaryMask(grid, ~bits if invert else bits)


def write_mask_pgm(path, mask: BinaryMask, binary: bool = True) -> pathlib.Path:
    image = np.where(mask.bits, config.PGM_MAXVAL, 0).astype(np.uint8)
    return write_pgm_array(path, image, config.PGM_MAXVAL, binary)


# ── 場 ──────────────────────────────────────────────────

def write_field_csv(path, field: ScalarField) -> pathlib.Path:
    """行優先・ヘッダなしの CSV。"""
    df = pd.DataFrame(field.values)
    return _atomic_write(
        path,
        lambda tmp: df.to_csv(tmp, header=False, index=False, float_format=config.CSV_FLOAT_FORMAT),
    )


def read_field_csv(path, grid: GridSpec | None = None) -> ScalarField:
    try:
        values = pd.read_csv(path, header=None, dtype=np.float64, float_precision="round_trip").to_numpy()
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"{path}: not a numeric CSV field") from exc
    grid = grid or GridSpec(dims=values.shape)
    try:
        return ScalarField(grid, values)
    except InvalidField as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _sidecar_path(path) -> pathlib.Path:
    path = pathlib.Path(path)
    return path.with_suffix(".json")


def write_field_pgm16(path, field: ScalarField) -> pathlib.Path:
    """16bit PGM に線形量子化し、min / max と格子を同名の .json に記録する。"""
    lo, hi = float(field.values.min()), float(field.values.max())
    span = hi - lo
    if span > 0:
        image = np.rint((field.values - lo) / span * config.FIELD_PGM_MAXVAL)
    else:
        image = np.zeros(field.grid.dims)
    write_pgm_array(path, image.astype(np.uint16), config.FIELD_PGM_MAXVAL)
    sidecar = {"min": lo, "max": hi, "maxval": config.FIELD_PGM_MAXVAL, "grid": field.grid.to_dict()}
    _write_text(_sidecar_path(path), _json_text(sidecar))
    return pathlib.Path(path)


def read_field_pgm16(path) -> ScalarField:
    values, maxval = read_pgm_array(path)
    sidecar = load_json(_sidecar_path(path))
    try:
        lo, hi = float(sidecar["min"]), float(sidecar["max"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: sidecar needs numeric min and max") from exc
    grid = GridSpec.from_dict(sidecar["grid"]) if "grid" in sidecar else GridSpec(dims=values.shape)
    return ScalarField(grid, lo + values / maxval * (hi - lo))


# ── 折れ線 ──────────────────────────────────────────────

def write_polylines_csv(path, polylines: Sequence[Polyline]) -> pathlib.Path:
    """列 x,y。折れ線ごとに空行で区切り、閉じた折れ線は始点を末尾に繰り返す。"""
    blocks = []
    for line in polylines:
        pts = line.vertices
        if line.closed:
            pts = np.vstack([pts, pts[:1]])
        blocks.append(
            pd.DataFrame(pts).to_csv(header=False, index=False, float_format=config.CSV_FLOAT_FORMAT)
        )
    return _write_text(path, "x,y\n" + "\n".join(blocks))


def read_polylines_csv(path) -> list[Polyline]:
    text = pathlib.Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "x,y":
        raise ParseError(f"{path}: polyline CSV must start with header x,y")

    polylines, block = [], []
    for raw in lines[1:] + [""]:
        if raw.strip():
            block.append(raw)
            continue
        if not block:
            continue
        try:
            pts = pd.read_csv(
                io.StringIO("\n".join(block)), header=None, dtype=np.float64, float_precision="round_trip"
            ).to_numpy()
        except (ValueError, pd.errors.ParserError) as exc:
            raise ParseError(f"{path}: malformed polyline block") from exc
        closed = len(pts) > 3 and np.array_equal(pts[0], pts[-1])
        polylines.append(Polyline(pts[:-1] if closed else pts, closed=closed))
        block = []
    return polylines


# ── JSON ────────────────────────────────────────────────

def load_json(path) -> dict:
    try:
        data = json.loads(pathlib.Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top-level JSON value must be an object")
    return data


def load_model(path) -> RandomSetModel:
    return model_from_dict(load_json(path))


def write_model(path, model: RandomSetModel) -> pathlib.Path:
    return _write_text(path, _json_text(model.to_dict()))


def write_grid(path, grid: GridSpec) -> pathlib.Path:
    return _write_text(path, _json_text(grid.to_dict()))


# ── 推定結果・採点 ──────────────────────────────────────

def write_estimate(out_dir, estimate: SetEstimate) -> dict[str, pathlib.Path]:
    """推定結果一式を out_dir に書き出す。

    Args:
        out_dir: 出力ディレクトリ（なければ作成）
        estimate: odf / vorobev / da いずれかの推定結果

    Returns:
        キー mask, boundary, field, manifest → 書き出したパス

    Raises:
        OSError: 書き込みに失敗した場合（一時ファイルは削除済み）
    """
    out_dir = pathlib.Path(out_dir)
    paths = {
        "mask": write_mask_pgm(out_dir / "mask.pgm", estimate.mask),
        "boundary": write_polylines_csv(out_dir / "boundary.csv", estimate.boundary),
        "field": write_field_csv(out_dir / "field.csv", estimate.source_field),
        "manifest": _write_text(out_dir / "manifest.json", _json_text(estimate.manifest())),
    }
    logger.info("[export] estimate (%s) saved to %s", estimate.estimator, out_dir)
    return paths


def metric_report_frame(report: MetricReport) -> pd.DataFrame:
    return pd.DataFrame([report.to_row()], columns=list(REPORT_COLUMNS))


def write_metric_report(out_dir, report: MetricReport, stem: str = "metrics") -> dict[str, pathlib.Path]:
    out_dir = pathlib.Path(out_dir)
    df = metric_report_frame(report)
    return {
        "json": _write_text(out_dir / f"{stem}.json", _json_text(report.to_dict())),
        "csv": _atomic_write(
            out_dir / f"{stem}.csv",
            lambda tmp: df.to_csv(tmp, index=False, float_format=config.CSV_FLOAT_FORMAT),
        ),
    }


# ── 実験ディレクトリ ────────────────────────────────────

def _write_artifact(path: pathlib.Path, value) -> pathlib.Path:
    if isinstance(value, BinaryMask):
        return write_mask_pgm(path, value)
    if isinstance(value, ScalarField):
        return write_field_csv(path, value)
    if isinstance(value, pd.DataFrame):
        return _atomic_write(
            path,
            lambda tmp: value.to_csv(tmp, index=False, float_format=config.CSV_FLOAT_FORMAT),
        )
    if isinstance(value, np.ndarray):
        return write_pgm_array(path, value)
    if isinstance(value, list) and all(isinstance(v, Polyline) for v in value):
        return write_polylines_csv(path, value)
    raise BadConfig(f"cannot write artifact {path.name} of type {type(value).__name__}")


def write_experiment(report, out_dir=None) -> pathlib.Path:
    """config.json, report.csv と成果物を out_dir（既定 OUTPUT_DIR/<name>）に書き出す。"""
    out_dir = pathlib.Path(out_dir or pathlib.Path(config.OUTPUT_DIR) / report.name)
    _write_text(out_dir / "config.json", _json_text(report.config))
    _atomic_write(
        out_dir / "report.csv",
        lambda tmp: report.rows.to_csv(tmp, index=False, float_format=config.CSV_FLOAT_FORMAT),
    )
    for name, value in sorted(report.artifacts.items()):
        _write_artifact(out_dir / name, value)
    logger.info("[export] experiment %s: %d artifacts saved to %s", report.name, len(report.artifacts), out_dir)
    return out_dir
