"""
ODF ランダム閉集合 期待値計算 エントリーポイント

使用方法:
    python odfset/main.py odf image.pgm --out output/odf
    python odfset/main.py expect a.pgm b.pgm c.pgm --estimator vorobev --out output/expect
    python odfset/main.py expect model.json --m 500 --estimator odf --out output/expect
    python odfset/main.py metrics truth.pgm estimate.pgm --out output/metrics
    python odfset/main.py experiment radius-ratio [config.json] --out output/radius-ratio
    python odfset/main.py simulate model.json --m 15 --out output/sim
"""

import pathlib
import sys

# `python odfset/main.py` として実行した場合にプロジェクトルートを sys.path に追加
_project_root = pathlib.Path(__file__).parent.parent
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

import argparse
import dataclasses
import json
import logging
import math

from odfset import config
from odfset import expectations, experiments, export, grid, metrics, shapes
from odfset.errors import MixedInputs, OdfsetError

logger = logging.getLogger(__name__)


def _print_json(data: dict) -> None:
    print(json.dumps(data, ensure_ascii=False, allow_nan=True))


def _out_dir(args, default: str) -> pathlib.Path:
    return pathlib.Path(args.out or pathlib.Path(config.OUTPUT_DIR) / default)


# ── サブコマンド ────────────────────────────────────────

def cmd_odf(args) -> int:
    """画像の ODF を CSV と 16bit PGM（+ sidecar JSON）で書き出す。"""
    mask = export.read_mask_pgm(args.image, _image_grid(args), invert=args.invert)
    field = grid.oriented_distance_field(mask)
    out_dir = _out_dir(args, "odf")
    export.write_field_csv(out_dir / "field.csv", field)
    export.write_field_pgm16(out_dir / "field.pgm", field)
    logger.info("[main] odf of %s (%d cells inside) saved to %s", args.image, mask.count, out_dir)
    return 0


def _image_grid(args, dims=None) -> grid.GridSpec | None:
    if args.spacing is None:
        return None
    if dims is None:
        values, _ = export.read_pgm_array(args.image)
        dims = values.shape
    return grid.GridSpec(spacing=args.spacing, dims=dims)


def _split_inputs(paths: list[str]) -> tuple[list[str], list[str]]:
    images = [p for p in paths if p.lower().endswith(".pgm")]
    models = [p for p in paths if p.lower().endswith(".json")]
    if len(images) + len(models) != len(paths):
        raise MixedInputs("inputs must be .pgm images or a single .json model")
    if images and models:
        raise MixedInputs("inputs mix images and a model; give all images or one model")
    if len(models) > 1:
        raise MixedInputs("give exactly one model file")
    return images, models


def _estimate_from_images(args, paths: list[str]) -> expectations.SetEstimate:
    masks = [export.read_mask_pgm(p, invert=args.invert) for p in paths]
    if args.spacing is not None:
        spec = grid.GridSpec(spacing=args.spacing, dims=masks[0].grid.dims)
        masks = [grid.BinaryMask(spec, m.bits) for m in masks]
    grid.check_same_grid(masks)
    if args.estimator == "vorobev":
        return expectations.vorobev_expectation(masks, tolerance=args.tol)
    fields = [grid.oriented_distance_field(m) for m in masks]
    if args.estimator == "odf":
        return expectations.odf_expectation(fields, tolerance=args.tol)
    return expectations.distance_average_expectation(
        fields, args.q, _window(args), tolerance=args.tol,
        max_candidates=args.max_candidates, threads=args.threads,
    )


def _estimate_from_model(args, path: str) -> expectations.SetEstimate:
    model = export.load_model(path)
    if args.seed is not None:
        model = dataclasses.replace(model, seed=args.seed)
    spec = shapes.default_grid(model, args.dims)
    agg = expectations.aggregate_model(model, args.m, spec, threads=args.threads)
    return expectations.estimate_from_aggregate(
        agg, args.estimator, q_norm=args.q, window=_window(args), tolerance=args.tol,
        max_candidates=args.max_candidates, threads=args.threads,
    )


def _window(args) -> grid.Window | None:
    return grid.Window(*args.window) if args.window else None


def cmd_expect(args) -> int:
    """画像群またはモデルから期待集合を推定し、推定結果一式を書き出す。"""
    images, models = _split_inputs(args.inputs)
    estimate = _estimate_from_images(args, images) if images else _estimate_from_model(args, models[0])
    out_dir = _out_dir(args, "expect")
    export.write_estimate(out_dir, estimate)
    _print_json({
        "estimator": estimate.estimator,
        "threshold_used": estimate.threshold_used,
        "measure": estimate.measure,
        "equivalent_radius": math.sqrt(estimate.measure / math.pi),
    })
    return 0


def cmd_metrics(args) -> int:
    """2 枚のマスクを比較して MetricReport を出力する。"""
    a = export.read_mask_pgm(args.a, invert=args.invert)
    b = export.read_mask_pgm(args.b, invert=args.invert)
    report = metrics.compare(a, b, q=args.q)
    export.write_metric_report(_out_dir(args, "metrics"), report)
    _print_json(report.to_dict())
    return 0


def cmd_experiment(args) -> int:
    """名前付き実験を実行し、実験ディレクトリを書き出す。"""
    overrides = export.load_json(args.config) if args.config else {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    truth = None
    if args.name == "image-average" and overrides.get("truth"):
        truth = export.read_mask_pgm(overrides["truth"], invert=args.invert)
    report = experiments.run_experiment(args.name, overrides, truth=truth, threads=args.threads)
    out_dir = export.write_experiment(report, _out_dir(args, args.name))
    logger.info("[main] experiment %s: %d rows -> %s", args.name, len(report.rows), out_dir)
    return 0


def cmd_simulate(args) -> int:
    """モデルの実現を m 枚の PGM として書き出す。"""
    model = export.load_model(args.model)
    if args.seed is not None:
        model = dataclasses.replace(model, seed=args.seed)
    spec = shapes.default_grid(model, args.dims)
    out_dir = _out_dir(args, "simulate")
    realizations = shapes.sample_realizations(model, args.m, spec)
    width = max(3, len(str(args.m - 1)))
    for i, (mask, _) in enumerate(realizations):
        export.write_mask_pgm(out_dir / f"realization_{i:0{width}d}.pgm", mask)
    export.write_model(out_dir / "model.json", model)
    export.write_grid(out_dir / "grid.json", spec)
    logger.info("[main] %d realizations saved to %s", args.m, out_dir)
    return 0


# ── 引数 ────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="出力ディレクトリ（既定: OUTPUT_DIR/<サブコマンド>）")
    common.add_argument("--seed", type=int, default=None, help="乱数 seed（既定: モデル・設定の値）")
    common.add_argument("--threads", type=int, default=config.THREADS, help="並列スレッド数")
    common.add_argument("--invert", action="store_true", help="PGM の前景・背景を反転して読む")
    common.add_argument("--verbose", action="store_true", help="DEBUG ログを出力する")

    parser = argparse.ArgumentParser(description="ODF に基づくランダム閉集合の期待値と境界推定")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("odf", parents=[common], help="画像の ODF を計算する")
    p.add_argument("image")
    p.add_argument("--spacing", type=float, default=None)
    p.set_defaults(func=cmd_odf)

    p = sub.add_parser("expect", parents=[common], help="期待集合を推定する")
    p.add_argument("inputs", nargs="+", help="PGM 画像群、またはモデル JSON 1 個")
    p.add_argument("--estimator", choices=expectations.ESTIMATORS, default="odf")
    p.add_argument("--m", type=int, default=config.DEFAULT_REPS, help="モデルから描く実現の数")
    p.add_argument("--q", type=float, default=config.DEFAULT_Q_NORM, help="DA の L^q ノルム")
    p.add_argument("--tol", type=float, default=config.ZERO_TOLERANCE, help="ゼロ等値線のプラトー判定")
    p.add_argument(
        "--max-candidates", type=int, default=config.DA_MAX_CANDIDATES,
        help="DA のしきい値候補を N 個に間引いて走査する（既定: 全候補）",
    )
    p.add_argument("--window", type=int, nargs=4, metavar=("ROW0", "ROW1", "COL0", "COL1"))
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--dims", type=int, default=config.DEFAULT_GRID_DIMS, help="モデル描画格子の一辺")
    p.set_defaults(func=cmd_expect)

    p = sub.add_parser("metrics", parents=[common], help="2 枚のマスクを比較する")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--q", type=float, default=1.0, help="特性関数距離の L^q ノルム")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("experiment", parents=[common], help="名前付き実験を実行する")
    p.add_argument("name", help=f"{' | '.join(experiments.EXPERIMENTS)}")
    p.add_argument("config", nargs="?", default=None, help="設定 JSON（省略時は既定値）")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("simulate", parents=[common], help="モデルの実現を PGM で書き出す")
    p.add_argument("model")
    p.add_argument("--m", type=int, default=config.DEFAULT_IMAGE_M)
    p.add_argument("--dims", type=int, default=config.DEFAULT_GRID_DIMS)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (OdfsetError, OSError) as exc:
        name = type(exc).__name__
        logger.error("[main] %s: %s", name, exc)
        print(json.dumps({"error": name, "message": str(exc)}, ensure_ascii=False), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
