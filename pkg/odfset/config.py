import os

# ── 格子・許容誤差 ──────────────────────────────────────
ZERO_TOLERANCE      = 1e-9   # ゼロ等値線のプラトー判定（領域単位）
LIPSCHITZ_TOLERANCE = 1e-6   # 入力 ODF のリプシッツ検査（超過で警告のみ）
WEIGHT_TOLERANCE    = 1e-9   # 重みの総和 = 1 の許容誤差
MEASURE_RTOL        = 1e-12  # 測度比較（Vorob'ev 判定）の相対スラック

# モデル描画時の既定格子：512×512、外接矩形 + 各辺 25% マージン
DEFAULT_GRID_DIMS = 512
DEFAULT_MARGIN    = 0.25

# ── 乱数 ────────────────────────────────────────────────
# 時刻由来の seed は使わない。実行ごとにバイト単位で同一の出力を保証する
DEFAULT_SEED = 20100823

# ── 距離平均（DA）期待値 ────────────────────────────────
# None = 全候補を走査。整数 N を与えると順位で N 個に間引いて粗く走査し、最良の近傍を走査し直す
DA_MAX_CANDIDATES = None
DEFAULT_Q_NORM    = 2.0

# ── 実験 ────────────────────────────────────────────────
DEFAULT_REPS     = 200    # CI 用。full_scale 指定時は FULL_REPS
FULL_REPS        = 1000
DEFAULT_M_VALUES = [10, 100, 1000]
DEFAULT_FLIP_PROB = 0.1
DEFAULT_IMAGE_M   = 15
ANGLE_GRID_DIMS   = 33    # 角度実験で平均 ODF を描く格子の一辺

# ── 入出力 ──────────────────────────────────────────────
PGM_MAXVAL       = 255
FIELD_PGM_MAXVAL = 65535
SCHEMA_VERSION   = 1
CSV_FLOAT_FORMAT = "%.17g"

OUTPUT_DIR = os.environ.get("OUTPUT_DIR", "output")

# ── 並列実行 ────────────────────────────────────────────
# 1 のときは逐次実行。N > 1 でも結果はビット単位で同一
THREADS = int(os.environ.get("ODFSET_THREADS", "1"))
