"""格子上の集合表現・厳密ユークリッド距離変換・離散 ODF・等値線抽出。

離散集合の規約:
    集合はセル「中心」の点集合として扱う（セル面積ではない）。セル (i, j) の
    中心は origin + spacing·(j + 0.5, i + 0.5) で、行 i は y 方向、列 j は
    x 方向に対応する。d_A, d_{A^c} は中心座標間の最小距離で、格子上の
    ODF は決して 0 にならない。境界はセル間にあり、補間で復元する。
"""

import logging
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np
import xarray as xr
from scipy import ndimage
from skimage import measure

from odfset import config
from odfset.errors import (
    BadWeights,
    DegenerateSet,
    EmptySet,
    GridMismatch,
    InvalidField,
    InvalidGrid,
)

logger = logging.getLogger(__name__)


# ── 型 ──────────────────────────────────────────────────

@dataclass(frozen=True)
class GridSpec:
    """等方な正方格子。spacing は 1 セルあたりの領域単位。"""

    origin: tuple[float, float] = (0.0, 0.0)
    spacing: float = 1.0
    dims: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        spacing = self.spacing
        if np.ndim(spacing) != 0:
            pair = tuple(float(s) for s in np.ravel(spacing))
            if len(pair) != 2 or pair[0] != pair[1]:
                raise InvalidGrid(f"anisotropic spacing {pair} is not supported")
            spacing = pair[0]
        spacing = float(spacing)
        if not np.isfinite(spacing) or spacing <= 0:
            raise InvalidGrid(f"spacing must be positive, got {spacing}")

        origin = tuple(float(v) for v in np.ravel(self.origin))
        if len(origin) != 2 or not all(np.isfinite(origin)):
            raise InvalidGrid(f"origin must be a finite 2-vector, got {self.origin}")

        dims = tuple(int(v) for v in np.ravel(self.dims))
        if len(dims) != 2 or dims[0] < 1 or dims[1] < 1:
            raise InvalidGrid(f"dims must be (rows, cols) >= (1, 1), got {self.dims}")

        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def centered(
        cls,
        center: Sequence[float],
        half_width: float,
        n: int,
    ) -> "GridSpec":
        """center を中心とする一辺 2·half_width の n×n 格子。"""
        spacing = 2.0 * half_width / n
        origin = (float(center[0]) - half_width, float(center[1]) - half_width)
        return cls(origin=origin, spacing=spacing, dims=(n, n))

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @property
    def total_area(self) -> float:
        return self.dims[0] * self.dims[1] * self.cell_area

    def x_coords(self) -> np.ndarray:
        return self.origin[0] + self.spacing * (np.arange(self.dims[1]) + 0.5)

    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.spacing * (np.arange(self.dims[0]) + 0.5)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) を dims 形状で返す。"""
        return np.meshgrid(self.x_coords(), self.y_coords())

    def points(self) -> np.ndarray:
        """セル中心の座標を (rows, cols, 2) で返す。"""
        xx, yy = self.cell_centers()
        return np.stack([xx, yy], axis=-1)

    def index_to_point(self, rows, cols) -> np.ndarray:
        """連続インデックス (row, col) を領域座標 (x, y) に変換する。"""
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        x = self.origin[0] + self.spacing * (cols + 0.5)
        y = self.origin[1] + self.spacing * (rows + 0.5)
        return np.stack([x, y], axis=-1)

    def scaled(self, alpha: float) -> "GridSpec":
        """相似拡大 x → αx に対応する格子（セル配置は不変）。"""
        return GridSpec(
            origin=(alpha * self.origin[0], alpha * self.origin[1]),
            spacing=alpha * self.spacing,
            dims=self.dims,
        )

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "spacing": self.spacing,
            "dims": list(self.dims),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(
            origin=tuple(data.get("origin", (0.0, 0.0))),
            spacing=data.get("spacing", 1.0),
            dims=tuple(data["dims"]),
        )


@dataclass(frozen=True)
class Window:
    """格子の部分矩形 [row0, row1) × [col0, col1)。距離平均の 𝒲 に対応。"""

    row0: int
    row1: int
    col0: int
    col1: int

    def slices(self, grid: GridSpec) -> tuple[slice, slice]:
        rows, cols = grid.dims
        if not (0 <= self.row0 < self.row1 <= rows and 0 <= self.col0 < self.col1 <= cols):
            raise InvalidGrid(f"window {self} does not fit grid dims {grid.dims}")
        return slice(self.row0, self.row1), slice(self.col0, self.col1)


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """集合の特性関数 χ_A を格子上で表す。true = セル中心が A に属する。"""

    grid: GridSpec
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = _frozen_array(self.bits, bool)
        if bits.shape != self.grid.dims:
            raise InvalidField(f"mask shape {bits.shape} != grid dims {self.grid.dims}")
        object.__setattr__(self, "bits", bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def measure(self) -> float:
        """ルベーグ測度 = true セル数 × spacing²。"""
        return self.count * self.grid.cell_area

    @property
    def is_degenerate(self) -> bool:
        return bool(self.bits.all() or not self.bits.any())

    def complement(self) -> "BinaryMask":
        return BinaryMask(self.grid, ~self.bits)

    def subset_of(self, other: "BinaryMask") -> bool:
        check_same_grid([self, other])
        return bool(np.all(~self.bits | other.bits))

    def equals(self, other: "BinaryMask") -> bool:
        return self.grid == other.grid and bool(np.array_equal(self.bits, other.bits))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """格子上の有限実数値場（ODF・被覆関数など）。"""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen_array(self.values, np.float64)
        if values.shape != self.grid.dims:
            raise InvalidField(f"field shape {values.shape} != grid dims {self.grid.dims}")
        if not np.all(np.isfinite(values)):
            raise InvalidField("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def shifted(self, level: float) -> "ScalarField":
        """values − level。"""
        return ScalarField(self.grid, self.values - level)


@dataclass(frozen=True, eq=False)
class Polyline:
    """領域単位の折れ線。closed=True のとき終点→始点の辺を含む（頂点は重複させない）。

    filled=True はプラトー（|field| ≤ tol の面領域）の外周ループを表す。
    """

    vertices: np.ndarray
    closed: bool = False
    filled: bool = dc_field(default=False)

    def __post_init__(self) -> None:
        vertices = _frozen_array(self.vertices, np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise InvalidField(f"polyline vertices must be (n, 2), got {vertices.shape}")
        if len(vertices) < 2:
            raise InvalidField("polyline needs at least 2 vertices")
        if np.any(np.all(np.diff(vertices, axis=0) == 0, axis=1)):
            raise InvalidField("consecutive polyline vertices must be distinct")
        object.__setattr__(self, "vertices", vertices)

    def segments(self) -> np.ndarray:
        """辺の端点対を (k, 2, 2) で返す。"""
        pts = self.vertices
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        return np.stack([pts[:-1], pts[1:]], axis=1)

    def densify(self, step: float) -> np.ndarray:
        """各辺を step 以下の間隔で分割した点列を返す（端点を含む）。"""
        chunks = []
        for a, b in self.segments():
            n = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
            t = np.linspace(0.0, 1.0, n + 1)[:, None]
            chunks.append(a + t * (b - a))
        return np.vstack(chunks)


# ── 補助 ────────────────────────────────────────────────

def check_same_grid(items: Iterable) -> GridSpec:
    """すべての要素が同一の GridSpec を持つことを確認し、それを返す。"""
    items = list(items)
    if not items:
        raise InvalidField("at least one input is required")
    grid = items[0].grid
    for item in items[1:]:
        if item.grid != grid:
            raise GridMismatch(f"grid {item.grid} differs from {grid}")
    return grid


def validate_weights(weights: Sequence[float] | None, n: int) -> np.ndarray:
    """重みを検証して float64 配列で返す。None は一様重み 1/n。"""
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise BadWeights(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise BadWeights("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > config.WEIGHT_TOLERANCE:
        raise BadWeights(f"weights must sum to 1, got {w.sum()!r}")
    return w


def stack_fields(arrays: Sequence[np.ndarray], grid: GridSpec) -> xr.DataArray:
    """実現値の配列を sample 次元に積んだ DataArray を作る。"""
    return xr.DataArray(
        np.stack(arrays),
        dims=("sample", "y", "x"),
        coords={"y": grid.y_coords(), "x": grid.x_coords()},
    )


def complement(mask: BinaryMask) -> BinaryMask:
    return mask.complement()


def lipschitz_excess(field: ScalarField) -> float:
    """8 近傍の組で |f(x) − f(y)| が |x − y| + spacing を超える最大量。

    セル中心規約の離散 ODF は界面をまたぐ隣接セルで 2·spacing 跳ぶため、
    1 セル分を許容する。同じ側の組では離散 ODF は厳密に 1-リプシッツ。
    """
    v = field.values
    h = field.grid.spacing
    excess = 0.0
    pairs = (
        (v[:, :-1], v[:, 1:], h),
        (v[:-1, :], v[1:, :], h),
        (v[:-1, :-1], v[1:, 1:], h * np.sqrt(2.0)),
        (v[:-1, 1:], v[1:, :-1], h * np.sqrt(2.0)),
    )
    for a, b, dist in pairs:
        if a.size:
            excess = max(excess, float(np.max(np.abs(a - b) - dist - h)))
    return max(excess, 0.0)


# ── 距離変換・ODF ───────────────────────────────────────

def _squared_index_distance(bits: np.ndarray) -> np.ndarray:
    """各セルから最近傍 true セルまでの二乗インデックス距離（整数）。

    scipy の厳密 EDT（分離可能な線形時間アルゴリズム）で最近傍の特徴点を求め、
    距離そのものは整数オフセットから計算し直す。
    """
    nearest = ndimage.distance_transform_edt(
        ~bits,
        return_distances=False,
        return_indices=True,
    )
    rows, cols = np.indices(bits.shape)
    dr = nearest[0].astype(np.int64) - rows
    dc = nearest[1].astype(np.int64) - cols
    return dr * dr + dc * dc


def distance_transform(mask: BinaryMask) -> ScalarField:
    """距離関数 d_A：各セル中心から最も近い true セル中心までの距離。"""
    if not mask.bits.any():
        raise EmptySet("distance transform of an empty mask is +inf everywhere")
    d2 = _squared_index_distance(mask.bits)
    return ScalarField(mask.grid, np.sqrt(d2) * mask.grid.spacing)


def oriented_distance_field(mask: BinaryMask) -> ScalarField:
    """ODF b_A = d_A − d_{A^c}。内部で負、外部で正。

    Args:
        mask: 真と偽のセルを両方含むマスク

    Returns:
        mask と同じ格子の ScalarField（領域単位）。境界に接するセルは ±spacing 以上。

    Raises:
        DegenerateSet: mask が全面 true または全面 false
    """
    if mask.is_degenerate:
        raise DegenerateSet("ODF needs at least one true and one false cell")
    inside = distance_transform(mask).values
    outside = distance_transform(mask.complement()).values
    return ScalarField(mask.grid, inside - outside)


def weighted_mean_fields(
    fields: Sequence[ScalarField],
    weights: Sequence[float] | None = None,
) -> ScalarField:
    """場の凸結合 Σ w_i f_i。weights 省略時は一様（標本平均 ODF）。"""
    fields = list(fields)
    grid = check_same_grid(fields)
    w = validate_weights(weights, len(fields))
    stack = stack_fields([f.values for f in fields], grid)
    mean = stack.weighted(xr.DataArray(w, dims="sample")).mean("sample")
    return ScalarField(grid, mean.values)


def sublevel_mask(field: ScalarField, level: float) -> BinaryMask:
    """{x : field(x) ≤ level}。"""
    return BinaryMask(field.grid, field.values <= level)


# ── 等値線 ──────────────────────────────────────────────

def _to_polyline(grid: GridSpec, rc: np.ndarray, closed: bool, filled: bool = False) -> Polyline | None:
    pts = grid.index_to_point(rc[:, 0], rc[:, 1])
    keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
    pts = pts[keep]
    if closed and len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 2:
        return None
    if len(pts) < 3:
        closed = False
    return Polyline(pts, closed=closed, filled=filled)


def _plateau_loops(grid: GridSpec, near: np.ndarray) -> list[Polyline]:
    """4 隅すべてが |値| ≤ tol のセル群（プラトー）の外周ループを返す。"""
    if near.shape[0] < 2 or near.shape[1] < 2:
        return []
    flat = near[:-1, :-1] & near[1:, :-1] & near[:-1, 1:] & near[1:, 1:]
    if not flat.any():
        return []

    padded = np.pad(flat, 1)
    core = padded[1:-1, 1:-1]
    outgoing: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def _add(sel: np.ndarray, start: tuple[int, int], end: tuple[int, int]) -> None:
        ii, jj = np.nonzero(sel)
        for i, j in zip(ii.tolist(), jj.tolist()):
            a = (i + start[0], j + start[1])
            b = (i + end[0], j + end[1])
            outgoing.setdefault(a, []).append(b)

    # 隣接セルと共有しない辺だけを向き付きで集める
    _add(core & ~padded[:-2, 1:-1], (0, 0), (0, 1))
    _add(core & ~padded[1:-1, 2:], (0, 1), (1, 1))
    _add(core & ~padded[2:, 1:-1], (1, 1), (1, 0))
    _add(core & ~padded[1:-1, :-2], (1, 0), (0, 0))
    for ends in outgoing.values():
        ends.sort()

    loops = []
    while outgoing:
        start = min(outgoing)
        path = [start]
        current = start
        while True:
            ends = outgoing[current]
            nxt = ends.pop(0)
            if not ends:
                del outgoing[current]
            if nxt == start:
                break
            path.append(nxt)
            current = nxt

        nodes = np.array(path, dtype=np.float64)
        # 共線な中間頂点を除く
        prev = np.roll(nodes, 1, axis=0)
        post = np.roll(nodes, -1, axis=0)
        d_in = nodes - prev
        d_out = post - nodes
        corner = (d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]) != 0
        nodes = nodes[corner] if corner.sum() >= 3 else nodes
        poly = _to_polyline(grid, nodes, closed=True, filled=True)
        if poly is not None:
            loops.append(poly)
    return loops


def zero_isocontour(
    field: ScalarField,
    tolerance: float = config.ZERO_TOLERANCE,
    *,
    level: float = 0.0,
) -> list[Polyline]:
    """field = level の等値線を marching squares で抽出する。

    セル辺上で線形補間した頂点を領域単位で返す。4 隅とも |field − level| ≤
    tolerance のセルはプラトー（面領域）とみなし、その外周を filled=True の
    閉ループとして追加する。符号が一定なら空リスト。
    """
    values = field.shifted(level).values if level else field.values
    if min(values.shape) < 2:
        return []

    polylines = []
    for rc in measure.find_contours(values, 0.0):
        closed = len(rc) > 2 and np.array_equal(rc[0], rc[-1])
        poly = _to_polyline(field.grid, rc, closed=closed)
        if poly is not None:
            polylines.append(poly)

    polylines.extend(_plateau_loops(field.grid, np.abs(values) <= tolerance))
    logger.debug("[grid] isocontour level=%g: %d polylines", level, len(polylines))
    return polylines
