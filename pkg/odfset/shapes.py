"""解析的なパラメトリック形状・分離可能 ODF・パラメータ分布上のランダム集合モデル。

形状族と生成パラメータ θ:
    singleton         A = {θ}, θ ∈ R²                         b = |x − θ|
    ball              中心 c 固定、半径 θ                        b = |x − c| − θ
    ball_sqrt_radius  中心 c 固定、半径 √θ                       b = |x − c| − √θ
    half_plane        A = {x₁ ≤ θ}                              b = x₁ − θ
    upper_half_plane  A = {x₂ ≥ x₁ tan θ}, θ ∈ (−π/2, π/2]      b = x₁ sin θ − x₂ cos θ
    flashing_disc     θ = 1 で原点の円板、θ = 0 で a 中心の円板    b = |x − a(θ)| − r
    set_or_boundary   θ = 1 で ∂B、θ = 0 で B                     b = |b_B| または b_B
"""

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from odfset import config
from odfset.errors import (
    BadConfig,
    DimMismatch,
    InvalidField,
    NoClosedForm,
    NotSeparable,
)
from odfset.grid import BinaryMask, GridSpec, ScalarField
from odfset.parallel import map_ordered

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2.0


def _vec2(v) -> tuple[float, float]:
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.shape != (2,):
        raise DimMismatch(f"expected a 2-vector, got {v!r}")
    return float(arr[0]), float(arr[1])


def _norm(points: np.ndarray, center=(0.0, 0.0)) -> np.ndarray:
    return np.hypot(points[..., 0] - center[0], points[..., 1] - center[1])


def polar_angle(points: np.ndarray) -> np.ndarray:
    """ω = atan2(x₂, x₁)。arcsin(x₂/|x|) を全平面に拡張した分枝。"""
    points = np.asarray(points, dtype=np.float64)
    return np.arctan2(points[..., 1], points[..., 0])


# ── 形状 ────────────────────────────────────────────────

@dataclass(frozen=True)
class Singleton:
    theta: tuple[float, float]
    kind = "singleton"

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", _vec2(self.theta))

    def odf(self, points: np.ndarray) -> np.ndarray:
        return _norm(points, self.theta)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float]
    radius: float
    kind = "ball"

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vec2(self.center))
        if not self.radius > 0:
            raise InvalidField(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def odf(self, points: np.ndarray) -> np.ndarray:
        return _norm(points, self.center) - self.radius


@dataclass(frozen=True)
class HalfPlane:
    theta1: float
    kind = "half_plane"

    def odf(self, points: np.ndarray) -> np.ndarray:
        return points[..., 0] - float(self.theta1)


@dataclass(frozen=True)
class UpperHalfPlane:
    theta: float
    kind = "upper_half_plane"

    def __post_init__(self) -> None:
        if not -HALF_PI < self.theta <= HALF_PI:
            raise InvalidField(f"angle must lie in (-pi/2, pi/2], got {self.theta}")

    def odf(self, points: np.ndarray) -> np.ndarray:
        # |x| sin(θ − ω)。原点では連続性により 0
        return _norm(points) * np.sin(self.theta - polar_angle(points))


@dataclass(frozen=True)
class Strip:
    """縦帯 {lo ≤ x₁ ≤ hi}。区間 [lo, hi] を平面に埋め込んだもの。"""

    lo: float
    hi: float
    kind = "strip"

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise InvalidField(f"strip needs lo < hi, got [{self.lo}, {self.hi}]")

    def odf(self, points: np.ndarray) -> np.ndarray:
        mid = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        return np.abs(points[..., 0] - mid) - half


@dataclass(frozen=True)
class FlashingDisc:
    a: tuple[float, float]
    r: float
    branch: str = "origin"
    kind = "flashing_disc"

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", _vec2(self.a))
        if not self.r > 0:
            raise InvalidField(f"disc radius must be positive, got {self.r}")
        if self.branch not in ("origin", "shifted"):
            raise InvalidField(f"unknown flashing-disc branch {self.branch!r}")

    def odf(self, points: np.ndarray) -> np.ndarray:
        center = (0.0, 0.0) if self.branch == "origin" else self.a
        return _norm(points, center) - self.r


@dataclass(frozen=True)
class SetOrBoundary:
    base: "ParametricShape"
    branch: str = "set"
    kind = "set_or_boundary"

    def __post_init__(self) -> None:
        if self.branch not in ("set", "boundary"):
            raise InvalidField(f"unknown set-or-boundary branch {self.branch!r}")

    def odf(self, points: np.ndarray) -> np.ndarray:
        # ∂B の ODF は B^c で b_B、∂B で 0、int B で −b_B、すなわち |b_B|
        base = self.base.odf(points)
        return np.abs(base) if self.branch == "boundary" else base


ParametricShape = Union[
    Singleton, Ball, HalfPlane, UpperHalfPlane, Strip, FlashingDisc, SetOrBoundary
]


def odf_closed_form(shape: ParametricShape, x) -> float | np.ndarray:
    """連続体上の厳密な ODF 値。x は 2 ベクトルまたは (..., 2) 配列。"""
    points = np.asarray(x, dtype=np.float64)
    if points.shape[-1] != 2:
        raise DimMismatch(f"points must have a trailing axis of length 2, got {points.shape}")
    values = shape.odf(points)
    return float(values) if points.ndim == 1 else values


def render(shape: ParametricShape, grid: GridSpec) -> tuple[BinaryMask, ScalarField]:
    """セル中心で閉形式 ODF を評価し、(b ≤ 0 のマスク, ODF 場) を返す。"""
    values = shape.odf(grid.points())
    return BinaryMask(grid, values <= 0), ScalarField(grid, values)


def shape_to_dict(shape: ParametricShape) -> dict:
    if isinstance(shape, SetOrBoundary):
        return {"kind": shape.kind, "base": shape_to_dict(shape.base), "branch": shape.branch}
    data = {"kind": shape.kind}
    for name in shape.__dataclass_fields__:
        value = getattr(shape, name)
        data[name] = list(value) if isinstance(value, tuple) else value
    return data


_SHAPE_KINDS = {
    cls.kind: cls
    for cls in (Singleton, Ball, HalfPlane, UpperHalfPlane, Strip, FlashingDisc, SetOrBoundary)
}


def shape_from_dict(data: dict) -> ParametricShape:
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in _SHAPE_KINDS:
        raise BadConfig(f"unknown shape kind {kind!r}; valid: {sorted(_SHAPE_KINDS)}")
    if kind == "set_or_boundary":
        data["base"] = shape_from_dict(data["base"])
    try:
        return _SHAPE_KINDS[kind](**data)
    except TypeError as exc:
        raise BadConfig(f"bad parameters for shape {kind!r}: {exc}") from exc


# ── パラメータ分布 ──────────────────────────────────────

def _as_tuple(v) -> tuple[float, ...]:
    return tuple(float(x) for x in np.ravel(np.asarray(v, dtype=np.float64)))


@dataclass(frozen=True)
class PointMass:
    value: tuple[float, ...]
    type = "point_mass"

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", _as_tuple(self.value))

    @property
    def dim(self) -> int:
        return len(self.value)

    def mean(self) -> np.ndarray:
        return np.array(self.value)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([self.value]), np.array([1.0])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.value), np.array(self.value)

    def transform(self, u: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.array(self.value), (len(u), self.dim)).copy()

    def to_dict(self) -> dict:
        return {"type": self.type, "params": {"value": list(self.value)}}


@dataclass(frozen=True)
class Uniform:
    """座標ごとに独立な一様分布 U(low, high)。"""

    low: tuple[float, ...]
    high: tuple[float, ...]
    type = "uniform"

    def __post_init__(self) -> None:
        low, high = _as_tuple(self.low), _as_tuple(self.high)
        if len(low) != len(high) or not 1 <= len(low) <= 4:
            raise BadConfig("uniform law needs matching low/high of length 1..4")
        if not all(a < b for a, b in zip(low, high)):
            raise BadConfig(f"uniform law needs low < high, got {low} / {high}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return len(self.low)

    def mean(self) -> np.ndarray:
        return (np.array(self.low) + np.array(self.high)) / 2.0

    def sd(self) -> np.ndarray:
        return (np.array(self.high) - np.array(self.low)) / math.sqrt(12.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.low), np.array(self.high)

    def transform(self, u: np.ndarray) -> np.ndarray:
        low, high = np.array(self.low), np.array(self.high)
        return low + (high - low) * u[:, : self.dim]

    def to_dict(self) -> dict:
        return {"type": self.type, "params": {"low": list(self.low), "high": list(self.high)}}


@dataclass(frozen=True)
class Bernoulli:
    """θ = 1 を確率 p、θ = 0 を確率 1 − p でとる。"""

    p: float
    type = "bernoulli"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise BadConfig(f"Bernoulli p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "p", float(self.p))

    @property
    def dim(self) -> int:
        return 1

    def mean(self) -> np.ndarray:
        return np.array([self.p])

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([[1.0], [0.0]]), np.array([self.p, 1.0 - self.p])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([0.0]), np.array([1.0])

    def transform(self, u: np.ndarray) -> np.ndarray:
        return (u[:, :1] < self.p).astype(np.float64)

    def to_dict(self) -> dict:
        return {"type": self.type, "params": {"p": self.p}}


@dataclass(frozen=True)
class Discrete:
    values: tuple[tuple[float, ...], ...]
    probs: tuple[float, ...]
    type = "discrete"

    def __post_init__(self) -> None:
        values = tuple(_as_tuple(v) for v in self.values)
        probs = _as_tuple(self.probs)
        if not values or len(values) != len(probs):
            raise BadConfig("discrete law needs one probability per value")
        if len({len(v) for v in values}) != 1:
            raise BadConfig("discrete law values must share one dimension")
        if any(p < 0 or p > 1 for p in probs) or abs(sum(probs) - 1.0) > config.WEIGHT_TOLERANCE:
            raise BadConfig(f"discrete probabilities must lie in [0, 1] and sum to 1, got {probs}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return len(self.values[0])

    def mean(self) -> np.ndarray:
        return np.array(self.probs) @ np.array(self.values)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.values), np.array(self.probs)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        values = np.array(self.values)
        return values.min(axis=0), values.max(axis=0)

    def transform(self, u: np.ndarray) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, u[:, 0], side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        return np.array(self.values)[idx]

    def to_dict(self) -> dict:
        return {
            "type": self.type,
            "params": {"values": [list(v) for v in self.values], "probs": list(self.probs)},
        }


Law = Union[PointMass, Uniform, Bernoulli, Discrete]


def law_from_dict(data: dict) -> Law:
    kind = data.get("type")
    params = data.get("params", {})
    try:
        if kind == "point_mass":
            return PointMass(params["value"])
        if kind == "uniform":
            return Uniform(params["low"], params["high"])
        if kind == "bernoulli":
            return Bernoulli(params["p"])
        if kind == "discrete":
            return Discrete(params["values"], params["probs"])
    except KeyError as exc:
        raise BadConfig(f"law {kind!r} is missing parameter {exc}") from exc
    raise BadConfig(f"unknown law type {kind!r}; valid: bernoulli, discrete, point_mass, uniform")


# ── ランダム集合モデル ──────────────────────────────────

FAMILIES = (
    "singleton",
    "ball",
    "ball_sqrt_radius",
    "half_plane",
    "upper_half_plane",
    "flashing_disc",
    "set_or_boundary",
)
_TWO_SHAPE_FAMILIES = ("flashing_disc", "set_or_boundary")


@dataclass(frozen=True)
class RandomSetModel:
    """形状族 + パラメータ分布 + seed。params は族ごとの固定パラメータ。

    params:
        ball, ball_sqrt_radius  center（既定 (0, 0)）
        flashing_disc           a（必須）、r（既定 1）
        set_or_boundary         base（形状 dict、必須）
    """

    family: str
    law: Law
    seed: int = config.DEFAULT_SEED
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise BadConfig(f"unknown family {self.family!r}; valid: {list(FAMILIES)}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise BadConfig(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        expected_dim = 2 if self.family == "singleton" else 1
        if self.law.dim != expected_dim:
            raise BadConfig(f"family {self.family!r} needs a {expected_dim}-D law, got {self.law.dim}-D")
        if self.family in _TWO_SHAPE_FAMILIES and not isinstance(self.law, Bernoulli):
            raise BadConfig(f"family {self.family!r} needs a Bernoulli law")
        if self.family == "flashing_disc" and "a" not in self.params:
            raise BadConfig("flashing_disc needs params.a")
        if self.family == "set_or_boundary" and "base" not in self.params:
            raise BadConfig("set_or_boundary needs params.base")

    # 固定パラメータ
    @property
    def center(self) -> tuple[float, float]:
        return _vec2(self.params.get("center", (0.0, 0.0)))

    @property
    def disc_radius(self) -> float:
        return float(self.params.get("r", 1.0))

    @property
    def shift(self) -> tuple[float, float]:
        return _vec2(self.params["a"])

    @property
    def base(self) -> ParametricShape:
        base = self.params["base"]
        return base if not isinstance(base, dict) else shape_from_dict(base)

    def shape_at(self, theta) -> ParametricShape:
        """生成パラメータ θ に対応する集合 A(θ)。"""
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        fam = self.family
        if fam == "singleton":
            return Singleton(theta[:2])
        if fam == "ball":
            return Ball(self.center, theta[0])
        if fam == "ball_sqrt_radius":
            return Ball(self.center, math.sqrt(theta[0]))
        if fam == "half_plane":
            return HalfPlane(float(theta[0]))
        if fam == "upper_half_plane":
            return UpperHalfPlane(float(theta[0]))
        if fam == "flashing_disc":
            branch = "origin" if theta[0] == 1.0 else "shifted"
            return FlashingDisc(self.shift, self.disc_radius, branch)
        branch = "boundary" if theta[0] == 1.0 else "set"
        return SetOrBoundary(self.base, branch)

    def to_dict(self) -> dict:
        params = dict(self.params)
        if "base" in params and not isinstance(params["base"], dict):
            params["base"] = shape_to_dict(params["base"])
        return {
            "schema_version": config.SCHEMA_VERSION,
            "family": self.family,
            "params": params,
            "law": self.law.to_dict(),
            "seed": self.seed,
        }


def model_from_dict(data: dict) -> RandomSetModel:
    version = data.get("schema_version", config.SCHEMA_VERSION)
    if version != config.SCHEMA_VERSION:
        raise BadConfig(f"unsupported model schema_version {version}")
    unknown = set(data) - {"schema_version", "family", "params", "law", "seed"}
    if unknown:
        raise BadConfig(f"unknown model keys: {sorted(unknown)}")
    if "family" not in data or "law" not in data:
        raise BadConfig("model needs 'family' and 'law'")
    return RandomSetModel(
        family=data["family"],
        law=law_from_dict(data["law"]),
        seed=data.get("seed", config.DEFAULT_SEED),
        params=dict(data.get("params", {})),
    )


def family_odf(model: RandomSetModel, thetas: np.ndarray, points: np.ndarray) -> np.ndarray:
    """θ の行ごとに closed-form ODF を評価し (m, n) で返す。shape_at(θ).odf のベクトル版。"""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    t = thetas[:, :1]
    fam = model.family
    if fam == "singleton":
        dx = points[None, :, 0] - thetas[:, None, 0]
        dy = points[None, :, 1] - thetas[:, None, 1]
        return np.hypot(dx, dy)
    if fam == "ball":
        return _norm(points, model.center)[None, :] - t
    if fam == "ball_sqrt_radius":
        return _norm(points, model.center)[None, :] - np.sqrt(t)
    if fam == "half_plane":
        return points[None, :, 0] - t
    if fam == "upper_half_plane":
        return _norm(points)[None, :] * np.sin(t - polar_angle(points)[None, :])
    if fam == "flashing_disc":
        near = _norm(points)[None, :]
        far = _norm(points, model.shift)[None, :]
        return np.where(t == 1.0, near, far) - model.disc_radius
    base = model.base.odf(points)[None, :]
    return np.where(t == 1.0, np.abs(base), base)


# ── 乱数（カウンタ方式）────────────────────────────────

UNIFORMS_PER_DRAW = 4


def draw_uniforms(seed: int, start: int, n: int) -> np.ndarray:
    """draw i（i = start .. start+n−1）用の一様乱数を (n, 4) で返す。

    鍵 = seed の Philox で、draw i はカウンタ i のブロック（64bit × 4）を使う。
    どの順序・分割で生成しても同じ draw には同じ値が出る。
    """
    bitgen = np.random.Philox(key=int(seed), counter=int(start))
    return np.random.Generator(bitgen).random((n, UNIFORMS_PER_DRAW))


def draw_parameters(model: RandomSetModel, m: int, start: int = 0) -> np.ndarray:
    """draw start .. start+m−1 の θ を (m, dim) で返す。"""
    if m < 1:
        raise BadConfig(f"number of draws must be >= 1, got {m}")
    return model.law.transform(draw_uniforms(model.seed, start, m))


def sample_realizations(
    model: RandomSetModel,
    m: int,
    grid: GridSpec,
) -> list[tuple[BinaryMask, ScalarField]]:
    """m 個の i.i.d. 実現を格子上に描画する（マスクと閉形式 ODF 場）。"""
    thetas = draw_parameters(model, m)
    realizations = map_ordered(lambda theta: render(model.shape_at(theta), grid), thetas)
    logger.info("[shapes] %s: rendered %d realizations on %s", model.family, m, grid.dims)
    return realizations


def sample_odf_at(model: RandomSetModel, points, m: int, start: int = 0) -> np.ndarray:
    """m 個の実現の閉形式 ODF を points で評価して (m, n) で返す。"""
    return family_odf(model, draw_parameters(model, m, start), points)


# ── 期待 ODF の閉形式 ───────────────────────────────────

def _mean_sqrt_uniform(a: float, b: float) -> float:
    return (2.0 / 3.0) * (b ** 1.5 - a ** 1.5) / (b - a)


def expected_odf_closed_form(model: RandomSetModel, x) -> float | np.ndarray:
    """E[b_A(x)] の閉形式。

    有限台の分布（点質量・Bernoulli・離散）は任意の族で厳密な有限和になる。
    一様分布は ball / half_plane（θ に線形）、ball_sqrt_radius、
    upper_half_plane のみ。その他は NoClosedForm。
    """
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    pts = points.reshape(-1, 2)
    law = model.law

    if isinstance(law, (PointMass, Bernoulli, Discrete)):
        support, probs = law.support()
        values = probs @ family_odf(model, support, pts)
    elif model.family in ("ball", "half_plane"):
        values = family_odf(model, law.mean()[None, :], pts)[0]
    elif model.family == "ball_sqrt_radius":
        values = _norm(pts, model.center) - _mean_sqrt_uniform(law.low[0], law.high[0])
    elif model.family == "upper_half_plane":
        a, b = law.low[0], law.high[0]
        scale = 2.0 / (b - a) * math.sin((b - a) / 2.0)
        values = scale * _norm(pts) * np.sin((a + b) / 2.0 - polar_angle(pts))
    else:
        raise NoClosedForm(f"no closed-form expected ODF for {model.family} with {law.type} law")

    values = values.reshape(points.shape[:-1])
    return float(values) if single else values


def expected_odf_field(model: RandomSetModel, grid: GridSpec) -> ScalarField:
    return ScalarField(grid, expected_odf_closed_form(model, grid.points()))


# ── 分離可能 ODF ────────────────────────────────────────

@dataclass(frozen=True)
class CovMatrix:
    """K×K 対称半正定値行列。"""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimMismatch(f"covariance must be square, got {m.shape}")
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
            raise InvalidField("covariance must be symmetric")
        if m.size and np.linalg.eigvalsh(m).min() < -1e-9:
            raise InvalidField("covariance must be positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class SeparableODF:
    """b(x; θ) = hᵀ(x) g(θ)。構築時に閉形式との一致を自己検査する。"""

    family: str
    h_names: tuple[str, ...]
    h: tuple[Callable[[np.ndarray], np.ndarray], ...]
    g: tuple[Callable[[np.ndarray], np.ndarray], ...]
    reference: Callable[[np.ndarray, np.ndarray], np.ndarray]
    theta_range: tuple[float, float]

    def __post_init__(self) -> None:
        if not self.h or len(self.h) != len(self.g) or len(self.h) != len(self.h_names):
            raise DimMismatch("h and g must have the same positive length")
        rng = np.random.default_rng(0)
        points = rng.uniform(-10.0, 10.0, size=(1000, 2))
        thetas = rng.uniform(*self.theta_range, size=1000)
        err = np.max(np.abs(self.evaluate(points, thetas) - self.reference(points, thetas)))
        if not err <= 1e-12:
            raise NotSeparable(f"{self.family}: decomposition self-check failed (max error {err:.3g})")

    @property
    def k(self) -> int:
        return len(self.h)

    def h_matrix(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.stack([np.broadcast_to(f(points), points.shape[:-1]) for f in self.h], axis=-1)

    def g_vector(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        return np.stack([np.broadcast_to(f(theta), theta.shape) for f in self.g], axis=-1)

    def evaluate(self, points, theta) -> np.ndarray:
        return np.sum(self.h_matrix(points) * self.g_vector(theta), axis=-1)


def separable_decomposition(family: str, center=(0.0, 0.0)) -> SeparableODF:
    """族の ODF の分離形 hᵀ(x)g(θ) を返す。flashing_disc などは NotSeparable。"""
    c = _vec2(center)

    if family == "ball":
        return SeparableODF(
            family,
            ("|x-c|", "-1"),
            (lambda p: _norm(p, c), lambda p: -np.ones(p.shape[:-1])),
            (lambda t: np.ones_like(t), lambda t: t),
            lambda p, t: _norm(p, c) - t,
            (0.1, 5.0),
        )
    if family == "ball_sqrt_radius":
        return SeparableODF(
            family,
            ("|x-c|", "1"),
            (lambda p: _norm(p, c), lambda p: np.ones(p.shape[:-1])),
            (lambda t: np.ones_like(t), lambda t: -np.sqrt(t)),
            lambda p, t: _norm(p, c) - np.sqrt(t),
            (0.01, 4.0),
        )
    if family == "half_plane":
        return SeparableODF(
            family,
            ("x1", "-1"),
            (lambda p: p[..., 0], lambda p: -np.ones(p.shape[:-1])),
            (lambda t: np.ones_like(t), lambda t: t),
            lambda p, t: p[..., 0] - t,
            (-5.0, 5.0),
        )
    if family == "upper_half_plane":
        return SeparableODF(
            family,
            ("x1", "-x2"),
            (lambda p: p[..., 0], lambda p: -p[..., 1]),
            (np.sin, np.cos),
            lambda p, t: _norm(p) * np.sin(t - polar_angle(p)),
            (-HALF_PI + 1e-9, HALF_PI),
        )
    raise NotSeparable(f"the ODF of family {family!r} is not separable")


def separable_covariance(decomp: SeparableODF, cov_g: CovMatrix, x, y) -> float:
    """cov(b_t(x), b_τ(y)) = hᵀ(x) cov(g(Θ_t), g(Θ_τ)) h(y)。"""
    if cov_g.k != decomp.k:
        raise DimMismatch(f"covariance is {cov_g.k}x{cov_g.k}, decomposition has K={decomp.k}")
    hx = decomp.h_matrix(np.asarray(_vec2(x)))
    hy = decomp.h_matrix(np.asarray(_vec2(y)))
    return float(hx @ cov_g.matrix @ hy)


def empirical_g_covariance(decomp: SeparableODF, thetas: Sequence[float]) -> CovMatrix:
    """g(Θ_t) の標本共分散行列。"""
    g = decomp.g_vector(np.asarray(thetas, dtype=np.float64).ravel())
    cov = np.atleast_2d(np.cov(g, rowvar=False))
    return CovMatrix((cov + cov.T) / 2.0)


def _expected_component(law: Law, func: Callable[[np.ndarray], np.ndarray]) -> float:
    if isinstance(law, Uniform):
        a, b = law.low[0], law.high[0]
        value, _ = integrate.quad(lambda t: float(func(np.asarray(t))), a, b)
        return value / (b - a)
    support, probs = law.support()
    return float(probs @ func(support[:, 0]))


def reparametrized_parameter(decomp: SeparableODF, law: Law) -> float:
    """b = h(x) + g(θ) 型で η = g⁻¹(E g(Θ)) を求める。E[A(Θ)] = A(η)。"""
    if decomp.k != 2 or decomp.family == "upper_half_plane":
        raise NoClosedForm(f"{decomp.family}: reparametrization needs the h(x) + g(theta) form")
    g_theta = decomp.g[1]
    target = _expected_component(law, g_theta)
    lo, hi = (float(v[0]) for v in law.bounds())
    if lo == hi:
        return lo
    return optimize.brentq(lambda t: float(g_theta(np.asarray(t))) - target, lo, hi)


# ── 描画範囲 ────────────────────────────────────────────

def _shape_extent(shape: ParametricShape) -> tuple[float, float, float, float]:
    if isinstance(shape, Ball):
        cx, cy = shape.center
        r = shape.radius
        return cx - r, cx + r, cy - r, cy + r
    if isinstance(shape, Strip):
        half = (shape.hi - shape.lo) / 2.0
        return shape.lo, shape.hi, -half, half
    if isinstance(shape, SetOrBoundary):
        return _shape_extent(shape.base)
    if isinstance(shape, FlashingDisc):
        ax, ay = shape.a
        r = shape.r
        return min(0.0, ax) - r, max(0.0, ax) + r, min(0.0, ay) - r, max(0.0, ay) + r
    return -1.0, 1.0, -1.0, 1.0


def model_extent(model: RandomSetModel) -> tuple[float, float, float, float]:
    """モデルの実現をすべて含む外接矩形 (xmin, xmax, ymin, ymax)。"""
    lo, hi = model.law.bounds()
    fam = model.family
    if fam in ("ball", "ball_sqrt_radius"):
        r = hi[0] if fam == "ball" else math.sqrt(hi[0])
        cx, cy = model.center
        return cx - r, cx + r, cy - r, cy + r
    if fam == "singleton":
        return lo[0] - 0.5, hi[0] + 0.5, lo[1] - 0.5, hi[1] + 0.5
    if fam == "half_plane":
        half = (hi[0] - lo[0]) / 2.0 + 1.0
        return lo[0] - 1.0, hi[0] + 1.0, -half, half
    if fam == "upper_half_plane":
        return -1.0, 1.0, -1.0, 1.0
    if fam == "flashing_disc":
        return _shape_extent(FlashingDisc(model.shift, model.disc_radius))
    return _shape_extent(model.base)


def default_grid(
    model: RandomSetModel,
    dims: int = config.DEFAULT_GRID_DIMS,
    margin: float = config.DEFAULT_MARGIN,
) -> GridSpec:
    """外接矩形の長辺に各側 margin を加えた正方形を dims×dims に分割する。"""
    xmin, xmax, ymin, ymax = model_extent(model)
    side = max(xmax - xmin, ymax - ymin) * (1.0 + 2.0 * margin)
    center = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0)
    return GridSpec.centered(center, side / 2.0, dims)
