"""odfset の例外階層。

すべて OdfsetError と ValueError を継承する。CLI は OdfsetError を捕捉して
構造化エラーを出力し、非ゼロで終了する。
"""


class OdfsetError(ValueError):
    """odfset が送出する例外の基底クラス。"""


class InvalidGrid(OdfsetError):
    pass


class InvalidField(OdfsetError):
    pass


class EmptySet(OdfsetError):
    """空集合の距離関数（d_∅ = +∞）は有限値で表せない。"""


class DegenerateSet(OdfsetError):
    """全面 true / 全面 false のマスク。境界が離散的に空になる。"""


class GridMismatch(OdfsetError):
    pass


class BadWeights(OdfsetError):
    pass


class NoClosedForm(OdfsetError):
    pass


class NotSeparable(OdfsetError):
    pass


class DimMismatch(OdfsetError):
    pass


class EmptyBoundary(OdfsetError):
    pass


class ParseError(OdfsetError):
    pass


class MixedInputs(OdfsetError):
    pass


class UnknownExperiment(OdfsetError):
    pass


class BadConfig(OdfsetError):
    pass
