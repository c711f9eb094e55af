"""Problem instances: TSPLIB / QAPLIB parsing, serialization and generators.

All matrices are stored as ``float64`` numpy arrays and indices are 0-based
internally (TSPLIB and QAPLIB files are 1-based; the parsers translate).

QAPLIB files list two matrices ``A`` and ``B`` whose objective is
``sum_ij a_ij * b_{p(i) p(j)}``.  ``A`` plays the role of the flow between
factories and ``B`` the distance between locations, so ``A -> flow`` and
``B -> dist``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidInstance,
    MalformedHeader,
    MalformedNumber,
    UnknownFormat,
)

__all__ = [
    "Source",
    "TspInstance",
    "QapInstance",
    "GeneratorConfig",
    "parse_tsplib",
    "parse_qaplib",
    "read_instance",
    "write_tsplib",
    "write_qaplib",
    "tsp_to_qap",
    "generate_qap",
    "generate_tsp_matrix",
    "random_qap_matrices",
    "random_tsp_matrices",
    "bundled_path",
    "load_bundled",
]


class Source(enum.Enum):
    EXPLICIT_MATRIX = "explicit"
    EUCLIDEAN_COORDS = "euclidean"


def _check_matrix(name: str, m: np.ndarray, n: int) -> None:
    if m.shape != (n, n):
        raise InvalidInstance(f"{name} must be {n}x{n}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInstance(f"{name} contains non-finite entries")
    if np.any(m < 0):
        raise InvalidInstance(f"{name} contains negative entries")


@dataclass(frozen=True, eq=False)
class TspInstance:
    """Matrix-input TSP instance.

    The diagonal of ``dist`` is forced to zero on construction.
    """

    name: str
    dist: np.ndarray
    source: Source = Source.EXPLICIT_MATRIX
    coords: Optional[np.ndarray] = None

    def __post_init__(self):
        dist = np.array(self.dist, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 1:
            raise InvalidInstance(f"distance matrix must be square, got {dist.shape}")
        np.fill_diagonal(dist, 0.0)
        _check_matrix("dist", dist, dist.shape[0])
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        if self.coords is not None:
            coords = np.array(self.coords, dtype=np.float64)
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @classmethod
    def from_coords(cls, name: str, coords) -> "TspInstance":
        xy = np.asarray(coords, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise InvalidInstance("coords must be an (n, 2) array")
        diff = xy[:, None, :] - xy[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=-1))
        return cls(name, dist, Source.EUCLIDEAN_COORDS, xy)


@dataclass(frozen=True, eq=False)
class QapInstance:
    """QAP instance with ``dist`` over locations and ``flow`` over factories."""

    name: str
    dist: np.ndarray
    flow: np.ndarray

    def __post_init__(self):
        dist = np.array(self.dist, dtype=np.float64)
        flow = np.array(self.flow, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 1:
            raise InvalidInstance(f"distance matrix must be square, got {dist.shape}")
        n = dist.shape[0]
        _check_matrix("dist", dist, n)
        _check_matrix("flow", flow, n)
        dist.setflags(write=False)
        flow.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "flow", flow)

    @property
    def n(self) -> int:
        return self.dist.shape[0]


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    seed: int = 0
    zero_prob: float = 0.0
    symmetric: bool = True
    value_range: tuple = field(default=(0.0, 1.0))

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 <= self.zero_prob < 1.0:
            raise ValueError("zero_prob must lie in [0, 1)")
        low, high = self.value_range
        if not low < high:
            raise ValueError("value_range needs low < high")


# ---------------------------------------------------------------------------
# tokenizing helpers

# tokens that end a data section; anything else non-numeric is an error
_KEYWORD = re.compile(r"^(EOF|[A-Z_]+_SECTION)$", re.IGNORECASE)


def _number(tok: str, line: int, source: Optional[str]) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise MalformedNumber(f"not a number: {tok!r}", line, source) from None
    if not math.isfinite(value):
        raise MalformedNumber(f"non-finite value: {tok!r}", line, source)
    if value < 0:
        raise MalformedNumber(f"negative value: {tok!r}", line, source)
    return value


def _tokens(lines, start: int) -> Iterator[tuple[str, int]]:
    for lineno in range(start, len(lines)):
        for tok in lines[lineno].split():
            yield tok, lineno + 1


# ---------------------------------------------------------------------------
# TSPLIB

_TRI_FORMATS = {"UPPER_ROW", "LOWER_ROW", "UPPER_DIAG_ROW", "LOWER_DIAG_ROW"}
_FORMATS = {"FULL_MATRIX"} | _TRI_FORMATS


def _weight_count(fmt: str, n: int) -> int:
    if fmt == "FULL_MATRIX":
        return n * n
    if fmt in ("UPPER_ROW", "LOWER_ROW"):
        return n * (n - 1) // 2
    return n * (n + 1) // 2


def _triangle_indices(fmt: str, n: int):
    """Row/column index arrays in the order the format lists its entries."""
    rows, cols = [], []
    for i in range(n):
        if fmt == "UPPER_ROW":
            js = range(i + 1, n)
        elif fmt == "UPPER_DIAG_ROW":
            js = range(i, n)
        elif fmt == "LOWER_ROW":
            js = range(0, i)
        else:  # LOWER_DIAG_ROW
            js = range(0, i + 1)
        for j in js:
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)


def _expand(fmt: str, values: np.ndarray, n: int) -> np.ndarray:
    if fmt == "FULL_MATRIX":
        return values.reshape(n, n).copy()
    rows, cols = _triangle_indices(fmt, n)
    m = np.zeros((n, n))
    m[rows, cols] = values
    m[cols, rows] = values
    return m


def parse_tsplib(text: str, source: Optional[str] = None) -> TspInstance:
    """Parse a symmetric TSPLIB file (``EUC_2D`` or ``EXPLICIT`` weights).

    Triangular formats are mirrored into a full symmetric matrix.  ``EUC_2D``
    distances are kept as exact reals, not rounded to integers.
    """
    lines = text.splitlines()
    header: dict[str, str] = {}
    section = None
    section_line = 0
    for lineno, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        key = line.split(":", 1)[0].strip().upper()
        if key in ("NODE_COORD_SECTION", "EDGE_WEIGHT_SECTION"):
            section = key
            section_line = lineno + 1
            break
        if key == "EOF":
            break
        if ":" not in line:
            raise MalformedHeader(f"expected 'KEY : VALUE', got {line!r}", lineno + 1, source)
        header[key] = line.split(":", 1)[1].strip()

    name = header.get("NAME", "unnamed")
    kind = header.get("TYPE", "TSP").split()[0].upper()
    if kind != "TSP":
        raise UnknownFormat(f"unsupported TYPE {kind!r}", None, source)
    if "DIMENSION" not in header:
        raise MalformedHeader("missing DIMENSION", None, source)
    try:
        n = int(header["DIMENSION"])
    except ValueError:
        raise MalformedHeader(f"bad DIMENSION {header['DIMENSION']!r}", None, source) from None
    if n < 1:
        raise MalformedHeader("DIMENSION must be positive", None, source)
    wtype = header.get("EDGE_WEIGHT_TYPE", "").upper()
    if wtype not in ("EUC_2D", "EXPLICIT"):
        raise UnknownFormat(f"unsupported EDGE_WEIGHT_TYPE {wtype!r}", None, source)
    if section is None:
        raise MalformedHeader("no data section found", None, source)

    if wtype == "EUC_2D":
        if section != "NODE_COORD_SECTION":
            raise MalformedHeader("EUC_2D requires NODE_COORD_SECTION", section_line, source)
        coords = np.full((n, 2), np.nan)
        seen = 0
        for lineno in range(section_line, len(lines)):
            parts = lines[lineno].split()
            if not parts:
                continue
            if _KEYWORD.match(parts[0]):
                break
            if len(parts) != 3:
                raise DimensionMismatch(
                    f"coordinate line needs 3 fields, got {len(parts)}", lineno + 1, source
                )
            try:
                idx = int(parts[0])
                x, y = float(parts[1]), float(parts[2])
            except ValueError:
                raise MalformedNumber(f"bad coordinate line {lines[lineno]!r}", lineno + 1, source) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise MalformedNumber("non-finite coordinate", lineno + 1, source)
            if not 1 <= idx <= n:
                raise DimensionMismatch(f"node id {idx} outside 1..{n}", lineno + 1, source)
            coords[idx - 1] = (x, y)
            seen += 1
        if seen != n or np.isnan(coords).any():
            raise DimensionMismatch(f"expected {n} coordinates, got {seen}", None, source)
        return TspInstance.from_coords(name, coords)

    fmt = header.get("EDGE_WEIGHT_FORMAT", "").upper()
    if fmt not in _FORMATS:
        raise UnknownFormat(f"unsupported EDGE_WEIGHT_FORMAT {fmt!r}", None, source)
    if section != "EDGE_WEIGHT_SECTION":
        raise MalformedHeader("EXPLICIT weights require EDGE_WEIGHT_SECTION", section_line, source)
    want = _weight_count(fmt, n)
    values = []
    for tok, lineno in _tokens(lines, section_line):
        if _KEYWORD.match(tok):
            break
        if len(values) == want:
            raise DimensionMismatch(
                f"more than {want} weights for DIMENSION {n} ({fmt})", lineno, source
            )
        values.append(_number(tok, lineno, source))
    if len(values) != want:
        raise DimensionMismatch(
            f"expected {want} weights for DIMENSION {n} ({fmt}), got {len(values)}", None, source
        )
    dist = _expand(fmt, np.array(values, dtype=np.float64), n)
    return TspInstance(name, dist, Source.EXPLICIT_MATRIX)


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_tsplib(t: TspInstance, fmt: str = "FULL_MATRIX", per_line: int = 0) -> str:
    """Serialize ``t`` as TSPLIB text.

    ``fmt="EUC_2D"`` writes coordinates (only valid for coordinate instances);
    otherwise an ``EXPLICIT`` section in the requested edge-weight format.
    Triangular formats assume a symmetric matrix.
    """
    out = [f"NAME : {t.name}", "TYPE : TSP", f"DIMENSION : {t.n}"]
    fmt = fmt.upper()
    if fmt == "EUC_2D":
        if t.coords is None:
            raise UnknownFormat("instance has no coordinates")
        out += ["EDGE_WEIGHT_TYPE : EUC_2D", "NODE_COORD_SECTION"]
        for i, (x, y) in enumerate(t.coords):
            out.append(f"{i + 1} {_fmt(x)} {_fmt(y)}")
    else:
        if fmt not in _FORMATS:
            raise UnknownFormat(f"unsupported EDGE_WEIGHT_FORMAT {fmt!r}")
        out += ["EDGE_WEIGHT_TYPE : EXPLICIT", f"EDGE_WEIGHT_FORMAT : {fmt}", "EDGE_WEIGHT_SECTION"]
        if fmt == "FULL_MATRIX":
            for row in t.dist:
                out.append(" ".join(_fmt(v) for v in row))
        else:
            rows, cols = _triangle_indices(fmt, t.n)
            vals = t.dist[rows, cols]
            if per_line > 0:
                for s in range(0, len(vals), per_line):
                    out.append(" ".join(_fmt(v) for v in vals[s:s + per_line]))
            else:
                for i in range(t.n):
                    row_vals = vals[rows == i]
                    if len(row_vals):
                        out.append(" ".join(_fmt(v) for v in row_vals))
    out.append("EOF")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# QAPLIB

def parse_qaplib(text: str, name: str = "qap", source: Optional[str] = None) -> QapInstance:
    """Parse a QAPLIB ``.dat`` file: ``n`` followed by the flow and distance matrices."""
    lines = text.splitlines()
    toks = _tokens(lines, 0)
    try:
        first, lineno = next(toks)
    except StopIteration:
        raise DimensionMismatch("empty QAPLIB file", None, source) from None
    try:
        n = int(first)
    except ValueError:
        raise MalformedNumber(f"instance size must be an integer, got {first!r}", lineno, source) from None
    if n < 1:
        raise DimensionMismatch("instance size must be positive", lineno, source)
    want = 2 * n * n
    values = []
    for tok, lineno in toks:
        if len(values) == want:
            raise DimensionMismatch(f"trailing data after {want} matrix entries", lineno, source)
        values.append(_number(tok, lineno, source))
    if len(values) != want:
        raise DimensionMismatch(f"expected {want} matrix entries for n={n}, got {len(values)}", None, source)
    arr = np.array(values, dtype=np.float64)
    flow = arr[: n * n].reshape(n, n)
    dist = arr[n * n:].reshape(n, n)
    return QapInstance(name, dist, flow)


def write_qaplib(q: QapInstance) -> str:
    out = [str(q.n), ""]
    out += [" ".join(_fmt(v) for v in row) for row in q.flow]
    out.append("")
    out += [" ".join(_fmt(v) for v in row) for row in q.dist]
    return "\n".join(out) + "\n"


def read_instance(path):
    """Read a ``.tsp`` or ``.dat`` file by extension."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".tsp":
        return parse_tsplib(text, source=str(path))
    return parse_qaplib(text, name=path.stem, source=str(path))


def bundled_path(name: str) -> Path:
    """Path of a bundled benchmark file, e.g. ``"had12"`` or ``"eil76"``."""
    root = resources.files(__package__) / "data"
    for sub, ext in (("qaplib", ".dat"), ("tsplib", ".tsp")):
        p = root / sub / (name + ext)
        if p.is_file():
            return Path(str(p))
    raise FileNotFoundError(f"no bundled instance named {name!r}")


def load_bundled(name: str):
    return read_instance(bundled_path(name))


# ---------------------------------------------------------------------------
# reductions and generators

def tsp_to_qap(t: TspInstance) -> QapInstance:
    """QAP whose flow is the cyclic successor matrix: factory k is the k-th visit."""
    n = t.n
    flow = np.zeros((n, n))
    flow[np.arange(n), (np.arange(n) + 1) % n] = 1.0
    return QapInstance(t.name, t.dist, flow)


def _uniform_matrices(rng, n, size, zero_prob, low, high, symmetric):
    m = rng.uniform(low, high, size=(size, n, n))
    if zero_prob > 0:
        m[rng.random((size, n, n)) < zero_prob] = 0.0
    if symmetric:
        upper = np.triu(m, 1)
        m = upper + upper.transpose(0, 2, 1)
    idx = np.arange(n)
    m[:, idx, idx] = 0.0
    return m


def random_qap_matrices(rng, n, size, zero_prob=0.0, value_range=(0.0, 1.0), symmetric=True):
    """``(dist, flow)`` stacks of shape ``(size, n, n)``.

    Distances are symmetric (when ``symmetric``) with zero diagonal; flows have
    zero diagonal and may be asymmetric.
    """
    low, high = value_range
    dist = _uniform_matrices(rng, n, size, zero_prob, low, high, symmetric)
    flow = _uniform_matrices(rng, n, size, zero_prob, low, high, False)
    return dist, flow


def random_tsp_matrices(rng, n, size, zero_prob=0.0, value_range=(0.0, 1.0), symmetric=True):
    low, high = value_range
    return _uniform_matrices(rng, n, size, zero_prob, low, high, symmetric)


def generate_qap(cfg: GeneratorConfig) -> QapInstance:
    rng = np.random.default_rng(cfg.seed)
    dist, flow = random_qap_matrices(rng, cfg.n, 1, cfg.zero_prob, cfg.value_range, cfg.symmetric)
    return QapInstance(f"rand{cfg.n}_s{cfg.seed}", dist[0], flow[0])


def generate_tsp_matrix(cfg: GeneratorConfig) -> TspInstance:
    rng = np.random.default_rng(cfg.seed)
    dist = random_tsp_matrices(rng, cfg.n, 1, cfg.zero_prob, cfg.value_range, cfg.symmetric)
    return TspInstance(f"randtsp{cfg.n}_s{cfg.seed}", dist[0])
