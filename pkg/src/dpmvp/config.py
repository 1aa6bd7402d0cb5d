"""Run configuration: ``section.key = value`` files, validation and CSV artifacts.

Values are numbers, comma-separated arrays, bare words or double-quoted
expressions.  ``#`` starts a comment outside quotes.  Validation collects
every problem before failing.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .core import DELTA_GRAD, MIN_RESOLUTION, DomainError, GeometryError, GridSpec, ScalarField
from .elliptic import DoublePhase, PLaplace, PxLaplace, VariableCoefficient, default_damping
from .expr import ParseError, normalize, parse_expression, to_text
from .verify import LEMMAS

KINDS = ("double-phase", "p-laplace", "variable-coefficient", "px-laplace")


class ConfigError(ValueError):
    """All validation problems of one configuration, as ``key: reason`` lines."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class RunConfig:
    kind: str
    box: tuple
    eps: float
    dim: int
    h: float
    collar: float
    p: float | None = None
    q: float | None = None
    a: str | None = None
    a_tilde: str | None = None
    p_field: str | None = None
    delta_grad: float = DELTA_GRAD
    boundary: str | None = None
    initial: str | None = None
    reference: str | None = None
    tol: float = 1e-10
    max_iter: int = 10000
    damping: float = 1.0
    tau: float | None = None
    horizon: float | None = None
    lemmas: tuple = LEMMAS[:6]
    functions: tuple = ()
    points: tuple = ()
    t: float | None = None
    time_lag: float | None = None
    eps_start: float = 0.25
    eps_count: int = 4
    verify_tol: float | None = None
    output: str | None = None

    def equation(self):
        if self.kind == "double-phase":
            return DoublePhase(self.p, self.q, self.a or "0")
        if self.kind == "p-laplace":
            return PLaplace(self.p)
        if self.kind == "variable-coefficient":
            return VariableCoefficient(self.p, self.a_tilde)
        return PxLaplace(self.p_field)

    def grid(self) -> GridSpec:
        return GridSpec(self.dim, self.box, self.h, self.collar)

    @property
    def eps_seq(self) -> tuple:
        return tuple(self.eps_start / 2**k for k in range(self.eps_count))

    @property
    def point_list(self) -> list:
        n = self.dim
        return [tuple(self.points[i : i + n]) for i in range(0, len(self.points), n)]


# key -> (field name, type)
_SCHEMA = {
    "equation.kind": ("kind", "word"),
    "equation.p": ("p", "float"),
    "equation.q": ("q", "float"),
    "equation.a": ("a", "expr"),
    "equation.a_tilde": ("a_tilde", "expr"),
    "equation.p_field": ("p_field", "expr"),
    "grid.dim": ("dim", "int"),
    "grid.box": ("box", "floats"),
    "grid.h": ("h", "float"),
    "grid.collar": ("collar", "float"),
    "scheme.eps": ("eps", "float"),
    "scheme.delta_grad": ("delta_grad", "float"),
    "data.boundary": ("boundary", "expr"),
    "data.initial": ("initial", "expr"),
    "data.reference": ("reference", "expr"),
    "solver.tol": ("tol", "float"),
    "solver.max_iter": ("max_iter", "int"),
    "solver.damping": ("damping", "float"),
    "parabolic.tau": ("tau", "float"),
    "parabolic.horizon": ("horizon", "float"),
    "verify.lemmas": ("lemmas", "words"),
    "verify.functions": ("functions", "exprs"),
    "verify.points": ("points", "floats"),
    "verify.t": ("t", "float"),
    "verify.time_lag": ("time_lag", "float"),
    "verify.eps_start": ("eps_start", "float"),
    "verify.eps_count": ("eps_count", "int"),
    "verify.tol": ("verify_tol", "float"),
    "output.path": ("output", "word"),
}
_FIELD_KEY = {name: key for key, (name, _) in _SCHEMA.items()}


# --------------------------------------------------------------------------
# Lexing


def _strip_comment(line: str) -> str:
    inq = False
    for i, c in enumerate(line):
        if c == '"':
            inq = not inq
        elif c == "#" and not inq:
            return line[:i]
    return line


def _split_items(text: str) -> list:
    row = next(csv.reader(io.StringIO(text), skipinitialspace=True))
    return [r.strip() for r in row]


def _expr_text(raw: str) -> str:
    s = raw.strip()
    if len(s) >= 2 and s[0] == s[-1] == '"':
        s = s[1:-1]
    return to_text(normalize(parse_expression(s)))


def _convert(raw: str, typ: str):
    if typ == "word":
        s = raw.strip()
        return s[1:-1] if len(s) >= 2 and s[0] == s[-1] == '"' else s
    if typ == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if typ == "int":
        f = float(raw)
        if f != int(f):
            raise ValueError("must be an integer")
        return int(f)
    if typ == "floats":
        vals = tuple(float(v) for v in _split_items(raw))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("entries must be finite")
        return vals
    if typ == "words":
        return tuple(v for v in _split_items(raw) if v)
    if typ == "expr":
        return _expr_text(raw)
    if typ == "exprs":
        return tuple(_expr_text(v) for v in _split_items(raw) if v)
    raise AssertionError(typ)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate configuration text; raises ConfigError listing every problem."""
    problems = []
    values = {}
    seen = set()
    for n, line in enumerate(text.splitlines(), 1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            problems.append(f"{source}:{n}: expected 'section.key = value'")
            continue
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _SCHEMA:
            problems.append(f"{key}: unknown key ({source}:{n})")
            continue
        if key in seen:
            problems.append(f"{key}: given more than once ({source}:{n})")
            continue
        seen.add(key)
        name, typ = _SCHEMA[key]
        try:
            values[name] = _convert(raw, typ)
        except ParseError as exc:
            problems.append(f"{key}: {exc}")
        except (ValueError, StopIteration) as exc:
            problems.append(f"{key}: cannot read {raw!r} as {typ} ({exc})")
    return _validate(values, problems)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from None
    except UnicodeDecodeError:
        raise ConfigError([f"{path}: not UTF-8 text"]) from None
    return parse_config_text(text, str(path))


# --------------------------------------------------------------------------
# Validation


def _require(values, name, problems) -> bool:
    if values.get(name) is None:
        problems.append(f"{_FIELD_KEY[name]}: required")
        return False
    return True


def _validate(values: dict, problems: list) -> RunConfig:
    v = dict(values)
    kind = v.get("kind")
    if _require(v, "kind", problems) and kind not in KINDS:
        problems.append(f"equation.kind: unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
        kind = None
    _require(v, "box", problems)
    _require(v, "eps", problems)
    eps = v.get("eps")
    if eps is not None and not eps > 0:
        problems.append("scheme.eps: must be positive")
        eps = None

    # exponents
    if kind in ("double-phase", "p-laplace", "variable-coefficient"):
        if _require(v, "p", problems):
            p = v["p"]
            if not p > 1:
                problems.append(f"equation.p: Exponents invariant violated, need 1 < p, got {p}")
            if kind == "double-phase":
                q = v.setdefault("q", p)
                if q < p:
                    problems.append(f"equation.q: Exponents invariant violated, need p <= q, got p={p}, q={q}")
            elif v.get("q") is not None and v["q"] != p:
                problems.append(f"equation.q: must equal p for kind {kind}")
    if kind == "variable-coefficient":
        _require(v, "a_tilde", problems)
    if kind == "px-laplace":
        _require(v, "p_field", problems)
    for name, kinds in (("a", ("double-phase",)), ("a_tilde", ("variable-coefficient",)), ("p_field", ("px-laplace",))):
        if v.get(name) is not None and kind is not None and kind not in kinds:
            problems.append(f"{_FIELD_KEY[name]}: not used by kind {kind}")

    # grid
    box = v.get("box")
    dim = v.get("dim")
    if box is not None:
        if len(box) < 4 or len(box) % 2:
            problems.append("grid.box: need lo1, hi1, lo2, hi2[, ...] (an even count, at least 4)")
            box = None
        else:
            pairs = tuple((box[i], box[i + 1]) for i in range(0, len(box), 2))
            if dim is None:
                dim = len(pairs)
            elif dim != len(pairs):
                problems.append(f"grid.dim: {dim} does not match the {len(pairs)} axes of grid.box")
            for i, (lo, hi) in enumerate(pairs):
                if not hi > lo:
                    problems.append(f"grid.box: axis {i + 1} is empty ([{lo}, {hi}])")
            box = pairs
    if dim is not None and dim < 2:
        problems.append(f"grid.dim: need N >= 2, got {dim}")
    h = v.get("h")
    if h is None and eps is not None:
        h = eps / MIN_RESOLUTION
    if h is not None and eps is not None and h > eps / MIN_RESOLUTION * (1 + 1e-9):
        problems.append(f"grid.h: need h <= eps/{MIN_RESOLUTION} = {eps / MIN_RESOLUTION:g}, got {h:g}")
    if h is not None and not h > 0:
        problems.append("grid.h: must be positive")

    # numbers
    for name, cond, msg in (
        ("tol", lambda x: x > 0, "must be positive"),
        ("max_iter", lambda x: x >= 1, "must be at least 1"),
        ("delta_grad", lambda x: x > 0, "must be positive"),
        ("damping", lambda x: 0 < x <= 1, "must lie in (0, 1]"),
        ("tau", lambda x: x > 0, "must be positive"),
        ("horizon", lambda x: x > 0, "must be positive"),
        ("time_lag", lambda x: x > 0, "must be positive"),
        ("eps_start", lambda x: x > 0, "must be positive"),
        ("eps_count", lambda x: x >= 4, "must be at least 4"),
        ("verify_tol", lambda x: x > 0, "must be positive"),
    ):
        if v.get(name) is not None and not cond(v[name]):
            problems.append(f"{_FIELD_KEY[name]}: {msg}, got {v[name]}")
    bad = [w for w in v.get("lemmas", ()) if w not in LEMMAS]
    if bad:
        problems.append(f"verify.lemmas: unknown id(s) {', '.join(bad)}; known: {', '.join(LEMMAS)}")
    if v.get("points") and dim and len(v["points"]) % dim:
        problems.append(f"verify.points: count {len(v['points'])} is not a multiple of dim {dim}")

    # equation object and lattice scans, whenever their own inputs are sound
    collar = v.get("collar")
    n_before = len(problems)
    grid_ok = box is not None and dim is not None and dim >= 2 and eps is not None and h is not None and h > 0
    grid_ok = grid_ok and not any(p.startswith(("grid.", "scheme.")) for p in problems)
    kind_ok = kind is not None and not any(p.startswith("equation.") for p in problems)
    cfg_kind = _build_kind(kind, v, problems) if kind_ok else None
    if cfg_kind is not None and grid_ok:
        try:
            grid = GridSpec(dim, box, h, eps + 2 * h)
        except DomainError as exc:
            problems.append(f"grid.box: {exc}")
            grid = None
        if grid is not None:
            ga = _scan_fields(cfg_kind, grid, problems)
            if len(problems) == n_before:
                if collar is None:
                    collar = eps * (1 + ga) + 2 * h
                elif collar < eps * (1 + ga) * (1 - 1e-9):
                    problems.append(
                        f"grid.collar: {collar:g} is narrower than eps*(1 + max|grad|) = {eps * (1 + ga):g}"
                    )
            if len(problems) == n_before:
                wide = GridSpec(dim, box, h, collar)
                _scan_fields(cfg_kind, wide, problems)
                if "damping" not in v and len(problems) == n_before:
                    v["damping"] = default_damping(cfg_kind, wide)
    if problems:
        raise ConfigError(problems)
    v["box"] = box
    v["dim"] = dim
    v["h"] = h
    v["collar"] = collar
    return RunConfig(**v)


def _build_kind(kind, v, problems):
    try:
        if kind == "double-phase":
            return DoublePhase(v["p"], v["q"], v.get("a") or "0")
        if kind == "p-laplace":
            return PLaplace(v["p"])
        if kind == "variable-coefficient":
            return VariableCoefficient(v["p"], v["a_tilde"])
        return PxLaplace(v["p_field"])
    except DomainError as exc:
        problems.append(f"equation: {exc}")
        return None


def _scan_fields(kind, grid: GridSpec, problems) -> float:
    """Check sign/range constraints on every lattice node; return max |grad a| (or |grad p|)."""
    # the operator evaluates coefficients on the closed box only
    coords = grid.coords()
    inside = np.ones(grid.shape, dtype=bool)
    tol = 1e-9 * grid.h
    for c, (lo, hi) in zip(coords, grid.box):
        inside &= (c >= lo - tol) & (c <= hi + tol)
    pts = [c[inside] for c in coords]
    t = 0.0
    if isinstance(kind, PLaplace):
        return 0.0
    try:
        if isinstance(kind, PxLaplace):
            kind.p_field.values(pts)
            g = kind.p_field.gradient(pts, h=grid.h)
        else:
            cf = kind.a if isinstance(kind, DoublePhase) else kind.a_tilde
            if isinstance(kind, VariableCoefficient):
                vals = cf.values(pts, t)
                bad = ~(vals >= 1)
                if np.any(bad):
                    i = tuple(np.argwhere(bad)[0])
                    where = tuple(float(c[i]) for c in pts)
                    problems.append(f"equation.a_tilde: must be >= 1, got {vals[i]:g} at point {where}")
                    return 0.0
            else:
                cf.values(pts, t)
            g = cf.gradient(pts, t, h=grid.h)
    except DomainError as exc:
        key = "equation.p_field" if isinstance(kind, PxLaplace) else (
            "equation.a_tilde" if isinstance(kind, VariableCoefficient) else "equation.a")
        problems.append(f"{key}: {exc}")
        return 0.0
    gn = np.sqrt(np.sum(g * g, axis=0))
    if not np.all(np.isfinite(gn)):
        problems.append("equation: coefficient gradient is not finite on the lattice")
        return 0.0
    return float(np.max(gn))


# --------------------------------------------------------------------------
# Serialization


def _fmt(value, typ: str) -> str:
    if typ == "float":
        return repr(float(value))
    if typ == "int":
        return str(int(value))
    if typ == "floats":
        return ", ".join(repr(float(x)) for x in value)
    if typ == "word":
        return str(value)
    if typ == "words":
        return ", ".join(value)
    if typ == "expr":
        return f'"{value}"'
    if typ == "exprs":
        return ", ".join(f'"{x}"' for x in value)
    raise AssertionError(typ)


def serialize(cfg: RunConfig) -> str:
    """Text that ``parse_config_text`` maps back to an equal RunConfig."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None or value == ():
            continue
        key = _FIELD_KEY[f.name]
        typ = _SCHEMA[key][1]
        if f.name == "box":
            value = tuple(x for pair in value for x in pair)
        lines.append(f"{key} = {_fmt(value, typ)}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)


# --------------------------------------------------------------------------
# CSV artifacts


def write_field_csv(path, field: ScalarField, t: float | None = None) -> None:
    """Dump every lattice node (collar included) in lexicographic index order."""
    grid = field.grid
    coords = [c.reshape(-1) for c in grid.coords()]
    vals = field.values.reshape(-1)
    header = [f"x{i + 1}" for i in range(grid.dim)] + (["t"] if t is not None else []) + ["value"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        tcol = [f"{float(t):.17g}"] if t is not None else []
        for k in range(vals.size):
            w.writerow([f"{c[k]:.17g}" for c in coords] + tcol + [f"{vals[k]:.17g}"])


@dataclass(frozen=True)
class FieldTable:
    names: tuple
    coords: np.ndarray  # (m, N)
    values: np.ndarray  # (m,)
    t: float | None

    def to_field(self, grid: GridSpec) -> ScalarField:
        if self.values.size != int(np.prod(grid.shape)):
            raise GeometryError(f"{self.values.size} rows do not fit lattice shape {grid.shape}")
        return ScalarField(grid, self.values.reshape(grid.shape))


def read_field_csv(path) -> FieldTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = tuple(rows[0])
    if header[-1] != "value" or not header[0] == "x1":
        raise ValueError(f"{path}: not a field CSV (header {header})")
    has_t = "t" in header
    dim = len(header) - 1 - int(has_t)
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    t = float(data[0, dim]) if has_t and len(data) else None
    return FieldTable(header, data[:, :dim], data[:, -1].copy(), t)


REPORT_HEADER = ("lemma", "point", "eps", "remainder", "normalized", "verdict")


def write_report_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for rep in reports:
            for lemma, pt, e, r, n, verdict in rep.rows():
                w.writerow([lemma, pt, repr(float(e)), repr(float(r)), repr(float(n)), verdict])
