"""JSON analysis configs: parsing, validation and canonical echo."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .criterion import TubeConfig
from .errors import ConfigError, ExprError, ExprSyntaxError
from .expr import CURVE_VARIABLES, evaluate, parse
from .geometry import DEFAULT_EXTENT, Equilibrium, Graph, Implicit, ManifoldSpec, Parametric, Rect, VectorField
from .invariance import DEFAULT_TOL

KINDS = ("equilibrium", "graph", "implicit", "parametric")


@dataclass(frozen=True)
class OracleSettings:
    h: float = 1e-3
    T: float = 10.0
    window: Rect | None = None
    attract_ratio: float = 0.1
    repel_ratio: float = 10.0


@dataclass(frozen=True)
class InvarianceSettings:
    n_points: int = 256
    tol: float = DEFAULT_TOL


@dataclass(frozen=True)
class Outputs:
    report: str | None = None
    samples: str | None = None
    svg: str | None = None


@dataclass(frozen=True)
class ManifoldEntry:
    name: str
    kind: str
    spec: ManifoldSpec
    source: tuple[tuple[str, Any], ...]  # canonical entry, for the echo

    def to_dict(self) -> dict[str, Any]:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.source}


@dataclass(frozen=True)
class AnalysisConfig:
    system: str
    fx: str
    fy: str
    field: VectorField
    manifolds: tuple[ManifoldEntry, ...]
    tube: TubeConfig = TubeConfig()
    invariance: InvarianceSettings = InvarianceSettings()
    oracle: OracleSettings = OracleSettings()
    outputs: Outputs = Outputs()
    force: bool = False
    base_dir: Path | None = field(default=None, compare=False)

    def to_dict(self) -> dict[str, Any]:
        """Canonical form; ``load_config_dict(cfg.to_dict())`` gives an equal config."""
        o = self.oracle
        return {
            "system": self.system,
            "field": {"fx": self.fx, "fy": self.fy},
            "manifolds": [m.to_dict() for m in self.manifolds],
            "tube": {
                "eps_min": self.tube.eps_min,
                "eps_max": self.tube.eps_max,
                "n_offsets": self.tube.n_offsets,
                "n_base": self.tube.n_base,
                "zero_tol": self.tube.zero_tol,
            },
            "invariance": {"n_points": self.invariance.n_points, "tol": self.invariance.tol},
            "oracle": {
                "h": o.h,
                "T": o.T,
                "window": o.window.as_list() if o.window else None,
                "attract_ratio": o.attract_ratio,
                "repel_ratio": o.repel_ratio,
            },
            "outputs": {"report": self.outputs.report, "samples": self.outputs.samples, "svg": self.outputs.svg},
            "force": self.force,
        }

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p


class _Reader:
    """Field access with dotted-path error messages and best-effort line numbers."""

    def __init__(self, text: str | None):
        self.text = text

    def line_of(self, key: str) -> int | None:
        if not self.text:
            return None
        needle = f'"{key}"'
        for i, line in enumerate(self.text.splitlines(), start=1):
            if needle in line:
                return i
        return None

    def fail(self, path: str, message: str) -> ConfigError:
        key = path.rsplit(".", 1)[-1].split("[", 1)[0]
        return ConfigError(message, field=path, line=self.line_of(key))

    def get(self, obj: dict, key: str, path: str, types, default=..., required=False):
        if not isinstance(obj, dict):
            raise self.fail(path, "expected an object")
        if key not in obj or obj[key] is None:
            if required or default is ...:
                raise self.fail(f"{path}.{key}" if path else key, "missing required field")
            return default
        value = obj[key]
        if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise self.fail(f"{path}.{key}" if path else key, f"expected {_type_names(types)}, got boolean")
        if not isinstance(value, types):
            raise self.fail(f"{path}.{key}" if path else key, f"expected {_type_names(types)}, got {type(value).__name__}")
        return value

    def expr(self, text: str, path: str, variables=("x", "y")):
        try:
            return parse(text, variables)
        except ExprSyntaxError as exc:
            err = self.fail(path, f"syntax error: {exc}")
            err.offset = exc.offset
            raise err from exc
        except ExprError as exc:
            raise self.fail(path, str(exc)) from exc

    def number(self, value, path: str) -> float:
        """A JSON number or a constant expression such as ``"2*pi"``."""
        if isinstance(value, bool):
            raise self.fail(path, "expected a number")
        if isinstance(value, (int, float)):
            out = float(value)
        elif isinstance(value, str):
            try:
                out = evaluate(parse(value, ()), 0.0, 0.0)
            except ExprError as exc:
                raise self.fail(path, f"not a constant expression: {exc}") from exc
        else:
            raise self.fail(path, "expected a number")
        if not math.isfinite(out):
            raise self.fail(path, "must be finite")
        return out


def _type_names(types) -> str:
    types = types if isinstance(types, tuple) else (types,)
    names = {int: "integer", float: "number", str: "string", dict: "object", list: "array", bool: "boolean"}
    return " or ".join(names.get(t, t.__name__) for t in types)


def _interval(r: _Reader, value, path: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise r.fail(path, "expected a two-element array")
    lo, hi = (r.number(v, f"{path}[{i}]") for i, v in enumerate(value))
    if not lo < hi:
        raise r.fail(path, "interval must satisfy lo < hi")
    return lo, hi


def _rect(r: _Reader, value, path: str) -> Rect:
    if not isinstance(value, list) or len(value) != 4:
        raise r.fail(path, "expected [xmin, xmax, ymin, ymax]")
    vals = [r.number(v, f"{path}[{i}]") for i, v in enumerate(value)]
    try:
        return Rect(*vals)
    except ValueError as exc:
        raise r.fail(path, str(exc)) from exc


def _manifold(r: _Reader, entry: dict, path: str, index: int) -> ManifoldEntry:
    if not isinstance(entry, dict):
        raise r.fail(path, "expected an object")
    kind = r.get(entry, "kind", path, str, required=True)
    if kind not in KINDS:
        raise r.fail(f"{path}.kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    name = r.get(entry, "name", path, str, default=f"{kind}_{index}")
    src: list[tuple[str, Any]] = [("name", name), ("kind", kind)]
    try:
        if kind == "equilibrium":
            pt = r.get(entry, "point", path, list, required=True)
            if len(pt) != 2:
                raise r.fail(f"{path}.point", "expected [x, y]")
            px, py = (r.number(v, f"{path}.point[{i}]") for i, v in enumerate(pt))
            spec: ManifoldSpec = Equilibrium(px, py)
            src.append(("point", (px, py)))
        elif kind == "graph":
            has_y, has_x = "y" in entry, "x" in entry
            if has_x == has_y:
                raise r.fail(path, "graph needs exactly one of 'y' (y = g(x)) or 'x' (x = h(y))")
            axis, key = ("x", "y") if has_y else ("y", "x")
            text = r.get(entry, key, path, str, required=True)
            domain = _interval(r, entry["domain"], f"{path}.domain") if "domain" in entry else DEFAULT_EXTENT
            spec = Graph(r.expr(text, f"{path}.{key}", (axis,)), axis, domain)
            src += [(key, text), ("domain", domain)]
        elif kind == "implicit":
            text = r.get(entry, "F", path, str, required=True)
            window = _rect(r, entry["window"], f"{path}.window") if "window" in entry else Rect(*DEFAULT_EXTENT, *DEFAULT_EXTENT)
            spec = Implicit(r.expr(text, f"{path}.F"), window)
            src += [("F", text), ("window", tuple(window.as_list()))]
        else:
            tx = r.get(entry, "x", path, str, required=True)
            ty = r.get(entry, "y", path, str, required=True)
            t_range = _interval(r, r.get(entry, "t_range", path, list, required=True), f"{path}.t_range")
            closed = r.get(entry, "closed", path, bool, default=False)
            spec = Parametric(
                r.expr(tx, f"{path}.x", CURVE_VARIABLES), r.expr(ty, f"{path}.y", CURVE_VARIABLES), t_range, closed
            )
            src += [("x", tx), ("y", ty), ("t_range", t_range), ("closed", closed)]
    except ValueError as exc:
        raise r.fail(path, str(exc)) from exc
    return ManifoldEntry(name, kind, spec, tuple(src))


def load_config_dict(data: Any, text: str | None = None, base_dir: Path | None = None) -> AnalysisConfig:
    r = _Reader(text)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", line=1 if text else None)
    system = r.get(data, "system", "", str, required=True)
    fld = r.get(data, "field", "", dict, required=True)
    fx_text = r.get(fld, "fx", "field", str, required=True)
    fy_text = r.get(fld, "fy", "field", str, required=True)
    field_ = VectorField(r.expr(fx_text, "field.fx"), r.expr(fy_text, "field.fy"))
    entries = r.get(data, "manifolds", "", list, required=True)
    if not entries:
        raise r.fail("manifolds", "at least one manifold is required")
    manifolds = tuple(_manifold(r, e, f"manifolds[{i}]", i) for i, e in enumerate(entries))
    names = [m.name for m in manifolds]
    if len(set(names)) != len(names):
        raise r.fail("manifolds", "manifold names must be unique")

    t = r.get(data, "tube", "", dict, default={})
    defaults = TubeConfig()
    try:
        tube = TubeConfig(
            eps_min=r.number(t.get("eps_min", defaults.eps_min), "tube.eps_min"),
            eps_max=r.number(t.get("eps_max", defaults.eps_max), "tube.eps_max"),
            n_offsets=r.get(t, "n_offsets", "tube", int, default=defaults.n_offsets),
            n_base=r.get(t, "n_base", "tube", int, default=defaults.n_base),
            zero_tol=r.number(t.get("zero_tol", defaults.zero_tol), "tube.zero_tol"),
        )
    except ValueError as exc:
        raise r.fail("tube", str(exc)) from exc

    inv = r.get(data, "invariance", "", dict, default={})
    invariance = InvarianceSettings(
        n_points=r.get(inv, "n_points", "invariance", int, default=256),
        tol=r.number(inv.get("tol", DEFAULT_TOL), "invariance.tol"),
    )
    if invariance.n_points < 1 or not invariance.tol > 0:
        raise r.fail("invariance", "n_points must be >= 1 and tol > 0")

    o = r.get(data, "oracle", "", dict, default={})
    window = o.get("window")
    oracle = OracleSettings(
        h=r.number(o.get("h", 1e-3), "oracle.h"),
        T=r.number(o.get("T", 10.0), "oracle.T"),
        window=_rect(r, window, "oracle.window") if window is not None else None,
        attract_ratio=r.number(o.get("attract_ratio", 0.1), "oracle.attract_ratio"),
        repel_ratio=r.number(o.get("repel_ratio", 10.0), "oracle.repel_ratio"),
    )
    if not (oracle.h > 0 and oracle.T > 0):
        raise r.fail("oracle", "h and T must be positive")
    if not 0 < oracle.attract_ratio < 1 < oracle.repel_ratio:
        raise r.fail("oracle", "need 0 < attract_ratio < 1 < repel_ratio")

    out = r.get(data, "outputs", "", dict, default={})
    outputs = Outputs(
        report=r.get(out, "report", "outputs", str, default=None),
        samples=r.get(out, "samples", "outputs", str, default=None),
        svg=r.get(out, "svg", "outputs", str, default=None),
    )
    force = r.get(data, "force", "", bool, default=False)
    return AnalysisConfig(system, fx_text, fy_text, field_, manifolds, tube, invariance, oracle, outputs, force, base_dir)


def load_config(path: str | Path) -> AnalysisConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from exc
    return load_config_dict(data, text, path.resolve().parent)
