"""Run configuration and the time-scale literal grammar.

Literal grammar (clauses separated by ``;``)::

    literal := clause (";" clause)*
    clause  := "union:" item | "points:" real+ | "dense_step:" real | item
    item    := "[" real "," real "]" | real

Examples: ``union: [0, 0.5]; 0.6; 0.7; dense_step: 1e-3`` and ``points: 0 1 2``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .catalog import get as catalog_get
from .dynamics import SolverConfig
from .expr import ParseError
from .fields import Hamiltonian, VectorField
from .timescale import TimeScale

__all__ = ["ConfigError", "RunConfig", "parse_timescale", "load_config"]


class ConfigError(ValueError):
    pass


_REAL = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_INTERVAL = re.compile(rf"^\[\s*({_REAL})\s*,\s*({_REAL})\s*\]$")
_POINT = re.compile(rf"^{_REAL}$")


def _item(text: str, k: int):
    text = text.strip()
    m = _INTERVAL.match(text)
    if m:
        lo, hi = float(m.group(1)), float(m.group(2))
        if not lo <= hi:
            raise ConfigError(f"clause {k}: interval [{lo}, {hi}] has lo > hi")
        return (lo, hi) if lo < hi else lo
    if _POINT.match(text):
        return float(text)
    raise ConfigError(f"clause {k}: expected '[lo, hi]' or a number, got {text!r}")


def parse_timescale(literal: str) -> TimeScale:
    """Build a :class:`TimeScale` from a literal such as ``union: [0,1]; 2``."""
    if not isinstance(literal, str) or not literal.strip():
        raise ConfigError("empty time-scale literal")
    segments: list = []
    step = None
    for k, clause in enumerate(literal.split(";"), start=1):
        clause = clause.strip()
        if not clause:
            raise ConfigError(f"clause {k} of the time-scale literal is empty")
        key, sep, rest = clause.partition(":")
        key = key.strip().lower()
        if sep and key == "union":
            segments.append(_item(rest, k))
        elif sep and key == "points":
            toks = rest.replace(",", " ").split()
            if not toks:
                raise ConfigError(f"clause {k}: 'points:' needs at least one number")
            segments.extend(_item(tok, k) for tok in toks)
        elif sep and key == "dense_step":
            try:
                step = float(rest)
            except ValueError:
                raise ConfigError(f"clause {k}: dense_step must be a number, got {rest.strip()!r}") from None
            if not step > 0:
                raise ConfigError(f"clause {k}: dense_step must be positive")
        elif sep:
            raise ConfigError(f"clause {k}: unknown key {key!r} (use union, points or dense_step)")
        else:
            segments.append(_item(clause, k))
    if not segments:
        raise ConfigError("the time-scale literal has no intervals or points")
    try:
        return TimeScale(segments, step)
    except ValueError as exc:
        raise ConfigError(f"invalid time scale: {exc}") from None


def _split_exprs(value) -> list[str]:
    if isinstance(value, str):
        return [s.strip() for s in value.split(";")]
    if isinstance(value, (list, tuple)):
        return [str(s) for s in value]
    raise ConfigError(f"expected an expression or a list of expressions, got {value!r}")


@dataclass
class RunConfig:
    timescale: str | None = None
    d: int | None = None
    catalog: str | None = None
    xq: list | None = None
    xp: list | None = None
    hamiltonian: str | None = None
    q0: list | None = None
    p0: list | None = None
    form: str = "derivative"
    box: list = field(default_factory=lambda: [-1.0, 1.0])
    samples: int = 128
    tol: float | None = None
    seed: int = 0
    nodes: int = 32
    grid_points: int = 11
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    max_sweeps: int = 200
    force: bool = False
    quick: bool = False
    out: str | None = None
    format: str = "json"

    def validate(self) -> "RunConfig":
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        if self.form not in ("derivative", "integral"):
            raise ConfigError(f"form must be derivative or integral, got {self.form!r}")
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if self.nodes < 1:
            raise ConfigError("nodes must be at least 1")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be at least 2")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        if (self.xq is None) != (self.xp is None):
            raise ConfigError("give both xq and xp, or neither")
        if self.timescale is not None:
            parse_timescale(self.timescale)
        return self

    def vector_field(self) -> VectorField:
        if self.xq is not None:
            xq, xp = _split_exprs(self.xq), _split_exprs(self.xp)
            if self.d is not None and len(xq) != self.d:
                raise ConfigError(f"d = {self.d} but xq has {len(xq)} components")
            try:
                return VectorField.from_expressions(xq, xp, "field")
            except ParseError as exc:
                raise ConfigError(f"bad field expression: {exc}") from None
        if self.catalog is not None:
            try:
                return catalog_get(self.catalog).field()
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        if self.hamiltonian is not None:
            return self.hamiltonian_obj().vector_field()
        raise ConfigError("no field given: set xq/xp, catalog or hamiltonian")

    def hamiltonian_obj(self) -> Hamiltonian:
        if self.hamiltonian is None:
            raise ConfigError("no hamiltonian given")
        d = self.d or _infer_d(self.hamiltonian)
        try:
            return Hamiltonian.from_expression(self.hamiltonian, d)
        except ParseError as exc:
            raise ConfigError(f"bad hamiltonian: {exc}") from None

    def time_scale(self) -> TimeScale:
        if self.timescale is None:
            raise ConfigError("no time scale given: set 'timescale' in the config or pass --timescale")
        return parse_timescale(self.timescale)

    def solver(self) -> SolverConfig:
        return SolverConfig(self.newton_tol, self.newton_max_iter, self.max_sweeps)

    def override(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None}).validate()


def _infer_d(src: str) -> int:
    idx = [int(m) for m in re.findall(r"\b[qp](\d+)\b", src)]
    return max(idx, default=1)


def load_config(path: str | Path | None) -> RunConfig:
    """Read a YAML config; unknown keys are rejected with the list of known ones."""
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {p} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must be a mapping of keys to values")
    data = dict(data)
    for section in ("field", "initial", "solver"):
        sub = data.pop(section, None)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ConfigError(f"section '{section}' must be a mapping")
        rename = {"q": "q0", "p": "p0"} if section == "initial" else {}
        for k, v in sub.items():
            data[rename.get(k, k)] = v
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; known keys: {sorted(known)}")
    try:
        return RunConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
