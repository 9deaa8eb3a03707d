"""Run configuration: an INI file with ``[plant]``, ``[numerics]``, ``[gains]``,
``[ic]`` and ``[output]`` sections.

Unknown sections or keys are rejected.  Numeric values may be arithmetic
expressions in ``pi`` (``theta1 = pi/3``).
"""

from __future__ import annotations

import ast
import configparser
import operator
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import Measurement, PlantConfig
from .sim import InitialCondition, SimConfig
from .spectral import Coefficient, SLProblem

__all__ = [
    "PlantSection",
    "NumericsSection",
    "GainsSection",
    "ICSection",
    "OutputSection",
    "RunConfig",
    "load_config",
    "parse_number",
]

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": np.pi, "j": 1j}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return node.value
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval_node(node.operand))
    raise ValueError(f"unsupported element {type(node).__name__}")


def parse_number(text: str, key: str, allow_complex: bool = False):
    try:
        val = _eval_node(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"{key}: cannot read number from {text!r} ({exc})") from exc
    if isinstance(val, complex) and not allow_complex:
        if val.imag != 0:
            raise ValidationError(f"{key}: complex value not allowed")
        val = val.real
    if not np.isfinite(val):
        raise ValidationError(f"{key}: value must be finite")
    return val


def _number_list(text: str, key: str, allow_complex: bool = False) -> tuple:
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    return tuple(parse_number(t, key, allow_complex) for t in items)


def _coefficient(text: str, key: str, base: Path) -> Coefficient:
    text = text.strip()
    if text.startswith("poly:"):
        return Coefficient.polynomial(_number_list(text[5:], key))
    if text.startswith("table:"):
        path = Path(text[6:].strip())
        return Coefficient.from_csv(path if path.is_absolute() else base / path)
    return Coefficient.constant(float(parse_number(text, key)))


@dataclass(frozen=True)
class PlantSection:
    p: str = "1"
    q: str = "1"
    q_c: float = 0.0
    c: float = 1.0
    h: float = 1.0
    theta1: float = 0.0
    theta2: float = 0.0
    measurement: str = "dirichlet"


@dataclass(frozen=True)
class NumericsSection:
    grid_points: int = 4001
    n_modes: int = 400
    richardson: bool = True
    M_modes: int = 100
    dt: float = 1e-3
    T_final: float = 10.0
    observer_order: int = 0
    observer_init: str = "zeros"
    x_samples: int = 101
    N_max: int = 64
    alpha1: float = 0.0
    alpha2: float = 4.0
    alpha3: float = 4.0
    alpha4: float = 0.0
    epsilon: float = 0.125
    weyl_rtol: float = 1e-8
    fit_start: float = 0.5
    sweep_h: tuple = (0.5, 1.0, 2.0, 5.0, 10.0)
    sweep_T_scale: float = 8.0


@dataclass(frozen=True)
class GainsSection:
    mode: str = "given"
    K: tuple = ()
    L: tuple = ()
    poles_K: tuple = ()
    poles_L: tuple = ()


@dataclass(frozen=True)
class ICSection:
    expression: str = ""
    table: str = ""


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: tuple = ("csv", "svg")
    csv_modes: int = 10
    csv_stride: int = 1
    field_stride: int = 10


_SECTIONS = {
    "plant": PlantSection,
    "numerics": NumericsSection,
    "gains": GainsSection,
    "ic": ICSection,
    "output": OutputSection,
}
_INT_KEYS = {"grid_points", "n_modes", "M_modes", "observer_order", "x_samples", "N_max",
             "csv_modes", "csv_stride", "field_stride"}
_FLOAT_LIST = {"sweep_h", "K", "L"}
_COMPLEX_LIST = {"poles_K", "poles_L"}
_STR_LIST = {"formats"}
_BOOL_KEYS = {"richardson"}
_STR_KEYS = {"p", "q", "measurement", "observer_init", "mode", "expression", "table", "directory"}


def _convert(section: str, key: str, raw: str):
    name = f"[{section}] {key}"
    if key in _STR_KEYS:
        return raw.strip()
    if key in _BOOL_KEYS:
        low = raw.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
            raise ValidationError(f"{name}: expected a boolean, got {raw!r}")
        return low in ("true", "yes", "1", "on")
    if key in _FLOAT_LIST:
        return tuple(float(v) for v in _number_list(raw, name))
    if key in _COMPLEX_LIST:
        return tuple(complex(v) for v in _number_list(raw, name, allow_complex=True))
    if key in _STR_LIST:
        return tuple(t.strip() for t in raw.split(",") if t.strip())
    val = parse_number(raw, name)
    if key in _INT_KEYS:
        if int(val) != val:
            raise ValidationError(f"{name}: expected an integer, got {raw!r}")
        return int(val)
    return float(val)


def _format(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        parts = []
        for v in val:
            if isinstance(v, complex):
                parts.append(format(v.real, ".17g") if v.imag == 0
                             else f"{v.real:.17g} + {v.imag:.17g}*j")
            elif isinstance(v, float):
                parts.append(format(v, ".17g"))
            else:
                parts.append(str(v))
        return ", ".join(parts)
    if isinstance(val, float):
        return format(val, ".17g")
    return str(val)


@dataclass(frozen=True)
class RunConfig:
    plant: PlantSection = field(default_factory=PlantSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    gains: GainsSection = field(default_factory=GainsSection)
    ic: ICSection = field(default_factory=ICSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        pl, nu, ga = self.plant, self.numerics, self.gains
        if pl.measurement not in ("dirichlet", "neumann"):
            raise ValidationError(f"[plant] measurement: expected dirichlet or neumann, got {pl.measurement!r}")
        for key in ("theta1", "theta2"):
            th = getattr(pl, key)
            if not 0 <= th <= np.pi / 2:
                raise ValidationError(f"[plant] {key}={th} must lie in [0, pi/2]")
        if pl.c == 0:
            raise ValidationError("[plant] c must be nonzero")
        if not pl.h > 0:
            raise ValidationError(f"[plant] h={pl.h} must be > 0")
        if ga.mode not in ("given", "place"):
            raise ValidationError(f"[gains] mode: expected given or place, got {ga.mode!r}")
        if ga.mode == "given" and (not ga.K or len(ga.K) != len(ga.L)):
            raise ValidationError("[gains] K and L must be given with equal lengths when mode = given")
        if nu.observer_init not in ("zeros", "compatibility"):
            raise ValidationError(f"[numerics] observer_init: got {nu.observer_init!r}")
        if nu.dt <= 0 or nu.T_final <= 0 or nu.dt > nu.T_final:
            raise ValidationError(f"[numerics] dt={nu.dt} and T_final={nu.T_final} need 0 < dt <= T_final")
        if nu.n_modes < 2 or nu.grid_points < 3:
            raise ValidationError("[numerics] n_modes >= 2 and grid_points >= 3 required")
        if nu.M_modes > nu.n_modes:
            raise ValidationError(f"[numerics] M_modes={nu.M_modes} exceeds n_modes={nu.n_modes}")
        if not 0 <= nu.fit_start < 1:
            raise ValidationError("[numerics] fit_start must lie in [0, 1)")
        if nu.sweep_T_scale < 0:
            raise ValidationError("[numerics] sweep_T_scale must be >= 0")
        if any(h <= 0 for h in nu.sweep_h):
            raise ValidationError("[numerics] sweep_h entries must be > 0")
        if bool(self.ic.expression) == bool(self.ic.table):
            raise ValidationError("[ic] exactly one of expression or table is required")
        if self.output.csv_stride < 1 or self.output.field_stride < 1:
            raise ValidationError("[output] strides must be >= 1")
        self.initial_condition()

    # -- builders ---------------------------------------------------------
    def sl_problem(self) -> SLProblem:
        pl = self.plant
        return SLProblem(_coefficient(pl.p, "[plant] p", self.base_dir),
                         _coefficient(pl.q, "[plant] q", self.base_dir),
                         pl.q_c, pl.theta1, pl.theta2, self.numerics.grid_points)

    def plant_config(self, h: float | None = None) -> PlantConfig:
        pl = self.plant
        return PlantConfig(self.sl_problem(), pl.c, pl.h if h is None else h,
                           Measurement(pl.measurement))

    def initial_condition(self) -> InitialCondition:
        if self.ic.expression:
            return InitialCondition(expression=self.ic.expression)
        path = Path(self.ic.table)
        return InitialCondition.from_csv(path if path.is_absolute() else self.base_dir / path)

    def sim_config(self, T_final: float | None = None) -> SimConfig:
        nu = self.numerics
        return SimConfig(self.initial_condition(), nu.M_modes, nu.dt,
                         nu.T_final if T_final is None else T_final,
                         nu.observer_init, nu.x_samples)

    # -- serialization ----------------------------------------------------
    def to_ini(self) -> str:
        out = []
        for name in _SECTIONS:
            out.append(f"[{name}]")
            for key, val in asdict(getattr(self, name)).items():
                out.append(f"{key} = {_format(val)}")
            out.append("")
        return "\n".join(out)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a config file.

    ``overrides`` maps ``"section.key"`` to raw strings and is applied on
    top of the file.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file {path} not found")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    for dotted, raw in (overrides or {}).items():
        sec, key = dotted.split(".", 1)
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, key, raw)

    sections = {}
    for sec in parser.sections():
        if sec not in _SECTIONS:
            raise ValidationError(f"unknown section [{sec}]")
        known = _SECTIONS[sec].__dataclass_fields__
        kwargs = {}
        for key, raw in parser.items(sec):
            if key not in known:
                raise ValidationError(f"unknown key [{sec}] {key}")
            kwargs[key] = _convert(sec, key, raw)
        sections[sec] = _SECTIONS[sec](**kwargs)
    return RunConfig(**sections, base_dir=path.parent)
