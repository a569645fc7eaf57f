"""SPICE-subset netlist parsing and serialization.

Supported elements are ``M`` (MOSFET), ``R``, ``C``, ``V`` and ``I``; supported
directives are ``.MODEL``, ``.TRAN``, ``.DC``, ``.OP``, ``.TEMP``, ``.OPTIONS``
and ``.END``.  Everything is case-insensitive: element and model names are
stored upper-case, node names lower-case.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

GROUND = "0"

SUFFIX_EXPONENTS = {"f": -15, "p": -12, "n": -9, "u": -6, "m": -3, "k": 3, "meg": 6, "g": 9, "t": 12}
SUFFIXES = {k: 10.0**e for k, e in SUFFIX_EXPONENTS.items()}

_NUMBER_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+))(?:e([+-]?\d+))?(meg|mil|[fpnumkgt])?([a-z]*)$",
    re.IGNORECASE,
)
_TOKEN_RE = re.compile(r"[^\s=(),]+|=|\(|\)")


class NetlistError(ValueError):
    """Raised for any malformed netlist; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)


def parse_number(token: str) -> float:
    """Parse a SPICE number with an optional engineering suffix.

    Trailing unit letters after the suffix are ignored (``1.5uF``, ``10Meg``).
    """
    m = _NUMBER_RE.match(token.strip())
    if not m:
        raise ValueError(f"malformed number {token!r}")
    mantissa, exp = m.group(1), int(m.group(2) or 0)
    suffix = (m.group(3) or "").lower()
    if suffix == "mil":
        return float(f"{mantissa}e{exp}") * 25.4e-6
    # fold the suffix into the decimal exponent so scaling rounds exactly once
    return float(f"{mantissa}e{exp + SUFFIX_EXPONENTS.get(suffix, 0)}")


def format_number(value: float) -> str:
    """Shortest text that reparses to exactly ``value``; no suffixes."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot format non-finite number {value}")
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


# --------------------------------------------------------------------------
# Stimuli


@dataclass(frozen=True)
class DC:
    value: float

    def __str__(self) -> str:
        return f"DC {format_number(self.value)}"


@dataclass(frozen=True)
class Sin:
    offset: float
    amplitude: float
    frequency: float
    delay: float = 0.0
    damping: float = 0.0

    def __str__(self) -> str:
        vals = (self.offset, self.amplitude, self.frequency, self.delay, self.damping)
        return "SIN(" + " ".join(format_number(v) for v in vals) + ")"


@dataclass(frozen=True)
class Pulse:
    v1: float
    v2: float
    delay: float = 0.0
    rise: float = 0.0
    fall: float = 0.0
    width: float = math.inf
    period: float = math.inf

    def __str__(self) -> str:
        vals = [self.v1, self.v2, self.delay, self.rise, self.fall, self.width, self.period]
        while math.isinf(vals[-1]):
            vals.pop()
        return "PULSE(" + " ".join(format_number(v) for v in vals) + ")"


@dataclass(frozen=True)
class Pwl:
    points: Tuple[Tuple[float, float], ...]

    def __str__(self) -> str:
        flat = " ".join(f"{format_number(t)} {format_number(v)}" for t, v in self.points)
        return f"PWL({flat})"


Stimulus = Union[DC, Sin, Pulse, Pwl]


# --------------------------------------------------------------------------
# Elements


@dataclass(frozen=True)
class Mosfet:
    name: str
    drain: str
    gate: str
    source: str
    bulk: str
    model: str
    w: float
    l: float

    @property
    def nodes(self) -> Tuple[str, ...]:
        return (self.drain, self.gate, self.source, self.bulk)

    def __str__(self) -> str:
        return (
            f"{self.name} {self.drain} {self.gate} {self.source} {self.bulk} "
            f"{self.model} W={format_number(self.w)} L={format_number(self.l)}"
        )


@dataclass(frozen=True)
class Resistor:
    name: str
    pos: str
    neg: str
    ohms: float

    @property
    def nodes(self) -> Tuple[str, ...]:
        return (self.pos, self.neg)

    def __str__(self) -> str:
        return f"{self.name} {self.pos} {self.neg} {format_number(self.ohms)}"


@dataclass(frozen=True)
class Capacitor:
    name: str
    pos: str
    neg: str
    farads: float
    ic: Optional[float] = None

    @property
    def nodes(self) -> Tuple[str, ...]:
        return (self.pos, self.neg)

    def __str__(self) -> str:
        text = f"{self.name} {self.pos} {self.neg} {format_number(self.farads)}"
        if self.ic is not None:
            text += f" IC={format_number(self.ic)}"
        return text


@dataclass(frozen=True)
class VSource:
    name: str
    pos: str
    neg: str
    stimulus: Stimulus

    @property
    def nodes(self) -> Tuple[str, ...]:
        return (self.pos, self.neg)

    def __str__(self) -> str:
        return f"{self.name} {self.pos} {self.neg} {self.stimulus}"


@dataclass(frozen=True)
class ISource:
    name: str
    pos: str
    neg: str
    stimulus: Stimulus

    @property
    def nodes(self) -> Tuple[str, ...]:
        return (self.pos, self.neg)

    def __str__(self) -> str:
        return f"{self.name} {self.pos} {self.neg} {self.stimulus}"


Element = Union[Mosfet, Resistor, Capacitor, VSource, ISource]


@dataclass(frozen=True)
class ModelCard:
    """Named MOSFET parameter set.  ``params`` keeps every parsed name."""

    name: str
    polarity: str
    level: int
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.polarity not in ("NMOS", "PMOS"):
            raise ValueError(f"polarity must be NMOS or PMOS, got {self.polarity!r}")

    def __hash__(self):
        return hash((self.name, self.polarity, self.level, tuple(self.params.items())))

    @property
    def is_pmos(self) -> bool:
        return self.polarity == "PMOS"

    def get(self, key: str, default: float = 0.0) -> float:
        return self.params.get(key.upper(), default)

    def __str__(self) -> str:
        parts = [f".MODEL {self.name} {self.polarity} LEVEL={self.level}"]
        parts += [f"{k}={format_number(v)}" for k, v in self.params.items()]
        return " ".join(parts)


# --------------------------------------------------------------------------
# Analyses


@dataclass(frozen=True)
class Tran:
    step: float
    stop: float
    max_step: Optional[float] = None

    def __str__(self) -> str:
        text = f".TRAN {format_number(self.step)} {format_number(self.stop)}"
        if self.max_step is not None:
            text += f" 0 {format_number(self.max_step)}"
        return text


@dataclass(frozen=True)
class DcSweep:
    source: str
    start: float
    stop: float
    step: float

    def __str__(self) -> str:
        return (
            f".DC {self.source} {format_number(self.start)} "
            f"{format_number(self.stop)} {format_number(self.step)}"
        )


@dataclass(frozen=True)
class Op:
    def __str__(self) -> str:
        return ".OP"


AnalysisDirective = Union[Tran, DcSweep, Op]


@dataclass(frozen=True)
class NetlistDocument:
    title: str = ""
    elements: Tuple[Element, ...] = ()
    models: Dict[str, ModelCard] = field(default_factory=dict)
    analyses: Tuple[AnalysisDirective, ...] = ()
    temperatures: Tuple[float, ...] = ()
    options: Dict[str, float] = field(default_factory=dict)

    ground = GROUND

    def __hash__(self):
        return hash((self.title, self.elements, self.analyses, self.temperatures))

    @property
    def effective_temperatures(self) -> Tuple[float, ...]:
        """Temperatures to simulate at; 25 C when no ``.TEMP`` was given."""
        return self.temperatures or (25.0,)

    def element(self, name: str) -> Element:
        key = name.upper()
        for el in self.elements:
            if el.name == key:
                return el
        raise KeyError(name)

    def mosfets(self) -> List[Mosfet]:
        return [e for e in self.elements if isinstance(e, Mosfet)]


# --------------------------------------------------------------------------
# Parsing


def _logical_lines(text: str):
    """Yield (line_no, text) after joining ``+`` continuations and dropping comments."""
    current = None
    start = 0
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    for i, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped or stripped.startswith("*"):
            continue
        # inline comments
        for marker in (";", "$ "):
            pos = stripped.find(marker)
            if pos >= 0:
                stripped = stripped[:pos].rstrip()
        if not stripped:
            continue
        if stripped.startswith("+"):
            if current is None:
                raise NetlistError("continuation line without a preceding line", i)
            current += " " + stripped[1:]
            continue
        if current is not None:
            yield start, current
        current, start = stripped, i
    if current is not None:
        yield start, current


def _num(token: str, line: int) -> float:
    try:
        return parse_number(token)
    except ValueError:
        raise NetlistError(f"malformed number {token!r}", line) from None


def _keyvals(tokens: List[str], line: int) -> Dict[str, str]:
    """Collect ``KEY = VALUE`` pairs; whitespace around '=' already split out."""
    out: Dict[str, str] = {}
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens) and tokens[i + 1] == "=":
            if i + 2 >= len(tokens):
                raise NetlistError(f"missing value for {tokens[i]!r}", line)
            out[tokens[i].upper()] = tokens[i + 2]
            i += 3
        else:
            raise NetlistError(f"expected NAME=VALUE, got {tokens[i]!r}", line)
    return out


def _parse_stimulus(tokens: List[str], line: int) -> Stimulus:
    if not tokens:
        raise NetlistError("source value missing", line)
    head = tokens[0].upper()
    if head == "DC":
        if len(tokens) != 2:
            raise NetlistError("DC expects exactly one value", line)
        return DC(_num(tokens[1], line))
    if head in ("SIN", "PULSE", "PWL"):
        args = [t for t in tokens[1:] if t not in ("(", ")")]
        if tokens[1:2] != ["("] or tokens[-1] != ")":
            raise NetlistError(f"{head} arguments must be parenthesized", line)
        vals = [_num(a, line) for a in args]
        if head == "SIN":
            if not 3 <= len(vals) <= 5:
                raise NetlistError("SIN expects 3 to 5 values", line)
            if vals[2] <= 0:
                raise NetlistError("SIN frequency must be positive", line)
            return Sin(*vals)
        if head == "PULSE":
            if not 2 <= len(vals) <= 7:
                raise NetlistError("PULSE expects 2 to 7 values", line)
            return Pulse(*vals)
        if len(vals) < 2 or len(vals) % 2:
            raise NetlistError("PWL expects time/value pairs", line)
        pts = tuple(zip(vals[0::2], vals[1::2]))
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise NetlistError("PWL times must be strictly increasing", line)
        return Pwl(pts)
    if len(tokens) == 1:
        return DC(_num(tokens[0], line))
    raise NetlistError(f"unrecognized source specification {' '.join(tokens)!r}", line)


def _parse_model(tokens: List[str], line: int) -> ModelCard:
    if len(tokens) < 3:
        raise NetlistError(".MODEL needs a name and a type", line)
    name, kind = tokens[1].upper(), tokens[2].upper()
    if kind not in ("NMOS", "PMOS"):
        raise NetlistError(f"unsupported model type {tokens[2]!r}", line)
    rest = [t for t in tokens[3:] if t not in ("(", ")")]
    params: Dict[str, float] = {}
    level = 1
    for key, val in _keyvals(rest, line).items():
        if key == "LEVEL":
            level = int(_num(val, line))
        else:
            params[key] = _num(val, line)
    card = ModelCard(name, kind, level, params)
    vto = params.get("VTO")
    if params.get("PHI", 1.0) <= 0 or params.get("KP", 1.0) <= 0:
        warnings.warn(f"model {name}: PHI and KP should be positive", stacklevel=3)
    if vto is not None and ((kind == "PMOS" and vto > 0) or (kind == "NMOS" and vto < 0)):
        warnings.warn(f"model {name}: VTO sign unusual for {kind}", stacklevel=3)
    return card


def _positive(value: float, what: str, line: int) -> float:
    if not value > 0:
        raise NetlistError(f"{what} must be positive", line)
    return value


def _parse_element(tokens: List[str], line: int) -> Element:
    name = tokens[0].upper()
    kind = name[0]
    if kind == "M":
        if len(tokens) < 6:
            raise NetlistError(f"MOSFET {name} needs 4 nodes and a model", line)
        d, g, s, b = (t.lower() for t in tokens[1:5])
        model = tokens[5].upper()
        kv = _keyvals(tokens[6:], line)
        if "W" not in kv or "L" not in kv:
            raise NetlistError(f"MOSFET {name} requires W= and L=", line)
        unknown = set(kv) - {"W", "L"}
        if unknown:
            raise NetlistError(f"unsupported MOSFET parameter {sorted(unknown)[0]}", line)
        w = _positive(_num(kv["W"], line), "W", line)
        l = _positive(_num(kv["L"], line), "L", line)
        return Mosfet(name, d, g, s, b, model, w, l)
    if kind in "RCVI":
        if len(tokens) < 4:
            raise NetlistError(f"element {name} needs two nodes and a value", line)
        p, n = tokens[1].lower(), tokens[2].lower()
        if kind == "R":
            if len(tokens) != 4:
                raise NetlistError(f"unexpected tokens after resistor {name}", line)
            return Resistor(name, p, n, _positive(_num(tokens[3], line), "resistance", line))
        if kind == "C":
            farads = _positive(_num(tokens[3], line), "capacitance", line)
            kv = _keyvals(tokens[4:], line)
            unknown = set(kv) - {"IC"}
            if unknown:
                raise NetlistError(f"unsupported capacitor parameter {sorted(unknown)[0]}", line)
            ic = _num(kv["IC"], line) if "IC" in kv else None
            return Capacitor(name, p, n, farads, ic)
        stim = _parse_stimulus(tokens[3:], line)
        return VSource(name, p, n, stim) if kind == "V" else ISource(name, p, n, stim)
    raise NetlistError(f"unsupported element type {tokens[0][0]!r}", line)


def parse(text: str) -> NetlistDocument:
    """Parse netlist text.  The first line is always the title."""
    first = text.replace("\r\n", "\n").split("\n", 1)[0]
    title = first.strip()
    elements: List[Element] = []
    models: Dict[str, ModelCard] = {}
    analyses: List[AnalysisDirective] = []
    temps: List[float] = []
    options: Dict[str, float] = {}
    seen: Dict[str, int] = {}
    mos_lines: List[Tuple[Mosfet, int]] = []

    for line, logical in _logical_lines(text):
        tokens = _TOKEN_RE.findall(logical)
        head = tokens[0].upper()
        if head.startswith("."):
            if head == ".END":
                break
            if head == ".MODEL":
                card = _parse_model(tokens, line)
                if card.name in models:
                    raise NetlistError(f"duplicate model {card.name!r}", line)
                models[card.name] = card
            elif head == ".TRAN":
                vals = [_num(t, line) for t in tokens[1:]]
                if len(vals) not in (2, 3, 4):
                    raise NetlistError(".TRAN expects TSTEP TSTOP [TSTART [TMAX]]", line)
                if vals[0] <= 0 or vals[1] <= 0:
                    raise NetlistError(".TRAN step and stop must be positive", line)
                if len(vals) > 2 and vals[2] != 0:
                    raise NetlistError(".TRAN TSTART other than 0 is not supported", line)
                analyses.append(Tran(vals[0], vals[1], vals[3] if len(vals) == 4 else None))
            elif head == ".DC":
                if len(tokens) != 5:
                    raise NetlistError(".DC expects SRC START STOP STEP", line)
                start, stop, step = (_num(t, line) for t in tokens[2:5])
                if step <= 0:
                    raise NetlistError(".DC step must be positive", line)
                if stop < start:
                    raise NetlistError(".DC stop must not be below start", line)
                analyses.append(DcSweep(tokens[1].upper(), start, stop, step))
            elif head == ".OP":
                analyses.append(Op())
            elif head == ".TEMP":
                if len(tokens) < 2:
                    raise NetlistError(".TEMP needs at least one value", line)
                temps.extend(_num(t, line) for t in tokens[1:])
            elif head in (".OPTIONS", ".OPTION"):
                for key, val in _keyvals(tokens[1:], line).items():
                    options[key] = _num(val, line)
            else:
                raise NetlistError(f"unsupported directive {tokens[0]!r}", line)
            continue

        el = _parse_element(tokens, line)
        if el.name in seen:
            raise NetlistError(f"duplicate element name {el.name!r}", line)
        seen[el.name] = line
        elements.append(el)
        if isinstance(el, Mosfet):
            mos_lines.append((el, line))

    for el, line in mos_lines:
        if el.model not in models:
            raise NetlistError(f"unresolved model {el.model!r} for {el.name}", line)
    for an in analyses:
        if isinstance(an, DcSweep) and an.source not in seen:
            raise NetlistError(f".DC source {an.source!r} not found")

    return NetlistDocument(
        title=title,
        elements=tuple(elements),
        models=models,
        analyses=tuple(analyses),
        temperatures=tuple(temps),
        options=options,
    )


def serialize(doc: NetlistDocument) -> str:
    """Canonical text form; ``parse(serialize(d)) == d``."""
    lines = [doc.title]
    lines += [str(e) for e in doc.elements]
    lines += [str(m) for m in doc.models.values()]
    lines += [str(a) for a in doc.analyses]
    if doc.temperatures:
        lines.append(".TEMP " + " ".join(format_number(t) for t in doc.temperatures))
    if doc.options:
        lines.append(
            ".OPTIONS " + " ".join(f"{k}={format_number(v)}" for k, v in doc.options.items())
        )
    lines.append(".END")
    return "\n".join(lines) + "\n"


def node_table(doc: NetlistDocument) -> Dict[str, int]:
    """Ground first at index 0, then every other node in order of first appearance."""
    table = {GROUND: 0}
    has_ground = False
    for el in doc.elements:
        for node in el.nodes:
            if node == GROUND:
                has_ground = True
            elif node not in table:
                table[node] = len(table)
    if not has_ground:
        raise NetlistError("no ground node")
    return table
