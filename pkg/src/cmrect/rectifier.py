"""The 19-transistor current-mode multi-wave rectifier and its ideal reference.

Signal flow::

    input ──► class-AB comparator (M1/M2, inverter M3/M4)
                 │ iin > 0 via M1            │ iin < 0 via M2
                 ▼                           ▼
           CM1 (M5:M6,M7) PMOS         CM2 (M8:M9,M10) NMOS
             M6 ► half_neg               M9 ► half_pos
             M7 ► CM3 (M11:M12) NMOS     M10 ─┐
                         M12 ─────────────────┴► CM4 (M13:M14,M15) PMOS
                                                   M14 ► full_neg
                                                   M15 ► CM5 (M16:M17) ► full_pos
    comparator output ──► inverter M18/M19 ► square

Current conventions: ``iin`` is the value of the source ``IIN in 0``, i.e.
the current drawn out of the rectifier input; each output current is the
branch current of its 0 V sense source ``V<x> 0 <node>``, i.e. the current the
output terminal draws from its load.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .netlist import (
    DC,
    ISource,
    ModelCard,
    Mosfet,
    NetlistDocument,
    Stimulus,
    VSource,
    parse,
)

TABLE_I = """\
.MODEL CMOSN NMOS LEVEL = 3 TOX = 1.4E-8 NSUB = 1E17
+ GAMMA = 0.5483559 PHI = 0.7 VTO = 0.7640855 DELTA = 3.0541177
+ UO = 662.6984452 ETA = 3.162045E-6 THETA = 0.1013999
+ KP = 1.259355E-4 VMAX = 1.442228E5 KAPPA = 0.3 RSH = 7.513418E-3
+ NFS = 1E12 TPG = 1 XJ = 3E-7 LD = 1E-13 WD = 2.334779E-7
+ CGDO = 2.15E-10 CGSO = 2.15E-10 CGBO = 1E-10 CJ = 4.258447E-4
+ PB = 0.9140376 MJ = 0.435903 CJSW = 3.147465E-10 MJSW = 0.1977689
.MODEL CMOSP PMOS LEVEL = 3 TOX = 1.4E-8 NSUB = 1E17
+ GAMMA = 0.6243261 PHI = 0.7 VTO = -0.9444911 DELTA = 0.1118368
+ UO = 250 ETA = 0 THETA = 0.1633973 KP = 3.924644E-5 VMAX = 1E6
+ KAPPA = 30.1015109 RSH = 33.9672594 NFS = 1E12 TPG = -1 XJ = 2E-7
+ LD = 5E-13 WD = 4.11531E-7 CGDO = 2.34E-10 CGSO = 2.34E-10
+ CGBO = 1E-10 CJ = 7.285722E-4 PB = 0.96443 MJ = 0.5
+ CJSW = 2.955161E-10 MJSW = 0.3184873
"""


def table1_models() -> Dict[str, ModelCard]:
    return parse("Table I models\n" + TABLE_I).models


MIRRORS = {
    "CM1": ("M6", "M7"),
    "CM2": ("M9", "M10"),
    "CM3": ("M12",),
    "CM4": ("M14", "M15"),
    "CM5": ("M17",),
}

OUTPUT_SENSES = {
    "half_neg": ("VHN", "hn"),
    "half_pos": ("VHP", "hp"),
    "full_neg": ("VFN", "fn"),
    "full_pos": ("VFP", "fp"),
}
INPUT_SOURCE = "IIN"
SQUARE_NODE = "sq"
SUPPLIES = ("VDD", "VSS")


def _default_card(polarity: str) -> ModelCard:
    models = table1_models()
    return models["CMOSN" if polarity == "NMOS" else "CMOSP"]


@dataclass(frozen=True)
class RectifierParams:
    vdd: float = 1.5
    vss: float = -1.5
    nmos: ModelCard = field(default_factory=lambda: _default_card("NMOS"))
    pmos: ModelCard = field(default_factory=lambda: _default_card("PMOS"))
    w: float = 1.5e-6
    l: float = 0.15e-6
    mirror_ratios: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.vdd > 0 > self.vss:
            raise ValueError("need vdd > 0 > vss")
        if self.nmos.polarity != "NMOS" or self.pmos.polarity != "PMOS":
            raise ValueError("nmos/pmos cards have the wrong polarity")
        unknown = set(self.mirror_ratios) - set(MIRRORS)
        if unknown:
            raise ValueError(f"unknown mirror {sorted(unknown)[0]}")
        if any(r <= 0 for r in self.mirror_ratios.values()):
            raise ValueError("mirror ratios must be positive")

    def __hash__(self):
        return hash((self.vdd, self.vss, self.w, self.l, tuple(sorted(self.mirror_ratios.items()))))


@dataclass(frozen=True)
class IdealOutputs:
    half_neg: float
    half_pos: float
    full_neg: float
    full_pos: float
    square: float


def ideal_reference(iin: float, params: Optional[RectifierParams] = None,
                    previous_square: Optional[float] = None) -> IdealOutputs:
    """Behavioural outputs for a DC input current.

    At exactly zero input the square output holds ``previous_square`` (vss
    when there is none).
    """
    vdd, vss = (1.5, -1.5) if params is None else (params.vdd, params.vss)
    mag = abs(iin)
    if iin > 0:
        return IdealOutputs(-iin, 0.0, -mag, mag, vss)
    if iin < 0:
        return IdealOutputs(0.0, -iin, -mag, mag, vdd)
    sq = vss if previous_square is None else previous_square
    return IdealOutputs(0.0, 0.0, 0.0, 0.0, sq)


def ideal_waveforms(iin: np.ndarray, params: Optional[RectifierParams] = None) -> Dict[str, np.ndarray]:
    """Vectorized reference over a sampled input; the square output holds through zeros."""
    iin = np.asarray(iin, dtype=float)
    vdd, vss = (1.5, -1.5) if params is None else (params.vdd, params.vss)
    sq = np.where(iin > 0, vss, np.where(iin < 0, vdd, np.nan))
    # hold last defined level through exact zeros, vss before any
    idx = np.where(np.isnan(sq), 0, np.arange(len(sq)))
    np.maximum.accumulate(idx, out=idx)
    held = sq[idx]
    held[np.isnan(held)] = vss
    # "+ 0.0" normalizes -0.0
    return {
        "half_neg": -np.maximum(iin, 0.0) + 0.0,
        "half_pos": -np.minimum(iin, 0.0) + 0.0,
        "full_neg": -np.abs(iin) + 0.0,
        "full_pos": np.abs(iin),
        "square": held,
    }


def build_rectifier(params: Optional[RectifierParams] = None,
                    stimulus: Optional[Stimulus] = None,
                    title: str = "current-mode multi-wave rectifier") -> NetlistDocument:
    """Transistor-level netlist with supplies, input source and output senses."""
    p = params or RectifierParams()
    n, pm = p.nmos.name, p.pmos.name
    ratio = {dev: p.mirror_ratios.get(cm, 1.0) for cm, devs in MIRRORS.items() for dev in devs}

    def mos(name, d, g, s, b, model):
        return Mosfet(name, d, g, s, b, model, p.w * ratio.get(name, 1.0), p.l)

    elements = [
        VSource("VDD", "vdd", "0", DC(p.vdd)),
        VSource("VSS", "vss", "0", DC(p.vss)),
        ISource(INPUT_SOURCE, "in", "0", stimulus or DC(0.0)),
        # comparator: source-follower pair driven by an inverter on the input
        mos("M1", "dp1", "y", "in", "in", n),
        mos("M2", "dn2", "y", "in", "in", pm),
        mos("M3", "y", "in", "vdd", "vdd", pm),
        mos("M4", "y", "in", "vss", "vss", n),
        # CM1
        mos("M5", "dp1", "dp1", "vdd", "vdd", pm),
        mos("M6", "hn", "dp1", "vdd", "vdd", pm),
        mos("M7", "dn3", "dp1", "vdd", "vdd", pm),
        # CM2
        mos("M8", "dn2", "dn2", "vss", "vss", n),
        mos("M9", "hp", "dn2", "vss", "vss", n),
        mos("M10", "sum", "dn2", "vss", "vss", n),
        # CM3
        mos("M11", "dn3", "dn3", "vss", "vss", n),
        mos("M12", "sum", "dn3", "vss", "vss", n),
        # CM4
        mos("M13", "sum", "sum", "vdd", "vdd", pm),
        mos("M14", "fn", "sum", "vdd", "vdd", pm),
        mos("M15", "dn5", "sum", "vdd", "vdd", pm),
        # CM5
        mos("M16", "dn5", "dn5", "vss", "vss", n),
        mos("M17", "fp", "dn5", "vss", "vss", n),
        # square-wave inverter
        mos("M18", SQUARE_NODE, "y", "vdd", "vdd", pm),
        mos("M19", SQUARE_NODE, "y", "vss", "vss", n),
    ]
    elements += [VSource(src, "0", node, DC(0.0)) for src, node in OUTPUT_SENSES.values()]
    return NetlistDocument(
        title=title,
        elements=tuple(elements),
        models={n: p.nmos, pm: p.pmos},
    )


def output_map(doc: NetlistDocument) -> Dict[str, str]:
    """Waveform signal names for the six semantic rectifier signals."""
    names = {e.name: e for e in doc.elements}
    out = {}
    src = names.get(INPUT_SOURCE)
    if not isinstance(src, ISource):
        raise KeyError(f"binding 'iin' unresolved: no current source {INPUT_SOURCE}")
    out["iin"] = f"i({INPUT_SOURCE})"
    for key, (sense, node) in OUTPUT_SENSES.items():
        el = names.get(sense)
        if not isinstance(el, VSource) or node not in el.nodes:
            raise KeyError(f"binding {key!r} unresolved: no sense source {sense} on node {node}")
        out[key] = f"i({sense})"
    if not any(SQUARE_NODE in e.nodes for e in doc.elements):
        raise KeyError(f"binding 'square' unresolved: no node {SQUARE_NODE}")
    out["square"] = f"v({SQUARE_NODE})"
    return out
