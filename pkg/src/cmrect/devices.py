"""Device models: square-law MOSFET with body effect, and source waveforms.

All MOSFET arithmetic is done on an "NMOS-ized" device: PMOS voltages and the
threshold are reflected, and a negative drain-source voltage swaps drain and
source.  Returned currents and derivatives are in the caller's frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .netlist import DC, ModelCard, Pulse, Pwl, Sin, Stimulus

EPS0 = 8.854187817e-12
EPS_OX = 3.9 * EPS0
TNOM = 27.0
VTO_TC = 2.0e-3  # V/degC, magnitude decrease above TNOM
KP_TEXP = -1.5
DEFAULT_GMIN = 1e-12
PHI_FLOOR = 1e-6

CUTOFF, TRIODE, SATURATION = "cutoff", "triode", "saturation"


@dataclass(frozen=True)
class DeviceParams:
    beta: float
    vto: float  # reflected, positive for enhancement devices
    gamma: float
    phi: float
    lam: float
    cgso: float
    cgdo: float
    cgbo: float
    cox: float
    temperature: float
    sign: int  # +1 NMOS, -1 PMOS


@dataclass(frozen=True)
class MosEval:
    id: float
    gm: float
    gds: float
    gmb: float
    region: str
    cgs: float = 0.0
    cgd: float = 0.0
    cgb: float = 0.0


def temperature_adjust(card: ModelCard, temp: float) -> dict:
    """Return ``{"vto": ..., "kp": ...}`` at ``temp`` degrees Celsius.

    |VTO| drops 2 mV per degree above the 27 C nominal; KP follows T^-1.5.
    """
    vto = card.get("VTO", 0.0)
    kp = card.get("KP", 2e-5)
    shift = VTO_TC * max(0.0, temp - TNOM)
    mag = abs(vto) - shift
    vto_t = -mag if card.is_pmos else mag
    kp_t = kp * ((temp + 273.15) / (TNOM + 273.15)) ** KP_TEXP
    return {"vto": vto_t, "kp": kp_t}


def device_params(card: ModelCard, w: float, l: float, temp: float = TNOM) -> DeviceParams:
    adj = temperature_adjust(card, temp)
    tox = card.get("TOX", 1e-7)
    return DeviceParams(
        beta=adj["kp"] * w / l,
        vto=abs(adj["vto"]) if card.is_pmos else adj["vto"],
        gamma=card.get("GAMMA", 0.0),
        phi=card.get("PHI", 0.6),
        lam=card.get("LAMBDA", 0.0),
        cgso=card.get("CGSO", 0.0),
        cgdo=card.get("CGDO", 0.0),
        cgbo=card.get("CGBO", 0.0),
        cox=EPS_OX / tox,
        temperature=temp,
        sign=-1 if card.is_pmos else 1,
    )


def _vt(vto: float, gamma: float, phi: float, vbs: float):
    """Reflected threshold and dVt/dvbs."""
    arg = phi - vbs
    if arg <= PHI_FLOOR:
        return vto + gamma * (math.sqrt(PHI_FLOOR) - math.sqrt(phi)), 0.0
    root = math.sqrt(arg)
    return vto + gamma * (root - math.sqrt(phi)), -gamma / (2.0 * root)


def threshold_voltage(card: ModelCard, vbs: float, temp: float = TNOM) -> float:
    """Body-effect threshold.  For PMOS ``vbs`` is the signed bulk-source voltage."""
    vto = temperature_adjust(card, temp)["vto"]
    if card.is_pmos:
        vt, _ = _vt(-vto, card.get("GAMMA", 0.0), card.get("PHI", 0.6), -vbs)
        return -vt
    vt, _ = _vt(vto, card.get("GAMMA", 0.0), card.get("PHI", 0.6), vbs)
    return vt


def square_law(p: DeviceParams, vgs: float, vds: float, vbs: float, gmin: float):
    """NMOS-frame evaluation for ``vds >= 0``: (id, gm, gds, gmb, region)."""
    vt, dvt = _vt(p.vto, p.gamma, p.phi, vbs)
    vov = vgs - vt
    if vov <= 0.0:
        return gmin * vds, 0.0, gmin, 0.0, CUTOFF
    clm = 1.0 + p.lam * vds
    if vds < vov:
        core = p.beta * (vov * vds - 0.5 * vds * vds)
        gm = p.beta * vds * clm
        gds = p.beta * (vov - vds) * clm + core * p.lam + gmin
        region = TRIODE
    else:
        core = 0.5 * p.beta * vov * vov
        gm = p.beta * vov * clm
        gds = core * p.lam + gmin
        region = SATURATION
    return core * clm + gmin * vds, gm, gds, -gm * dvt, region


def mos_caps(card: ModelCard, w: float, l: float, region: str):
    """Overlap plus Meyer gate capacitances ``(cgs, cgd, cgb)`` in farads."""
    cgs = card.get("CGSO", 0.0) * w
    cgd = card.get("CGDO", 0.0) * w
    cgb = card.get("CGBO", 0.0) * l
    cg = EPS_OX / card.get("TOX", 1e-7) * w * l
    if region == CUTOFF:
        cgb += cg
    elif region == TRIODE:
        cgs += 0.5 * cg
        cgd += 0.5 * cg
    else:
        cgs += 2.0 * cg / 3.0
    return cgs, cgd, cgb


def mos_dc(
    card: ModelCard,
    w: float,
    l: float,
    vgs: float,
    vds: float,
    vbs: float,
    temp: float = TNOM,
    gmin: float = DEFAULT_GMIN,
) -> MosEval:
    """Drain current (drain to source) and its exact partial derivatives.

    ``gm``, ``gds`` and ``gmb`` are derivatives of the returned ``id`` with
    respect to ``vgs``, ``vds`` and ``vbs`` in the caller's frame.  Capacitances
    are reported against the physical source/drain terminals.
    """
    p = device_params(card, w, l, temp)
    s = p.sign
    vgs, vds, vbs = s * vgs, s * vds, s * vbs
    if vds >= 0.0:
        i, gm, gds, gmb, region = square_law(p, vgs, vds, vbs, gmin)
        cgs, cgd, cgb = mos_caps(card, w, l, region)
    else:
        i, gm_, gds_, gmb_, region = square_law(p, vgs - vds, -vds, vbs - vds, gmin)
        i = -i
        gm, gds, gmb = -gm_, gm_ + gds_ + gmb_, -gmb_
        cgd, cgs, cgb = mos_caps(card, w, l, region)
    # reflection: id(v) = s * f(s * v) => d id / dv = f'(s * v)
    return MosEval(s * i, gm, gds, gmb, region, cgs, cgd, cgb)


def stimulus_value(stim: Stimulus, t: float) -> float:
    """Value of an independent source waveform at time ``t`` (SPICE conventions)."""
    if isinstance(stim, DC):
        return stim.value
    if isinstance(stim, Sin):
        if t < stim.delay:
            return stim.offset
        tt = t - stim.delay
        return stim.offset + stim.amplitude * math.sin(
            2.0 * math.pi * stim.frequency * tt
        ) * math.exp(-stim.damping * tt)
    if isinstance(stim, Pulse):
        if t < stim.delay:
            return stim.v1
        tt = t - stim.delay
        if math.isfinite(stim.period) and stim.period > 0:
            tt = math.fmod(tt, stim.period)
        if tt < stim.rise:
            return stim.v1 + (stim.v2 - stim.v1) * tt / stim.rise
        tt -= stim.rise
        if tt < stim.width:
            return stim.v2
        tt -= stim.width
        if tt < stim.fall:
            return stim.v2 + (stim.v1 - stim.v2) * tt / stim.fall
        return stim.v1
    if isinstance(stim, Pwl):
        pts = stim.points
        if t <= pts[0][0]:
            return pts[0][1]
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if t <= t1:
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        return pts[-1][1]
    raise TypeError(f"unknown stimulus {stim!r}")
