"""Modified nodal analysis: DC operating point, DC sweep and transient.

Unknowns are ordered node voltages (ground excluded) followed by voltage
source branch currents.  Internally every array carries the ground entry at
index 0, which is sliced away before the linear solve.

Sign conventions follow SPICE: a voltage source's branch current flows from
its ``+`` node through the source to its ``-`` node; an independent current
source drives its value from ``+`` through the source to ``-``; a MOSFET's
drain current flows from drain to source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import kernels
from .devices import DEFAULT_GMIN, device_params, stimulus_value
from .netlist import (
    DC,
    Capacitor,
    ISource,
    Mosfet,
    NetlistDocument,
    Resistor,
    VSource,
    node_table,
)

REGION_NAMES = ("cutoff", "triode", "saturation")


class ConvergenceError(RuntimeError):
    """Newton iteration failed after every fallback strategy."""

    def __init__(self, message, residual=math.nan, time=None):
        self.residual = residual
        self.time = time
        super().__init__(message)


class SingularMatrixError(ConvergenceError):
    pass


@dataclass
class SolverOptions:
    gmin: float = DEFAULT_GMIN
    vntol: float = 1e-6
    abstol: float = 1e-9
    damping: float = 0.3
    max_iter: int = 200
    gmin_steps: Sequence[float] = tuple(10.0 ** -k for k in range(3, 13))
    source_steps: int = 10
    max_halvings: int = 4

    @classmethod
    def from_netlist(cls, options: Dict[str, float]) -> "SolverOptions":
        opts = cls()
        mapping = {"GMIN": "gmin", "VNTOL": "vntol", "ABSTOL": "abstol",
                   "DAMPING": "damping", "ITL1": "max_iter"}
        for key, attr in mapping.items():
            if key in options:
                val = options[key]
                setattr(opts, attr, int(val) if attr == "max_iter" else val)
        return opts


@dataclass
class MnaSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    unknowns: List[str]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass
class OperatingPoint:
    node_voltages: Dict[str, float]
    source_currents: Dict[str, float]
    device_currents: Dict[str, float]
    regions: Dict[str, str]
    converged: bool
    iterations: int
    residual: float
    x: np.ndarray = field(repr=False)


@dataclass
class Waveform:
    """Uniformly sampled signals.  ``axis`` is time or the swept source value."""

    axis_name: str
    axis: np.ndarray
    signals: Dict[str, np.ndarray]
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def names(self) -> List[str]:
        return list(self.signals)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.signals[name]

    def __len__(self) -> int:
        return len(self.axis)


@dataclass
class _CapState:
    p: np.ndarray
    n: np.ndarray
    c: np.ndarray
    v: np.ndarray
    i: np.ndarray


class Circuit:
    """A netlist compiled for simulation at one temperature."""

    def __init__(self, doc: NetlistDocument, temp: float = 25.0,
                 options: Optional[SolverOptions] = None):
        self.doc = doc
        self.temp = temp
        self.options = options or SolverOptions.from_netlist(doc.options)
        self.nodes = node_table(doc)
        self.node_names = list(self.nodes)
        self.n = len(self.nodes) - 1
        idx = self.nodes.__getitem__

        self.resistors = [e for e in doc.elements if isinstance(e, Resistor)]
        self.capacitors = [e for e in doc.elements if isinstance(e, Capacitor)]
        self.vsources = [e for e in doc.elements if isinstance(e, VSource)]
        self.isources = [e for e in doc.elements if isinstance(e, ISource)]
        self.mosfets = [e for e in doc.elements if isinstance(e, Mosfet)]
        self.ic_caps = [c for c in self.capacitors if c.ic is not None]
        self.overrides: Dict[str, float] = {}

        self.vsrc_nodes = [(idx(v.pos), idx(v.neg)) for v in self.vsources]
        self.isrc_nodes = [(idx(s.pos), idx(s.neg)) for s in self.isources]

        m = len(self.mosfets)
        self.mos_names = [d.name for d in self.mosfets]
        nodes = np.array([[idx(d.drain), idx(d.gate), idx(d.source), idx(d.bulk)]
                          for d in self.mosfets], dtype=np.intp).reshape(m, 4)
        self.nd, self.ng, self.ns, self.nb = (np.ascontiguousarray(nodes[:, k]) for k in range(4))
        params = [device_params(doc.models[d.model], d.w, d.l, temp) for d in self.mosfets]
        self.sign = np.array([p.sign for p in params], dtype=float)
        self.beta = np.array([p.beta for p in params])
        self.vto = np.array([p.vto for p in params])
        self.gamma = np.array([p.gamma for p in params])
        self.phi = np.array([p.phi for p in params])
        self.lam = np.array([p.lam for p in params])
        w = np.array([d.w for d in self.mosfets])
        l = np.array([d.l for d in self.mosfets])
        self.c_ovs = np.array([p.cgso for p in params]) * w
        self.c_ovd = np.array([p.cgdo for p in params]) * w
        self.c_ovb = np.array([p.cgbo for p in params]) * l
        self.c_gate = np.array([p.cox for p in params]) * w * l

    # ------------------------------------------------------------------
    # bookkeeping

    @property
    def nonlinear(self) -> bool:
        return bool(self.mosfets)

    def unknowns(self, dc: bool) -> List[str]:
        names = [f"v({n})" for n in self.node_names[1:]]
        names += [f"i({v.name})" for v in self.vsources]
        if dc:
            names += [f"i({c.name})" for c in self.ic_caps]
        return names

    def _size(self, dc: bool) -> int:
        return 1 + self.n + len(self.vsources) + (len(self.ic_caps) if dc else 0)

    def source_value(self, el, t: float) -> float:
        if el.name in self.overrides:
            return self.overrides[el.name]
        return stimulus_value(el.stimulus, t)

    # ------------------------------------------------------------------
    # assembly

    def linear_matrix(self, dc: bool) -> np.ndarray:
        size = self._size(dc)
        G = np.zeros((size, size))
        idx = self.nodes.__getitem__
        for r in self.resistors:
            a, b, g = idx(r.pos), idx(r.neg), 1.0 / r.ohms
            G[a, a] += g
            G[b, b] += g
            G[a, b] -= g
            G[b, a] -= g
        branches = list(self.vsrc_nodes)
        if dc:
            branches += [(idx(c.pos), idx(c.neg)) for c in self.ic_caps]
        for k, (a, b) in enumerate(branches):
            br = 1 + self.n + k
            G[a, br] += 1.0
            G[b, br] -= 1.0
            G[br, a] += 1.0
            G[br, b] -= 1.0
        return G

    def source_rhs(self, t: float, dc: bool, scale: float = 1.0) -> np.ndarray:
        rhs = np.zeros(self._size(dc))
        for k, v in enumerate(self.vsources):
            rhs[1 + self.n + k] = scale * self.source_value(v, t)
        for s, (a, b) in zip(self.isources, self.isrc_nodes):
            val = scale * self.source_value(s, t)
            rhs[a] -= val
            rhs[b] += val
        if dc:
            base = 1 + self.n + len(self.vsources)
            for k, c in enumerate(self.ic_caps):
                rhs[base + k] = c.ic
        return rhs

    def add_mosfets(self, x: np.ndarray, G: np.ndarray, rhs: np.ndarray):
        m = len(self.mosfets)
        ids = np.empty(m)
        regions = np.empty(m, dtype=np.int8)
        swaps = np.empty(m, dtype=np.int8)
        if m:
            kernels.mos_stamp(self.sign, self.beta, self.vto, self.gamma, self.phi, self.lam,
                              self.nd, self.ng, self.ns, self.nb, self.options.gmin,
                              x, G, rhs, ids, regions, swaps)
        return ids, regions, swaps

    def cap_state(self, x: np.ndarray, regions: np.ndarray, swaps: np.ndarray,
                  linear_i: Optional[np.ndarray] = None,
                  mos_i: Optional[np.ndarray] = None) -> _CapState:
        """Capacitor list (linear caps then gate-drain/source/bulk of each MOSFET)."""
        idx = self.nodes.__getitem__
        lp = np.array([idx(c.pos) for c in self.capacitors], dtype=np.intp)
        ln = np.array([idx(c.neg) for c in self.capacitors], dtype=np.intp)
        lc = np.array([c.farads for c in self.capacitors], dtype=float)
        cg = self.c_gate
        cs_eff = self.c_ovs + np.where(regions == 1, 0.5 * cg, np.where(regions == 2, 2.0 * cg / 3.0, 0.0))
        cd_eff = self.c_ovd + np.where(regions == 1, 0.5 * cg, 0.0)
        cgb = self.c_ovb + np.where(regions == 0, cg, 0.0)
        sw = swaps.astype(bool)
        cgd = np.where(sw, cs_eff, cd_eff)
        cgs = np.where(sw, cd_eff, cs_eff)
        p = np.concatenate([lp, self.ng, self.ng, self.ng])
        n = np.concatenate([ln, self.nd, self.ns, self.nb])
        c = np.concatenate([lc, cgd, cgs, cgb])
        i = np.zeros(len(c))
        if linear_i is not None:
            i[: len(lc)] = linear_i
        if mos_i is not None:
            i[len(lc):] = mos_i
        return _CapState(p, n, c, x[p] - x[n], i)

    def companion(self, caps: _CapState, dt: float, size: int):
        """Trapezoidal companion stamps: conductance 2C/dt plus history source."""
        geq = 2.0 * caps.c / dt
        hist = geq * caps.v + caps.i
        rows = np.concatenate([caps.p, caps.n, caps.p, caps.n])
        cols = np.concatenate([caps.p, caps.n, caps.n, caps.p])
        vals = np.concatenate([geq, geq, -geq, -geq])
        G = np.bincount(rows * size + cols, vals, minlength=size * size).reshape(size, size)
        rhs = np.bincount(caps.p, hist, minlength=size) - np.bincount(caps.n, hist, minlength=size)
        return G, rhs, geq, hist

    # ------------------------------------------------------------------
    # Newton

    def newton(self, G0: np.ndarray, rhs0: np.ndarray, x0: np.ndarray,
               shunt: float = 0.0, time: Optional[float] = None):
        """Damped Newton on a base linear system plus MOSFET stamps.

        Returns (x, ids, regions, swaps, iterations, residual).
        """
        opt = self.options
        nn = 1 + self.n
        x = x0.copy()
        x[0] = 0.0
        if shunt:
            G0 = G0.copy()
            G0[np.arange(1, nn), np.arange(1, nn)] += shunt

        def assemble(xv):
            G = G0.copy()
            rhs = rhs0.copy()
            out = self.add_mosfets(xv, G, rhs)
            return G, rhs, out

        G, rhs, out = assemble(x)
        resid = math.inf
        for it in range(1, opt.max_iter + 1):
            try:
                xs = kernels.solve(G[1:, 1:], rhs[1:])
            except ZeroDivisionError:
                raise SingularMatrixError("singular matrix", time=time) from None
            dx = xs - x[1:]
            dv = dx[: self.n]
            if self.nonlinear:
                np.clip(dv, -opt.damping, opt.damping, out=dv)
            x[1:] += dx
            G, rhs, out = assemble(x)
            r = G[1:nn, 1:] @ x[1:] - rhs[1:nn]
            resid = float(np.max(np.abs(r))) if self.n else 0.0
            step = float(np.max(np.abs(dv))) if self.n else 0.0
            if not np.isfinite(resid):
                break
            if resid <= opt.abstol and (step <= opt.vntol or not self.nonlinear):
                return x, out[0], out[1], out[2], it, resid
        raise ConvergenceError(
            f"Newton did not converge (residual {resid:.3g} A)", residual=resid, time=time
        )

    def operating_point(self, t: float = 0.0, x0: Optional[np.ndarray] = None):
        """DC solution with gmin and source stepping fallbacks."""
        size = self._size(dc=True)
        G0 = self.linear_matrix(dc=True)
        rhs0 = self.source_rhs(t, dc=True)
        guess = np.zeros(size) if x0 is None else _fit(x0, size)
        try:
            return self.newton(G0, rhs0, guess, time=t)
        except SingularMatrixError:
            raise
        except ConvergenceError as err:
            last = err
        # gmin stepping
        try:
            x = guess
            for g in self.options.gmin_steps:
                x = self.newton(G0, rhs0, x, shunt=g, time=t)[0]
            return self.newton(G0, rhs0, x, time=t)
        except ConvergenceError as err:
            last = err
        # source stepping
        try:
            x = np.zeros(size)
            steps = self.options.source_steps
            for k in range(1, steps + 1):
                rhs = self.source_rhs(t, dc=True, scale=k / steps)
                x = self.newton(G0, rhs, x, time=t)[0]
            return self.newton(G0, rhs0, x, time=t)
        except ConvergenceError as err:
            last = err
        raise ConvergenceError(
            f"DC operating point failed after gmin and source stepping "
            f"(last residual {last.residual:.3g} A)",
            residual=last.residual,
            time=t,
        )

    def make_op(self, x, ids, regions, iterations, residual) -> OperatingPoint:
        nv = {name: float(x[i]) for name, i in self.nodes.items()}
        base = 1 + self.n
        sc = {v.name: float(x[base + k]) for k, v in enumerate(self.vsources)}
        return OperatingPoint(
            node_voltages=nv,
            source_currents=sc,
            device_currents=dict(zip(self.mos_names, map(float, ids))),
            regions={nm: REGION_NAMES[r] for nm, r in zip(self.mos_names, regions)},
            converged=True,
            iterations=iterations,
            residual=residual,
            x=x,
        )

    def signal_names(self) -> List[str]:
        names = [f"v({n})" for n in self.node_names[1:]]
        names += [f"i({v.name})" for v in self.vsources]
        names += [f"i({s.name})" for s in self.isources]
        names += [f"id({m})" for m in self.mos_names]
        return names

    def sample(self, x: np.ndarray, ids: np.ndarray, t: float) -> np.ndarray:
        """Signal vector in ``signal_names`` order."""
        isrc = [self.source_value(s, t) for s in self.isources]
        nv = len(self.vsources)
        return np.concatenate([x[1: 1 + self.n + nv], isrc, ids])


def _fit(x: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    k = min(size, len(x))
    out[:k] = x[:k]
    return out


def _as_circuit(circuit, temp) -> Circuit:
    if isinstance(circuit, Circuit):
        if temp is None or temp == circuit.temp:
            return circuit
        return Circuit(circuit.doc, temp, circuit.options)
    return Circuit(circuit, 25.0 if temp is None else temp)


# ----------------------------------------------------------------------
# public analyses


def stamp(circuit: Union[Circuit, NetlistDocument], voltages: np.ndarray,
          dt: Optional[float] = None, prev: Optional[np.ndarray] = None,
          t: float = 0.0) -> MnaSystem:
    """Linearized MNA system at trial ``voltages`` (ground excluded).

    With ``dt`` the capacitors get trapezoidal companions whose history is the
    previous solution ``prev`` with zero previous capacitor current.
    """
    ckt = _as_circuit(circuit, None)
    dc = dt is None
    size = ckt._size(dc)
    x = np.zeros(size)
    x[1: 1 + len(voltages)] = voltages
    G = ckt.linear_matrix(dc)
    rhs = ckt.source_rhs(t, dc)
    _, regions, swaps = ckt.add_mosfets(x, G, rhs)
    if not dc:
        xp = x if prev is None else _fit(np.concatenate([[0.0], prev]), size)
        caps = ckt.cap_state(xp, regions, swaps)
        Gc, rc, _, _ = ckt.companion(caps, dt, size)
        G += Gc
        rhs += rc
    return MnaSystem(G[1:, 1:], rhs[1:], ckt.unknowns(dc))


def solve_dc(circuit: Union[Circuit, NetlistDocument], temp: Optional[float] = None,
             initial_guess: Optional[np.ndarray] = None, t: float = 0.0) -> OperatingPoint:
    ckt = _as_circuit(circuit, temp)
    x, ids, regions, _, it, resid = ckt.operating_point(t, initial_guess)
    return ckt.make_op(x, ids, regions, it, resid)


def _supply_power(ckt: Circuit, wave_signals: Dict[str, np.ndarray]) -> float:
    total = 0.0
    for v in ckt.vsources:
        if isinstance(v.stimulus, DC) and v.stimulus.value != 0.0:
            total -= v.stimulus.value * float(np.mean(wave_signals[f"i({v.name})"]))
    return total


def run_transient(circuit: Union[Circuit, NetlistDocument], tstep: float, tstop: float,
                  temp: Optional[float] = None) -> Waveform:
    """Fixed-step trapezoidal transient starting from the t=0 operating point."""
    if tstep <= 0 or tstop <= 0:
        raise ValueError("tstep and tstop must be positive")
    ckt = _as_circuit(circuit, temp)
    nsteps = int(math.floor(tstop / tstep + 1e-9))
    size = ckt._size(dc=False)
    nlin = len(ckt.capacitors)

    x_dc, ids, regions, swaps, _, resid0 = ckt.operating_point(0.0)
    lin_i = np.zeros(nlin)
    base = 1 + ckt.n + len(ckt.vsources)
    for k, c in enumerate(ckt.ic_caps):
        lin_i[ckt.capacitors.index(c)] = x_dc[base + k]
    x = x_dc[:size].copy()
    caps = ckt.cap_state(x, regions, swaps, linear_i=lin_i)

    names = ckt.signal_names()
    data = np.empty((nsteps + 1, len(names)))
    data[0] = ckt.sample(x, ids, 0.0)
    G_lin = ckt.linear_matrix(dc=False)
    max_resid = resid0
    iterations = 0

    def advance(x, caps, regions, swaps, t0, dt):
        t1 = t0 + dt
        Gc, rc, geq, hist = ckt.companion(caps, dt, size)
        G0 = G_lin + Gc
        rhs0 = ckt.source_rhs(t1, dc=False) + rc
        xn, ids, reg, sw, it, resid = ckt.newton(G0, rhs0, x, time=t1)
        vn = xn[caps.p] - xn[caps.n]
        inew = geq * vn - hist
        ncaps = ckt.cap_state(xn, reg, sw, linear_i=inew[:nlin], mos_i=inew[nlin:])
        return xn, ncaps, ids, reg, sw, it, resid

    t = 0.0
    for k in range(1, nsteps + 1):
        t_target = k * tstep
        for halvings in range(ckt.options.max_halvings + 1):
            sub = 2 ** halvings
            dt = (t_target - t) / sub
            try:
                xs, cs, rg, sw = x, caps, regions, swaps
                for j in range(sub):
                    tj = t + j * dt
                    xs, cs, ids, rg, sw, it, resid = advance(xs, cs, rg, sw, tj, dt)
                    iterations += it
                    max_resid = max(max_resid, resid)
                break
            except ConvergenceError as err:
                if halvings == ckt.options.max_halvings:
                    raise ConvergenceError(
                        f"transient failed at t={t_target:.6g} s: {err}",
                        residual=err.residual,
                        time=t_target,
                    ) from None
        x, caps, regions, swaps, t = xs, cs, rg, sw, t_target
        data[k] = ckt.sample(x, ids, t)

    axis = np.arange(nsteps + 1) * tstep
    signals = {nm: data[:, j].copy() for j, nm in enumerate(names)}
    meta = {
        "analysis": "tran",
        "tstep": tstep,
        "tstop": tstop,
        "temperature": ckt.temp,
        "newton_iterations": iterations,
        "max_kcl_residual": max_resid,
    }
    meta["avg_power"] = _supply_power(ckt, signals)
    return Waveform("t", axis, signals, meta)


def sweep_points(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("sweep step must be positive")
    if stop < start:
        raise ValueError("sweep stop must not be below start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def run_dc_sweep(circuit: Union[Circuit, NetlistDocument], source: str, start: float,
                 stop: float, step: float, temp: Optional[float] = None) -> Waveform:
    """Sweep an independent source, continuing from each previous solution."""
    ckt = _as_circuit(circuit, temp)
    key = source.upper()
    if key not in {e.name for e in ckt.vsources + ckt.isources}:
        raise KeyError(f"no independent source named {source!r}")
    values = sweep_points(start, stop, step)
    names = ckt.signal_names()
    data = np.empty((len(values), len(names)))
    x = None
    max_resid = 0.0
    saved = dict(ckt.overrides)
    try:
        for k, val in enumerate(values):
            ckt.overrides[key] = float(val)
            try:
                x, ids, _, _, _, resid = ckt.operating_point(0.0, x)
            except ConvergenceError as err:
                raise ConvergenceError(
                    f"DC sweep failed at {key}={val:.6g}: {err}", residual=err.residual
                ) from None
            max_resid = max(max_resid, resid)
            data[k] = ckt.sample(x, ids, 0.0)
    finally:
        ckt.overrides = saved
    signals = {nm: data[:, j].copy() for j, nm in enumerate(names)}
    meta = {"analysis": "dc", "source": key, "temperature": ckt.temp,
            "max_kcl_residual": max_resid}
    return Waveform(key, values, signals, meta)
