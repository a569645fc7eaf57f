"""Experiment matrix, quality metrics against the ideal reference, CSV output."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import engine
from .netlist import Sin
from .rectifier import (
    SUPPLIES,
    RectifierParams,
    build_rectifier,
    ideal_waveforms,
    output_map,
)

OUT_ENV = "CMRECT_OUT"
KINDS = ("half", "full_neg", "full_pos", "square", "dc_temp")
KIND_OUTPUTS = {
    "half": ("half_neg", "half_pos"),
    "full_neg": ("full_neg",),
    "full_pos": ("full_pos",),
    "square": ("square",),
    "dc_temp": ("full_pos",),
}
MAX_AMPLITUDE_PP = 400e-6


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "cmrect_out"))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "full_pos"
    amplitude_pp: float = 400e-6
    frequencies: Tuple[float, ...] = (10e6,)
    temperatures: Tuple[float, ...] = (25.0,)
    periods: int = 3
    steps_per_period: int = 1000
    sweep_limit: Optional[float] = None  # dc_temp: sweep -limit..+limit, default amplitude_pp
    sweep_step: float = 1e-6
    max_amplitude_pp: float = MAX_AMPLITUDE_PP
    zc_threshold: float = 0.05
    rail_gate: float = 0.125

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {', '.join(KINDS)}")
        if not 0 <= self.amplitude_pp <= self.max_amplitude_pp:
            raise ValueError(f"amplitude must be within [0, {self.max_amplitude_pp:g}] A p-p")
        if self.kind != "dc_temp" and any(f <= 0 for f in self.frequencies):
            raise ValueError("frequencies must be positive")
        if self.periods < 2:
            raise ValueError("need at least 2 periods (the first is discarded)")
        if self.steps_per_period < 4:
            raise ValueError("steps per period too small")


@dataclass(frozen=True)
class RectifierMetrics:
    """Errors are fractions of the ideal peak; NaN marks a field that does not apply."""

    nrmse: float
    peak_error: float
    zero_crossing_deviation: float
    rail_error: float
    avg_power: float
    even_symmetry_error: float = math.nan


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    waveforms: Dict[Tuple[float, float], engine.Waveform] = field(default_factory=dict)
    metrics: Dict[Tuple[float, float, str], RectifierMetrics] = field(default_factory=dict)
    temperature_spread: float = math.nan  # dc_temp: max pairwise curve deviation, amperes

    def rows(self) -> List[dict]:
        out = []
        for (freq, temp, name), m in self.metrics.items():
            row = {"kind": self.spec.kind, "output": name, "freq": freq, "temp": temp}
            row.update(asdict(m))
            out.append(row)
        return out


# ----------------------------------------------------------------------
# metrics


def crossing_times(t: np.ndarray, x: np.ndarray, level: float, rising: bool) -> np.ndarray:
    """Linearly interpolated times where ``x`` crosses ``level`` in one direction."""
    d = x - level
    if rising:
        hit = np.nonzero((d[:-1] < 0) & (d[1:] >= 0))[0]
    else:
        hit = np.nonzero((d[:-1] > 0) & (d[1:] <= 0))[0]
    frac = d[hit] / (d[hit] - d[hit + 1])
    return t[hit] + frac * (t[hit + 1] - t[hit])


def _event_deviation(t, out, ideal, level, directions) -> float:
    worst = 0.0
    for rising in directions:
        ref = crossing_times(t, ideal, level, rising)
        got = crossing_times(t, out, level, rising)
        for tr in ref:
            if len(got) == 0:
                return math.inf
            worst = max(worst, float(np.min(np.abs(got - tr))))
    return worst


def metrics(out, ideal, iin, t, kind: str = "full_pos", *, period: Optional[float] = None,
            vdd: float = 1.5, vss: float = -1.5,
            supply: Optional[Dict[float, np.ndarray]] = None,
            zc_threshold: float = 0.05, rail_gate: float = 0.125) -> RectifierMetrics:
    """Compare a sampled output against its ideal counterpart.

    ``kind`` is the output name (``full_pos``, ``half_neg``, ``square``, ...).
    Samples before ``period`` are discarded as start-up.  ``supply`` maps each
    supply voltage to its branch-current samples for the power figure.
    """
    out, ideal, iin, t = (np.asarray(a, dtype=float) for a in (out, ideal, iin, t))
    if not (len(out) == len(ideal) == len(iin) == len(t)):
        raise ValueError("signals must be aligned and of equal length")
    keep = t >= period * (1 - 1e-9) if period else np.ones(len(t), bool)
    if not keep.any():
        raise ValueError("no samples left after discarding the first period")
    o, r, x, tt = out[keep], ideal[keep], iin[keep], t[keep]
    err = np.abs(o - r)
    peak = float(np.max(np.abs(r)))
    if peak > 0:
        nrmse = float(np.sqrt(np.mean(err**2))) / peak
        peak_err = float(np.max(err)) / peak
    else:
        nrmse = peak_err = 0.0 if float(np.max(err)) == 0.0 else math.inf

    if kind == "square":
        mid = 0.5 * (vdd + vss)
        zcd = _event_deviation(tt, o, r, mid, (True, False)) if period else math.nan
        ipk = float(np.max(np.abs(x)))
        gate = np.abs(x) > rail_gate * ipk if ipk > 0 else np.zeros(len(x), bool)
        rail = float(np.max(err[gate])) if gate.any() else 0.0
    else:
        zcd = (_event_deviation(tt, np.abs(o), np.abs(r), zc_threshold * peak, (True,))
               if period and peak > 0 else math.nan)
        rail = math.nan

    power = math.nan
    if supply:
        power = -sum(v * float(np.mean(np.asarray(i)[keep])) for v, i in supply.items())
    return RectifierMetrics(nrmse, peak_err, zcd, rail, power)


def even_symmetry_error(x, y, full_scale: float, min_abs: float = 0.0) -> float:
    """max |y(x) - y(-x)| / full_scale over sample pairs with |x| >= min_abs.

    ``x`` must be symmetric about zero on a uniform grid.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if not np.allclose(x, -x[::-1], atol=1e-12 * max(1.0, float(np.max(np.abs(x))))):
        raise ValueError("sweep axis is not symmetric about zero")
    sel = np.abs(x) >= min_abs * (1 - 1e-9)
    if not sel.any():
        return 0.0
    return float(np.max(np.abs(y - y[::-1])[sel])) / full_scale


# ----------------------------------------------------------------------
# experiments


def _transient_case(spec: ExperimentSpec, params: RectifierParams, freq: float, temp: float):
    amp = spec.amplitude_pp / 2.0
    doc = build_rectifier(params, stimulus=Sin(0.0, amp, freq))
    period = 1.0 / freq
    dt = period / spec.steps_per_period
    try:
        wave = engine.run_transient(doc, dt, spec.periods * period, temp)
    except engine.ConvergenceError as err:
        raise engine.ConvergenceError(
            f"{spec.kind} at f={freq:g} Hz, T={temp:g} C: {err}", residual=err.residual
        ) from None
    bind = output_map(doc)
    iin = wave[bind["iin"]]
    ideal = ideal_waveforms(iin, params)
    supply = {params.vdd: wave["i(VDD)"], params.vss: wave["i(VSS)"]}
    signals = {"iin": iin}
    rows = {}
    for name in KIND_OUTPUTS[spec.kind]:
        signals[name] = wave[bind[name]]
        signals[f"ideal_{name}"] = ideal[name]
        rows[name] = metrics(
            wave[bind[name]], ideal[name], iin, wave.axis, name, period=period,
            vdd=params.vdd, vss=params.vss, supply=supply,
            zc_threshold=spec.zc_threshold, rail_gate=spec.rail_gate,
        )
    for s in SUPPLIES:
        signals[f"i({s})"] = wave[f"i({s})"]
    out = engine.Waveform("t", wave.axis, signals, dict(wave.meta, frequency=freq))
    return out, rows


def _dc_case(spec: ExperimentSpec, params: RectifierParams, temp: float):
    limit = spec.amplitude_pp if spec.sweep_limit is None else spec.sweep_limit
    doc = build_rectifier(params)
    try:
        wave = engine.run_dc_sweep(doc, "IIN", -limit, limit, spec.sweep_step, temp)
    except engine.ConvergenceError as err:
        raise engine.ConvergenceError(f"dc_temp at T={temp:g} C: {err}",
                                      residual=err.residual) from None
    bind = output_map(doc)
    iin = wave.axis
    ideal = ideal_waveforms(iin, params)
    out = wave[bind["full_pos"]]
    m = metrics(out, ideal["full_pos"], iin, iin, "full_pos")
    sym = even_symmetry_error(iin, out, limit, min_abs=0.1 * limit) if limit > 0 else 0.0
    m = RectifierMetrics(m.nrmse, m.peak_error, math.nan, math.nan, math.nan, sym)
    signals = {"full_pos": out, "ideal_full_pos": ideal["full_pos"],
               "full_neg": wave[bind["full_neg"]]}
    return engine.Waveform("iin", iin, signals, wave.meta), {"full_pos": m}


def _run_case(args):
    spec, params, freq, temp = args
    if spec.kind == "dc_temp":
        return _dc_case(spec, params, temp)
    return _transient_case(spec, params, freq, temp)


def run_experiment(spec: ExperimentSpec, params: Optional[RectifierParams] = None,
                   jobs: int = 1) -> ExperimentResult:
    """Run every (frequency, temperature) case of ``spec``.

    DC sweeps (``dc_temp``) ignore frequencies and are keyed with frequency 0.
    """
    params = params or RectifierParams()
    freqs = (0.0,) if spec.kind == "dc_temp" else tuple(spec.frequencies)
    cases = [(spec, params, f, t) for f in freqs for t in spec.temperatures]
    if jobs > 1 and len(cases) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_case, cases))
    else:
        outcomes = [_run_case(c) for c in cases]

    result = ExperimentResult(spec)
    for (_, _, f, t), (wave, rows) in zip(cases, outcomes):
        result.waveforms[(f, t)] = wave
        for name, m in rows.items():
            result.metrics[(f, t, name)] = m
    if spec.kind == "dc_temp" and len(spec.temperatures) > 1:
        curves = [result.waveforms[(0.0, t)]["full_pos"] for t in spec.temperatures]
        result.temperature_spread = max(
            float(np.max(np.abs(a - b))) for i, a in enumerate(curves) for b in curves[i + 1:]
        )
    return result


# ----------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return f"{float(v):.8e}"


def write_waveform_csv(path, wave: engine.Waveform, names: Optional[Sequence[str]] = None):
    names = list(names or wave.names)
    cols = [wave.axis] + [wave[n] for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([wave.axis_name] + names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def write_metrics_csv(path, rows: List[dict]):
    if not rows:
        raise ValueError("no metrics rows")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])


def write_experiment(result: ExperimentResult, out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = result.spec.kind
    written = []
    for (f, t), wave in result.waveforms.items():
        tag = f"{kind}_T{t:g}C" if kind == "dc_temp" else f"{kind}_f{f:g}Hz_T{t:g}C"
        path = out_dir / f"{tag}.csv"
        write_waveform_csv(path, wave)
        written.append(path)
    path = out_dir / f"{kind}_metrics.csv"
    write_metrics_csv(path, result.rows())
    written.append(path)
    if kind == "dc_temp" and not math.isnan(result.temperature_spread):
        path = out_dir / f"{kind}_summary.csv"
        with open(path, "w", newline="") as fh:
            fh.write("quantity,value\n")
            fh.write(f"temperature_spread,{_fmt(result.temperature_spread)}\n")
        written.append(path)
    return written
