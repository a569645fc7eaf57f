"""Acceptance criteria 1-11, one test each, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py``; the per-criterion lines
appear in the "acceptance criteria" section of the terminal summary.
"""

import itertools
import math
import time
import timeit

import numpy as np
import pytest

from cmrect import devices
from cmrect.engine import run_transient, solve_dc
from cmrect.harness import ExperimentSpec, even_symmetry_error, run_experiment
from cmrect.netlist import (
    DC,
    Capacitor,
    ISource,
    Mosfet,
    NetlistDocument,
    Resistor,
    VSource,
    parse,
    serialize,
)
from cmrect.rectifier import TABLE_I, build_rectifier, ideal_reference, ideal_waveforms

# frozen from the baseline run of criterion 7 at 10 MHz, 25 C (harness window,
# first period discarded); both kernel backends reproduce it to 1e-15
POWER_BASELINE = 1.8670225012e-3  # W
NRMSE_10MHZ_BOUND = 0.05
ZC_FRACTION_BOUND = 0.02
RECTIFIED_FLOOR = -0.05

NMOS_T1 = {
    "TOX": 1.4e-8, "NSUB": 1e17, "GAMMA": 0.5483559, "PHI": 0.7, "VTO": 0.7640855,
    "DELTA": 3.0541177, "UO": 662.6984452, "ETA": 3.162045e-6, "THETA": 0.1013999,
    "KP": 1.259355e-4, "VMAX": 1.442228e5, "KAPPA": 0.3, "RSH": 7.513418e-3,
    "NFS": 1e12, "TPG": 1, "XJ": 3e-7, "LD": 1e-13, "WD": 2.334779e-7,
    "CGDO": 2.15e-10, "CGSO": 2.15e-10, "CGBO": 1e-10, "CJ": 4.258447e-4,
    "PB": 0.9140376, "MJ": 0.435903, "CJSW": 3.147465e-10, "MJSW": 0.1977689,
}
PMOS_T1 = {
    "TOX": 1.4e-8, "NSUB": 1e17, "GAMMA": 0.6243261, "PHI": 0.7, "VTO": -0.9444911,
    "DELTA": 0.1118368, "UO": 250, "ETA": 0, "THETA": 0.1633973, "KP": 3.924644e-5,
    "VMAX": 1e6, "KAPPA": 30.1015109, "RSH": 33.9672594, "NFS": 1e12, "TPG": -1,
    "XJ": 2e-7, "LD": 5e-13, "WD": 4.11531e-7, "CGDO": 2.34e-10, "CGSO": 2.34e-10,
    "CGBO": 1e-10, "CJ": 7.285722e-4, "PB": 0.96443, "MJ": 0.5, "CJSW": 2.955161e-10,
    "MJSW": 0.3184873,
}


@pytest.fixture(scope="module", autouse=True)
def suite_start():
    return time.perf_counter()


@pytest.fixture(scope="module")
def full_pos_runs():
    """Criterion-7 runs: 400 uA p-p sine, 3 periods, 1000 steps/period."""
    out = {}
    for f in (10e6, 100e6, 200e6):
        t0 = time.perf_counter()
        res = run_experiment(ExperimentSpec(kind="full_pos", frequencies=(f,)))
        out[f] = (res, time.perf_counter() - t0)
    return out


def test_criterion_01_table1(acceptance):
    text = "Table I\n" + TABLE_I
    doc = parse(text)
    exact = doc.models["CMOSN"].params == NMOS_T1 and doc.models["CMOSP"].params == PMOS_T1
    levels = doc.models["CMOSN"].level == doc.models["CMOSP"].level == 3
    again = parse(serialize(doc))
    roundtrip = again.models == doc.models
    runtime = min(timeit.repeat(lambda: parse(text), number=20, repeat=5)) / 20
    ok = exact and levels and roundtrip and runtime < 1e-3
    acceptance(1, ok, f"52 params exact={exact}, round-trip={roundtrip}, "
                      f"parse {runtime * 1e3:.3f} ms (< 1 ms)")


def test_criterion_02_square_law(acceptance, nmos):
    w, l = 1.5e-6, 0.15e-6
    kp, vto, gamma, phi = 1.259355e-4, 0.7640855, 0.5483559, 0.7
    # overdrive x body bias x drain margin, all in saturation
    grid = list(itertools.product(np.linspace(0.05, 1.0, 5), np.linspace(0.0, -1.5, 4),
                                  np.linspace(0.0, 1.0, 5)))
    assert len(grid) == 100
    worst_law = worst_fd = 0.0
    h = 1e-6
    for vov, vbs, frac in grid:
        vt = vto + gamma * (math.sqrt(phi - vbs) - math.sqrt(phi))
        vgs = vt + vov
        vds = vov + 0.05 + frac  # saturation, away from the boundary
        ev = devices.mos_dc(nmos, w, l, vgs, vds, vbs, temp=27.0, gmin=0.0)
        law = 0.5 * kp * (w / l) * vov**2
        worst_law = max(worst_law, abs(ev.id - law) / law)

        def i(a, b, c):
            return devices.mos_dc(nmos, w, l, a, b, c, temp=27.0, gmin=0.0).id

        fd = ((i(vgs + h, vds, vbs) - i(vgs - h, vds, vbs)) / (2 * h),
              (i(vgs, vds + h, vbs) - i(vgs, vds - h, vbs)) / (2 * h),
              (i(vgs, vds, vbs + h) - i(vgs, vds, vbs - h)) / (2 * h))
        for got, want in zip((ev.gm, ev.gds, ev.gmb), fd):
            scale = max(abs(want), 1e-3 * ev.gm)
            worst_fd = max(worst_fd, abs(got - want) / scale)
    ok = worst_law <= 1e-12 and worst_fd <= 1e-4
    acceptance(2, ok, f"max rel vs law {worst_law:.2e} (<= 1e-12), "
                      f"max rel derivative vs FD {worst_fd:.2e} (<= 1e-4)")


def _mirror(models, iin, ratio):
    return NetlistDocument("mirror", (
        VSource("VDD", "vdd", "0", DC(1.5)),
        ISource("IREF", "vdd", "d", DC(iin)),
        Mosfet("M1", "d", "d", "0", "0", "CMOSN", 1.5e-6, 0.15e-6),
        Mosfet("M2", "o", "d", "0", "0", "CMOSN", ratio * 1.5e-6, 0.15e-6),
        VSource("VO", "vdd", "o", DC(0.0)),
    ), dict(models))


def test_criterion_03_mirror(acceptance, models):
    worst = {}
    for ratio in (1.0, 2.0):
        errs = []
        for ii in (10e-6, 50e-6, 100e-6, 200e-6, 400e-6):
            op = solve_dc(_mirror(models, ii, ratio))
            errs.append(abs(op.device_currents["M2"] / (ratio * ii) - 1))
        worst[ratio] = max(errs)
    ok = max(worst.values()) <= 5e-3
    acceptance(3, ok, f"max |Io/(r*Ii) - 1|: ratio 1 {worst[1.0]:.2e}, "
                      f"ratio 2 {worst[2.0]:.2e} (<= 5e-3)")


def test_criterion_04_oracle(acceptance):
    xs = np.linspace(-400e-6, 400e-6, 1001)
    bad = 0
    for x in xs:
        o = ideal_reference(float(x))
        good = (o.full_pos == abs(x) and o.full_neg == -abs(x)
                and o.half_neg == -max(x, 0.0) and o.half_pos == -min(x, 0.0))
        if x > 0:
            good &= o.square == -1.5
        elif x < 0:
            good &= o.square == 1.5
        bad += not good
    wave = ideal_waveforms(xs)
    vec = (np.array_equal(wave["full_pos"], np.abs(xs))
           and np.array_equal(wave["full_neg"], -np.abs(xs))
           and np.array_equal(wave["square"][xs != 0], np.where(xs > 0, -1.5, 1.5)[xs != 0]))
    ok = bad == 0 and vec
    acceptance(4, ok, f"{1001 - bad}/1001 points exact, vectorized reference exact={vec}")


def test_criterion_05_composition(acceptance):
    worst = 0.0
    for iin in (100e-6, -100e-6, 400e-6, -400e-6):
        op = solve_dc(build_rectifier(stimulus=DC(iin)))
        d = op.device_currents
        folded = d["M10"] + d["M12"]
        full_neg = -op.source_currents["VFN"]
        worst = max(worst, abs(full_neg - folded) / abs(folded))
    acceptance(5, worst <= 0.02, f"max |full_neg - (I_M10 + I_M12)| / sum = {worst:.2e} (<= 2%)")


def test_criterion_06_dc_transfer(acceptance):
    spec = ExperimentSpec(kind="dc_temp", temperatures=(25.0, 50.0, 75.0, 100.0))
    res = run_experiment(spec)
    wave = res.waveforms[(0.0, 25.0)]
    x, y = wave.axis, wave["full_pos"]
    sym = even_symmetry_error(x, y, 400e-6, min_abs=40e-6)
    mid = len(x) // 2
    mono = bool(np.all(np.diff(y[mid:]) >= 0) and np.all(np.diff(y[: mid + 1]) <= 0))
    curves = len(res.waveforms) == 4 and len(x) == 801
    spread = res.temperature_spread
    ok = sym <= 0.02 and mono and curves and math.isfinite(spread)
    acceptance(6, ok, f"symmetry {sym:.2e} of 400 uA (<= 2%), monotone={mono}, "
                      f"4 curves, pairwise max deviation {spread * 1e6:.2f} uA")


def test_criterion_07_transient(acceptance, full_pos_runs):
    m10 = full_pos_runs[10e6][0].metrics[(10e6, 25.0, "full_pos")]
    period = 1e-7
    res200 = full_pos_runs[200e6][0]
    wave200 = res200.waveforms[(200e6, 25.0)]
    floor = float(np.min(wave200["full_pos"])) / 200e-6
    nrmse = {f: r.metrics[(f, 25.0, "full_pos")].nrmse for f, (r, _) in full_pos_runs.items()}
    ok = (m10.nrmse <= NRMSE_10MHZ_BOUND
          and m10.zero_crossing_deviation <= ZC_FRACTION_BOUND * period
          and floor >= RECTIFIED_FLOOR)
    acceptance(7, ok, f"10 MHz nrmse {m10.nrmse:.4f} (<= 5%), zero-crossing "
                      f"{m10.zero_crossing_deviation / period:.2%} of period (<= 2%); "
                      f"200 MHz min {floor:+.2%} of peak (>= -5%); nrmse 100 MHz "
                      f"{nrmse[100e6]:.4f}, 200 MHz {nrmse[200e6]:.4f}")
    # reported, weakly asserted: more frequency, more error
    assert nrmse[200e6] >= nrmse[10e6]


def test_criterion_08_square(acceptance):
    res = run_experiment(ExperimentSpec(kind="square"))
    wave = res.waveforms[(10e6, 25.0)]
    iin, sq = wave["iin"], wave["square"]
    gate = np.abs(iin) > 50e-6
    target = np.where(iin > 0, -1.5, 1.5)
    dev = float(np.max(np.abs(sq - target)[gate]))
    polarity = bool(np.all(np.sign(sq[gate]) == -np.sign(iin[gate])))
    acceptance(8, dev <= 0.05 and polarity,
               f"max rail deviation {dev * 1e3:.1f} mV over {gate.sum()} samples "
               f"(<= 50 mV), polarity per square law={polarity}")


def _rc(dt):
    doc = NetlistDocument("rc", (
        VSource("V1", "in", "0", DC(1.0)),
        Resistor("R1", "in", "out", 1e3),
        Capacitor("C1", "out", "0", 1e-9, 0.0),
    ))
    wave = run_transient(doc, dt, 5e-6)
    return float(np.max(np.abs(wave["v(out)"] - (1 - np.exp(-wave.axis / 1e-6)))))


def test_criterion_09_engine(acceptance):
    tau = 1e-6
    err1, err2 = _rc(tau / 100), _rc(tau / 200)
    factor = err1 / err2
    op = solve_dc(parse("divider\nV1 in 0 1\nR1 in mid 1k\nR2 mid 0 1k\n"))
    div = abs(op.node_voltages["mid"] - 0.5) / 0.5
    ok = err1 <= 0.01 and 3 <= factor <= 5 and div <= 1e-12
    acceptance(9, ok, f"RC max error {err1:.2e} V (<= 1%), halving factor {factor:.2f} "
                      f"(in [3, 5]), divider rel error {div:.1e} (<= 1e-12)")


def test_criterion_10_power(acceptance, full_pos_runs):
    power = full_pos_runs[10e6][0].metrics[(10e6, 25.0, "full_pos")].avg_power
    rel = abs(power - POWER_BASELINE) / POWER_BASELINE
    acceptance(10, rel <= 0.01, f"avg power {power * 1e3:.6f} mW vs baseline "
                                f"{POWER_BASELINE * 1e3:.6f} mW, deviation {rel:.2e} (<= 1%)")


def test_criterion_11_runtime(acceptance, full_pos_runs, suite_start):
    run = full_pos_runs[10e6][1]
    suite = time.perf_counter() - suite_start
    ok = run < 5.0 and suite < 120.0
    acceptance(11, ok, f"criterion-7 10 MHz run {run:.2f} s (< 5 s), acceptance suite so far "
                       f"{suite:.1f} s (< 120 s)")
