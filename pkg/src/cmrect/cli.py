"""Command-line interface.

Exit status: 0 success, 1 simulation failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import engine, harness
from .netlist import DcSweep, NetlistError, Op, Tran, parse, serialize
from .rectifier import build_rectifier, ideal_waveforms


class UsageError(Exception):
    pass


def _floats(text: str):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _cmd_run(args) -> int:
    path = Path(args.netlist)
    if not path.is_file():
        raise UsageError(f"{path}: file not found")
    doc = parse(path.read_text(encoding="utf-8"))
    temps = tuple(args.temp) if args.temp else doc.effective_temperatures
    out = Path(args.out) if args.out else harness.default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    analyses = doc.analyses or (Op(),)
    for temp in temps:
        ckt = engine.Circuit(doc, temp)
        for k, an in enumerate(analyses):
            stem = f"{path.stem}_{k}_T{temp:g}C"
            if isinstance(an, Tran):
                wave = engine.run_transient(ckt, an.step, an.stop)
                dest = out / f"{stem}_tran.csv"
                harness.write_waveform_csv(dest, wave)
            elif isinstance(an, DcSweep):
                wave = engine.run_dc_sweep(ckt, an.source, an.start, an.stop, an.step)
                dest = out / f"{stem}_dc.csv"
                harness.write_waveform_csv(dest, wave)
            else:
                op = engine.solve_dc(ckt)
                dest = out / f"{stem}_op.csv"
                with open(dest, "w") as fh:
                    fh.write("quantity,value\n")
                    for name, v in op.node_voltages.items():
                        if name != "0":
                            fh.write(f"v({name}),{v:.8e}\n")
                    for name, v in op.source_currents.items():
                        fh.write(f"i({name}),{v:.8e}\n")
                    for name, v in op.device_currents.items():
                        fh.write(f"id({name}),{v:.8e}\n")
            print(dest)
    return 0


def _cmd_rectifier(args) -> int:
    try:
        spec = harness.ExperimentSpec(
            kind=args.kind,
            amplitude_pp=args.amp,
            frequencies=args.freq,
            temperatures=args.temp,
            periods=args.periods,
            steps_per_period=args.spp,
        )
    except ValueError as err:
        raise UsageError(str(err)) from None
    result = harness.run_experiment(spec, jobs=args.jobs)
    out = Path(args.out) if args.out else harness.default_out_dir()
    for path in harness.write_experiment(result, out):
        print(path)
    return 0


def _cmd_emit(args) -> int:
    text = serialize(build_rectifier())
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_ideal(args) -> int:
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    iin = np.linspace(-args.amp, args.amp, args.points)
    ideal = ideal_waveforms(iin)
    names = ["half_neg", "half_pos", "full_neg", "full_pos", "square"]
    fh = open(args.out, "w") if args.out else sys.stdout
    try:
        fh.write("iin," + ",".join(names) + "\n")
        for k, x in enumerate(iin):
            fh.write(",".join(f"{v:.8e}" for v in [x] + [ideal[n][k] for n in names]) + "\n")
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmrect", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="parse a netlist and execute its analyses")
    p.add_argument("netlist")
    p.add_argument("--temp", type=float, action="append", help="temperature in C (repeatable)")
    p.add_argument("--out", help=f"output directory (default ${harness.OUT_ENV} or ./cmrect_out)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("rectifier", help="run the rectifier experiment matrix")
    p.add_argument("--kind", choices=harness.KINDS, required=True)
    p.add_argument("--amp", type=float, default=400e-6, help="input amplitude, A peak-to-peak")
    p.add_argument("--freq", type=_floats, default=(10e6,), help="Hz, comma-separated")
    p.add_argument("--temp", type=_floats, default=(25.0,), help="C, comma-separated")
    p.add_argument("--periods", type=int, default=3)
    p.add_argument("--spp", type=int, default=1000, help="steps per period")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", help=f"output directory (default ${harness.OUT_ENV} or ./cmrect_out)")
    p.set_defaults(func=_cmd_rectifier)

    p = sub.add_parser("emit-netlist", help="write the transistor-level rectifier netlist")
    p.add_argument("--out", help="file (default stdout)")
    p.set_defaults(func=_cmd_emit)

    p = sub.add_parser("ideal", help="tabulate the ideal reference over -A..+A")
    p.add_argument("--amp", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--out", help="file (default stdout)")
    p.set_defaults(func=_cmd_ideal)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, NetlistError, OSError) as err:
        print(f"cmrect: error: {err}", file=sys.stderr)
        return 2
    except engine.ConvergenceError as err:
        print(f"cmrect: simulation failed: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
