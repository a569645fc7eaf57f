import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmrect.engine import solve_dc
from cmrect.netlist import DC, VSource, parse, serialize
from cmrect.rectifier import (
    MIRRORS,
    OUTPUT_SENSES,
    RectifierParams,
    build_rectifier,
    ideal_reference,
    ideal_waveforms,
    output_map,
)

currents = st.floats(-400e-6, 400e-6, allow_nan=False)


def test_ideal_positive():
    out = ideal_reference(250e-6)
    assert (out.half_neg, out.half_pos, out.full_pos, out.full_neg, out.square) == (
        -250e-6, 0.0, 250e-6, -250e-6, -1.5)


def test_ideal_negative():
    out = ideal_reference(-250e-6)
    assert (out.half_pos, out.half_neg, out.square) == (250e-6, 0.0, 1.5)
    assert out.full_pos == 250e-6 and out.full_neg == -250e-6


def test_ideal_zero():
    out = ideal_reference(0.0)
    assert (out.half_neg, out.half_pos, out.full_neg, out.full_pos) == (0.0, 0.0, 0.0, 0.0)
    assert out.square == -1.5
    assert ideal_reference(0.0, previous_square=1.5).square == 1.5


def test_ideal_custom_rails():
    p = RectifierParams(vdd=1.8, vss=-1.2)
    assert ideal_reference(1e-6, p).square == -1.2
    assert ideal_reference(-1e-6, p).square == 1.8


@given(iin=currents)
def test_oracle_identities(iin):
    a, b = ideal_reference(iin), ideal_reference(-iin)
    assert a.full_pos == b.full_pos == abs(iin)
    assert a.full_neg == -abs(iin)
    assert a.half_neg == -max(iin, 0.0)
    assert a.half_pos == -min(iin, 0.0)
    assert a.half_neg * a.half_pos == 0.0
    assert a.half_neg + a.half_pos == -iin
    assert a.half_neg - a.half_pos == -abs(iin)
    if iin != 0:
        assert a.square in (1.5, -1.5)


@given(st.lists(currents, min_size=1, max_size=50))
def test_waveforms_match_pointwise(values):
    wave = ideal_waveforms(np.array(values))
    prev = None
    for k, v in enumerate(values):
        ref = ideal_reference(v, previous_square=prev)
        prev = ref.square
        for name in ("half_neg", "half_pos", "full_neg", "full_pos", "square"):
            assert wave[name][k] == getattr(ref, name)


def test_waveform_square_hold():
    wave = ideal_waveforms(np.array([0.0, -1e-6, 0.0, 0.0, 2e-6, 0.0]))
    np.testing.assert_array_equal(wave["square"], [-1.5, 1.5, 1.5, 1.5, -1.5, -1.5])
    for name in ("half_neg", "half_pos", "full_neg"):
        zeros = wave[name][wave[name] == 0]
        assert not np.signbit(zeros).any()


def test_params_validation(nmos, pmos):
    with pytest.raises(ValueError):
        RectifierParams(vdd=-1.0)
    with pytest.raises(ValueError):
        RectifierParams(nmos=pmos, pmos=nmos)
    with pytest.raises(ValueError):
        RectifierParams(mirror_ratios={"CM9": 2.0})
    with pytest.raises(ValueError):
        RectifierParams(mirror_ratios={"CM1": 0.0})


# ---------------------------------------------------------------- builder


def test_builder_inventory(rectifier_doc):
    mos = rectifier_doc.mosfets()
    assert [m.name for m in mos] == [f"M{k}" for k in range(1, 20)]
    vs = [e for e in rectifier_doc.elements if isinstance(e, VSource)]
    supplies = [v for v in vs if v.stimulus != DC(0.0)]
    senses = [v for v in vs if v.stimulus == DC(0.0)]
    assert sorted(v.name for v in supplies) == ["VDD", "VSS"]
    assert len(senses) == 4
    assert rectifier_doc.element("IIN").nodes == ("in", "0")
    assert set(rectifier_doc.models) == {"CMOSN", "CMOSP"}


def test_builder_mirror_ratio():
    doc = build_rectifier(RectifierParams(mirror_ratios={"CM5": 2.0}))
    base = build_rectifier()
    assert doc.element("M17").w == 2 * base.element("M17").w
    assert doc.element("M16").w == base.element("M16").w
    changed = {m.name for m, n in zip(doc.mosfets(), base.mosfets()) if m != n}
    assert changed == set(MIRRORS["CM5"])


def test_builder_determinism():
    assert serialize(build_rectifier()) == serialize(build_rectifier())
    p = RectifierParams(mirror_ratios={"CM2": 1.5})
    assert serialize(build_rectifier(p)) == serialize(build_rectifier(p))


def test_builder_emits_parseable(rectifier_doc):
    text = serialize(rectifier_doc)
    assert sum(line.startswith("M") for line in text.splitlines()) == 19
    assert parse(text) == rectifier_doc


def test_output_map(rectifier_doc):
    bind = output_map(rectifier_doc)
    assert set(bind) == {"iin", "half_neg", "half_pos", "full_neg", "full_pos", "square"}
    assert bind["square"].startswith("v(")
    assert all(v.startswith("i(") for k, v in bind.items() if k != "square")


def test_output_map_missing_sense(rectifier_doc):
    els = tuple(e for e in rectifier_doc.elements if e.name != "VFP")
    doc = dataclasses.replace(rectifier_doc, elements=els)
    with pytest.raises(KeyError, match="full_pos"):
        output_map(doc)


def test_output_map_foreign_document():
    with pytest.raises(KeyError, match="iin"):
        output_map(parse("x\nR1 a 0 1k\n"))


# ---------------------------------------------------------------- transistor level


@pytest.fixture(scope="module")
def solved():
    cache = {}

    def get(iin):
        if iin not in cache:
            cache[iin] = solve_dc(build_rectifier(stimulus=DC(iin)))
        return cache[iin]

    return get


def _outputs(op):
    return {k: op.source_currents[src] for k, (src, _) in OUTPUT_SENSES.items()}


def test_dc_sign_pattern(solved):
    op = solved(200e-6)
    ref = ideal_reference(200e-6)
    d = op.device_currents
    assert d["M1"] == pytest.approx(200e-6, rel=1e-6)
    assert abs(d["M2"]) < 1e-9
    out = _outputs(op)
    for name in OUTPUT_SENSES:
        assert out[name] == pytest.approx(getattr(ref, name), abs=0.5e-6)
    assert out["half_neg"] < 0
    assert op.node_voltages["sq"] == pytest.approx(-1.5, abs=1e-6)


def test_dc_sign_pattern_negative(solved):
    op = solved(-200e-6)
    d = op.device_currents
    assert abs(d["M1"]) < 1e-9
    assert d["M2"] == pytest.approx(-200e-6, rel=1e-6)
    out = _outputs(op)
    assert out["half_pos"] == pytest.approx(200e-6, rel=1e-4)
    assert op.node_voltages["sq"] == pytest.approx(1.5, abs=1e-6)


@pytest.mark.parametrize("iin", [100e-6, -100e-6, 400e-6, -400e-6])
def test_full_wave_composition(solved, iin):
    op = solved(iin)
    d = op.device_currents
    full_neg = op.source_currents["VFN"]
    assert -full_neg == pytest.approx(d["M10"] + d["M12"], rel=0.02)


def test_zero_input_outputs(solved):
    out = _outputs(solved(0.0))
    for v in out.values():
        assert abs(v) < 1e-9


def test_kcl_at_rectifier_op(solved):
    for iin in (-300e-6, 0.0, 50e-6):
        assert solved(iin).residual <= 1e-9
