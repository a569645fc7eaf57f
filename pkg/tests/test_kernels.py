import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmrect import _fallback, devices, kernels

try:
    from cmrect import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [pytest.param(_fallback, id="python")]
BACKENDS.append(
    pytest.param(_kernels, id="cython",
                 marks=pytest.mark.skipif(_kernels is None, reason="extension not built"))
)


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    if _kernels is not None and kernels.BACKEND == "python":
        # only possible when forced through the environment
        assert os.environ.get("CMRECT_PURE_PYTHON")


def _stamp(backend, cards, volts, gmin=1e-12):
    """One MOSFET per entry of ``cards`` with terminals on nodes 1..4 (distinct per device)."""
    m = len(cards)
    size = 1 + 4 * m
    x = np.zeros(size)
    nd = np.arange(m, dtype=np.intp) * 4 + 1
    ng, ns, nb = nd + 1, nd + 2, nd + 3
    for k, (vd, vg, vs, vb) in enumerate(volts):
        x[nd[k]], x[ng[k]], x[ns[k]], x[nb[k]] = vd, vg, vs, vb
    ps = [devices.device_params(c, 1.5e-6, 0.15e-6, 27.0) for c in cards]
    arr = lambda attr: np.array([getattr(p, attr) for p in ps], dtype=float)
    G = np.zeros((size, size))
    rhs = np.zeros(size)
    ids = np.empty(m)
    reg = np.empty(m, dtype=np.int8)
    sw = np.empty(m, dtype=np.int8)
    backend.mos_stamp(arr("sign"), arr("beta"), arr("vto"), arr("gamma"), arr("phi"), arr("lam"),
                      nd, ng, ns, nb, gmin, x, G, rhs, ids, reg, sw)
    return G, rhs, ids, reg, sw, x


terminal = st.floats(-1.5, 1.5, allow_nan=False)


@pytest.mark.parametrize("backend", BACKENDS)
@given(data=st.lists(st.tuples(st.booleans(), terminal, terminal, terminal, terminal),
                     min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_stamp_matches_scalar_model(models, backend, data):
    cards = [models["CMOSP" if p else "CMOSN"] for p, *_ in data]
    volts = [v for _, *v in data]
    _, _, ids, reg, sw, _ = _stamp(backend, cards, volts)
    names = ("cutoff", "triode", "saturation")
    for k, (card, (vd, vg, vs, vb)) in enumerate(zip(cards, volts)):
        ev = devices.mos_dc(card, 1.5e-6, 0.15e-6, vg - vs, vd - vs, vb - vs, temp=27.0)
        assert ids[k] == pytest.approx(ev.id, rel=1e-12, abs=1e-22)
        assert names[reg[k]] == ev.region


@pytest.mark.skipif(_kernels is None, reason="extension not built")
@given(data=st.lists(st.tuples(st.booleans(), terminal, terminal, terminal, terminal),
                     min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_backends_agree(models, data):
    cards = [models["CMOSP" if p else "CMOSN"] for p, *_ in data]
    volts = [v for _, *v in data]
    a = _stamp(_fallback, cards, volts)
    b = _stamp(_kernels, cards, volts)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-22)


@pytest.mark.parametrize("backend", BACKENDS)
def test_stamp_linearization(nmos, backend):
    """Linear stamp reproduces the device current at the trial point (KCL at drain)."""
    volts = [(0.9, 1.2, 0.1, -0.2)]
    G, rhs, ids, _, _, x = _stamp(backend, [nmos], volts)
    # current leaving the drain through the companion = G[d] @ x - rhs[d]
    assert G[1] @ x - rhs[1] == pytest.approx(ids[0], rel=1e-12)
    assert G[3] @ x - rhs[3] == pytest.approx(-ids[0], rel=1e-12)
    assert np.all(G[2] == 0) and np.all(G[4] == 0)  # gate and bulk draw nothing


@pytest.mark.parametrize("backend", BACKENDS)
def test_stamp_shared_nodes_accumulate(nmos, backend):
    # a diode-connected device: drain and gate on the same node
    ps = devices.device_params(nmos, 1.5e-6, 0.15e-6, 27.0)
    one = lambda v: np.array([v], dtype=float)
    x = np.array([0.0, 1.1])
    G = np.zeros((2, 2))
    rhs = np.zeros(2)
    ids, reg, sw = np.empty(1), np.empty(1, np.int8), np.empty(1, np.int8)
    idx = np.array([1], dtype=np.intp)
    z = np.array([0], dtype=np.intp)
    backend.mos_stamp(one(ps.sign), one(ps.beta), one(ps.vto), one(ps.gamma), one(ps.phi),
                      one(ps.lam), idx, idx, z, z, 0.0, x, G, rhs, ids, reg, sw)
    ev = devices.mos_dc(nmos, 1.5e-6, 0.15e-6, 1.1, 1.1, 0.0, temp=27.0, gmin=0.0)
    assert G[1, 1] == pytest.approx(ev.gm + ev.gds, rel=1e-12)
    assert G[1, 1] * 1.1 - rhs[1] == pytest.approx(ev.id, rel=1e-12)


square = st.integers(1, 12).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_nan=False))
)


@pytest.mark.parametrize("backend", BACKENDS)
@given(a=square)
@settings(max_examples=150, deadline=None)
def test_solve_matches_numpy(backend, a):
    n = a.shape[0]
    a = a + np.eye(n) * (np.abs(a).sum(axis=1) + 1.0)  # diagonally dominant
    b = np.arange(1.0, n + 1)
    np.testing.assert_allclose(backend.solve(a.copy(), b.copy()), np.linalg.solve(a, b),
                               rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_solve_needs_pivoting(backend):
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(backend.solve(a, np.array([2.0, 3.0])), [3.0, 2.0])


@pytest.mark.parametrize("backend", BACKENDS)
def test_solve_singular(backend):
    with pytest.raises(ZeroDivisionError):
        backend.solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))
    with pytest.raises(ZeroDivisionError):
        backend.solve(np.zeros((3, 3)), np.ones(3))


@pytest.mark.parametrize("backend", BACKENDS)
def test_solve_empty(backend):
    assert backend.solve(np.zeros((0, 0)), np.zeros(0)).shape == (0,)
