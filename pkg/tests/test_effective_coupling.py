import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phononbs.core import (TWO_PI, DeviceParameters, ModeLadder, ModeSpec, OperatingPoint,
                           to_angular)
from phononbs.effective_coupling import (THREE_MODE_EQUAL, TWO_MODE_DOMINANT,
                                         build_effective_model, coupling, phonon_shift,
                                         regime_finder, resonance_solver)
from phononbs.errors import SidebandCollision, ValidationError
from phononbs.specfun import bessel_j, bessel_table, default_order_cutoff

KHZ = TWO_PI * 1e-3


def point(x, det_mhz=1.0, d21=None):
    return OperatingPoint(x, "b", to_angular(det_mhz), d21)


def test_regimes():
    x = regime_finder(THREE_MODE_EQUAL)
    assert x == pytest.approx(1.43, abs=0.01)
    assert round(bessel_j(0, x), 2) == round(bessel_j(1, x), 2) == 0.55
    assert -bessel_j(-1, x) == pytest.approx(bessel_j(1, x), abs=1e-14)
    assert regime_finder(TWO_MODE_DOMINANT) == 0.61
    with pytest.raises(ValidationError):
        regime_finder("nonsense")


def test_dispersive_limit():
    table = bessel_table(0.0, 5)
    g, det = 0.3, 7.0
    assert phonon_shift(g, det, 2.0, table) == pytest.approx(g * g / det)
    assert phonon_shift(0.0, det, 2.0, table) == 0.0
    assert coupling(0.0, g, det, det + 2, 1, 2.0, table) == 0.0


def test_collision_guard():
    table = bessel_table(0.6, 10)
    with pytest.raises(SidebandCollision):
        phonon_shift(0.1, 2.0 + 0.05, 1.0, table)
    with pytest.raises(ValidationError):
        coupling(0.1, 0.1, 5.5, 6.5, 0, 1.0, table)


@pytest.mark.parametrize("x, det, target", [(0.61, 1.0, 15.6), (0.85, 1.2, 18.5)])
def test_main_text_couplings(device, x, det, target):
    model = build_effective_model(device, point(x, det), ["b", "c"])
    assert abs(model.g("b", "c")) == pytest.approx(target * KHZ, rel=0.15)


def test_resonance_offset(device):
    sol = resonance_solver(device, point(0.61), ("b", "c"))
    off = sol.delta_21_star - device.ladder.fsr
    assert off == pytest.approx(-44 * KHZ, abs=10 * KHZ)
    assert abs(sol.residual) < 2 * math.pi * 1e-5
    # re-evaluating the condition at the solution
    model = build_effective_model(device, point(0.61, d21=sol.delta_21_star), ["b", "c"])
    lhs = device.ladder.fsr + model.shifts["c"] - model.shifts["b"]
    assert lhs == pytest.approx(sol.delta_21_star, abs=2 * math.pi * 1e-5)


def test_resonance_without_coupling():
    modes = (ModeSpec("b", 100.0, 0.0), ModeSpec("c", 110.0, 0.0))
    from phononbs.config import default_device
    dev = DeviceParameters(default_device().qubit, ModeLadder(modes, 10.0))
    op = OperatingPoint(0.61, "b", 3.0)
    assert resonance_solver(dev, op, ("b", "c")).delta_21_star == pytest.approx(10.0, abs=1e-15)


def test_zero_drive_model(device):
    model = build_effective_model(device, point(0.0), list("dabce"))
    assert all(v == 0.0 for v in model.couplings.values())
    for m in model.modes:
        disp = device.ladder.mode(m).g_m ** 2 / model.detunings_tilde[m]
        assert model.shifts[m] == pytest.approx(disp, rel=1e-12)


def test_five_mode_magnitude_class(device):
    model = build_effective_model(device, point(1.43), list("dabce"))
    for pair, ref in ((("a", "b"), 20.5), (("b", "c"), 17.2), (("a", "c"), 9.0)):
        assert 0.3 < abs(model.g(*pair)) / (ref * KHZ) < 3.0
    assert model.g("a", "c") < 0
    gs = [abs(model.g("a", "b")), abs(model.g("b", "c")), abs(model.g("a", "c"))]
    assert max(gs) / min(gs) < 1.35


def test_reverse_order_same_physics(device):
    fwd = build_effective_model(device, point(1.43), list("dabce"))
    rev = build_effective_model(device, point(1.43), list("ecbad"))
    assert fwd.modes == rev.modes
    for (m, k), v in fwd.couplings.items():
        assert rev.g(k, m) == v


def test_decay_copied(device):
    model = build_effective_model(device, point(0.61), list("dabce"))
    for m in model.modes:
        assert model.decay[m] == device.ladder.mode(m).gamma_m


@given(st.floats(0.1, 1.6))
def test_truncation_converged(x):
    from phononbs.config import default_device
    dev = default_device()
    n = default_order_cutoff(x)
    a = build_effective_model(dev, point(x), list("dabce"), n_max=n)
    b = build_effective_model(dev, point(x), list("dabce"), n_max=n + 5)
    for m in a.modes:
        assert a.shifts[m] == pytest.approx(b.shifts[m], rel=1e-8)
    for key in a.couplings:
        assert a.couplings[key] == pytest.approx(b.couplings[key], rel=1e-8, abs=1e-15)


@given(st.floats(0.1, 2.0), st.floats(0.8, 3.0), st.integers(1, 3))
def test_symmetrized_coupling_is_role_symmetric(x, det_mhz, step):
    table = bessel_table(x, default_order_cutoff(x) + step)
    d21 = to_angular(12.63)
    det_m = to_angular(det_mhz)
    det_k = det_m + step * d21
    g = to_angular(0.257)
    fwd = coupling(g, g, det_m, det_k, step, d21, table)
    # the same sum written from mode k: sidebands n -> n + step, J_n J_{n+step} symmetric
    orders = table.orders
    jn = table.values
    jns = np.array([table[n + step] for n in orders])
    alt = 0.5 * g * g * (np.sum(jn * jns / (det_k - (orders + step) * d21))
                         + np.sum(jn * jns / (det_m - orders * d21)))
    assert fwd == pytest.approx(alt, rel=1e-10)


def test_depth_sweep_shape(device):
    xs = np.linspace(0.3, 1.6, 27)
    models = [build_effective_model(device, point(x), list("abc")) for x in xs]
    gab = np.abs([m.g("a", "b") for m in models])
    gbc = np.abs([m.g("b", "c") for m in models])
    gac = np.abs([m.g("a", "c") for m in models])
    for g in (gab, gbc):
        k = int(np.argmax(g))
        assert 0 < k < len(xs) - 1
        assert np.all(np.diff(g[:k + 1]) > 0) and np.all(np.diff(g[k:]) < 0)
    assert np.all(np.diff(gac) > 0)


def test_first_sideband_zero_suppresses_neighbour_coupling(device):
    xs = np.linspace(3.6, 4.2, 61)
    g = [abs(build_effective_model(device, point(x), ["b", "c"]).g("b", "c")) for x in xs]
    peak = abs(build_effective_model(device, point(1.1), ["b", "c"]).g("b", "c"))
    assert min(g) < 0.1 * peak


def test_frame_detunings(device):
    model = build_effective_model(device, point(0.61), ["b", "c"])
    base = model.frame_detunings(0.0)
    assert base[0] - base[1] == pytest.approx(0.0, abs=1e-12)
    d = 10 * KHZ
    shifted = model.frame_detunings(d)
    assert (shifted - base)[1] - (shifted - base)[0] == pytest.approx(-d)


def test_model_dict_units(device):
    model = build_effective_model(device, point(0.61), ["b", "c"])
    out = model.to_dict()
    assert out["couplings_khz"]["b-c"] == pytest.approx(model.g("b", "c") / KHZ)
    assert out["fsr_mhz"] == pytest.approx(12.62955)
