import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phononbs.core import TWO_PI, OperatingPoint, to_angular
from phononbs.effective_coupling import EffectiveModel, build_effective_model
from phononbs.errors import AssumptionViolated, NoOscillation, ValidationError
from phononbs.modeswap import (AmplitudeTrajectory, ChevronMap, bright_dark, chevron_scan,
                               eom_matrix, exchange_frequency, integrate_eom, propagate)

KHZ = TWO_PI * 1e-3
FSR = TWO_PI * 12.6


def toy(modes, couplings, shifts=None, decay=None):
    """Ladder model with unit spacing, zero bare offsets and given couplings."""
    n = len(modes)
    shifts = shifts or {m: 0.0 for m in modes}
    return EffectiveModel(
        modes=tuple(modes), positions=tuple(range(n)),
        detunings_tilde={m: TWO_PI + i * FSR for i, m in enumerate(modes)},
        shifts=shifts, couplings=couplings, decay=decay or {m: 0.0 for m in modes},
        delta_21=FSR, fsr=FSR)


def random_model(seed, n=5, decay=True):
    rng = np.random.default_rng(seed)
    modes = "dabce"[:n]
    couplings = {(modes[i], modes[j]): rng.uniform(-30, 30) * KHZ
                 for i in range(n) for j in range(i + 1, n)}
    shifts = {m: rng.uniform(-50, 50) * KHZ for m in modes}
    gam = {m: (rng.uniform(0, 5) * KHZ if decay else 0.0) for m in modes}
    return toy(modes, couplings, shifts, gam)


def test_resonant_rabi():
    g = 15 * KHZ
    model = toy("bc", {("b", "c"): g})
    t = np.array([0.0, math.pi / (2 * g), math.pi / g])
    traj = integrate_eom(model, {"b": 1.0}, 0.0, t)
    np.testing.assert_allclose(traj.population("c"), [0, 1, 0], atol=1e-12)


@given(st.floats(-80, 80))
def test_detuned_rabi(delta_khz):
    g = 15 * KHZ
    d = delta_khz * KHZ
    model = toy("bc", {("b", "c"): g})
    omega = math.sqrt(4 * g * g + d * d)
    t = np.linspace(0, 3 * TWO_PI / omega, 400)
    pc = integrate_eom(model, {"b": 1.0}, d, t).population("c")
    expected = 4 * g * g / omega ** 2 * np.sin(omega * t / 2) ** 2
    np.testing.assert_allclose(pc, expected, atol=1e-10)


@given(st.integers(0, 10 ** 6), st.floats(-100, 100))
def test_norm_conserved_without_decay(seed, delta_khz):
    model = random_model(seed, decay=False)
    t = np.linspace(0, 60, 121)
    traj = integrate_eom(model, {"b": 0.6, "a": 0.8j}, delta_khz * KHZ, t)
    np.testing.assert_allclose(traj.populations.sum(axis=1), 1.0, atol=1e-10)


@given(st.integers(0, 10 ** 6), st.floats(-100, 100))
def test_norm_monotone_with_decay(seed, delta_khz):
    model = random_model(seed)
    t = np.linspace(0, 60, 241)
    norm = integrate_eom(model, {"b": 1.0}, delta_khz * KHZ, t).populations.sum(axis=1)
    assert np.all(np.diff(norm) <= 1e-13)


@given(st.integers(0, 10 ** 6))
def test_time_reversal(seed):
    model = random_model(seed, decay=False)
    M = eom_matrix(model, 7 * KHZ)
    v0 = np.zeros(5, complex)
    v0[2] = 1.0
    T = 37.0
    vT = propagate(M, v0, [T])[0]
    back = np.conj(propagate(M.conj(), np.conj(vT), [T])[0])
    np.testing.assert_allclose(back, v0, atol=1e-8)


@given(st.integers(0, 10 ** 6), st.floats(-100, 100))
def test_conjugate_negation_invariant(seed, delta_khz):
    # M -> -conj(M): every coupling, shift and the chevron detuning change sign together
    model = random_model(seed)
    flipped = toy(model.modes, {k: -v for k, v in model.couplings.items()},
                  {m: -v for m, v in model.shifts.items()}, model.decay)
    flipped = EffectiveModel(**{**flipped.__dict__,
                                "detunings_tilde": {m: -v for m, v in model.detunings_tilde.items()}})
    t = np.linspace(0, 50, 51)
    d = delta_khz * KHZ
    p1 = integrate_eom(model, {"b": 1.0}, d, t).populations
    p2 = integrate_eom(flipped, {"b": 1.0}, -d, t).populations
    np.testing.assert_allclose(p1, p2, atol=1e-10)


def test_single_coupling_sign_is_not_free():
    # flipping one coupling alone changes the three-mode interference
    model = random_model(3, n=3, decay=False)
    flipped = toy(model.modes, {**model.couplings, ("d", "b"): -model.couplings[("d", "b")]},
                  model.shifts)
    t = np.linspace(0, 80, 81)
    p1 = integrate_eom(model, {"a": 1.0}, 0.0, t).populations
    p2 = integrate_eom(flipped, {"a": 1.0}, 0.0, t).populations
    assert np.max(np.abs(p1 - p2)) > 1e-3


@given(st.integers(0, 10 ** 6))
def test_rk45_matches_expm(seed):
    model = random_model(seed)
    t = np.linspace(0, 40, 81)
    a = integrate_eom(model, {"b": 1.0}, 3 * KHZ, t).amplitudes
    b = integrate_eom(model, {"b": 1.0}, 3 * KHZ, t, method="rk45").amplitudes
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_damping_conventions():
    gam = 4 * KHZ
    model = toy("bc", {("b", "c"): 0.0}, decay={"b": gam, "c": 0.0})
    t = np.array([0.0, 20.0])
    half = integrate_eom(model, {"b": 1.0}, 0.0, t).population("b")[-1]
    full = integrate_eom(model, {"b": 1.0}, 0.0, t, convention="full").population("b")[-1]
    assert half == pytest.approx(math.exp(-gam * 20.0))
    assert full == pytest.approx(math.exp(-2 * gam * 20.0))
    with pytest.raises(ValidationError):
        eom_matrix(model, 0.0, "quarter")


def test_input_validation():
    model = toy("bc", {("b", "c"): 1.0})
    with pytest.raises(ValidationError):
        integrate_eom(model, {"b": 1.0, "c": 1.0}, 0.0, [0.0, 1.0])
    with pytest.raises(ValidationError):
        integrate_eom(model, {"x": 1.0}, 0.0, [0.0, 1.0])
    with pytest.raises(ValidationError):
        integrate_eom(model, {"b": 1.0}, 0.0, [1.0, 0.0])


def test_exchange_frequency_sinusoid():
    f = 0.0523
    t = np.linspace(0, 200, 801)
    amp = np.stack([np.cos(np.pi * f * t), np.sin(np.pi * f * t)], axis=1)
    traj = AmplitudeTrajectory(t, ("b", "c"), amp.astype(complex))
    assert exchange_frequency(traj, "b") == pytest.approx(TWO_PI * f, rel=0.005)


def test_exchange_frequency_two_mode():
    g = 15 * KHZ
    model = toy("bc", {("b", "c"): g})
    t = np.linspace(0, 100, 600)
    traj = integrate_eom(model, {"b": 1.0}, 0.0, t)
    assert exchange_frequency(traj, "b") == pytest.approx(2 * g, rel=0.01)


def test_exchange_frequency_flat():
    model = toy("bc", {("b", "c"): 0.0})
    t = np.linspace(0, 100, 200)
    with pytest.raises(NoOscillation):
        exchange_frequency(integrate_eom(model, {"b": 1.0}, 0.0, t), "b")


def test_bright_dark_limits():
    g = 20 * KHZ
    bd = bright_dark(g, g, 0.0)
    assert bd.predicted_min_b_population == 0.0
    assert bd.resonance_offset_ab == bd.resonance_offset_bc == 0.0
    assert bd.g_bright == pytest.approx(math.sqrt(2) * g)
    bd = bright_dark(g, -g, 2 * math.sqrt(2) * g)
    assert bd.predicted_min_b_population == pytest.approx(0.5)
    assert bd.resonance_offset_ab == -bd.resonance_offset_bc
    with pytest.raises(AssumptionViolated):
        bright_dark(g, 0.5 * g, g)
    with pytest.raises(AssumptionViolated):
        bright_dark(0.0, 0.0, g)


def test_bright_dark_matches_simulation(device):
    model = build_effective_model(device, OperatingPoint(1.43, "b", to_angular(1.0)), list("abc"))
    bd = bright_dark(model.g("a", "b"), model.g("b", "c"), model.g("a", "c"))
    lossless = EffectiveModel(**{**model.__dict__, "decay": {m: 0.0 for m in model.modes}})
    t = np.linspace(0, 50, 2001)
    traj = integrate_eom(lossless, {"b": 1.0}, 0.0, t)
    assert exchange_frequency(traj, "b") == pytest.approx(bd.predicted_exchange_freq, rel=0.10)
    pb = traj.population("b")
    k = np.flatnonzero(np.diff(np.sign(np.diff(pb))) > 0)[0] + 1
    assert abs(pb[k] - bd.predicted_min_b_population) < 0.05


def test_two_mode_chevron_mirror(device):
    model = build_effective_model(device, OperatingPoint(0.61, "b", to_angular(1.0)), ["b", "c"])
    deltas = np.linspace(-140, 140, 71) * KHZ
    taus = np.linspace(0, 50, 100)
    cmap = chevron_scan(model, deltas, taus, "b")
    for m in ("b", "c"):
        np.testing.assert_allclose(cmap.population[m], cmap.population[m][::-1], atol=1e-12)
    # on resonance the period is pi / g
    g = abs(model.g("b", "c"))
    assert np.all((cmap.population["c"] >= 0) & (cmap.population["c"] <= 1))
    traj = integrate_eom(model, {"b": 1.0}, 0.0, np.linspace(0, 200, 1000))
    assert exchange_frequency(traj, "c") == pytest.approx(2 * g, rel=0.02)


def test_zero_coupling_chevron_flat():
    model = toy("bc", {("b", "c"): 0.0})
    cmap = chevron_scan(model, np.linspace(-50, 50, 5) * KHZ, np.linspace(0, 30, 10), "b")
    np.testing.assert_allclose(cmap.population["b"], 1.0)


def test_three_mode_asymmetry_direction(device):
    model = build_effective_model(device, OperatingPoint(1.43, "b", to_angular(1.0)), list("abc"))
    deltas = np.linspace(-140, 140, 71) * KHZ
    cmap = chevron_scan(model, deltas, np.linspace(0, 50, 100), "b")
    peak_a = deltas[np.argmax(cmap.population["a"].max(axis=1))]
    peak_c = deltas[np.argmax(cmap.population["c"].max(axis=1))]
    assert peak_a > 0 > peak_c


def test_chevron_threads_identical():
    model = random_model(11)
    d = np.linspace(-60, 60, 9) * KHZ
    t = np.linspace(0, 30, 16)
    a = chevron_scan(model, d, t, "b")
    b = chevron_scan(model, d, t, "b", threads=4)
    for m in a.population:
        assert np.array_equal(a.population[m], b.population[m])


def test_chevron_csv_round_trip():
    model = random_model(5)
    cmap = chevron_scan(model, np.linspace(-60, 60, 7) * KHZ, np.linspace(0, 30, 6), "b",
                        readout_modes=["a", "b", "c"])
    text = cmap.to_csv()
    assert text.splitlines()[0] == "mode,delta_mhz,tau_us,population"
    back = ChevronMap.from_csv(text)
    np.testing.assert_allclose(back.delta_grid, cmap.delta_grid, rtol=1e-15)
    for m in cmap.population:
        assert np.array_equal(back.population[m], cmap.population[m])
    assert back.to_csv() == text
    partial = "\n".join(text.splitlines()[:-1]) + "\n"
    with pytest.raises(ValidationError):
        ChevronMap.from_csv(partial)


def test_smoothing():
    model = random_model(5)
    cmap = chevron_scan(model, np.linspace(-60, 60, 3) * KHZ, np.linspace(0, 30, 31), "b")
    assert cmap.smoothed(1) is cmap
    sm = cmap.smoothed(5)
    np.testing.assert_allclose(sm.population["b"][:, 10],
                               cmap.population["b"][:, 8:13].mean(axis=1))
    with pytest.raises(ValidationError):
        cmap.smoothed(4)
