"""Single-excitation dynamics of the coupled phonon modes.

With at most one phonon in the ladder the state is a vector of complex
amplitudes obeying ``i dv/dt = M v``. ``M`` carries the rotating-frame
detunings on the diagonal, the beam-splitter rates off the diagonal and
an imaginary damping term.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .core import to_mhz
from .effective_coupling import EffectiveModel
from .errors import AssumptionViolated, NoOscillation, ValidationError

HALF = "half"
FULL = "full"


@dataclass(frozen=True)
class AmplitudeTrajectory:
    times: np.ndarray
    modes: tuple
    amplitudes: np.ndarray  # shape (len(times), len(modes))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def population(self, mode: str) -> np.ndarray:
        return self.populations[:, self.modes.index(mode)]


def eom_matrix(model: EffectiveModel, delta: float, convention: str = HALF) -> np.ndarray:
    """Generator ``M`` of ``i dv/dt = M v`` at chevron detuning ``delta``.

    ``half`` damps amplitudes at Gamma/2 so populations decay at Gamma;
    ``full`` puts the bare Gamma on the amplitude diagonal.
    """
    if convention not in (HALF, FULL):
        raise ValidationError("convention must be 'half' or 'full'", field="convention")
    damping = model.decay_rates() * (0.5 if convention == HALF else 1.0)
    return (np.diag(model.frame_detunings(delta) - 1j * damping)
            + model.coupling_matrix()).astype(complex)


def propagate(M: np.ndarray, v0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Exact solution of ``i dv/dt = M v`` sampled at ``times``; rows are times."""
    times = np.asarray(times, dtype=float)
    hermitian = np.allclose(M, M.conj().T, atol=0)
    if hermitian:
        w, V = np.linalg.eigh(M)
        coeff = V.conj().T @ v0
        return (np.exp(-1j * np.outer(times, w)) * coeff) @ V.T
    w, V = np.linalg.eig(M)
    if np.linalg.cond(V) < 1e8:
        coeff = np.linalg.solve(V, v0)
        return (np.exp(-1j * np.outer(times, w)) * coeff) @ V.T
    return np.array([expm(-1j * M * t) @ v0 for t in times])


def _initial_vector(model: EffectiveModel, initial: Mapping[str, complex]) -> np.ndarray:
    v0 = np.zeros(len(model.modes), dtype=complex)
    for label, amp in initial.items():
        if label not in model.modes:
            raise ValidationError(f"unknown mode {label!r}", field="initial")
        v0[model.modes.index(label)] = amp
    if np.sum(np.abs(v0) ** 2) > 1 + 1e-12:
        raise ValidationError("initial populations must sum to <= 1", field="initial")
    return v0


def integrate_eom(model: EffectiveModel, initial: Mapping[str, complex], delta: float,
                  times: Sequence[float], convention: str = HALF,
                  method: str = "expm") -> AmplitudeTrajectory:
    """Amplitudes of every mode on ``times``, starting from ``initial`` at t = 0.

    ``method='rk45'`` runs an adaptive Runge-Kutta integration at rtol 1e-9;
    ``'expm'`` uses the exact propagator of the linear system.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0):
        raise ValidationError("times must be a non-empty ascending grid", field="times")
    v0 = _initial_vector(model, initial)
    M = eom_matrix(model, delta, convention)
    if method == "expm":
        amps = propagate(M, v0, times)
    elif method == "rk45":
        sol = solve_ivp(lambda t, v: -1j * (M @ v), (0.0, float(times[-1])), v0, method="RK45",
                        t_eval=times, rtol=1e-9, atol=1e-12)
        amps = sol.y.T
    else:
        raise ValidationError("method must be 'expm' or 'rk45'", field="method")
    return AmplitudeTrajectory(times=times, modes=model.modes, amplitudes=np.asarray(amps))


def exchange_frequency(traj: AmplitudeTrajectory, mode: str, pad: int = 16) -> float:
    """Dominant angular frequency of a mode's population (rad/us).

    Hann-windowed DFT of the mean-removed series, zero padded, with a
    parabolic fit of the log power around the peak.
    """
    t = traj.times
    if t.size < 8:
        raise NoOscillation("too few samples")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-6):
        raise ValidationError("exchange_frequency needs a uniform time grid", field="times")
    y = traj.population(mode)
    y = (y - y.mean()) * np.hanning(y.size)
    n = pad * y.size
    power = np.abs(np.fft.rfft(y, n)) ** 2
    freqs = np.fft.rfftfreq(n, dt)
    # skip the window's DC lobe
    lo = 2 * pad
    if power.size <= lo + 2:
        raise NoOscillation("series too short")
    k = lo + int(np.argmax(power[lo:]))
    background = np.median(power[lo:])
    if power[k] < 3.0 * background or power[k] == 0:
        raise NoOscillation("no spectral peak above background")
    if 0 < k < power.size - 1:
        a, b, c = np.log(power[k - 1:k + 2] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    return 2.0 * math.pi * (freqs[k] + shift * (freqs[1] - freqs[0]))


@dataclass(frozen=True)
class BrightDarkAnalysis:
    g_bright: float
    bright_shift: float
    dark_shift: float
    resonance_offset_bc: float
    resonance_offset_ab: float
    predicted_exchange_freq: float
    predicted_min_b_population: float


def bright_dark(g_ab: float, g_bc: float, g_ac: float, tolerance: float = 0.2) -> BrightDarkAnalysis:
    """Three-mode picture with a and c hybridized into bright and dark modes.

    Valid when |g_ab| and |g_bc| each lie within ``tolerance`` of their mean.
    """
    g_bs = 0.5 * (abs(g_ab) + abs(g_bc))
    if g_bs == 0:
        raise AssumptionViolated("both couplings to mode b vanish")
    if abs(abs(g_ab) - g_bs) > tolerance * g_bs:
        raise AssumptionViolated(
            f"|g_ab| and |g_bc| differ by more than {100 * tolerance:.0f}% of their mean")
    width = 8.0 * g_bs * g_bs
    return BrightDarkAnalysis(
        g_bright=math.sqrt(2.0) * g_bs,
        bright_shift=g_ac,
        dark_shift=-g_ac,
        resonance_offset_bc=-g_ac,
        resonance_offset_ab=g_ac,
        predicted_exchange_freq=math.sqrt(width + g_ac * g_ac),
        predicted_min_b_population=g_ac * g_ac / (width + g_ac * g_ac),
    )


@dataclass(frozen=True)
class ChevronMap:
    delta_grid: np.ndarray
    tau_grid: np.ndarray
    population: Dict[str, np.ndarray]  # mode -> (len(delta), len(tau))
    model: Optional[dict] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "delta_mhz", "tau_us", "population"])
        for mode, arr in self.population.items():
            for i, d in enumerate(self.delta_grid):
                for j, t in enumerate(self.tau_grid):
                    w.writerow([mode, repr(to_mhz(float(d))), repr(float(t)),
                                repr(float(arr[i, j]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ChevronMap":
        rows = list(csv.DictReader(io.StringIO(text)))
        deltas = sorted({float(r["delta_mhz"]) for r in rows})
        taus = sorted({float(r["tau_us"]) for r in rows})
        di = {d: i for i, d in enumerate(deltas)}
        ti = {t: i for i, t in enumerate(taus)}
        pop = {}
        for r in rows:
            arr = pop.setdefault(r["mode"], np.full((len(deltas), len(taus)), np.nan))
            arr[di[float(r["delta_mhz"])], ti[float(r["tau_us"])]] = float(r["population"])
        if any(np.isnan(a).any() for a in pop.values()):
            raise ValidationError("chevron CSV does not cover a full grid", field="csv")
        delta = np.array(deltas) * 2.0 * math.pi
        return cls(delta_grid=delta, tau_grid=np.array(taus), population=pop)

    def to_json(self) -> str:
        return json.dumps({
            "delta_mhz": [to_mhz(float(d)) for d in self.delta_grid],
            "tau_us": [float(t) for t in self.tau_grid],
            "population": {m: a.tolist() for m, a in self.population.items()},
            "model": self.model,
        }, indent=2)

    def smoothed(self, window: int) -> "ChevronMap":
        """Boxcar average along the time axis; ``window`` samples, odd."""
        if window <= 1:
            return self
        if window % 2 == 0:
            raise ValidationError("window must be odd", field="window")
        kernel = np.ones(window) / window
        out = {}
        for m, arr in self.population.items():
            padded = np.pad(arr, ((0, 0), (window // 2, window // 2)), mode="edge")
            out[m] = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="valid"), 1, padded)
        return ChevronMap(self.delta_grid, self.tau_grid, out, self.model)


def chevron_scan(model: EffectiveModel, delta_grid: Sequence[float], tau_grid: Sequence[float],
                 initial_mode: str, readout_modes: Optional[Sequence[str]] = None,
                 convention: str = HALF, threads: int = 1) -> ChevronMap:
    """Populations after each interaction time for every detuning on the grid.

    The effective model is held fixed across the scan, matching a sweep of
    Delta_21 over a range small enough to leave the modulation depth put.
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if delta_grid.size == 0 or tau_grid.size == 0:
        raise ValidationError("scan grids must be non-empty", field="scan")
    readout = list(readout_modes or model.modes)
    idx = [model.modes.index(m) for m in readout]
    v0 = _initial_vector(model, {initial_mode: 1.0})

    def column(delta):
        amps = propagate(eom_matrix(model, delta, convention), v0, tau_grid)
        return np.clip(np.abs(amps[:, idx]) ** 2, 0.0, 1.0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(column, delta_grid))
    else:
        cols = [column(d) for d in delta_grid]
    stack = np.stack(cols)  # (delta, tau, mode)
    pop = {m: stack[:, :, i] for i, m in enumerate(readout)}
    return ChevronMap(delta_grid, tau_grid, pop, model.to_dict())
