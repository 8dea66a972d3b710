"""Fitting coupled-mode dynamics to two-dimensional chevron data.

The model is the five-mode (d, a, b, c, e) amplitude equation with mode d as
frequency origin. On its diagonal, mode m carries ``delta_dm - p_m delta``
with ``p_m`` its ladder index and ``delta = Delta_21 - FSR``; the diagonal
also holds the damping ``-i Gamma_m / 2``. Only modes a, b, c are read out.
Each detuning column starts from the measured tau = 0 populations, treated
as an incoherent mixture of single excitations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize

from .core import TWO_PI
from .effective_coupling import EffectiveModel
from .errors import BoundsViolation, NoConvergence, Unbounded, ValidationError
from .modeswap import ChevronMap

MODES = ("d", "a", "b", "c", "e")
READOUT = ("a", "b", "c")
FREE_DEFAULT = ("delta_da", "delta_db", "delta_dc", "delta_de", "g_ab", "g_bc", "g_ac")
ALL_COUPLINGS = tuple(f"g_{m}{k}" for i, m in enumerate(MODES) for k in MODES[i + 1:])
ALL_PARAMS = FREE_DEFAULT[:4] + ALL_COUPLINGS
READOUT_OFFSET = 0.06
G_BOUND = TWO_PI * 0.2      # 200 kHz
DELTA_BOUND = TWO_PI * 0.5  # 500 kHz
KHZ = TWO_PI * 1e-3


@dataclass(frozen=True)
class ChevronDataset:
    """Measured populations of modes a, b, c on a (delta, tau) grid.

    ``populations`` are raw, still carrying the readout offset;
    :meth:`corrected` removes it.
    """

    delta_grid: np.ndarray
    tau_grid: np.ndarray
    populations: Dict[str, np.ndarray]
    readout_offset: float = READOUT_OFFSET

    def __post_init__(self):
        d = np.asarray(self.delta_grid, dtype=float)
        t = np.asarray(self.tau_grid, dtype=float)
        if np.any(np.diff(d) <= 0) or np.any(np.diff(t) <= 0):
            raise ValidationError("grids must be strictly ascending", field="grid")
        if t[0] != 0:
            raise ValidationError("tau grid must start at 0", field="tau_grid")
        pops = {}
        for m, arr in self.populations.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (d.size, t.size):
                raise ValidationError(f"population {m} has shape {arr.shape}", field="populations")
            pops[m] = arr
        object.__setattr__(self, "delta_grid", d)
        object.__setattr__(self, "tau_grid", t)
        object.__setattr__(self, "populations", pops)

    def corrected(self) -> Dict[str, np.ndarray]:
        return {m: a - self.readout_offset for m, a in self.populations.items()}

    def initial_populations(self) -> np.ndarray:
        """(len(delta), 5) array of tau = 0 populations per mode, clipped at 0."""
        out = np.zeros((self.delta_grid.size, len(MODES)))
        for m, arr in self.corrected().items():
            out[:, MODES.index(m)] = np.clip(arr[:, 0], 0.0, None)
        return out

    @classmethod
    def from_map(cls, cmap: ChevronMap, readout_offset: float = READOUT_OFFSET):
        pops = {m: cmap.population[m] for m in READOUT if m in cmap.population}
        return cls(cmap.delta_grid, cmap.tau_grid, pops, readout_offset)

    def to_map(self) -> ChevronMap:
        return ChevronMap(self.delta_grid, self.tau_grid, dict(self.populations))


def fixed_from_model(model: EffectiveModel) -> Dict[str, float]:
    """Coupling values of a five-mode effective model keyed like the fit parameters."""
    if tuple(model.modes) != MODES:
        raise ValidationError("expected a (d, a, b, c, e) model", field="model")
    return {f"g_{m}{k}": model.g(m, k) for i, m in enumerate(MODES) for k in MODES[i + 1:]}


def shifts_from_model(model: EffectiveModel, resonance_axis: bool = True) -> Dict[str, float]:
    """Diagonal offsets delta_dm of a five-mode effective model.

    With ``resonance_axis`` the offsets match data whose detuning axis is
    measured from the model's reference-pair resonance (as produced by
    :func:`chevron_scan`); otherwise the axis is Delta_21 - FSR and the
    offsets are the bare shift differences delta_m - delta_d.
    """
    if tuple(model.modes) != MODES:
        raise ValidationError("expected a (d, a, b, c, e) model", field="model")
    offset = model.resonance_spacing() - model.fsr if resonance_axis else 0.0
    return {f"delta_d{m}": model.shifts[m] - model.shifts["d"] - p * offset
            for m, p in zip(MODES[1:], model.positions[1:])}


def params_from_model(model: EffectiveModel, resonance_axis: bool = True) -> Dict[str, float]:
    """Every fit parameter as predicted by an effective model."""
    out = fixed_from_model(model)
    out.update(shifts_from_model(model, resonance_axis))
    return out


def _matrices(params, decay, delta_grid):
    n = len(MODES)
    G = np.zeros((n, n))
    for i, m in enumerate(MODES):
        for j in range(i + 1, n):
            G[i, j] = G[j, i] = params[f"g_{m}{MODES[j]}"]
    base = np.array([0.0] + [params[f"delta_d{m}"] for m in MODES[1:]])
    pos = np.arange(n)
    damp = np.array([decay.get(m, 0.0) for m in MODES])
    diag = base[None, :] - pos[None, :] * delta_grid[:, None] - 0.5j * damp[None, :]
    M = np.broadcast_to(G, (delta_grid.size, n, n)).astype(complex).copy()
    idx = np.arange(n)
    M[:, idx, idx] += diag
    return M


def model_populations(params: Mapping[str, float], decay: Mapping[str, float],
                      delta_grid: np.ndarray, tau_grid: np.ndarray,
                      initial: np.ndarray) -> Dict[str, np.ndarray]:
    """Populations of the read-out modes for every (delta, tau).

    ``initial`` is a (len(delta), 5) array of starting populations; each
    column evolves as an incoherent mixture of single excitations.
    """
    M = _matrices(params, decay, np.asarray(delta_grid, dtype=float))
    w, V = np.linalg.eig(M)
    Vinv = np.linalg.inv(V)
    phase = np.exp(-1j * w[:, None, :] * np.asarray(tau_grid)[None, :, None])  # (D, T, L)
    ridx = [MODES.index(m) for m in READOUT]
    # U[d, t, m, j] = sum_l V[d, m, l] phase[d, t, l] Vinv[d, l, j]
    D, L = w.shape
    B = (V[:, ridx, :, None] * Vinv[:, None, :, :]).transpose(0, 2, 1, 3).reshape(D, L, -1)
    U = np.matmul(phase, B).reshape(D, phase.shape[1], len(ridx), L)
    pop = np.einsum("dtmj,dj->dtm", U.real ** 2 + U.imag ** 2, initial)
    # exact initial condition rather than V V^-1 rounding
    pop[:, np.asarray(tau_grid) == 0, :] = np.asarray(initial)[:, None, ridx]
    return {m: pop[:, :, i] for i, m in enumerate(READOUT)}


@dataclass(frozen=True)
class FitResult:
    params: Dict[str, float]
    fixed: Dict[str, float]
    decay: Dict[str, float]
    residual: float
    free: Tuple[str, ...]
    error_bars: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    iterations: int = 0

    def all_params(self) -> Dict[str, float]:
        out = dict(self.fixed)
        out.update(self.params)
        return out

    def to_json(self) -> str:
        def khz(v):
            return v / KHZ
        return json.dumps({
            "units": "kHz (frequency / 2pi)",
            "fitted": {k: khz(v) for k, v in self.params.items()},
            "fixed": {k: khz(v) for k, v in self.fixed.items()},
            "decay": {k: khz(v) for k, v in self.decay.items()},
            "residual": self.residual,
            "error_bars": {k: [khz(lo), khz(hi)] for k, (lo, hi) in self.error_bars.items()},
            "iterations": self.iterations,
        }, indent=2)


def _residual_fn(data: ChevronDataset, free, fixed, decay):
    target = data.corrected()
    initial = data.initial_populations()
    stacked = np.stack([target[m] for m in READOUT], axis=-1)

    def vector(x):
        params = dict(fixed)
        params.update(zip(free, x * KHZ))
        pop = model_populations(params, decay, data.delta_grid, data.tau_grid, initial)
        return (np.stack([pop[m] for m in READOUT], axis=-1) - stacked).ravel()

    return vector


def _check_bounds(values: Mapping[str, float]):
    for k, v in values.items():
        bound = G_BOUND if k.startswith("g_") else DELTA_BOUND
        if not abs(v) < bound:
            raise BoundsViolation(f"{k} = {v / KHZ:.3g} kHz outside physical bounds", field=k)


def fit_chevron(data: ChevronDataset, init: Mapping[str, float], fixed: Mapping[str, float],
                decay: Mapping[str, float], free: Sequence[str] = FREE_DEFAULT,
                method: str = "nelder-mead", max_iter: int = 20000,
                xtol: float = 1e-4) -> FitResult:
    """Least-squares fit of the five-mode model to a chevron dataset.

    ``free`` parameters start from ``init``; every other parameter is taken
    from ``fixed``. Values are rad/us. The simplex is run in kHz units and
    restarted once from its own optimum to shake off a collapsed simplex.
    """
    free = tuple(free)
    missing = [p for p in ALL_PARAMS if p not in free and p not in fixed]
    if missing:
        raise ValidationError(f"parameters neither free nor fixed: {missing}", field="fixed")
    _check_bounds({k: init[k] for k in free})
    fixed = {k: v for k, v in fixed.items() if k not in free}
    vector = _residual_fn(data, free, fixed, decay)
    x0 = np.array([init[k] for k in free]) / KHZ

    if method == "nelder-mead":
        def objective(x):
            r = vector(x)
            return float(r @ r)
        x, nit = x0, 0
        for _ in range(3):
            res = minimize(objective, x, method="Nelder-Mead",
                           options={"maxiter": max_iter, "xatol": 1e-4, "fatol": 1e-10,
                                    "adaptive": True})
            nit += res.nit
            moved = np.max(np.abs(res.x - x) / np.maximum(np.abs(x), 1.0))
            x = res.x
            if moved < xtol:
                break
        if not res.success and res.nit >= max_iter:
            raise NoConvergence("simplex did not converge")
    elif method == "least-squares":
        res = least_squares(vector, x0, x_scale="jac", xtol=1e-10, ftol=1e-12, max_nfev=max_iter)
        if not res.success:
            raise NoConvergence(res.message)
        x, nit = res.x, res.nfev
    else:
        raise ValidationError("method must be 'nelder-mead' or 'least-squares'", field="method")
    r = vector(x)
    fitted = dict(zip(free, x * KHZ))
    return FitResult(params=fitted, fixed=dict(fixed), decay=dict(decay),
                     residual=float(r @ r), free=free, iterations=int(nit))


def residual_error_bars(fit: FitResult, data: ChevronDataset, threshold: float = 0.05,
                        floor: float = KHZ) -> Dict[str, Tuple[float, float]]:
    """Interval per free parameter where the residual stays below (1 + threshold) r_min.

    Each parameter is moved alone with the others held at their fitted
    values. The search gives up at ten times the parameter magnitude, or ten
    times ``floor`` for parameters that fit near zero.
    """
    vector = _residual_fn(data, fit.free, fit.fixed, fit.decay)
    x_best = np.array([fit.params[k] for k in fit.free]) / KHZ
    r_min = float(vector(x_best) @ vector(x_best))
    target = (1.0 + threshold) * r_min
    floor_khz = floor / KHZ
    bars = {}
    for i, name in enumerate(fit.free):
        def excess(v):
            x = x_best.copy()
            x[i] = v
            r = vector(x)
            return float(r @ r) - target

        p = x_best[i]
        reach = 10.0 * max(abs(p), floor_khz)
        ends = []
        for sign in (-1.0, 1.0):
            step = max(1e-3 * abs(p), 1e-3 * floor_khz)
            inner = p
            outer = p + sign * step
            while excess(outer) < 0:
                if abs(outer - p) > reach:
                    raise Unbounded(f"residual of {name} never rises by {threshold:.0%}")
                inner = outer
                step *= 2.0
                outer = p + sign * step
            # bisection down to 1e-3 relative of the bracket width
            tol = 1e-3 * max(abs(outer - p), 1e-12)
            while abs(outer - inner) > tol:
                mid = 0.5 * (inner + outer)
                if excess(mid) < 0:
                    inner = mid
                else:
                    outer = mid
            ends.append(0.5 * (inner + outer))
        bars[name] = (ends[0] * KHZ, ends[1] * KHZ)
    return bars


def synthetic_dataset(params: Mapping[str, float], decay: Mapping[str, float],
                      delta_grid: np.ndarray, tau_grid: np.ndarray,
                      initial: Optional[Mapping[str, float]] = None,
                      noise: float = 0.0, readout_offset: float = READOUT_OFFSET,
                      rng: Optional[np.random.Generator] = None) -> ChevronDataset:
    """Model populations plus readout offset and Gaussian noise."""
    initial = initial or {"b": 1.0}
    init = np.zeros((len(delta_grid), len(MODES)))
    for m, p in initial.items():
        init[:, MODES.index(m)] = p
    pops = model_populations(params, decay, np.asarray(delta_grid), np.asarray(tau_grid), init)
    out = {}
    for m, arr in pops.items():
        arr = arr + readout_offset
        if noise > 0:
            arr = arr + (rng or np.random.default_rng()).normal(0.0, noise, arr.shape)
        out[m] = arr
    return ChevronDataset(np.asarray(delta_grid, dtype=float), np.asarray(tau_grid, dtype=float),
                          out, readout_offset)
