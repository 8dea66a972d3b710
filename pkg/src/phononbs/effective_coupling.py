"""Second-order phonon shifts and sideband-mediated phonon-phonon couplings.

A phonon mode m detuned by ``D_m`` from the Stark-shifted qubit sees the
qubit sidebands at ``n * Delta_21``. Eliminating the qubit to second order
gives

    delta_m = g_m^2 sum_n J_n^2 / (D_m - n Delta_21)
    g_mk    = g_m g_k sum_n J_n J_{n+s} / (D_m - n Delta_21)

with ``s`` the ladder distance between the two modes. The symmetrized form
averages the denominators of the two modes involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .core import DeviceParameters, DriveConfiguration, OperatingPoint
from .driven_qubit import modulation_depth as _drive_spectrum
from .errors import NoConvergence, SidebandCollision, ValidationError
from .specfun import BesselTable, bessel_j, bessel_table, default_order_cutoff

TWO_MODE_DOMINANT = "TwoModeDominant"
THREE_MODE_EQUAL = "ThreeModeEqual"
DEFAULT_TWO_MODE_DEPTH = 0.61
DEFAULT_TOLERANCE = 2.0 * math.pi * 1e-5  # 10 Hz in rad/us

# |D_m - n Delta_21| must exceed this many g_m for second order to hold
COLLISION_FACTOR = 2.0


def _denominators(detuning, delta_21, orders, g, collision_factor):
    den = detuning - orders * delta_21
    worst = np.min(np.abs(den))
    if g != 0 and worst < collision_factor * abs(g):
        n = int(orders[np.argmin(np.abs(den))])
        raise SidebandCollision(
            f"mode detuning {detuning:.6g} rad/us lies within {collision_factor:g} g of sideband {n}")
    return den


def phonon_shift(g_m: float, detuning_tilde: float, delta_21: float, amplitudes: BesselTable,
                 collision_factor: float = COLLISION_FACTOR) -> float:
    """Frequency shift of one phonon mode from all qubit sidebands (rad/us)."""
    if g_m == 0:
        return 0.0
    orders = amplitudes.orders
    den = _denominators(detuning_tilde, delta_21, orders, g_m, collision_factor)
    return float(g_m * g_m * np.sum(amplitudes.values ** 2 / den))


def coupling(g_m: float, g_k: float, detuning_m: float, detuning_k: float, step: int,
             delta_21: float, amplitudes: BesselTable, symmetrized: bool = True,
             collision_factor: float = COLLISION_FACTOR) -> float:
    """Beam-splitter rate between mode m and the mode ``step`` positions above it.

    With ``symmetrized=False`` only the denominators of mode m are used.
    """
    if step < 1:
        raise ValidationError("step must be >= 1", field="step")
    if g_m == 0 or g_k == 0:
        return 0.0
    orders = amplitudes.orders
    jn = amplitudes.values
    jns = np.array([amplitudes[n + step] for n in orders])
    g_ref = max(abs(g_m), abs(g_k))
    den_m = _denominators(detuning_m, delta_21, orders, g_ref, collision_factor)
    total = np.sum(jn * jns / den_m)
    if symmetrized:
        den_k = _denominators(detuning_k, delta_21, orders + step, g_ref, collision_factor)
        total = 0.5 * (total + np.sum(jn * jns / den_k))
    return float(g_m * g_k * total)


def regime_finder(target: str) -> float:
    """Modulation depth for a named coupling regime.

    ``ThreeModeEqual`` is the first root of J_0(x) = J_1(x), where the carrier
    and both first sidebands have equal weight.
    """
    if target == TWO_MODE_DOMINANT:
        return DEFAULT_TWO_MODE_DEPTH
    if target == THREE_MODE_EQUAL:
        return brentq(lambda x: bessel_j(0, x) - bessel_j(1, x), 1.0, 2.0, xtol=1e-14)
    raise ValidationError(f"unknown regime {target!r}", field="target")


@dataclass(frozen=True)
class EffectiveModel:
    """Phonon-only model left after eliminating the qubit.

    ``positions`` are ladder indices relative to the first mode. All rates
    are in rad/us. ``reference_pair`` fixes the zero of the chevron detuning:
    delta = 0 is where Delta_21 equals the shifted spacing of that pair.
    """

    modes: Tuple[str, ...]
    positions: Tuple[int, ...]
    detunings_tilde: Dict[str, float]
    shifts: Dict[str, float]
    couplings: Dict[Tuple[str, str], float]
    decay: Dict[str, float]
    delta_21: float
    fsr: float
    modulation_depth: float = 0.0
    reference_pair: Tuple[str, str] = field(default=None)

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ValidationError("model needs modes", field="modes")
        for key, val in self.couplings.items():
            if not math.isfinite(val):
                raise ValidationError(f"non-finite coupling {key}", field="couplings")
            rev = (key[1], key[0])
            if rev in self.couplings and self.couplings[rev] != val:
                raise ValidationError(f"asymmetric coupling {key}", field="couplings")
        if self.reference_pair is None:
            pair = (self.modes[0], self.modes[1]) if len(self.modes) > 1 else (self.modes[0],) * 2
            object.__setattr__(self, "reference_pair", pair)

    def g(self, m: str, k: str) -> float:
        if m == k:
            return 0.0
        return self.couplings.get((m, k), self.couplings.get((k, m), 0.0))

    def position(self, label: str) -> int:
        return self.positions[self.modes.index(label)]

    def resonance_spacing(self) -> float:
        """Delta_21 at which the reference pair is resonant, per unit step."""
        m, k = self.reference_pair
        step = self.position(k) - self.position(m)
        if step == 0:
            return self.fsr
        bare = self.detunings_tilde[k] - self.detunings_tilde[m]
        return (bare + self.shifts[k] - self.shifts[m]) / step

    def frame_detunings(self, delta: float) -> np.ndarray:
        """Diagonal of the rotating-frame amplitude equations at chevron detuning ``delta``.

        Mode m rotates at ``p_m Delta_21`` with ``Delta_21 = resonance_spacing + delta``;
        the reference pair's first mode sets the zero.
        """
        d21 = self.resonance_spacing() + delta
        ref = self.reference_pair[0]
        p_ref = self.position(ref)
        base = self.detunings_tilde[ref] + self.shifts[ref]
        return np.array([
            self.detunings_tilde[m] + self.shifts[m] - base - (p - p_ref) * d21
            for m, p in zip(self.modes, self.positions)
        ])

    def coupling_matrix(self) -> np.ndarray:
        n = len(self.modes)
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = self.g(self.modes[i], self.modes[j])
        return out

    def decay_rates(self) -> np.ndarray:
        return np.array([self.decay[m] for m in self.modes])

    def to_dict(self) -> dict:
        from .core import to_mhz
        return {
            "modes": list(self.modes),
            "positions": list(self.positions),
            "modulation_depth": self.modulation_depth,
            "delta_21_mhz": to_mhz(self.delta_21),
            "fsr_mhz": to_mhz(self.fsr),
            "reference_pair": list(self.reference_pair),
            "detunings_tilde_mhz": {m: to_mhz(v) for m, v in self.detunings_tilde.items()},
            "shifts_khz": {m: 1e3 * to_mhz(v) for m, v in self.shifts.items()},
            "couplings_khz": {f"{m}-{k}": 1e3 * to_mhz(v) for (m, k), v in self.couplings.items()},
            "decay_khz": {m: 1e3 * to_mhz(v) for m, v in self.decay.items()},
        }


@dataclass(frozen=True)
class ResonanceSolution:
    delta_21_star: float
    residual: float
    iterations: int


def operating_point_from_drive(dev: DeviceParameters, drive: DriveConfiguration,
                               reference_mode: Optional[str] = None) -> OperatingPoint:
    """Translate physical drive tones into depth and Stark-shifted detuning."""
    spectrum = _drive_spectrum(drive, dev.qubit)
    ref = reference_mode or dev.ladder.labels[0]
    qubit_tilde = dev.qubit.omega_q + spectrum.delta_q_ss
    return OperatingPoint(
        modulation_depth=spectrum.modulation_depth,
        reference_mode=ref,
        detuning_tilde=dev.ladder.mode(ref).omega_m - qubit_tilde,
        delta_21=drive.omega_2 - drive.omega_1,
        phi=drive.phi,
    )


def _as_operating_point(dev, point, reference_mode=None) -> OperatingPoint:
    if isinstance(point, OperatingPoint):
        return point
    if isinstance(point, DriveConfiguration):
        return operating_point_from_drive(dev, point, reference_mode)
    raise ValidationError("expected OperatingPoint or DriveConfiguration", field="drive")


def build_effective_model(dev: DeviceParameters,
                          point: Union[OperatingPoint, DriveConfiguration],
                          mode_subset: Optional[Sequence[str]] = None,
                          n_max: Optional[int] = None,
                          symmetrized: bool = True,
                          reference_pair: Optional[Tuple[str, str]] = None,
                          collision_factor: float = COLLISION_FACTOR) -> EffectiveModel:
    """Shifts and all pairwise couplings for a subset of the ladder.

    Modes are always ordered by frequency, so the listing order of
    ``mode_subset`` has no effect on the result.
    """
    op = _as_operating_point(dev, point)
    ladder = dev.ladder if mode_subset is None else dev.ladder.subset(mode_subset)
    if len(ladder.modes) < 2:
        raise ValidationError("need at least 2 modes", field="mode_subset")
    d21 = op.drive_difference(dev)
    depth = op.modulation_depth
    if n_max is None:
        n_max = default_order_cutoff(depth)
    table = bessel_table(depth, n_max)
    qt = op.qubit_tilde(dev)

    labels = ladder.labels
    pos0 = dev.ladder.position(labels[0])
    positions = tuple(dev.ladder.position(lbl) - pos0 for lbl in labels)
    det = {m.label: m.omega_m - qt for m in ladder.modes}
    gm = {m.label: m.g_m for m in ladder.modes}
    shifts = {lbl: phonon_shift(gm[lbl], det[lbl], d21, table, collision_factor) for lbl in labels}
    couplings = {}
    for i, mi in enumerate(labels):
        for j in range(i + 1, len(labels)):
            mk = labels[j]
            step = positions[j] - positions[i]
            couplings[(mi, mk)] = coupling(gm[mi], gm[mk], det[mi], det[mk], step, d21, table,
                                           symmetrized, collision_factor)
    if reference_pair is None:
        ref = op.reference_mode if op.reference_mode in labels else labels[0]
        i = labels.index(ref)
        reference_pair = (ref, labels[i + 1]) if i + 1 < len(labels) else (labels[i - 1], ref)
    return EffectiveModel(
        modes=labels,
        positions=positions,
        detunings_tilde=det,
        shifts=shifts,
        couplings=couplings,
        decay={m.label: m.gamma_m for m in ladder.modes},
        delta_21=d21,
        fsr=dev.ladder.fsr,
        modulation_depth=depth,
        reference_pair=tuple(reference_pair),
    )


def resonance_solver(dev: DeviceParameters, point: Union[OperatingPoint, DriveConfiguration],
                     pair: Tuple[str, str], step: Optional[int] = None,
                     tolerance: float = DEFAULT_TOLERANCE, max_iter: int = 100,
                     n_max: Optional[int] = None) -> ResonanceSolution:
    """Self-consistent Delta_21 with step * Delta_21 = w_k - w_m + delta_k - delta_m.

    The modulation depth is held fixed while Delta_21 moves; the shifts are
    re-evaluated at every iterate.
    """
    op = _as_operating_point(dev, point)
    m, k = pair
    mode_m, mode_k = dev.ladder.mode(m), dev.ladder.mode(k)
    if step is None:
        step = dev.ladder.position(k) - dev.ladder.position(m)
    if step < 1:
        raise ValidationError("pair must be ordered upward in frequency", field="pair")
    if n_max is None:
        n_max = default_order_cutoff(op.modulation_depth)
    table = bessel_table(op.modulation_depth, n_max)
    qt = op.qubit_tilde(dev)
    dm, dk = mode_m.omega_m - qt, mode_k.omega_m - qt
    bare = mode_k.omega_m - mode_m.omega_m

    def update(d21):
        return (bare + phonon_shift(mode_k.g_m, dk, d21, table)
                - phonon_shift(mode_m.g_m, dm, d21, table)) / step

    d21 = bare / step
    for it in range(1, max_iter + 1):
        new = update(d21)
        change = abs(new - d21)
        d21 = new
        if change < tolerance:
            residual = update(d21) - d21
            return ResonanceSolution(delta_21_star=d21, residual=residual, iterations=it)
    raise NoConvergence(f"resonance iteration did not settle in {max_iter} steps")
