"""The bichromatically driven transmon on its own.

Stark shifts, the corrected modulation depth and its perturbative check,
steady-state probe spectroscopy and the DAC-to-amplitude calibration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .core import DeviceParameters, DriveConfiguration, QubitParams, derive_frame
from .errors import ConvergenceError, FitError, SingularDetuning, ValidationError
from .specfun import BesselTable, bessel_table, default_order_cutoff


@dataclass(frozen=True)
class SidebandSpectrum:
    lambda_raw: float
    lambda_corrected: float
    modulation_depth: float
    amplitudes: BesselTable
    delta_q_ss: float


@dataclass(frozen=True)
class ProbeConfig:
    omega_p_list: np.ndarray
    Omega_p: float

    def __post_init__(self):
        if self.Omega_p < 0:
            raise ValidationError("Omega_p >= 0", field="probe.Omega_p")


@dataclass(frozen=True)
class SpectroscopyCurve:
    frequencies: np.ndarray
    p_e: np.ndarray


@dataclass(frozen=True)
class CalibrationResult:
    eta: float
    fit_residual: float


def _pole_guard(delta, alpha):
    if delta == 0 or delta + alpha == 0:
        raise SingularDetuning(f"detuning {delta} hits a pole (0 or -alpha)")


def stark_shift_single_drive(Omega: float, Delta: float, alpha: float) -> float:
    """Static qubit shift from one off-resonant drive including the second level.

    Returns ``-2 Omega^2 alpha / (Delta (alpha + Delta))``; for ``alpha << Delta``
    this reduces to ``-2 alpha xi^2``.
    """
    _pole_guard(Delta, alpha)
    return -2.0 * Omega * Omega * alpha / (Delta * (alpha + Delta))


def corrected_stark_shift(qubit: QubitParams, drive: DriveConfiguration) -> float:
    """Sum of the single-drive shifts over both tones."""
    wq = qubit.omega_q
    return (stark_shift_single_drive(drive.Omega_1, drive.omega_1 - wq, qubit.alpha)
            + stark_shift_single_drive(drive.Omega_2, drive.omega_2 - wq, qubit.alpha))


def corrected_lambda(Omega_1, Omega_2, delta_1, delta_2, alpha):
    """Modulation amplitude of the g-e transition with the third-level correction."""
    _pole_guard(delta_1, alpha)
    _pole_guard(delta_2, alpha)
    return -2.0 * alpha * Omega_1 * Omega_2 * (
        1.0 / (delta_1 * (delta_1 + alpha)) + 1.0 / (delta_2 * (delta_2 + alpha)))


def modulation_depth(drive: DriveConfiguration, qubit: QubitParams,
                     n_max: Optional[int] = None) -> SidebandSpectrum:
    """Raw and corrected modulation amplitudes and the sideband amplitude table."""
    wq = qubit.omega_q
    d1 = drive.omega_1 - wq
    d2 = drive.omega_2 - wq
    if d1 == 0 or d2 == 0:
        raise SingularDetuning("drive resonant with the qubit")
    xi1, xi2 = drive.Omega_1 / d1, drive.Omega_2 / d2
    lam = -4.0 * qubit.alpha * xi1 * xi2
    lam_c = corrected_lambda(drive.Omega_1, drive.Omega_2, d1, d2, qubit.alpha)
    depth = lam_c / (d2 - d1)
    if n_max is None:
        n_max = default_order_cutoff(depth)
    return SidebandSpectrum(
        lambda_raw=lam,
        lambda_corrected=lam_c,
        modulation_depth=depth,
        amplitudes=bessel_table(depth, n_max),
        delta_q_ss=corrected_stark_shift(qubit, drive),
    )


def equal_amplitudes_for_depth(depth: float, qubit: QubitParams, omega_1: float,
                               omega_2: float, phi: float = 0.0) -> DriveConfiguration:
    """Drive with Omega_1 = Omega_2 whose corrected modulation depth has magnitude ``depth``."""
    d1, d2 = omega_1 - qubit.omega_q, omega_2 - qubit.omega_q
    per_unit = corrected_lambda(1.0, 1.0, d1, d2, qubit.alpha) / (d2 - d1)
    if per_unit == 0:
        raise SingularDetuning("modulation depth independent of drive amplitude")
    amp = math.sqrt(abs(depth / per_unit))
    return DriveConfiguration(omega_1, omega_2, amp, amp, phi)


# -- perturbation-theory check of the corrected modulation depth ----------

def _drive_ladder_terms(qubit: QubitParams, drive: DriveConfiguration, qubit_levels: int,
                        photons: int, window: int):
    """Second-order effective couplings for a qubit plus two quantised drive modes.

    Each drive is a harmonic mode holding about ``photons`` quanta, coupled to
    the qubit with ``g_j = Omega_j / sqrt(photons)``. States inside the
    near-degenerate manifold |n, l0 - p, m0 + p> are the model space; all
    others are summed over as intermediate states.

    Returns (stark_by_level, modulation_by_level): diagonal and off-diagonal
    (p -> p + 1) second-order elements for each qubit level n.
    """
    wq, alpha = qubit.omega_q, qubit.alpha
    w1, w2 = drive.omega_1, drive.omega_2
    l0 = m0 = photons
    g1 = drive.Omega_1 / math.sqrt(photons)
    g2 = drive.Omega_2 / math.sqrt(photons)

    levels = range(qubit_levels)
    ls = range(l0 - window, l0 + window + 1)
    ms = range(m0 - window, m0 + window + 1)
    basis = list(itertools.product(levels, ls, ms))
    index = {s: i for i, s in enumerate(basis)}
    dim = len(basis)

    # energies relative to |0, l0, m0> to keep the subtraction exact
    def energy(n, l, m):
        return wq * n - 0.5 * alpha * n * (n - 1) + w1 * (l - l0) + w2 * (m - m0)

    E = np.array([energy(*s) for s in basis])
    V = np.zeros((dim, dim))
    for (n, l, m), i in index.items():
        if n + 1 < qubit_levels:
            amp_q = math.sqrt(n + 1)
            # q^dag d_1 and q^dag d_2
            j = index.get((n + 1, l - 1, m))
            if j is not None:
                V[j, i] += g1 * amp_q * math.sqrt(l)
            j = index.get((n + 1, l, m - 1))
            if j is not None:
                V[j, i] += g2 * amp_q * math.sqrt(m)
    V = V + V.T

    def in_model(s):
        n, l, m = s
        return (l - l0) + (m - m0) == 0

    model = np.array([in_model(s) for s in basis])
    outside = ~model

    def element(i, j):
        vi = V[outside, i]
        vj = V[outside, j]
        Ek = E[outside]
        return 0.5 * float(np.sum(vi * vj * (1.0 / (E[i] - Ek) + 1.0 / (E[j] - Ek))))

    stark, modulation = [], []
    for n in levels:
        i = index[(n, l0, m0)]
        j = index[(n, l0 - 1, m0 + 1)]
        stark.append(element(i, i))
        modulation.append(element(i, j))
    return np.array(stark), np.array(modulation)


def perturbation_oracle(qubit: QubitParams, drive: DriveConfiguration, photon_basis_size: int = 3,
                        photons: int = 10**6, samples: Sequence[float] = (0.5, 1.0, 1.5)):
    """Numerical second-order perturbation theory for the driven qubit.

    The drives are replaced by quantised modes and the second-order energy
    corrections are summed numerically on a truncated ladder. Terms
    proportional to Omega_1 Omega_2 (modulation) and to Omega_j^2 (Stark) are
    separated by refitting over rescaled drive amplitudes.

    Returns ``(delta_q_ss_corrected, lambda_corrected)`` for the g-e transition.
    """
    if photon_basis_size < 3:
        raise ValidationError("need at least 3 qubit levels", field="photon_basis_size")
    if drive.Omega_1 == 0 and drive.Omega_2 == 0:
        return 0.0, 0.0

    def evaluate(levels):
        rows, stark_y, mod_y = [], [], []
        for s1 in samples:
            for s2 in samples:
                d = DriveConfiguration(drive.omega_1, drive.omega_2,
                                       drive.Omega_1 * s1, drive.Omega_2 * s2, drive.phi)
                st, mo = _drive_ladder_terms(qubit, d, levels, photons, window=2)
                rows.append((d.Omega_1 ** 2, d.Omega_2 ** 2, d.Omega_1 * d.Omega_2))
                stark_y.append(st[1] - st[0])
                # the modulation cos term carries Lambda/2 on each off-diagonal
                mod_y.append(2.0 * (mo[1] - mo[0]))
        A = np.array(rows)
        cs, *_ = np.linalg.lstsq(A, np.array(stark_y), rcond=None)
        cm, *_ = np.linalg.lstsq(A, np.array(mod_y), rcond=None)
        stark = cs[0] * drive.Omega_1 ** 2 + cs[1] * drive.Omega_2 ** 2
        lam = cm[2] * drive.Omega_1 * drive.Omega_2
        return stark, lam

    stark, lam = evaluate(photon_basis_size)
    stark2, lam2 = evaluate(photon_basis_size + 1)
    for a, b in ((stark, stark2), (lam, lam2)):
        if abs(b - a) > 1e-3 * max(abs(a), abs(b), 1e-300):
            raise ConvergenceError("qubit ladder too small: result moved by > 0.1%")
    return float(stark), float(lam)


# -- spectroscopy -------------------------------------------------------------

def spectroscopy_response(dev: DeviceParameters, drive: DriveConfiguration, probe: ProbeConfig,
                          n_max: Optional[int] = None) -> SpectroscopyCurve:
    """Steady-state excited population under a weak probe, summed over sidebands."""
    q = dev.qubit
    spectrum = modulation_depth(drive, q, n_max)
    n_max = spectrum.amplitudes.n_max
    w_center = q.omega_q + spectrum.delta_q_ss
    d21 = drive.omega_2 - drive.omega_1
    w = np.asarray(probe.omega_p_list, dtype=float)
    t1, t2 = q.t1, q.t2_star
    p = np.zeros_like(w)
    for n in range(-n_max, n_max + 1):
        om2 = (spectrum.amplitudes[n] * probe.Omega_p) ** 2
        if om2 == 0.0:
            continue
        det = w - w_center - n * d21
        p += om2 * t1 * t2 / (1.0 + (t2 * det) ** 2 + om2 * t1 * t2)
    return SpectroscopyCurve(frequencies=w, p_e=0.5 * p)


# -- drive calibration --------------------------------------------------------

def calibrate_eta(dataset, Delta: float, alpha: float,
                  omega_q: Optional[float] = None) -> CalibrationResult:
    """Fit the DAC-to-amplitude conversion factor from single-drive Stark shifts.

    ``dataset`` holds ``(dac_amplitude, measured_qubit_freq)`` pairs in rad/us.
    Without ``omega_q`` the second column is read as the shift from the
    undriven qubit. Only ``eta`` is free.
    """
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2 or data.shape[0] < 3:
        raise FitError("need at least 3 calibration points")
    dac, shift = data[:, 0], data[:, 1]
    if omega_q is not None:
        shift = shift - omega_q
    if len(np.unique(dac)) != len(dac):
        raise FitError("dac amplitudes must be distinct")
    _pole_guard(Delta, alpha)
    k = -2.0 * alpha / (Delta * (alpha + Delta))
    x = k * dac ** 2
    if not np.any(x != 0):
        raise FitError("degenerate calibration data (all amplitudes zero)")
    # shift = k (eta dac)^2 is linear in eta^2; the scalar search runs over eta
    eta2_ls = float(np.dot(x, shift) / np.dot(x, x))
    if eta2_ls <= 0:
        raise FitError("measured shifts have the wrong sign for this detuning")
    eta0 = math.sqrt(eta2_ls)

    def resid(eta):
        return float(np.sum((k * (eta * dac) ** 2 - shift) ** 2))

    res = minimize_scalar(resid, bracket=(0.5 * eta0, eta0, 2.0 * eta0),
                          method="brent", options={"xtol": 1e-12})
    if not res.success or not np.isfinite(res.x) or res.x <= 0:
        raise FitError("eta minimisation did not converge")
    return CalibrationResult(eta=float(res.x), fit_residual=float(res.fun))
