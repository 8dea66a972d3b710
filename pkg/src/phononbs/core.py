"""Shared domain types and unit conventions.

Internally every frequency is an angular frequency in rad/us and every time
is in us. Configuration files and CSV output use ordinary frequencies in MHz;
:func:`to_angular` and :func:`to_mhz` are the only conversion points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ValidationError, ZeroDetuning

TWO_PI = 2.0 * math.pi


def to_angular(frequency_mhz: float) -> float:
    """Convert a frequency in MHz (cycles/us) to rad/us."""
    if not math.isfinite(frequency_mhz):
        raise ValidationError("frequency must be finite", field="frequency_mhz")
    return TWO_PI * frequency_mhz


def to_mhz(omega: float) -> float:
    """Convert rad/us back to MHz."""
    return omega / TWO_PI


def _require(cond, message, field_name):
    if not cond:
        raise ValidationError(message, field=field_name)


@dataclass(frozen=True)
class QubitParams:
    """Transmon parameters.

    ``alpha`` is stored positive; the Kerr term enters the Hamiltonian as
    ``-alpha/2 q^dag^2 q^2``. ``t2_echo`` is carried for completeness and is
    not used by any model.
    """

    omega_q: float
    alpha: float
    t1: float
    t2_star: float
    t2_echo: Optional[float] = None

    def __post_init__(self):
        _require(self.omega_q > 0, "omega_q > 0", "qubit.omega_q")
        _require(self.alpha > 0, "alpha > 0", "qubit.alpha")
        _require(self.t1 > 0, "t1 > 0", "qubit.t1")
        _require(self.t2_star > 0, "t2_star > 0", "qubit.t2_star")
        _require(self.t2_star <= 2 * self.t1, "t2_star <= 2*t1", "qubit.t2_star")


@dataclass(frozen=True)
class ModeSpec:
    label: str
    omega_m: float
    g_m: float
    gamma_m: float = 0.0

    def __post_init__(self):
        _require(isinstance(self.g_m, (int, float)) and math.isfinite(self.g_m),
                 "g_m must be a finite real number", f"mode.{self.label}.g_m")
        _require(self.gamma_m >= 0, "gamma_m >= 0", f"mode.{self.label}.gamma_m")
        _require(self.omega_m > 0, "omega_m > 0", f"mode.{self.label}.omega_m")


@dataclass(frozen=True)
class ModeLadder:
    """Ordered set of HBAR modes with a nominal free spectral range."""

    modes: tuple
    fsr: float

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        _require(self.fsr > 0, "fsr > 0", "ladder.fsr")
        _require(len(self.modes) >= 1, "ladder needs at least one mode", "ladder.modes")
        labels = [m.label for m in self.modes]
        _require(len(set(labels)) == len(labels), "mode labels must be unique", "ladder.modes")
        for lo, hi in zip(self.modes, self.modes[1:]):
            _require(hi.omega_m > lo.omega_m, "mode frequencies must be strictly ascending",
                     "ladder.modes")
            if abs((hi.omega_m - lo.omega_m) - self.fsr) >= 0.05 * self.fsr:
                warnings.warn(
                    f"spacing {lo.label}->{hi.label} deviates from fsr by more than 5%",
                    stacklevel=3,
                )

    @property
    def labels(self):
        return tuple(m.label for m in self.modes)

    def mode(self, label: str) -> ModeSpec:
        for m in self.modes:
            if m.label == label:
                return m
        raise ValidationError(f"unknown mode {label!r}", field="mode")

    def position(self, label: str) -> int:
        """Ladder index of ``label`` counted in units of the FSR from the lowest mode."""
        m = self.mode(label)
        return int(round((m.omega_m - self.modes[0].omega_m) / self.fsr))

    def subset(self, labels: Sequence[str]) -> "ModeLadder":
        chosen = sorted((self.mode(lbl) for lbl in labels), key=lambda m: m.omega_m)
        return ModeLadder(tuple(chosen), self.fsr)


@dataclass(frozen=True)
class DeviceParameters:
    qubit: QubitParams
    ladder: ModeLadder


@dataclass(frozen=True)
class DriveConfiguration:
    """Two parametric tones on the qubit, amplitudes in rad/us."""

    omega_1: float
    omega_2: float
    Omega_1: float
    Omega_2: float
    phi: float = 0.0

    def __post_init__(self):
        _require(self.omega_2 > self.omega_1, "omega_2 > omega_1", "drive.omega_2")
        _require(self.Omega_1 >= 0, "Omega_1 >= 0", "drive.Omega_1")
        _require(self.Omega_2 >= 0, "Omega_2 >= 0", "drive.Omega_2")


@dataclass(frozen=True)
class DriveFrame:
    delta_1: float
    delta_2: float
    delta_21: float
    sigma_21: float
    xi_1: float
    xi_2: float
    delta_q_ss: float


def derive_frame(dev: DeviceParameters, drive: DriveConfiguration) -> DriveFrame:
    """Drive detunings, dimensionless strengths and the bare static Stark shift."""
    wq = dev.qubit.omega_q
    d1 = drive.omega_1 - wq
    d2 = drive.omega_2 - wq
    if d1 == 0 or d2 == 0:
        raise ZeroDetuning("drive resonant with the qubit", field="drive")
    xi1 = drive.Omega_1 / d1
    xi2 = drive.Omega_2 / d2
    return DriveFrame(
        delta_1=d1,
        delta_2=d2,
        delta_21=d2 - d1,
        sigma_21=d1 + d2,
        xi_1=xi1,
        xi_2=xi2,
        delta_q_ss=-2.0 * dev.qubit.alpha * (xi1 * xi1 + xi2 * xi2),
    )


@dataclass(frozen=True)
class OperatingPoint:
    """Experimentally set working point of the beam-splitter drive.

    The experiment compensates the static Stark shift with an extra tone so
    that the Stark-shifted qubit sits ``detuning_tilde`` below the
    ``reference_mode``. ``modulation_depth`` is the corrected Bessel argument.
    ``delta_21`` defaults to the ladder FSR.
    """

    modulation_depth: float
    reference_mode: str
    detuning_tilde: float
    delta_21: Optional[float] = None
    phi: float = 0.0

    def qubit_tilde(self, dev: DeviceParameters) -> float:
        """Stark-shifted qubit frequency implied by this working point."""
        return dev.ladder.mode(self.reference_mode).omega_m - self.detuning_tilde

    def drive_difference(self, dev: DeviceParameters) -> float:
        return dev.ladder.fsr if self.delta_21 is None else self.delta_21

    def with_delta_21(self, delta_21: float) -> "OperatingPoint":
        return OperatingPoint(self.modulation_depth, self.reference_mode,
                              self.detuning_tilde, delta_21, self.phi)


def ideal_ladder(labels: Sequence[str], anchor_label: str, anchor_omega: float, fsr: float,
                 g_m: float, gammas: Optional[dict] = None) -> ModeLadder:
    """Equally spaced ladder with ``anchor_label`` pinned at ``anchor_omega``."""
    gammas = gammas or {}
    k0 = list(labels).index(anchor_label)
    modes = tuple(
        ModeSpec(lbl, anchor_omega + (k - k0) * fsr, g_m, gammas.get(lbl, 0.0))
        for k, lbl in enumerate(labels)
    )
    return ModeLadder(modes, fsr)
