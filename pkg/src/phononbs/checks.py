"""Invariant suite behind the ``oracle-check`` command.

Each check returns a measured value, the tolerance it is held to and a
pass flag. The suite is cheap (seconds) and deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List

import numpy as np

from .core import TWO_PI, DeviceParameters, DriveConfiguration, OperatingPoint, to_angular
from .driven_qubit import modulation_depth, perturbation_oracle
from .effective_coupling import build_effective_model
from .fock import HilbertLayout, build_hamiltonian
from .modeswap import chevron_scan, integrate_eom
from .specfun import bessel_table, default_order_cutoff
from .tomography import MEASURED, FidelityModel, MeasurementRecord, mle_reconstruct

KHZ = TWO_PI * 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def random_drive(qubit, rng, xi_max: float = 0.3) -> DriveConfiguration:
    """Two tones above the qubit with xi_j drawn up to ``xi_max``."""
    d1 = to_angular(rng.uniform(400.0, 1500.0))
    d2 = d1 + to_angular(rng.uniform(5.0, 40.0))
    xi1, xi2 = rng.uniform(0.02, xi_max, 2)
    return DriveConfiguration(qubit.omega_q + d1, qubit.omega_q + d2, xi1 * d1, xi2 * d2, 0.0)


def _bessel_checks(rng) -> List[CheckResult]:
    xs = rng.uniform(-20.0, 20.0, 8)
    comp, rec, sym = 0.0, 0.0, 0.0
    for x in xs:
        t = bessel_table(float(x), default_order_cutoff(x) + 10)
        n = np.asarray(t.orders)
        v = np.asarray(t.values)
        comp = max(comp, abs(t.completeness() - 1.0))
        inner = slice(1, -1)
        lhs = v[:-2] + v[2:]
        rhs = 2.0 * n[inner] / x * v[inner] if x != 0 else lhs
        rec = max(rec, float(np.max(np.abs(lhs - rhs))))
        # J_n(-x) = (-1)^n J_n(x)
        mirrored = np.asarray(bessel_table(-float(x), t.n_max).values)
        sym = max(sym, float(np.max(np.abs(mirrored - v * (-1.0) ** n))))
    return [CheckResult("bessel_completeness", comp, 1e-12),
            CheckResult("bessel_recurrence", rec, 1e-12),
            CheckResult("bessel_symmetry", sym, 1e-14)]


def _dynamics_checks(dev: DeviceParameters) -> List[CheckResult]:
    point = OperatingPoint(0.61, "b", to_angular(1.0), None)
    model = build_effective_model(dev, point, ["b", "c"])
    times = np.linspace(0.0, 50.0, 101)
    lossless = build_effective_model(dev, point, ["a", "b", "c"])
    lossless = replace(lossless, decay={m: 0.0 for m in lossless.modes})
    traj = integrate_eom(lossless, {"b": 1.0}, 5 * KHZ, times)
    norm_err = float(np.max(np.abs(traj.populations.sum(axis=1) - 1.0)))
    lossy = integrate_eom(build_effective_model(dev, point, ["a", "b", "c"]), {"b": 1.0}, 0.0, times)
    norm = lossy.populations.sum(axis=1)
    rise = float(max(np.max(np.diff(norm)), 0.0))
    deltas = np.linspace(-100.0, 100.0, 21) * KHZ
    cmap = chevron_scan(model, deltas, times, "b")
    mirror = float(np.max(np.abs(cmap.population["c"] - cmap.population["c"][::-1])))
    return [CheckResult("norm_conservation", norm_err, 1e-9),
            CheckResult("norm_monotone_with_decay", rise, 1e-12),
            CheckResult("two_mode_mirror", mirror, 1e-9)]


def _number_check(dev: DeviceParameters) -> CheckResult:
    layout = HilbertLayout(3, ("b", "c"), (3, 3))
    op = OperatingPoint(0.61, "b", to_angular(1.0), dev.ladder.fsr)
    H = build_hamiltonian(dev, op, layout)
    q = layout.qubit()
    N = q.conj().T @ q
    for m in layout.modes:
        a = layout.mode(m)
        N = N + a.conj().T @ a
    worst = 0.0
    for t in np.linspace(0.0, 3.0, 7):
        h = H(t)
        worst = max(worst, float(np.max(np.abs(h @ N - N @ h))))
    return CheckResult("excitation_number", worst, 1e-9)


def _oracle_check(dev: DeviceParameters, rng, n: int = 5) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        drive = random_drive(dev.qubit, rng)
        closed = modulation_depth(drive, dev.qubit).lambda_corrected
        _, lam = perturbation_oracle(dev.qubit, drive)
        worst = max(worst, abs(lam / closed - 1.0))
    return CheckResult("lambda_oracle", worst, 0.01)


def _mle_check(rng, n: int = 20) -> CheckResult:
    worst = 0.0
    model = FidelityModel()
    for _ in range(n):
        recs = [MeasurementRecord(a, b, rng.dirichlet(np.ones(4)), 100)
                for a in MEASURED for b in MEASURED]
        rho = mle_reconstruct(recs, model, n_starts=1, seed=int(rng.integers(1 << 31))).rho
        worst = max(worst, -float(np.linalg.eigvalsh(rho).min()), abs(np.trace(rho).real - 1.0))
    return CheckResult("mle_physical", worst, 1e-10)


def run_checks(dev: DeviceParameters, seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = _bessel_checks(rng)
    out += _dynamics_checks(dev)
    out.append(_number_check(dev))
    out.append(_oracle_check(dev, rng))
    out.append(_mle_check(rng))
    return out
