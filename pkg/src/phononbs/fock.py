"""Truncated Fock-space simulation of the qubit and a few phonon modes.

Serves two purposes: a brute-force check of the effective phonon model and
the multi-phonon Hong-Ou-Mandel experiment. Two frames are available. The
``displaced`` frame removes the drives in favour of a modulated qubit
frequency ``Lambda' cos(Delta_21 t + phi) q^dag q`` and is the default. The
``lab`` frame keeps the two drive tones explicitly, rotating every factor
at the bare qubit frequency, and is only practical for short times.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .core import DeviceParameters, DriveConfiguration, OperatingPoint
from .effective_coupling import (_as_operating_point, build_effective_model,
                                 resonance_solver)
from .errors import DimensionCap, InvalidRates, ValidationError

DEFAULT_CAP = 20000
DISPLACED = "displaced"
LAB = "lab"

# measured SWAP fidelities for the "table_s2" preparation option
SWAP_PREPARATION = {"b": 0.883, "c": 0.904}


def _lower(n):
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)


@dataclass(frozen=True)
class HilbertLayout:
    """Qubit factor first, then phonon modes in ascending frequency."""

    qubit_levels: int
    modes: Tuple[str, ...]
    cutoffs: Tuple[int, ...]
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "cutoffs", tuple(int(c) for c in self.cutoffs))
        if self.qubit_levels < 2:
            raise ValidationError("qubit_levels >= 2", field="layout.qubit_levels")
        if len(self.cutoffs) != len(self.modes):
            raise ValidationError("one cutoff per mode", field="layout.cutoffs")
        if any(c < 2 for c in self.cutoffs):
            raise ValidationError("phonon cutoffs >= 2", field="layout.cutoffs")
        if self.dim > self.cap:
            raise DimensionCap(f"dimension {self.dim} exceeds cap {self.cap}")

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.qubit_levels,) + self.cutoffs

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def _embed(self, op, slot):
        out = np.eye(1)
        for i, d in enumerate(self.dims):
            out = np.kron(out, op if i == slot else np.eye(d))
        return out

    def qubit(self) -> np.ndarray:
        return self._embed(_lower(self.qubit_levels), 0)

    def mode(self, label: str) -> np.ndarray:
        i = self.modes.index(label)
        return self._embed(_lower(self.cutoffs[i]), i + 1)

    def index(self, qubit_n: int, occupations: Dict[str, int]) -> int:
        digits = [qubit_n] + [occupations.get(m, 0) for m in self.modes]
        return int(np.ravel_multi_index(digits, self.dims))

    def basis_state(self, qubit_n: int = 0, **occupations) -> "QuantumState":
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(qubit_n, occupations)] = 1.0
        return QuantumState(self, psi)


@dataclass(frozen=True)
class QuantumState:
    """Pure vector or density matrix over a layout."""

    layout: HilbertLayout
    data: np.ndarray

    def __post_init__(self):
        d = self.layout.dim
        arr = np.asarray(self.data, dtype=complex)
        if arr.shape not in ((d,), (d, d)):
            raise ValidationError(f"state shape {arr.shape} does not match dimension {d}",
                                  field="state")
        object.__setattr__(self, "data", arr)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        return np.outer(self.data, self.data.conj()) if self.is_pure else self.data

    def check(self, tol: float = 1e-9):
        if self.is_pure:
            n = np.linalg.norm(self.data)
            if abs(n - 1) > tol:
                raise ValidationError(f"state norm {n} != 1", field="state")
            return
        rho = self.data
        if np.max(np.abs(rho - rho.conj().T)) > 10 * tol:
            raise ValidationError("density matrix not Hermitian", field="state")
        if abs(np.trace(rho).real - 1) > tol:
            raise ValidationError("density matrix trace != 1", field="state")
        if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -tol:
            raise ValidationError("density matrix not positive", field="state")


@dataclass(frozen=True)
class HamiltonianSchedule:
    """``H(t) = static + sum_k f_k(t) H_k`` with Hermitian ``H_k``."""

    frame: str
    static: np.ndarray
    terms: Tuple[Tuple[np.ndarray, Callable[[float], float]], ...]
    layout: HilbertLayout

    def __call__(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for mat, f in self.terms:
            h = h + f(t) * mat
        return h


def _herm(m):
    return 0.5 * (m + m.conj().T)


def build_hamiltonian(dev: DeviceParameters, point: Union[OperatingPoint, DriveConfiguration],
                      layout: HilbertLayout, frame: str = DISPLACED,
                      g_scale: float = 1.0) -> HamiltonianSchedule:
    """Time-dependent Hamiltonian of the qubit and the layout's phonon modes (rad/us).

    Displaced frame: qubit at its Stark-shifted frequency, phonons at their
    own, so mode m couples with phase ``exp(i D_m t)``. ``point`` may be an
    OperatingPoint or a DriveConfiguration; the lab frame requires the latter.
    """
    q = layout.qubit()
    qd = q.conj().T
    nq = qd @ q
    kerr = -0.5 * dev.qubit.alpha * (qd @ qd @ q @ q)
    terms = []
    if frame == DISPLACED:
        op = _as_operating_point(dev, point)
        d21 = op.drive_difference(dev)
        lam = op.modulation_depth * d21
        qt = op.qubit_tilde(dev)
        static = kerr.astype(complex)
        phi = op.phi
        terms.append((nq.astype(complex), lambda t, a=lam, w=d21, p=phi: a * math.cos(w * t + p)))
        for label in layout.modes:
            mode_spec = dev.ladder.mode(label)
            m = layout.mode(label)
            g = g_scale * mode_spec.g_m
            hop = m.conj().T @ q
            det = mode_spec.omega_m - qt
            terms.append((_herm(g * (hop + hop.conj().T)).astype(complex),
                          lambda t, w=det: math.cos(w * t)))
            terms.append((_herm(1j * g * (hop - hop.conj().T)),
                          lambda t, w=det: math.sin(w * t)))
    elif frame == LAB:
        if not isinstance(point, DriveConfiguration):
            raise ValidationError("lab frame needs explicit drive tones", field="drive")
        wq = dev.qubit.omega_q
        static = kerr.astype(complex)
        for label in layout.modes:
            mode_spec = dev.ladder.mode(label)
            m = layout.mode(label)
            static = static + (mode_spec.omega_m - wq) * (m.conj().T @ m)
            static = static + g_scale * mode_spec.g_m * (m.conj().T @ q + qd @ m)
        x_op = (q + qd).astype(complex)
        y_op = _herm(1j * (q - qd))
        for amp, w, p in ((point.Omega_1, point.omega_1 - wq, 0.0),
                          (point.Omega_2, point.omega_2 - wq, point.phi)):
            # amp (e^{-i(w t + p)} q^dag + h.c.)
            terms.append((amp * x_op, lambda t, w=w, p=p: math.cos(w * t + p)))
            terms.append((amp * y_op, lambda t, w=w, p=p: math.sin(w * t + p)))
    else:
        raise ValidationError("frame must be 'displaced' or 'lab'", field="frame")
    return HamiltonianSchedule(frame, _herm(static), tuple(terms), layout)


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValidationError("times must be ascending and non-negative", field="times")
    return times


def _solve(rhs, y0, times, rtol, atol):
    if times[-1] == 0:
        return np.tile(y0, (times.size, 1))
    sol = solve_ivp(rhs, (0.0, float(times[-1])), y0, method="DOP853", t_eval=times,
                    rtol=rtol, atol=atol)
    if not sol.success:
        from .errors import ConvergenceError
        raise ConvergenceError(sol.message)
    return sol.y.T


def evolve_schrodinger(H: HamiltonianSchedule, psi0: QuantumState, times: Sequence[float],
                       rtol: float = 1e-10, atol: float = 1e-12) -> List[QuantumState]:
    """Pure-state evolution from t = 0, sampled at ``times``."""
    if not psi0.is_pure:
        raise ValidationError("evolve_schrodinger needs a pure state", field="psi0")
    psi0.check()
    times = _check_times(times)
    static = H.static
    mats = [m for m, _ in H.terms]
    funcs = [f for _, f in H.terms]

    def rhs(t, y):
        out = static @ y
        for m, f in zip(mats, funcs):
            out = out + f(t) * (m @ y)
        return -1j * out

    ys = _solve(rhs, psi0.data, times, rtol, atol)
    return [QuantumState(H.layout, y) for y in ys]


def collapse_operators(dev: DeviceParameters, layout: HilbertLayout, qubit: bool = True,
                       phonons: bool = True) -> List[Tuple[str, float]]:
    """Standard channels: qubit decay 1/T1, pure dephasing, phonon decay Gamma_m."""
    out = []
    if qubit:
        gphi = 1.0 / dev.qubit.t2_star - 0.5 / dev.qubit.t1
        if gphi < 0:
            raise InvalidRates(f"pure dephasing rate {gphi} < 0", field="qubit.t2_star")
        out.append(("qubit", 1.0 / dev.qubit.t1))
        out.append(("qubit_dephasing", gphi))
    if phonons:
        for label in layout.modes:
            out.append((label, dev.ladder.mode(label).gamma_m))
    return out


def _collapse_matrix(layout, role, rate):
    if rate < 0:
        raise InvalidRates(f"rate for {role} is negative", field=role)
    if role == "qubit":
        return math.sqrt(rate) * layout.qubit()
    if role == "qubit_dephasing":
        q = layout.qubit()
        # sqrt(2 gamma_phi) n_q damps g-e coherence at gamma_phi
        return math.sqrt(2.0 * rate) * (q.conj().T @ q)
    if role in layout.modes:
        return math.sqrt(rate) * layout.mode(role)
    raise ValidationError(f"unknown collapse role {role!r}", field="collapse")


def evolve_lindblad(H: HamiltonianSchedule, rho0: QuantumState,
                    collapse: Sequence[Tuple[str, float]], times: Sequence[float],
                    rtol: float = 1e-9, atol: float = 1e-11) -> List[QuantumState]:
    """Master-equation evolution from t = 0, sampled at ``times``."""
    layout = H.layout
    rho = rho0.density()
    QuantumState(layout, rho).check(1e-8)
    times = _check_times(times)
    Ls = [_collapse_matrix(layout, role, rate) for role, rate in collapse]
    Ls = [L for L in Ls if np.any(L)]
    LdL = sum((L.conj().T @ L for L in Ls), np.zeros((layout.dim, layout.dim)))
    static = H.static - 0.5j * LdL
    mats = [m for m, _ in H.terms]
    funcs = [f for _, f in H.terms]
    d = layout.dim

    def rhs(t, y):
        r = y.reshape(d, d)
        h = static
        for m, f in zip(mats, funcs):
            h = h + f(t) * m
        out = -1j * (h @ r - r @ h.conj().T)
        for L in Ls:
            out = out + L @ r @ L.conj().T
        return out.ravel()

    ys = _solve(rhs, rho.ravel(), times, rtol, atol)
    out = []
    for y in ys:
        r = y.reshape(d, d)
        out.append(QuantumState(layout, 0.5 * (r + r.conj().T)))
    return out


def fock_populations(state: QuantumState, mode: str) -> np.ndarray:
    """Marginal occupation distribution of ``mode`` (or ``'qubit'``)."""
    layout = state.layout
    slot = 0 if mode == "qubit" else layout.modes.index(mode) + 1
    if state.is_pure:
        p = np.abs(state.data) ** 2
    else:
        p = np.real(np.diag(state.data))
    p = p.reshape(layout.dims)
    axes = tuple(i for i in range(len(layout.dims)) if i != slot)
    return np.clip(p.sum(axis=axes), 0.0, None)


def joint_populations(state: QuantumState, modes: Sequence[str]) -> np.ndarray:
    """Joint occupation distribution of the listed modes, qubit traced out."""
    layout = state.layout
    p = np.abs(state.data) ** 2 if state.is_pure else np.real(np.diag(state.data))
    p = p.reshape(layout.dims)
    slots = [layout.modes.index(m) + 1 for m in modes]
    axes = tuple(i for i in range(len(layout.dims)) if i not in slots)
    return np.clip(p.sum(axis=axes), 0.0, None)


@dataclass(frozen=True)
class HomResult:
    tau_us: float
    p20: float
    p02: float
    p11_bar: float

    @property
    def p_sigma(self) -> float:
        return self.p20 + self.p02 + self.p11_bar

    @property
    def ratio_bunched(self) -> float:
        s = self.p_sigma
        return (self.p20 + self.p02) / s if s > 0 else float("nan")


def hom_results_csv(results: Sequence[HomResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau_us", "p20", "p02", "p11_bar", "ratio_bunched"])
    for r in results:
        w.writerow([repr(r.tau_us), repr(r.p20), repr(r.p02), repr(r.p11_bar),
                    repr(r.ratio_bunched)])
    return buf.getvalue()


def _prepared_state(layout, modes, preparation):
    """|1,1> in the two modes, optionally degraded per mode by a SWAP fidelity."""
    if preparation == "ideal":
        fid = {m: 1.0 for m in modes}
    elif preparation == "table_s2":
        fid = {m: SWAP_PREPARATION.get(m, 1.0) for m in modes}
    elif isinstance(preparation, dict):
        fid = {m: float(preparation.get(m, 1.0)) for m in modes}
    else:
        raise ValidationError("preparation must be 'ideal', 'table_s2' or a dict",
                              field="preparation")
    if fid[modes[0]] == 1.0 and fid[modes[1]] == 1.0:
        return layout.basis_state(0, **{modes[0]: 1, modes[1]: 1})
    rho = np.zeros((layout.dim, layout.dim), dtype=complex)
    for n0, p0 in ((1, fid[modes[0]]), (0, 1 - fid[modes[0]])):
        for n1, p1 in ((1, fid[modes[1]]), (0, 1 - fid[modes[1]])):
            i = layout.index(0, {modes[0]: n0, modes[1]: n1})
            rho[i, i] += p0 * p1
    return QuantumState(layout, rho)


def _hom_result(state, modes, tau):
    joint = joint_populations(state, modes)
    p_b = fock_populations(state, modes[0])
    p_c = fock_populations(state, modes[1])
    return HomResult(tau_us=float(tau), p20=float(joint[2, 0]), p02=float(joint[0, 2]),
                     p11_bar=float(min(p_b[1], p_c[1])))


def hom_experiment(dev: DeviceParameters, point: Union[OperatingPoint, DriveConfiguration],
                   gate_times: Sequence[float], decoherence: bool = True,
                   residual_jc: bool = True, modes: Tuple[str, str] = ("b", "c"),
                   preparation="ideal", qubit_levels: int = 3, cutoff: int = 4,
                   g_scale: float = 1.0) -> List[HomResult]:
    """Two phonons, one per mode, sent through the beam splitter.

    With ``residual_jc`` the full displaced-frame Hamiltonian is used with
    Delta_21 placed on the self-consistent resonance of the pair (unless the
    operating point fixes it). Otherwise the pair evolves under the bare
    beam-splitter rate from the effective model.
    """
    if cutoff < 3:
        raise ValidationError("HOM needs Fock cutoff >= 3", field="cutoff")
    modes = tuple(sorted(modes, key=lambda m: dev.ladder.mode(m).omega_m))
    op = _as_operating_point(dev, point, modes[0])
    if op.delta_21 is None:
        sol = resonance_solver(dev, op, modes)
        op = op.with_delta_21(sol.delta_21_star)
    times = _check_times(gate_times)
    layout = HilbertLayout(qubit_levels, modes, (cutoff, cutoff))
    rho0 = _prepared_state(layout, modes, preparation)
    if residual_jc:
        H = build_hamiltonian(dev, op, layout, DISPLACED, g_scale=g_scale)
        collapse = collapse_operators(dev, layout) if decoherence else []
    else:
        model = build_effective_model(dev, op, modes)
        g = model.g(*modes) * g_scale * g_scale
        b, c = layout.mode(modes[0]), layout.mode(modes[1])
        H = HamiltonianSchedule("effective", g * (b.conj().T @ c + c.conj().T @ b), (), layout)
        collapse = collapse_operators(dev, layout, qubit=False) if decoherence else []
    if not collapse and rho0.is_pure:
        states = evolve_schrodinger(H, rho0, times)
    else:
        states = evolve_lindblad(H, rho0, collapse, times)
    return [_hom_result(s, modes, t) for s, t in zip(states, times)]
