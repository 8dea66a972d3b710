"""Two-mode state tomography in the single-phonon subspace.

Each phonon mode is treated as a two-level system. A record holds the four
joint outcome probabilities for one pair of measured Pauli operators. The
readout is imperfect: outcome ``0`` (ground) is reported correctly with
probability ``F_g`` and outcome ``1`` with ``F_e``. Both reconstructions
undo that assignment model, either by linear inversion or by fitting a
Cholesky-parameterized density matrix.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import MissingOperator, OptimizationFailure, SingularBeta, ValidationError

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
MEASURED = ("X", "Y", "Z")
_HADAMARD2 = np.kron([[1, 1], [1, -1]], [[1, 1], [1, -1]]).astype(float)

# per-step (g, e) fidelities; the first mode also idles during the wait
TABLE_S2_STEPS = {
    "a": [(1.0, 0.904), (1.0, 0.921), (0.934, 0.788)],
    "b": [(1.0, 0.883), (0.934, 0.788)],
}


@dataclass(frozen=True)
class MeasurementRecord:
    """Joint outcome probabilities (P00, P01, P10, P11) for operators ``a`` x ``b``."""

    a: str
    b: str
    probabilities: Tuple[float, float, float, float]
    shots: Optional[int] = None

    def __post_init__(self):
        if self.a not in MEASURED or self.b not in MEASURED:
            raise ValidationError("operators must be X, Y or Z", field="record.operator")
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (4,) or abs(p.sum() - 1) > 1e-9:
            raise ValidationError("probabilities must be 4 values summing to 1",
                                  field="record.probabilities")
        if self.shots is not None and self.shots <= 0:
            raise ValidationError("shots > 0", field="record.shots")
        object.__setattr__(self, "probabilities", tuple(float(x) for x in p))


@dataclass(frozen=True)
class FidelityModel:
    """Readout (g, e) fidelities of the first and second mode."""

    first: Tuple[float, float] = (1.0, 1.0)
    second: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        for f in self.first + self.second:
            if not 0 < f <= 1:
                raise ValidationError("fidelities must lie in (0, 1]", field="fidelity")

    @staticmethod
    def _beta(fg, fe):
        return np.array([[fg, 1 - fe], [1 - fg, fe]])

    def beta(self) -> np.ndarray:
        """4x4 map from true to reported outcome probabilities."""
        return np.kron(self._beta(*self.first), self._beta(*self.second))


def compose_fidelities(steps: Dict[str, Sequence[Tuple[float, float]]],
                       order: Sequence[str] = ("a", "b")) -> FidelityModel:
    """Per-mode readout fidelities as products of the per-step (g, e) fidelities."""
    out = []
    for mode in order:
        fg, fe = 1.0, 1.0
        for g, e in steps.get(mode, []):
            if not (0 < g <= 1 and 0 < e <= 1):
                raise ValidationError("step fidelities must lie in (0, 1]", field=f"steps.{mode}")
            fg *= g
            fe *= e
        out.append((fg, fe))
    return FidelityModel(out[0], out[1])


def invert_beta(record: MeasurementRecord, model: FidelityModel) -> np.ndarray:
    """Corrected (<II>, <IB>, <AI>, <AB>) from one record's probabilities."""
    beta = model.beta()
    if np.linalg.cond(beta) > 1e12:
        raise SingularBeta("fidelity matrix is not invertible")
    return _HADAMARD2 @ np.linalg.solve(beta, np.asarray(record.probabilities))


def forward_probabilities(expectations: np.ndarray, model: FidelityModel) -> np.ndarray:
    """Reported probabilities for given (<II>, <IB>, <AI>, <AB>)."""
    return model.beta() @ (_HADAMARD2 @ np.asarray(expectations) / 4.0)


def _collect_expectations(records, model):
    sums: Dict[Tuple[str, str], List[float]] = {}
    for rec in records:
        ii, ib, ai, ab = invert_beta(rec, model)
        sums.setdefault(("I", rec.b), []).append(ib)
        sums.setdefault((rec.a, "I"), []).append(ai)
        sums.setdefault((rec.a, rec.b), []).append(ab)
    exp = {("I", "I"): 1.0}
    for key, vals in sums.items():
        exp[key] = float(np.mean(vals))
    return exp


def linear_inversion(records: Sequence[MeasurementRecord],
                     model: FidelityModel = FidelityModel()) -> np.ndarray:
    """rho = 1/4 sum <AB> A x B; Hermitian with unit trace, not necessarily positive."""
    exp = _collect_expectations(records, model)
    missing = [a + b for a, b in itertools.product("IXYZ", repeat=2) if (a, b) not in exp]
    if missing:
        raise MissingOperator(f"missing expectations for {', '.join(missing)}", field="records")
    rho = sum(exp[(a, b)] * np.kron(PAULI[a], PAULI[b])
              for a, b in itertools.product("IXYZ", repeat=2)) / 4.0
    return 0.5 * (rho + rho.conj().T)


def _povm(records, model):
    """Effective measurement operators, one per reported outcome of each record."""
    beta = model.beta()
    ops, data = [], []
    for rec in records:
        A, B = PAULI[rec.a], PAULI[rec.b]
        proj = []
        for i, j in itertools.product((0, 1), repeat=2):
            pa = 0.5 * (np.eye(2) + (1 - 2 * i) * A)
            pb = 0.5 * (np.eye(2) + (1 - 2 * j) * B)
            proj.append(np.kron(pa, pb))
        proj = np.array(proj)
        ops.extend(np.einsum("kl,lij->kij", beta, proj))
        data.extend(rec.probabilities)
    return np.array(ops), np.array(data)


def predicted_probabilities(rho: np.ndarray, records: Sequence[MeasurementRecord],
                            model: FidelityModel) -> np.ndarray:
    ops, _ = _povm(records, model)
    return np.einsum("kij,ji->k", ops, rho).real


_OFF = np.tril_indices(4, -1)


def _unpack(theta):
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = theta[:4]
    T[_OFF] = theta[4:10] + 1j * theta[10:16]
    return T


def _pack_grad(gT):
    return np.concatenate([np.diag(gT).real, gT[_OFF].real, gT[_OFF].imag])


def _rho_from_theta(theta):
    T = _unpack(theta)
    S = T @ T.conj().T
    return S / np.trace(S).real


def _theta_from_rho(rho):
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 1e-6, None)
    rho = (v * w) @ v.conj().T
    T = np.linalg.cholesky(rho / np.trace(rho).real)
    return np.concatenate([np.diag(T).real, T[_OFF].real, T[_OFF].imag])


def _objective(ops, data):
    def f(theta):
        T = _unpack(theta)
        S = T @ T.conj().T
        t = np.trace(S).real
        if t <= 1e-300:
            return 1e3, np.zeros_like(theta)
        rho = S / t
        res = np.einsum("kij,ji->k", ops, rho).real - data
        G = 2.0 * np.einsum("k,kij->ij", res, ops)
        K = G / t - (np.trace(G @ S).real / (t * t)) * np.eye(4)
        M = K @ T  # df = 2 Re tr(T^dag K dT)
        gT = 2.0 * M
        return float(res @ res), _pack_grad(gT)
    return f


@dataclass(frozen=True)
class MleResult:
    rho: np.ndarray
    residual: float
    theta: np.ndarray


def mle_reconstruct(records: Sequence[MeasurementRecord], model: FidelityModel = FidelityModel(),
                    n_starts: int = 5, seed: int = 0, start: Optional[np.ndarray] = None,
                    max_iter: int = 2000, simplex_iter: int = 200) -> MleResult:
    """Least-squares fit of rho = T T^dag / tr with T lower-triangular.

    Starts from the linear-inversion estimate projected onto physical states
    plus ``n_starts - 1`` random Cholesky factors, polishing each with a
    simplex pass and then L-BFGS; the best fit is kept.
    """
    ops, data = _povm(records, model)
    f = _objective(ops, data)
    rng = np.random.default_rng(seed)
    starts = []
    if start is not None:
        starts.append(np.asarray(start, dtype=float))
    else:
        try:
            starts.append(_theta_from_rho(linear_inversion(records, model)))
        except MissingOperator:
            pass
    while len(starts) < max(n_starts, 1):
        starts.append(rng.normal(size=16))
    best = None
    for theta0 in starts:
        simplex = minimize(lambda th: f(th)[0], theta0, method="Nelder-Mead",
                           options={"maxiter": simplex_iter, "xatol": 1e-6, "fatol": 1e-14})
        res = minimize(f, simplex.x, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "ftol": 1e-16, "gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        raise OptimizationFailure("MLE did not produce a finite estimate")
    rho = _rho_from_theta(best.x)
    rho = 0.5 * (rho + rho.conj().T)
    return MleResult(rho=rho, residual=float(best.fun), theta=best.x)


def bell_state(phi: float) -> np.ndarray:
    psi = np.zeros(4, dtype=complex)
    psi[1] = 1.0
    psi[2] = np.exp(1j * phi)
    return psi / math.sqrt(2.0)


def bell_fidelity(rho: np.ndarray) -> Tuple[float, float]:
    """Best overlap with (|01> + e^{i phi}|10>)/sqrt 2 over phi.

    The overlap is ``(rho_11 + rho_22)/2 + Re(e^{i phi} rho_12)`` so the
    maximum sits at ``phi = -arg(rho_12)``.
    """
    rho = np.asarray(rho)
    c = rho[1, 2]
    phi = -float(np.angle(c)) if abs(c) > 0 else 0.0
    phi = phi + 2 * math.pi if phi < 0 else phi + 0.0
    psi = bell_state(phi)
    return float(np.real(psi.conj() @ rho @ psi)), phi


def synthetic_records(rho: np.ndarray, model: FidelityModel = FidelityModel(),
                      shots: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None) -> List[MeasurementRecord]:
    """Reported probabilities for all nine operator pairs, optionally shot-sampled."""
    out = []
    for a, b in itertools.product(MEASURED, repeat=2):
        tmpl = MeasurementRecord(a, b, (1.0, 0.0, 0.0, 0.0))
        p = np.clip(predicted_probabilities(rho, [tmpl], model), 0.0, None)
        p = p / p.sum()
        if shots is not None:
            p = rng.multinomial(shots, p) / shots
        out.append(MeasurementRecord(a, b, tuple(p), shots))
    return out


def bootstrap_errors(records: Sequence[MeasurementRecord], model: FidelityModel,
                     n_resamples: int = 200, seed: int = 0, threads: int = 1) -> float:
    """Standard deviation of F_Bell over multinomial resamplings of the records."""
    if n_resamples < 100:
        raise ValidationError("n_resamples >= 100", field="n_resamples")
    if any(r.shots is None for r in records):
        raise ValidationError("bootstrap needs shot counts", field="records")
    base = mle_reconstruct(records, model, seed=seed)
    children = np.random.SeedSequence(seed).spawn(n_resamples)

    def one(ss):
        rng = np.random.default_rng(ss)
        resampled = [MeasurementRecord(r.a, r.b,
                                       tuple(rng.multinomial(r.shots, r.probabilities) / r.shots),
                                       r.shots) for r in records]
        fit = mle_reconstruct(resampled, model, n_starts=1, start=base.theta)
        return bell_fidelity(fit.rho)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, children))
    else:
        values = [one(c) for c in children]
    return float(np.std(values, ddof=1))


def records_to_csv(records: Sequence[MeasurementRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["operator_a", "operator_b", "p00", "p01", "p10", "p11", "shots"])
    for r in records:
        w.writerow([r.a, r.b, *(repr(p) for p in r.probabilities),
                    "" if r.shots is None else r.shots])
    return buf.getvalue()


def records_from_csv(text: str) -> List[MeasurementRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        shots = row.get("shots") or None
        out.append(MeasurementRecord(row["operator_a"], row["operator_b"],
                                     tuple(float(row[k]) for k in ("p00", "p01", "p10", "p11")),
                                     int(shots) if shots else None))
    return out


def rho_to_json(rho: np.ndarray) -> str:
    return json.dumps({"real": np.real(rho).tolist(), "imag": np.imag(rho).tolist()}, indent=2)


def rho_from_json(text: str) -> np.ndarray:
    d = json.loads(text)
    return np.array(d["real"]) + 1j * np.array(d["imag"])
