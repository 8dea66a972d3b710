"""Integer-order Bessel functions of the first kind.

Positive orders come from Miller's downward recurrence, normalised with the
completeness sum ``J_0^2 + 2 sum_k J_k^2 = 1``; small arguments use the power
series directly. Negative orders are never computed, they follow from
``J_{-n}(x) = (-1)^n J_n(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

MAX_ARGUMENT = 50.0
SERIES_CUTOFF = 0.5
_RESCALE = 1e100


def _check(x):
    if not math.isfinite(x) or abs(x) >= MAX_ARGUMENT:
        raise DomainError(f"|x| must be < {MAX_ARGUMENT}, got {x}")


def _series(n, x):
    # sum_k (-1)^k (x/2)^(n+2k) / (k! (n+k)!)
    half = 0.5 * x
    term = 1.0
    for j in range(1, n + 1):
        term *= half / j
    total = term
    q = -half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (n + k))
        total += term
        if abs(term) <= 1e-17 * abs(total):
            return total


def _miller(x, n_max):
    """J_0..J_{n_max}(x) for x > 0 by downward recurrence."""
    top = max(n_max, int(math.ceil(x)))
    start = top + 20 + int(math.sqrt(40.0 * max(top, 1)))
    start += start % 2
    out = np.zeros(n_max + 1)
    j_next, j_cur = 0.0, 1.0
    sumsq = 0.0
    even_sum = 0.0
    for k in range(start, 0, -1):
        # J_{k-1} = (2k/x) J_k - J_{k+1}
        j_prev = (2.0 * k / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        m = k - 1
        if m > 0:
            sumsq += 2.0 * j_cur * j_cur
            if m % 2 == 0:
                even_sum += 2.0 * j_cur
        if m <= n_max:
            out[m] = j_cur
        if abs(j_cur) > _RESCALE:
            j_cur /= _RESCALE
            j_next /= _RESCALE
            out /= _RESCALE
            sumsq /= _RESCALE * _RESCALE
            even_sum /= _RESCALE
    sumsq += j_cur * j_cur
    even_sum += j_cur
    norm = math.sqrt(sumsq)
    # the squared sum loses the sign; J_0 + 2 sum J_2k = 1 restores it
    if even_sum < 0:
        norm = -norm
    return out / norm


def _positive_orders(x, n_max):
    """J_0(x) .. J_{n_max}(x) as a float array."""
    if x == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    ax = abs(x)
    if ax <= SERIES_CUTOFF:
        out = np.array([_series(n, ax) for n in range(n_max + 1)])
    else:
        out = _miller(ax, n_max)
    if x < 0:
        out[1::2] *= -1.0
    return out


def bessel_j(n: int, x: float) -> float:
    """Bessel function of the first kind J_n(x) for integer n and |x| < 50."""
    n = int(n)
    x = float(x)
    _check(x)
    value = float(_positive_orders(x, abs(n))[abs(n)])
    if n < 0 and n % 2:
        return -value
    return value


@dataclass(frozen=True)
class BesselTable:
    """J_n(x) for n in [-n_max, n_max]; index with ``table[n]``."""

    argument: float
    n_max: int
    positive: np.ndarray

    def __getitem__(self, n):
        n = int(n)
        if abs(n) > self.n_max:
            return 0.0
        v = self.positive[abs(n)]
        return -v if (n < 0 and n % 2) else v

    @property
    def orders(self):
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def values(self):
        """Full array ordered like :attr:`orders`."""
        neg = self.positive[:0:-1].copy()
        neg[(np.arange(self.n_max, 0, -1) % 2) == 1] *= -1.0
        return np.concatenate([neg, self.positive])

    def completeness(self):
        return float(np.sum(self.values ** 2))


def bessel_table(x: float, n_max: int) -> BesselTable:
    if n_max < 0:
        raise DomainError("n_max must be >= 0")
    x = float(x)
    _check(x)
    pos = _positive_orders(x, int(n_max))
    pos.setflags(write=False)
    return BesselTable(argument=x, n_max=int(n_max), positive=pos)


def default_order_cutoff(x: float) -> int:
    """Sideband truncation used by the sums: ceil(|x|) + 15."""
    return int(math.ceil(abs(x))) + 15
