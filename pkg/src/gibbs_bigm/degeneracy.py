"""Penalization degeneracy: how many bitstrings have penalty exactly ``v``.

Closed forms exist for the three benchmark families at small ``v``; an
exhaustive counter serves as the oracle and a stretched-exponential fit to
uniformly sampled penalties covers everything else.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import curve_fit

from ._validation import check_enumerable, check_rng, enumeration_cap
from .problem import ProblemInstance, iter_bitstrings, penalty_energies, penalty_upper_bound


class UnsupportedDegeneracy(ValueError):
    """The requested penalty value is outside the range of a closed form."""


def _binom(n, k):
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def npen_mnpp(N: int, P: int, v: int) -> int:
    """Bitstrings of an N x P one-hot-row layout with penalty ``v`` (``v <= 7``)."""
    if v < 0:
        return 0
    if v > 7:
        raise UnsupportedDegeneracy(f"MNPP closed form covers v <= 7, got v={v}")
    if v == 0:
        return P**N
    bad_row = 1 + _binom(P, 2)  # a row with zero or two ones costs 1
    count = P ** (N - v) * _binom(N, v) * bad_row**v if v <= N else 0
    if v >= 4:
        # one row holding three ones (cost 4) plus v - 4 rows of cost 1
        k = v - 3
        if k <= N:
            count += k * _binom(N, k) * P ** (N - k) * _binom(P, 3) * bad_row ** (v - 4)
    return count


def npen_tsp(n_v: int, v: int) -> int:
    """Bitstrings of an n_v x n_v permutation layout with penalty ``v`` (``v <= 7``)."""
    if v < 0:
        return 0
    if v > 7:
        raise UnsupportedDegeneracy(f"TSP closed form covers v <= 7, got v={v}")
    f = math.factorial(n_v)
    if v == 0:
        return f
    if v % 2:
        return 0
    c = lambda k: _binom(n_v, k)  # noqa: E731
    if v == 2:
        bracket = n_v + 4 * c(2) + Fraction(3, 2) * c(3)
    elif v == 4:
        bracket = c(2) + 21 * c(3) + 57 * c(4) + 45 * c(5) + Fraction(45, 4) * c(6)
    else:
        bracket = 5 * (
            Fraction(47, 15) * c(3)
            + 24 * c(4)
            + 137 * c(5)
            + 1157 * c(6)
            + Fraction(567, 4) * c(7)
            + 126 * c(8)
            + Fraction(63, 2) * c(9)
        )
    value = f * Fraction(bracket)
    if value.denominator != 1:
        raise ArithmeticError(f"non-integer TSP degeneracy for n_v={n_v}, v={v}: {value}")
    return int(value)


def npen_po(N: int, w: int, v: int) -> int:
    """Allocations of ``2^w - 1`` budget chunks over N assets off by ``sqrt(v)``."""
    if v < 0:
        return 0
    k = math.isqrt(v)
    if k * k != v:
        return 0
    if k > 5:
        raise UnsupportedDegeneracy(f"PO closed form covers v <= 25, got v={v}")
    if (k in (3, 4) and w < 2) or (k == 5 and w < 3):
        raise UnsupportedDegeneracy(f"PO closed form for v={v} needs a larger w, got w={w}")
    top = 2**w + N
    if k == 0:
        return _binom(top - 2, N - 1)
    # allocations over budget where one asset exceeds its cap of 2^w - 1
    overflow = N * _binom(N + k - 2, k - 1)
    return _binom(top - 2 - k, N - 1) + _binom(top - 2 + k, N - 1) - overflow


def npen_analytic(inst: ProblemInstance, v: int) -> int:
    p = inst.params
    if inst.family == "mnpp":
        return npen_mnpp(p["N"], p["P"], v)
    if inst.family == "tsp":
        return npen_tsp(p["n_v"], v)
    if inst.family == "po":
        return npen_po(p["N"], p["w"], v)
    raise UnsupportedDegeneracy(f"no closed form for family {inst.family!r}")


def known_zero(inst: ProblemInstance, v: int) -> bool:
    """Penalty values that are structurally impossible for the family."""
    if v > penalty_upper_bound(inst):
        return True
    if inst.family == "tsp":
        return v % 2 == 1
    if inst.family == "po":
        return math.isqrt(v) ** 2 != v
    return False


def feasible_count(inst: ProblemInstance) -> int:
    """``|F|``, the number of bitstrings satisfying ``Ax = b``."""
    if inst.family in ("mnpp", "tsp", "po"):
        return npen_analytic(inst, 0)
    counts = bruteforce_counts(inst)
    return int(counts[0]) if counts.size else 0


@dataclass
class DegeneracyTable:
    """``ln n_pen(v)`` for ``v = 0..v_cut``, with zeros marked explicitly."""

    log_values: np.ndarray
    zero_mask: np.ndarray
    source: str
    counts: list | None = None
    extrapolated: bool = False
    fit_params: tuple | None = field(default=None, repr=False)

    @property
    def v_cut(self) -> int:
        return len(self.log_values) - 1

    @classmethod
    def from_counts(cls, counts, source, **kw):
        counts = [int(c) for c in counts]
        zero = np.array([c == 0 for c in counts], dtype=bool)
        logs = np.array([math.log(c) if c > 0 else -np.inf for c in counts])
        return cls(logs, zero, source, counts=counts, **kw)

    def log_npen(self, v: int) -> float:
        return float(self.log_values[v])

    def truncated(self, v_cut: int) -> "DegeneracyTable":
        if v_cut > self.v_cut:
            raise ValueError(f"table only reaches v={self.v_cut}")
        return DegeneracyTable(
            self.log_values[: v_cut + 1].copy(),
            self.zero_mask[: v_cut + 1].copy(),
            self.source,
            counts=None if self.counts is None else self.counts[: v_cut + 1],
            extrapolated=self.extrapolated,
            fit_params=self.fit_params,
        )

    def padded(self, v_cut: int) -> "DegeneracyTable":
        """Extend with exact zeros up to ``v_cut``."""
        if v_cut <= self.v_cut:
            return self
        extra = v_cut - self.v_cut
        return DegeneracyTable(
            np.concatenate([self.log_values, np.full(extra, -np.inf)]),
            np.concatenate([self.zero_mask, np.ones(extra, dtype=bool)]),
            self.source,
            counts=None if self.counts is None else self.counts + [0] * extra,
            extrapolated=self.extrapolated,
            fit_params=self.fit_params,
        )

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "v_cut": self.v_cut,
            "log_values": [None if z else float(x) for x, z in zip(self.log_values, self.zero_mask)],
            "zero_mask": [bool(z) for z in self.zero_mask],
            "extrapolated": self.extrapolated,
        }

    @classmethod
    def from_dict(cls, d) -> "DegeneracyTable":
        zero = np.array(d["zero_mask"], dtype=bool)
        logs = np.array([-np.inf if z else float(x) for x, z in zip(d["log_values"], zero)])
        return cls(logs, zero, d["source"], extrapolated=d.get("extrapolated", False))


def bruteforce_counts(inst: ProblemInstance) -> np.ndarray:
    """Histogram of ``E_pen`` over all ``2^n`` bitstrings (index = penalty value)."""
    check_enumerable(inst.n)
    v_max = penalty_upper_bound(inst)
    hist = np.zeros(v_max + 1, dtype=np.int64)
    for X in iter_bitstrings(inst.n):
        pen = penalty_energies(inst, X).astype(np.int64)
        hist += np.bincount(pen, minlength=v_max + 1)[: v_max + 1]
    return hist


def npen_bruteforce(inst: ProblemInstance, v_cut: int) -> DegeneracyTable:
    hist = bruteforce_counts(inst)
    counts = [int(hist[v]) if v < hist.size else 0 for v in range(v_cut + 1)]
    return DegeneracyTable.from_counts(counts, "brute_force")


def stretched_exponential(v, a, b, k):
    return a + b * np.power(v, k)


def fit_stretched_exponential(v, log_counts, k_bounds=(1e-3, 1.5)):
    """Least-squares fit of ``ln n = a + b v^k``; returns ``(a, b, k)``."""
    v = np.asarray(v, dtype=float)
    y = np.asarray(log_counts, dtype=float)
    if v.size < 3:
        raise ValueError("need at least three points to fit a stretched exponential")
    slope = (y[-1] - y[0]) / (v[-1] - v[0]) if v[-1] != v[0] else 1.0
    p0 = [y[0] - slope * v[0], slope, 1.0]
    lower = [-np.inf, -np.inf, k_bounds[0]]
    upper = [np.inf, np.inf, k_bounds[1]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params, _ = curve_fit(stretched_exponential, v, y, p0=p0, bounds=(lower, upper), maxfev=20000)
    return tuple(float(p) for p in params)


def npen_fit(inst: ProblemInstance, samples: int, v_cut: int, seed=None) -> DegeneracyTable:
    """Estimate ``n_pen`` from penalties of uniformly random bitstrings.

    ``n_pen(v) ~ 2^n * freq(v)`` on the sampled bins is fitted with a
    stretched exponential which then fills ``v = 1..v_cut``. Structural zeros
    of the family are kept.
    """
    if samples < 1000:
        raise ValueError("npen_fit needs at least 1000 samples")
    rng = check_rng(seed)
    hist = {}
    remaining = samples
    while remaining:
        k = min(remaining, 1 << 16)
        X = rng.integers(0, 2, size=(k, inst.n), dtype=np.uint8)
        for val, cnt in zip(*np.unique(penalty_energies(inst, X).astype(np.int64), return_counts=True)):
            hist[int(val)] = hist.get(int(val), 0) + int(cnt)
        remaining -= k
    vs = np.array(sorted(hist), dtype=float)
    log_n = np.array([inst.n * math.log(2) + math.log(hist[int(v)] / samples) for v in vs])
    if vs.size < 3:
        raise ValueError(f"fit impossible: only {vs.size} non-empty penalty bins")
    a, b, k = fit_stretched_exponential(vs, log_n)

    logs = np.full(v_cut + 1, -np.inf)
    zero = np.ones(v_cut + 1, dtype=bool)
    if inst.family in ("mnpp", "tsp", "po"):
        logs[0] = math.log(feasible_count(inst))
        zero[0] = False
    elif 0 in hist:
        logs[0] = log_n[0]
        zero[0] = False
    for v in range(1, v_cut + 1):
        if known_zero(inst, v):
            continue
        logs[v] = stretched_exponential(v, a, b, k)
        zero[v] = False
    return DegeneracyTable(logs, zero, "fitted", extrapolated=True, fit_params=(a, b, k))


def degeneracy_table(inst: ProblemInstance, v_cut: int, samples: int = 100_000, seed=None) -> DegeneracyTable:
    """Best available table up to ``v_cut``: closed form, else exhaustive, else fitted.

    Values above ``v_max`` are exact zeros. Gaps in the closed form are filled
    by brute force when ``n`` is enumerable and by the fitted curve otherwise,
    in which case the table is flagged as extrapolated.
    """
    v_max = penalty_upper_bound(inst)
    counts = []
    missing = []
    for v in range(v_cut + 1):
        if known_zero(inst, v):
            counts.append(0)
            continue
        try:
            counts.append(npen_analytic(inst, v))
        except UnsupportedDegeneracy:
            counts.append(None)
            missing.append(v)
    if not missing:
        return DegeneracyTable.from_counts(counts, "analytic")
    if inst.n <= enumeration_cap():
        return npen_bruteforce(inst, min(v_cut, v_max)).padded(v_cut)
    fitted = npen_fit(inst, samples, v_cut, seed)
    logs = np.array([fitted.log_values[v] if c is None else (math.log(c) if c > 0 else -np.inf) for v, c in enumerate(counts)])
    zero = np.isneginf(logs)
    return DegeneracyTable(logs, zero, "fitted", extrapolated=True, fit_params=fitted.fit_params)
