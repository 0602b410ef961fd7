"""Reference samplers used to check calibrated penalty weights.

``GibbsExact`` enumerates all ``2^n`` states and is the oracle. The
simulated-annealing and fixed-temperature Metropolis samplers run many
independent single-bit-flip chains at once, one row of the state matrix per
chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from ._validation import check_beta, check_enumerable, check_eta, check_rng
from .problem import ProblemInstance, QuboReformulation, build_qubo, iter_bitstrings, objective_energies, penalty_energies, total_energies


# -- exact Gibbs --------------------------------------------------------------


class EnergyTable:
    """Objective and penalty of every bitstring, indexed as in :func:`iter_bitstrings`.

    Independent of ``M``, so one table serves any number of reformulations.
    """

    def __init__(self, inst: ProblemInstance):
        check_enumerable(inst.n)
        self.instance = inst
        obj, pen = [], []
        for X in iter_bitstrings(inst.n):
            obj.append(objective_energies(inst, X))
            pen.append(penalty_energies(inst, X).astype(float))
        self.objective = np.concatenate(obj)
        self.penalty = np.concatenate(pen)
        self.feasible = self.penalty == 0

    def total(self, M: float) -> np.ndarray:
        return self.objective + M * self.penalty

    def bitstrings(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        return ((idx[:, None] >> np.arange(self.instance.n)) & 1).astype(np.uint8)


class GibbsExact:
    """Exact Boltzmann distribution ``p(x) ~ exp(-beta E(x))`` of a reformulation."""

    def __init__(self, reform: QuboReformulation, beta: float, table: EnergyTable | None = None):
        if not (beta == 0 or beta > 0):
            raise ValueError(f"beta must be >= 0, got {beta}")
        self.reform = reform
        self.beta = float(beta)
        self.table = table if table is not None else EnergyTable(reform.instance)
        self.energies = self.table.total(reform.M)
        scaled = -self.beta * self.energies
        self.log_partition = float(logsumexp(scaled))
        self.log_probs = scaled - self.log_partition

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def event_mask(self, E_f=math.inf) -> np.ndarray:
        return self.table.feasible & (self.table.objective <= E_f)

    def success_prob(self, E_f=math.inf) -> float:
        """``Pr[x feasible and E_obj(x) <= E_f]``."""
        mask = self.event_mask(E_f)
        if not mask.any():
            return 0.0
        return float(np.exp(logsumexp(self.log_probs[mask])))

    def mean_feasible_objective(self) -> float:
        mask = self.table.feasible
        w = np.exp(self.log_probs[mask] - logsumexp(self.log_probs[mask]))
        return float(w @ self.table.objective[mask])

    def sample_indices(self, count: int, seed=None) -> np.ndarray:
        rng = check_rng(seed)
        order = np.argsort(self.log_probs)[::-1]
        cdf = np.cumsum(np.exp(self.log_probs[order]))
        cdf /= cdf[-1]
        pos = np.searchsorted(cdf, rng.random(count), side="right")
        return order[np.minimum(pos, cdf.size - 1)]


def gibbs_exact_success_prob(reform: QuboReformulation, beta: float, E_f=math.inf, table=None) -> float:
    return GibbsExact(reform, beta, table).success_prob(E_f)


# -- sample reports -----------------------------------------------------------


@dataclass
class SolveReport:
    """Samples drawn by a solver, with their objective, penalty and total energy."""

    X: np.ndarray
    objective: np.ndarray
    penalty: np.ndarray
    total: np.ndarray
    E_f: float = math.inf
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_bitstrings(cls, reform: QuboReformulation, X, E_f=math.inf, **meta):
        obj, pen, tot = total_energies(reform, X)
        return cls(np.asarray(X, dtype=np.uint8), obj, pen, tot + 0.0, E_f, meta)

    def __len__(self):
        return self.X.shape[0]

    @property
    def feasible(self) -> np.ndarray:
        return self.penalty == 0

    @property
    def eta_eff(self) -> float:
        return estimate_eta_eff(self, self.E_f)

    @property
    def mean_feasible_objective(self) -> float:
        f = self.feasible
        return float(self.objective[f].mean()) if f.any() else math.nan

    @property
    def best_energy(self) -> float:
        return float(self.total.min())

    def summary(self) -> dict:
        return {
            "count": len(self),
            "eta_eff": self.eta_eff,
            "mean_feasible_objective": self.mean_feasible_objective,
            "best_energy": self.best_energy,
            **self.meta,
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["E_f"] = "inf" if self.E_f == math.inf else self.E_f
        d["samples"] = [
            {"x": "".join(map(str, x)), "objective": float(o), "penalty": int(p), "total": float(t)}
            for x, o, p, t in zip(self.X, self.objective, self.penalty, self.total)
        ]
        return d


def estimate_eta_eff(report: SolveReport, E_f=math.inf) -> float:
    """Fraction of samples that are feasible with objective at most ``E_f``."""
    if len(report) == 0:
        raise ValueError("empty report")
    hits = report.feasible & (report.objective <= E_f)
    return float(hits.mean())


def gibbs_sample(reform: QuboReformulation, beta: float, count: int, seed=None, E_f=math.inf, table=None) -> SolveReport:
    """I.i.d. draws from the exact Gibbs distribution by inverse CDF."""
    g = GibbsExact(reform, beta, table)
    idx = g.sample_indices(count, seed)
    X = g.table.bitstrings(idx)
    obj = g.table.objective[idx]
    pen = g.table.penalty[idx].astype(np.int64)
    return SolveReport(X, obj, pen, g.energies[idx], E_f, {"solver": "gibbs", "M": reform.M, "beta": beta})


# -- single-bit-flip Metropolis -----------------------------------------------


class _FlipKernel:
    """Cached local fields for O(n) energy differences of single-bit flips.

    With ``W = Q + Q'``, flipping bit ``i`` changes ``x'Qx`` by
    ``d (Q_ii + h_i - W_ii x_i)`` where ``h = W x`` and ``d = 1 - 2 x_i``.
    """

    def __init__(self, Q):
        Q = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
        self.W = Q + Q.T
        self.diag = np.diag(Q).copy()

    def fields(self, X):
        return X.astype(float) @ self.W

    def delta(self, X, h, rows, i):
        x_i = X[rows, i].astype(float)
        d = 1.0 - 2.0 * x_i
        return d * (self.diag[i] + h[rows, i] - 2.0 * self.diag[i] * x_i), d

    def flip(self, X, h, rows, i, d):
        X[rows, i] ^= 1
        h[rows] += d[:, None] * self.W[i]


def _metropolis_sweep(kernel, X, h, T, rng, proposals):
    chains, n = X.shape
    rows = np.arange(chains)
    for _ in range(proposals):
        i = rng.integers(0, n, size=chains)
        dE, d = kernel.delta(X, h, rows, i)
        if T > 0:
            with np.errstate(over="ignore"):
                accept = (dE <= 0) | (rng.random(chains) < np.exp(-np.maximum(dE, 0.0) / T))
        else:
            accept = dE <= 0
        if accept.any():
            kernel.flip(X, h, rows[accept], i[accept], d[accept])


@dataclass
class SaSchedule:
    """Geometric cooling ``T_k = T0 r^k`` for ``k = 0..steps-1``."""

    T0: float
    r: float
    steps: int
    sweeps_per_stage: int = 1
    seed: int | None = None

    def __post_init__(self):
        if not self.T0 >= 0:
            raise ValueError("T0 must be non-negative")
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        if self.steps < 1 or self.sweeps_per_stage < 1:
            raise ValueError("steps and sweeps_per_stage must be >= 1")

    @property
    def temperatures(self) -> np.ndarray:
        return self.T0 * self.r ** np.arange(self.steps)

    @property
    def final_beta(self) -> float:
        T = self.temperatures[-1]
        return math.inf if T == 0 else 1.0 / T

    @classmethod
    def ending_at(cls, reform: QuboReformulation, beta: float, steps: int = 200, sweeps_per_stage: int = 1, seed=None):
        """Schedule whose last stage sits at ``T = 1 / beta``.

        Starts from ``||Q_total||_1 / n``, raised to ten times the final
        temperature if it would otherwise not be hotter.
        """
        beta = check_beta(beta)
        T_f = 1.0 / beta
        Q = reform.Q_total
        norm = float(abs(Q).sum()) if sp.issparse(Q) else float(np.abs(Q).sum())
        T0 = max(norm / reform.n, 10.0 * T_f)
        r = (T_f / T0) ** (1.0 / max(steps - 1, 1))
        return cls(T0, r, steps, sweeps_per_stage, seed)


def simulated_annealing(reform: QuboReformulation, schedule: SaSchedule, count: int, seed=None, E_f=math.inf) -> SolveReport:
    """Anneal ``count`` independent chains from uniform random starts.

    Each stage performs ``sweeps_per_stage * n`` single-bit-flip Metropolis
    proposals per chain; the final configuration of every chain is one sample.
    """
    rng = check_rng(schedule.seed if seed is None else seed)
    kernel = _FlipKernel(reform.Q_total)
    X = rng.integers(0, 2, size=(count, reform.n), dtype=np.uint8)
    h = kernel.fields(X)
    for T in schedule.temperatures:
        _metropolis_sweep(kernel, X, h, T, rng, schedule.sweeps_per_stage * reform.n)
    rep = SolveReport.from_bitstrings(reform, X, E_f)
    rep.meta.update(solver="sa", M=reform.M, beta=schedule.final_beta)
    return rep


def metropolis_state_counts(reform: QuboReformulation, beta: float, chains: int, steps: int, burn_in: int = 1000, seed=None) -> np.ndarray:
    """Visit counts over all ``2^n`` states of fixed-temperature Metropolis chains.

    Every chain records its state after each proposal once ``burn_in``
    proposals have passed.
    """
    n = reform.n
    check_enumerable(n)
    beta = check_beta(beta)
    rng = check_rng(seed)
    kernel = _FlipKernel(reform.Q_total)
    X = rng.integers(0, 2, size=(chains, n), dtype=np.uint8)
    h = kernel.fields(X)
    _metropolis_sweep(kernel, X, h, 1.0 / beta, rng, burn_in)
    weights = np.int64(1) << np.arange(n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int64)
    for _ in range(steps):
        _metropolis_sweep(kernel, X, h, 1.0 / beta, rng, 1)
        counts += np.bincount(X.astype(np.int64) @ weights, minlength=1 << n)
    return counts


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


# -- baselines ----------------------------------------------------------------


@dataclass
class BinarySearchResult:
    M: float | None
    calls: int
    ok: bool
    trace: list = field(default_factory=list)


def binary_search_m(inst: ProblemInstance, solver, eta: float, M_init: float, budget: int = 20) -> BinarySearchResult:
    """Halve ``M`` while the measured success rate stays at or above ``eta``.

    ``solver(reform)`` returns either a :class:`SolveReport` or a success
    rate. The result holds the last ``M`` that met the target and the number
    of solver calls, which never exceeds ``budget``.
    """
    eta = check_eta(eta)
    if not M_init > 0:
        raise ValueError("M_init must be positive")
    if budget < 1:
        raise ValueError("budget must be >= 1")

    def measure(M):
        out = solver(build_qubo(inst, M))
        return out.eta_eff if isinstance(out, SolveReport) else float(out)

    trace = [(M_init, measure(M_init))]
    if trace[0][1] < eta:
        return BinarySearchResult(None, 1, False, trace)
    M = M_init
    while len(trace) < budget:
        rate = measure(M / 2)
        trace.append((M / 2, rate))
        if rate < eta:
            break
        M /= 2
    return BinarySearchResult(M, len(trace), True, trace)


def speedup_metric(M_l1: float, M_star: float) -> float:
    """``log2(M_l1 / M_star)``; negative when the calibrated weight is larger."""
    if not (M_l1 > 0 and M_star > 0):
        raise ValueError("both penalty weights must be positive")
    return math.log2(M_l1 / M_star)
