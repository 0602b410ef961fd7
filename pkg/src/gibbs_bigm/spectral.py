"""Uniform feasible sampling and binned feasible spectral weights.

The weight of bin ``e`` is the number of feasible bitstrings whose objective
lies in ``[E_LB + e, E_LB + e + delta)``; from ``N_s`` uniform samples it is
estimated as ``count * |F| / N_s``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_beta, check_rng
from .degeneracy import feasible_count
from .generators import po_encode
from .problem import (
    ProblemInstance,
    is_feasible,
    iter_bitstrings,
    objective_energies,
    objective_lower_bound_trivial,
    objective_upper_bound_trivial,
    penalty_upper_bound,
)

EXACT_FEASIBLE_CAP = 10**7
MAX_AUTO_BINS = 256
_CHUNK = 1 << 15


class InvalidLowerBound(ValueError):
    """A feasible objective value fell below the supplied lower bound."""


class UnsupportedFamily(ValueError):
    pass


@dataclass
class SpectralWeights:
    """Histogram of feasible objective energies on the lattice ``0, delta, 2 delta, ...``.

    ``counts`` are raw integer bin counts; the weight of a bin is
    ``counts * exp(log_scale)`` where ``log_scale = ln|F| - ln N_s`` for a
    sampled histogram and ``0`` for an exact one.
    """

    E_LB: float
    delta: float
    counts: np.ndarray
    log_scale: float
    n_samples: int
    log_feasible_count: float
    E_max: float
    source: str = "sampled"
    seed: int | None = None

    @property
    def lattice(self) -> np.ndarray:
        return self.delta * np.arange(self.counts.size)

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.counts.astype(float)) + self.log_scale

    @property
    def weights(self) -> np.ndarray:
        return self.counts * math.exp(self.log_scale)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "E_LB": self.E_LB,
            "delta": self.delta,
            "E_max": self.E_max,
            "counts": [int(c) for c in self.counts],
            "log_scale": self.log_scale,
            "n_samples": self.n_samples,
            "log_feasible_count": self.log_feasible_count,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "SpectralWeights":
        return cls(
            E_LB=d["E_LB"],
            delta=d["delta"],
            counts=np.array(d["counts"], dtype=np.int64),
            log_scale=d["log_scale"],
            n_samples=d["n_samples"],
            log_feasible_count=d["log_feasible_count"],
            E_max=d["E_max"],
            source=d.get("source", "sampled"),
            seed=d.get("seed"),
        )


# -- uniform feasible sampling ------------------------------------------------


def _sample_mnpp(inst, size, rng):
    N, P = inst.params["N"], inst.params["P"]
    choice = rng.integers(0, P, size=(size, N))
    X = np.zeros((size, N, P), dtype=np.uint8)
    np.put_along_axis(X, choice[:, :, None], 1, axis=2)
    return X.reshape(size, -1)


def _sample_tsp(inst, size, rng):
    n_v = inst.params["n_v"]
    perms = rng.permuted(np.tile(np.arange(n_v), (size, 1)), axis=1)
    X = np.zeros((size, n_v, n_v), dtype=np.uint8)
    # city i is visited at time perms[:, i]
    X[np.arange(size)[:, None], perms, np.arange(n_v)[None, :]] = 1
    return X.reshape(size, -1)


def _sample_po(inst, size, rng):
    N, w = inst.params["N"], inst.params["w"]
    budget = 2**w - 1
    slots = budget + N - 1
    # N - 1 bars at distinct uniformly chosen slots split the budget chunks
    bars = np.sort(np.argsort(rng.random((size, slots)), axis=1)[:, : N - 1], axis=1)
    edges = np.hstack([np.full((size, 1), -1), bars, np.full((size, 1), slots)])
    counts = np.diff(edges, axis=1) - 1
    return po_encode(counts, w)


_SAMPLERS = {"mnpp": _sample_mnpp, "tsp": _sample_tsp, "po": _sample_po}


def sample_feasible(inst: ProblemInstance, size=None, seed=None) -> np.ndarray:
    """Draw bitstrings uniformly from the feasible set.

    Returns a single bitstring when ``size`` is None, else an array of shape
    ``(size, n)``.
    """
    try:
        sampler = _SAMPLERS[inst.family]
    except KeyError:
        raise UnsupportedFamily(f"no uniform feasible sampler for family {inst.family!r}") from None
    rng = check_rng(seed)
    X = sampler(inst, 1 if size is None else int(size), rng)
    return X[0] if size is None else X


def feasible_energies(inst: ProblemInstance, n_samples: int, seed=None) -> np.ndarray:
    """Objective energies of ``n_samples`` uniform feasible samples."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = check_rng(seed)
    out = []
    left = n_samples
    while left:
        k = min(left, _CHUNK)
        out.append(objective_energies(inst, sample_feasible(inst, k, rng)))
        left -= k
    return np.concatenate(out)


# -- exhaustive enumeration of F ---------------------------------------------


def _chunks(it, size):
    it = iter(it)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield block


def iter_feasible(inst: ProblemInstance, chunk: int = _CHUNK):
    """Yield every feasible bitstring exactly once, in blocks."""
    fam, p = inst.family, inst.params
    if fam == "mnpp":
        N, P = p["N"], p["P"]
        total = P**N
        if total > EXACT_FEASIBLE_CAP:
            raise ValueError(f"|F| = {total} exceeds the exact enumeration cap")
        powers = P ** np.arange(N - 1, -1, -1, dtype=np.int64)
        for start in range(0, total, chunk):
            idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
            choice = (idx[:, None] // powers) % P
            X = np.zeros((idx.size, N, P), dtype=np.uint8)
            np.put_along_axis(X, choice[:, :, None], 1, axis=2)
            yield X.reshape(idx.size, -1)
    elif fam == "tsp":
        n_v = p["n_v"]
        if math.factorial(n_v) > EXACT_FEASIBLE_CAP:
            raise ValueError(f"|F| = {n_v}! exceeds the exact enumeration cap")
        eye = np.eye(n_v, dtype=np.uint8)
        for block in _chunks(itertools.permutations(range(n_v)), chunk):
            # row t of the permutation matrix is the city visited at time t
            yield eye[np.array(block)].reshape(len(block), -1)
    elif fam == "po":
        N, w = p["N"], p["w"]
        budget = 2**w - 1
        if feasible_count(inst) > EXACT_FEASIBLE_CAP:
            raise ValueError("|F| exceeds the exact enumeration cap")
        slots = budget + N - 1
        for block in _chunks(itertools.combinations(range(slots), N - 1), chunk):
            bars = np.array(block, dtype=np.int64).reshape(len(block), N - 1)
            edges = np.hstack([np.full((len(block), 1), -1), bars, np.full((len(block), 1), slots)])
            yield po_encode(np.diff(edges, axis=1) - 1, w)
    else:
        for X in iter_bitstrings(inst.n):
            F = X[is_feasible(inst, X)]
            if F.size:
                yield F


def exact_feasible_energies(inst: ProblemInstance) -> np.ndarray:
    parts = [objective_energies(inst, X) for X in iter_feasible(inst)]
    return np.concatenate(parts) if parts else np.zeros(0)


# -- binning ------------------------------------------------------------------


def bin_energies(energies, E_LB, delta, log_feasible_count=None, source="sampled", seed=None) -> SpectralWeights:
    """Histogram energies into bins of width ``delta`` starting at ``E_LB``.

    The lattice stops at the last non-empty bin.
    """
    energies = np.asarray(energies, dtype=float)
    if energies.size == 0:
        raise ValueError("no feasible energies to bin")
    delta = float(delta)
    if not delta > 0 or not np.isfinite(delta):
        raise ValueError(f"bin width must be positive and finite, got {delta}")
    shifted = energies - E_LB
    # rounding noise in E_obj must not push an exact minimizer below the bound
    tol = 1e-9 * max(1.0, float(np.abs(energies).max()), abs(E_LB))
    if shifted.min() < -tol:
        raise InvalidLowerBound(f"sampled objective {energies.min()!r} lies below E_LB={E_LB!r}")
    idx = np.floor(np.maximum(shifted, 0.0) / delta).astype(np.int64)
    counts = np.bincount(idx)
    n = energies.size
    if source == "exact":
        log_scale = 0.0
        log_F = math.log(n)
    else:
        log_F = float(log_feasible_count)
        log_scale = log_F - math.log(n)
    return SpectralWeights(
        E_LB=float(E_LB),
        delta=delta,
        counts=counts,
        log_scale=log_scale,
        n_samples=n,
        log_feasible_count=log_F,
        E_max=float(energies.max()),
        source=source,
        seed=seed,
    )


def _resolve_lb(inst, E_LB):
    return objective_lower_bound_trivial(inst) if E_LB is None else float(E_LB)


def estimate_spectral_weights(inst: ProblemInstance, n_samples: int, delta: float, E_LB=None, seed=None) -> SpectralWeights:
    energies = feasible_energies(inst, n_samples, seed)
    log_F = math.log(feasible_count(inst))
    return bin_energies(energies, _resolve_lb(inst, E_LB), delta, log_F, seed=seed if isinstance(seed, int) else None)


def exact_spectral_weights(inst: ProblemInstance, delta: float, E_LB=None) -> SpectralWeights:
    energies = exact_feasible_energies(inst)
    return bin_energies(energies, _resolve_lb(inst, E_LB), delta, source="exact")


def sample_size_for(eps: float, delta: float) -> int:
    """Samples that make the estimated bounds ``eps``-accurate with probability ``1 - delta``."""
    if not (0 < eps <= 1 and 0 < delta <= 1):
        raise ValueError("eps and delta must lie in (0, 1]")
    # guard against 2/(0.1^2 0.1^2) evaluating to 20000.000000000004
    return math.ceil(round(2.0 / (eps**2 * delta**2), 9))


def delta_floor(inst: ProblemInstance, beta: float, E_LB=None, E_ub=None, M=None, log_feasible=None) -> float:
    """Smallest bin width covered by the finite-sample guarantee.

    ``max(ln 2 / (2 beta), (ln|F| - n ln 2) / beta + E_ub - E_LB)`` where
    ``E_ub`` bounds the energy from above. Without ``M`` only the objective
    is bounded; passing ``M`` adds ``M * v_max`` for the full energy.
    """
    beta = check_beta(beta)
    E_LB = _resolve_lb(inst, E_LB)
    if E_ub is None:
        E_ub = objective_upper_bound_trivial(inst)
        if M is not None:
            E_ub += M * penalty_upper_bound(inst)
    if log_feasible is None:
        log_feasible = math.log(feasible_count(inst))
    energy_term = (log_feasible - inst.n * math.log(2.0)) / beta + (E_ub - E_LB)
    return max(math.log(2.0) / (2.0 * beta), energy_term)
