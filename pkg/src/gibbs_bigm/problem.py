"""Linearly constrained binary problems and their penalized QUBO form.

An instance is ``minimize x'Qx + L'x + c  subject to  Ax = b`` over
``x in {0,1}^n``. The penalty is ``(Ax - b)^2`` and the QUBO energy for a
weight ``M`` is ``E(x) = E_obj(x) + M * E_pen(x)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp

from ._validation import check_beta, check_bitstrings, check_enumerable, check_eta

DENSE_LIMIT = 4096
FAMILIES = ("mnpp", "tsp", "po", "generic")


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Immutable LCBO instance.

    ``Q`` holds the quadratic objective (dense, or CSR beyond ``DENSE_LIMIT``
    variables), ``L`` a separate linear term and ``constant`` an additive
    offset. ``Q_folded`` is the single matrix with ``L`` on its diagonal, so
    that ``E_obj(x) = x' Q_folded x + constant``.
    """

    Q: Any
    A: np.ndarray
    b: np.ndarray
    L: np.ndarray | None = None
    constant: float = 0.0
    family: str = "generic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        Q = self.Q
        if sp.issparse(Q):
            Q = sp.csr_array(Q, dtype=float)
        else:
            Q = np.array(Q, dtype=float)
            if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
                raise ValueError(f"Q must be square, got shape {Q.shape}")
            if Q.shape[0] > DENSE_LIMIT:
                Q = sp.csr_array(Q)
        n = Q.shape[0]
        data = Q.data if sp.issparse(Q) else Q
        if not np.all(np.isfinite(data)):
            raise ValueError("Q must be finite")

        A = np.asarray(self.A)
        if A.size and not np.all(np.equal(np.mod(A, 1), 0)):
            raise ValueError("A must be integer valued")
        A = np.array(A, dtype=np.int64).reshape(-1, n) if A.size else np.zeros((0, n), np.int64)
        b = np.asarray(self.b)
        if b.size and not np.all(np.equal(np.mod(b, 1), 0)):
            raise ValueError("b must be integer valued")
        b = np.array(b, dtype=np.int64).reshape(-1)
        if A.shape != (b.shape[0], n):
            raise ValueError(f"A has shape {A.shape}, expected ({b.shape[0]}, {n})")

        L = np.zeros(n) if self.L is None else np.array(self.L, dtype=float).reshape(-1)
        if L.shape != (n,) or not np.all(np.isfinite(L)):
            raise ValueError(f"L must be a finite vector of length {n}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")

        if not sp.issparse(Q):
            _readonly(Q)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "b", _readonly(b))
        object.__setattr__(self, "L", _readonly(L))
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "params", dict(self.params))
        _check_family_size(self.family, self.params, n)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.Q)

    @cached_property
    def Q_folded(self):
        if self.is_sparse:
            return (self.Q + sp.diags_array(self.L)).tocsr()
        return _readonly(self.Q + np.diag(self.L))

    def dense_Q(self) -> np.ndarray:
        return self.Q_folded.toarray() if self.is_sparse else np.array(self.Q_folded)


def _check_family_size(family, params, n):
    if family == "mnpp":
        expected = params["N"] * params["P"]
    elif family == "tsp":
        expected = params["n_v"] ** 2
    elif family == "po":
        expected = params["N"] * params["w"]
    else:
        return
    if expected != n:
        raise ValueError(f"{family} parameters {params} imply n={expected}, got {n}")


def _quadratic_form(Q, X):
    """Row-wise ``x' Q x`` for a batch ``X`` of shape (k, n)."""
    Xf = X.astype(float)
    if sp.issparse(Q):
        QX = (Q @ Xf.T).T
    else:
        QX = Xf @ Q.T
    return np.einsum("ij,ij->i", np.asarray(QX), Xf)


def objective_energies(inst: ProblemInstance, X) -> np.ndarray:
    X = check_bitstrings(X, inst.n)
    return _quadratic_form(inst.Q_folded, X) + inst.constant


def objective_energy(inst: ProblemInstance, x) -> float:
    """``E_obj(x) = x'Qx + L'x + c`` with ``Q`` used as given (no symmetrization)."""
    return float(objective_energies(inst, x)[0])


def constraint_residuals(inst: ProblemInstance, X) -> np.ndarray:
    X = check_bitstrings(X, inst.n)
    return X.astype(np.int64) @ inst.A.T - inst.b


def penalty_energies(inst: ProblemInstance, X) -> np.ndarray:
    r = constraint_residuals(inst, X)
    if _penalty_may_overflow(inst):
        return np.array([sum(int(v) ** 2 for v in row) for row in r], dtype=object)
    return np.einsum("ij,ij->i", r, r)


def penalty_energy(inst: ProblemInstance, x) -> int:
    """``E_pen(x) = sum_j (A_j x - b_j)^2`` as an exact integer."""
    return int(penalty_energies(inst, x)[0])


def _penalty_may_overflow(inst):
    return _generic_penalty_bound(inst) >= 2**62


def is_feasible(inst: ProblemInstance, X) -> np.ndarray:
    return np.all(constraint_residuals(inst, X) == 0, axis=1)


@dataclass(frozen=True)
class EnergyBreakdown:
    objective: float
    penalty: int
    total: float


@dataclass(frozen=True, eq=False)
class QuboReformulation:
    """``E(x) = x' Q_total x + offset`` for a fixed penalty weight ``M``."""

    instance: ProblemInstance
    M: float
    Q_total: Any
    offset: float

    @property
    def n(self) -> int:
        return self.instance.n

    def energies(self, X) -> np.ndarray:
        X = check_bitstrings(X, self.n)
        return _quadratic_form(self.Q_total, X) + self.offset


def build_qubo(inst: ProblemInstance, M: float) -> QuboReformulation:
    """Fold ``M (Ax - b)^2`` into a single QUBO matrix.

    The linear part ``-2 M (A'b)_i x_i`` goes onto the diagonal because
    ``x_i^2 = x_i``; the constant ``M b'b`` goes into the offset.
    """
    M = float(M)
    if not M >= 0:
        raise ValueError(f"penalty weight must be non-negative, got {M}")
    A = inst.A.astype(float)
    b = inst.b.astype(float)
    if inst.is_sparse:
        As = sp.csr_array(A)
        pen = (As.T @ As - sp.diags_array(2.0 * (A.T @ b))).tocsr()
        Q_total = (inst.Q_folded + M * pen).tocsr()
    else:
        pen = A.T @ A - np.diag(2.0 * (A.T @ b))
        Q_total = _readonly(inst.Q_folded + M * pen)
    offset = inst.constant + M * float(b @ b)
    return QuboReformulation(inst, M, Q_total, offset)


def total_energies(reform: QuboReformulation, X):
    """Vectorized counterpart of :func:`total_energy`; returns (objective, penalty, total)."""
    obj = objective_energies(reform.instance, X)
    pen = penalty_energies(reform.instance, X)
    return obj, pen, obj + reform.M * pen.astype(float)


def total_energy(reform: QuboReformulation, x) -> EnergyBreakdown:
    obj, pen, tot = total_energies(reform, x)
    return EnergyBreakdown(float(obj[0]), int(pen[0]), float(tot[0]))


def l1_norm(inst: ProblemInstance) -> float:
    Q = inst.Q_folded
    return float(abs(Q).sum()) if sp.issparse(Q) else float(np.abs(Q).sum())


def big_m_l1(inst: ProblemInstance, beta: float, eta: float) -> float:
    """Direct penalty ``(n ln 2 - ln(1 - eta)) / beta + ||Q||_1``.

    Sufficient for a Gibbs sampler at inverse temperature ``beta`` to be
    feasible with probability at least ``eta``. ``beta = inf`` gives the
    exact-solver value ``||Q||_1``.
    """
    eta = check_eta(eta)
    if beta == math.inf:
        return l1_norm(inst)
    beta = check_beta(beta)
    return (inst.n * math.log(2.0) - math.log1p(-eta)) / beta + l1_norm(inst)


def _generic_penalty_bound(inst):
    total = 0
    for row, bj in zip(inst.A.tolist(), inst.b.tolist()):
        s_pos = sum(a for a in row if a > 0)
        s_neg = sum(a for a in row if a < 0)
        total += max(s_pos - bj, bj - s_neg) ** 2
    return total


def penalty_upper_bound(inst: ProblemInstance) -> int:
    """Upper bound on ``max_x E_pen(x)``; exact for the benchmark families."""
    p = inst.params
    if inst.family == "mnpp":
        return p["N"] * (p["P"] - 1) ** 2
    if inst.family == "tsp":
        return 2 * p["n_v"] * (p["n_v"] - 1) ** 2
    if inst.family == "po":
        budget = 2 ** p["w"] - 1
        return max(budget, (p["N"] - 1) * budget) ** 2
    return _generic_penalty_bound(inst)


def objective_lower_bound_trivial(inst: ProblemInstance) -> float:
    """Cheap valid lower bound on ``min_x E_obj(x)`` over all of ``{0,1}^n``."""
    if inst.family in ("mnpp", "tsp"):
        return 0.0
    Q = inst.Q_folded
    neg = Q.minimum(0).sum() if sp.issparse(Q) else np.minimum(Q, 0).sum()
    return float(neg) + inst.constant


def objective_upper_bound_trivial(inst: ProblemInstance) -> float:
    Q = inst.Q_folded
    pos = Q.maximum(0).sum() if sp.issparse(Q) else np.maximum(Q, 0).sum()
    return float(pos) + inst.constant


def iter_bitstrings(n: int, chunk: int = 1 << 16):
    """Yield all ``2^n`` bitstrings in index order as uint8 blocks; bit ``i`` of the index is ``x_i``."""
    check_enumerable(n)
    bits = np.arange(n, dtype=np.int64)
    total = 1 << n
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield ((idx[:, None] >> bits) & 1).astype(np.uint8)


def all_bitstrings(n: int) -> np.ndarray:
    return np.concatenate(list(iter_bitstrings(n)), axis=0)


# -- JSON --------------------------------------------------------------------


def instance_to_dict(inst: ProblemInstance) -> dict:
    if inst.is_sparse:
        coo = inst.Q.tocoo()
        q = [[int(i), int(j), float(v)] for i, j, v in zip(coo.row, coo.col, coo.data)]
    else:
        rows, cols = np.nonzero(inst.Q)
        q = [[int(i), int(j), float(inst.Q[i, j])] for i, j in zip(rows, cols)]
    rows, cols = np.nonzero(inst.A)
    a = [[int(j), int(i), int(inst.A[j, i])] for j, i in zip(rows, cols)]
    family = {"name": inst.family, **inst.params}
    return {
        "n": inst.n,
        "m": inst.m,
        "Q": q,
        "L": [float(v) for v in inst.L],
        "constant": inst.constant,
        "A": a,
        "b": [int(v) for v in inst.b],
        "family": family,
    }


def instance_from_dict(d: dict) -> ProblemInstance:
    n, m = int(d["n"]), int(d["m"])
    entries = d.get("Q", [])
    if n > DENSE_LIMIT:
        if entries:
            i, j, v = zip(*entries)
        else:
            i, j, v = (), (), ()
        Q = sp.coo_array((np.array(v, float), (np.array(i, int), np.array(j, int))), shape=(n, n)).tocsr()
    else:
        Q = np.zeros((n, n))
        for i, j, v in entries:
            Q[int(i), int(j)] += float(v)
    A = np.zeros((m, n), dtype=np.int64)
    for j, i, v in d.get("A", []):
        A[int(j), int(i)] = int(v)
    family = dict(d.get("family") or {"name": "generic"})
    name = family.pop("name", "generic")
    return ProblemInstance(
        Q=Q,
        A=A,
        b=np.array(d.get("b", []), dtype=np.int64),
        L=d.get("L"),
        constant=d.get("constant", 0.0),
        family=name,
        params=family,
    )


def save_instance(inst: ProblemInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh)


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
