"""Benchmark instance generators: number partitioning, TSP and portfolio optimization."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_rng
from .problem import ProblemInstance

MNPP_VALUE_RANGE = (0.0, 1e3)
TSP_CIRCLE_RADIUS = 1e6
TSP_SQUARE_SIDE = 2e6


@dataclass
class MnppSpec:
    N: int
    P: int
    values: np.ndarray | None = None
    seed: int | None = None

    def resolved_values(self):
        if self.values is not None:
            c = np.asarray(self.values, dtype=float)
        else:
            c = check_rng(self.seed).uniform(*MNPP_VALUE_RANGE, size=self.N)
        if self.N < 1 or self.P < 2:
            raise ValueError(f"MNPP needs N >= 1 and P >= 2, got N={self.N}, P={self.P}")
        if c.shape != (self.N,) or np.any(c <= 0):
            raise ValueError("MNPP values must be N positive numbers")
        return c


@dataclass
class TspSpec:
    n_v: int
    weights: np.ndarray
    layout: str = "file"
    seed: int | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.n_v < 2 or w.shape != (self.n_v, self.n_v):
            raise ValueError(f"TSP needs n_v >= 2 and an n_v x n_v weight matrix, got {w.shape}")
        if np.any(w < 0) or not np.allclose(w, w.T) or np.any(np.diag(w) != 0):
            raise ValueError("TSP edge weights must be symmetric, non-negative with zero diagonal")
        self.weights = w


PRICE_QUANTUM = 1e-4


@dataclass
class PoSpec:
    """Markowitz instance before binary encoding.

    ``mu`` and ``sigma`` are the raw return statistics; :func:`gen_po`
    rescales them by the number of budget chunks ``2^w - 1``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    w: int = 3
    gamma: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        self.sigma = np.asarray(self.sigma, dtype=float)
        N = self.mu.shape[0]
        if self.sigma.shape != (N, N):
            raise ValueError(f"sigma must be {N}x{N}, got {self.sigma.shape}")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-9):
            raise ValueError("sigma must be symmetric")
        # rounding entries to PRICE_QUANTUM shifts eigenvalues by at most N*q/2
        if N and np.linalg.eigvalsh(self.sigma).min() < -(1e-9 + 0.5 * N * PRICE_QUANTUM):
            raise ValueError("sigma must be positive semidefinite")
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @property
    def N(self):
        return self.mu.shape[0]


@dataclass
class PriceHistory:
    assets: list
    prices: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)
        if self.prices.ndim != 2 or self.prices.shape[1] != len(self.assets):
            raise ValueError("prices must be a T x N table matching the asset list")
        if self.prices.shape[0] < 2:
            raise ValueError("need at least two time steps")
        if not np.all(np.isfinite(self.prices)):
            raise ValueError("price table has missing entries")
        if np.any(self.prices <= 0):
            raise ValueError("prices must be positive")


# -- MNPP ---------------------------------------------------------------------


def gen_mnpp(spec: MnppSpec) -> ProblemInstance:
    """Squared deviation of every subset sum from the even share, one-hot rows.

    Variable ``(i, p)`` lives at index ``i * P + p``.
    """
    c = spec.resolved_values()
    N, P = spec.N, spec.P
    target = c.sum() / P
    n = N * P
    Q = np.zeros((n, n))
    idx = np.arange(N) * P
    cc = np.outer(c, c)
    for p in range(P):
        Q[np.ix_(idx + p, idx + p)] = cc
    L = np.repeat(-2.0 * target * c, P)
    A = np.kron(np.eye(N, dtype=np.int64), np.ones((1, P), dtype=np.int64))
    b = np.ones(N, dtype=np.int64)
    params = {"N": N, "P": P, "values": c.tolist()}
    return ProblemInstance(Q=Q, A=A, b=b, L=L, constant=P * target**2, family="mnpp", params=params)


def mnpp_size_for_bits(n_bits: int):
    """Largest (N, P) with ``N = 8P`` and ``N*P <= n_bits``."""
    P = max(2, int(math.isqrt(n_bits // 8)))
    return 8 * P, P


# -- TSP ----------------------------------------------------------------------


def _tsp_instance(weights, layout, extra=None) -> ProblemInstance:
    """Tour cost over time slots ``t`` with cyclic ``t + 1``; variable ``(t, i)`` at ``t * n_v + i``."""
    w = np.asarray(weights, dtype=float)
    n_v = w.shape[0]
    n = n_v * n_v
    Q = np.zeros((n, n))
    off = w.copy()
    np.fill_diagonal(off, 0.0)
    for t in range(n_v):
        s = (t + 1) % n_v
        Q[t * n_v : (t + 1) * n_v, s * n_v : (s + 1) * n_v] += off
    eye = np.eye(n_v, dtype=np.int64)
    ones = np.ones((1, n_v), dtype=np.int64)
    A = np.vstack([np.kron(eye, ones), np.kron(ones, eye)])
    b = np.ones(2 * n_v, dtype=np.int64)
    params = {"n_v": n_v, "layout": layout, "weights": w.tolist(), **(extra or {})}
    return ProblemInstance(Q=Q, A=A, b=b, family="tsp", params=params)


def _euclidean(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(-1))


def gen_tsp_circle(n_v: int, radius: float = TSP_CIRCLE_RADIUS) -> ProblemInstance:
    if n_v < 2 or radius <= 0:
        raise ValueError("need n_v >= 2 and a positive radius")
    ang = 2 * np.pi * np.arange(n_v) / n_v
    pts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    return _tsp_instance(_euclidean(pts), "circle", {"radius": radius})


def gen_tsp_random(n_v: int, side: float = TSP_SQUARE_SIDE, seed=None) -> ProblemInstance:
    if n_v < 2 or side <= 0:
        raise ValueError("need n_v >= 2 and a positive side length")
    pts = check_rng(seed).uniform(0.0, side, size=(n_v, 2))
    return _tsp_instance(_euclidean(pts), "random", {"side": side, "seed": seed})


def gen_tsp(spec: TspSpec) -> ProblemInstance:
    return _tsp_instance(spec.weights, spec.layout)


def tour_cost(weights, order) -> float:
    w = np.asarray(weights)
    order = list(order)
    return float(sum(w[order[k], order[(k + 1) % len(order)]] for k in range(len(order))))


def tour_bitstring(order) -> np.ndarray:
    """Bitstring with city ``order[t]`` visited at time ``t``."""
    n_v = len(order)
    x = np.zeros((n_v, n_v), dtype=np.uint8)
    x[np.arange(n_v), order] = 1
    return x.reshape(-1)


class TsplibError(ValueError):
    pass


_SECTION_RE = re.compile(r"^([A-Z_]+)\s*(?::\s*(.*))?$")


def parse_tsplib(text) -> TspSpec:
    """Parse the EUC_2D and EXPLICIT/FULL_MATRIX subset of TSPLIB95."""
    if isinstance(text, bytes):
        text = text.decode()
    header = {}
    coords = []
    numbers = []
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        m = _SECTION_RE.match(line)
        if m and (m.group(2) is not None or line.endswith("SECTION")):
            key, value = m.group(1), m.group(2)
            if key.endswith("_SECTION"):
                section = key
            else:
                header[key] = value.strip()
                section = None
            continue
        if section == "NODE_COORD_SECTION":
            parts = line.split()
            if len(parts) != 3:
                raise TsplibError(f"malformed coordinate line: {line!r}")
            coords.append((float(parts[1]), float(parts[2])))
        elif section == "EDGE_WEIGHT_SECTION":
            try:
                numbers.extend(float(tok) for tok in line.split())
            except ValueError as exc:
                raise TsplibError(f"malformed edge weight line: {line!r}") from exc
        elif section is not None:
            continue
        else:
            raise TsplibError(f"unexpected line outside any section: {line!r}")

    if "DIMENSION" not in header:
        raise TsplibError("missing DIMENSION")
    n_v = int(header["DIMENSION"])
    kind = header.get("EDGE_WEIGHT_TYPE", "")
    if kind == "EUC_2D":
        if len(coords) != n_v:
            raise TsplibError(f"DIMENSION is {n_v} but {len(coords)} coordinates were given")
        # TSPLIB95 nint rounding
        w = np.floor(_euclidean(np.array(coords)) + 0.5)
    elif kind == "EXPLICIT":
        fmt = header.get("EDGE_WEIGHT_FORMAT", "")
        if fmt != "FULL_MATRIX":
            raise TsplibError(f"unsupported EDGE_WEIGHT_FORMAT {fmt!r}")
        if len(numbers) != n_v * n_v:
            raise TsplibError(f"expected {n_v * n_v} matrix entries, got {len(numbers)}")
        w = np.array(numbers).reshape(n_v, n_v)
    else:
        raise TsplibError(f"unsupported EDGE_WEIGHT_TYPE {kind!r}")
    return TspSpec(n_v=n_v, weights=w, layout="file")


# -- Portfolio optimization ---------------------------------------------------



def read_price_csv(text) -> PriceHistory:
    """Header row of asset identifiers, then one row of decimal prices per time step."""
    if isinstance(text, bytes):
        text = text.decode()
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ValueError("empty price file")
    assets = [a.strip() for a in rows[0]]
    try:
        prices = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"non-numeric or missing price: {exc}") from exc
    if prices.ndim != 2 or prices.shape[1] != len(assets):
        raise ValueError("ragged price table")
    return PriceHistory(assets, prices)


def returns_from_prices(h: PriceHistory):
    """Mean returns and ``1/(T-1)`` covariance of simple returns, rounded to 1e-4."""
    P = h.prices
    if P.shape[0] < 3:
        raise ValueError("need at least three prices per asset for a covariance")
    r = (P[1:] - P[:-1]) / P[:-1]
    mu = r.mean(axis=0)
    sigma = np.atleast_2d(np.cov(r, rowvar=False, ddof=1))
    return _quantize(mu), _quantize(sigma)


def _quantize(a):
    # +0.0 clears negative zeros left by rounding
    return np.round(np.asarray(a) / PRICE_QUANTUM) * PRICE_QUANTUM + 0.0


def synthetic_po_spec(N: int, w: int = 3, gamma: float = 1.0, factors: int = 3, seed=None) -> PoSpec:
    """Random PSD covariance ``G'G`` and returns uniform on [-0.05, 0.05]."""
    rng = check_rng(seed)
    G = rng.normal(scale=0.05, size=(factors, N))
    return PoSpec(mu=rng.uniform(-0.05, 0.05, size=N), sigma=G.T @ G, w=w, gamma=gamma, seed=seed)


def gen_po(spec: PoSpec) -> ProblemInstance:
    """Binary-encoded ``-mu'x + gamma x'Sigma x`` with ``sum x = 2^w - 1``.

    Asset ``a`` owns bits ``a*w .. a*w + w - 1`` with weights ``2^j``.
    """
    N, w = spec.N, spec.w
    chunks = 2**w - 1
    mu = spec.mu / chunks
    sigma = spec.sigma / chunks**2
    weights = 2.0 ** np.arange(w)
    E = np.kron(np.eye(N), weights[None, :])  # integer vector = E @ bits
    Q = spec.gamma * (E.T @ sigma @ E)
    L = -(E.T @ mu)
    A = np.kron(np.ones((1, N)), weights[None, :]).astype(np.int64)
    b = np.array([chunks], dtype=np.int64)
    params = {"N": N, "w": w, "gamma": float(spec.gamma), "mu": spec.mu.tolist(), "sigma": spec.sigma.tolist()}
    return ProblemInstance(Q=Q, A=A, b=b, L=L, family="po", params=params)


def po_encode(counts, w: int) -> np.ndarray:
    """Binary encoding of per-asset integer allocations (little-endian bits per asset)."""
    counts = np.asarray(counts, dtype=np.int64)
    bits = (counts[..., :, None] >> np.arange(w)) & 1
    return bits.reshape(*counts.shape[:-1], -1).astype(np.uint8)


def po_decode(x, w: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return (x.reshape(*x.shape[:-1], -1, w) << np.arange(w)).sum(-1)
