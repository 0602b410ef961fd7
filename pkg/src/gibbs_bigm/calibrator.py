"""Penalty-weight calibration for Gibbs-like samplers, evaluated in log space.

Three quantities bound, up to a common positive factor, the probability of
sampling (i) a feasible point with objective at most ``E_f`` (``B_low``),
(ii) a feasible point above ``E_f`` (``B_high``) and (iii) an infeasible
point (``B_inf(M)``). Any ``M`` with

    B_inf(M) + B_high <= (1 - eta) / eta * B_low

makes the sampler succeed with probability at least ``eta``. All sums are
carried as log-sum-exp so that huge degeneracies and tiny Boltzmann factors
never leave floating-point range.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from ._validation import check_beta, check_eta, check_rng
from .degeneracy import DegeneracyTable, degeneracy_table, feasible_count
from .problem import (
    ProblemInstance,
    big_m_l1,
    objective_energies,
    objective_lower_bound_trivial,
    penalty_upper_bound,
)
from .spectral import (
    MAX_AUTO_BINS,
    SpectralWeights,
    bin_energies,
    delta_floor,
    exact_feasible_energies,
    feasible_energies,
)

log = logging.getLogger(__name__)

MAX_DOUBLINGS = 60
ROOT_RTOL = 1e-9
DEFAULT_EPS_REDUCE = 0.01
DEFAULT_V_CUT = {"mnpp": 4, "tsp": 4, "po": 16}


class NoFeasibleTarget(ValueError):
    """No feasible bin lies entirely below the energy threshold."""


def _lse(values) -> float:
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return -math.inf
    return float(logsumexp(finite))


# -- bounds -------------------------------------------------------------------


def low_bin_count(spectral: SpectralWeights, E_f: float) -> int:
    """Number of leading bins that lie entirely at or below ``E_f``.

    A bin ``[E_LB + e, E_LB + e + delta)`` counts as low only when its upper
    edge does not exceed ``E_f``; a bin straddling ``E_f`` goes to the high
    side, where it is bounded from above.
    """
    nbins = spectral.counts.size
    if E_f == math.inf:
        return nbins
    return max(0, min(nbins, int(math.floor((E_f - spectral.E_LB) / spectral.delta))))


def log_bound_feasible_low(spectral: SpectralWeights, beta: float, E_f: float = math.inf) -> float:
    k = low_bin_count(spectral, E_f)
    if k == 0:
        raise NoFeasibleTarget(f"no bin of width {spectral.delta} fits below E_f={E_f}")
    e = spectral.lattice[:k]
    return _lse(spectral.log_weights[:k] - beta * (e + spectral.delta))


def log_bound_feasible_high(spectral: SpectralWeights, beta: float, E_f: float = math.inf) -> float:
    k = low_bin_count(spectral, E_f)
    e = spectral.lattice[k:]
    return _lse(spectral.log_weights[k:] - beta * e)


def log_bound_infeasible(deg: DegeneracyTable, beta: float, M: float) -> float:
    if M < 0:
        raise ValueError("M must be non-negative")
    v = np.arange(1, deg.v_cut + 1)
    return _lse(deg.log_values[1:] - beta * M * v)


@dataclass
class CalibrationBounds:
    """Log-bounds at a fixed ``beta`` and ``E_f``; ``log_B_infeasible`` is evaluated lazily in ``M``."""

    beta: float
    E_f: float
    log_B_low: float
    log_B_high: float
    degeneracy: DegeneracyTable = field(repr=False)
    spectral: SpectralWeights = field(repr=False)

    @classmethod
    def compute(cls, spectral, degeneracy, beta, E_f=math.inf):
        return cls(
            beta=beta,
            E_f=E_f,
            log_B_low=log_bound_feasible_low(spectral, beta, E_f),
            log_B_high=log_bound_feasible_high(spectral, beta, E_f),
            degeneracy=degeneracy,
            spectral=spectral,
        )

    def log_B_infeasible(self, M):
        return log_bound_infeasible(self.degeneracy, self.beta, M)


def log_g(M: float, bounds: CalibrationBounds, eta: float) -> float:
    """Log-space criterion ``G(M)``; same sign and root as :func:`g_linear`."""
    if not math.isfinite(bounds.log_B_low):
        return math.inf
    bad = _lse([bounds.log_B_infeasible(M), bounds.log_B_high])
    return bad - math.log((1.0 - eta) / eta) - bounds.log_B_low


def g_linear(M: float, degeneracy: DegeneracyTable, spectral: SpectralWeights, beta: float, eta: float, E_f=math.inf) -> float:
    """Direct evaluation of ``B_inf(M) + B_high - (1 - eta)/eta * B_low``.

    Uses the exact integer counts and plain exponentials; kept as an
    independent cross-check of :func:`log_g`. Overflows for large instances.
    """
    if degeneracy.counts is None:
        raise ValueError("linear evaluation needs exact degeneracy counts")
    k = low_bin_count(spectral, E_f)
    scale = math.exp(spectral.log_scale)
    b_inf = sum(float(c) * math.exp(-beta * M * v) for v, c in enumerate(degeneracy.counts) if v >= 1 and c)
    e = spectral.lattice
    b_low = sum(float(c) * scale * math.exp(-beta * (e[i] + spectral.delta)) for i, c in enumerate(spectral.counts[:k]) if c)
    b_high = sum(float(c) * scale * math.exp(-beta * e[k + i]) for i, c in enumerate(spectral.counts[k:]) if c)
    return b_inf + b_high - (1.0 - eta) / eta * b_low


def eta_exist(bounds: CalibrationBounds) -> float:
    """Largest target probability for which some finite ``M`` can succeed."""
    if not math.isfinite(bounds.log_B_low):
        return 0.0
    return float(expit(bounds.log_B_low - bounds.log_B_high))


# -- root finding -------------------------------------------------------------


def bisect_decreasing(f, lo, hi, rtol=ROOT_RTOL, max_iter=200):
    """Shrink ``[lo, hi]`` with ``f(lo) > 0 >= f(hi)``; returns ``(hi, iterations)``.

    The upper endpoint is returned so that ``f(result) <= 0`` always holds.
    """
    it = 0
    while hi - lo > rtol * abs(hi) and it < max_iter:
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0:
            hi = mid
        else:
            lo = mid
        it += 1
    return hi, it


# -- configuration and results -----------------------------------------------


@dataclass
class CalibrationConfig:
    beta: float
    eta: float
    E_f: float = math.inf
    v_cut: int | None = None
    n_samples: int = 20_000
    delta: float | None = None
    seed: int | None = None
    mode: str = "guaranteed"
    exact_spectral: bool = False
    auto_reduce: bool = False
    eps_reduce: float = DEFAULT_EPS_REDUCE
    lower_bound: object = "trivial"
    degeneracy_samples: int = 100_000

    def __post_init__(self):
        self.beta = check_beta(self.beta)
        self.eta = check_eta(self.eta)
        self.E_f = float(self.E_f)
        if self.mode not in ("guaranteed", "practical"):
            raise ValueError(f"mode must be 'guaranteed' or 'practical', got {self.mode!r}")
        if self.v_cut is not None and self.v_cut < 1:
            raise ValueError("v_cut must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.eps_reduce < 1:
            raise ValueError("eps_reduce must lie in (0, 1)")


@dataclass
class CalibrationResult:
    M_star: float | None
    status: str
    eta: float
    eta_used: float
    eta_exist: float
    E_LB: float
    delta: float
    v_cut: int
    log_B_low: float
    log_B_high: float
    M_l1: float
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("ok", "trivial", "reduced_eta")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("log_B_low", "log_B_high", "eta_exist"):
            d[key] = _json_float(d[key])
        return d


def _json_float(x):
    if x is None or math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


# -- pipeline -----------------------------------------------------------------


def lower_bound_provider(inst: ProblemInstance, mode="trivial", value=None, seed=None, n_checks=1000) -> float:
    """Objective lower bound ``E_LB``.

    ``mode="trivial"`` uses the structural bound; ``mode="external"`` accepts a
    caller-supplied ``value`` (e.g. from an SDP relaxation) after checking it
    against the objective of ``n_checks`` random bitstrings.
    """
    if mode == "trivial":
        return objective_lower_bound_trivial(inst)
    if mode != "external":
        raise ValueError(f"unknown lower bound mode {mode!r}")
    if value is None:
        raise ValueError("external lower bound mode needs a value")
    value = float(value)
    X = check_rng(seed).integers(0, 2, size=(n_checks, inst.n), dtype=np.uint8)
    lowest = float(objective_energies(inst, X).min())
    if value > lowest:
        raise ValueError(f"supplied lower bound {value} exceeds an observed objective {lowest}")
    return value


def default_v_cut(inst: ProblemInstance) -> int:
    return DEFAULT_V_CUT.get(inst.family, penalty_upper_bound(inst))


def _resolve_lower_bound(inst, spec, seed):
    if isinstance(spec, str):
        return lower_bound_provider(inst, spec)
    return lower_bound_provider(inst, "external", spec, seed=seed)


def _auto_delta(E_LB, energies, beta, floor=None):
    width = (float(energies.max()) - E_LB) / MAX_AUTO_BINS
    candidates = [width]
    if floor is not None:
        candidates.append(floor)
    delta = max(candidates)
    if not delta > 0:
        # flat spectrum: any positive width gives a single bin
        delta = math.log(2.0) / (2.0 * beta)
    return delta


def prepare_spectral(inst: ProblemInstance, cfg: CalibrationConfig, E_LB: float):
    """Feasible energies binned per ``cfg``; returns ``(SpectralWeights, diagnostics)``."""
    if cfg.exact_spectral:
        energies = exact_feasible_energies(inst)
        log_F = math.log(energies.size) if energies.size else -math.inf
        source = "exact"
    else:
        energies = feasible_energies(inst, cfg.n_samples, cfg.seed)
        log_F = math.log(feasible_count(inst))
        source = "sampled"
    diag = {"spectral_source": source}
    if cfg.delta is not None:
        delta = float(cfg.delta)
    else:
        floor = None
        if cfg.mode == "guaranteed" and source == "sampled":
            floor = delta_floor(inst, cfg.beta, E_LB=E_LB, log_feasible=log_F)
            diag["delta_floor"] = floor
        delta = _auto_delta(E_LB, energies, cfg.beta, floor)
    spectral = bin_energies(energies, E_LB, delta, log_F, source=source, seed=cfg.seed)
    # the lattice ends at the largest sampled energy; unsampled mass above is not bounded
    diag["lattice_truncated_at"] = spectral.E_max
    return spectral, diag


def _solve_for_m(inst, bounds, eta, M_l1):
    """Smallest bracketed ``M >= 0`` with ``G(M) <= 0``; returns ``(M, status, iterations, doublings)``."""
    G = lambda M: log_g(M, bounds, eta)  # noqa: E731
    if G(0.0) <= 0:
        return 0.0, "trivial", 0, 0
    hi = M_l1
    doublings = 0
    while G(hi) > 0:
        if doublings >= MAX_DOUBLINGS:
            return None, "no_solution", 0, doublings
        hi *= 2.0
        doublings += 1
    M, it = bisect_decreasing(G, 0.0, hi)
    return M, "ok", it, doublings


def calibrate_m(
    inst: ProblemInstance,
    cfg: CalibrationConfig,
    spectral: SpectralWeights | None = None,
    degeneracy: DegeneracyTable | None = None,
) -> CalibrationResult:
    """Penalty weight ``M*`` such that a Gibbs sampler at ``cfg.beta`` meets ``cfg.eta``.

    Precomputed ``spectral`` weights or a ``degeneracy`` table may be passed
    in; otherwise they are built from the instance. Returns a result whose
    ``status`` is ``ok``, ``trivial`` (``M* = 0`` suffices), ``no_solution``
    (``eta >= eta_exist``) or ``reduced_eta`` (rerun at
    ``eta_exist - eps_reduce`` when ``cfg.auto_reduce`` is set).
    """
    diag = {}
    if spectral is None:
        E_LB = _resolve_lower_bound(inst, cfg.lower_bound, cfg.seed)
        if cfg.E_f < E_LB:
            raise NoFeasibleTarget(f"E_f={cfg.E_f} lies below the objective lower bound {E_LB}")
        spectral, sdiag = prepare_spectral(inst, cfg, E_LB)
        diag.update(sdiag)
    E_LB = spectral.E_LB

    v_cut = cfg.v_cut if cfg.v_cut is not None else default_v_cut(inst)
    if degeneracy is None:
        degeneracy = degeneracy_table(inst, v_cut, samples=cfg.degeneracy_samples, seed=cfg.seed)
    elif degeneracy.v_cut != v_cut:
        degeneracy = degeneracy.truncated(v_cut) if degeneracy.v_cut > v_cut else degeneracy.padded(v_cut)
    diag.update(degeneracy_source=degeneracy.source, degeneracy_extrapolated=degeneracy.extrapolated)
    diag.update(n_samples=spectral.n_samples, seed=cfg.seed, n_bins=int(spectral.counts.size))

    bounds = CalibrationBounds.compute(spectral, degeneracy, cfg.beta, cfg.E_f)
    exist = eta_exist(bounds)

    def run(eta):
        M_l1 = big_m_l1(inst, cfg.beta, eta)
        if eta >= exist:
            return None, "no_solution", 0, 0, M_l1
        return (*_solve_for_m(inst, bounds, eta, M_l1), M_l1)

    M, status, it, doublings, M_l1 = run(cfg.eta)
    eta_used = cfg.eta
    if status == "no_solution" and cfg.auto_reduce:
        reduced = exist - cfg.eps_reduce
        if reduced > 0:
            log.info("eta=%.4g unattainable (eta_exist=%.4g); retrying with %.4g", cfg.eta, exist, reduced)
            M, status, it, doublings, M_l1 = run(reduced)
            eta_used = reduced
            if status in ("ok", "trivial"):
                status = "reduced_eta"
    diag["bracket_doublings"] = doublings
    if M is not None:
        diag["log_B_infeasible_at_M"] = _json_float(bounds.log_B_infeasible(M))
    return CalibrationResult(
        M_star=M,
        status=status,
        eta=cfg.eta,
        eta_used=eta_used,
        eta_exist=exist,
        E_LB=E_LB,
        delta=spectral.delta,
        v_cut=v_cut,
        log_B_low=bounds.log_B_low,
        log_B_high=bounds.log_B_high,
        M_l1=M_l1,
        iterations=it,
        diagnostics=diag,
    )


@dataclass
class BetaCalibrationResult:
    beta_star: float | None
    M: float
    eta: float
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def calibrate_beta(
    inst: ProblemInstance,
    cfg: CalibrationConfig,
    M: float,
    spectral: SpectralWeights | None = None,
    degeneracy: DegeneracyTable | None = None,
) -> BetaCalibrationResult:
    """Inverse temperature at which a fixed penalty ``M`` meets ``cfg.eta``.

    The spectral histogram and degeneracy table are built once and only the
    Boltzmann factors are re-evaluated for each trial ``beta``. ``cfg.beta``
    only seeds the bin-width choice; ``cfg.mode`` is treated as practical.
    Returns ``beta_star=None`` when no bracket is found.
    """
    if M < 0:
        raise ValueError("M must be non-negative")
    if spectral is None:
        E_LB = _resolve_lower_bound(inst, cfg.lower_bound, cfg.seed)
        if cfg.E_f < E_LB:
            raise NoFeasibleTarget(f"E_f={cfg.E_f} lies below the objective lower bound {E_LB}")
        practical = CalibrationConfig(**{**asdict(cfg), "mode": "practical"})
        spectral, _ = prepare_spectral(inst, practical, E_LB)
    v_cut = cfg.v_cut if cfg.v_cut is not None else default_v_cut(inst)
    if degeneracy is None:
        degeneracy = degeneracy_table(inst, v_cut, samples=cfg.degeneracy_samples, seed=cfg.seed)

    def H(beta):
        return log_g(M, CalibrationBounds.compute(spectral, degeneracy, beta, cfg.E_f), cfg.eta)

    hi = 1.0
    steps = 0
    while H(hi) > 0:
        if steps >= MAX_DOUBLINGS:
            return BetaCalibrationResult(None, M, cfg.eta, diagnostics={"doublings": steps})
        hi *= 2.0
        steps += 1
    lo = hi / 2.0
    halvings = 0
    while H(lo) <= 0:
        if halvings >= MAX_DOUBLINGS:
            # G <= 0 down to vanishing beta: any temperature works
            return BetaCalibrationResult(lo, M, cfg.eta, diagnostics={"halvings": halvings})
        hi, lo = lo, lo / 2.0
        halvings += 1
    beta_star, it = bisect_decreasing(H, lo, hi)
    return BetaCalibrationResult(beta_star, M, cfg.eta, it, {"doublings": steps, "halvings": halvings, "delta": spectral.delta})
