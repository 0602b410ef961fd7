"""Input validation helpers shared by the functional API and the estimators."""

import os

import numpy as np

DEFAULT_ENUMERATION_CAP = 24
CAP_ENV_VAR = "GIBBS_BIGM_ENUM_CAP"


class EnumerationCapExceeded(ValueError):
    """Raised when an exhaustive computation would exceed the enumeration cap."""


def enumeration_cap():
    """Maximum number of bits for exhaustive 2^n enumeration.

    Overridable through the ``GIBBS_BIGM_ENUM_CAP`` environment variable.
    """
    raw = os.environ.get(CAP_ENV_VAR)
    if raw is None:
        return DEFAULT_ENUMERATION_CAP
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{CAP_ENV_VAR} must be an integer, got {raw!r}") from exc


def check_enumerable(n, cap=None):
    cap = enumeration_cap() if cap is None else cap
    if n > cap:
        raise EnumerationCapExceeded(f"n={n} exceeds the enumeration cap of {cap} bits")


def check_bitstrings(X, n):
    """Return ``X`` as a 2-D uint8 array of shape (k, n); accepts a single bitstring.

    Raises ValueError on wrong length or non-binary entries.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n:
        raise ValueError(f"bitstrings must have length {n}, got shape {X.shape}")
    if X.size and not np.all((X == 0) | (X == 1)):
        raise ValueError("bitstrings must contain only 0 and 1")
    return X.astype(np.uint8, copy=False)


def check_beta(beta):
    beta = float(beta)
    if not beta > 0 or not np.isfinite(beta):
        raise ValueError(f"beta must be a positive finite number, got {beta}")
    return beta


def check_eta(eta):
    eta = float(eta)
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return eta


def check_rng(seed):
    """Turn ``None``, an int or a Generator into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
