"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

import math

import numpy as np

from .exceptions import ConfigError, ModelError

ROW_SUM_TOL = 1e-9


def check_positive(value, name, strict=True):
    value = float(value)
    if not math.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ConfigError(f"{name} must be finite and {bound}, got {value!r}")
    return value


def check_perfect_square(m, name="m"):
    m = int(m)
    k = math.isqrt(m) if m > 0 else 0
    if m <= 0 or k * k != m:
        raise ConfigError(f"{name} must be a positive perfect square, got {m}")
    return k


def check_position(position):
    p = np.asarray(position, dtype=float).reshape(-1)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise ValueError(f"position must be a finite 2-vector, got {position!r}")
    return p


def check_row_stochastic(row, tol=ROW_SUM_TOL, what="transition row"):
    row = np.asarray(row, dtype=float)
    if np.any(row < 0) or abs(row.sum() - 1.0) > tol:
        raise ModelError(f"{what} must be nonnegative and sum to 1 (sum={row.sum():.12g})")
    return row


def check_server_id(action, num_servers, name="action"):
    a = int(action)
    if not 0 <= a < num_servers:
        raise ConfigError(f"{name} must be a server id in 0..{num_servers - 1}, got {action!r}")
    return a
