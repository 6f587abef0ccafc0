"""Pathwise squared-queue bounds used to sanity-check queue recursions.

Each virtual queue update has the form ``Q' = [Q + x - y]`` (optionally
projected at zero) with ``x, y >= 0``, which implies
``Q'^2 - Q^2 <= x^2 + y^2 + 2 Q (x - y)``.
"""

import numpy as np

REL_TOL = 1e-9


def square_bound_slack(q_before, q_after, x, y):
    """``rhs - lhs`` of the bound; negative values are violations (vectorized)."""
    q_before = np.asarray(q_before, dtype=float)
    lhs = np.asarray(q_after, dtype=float) ** 2 - q_before**2
    rhs = np.asarray(x) ** 2 + np.asarray(y) ** 2 + 2.0 * q_before * (np.asarray(x) - np.asarray(y))
    return rhs - lhs


def count_violations(q_before, q_after, x, y):
    slack = square_bound_slack(q_before, q_after, x, y)
    scale = np.maximum.reduce(
        [np.abs(np.asarray(q_before, dtype=float)) ** 2, np.asarray(q_after, dtype=float) ** 2,
         np.ones_like(slack)]
    )
    return int(np.count_nonzero(slack < -REL_TOL * scale))


def max_weight_triples(a, b, c):
    """Slack of ``(max(a-b,0)+c)^2 <= a^2+b^2+c^2+2a(c-b)`` on arrays of triples."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    lhs = (np.maximum(a - b, 0.0) + c) ** 2
    rhs = a**2 + b**2 + c**2 + 2.0 * a * (c - b)
    return rhs - lhs
