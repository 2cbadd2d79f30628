"""Single-mineral precipitation: Salt <=> A+ + B- with solubility product K."""
from __future__ import annotations

import math

LOGK_SALT = 1.570


def salt_equilibrium(total_a: float, total_b: float, logK: float = LOGK_SALT) -> float:
    """Amount of salt precipitated (mol/L) from totals of its two ions.

    Zero when the solution is undersaturated, otherwise the root ``p`` of
    ``(total_a - p) * (total_b - p) = K`` lying below ``min(total_a, total_b)``.
    """
    if total_a < 0 or total_b < 0:
        raise ValueError(f"totals must be >= 0, got {total_a}, {total_b}")
    if not (math.isfinite(total_a) and math.isfinite(total_b)):
        raise ValueError("totals must be finite")
    K = 10.0 ** logK
    excess = total_a * total_b - K
    if excess <= 0.0:
        return 0.0
    # smaller root of p^2 - (a + b) p + (ab - K), written without cancellation
    disc = math.sqrt((total_a - total_b) ** 2 + 4.0 * K)
    return 2.0 * excess / (total_a + total_b + disc)
