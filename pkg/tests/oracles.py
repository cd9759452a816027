"""Independent reference computations used by the tests."""
import math


def bisection_equilibrium(m12, m14, m23, k=1.0, l=1.0, iterations=200):
    """Four-species equilibrium by bisection on the scalar balance in ``x = a1``.

    ``g(x) = l x (m23 - m12 + x) - k (m12 - x)(m14 - x)`` is increasing on the
    interval where all four components are positive.
    """
    lo = max(0.0, m12 - m23)
    hi = min(m12, m14)

    def g(x):
        return l * x * (m23 - m12 + x) - k * (m12 - x) * (m14 - x)

    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    return (x, m12 - x, m23 - m12 + x, m14 - x)


def cosine_decay(x, L, k, d, t):
    """Exact solution ``cos(pi k x / L) exp(-d (pi k / L)^2 t)`` of the Neumann heat equation."""
    return math.cos(math.pi * k * x / L) * math.exp(-d * (math.pi * k / L) ** 2 * t)
