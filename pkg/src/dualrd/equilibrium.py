"""Detailed-balance equilibria fixed by the conservation laws."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryEquilibriumError, ConvergenceError
from .reaction import ReactionNetwork, reaction_rate


@dataclass(frozen=True)
class EquilibriumResult:
    values: np.ndarray
    masses: np.ndarray
    residual: float
    iterations: int = 0
    laws: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "masses": [float(m) for m in self.masses],
            "residual": float(self.residual),
            "iterations": int(self.iterations),
        }


def four_species_equilibrium(
    mass12: float, mass14: float, mass23: float, k: float = 1.0, l: float = 1.0
) -> EquilibriumResult:
    """Equilibrium of ``A1 + A3 <=> A2 + A4`` from the averaged masses.

    With ``x = a1``, the laws give ``a2 = m12 - x``, ``a4 = m14 - x`` and
    ``a3 = m23 - m12 + x``; the balance ``l a1 a3 = k a2 a4`` becomes

        (l - k) x^2 + (l (m23 - m12) + k (m12 + m14)) x - k m12 m14 = 0,

    which is linear when ``k = l``.  The root giving four positive
    components is returned.
    """
    m12, m14, m23 = (float(v) for v in (mass12, mass14, mass23))
    if min(m12, m14, m23) <= 0:
        raise ValueError(f"masses must be positive, got {(m12, m14, m23)}")
    if k <= 0 or l <= 0:
        raise ValueError("reaction rates must be positive")
    A = l - k
    B = l * (m23 - m12) + k * (m12 + m14)
    C = -k * m12 * m14
    if A == 0:
        roots = [-C / B] if B != 0 else []
    else:
        disc = B * B - 4 * A * C
        if disc < 0:
            roots = []
        else:
            # cancellation-free pair of roots
            s = -0.5 * (B + math.copysign(math.sqrt(disc), B))
            roots = [s / A] + ([C / s] if s != 0 else [])
    for x in roots:
        vals = np.array([x, m12 - x, m23 - m12 + x, m14 - x])
        if np.all(vals > 0):
            residual = float(abs(l * vals[0] * vals[2] - k * vals[1] * vals[3]))
            return EquilibriumResult(vals, np.array([m12, m14, m23]), residual)
    raise ValueError(
        f"no positive equilibrium for masses (m12, m14, m23) = {(m12, m14, m23)}; "
        "consistent masses need m14 + m23 > m12"
    )


def _extent_interval(c0: np.ndarray, nu: np.ndarray) -> tuple[float, float]:
    """Reaction extents ``s`` with ``c0 + s nu`` strictly positive."""
    lo, hi = -math.inf, math.inf
    for c, v in zip(c0, nu):
        if v > 0:
            lo = max(lo, -c / v)
        elif v < 0:
            hi = min(hi, c / -v)
    return lo, hi


def general_equilibrium(
    net: ReactionNetwork,
    averages,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> EquilibriumResult:
    """Positive equilibrium sharing the conserved quantities of ``averages``.

    Newton's method on ``y = log a`` for the system

        W exp(y) = W c0,    (alpha - beta) . y = log(k / l),

    where the rows of ``W`` span the conservation laws.  The start point is
    the middle of the segment ``c0 + s (beta - alpha)`` that stays in the
    positive orthant, so it satisfies the laws exactly.
    """
    net.require_opposite_signs()
    c0 = np.asarray(averages, dtype=float)
    if c0.shape != (net.n,) or np.any(c0 < 0) or not np.all(np.isfinite(c0)):
        raise ValueError("averages must be one nonnegative finite value per species")
    if net.k <= 0 or net.l <= 0:
        raise BoundaryEquilibriumError("a one-way reaction has no interior equilibrium")
    nu = net.stoich.astype(float)
    inert_empty = (nu == 0) & (c0 <= 0)
    if inert_empty.any():
        raise BoundaryEquilibriumError(f"species {np.flatnonzero(inert_empty).tolist()} are absent and inert")
    lo, hi = _extent_interval(c0, nu)
    scale = max(float(np.abs(c0).max()), 1e-300)
    if not (hi - lo > 1e-14 * scale):
        raise BoundaryEquilibriumError(
            f"conservation laws force a boundary equilibrium (extent interval [{lo}, {hi}])"
        )
    W = net.conservation_basis()
    target = W @ c0
    row_scale = np.abs(W) @ np.abs(c0)
    row_scale = np.where(row_scale > 0, row_scale, 1.0)
    log_ratio = math.log(net.k / net.l)
    y = np.log(c0 + 0.5 * (lo + hi) * nu)
    for it in range(1, max_iter + 1):
        a = np.exp(y)
        F = np.concatenate([W @ a - target, [np.dot(-nu, y) - log_ratio]])
        J = np.vstack([W * a[None, :], -nu[None, :]])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Newton matrix at iteration {it}") from exc
        big = np.abs(step).max()
        if big > 1.0:
            step /= big
        y = y + step
        if y.min() < -700:
            raise BoundaryEquilibriumError("Newton iterates approach the boundary of the positive orthant")
        a = np.exp(y)
        cons = np.abs(W @ a - target) / row_scale
        fwd = net.l * np.prod(a ** np.asarray(net.alpha))
        bwd = net.k * np.prod(a ** np.asarray(net.beta))
        balance = abs(fwd - bwd) / max(fwd, bwd)
        if cons.max() <= tol and balance <= tol and big < 1e-9:
            residual = float(abs(reaction_rate(net, a.reshape(-1, 1))[0]))
            return EquilibriumResult(a, target, residual, it, W)
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations")


def equilibrium_for_state(net: ReactionNetwork, averages) -> EquilibriumResult:
    """Closed form for the four-species network, Newton otherwise."""
    avg = np.asarray(averages, dtype=float)
    if net.alpha == (1, 0, 1, 0) and net.beta == (0, 1, 0, 1):
        return four_species_equilibrium(avg[0] + avg[1], avg[0] + avg[3], avg[1] + avg[2], k=net.k, l=net.l)
    return general_equilibrium(net, avg)
