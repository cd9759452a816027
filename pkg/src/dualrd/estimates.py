"""Closed-form constants, smallness conditions and exponent recursions.

Everything here is a pure function of its inputs.  Infinite values are kept
as ``math.inf`` in Python and serialised as the string ``"inf"``.

Conditions that involve a regularity constant ``C_{m,q}`` are certified only
when the constant supplied is an upper bound (analytic or interpolated).  A
condition checked with an empirical lower estimate is reported as plausible.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from .errors import HypothesisError
from .heat import RegularityConstant, analytic_Cm2, interpolated_Cmr
from .reaction import ReactionNetwork

CProvider = Callable[[float, float], Optional[RegularityConstant]]


def jsonable(value):
    """Replace infinities by ``"inf"`` (recursively) so reports stay valid JSON."""
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, RegularityConstant):
        return jsonable(value.to_dict())
    return value


def holder_conjugate(p: float) -> float:
    if p <= 1:
        raise ValueError(f"Holder conjugate needs p > 1, got {p}")
    return math.inf if math.isinf(p) else p / (p - 1.0)


# --------------------------------------------------------------------------
# duality prefactor
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DualityReport:
    a: float
    b: float
    q: float
    C: RegularityConstant
    condition_lhs: float
    condition_holds: bool
    D: float | None
    prefactor: float | None
    certified: bool
    message: str
    anchor: str = "duality.forward_lp_bound"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["C"] = self.C.to_dict()
        return jsonable(out)


def duality_prefactor(a: float, b: float, q: float, C: RegularityConstant) -> DualityReport:
    """``D = C / (1 - C (b - a)/2)`` and the forward prefactor ``1 + b D``.

    ``C`` must be a constant for ``m = (a + b)/2`` and exponent ``q``.
    """
    if not (0 < a <= b < math.inf):
        raise ValueError(f"need 0 < a <= b, got a={a}, b={b}")
    if not (1 < q <= 2):
        raise ValueError(f"q must lie in ]1, 2], got {q}")
    m = 0.5 * (a + b)
    if not math.isclose(C.m, m, rel_tol=1e-12):
        raise ValueError(f"constant given for m={C.m}, expected the midpoint m={m}")
    if not math.isclose(C.q, q, rel_tol=1e-12):
        raise ValueError(f"constant given for q={C.q}, expected q={q}")
    lhs = C.value * (b - a) / 2.0
    holds = lhs < 1.0
    if holds:
        D = C.value / (1.0 - lhs)
        prefactor = 1.0 + b * D
        msg = f"C*(b-a)/2 = {lhs:.6g} < 1"
    else:
        D = prefactor = None
        msg = f"C*(b-a)/2 = {lhs:.6g} >= 1: spread b-a = {b - a:g} is not below 2/C = {2 / C.value:.6g}"
    return DualityReport(a, b, q, C, lhs, holds, D, prefactor, holds and C.is_upper_bound, msg)


# --------------------------------------------------------------------------
# two-dimensional exponent selection
# --------------------------------------------------------------------------

SAFETY = 0.9


@dataclass(frozen=True)
class ExponentChoice:
    a: float
    b: float
    C_threehalves: float
    p_prime: float
    mC: float
    margin: float  # upper limit on 2 - p' ; inf when every p' in [3/2, 2] works
    any_admissible: bool
    interpolated_lhs: float  # C_{m,p'} (b-a)/2 with the interpolated bound
    anchor: str = "exponent.two_dimensional_selection"

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


def select_2d_exponent(a: float, b: float, C_threehalves: float) -> ExponentChoice:
    """Choose ``p'`` in ``[3/2, 2[`` so that ``C_{m,p'} (b - a)/2 < 1``.

    When ``m C_{m,3/2} <= 1`` (``m = (a+b)/2``) or ``a = b`` every ``p'``
    works and ``3/2`` is returned.  Otherwise admissibility needs
    ``2 - p' < log((a+b)/(b-a)) / (2 log(m C))``; the choice takes 90% of
    that limit, capped at ``1/2``.
    """
    if not (0 < a <= b < math.inf):
        raise ValueError(f"need 0 < a <= b, got a={a}, b={b}")
    if C_threehalves <= 0:
        raise ValueError("C_{m,3/2} must be positive")
    m = 0.5 * (a + b)
    mC = m * C_threehalves
    if a == b or mC <= 1.0:
        p_prime, margin, anyp = 1.5, math.inf, True
    else:
        margin = 0.5 * math.log((a + b) / (b - a)) / math.log(mC)
        p_prime = 2.0 - SAFETY * min(margin, 0.5)
        anyp = margin > 0.5
    lhs = interpolated_Cmr(m, p_prime, C_threehalves).value * (b - a) / 2.0
    return ExponentChoice(a, b, C_threehalves, p_prime, mC, margin, anyp, lhs)


# --------------------------------------------------------------------------
# exponent sequences
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentSequence:
    name: str
    start: float
    terms: tuple[float, ...]
    terminal: float
    steps_to_target: float  # int, or inf when the target is never reached
    info: dict = field(default_factory=dict)
    anchor: str = ""

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


def lemma33_exponents(N: int, q: float, n_terms: int = 30) -> ExponentSequence:
    """Heat-equation ``L^p`` gain iteration started at ``p_0 = q``.

    For ``N >= 3``

        p_{n+1} = p_n N (q - 1)/(q (N - 2) + 2) + N q/(q (N - 2) + 2),
        s_n = p_n N/(N - 2),  r = 1 - 2/N + 2/(N q),

    with fixed point ``p_inf = N q/(N + 2 - 2 q)``, reached in the limit when
    ``q < (N + 2)/2``; otherwise ``p_n`` grows without bound.  For ``N = 2``
    Sobolev gives every finite ``s_n``, so ``p_inf`` can be taken as large as
    wanted and is reported as ``inf``.
    """
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    if q <= 1:
        raise ValueError(f"q must exceed 1, got {q}")
    threshold = (N + 2) / 2.0
    if N == 2:
        return ExponentSequence(
            name="heat_lp_gain",
            start=q,
            terms=(float(q),),
            terminal=math.inf,
            steps_to_target=math.inf,
            info={"N": N, "q": q, "r": None, "p_inf": math.inf, "s": [math.inf],
                  "regime": "arbitrarily large", "threshold": threshold},
            anchor="bootstrap.heat_lp_gain",
        )
    denom = q * (N - 2) + 2.0
    mult = N * (q - 1) / denom
    shift = N * q / denom
    r = 1.0 - 2.0 / N + 2.0 / (N * q)
    terms = [float(q)]
    for _ in range(n_terms):
        terms.append(terms[-1] * mult + shift)
    s = [p * N / (N - 2) for p in terms]
    if q < threshold:
        p_inf = N * q / (N + 2 - 2 * q)
        p, steps = float(q), 0
        while abs(p - p_inf) > 1e-12 * p_inf and steps < 100_000:
            p = p * mult + shift
            steps += 1
        regime, terminal = "converges", p_inf
    else:
        p_inf, regime, terminal, steps = math.inf, "diverges", math.inf, math.inf
    return ExponentSequence(
        name="heat_lp_gain",
        start=q,
        terms=tuple(terms),
        terminal=terminal,
        steps_to_target=steps,
        info={"N": N, "q": q, "r": r, "p_inf": p_inf, "s": s, "multiplier": mult,
              "regime": regime, "threshold": threshold},
        anchor="bootstrap.heat_lp_gain",
    )


def lemma36_iteration(N: int, q0: float, max_steps: int = 100_000) -> ExponentSequence:
    """``q_{n+1} = q_n (N + 2)/(2 (N + 2 - q_n))`` until ``q_n >= N + 2``.

    Requires ``q0 > (N + 2)/2``, which is exactly when the sequence increases.
    """
    if q0 <= (N + 2) / 2.0:
        raise HypothesisError(
            f"the iteration needs q0 > (N+2)/2 = {(N + 2) / 2:g}; got q0 = {q0:g} "
            "(at equality q0 is a fixed point, below it the sequence decreases)"
        )
    terms = [float(q0)]
    while terms[-1] < N + 2:
        if len(terms) > max_steps:
            raise RuntimeError(f"no termination within {max_steps} steps")
        qn = terms[-1]
        terms.append(0.5 * qn * (N + 2) / (N + 2 - qn))
    for x, y in zip(terms, terms[1:]):
        if not y > x:
            raise RuntimeError(f"sequence failed to increase: {x} -> {y}")
    return ExponentSequence(
        name="quadratic_bootstrap",
        start=float(q0),
        terms=tuple(terms),
        terminal=terms[-1],
        steps_to_target=len(terms) - 1,
        info={"N": N, "target": N + 2},
        anchor="bootstrap.quadratic_iteration",
    )


def prop4_zk_sequence(N: int, Q: float, z0: float, max_steps: int = 100_000) -> ExponentSequence:
    """``z_k = z_{k-1}/(Q - 2 z_{k-1}/(N + 2))`` until ``z_k >= Q (1 + N/2)``.

    Entry requires ``z0 > (1 + N/2)(Q - 1)``, which makes the sequence
    increase.  The denominator stays positive below the terminal value.
    """
    entry = (1 + N / 2.0) * (Q - 1)
    if z0 <= entry:
        raise HypothesisError(f"the bootstrap needs z0 > (1 + N/2)(Q - 1) = {entry:g}; got {z0:g}")
    target = Q * (1 + N / 2.0)
    terms = [float(z0)]
    while terms[-1] < target:
        if len(terms) > max_steps:
            raise RuntimeError(f"no termination within {max_steps} steps")
        z = terms[-1]
        denom = Q - 2.0 * z / (N + 2)
        if denom <= 0:
            terms.append(math.inf)
            break
        terms.append(z / denom)
    return ExponentSequence(
        name="general_bootstrap",
        start=float(z0),
        terms=tuple(terms),
        terminal=terms[-1],
        steps_to_target=len(terms) - 1,
        info={"N": N, "Q": Q, "entry": entry, "target": target},
        anchor="general_system.bootstrap_sequence",
    )


def prop5_pn_sequence(p0: float, max_steps: int = 100_000) -> ExponentSequence:
    """``1/p_{n+1} = 2/p_n - 1/2`` from ``p0`` in ``]2, 4[``.

    ``info["N0"]`` is the last index with ``p_{N0} < 4`` and the final term is
    ``p_{N0+1}``.
    """
    if not (2 < p0 < 4):
        raise HypothesisError(f"p0 must lie in ]2, 4[, got {p0}")
    terms = [float(p0)]
    while terms[-1] < 4:
        if len(terms) > max_steps:
            raise RuntimeError(f"no termination within {max_steps} steps")
        terms.append(1.0 / (2.0 / terms[-1] - 0.5))
    n0 = len(terms) - 2
    return ExponentSequence(
        name="degenerate_bootstrap",
        start=float(p0),
        terms=tuple(terms),
        terminal=terms[-1],
        steps_to_target=n0 + 1,
        info={"N0": n0, "next": terms[-1]},
        anchor="degenerate_diffusion.exponent_sequence",
    )


def remark_rein_exponent(N: int, p: float) -> float:
    """Largest admissible ``r`` (exclusive) for the initial-data relaxation.

    ``p N/(N + 2 - 2p)``, and ``inf`` once ``2p >= N + 2``.
    """
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if 2 * p >= N + 2:
        return math.inf
    return p * N / (N + 2 - 2 * p)


# --------------------------------------------------------------------------
# smallness conditions on the diffusion spread
# --------------------------------------------------------------------------

def conservative_provider(C_threehalves: float | None = None, empirical: CProvider | None = None) -> CProvider:
    """Constants for the conditions, preferring upper bounds.

    ``q = 2`` uses ``1/m``; ``q`` in ``[3/2, 2[`` interpolates when
    ``C_{m,3/2}`` is known; anything else falls back to ``empirical`` (a lower
    estimate) or ``None``.  ``C_threehalves`` may be a number or a callable of ``m``.
    """

    def provide(m: float, q: float) -> RegularityConstant | None:
        if q == 2:
            return analytic_Cm2(m)
        if C_threehalves is not None and 1.5 <= q <= 2:
            c = C_threehalves(m) if callable(C_threehalves) else C_threehalves
            return interpolated_Cmr(m, q, c)
        if empirical is not None:
            return empirical(m, q)
        return None

    return provide


@dataclass(frozen=True)
class SpreadCondition:
    """``b - a < 2 / C_{(a+b)/2, q}`` for one exponent."""

    q: float
    delta: float
    C: RegularityConstant | None
    threshold: float | None
    holds: bool | None
    status: str  # certified | plausible | violated | unknown
    anchor: str

    def to_dict(self) -> dict:
        out = asdict(self)
        out["C"] = None if self.C is None else self.C.to_dict()
        return jsonable(out)


def spread_condition(a: float, b: float, q: float, provider: CProvider, anchor: str) -> SpreadCondition:
    delta = b - a
    C = provider(0.5 * (a + b), q)
    if C is None:
        # zero spread satisfies the strict inequality for any finite constant
        if delta == 0:
            return SpreadCondition(q, delta, None, None, True, "certified", anchor)
        return SpreadCondition(q, delta, None, None, None, "unknown", anchor)
    threshold = 2.0 / C.value
    holds = delta < threshold
    if not holds:
        # a lower estimate that already fails means the true constant fails too
        status = "violated"
    else:
        status = "certified" if C.is_upper_bound or delta == 0 else "plausible"
    return SpreadCondition(q, delta, C, threshold, holds, status, anchor)


@dataclass(frozen=True)
class GeneralConditions:
    Q: int
    Q_prime: float
    bounded_exponent: float
    N: int
    weak: SpreadCondition
    bounded: SpreadCondition

    @property
    def weak_ok(self) -> bool | None:
        return self.weak.holds

    @property
    def bounded_ok(self) -> bool | None:
        return self.bounded.holds

    def to_dict(self) -> dict:
        return {
            "Q": self.Q,
            "Q_prime": self.Q_prime,
            "bounded_exponent": self.bounded_exponent,
            "N": self.N,
            "threshold1": jsonable(self.weak.threshold),
            "threshold2": jsonable(self.bounded.threshold),
            "weak_ok": self.weak_ok,
            "bounded_ok": self.bounded_ok,
            "weak": self.weak.to_dict(),
            "bounded": self.bounded.to_dict(),
        }


def prop4_conditions(net: ReactionNetwork, provider: CProvider, N: int) -> GeneralConditions:
    """Spread conditions for weak and for bounded solutions of a general network.

    Weak solutions need ``b - a < 2/C_{m,Q'}`` with ``Q'`` the conjugate of
    ``Q = max(sum alpha, sum beta)``; bounded ones need the same with exponent
    ``(Q-1)(N+2)/((Q-1)(N+2) - 2)``.
    """
    net.require_opposite_signs()
    Q = net.Q
    if Q < 3:
        raise HypothesisError(f"the general-system conditions assume Q >= 3, got Q = {Q}")
    if any(x <= 0 for x in net.d):
        raise HypothesisError("all diffusion coefficients must be positive")
    Qp = Q / (Q - 1.0)
    e2 = (Q - 1) * (N + 2) / ((Q - 1) * (N + 2) - 2.0)
    spread = net.spread
    weak = spread_condition(spread.a, spread.b, Qp, provider, "general_system.weak_solution_condition")
    bounded = spread_condition(spread.a, spread.b, e2, provider, "general_system.bounded_solution_condition")
    return GeneralConditions(Q, Qp, e2, N, weak, bounded)


def four_species_spread_condition(d, N: int, provider: CProvider) -> SpreadCondition:
    """Small-spread condition for the four-species system in dimension ``N``.

    The exponent ``1 + 2/N`` exceeds 2 when ``N = 1``; there any ``p > 2``
    already satisfies ``p > N/2 + 1``, so the exponent is capped at 2.
    """
    q = min(1.0 + 2.0 / N, 2.0)
    return spread_condition(min(d), max(d), q, provider, "four_species.small_spread_condition")
