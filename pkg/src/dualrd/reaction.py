"""Mass-action reaction-diffusion systems for a single reversible reaction.

    alpha_1 A_1 + ... + alpha_n A_n  <=>  beta_1 A_1 + ... + beta_n A_n

with forward rate ``l`` and backward rate ``k``.  Species ``i`` changes at the
rate ``(beta_i - alpha_i) * (l prod a^alpha - k prod a^beta)`` and diffuses
with coefficient ``d_i`` under zero-flux boundaries.

Time integration is IMEX: reaction explicit, diffusion implicit (spectral
backward Euler per species, identity for ``d_i = 0``).  Every linear
combination ``sum gamma_i a_i`` with ``gamma . (beta - alpha) = 0`` is then
conserved up to rounding, since each diffusion solve conserves its species'
mass and the reaction terms cancel pointwise.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import BlowUpError, HypothesisError, NumericalError
from .grid import Grid, ScalarField, Trajectory, laplacian_eigenvalues, solve_shifted

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)


def read_config(path: str | Path) -> dict:
    """Parse a ``.toml`` file, or JSON for any other suffix."""
    path = Path(path)
    if path.suffix == ".toml":
        return tomllib.loads(path.read_text())
    return json.loads(path.read_text())

NEGATIVITY_TOL = 1e-9
MAX_RETRIES = 8


@dataclass(frozen=True)
class DiffusionSpread:
    a: float
    b: float

    @property
    def delta(self) -> float:
        return self.b - self.a

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.a + self.b)


@dataclass(frozen=True)
class ReactionNetwork:
    """Stoichiometry, rates and diffusion coefficients of one reversible reaction."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    k: float
    l: float
    d: tuple[float, ...]
    names: tuple[str, ...] | None = None
    laws: tuple[tuple[float, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        alpha = tuple(int(x) for x in self.alpha)
        beta = tuple(int(x) for x in self.beta)
        d = tuple(float(x) for x in self.d)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "d", d)
        if not (len(alpha) == len(beta) == len(d)) or not alpha:
            raise ValueError("alpha, beta and d must have the same nonzero length")
        if min(alpha + beta) < 0:
            raise ValueError("stoichiometric coefficients must be natural numbers")
        if self.k < 0 or self.l < 0:
            raise ValueError("reaction rates must be nonnegative")
        if min(d) < 0:
            raise ValueError("diffusion coefficients must be nonnegative")
        if self.Q < 1:
            raise ValueError("reaction needs at least one reactant or product")
        if self.laws is not None:
            laws = tuple(tuple(float(x) for x in row) for row in self.laws)
            nu = np.asarray(self.stoich, dtype=float)
            for row in laws:
                if len(row) != self.n or abs(np.dot(row, nu)) > 1e-12:
                    raise ValueError(f"conservation law {row} is not orthogonal to beta - alpha")
            object.__setattr__(self, "laws", laws)

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def stoich(self) -> np.ndarray:
        """``beta - alpha``."""
        return np.asarray(self.beta) - np.asarray(self.alpha)

    @property
    def Q(self) -> int:
        return max(sum(self.alpha), sum(self.beta))

    @property
    def spread(self) -> DiffusionSpread:
        return DiffusionSpread(min(self.d), max(self.d))

    def has_opposite_signs(self) -> bool:
        nu = self.stoich
        return bool((nu > 0).any() and (nu < 0).any())

    def require_opposite_signs(self) -> None:
        if not self.has_opposite_signs():
            raise HypothesisError(
                "need two coefficients beta_i - alpha_i that are nonzero with opposite signs; "
                f"got beta - alpha = {self.stoich.tolist()}"
            )

    def conservation_basis(self) -> np.ndarray:
        """Rows spanning the conserved linear combinations (kernel of ``beta - alpha``)."""
        if self.laws is not None:
            return np.asarray(self.laws)
        nu = self.stoich
        nonzero = np.flatnonzero(nu)
        if nonzero.size == 0:
            return np.eye(self.n)
        pivot = nonzero[0]
        rows = []
        for j in range(self.n):
            if j == pivot:
                continue
            row = np.zeros(self.n, dtype=int)
            row[j] = nu[pivot]
            row[pivot] = -nu[j]
            row //= math.gcd(*row.tolist())
            if row[np.flatnonzero(row)[0]] < 0:
                row = -row
            rows.append(row)
        return np.array(rows, dtype=float)

    def positive_weights(self) -> np.ndarray:
        """Some ``gamma > 0`` with ``gamma . (alpha - beta) = 0``."""
        self.require_opposite_signs()
        nu = self.stoich.astype(float)
        pos, neg = nu > 0, nu < 0
        gamma = np.ones(self.n)
        gamma[pos] = 1.0 / (nu[pos] * pos.sum())
        gamma[neg] = 1.0 / (-nu[neg] * neg.sum())
        return gamma

    def with_diffusion(self, d: Sequence[float]) -> "ReactionNetwork":
        return ReactionNetwork(self.alpha, self.beta, self.k, self.l, tuple(d), self.names, self.laws)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "k": self.k,
            "l": self.l,
            "d": list(self.d),
        }

    @classmethod
    def from_dict(cls, desc: dict) -> "ReactionNetwork":
        allowed = {"n", "alpha", "beta", "k", "l", "d", "names"}
        unknown = set(desc) - allowed
        if unknown:
            raise ValueError(f"unknown network keys: {sorted(unknown)}")
        net = cls(
            tuple(desc["alpha"]),
            tuple(desc["beta"]),
            float(desc["k"]),
            float(desc["l"]),
            tuple(desc["d"]),
            tuple(desc["names"]) if "names" in desc else None,
        )
        if "n" in desc and int(desc["n"]) != net.n:
            raise ValueError(f"n={desc['n']} but {net.n} species given")
        return net

    @classmethod
    def load(cls, path: str | Path) -> "ReactionNetwork":
        return cls.from_dict(read_config(path))


def four_species_network(d: Sequence[float] = (1.0, 1.0, 1.0, 1.0), k: float = 1.0, l: float = 1.0) -> ReactionNetwork:
    """``A1 + A3 <=> A2 + A4`` with its three independent conservation laws."""
    return ReactionNetwork(
        alpha=(1, 0, 1, 0),
        beta=(0, 1, 0, 1),
        k=k,
        l=l,
        d=tuple(d),
        names=("a1", "a2", "a3", "a4"),
        laws=((1, 1, 0, 0), (1, 0, 0, 1), (0, 1, 1, 0)),
    )


@dataclass(frozen=True)
class SpeciesState:
    """Concentrations of all species at one time; ``fields`` is ``(n, *grid.shape)``."""

    grid: Grid
    fields: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        arr = np.array(self.fields, dtype=float)
        if arr.ndim == self.grid.dims:
            arr = arr[None]
        if arr.ndim != self.grid.dims + 1 or arr.shape[1:] != self.grid.shape:
            raise ValueError(f"fields shape {arr.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("concentrations must be finite")
        if arr.min() < -NEGATIVITY_TOL:
            raise ValueError(f"negative concentration {arr.min():.3e}")
        arr.setflags(write=False)
        object.__setattr__(self, "fields", arr)

    @property
    def n(self) -> int:
        return self.fields.shape[0]

    def species(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.fields[i])

    def averages(self) -> np.ndarray:
        axes = tuple(range(1, self.fields.ndim))
        return self.fields.mean(axis=axes)

    @classmethod
    def uniform(cls, grid: Grid, values: Sequence[float], time: float = 0.0) -> "SpeciesState":
        vals = np.asarray(values, dtype=float).reshape((-1,) + (1,) * grid.dims)
        return cls(grid, np.broadcast_to(vals, (vals.shape[0], *grid.shape)), time)


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------

def _fields(state) -> np.ndarray:
    arr = state.fields if isinstance(state, SpeciesState) else np.asarray(state, dtype=float)
    if arr.min(initial=0.0) < -NEGATIVITY_TOL:
        raise ValueError(f"negative concentration {arr.min():.3e} beyond tolerance")
    return arr


def _monomial(arr: np.ndarray, powers: Sequence[int]) -> np.ndarray:
    out = np.ones(arr.shape[1:])
    for a, p in zip(arr, powers):
        if p:
            out = out * a**p
    return out


def reaction_rate(net: ReactionNetwork, arr: np.ndarray) -> np.ndarray:
    """``l prod a^alpha - k prod a^beta`` per cell."""
    return net.l * _monomial(arr, net.alpha) - net.k * _monomial(arr, net.beta)


def reaction_rhs(net: ReactionNetwork, state) -> np.ndarray:
    """Mass-action source per species, shape ``(n, *grid.shape)``."""
    arr = _fields(state)
    rate = reaction_rate(net, arr)
    nu = net.stoich.reshape((-1,) + (1,) * (arr.ndim - 1))
    return nu * rate


def reaction_rhs_approx(net: ReactionNetwork, state, r: int) -> np.ndarray:
    """Source divided by ``1 + (1/r) (sum_j a_j^2)^(Q/2)``; bounded for finite ``r``."""
    if int(r) != r or r < 1:
        raise ValueError(f"r must be a natural number >= 1, got {r}")
    arr = _fields(state)
    denom = 1.0 + (1.0 / r) * np.sum(arr**2, axis=0) ** (net.Q / 2)
    return reaction_rhs(net, arr) / denom


def total_mass_coefficient(net: ReactionNetwork, state, gamma: Sequence[float] | None = None) -> np.ndarray:
    """``M = sum gamma_i d_i a_i / sum gamma_i a_i``, with ``(a+b)/2`` in empty cells.

    ``sum gamma_i a_i`` then solves ``du/dt - lap(M u) = 0``.
    """
    net.require_opposite_signs()
    gamma = net.positive_weights() if gamma is None else np.asarray(gamma, dtype=float)
    if gamma.shape != (net.n,) or np.any(gamma < 0):
        raise ValueError("gamma must hold one nonnegative weight per species")
    if abs(np.dot(gamma, net.stoich)) > 1e-12 * max(1.0, np.abs(gamma).sum()):
        raise ValueError("gamma must satisfy sum gamma_i (alpha_i - beta_i) = 0")
    arr = _fields(state)
    g = gamma.reshape((-1,) + (1,) * (arr.ndim - 1))
    d = np.asarray(net.d).reshape(g.shape)
    num = np.sum(g * d * arr, axis=0)
    den = np.sum(g * arr, axis=0)
    spread = net.spread
    vacuum = den <= 0
    M = np.where(vacuum, spread.midpoint, num / np.where(vacuum, 1.0, den))
    return np.clip(M, spread.a, spread.b)


# --------------------------------------------------------------------------
# time stepping
# --------------------------------------------------------------------------

def suggest_dt(net: ReactionNetwork, state, safety: float = 0.5) -> float:
    """Largest explicit reaction step keeping every species nonnegative, times ``safety``.

    For a species consumed by the reaction, ``a_i + dt * source_i >= 0``
    holds when ``dt`` is below ``a_i / loss_i``; the loss is a monomial
    containing ``a_i`` so the ratio is a polynomial.
    """
    arr = _fields(state)
    worst = 0.0
    for i in range(net.n):
        for coef, rate, powers in ((net.alpha[i] - net.beta[i], net.l, net.alpha), (net.beta[i] - net.alpha[i], net.k, net.beta)):
            if coef <= 0 or rate == 0 or powers[i] == 0:
                continue
            reduced = list(powers)
            reduced[i] -= 1
            worst = max(worst, float(np.max(coef * rate * _monomial(arr, reduced))))
    return math.inf if worst == 0 else safety / worst


class IMEXStepper:
    """Explicit reaction, implicit spectral diffusion; reuses the stencil spectrum."""

    def __init__(self, net: ReactionNetwork, grid: Grid, max_retries: int = MAX_RETRIES):
        self.net = net
        self.grid = grid
        self.eig = laplacian_eigenvalues(grid)
        self.d = np.asarray(net.d)
        self.diffusing = self.d > 0
        self.max_retries = max_retries
        self.rejections = 0

    def _raw(self, arr: np.ndarray, dt: float) -> np.ndarray:
        out = arr + dt * reaction_rhs(self.net, arr)
        if self.diffusing.any():
            idx = self.diffusing
            out[idx] = solve_shifted(self.grid, out[idx], dt * self.d[idx], self.eig)
        return out

    def advance(self, arr: np.ndarray, dt: float, t: float = 0.0, on_step=None, depth: int = 0) -> np.ndarray:
        """One step of size ``dt``, split into halves while it produces negativity."""
        out = self._raw(arr, dt)
        if out.min() >= -NEGATIVITY_TOL:
            if on_step is not None:
                on_step(t, arr, out, dt)
            return out
        if depth >= self.max_retries:
            raise NumericalError(
                f"negative concentration {out.min():.3e} at t={t:g} after {depth} step halvings"
            )
        self.rejections += 1
        half = 0.5 * dt
        mid = self.advance(arr, half, t, on_step, depth + 1)
        return self.advance(mid, half, t + half, on_step, depth + 1)


def step_imex(net: ReactionNetwork, state: SpeciesState, dt: float) -> SpeciesState:
    """Advance ``state`` by ``dt``; see :class:`IMEXStepper`."""
    if not (dt > 0):
        raise ValueError(f"dt must be positive, got {dt}")
    stepper = IMEXStepper(net, state.grid)
    out = stepper.advance(np.array(state.fields), dt, state.time)
    return SpeciesState(state.grid, out, state.time + dt)


@dataclass
class Diagnostics:
    """Time series recorded at the trajectory sample times."""

    times: np.ndarray
    masses: np.ndarray  # (n_samples, n_laws), integrals of the conserved combinations
    linf: np.ndarray  # (n_samples, n)
    lp: np.ndarray  # (n_samples, n)
    entropy: np.ndarray
    distance: np.ndarray  # sum_i ||a_i - a_i,inf||_inf
    p: float
    equilibrium: np.ndarray | None
    min_value: float  # over every step, not only samples
    max_mass_drift: float  # relative, over every step
    rejections: int = 0

    def rows(self) -> list[dict]:
        out = []
        for j, t in enumerate(self.times):
            row = {"time": float(t)}
            for i in range(self.linf.shape[1]):
                row[f"linf_{i + 1}"] = float(self.linf[j, i])
                row[f"lp_{i + 1}"] = float(self.lp[j, i])
            for i in range(self.masses.shape[1]):
                row[f"mass_{i + 1}"] = float(self.masses[j, i])
            row["entropy"] = float(self.entropy[j])
            row["distance"] = float(self.distance[j])
            out.append(row)
        return out


@dataclass
class SimulationResult:
    trajectory: Trajectory
    diagnostics: Diagnostics


def relative_entropy(grid: Grid, arr: np.ndarray, eq: np.ndarray) -> float:
    """``sum_i int a_i ln(a_i / a_i,inf) - (a_i - a_i,inf)`` with ``0 ln 0 = 0``."""
    e = eq.reshape((-1,) + (1,) * grid.dims)
    dens = xlogy(arr, arr) - xlogy(arr, e) - (arr - e)
    return float(dens.sum() * grid.cell_volume)


def simulate(
    net: ReactionNetwork,
    initial: SpeciesState,
    T: float,
    dt: float,
    sample_every: int = 1,
    p: float = 2.0,
    ceiling: float = 1e6,
    equilibrium: np.ndarray | None = None,
    on_step: Callable | None = None,
) -> SimulationResult:
    """Integrate the reaction-diffusion system on ``[0, T]``.

    Snapshots and diagnostics are kept every ``sample_every`` steps and at
    ``T``.  The equilibrium used for the entropy and distance series defaults
    to the one fixed by the initial masses; pass ``equilibrium`` to override.
    ``on_step(t, old, new, dt)`` is called after every accepted (sub)step.
    Raises :class:`BlowUpError` once any concentration exceeds ``ceiling``.
    """
    if initial.n != net.n:
        raise ValueError(f"state has {initial.n} species, network has {net.n}")
    if not (dt > 0) or not (T >= dt):
        raise ValueError(f"need 0 < dt <= T, got dt={dt}, T={T}")
    n_steps = int(math.ceil(T / dt - 1e-9))
    dt = T / n_steps
    grid = initial.grid
    arr = np.array(initial.fields)
    hint = suggest_dt(net, arr, safety=1.0)
    if dt > hint:
        logger.warning("dt=%g exceeds the initial positivity bound %g; steps may be halved", dt, hint)

    if equilibrium is None:
        from .equilibrium import equilibrium_for_state

        try:
            equilibrium = equilibrium_for_state(net, initial.averages()).values
        except (ValueError, NumericalError) as exc:
            logger.info("no interior equilibrium for diagnostics: %s", exc)
            equilibrium = None

    basis = net.conservation_basis()
    axes = tuple(range(1, 1 + grid.dims))

    def species_integrals(x):
        return x.sum(axis=axes) * grid.cell_volume

    mass0 = basis @ species_integrals(arr)
    scale = np.maximum(np.abs(mass0), np.abs(basis) @ np.abs(species_integrals(arr)))
    scale = np.where(scale > 0, scale, 1.0)

    times, snaps = [], []
    masses, linf, lp, ent, dist = [], [], [], [], []

    def record(t, x):
        times.append(t)
        snaps.append(x.copy())
        masses.append(basis @ species_integrals(x))
        linf.append(np.abs(x).max(axis=axes))
        lp.append((np.sum(np.abs(x) ** p, axis=axes) * grid.cell_volume) ** (1 / p))
        if equilibrium is None:
            ent.append(math.nan)
            dist.append(math.nan)
        else:
            ent.append(relative_entropy(grid, x, equilibrium))
            dev = np.abs(x - equilibrium.reshape((-1,) + (1,) * grid.dims))
            dist.append(float(dev.max(axis=axes).sum()))

    stepper = IMEXStepper(net, grid)
    record(0.0, arr)
    min_value = float(arr.min())
    drift = 0.0
    for step in range(1, n_steps + 1):
        t_old = (step - 1) * dt
        arr = stepper.advance(arr, dt, t_old, on_step)
        top = float(arr.max())
        if not math.isfinite(top) or top > ceiling:
            err = BlowUpError(f"concentration {top:.3e} exceeds ceiling {ceiling:g} at t={step * dt:g}")
            err.tail = {"times": times[-3:], "linf": [v.tolist() for v in linf[-3:]]}
            raise err
        min_value = min(min_value, float(arr.min()))
        drift = max(drift, float(np.max(np.abs(basis @ species_integrals(arr) - mass0) / scale)))
        if step % sample_every == 0 or step == n_steps:
            record(step * dt, arr)

    tr = Trajectory(grid, np.array(times), np.array(snaps), names=net.names)
    diag = Diagnostics(
        times=np.array(times),
        masses=np.array(masses),
        linf=np.array(linf),
        lp=np.array(lp),
        entropy=np.array(ent),
        distance=np.array(dist),
        p=p,
        equilibrium=equilibrium,
        min_value=min_value,
        max_mass_drift=drift,
        rejections=stepper.rejections,
    )
    return SimulationResult(tr, diag)
