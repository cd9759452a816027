"""Forward and backward heat solvers and empirical regularity constants.

The backward problem ``dv/dt + M lap(v) = f``, ``v(T) = 0`` is integrated
from ``t = T`` down to ``t = 0``; in the reversed time ``tau = T - t`` it is a
forward heat equation with forcing ``-f``.  Backward Euler in ``tau`` gives

    (I - dt M_k L) v_k = v_{k+1} - dt f_k,    k = n-1, ..., 0,

with the forcing held piecewise constant on ``[t_k, t_{k+1})`` and the
coefficient sampled at ``t_k``, the end of each implicit step in ``tau``.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import BoundViolationError
from .grid import (
    Grid,
    ScalarField,
    Trajectory,
    dct,
    idct,
    laplacian_eigenvalues,
    laplacian_matrix,
    solve_shifted,
)

logger = logging.getLogger(__name__)

PROVENANCES = ("analytic", "interpolated", "empirical")
DEFAULT_SAMPLES = 64
DEFAULT_SEED = 20240


# --------------------------------------------------------------------------
# coefficient fields
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientField:
    """A diffusion coefficient ``M(t, x)`` with declared bounds ``a <= M <= b``.

    ``evaluator(t)`` returns one value per grid cell.  ``constant`` is set
    when the field is a single number, which lets solvers use the spectral
    path instead of sparse factorisations.
    """

    grid: Grid
    evaluator: Callable[[float], np.ndarray]
    a: float
    b: float
    constant: float | None = None
    label: str = "custom"

    def __post_init__(self):
        if not (0 < self.a <= self.b < math.inf):
            raise ValueError(f"need 0 < a <= b < inf, got a={self.a}, b={self.b}")

    def sample(self, t: float) -> np.ndarray:
        """Evaluate at time ``t`` and enforce the declared bounds."""
        vals = np.broadcast_to(np.asarray(self.evaluator(t), dtype=float), self.grid.shape)
        bad = ~np.isfinite(vals) | (vals < self.a) | (vals > self.b)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            x = tuple(float(c[i]) for c, i in zip(self.grid.centers(), idx))
            raise BoundViolationError(
                f"M(t={t:g}, x={x}) = {float(vals[idx]):g} outside [{self.a}, {self.b}] (cell {idx})"
            )
        return vals

    @classmethod
    def uniform(cls, grid: Grid, m: float) -> "CoefficientField":
        m = float(m)
        return cls(grid, lambda t: np.full(grid.shape, m), m, m, constant=m, label=f"constant {m:g}")

    @classmethod
    def checkerboard(
        cls, grid: Grid, a: float, b: float, block: int = 8, period: float | None = 0.1
    ) -> "CoefficientField":
        """Blocks of ``block`` cells alternating between ``a`` and ``b``.

        With a finite ``period`` the pattern flips every ``period`` time units,
        so the field is a checkerboard in space and in time.
        """
        idx = np.meshgrid(*(np.arange(n) // block for n in grid.cells), indexing="ij")
        parity = sum(idx) % 2

        def evaluate(t: float) -> np.ndarray:
            flip = 0 if period is None else int(math.floor(t / period + 1e-9)) % 2
            return np.where((parity + flip) % 2 == 0, float(a), float(b))

        return cls(grid, evaluate, float(a), float(b), label=f"checkerboard {a:g}/{b:g}")


@dataclass(frozen=True)
class RegularityConstant:
    """A value (or bound) for the maximal-regularity constant ``C_{m,q}``."""

    m: float
    q: float
    value: float
    provenance: str
    grid: dict | None = None
    samples: int | None = None
    seed: int | None = None
    T: float | None = None
    ratios: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.m <= 0 or not (self.value > 0):
            raise ValueError("m and value must be positive")
        if not (1 < self.q <= 2):
            raise ValueError(f"q must lie in ]1, 2], got {self.q}")
        if self.provenance == "analytic" and (
            self.q != 2 or not math.isclose(self.value, 1 / self.m, rel_tol=1e-12)
        ):
            raise ValueError("analytic constants exist only for q = 2 with value 1/m")

    @property
    def is_upper_bound(self) -> bool:
        return self.provenance in ("analytic", "interpolated")

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("ratios")
        return out


def analytic_Cm2(m: float) -> RegularityConstant:
    """``C_{m,2} <= 1/m`` from testing the backward equation with ``lap(v)``."""
    return RegularityConstant(m=float(m), q=2.0, value=1.0 / float(m), provenance="analytic")


def interpolation_exponent(r: float) -> float:
    """Riesz-Thorin weight on the ``L^2`` end when interpolating ``L^{3/2}`` and ``L^2``."""
    return (4.0 * r - 6.0) / r


def interpolated_Cmr(m: float, r: float, C_m_threehalves: float) -> RegularityConstant:
    """Upper bound ``m^{-theta} C_{m,3/2}^{1-theta}`` for ``r`` in ``[3/2, 2]``."""
    if not (1.5 <= r <= 2.0):
        raise ValueError(f"interpolation needs r in [3/2, 2], got {r}")
    if m <= 0 or C_m_threehalves <= 0:
        raise ValueError("m and C_{m,3/2} must be positive")
    theta = interpolation_exponent(r)
    value = m ** (-theta) * C_m_threehalves ** (1.0 - theta)
    return RegularityConstant(m=float(m), q=float(r), value=float(value), provenance="interpolated")


# --------------------------------------------------------------------------
# forcing helpers
# --------------------------------------------------------------------------

def _step_count(T: float, dt: float) -> tuple[int, float]:
    if not (dt > 0):
        raise ValueError(f"time step must be positive, got dt={dt}")
    if not (T >= dt):
        raise ValueError(f"need T >= dt, got T={T}, dt={dt}")
    n = int(math.ceil(T / dt - 1e-9))
    return n, T / n


def _forcing(f, grid: Grid, n: int, dt: float) -> Callable[[int], np.ndarray]:
    """Normalise forcing input to ``k -> values at time level k``."""
    if f is None:
        zero = np.zeros(grid.shape)
        return lambda k: zero
    if isinstance(f, Trajectory):
        f = f.data[:, 0]
    if isinstance(f, ScalarField):
        f = f.values
    if callable(f):
        def at(k):
            vals = np.broadcast_to(np.asarray(f(k * dt), dtype=float), grid.shape)
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"non-finite forcing at t={k * dt:g}")
            return vals
        return at
    arr = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("forcing contains non-finite values")
    if arr.ndim == grid.dims + 1:
        if arr.shape[0] < n:
            raise ValueError(f"forcing has {arr.shape[0]} time levels, need at least {n}")
        return lambda k: arr[k]
    arr = np.broadcast_to(arr, grid.shape)
    return lambda k: arr


def _as_values(u0, grid: Grid) -> np.ndarray:
    if isinstance(u0, ScalarField):
        return np.array(u0.values)
    return np.array(np.broadcast_to(np.asarray(u0, dtype=float), grid.shape))


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------

def solve_forward_heat(
    grid: Grid,
    d: float,
    f,
    u0,
    T: float,
    dt: float,
    scheme: str = "backward_euler",
) -> Trajectory:
    """Integrate ``du/dt - d lap(u) = f`` with zero-flux boundaries.

    ``f`` may be ``None``, a constant, a field, an array of per-level fields
    (``f[k]`` at ``t = k dt``) or a callable ``t -> values``.  Every time level
    is stored.
    """
    if not (d > 0):
        raise ValueError(f"diffusion must be positive, got d={d}")
    if scheme not in ("backward_euler", "crank_nicolson"):
        raise ValueError(f"unknown scheme {scheme!r}")
    n, dt = _step_count(T, dt)
    force = _forcing(f, grid, n + 1, dt)
    eig = laplacian_eigenvalues(grid)
    out = np.empty((n + 1, *grid.shape))
    out[0] = _as_values(u0, grid)
    if scheme == "backward_euler":
        for k in range(n):
            out[k + 1] = solve_shifted(grid, out[k] + dt * force(k + 1), dt * d, eig)
    else:
        half = 0.5 * dt * d
        for k in range(n):
            rhs_hat = dct(grid, out[k]) * (1.0 + half * eig) + dct(
                grid, 0.5 * dt * (force(k) + force(k + 1))
            )
            out[k + 1] = idct(grid, rhs_hat / (1.0 - half * eig))
    times = dt * np.arange(n + 1)
    return Trajectory(grid, times, out[:, None])


class _ImplicitOperator:
    """Factorisations of ``I - dt diag(M) L`` cached by the sampled ``M``."""

    def __init__(self, grid: Grid, dt: float):
        self.grid = grid
        self.dt = dt
        self.lap = laplacian_matrix(grid)
        self.eye = sp.identity(grid.size, format="csc")
        self._cache: dict[bytes, object] = {}

    def solve_nondivergence(self, m_vals: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I - dt diag(M) L) x = rhs``."""
        key = b"n" + hashlib.sha1(m_vals.tobytes()).digest()
        lu = self._cache.get(key)
        if lu is None:
            mat = self.eye - self.dt * sp.diags(m_vals.ravel()) @ self.lap
            lu = self._cache[key] = splu(mat.tocsc())
        return lu.solve(rhs.ravel()).reshape(self.grid.shape)

    def solve_divergence(self, m_vals: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I - dt L diag(M)) x = rhs``."""
        key = b"d" + hashlib.sha1(m_vals.tobytes()).digest()
        lu = self._cache.get(key)
        if lu is None:
            mat = self.eye - self.dt * self.lap @ sp.diags(m_vals.ravel())
            lu = self._cache[key] = splu(mat.tocsc())
        return lu.solve(rhs.ravel()).reshape(self.grid.shape)


def solve_backward_variable(
    grid: Grid, M: CoefficientField, f, T: float, dt: float
) -> Trajectory:
    """Solve ``dv/dt + M lap(v) = f`` backwards from ``v(T) = 0``.

    The returned trajectory is in increasing ``t`` and contains ``v(0)``.
    ``M`` is checked against its bounds at every sampled time.
    """
    n, dt = _step_count(T, dt)
    force = _forcing(f, grid, n, dt)
    out = np.zeros((n + 1, *grid.shape))
    if M.constant is not None:
        eig = laplacian_eigenvalues(grid)
        for k in range(n - 1, -1, -1):
            M.sample(k * dt)
            out[k] = solve_shifted(grid, out[k + 1] - dt * force(k), dt * M.constant, eig)
    else:
        op = _ImplicitOperator(grid, dt)
        for k in range(n - 1, -1, -1):
            m_vals = M.sample(k * dt)
            out[k] = op.solve_nondivergence(m_vals, out[k + 1] - dt * force(k))
    times = dt * np.arange(n + 1)
    return Trajectory(grid, times, out[:, None])


def solve_forward_divergence(
    grid: Grid, M: CoefficientField, u0, T: float, dt: float
) -> Trajectory:
    """Integrate ``du/dt - lap(M u) = 0`` with ``M u`` taken implicitly.

    The matrix ``I - dt L diag(M)`` has zero column sums in ``L``, so the
    discrete mass is conserved, and it is a column-diagonally-dominant
    M-matrix, so nonnegative data stay nonnegative.
    """
    n, dt = _step_count(T, dt)
    out = np.empty((n + 1, *grid.shape))
    out[0] = _as_values(u0, grid)
    if M.constant is not None:
        eig = laplacian_eigenvalues(grid)
        for k in range(n):
            M.sample((k + 1) * dt)
            out[k + 1] = solve_shifted(grid, out[k], dt * M.constant, eig)
    else:
        op = _ImplicitOperator(grid, dt)
        for k in range(n):
            out[k + 1] = op.solve_divergence(M.sample((k + 1) * dt), out[k])
    times = dt * np.arange(n + 1)
    return Trajectory(grid, times, out[:, None])


# --------------------------------------------------------------------------
# empirical C_{m,q}
# --------------------------------------------------------------------------

def piecewise_norm(grid: Grid, slices: np.ndarray, dt: float, q: float) -> float:
    """``L^q(Omega_T)`` norm of a field held constant on each time step."""
    axes = tuple(range(1, slices.ndim))
    return float((dt * grid.cell_volume * np.sum(np.abs(slices) ** q, axis=axes).sum()) ** (1 / q))


class _ConstantBackward:
    """Linear map ``f -> lap(v)`` for the backward problem with constant ``m``.

    Forcing and output are arrays of shape ``(n, *grid.shape)`` holding the
    values on ``[t_k, t_{k+1})``.  Built in DCT space for speed.
    """

    def __init__(self, grid: Grid, m: float, dt: float):
        self.grid = grid
        self.dt = dt
        self.eig = laplacian_eigenvalues(grid)
        self.denom = 1.0 - dt * m * self.eig

    def apply(self, f: np.ndarray) -> np.ndarray:
        f_hat = dct(self.grid, f)
        out = np.empty_like(f_hat)
        v = np.zeros(self.grid.shape)
        for k in range(f.shape[0] - 1, -1, -1):
            v = (v - self.dt * f_hat[k]) / self.denom
            out[k] = self.eig * v
        return idct(self.grid, out)

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        # block Toeplitz and symmetric blocks: the adjoint is the time reversal
        return self.apply(g[::-1])[::-1]


def _smooth(grid: Grid, noise: np.ndarray, cutoff: float) -> np.ndarray:
    """Low-pass filter white noise in time and space with a Gaussian in DCT space."""
    coeffs = scipy.fft.dctn(noise, type=2, norm="ortho")
    ks = np.meshgrid(*(np.arange(n) / cutoff for n in noise.shape), indexing="ij")
    coeffs *= np.exp(-sum(k**2 for k in ks))
    return scipy.fft.idctn(coeffs, type=2, norm="ortho")


def forcing_sample(grid: Grid, n_steps: int, index: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """The ``index``-th forcing of the seeded ensemble.

    Samples cycle through smooth random fields, space-time checkerboards,
    single cosine modes and white noise.  Each sample uses its own generator,
    so an ensemble of size ``s`` is a prefix of every larger one.
    """
    rng = np.random.default_rng([seed, index])
    shape = (n_steps, *grid.shape)
    kind = index % 4
    if kind == 0:
        cutoff = rng.uniform(2.0, 8.0)
        return _smooth(grid, rng.standard_normal(shape), cutoff)
    if kind == 1:
        block = int(rng.integers(1, max(2, min(grid.cells) // 2)))
        tblock = int(rng.integers(1, max(2, n_steps // 2)))
        idx = np.meshgrid(np.arange(n_steps) // tblock, *(np.arange(n) // block for n in grid.cells), indexing="ij")
        return np.where(sum(idx) % 2 == 0, 1.0, -1.0)
    if kind == 2:
        modes = [int(rng.integers(0, n)) for n in grid.cells]
        if not any(modes):
            modes[0] = 1
        spatial = np.ones(grid.shape)
        for axis, (k, x, L) in enumerate(zip(modes, grid.centers(), grid.extents)):
            prof = np.cos(np.pi * k * x / L)
            shape = [1] * grid.dims
            shape[axis] = -1
            spatial = spatial * prof.reshape(shape)
        omega = rng.uniform(0.0, 4.0) * np.pi
        t = (np.arange(n_steps) + 0.5) / n_steps
        return np.cos(omega * t).reshape((n_steps,) + (1,) * grid.dims) * spatial
    return rng.standard_normal(shape)


def regularity_ratio(op: _ConstantBackward, f: np.ndarray, q: float) -> float:
    """``||lap v||_q / ||f||_q`` for one forcing; 0 for the zero forcing."""
    fn = piecewise_norm(op.grid, f, op.dt, q)
    if fn == 0:
        return 0.0
    return piecewise_norm(op.grid, op.apply(f), op.dt, q) / fn


def _power_iteration(op: _ConstantBackward, n_steps: int, seed: int, iterations: int) -> float:
    rng = np.random.default_rng([seed, 10**6])
    x = rng.standard_normal((n_steps, *op.grid.shape))
    best = 0.0
    for _ in range(iterations):
        x /= np.linalg.norm(x)
        ax = op.apply(x)
        best = max(best, regularity_ratio(op, x, 2.0))
        x = op.adjoint(ax)
        if not np.any(x):
            break
    return best


def estimate_Cmq(
    grid: Grid,
    m: float,
    q: float,
    T: float = 1.0,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
    dt: float | None = None,
    power_iterations: int = 40,
) -> RegularityConstant:
    """Empirical lower estimate of ``C_{m,q}`` on ``grid``.

    The estimate is the largest ratio ``||lap v||_q / ||f||_q`` over a seeded
    forcing ensemble, and for ``q = 2`` also over the iterates of a power
    iteration on ``A^T A`` where ``A f = lap v``.  Norms use the
    piecewise-constant-in-time quadrature that matches the backward Euler
    discretisation.
    """
    if not (1 < q <= 2):
        raise ValueError(f"C_(m,q) is only estimated for q in ]1, 2], got {q}")
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    if samples < 1:
        raise ValueError("need at least one sample")
    if dt is None:
        dt = T / 64
    n, dt = _step_count(T, dt)
    op = _ConstantBackward(grid, m, dt)
    ratios = [regularity_ratio(op, forcing_sample(grid, n, i, seed), q) for i in range(samples)]
    if q == 2 and power_iterations > 0:
        ratios.append(_power_iteration(op, n, seed, power_iterations))
    value = max(ratios)
    logger.debug("C_(%g,%g) estimate %.6g from %d ratios", m, q, value, len(ratios))
    return RegularityConstant(
        m=float(m),
        q=float(q),
        value=float(value),
        provenance="empirical",
        grid=grid.to_dict(),
        samples=samples,
        seed=seed,
        T=float(T),
        ratios=tuple(ratios),
    )


def estimate_Cmq_horizons(grid: Grid, m: float, q: float, horizons=(1.0, 2.0, 4.0), **kwargs) -> list[RegularityConstant]:
    """Estimates at several horizons; no limit in ``T`` is asserted."""
    steps_per_unit = kwargs.pop("steps_per_unit", 64)
    return [estimate_Cmq(grid, m, q, T=T, dt=1.0 / steps_per_unit, **kwargs) for T in horizons]


def ensemble_forcings(grid: Grid, n_steps: int, samples: int, seed: int = DEFAULT_SEED) -> Iterator[np.ndarray]:
    for i in range(samples):
        yield forcing_sample(grid, n_steps, i, seed)
