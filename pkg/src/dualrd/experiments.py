"""End-to-end numerical checks: duality bound, decay, boundedness, growth.

Each driver takes an :class:`ExperimentConfig`, runs the four-species system
(or a linear heat problem) and returns a report dataclass with a ``to_dict``
method.  :func:`write_run` stores a report in a directory named by the hash
of its config.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from .errors import BlowUpError, HypothesisError
from .estimates import (
    CProvider,
    DualityReport,
    conservative_provider,
    duality_prefactor,
    four_species_spread_condition,
    holder_conjugate,
    jsonable,
)
from .grid import Grid, ScalarField, lp_norm_space, lp_norm_spacetime
from .heat import CoefficientField, RegularityConstant, analytic_Cm2, solve_forward_divergence, solve_forward_heat
from .reaction import SpeciesState, four_species_network, simulate

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 10
KINDS = ("prop2", "prop3", "prop5", "growth")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one four-species experiment; defaults give the decay run."""

    kind: str = "prop2"
    cells: tuple[int, ...] = (64, 64)
    extents: tuple[float, ...] = (4.0, 4.0)
    d: tuple[float, ...] = (1.0, 2.0, 0.5, 1.5)
    k: float = 1.0
    l: float = 1.0
    base: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    amplitude: float = 0.2
    perturbation: str = "cosine"  # cosine | random
    T: float = 10.0
    dt: float = 1e-3
    sample_every: int = 50
    p: float = 2.0
    t_start: float | None = None
    seed: int = 0
    ceiling: float = 1e6
    T_list: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)

    def __post_init__(self):
        for name in ("cells", "extents", "d", "base", "T_list"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if len(self.d) != 4 or len(self.base) != 4:
            raise ValueError("the four-species experiments need four diffusion rates and base values")
        if min(self.d) < 0 or min(self.base) < 0:
            raise ValueError("diffusion rates and base values must be nonnegative")
        if not (0 <= self.amplitude < 1):
            raise ValueError(f"amplitude must lie in [0, 1[, got {self.amplitude}")
        if self.perturbation not in ("cosine", "random"):
            raise ValueError(f"unknown perturbation {self.perturbation!r}")
        if not (0 < self.dt <= self.T):
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.sample_every < 1:
            raise ValueError("sample_every must be at least 1")

    @property
    def grid(self) -> Grid:
        return Grid(self.extents, self.cells)

    @property
    def window_start(self) -> float:
        return 0.1 * self.T if self.t_start is None else float(self.t_start)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, desc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(desc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**desc)

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def initial_state(cfg: ExperimentConfig) -> SpeciesState:
    """Base values plus a zero-mean perturbation of relative size ``amplitude``.

    Species carry alternating signs, so the perturbation leaves every average
    (hence the equilibrium) unchanged.
    """
    grid = cfg.grid
    if cfg.perturbation == "cosine":
        shape = np.ones(grid.shape)
        for axis, (x, L) in enumerate(zip(grid.centers(), grid.extents)):
            prof = np.cos(np.pi * x / L)
            dims = [1] * grid.dims
            dims[axis] = -1
            shape = shape * prof.reshape(dims)
    else:
        rng = np.random.default_rng(cfg.seed)
        shape = rng.uniform(-1.0, 1.0, grid.shape)
        shape -= shape.mean()
        shape /= np.abs(shape).max()
    signs = np.array([1.0, -1.0, 1.0, -1.0]).reshape((-1,) + (1,) * grid.dims)
    base = np.asarray(cfg.base).reshape((-1,) + (1,) * grid.dims)
    return SpeciesState(grid, base * (1.0 + cfg.amplitude * signs * shape))


# --------------------------------------------------------------------------
# duality check
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DualityCheck:
    p: float
    T: float
    measured: float
    bound: float | None
    ratio: float | None
    guaranteed: bool
    duality: DualityReport
    notes: str = ""
    anchor: str = "duality.forward_lp_bound"

    @property
    def holds(self) -> bool | None:
        return None if self.ratio is None else self.ratio <= 1.0

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "duality"}
        out["duality"] = self.duality.to_dict()
        out["holds"] = self.holds
        return jsonable(out)


def verify_duality(
    grid: Grid,
    M: CoefficientField,
    u0,
    p: float,
    T: float,
    dt: float,
    C: RegularityConstant | None = None,
) -> DualityCheck:
    """Compare ``||u||_{L^p(Omega_T)}`` with ``(1 + b D) T^{1/p} ||u0||_p``.

    ``u`` solves ``du/dt - lap(M u) = 0``.  ``C`` defaults to the ``q = 2``
    bound ``2/(a+b)``.  The bound is only guaranteed when ``C`` is an upper
    bound for the exponent ``p' = p/(p-1)``; otherwise the report says so.
    """
    if not p > 2:
        raise HypothesisError(f"the forward bound is stated for p > 2, got p={p}")
    a, b = M.a, M.b
    if C is None:
        C = analytic_Cm2(0.5 * (a + b))
    report = duality_prefactor(a, b, C.q, C)
    u0v = u0.values if isinstance(u0, ScalarField) else np.broadcast_to(np.asarray(u0, float), grid.shape)
    traj = solve_forward_divergence(grid, M, u0v, T, dt)
    measured = lp_norm_spacetime(traj, 0, p)
    p_conj = holder_conjugate(p)
    guaranteed = report.certified and math.isclose(C.q, p_conj)
    notes = "" if guaranteed else "bound not guaranteed"
    if not report.condition_holds:
        return DualityCheck(p, T, measured, None, None, False, report, "bound not guaranteed: " + report.message)
    norm0 = lp_norm_space(ScalarField(grid, u0v), p)
    bound = report.prefactor * T ** (1.0 / p) * norm0
    ratio = 0.0 if bound == 0 else measured / bound
    return DualityCheck(p, T, measured, bound, ratio, guaranteed, report, notes)


def duality_ensemble(
    grid: Grid,
    M: CoefficientField,
    p: float,
    T: float,
    dt: float,
    samples: int = 32,
    seed: int = 0,
    C: RegularityConstant | None = None,
) -> list[DualityCheck]:
    """Run :func:`verify_duality` for ``samples`` seeded nonnegative ``u0``.

    The data mix smooth bumps, indicators of random boxes and raw uniform noise.
    """
    out = []
    for i in range(samples):
        rng = np.random.default_rng([seed, i])
        kind = i % 3
        if kind == 0:
            xs = grid.mesh()
            centre = [rng.uniform(0, L) for L in grid.extents]
            width = rng.uniform(0.05, 0.3) * min(grid.extents)
            r2 = sum((x - c) ** 2 for x, c in zip(xs, centre))
            u0 = np.exp(-r2 / width**2)
        elif kind == 1:
            u0 = np.zeros(grid.shape)
            sl = []
            for n in grid.cells:
                lo = int(rng.integers(0, n - 1))
                sl.append(slice(lo, int(rng.integers(lo + 1, n + 1))))
            u0[tuple(sl)] = 1.0
        else:
            u0 = rng.uniform(0.0, 1.0, grid.shape)
        out.append(verify_duality(grid, M, u0, p, T, dt, C))
    return out


# --------------------------------------------------------------------------
# decay fit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    """``value ~ kappa1 exp(-kappa2 t)`` fitted on ``window``."""

    kappa1: float
    kappa2: float
    window: tuple[float, float]
    r_squared: float
    series: tuple[tuple[float, float], ...] = field(repr=False)
    anchor: str = "four_species.exponential_decay"

    @property
    def decades(self) -> float:
        vals = [v for _, v in self.series]
        return math.log10(max(vals) / min(vals))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["series"] = [list(pt) for pt in self.series]
        out["decades"] = self.decades
        return jsonable(out)


def fit_decay(series, t_start: float | None = None) -> DecayFit:
    """Least squares of ``ln value`` against ``t`` for ``t >= t_start``.

    ``series`` is a sequence of ``(t, value)`` pairs (or a ``(times, values)``
    pair of arrays).  ``t_start`` defaults to 10% of the final time.  If a
    nonpositive value appears in the window, the window ends just before it.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == 2 and arr.shape[1] != 2:
        arr = arr.T
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be (t, value) pairs")
    t, v = arr[:, 0], arr[:, 1]
    if t_start is None:
        t_start = 0.1 * t.max()
    mask = t >= t_start
    t, v = t[mask], v[mask]
    bad = np.flatnonzero(~(v > 0))
    if bad.size:
        logger.info("window truncated at t=%g where the value is not positive", t[bad[0]])
        t, v = t[: bad[0]], v[: bad[0]]
    if t.size < MIN_FIT_SAMPLES:
        raise ValueError(f"need at least {MIN_FIT_SAMPLES} positive samples in the window, got {t.size}")
    y = np.log(v)
    A = np.column_stack([np.ones_like(t), t])
    (intercept, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([intercept, slope])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else float(np.clip(1.0 - np.sum(resid**2) / ss_tot, 0.0, 1.0))
    pts = tuple((float(a), float(b)) for a, b in zip(t, v))
    return DecayFit(float(math.exp(intercept)), float(-slope), (float(t[0]), float(t[-1])), r2, pts)


# --------------------------------------------------------------------------
# four-species drivers
# --------------------------------------------------------------------------

@dataclass
class DecayReport:
    config: ExperimentConfig
    status: str  # ok | blow-up
    fit: DecayFit | None
    equilibrium: list[float] | None
    max_mass_drift: float
    min_value: float
    rejections: int
    rows: list[dict] = field(default_factory=list, repr=False)
    condition: dict | None = None
    message: str = ""
    anchor: str = "four_species.exponential_decay"

    @property
    def conserved(self) -> bool:
        return self.max_mass_drift < 1e-9 and self.min_value >= -1e-9

    def to_dict(self) -> dict:
        return jsonable({
            "anchor": self.anchor,
            "status": self.status,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "fit": None if self.fit is None else self.fit.to_dict(),
            "equilibrium": self.equilibrium,
            "conservation": {
                "max_mass_drift": self.max_mass_drift,
                "min_value": self.min_value,
                "ok": self.conserved,
            },
            "rejections": self.rejections,
            "condition": self.condition,
            "message": self.message,
        })


def _network(cfg: ExperimentConfig):
    return four_species_network(d=cfg.d, k=cfg.k, l=cfg.l)


def _decay_run(cfg: ExperimentConfig, anchor: str) -> DecayReport:
    net = _network(cfg)
    state = initial_state(cfg)
    try:
        res = simulate(net, state, cfg.T, cfg.dt, cfg.sample_every, cfg.p, cfg.ceiling)
    except BlowUpError as exc:
        return DecayReport(cfg, "blow-up", None, None, math.nan, math.nan, 0,
                           message=f"{exc}; tail={getattr(exc, 'tail', None)}", anchor=anchor)
    diag = res.diagnostics
    fit = fit_decay(np.column_stack([diag.times, diag.distance]), cfg.window_start)
    eq = None if diag.equilibrium is None else [float(x) for x in diag.equilibrium]
    return DecayReport(cfg, "ok", fit, eq, diag.max_mass_drift, diag.min_value, diag.rejections,
                       rows=diag.rows(), anchor=anchor)


def run_prop2(cfg: ExperimentConfig) -> DecayReport:
    """Decay to equilibrium with positive diffusion and no smallness condition."""
    if len(cfg.cells) != 2:
        raise HypothesisError("the decay experiment runs on a 2D grid")
    if min(cfg.d) <= 0:
        raise HypothesisError("all diffusion rates must be positive")
    return _decay_run(cfg, "four_species.exponential_decay")


def run_prop3(cfg: ExperimentConfig, provider: CProvider | None = None) -> DecayReport:
    """Decay run with the small-spread verdict for exponent ``1 + 2/N`` attached."""
    if min(cfg.d) <= 0:
        raise HypothesisError("all diffusion rates must be positive")
    N = len(cfg.cells)
    cond = four_species_spread_condition(cfg.d, N, provider or conservative_provider())
    report = _decay_run(cfg, "four_species.small_spread_decay")
    report.condition = cond.to_dict()
    return report


@dataclass
class BoundednessReport:
    config: ExperimentConfig
    status: str
    initial_sup: list[float]
    sup: list[float]
    growth_factor: list[float]
    inequality_max_excess: float  # max of d_t a4 - l a1 a3 over all steps and cells
    inequality_tolerance: float
    max_mass_drift: float
    min_value: float
    rows: list[dict] = field(default_factory=list, repr=False)
    message: str = ""
    anchor: str = "degenerate_diffusion.boundedness"

    @property
    def bounded(self) -> bool:
        return self.status == "ok" and max(self.growth_factor) < 10.0

    @property
    def inequality_holds(self) -> bool:
        return self.inequality_max_excess <= self.inequality_tolerance

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("rows", "config")}
        out["config"] = self.config.to_dict()
        out["config_hash"] = self.config.config_hash()
        out["bounded"] = self.bounded
        out["inequality_holds"] = self.inequality_holds
        return jsonable(out)


def run_prop5(cfg: ExperimentConfig) -> BoundednessReport:
    """Boundedness with a non-diffusing fourth species.

    Every accepted step is checked for ``(a4_new - a4_old)/dt <= l a1 a3``
    with the right side at the old level, where the explicit reaction is
    evaluated.  The tolerance is ``dt`` times the largest concentration, an
    O(dt) allowance that rounding never approaches.
    """
    if len(cfg.cells) != 2:
        raise HypothesisError("the boundedness experiment runs on a 2D grid")
    if cfg.d[3] != 0 or min(cfg.d[:3]) <= 0:
        raise HypothesisError("need d4 = 0 and d1, d2, d3 > 0")
    net = _network(cfg)
    state = initial_state(cfg)
    init_sup = [float(np.abs(f).max()) for f in state.fields]
    excess = [-math.inf]

    def check(t, old, new, dt):
        lhs = (new[3] - old[3]) / dt
        excess[0] = max(excess[0], float(np.max(lhs - cfg.l * old[0] * old[2])))

    tol = cfg.dt * max(1.0, max(init_sup))
    try:
        res = simulate(net, state, cfg.T, cfg.dt, cfg.sample_every, cfg.p, cfg.ceiling, on_step=check)
    except BlowUpError as exc:
        return BoundednessReport(cfg, "blow-up", init_sup, [math.inf] * 4, [math.inf] * 4,
                                 excess[0], tol, math.nan, math.nan, message=str(exc))
    diag = res.diagnostics
    sup = np.max(res.trajectory.data, axis=tuple(range(2, 2 + cfg.grid.dims))).max(axis=0)
    growth = [float(s / i) if i > 0 else math.inf for s, i in zip(sup, init_sup)]
    return BoundednessReport(cfg, "ok", init_sup, [float(s) for s in sup], growth, excess[0], tol,
                             diag.max_mass_drift, diag.min_value, rows=diag.rows())


# --------------------------------------------------------------------------
# growth in T
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthReport:
    kind: str
    horizons: tuple[float, ...]
    sup_norms: tuple[float, ...]
    exponent: float
    local_exponents: tuple[float, ...]
    super_polynomial: bool
    anchor: str = "four_species.polynomial_growth"

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


def growth_exponent(horizons: Sequence[float], sups: Sequence[float]) -> tuple[float, tuple[float, ...], bool]:
    """Slope of ``log sup`` against ``log T`` plus the consecutive slopes.

    Growth counts as super-polynomial when the consecutive slopes keep rising
    and the last exceeds the first by more than 0.1.
    """
    lt, ls = np.log(np.asarray(horizons, float)), np.log(np.asarray(sups, float))
    slope = float(np.polyfit(lt, ls, 1)[0])
    local = tuple(float(x) for x in np.diff(ls) / np.diff(lt))
    rising = len(local) >= 2 and all(b > a for a, b in zip(local, local[1:])) and local[-1] - local[0] > 0.1
    return slope, local, bool(rising)


def polynomial_growth_probe(cfg: ExperimentConfig, T_list: Sequence[float] | None = None,
                            kind: str = "four_species") -> GrowthReport:
    """Fit the growth of ``||a||_{L^inf(Omega_T)}`` in ``T``.

    ``kind="four_species"`` reruns the system for each horizon and takes the
    sup over all species; ``kind="heat_forcing"`` integrates ``du/dt = lap u + 1``
    from zero, whose sup equals ``T``.
    """
    horizons = tuple(float(T) for T in (T_list or cfg.T_list))
    if len(horizons) < 2 or min(horizons) <= 0:
        raise ValueError("need at least two positive horizons")
    sups = []
    for T in horizons:
        if kind == "four_species":
            res = simulate(_network(cfg), initial_state(cfg), T, cfg.dt, cfg.sample_every, cfg.p, cfg.ceiling)
            sups.append(float(np.abs(res.trajectory.data).max()))
        elif kind == "heat_forcing":
            tr = solve_forward_heat(cfg.grid, 1.0, 1.0, 0.0, T, cfg.dt)
            sups.append(float(np.abs(tr.data).max()))
        else:
            raise ValueError(f"unknown probe kind {kind!r}")
    slope, local, flag = growth_exponent(horizons, sups)
    return GrowthReport(kind, horizons, tuple(sups), slope, local, flag)


# --------------------------------------------------------------------------
# run directories
# --------------------------------------------------------------------------

def environment() -> dict:
    from . import __version__

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "dualrd": __version__,
    }


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_run(out: str | Path, name: str, config: dict, report: dict, rows: list[dict] | None = None,
              anchors: Sequence[str] = ()) -> Path:
    """Write ``report.json``, ``series.csv`` and ``manifest.json`` into ``out/<name>-<hash>``."""
    digest = hashlib.sha256(json.dumps(jsonable(config), sort_keys=True).encode()).hexdigest()[:12]
    run_dir = Path(out) / f"{name}-{digest}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if rows is not None:
        write_csv(run_dir / "series.csv", rows)
    manifest = {
        "name": name,
        "config": jsonable(config),
        "config_hash": digest,
        "anchors": sorted(set(anchors)),
        "environment": environment(),
        "files": sorted(p.name for p in run_dir.iterdir() if p.name != "manifest.json"),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return run_dir


def run_experiment(cfg: ExperimentConfig):
    """Dispatch on ``cfg.kind``."""
    if cfg.kind == "prop2":
        return run_prop2(cfg)
    if cfg.kind == "prop3":
        return run_prop3(cfg)
    if cfg.kind == "prop5":
        return run_prop5(cfg)
    return polynomial_growth_probe(cfg)


def run_many(configs: Sequence[ExperimentConfig], workers: int = 1) -> list:
    """Run independent experiments, in worker processes when ``workers > 1``."""
    if workers <= 1:
        return [run_experiment(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, configs))
