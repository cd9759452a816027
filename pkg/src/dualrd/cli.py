"""Command-line entry point: ``dualrd <command> [options]``.

JSON reports go to stdout; commands that produce series also write a run
directory (``--out``) with ``report.json``, ``series.csv`` and
``manifest.json``.  ``--config FILE`` (TOML or JSON) supplies option values
by their long names; flags given on the command line take precedence.

Exit codes: 0 success, 2 configuration error, 3 violated hypothesis,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys


from . import __version__
from .equilibrium import equilibrium_for_state, four_species_equilibrium
from .errors import HypothesisError, NumericalError
from .estimates import (
    conservative_provider,
    duality_prefactor,
    jsonable,
    lemma33_exponents,
    lemma36_iteration,
    prop4_conditions,
    prop4_zk_sequence,
    prop5_pn_sequence,
    remark_rein_exponent,
    select_2d_exponent,
)
from .experiments import (
    ExperimentConfig,
    duality_ensemble,
    initial_state,
    run_experiment,
    write_run,
)
from .grid import grid_from_flags
from .heat import (
    DEFAULT_SEED,
    CoefficientField,
    RegularityConstant,
    analytic_Cm2,
    estimate_Cmq,
    interpolated_Cmr,
)
from .reaction import ReactionNetwork, SpeciesState, four_species_network, read_config, simulate

logger = logging.getLogger("dualrd")

EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# value parsing
# --------------------------------------------------------------------------

def parse_cells(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(c) for c in text)
    try:
        return tuple(int(c) for c in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid expects N or NxM, got {text!r}") from None


def parse_floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    if isinstance(text, (int, float)):
        return (float(text),)
    try:
        return tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(args):
    cells = parse_cells(args.grid)
    extents = parse_floats(args.extent) if args.extent is not None else None
    return grid_from_flags(cells, extents)


def _emit(obj) -> None:
    print(json.dumps(jsonable(obj), indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _constant_for(m: float, q: float, args) -> RegularityConstant:
    if args.C is not None:
        return RegularityConstant(m=m, q=q, value=args.C, provenance="empirical")
    if q == 2:
        return analytic_Cm2(m)
    if args.C3h is not None:
        return interpolated_Cmr(m, q, args.C3h)
    raise ConfigError(f"no constant available for q={q}: pass --C (estimate) or --C3h (C_(m,3/2) bound)")


def cmd_constants(args) -> int:
    which = args.which
    if which == "duality":
        m = 0.5 * (args.a + args.b)
        out = duality_prefactor(args.a, args.b, args.q, _constant_for(m, args.q, args)).to_dict()
    elif which == "interp":
        out = interpolated_Cmr(args.m, args.r, args.C3h).to_dict()
    elif which == "select2d":
        out = select_2d_exponent(args.a, args.b, args.C3h).to_dict()
    elif which == "lemma33":
        out = lemma33_exponents(args.N, args.q).to_dict()
    elif which == "lemma36":
        seq = lemma36_iteration(args.N, args.q0)
        out = dict(seq.to_dict(), steps=seq.steps_to_target)
    elif which == "zk":
        out = prop4_zk_sequence(args.N, args.Q, args.z0).to_dict()
    elif which == "pn":
        out = prop5_pn_sequence(args.p0).to_dict()
    elif which == "rein":
        out = {"N": args.N, "p": args.p, "r_max": remark_rein_exponent(args.N, args.p),
               "anchor": "duality.initial_data_relaxation"}
    elif which == "prop4":
        net = ReactionNetwork.load(args.network)
        out = prop4_conditions(net, conservative_provider(args.C3h), args.N).to_dict()
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigError(f"unknown constant {which!r}")
    _emit(out)
    return 0


def _network_from(args) -> ReactionNetwork:
    if args.network:
        net = ReactionNetwork.load(args.network)
        if args.d is not None:
            net = net.with_diffusion(parse_floats(args.d))
        return net
    d = parse_floats(args.d) if args.d is not None else (1.0, 2.0, 0.5, 1.5)
    return four_species_network(d=d, k=args.k, l=args.l)


def cmd_simulate(args) -> int:
    grid = _grid(args)
    net = _network_from(args)
    if args.initial is not None:
        init = SpeciesState.uniform(grid, parse_floats(args.initial))
    else:
        cfg = ExperimentConfig(cells=grid.cells, extents=grid.extents, d=net.d, k=net.k, l=net.l,
                               amplitude=args.amplitude, perturbation=args.perturbation, seed=args.seed,
                               T=args.T, dt=args.dt)
        if net.n != 4:
            raise ConfigError("--initial is required for networks other than the four-species one")
        init = initial_state(cfg)
    res = simulate(net, init, args.T, args.dt, args.sample_every, args.p, args.ceiling)
    diag = res.diagnostics
    report = {
        "anchor": "reaction_system.simulation",
        "network": net.to_dict(),
        "grid": grid.to_dict(),
        "T": args.T,
        "dt": args.dt,
        "max_mass_drift": diag.max_mass_drift,
        "min_value": diag.min_value,
        "rejections": diag.rejections,
        "equilibrium": None if diag.equilibrium is None else diag.equilibrium.tolist(),
        "final_distance": float(diag.distance[-1]),
        "final_linf": diag.linf[-1].tolist(),
    }
    config = {"command": "simulate", **_config_of(args)}
    run_dir = write_run(args.out, "simulate", config, jsonable(report), diag.rows(), [report["anchor"]])
    report["run_dir"] = str(run_dir)
    _emit(report)
    return 0


def cmd_equilibrium(args) -> int:
    if args.masses is not None:
        m = parse_floats(args.masses)
        if len(m) != 3:
            raise ConfigError("--masses expects m12,m14,m23")
        res = four_species_equilibrium(*m, k=args.k, l=args.l)
    else:
        if args.network is None or args.averages is None:
            raise ConfigError("pass --masses, or --network together with --averages")
        res = equilibrium_for_state(ReactionNetwork.load(args.network), parse_floats(args.averages))
    _emit(dict(res.to_dict(), anchor="equilibrium.detailed_balance"))
    return 0


def cmd_verify(args) -> int:
    grid = _grid(args)
    M = CoefficientField.checkerboard(grid, args.a, args.b, block=args.block, period=args.period)
    C = None
    if args.C is not None:
        C = RegularityConstant(m=0.5 * (args.a + args.b), q=args.q, value=args.C, provenance="empirical")
    elif args.q != 2:
        raise ConfigError("only the q = 2 constant is built in; pass --C for other q")
    checks = duality_ensemble(grid, M, args.p, args.T, args.dt, args.samples, args.seed, C)
    rows = [{"sample": i, "measured": c.measured, "bound": c.bound, "ratio": c.ratio} for i, c in enumerate(checks)]
    ratios = [c.ratio for c in checks if c.ratio is not None]
    report = {
        "anchor": "duality.forward_lp_bound",
        "samples": len(checks),
        "max_ratio": max(ratios) if ratios else None,
        "all_hold": all(c.holds for c in checks),
        "guaranteed": all(c.guaranteed for c in checks),
        "duality": checks[0].duality.to_dict(),
    }
    config = {"command": "verify", **_config_of(args)}
    run_dir = write_run(args.out, "verify", config, jsonable(report), rows, [report["anchor"]])
    report["run_dir"] = str(run_dir)
    _emit(report)
    return 0


def cmd_estimate_c(args) -> int:
    grid = _grid(args)
    dt = args.dt if args.dt is not None else args.T / 64
    est = estimate_Cmq(grid, args.m, args.q, T=args.T, samples=args.samples, seed=args.seed, dt=dt)
    report = dict(est.to_dict(), anchor="regularity.constant_estimate", m_times_C=args.m * est.value)
    if args.q == 2:
        report["analytic_bound"] = 1.0 / args.m
    rows = [{"sample": i, "ratio": r} for i, r in enumerate(est.ratios)]
    config = {"command": "estimate-c", **_config_of(args)}
    run_dir = write_run(args.out, "estimate-c", config, jsonable(report), rows, [report["anchor"]])
    report["run_dir"] = str(run_dir)
    _emit(report)
    return 0


def cmd_experiment(args) -> int:
    desc = {"kind": args.kind}
    for key in ("T", "dt", "p", "seed", "amplitude", "sample_every", "t_start", "perturbation"):
        if getattr(args, key) is not None:
            desc[key] = getattr(args, key)
    if args.grid is not None:
        desc["cells"] = parse_cells(args.grid)
    if args.extent is not None:
        ext = parse_floats(args.extent)
        desc["extents"] = ext * len(desc.get("cells", (0, 0))) if len(ext) == 1 else ext
    if args.d is not None:
        desc["d"] = parse_floats(args.d)
    if args.T_list is not None:
        desc["T_list"] = parse_floats(args.T_list)
    cfg = ExperimentConfig.from_dict(desc)
    report = run_experiment(cfg)
    out = report.to_dict()
    rows = getattr(report, "rows", None)
    if rows is None and hasattr(report, "horizons"):
        rows = [{"T": T, "sup": s} for T, s in zip(report.horizons, report.sup_norms)]
    run_dir = write_run(args.out, cfg.kind, cfg.to_dict(), out, rows, [out["anchor"]])
    out["run_dir"] = str(run_dir)
    _emit(out)
    return 0


def _config_of(args) -> dict:
    skip = {"func", "config", "verbose", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, grid: str | None = "64x64", T: float | None = 1.0,
            dt: float | None = 1e-2) -> None:
    p.add_argument("--grid", default=grid, help="cells per axis, N or NxM")
    p.add_argument("--extent", default=None, help="domain lengths, LX[,LY] (default 1)")
    p.add_argument("--T", type=float, default=T)
    p.add_argument("--dt", type=float, default=dt)
    p.add_argument("--seed", type=int, default=None if T is None else DEFAULT_SEED)
    p.add_argument("--out", default="runs", help="parent directory for run directories")


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="dualrd", description=__doc__.splitlines()[0])
    root.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    root.add_argument("--config", default=None, help="TOML or JSON file of option values")
    root.add_argument("-v", "--verbose", action="store_true")
    sub = root.add_subparsers(dest="command", required=True)

    cons = sub.add_parser("constants", help="closed-form constants and exponent sequences")
    csub = cons.add_subparsers(dest="which", required=True)

    def constant(name, help_, **opts):
        p = csub.add_parser(name, help=help_)
        for flag, kw in opts.items():
            p.add_argument(f"--{flag}", **kw)
        p.set_defaults(func=cmd_constants)
        return p

    req = dict(type=float, required=True)
    opt = dict(type=float, default=None)
    constant("duality", "D and the forward prefactor", a=req, b=req, q=dict(type=float, default=2.0), C=opt, C3h=opt)
    constant("interp", "interpolated bound on C_(m,r)", m=req, r=req, C3h=req)
    constant("select2d", "exponent p' for the 2D argument", a=req, b=req, C3h=req)
    constant("lemma33", "heat L^p gain sequence", N=dict(type=int, required=True), q=req)
    constant("lemma36", "quadratic bootstrap iteration", N=dict(type=int, required=True), q0=req)
    constant("zk", "general-system bootstrap", N=dict(type=int, required=True), Q=req, z0=req)
    constant("pn", "degenerate-diffusion exponent sequence", p0=req)
    constant("rein", "initial-data exponent", N=dict(type=int, required=True), p=req)
    constant("prop4", "spread conditions for a network", network=dict(required=True),
             N=dict(type=int, default=2), C3h=opt)

    def command(name, help_, func, **common):
        p = sub.add_parser(name, help=help_)
        _common(p, **common)
        p.set_defaults(func=func)
        return p

    p = command("simulate", "integrate a reaction-diffusion system", cmd_simulate, T=10.0, dt=1e-3)
    p.add_argument("--network", default=None, help="network file (TOML/JSON); default four species")
    p.add_argument("--d", default=None, help="diffusion rates, comma separated")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--initial", default=None, help="uniform initial values, comma separated")
    p.add_argument("--amplitude", type=float, default=0.2)
    p.add_argument("--perturbation", choices=("cosine", "random"), default="cosine")
    p.add_argument("--sample-every", dest="sample_every", type=int, default=50)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--ceiling", type=float, default=1e6, help="blow-up guard on concentrations")

    p = sub.add_parser("equilibrium", help="equilibrium fixed by the conserved masses")
    p.add_argument("--masses", default=None, help="m12,m14,m23 for the four-species network")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--network", default=None)
    p.add_argument("--averages", default=None, help="species averages, comma separated")
    p.set_defaults(func=cmd_equilibrium)

    p = command("verify", "check the forward duality bound on a seeded ensemble", cmd_verify, T=1.0, dt=1e-2)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=3.0)
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--C", type=float, default=None, help="constant C_(m,q) to use instead of 1/m")
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--block", type=int, default=8)
    p.add_argument("--period", type=float, default=0.1)

    p = command("estimate-c", "empirical C_(m,q) from a seeded forcing ensemble", cmd_estimate_c, T=1.0, dt=None)
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=64)

    p = command("experiment", "run an experiment driver", cmd_experiment, grid=None, T=None, dt=None)
    p.add_argument("kind", choices=("prop2", "prop3", "prop5", "growth"))
    p.add_argument("--d", default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--perturbation", choices=("cosine", "random"), default=None)
    p.add_argument("--sample-every", dest="sample_every", type=int, default=None)
    p.add_argument("--t-start", dest="t_start", type=float, default=None)
    p.add_argument("--T-list", dest="T_list", default=None, help="horizons for the growth probe")
    return root


def _subparser(root: argparse.ArgumentParser, argv) -> argparse.ArgumentParser | None:
    """The (possibly nested) subparser selected by ``argv``."""
    parser, rest = root, list(argv)
    while True:
        subs = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
        if not subs:
            return parser
        names = [t for t in rest if t in subs[0].choices]
        if not names:
            return None
        parser = subs[0].choices[names[0]]
        rest = rest[rest.index(names[0]) + 1:]


def inject_config(root: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Turn ``--config FILE`` entries into flags not already present in ``argv``."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ConfigError("--config needs a file name")
    path = argv[i + 1]
    argv = argv[:i] + argv[i + 2:]
    desc = read_config(path)
    if not isinstance(desc, dict):
        raise ConfigError("config file must hold a table of option values")
    parser = _subparser(root, argv)
    if parser is None:
        raise ConfigError("--config needs a command")
    flags = {}
    for action in parser._actions:
        longs = [o for o in action.option_strings if o.startswith("--")]
        if longs and action.dest not in ("help",):
            flags[action.dest] = longs[0]
    extra = []
    for key, value in desc.items():
        dest = key.replace("-", "_")
        if dest not in flags:
            raise ConfigError(f"unknown config key {key!r} for this command")
        if flags[dest] in argv:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        extra += [flags[dest], str(value)]
    return argv + extra


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    root = build_parser()
    try:
        argv = inject_config(root, argv)
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args = root.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HypothesisError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
