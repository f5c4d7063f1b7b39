"""Command-line entry points binding the package into reproducible runs.

Every command takes ``--config <file.toml>`` plus flag overrides, writes
its artifacts and a ``resolved_config.toml`` echo into the output
directory, and exits 0 on success, 2 on configuration errors, 3 on
numerical or I/O failures. Stochastic commands refuse to run without a
seed. Timing goes to stderr so output files stay byte-reproducible.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import config as _config
from . import experiments, io, limit, model, particle
from .errors import ConfigError, NumericalError, StpnetError, StructureError

_STOCHASTIC = {"simulate", "limit-process", "convergence", "deviation",
               "memory", "phase-portrait", "extinction"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 2 via ConfigError, not sys.exit
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="stpnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands = [
        ("simulate", "event-driven particle run"),
        ("limit-ode", "integrate the limit ODE"),
        ("limit-process", "sample the one-particle limit jump process"),
        ("equilibria", "fixed points with stability"),
        ("nullclines", "null-cline curves"),
        ("bifurcation", "fixed-point count along a kappa grid"),
        ("convergence", "mean-field convergence-rate study"),
        ("deviation", "deviation-probability study"),
        ("memory", "metastable dwell-time study"),
        ("phase-portrait", "paired particle/ODE trajectories"),
        ("extinction", "extinction study"),
        ("validate", "model diagnostics"),
    ]
    for name, help_text in commands:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--seed", type=int, help="master seed (mandatory for stochastic commands)")
        p.add_argument("--out", help="output directory (overrides [run] out_dir)")
        p.add_argument("--threads", type=int, help="replica parallelism cap")
        p.add_argument("--n", type=int, help="number of neurons")
        p.add_argument("--init", help="initial pair 'u,r'")
        p.add_argument("--horizon", type=float, help="simulation horizon")
        p.add_argument("--strategy", choices=("monotone", "global"))
        p.add_argument("--grid-points", type=int, dest="grid_points")
        p.add_argument("--replicas", type=int, help="replica count for studies")
        p.add_argument("--epsilon", type=float, help="study epsilon")
    return parser


def _apply_overrides(raw: dict, args) -> dict:
    def put(section, key, value):
        if value is not None:
            raw.setdefault(section, {})[key] = value

    put("run", "seed", args.seed)
    put("run", "out_dir", args.out)
    put("run", "threads", args.threads)
    put("run", "n", args.n)
    put("run", "horizon", args.horizon)
    put("run", "strategy", args.strategy)
    put("run", "grid_points", args.grid_points)
    put("study", "replicas", args.replicas)
    put("study", "epsilon", args.epsilon)
    if args.init is not None:
        try:
            u_str, r_str = args.init.split(",")
            u, r = float(u_str), float(r_str)
        except ValueError as exc:
            raise ConfigError(f"--init expects 'u,r', got {args.init!r}") from exc
        put("init", "u", u)
        put("init", "r", r)
    return raw


def _load(args, command: str) -> _config.RunConfig:
    path = Path(args.config)
    try:
        with open(path, "rb") as fh:
            if sys.version_info >= (3, 11):
                import tomllib as toml
            else:
                import tomli as toml
            raw = toml.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except Exception as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = _config.build(_apply_overrides(raw, args))
    if command in _STOCHASTIC and cfg.run["seed"] is None:
        raise ConfigError(f"{command} is stochastic: provide --seed or [run] seed")
    return cfg


def _outdir(cfg: _config.RunConfig) -> Path:
    out = Path(cfg.run["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "resolved_config.toml", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_config.emit(cfg.resolved))
    return out


def _cmd_simulate(cfg: _config.RunConfig, out: Path) -> None:
    run = cfg.run
    traj = particle.simulate(
        cfg.params, run["n"], cfg.init, run["horizon"], grid=run["grid_points"],
        strategy=run["strategy"], seed=run["seed"], snapshots=run["snapshots"],
        max_events=run["max_events"],
    )
    io.write_trajectory(traj, out / "trajectory.csv")
    io.write_events(traj.events, out / "events.csv")
    io.write_json({
        "n": traj.n,
        "spike_count": traj.spike_count,
        "last_spike_time": traj.last_spike_time,
        "extinct": traj.extinct,
        "final_mean_u": float(traj.mean_u[-1]),
        "final_mean_r": float(traj.mean_r[-1]),
    }, out / "summary.json")
    print(f"simulate: {traj.spike_count} spikes, extinct={traj.extinct}, "
          f"final mean (u, r) = ({traj.mean_u[-1]:.6g}, {traj.mean_r[-1]:.6g})")


def _init_pair(cfg: _config.RunConfig) -> tuple[float, float]:
    init_cfg = cfg.resolved["init"]
    return init_cfg["u"], init_cfg["r"]


def _cmd_limit_ode(cfg: _config.RunConfig, out: Path) -> None:
    u0, r0 = _init_pair(cfg)
    traj = limit.integrate_ode(cfg.params, u0, r0, cfg.run["horizon"],
                               rel_tol=cfg.limit["rel_tol"], abs_tol=cfg.limit["abs_tol"],
                               grid=cfg.run["grid_points"])
    io.write_limit_trajectory(traj, out / "limit_trajectory.csv")
    print(f"limit-ode: endpoint (u, r) = ({traj.u[-1]:.6g}, {traj.r[-1]:.6g}), "
          f"{traj.steps_accepted} steps")


def _cmd_limit_process(cfg: _config.RunConfig, out: Path) -> None:
    u0, r0 = _init_pair(cfg)
    horizon = cfg.run["horizon"]
    traj = limit.integrate_ode(cfg.params, u0, r0, horizon,
                               rel_tol=cfg.limit["rel_tol"], abs_tol=cfg.limit["abs_tol"],
                               grid=cfg.run["grid_points"])
    path = limit.simulate_limit_process(cfg.params, traj, r0, horizon, seed=cfg.run["seed"])
    io.write_lines(out / "limit_spikes.csv", ["time"] + [io.fmt(t) for t in path.spike_times])
    r_vals = path.calcium_at(traj.grid)
    io.write_lines(out / "limit_path.csv",
                    ["t,r"] + [f"{io.fmt(t)},{io.fmt(r)}" for t, r in zip(traj.grid, r_vals)])
    print(f"limit-process: {len(path.spike_times)} spikes over [0, {horizon:g}]")


def _cmd_equilibria(cfg: _config.RunConfig, out: Path) -> None:
    eqs = limit.equilibria(cfg.params, search_max=cfg.resolved["equilibria"]["search_max"])
    io.write_equilibria(eqs, out / "equilibria.json")
    for e in eqs:
        print(f"u* = {e.u_star:.10g}  r* = {e.r_star:.10g}  [{e.classification}]")


def _nullcline_grid(cfg: _config.RunConfig) -> np.ndarray:
    u_max = cfg.resolved["nullclines"]["u_max"]
    if u_max is None:
        eqs = limit.equilibria(cfg.params)
        u_max = 1.5 * eqs[-1].u_star if len(eqs) > 1 else 2.0 * cfg.params.kappa * cfg.params.rate.bound ** 2
        u_max = max(u_max, 1.0)
    points = cfg.resolved["nullclines"]["points"]
    return np.concatenate([[0.0], np.geomspace(u_max * 1e-5, u_max, points - 1)])


def _cmd_nullclines(cfg: _config.RunConfig, out: Path) -> None:
    curves = limit.nullclines(cfg.params, _nullcline_grid(cfg))
    io.write_nullclines(curves, out / "nullclines.csv")
    print(f"nullclines: {len(curves.u)} samples up to u = {curves.u[-1]:.6g}")


def _cmd_bifurcation(cfg: _config.RunConfig, out: Path) -> None:
    bc = cfg.resolved["bifurcation"]
    grid = np.geomspace(bc["kappa_min"], bc["kappa_max"], bc["points"])
    scan = limit.bifurcation_scan(cfg.params.rate, grid)
    io.write_json({
        "kappas": list(scan.kappas),
        "root_counts": list(scan.root_counts),
        "kappa_c": scan.kappa_c,
        "bracket": list(scan.bracket) if scan.bracket else None,
    }, out / "bifurcation.json")
    print(f"bifurcation: kappa_c = {scan.kappa_c}")


def _cmd_validate(cfg: _config.RunConfig, out: Path) -> None:
    diag = model.validate_params(cfg.params, d=cfg.resolved["validate"]["d"])
    io.write_json({
        "kappa": diag.kappa,
        "rate_bound": diag.rate_bound,
        "lipschitz": diag.lipschitz,
        "coupling_ok": diag.coupling_ok,
        "root_count": diag.root_count,
        "three_root_structure": diag.three_root_structure,
        "roots": list(diag.roots),
    }, out / "validate.json")
    print(f"kappa = {diag.kappa:.10g} (alpha/(beta*lambda)), K = {diag.rate_bound:.10g}, "
          f"L = {diag.lipschitz:.10g}")
    print(f"coupling kappa >= D: {'ok' if diag.coupling_ok else 'FAILS'}; "
          f"{diag.root_count} fixed point(s): "
          + ", ".join(f"{r:.6g}" for r in diag.roots))


def _cmd_convergence(cfg: _config.RunConfig, out: Path) -> None:
    report = experiments.convergence_study(
        cfg.params, cfg.init, cfg.study["t"], cfg.study["n_list"],
        cfg.study["replicas"], cfg.run["seed"],
        grid_points=cfg.run["grid_points"], strategy=cfg.run["strategy"],
        threads=cfg.run["threads"], rel_tol=cfg.limit["rel_tol"],
        abs_tol=cfg.limit["abs_tol"],
    )
    io.write_report(report, out / "report.json")
    print(f"convergence: slope = {report.slope} CI = {report.slope_ci}")


def _cmd_deviation(cfg: _config.RunConfig, out: Path) -> None:
    report = experiments.deviation_study(
        cfg.params, cfg.init, cfg.study["t"], cfg.study["epsilon"],
        cfg.study["n_list"], cfg.study["replicas"], cfg.run["seed"],
        grid_points=cfg.run["grid_points"], strategy=cfg.run["strategy"],
        threads=cfg.run["threads"], rel_tol=cfg.limit["rel_tol"],
        abs_tol=cfg.limit["abs_tol"],
    )
    io.write_report(report, out / "report.json")
    print("deviation: " + ", ".join(f"p({row['n']})={row['p_hat']:.3f}" for row in report.rows))


def _cmd_memory(cfg: _config.RunConfig, out: Path) -> None:
    report = experiments.memory_study(
        cfg.params, cfg.study["epsilon"], cfg.study["n_list"],
        cfg.study["replicas"], cfg.study["horizon"], cfg.run["seed"],
        strategy=cfg.run["strategy"], threads=cfg.run["threads"],
    )
    io.write_report(report, out / "report.json")
    medians = [row["median_exit"] for row in report.rows if row["n"] is not None]
    print(f"memory: median exits = {medians}, increasing = "
          f"{report.checks['median_exit_increasing']}")


def _cmd_phase_portrait(cfg: _config.RunConfig, out: Path) -> None:
    pp = experiments.phase_portrait(
        cfg.params, cfg.resolved["phase"]["init_list"], cfg.run["n"],
        cfg.run["horizon"], cfg.run["seed"], grid_points=cfg.run["grid_points"],
        relative_width=cfg.resolved["init"]["relative_width"],
        strategy=cfg.run["strategy"], threads=cfg.run["threads"],
        rel_tol=cfg.limit["rel_tol"], abs_tol=cfg.limit["abs_tol"],
    )
    for i, (traj, ode_traj) in enumerate(zip(pp.particle, pp.ode)):
        io.write_trajectory(traj, out / f"phase_particle_{i}.csv")
        io.write_limit_trajectory(ode_traj, out / f"phase_ode_{i}.csv")
    io.write_nullclines(pp.curves, out / "nullclines.csv")
    io.write_report(pp.report, out / "report.json")
    print(f"phase-portrait: {len(pp.inits)} trajectory pairs written")


def _cmd_extinction(cfg: _config.RunConfig, out: Path) -> None:
    report = experiments.extinction_study(
        cfg.params, cfg.run["n"], cfg.study["replicas"], cfg.study["horizon"],
        cfg.run["seed"], init=cfg.init, strategy=cfg.run["strategy"],
        threads=cfg.run["threads"],
    )
    io.write_report(report, out / "report.json")
    row = report.rows[0]
    print(f"extinction: fraction = {row['extinct_fraction']:.3f}, "
          f"median last spike = {row['q50']:.6g}")


_HANDLERS = {
    "simulate": _cmd_simulate,
    "limit-ode": _cmd_limit_ode,
    "limit-process": _cmd_limit_process,
    "equilibria": _cmd_equilibria,
    "nullclines": _cmd_nullclines,
    "bifurcation": _cmd_bifurcation,
    "convergence": _cmd_convergence,
    "deviation": _cmd_deviation,
    "memory": _cmd_memory,
    "phase-portrait": _cmd_phase_portrait,
    "extinction": _cmd_extinction,
    "validate": _cmd_validate,
}


def cli_dispatch(argv) -> int:
    """Parse arguments, run one subcommand, and map errors to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        cfg = _load(args, args.command)
        out = _outdir(cfg)
        started = time.perf_counter()
        _HANDLERS[args.command](cfg, out)
        print(f"[{args.command}] done in {time.perf_counter() - started:.2f}s -> {out}",
              file=sys.stderr)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, StructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except StpnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
