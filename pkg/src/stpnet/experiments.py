"""Monte Carlo studies at desk scale.

Each study runs independent replicas of the particle system against the
deterministic limit flow and reduces them in replica-index order, so a
report is a pure function of (master seed, configuration). Replica RNG
streams are derived by feeding (master seed, stream key) through numpy's
SeedSequence mixing, which keeps streams independent of scheduling.

Replicas may run in parallel processes (``threads`` > 1); the reduction
order never depends on the schedule.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .limit import (
    LimitTrajectory,
    Nullclines,
    attracting_equilibrium,
    integrate_ode,
    nullclines,
)
from .model import InitSpec, ModelParams, PointMass, UniformBand
from .particle import (
    MONOTONE,
    RATE_FLOOR,
    Trajectory,
    _run_segment,
    _UniformStream,
    init_state,
    simulate,
)

_Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (default 95%)."""
    if trials <= 0:
        raise ConfigError("wilson interval needs at least one trial")
    p = successes / trials
    den = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4 * trials * trials)) / den
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def _replica_rng(master_seed: int, key: tuple) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def _run_ordered(worker, tasks: list, threads: int) -> list:
    if threads <= 1:
        return [worker(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(worker, tasks, chunksize=chunk))


@dataclass
class ExperimentReport:
    """Reduced output of one study.

    ``rows`` carries one dict per parameter point (schema depends on the
    study and is documented in the README); ``checks`` holds named boolean
    verdicts with their supporting numbers. Wall-clock time is metadata
    and excluded from serialised comparisons.
    """

    experiment: str
    config: dict
    master_seed: int
    rows: list
    slope: Optional[float] = None
    slope_ci: Optional[tuple] = None
    degenerate_fit: bool = False
    checks: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    def __post_init__(self) -> None:
        for row in self.rows:
            if "std_error" in row and row["std_error"] is not None and row["std_error"] < 0.0:
                raise ConfigError("standard errors cannot be negative")
        if self.slope is not None and self.slope_ci is not None:
            lo, hi = self.slope_ci
            if not lo <= self.slope <= hi:
                raise ConfigError("slope confidence interval must contain the estimate")

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "experiment": self.experiment,
            "config": self.config,
            "master_seed": self.master_seed,
            "rows": self.rows,
            "slope": self.slope,
            "slope_ci": list(self.slope_ci) if self.slope_ci is not None else None,
            "degenerate_fit": self.degenerate_fit,
            "checks": self.checks,
        }
        if include_timing:
            out["wall_clock_seconds"] = self.wall_clock_seconds
        return out


# --------------------------------------------------------------------------
# deviation of one replica from the limit flow

def _sup_deviation_task(task) -> float:
    (params, init, n, t_end, grid, u_ode, r_ode, strategy, master_seed, key) = task
    rng = _replica_rng(master_seed, key)
    traj = simulate(params, n, init, t_end, grid=grid, strategy=strategy,
                    seed=rng, max_events=0)
    return float(np.max(np.abs(traj.mean_u - u_ode) + np.abs(traj.mean_r - r_ode)))


def _require_pointmass(init: InitSpec) -> PointMass:
    if not isinstance(init, PointMass):
        raise ConfigError("this study compares against the deterministic limit "
                          "flow and needs a point-mass initial condition")
    return init


def convergence_study(
    params: ModelParams,
    init: PointMass,
    t_end: float,
    n_list: Sequence[int],
    replicas: int,
    seed: int,
    *,
    grid_points: int = 201,
    strategy: str = MONOTONE,
    threads: int = 1,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
) -> ExperimentReport:
    """Estimate e(N) = E[sup_t |U_t - u_t| + |Rbar_t - r_t|] per system
    size and fit the log-log slope (the mean-field coupling predicts -1/2).
    """
    start = time.perf_counter()
    init = _require_pointmass(init)
    ns = sorted(int(n) for n in n_list)
    if len(set(ns)) < 4:
        raise ConfigError("need at least 4 distinct system sizes for a slope fit")
    if max(ns) < 10 ** 1.5 * min(ns):
        raise ConfigError("system sizes must span at least 1.5 decades")
    ode = integrate_ode(params, init.u0, init.r0, t_end,
                        rel_tol=rel_tol, abs_tol=abs_tol, grid=grid_points)
    rows = []
    means = []
    for j, n in enumerate(ns):
        tasks = [(params, init, n, t_end, ode.grid, ode.u, ode.r, strategy, seed, (j, k))
                 for k in range(replicas)]
        devs = np.array(_run_ordered(_sup_deviation_task, tasks, threads))
        se = float(devs.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
        rows.append({"n": n, "mean": float(devs.mean()), "std_error": se, "replicas": replicas})
        means.append(float(devs.mean()))
    degenerate = any(m <= 0.0 for m in means)
    slope = ci = None
    if not degenerate:
        x = np.log(ns)
        y = np.log(means)
        w = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
        slope = float(np.sum(w * y))
        # CI from the replica-propagated uncertainty of each log-mean
        # (d log m = se/m), so the width shrinks like 1/sqrt(replicas)
        rel_se = np.array([row["std_error"] / row["mean"] for row in rows])
        half = _Z95 * float(np.sqrt(np.sum((w * rel_se) ** 2)))
        ci = (slope - half, slope + half)
    return ExperimentReport(
        experiment="convergence",
        config={"t_end": t_end, "n_list": ns, "replicas": replicas,
                "grid_points": grid_points, "strategy": strategy,
                "init": {"u0": init.u0, "r0": init.r0}},
        master_seed=seed,
        rows=rows,
        slope=slope,
        slope_ci=ci,
        degenerate_fit=degenerate,
        checks={},
        wall_clock_seconds=time.perf_counter() - start,
    )


def deviation_study(
    params: ModelParams,
    init: PointMass,
    t_end: float,
    epsilon: float,
    n_list: Sequence[int],
    replicas: int,
    seed: int,
    *,
    grid_points: int = 201,
    strategy: str = MONOTONE,
    threads: int = 1,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
) -> ExperimentReport:
    """Empirical probability that the sup deviation from the limit flow
    exceeds N^(-1/5) * epsilon, with Wilson intervals and a monotonicity
    verdict (intervals of successive sizes must be non-overlapping or
    nested toward zero as the probability drops)."""
    start = time.perf_counter()
    init = _require_pointmass(init)
    if not epsilon > 0.0:
        raise ConfigError("epsilon must be positive")
    ns = sorted(int(n) for n in n_list)
    ode = integrate_ode(params, init.u0, init.r0, t_end,
                        rel_tol=rel_tol, abs_tol=abs_tol, grid=grid_points)
    rows = []
    for j, n in enumerate(ns):
        tasks = [(params, init, n, t_end, ode.grid, ode.u, ode.r, strategy, seed, (j, k))
                 for k in range(replicas)]
        devs = np.array(_run_ordered(_sup_deviation_task, tasks, threads))
        threshold = n ** (-0.2) * epsilon
        hits = int(np.sum(devs >= threshold))
        lo, hi = wilson_interval(hits, replicas)
        rows.append({
            "n": n, "threshold": threshold, "exceedances": hits,
            "replicas": replicas, "p_hat": hits / replicas,
            "wilson_low": lo, "wilson_high": hi,
        })
    monotone = True
    for a, b in zip(rows, rows[1:]):
        decreasing = b["p_hat"] <= a["p_hat"]
        separated = b["wilson_high"] <= a["wilson_low"]
        nested = b["wilson_high"] <= a["wilson_high"] and b["wilson_low"] <= a["wilson_low"]
        if not (decreasing and (separated or nested)):
            monotone = False
    return ExperimentReport(
        experiment="deviation",
        config={"t_end": t_end, "epsilon": epsilon, "n_list": ns,
                "replicas": replicas, "grid_points": grid_points,
                "strategy": strategy, "init": {"u0": init.u0, "r0": init.r0}},
        master_seed=seed,
        rows=rows,
        checks={"p_hat_nonincreasing": monotone},
        wall_clock_seconds=time.perf_counter() - start,
    )


# --------------------------------------------------------------------------
# metastable dwell time around the upper equilibrium

def _exit_time_task(task) -> float:
    (params, n, u_star, r_star, radius, horizon, strategy, master_seed, key) = task
    rng = _replica_rng(master_seed, key)
    state = init_state(n, PointMass(u_star, r_star), rng)
    draws = _UniformStream(rng)
    phi = params.rate.scalar_fn()
    beta, lam = params.beta, params.lam
    while True:
        t0 = state.t
        mu0 = state.mean_potential()
        mr0 = state.mean_calcium()
        ev = _run_segment(state, params, horizon, strategy, draws, phi,
                          events=None, max_events=0, rate_floor=RATE_FLOOR,
                          first_only=True)
        te = horizon if ev is None else ev.time

        def dist(tau: float) -> float:
            return (abs(mu0 * math.exp(-beta * (tau - t0)) - u_star)
                    + abs(mr0 * math.exp(-lam * (tau - t0)) - r_star))

        if dist(te) >= radius:
            # first crossing of the decayed path: coarse scan, then bisect
            lo, hi = t0, te
            for a, b in zip(np.linspace(t0, te, 33), np.linspace(t0, te, 33)[1:]):
                if dist(float(b)) >= radius:
                    lo, hi = float(a), float(b)
                    break
            while hi - lo > 1e-12 * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                if dist(mid) >= radius:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
        if ev is None:
            return horizon
        if abs(state.mean_potential() - u_star) + abs(state.mean_calcium() - r_star) >= radius:
            return ev.time


def memory_study(
    params: ModelParams,
    epsilon: float,
    n_list: Sequence[int],
    replicas: int,
    horizon: float,
    seed: int,
    *,
    strategy: str = MONOTONE,
    threads: int = 1,
) -> ExperimentReport:
    """Dwell time of the finite network near the upper equilibrium.

    Every replica starts exactly at (u_max, r_max) and runs until the
    mean state leaves the l1 ball of radius 2*epsilon, with exit times
    capped at ``horizon``. Larger networks should hold the stimulus
    longer; the report checks that the median exit time increases with N.
    The deterministic limit flow never exits, which the benchmark row
    records as a capped exit at the horizon.
    """
    start = time.perf_counter()
    if not epsilon > 0.0:
        raise ConfigError("epsilon must be positive")
    top = attracting_equilibrium(params)
    u_star, r_star = top.u_star, top.r_star
    radius = 2.0 * epsilon
    ns = sorted(int(n) for n in n_list)
    rows = []
    medians = []
    for j, n in enumerate(ns):
        tasks = [(params, n, u_star, r_star, radius, horizon, strategy, seed, (j, k))
                 for k in range(replicas)]
        times = np.array(_run_ordered(_exit_time_task, tasks, threads))
        q25, q50, q75 = (float(v) for v in np.percentile(times, [25, 50, 75]))
        rows.append({
            "n": n, "replicas": replicas, "median_exit": q50,
            "q25_exit": q25, "q75_exit": q75,
            "capped_fraction": float(np.mean(times >= horizon)),
        })
        medians.append(q50)
    ode = integrate_ode(params, u_star, r_star, horizon, grid=101)
    ode_dist = np.abs(ode.u - u_star) + np.abs(ode.r - r_star)
    limit_row = {
        "n": None, "replicas": 1,
        "median_exit": horizon if float(ode_dist.max()) < radius else None,
        "q25_exit": None, "q75_exit": None,
        "capped_fraction": 1.0 if float(ode_dist.max()) < radius else 0.0,
    }
    increasing = all(b > a for a, b in zip(medians, medians[1:]))
    return ExperimentReport(
        experiment="memory",
        config={"epsilon": epsilon, "n_list": ns, "replicas": replicas,
                "horizon": horizon, "strategy": strategy,
                "u_max": u_star, "r_max": r_star},
        master_seed=seed,
        rows=rows + [limit_row],
        checks={"median_exit_increasing": increasing},
        wall_clock_seconds=time.perf_counter() - start,
    )


# --------------------------------------------------------------------------
# phase portrait and extinction

@dataclass
class PhasePortrait:
    """Paired particle and limit trajectories from common initial means,
    with the null-cline curves for overlay."""

    inits: list
    particle: list
    ode: list
    curves: Nullclines
    report: ExperimentReport


def _phase_task(task) -> Trajectory:
    (params, pair, relative_width, n, horizon, grid_points, strategy, master_seed, key) = task
    rng = _replica_rng(master_seed, key)
    init = UniformBand(pair[0], pair[1], relative_width)
    return simulate(params, n, init, horizon, grid=grid_points, strategy=strategy,
                    seed=rng, max_events=0)


def phase_portrait(
    params: ModelParams,
    init_list: Sequence[tuple],
    n: int,
    horizon: float,
    seed: int,
    *,
    grid_points: int = 201,
    relative_width: float = 0.1,
    strategy: str = MONOTONE,
    threads: int = 1,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
) -> PhasePortrait:
    """One finite-network run (uniform band around each mean pair) and one
    limit-flow run per initial condition, plus null-clines."""
    start = time.perf_counter()
    if not init_list:
        raise ConfigError("need at least one initial pair")
    pairs = [(float(u), float(r)) for u, r in init_list]
    tasks = [(params, pair, relative_width, n, horizon, grid_points, strategy, seed, (j,))
             for j, pair in enumerate(pairs)]
    particle_runs = _run_ordered(_phase_task, tasks, threads)
    ode_runs = [integrate_ode(params, u, r, horizon, rel_tol=rel_tol, abs_tol=abs_tol,
                              grid=grid_points) for u, r in pairs]
    u_top = max(max(tr.mean_u.max() for tr in particle_runs),
                max(tr.u.max() for tr in ode_runs))
    u_grid = np.concatenate([[0.0], np.geomspace(1e-4, 1.5 * max(u_top, 1.0), 400)])
    curves = nullclines(params, u_grid)
    rows = [{
        "init_u": pair[0], "init_r": pair[1],
        "particle_final_u": float(tr.mean_u[-1]), "particle_final_r": float(tr.mean_r[-1]),
        "ode_final_u": float(od.u[-1]), "ode_final_r": float(od.r[-1]),
        "spike_count": tr.spike_count, "extinct": tr.extinct,
    } for pair, tr, od in zip(pairs, particle_runs, ode_runs)]
    report = ExperimentReport(
        experiment="phase_portrait",
        config={"init_list": [list(p) for p in pairs], "n": n, "horizon": horizon,
                "grid_points": grid_points, "relative_width": relative_width,
                "strategy": strategy},
        master_seed=seed,
        rows=rows,
        checks={},
        wall_clock_seconds=time.perf_counter() - start,
    )
    return PhasePortrait(inits=pairs, particle=particle_runs, ode=ode_runs,
                         curves=curves, report=report)


def _extinction_task(task) -> tuple[float, bool]:
    (params, n, init, horizon, strategy, master_seed, key) = task
    rng = _replica_rng(master_seed, key)
    traj = simulate(params, n, init, horizon, grid=2, strategy=strategy,
                    seed=rng, max_events=0)
    return traj.last_spike_time, traj.extinct


def extinction_study(
    params: ModelParams,
    n: int,
    replicas: int,
    horizon: float,
    seed: int,
    *,
    init: InitSpec = PointMass(2.0, 1.0),
    strategy: str = MONOTONE,
    threads: int = 1,
) -> ExperimentReport:
    """Distribution of last-spike times and the fraction of runs whose
    spiking died (rate bound under the extinction floor) by the horizon."""
    start = time.perf_counter()
    tasks = [(params, n, init, horizon, strategy, seed, (k,)) for k in range(replicas)]
    results = _run_ordered(_extinction_task, tasks, threads)
    last = np.array([t for t, _ in results])
    extinct = np.array([e for _, e in results], dtype=bool)
    frac = float(extinct.mean())
    lo, hi = wilson_interval(int(extinct.sum()), replicas)
    q = {f"q{p}": float(v) for p, v in zip((10, 25, 50, 75, 90),
                                           np.percentile(last, [10, 25, 50, 75, 90]))}
    rows = [{
        "n": n, "replicas": replicas, "extinct_fraction": frac,
        "wilson_low": lo, "wilson_high": hi,
        "last_spike_mean": float(last.mean()), **q,
    }]
    return ExperimentReport(
        experiment="extinction",
        config={"n": n, "replicas": replicas, "horizon": horizon,
                "strategy": strategy, "init": _init_to_dict(init)},
        master_seed=seed,
        rows=rows,
        checks={"all_extinct": bool(extinct.all())},
        wall_clock_seconds=time.perf_counter() - start,
    )


def _init_to_dict(init: InitSpec) -> dict:
    if isinstance(init, PointMass):
        return {"kind": "pointmass", "u": init.u0, "r": init.r0}
    if isinstance(init, UniformBand):
        return {"kind": "uniform", "u": init.u_mean, "r": init.r_mean,
                "relative_width": init.relative_width}
    return {"kind": "sampled", "u": init.u0}
