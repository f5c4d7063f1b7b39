"""Acceptance suite: one test per headline criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see
them). Statistical criteria run at their stated replica counts and
tolerances under fixed master seeds.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from stpnet import (
    ModelParams,
    PointMass,
    SigmoidRate,
    convergence_study,
    deviation_study,
    equilibria,
    extinction_study,
    integrate_ode,
    memory_study,
    phase_portrait,
    simulate,
    simulate_limit_process,
)
from stpnet.cli import cli_dispatch

from oracles import bernoulli_network, fixed_point_roots
from test_generator import finite_difference_generator, mean_potential
from stpnet import generator_apply, init_state

THREADS = 2

U_MAX = 130.39906533749885
R_MAX = 5.292078482346851


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def paper(rate_a3):
    return ModelParams(alpha=107.78, beta=50.0, lam=2.16, rate=rate_a3)


def test_c01_phase_portrait_reproduction(paper):
    """Five initial pairs at N=1000: four ignite to the upper equilibrium
    within 5 time units, (0.75, 0.5) dies; >= 95% of 20 seeds each."""
    hot_pairs = [(2.0, 1.0), (1.0, 2.0), (10.0, 0.25), (1.0, 1.5)]
    threshold = 0.1 * (U_MAX + R_MAX)
    seeds = 20
    hot_ok = 0
    dying_ok = 0
    for k in range(seeds):
        pp = phase_portrait(paper, hot_pairs, 1000, 5.0, seed=1000 + k,
                            grid_points=201, threads=THREADS)
        if all(
            float(np.min(np.abs(tr.mean_u - U_MAX) + np.abs(tr.mean_r - R_MAX))) < threshold
            for tr in pp.particle
        ):
            hot_ok += 1
        dp = phase_portrait(paper, [(0.75, 0.5)], 1000, 20.0, seed=5000 + k,
                            grid_points=201, threads=1)
        tr = dp.particle[0]
        if tr.mean_u[-1] < 0.05 and tr.mean_r[-1] < 0.05:
            dying_ok += 1
    _verdict("C1 phase-portrait", hot_ok >= 19 and dying_ok >= 19,
             f"hot {hot_ok}/20 seeds, dying {dying_ok}/20 seeds")


def test_c02_equilibrium_structure(paper):
    """Three fixed points, residuals < 1e-10, (stable, saddle, stable),
    upper point matching independent bisection to 1e-8."""
    eqs = equilibria(paper)
    ok = len(eqs) == 3
    ok = ok and all(e.residual_rate < 1e-10 and e.residual_potential < 1e-10 for e in eqs)
    ok = ok and [e.classification for e in eqs] == ["stable-node", "saddle", "stable-node"]
    ref = fixed_point_roots(paper.rate, paper.kappa, 2.0 * paper.kappa * paper.rate.bound ** 2)
    ok = ok and len(ref) == 3 and abs(eqs[-1].u_star - ref[-1]) < 1e-8
    r_max_ref = float(paper.rate(np.asarray(ref[-1]))) / paper.lam
    ok = ok and abs(eqs[-1].r_star - r_max_ref) < 1e-8
    _verdict("C2 equilibria", ok,
             f"roots {[round(e.u_star, 6) for e in eqs]}, "
             f"max residual {max(max(e.residual_rate, e.residual_potential) for e in eqs):.2e}")


def test_c03_convergence_rate(paper):
    """log-log slope of the coupling error over 1.5 decades of N in
    [-0.65, -0.35] (theory: -1/2)."""
    report = convergence_study(paper, PointMass(2.0, 1.0), 2.0,
                               [100, 316, 1000, 3162, 10000], 200, seed=42,
                               grid_points=201, threads=THREADS)
    slope = report.slope
    _verdict("C3 convergence-rate", -0.65 <= slope <= -0.35,
             f"slope {slope:.4f}, CI {tuple(round(v, 4) for v in report.slope_ci)}, "
             f"e(N) {[round(r['mean'], 2) for r in report.rows]}")


def test_c04_deviation_probability_shape(paper):
    """P(sup deviation >= N^(-1/5) eps) nonincreasing over N with
    non-overlapping or nested-toward-zero Wilson intervals, 500 replicas.

    The probe level eps = 3 was calibrated against the limit-flow oracle:
    at eps = 1 the finite-size probabilities are not monotone at these N.
    """
    report = deviation_study(paper, PointMass(0.75, 0.5), 1.0, 3.0,
                             [100, 1000, 10000], 500, seed=4242,
                             grid_points=201, threads=THREADS)
    ps = [row["p_hat"] for row in report.rows]
    strictly_informative = ps[0] > ps[-1]
    _verdict("C4 deviation-shape",
             report.checks["p_hat_nonincreasing"] and strictly_informative,
             f"p_hat {ps}, intervals "
             + str([(round(r['wilson_low'], 3), round(r['wilson_high'], 3)) for r in report.rows]))


def test_c05_extinction_at_finite_size(rate_a3):
    """Weak coupling (alpha x 0.1): every one of 100 small networks stops
    spiking well before horizon 1e3."""
    weak = ModelParams(alpha=10.778, beta=50.0, lam=2.16, rate=rate_a3)
    report = extinction_study(weak, 5, 100, 1000.0, seed=7, threads=THREADS)
    row = report.rows[0]
    _verdict("C5 extinction", row["extinct_fraction"] == 1.0,
             f"extinct fraction {row['extinct_fraction']}, "
             f"median last spike {row['q50']:.3g}")


def test_c06_short_term_memory_scaling(unit_params):
    """Median dwell time in the 2*eps ball around the upper equilibrium
    strictly increasing over N in {50, 200, 1000}.

    Run at alpha = beta = lambda = 1 (kappa = 1, coupling threshold D = 1
    satisfied): at the published rounded parameters the small-N medians
    tie at the deterministic decay-crossing time ~1.5e-4, because a single
    spike kick alpha*r_max/N already exceeds the ball radius.
    """
    report = memory_study(unit_params, 0.5, [50, 200, 1000], 100, 50.0,
                          seed=99, threads=THREADS)
    med = [row["median_exit"] for row in report.rows if row["n"] is not None]
    _verdict("C6 memory-scaling", report.checks["median_exit_increasing"],
             f"median exit times {[round(m, 4) for m in med]}")


def test_c07_simulator_exactness_oracle(mild_params):
    """Event-driven simulator vs an independent dt=1e-5 Bernoulli
    discretisation at N=3, T=1: two-sample KS p > 0.01 on spike count and
    on final mean potential, 5000 samples each."""
    samples = 5000
    counts_ev = np.empty(samples, dtype=np.int64)
    mu_ev = np.empty(samples)
    grid = np.array([0.0, 1.0])
    for k in range(samples):
        tr = simulate(mild_params, 3, PointMass(3.0, 1.0), 1.0, grid=grid,
                      seed=np.random.default_rng(np.random.SeedSequence(808, spawn_key=(k,))),
                      max_events=0)
        counts_ev[k] = tr.spike_count
        mu_ev[k] = tr.mean_u[-1]
    rng = np.random.default_rng(np.random.SeedSequence(909))
    counts_or, mu_or = bernoulli_network(mild_params, 3, 3.0, 1.0, 1.0, 1e-5,
                                         samples, rng)
    p_counts = stats.ks_2samp(counts_ev, counts_or).pvalue
    p_mu = stats.ks_2samp(mu_ev, mu_or).pvalue
    _verdict("C7 exactness-oracle", p_counts > 0.01 and p_mu > 0.01,
             f"KS p: spike count {p_counts:.3f}, mean potential {p_mu:.3f}")


def test_c08_generator_consistency(mild_params):
    """Finite-difference weak derivative at delta=1e-3 matches the
    generator on the mean potential within 3 MC standard errors
    (1e5 replicas, N=5)."""
    f = mean_potential()
    state = init_state(5, PointMass(2.0, 1.0), np.random.default_rng(0))
    exact = generator_apply(f, state, mild_params)
    fd, se = finite_difference_generator(mild_params, 5, PointMass(2.0, 1.0),
                                         f, 1e-3, 100_000, 515)
    _verdict("C8 generator", abs(fd - exact) < 3.0 * se,
             f"generator {exact:.4f}, finite difference {fd:.4f} +- {se:.4f}")


def test_c09_limit_process_mean(paper):
    """Monte Carlo mean calcium over 1e4 one-particle paths tracks the
    limit-flow r_t within 3 standard errors at 10 grid times."""
    horizon = 5.0
    ode = integrate_ode(paper, 2.0, 1.0, horizon, grid=51)
    check_ts = np.linspace(0.5, horizon, 10)
    paths = 10_000
    vals = np.empty((paths, len(check_ts)))
    for k in range(paths):
        path = simulate_limit_process(paper, ode, 1.0, horizon,
                                      seed=np.random.SeedSequence(616, spawn_key=(k,)))
        vals[k] = path.calcium_at(check_ts)
    r_ode = np.array([ode.at(float(t))[1] for t in check_ts])
    se = vals.std(axis=0, ddof=1) / math.sqrt(paths)
    dev = np.abs(vals.mean(axis=0) - r_ode)
    _verdict("C9 limit-process-mean", bool(np.all(dev < 3.0 * se)),
             f"max |dev|/se = {float((dev / se).max()):.2f} over {len(check_ts)} times")


_DET_CONFIG = """
[model]
alpha = 107.78
beta = 50.0
lambda = 2.16

[init]
u = 2.0
r = 1.0

[run]
n = 60
horizon = 0.5
grid_points = 21
seed = 12

[study]
n_list = [20, 63, 200, 640]
replicas = 5
epsilon = 3.0
t = 0.3
horizon = 2.0

[phase]
init_list = [[2.0, 1.0], [0.75, 0.5]]
"""

_DET_MEMORY_CONFIG = """
[model]
alpha = 1.0
beta = 1.0
lambda = 1.0

[init]
u = 2.0
r = 1.0

[run]
seed = 12

[study]
n_list = [20, 50]
replicas = 5
epsilon = 0.5
horizon = 2.0
"""


def test_c10_cli_determinism(tmp_path):
    """Every stochastic subcommand, run twice with the same seed and
    config, produces byte-identical outputs."""
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(_DET_CONFIG)
    mem_cfg = tmp_path / "mem.toml"
    mem_cfg.write_text(_DET_MEMORY_CONFIG)
    jobs = {
        "simulate": ["simulate", "--config", str(cfg)],
        "limit-process": ["limit-process", "--config", str(cfg)],
        "convergence": ["convergence", "--config", str(cfg)],
        "deviation": ["deviation", "--config", str(cfg)],
        "memory": ["memory", "--config", str(mem_cfg)],
        "phase-portrait": ["phase-portrait", "--config", str(cfg), "--n", "50"],
        "extinction": ["extinction", "--config", str(cfg), "--n", "5"],
    }
    all_ok = True
    details = []
    for name, argv in jobs.items():
        out = tmp_path / name
        assert cli_dispatch(argv + ["--out", str(out)]) == 0, name
        first = {f.name: f.read_bytes() for f in sorted(out.iterdir())}
        assert cli_dispatch(argv + ["--out", str(out)]) == 0, name
        second = {f.name: f.read_bytes() for f in sorted(out.iterdir())}
        same = first == second
        all_ok = all_ok and same
        details.append(f"{name}:{'ok' if same else 'DIFFERS'}")
    _verdict("C10 determinism", all_ok, ", ".join(details))
