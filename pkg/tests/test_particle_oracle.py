"""Distributional agreement between the event-driven simulator and an
independent fixed-step Bernoulli discretisation (the full-size check with
the pinned step 1e-5 and 5000 samples lives in the acceptance suite)."""

import numpy as np
from scipy import stats

from stpnet import PointMass, simulate

from oracles import bernoulli_network


def _event_driven_samples(params, n, init, t_end, samples, master_seed):
    counts = np.empty(samples, dtype=np.int64)
    mean_u = np.empty(samples)
    for k in range(samples):
        traj = simulate(params, n, init, t_end, grid=np.array([0.0, t_end]),
                        seed=np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(k,))),
                        max_events=0)
        counts[k] = traj.spike_count
        mean_u[k] = traj.mean_u[-1]
    return counts, mean_u


def test_matches_bernoulli_oracle_smoke(mild_params):
    # N=2, short horizon, coarse-but-adequate step; the acceptance suite
    # runs the pinned dt=1e-5, T=1, 5000-sample version
    samples = 1500
    counts_ev, mu_ev = _event_driven_samples(mild_params, 2, PointMass(3.0, 1.0),
                                             0.5, samples, 101)
    rng = np.random.default_rng(np.random.SeedSequence(202))
    counts_or, mu_or = bernoulli_network(mild_params, 2, 3.0, 1.0, 0.5, 1e-4,
                                         samples, rng)
    assert stats.ks_2samp(counts_ev, counts_or).pvalue > 0.01
    assert stats.ks_2samp(mu_ev, mu_or).pvalue > 0.01
    # the spike-count means agree within Monte Carlo error
    se = np.sqrt(counts_ev.var(ddof=1) / samples + counts_or.var(ddof=1) / samples)
    assert abs(counts_ev.mean() - counts_or.mean()) < 4.0 * se
