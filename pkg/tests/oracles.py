"""Independent reference implementations used as test oracles.

Nothing here shares code with the package's event-driven or adaptive-step
paths: the network oracle is a fixed-step Bernoulli discretisation
vectorised over chains, roots come from scipy's Brent solver on a sign
scan, and the reference ODE solution comes from scipy's Dormand-Prince
integrator.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def bernoulli_network(params, n, u0, r0, t_end, dt, chains, rng):
    """Discretised network: each step every neuron spikes independently
    with probability phi(U)*dt (rates frozen at the step start), then the
    state decays in closed form and spike effects are applied.

    Returns (spike counts, final mean potential) per chain.
    """
    u = np.full((chains, n), float(u0))
    r = np.full((chains, n), float(r0))
    counts = np.zeros(chains, dtype=np.int64)
    du = np.exp(-params.beta * dt)
    dr = np.exp(-params.lam * dt)
    steps = int(round(t_end / dt))
    kick_scale = params.alpha / n
    for _ in range(steps):
        p_spike = np.asarray(params.rate(u)) * dt
        spikes = rng.random(u.shape) < p_spike
        u *= du
        r *= dr
        any_rows = spikes.any(axis=1)
        if any_rows.any():
            kicks = kick_scale * (spikes * r).sum(axis=1)
            u += kicks[:, None]
            r += spikes
            counts += spikes.sum(axis=1)
    return counts, u.mean(axis=1)


def fixed_point_roots(rate, kappa, x_max, samples=200_001):
    """All nonnegative solutions of x = kappa*phi(x)^2 via a dense sign
    scan plus Brent refinement (origin included)."""

    def g(x):
        p = float(rate(np.asarray(x)))
        return x - kappa * p * p

    xs = np.linspace(0.0, x_max, samples)
    gs = xs - kappa * np.asarray(rate(xs)) ** 2
    roots = [0.0]
    for a, b, ga, gb in zip(xs[1:], xs[2:], gs[1:], gs[2:]):
        if ga == 0.0:
            roots.append(float(a))
        elif ga * gb < 0.0:
            roots.append(float(brentq(g, float(a), float(b), xtol=1e-14, rtol=1e-15)))
    if gs[-1] == 0.0:
        roots.append(float(xs[-1]))
    deduped = [roots[0]]
    for x in sorted(roots[1:]):
        if x - deduped[-1] > 1e-9 * x_max:
            deduped.append(x)
    return deduped


def reference_ode(params, u0, r0, t_end, t_eval=None):
    """scipy RK45 solution of the reduced planar system at tight tolerance."""

    def f(_, y):
        p = float(params.rate(np.asarray(max(y[0], 0.0))))
        return [-params.beta * y[0] + params.alpha * p * y[1],
                -params.lam * y[1] + p]

    sol = solve_ivp(f, (0.0, t_end), [float(u0), float(r0)], method="RK45",
                    rtol=1e-10, atol=1e-12, t_eval=t_eval, dense_output=True)
    assert sol.success
    return sol
