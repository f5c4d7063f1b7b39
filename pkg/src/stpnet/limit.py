r"""Mean-field limit toolkit.

Under a deterministic initial potential the large-population limit of the
network reduces to the planar system

    du/dt = -beta * u + alpha * phi(u) * r
    dr/dt = -lam  * r + phi(u)

whose fixed points solve x = kappa * phi(x)^2 with kappa = alpha/(beta*lam).
This module integrates that system with an embedded Runge-Kutta-Fehlberg
4(5) pair, locates and classifies its equilibria, samples the one-particle
calcium jump process driven by the deterministic potential, and scans the
number of fixed points as kappa varies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, StructureError
from .model import ModelParams, RateFunction

# Fehlberg 4(5) tableau; the fifth-order solution is propagated and the
# difference to the fourth-order one provides the local error estimate.
_C = (0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0)
_A = (
    (),
    (1.0 / 4.0,),
    (3.0 / 32.0, 9.0 / 32.0),
    (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
    (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
    (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
)
_B5 = (16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0)
_E = (1.0 / 360.0, 0.0, -128.0 / 4275.0, -2197.0 / 75240.0, 1.0 / 50.0, 2.0 / 55.0)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_UNDERFLOW = 1e-14

DEFAULT_REL_TOL = 1e-8
DEFAULT_ABS_TOL = 1e-10


def drift(u: float, r: float, params: ModelParams) -> tuple[float, float]:
    """Vector field of the reduced planar system at (u, r)."""
    phi_u = params.rate.value(float(u))
    return (-params.beta * u + params.alpha * phi_u * r, -params.lam * r + phi_u)


def _drift_fn(params: ModelParams) -> Callable[[float, np.ndarray], np.ndarray]:
    alpha, beta, lam = params.alpha, params.beta, params.lam
    phi = params.rate.scalar_fn()

    def f(t: float, y: np.ndarray) -> np.ndarray:
        p = phi(y[0])
        return np.array((-beta * y[0] + alpha * p * y[1], -lam * y[1] + p))

    return f


@dataclass
class IntegratorStats:
    accepted: int = 0
    rejected: int = 0
    max_error_estimate: float = 0.0


def _integrate_adaptive(f, y0, t_end, rel_tol, abs_tol, on_step):
    """Drive the embedded pair from t=0 to t_end with PI step control.

    ``on_step(t0, y0, f0, t1, y1, f1)`` is called after every accepted
    step; returning anything but None stops the integration early.
    """
    t = 0.0
    y = np.asarray(y0, dtype=float).copy()
    fy = f(t, y)
    stats = IntegratorStats()
    # crude first step from the derivative scale; the controller adapts fast
    scale = abs_tol + rel_tol * float(np.max(np.abs(y)))
    dnorm = float(np.max(np.abs(fy)))
    h = min(t_end, 1e-2 * scale / dnorm if dnorm > 0.0 else 1e-2 * t_end)
    h = max(h, 1e-10 * t_end)
    err_prev = 1.0
    k = [np.zeros_like(y) for _ in range(6)]
    while t < t_end:
        h = min(h, t_end - t)
        if h < _UNDERFLOW * t_end:
            raise NumericalError(f"step size underflow at t={t!r} (h={h!r})")
        k[0] = fy
        for i in range(1, 6):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_A[i]))
            k[i] = f(t + _C[i] * h, yi)
        y5 = y + h * sum(b * ki for b, ki in zip(_B5, k))
        err_vec = h * sum(e * ki for e, ki in zip(_E, k))
        sc = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean((err_vec / sc) ** 2)))
        if err <= 1.0:
            t_new = t + h
            f_new = f(t_new, y5)
            stats.accepted += 1
            stats.max_error_estimate = max(stats.max_error_estimate, err)
            out = on_step(t, y, fy, t_new, y5, f_new)
            t, y, fy = t_new, y5, f_new
            if out is not None:
                break
            if err == 0.0:
                fac = _MAX_FACTOR
            else:
                fac = _SAFETY * err ** -0.14 * err_prev ** 0.08
                fac = min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
            err_prev = max(err, 1e-10)
            h *= fac
        else:
            stats.rejected += 1
            h *= max(0.1, _SAFETY * err ** -0.2)
    return stats


def _hermite(t0, y0, f0, t1, y1, f1, t):
    """Cubic Hermite interpolant on one accepted step."""
    h = t1 - t0
    if h == 0.0:
        return y0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    return (
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * f0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * f1
    )


@dataclass
class LimitTrajectory:
    """Dense solution of the planar limit system.

    ``grid``, ``u``, ``r`` hold the requested samples; the accepted steps
    (times, states, derivatives) are kept so that ``at`` can evaluate the
    solution anywhere via cubic Hermite interpolation.
    """

    grid: np.ndarray
    u: np.ndarray
    r: np.ndarray
    steps_accepted: int
    steps_rejected: int
    max_error_estimate: float
    step_ts: np.ndarray = field(repr=False)
    step_ys: np.ndarray = field(repr=False)
    step_fs: np.ndarray = field(repr=False)

    def at(self, t: float) -> tuple[float, float]:
        """Interpolated (u, r) at time ``t`` within the integration span."""
        ts = self.step_ts
        if not ts[0] <= t <= ts[-1]:
            raise ConfigError(f"time {t!r} outside the integrated span [{ts[0]!r}, {ts[-1]!r}]")
        if len(ts) == 1:
            return float(self.step_ys[0][0]), float(self.step_ys[0][1])
        i = int(np.searchsorted(ts, t, side="right"))
        i = min(max(i, 1), len(ts) - 1)
        y = _hermite(ts[i - 1], self.step_ys[i - 1], self.step_fs[i - 1],
                     ts[i], self.step_ys[i], self.step_fs[i], t)
        # the exact solution stays in the positive quadrant; interpolation
        # noise of order abs_tol may dip below zero near extinction
        return max(float(y[0]), 0.0), max(float(y[1]), 0.0)

    def u_at(self, t: float) -> float:
        return self.at(t)[0]

    @classmethod
    def from_samples(cls, ts, us, rs, fs=None) -> "LimitTrajectory":
        """Wrap precomputed samples (piecewise-linear unless ``fs`` given)."""
        ts = np.asarray(ts, dtype=float)
        ys = np.column_stack([np.asarray(us, dtype=float), np.asarray(rs, dtype=float)])
        if fs is None:
            fs = np.zeros_like(ys)
            if len(ts) > 1:
                sl = np.gradient(ys, ts, axis=0)
                fs = sl
        return cls(
            grid=ts, u=ys[:, 0].copy(), r=ys[:, 1].copy(),
            steps_accepted=0, steps_rejected=0, max_error_estimate=0.0,
            step_ts=ts, step_ys=ys, step_fs=np.asarray(fs, dtype=float),
        )


def _check_tolerances(rel_tol: float, abs_tol: float) -> None:
    for name, v in (("rel_tol", rel_tol), ("abs_tol", abs_tol)):
        if not 0.0 < v <= 1e-2:
            raise ConfigError(f"{name} must lie in (0, 1e-2], got {v!r}")


def integrate_ode(
    params: ModelParams,
    u0: float,
    r0: float,
    horizon: float,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    grid=None,
) -> LimitTrajectory:
    """Integrate the planar limit system from (u0, r0) over [0, horizon].

    ``grid`` is either a number of equispaced sample times (251 by
    default) or an array of times within [0, horizon].
    """
    _check_tolerances(rel_tol, abs_tol)
    if not horizon > 0.0:
        raise ConfigError(f"horizon must be positive, got {horizon!r}")
    if u0 < 0.0 or r0 < 0.0:
        raise ConfigError("initial data must be nonnegative")
    if grid is None:
        grid = 251
    if np.isscalar(grid):
        grid = np.linspace(0.0, horizon, int(grid))
    else:
        grid = np.asarray(grid, dtype=float)
        if np.any(np.diff(grid) < 0.0) or (len(grid) and (grid[0] < 0.0 or grid[-1] > horizon)):
            raise ConfigError("grid must be sorted and lie within [0, horizon]")

    f = _drift_fn(params)
    ts: list = [0.0]
    ys: list = [np.array((float(u0), float(r0)))]
    fs: list = [f(0.0, ys[0])]

    def collect(t0, y0v, f0, t1, y1, f1):
        ts.append(t1)
        ys.append(y1)
        fs.append(f1)
        return None

    stats = _integrate_adaptive(f, ys[0], horizon, rel_tol, abs_tol, collect)
    step_ts = np.array(ts)
    step_ys = np.array(ys)
    step_fs = np.array(fs)
    traj = LimitTrajectory(
        grid=grid, u=np.empty(len(grid)), r=np.empty(len(grid)),
        steps_accepted=stats.accepted, steps_rejected=stats.rejected,
        max_error_estimate=stats.max_error_estimate,
        step_ts=step_ts, step_ys=step_ys, step_fs=step_fs,
    )
    for i, tg in enumerate(grid):
        traj.u[i], traj.r[i] = traj.at(float(tg))
    return traj


class Region(Enum):
    """Sectors of the positive quadrant cut out by the two null-clines."""

    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    R4 = "R4"
    R5 = "R5"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class Equilibrium:
    """A stationary point with its linearisation.

    Residuals are relative errors of the two stationarity identities
    lam * r = phi(u) and beta * u = alpha * phi(u) * r.
    """

    u_star: float
    r_star: float
    residual_rate: float
    residual_potential: float
    jacobian: tuple
    eigenvalues: tuple
    classification: str


def _fixed_point_residual(rate: RateFunction, kappa: float) -> Callable[[float], float]:
    phi = rate.scalar_fn()

    def g(x: float) -> float:
        p = phi(x)
        return x - kappa * p * p

    return g


def _g_prime(rate: RateFunction, kappa: float, x: float) -> float:
    p = float(rate(np.asarray(x)))
    dp = float(rate.derivative(np.asarray(x)))
    return 1.0 - 2.0 * kappa * p * dp

_SCAN_INTERVALS = 10_000
_MARGINAL_SLOPE = 1e-8


def _fixed_points(rate: RateFunction, kappa: float, search_max: float | None = None) -> list[float]:
    """All solutions of x = kappa*phi(x)^2 on [0, search_max].

    Sign-change scan over 1e4 subintervals, bisection to 1e-12*search_max,
    then a short Newton polish so residuals reach machine precision. The
    origin is always a solution because phi(0) = 0.
    """
    if search_max is None:
        search_max = 2.0 * kappa * rate.bound ** 2
    if search_max <= 0.0:
        return [0.0]
    g = _fixed_point_residual(rate, kappa)
    xs = np.linspace(0.0, search_max, _SCAN_INTERVALS + 1)
    gs = xs - kappa * np.asarray(rate(xs)) ** 2
    roots = [0.0]
    tol = 1e-12 * search_max

    def refine(a: float, b: float) -> float:
        ga = g(a)
        while b - a > tol:
            m = 0.5 * (a + b)
            gm = g(m)
            if gm == 0.0:
                return m
            if ga * gm < 0.0:
                b = m
            else:
                a, ga = m, gm
        x = 0.5 * (a + b)
        # Newton polish; keep the bisection midpoint if it does not improve
        best, best_val = x, abs(g(x))
        xn = x
        for _ in range(4):
            gp = _g_prime(rate, kappa, xn)
            if gp == 0.0:
                break
            xn = xn - g(xn) / gp
            if not 0.0 <= xn <= search_max:
                break
            val = abs(g(xn))
            if val < best_val:
                best, best_val = xn, val
        return best

    for i in range(_SCAN_INTERVALS):
        # g(0) = 0 exactly; probe just right of the origin instead
        a = tol if i == 0 else float(xs[i])
        b = float(xs[i + 1])
        ga, gb = g(a), g(b)
        if ga == 0.0:
            if a > tol:
                roots.append(a)
            continue
        if gb == 0.0:
            if i == _SCAN_INTERVALS - 1:
                roots.append(b)
            continue
        if ga * gb < 0.0:
            roots.append(refine(a, b))
    roots.sort()
    merged = [roots[0]]
    for x in roots[1:]:
        if x - merged[-1] > 10.0 * tol:
            merged.append(x)
    return merged


def _classify(eigenvalues: np.ndarray, g_slope: float) -> str:
    if abs(g_slope) < _MARGINAL_SLOPE:
        return "marginal"
    re = eigenvalues.real
    if np.all(re < 0.0):
        return "stable-node"
    if np.all(re > 0.0):
        return "unstable"
    if re.min() < 0.0 < re.max():
        return "saddle"
    return "marginal"


def equilibria(params: ModelParams, search_max: float | None = None) -> list[Equilibrium]:
    """Locate and classify all stationary points of the planar system.

    Roots of x = kappa*phi(x)^2 give the stationary potentials; each pairs
    with r* = phi(u*)/lam. The Jacobian
        [[-beta + alpha*phi'(u*)*r*, alpha*phi(u*)], [phi'(u*), -lam]]
    classifies stability through the signs of the eigenvalue real parts.
    """
    rate = params.rate
    kappa = params.kappa
    out = []
    for x in _fixed_points(rate, kappa, search_max):
        phi_x = float(rate(np.asarray(x)))
        dphi_x = float(rate.derivative(np.asarray(x)))
        r_star = phi_x / params.lam
        jac = np.array([
            [-params.beta + params.alpha * dphi_x * r_star, params.alpha * phi_x],
            [dphi_x, -params.lam],
        ])
        eig = np.linalg.eigvals(jac)
        res_rate = abs(params.lam * r_star - phi_x) / max(1.0, abs(phi_x))
        res_pot = abs(params.beta * x - params.alpha * phi_x * r_star) / max(1.0, params.beta * abs(x))
        out.append(Equilibrium(
            u_star=float(x),
            r_star=float(r_star),
            residual_rate=float(res_rate),
            residual_potential=float(res_pot),
            jacobian=tuple(tuple(float(v) for v in row) for row in jac),
            eigenvalues=tuple(complex(v) for v in eig),
            classification=_classify(eig, _g_prime(rate, kappa, float(x))),
        ))
    out.sort(key=lambda e: e.u_star)
    return out


def attracting_equilibrium(params: ModelParams) -> Equilibrium:
    """The nontrivial attracting point (u_max, r_max); raises if absent."""
    eqs = equilibria(params)
    if len(eqs) < 3:
        raise StructureError(
            f"x = kappa*phi(x)^2 has {len(eqs)} solution(s); the bistable "
            "structure (origin, separatrix, upper fixed point) is required"
        )
    top = eqs[-1]
    if top.classification not in ("stable-node",):
        raise StructureError(f"largest fixed point is {top.classification}, not stable")
    return top


@dataclass(frozen=True)
class Nullclines:
    """The two null-cline curves sampled on a common potential grid:
    calcium null-cline r = phi(u)/lam and potential null-cline
    r = (beta/alpha) * u/phi(u), continued at u=0 by 1/phi'(0)."""

    u: np.ndarray
    calcium: np.ndarray
    potential: np.ndarray


def nullclines(params: ModelParams, u_grid) -> Nullclines:
    u = np.asarray(u_grid, dtype=float)
    if np.any(np.diff(u) < 0.0) or (u.size and u[0] < 0.0):
        raise ConfigError("u_grid must be sorted and nonnegative")
    phi_u = np.asarray(params.rate(u), dtype=float)
    if np.any((phi_u <= 0.0) & (u > 0.0)):
        raise ConfigError("rate vanishes at a positive potential; null-clines undefined")
    calcium = phi_u / params.lam
    ratio = np.empty_like(u)
    pos = u > 0.0
    ratio[pos] = u[pos] / phi_u[pos]
    if np.any(~pos):
        d0 = float(params.rate.derivative(np.asarray(0.0)))
        if d0 <= 0.0:
            raise ConfigError("rate slope at 0 must be positive to continue u/phi(u)")
        ratio[~pos] = 1.0 / d0
    potential = (params.beta / params.alpha) * ratio
    return Nullclines(u=u, calcium=calcium, potential=potential)

_BOUNDARY_TOL = 1e-9


def classify_region(params: ModelParams, u: float, r: float, roots: Sequence[float] | None = None) -> Region:
    """Classify a point of the positive quadrant by its null-cline sector.

    Requires the three-root structure; points within 1e-9 of either curve
    report BOUNDARY. In R1/R3 both components of the flow decrease, in R2
    the calcium rises while the potential falls, in R4 the reverse.
    """
    if u < 0.0 or r < 0.0:
        raise ConfigError("region classification requires u, r >= 0")
    if roots is None:
        roots = [e.u_star for e in equilibria(params)]
    if len(roots) != 3:
        raise StructureError(f"expected 3 fixed points, found {len(roots)}")
    _, x1, x2 = sorted(roots)
    nc = nullclines(params, np.asarray([u]))
    r_cal = float(nc.calcium[0])
    r_pot = float(nc.potential[0])
    if abs(r - r_cal) < _BOUNDARY_TOL or abs(r - r_pot) < _BOUNDARY_TOL:
        return Region.BOUNDARY
    if r < min(r_cal, r_pot):
        return Region.R2
    if r > max(r_cal, r_pot):
        return Region.R4
    # strictly between the curves: the sector depends on the potential
    if u <= x1:
        return Region.R1
    if u >= x2:
        return Region.R3
    return Region.R5


def hitting_time_t1(
    params: ModelParams,
    u0: float,
    r0: float,
    epsilon: float,
    horizon_cap: float = 1e3,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> float | None:
    """First time the limit flow enters the epsilon-ball (l1) around
    (u_max, r_max), or None when it reaches the origin's epsilon-ball
    first or exceeds ``horizon_cap``.

    Crossings are localised by bisection on the dense interpolant to a
    time tolerance of 1e-9.
    """
    if not epsilon > 0.0:
        raise ConfigError("epsilon must be positive")
    top = attracting_equilibrium(params)
    u_max, r_max = top.u_star, top.r_star

    def dist_target(y) -> float:
        return abs(y[0] - u_max) + abs(y[1] - r_max) - epsilon

    def dist_origin(y) -> float:
        return abs(y[0]) + abs(y[1]) - epsilon

    y_init = np.array((float(u0), float(r0)))
    if dist_target(y_init) < 0.0:
        return 0.0
    if dist_origin(y_init) < 0.0:
        return None
    f = _drift_fn(params)
    found: dict = {}

    def locate(fn, t0, y0v, f0, t1, y1, f1):
        a, b = t0, t1
        va = fn(_hermite(t0, y0v, f0, t1, y1, f1, a))
        for _ in range(200):
            if b - a <= 1e-9:
                break
            m = 0.5 * (a + b)
            vm = fn(_hermite(t0, y0v, f0, t1, y1, f1, m))
            if (va < 0.0) == (vm < 0.0):
                a, va = m, vm
            else:
                b = m
        return 0.5 * (a + b)

    def watch(t0, y0v, f0, t1, y1, f1):
        hit_target = dist_target(y1) < 0.0
        hit_origin = dist_origin(y1) < 0.0
        if not (hit_target or hit_origin):
            return None
        t_target = locate(dist_target, t0, y0v, f0, t1, y1, f1) if hit_target else math.inf
        t_origin = locate(dist_origin, t0, y0v, f0, t1, y1, f1) if hit_origin else math.inf
        found["target"] = t_target if t_target <= t_origin else None
        return True

    _integrate_adaptive(f, y_init, horizon_cap, rel_tol, abs_tol, watch)
    if "target" not in found:
        return None
    return found["target"]


@dataclass(frozen=True)
class JumpProcessPath:
    """One sampled calcium path: exponential decay at rate ``decay``
    between spikes, +1 at each spike."""

    r0: float
    spike_times: np.ndarray
    decay: float

    def calcium_at(self, t):
        """R_t = r0*exp(-lam*t) + sum over spikes s<=t of exp(-lam*(t-s))."""
        t = np.asarray(t, dtype=float)
        s = self.spike_times
        weights = np.concatenate([[self.r0], np.exp(self.decay * s)])
        csum = np.cumsum(weights)
        idx = np.searchsorted(s, t, side="right")
        return np.exp(-self.decay * t) * csum[idx]


def simulate_limit_process(
    params: ModelParams,
    limit_traj: LimitTrajectory,
    r0_sampler,
    horizon: float,
    seed=None,
) -> JumpProcessPath:
    """Sample one particle of the limit system along a potential trajectory.

    Spikes come from an inhomogeneous Poisson process of intensity
    phi(u_t), generated by thinning against the constant envelope K.
    ``r0_sampler`` is either a number or a callable ``rng -> float``.
    """
    if limit_traj.step_ts[-1] < horizon:
        raise ConfigError("limit trajectory does not cover the requested horizon")
    rng = np.random.default_rng(seed)
    r0 = float(r0_sampler(rng)) if callable(r0_sampler) else float(r0_sampler)
    if r0 < 0.0:
        raise ConfigError("initial calcium must be nonnegative")
    envelope = params.rate.bound
    spikes = []
    t = 0.0
    if envelope > 0.0:
        while True:
            t += rng.exponential(1.0 / envelope)
            if t > horizon:
                break
            u_t = limit_traj.u_at(t)
            if rng.random() * envelope <= params.rate.value(u_t):
                spikes.append(t)
    return JumpProcessPath(r0=r0, spike_times=np.asarray(spikes), decay=params.lam)


@dataclass(frozen=True)
class BifurcationScan:
    """Fixed-point counts along a kappa grid with the located threshold.

    ``kappa_c`` is the midpoint of ``bracket``, the interval over which the
    count jumps from 1 to 3; None when the grid never brackets a jump.
    """

    kappas: tuple
    root_counts: tuple
    kappa_c: float | None
    bracket: tuple | None


def bifurcation_scan(rate: RateFunction, kappa_grid) -> BifurcationScan:
    """Count solutions of x = kappa*phi(x)^2 per kappa and bracket the
    threshold kappa_c where nontrivial solutions appear, refined by
    bisection on the count transition to width 1e-6."""
    kappas = tuple(float(k) for k in kappa_grid)
    if any(k <= 0.0 for k in kappas) or any(b < a for a, b in zip(kappas, kappas[1:])):
        raise ConfigError("kappa grid must be sorted and positive")

    def count(k: float) -> int:
        return len(_fixed_points(rate, k))

    counts = tuple(count(k) for k in kappas)
    lo = hi = None
    for k, c in zip(kappas, counts):
        if c <= 1:
            lo = k
        if c >= 3 and lo is not None:
            hi = k
            break
    if lo is None or hi is None:
        return BifurcationScan(kappas=kappas, root_counts=counts, kappa_c=None, bracket=None)
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if count(mid) >= 3:
            hi = mid
        else:
            lo = mid
    return BifurcationScan(kappas=kappas, root_counts=counts, kappa_c=0.5 * (lo + hi), bracket=(lo, hi))
