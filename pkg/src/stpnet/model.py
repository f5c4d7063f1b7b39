"""Model parameters, spiking-rate functions, and initial-condition laws.

The network couples two per-neuron variables: a membrane potential that
decays at rate ``beta`` and drives spiking through a rate function
``phi``, and a residual calcium concentration that decays at rate
``lam``, jumps by one at each own spike, and scales the potential kick
``alpha * r / N`` the spiker hands to the whole population.

Rate functions must vanish at zero, stay positive for positive
potentials, and be bounded and Lipschitz; those properties make exact
thinning-based simulation possible (the bound ``K`` is the thinning
envelope) and keep the mean-field equations well posed.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SigmoidRate:
    r"""Sigmoid spiking rate with inflexion point ``a``:

        phi(x) = 4a / (1 + exp(-(x - a))) - 4a / (1 + exp(a)),   x >= 0.

    The constant term is the value of the first term at x = 0, so
    phi(0) = 0 holds exactly in floating point. Validity requires a > 1
    and 4a < 1 + e^a, which makes phi positive and increasing on (0, inf).
    The supremum is K = 4a - 4a/(1 + e^a) and the largest slope is
    phi'(a) = a.
    """

    a: float
    offset: float = field(init=False, repr=False, compare=False)
    bound: float = field(init=False, repr=False, compare=False)
    lipschitz: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        a = float(self.a)
        if not (math.isfinite(a) and a > 1.0):
            raise ConfigError(f"sigmoid rate requires a > 1, got a={a!r}")
        if not 4.0 * a < 1.0 + math.exp(a):
            raise ConfigError(
                f"sigmoid rate requires 4a < 1 + e^a, got 4a={4.0 * a:.6g} "
                f">= 1 + e^a = {1.0 + math.exp(a):.6g}"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "offset", 4.0 * a / (1.0 + math.exp(a)))
        object.__setattr__(self, "bound", 4.0 * a - self.offset)
        object.__setattr__(self, "lipschitz", a)

    @property
    def is_nondecreasing(self) -> bool:
        return True

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 4.0 * self.a / (1.0 + np.exp(self.a - x)) - self.offset

    def value(self, x: float) -> float:
        """Scalar evaluation on the `math` fast path (used by event loops)."""
        return 4.0 * self.a / (1.0 + math.exp(self.a - x)) - self.offset

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        e = np.exp(self.a - x)
        return 4.0 * self.a * e / (1.0 + e) ** 2

    def scalar_fn(self) -> Callable[[float], float]:
        """Closure over the parameters for tight loops."""
        four_a = 4.0 * self.a
        a = self.a
        off = self.offset
        exp = math.exp

        def phi(x: float) -> float:
            return four_a / (1.0 + exp(a - x)) - off

        return phi


@dataclass(frozen=True, init=False)
class TableRate:
    """Piecewise-linear spiking rate through knots ``(x_i, y_i)``.

    The first knot must be (0, 0) and the abscissae strictly increasing.
    Beyond the last knot the rate clamps to the last value, which keeps it
    bounded. The Lipschitz constant is the largest segment slope.
    """

    x: tuple
    y: tuple
    bound: float = field(repr=False, compare=False)
    lipschitz: float = field(repr=False, compare=False)
    is_nondecreasing: bool = field(repr=False, compare=False)

    def __init__(self, x: Sequence[float], y: Sequence[float]) -> None:
        xs = tuple(float(v) for v in x)
        ys = tuple(float(v) for v in y)
        if len(xs) != len(ys):
            raise ConfigError("table rate needs as many values as knots")
        if len(xs) < 2:
            raise ConfigError("table rate needs at least two knots")
        if xs[0] != 0.0 or ys[0] != 0.0:
            raise ConfigError("table rate must start at the knot (0, 0)")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError("table rate abscissae must be strictly increasing")
        if any(v < 0.0 for v in ys) or not all(map(math.isfinite, xs + ys)):
            raise ConfigError("table rate values must be finite and nonnegative")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "y", ys)
        slopes = [(yb - ya) / (xb - xa) for (xa, ya), (xb, yb) in zip(zip(xs, ys), zip(xs[1:], ys[1:]))]
        object.__setattr__(self, "bound", max(ys))
        object.__setattr__(self, "lipschitz", max(abs(s) for s in slopes))
        object.__setattr__(self, "is_nondecreasing", all(s >= 0.0 for s in slopes))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.x, self.y)

    def value(self, x: float) -> float:
        xs = self.x
        if x >= xs[-1]:
            return self.y[-1]
        if x <= 0.0:
            return self.y[0]
        i = bisect_right(xs, x)
        x0, x1 = xs[i - 1], xs[i]
        y0, y1 = self.y[i - 1], self.y[i]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def derivative(self, x):
        """Central-difference slope with step 1e-6 * max(1, x), clamped to x >= 0."""
        x = np.asarray(x, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        lo = np.maximum(x - h, 0.0)
        hi = x + h
        return (self(hi) - self(lo)) / (hi - lo)

    def scalar_fn(self) -> Callable[[float], float]:
        return self.value


RateFunction = Union[SigmoidRate, TableRate]


def make_sigmoid_rate(a: float) -> SigmoidRate:
    """Build a sigmoid rate, rejecting parameters that break positivity."""
    return SigmoidRate(a)


def rate_eval(rate: RateFunction, x):
    """Evaluate a rate function, rejecting negative potentials."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0):
        raise ConfigError("rate functions are defined for nonnegative potentials only")
    out = rate(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


@dataclass(frozen=True)
class ModelParams:
    """Interaction strength ``alpha``, decay rates ``beta`` and ``lam``,
    and the spiking rate function.

    The composite kappa = alpha / (beta * lam) controls how many solutions
    the fixed-point equation x = kappa * phi(x)^2 admits.
    """

    alpha: float
    beta: float
    lam: float
    rate: RateFunction

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "lam"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0.0):
                raise ConfigError(f"{name} must be strictly positive and finite, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def kappa(self) -> float:
        return self.alpha / (self.beta * self.lam)


@dataclass(frozen=True)
class PointMass:
    """Every neuron starts at exactly (u0, r0)."""

    u0: float
    r0: float

    def __post_init__(self) -> None:
        if self.u0 < 0.0 or self.r0 < 0.0:
            raise ConfigError("point-mass initial values must be nonnegative")


@dataclass(frozen=True)
class UniformBand:
    """Independent uniform draws centred on the means, with total range
    ``relative_width`` times the mean (10% reproduces the published
    figure protocol)."""

    u_mean: float
    r_mean: float
    relative_width: float = 0.1

    def __post_init__(self) -> None:
        if self.u_mean < 0.0 or self.r_mean < 0.0:
            raise ConfigError("uniform-band means must be nonnegative")
        if not 0.0 <= self.relative_width < 1.0:
            raise ConfigError("relative_width must lie in [0, 1)")


@dataclass(frozen=True)
class Sampled:
    """Deterministic potential u0 with calcium drawn from a user sampler.

    The sampler is called as ``sampler(rng, n)`` and must return ``n``
    nonnegative values. The potential stays a point mass, matching the
    setting in which the limit system reduces to a planar ODE.
    """

    u0: float
    calcium_sampler: Callable[[np.random.Generator, int], np.ndarray]

    def __post_init__(self) -> None:
        if self.u0 < 0.0:
            raise ConfigError("sampled initial potential must be nonnegative")


InitSpec = Union[PointMass, UniformBand, Sampled]


def sample_init(init: InitSpec, n: int, rng: np.random.Generator):
    """Draw initial potentials and calcium values for ``n`` neurons.

    Potentials are drawn before calcium so replay is well defined.
    """
    if isinstance(init, PointMass):
        return np.full(n, init.u0, dtype=float), np.full(n, init.r0, dtype=float)
    if isinstance(init, UniformBand):
        hw_u = 0.5 * init.relative_width * init.u_mean
        hw_r = 0.5 * init.relative_width * init.r_mean
        u = rng.uniform(init.u_mean - hw_u, init.u_mean + hw_u, size=n)
        r = rng.uniform(init.r_mean - hw_r, init.r_mean + hw_r, size=n)
        return u, r
    if isinstance(init, Sampled):
        u = np.full(n, init.u0, dtype=float)
        r = np.asarray(init.calcium_sampler(rng, n), dtype=float)
        if r.shape != (n,):
            raise ConfigError(f"calcium sampler returned shape {r.shape}, expected ({n},)")
        if np.any(r < 0.0) or not np.all(np.isfinite(r)):
            raise ConfigError("calcium sampler must return finite nonnegative values")
        return u, r
    raise ConfigError(f"unknown init spec {init!r}")


@dataclass(frozen=True)
class Diagnostics:
    """Assumption report for a parameter set.

    ``coupling_ok`` states whether kappa >= D. ``root_count`` counts the
    solutions of x = kappa * phi(x)^2 on the search interval, and
    ``three_root_structure`` whether the bistable structure (origin,
    separatrix, upper fixed point) is present.
    """

    kappa: float
    rate_bound: float
    lipschitz: float
    coupling_ok: bool
    root_count: int
    three_root_structure: bool
    roots: tuple


def validate_params(params: ModelParams, d: float = 1.0, search_max: float | None = None) -> Diagnostics:
    """Diagnose a parameter set against the modelling assumptions.

    ``d`` is the user's coupling threshold: the bound alpha >= d*beta*lam
    i.e. kappa >= d is reported, but the root count decides whether the
    bistable structure actually holds (the published example rounds the
    coefficients, so kappa may fall marginally short of d while the three
    roots persist).
    """
    from .limit import equilibria  # deferred: limit depends on this module

    eqs = equilibria(params, search_max=search_max)
    roots = tuple(e.u_star for e in eqs)
    return Diagnostics(
        kappa=params.kappa,
        rate_bound=params.rate.bound,
        lipschitz=params.rate.lipschitz,
        coupling_ok=params.kappa >= d,
        root_count=len(roots),
        three_root_structure=len(roots) == 3,
        roots=roots,
    )
