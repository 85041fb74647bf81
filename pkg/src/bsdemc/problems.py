"""Problem definitions and independent oracles.

Coefficient conventions (all vectorized over a batch of P samples):
  semilinear:  b(x)->(P,d), sigma(x)->(P,d,d), f(x,y,z)->(P,), h(x)->(P,)
  controlled:  b(x,a), sigma(x,a), f(x,a,y,z) with a of shape (P, control dim)
"""

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .controls import Box, ControlSet, FiniteSet
from .engine import TimeGrid, sample_brownian_increments


@dataclass(frozen=True)
class Reference:
    """Exact solution hooks: value(t, X)->(P,) and optional z(t, X)->(P,d)."""

    value: Callable
    z: Callable | None = None


@dataclass(frozen=True)
class SemilinearProblem:
    dim: int
    drift: Callable
    diffusion: Callable
    driver: Callable
    terminal: Callable
    horizon: float
    x0: np.ndarray
    lipschitz: float = 1.0
    reference: Reference | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        x = self.x0[None, :]
        probe = [
            self.drift(x),
            self.diffusion(x),
            self.driver(x, np.zeros(1), np.zeros((1, self.dim))),
            self.terminal(x),
        ]
        if not all(np.all(np.isfinite(np.asarray(p, dtype=float))) for p in probe):
            raise ValueError("problem coefficients are not finite at x0")


@dataclass(frozen=True)
class HJBProblem:
    dim: int
    drift: Callable
    diffusion: Callable
    driver: Callable
    terminal: Callable
    horizon: float
    x0: np.ndarray
    control_set: ControlSet
    intensity_mass: float = 2.0
    lipschitz: float = 1.0
    reference: Reference | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.intensity_mass <= 0:
            raise ValueError("intensity mass must be positive")

    def frozen(self, a0) -> SemilinearProblem:
        """The semilinear problem obtained by pinning the control at a0."""
        a0 = np.atleast_1d(np.asarray(a0, dtype=float))

        def tile(x):
            return np.broadcast_to(a0, (x.shape[0], a0.shape[0]))

        return SemilinearProblem(
            dim=self.dim,
            drift=lambda x: self.drift(x, tile(x)),
            diffusion=lambda x: self.diffusion(x, tile(x)),
            driver=lambda x, y, z: self.driver(x, tile(x), y, z),
            terminal=self.terminal,
            horizon=self.horizon,
            x0=self.x0,
            lipschitz=self.lipschitz,
            reference=None,
            name=self.name + "-frozen",
        )


@dataclass(frozen=True)
class LinearDriverSpec:
    """Constant-coefficient linear generator f(y, z) = delta*y + alpha.z + gamma."""

    delta: float
    alpha: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, dtype=float)))
        if not (
            np.isfinite(self.delta) and np.isfinite(self.gamma) and np.all(np.isfinite(self.alpha))
        ):
            raise ValueError("linear driver constants must be finite")


@dataclass(frozen=True)
class OracleValue:
    value: float
    tolerance: float
    se: float | None = None
    method: str = "closed-form"


@dataclass(frozen=True)
class BruteForceValue:
    value: float
    se: float
    sequence: tuple


def g_operator(m: float, a_lo: float, a_hi: float) -> float:
    """(1/2) sup_{a in [a_lo, a_hi]} a^2 m = (1/2)(a_hi^2 m+ - a_lo^2 m-)."""
    if not 0 < a_lo <= a_hi:
        raise ValueError("need 0 < a_lo <= a_hi")
    return 0.5 * (a_hi**2 * max(m, 0.0) - a_lo**2 * max(-m, 0.0))


def _gauss_hermite_expectation(h, mean, scale_chol, order=48):
    """E[h(mean + scale_chol @ G)], G standard normal, tensor Gauss-Hermite."""
    dim = mean.shape[0]
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([weights] * dim), indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=1)
    w /= np.sqrt(2.0 * np.pi) ** dim
    xs = mean[None, :] + pts @ scale_chol.T
    return float(np.sum(w * h(xs)))


def gaussian_expectation(h, mean, scale_chol):
    """E[h(mean + scale_chol @ G)] with a numeric tolerance estimate.

    d = 1 uses adaptive quadrature; d <= 4 tensor Gauss-Hermite (tolerance
    from comparing two orders); larger d is refused.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    scale_chol = np.atleast_2d(np.asarray(scale_chol, dtype=float))
    dim = mean.shape[0]
    if dim == 1:
        s = float(scale_chol[0, 0])

        def integrand(u):
            x = np.array([[mean[0] + s * u]])
            return float(np.asarray(h(x)).ravel()[0]) * np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)

        val, err = quad(integrand, -12.0, 12.0, limit=200)
        if err > 1e-6 * max(1.0, abs(val)):
            raise RuntimeError(f"quadrature did not converge (residual {err:.3g})")
        return val, err
    if dim <= 4:
        hi = _gauss_hermite_expectation(h, mean, scale_chol, order=48)
        lo = _gauss_hermite_expectation(h, mean, scale_chol, order=32)
        return hi, abs(hi - lo)
    raise ValueError("gaussian_expectation supports dim <= 4")


def heat_reference(t: float, x, h, horizon: float, volatility: float = 1.0):
    """E[h(x + vol * W_{T-t})] by quadrature; returns (value, tolerance)."""
    if t > horizon:
        raise ValueError("t must not exceed the horizon")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tau = horizon - t
    if tau == 0.0:
        return float(np.asarray(h(x[None, :])).ravel()[0]), 0.0
    dim = x.shape[0]
    chol = volatility * np.sqrt(tau) * np.eye(dim)
    return gaussian_expectation(h, x, chol)


def uncertain_vol_reference(h, x, t: float, horizon: float, a_hi: float):
    """Super-replication value for a convex payoff under volatility band
    [.., a_hi]: the supremum sits at a_hi, so this is a heat value at vol a_hi.
    Convexity of h is the caller's declaration; it is not verified here."""
    return heat_reference(t, x, h, horizon, volatility=a_hi)


def linear_bsde_reference(
    spec: LinearDriverSpec, h, drift_const, sigma_const, x0, horizon: float
):
    """Y_0 for the constant-coefficient linear generator via discounting and
    the Girsanov drift shift: e^{dT} E[h(x0 + (b + s a)T + s W_T)] + running
    reward gamma (e^{dT}-1)/d (limit gamma*T at d = 0)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = x0.shape[0]
    b = np.broadcast_to(np.asarray(drift_const, dtype=float), (dim,))
    sig = np.asarray(sigma_const, dtype=float)
    if sig.ndim < 2:
        sig = np.broadcast_to(np.atleast_1d(sig), (dim,)) * np.eye(dim)
    mean = x0 + (b + sig @ spec.alpha) * horizon
    ex, tol = gaussian_expectation(h, mean, sig * np.sqrt(horizon))
    disc = np.exp(spec.delta * horizon)
    if spec.delta == 0.0:
        running = spec.gamma * horizon
    else:
        running = spec.gamma * (disc - 1.0) / spec.delta
    return disc * ex + running, disc * tol


def manufactured_semilinear(
    v, dv_dt, grad_v, hess_v, base_drift, base_diffusion, dim, horizon, x0, name="manufactured"
) -> SemilinearProblem:
    """Invert the semilinear PDE for a chosen smooth solution v(t, x).

    Time enters through an augmented state coordinate (unit drift, zero
    diffusion) so the solver stays time-homogeneous.  The returned problem has
    h = v(T, .), f = -(dv_dt + Lv), and records (v, sigma^T grad v) as its
    reference.  All derivative callables are vectorized like v.
    """
    aug = dim + 1

    def split(xt):
        return xt[:, :dim], xt[:, dim]

    def drift(xt):
        xs, _ = split(xt)
        out = np.empty((xt.shape[0], aug))
        out[:, :dim] = np.broadcast_to(np.asarray(base_drift(xs), dtype=float), (xt.shape[0], dim))
        out[:, dim] = 1.0
        return out

    def diffusion(xt):
        xs, _ = split(xt)
        out = np.zeros((xt.shape[0], aug, aug))
        out[:, :dim, :dim] = np.broadcast_to(
            np.asarray(base_diffusion(xs), dtype=float), (xt.shape[0], dim, dim)
        )
        return out

    def source(t, xs):
        bb = np.broadcast_to(np.asarray(base_drift(xs), dtype=float), xs.shape)
        ss = np.broadcast_to(
            np.asarray(base_diffusion(xs), dtype=float), (xs.shape[0], dim, dim)
        )
        a2 = np.einsum("pik,pjk->pij", ss, ss)
        val = (
            dv_dt(t, xs)
            + np.sum(bb * grad_v(t, xs), axis=1)
            + 0.5 * np.einsum("pij,pij->p", a2, hess_v(t, xs))
        )
        if not np.all(np.isfinite(val)):
            raise ValueError("manufactured source is not finite")
        return val

    def driver(xt, y, z):
        xs, t = split(xt)
        return -source(t, xs)

    def terminal(xt):
        xs, _ = split(xt)
        return v(np.full(xt.shape[0], horizon), xs)

    def ref_value(t, xt):
        xs, _ = split(np.atleast_2d(xt))
        return v(np.full(xs.shape[0], t), xs)

    def ref_z(t, xt):
        xs, _ = split(np.atleast_2d(xt))
        ss = np.broadcast_to(
            np.asarray(base_diffusion(xs), dtype=float), (xs.shape[0], dim, dim)
        )
        out = np.zeros((xs.shape[0], aug))
        out[:, :dim] = np.einsum("pji,pj->pi", ss, grad_v(np.full(xs.shape[0], t), xs))
        return out

    return SemilinearProblem(
        dim=aug,
        drift=drift,
        diffusion=diffusion,
        driver=driver,
        terminal=terminal,
        horizon=horizon,
        x0=np.concatenate([np.atleast_1d(np.asarray(x0, dtype=float)), [0.0]]),
        reference=Reference(ref_value, ref_z),
        name=name,
    )


def brute_force_control_value(
    problem: HJBProblem,
    grid: TimeGrid,
    control_values,
    n_inner: int,
    seed: int,
    max_sequences: int = 64,
) -> BruteForceValue:
    """Enumerate piecewise-constant deterministic control sequences on the grid
    and take the best Monte-Carlo value, with common random numbers.

    This is a lower bound on the adapted-control value; it is tight only when
    a constant control is optimal (e.g. convex payoffs), which is the intended
    oracle use.
    """
    values = np.atleast_2d(np.asarray(control_values, dtype=float))
    if values.shape[0] == 1 and values.shape[1] > 1:
        values = values.T
    n = grid.n_steps
    total = values.shape[0] ** n
    if total > max_sequences:
        raise ValueError(f"{total} control sequences exceed the budget of {max_sequences}")
    inc = sample_brownian_increments(grid, problem.dim, n_inner, seed)
    dts = grid.steps
    best = None
    for combo in itertools.product(range(values.shape[0]), repeat=n):
        x = np.broadcast_to(problem.x0, (n_inner, problem.dim)).copy()
        running = np.zeros(n_inner)
        for i, ci in enumerate(combo):
            a = np.broadcast_to(values[ci], (n_inner, values.shape[1]))
            running += (
                problem.driver(x, a, np.zeros(n_inner), np.zeros((n_inner, problem.dim))) * dts[i]
            )
            bb = np.broadcast_to(np.asarray(problem.drift(x, a), dtype=float), x.shape)
            ss = np.broadcast_to(
                np.asarray(problem.diffusion(x, a), dtype=float),
                (n_inner, problem.dim, problem.dim),
            )
            x = x + bb * dts[i] + np.einsum("pij,pj->pi", ss, inc.increments[:, i, :])
        payoff = problem.terminal(x) + running
        est = float(payoff.mean())
        se = float(payoff.std(ddof=1) / np.sqrt(n_inner))
        if best is None or est > best.value:
            best = BruteForceValue(est, se, tuple(float(values[c, 0]) for c in combo))
    return best


# ---------------------------------------------------------------------------
# registry


def make_heat(x0: float = 0.0, horizon: float = 1.0) -> SemilinearProblem:
    """d=1 heat equation via the degenerate BSDE: b=0, sigma=1, f=0, h=x^2."""

    def ref_value(t, x):
        x = np.atleast_2d(x)
        return x[:, 0] ** 2 + (horizon - t)

    return SemilinearProblem(
        dim=1,
        drift=lambda x: np.zeros_like(x),
        diffusion=lambda x: np.ones((x.shape[0], 1, 1)),
        driver=lambda x, y, z: np.zeros(x.shape[0]),
        terminal=lambda x: x[:, 0] ** 2,
        horizon=horizon,
        x0=[x0],
        lipschitz=0.0,
        reference=Reference(ref_value, lambda t, x: 2.0 * np.atleast_2d(x)),
        name="heat",
    )


def make_linear_bsde(
    delta: float = 1.0, alpha: float = 0.0, gamma: float = 0.0, horizon: float = 1.0
) -> SemilinearProblem:
    """Constant linear generator f = delta*y + alpha*z + gamma with h = 1."""
    spec = LinearDriverSpec(delta, [alpha], gamma)

    def ref_value(t, x):
        x = np.atleast_2d(x)
        tau = horizon - t
        disc = np.exp(delta * tau)
        running = gamma * tau if delta == 0.0 else gamma * (disc - 1.0) / delta
        return np.full(x.shape[0], disc + running)

    return SemilinearProblem(
        dim=1,
        drift=lambda x: np.zeros_like(x),
        diffusion=lambda x: np.ones((x.shape[0], 1, 1)),
        driver=lambda x, y, z: delta * y + alpha * z[:, 0] + gamma,
        terminal=lambda x: np.ones(x.shape[0]),
        horizon=horizon,
        x0=[0.0],
        lipschitz=abs(delta) + abs(alpha),
        reference=Reference(ref_value, lambda t, x: np.zeros_like(np.atleast_2d(x))),
        name="linear-bsde",
    )


def make_manufactured_sine(
    x0: float = 0.0, sigma0: float = 1.0, horizon: float = 1.0
) -> SemilinearProblem:
    """Manufactured solution v(t, x) = e^t sin(x) with b = 0, sigma = sigma0."""

    def v(t, x):
        return np.exp(t) * np.sin(x[:, 0])

    def dv_dt(t, x):
        return np.exp(t) * np.sin(x[:, 0])

    def grad_v(t, x):
        return (np.exp(t) * np.cos(x[:, 0]))[:, None]

    def hess_v(t, x):
        return (-np.exp(t) * np.sin(x[:, 0]))[:, None, None]

    return manufactured_semilinear(
        v,
        dv_dt,
        grad_v,
        hess_v,
        base_drift=lambda x: np.zeros_like(x),
        base_diffusion=lambda x: sigma0 * np.ones((x.shape[0], 1, 1)),
        dim=1,
        horizon=horizon,
        x0=[x0],
        name="manufactured-sine",
    )


def make_uncertain_vol(
    a_lo: float = 0.5, a_hi: float = 1.0, x0: float = 0.0, horizon: float = 1.0,
    intensity_mass: float = 2.0,
) -> HJBProblem:
    """G-heat / uncertain volatility: b=0, sigma(x,a)=a, f=0, h=x^2 on [a_lo, a_hi].
    For this convex payoff the exact value is x^2 + a_hi^2 (T - t)."""

    def ref_value(t, x):
        x = np.atleast_2d(x)
        return x[:, 0] ** 2 + a_hi**2 * (horizon - t)

    return HJBProblem(
        dim=1,
        drift=lambda x, a: np.zeros_like(x),
        diffusion=lambda x, a: a[:, 0][:, None, None],
        driver=lambda x, a, y, z: np.zeros(x.shape[0]),
        terminal=lambda x: x[:, 0] ** 2,
        horizon=horizon,
        x0=[x0],
        control_set=Box([a_lo], [a_hi]),
        intensity_mass=intensity_mass,
        lipschitz=0.0,
        reference=Reference(ref_value),
        name="uncertain-vol",
    )


def make_hjb_tiny(
    x0: float = 0.0, horizon: float = 1.0, intensity_mass: float = 2.0
) -> HJBProblem:
    """Desk-scale HJB with running reward: b=0, sigma(x,a)=a, h=x^2 and the
    bounded driver f(x,a) = a (1 + tanh x) on A = {0.5, 1.0}.

    Both the convex payoff and the (positive) reward factor are maximized by
    a = 1 pointwise, so the constant control a=1 is optimal and the open-loop
    enumeration oracle is tight; the exact value at (0, 0) is 2."""
    return HJBProblem(
        dim=1,
        drift=lambda x, a: np.zeros_like(x),
        diffusion=lambda x, a: a[:, 0][:, None, None],
        driver=lambda x, a, y, z: a[:, 0] * (1.0 + np.tanh(x[:, 0])),
        terminal=lambda x: x[:, 0] ** 2,
        horizon=horizon,
        x0=[x0],
        control_set=FiniteSet([0.5, 1.0]),
        intensity_mass=intensity_mass,
        lipschitz=1.0,
        name="hjb-tiny",
    )


REGISTRY = {
    "heat": make_heat,
    "linear-bsde": make_linear_bsde,
    "manufactured-sine": make_manufactured_sine,
    "uncertain-vol": make_uncertain_vol,
    "hjb-tiny": make_hjb_tiny,
}


def build_problem(name: str, **overrides):
    if name not in REGISTRY:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[name](**overrides)
