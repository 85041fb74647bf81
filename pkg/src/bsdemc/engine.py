"""Forward simulation: time grids, Brownian increments, marked Poisson jumps
and Euler schemes (plain diffusion and regime switching).

All sampling is counter-based (see `rng`): a batch is a pure function of
(inputs, seed) and is bitwise identical for any worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .controls import ControlSet, FiniteSet


class SimulationError(RuntimeError):
    """Raised when a forward pass produces non-finite states."""


@dataclass(frozen=True)
class TimeGrid:
    """Partition 0 = t_0 < t_1 < ... < t_n = T of [0, T]."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.shape[0] < 2:
            raise ValueError("grid needs at least two times")
        if t[0] != 0.0:
            raise ValueError("grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def modulus(self) -> float:
        return float(self.steps.max())


def build_time_grid(horizon: float, n_steps: int) -> TimeGrid:
    """Uniform grid with n_steps steps of size horizon / n_steps."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    return TimeGrid(np.linspace(0.0, horizon, n_steps + 1))


@dataclass(frozen=True)
class IncrementBatch:
    """Brownian increments, shape (paths, steps, dim); variance step size."""

    increments: np.ndarray
    grid: TimeGrid
    seed: int

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def dim(self) -> int:
        return self.increments.shape[2]


@dataclass(frozen=True)
class PathBatch:
    """Euler trajectories, shape (paths, steps+1, dim), with their driving
    increments and (for regime-switching paths) the regime at each grid time."""

    states: np.ndarray
    x0: np.ndarray
    grid: TimeGrid
    increments: IncrementBatch
    regimes: np.ndarray | None = None  # (paths, steps+1, control dim)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]


@dataclass(frozen=True)
class IntensityMeasure:
    """Finite intensity measure on a control set: total mass lambda_bar with
    the normalized mark distribution uniform over the set."""

    control_set: ControlSet
    total_mass: float

    def __post_init__(self):
        if not self.total_mass > 0:
            raise ValueError("total intensity mass must be > 0")


@dataclass(frozen=True)
class JumpBatch:
    """Marked Poisson jump trajectories for a batch of paths.

    `times` is (paths, K) ascending with +inf padding past each path's last
    jump in (0, T]; `marks` is (paths, K, control dim); `initial` holds I_0.
    """

    times: np.ndarray
    marks: np.ndarray
    initial: np.ndarray
    counts: np.ndarray
    horizon: float
    total_mass: float

    @property
    def n_paths(self) -> int:
        return self.times.shape[0]

    def regime_at(self, t: float) -> np.ndarray:
        """Right-continuous regime value I_t per path, shape (paths, dim)."""
        k = (self.times <= t).sum(axis=1)
        out = self.initial.copy()
        hit = k > 0
        out[hit] = self.marks[np.nonzero(hit)[0], k[hit] - 1]
        return out

    def regimes_on_grid(self, grid: TimeGrid) -> np.ndarray:
        return np.stack([self.regime_at(t) for t in grid.times], axis=1)


def _chunks(n_paths: int, workers: int):
    bounds = np.linspace(0, n_paths, max(1, workers) + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_chunked(n_paths, workers, fill):
    spans = _chunks(n_paths, workers)
    if len(spans) == 1:
        fill(*spans[0])
        return
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        list(pool.map(lambda s: fill(*s), spans))


def sample_brownian_increments(
    grid: TimeGrid, dim: int, n_paths: int, seed: int, workers: int = 1
) -> IncrementBatch:
    """i.i.d. N(0, dt_i) increments per coordinate, one Philox stream per path."""
    if dim < 1 or n_paths < 1:
        raise ValueError("dim and n_paths must be positive")
    n = grid.n_steps
    scale = np.sqrt(grid.steps)[None, :, None]
    out = np.empty((n_paths, n, dim))

    def fill(lo, hi):
        ids = np.arange(lo, hi, dtype=np.uint64)
        g = rng.gaussians(seed, rng.STREAM_BROWNIAN, ids, n * dim)
        out[lo:hi] = g.reshape(hi - lo, n, dim) * scale

    _run_chunked(n_paths, workers, fill)
    return IncrementBatch(out, grid, seed)


def _drift_term(val, n_paths, dim):
    return np.broadcast_to(np.asarray(val, dtype=float), (n_paths, dim))

def _diffusion_term(val, n_paths, dim):
    return np.broadcast_to(np.asarray(val, dtype=float), (n_paths, dim, dim))


def _euler_step(x, drift, sig, dt, dw):
    return x + drift * dt + np.einsum("pij,pj->pi", sig, dw)


def euler_diffusion(b, sigma, grid: TimeGrid, increments: IncrementBatch, x0) -> PathBatch:
    """X_{i+1} = X_i + b(X_i) dt_i + sigma(X_i) dW_i.

    `b` maps (paths, dim) -> (paths, dim); `sigma` maps (paths, dim) ->
    (paths, dim, dim); both may return anything broadcastable to those shapes.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n_paths, n, dim = increments.increments.shape
    if x0.shape[0] != dim:
        raise ValueError("x0 dimension does not match increments")
    states = np.empty((n_paths, n + 1, dim))
    states[:, 0, :] = x0
    dts = grid.steps
    for i in range(n):
        x = states[:, i, :]
        states[:, i + 1, :] = _euler_step(
            x,
            _drift_term(b(x), n_paths, dim),
            _diffusion_term(sigma(x), n_paths, dim),
            dts[i],
            increments.increments[:, i, :],
        )
        if not np.all(np.isfinite(states[:, i + 1, :])):
            raise SimulationError(f"non-finite state after Euler step {i}")
    return PathBatch(states, x0, grid, increments)


def simulate_marked_poisson(
    intensity: IntensityMeasure,
    horizon: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
    initial_regime=None,
) -> JumpBatch:
    """Jump times with exponential(lambda_bar) inter-arrivals on (0, T], marks
    i.i.d. uniform on the control set.  I_0 is an extra mark draw unless a
    constant `initial_regime` is supplied.

    `workers` is accepted for interface symmetry; every draw is addressed by
    (seed, path, position) so the output never depends on it.
    """
    del workers
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    aset = intensity.control_set
    lam = intensity.total_mass
    mean_count = lam * horizon
    k_cap = max(4, int(np.ceil(mean_count + 10.0 * np.sqrt(mean_count) + 10.0)))

    def draw_times(ids, k):
        u = rng.uniforms(seed, rng.STREAM_JUMP_TIMES, ids, k)
        return np.cumsum(-np.log(u) / lam, axis=1)

    # first pass to size the padded arrays: widen until every path's partial
    # sum has crossed the horizon (columns are reproducible under widening)
    k = k_cap
    ids_all = np.arange(n_paths, dtype=np.uint64)
    t_all = draw_times(ids_all, k)
    while t_all[:, -1].min() <= horizon:
        k *= 2
        t_all = draw_times(ids_all, k)
    alive = t_all <= horizon
    counts = alive.sum(axis=1)
    k_used = max(1, int(counts.max()))
    times = np.where(alive, t_all, np.inf)[:, :k_used]

    def draw_marks(ids, count):
        u = rng.uniforms(seed, rng.STREAM_MARKS, ids, count * aset.dim)
        u = u.reshape(ids.shape[0], count, aset.dim)
        if isinstance(aset, FiniteSet):
            return aset.sample(u[..., 0])
        return aset.sample(u)

    m_all = draw_marks(ids_all, k_used + 1)
    if initial_regime is not None:
        initial = np.broadcast_to(
            np.atleast_1d(np.asarray(initial_regime, dtype=float)), (n_paths, aset.dim)
        ).copy()
    else:
        initial = m_all[:, 0, :]
    marks = m_all[:, 1:, :]
    return JumpBatch(times, marks, initial, counts, horizon, lam)


def euler_regime_switching(
    b, sigma, grid: TimeGrid, increments: IncrementBatch, jumps: JumpBatch, x0
) -> PathBatch:
    """Regime-switching Euler scheme: coefficients read the regime at the left
    grid point, X_{i+1} = X_i + b(X_i, I_i) dt_i + sigma(X_i, I_i) dW_i."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n_paths, n, dim = increments.increments.shape
    if jumps.n_paths != n_paths:
        raise ValueError("jump batch does not match increments")
    regimes = jumps.regimes_on_grid(grid)
    states = np.empty((n_paths, n + 1, dim))
    states[:, 0, :] = x0
    dts = grid.steps
    for i in range(n):
        x = states[:, i, :]
        a = regimes[:, i, :]
        states[:, i + 1, :] = _euler_step(
            x,
            _drift_term(b(x, a), n_paths, dim),
            _diffusion_term(sigma(x, a), n_paths, dim),
            dts[i],
            increments.increments[:, i, :],
        )
        if not np.all(np.isfinite(states[:, i + 1, :])):
            raise SimulationError(f"non-finite state after Euler step {i}")
    return PathBatch(states, x0, grid, increments, regimes=regimes)
