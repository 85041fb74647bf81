"""Empirical least-squares projection on basis functions over (state, control)
and maximization of a fitted function over the control variable.

The solver is SVD-based with a relative singular-value cutoff; normal
equations are never formed (Monte-Carlo designs are routinely ill-conditioned).
"""

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .controls import ControlSet, FiniteSet

SVD_RCOND = 1e-10


def monomial_exponents(dim: int, degree: int) -> np.ndarray:
    """Multi-indices of total degree <= degree over `dim` variables,
    ordered by total degree then lexicographically."""
    exps = [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), e))
    return np.array(exps, dtype=np.int64)


@dataclass(frozen=True)
class BasisSpec:
    """Tensor-product basis: state monomials x (control monomials | indicators).

    `control_kind` is None (state-only basis), "monomial" (box control set) or
    "indicator" (finite control set, one indicator per point).
    """

    state_dim: int
    state_exponents: np.ndarray
    control_kind: str | None = None
    control_exponents: np.ndarray | None = None
    control_points: FiniteSet | None = None

    @classmethod
    def polynomial(
        cls,
        state_dim: int,
        state_degree: int = 3,
        control: ControlSet | None = None,
        control_degree: int = 2,
    ) -> "BasisSpec":
        st = monomial_exponents(state_dim, state_degree)
        if control is None:
            return cls(state_dim, st)
        if isinstance(control, FiniteSet):
            return cls(state_dim, st, "indicator", None, control)
        return cls(state_dim, st, "monomial", monomial_exponents(control.dim, control_degree))

    @property
    def state_size(self) -> int:
        return self.state_exponents.shape[0]

    @property
    def control_size(self) -> int:
        if self.control_kind is None:
            return 1
        if self.control_kind == "indicator":
            return self.control_points.size
        return self.control_exponents.shape[0]

    @property
    def size(self) -> int:
        return self.state_size * self.control_size

    def state_features(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.prod(x[:, None, :] ** self.state_exponents[None, :, :], axis=2)

    def control_features(self, a: np.ndarray | None, n_rows: int) -> np.ndarray:
        if self.control_kind is None:
            return np.ones((n_rows, 1))
        if a is None:
            raise ValueError("basis has a control component but no control given")
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if self.control_kind == "indicator":
            idx = self.control_points.index_of(a)
            return (idx[:, None] == np.arange(self.control_points.size)[None, :]).astype(float)
        return np.prod(a[:, None, :] ** self.control_exponents[None, :, :], axis=2)

    def features(self, x: np.ndarray, a: np.ndarray | None = None) -> np.ndarray:
        """Design matrix rows phi_l(x_m, a_m), shape (M, size)."""
        sf = self.state_features(x)
        cf = self.control_features(a, sf.shape[0])
        return (sf[:, :, None] * cf[:, None, :]).reshape(sf.shape[0], -1)


@dataclass(frozen=True)
class FitFunction:
    """Coefficient-weighted basis sum, with SVD conditioning diagnostics."""

    coefficients: np.ndarray
    basis: BasisSpec
    rank: int
    truncated: int

    def __call__(self, x, a=None):
        return evaluate_fit(self, x, a)


class MinNormSolver:
    """Factored SVD of a design matrix; solves min-norm least squares for
    any number of right-hand sides with relative cutoff SVD_RCOND * s_max."""

    def __init__(self, design: np.ndarray, rcond: float = SVD_RCOND):
        if not np.all(np.isfinite(design)):
            raise ValueError("design matrix contains non-finite entries")
        u, s, vt = np.linalg.svd(design, full_matrices=False)
        smax = s[0] if s.size else 0.0
        if smax == 0.0:
            warnings.warn("all-zero design matrix; returning zero fits")
            keep = np.zeros_like(s, dtype=bool)
        else:
            keep = s > rcond * smax
        self._u = u
        self._vt = vt
        self._inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
        self.rank = int(keep.sum())
        self.truncated = int(s.size - self.rank)

    def solve(self, targets: np.ndarray) -> np.ndarray:
        """Minimal-norm coefficients; targets (M,) or (M, k)."""
        if not np.all(np.isfinite(targets)):
            raise ValueError("regression targets contain non-finite entries")
        squeeze = targets.ndim == 1
        b = targets[:, None] if squeeze else targets
        coeff = self._vt.T @ ((self._u.T @ b) * self._inv_s[:, None])
        return coeff[:, 0] if squeeze else coeff


def fit_least_squares(x, targets, basis: BasisSpec, a=None) -> FitFunction:
    """Least-squares projection of targets onto the basis span over samples
    (x_m, a_m); returns the minimal-norm minimizer."""
    targets = np.asarray(targets, dtype=float)
    if targets.shape[0] < 1:
        raise ValueError("need at least one sample")
    solver = MinNormSolver(basis.features(x, a))
    coeff = solver.solve(targets)
    return FitFunction(coeff, basis, solver.rank, solver.truncated)


def evaluate_fit(fit: FitFunction, x, a=None):
    """Sum_l c_l phi_l(x, a); scalar for a single sample, else (M,)."""
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim <= 1
    vals = fit.basis.features(x_arr, a) @ fit.coefficients
    return float(vals[0]) if single else vals


def _golden_section_max(g, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - invphi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + invphi * (b - a)
            gd = g(d)
    mid = 0.5 * (a + b)
    return mid, g(mid)


def argmax_over_control(fit: FitFunction, x, control_grid: np.ndarray, refine: bool = False):
    """Scan the control grid for the maximum of a fitted function at state x.

    Ties break to the lowest grid index.  With refine=True and a sorted 1-d
    grid, one golden-section pass inside the bracketing cell sharpens the
    maximizer (box control sets only).
    """
    grid = np.atleast_2d(np.asarray(control_grid, dtype=float))
    if grid.shape[1] != 1 and grid.shape[0] == 1:
        grid = grid.T
    if grid.shape[0] == 0:
        raise ValueError("control grid must be nonempty")
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    xs = np.repeat(x_arr, grid.shape[0], axis=0)
    vals = fit.basis.features(xs, grid) @ fit.coefficients
    i = int(np.argmax(vals))  # first maximum = lowest index
    a_star, value = grid[i], float(vals[i])
    if refine and grid.shape[1] == 1 and grid.shape[0] > 1:
        lo = float(grid[max(i - 1, 0), 0])
        hi = float(grid[min(i + 1, grid.shape[0] - 1), 0])

        def g(a):
            return float((fit.basis.features(x_arr, np.array([[a]])) @ fit.coefficients)[0])

        a_ref, v_ref = _golden_section_max(g, lo, hi)
        if v_ref > value:
            a_star, value = np.array([a_ref]), v_ref
    return a_star, value
