"""Control set descriptors: compact boxes and finite sets in R^k."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Compact box [lo_1, hi_1] x ... x [lo_k, hi_k]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, dtype=float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, dtype=float)))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(self.hi < self.lo):
            raise ValueError("box upper bounds must dominate lower bounds")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def grid(self, points_per_dim: int = 17) -> np.ndarray:
        """Scan grid, shape (points_per_dim**dim, dim); degenerate axes collapse."""
        axes = [np.linspace(l, h, points_per_dim) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on (0,1), shape (..., dim), onto the box."""
        return self.lo + u * (self.hi - self.lo)

    def is_singleton(self) -> bool:
        return bool(np.all(self.lo == self.hi))


@dataclass(frozen=True)
class FiniteSet:
    """Finite control set {a_1, ..., a_m} in R^k, uniform weights."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] == 0:
            raise ValueError("finite control set needs at least one point")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def grid(self, points_per_dim: int = 17) -> np.ndarray:
        # the natural scan grid for a finite set is the set itself
        return self.values

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Uniform pick from the set; u is (...,) uniforms on (0,1)."""
        idx = np.minimum((u * self.size).astype(np.int64), self.size - 1)
        return self.values[idx]

    def index_of(self, a: np.ndarray) -> np.ndarray:
        """Nearest-point index, exact for points drawn from the set."""
        a = np.atleast_2d(a)
        d2 = np.sum((a[:, None, :] - self.values[None, :, :]) ** 2, axis=-1)
        return np.argmin(d2, axis=1)

    def is_singleton(self) -> bool:
        return self.size == 1


ControlSet = Box | FiniteSet
