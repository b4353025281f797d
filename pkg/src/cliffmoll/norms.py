"""Discrete Lebesgue, Sobolev, Hoelder and sup norms on grid fields.

All functions accept either a :class:`CliffordField` (its grid and mask are
used) or a raw array plus ``grid``.  Raw arrays are scalar fields of shape
``dims`` or multivector fields of shape ``dims + (2**n,)``; the pointwise norm
of a multivector is the 2-norm of its coefficients.

Derivatives are grid central differences; nodes whose stencil leaves the grid
or touches undefined (NaN) data are undefined, and asking for a norm over a
region containing such nodes is an error.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .algebra import Multivector, conj_array, gp
from .grid import CliffordField, EmptyDomainError, Grid


class StencilError(ValueError):
    """A region contains nodes where the requested difference stencil is unavailable."""


@dataclass(frozen=True)
class NormSpec:
    p: float = 2.0
    k: int = 0

    def __post_init__(self):
        if not (self.p > 1 or math.isinf(self.p)):
            raise ValueError(f"p must be > 1 or inf, got {self.p}")
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError(f"k must be a nonnegative integer, got {self.k}")


def _unpack(f, grid, region):
    if isinstance(f, CliffordField):
        values, grid = f.data, f.grid
        if region is None:
            region = f.mask
    else:
        values = np.asarray(f, dtype=float)
        if grid is None:
            raise ValueError("a grid is required for raw arrays")
        if region is None:
            region = np.ones(grid.dims, bool)
    region = np.asarray(region, dtype=bool)
    if region.shape != grid.dims:
        raise ValueError(f"region shape {region.shape} does not match grid {grid.dims}")
    if values.shape[: grid.n] != grid.dims:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.dims}")
    return values, grid, region


def _shift(a: np.ndarray, offset: int, axis: int) -> np.ndarray:
    """``out[i] = a[i + offset]`` along ``axis``; NaN where that leaves the array."""
    out = np.full_like(a, np.nan)
    n = a.shape[axis]
    if abs(offset) >= n:
        return out
    dst = [slice(None)] * a.ndim
    src = [slice(None)] * a.ndim
    if offset >= 0:
        dst[axis] = slice(0, n - offset)
        src[axis] = slice(offset, n)
    else:
        dst[axis] = slice(-offset, n)
        src[axis] = slice(0, n + offset)
    out[tuple(dst)] = a[tuple(src)]
    return out


def central_first(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    return (_shift(a, 1, axis) - _shift(a, -1, axis)) / (2 * h)


def central_second(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    return (_shift(a, 1, axis) - 2 * a + _shift(a, -1, axis)) / (h * h)


def partial_derivative(values: np.ndarray, grid: Grid, orders) -> np.ndarray:
    """D^j by composed central differences (second differences, then one first difference)."""
    out = np.asarray(values, dtype=float)
    for axis, j in enumerate(orders):
        h = grid.spacing[axis]
        for _ in range(j // 2):
            out = central_second(out, h, axis)
        if j % 2:
            out = central_first(out, h, axis)
    return out


def multi_indices(n: int, k: int):
    """All multi-indices j in N^n with |j| <= k, ordered by total order."""
    out = [j for j in itertools.product(range(k + 1), repeat=n) if sum(j) <= k]
    return sorted(out, key=lambda j: (sum(j), tuple(-x for x in j)))


def pointwise_norm(values: np.ndarray, grid: Grid) -> np.ndarray:
    if values.ndim == grid.n:
        return np.abs(values)
    return np.sqrt(np.sum(values * values, axis=-1))


def _region_values(values, grid, region):
    if not region.any():
        raise EmptyDomainError("empty region")
    mags = pointwise_norm(values, grid)[region]
    if not np.all(np.isfinite(mags)):
        raise StencilError(f"{int((~np.isfinite(mags)).sum())} region nodes are undefined "
                           "(stencil margin violation)")
    return mags


def lp_norm(f, p: float = 2.0, region=None, grid: Grid | None = None) -> float:
    values, grid, region = _unpack(f, grid, region)
    mags = _region_values(values, grid, region)
    if math.isinf(p):
        return float(mags.max())
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float((np.sum(mags**p) * grid.cell_volume) ** (1.0 / p))


def sup_norm(f, region=None, grid: Grid | None = None) -> float:
    return lp_norm(f, math.inf, region, grid)


def sobolev_norm(f, spec: NormSpec | None = None, region=None, grid: Grid | None = None,
                 *, p: float | None = None, k: int | None = None) -> float:
    """(sum_{|j|<=k} ||D^j f||_p^p)^(1/p); the max over j for p = inf."""
    if spec is None:
        spec = NormSpec(2.0 if p is None else p, 0 if k is None else k)
    values, grid, region = _unpack(f, grid, region)
    terms = [lp_norm(partial_derivative(values, grid, j), spec.p, region, grid)
             for j in multi_indices(grid.n, spec.k)]
    if math.isinf(spec.p):
        return max(terms)
    return float(sum(t**spec.p for t in terms) ** (1.0 / spec.p))


def holder_seminorm(f, alpha: float, region=None, grid: Grid | None = None, *,
                    seed: int = 0, all_pairs_limit: int = 4096, n_random: int = 10**6) -> float:
    """Largest sampled ||f(x)-f(y)|| / |x-y|^alpha.

    Uses all node pairs when the region has at most ``all_pairs_limit`` nodes,
    otherwise ``n_random`` pairs from a seeded generator.  Sampled pairs give a
    lower bound for the true seminorm.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"Hoelder exponent must lie in (0, 1]; alpha={alpha} > 1 admits only "
                         "constant functions")
    values, grid, region = _unpack(f, grid, region)
    if not region.any():
        raise EmptyDomainError("empty region")
    pts = grid.nodes()[region]
    vals = values[region]
    if vals.ndim == 1:
        vals = vals[:, None]
    if not np.all(np.isfinite(vals)):
        raise StencilError("field undefined on part of the region")
    m = len(pts)
    if m < 2:
        return 0.0
    best = 0.0
    if m <= all_pairs_limit:
        for i in range(m - 1):
            dx = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
            dv = np.linalg.norm(vals[i + 1:] - vals[i], axis=1)
            best = max(best, float(np.max(dv / dx**alpha)))
        return best
    rng = np.random.default_rng(seed)
    chunk = 100_000
    left = n_random
    while left > 0:
        c = min(chunk, left)
        i = rng.integers(0, m, c)
        j = rng.integers(0, m, c)
        keep = i != j
        i, j = i[keep], j[keep]
        dx = np.linalg.norm(pts[i] - pts[j], axis=1)
        dv = np.linalg.norm(vals[i] - vals[j], axis=1)
        if len(dx):
            best = max(best, float(np.max(dv / dx**alpha)))
        left -= c
    return best


def clifford_inner_product(f: CliffordField, g: CliffordField, region=None) -> Multivector:
    """<f, g> = sum over region of conj(f(x)) g(x) times the cell volume."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    if region is None:
        region = f.mask & g.mask
    region = np.asarray(region, dtype=bool)
    if not region.any():
        raise EmptyDomainError("empty region")
    prod = gp(conj_array(f.data[region]), g.data[region])
    return Multivector(f.n, prod.sum(axis=0) * f.grid.cell_volume)
