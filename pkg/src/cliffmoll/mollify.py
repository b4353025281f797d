"""Bump mollifier, regularization of grid fields, and layered smooth approximation.

The kernel is phi(x) = k exp(1/(|x|^2 - 1)) on the open unit ball, scaled as
phi_eps(x) = eps^-n phi(x/eps).  On a grid it is sampled and renormalized so
that its weights sum to one exactly, which makes constants reproduce exactly.

``global_smooth_approx`` follows the classical interior construction: shells
at distance 1/i from the boundary, a partition of unity subordinate to them,
each piece mollified with its own width, and the pieces summed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, ndimage
from scipy.interpolate import CubicSpline

from .algebra import MAX_DIM
from .grid import CliffordField, Domain, EmptyDomainError, Grid, shrink_domain
from .norms import StencilError, multi_indices, partial_derivative, sobolev_norm

MIN_EPS_CELLS = 4


class UnderResolvedError(ValueError):
    """The grid cannot resolve the requested kernel width or layer structure."""


class SmoothApproxError(RuntimeError):
    """A layer could not meet its error budget above the resolution floor."""

    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


def bump(r2: np.ndarray) -> np.ndarray:
    """Unnormalized exp(1/(r^2 - 1)) on r^2 < 1, zero elsewhere."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1
    out[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    return out


@lru_cache(maxsize=None)
def kernel_constant(n: int) -> float:
    """k such that k * int_{B(0,1)} exp(1/(|x|^2-1)) dx = 1, via radial quadrature."""
    if not 1 <= n <= MAX_DIM:
        raise ValueError(f"n must lie in [1, {MAX_DIM}]")
    sphere = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    radial, _ = integrate.quad(lambda r: r ** (n - 1) * math.exp(1.0 / (r * r - 1.0)),
                               0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / (sphere * radial)


def phi(x: np.ndarray, eps: float = 1.0) -> np.ndarray:
    """Normalized mollifier phi_eps at points ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    r2 = np.sum(x * x, axis=-1) / (eps * eps)
    return kernel_constant(n) * eps ** (-n) * bump(r2)


@dataclass(frozen=True)
class MollifierKernel:
    n: int
    eps: float
    spacing: tuple[float, ...]
    k: float
    stencil: np.ndarray = field(repr=False)

    @property
    def mass(self) -> float:
        """Riemann sum of phi_eps over the stencil (1 up to quadrature error)."""
        return float(self.stencil.sum() * np.prod(self.spacing))

    @property
    def weights(self) -> np.ndarray:
        """Stencil renormalized to unit sum; used for convolution."""
        return self.stencil / self.stencil.sum()

    @property
    def radius_cells(self) -> tuple[int, ...]:
        return tuple((s - 1) // 2 for s in self.stencil.shape)

    def offsets(self) -> np.ndarray:
        axes = [h * np.arange(-r, r + 1) for h, r in zip(self.spacing, self.radius_cells)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def make_kernel(n: int, eps: float, spacing) -> MollifierKernel:
    spacing = tuple(float(h) for h in np.broadcast_to(np.asarray(spacing, dtype=float), (n,)))
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    radius = [int(math.ceil(eps / h)) for h in spacing]
    axes = [h * np.arange(-r, r + 1) for h, r in zip(spacing, radius)]
    off = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    stencil = phi(off, eps)
    if stencil.sum() <= 0:
        raise UnderResolvedError(f"eps={eps} smaller than the grid spacing")
    stencil.setflags(write=False)
    return MollifierKernel(n, float(eps), spacing, kernel_constant(n), stencil)


def _check_resolution(grid: Grid, eps: float) -> None:
    if eps < MIN_EPS_CELLS * grid.h * (1 - 1e-12):
        raise UnderResolvedError(
            f"eps={eps:g} is below the resolution floor {MIN_EPS_CELLS}h = {MIN_EPS_CELLS * grid.h:g}")


def convolve(values: np.ndarray, grid: Grid, eps: float) -> np.ndarray:
    """Discrete phi_eps * values on the whole grid, zero beyond the grid edge."""
    _check_resolution(grid, eps)
    w = make_kernel(grid.n, eps, grid.spacing).weights
    values = np.asarray(values, dtype=float)
    if values.ndim == grid.n:
        return ndimage.correlate(values, w, mode="constant", cval=0.0)
    return np.stack([ndimage.correlate(values[..., c], w, mode="constant", cval=0.0)
                     for c in range(values.shape[-1])], axis=-1)


def mollify_scalar(values: np.ndarray, grid: Grid, eps: float, domain: Domain):
    """Regularization f^eps = phi_eps * f of a scalar field given on ``domain``.

    Returns ``(out, inside)``: ``out`` holds f^eps on the nodes of Omega_eps and
    NaN elsewhere; ``inside`` is the Omega_eps node mask.
    """
    _check_resolution(grid, eps)
    inside = shrink_domain(domain, eps).mask(grid)
    if not inside.any():
        raise EmptyDomainError(f"Omega_eps is empty on the grid for eps={eps}")
    u = np.where(domain.mask(grid), values, 0.0)
    out = convolve(u, grid, eps)
    return np.where(inside, out, np.nan), inside


def mollify_clifford(f: CliffordField, eps: float, domain: Domain) -> CliffordField:
    """Component-wise regularization sum_A e_A (phi_eps * f_A)."""
    comps = []
    inside = None
    for a in range(f.data.shape[-1]):
        out, inside = mollify_scalar(f.data[..., a], f.grid, eps, domain)
        comps.append(out)
    return CliffordField.from_components(f.grid, comps, inside)


@dataclass
class SmoothnessReport:
    max_derivative: dict[int, float]
    lipschitz: dict[int, float]
    nodes: int


def smoothness_report(f, grid: Grid | None = None, region=None, max_order: int = 3) -> SmoothnessReport:
    """Finite-difference derivative magnitudes up to ``max_order`` over ``region``.

    ``lipschitz[q]`` is the largest difference quotient |D^j f(x+h e_i) - D^j f(x)| / h
    over adjacent region nodes, taken over all |j| = q.
    """
    if isinstance(f, CliffordField):
        values, grid = f.data, f.grid
        region = f.mask if region is None else region
    else:
        values = np.asarray(f, dtype=float)
        region = np.ones(grid.dims, bool) if region is None else region
    region = np.asarray(region, bool)
    derivs = {}
    lips = {}
    for q in range(max_order + 1):
        worst, worst_lip = 0.0, 0.0
        for j in (j for j in multi_indices(grid.n, q) if sum(j) == q):
            d = partial_derivative(values, grid, j)
            mag = np.abs(d) if d.ndim == grid.n else np.linalg.norm(d, axis=-1)
            ok = region & np.isfinite(mag)
            if not ok.any():
                raise StencilError(f"region too small for order-{q} stencils")
            if q > 0:
                worst = max(worst, float(mag[ok].max()))
            for axis in range(grid.n):
                sl_a = [slice(None)] * grid.n
                sl_b = [slice(None)] * grid.n
                sl_a[axis], sl_b[axis] = slice(1, None), slice(None, -1)
                pair = ok[tuple(sl_a)] & ok[tuple(sl_b)]
                if pair.any():
                    diff = d[tuple(sl_a)] - d[tuple(sl_b)]
                    dm = np.abs(diff) if diff.ndim == grid.n else np.linalg.norm(diff, axis=-1)
                    worst_lip = max(worst_lip, float(dm[pair].max() / grid.spacing[axis]))
        if q > 0:
            derivs[q] = worst
        lips[q] = worst_lip
    return SmoothnessReport(derivs, lips, int(region.sum()))


# -- layered decomposition ---------------------------------------------------


@dataclass(frozen=True)
class Layer:
    """Nodes with lo < dist(x, boundary) < hi; V = (v_lo, v_hi) is the enclosing shell."""

    index: int
    lo: float
    hi: float
    v_lo: float
    v_hi: float

    def contains(self, dist):
        return (dist > self.lo) & (dist < self.hi)

    def containment_gap(self) -> float:
        """How far phi_eps * (theta f) may spread and stay inside V."""
        gaps = [math.inf]
        if math.isfinite(self.lo):
            gaps.append(self.lo - self.v_lo)
        if math.isfinite(self.hi):
            gaps.append(self.v_hi - self.hi)
        return min(gaps)


@dataclass
class LayerDecomposition:
    domain: Domain
    grid: Grid
    m: int
    layers: list[Layer]
    closed: bool

    def distance(self) -> np.ndarray:
        """Signed distance to the boundary, positive inside, at every node."""
        return -self.domain.sdf(self.grid.nodes())

    def masks(self) -> list[np.ndarray]:
        d = self.distance()
        inside = d > 0
        return [layer.contains(d) & inside for layer in self.layers]

    def coverage(self) -> np.ndarray:
        """Number of layers containing each node (inside nodes only)."""
        return np.sum(self.masks(), axis=0)

    def uncovered(self) -> np.ndarray:
        return (self.distance() > 0) & (self.coverage() == 0)


def _band(i: int) -> tuple[float, float]:
    if i == 0:
        return 1.0 / 3.0, math.inf
    return 1.0 / (i + 3), 1.0 / (i + 1)


def _shell(i: int) -> tuple[float, float]:
    if i == 0:
        return 0.25, math.inf
    return 1.0 / (i + 4), 1.0 / i


def _layers(m: int, closed: bool) -> list[Layer]:
    layers = []
    for i in range(m + 1):
        lo, hi = _band(i)
        v_lo, v_hi = _shell(i)
        if closed and i == m:
            lo, v_lo = -math.inf, -math.inf
        layers.append(Layer(i, lo, hi, v_lo, v_hi))
    return layers


def layer_decomposition(d: Domain, grid: Grid, m: int, closed: bool = True) -> LayerDecomposition:
    """Seed layer {dist > 1/3} plus shells {1/(i+3) < dist < 1/(i+1)}, i = 1..m.

    With ``closed=True`` the last layer also takes the remaining boundary shell
    (and everything beyond the boundary), so the layers cover every inside node.
    Otherwise nodes with dist <= 1/(m+3) are left uncovered, as in the plain
    truncation of the infinite cover.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    for i in range(1, m + 1):
        lo, hi = _band(i)
        if hi - lo < 2 * grid.h:
            raise UnderResolvedError(f"layer {i} has width {hi - lo:.4g} < 2h = {2 * grid.h:.4g}")
    layers = _layers(m, closed)
    ld = LayerDecomposition(d, grid, m, layers, closed)
    if closed:
        missing = int(ld.uncovered().sum())
        if missing:
            raise UnderResolvedError(f"{missing} inside nodes are not covered by any layer")
    return ld


@lru_cache(maxsize=None)
def _step_profile() -> CubicSpline:
    # cumulative integral of the 1-D mollifier on [-1, 1], 8-point Gauss-Legendre per cell
    t = np.linspace(-1.0, 1.0, 4001)
    xg, wg = np.polynomial.legendre.leggauss(8)
    a, b = t[:-1, None], t[1:, None]
    pts = 0.5 * (b - a) * xg + 0.5 * (a + b)
    cell = (0.5 * (b - a) * wg * bump(pts * pts)).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    return CubicSpline(t, cum / cum[-1])


def smooth_step(t: np.ndarray) -> np.ndarray:
    """Mollified Heaviside: 0 for t <= -1, 1 for t >= 1, C-infinity profile in between."""
    t = np.asarray(t, dtype=float)
    out = np.clip(_step_profile()(np.clip(t, -1.0, 1.0)), 0.0, 1.0)
    out[t <= -1] = 0.0
    out[t >= 1] = 1.0
    return out


@dataclass
class PartitionOfUnity:
    weights: list[np.ndarray]
    decomposition: LayerDecomposition
    ramps: list[tuple[float, float]]


def _overlap(i: int) -> float:
    """Width of the overlap between layers i and i+1."""
    return 1.0 / ((i + 2) * (i + 3))


def partition_of_unity(ld: LayerDecomposition) -> PartitionOfUnity:
    """theta_i from mollified layer indicators in the distance variable, normalized.

    Each layer indicator is mollified (1-D kernel in the distance to the
    boundary) with a width of a quarter of the overlap it shares with its
    neighbour, so its support stays inside the layer; the raw weights are then
    divided by their pointwise sum.
    """
    dist = ld.distance()
    raw = []
    ramps = []
    for layer in ld.layers:
        i = layer.index
        w = np.ones_like(dist)
        d_lo = _overlap(i) / 4 if math.isfinite(layer.lo) else 0.0
        d_hi = _overlap(i - 1) / 4 if math.isfinite(layer.hi) else 0.0
        if d_lo:
            w *= smooth_step((dist - layer.lo - d_lo) / d_lo)
        if d_hi:
            w *= 1.0 - smooth_step((dist - layer.hi + d_hi) / d_hi)
        raw.append(w)
        ramps.append((d_lo, d_hi))
    total = np.sum(raw, axis=0)
    relevant = (dist > 0) if not ld.closed else np.ones_like(dist, bool)
    if np.any(total[relevant] <= 0):
        raise AssertionError("partition of unity has a zero pointwise sum on covered nodes")
    safe = np.where(total > 0, total, 1.0)
    weights = [np.where(total > 0, w / safe, 0.0) for w in raw]
    return PartitionOfUnity(weights, ld, ramps)


# -- global smooth approximation ---------------------------------------------


@dataclass(frozen=True)
class LayerRow:
    component: int
    layer: int
    eps: float
    budget: float
    attained: float


@dataclass
class SmoothApproxResult:
    psi: CliffordField
    achieved: float
    rows: list[LayerRow]
    beta: float
    m: int

    @property
    def bound(self) -> float:
        """Triangle-inequality bound sum over rows of the attained errors."""
        return float(sum(r.attained for r in self.rows))


def auto_layers(grid: Grid, max_m: int = 6) -> int:
    """Largest m whose layers, ramps and initial kernel widths the grid resolves."""
    floor = MIN_EPS_CELLS * grid.h
    best = 0
    for m in range(1, max_m + 1):
        ok = all(_band(i)[1] - _band(i)[0] >= 2 * grid.h for i in range(1, m + 1))
        ok = ok and _overlap(m - 1) / 4 >= 4 * grid.h
        ok = ok and min(layer.containment_gap() for layer in _layers(m, True)) >= 2 * floor
        if ok:
            best = m
    return best


def global_smooth_approx(f: CliffordField, domain: Domain, beta: float, p: float = 2.0, k: int = 1,
                         m: int | None = None, eps_cap: float = 0.25) -> SmoothApproxResult:
    """Smooth approximant psi with discrete ||f - psi||_{W^{p,k}(Omega)} <= beta.

    Each of the 2**n components gets the budget beta / 2**n, split over layers
    as budget / 2**(i+1).  For every layer the kernel width starts at the
    largest value keeping the mollified piece inside its enclosing shell and is
    halved until the piece meets its budget; the search fails at 4h.

    Field values at nodes outside the domain serve as the extension of f across
    the boundary for the outermost layer, so they must be finite near it.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    grid = f.grid
    if m is None:
        m = auto_layers(grid)
    ld = layer_decomposition(domain, grid, m, closed=True)
    pou = partition_of_unity(ld)
    inside = domain.mask(grid)
    floor = MIN_EPS_CELLS * grid.h
    eps0 = [min(layer.containment_gap(), eps_cap) for layer in ld.layers]

    # nodes the norm looks at, and the nodes their convolutions reach
    dist = ld.distance()
    reach = max(eps0) + (k + 1) * grid.h
    near = dist > -reach
    if not np.all(np.isfinite(f.data[near])):
        raise ValueError("field lacks finite values in a band of width "
                         f"{reach:.3g} around the domain (needed as its extension)")
    if _edge_distance(grid)[inside].min() < reach:
        raise ValueError(f"grid margin around the domain is thinner than {reach:.3g}")

    spec_budget = beta / (1 << grid.n)
    data = np.where(near[..., None], f.data, 0.0)
    psi = np.zeros_like(data)
    rows = []
    for a in range(data.shape[-1]):
        fa = data[..., a]
        for layer, theta, e0 in zip(ld.layers, pou.weights, eps0):
            budget = spec_budget / 2 ** (layer.index + 1)
            piece = theta * fa
            eps, err = e0, math.nan
            while True:
                if eps < floor * (1 - 1e-12):
                    rows.append(LayerRow(a, layer.index, eps * 2, budget, err))
                    raise SmoothApproxError(
                        f"component {a}, layer {layer.index}: error {err:.3g} exceeds budget "
                        f"{budget:.3g} at the resolution floor eps={floor:.3g}", rows)
                g = convolve(piece, grid, eps)
                err = sobolev_norm(g - piece, p=p, k=k, region=inside, grid=grid)
                if err <= budget:
                    break
                eps /= 2
            rows.append(LayerRow(a, layer.index, eps, budget, err))
            psi[..., a] += g
    psi_field = CliffordField(grid, psi, inside)
    achieved = sobolev_norm(psi - data, p=p, k=k, region=inside, grid=grid)
    return SmoothApproxResult(psi_field, achieved, rows, beta, m)


def _edge_distance(grid: Grid) -> np.ndarray:
    """Distance from each node to the nearest grid face."""
    nodes = grid.nodes()
    lo = np.asarray(grid.origin)
    hi = grid.hi()
    return np.minimum(nodes - lo, hi - nodes).min(axis=-1)
