"""Sampling grids, domains, boundary meshes and Clifford-valued grid fields.

Fields are stored as one array of shape ``dims + (2**n,)`` plus a boolean
inside/outside mask.  Values outside the mask are kept when they are known
(``sample_field`` evaluates the expression at every node); some operators
use them as the extension of the field across the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .algebra import MAX_DIM, Multivector, embed_array


class EmptyDomainError(ValueError):
    """A shrunk or masked region contains no grid nodes."""


class FieldFormatError(ValueError):
    """Malformed or incompatible CLF1 file."""


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.dims) == len(self.origin) == len(self.spacing)):
            raise ValueError("dims, origin and spacing must have equal length")
        if not 1 <= len(self.dims) <= MAX_DIM:
            raise ValueError(f"grid dimension {len(self.dims)} out of range")
        if any(d < 2 for d in self.dims):
            raise ValueError(f"every axis needs at least 2 points, got {self.dims}")
        if any(not (h > 0 and math.isfinite(h)) for h in self.spacing):
            raise ValueError(f"spacings must be positive, got {self.spacing}")

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def h(self) -> float:
        """Largest spacing; the resolution-limiting one."""
        return max(self.spacing)

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(d) for o, h, d in zip(self.origin, self.spacing, self.dims)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``dims + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def node(self, index) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(index) * np.asarray(self.spacing)

    def hi(self) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)


def build_grid(lo, hi, resolution) -> Grid:
    """Vertex-centered grid on the box ``[lo, hi]``; endpoints are nodes."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape:
        raise ValueError("lo and hi must have the same length")
    if np.any(hi <= lo):
        raise ValueError(f"degenerate box [{lo}, {hi}]")
    res = np.broadcast_to(np.asarray(resolution, dtype=int), lo.shape)
    if np.any(res < 2):
        raise ValueError("resolution must be at least 2 per axis")
    spacing = (hi - lo) / (res - 1)
    return Grid(tuple(int(r) for r in res), tuple(float(v) for v in lo), tuple(float(v) for v in spacing))


# -- domains ---------------------------------------------------------------


class Domain:
    """Bounded domain described by a signed distance (negative inside)."""

    kind: str
    n: int

    def sdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.sdf(x) < 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def measure(self) -> float:
        raise NotImplementedError

    def mask(self, grid: Grid) -> np.ndarray:
        return self.contains(grid.nodes())


@dataclass(frozen=True)
class Ball(Domain):
    center: tuple[float, ...]
    radius: float
    kind: str = field(default="ball", init=False)

    @property
    def n(self) -> int:
        return len(self.center)

    def sdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def measure(self) -> float:
        n = self.n
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n

    def surface_measure(self) -> float:
        n = self.n
        return 2 * math.pi ** (n / 2) / math.gamma(n / 2) * self.radius ** (n - 1)

    def spec(self) -> str:
        return f"ball:{self.radius!r}"


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    kind: str = field(default="box", init=False)

    @property
    def n(self) -> int:
        return len(self.lo)

    def sdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        c, half = (lo + hi) / 2, (hi - lo) / 2
        q = np.abs(x - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def bounds(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def measure(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def spec(self) -> str:
        return "box:" + ",".join(map(repr, self.lo)) + ":" + ",".join(map(repr, self.hi))


def ball_domain(center, radius: float) -> Ball:
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    return Ball(tuple(float(c) for c in np.atleast_1d(center)), float(radius))


def box_domain(lo, hi) -> Box:
    lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError(f"degenerate box [{lo}, {hi}]")
    return Box(tuple(lo), tuple(hi))


@dataclass(frozen=True)
class ShrunkDomain:
    """Omega_eps: points of the parent farther than eps from the boundary."""

    parent: Domain
    eps: float

    @property
    def n(self) -> int:
        return self.parent.n

    def sdf(self, x):
        return self.parent.sdf(x) + self.eps

    def contains(self, x):
        # strict: a node at exactly distance eps is outside
        return self.parent.sdf(x) < -self.eps

    def mask(self, grid: Grid) -> np.ndarray:
        return self.contains(grid.nodes())


def shrink_domain(d: Domain, eps: float, grid: Grid | None = None) -> ShrunkDomain:
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    out = ShrunkDomain(d, float(eps))
    if grid is not None and not out.mask(grid).any():
        raise EmptyDomainError(f"Omega_eps is empty on the grid for eps={eps}")
    return out


def grid_for_domain(d: Domain, resolution: int, pad: float = 0.1) -> Grid:
    """Grid over the domain's bounding box enlarged by ``pad`` times its size."""
    lo, hi = d.bounds()
    ext = (hi - lo) * pad
    return build_grid(lo - ext, hi + ext, resolution)


# -- boundary meshes -------------------------------------------------------


@dataclass(frozen=True)
class BoundaryMesh:
    """Boundary quadrature: points on the surface, outward unit normals, weights."""

    centroids: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    domain: Domain

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def n(self) -> int:
        return self.centroids.shape[1]

    def diameter(self) -> float:
        """Typical element size (weight^(1/(n-1)))."""
        if self.n == 1:
            return 0.0
        return float(np.max(self.weights) ** (1.0 / (self.n - 1)))


def _circle_mesh(d: Ball, m: int) -> BoundaryMesh:
    theta = 2 * np.pi * np.arange(m) / m
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    cents = np.asarray(d.center) + d.radius * normals
    weights = np.full(m, 2 * np.pi * d.radius / m)
    return BoundaryMesh(cents, normals, weights, d)


def _sphere_mesh(d: Ball, m: int) -> BoundaryMesh:
    # equal-angle latitude bands, each split into cells of roughly the target area;
    # weights are the exact zone areas so they sum to 4 pi r^2
    r = d.radius
    nbands = max(1, int(round(math.sqrt(math.pi * m) / 2)))
    edges = np.linspace(0.0, np.pi, nbands + 1)
    target = 4 * np.pi / m
    cents, normals, weights = [], [], []
    for t0, t1 in zip(edges[:-1], edges[1:]):
        z0, z1 = np.cos(t1), np.cos(t0)
        band = 2 * np.pi * (z1 - z0)
        k = max(1, int(round(band / target)))
        zm = 0.5 * (z0 + z1)
        rho = math.sqrt(max(0.0, 1 - zm * zm))
        phi = 2 * np.pi * (np.arange(k) + 0.5) / k
        nv = np.stack([rho * np.cos(phi), rho * np.sin(phi), np.full(k, zm)], axis=1)
        normals.append(nv)
        weights.append(np.full(k, band * r * r / k))
    normals = np.concatenate(normals)
    cents = np.asarray(d.center) + r * normals
    return BoundaryMesh(cents, normals, np.concatenate(weights), d)


def _box_mesh(d: Box, m: int) -> BoundaryMesh:
    lo, hi = np.asarray(d.lo), np.asarray(d.hi)
    n = d.n
    size = hi - lo
    if n == 2:
        perim = 2 * size.sum()
        cents, normals, weights = [], [], []
        for axis in range(2):
            other = 1 - axis
            k = max(1, int(round(m * size[other] / perim)))
            t = lo[other] + size[other] * (np.arange(k) + 0.5) / k
            for side, val in ((-1.0, lo[axis]), (1.0, hi[axis])):
                p = np.empty((k, 2))
                p[:, axis] = val
                p[:, other] = t
                nv = np.zeros((k, 2))
                nv[:, axis] = side
                cents.append(p)
                normals.append(nv)
                weights.append(np.full(k, size[other] / k))
        return BoundaryMesh(np.concatenate(cents), np.concatenate(normals), np.concatenate(weights), d)
    if n == 3:
        area = 2 * (size[0] * size[1] + size[1] * size[2] + size[0] * size[2])
        cents, normals, weights = [], [], []
        for axis in range(3):
            a, b = [i for i in range(3) if i != axis]
            face = size[a] * size[b]
            cells = max(1.0, m * face / area)
            ka = max(1, int(round(math.sqrt(cells * size[a] / size[b]))))
            kb = max(1, int(round(cells / ka)))
            ta = lo[a] + size[a] * (np.arange(ka) + 0.5) / ka
            tb = lo[b] + size[b] * (np.arange(kb) + 0.5) / kb
            A, B = np.meshgrid(ta, tb, indexing="ij")
            for side, val in ((-1.0, lo[axis]), (1.0, hi[axis])):
                p = np.empty((ka * kb, 3))
                p[:, axis] = val
                p[:, a] = A.ravel()
                p[:, b] = B.ravel()
                nv = np.zeros((ka * kb, 3))
                nv[:, axis] = side
                cents.append(p)
                normals.append(nv)
                weights.append(np.full(ka * kb, face / (ka * kb)))
        return BoundaryMesh(np.concatenate(cents), np.concatenate(normals), np.concatenate(weights), d)
    raise ValueError(f"box meshes are supported for n in (2, 3), got n={n}")


def boundary_mesh(d: Domain, m: int) -> BoundaryMesh:
    if m < 1:
        raise ValueError("element count must be positive")
    if isinstance(d, Ball) and d.n == 2:
        return _circle_mesh(d, m)
    if isinstance(d, Ball) and d.n == 3:
        return _sphere_mesh(d, m)
    if isinstance(d, Box):
        return _box_mesh(d, m)
    raise ValueError(f"unsupported domain for boundary meshing: {d!r}")


# -- fields ----------------------------------------------------------------


@dataclass
class CliffordField:
    """A multivector per grid node plus an inside/outside mask."""

    grid: Grid
    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        shape = self.grid.dims + (1 << self.grid.n,)
        if self.data.shape != shape:
            raise ValueError(f"data shape {self.data.shape} does not match grid {shape}")
        if self.mask.shape != self.grid.dims:
            raise ValueError(f"mask shape {self.mask.shape} does not match grid {self.grid.dims}")

    @property
    def n(self) -> int:
        return self.grid.n

    def component(self, blade_mask: int) -> np.ndarray:
        return self.data[..., blade_mask]

    def components(self) -> list[np.ndarray]:
        """The scalar sections f_A in increasing blade order."""
        return [self.data[..., a].copy() for a in range(self.data.shape[-1])]

    @classmethod
    def from_components(cls, grid: Grid, comps, mask) -> "CliffordField":
        return cls(grid, np.stack([np.asarray(c, dtype=float) for c in comps], axis=-1), mask)

    def at(self, index) -> Multivector:
        return Multivector(self.n, self.data[tuple(index)])

    def with_data(self, data, mask=None) -> "CliffordField":
        return CliffordField(self.grid, data, self.mask if mask is None else mask)

    def __add__(self, other: "CliffordField") -> "CliffordField":
        return self.with_data(self.data + other.data, self.mask & other.mask)

    def __sub__(self, other: "CliffordField") -> "CliffordField":
        return self.with_data(self.data - other.data, self.mask & other.mask)

    def scaled(self, a: float) -> "CliffordField":
        return self.with_data(a * self.data)


def sample_field(expr: Callable, grid: Grid, domain: Domain | None = None,
                 vectorized: bool = False) -> CliffordField:
    """Evaluate ``expr`` at every grid node; the mask flags nodes inside ``domain``.

    ``expr`` maps a point to a :class:`Multivector` (or a coefficient sequence).
    With ``vectorized=True`` it instead maps an array of points ``(..., n)`` to
    coefficient arrays ``(..., 2**n)``.
    """
    nodes = grid.nodes()
    size = 1 << grid.n
    if vectorized:
        data = np.asarray(expr(nodes), dtype=float)
        data = np.broadcast_to(data, grid.dims + (size,)).copy()
    else:
        data = np.empty(grid.dims + (size,))
        for idx in np.ndindex(*grid.dims):
            v = expr(nodes[idx])
            data[idx] = v.coeffs if isinstance(v, Multivector) else v
    bad = ~np.isfinite(data).all(axis=-1)
    if bad.any():
        first = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite field value at node {first}")
    mask = np.ones(grid.dims, bool) if domain is None else domain.mask(grid)
    return CliffordField(grid, data, mask)


def constant_field(value: Multivector, grid: Grid, domain: Domain | None = None) -> CliffordField:
    return sample_field(lambda x: np.broadcast_to(value.coeffs, x.shape[:-1] + value.coeffs.shape),
                        grid, domain, vectorized=True)


def vector_field(grid: Grid, domain: Domain | None = None) -> CliffordField:
    return sample_field(embed_array, grid, domain, vectorized=True)


# -- CLF1 I/O --------------------------------------------------------------

_MAGIC = "CLF1"


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_field(f: CliffordField, path) -> None:
    g = f.grid
    header = (f"{_MAGIC} n={g.n} dims={','.join(str(d) for d in g.dims)} origin={_fmt(g.origin)} "
              f"spacing={_fmt(g.spacing)} components={1 << g.n} encoding=le-f64\n")
    payload = np.ascontiguousarray(f.data, dtype="<f8").tobytes()
    mask = np.ascontiguousarray(f.mask, dtype=np.uint8).tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)
        fh.write(mask)
    tmp.replace(path)


def _parse_header(line: str) -> dict[str, str]:
    parts = line.split()
    if not parts or parts[0] != _MAGIC:
        if parts and parts[0].startswith("CLF"):
            raise FieldFormatError(f"unsupported version {parts[0]!r}, expected {_MAGIC}")
        raise FieldFormatError("missing CLF1 magic")
    out = {}
    for item in parts[1:]:
        if "=" not in item:
            raise FieldFormatError(f"malformed header item {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    for key in ("n", "dims", "origin", "spacing", "components", "encoding"):
        if key not in out:
            raise FieldFormatError(f"header lacks {key!r}")
    return out


def read_field(path) -> CliffordField:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FieldFormatError("no header line")
    try:
        hdr = _parse_header(raw[:nl].decode("ascii"))
    except UnicodeDecodeError as exc:
        raise FieldFormatError("header is not ASCII") from exc
    if hdr["encoding"] != "le-f64":
        raise FieldFormatError(f"unsupported encoding {hdr['encoding']!r}")
    try:
        n = int(hdr["n"])
        dims = tuple(int(v) for v in hdr["dims"].split(","))
        origin = tuple(float(v) for v in hdr["origin"].split(","))
        spacing = tuple(float(v) for v in hdr["spacing"].split(","))
        comps = int(hdr["components"])
    except ValueError as exc:
        raise FieldFormatError(f"unparseable header value: {exc}") from exc
    if not (len(dims) == len(origin) == len(spacing) == n):
        raise FieldFormatError(f"header dimension mismatch: n={n}, dims={dims}")
    if comps != 1 << n:
        raise FieldFormatError(f"components={comps} inconsistent with n={n}")
    grid = Grid(dims, origin, spacing)
    nodes = grid.size
    body = raw[nl + 1:]
    expected = nodes * comps * 8 + nodes
    if len(body) != expected:
        raise FieldFormatError(f"payload has {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body[: nodes * comps * 8], dtype="<f8").reshape(dims + (comps,)).astype(float)
    mask_raw = np.frombuffer(body[nodes * comps * 8:], dtype=np.uint8)
    if np.any(mask_raw > 1):
        raise FieldFormatError("mask bytes must be 0 or 1")
    return CliffordField(grid, data, mask_raw.reshape(dims).astype(bool))
