"""Cauchy boundary integral, Teodorescu volume transform, and the BVP / NHBVP solvers.

With Psi the calibrated kernel (see :mod:`cliffmoll.dirac`), the operators are

    F(g)(x) = b * sum_elements Psi(x - y) nu(y) g(y) w(y)
    T(h)(x) = sum_nodes Psi(x - y) h(y) dV(y)

where ``b`` is the calibrated orientation sign.  Borel-Pompeiu then reads
f = F(tr f) + T(D_gamma f) inside the domain.

Naming: the volume right-hand side is always ``rhs`` (D_gamma f = rhs) and the
boundary data always ``trace_data`` (tr f = trace_data), whichever letters a
given text uses for them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ._kernels import kernel_sum
from .algebra import Multivector, embed_array, gp, left_generator_products
from .dirac import DiracConfig, apply_dirac, kernel_vectors
from .grid import (Ball, BoundaryMesh, CliffordField, Domain, EmptyDomainError, Grid,
                   boundary_mesh, build_grid, constant_field)
from .norms import central_first


@dataclass(frozen=True)
class BoundaryData:
    mesh: BoundaryMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.m, 1 << self.mesh.n):
            raise ValueError(f"expected values of shape {(self.mesh.m, 1 << self.mesh.n)}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("boundary data must be finite")
        object.__setattr__(self, "values", vals)


def boundary_data(mesh: BoundaryMesh, expr) -> BoundaryData:
    """Sample a vectorized expression (points -> coefficient arrays) at the centroids."""
    vals = np.asarray(expr(mesh.centroids), dtype=float)
    vals = np.broadcast_to(vals, (mesh.m, 1 << mesh.n)).copy()
    return BoundaryData(mesh, vals)


def constant_boundary_data(mesh: BoundaryMesh, value: Multivector) -> BoundaryData:
    return BoundaryData(mesh, np.tile(value.coeffs, (mesh.m, 1)))


def _as_points(x, n) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != n:
        raise ValueError(f"points must have {n} coordinates")
    return pts, single


def _sum(targets, sources, products, cfg, exclude=None):
    if exclude is None:
        exclude = np.full(len(targets), -1, dtype=np.int64)
    return kernel_sum(np.ascontiguousarray(targets, dtype=float), np.ascontiguousarray(sources, dtype=float),
                      np.ascontiguousarray(products, dtype=float), np.asarray(cfg.potential.c, dtype=float),
                      float(cfg.kernel_sign), float(cfg.omega_n), np.asarray(exclude, dtype=np.int64))


def cauchy_integral(bd: BoundaryData, cfg: DiracConfig, x):
    """Boundary integral of Psi(x - y) nu(y) g(y) at interior point(s) ``x``.

    Returns a :class:`Multivector` for a single point, else an array ``(P, 2**n)``.
    """
    mesh = bd.mesh
    pts, single = _as_points(x, mesh.n)
    if np.any(mesh.domain.sdf(pts) >= 0):
        raise ValueError("evaluation points must lie strictly inside the domain")
    nu_g = gp(embed_array(mesh.normals), bd.values) * mesh.weights[:, None]
    products = np.moveaxis(left_generator_products(nu_g), 0, 1)
    out = cfg.boundary_sign * _sum(pts, mesh.centroids, products, cfg)
    return Multivector(mesh.n, out[0]) if single else out


def _subcell_offsets(spacing, samples: int) -> np.ndarray:
    t = (np.arange(samples) + 0.5) / samples - 0.5
    return np.stack(np.meshgrid(*[t * h for h in spacing], indexing="ij"), axis=-1).reshape(-1, len(spacing))


def cut_cells(grid: Grid, domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    """(full, cut) node masks: cells wholly inside the domain and cells straddling its boundary."""
    sdf = domain.sdf(grid.nodes())
    half_diag = 0.5 * math.sqrt(sum(h * h for h in grid.spacing))
    return sdf < -half_diag, np.abs(sdf) <= half_diag


def volume_weights(grid: Grid, domain: Domain | None, mask: np.ndarray, samples: int = 4) -> np.ndarray:
    """Per-node quadrature weights: cell volume times the fraction of the cell inside.

    Without a domain the weights are the plain cell volume on ``mask``.
    Fractions of boundary cells come from ``samples**n`` subcells (see :func:`_subcell_fractions`).
    """
    vol = grid.cell_volume
    if domain is None:
        return np.where(mask, vol, 0.0)
    full, cut = cut_cells(grid, domain)
    w = full.astype(float)
    if cut.any():
        pts = grid.nodes()[cut][:, None, :] + _subcell_offsets(grid.spacing, samples)[None]
        w[cut] = np.mean(_subcell_fractions(domain, pts, np.asarray(grid.spacing) / samples)[0], axis=1)
    return w * vol


@lru_cache(maxsize=None)
def _duffy_rule(n: int, q_face: int, q_t: int):
    """Face-local Gauss-Legendre nodes on [-1/2, 1/2]^(n-1) and radial nodes on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(q_face)
    grids = np.meshgrid(*[x / 2] * (n - 1), indexing="ij")
    face = np.stack(grids, -1).reshape(-1, n - 1)
    fw = np.prod(np.stack(np.meshgrid(*[w / 2] * (n - 1), indexing="ij"), -1).reshape(-1, n - 1), axis=1)
    t, tw = np.polynomial.legendre.leggauss(q_t)
    return face, fw, (t + 1) / 2, tw / 2


def _cell_integral(z_center: np.ndarray, spacing, cfg: DiracConfig, q_face: int = 6, q_t: int = 3) -> np.ndarray:
    """Integral of Psi(x - y) over the cell centred at y0, given offsets z_center = x - y0.

    The cell is split into signed pyramids with apex x over its 2n faces.  In
    pyramid coordinates y = x + t (u - x) the Jacobian t^(n-1) cancels the
    kernel's singularity, so Gauss rules converge whether x lies inside, on the
    edge of, or outside the cell.  A face shared by two cells contributes with
    opposite signs, so with a common rule the sum over a block of cells
    telescopes to its outer faces; near-face targets lose accuracy per cell but
    not in such sums.
    """
    apex = np.atleast_2d(np.asarray(z_center, dtype=float))  # target relative to the cell centre
    n = apex.shape[1]
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), apex.shape)
    face, fw, t, tw = _duffy_rule(n, q_face, q_t)
    c = np.asarray(cfg.potential.c, dtype=float)
    out = np.zeros(apex.shape)
    for axis in range(n):
        others = [j for j in range(n) if j != axis]
        area = np.prod(spacing[:, others], axis=1)
        for side in (-0.5, 0.5):
            u = np.empty((len(apex), len(face), n))
            u[..., axis] = side * spacing[:, axis, None]
            u[..., others] = face[None] * spacing[:, None, others]
            d = u - apex[:, None, :]  # (P, F, n)
            height = np.sign(side) * d[..., axis]
            r = np.linalg.norm(d, axis=-1)
            ok = np.abs(height) > 1e-14 * spacing[:, axis, None]
            base = np.where(ok, height / np.where(ok, r, 1.0) ** n, 0.0) / cfg.omega_n
            # Psi at z = -t d, times t^(n-1): d / |d|^n * exp(-s t c.d)
            cd = d @ c
            radial = np.exp(-cfg.kernel_sign * t[None, None, :] * cd[..., None]) @ tw
            out += np.einsum("pfj,pf,f->pj", d, base * radial, fw) * area[:, None]
    return out


def _near_correction(pts, src, widths, vals, exclude, cfg, radius: float):
    """Swap the midpoint rule for exact cell quadrature on sources near each target.

    Within a couple of cells of x the kernel varies on the cell scale and the
    midpoint error is first order; deep inside it cancels by symmetry, but not
    next to the boundary.  ``exclude[p]`` is the source dropped from the main
    sum for target p (its midpoint term is not subtracted).
    """
    out = np.zeros((len(pts), vals.shape[1]))
    if len(src) == 0 or len(pts) == 0:
        return out
    near = cKDTree(src).query_ball_point(pts, radius)
    t = np.repeat(np.arange(len(pts)), [len(v) for v in near])
    if len(t) == 0:
        return out
    q = np.concatenate([np.asarray(v, dtype=np.int64) for v in near])
    for start in range(0, len(t), 65536):
        tt, qq = t[start:start + 65536], q[start:start + 65536]
        z = pts[tt] - src[qq]
        vol = np.prod(widths[qq], axis=1)
        exact = _cell_integral(z, widths[qq], cfg)
        mid = np.zeros_like(z)
        keep = (np.sum(z * z, axis=1) > 0) & (qq != exclude[tt])
        mid[keep] = kernel_vectors(z[keep], cfg) * vol[keep, None]
        contrib = gp(embed_array(exact - mid), vals[qq] / vol[:, None])
        np.add.at(out, tt, contrib)
    return out


def _clip_square(normal: np.ndarray, sdf: np.ndarray, half: np.ndarray):
    """Area fraction and centroid of the rectangle |p_j| <= half_j cut to {normal . p <= -sdf}.

    Exact polygon clipping (one half-plane, at most five vertices), vectorized.
    """
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float) * half
    shape = sdf.shape
    nu = normal.reshape(-1, 2)
    off = sdf.reshape(-1)
    m = len(off)
    f = corners @ nu.T + off            # (4, m); inside where <= 0
    verts = np.zeros((m, 8, 2))
    valid = np.zeros((m, 8), bool)
    for i in range(4):
        j = (i + 1) % 4
        fi, fj = f[i], f[j]
        keep = fi <= 0
        verts[keep, 2 * i] = corners[i]
        valid[keep, 2 * i] = True
        cross = (fi <= 0) != (fj <= 0)
        tpar = np.where(cross, fi / np.where(cross, fi - fj, 1.0), 0.0)
        verts[cross, 2 * i + 1] = corners[i] + (corners[j] - corners[i]) * tpar[cross, None]
        valid[cross, 2 * i + 1] = True
    order = np.argsort(~valid, axis=1, kind="stable")
    verts = np.take_along_axis(verts, order[..., None], axis=1)
    count = valid.sum(axis=1)
    k = np.arange(8)[None]
    nxt = np.where(k + 1 < count[:, None], k + 1, 0)
    vn = np.take_along_axis(verts, nxt[..., None], axis=1)
    use = k < count[:, None]
    cr = np.where(use, verts[..., 0] * vn[..., 1] - vn[..., 0] * verts[..., 1], 0.0)
    area = 0.5 * cr.sum(axis=1)
    safe = np.where(area > 0, area, 1.0)
    cx = np.sum((verts[..., 0] + vn[..., 0]) * cr, axis=1) / (6 * safe)
    cy = np.sum((verts[..., 1] + vn[..., 1]) * cr, axis=1) / (6 * safe)
    frac = np.clip(area / (4 * half[0] * half[1]), 0.0, 1.0)
    cen = np.where(area[:, None] > 0, np.stack([cx, cy], -1), 0.0)
    return frac.reshape(shape), cen.reshape(shape + (2,))


def _subcell_fractions(domain: Domain, pts: np.ndarray, widths: np.ndarray):
    """Inside fraction and inside-part centroid shift of small boxes centred at ``pts``.

    The boundary is replaced by its tangent plane at the box (from the signed
    distance and its gradient).  In the plane the box is clipped exactly; in
    higher dimensions it is treated as a slab across the normal, with the
    fraction linear in the signed distance over the box's extent and the inside
    centroid (1 - fraction) * extent / 2 inward of the centre.  Either way the
    mass sits where it belongs, which removes the first-order dipole error of a
    centre-point rule along the boundary.
    """
    sdf = domain.sdf(pts)
    step = 1e-6 * float(widths.max())
    grad = np.stack([(domain.sdf(pts + step * e) - domain.sdf(pts - step * e)) / (2 * step)
                     for e in np.eye(pts.shape[-1])], axis=-1)
    norm = np.linalg.norm(grad, axis=-1, keepdims=True)
    normal = grad / np.where(norm > 0, norm, 1.0)
    if pts.shape[-1] == 2:
        return _clip_square(normal, sdf, np.asarray(widths, dtype=float) / 2)
    extent = np.abs(normal) @ widths
    frac = np.clip(0.5 - sdf / np.where(extent > 0, extent, 1.0), 0.0, 1.0)
    shift = -normal * ((1.0 - frac) * extent / 2)[..., None]
    return frac, shift


@dataclass
class VolumeSources:
    """Quadrature of a grid field over a domain.

    Cells wholly inside contribute their node (``full``).  Cells straddling the
    boundary are split into ``samples**n`` subcells carrying inside fractions
    and values by a first-order Taylor step from the node.  For distant targets
    the subcells of a cut cell are lumped into a few blocks, each a point mass
    at its inside centroid.
    """
    full: np.ndarray          # node mask of full cells
    n_full: int
    points: np.ndarray        # (Q, n): full nodes, then nonempty cut-cell blocks
    values: np.ndarray        # (Q, C), quadrature weight included
    sub_points: np.ndarray    # (K, S, n) subcell centroids of the K cut cells
    sub_values: np.ndarray    # (K, S, C), weight included; zero outside
    sub_width: np.ndarray     # (n,)
    block_points: np.ndarray  # (K, B, n)
    block_values: np.ndarray  # (K, B, C)


def _block_ids(n: int, samples: int, blocks: int) -> np.ndarray:
    per = samples // blocks
    ij = np.stack(np.meshgrid(*[np.arange(samples)] * n, indexing="ij"), -1).reshape(-1, n)
    return np.ravel_multi_index(tuple((ij // per).T), (blocks,) * n)


def volume_sources(rhs: CliffordField, domain: Domain | None, samples: int | None = None) -> VolumeSources:
    grid = rhs.grid
    n, C = grid.n, 1 << grid.n
    samples = samples or (16 if n <= 2 else 4)
    blocks = 4 if samples % 4 == 0 and n <= 2 else (2 if samples % 2 == 0 else 1)
    nb = blocks**n
    nodes = grid.nodes()
    finite = np.all(np.isfinite(rhs.data), axis=-1)
    if np.any(rhs.mask & ~finite):
        raise ValueError("rhs is undefined on part of its mask")
    if domain is None:
        full, cut = rhs.mask.copy(), np.zeros(grid.dims, bool)
    else:
        full, cut = cut_cells(grid, domain)
        full &= finite
        cut &= finite
    vol = grid.cell_volume
    spacing = np.asarray(grid.spacing, dtype=float)
    width = spacing / samples
    offs = _subcell_offsets(spacing, samples)
    sub_pts = nodes[cut][:, None, :] + offs[None]
    sub_vals = np.zeros(sub_pts.shape[:2] + (C,))
    blk_pts = np.zeros((len(sub_pts), nb, n))
    blk_vals = np.zeros((len(sub_pts), nb, C))
    if len(sub_pts):
        frac, shift = _subcell_fractions(domain, sub_pts, width)
        sub_pts = sub_pts + shift
        step = sub_pts - nodes[cut][:, None, :]
        base = np.repeat(rhs.data[cut][:, None, :], len(offs), axis=1)
        for j in range(n):
            dj = central_first(rhs.data, spacing[j], j)[cut]
            ok = np.all(np.isfinite(dj), axis=1)
            base[ok] += dj[ok][:, None, :] * step[ok][:, :, j, None]
        sub_vals = base * (frac * vol / len(offs))[..., None]
        keep = frac.sum(axis=1) > 0
        sub_pts, sub_vals, frac = sub_pts[keep], sub_vals[keep], frac[keep]
        # lump subcells into blocks: mass-weighted centroid, summed values
        onehot = np.eye(nb)[_block_ids(n, samples, blocks)]            # (S, B)
        mass = frac @ onehot                                             # (K, B)
        moment = np.einsum("ks,sb,ksj->kbj", frac, onehot, sub_pts)
        blk_pts = np.where(mass[..., None] > 0, moment / np.where(mass > 0, mass, 1.0)[..., None], 0.0)
        blk_vals = np.einsum("sb,ksc->kbc", onehot, sub_vals)
        blk_vals[mass == 0] = 0.0
    live = np.any(blk_vals != 0, axis=-1)
    n_full = int(full.sum())
    return VolumeSources(full, n_full, np.concatenate([nodes[full], blk_pts[live]]),
                         np.concatenate([rhs.data[full] * vol, blk_vals[live]]),
                         sub_pts, sub_vals, width, blk_pts, blk_vals)


def _taper(r: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """1 up to ``inner``, 0 from ``outer``, cosine in between."""
    t = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def _cut_correction(pts, vs: VolumeSources, cfg, radius: float, exact_radius: float):
    """Replace nearby cut cells' lumped blocks by their full subcell quadrature.

    The swap is tapered from full strength at radius/2 to none at ``radius`` so
    the result varies smoothly with the target; a hard cutoff would leave jumps
    that difference operators amplify.  Subcells within ``exact_radius`` of the
    target are integrated exactly over their box; the rest use their centroid.
    """
    C = vs.values.shape[1]
    out = np.zeros((len(pts), C))
    if len(vs.sub_points) == 0 or len(pts) == 0:
        return out
    anchor = vs.sub_points.mean(axis=1)
    near = cKDTree(anchor).query_ball_point(pts, radius)
    t = np.repeat(np.arange(len(pts)), [len(v) for v in near])
    if len(t) == 0:
        return out
    q = np.concatenate([np.asarray(v, dtype=np.int64) for v in near])
    prods = np.moveaxis(left_generator_products(vs.sub_values), 0, 2)        # (K, S, n, C)
    blk_prods = np.moveaxis(left_generator_products(vs.block_values), 0, 2)  # (K, B, n, C)
    vol = float(np.prod(vs.sub_width))
    has = np.any(vs.sub_values != 0, axis=-1)
    blk_has = np.any(vs.block_values != 0, axis=-1)
    chunk = max(1, 2_000_000 // vs.sub_points.shape[1])
    for start in range(0, len(t), chunk):
        tt, qq = t[start:start + chunk], q[start:start + chunk]
        x = pts[tt]
        z = x[:, None, :] - vs.sub_points[qq]                     # (P, S, n)
        r2 = np.sum(z * z, axis=-1)
        live = has[qq]
        psi = np.zeros_like(z)
        far = live & (r2 >= exact_radius**2)
        psi[far] = kernel_vectors(z[far], cfg)
        close = live & ~far
        if close.any():
            psi[close] = _cell_integral(z[close], vs.sub_width, cfg) / vol
        contrib = np.einsum("bsj,bsjc->bc", psi, prods[qq])
        zb = x[:, None, :] - vs.block_points[qq]
        blive = blk_has[qq] & (np.sum(zb * zb, axis=-1) > 0)
        psib = np.zeros_like(zb)
        psib[blive] = kernel_vectors(zb[blive], cfg)
        contrib -= np.einsum("bsj,bsjc->bc", psib, blk_prods[qq])
        contrib *= _taper(np.linalg.norm(x - anchor[qq], axis=1), radius / 2, radius)[:, None]
        np.add.at(out, tt, contrib)
    return out


def _midpoint_defect_table(spacing: tuple, cfg: DiracConfig, reach: int) -> np.ndarray:
    """E[k] = (cell integral of Psi at offset k h) / cell volume - Psi(k h), with E[0] the full self-cell term.

    Shape ``(2 reach + 1,)*n + (n,)``; the vector coefficients of the grade-one
    kernel.  Adding sum_k E[k] v(x - k h) to the midpoint sum makes it exact
    cell by cell inside the window; the leftover decays like h^(n+4)/|z|^(n+3).
    """
    return _defect_table(tuple(float(h) for h in spacing), cfg.potential.c, cfg.kernel_sign,
                         float(cfg.omega_n), cfg.boundary_sign, reach)


@lru_cache(maxsize=32)
def _defect_table(spacing, c, sign, omega, bsign, reach):
    from .algebra import GradientPotential

    cfg = DiracConfig(GradientPotential(c), sign, omega, bsign)
    n = len(spacing)
    h = np.asarray(spacing)
    k = np.stack(np.meshgrid(*[np.arange(-reach, reach + 1)] * n, indexing="ij"), -1).reshape(-1, n)
    z = k * h
    exact = _cell_integral(z, h, cfg, q_face=20, q_t=6) / float(np.prod(h))
    mid = np.zeros_like(z)
    away = np.any(k != 0, axis=1)
    mid[away] = kernel_vectors(z[away], cfg)
    return (exact - mid).reshape((2 * reach + 1,) * n + (n,))


def _lattice_correction(values: np.ndarray, table: np.ndarray) -> np.ndarray:
    """sum_k E[k] v(i - k) on the grid, as one convolution per generator and blade."""
    n = table.shape[-1]
    out = np.zeros_like(values)
    prods = left_generator_products(values)
    for j in range(n):
        for cc in range(values.shape[-1]):
            if np.any(prods[j][..., cc]):
                out[..., cc] += ndimage.convolve(prods[j][..., cc], table[..., j], mode="constant")
    return out


DEFECT_REACH = {1: 24, 2: 12, 3: 4}
CUT_REACH = 6.0


def _reaches(grid: Grid) -> tuple[int, float]:
    """Lattice-defect window (cells) and cut-cell swap radius for a grid.

    Both truncations leave tails that scale like a power of h / reach.  Growing
    the reach like sqrt(h * extent) keeps those tails of order h^2 or better
    while the cost grows only like 1 / h.
    """
    extent = float(np.max(grid.hi() - np.asarray(grid.origin)))
    grow = math.sqrt(grid.h * extent)
    base = DEFECT_REACH.get(grid.n, 4)
    lattice = base if grid.n > 2 else max(base, int(math.ceil(1.5 * grow / grid.h)))
    return lattice, max(CUT_REACH * grid.h, grow)


def teodorescu(rhs: CliffordField, cfg: DiracConfig, x, domain: Domain | None = None,
               samples: int | None = None):
    """Volume integral of Psi(x - y) rhs(y) over the domain.

    Without ``domain`` the masked nodes of ``rhs`` are summed with the plain cell
    volume.  With it, cells straddling the boundary are resolved by
    ``samples**n`` subcells (see :class:`VolumeSources`).  Interior cells use
    the midpoint rule plus a tabulated per-cell defect correction for targets on
    grid nodes; other targets get exact cell quadrature within about two cells.
    """
    grid = rhs.grid
    pts, single = _as_points(x, grid.n)
    if domain is not None and np.any(domain.sdf(pts) >= 0):
        raise ValueError("evaluation points must lie inside the domain")
    vs = volume_sources(rhs, domain, samples)
    if len(vs.points) == 0:
        return Multivector(grid.n) if single else np.zeros((len(pts), 1 << grid.n))
    products = np.moveaxis(left_generator_products(vs.values), 0, 1)

    # full cell containing each target -> its index among the sources
    spacing = np.asarray(grid.spacing)
    idx = np.rint((pts - np.asarray(grid.origin)) / spacing).astype(np.int64)
    in_grid = np.all((idx >= 0) & (idx < np.asarray(grid.dims)), axis=1)
    source_of = -np.ones(grid.dims, dtype=np.int64)
    source_of[vs.full] = np.arange(vs.n_full)
    exclude = np.full(len(pts), -1, dtype=np.int64)
    exclude[in_grid] = source_of[tuple(idx[in_grid].T)]
    off = np.max(np.abs(pts - (np.asarray(grid.origin) + idx * spacing)) / spacing, axis=1)
    on_node = in_grid & (off < 1e-9)

    out = _sum(pts, vs.points, products, cfg, exclude)
    # 1.9h sits strictly between lattice distances, so node neighbourhoods stay symmetric
    radius = 1.9 * grid.h
    lattice_reach, cut_reach = _reaches(grid)
    out += _cut_correction(pts, vs, cfg, cut_reach, radius)
    if on_node.any():
        table = _midpoint_defect_table(grid.spacing, cfg, lattice_reach)
        v = np.zeros(grid.dims + (vs.values.shape[1],))
        v[vs.full] = vs.values[:vs.n_full] / grid.cell_volume
        corr = _lattice_correction(v, table) * grid.cell_volume
        out[on_node] += corr[tuple(idx[on_node].T)]
    if (~on_node).any():
        fs = slice(0, vs.n_full)
        widths = np.broadcast_to(spacing, (vs.n_full, grid.n))
        out[~on_node] += _near_correction(pts[~on_node], vs.points[fs], widths, vs.values[fs],
                                          exclude[~on_node], cfg, radius)
    return Multivector(grid.n, out[0]) if single else out


def trace_from_field(f: CliffordField, mesh: BoundaryMesh) -> BoundaryData:
    """Nearest-node value plus a central-difference linear correction at each centroid."""
    grid = f.grid
    pts = mesh.centroids
    idx = np.rint((pts - np.asarray(grid.origin)) / np.asarray(grid.spacing)).astype(np.int64)
    idx = np.clip(idx, 0, np.asarray(grid.dims) - 1)
    base = f.data[tuple(idx.T)]
    delta = pts - grid.nodes()[tuple(idx.T)]
    vals = base.copy()
    for j in range(grid.n):
        dj = central_first(f.data, grid.spacing[j], j)[tuple(idx.T)]
        ok = np.all(np.isfinite(dj), axis=1)
        vals[ok] += dj[ok] * delta[ok, j:j + 1]
    if not np.all(np.isfinite(vals)):
        raise ValueError("field undefined near the boundary; cannot take its trace")
    return BoundaryData(mesh, vals)


def interior_nodes(grid: Grid, domain: Domain, margin: float) -> np.ndarray:
    return domain.sdf(grid.nodes()) < -margin


def default_margin(mesh: BoundaryMesh) -> float:
    """Two element diameters, keeping targets clear of the near-singular boundary layer."""
    return 2.0 * mesh.diameter()


def borel_pompeiu_residual(f: CliffordField, cfg: DiracConfig, domain: Domain, mesh: BoundaryMesh,
                           margin: float | None = None):
    """Pointwise |f - F(tr f) - T(D_gamma f)| on inside nodes farther than ``margin`` from the boundary.

    Returns ``(residual, mask)``; ``residual`` is NaN off the mask.
    """
    margin = default_margin(mesh) if margin is None else margin
    grid = f.grid
    full = CliffordField(grid, f.data, np.ones(grid.dims, bool))
    df = apply_dirac(full, cfg)
    inner = interior_nodes(grid, domain, margin) & f.mask
    if not inner.any():
        raise EmptyDomainError("no nodes inside the margin")
    pts = grid.nodes()[inner]
    rhs = CliffordField(grid, df.data, df.mask & domain.mask(grid))
    recon = cauchy_integral(trace_from_field(f, mesh), cfg, pts) + teodorescu(rhs, cfg, pts, domain)
    res = np.full(grid.dims, np.nan)
    res[inner] = np.linalg.norm(f.data[inner] - recon, axis=-1)
    return res, inner


@dataclass
class SolveReport:
    residual_max: float
    residual_l2: float
    trace_gap: float
    margin: float
    elements: int
    grid_dims: tuple
    nodes: int

    def as_row(self) -> dict:
        row = asdict(self)
        row["grid_dims"] = "x".join(str(d) for d in self.grid_dims)
        return row


def _trace_gap(bd: BoundaryData, cfg: DiracConfig, rhs, domain, pull: float) -> float:
    """Largest |f(y - pull nu) - g(y)| over the mesh: how closely the solution approaches its data."""
    pts = bd.mesh.centroids - pull * bd.mesh.normals
    vals = cauchy_integral(bd, cfg, pts)
    if rhs is not None:
        vals = vals + teodorescu(rhs, cfg, pts, domain)
    return float(np.max(np.linalg.norm(vals - bd.values, axis=1)))


def solve_bvp(trace_data: BoundaryData, cfg: DiracConfig, grid: Grid, margin: float | None = None):
    """D_gamma f = 0 in the domain, tr f = trace_data: f = F(trace_data) at interior nodes."""
    return _solve(trace_data, None, cfg, grid, margin)


def solve_nhbvp(rhs: CliffordField, trace_data: BoundaryData, cfg: DiracConfig, grid: Grid | None = None,
                margin: float | None = None):
    """D_gamma f = rhs in the domain, tr f = trace_data: f = F(trace_data) + T(rhs)."""
    grid = rhs.grid if grid is None else grid
    if grid != rhs.grid:
        raise ValueError("rhs lives on a different grid")
    return _solve(trace_data, rhs, cfg, grid, margin)


def _solve(bd, rhs, cfg, grid, margin):
    mesh = bd.mesh
    domain = mesh.domain
    if cfg.n != grid.n or mesh.n != grid.n:
        raise ValueError("dimension mismatch between config, mesh and grid")
    margin = default_margin(mesh) if margin is None else margin
    if mesh.diameter() > 4 * grid.h or grid.h > 4 * max(mesh.diameter(), 1e-300):
        raise ValueError(f"mesh (element {mesh.diameter():.3g}) and grid (h {grid.h:.3g}) do not resolve each other")
    inner = interior_nodes(grid, domain, margin)
    if not inner.any():
        raise EmptyDomainError("no grid nodes farther than the margin from the boundary")
    pts = grid.nodes()[inner]
    vals = cauchy_integral(bd, cfg, pts)
    if rhs is not None and np.any(rhs.data[rhs.mask]):
        vals = vals + teodorescu(rhs, cfg, pts, domain)
    data = np.full(grid.dims + (1 << grid.n,), np.nan)
    data[inner] = vals
    sol = CliffordField(grid, data, inner)
    d = apply_dirac(sol, cfg)
    resid = d.data
    if rhs is not None:
        resid = resid - rhs.data
    sel = d.mask
    mags = np.linalg.norm(resid[sel], axis=-1)
    report = SolveReport(
        residual_max=float(mags.max()),
        residual_l2=math.sqrt(float(np.sum(mags**2)) * grid.cell_volume),
        trace_gap=_trace_gap(bd, cfg, rhs, domain, margin),
        margin=margin,
        elements=mesh.m,
        grid_dims=grid.dims,
        nodes=int(inner.sum()),
    )
    return sol, report


def constant_reconstruction_error(cfg: DiracConfig, m: int | None = None, res: int | None = None) -> float:
    """Borel-Pompeiu defect for f = e_0 on the unit ball at a few interior points.

    D_gamma e_0 = -gamma, so the volume term only matters for nonzero potentials.
    """
    n = cfg.n
    ball = Ball(tuple([0.0] * n), 1.0)
    m = m or (256 if n == 2 else 1200)
    res = res or (48 if n == 2 else 20)
    mesh = boundary_mesh(ball, m)
    one = Multivector.scalar(n)
    bd = BoundaryData(mesh, np.tile(one.coeffs, (mesh.m, 1)))
    pts = np.zeros((3, n))
    pts[1, 0] = 0.3
    pts[2, -1] = -0.25
    recon = cauchy_integral(bd, cfg, pts)
    if not cfg.potential.is_zero:
        grid = build_grid([-1.1] * n, [1.1] * n, res)
        rhs = constant_field(-cfg.potential.gamma, grid, ball)
        recon = recon + teodorescu(rhs, cfg, pts, ball)
    return float(np.max(np.linalg.norm(recon - one.coeffs, axis=1)))
