"""Distance-to-regular-functions scaling on shrinking balls.

For f with D_gamma f = rhs on a ball B, Borel-Pompeiu gives
f - F(tr f) = T(rhs), and F(tr f) is gamma-regular, so
U(lambda) = sup_B |T(rhs)| bounds the distance from f to the regular functions.
The sweep reports U against the ball measure mu and the fitted power law
U ~ (mu^(1/d))^slope, whose slope should be 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import Multivector
from .dirac import DiracConfig, ball_volume
from .grid import Ball, EmptyDomainError, build_grid, constant_field, sample_field
from .integrals import teodorescu


@dataclass(frozen=True)
class AlexanderRow:
    radius: float
    measure: float
    scale: float         # measure ** (1 / d)
    sup_teodorescu: float
    rhs_sup: float

    @property
    def ratio(self) -> float:
        return self.sup_teodorescu / self.rhs_sup if self.rhs_sup > 0 else 0.0


@dataclass(frozen=True)
class AlexanderReport:
    rows: list
    slope: float         # log U against log mu^(1/d); nan when U vanishes
    intercept: float     # U extrapolated linearly in mu^(1/d) to a null set

    @property
    def limit_to_zero(self) -> bool:
        """U shrinks with the ball and extrapolates to zero on a set of measure zero."""
        u = [r.sup_teodorescu for r in sorted(self.rows, key=lambda r: r.radius)]
        monotone = all(a <= b * (1 + 1e-9) + 1e-15 for a, b in zip(u, u[1:]))
        return monotone and abs(self.intercept) <= 0.05 * max(max(u), 1e-300) + 1e-15


def alexander_check(rhs, radii, cfg: DiracConfig, res: int = 48, center=None) -> AlexanderReport:
    """Sweep U(lambda) = sup over ball(center, lambda) of |T(rhs)| at grid nodes.

    ``rhs`` is a :class:`Multivector` (constant right-hand side) or a vectorized
    expression mapping points ``(..., n)`` to coefficients ``(..., 2**n)``.  Each
    ball gets its own ``res**n`` grid scaled with it, so discretization error is
    the same fraction of every ball.
    """
    radii = sorted(float(r) for r in radii)
    if not radii:
        raise EmptyDomainError("empty radius sweep")
    if radii[0] <= 0:
        raise ValueError("radii must be positive")
    n = cfg.n
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    rows = []
    for lam in radii:
        ball = Ball(tuple(center), lam)
        pad = 0.1 * lam
        grid = build_grid(center - lam - pad, center + lam + pad, res)
        if isinstance(rhs, Multivector):
            field = constant_field(rhs, grid, ball)
        else:
            field = sample_field(rhs, grid, ball, vectorized=True)
        inside = ball.mask(grid)
        if not inside.any():
            raise EmptyDomainError(f"no grid nodes inside the ball of radius {lam}")
        vals = teodorescu(field, cfg, grid.nodes()[inside], ball)
        u = float(np.max(np.linalg.norm(vals, axis=1)))
        rhs_sup = float(np.max(np.linalg.norm(field.data[inside], axis=-1)))
        mu = ball_volume(n) * lam**n
        rows.append(AlexanderRow(lam, mu, mu ** (1.0 / n), u, rhs_sup))
    scale = np.array([r.scale for r in rows])
    u = np.array([r.sup_teodorescu for r in rows])
    if len(rows) >= 2 and np.all(u > 0):
        slope = float(np.polyfit(np.log(scale), np.log(u), 1)[0])
    else:
        slope = math.nan
    intercept = float(np.polyfit(scale, u, 1)[1]) if len(rows) >= 2 else float(u[0])
    return AlexanderReport(rows, slope, intercept)
