"""Compiled direct sum shared by the boundary and volume integral operators."""
from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, fastmath=True)
def kernel_sum(targets, sources, src_products, c, sign, omega, exclude):
    """out[p] = sum_q Psi(targets[p] - sources[q]) * value_q.

    ``src_products[q, j]`` holds e_j * value_q (weight already applied), so the
    product with the grade-one kernel is a plain contraction.  Source
    ``exclude[p]`` is skipped for target p (-1 skips nothing).  The target loop
    is innermost so it vectorizes.
    """
    P, n = targets.shape
    Q = sources.shape[0]
    C = src_products.shape[2]
    tt = np.ascontiguousarray(targets.T)
    out = np.zeros((C, P))
    has_potential = False
    for j in range(n):
        if c[j] != 0.0:
            has_potential = True
    inv_omega = 1.0 / omega
    kz = np.empty((n, P))
    for q in range(Q):
        for p in range(P):
            r2 = 0.0
            gam = 0.0
            for j in range(n):
                d = tt[j, p] - sources[q, j]
                kz[j, p] = d
                r2 += d * d
                gam += c[j] * d
            s = 0.0
            if r2 > 0.0 and exclude[p] != q:
                if n == 2:
                    s = inv_omega / r2
                elif n == 3:
                    s = inv_omega / (r2 * math.sqrt(r2))
                else:
                    s = inv_omega / r2 ** (0.5 * n)
                if has_potential:
                    s *= math.exp(sign * gam)
            # conj(z) = -z for vectors
            for j in range(n):
                kz[j, p] *= -s
        for j in range(n):
            for cc in range(C):
                w = src_products[q, j, cc]
                if w != 0.0:
                    for p in range(P):
                        out[cc, p] += kz[j, p] * w
    return out.T.copy()
