"""Clifford algebra Cl_n with e_i^2 = -1.

Blades are bitmasks over the generators: bit ``i-1`` set means ``e_i`` is a
factor, so ``0b011`` is ``e_12``.  Multivectors store the ``2**n`` blade
coefficients in increasing mask order.  Array-level helpers (``gp``,
``conj_array``) work on any ``(..., 2**n)`` array and are what the field
modules use; :class:`Multivector` is the immutable scalar-level value type.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_DIM = 8


def _check_dim(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_DIM:
        raise ValueError(f"dimension must be an integer in [1, {MAX_DIM}], got {n!r}")


def grade(mask: int) -> int:
    return bin(mask).count("1")


def blade_sign(a: int, b: int) -> int:
    """Sign of e_a * e_b after reordering to e_{a^b}.

    Every generator of ``b`` has to hop over the generators of ``a`` with a
    larger index; each shared generator squares to -1.
    """
    swaps = 0
    x = a >> 1
    while x:
        swaps += grade(x & b)
        x >>= 1
    swaps += grade(a & b)
    return -1 if swaps & 1 else 1


@dataclass(frozen=True)
class Blade:
    n: int
    mask: int

    def __post_init__(self):
        _check_dim(self.n)
        if not 0 <= self.mask < (1 << self.n):
            raise ValueError(f"mask {self.mask} out of range for n={self.n}")

    @property
    def grade(self) -> int:
        return grade(self.mask)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in range(self.n) if self.mask >> i & 1)

    def __str__(self):
        if self.mask == 0:
            return "e0"
        return "e" + "".join(str(i) for i in self.indices)


def blade_mul(a: Blade, b: Blade) -> tuple[int, Blade]:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    return blade_sign(a.mask, b.mask), Blade(a.n, a.mask ^ b.mask)


@lru_cache(maxsize=None)
def sign_table(n: int) -> np.ndarray:
    """``table[a, b]`` is the sign of ``e_a e_b``; the product blade is ``a ^ b``."""
    _check_dim(n)
    size = 1 << n
    table = np.empty((size, size), dtype=np.int8)
    for a in range(size):
        for b in range(size):
            table[a, b] = blade_sign(a, b)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def conj_signs(n: int) -> np.ndarray:
    """Clifford conjugation (-1)^{k(k+1)/2} per blade of grade k."""
    _check_dim(n)
    k = np.array([grade(m) for m in range(1 << n)])
    signs = np.where((k * (k + 1) // 2) % 2 == 0, 1.0, -1.0)
    signs.setflags(write=False)
    return signs


@lru_cache(maxsize=None)
def grades(n: int) -> np.ndarray:
    out = np.array([grade(m) for m in range(1 << n)])
    out.setflags(write=False)
    return out


def _dim_of(size: int) -> int:
    n = size.bit_length() - 1
    if size != 1 << n:
        raise ValueError(f"coefficient axis of length {size} is not a power of two")
    return n


def gp(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Geometric product of broadcastable coefficient arrays ``(..., 2**n)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]} components")
    size = u.shape[-1]
    table = sign_table(_dim_of(size))
    idx = np.arange(size)
    out = np.zeros(np.broadcast_shapes(u.shape, v.shape))
    for a in range(size):
        # a ^ idx is a permutation, so fancy-index accumulation has no collisions
        out[..., a ^ idx] += table[a] * u[..., a, None] * v
    return out


def conj_array(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u * conj_signs(_dim_of(u.shape[-1]))


def embed_array(x: np.ndarray) -> np.ndarray:
    """Grade-1 coefficient arrays from points ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    _check_dim(n)
    out = np.zeros(x.shape[:-1] + (1 << n,))
    for j in range(n):
        out[..., 1 << j] = x[..., j]
    return out


def left_generator_products(u: np.ndarray) -> np.ndarray:
    """Stack of ``e_j u`` for j = 1..n, shape ``(n, ..., 2**n)``."""
    u = np.asarray(u, dtype=float)
    size = u.shape[-1]
    n = _dim_of(size)
    table = sign_table(n)
    idx = np.arange(size)
    out = np.empty((n,) + u.shape)
    for j in range(n):
        g = 1 << j
        # (e_j u)[g ^ b] = sign(g, b) u[b]
        out[j][..., g ^ idx] = table[g] * u
    return out


def right_generator_products(u: np.ndarray) -> np.ndarray:
    """Stack of ``u e_j`` for j = 1..n, shape ``(n, ..., 2**n)``."""
    u = np.asarray(u, dtype=float)
    size = u.shape[-1]
    n = _dim_of(size)
    table = sign_table(n)
    idx = np.arange(size)
    out = np.empty((n,) + u.shape)
    for j in range(n):
        g = 1 << j
        out[j][..., idx ^ g] = table[:, g] * u
    return out


class Multivector:
    """Immutable element of Cl_n."""

    __slots__ = ("n", "coeffs")

    def __init__(self, n: int, coeffs: Sequence[float] | np.ndarray | None = None):
        _check_dim(n)
        if coeffs is None:
            arr = np.zeros(1 << n)
        else:
            arr = np.array(coeffs, dtype=float)
            if arr.shape != (1 << n,):
                raise ValueError(f"expected {1 << n} coefficients for n={n}, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Multivector is immutable")

    @classmethod
    def scalar(cls, n: int, value: float = 1.0) -> "Multivector":
        c = np.zeros(1 << n)
        c[0] = value
        return cls(n, c)

    @classmethod
    def blade(cls, n: int, mask: int, value: float = 1.0) -> "Multivector":
        b = Blade(n, mask)
        c = np.zeros(1 << n)
        c[b.mask] = value
        return cls(n, c)

    @classmethod
    def generator(cls, n: int, j: int) -> "Multivector":
        if not 1 <= j <= n:
            raise ValueError(f"generator index {j} out of range for n={n}")
        return cls.blade(n, 1 << (j - 1))

    def _other(self, other) -> "Multivector":
        if not isinstance(other, Multivector):
            return NotImplemented
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")
        return other

    def __add__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        return Multivector(self.n, self.coeffs + other.coeffs)

    def __sub__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        return Multivector(self.n, self.coeffs - other.coeffs)

    def __neg__(self):
        return Multivector(self.n, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Multivector(self.n, self.coeffs * other)
        other = self._other(other)
        if other is NotImplemented:
            return other
        return mv_mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Multivector(self.n, self.coeffs * other)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Multivector(self.n, self.coeffs / other)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.n, self.coeffs.tobytes()))

    def __getitem__(self, mask: int) -> float:
        return float(self.coeffs[mask])

    def conj(self) -> "Multivector":
        return mv_conj(self)

    def grade_part(self, k: int) -> "Multivector":
        return Multivector(self.n, np.where(grades(self.n) == k, self.coeffs, 0.0))

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.coeffs, self.coeffs)))

    def __repr__(self):
        terms = [f"{c:+.6g}*{Blade(self.n, m)}" for m, c in enumerate(self.coeffs) if c != 0]
        return f"Multivector(n={self.n}, {' '.join(terms) or '0'})"


def mv_mul(u: Multivector, v: Multivector) -> Multivector:
    if u.n != v.n:
        raise ValueError(f"dimension mismatch: {u.n} vs {v.n}")
    return Multivector(u.n, gp(u.coeffs, v.coeffs))


def mv_conj(u: Multivector) -> Multivector:
    return Multivector(u.n, conj_array(u.coeffs))


def vector_embed(x: Sequence[float]) -> Multivector:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("vector_embed takes a single point")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite coordinates")
    return Multivector(x.size, embed_array(x))


@dataclass(frozen=True)
class GradientPotential:
    """Linear potential Gamma(x) = c . x and its gradient gamma = sum e_j c_j."""

    c: tuple[float, ...]

    def __init__(self, c: Sequence[float]):
        object.__setattr__(self, "c", tuple(float(v) for v in c))
        _check_dim(len(self.c))

    @classmethod
    def zero(cls, n: int) -> "GradientPotential":
        return cls((0.0,) * n)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def is_zero(self) -> bool:
        return not any(self.c)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ np.asarray(self.c)

    @property
    def gamma(self) -> Multivector:
        return vector_embed(self.c)

    def partial(self, j: int) -> float:
        """gamma_j = dGamma/dx_j (1-based)."""
        return self.c[j - 1]
