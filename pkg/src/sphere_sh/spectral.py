"""Sine-basis spectral space on a rectangle with homogeneous Dirichlet data.

A field is stored as the coefficient matrix ``c[j-1, k-1]`` of the
L2-orthonormal product basis

    phi_jk(x, y) = 2 / sqrt(Lx Ly) * sin(j pi x / Lx) * sin(k pi y / Ly),

which diagonalises the Laplacian, the bilaplacian and hence the operator
``A = Delta^2 - 2 Delta``.  Physical values live on a midpoint grid with
``pad_factor * (J + 1)`` points per axis; on that grid the midpoint rule is
exact for every product of ``2 * pad_factor`` band-limited sine fields, so
powers ``u**(2n-1)`` and the integrals of ``u**(2n)`` are alias free when
``pad_factor >= n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

MAX_PAD_FACTOR = 8


class DimensionError(ValueError):
    """Operands live on different spaces or have the wrong shape."""


@dataclass(frozen=True)
class SpectralSpace:
    modes_x: int = 16
    modes_y: int = 16
    length_x: float = math.pi
    length_y: float = math.pi
    pad_factor: int = 1

    def __post_init__(self):
        if self.modes_x < 1 or self.modes_y < 1:
            raise ValueError("mode counts must be positive")
        if not (self.length_x > 0 and self.length_y > 0):
            raise ValueError("domain lengths must be positive")
        if not 1 <= self.pad_factor <= MAX_PAD_FACTOR:
            raise ValueError(f"pad_factor must lie in [1, {MAX_PAD_FACTOR}]")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.modes_x, self.modes_y)

    @cached_property
    def lam(self) -> np.ndarray:
        """Laplacian eigenvalues lambda_jk (of -Delta)."""
        j = np.arange(1, self.modes_x + 1) / self.length_x
        k = np.arange(1, self.modes_y + 1) / self.length_y
        return np.pi**2 * (j[:, None] ** 2 + k[None, :] ** 2)

    @cached_property
    def mu(self) -> np.ndarray:
        """Eigenvalues of A: lambda**2 + 2*lambda."""
        lam = self.lam
        return lam**2 + 2.0 * lam

    @property
    def mu_max(self) -> float:
        return float(self.mu[-1, -1])

    def grid_shape(self, pad: bool = True) -> tuple[int, int]:
        p = self.pad_factor if pad else 1
        return (p * (self.modes_x + 1), p * (self.modes_y + 1))

    def cell_area(self, pad: bool = True) -> float:
        mx, my = self.grid_shape(pad)
        return (self.length_x / mx) * (self.length_y / my)

    def grid_points(self, pad: bool = True) -> tuple[np.ndarray, np.ndarray]:
        mx, my = self.grid_shape(pad)
        x = (np.arange(mx) + 0.5) * self.length_x / mx
        y = (np.arange(my) + 0.5) * self.length_y / my
        return x, y

    def _sine_matrices(self, pad: bool) -> tuple[np.ndarray, np.ndarray]:
        mx, my = self.grid_shape(pad)
        i = np.arange(mx) + 0.5
        l = np.arange(my) + 0.5
        sx = np.sin(np.pi * np.outer(i, np.arange(1, self.modes_x + 1)) / mx)
        sy = np.sin(np.pi * np.outer(l, np.arange(1, self.modes_y + 1)) / my)
        sx.setflags(write=False)
        sy.setflags(write=False)
        return sx, sy

    @cached_property
    def _padded(self):
        return self._sine_matrices(True)

    @cached_property
    def _unpadded(self):
        return self._sine_matrices(False)

    @property
    def _scale(self) -> float:
        return 2.0 / math.sqrt(self.length_x * self.length_y)

    def zeros(self) -> "SpectralField":
        return SpectralField(self, np.zeros(self.shape))

    def mode(self, j: int, k: int, value: float = 1.0) -> "SpectralField":
        """Single basis function phi_jk scaled by ``value`` (1-based indices)."""
        c = np.zeros(self.shape)
        c[j - 1, k - 1] = value
        return SpectralField(self, c)

    def random(self, rng: np.random.Generator, decay: float = 0.0) -> "SpectralField":
        """Gaussian coefficients damped by ``(1 + lambda)**-decay``."""
        c = rng.standard_normal(self.shape) * (1.0 + self.lam) ** (-decay)
        return SpectralField(self, c)


class SpectralField:
    """Coefficients of a field in the orthonormal sine basis of ``space``."""

    __slots__ = ("space", "coeff")

    def __init__(self, space: SpectralSpace, coeff):
        coeff = np.asarray(coeff, dtype=float)
        if coeff.shape != space.shape:
            raise DimensionError(
                f"coefficient shape {coeff.shape} does not match space {space.shape}")
        self.space = space
        self.coeff = coeff

    def _check(self, other: "SpectralField"):
        if other.space is not self.space and other.space != self.space:
            raise DimensionError("fields live on different spectral spaces")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.space, self.coeff + other.coeff)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.space, self.coeff - other.coeff)

    def __mul__(self, scalar):
        return SpectralField(self.space, self.coeff * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.space, self.coeff / float(scalar))

    def __neg__(self):
        return SpectralField(self.space, -self.coeff)

    def copy(self) -> "SpectralField":
        return SpectralField(self.space, self.coeff.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeff)))

    def __repr__(self):
        return f"SpectralField({self.space.modes_x}x{self.space.modes_y}, |u|={norm_H(self):.6g})"


def inner_H(u: SpectralField, v: SpectralField) -> float:
    u._check(v)
    return float(np.sum(u.coeff * v.coeff))


def norm_H(u: SpectralField) -> float:
    return math.sqrt(float(np.sum(u.coeff**2)))


def apply_A(u: SpectralField) -> SpectralField:
    """A u = Delta^2 u - 2 Delta u, diagonal with eigenvalues mu."""
    return SpectralField(u.space, u.space.mu * u.coeff)


def semigroup_apply(t: float, u: SpectralField) -> SpectralField:
    """S(t) u = exp(-t A) u."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    if t == 0:
        return u.copy()
    return SpectralField(u.space, np.exp(-t * u.space.mu) * u.coeff)


def seminorm_h10(u: SpectralField) -> float:
    """|grad u|_{L2}."""
    return math.sqrt(float(np.sum(u.space.lam * u.coeff**2)))


def seminorm_h20(u: SpectralField) -> float:
    """|Delta u|_{L2}."""
    return math.sqrt(float(np.sum(u.space.lam**2 * u.coeff**2)))


def inner_V(u: SpectralField, v: SpectralField) -> float:
    """<u,v> + <Delta u, Delta v> + 2 <grad u, grad v>, i.e. the form of Delta^2 - 2 Delta + 1."""
    u._check(v)
    return float(np.sum((1.0 + u.space.lam) ** 2 * u.coeff * v.coeff))


def norm_V(u: SpectralField) -> float:
    return math.sqrt(float(np.sum((1.0 + u.space.lam) ** 2 * u.coeff**2)))


def norm_E(u: SpectralField) -> float:
    """Graph norm of D(A): sqrt(|u|^2 + |A u|^2)."""
    return math.sqrt(float(np.sum((1.0 + u.space.mu**2) * u.coeff**2)))


def to_physical(u: SpectralField, pad: bool = True) -> np.ndarray:
    space = u.space
    sx, sy = space._padded if pad else space._unpadded
    return space._scale * (sx @ u.coeff @ sy.T)


def from_physical(values, space: SpectralSpace) -> SpectralField:
    """Inverse of :func:`to_physical`; the grid (padded or not) is read off the shape."""
    values = np.asarray(values, dtype=float)
    if values.shape == space.grid_shape(True):
        pad = True
    elif values.shape == space.grid_shape(False):
        pad = False
    else:
        raise DimensionError(
            f"grid of shape {values.shape} fits neither {space.grid_shape(True)} "
            f"nor {space.grid_shape(False)}")
    sx, sy = space._padded if pad else space._unpadded
    coeff = space._scale * space.cell_area(pad) * (sx.T @ values @ sy)
    return SpectralField(space, coeff)


def _check_alias_free(space: SpectralSpace, n: int):
    if space.pad_factor < n:
        raise ValueError(
            f"pad_factor={space.pad_factor} aliases degree-{2 * n} products; need pad_factor >= {n}")


def pointwise_power(u: SpectralField, q: int) -> SpectralField:
    """Sine coefficients of x -> u(x)**q for odd q."""
    if q < 1 or q % 2 == 0:
        raise ValueError(f"power must be an odd positive integer, got {q}")
    if q == 1:
        return u.copy()
    _check_alias_free(u.space, (q + 1) // 2)
    return from_physical(to_physical(u) ** q, u.space)


def integrate(values, space: SpectralSpace) -> float:
    """Midpoint rule over the domain for a grid array of either size."""
    values = np.asarray(values)
    pad = values.shape == space.grid_shape(True)
    return space.cell_area(pad) * float(np.sum(values))


def norm_L2n(u: SpectralField, n: int) -> float:
    """(int u^{2n})^{1/2n}; for n = 1 this is |u|_H."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return norm_H(u)
    _check_alias_free(u.space, n)
    grid = to_physical(u)
    return integrate(grid ** (2 * n), u.space) ** (1.0 / (2 * n))


def write_checkpoint(u: SpectralField, path) -> None:
    """Header ``J K Lx Ly`` then J*K row-major coefficients, one per line."""
    s = u.space
    lines = [f"{s.modes_x} {s.modes_y} {s.length_x:.17g} {s.length_y:.17g}"]
    lines.extend(f"{c:.17g}" for c in u.coeff.ravel())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(path, pad_factor: int = 1) -> SpectralField:
    with open(path, encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty checkpoint")
    head = rows[0].split()
    if len(head) != 4:
        raise ValueError(f"{path}: header must read 'J K Lx Ly'")
    J, K = int(head[0]), int(head[1])
    space = SpectralSpace(J, K, float(head[2]), float(head[3]), pad_factor)
    values = [float(r) for r in rows[1:]]
    if len(values) != J * K:
        raise DimensionError(f"{path}: expected {J * K} coefficients, found {len(values)}")
    return SpectralField(space, np.array(values).reshape(J, K))
