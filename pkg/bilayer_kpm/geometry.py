"""
Bravais-lattice arithmetic for incommensurate bilayers.

Site enumeration in balls, unit cells, the modulation operator that folds a
point into a unit cell, uniform shift grids, and equidistribution
diagnostics. Lengths are in Angstrom throughout.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .exceptions import CommensurabilityWarning, InsufficientSampleError, InvalidBasisError, InvalidParameterError

logger = logging.getLogger(__name__)

# fractional coordinates this close to an integer are snapped onto it
_SNAP = 1e-10

DISCREPANCY_BINS = 16
MIN_DISCREPANCY_SITES = 100
COMMENSURATE_TOLERANCE = 1e-9
COMMENSURATE_MAX_DENOMINATOR = 1000


def rotation_matrix(degrees: float) -> np.ndarray:
    """Anti-clockwise rotation by ``degrees``."""
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    return np.array([[cos, -sin], [sin, cos]])


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    """
    A 2D Bravais lattice {A n : n in Z^2}.

    The columns of ``matrix`` are the lattice vectors.
    """

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.shape != (2, 2) or not np.all(np.isfinite(matrix)):
            raise InvalidBasisError(f"Lattice basis must be a finite 2x2 matrix, got {matrix!r}")
        det = float(np.linalg.det(matrix))
        if det == 0.0 or abs(det) < 1e-12 * max(1.0, float(np.abs(matrix).max()) ** 2):
            raise InvalidBasisError(f"Lattice basis is singular (det={det})")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        inverse = np.linalg.inv(matrix)
        inverse.setflags(write=False)
        object.__setattr__(self, "_inverse", inverse)

    @classmethod
    def from_vectors(cls, a1, a2) -> LatticeBasis:
        return cls(np.column_stack([np.asarray(a1, dtype=float), np.asarray(a2, dtype=float)]))

    @classmethod
    def hexagonal(cls, a: float = 2.46, rotation_degrees: float = 0.0) -> LatticeBasis:
        """Triangular Bravais lattice of graphene with lattice constant ``a``."""
        base = a * np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]])
        return cls(rotation_matrix(rotation_degrees) @ base)

    @property
    def inverse(self) -> np.ndarray:
        return self._inverse

    @property
    def cell_area(self) -> float:
        return abs(float(np.linalg.det(self.matrix)))

    @property
    def lattice_constant(self) -> float:
        """Length of the first lattice vector."""
        return float(np.linalg.norm(self.matrix[:, 0]))

    def rotated(self, degrees: float) -> LatticeBasis:
        return LatticeBasis(rotation_matrix(degrees) @ self.matrix)

    def to_cartesian(self, frac) -> np.ndarray:
        return np.asarray(frac, dtype=float) @ self.matrix.T

    def to_fractional(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self._inverse.T

    def __repr__(self) -> str:
        return f"LatticeBasis({self.matrix.tolist()})"


@dataclass(frozen=True)
class SitePoint:
    """Lattice site: integer coordinates ``n`` and Cartesian position ``x = A n``."""

    n: tuple[int, int]
    x: tuple[float, float]


@dataclass(frozen=True)
class ShiftVector:
    """Relative shift ``b`` in Cartesian and fractional coordinates of a unit cell."""

    b: tuple[float, float]
    frac: tuple[float, float]

    @classmethod
    def zero(cls) -> ShiftVector:
        return cls((0.0, 0.0), (0.0, 0.0))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.b, dtype=float)


@dataclass(frozen=True, eq=False)
class ShiftGrid:
    """Uniform ``n_disc x n_disc`` sample of a unit cell."""

    basis: LatticeBasis
    n_disc: int
    points: tuple[ShiftVector, ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def lattice_points_in_ball(basis: LatticeBasis, r: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Integer and Cartesian coordinates of all lattice points with |A n| < r.

    Returns arrays ``(n, x)`` of shape ``(k, 2)`` in lexicographic order of n.
    """
    if not r > 0:
        raise InvalidParameterError(f"Ball radius must be positive, got {r}")
    # |n_i| <= ||A^-1||_2 r for every point of the ball
    bound = int(np.ceil(r * np.linalg.norm(basis.inverse, 2))) + 1
    axis = np.arange(-bound, bound + 1)
    n1, n2 = np.meshgrid(axis, axis, indexing="ij")
    n = np.column_stack([n1.ravel(), n2.ravel()])
    x = n @ basis.matrix.T
    inside = np.einsum("ij,ij->i", x, x) < r * r
    return n[inside], x[inside]


def sites_in_ball(basis: LatticeBasis, r: float) -> list[SitePoint]:
    """All lattice sites strictly inside the open ball B_r, lexicographic in n."""
    n, x = lattice_points_in_ball(basis, r)
    return [SitePoint((int(a), int(b)), (float(c), float(d))) for (a, b), (c, d) in zip(n, x)]


def _fold(frac: np.ndarray) -> np.ndarray:
    nearest = np.round(frac)
    frac = np.where(np.abs(frac - nearest) < _SNAP, nearest, frac)
    folded = frac - np.floor(frac)
    # x - floor(x) can round up to exactly 1.0 for tiny negative x
    return np.where(folded >= 1.0, 0.0, folded)


def modulate(basis: LatticeBasis, u) -> ShiftVector:
    """Fold ``u`` into the unit cell of ``basis`` by a lattice translation."""
    frac = _fold(basis.to_fractional(u))
    b = basis.to_cartesian(frac)
    return ShiftVector((float(b[0]), float(b[1])), (float(frac[0]), float(frac[1])))


def modulate_many(basis: LatticeBasis, u: np.ndarray) -> np.ndarray:
    """Fractional coordinates in [0, 1)^2 of many folded points, shape ``(k, 2)``."""
    return _fold(basis.to_fractional(u))


def shift_grid(basis: LatticeBasis, n_disc: int) -> ShiftGrid:
    """Uniform discretization points A (i1, i2) / n_disc of the unit cell."""
    if int(n_disc) != n_disc or n_disc < 1:
        raise InvalidParameterError(f"n_disc must be a positive integer, got {n_disc}")
    n_disc = int(n_disc)
    points = []
    for i1 in range(n_disc):
        for i2 in range(n_disc):
            frac = (i1 / n_disc, i2 / n_disc)
            b = basis.to_cartesian(frac)
            points.append(ShiftVector((float(b[0]), float(b[1])), frac))
    return ShiftGrid(basis=basis, n_disc=n_disc, points=tuple(points))


def is_commensurate_mode(basis_self: LatticeBasis, basis_other: LatticeBasis, m) -> bool:
    """True if every component of m . A_other^-1 A_self is (numerically) rational."""
    phase = np.asarray(m, dtype=float) @ (basis_other.inverse @ basis_self.matrix)
    for value in phase:
        approx = Fraction(float(value)).limit_denominator(COMMENSURATE_MAX_DENOMINATOR)
        if abs(float(approx) - value) > COMMENSURATE_TOLERANCE:
            return False
    return True


def fourier_mode_average(basis_self: LatticeBasis, basis_other: LatticeBasis, m, r: float) -> complex:
    """
    Ball average of exp(2 pi i m . A_other^-1 l) over sites l of ``basis_self``.

    Tends to zero like O(1/r) for incommensurate lattices and m != 0.
    """
    m = np.asarray(m, dtype=int)
    if not np.any(m):
        return 1.0 + 0.0j
    if is_commensurate_mode(basis_self, basis_other, m):
        message = f"Lattices look commensurate for Fourier mode m={m.tolist()}; the average will not decay"
        logger.warning(message)
        warnings.warn(message, CommensurabilityWarning, stacklevel=2)
    _, x = lattice_points_in_ball(basis_self, r)
    phase = 2.0 * np.pi * (basis_other.to_fractional(x) @ m)
    return complex(np.mean(np.exp(1j * phase)))


def bin_discrepancy(frac_points: np.ndarray, bins: int = DISCREPANCY_BINS) -> float:
    """Sup over a ``bins x bins`` grid on [0,1)^2 of |empirical fraction - bin area|."""
    frac_points = np.asarray(frac_points, dtype=float).reshape(-1, 2)
    if len(frac_points) == 0:
        raise InsufficientSampleError("No points to bin")
    counts, _, _ = np.histogram2d(frac_points[:, 0], frac_points[:, 1], bins=bins, range=[[0.0, 1.0], [0.0, 1.0]])
    return float(np.max(np.abs(counts / len(frac_points) - 1.0 / bins**2)))


def equidistribution_discrepancy(basis_self: LatticeBasis, basis_other: LatticeBasis, r: float) -> float:
    """Binned discrepancy of {mod_other(l) : l in R_self, |l| < r} against the uniform measure."""
    _, x = lattice_points_in_ball(basis_self, r)
    if len(x) < MIN_DISCREPANCY_SITES:
        raise InsufficientSampleError(f"Only {len(x)} sites inside r={r}; need at least {MIN_DISCREPANCY_SITES}")
    return bin_discrepancy(modulate_many(basis_other, x))


def write_sites(basis: LatticeBasis, r: float, path: str | Path) -> Path:
    """Dump the sites of B_r as CSV (n1, n2, x, y)."""
    path = Path(path)
    n, x = lattice_points_in_ball(basis, r)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n1", "n2", "x", "y"])
        for (n1, n2), (x1, x2) in zip(n, x):
            writer.writerow([int(n1), int(n2), f"{x1:.17g}", f"{x2:.17g}"])
    logger.info(f"Wrote {len(n)} sites to {path}")
    return path
