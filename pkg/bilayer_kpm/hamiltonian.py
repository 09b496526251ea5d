"""
Finite-cluster shifted Hamiltonians H_{r,j}(b).

The cluster is Omega_r = [R_1 cap B_r] x A_1  u  [R_2 cap B_r] x A_2. Sheet
P_j (the sheet opposite to j) is translated by the relative shift b, and the
matrix is stored as a scipy CSR matrix with machine-exact Hermiticity.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .exceptions import DimensionMismatchError, InvalidParameterError, MissingDofError, ModelInconsistencyError, SizeLimitError
from .geometry import ShiftVector, SitePoint, lattice_points_in_ball, modulate
from .model import SpectralWindow, TBModel, spectral_bound

logger = logging.getLogger(__name__)

DROP_TOLERANCE = 1e-14
HERMITICITY_TOLERANCE = 1e-10
DENSE_LIMIT = 4000


@dataclass(frozen=True)
class DofIndex:
    site: SitePoint
    orbital: str
    sheet: int
    flat: int


@dataclass(frozen=True, eq=False)
class DofTable:
    """
    Column-oriented index of the cluster degrees of freedom.

    Ordering is sheet 1 sites (lexicographic in n) x orbitals, then sheet 2.
    """

    sheet: np.ndarray
    n: np.ndarray
    x: np.ndarray
    orbital: np.ndarray
    center: dict[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.sheet)

    def __getitem__(self, flat: int) -> DofIndex:
        n = self.n[flat]
        x = self.x[flat]
        site = SitePoint((int(n[0]), int(n[1])), (float(x[0]), float(x[1])))
        return DofIndex(site, str(self.orbital[flat]), int(self.sheet[flat]), int(flat))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def center_index(self, orbital_id: str) -> int:
        try:
            return self.center[orbital_id]
        except KeyError:
            raise MissingDofError(f"No center degree of freedom for orbital {orbital_id!r}; available: {sorted(self.center)}") from None


@dataclass(frozen=True, eq=False)
class ClusterHamiltonian:
    matrix: sp.csr_matrix
    dofs: DofTable
    r: float
    j: int
    b: ShiftVector
    window: SpectralWindow

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def center_index(self, orbital_id: str) -> int:
        return self.dofs.center_index(orbital_id)


def _fold_shift(model: TBModel, j: int, b, fold: bool) -> ShiftVector:
    basis = model.lattice(model.opposite(j))
    if not fold:
        if isinstance(b, ShiftVector):
            return b
        b = np.asarray(b, dtype=float)
        frac = basis.to_fractional(b)
        return ShiftVector((float(b[0]), float(b[1])), (float(frac[0]), float(frac[1])))
    if isinstance(b, ShiftVector):
        if all(0.0 <= f < 1.0 for f in b.frac):
            return b
        b = b.b
    return modulate(basis, b)


def _pairs_within(rows: cKDTree, cols: cKDTree, radius: float) -> tuple[np.ndarray, np.ndarray]:
    neighbors = rows.query_ball_tree(cols, radius)
    counts = np.fromiter((len(k) for k in neighbors), dtype=np.intp, count=len(neighbors))
    row = np.repeat(np.arange(len(neighbors), dtype=np.intp), counts)
    col = np.fromiter(itertools.chain.from_iterable(neighbors), dtype=np.intp, count=int(counts.sum()))
    return row, col


def assemble(model: TBModel, r: float, j: int, b, window: SpectralWindow | None = None, fold: bool = True) -> ClusterHamiltonian:
    """
    Assemble H_{r,j}(b).

    Entry (R alpha, R' alpha') is h_{alpha alpha'} evaluated at the displacement
    (R + tau_alpha) - (R' + tau_alpha') with b added to the sheet-P_j
    coordinates. Ball membership is decided by the lattice point R alone.
    Shifts outside Gamma_{P_j} are folded back unless ``fold`` is False.
    """
    if not r > 0:
        raise InvalidParameterError(f"Cluster radius must be positive, got {r}")
    if j not in (1, 2):
        raise InvalidParameterError(f"j must be 1 or 2, got {j}")
    shift = _fold_shift(model, j, b, fold)
    shifted_sheet = model.opposite(j)
    if window is None:
        window = spectral_bound(model)

    blocks = []
    sheet_col, n_col, x_col, orbital_col = [], [], [], []
    center = {}
    offset = 0
    for sheet in (1, 2):
        orbitals = model.orbitals(sheet)
        if not len(orbitals):
            continue
        n, x = lattice_points_in_ball(model.lattice(sheet), r)
        k = len(n)
        origin = int(np.flatnonzero(~n.any(axis=1))[0]) if k else -1
        translation = shift.array if sheet == shifted_sheet else np.zeros(2)
        for index, orbital in enumerate(orbitals):
            flat = offset + np.arange(k) * len(orbitals) + index
            position = x + np.asarray(orbital.tau, dtype=float) + translation
            blocks.append((orbital.orbital_id, flat, position))
            if sheet == j and origin >= 0:
                center[orbital.orbital_id] = offset + origin * len(orbitals) + index
        sheet_col.append(np.full(k * len(orbitals), sheet))
        n_col.append(np.repeat(n, len(orbitals), axis=0))
        x_col.append(np.repeat(x, len(orbitals), axis=0))
        orbital_col.append(np.tile(np.array(orbitals.ids, dtype=object), k))
        offset += k * len(orbitals)

    dim = offset
    if dim == 0:
        raise InvalidParameterError(f"Cluster of radius {r} contains no degrees of freedom")

    cutoff = model.hopping.cutoff_radius
    trees = [cKDTree(position) for _, _, position in blocks]
    rows, cols, values = [], [], []
    for (alpha, flat, position), tree in zip(blocks, trees):
        for (alpha_prime, flat_prime, position_prime), tree_prime in zip(blocks, trees):
            row, col = _pairs_within(tree, tree_prime, cutoff * (1.0 + 1e-9))
            if not len(row):
                continue
            value = model.hopping(alpha, alpha_prime, position[row] - position_prime[col])
            keep = np.abs(value) >= DROP_TOLERANCE
            rows.append(flat[row[keep]])
            cols.append(flat_prime[col[keep]])
            values.append(value[keep])

    if values:
        data = np.concatenate(values)
        matrix = sp.coo_matrix((data, (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)).tocsr()
    else:
        matrix = sp.csr_matrix((dim, dim))

    adjoint = matrix.conj().T.tocsr()
    difference = matrix - adjoint
    residual = float(abs(difference).max()) if difference.nnz else 0.0
    if residual > HERMITICITY_TOLERANCE:
        raise ModelInconsistencyError(f"Cluster Hamiltonian is not Hermitian: max |H - H^dagger| = {residual:.3g}")
    matrix = ((matrix + adjoint) * 0.5).tocsr()
    matrix.sort_indices()

    dofs = DofTable(
        sheet=np.concatenate(sheet_col),
        n=np.concatenate(n_col),
        x=np.concatenate(x_col),
        orbital=np.concatenate(orbital_col),
        center=center,
    )
    logger.debug(f"Assembled H_(r={r:g}, j={j}) at b={shift.frac}: n={dim}, nnz={matrix.nnz}")
    return ClusterHamiltonian(matrix=matrix, dofs=dofs, r=float(r), j=j, b=shift, window=window)


def matvec(H: ClusterHamiltonian, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (H.n,):
        raise DimensionMismatchError(f"Vector of shape {v.shape} does not match operator dimension {H.n}")
    return H.matrix @ v


def dense_form(H: ClusterHamiltonian, max_dim: int = DENSE_LIMIT) -> np.ndarray:
    if H.n > max_dim:
        raise SizeLimitError(f"Refusing dense form of a {H.n} x {H.n} matrix (limit {max_dim})")
    return H.matrix.toarray()


def write_coo(H: ClusterHamiltonian, path: str | Path) -> Path:
    """Dump the stored entries as CSV (row, col, value)."""
    path = Path(path)
    coo = H.matrix.tocoo()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["row", "col", "value"])
        for row, col, value in zip(coo.row, coo.col, coo.data):
            writer.writerow([int(row), int(col), f"{value:.17g}"])
    logger.info(f"Wrote {coo.nnz} matrix entries to {path}")
    return path
