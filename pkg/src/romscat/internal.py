"""Reference orthonormal basis and estimated internal snapshots.

The basis V spans the reference-medium snapshot space and is orthonormal
under the weighted grid inner product.  It is never materialized as a full
field: it is kept implicitly as the pair (reference snapshots, coordinate
map) and evaluated lazily wherever fields are requested, which is all the
imaging module ever needs.

The estimated internal wave combines the reference basis with the
data-driven square root R: algebraic content from the measurements, spatial
content from the reference kinematics.  Its Grams reproduce the measured
data for every reference medium, which is the property the imaging and
inversion methods are built on.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .blocklinalg import BlockMatrix, BlockTriangular, block_cholesky, block_tri_inverse
from .errors import DimensionMismatch
from .forward import SnapshotField
from .medium import MediumField
from .pipeline import Scenario
from .rom import RegRecord, regularize_spectral


@dataclass(frozen=True)
class ReferenceBasis:
    """Orthonormal causal basis of the reference snapshot space.

    ``snapshots`` stacks the n reference snapshots as one (num_dof, 2nm)
    array; ``coord_map`` (2nm x 2rm) sends ROM coordinates to snapshot
    combinations, so the basis fields are V = snapshots @ coord_map and an
    estimated snapshot is snapshots @ (coord_map @ R_data i_j).
    """

    snapshots: np.ndarray
    coord_map: np.ndarray
    R_ref: BlockTriangular
    medium: MediumField
    m: int
    n: int
    tau: float
    reg: RegRecord

    @property
    def block_size(self):
        return 2 * self.m

    @property
    def rank(self):
        return self.coord_map.shape[1]

    def field(self, coefs, j=0) -> SnapshotField:
        return SnapshotField(self.snapshots @ (self.coord_map @ coefs),
                             self.medium.grid, j)

    def orthonormality_defect(self):
        V = self.snapshots @ self.coord_map
        G = self.medium.grid.node_weight * (V.T @ V)
        return np.linalg.norm(G - np.eye(self.rank)) / np.sqrt(self.rank)


def reference_basis(medium_ref: MediumField, scenario: Scenario,
                    reg: Optional[RegRecord] = None) -> ReferenceBasis:
    """Run the forward solver in the reference medium and orthogonalize.

    The reference mass matrix is assembled by brute-force field Grams (the
    full snapshots are available here, unlike on the data side), factored by
    block Cholesky, and inverted; V = U R^-1 realizes the Gram-Schmidt
    orthogonalization causally.  When the data-side ROM was spectrally
    truncated, the same truncation is applied here so dimensions match.
    """
    n, m = scenario.n, scenario.m
    b = 2 * m
    if reg is None:
        reg = RegRecord()
    n_times = n if reg.method != "spectral" else n + 1
    _, snaps = scenario.run(medium_ref, n_times=n_times, keep_snapshots=True)
    w = scenario.grid.node_weight
    U = np.concatenate([snaps.values[j] for j in range(n)], axis=1)  # (ndof, 2nm)
    M_ref = BlockMatrix(w * (U.T @ U), b)

    if reg.method == "spectral":
        PU = np.concatenate(
            [0.5 * (snaps.values[l + 1] + snaps.values[abs(l - 1)]) for l in range(n)], axis=1)
        G = U.T @ PU
        S_ref = BlockMatrix(w * 0.5 * (G + G.T), b)
        M_reg, _, Q, lam, Y = regularize_spectral(M_ref, S_ref, reg.order)
        coord_map = (Y / np.sqrt(lam)[None, :]) @ Q
        R_ref = block_cholesky(M_reg, b)
    else:
        R_ref = block_cholesky(M_ref.data, b)
        coord_map = block_tri_inverse(R_ref)
    return ReferenceBasis(U, coord_map, R_ref, medium_ref, m, n, scenario.tau, reg)


def estimate_internal_wave(basis: ReferenceBasis, R_data: BlockTriangular, j: int) -> SnapshotField:
    """u_j^est = V(.; reference medium) R_data i_j."""
    if R_data.data.shape[0] != basis.rank:
        raise DimensionMismatch(
            f"R has dimension {R_data.data.shape[0]}, basis rank is {basis.rank}")
    b = basis.block_size
    if not 0 <= j < basis.rank // b:
        raise DimensionMismatch(f"snapshot index {j} outside 0..{basis.rank // b - 1}")
    return basis.field(R_data.data[:, j * b:(j + 1) * b], j)


def born_wave(basis: ReferenceBasis, j: int) -> SnapshotField:
    """Reference-medium wave V R_ref i_j; identical to the reference solver
    snapshots, kept as a sanity identity and as the Born comparison."""
    b = basis.block_size
    return basis.field(basis.R_ref.data[:, j * b:(j + 1) * b], j)
