"""Data-driven ROM: mass/stiffness assembly, regularization, factorization.

Everything here consumes only the data series D(t_j); no field quantities
enter.  The mass and stiffness matrices are block Hankel+Toeplitz
combinations of the data, the ROM square root R is the block Cholesky factor
of the mass matrix, and the propagator is its congruence of the stiffness
matrix.  Noise handling offers the two regularizations described by the
construction: a diagonal-block boost of D(0) and a spectral truncation
re-tridiagonalized by block Lanczos.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blocklinalg import (
    BlockMatrix,
    BlockTriangular,
    _qr_pos,
    block_cholesky,
    block_lanczos,
    block_tri_inverse,
    off_tridiagonal_norm,
    spectral_truncate,
)
from .errors import InsufficientData, NotSPD
from .forward import DataSeries


def assemble_mass(data: DataSeries, n: Optional[int] = None) -> BlockMatrix:
    """M_{j,l} = [D(t_{j+l}) + D(t_{|j-l|})] / 2 for j, l < n, symmetrized."""
    n = data.n if n is None else n
    if data.num_times < 2 * n:
        raise InsufficientData(f"need {2 * n} data matrices, have {data.num_times}")
    b = 2 * data.m
    D = data.matrices
    M = np.empty((n * b, n * b))
    for j in range(n):
        for l in range(n):
            M[j * b:(j + 1) * b, l * b:(l + 1) * b] = 0.5 * (D[j + l] + D[abs(j - l)])
    M = 0.5 * (M + M.T)
    return BlockMatrix(M, b)


def assemble_stiffness(data: DataSeries, n: Optional[int] = None) -> BlockMatrix:
    """S_{j,l} = [D(t_{j+l+1}) + D(t_{|j-l-1|}) + D(t_{|j+l-1|}) + D(t_{|j-l+1|})] / 4.

    The index j+l-1 is -1 at j = l = 0; it is resolved by the evenness of the
    transformed data, D(t_{-k}) = D(t_k).
    """
    n = data.n if n is None else n
    if data.num_times < 2 * n:
        raise InsufficientData(f"need {2 * n} data matrices, have {data.num_times}")
    b = 2 * data.m
    D = data.matrices
    S = np.empty((n * b, n * b))
    for j in range(n):
        for l in range(n):
            S[j * b:(j + 1) * b, l * b:(l + 1) * b] = 0.25 * (
                D[j + l + 1] + D[abs(j - l - 1)] + D[abs(j + l - 1)] + D[abs(j - l + 1)])
    S = 0.5 * (S + S.T)
    return BlockMatrix(S, b)


def regularize_boost(data: DataSeries, alpha: float) -> DataSeries:
    """Replace D(0) by (1 + 2 alpha) D(0), which boosts every diagonal block
    of the mass matrix by alpha * D(0)."""
    out = data.matrices.copy()
    out[0] *= (1.0 + 2.0 * alpha)
    return data.with_matrices(out)


def rank_from_threshold(M: BlockMatrix, threshold_ratio: float) -> int:
    """Number of retained blocks: eigenvalues above threshold_ratio * lam_max,
    rounded down to a whole number of blocks (at least one)."""
    lam = np.linalg.eigvalsh(M.data)
    keep = int(np.sum(lam > threshold_ratio * lam[-1]))
    r = max(keep // M.block_size, 1)
    return r


def regularize_spectral(M: BlockMatrix, S: BlockMatrix, r: int):
    """Spectral truncation to 2rm modes, re-tridiagonalized by block Lanczos.

    Returns (M_reg, P_reg, Q, lam, Y).  The Lanczos start block is the
    rotated first physical state, so the regularized ROM's first snapshot
    still corresponds to u_0.
    """
    b = M.block_size
    Y, lam = spectral_truncate(M, r * b, block_size=b)
    isq = 1.0 / np.sqrt(lam)
    Pi = (isq[:, None] * (Y.T @ S.data @ Y)) * isq[None, :]
    Pi = 0.5 * (Pi + Pi.T)
    B0_raw = isq[:, None] * (Y.T @ M.data[:, :b])
    B0, _ = _qr_pos(B0_raw)
    Q, T = block_lanczos(Pi, b, B0)
    M_reg = (Q.T * lam) @ Q
    M_reg = 0.5 * (M_reg + M_reg.T)
    return BlockMatrix(M_reg, b), BlockMatrix(T, b), Q, lam, Y


@dataclass(frozen=True)
class RegRecord:
    method: str = "none"          # none | boost | spectral
    alpha: float = 0.0
    threshold: float = 0.0
    order: int = 0                # effective block order r (equals n when untruncated)


@dataclass(frozen=True)
class ROM:
    """Data-driven reduced model: square root R, stiffness S, propagator P."""

    R: BlockTriangular
    S: BlockMatrix
    P: BlockMatrix
    m: int
    n: int                        # number of blocks actually factored
    tau: float
    reg: RegRecord = field(default_factory=RegRecord)

    @property
    def block_size(self):
        return 2 * self.m

    def r_inverse(self):
        return block_tri_inverse(self.R)

    def initial_state(self):
        """u_0^ROM = R i_0, the first block column of R."""
        return self.R.data[:, :self.block_size].copy()

    def off_tridiagonal_ratio(self):
        return off_tridiagonal_norm(self.P.data, self.block_size) / np.linalg.norm(self.P.data)


def build_rom(M: BlockMatrix, S: BlockMatrix, m: int, tau: float,
              reg: RegRecord = RegRecord()) -> ROM:
    """Factor M = R^T R and form the propagator P = R^-T S R^-1."""
    try:
        R = block_cholesky(M, 2 * m)
    except NotSPD as exc:
        raise NotSPD(f"{exc}; the mass matrix must be regularized first") from exc
    R_inv = block_tri_inverse(R)
    P = R_inv.T @ S.data @ R_inv
    P = 0.5 * (P + P.T)
    n = M.num_blocks
    if reg.method == "none":
        reg = RegRecord("none", 0.0, 0.0, n)
    return ROM(R, S, BlockMatrix(P, 2 * m), m, n, tau, reg)


def build_rom_spectral(M: BlockMatrix, S: BlockMatrix, m: int, tau: float,
                       r: int, threshold: float = 0.0) -> ROM:
    """Regularized ROM: Lanczos propagator plus Cholesky of the projected
    mass matrix.  The stored stiffness is the consistent S = R^T P R."""
    M_reg, P_reg, _, _, _ = regularize_spectral(M, S, r)
    R = block_cholesky(M_reg, 2 * m)
    S_reg = R.data.T @ P_reg.data @ R.data
    S_reg = BlockMatrix(0.5 * (S_reg + S_reg.T), 2 * m)
    rec = RegRecord("spectral", 0.0, threshold, r)
    return ROM(R, S_reg, P_reg, m, r, tau, rec)


def rom_propagate(rom: ROM, j_max: int) -> np.ndarray:
    """ROM snapshot evolution u_{j+1} = 2 P u_j - u_{|j-1|} from u_0 = R i_0.

    Returns an array of shape (j_max + 1, 2nm, 2m).
    """
    if j_max < 0:
        raise ValueError("j_max must be non-negative")
    b = rom.block_size
    P = rom.P.data
    out = np.empty((j_max + 1, P.shape[0], b))
    out[0] = rom.initial_state()
    if j_max == 0:
        return out
    out[1] = P @ out[0]        # j = 0 step with u_{-1} = u_1
    for j in range(1, j_max):
        out[j + 1] = 2.0 * P @ out[j] - out[j - 1]
    return out


@dataclass(frozen=True)
class InterpolationReport:
    residuals: np.ndarray          # relative residual per time index j <= 2n-2
    max_residual: float
    off_tridiagonal: float         # off-tridiagonal norm of P over ||P||_F
    extension_residual: float      # informational: j = 2n-1

    def __str__(self):
        return (f"interpolation residual {self.max_residual:.3e} over {len(self.residuals)} "
                f"times; P off-tridiagonal {self.off_tridiagonal:.3e}; "
                f"j=2n-1 extension {self.extension_residual:.3e}")


def verify_interpolation(rom: ROM, data: DataSeries) -> InterpolationReport:
    """Check that the ROM reproduces D(t_j) for j = 0..2n-2.

    For j < n the fit is the direct Gram of ROM snapshots; for j >= n it
    uses the mass-matrix extension identity with the evenness of the data.
    The one-step-further fit at j = 2n-1 is reported informationally only.
    """
    n = rom.n
    snaps = rom_propagate(rom, n)
    u0 = snaps[0]
    res = np.empty(2 * n - 1)
    for j in range(2 * n - 1):
        if j < n:
            fit = u0.T @ snaps[j]
        else:
            k = j - (n - 1)
            fit = 2.0 * snaps[n - 1].T @ snaps[k] - u0.T @ snaps[abs(n - 1 - k)]
        ref = data.matrices[j]
        res[j] = np.linalg.norm(fit - ref) / max(np.linalg.norm(ref), 1e-300)
    k = n
    fit_ext = 2.0 * snaps[n - 1].T @ snaps[k] - u0.T @ snaps[abs(n - 1 - k)]
    ref = data.matrices[2 * n - 1]
    ext = np.linalg.norm(fit_ext - ref) / max(np.linalg.norm(ref), 1e-300)
    return InterpolationReport(res, float(res.max()), float(rom.off_tridiagonal_ratio()), float(ext))
