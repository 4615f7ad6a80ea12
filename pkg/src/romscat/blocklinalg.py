"""Dense structured linear algebra kernels used by the ROM construction.

All routines operate on plain ndarrays partitioned into square blocks of a
declared size ``b``.  Matrices are small (a few hundred rows at most), so
everything is eigendecomposition-backed dense algebra; no attempt is made at
sparse or pivoted factorizations.  Every function is pure and thread safe.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    Breakdown,
    NonPositiveSpectrum,
    NotSPD,
    NotSymmetric,
    RankTooLarge,
    Singular,
)

SYM_TOL = 1e-12
CHOL_TOL = 1e-11
COND_LIMIT = 1e14


@dataclass(frozen=True)
class BlockMatrix:
    """Dense square matrix with a declared block partition.

    ``data`` has shape ``(b*nb, b*nb)``; blocks are addressed with
    :meth:`block`.
    """

    data: np.ndarray
    block_size: int

    def __post_init__(self):
        n = self.data.shape[0]
        if self.data.ndim != 2 or self.data.shape[1] != n:
            raise ValueError("BlockMatrix requires a square matrix")
        if self.block_size <= 0 or n % self.block_size:
            raise ValueError("dimension must be divisible by block_size")

    @property
    def num_blocks(self):
        return self.data.shape[0] // self.block_size

    def block(self, j, l):
        b = self.block_size
        return self.data[j * b:(j + 1) * b, l * b:(l + 1) * b]

    def symmetry_defect(self):
        return np.linalg.norm(self.data - self.data.T) / max(np.linalg.norm(self.data), 1e-300)


@dataclass(frozen=True)
class BlockTriangular:
    """Upper block triangular matrix with SPD diagonal blocks."""

    data: np.ndarray
    block_size: int

    @property
    def num_blocks(self):
        return self.data.shape[0] // self.block_size

    def block(self, j, l):
        b = self.block_size
        return self.data[j * b:(j + 1) * b, l * b:(l + 1) * b]


def _check_symmetric(M, tol, what="matrix"):
    defect = np.linalg.norm(M - M.T) / max(np.linalg.norm(M), 1e-300)
    if defect > tol:
        raise NotSymmetric(f"{what} asymmetry {defect:.3e} exceeds {tol:.1e}")


def spd_sqrt(M, sym_tol=SYM_TOL):
    """Unique symmetric positive definite square root of an SPD matrix.

    Eigendecomposition based: robust for the block sizes used here (up to a
    few hundred).  Raises NotSymmetric / NotSPD on invalid input.
    """
    M = np.asarray(M, dtype=float)
    _check_symmetric(M, sym_tol)
    theta, V = np.linalg.eigh(0.5 * (M + M.T))
    if theta[0] <= 0.0:
        raise NotSPD(f"smallest eigenvalue {theta[0]:.3e} is not positive")
    S = (V * np.sqrt(theta)) @ V.T
    return 0.5 * (S + S.T)


def block_cholesky(M, block_size, sym_tol=SYM_TOL):
    """Block Cholesky square root: upper BlockTriangular R with RᵀR = M.

    The diagonal blocks of R are the SPD matrix square roots of the
    Schur-complement pivots, which fixes the factorization uniquely.
    """
    if isinstance(M, BlockMatrix):
        if block_size != M.block_size:
            raise ValueError("block_size disagrees with BlockMatrix partition")
        M = M.data
    M = np.asarray(M, dtype=float)
    _check_symmetric(M, sym_tol)
    n = M.shape[0]
    b = block_size
    if n % b:
        raise ValueError("dimension must be divisible by block_size")
    nb = n // b
    S = 0.5 * (M + M.T)
    R = np.zeros_like(S)
    work = S.copy()
    for k in range(nb):
        i0, i1 = k * b, (k + 1) * b
        try:
            D = spd_sqrt(0.5 * (work[i0:i1, i0:i1] + work[i0:i1, i0:i1].T), sym_tol=np.inf)
        except NotSPD as exc:
            raise NotSPD(f"pivot block {k} is not positive definite ({exc})") from exc
        R[i0:i1, i0:i1] = D
        if k + 1 < nb:
            row = np.linalg.solve(D, work[i0:i1, i1:])
            R[i0:i1, i1:] = row
            work[i1:, i1:] -= row.T @ row
    return BlockTriangular(R, b)


def block_tri_inverse(R, cond_limit=COND_LIMIT):
    """Inverse of an upper block triangular matrix by back substitution.

    Raises Singular when a diagonal block has condition number beyond
    ``cond_limit``.  The result is again upper block triangular.
    """
    if isinstance(R, BlockTriangular):
        b = R.block_size
        R = R.data
    else:
        raise TypeError("block_tri_inverse expects a BlockTriangular")
    n = R.shape[0]
    nb = n // b
    for k in range(nb):
        D = R[k * b:(k + 1) * b, k * b:(k + 1) * b]
        if np.linalg.cond(D) > cond_limit:
            raise Singular(f"diagonal block {k} is numerically singular")
    X = np.zeros_like(R)
    for k in range(nb - 1, -1, -1):
        i0, i1 = k * b, (k + 1) * b
        D = R[i0:i1, i0:i1]
        X[i0:i1, i0:i1] = np.linalg.solve(D, np.eye(b))
        if k + 1 < nb:
            X[i0:i1, i1:] = -np.linalg.solve(D, R[i0:i1, i1:] @ X[i1:, i1:])
    return X


def spectral_truncate(M, rank, block_size=None, sym_tol=1e-10):
    """Eigenvectors and eigenvalues of the ``rank`` largest eigenvalues.

    Returns (Y, lam) with Y column orthonormal (one eigenvector per column,
    sorted by descending eigenvalue) and lam the kept eigenvalues.  All kept
    eigenvalues must be strictly positive, otherwise NonPositiveSpectrum is
    raised to signal that the caller must reduce the rank.
    """
    if isinstance(M, BlockMatrix):
        block_size = M.block_size
        M = M.data
    M = np.asarray(M, dtype=float)
    _check_symmetric(M, sym_tol)
    n = M.shape[0]
    if rank <= 0 or rank > n:
        raise RankTooLarge(f"rank {rank} not in 1..{n}")
    if block_size is not None and rank % block_size:
        raise RankTooLarge(f"rank {rank} is not a multiple of block size {block_size}")
    theta, V = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(theta)[::-1][:rank]
    lam = theta[order]
    if lam[-1] <= 0.0:
        raise NonPositiveSpectrum(
            f"kept eigenvalue {lam[-1]:.3e} is not positive; reduce the rank")
    return V[:, order], lam


def _qr_pos(W):
    """QR with the sign convention R_ii >= 0, which makes it unique."""
    Q, R = np.linalg.qr(W)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, R * s[:, None]


def block_lanczos(Pi, block_size, B0, sym_tol=1e-10, breakdown_tol=1e-12):
    """Block Lanczos tridiagonalization of a symmetric matrix.

    Runs the full n/b steps with reorthogonalization against all previous
    blocks at every step (applied twice; loss of orthogonality is the
    dominant failure mode, and the matrices here are small enough that the
    extra cost is negligible).  Returns (Q, T) with Q orthogonal, the first
    block column of Q equal to B0, and T = QᵀΠQ block tridiagonal.

    Raises Breakdown (with the step index) when a residual block becomes
    rank deficient; for this application that means the truncation rank was
    chosen too large, so no deflation is attempted.
    """
    Pi = np.asarray(Pi, dtype=float)
    _check_symmetric(Pi, sym_tol)
    n = Pi.shape[0]
    b = block_size
    if n % b:
        raise ValueError("dimension must be divisible by block_size")
    B0 = np.asarray(B0, dtype=float)
    if B0.shape != (n, b):
        raise ValueError(f"B0 must be {n}x{b}")
    if np.linalg.norm(B0.T @ B0 - np.eye(b)) > 1e-8:
        raise ValueError("B0 must have orthonormal columns")
    nb = n // b
    scale = max(np.linalg.norm(Pi), 1e-300)
    Q = np.zeros((n, n))
    Q[:, :b] = B0
    X_prev = np.zeros((n, b))
    beta_prev = np.zeros((b, b))
    for j in range(nb):
        Xj = Q[:, j * b:(j + 1) * b]
        W = Pi @ Xj - X_prev @ beta_prev.T
        W -= Xj @ (Xj.T @ W)
        basis = Q[:, :(j + 1) * b]
        for _ in range(2):
            W -= basis @ (basis.T @ W)
        if j + 1 < nb:
            Xn, beta = _qr_pos(W)
            if np.min(np.abs(np.diag(beta))) <= breakdown_tol * scale:
                raise Breakdown(j)
            Q[:, (j + 1) * b:(j + 2) * b] = Xn
            X_prev, beta_prev = Xj, beta
    T = Q.T @ Pi @ Q
    return Q, 0.5 * (T + T.T)


def off_tridiagonal_norm(T, block_size):
    """Frobenius norm of all blocks with |j-l| >= 2."""
    T = T.data if isinstance(T, (BlockMatrix, BlockTriangular)) else np.asarray(T)
    b = block_size
    nb = T.shape[0] // b
    total = 0.0
    for j in range(nb):
        for l in range(nb):
            if abs(j - l) >= 2:
                total += np.sum(T[j * b:(j + 1) * b, l * b:(l + 1) * b] ** 2)
    return np.sqrt(total)
