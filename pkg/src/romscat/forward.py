"""Time-domain propagation and synthetic data generation.

The transformed wave solves ``(A + d^2/dt^2) u = 0`` with an even-in-time
initial state built spectrally from the pulse, so snapshots obey the exact
cosine stepping ``u_{j+1} = 2 P u_j - u_{|j-1|}`` with ``P = cos(tau sqrt A)``.
The production path is a fine-step leapfrog, which is the exact stepping of
a slightly modified propagator and therefore preserves every algebraic
identity the ROM construction relies on; the eigendecomposition path
(:func:`exact_snapshots`) is the test oracle.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    CFLViolation,
    LengthMismatch,
    NonFiniteField,
    SubdomainTooSmall,
    TooLarge,
    UndersampledInput,
)
from .grid import LebedevGrid
from .operator import DiscreteOperator, estimate_lambda_max
from .pulse import PulseSpec

CFL_SAFETY = 0.9
EIG_DROP_TOL = 1e-12
MAX_DENSE_DOF = 5000


@dataclass(frozen=True)
class ArrayGeometry:
    """Collinear antenna array snapped to family-A nodes."""

    grid: LebedevGrid
    nodes: np.ndarray          # (m,) family-A node indices
    positions: np.ndarray      # (m, 2) node coordinates
    depth: float
    separation: float

    @property
    def m(self):
        return len(self.nodes)

    @property
    def aperture(self):
        return (self.m - 1) * self.separation

    @property
    def footprint_weight(self):
        # nearest-node indicator normalized to unit mass
        return 1.0 / self.grid.node_weight

    def source_dofs(self):
        """DOF index per column in the (s, p) order (1,1), (1,2), ..., (m,2)."""
        return np.array([2 * n + p for n in self.nodes for p in (0, 1)])


def build_array(grid: LebedevGrid, m: int, separation: float, depth=None) -> ArrayGeometry:
    if depth is None:
        depth = 8.0 * grid.ell
    L2 = grid.extent[1]
    center = 0.5 * L2
    offsets = (np.arange(m) - 0.5 * (m - 1)) * separation
    nodes = []
    for off in offsets:
        x = (depth, center + off)
        if not (0 <= x[1] <= L2):
            raise SubdomainTooSmall(f"antenna at cross-range {x[1]:.2f} outside the domain")
        nodes.append(grid.nearest_node_a(x))
    nodes = np.asarray(nodes)
    if len(np.unique(nodes)) != m:
        raise SubdomainTooSmall("antenna separation below the grid resolution")
    return ArrayGeometry(grid, nodes, grid.node_xy[nodes].copy(), depth, separation)


@dataclass(frozen=True)
class SnapshotField:
    """One wave snapshot: a 2-vector per node for each of the 2m columns."""

    values: np.ndarray      # (num_dof, 2m)
    grid: LebedevGrid
    j: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteField(f"snapshot {self.j} contains non-finite values")


@dataclass(frozen=True)
class SnapshotSeries:
    values: np.ndarray      # (n_times, num_dof, 2m)
    tau: float
    grid: LebedevGrid

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, j):
        return SnapshotField(self.values[j], self.grid, j)


@dataclass(frozen=True)
class DataSeries:
    """Transformed data matrices D(t_j), j = 0 .. num_times-1, at step tau."""

    matrices: np.ndarray    # (num_times, 2m, 2m)
    tau: float

    @property
    def num_times(self):
        return self.matrices.shape[0]

    @property
    def m(self):
        return self.matrices.shape[1] // 2

    @property
    def n(self):
        return self.num_times // 2

    def symmetry_defect(self):
        d = self.matrices - np.transpose(self.matrices, (0, 2, 1))
        return np.linalg.norm(d) / max(np.linalg.norm(self.matrices), 1e-300)

    def with_matrices(self, matrices):
        return DataSeries(np.asarray(matrices, dtype=float), self.tau)


def _family_eigh(op: DiscreteOperator):
    """Eigendecompositions of the two family blocks (they never couple)."""
    A_aa, A_bb = op.family_blocks()
    out = []
    for blk in (A_aa, A_bb):
        theta, V = scipy.linalg.eigh(blk.toarray(), driver="evd")
        out.append((np.maximum(theta, 0.0), V))
    return out


def initial_snapshot(op_near: DiscreteOperator, array: ArrayGeometry, pulse: PulseSpec,
                     margin=None, c_o=1.0, node_map=None, full_grid=None) -> SnapshotField:
    """Spectral initial state u_0 = |fhat(sqrt A)| F e_p on the near-array
    subdomain, optionally zero-padded onto the full grid.

    The subdomain must contain the antennas plus ``margin`` (default: twice
    the pulse travel distance c_o * T_f).  Antennas live on family-A nodes
    and the operator never couples the families, so only the family-A block
    is decomposed.
    """
    grid = op_near.grid
    if margin is None:
        margin = 2.0 * c_o * pulse.support_time()
    depth_avail = grid.extent[0] - array.depth
    if depth_avail < margin:
        raise SubdomainTooSmall(
            f"subdomain extends {depth_avail:.1f} beyond the array, need {margin:.1f}")

    A_aa, _ = op_near.family_blocks()
    theta, V = scipy.linalg.eigh(A_aa.toarray(), driver="evd")
    theta = np.maximum(theta, 0.0)
    wts = np.abs(pulse.spectrum(np.sqrt(theta)))
    wts[wts < EIG_DROP_TOL * wts.max()] = 0.0

    src = array.source_dofs()        # family-A DOFs, valid in the subdomain too
    u0_a = (V * wts) @ V[src, :].T * array.footprint_weight
    u0 = np.zeros((grid.num_dof, 2 * array.m))
    u0[:2 * grid.num_nodes_a] = u0_a

    if node_map is None:
        return SnapshotField(u0, grid, 0)
    full = np.zeros((full_grid.num_dof, 2 * array.m))
    dofs = np.column_stack([2 * node_map, 2 * node_map + 1]).ravel()
    full[dofs] = u0
    return SnapshotField(full, full_grid, 0)


def chebyshev_initial_state(op: DiscreteOperator, array: ArrayGeometry, pulse: PulseSpec,
                            tol=1e-10, max_degree=6000) -> SnapshotField:
    """Same initial state as :func:`initial_snapshot`, synthesized as the
    matrix function |fhat(sqrt A)| F e_p by a Chebyshev expansion driven by
    sparse products.

    Equivalent to the spectral construction (they agree to the expansion
    tolerance) but needs no dense eigensolve, so it scales to grids where
    the subdomain decomposition would be the bottleneck and it leaves no
    truncation edge in the field.
    """
    lam_hi = estimate_lambda_max(op)

    def g(theta):
        return np.abs(pulse.spectrum(np.sqrt(np.maximum(theta, 0.0))))

    # Chebyshev coefficients on [0, lam_hi] by DCT at Chebyshev points,
    # degree grown until the coefficient tail is negligible
    deg = 256
    while True:
        k = np.arange(deg + 1)
        x = np.cos(np.pi * (k + 0.5) / (deg + 1))
        theta = 0.5 * lam_hi * (x + 1.0)
        vals = g(theta)
        coefs = np.empty(deg + 1)
        for q in range(deg + 1):
            coefs[q] = 2.0 / (deg + 1) * np.sum(vals * np.cos(np.pi * q * (k + 0.5) / (deg + 1)))
        coefs[0] *= 0.5
        tail = np.max(np.abs(coefs[-10:]))
        if tail <= tol * np.max(np.abs(coefs)) or deg >= max_degree:
            break
        deg *= 2

    F = np.zeros((op.grid.num_dof, 2 * array.m))
    F[array.source_dofs(), np.arange(2 * array.m)] = array.footprint_weight

    # Clenshaw recurrence in the scaled variable t(A) = 2 A / lam_hi - I
    A = op.matrix
    scale = 2.0 / lam_hi

    def t_apply(X):
        return scale * (A @ X) - X

    b1 = np.zeros_like(F)
    b2 = np.zeros_like(F)
    for c in coefs[:0:-1]:
        b1, b2 = c * F + 2.0 * t_apply(b1) - b2, b1
    u0 = coefs[0] * F + t_apply(b1) - b2
    return SnapshotField(u0, op.grid, 0)


def cfl_time_step(op: DiscreteOperator, seed=0):
    """Largest stable leapfrog step, including the safety factor."""
    lam = estimate_lambda_max(op, seed=seed)
    if lam <= 0.0:
        return np.inf
    return CFL_SAFETY * 2.0 / np.sqrt(lam)


def propagate(op: DiscreteOperator, u0: SnapshotField, dt: float, tau: float,
              n_steps: int) -> SnapshotSeries:
    """Leapfrog evolution of the homogeneous wave equation with zero initial
    velocity; returns snapshots at t_j = j*tau for j = 0..n_steps."""
    stride = tau / dt
    if abs(stride - round(stride)) > 1e-9 * max(1.0, stride):
        raise CFLViolation(f"tau/dt = {stride} is not an integer")
    stride = int(round(stride))
    dt_max = cfl_time_step(op)
    if dt > dt_max:
        raise CFLViolation(f"dt = {dt:.4g} exceeds the CFL bound {dt_max:.4g}")

    A = op.matrix
    out = np.empty((n_steps + 1, *u0.values.shape))
    out[0] = u0.values
    u_prev = u0.values.copy()
    u_curr = u0.values - 0.5 * dt * dt * (A @ u0.values)
    k_rec = 1
    for k in range(1, n_steps * stride + 1):
        if k % stride == 0:
            out[k_rec] = u_curr
            if not np.all(np.isfinite(u_curr)):
                raise NonFiniteField(f"non-finite field at step {k}")
            k_rec += 1
        u_next = 2.0 * u_curr - u_prev - dt * dt * (A @ u_curr)
        u_prev, u_curr = u_curr, u_next
    return SnapshotSeries(out, tau, op.grid)


def exact_snapshots(op: DiscreteOperator, u0: SnapshotField, tau: float,
                    n_steps: int) -> SnapshotSeries:
    """Snapshots u_j = cos(j tau sqrt A) u_0 via dense eigendecomposition;
    exact to solver precision, used as the time-stepping oracle."""
    if op.grid.num_dof > MAX_DENSE_DOF:
        raise TooLarge(f"{op.grid.num_dof} DOF exceeds the dense solve limit {MAX_DENSE_DOF}")
    na = 2 * op.grid.num_nodes_a
    blocks = _family_eigh(op)
    out = np.empty((n_steps + 1, *u0.values.shape))
    out[0] = u0.values
    for (theta, V), sl in zip(blocks, (slice(0, na), slice(na, None))):
        coef = V.T @ u0.values[sl]
        sq = np.sqrt(theta)
        for j in range(1, n_steps + 1):
            out[j, sl] = V @ (np.cos(j * tau * sq)[:, None] * coef)
    return SnapshotSeries(out, tau, op.grid)


def compute_data(snapshots: SnapshotSeries, u0: SnapshotField, grid: LebedevGrid) -> DataSeries:
    """D_j = sum over nodes of weight * u_0^T u_j (all source columns at once)."""
    if u0.values.shape != snapshots.values.shape[1:]:
        raise LengthMismatch("u0 and snapshots have different shapes")
    D = grid.node_weight * np.einsum("iq,tir->tqr", u0.values, snapshots.values)
    return DataSeries(np.ascontiguousarray(D), snapshots.tau)


def simulate_raw_response(op: DiscreteOperator, array: ArrayGeometry, pulse: PulseSpec,
                          dt: float, t_start: float, n_fine: int, c_o=1.0):
    """Driven leapfrog for the raw array response.

    Solves ``(A + d^2/dt^2) u = -c_o^2 f'(t) F e_p`` from rest at ``t_start``
    (which must predate the pulse) and records the field at every antenna at
    every fine step.  Returns (W, times) with W of shape (n_fine+1, 2m, 2m);
    rows are receiver (s', p'), columns source (s, p).
    """
    if t_start > -pulse.support_time():
        raise UndersampledInput("recording must start before the pulse turns on")
    A = op.matrix
    src = array.source_dofs()
    n_cols = 2 * array.m
    times = t_start + dt * np.arange(n_fine + 1)
    fp = pulse.time_derivative(times)
    drive = np.zeros((op.grid.num_dof, n_cols))

    W = np.empty((n_fine + 1, n_cols, n_cols))
    u_prev = np.zeros((op.grid.num_dof, n_cols))
    u_curr = np.zeros_like(u_prev)
    W[0] = u_curr[src]
    scale = c_o ** 2 * array.footprint_weight
    for k in range(n_fine):
        drive[src, np.arange(n_cols)] = scale * fp[k]
        rhs = A @ u_curr + drive
        u_next = 2.0 * u_curr - u_prev - dt * dt * rhs
        u_prev, u_curr = u_curr, u_next
        W[k + 1] = u_curr[src]
        if k % 200 == 0 and not np.all(np.isfinite(u_curr[src])):
            raise NonFiniteField(f"non-finite response at fine step {k}")
    return W, times


def transform_response(W: np.ndarray, times: np.ndarray, pulse: PulseSpec,
                       tau: float, n: int, c_o=1.0) -> DataSeries:
    """Map a finely sampled response to the data series
    D(t) = -c_o^-2 [f(-t) * W(t) + f(t) * W(-t)] at t_j = j tau, j < 2n.

    Both convolution terms reduce to correlations of W against shifted
    copies of f, evaluated with the trapezoid rule on the recording grid.
    Recordings must start at or before -T_f so the second term (which only
    contributes for t < 2 T_f) is complete.
    """
    dt = times[1] - times[0]
    if dt > tau / 8.0 + 1e-12:
        raise UndersampledInput(f"response step {dt:.4g} exceeds tau/8 = {tau / 8:.4g}")
    if times[-1] < (2 * n - 1) * tau + pulse.support_time():
        raise UndersampledInput("recording too short for the requested series length")

    # every needed f argument lies on the lattice times[l] -/+ j*tau
    stride = int(round(tau / dt))
    if abs(stride * dt - tau) > 1e-9 * tau:
        raise UndersampledInput("tau must be an integer multiple of the recording step")
    j_max = 2 * n - 1
    lo = times[0] - j_max * tau
    n_lattice = len(times) + 2 * j_max * stride
    f_lattice = pulse.time_signal(lo + dt * np.arange(n_lattice))

    w_trap = np.ones(len(times))
    w_trap[0] = w_trap[-1] = 0.5
    Ww = W * w_trap[:, None, None]

    L = len(times)
    D = np.empty((2 * n, W.shape[1], W.shape[2]))
    for j in range(2 * n):
        off = j * stride
        fm = f_lattice[j_max * stride - off: j_max * stride - off + L]   # f(s_l - t_j)
        fp = f_lattice[j_max * stride + off: j_max * stride + off + L]   # f(s_l + t_j)
        D[j] = -dt / c_o ** 2 * np.tensordot(fm + fp, Ww, axes=(0, 0))
    return DataSeries(D, tau)


def add_noise(data: DataSeries, level: float, seed: int) -> DataSeries:
    """Additive i.i.d. Gaussian noise with std = level * entrywise RMS of the
    whole series, applied independently to every entry (symmetry breaks, as
    it does for real measurements).  Deterministic for a fixed seed."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0.0:
        return data
    rng = np.random.default_rng(seed)
    rms = float(np.sqrt(np.mean(data.matrices ** 2)))
    noisy = data.matrices + level * rms * rng.standard_normal(data.matrices.shape)
    return data.with_matrices(noisy)
