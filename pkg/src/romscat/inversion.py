"""Quantitative wave-speed estimation by Gauss-Newton optimization.

The search space is a Gaussian-basis parametrization of the Cholesky factor
of the squared slowness tensor, which keeps every iterate symmetric positive
definite by construction.  Two objective functions are offered: the
square-root misfit ||R(c~) R^-1 - I||_F^2, whose reference side repeats the
exact data-side ROM procedure, and the classical waveform misfit.  Jacobians
are forward finite differences with columns evaluated concurrently; steps
are Tikhonov-regularized with the adaptive spectral rule and halved on
objective increase or loss of positivity.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .blocklinalg import BlockTriangular, block_cholesky, block_tri_inverse
from .errors import (
    DegenerateGamma,
    FactorizationFailure,
    ForwardFailure,
    NotSPD,
    RomscatError,
    SingularSystem,
)
from .forward import DataSeries
from .medium import Collar, MediumField, medium_from_tensors
from .pipeline import Scenario
from .rom import (RegRecord, assemble_mass, assemble_stiffness, build_rom,
                  build_rom_spectral, regularize_boost)

GAMMA_FLOOR = 1e-12


@dataclass(frozen=True)
class Parametrization:
    """Gaussian basis on a rectangular lattice of centers.

    The three coefficient groups parametrize the entries of the upper
    triangular factor gamma: the two diagonals carry a constant 1/c_o
    baseline, the off-diagonal starts at zero.
    """

    centers: np.ndarray        # (N, 2)
    sigma1: float
    sigma2: float
    c_o: float = 1.0

    @property
    def size(self):
        return len(self.centers)

    @property
    def num_unknowns(self):
        return 3 * self.size

    def basis_matrix(self, points):
        d1 = (points[:, 0:1] - self.centers[None, :, 0]) / self.sigma1
        d2 = (points[:, 1:2] - self.centers[None, :, 1]) / self.sigma2
        return np.exp(-0.5 * (d1 ** 2 + d2 ** 2))

    def gamma_nodes(self, alpha, points):
        """gamma entries (gamma1, gamma2, gamma3) at the given points."""
        a = np.asarray(alpha, dtype=float).reshape(3, self.size)
        phi = self.basis_matrix(points)
        g1 = 1.0 / self.c_o + phi @ a[0]
        g2 = 1.0 / self.c_o + phi @ a[1]
        g3 = phi @ a[2]
        return g1, g2, g3


def lattice_parametrization(grid, lambda_c, x1_range, x2_range, c_o=1.0,
                            spacing1=None, spacing2=None, sigma1=None, sigma2=None):
    """Default lattice: spacing lambda_c/4 along range and 5 lambda_c/16
    across, Gaussian widths 2.3 and 2.9 grid steps."""
    ell = grid.ell
    s1 = lambda_c / 4.0 if spacing1 is None else spacing1
    s2 = 5.0 * lambda_c / 16.0 if spacing2 is None else spacing2
    x1 = np.arange(x1_range[0], x1_range[1] + 1e-9, s1)
    x2 = np.arange(x2_range[0], x2_range[1] + 1e-9, s2)
    cc = np.array([(a, b) for a in x1 for b in x2])
    return Parametrization(cc, 2.3 * ell if sigma1 is None else sigma1,
                           2.9 * ell if sigma2 is None else sigma2, c_o)


def gamma_field(param: Parametrization, alpha, points):
    """Per-point upper triangular gamma as an (npoints, 2, 2) array."""
    g1, g2, g3 = param.gamma_nodes(alpha, np.atleast_2d(points))
    out = np.zeros((len(g1), 2, 2))
    out[:, 0, 0] = g1
    out[:, 1, 1] = g2
    out[:, 0, 1] = g3
    return out


def speed_from_gamma(g1, g2, g3, c_o=1.0):
    """SPD speed tensor c = sqrt((gamma^T gamma)^-1), vectorized.

    Uses the closed-form square root of a 2x2 SPD matrix; raises
    DegenerateGamma when a diagonal entry of gamma falls below the floor.
    """
    g1 = np.atleast_1d(np.asarray(g1, dtype=float))
    g2 = np.atleast_1d(np.asarray(g2, dtype=float))
    g3 = np.atleast_1d(np.asarray(g3, dtype=float))
    floor = GAMMA_FLOOR / c_o
    if np.any(g1 <= floor) or np.any(g2 <= floor):
        raise DegenerateGamma("gamma diagonal entry at or below the positivity floor")
    # B = (gamma^T gamma)^-1 entrywise
    det = (g1 * g2) ** 2
    b11 = (g3 ** 2 + g2 ** 2) / det
    b22 = g1 ** 2 / det
    b12 = -(g1 * g3) / det
    s = np.sqrt(b11 * b22 - b12 ** 2)
    t = np.sqrt(b11 + b22 + 2.0 * s)
    return np.column_stack([(b11 + s) / t, (b22 + s) / t, b12 / t])


def rasterize_speed(param: Parametrization, alpha, grid, collar: Optional[Collar] = None) -> MediumField:
    """Speed tensor field c~(alpha) on the grid, collar-clamped to c_o I."""
    g1, g2, g3 = param.gamma_nodes(alpha, grid.node_xy)
    c = speed_from_gamma(g1, g2, g3, c_o=param.c_o)
    return medium_from_tensors(grid, c, param.c_o, collar=collar, clamp=True)


@dataclass
class ObjectiveContext:
    """Everything a reference-side evaluation needs."""

    scenario: Scenario
    param: Parametrization
    collar: Optional[Collar] = None
    reg: RegRecord = field(default_factory=RegRecord)

    def build_r(self, data: DataSeries) -> BlockTriangular:
        """Square root of the (regularized) mass matrix, the shared recipe
        for the data side and the reference side."""
        if self.reg.method == "boost":
            data = regularize_boost(data, self.reg.alpha)
        M = assemble_mass(data, n=self.scenario.n)
        S = assemble_stiffness(data, n=self.scenario.n)
        if self.reg.method == "spectral":
            rom = build_rom_spectral(M, S, self.scenario.m, self.scenario.tau,
                                     self.reg.order, self.reg.threshold)
        else:
            rom = build_rom(M, S, self.scenario.m, self.scenario.tau, self.reg)
        return rom.R

    def reference_r(self, alpha) -> BlockTriangular:
        medium = rasterize_speed(self.param, alpha, self.scenario.grid, self.collar)
        try:
            data, _ = self.scenario.run(medium)
        except RomscatError as exc:
            raise ForwardFailure(str(exc)) from exc
        try:
            return self.build_r(data)
        except NotSPD as exc:
            raise FactorizationFailure(str(exc)) from exc

    def reference_data(self, alpha) -> DataSeries:
        medium = rasterize_speed(self.param, alpha, self.scenario.grid, self.collar)
        try:
            data, _ = self.scenario.run(medium)
        except RomscatError as exc:
            raise ForwardFailure(str(exc)) from exc
        return data


def rom_objective(alpha, R_data_inv: np.ndarray, ctx: ObjectiveContext):
    """O = ||R(c~) R^-1 - I||_F^2 with the residual matrix for Gauss-Newton."""
    R_ref = ctx.reference_r(alpha)
    res = R_ref.data @ R_data_inv - np.eye(R_data_inv.shape[0])
    return float(np.sum(res ** 2)), res


def fwi_objective(alpha, data: DataSeries, ctx: ObjectiveContext):
    """O = tau * sum_j ||D(t_j) - D(t_j; c~)||_F^2, residual scaled by sqrt(tau)."""
    ref = ctx.reference_data(alpha)
    k = min(data.num_times, ref.num_times)
    diff = data.matrices[:k] - ref.matrices[:k]
    return float(data.tau * np.sum(diff ** 2)), np.sqrt(data.tau) * diff


def _worker_count():
    env = os.environ.get("ROMSCAT_THREADS")
    return max(1, int(env)) if env else 1


def jacobian_fd(residual_fn: Callable, alpha, h: float, r0=None):
    """Forward-difference Jacobian of the vectorized residual.

    Columns are independent forward evaluations and run concurrently when
    ROMSCAT_THREADS is set; assembly order is fixed, so the result does not
    depend on the thread count.  A failing column re-raises with its index.
    """
    alpha = np.asarray(alpha, dtype=float)
    if r0 is None:
        _, r0 = residual_fn(alpha)
    r0 = np.asarray(r0).ravel()
    n_par = alpha.size
    J = np.empty((r0.size, n_par))

    def column(i):
        a = alpha.copy()
        a[i] += h
        try:
            _, ri = residual_fn(a)
        except RomscatError as exc:
            raise ForwardFailure(f"jacobian column {i}: {exc}") from exc
        return (np.asarray(ri).ravel() - r0) / h

    workers = _worker_count()
    if workers == 1:
        for i in range(n_par):
            J[:, i] = column(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, col in enumerate(pool.map(column, range(n_par))):
                J[:, i] = col
    return J


@dataclass(frozen=True)
class NuRule:
    """Adaptive Tikhonov parameter: the round(fraction * base)-th eigenvalue
    of the Gauss-Newton Hessian, counted in descending order.  ``base`` is
    the Gaussian basis count by default (the verbatim reading); set
    ``use_unknowns`` to index with the full unknown count instead."""

    fraction: float = 0.9
    use_unknowns: bool = False

    def nu(self, eigs_desc, basis_count):
        base = 3 * basis_count if self.use_unknowns else basis_count
        idx = int(round(self.fraction * base))
        idx = min(max(idx, 1), len(eigs_desc))
        return float(eigs_desc[idx - 1])


def gauss_newton_step(J, r, nu_rule: NuRule, basis_count):
    """Tikhonov-regularized Gauss-Newton update; returns (delta, nu)."""
    r = np.asarray(r).ravel()
    H = J.T @ J
    eigs = np.linalg.eigvalsh(H)[::-1]
    nu = nu_rule.nu(eigs, basis_count)
    try:
        delta = -np.linalg.solve(H + nu * np.eye(H.shape[0]), J.T @ r)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(delta)):
        raise SingularSystem("non-finite Gauss-Newton update")
    return delta, nu


@dataclass
class InversionConfig:
    objective: str = "rom"            # rom | fwi
    fd_step: Optional[float] = None   # default 1e-4 / c_o
    max_iterations: int = 30
    tol_decrease: float = 1e-4        # relative decrease threshold
    nu_rule: NuRule = field(default_factory=NuRule)
    schedule: Optional[tuple] = None  # strictly increasing n' values
    reg: RegRecord = field(default_factory=RegRecord)
    max_halvings: int = 10

    def __post_init__(self):
        if self.objective not in ("rom", "fwi"):
            raise ValueError("objective must be 'rom' or 'fwi'")
        if self.schedule is not None:
            sched = tuple(self.schedule)
            if any(b <= a for a, b in zip(sched, sched[1:])):
                raise ValueError("layer-peel schedule must be strictly increasing")
            self.schedule = sched


@dataclass
class IterationRecord:
    window: int
    iteration: int
    objective: float
    step_norm: float
    nu: float
    halvings: int

    def as_dict(self):
        return {"window": self.window, "iteration": self.iteration,
                "objective": self.objective, "step_norm": self.step_norm,
                "nu": self.nu, "halvings": self.halvings}


@dataclass
class InversionResult:
    medium: MediumField
    alpha: np.ndarray
    log: list
    converged: bool
    final_objective: float


def _positivity_ok(param, alpha, grid):
    g1, g2, g3 = param.gamma_nodes(alpha, grid.node_xy)
    floor = GAMMA_FLOOR / param.c_o
    return np.all(g1 > floor) and np.all(g2 > floor)


def invert(data: DataSeries, config: InversionConfig, param: Parametrization,
           scenario: Scenario, collar: Optional[Collar] = None) -> InversionResult:
    """Gauss-Newton inversion loop, optionally layer peeled.

    Factors the data-side square root once per time window, then iterates
    from alpha = 0 (or the previous window's estimate), halving steps that
    increase the objective or break positivity.  Convergence is a relative
    objective decrease below the threshold on two consecutive iterations.
    """
    grid = scenario.grid
    h = config.fd_step if config.fd_step is not None else 1e-4 / param.c_o
    schedule = config.schedule if config.schedule else (scenario.n,)
    alpha = np.zeros(param.num_unknowns)
    log = []
    converged = False
    value = np.inf

    for n_prime in schedule:
        sc = scenario.with_window(n_prime)
        ctx = ObjectiveContext(sc, param, collar, config.reg)
        window = data.matrices[:2 * n_prime]
        data_w = DataSeries(window, data.tau)
        if config.objective == "rom":
            R_data = ctx.build_r(data_w)
            R_inv = block_tri_inverse(R_data)

            def objective(a):
                return rom_objective(a, R_inv, ctx)
        else:
            def objective(a):
                return fwi_objective(a, data_w, ctx)

        value, res = objective(alpha)
        small_steps = 0
        for it in range(config.max_iterations):
            J = jacobian_fd(objective, alpha, h, r0=res)
            delta, nu = gauss_newton_step(J, res, config.nu_rule, param.size)
            step = delta
            halvings = 0
            accepted = False
            while halvings <= config.max_halvings:
                cand = alpha + step
                if _positivity_ok(param, cand, grid):
                    try:
                        cand_val, cand_res = objective(cand)
                    except (ForwardFailure, FactorizationFailure):
                        cand_val = np.inf
                    if cand_val <= value:
                        accepted = True
                        break
                step = 0.5 * step
                halvings += 1
            if not accepted:
                log.append(IterationRecord(n_prime, it, value, 0.0, nu, halvings))
                break
            rel_drop = (value - cand_val) / max(value, 1e-300)
            alpha, value, res = cand, cand_val, cand_res
            log.append(IterationRecord(n_prime, it, value, float(np.linalg.norm(step)), nu,
                                       halvings))
            if rel_drop < config.tol_decrease:
                small_steps += 1
                if small_steps >= 2:
                    converged = True
                    break
            else:
                small_steps = 0
        else:
            converged = False
    medium = rasterize_speed(param, alpha, grid, collar)
    return InversionResult(medium, alpha, log, converged, float(value))
