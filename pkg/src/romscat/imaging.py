"""Qualitative imaging: internal-wave energy images and reverse-time migration.

The internal-wave image at a point is the time-and-source sum of squared
estimated-snapshot components; it needs nothing beyond the reference basis
and the data-driven square root, so it costs a few matrix products.  The
migration image backpropagates the raw response with reference-medium Green
functions computed by dipole runs; it is the Born-linearized comparison
method.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .blocklinalg import BlockTriangular
from .errors import EmptyRegion, MissingGreens, PointOutsideBasis
from .forward import ArrayGeometry
from .grid import LebedevGrid
from .internal import ReferenceBasis
from .medium import MediumField, Region
from .operator import assemble_operator
from .pipeline import Scenario


@dataclass(frozen=True)
class ImagingGrid:
    """Rectangular window of family-A nodes (no interpolation happens)."""

    grid: LebedevGrid
    i1_range: tuple        # (start, stop) node rows, stop exclusive
    i2_range: tuple
    step: int = 1

    def __post_init__(self):
        n1, n2 = self.grid.n1, self.grid.n2
        if not (0 < self.i1_range[0] < self.i1_range[1] <= n1 - 1):
            raise ValueError("imaging rows must be strictly inside the domain")
        if not (0 < self.i2_range[0] < self.i2_range[1] <= n2 - 1):
            raise ValueError("imaging columns must be strictly inside the domain")

    @property
    def i1(self):
        return np.arange(self.i1_range[0], self.i1_range[1], self.step)

    @property
    def i2(self):
        return np.arange(self.i2_range[0], self.i2_range[1], self.step)

    @property
    def shape(self):
        return (len(self.i1), len(self.i2))

    @property
    def num_points(self):
        return self.shape[0] * self.shape[1]

    @property
    def nodes(self):
        ii1, ii2 = np.meshgrid(self.i1, self.i2, indexing="ij")
        return (ii1 * self.grid.n2 + ii2).ravel()

    @property
    def xy(self):
        return self.grid.node_xy[self.nodes]

    @property
    def spacing(self):
        return self.step * self.grid.ell

    def dofs(self, comp):
        return 2 * self.nodes + comp


@dataclass(frozen=True)
class ImageField:
    values: np.ndarray          # (num_points,)
    im_grid: ImagingGrid
    pol: tuple                  # (p_prime, p), 1-based
    provenance: str             # rom | rtm | ideal
    transforms: tuple = ()

    def as_matrix(self):
        return self.values.reshape(self.im_grid.shape)

    def normalized(self):
        peak = np.max(np.abs(self.values))
        vals = self.values / peak if peak > 0 else self.values
        return ImageField(vals, self.im_grid, self.pol, self.provenance,
                          self.transforms + ("normalized",))


def rom_image(basis: ReferenceBasis, R_data: BlockTriangular, p: int, p_prime: int,
              im_grid: ImagingGrid, provenance="rom") -> ImageField:
    """Sum over the first n times and all sources of the squared p'-component
    of the estimated internal wave with incident polarization p."""
    if p not in (1, 2) or p_prime not in (1, 2):
        raise ValueError("polarization indices must be 1 or 2")
    bg = basis.medium.grid
    if (im_grid.grid.n1, im_grid.grid.n2, im_grid.grid.ell) != (bg.n1, bg.n2, bg.ell):
        raise PointOutsideBasis("imaging grid does not live on the basis evaluation grid")
    rows = im_grid.dofs(p_prime - 1)
    U_im = basis.snapshots[rows]                      # (num_points, 2nm)
    coefs = basis.coord_map @ R_data.data             # (2nm, rank)
    b = basis.block_size
    vals = np.zeros(im_grid.num_points)
    n_blocks = R_data.data.shape[1] // b
    for j in range(min(basis.n, n_blocks)):
        est = U_im @ coefs[:, j * b:(j + 1) * b]      # (num_points, 2m)
        vals += np.sum(est[:, (p - 1)::2] ** 2, axis=1)
    return ImageField(vals, im_grid, (p_prime, p), provenance)


@dataclass(frozen=True)
class GreenFields:
    """Reference dyadic Green functions recorded on the imaging grid.

    ``values[j, y, :, q]`` is the 2-vector field at imaging point ``y`` and
    time ``j * tau``, radiated by the dipole column ``q = (s, p)``; by
    reciprocity it also provides the transposed evaluations.
    """

    values: np.ndarray       # (n_times, num_points, 2, 2m)
    tau: float
    im_grid: ImagingGrid
    array: ArrayGeometry


def compute_greens(scenario: Scenario, medium_ref: MediumField, im_grid: ImagingGrid,
                   n_times: Optional[int] = None) -> GreenFields:
    """Dipole leapfrog runs in the reference medium for every antenna and
    polarization; an impulsive current is equivalent to an initial velocity.
    Recorded are electric-field tensors, subsampled at tau on the imaging
    grid only."""
    if n_times is None:
        n_times = 2 * scenario.n
    grid = scenario.grid
    array = scenario.array
    op = assemble_operator(medium_ref)
    dt = scenario.time_step(op)
    stride = int(round(scenario.tau / dt))
    A = op.matrix
    src = array.source_dofs()
    n_cols = 2 * array.m
    c_o = scenario.c_o

    udot0 = np.zeros((grid.num_dof, n_cols))
    udot0[src, np.arange(n_cols)] = c_o ** 2 / grid.node_weight

    nodes = im_grid.nodes
    rows = np.empty(2 * len(nodes), dtype=int)
    rows[0::2] = 2 * nodes
    rows[1::2] = 2 * nodes + 1
    # E = (c / c_o) U at the recording nodes
    ct = medium_ref.tensors[nodes] / c_o

    out = np.empty((n_times, im_grid.num_points, 2, n_cols))

    def record(j, u):
        uv = u[rows].reshape(-1, 2, n_cols)
        out[j] = np.einsum("yab,ybq->yaq", ct, uv)

    u_prev = np.zeros((grid.num_dof, n_cols))
    u_curr = dt * udot0          # u(0) = 0, second order since u''(0) = 0
    record(0, u_prev)
    j_rec = 1
    for k in range(1, (n_times - 1) * stride + 1):
        if k % stride == 0:
            record(j_rec, u_curr)
            j_rec += 1
        u_next = 2.0 * u_curr - u_prev - dt * dt * (A @ u_curr)
        u_prev, u_curr = u_curr, u_next
    return GreenFields(out, scenario.tau, im_grid, array)


def rtm_image(W: np.ndarray, greens: GreenFields, im_grid: ImagingGrid,
              p: int, p_prime: int) -> ImageField:
    """Reverse-time migration of the raw response sampled at tau.

    The double time convolution evaluated at zero lag expands into a sum
    over time pairs (j, k) with j + k inside the recording window, with
    trapezoid weights; the two Green factors contract into a dot product of
    recorded dipole fields through reciprocity.
    """
    if greens is None:
        raise MissingGreens("reference Green fields are required")
    if greens.im_grid is not im_grid and greens.im_grid.nodes.shape != im_grid.nodes.shape:
        raise MissingGreens("Green fields were recorded on a different imaging grid")
    n_times = min(greens.values.shape[0], W.shape[0])
    tau = greens.tau
    G = greens.values
    cols_p = np.arange(p - 1, G.shape[3], 2)
    cols_pp = np.arange(p_prime - 1, G.shape[3], 2)
    vals = np.zeros(im_grid.num_points)
    w = np.ones(n_times)
    w[0] = 0.5
    for j in range(n_times):
        Gj = G[j][:, :, cols_pp]
        for k in range(n_times - j):
            Wjk = W[j + k][np.ix_(cols_pp, cols_p)]
            vals += w[j] * w[k] * np.einsum("yiq,qr,yir->y", Gj, Wjk,
                                            G[k][:, :, cols_p], optimize=True)
    return ImageField(tau ** 2 * vals, im_grid, (p_prime, p), "rtm")


def range_derivative(img: ImageField) -> ImageField:
    """Centered difference along the range axis, one-sided at the edges."""
    V = img.as_matrix()
    h = img.im_grid.spacing
    out = np.empty_like(V)
    out[1:-1] = (V[2:] - V[:-2]) / (2 * h)
    out[0] = (V[1] - V[0]) / h
    out[-1] = (V[-1] - V[-2]) / h
    return ImageField(out.ravel(), img.im_grid, img.pol, img.provenance,
                      img.transforms + ("range_derivative",))


def _distance_to_region(xy, region: Region):
    if region.kind == "rect":
        d1 = np.maximum(np.abs(xy[:, 0] - region.center[0]) - region.half_axes[0], 0.0)
        d2 = np.maximum(np.abs(xy[:, 1] - region.center[1]) - region.half_axes[1], 0.0)
        return np.hypot(d1, d2)
    # ellipse: radial estimate, adequate for the artifact bookkeeping
    d1 = (xy[:, 0] - region.center[0]) / region.half_axes[0]
    d2 = (xy[:, 1] - region.center[1]) / region.half_axes[1]
    r = np.hypot(d1, d2)
    scale = min(region.half_axes)
    return np.maximum(r - 1.0, 0.0) * scale


def peak_to_artifact(img: ImageField, region: Region, lambda_c: float) -> float:
    """Ratio of the image peak near the reflector to the strongest response
    a safe distance below it; the artifact band is where multiple-scattering
    ghosts live."""
    xy = img.im_grid.xy
    dist = _distance_to_region(xy, region)
    near = dist <= 0.5 * lambda_c
    bottom = region.center[0] + region.half_axes[0]
    below = xy[:, 0] >= bottom + 2.0 * lambda_c
    if not near.any() or not below.any():
        raise EmptyRegion("imaging window does not cover the reflector and artifact bands")
    peak = np.max(np.abs(img.values[near]))
    art = np.max(np.abs(img.values[below]))
    if art == 0.0:
        return 1e6
    return min(float(peak / art), 1e6)
