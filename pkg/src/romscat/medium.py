"""Phantom media: piecewise constant 2x2 SPD wave-speed tensor fields.

The tensor field is stored compactly as three values per node (c11, c22,
c12); the off-diagonal entry is stored once, so c12 == c21 holds exactly.
Rasterization is nearest-node with no anti-aliasing: a node carries a region
value iff its center lies inside the region.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonSPDContrast, RegionOutsideDomain
from .grid import LebedevGrid


def _is_spd_tensor(c):
    c11, c22, c12 = c
    return c11 > 0 and c22 > 0 and c11 * c22 - c12 * c12 > 0


@dataclass(frozen=True)
class Region:
    """Axis-aligned primitive carrying one speed tensor (units of c_o)."""

    kind: str                 # "rect" | "ellipse"
    center: tuple             # (x1, x2) in length units
    half_axes: tuple          # (h1, h2) in length units
    speed: tuple              # (c11, c22, c12) relative to c_o

    def contains(self, xy):
        d1 = xy[:, 0] - self.center[0]
        d2 = xy[:, 1] - self.center[1]
        if self.kind == "rect":
            return (np.abs(d1) <= self.half_axes[0]) & (np.abs(d2) <= self.half_axes[1])
        if self.kind == "ellipse":
            return (d1 / self.half_axes[0]) ** 2 + (d2 / self.half_axes[1]) ** 2 <= 1.0
        raise ValueError(f"unknown region kind {self.kind!r}")

    def bounds(self):
        c1, c2 = self.center
        h1, h2 = self.half_axes
        return (c1 - h1, c1 + h1, c2 - h2, c2 + h2)


@dataclass(frozen=True)
class PhantomSpec:
    """Named phantom with geometry given in units of lambda_c."""

    variant: str
    regions: tuple = ()
    raster: Optional[np.ndarray] = None   # custom-raster: (num_nodes, 3) in c_o units
    reflector_index: int = 0

    VARIANTS = ("homogeneous", "crack", "multi-crack", "aniso-inclusions",
                "rectangle-inclusion", "custom-raster")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown phantom variant {self.variant!r}")

    @property
    def reflector(self):
        if not self.regions:
            raise ValueError("phantom has no regions")
        return self.regions[self.reflector_index]

    def resolved_regions(self, grid):
        return tuple(_resolve_center(r, grid) for r in self.regions)

    def resolved_reflector(self, grid):
        return _resolve_center(self.reflector, grid)

    @staticmethod
    def homogeneous():
        return PhantomSpec("homogeneous")

    @staticmethod
    def crack(lambda_c, depth, cross=0.5, length=1.5, thickness=0.15, speed=(0.5, 0.5, 0.0)):
        """Thin horizontal bar.  depth/length/thickness in lambda_c units,
        cross is the fractional cross-range position of the bar center."""
        return PhantomSpec("crack", (_bar(lambda_c, depth, cross, length, thickness, speed),))

    @staticmethod
    def multi_crack(lambda_c, bars):
        """bars: iterable of (depth, cross, length, thickness, speed)."""
        regions = tuple(_bar(lambda_c, *b) for b in bars)
        return PhantomSpec("multi-crack", regions)

    @staticmethod
    def aniso_inclusions(lambda_c, inclusions):
        """inclusions: iterable of (center1, center2, h1, h2, speed) in lambda_c."""
        regions = tuple(
            Region("ellipse", (c1 * lambda_c, c2 * lambda_c),
                   (h1 * lambda_c, h2 * lambda_c), tuple(speed))
            for c1, c2, h1, h2, speed in inclusions)
        return PhantomSpec("aniso-inclusions", regions)

    @staticmethod
    def rectangle_inclusion(lambda_c, center, half_axes, speed):
        region = Region("rect", (center[0] * lambda_c, center[1] * lambda_c),
                        (half_axes[0] * lambda_c, half_axes[1] * lambda_c), tuple(speed))
        return PhantomSpec("rectangle-inclusion", (region,))

    @staticmethod
    def custom_raster(values):
        return PhantomSpec("custom-raster", raster=np.asarray(values, dtype=float))


def _bar(lambda_c, depth, cross, length, thickness, speed):
    # cross in [0, 1] is a fraction of the cross-range extent, resolved
    # against the grid in build_medium via the ("frac", value) sentinel
    return Region("rect", (depth * lambda_c, ("frac", cross)),
                  (0.5 * thickness * lambda_c, 0.5 * length * lambda_c), tuple(speed))


@dataclass(frozen=True)
class Collar:
    """Homogeneous exclusion zone: a boundary layer plus a disk around every
    antenna, each of the given width."""

    width: float
    antenna_xy: tuple = ()

    def mask(self, grid: LebedevGrid, xy=None):
        if xy is None:
            xy = grid.node_xy
        inside = grid.boundary_distance(xy) < self.width
        for pos in self.antenna_xy:
            d = np.hypot(xy[:, 0] - pos[0], xy[:, 1] - pos[1])
            inside |= d < self.width
        return inside


@dataclass(frozen=True)
class MediumField:
    """Per-node 2x2 SPD wave speed tensor on a Lebedev grid."""

    grid: LebedevGrid
    c: np.ndarray          # (num_nodes, 3): c11, c22, c12
    c_o: float

    def __post_init__(self):
        if self.c.shape != (self.grid.num_nodes, 3):
            raise ValueError("tensor array shape does not match grid")
        det = self.c[:, 0] * self.c[:, 1] - self.c[:, 2] ** 2
        if np.any(self.c[:, 0] <= 0) or np.any(det <= 0):
            raise NonSPDContrast("wave speed tensor not SPD at some node")

    def tensor(self, node):
        c11, c22, c12 = self.c[node]
        return np.array([[c11, c12], [c12, c22]])

    @property
    def tensors(self):
        """(num_nodes, 2, 2) view of the field."""
        t = np.empty((self.grid.num_nodes, 2, 2))
        t[:, 0, 0] = self.c[:, 0]
        t[:, 1, 1] = self.c[:, 1]
        t[:, 0, 1] = t[:, 1, 0] = self.c[:, 2]
        return t

    def is_homogeneous(self):
        ref = np.array([self.c_o, self.c_o, 0.0])
        return np.allclose(self.c, ref, rtol=0, atol=1e-14 * self.c_o)

    def max_deviation(self):
        ref = np.array([self.c_o, self.c_o, 0.0])
        return float(np.max(np.abs(self.c - ref)))

    def restrict(self, node_map, subgrid):
        return MediumField(subgrid, self.c[node_map].copy(), self.c_o)

    def permittivity(self, mu_o=1.0):
        """epsilon = (mu_o)^-1 c^-2 per node, returned as (num_nodes, 3)."""
        inv2 = np.linalg.inv(self.tensors)
        eps = np.einsum("nij,njk->nik", inv2, inv2) / mu_o
        return np.column_stack([eps[:, 0, 0], eps[:, 1, 1], eps[:, 0, 1]])


def _resolve_center(region, grid):
    c1, c2 = region.center
    if isinstance(c2, tuple) and c2[0] == "frac":
        c2 = c2[1] * grid.extent[1]
    return Region(region.kind, (c1, c2), region.half_axes, region.speed)


def build_medium(spec: PhantomSpec, grid: LebedevGrid, c_o: float,
                 collar: Optional[Collar] = None) -> MediumField:
    """Rasterize a phantom onto the grid.

    Raises NonSPDContrast for invalid region tensors and RegionOutsideDomain
    when a region leaves the computational rectangle or intrudes into the
    homogeneous collar.
    """
    c = np.tile([c_o, c_o, 0.0], (grid.num_nodes, 1))
    if spec.variant == "custom-raster":
        if spec.raster.shape != (grid.num_nodes, 3):
            raise RegionOutsideDomain("custom raster does not match the grid")
        field = MediumField(grid, np.ascontiguousarray(spec.raster * c_o), c_o)
        _check_collar(field, collar)
        return field

    xy = grid.node_xy
    L1, L2 = grid.extent
    collar_mask = collar.mask(grid) if collar is not None else None
    for region in spec.regions:
        region = _resolve_center(region, grid)
        if not _is_spd_tensor(region.speed):
            raise NonSPDContrast(f"region speed tensor {region.speed} is not SPD")
        lo1, hi1, lo2, hi2 = region.bounds()
        if lo1 < 0 or hi1 > L1 or lo2 < 0 or hi2 > L2:
            raise RegionOutsideDomain(f"region bounds {region.bounds()} leave the domain")
        inside = region.contains(xy)
        if collar_mask is not None and np.any(inside & collar_mask):
            raise RegionOutsideDomain("region intrudes into the homogeneous collar")
        c[inside] = np.array(region.speed) * c_o
    return MediumField(grid, c, c_o)


def _check_collar(field, collar):
    if collar is None:
        return
    mask = collar.mask(field.grid)
    ref = np.array([field.c_o, field.c_o, 0.0])
    if not np.allclose(field.c[mask], ref, rtol=0, atol=1e-12 * field.c_o):
        raise RegionOutsideDomain("medium is heterogeneous inside the collar")


def medium_from_tensors(grid, tensors, c_o, collar=None, clamp=True):
    """Medium from a (num_nodes, 3) tensor field, e.g. an inversion iterate.

    With ``clamp`` the collar zone is overwritten with c_o * I so the
    homogeneity invariant holds by construction.
    """
    c = np.array(tensors, dtype=float)
    if collar is not None and clamp:
        mask = collar.mask(grid)
        c[mask] = [c_o, c_o, 0.0]
    field = MediumField(grid, c, c_o)
    if collar is not None and not clamp:
        _check_collar(field, collar)
    return field
