"""Staggered (Lebedev) grid geometry.

The grid is a pair of interleaved square lattices ("families") offset by half
a step in both coordinates.  Both vector components are collocated at every
node of each family, so multiplication by a full 2x2 tensor is a local
product.  Each family owns a dual set of scalar nodes at its cell centers,
which geometrically coincide with the other family's vector nodes.

Conventions, fixed once and used everywhere:

* coordinates ``x1`` (range, pointing down from the top boundary) and ``x2``
  (cross-range);
* family A nodes at ``(i1*l, i2*l)`` for ``i1 < n1``, ``i2 < n2``, enumerated
  row-major (``i1`` major); family B nodes at ``((i1+1/2)*l, (i2+1/2)*l)``
  for ``i1 < n1-1``, ``i2 < n2-1``, row-major, appended after family A;
* degree of freedom ``2*node + component``;
* quadrature weight ``l**2 / 2`` per node per family (the two families tile
  the domain twice).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimension


@dataclass(frozen=True)
class LebedevGrid:
    n1: int
    n2: int
    ell: float
    _xy: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n1 < 8 or self.n2 < 8:
            raise InvalidDimension(f"grid must be at least 8x8, got {self.n1}x{self.n2}")
        if self.ell <= 0:
            raise InvalidDimension("spacing must be positive")
        i1, i2 = np.meshgrid(np.arange(self.n1), np.arange(self.n2), indexing="ij")
        xy_a = np.column_stack([i1.ravel(), i2.ravel()]) * self.ell
        j1, j2 = np.meshgrid(np.arange(self.n1 - 1), np.arange(self.n2 - 1), indexing="ij")
        xy_b = (np.column_stack([j1.ravel(), j2.ravel()]) + 0.5) * self.ell
        object.__setattr__(self, "_xy", np.vstack([xy_a, xy_b]))

    @property
    def num_nodes_a(self):
        return self.n1 * self.n2

    @property
    def num_nodes_b(self):
        return (self.n1 - 1) * (self.n2 - 1)

    @property
    def num_nodes(self):
        return self.num_nodes_a + self.num_nodes_b

    @property
    def num_dof(self):
        return 2 * self.num_nodes

    @property
    def node_weight(self):
        return 0.5 * self.ell ** 2

    @property
    def extent(self):
        """Bounding box side lengths of family A, ((n1-1)*l, (n2-1)*l)."""
        return ((self.n1 - 1) * self.ell, (self.n2 - 1) * self.ell)

    @property
    def node_xy(self):
        return self._xy

    def node_a(self, i1, i2):
        return i1 * self.n2 + i2

    def node_b(self, i1, i2):
        return self.num_nodes_a + i1 * (self.n2 - 1) + i2

    def dof(self, node, comp):
        return 2 * node + comp

    @property
    def family_a_dofs(self):
        return np.arange(2 * self.num_nodes_a)

    @property
    def family_b_dofs(self):
        return np.arange(2 * self.num_nodes_a, self.num_dof)

    def nearest_node_a(self, x):
        """Index of the family-A node closest to the point ``x``."""
        i1 = int(np.clip(round(x[0] / self.ell), 0, self.n1 - 1))
        i2 = int(np.clip(round(x[1] / self.ell), 0, self.n2 - 1))
        return self.node_a(i1, i2)

    def boundary_distance(self, xy=None):
        """Distance of points to the rectangle boundary (family-A hull)."""
        if xy is None:
            xy = self._xy
        L1, L2 = self.extent
        d1 = np.minimum(xy[:, 0], L1 - xy[:, 0])
        d2 = np.minimum(xy[:, 1], L2 - xy[:, 1])
        return np.minimum(d1, d2)

    def subgrid(self, n1_sub):
        """Shallow sub-grid made of the first ``n1_sub`` node rows.

        Used for the near-array spectral initial condition.  Returns the
        sub-grid together with the index arrays mapping its nodes into this
        grid's node numbering.
        """
        if n1_sub > self.n1:
            n1_sub = self.n1
        sub = LebedevGrid(n1_sub, self.n2, self.ell)
        map_a = np.arange(sub.num_nodes_a)  # same row-major layout, rows 0..n1_sub-1
        rows_b = np.arange(sub.num_nodes_b).reshape(n1_sub - 1, self.n2 - 1)
        map_b = self.num_nodes_a + rows_b.ravel()
        node_map = np.concatenate([map_a, map_b])
        return sub, node_map


def dof_map(node_map):
    """Expand a node index map into the matching DOF index map."""
    return np.column_stack([2 * node_map, 2 * node_map + 1]).ravel()
