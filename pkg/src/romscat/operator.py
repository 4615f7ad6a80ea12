"""Assembly of the discrete wave operator on the Lebedev grid.

The operator acts on the transformed field and discretizes
``psi -> -c grad_perp[ div_perp (c psi) ]`` as the congruence

    A = C^T L^T L C,

where ``C`` is block-diagonal pointwise multiplication by the 2x2 tensor
c(x), and ``L`` is the second-order centered rotated-divergence stencil
mapping each family's vector nodes to that family's dual scalar nodes (the
cell centers).  The uniform quadrature weight l^2/2 on vector and scalar
nodes cancels in the congruence, so A is dimensionally the square of an
inverse time.  Symmetry is exact by construction; positive semidefiniteness
follows from the product form.

The perfectly conducting boundary pins the tangential component of c*psi at
boundary nodes (zero tangential electric field); it is imposed by omitting
those entries from the stencil rows, which is equivalent to evolving a state
whose constrained entries are zero.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import LebedevGrid
from .medium import MediumField


def _family_divergence(n1, n2, ell, node_offset, pinned):
    """Stencil rows for one family: (n1-1)*(n2-1) dual nodes.

    ``pinned`` is a boolean (num_family_nodes, 2) array marking tangential
    boundary DOFs whose coefficients are omitted.
    """
    rows, cols, vals = [], [], []
    h = 1.0 / (2.0 * ell)
    dual = 0
    for i1 in range(n1 - 1):
        for i2 in range(n2 - 1):
            corners = ((i1, i2), (i1 + 1, i2), (i1, i2 + 1), (i1 + 1, i2 + 1))
            # div_perp g = -d(g1)/dx2 + d(g2)/dx1, averaged-centered at the cell center
            for (j1, j2) in corners:
                node = j1 * n2 + j2
                s1 = 1.0 if j2 == i2 + 1 else -1.0    # sign of the x2 difference
                s2 = 1.0 if j1 == i1 + 1 else -1.0    # sign of the x1 difference
                if not pinned[node, 0]:
                    rows.append(dual)
                    cols.append(2 * (node_offset + node))
                    vals.append(-s1 * h)
                if not pinned[node, 1]:
                    rows.append(dual)
                    cols.append(2 * (node_offset + node) + 1)
                    vals.append(s2 * h)
            dual += 1
    return rows, cols, vals, dual


def _pinned_a(n1, n2):
    """Tangential boundary DOFs of family A (the only family with nodes on
    the boundary): component 2 on the top/bottom edges, component 1 on the
    left/right edges."""
    pinned = np.zeros((n1 * n2, 2), dtype=bool)
    idx = np.arange(n1 * n2).reshape(n1, n2)
    pinned[idx[0, :], 1] = True
    pinned[idx[-1, :], 1] = True
    pinned[idx[:, 0], 0] = True
    pinned[idx[:, -1], 0] = True
    return pinned


def build_divergence(grid: LebedevGrid) -> sp.csr_matrix:
    """Sparse rotated-divergence L with boundary elimination applied."""
    n1, n2, ell = grid.n1, grid.n2, grid.ell
    ra, ca, va, na = _family_divergence(n1, n2, ell, 0, _pinned_a(n1, n2))
    pinned_b = np.zeros(((n1 - 1) * (n2 - 1), 2), dtype=bool)  # family B never touches the boundary
    rb, cb, vb, nb = _family_divergence(n1 - 1, n2 - 1, ell, grid.num_nodes_a, pinned_b)
    rows = np.concatenate([ra, na + np.asarray(rb)]) if rb else np.asarray(ra)
    cols = np.concatenate([ca, cb]) if cb else np.asarray(ca)
    vals = np.concatenate([va, vb]) if vb else np.asarray(va)
    L = sp.coo_matrix((vals, (rows, cols)), shape=(na + nb, grid.num_dof))
    return L.tocsr()


def build_multiplier(medium: MediumField) -> sp.csr_matrix:
    """Block-diagonal pointwise multiplication by the 2x2 tensor c(x)."""
    n = medium.grid.num_nodes
    c11, c22, c12 = medium.c[:, 0], medium.c[:, 1], medium.c[:, 2]
    even = 2 * np.arange(n)
    rows = np.concatenate([even, even, even + 1, even + 1])
    cols = np.concatenate([even, even + 1, even, even + 1])
    vals = np.concatenate([c11, c12, c12, c22])
    return sp.coo_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n)).tocsr()


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse symmetric PSD operator with its grid and quadrature weight."""

    matrix: sp.csr_matrix
    grid: LebedevGrid
    weight: float

    @property
    def shape(self):
        return self.matrix.shape

    def family_blocks(self):
        """The two diagonal blocks of A in the family ordering.

        The divergence stencil of each family writes only to that family's
        dual scalar nodes, so A never couples the families; the blocks are
        exact, not an approximation.
        """
        na = 2 * self.grid.num_nodes_a
        return self.matrix[:na, :na], self.matrix[na:, na:]


def assemble_operator(medium: MediumField) -> DiscreteOperator:
    grid = medium.grid
    K = build_divergence(grid) @ build_multiplier(medium)
    A = (K.T @ K).tocsr()
    A = (A + A.T) * 0.5  # commutative mean: transpose is bit-identical
    return DiscreteOperator(A.tocsr(), grid, grid.node_weight)


def estimate_lambda_max(op: DiscreteOperator, n_iter=100, seed=0):
    """Power iteration estimate of the largest eigenvalue, slightly inflated
    to stay on the safe side of the CFL bound."""
    rng = np.random.default_rng(seed)
    A = op.matrix
    x = rng.standard_normal(A.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(n_iter):
        y = A @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        lam = float(x @ y)
        x = y / ny
    return 1.01 * lam
