"""Shared orchestration of forward runs.

A Scenario bundles the acquisition geometry (grid, pulse, array, time grid)
and produces synthetic data for any medium with consistent numerical choices
everywhere: the same spectral initial state, the same fine time step, the
same recording stride.  Reference runs during inversion reuse it, which is
what makes residuals vanish identically when the search medium equals the
data medium.

The near-array initial state is cached keyed on the bytes of the subdomain
medium; media that agree near the array (the common case, since the collar
is clamped homogeneous) share the eigendecomposition.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .forward import (
    chebyshev_initial_state,
    ArrayGeometry,
    DataSeries,
    SnapshotSeries,
    build_array,
    cfl_time_step,
    compute_data,
    exact_snapshots,
    initial_snapshot,
    propagate,
    simulate_raw_response,
    transform_response,
)
from .grid import LebedevGrid
from .medium import Collar, MediumField
from .operator import assemble_operator
from .pulse import PulseSpec


@dataclass
class Scenario:
    grid: LebedevGrid
    pulse: PulseSpec
    array: ArrayGeometry
    tau: float
    n: int
    c_o: float = 1.0
    fine_ratio: int = 16          # tau / dt before CFL adjustment
    init_rows: Optional[int] = None   # near-array subdomain rows; None = full grid
    init_margin: Optional[float] = None  # overrides the 2 c_o T_f default
    init_method: str = "spectral"     # spectral (dense eigensolve) | chebyshev
    _u0_cache: dict = field(default_factory=dict, repr=False)

    @property
    def m(self):
        return self.array.m

    def collar(self, width):
        return Collar(width, tuple(map(tuple, self.array.positions)))

    def time_step(self, op):
        dt = self.tau / self.fine_ratio
        dt_max = cfl_time_step(op)
        k = self.fine_ratio
        while dt > dt_max:
            k *= 2
            dt = self.tau / k
        return dt

    def initial_state(self):
        """Spectral initial state, computed once per scenario.

        The construction uses the *known* near-array medium (the homogeneous
        collar reference c_o I) on the subdomain, exactly as when the
        subdomain honors its margin precondition; the unknown medium never
        enters the initial state.  All downstream identities hold for
        whatever initial state is used, as long as it is shared between the
        data and reference pipelines, which caching here guarantees.
        """
        if "u0" not in self._u0_cache:
            from .medium import PhantomSpec, build_medium
            if self.init_method == "chebyshev":
                med = build_medium(PhantomSpec.homogeneous(), self.grid, self.c_o)
                self._u0_cache["u0"] = chebyshev_initial_state(
                    assemble_operator(med), self.array, self.pulse)
                return self._u0_cache["u0"]
            if self.init_rows is None or self.init_rows >= self.grid.n1:
                node_map, sub = None, self.grid
            else:
                sub, node_map = self.grid.subgrid(self.init_rows)
            sub_med = build_medium(PhantomSpec.homogeneous(), sub, self.c_o)
            op_near = assemble_operator(sub_med)
            margin = self.init_margin
            if margin is None:
                margin = sub.extent[0] - self.array.depth  # grid-limited default
            self._u0_cache["u0"] = initial_snapshot(
                op_near, self.array, self.pulse, margin=margin, c_o=self.c_o,
                node_map=node_map, full_grid=self.grid if node_map is not None else None)
        return self._u0_cache["u0"]

    def run(self, medium: MediumField, n_times: Optional[int] = None, method="leapfrog",
            keep_snapshots=False):
        """Forward run returning (DataSeries, SnapshotSeries or None).

        ``n_times`` is the number of recorded instants (default 2n).
        """
        if n_times is None:
            n_times = 2 * self.n
        op = assemble_operator(medium)
        u0 = self.initial_state()
        if method == "leapfrog":
            snaps = propagate(op, u0, self.time_step(op), self.tau, n_times - 1)
        elif method == "exact":
            snaps = exact_snapshots(op, u0, self.tau, n_times - 1)
        else:
            raise ValueError(f"unknown method {method!r}")
        data = compute_data(snaps, u0, self.grid)
        return data, (snaps if keep_snapshots else None)

    def run_raw(self, medium: MediumField, n_times: Optional[int] = None):
        """Raw array response sampled at the fine step, for the transform
        pathway and for migration; returns (W, times)."""
        if n_times is None:
            n_times = 2 * self.n
        op = assemble_operator(medium)
        dt = self.time_step(op)
        t_f = self.pulse.support_time()
        t_start = -np.ceil(t_f / dt) * dt
        t_end = (n_times - 1) * self.tau + t_f
        n_fine = int(np.ceil((t_end - t_start) / dt))
        return simulate_raw_response(op, self.array, self.pulse, dt, t_start, n_fine,
                                     c_o=self.c_o)

    def data_from_raw(self, medium: MediumField, n_times: Optional[int] = None) -> DataSeries:
        if n_times is None:
            n_times = 2 * self.n
        W, times = self.run_raw(medium, n_times)
        return transform_response(W, times, self.pulse, self.tau, n_times // 2, c_o=self.c_o)

    def with_window(self, n_prime):
        """Scenario for layer-peeled inversion on a shorter time window."""
        return replace(self, n=n_prime, _u0_cache=self._u0_cache)


def make_scenario(grid, pulse, tau, n, m, separation, depth=None, c_o=1.0,
                  fine_ratio=16, init_rows=None, init_margin=None,
                  init_method="spectral") -> Scenario:
    array = build_array(grid, m, separation, depth)
    return Scenario(grid, pulse, array, tau, n, c_o, fine_ratio, init_rows, init_margin,
                    init_method)
