"""Fast invariant suite behind the ``verify`` CLI subcommand.

Runs a curated set of end-to-end checks at small scale and prints one
pass/fail row per item.  Meant as a smoke test of a checkout, not as the
full acceptance suite (that lives in the test tree).
"""

import os
import tempfile

import numpy as np

from .blocklinalg import block_cholesky, block_lanczos, spd_sqrt
from .forward import add_noise, compute_data, exact_snapshots
from .grid import LebedevGrid
from .io import load_dataseries, load_rom, save_dataseries, save_rom
from .medium import PhantomSpec, build_medium
from .operator import assemble_operator
from .pipeline import make_scenario
from .pulse import default_pulse
from .rom import assemble_mass, assemble_stiffness, build_rom, verify_interpolation


def _random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.geomspace(1.0, cond, n)
    return (Q * lam) @ Q.T


def run_suite(report=print):
    """Returns True when every item passes."""
    rng = np.random.default_rng(0)
    items = []

    def check(name, value, bound):
        items.append((name, value, bound, value <= bound))

    M = _random_spd(rng, 8, cond=100.0)
    S = spd_sqrt(M)
    check("spd_sqrt multiply-back", np.linalg.norm(S @ S - M) / np.linalg.norm(M), 1e-12)

    R = block_cholesky(M, 2)
    check("block Cholesky R^T R = M",
          np.linalg.norm(R.data.T @ R.data - M) / np.linalg.norm(M), 1e-11)

    B = rng.standard_normal((8, 8))
    Pi = 0.5 * (B + B.T)
    B0 = np.zeros((8, 2))
    B0[:2, :2] = np.eye(2)
    _, T = block_lanczos(Pi, 2, B0)
    ev = np.sort(np.linalg.eigvalsh(T)) - np.sort(np.linalg.eigvalsh(Pi))
    check("block Lanczos eigenvalue preservation",
          np.linalg.norm(ev) / np.linalg.norm(np.linalg.eigvalsh(Pi)), 1e-9)

    pulse = default_pulse(2 * np.pi / 26.7)
    check("pulse spectrum vanishes at zero", abs(pulse.spectrum(0.0)), 0.0)
    w = rng.uniform(0, 2 * pulse.omega_c, 16)
    check("pulse spectrum evenness",
          float(np.max(np.abs(pulse.spectrum(w) - pulse.spectrum(-w)))), 0.0)

    grid = LebedevGrid(36, 24, 1.0)
    medium = build_medium(PhantomSpec.homogeneous(), grid, 1.0)
    op = assemble_operator(medium)
    check("operator symmetry", (op.matrix - op.matrix.T).nnz, 0)

    sc = make_scenario(grid, pulse, 0.45 * np.pi / pulse.omega_c, n=5, m=2,
                       separation=8.0, init_margin=10.0)
    u0 = sc.initial_state()
    snaps = exact_snapshots(op, u0, sc.tau, 2 * sc.n - 1)
    data = compute_data(snaps, u0, grid)
    check("data reciprocity", data.symmetry_defect(), 1e-10)

    M_data = assemble_mass(data)
    S_data = assemble_stiffness(data)
    b = 2 * sc.m
    U = [snaps.values[j] for j in range(sc.n)]
    brute = np.block([[grid.node_weight * (U[j].T @ U[l]) for l in range(sc.n)]
                      for j in range(sc.n)])
    check("mass matrix equals snapshot Gram",
          np.linalg.norm(M_data.data - brute) / np.linalg.norm(brute), 1e-9)

    rom = build_rom(M_data, S_data, sc.m, sc.tau)
    rep = verify_interpolation(rom, data)
    check("ROM data interpolation", rep.max_residual, 1e-8)
    check("ROM propagator block tridiagonal", rep.off_tridiagonal, 1e-8)
    eigs = np.linalg.eigvalsh(rom.P.data)
    check("ROM propagator spectrum in [-1, 1]", float(max(eigs.max() - 1.0, -1.0 - eigs.min(), 0.0)),
          1e-8)

    noisy = add_noise(data, 1e-3, seed=7)
    again = add_noise(data, 1e-3, seed=7)
    check("noise determinism", float(np.max(np.abs(noisy.matrices - again.matrices))), 0.0)

    with tempfile.TemporaryDirectory() as tmp:
        dpath = os.path.join(tmp, "d.romd")
        save_dataseries(dpath, data)
        back = load_dataseries(dpath)
        check("data series round-trip", float(np.max(np.abs(back.matrices - data.matrices))), 0.0)
        rpath = os.path.join(tmp, "r.romr")
        save_rom(rpath, rom)
        rom2 = load_rom(rpath)
        check("ROM round-trip", float(np.max(np.abs(rom2.R.data - rom.R.data))), 0.0)

    width = max(len(name) for name, *_ in items)
    ok_all = True
    for name, value, bound, ok in items:
        ok_all &= ok
        report(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  value={value:.3e}  bound={bound:.1e}")
    return ok_all
