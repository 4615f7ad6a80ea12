import numpy as np
import pytest

from romscat.grid import LebedevGrid
from romscat.medium import PhantomSpec, build_medium
from romscat.pipeline import make_scenario
from romscat.pulse import default_pulse
from romscat.rom import assemble_mass, assemble_stiffness, build_rom

DESK_OMEGA_O = 2 * np.pi / 26.7


@pytest.fixture(scope="session")
def desk_run():
    """Desk-scale acceptance setup: 100x50 nodes per family, m = 5, n = 20,
    noise free, crack phantom, default imaging time step."""
    pulse = default_pulse(DESK_OMEGA_O)
    tau = 0.3 * np.pi / pulse.omega_c
    grid = LebedevGrid(100, 50, 1.0)
    sc = make_scenario(grid, pulse, tau, n=20, m=5, separation=8.0, init_rows=44)
    lam_c = pulse.lambda_c()
    spec = PhantomSpec.crack(lam_c, depth=2.0, cross=0.5, length=1.2, thickness=0.15,
                             speed=(0.6, 0.6, 0.0))
    truth = build_medium(spec, grid, 1.0, collar=sc.collar(11.0))
    data, snaps = sc.run(truth, keep_snapshots=True)
    rom = build_rom(assemble_mass(data), assemble_stiffness(data), sc.m, sc.tau)
    return {
        "scenario": sc, "grid": grid, "pulse": pulse, "phantom": spec,
        "truth": truth, "data": data, "snapshots": snaps, "rom": rom,
    }
