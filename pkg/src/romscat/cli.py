"""Command line pipeline: simulate | rom | image | invert | verify.

Every subcommand takes a configuration file; downstream commands read the
artifacts written by earlier ones and refuse to run when they are missing.
All randomized paths are seeded from the configuration, and outputs are
bit-reproducible for a fixed configuration and seed.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import io as rio
from .blocklinalg import block_cholesky
from .config import load_config
from .errors import MissingArtifact, RomscatError
from .forward import add_noise
from .imaging import ImagingGrid, compute_greens, range_derivative, rom_image, rtm_image
from .internal import reference_basis
from .medium import PhantomSpec, build_medium
from .rom import (assemble_mass, assemble_stiffness, build_rom, build_rom_spectral,
                  rank_from_threshold, regularize_boost, verify_interpolation)


def _paths(cfg):
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return {
        "data": os.path.join(out, "data.romd"),
        "raw": os.path.join(out, "response.romw"),
        "rom": os.path.join(out, "rom.romr"),
        "report": os.path.join(out, "rom_report.txt"),
        "log": os.path.join(out, "inversion_log.jsonl"),
    }


def cmd_simulate(cfg, args):
    paths = _paths(cfg)
    sc = cfg.scenario()
    medium = cfg.medium(sc)
    data, _ = sc.run(medium)
    if cfg.noise > 0:
        data = add_noise(data, cfg.noise, cfg.noise_seed + cfg.seed)
    rio.save_dataseries(paths["data"], data)
    print(f"wrote {paths['data']} ({data.num_times} matrices of {2 * data.m}x{2 * data.m})")
    if args.csv:
        rio.dataseries_to_csv(os.path.join(cfg.output_dir, "data.csv"), data)
    if args.raw:
        W, times = sc.run_raw(medium)
        rio.save_response(paths["raw"], W, times[1] - times[0], times[0])
        print(f"wrote {paths['raw']} ({W.shape[0]} fine samples)")
    rio.medium_to_csv(os.path.join(cfg.output_dir, "medium_true.csv"), medium)
    return 0


def _data_side_rom(cfg, data):
    if cfg.reg.method == "boost":
        data = regularize_boost(data, cfg.reg.alpha)
    M = assemble_mass(data)
    S = assemble_stiffness(data)
    if cfg.reg.method == "spectral":
        r = cfg.reg.order or rank_from_threshold(M, cfg.reg.threshold)
        return build_rom_spectral(M, S, data.m, data.tau, r, cfg.reg.threshold), data
    return build_rom(M, S, data.m, data.tau, cfg.reg), data


def cmd_rom(cfg, args):
    paths = _paths(cfg)
    if not os.path.exists(paths["data"]):
        raise MissingArtifact(f"{paths['data']} not found; run simulate first")
    data = rio.load_dataseries(paths["data"])
    rom, data_used = _data_side_rom(cfg, data)
    rio.save_rom(paths["rom"], rom)
    report = verify_interpolation(rom, data_used)
    with open(paths["report"], "w") as f:
        f.write(str(report) + "\n")
    print(f"wrote {paths['rom']}")
    print(report)
    return 0


def cmd_image(cfg, args):
    paths = _paths(cfg)
    for need in ("data",):
        if not os.path.exists(paths[need]):
            raise MissingArtifact(f"{paths[need]} not found; run simulate first")
    sc = cfg.scenario()
    data = rio.load_dataseries(paths["data"])
    rom, _ = _data_side_rom(cfg, data)
    grid = sc.grid
    im = cfg.imaging_grid(grid)
    reference = build_medium(PhantomSpec.homogeneous(), grid, cfg.c_o)
    basis = reference_basis(reference, sc, reg=rom.reg)
    pols = cfg.imaging["polarizations"]
    for code in pols:
        pp, p = divmod(code, 10)
        img = rom_image(basis, rom.R, p, pp, im).normalized()
        stem = os.path.join(cfg.output_dir, f"image_rom_p{pp}{p}")
        rio.image_to_csv(stem + ".csv", img)
        rio.write_pgm(stem + ".pgm", img.as_matrix())
        d = range_derivative(img).normalized()
        rio.image_to_csv(stem + "_range_deriv.csv", d)
        rio.write_pgm(stem + "_range_deriv.pgm", d.as_matrix())
        print(f"wrote {stem}.csv/.pgm")
    if cfg.imaging["rtm"]:
        if not os.path.exists(paths["raw"]):
            raise MissingArtifact(
                "migration needs the raw response; run simulate --raw (the transformed "
                "data series alone is not a substitute)")
        W, dt, t_start = rio.load_response(paths["raw"])
        stride = int(round(cfg.tau / dt))
        idx0 = int(round(-t_start / dt))
        W_tau = W[idx0::stride][:data.num_times]
        greens = compute_greens(sc, reference, im)
        for code in pols:
            pp, p = divmod(code, 10)
            img = rtm_image(W_tau, greens, im, p, pp).normalized()
            stem = os.path.join(cfg.output_dir, f"image_rtm_p{pp}{p}")
            rio.image_to_csv(stem + ".csv", img)
            rio.write_pgm(stem + ".pgm", img.as_matrix())
            print(f"wrote {stem}.csv/.pgm")
    return 0


def cmd_invert(cfg, args):
    paths = _paths(cfg)
    if not os.path.exists(paths["data"]):
        raise MissingArtifact(f"{paths['data']} not found; run simulate first")
    from .inversion import invert
    sc = cfg.scenario()
    data = rio.load_dataseries(paths["data"])
    param = cfg.parametrization(sc.grid)
    inv_cfg = cfg.inversion_config()
    if args.objective:
        inv_cfg.objective = args.objective
    if args.max_iterations:
        inv_cfg.max_iterations = args.max_iterations
    if args.fd_step:
        inv_cfg.fd_step = args.fd_step
    if args.nu_fraction:
        inv_cfg.nu_rule = type(inv_cfg.nu_rule)(args.nu_fraction,
                                                inv_cfg.nu_rule.use_unknowns)
    if args.schedule:
        inv_cfg.schedule = tuple(int(x) for x in args.schedule.split(","))
    result = invert(data, inv_cfg, param, sc, collar=cfg.collar(sc))
    with open(paths["log"], "w") as f:
        for rec in result.log:
            f.write(json.dumps(rec.as_dict()) + "\n")
    rio.medium_to_csv(os.path.join(cfg.output_dir, "medium_estimate.csv"), result.medium)
    c = result.medium.c
    shape = (sc.grid.n1, sc.grid.n2)
    na = sc.grid.num_nodes_a
    for k, name in enumerate(("c11", "c22", "c12")):
        rio.write_pgm(os.path.join(cfg.output_dir, f"medium_estimate_{name}.pgm"),
                      c[:na, k].reshape(shape))
    status = "converged" if result.converged else "not converged (best iterate returned)"
    print(f"inversion {status}; final objective {result.final_objective:.6e}")
    print(f"wrote {paths['log']} and medium_estimate artifacts")
    return 0 if result.converged else 3


def cmd_verify(cfg, args):
    from .verify import run_suite
    return 0 if run_suite() else 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="romscat",
                                     description="ROM-based inverse wave scattering pipeline")
    parser.add_argument("command", choices=["simulate", "rom", "image", "invert", "verify"])
    parser.add_argument("-c", "--config", required=True, help="configuration file")
    parser.add_argument("--raw", action="store_true",
                        help="simulate: also store the raw response series")
    parser.add_argument("--csv", action="store_true",
                        help="simulate: also dump the data series as CSV")
    parser.add_argument("--objective", choices=["rom", "fwi"], default=None)
    parser.add_argument("--max-iterations", type=int, default=None, dest="max_iterations")
    parser.add_argument("--fd-step", type=float, default=None, dest="fd_step")
    parser.add_argument("--nu-fraction", type=float, default=None, dest="nu_fraction")
    parser.add_argument("--schedule", default=None,
                        help="comma-separated increasing window sizes for layer peeling")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        handler = {"simulate": cmd_simulate, "rom": cmd_rom, "image": cmd_image,
                   "invert": cmd_invert, "verify": cmd_verify}[args.command]
        return handler(cfg, args)
    except RomscatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
