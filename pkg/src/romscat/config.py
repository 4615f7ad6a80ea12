"""Experiment configuration: a flat sectioned key-value text format.

Grammar (documented here and in the README):

* ``[section]`` headers; known sections are grid, pulse, array, rom, medium,
  imaging, inversion, io;
* ``key = value`` entries; values are numbers, words, or space-separated
  lists; ``#`` starts a comment; blank lines are ignored;
* unknown sections or keys are hard errors, as are missing required keys.

Internally lengths are in units of the grid step and speeds in units of the
reference speed (both default to one); phantom geometry is given in units of
the cut-off wavelength lambda_c.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ParseError, ValidationError
from .grid import LebedevGrid
from .medium import Collar, PhantomSpec, Region, build_medium
from .pipeline import Scenario, make_scenario
from .pulse import PulseSpec, default_pulse
from .rom import RegRecord
from .inversion import InversionConfig, NuRule, Parametrization, lattice_parametrization

_KNOWN = {
    "grid": {"n1", "n2", "spacing"},
    "pulse": {"omega_o", "omega_b", "lambda_o"},
    "array": {"m", "separation", "depth", "noise", "noise_seed"},
    "rom": {"n", "tau", "fine_ratio", "regularization", "boost_alpha",
            "spectral_threshold", "spectral_rank", "init_rows", "init_method"},
    "medium": {"phantom", "collar_width", "c_o", "raster_file",
               "region1", "region2", "region3", "region4", "reflector"},
    "imaging": {"row_start", "row_stop", "col_start", "col_stop", "step",
                "polarizations", "rtm"},
    "inversion": {"objective", "x1_min", "x1_max", "x2_min", "x2_max",
                  "spacing1", "spacing2", "fd_step", "max_iterations",
                  "tol_decrease", "nu_fraction", "nu_base", "schedule"},
    "io": {"output_dir", "seed"},
}

_REQUIRED = {"grid": {"n1", "n2"}, "array": {"m", "separation"}, "rom": {"n"}}


def _tokenize(text):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(lineno, f"malformed section header {raw.strip()!r}")
            name = line[1:-1].strip()
            if name not in _KNOWN:
                raise ParseError(lineno, f"unknown section [{name}]")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ParseError(lineno, "key outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        sec_name = [k for k, v in sections.items() if v is current][0]
        if key not in _KNOWN[sec_name]:
            raise ParseError(lineno, f"unknown key {key!r} in section [{sec_name}]")
        if key in current:
            raise ParseError(lineno, f"duplicate key {key!r}")
        current[key] = (value, lineno)
    return sections


def _get(sections, sec, key, conv, default=None, required=False):
    entry = sections.get(sec, {}).get(key)
    if entry is None:
        if required:
            raise ValidationError(f"missing required key {key!r} in section [{sec}]")
        return default
    value, lineno = entry
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ParseError(lineno, f"bad value for {key!r}: {exc}") from exc


def _bool(s):
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"expected boolean, got {s!r}")


def _floats(s):
    return tuple(float(x) for x in s.split())


def _ints(s):
    return tuple(int(x) for x in s.split())


@dataclass
class ExperimentConfig:
    n1: int
    n2: int
    spacing: float
    pulse: PulseSpec
    m: int
    separation: float
    depth: Optional[float]
    noise: float
    noise_seed: int
    n: int
    tau: float
    fine_ratio: int
    reg: RegRecord
    init_rows: Optional[int]
    init_method: str
    phantom: PhantomSpec
    collar_width: Optional[float]
    c_o: float
    imaging: Optional[dict]
    inversion: Optional[dict]
    output_dir: str
    seed: int

    @property
    def lambda_c(self):
        return self.pulse.lambda_c(self.c_o)

    def grid(self) -> LebedevGrid:
        return LebedevGrid(self.n1, self.n2, self.spacing)

    def scenario(self) -> Scenario:
        return make_scenario(self.grid(), self.pulse, self.tau, self.n, self.m,
                             self.separation, self.depth, self.c_o, self.fine_ratio,
                             self.init_rows, init_method=self.init_method)

    def collar(self, scenario) -> Collar:
        width = self.collar_width
        if width is None:
            width = 2.0 * self.c_o * self.pulse.support_time()
        return scenario.collar(width)

    def medium(self, scenario):
        return build_medium(self.phantom, scenario.grid, self.c_o,
                            collar=self.collar(scenario))

    def imaging_grid(self, grid):
        if self.imaging is None:
            raise ValidationError("config has no [imaging] section")
        im = self.imaging
        from .imaging import ImagingGrid
        return ImagingGrid(grid, (im["row_start"], im["row_stop"]),
                           (im["col_start"], im["col_stop"]), im["step"])

    def parametrization(self, grid) -> Parametrization:
        if self.inversion is None:
            raise ValidationError("config has no [inversion] section")
        inv = self.inversion
        return lattice_parametrization(
            grid, self.lambda_c, (inv["x1_min"], inv["x1_max"]),
            (inv["x2_min"], inv["x2_max"]), self.c_o,
            inv.get("spacing1"), inv.get("spacing2"))

    def inversion_config(self) -> InversionConfig:
        inv = self.inversion or {}
        return InversionConfig(
            objective=inv.get("objective", "rom"),
            fd_step=inv.get("fd_step"),
            max_iterations=inv.get("max_iterations", 30),
            tol_decrease=inv.get("tol_decrease", 1e-4),
            nu_rule=NuRule(inv.get("nu_fraction", 0.9),
                           inv.get("nu_base", "basis") == "unknowns"),
            schedule=inv.get("schedule"),
            reg=self.reg)


def _parse_regions(sections, lambda_c):
    regions = []
    for key in ("region1", "region2", "region3", "region4"):
        entry = sections.get("medium", {}).get(key)
        if entry is None:
            continue
        value, lineno = entry
        parts = value.split()
        if len(parts) != 8 or parts[0] not in ("rect", "ellipse"):
            raise ParseError(lineno, "region format: kind c1 c2 h1 h2 c11 c22 c12")
        kind = parts[0]
        nums = [float(p) for p in parts[1:]]
        regions.append(Region(kind, (nums[0] * lambda_c, nums[1] * lambda_c),
                              (nums[2] * lambda_c, nums[3] * lambda_c),
                              (nums[4], nums[5], nums[6])))
    return tuple(regions)


def parse_config(text: str) -> ExperimentConfig:
    sections = _tokenize(text)
    for sec, keys in _REQUIRED.items():
        for key in keys:
            if key not in sections.get(sec, {}):
                raise ValidationError(f"missing required key {key!r} in section [{sec}]")

    c_o = _get(sections, "medium", "c_o", float, 1.0)
    spacing = _get(sections, "grid", "spacing", float, 1.0)
    lambda_o = _get(sections, "pulse", "lambda_o", float, 26.7 * spacing)
    omega_o = _get(sections, "pulse", "omega_o", float, 2.0 * math.pi * c_o / lambda_o)
    omega_b = _get(sections, "pulse", "omega_b", float)
    pulse = PulseSpec(omega_o, omega_b) if omega_b else default_pulse(omega_o)

    # default sampling step: imaging runs use 0.3 pi/omega_c, inversion runs 0.45
    tau_default = (0.45 if "inversion" in sections else 0.3) * math.pi / pulse.omega_c
    tau = _get(sections, "rom", "tau", float, tau_default)
    n = _get(sections, "rom", "n", int, required=True)
    method = _get(sections, "rom", "regularization", str, "none")
    if method not in ("none", "boost", "spectral"):
        raise ValidationError(f"unknown regularization {method!r}")
    reg = RegRecord(method,
                    _get(sections, "rom", "boost_alpha", float, 1e-6),
                    _get(sections, "rom", "spectral_threshold", float, 1e-9),
                    _get(sections, "rom", "spectral_rank", int, 0))

    lambda_c = pulse.lambda_c(c_o)
    variant = _get(sections, "medium", "phantom", str, "homogeneous")
    regions = _parse_regions(sections, lambda_c)
    if variant == "homogeneous":
        phantom = PhantomSpec.homogeneous()
    elif variant == "custom-raster":
        import numpy as np
        path = _get(sections, "medium", "raster_file", str, required=True)
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
        phantom = PhantomSpec.custom_raster(raw[:, 2:5])
    else:
        if not regions:
            raise ValidationError(f"phantom {variant!r} needs at least one region")
        phantom = PhantomSpec(variant, regions,
                              reflector_index=_get(sections, "medium", "reflector", int, 0))

    imaging = None
    if "imaging" in sections:
        imaging = {
            "row_start": _get(sections, "imaging", "row_start", int, required=True),
            "row_stop": _get(sections, "imaging", "row_stop", int, required=True),
            "col_start": _get(sections, "imaging", "col_start", int, required=True),
            "col_stop": _get(sections, "imaging", "col_stop", int, required=True),
            "step": _get(sections, "imaging", "step", int, 1),
            "polarizations": _get(sections, "imaging", "polarizations", _ints, (22,)),
            "rtm": _get(sections, "imaging", "rtm", _bool, False),
        }

    inversion = None
    if "inversion" in sections:
        inversion = {
            "objective": _get(sections, "inversion", "objective", str, "rom"),
            "x1_min": _get(sections, "inversion", "x1_min", float, required=True),
            "x1_max": _get(sections, "inversion", "x1_max", float, required=True),
            "x2_min": _get(sections, "inversion", "x2_min", float, required=True),
            "x2_max": _get(sections, "inversion", "x2_max", float, required=True),
            "spacing1": _get(sections, "inversion", "spacing1", float),
            "spacing2": _get(sections, "inversion", "spacing2", float),
            "fd_step": _get(sections, "inversion", "fd_step", float),
            "max_iterations": _get(sections, "inversion", "max_iterations", int, 30),
            "tol_decrease": _get(sections, "inversion", "tol_decrease", float, 1e-4),
            "nu_fraction": _get(sections, "inversion", "nu_fraction", float, 0.9),
            "nu_base": _get(sections, "inversion", "nu_base", str, "basis"),
            "schedule": _get(sections, "inversion", "schedule", _ints),
        }

    cfg = ExperimentConfig(
        n1=_get(sections, "grid", "n1", int, required=True),
        n2=_get(sections, "grid", "n2", int, required=True),
        spacing=spacing,
        pulse=pulse,
        m=_get(sections, "array", "m", int, required=True),
        separation=_get(sections, "array", "separation", float, required=True),
        depth=_get(sections, "array", "depth", float),
        noise=_get(sections, "array", "noise", float, 0.0),
        noise_seed=_get(sections, "array", "noise_seed", int, 0),
        n=n,
        tau=tau,
        fine_ratio=_get(sections, "rom", "fine_ratio", int, 16),
        reg=reg,
        init_rows=_get(sections, "rom", "init_rows", int),
        init_method=_get(sections, "rom", "init_method", str, "spectral"),
        phantom=phantom,
        collar_width=_get(sections, "medium", "collar_width", float),
        c_o=c_o,
        imaging=imaging,
        inversion=inversion,
        output_dir=_get(sections, "io", "output_dir", str, "."),
        seed=_get(sections, "io", "seed", int, 0),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    """Cross-field invariants; violations name the invariant."""
    nyquist = math.pi / cfg.pulse.omega_o
    if cfg.tau > nyquist * (1 + 1e-12):
        raise ValidationError(
            f"Nyquist criterion violated: tau = {cfg.tau:.4g} exceeds pi/omega_o = {nyquist:.4g}")
    if cfg.separation < cfg.spacing:
        raise ValidationError(
            f"antenna separation {cfg.separation} below the grid step {cfg.spacing}")
    if cfg.imaging is not None:
        depth = cfg.imaging["row_stop"] * cfg.spacing
        reach = cfg.n * cfg.c_o * cfg.tau
        if reach < depth:
            raise ValidationError(
                f"time coverage violated: n*c_o*tau = {reach:.4g} is less than the "
                f"imaging depth {depth:.4g}")
    if cfg.reg.method == "spectral" and cfg.reg.order > cfg.n:
        raise ValidationError("spectral rank exceeds the ROM order n")


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read())
