"""Binary artifact formats and text export.

All binary formats are little-endian and fully deterministic, so a file
written twice from the same inputs is bit-identical.

DataSeries ("ROMD"): magic, version u32, m u32, n u32, tau f64, then 2n
matrices of (2m x 2m) f64, row-major.

Raw response ("ROMW"): magic, version u32, m u32, count u32, dt f64,
t_start f64, then count matrices of (2m x 2m) f64, row-major.

ROM ("ROMR"): magic, version u32, m u32, nb u32 (block order), tau f64,
regularization record (method u32: 0 none / 1 boost / 2 spectral, alpha f64,
threshold f64, order u32), then R, S, P as (2*nb*m)^2 f64 row-major.
"""

import struct

import numpy as np

from .blocklinalg import BlockMatrix, BlockTriangular
from .errors import MissingArtifact
from .forward import DataSeries
from .rom import ROM, RegRecord

_VERSION = 1
_REG_CODES = {"none": 0, "boost": 1, "spectral": 2}
_REG_NAMES = {v: k for k, v in _REG_CODES.items()}


def _expect_magic(f, magic, path):
    got = f.read(4)
    if got != magic:
        raise MissingArtifact(f"{path}: expected {magic!r} file, found {got!r}")


def save_dataseries(path, data: DataSeries):
    if data.num_times % 2:
        raise ValueError("data series must hold an even number of matrices")
    with open(path, "wb") as f:
        f.write(b"ROMD")
        f.write(struct.pack("<III", _VERSION, data.m, data.n))
        f.write(struct.pack("<d", data.tau))
        f.write(data.matrices.astype("<f8").tobytes())


def load_dataseries(path) -> DataSeries:
    with open(path, "rb") as f:
        _expect_magic(f, b"ROMD", path)
        _, m, n = struct.unpack("<III", f.read(12))
        (tau,) = struct.unpack("<d", f.read(8))
        count = 2 * n * (2 * m) ** 2
        mats = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(2 * n, 2 * m, 2 * m)
    return DataSeries(mats.copy(), tau)


def save_response(path, W, dt, t_start):
    m2 = W.shape[1]
    with open(path, "wb") as f:
        f.write(b"ROMW")
        f.write(struct.pack("<III", _VERSION, m2 // 2, W.shape[0]))
        f.write(struct.pack("<dd", dt, t_start))
        f.write(np.ascontiguousarray(W).astype("<f8").tobytes())


def load_response(path):
    with open(path, "rb") as f:
        _expect_magic(f, b"ROMW", path)
        _, m, count = struct.unpack("<III", f.read(12))
        dt, t_start = struct.unpack("<dd", f.read(16))
        W = np.frombuffer(f.read(8 * count * (2 * m) ** 2), dtype="<f8")
        W = W.reshape(count, 2 * m, 2 * m)
    return W.copy(), dt, t_start


def save_rom(path, rom: ROM):
    nb = rom.n
    with open(path, "wb") as f:
        f.write(b"ROMR")
        f.write(struct.pack("<III", _VERSION, rom.m, nb))
        f.write(struct.pack("<d", rom.tau))
        f.write(struct.pack("<IddI", _REG_CODES[rom.reg.method], rom.reg.alpha,
                            rom.reg.threshold, rom.reg.order))
        for M in (rom.R.data, rom.S.data, rom.P.data):
            f.write(np.ascontiguousarray(M).astype("<f8").tobytes())


def load_rom(path) -> ROM:
    with open(path, "rb") as f:
        _expect_magic(f, b"ROMR", path)
        _, m, nb = struct.unpack("<III", f.read(12))
        (tau,) = struct.unpack("<d", f.read(8))
        code, alpha, threshold, order = struct.unpack("<IddI", f.read(24))
        dim = 2 * m * nb
        mats = []
        for _ in range(3):
            mats.append(np.frombuffer(f.read(8 * dim * dim), dtype="<f8").reshape(dim, dim).copy())
    reg = RegRecord(_REG_NAMES[code], alpha, threshold, order)
    return ROM(BlockTriangular(mats[0], 2 * m), BlockMatrix(mats[1], 2 * m),
               BlockMatrix(mats[2], 2 * m), m, nb, tau, reg)


def medium_to_csv(path, medium):
    xy = medium.grid.node_xy
    with open(path, "w") as f:
        f.write("x1,x2,c11,c22,c12\n")
        for (x1, x2), (c11, c22, c12) in zip(xy, medium.c):
            f.write(f"{x1:.9g},{x2:.9g},{c11:.17g},{c22:.17g},{c12:.17g}\n")


def image_to_csv(path, img):
    with open(path, "w") as f:
        f.write("x1,x2,value\n")
        for (x1, x2), v in zip(img.im_grid.xy, img.values):
            f.write(f"{x1:.9g},{x2:.9g},{v:.17g}\n")


def snapshot_to_csv(path, field):
    """Rows: x1, x2, column index (s,p order), component, value."""
    xy = field.grid.node_xy
    vals = field.values
    with open(path, "w") as f:
        f.write("x1,x2,column,component,value\n")
        for node in range(xy.shape[0]):
            for comp in (0, 1):
                row = vals[2 * node + comp]
                for q, v in enumerate(row):
                    f.write(f"{xy[node,0]:.9g},{xy[node,1]:.9g},{q},{comp + 1},{v:.17g}\n")


def dataseries_to_csv(path, data: DataSeries):
    with open(path, "w") as f:
        f.write("j,row,col,value\n")
        for j in range(data.num_times):
            for a in range(2 * data.m):
                for b in range(2 * data.m):
                    f.write(f"{j},{a},{b},{data.matrices[j, a, b]:.17g}\n")


def write_pgm(path, matrix):
    """8-bit binary PGM with linear value mapping over [min, max]."""
    V = np.asarray(matrix, dtype=float)
    lo, hi = V.min(), V.max()
    span = hi - lo if hi > lo else 1.0
    pix = np.round(255.0 * (V - lo) / span).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{V.shape[1]} {V.shape[0]}\n255\n".encode())
        f.write(pix.tobytes())
