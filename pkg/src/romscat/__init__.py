"""Data-driven reduced order modeling for electromagnetic inverse wave
scattering in 2D lossless orthotropic media."""

__version__ = "0.1.0"
