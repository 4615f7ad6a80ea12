"""Probing pulse model.

The pulse is specified in the frequency domain as a Gaussian pair modulated
by omega^2, which vanishes at zero frequency and is even.  The time-domain
signal and its derivative are synthesized by cosine/sine quadrature on a
uniform frequency grid (the spectrum is smooth and rapidly decaying, so the
trapezoid rule converges fast); both are even/odd by construction.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

CUTOFF_RATIO = 5.0 / 3.0       # omega_c / omega_o
CUTOFF_DB = -25.0              # amplitude cut-off defining the default bandwidth
SUPPORT_THRESHOLD = 1e-6       # |f| / max|f| level defining the effective support


@dataclass(frozen=True)
class PulseSpec:
    omega_o: float
    omega_b: float

    @property
    def omega_c(self):
        return CUTOFF_RATIO * self.omega_o

    def lambda_o(self, c_o=1.0):
        return 2.0 * np.pi * c_o / self.omega_o

    def lambda_c(self, c_o=1.0):
        return 2.0 * np.pi * c_o / self.omega_c

    def spectrum(self, omega):
        omega = np.asarray(omega, dtype=float)
        g = (np.exp(-((omega - self.omega_o) ** 2) / (2 * self.omega_b ** 2))
             + np.exp(-((omega + self.omega_o) ** 2) / (2 * self.omega_b ** 2)))
        return 0.5 * omega ** 2 * g

    def _quad_grid(self, t_max):
        # resolve both the spectral structure and the oscillation at t_max
        omega_max = self.omega_o + 10.0 * self.omega_b
        d_omega = min(self.omega_b / 40.0, np.pi / (8.0 * max(t_max, 1.0)))
        n = int(np.ceil(omega_max / d_omega)) + 1
        return np.linspace(0.0, omega_max, n)

    def time_signal(self, t):
        """f(t) = (1/pi) * integral_0^inf spectrum(w) cos(w t) dw."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = self._quad_grid(np.max(np.abs(t)))
        fw = self.spectrum(w)
        vals = np.trapezoid(fw[None, :] * np.cos(np.outer(t, w)), w, axis=1) / np.pi
        return vals if vals.size > 1 else float(vals[0])

    def time_derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = self._quad_grid(np.max(np.abs(t)))
        fw = self.spectrum(w) * w
        vals = -np.trapezoid(fw[None, :] * np.sin(np.outer(t, w)), w, axis=1) / np.pi
        return vals if vals.size > 1 else float(vals[0])

    def support_time(self, threshold=SUPPORT_THRESHOLD):
        """Effective support T_f: last time where |f| is above threshold*max."""
        return _support_time_cached(self.omega_o, self.omega_b, threshold)


@lru_cache(maxsize=32)
def _support_time_cached(omega_o, omega_b, threshold):
    pulse = PulseSpec(omega_o, omega_b)
    t_hi = 10.0 / omega_b
    t = np.linspace(0.0, t_hi, 4000)
    f = np.abs(pulse.time_signal(t))
    above = np.nonzero(f >= threshold * f.max())[0]
    return float(t[above[-1] + 1]) if above[-1] + 1 < t.size else float(t_hi)


def bandwidth_from_cutoff(omega_o, db=CUTOFF_DB):
    """Spectral standard deviation such that the amplitude at the cut-off
    frequency omega_c = (5/3) omega_o is ``db`` decibels below the peak."""
    target = 10.0 ** (db / 20.0)
    omega_c = CUTOFF_RATIO * omega_o

    def ratio(omega_b):
        p = PulseSpec(omega_o, omega_b)
        w = np.linspace(0.0, 2.5 * omega_c, 6000)
        return p.spectrum(omega_c) / p.spectrum(w).max()

    lo, hi = 0.02 * omega_o, 0.8 * omega_o
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ratio(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_pulse(omega_o):
    return PulseSpec(omega_o, bandwidth_from_cutoff(omega_o))
