"""Single-excitation dynamics of impurities coupled to a finite array."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .finite import assemble_hamiltonian, eigensolve
from .impurity import direct_impurity_coupling, impurity_array_coupling
from .model import NumericalError, TwoLevel


class NoOscillation(NumericalError):
    """No population oscillation could be resolved."""


@dataclass
class CompositeSystem:
    """Array plus impurities as one complex-symmetric Hamiltonian.

    The first ``n_array`` basis states are array atoms, the rest impurities.
    """

    hamiltonian: np.ndarray
    n_array: int
    n_impurities: int

    @property
    def dim(self):
        return self.n_array + self.n_impurities

    def impurity_state(self, index):
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.n_array + index] = 1.0
        return psi


def composite_system(table, impurities, omega_i, gamma_i, dipole=None):
    """Assemble H_tot for impurities at frequency ``omega_i`` with linewidth ``gamma_i``."""
    if not isinstance(table.scheme, TwoLevel):
        raise ValueError("impurity dynamics is implemented for two-level arrays")
    d = table.scheme.d if dipole is None else np.asarray(dipole, dtype=complex)
    imp = np.atleast_2d(np.asarray(impurities, dtype=float))
    n, m = table.n_sites, len(imp)
    h = np.zeros((n + m, n + m), dtype=complex)
    h[:n, :n] = assemble_hamiltonian(table)
    v = impurity_array_coupling(imp, table.positions, gamma_i, d)
    h[n:, :n] = v
    h[:n, n:] = v.T
    h[n:, n:] = direct_impurity_coupling(imp, gamma_i, d) + (omega_i - 0.5j * gamma_i) * np.eye(m)
    return CompositeSystem(h, n, m)


@dataclass
class Trajectory:
    times: np.ndarray
    impurity_populations: np.ndarray
    array_population: np.ndarray

    @property
    def norm(self):
        return self.impurity_populations.sum(axis=1) + self.array_population


def evolve(system, psi0, times, modes=None):
    """psi(t) = Psi exp(-i Lambda t) Psi^-1 psi0 on the given time grid."""
    psi0 = np.asarray(psi0, dtype=complex)
    if not np.isclose(np.linalg.norm(psi0), 1.0):
        raise ValueError("initial state must be normalised")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("time grid must be ascending")
    modes = modes or eigensolve(system.hamiltonian)
    coeff = modes.dual @ psi0
    phases = np.exp(-1j * np.outer(times, modes.values)) * coeff
    imp_rows = modes.vectors[system.n_array:]
    imp = np.abs(phases @ imp_rows.T) ** 2
    arr = np.empty(len(times))
    # array population in chunks to bound memory
    arr_rows = modes.vectors[:system.n_array]
    for start in range(0, len(times), 256):
        amp = phases[start:start + 256] @ arr_rows.T
        arr[start:start + 256] = np.sum(np.abs(amp) ** 2, axis=1)
    return Trajectory(times, imp, arr)


@dataclass
class RabiEstimate:
    """Omega is half the angular frequency of the population oscillation,
    so the population period is pi / Omega."""

    omega: float
    gamma_eff: float
    amplitude: float

    @property
    def omega_doubled(self):
        return 2.0 * self.omega


def _refine_peak(t, y, i):
    if 0 < i < len(y) - 1:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        den = y0 - 2.0 * y1 + y2
        if den != 0:
            s = 0.5 * (y0 - y2) / den
            return t[i] + s * (t[1] - t[0]), y1 - 0.25 * (y0 - y2) * s
    return t[i], y[i]


def extract_rabi(times, population):
    """Rabi frequency, envelope decay and amplitude from one impurity population.

    The oscillation frequency is seeded by the largest discrete Fourier peak
    and refined from the spacing of the population maxima; the decay rate is
    the slope of a log-linear fit through the maxima.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(population, dtype=float)
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise ValueError("extract_rabi needs a uniform time grid")
    x = p - p.mean()
    nfft = 1 << int(np.ceil(np.log2(len(x)))) + 3
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x)), nfft))
    freqs = np.fft.rfftfreq(nfft, dt)
    k = np.argmax(spec[1:]) + 1
    floor = np.median(spec[1:])
    if spec[k] < 10.0 * floor or np.ptp(p) < 1e-9:
        raise NoOscillation("no spectral peak above the noise floor")
    period = 1.0 / freqs[k]
    idx, _ = find_peaks(p, distance=max(1, int(0.6 * period / dt)))
    if len(idx) < 2:
        raise NoOscillation("fewer than two oscillation maxima")
    refined = np.array([_refine_peak(t, p, i) for i in idx])
    tp, yp = refined[:, 0], refined[:, 1]
    period = np.polyfit(np.arange(len(tp)), tp, 1)[0]
    slope = np.polyfit(tp, np.log(yp), 1)[0] if len(tp) > 1 else 0.0
    troughs, _ = find_peaks(-p, distance=max(1, int(0.6 * period / dt)))
    low = p[troughs].mean() if len(troughs) else p.min()
    return RabiEstimate(np.pi / period, float(-slope), float(yp.mean() - low))
