"""Band structures of infinite atomic lattices.

Bloch matrices are built from regularised reciprocal lattice sums. On k
meshes, spectra are labelled by how many photon poles |k+G| = k0 enclose the
wavevector, since a fixed number of branches diverge across each pole and
sorted eigenvalue indices are not continuous there.
"""

from dataclasses import dataclass

import numpy as np

from .greens import lattice_sums
from .model import (
    BIPARTITE_Z,
    K0,
    POLARIZATION_BASIS,
    PREFACTOR,
    ConfigError,
    FourLevelBipartite,
    NumericalError,
    ResonantMeshError,
    TwoLevel,
    level_shift_matrix,
)

HERMITICITY_TOL = 1e-10
MAX_RESONANT_FRACTION = 1e-3


def is_mirror_symmetric(d):
    """True if d^* G d is even under k_x -> -k_x, k_y -> -k_y and k_z -> -k_z separately."""
    d = np.asarray(d, dtype=complex)
    cross = np.real(np.conj(d)[:, None] * d[None, :])
    return bool(np.all(np.abs(cross[np.triu_indices(3, 1)]) < 1e-14))


def octant_mesh(lattice, n):
    """Cell-centred n^3 mesh on the positive octant of the first zone.

    Returns k-points and weights normalised so that the weights sum to 1; by
    mirror symmetry each point stands for its eight images.
    """
    corner = lattice.zone_corner
    c = (np.arange(n) + 0.5) / n
    grid = np.array(np.meshgrid(c, c, c, indexing="ij")).reshape(3, -1).T
    return grid * corner, np.full(n**3, 1.0 / n**3)


def full_mesh(lattice, n):
    """Cell-centred (2n)^3 mesh covering the whole first zone, weights summing to 1."""
    corner = lattice.zone_corner
    c = (np.arange(2 * n) + 0.5) / n - 1.0
    grid = np.array(np.meshgrid(c, c, c, indexing="ij")).reshape(3, -1).T
    return grid * corner, np.full((2 * n) ** 3, 1.0 / (2 * n) ** 3)


def _check_hermitian(m):
    anti = 0.5 * (m - np.conj(np.swapaxes(m, -1, -2)))
    scale = np.max(np.abs(m), axis=(-1, -2))
    rel = np.max(np.abs(anti), axis=(-1, -2)) / scale
    return rel


def dispersion_two_level(ks, lattice, reg, scheme=None):
    """Complex dispersion omega(k) of a two-level lattice and a resonance mask.

    omega = PREFACTOR d^* S(k) d - i/2, where S is the Bloch lattice sum. For
    k off the light sphere and below the diffraction threshold the imaginary
    part vanishes.
    """
    scheme = scheme or TwoLevel()
    if lattice.kind == BIPARTITE_Z:
        raise ConfigError("two-level dispersion needs a simple cubic lattice")
    d = scheme.d
    sums = lattice_sums(ks, lattice, reg)
    omega = PREFACTOR * np.einsum("i,mij,j->m", np.conj(d), sums.plain, d) - 0.5j
    return omega, sums.resonant


def dispersion(ks, lattice, reg, scheme=None):
    """Real two-level dispersion; fails if the imaginary part is not negligible."""
    omega, resonant = dispersion_two_level(ks, lattice, reg, scheme)
    bad = (np.abs(omega.imag) > 1e-6) & ~resonant
    if np.any(bad):
        raise NumericalError(f"dispersion has imaginary part {np.abs(omega.imag[bad]).max():.3e}")
    return omega.real, resonant


def bloch_matrices(ks, lattice, reg, scheme, basis="polarization"):
    """Bloch matrices of a bipartite four-level lattice, shape (m, 6, 6).

    Rows and columns are (A sigma+, A sigma-, A pi, B sigma+, B sigma-, B pi)
    for ``basis="polarization"`` or (A x, A y, A z, B x, B y, B z) for
    ``basis="cartesian"``. Includes the -i/2 single-atom decay.
    """
    if lattice.kind != BIPARTITE_Z or not isinstance(scheme, FourLevelBipartite):
        raise ConfigError("four-level Bloch matrices need a bipartite lattice and scheme")
    offset = lattice.sublattice_offsets[1] - lattice.sublattice_offsets[0]
    sums = lattice_sums(ks, lattice, reg, offset=offset)
    m = len(sums.plain)
    cart = np.empty((m, 6, 6), dtype=complex)
    cart[:, :3, :3] = PREFACTOR * sums.plain
    cart[:, 3:, 3:] = PREFACTOR * sums.plain
    cart[:, :3, 3:] = PREFACTOR * sums.shifted
    # g'(q) is real and even, so the B -> A sum is the complex conjugate
    cart[:, 3:, :3] = PREFACTOR * np.conj(sums.shifted)
    u = np.zeros((6, 6), dtype=complex)
    u[:3, :3] = POLARIZATION_BASIS
    u[3:, 3:] = POLARIZATION_BASIS
    shifts = np.zeros((6, 6))
    shifts[:3, :3] = level_shift_matrix(scheme, 0)
    shifts[3:, 3:] = level_shift_matrix(scheme, 1)
    if basis == "polarization":
        out = np.conj(u.T) @ cart @ u + shifts
    elif basis == "cartesian":
        out = cart + u @ shifts @ np.conj(u.T)
    else:
        raise ConfigError(f"unknown basis {basis!r}")
    out = out - 0.5j * np.eye(6)
    return out, sums.resonant


def bloch_spectrum(ks, lattice, reg, scheme):
    """Sorted real eigenvalues (m, n_bands) and resonance mask for any level scheme."""
    if isinstance(scheme, TwoLevel):
        omega, resonant = dispersion(ks, lattice, reg, scheme)
        return omega[:, None], resonant
    mats, resonant = bloch_matrices(ks, lattice, reg, scheme)
    rel = _check_hermitian(mats)
    bad = (rel > HERMITICITY_TOL) & ~resonant
    if np.any(bad):
        raise NumericalError(f"Bloch matrix not Hermitian: relative defect {rel[bad].max():.3e}")
    herm = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
    return np.linalg.eigvalsh(herm), resonant


def toy_hybridization(k, g, omega0=K0, c=1.0):
    """Eigenvalues of the two-mode model [[omega0, g sqrt(k)], [g sqrt(k), c k]].

    Returns (lower, upper) arrays for wavenumbers ``k`` >= 0.
    """
    k = np.asarray(k, dtype=float)
    mean = 0.5 * (omega0 + c * k)
    half = np.sqrt((0.5 * (omega0 - c * k)) ** 2 + g * g * k)
    return mean - half, mean + half


@dataclass
class BandResult:
    distance: np.ndarray
    kpoints: np.ndarray
    bands: np.ndarray
    resonant: np.ndarray
    labels: list
    vertex_index: list


def bands_along_path(path, lattice, reg, scheme):
    """Band energies along a BzPath; resonant points are kept but flagged."""
    bands, resonant = bloch_spectrum(path.kpoints, lattice, reg, scheme)
    return BandResult(path.distance, path.kpoints, bands, resonant,
                      list(path.labels), list(path.vertex_index))


def pole_count(ks, lattice):
    """Number of reciprocal vectors G with |k+G| < k0 for each k."""
    b = 2.0 * np.pi / lattice.cell_lengths
    reach = np.ceil(K0 / b).astype(int) + 1
    axes = [np.arange(-r, r + 1) for r in reach]
    g = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T * b
    g = g[np.linalg.norm(g, axis=1) < K0 + np.linalg.norm(lattice.zone_corner)]
    q = ks[:, None, :] + g[None, :, :]
    return np.sum(np.einsum("mgi,mgi->mg", q, q) < K0**2, axis=1)


@dataclass
class MeshSpectrum:
    """Eigenvalues on a k mesh with integration weights (summing to 1)."""

    ks: np.ndarray
    weights: np.ndarray
    bands: np.ndarray
    resonant: np.ndarray
    poles: np.ndarray
    branches_per_pole: int
    mesh_n: int

    @property
    def n_bands(self):
        return self.bands.shape[1]


def mesh_spectrum(lattice, reg, scheme, n, symmetry="octant", chunk=20000):
    """Diagonalise on a cell-centred mesh; aborts if too many points are resonant."""
    if symmetry == "octant":
        if isinstance(scheme, TwoLevel) and not is_mirror_symmetric(scheme.d):
            raise ConfigError("octant mesh needs a mirror-symmetric dipole; use symmetry='full'")
        ks, w = octant_mesh(lattice, n)
    elif symmetry == "full":
        ks, w = full_mesh(lattice, n)
    else:
        raise ConfigError(f"unknown symmetry {symmetry!r}")
    parts = [bloch_spectrum(ks[i:i + chunk], lattice, reg, scheme) for i in range(0, len(ks), chunk)]
    bands = np.concatenate([p[0] for p in parts])
    resonant = np.concatenate([p[1] for p in parts])
    poles = np.concatenate([pole_count(ks[i:i + chunk], lattice) for i in range(0, len(ks), chunk)])
    if resonant.mean() > MAX_RESONANT_FRACTION:
        raise ResonantMeshError(
            f"{resonant.sum()} of {len(ks)} mesh points lie on the light sphere")
    branches = 1 if isinstance(scheme, TwoLevel) else 2
    return MeshSpectrum(ks, w, bands, resonant, poles, branches, n)


@dataclass
class DosHistogram:
    """States per unit cell per unit frequency.

    ``underflow`` and ``overflow`` hold the weight falling outside the bin
    range and ``masked`` the weight of resonant points, so that
    sum(density * widths) + underflow + overflow + masked equals n_bands.
    """

    edges: np.ndarray
    density: np.ndarray
    underflow: float
    overflow: float
    masked: float
    n_bands: int

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def total(self):
        return float(np.sum(self.density * self.widths) + self.underflow + self.overflow + self.masked)


def _weighted_quantile(values, weights, q):
    order = np.argsort(values)
    cum = np.cumsum(weights[order])
    return np.interp(q * cum[-1], cum, values[order])


def dos(spectrum, bins=200, omega_range=None):
    """Histogram a MeshSpectrum into a density of states.

    Without ``omega_range`` the window spans the 0.5% to 99.5% weighted
    quantiles of the band energies; weight outside is kept as under/overflow.
    """
    good = ~spectrum.resonant
    vals = spectrum.bands[good].ravel()
    wts = np.repeat(spectrum.weights[good], spectrum.n_bands)
    if omega_range is None:
        omega_range = (_weighted_quantile(vals, wts, 0.005), _weighted_quantile(vals, wts, 0.995))
    lo, hi = map(float, omega_range)
    if not hi > lo:
        raise ConfigError("omega_range must be increasing")
    edges = np.linspace(lo, hi, int(bins) + 1)
    hist, _ = np.histogram(vals, bins=edges, weights=wts)
    under = float(wts[vals < lo].sum())
    over = float(wts[vals > hi].sum())
    masked = float(spectrum.weights[~good].sum() * spectrum.n_bands)
    return DosHistogram(edges, hist / np.diff(edges), under, over, masked, spectrum.n_bands)


@dataclass
class GapReport:
    """Largest spectral gap and per-band extrema.

    The gap lies between ``lower_edge`` (top of the ``n_below`` lowest states
    inside the light sphere) and ``upper_edge``; ``width`` is negative when
    the bands overlap.
    """

    lower_edge: float
    upper_edge: float
    n_below_inside: int
    band_min: np.ndarray
    band_max: np.ndarray

    @property
    def width(self):
        return self.upper_edge - self.lower_edge

    @property
    def has_gap(self):
        return self.width > 0


def _edges_for(spectrum, n_low):
    good = ~spectrum.resonant
    bands = spectrum.bands[good]
    p = spectrum.poles[good]
    nb = spectrum.n_bands
    below = n_low + spectrum.branches_per_pole * (p.max() - p)
    if np.any(below > nb) or np.any(below < 0):
        return -np.inf, np.inf
    rows = np.arange(len(bands))
    lower = np.where(below > 0, bands[rows, np.clip(below - 1, 0, nb - 1)], -np.inf)
    upper = np.where(below < nb, bands[rows, np.clip(below, 0, nb - 1)], np.inf)
    return float(lower.max()), float(upper.min())


def gap_report(spectrum):
    """Find the widest gap between consistently labelled band groups."""
    good = ~spectrum.resonant
    best = None
    for n_low in range(spectrum.n_bands + 1):
        lo, hi = _edges_for(spectrum, n_low)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            continue
        if best is None or hi - lo > best[1] - best[0]:
            best = (lo, hi, n_low)
    if best is None:
        raise NumericalError("no consistent band grouping found")
    bands = spectrum.bands[good]
    return GapReport(best[0], best[1], best[2], bands.min(axis=0), bands.max(axis=0))
