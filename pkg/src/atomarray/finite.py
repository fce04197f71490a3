"""Finite atomic arrays: real-space Hamiltonians, spectra and mode decay."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .greens import greens_real
from .model import (
    BIPARTITE_Z,
    POLARIZATION_BASIS,
    PREFACTOR,
    ConfigError,
    FourLevelBipartite,
    LatticeSpec,
    NumericalError,
    TwoLevel,
    level_shift_matrix,
)


@dataclass
class SiteTable:
    """Atom positions, sublattice labels and the level scheme they carry."""

    positions: np.ndarray
    sublattice: np.ndarray
    scheme: object

    @property
    def n_sites(self):
        return len(self.positions)

    @property
    def levels(self):
        return self.scheme.n_levels

    @property
    def dim(self):
        return self.n_sites * self.levels


def site_table(lattice, scheme=None):
    scheme = scheme or TwoLevel()
    if isinstance(scheme, FourLevelBipartite) and lattice.kind != BIPARTITE_Z:
        raise ConfigError("four-level atoms need a bipartite lattice")
    pos, sub = lattice.sites()
    return SiteTable(pos, sub, scheme)


def apply_defects(lattice, density, seed):
    """Remove round(density * N) randomly chosen sites, reproducibly for a given seed."""
    if not 0.0 <= density < 1.0:
        raise ConfigError("defect density must lie in [0, 1)")
    total = int(np.prod(lattice.extent))
    count = int(round(density * total))
    rng = np.random.default_rng(seed)
    removed = rng.choice(total, size=count, replace=False)
    return LatticeSpec(lattice.spacing, lattice.kind, lattice.extent, tuple(removed))


def dipole_coupling(r, d_left, d_right):
    """PREFACTOR d_left^* G(r) d_right for separations r (..., 3)."""
    return PREFACTOR * np.einsum("i,...ij,j->...", np.conj(d_left), greens_real(r), d_right)


def assemble_hamiltonian(table, chunk=512):
    """Non-Hermitian real-space Hamiltonian including the -i/2 single-atom decay.

    Two-level arrays give an N x N matrix; four-level arrays a 3N x 3N matrix
    ordered site-major with (sigma+, sigma-, pi) inside each site.
    """
    pos = table.positions
    n = table.n_sites
    lev = table.levels
    h = np.zeros((n * lev, n * lev), dtype=complex)
    if isinstance(table.scheme, TwoLevel):
        d = table.scheme.d
        for start in range(0, n, chunk):
            rows = np.arange(start, min(start + chunk, n))
            r = pos[rows, None, :] - pos[None, :, :]
            r[np.arange(len(rows)), rows] = 1.0
            block = dipole_coupling(r, d, d)
            block[np.arange(len(rows)), rows] = -0.5j
            h[rows] = block
        return h
    u = POLARIZATION_BASIS
    shifts = [level_shift_matrix(table.scheme, s) for s in (0, 1)]
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        r = pos[rows, None, :] - pos[None, :, :]
        r[np.arange(len(rows)), rows] = 1.0
        block = PREFACTOR * np.conj(u.T) @ greens_real(r) @ u
        for k, i in enumerate(rows):
            block[k, i] = shifts[table.sublattice[i]] - 0.5j * np.eye(3)
        h[start * 3:(rows[-1] + 1) * 3] = block.transpose(0, 2, 1, 3).reshape(len(rows) * 3, n * 3)
    return h


@dataclass
class ModeSet:
    """Eigenvalues with unit-norm right eigenvectors (columns) and their duals.

    ``dual`` is the inverse of ``vectors``, so dual @ vectors is the identity
    and vectors @ diag(values) @ dual reproduces the Hamiltonian.
    """

    values: np.ndarray
    vectors: np.ndarray
    dual: np.ndarray

    @property
    def decay_rates(self):
        return -2.0 * self.values.imag

    def transpose_normalized(self, cluster_tol=1e-8):
        """Vectors with psi_a^T psi_b = delta_ab, valid for complex-symmetric matrices.

        Degenerate clusters are orthonormalised with the inverse square root of
        their transpose-overlap matrix.
        """
        vals = self.values
        out = self.vectors.copy()
        order = np.lexsort((vals.imag, vals.real))
        scale = max(1.0, np.abs(vals).max())
        groups, current = [], [order[0]]
        for i in order[1:]:
            if abs(vals[i] - vals[current[-1]]) < cluster_tol * scale:
                current.append(i)
            else:
                groups.append(current)
                current = [i]
        groups.append(current)
        for g in groups:
            block = out[:, g]
            overlap = block.T @ block
            out[:, g] = block @ np.linalg.inv(sla.sqrtm(overlap))
        return out


def eigensolve(h, vectors=True):
    """Diagonalise a non-Hermitian Hamiltonian.

    With ``vectors=False`` only eigenvalues are returned (cheaper); otherwise
    a ModeSet with unit-norm right eigenvectors and their inverse.
    """
    if vectors:
        vals, vecs = sla.eig(h, overwrite_a=False, check_finite=True)
        vecs /= np.linalg.norm(vecs, axis=0)
        try:
            dual = np.linalg.inv(vecs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("eigenvector matrix is singular") from exc
        if not np.all(np.isfinite(dual)):
            raise NumericalError("eigenvector inverse is not finite")
        return ModeSet(vals, vecs, dual)
    vals = sla.eigvals(h, check_finite=True)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("eigenvalues are not finite")
    return vals


def finite_dos(values, edges, per_site=None):
    """Histogram of Re(eigenvalues) over the given bin edges.

    Returns (counts, density); the density is divided by the bin width and,
    when ``per_site`` is given, by that number so it compares with the
    per-cell density of an infinite lattice.
    """
    values = np.asarray(values)
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(values.real, bins=edges)
    density = counts / np.diff(edges)
    if per_site:
        density = density / per_site
    return counts, density


def site_average_decay(modes, table):
    """Mode decay rates averaged with each site's weight in the modes.

    gamma_i = sum_xi Gamma_xi |psi_xi(i)|^2 / sum_xi |psi_xi(i)|^2, with the
    weights summed over internal levels of a site.
    """
    w = np.abs(modes.vectors) ** 2
    if table.levels > 1:
        w = w.reshape(table.n_sites, table.levels, -1).sum(axis=1)
    return (w @ modes.decay_rates) / w.sum(axis=1)
