"""Free-space dyadic Green's tensor and regularised lattice sums.

The tensor follows the sign convention in which the dipole-dipole coupling
between two atoms is ``PREFACTOR * d_i^* . G(r_ij) . d_j``. Its Fourier
transform, smoothed by the Gaussian zero-point spread of an atom in a trap of
width ``a_ho``, makes the reciprocal-space lattice sum converge.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import dawsn

from . import _kernels
from .model import K0, ConfigError

COMPONENTS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class ResonantWavevector(ArithmeticError):
    """A wavevector lies on (or too close to) the light sphere |q| = k0."""


@dataclass(frozen=True)
class RegularizationParams:
    """Gaussian smoothing width and truncation controls for reciprocal sums.

    ``g_max`` is the largest integer reciprocal index kept; None picks the
    smallest index for which the Gaussian weight drops below ``cutoff``.
    ``pole_tolerance`` is the minimum allowed ||k+G| - k0| in units of k0.
    """

    a_ho: float
    g_max: int | None = None
    pole_tolerance: float = 1e-6
    cutoff: float = 1e-12

    def __post_init__(self):
        if self.a_ho <= 0:
            raise ConfigError("a_ho must be positive")
        if not 0 < self.cutoff < 1:
            raise ConfigError("cutoff must lie in (0, 1)")

    @property
    def q_cut(self):
        """Wavenumber beyond which the Gaussian weight is below ``cutoff``."""
        return np.sqrt(-2.0 * np.log(self.cutoff)) / self.a_ho

    @property
    def expfactor(self):
        """exp(k0^2 a_ho^2 / 2), which undoes the smoothing at the shell."""
        return np.exp(0.5 * (K0 * self.a_ho) ** 2)


def greens_real(r):
    """Green's tensor at separation(s) ``r`` of shape (..., 3); returns (..., 3, 3)."""
    r = np.asarray(r, dtype=float)
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist == 0.0):
        raise ValueError("greens_real is singular at r = 0")
    kr = K0 * dist
    rhat = r / dist[..., None]
    pre = np.asarray(-np.exp(1j * kr) / (4.0 * np.pi * K0**2 * dist**3))
    iso = np.asarray(kr**2 + 1j * kr - 1.0)
    aniso = np.asarray(3.0 - 3.0j * kr - kr**2)
    outer = rhat[..., :, None] * rhat[..., None, :]
    eye = np.eye(3)
    return pre[..., None, None] * (iso[..., None, None] * eye + aniso[..., None, None] * outer)


def greens_ft_regularized(q, a_ho, pole_tolerance=1e-6):
    """Gaussian-smoothed Fourier transform g'(q) at wavevector(s) ``q`` (..., 3)."""
    q = np.asarray(q, dtype=float)
    q2 = np.einsum("...i,...i->...", q, q)
    if np.any(np.abs(np.sqrt(q2) - K0) < pole_tolerance * K0):
        raise ResonantWavevector("wavevector on the light sphere")
    outer = q[..., :, None] * q[..., None, :]
    num = K0**2 * np.eye(3) - outer
    scale = np.exp(-0.5 * q2 * a_ho**2) / (K0**2 * (K0**2 - q2))
    return num * scale[..., None, None]


def greens_self_scalar(a_ho):
    """Isotropic value of the smoothed Green's tensor at the origin.

    Evaluated through the Dawson function to avoid the overflow of erfi at
    large k0 a_ho.
    """
    x = K0 * a_ho
    return (K0 / (6.0 * np.pi)) * (
        2.0 / np.sqrt(np.pi) * dawsn(x / np.sqrt(2.0))
        - 1j * np.exp(-0.5 * x * x)
        - (x * x - 0.5) / (np.sqrt(0.5 * np.pi) * x**3)
    )


def greens_self(a_ho):
    """Smoothed Green's tensor at r = 0 (proportional to the identity)."""
    return greens_self_scalar(a_ho) * np.eye(3)


@lru_cache(maxsize=16)
def _reciprocal_indices(cell, a_ho, g_max, cutoff):
    cell = np.asarray(cell)
    b = 2.0 * np.pi / cell
    q_cut = np.sqrt(-2.0 * np.log(cutoff)) / a_ho
    # any k in the first zone shifts |k+G| by at most half the zone diagonal
    radius = q_cut + 0.5 * np.linalg.norm(b)
    nmax = np.ceil(radius / b).astype(int) + 1 if g_max is None else np.full(3, g_max)
    axes = [np.arange(-m, m + 1) for m in nmax]
    n = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T
    lengths = np.linalg.norm(n * b, axis=1)
    if g_max is None:
        n = n[lengths <= radius]
        lengths = lengths[lengths <= radius]
    order = np.argsort(lengths, kind="stable")
    n = np.ascontiguousarray(n[order], dtype=np.int64)
    n.setflags(write=False)
    return n, b


def reciprocal_indices(lattice, reg):
    """Integer reciprocal indices (sorted by |G|) and primitive spacings b_d."""
    return _reciprocal_indices(tuple(lattice.cell_lengths), float(reg.a_ho),
                               reg.g_max, float(reg.cutoff))


def _unpack(six):
    out = np.empty(six.shape[:-1] + (3, 3), dtype=six.dtype)
    for c, (i, j) in enumerate(COMPONENTS):
        out[..., i, j] = six[..., c]
        out[..., j, i] = six[..., c]
    return out


@dataclass
class LatticeSums:
    """Bloch lattice sums at a batch of wavevectors.

    ``plain`` is the sum with zero offset, ``shifted`` (if requested) the sum
    to sites displaced by ``offset``. Both are (m, 3, 3) complex. ``resonant``
    flags k-points closer to the light sphere than the pole tolerance.
    """

    ks: np.ndarray
    plain: np.ndarray
    shifted: np.ndarray | None
    resonant: np.ndarray


def raw_reciprocal_sums(ks, lattice, reg, offset=None):
    """Sum over G of g'(k+G) (and g'(k+G) exp(i G.offset)) without any prefactor."""
    ks = np.ascontiguousarray(np.atleast_2d(ks), dtype=float)
    n, b = reciprocal_indices(lattice, reg)
    if offset is None:
        plain, dmin = _kernels.plain_sums(ks, n, b, reg.a_ho, K0)
        shifted = None
    else:
        phase = np.exp(1j * (n * b) @ np.asarray(offset, dtype=float))
        plain, shifted, dmin = _kernels.phased_sums(ks, n, b, reg.a_ho, K0, phase)
        shifted = _unpack(shifted)
    # ||q| - k0| from |k0^2 - q^2| to first order
    resonant = dmin / (2.0 * K0) < reg.pole_tolerance * K0
    return _unpack(plain), shifted, resonant


def lattice_sums(ks, lattice, reg, offset=None):
    """Sum over lattice vectors R of G(R + offset) exp(-i k.(R + offset)).

    The R + offset = 0 term is excluded. Computed in reciprocal space as
    exp(x^2/2) [ (1/V) sum_G g'(k+G) exp(i G.offset) - G'(0) ] with x = k0 a_ho;
    the self-term subtraction only applies to the zero offset.
    """
    plain, shifted, resonant = raw_reciprocal_sums(ks, lattice, reg, offset)
    vol = lattice.cell_volume
    e = reg.expfactor
    # points exactly on the light sphere are non-finite; they are flagged as resonant
    with np.errstate(invalid="ignore"):
        plain = e * (plain / vol - greens_self(reg.a_ho))
        if shifted is not None:
            shifted = e * shifted / vol
            if not np.any(np.asarray(offset, dtype=float)):
                shifted = shifted - e * greens_self(reg.a_ho)
    return LatticeSums(np.atleast_2d(ks), plain, shifted, resonant)


def lattice_sum(k, lattice, reg, offset=None):
    """Single-k lattice sum; raises ResonantWavevector on the light sphere."""
    res = lattice_sums(np.asarray(k, dtype=float)[None, :], lattice, reg, offset)
    if res.resonant[0]:
        raise ResonantWavevector(f"k = {k} is within the pole tolerance of the light sphere")
    if offset is not None and np.any(np.asarray(offset) != 0):
        return res.shifted[0]
    return res.plain[0]
