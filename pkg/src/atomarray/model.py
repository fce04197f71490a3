"""Units, lattice geometry, level schemes and Brillouin-zone paths.

Natural units are used throughout: c = 1, the resonant wavelength is 1
(so k0 = 2*pi), frequencies are detunings from the bare atomic transition
measured in units of the single-atom free-space decay rate Gamma0 = 1.
"""

from dataclasses import dataclass, field

import numpy as np

WAVELENGTH = 1.0
K0 = 2.0 * np.pi / WAVELENGTH
GAMMA0 = 1.0
# 3*pi*c*Gamma0/omega0 with omega0 = c*k0
PREFACTOR = 3.0 * np.pi * GAMMA0 / K0

SIGMA_PLUS = -np.array([1.0, 1.0j, 0.0]) / np.sqrt(2.0)
SIGMA_MINUS = np.array([1.0, -1.0j, 0.0]) / np.sqrt(2.0)
PI_DIPOLE = np.array([0.0, 0.0, 1.0], dtype=complex)

# columns map the excited-state basis (sigma+, sigma-, pi) onto Cartesian x, y, z
POLARIZATION_BASIS = np.column_stack([SIGMA_PLUS, SIGMA_MINUS, PI_DIPOLE])

SIMPLE_CUBIC = "simple_cubic"
BIPARTITE_Z = "bipartite_z"


class ConfigError(ValueError):
    """Invalid physical or numerical parameters."""


@dataclass(frozen=True)
class LatticeSpec:
    """A cubic array of atoms with spacing ``spacing`` (in wavelengths).

    ``kind`` is ``simple_cubic`` or ``bipartite_z``; the latter has two
    sublattices alternating along z, so the primitive cell is a x a x 2a.
    ``extent`` is None for an infinite lattice, otherwise the number of
    sites along x, y, z. ``vacancies`` lists removed site indices.
    """

    spacing: float
    kind: str = SIMPLE_CUBIC
    extent: tuple | None = None
    vacancies: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.spacing < 0.5 * WAVELENGTH:
            raise ConfigError(f"spacing must lie in (0, 0.5), got {self.spacing}")
        if self.kind not in (SIMPLE_CUBIC, BIPARTITE_Z):
            raise ConfigError(f"unknown lattice kind {self.kind!r}")
        if self.extent is not None:
            ext = tuple(int(n) for n in self.extent)
            if len(ext) != 3 or min(ext) < 1:
                raise ConfigError(f"extent must be three positive integers, got {self.extent}")
            object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "vacancies", tuple(sorted(int(v) for v in self.vacancies)))

    @property
    def is_finite(self):
        return self.extent is not None

    @property
    def cell_lengths(self):
        """Edge lengths of the primitive (orthorhombic) cell."""
        a = self.spacing
        return np.array([a, a, 2.0 * a if self.kind == BIPARTITE_Z else a])

    @property
    def cell_volume(self):
        return float(np.prod(self.cell_lengths))

    @property
    def sublattice_offsets(self):
        """Positions of the atoms inside one primitive cell."""
        if self.kind == BIPARTITE_Z:
            return np.array([[0.0, 0.0, 0.0], [0.0, 0.0, self.spacing]])
        return np.zeros((1, 3))

    @property
    def zone_corner(self):
        """Octant corner (pi/a_x, pi/a_y, pi/a_z) of the first Brillouin zone."""
        return np.pi / self.cell_lengths

    def sites(self):
        """Positions and sublattice labels (0 = A, 1 = B) of a finite array.

        Sites are ordered with x fastest; vacancies are dropped.
        """
        if not self.is_finite:
            raise ConfigError("sites() needs a finite extent")
        nx, ny, nz = self.extent
        iz, iy, ix = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])
        pos = idx * self.spacing
        sub = (idx[:, 2] % 2) if self.kind == BIPARTITE_Z else np.zeros(len(idx), dtype=int)
        keep = np.ones(len(idx), dtype=bool)
        if self.vacancies:
            v = np.asarray(self.vacancies)
            if v.min() < 0 or v.max() >= len(idx):
                raise ConfigError("vacancy index out of range")
            keep[v] = False
        return pos[keep].astype(float), sub[keep].astype(int)

    @property
    def n_sites(self):
        if not self.is_finite:
            raise ConfigError("infinite lattice has no site count")
        return int(np.prod(self.extent)) - len(self.vacancies)


@dataclass(frozen=True)
class TwoLevel:
    """One circularly polarised transition per atom."""

    dipole: tuple = tuple(SIGMA_PLUS)

    def __post_init__(self):
        d = np.asarray(self.dipole, dtype=complex)
        if d.shape != (3,) or not np.isclose(np.linalg.norm(d), 1.0):
            raise ConfigError("dipole must be a unit 3-vector")
        object.__setattr__(self, "dipole", tuple(d))

    n_levels = 1

    @property
    def d(self):
        return np.asarray(self.dipole, dtype=complex)


@dataclass(frozen=True)
class FourLevelBipartite:
    """J=0 -> J=1 atoms with sublattice-dependent level shifts.

    Relative to the reference transition, the sigma+ level sits at
    delta_b +- delta, sigma- at -delta_b and pi at -delta_pi -+ delta, with
    the upper sign on sublattice A and the lower on B.
    """

    delta_b: float = 0.0
    delta: float = 0.0
    delta_pi: float = 0.0

    n_levels = 3


def level_shift_matrix(scheme, sublattice):
    """Diagonal level shifts in the (sigma+, sigma-, pi) basis."""
    if isinstance(scheme, TwoLevel):
        return np.zeros((1, 1))
    if sublattice not in (0, 1):
        raise ConfigError(f"sublattice must be 0 (A) or 1 (B), got {sublattice}")
    sign = 1.0 if sublattice == 0 else -1.0
    shifts = [scheme.delta_b + sign * scheme.delta, -scheme.delta_b,
              -scheme.delta_pi - sign * scheme.delta]
    return np.diag(np.asarray(shifts, dtype=float))


def reciprocal_vectors(lattice, g_max):
    """Reciprocal lattice vectors with integer indices in [-g_max, g_max]^3.

    Returns a ((2 g_max + 1)^3, 3) array sorted by length (stable).
    """
    g_max = int(g_max)
    if g_max < 0:
        raise ConfigError("g_max must be non-negative")
    r = np.arange(-g_max, g_max + 1)
    n = np.array(np.meshgrid(r, r, r, indexing="ij")).reshape(3, -1).T
    g = n * (2.0 * np.pi / lattice.cell_lengths)
    order = np.argsort(np.einsum("ij,ij->i", g, g), kind="stable")
    return g[order]


@dataclass
class BzPath:
    """Piecewise-linear path through high-symmetry points.

    Each segment holds exactly ``points_per_segment`` points including both
    ends; shared corners appear once.
    """

    labels: list
    vertices: np.ndarray
    points_per_segment: int = 50
    kpoints: np.ndarray = field(init=False)
    distance: np.ndarray = field(init=False)
    vertex_index: list = field(init=False)

    def __post_init__(self):
        if self.points_per_segment < 2:
            raise ConfigError("points_per_segment must be at least 2")
        verts = np.asarray(self.vertices, dtype=float)
        pts, ticks = [verts[:1]], [0]
        t = np.linspace(0.0, 1.0, self.points_per_segment)[1:, None]
        for a, b in zip(verts[:-1], verts[1:]):
            pts.append(a + t * (b - a))
            ticks.append(ticks[-1] + self.points_per_segment - 1)
        self.vertices = verts
        self.kpoints = np.vstack(pts)
        step = np.linalg.norm(np.diff(self.kpoints, axis=0), axis=1)
        self.distance = np.concatenate([[0.0], np.cumsum(step)])
        self.vertex_index = ticks


def standard_path(lattice, points_per_segment=50):
    """Gamma -> M' -> R' -> Gamma with M' = (pi/a, pi/a, 0) and R' the zone corner."""
    corner = lattice.zone_corner
    verts = [np.zeros(3), np.array([corner[0], corner[1], 0.0]), corner, np.zeros(3)]
    return BzPath(["G", "M'", "R'", "G"], np.array(verts), points_per_segment)


class NumericalError(ArithmeticError):
    """A computation produced a result that violates a structural invariant."""


class ResonantMeshError(NumericalError):
    """Too many mesh points sit on the light sphere to be masked safely."""
