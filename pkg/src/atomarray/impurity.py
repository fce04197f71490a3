"""Impurity atoms coupled through a gapped atomic array.

Infinite arrays are handled by Brillouin-zone integrals of the Born-Markov
self-energy; finite arrays by the resolvent of the array Hamiltonian expanded
in its eigenmodes. Fit models for Yukawa-type couplings and the finite-size
suppression of impurity decay are included.

All couplings are returned in units of the impurity linewidth Gamma_I.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .bloch import dispersion, is_mirror_symmetric
from .finite import dipole_coupling
from .greens import greens_self_scalar, raw_reciprocal_sums
from .model import (
    K0,
    PREFACTOR,
    SIGMA_PLUS,
    SIMPLE_CUBIC,
    ConfigError,
    NumericalError,
    TwoLevel,
)


class NonConvergedExtrapolation(NumericalError):
    """Successive broadening extrapolants disagree by more than the tolerance."""


class DegenerateFit(NumericalError):
    """The fit design matrix is rank-deficient."""


@dataclass(frozen=True)
class ImpurityConfig:
    """Impurity positions (wavelengths), detuning below the band edge and linewidth.

    ``omega_edge`` is the upper band edge; None means it is taken from the
    infinite lattice at k = 0.
    """

    positions: tuple
    detuning: float
    gamma_i: float = 1e-3
    dipole: tuple = tuple(SIGMA_PLUS)
    omega_edge: float | None = None

    def __post_init__(self):
        if not self.detuning > 0:
            raise ConfigError("detuning must be positive (impurity below the band edge)")
        if self.gamma_i < 0:
            raise ConfigError("gamma_i must be non-negative")
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise ConfigError("impurity positions must be 3-vectors")
        object.__setattr__(self, "positions", tuple(map(tuple, pos)))

    @property
    def r(self):
        return np.asarray(self.positions)

    @property
    def d(self):
        return np.asarray(self.dipole, dtype=complex)


@dataclass
class CouplingResult:
    """J_ij - i Gamma_ij / 2 in Gamma_I units; the diagonal holds the Lamb shift
    and -i Gamma_eff / 2 with the free-space decay already included."""

    matrix: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)

    @property
    def gamma_eff(self):
        return -2.0 * np.diag(self.matrix).imag

    @property
    def coupling(self):
        return self.matrix.real


@dataclass(frozen=True)
class Quadrature:
    """Nested octant mesh and broadening sequence for zone integrals.

    The mesh has ``mesh_n``^3 cells on the octant; each further level refines
    the cube next to k = 0 that is ``ratio`` times smaller, which resolves the
    band-edge peak at small detuning. ``broadenings`` (units of k0^2) feed the
    extrapolation of the on-shell photon pole.
    """

    mesh_n: int = 24
    levels: int = 6
    ratio: int = 4
    broadenings: tuple = (1e-2, 5e-3, 2.5e-3)
    tolerance: float = 1e-3


def upper_band_edge(lattice, reg, dipole=SIGMA_PLUS):
    """Two-level band energy at k = 0, the lower edge of the photon-like band."""
    omega, _ = dispersion(np.zeros((1, 3)), lattice, reg, TwoLevel(tuple(dipole)))
    return float(omega[0])


def nested_octant_mesh(lattice, n, levels, ratio=4):
    """Cell-centred octant mesh refined geometrically towards k = 0.

    Weights sum to 1 (fraction of the zone, using mirror symmetry).
    """
    corner = lattice.zone_corner
    pts, wts = [], []
    scale = 1.0
    for level in range(levels):
        c = (np.arange(n) + 0.5) / n * scale
        grid = np.array(np.meshgrid(c, c, c, indexing="ij")).reshape(3, -1).T
        if level < levels - 1:
            grid = grid[~np.all(grid < scale / ratio, axis=1)]
        pts.append(grid * corner)
        wts.append(np.full(len(grid), (scale / n) ** 3))
        scale /= ratio
    return np.concatenate(pts), np.concatenate(wts)


def richardson(values, tolerance):
    """Extrapolate a sequence taken at step sizes h, h/2, h/4, ... to h -> 0.

    Assumes an error expansion c1 h + c2 h^2 + ...; raises when the last two
    extrapolants differ by more than ``tolerance`` (relative, with an
    absolute floor of the same size).
    """
    table = [np.asarray(values, dtype=complex)]
    for order in range(1, len(values)):
        prev = table[-1]
        f = 2.0**order
        table.append((f * prev[1:] - prev[:-1]) / (f - 1.0))
    best = table[-1][0]
    if len(table) > 1:
        rival = table[-2][-1]
        if abs(best - rival) > tolerance * max(abs(best), 1.0):
            raise NonConvergedExtrapolation(
                f"extrapolants {best:.6g} and {rival:.6g} disagree")
    return best


def broadened_pole_integral(a_ho, eta, shell=None):
    """Integral over q of d^* g'(q) d / (2 pi)^3 with k0^2 - q^2 -> k0^2 - q^2 + i eta k0^2.

    Any unit dipole gives the same result (the angular average of |d.q|^2 is
    q^2/3). ``shell`` restricts |q| to [k0 - shell, k0 + shell]; the
    broadening is then measured in units of 2 k0 shell, so that the pole's
    half-width in q is ``eta * shell`` and stays well inside the shell.
    """
    lo, hi = (0.0, np.inf) if shell is None else (K0 - shell, K0 + shell)
    if shell is not None:
        eta = eta * 2.0 * shell / K0
    width = eta * K0

    def radial(q):
        return q * q * (K0**2 - q * q / 3.0) * np.exp(-0.5 * (q * a_ho) ** 2)

    def re(q):
        den = K0**2 - q * q
        return radial(q) * den / (den**2 + (eta * K0**2) ** 2)

    def im(q):
        den = K0**2 - q * q
        return -radial(q) * eta * K0**2 / (den**2 + (eta * K0**2) ** 2)

    # split the range around the pole so quad resolves the Lorentzian
    cuts = [max(lo, K0 - 40 * width), K0, min(hi, K0 + 40 * width)] if shell is None else \
        [lo, K0, hi]
    pieces = [(lo, cuts[0]), (cuts[0], K0), (K0, cuts[2]), (cuts[2], hi)]
    total = 0.0 + 0.0j
    for a, b in pieces:
        if b <= a:
            continue
        opts = {"limit": 400, "epsabs": 1e-14, "epsrel": 1e-12}
        total += integrate.quad(re, a, b, **opts)[0] + 1j * integrate.quad(im, a, b, **opts)[0]
    return total / (2.0 * np.pi**2 * K0**2)


def on_shell_integral(a_ho, broadenings=(1e-2, 5e-3, 2.5e-3), tolerance=1e-3, shell=None):
    """Broadened pole integral extrapolated to zero broadening.

    The imaginary part tends to -(k0 / 6 pi) exp(-k0^2 a_ho^2 / 2), the on-shell
    photon contribution that cancels the free-space impurity decay.
    """
    vals = [broadened_pole_integral(a_ho, eta, shell) for eta in broadenings]
    ratios = np.asarray(broadenings[:-1]) / np.asarray(broadenings[1:])
    if not np.allclose(ratios, 2.0):
        raise ConfigError("broadenings must halve successively")
    return richardson(vals, tolerance)


def on_shell_integral_exact(a_ho):
    """Closed form of the zero-broadening limit of the imaginary part."""
    return -1j * K0 / (6.0 * np.pi) * np.exp(-0.5 * (K0 * a_ho) ** 2)


class InfiniteImpurityKernel:
    """Zone-integral data for impurities in an infinite two-level lattice.

    All impurities share the intra-cell ``offset`` (default: face centre of an
    x-y plaquette), so separations between them are lattice vectors. The
    self-energy is split into a regular zone integral and the free-photon
    pole; the pole's real part cancels the direct impurity-impurity term
    exactly and its imaginary part is evaluated as a broadened radial
    integral extrapolated to zero broadening.
    """

    def __init__(self, lattice, reg, quad=None, offset=None, dipole=SIGMA_PLUS):
        if lattice.kind != SIMPLE_CUBIC or lattice.is_finite:
            raise ConfigError("infinite impurity integrals need an infinite simple cubic lattice")
        d = np.asarray(dipole, dtype=complex)
        if not is_mirror_symmetric(d):
            raise ConfigError("octant integration needs a mirror-symmetric dipole")
        a = lattice.spacing
        offset = np.array([0.5 * a, 0.5 * a, 0.0]) if offset is None else np.asarray(offset, float)
        halves = offset / (0.5 * a)
        if not np.allclose(halves, np.round(halves)) or np.allclose(np.mod(np.round(halves), 2), 0):
            raise ConfigError("impurity offset must be a non-zero half-lattice vector off the sites")
        self.lattice, self.reg, self.dipole = lattice, reg, d
        self.quad = quad or Quadrature()
        self.offset = offset
        ks, w = nested_octant_mesh(lattice, self.quad.mesh_n, self.quad.levels, self.quad.ratio)
        plain, shifted, resonant = raw_reciprocal_sums(ks, lattice, reg, offset)
        if np.any(resonant):
            raise NumericalError("quadrature mesh touches the light sphere")
        self.ks, self.weights = ks, w
        self.f0 = np.einsum("i,mij,j->m", np.conj(d), plain, d).real
        self.fr2 = np.abs(np.einsum("i,mij,j->m", np.conj(d), shifted, d)) ** 2
        vol = lattice.cell_volume
        e = reg.expfactor
        self.beta = PREFACTOR * e / vol
        self.self_term = greens_self_scalar(reg.a_ho)
        self.omega = self.beta * self.f0 - PREFACTOR * e * self.self_term.real
        self.edge = upper_band_edge(lattice, reg, d)
        inside = np.linalg.norm(ks, axis=1) < K0
        self.lower_max = self.omega[~inside].max() if np.any(~inside) else -np.inf
        self.upper_min = min(self.omega[inside].min(), self.edge) if np.any(inside) else self.edge
        self._scale = PREFACTOR**2 * e**2 / vol**2
        self._shell = None

    def _check_separation(self, r):
        n = np.asarray(r, dtype=float) / self.lattice.spacing
        if not np.allclose(n, np.round(n), atol=1e-9):
            raise ConfigError("impurity separation must be a lattice vector")
        return np.asarray(r, dtype=float)

    def regular_part(self, separation, detuning):
        """Zone integral of the pole-subtracted self-energy (real for in-gap impurities)."""
        r = self._check_separation(separation)
        omega_i = self.edge - detuning
        if not self.lower_max < omega_i < self.upper_min:
            raise NumericalError(f"impurity frequency {omega_i:.6g} lies outside the band gap")
        cosines = np.prod(np.cos(self.ks * r), axis=1)
        integrand = self.fr2 / (omega_i - self.omega) + self.f0 / self.beta
        return self._scale * np.sum(self.weights * integrand * cosines)

    def on_shell(self):
        if self._shell is None:
            self._shell = on_shell_integral(self.reg.a_ho, self.quad.broadenings,
                                            self.quad.tolerance)
        return self._shell

    def self_energy(self, separation, detuning):
        """J - i Gamma / 2 for the given separation (zero for the diagonal element)."""
        value = self.regular_part(separation, detuning)
        if np.allclose(separation, 0.0):
            e = self.reg.expfactor
            value += -PREFACTOR * e * (self.self_term.real + 1j * self.on_shell().imag)
            # free-space decay of the impurity itself
            value += -0.5j
        return complex(value)

    def coupling(self, positions, detuning):
        """CouplingResult for impurities at lattice-vector separations."""
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        n = len(pos)
        mat = np.empty((n, n), dtype=complex)
        for i in range(n):
            for j in range(i, n):
                mat[i, j] = mat[j, i] = self.self_energy(pos[i] - pos[j], detuning)
        meta = {"mesh_n": self.quad.mesh_n, "levels": self.quad.levels,
                "ratio": self.quad.ratio, "broadenings": list(self.quad.broadenings),
                "omega_edge": self.edge, "detuning": detuning}
        return CouplingResult(mat, "infinite-integral", meta)


def coupling_infinite(separation, detuning, lattice, reg, quad=None, offset=None,
                      dipole=SIGMA_PLUS, kernel=None):
    """Effective exchange J_ij - i Gamma_ij/2 (Gamma_I units) between two impurities."""
    kernel = kernel or InfiniteImpurityKernel(lattice, reg, quad, offset, dipole)
    return kernel.self_energy(separation, detuning)


def decay_infinite(detuning, lattice, reg, quad=None, gamma_i=1.0, offset=None,
                   dipole=SIGMA_PLUS, kernel=None):
    """Effective decay rate of one impurity in an infinite array, in Gamma_I units.

    The result is reported relative to Gamma_I, so ``gamma_i`` only matters
    when it is zero (no coupling, no decay).
    """
    if gamma_i == 0:
        return 0.0
    kernel = kernel or InfiniteImpurityKernel(lattice, reg, quad, offset, dipole)
    return float(-2.0 * kernel.self_energy(np.zeros(3), detuning).imag)


def impurity_array_coupling(impurities, sites, gamma_i, dipole=SIGMA_PLUS):
    """Matrix V (n_imp, n_sites) of impurity-array couplings in Gamma0 units."""
    imp = np.atleast_2d(np.asarray(impurities, dtype=float))
    r = imp[:, None, :] - sites[None, :, :]
    if np.any(np.linalg.norm(r, axis=-1) < 1e-12):
        raise ConfigError("impurity coincides with an array site")
    d = np.asarray(dipole, dtype=complex)
    return np.sqrt(gamma_i) * dipole_coupling(r, d, d)


def direct_impurity_coupling(impurities, gamma_i, dipole=SIGMA_PLUS):
    """Free-photon exchange between impurities (Gamma0 units); zero diagonal."""
    imp = np.atleast_2d(np.asarray(impurities, dtype=float))
    n = len(imp)
    out = np.zeros((n, n), dtype=complex)
    d = np.asarray(dipole, dtype=complex)
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = gamma_i * dipole_coupling(imp[i] - imp[j], d, d)
    return out


def coupling_finite(modes, table, config):
    """Born-Markov effective Hamiltonian of impurities in a finite two-level array.

    H_eff = V (omega_I - H_array)^-1 V^T + direct exchange, evaluated by the
    eigenmode expansion. Returned relative to omega_I and in Gamma_I units,
    including the free-space -i/2.
    """
    if not isinstance(table.scheme, TwoLevel):
        raise ConfigError("finite impurity coupling needs a two-level array")
    if config.omega_edge is None:
        raise ConfigError("finite coupling needs an explicit omega_edge")
    if config.gamma_i == 0:
        raise ConfigError("gamma_i must be positive for Gamma_I-relative results")
    omega_i = config.omega_edge - config.detuning
    v = impurity_array_coupling(config.r, table.positions, config.gamma_i, config.d)
    left = v @ modes.vectors
    right = modes.dual @ v.T
    sigma = (left / (omega_i - modes.values)) @ right
    mat = (sigma + direct_impurity_coupling(config.r, config.gamma_i, config.d)) / config.gamma_i
    mat = mat - 0.5j * np.eye(len(mat))
    meta = {"omega_edge": config.omega_edge, "detuning": config.detuning,
            "gamma_i": config.gamma_i, "n_sites": table.n_sites}
    return CouplingResult(mat, "finite-resolvent", meta)


def central_impurity_pair(extent, spacing):
    """Two impurities one spacing apart on a face centre near the array centre."""
    nx, ny, nz = extent
    # plaquette centre just below the geometric centre, in the central layer
    base = np.array([np.floor((nx - 2) / 2.0) + 0.5, np.floor((ny - 2) / 2.0) + 0.5,
                     (nz - 1) // 2]) * spacing
    return np.array([base, base + [spacing, 0.0, 0.0]])


# ---------------------------------------------------------------- fit models


@dataclass
class FitResult:
    """Fitted parameters with residual norm and covariance.

    ``params`` always contains ``A`` (band curvature, Gamma0 lambda0^2) and
    ``curvature`` = a / sqrt(A); other keys depend on the model.
    """

    model: str
    params: dict
    residual_norm: float
    covariance: np.ndarray
    spacing: float
    per_size: dict = field(default_factory=dict)

    def xi(self, detuning):
        """Correlation length sqrt(A / Delta)."""
        return np.sqrt(self.params["A"] / np.asarray(detuning, dtype=float))

    def evaluate(self, r, xi):
        """Yukawa model C (a/r) exp(-r/xi) at distance r and correlation length xi."""
        return self.params["C"] * (self.spacing / r) * np.exp(-np.asarray(r) / xi)


def xi_finite(detuning, A, c1, size, spacing):
    """Correlation length with the finite-size momentum cutoff c1 / (N a)."""
    return np.sqrt(A / (np.asarray(detuning) + A * c1**2 / (np.asarray(size) * spacing) ** 2))


def _solve(residual, x0, bounds):
    res = optimize.least_squares(residual, x0, bounds=bounds, x_scale="jac", xtol=1e-14,
                                 ftol=1e-14, gtol=1e-14, max_nfev=20000)
    jac = res.jac
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv.size == 0 or sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateFit("fit Jacobian is rank-deficient")
    dof = max(len(res.fun) - len(x0), 1)
    cov = np.linalg.inv(jac.T @ jac) * (res.fun @ res.fun) / dof
    return res.x, float(np.linalg.norm(res.fun)), cov


def fit_yukawa(separations, detunings, couplings, spacing, anisotropy=1.0):
    """Fit J = C (a/r) exp(-r sqrt(Delta/A)) with r^2 = dx^2 + dy^2 + anisotropy dz^2.

    ``anisotropy`` is A/A_z. Returns a FitResult with A, C and a/sqrt(A).
    """
    sep = np.atleast_2d(np.asarray(separations, dtype=float))
    det = np.asarray(detunings, dtype=float)
    val = np.asarray(couplings, dtype=float)
    if sep.shape[0] == 1:
        sep = np.repeat(sep, len(det), axis=0)
    if not (len(sep) == len(det) == len(val)):
        raise ConfigError("separations, detunings and couplings must have equal length")
    if len(val) < 2:
        raise DegenerateFit("need at least two samples")
    r = np.sqrt(sep[:, 0] ** 2 + sep[:, 1] ** 2 + anisotropy * sep[:, 2] ** 2)
    root = np.sqrt(det)

    # kappa = 1/sqrt(A) keeps the xi -> infinity limit at a finite boundary
    def model(p):
        return p[1] * (spacing / r) * np.exp(-r * root * p[0])

    scale = np.max(np.abs(val))
    c0 = val[np.argmin(r * root)] * r[np.argmin(r * root)] / spacing
    x, rn, cov = _solve(lambda p: (model(p) - val) / scale, [1.0 / spacing, c0],
                        ([0.0, -np.inf], [np.inf, np.inf]))
    kappa, c = x
    A = np.inf if kappa == 0 else 1.0 / kappa**2
    jac = np.diag([-2.0 / kappa**3 if kappa else np.inf, 1.0])
    params = {"A": A, "C": c, "curvature": spacing * kappa, "anisotropy": anisotropy}
    return FitResult("yukawa", params, rn * scale, jac @ cov @ jac.T * scale**2, spacing)


def fit_finite_xi(detunings, sizes, couplings, spacing, C, separation=None):
    """Fit J = C (a/r) exp(-r / xi_fin) per array size and average the parameters.

    ``C`` is the coupling prefactor carried over from the infinite array and
    ``separation`` the impurity distance (default one spacing). Returns the
    size-averaged a/sqrt(A) and c1; per-size fits are in ``per_size``.
    """
    det = np.asarray(detunings, dtype=float)
    size = np.asarray(sizes)
    val = np.asarray(couplings, dtype=float)
    r = spacing if separation is None else float(separation)
    groups = np.unique(size)
    if len(groups) < 3:
        raise ConfigError("need at least three array sizes")
    per = {}
    for n in groups:
        m = size == n
        if m.sum() < 3:
            raise DegenerateFit(f"size {n} has fewer than three detunings")
        scale = np.max(np.abs(val[m]))

        def resid(p, m=m, n=n, scale=scale):
            xi = xi_finite(det[m], 1.0 / p[0] ** 2, p[1], n, spacing)
            return (C * (spacing / r) * np.exp(-r / xi) - val[m]) / scale

        x, rn, cov = _solve(resid, [1.0 / spacing, 2.0], ([1e-6, 0.0], [np.inf, np.inf]))
        per[int(n)] = {"A": 1.0 / x[0] ** 2, "curvature": spacing * x[0], "c1": x[1],
                       "residual_norm": rn * scale}
    curv = np.array([p["curvature"] for p in per.values()])
    c1 = np.array([p["c1"] for p in per.values()])
    params = {"curvature": float(curv.mean()), "A": float((spacing / curv.mean()) ** 2),
              "c1": float(c1.mean()), "C": C}
    cov = np.cov(np.vstack([curv, c1])) / len(curv)
    rn = float(np.sqrt(sum(p["residual_norm"] ** 2 for p in per.values())))
    return FitResult("finite-xi", params, rn, cov, spacing, per)


def fit_decay_scaling(sizes, detunings, decay_rates, spacing, c1):
    """Fit Gamma_eff/Gamma_I = c2 (a/xi_fin) exp(-N a / xi_fin) / N in log space.

    With several detunings per size each size is fitted separately and the
    parameters averaged; with one detuning a single joint fit over sizes is
    made. ``c1`` is carried over from the finite-coupling fit.
    """
    size = np.asarray(sizes, dtype=float)
    det = np.asarray(detunings, dtype=float)
    rate = np.asarray(decay_rates, dtype=float)
    if np.any(rate <= 0):
        raise ConfigError("decay rates must be positive for a log-space fit")
    if len(np.unique(size)) < 4 and len(np.unique(det)) < 3:
        raise ConfigError("need at least four array sizes")

    def logmodel(p, n, dd):
        xi = xi_finite(dd, 1.0 / p[0] ** 2, c1, n, spacing)
        return np.log(p[1]) + np.log(spacing / xi) - n * spacing / xi - np.log(n)

    def one(m):
        return _solve(lambda p: logmodel(p, size[m], det[m]) - np.log(rate[m]),
                      [1.0 / spacing, 1.0], ([1e-6, 1e-12], [np.inf, np.inf]))

    per = {}
    if len(np.unique(det)) >= 3:
        for n in np.unique(size):
            x, rn, _ = one(size == n)
            per[int(n)] = {"A": 1.0 / x[0] ** 2, "curvature": spacing * x[0], "c2": x[1],
                           "residual_norm": rn}
        curv = np.array([p["curvature"] for p in per.values()])
        c2 = np.array([p["c2"] for p in per.values()])
        cov = np.cov(np.vstack([curv, c2])) / len(curv)
        rn = float(np.sqrt(sum(p["residual_norm"] ** 2 for p in per.values())))
        curv, c2 = float(curv.mean()), float(c2.mean())
    else:
        x, rn, cov = one(np.ones(len(size), dtype=bool))
        curv, c2 = spacing * x[0], x[1]
    params = {"curvature": curv, "A": (spacing / curv) ** 2, "c2": c2, "c1": c1}
    return FitResult("decay-scaling", params, rn, cov, spacing, per)


def log_linear_r2(sizes, decay_rates):
    """Coefficient of determination of a straight-line fit of log(rate) against N."""
    x = np.asarray(sizes, dtype=float)
    y = np.log(np.asarray(decay_rates, dtype=float))
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return float(1.0 - resid @ resid / np.sum((y - y.mean()) ** 2))
