import numpy as np
import pytest

from atomarray.bloch import (
    bands_along_path,
    bloch_matrices,
    bloch_spectrum,
    dispersion,
    dispersion_two_level,
    dos,
    gap_report,
    is_mirror_symmetric,
    mesh_spectrum,
    octant_mesh,
    full_mesh,
    pole_count,
    toy_hybridization,
)
from atomarray.greens import RegularizationParams
from atomarray.model import (
    K0,
    PI_DIPOLE,
    SIGMA_PLUS,
    ConfigError,
    FourLevelBipartite,
    LatticeSpec,
    ResonantMeshError,
    TwoLevel,
    standard_path,
)

# regression values locked after validation against the mesh gap search
OMEGA_GAMMA_A024 = 2.669518174740025
GAP_FOUR_LEVEL_20 = (0.34097, 1.71888)
GAP_TWO_LEVEL_30 = (1.05045, 2.67602)


def test_mirror_symmetry_of_dipoles():
    assert is_mirror_symmetric(SIGMA_PLUS)
    assert is_mirror_symmetric(PI_DIPOLE)
    assert not is_mirror_symmetric(np.array([1.0, 1.0, 0.0]) / np.sqrt(2))


@pytest.mark.parametrize("mesh", [octant_mesh, full_mesh])
def test_mesh_weights(cubic, mesh):
    ks, w = mesh(cubic, 4)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(np.abs(ks) < cubic.zone_corner)


def test_dispersion_at_gamma(cubic, reg):
    omega, _ = dispersion(np.zeros((1, 3)), cubic, reg)
    assert omega[0] == pytest.approx(OMEGA_GAMMA_A024, rel=1e-10)


def test_dispersion_real_off_light_sphere(cubic, reg, rng):
    ks = rng.uniform(-1, 1, (100, 3)) * cubic.zone_corner
    omega, resonant = dispersion_two_level(ks, cubic, reg)
    assert np.abs(omega.imag[~resonant]).max() < 1e-6


def test_x_and_y_dipoles_agree_on_z_axis(cubic, reg):
    ks = np.array([[0.0, 0.0, kz] for kz in np.linspace(1.0, 12.0, 5)])
    wx, _ = dispersion(ks, cubic, reg, TwoLevel((1.0, 0.0, 0.0)))
    wy, _ = dispersion(ks, cubic, reg, TwoLevel((0.0, 1.0, 0.0)))
    np.testing.assert_allclose(wx, wy, rtol=1e-10)


def test_dispersion_continuity(cubic, reg):
    k = np.array([0.6, 0.4, 0.3]) * cubic.zone_corner
    direction = np.array([1.0, -2.0, 0.5]) / np.sqrt(5.25)
    base, _ = dispersion(k[None], cubic, reg)
    steps = [1e-1, 1e-2, 1e-3, 1e-4]
    diffs = [abs(dispersion((k + h * direction)[None], cubic, reg)[0][0] - base[0]) for h in steps]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] < 1e-3


def test_bloch_matrix_hermitian_and_real_spectrum(bipartite, reg, gapped_scheme, rng):
    ks = rng.uniform(-1, 1, (30, 3)) * bipartite.zone_corner
    # the -i/2 free-space decay cancels the imaginary part of the self term
    mats, resonant = bloch_matrices(ks, bipartite, reg, gapped_scheme)
    herm = mats[~resonant]
    np.testing.assert_allclose(herm, np.conj(np.swapaxes(herm, 1, 2)),
                               atol=1e-10 * np.abs(herm).max())


def test_bloch_bases_are_equivalent(bipartite, reg, gapped_scheme):
    ks = np.array([[1.0, 2.0, 3.0]])
    pol, _ = bloch_matrices(ks, bipartite, reg, gapped_scheme)
    cart, _ = bloch_matrices(ks, bipartite, reg, gapped_scheme, basis="cartesian")
    np.testing.assert_allclose(np.linalg.eigvalsh(pol[0]), np.linalg.eigvalsh(cart[0]), atol=1e-9)


def test_bloch_rejects_mismatched_inputs(cubic, reg, gapped_scheme):
    with pytest.raises(ConfigError):
        bloch_matrices(np.zeros((1, 3)), cubic, reg, gapped_scheme)


def test_perturbation_splits_boundary_degeneracy(bipartite, reg, rng):
    kz = np.pi / (2 * bipartite.spacing)
    ks = np.column_stack([rng.uniform(-1, 1, (10, 2)) * bipartite.zone_corner[:2],
                          np.full(10, kz)])
    flat, _ = bloch_spectrum(ks, bipartite, reg, FourLevelBipartite())
    split, _ = bloch_spectrum(ks, bipartite, reg, FourLevelBipartite(0.0, 3.85, 0.0))
    scale = np.abs(flat).max(axis=1)
    assert np.all(np.abs(flat[:, ::2] - flat[:, 1::2]).max(axis=1) < 1e-8 * scale)
    assert np.all(np.diff(split, axis=1).min(axis=1) > 0)


def test_toy_crossing_and_splitting():
    lo, hi = toy_hybridization(K0, 0.0)
    assert lo == pytest.approx(K0) and hi == pytest.approx(K0)
    g = 0.3
    lo, hi = toy_hybridization(K0, g)
    assert hi - lo == pytest.approx(2 * g * np.sqrt(K0), rel=1e-12)


def test_toy_gap_scales_quadratically():
    # the lower branch tops out at omega0 - g^2 and the upper branch starts at omega0
    k = np.linspace(0.0, 200.0, 400001)
    gs = np.array([0.01, 0.02, 0.04, 0.08, 0.16])
    widths = []
    for g in gs:
        lo, hi = toy_hybridization(k, g, omega0=K0)
        widths.append(hi.min() - lo.max())
    slope = np.polyfit(np.log(gs), np.log(widths), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.05)


def test_two_level_path(cubic, reg):
    res = bands_along_path(standard_path(cubic, 12), cubic, reg, TwoLevel())
    assert res.bands.shape == (34, 1)
    assert np.all(np.isfinite(res.bands[~res.resonant]))


def test_unperturbed_bands_touch_at_zone_corner(bipartite, reg):
    corner = bipartite.zone_corner[None] * (1 - 1e-9)
    bands, _ = bloch_spectrum(corner, bipartite, reg, FourLevelBipartite())
    assert np.min(np.diff(bands[0])) < 1e-3


def test_pole_count(cubic):
    ks = np.array([[0.0, 0.0, 0.0], [0.3 * np.pi / 0.24, 0.0, 0.0], [np.pi / 0.24, 0.0, 0.0],
                   cubic.zone_corner * 0.99])
    np.testing.assert_array_equal(pole_count(ks, cubic), [1, 1, 0, 0])


@pytest.fixture(scope="module")
def four_level_spectrum(bipartite, reg, gapped_scheme):
    return mesh_spectrum(bipartite, reg, gapped_scheme, 20)


def test_four_level_gap_regression(four_level_spectrum):
    rep = gap_report(four_level_spectrum)
    assert rep.has_gap
    assert rep.n_below_inside == 3
    np.testing.assert_allclose([rep.lower_edge, rep.upper_edge], GAP_FOUR_LEVEL_20, atol=2e-5)


def test_path_is_consistent_with_mesh_gap(bipartite, reg, gapped_scheme, four_level_spectrum):
    # label path bands by pole count as on the mesh; the path gap must overlap the mesh gap
    rep = gap_report(four_level_spectrum)
    res = bands_along_path(standard_path(bipartite, 30), bipartite, reg, gapped_scheme)
    good = ~res.resonant
    bands = res.bands[good]
    poles = pole_count(res.kpoints[good], bipartite)
    below = rep.n_below_inside + 2 * (four_level_spectrum.poles.max() - poles)
    rows = np.arange(len(bands))
    lower = bands[rows, below - 1].max()
    upper = bands[rows, below].min()
    assert upper > lower
    assert max(lower, rep.lower_edge) < min(upper, rep.upper_edge)


def test_dos_weight_is_complete(four_level_spectrum):
    hist = dos(four_level_spectrum, 237)
    assert hist.total == pytest.approx(6.0, rel=1e-6)
    assert len(hist.density) == 237


def test_dos_gap_is_empty(four_level_spectrum):
    rep = gap_report(four_level_spectrum)
    hist = dos(four_level_spectrum, 237, (-12.0, 12.0))
    inside = (hist.edges[:-1] >= rep.lower_edge) & (hist.edges[1:] <= rep.upper_edge)
    assert inside.sum() > 5
    assert np.all(hist.density[inside] == 0)


def test_dos_rejects_empty_range(four_level_spectrum):
    with pytest.raises(ConfigError):
        dos(four_level_spectrum, 10, (1.0, 1.0))


def test_unperturbed_four_level_has_no_gap(bipartite, reg):
    spec = mesh_spectrum(bipartite, reg, FourLevelBipartite(), 10)
    assert not gap_report(spec).has_gap


def test_two_level_gap_regression(cubic, reg):
    rep = gap_report(mesh_spectrum(cubic, reg, TwoLevel(), 30))
    np.testing.assert_allclose([rep.lower_edge, rep.upper_edge], GAP_TWO_LEVEL_30, atol=2e-5)


def test_two_level_gap_moves_with_spacing():
    edges = []
    for a in (0.24, 0.45):
        lat = LatticeSpec(a)
        rep = gap_report(mesh_spectrum(lat, RegularizationParams(0.09 * a), TwoLevel(), 16))
        assert rep.has_gap
        edges.append(rep.upper_edge)
    assert abs(edges[0] - edges[1]) > 0.1


def test_octant_needs_mirror_symmetric_dipole(cubic, reg):
    tilted = TwoLevel(tuple(np.array([1.0, 1.0, 0.0]) / np.sqrt(2)))
    with pytest.raises(ConfigError):
        mesh_spectrum(cubic, reg, tilted, 4)


def test_resonant_mesh_aborts(cubic):
    loose = RegularizationParams(0.0216, pole_tolerance=0.05)
    with pytest.raises(ResonantMeshError):
        mesh_spectrum(cubic, loose, TwoLevel(), 10)
