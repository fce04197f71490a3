import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomarray.greens import (
    RegularizationParams,
    ResonantWavevector,
    greens_ft_regularized,
    greens_real,
    greens_self,
    greens_self_scalar,
    lattice_sum,
    lattice_sums,
    reciprocal_indices,
)
from atomarray.impurity import on_shell_integral
from atomarray.model import BIPARTITE_Z, K0, LatticeSpec

from oracles import mp_greens, mp_self

@pytest.mark.parametrize("r", [(1.0, 0.0, 0.0), (0.24, 0.0, 0.0), (0.1, -0.2, 0.35),
                               (0.5, 0.5, 0.5), (1e-3, 2e-3, -1e-3), (3.7, -1.2, 0.4)])
def test_greens_real_matches_extended_precision(r):
    np.testing.assert_allclose(greens_real(r), mp_greens(r), rtol=1e-11, atol=0)


def test_greens_real_one_wavelength():
    g = greens_real([1.0, 0.0, 0.0])
    # exp(i k0 r) = 1 at one wavelength
    assert g[0, 0] == pytest.approx(2.0 * (1j * K0 - 1.0) / (4 * np.pi * K0**2), rel=1e-13)
    assert g[1, 1] == pytest.approx(-(K0**2 + 1j * K0 - 1.0) / (4 * np.pi * K0**2), rel=1e-13)
    np.testing.assert_allclose(g[[0, 0, 1], [1, 2, 2]], 0.0, atol=1e-18)


def test_greens_real_singular_at_origin():
    with pytest.raises(ValueError):
        greens_real(np.zeros(3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-2))
def test_greens_real_even_and_symmetric(r):
    g = greens_real(r)
    np.testing.assert_allclose(g, greens_real(-np.asarray(r)), rtol=1e-14)
    np.testing.assert_allclose(g, g.T, rtol=1e-14, atol=1e-300)


def test_ft_at_origin():
    np.testing.assert_allclose(greens_ft_regularized(np.zeros(3), 0.02), np.eye(3) / K0**2,
                               rtol=1e-14)


def test_ft_at_twice_k0():
    a_ho = 0.03
    g = greens_ft_regularized([2 * K0, 0.0, 0.0], a_ho)
    gauss = np.exp(-2.0 * K0**2 * a_ho**2)
    np.testing.assert_allclose(np.diag(g).real, gauss / K0**2 * np.array([1.0, -1 / 3, -1 / 3]),
                               rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-40, 40), min_size=3, max_size=3).filter(
    lambda v: abs(np.linalg.norm(v) - K0) > 1e-3))
def test_ft_trace_identity(q):
    a_ho = 0.0216
    q2 = float(np.dot(q, q))
    expected = (3 * K0**2 - q2) / (K0**2 * (K0**2 - q2)) * np.exp(-0.5 * q2 * a_ho**2)
    assert np.trace(greens_ft_regularized(q, a_ho)).real == pytest.approx(expected, rel=1e-12)


def test_ft_rejects_light_sphere():
    with pytest.raises(ResonantWavevector):
        greens_ft_regularized([K0, 0.0, 0.0], 0.02)


@pytest.mark.parametrize("a_ho", [0.005, 0.0216, 0.05, 0.2, 0.5, 1.5])
def test_self_term_matches_erfi_form(a_ho):
    assert greens_self_scalar(a_ho) == pytest.approx(mp_self(a_ho), rel=1e-12)


def test_self_term_imaginary_part():
    a_ho = 0.0216
    expected = -(K0 / (6 * np.pi)) * np.exp(-0.5 * (K0 * a_ho) ** 2)
    assert greens_self_scalar(a_ho).imag == pytest.approx(expected, rel=1e-14)


def test_self_term_monotone_in_width():
    vals = np.abs([greens_self_scalar(a) for a in np.linspace(0.01, 0.5, 10)])
    assert np.all(np.diff(vals) < 0)


def test_self_term_matches_broadened_integral():
    # the full broadened radial integral of g'(q) is G'(0)
    a_ho = 0.0216
    np.testing.assert_allclose(on_shell_integral(a_ho), greens_self_scalar(a_ho), rtol=1e-8)
    np.testing.assert_allclose(greens_self(a_ho), greens_self_scalar(a_ho) * np.eye(3))


def test_regularization_defaults():
    reg = RegularizationParams(0.0216)
    assert reg.q_cut == pytest.approx(np.sqrt(-2 * np.log(1e-12)) / 0.0216)
    assert reg.expfactor == pytest.approx(np.exp(0.5 * (K0 * 0.0216) ** 2))


def test_reciprocal_index_set_is_spherical(cubic, reg):
    n, b = reciprocal_indices(cubic, reg)
    lengths = np.linalg.norm(n * b, axis=1)
    assert lengths.max() <= reg.q_cut + 0.5 * np.linalg.norm(b) + 1e-9
    np.testing.assert_array_equal(n[0], 0)


def _windowed_real_space(k, lattice, offset, width):
    """Sum over R of G(R + offset) exp(-ik(R + offset)) with a Gaussian window exp(-(r/width)^2)."""
    cell = lattice.cell_lengths
    reach = 3.5 * width
    axes = [np.arange(-int(reach / c) - 1, int(reach / c) + 2) * c for c in cell]
    r = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T + offset
    dist = np.linalg.norm(r, axis=1)
    keep = (dist > 1e-9) & (dist < reach)
    r, dist = r[keep], dist[keep]
    w = np.exp(-(dist / width) ** 2) * np.exp(-1j * r @ k)
    return np.einsum("m,mij->ij", w, greens_real(r))


@pytest.mark.parametrize("kind, offset", [("simple_cubic", 0.0), ("bipartite_z", 1.0)])
def test_lattice_sum_matches_real_space(kind, offset):
    # well outside the light sphere the real-space sum converges as width^-2
    a = 0.4
    lat = LatticeSpec(a, kind)
    k = np.pi / a * np.array([0.9, 0.7, 0.5 / (2 if kind == BIPARTITE_Z else 1)])
    delta = np.array([0.0, 0.0, offset * a])
    ref = lattice_sum(k, lat, RegularizationParams(0.15 * a), offset=delta)
    s3 = _windowed_real_space(k, lat, delta, 3.0)
    s4 = _windowed_real_space(k, lat, delta, 4.0)
    extrapolated = (16 * s4 - 9 * s3) / 7
    assert np.abs(extrapolated - ref).max() < 1e-3 * np.abs(ref).max() + 1e-3


def test_lattice_sum_independent_of_smoothing():
    a = 0.3
    lat = LatticeSpec(a)
    k = np.array([1.1, -0.4, 2.3])
    s1 = lattice_sum(k, lat, RegularizationParams(0.07 * a))
    s2 = lattice_sum(k, lat, RegularizationParams(0.12 * a))
    np.testing.assert_allclose(s1, s2, atol=1e-9 * np.abs(s1).max())


def test_lattice_sum_inversion(cubic, reg, rng):
    ks = rng.uniform(-1, 1, (5, 3)) * cubic.zone_corner
    a = lattice_sums(ks, cubic, reg)
    b = lattice_sums(-ks, cubic, reg)
    np.testing.assert_allclose(a.plain, b.plain, atol=1e-10 * np.abs(a.plain).max())


def test_lattice_sum_rejects_light_sphere(cubic, reg):
    with pytest.raises(ResonantWavevector):
        lattice_sum(np.array([K0, 0.0, 0.0]), cubic, reg)


def test_explicit_cutoff_converges(cubic):
    k = np.array([0.3, 0.2, 0.1]) * np.pi / 0.24
    auto = lattice_sum(k, cubic, RegularizationParams(0.0216))
    cube = lattice_sum(k, cubic, RegularizationParams(0.0216, g_max=16))
    np.testing.assert_allclose(auto, cube, atol=1e-8 * np.abs(auto).max())
