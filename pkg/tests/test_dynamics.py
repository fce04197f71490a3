import numpy as np
import pytest

from atomarray.dynamics import NoOscillation, composite_system, evolve, extract_rabi
from atomarray.finite import SiteTable, site_table
from atomarray.greens import RegularizationParams
from atomarray.impurity import ImpurityConfig, central_impurity_pair, coupling_finite, upper_band_edge
from atomarray.finite import assemble_hamiltonian, eigensolve
from atomarray.model import LatticeSpec, TwoLevel


def test_isolated_impurity_decays_exponentially():
    empty = SiteTable(np.zeros((0, 3)), np.zeros(0, dtype=int), TwoLevel())
    gamma = 0.37
    system = composite_system(empty, [[0.0, 0.0, 0.0]], 1.3, gamma)
    t = np.linspace(0.0, 10.0, 101)
    traj = evolve(system, system.impurity_state(0), t)
    np.testing.assert_allclose(traj.impurity_populations[:, 0], np.exp(-gamma * t), rtol=1e-12)
    np.testing.assert_allclose(traj.array_population, 0.0)


def test_population_never_grows():
    table = site_table(LatticeSpec(0.3, extent=(3, 3, 2)))
    system = composite_system(table, [[0.15, 0.15, 0.0]], 0.5, 0.1)
    traj = evolve(system, system.impurity_state(0), np.linspace(0, 50, 501))
    assert traj.norm[0] == pytest.approx(1.0)
    assert np.all(np.diff(traj.norm) <= 1e-12)


def test_evolve_validates_input():
    empty = SiteTable(np.zeros((0, 3)), np.zeros(0, dtype=int), TwoLevel())
    system = composite_system(empty, [[0.0, 0.0, 0.0]], 1.0, 1.0)
    with pytest.raises(ValueError):
        evolve(system, 2 * system.impurity_state(0), [0.0, 1.0])
    with pytest.raises(ValueError):
        evolve(system, system.impurity_state(0), [1.0, 0.0])


@pytest.mark.parametrize("omega, gamma", [(0.045, 3e-4), (0.023, 0.0), (0.3, 0.01)])
def test_extract_rabi_from_damped_cosine(omega, gamma):
    t = np.linspace(0.0, 6 * np.pi / omega, 4001)
    p = np.exp(-gamma * t) * np.cos(omega * t) ** 2
    est = extract_rabi(t, p)
    assert est.omega == pytest.approx(omega, rel=1e-2)
    assert est.omega_doubled == pytest.approx(2 * omega, rel=1e-2)
    assert est.gamma_eff == pytest.approx(gamma, abs=1e-2 * max(gamma, omega * 1e-2))
    assert est.amplitude == pytest.approx(np.exp(-gamma * t[-1] / 2), rel=0.05)


def test_extract_rabi_rejects_monotone_signal():
    t = np.linspace(0, 10, 500)
    with pytest.raises(NoOscillation):
        extract_rabi(t, np.exp(-t))


def test_extract_rabi_needs_uniform_grid():
    with pytest.raises(ValueError):
        extract_rabi([0.0, 1.0, 3.0, 4.0], [1.0, 0.0, 1.0, 0.0])


def test_weak_coupling_rabi_matches_markov_coupling():
    a = 0.4
    ext = (7, 7, 6)
    lat = LatticeSpec(a, extent=ext)
    reg = RegularizationParams(0.09 * a)
    edge = upper_band_edge(LatticeSpec(a), reg)
    table = site_table(lat)
    pair = central_impurity_pair(ext, a)
    g = 1e-3
    system = composite_system(table, pair, edge - 0.2, g)
    t = np.linspace(0.0, 300.0, 3001)
    traj = evolve(system, system.impurity_state(0), t / g)
    est = extract_rabi(t, traj.impurity_populations[:, 0])
    markov = coupling_finite(eigensolve(assemble_hamiltonian(table)), table,
                             ImpurityConfig(pair, 0.2, g, omega_edge=edge))
    assert est.omega == pytest.approx(abs(markov.coupling[0, 1]), rel=0.02)
    assert traj.impurity_populations[:, 1].max() > 0.95
