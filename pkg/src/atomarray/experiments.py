"""Experiment runners and canned figure configurations.

Each runner takes a RunConfig and returns a list of artifacts: ("csv",
filename, header, rows) or ("json", filename, payload).
"""

import numpy as np

from .bloch import bands_along_path, dos, gap_report, mesh_spectrum
from .dynamics import composite_system, evolve, extract_rabi
from .finite import apply_defects, assemble_hamiltonian, eigensolve, finite_dos, site_average_decay, site_table
from .impurity import (
    ImpurityConfig,
    InfiniteImpurityKernel,
    central_impurity_pair,
    coupling_finite,
    fit_decay_scaling,
    fit_finite_xi,
    fit_yukawa,
    log_linear_r2,
    upper_band_edge,
)
from .model import ConfigError, standard_path


def _fit_payload(fit):
    out = {"model": fit.model, "params": dict(fit.params), "residual_norm": fit.residual_norm}
    if fit.per_size:
        out["per_size"] = {str(k): v for k, v in fit.per_size.items()}
    return out


def run_bands(cfg):
    lat, reg, scheme = cfg.lattice(), cfg.regularization(), cfg.scheme()
    path = standard_path(lat, cfg["path"]["points_per_segment"])
    res = bands_along_path(path, lat, reg, scheme)
    nb = res.bands.shape[1]
    header = ["index", "distance", "kx", "ky", "kz", "resonant"] + [f"band_{i}" for i in range(nb)]
    rows = [[i, res.distance[i], *res.kpoints[i], bool(res.resonant[i]), *res.bands[i]]
            for i in range(len(res.distance))]
    summary = {"labels": res.labels, "vertex_index": res.vertex_index,
               "n_points": len(rows), "n_resonant": int(res.resonant.sum())}
    return [("csv", "bands.csv", header, rows), ("json", "bands.json", summary)]


def _spectrum(cfg):
    lat, reg, scheme = cfg.lattice(), cfg.regularization(), cfg.scheme()
    return mesh_spectrum(lat, reg, scheme, cfg["mesh"]["octant_points_per_axis"])


def _gap_payload(report):
    return {"gap_present": bool(report.has_gap), "lower_edge": report.lower_edge,
            "upper_edge": report.upper_edge, "width": report.width,
            "states_below_inside_light_sphere": report.n_below_inside,
            "band_min": report.band_min, "band_max": report.band_max}


def _omega_range(cfg):
    m = cfg["mesh"]
    if "omega_min_gamma0" in m and "omega_max_gamma0" in m:
        return (m["omega_min_gamma0"], m["omega_max_gamma0"])
    return None


def run_dos(cfg):
    spec = _spectrum(cfg)
    hist = dos(spec, cfg["mesh"]["bins"], _omega_range(cfg))
    rows = [[lo, hi, d] for lo, hi, d in zip(hist.edges[:-1], hist.edges[1:], hist.density)]
    summary = {"mesh_points_per_axis": spec.mesh_n, "bins": len(hist.density),
               "underflow": hist.underflow, "overflow": hist.overflow,
               "masked": hist.masked, "total_states_per_cell": hist.total,
               "gap": _gap_payload(gap_report(spec))}
    return [("csv", "dos.csv", ["omega_lo", "omega_hi", "density_per_cell"], rows),
            ("json", "dos.json", summary)]


def run_gap(cfg):
    spec = _spectrum(cfg)
    payload = _gap_payload(gap_report(spec))
    payload["mesh_points_per_axis"] = spec.mesh_n
    return [("json", "gap.json", payload)]


def run_finite_dos(cfg):
    lat = cfg.lattice()
    if not lat.is_finite:
        raise ConfigError("lattice/extent_sites: finite-dos needs a finite extent")
    density = cfg["lattice"].get("defect_density", 0.0)
    if density:
        lat = apply_defects(lat, density, cfg["seed"])
    table = site_table(lat, cfg.scheme())
    vals = eigensolve(assemble_hamiltonian(table), vectors=False)
    rng = _omega_range(cfg)
    if rng is None:
        rng = tuple(np.quantile(vals.real, [0.005, 0.995]))
    edges = np.linspace(rng[0], rng[1], cfg["mesh"]["bins"] + 1)
    counts, dens = finite_dos(vals, edges, per_site=table.n_sites)
    rows = [[lo, hi, c, d] for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, dens)]
    summary = {"n_sites": table.n_sites, "n_states": len(vals), "n_vacancies": len(lat.vacancies),
               "below_range": int(np.sum(vals.real < edges[0])),
               "above_range": int(np.sum(vals.real > edges[-1]))}
    window = cfg["finite"].get("gap_window_gamma0")
    if window:
        summary["gap_window"] = list(window)
        summary["in_gap_count"] = int(np.sum((vals.real > window[0]) & (vals.real < window[1])))
    header = ["omega_lo", "omega_hi", "count", "density_per_site"]
    return [("csv", "finite_dos.csv", header, rows), ("json", "finite_dos.json", summary)]


def _window(cfg, detunings):
    w = cfg["impurity"].get("fit_window_gamma0")
    d = np.asarray(detunings)
    if not w:
        return np.ones(len(d), dtype=bool)
    return (d >= w[0]) & (d <= w[1])


def _infinite_kernel(cfg):
    lat = cfg.lattice()
    if lat.is_finite:
        lat = type(lat)(lat.spacing, lat.kind)
    return InfiniteImpurityKernel(lat, cfg.regularization(), cfg.quadrature())


def _omega_edge(cfg):
    imp = cfg["impurity"]
    if "omega_edge_gamma0" in imp:
        return imp["omega_edge_gamma0"]
    lat = cfg.lattice()
    return upper_band_edge(type(lat)(lat.spacing, lat.kind), cfg.regularization())


def _finite_sweep(cfg):
    imp = cfg["impurity"]
    a = cfg["lattice"]["spacing_lambda0"]
    edge = _omega_edge(cfg)
    rows = []
    for n in imp["sizes"]:
        ext = (n, n, n - 1)
        table = site_table(cfg.lattice(extent=ext))
        modes = eigensolve(assemble_hamiltonian(table))
        pair = central_impurity_pair(ext, a)
        pair[1] = pair[0] + a * np.asarray(imp["separation_spacings"], dtype=float)
        for det in imp["detunings_gamma0"]:
            conf = ImpurityConfig(pair, det, imp["gamma_ratio"], omega_edge=edge)
            res = coupling_finite(modes, table, conf)
            rows.append((n, det, res.coupling[0, 1], res.gamma_eff[0]))
    return edge, rows


def _prefactor(cfg):
    imp = cfg["impurity"]
    if "coupling_prefactor_gammaI" in imp:
        return imp["coupling_prefactor_gammaI"], None
    # fall back to the infinite-array Yukawa fit on its asymptotic window
    kernel = _infinite_kernel(cfg)
    a = cfg["lattice"]["spacing_lambda0"]
    dets = np.logspace(-4, -3, 6)
    vals = [kernel.self_energy([a, 0.0, 0.0], d).real for d in dets]
    fit = fit_yukawa([[a, 0.0, 0.0]], dets, vals, a)
    return fit.params["C"], fit


def run_coupling(cfg):
    imp = cfg["impurity"]
    a = cfg["lattice"]["spacing_lambda0"]
    sep = a * np.asarray(imp["separation_spacings"], dtype=float)
    dets = imp["detunings_gamma0"]
    if imp["method"] == "infinite":
        kernel = _infinite_kernel(cfg)
        rows = []
        for d in dets:
            j = kernel.self_energy(sep, d)
            gamma = -2.0 * kernel.self_energy(np.zeros(3), d).imag
            rows.append([d, j.real, gamma])
        summary = {"method": "infinite-integral", "omega_edge": kernel.edge,
                   "quadrature_points": len(kernel.ks)}
        mask = _window(cfg, dets)
        if mask.sum() >= 2:
            fit = fit_yukawa([sep], np.asarray(dets)[mask],
                             np.asarray([r[1] for r in rows])[mask], a)
            summary["fit"] = _fit_payload(fit)
        header = ["detuning", "coupling", "gamma_eff"]
        return [("csv", "coupling.csv", header, rows), ("json", "coupling.json", summary)]
    edge, sweep = _finite_sweep(cfg)
    summary = {"method": "finite-resolvent", "omega_edge": edge}
    sizes = np.array([r[0] for r in sweep])
    det = np.array([r[1] for r in sweep])
    mask = _window(cfg, det)
    if len(np.unique(sizes)) >= 3:
        c, cfit = _prefactor(cfg)
        fit = fit_finite_xi(det[mask], sizes[mask], np.array([r[2] for r in sweep])[mask], a, c,
                            separation=float(np.linalg.norm(sep)))
        summary["fit"] = _fit_payload(fit)
        if cfit is not None:
            summary["prefactor_fit"] = _fit_payload(cfit)
    header = ["size", "detuning", "coupling", "gamma_eff"]
    return [("csv", "coupling_finite.csv", header, [list(r) for r in sweep]),
            ("json", "coupling_finite.json", summary)]


def run_decay_scaling(cfg):
    a = cfg["lattice"]["spacing_lambda0"]
    edge, sweep = _finite_sweep(cfg)
    sizes = np.array([r[0] for r in sweep])
    det = np.array([r[1] for r in sweep])
    coup = np.array([r[2] for r in sweep])
    gam = np.array([r[3] for r in sweep])
    mask = _window(cfg, det)
    c, _ = _prefactor(cfg)
    sep = a * np.linalg.norm(cfg["impurity"]["separation_spacings"])
    xi_fit = fit_finite_xi(det[mask], sizes[mask], coup[mask], a, c, separation=sep)
    decay_fit = fit_decay_scaling(sizes[mask], det[mask], gam[mask], a, xi_fit.params["c1"])
    r2 = {fmt: log_linear_r2(sizes[det == d], gam[det == d])
          for d, fmt in ((d, repr(float(d))) for d in np.unique(det))}
    summary = {"omega_edge": edge, "coupling_prefactor": c, "coupling_fit": _fit_payload(xi_fit),
               "decay_fit": _fit_payload(decay_fit), "log_linear_r2": r2,
               "min_log_linear_r2": min(r2.values())}
    header = ["size", "detuning", "coupling", "gamma_eff"]
    return [("csv", "decay_scaling.csv", header, [list(r) for r in sweep]),
            ("json", "decay_scaling.json", summary)]


def run_rabi(cfg):
    lat = cfg.lattice()
    if not lat.is_finite:
        raise ConfigError("lattice/extent_sites: rabi needs a finite extent")
    dyn = cfg["dynamics"]
    a = lat.spacing
    edge = _omega_edge(cfg)
    table = site_table(lat)
    pair = central_impurity_pair(lat.extent, a)
    g = dyn["gamma_ratio"]
    system = composite_system(table, pair, edge - dyn["detuning_gamma0"], g)
    times = np.linspace(0.0, dyn["duration_inv_gammaI"], dyn["time_steps"])
    traj = evolve(system, system.impurity_state(0), times / g)
    est = extract_rabi(times, traj.impurity_populations[:, 0])
    # Born-Markov reference on the bare array
    modes = eigensolve(assemble_hamiltonian(table))
    markov = coupling_finite(modes, table, ImpurityConfig(pair, dyn["detuning_gamma0"], g,
                                                          omega_edge=edge))
    rows = [[t, p[0], p[1], arr, nrm] for t, p, arr, nrm in
            zip(times, traj.impurity_populations, traj.array_population, traj.norm)]
    summary = {"omega": est.omega, "omega_doubled": est.omega_doubled,
               "gamma_eff": est.gamma_eff, "amplitude": est.amplitude,
               "max_pop_imp2": float(traj.impurity_populations[:, 1].max()),
               "markov_coupling": float(markov.coupling[0, 1]),
               "markov_gamma_eff": float(markov.gamma_eff[0]),
               "omega_edge": edge, "impurity_positions": pair}
    header = ["t_gammaI", "pop_imp1", "pop_imp2", "pop_array", "norm"]
    return [("csv", "rabi.csv", header, rows), ("json", "rabi.json", summary)]


def run_site_decay(cfg):
    rows, summary = [], {}
    for n in cfg["finite"]["sizes"]:
        table = site_table(cfg.lattice(extent=(n, n, n)))
        gbar = site_average_decay(eigensolve(assemble_hamiltonian(table)), table)
        idx = np.rint(table.positions / cfg["lattice"]["spacing_lambda0"]).astype(int)
        for i in range(table.n_sites):
            rows.append([n, i, *idx[i], gbar[i]])
        c = (n - 1) // 2
        center = c + c * n + c * n * n
        summary[str(n)] = {"corner": float(gbar[0]), "center": float(gbar[center])}
    header = ["size", "site", "ix", "iy", "iz", "gamma_bar"]
    return [("csv", "site_decay.csv", header, rows), ("json", "site_decay.json", summary)]


RUNNERS = {
    "bands": run_bands,
    "dos": run_dos,
    "gap": run_gap,
    "finite-dos": run_finite_dos,
    "coupling": run_coupling,
    "decay-scaling": run_decay_scaling,
    "rabi": run_rabi,
    "site-decay": run_site_decay,
}


# ------------------------------------------------------------ figure presets

FIGURES = ("fig3a", "fig3b", "fig4a", "fig4b", "fig5", "fig6")


class UnknownFigure(ConfigError):
    """The requested figure has no canned configuration."""


_FOUR_LEVEL = {"type": "four_level_bipartite", "delta_b_gamma0": 0.96, "delta_gamma0": 3.85,
               "delta_pi_gamma0": 3.99}
_FINITE_DETUNINGS = [float(x) for x in np.logspace(-2.5, 0.0, 11)]


def figure_configs(name, scale="ci"):
    """Canned run configurations (name, config dict) for one figure."""
    if scale not in ("paper", "ci"):
        raise ConfigError(f"unknown scale {scale!r}")
    paper = scale == "paper"
    if name == "fig3a":
        mesh = {"octant_points_per_axis": 100 if paper else 40, "bins": 164,
                "omega_min_gamma0": -2.0, "omega_max_gamma0": 6.0}
        n = 20 if paper else 12
        window = {"gap_window_gamma0": [1.0504, 2.6695]}
        base = {"lattice": {"spacing_lambda0": 0.24}, "mesh": mesh}
        return [
            ("infinite", {**base, "experiment": "dos"}),
            ("finite", {**base, "experiment": "finite-dos", "finite": window,
                        "lattice": {"spacing_lambda0": 0.24, "extent_sites": [n, n, n]}}),
            ("defects", {**base, "experiment": "finite-dos", "finite": window, "seed": 1,
                         "lattice": {"spacing_lambda0": 0.24, "extent_sites": [n, n, n],
                                     "defect_density": 0.1}}),
        ]
    if name == "fig3b":
        mesh = {"octant_points_per_axis": 100 if paper else 40, "bins": 237,
                "omega_min_gamma0": -12.0, "omega_max_gamma0": 12.0}
        n = 12 if paper else 8
        lat = {"spacing_lambda0": 0.24, "kind": "bipartite_z"}
        base = {"lattice": lat, "mesh": mesh, "scheme": _FOUR_LEVEL,
                "finite": {"gap_window_gamma0": [0.3410, 1.7188]}}
        return [
            ("infinite", {**base, "experiment": "dos"}),
            ("gap", {**base, "experiment": "gap"}),
            ("finite", {**base, "experiment": "finite-dos",
                        "lattice": {**lat, "extent_sites": [n, n, n]}}),
            ("defects", {**base, "experiment": "finite-dos", "seed": 1,
                         "lattice": {**lat, "extent_sites": [n, n, n], "defect_density": 0.1}}),
        ]
    sizes = [8, 10, 12, 14] if paper else [6, 8, 10, 12]
    if name == "fig4a":
        quad = {"octant_points_per_axis": 32 if paper else 24, "levels": 7 if paper else 6}
        return [
            ("infinite", {"experiment": "coupling", "lattice": {"spacing_lambda0": 0.24},
                          "impurity": {"method": "infinite", "quadrature": quad,
                                       "detunings_gamma0": [float(x) for x in np.logspace(-5, 0, 21)],
                                       "fit_window_gamma0": [1e-4, 1e-3]}}),
            ("finite", {"experiment": "coupling", "lattice": {"spacing_lambda0": 0.24},
                        "impurity": {"method": "finite", "sizes": sizes,
                                     "detunings_gamma0": _FINITE_DETUNINGS,
                                     "fit_window_gamma0": [0.003, 0.11]}}),
        ]
    if name == "fig4b":
        return [("finite", {"experiment": "decay-scaling", "lattice": {"spacing_lambda0": 0.24},
                            "impurity": {"method": "finite", "sizes": sizes,
                                         "detunings_gamma0": _FINITE_DETUNINGS,
                                         "fit_window_gamma0": [0.003, 0.11]}})]
    if name == "fig5":
        ext = [11, 11, 10] if paper else [9, 9, 8]
        lat = {"spacing_lambda0": 0.4, "extent_sites": ext}
        return [
            ("weak", {"experiment": "rabi", "lattice": lat,
                      "dynamics": {"gamma_ratio": 1e-3, "detuning_gamma0": 0.2}}),
            ("strong", {"experiment": "rabi", "lattice": lat,
                        "dynamics": {"gamma_ratio": 1.0, "detuning_gamma0": 0.2}}),
        ]
    if name == "fig6":
        return [("sizes", {"experiment": "site-decay", "lattice": {"spacing_lambda0": 0.24},
                           "finite": {"sizes": [6, 8, 10]}})]
    raise UnknownFigure(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")

