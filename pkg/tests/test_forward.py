import numpy as np
import pytest

from vlens.field import ElectricField
from vlens.forward import (FieldBlowup, SolverConfig, dyadic_time, evolve,
                           derivative_diagnostics, local_data_size,
                           moment_propagation_check, picard_lwp,
                           self_convergence_order, step, stepping_reference,
                           time_mesh)
from vlens.grids import DistributionGrid, gaussian_grid, lebesgue_norm


def node_centered_gaussian(n, L, amplitude, width, n_p=None, L_p=None):
    ax = np.linspace(-L, L, n)
    c = ax[n // 2]
    return gaussian_grid(n, n_p or n, L, L_p or L, amplitude=amplitude,
                         width_q=width, width_p=width,
                         center_q=(c, c), center_p=(c, c))


def test_time_mesh_hits_dyadic_checkpoints():
    cfg = SolverConfig()
    mesh = time_mesh(cfg, dyadic_time(5))
    for k in range(1, 6):
        assert dyadic_time(k) in mesh
    assert mesh[0] == 0.0 and mesh[-1] == dyadic_time(5)
    assert np.all(np.diff(mesh) > 0)


def test_time_mesh_window_step_sizes():
    cfg = SolverConfig(substeps_per_window=16)
    mesh = time_mesh(cfg, dyadic_time(3))
    in_window = (mesh >= 0.5) & (mesh <= 0.75)
    steps = np.diff(mesh[in_window])
    np.testing.assert_allclose(steps, 0.5 ** 1 / 16)


def test_zero_data_stays_zero():
    g = gaussian_grid(16, 16, 4.0, 4.0, amplitude=0.0)
    cfg = SolverConfig()
    out, fld = step(g, 0.0, 0.01, cfg)
    assert not out.values.any()
    assert fld.sup() == 0.0


def test_pure_transport_matches_characteristics():
    g = node_centered_gaussian(32, 6.0, 0.5, 1.2)
    cfg = SolverConfig()
    ds = 0.05
    zero = ElectricField(np.zeros((g.n_q, g.n_q, 2)), g.extent_q)
    out, _ = step(g, 0.0, ds, cfg, field_fn=lambda s, h: zero)
    # gamma(s+ds, q, p) = gamma(s, q - ds p, p): evaluate analytically
    q = g.q_axis
    p = g.p_axis
    c = q[g.n_q // 2]
    Q1, Q2, P1, P2 = np.meshgrid(q, q, p, p, indexing="ij")
    exact = 0.5 * np.exp(-(((Q1 - ds * P1 - c) ** 2 + (Q2 - ds * P2 - c) ** 2)
                           + ((P1 - c) ** 2 + (P2 - c) ** 2)) / (2 * 1.2 ** 2))
    interior = (slice(2, -2),) * 4
    assert np.abs(out.values - exact)[interior].max() < 5e-4


def test_sup_never_exceeds_initial():
    g = node_centered_gaussian(28, 6.0, 0.3, 1.3)
    cfg = SolverConfig(ds_uniform=1.0 / 16.0)
    rec, final = evolve(g, 0.75, cfg)
    sups = np.array([nr.sup for nr in rec.norms])
    assert sups.max() <= sups[0] * (1 + 1e-3)


def test_evolve_checkpoints_and_conservation():
    g = node_centered_gaussian(28, 6.0, 0.15, 1.3)
    cfg = SolverConfig(ds_uniform=1.0 / 16.0, substeps_per_window=8)
    rec, final = evolve(g, dyadic_time(3), cfg)
    assert rec.s_values == [0.0, 0.5, 0.75, 0.875]
    l2 = np.array([nr.l2 for nr in rec.norms])
    assert np.abs(l2 - l2[0]).max() / l2[0] < 5e-3


def test_evolve_dump_artifacts(tmp_path):
    g = node_centered_gaussian(20, 5.0, 0.1, 1.2)
    cfg = SolverConfig(ds_uniform=1.0 / 8.0, substeps_per_window=4)
    evolve(g, 0.75, cfg, dump_dir=tmp_path)
    assert (tmp_path / "gamma_rk0.vlns").exists()
    assert (tmp_path / "gamma_rk1.vlns").exists()
    assert (tmp_path / "gamma_rk2.vlns").exists()
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("s,l2,sup")


def test_field_blowup_guard():
    g = node_centered_gaussian(20, 5.0, 0.5, 1.0)
    cfg = SolverConfig(field_ceiling=1e-9)
    with pytest.raises(FieldBlowup):
        evolve(g, 0.5, cfg)


def test_self_convergence_order():
    def factory(n):
        return gaussian_grid(n, n, 6.0, 6.0, amplitude=0.6, width_q=1.4, width_p=1.4)

    cfg = SolverConfig()
    order, diffs = self_convergence_order(factory, 0.4, cfg, base_steps=6, base_n=17)
    assert order >= 1.8, (order, diffs)


def test_picard_zero_data_fixed_point():
    g = gaussian_grid(16, 16, 4.0, 4.0, amplitude=0.0)
    cfg = SolverConfig(picard_tol=1e-12)
    res = picard_lwp(g, 0.2, cfg)
    assert res.converged and res.n_iterations <= 2
    assert res.sup_diffs[0] == 0.0


def test_picard_small_data_contracts_and_matches_stepping():
    # data size B ~ 0.1: amplitude tuned below
    g = node_centered_gaussian(32, 6.0, 0.02, 1.3)
    B = local_data_size(g)
    assert 0.03 < B < 0.3
    cfg = SolverConfig(ds_uniform=1.0 / 32.0, picard_tol=1e-9)
    res = picard_lwp(g, 0.2, cfg)
    assert res.converged
    floor = 10 * cfg.picard_tol
    for i, r in enumerate(res.ratios):
        if res.sup_diffs[i] > floor:
            assert r <= 0.5
    ref = stepping_reference(g, 0.2, cfg)
    assert np.abs(res.final.values - ref.values).max() < 1e-3


def test_moment_propagation_on_short_run():
    g = node_centered_gaussian(24, 6.0, 0.1, 1.3)
    cfg = SolverConfig(ds_uniform=1.0 / 16.0, substeps_per_window=8)
    rec, _ = evolve(g, 0.75, cfg)
    rep = moment_propagation_check(rec)
    assert rep.passed()
    drift_row = [r for r in rep.rows if r[0] == "l2_relative_drift"][0]
    assert drift_row[2] < 1e-2


def test_derivative_diagnostics_bounds():
    g = node_centered_gaussian(24, 6.0, 0.1, 1.3)
    cfg = SolverConfig(ds_uniform=1.0 / 16.0, substeps_per_window=8)
    rec, _ = evolve(g, 0.875, cfg)
    rep = derivative_diagnostics(rec)
    assert rep.passed()
