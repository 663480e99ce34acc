import numpy as np
import pytest

import ricciflow as rf
from ricciflow.diagnostics import (DIAGNOSTICS_HEADER, diagnose, subsample,
                                   make_test_function, mean_curvature_rg)
from ricciflow.experiments import random_band_limited_field


@pytest.fixture(scope="module")
def torus():
    return rf.build_surface("torus", 64)


@pytest.fixture(scope="module")
def sphere():
    return rf.build_surface("sphere", 15)


@pytest.fixture(scope="module")
def torus_run(torus):
    u0 = rf.random_initial_data(torus, 42, 2, 0.3)
    return rf.evolve(u0, rf.FlowConfig(dt=1e-3, t_end=0.5, store_spacing=1e-3))


def sin_field(surf, amp=1.0):
    n = surf.resolution
    x = np.arange(n) / n
    return rf.ScalarField(surf, amp * np.sin(2 * np.pi * x)[None, :] * np.ones((n, 1)))


# --- pointwise quantities ----------------------------------------------------

def test_volume(torus):
    assert abs(rf.volume(rf.zero_field(torus)) - 1.0) < 1e-15
    assert abs(rf.volume(rf.constant_field(torus, 0.5 * np.log(2))) - 2.0) < 1e-13
    u = rf.normalize_volume(sin_field(torus))
    assert abs(rf.volume(u) - 1.0) < 1e-12


def test_liouville_energy(torus, sphere):
    assert rf.liouville_energy(rf.zero_field(torus)) == 0.0
    e = rf.liouville_energy(sin_field(torus))
    assert abs(e - np.pi ** 2) < 1e-9
    c = 0.37
    e_sphere = rf.liouville_energy(rf.constant_field(sphere, c))
    assert abs(e_sphere - 4 * np.pi * c) < 1e-10


def test_gauss_curvature(torus, sphere):
    k0 = rf.gauss_curvature(rf.zero_field(sphere))
    assert np.max(np.abs(k0.values - sphere.kbar)) < 1e-9
    c = 0.3
    kc = rf.gauss_curvature(rf.constant_field(sphere, c))
    assert np.max(np.abs(kc.values - np.exp(-2 * c) * sphere.kbar)) < 1e-9
    u = sin_field(torus, 0.1)
    kg = rf.gauss_curvature(u)
    exact = np.exp(-2 * u.values) * (4 * np.pi ** 2 * u.values)
    assert np.max(np.abs(kg.values - exact)) < 1e-9


def test_gauss_bonnet(torus, sphere):
    u = rf.ScalarField(torus, random_band_limited_field(torus, 5, 15).values)
    assert abs(rf.gauss_bonnet_check(u)) < 1e-12
    assert abs(rf.gauss_bonnet_check(rf.zero_field(sphere))) < 1e-12
    w = random_band_limited_field(sphere, 6, 5)
    w = rf.ScalarField(sphere, 0.4 * w.values / np.max(np.abs(w.values)))
    assert abs(rf.gauss_bonnet_check(w)) < 1e-10


def test_curvature_deviation(torus, sphere):
    linf, l2 = rf.curvature_deviation(rf.zero_field(torus))
    assert linf < 1e-9 and l2 < 1e-9
    c = 0.2
    linf, l2 = rf.curvature_deviation(rf.constant_field(sphere, c))
    assert abs(linf - abs(np.exp(-2 * c) - 1.0) * 4 * np.pi) < 1e-9
    u = sin_field(torus, 0.1)
    linf, _ = rf.curvature_deviation(u)
    exact = np.exp(-2 * u.values) * (4 * np.pi ** 2 * u.values)
    assert abs(linf - np.max(np.abs(exact))) < 1e-9


def test_mean_curvature_rg(torus, sphere):
    assert mean_curvature_rg(rf.zero_field(torus)) == 0.0
    assert abs(mean_curvature_rg(rf.zero_field(sphere)) - 8 * np.pi) < 1e-12


# --- trajectory diagnostics ----------------------------------------------------

def test_flat_run_has_zero_diagnostics(torus):
    traj = rf.evolve(rf.zero_field(torus),
                     rf.FlowConfig(dt=1e-3, t_end=0.05, store_spacing=5e-3))
    for r in diagnose(traj):
        assert abs(r.volume - 1.0) < 1e-13
        assert abs(r.energy) < 1e-13
        assert abs(r.energy_residual) < 1e-13


def test_energy_monotone_and_residual(torus_run):
    records = diagnose(torus_run)
    energies = np.array([r.energy for r in records])
    assert np.all(np.diff(energies) <= 1e-10)
    diss = np.array([r.dissipation_cum for r in records])
    assert np.all(np.diff(diss) >= -1e-15)
    for r in records[::100]:
        assert abs(r.energy_residual - (r.energy - records[0].energy
                                        + r.dissipation_cum)) < 1e-14


def test_energy_residual_shrinks_with_stride(torus_run):
    vals = []
    for stride in (4, 2, 1):
        sub = subsample(torus_run, stride)
        vals.append(abs(rf.energy_identity_residual(sub)[-1]))
    assert vals[0] / vals[1] >= 3.0
    assert vals[1] / vals[2] >= 3.0


def test_gauss_bonnet_along_flow(torus_run):
    for k in range(0, len(torus_run.times), 100):
        assert abs(rf.gauss_bonnet_check(torus_run.state(k))) < 1e-10


def test_exponential_curvature_decay(torus_run):
    records = diagnose(torus_run)
    times = np.array([r.t for r in records])
    dev = np.array([r.curv_dev_linf for r in records])
    window = (times >= 0.1) & (times <= 0.25)   # post-transient, above floor
    fit = rf.fit_line(times[window], np.log(dev[window]))
    assert fit.slope < 0
    assert fit.correlation <= -0.99


# --- weak form ------------------------------------------------------------------

def test_weak_form_zero_test_function(torus_run):
    phi = make_test_function(torus_run.surface, float(torus_run.times[-1]), 1)
    zero_phi = type(phi)(spatial=rf.zero_field(torus_run.surface),
                         t_end=phi.t_end)
    assert rf.weak_form_residual(torus_run, zero_phi) == 0.0


def test_weak_form_flat_run(torus):
    traj = rf.evolve(rf.zero_field(torus),
                     rf.FlowConfig(dt=1e-3, t_end=0.1, store_spacing=1e-2))
    phi = make_test_function(torus, 0.1, 3)
    assert rf.weak_form_residual(traj, phi) < 1e-12


def test_weak_form_residual_order(torus_run):
    t_end = float(torus_run.times[-1])
    for seed in (1, 2, 3):
        phi = make_test_function(torus_run.surface, t_end, seed)
        r_coarse = rf.weak_form_residual(subsample(torus_run, 4), phi)
        r_fine = rf.weak_form_residual(subsample(torus_run, 1), phi)
        assert r_fine < r_coarse / 8.0       # ~16x for a 4x finer grid


def test_weak_form_requires_vanishing_endpoints(torus_run):
    phi = make_test_function(torus_run.surface, 2.0 * float(torus_run.times[-1]), 1)
    with pytest.raises(ValueError):
        rf.weak_form_residual(torus_run, phi)


# --- output ---------------------------------------------------------------------

def test_diagnostics_csv(tmp_path, torus_run):
    records = diagnose(subsample(torus_run, 50))
    path = tmp_path / "diag.csv"
    rf.diagnostics_to_csv(records, path)
    lines = path.read_text().splitlines()
    assert lines[0] == DIAGNOSTICS_HEADER
    assert len(lines) == len(records) + 1
    first = lines[1].split(",")
    assert len(first) == 8
    assert float(first[1]) == records[0].volume   # 17 digits round-trips
