import numpy as np
import pytest
from scipy.integrate import quad

import ricciflow as rf
from ricciflow.estimates import (F_of, negative_part, psi_of, abc_integrals,
                                 delta_factors, contraction_report,
                                 truncation_chain_defect, report_to_text,
                                 append_report_csv, REPORT_FIELDS)
from ricciflow.flow import Trajectory
from ricciflow.experiments import random_band_limited_field


@pytest.fixture(scope="module")
def torus():
    return rf.build_surface("torus", 32)


@pytest.fixture(scope="module")
def sphere():
    return rf.build_surface("sphere", 15)


def random_field(surf, seed, amp=1.0):
    f = random_band_limited_field(surf, seed, surf.resolution // 3)
    return rf.ScalarField(surf, amp * f.values / np.max(np.abs(f.values)))


# --- truncation function ------------------------------------------------------

def test_F_at_zero():
    assert F_of(0.0) == 0.0


def test_F_matches_quadrature_oracle():
    for xi in (1.0, -1.0, 0.3, -2.7):
        oracle, _ = quad(lambda s: s * np.exp(-2 * s), 0.0, xi)
        assert abs(F_of(xi) - oracle) < 1e-12


def test_F_frozen_values():
    # int_0^1 s e^{-2s} ds and int_0^{-1}, from the quadrature oracle
    assert abs(F_of(1.0) - 0.14849853757254047) < 1e-15
    assert abs(F_of(-1.0) - 2.0972640247326625) < 1e-15


def test_F_nonnegative_and_quadratic_lower_bound():
    xi = np.linspace(-10.0, 10.0, 10 ** 4)
    vals = F_of(xi)
    assert np.all(vals >= 0.0)
    neg = xi[xi <= 0]
    assert np.all(F_of(neg) >= 0.5 * neg ** 2)


def test_negative_part(torus):
    f = random_field(torus, 0)
    wm = negative_part(f)
    assert np.all(wm.values <= 0)
    assert np.array_equal(wm.values, np.minimum(f.values, 0.0))
    pos = rf.constant_field(torus, 2.0)
    assert rf.sup_norm(negative_part(pos)) == 0.0
    neg = rf.constant_field(torus, -1.0)
    assert np.array_equal(negative_part(neg).values, neg.values)


def test_psi_of(torus):
    assert psi_of(rf.constant_field(torus, 0.5)) == 0.0
    assert abs(psi_of(rf.constant_field(torus, -1.0))
               - 0.25 * (1 + np.e ** 2)) < 1e-12
    for seed in range(5):
        w = random_field(torus, seed, 1.5)
        wm = negative_part(w)
        assert psi_of(w) >= 0.5 * rf.lp_norm(wm, 2) ** 2 - 1e-12


def test_exponential_difference_bound(torus):
    # |1 - e^{-2 w_-}| <= 2 |w_-| e^{2 |w_-|} pointwise
    for seed in range(100):
        w = random_field(torus, seed, 0.1 + 0.03 * seed)
        wm = negative_part(w).values
        lhs = np.abs(1.0 - np.exp(-2.0 * wm))
        rhs = 2.0 * np.abs(wm) * np.exp(2.0 * np.abs(wm))
        assert np.all(lhs <= rhs * (1 + 1e-12))


# --- scalar functionals ---------------------------------------------------------

def test_gn_ratio_constant_is_one(torus):
    assert abs(rf.gn_ratio(rf.constant_field(torus, 2.0)) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        rf.gn_ratio(rf.zero_field(torus))


def test_tm_ratio_constant_is_zero(torus):
    assert abs(rf.tm_ratio(rf.constant_field(torus, 1.3))) < 1e-3


def test_exp_moment(torus):
    assert abs(rf.exp_moment(rf.zero_field(torus), 1) - 1.0) < 1e-14
    assert abs(rf.exp_moment(rf.constant_field(torus, 1.0), 2) - np.e) < 1e-12
    n = torus.resolution
    x = np.arange(n) / n
    f = rf.ScalarField(torus, np.sin(2 * np.pi * x)[None, :] * np.ones((n, 1)))
    oracle = quad(lambda s: np.exp(4 * np.sin(2 * np.pi * s)), 0, 1,
                  limit=200)[0] ** 0.25
    assert abs(rf.exp_moment(f, 4) - oracle) < 1e-8
    with pytest.raises(ValueError):
        rf.exp_moment(f, 0.5)
    with pytest.raises(OverflowError):
        rf.exp_moment(rf.constant_field(torus, 30.0), 30)


# --- pair machinery -------------------------------------------------------------

def flat_trajectory(surf, t_end=1.0, n=11, shift=0.0):
    times = np.linspace(0.0, t_end, n)
    state = np.full(surf.shape, shift)
    return Trajectory(surface=surf, times=times,
                      state_values=[state.copy() for _ in times],
                      rhs_values=[np.zeros(surf.shape) for _ in times])


@pytest.fixture(scope="module")
def pair(torus):
    u0 = rf.random_initial_data(torus, 7, 6, 0.05)
    ref = rf.evolve(u0, rf.FlowConfig(integrator="rk4", dt=1e-3, t_end=0.5,
                                      store_spacing=1e-2))
    cand = rf.evolve(u0, rf.FlowConfig(integrator="imex1", dt=2.5e-3, t_end=0.5,
                                       store_spacing=1e-2))
    return ref, cand


def test_abc_identical_trajectories(pair):
    ref, _ = pair
    a, b, c = abc_integrals(ref, ref, 0.5)
    assert a == 0.0 and b == 0.0 and c == 0.0


def test_abc_constant_shift_closed_form(sphere):
    # w_- = -1 everywhere: B = |kbar| (e^2 - 1) T, A = C = 0 on a flat pair
    T = 1.0
    u = flat_trajectory(sphere, T)
    v = flat_trajectory(sphere, T, shift=1.0)
    a, b, c = abc_integrals(u, v, T)
    assert a == 0.0 and c == 0.0
    expected = 4 * np.pi * (np.e ** 2 - 1.0) * T
    assert abs(b - expected) < 1e-9 * expected


def test_abc_mismatched_grids(torus, sphere):
    u = flat_trajectory(torus)
    v = flat_trajectory(torus, n=7)
    with pytest.raises(ValueError):
        abc_integrals(u, v, 1.0)
    with pytest.raises(ValueError):
        abc_integrals(flat_trajectory(torus), flat_trajectory(sphere), 1.0)


def test_delta_factors_monotone_in_T(pair):
    ref, cand = pair
    prev = None
    for T in (0.4, 0.2, 0.1, 0.05):
        das = delta_factors(ref, cand, T, sobolev_constant=1.0)
        if prev is not None:
            assert all(now <= before + 1e-15
                       for now, before in zip(das, prev))
        prev = das


def test_delta_factors_flat_reference(torus):
    # u identically 0: delta_A = 0; w_- = 0 pair: delta_B = C sqrt(T)
    u = flat_trajectory(torus, 1.0)
    v = flat_trajectory(torus, 1.0)
    da, db, dc = delta_factors(u, v, 1.0, sobolev_constant=2.0)
    assert da == 0.0
    assert abs(db - 2.0 * np.sqrt(1.0)) < 1e-12
    assert dc == 0.0


def test_contraction_report(pair):
    ref, cand = pair
    rep = contraction_report(ref, cand, 0.25, sobolev_constant=0.1)
    assert rep.psi_max >= 0 and rep.grad_wminus_l2sq >= 0
    assert rep.A >= 0 and rep.B >= 0 and rep.C >= 0
    assert rep.C2 == 2.0 / min(1.0, rep.C1)
    # delta assembled exactly from its factors
    expected = 2.0 * rep.C2 * (rep.delta_A + abs(ref.surface.kbar) * rep.delta_B
                               + rep.delta_C)
    assert rep.delta == expected
    assert rep.contraction_satisfied == (rep.delta < 1.0)


def test_contraction_identical_pair(pair):
    ref, _ = pair
    rep = contraction_report(ref, ref, 0.25, sobolev_constant=0.1)
    assert rep.psi_max == 0.0
    assert rep.A == rep.B == rep.C == 0.0


def test_truncation_chain(pair):
    # psi(t) + (1/2) grad-term <= A + B + C up to the measured discrete defect
    ref, cand = pair
    T = 0.5
    rep = contraction_report(ref, cand, T, sobolev_constant=1.0)
    d_eq, d_ftc = truncation_chain_defect(ref, cand, T)
    lhs = rep.psi_max + 0.5 * rep.grad_wminus_l2sq
    rhs = rep.A + rep.B + rep.C + d_eq + d_ftc
    assert lhs <= rhs + 0.1 * (rep.A + rep.B + rep.C) + 1e-12


# --- report output ---------------------------------------------------------------

def test_report_serialization(tmp_path, pair):
    ref, cand = pair
    rep = contraction_report(ref, cand, 0.25, sobolev_constant=0.1)
    text = report_to_text(rep)
    assert "delta =" in text and "contraction_satisfied =" in text
    path = tmp_path / "summary.csv"
    append_report_csv(rep, path)
    append_report_csv(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_FIELDS)
    assert len(lines) == 3
    assert lines[1] == lines[2]
