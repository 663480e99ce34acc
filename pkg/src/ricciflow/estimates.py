"""Truncation and contraction functionals for solution pairs.

Given a reference trajectory u and a candidate trajectory v with the same
initial data, the difference w = u - v is probed through its negative part
w_- = min(w, 0).  The functional F(xi) = (1/4)(1 - e^{-2 xi}(2 xi + 1)) is
the antiderivative of xi * e^{-2 xi}; psi(t) integrates F(w_-) over the
surface.  The integrals A, B, C and the factors delta_A, delta_B, delta_C
combine into the contraction factor

    delta(T) = 2 C2 (delta_A + |kbar| delta_B + delta_C),

which certifies w_- = 0 on [0, T] once it drops below 1.  The undetermined
embedding constants are instantiated with an empirically fitted space-time
Sobolev constant, recorded in the report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ScalarField, integrate_values, lp_norm, trapz
from .flow import Trajectory


def negative_part(f: ScalarField) -> ScalarField:
    """Pointwise truncation min(f, 0)."""
    return ScalarField(f.surface, np.minimum(f.values, 0.0))


def F_of(xi):
    """F(xi) = int_0^xi eta e^{-2 eta} d eta = (1/4)(1 - e^{-2 xi}(2 xi + 1))."""
    xi = np.asarray(xi, dtype=float)
    out = 0.25 * (1.0 - np.exp(-2.0 * xi) * (2.0 * xi + 1.0))
    return float(out) if out.ndim == 0 else out


def psi_of(w: ScalarField) -> float:
    """psi = int F(min(w, 0)) dmu."""
    wm = np.minimum(w.values, 0.0)
    return integrate_values(w.surface, F_of(wm))


def exp_moment(f: ScalarField, p: float) -> float:
    """(int e^{p f} dmu)^{1/p} for p >= 1, with an overflow guard."""
    if p < 1:
        raise ValueError("exp_moment requires p >= 1")
    m = p * float(np.max(f.values))
    if m > 700.0:
        raise OverflowError(f"exp moment overflows: p*sup f = {m:.3g}")
    return float(integrate_values(f.surface, np.exp(p * f.values)) ** (1.0 / p))


def gn_ratio(f: ScalarField) -> float:
    """||f||_L4^4 / (||f||_L2^2 ||f||_H1^2), the Gagliardo-Nirenberg quotient."""
    from .geometry import h1_norm
    l2 = lp_norm(f, 2)
    if l2 < 1e-300:
        raise ValueError("gn_ratio undefined for the zero field")
    l4 = lp_norm(f, 4)
    h1 = h1_norm(f)
    return float(l4 ** 4 / (l2 ** 2 * h1 ** 2))


def tm_ratio(f: ScalarField) -> float:
    """log int e^{f - mean f} dmu divided by ||grad f||_L2^2 (eps-capped)."""
    surface = f.surface
    fbar = integrate_values(surface, f.values)
    ex = integrate_values(surface, np.exp(f.values - fbar))
    grad_sq = integrate_values(surface, surface.grad_norm_sq_values(f.values))
    return float(np.log(ex) / max(grad_sq, 1e-12))


# --- solution-pair machinery ------------------------------------------------

def _pair_window(u_traj: Trajectory, v_traj: Trajectory, T: float):
    # differing initial data is allowed (artificially shifted candidates are
    # legitimate probes), but surfaces and stored time grids must match
    if u_traj.surface.shape != v_traj.surface.shape or \
            u_traj.surface.kind != v_traj.surface.kind:
        raise ValueError("trajectories live on different surfaces")
    if len(u_traj.times) != len(v_traj.times) or \
            not np.allclose(u_traj.times, v_traj.times, rtol=0, atol=1e-9):
        raise ValueError("trajectories are stored on different time grids")
    k = int(np.argmin(np.abs(u_traj.times - T)))
    if abs(u_traj.times[k] - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a stored time of the pair")
    return u_traj.times[:k + 1]


def _wminus_series(u_traj, v_traj, n):
    for k in range(n):
        yield k, np.minimum(u_traj.state_values[k] - v_traj.state_values[k], 0.0)


def abc_integrals(u_traj: Trajectory, v_traj: Trajectory, T: float):
    """The three space-time integrals bounding the truncation identity.

    A = 2 int int e^{-2u} |grad u|^2 w_-^2, B = |kbar| int int |w_-(1 - e^{-2 w_-})|,
    C = int int |w_-(e^{-2 w_-} - 1) du/dt|, with w = u - v and trapezoid in time.
    """
    times = _pair_window(u_traj, v_traj, T)
    surface = u_traj.surface
    kbar = abs(surface.kbar)
    a_rates, b_rates, c_rates = [], [], []
    for k, wm in _wminus_series(u_traj, v_traj, len(times)):
        uk = u_traj.state_values[k]
        grad_u_sq = surface.grad_norm_sq_values(uk)
        e2u = np.exp(-2.0 * uk)
        em = np.exp(-2.0 * wm)
        a_rates.append(2.0 * integrate_values(surface, e2u * grad_u_sq * wm ** 2))
        b_rates.append(kbar * integrate_values(surface, np.abs(wm * (1.0 - em))))
        c_rates.append(integrate_values(
            surface, np.abs(wm * (em - 1.0) * u_traj.rhs_values[k])))
    a = float(trapz(a_rates, times))
    b = float(trapz(b_rates, times))
    c = float(trapz(c_rates, times))
    return a, b, c


def delta_factors(u_traj: Trajectory, v_traj: Trajectory, T: float,
                  sobolev_constant: float = 1.0):
    """Vanishing-in-T factors multiplying the truncation norms.

    delta_A = C (int int |grad u|^4)^(1/2), delta_B = C (int int e^{4|w_-|})^(1/2),
    delta_C = C ||e^{|w_-|}||^2_{Linf_t L8_x} ||du/dt||_{L2_t L4_x}; C is the
    fitted Sobolev constant of the surface at this resolution.
    """
    times = _pair_window(u_traj, v_traj, T)
    surface = u_traj.surface
    n = len(times)
    grad4, e4, l8max, dtl4 = [], [], 0.0, []
    for k, wm in _wminus_series(u_traj, v_traj, n):
        uk = u_traj.state_values[k]
        g2 = surface.grad_norm_sq_values(uk)
        grad4.append(integrate_values(surface, g2 ** 2))
        e4.append(integrate_values(surface, np.exp(4.0 * np.abs(wm))))
        l8 = integrate_values(surface, np.exp(8.0 * np.abs(wm))) ** 0.125
        l8max = max(l8max, l8)
        dtl4.append(lp_norm(ScalarField(surface, u_traj.rhs_values[k]), 4) ** 2)
    c = float(sobolev_constant)
    delta_a = c * float(np.sqrt(trapz(grad4, times)))
    delta_b = c * float(np.sqrt(trapz(e4, times)))
    delta_c = c * l8max ** 2 * float(np.sqrt(trapz(dtl4, times)))
    return delta_a, delta_b, delta_c


@dataclass
class EstimateReport:
    T: float
    psi_max: float
    grad_wminus_l2sq: float
    A: float
    B: float
    C: float
    delta_A: float
    delta_B: float
    delta_C: float
    C1: float
    C2: float
    delta: float
    contraction_satisfied: bool
    sobolev_constant: float


REPORT_FIELDS = ("T", "psi_max", "grad_wminus_l2sq", "A", "B", "C",
                 "delta_A", "delta_B", "delta_C", "C1", "C2", "delta",
                 "contraction_satisfied", "sobolev_constant")


def contraction_report(u_traj: Trajectory, v_traj: Trajectory, T: float,
                       sobolev_constant: float = 1.0) -> EstimateReport:
    """Assemble the full contraction estimate for a solution pair on [0, T]."""
    times = _pair_window(u_traj, v_traj, T)
    surface = u_traj.surface
    n = len(times)

    psi_vals, grad_rates = [], []
    c1 = np.inf
    for k, wm in _wminus_series(u_traj, v_traj, n):
        psi_vals.append(integrate_values(surface, F_of(wm)))
        e2u = np.exp(-2.0 * u_traj.state_values[k])
        c1 = min(c1, float(np.min(e2u)))
        grad_rates.append(integrate_values(
            surface, e2u * surface.grad_norm_sq_values(wm)))
    grad_sq = float(trapz(grad_rates, times))

    a, b, c = abc_integrals(u_traj, v_traj, T)
    da, db, dc = delta_factors(u_traj, v_traj, T, sobolev_constant)
    c2 = 2.0 / min(1.0, c1)
    delta = 2.0 * c2 * (da + abs(surface.kbar) * db + dc)
    return EstimateReport(
        T=float(T), psi_max=float(np.max(psi_vals)), grad_wminus_l2sq=grad_sq,
        A=a, B=b, C=c, delta_A=da, delta_B=db, delta_C=dc,
        C1=c1, C2=c2, delta=delta, contraction_satisfied=bool(delta < 1.0),
        sobolev_constant=float(sobolev_constant))


def truncation_chain_defect(u_traj: Trajectory, v_traj: Trajectory, T: float):
    """Measured discretization defect of the truncation-testing identity.

    Returns (defect_equation, defect_time_ftc): the residual of testing the
    difference equation with w_-, and the trapezoid error of writing
    int int d/dt F(w_-) as psi(T) - psi(0).  Together they bound how far the
    discrete pair can violate the inequality chain psi + (1/2) grad-term
    <= A + B + C.
    """
    times = _pair_window(u_traj, v_traj, T)
    surface = u_traj.surface
    kbar = surface.kbar
    n = len(times)

    lhs_rates, rhs_rates, ftc_rates = [], [], []
    for k, wm in _wminus_series(u_traj, v_traj, n):
        uk = u_traj.state_values[k]
        w = uk - v_traj.state_values[k]
        dtu = u_traj.rhs_values[k]
        dtw = dtu - v_traj.rhs_values[k]
        em2w = np.exp(-2.0 * w)
        e2u = np.exp(-2.0 * uk)
        lhs_rates.append(integrate_values(surface, em2w * dtw * wm))
        inner = _grad_inner_for(surface, w, e2u * wm)
        rhs_rates.append(
            -integrate_values(surface, inner)
            + integrate_values(surface, wm * (em2w - 1.0) * dtu)
            + kbar * integrate_values(surface, wm * (1.0 - em2w)))
        ftc_rates.append(integrate_values(
            surface, np.exp(-2.0 * wm) * np.where(w < 0.0, dtw, 0.0) * wm))
    lhs = trapz(lhs_rates, times)
    rhs = trapz(rhs_rates, times)
    psi0 = psi_of(ScalarField(surface, u_traj.state_values[0]
                              - v_traj.state_values[0]))
    psiT = psi_of(ScalarField(surface, u_traj.state_values[n - 1]
                              - v_traj.state_values[n - 1]))
    ftc = trapz(ftc_rates, times)
    return float(abs(lhs - rhs)), float(abs(ftc - (psiT - psi0)))


def _grad_inner_for(surface, a, b):
    from .diagnostics import _grad_inner
    return _grad_inner(surface, a, b)


# --- report serialization ---------------------------------------------------

def report_to_text(report: EstimateReport) -> str:
    lines = []
    for name in REPORT_FIELDS:
        val = getattr(report, name)
        if isinstance(val, bool):
            lines.append(f"{name} = {str(val).lower()}")
        elif isinstance(val, float):
            lines.append(f"{name} = {val:.17g}")
        else:
            lines.append(f"{name} = {val}")
    return "\n".join(lines) + "\n"


def append_report_csv(report: EstimateReport, path) -> None:
    """Append one row to a run-summary CSV, writing the header if new."""
    import os
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="\n") as fh:
        if new:
            fh.write(",".join(REPORT_FIELDS) + "\n")
        row = []
        for name in REPORT_FIELDS:
            val = getattr(report, name)
            if isinstance(val, bool):
                row.append(str(val).lower())
            elif isinstance(val, float):
                row.append(f"{val:.17g}")
            else:
                row.append(str(val))
        fh.write(",".join(row) + "\n")
