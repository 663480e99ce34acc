"""Per-time and cumulative scalar diagnostics of a flow trajectory.

Everything the analysis attaches to a solution: conformal volume, the
Liouville energy and its dissipation identity, Gauss curvature and its
deviation from the background constant, the Gauss-Bonnet invariant, and the
weak-form residual against space-time test functions.

All space-time integrals use the composite trapezoid rule over the stored
trajectory times; the stored time derivative is the flow right-hand side at
the stored states, so residuals measure time-discretization error only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (ScalarField, integrate_values, laplacian,
                       grad_norm_sq, trapz)
from .flow import Trajectory


@dataclass
class DiagnosticsRecord:
    t: float
    volume: float
    energy: float
    dissipation_cum: float
    energy_residual: float
    curv_dev_linf: float
    curv_dev_l2: float
    rg: float


DIAGNOSTICS_HEADER = ("t,volume,energy,dissipation_cum,energy_residual,"
                      "curv_dev_linf,curv_dev_l2,rg")


def volume(u: ScalarField) -> float:
    """Conformal volume int e^{2u} dmu of the evolving metric."""
    return integrate_values(u.surface, np.exp(2.0 * u.values))


def liouville_energy(u: ScalarField, kbar: float | None = None) -> float:
    """(1/2) int (|grad u|^2 + 2 kbar u) dmu, the flow's Lyapunov functional."""
    if kbar is None:
        kbar = u.surface.kbar
    g = u.surface.grad_norm_sq_values(u.values)
    return 0.5 * integrate_values(u.surface, g + 2.0 * kbar * u.values)


def gauss_curvature(u: ScalarField, surface=None) -> ScalarField:
    """Gauss curvature e^{-2u}(kbar - lap u) of the metric e^{2u} g_bar."""
    surface = surface or u.surface
    lap = surface.laplacian_values(u.values)
    return ScalarField(surface, np.exp(-2.0 * u.values) * (surface.kbar - lap))


def gauss_bonnet_check(u: ScalarField, surface=None) -> float:
    """int K_g dmu_g minus its topological value (0 for any u, up to quadrature)."""
    surface = surface or u.surface
    kg = gauss_curvature(u, surface).values
    total = integrate_values(surface, kg * np.exp(2.0 * u.values))
    return total - surface.kbar       # 2 pi chi = kbar * vol = kbar


def curvature_deviation(u: ScalarField, surface=None):
    """(sup, L^2(dmu_g)) norms of K_g - kbar."""
    surface = surface or u.surface
    dev = gauss_curvature(u, surface).values - surface.kbar
    linf = float(np.max(np.abs(dev)))
    l2 = float(np.sqrt(integrate_values(surface, dev ** 2 * np.exp(2.0 * u.values))))
    return linf, l2


def mean_curvature_rg(u: ScalarField) -> float:
    """r_g = 2 kbar / vol_g (unit background volume)."""
    return 2.0 * u.surface.kbar / volume(u)


def dissipation_rate(u_values, rhs_values, surface) -> float:
    """Instantaneous energy dissipation int e^{2u} |du/dt|^2 dmu."""
    return integrate_values(surface, np.exp(2.0 * u_values) * rhs_values ** 2)


def diagnose(traj: Trajectory) -> list[DiagnosticsRecord]:
    """Evaluate all per-time diagnostics along a trajectory."""
    surface = traj.surface
    times = traj.times
    records = []
    e0 = None
    rates = [dissipation_rate(s, r, surface)
             for s, r in zip(traj.state_values, traj.rhs_values)]
    diss = 0.0
    for k, t in enumerate(times):
        u = traj.state(k)
        if k > 0:
            diss += 0.5 * (times[k] - times[k - 1]) * (rates[k] + rates[k - 1])
        energy = liouville_energy(u)
        if e0 is None:
            e0 = energy
        linf, l2 = curvature_deviation(u)
        records.append(DiagnosticsRecord(
            t=float(t),
            volume=volume(u),
            energy=energy,
            dissipation_cum=diss,
            energy_residual=energy - e0 + diss,
            curv_dev_linf=linf,
            curv_dev_l2=l2,
            rg=mean_curvature_rg(u),
        ))
    return records


def energy_identity_residual(traj: Trajectory) -> np.ndarray:
    """E(u(t)) - E(u0) + cumulative trapezoid dissipation, per stored time."""
    return np.array([r.energy_residual for r in diagnose(traj)])


def subsample(traj: Trajectory, stride: int) -> Trajectory:
    """Coarsen the stored time grid (keeps the final state)."""
    n = len(traj.times)
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return Trajectory(
        surface=traj.surface,
        times=traj.times[idx],
        state_values=[traj.state_values[i] for i in idx],
        rhs_values=[traj.rhs_values[i] for i in idx],
        integrator=traj.integrator,
        requested_dt=traj.requested_dt,
        dt_intervals=traj.dt_intervals,
        blown=traj.blown,
        note=traj.note,
    )


# --- weak formulation ------------------------------------------------------

@dataclass
class SpaceTimeTestFunction:
    """Separable test function phi(t, x) = envelope(t) * spatial(x).

    The polynomial envelope t^2 (T - t)^2 (normalized to peak 1) vanishes at
    t = 0 and t = T, realizing compact support in time on the stored grid.
    """

    spatial: ScalarField
    t_end: float

    def envelope(self, t):
        T = self.t_end
        return (t * t * (T - t) * (T - t)) / (T / 2.0) ** 4

    def envelope_dt(self, t):
        T = self.t_end
        return (2.0 * t * (T - t) * (T - t) - 2.0 * t * t * (T - t)) / (T / 2.0) ** 4

    def values_at(self, t) -> np.ndarray:
        return self.envelope(t) * self.spatial.values


def make_test_function(surface, t_end: float, seed: int,
                       band_limit: int | None = None) -> SpaceTimeTestFunction:
    """Random band-limited spatial profile times the polynomial time bump."""
    from .experiments import random_band_limited_field
    if band_limit is None:
        band_limit = max(2, surface.band_limit // 2)
    chi = random_band_limited_field(surface, seed, band_limit)
    chi = ScalarField(surface, chi.values / max(1e-30, np.max(np.abs(chi.values))))
    return SpaceTimeTestFunction(spatial=chi, t_end=t_end)


def _grad_inner(surface, a_values, b_values):
    # <grad a, grad b>; polarization keeps the sphere free of pole-singular
    # coordinate derivatives.
    if surface.kind == "torus":
        ax, ay = surface.gradient_values(a_values)
        bx, by = surface.gradient_values(b_values)
        return ax * bx + ay * by
    lap_ab = surface.laplacian_values(a_values * b_values)
    lap_a = surface.laplacian_values(a_values)
    lap_b = surface.laplacian_values(b_values)
    return 0.5 * (lap_ab - a_values * lap_b - b_values * lap_a)


def weak_form_residuals(traj: Trajectory, phis) -> list[float]:
    """|LHS - RHS| of the weak-solution identity, one value per test function.

    LHS = int int dv/dt e^{2v} phi dmu dt,
    RHS = -int int (<grad v, grad phi> - kbar (e^{2v} - 1) phi) dmu dt,
    both by trapezoid over stored times and quadrature in space.

    Because phi vanishes at t = 0 and t = T, the time derivative on the left
    is integrated by parts onto the test function,

        LHS = -int int (1/2)(e^{2v} - 1) dphi/dt dmu dt,

    which probes the stored trajectory distributionally instead of the stored
    right-hand side (against which the identity would hold sample-wise by
    construction).  Per-time state quantities are shared across the batch.
    """
    surface = traj.surface
    kbar = surface.kbar
    times = traj.times
    for phi in phis:
        if abs(phi.envelope(times[0])) > 1e-13 or abs(phi.envelope(times[-1])) > 1e-13:
            raise ValueError(
                "test function must vanish at the ends of the time interval")
    n_t, n_phi = len(times), len(phis)
    lhs_part = np.empty((n_phi, n_t))
    grad_part = np.empty((n_phi, n_t))
    w = surface.area_element
    for k, vals in enumerate(traj.state_values):
        e2v1 = np.exp(2.0 * vals) - 1.0
        if surface.kind == "torus":
            gx, gy = surface.gradient_values(vals)
        else:
            lap_v = surface.laplacian_values(vals)
        for j, phi in enumerate(phis):
            chi = phi.spatial.values
            lhs_part[j, k] = np.sum(w * (0.5 * e2v1 * chi))
            if surface.kind == "torus":
                cx, cy = _phi_gradients(surface, phi)
                gi = gx * cx + gy * cy
            else:
                lap_chi, lap_prod = _phi_sphere_parts(surface, phi, vals)
                gi = 0.5 * (lap_prod - vals * lap_chi - chi * lap_v)
            grad_part[j, k] = np.sum(w * (gi - kbar * e2v1 * chi))
    out = []
    for j, phi in enumerate(phis):
        lhs = -trapz(phi.envelope_dt(times) * lhs_part[j], times)
        rhs = -trapz(phi.envelope(times) * grad_part[j], times)
        out.append(float(abs(lhs - rhs)))
    return out


def _phi_gradients(surface, phi):
    cache = getattr(phi, "_grad_cache", None)
    if cache is None:
        cache = surface.gradient_values(phi.spatial.values)
        phi._grad_cache = cache
    return cache


def _phi_sphere_parts(surface, phi, vals):
    lap_chi = getattr(phi, "_lap_cache", None)
    if lap_chi is None:
        lap_chi = surface.laplacian_values(phi.spatial.values)
        phi._lap_cache = lap_chi
    lap_prod = surface.laplacian_values(vals * phi.spatial.values)
    return lap_chi, lap_prod


def weak_form_residual(traj: Trajectory, phi: SpaceTimeTestFunction) -> float:
    """Single test-function form of weak_form_residuals."""
    return weak_form_residuals(traj, [phi])[0]


# --- output ----------------------------------------------------------------

def diagnostics_to_csv(records: list[DiagnosticsRecord], path) -> None:
    """Fixed-header CSV, 17 significant digits, LF endings."""
    with open(path, "w", newline="\n") as fh:
        fh.write(DIAGNOSTICS_HEADER + "\n")
        for r in records:
            fh.write(",".join(f"{x:.17g}" for x in (
                r.t, r.volume, r.energy, r.dissipation_cum, r.energy_residual,
                r.curv_dev_linf, r.curv_dev_l2, r.rg)) + "\n")
