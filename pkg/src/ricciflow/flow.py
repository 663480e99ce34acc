"""Time integration of the conformal-gauge flow for the conformal factor u.

The evolution equation is

    du/dt = exp(-2u) * lap(u) + kbar * (1 - exp(-2u)),

a quasilinear diffusion whose spectral discretization is stiff: the explicit
RK4 step is capped by the stability rule dt <= cfl_safety * 2 / (max_x
exp(-2u) * lam_max), with lam_max the largest eigenvalue magnitude of the
(dealiased) discrete Laplacian.  IMEX1 freezes the diffusion coefficient at
its nodal minimum, which makes the implicit operator spectrally diagonal and
the step unconditionally stable at first order.

Trajectories store states on a uniform grid of "store intervals"; inside an
interval the integrator micro-steps at the (possibly much smaller) stable dt.
The stored time derivative is by definition the flow right-hand side
evaluated at the stored state, so energy-identity checks downstream see pure
time-integration error.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .geometry import (ScalarField, Surface, FlatTorus, RoundSphere,
                       integrate_values)

RK4 = "rk4"
IMEX1 = "imex1"

SUP_NORM_GUARD = 50.0


class BlowUpError(RuntimeError):
    """Raised when a state leaves the representable range (sup|u| > 50)."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class FlowConfig:
    integrator: str = RK4
    dt: float = 1e-3
    t_end: float = 1.0
    cfl_safety: float = 1.0
    forcing: Optional[Callable[[float], np.ndarray]] = None
    store_every: int = 1
    store_spacing: Optional[float] = None
    max_steps: int = 2_000_000
    require_unit_volume: bool = False
    # Project the state back onto the unit-volume slice at every store
    # interval.  The conformal-gauge equation hard-codes the mean curvature
    # of a unit-volume metric, which makes the constant mode grow like
    # e^{2 kbar t} once numerical error pushes the volume off 1; on the
    # sphere (kbar = 4 pi) long runs are meaningless without this projection.
    renormalize_volume: bool = False

    def __post_init__(self):
        if self.integrator not in (RK4, IMEX1):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt > self.t_end + 1e-15:
            raise ValueError("dt must not exceed t_end")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.store_every < 1:
            raise ValueError("store_every must be a positive integer")


@dataclass
class Trajectory:
    """Stored flow states u(t_k) together with du/dt at the same times."""

    surface: Surface
    times: np.ndarray
    state_values: list
    rhs_values: list
    integrator: str = RK4
    requested_dt: float = 0.0
    dt_intervals: list = dataclass_field(default_factory=list)
    blown: bool = False
    note: str = ""

    def __len__(self):
        return len(self.times)

    def state(self, k) -> ScalarField:
        return ScalarField(self.surface, self.state_values[k])

    def rhs(self, k) -> ScalarField:
        return ScalarField(self.surface, self.rhs_values[k])

    @property
    def final_state(self) -> ScalarField:
        return self.state(len(self.times) - 1)


def normalize_volume(u: ScalarField) -> ScalarField:
    """Shift u by a constant so the conformal volume int e^{2u} dmu equals 1."""
    vol = integrate_values(u.surface, np.exp(2.0 * u.values))
    return ScalarField(u.surface, u.values - 0.5 * np.log(vol))


def conformal_volume(u: ScalarField) -> float:
    return integrate_values(u.surface, np.exp(2.0 * u.values))


def _check_guard(values, traj=None):
    m = np.max(np.abs(values))
    if not np.isfinite(m) or m > SUP_NORM_GUARD:
        raise BlowUpError(
            f"solution sup-norm {m:.3g} exceeds the overflow guard "
            f"{SUP_NORM_GUARD}", traj)


def eval_rhs(u: ScalarField, kbar: float | None = None) -> ScalarField:
    """Flow right-hand side exp(-2u)*lap(u) + kbar*(1 - exp(-2u)).

    The Laplacian is the dealiased spectral operator, matching what the
    integrators use, so stored derivatives are reproducible from states.
    """
    _check_guard(u.values)
    if kbar is None:
        kbar = u.surface.kbar
    lap = u.surface.laplacian_values(u.values, dealiased=True)
    e = np.exp(-2.0 * u.values)
    rhs = e * lap
    if kbar != 0.0:
        rhs += kbar * (1.0 - e)
    return ScalarField(u.surface, rhs)


def cfl_cap(surface: Surface, u_values: np.ndarray, cfl_safety: float = 1.0) -> float:
    """Largest stable explicit step for the current state."""
    max_coeff = np.exp(-2.0 * float(np.min(u_values)))
    return cfl_safety * 2.0 / (max_coeff * surface.lam_max)


# --- micro-steppers --------------------------------------------------------
#
# The torus stepper keeps the state both on the grid and in (projected)
# spectral form; each RK4 stage costs one inverse transform for the
# Laplacian and one forward transform to project the nonlinear product.

class _TorusStepper:
    def __init__(self, surface: FlatTorus, forcing=None, kbar=None):
        self.surface = surface
        self.lam = surface._lam_dealiased
        self.keep = surface._keep
        self.kbar = surface.kbar if kbar is None else float(kbar)
        self.forcing = forcing
        self.shape = surface.shape

    def spectral(self, values):
        return sfft.rfft2(values) * self.keep

    def physical(self, spec):
        return sfft.irfft2(spec, s=self.shape)

    def _g(self, up, us, t):
        lap = self.physical(self.lam * us)
        e = np.exp(-2.0 * up)
        kp = e * lap
        if self.kbar != 0.0:
            kp += self.kbar * (1.0 - e)
        if self.forcing is not None:
            kp = kp + self.forcing(t)
        return kp, sfft.rfft2(kp) * self.keep

    def rk4_steps(self, up, us, m, dt, t):
        for _ in range(m):
            k1p, k1s = self._g(up, us, t)
            k2p, k2s = self._g(up + 0.5 * dt * k1p, us + 0.5 * dt * k1s, t + 0.5 * dt)
            k3p, k3s = self._g(up + 0.5 * dt * k2p, us + 0.5 * dt * k2s, t + 0.5 * dt)
            k4p, k4s = self._g(up + dt * k3p, us + dt * k3s, t + dt)
            us = us + (dt / 6.0) * (k1s + 2.0 * (k2s + k3s) + k4s)
            up = self.physical(us)
            t += dt
        return up, us

    def imex1_steps(self, up, us, m, dt, t):
        for _ in range(m):
            coeff = np.exp(-2.0 * float(np.max(up)))
            kp, ks = self._g(up, us, t)
            num = us + dt * (ks - coeff * (self.lam * us))
            us = num / (1.0 - dt * coeff * self.lam)
            us *= self.keep
            up = self.physical(us)
            t += dt
        return up, us


class _SphereStepper:
    def __init__(self, surface: RoundSphere, forcing=None, kbar=None):
        self.surface = surface
        self.tr = surface.transform
        self.lam = surface._lap_mult * surface._keep   # dealiased multiplier
        self.keep = surface._keep
        self.kbar = surface.kbar if kbar is None else float(kbar)
        self.forcing = forcing

    def spectral(self, values):
        return self.tr.analysis(values) * self.keep[None, None, :]

    def physical(self, coeffs):
        return self.tr.synthesis(coeffs)

    def _g(self, up, uc, t):
        lap = self.physical(self.lam[None, None, :] * uc)
        e = np.exp(-2.0 * up)
        kp = e * lap + self.kbar * (1.0 - e)
        if self.forcing is not None:
            kp = kp + self.forcing(t)
        return kp, self.tr.analysis(kp) * self.keep[None, None, :]

    def rk4_steps(self, up, uc, m, dt, t):
        for _ in range(m):
            k1p, k1c = self._g(up, uc, t)
            k2p, k2c = self._g(up + 0.5 * dt * k1p, uc + 0.5 * dt * k1c, t + 0.5 * dt)
            k3p, k3c = self._g(up + 0.5 * dt * k2p, uc + 0.5 * dt * k2c, t + 0.5 * dt)
            k4p, k4c = self._g(up + dt * k3p, uc + dt * k3c, t + dt)
            uc = uc + (dt / 6.0) * (k1c + 2.0 * (k2c + k3c) + k4c)
            up = self.physical(uc)
            t += dt
        return up, uc

    def imex1_steps(self, up, uc, m, dt, t):
        lam = self.lam[None, None, :]
        for _ in range(m):
            coeff = np.exp(-2.0 * float(np.max(up)))
            kp, kc = self._g(up, uc, t)
            num = uc + dt * (kc - coeff * (lam * uc))
            uc = num / (1.0 - dt * coeff * lam)
            up = self.physical(uc)
            t += dt
        return up, uc


# Optional jax acceleration for unforced torus runs (the only hot path).
# Falls back to the numpy stepper when jax is unavailable or disabled.

_jax_cache: dict = {}


def _jax_torus_advance(surface: FlatTorus):
    if os.environ.get("RICCIFLOW_DISABLE_JAX"):
        return None
    key = surface.resolution
    if key in _jax_cache:
        return _jax_cache[key]
    try:
        import jax
        jax.config.update("jax_enable_x64", True)
        import jax.numpy as jnp
    except Exception:
        _jax_cache[key] = None
        return None

    lam = jnp.asarray(surface._lam_dealiased)
    keep = jnp.asarray(surface._keep.astype(float))
    kbar = surface.kbar
    shape = surface.shape

    def g(up, us):
        lap = jnp.fft.irfft2(lam * us, s=shape)
        e = jnp.exp(-2.0 * up)
        kp = e * lap + kbar * (1.0 - e)
        return kp, jnp.fft.rfft2(kp) * keep

    def one_step(carry, dt):
        up, us = carry
        k1p, k1s = g(up, us)
        k2p, k2s = g(up + 0.5 * dt * k1p, us + 0.5 * dt * k1s)
        k3p, k3s = g(up + 0.5 * dt * k2p, us + 0.5 * dt * k2s)
        k4p, k4s = g(up + dt * k3p, us + dt * k3s)
        usn = us + (dt / 6.0) * (k1s + 2.0 * (k2s + k3s) + k4s)
        return jnp.fft.irfft2(usn, s=shape), usn

    @jax.jit
    def advance(up, us, m, dt):
        return jax.lax.fori_loop(
            0, m, lambda i, c: one_step(c, dt), (up, us))

    def run(up, us, m, dt, t):
        a, b = advance(jnp.asarray(up), jnp.asarray(us), m, dt)
        return np.asarray(a), np.asarray(b)

    _jax_cache[key] = run
    return run


def _stepper_for(surface, forcing, kbar=None):
    if isinstance(surface, FlatTorus):
        return _TorusStepper(surface, forcing, kbar)
    return _SphereStepper(surface, forcing, kbar)


# --- public single-step operations ----------------------------------------

def step_rk4(u: ScalarField, dt: float, kbar: float | None = None,
             forcing=None, t: float = 0.0) -> ScalarField:
    """One classical explicit RK4 step; caller is responsible for dt stability."""
    _check_guard(u.values)
    stepper = _stepper_for(u.surface, _wrap_forcing(forcing, u.surface), kbar)
    up, us = u.values.copy(), stepper.spectral(u.values)
    up, _ = stepper.rk4_steps(up, us, 1, float(dt), t)
    _check_guard(up)
    return ScalarField(u.surface, up)


def step_imex1(u: ScalarField, dt: float, kbar: float | None = None,
               forcing=None, t: float = 0.0) -> ScalarField:
    """One semi-implicit step, unconditionally stable for the frozen coefficient."""
    _check_guard(u.values)
    stepper = _stepper_for(u.surface, _wrap_forcing(forcing, u.surface), kbar)
    up, us = u.values.copy(), stepper.spectral(u.values)
    up, _ = stepper.imex1_steps(up, us, 1, float(dt), t)
    _check_guard(up)
    return ScalarField(u.surface, up)


def _wrap_forcing(forcing, surface):
    if forcing is None:
        return None

    def values_of(t):
        f = forcing(t)
        return f.values if isinstance(f, ScalarField) else np.asarray(f)

    return values_of


# --- trajectory evolution --------------------------------------------------

def evolve(u0: ScalarField, cfg: FlowConfig, t0: float = 0.0) -> Trajectory:
    """Advance u0 to t_end, storing states on a uniform time grid.

    With ``store_spacing`` set, the step size is re-planned at the start of
    every store interval from the current stability cap (RK4) or the
    requested dt (IMEX1); otherwise a single fixed dt is used for the whole
    run and every ``store_every``-th step is stored.  On blow-up the
    trajectory collected so far is returned with ``blown`` set.
    """
    surface = u0.surface
    forcing = _wrap_forcing(cfg.forcing, surface)
    if cfg.require_unit_volume:
        vol = conformal_volume(u0)
        if abs(vol - 1.0) > 1e-10:
            raise ValueError(f"initial data volume {vol} is not 1 within 1e-10")

    stepper = _stepper_for(surface, forcing)
    jax_run = None
    if isinstance(surface, FlatTorus) and forcing is None:
        jax_run = _jax_torus_advance(surface)
    rk4_advance = jax_run if jax_run is not None else stepper.rk4_steps

    traj = Trajectory(surface=surface, times=np.array([t0]),
                      state_values=[u0.values.copy()],
                      rhs_values=[],
                      integrator=cfg.integrator, requested_dt=cfg.dt)
    try:
        traj.rhs_values.append(eval_rhs(u0).values)
    except BlowUpError as err:
        traj.rhs_values.append(np.full(surface.shape, np.nan))
        traj.blown = True
        traj.note = f"initial data rejected: {err}"
        return traj

    if cfg.store_spacing is not None:
        spacing = float(cfg.store_spacing)
        n_int = int(round(cfg.t_end / spacing))
        if n_int < 1 or abs(n_int * spacing - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
            raise ValueError("store_spacing must evenly divide t_end")
        segments = [spacing] * n_int
    else:
        if cfg.integrator == RK4:
            dt_eff = min(cfg.dt, cfl_cap(surface, u0.values, cfg.cfl_safety))
        else:
            dt_eff = cfg.dt
        n_steps = max(1, int(np.ceil(cfg.t_end / dt_eff - 1e-12)))
        if n_steps > cfg.max_steps:
            traj.blown = True
            traj.note = (f"stable step {dt_eff:.3e} needs {n_steps} steps "
                         f"(> max_steps={cfg.max_steps}); aborting")
            return traj
        dt_eff = cfg.t_end / n_steps
        segments = None

    up = u0.values.copy()
    us = stepper.spectral(up)
    times = [t0]
    total_steps = 0

    def reproject():
        nonlocal up, us
        vol = integrate_values(surface, np.exp(2.0 * up))
        up = up - 0.5 * np.log(vol)
        us = stepper.spectral(up)

    def record(t):
        traj.state_values.append(up.copy())
        traj.rhs_values.append(eval_rhs(ScalarField(surface, up)).values)
        times.append(t)

    try:
        if segments is not None:
            t = t0
            for j, seg in enumerate(segments):
                if cfg.integrator == RK4:
                    cap = min(cfg.dt, cfl_cap(surface, up, cfg.cfl_safety))
                else:
                    cap = cfg.dt
                m = max(1, int(np.ceil(seg / cap - 1e-12)))
                total_steps += m
                if total_steps > cfg.max_steps:
                    raise BlowUpError(
                        f"stable step collapsed to {seg / m:.3e}; "
                        f"run exceeds max_steps={cfg.max_steps}")
                dt = seg / m
                traj.dt_intervals.append(dt)
                if cfg.integrator == RK4:
                    up, us = rk4_advance(up, us, m, dt, t)
                else:
                    up, us = stepper.imex1_steps(up, us, m, dt, t)
                t = t0 + (j + 1) * seg
                _check_guard(up)
                if cfg.renormalize_volume:
                    reproject()
                record(t)
        else:
            traj.dt_intervals.append(dt_eff)
            next_store = cfg.store_every
            for k in range(1, n_steps + 1):
                if cfg.integrator == RK4:
                    up, us = rk4_advance(up, us, 1, dt_eff, t0 + (k - 1) * dt_eff)
                else:
                    up, us = stepper.imex1_steps(up, us, 1, dt_eff,
                                                 t0 + (k - 1) * dt_eff)
                _check_guard(up)
                if k == next_store or k == n_steps:
                    if cfg.renormalize_volume:
                        reproject()
                    record(t0 + k * dt_eff)
                    next_store = k + cfg.store_every
    except BlowUpError as err:
        traj.blown = True
        traj.note = str(err)

    traj.times = np.array(times)
    return traj


# --- trajectory export -----------------------------------------------------

def save_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per stored time: t followed by the node values."""
    with open(path, "w", newline="\n") as fh:
        for t, vals in zip(traj.times, traj.state_values):
            row = ",".join(f"{v:.17g}" for v in vals.ravel())
            fh.write(f"{t:.17g},{row}\n")


def save_trajectory_binary(traj: Trajectory, path) -> None:
    """Binary stack of (t, node values) float64 records."""
    n = traj.surface.node_count
    out = np.empty((len(traj.times), n + 1))
    out[:, 0] = traj.times
    for i, vals in enumerate(traj.state_values):
        out[i, 1:] = vals.ravel()
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(out, dtype="<f8").tobytes())


def save_metadata(traj: Trajectory, cfg: FlowConfig, path, extra=None) -> None:
    """Key/value sidecar describing the run."""
    import hashlib
    lines = {
        "surface.kind": traj.surface.kind,
        "surface.resolution": traj.surface.resolution,
        "flow.integrator": traj.integrator,
        "flow.dt": repr(cfg.dt),
        "flow.t_end": repr(cfg.t_end),
        "flow.cfl_safety": repr(cfg.cfl_safety),
        "flow.store_every": cfg.store_every,
        "flow.store_spacing": repr(cfg.store_spacing),
        "stored_states": len(traj.times),
        "blown": traj.blown,
        "note": traj.note,
    }
    if extra:
        lines.update(extra)
    payload = "\n".join(f"{k} = {v}" for k, v in lines.items())
    run_id = hashlib.sha256(payload.encode()).hexdigest()[:16]
    with open(path, "w", newline="\n") as fh:
        fh.write(payload + f"\nrun_id = {run_id}\n")
