"""Constant-curvature background surfaces with spectral calculus.

Two backgrounds are supported, both normalized to unit volume:

* ``FlatTorus``: the unit square with periodic identifications, flat metric,
  Gauss curvature 0.  Fields live on an N x N uniform grid; derivatives are
  Fourier-spectral.
* ``RoundSphere``: the round sphere of radius r with 4 pi r^2 = 1, Gauss
  curvature 4 pi.  Fields live on an (L+1) Gauss-Legendre x 2(L+1) uniform
  longitude grid; derivatives go through the spherical-harmonic transform.

Nonlinear terms are always evaluated pointwise on the grid; whenever a field
is projected back onto the spectral basis the top third of the modes is
discarded (2/3-rule dealiasing, isotropic truncation).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

TORUS = "torus"
SPHERE = "sphere"

trapz = getattr(np, "trapezoid", np.trapz)

_BINARY_MAGIC = b"RFLD"
_KIND_TAGS = {TORUS: 0, SPHERE: 1}
_KIND_FROM_TAG = {v: k for k, v in _KIND_TAGS.items()}


class FlatTorus:
    """Unit-area flat torus sampled on an N x N periodic grid."""

    kind = TORUS

    def __init__(self, resolution: int):
        if resolution < 8:
            raise ValueError(f"torus resolution must be >= 8, got {resolution}")
        n = int(resolution)
        self.resolution = n
        self.shape = (n, n)
        self.kbar = 0.0
        self.area_element = np.full((n, n), 1.0 / (n * n))
        kx = np.fft.fftfreq(n, 1.0 / n)          # integer wavenumbers
        ky = np.fft.rfftfreq(n, 1.0 / n)
        k2 = kx[:, None] ** 2 + ky[None, :] ** 2
        self._keep = (k2 <= (n / 3.0) ** 2)      # isotropic 2/3-rule band
        self._lam = -4.0 * np.pi ** 2 * k2
        self._lam_dealiased = self._lam * self._keep
        # odd-derivative multipliers; Nyquist modes zeroed (empty in-band anyway)
        dx = 2j * np.pi * kx
        dy = 2j * np.pi * ky.astype(complex)
        if n % 2 == 0:
            dx[n // 2] = 0.0
            dy[-1] = 0.0
        self._dx = dx[:, None]
        self._dy = dy[None, :]
        self.band_limit = n // 3
        self.lam_max = 4.0 * np.pi ** 2 * (n / 3.0) ** 2

    @property
    def node_count(self) -> int:
        return self.resolution ** 2

    def to_spectral(self, values):
        return sfft.rfft2(values)

    def from_spectral(self, spec):
        return sfft.irfft2(spec, s=self.shape)

    def laplacian_values(self, values, dealiased=False):
        lam = self._lam_dealiased if dealiased else self._lam
        return self.from_spectral(lam * self.to_spectral(values))

    def gradient_values(self, values):
        spec = self.to_spectral(values)
        gx = self.from_spectral(self._dx * spec)
        gy = self.from_spectral(self._dy * spec)
        return gx, gy

    def grad_norm_sq_values(self, values):
        gx, gy = self.gradient_values(values)
        return gx * gx + gy * gy

    def dealias_values(self, values):
        return self.from_spectral(self._keep * self.to_spectral(values))


class RoundSphere:
    """Round sphere of radius r = 1/(2 sqrt(pi)) so that vol = 1, kbar = 4 pi."""

    kind = SPHERE

    def __init__(self, resolution: int):
        if resolution < 7:
            raise ValueError(f"sphere harmonic cutoff must be >= 7, got {resolution}")
        from .harmonics import SphereTransform

        lmax = int(resolution)
        self.resolution = lmax
        self.transform = SphereTransform(lmax)
        self.shape = (self.transform.n_lat, self.transform.n_lon)
        self.r2 = 1.0 / (4.0 * np.pi)
        self.kbar = 4.0 * np.pi
        w = (self.transform.glw[:, None] * (2.0 * np.pi / self.transform.n_lon)
             * self.r2)
        self.area_element = np.broadcast_to(w, self.shape).copy()
        ell = np.arange(lmax + 1, dtype=float)
        self._lap_mult = -(ell * (ell + 1.0)) / self.r2
        self.band_limit = lmax // 3
        self._l_dealias = (2 * lmax) // 3
        keep = np.ones(lmax + 1)
        keep[self._l_dealias + 1:] = 0.0
        self._keep = keep
        self.lam_max = self._l_dealias * (self._l_dealias + 1.0) / self.r2

    @property
    def node_count(self) -> int:
        return self.shape[0] * self.shape[1]

    def to_spectral(self, values):
        return self.transform.analysis(values)

    def from_spectral(self, coeffs):
        return self.transform.synthesis(coeffs)

    def laplacian_values(self, values, dealiased=False):
        c = self.to_spectral(values) * self._lap_mult[None, None, :]
        if dealiased:
            c *= self._keep[None, None, :]
        return self.from_spectral(c)

    def grad_norm_sq_values(self, values):
        # |grad f|^2 = (1/2) lap(f^2) - f lap(f): coordinate-free, avoids the
        # pole-singular theta/phi derivatives; exact for band limit <= lmax/2.
        lap_f = self.laplacian_values(values)
        lap_f2 = self.laplacian_values(values * values)
        return 0.5 * lap_f2 - values * lap_f

    def dealias_values(self, values):
        return self.from_spectral(self.to_spectral(values) * self._keep[None, None, :])


Surface = FlatTorus | RoundSphere


def build_surface(kind: str, resolution: int) -> Surface:
    """Construct a unit-volume background surface of the given kind."""
    if kind == TORUS:
        return FlatTorus(resolution)
    if kind == SPHERE:
        return RoundSphere(resolution)
    raise ValueError(f"unsupported surface kind: {kind!r}")


@dataclass
class ScalarField:
    """A real function sampled on the nodes of a background surface."""

    surface: Surface
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.surface.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match surface "
                f"grid {self.surface.shape}")

    def copy(self) -> "ScalarField":
        return ScalarField(self.surface, self.values.copy())

    def __add__(self, other):
        return ScalarField(self.surface, self.values + _raw(other, self.surface))

    def __sub__(self, other):
        return ScalarField(self.surface, self.values - _raw(other, self.surface))

    def __mul__(self, other):
        return ScalarField(self.surface, self.values * _raw(other, self.surface))

    __rmul__ = __mul__


def _raw(x, surface):
    if isinstance(x, ScalarField):
        if x.surface is not surface and x.surface.shape != surface.shape:
            raise ValueError("fields live on different surfaces")
        return x.values
    return x


def constant_field(surface: Surface, value: float) -> ScalarField:
    return ScalarField(surface, np.full(surface.shape, float(value)))


def zero_field(surface: Surface) -> ScalarField:
    return constant_field(surface, 0.0)


def laplacian(f: ScalarField) -> ScalarField:
    """Spectral Laplace-Beltrami operator of the background metric."""
    return ScalarField(f.surface, f.surface.laplacian_values(f.values))


def grad_norm_sq(f: ScalarField) -> ScalarField:
    """Pointwise squared gradient magnitude |grad f|^2 of the background metric."""
    return ScalarField(f.surface, f.surface.grad_norm_sq_values(f.values))


def dealias(f: ScalarField) -> ScalarField:
    """Project onto the retained spectral band (isotropic 2/3 rule)."""
    return ScalarField(f.surface, f.surface.dealias_values(f.values))


def integrate(f: ScalarField) -> float:
    """Quadrature of f against the background area element (total weight 1)."""
    return float(np.sum(f.surface.area_element * f.values))


def integrate_values(surface: Surface, values: np.ndarray) -> float:
    return float(np.sum(surface.area_element * values))


def lp_norm(f: ScalarField, p: float) -> float:
    """L^p norm w.r.t. the background measure, 1 <= p < inf."""
    if not np.isfinite(p) or p < 1:
        raise ValueError(f"lp_norm requires 1 <= p < inf, got {p}")
    return float(np.sum(f.surface.area_element * np.abs(f.values) ** p) ** (1.0 / p))


def sup_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values)))


def h1_norm(f: ScalarField) -> float:
    """Sobolev norm: sqrt(||f||_L2^2 + ||grad f||_L2^2)."""
    l2sq = np.sum(f.surface.area_element * f.values ** 2)
    gradsq = np.sum(f.surface.area_element * f.surface.grad_norm_sq_values(f.values))
    return float(np.sqrt(l2sq + max(gradsq, 0.0)))


def resample(f: ScalarField, target: Surface) -> ScalarField:
    """Spectral up/down-sampling between two surfaces of the same kind."""
    src = f.surface
    if src.kind != target.kind:
        raise ValueError("cannot resample between different surface kinds")
    if src.kind == TORUS:
        n_in, n_out = src.resolution, target.resolution
        spec = np.fft.fft2(f.values) / (n_in * n_in)
        out = np.zeros((n_out, n_out), complex)
        half = min(n_in, n_out) // 2
        idx = np.r_[0:half + 1, -half + 1:0] if half > 0 else np.r_[0:1]
        out[np.ix_(idx, idx)] = spec[np.ix_(idx, idx)]
        return ScalarField(target, np.real(np.fft.ifft2(out)) * (n_out * n_out))
    c_in = src.to_spectral(f.values)
    lmax = min(src.resolution, target.resolution)
    c_out = np.zeros((2, target.resolution + 1, target.resolution + 1))
    c_out[:, :lmax + 1, :lmax + 1] = c_in[:, :lmax + 1, :lmax + 1]
    return ScalarField(target, target.from_spectral(c_out))


# --- serialization ---------------------------------------------------------

def save_field_csv(f: ScalarField, path) -> None:
    """Flat CSV of (node index, value); exact float64 round-trip via %.17g."""
    with open(path, "w", newline="\n") as fh:
        fh.write("index,value\n")
        for i, v in enumerate(f.values.ravel()):
            fh.write(f"{i},{v:.17g}\n")


def load_field_csv(surface: Surface, path) -> ScalarField:
    values = np.zeros(surface.node_count)
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "index,value":
            raise ValueError(f"unrecognized field CSV header: {header!r}")
        for line in fh:
            if not line.strip():
                continue
            idx, val = line.split(",")
            values[int(idx)] = float(val)
    return ScalarField(surface, values.reshape(surface.shape))


def save_field_binary(f: ScalarField, path) -> None:
    """Raw float64 node values behind a 16-byte (magic, kind, resolution) header."""
    header = struct.pack("<4sIII", _BINARY_MAGIC, _KIND_TAGS[f.surface.kind],
                         f.surface.resolution, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field_binary(path, surface: Surface | None = None) -> ScalarField:
    with open(path, "rb") as fh:
        header = fh.read(16)
        magic, tag, resolution, _ = struct.unpack("<4sIII", header)
        if magic != _BINARY_MAGIC:
            raise ValueError("not a ricciflow field file")
        if surface is None:
            surface = build_surface(_KIND_FROM_TAG[tag], resolution)
        elif (_KIND_TAGS[surface.kind] != tag
              or surface.resolution != resolution):
            raise ValueError("field file does not match the provided surface")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != surface.node_count:
        raise ValueError("field file is truncated")
    return ScalarField(surface, data.reshape(surface.shape).copy())
