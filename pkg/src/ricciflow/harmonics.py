"""Real spherical-harmonic transform tables for the Gauss-Legendre x uniform
longitude grid.

Conventions: a field on the sphere is stored as values[i, j] with i indexing
Gauss-Legendre latitude nodes (x = cos(theta), ascending) and j indexing
equally spaced longitudes.  Coefficients live in an array c[2, m, l] where
c[0] holds the cos(m*phi) family (the m = 0 zonal modes included) and c[1]
the sin(m*phi) family; entries with l < m, and the sin family at m = 0, are
identically zero.

The basis is orthonormal on the unit sphere: synthesis of a unit coefficient
gives a function Y with integral of Y^2 over S^2 equal to 1.
"""

import numpy as np


def legendre_tables(lmax: int, x: np.ndarray) -> np.ndarray:
    """Tables Q[m, i, l] of normalized associated Legendre functions.

    Normalized so that int_{-1}^{1} Q_lm(x)^2 dx = 1/(2 pi); combined with
    the cos/sin longitude factors this yields an orthonormal real basis on
    the unit sphere.  Standard three-term recurrence, stable for the desk
    scales used here (lmax <= a few hundred).
    """
    n = len(x)
    q = np.zeros((lmax + 1, n, lmax + 1))
    s = np.sqrt(1.0 - x * x)
    q[0, :, 0] = np.sqrt(1.0 / (4.0 * np.pi))
    for m in range(1, lmax + 1):
        q[m, :, m] = q[m - 1, :, m - 1] * np.sqrt((2 * m + 1.0) / (2 * m)) * s
    for m in range(lmax + 1):
        if m + 1 <= lmax:
            q[m, :, m + 1] = np.sqrt(2 * m + 3.0) * x * q[m, :, m]
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((2 * l - 1.0) * (2 * l + 1.0) / ((l - m) * (l + m)))
            b = np.sqrt((2 * l + 1.0) * (l - m - 1.0) * (l + m - 1.0)
                        / ((2 * l - 3.0) * (l - m) * (l + m)))
            q[m, :, l] = a * x * q[m, :, l - 1] - b * q[m, :, l - 2]
    return q


class SphereTransform:
    """Forward/inverse real spherical-harmonic transform at degree cutoff lmax.

    Quadrature-exact for band-limited fields: analysis followed by synthesis
    reproduces any field of degree <= lmax to machine precision.
    """

    def __init__(self, lmax: int):
        self.lmax = lmax
        self.n_lat = lmax + 1
        self.n_lon = 2 * (lmax + 1)
        x, w = np.polynomial.legendre.leggauss(self.n_lat)
        self.x = x
        self.glw = w
        self.q = legendre_tables(lmax, x)
        self.qw = self.q * w[None, :, None]
        # Re-orthogonalize the zonal analysis rows against constants, so a
        # constant field analyzes to an exact delta at l = 0 (otherwise the
        # ~1e-16 quadrature defect is amplified by l(l+1) in the Laplacian).
        defect = self.qw[0].sum(axis=0)
        defect[0] = 0.0
        self.qw[0] -= defect[None, :] * (w / w.sum())[:, None]
        pref = np.full(lmax + 1, np.sqrt(2.0) * np.pi)
        pref[0] = 2.0 * np.pi
        self._pref = pref[None, :, None]
        post = np.full(lmax + 1, np.sqrt(2.0))
        post[0] = 1.0
        self._post = post[None, :, None]

    def analysis(self, values: np.ndarray) -> np.ndarray:
        """Grid values (n_lat, n_lon) -> coefficients (2, lmax+1, lmax+1)."""
        lmax, n_lon = self.lmax, self.n_lon
        f = np.fft.rfft(values, axis=1)
        a = (2.0 / n_lon) * f[:, :lmax + 1].real.T
        a[0] *= 0.5
        b = (-2.0 / n_lon) * f[:, :lmax + 1].imag.T
        ab = np.stack([a, b])
        c = np.einsum('mil,cmi->cml', self.qw, ab)
        c *= self._pref
        c[1, 0, :] = 0.0
        return c

    def synthesis(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients (2, lmax+1, lmax+1) -> grid values (n_lat, n_lon)."""
        lmax, n_lon = self.lmax, self.n_lon
        ab = np.einsum('mil,cml->cmi', self.q, coeffs * self._post)
        f = np.zeros((self.n_lat, n_lon // 2 + 1), complex)
        f[:, :lmax + 1] = (n_lon / 2.0) * (ab[0].T - 1j * ab[1].T)
        f[:, 0] = f[:, 0].real * 2.0
        return np.fft.irfft(f, n=n_lon, axis=1)
