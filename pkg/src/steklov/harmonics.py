"""Spectral angular algebra on S^1 and S^2.

Fields live in real spectral bases:

* circle: ``{1, cos(k th), sin(k th)}`` with coefficients indexed by
  k in [-K, K]; negative k holds the ``sin(|k| th)`` coefficient.
* sphere: real orthonormal spherical harmonics ``Y_{l,m}`` built from the
  complex harmonics, with coefficients packed at index ``l^2 + l + m``.

All transforms are dense (direct) and exact for band-limited data on
grids built by :meth:`AngularGrid.for_bandlimit`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, SizingError

CIRCLE = "circle"
SPHERE = "sphere"

_TWO_PI = 2.0 * np.pi


def n_modes(dimension: str, bandlimit: int) -> int:
    """Length of the real coefficient vector for a given bandlimit."""
    if dimension == CIRCLE:
        return 2 * bandlimit + 1
    if dimension == SPHERE:
        return (bandlimit + 1) ** 2
    raise DomainError(f"unknown dimension {dimension!r}")


def mode_index(dimension: str, mode, bandlimit: int) -> int:
    """Flat index of a mode: signed k (circle) or an (l, m) pair (sphere)."""
    if dimension == CIRCLE:
        k = int(mode)
        if abs(k) > bandlimit:
            raise SizingError(f"|k|={abs(k)} exceeds bandlimit {bandlimit}")
        return k + bandlimit
    l, m = mode
    if l < 0 or abs(m) > l:
        raise DomainError(f"invalid sphere mode (l, m) = ({l}, {m})")
    if l > bandlimit:
        raise SizingError(f"l={l} exceeds bandlimit {bandlimit}")
    return l * l + l + m


def mode_list(dimension: str, bandlimit: int):
    """All modes in flat-index order."""
    if dimension == CIRCLE:
        return list(range(-bandlimit, bandlimit + 1))
    return [(l, m) for l in range(bandlimit + 1) for m in range(-l, l + 1)]


@dataclass(frozen=True, eq=False)
class AngularField:
    """Band-limited function on S^1 or S^2 in real spectral form."""

    dimension: str
    bandlimit: int
    coeffs: np.ndarray

    def __post_init__(self):
        expected = n_modes(self.dimension, self.bandlimit)
        if self.coeffs.shape != (expected,):
            raise SizingError(
                f"coefficient vector has length {self.coeffs.shape}, "
                f"expected ({expected},)"
            )


def zero_field(dimension: str, bandlimit: int) -> AngularField:
    return AngularField(dimension, bandlimit, np.zeros(n_modes(dimension, bandlimit)))


def constant_field(dimension: str, value: float, bandlimit: int = 0) -> AngularField:
    """Field identically equal to ``value``."""
    coeffs = np.zeros(n_modes(dimension, bandlimit))
    if dimension == SPHERE:
        # the constant basis function is Y_{0,0} = 1/sqrt(4 pi)
        coeffs[0] = value * np.sqrt(4.0 * np.pi)
    else:
        coeffs[bandlimit] = value
    return AngularField(dimension, bandlimit, coeffs)


def field_from_modes(dimension: str, pairs, bandlimit: int | None = None) -> AngularField:
    """Build a field from (mode, amplitude) pairs."""
    if bandlimit is None:
        if dimension == CIRCLE:
            bandlimit = max(abs(int(m)) for m, _ in pairs)
        else:
            bandlimit = max(int(m[0]) for m, _ in pairs)
    coeffs = np.zeros(n_modes(dimension, bandlimit))
    for mode, amp in pairs:
        coeffs[mode_index(dimension, mode, bandlimit)] += amp
    return AngularField(dimension, bandlimit, coeffs)


def basis_field(dimension: str, mode, bandlimit: int | None = None) -> AngularField:
    return field_from_modes(dimension, [(mode, 1.0)], bandlimit)


def add(f: AngularField, g: AngularField) -> AngularField:
    """Sum of two fields at the larger of the two bandlimits."""
    if f.dimension != g.dimension:
        raise SizingError("cannot add fields on different manifolds")
    b = max(f.bandlimit, g.bandlimit)
    return AngularField(
        f.dimension, b, resize(f, b).coeffs + resize(g, b).coeffs
    )


def scale(f: AngularField, c: float) -> AngularField:
    return AngularField(f.dimension, f.bandlimit, c * f.coeffs)


def resize(f: AngularField, bandlimit: int) -> AngularField:
    """Zero-pad or truncate a field to a new bandlimit."""
    if bandlimit == f.bandlimit:
        return f
    out = np.zeros(n_modes(f.dimension, bandlimit))
    if f.dimension == CIRCLE:
        b = min(bandlimit, f.bandlimit)
        out[bandlimit - b : bandlimit + b + 1] = f.coeffs[
            f.bandlimit - b : f.bandlimit + b + 1
        ]
    else:
        b = min(bandlimit, f.bandlimit)
        out[: (b + 1) ** 2] = f.coeffs[: (b + 1) ** 2]
    return AngularField(f.dimension, bandlimit, out)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

class AngularGrid:
    """Pseudo-spectral evaluation grid with exact quadrature.

    Circle: uniform nodes, count 2(2K+1).  Sphere: Gauss-Legendre nodes in
    cos(theta) (pole-free), ceil(3L/2)+1 of them, and 2(2L+1) uniform
    azimuthal nodes.  Quadrature integrates products of basis functions up
    to degree 2*bandlimit exactly.
    """

    def __init__(self, dimension: str, bandlimit: int, oversample: int = 1):
        self.dimension = dimension
        self.bandlimit = bandlimit
        if dimension == CIRCLE:
            m = oversample * 2 * (2 * bandlimit + 1)
            self.theta = _TWO_PI * np.arange(m) / m
            self.weights = np.full(m, _TWO_PI / m)
        elif dimension == SPHERE:
            n_theta = oversample * (int(np.ceil(1.5 * bandlimit)) + 1)
            x, wx = np.polynomial.legendre.leggauss(n_theta)
            order = np.argsort(-x)  # descending x = increasing theta
            self.x = x[order]
            self.wx = wx[order]
            self.theta = np.arccos(self.x)
            self.sin_theta = np.sqrt(1.0 - self.x * self.x)
            n_phi = oversample * 2 * (2 * bandlimit + 1)
            self.phi = _TWO_PI * np.arange(n_phi) / n_phi
            self.wphi = _TWO_PI / n_phi
        else:
            raise DomainError(f"unknown dimension {dimension!r}")
        self._tables: dict = {}

    @staticmethod
    @lru_cache(maxsize=None)
    def for_bandlimit(dimension: str, bandlimit: int) -> "AngularGrid":
        return AngularGrid(dimension, bandlimit)

    # -- cached evaluation tables ------------------------------------------

    def circle_basis(self, bandlimit: int) -> np.ndarray:
        """(2K+1, M) matrix of basis values at the nodes."""
        key = ("circle_basis", bandlimit)
        if key not in self._tables:
            ks = np.arange(1, bandlimit + 1)
            rows = np.empty((2 * bandlimit + 1, len(self.theta)))
            rows[bandlimit] = 1.0
            if bandlimit > 0:
                arg = ks[:, None] * self.theta[None, :]
                rows[bandlimit + 1 :] = np.cos(arg)
                rows[bandlimit - 1 :: -1] = np.sin(arg)
            self._tables[key] = rows
        return self._tables[key]

    def ybar(self, bandlimit: int, order: int = 0):
        """Per-m tables of normalized Legendre theta-factors (and their
        theta-derivatives of the given order) at the grid nodes.

        Tables are sized by the requested bandlimit; callers pass the
        field's bandlimit so oversampled grids stay cheap.
        """
        key = ("ybar", bandlimit, order)
        if key not in self._tables:
            if order == 0:
                self._tables[key] = _ybar_tables(bandlimit, self.x)
            elif order == 1:
                self._tables[key] = _dybar_tables(
                    self.ybar(bandlimit, 0), self.x, self.sin_theta
                )
            else:
                self._tables[key] = _higher_theta_tables(
                    self.ybar(bandlimit, 0), self.ybar(bandlimit, 1), self.x,
                    self.sin_theta, order,
                )
        return self._tables[key]

    def phi_trig(self, bandlimit: int):
        """cos(m phi) and sin(m phi) tables, m = 0..bandlimit."""
        key = ("phi_trig", bandlimit)
        if key not in self._tables:
            arg = np.arange(bandlimit + 1)[:, None] * self.phi[None, :]
            self._tables[key] = (np.cos(arg), np.sin(arg))
        return self._tables[key]


def _ybar_tables(L: int, x: np.ndarray):
    """tabs[m][l-m, i] = Ybar_l^m(x_i) where Y_l^m = Ybar * e^{i m phi} is
    the orthonormal complex harmonic (Condon-Shortley phase included)."""
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    tabs = []
    diag = np.full_like(x, np.sqrt(1.0 / (4.0 * np.pi)))
    for m in range(L + 1):
        tab = np.zeros((L + 1 - m, len(x)))
        tab[0] = diag
        if L - m >= 1:
            tab[1] = np.sqrt(2.0 * m + 3.0) * x * diag
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            tab[l - m] = a * (x * tab[l - 1 - m] - b * tab[l - 2 - m])
        tabs.append(tab)
        diag = -np.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0)) * s * diag
    return tabs


def _dybar_tables(tabs, x, sin_theta):
    """d/d(theta) of the Ybar tables; valid at interior nodes only."""
    cot = x / sin_theta
    out = []
    L = len(tabs) - 1
    for m in range(L + 1):
        T = tabs[m]
        D = np.zeros_like(T)
        for l in range(m, L + 1):
            D[l - m] = l * cot * T[l - m]
            if l - 1 >= m:
                c = np.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0))
                D[l - m] -= c * T[l - 1 - m] / sin_theta
        out.append(D)
    return out


def _higher_theta_tables(tabs, dtabs, x, sin_theta, order):
    """Exact theta-derivative tables of arbitrary order.

    Uses the Legendre ODE y'' = -cot(th) y' + (m^2/sin^2 - l(l+1)) y to
    express y^(j) = p_j(c) y + q_j(c) y' with polynomials in c = cot(th);
    d/d(theta) c = -(1 + c^2) keeps the recursion inside R[c].
    """
    from numpy.polynomial import polynomial as P

    cot = x / sin_theta
    L = len(tabs) - 1
    out = []
    for m in range(L + 1):
        T = np.zeros_like(tabs[m])
        for l in range(m, L + 1):
            lam = l * (l + 1.0)
            p, q = np.array([1.0]), np.array([0.0])
            for _ in range(order):
                dp, dq = P.polyder(p), P.polyder(q)
                # m^2/sin^2 - lam = m^2 (1 + c^2) - lam
                coef = np.array([m * m - lam, 0.0, float(m * m)])
                p_next = P.polyadd(P.polymul([-1.0, 0.0, -1.0], dp), P.polymul(coef, q))
                q_next = P.polyadd(
                    P.polyadd(p, P.polymul([-1.0, 0.0, -1.0], dq)),
                    P.polymul([0.0, -1.0], q),
                )
                p, q = p_next, q_next
            T[l - m] = P.polyval(cot, p) * tabs[m][l - m] + P.polyval(cot, q) * dtabs[m][l - m]
        out.append(T)
    return out


# ---------------------------------------------------------------------------
# semi-spectral representation (Fourier in the periodic angle, collocated
# in cos-theta) -- the workhorse behind products and the volume operators
# ---------------------------------------------------------------------------

class SemiBasis:
    """Exact conversion between real coefficient blocks and a complex
    semi-spectral representation.

    Semi arrays have shape (2*cap+1, n_theta, *rest); the circle uses a
    singleton theta axis so convolution code is shared.  Index ``cap + m``
    holds the e^{i m phi} component (circle: e^{i k theta}).
    """

    def __init__(self, grid: AngularGrid):
        self.dimension = grid.dimension
        self.cap = grid.bandlimit
        self.grid = grid
        self.n_theta = 1 if grid.dimension == CIRCLE else len(grid.x)

    @staticmethod
    @lru_cache(maxsize=None)
    def for_cap(dimension: str, cap: int) -> "SemiBasis":
        return SemiBasis(AngularGrid.for_bandlimit(dimension, cap))

    def _alloc(self, rest):
        return np.zeros((2 * self.cap + 1, self.n_theta) + rest, dtype=complex)

    def to_semi(self, coeffs: np.ndarray, bandlimit: int, deriv: int = 0) -> np.ndarray:
        """Exact semi representation of a real coefficient block.

        ``deriv=1`` applies d/d(theta): exact for the sphere via derivative
        tables; for the circle theta *is* the Fourier angle, so use
        :meth:`dphi` instead.
        """
        cap, B = self.cap, bandlimit
        rest = coeffs.shape[1:]
        F = self._alloc(rest)
        if self.dimension == CIRCLE:
            if deriv:
                raise DomainError("circle theta-derivative is the Fourier derivative")
            ks = np.arange(1, B + 1)
            F[cap, 0] = coeffs[B]
            F[cap + ks, 0] = 0.5 * (coeffs[B + ks] - 1j * coeffs[B - ks])
            F[cap - ks, 0] = np.conj(F[cap + ks, 0])
            return F
        tabs = self.grid.ybar(B, deriv)
        half = 1.0 / np.sqrt(2.0)
        for m in range(B + 1):
            ls = np.arange(m, B + 1)
            idx_c = ls * ls + ls + m
            T = tabs[m]  # (n_l, n_theta)
            Ac = np.tensordot(T, coeffs[idx_c], axes=(0, 0))  # (n_theta, *rest)
            if m == 0:
                F[cap] = Ac
                continue
            As = np.tensordot(T, coeffs[ls * ls + ls - m], axes=(0, 0))
            sign = -half if m % 2 else half
            F[cap + m] = sign * (Ac - 1j * As)
            F[cap - m] = np.conj(F[cap + m])
        return F

    def from_semi(self, F: np.ndarray, bandlimit: int) -> np.ndarray:
        """Analyze a semi array back to real coefficients (exact for
        content band-limited by ``bandlimit`` <= cap)."""
        cap, B = self.cap, bandlimit
        rest = F.shape[2:]
        if self.dimension == CIRCLE:
            out = np.empty((2 * B + 1,) + rest)
            ks = np.arange(1, B + 1)
            out[B] = F[cap, 0].real
            out[B + ks] = 2.0 * F[cap + ks, 0].real
            out[B - ks] = -2.0 * F[cap + ks, 0].imag
            return out
        tabs = self.grid.ybar(B, 0)
        w = self.grid.wx
        out = np.zeros(((B + 1) ** 2,) + rest)
        rt2 = np.sqrt(2.0)
        for m in range(B + 1):
            ls = np.arange(m, B + 1)
            T = tabs[m] * w[None, :]
            if m == 0:
                out[ls * ls + ls] = _TWO_PI * np.tensordot(T, F[cap].real, axes=(1, 0))
                continue
            sign = -rt2 if m % 2 else rt2
            out[ls * ls + ls + m] = sign * _TWO_PI * np.tensordot(
                T, F[cap + m].real, axes=(1, 0)
            )
            out[ls * ls + ls - m] = -sign * _TWO_PI * np.tensordot(
                T, F[cap + m].imag, axes=(1, 0)
            )
        return out

    def dphi(self, F: np.ndarray) -> np.ndarray:
        """Derivative along the periodic angle (phi; circle: theta)."""
        m = np.arange(-self.cap, self.cap + 1)
        return F * (1j * m).reshape((-1,) + (1,) * (F.ndim - 1))

    def over_sin(self, F: np.ndarray) -> np.ndarray:
        if self.dimension == CIRCLE:
            raise DomainError("1/sin(theta) weight is a sphere operation")
        return F / self.grid.sin_theta.reshape((1, -1) + (1,) * (F.ndim - 2))

    def kernel(self, f: AngularField, theta_deriv: bool = False,
               phi_deriv: bool = False, over_sin: bool = False) -> np.ndarray:
        """Trimmed semi representation of a multiplier field, optionally of
        one of its first derivatives.

        On the circle the angle is the Fourier direction, so a theta
        derivative is performed spectrally.  Derivative kernels are exact
        in this representation even when the derivative is not band-limited
        in the harmonic basis (finite Fourier support, pointwise theta).
        """
        if self.dimension == CIRCLE and theta_deriv:
            F = self.dphi(self.to_semi(f.coeffs, f.bandlimit))
        else:
            F = self.to_semi(f.coeffs, f.bandlimit, deriv=1 if theta_deriv else 0)
        if phi_deriv:
            F = self.dphi(F)
        if over_sin:
            F = self.over_sin(F)
        b = f.bandlimit
        return F[self.cap - b : self.cap + b + 1]

    def conv_mult(self, kernel: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Pointwise product: convolution along the Fourier axis, pointwise
        in theta.  Content pushed beyond the cap is dropped (callers size
        the cap so that never loses true content)."""
        n = 2 * self.cap + 1
        bk = (kernel.shape[0] - 1) // 2
        out = np.zeros_like(F)
        scratch = np.empty_like(F)
        for tap in range(kernel.shape[0]):
            if not np.any(kernel[tap]):
                continue
            s = tap - bk
            lo, hi = max(0, s), min(n, n + s)
            g = kernel[tap].reshape(kernel.shape[1:2] + (1,) * (F.ndim - 2))
            buf = scratch[: hi - lo]
            np.multiply(F[lo - s : hi - s], g, out=buf)
            out[lo:hi] += buf
        return out

    def from_values(self, vals: np.ndarray) -> np.ndarray:
        """Semi representation of grid values (exact Fourier projection in
        the periodic angle; theta stays collocated)."""
        if self.dimension == CIRCLE:
            th = self.grid.theta
            m = np.arange(-self.cap, self.cap + 1)
            E = np.exp(-1j * np.outer(m, th)) / len(th)
            return np.tensordot(E, vals, axes=(1, 0))[:, None]
        ms = np.arange(-self.cap, self.cap + 1)
        E = np.exp(-1j * np.outer(ms, self.grid.phi)) / len(self.grid.phi)
        return np.tensordot(E, vals, axes=(1, 1))

    def values(self, F: np.ndarray) -> np.ndarray:
        """Evaluate a semi array on the full grid (theta x phi nodes)."""
        if self.dimension == CIRCLE:
            th = self.grid.theta
            m = np.arange(-self.cap, self.cap + 1)
            E = np.exp(1j * np.outer(m, th))
            return np.tensordot(E, F[:, 0], axes=(0, 0)).real
        cosmp, sinmp = self.grid.phi_trig(self.cap)
        cap = self.cap
        out = np.multiply.outer(F[cap].real, np.ones(len(self.grid.phi)))
        # move phi axis after theta
        out = np.moveaxis(out, -1, 1)
        for m in range(1, cap + 1):
            if not np.any(F[cap + m]):
                continue
            re = np.moveaxis(np.multiply.outer(F[cap + m].real, cosmp[m]), -1, 1)
            im = np.moveaxis(np.multiply.outer(F[cap + m].imag, sinmp[m]), -1, 1)
            out += 2.0 * (re - im)
        return out


# ---------------------------------------------------------------------------
# transforms and pointwise algebra
# ---------------------------------------------------------------------------

def synthesize(f: AngularField, grid: AngularGrid) -> np.ndarray:
    """Sample a field at the grid nodes.

    Circle: shape (M,).  Sphere: shape (n_theta, n_phi).
    """
    if grid.dimension != f.dimension:
        raise SizingError("grid/field dimension mismatch")
    if grid.bandlimit < f.bandlimit:
        raise SizingError(
            f"grid bandlimit {grid.bandlimit} below field bandlimit {f.bandlimit}"
        )
    if f.dimension == CIRCLE:
        return f.coeffs @ grid.circle_basis(f.bandlimit)
    semi = SemiBasis.for_cap(SPHERE, grid.bandlimit)
    return semi.values(semi.to_semi(f.coeffs, f.bandlimit))


def analyze(samples: np.ndarray, grid: AngularGrid, bandlimit: int) -> AngularField:
    """Project samples onto the basis; inverse of synthesize for
    band-limited input."""
    if bandlimit > grid.bandlimit:
        raise SizingError("requested bandlimit exceeds grid capacity")
    if grid.dimension == CIRCLE:
        basis = grid.circle_basis(bandlimit)
        coeffs = basis @ (grid.weights * samples)
        coeffs /= np.pi
        coeffs[bandlimit] *= 0.5
        return AngularField(CIRCLE, bandlimit, coeffs)
    semi = SemiBasis.for_cap(SPHERE, grid.bandlimit)
    n_phi = len(grid.phi)
    ms = np.arange(-grid.bandlimit, grid.bandlimit + 1)
    E = np.exp(-1j * np.outer(ms, grid.phi)) / n_phi
    F = np.tensordot(E, samples, axes=(1, 1))  # (2cap+1, n_theta)
    return AngularField(SPHERE, bandlimit, semi.from_semi(F, bandlimit))


def integrate(samples: np.ndarray, grid: AngularGrid) -> float:
    """Quadrature of samples over the circle/sphere measure."""
    if grid.dimension == CIRCLE:
        return float(np.dot(grid.weights, samples))
    return float(grid.wphi * np.dot(grid.wx, samples.sum(axis=1)))


def real_sph_harm(l: int, m: int, theta, phi):
    """Real spherical harmonic Y_{l,m}; orthonormal on the sphere.

    Built from the complex harmonics (Condon-Shortley phase via the
    Rodrigues definition): m > 0 pairs with cos(m phi), m < 0 with
    sin(|m| phi).
    """
    if l < 0 or abs(m) > l:
        raise DomainError(f"invalid (l, m) = ({l}, {m})")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    x = np.cos(theta)
    s = np.sin(theta)
    # upward recurrence on the orthonormalized theta factor
    ybar = np.full_like(x, np.sqrt(1.0 / (4.0 * np.pi)))
    for mm in range(am):
        ybar = -np.sqrt((2.0 * mm + 3.0) / (2.0 * mm + 2.0)) * s * ybar
    if l > am:
        prev = ybar
        ybar = np.sqrt(2.0 * am + 3.0) * x * ybar
        for ll in range(am + 2, l + 1):
            a = np.sqrt((4.0 * ll * ll - 1.0) / (ll * ll - am * am))
            b = np.sqrt(((ll - 1.0) ** 2 - am * am) / (4.0 * (ll - 1.0) ** 2 - 1.0))
            ybar, prev = a * (x * ybar - b * prev), ybar
    if m == 0:
        return ybar if ybar.ndim else float(ybar)
    sign = -1.0 if am % 2 else 1.0
    out = sign * np.sqrt(2.0) * ybar * (np.cos(am * phi) if m > 0 else np.sin(am * phi))
    return out if out.ndim else float(out)


def differentiate(f: AngularField, grid: AngularGrid, var: str = "theta") -> np.ndarray:
    """Samples of a first derivative at the grid nodes.

    ``var`` is ``"theta"`` or, on the sphere, ``"phi"`` /
    ``"phi_over_sin"`` (the combination d_phi f / sin(theta), finite at
    the pole-free nodes).
    """
    if f.dimension == CIRCLE:
        if var != "theta":
            raise DomainError("circle fields only have a theta derivative")
        return synthesize(_circle_dtheta(f), grid)
    if grid.bandlimit < f.bandlimit:
        raise SizingError("grid bandlimit below field bandlimit")
    semi = SemiBasis.for_cap(SPHERE, grid.bandlimit)
    if var == "theta":
        return semi.values(semi.to_semi(f.coeffs, f.bandlimit, deriv=1))
    F = semi.dphi(semi.to_semi(f.coeffs, f.bandlimit))
    if var == "phi":
        return semi.values(F)
    if var == "phi_over_sin":
        return semi.values(semi.over_sin(F))
    raise DomainError(f"unknown derivative variable {var!r}")


def _circle_dtheta(f: AngularField) -> AngularField:
    K = f.bandlimit
    ks = np.arange(1, K + 1)
    out = np.zeros_like(f.coeffs)
    out[K + ks] = ks * f.coeffs[K - ks]   # d sin -> +k cos
    out[K - ks] = -ks * f.coeffs[K + ks]  # d cos -> -k sin
    return AngularField(CIRCLE, K, out)


def dphi_field(f: AngularField) -> AngularField:
    """Coefficient-space d/d(phi) on the sphere (exact, band-limited)."""
    L = f.bandlimit
    out = np.zeros_like(f.coeffs)
    for l in range(L + 1):
        base = l * l + l
        for m in range(1, l + 1):
            out[base + m] = m * f.coeffs[base - m]
            out[base - m] = -m * f.coeffs[base + m]
    return AngularField(SPHERE, L, out)


def multiply(f: AngularField, g: AngularField) -> AngularField:
    """Coefficients of the pointwise product, computed on an oversampled
    grid and re-analyzed; the bandlimit grows to the sum (exact)."""
    if f.dimension != g.dimension:
        raise SizingError("cannot multiply fields on different manifolds")
    out_b = f.bandlimit + g.bandlimit
    grid = AngularGrid.for_bandlimit(f.dimension, out_b)
    return analyze(synthesize(f, grid) * synthesize(g, grid), grid, out_b)


def surface_laplacian(f: AngularField) -> AngularField:
    """Laplace-Beltrami operator; diagonal in the spectral basis."""
    if f.dimension == CIRCLE:
        ks = np.arange(-f.bandlimit, f.bandlimit + 1)
        return AngularField(CIRCLE, f.bandlimit, -(ks.astype(float) ** 2) * f.coeffs)
    ls = np.concatenate(
        [np.full(2 * l + 1, l) for l in range(f.bandlimit + 1)]
    ).astype(float)
    return AngularField(SPHERE, f.bandlimit, -(ls * (ls + 1.0)) * f.coeffs)


def grad_dot(f: AngularField, g: AngularField) -> AngularField:
    """Surface-gradient inner product grad f . grad g, computed exactly
    from the identity 2 grad f . grad g = Lap(fg) - f Lap g - g Lap f."""
    fg = multiply(f, g)
    a = multiply(f, surface_laplacian(g))
    b = multiply(g, surface_laplacian(f))
    coeffs = 0.5 * (surface_laplacian(fg).coeffs - a.coeffs - b.coeffs)
    return AngularField(f.dimension, fg.bandlimit, coeffs)


def sobolev_norm(f: AngularField, s: int, half: bool = False) -> float:
    """Spectral Sobolev norm: sum of <k>^{2s} |fhat(k)|^2 on the circle
    (fhat in the orthonormal exponential basis) and (1+l(l+1))^s on the
    sphere.  ``half`` raises the exponent by one (H^{s+1/2} proxy)."""
    if s < 0:
        raise DomainError("sobolev order must be >= 0")
    if f.dimension == CIRCLE:
        K = f.bandlimit
        ks = np.arange(1, K + 1).astype(float)
        wk = (1.0 + ks * ks) ** (s + 0.5 if half else s)
        total = _TWO_PI * f.coeffs[K] ** 2
        # coeffs[K-1::-1] walks b_1, b_2, ..., b_K, aligned with a_1..a_K
        total += np.pi * np.dot(wk, f.coeffs[K + 1 :] ** 2 + f.coeffs[K - 1 :: -1] ** 2)
        return float(np.sqrt(total))
    ls = np.concatenate(
        [np.full(2 * l + 1, l) for l in range(f.bandlimit + 1)]
    ).astype(float)
    w = (1.0 + ls * (ls + 1.0)) ** (s + 0.5 if half else s)
    return float(np.sqrt(np.dot(w, f.coeffs**2)))


def holder_norm(f: AngularField, m: int) -> float:
    """C^m norm: max over derivative order j <= m of the sup of the j-th
    derivative on an 8x oversampled grid (sphere: max over mixed
    theta/phi derivatives of total order j).  A lower bound with
    spectral-accuracy error."""
    if m < 0 or m > 6:
        raise DomainError("holder order limited to 0..6")
    if f.dimension == CIRCLE:
        grid = AngularGrid(CIRCLE, max(f.bandlimit, 1), oversample=8)
        best = 0.0
        g = f
        for _ in range(m + 1):
            best = max(best, float(np.max(np.abs(synthesize(g, grid)))))
            g = _circle_dtheta(g)
        return best
    grid = AngularGrid(SPHERE, max(f.bandlimit, 1), oversample=8)
    semi = SemiBasis(grid)
    best = 0.0
    for j in range(m + 1):
        for a in range(j + 1):  # a theta-derivatives, j-a phi-derivatives
            g = f
            for _ in range(j - a):
                g = dphi_field(g)
            F = _sphere_theta_deriv_semi(semi, g, a)
            best = max(best, float(np.max(np.abs(semi.values(F)))))
    return best


def _sphere_theta_deriv_semi(semi: SemiBasis, f: AngularField, order: int):
    """Semi representation of the order-th theta derivative (exact)."""
    cap, B = semi.cap, f.bandlimit
    if order <= 1:
        return semi.to_semi(f.coeffs, B, deriv=order)
    tabs = semi.grid.ybar(B, order)
    F = semi._alloc(f.coeffs.shape[1:])
    half = 1.0 / np.sqrt(2.0)
    for m in range(B + 1):
        ls = np.arange(m, B + 1)
        T = tabs[m]
        Ac = np.tensordot(T, f.coeffs[ls * ls + ls + m], axes=(0, 0))
        if m == 0:
            F[cap] = Ac
            continue
        As = np.tensordot(T, f.coeffs[ls * ls + ls - m], axes=(0, 0))
        sign = -half if m % 2 else half
        F[cap + m] = sign * (Ac - 1j * As)
        F[cap - m] = np.conj(F[cap + m])
    return F


def rotate(f: AngularField, alpha: float) -> AngularField:
    """Rotate by angle alpha (circle: theta shift; sphere: about the
    z-axis).  Exact coefficient-space operation."""
    out = f.coeffs.copy()
    if f.dimension == CIRCLE:
        K = f.bandlimit
        ks = np.arange(1, K + 1)
        c, s = np.cos(ks * alpha), np.sin(ks * alpha)
        a, b = f.coeffs[K + ks], f.coeffs[K - ks]
        out[K + ks] = a * c + b * s
        out[K - ks] = -a * s + b * c
        return AngularField(CIRCLE, K, out)
    for l in range(f.bandlimit + 1):
        base = l * l + l
        ms = np.arange(1, l + 1)
        c, s = np.cos(ms * alpha), np.sin(ms * alpha)
        a, b = f.coeffs[base + ms], f.coeffs[base - ms]
        out[base + ms] = a * c + b * s
        out[base - ms] = -a * s + b * c
    return AngularField(SPHERE, f.bandlimit, out)


def random_field(
    dimension: str,
    bandlimit: int,
    seed: int,
    holder_target: float | None = None,
    holder_order: int = 4,
) -> AngularField:
    """Seeded random field; optionally rescaled to a requested C^m norm."""
    rng = np.random.default_rng(seed)
    f = AngularField(
        dimension, bandlimit, rng.standard_normal(n_modes(dimension, bandlimit))
    )
    if holder_target is not None:
        f = AngularField(
            dimension, bandlimit,
            f.coeffs * (holder_target / holder_norm(f, holder_order)),
        )
    return f
