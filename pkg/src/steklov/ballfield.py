"""Functions on the unit disk/ball and the mode-wise spectral Poisson solver.

A :class:`BallField` is spectral in angle (real Fourier / real spherical
harmonic coefficients) and collocated in radius on Chebyshev-Gauss-Lobatto
nodes mapped to (0, 1]; the r = 0 endpoint is excluded so the polar factors
1/r, 1/r^2 stay finite and regularity at the origin is carried by the
polynomial radial trial space.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DomainError, SizingError, SolverError
from .harmonics import (
    CIRCLE,
    SPHERE,
    AngularField,
    SemiBasis,
    field_from_modes,
    n_modes,
)


# ---------------------------------------------------------------------------
# radial discretization
# ---------------------------------------------------------------------------

class RadialGrid:
    """Chebyshev-Gauss-Lobatto nodes on (0, 1] with dense differentiation
    and quadrature operators.  ``r[0] = 1`` is the boundary node."""

    def __init__(self, resolution: int):
        if resolution < 8:
            raise DomainError("radial resolution must be >= 8")
        self.resolution = resolution
        j = np.arange(resolution)
        self.r = (1.0 + np.cos(np.pi * j / resolution)) / 2.0
        self._bary = _bary_weights(self.r)
        self.D = _diff_matrix(self.r, self._bary)
        self.D2 = self.D @ self.D
        self.rinv = 1.0 / self.r
        # Gauss-Legendre quadrature on [0,1] for radial integrals
        nq = resolution + 2
        xq, wq = np.polynomial.legendre.leggauss(nq)
        self.rq = 0.5 * (xq + 1.0)
        self.wq = 0.5 * wq
        self.quad_interp = self.interp_matrix(self.rq)

    @staticmethod
    @lru_cache(maxsize=None)
    def for_resolution(resolution: int) -> "RadialGrid":
        return RadialGrid(resolution)

    def interp_matrix(self, targets: np.ndarray) -> np.ndarray:
        """Barycentric interpolation matrix from the collocation nodes to
        arbitrary target radii."""
        t = np.atleast_1d(np.asarray(targets, dtype=float))
        P = np.zeros((len(t), self.resolution))
        for i, ti in enumerate(t):
            d = ti - self.r
            hit = np.nonzero(d == 0.0)[0]
            if hit.size:
                P[i, hit[0]] = 1.0
                continue
            row = self._bary / d
            P[i] = row / row.sum()
        return P


def _bary_weights(r: np.ndarray) -> np.ndarray:
    n = len(r)
    w = np.ones(n)
    for j in range(n):
        w[j] = 1.0 / np.prod(r[j] - np.delete(r, j))
    return w / np.max(np.abs(w))


def _diff_matrix(r: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = len(r)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (w[j] / w[i]) / (r[i] - r[j])
    D[np.diag_indices(n)] = -D.sum(axis=1)
    return D


def mode_orders(dimension: str, bandlimit: int) -> np.ndarray:
    """Per-mode angular order: |k| on the circle, l on the sphere."""
    if dimension == CIRCLE:
        return np.abs(np.arange(-bandlimit, bandlimit + 1))
    return np.concatenate([np.full(2 * l + 1, l) for l in range(bandlimit + 1)])


class RadialOperatorCache:
    """Factorized mode-wise Laplacian solves for a fixed (dimension,
    bandlimit, radial resolution).  Immutable after construction; reusable
    across solves."""

    def __init__(self, dimension: str, bandlimit: int, resolution: int):
        self.dimension = dimension
        self.bandlimit = bandlimit
        self.rgrid = RadialGrid.for_resolution(resolution)
        self.orders = mode_orders(dimension, bandlimit)
        g = self.rgrid
        c1 = 1.0 if dimension == CIRCLE else 2.0
        self._lus = {}
        for nu in np.unique(self.orders):
            c2 = nu * nu if dimension == CIRCLE else nu * (nu + 1)
            A = g.D2 + c1 * g.rinv[:, None] * g.D - float(c2) * np.diag(g.rinv**2)
            M = np.vstack([np.eye(g.resolution)[0], A[1:]])
            scale = np.max(np.abs(M), axis=1)
            try:
                lu = lu_factor(M / scale[:, None])
            except Exception as exc:  # pragma: no cover - discretization bug
                raise SolverError(f"singular mode operator (order {nu})") from exc
            self._lus[int(nu)] = (lu, scale)

    @staticmethod
    @lru_cache(maxsize=None)
    def build(dimension: str, bandlimit: int, resolution: int) -> "RadialOperatorCache":
        return RadialOperatorCache(dimension, bandlimit, resolution)

    def solve_block(self, F_block: np.ndarray | None, xi_block: np.ndarray | None) -> np.ndarray:
        """Solve Delta w = F with trace w(1) = xi, mode by mode.

        F_block: (modes, R, ...) interior forcing values (or None for 0);
        xi_block: (modes, ...) boundary coefficients (or None for 0).
        """
        R = self.rgrid.resolution
        modes = len(self.orders)
        rest = F_block.shape[2:] if F_block is not None else xi_block.shape[1:]
        rhs = np.zeros((modes, R) + rest)
        if F_block is not None:
            rhs[:, 1:] = F_block[:, 1:]
        if xi_block is not None:
            rhs[:, 0] = xi_block
        out = np.empty_like(rhs)
        for nu, (lu, scale) in self._lus.items():
            sel = self.orders == nu
            b = rhs[sel]  # (m_nu, R, ...)
            flat = np.moveaxis(b, 1, 0).reshape(R, -1)
            sol = lu_solve(lu, flat / scale[:, None])
            out[sel] = np.moveaxis(sol.reshape((R,) + b.shape[:1] + rest), 0, 1)
        if not np.all(np.isfinite(out)):
            raise SolverError("non-finite values in mode-wise solve")
        return out


# ---------------------------------------------------------------------------
# ball fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BallField:
    """Function on the unit disk/ball: per-mode radial value vectors."""

    dimension: str
    bandlimit: int
    values: np.ndarray  # (modes, R)
    rgrid: RadialGrid

    def __post_init__(self):
        expected = (n_modes(self.dimension, self.bandlimit), self.rgrid.resolution)
        if self.values.shape != expected:
            raise SizingError(
                f"ball values have shape {self.values.shape}, expected {expected}"
            )


def zero_ball(dimension: str, bandlimit: int, rgrid: RadialGrid) -> BallField:
    return BallField(
        dimension, bandlimit,
        np.zeros((n_modes(dimension, bandlimit), rgrid.resolution)), rgrid,
    )


def laplacian_block(values: np.ndarray, orders: np.ndarray, rgrid: RadialGrid,
                    dimension: str) -> np.ndarray:
    """Mode-wise polar/spherical Laplacian on a (modes, R, ...) block."""
    g = rgrid
    c1 = 1.0 if dimension == CIRCLE else 2.0
    c2 = orders * orders if dimension == CIRCLE else orders * (orders + 1)
    ur = np.tensordot(values, g.D, axes=(1, 1))
    urr = np.tensordot(values, g.D2, axes=(1, 1))
    if values.ndim > 2:
        ur = np.moveaxis(ur, -1, 1)
        urr = np.moveaxis(urr, -1, 1)
    shape = (1, -1) + (1,) * (values.ndim - 2)
    out = urr + c1 * g.rinv.reshape(shape) * ur
    out -= c2.astype(float).reshape((-1,) + (1,) * (values.ndim - 1)) * (
        g.rinv.reshape(shape) ** 2
    ) * values
    return out


def radial_derivative_block(values: np.ndarray, rgrid: RadialGrid, order: int = 1) -> np.ndarray:
    D = rgrid.D if order == 1 else rgrid.D2
    out = np.tensordot(values, D, axes=(1, 1))
    if values.ndim > 2:
        out = np.moveaxis(out, -1, 1)
    return out


def apply_laplacian(u: BallField) -> BallField:
    """Polar/spherical Laplacian applied mode-wise at the nodes."""
    out = laplacian_block(u.values, mode_orders(u.dimension, u.bandlimit),
                          u.rgrid, u.dimension)
    return BallField(u.dimension, u.bandlimit, out, u.rgrid)


def poisson_solve(F: BallField | None, xi: AngularField | None,
                  cache: RadialOperatorCache | None = None,
                  rgrid: RadialGrid | None = None) -> BallField:
    """Solve Delta w = F on the disk/ball with trace w = xi at r = 1.

    Modes decouple; each is a dense collocation solve with the boundary
    row enforcing the trace exactly in coefficients.  Either argument may
    be None (zero).
    """
    if F is None and xi is None:
        raise SizingError("poisson_solve needs at least one of F, xi")
    if F is not None and xi is not None:
        if F.dimension != xi.dimension or F.bandlimit != xi.bandlimit:
            raise SizingError("F and xi must share dimension and bandlimit")
    ref = F if F is not None else xi
    if cache is None:
        if rgrid is None:
            rgrid = F.rgrid if F is not None else RadialGrid.for_resolution(32)
        cache = RadialOperatorCache.build(ref.dimension, ref.bandlimit,
                                          rgrid.resolution)
    fb = F.values[:, :, None] if F is not None else None
    xb = xi.coeffs[:, None] if xi is not None else None
    w = cache.solve_block(fb, xb)[:, :, 0]
    return BallField(ref.dimension, ref.bandlimit, w, cache.rgrid)


def trace(u: BallField) -> AngularField:
    """Boundary values at r = 1 (exact: r = 1 is a collocation node)."""
    return AngularField(u.dimension, u.bandlimit, u.values[:, 0].copy())


def normal_trace(u: BallField) -> AngularField:
    """Radial derivative at r = 1, mode-wise."""
    return AngularField(u.dimension, u.bandlimit, (u.values @ u.rgrid.D[0]).copy())


# ---------------------------------------------------------------------------
# norms and evaluation
# ---------------------------------------------------------------------------

def _angular_weights(dimension: str, bandlimit: int) -> np.ndarray:
    """L^2 norms squared of the angular basis functions."""
    if dimension == SPHERE:
        return np.ones(n_modes(dimension, bandlimit))
    w = np.full(2 * bandlimit + 1, np.pi)
    w[bandlimit] = 2.0 * np.pi
    return w


def _l2_sq(values: np.ndarray, dimension: str, bandlimit: int, rgrid: RadialGrid) -> float:
    V = values @ rgrid.quad_interp.T  # (modes, nq)
    power = 1 if dimension == CIRCLE else 2
    radial_w = rgrid.wq * rgrid.rq**power
    return float(np.dot(_angular_weights(dimension, bandlimit), V**2 @ radial_w))


def cartesian_gradient(u: BallField) -> tuple[BallField, ...]:
    """Cartesian first derivatives (u_x, u_y[, u_z]) as ball fields.

    Exact in angle (bandlimit grows by one); the polar factors 1/r are
    applied pointwise at the origin-free nodes.
    """
    B, g = u.bandlimit, u.rgrid
    semi = SemiBasis.for_cap(u.dimension, B + 1)
    ur = radial_derivative_block(u.values, g)
    if u.dimension == CIRCLE:
        F_ur = semi.to_semi(ur, B)
        F_ut = semi.dphi(semi.to_semi(u.values, B)) * g.rinv[None, None, :]
        kc = semi.kernel(field_from_modes(CIRCLE, [(1, 1.0)]))
        ks = semi.kernel(field_from_modes(CIRCLE, [(-1, 1.0)]))
        ux = semi.from_semi(semi.conv_mult(kc, F_ur) - semi.conv_mult(ks, F_ut), B + 1)
        uy = semi.from_semi(semi.conv_mult(ks, F_ur) + semi.conv_mult(kc, F_ut), B + 1)
        return (
            BallField(CIRCLE, B + 1, ux, g),
            BallField(CIRCLE, B + 1, uy, g),
        )
    F_ur = semi.to_semi(ur, B)
    F_ut = semi.to_semi(u.values, B, deriv=1) * g.rinv[None, None, :]
    F_up = semi.over_sin(semi.dphi(semi.to_semi(u.values, B))) * g.rinv[None, None, :]
    n_t = semi.n_theta
    sin_t, cos_t = semi.grid.sin_theta, semi.grid.x

    def krn(rows: dict) -> np.ndarray:
        mmax = max(abs(m) for m in rows)
        k = np.zeros((2 * mmax + 1, n_t), dtype=complex)
        for m, prof in rows.items():
            k[mmax + m] = prof
        return k

    k_scp = krn({1: 0.5 * sin_t, -1: 0.5 * sin_t})            # sin th cos ph
    k_ccp = krn({1: 0.5 * cos_t, -1: 0.5 * cos_t})            # cos th cos ph
    k_ssp = krn({1: -0.5j * sin_t, -1: 0.5j * sin_t})         # sin th sin ph
    k_csp = krn({1: -0.5j * cos_t, -1: 0.5j * cos_t})         # cos th sin ph
    k_sp = krn({1: -0.5j * np.ones(n_t), -1: 0.5j * np.ones(n_t)})  # sin ph
    k_cp = krn({1: 0.5 * np.ones(n_t), -1: 0.5 * np.ones(n_t)})     # cos ph
    cm = semi.conv_mult
    ux = semi.from_semi(cm(k_scp, F_ur) + cm(k_ccp, F_ut) - cm(k_sp, F_up), B + 1)
    uy = semi.from_semi(cm(k_ssp, F_ur) + cm(k_csp, F_ut) + cm(k_cp, F_up), B + 1)
    uz = semi.from_semi(
        cos_t[None, :, None] * F_ur - sin_t[None, :, None] * F_ut, B + 1
    )
    return (
        BallField(SPHERE, B + 1, ux, g),
        BallField(SPHERE, B + 1, uy, g),
        BallField(SPHERE, B + 1, uz, g),
    )


def field_norm(u: BallField, s: int) -> float:
    """Discrete H^s volume norm: radial Gauss quadrature with the r / r^2
    measure and exact Cartesian derivatives up to order s."""
    if s < 0 or s > 4:
        raise DomainError("volume Sobolev order limited to 0..4")
    total = _l2_sq(u.values, u.dimension, u.bandlimit, u.rgrid)
    layer = [u]
    for _ in range(s):
        nxt = []
        for v in layer:
            nxt.extend(cartesian_gradient(v))
        total += sum(
            _l2_sq(v.values, v.dimension, v.bandlimit, v.rgrid) for v in nxt
        )
        layer = nxt
    return float(np.sqrt(total))


def evaluate_at(u: BallField, r_points, theta_points, phi_points=None) -> np.ndarray:
    """Point values at arbitrary interior points (vectorized over 1-D
    point lists); barycentric in radius, direct basis sums in angle."""
    from .harmonics import real_sph_harm

    r_points = np.atleast_1d(np.asarray(r_points, dtype=float))
    theta_points = np.atleast_1d(np.asarray(theta_points, dtype=float))
    P = u.rgrid.interp_matrix(r_points)  # (npts, R)
    radial = u.values @ P.T  # (modes, npts)
    out = np.zeros(len(r_points))
    if u.dimension == CIRCLE:
        K = u.bandlimit
        out += radial[K]
        for k in range(1, K + 1):
            out += radial[K + k] * np.cos(k * theta_points)
            out += radial[K - k] * np.sin(k * theta_points)
        return out
    phi_points = np.atleast_1d(np.asarray(phi_points, dtype=float))
    for l in range(u.bandlimit + 1):
        for m in range(-l, l + 1):
            row = radial[l * l + l + m]
            if np.any(row):
                out += row * real_sph_harm(l, m, theta_points, phi_points)
    return out
