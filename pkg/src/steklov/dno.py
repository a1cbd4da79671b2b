"""The Dirichlet-to-Neumann operator as a power series in the shape
parameter, plus a fixed-eps direct-solve oracle.

The DNO factors as ``G = M(eps) Ghat(eps)`` where M is the normal-vector
normalization (a multiplication operator, analytic in eps) and Ghat obeys
a two-term recursion driven by the extension series.  Matrices G_0..G_N on
a truncated angular basis are assembled column by column; the oracle solves
the transformed problem monolithically by fixed-point iteration and never
touches the recursion, so the two paths are independent in algorithm while
sharing the same discrete operators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ballfield import RadialOperatorCache, mode_orders
from .errors import (
    DegenerateDomainError,
    DomainError,
    OracleConvergenceError,
    SizingError,
)
from .expansion import PerturbationOperators, _series_blocks, default_resolution
from .harmonics import (
    CIRCLE,
    AngularField,
    AngularGrid,
    SemiBasis,
    add,
    analyze,
    constant_field,
    differentiate,
    grad_dot,
    multiply,
    n_modes,
    resize,
    scale,
    sobolev_norm,
    surface_laplacian,
    synthesize,
)

_CHUNK_BUDGET = 2_000_000  # complex entries per live semi block


# ---------------------------------------------------------------------------
# metric factor
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MetricSeries:
    """Taylor coefficients M_0..M_N of the boundary metric factor
    M(eps) = [(1 + eps rho)^2 + eps^2 |grad_S rho|^2]^(-1/2)."""

    rho: AngularField
    order: int
    terms: list


def metric_series(rho: AngularField, order: int) -> MetricSeries:
    """Expand M(eps) by the differential recurrence

        (n+1) M_{n+1} = -(2n+1) rho M_n - n q M_{n-1},
        q = rho^2 + |grad_S rho|^2,

    obtained from m'(1 + 2 eps rho + eps^2 q) = -(rho + eps q) m.  Exact
    (dealiased) products; M_n is band-limited by n*bandlimit(rho)."""
    if order < 0:
        raise DomainError("metric order must be >= 0")
    q = add(multiply(rho, rho), grad_dot(rho, rho))
    terms = [constant_field(rho.dimension, 1.0)]
    if order >= 1:
        terms.append(scale(rho, -1.0))
    for n in range(1, order):
        nxt = scale(multiply(rho, terms[n]), -(2.0 * n + 1.0))
        nxt = add(nxt, scale(multiply(q, terms[n - 1]), -float(n)))
        terms.append(scale(nxt, 1.0 / (n + 1.0)))
    return MetricSeries(rho, order, terms)


# ---------------------------------------------------------------------------
# boundary-field algebra on coefficient blocks
# ---------------------------------------------------------------------------

class _BoundaryAlgebra:
    """Products and surface-gradient couplings of angular coefficient
    blocks at a fixed working bandlimit."""

    def __init__(self, rho: AngularField, k_work: int):
        self.dimension = rho.dimension
        self.k_work = k_work
        self.semi = SemiBasis.for_cap(rho.dimension, k_work)
        self.rho = rho
        self.k_rho = self.semi.kernel(rho)
        self.k_rho2 = self.semi.kernel(multiply(rho, rho))
        self.k_q = self.semi.kernel(add(multiply(rho, rho), grad_dot(rho, rho)))
        self.lap_rho = surface_laplacian(rho)
        self.k_lap_rho = self.semi.kernel(self.lap_rho)
        orders = mode_orders(rho.dimension, k_work).astype(float)
        if rho.dimension == CIRCLE:
            self._eigs = -(orders**2)
        else:
            self._eigs = -orders * (orders + 1.0)

    def mult(self, kernel: np.ndarray, block: np.ndarray) -> np.ndarray:
        F = self.semi.to_semi(block, self.k_work)
        return self.semi.from_semi(self.semi.conv_mult(kernel, F), self.k_work)

    def lap_s(self, block: np.ndarray) -> np.ndarray:
        return self._eigs[:, None] * block

    def grad_rho_dot(self, block: np.ndarray) -> np.ndarray:
        """grad_S rho . grad_S t = [Lap(rho t) - rho Lap t - (Lap rho) t]/2."""
        a = self.lap_s(self.mult(self.k_rho, block))
        b = self.mult(self.k_rho, self.lap_s(block))
        c = self.mult(self.k_lap_rho, block)
        return 0.5 * (a - b - c)


def _embed_identity(dimension: str, K: int, k_work: int) -> np.ndarray:
    nK, nW = n_modes(dimension, K), n_modes(dimension, k_work)
    out = np.zeros((nW, nK))
    if dimension == CIRCLE:
        out[k_work - K : k_work + K + 1] = np.eye(nK)
    else:
        out[:nK] = np.eye(nK)
    return out


def _truncate_rows(block: np.ndarray, dimension: str, from_b: int, to_b: int) -> np.ndarray:
    if dimension == CIRCLE:
        return block[from_b - to_b : from_b + to_b + 1]
    return block[: (to_b + 1) ** 2]


def _hat_blocks(ops: PerturbationOperators, cache: RadialOperatorCache,
                alg: _BoundaryAlgebra, xi_block: np.ndarray, order: int):
    """Ghat_0..Ghat_N applied to a block of boundary data.

    Ghat_n = du_n/dr + 2 rho du_{n-1}/dr + q du_{n-2}/dr
             - grad rho . grad t_{n-1} - rho (grad rho . grad t_{n-2})
             - 2 rho Ghat_{n-1} - rho^2 Ghat_{n-2}

    with t_n the trace of u_n (t_0 = xi, zero for n >= 1) and
    q = rho^2 + |grad rho|^2.
    """
    blocks = _series_blocks(ops, cache, xi_block, order)
    D0 = cache.rgrid.D[0]
    s = [np.tensordot(b, D0, axes=(1, 0)) for b in blocks]  # normal traces
    grad_xi = alg.grad_rho_dot(xi_block)
    hats = [s[0]]
    for n in range(1, order + 1):
        acc = s[n] + 2.0 * alg.mult(alg.k_rho, s[n - 1] - hats[n - 1])
        if n == 1:
            acc -= grad_xi
        if n >= 2:
            acc += alg.mult(alg.k_q, s[n - 2])
            acc -= alg.mult(alg.k_rho2, hats[n - 2])
        if n == 2:
            acc -= alg.mult(alg.k_rho, grad_xi)
        hats.append(acc)
    return hats


def dno_hat_series(rho: AngularField, xi: AngularField, order: int,
                   k_work: int | None = None, radial: int | None = None):
    """Boundary fields Ghat_0 xi .. Ghat_N xi (non-normalized DNO series)."""
    if rho.dimension != xi.dimension:
        raise DomainError("rho and xi live on different manifolds")
    if k_work is None:
        k_work = xi.bandlimit + order * rho.bandlimit
    if radial is None:
        radial = default_resolution(order)
    cache = RadialOperatorCache.build(rho.dimension, k_work, radial)
    ops = PerturbationOperators(rho, k_work, cache.rgrid)
    alg = _BoundaryAlgebra(rho, k_work)
    hats = _hat_blocks(ops, cache, alg, resize(xi, k_work).coeffs[:, None], order)
    return [AngularField(rho.dimension, k_work, h[:, 0]) for h in hats]


# ---------------------------------------------------------------------------
# operator matrices
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class OperatorSeries:
    """Dense matrices G_0..G_N (and raw Ghat_0..Ghat_N) on the truncated
    angular basis of bandlimit K."""

    dimension: str
    bandlimit: int
    order: int
    G: list
    Ghat: list
    metric: MetricSeries
    rho: AngularField
    k_work: int
    radial: int


def _column_chunks(n_cols: int, k_work: int, dimension: str, resolution: int,
                   cap_extra: int):
    """Split basis columns so the live semi blocks stay within budget."""
    cap = k_work + cap_extra
    n_theta = 1 if dimension == CIRCLE else len(AngularGrid.for_bandlimit(dimension, cap).x)
    size = max(1, _CHUNK_BUDGET // max(1, (2 * cap + 1) * n_theta * resolution))
    for lo in range(0, n_cols, size):
        yield lo, min(n_cols, lo + size)


def dno_series_matrices(rho: AngularField, K: int, order: int,
                        radial: int | None = None) -> OperatorSeries:
    """Assemble G_n = sum_{j+l=n} (multiplication by M_j) o Ghat_l on the
    K-basis, feeding basis functions through the scalar recursion.

    The shared working bandlimit K + N*bandlimit(rho) keeps every product
    in the recursion exact in angle.
    """
    if K < rho.bandlimit:
        raise SizingError("basis bandlimit K must be >= bandlimit(rho)")
    dim = rho.dimension
    k_work = K + order * rho.bandlimit
    if radial is None:
        radial = default_resolution(order)
    cache = RadialOperatorCache.build(dim, k_work, radial)
    ops = PerturbationOperators(rho, k_work, cache.rgrid)
    alg = _BoundaryAlgebra(rho, k_work)
    nK = n_modes(dim, K)
    nW = n_modes(dim, k_work)
    Xi = _embed_identity(dim, K, k_work)

    hats_full = [np.zeros((nW, nK)) for _ in range(order + 1)]
    for lo, hi in _column_chunks(nK, k_work, dim, radial, 2 * rho.bandlimit):
        hats = _hat_blocks(ops, cache, alg, Xi[:, lo:hi], order)
        for n in range(order + 1):
            hats_full[n][:, lo:hi] = hats[n]

    metric = metric_series(rho, order)
    m_kernels = [alg.semi.kernel(m) for m in metric.terms]
    G, Ghat = [], []
    for n in range(order + 1):
        full = hats_full[n].copy()  # M_0 = 1 term
        for j in range(1, n + 1):
            full += alg.mult(m_kernels[j], hats_full[n - j])
        G.append(_truncate_rows(full, dim, k_work, K).copy())
        Ghat.append(_truncate_rows(hats_full[n], dim, k_work, K).copy())
    return OperatorSeries(dim, K, order, G, Ghat, metric, rho, k_work, radial)


def series_matrix(series: OperatorSeries, eps: float, order: int | None = None) -> np.ndarray:
    """Partial sum sum_{n<=N} eps^n G_n as a dense matrix."""
    if order is None:
        order = series.order
    acc = np.zeros_like(series.G[0])
    for n in range(min(order, series.order) + 1):
        acc += eps**n * series.G[n]
    return acc


def dno_apply(series: OperatorSeries, eps: float, xi: AngularField) -> AngularField:
    """Apply the truncated DNO series to boundary data."""
    if xi.dimension != series.dimension:
        raise SizingError("dimension mismatch")
    if xi.bandlimit > series.bandlimit:
        extra = resize(xi, series.bandlimit)
        back = resize(extra, xi.bandlimit)
        if not np.allclose(back.coeffs, xi.coeffs, atol=0.0):
            raise SizingError("xi has content beyond the operator basis")
        xi = extra
    else:
        xi = resize(xi, series.bandlimit)
    return AngularField(
        series.dimension, series.bandlimit, series_matrix(series, eps) @ xi.coeffs
    )


# ---------------------------------------------------------------------------
# fixed-eps direct oracle
# ---------------------------------------------------------------------------

def _direct_block(ops: PerturbationOperators, cache: RadialOperatorCache,
                  xi_block: np.ndarray, eps: float, tol: float, max_iter: int):
    """Fixed-point solve of Delta u = eps L1 u + eps^2 L2 u, u(1) = xi."""
    u = cache.solve_block(None, xi_block)
    if eps == 0.0:
        return u
    for _ in range(max_iter):
        p = ops.prep(u)
        acc = eps * ops.l1_acc(p) + eps * eps * ops.l2_acc(p)
        u_new = cache.solve_block(ops.finish(acc), xi_block)
        delta = float(np.max(np.abs(u_new - u))) / max(1.0, float(np.max(np.abs(u_new))))
        u = u_new
        if delta < tol:
            return u
    raise OracleConvergenceError(
        f"fixed-point iteration did not reach tol={tol} within {max_iter} steps; "
        "eps is likely beyond the oracle's contraction radius"
    )


class _BoundaryEvaluator:
    """Pointwise boundary expression of the transformed DNO at fixed eps.

    Evaluates G = M(eps) [ (1 + eps^2 |grad rho|^2 / a^2) du/dr
                           - (eps / a) grad rho . grad t ]   (a = 1 + eps rho)
    on a generously oversampled grid and re-analyzes; exact up to the
    spectrally small tail of the rational prefactors.
    """

    def __init__(self, rho: AngularField, k_work: int):
        self.rho = rho
        self.k_work = k_work
        grid_b = k_work + 6 * rho.bandlimit + 2
        self.semi = SemiBasis.for_cap(rho.dimension, grid_b)
        self.grid = self.semi.grid
        self.rho_v = synthesize(rho, self.grid)
        if rho.dimension == CIRCLE:
            self.grad_v = [differentiate(rho, self.grid, "theta")]
        else:
            self.grad_v = [
                differentiate(rho, self.grid, "theta"),
                differentiate(rho, self.grid, "phi_over_sin"),
            ]
        self.gradsq_v = sum(g * g for g in self.grad_v)

    def _block_values(self, block: np.ndarray, theta_deriv=False, phi_over_sin=False):
        semi = self.semi
        if self.rho.dimension == CIRCLE and theta_deriv:
            F = semi.dphi(semi.to_semi(block, self.k_work))
        elif theta_deriv:
            F = semi.to_semi(block, self.k_work, deriv=1)
        elif phi_over_sin:
            F = semi.over_sin(semi.dphi(semi.to_semi(block, self.k_work)))
        else:
            F = semi.to_semi(block, self.k_work)
        return semi.values(F)

    def evaluate(self, s_block: np.ndarray, t_block: np.ndarray, eps: float,
                 out_bandlimit: int, with_hat: bool = False):
        expand = (slice(None),) * (1 if self.rho.dimension == CIRCLE else 2) + (
            (None,) * (s_block.ndim - 1)
        )
        a = 1.0 + eps * self.rho_v
        if np.min(a) <= 0.0:
            raise DegenerateDomainError("1 + eps*rho must stay positive")
        s_v = self._block_values(s_block)
        grad_dot_t = self.grad_v[0][expand] * self._block_values(t_block, theta_deriv=True)
        if self.rho.dimension != CIRCLE:
            grad_dot_t += self.grad_v[1][expand] * self._block_values(t_block, phi_over_sin=True)
        hat_v = (1.0 + eps * eps * self.gradsq_v[expand] / a[expand] ** 2) * s_v
        hat_v -= (eps / a[expand]) * grad_dot_t
        m_v = 1.0 / np.sqrt(a[expand] ** 2 + eps * eps * self.gradsq_v[expand])
        g_coeffs = self.semi.from_semi(self.semi.from_values(m_v * hat_v), out_bandlimit)
        if with_hat:
            hat_coeffs = self.semi.from_semi(self.semi.from_values(hat_v), out_bandlimit)
            return g_coeffs, hat_coeffs
        return g_coeffs


def dno_direct(rho: AngularField, eps: float, xi: AngularField, tol: float = 1e-12,
               max_iter: int = 200, k_work: int | None = None,
               radial: int | None = None, out_bandlimit: int | None = None,
               return_hat: bool = False):
    """Monolithic DNO at fixed eps: solve the transformed problem by
    fixed-point iteration (u <- solve(eps L1 u + eps^2 L2 u, xi)), then
    evaluate the full boundary expression pointwise and analyze.

    Independent of the series recursion; serves as the oracle it is
    cross-validated against.
    """
    if rho.dimension != xi.dimension:
        raise DomainError("rho and xi live on different manifolds")
    if k_work is None:
        k_work = xi.bandlimit + 8 * rho.bandlimit
    if radial is None:
        radial = 32
    if out_bandlimit is None:
        out_bandlimit = k_work
    cache = RadialOperatorCache.build(rho.dimension, k_work, radial)
    ops = PerturbationOperators(rho, k_work, cache.rgrid)
    xi_w = resize(xi, k_work)
    u = _direct_block(ops, cache, xi_w.coeffs[:, None], eps, tol, max_iter)
    s_block = np.tensordot(u, cache.rgrid.D[0], axes=(1, 0))
    ev = _BoundaryEvaluator(rho, k_work)
    out = ev.evaluate(s_block, xi_w.coeffs[:, None], eps, out_bandlimit,
                      with_hat=return_hat)
    if return_hat:
        g, hat = out
        return (
            AngularField(rho.dimension, out_bandlimit, g[:, 0]),
            AngularField(rho.dimension, out_bandlimit, hat[:, 0]),
        )
    return AngularField(rho.dimension, out_bandlimit, out[:, 0])


def dno_direct_matrix(rho: AngularField, eps: float, K: int, tol: float = 1e-12,
                      max_iter: int = 200, k_work: int | None = None,
                      radial: int | None = None) -> np.ndarray:
    """Dense K-basis DNO matrix at fixed eps via the direct oracle,
    feeding basis columns through the fixed-point solver in batches."""
    dim = rho.dimension
    if k_work is None:
        k_work = K + 6 * rho.bandlimit
    if radial is None:
        radial = 32
    cache = RadialOperatorCache.build(dim, k_work, radial)
    ops = PerturbationOperators(rho, k_work, cache.rgrid)
    ev = _BoundaryEvaluator(rho, k_work)
    nK = n_modes(dim, K)
    Xi = _embed_identity(dim, K, k_work)
    out = np.zeros((nK, nK))
    for lo, hi in _column_chunks(nK, k_work, dim, radial, 2 * rho.bandlimit):
        u = _direct_block(ops, cache, Xi[:, lo:hi], eps, tol, max_iter)
        s_block = np.tensordot(u, cache.rgrid.D[0], axes=(1, 0))
        g = ev.evaluate(s_block, Xi[:, lo:hi], eps, k_work)
        out[:, lo:hi] = _truncate_rows(g, dim, k_work, K)
    return out


def oracle_error(series: OperatorSeries, eps: float, xi: AngularField,
                 order: int | None = None, tol: float = 1e-13) -> float:
    """Relative L^2 error between the truncated series and the direct
    oracle, both projected on the series' K-basis."""
    if order is None:
        order = series.order
    direct = dno_direct(series.rho, eps, xi, tol=tol, k_work=series.k_work,
                        radial=series.radial)
    dK = resize(direct, series.bandlimit)
    approx = AngularField(
        series.dimension, series.bandlimit,
        series_matrix(series, eps, order) @ resize(xi, series.bandlimit).coeffs,
    )
    diff = AngularField(series.dimension, series.bandlimit, approx.coeffs - dK.coeffs)
    return sobolev_norm(diff, 0) / sobolev_norm(dK, 0)
