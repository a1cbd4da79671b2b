"""Transformed-domain perturbation recursion.

Pulling the perturbed domain back to the unit ball turns the Laplace
equation into ``Delta u = eps L1 u + eps^2 L2 u``.  In both dimensions the
operators share one structure built from surface quantities of the shape
function rho::

    L1 u = -2 rho Lap u + (Lap_S rho) r^-1 u_r
           + 2 grad_S rho . grad_S (r^-1 u_r)
    L2 u = -rho^2 Lap u + (rho Lap_S rho) r^-1 u_r
           + 2 rho grad_S rho . grad_S (r^-1 u_r)
           - |grad_S rho|^2 (2 r^-1 u_r + u_rr)

All angular products are evaluated in the semi-spectral representation
(exact convolution in the periodic angle, pointwise in cos-theta), so the
recursion is exact in angle for band-limited data: each application widens
the angular support by bandlimit(rho) (L1) or 2*bandlimit(rho) (L2) and
truncation at the working bandlimit drops nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ballfield import (
    BallField,
    RadialGrid,
    RadialOperatorCache,
    field_norm,
    laplacian_block,
    mode_orders,
    radial_derivative_block,
    trace,
)
from .errors import DomainError
from .harmonics import (
    CIRCLE,
    AngularField,
    SemiBasis,
    grad_dot,
    multiply,
    n_modes,
    resize,
    surface_laplacian,
)


class PerturbationOperators:
    """Pseudo-spectral L1/L2 application for a fixed shape function.

    Inputs and outputs are coefficient blocks at one working bandlimit;
    building the multiplier kernels once makes repeated applications (the
    series recursion, the fixed-point oracle, operator assembly) cheap.
    Transforms of a block are computed once (:meth:`prep`) and shared
    between the L1 and L2 accumulators.
    """

    def __init__(self, rho: AngularField, k_work: int, rgrid: RadialGrid):
        self.rho = rho
        self.dimension = rho.dimension
        self.k_work = k_work
        self.rgrid = rgrid
        self.orders = mode_orders(rho.dimension, k_work)
        # Convolution output is read back only up to k_work, so the
        # Fourier axis is capped there; 2*bandlimit(rho) keeps the
        # theta quadrature exact for quadratic products.
        cap = max(k_work, 2 * rho.bandlimit)
        self.semi = SemiBasis.for_cap(rho.dimension, cap)
        semi = self.semi

        rho2 = multiply(rho, rho)
        lap_rho = surface_laplacian(rho)
        self.k_rho = semi.kernel(rho)
        self.k_rho2 = semi.kernel(rho2)
        self.k_lap_rho = semi.kernel(lap_rho)
        self.k_rho_lap_rho = semi.kernel(multiply(rho, lap_rho))
        self.k_gradsq = semi.kernel(grad_dot(rho, rho))
        # surface-gradient component kernels; rho * grad rho = grad(rho^2)/2
        if rho.dimension == CIRCLE:
            self.k_grad = [semi.kernel(rho, theta_deriv=True)]
            self.k_rho_grad = [0.5 * semi.kernel(rho2, theta_deriv=True)]
        else:
            self.k_grad = [
                semi.kernel(rho, theta_deriv=True),
                semi.kernel(rho, phi_deriv=True, over_sin=True),
            ]
            self.k_rho_grad = [
                0.5 * semi.kernel(rho2, theta_deriv=True),
                0.5 * semi.kernel(rho2, phi_deriv=True, over_sin=True),
            ]

    # -- shared transforms --------------------------------------------------

    def prep(self, U: np.ndarray):
        """Semi transforms of the derivative fields of a block, shared by
        the L1 and L2 accumulators."""
        g = self.rgrid
        rinv = g.rinv[None, :, None] if U.ndim == 3 else g.rinv[None, :]
        Ur = radial_derivative_block(U, g)
        rUr = Ur * rinv
        lap = laplacian_block(U, self.orders, g, self.dimension)
        F_lap = self.semi.to_semi(lap, self.k_work)
        F_rur = self.semi.to_semi(rUr, self.k_work)
        if self.dimension == CIRCLE:
            grads = [self.semi.dphi(F_rur)]
        else:
            grads = [
                self.semi.to_semi(rUr, self.k_work, deriv=1),
                self.semi.over_sin(self.semi.dphi(F_rur)),
            ]
        F_urr = self.semi.to_semi(radial_derivative_block(U, g, 2), self.k_work)
        return F_lap, F_rur, grads, F_urr

    def l1_acc(self, prep) -> np.ndarray:
        F_lap, F_rur, grads, _ = prep
        cm = self.semi.conv_mult
        acc = -2.0 * cm(self.k_rho, F_lap) + cm(self.k_lap_rho, F_rur)
        for kg, Fg in zip(self.k_grad, grads):
            acc += 2.0 * cm(kg, Fg)
        return acc

    def l2_acc(self, prep) -> np.ndarray:
        F_lap, F_rur, grads, F_urr = prep
        cm = self.semi.conv_mult
        acc = -cm(self.k_rho2, F_lap) + cm(self.k_rho_lap_rho, F_rur)
        acc -= cm(self.k_gradsq, 2.0 * F_rur + F_urr)
        for kg, Fg in zip(self.k_rho_grad, grads):
            acc += 2.0 * cm(kg, Fg)
        return acc

    def finish(self, acc: np.ndarray) -> np.ndarray:
        return self.semi.from_semi(acc, self.k_work)

    def l1_block(self, U: np.ndarray) -> np.ndarray:
        return self.finish(self.l1_acc(self.prep(U)))

    def l2_block(self, U: np.ndarray) -> np.ndarray:
        return self.finish(self.l2_acc(self.prep(U)))


def _embed_values(u: BallField, k_work: int) -> np.ndarray:
    """Pad/truncate the mode axis of a ball field to a new bandlimit."""
    out = np.zeros((n_modes(u.dimension, k_work), u.rgrid.resolution))
    b = min(u.bandlimit, k_work)
    if u.dimension == CIRCLE:
        out[k_work - b : k_work + b + 1] = u.values[u.bandlimit - b : u.bandlimit + b + 1]
    else:
        out[: (b + 1) ** 2] = u.values[: (b + 1) ** 2]
    return out


def apply_L1(rho: AngularField, u: BallField, k_work: int | None = None) -> BallField:
    """First-order transformed operator; exact at the expanded bandlimit
    ``u.bandlimit + rho.bandlimit`` (pass ``k_work`` to truncate)."""
    if rho.dimension != u.dimension:
        raise DomainError("rho and u live on different manifolds")
    if k_work is None:
        k_work = u.bandlimit + rho.bandlimit
    ops = PerturbationOperators(rho, k_work, u.rgrid)
    out = ops.l1_block(_embed_values(u, k_work))
    return BallField(u.dimension, k_work, out, u.rgrid)


def apply_L2(rho: AngularField, u: BallField, k_work: int | None = None) -> BallField:
    """Second-order transformed operator (quadratic in rho); exact at
    ``u.bandlimit + 2*rho.bandlimit``."""
    if rho.dimension != u.dimension:
        raise DomainError("rho and u live on different manifolds")
    if k_work is None:
        k_work = u.bandlimit + 2 * rho.bandlimit
    ops = PerturbationOperators(rho, k_work, u.rgrid)
    out = ops.l2_block(_embed_values(u, k_work))
    return BallField(u.dimension, k_work, out, u.rgrid)


# ---------------------------------------------------------------------------
# the extension series
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ExtensionSeries:
    """Terms u_0..u_N of the transformed harmonic-extension power series."""

    rho: AngularField
    xi: AngularField
    order: int
    terms: list
    norms: np.ndarray
    k_work: int

    @property
    def rgrid(self) -> RadialGrid:
        return self.terms[0].rgrid


def default_resolution(order: int) -> int:
    """Radial resolution rule: each L1/L2 application raises the radial
    polynomial degree by at most two."""
    return max(32, 24 + 2 * order)


def _series_blocks(ops: PerturbationOperators, cache: RadialOperatorCache,
                   xi_block: np.ndarray, order: int):
    """Batched u_0..u_N blocks at the working bandlimit.

    xi_block: (modes, B) boundary coefficients; the per-step recursion is
    ``Delta u_n = L1 u_{n-1} + L2 u_{n-2}`` with zero trace for n >= 1 and
    the convention u_{-1} = u_{-2} = 0.
    """
    blocks = [cache.solve_block(None, xi_block)]
    preps = {0: ops.prep(blocks[0])} if order >= 1 else {}
    for n in range(1, order + 1):
        acc = ops.l1_acc(preps[n - 1])
        if n >= 2:
            acc += ops.l2_acc(preps[n - 2])
            del preps[n - 2]
        blocks.append(cache.solve_block(ops.finish(acc), None))
        if n < order:
            preps[n] = ops.prep(blocks[n])
    return blocks


def extension_series(rho: AngularField, xi: AngularField, order: int,
                     k_work: int | None = None, radial: int | None = None,
                     compute_norms: bool = True, norm_order: int = 2) -> ExtensionSeries:
    """Compute the harmonic-extension series u_0..u_N.

    The working bandlimit defaults to bandlimit(xi) + N*bandlimit(rho),
    which makes every step exact in angle for trig-polynomial data.
    """
    if order < 0:
        raise DomainError("series order must be >= 0")
    if rho.dimension != xi.dimension:
        raise DomainError("rho and xi live on different manifolds")
    if k_work is None:
        k_work = xi.bandlimit + order * rho.bandlimit
    k_work = max(k_work, xi.bandlimit)
    if radial is None:
        radial = default_resolution(order)
    cache = RadialOperatorCache.build(rho.dimension, k_work, radial)
    ops = PerturbationOperators(rho, k_work, cache.rgrid)
    blocks = _series_blocks(ops, cache, resize(xi, k_work).coeffs[:, None], order)
    terms = [
        BallField(rho.dimension, k_work, b[:, :, 0], cache.rgrid) for b in blocks
    ]
    norms = (
        np.array([field_norm(t, norm_order) for t in terms])
        if compute_norms
        else np.full(order + 1, np.nan)
    )
    return ExtensionSeries(rho, xi, order, terms, norms, k_work)


def evaluate_extension(series: ExtensionSeries, eps: float) -> BallField:
    """Partial sum sum_n eps^n u_n."""
    acc = np.zeros_like(series.terms[0].values)
    for n, t in enumerate(series.terms):
        acc += eps**n * t.values
    return BallField(series.rho.dimension, series.k_work, acc, series.rgrid)


def transformed_residual(series: ExtensionSeries, eps: float) -> float:
    """Interior residual of ``Delta u = eps L1 u + eps^2 L2 u`` for the
    partial sum; decays like O(eps^{N+1}) as the order grows."""
    u = evaluate_extension(series, eps)
    ops = PerturbationOperators(series.rho, series.k_work, series.rgrid)
    lap = laplacian_block(u.values, ops.orders, series.rgrid, u.dimension)
    rhs = eps * ops.l1_block(u.values) + eps * eps * ops.l2_block(u.values)
    return float(np.max(np.abs((lap - rhs)[:, 1:])))


def recursion_residuals(series: ExtensionSeries) -> np.ndarray:
    """Relative interior residuals of Delta u_n = L1 u_{n-1} + L2 u_{n-2}.

    The n-th entry is ||Delta u_n - rhs_n||_inf / max(1, ||u_n||_inf) at the
    interior collocation nodes (the n = 0 entry checks Delta u_0 = 0).
    """
    ops = PerturbationOperators(series.rho, series.k_work, series.rgrid)
    out = np.zeros(series.order + 1)
    for n, t in enumerate(series.terms):
        lap = laplacian_block(t.values, ops.orders, series.rgrid, t.dimension)
        rhs = np.zeros_like(lap)
        if n >= 1:
            rhs += ops.l1_block(series.terms[n - 1].values)
        if n >= 2:
            rhs += ops.l2_block(series.terms[n - 2].values)
        scale = max(1.0, float(np.max(np.abs(t.values))))
        out[n] = float(np.max(np.abs((lap - rhs)[:, 1:]))) / scale
    return out


def trace_defects(series: ExtensionSeries) -> np.ndarray:
    """Max coefficient error of the boundary conditions: trace(u_0) = xi
    and trace(u_n) = 0 for n >= 1."""
    out = np.zeros(series.order + 1)
    t0 = trace(series.terms[0])
    out[0] = float(np.max(np.abs(t0.coeffs - resize(series.xi, series.k_work).coeffs)))
    for n in range(1, series.order + 1):
        out[n] = float(np.max(np.abs(trace(series.terms[n]).coeffs)))
    return out


def empirical_ratio(norms) -> float:
    """Robust geometric-rate estimate: the max of consecutive-term ratios
    over the last half of the sequence.  Returns 0 when all entries after
    the first (effectively) vanish; raises on all-zero input."""
    a = np.asarray(norms, dtype=float)
    if len(a) < 3:
        raise DomainError("need at least 3 entries for a rate estimate")
    if not np.any(a):
        raise DomainError("all-zero norm sequence has no defined rate")
    tiny = 1e-13 * float(np.max(a))
    if np.all(a[1:] <= tiny):
        return 0.0
    start = (len(a) - 1) // 2
    ratios = [
        a[i + 1] / a[i]
        for i in range(start, len(a) - 1)
        if a[i] > tiny
    ]
    return float(max(ratios)) if ratios else 0.0
