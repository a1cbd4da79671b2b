"""Steklov spectra of the truncated DNO series.

Eigenvalues of the series matrix are the Steklov spectrum of the perturbed
domain up to the series and basis truncations.  The matrix is real but not
symmetric (it is similar to a self-adjoint operator through the boundary
measure), so a general dense eigensolver is used and realness of the
spectrum is asserted rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dno import OperatorSeries, series_matrix
from .errors import DomainError, SpectralValidityError

_IMAG_TOL = 1e-8


def _real_spectrum(A: np.ndarray, imag_tol: float = _IMAG_TOL):
    w, V = scipy.linalg.eig(A)
    bad = float(np.max(np.abs(w.imag))) if len(w) else 0.0
    if bad > imag_tol:
        raise SpectralValidityError(
            f"spectrum has imaginary parts up to {bad:.2e} (tol {imag_tol:.0e}); "
            "eps is outside the trusted radius or the basis is too small"
        )
    order = np.argsort(w.real, kind="stable")
    w = w.real[order]
    V = V[:, order].real
    V /= np.linalg.norm(V, axis=0, keepdims=True)
    return w, V


def steklov_spectrum(series: OperatorSeries | np.ndarray, eps: float = 0.0,
                     count: int | None = None):
    """Lowest ``count`` eigenvalues (ascending) of the truncated DNO at
    eps, with normalized eigenvectors.  Accepts a prebuilt matrix too."""
    A = series if isinstance(series, np.ndarray) else series_matrix(series, eps)
    if count is None:
        count = A.shape[0]
    if count > A.shape[0]:
        raise DomainError("count exceeds matrix size")
    w, V = _real_spectrum(A)
    return w[:count], V[:, :count]


@dataclass(eq=False)
class EigenCurve:
    """One eigenvalue branch along an eps grid with matched eigenvectors
    and a least-squares polynomial fit."""

    branch: int
    eps: np.ndarray
    sigma: np.ndarray
    vectors: np.ndarray  # (n_eps, dim)
    coefficients: np.ndarray
    fit_residual: float
    warnings: list = field(default_factory=list)


def eigen_curve(series: OperatorSeries, eps_grid, count: int) -> list:
    """Track ``count`` branches across the eps grid.

    Branches are matched between consecutive eps values by greedy maximal
    eigenvector overlap; an ambiguous match (best overlap < 0.5) attaches
    a branch-crossing warning rather than failing.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    if len(eps_grid) < 2 or np.any(np.diff(eps_grid) <= 0) or eps_grid[0] != 0.0:
        raise DomainError("eps grid must be increasing and start at 0")
    w0, V0 = steklov_spectrum(series, 0.0, count)
    sigmas = [w0]
    vectors = [V0]
    warnings: dict[int, list] = {i: [] for i in range(count)}
    for t in range(1, len(eps_grid)):
        w, V = steklov_spectrum(series, eps_grid[t], count)
        overlap = np.abs(vectors[-1].T @ V)  # (count, count)
        perm = np.full(count, -1)
        taken = np.zeros(count, dtype=bool)
        # globally greedy: largest overlaps first (deterministic)
        flat = np.argsort(-overlap, axis=None, kind="stable")
        assigned = 0
        for idx in flat:
            i, j = divmod(idx, count)
            if perm[i] >= 0 or taken[j]:
                continue
            perm[i] = j
            taken[j] = True
            if overlap[i, j] < 0.5:
                warnings[i].append(
                    f"ambiguous branch match at eps={eps_grid[t]:g} "
                    f"(overlap {overlap[i, j]:.3f})"
                )
            assigned += 1
            if assigned == count:
                break
        sigmas.append(w[perm])
        vectors.append(V[:, perm])
    sig = np.array(sigmas)  # (n_eps, count)
    curves = []
    deg = min(series.order, len(eps_grid) - 1)
    for i in range(count):
        co = np.polynomial.polynomial.polyfit(eps_grid, sig[:, i], deg)
        res = float(np.max(np.abs(
            np.polynomial.polynomial.polyval(eps_grid, co) - sig[:, i]
        )))
        curves.append(EigenCurve(
            branch=i,
            eps=eps_grid.copy(),
            sigma=sig[:, i].copy(),
            vectors=np.array([v[:, i] for v in vectors]),
            coefficients=co,
            fit_residual=res,
            warnings=warnings[i],
        ))
    return curves


def perturbation_coeffs(series: OperatorSeries, lam0: float,
                        gap_tol: float = 1e-9) -> list:
    """Degenerate Rayleigh-Schrodinger coefficients for the eigenvalue
    group of G_0 at lam0: per-branch (sigma0, sigma1, sigma2).

    sigma1 are the eigenvalues of the projected block P G1 P; sigma2 uses
    the reduced resolvent, with the effective second-order block whenever
    first-order eigenvalues coincide within ``gap_tol`` (the ball spectrum
    is everywhere degenerate, so this is the common path).
    """
    if series.order < 2:
        raise DomainError("need series order >= 2 for second-order coefficients")
    d0_diag = np.diag(series.G[0])
    sel = np.abs(d0_diag - lam0) < 1e-6
    if not np.any(sel):
        raise DomainError(f"{lam0} is not an eigenvalue of G0")
    idx = np.nonzero(sel)[0]
    comp = np.nonzero(~sel)[0]
    G1, G2 = series.G[1], series.G[2]
    V1 = G1[np.ix_(idx, idx)]
    inv_gap = 1.0 / (lam0 - d0_diag[comp])
    W2 = G2[np.ix_(idx, idx)] + G1[np.ix_(idx, comp)] @ (
        inv_gap[:, None] * G1[np.ix_(comp, idx)]
    )
    w1, Vr = scipy.linalg.eig(V1)
    wl, Vl = scipy.linalg.eig(V1.T)
    if np.max(np.abs(w1.imag)) > _IMAG_TOL:
        raise SpectralValidityError("first-order block has complex eigenvalues")
    w1 = w1.real
    order = np.argsort(w1, kind="stable")
    w1, Vr = w1[order], Vr[:, order].real
    wl = wl.real

    out = []
    pos = 0
    while pos < len(w1):
        grp = [pos]
        while grp[-1] + 1 < len(w1) and w1[grp[-1] + 1] - w1[pos] < gap_tol:
            grp.append(grp[-1] + 1)
        s1 = float(np.mean(w1[grp]))
        # left eigenvectors for the same first-order eigenvalue(s)
        lsel = np.argsort(np.abs(wl - w1[pos]), kind="stable")[: len(grp)]
        L = Vl[:, lsel].real
        R = Vr[:, grp]
        if len(grp) == 1:
            v, lvec = R[:, 0], L[:, 0]
            s2 = float((lvec @ W2 @ v) / (lvec @ v))
            out.append((float(lam0), s1, s2))
        else:
            eff = np.linalg.solve(L.T @ R, L.T @ W2 @ R)
            s2s = np.linalg.eigvals(eff)
            if np.max(np.abs(s2s.imag)) > _IMAG_TOL:
                raise SpectralValidityError("second-order block has complex eigenvalues")
            for s2 in np.sort(s2s.real):
                out.append((float(lam0), s1, float(s2)))
        pos = grp[-1] + 1
    return out


def sigma_group(values: np.ndarray, k: int, gap_tol: float = 1e-6) -> np.ndarray:
    """Indices of the eigenvalue cluster containing index k (chained gaps
    below gap_tol)."""
    lo = k
    while lo > 0 and values[lo] - values[lo - 1] < gap_tol:
        lo -= 1
    hi = k
    while hi + 1 < len(values) and values[hi + 1] - values[hi] < gap_tol:
        hi += 1
    return np.arange(lo, hi + 1)


@dataclass(eq=False)
class AnalyticityReport:
    fit_residual: float
    radius_estimate: float
    suspected_singularity: bool


def analyticity_check(curve: EigenCurve) -> AnalyticityReport:
    """Empirical analyticity diagnostics for one branch: polynomial fit
    residual plus a ratio-test radius estimate from the fitted
    coefficients.  Flags (does not assert) suspected crossings."""
    if len(curve.eps) < 8:
        raise DomainError("need at least 8 samples for the analyticity check")
    co = curve.coefficients
    eps_max = float(curve.eps[-1])
    scale = max(1.0, float(np.max(np.abs(curve.sigma))))
    # a coefficient is significant only if its contribution over the
    # fitted interval clears the fit's noise floor
    noise = 10.0 * max(curve.fit_residual, 1e-12 * scale)
    contrib = np.abs(co) * eps_max ** np.arange(len(co))
    ratios = []
    start = max(1, (len(co) - 1) // 2)
    for n in range(start, len(co) - 1):
        if contrib[n] > noise and contrib[n + 1] > noise:
            ratios.append(abs(co[n] / co[n + 1]))
    radius = float(np.median(ratios)) if ratios else float("inf")
    suspect = curve.fit_residual > 1e-4 or bool(curve.warnings)
    return AnalyticityReport(curve.fit_residual, radius, suspect)
