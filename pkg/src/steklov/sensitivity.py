"""Perturbative shape calculus: domain volume, eigenvalue gradients with
respect to the shape coefficients, and projected gradient ascent under a
volume constraint.

Gradients use Hellmann-Feynman on the assembled series matrices (central
finite differences of the matrix per shape coefficient, exact eigenvector
sensitivity); degenerate targets are optimized through the group mean,
which stays differentiable where the individual branch is not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dno import dno_series_matrices, series_matrix
from .eigen import sigma_group
from .errors import DegeneracyError, DegenerateDomainError, DomainError
from .harmonics import (
    CIRCLE,
    SPHERE,
    AngularField,
    AngularGrid,
    integrate,
    synthesize,
)

BALL_VOLUME = {CIRCLE: np.pi, SPHERE: 4.0 * np.pi / 3.0}


def volume(rho: AngularField, eps: float) -> float:
    """Exact volume/area of the domain r <= 1 + eps*rho by quadrature of
    the band-limited integrand."""
    b = max(1, 2 * rho.bandlimit)
    fine = AngularGrid(rho.dimension, max(1, rho.bandlimit), oversample=8)
    radius = 1.0 + eps * synthesize(rho, fine)
    if np.min(radius) <= 0.0:
        raise DegenerateDomainError("1 + eps*rho must stay positive")
    grid = AngularGrid.for_bandlimit(rho.dimension, b)
    r = 1.0 + eps * synthesize(rho, grid)
    if rho.dimension == CIRCLE:
        return 0.5 * integrate(r**2, grid)
    return integrate(r**3, grid) / 3.0


def project_volume(rho: AngularField, eps: float) -> AngularField:
    """Rescale the radius 1 + eps*rho so the domain regains the volume of
    the unit ball; exact in coefficients (scales rho and shifts the
    constant mode)."""
    if eps == 0.0:
        return rho
    d = 2 if rho.dimension == CIRCLE else 3
    c = (BALL_VOLUME[rho.dimension] / volume(rho, eps)) ** (1.0 / d)
    coeffs = c * rho.coeffs.copy()
    shift = (c - 1.0) / eps
    if rho.dimension == CIRCLE:
        coeffs[rho.bandlimit] += shift
    else:
        coeffs[0] += shift * np.sqrt(4.0 * np.pi)
    return AngularField(rho.dimension, rho.bandlimit, coeffs)


def _group_mean_objective(rho: AngularField, eps: float, k: int, bandlimit: int,
                          order: int, radial: int | None, gap_tol: float):
    series = dno_series_matrices(rho, bandlimit, order, radial=radial)
    A = series_matrix(series, eps)
    w, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    idx = np.argsort(w.real, kind="stable")
    w, vl, vr = w.real[idx], vl[:, idx].real, vr[:, idx].real
    grp = sigma_group(w, k, gap_tol)
    return float(np.mean(w[grp])), w, grp, vl, vr


def eigen_gradient(rho: AngularField, eps: float, k: int, bandlimit: int,
                   order: int, radial: int | None = None,
                   gap_tol: float = 1e-6, fd_step: float = 1e-5,
                   on_degenerate: str = "group_mean") -> np.ndarray:
    """Gradient of sigma_k (or of its group mean when sigma_k is
    degenerate within gap_tol) with respect to the rho coefficients.

    d sigma / dA_c = (w . dG/dA_c v) / (w . v) with left/right
    eigenvectors; dG/dA_c by central differences of the assembled series
    matrix, step ``fd_step`` per coefficient.
    """
    obj, w, grp, vl, vr = _group_mean_objective(
        rho, eps, k, bandlimit, order, radial, gap_tol
    )
    if len(grp) > 1 and on_degenerate == "error":
        raise DegeneracyError(
            f"sigma_{k} is degenerate (group size {len(grp)}); "
            "enable the group-mean subgradient"
        )
    grad = np.zeros(len(rho.coeffs))
    for c in range(len(rho.coeffs)):
        dc = np.zeros_like(rho.coeffs)
        dc[c] = fd_step
        rp = AngularField(rho.dimension, rho.bandlimit, rho.coeffs + dc)
        rm = AngularField(rho.dimension, rho.bandlimit, rho.coeffs - dc)
        Ap = series_matrix(dno_series_matrices(rp, bandlimit, order, radial=radial), eps)
        Am = series_matrix(dno_series_matrices(rm, bandlimit, order, radial=radial), eps)
        dA = (Ap - Am) / (2.0 * fd_step)
        total = 0.0
        for i in grp:
            total += float(vl[:, i] @ dA @ vr[:, i]) / float(vl[:, i] @ vr[:, i])
        grad[c] = total / len(grp)
    return grad


@dataclass(eq=False)
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    volume: float
    step: float
    halvings: int


@dataclass(eq=False)
class ShapeState:
    """Optimizer state and history for the volume-constrained ascent."""

    rho: AngularField
    eps: float
    target: int
    history: list = field(default_factory=list)
    converged: bool = False
    message: str = ""


def optimize_sigma(rho: AngularField, eps: float, k: int, steps: int,
                   step_size: float, bandlimit: int, order: int,
                   radial: int | None = None, gap_tol: float = 1e-6,
                   grad_tol: float = 1e-6, max_halvings: int = 25) -> ShapeState:
    """Projected gradient ascent on sigma_k under the unit-ball volume
    constraint: A <- Pi_vol(A + eta * grad), with step halving whenever a
    trial step would decrease the objective."""
    rho = project_volume(rho, eps)
    obj = _group_mean_objective(rho, eps, k, bandlimit, order, radial, gap_tol)[0]
    state = ShapeState(rho=rho, eps=eps, target=k)
    eta = step_size
    state.history.append(IterationRecord(0, obj, np.nan, volume(rho, eps), eta, 0))
    for it in range(1, steps + 1):
        grad = eigen_gradient(rho, eps, k, bandlimit, order, radial=radial,
                              gap_tol=gap_tol)
        gn = float(np.linalg.norm(grad))
        if gn < grad_tol:
            state.converged = True
            state.message = f"gradient norm {gn:.2e} below tolerance"
            break
        accepted = False
        halvings = 0
        while halvings <= max_halvings:
            trial = AngularField(rho.dimension, rho.bandlimit,
                                 rho.coeffs + eta * grad)
            trial = project_volume(trial, eps)
            tobj = _group_mean_objective(trial, eps, k, bandlimit, order,
                                         radial, gap_tol)[0]
            if tobj >= obj - 1e-12:
                accepted = True
                break
            eta *= 0.5
            halvings += 1
        if not accepted:
            state.message = "step size collapsed without ascent"
            break
        rho, obj = trial, tobj
        state.history.append(
            IterationRecord(it, obj, gn, volume(rho, eps), eta, halvings)
        )
    else:
        state.message = "step cap reached"
    state.rho = rho
    return state
