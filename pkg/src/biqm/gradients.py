"""Analytic gradients of the log likelihood, energy penalty, and priors.

First-order perturbation theory gives, for the thermal density
rho(x) = sum_a p_a phi_a(x)^2 observed at a datum x_i,

    d p(x_i)/d v(x) = sum_{a != g} (p_a - p_g)/(E_a - E_g)
                          * phi_a(x_i) phi_g(x_i) phi_a(x) phi_g(x)
                      - beta * sum_a p_a phi_a(x_i)^2 phi_a(x)^2
                      + beta * p(x_i) * rho(x).

The Boltzmann divided difference (p_a - p_g)/(E_a - E_g) is evaluated
directly: it stays bounded as levels approach (limit -beta * p), so the
formula is stable for small but nonzero gaps.  Exact degeneracy among
thermally occupied states makes the eigenbasis arbitrary and raises
DegenerateSpectrumError rather than silently regularizing; beta = 0 is the
one exception, where the divided difference has the exact limit 0 and the
density is flat regardless of v.

Eigenvalue sensitivities are d E_a/d v(x) = phi_a(x)^2, and the partition
function obeys d(ln Z)/d v(x) = -beta * rho(x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import (Ensemble, average_energy, likelihood_density,
                       spectral_range)

GAP_FACTOR = 1e-9          # degeneracy threshold, relative to spectral range
OCCUPANCY_FLOOR = 1e-12    # weights below this never trigger the error


class DegenerateSpectrumError(RuntimeError):
    """Raised when occupied levels are numerically degenerate."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        super().__init__(
            f"degenerate occupied levels (index pairs {self.pairs}); "
            "the eigenbasis within the degenerate subspace is arbitrary")


@dataclass
class GradientReport:
    gradient: np.ndarray
    degenerate_pairs: list = field(default_factory=list)
    regularization_applied: bool = False


def thermal_divided_differences(ensemble: Ensemble,
                                gap_factor: float = GAP_FACTOR,
                                occupancy_floor: float = OCCUPANCY_FLOOR) -> np.ndarray:
    """Matrix D[a, g] = (p_a - p_g)/(E_a - E_g), zero on the diagonal."""
    e = ensemble.energies
    p = ensemble.weights
    gaps = e[:, None] - e[None, :]
    eps = gap_factor * max(spectral_range(e), np.finfo(float).tiny)
    small = np.abs(gaps) < eps
    np.fill_diagonal(small, False)
    if ensemble.beta == 0.0:
        # flat Boltzmann weights: the divided difference is exactly 0 everywhere
        return np.zeros_like(gaps)
    if np.any(small):
        occupied = np.maximum(p[:, None], p[None, :]) >= occupancy_floor
        bad = small & occupied
        if np.any(bad):
            ii, jj = np.nonzero(np.triu(bad, k=1))
            raise DegenerateSpectrumError(list(zip(ii.tolist(), jj.tolist())))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (p[:, None] - p[None, :]) / gaps
    np.fill_diagonal(d, 0.0)
    d[small] = 0.0
    return d


def grad_log_likelihood(ensemble: Ensemble, positions) -> GradientReport:
    """Gradient of sum_i ln p(x_i) with respect to v.

    Grouped over distinct sample sites with weights c_x / rho(x), the three
    perturbation terms cost O(N^3) total rather than O(N^3) per datum.
    """
    positions = np.asarray(getattr(positions, "positions", positions))
    n = ensemble.n
    phi = ensemble.states
    p = ensemble.weights
    beta = ensemble.beta
    counts = np.bincount(positions.astype(int), minlength=n).astype(float) \
        if positions.size else np.zeros(n)
    rho = likelihood_density(ensemble)
    if np.any(rho[counts > 0] <= 0.0):
        raise ValueError("zero thermal density at a sampled site")
    wts = np.where(counts > 0, counts / np.where(rho > 0, rho, 1.0), 0.0)

    d = thermal_divided_differences(ensemble)
    c = phi.T @ (wts[:, None] * phi)
    g1 = np.einsum("xa,ab,xb->x", phi, d * c, phi)

    p2 = phi ** 2
    a = (p2 * p) @ p2.T            # a[x_hat, x] = sum_a p_a phi_a(x_hat)^2 phi_a(x)^2
    g2 = -beta * (wts @ a)
    g3 = beta * float(counts.sum()) * rho
    return GradientReport(gradient=g1 + g2 + g3)


def eigenvalue_gradients(ensemble: Ensemble) -> np.ndarray:
    """d E_a / d v(x) = phi_a(x)^2, returned as an (x, a) array."""
    return ensemble.states ** 2


def grad_log_z(ensemble: Ensemble) -> np.ndarray:
    """d(ln Z)/d v(x) = -beta * rho(x)."""
    return -ensemble.beta * likelihood_density(ensemble)


def energy_penalty(ensemble: Ensemble, mu: float, kappa: float) -> float:
    """(mu/2) (U - kappa)^2 pulling the thermal average energy toward kappa."""
    u = average_energy(ensemble)
    return 0.5 * mu * (u - kappa) ** 2


def grad_energy_penalty(ensemble: Ensemble, mu: float, kappa: float) -> GradientReport:
    """Gradient mu (U - kappa) sum_a p_a phi_a(x)^2 [1 - beta (E_a - U)]."""
    u = average_energy(ensemble)
    q = ensemble.weights * (1.0 - ensemble.beta * (ensemble.energies - u))
    vec = (ensemble.states ** 2) @ q
    return GradientReport(gradient=mu * (u - kappa) * vec)


def grad_prior(model, v) -> GradientReport:
    """Delegate to the model's exact analytic gradient."""
    return GradientReport(gradient=model.gradient(v))


def fd_check(energy_fn, grad_fn, v, h: float = 1e-5, floor: float = 1e-12) -> float:
    """Worst-case relative error between grad_fn and central differences.

    The error is max_x |g(x) - fd(x)| normalized by max(max_x |fd(x)|, floor),
    so a sign or scale mistake shows up as an O(1) value.
    """
    v = np.asarray(v, dtype=float)
    analytic = np.asarray(grad_fn(v), dtype=float)
    fd = np.empty_like(v)
    for i in range(v.size):
        vp = v.copy()
        vp[i] += h
        vm = v.copy()
        vm[i] -= h
        fd[i] = (energy_fn(vp) - energy_fn(vm)) / (2.0 * h)
    scale = max(float(np.max(np.abs(fd))), floor)
    return float(np.max(np.abs(analytic - fd)) / scale)
