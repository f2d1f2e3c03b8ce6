"""Canonical ensemble of a particle on a periodic 1-D lattice.

The Hamiltonian is H = (1/2m) * (-Delta) + diag(v) with periodic boundary
conditions and hbar = 1.  At inverse temperature beta the position density
observed in repeated measurements is

    p(x | v) = sum_alpha p_alpha |phi_alpha(x)|^2,
    p_alpha  = exp(-beta * E_alpha) / Z,

so the likelihood of i.i.d. position data factorizes over samples.  Boltzmann
weights are computed with the ground-state shift exp(-beta (E - E_0)) to stay
finite for large beta.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import as_grid, build_laplacian, is_exactly_symmetric


@dataclass(frozen=True)
class Ensemble:
    """Diagonalized canonical ensemble.

    energies : ascending eigenvalues E_alpha
    states   : orthonormal eigenvectors, states[:, alpha] = phi_alpha
    weights  : Boltzmann probabilities p_alpha (sum to 1)
    log_z    : ln Z at the stored beta
    """

    energies: np.ndarray
    states: np.ndarray
    weights: np.ndarray
    beta: float
    log_z: float

    @property
    def n(self) -> int:
        return self.energies.size


def build_hamiltonian(v, mass: float) -> np.ndarray:
    """H = (1/2m) * (-Delta, periodic) + diag(v)."""
    v = as_grid(v)
    if not (mass > 0):
        raise ValueError(f"mass must be positive, got {mass}")
    h = (0.5 / mass) * build_laplacian(v.size, periodic=True)
    h[np.diag_indices_from(h)] += v
    return h


def diagonalize(h: np.ndarray, beta: float) -> Ensemble:
    """Diagonalize a symmetric Hamiltonian and attach Boltzmann weights."""
    h = np.asarray(h, dtype=float)
    if not is_exactly_symmetric(h):
        raise ValueError("Hamiltonian must be exactly symmetric")
    if not (beta >= 0) or not np.isfinite(beta):
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    energies, states = np.linalg.eigh(h)
    shifted = np.exp(-beta * (energies - energies[0]))
    norm = float(np.sum(shifted))
    weights = shifted / norm
    log_z = float(-beta * energies[0] + np.log(norm))
    return Ensemble(energies=energies, states=states, weights=weights,
                    beta=float(beta), log_z=log_z)


def likelihood_density(ensemble: Ensemble) -> np.ndarray:
    """Thermal position density rho(x) = sum_alpha p_alpha phi_alpha(x)^2."""
    return (ensemble.states ** 2) @ ensemble.weights


def log_likelihood(positions, ensemble: Ensemble) -> float:
    """Sum of ln rho(x_i) over the data.

    Returns -inf if any sampled site has zero density, and 0.0 (with a
    warning) for an empty data set.  Duplicated data contribute exactly
    twice: the sum is evaluated from per-site counts.
    """
    positions = np.asarray(getattr(positions, "positions", positions))
    if positions.size == 0:
        warnings.warn("log_likelihood called with empty data; returning 0.0")
        return 0.0
    n = ensemble.n
    if positions.min() < 0 or positions.max() >= n:
        raise ValueError(f"sample positions must lie in 0..{n - 1}")
    counts = np.bincount(positions.astype(int), minlength=n).astype(float)
    rho = likelihood_density(ensemble)
    hit = counts > 0
    if np.any(rho[hit] <= 0.0):
        return float("-inf")
    return float(np.sum(counts[hit] * np.log(rho[hit])))


def average_energy(ensemble: Ensemble) -> float:
    """Thermal average U = sum_alpha p_alpha E_alpha = d(ln Z)/d(-beta)."""
    return float(ensemble.weights @ ensemble.energies)


def spectral_range(energies: np.ndarray) -> float:
    return float(energies[-1] - energies[0])


def degenerate_pairs(ensemble: Ensemble, gap_factor: float = 1e-9,
                     occupancy_floor: float = 1e-12) -> list[tuple[int, int]]:
    """Adjacent index pairs whose gap is below gap_factor * spectral range
    and where at least one member carries thermal weight above the floor."""
    e = ensemble.energies
    p = ensemble.weights
    eps = gap_factor * max(spectral_range(e), np.finfo(float).tiny)
    pairs = []
    for i in range(e.size - 1):
        if e[i + 1] - e[i] < eps and max(p[i], p[i + 1]) >= occupancy_floor:
            pairs.append((i, i + 1))
    return pairs
