"""Prior models over lattice potentials.

Priors are expressed as energies E(v) with p(v) ~ exp(-E(v)); each model
exposes the exact analytic gradient dE/dv used by the optimizer.  The
Gaussian family is E = (1/2) <v - v0 | K0 | v - v0> for an inverse
covariance K0 (smoothness, approximate periodicity, symmetry, RBF).
Non-Gaussian families switch between two filtered differences

    omega_i(x) = sum_y W_i(x, y) (v(y) - v_i(y))

through a field that is either an independent hyperfield theta(x) (mixed
energy (1/2) sum |(1-theta) omega_1 + theta omega_2|^2) or an auxiliary
field B(x) = sigma(|omega_1|^2 - |omega_2|^2 - vartheta) recomputed from v
itself, with sigma(t) = 1 / (1 + exp(-2 nu t)) sharpening to a step as
nu -> inf (ties map to 1).  For binary fields the mixed and switched
energies coincide exactly, term by term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .lattice import as_grid, build_laplacian, build_shift_difference


# ---------------------------------------------------------------------------
# small pieces

def sigmoid(x, nu: float):
    """sigma(x) = 1/(1 + exp(-2 nu x)); the step limit keeps the tie at 1."""
    if np.isinf(nu):
        return np.where(np.asarray(x, dtype=float) >= 0.0, 1.0, 0.0)
    return expit(2.0 * nu * np.asarray(x, dtype=float))


def sigmoid_derivative(x, nu: float):
    """d sigma / dx = 2 nu sigma (1 - sigma); identically 0 in the step limit."""
    if np.isinf(nu):
        return np.zeros_like(np.asarray(x, dtype=float))
    s = expit(2.0 * nu * np.asarray(x, dtype=float))
    return 2.0 * nu * s * (1.0 - s)


def filtered_difference(w: np.ndarray, v, v0) -> np.ndarray:
    """omega = W (v - v0)."""
    return np.asarray(w) @ (as_grid(v) - as_grid(v0))


def periodic_template(theta1: float, theta2: float, theta3: float,
                      n: int) -> np.ndarray:
    """theta1 * sin(2 pi x / theta2 + theta3) sampled on x = 1..n."""
    if theta2 == 0:
        raise ValueError("template period must be nonzero")
    x = np.arange(1, n + 1, dtype=float)
    return theta1 * np.sin(2.0 * np.pi * x / theta2 + theta3)


def gaussian_energy(v, v0, k0: np.ndarray) -> float:
    d = as_grid(v) - as_grid(v0)
    return 0.5 * float(d @ (k0 @ d))


def gaussian_gradient(v, v0, k0: np.ndarray) -> np.ndarray:
    return k0 @ (as_grid(v) - as_grid(v0))


def mixed_field_energy(theta, omega1, omega2) -> float:
    """(1/2) sum_x |(1 - theta) omega_1 + theta omega_2|^2."""
    theta = np.asarray(theta, dtype=float)
    return 0.5 * float(np.sum(((1.0 - theta) * omega1 + theta * omega2) ** 2))


def switched_field_energy(theta, omega1, omega2) -> float:
    """(1/2) sum_x [(1 - theta) omega_1^2 + theta omega_2^2].

    Equal to the mixed form bit for bit when theta is binary.
    """
    theta = np.asarray(theta, dtype=float)
    return 0.5 * float(np.sum((1.0 - theta) * omega1 ** 2 + theta * omega2 ** 2))


def count_discontinuities(field) -> int:
    """Number of unequal adjacent pairs (non-periodic chain)."""
    f = np.asarray(field)
    return int(np.sum(f[1:] != f[:-1]))


def log_normalization(k0: np.ndarray, eps_factor: float = 1e-10) -> float:
    """ln of the Gaussian normalization integral for inverse covariance K0.

    Equals -(1/2) * sum over eigenvalues lam_i > eps of ln(lam_i / 2 pi),
    a pseudo-determinant that skips zero modes; eps = eps_factor * spectral
    range.  Eigenvalues below -eps raise (K0 must be PSD).
    """
    value, _, _ = pseudo_logdet_info(k0, eps_factor)
    return value


def pseudo_logdet_info(k0: np.ndarray, eps_factor: float = 1e-10):
    """(log-normalization value, rank, number of zero modes)."""
    lam = np.linalg.eigvalsh(np.asarray(k0, dtype=float))
    eps = eps_factor * max(float(lam[-1] - lam[0]), np.finfo(float).tiny)
    if lam[0] < -eps:
        raise ValueError(
            f"inverse covariance has negative eigenvalue {lam[0]:g}; not PSD")
    keep = lam > eps
    value = -0.5 * float(np.sum(np.log(lam[keep] / (2.0 * np.pi))))
    rank = int(np.count_nonzero(keep))
    return value, rank, int(lam.size - rank)


def effective_template(v0_tilde, k: np.ndarray):
    """Fold (1/2)|v - v0~|^2 + (1/2) v^T K v into a single Gaussian.

    Returns (v0, K0) with K0 = I + K and v0 = K0^{-1} v0~; the energies
    differ only by a v-independent constant.  Smooth templates pass nearly
    unchanged, rough ones are attenuated by 1/(1 + lam_i).
    """
    v0_tilde = as_grid(v0_tilde)
    k = np.asarray(k, dtype=float)
    k0 = np.eye(v0_tilde.size) + k
    try:
        v0 = np.linalg.solve(k0, v0_tilde)
    except np.linalg.LinAlgError as exc:
        raise ValueError("I + K is singular; effective template undefined") from exc
    return v0, k0


@dataclass(frozen=True)
class FilterSpec:
    """A filtered difference omega = W (v - template)."""

    w: np.ndarray
    template: np.ndarray

    def omega(self, v) -> np.ndarray:
        return self.w @ (as_grid(v) - self.template)


def auxiliary_field(v, spec1: FilterSpec, spec2: FilterSpec, nu: float,
                    vartheta: float) -> np.ndarray:
    """B(x) = sigma(|omega_1(x)|^2 - |omega_2(x)|^2 - vartheta)."""
    u = spec1.omega(v) ** 2 - spec2.omega(v) ** 2
    return sigmoid(u - vartheta, nu)


@dataclass(frozen=True)
class FieldState:
    """A switching field: 'auxiliary' fields are recomputed from v, while
    'hyper' fields are independent degrees of freedom updated by annealing."""

    kind: str
    values: np.ndarray
    nu: float = np.inf


def aux_prior_energy(field, mode: str, tau: float, w_b: np.ndarray | None = None,
                     t_b=None, vartheta_b: float = 0.0,
                     nu_b: float = 1.0) -> float:
    """Prior energy on a switching field.

    mode 'count'     : (tau/2) * number of unequal adjacent pairs
    mode 'quadratic' : (tau/2) * sum |W_B (B - t_B)|^2
    mode 'sigmoid'   : (tau/2) * sum sigma(|W_B (B - t_B)|^2 - vartheta_B)
    """
    b = np.asarray(field, dtype=float)
    if mode == "count":
        return 0.5 * tau * count_discontinuities(b)
    if w_b is None:
        w_b = np.eye(b.size)
    t = np.zeros(b.size) if t_b is None else np.asarray(t_b, dtype=float)
    omega_b = w_b @ (b - t)
    if mode == "quadratic":
        return 0.5 * tau * float(np.sum(omega_b ** 2))
    if mode == "sigmoid":
        return 0.5 * tau * float(np.sum(sigmoid(omega_b ** 2 - vartheta_b, nu_b)))
    raise ValueError(f"unknown field-prior mode {mode!r}")


def switch_energy_fixed_reference(v, v0, b, lam1: float, lam2: float,
                                  neg_lap: np.ndarray | None = None) -> float:
    """(lam1/2) sum (1-B)|v-v0|^2 + (lam2/2) <v|-Delta|v>.

    Where B = 0 the potential is pinned to the reference v0; where B = 1 only
    the smoothness term acts.
    """
    v = as_grid(v)
    if neg_lap is None:
        neg_lap = build_laplacian(v.size)
    t = v - as_grid(v0)
    b = np.asarray(b, dtype=float)
    return (0.5 * lam1 * float(np.sum((1.0 - b) * t ** 2))
            + 0.5 * lam2 * float(v @ (neg_lap @ v)))


def switch_energy_two_references(v, v1, v2, b, lam1: float, lam2: float,
                                 w: np.ndarray | None = None) -> float:
    """(lam1/2) sum (1-B)|W(v-v1)|^2 + (lam2/2) sum B |W(v-v2)|^2.

    The default filter is the periodic first difference, so each branch
    matches the *shape* of its reference, not its absolute level.
    """
    v = as_grid(v)
    if w is None:
        w = build_shift_difference(v.size, 1)
    o1 = w @ (v - as_grid(v1))
    o2 = w @ (v - as_grid(v2))
    b = np.asarray(b, dtype=float)
    return 0.5 * float(np.sum((1.0 - b) * (lam1 * o1 ** 2) + b * (lam2 * o2 ** 2)))


def cup_function(t, a: float, b: float, gamma: float, x0: float = 0.0):
    """psi(t) = a * (1 - 1/(1 + (|t - x0|/b)^gamma)); flat-bottomed well that
    saturates at a for |t - x0| >> b, so large outliers stop paying."""
    s = np.abs(np.asarray(t, dtype=float) - x0) / b
    return a * (1.0 - 1.0 / (1.0 + s ** gamma))


def cup_derivative(t, a: float, b: float, gamma: float, x0: float = 0.0):
    """d psi / d t, with the symmetric subgradient 0 exactly at t = x0."""
    t = np.asarray(t, dtype=float)
    d = t - x0
    s = np.abs(d) / b
    out = np.zeros_like(t)
    nz = s > 0
    out[nz] = (a * gamma / b) * s[nz] ** (gamma - 1.0) / (1.0 + s[nz] ** gamma) ** 2
    return out * np.sign(d)


def cup_energy(omega, a: float, b: float, gamma: float, x0: float = 0.0) -> float:
    """(1/2) sum_x psi(omega(x))."""
    return 0.5 * float(np.sum(cup_function(omega, a, b, gamma, x0)))


# ---------------------------------------------------------------------------
# prior models

class Prior:
    """Interface: energy(v) -> float, gradient(v) -> array, field(v) -> array|None."""

    def energy(self, v) -> float:
        raise NotImplementedError

    def gradient(self, v) -> np.ndarray:
        raise NotImplementedError

    def field(self, v) -> np.ndarray | None:
        return None


@dataclass(frozen=True)
class GaussianPrior(Prior):
    k0: np.ndarray
    v0: np.ndarray

    def energy(self, v) -> float:
        return gaussian_energy(v, self.v0, self.k0)

    def gradient(self, v) -> np.ndarray:
        return gaussian_gradient(v, self.v0, self.k0)


@dataclass(frozen=True)
class GlobalMixPrior(Prior):
    """One global mixing weight theta between two Gaussian components.

    mode 'energy'   : E = (1-theta) E_1(v) + theta E_2(v)
    mode 'template' : E = Gaussian with v0 = (1-theta) v1 + theta v2 and
                      K0 = (1-theta) K1 + theta K2

    The modes coincide for binary theta and differ by a v-independent mixed
    term otherwise.
    """

    theta: float
    k1: np.ndarray
    v1: np.ndarray
    k2: np.ndarray
    v2: np.ndarray
    mode: str = "energy"

    def _mixed(self):
        t = self.theta
        return (1.0 - t) * self.v1 + t * self.v2, (1.0 - t) * self.k1 + t * self.k2

    def energy(self, v) -> float:
        if self.mode == "energy":
            return ((1.0 - self.theta) * gaussian_energy(v, self.v1, self.k1)
                    + self.theta * gaussian_energy(v, self.v2, self.k2))
        if self.mode == "template":
            v0, k0 = self._mixed()
            return gaussian_energy(v, v0, k0)
        raise ValueError(f"unknown mix mode {self.mode!r}")

    def gradient(self, v) -> np.ndarray:
        if self.mode == "energy":
            return ((1.0 - self.theta) * gaussian_gradient(v, self.v1, self.k1)
                    + self.theta * gaussian_gradient(v, self.v2, self.k2))
        v0, k0 = self._mixed()
        return gaussian_gradient(v, v0, k0)


@dataclass(frozen=True)
class HyperfieldPrior(Prior):
    """Independent local hyperfield theta(x) mixing two filtered differences.

    E(v | theta) = (1/2) sum_x |(1-theta) omega_1 + theta omega_2|^2
                   [+ ln Z_V(theta)]

    The normalization term depends on theta only when the two filters differ;
    it is constant in v either way.  theta itself is updated outside (by
    annealing), so the model is immutable and `replace_theta` returns a copy.
    """

    spec1: FilterSpec
    spec2: FilterSpec
    theta: np.ndarray
    include_normalization: bool = False

    def _mixing_filter(self) -> np.ndarray:
        t = np.asarray(self.theta, dtype=float)
        return (1.0 - t)[:, None] * self.spec1.w + t[:, None] * self.spec2.w

    def _omega_mixed(self, v) -> np.ndarray:
        t = np.asarray(self.theta, dtype=float)
        return (1.0 - t) * self.spec1.omega(v) + t * self.spec2.omega(v)

    def energy(self, v) -> float:
        e = 0.5 * float(np.sum(self._omega_mixed(v) ** 2))
        if self.include_normalization:
            m = self._mixing_filter()
            e += log_normalization(m.T @ m)
        return e

    def gradient(self, v) -> np.ndarray:
        return self._mixing_filter().T @ self._omega_mixed(v)

    def field(self, v) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)

    def replace_theta(self, theta) -> "HyperfieldPrior":
        return replace(self, theta=np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class SwitchFixedReferencePrior(Prior):
    """Pin-or-smooth prior: B(x) = sigma(|v - v0|^2 - vartheta) releases the
    reference pull wherever v departs strongly from v0."""

    v0: np.ndarray
    lam1: float
    lam2: float
    nu: float
    vartheta: float
    neg_lap: np.ndarray

    def field(self, v) -> np.ndarray:
        t = as_grid(v) - self.v0
        return sigmoid(t ** 2 - self.vartheta, self.nu)

    def energy(self, v) -> float:
        return switch_energy_fixed_reference(v, self.v0, self.field(v),
                                             self.lam1, self.lam2, self.neg_lap)

    def gradient(self, v) -> np.ndarray:
        v = as_grid(v)
        t = v - self.v0
        u = t ** 2
        b = sigmoid(u - self.vartheta, self.nu)
        sp = sigmoid_derivative(u - self.vartheta, self.nu)
        # d/dv[(1-B) t^2] = 2 t (1-B) - sigma' * 2 t * t^2
        return (self.lam1 * (t * (1.0 - b) - sp * t * u)
                + self.lam2 * (self.neg_lap @ v))

    def replace_nu(self, nu: float) -> "SwitchFixedReferencePrior":
        return replace(self, nu=float(nu))


@dataclass(frozen=True)
class SwitchTwoReferencesPrior(Prior):
    """Shape-switching prior between two references through one filter W:
    B = sigma(|W(v-v1)|^2 - |W(v-v2)|^2 - vartheta), plus an optional
    discontinuity-count penalty (tau/2) N_d(B) that is piecewise constant in
    v (zero gradient)."""

    v1: np.ndarray
    v2: np.ndarray
    lam1: float
    lam2: float
    nu: float
    vartheta: float
    w: np.ndarray
    tau: float = 0.0

    def _omegas(self, v):
        v = as_grid(v)
        return self.w @ (v - self.v1), self.w @ (v - self.v2)

    def field(self, v) -> np.ndarray:
        o1, o2 = self._omegas(v)
        return sigmoid(o1 ** 2 - o2 ** 2 - self.vartheta, self.nu)

    def energy(self, v) -> float:
        o1, o2 = self._omegas(v)
        b = sigmoid(o1 ** 2 - o2 ** 2 - self.vartheta, self.nu)
        e = 0.5 * float(np.sum((1.0 - b) * (self.lam1 * o1 ** 2)
                               + b * (self.lam2 * o2 ** 2)))
        if self.tau:
            e += aux_prior_energy(b, "count", self.tau)
        return e

    def gradient(self, v) -> np.ndarray:
        o1, o2 = self._omegas(v)
        u = o1 ** 2 - o2 ** 2 - self.vartheta
        b = sigmoid(u, self.nu)
        sp = sigmoid_derivative(u, self.nu)
        core = (self.lam1 * (1.0 - b) * o1 + self.lam2 * b * o2
                + sp * (o1 - o2) * (self.lam2 * o2 ** 2 - self.lam1 * o1 ** 2))
        return self.w.T @ core

    def replace_nu(self, nu: float) -> "SwitchTwoReferencesPrior":
        return replace(self, nu=float(nu))


@dataclass(frozen=True)
class AuxMixedPrior(Prior):
    """General auxiliary-field prior in mixed form.

    E(v) = (1/2) sum_x |(1-B) omega_1 + B omega_2|^2 + E_B(B),
    B    = sigma(|omega_1|^2 - |omega_2|^2 - vartheta),

    with E_B one of the `aux_prior_energy` modes.  The gradient carries the
    chain-rule terms through B (they vanish in the step limit).
    """

    spec1: FilterSpec
    spec2: FilterSpec
    nu: float
    vartheta: float
    eb_mode: str = "count"
    tau: float = 0.0
    w_b: np.ndarray | None = None
    t_b: np.ndarray | None = None
    vartheta_b: float = 0.0
    nu_b: float = 1.0

    def field(self, v) -> np.ndarray:
        return auxiliary_field(v, self.spec1, self.spec2, self.nu, self.vartheta)

    def energy(self, v) -> float:
        o1, o2 = self.spec1.omega(v), self.spec2.omega(v)
        b = sigmoid(o1 ** 2 - o2 ** 2 - self.vartheta, self.nu)
        e = 0.5 * float(np.sum(((1.0 - b) * o1 + b * o2) ** 2))
        if self.tau:
            e += aux_prior_energy(b, self.eb_mode, self.tau, self.w_b, self.t_b,
                                  self.vartheta_b, self.nu_b)
        return e

    def _field_prior_db(self, b: np.ndarray) -> np.ndarray:
        """dE_B/dB for the differentiable modes (count mode contributes 0)."""
        if not self.tau or self.eb_mode == "count":
            return np.zeros_like(b)
        w_b = np.eye(b.size) if self.w_b is None else self.w_b
        t = np.zeros(b.size) if self.t_b is None else np.asarray(self.t_b, float)
        omega_b = w_b @ (b - t)
        if self.eb_mode == "quadratic":
            return self.tau * (w_b.T @ omega_b)
        if self.eb_mode == "sigmoid":
            sp = sigmoid_derivative(omega_b ** 2 - self.vartheta_b, self.nu_b)
            return self.tau * (w_b.T @ (sp * omega_b))
        raise ValueError(f"unknown field-prior mode {self.eb_mode!r}")

    def gradient(self, v) -> np.ndarray:
        o1, o2 = self.spec1.omega(v), self.spec2.omega(v)
        u = o1 ** 2 - o2 ** 2 - self.vartheta
        b = sigmoid(u, self.nu)
        sp = sigmoid_derivative(u, self.nu)
        omega_mix = (1.0 - b) * o1 + b * o2
        # sensitivity of E to B at fixed omegas, plus the field-prior part
        de_db = omega_mix * (o2 - o1) + self._field_prior_db(b)
        # dB/dv = sigma' * 2 (omega_1 W_1 - omega_2 W_2)
        g = self.spec1.w.T @ ((1.0 - b) * omega_mix + 2.0 * sp * o1 * de_db)
        g += self.spec2.w.T @ (b * omega_mix - 2.0 * sp * o2 * de_db)
        return g


@dataclass(frozen=True)
class HyperfieldMixPrior(Prior):
    """Template-mixing hyperfield with identity covariance plus smoothness:

    E(v | theta) = (lam1/2) |v - v0(theta)|^2 + (lam2/2) <v|-Delta|v>
                   + (tau/2) N_d(theta),     v0(theta) = (1-theta) v1 + theta v2.

    theta is an independent binary field, re-annealed periodically against
    `theta_energy`; the v-gradient below treats it as fixed.
    """

    v1: np.ndarray
    v2: np.ndarray
    lam1: float
    lam2: float
    tau: float
    theta: np.ndarray
    neg_lap: np.ndarray

    def mixed_template(self, theta=None) -> np.ndarray:
        t = np.asarray(self.theta if theta is None else theta, dtype=float)
        return (1.0 - t) * self.v1 + t * self.v2

    def energy(self, v) -> float:
        v = as_grid(v)
        d = v - self.mixed_template()
        return (0.5 * self.lam1 * float(d @ d)
                + 0.5 * self.lam2 * float(v @ (self.neg_lap @ v))
                + 0.5 * self.tau * count_discontinuities(self.theta))

    def gradient(self, v) -> np.ndarray:
        v = as_grid(v)
        return self.lam1 * (v - self.mixed_template()) + self.lam2 * (self.neg_lap @ v)

    def field(self, v) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)

    def theta_energy(self, v, theta) -> float:
        """The theta-dependent part of the posterior, for annealing theta."""
        d = as_grid(v) - self.mixed_template(theta)
        return (0.5 * self.lam1 * float(d @ d)
                + 0.5 * self.tau * count_discontinuities(theta))

    def replace_theta(self, theta) -> "HyperfieldMixPrior":
        return replace(self, theta=np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class CupPrior(Prior):
    """Saturating (non-convex) penalty (1/2) sum psi(W (v - v0)) that tolerates
    genuine discontinuities: beyond |omega| ~ b the cost flattens at a."""

    w: np.ndarray
    v0: np.ndarray
    a: float
    b: float
    gamma: float
    x0: float = 0.0

    def energy(self, v) -> float:
        return cup_energy(self.w @ (as_grid(v) - self.v0),
                          self.a, self.b, self.gamma, self.x0)

    def gradient(self, v) -> np.ndarray:
        omega = self.w @ (as_grid(v) - self.v0)
        return 0.5 * (self.w.T @ cup_derivative(omega, self.a, self.b,
                                                self.gamma, self.x0))


@dataclass(frozen=True)
class CompositePrior(Prior):
    """Sum of component priors, accumulated in listed order."""

    parts: tuple

    def energy(self, v) -> float:
        total = 0.0
        for part in self.parts:
            total += part.energy(v)
        return total

    def gradient(self, v) -> np.ndarray:
        total = np.zeros(as_grid(v).size)
        for part in self.parts:
            total = total + part.gradient(v)
        return total

    def field(self, v) -> np.ndarray | None:
        for part in self.parts:
            f = part.field(v)
            if f is not None:
                return f
        return None


# ---------------------------------------------------------------------------
# general per-point template machinery (two independent hyperfields)

def local_two_field_energy(v, theta, theta_p, w1: np.ndarray, w2: np.ndarray,
                           v1, v2) -> float:
    """Direct energy sum_x |omega(x; theta, theta')|^2 where theta' mixes the
    filter rows and theta mixes a per-point template:

    omega(x) = sum_y W(x, y; theta') [v(y) - v_x(y; theta)],
    W(x, .; theta') = (1-theta'(x)) W1(x, .) + theta'(x) W2(x, .),
    v_x(.; theta)  = (1-theta(x)) v1 + theta(x) v2.
    """
    v = as_grid(v)
    t = np.asarray(theta, dtype=float)
    tp = np.asarray(theta_p, dtype=float)
    w = (1.0 - tp)[:, None] * w1 + tp[:, None] * w2
    # row x applies its own template choice
    omega = np.array([w[x] @ (v - ((1.0 - t[x]) * np.asarray(v1, float)
                                   + t[x] * np.asarray(v2, float)))
                      for x in range(v.size)])
    return float(np.sum(omega ** 2))


def local_two_field_effective(theta, theta_p, w1: np.ndarray, w2: np.ndarray,
                              v1, v2):
    """Effective quadratic form matching `local_two_field_energy` up to a
    v-independent constant: returns (v0_bar, K0) with

    K0 = sum_x w_x w_x^T,   v0_bar = K0^+ sum_x w_x (w_x . v_x),

    where w_x is row x of the mixed filter and v_x its template.
    """
    t = np.asarray(theta, dtype=float)
    tp = np.asarray(theta_p, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    w = (1.0 - tp)[:, None] * w1 + tp[:, None] * w2
    k0 = w.T @ w
    rhs = np.zeros(w.shape[1])
    for x in range(w.shape[0]):
        vx = (1.0 - t[x]) * v1 + t[x] * v2
        rhs += w[x] * float(w[x] @ vx)
    v0_bar = np.linalg.pinv(k0) @ rhs
    return v0_bar, k0


def local_two_field_quadratic(v, v0_bar, k0: np.ndarray) -> float:
    """(v - v0_bar)^T K0 (v - v0_bar); no 1/2, matching the direct form."""
    d = as_grid(v) - np.asarray(v0_bar, dtype=float)
    return float(d @ (k0 @ d))
