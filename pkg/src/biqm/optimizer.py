"""MAP optimization of lattice potentials from position data.

The posterior over potentials combines the canonical-ensemble likelihood,
a prior model, and an optional quadratic penalty pulling the thermal average
energy U(v) toward a target kappa.  The negative log posterior

    F(v) = -sum_i ln p(x_i | v) + E_prior(v) + (mu/2) (U(v) - kappa)^2

is minimized by preconditioned gradient ascent on ln p,

    v <- v + eta * A^{-1} [grad ln L - grad E_prior - grad E_U],

with a backtracking (Armijo) line search on F and A either the prior's
canonical quadratic operator restricted to the unconstrained sites (plus a
1e-10 ridge) or the identity.  Stiff couplings (the mu penalty, sharpening
switching fields) are continued in stages; the iteration trace is monotone
within a stage, with scheduled changes marked and exempt.

Binary switching fields are optimized by Metropolis annealing over segment
flips: choose 0 <= x1 < x2 <= N uniformly and flip [x1, x2) (allowing
x2 = N keeps the last site flippable).  A proposal is accepted when
Delta E <= 0 or u < exp(-Delta E / T) with u uniform in [0, 1), so at
infinite temperature every move is accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .datagen import (CounterRng, SampleSet, empirical_density, impurity_band,
                      read_samples, regular_band, sample_positions,
                      true_potential, two_band_reference_potentials)
from .ensemble import (average_energy, build_hamiltonian, diagonalize,
                       likelihood_density)
from .gradients import (DegenerateSpectrumError, grad_energy_penalty,
                        grad_log_likelihood, grad_prior)
from . import priors as pr
from .lattice import build_laplacian, build_periodic_invcov, build_rbf_invcov

LINESEARCH_ETA0 = 1.0
LINESEARCH_SHRINK = 0.5
LINESEARCH_C = 1e-4
LINESEARCH_MAX_BACKTRACKS = 40

PRECOND_RIDGE = 1e-10
JITTER_BASE = 1e-8
MAX_JITTER_RETRIES = 3

# rng stream ids, one per independent consumer of the run seed
STREAM_SAMPLING = 0
STREAM_INIT_ANNEAL = 1
STREAM_JITTER = 2
STREAM_FIELD_ANNEAL = 3  # plus the running anneal index


class StalledStepError(RuntimeError):
    """Line search could not find an acceptable step."""


class ReconstructionError(RuntimeError):
    """A reconstruction failed numerically; carries the partial trace."""

    def __init__(self, message: str, trace):
        self.trace = list(trace)
        super().__init__(message)


@dataclass
class TracePoint:
    iteration: int
    value: float
    grad_norm: float
    mu: float
    nu: float
    event: str = ""


@dataclass
class IterationState:
    v: np.ndarray
    eta: float
    iteration: int
    value: float
    grad_norm: float
    converged: bool = False


def line_search(value_fn, v, direction, slope, f0,
                eta0: float = LINESEARCH_ETA0,
                shrink: float = LINESEARCH_SHRINK,
                c: float = LINESEARCH_C,
                max_backtracks: int = LINESEARCH_MAX_BACKTRACKS):
    """Backtracking Armijo search on the negative log posterior.

    `slope` is the ascent derivative <g, d> of the log posterior (so the
    directional derivative of F along d is -slope; it must be positive).
    Returns (eta, F(v + eta d)) with F_new <= f0 - c * eta * slope.
    """
    if not slope > 0.0:
        raise StalledStepError(
            f"direction is not an ascent direction (slope {slope:g})")
    eta = eta0
    for _ in range(max_backtracks + 1):
        f_new = value_fn(v + eta * direction)
        if f_new <= f0 - c * eta * slope:
            return eta, f_new
        eta *= shrink
    raise StalledStepError(
        f"no acceptable step within {max_backtracks} backtracks")


class Preconditioner:
    """Solve A d = g on the unconstrained sites; d = 0 on constrained ones."""

    def __init__(self, matrix: np.ndarray | None, free: np.ndarray,
                 ridge: float = PRECOND_RIDGE):
        self.free = free
        self.kind = "identity" if matrix is None else "k0"
        self._cho = None
        if matrix is not None:
            a = matrix[np.ix_(free, free)] + ridge * np.eye(int(free.sum()))
            self._cho = cho_factor(a)

    def solve(self, g: np.ndarray) -> np.ndarray:
        d = np.zeros_like(g)
        if self._cho is None:
            d[self.free] = g[self.free]
        else:
            d[self.free] = cho_solve(self._cho, g[self.free])
        return d


class MapObjective:
    """F(v) and its ascent gradient for fixed data, prior, and penalty."""

    def __init__(self, positions: np.ndarray, prior, mu: float, kappa: float,
                 mass: float, beta: float, free: np.ndarray):
        self.positions = np.asarray(positions, dtype=int)
        self.prior = prior
        self.mu = float(mu)
        self.kappa = float(kappa)
        self.beta = float(beta)
        self.free = free
        n = free.size
        self._h0 = build_hamiltonian(np.zeros(n), mass)
        self._needs_ensemble = self.positions.size > 0 or self.mu > 0.0
        self._cache: dict[bytes, object] = {}

    def ensemble(self, v: np.ndarray):
        key = v.tobytes()
        ens = self._cache.get(key)
        if ens is None:
            h = self._h0.copy()
            h[np.diag_indices_from(h)] += v
            ens = diagonalize(h, self.beta)
            if len(self._cache) >= 4:
                self._cache.clear()
            self._cache[key] = ens
        return ens

    def value(self, v: np.ndarray) -> float:
        f = self.prior.energy(v)
        if self._needs_ensemble:
            ens = self.ensemble(v)
            if self.positions.size:
                rho = likelihood_density(ens)
                counts = np.bincount(self.positions, minlength=rho.size)
                hit = counts > 0
                if np.any(rho[hit] <= 0.0):
                    return float("inf")
                f -= float(np.sum(counts[hit] * np.log(rho[hit])))
            if self.mu > 0.0:
                f += 0.5 * self.mu * (average_energy(ens) - self.kappa) ** 2
        return f

    def ascent_gradient(self, v: np.ndarray) -> np.ndarray:
        g = -grad_prior(self.prior, v).gradient
        if self._needs_ensemble:
            ens = self.ensemble(v)
            if self.positions.size:
                g += grad_log_likelihood(ens, self.positions).gradient
            if self.mu > 0.0:
                g -= grad_energy_penalty(ens, self.mu, self.kappa).gradient
        g[~self.free] = 0.0
        return g


def map_step(state: IterationState, objective: MapObjective,
             precond: Preconditioner, tol: float = 0.0) -> IterationState:
    """One preconditioned ascent step with Armijo backtracking.

    Returns the state unchanged (flagged converged) once the preconditioned
    gradient norm sqrt(<g, A^{-1} g>) drops to `tol`.
    """
    g = objective.ascent_gradient(state.v)
    d = precond.solve(g)
    slope = float(g @ d)
    pg = math.sqrt(max(slope, 0.0))
    if pg <= tol:
        return replace(state, grad_norm=pg, converged=True)
    f0 = state.value if np.isfinite(state.value) else objective.value(state.v)
    eta, f_new = line_search(objective.value, state.v, d, slope, f0)
    return IterationState(v=state.v + eta * d, eta=eta,
                          iteration=state.iteration + 1, value=f_new,
                          grad_norm=pg)


# ---------------------------------------------------------------------------
# annealing

def metropolis_accept(delta_e: float, beta_ann: float, u: float) -> bool:
    """Accept when Delta E <= 0 or u < exp(-beta_ann * Delta E)."""
    if delta_e <= 0.0:
        return True
    return u < math.exp(-beta_ann * delta_e)


@dataclass
class AnnealSchedule:
    """Geometric cooling from t_initial to t_final (inclusive)."""

    t_initial: float = 1.0
    t_final: float = 1e-3
    cooling: float = 0.95
    moves_per_temp: int = 0  # 0 means 50 * n

    def temperatures(self):
        if not np.isfinite(self.t_initial):
            yield self.t_initial
            return
        if not (0.0 < self.cooling < 1.0):
            raise ValueError(f"cooling must be in (0, 1), got {self.cooling}")
        t = self.t_initial
        while t >= self.t_final:
            yield t
            if self.t_initial == self.t_final:
                return
            t *= self.cooling


@dataclass
class AnnealResult:
    field: np.ndarray
    energy: float
    n_moves: int
    n_accepted: int


def anneal_binary_field(initial, energy_fn, schedule: AnnealSchedule,
                        rng: CounterRng) -> AnnealResult:
    """Metropolis segment-flip annealing of a binary field.

    Tracks and returns the best configuration visited, whose energy is
    recomputed once at the end (the incremental running energy only
    accumulates rounding).
    """
    b = np.asarray(initial, dtype=float).copy()
    if not np.all((b == 0.0) | (b == 1.0)):
        raise ValueError("initial field must be binary (0/1)")
    n = b.size
    moves = schedule.moves_per_temp if schedule.moves_per_temp else 50 * n
    e = float(energy_fn(b))
    best, e_best = b.copy(), e
    n_moves = 0
    n_accepted = 0
    for t in schedule.temperatures():
        beta_ann = 0.0 if np.isinf(t) else 1.0 / t
        for _ in range(moves):
            while True:
                i = rng.randint(0, n + 1)
                j = rng.randint(0, n + 1)
                if i != j:
                    break
            x1, x2 = (i, j) if i < j else (j, i)
            trial = b.copy()
            trial[x1:x2] = 1.0 - trial[x1:x2]
            delta = float(energy_fn(trial)) - e
            u = rng.uniform()
            n_moves += 1
            if metropolis_accept(delta, beta_ann, u):
                b, e = trial, e + delta
                n_accepted += 1
                if e < e_best:
                    best, e_best = b.copy(), e
    return AnnealResult(field=best, energy=float(energy_fn(best)),
                        n_moves=n_moves, n_accepted=n_accepted)


# ---------------------------------------------------------------------------
# full reconstruction

@dataclass
class ReconstructionResult:
    config: object
    v_true: np.ndarray
    v_star: np.ndarray
    template: np.ndarray | None
    field: np.ndarray | None
    p_true: np.ndarray
    p_emp: np.ndarray
    p_rec: np.ndarray
    samples: SampleSet
    trace: list
    diagnostics: dict
    converged: bool
    reason: str
    iterations: int


def rmse(a: np.ndarray, b: np.ndarray, idx=None) -> float:
    d = np.asarray(a, float) - np.asarray(b, float)
    if idx is not None:
        d = d[idx]
    return float(np.sqrt(np.mean(d ** 2)))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) = sum_{p > 0} p ln(p/q); +inf if q vanishes where p does not."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] <= 0.0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _geometric_ramp(final: float, stages: int, span: float) -> list[float]:
    """`stages` values rising geometrically from final/span to final."""
    if stages <= 1 or span <= 1.0:
        return [final]
    return [final * span ** (-(stages - 1 - k) / (stages - 1))
            for k in range(stages)]


def _templates_from_config(config, n: int):
    """Resolve the template selection to (v0, pair) arrays."""
    pc = config.prior
    if pc.template == "zero":
        return np.zeros(n), None
    if pc.template == "periodic":
        v0 = pr.periodic_template(pc.template_amplitude, pc.template_period,
                                  pc.template_phase, n)
        return v0, None
    if pc.template == "two-band":
        v1, v2 = two_band_reference_potentials(n)
        return v1, (v1, v2)
    raise ValueError(f"unknown template {pc.template!r}")


def prior_quadratic_matrix(config, n: int) -> np.ndarray | None:
    """The canonical quadratic operator of the configured prior (for A)."""
    pc = config.prior
    neg_lap = build_laplacian(n)
    if pc.variant == "gaussian":
        if pc.kernel == "rbf":
            return pc.lam * build_rbf_invcov(n, pc.rbf_sigma)
        return pc.lam * neg_lap
    if pc.variant == "periodic-cov":
        return build_periodic_invcov(n, int(pc.theta), pc.lam, pc.gamma)
    if pc.variant == "switch-fixed":
        return pc.lam1 * np.eye(n) + pc.lam2 * neg_lap
    if pc.variant == "switch-two":
        return 0.5 * (pc.lam1 + pc.lam2) * neg_lap
    if pc.variant == "hyperfield-mix":
        return pc.lam1 * np.eye(n) + pc.lam2 * neg_lap
    if pc.variant == "cup":
        return None
    raise ValueError(f"unknown prior variant {pc.variant!r}")


def build_prior(config, n: int, nu: float | None = None,
                theta: np.ndarray | None = None):
    """Instantiate the configured prior model (nu/theta override the config)."""
    pc = config.prior
    v0, pair = _templates_from_config(config, n)
    nu = pc.nu if nu is None else nu
    neg_lap = build_laplacian(n)
    if pc.variant == "gaussian":
        k0 = pc.lam * (build_rbf_invcov(n, pc.rbf_sigma) if pc.kernel == "rbf"
                       else neg_lap)
        return pr.GaussianPrior(k0=k0, v0=v0)
    if pc.variant == "periodic-cov":
        k0 = build_periodic_invcov(n, int(pc.theta), pc.lam, pc.gamma)
        return pr.GaussianPrior(k0=k0, v0=v0)
    if pc.variant == "switch-fixed":
        return pr.SwitchFixedReferencePrior(v0=v0, lam1=pc.lam1, lam2=pc.lam2,
                                            nu=nu, vartheta=pc.vartheta,
                                            neg_lap=neg_lap)
    if pc.variant == "switch-two":
        if pair is None:
            raise ValueError("switch-two prior requires template = two-band")
        from .lattice import build_shift_difference
        return pr.SwitchTwoReferencesPrior(
            v1=pair[0], v2=pair[1], lam1=pc.lam1, lam2=pc.lam2, nu=nu,
            vartheta=pc.vartheta, w=build_shift_difference(n, 1), tau=pc.tau)
    if pc.variant == "hyperfield-mix":
        if pair is None:
            raise ValueError("hyperfield-mix prior requires template = two-band")
        if theta is None:
            theta = np.zeros(n)
        return pr.HyperfieldMixPrior(v1=pair[0], v2=pair[1], lam1=pc.lam1,
                                     lam2=pc.lam2, tau=pc.tau, theta=theta,
                                     neg_lap=neg_lap)
    if pc.variant == "cup":
        from .lattice import build_shift_difference
        return pr.CupPrior(w=build_shift_difference(n, 1), v0=v0, a=pc.cup_a,
                           b=pc.cup_b, gamma=pc.cup_gamma, x0=pc.cup_x0)
    raise ValueError(f"unknown prior variant {pc.variant!r}")


def _anneal_schedule(config, n: int) -> AnnealSchedule:
    oc = config.optimizer
    return AnnealSchedule(t_initial=oc.anneal_t_initial,
                          t_final=oc.anneal_t_final,
                          cooling=oc.anneal_cooling,
                          moves_per_temp=oc.anneal_moves_per_site * n)


def _anneal_mix_initial(config, mass, beta, positions, pair, n, tau):
    """Anneal a binary mix c(x): v_c = (1-c) v1 + c v2, scored by the data
    likelihood plus the discontinuity-count prior on c."""
    v1, v2 = pair
    counts = np.bincount(positions, minlength=n).astype(float)
    hit = counts > 0

    def energy(c):
        v_c = (1.0 - c) * v1 + c * v2
        ens = diagonalize(build_hamiltonian(v_c, mass), beta)
        rho = likelihood_density(ens)
        e = -float(np.sum(counts[hit] * np.log(rho[hit])))
        return e + 0.5 * tau * pr.count_discontinuities(c)

    rng = CounterRng(config.run.seed, stream=STREAM_INIT_ANNEAL)
    res = anneal_binary_field(np.zeros(n), energy, _anneal_schedule(config, n),
                              rng)
    return res.field


def _stage_list(config) -> list[tuple[float, float]]:
    """Sequence of (mu, nu) continuation stages."""
    oc = config.optimizer
    mu_final = config.penalty.mu
    mus = _geometric_ramp(mu_final, oc.mu_stages, 1000.0) if mu_final > 0 \
        else [0.0]
    if config.prior.nu_policy == "ramp":
        nus = _geometric_ramp(oc.nu_final, oc.nu_stages, oc.nu_final)
        nus.append(float("inf"))
    else:
        nus = [config.prior.nu]
    stages = [(mu, nus[0]) for mu in mus]
    stages.extend((mus[-1], nu) for nu in nus[1:])
    return stages


def reconstruct(config, initial: np.ndarray | None = None) -> ReconstructionResult:
    """Run the full MAP reconstruction described by `config`.

    `initial` supplies the starting potential for the file/chained initial
    guesses, which the caller must resolve; the built-in guesses (zero,
    template, piecewise, anneal-mix) are constructed here.
    """
    n = config.lattice.n
    mass = config.ensemble.mass
    beta = config.ensemble.beta
    oc = config.optimizer
    free = np.ones(n, dtype=bool)
    free[list(config.lattice.boundary)] = False

    v_true = true_potential(n)
    ens_true = diagonalize(build_hamiltonian(v_true, mass), beta)
    p_true = likelihood_density(ens_true)
    u_true = average_energy(ens_true)
    kappa = u_true if config.penalty.kappa is None else config.penalty.kappa

    if config.data.source == "file":
        samples = read_samples(config.data.file)
        if samples.n_sites != n:
            raise ValueError(f"sample file has N={samples.n_sites}, config n={n}")
    else:
        samples = sample_positions(p_true, config.data.n, config.run.seed,
                                   stream=STREAM_SAMPLING)
    # Zero samples is legal (pure prior mode: the MAP is the template).
    p_emp = (np.zeros(n) if samples.positions.size == 0
             else empirical_density(samples))
    positions = samples.positions

    v0, pair = _templates_from_config(config, n)
    hyper = config.prior.variant == "hyperfield-mix"
    theta = np.zeros(n) if hyper else None

    guess = config.init.guess
    if guess == "zero":
        v = np.zeros(n)
    elif guess == "template":
        v = v0.copy()
    elif guess == "piecewise":
        v = v0.copy()
        v[impurity_band(n)] = 0.0
    elif guess == "anneal-mix":
        if pair is None:
            raise ValueError("anneal-mix initial guess requires template = two-band")
        c = _anneal_mix_initial(config, mass, beta, positions, pair, n,
                                config.prior.tau)
        v = (1.0 - c) * pair[0] + c * pair[1]
        if hyper:
            theta = c.copy()
    elif guess.startswith(("chain:", "file:")):
        if initial is None:
            raise ValueError(f"initial guess {guess!r} must be resolved by the caller")
        v = np.asarray(initial, dtype=float).copy()
    else:
        raise ValueError(f"unknown initial guess {guess!r}")
    v[~free] = 0.0

    jitter_rng = CounterRng(config.run.seed, stream=STREAM_JITTER)
    anneal_index = 0
    stages = _stage_list(config)
    trace: list[TracePoint] = []
    total = 0
    jitters = 0
    converged = False
    reason = "max-iterations"

    def theta_anneal(prior, v):
        nonlocal anneal_index
        rng = CounterRng(config.run.seed,
                         stream=STREAM_FIELD_ANNEAL + anneal_index)
        anneal_index += 1
        res = anneal_binary_field(prior.theta,
                                  lambda th: prior.theta_energy(v, th),
                                  _anneal_schedule(config, n), rng)
        return res.field

    prior = None
    objective = None
    try:
        for si, (mu, nu) in enumerate(stages):
            final_stage = si == len(stages) - 1
            prior = build_prior(config, n, nu=nu, theta=theta)
            objective = MapObjective(positions, prior, mu, kappa, mass, beta, free)
            precond_matrix = prior_quadratic_matrix(config, n) \
                if oc.preconditioner == "k0" else None
            precond = Preconditioner(precond_matrix, free)
            stage_tol = oc.tol if final_stage else max(oc.tol, oc.stage_tol)
            f = objective.value(v)
            trace.append(TracePoint(total, f, float("nan"), mu, nu, event="stage"))
            budget = oc.max_iter - total if final_stage \
                else min(oc.stage_max_iter, oc.max_iter - total)
            it_in_stage = 0
            since_anneal = 0
            while it_in_stage < budget and total < oc.max_iter:
                g = None
                for attempt in range(MAX_JITTER_RETRIES + 1):
                    try:
                        g = objective.ascent_gradient(v)
                        break
                    except DegenerateSpectrumError:
                        if attempt == MAX_JITTER_RETRIES:
                            raise
                        amp = JITTER_BASE * 10.0 ** attempt
                        jit = (jitter_rng.uniforms(n) * 2.0 - 1.0) * amp
                        jit[~free] = 0.0
                        v = v + jit
                        jitters += 1
                        f = objective.value(v)
                        trace.append(TracePoint(total, f, float("nan"), mu, nu,
                                                event="jitter"))
                d = precond.solve(g)
                slope = float(g @ d)
                pg = math.sqrt(max(slope, 0.0))
                if pg <= stage_tol:
                    if hyper:
                        new_theta = theta_anneal(prior, v)
                        if not np.array_equal(new_theta, theta):
                            theta = new_theta
                            prior = prior.replace_theta(theta)
                            objective = MapObjective(positions, prior, mu, kappa,
                                                     mass, beta, free)
                            f = objective.value(v)
                            since_anneal = 0
                            trace.append(TracePoint(total, f, pg, mu, nu,
                                                    event="field-anneal"))
                            continue
                    if final_stage:
                        converged = True
                        reason = "gradient-tolerance"
                    trace.append(TracePoint(total, f, pg, mu, nu,
                                            event="converged" if final_stage
                                            else "stage-converged"))
                    break
                try:
                    eta, f_new = line_search(objective.value, v, d, slope, f)
                except StalledStepError:
                    if precond.kind == "k0":
                        precond = Preconditioner(None, free)
                        trace.append(TracePoint(total, f, pg, mu, nu,
                                                event="precond-identity"))
                        continue
                    if final_stage:
                        reason = "stalled"
                    trace.append(TracePoint(total, f, pg, mu, nu, event="stalled"))
                    break
                v = v + eta * d
                f = f_new
                total += 1
                it_in_stage += 1
                since_anneal += 1
                trace.append(TracePoint(total, f, pg, mu, nu))
                if hyper and since_anneal >= oc.anneal_cadence:
                    new_theta = theta_anneal(prior, v)
                    since_anneal = 0
                    if not np.array_equal(new_theta, theta):
                        theta = new_theta
                        prior = prior.replace_theta(theta)
                        objective = MapObjective(positions, prior, mu, kappa, mass,
                                                 beta, free)
                        f = objective.value(v)
                        trace.append(TracePoint(total, f, float("nan"), mu, nu,
                                                event="field-anneal"))

    except (DegenerateSpectrumError, np.linalg.LinAlgError) as exc:
        raise ReconstructionError(str(exc), trace) from exc
    ens_star = diagonalize(build_hamiltonian(v, mass), beta)
    p_rec = likelihood_density(ens_star)
    u_star = average_energy(ens_star)
    field = prior.field(v) if prior is not None else None
    reg = regular_band(n)
    imp = impurity_band(n)
    diagnostics = {
        "u_true": u_true,
        "kappa": kappa,
        "u_star": u_star,
        "abs_u_minus_kappa": abs(u_star - kappa),
        "rmse_full": rmse(v, v_true),
        "rmse_regular_band": rmse(v, v_true, reg),
        "rmse_impurity_band": rmse(v, v_true, imp),
        "kl_emp_rec": kl_divergence(p_emp, p_rec),
        "kl_emp_true": kl_divergence(p_emp, p_true),
        "neg_log_posterior": objective.value(v) if objective is not None
                             else float("nan"),
        "log_z": ens_star.log_z,
        "iterations": total,
        "jitter_retries": jitters,
        "converged": converged,
        "reason": reason,
    }
    if pair is not None:
        template_out = pair[0] if field is None else \
            (1.0 - field) * pair[0] + field * pair[1]
    else:
        template_out = v0
    return ReconstructionResult(
        config=config, v_true=v_true, v_star=v, template=template_out,
        field=field, p_true=p_true, p_emp=p_emp, p_rec=p_rec, samples=samples,
        trace=trace, diagnostics=diagnostics, converged=converged,
        reason=reason, iterations=total)
