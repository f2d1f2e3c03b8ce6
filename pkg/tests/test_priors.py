"""Prior energies: switching algebra, normalizations, reference potentials."""

import numpy as np
import pytest

from biqm.datagen import (impurity_band, true_potential,
                          two_band_reference_potentials)
from biqm.lattice import (build_laplacian, build_rbf_invcov,
                          build_shift_difference)
from biqm.priors import (AuxMixedPrior, CompositePrior, CupPrior, FilterSpec,
                         GaussianPrior, GlobalMixPrior, HyperfieldMixPrior,
                         HyperfieldPrior, SwitchFixedReferencePrior,
                         SwitchTwoReferencesPrior, aux_prior_energy,
                         auxiliary_field, count_discontinuities, cup_derivative,
                         cup_energy, cup_function, effective_template,
                         filtered_difference, gaussian_energy,
                         log_normalization, local_two_field_effective,
                         local_two_field_energy, local_two_field_quadratic,
                         mixed_field_energy, periodic_template,
                         pseudo_logdet_info, sigmoid, sigmoid_derivative,
                         switch_energy_fixed_reference,
                         switch_energy_two_references, switched_field_energy)

N = 36


# ---------------------------------------------------------------------------
# sigmoid switching function

def test_sigmoid_midpoint_and_formula():
    assert sigmoid(0.0, 3.0) == 0.5
    # sigma(x) = 1 / (1 + exp(-2 nu x))
    for x, nu in ((0.3, 1.0), (-0.2, 5.0), (1.5, 0.5)):
        assert abs(sigmoid(x, nu) - 1.0 / (1.0 + np.exp(-2.0 * nu * x))) <= 1e-15


def test_sigmoid_step_limit_maps_tie_to_one():
    x = np.array([-1.0, -1e-300, 0.0, 1e-300, 1.0])
    assert np.array_equal(sigmoid(x, np.inf), [0.0, 0.0, 1.0, 1.0, 1.0])
    assert np.array_equal(sigmoid_derivative(x, np.inf), np.zeros(5))


def test_sigmoid_derivative_matches_finite_differences():
    h = 1e-6
    for x, nu in ((0.0, 1.0), (0.4, 3.0), (-0.7, 2.0)):
        fd = (sigmoid(x + h, nu) - sigmoid(x - h, nu)) / (2 * h)
        assert abs(sigmoid_derivative(x, nu) - fd) <= 1e-8


def test_sigmoid_sharpens_with_nu():
    vals = [sigmoid(0.1, nu) for nu in (1.0, 10.0, 100.0, 1000.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - 1.0) <= 1e-15


# ---------------------------------------------------------------------------
# filtered differences and templates

def test_filtered_difference_wraps_periodically():
    w = build_shift_difference(6, 1)
    v = np.array([0.0, 1.0, 4.0, 9.0, 16.0, 25.0])
    omega = filtered_difference(w, v, np.zeros(6))
    assert np.array_equal(omega, [1.0, 3.0, 5.0, 7.0, 9.0, -25.0])


def test_energy_identity_half_sum_of_squares():
    rng = np.random.default_rng(2)
    for _ in range(20):
        w = rng.normal(size=(N, N))
        v = rng.normal(size=N)
        v0 = rng.normal(size=N)
        omega = filtered_difference(w, v, v0)
        direct = 0.5 * float(np.sum(omega ** 2))
        assert abs(gaussian_energy(v, v0, w.T @ w) - direct) <= 1e-12 * max(1.0, direct)


def test_periodic_template_pins():
    t = periodic_template(1.0, 6.0, 0.0, 12)
    x = np.arange(1, 13, dtype=float)
    assert np.allclose(t, np.sin(2 * np.pi * x / 6.0), atol=1e-15)
    assert t[5] == pytest.approx(0.0, abs=1e-12)   # x = 6 completes a period
    assert np.array_equal(periodic_template(0.0, 6.0, 0.0, 12), np.zeros(12))
    with pytest.raises(ValueError):
        periodic_template(1.0, 0.0, 0.0, 12)


def test_periodic_template_matches_first_reference_branch():
    v1, _ = two_band_reference_potentials(N)
    assert np.allclose(periodic_template(2.0 / 3.0, 6.0, 0.0, N), v1, atol=1e-15)


# ---------------------------------------------------------------------------
# mixing algebra

def test_mixed_equals_switched_for_binary_fields():
    rng = np.random.default_rng(7)
    for _ in range(50):
        o1 = rng.normal(size=N)
        o2 = rng.normal(size=N)
        b = (rng.random(N) < 0.5).astype(float)
        assert mixed_field_energy(b, o1, o2) == switched_field_energy(b, o1, o2)


def test_mixed_and_switched_differ_for_soft_fields():
    o1 = np.ones(4)
    o2 = -np.ones(4)
    half = np.full(4, 0.5)
    assert mixed_field_energy(half, o1, o2) == 0.0     # cancellation
    assert switched_field_energy(half, o1, o2) == 2.0  # no cancellation


def test_count_discontinuities():
    assert count_discontinuities(np.zeros(10)) == 0
    assert count_discontinuities(np.ones(10)) == 0
    b = np.zeros(N)
    b[list(impurity_band(N))] = 1.0
    assert count_discontinuities(b) == 2
    assert count_discontinuities(np.array([0, 1, 0, 1])) == 3


# ---------------------------------------------------------------------------
# Gaussian normalization integrals

def test_log_normalization_identity_matrix():
    # each of n unit eigenvalues contributes -(1/2) ln(1/2pi)
    assert abs(log_normalization(np.eye(4)) - 2.0 * np.log(2.0 * np.pi)) <= 1e-12


def test_log_normalization_scaling_rule():
    k = build_rbf_invcov(8, 1.0)
    lz1 = log_normalization(k)
    lz2 = log_normalization(2.0 * k)
    assert abs(lz2 - (lz1 - 0.5 * 8 * np.log(2.0))) <= 1e-10


def test_log_normalization_skips_zero_modes():
    lap = build_laplacian(6)  # eigenvalues 0, 1, 1, 3, 3, 4
    want = -0.5 * sum(np.log(lam / (2 * np.pi)) for lam in (1, 1, 3, 3, 4))
    value, rank, n_zero = pseudo_logdet_info(lap)
    assert abs(value - want) <= 1e-10
    assert (rank, n_zero) == (5, 1)
    assert log_normalization(lap) == value


def test_log_normalization_rejects_indefinite_input():
    with pytest.raises(ValueError):
        log_normalization(np.diag([1.0, -1.0]))


def test_effective_template_identity_and_filtering():
    v0t = np.sin(np.linspace(0, 2 * np.pi, 8, endpoint=False))
    v0, k0 = effective_template(v0t, np.zeros((8, 8)))
    assert np.allclose(v0, v0t, atol=1e-14)
    assert np.allclose(k0, np.eye(8), atol=1e-14)
    # eigenmode of K passes attenuated by 1/(1 + lam)
    lap = build_laplacian(8)
    lam, q = np.linalg.eigh(lap)
    mode = q[:, -1]
    v0, _ = effective_template(mode, lap)
    assert np.allclose(v0, mode / (1.0 + lam[-1]), atol=1e-12)


def test_effective_template_energy_differs_by_a_constant():
    rng = np.random.default_rng(9)
    k = build_laplacian(10)
    v0t = rng.normal(size=10)
    v0, k0 = effective_template(v0t, k)

    def original(v):
        return 0.5 * float(np.sum((v - v0t) ** 2)) + 0.5 * float(v @ (k @ v))

    diffs = [original(v) - gaussian_energy(v, v0, k0)
             for v in rng.normal(size=(10, 10))]
    assert np.ptp(diffs) <= 1e-10


# ---------------------------------------------------------------------------
# auxiliary / switching fields

def test_auxiliary_field_formula():
    rng = np.random.default_rng(4)
    v = rng.normal(size=N)
    spec1 = FilterSpec(np.eye(N), np.zeros(N))
    spec2 = FilterSpec(np.eye(N), rng.normal(size=N))
    nu, vartheta = 3.0, 0.2
    o1 = v
    o2 = v - spec2.template
    want = sigmoid(o1 ** 2 - o2 ** 2 - vartheta, nu)
    assert np.allclose(auxiliary_field(v, spec1, spec2, nu, vartheta), want,
                       atol=1e-15)


def test_aux_prior_energy_modes():
    b = np.zeros(N)
    assert aux_prior_energy(b, "count", 2.0) == 0.0
    b[list(impurity_band(N))] = 1.0
    assert aux_prior_energy(b, "count", 2.0) == 2.0          # (tau/2) * N_d, N_d = 2
    w = build_shift_difference(N, 1, periodic=False)
    omega = w @ b
    want = 1.0 * float(np.sum(omega ** 2))                   # (tau/2) |W b|^2
    assert abs(aux_prior_energy(b, "quadratic", 2.0, w_b=w) - want) <= 1e-12
    sig = aux_prior_energy(b, "sigmoid", 2.0, w_b=w, vartheta_b=0.5, nu_b=2.0)
    hand = 1.0 * float(np.sum(sigmoid(omega ** 2 - 0.5, 2.0)))
    assert abs(sig - hand) <= 1e-12
    with pytest.raises(ValueError):
        aux_prior_energy(b, "fancy", 1.0)


def test_switch_fixed_reference_limits():
    rng = np.random.default_rng(6)
    v = rng.normal(size=N)
    v0 = rng.normal(size=N)
    lap = build_laplacian(N)
    smooth = 0.5 * 0.3 * float(v @ (lap @ v))
    # B = 1 everywhere: only the smoothness term remains
    assert abs(switch_energy_fixed_reference(v, v0, np.ones(N), 0.7, 0.3)
               - smooth) <= 1e-12
    # B = 0 everywhere: add the full pinning term
    pin = 0.5 * 0.7 * float(np.sum((v - v0) ** 2))
    assert abs(switch_energy_fixed_reference(v, v0, np.zeros(N), 0.7, 0.3)
               - (smooth + pin)) <= 1e-12


def test_switch_fixed_prior_identifies_the_impurity_region():
    v = true_potential(N)
    v0 = periodic_template(1.0, 6.0, 0.0, N)
    prior = SwitchFixedReferencePrior(v0=v0, lam1=0.2, lam2=0.2, nu=np.inf,
                                      vartheta=0.15, neg_lap=build_laplacian(N))
    b = prior.field(v)
    assert set(np.flatnonzero(b)) <= set(impurity_band(N))
    assert np.sum(b) >= 6
    # energy assembled by hand, term by term
    dev = v - v0
    hand = (0.1 * float(np.sum((1.0 - b) * dev ** 2))
            + 0.1 * float(v @ (build_laplacian(N) @ v)))
    assert abs(prior.energy(v) - hand) <= 1e-12
    sharp = prior.replace_nu(50.0)
    assert sharp.nu == 50.0 and prior.nu == np.inf


def test_switch_two_references_exact_fit_costs_nothing():
    v1, v2 = two_band_reference_potentials(N)
    prior = SwitchTwoReferencesPrior(v1=v1, v2=v2, lam1=1.0, lam2=1.0,
                                     nu=np.inf, vartheta=0.1,
                                     w=build_shift_difference(N, 1))
    assert prior.energy(v1) == 0.0
    assert abs(switch_energy_two_references(v1, v1, v2, prior.field(v1),
                                            1.0, 1.0)) == 0.0


def test_switch_two_references_field_independent_when_branches_agree():
    rng = np.random.default_rng(8)
    v = rng.normal(size=N)
    v1 = rng.normal(size=N)
    w = build_shift_difference(N, 1)
    omega = w @ (v - v1)
    want = 0.5 * 0.4 * float(np.sum(omega ** 2))
    for b in (np.zeros(N), np.ones(N), (rng.random(N) < 0.5).astype(float)):
        got = switch_energy_two_references(v, v1, v1, b, 0.4, 0.4, w=w)
        assert abs(got - want) <= 1e-12


# ---------------------------------------------------------------------------
# prior classes

def test_gaussian_prior_zero_at_template():
    k0 = build_rbf_invcov(N, 1.0)
    v0 = periodic_template(1.0, 6.0, 0.0, N)
    prior = GaussianPrior(k0=k0, v0=v0)
    assert prior.energy(v0) == 0.0
    assert np.allclose(prior.gradient(v0), 0.0, atol=1e-14)
    assert prior.field(v0) is None
    v = v0 + 0.1
    assert np.allclose(prior.gradient(v), k0 @ (v - v0), atol=1e-14)


def test_global_mix_endpoints_reduce_to_components():
    rng = np.random.default_rng(10)
    k1 = build_rbf_invcov(8, 0.5)
    k2 = build_laplacian(8) + np.eye(8)
    v1 = rng.normal(size=8)
    v2 = rng.normal(size=8)
    v = rng.normal(size=8)
    for mode in ("energy", "template"):
        lo = GlobalMixPrior(theta=0.0, k1=k1, v1=v1, k2=k2, v2=v2, mode=mode)
        hi = GlobalMixPrior(theta=1.0, k1=k1, v1=v1, k2=k2, v2=v2, mode=mode)
        assert abs(lo.energy(v) - gaussian_energy(v, v1, k1)) <= 1e-12
        assert abs(hi.energy(v) - gaussian_energy(v, v2, k2)) <= 1e-12


def test_global_mix_modes_differ_by_an_eighth_of_the_gap():
    # with K1 = K2 = I and theta = 1/2 the two conventions differ by the
    # v-independent constant -|v1 - v2|^2 / 8
    rng = np.random.default_rng(11)
    v1 = rng.normal(size=8)
    v2 = rng.normal(size=8)
    i8 = np.eye(8)
    en = GlobalMixPrior(theta=0.5, k1=i8, v1=v1, k2=i8, v2=v2, mode="energy")
    tp = GlobalMixPrior(theta=0.5, k1=i8, v1=v1, k2=i8, v2=v2, mode="template")
    want = -0.125 * float(np.sum((v1 - v2) ** 2))
    for v in rng.normal(size=(5, 8)):
        assert abs((tp.energy(v) - en.energy(v)) - want) <= 1e-12
    with pytest.raises(ValueError):
        GlobalMixPrior(theta=0.5, k1=i8, v1=v1, k2=i8, v2=v2,
                       mode="other").energy(v1)


def test_hyperfield_prior_theta_zero_uses_only_first_filter():
    rng = np.random.default_rng(12)
    spec1 = FilterSpec(build_shift_difference(N, 1), np.zeros(N))
    spec2 = FilterSpec(build_shift_difference(N, 6), rng.normal(size=N))
    prior = HyperfieldPrior(spec1=spec1, spec2=spec2, theta=np.zeros(N))
    v = rng.normal(size=N)
    want = 0.5 * float(np.sum(spec1.omega(v) ** 2))
    assert abs(prior.energy(v) - want) <= 1e-12
    assert np.array_equal(prior.field(v), np.zeros(N))


def test_hyperfield_prior_binary_mixing_is_exact_switching():
    rng = np.random.default_rng(13)
    spec1 = FilterSpec(build_shift_difference(N, 1), np.zeros(N))
    spec2 = FilterSpec(build_shift_difference(N, 1), rng.normal(size=N))
    v = rng.normal(size=N)
    for _ in range(20):
        theta = (rng.random(N) < 0.5).astype(float)
        prior = HyperfieldPrior(spec1=spec1, spec2=spec2, theta=theta)
        o1, o2 = spec1.omega(v), spec2.omega(v)
        assert prior.energy(v) == switched_field_energy(theta, o1, o2)


def test_hyperfield_normalization_constant_for_identical_filters():
    # ln Z_V depends on theta only through the mixed filter; equal filters
    # make it flat, so including it must not change energy differences
    w = build_rbf_invcov(8, 0.6)  # nonsingular filter
    spec1 = FilterSpec(w, np.zeros(8))
    spec2 = FilterSpec(w, np.ones(8))
    rng = np.random.default_rng(14)
    lzs = []
    for _ in range(5):
        theta = rng.random(8)
        on = HyperfieldPrior(spec1, spec2, theta, include_normalization=True)
        off = HyperfieldPrior(spec1, spec2, theta, include_normalization=False)
        lzs.append(on.energy(np.zeros(8)) - off.energy(np.zeros(8)))
    assert np.ptp(lzs) <= 1e-10


def test_hyperfield_replace_theta_returns_fresh_copy():
    spec = FilterSpec(np.eye(4), np.zeros(4))
    p0 = HyperfieldPrior(spec, spec, np.zeros(4))
    p1 = p0.replace_theta(np.ones(4))
    assert np.array_equal(p0.theta, np.zeros(4))
    assert np.array_equal(p1.theta, np.ones(4))


def test_aux_mixed_prior_step_limit_energy():
    # at nu = inf the energy is the switched sum evaluated at the hard field
    rng = np.random.default_rng(15)
    v = rng.normal(size=N)
    spec1 = FilterSpec(np.eye(N), np.zeros(N))
    spec2 = FilterSpec(np.eye(N), rng.normal(size=N))
    prior = AuxMixedPrior(spec1=spec1, spec2=spec2, nu=np.inf, vartheta=0.1)
    b = prior.field(v)
    assert set(np.unique(b)) <= {0.0, 1.0}
    o1, o2 = spec1.omega(v), spec2.omega(v)
    assert prior.energy(v) == mixed_field_energy(b, o1, o2)


def test_aux_mixed_prior_count_penalty_enters_energy():
    rng = np.random.default_rng(16)
    v = rng.normal(size=N)
    spec1 = FilterSpec(np.eye(N), np.zeros(N))
    spec2 = FilterSpec(np.eye(N), rng.normal(size=N))
    base = AuxMixedPrior(spec1=spec1, spec2=spec2, nu=np.inf, vartheta=0.1)
    taued = AuxMixedPrior(spec1=spec1, spec2=spec2, nu=np.inf, vartheta=0.1,
                          eb_mode="count", tau=2.0)
    nd = count_discontinuities(base.field(v))
    assert abs(taued.energy(v) - base.energy(v) - 1.0 * nd) <= 1e-12


def test_hyperfield_mix_prior_templates_and_theta_energy():
    v1, v2 = two_band_reference_potentials(N)
    theta = np.zeros(N)
    theta[list(impurity_band(N))] = 1.0
    prior = HyperfieldMixPrior(v1=v1, v2=v2, lam1=10.0, lam2=1.0, tau=20.0,
                               theta=theta, neg_lap=build_laplacian(N))
    assert np.array_equal(prior.mixed_template(np.zeros(N)), v1)
    assert np.array_equal(prior.mixed_template(np.ones(N)), v2)
    mixed = prior.mixed_template()
    assert np.array_equal(mixed[list(impurity_band(N))],
                          v2[list(impurity_band(N))])
    # at v = mixed template, only smoothness and the count term remain
    want = (0.5 * 1.0 * float(mixed @ (build_laplacian(N) @ mixed))
            + 0.5 * 20.0 * 2)
    assert abs(prior.energy(mixed) - want) <= 1e-12
    # theta_energy drops the smoothness part
    assert abs(prior.theta_energy(mixed, theta) - 0.5 * 20.0 * 2) <= 1e-12
    flat = prior.replace_theta(np.zeros(N))
    assert abs(flat.theta_energy(v1, np.zeros(N))) <= 1e-12
    assert np.array_equal(prior.field(mixed), theta)


# ---------------------------------------------------------------------------
# saturating cup penalty

def test_cup_function_shape():
    a, b, gamma = 5.0, 10.0, 0.7
    assert cup_function(0.0, a, b, gamma) == 0.0
    assert cup_function(b, a, b, gamma) == pytest.approx(a / 2.0, abs=1e-12)
    assert cup_function(-b, a, b, gamma) == pytest.approx(a / 2.0, abs=1e-12)
    assert cup_function(1e6, a, b, gamma) >= 0.99 * a
    t = np.linspace(0.0, 100.0, 300)
    vals = cup_function(t, a, b, gamma)
    assert np.all(np.diff(vals) >= 0.0)
    assert np.allclose(cup_function(t, a, b, gamma),
                       cup_function(-t, a, b, gamma), atol=1e-14)
    # off-center variant
    assert cup_function(3.0, a, b, gamma, x0=3.0) == 0.0


def test_cup_derivative_matches_finite_differences():
    a, b, gamma = 5.0, 10.0, 0.7
    h = 1e-7
    for t in (0.5, 3.0, -8.0, 40.0):
        fd = (cup_function(t + h, a, b, gamma)
              - cup_function(t - h, a, b, gamma)) / (2 * h)
        assert abs(cup_derivative(t, a, b, gamma) - fd) <= 1e-6
    assert cup_derivative(0.0, a, b, gamma) == 0.0


def test_cup_prior_zero_at_reference():
    rng = np.random.default_rng(17)
    v0 = rng.normal(size=N)
    prior = CupPrior(w=build_shift_difference(N, 1), v0=v0, a=5.0, b=10.0,
                     gamma=0.7)
    assert prior.energy(v0) == 0.0
    assert np.allclose(prior.gradient(v0), 0.0, atol=1e-14)
    v = v0 + rng.normal(size=N)
    omega = build_shift_difference(N, 1) @ (v - v0)
    assert abs(prior.energy(v) - cup_energy(omega, 5.0, 10.0, 0.7)) <= 1e-13


# ---------------------------------------------------------------------------
# composition

def test_composite_prior_sums_parts():
    rng = np.random.default_rng(18)
    v = rng.normal(size=N)
    g1 = GaussianPrior(k0=build_laplacian(N), v0=np.zeros(N))
    g2 = GaussianPrior(k0=np.eye(N), v0=rng.normal(size=N))
    comp = CompositePrior(parts=(g1, g2))
    assert abs(comp.energy(v) - g1.energy(v) - g2.energy(v)) <= 1e-12
    assert np.allclose(comp.gradient(v), g1.gradient(v) + g2.gradient(v),
                       atol=1e-14)
    assert comp.field(v) is None
    switching = SwitchFixedReferencePrior(
        v0=np.zeros(N), lam1=0.2, lam2=0.2, nu=np.inf, vartheta=0.15,
        neg_lap=build_laplacian(N))
    comp2 = CompositePrior(parts=(g1, switching))
    assert np.array_equal(comp2.field(v), switching.field(v))


# ---------------------------------------------------------------------------
# per-point two-field machinery

def test_local_two_field_direct_equals_effective_up_to_constant():
    rng = np.random.default_rng(19)
    n = 10
    w1 = build_shift_difference(n, 1)
    w2 = np.eye(n)
    v1 = rng.normal(size=n)
    v2 = rng.normal(size=n)
    theta = (rng.random(n) < 0.5).astype(float)
    theta_p = rng.random(n)
    v0_bar, k0 = local_two_field_effective(theta, theta_p, w1, w2, v1, v2)
    diffs = [local_two_field_energy(v, theta, theta_p, w1, w2, v1, v2)
             - local_two_field_quadratic(v, v0_bar, k0)
             for v in rng.normal(size=(8, n))]
    assert np.ptp(diffs) <= 1e-9
