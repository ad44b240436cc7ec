import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubreg.datagen import (
    COVARIATE_KINDS,
    NOISE_KINDS,
    CovariateFamily,
    DiagnosticError,
    NoiseFamily,
    ScenarioSpec,
    _psi1_norm,
    empirical_second_moment,
    estimate_psi1_constant,
    make_beta_star,
    moment_ratio_diagnostic,
    sample_instance,
)
from hubreg.rng import stream
from hubreg.tuning import ConfigurationError, ProblemShape


def _spec(n=50, d=20, s=4, seed=0, **kw):
    return ScenarioSpec(ProblemShape(n, d, s), seed=seed, **kw)


def test_same_seed_bit_identical():
    a = sample_instance(_spec(seed=42))
    b = sample_instance(_spec(seed=42))
    assert a.data.X.tobytes() == b.data.X.tobytes()
    assert a.data.y.tobytes() == b.data.y.tobytes()
    assert a.beta_star.tobytes() == b.beta_star.tobytes()
    c = sample_instance(_spec(seed=43))
    assert not np.array_equal(a.data.X, c.data.X)


def test_noise_change_leaves_covariates_untouched():
    base = _spec(seed=7, noise=NoiseFamily("gaussian", 1.0))
    other = _spec(seed=7, noise=NoiseFamily("student_t", 3.0, df=4.0))
    a, b = sample_instance(base), sample_instance(other)
    assert a.data.X.tobytes() == b.data.X.tobytes()
    assert a.beta_star.tobytes() == b.beta_star.tobytes()
    assert not np.array_equal(a.xi, b.xi)


@pytest.mark.parametrize("kind", COVARIATE_KINDS)
def test_noiseless_model_exact(kind):
    inst = sample_instance(_spec(seed=3, covariates=CovariateFamily(kind), noise=NoiseFamily("gaussian", 0.0)))
    np.testing.assert_array_equal(inst.xi, 0.0)
    np.testing.assert_array_equal(inst.data.y, inst.data.X @ inst.beta_star)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.data(), st.sampled_from(["all_plus", "alternating", "random"]),
       st.integers(0, 2**64 - 1))
def test_beta_star_sparsity(d, data, rule, seed):
    s = data.draw(st.integers(1, d))
    spec = ScenarioSpec(ProblemShape(10, d, s), beta_magnitude=2.5, beta_sign_rule=rule, seed=seed)
    beta = make_beta_star(spec)
    assert np.count_nonzero(beta) == s
    np.testing.assert_array_equal(np.abs(beta[beta != 0]), 2.5)
    if rule == "all_plus":
        assert np.all(beta >= 0)


def test_alternating_signs():
    beta = make_beta_star(_spec(d=30, s=6, beta_sign_rule="alternating"))
    np.testing.assert_array_equal(beta[beta != 0], [1, -1, 1, -1, 1, -1])


@pytest.mark.parametrize("kind", COVARIATE_KINDS)
def test_isotropy(kind):
    n, d = 200_000, 5
    X = CovariateFamily(kind).sample(stream(11, "covariates"), n, d)
    tol = 6 / math.sqrt(n)
    assert np.max(np.abs(X.mean(axis=0))) <= tol
    # fourth moments differ by family; scale tolerance by the entry's standard deviation
    # E x^4: 3, 24 b^4 = 6, and 8! / 24^2 = 70
    kurt = {"gaussian": 3.0, "laplace_iid": 6.0, "subweibull_half": 70.0}[kind]
    M = empirical_second_moment(X)
    diag_sd = math.sqrt(kurt - 1)
    assert np.max(np.abs(np.diag(M) - 1)) <= tol * diag_sd
    off = M - np.diag(np.diag(M))
    assert np.max(np.abs(off)) <= tol


@pytest.mark.parametrize("kind", NOISE_KINDS)
def test_noise_moments(kind):
    xi = NoiseFamily(kind, 2.0, df=5.0).sample(stream(5, "noise"), 200_000)
    assert abs(xi.mean()) <= 6 * 2.0 / math.sqrt(xi.size)
    assert np.mean(xi**2) == pytest.approx(4.0, rel=0.05)


def test_empirical_second_moment_examples():
    np.testing.assert_array_equal(empirical_second_moment(np.eye(4)), np.eye(4) / 4)
    x = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(empirical_second_moment(x), np.outer(x[0], x[0]))
    X = CovariateFamily("laplace_iid").sample(stream(2, "covariates"), 200_000, 3)
    assert np.max(np.abs(empirical_second_moment(X) - np.eye(3))) <= 0.02
    with pytest.raises(ValueError):
        empirical_second_moment(np.ones(3))


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        NoiseFamily("student_t", 1.0, df=2.0)
    with pytest.raises(ConfigurationError):
        NoiseFamily("gaussian", -1.0)
    with pytest.raises(ConfigurationError):
        CovariateFamily("cauchy")
    with pytest.raises(ConfigurationError):
        _spec(beta_magnitude=0.0)
    with pytest.raises(ConfigurationError):
        _spec(beta_sign_rule="nope")


def test_in_assumption_flag():
    assert CovariateFamily("laplace_iid").in_assumption
    assert not CovariateFamily("subweibull_half").in_assumption


def test_psi1_norm_closed_form_exponential():
    # |X| ~ Exp(b): E exp(|X|/eta) = 1 / (1 - b/eta) = 2 at eta = 2b
    z = stream(0, "probe").standard_exponential(400_000) * 0.5
    assert _psi1_norm(z) == pytest.approx(1.0, rel=0.02)
    with pytest.raises(DiagnosticError):
        _psi1_norm(np.zeros(10))


def test_psi1_laplace_coordinate_direction():
    est = estimate_psi1_constant(CovariateFamily("laplace_iid"), 1, 200_000, 0)
    assert est == pytest.approx(math.sqrt(2), abs=0.03)
    assert est == estimate_psi1_constant(CovariateFamily("laplace_iid"), 1, 200_000, 0)


def test_psi1_gaussian_closed_form():
    # E exp(|Z|/eta) = 2 exp(1/(2 eta^2)) Phi(1/eta); root frozen from scipy brentq
    est = estimate_psi1_constant(CovariateFamily("gaussian"), 1, 200_000, 1)
    assert est == pytest.approx(1.372494991910347, abs=0.02)


@pytest.mark.parametrize("kind, expected, tol", [("gaussian", 3**0.25, 0.01), ("laplace_iid", 6**0.25, 0.02)])
def test_fourth_moment_coordinate_direction(kind, expected, tol):
    rep = moment_ratio_diagnostic(CovariateFamily(kind), 4, 400_000, 1, L_hat=1.0)
    assert rep.ratio == pytest.approx(expected, abs=tol)
    assert rep.bound == 8.0


@pytest.mark.parametrize("p", [4, 6])
def test_moment_inequality_laplace(p):
    rep = moment_ratio_diagnostic(CovariateFamily("laplace_iid"), p, 200_000, 0, directions=10)
    assert rep.ratio <= 1.1 * rep.bound
    assert rep.holds


def test_moment_requires_p_at_least_four():
    with pytest.raises(ValueError):
        moment_ratio_diagnostic(CovariateFamily("gaussian"), 3, 1000, 0)
