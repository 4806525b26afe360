"""
Tests for the nonclassicality criteria: moments, R, Schwarz and higher-order
ratios, marginal estimators and the assembled report.
"""

import numpy as np
import pytest

from models import Distribution1D, JointHistogram, ModeParams, TwbModel
from services.criteria import (
    _verdict,
    correlation_coefficient,
    eta_from_R,
    evaluate_criteria,
    exact_criteria,
    exact_noise_reduction,
    fano,
    higher_order_H,
    joint_moments,
    marginal,
    mode_estimate,
    noise_reduction,
    noise_reduction_theory,
    schwarz_ratio,
)
from services.distributions import detected_twb_pmf, mandel_rice_vector, poisson_reference
from services.errors import (
    ClassicalDataError,
    EmptyDataError,
    ParameterDomainError,
    SubPoissonianMarginalError,
)
from services.simulator import _draw_mode_counts, run_experiment
from services.streams import substream

VACUUM = ModeParams(mu=1, b=0)

FITTED_MODEL = TwbModel(
    paired=ModeParams(mu=31, b=0.13),
    noise_s=ModeParams(mu=1.2e-3, b=24),
    noise_i=ModeParams(mu=5.5e-3, b=13),
    eta_s=0.147,
    eta_i=0.150,
)

NOISELESS_MODEL = FITTED_MODEL.model_copy(update={"noise_s": VACUUM, "noise_i": VACUUM})


def shots_histogram(pairs):
    m_s, m_i = (np.array(column) for column in zip(*pairs))
    return JointHistogram.from_arrays(m_s, m_i)


def multithermal(mean: float, mu: float, n_max: int = 80) -> Distribution1D:
    return Distribution1D(mandel_rice_vector(n_max, ModeParams(mu=mu, b=mean / mu)))


@pytest.fixture(scope="module")
def fitted_sample():
    return run_experiment(FITTED_MODEL, 20_000, seed=31)


# Moments and two-arm statistics

def test_joint_moment_of_single_shot():
    h = shots_histogram([(2, 3)])
    assert joint_moments(h, 1, 1) == 6
    assert joint_moments(h, 0, 0) == 1
    assert joint_moments(h, 2, 1) == 12


def test_joint_moment_orders_bounded():
    with pytest.raises(ParameterDomainError):
        joint_moments(shots_histogram([(1, 1)]), 5, 0)


def test_identical_arms():
    h = shots_histogram([(0, 0), (1, 1), (2, 2), (5, 5)])
    assert correlation_coefficient(h) == pytest.approx(1.0)
    assert noise_reduction(h) == 0.0


def test_poisson_reference_is_the_shot_noise_level():
    p = poisson_reference(0.8, 0.8)
    assert exact_noise_reduction(p) == pytest.approx(1.0, abs=1e-8)


def test_noise_reduction_theory_value():
    assert noise_reduction_theory(0.6, 0.6, 0.15, 78) == pytest.approx(0.8514, abs=1e-4)


@pytest.mark.parametrize("m", [0.6, 1.4, 3.1])
@pytest.mark.parametrize("mu", [78, 112, 295])
def test_noise_reduction_theory_symmetric_means(m, mu):
    assert noise_reduction_theory(m, m, 0.15, mu) == pytest.approx(1 - 0.15 + m ** 3 / (2 * mu), abs=1e-12)


def test_noise_reduction_theory_domain():
    with pytest.raises(ParameterDomainError):
        noise_reduction_theory(0, 0, 0.1, 10)
    with pytest.raises(ParameterDomainError):
        noise_reduction_theory(1, 1, 1.5, 10)
    with pytest.raises(ParameterDomainError):
        noise_reduction_theory(1, 1, 0.5, 0)


def test_higher_order_of_unit_poisson_is_one():
    report = exact_criteria(poisson_reference(1.0, 1.0))
    assert report.H == pytest.approx(1.0, abs=1e-6)


def test_schwarz_forms_on_independent_poissons():
    report = exact_criteria(poisson_reference(1.0, 1.0))
    assert report.S == pytest.approx(1.0, abs=1e-6)
    # plain second moments give <m>^2 / <m^2> = 1/2
    assert report.S_raw == pytest.approx(0.5, abs=1e-6)
    assert report.C == pytest.approx(0.0, abs=1e-6)
    assert report.R == pytest.approx(1.0, abs=1e-6)


def test_plain_schwarz_never_exceeds_one(fitted_sample):
    assert schwarz_ratio(fitted_sample, normal_order=False) <= 1.0
    h = shots_histogram([(1, 1), (3, 3)])
    assert schwarz_ratio(h, normal_order=False) == pytest.approx(1.0)


def test_higher_order_is_swap_invariant(fitted_sample):
    swapped = JointHistogram(fitted_sample.counts.T.copy(), fitted_sample.shots)
    assert higher_order_H(swapped) == pytest.approx(higher_order_H(fitted_sample), rel=1e-12)
    assert noise_reduction(swapped) == pytest.approx(noise_reduction(fitted_sample), rel=1e-12)


# Marginal estimators

def test_marginal_arms():
    h = shots_histogram([(0, 2), (1, 2), (1, 0), (3, 2)])
    np.testing.assert_allclose(marginal(h, "s").probs, [0.25, 0.5, 0.0, 0.25])
    np.testing.assert_allclose(marginal(h, "i").probs, [0.25, 0.0, 0.75])
    with pytest.raises(ParameterDomainError):
        marginal(h, "x")


def test_fano_factor_of_multithermal():
    assert fano(multithermal(1.42, 112)) == pytest.approx(1 + 1.42 / 112, rel=1e-9)
    assert fano(multithermal(1.42, 112)) == pytest.approx(1.0127, abs=1e-4)


def test_mode_estimate_exact():
    assert mode_estimate(multithermal(0.6, 78)) == pytest.approx(78, rel=1e-6)


def test_mode_estimate_needs_super_poissonian_marginal():
    with pytest.raises(SubPoissonianMarginalError):
        mode_estimate(Distribution1D(np.array([0.25, 0.5, 0.25])))
    with pytest.raises(SubPoissonianMarginalError):
        mode_estimate(Distribution1D(np.array([0.0, 0.0, 1.0])))


def test_mode_estimate_from_samples():
    """Large mode numbers are only weakly identified; this needs many draws"""
    draws = _draw_mode_counts(ModeParams(mu=295, b=3.14 / 295), 10_000_000, substream(295, 0))
    estimate = mode_estimate(Distribution1D(np.bincount(draws) / draws.size))
    assert estimate == pytest.approx(295, rel=0.15)


def test_efficiency_from_noise_reduction():
    model = NOISELESS_MODEL.with_efficiencies(0.17, 0.17)
    h = run_experiment(model, 200_000, seed=17)
    assert eta_from_R(h) == pytest.approx(0.17, abs=0.015)


def test_efficiency_needs_sub_shot_noise():
    thermal = ModeParams(mu=1, b=1.0)
    model = TwbModel(paired=ModeParams(mu=1, b=0), noise_s=thermal, noise_i=thermal)
    with pytest.raises(ClassicalDataError):
        eta_from_R(run_experiment(model, 5000, seed=1))


# Assembled reports

def test_fitted_model_is_nonclassical_in_R_and_S():
    report = exact_criteria(detected_twb_pmf(FITTED_MODEL))
    assert report.shots == 0
    assert report.flags.R and report.flags.S
    assert report.R == pytest.approx(0.883, abs=0.005)
    assert report.S == pytest.approx(1.18, abs=0.03)
    assert report.C == pytest.approx(0.158, abs=0.01)


def test_noiseless_twin_beam_raises_every_flag():
    report = exact_criteria(detected_twb_pmf(NOISELESS_MODEL))
    assert report.flags.R and report.flags.S and report.flags.H
    assert set(report.verdicts.values()) == {"nonclassical"}


def test_report_fields(fitted_sample):
    report = evaluate_criteria(fitted_sample, eta=0.15)
    assert report.shots == fitted_sample.shots
    assert report.mean_s == pytest.approx(0.60, abs=0.03)
    assert report.eta_est == pytest.approx(1 - report.R)
    assert report.R_theory is not None
    assert report.fano_s > 1 and report.fano_i > 1
    assert report.standard_errors is None
    assert report.sub_shot_noise


def test_constant_shots_leave_correlation_undefined():
    report = evaluate_criteria(shots_histogram([(2, 2)] * 10))
    assert report.C is None
    assert report.R == 0.0
    assert report.S == pytest.approx(2.0)
    assert report.H == pytest.approx(2.0)
    assert any(note.startswith("C undefined") for note in report.notes)
    assert any("mode estimate of signal" in note for note in report.notes)


def test_empty_histogram_rejected():
    with pytest.raises(EmptyDataError):
        evaluate_criteria(JointHistogram(np.zeros((1, 1), dtype=np.int64), 0))


def test_bootstrap_is_deterministic(fitted_sample):
    first = evaluate_criteria(fitted_sample, bootstrap=20, seed=3, max_workers=1)
    second = evaluate_criteria(fitted_sample, bootstrap=20, seed=3, max_workers=4)
    third = evaluate_criteria(fitted_sample, bootstrap=20, seed=4)
    assert first.standard_errors == second.standard_errors
    assert first.standard_errors != third.standard_errors
    assert first.standard_errors.resamples == 20
    assert 0 < first.standard_errors.R < 0.05


def test_bootstrap_needs_two_resamples(fitted_sample):
    with pytest.raises(ParameterDomainError):
        evaluate_criteria(fitted_sample, bootstrap=1)


def test_verdicts():
    assert _verdict(0.8, above_is_nonclassical=False) == "nonclassical"
    assert _verdict(1.2, above_is_nonclassical=False) == "classical"
    assert _verdict(1.2, above_is_nonclassical=True) == "nonclassical"
    assert _verdict(1.0, above_is_nonclassical=True) == "inconclusive"
    assert _verdict(None, above_is_nonclassical=True) == "inconclusive"
    # within one standard error of the boundary
    assert _verdict(1.02, True, error=0.05) == "inconclusive"
    assert _verdict(1.2, True, error=0.05) == "nonclassical"


def test_bright_twin_beam_passes_the_higher_order_test():
    model = NOISELESS_MODEL.model_copy(update={"paired": ModeParams(mu=31, b=0.645)})
    report = exact_criteria(detected_twb_pmf(model))
    assert report.mean_i == pytest.approx(3.0, abs=0.05)
    assert report.flags.H


def test_sampled_criteria_agree_with_exact_law():
    sampled = evaluate_criteria(run_experiment(FITTED_MODEL, 200_000, seed=20240501), bootstrap=50, seed=1)
    exact = exact_criteria(detected_twb_pmf(FITTED_MODEL))
    errors = sampled.standard_errors
    assert abs(sampled.C - exact.C) < 3 * errors.C
    assert abs(sampled.R - exact.R) < 3 * errors.R
    assert sampled.flags.R and sampled.flags.S
