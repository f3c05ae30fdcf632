import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from accelrb.errors import DomainError, SamplingError
from accelrb.model import (
    Datum,
    ExperimentDesign,
    Mode,
    ModelParams,
    OutOfSupportWarning,
    PriorSpec,
    fidelity_from_p,
    ideal_params,
    in_support,
    log_likelihood,
    log_likelihoods,
    p_from_fidelity,
    support_violations,
    survival_probability,
)

from conftest import PRIOR_MEAN, GATE_STUDY_TRUTH
from strategies import designs, params

REF, INT = Mode.REFERENCE, Mode.INTERLEAVED


class TestSurvivalProbability:
    def test_m_zero_is_a_plus_b(self):
        x = ModelParams(0.7, 0.4, 0.3185, 0.5012)
        assert survival_probability(x, ExperimentDesign(0, REF)) == pytest.approx(0.8197, abs=1e-12)
        assert survival_probability(x, ExperimentDesign(0, INT)) == pytest.approx(0.8197, abs=1e-12)

    def test_gate_study_truth_m1_hand_arithmetic(self):
        x = ModelParams(*GATE_STUDY_TRUTH)
        assert survival_probability(x, ExperimentDesign(1, REF)) == pytest.approx(0.3185 * 0.9957 + 0.5012, abs=1e-15)

    @given(st.floats(-0.5, 0.5), st.floats(0.0, 0.5), st.integers(0, 500))
    def test_ideal_gates_constant(self, A, B, m):
        if A + B < 0:
            A = -B
        x = ModelParams(1.0, 1.0, A, B)
        for mode in (REF, INT):
            assert survival_probability(x, ExperimentDesign(m, mode)) == pytest.approx(A + B, abs=1e-14)

    def test_interleaved_uses_product(self):
        x = ModelParams(0.9, 0.8, 0.4, 0.3)
        assert survival_probability(x, ExperimentDesign(3, INT)) == pytest.approx(0.4 * 0.72**3 + 0.3)
        assert survival_probability(x, ExperimentDesign(3, REF)) == pytest.approx(0.4 * 0.8**3 + 0.3)

    def test_out_of_support_names_constraint(self):
        with pytest.raises(DomainError, match="A"):
            survival_probability(ModelParams(0.95, 0.95, 1.2, 0.5), ExperimentDesign(1))
        with pytest.raises(DomainError, match=r"A\s*\+\s*B"):
            survival_probability(ModelParams(1, 1, 0.6, 0.6), ExperimentDesign(1))

    @given(params(p_lo=0.0, interior=False), designs(m_max=1000))
    def test_always_a_probability(self, x, e):
        q = survival_probability(x, e)
        assert 0.0 <= q <= 1.0


class TestSupport:
    def test_examples(self):
        assert in_support(PRIOR_MEAN)
        assert not in_support((0.95, 0.95, 1.2, 0.5))
        assert not in_support((1, 1, 0.6, 0.6))
        assert support_violations(PRIOR_MEAN) == []

    def test_vectorized(self):
        arr = np.array([PRIOR_MEAN, (0.95, 0.95, 1.2, 0.5), (1, 1, 0.6, 0.6)])
        assert in_support(arr).tolist() == [True, False, False]

    @given(params(p_lo=0.0, interior=False))
    def test_generated_points_in_support(self, x):
        assert in_support(x.as_array())


class TestLikelihood:
    def test_fair_coin(self):
        d = Datum(ExperimentDesign(3), 1, 1)
        assert log_likelihood(ModelParams(0.9, 0.9, 0.0, 0.5), d) == pytest.approx(math.log(0.5))

    def test_certain_event(self):
        d = Datum(ExperimentDesign(7), 10, 10)
        assert log_likelihood(ModelParams(1, 1, 0.5, 0.5), d) == 0.0

    def test_impossible_event_is_minus_inf(self):
        d = Datum(ExperimentDesign(7), 10, 9)
        assert log_likelihood(ModelParams(1, 1, 0.5, 0.5), d) == -np.inf

    def test_gate_study_truth_binomial(self):
        q = 0.3185 * 0.9957 + 0.5012
        d = Datum(ExperimentDesign(1), 2, 1)
        assert log_likelihood(ModelParams(*GATE_STUDY_TRUTH), d) == pytest.approx(math.log(2 * q * (1 - q)), rel=1e-12)

    @given(params(), designs(), st.integers(1, 50), st.data())
    def test_matches_scipy_binom(self, x, e, shots, data):
        from scipy.stats import binom

        k = data.draw(st.integers(0, shots))
        q = survival_probability(x, e)
        assert log_likelihood(x, Datum(e, shots, k)) == pytest.approx(binom.logpmf(k, shots, q), rel=1e-9, abs=1e-9)

    def test_vectorized_matches_scalar(self, rng):
        prior = PriorSpec(ModelParams(*PRIOR_MEAN))
        pts = prior.draw(50, rng)
        d = Datum(ExperimentDesign(20, INT), 30, 12)
        vec = log_likelihoods(pts, d)
        assert np.allclose(vec, [log_likelihood(p, d) for p in pts], rtol=1e-13)


class TestConversions:
    def test_ideal_params(self):
        assert ideal_params(2) == (0.5, 0.5)
        assert ideal_params(4) == (0.75, 0.25)
        A, B = ideal_params(10**6)
        assert A == pytest.approx(1.0, abs=1e-5) and B == pytest.approx(0.0, abs=1e-5)

    def test_p_from_fidelity(self):
        assert p_from_fidelity(1.0, 5) == 1.0
        assert p_from_fidelity(0.5, 2) == 0.0
        assert fidelity_from_p(p_from_fidelity(0.9983, 2), 2) == pytest.approx(0.9983, abs=1e-15)

    def test_negative_p_warns(self):
        with pytest.warns(OutOfSupportWarning):
            assert p_from_fidelity(0.25, 2) < 0

    @given(st.floats(0.5, 1.0), st.integers(2, 64))
    def test_round_trip(self, F, d):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert fidelity_from_p(p_from_fidelity(F, d), d) == pytest.approx(F, abs=1e-12)

    def test_dimension_validated(self):
        with pytest.raises(DomainError):
            ideal_params(1)


class TestTypes:
    def test_design_validation(self):
        with pytest.raises(DomainError):
            ExperimentDesign(-1)
        assert ExperimentDesign(3, "interleaved").interleaved

    def test_datum_validation(self):
        with pytest.raises(DomainError):
            Datum(ExperimentDesign(1), 0, 0)
        with pytest.raises(DomainError):
            Datum(ExperimentDesign(1), 5, 6)

    def test_param_round_trip(self):
        x = ModelParams(*GATE_STUDY_TRUTH)
        assert ModelParams.from_array(x.as_array()) == x


class TestPrior:
    def test_draws_in_support_and_moments(self, rng):
        prior = PriorSpec(ModelParams(*PRIOR_MEAN), (0.01,) * 4)
        draws = prior.draw(4000, rng)
        assert in_support(draws).all()
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - PRIOR_MEAN) < 5 * se)
        assert np.allclose(draws.std(axis=0, ddof=1), 0.01, rtol=0.1)

    def test_point_mass(self, rng):
        prior = PriorSpec(ModelParams(*PRIOR_MEAN), (0.0,) * 4)
        assert prior.is_point_mass
        assert np.all(prior.draw(5, rng) == np.array(PRIOR_MEAN))
        assert np.all(prior.information() == 0)

    def test_mean_outside_support_rejected(self):
        with pytest.raises(DomainError):
            PriorSpec(ModelParams(0.95, 0.95, 1.2, 0.5))

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            PriorSpec(ModelParams(*PRIOR_MEAN), (-0.01, 0.01, 0.01, 0.01))

    def test_acceptance_collapse_raises(self, rng):
        # mean sits on the A + B = 1 face with a wide spread in A and B only
        prior = PriorSpec(ModelParams(1.0, 1.0, 0.5, 0.5), (0.0, 0.0, 5.0, 5.0))
        with pytest.raises(SamplingError):
            prior.draw(100, rng, min_acceptance=0.5)
