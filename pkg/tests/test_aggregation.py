"""Aggregation-weight properties and formula oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coragp import aggregation as agg
from coragp.aggregation import (
    AggregationMode,
    AggregationSettings,
    BoundParams,
    DegenerateWeightsWarning,
    WeightVector,
    aggregate_mean,
    cgp_weights,
    cora_weights,
    correlation_avg,
    correlation_top,
    error_bound,
)


def make_kvecs(rng, n, lengths=None):
    lengths = lengths or [int(rng.integers(3, 12)) for _ in range(n)]
    return {l: rng.uniform(0.0, 1.0, size=lengths[l]) for l in range(n)}


# -- formula oracles ---------------------------------------------------------

def test_correlation_top_oracle(rng):
    for _ in range(50):
        kvec = rng.uniform(0, 1, size=int(rng.integers(2, 15)))
        m_min = int(rng.integers(1, len(kvec) + 1))
        got = correlation_top(kvec, m_min)
        ref = np.sort(kvec)[::-1][:m_min]
        np.testing.assert_allclose(np.sort(got), np.sort(ref), rtol=0, atol=0)


def test_correlation_top_tie_break_prefers_lower_index():
    kvec = np.array([0.5, 0.9, 0.5, 0.1])
    got = correlation_top(kvec, 2)
    # 0.9 plus the first of the tied 0.5 entries (index 1 then index 0)
    np.testing.assert_array_equal(np.sort(got), [0.5, 0.9])


def test_correlation_avg_oracle(rng):
    kvec = rng.uniform(0, 1, size=9)
    assert correlation_avg(kvec) == pytest.approx(sum(kvec) / 9, rel=1e-15)


def gaussian_weight_oracle(norms, sigma_g):
    """Plain transcription of the correlation-to-weight map."""
    s_tilde = sum(norms)
    normalized = [s / s_tilde for s in norms]
    w_bar = max(normalized)
    w = [np.exp(-((z - w_bar) ** 2) / (2 * sigma_g**2)) / (sigma_g * np.sqrt(2 * np.pi))
         for z in normalized]
    return np.array(w) / sum(w)


def test_cora_weights_match_scalar_oracle(rng):
    n = 4
    settings_ = AggregationSettings(mode=AggregationMode.CORA_AVG, sigma_g=0.15)
    kvecs = make_kvecs(rng, n)
    a_row = np.ones(n)
    got = cora_weights(0, kvecs, a_row, settings_)
    norms = [abs(np.mean(kvecs[l])) for l in range(n)]
    np.testing.assert_allclose(got.h, gaussian_weight_oracle(norms, 0.15),
                               rtol=1e-12)


def test_cora_top_weights_match_scalar_oracle(rng):
    n = 3
    settings_ = AggregationSettings(mode=AggregationMode.CORA_TOP, sigma_g=0.2)
    kvecs = make_kvecs(rng, n, lengths=[8, 5, 11])
    a_row = np.ones(n)
    got = cora_weights(1, kvecs, a_row, settings_)
    norms = [np.linalg.norm(np.sort(kvecs[l])[::-1][:5]) for l in range(n)]
    np.testing.assert_allclose(got.h, gaussian_weight_oracle(norms, 0.2),
                               rtol=1e-12)


def test_cgp_weights_are_normalized_inverse_variances():
    variances = {0: 0.2, 1: 0.05, 2: 0.8}
    got = cgp_weights(0, variances, np.ones(3), AggregationSettings())
    inv = np.array([1 / 0.2, 1 / 0.05, 1 / 0.8])
    np.testing.assert_allclose(got.h, inv / inv.sum(), rtol=1e-14)


def test_error_bound_oracle():
    bound = BoundParams(delta=0.05, tau=0.01, domain_diameter=2 * np.sqrt(2),
                        state_dim=2, num_agents=4)
    phi_ref = 2 * 2 * np.log(2 * np.sqrt(2) * np.sqrt(2) / 0.02) \
        - 2 * np.log(0.05 / 4)
    assert bound.phi == pytest.approx(phi_ref, rel=1e-14)
    h = np.array([0.25, 0.75])
    stds = np.array([[0.1, 0.2], [0.3, 0.4]])
    eta, eta_norm = error_bound(WeightVector(h=h), stds, bound)
    ref = 2 * np.sqrt(phi_ref) * (h @ stds)
    np.testing.assert_allclose(eta, ref, rtol=1e-14)
    assert eta_norm == pytest.approx(np.linalg.norm(ref), rel=1e-14)


# -- invariants --------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.data())
def test_weights_form_convex_combination_on_neighborhood(data):
    n = data.draw(st.integers(2, 6))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    mode = data.draw(st.sampled_from(
        [AggregationMode.CORA_AVG, AggregationMode.CORA_TOP]))
    a_row = rng.integers(0, 2, size=n).astype(float)
    i = data.draw(st.integers(0, n - 1))
    a_row[i] = 1.0  # self-loop always present
    kvecs = make_kvecs(rng, n)
    settings_ = AggregationSettings(mode=mode,
                                    sigma_g=float(rng.uniform(0.05, 1.0)))
    w = cora_weights(i, kvecs, a_row, settings_)
    assert np.all(w.h >= 0)
    assert abs(w.h.sum() - 1.0) <= 1e-12
    assert np.all(w.h[a_row == 0] == 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_non_neighbor_data_cannot_influence_weights(seed):
    rng = np.random.default_rng(seed)
    n = 5
    a_row = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
    kvecs = make_kvecs(rng, n)
    settings_ = AggregationSettings(mode=AggregationMode.CORA_AVG)
    base = cora_weights(0, kvecs, a_row, settings_)
    perturbed = dict(kvecs)
    perturbed[2] = rng.uniform(0, 1, size=20)  # non-neighbor changes data
    perturbed[4] = rng.uniform(0, 1, size=3)
    again = cora_weights(0, perturbed, a_row, settings_)
    np.testing.assert_array_equal(base.h, again.h)


def test_single_agent_reduction_is_exact(rng):
    # with a self-loop-only neighborhood every mode returns its own mean
    kvecs = {0: rng.uniform(0, 1, size=7)}
    a_row = np.array([1.0, 0.0, 0.0])
    means = rng.normal(size=(3, 2))
    for mode in (AggregationMode.CORA_AVG, AggregationMode.CORA_TOP):
        w = cora_weights(0, kvecs, a_row, AggregationSettings(mode=mode))
        np.testing.assert_array_equal(w.h, [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(aggregate_mean(w, means), means[0])
    w = cgp_weights(0, {0: 0.3}, a_row, AggregationSettings())
    np.testing.assert_array_equal(w.h, [1.0, 0.0, 0.0])


def test_degenerate_correlations_fall_back_to_uniform():
    kvecs = {0: np.zeros(4), 1: np.zeros(6)}
    a_row = np.array([1.0, 1.0])
    with pytest.warns(DegenerateWeightsWarning):
        w = cora_weights(0, kvecs, a_row,
                         AggregationSettings(mode=AggregationMode.CORA_AVG))
    assert w.degenerate
    np.testing.assert_allclose(w.h, [0.5, 0.5])


def test_aggregate_mean_is_convex_combination(rng):
    means = rng.normal(size=(4, 2))
    h = rng.dirichlet(np.ones(4))
    got = aggregate_mean(WeightVector(h=h), means)
    np.testing.assert_allclose(got, h @ means, rtol=1e-14)


def test_mode_parse_roundtrip_and_errors():
    for mode in AggregationMode:
        assert AggregationMode.parse(mode.value) is mode
    assert AggregationMode.parse("coraavg") is AggregationMode.CORA_AVG
    with pytest.raises(ValueError, match="unknown aggregation mode"):
        AggregationMode.parse("nope")


def test_validation_errors():
    with pytest.raises(ValueError):
        AggregationSettings(sigma_g=0.0)
    with pytest.raises(ValueError):
        BoundParams(delta=1.5)
    with pytest.raises(ValueError):
        BoundParams(tau=-1.0)
    with pytest.raises(ValueError, match="m_min"):
        correlation_top(np.ones(3), 4)
    with pytest.raises(ValueError, match="neighborhood is empty"):
        cora_weights(0, {}, np.zeros(3),
                     AggregationSettings(mode=AggregationMode.CORA_AVG))
