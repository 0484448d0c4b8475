import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asqm.errors import DatasetError, RankDeficientWarning, UnderdeterminedError
from asqm.fit import (
    DatasetRow,
    FitObservation,
    aggregate_observations,
    build_system,
    fit,
    observations_from_rows,
    parse_dataset,
    solve_weights,
    write_dataset,
)
from asqm.telemetry import generate_scenarios


def normal_equations(design, rhs):
    """Brute-force oracle: solve (A^T A) x = A^T b by Gaussian elimination."""
    a = [list(map(float, row)) for row in np.asarray(design).T @ np.asarray(design)]
    b = list(map(float, np.asarray(design).T @ np.asarray(rhs)))
    n = len(b)
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        a[col], a[pivot] = a[pivot], a[col]
        b[col], b[pivot] = b[pivot], b[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for c in range(col, n):
                a[r][c] -= f * a[col][c]
            b[r] -= f * b[col]
    x = [0.0] * n
    for r in reversed(range(n)):
        x[r] = (b[r] - sum(a[r][c] * x[c] for c in range(r + 1, n))) / a[r][r]
    return np.array(x)


def corpus_observations(truth, seed=0, media_len=60.0, q_a=4.5596):
    ln_c, d = truth[0], truth[1:]
    obs = []
    for sc in generate_scenarios(seed, media_len):
        feats = sc.summary().features
        mos = math.exp(ln_c + sum(x * w for x, w in zip(feats, d)))
        obs.append(FitObservation(feats, q_a, mos, sc.model_id))
    return obs


class TestBuildSystem:
    def test_segment_a_only_row(self):
        obs = [FitObservation((0.25, 0, 0), 4.5, 3.0)] + [FitObservation((0, 0, 0), 4.5, 4.0)] * 3
        design, rhs = build_system(obs)
        assert design[0].tolist() == [1.0, 0.25, 0.0, 0.0]
        assert rhs[0] == math.log(3.0)

    def test_stall_free_row(self):
        obs = [FitObservation((0, 0, 0), 4.5, 4.2)] * 4
        design, rhs = build_system(obs)
        assert design[0].tolist() == [1.0, 0.0, 0.0, 0.0]
        assert rhs[0] == math.log(4.2)

    def test_all_segment_model_has_full_row(self):
        sc = generate_scenarios(3, 60.0, ["M37"])[0]
        obs = [FitObservation(sc.summary().features, 4.5, 2.0, "M37")] * 4
        design, _ = build_system(obs)
        assert np.all(design[0] != 0)

    def test_zero_impairment_allowed(self):
        obs = [FitObservation((0, 0, 0), 4.5, 4.5)] * 4
        _, rhs = build_system(obs)
        assert rhs[0] == math.log(4.5)

    def test_non_positive_mos_identifies_row(self):
        obs = [FitObservation((0, 0, 0), 4.5, 4.0)] * 2 + [FitObservation((0.1, 0, 0), 4.5, 0.0, "M9")]
        obs += [FitObservation((0, 0, 0), 4.5, 4.0)]
        with pytest.raises(DatasetError, match="row 3") as info:
            build_system(obs)
        assert info.value.row == 3

    def test_too_few_rows(self):
        with pytest.raises(UnderdeterminedError):
            build_system([FitObservation((0, 0, 0), 4.5, 4.0)] * 3)

    def test_negative_feature_rejected(self):
        with pytest.raises(DatasetError):
            FitObservation((-0.1, 0, 0), 4.5, 4.0)


class TestSolve:
    def test_roundtrip_over_impairment_models(self):
        truth = np.array([math.log(4.4), -0.42, -0.27, -0.18])
        design, rhs = build_system(corpus_observations(truth))
        assert design.shape == (53, 4)
        report = solve_weights(design, rhs)
        assert np.max(np.abs(np.array(report.weights.as_vector()) - truth)) < 1e-9
        assert report.residual_rms < 1e-10
        assert report.rank == 4 and not report.rank_deficient
        assert report.weights.calibrated

    def test_intercept_only(self):
        design = np.column_stack([np.ones(6), np.zeros((6, 3))])
        rhs = np.full(6, 1.3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            report = solve_weights(design, rhs)
        assert report.weights.ln_c == pytest.approx(1.3, abs=1e-12)
        assert report.weights.degradation == (0.0, 0.0, 0.0)
        assert report.rank == 1

    def test_rank_deficiency_warns(self):
        design = np.column_stack([np.ones(5), np.arange(5.0), np.zeros(5), np.zeros(5)])
        with pytest.warns(RankDeficientWarning):
            report = solve_weights(design, np.arange(5.0))
        assert report.rank_deficient and math.isinf(report.condition_estimate)

    def test_duplicated_rows_match_normal_equations(self):
        rng = np.random.default_rng(5)
        design = np.column_stack([np.ones(5), rng.uniform(0, 1, (5, 3))])
        rhs = rng.normal(1.2, 0.3, 5)
        single = solve_weights(design, rhs)
        doubled = solve_weights(np.vstack([design, design]), np.concatenate([rhs, rhs]))
        oracle = normal_equations(design, rhs)
        assert np.allclose(single.weights.as_vector(), oracle, atol=1e-10)
        assert np.allclose(doubled.weights.as_vector(), oracle, atol=1e-10)

    def test_noisy_system_matches_oracle_and_is_orthogonal(self):
        rng = np.random.default_rng(11)
        truth = np.array([1.5, -0.4, -0.25, -0.1])
        design, rhs = build_system(corpus_observations(truth, seed=4))
        rhs = rhs + rng.normal(0, 0.05, rhs.shape)
        report = solve_weights(design, rhs)
        x = np.array(report.weights.as_vector())
        assert np.allclose(x, normal_equations(design, rhs), atol=1e-9)
        assert np.max(np.abs(design.T @ (design @ x - rhs))) < 1e-8

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        design, rhs = build_system(corpus_observations([1.4, -0.3, -0.2, -0.1], seed=8))
        rhs = rhs + rng.normal(0, 0.05, rhs.shape)
        perm = rng.permutation(len(rhs))
        a = np.array(solve_weights(design, rhs).weights.as_vector())
        b = np.array(solve_weights(design[perm], rhs[perm]).weights.as_vector())
        assert np.max(np.abs(a - b)) <= 1e-12

    def test_deterministic(self):
        design, rhs = build_system(corpus_observations([1.4, -0.3, -0.2, -0.1], seed=1))
        assert solve_weights(design, rhs) == solve_weights(design.copy(), rhs.copy())

    def test_bad_shapes(self):
        with pytest.raises(DatasetError):
            solve_weights(np.ones((5, 3)), np.ones(5))
        with pytest.raises(UnderdeterminedError):
            solve_weights(np.ones((3, 4)), np.ones(3))
        with pytest.raises(DatasetError):
            solve_weights(np.ones((5, 4)), np.ones(4))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.2, 1.6), st.floats(-1.5, 0.5), st.floats(-1.5, 0.5), st.floats(-1.5, 0.5),
           st.integers(0, 10_000))
    def test_roundtrip_property(self, ln_c, d_a, d_b, d_c, seed):
        truth = np.array([ln_c, d_a, d_b, d_c])
        report = fit(corpus_observations(truth, seed=seed))
        got = np.array(report.weights.as_vector())
        assert np.all(np.abs(got - truth) <= 1e-8 * np.maximum(1.0, np.abs(truth)))


def test_noise_robustness_distribution():
    """Parameter error under sigma=0.05 log-MOS noise over 100 seeded trials (logged, not bounded)."""
    truth = np.array([math.log(4.4), -0.42, -0.27, -0.18])
    design, clean = build_system(corpus_observations(truth))
    errors = []
    for trial in range(100):
        rng = np.random.default_rng(trial)
        x = solve_weights(design, clean + rng.normal(0, 0.05, clean.shape)).weights.as_vector()
        errors.append(np.max(np.abs(np.array(x) - truth)))
    errors = np.array(errors)
    print(f"max-abs parameter error: median {np.median(errors):.4f}, "
          f"p95 {np.percentile(errors, 95):.4f}, max {errors.max():.4f}")
    assert np.all(np.isfinite(errors))


def test_aggregate_averages_per_model_and_codec():
    obs = [FitObservation((0.1, 0, 0), 4.5, 3.0, "M1"), FitObservation((0.1, 0, 0), 4.5, 3.6, "M1"),
           FitObservation((0.1, 0, 0), 3.5, 2.0, "M1"), FitObservation((0, 0.2, 0), 4.5, 3.9, "M2")]
    agg = {(o.model_id, o.q_a): o for o in aggregate_observations(obs)}
    assert len(agg) == 3
    assert agg[("M1", 4.5)].observed_mos == pytest.approx(3.3)
    assert agg[("M1", 3.5)].observed_mos == 2.0


class TestDatasetFormat:
    def test_roundtrip(self):
        rows = [DatasetRow("M1", (2, 0, 0), (1.5, 0.0, 0.0), (20.0, 20.0, 20.0), 4.5596, 4.1),
                DatasetRow("M2", (0, 3, 0), (0.0, 2.0, 0.0), (20.0, 20.0, 20.0), 4.5596, None)]
        text = write_dataset(rows)
        assert text.splitlines()[0] == "model_id,s_a,l_a,t_a,s_b,l_b,t_b,s_c,l_c,t_c,q_a,mos"
        assert parse_dataset(text) == rows
        assert parse_dataset(write_dataset(rows, delimiter="\t")) == rows

    def test_features_from_rows(self):
        rows = [DatasetRow("M1", (2, 0, 1), (1.5, 0.0, 3.0), (20.0, 20.0, 20.0), 4.5, 4.1)] * 4
        obs = observations_from_rows(rows)
        assert obs[0].features == pytest.approx((0.15, 0.0, 0.15))

    def test_missing_header_column(self):
        with pytest.raises(DatasetError, match="mos"):
            parse_dataset("model_id,s_a,l_a,t_a,s_b,l_b,t_b,s_c,l_c,t_c,q_a\n")

    def test_empty(self):
        with pytest.raises(DatasetError):
            parse_dataset("")

    def test_malformed_row_number(self):
        text = "model_id,s_a,l_a,t_a,s_b,l_b,t_b,s_c,l_c,t_c,q_a,mos\nM1,1,2,20,0,0,20,0,0,20,4.5,4\nM2,x,2,20,0,0,20,0,0,20,4.5,4\n"
        with pytest.raises(DatasetError, match="row 2"):
            parse_dataset(text)

    def test_missing_mos_is_rejected_for_fitting(self):
        rows = [DatasetRow("M1", (1, 0, 0), (1.0, 0, 0), (20.0, 20.0, 20.0), 4.5, None)]
        with pytest.raises(DatasetError, match="no MOS"):
            observations_from_rows(rows)
