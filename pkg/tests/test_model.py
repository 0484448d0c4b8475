import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asqm.errors import BitrateRangeError, ConfigError, InvalidInputError, ModelDomainError
from asqm.model import (
    AAC_LC,
    HE_AAC_V2,
    CodecProfile,
    InitialDelayModel,
    MosScale,
    PreferenceModel,
    SegmentWeights,
    StallSummary,
    asqm1,
    codec_impairment,
    codec_quality,
    evaluate,
    initial_delay_impairment,
    mos_from_r,
    preference_factor,
    score,
    stall_impairment,
)

# Frozen from a 40-digit mpmath evaluation of the same formulas.
MOS_85_4 = 4.559588152
Q_A_AAC_576 = 4.559588151998923801726
Q_A_HE_16 = 3.510082988588895500657
QCOD_HE_16 = 37.26448638230505284225
I_D_RAW_2_OF_60 = 2.788696378026883560302
I_S_EXAMPLE = 0.6864022580861636476952
PF_MUSIC_3 = 0.6617129981066103994602
PF_NEWS_AT_QA = 0.9857887372154988779292

SCALE = MosScale()
NO_STALLS = StallSummary.from_segments(60.0)


def test_builtin_profiles_match_published_table():
    assert (AAC_LC.alpha1, AAC_LC.alpha2, AAC_LC.alpha3, AAC_LC.br_min, AAC_LC.br_max) == (
        100, -0.05, 14.6, 32, 576)
    assert (HE_AAC_V2.alpha1, HE_AAC_V2.alpha2, HE_AAC_V2.alpha3,
            HE_AAC_V2.br_min, HE_AAC_V2.br_max) == (100, -0.11, 20.06, 16, 96)
    assert (SCALE.m_min, SCALE.m_max) == (1.05, 4.9)
    assert (InitialDelayModel().k, InitialDelayModel().c) == (0.824, 1.017)
    assert dict(PreferenceModel().coefficients) == {
        "music": (0.423, 0.197), "sport": (0.699, 0.428), "news": (0.481, 0.256)}


@pytest.mark.parametrize("br_min,br_max", [(0, 10), (10, 10), (20, 10), (-1, 5)])
def test_codec_profile_rejects_bad_range(br_min, br_max):
    with pytest.raises(ConfigError):
        CodecProfile("x", 100, -0.1, 10, br_min, br_max)


class TestMosFromR:
    def test_endpoints(self):
        assert mos_from_r(0) == 1.05
        assert mos_from_r(100) == 4.9

    def test_interior_value(self):
        assert mos_from_r(85.4) == pytest.approx(MOS_85_4, abs=1e-9)

    @pytest.mark.parametrize("x,expected", [(-20, 1.05), (150, 4.9)])
    def test_clamps_outside_scale(self, x, expected):
        assert mos_from_r(x) == expected

    @pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
    def test_non_finite(self, x):
        with pytest.raises(InvalidInputError):
            mos_from_r(x)

    def test_monotone_on_grid(self):
        grid = np.round(np.arange(0, 1001) * 0.1, 10)
        values = [mos_from_r(x) for x in grid]
        assert all(b >= a for a, b in zip(values, values[1:]))
        # the raw cubic dips under m_min until R ~ 3.17, where the clamp holds it flat
        strict = [v for x, v in zip(grid, values) if x >= 3.2]
        assert all(b > a for a, b in zip(strict, strict[1:]))


class TestCodec:
    def test_impairment_values(self):
        assert codec_impairment(AAC_LC, 576) == pytest.approx(14.6, abs=1e-9)
        assert codec_impairment(HE_AAC_V2, 16) == pytest.approx(QCOD_HE_16, rel=1e-12)

    def test_zero_alpha1_leaves_alpha3(self):
        profile = CodecProfile("flat", 0, -0.2, 12.5, 8, 64)
        assert codec_impairment(profile, 30) == 12.5

    def test_quality_values(self):
        assert codec_quality(AAC_LC, 576) == pytest.approx(Q_A_AAC_576, abs=1e-12)
        assert codec_quality(HE_AAC_V2, 16) == pytest.approx(Q_A_HE_16, abs=1e-12)

    def test_quality_floor(self):
        profile = CodecProfile("awful", 0, -0.1, 100, 8, 64)
        assert codec_quality(profile, 32) == 1.05

    @pytest.mark.parametrize("profile,br", [(AAC_LC, 31.9), (AAC_LC, 577), (HE_AAC_V2, 8)])
    def test_out_of_range_names_profile(self, profile, br):
        with pytest.raises(BitrateRangeError, match=profile.name):
            codec_quality(profile, br)

    @pytest.mark.parametrize("profile", [AAC_LC, HE_AAC_V2])
    def test_quality_non_decreasing_in_bitrate(self, profile):
        grid = np.linspace(profile.br_min, profile.br_max, 400)
        q = [codec_quality(profile, b) for b in grid]
        assert all(b >= a for a, b in zip(q, q[1:]))


class TestInitialDelay:
    model = InitialDelayModel()

    def test_zero_delay(self):
        assert initial_delay_impairment(self.model, 0, 60, 4.5) == 0.0
        assert initial_delay_impairment(self.model, 0, 1e-3, 4.5) == 0.0

    def test_two_seconds_of_sixty(self):
        q_a = Q_A_AAC_576
        assert initial_delay_impairment(self.model, 2, 60, q_a) == pytest.approx(
            min(I_D_RAW_2_OF_60, q_a - 1.05), abs=1e-12)
        # a low Q_A caps the impairment at the usable range
        assert initial_delay_impairment(self.model, 2, 60, 2.0) == pytest.approx(0.95)

    def test_log_argument_one_gives_zero(self):
        assert initial_delay_impairment(self.model, 60 / 1.017, 60, 4.0) == pytest.approx(0, abs=1e-12)

    def test_delay_longer_than_media_clamps_to_zero(self):
        assert initial_delay_impairment(self.model, 100, 60, 4.0) == 0.0

    @pytest.mark.parametrize("t_l", [0, -5])
    def test_bad_media_length(self, t_l):
        with pytest.raises(InvalidInputError):
            initial_delay_impairment(self.model, 1, t_l, 4.0)

    def test_negative_delay(self):
        with pytest.raises(InvalidInputError):
            initial_delay_impairment(self.model, -1, 60, 4.0)


class TestStallImpairment:
    def test_no_stalls_bypass(self):
        w = SegmentWeights(math.log(2.0), -1, -1, -1)
        assert stall_impairment(NO_STALLS, w, 4.2) == 0.0

    def test_segment_a_example(self):
        summary = StallSummary.from_segments(60.0, stalls=(2, 0, 0), mean_len=(3.0, 0, 0))
        w = SegmentWeights(math.log(4.5), -0.5, 0, 0)
        assert stall_impairment(summary, w, Q_A_AAC_576) == pytest.approx(I_S_EXAMPLE, abs=1e-12)

    def test_zero_weights_with_ln_qa(self):
        summary = StallSummary.from_segments(60.0, stalls=(3, 4, 5), mean_len=(2.0, 3.0, 4.0))
        q_a = 4.1
        w = SegmentWeights(math.log(q_a), 0, 0, 0)
        assert stall_impairment(summary, w, q_a) == pytest.approx(0, abs=1e-12)

    def test_prediction_clamped_to_scale(self):
        summary = StallSummary.from_segments(60.0, stalls=(12, 12, 12), mean_len=(7.0, 7.0, 7.0))
        w = SegmentWeights(math.log(4.5), -5, -5, -5)
        assert stall_impairment(summary, w, 4.0) == pytest.approx(4.0 - 1.05)
        # positive weights cannot produce a negative impairment
        w = SegmentWeights(math.log(4.5), 5, 5, 5)
        assert stall_impairment(summary, w, 4.0) == 0.0

    def test_huge_exponent_does_not_overflow(self):
        summary = StallSummary.from_segments(3.0, stalls=(12, 0, 0), mean_len=(7.0, 0, 0))
        w = SegmentWeights(1.0, 1e6, 0, 0)
        assert stall_impairment(summary, w, 4.0) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 11), st.integers(0, 12), st.floats(0.1, 7), st.floats(0.0, 1.0),
           st.floats(-3, -1e-3), st.floats(-3, -1e-3), st.floats(-3, -1e-3), st.integers(0, 2))
    def test_monotone_in_counts_and_lengths(self, s, s_other, l, dl, d_a, d_b, d_c, seg):
        w = SegmentWeights(math.log(4.6), d_a, d_b, d_c)

        def summary(count, length):
            stalls = [s_other, s_other, s_other]
            lens = [2.0 if s_other else 0.0] * 3
            stalls[seg], lens[seg] = count, (length if count else 0.0)
            return StallSummary.from_segments(60.0, tuple(stalls), tuple(lens))

        q_a = Q_A_AAC_576
        assert stall_impairment(summary(s + 1, l), w, q_a) >= stall_impairment(summary(s, l), w, q_a)
        if s:
            assert (stall_impairment(summary(s, l + dl), w, q_a)
                    >= stall_impairment(summary(s, l), w, q_a))


class TestStallSummary:
    def test_length_requires_stalls(self):
        with pytest.raises(InvalidInputError):
            StallSummary.from_segments(60.0, stalls=(0, 0, 0), mean_len=(1.0, 0, 0))
        with pytest.raises(InvalidInputError):
            StallSummary.from_segments(60.0, stalls=(1, 0, 0), mean_len=(0, 0, 0))

    def test_segment_sum_must_match(self):
        with pytest.raises(InvalidInputError):
            StallSummary((0, 0, 0), (0, 0, 0), (20, 20, 20), 0, 61)

    def test_features(self):
        s = StallSummary.from_segments(60.0, stalls=(2, 1, 0), mean_len=(3.0, 4.0, 0))
        assert s.features == pytest.approx((0.3, 0.2, 0.0))


class TestAsqm1:
    def test_no_impairments(self):
        assert asqm1(4.5596, 0, 0) == 4.5596

    def test_subtraction(self):
        assert asqm1(4.5596, 0.813, 0.6864) == pytest.approx(3.0602, abs=1e-12)

    def test_floor(self):
        assert asqm1(4.5596, 4.0, 4.0) == 1.05

    def test_rejects_negative_impairment(self):
        with pytest.raises(InvalidInputError):
            asqm1(4.0, -0.1, 0)


class TestPreferenceFactor:
    model = PreferenceModel()

    def test_music_preferred(self):
        assert preference_factor(self.model, "Music", 3.0, True) == pytest.approx(PF_MUSIC_3, abs=1e-12)

    def test_music_not_preferred_consistent(self):
        assert preference_factor(self.model, "music", 3.0, False) == pytest.approx(
            2 - PF_MUSIC_3, abs=1e-12)

    def test_literal_mode_reproduces_printed_formula(self):
        literal = self.model.with_mode("literal")
        expected = 2 - 0.423 * math.log(3.0) + 0.197
        assert preference_factor(literal, "music", 3.0, False) == pytest.approx(expected, abs=1e-15)
        # the preferring branch is shared by both modes
        assert preference_factor(literal, "music", 3.0, True) == preference_factor(
            self.model, "music", 3.0, True)

    @pytest.mark.parametrize("category", ["music", "sport", "news"])
    def test_consistent_sum_is_two(self, category):
        for m in np.arange(1.05, 4.9 + 1e-9, 0.01):
            total = (preference_factor(self.model, category, m, True)
                     + preference_factor(self.model, category, m, False))
            assert abs(total - 2) <= 1e-12

    def test_unknown_category(self):
        with pytest.raises(ConfigError):
            preference_factor(self.model, "documentary", 3.0, True)

    @pytest.mark.parametrize("mos", [0, -1])
    def test_non_positive_mos(self, mos):
        with pytest.raises(InvalidInputError):
            preference_factor(self.model, "music", mos, True)

    def test_non_positive_factor_is_domain_error(self):
        model = PreferenceModel({"odd": (1.0, -5.0)})
        with pytest.raises(ModelDomainError):
            preference_factor(model, "odd", 3.0, True)

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            PreferenceModel(mode="loose")


class TestScore:
    weights = SegmentWeights(math.log(4.5), -0.3, -0.2, -0.1)

    def test_news_preferred(self):
        r = evaluate(AAC_LC, 576, NO_STALLS, self.weights, PreferenceModel(), {"News"}, "news")
        assert r.pf_branch == "preferred"
        assert r.asqm == pytest.approx(Q_A_AAC_576 * PF_NEWS_AT_QA, abs=1e-12)
        assert r.asqm == pytest.approx(4.495, abs=5e-4)

    def test_news_not_preferred(self):
        r = evaluate(AAC_LC, 576, NO_STALLS, self.weights, PreferenceModel(), {"sport"}, "news")
        assert r.pf_branch == "not_preferred"
        assert r.asqm == pytest.approx(Q_A_AAC_576 * (2 - PF_NEWS_AT_QA), abs=1e-12)
        assert 1.0 <= r.asqm <= 5.0

    def test_unknown_preferences_give_identity(self):
        summary = StallSummary.from_segments(60.0, (2, 0, 1), (3.0, 0, 1.5), initial_delay=3.0)
        r = evaluate(AAC_LC, 128, summary, self.weights)
        assert r.pf_branch == "unknown" and r.pf == 1.0 and r.asqm == r.asqm1

    def test_identity_pf_equals_codec_quality(self):
        flat = PreferenceModel({"music": (0.0, 1.0)})
        for profile, br in [(AAC_LC, 64), (HE_AAC_V2, 48)]:
            assert score(profile, br, NO_STALLS, self.weights, flat, {"music"}, "music") == \
                codec_quality(profile, br)

    def test_final_clamp_lower_bound(self):
        summary = StallSummary.from_segments(60.0, (12, 12, 12), (7.0, 7.0, 7.0), initial_delay=1.0)
        w = SegmentWeights(math.log(4.5), -3, -3, -3)
        r = evaluate(HE_AAC_V2, 16, summary, w, PreferenceModel(), {"music"}, "music")
        assert r.asqm1 == 1.05
        assert r.asqm >= 1.0

    @pytest.mark.parametrize("prefs,content,branch", [
        ({"music"}, "music", "preferred"), ({"Music", "Sport"}, "sport", "preferred"),
        (set(), "news", "not_preferred"), ({"sport"}, "MUSIC", "not_preferred")])
    def test_branch_matches_membership(self, prefs, content, branch):
        r = evaluate(AAC_LC, 256, NO_STALLS, self.weights, PreferenceModel(), prefs, content)
        assert r.pf_branch == branch
