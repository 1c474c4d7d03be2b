import pytest
from hypothesis import given, strategies as st

from mvprune import (
    DEFAULT_PROFILE,
    ModelProfile,
    NoSolution,
    SequenceProfile,
    ValidationError,
    calibrate_text_len,
    efficiency_report,
    flops_prefill,
    kv_cache_bytes,
    linear_profile,
)


def test_flops_closed_form_at_n1():
    p = ModelProfile(n_layers=2, d_model=64, n_heads=8, n_kv_heads=4, d_ff=256)
    expected = 2 * (4 * 1 * 64**2 * (1 + 0.5) + 4 * 1 * 64 + 6 * 1 * 64 * 256)
    assert flops_prefill(p, 1) == expected


def test_vocab_head_term():
    base = ModelProfile(n_layers=1, d_model=16, n_heads=2, n_kv_heads=2, d_ff=32, vocab_size=1000)
    with_head = ModelProfile(
        n_layers=1,
        d_model=16,
        n_heads=2,
        n_kv_heads=2,
        d_ff=32,
        vocab_size=1000,
        include_vocab_head=True,
    )
    assert flops_prefill(with_head, 5) - flops_prefill(base, 5) == 2 * 5 * 16 * 1000


@pytest.mark.parametrize("n", [1, 2, 10, 500, 4374])
def test_superlinearity(n):
    assert flops_prefill(DEFAULT_PROFILE, 2 * n) > 2 * flops_prefill(DEFAULT_PROFILE, n)


def test_linear_profile_is_exactly_linear():
    lin = linear_profile(DEFAULT_PROFILE)
    assert flops_prefill(lin, 200) == 2 * flops_prefill(lin, 100)


def test_kv_zero_length():
    assert kv_cache_bytes(DEFAULT_PROFILE, 0) == 0


@given(a=st.integers(0, 10_000), b=st.integers(0, 10_000))
def test_kv_exact_linearity(a, b):
    p = DEFAULT_PROFILE
    assert kv_cache_bytes(p, a + b) == kv_cache_bytes(p, a) + kv_cache_bytes(p, b)


def test_kv_fraction_matches_published_multi_image_counts():
    # 438/4374 = 0.10014 vs the published 230/2293 = 0.10031: within 0.5%
    ours = kv_cache_bytes(DEFAULT_PROFILE, 438) / kv_cache_bytes(DEFAULT_PROFILE, 4374)
    assert ours == pytest.approx(438 / 4374)
    assert abs(ours - 230 / 2293) / (230 / 2293) < 0.005


def test_kv_fraction_matches_published_single_image_counts():
    ours = kv_cache_bytes(DEFAULT_PROFILE, 153) / kv_cache_bytes(DEFAULT_PROFILE, 1536)
    assert abs(ours - 78 / 805) / (78 / 805) < 0.03


class TestEfficiencyReport:
    def test_no_text_token_fraction(self):
        rep = efficiency_report(DEFAULT_PROFILE, SequenceProfile(100, 10, 0))
        assert rep.token_fraction == 0.1
        assert rep.kv_fraction_visual == 0.1
        assert rep.kv_fraction_full == 0.1

    def test_visual_only_kv_equals_token_fraction(self):
        for before, after in ((4374, 438), (1536, 153), (777, 77)):
            rep = efficiency_report(DEFAULT_PROFILE, SequenceProfile(before, after, 55))
            assert rep.kv_fraction_visual == rep.token_fraction

    def test_text_dilutes_reduction(self):
        rep = efficiency_report(DEFAULT_PROFILE, SequenceProfile(4374, 438, 300))
        assert rep.flops_fraction > rep.token_fraction
        assert rep.kv_fraction_full > rep.kv_fraction_visual

    def test_fractions_in_unit_interval(self):
        rep = efficiency_report(DEFAULT_PROFILE, SequenceProfile(4374, 438, 300))
        for value in (
            rep.flops_fraction,
            rep.kv_fraction_visual,
            rep.kv_fraction_full,
            rep.token_fraction,
        ):
            assert 0.0 < value <= 1.0


class TestCalibrateTextLen:
    def test_pure_linear_profile_at_token_fraction(self):
        lin = linear_profile(DEFAULT_PROFILE)
        s = SequenceProfile(4374, 438)
        assert calibrate_text_len(lin, s, 438 / 4374) == 0

    def test_published_targets_have_positive_solutions(self):
        # pinned on first calibration run; exact integers, not published values
        assert calibrate_text_len(DEFAULT_PROFILE, SequenceProfile(4374, 438), 0.134) == 275
        assert calibrate_text_len(DEFAULT_PROFILE, SequenceProfile(1536, 153), 0.203) == 222

    def test_solution_hits_target(self):
        s = SequenceProfile(4374, 438)
        t = calibrate_text_len(DEFAULT_PROFILE, s, 0.134)
        achieved = flops_prefill(DEFAULT_PROFILE, 438 + t) / flops_prefill(
            DEFAULT_PROFILE, 4374 + t
        )
        assert achieved == pytest.approx(0.134, abs=1e-3)

    def test_monotone_in_target(self):
        s = SequenceProfile(1536, 153)
        solved = [
            calibrate_text_len(DEFAULT_PROFILE, s, target)
            for target in (0.15, 0.2, 0.3, 0.5)
        ]
        assert solved == sorted(solved)

    def test_unreachable_target_below(self):
        s = SequenceProfile(4374, 438)
        with pytest.raises(NoSolution):
            calibrate_text_len(DEFAULT_PROFILE, s, 0.05)

    def test_target_domain_checked(self):
        with pytest.raises(ValidationError):
            calibrate_text_len(DEFAULT_PROFILE, SequenceProfile(100, 10), 1.5)


class TestProfileValidation:
    def test_head_divisibility(self):
        with pytest.raises(ValidationError):
            ModelProfile(n_layers=1, d_model=100, n_heads=3, n_kv_heads=1, d_ff=64)

    def test_kv_heads_bounded(self):
        with pytest.raises(ValidationError):
            ModelProfile(n_layers=1, d_model=64, n_heads=4, n_kv_heads=8, d_ff=64)

    def test_sequence_profile_ordering(self):
        with pytest.raises(ValidationError):
            SequenceProfile(n_visual_before=10, n_visual_after=20)
