"""Protocol simulator tests.

The fixed 31-bit regression (six planted errors, five-bit blocks, second
and sixth block parities disagreeing) pins the block pass; bisection is
checked against a hand-simulated halving oracle and exhaustive error
placements; Cascade back-correction against a crafted two-pass scenario;
statistical behaviour against seeded Monte Carlo.
"""

import itertools
import math

import numpy as np
import pytest

from coxcascade.error_model import ErrorPattern, GammaIntensity, TimeUnitLayout, sample_error_pattern
from coxcascade.reconciliation import (
    BBBSS,
    BISECT,
    CASCADE,
    COMPARE_BLOCK,
    COMPARE_SUBSET,
    CORRECT,
    DELETE,
    PARITY_EVENT_KINDS,
    CascadeConfig,
    Event,
    KeyPair,
    ProtocolError,
    Transcript,
    bisect_error,
    bits_from_string,
    cascade_back_correction,
    make_key_pair,
    parity,
    partition,
    random_subset_round,
    reconcile,
    run_pass,
    shared_permutation,
)
from coxcascade.validation import EXAMPLE_ERROR_POSITIONS, EXAMPLE_KEY_BITS


def example_pair() -> KeyPair:
    alice = bits_from_string(EXAMPLE_KEY_BITS)
    bob = alice.copy()
    bob[list(EXAMPLE_ERROR_POSITIONS)] ^= 1
    return KeyPair(alice, bob)


class TestKeyPair:
    def test_empty_pattern_gives_identical_keys(self):
        pair = make_key_pair(8, ErrorPattern(8, ()), seed=1)
        assert pair.residual_errors() == 0
        assert np.array_equal(pair.alice, pair.bob)

    def test_single_error_position(self):
        pair = make_key_pair(8, ErrorPattern(8, (3,)), seed=2)
        assert list(pair.difference_positions()) == [3]

    def test_worked_example_has_six_differences(self):
        pattern = ErrorPattern(31, EXAMPLE_ERROR_POSITIONS)
        pair = make_key_pair(31, pattern, seed=3)
        assert list(pair.difference_positions()) == list(EXAMPLE_ERROR_POSITIONS)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            make_key_pair(10, ErrorPattern(8, (1,)), seed=0)
        with pytest.raises(ValueError):
            KeyPair([0, 1], [0, 1, 1])

    def test_non_bits_rejected(self):
        with pytest.raises(ValueError):
            KeyPair([0, 2], [0, 1])

    def test_determinism(self):
        pattern = ErrorPattern(64, (5, 9))
        p1 = make_key_pair(64, pattern, seed=7)
        p2 = make_key_pair(64, pattern, seed=7)
        assert np.array_equal(p1.alice, p2.alice)


class TestSharedPermutation:
    def test_roundtrip(self):
        perm = shared_permutation(100, 3, seed=42)
        x = np.arange(100)
        shuffled = x[perm]
        inv = np.empty_like(perm)
        inv[perm] = np.arange(100)
        assert np.array_equal(shuffled[inv], x)

    def test_determinism(self):
        a = shared_permutation(10, 0, seed=5)
        b = shared_permutation(10, 0, seed=5)
        assert np.array_equal(a, b)
        c = shared_permutation(10, 1, seed=5)
        assert not np.array_equal(a, c)

    def test_is_bijection(self):
        perm = shared_permutation(257, 2, seed=9)
        assert sorted(perm) == list(range(257))

    def test_uniformity(self):
        # 10^4 seeded draws over S_4: every permutation within 3 sigma of 1/24
        draws = 10_000
        counts: dict[tuple, int] = {}
        for seed in range(draws):
            key = tuple(shared_permutation(4, 0, seed))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 24
        p = 1.0 / 24.0
        sigma = math.sqrt(draws * p * (1 - p))
        for key, count in counts.items():
            assert abs(count - draws * p) < 3.0 * sigma, (key, count)


class TestPartition:
    def test_worked_example_shape(self):
        spans = partition(31, 5)
        assert len(spans) == 7
        assert spans[-1] == (30, 31)
        assert all(hi - lo == 5 for lo, hi in spans[:-1])

    def test_single_block(self):
        assert partition(10, 10) == [(0, 10)]

    def test_remainder_sizes(self):
        assert [hi - lo for lo, hi in partition(10, 3)] == [3, 3, 3, 1]

    @pytest.mark.parametrize("k", [0, -1, 11])
    def test_domain(self, k):
        with pytest.raises(ValueError):
            partition(10, k)


class TestParity:
    def test_worked_example_parities(self):
        pair = example_pair()
        spans = partition(31, 5)[:6]
        assert [parity(pair.alice, s) for s in spans] == [0, 0, 1, 0, 0, 0]
        assert [parity(pair.bob, s) for s in spans] == [0, 1, 1, 0, 0, 1]

    def test_empty_span(self):
        bits = bits_from_string("1011")
        assert parity(bits, (2, 2)) == 0

    def test_out_of_bounds(self):
        bits = bits_from_string("1011")
        with pytest.raises(ValueError):
            parity(bits, (0, 5))
        with pytest.raises(ValueError):
            parity(bits, (3, 1))


def hand_bisect(alice, bob, lo, hi):
    """Independent halving oracle mirroring the protocol's published rule:
    compare the left (larger) half, descend into the mismatching side."""
    comparisons = 0
    while hi - lo > 1:
        mid = lo + (hi - lo + 1) // 2
        comparisons += 1
        if int(alice[lo:mid].sum()) % 2 != int(bob[lo:mid].sum()) % 2:
            hi = mid
        else:
            lo = mid
    return lo, comparisons


class TestBisectError:
    def test_single_position_span(self):
        alice = bits_from_string("00000")
        bob = bits_from_string("00100")
        t = Transcript()
        found = bisect_error(alice, bob, (2, 3), t, 0)
        assert found == 2
        assert t.parities_revealed == 0  # no halvings needed

    def test_size_five_block_all_offsets(self):
        for offset in range(5):
            alice = np.zeros(5, dtype=np.uint8)
            bob = alice.copy()
            bob[offset] ^= 1
            t = Transcript()
            found = bisect_error(alice, bob, (0, 5), t, 0)
            oracle_idx, oracle_comparisons = hand_bisect(alice, bob, 0, 5)
            assert found == offset == oracle_idx
            bisect_events = [e for e in t.events if e.kind == BISECT]
            assert len(bisect_events) == oracle_comparisons
            assert len(bisect_events) <= 3  # ceil(log2 5)

    def test_three_errors_exhaustive(self):
        # any odd placement: the returned index is always a true difference
        for placement in itertools.combinations(range(5), 3):
            alice = np.zeros(5, dtype=np.uint8)
            bob = alice.copy()
            bob[list(placement)] ^= 1
            found = bisect_error(alice, bob, (0, 5), Transcript(), 0)
            assert found in placement

    def test_even_count_precondition(self):
        alice = np.zeros(6, dtype=np.uint8)
        bob = alice.copy()
        bob[[1, 4]] ^= 1
        with pytest.raises(ProtocolError):
            bisect_error(alice, bob, (0, 6), Transcript(), 0)


class TestRunPass:
    def config(self, k, variant=BBBSS, seed=0, passes=4):
        return CascadeConfig(initial_block_size=k, num_passes=passes,
                             variant=variant, seed=seed)

    def test_error_free_pass(self):
        pair = make_key_pair(64, ErrorPattern(64, ()), seed=4)
        t = Transcript()
        corrections = run_pass(pair, 0, self.config(8), t, None)
        assert corrections == 0
        assert t.corrections_made == 0
        assert all(e.parity_a == e.parity_b for e in t.events
                   if e.kind == COMPARE_BLOCK)

    def test_worked_example_pass(self):
        # 30-bit prefix, identity order, five-bit blocks: mismatches exactly
        # at the second and sixth block, two corrections, blocks 4/5 untouched
        pair = example_pair()
        pair.alice = pair.alice[:30]
        pair.bob = pair.bob[:30]
        t = Transcript()
        corrections = run_pass(pair, 0, self.config(5, variant=CASCADE), t, [])
        assert corrections == 2
        compares = [e for e in t.events if e.kind == COMPARE_BLOCK]
        mismatched = [i + 1 for i, e in enumerate(compares)
                      if e.parity_a != e.parity_b]
        assert mismatched == [2, 6]
        corrected = sorted(e.index for e in t.events if e.kind == CORRECT)
        assert corrected == [6, 29]
        assert pair.residual_errors() == 4  # the two even blocks stay hidden

    def test_blocks_agree_after_pass(self):
        g = GammaIntensity(10, 2)
        for seed in range(5):
            pattern = sample_error_pattern(512, TimeUnitLayout(128), g, seed)
            pair = make_key_pair(512, pattern, seed + 100)
            history = []
            run_pass(pair, 1, self.config(16, variant=CASCADE, seed=seed), Transcript(), history)
            rec = history[-1]
            for lo, hi in partition(len(pair), rec.block_size):
                sel = rec.permutation[lo:hi]
                assert int(pair.alice[sel].sum()) % 2 == int(pair.bob[sel].sum()) % 2

    def test_bbbss_deletes_one_bit_per_block(self):
        pair = make_key_pair(64, ErrorPattern(64, (10,)), seed=4)
        t = Transcript()
        run_pass(pair, 0, self.config(8, variant=BBBSS), t, None)
        assert len(pair) == 64 - 8
        assert t.bits_deleted == 8

    def test_cascade_deletes_nothing(self):
        pair = make_key_pair(64, ErrorPattern(64, (10,)), seed=4)
        t = Transcript()
        run_pass(pair, 0, self.config(8, variant=CASCADE), t, [])
        assert len(pair) == 64
        assert t.bits_deleted == 0


class TestCascadeBackCorrection:
    def test_single_error_never_triggers(self):
        pair = make_key_pair(32, ErrorPattern(32, (7,)), seed=1)
        config = CascadeConfig(initial_block_size=4, num_passes=3,
                               variant=CASCADE, seed=11)
        t = Transcript()
        out = reconcile(pair, config, t)
        assert out.success
        # exactly one correction in total, so no back-correction re-checks:
        # after it the transcript never revisits an earlier pass
        assert t.corrections_made == 1

    def test_crafted_two_pass_scenario(self):
        # Two errors inside one pass-0 block (even, hidden).  Pick a seed
        # whose pass-1 shuffle separates them; correcting the first then
        # exposes the pass-0 block, which is re-bisected mid-pass.
        n, k = 16, 4
        seed = next(
            s for s in range(1000)
            if abs(int(np.where(shared_permutation(n, 1, s) == 0)[0][0]) // (2 * k)
                   - int(np.where(shared_permutation(n, 1, s) == 1)[0][0]) // (2 * k)) == 1
        )
        alice = np.zeros(n, dtype=np.uint8)
        bob = alice.copy()
        bob[[0, 1]] ^= 1
        pair = KeyPair(alice, bob)
        config = CascadeConfig(initial_block_size=k, num_passes=2,
                               variant=CASCADE, seed=seed)
        t = Transcript()
        history = []
        assert run_pass(pair, 0, config, t, history) == 0  # both errors hidden
        corrections = run_pass(pair, 1, config, t, history)
        assert corrections == 2
        assert pair.residual_errors() == 0
        # the re-check of the pass-0 block happens after pass 1 started
        kinds = [(e.kind, e.round_index) for e in t.events]
        first_pass1 = kinds.index((COMPARE_BLOCK, 1))
        assert (COMPARE_BLOCK, 0) in kinds[first_pass1:]

    def test_corrections_always_flip_true_differences(self):
        # omniscient replay: every corrected index differed at flip time
        g = GammaIntensity(10, 2)
        for seed in range(20):
            pattern = sample_error_pattern(256, TimeUnitLayout(64), g, seed)
            pair = make_key_pair(256, pattern, seed + 50)
            alice0 = pair.alice.copy()
            bob0 = pair.bob.copy()
            config = CascadeConfig(initial_block_size=8, variant=CASCADE,
                                   seed=seed + 1000)
            t = Transcript()
            out = reconcile(pair, config, t)
            replay = bob0.copy()
            for e in t.events:
                if e.kind == CORRECT:
                    assert alice0[e.index] != replay[e.index]
                    replay[e.index] ^= 1
            assert np.array_equal(replay, pair.bob)
            assert np.array_equal(alice0, pair.alice)  # Alice never modified
            assert out.deleted_bits == 0

    def test_direct_call_with_empty_history(self):
        pair = make_key_pair(16, ErrorPattern(16, (2,)), seed=0)
        pair.bob[2] ^= 1  # clear the difference so nothing can be flipped
        assert cascade_back_correction(pair, [], 2, Transcript()) == 0


class TestRandomSubsetRound:
    def config(self, variant=CASCADE, seed=0):
        return CascadeConfig(initial_block_size=4, variant=variant, seed=seed)

    def test_zero_errors_always_agree(self):
        pair = make_key_pair(32, ErrorPattern(32, ()), seed=6)
        config = self.config()
        for r in range(50):
            assert random_subset_round(pair, config, r, Transcript()) is False

    def test_single_error_mismatch_probability(self):
        # the lone error joins the subset with probability 1/2 exactly
        pair = make_key_pair(12, ErrorPattern(12, (5,)), seed=8)
        config = self.config(seed=21)
        rounds = 10_000
        hits = 0
        for r in range(rounds):
            corrected = random_subset_round(pair, config, r, Transcript())
            if corrected:
                hits += 1
                pair.bob[5] ^= 1  # restore the error for the next round
        p_hat = hits / rounds
        assert abs(p_hat - 0.5) < 3.0 * math.sqrt(0.25 / rounds)

    def test_bbbss_deletes_exactly_one_bit(self):
        pair = make_key_pair(12, ErrorPattern(12, (5,)), seed=8)
        t = Transcript()
        random_subset_round(pair, self.config(variant=BBBSS, seed=4), 0, t)
        assert len(pair) == 11
        assert t.bits_deleted == 1

    def test_correction_fixes_a_true_difference(self):
        pair = make_key_pair(16, ErrorPattern(16, (3,)), seed=2)
        config = self.config(seed=13)
        for r in range(64):
            if random_subset_round(pair, config, r, Transcript()):
                break
        assert pair.residual_errors() == 0

    def test_minimum_length(self):
        pair = make_key_pair(1, ErrorPattern(1, ()), seed=0)
        with pytest.raises(ValueError):
            random_subset_round(pair, self.config(), 0, Transcript())

    def test_determinism_per_round(self):
        config = self.config(seed=33)
        t1, t2 = Transcript(), Transcript()
        pair1 = make_key_pair(24, ErrorPattern(24, (7,)), seed=1)
        pair2 = make_key_pair(24, ErrorPattern(24, (7,)), seed=1)
        random_subset_round(pair1, config, 5, t1)
        random_subset_round(pair2, config, 5, t2)
        assert t1.to_lines() == t2.to_lines()


class TestReconcile:
    def test_error_free_run(self):
        pair = make_key_pair(128, ErrorPattern(128, ()), seed=3)
        t = Transcript()
        out = reconcile(pair, CascadeConfig(initial_block_size=16, seed=5), t)
        assert out.success
        assert out.subset_rounds == 20
        assert t.corrections_made == 0
        assert out.residual_error_count == 0

    def test_custom_termination_threshold(self):
        pair = make_key_pair(128, ErrorPattern(128, ()), seed=3)
        config = CascadeConfig(initial_block_size=16, termination_successes=7, seed=5)
        out = reconcile(pair, config)
        assert out.subset_rounds == 7

    def test_auto_block_size_must_be_resolved(self):
        pair = make_key_pair(64, ErrorPattern(64, ()), seed=0)
        with pytest.raises(ValueError):
            reconcile(pair, CascadeConfig())

    def test_resolve(self):
        config = CascadeConfig().resolve(TimeUnitLayout(1000), GammaIntensity(10, 2))
        assert config.initial_block_size == 200

    def test_determinism(self):
        def run():
            pattern = sample_error_pattern(512, TimeUnitLayout(128),
                                           GammaIntensity(10, 2), seed=44)
            pair = make_key_pair(512, pattern, seed=45)
            t = Transcript()
            out = reconcile(pair, CascadeConfig(initial_block_size=25, seed=46), t)
            return out, t.to_lines()

        out1, lines1 = run()
        out2, lines2 = run()
        assert out1 == out2
        assert lines1 == lines2

    def test_bbbss_length_accounting(self):
        pattern = sample_error_pattern(512, TimeUnitLayout(128),
                                       GammaIntensity(10, 2), seed=9)
        pair = make_key_pair(512, pattern, seed=10)
        t = Transcript()
        out = reconcile(pair, CascadeConfig(initial_block_size=25, seed=11), t)
        comparisons = sum(1 for e in t.events
                          if e.kind in (COMPARE_BLOCK, COMPARE_SUBSET))
        assert out.final_length == 512 - comparisons
        assert out.deleted_bits == comparisons
        assert out.final_length == len(pair)

    def test_leakage_identity(self):
        pattern = sample_error_pattern(256, TimeUnitLayout(64),
                                       GammaIntensity(10, 2), seed=20)
        pair = make_key_pair(256, pattern, seed=21)
        t = Transcript()
        out = reconcile(pair, CascadeConfig(initial_block_size=13, seed=22), t)
        parity_events = sum(1 for e in t.events if e.kind in PARITY_EVENT_KINDS)
        assert out.leaked_parities == parity_events == t.parities_revealed

    def test_leakage_monotone(self):
        # the running counter never decreases and ends at the ledger total
        pattern = sample_error_pattern(128, TimeUnitLayout(64),
                                       GammaIntensity(10, 2), seed=1)
        pair = make_key_pair(128, pattern, seed=2)
        t = Transcript()
        reconcile(pair, CascadeConfig(initial_block_size=8, seed=3), t)
        running = 0
        for e in t.events:
            if e.kind in PARITY_EVENT_KINDS:
                running += 1
        assert running == t.parities_revealed

    def test_deletions_follow_comparisons(self):
        pattern = sample_error_pattern(128, TimeUnitLayout(64),
                                       GammaIntensity(10, 2), seed=5)
        pair = make_key_pair(128, pattern, seed=6)
        t = Transcript()
        reconcile(pair, CascadeConfig(initial_block_size=8, seed=7), t)
        seen_comparison = False
        for e in t.events:
            if e.kind in (COMPARE_BLOCK, COMPARE_SUBSET):
                seen_comparison = True
            if e.kind == DELETE:
                assert seen_comparison

    def test_cascade_has_no_deletions(self):
        pattern = sample_error_pattern(128, TimeUnitLayout(64),
                                       GammaIntensity(10, 2), seed=5)
        pair = make_key_pair(128, pattern, seed=6)
        t = Transcript()
        out = reconcile(pair, CascadeConfig(initial_block_size=8,
                                            variant=CASCADE, seed=7), t)
        assert out.deleted_bits == 0
        assert out.final_length == 128
        assert not any(e.kind == DELETE for e in t.events)


class TestTranscriptSerialization:
    def test_round_trip(self, tmp_path):
        pattern = sample_error_pattern(64, TimeUnitLayout(32),
                                       GammaIntensity(10, 2), seed=14)
        pair = make_key_pair(64, pattern, seed=15)
        t = Transcript()
        reconcile(pair, CascadeConfig(initial_block_size=8, seed=16), t)
        path = tmp_path / "transcript.log"
        t.write(path)
        parsed = Transcript.from_lines(path.read_text().splitlines())
        assert parsed.to_lines() == t.to_lines()
        assert parsed.parities_revealed == t.parities_revealed
        assert parsed.bits_deleted == t.bits_deleted
        assert parsed.corrections_made == t.corrections_made

    def test_event_line_forms(self):
        e = Event(COMPARE_BLOCK, 0, lo=0, hi=5, parity_a=0, parity_b=1)
        assert Event.from_line(e.to_line()) == e
        e = Event(COMPARE_SUBSET, 3, parity_a=1, parity_b=1, subset=(0, 2, 5))
        assert Event.from_line(e.to_line()) == e
        e = Event(CORRECT, 2, index=17)
        assert Event.from_line(e.to_line()) == e


class TestConfigValidation:
    def test_defaults(self):
        config = CascadeConfig(initial_block_size=10)
        assert config.num_passes == 4
        assert config.block_growth == 2
        assert config.termination_successes == 20
        assert config.variant == BBBSS

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"initial_block_size": 0},
            {"initial_block_size": "anything"},
            {"initial_block_size": 4, "num_passes": 0},
            {"initial_block_size": 4, "block_growth": 1},
            {"initial_block_size": 4, "termination_successes": 0},
            {"initial_block_size": 4, "variant": "other"},
            {"initial_block_size": 4, "seed": -1},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            CascadeConfig(**kwargs)
