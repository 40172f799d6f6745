import random
from collections import Counter
from fractions import Fraction

import pytest

from hiertax.encoding import TenderRecord
from hiertax.sampling import (SamplingError, draw_candidate, generate_epoch,
                              generate_pair, pair_probability, rng_for_record)

from synthdata import make_chain_taxonomy, taxonomy_from_rows

CHAIN_Y = "01110000"


@pytest.fixture(scope="module")
def tax():
    return make_chain_taxonomy()


def all_outcomes(tax, y):
    return [(cand, pol) for cand in tax.nodes for pol in (True, False)]


class TestPairProbability:
    def test_specific_false_root_matches_published_figure(self, tax):
        p = pair_probability(CHAIN_Y, "15000000", False, tax)
        assert p == Fraction(1, 2) * Fraction(1, 3) * Fraction(1, 44)
        assert float(p) == pytest.approx(0.0038, abs=2e-4)

    def test_positive_ancestor_is_one_sixth(self, tax):
        for ancestor in ("01000000", "01100000", CHAIN_Y):
            assert pair_probability(CHAIN_Y, ancestor, True, tax) == Fraction(1, 6)

    def test_ancestor_cannot_be_a_negative(self, tax):
        assert pair_probability(CHAIN_Y, "01100000", False, tax) == 0

    def test_non_ancestor_cannot_be_a_positive(self, tax):
        assert pair_probability(CHAIN_Y, "15000000", True, tax) == 0

    def test_total_probability_is_one(self, tax):
        total = sum(pair_probability(CHAIN_Y, cand, pol, tax)
                    for cand, pol in all_outcomes(tax, CHAIN_Y))
        assert total == 1

    def test_balance_between_polarities(self, tax):
        pos = sum(pair_probability(CHAIN_Y, c, True, tax) for c in tax.nodes)
        neg = sum(pair_probability(CHAIN_Y, c, False, tax) for c in tax.nodes)
        assert pos == Fraction(1, 2)
        assert neg == Fraction(1, 2)

    def test_root_truth_collapses_to_d_equals_one(self, tax):
        y = "02000000"
        assert pair_probability(y, y, True, tax) == Fraction(1, 2)
        assert pair_probability(y, "03000000", False, tax) == \
            Fraction(1, 2) * Fraction(1, 44)

    def test_degenerate_chain_doubles_positives(self):
        lone = taxonomy_from_rows(["15000000-8,Food", "15100000-9,Crops"])
        assert pair_probability("15100000", "15100000", True, lone) == Fraction(1, 2)
        assert pair_probability("15100000", "15000000", True, lone) == Fraction(1, 2)
        assert sum(pair_probability("15100000", c, False, lone)
                   for c in lone.nodes) == 0


class TestDrawCandidate:
    def test_polarity_matches_chain_membership(self, tax):
        rng = random.Random(0)
        chain = set(tax.ancestors_and_self(CHAIN_Y))
        for _ in range(2000):
            cand, polarity = draw_candidate(CHAIN_Y, tax, rng)
            assert polarity == (cand in chain)

    def test_negatives_are_exclusive_siblings(self, tax):
        rng = random.Random(1)
        chain = tax.ancestors_and_self(CHAIN_Y)
        chain_parents = {tax.parent(c) for c in chain}
        for _ in range(2000):
            cand, polarity = draw_candidate(CHAIN_Y, tax, rng)
            if not polarity:
                assert cand not in chain
                assert tax.parent(cand) in chain_parents

    def test_empirical_frequencies_track_exact_values(self, tax):
        rng = random.Random(42)
        n = 30000
        counts = Counter(draw_candidate(CHAIN_Y, tax, rng) for _ in range(n))
        for cand, pol in [(CHAIN_Y, True), ("01000000", True),
                          ("15000000", False), ("01200000", False),
                          ("01120000", False)]:
            expected = float(pair_probability(CHAIN_Y, cand, pol, tax))
            got = counts[(cand, pol)] / n
            sigma = (expected * (1 - expected) / n) ** 0.5
            assert abs(got - expected) <= 4 * sigma

    def test_degenerate_taxonomy_falls_back_to_positive(self, caplog):
        lone = taxonomy_from_rows(["15000000-8,Food", "15100000-9,Crops"])
        rng = random.Random(0)
        with caplog.at_level("WARNING"):
            outcomes = {draw_candidate("15100000", lone, rng) for _ in range(200)}
        assert all(pol for _, pol in outcomes)
        assert "no exclusive siblings" in caplog.text


class TestGeneratePair:
    def test_pair_carries_serialized_sides(self, tax):
        rec = TenderRecord(id="r1", object_text="fine branch works",
                           month="May", cpv=CHAIN_Y)
        pair = generate_pair(rec, tax, random.Random(3))
        assert pair.record_id == "r1"
        assert pair.pair.input_text.startswith("fine branch works [MONTH] May")
        assert pair.pair.label_text
        assert (pair.candidate in tax.ancestors_and_self(CHAIN_Y)) == pair.polarity

    def test_unlabeled_record_rejected(self, tax):
        rec = TenderRecord(id="r1", object_text="x")
        with pytest.raises(SamplingError):
            generate_pair(rec, tax, random.Random(0))


class TestGenerateEpoch:
    def records(self, n=40):
        return [TenderRecord(id=f"r{i}", object_text=f"object {i}", cpv=CHAIN_Y)
                for i in range(n)]

    def test_same_seed_is_byte_identical(self, tax):
        a = list(generate_epoch(self.records(), tax, seed=9, epoch=1))
        b = list(generate_epoch(self.records(), tax, seed=9, epoch=1))
        assert a == b

    def test_epochs_differ(self, tax):
        a = [p.candidate for p in generate_epoch(self.records(), tax, seed=9, epoch=1)]
        b = [p.candidate for p in generate_epoch(self.records(), tax, seed=9, epoch=2)]
        assert a != b

    def test_record_order_does_not_matter(self, tax):
        records = self.records()
        forward = {p.record_id: p for p in generate_epoch(records, tax, 5, 0)}
        backward = {p.record_id: p for p in
                    generate_epoch(list(reversed(records)), tax, 5, 0)}
        assert forward == backward

    def test_skip_errors_mode(self, tax):
        records = self.records(3) + [TenderRecord(id="bad", object_text="x")]
        pairs = list(generate_epoch(records, tax, 1, 0, skip_errors=True))
        assert len(pairs) == 3
        with pytest.raises(SamplingError):
            list(generate_epoch(records, tax, 1, 0))

    def test_rng_derivation_is_stable(self):
        a = rng_for_record(1, 2, "abc").random()
        b = rng_for_record(1, 2, "abc").random()
        c = rng_for_record(1, 3, "abc").random()
        assert a == b
        assert a != c
