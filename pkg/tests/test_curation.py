"""Battery curation tests: apportionment, filters, distractor generation,
and the two-phase selection loop."""
import pytest

import phonetest.curation as cu
from phonetest.alignment import EPSILON, EditKind, align
from phonetest.confusion import record_from_alignment
from phonetest.lexicon import Lexicon


def build_lexicon() -> Lexicon:
    lex = Lexicon()
    entries = {
        "sat": ["S AE1 T"],
        "fat": ["F AE1 T"],
        "fats": ["F AE1 T S"],
        "cat": ["K AE1 T"],
        "cats": ["K AE1 T S"],
        "bat": ["B AE1 T"],
        "see": ["S IY1"],
        "fee": ["F IY1"],
        "sea": ["S IY1"],
        "tea": ["T IY1"],
        "seal": ["S IY1 L"],
        "feel": ["F IY1 L"],
        "eel": ["IY1 L"],
        "girls": ["G ER1 L Z"],
        "girl": ["G ER1 L"],
        "object": ["AA1 B JH EH0 K T"],
        "eject": ["IH0 JH EH1 K T"],
        "a": ["AH0"],
        "elephant": ["EH1 L AH0 F AH0 N T"],
        "muddy": ["M AH1 D IY0"],
        "money": ["M AH1 N IY0"],
        "mud": ["M AH1 D"],
        "eat": ["IY1 T"],
        "heat": ["HH IY1 T"],
        "few": ["F Y UW1"],
    }
    for word, prons in entries.items():
        for pron in prons:
            lex.add(word, tuple(pron.split()))
    return lex


LEX = build_lexicon()


def rec(word: str, clean: str, hl: str, condition: str = "HL"):
    return record_from_alignment(word, condition, tuple(clean.split()), tuple(hl.split()))


def key(kind: EditKind, clean: str, hl: str) -> cu.ConfusionKey:
    return cu.ConfusionKey(kind, clean, hl)


class TestApportionment:
    def test_default_battery_split(self):
        assert cu.largest_remainder(200, (0.527, 0.349, 0.124)) == [105, 70, 25]

    def test_sums_to_total(self):
        for total in (1, 7, 50, 199, 200, 1000):
            parts = cu.largest_remainder(total, (0.527, 0.349, 0.124))
            assert sum(parts) == total
            assert all(p >= 0 for p in parts)

    def test_exact_quotas_untouched(self):
        assert cu.largest_remainder(10, (0.5, 0.3, 0.2)) == [5, 3, 2]

    def test_tie_goes_to_earlier_index(self):
        # quotas 1.5 / 1.5 with one leftover seat
        assert cu.largest_remainder(3, (0.5, 0.5)) == [2, 1]

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            cu.largest_remainder(10, (0.0, 0.0))
        with pytest.raises(ValueError):
            cu.largest_remainder(-1, (1.0,))


class TestFilter:
    CFG = cu.CurationConfig()

    def make(self, target, distractor):
        return cu.CandidatePair(
            target=target,
            distractor=distractor,
            error_type=EditKind.SUBSTITUTION,
            clean_phoneme="S",
            hl_phoneme="F",
            distractor_source="phonetically-generated",
        )

    def test_accepts_close_pair(self):
        assert cu.filter_candidate(self.make("girls", "girl"), LEX, self.CFG) is None
        assert cu.filter_candidate(self.make("object", "eject"), LEX, self.CFG) is None

    def test_rejects_distant_spelling(self):
        assert cu.filter_candidate(self.make("a", "elephant"), LEX, self.CFG) == "word_lev"

    def test_rejects_out_of_lexicon(self):
        assert cu.filter_candidate(self.make("sat", "zat"), LEX, self.CFG) == "lexicon"

    def test_rejects_syllable_mismatch(self):
        assert cu.filter_candidate(self.make("muddy", "mud"), LEX, self.CFG) == "syllables"

    def test_rejects_phoneme_distance(self):
        tight = cu.CurationConfig(max_phoneme_lev=1)
        assert cu.filter_candidate(self.make("object", "eject"), LEX, tight) == "phoneme_lev"

    def test_word_lev_checked_first(self):
        # fails both spelling and lexicon checks; spelling wins
        assert (
            cu.filter_candidate(self.make("a", "xylophones"), LEX, self.CFG)
            == "word_lev"
        )


class TestGenerateDistractors:
    def test_phonetic_substitution(self):
        pairs = cu.generate_distractors("sat", key(EditKind.SUBSTITUTION, "S", "F"), LEX)
        assert [(p.target, p.distractor) for p in pairs] == [("sat", "fat")]
        assert pairs[0].distractor_source == "phonetically-generated"

    def test_phonetic_deletion(self):
        pairs = cu.generate_distractors("cats", key(EditKind.DELETION, "S", EPSILON), LEX)
        assert [p.distractor for p in pairs] == ["cat"]

    def test_phonetic_insertion(self):
        pairs = cu.generate_distractors("eat", key(EditKind.INSERTION, EPSILON, "HH"), LEX)
        assert [p.distractor for p in pairs] == ["heat"]

    def test_homophones_all_surface(self):
        pairs = cu.generate_distractors("sat", key(EditKind.SUBSTITUTION, "AE1", "IY1"), LEX)
        # S IY1 T is no word, but swapping the vowel in a "sea"-adjacent
        # lexicon would be; here nothing matches
        assert pairs == []

    def test_observed_ranked_before_generated(self):
        # recognizer produced "fats" (S->F plus a trailing insertion), so the
        # record carries the key op and its transcript reverse-looks-up to a
        # different word than the pure single edit
        records = [rec("sat", "S AE1 T", "F AE1 T S")]
        pairs = cu.generate_distractors(
            "sat", key(EditKind.SUBSTITUTION, "S", "F"), LEX, records
        )
        assert [(p.distractor, p.distractor_source) for p in pairs] == [
            ("fats", "ASR-observed"),
            ("fat", "phonetically-generated"),
        ]

    def test_observed_requires_matching_key(self):
        # the record's script has no S->F op, so it contributes nothing
        records = [rec("sat", "S AE1 T", "S AE1 T S")]
        pairs = cu.generate_distractors(
            "sat", key(EditKind.SUBSTITUTION, "S", "F"), LEX, records
        )
        assert [(p.distractor, p.distractor_source) for p in pairs] == [
            ("fat", "phonetically-generated")
        ]

    def test_impossible_key_yields_nothing(self):
        assert cu.generate_distractors("sat", key(EditKind.SUBSTITUTION, "ZH", "F"), LEX) == []

    def test_unknown_target_raises(self):
        with pytest.raises(KeyError):
            cu.generate_distractors("zzz", key(EditKind.SUBSTITUTION, "S", "F"), LEX)


def happy_records():
    records = []
    # Substitution S->F, count 5 across three targets
    records += [rec("sat", "S AE1 T", "F AE1 T")] * 3
    records += [rec("see", "S IY1", "F IY1")]
    records += [rec("seal", "S IY1 L", "F IY1 L")]
    # Deletion of S, count 3
    records += [rec("cats", "K AE1 T S", "K AE1 T")] * 3
    # Deletion of Z, count 1
    records += [rec("girls", "G ER1 L Z", "G ER1 L")]
    # Insertion of HH, count 2
    records += [rec("eat", "IY1 T", "HH IY1 T")] * 2
    return records


class TestCurate:
    CFG = cu.CurationConfig(total_items=6, phase1_top_k=3)

    def test_happy_path(self):
        result = cu.curate(happy_records(), LEX, self.CFG)
        got = [(p.target, p.distractor) for p in result.pairs]
        assert got == [
            ("sat", "fat"),      # phase 1: top key Substitution_S_F
            ("cats", "cat"),     # phase 1: Deletion_S
            ("eat", "heat"),     # phase 1: Insertion_HH
            ("see", "fee"),      # phase 2 substitution fill
            ("seal", "feel"),
            ("girls", "girl"),   # phase 2 deletion fill from the next key
        ]
        assert result.warnings == []
        assert result.type_targets == {
            EditKind.SUBSTITUTION: 3,
            EditKind.DELETION: 2,
            EditKind.INSERTION: 1,
        }
        assert result.type_counts[EditKind.SUBSTITUTION] == 3
        assert result.type_counts[EditKind.DELETION] == 2
        assert result.type_counts[EditKind.INSERTION] == 1

    def test_no_duplicate_pairs(self):
        result = cu.curate(happy_records(), LEX, self.CFG)
        idents = [(p.target, p.distractor) for p in result.pairs]
        assert len(idents) == len(set(idents))

    def test_deterministic(self):
        a = cu.curate(happy_records(), LEX, self.CFG)
        b = cu.curate(happy_records(), LEX, self.CFG)
        assert a.pairs == b.pairs
        assert a.warnings == b.warnings

    def test_every_pair_passes_filter(self):
        result = cu.curate(happy_records(), LEX, self.CFG)
        for pair in result.pairs:
            assert cu.filter_candidate(pair, LEX, self.CFG) is None

    def test_relevance_annotated(self):
        result = cu.curate(happy_records(), LEX, self.CFG)
        by_ident = {(p.target, p.distractor): p for p in result.pairs}
        assert by_ident[("sat", "fat")].frequency_relevance == "High"  # S
        assert by_ident[("cats", "cat")].frequency_relevance == "High"  # S deleted
        assert by_ident[("eat", "heat")].frequency_relevance == "General"  # HH inserted

    def test_single_type_dataset_warns(self):
        records = [rec("sat", "S AE1 T", "F AE1 T")] * 4
        result = cu.curate(records, LEX, self.CFG)
        kinds = {p.error_type for p in result.pairs}
        assert kinds == {EditKind.SUBSTITUTION}
        text = " ".join(result.warnings)
        assert "Deletion" in text and "Insertion" in text

    def test_shortfall_warning_counts_missing(self):
        # only one substitution candidate exists but three are wanted
        records = [rec("sat", "S AE1 T", "F AE1 T")]
        result = cu.curate(records, LEX, self.CFG)
        sub_warning = [w for w in result.warnings if w.startswith("Substitution")]
        assert sub_warning and "short by" in sub_warning[0]

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            cu.curate([], LEX, self.CFG)

    def test_phase1_quota_spreads_coverage(self):
        # with a large quota one key could swallow the battery; the quota
        # (total // top_k // 2) holds each key to its share in phase 1
        cfg = cu.CurationConfig(total_items=4, phase1_top_k=2)
        records = happy_records()
        result = cu.curate(records, LEX, cfg)
        # quota is 4 // 2 // 2 = 1, so phase 1 takes one sub + one del
        assert (result.pairs[0].target, result.pairs[0].distractor) == ("sat", "fat")
        assert (result.pairs[1].target, result.pairs[1].distractor) == ("cats", "cat")


class TestBatteryIo:
    def test_round_trip(self, tmp_path):
        result = cu.curate(happy_records(), LEX, cu.CurationConfig(total_items=6, phase1_top_k=3))
        path = tmp_path / "battery.csv"
        cu.write_battery(result.pairs, path)
        loaded = cu.read_battery(path)
        assert loaded == result.pairs

    def test_header(self, tmp_path):
        path = tmp_path / "battery.csv"
        cu.write_battery(
            [
                cu.CandidatePair(
                    "sat", "fat", EditKind.SUBSTITUTION, "S", "F", "ASR-observed"
                )
            ],
            path,
        )
        header = path.read_text().splitlines()[0]
        assert header == (
            "OriginalWord,Distractor,ErrorType,CleanPhonemeInvolved,"
            "HLPhonemeInvolved,FrequencyRelevance,DistractorSource"
        )

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("OriginalWord,Distractor\nsat,fat\n")
        with pytest.raises(ValueError, match="missing columns"):
            cu.read_battery(path)

    def test_empty_battery_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        cu.write_battery([], path)
        with pytest.raises(ValueError, match="no items"):
            cu.read_battery(path)


class TestConfusionKey:
    def test_label(self):
        assert key(EditKind.SUBSTITUTION, "S", "F").label == "Substitution_S_F"
        assert key(EditKind.DELETION, "T", EPSILON).label == "Deletion_T_"

    def test_match_rejected(self):
        ops = align(("S",), ("S",)).ops
        with pytest.raises(ValueError):
            cu.ConfusionKey.from_op(ops[0])

    def test_pair_validation(self):
        with pytest.raises(ValueError):
            cu.CandidatePair("sat", "sat", EditKind.SUBSTITUTION, "S", "F", "ASR-observed")
        with pytest.raises(ValueError):
            cu.CandidatePair("sat", "fat", EditKind.MATCH, "S", "F", "ASR-observed")
        with pytest.raises(ValueError):
            cu.CandidatePair("sat", "fat", EditKind.SUBSTITUTION, "S", "F", "guessed")
