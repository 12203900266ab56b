"""Diagnostics tests: psychometric model, item assessment, cohort
simulation, and ROC/threshold analytics."""
import json
import math

import numpy as np
import pytest

import phonetest.diagnostics as dg
from phonetest.alignment import EditKind
from phonetest.asr import BackendError, MockBackend, default_mock_conditions
from phonetest.curation import CandidatePair
from phonetest.dsp import AudioBuffer, builtin_audiogram
from phonetest.lexicon import Lexicon

from reference_data import ITEM_DIAGNOSTICS


def build_lexicon() -> Lexicon:
    lex = Lexicon()
    entries = {
        "sat": "S AE1 T",
        "fat": "F AE1 T",
        "cat": "K AE1 T",
        "cats": "K AE1 T S",
        "see": "S IY1",
        "fee": "F IY1",
        "seal": "S IY1 L",
        "feel": "F IY1 L",
        "eel": "IY1 L",
        "eat": "IY1 T",
        "heat": "HH IY1 T",
        "girls": "G ER1 L Z",
        "girl": "G ER1 L",
    }
    for word, pron in entries.items():
        lex.add(word, tuple(pron.split()))
    return lex


LEX = build_lexicon()


def pair(target, distractor, kind=EditKind.SUBSTITUTION, clean="S", hl="F"):
    return CandidatePair(
        target=target,
        distractor=distractor,
        error_type=kind,
        clean_phoneme=clean,
        hl_phoneme=hl,
        distractor_source="phonetically-generated",
    )


BATTERY = [
    pair("sat", "fat"),
    pair("see", "fee"),
    pair("seal", "feel"),
    pair("cats", "cat", EditKind.DELETION, "S", ""),
    pair("girls", "girl", EditKind.DELETION, "Z", ""),
    pair("eat", "heat", EditKind.INSERTION, "", "HH"),
    pair("seal", "eel", EditKind.DELETION, "S", ""),
    pair("sat", "cat", EditKind.SUBSTITUTION, "S", "K"),
]


def tone(duration_s=0.3, sample_rate=16000) -> AudioBuffer:
    t = np.arange(int(duration_s * sample_rate)) / sample_rate
    return AudioBuffer(0.1 * np.sin(2 * np.pi * 440.0 * t), sample_rate)


class TestPsychometric:
    def test_chance_floor_at_zero_distance(self):
        assert dg.p_correct(0.0, 0.0) == 0.5

    def test_known_value(self):
        expected = 1.0 / (1.0 + math.exp(-2.4))
        assert dg.p_correct(3.0, 0.0) == pytest.approx(expected, abs=1e-12)

    def test_hl_pushes_toward_chance(self):
        assert dg.p_correct(3.0, 60.0) < dg.p_correct(3.0, 0.0)
        # sigmoid would go below 0.5 here; the floor catches it
        assert dg.p_correct(1.0, 100.0) == 0.5

    def test_monotone_in_both_arguments(self):
        distances = np.linspace(0, 10, 100)
        losses = np.linspace(0, 120, 100)
        for hl in (0.0, 30.0, 75.0):
            ps = [dg.p_correct(d, hl) for d in distances]
            assert all(b >= a for a, b in zip(ps, ps[1:]))
        for d in (0.0, 2.0, 6.0):
            ps = [dg.p_correct(d, hl) for hl in losses]
            assert all(b <= a for a, b in zip(ps, ps[1:]))

    def test_custom_params(self):
        params = dg.PsychometricParams(k=1.0, hl_impact_db=0.0, chance_floor=0.0)
        assert dg.p_correct(0.0, 50.0, params) == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            dg.p_correct(-1.0, 0.0)
        with pytest.raises(ValueError):
            dg.p_correct(1.0, -5.0)
        with pytest.raises(ValueError):
            dg.PsychometricParams(k=0.0)
        with pytest.raises(ValueError):
            dg.PsychometricParams(chance_floor=1.0)


class TestItemDiagnostics:
    def test_difference_property(self):
        row = dg.ItemDiagnostics(BATTERY[0], 10.0, 92.0, 60.0)
        assert row.difference == 32.0

    def test_reference_differences_replay(self):
        # every published item row satisfies difference = NH - HL
        for target, distractor, nh, hl, diff in ITEM_DIAGNOSTICS:
            row = dg.ItemDiagnostics(pair(target, distractor), 10.0, float(nh), float(hl))
            assert row.difference == pytest.approx(float(diff))

    def test_select_keeps_all_reference_items_sorted(self):
        rows = [
            dg.ItemDiagnostics(pair(t, d), 10.0, float(nh), float(hl))
            for t, d, nh, hl, _ in ITEM_DIAGNOSTICS
        ]
        kept = dg.select_diagnostic(rows, threshold_pp=5.0)
        assert len(kept) == len(ITEM_DIAGNOSTICS)
        diffs = [r.difference for r in kept]
        assert diffs == sorted(diffs, reverse=True)
        assert diffs[0] == 92.0 and diffs[-1] == 6.0

    def test_select_threshold_excludes(self):
        rows = [
            dg.ItemDiagnostics(pair("sat", "fat"), 10.0, 90.0, 88.0),
            dg.ItemDiagnostics(pair("see", "fee"), 10.0, 90.0, 50.0),
        ]
        kept = dg.select_diagnostic(rows, threshold_pp=5.0)
        assert [(r.item.target, r.item.distractor) for r in kept] == [("see", "fee")]

    def test_select_uses_best_snr_per_item(self):
        rows = [
            dg.ItemDiagnostics(pair("sat", "fat"), 5.0, 70.0, 65.0),
            dg.ItemDiagnostics(pair("sat", "fat"), 10.0, 90.0, 55.0),
        ]
        kept = dg.select_diagnostic(rows, threshold_pp=5.0)
        assert len(kept) == 1
        assert kept[0].snr_db == 10.0

    def test_select_skips_incomplete(self):
        rows = [
            dg.ItemDiagnostics(pair("sat", "fat"), 10.0, 0.0, 0.0, complete=False),
            dg.ItemDiagnostics(pair("see", "fee"), 10.0, 90.0, 40.0),
        ]
        kept = dg.select_diagnostic(rows)
        assert [(r.item.target, r.item.distractor) for r in kept] == [("see", "fee")]

    def test_optimal_snr(self):
        rows = [
            dg.ItemDiagnostics(pair("sat", "fat"), 5.0, 70.0, 65.0),
            dg.ItemDiagnostics(pair("sat", "fat"), 10.0, 90.0, 55.0),
            dg.ItemDiagnostics(pair("see", "fee"), 5.0, 95.0, 45.0),
            dg.ItemDiagnostics(pair("see", "fee"), 10.0, 85.0, 60.0),
        ]
        assert dg.optimal_snr(rows) == {("sat", "fat"): 10.0, ("see", "fee"): 5.0}

    def test_percentage_bounds(self):
        with pytest.raises(ValueError):
            dg.ItemDiagnostics(BATTERY[0], 10.0, 101.0, 60.0)


class TestAssessItems:
    def backend(self, seed=0):
        return MockBackend(LEX, default_mock_conditions(seed))

    def test_shape_and_determinism(self):
        battery = BATTERY[:2]
        kwargs = dict(
            stimuli=lambda word: tone(),
            lex=LEX,
            backend=self.backend(),
            snr_levels=[5.0, 15.0],
            trials_per_condition=4,
            seed=7,
        )
        rows_a = dg.assess_items(battery, **kwargs)
        rows_b = dg.assess_items(battery, **kwargs)
        assert rows_a == rows_b
        assert len(rows_a) == len(battery) * 2
        for row in rows_a:
            assert row.complete
            assert 0.0 <= row.nh_correct_pct <= 100.0
            assert 0.0 <= row.hl_correct_pct <= 100.0

    def test_backend_failure_marks_item_incomplete(self):
        # "few" is not in this lexicon, so the mock backend refuses it
        battery = [pair("few", "fee"), pair("sat", "fat")]
        rows = dg.assess_items(
            battery,
            stimuli=lambda word: tone(),
            lex=LEX,
            backend=self.backend(),
            snr_levels=[10.0],
            trials_per_condition=2,
        )
        by_target = {r.item.target: r for r in rows}
        assert not by_target["few"].complete
        assert by_target["sat"].complete

    def test_validation(self):
        with pytest.raises(ValueError):
            dg.assess_items([], lambda w: tone(), LEX, self.backend(), [10.0])
        with pytest.raises(ValueError):
            dg.assess_items(
                BATTERY[:1], lambda w: tone(), LEX, self.backend(), [10.0],
                trials_per_condition=0,
            )


class TestDiagnosticsIo:
    def rows(self):
        return [
            dg.ItemDiagnostics(pair("sat", "fat"), 10.0, 92.0, 60.0),
            dg.ItemDiagnostics(pair("see", "fee"), 10.0, 88.0, 52.0),
            dg.ItemDiagnostics(pair("sat", "fat"), 5.0, 75.0, 58.0),
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "diag.csv"
        dg.write_diagnostics(self.rows(), path)
        loaded = dg.read_diagnostics(path)
        assert loaded[0] == {
            "target": "sat",
            "distractor": "fat",
            "snr_db": 10.0,
            "nh_correct_pct": 92.0,
            "hl_correct_pct": 60.0,
            "difference": 32.0,
        }
        assert len(loaded) == 3

    def test_header(self, tmp_path):
        path = tmp_path / "diag.csv"
        dg.write_diagnostics(self.rows(), path)
        assert path.read_text().splitlines()[0] == (
            "OriginalWord,Distractor,SNR,NH_Perc_corr,HL_Perc_corr,Difference"
        )

    def test_reference_means(self, tmp_path):
        path = tmp_path / "diag.csv"
        dg.write_diagnostics(self.rows(), path)
        nh, hl = dg.reference_means(path, 10.0)
        assert nh == pytest.approx(90.0)
        assert hl == pytest.approx(56.0)
        with pytest.raises(ValueError):
            dg.reference_means(path, 99.0)

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("OriginalWord,Distractor\nsat,fat\n")
        with pytest.raises(ValueError, match="missing columns"):
            dg.read_diagnostics(path)


class TestCohort:
    def run(self, seed=3, **overrides):
        kwargs = dict(
            battery=BATTERY,
            lex=LEX,
            n_nh=20,
            n_hi=20,
            subset_size=6,
            seed=seed,
        )
        kwargs.update(overrides)
        return dg.simulate_cohort(**kwargs)

    def test_groups_and_sizes(self):
        run = self.run()
        groups = [p.group for p in run.participants]
        assert groups == ["NH"] * 20 + ["HI"] * 20
        for p in run.participants:
            assert len(p.item_subset) == 6
            assert len(set(p.item_subset)) == 6
            assert all(0 <= i < len(BATTERY) for i in p.item_subset)

    def test_audiograms(self):
        run = self.run()
        for p in run.participants:
            thresholds = [t for _, t in p.audiogram.points]
            if p.group == "NH":
                assert all(t == 0.0 for t in thresholds)
            else:
                assert all(t >= 0.0 for t in thresholds)
                assert p.audiogram.mean_threshold() > 0.0

    def test_hi_audiograms_vary_around_base(self):
        run = self.run()
        base = builtin_audiogram("moderate")
        his = [p for p in run.participants if p.group == "HI"]
        means = {p.audiogram.mean_threshold() for p in his}
        assert len(means) > 1
        for p in his:
            for (_, got), (_, ref) in zip(p.audiogram.points, base.points):
                assert abs(got - ref) <= 10.0 + 1e-9

    def test_separation(self):
        run = self.run()
        nh = [p.score for p in run.participants if p.group == "NH"]
        hi = [p.score for p in run.participants if p.group == "HI"]
        assert sum(nh) / len(nh) > sum(hi) / len(hi)

    def test_deterministic(self):
        a = self.run(seed=11)
        b = self.run(seed=11)
        assert [p.score for p in a.participants] == [p.score for p in b.participants]
        assert [p.item_subset for p in a.participants] == [
            p.item_subset for p in b.participants
        ]
        assert a.roc.auc == b.roc.auc

    def test_seed_changes_outcome(self):
        a = self.run(seed=1)
        b = self.run(seed=2)
        assert [p.score for p in a.participants] != [p.score for p in b.participants]

    def test_validation(self):
        with pytest.raises(ValueError):
            self.run(subset_size=len(BATTERY) + 1)
        with pytest.raises(ValueError):
            self.run(n_nh=0)


def auc_oracle(nh, hi):
    """P(NH > HI) + 0.5 P(NH == HI) over all cross-group pairs."""
    wins = ties = 0
    for a in nh:
        for b in hi:
            if a > b:
                wins += 1
            elif a == b:
                ties += 1
    return (wins + 0.5 * ties) / (len(nh) * len(hi))


class TestRoc:
    def labeled(self, nh, hi):
        return [("NH", s) for s in nh] + [("HI", s) for s in hi]

    def test_perfect_separation(self):
        r = dg.roc_analysis(self.labeled([90, 80], [60, 40]))
        assert r.auc == pytest.approx(1.0)
        assert r.youden_threshold == 80
        assert r.sensitivity == 1.0
        assert r.specificity == 1.0

    def test_overlap_matches_pair_count(self):
        nh, hi = [80, 60], [70, 50]
        r = dg.roc_analysis(self.labeled(nh, hi))
        assert r.auc == pytest.approx(auc_oracle(nh, hi))
        assert r.auc == pytest.approx(0.75)

    def test_all_tied_is_chance(self):
        r = dg.roc_analysis(self.labeled([70.0], [70.0]))
        assert r.auc == pytest.approx(0.5)

    def test_random_scores_match_pair_count(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            nh = list(np.round(rng.uniform(0, 100, size=17), 1))
            hi = list(np.round(rng.uniform(0, 100, size=23), 1))
            r = dg.roc_analysis(self.labeled(nh, hi))
            assert r.auc == pytest.approx(auc_oracle(nh, hi), abs=1e-9)

    def test_youden_tie_takes_higher_threshold(self):
        # J = 0.5 at thresholds 20 and 80; the stricter cut wins
        r = dg.roc_analysis(self.labeled([80, 20], [60, 10]))
        assert r.youden_threshold == 80

    def test_fixed_threshold_rates(self):
        r = dg.roc_analysis(self.labeled([90, 70], [85, 40]), fixed_threshold=80.0)
        assert r.fixed_sensitivity == pytest.approx(0.5)  # HI below 80
        assert r.fixed_specificity == pytest.approx(0.5)  # NH at or above 80
        assert r.fixed_threshold == 80.0

    def test_endpoints_present(self):
        r = dg.roc_analysis(self.labeled([80], [40]))
        assert r.points[0][:2] == (1.0, 1.0)
        assert r.points[-1][:2] == (0.0, 0.0)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            dg.roc_analysis([("NH", 90.0)])
        with pytest.raises(ValueError):
            dg.roc_analysis(self.labeled([], [50]))
        with pytest.raises(ValueError):
            dg.roc_analysis([("XX", 90.0), ("NH", 80.0)])


class TestClassifyHuman:
    def test_closer_mean_wins(self):
        assert dg.classify_human(95.0, 92.0, 60.0) == "Normal Hearing"
        assert dg.classify_human(55.0, 92.0, 60.0) == "Hearing Loss"

    def test_midpoint_counts_as_loss(self):
        assert dg.classify_human(76.0, 92.0, 60.0) == "Hearing Loss"

    def test_equal_means_rejected(self):
        with pytest.raises(ValueError):
            dg.classify_human(80.0, 75.0, 75.0)


class TestCohortArtifacts:
    def test_json_export(self, tmp_path):
        run = dg.simulate_cohort(
            BATTERY, LEX, n_nh=5, n_hi=5, subset_size=4, seed=9
        )
        path = tmp_path / "cohort.json"
        dg.write_cohort_json(run, path)
        data = json.loads(path.read_text())
        assert data["seed"] == 9
        assert len(data["participants"]) == 10
        assert data["auc"] == run.roc.auc
        # infinities survive the trip as strings
        roc_thresholds = [p[2] for p in data["roc"]]
        assert roc_thresholds[0] == "-inf" and roc_thresholds[-1] == "inf"

    def test_json_deterministic_bytes(self, tmp_path):
        run = dg.simulate_cohort(BATTERY, LEX, n_nh=5, n_hi=5, subset_size=4, seed=9)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        dg.write_cohort_json(run, a)
        dg.write_cohort_json(run, b)
        assert a.read_bytes() == b.read_bytes()

    def test_scores_csv(self, tmp_path):
        run = dg.simulate_cohort(BATTERY, LEX, n_nh=3, n_hi=3, subset_size=4, seed=9)
        path = tmp_path / "scores.csv"
        dg.write_scores_csv(run, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "group,score"
        assert len(lines) == 7
        assert lines[1].startswith("NH,") and lines[-1].startswith("HI,")
