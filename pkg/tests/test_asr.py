import collections

import numpy as np
import pytest

from phonetest import asr
from phonetest import dsp
from phonetest import lexicon as lx


SAMPLE = """\
SAT  S AE1 T
FAT  F AE1 T
CAT  K AE1 T
CATS  K AE1 T S
SEE  S IY1
FEE  F IY1
SAY  S EY1
FEW  F Y UW1
FEEL  F IY1 L
SEAL  S IY1 L
EEL  IY1 L
HEAT  HH IY1 T
EAT  IY1 T
"""


@pytest.fixture()
def lex(tmp_path):
    path = tmp_path / "dict.txt"
    path.write_text(SAMPLE, encoding="utf-8")
    return lx.load_lexicon(path)


@pytest.fixture()
def tone():
    t = np.arange(1600) / 16000.0
    return dsp.AudioBuffer(0.1 * np.sin(2 * np.pi * 440 * t), 16000)


class TestChannelParams:
    def test_presets_scale_the_error_mix(self):
        hl = asr.hl_channel_params()
        assert hl.p_sub == pytest.approx(0.527 * 0.40)
        assert hl.p_del == pytest.approx(0.349 * 0.40)
        assert hl.p_ins == pytest.approx(0.124 * 0.40)
        nh = asr.nh_channel_params()
        assert nh.p_sub < hl.p_sub

    def test_validation(self):
        with pytest.raises(ValueError):
            asr.MockChannelParams(p_sub=0.7, p_del=0.5, p_ins=0.1)
        with pytest.raises(ValueError):
            asr.MockChannelParams(p_sub=-0.1, p_del=0.1, p_ins=0.1)
        with pytest.raises(ValueError):
            asr.MockChannelParams(p_sub=0.1, p_del=0.1, p_ins=1.0)


class TestChannel:
    def test_zero_rates_pass_through(self):
        params = asr.MockChannelParams(p_sub=0.0, p_del=0.0, p_ins=0.0)
        rng = np.random.default_rng(0)
        out, counts = asr.channel_events(("S", "AE1", "T"), params, rng)
        assert out == ("S", "AE1", "T")
        assert counts == {"match": 3, "sub": 0, "del": 0, "ins": 0}

    def test_all_delete(self):
        params = asr.MockChannelParams(p_sub=0.0, p_del=0.999, p_ins=0.0)
        rng = np.random.default_rng(0)
        out, counts = asr.channel_events(("S", "AE1", "T"), params, rng)
        assert out == ()
        assert counts["del"] == 3

    def test_bias_steers_substitution_targets(self):
        params = asr.MockChannelParams(p_sub=0.999, p_del=0.0, p_ins=0.0)
        rng = np.random.default_rng(1)
        hits = collections.Counter()
        for _ in range(2000):
            out, counts = asr.channel_events(("S",), params, rng)
            if counts["sub"]:
                hits[out[0]] += 1
        # bias table for S has F heaviest, then T, then K
        assert set(hits) == {"F", "T", "K"}
        assert hits["F"] > hits["T"] > hits["K"]

    def test_uncovered_phoneme_substitutes_within_class(self):
        params = asr.MockChannelParams(p_sub=0.999, p_del=0.0, p_ins=0.0)
        rng = np.random.default_rng(2)
        for _ in range(200):
            out, counts = asr.channel_events(("B",), params, rng)
            if not counts["sub"]:
                continue
            assert asr.articulation_class_of(out[0]) == "Bilabial"
            assert out[0] != "B"

    def test_vowel_substitution_keeps_stress_digit(self):
        params = asr.MockChannelParams(p_sub=0.999, p_del=0.0, p_ins=0.0)
        rng = np.random.default_rng(3)
        for _ in range(100):
            out, _ = asr.channel_events(("UW1",), params, rng)
            assert out[0].endswith("1")
            assert out[0] != "UW1"

    def test_insertions_are_valid_tokens(self):
        params = asr.MockChannelParams(p_sub=0.0, p_del=0.0, p_ins=0.9)
        rng = np.random.default_rng(4)
        out, counts = asr.channel_events(("T",), params, rng)
        assert counts["ins"] == len(out) - 1
        for tok in out:
            assert lx.base_phoneme(tok) in lx.PHONEME_INVENTORY

    def test_hl_calibration_over_long_stream(self):
        params = asr.hl_channel_params(seed=0)
        rng = np.random.default_rng(123)
        inventory = sorted(lx.CONSONANTS) + [v + "1" for v in sorted(lx.VOWELS)]
        stream = tuple(
            inventory[i] for i in rng.integers(0, len(inventory), size=30_000)
        )
        _, counts = asr.channel_events(stream, params, rng)
        total = counts["sub"] + counts["del"] + counts["ins"]
        assert total > 0
        assert 100 * counts["sub"] / total == pytest.approx(52.7, abs=2.0)
        assert 100 * counts["del"] / total == pytest.approx(34.9, abs=2.0)
        assert 100 * counts["ins"] / total == pytest.approx(12.4, abs=2.0)


class TestWordMapping:
    def test_exact_reverse_lookup(self, lex):
        assert asr.phonemes_to_word(("K", "AE1", "T"), lex) == "cat"
        assert asr.phonemes_to_word(("K", "AE0", "T"), lex) == "cat"

    def test_nearest_neighbor_fallback(self, lex):
        # D AE1 T is no word here; cat/sat/fat are all distance 1,
        # cat wins alphabetically among the shortest
        assert asr.phonemes_to_word(("D", "AE1", "T"), lex) == "cat"

    def test_empty_sequence_is_empty_string(self, lex):
        assert asr.phonemes_to_word((), lex) == ""

    def test_mock_transcribe_perfect_channel(self, lex):
        params = asr.MockChannelParams(p_sub=0.0, p_del=0.0, p_ins=0.0)
        assert asr.mock_transcribe(("S", "AE1", "T"), params, lex) == "sat"


class TestMockBackend:
    def make(self, lex):
        return asr.MockBackend(lex, asr.default_mock_conditions(seed=7))

    def test_deterministic_per_request(self, lex, tone):
        backend = self.make(lex)
        req = asr.TranscriptionRequest(tone, "HL", word="sat", trial=3)
        assert backend.transcribe(req) == backend.transcribe(req)

    def test_trial_changes_the_draw(self, lex, tone):
        backend = self.make(lex)
        outs = {
            backend.transcribe(
                asr.TranscriptionRequest(tone, "HL", word="seal", trial=t)
            )
            for t in range(40)
        }
        assert len(outs) > 1  # HL channel is noisy across trials

    def test_clean_condition_mostly_correct(self, lex, tone):
        backend = self.make(lex)
        correct = sum(
            backend.transcribe(
                asr.TranscriptionRequest(tone, "clean", word="sat", trial=t)
            )
            == "sat"
            for t in range(100)
        )
        assert correct >= 85

    def test_unknown_condition_rejected(self, lex, tone):
        backend = self.make(lex)
        with pytest.raises(asr.BackendError) as info:
            backend.transcribe(asr.TranscriptionRequest(tone, "weird", word="sat"))
        assert info.value.condition_label == "weird"

    def test_word_required(self, lex, tone):
        backend = self.make(lex)
        with pytest.raises(asr.BackendError):
            backend.transcribe(asr.TranscriptionRequest(tone, "HL"))

    def test_word_must_be_in_lexicon(self, lex, tone):
        backend = self.make(lex)
        with pytest.raises(asr.BackendError) as info:
            backend.transcribe(asr.TranscriptionRequest(tone, "HL", word="zebra"))
        assert info.value.word == "zebra"


class TestCommandBackend:
    def test_stdout_is_hypothesis(self, lex, tone):
        backend = asr.CommandBackend(["sh", "-c", "echo hello"])
        req = asr.TranscriptionRequest(tone, "NH", word="sat")
        assert backend.transcribe(req) == "hello"

    def test_wav_path_is_appended(self, tone, tmp_path):
        # the command sees the temp wav as its only argument
        backend = asr.CommandBackend(["sh", "-c", 'test -f "$1" && echo ok', "sh"])
        req = asr.TranscriptionRequest(tone, "NH")
        assert backend.transcribe(req) == "ok"

    def test_nonzero_exit_raises(self, tone):
        backend = asr.CommandBackend(["sh", "-c", "echo bad >&2; exit 3"])
        req = asr.TranscriptionRequest(tone, "NH", word="sat")
        with pytest.raises(asr.BackendError, match="exited 3"):
            backend.transcribe(req)

    def test_missing_binary_raises(self, tone):
        backend = asr.CommandBackend(["/no/such/recognizer"])
        with pytest.raises(asr.BackendError):
            backend.transcribe(asr.TranscriptionRequest(tone, "NH"))

    def test_empty_command_rejected(self):
        with pytest.raises(ValueError):
            asr.CommandBackend([])


class TestForcedChoice:
    def test_exact_match_wins(self, lex):
        assert asr.forced_choice("sat", "sat", "fat", lex) == "sat"
        assert asr.forced_choice("fat", "sat", "fat", lex) == "fat"

    def test_normalization_first(self, lex):
        assert asr.forced_choice("SAT!", "sat", "fat", lex) == "sat"

    def test_closer_pronunciation_wins(self, lex):
        # "see" is phonetically closer to "seal" than to "fat"
        assert asr.forced_choice("see", "seal", "fat", lex) == "seal"

    def test_label_swap_symmetry(self, lex):
        for output in ("sat", "see", "xyz", ""):
            a = asr.forced_choice(output, "seal", "feel", lex, seed=5)
            b = asr.forced_choice(output, "feel", "seal", lex, seed=5)
            assert a == b

    def test_empty_output_is_fair_coin(self, lex):
        wins = collections.Counter(
            asr.forced_choice("", "sat", "fat", lex, seed=s) for s in range(400)
        )
        assert set(wins) == {"sat", "fat"}
        assert 120 < wins["sat"] < 280

    def test_tie_is_fair_coin(self, lex):
        # "cat" is distance 1 from both "sat" and "fat" (onset substitution)
        wins = collections.Counter(
            asr.forced_choice("cat", "sat", "fat", lex, seed=s) for s in range(400)
        )
        assert set(wins) == {"sat", "fat"}
        assert 120 < wins["sat"] < 280

    def test_probabilistic_mode_favors_closer(self, lex):
        wins = collections.Counter(
            asr.forced_choice(
                "see", "seal", "fat", lex, mode="probabilistic", seed=s
            )
            for s in range(400)
        )
        assert wins["seal"] > wins["fat"]
        assert wins["fat"] > 0  # but the farther option still gets sampled

    def test_same_options_rejected(self, lex):
        with pytest.raises(ValueError):
            asr.forced_choice("sat", "sat", "sat", lex)

    def test_unknown_option_rejected(self, lex):
        with pytest.raises(LookupError):
            asr.forced_choice("sat", "sat", "zebra", lex)

    def test_unknown_mode_rejected(self, lex):
        with pytest.raises(ValueError):
            asr.forced_choice("sat", "sat", "fat", lex, mode="psychic")


def test_backend_config_validation():
    with pytest.raises(ValueError):
        asr.BackendConfig(kind="telepathy")
    with pytest.raises(ValueError):
        asr.BackendConfig(timeout_s=0)


def test_make_backend_dispatch(lex):
    assert isinstance(
        asr.make_backend(asr.BackendConfig(kind="mock"), lex), asr.MockBackend
    )
    assert isinstance(
        asr.make_backend(asr.BackendConfig(kind="command", command=("cat",)), lex),
        asr.CommandBackend,
    )
    assert isinstance(
        asr.make_backend(asr.BackendConfig(kind="http", url="http://x/y"), lex),
        asr.HttpBackend,
    )
