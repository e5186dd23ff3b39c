import pytest

from promptsep.core.errors import PromptSetError
from promptsep.core.types import PromptCategory, PromptSet, find_violation

P = PromptCategory


class TestPromptCategory:
    def test_parse_is_case_insensitive(self):
        assert PromptCategory.parse("SFX-Mix") is P.SFX_MIX
        assert PromptCategory.parse("other_inst") is P.OTHER_INST
        assert PromptCategory.parse(" music-mix ") is P.MUSIC_MIX

    def test_unknown_category(self):
        with pytest.raises(ValueError, match="piano"):
            PromptCategory.parse("piano")

    def test_eight_table_rows(self):
        assert sorted(c.index for c in PromptCategory) == list(range(8))

    def test_repeatable(self):
        assert [c for c in PromptCategory if c.is_repeatable] == [P.SPEECH, P.SFX]


class TestPromptSet:
    @pytest.mark.parametrize(
        "text",
        [
            "speech,sfx-mix",
            "speech,speech,speech",
            "sfx,sfx,sfx,speech",
            "drums,bass,vocals,other-inst",
            "speech,sfx-mix,music-mix",
            "vocals",
        ],
    )
    def test_valid(self, text):
        prompts = PromptSet.parse(text)
        assert str(prompts) == text

    @pytest.mark.parametrize(
        "text, rule, message",
        [
            ("sfx,sfx-mix", "sfx-exclusion", "SFX and SFX-mix cannot coexist"),
            ("music-mix,drums", "music-exclusion", "drums"),
            ("speech,music-mix,vocals,bass", "music-exclusion", "bass, vocals"),
            ("bass,bass", "once-only", "at most once"),
            ("sfx-mix,speech,sfx-mix", "once-only", "sfx-mix"),
        ],
    )
    def test_rules(self, text, rule, message):
        with pytest.raises(PromptSetError, match=message) as info:
            PromptSet.parse(text)
        assert info.value.rule == rule

    def test_empty(self):
        with pytest.raises(PromptSetError) as info:
            PromptSet(())
        assert info.value.rule == "empty"
        assert find_violation([]) is not None

    def test_order_is_kept(self):
        prompts = PromptSet.of(P.SFX_MIX, "speech", P.SPEECH)
        assert prompts.names == ["sfx-mix", "speech", "speech"]
        assert prompts.indices == [P.SFX_MIX.index, P.SPEECH.index, P.SPEECH.index]

    def test_positions(self):
        prompts = PromptSet.parse("speech,sfx-mix,speech")
        assert prompts.positions() == {P.SPEECH: [0, 2], P.SFX_MIX: [1]}

    def test_without_and_permuted(self):
        prompts = PromptSet.parse("vocals,drums,bass")
        assert prompts.without([0, 2]).names == ["drums"]
        assert prompts.permuted([2, 0, 1]).names == ["bass", "vocals", "drums"]

    def test_coerce(self):
        prompts = PromptSet.parse("speech,sfx")
        assert PromptSet.coerce(prompts) is prompts
        assert PromptSet.coerce("speech,sfx") == prompts
        assert PromptSet.coerce([P.SPEECH, "sfx"]) == prompts
