import json

import pytest

from geoerasure import (
    Prompt,
    PromptSet,
    PromptTemplate,
    SplitError,
    SubjectConfig,
    TemplateError,
    ValidationError,
    expand,
    split,
)
from geoerasure.prompts import (
    load_prompt_set,
    load_split_manifest,
    load_subject_config,
    load_templates,
    save_prompt_set,
    save_split_manifest,
)

MINI_SUBJECTS = SubjectConfig(
    pronouns=("I", "She"),
    possessives=("My", "Her"),
    relatives=(),
    conjugations={
        "live": {"I": "live", "she": "lives", "third_noun": "lives"},
    },
    possessive_class={"My": "I", "Her": "she"},
)


def template_live():
    return PromptTemplate(
        template_id=2,
        text_pattern="{subject} {verb} in",
        style="verb_form",
        verb_lemma="live",
        verb_group="live in",
    )


def template_homeland():
    return PromptTemplate(
        template_id=4,
        text_pattern="{possessive} homeland is",
        style="possessive_form",
        verb_group="homeland is",
    )


class TestTemplates:
    def test_verb_form_requires_slots(self):
        with pytest.raises(TemplateError):
            PromptTemplate(1, "no slots here", "verb_form", "g", "live")
        with pytest.raises(TemplateError):
            PromptTemplate(1, "{subject} fixed text", "verb_form", "g", "live")

    def test_possessive_form_requires_slot(self):
        with pytest.raises(TemplateError):
            PromptTemplate(1, "static text", "possessive_form", "g")

    def test_unknown_style(self):
        with pytest.raises(TemplateError):
            PromptTemplate(1, "{subject} {verb}", "interrogative", "g", "live")


class TestExpand:
    def test_two_subject_expansion(self):
        config = SubjectConfig(
            pronouns=("I", "She"),
            possessives=(),
            relatives=(),
            conjugations={"live": {"I": "live", "she": "lives"}},
            possessive_class={},
        )
        ps = expand([template_live()], config)
        assert ps.texts() == ("I live in", "She lives in")

    def test_possessive_expansion(self):
        config = SubjectConfig(
            pronouns=(),
            possessives=("My", "Her"),
            relatives=(),
            conjugations={},
            possessive_class={"My": "I", "Her": "she"},
        )
        ps = expand([template_homeland()], config)
        assert ps.texts() == ("My homeland is", "Her homeland is")

    def test_combo_subjects_use_third_person(self):
        config = SubjectConfig(
            pronouns=("I",),
            possessives=("My",),
            relatives=("uncle", "aunt"),
            conjugations={
                "live": {"I": "live", "third_noun": "lives"},
            },
            possessive_class={"My": "I"},
        )
        ps = expand([template_live()], config)
        assert ps.texts() == ("I live in", "My uncle lives in", "My aunt lives in")
        combo = ps.prompts[1]
        assert combo.subject_tag == "my uncle"
        assert combo.pronoun_class == "I"

    def test_determinism(self, prompt_set, fixture_dir):
        again = expand(
            load_templates(fixture_dir / "templates.json"),
            load_subject_config(fixture_dir / "subjects.json"),
        )
        assert again == prompt_set

    def test_fixture_expansion_order(self, prompt_set):
        assert prompt_set.texts() == (
            "I live in",
            "She lives in",
            "I reside in",
            "She resides in",
            "My homeland is",
            "Her homeland is",
        )

    def test_missing_conjugation_is_template_error(self):
        config = SubjectConfig(
            pronouns=("They",),
            possessives=(),
            relatives=(),
            conjugations={"live": {"I": "live"}},
            possessive_class={},
        )
        with pytest.raises(TemplateError):
            expand([template_live()], config)

    def test_no_templates(self):
        with pytest.raises(ValidationError):
            expand([], MINI_SUBJECTS)


class TestShippedConfigGolden:
    def test_expansion_count_and_agreement(self):
        from importlib import resources

        data = resources.files("geoerasure").joinpath("data")
        templates = load_templates(str(data / "prompt_templates.json"))
        subjects = load_subject_config(str(data / "subject_config.json"))
        ps = expand(templates, subjects)

        # independent oracle: count by combinatorics over the config itself
        n_pronouns = len(subjects.pronouns)
        n_combo = len(subjects.possessives) * len(subjects.relatives)
        n_verb_templates = sum(1 for t in templates if t.style == "verb_form")
        n_poss_templates = len(templates) - n_verb_templates
        expected = n_verb_templates * (n_pronouns + n_combo) + n_poss_templates * len(
            subjects.possessives
        )
        assert expected == 932  # frozen golden for the shipped config
        assert len(ps) == expected

        # grammar agreement, checked against the conjugation table itself
        by_lemma = {t.template_id: t.verb_lemma for t in templates}
        for prompt in ps:
            lemma = by_lemma.get(prompt.template_id)
            if lemma is None:
                continue
            person = (
                "third_noun" if " " in prompt.subject_tag else prompt.pronoun_class
            )
            expected_verb = subjects.conjugations[lemma][person]
            assert f" {expected_verb} " in prompt.text + " ", prompt.text

    def test_known_formulations_present(self):
        from importlib import resources

        data = resources.files("geoerasure").joinpath("data")
        ps = expand(
            load_templates(str(data / "prompt_templates.json")),
            load_subject_config(str(data / "subject_config.json")),
        )
        texts = set(ps.texts())
        assert {"I live in", "You live in", "He lives in", "She lives in"} <= texts
        assert "I am from" in texts and "They are from" in texts
        assert "My uncle was born and raised in" in texts
        assert "Their cousin grew up in" in texts


class TestPromptSetInvariants:
    def test_no_duplicate_texts(self):
        p = Prompt("I live in", 1, "I", "live in", "I")
        with pytest.raises(ValidationError):
            PromptSet((p, Prompt("I live in", 2, "I", "reside in", "I")))

    def test_trailing_whitespace_rejected(self):
        with pytest.raises(ValidationError):
            Prompt("I live in ", 1, "I", "live in", "I")

    def test_placeholder_rejected(self):
        with pytest.raises(ValidationError):
            Prompt("{subject} lives in", 1, "I", "live in", "I")

    def test_priors_must_sum_to_one(self):
        p1 = Prompt("I live in", 1, "I", "live in", "I")
        p2 = Prompt("She lives in", 1, "she", "live in", "she")
        PromptSet((p1, p2), (0.25, 0.75))
        with pytest.raises(ValidationError):
            PromptSet((p1, p2), (0.5, 0.75))
        with pytest.raises(ValidationError):
            PromptSet((p1, p2), (1.5, -0.5))


class TestSplits:
    def test_random_sizes(self, prompt_set):
        for seed in (0, 1, 7):
            train, test = split(prompt_set, "random", seed)
            assert len(train) == 4 and len(test) == 2

    def test_random_four_prompts(self, prompt_set):
        small = PromptSet(prompt_set.prompts[:4])
        train, test = split(small, "random", 123)
        assert sorted([len(train), len(test)]) == [1, 3]

    def test_partition_property(self, prompt_set):
        for strategy in ("random", "pronoun", "verb"):
            train, test = split(prompt_set, strategy, 3)
            assert set(train.texts()) | set(test.texts()) == set(prompt_set.texts())
            assert not set(train.texts()) & set(test.texts())

    def test_pronoun_holdout(self, prompt_set):
        train, test = split(prompt_set, "pronoun", 0, holdout=["I"])
        assert all(p.pronoun_class == "I" for p in test)
        assert all(p.pronoun_class != "I" for p in train)
        # possessive prompts follow their pronoun class
        assert "My homeland is" in test.texts()
        assert "Her homeland is" in train.texts()

    def test_verb_holdout_reside_lands_in_test(self, prompt_set):
        train, test = split(prompt_set, "verb", 0, holdout=["reside in"])
        assert "I reside in" in test.texts()
        assert all(p.verb_group == "reside in" for p in test)
        assert all(p.verb_group != "reside in" for p in train)

    def test_seeded_group_split_never_mixes(self, prompt_set):
        for seed in range(8):
            train, test = split(prompt_set, "verb", seed)
            assert not (
                {p.verb_group for p in train} & {p.verb_group for p in test}
            )

    def test_infeasible_single_group(self):
        prompts = (
            Prompt("I live in", 2, "I", "live in", "I"),
            Prompt("She lives in", 2, "she", "live in", "she"),
        )
        with pytest.raises(SplitError):
            split(PromptSet(prompts), "verb", 0)

    def test_priors_renormalized(self, prompt_set):
        weighted = PromptSet(prompt_set.prompts, tuple([1 / 6] * 6))
        train, test = split(weighted, "random", 5)
        assert sum(train.priors) == pytest.approx(1.0, abs=1e-9)
        assert sum(test.priors) == pytest.approx(1.0, abs=1e-9)

    def test_bad_strategy(self, prompt_set):
        with pytest.raises(SplitError):
            split(prompt_set, "alphabetical", 0)


class TestSerialization:
    def test_prompt_set_round_trip(self, prompt_set, tmp_path):
        path = tmp_path / "prompts.json"
        save_prompt_set(prompt_set, path)
        assert load_prompt_set(path) == prompt_set

    def test_split_manifest_round_trip(self, prompt_set, tmp_path):
        train, test = split(prompt_set, "pronoun", 11, holdout=["she"])
        path = tmp_path / "split.json"
        save_split_manifest(
            train, test, path, strategy="pronoun", fold_seed=11, holdout=["she"]
        )
        train2, test2, meta = load_split_manifest(path)
        assert train2 == train and test2 == test
        assert meta["strategy"] == "pronoun"
        assert meta["holdout"] == ["she"]

    def test_rejects_malformed(self, tmp_path):
        from geoerasure import SchemaError

        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"not_prompts": []}))
        with pytest.raises(SchemaError):
            load_prompt_set(bad)
