import csv
import json
from pathlib import Path

import pytest

from geoerasure.cli import main
from geoerasure.prompts import load_prompt_set, load_split_manifest
from geoerasure.report import load_report

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_args(out_dir, **extra):
    args = [
        "--backend", "mock",
        "--mock-table", str(FIXTURES / "mock_table.tsv"),
        "--population", str(FIXTURES / "population.csv"),
        "--aliases", str(FIXTURES / "aliases.json"),
        "--templates", str(FIXTURES / "templates.json"),
        "--subjects", str(FIXTURES / "subjects.json"),
        "--out-dir", str(out_dir),
    ]
    for key, value in extra.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    return args


def run_audit(out_dir, **extra):
    code = main(["audit", *fixture_args(out_dir, **extra)])
    assert code == 0
    return load_report(Path(out_dir) / "report.json")


class TestExpandPrompts:
    def test_writes_prompt_set(self, tmp_path):
        out = tmp_path / "prompts.json"
        code = main([
            "expand-prompts",
            "--templates", str(FIXTURES / "templates.json"),
            "--subjects", str(FIXTURES / "subjects.json"),
            "--out", str(out),
        ])
        assert code == 0
        ps = load_prompt_set(out)
        assert len(ps) == 6

    def test_emits_split_manifest(self, tmp_path):
        out = tmp_path / "prompts.json"
        code = main([
            "expand-prompts",
            "--templates", str(FIXTURES / "templates.json"),
            "--subjects", str(FIXTURES / "subjects.json"),
            "--out", str(out),
            "--split", "verb",
            "--holdout", "reside in",
            "--split-out", str(tmp_path / "split.json"),
            "--seed", "3",
        ])
        assert code == 0
        train, test, meta = load_split_manifest(tmp_path / "split.json")
        assert meta["strategy"] == "verb"
        assert {p.verb_group for p in test} == {"reside in"}

    def test_shipped_defaults(self, tmp_path):
        out = tmp_path / "prompts.json"
        assert main(["expand-prompts", "--out", str(out)]) == 0
        assert len(load_prompt_set(out)) == 932


class TestAudit:
    def test_matches_committed_golden(self, tmp_path):
        run_audit(tmp_path, seed=7)
        got = (tmp_path / "report.json").read_bytes()
        want = (FIXTURES / "golden_report.json").read_bytes()
        assert got == want

    def test_idempotent_reruns(self, tmp_path):
        run_audit(tmp_path / "a", seed=7)
        run_audit(tmp_path / "b", seed=7)
        for name in ("report.json", "per_country_ratios.csv", "boxplot_stats.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_ratio_table_round_trips(self, tmp_path):
        report = run_audit(tmp_path, seed=7)
        with (tmp_path / "per_country_ratios.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["country"] for r in rows] == list(report.candidate_names)
        for row in rows:
            assert float(row["ratio"]) == report.per_country_ratios[row["country"]]
            erased = row["country"] in report.aggregate_model.erasure_set.names()
            assert row["erased_at_r"] == ("1" if erased else "0")

    def test_missing_population_file_exits_2(self, tmp_path, capsys):
        args = fixture_args(tmp_path)
        idx = args.index("--population")
        args[idx + 1] = str(tmp_path / "nope.csv")
        assert main(["audit", *args]) == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_low_r_exits_2(self, tmp_path):
        assert main(["audit", *fixture_args(tmp_path, r=0.5)]) == 2

    def test_unscoreable_prompts_exit_3(self, tmp_path, capsys):
        # each prompt context spends its full mass on one token, so every
        # other candidate token has probability zero and scoring fails
        prompts = [
            "I live in", "She lives in", "I reside in",
            "She resides in", "My homeland is", "Her homeland is",
        ]
        bad_table = tmp_path / "bad.tsv"
        bad_table.write_text(
            "".join(f"{p}\tArcadia\t1.0\n" for p in prompts)
        )
        args = fixture_args(tmp_path)
        idx = args.index("--mock-table")
        args[idx + 1] = str(bad_table)
        assert main(["audit", *args]) == 3
        err = capsys.readouterr().err
        assert "failed prompt" in err

    def test_config_file_with_flag_overrides(self, tmp_path):
        config = {
            "backend_kind": "mock",
            "mock_table": str(FIXTURES / "mock_table.tsv"),
            "population": str(FIXTURES / "population.csv"),
            "aliases": str(FIXTURES / "aliases.json"),
            "templates": str(FIXTURES / "templates.json"),
            "subjects": str(FIXTURES / "subjects.json"),
            "seed": 7,
            "out_dir": str(tmp_path / "ignored"),
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        code = main([
            "audit", "--config", str(config_path), "--out-dir", str(tmp_path / "real")
        ])
        assert code == 0
        assert (tmp_path / "real" / "report.json").exists()
        assert not (tmp_path / "ignored").exists()

    def test_unknown_config_field_exits_2(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"backend": "mock"}))
        assert main(["audit", "--config", str(config_path)]) == 2


class TestChooseR:
    def test_frozen_fixture_value(self, tmp_path, capsys):
        code = main(["choose-r", *fixture_args(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "chosen r = 2" in out  # frozen: dense evaluation gives a
        # three-way tie at r in {2,3,4}; ties resolve to the smallest
        with (tmp_path / "r_selection.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["r"]) for r in rows] == list(range(2, 21))
        gaps = {
            int(r["r"]): abs(float(r["median_er"]) - float(r["median_kl"]))
            for r in rows
        }
        assert gaps[2] == gaps[3] == gaps[4]

    def test_single_prompt_degenerate(self, tmp_path, capsys):
        # one prompt whose ER^2 equals its KL exactly: nothing survives at
        # ratios <= 2, so r=2 reproduces the full divergence
        table = tmp_path / "table.tsv"
        table.write_text(
            "@fallback_vocab_size\t1000\n"
            "I live in\tArcadia\t0.4\n"
            "I live in\tBorduria\t0.03\n"
            "I live in\tCarpathia\t0.15\n"
            "I live in\tZubrowka\t0.006\n"
        )
        prompts = tmp_path / "prompts.json"
        prompts.write_text(json.dumps({
            "schema": "geoerasure/prompt-set/v1",
            "prompts": [{
                "text": "I live in", "template_id": 2, "subject_tag": "I",
                "verb_group": "live in", "pronoun_class": "I",
            }],
            "priors": None,
        }))
        args = fixture_args(tmp_path, prompts=prompts)
        idx = args.index("--mock-table")
        args[idx + 1] = str(table)
        code = main(["choose-r", *args, "--r-max", "4"])
        assert code == 0
        assert "chosen r = 2" in capsys.readouterr().out

    def test_empty_prompt_set_exits_2(self, tmp_path):
        prompts = tmp_path / "prompts.json"
        prompts.write_text(json.dumps({
            "schema": "geoerasure/prompt-set/v1", "prompts": [], "priors": None,
        }))
        assert main(["choose-r", *fixture_args(tmp_path, prompts=prompts)]) == 2


class TestCorpusProfile:
    def test_end_to_end(self, tmp_path, capsys):
        (tmp_path / "shard1.txt").write_text(
            "Arcadia loves Borduria\nArcadia again\n"
        )
        (tmp_path / "shard2.txt").write_text("Carpathian Union treaty\n")
        manifest = tmp_path / "manifest.csv"
        manifest.write_text(
            "name,weight,path_glob\nmain,2,shard1.txt\nrare,1,shard2.txt\n"
        )
        out = tmp_path / "profile.json"
        code = main([
            "corpus-profile",
            "--manifest", str(manifest),
            "--aliases", str(FIXTURES / "aliases.json"),
            "--population", str(FIXTURES / "population.csv"),
            "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        counts = dict(zip(doc["candidate_names"], doc["weighted_counts"]))
        assert counts == {
            "Arcadia": 4.0, "Borduria": 2.0, "Carpathia": 1.0, "Zubrowka": 0.0,
        }
        assert doc["floored_countries"] == ["Zubrowka"]
        counts_csv = tmp_path / "profile_counts.csv"
        with counts_csv.open() as fh:
            rows = {r["country"]: r for r in csv.DictReader(fh)}
        assert float(rows["Arcadia"]["weighted_count"]) == 4.0
        assert rows["Zubrowka"]["floored"] == "1"

    def test_missing_manifest_exits_2(self, tmp_path):
        assert main([
            "corpus-profile",
            "--manifest", str(tmp_path / "none.csv"),
            "--out", str(tmp_path / "out.json"),
        ]) == 2


class TestMitigateTemp:
    def test_from_report(self, tmp_path, capsys):
        run_audit(tmp_path, seed=7)
        out = tmp_path / "tau.json"
        code = main([
            "mitigate-temp",
            "--report-in", str(tmp_path / "report.json"),
            "--r", "3",
            "--interval", "0.25:4.0",
            "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert 0.25 <= doc["tau_star"] <= 4.0
        assert doc["er_at_star"] <= doc["er_at_unit_tau"] + 1e-12
        curve_csv = tmp_path / "tau_curve.csv"
        with curve_csv.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) > 700
        assert float(rows[0]["tau"]) == 0.25

    def test_with_perplexity_trace(self, tmp_path):
        run_audit(tmp_path, seed=7)
        texts = tmp_path / "texts.txt"
        texts.write_text("I live in Arcadia\nShe lives in Borduria\n")
        out = tmp_path / "tau.json"
        code = main([
            "mitigate-temp",
            "--backend", "mock",
            "--mock-table", str(FIXTURES / "mock_table.tsv"),
            "--report-in", str(tmp_path / "report.json"),
            "--out", str(out),
            "--perplexity-texts", str(texts),
            "--perplexity-points", "5",
        ])
        assert code == 0
        with (tmp_path / "tau_curve.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        traced = [r for r in rows if r["perplexity"]]
        assert len(traced) >= 5

    def test_bad_interval_exits_2(self, tmp_path):
        run_audit(tmp_path, seed=7)
        assert main([
            "mitigate-temp",
            "--report-in", str(tmp_path / "report.json"),
            "--interval", "oops",
            "--out", str(tmp_path / "t.json"),
        ]) == 2


class TestCompare:
    def test_counts_and_gdp_order(self, tmp_path):
        run_audit(tmp_path / "m1", seed=7)
        # second "model": same world at a laxer threshold erases more
        run_audit(tmp_path / "m2", seed=7, r=2.2)
        # same r required; rerun m2 at r=3 to compare
        run_audit(tmp_path / "m2", seed=8)
        out = tmp_path / "compare.csv"
        code = main([
            "compare",
            str(tmp_path / "m1" / "report.json"),
            str(tmp_path / "m2" / "report.json"),
            "--gdp", str(FIXTURES / "gdp.csv"),
            "--out", str(out),
        ])
        assert code == 0
        with out.open() as fh:
            rows = list(csv.DictReader(fh))
        assert rows, "at least one erased country expected"
        assert all(int(r["model_count"]) > 0 for r in rows)
        gdps = [float(r["gdp_per_capita"]) for r in rows]
        assert gdps == sorted(gdps, reverse=True)
        assert {r["country"] for r in rows} == {"Zubrowka"}
        assert rows[0]["model_count"] == "2"

    def test_mismatched_r_exits_2(self, tmp_path):
        run_audit(tmp_path / "m1", seed=7)
        run_audit(tmp_path / "m2", seed=7, r=4)
        assert main([
            "compare",
            str(tmp_path / "m1" / "report.json"),
            str(tmp_path / "m2" / "report.json"),
            "--gdp", str(FIXTURES / "gdp.csv"),
            "--out", str(tmp_path / "c.csv"),
        ]) == 2

    def test_mismatched_candidates_exit_2(self, tmp_path):
        run_audit(tmp_path / "m1", seed=7)
        small_pop = tmp_path / "pop.csv"
        small_pop.write_text(
            "country,english_speakers\nArcadia,500\nBorduria,300\nCarpathia,150\n"
        )
        args = fixture_args(tmp_path / "m2", seed=7)
        idx = args.index("--population")
        args[idx + 1] = str(small_pop)
        assert main(["audit", *args]) == 0
        assert main([
            "compare",
            str(tmp_path / "m1" / "report.json"),
            str(tmp_path / "m2" / "report.json"),
            "--gdp", str(FIXTURES / "gdp.csv"),
            "--out", str(tmp_path / "c.csv"),
        ]) == 2


class TestExportMap:
    def test_emits_choropleth_rows(self, tmp_path):
        report = run_audit(tmp_path, seed=7)
        out = tmp_path / "map.csv"
        code = main([
            "export-map", "--report", str(tmp_path / "report.json"),
            "--out", str(out),
        ])
        assert code == 0
        with out.open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["country"] for r in rows] == list(report.candidate_names)
        by_country = {r["country"]: r for r in rows}
        assert by_country["Zubrowka"]["erased"] == "1"
        assert by_country["Arcadia"]["erased"] == "0"
        for row in rows:
            assert float(row["ratio"]) == report.per_country_ratios[row["country"]]
