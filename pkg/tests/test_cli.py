import json

import pytest
import yaml

from minigec.cli import main
from minigec.corpus import load_parallel, make_pair, save_pairs
from minigec.training import load_checkpoint

from conftest import CLEAN_SENTENCES, TOY_PAIRS

TINY_MODEL = ["--layers", "1", "--heads", "2", "--d-model", "16", "--d-ff", "32",
              "--internal-dropout", "0.0", "--p-src", "0.0", "--p-tgt", "0.0"]
TINY_TRAIN = ["--steps", "8", "--warmup-steps", "4", "--peak-lr", "1e-3",
              "--batch-tokens", "400", "--checkpoint-every", "4", "--no-dev-f05"]


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Shared workspace: clean text, pair files, a vocab, and a tiny run."""
    root = tmp_path_factory.mktemp("cli")
    clean = root / "clean.txt"
    clean.write_text("".join(s + "\n" for s in CLEAN_SENTENCES * 3), encoding="utf-8")

    train_tsv = root / "train.tsv"
    dev_tsv = root / "dev.tsv"
    save_pairs([make_pair(c, t, "toy") for c, t in TOY_PAIRS], train_tsv)
    save_pairs([make_pair(c, t, "toy") for c, t in TOY_PAIRS[:6]], dev_tsv)

    srcs = root / "srcs.txt"
    srcs.write_text("".join(c + "\n" for c, _ in TOY_PAIRS[:6]), encoding="utf-8")

    vocab = root / "vocab.txt"
    assert main(["vocab", "train", "--in", str(clean), str(train_tsv),
                 "--out", str(vocab), "--target-size", "300"]) == 0

    run = root / "run"
    assert main(["train", "--pairs", str(train_tsv), "--dev", str(dev_tsv),
                 "--vocab", str(vocab), "--out-dir", str(run),
                 *TINY_MODEL, *TINY_TRAIN]) == 0
    return {"root": root, "clean": clean, "train": train_tsv, "dev": dev_tsv,
            "srcs": srcs, "vocab": vocab, "run": run}


class TestExitCodes:
    def test_usage_error_is_2(self, capsys):
        assert main(["corpus", "stats", "--no-such-flag"]) == 2
        assert main(["bogus-command"]) == 2

    def test_missing_file_is_1(self, capsys):
        rc = main(["corpus", "stats", "--in", "/nonexistent/x.tsv"])
        assert rc == 1
        assert "missing file" in capsys.readouterr().err

    def test_version_exits_cleanly(self, capsys):
        assert main(["--version"]) == 0
        assert "minigec" in capsys.readouterr().out


class TestCorpusCommands:
    def test_stats_table_and_json(self, ws, tmp_path, capsys):
        out_json = tmp_path / "stats.json"
        rc = main(["corpus", "stats", "--in", f"toys={ws['train']}",
                   "--json", str(out_json)])
        assert rc == 0
        table = capsys.readouterr().out
        assert "toys" in table and "error_rate" in table
        payload = json.loads(out_json.read_text())
        assert payload["toys"]["sentences"] == len(TOY_PAIRS)
        assert 0.0 < payload["toys"]["error_rate"] <= 1.0
        assert round(payload["toys"]["error_rate"], 4) == payload["toys"]["error_rate"]
        manifest = json.loads((tmp_path / "stats.json.manifest.json").read_text())
        assert manifest["command"] == "corpus stats"
        assert manifest["outputs"] == [str(out_json)]

    def test_oversample_multiplies_tagged_pairs(self, ws, tmp_path, capsys):
        out = tmp_path / "over.tsv"
        rc = main(["corpus", "oversample", "--in", f"toys={ws['train']}",
                   "--out", str(out), "--multipliers", "toys=3"])
        assert rc == 0
        assert len(load_parallel(out)) == 3 * len(TOY_PAIRS)
        assert f"{len(TOY_PAIRS)} -> {3 * len(TOY_PAIRS)}" in capsys.readouterr().out

    def test_oversample_unknown_tag_is_runtime_error(self, ws, tmp_path, capsys):
        rc = main(["corpus", "oversample", "--in", str(ws["train"]),
                   "--out", str(tmp_path / "o.tsv"), "--multipliers", "ghost=2"])
        assert rc == 1
        assert "absent" in capsys.readouterr().err

    def test_oversample_lenient_ignores_unknown_tag(self, ws, tmp_path):
        out = tmp_path / "o.tsv"
        rc = main(["corpus", "oversample", "--in", str(ws["train"]),
                   "--out", str(out), "--multipliers", "ghost=2", "--lenient"])
        assert rc == 0
        assert len(load_parallel(out)) == len(TOY_PAIRS)

    def test_bad_multiplier_spec(self, ws, tmp_path, capsys):
        rc = main(["corpus", "oversample", "--in", str(ws["train"]),
                   "--out", str(tmp_path / "o.tsv"), "--multipliers", "toys"])
        assert rc == 1
        assert "expected tag=K" in capsys.readouterr().err


class TestVocabCommands:
    def test_vocab_file_and_manifest(self, ws):
        assert ws["vocab"].exists()
        manifest = json.loads((ws["root"] / "vocab.txt.manifest.json").read_text())
        assert manifest["command"] == "vocab train"

    def test_encode_ids(self, ws, tmp_path):
        out = tmp_path / "ids.txt"
        rc = main(["vocab", "encode", "--vocab", str(ws["vocab"]),
                   "--in", str(ws["srcs"]), "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 6
        assert all(tok.isdigit() for tok in lines[0].split())

    def test_encode_pieces(self, ws, tmp_path):
        out = tmp_path / "pieces.txt"
        rc = main(["vocab", "encode", "--vocab", str(ws["vocab"]),
                   "--in", str(ws["srcs"]), "--out", str(out), "--pieces"])
        assert rc == 0
        first = out.read_text().splitlines()[0]
        assert not all(tok.isdigit() for tok in first.split())


class TestNoiseCommands:
    def test_synth_writes_pairs(self, ws, tmp_path, capsys):
        out = tmp_path / "noised.tsv"
        rc = main(["noise", "synth", "--in", str(ws["clean"]), "--out", str(out),
                   "--p-spell", "0.05", "--p-infill", "0.1", "--seed", "3"])
        assert rc == 0
        pairs = load_parallel(out)
        assert 0 < len(pairs) <= len(CLEAN_SENTENCES) * 3
        assert "pairs ->" in capsys.readouterr().out

    def test_synth_reproducible(self, ws, tmp_path):
        a, b, c = (tmp_path / n for n in ("a.tsv", "b.tsv", "c.tsv"))
        base = ["noise", "synth", "--in", str(ws["clean"]), "--p-spell", "0.05"]
        assert main([*base, "--out", str(a), "--seed", "5"]) == 0
        assert main([*base, "--out", str(b), "--seed", "5"]) == 0
        assert main([*base, "--out", str(c), "--seed", "6"]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()

    def test_wiki_pairs_from_snapshot_dir(self, ws, tmp_path, capsys):
        snap = tmp_path / "snap" / "page1"
        snap.mkdir(parents=True)
        (snap / "0.txt").write_text("the boy raeds a book every day .\n")
        (snap / "1.txt").write_text("the boy reads a book every day .\n")
        out = tmp_path / "wiki.tsv"
        rc = main(["noise", "wiki-pairs", "--in", str(tmp_path / "snap"),
                   "--out", str(out), "--keep-every", "1"])
        assert rc == 0
        counts = json.loads((tmp_path / "wiki.tsv.counts.json").read_text())
        assert counts and sum(counts.values()) >= 1
        assert load_parallel(out)


class TestTrainAndCheckpoints:
    def test_run_artifacts(self, ws):
        run = ws["run"]
        names = sorted(p.name for p in run.glob("*.ckpt"))
        assert names == ["checkpoint-0000004.ckpt", "checkpoint-0000008.ckpt",
                         "checkpoint-final.ckpt"]
        assert (run / "metrics.jsonl").exists()
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["steps"] == 8

    def test_average_last_k(self, ws, tmp_path, capsys):
        out = tmp_path / "avg.ckpt"
        rc = main(["checkpoints", "average", "--in-dir", str(ws["run"]),
                   "--last", "2", "--out", str(out)])
        assert rc == 0
        assert "averaged 2 checkpoints" in capsys.readouterr().out
        ck = load_checkpoint(out)
        assert ck.step == 8
        assert ck.model_config is not None

    def test_average_explicit_files(self, ws, tmp_path):
        c1 = ws["run"] / "checkpoint-0000004.ckpt"
        c2 = ws["run"] / "checkpoint-0000008.ckpt"
        out = tmp_path / "avg.ckpt"
        assert main(["checkpoints", "average", str(c1), str(c2), "--out", str(out)]) == 0
        assert load_checkpoint(out).params

    def test_average_empty_dir_fails(self, tmp_path, capsys):
        rc = main(["checkpoints", "average", "--in-dir", str(tmp_path),
                   "--out", str(tmp_path / "avg.ckpt")])
        assert rc == 1
        assert "no numbered checkpoints" in capsys.readouterr().err

    def test_finetune_continues_run(self, ws, tmp_path, capsys):
        out_dir = tmp_path / "ft"
        rc = main(["finetune", "--base", str(ws["run"] / "checkpoint-final.ckpt"),
                   "--pairs", str(ws["train"]), "--dev", str(ws["dev"]),
                   "--vocab", str(ws["vocab"]), "--out-dir", str(out_dir),
                   *TINY_MODEL, "--steps", "3", "--warmup-steps", "4",
                   "--batch-tokens", "400", "--checkpoint-every", "0", "--no-dev-f05"])
        assert rc == 0
        assert (out_dir / "checkpoint-final.ckpt").exists()


class TestDecodeEvaluateGrid:
    def test_decode_writes_one_line_per_input(self, ws, tmp_path):
        out = tmp_path / "hyp.txt"
        rc = main(["decode", "--checkpoint", str(ws["run"] / "checkpoint-final.ckpt"),
                   "--vocab", str(ws["vocab"]), "--in", str(ws["srcs"]),
                   "--out", str(out), "--beam-size", "2"])
        assert rc == 0
        assert len(out.read_text().splitlines()) == 6

    def test_evaluate_against_dev_tsv(self, ws, tmp_path, capsys):
        hyp = tmp_path / "hyp.txt"
        hyp.write_text("".join(t + "\n" for _, t in TOY_PAIRS[:6]), encoding="utf-8")
        out_json = tmp_path / "report.json"
        rc = main(["evaluate", "--hyp", str(hyp), "--dev", str(ws["dev"]),
                   "--json", str(out_json)])
        assert rc == 0
        assert "F0.5" in capsys.readouterr().out
        report = json.loads(out_json.read_text())
        assert report["F0.5"] == 100.0  # hypotheses equal the references

    def test_evaluate_src_ref_form(self, tmp_path, capsys):
        for name, lines in (("src", ["teh cat .", "a dog ."]),
                            ("hyp", ["the cat .", "a dog ."]),
                            ("ref", ["the cat .", "a dog ."])):
            (tmp_path / f"{name}.txt").write_text("".join(l + "\n" for l in lines))
        rc = main(["evaluate", "--hyp", str(tmp_path / "hyp.txt"),
                   "--src", str(tmp_path / "src.txt"), "--ref", str(tmp_path / "ref.txt")])
        assert rc == 0
        assert "100.00" in capsys.readouterr().out

    def test_evaluate_count_mismatch(self, ws, tmp_path, capsys):
        hyp = tmp_path / "hyp.txt"
        hyp.write_text("one line .\n", encoding="utf-8")
        rc = main(["evaluate", "--hyp", str(hyp), "--dev", str(ws["dev"])])
        assert rc == 1
        assert "hypothesis lines" in capsys.readouterr().err

    def test_grid_search_tsv(self, ws, tmp_path, capsys):
        out = tmp_path / "grid.tsv"
        rc = main(["grid-search", "--checkpoint", str(ws["run"] / "checkpoint-final.ckpt"),
                   "--vocab", str(ws["vocab"]), "--dev", str(ws["dev"]),
                   "--out", str(out), "--thresholds", "0.8,1.2",
                   "--max-iters-list", "1", "--limit", "4", "--beam-size", "2"])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "threshold\tmax_iters\tP\tR\tF0.5"
        assert len(lines) == 3
        best = json.loads(capsys.readouterr().out)
        assert {"threshold", "max_iters", "P", "R", "F0.5"} <= set(best)


class TestConfigFile:
    def test_config_overrides_defaults_and_flags_override_config(self, ws, tmp_path):
        cfg = tmp_path / "noise.yaml"
        cfg.write_text(yaml.safe_dump({
            "p_spell": 0.4, "p_infill": 0.0, "p_word": 0.0, "identity_keep": 1.0,
        }))
        from_config = tmp_path / "a.tsv"
        flag_wins = tmp_path / "b.tsv"
        base = ["noise", "synth", "--in", str(ws["clean"]), "--config", str(cfg), "--seed", "1"]
        assert main([*base, "--out", str(from_config)]) == 0
        assert main([*base, "--out", str(flag_wins), "--p-spell", "0.0"]) == 0

        changed = sum(p.source != p.target for p in load_parallel(from_config))
        assert changed > len(CLEAN_SENTENCES)  # config's 0.4 beat the 0.003 default
        assert all(p.source == p.target for p in load_parallel(flag_wins))

    def test_unknown_config_key_is_usage_error(self, ws, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text(yaml.safe_dump({"bogus_key": 1}))
        rc = main(["noise", "synth", "--in", str(ws["clean"]),
                   "--out", str(tmp_path / "x.tsv"), "--config", str(cfg)])
        assert rc == 2
        assert "unknown config key 'bogus_key'" in capsys.readouterr().err

    def test_other_subcommands_keys_are_ignored(self, ws, tmp_path):
        cfg = tmp_path / "mixed.yaml"
        cfg.write_text(yaml.safe_dump({"steps": 99, "p_spell": 0.05}))
        rc = main(["noise", "synth", "--in", str(ws["clean"]),
                   "--out", str(tmp_path / "x.tsv"), "--config", str(cfg)])
        assert rc == 0

    def test_non_mapping_config_rejected(self, ws, tmp_path, capsys):
        cfg = tmp_path / "list.yaml"
        cfg.write_text("- just\n- a list\n")
        rc = main(["noise", "synth", "--in", str(ws["clean"]),
                   "--out", str(tmp_path / "x.tsv"), "--config", str(cfg)])
        assert rc == 2
        assert "flat mapping" in capsys.readouterr().err


class TestPipeline:
    def test_recipe_runs_stages_in_order(self, ws, tmp_path, capsys):
        work = tmp_path / "work"
        recipe = tmp_path / "recipe.yaml"
        recipe.write_text(yaml.safe_dump({
            "workspace": str(work),
            "stages": [
                {"name": "corrupt",
                 "argv": ["noise", "synth", "--in", str(ws["clean"]),
                          "--out", "{workspace}/pairs.tsv", "--p-spell", "0.05"]},
                {"argv": f"vocab train --in {{workspace}}/pairs.tsv "
                         f"--out {{workspace}}/vocab.txt --target-size 400"},
            ],
        }))
        rc = main(["pipeline", "--recipe", str(recipe)])
        assert rc == 0
        assert (work / "pairs.tsv").exists()
        assert (work / "vocab.txt").exists()
        manifest = json.loads((work / "pipeline-manifest.json").read_text())
        assert [s["status"] for s in manifest["stages"]] == [0, 0]
        assert manifest["stages"][0]["name"] == "corrupt"
        assert "pipeline manifest" in capsys.readouterr().out

    def test_failing_stage_short_circuits(self, ws, tmp_path, capsys):
        work = tmp_path / "work"
        recipe = tmp_path / "recipe.yaml"
        recipe.write_text(yaml.safe_dump({
            "workspace": str(work),
            "stages": [
                {"argv": ["corpus", "stats", "--in", "/nonexistent/x.tsv"]},
                {"argv": ["noise", "synth", "--in", str(ws["clean"]),
                          "--out", "{workspace}/never.tsv"]},
            ],
        }))
        rc = main(["pipeline", "--recipe", str(recipe)])
        assert rc == 1
        assert not (work / "never.tsv").exists()
        manifest = json.loads((work / "pipeline-manifest.json").read_text())
        assert len(manifest["stages"]) == 1
        assert manifest["stages"][0]["status"] == 1
        assert manifest["status"] == 1

    def test_empty_recipe_is_success(self, tmp_path):
        recipe = tmp_path / "empty.yaml"
        recipe.write_text("stages: []\n")
        assert main(["pipeline", "--recipe", str(recipe)]) == 0

    def test_missing_recipe_is_runtime_error(self, tmp_path, capsys):
        rc = main(["pipeline", "--recipe", str(tmp_path / "none.yaml")])
        assert rc == 1
        assert "missing file" in capsys.readouterr().err
