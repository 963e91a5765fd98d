"""Command-line surface: subcommands, printed output, error codes."""

import json
from pathlib import Path

import pytest

from beamfuse.cli import main
from beamfuse.features import read_features
from beamfuse.harness import read_corpus
from beamfuse.manifest import load_manifest, read_trn
from beamfuse.scorers import read_arpa
from pipeline_assets import (
    build_speaker_models,
    write_audio_corpus,
    write_context_assets,
    write_decode_manifest,
    write_small_fusion_config,
    write_table_model,
)

TASK_CONFIG = str(Path(__file__).resolve().parent.parent / "configs" /
                  "task_example.toml")

FEATURE_CONFIG = "sample_rate_hz = 8000\nn_mels = 8\nfmax_hz = 4000.0\n"

PERTURB_CONFIG = FEATURE_CONFIG + """
[perturb]
sem_prob = 1.0
hec_prob = 1.0

[perturb.specaugment]
n_time_masks = 1
max_time_width_frames = 3
n_freq_masks = 1
max_freq_width_channels = 2
"""


def feat_bytes(directory: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.feat"))}


class TestHarnessCommands:
    def test_generate_writes_corpus_manifest_references(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        assert main(["harness", "generate", "--task", TASK_CONFIG,
                     "--n", "10", "--out-dir", str(out), "--seed", "7"]) == 0
        corpus = read_corpus(out / "corpus.jsonl")
        assert len(corpus) == 10
        manifest = load_manifest(out / "manifest.tsv")
        assert len(manifest) == 10
        refs = read_trn(out / "ref.trn")
        assert refs[corpus[0].utt_id] == list(corpus[0].labels)
        assert "sampled 10 utterances" in capsys.readouterr().out

    def test_generate_is_seed_deterministic(self, tmp_path):
        for name in ("a", "b"):
            main(["harness", "generate", "--task", TASK_CONFIG, "--n", "8",
                  "--out-dir", str(tmp_path / name), "--seed", "3"])
        main(["harness", "generate", "--task", TASK_CONFIG, "--n", "8",
              "--out-dir", str(tmp_path / "c"), "--seed", "4"])
        a = (tmp_path / "a" / "corpus.jsonl").read_bytes()
        assert (tmp_path / "b" / "corpus.jsonl").read_bytes() == a
        assert (tmp_path / "c" / "corpus.jsonl").read_bytes() != a

    def test_train_lm_writes_loadable_arpa(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        main(["harness", "generate", "--task", TASK_CONFIG, "--n", "30",
              "--out-dir", str(out), "--seed", "1"])
        arpa = tmp_path / "lm.arpa"
        assert main(["harness", "train-lm", "--corpus",
                     str(out / "corpus.jsonl"), "--epochs", "50",
                     "--out", str(arpa)]) == 0
        scorer = read_arpa(arpa)
        assert set("abcd") <= set(scorer.vocab.tokens)
        assert "final loss" in capsys.readouterr().out

    def test_eval_fusion_prints_table(self, tmp_path, capsys):
        config = write_small_fusion_config(tmp_path / "fusion.toml",
                                           n_utterances=60,
                                           lm_utterances=400, lm_epochs=150)
        assert main(["harness", "eval-fusion", "--config", str(config),
                     "--threads", "2"]) == 0
        out = capsys.readouterr().out
        for name in ("no-lm", "shallow", "ratio"):
            assert name in out


class TestDecodeAndScore:
    @pytest.fixture()
    def assets(self, tmp_path):
        return {"model": write_table_model(tmp_path / "am.json"),
                "manifest": write_decode_manifest(tmp_path / "m.tsv"),
                "root": tmp_path}

    def test_decode_then_score(self, assets, capsys):
        root = assets["root"]
        hyp = root / "hyp.trn"
        assert main(["decode", "--manifest", str(assets["manifest"]),
                     "--e2e", str(assets["model"]), "--out", str(hyp),
                     "--beam", "4"]) == 0
        assert read_trn(hyp) == {"u1": ["x", "y"], "u2": ["y"],
                                 "u3": ["x", "y"]}
        score_json = root / "score.json"
        assert main(["score", "--manifest", str(assets["manifest"]),
                     "--hypothesis", str(hyp), "--out", str(score_json)]) == 0
        out = capsys.readouterr().out
        assert "wer 0.00%" in out
        doc = json.loads(score_json.read_text())
        assert doc["corpus"]["hyp"]["ref_words"] == 5

    def test_decode_nbest_sidecar(self, assets):
        hyp = assets["root"] / "nb.trn"
        main(["decode", "--manifest", str(assets["manifest"]),
              "--e2e", str(assets["model"]), "--out", str(hyp),
              "--beam", "4", "--nbest", "3"])
        doc = json.loads((assets["root"] / "nb.trn.json").read_text())
        entries = doc["utterances"]["u1"]
        assert len(entries) == 3
        totals = [entry["total"] for entry in entries]
        assert totals == sorted(totals, reverse=True)

    def test_context_words_flag_flips_ambiguous_turn(self, tmp_path):
        assets = write_context_assets(tmp_path / "ctx")
        weights = tmp_path / "weights.toml"
        weights.write_text("lam_e2e = [1.0]\nlam_lm = [1.0]\n")
        args = ["decode", "--manifest", str(assets["manifest"]),
                "--e2e", str(assets["model"]), "--lm", str(assets["lm"]),
                "--weights", str(weights), "--beam", "4"]
        main(args + ["--out", str(tmp_path / "plain.trn")])
        main(args + ["--out", str(tmp_path / "ctx.trn"),
                     "--context-words", "10"])
        assert read_trn(tmp_path / "plain.trn")["c2"] == ["y"]
        assert read_trn(tmp_path / "ctx.trn")["c2"] == ["x"]


@pytest.fixture(scope="module")
def audio(tmp_path_factory):
    root = tmp_path_factory.mktemp("audio-cli")
    return write_audio_corpus(root)


class TestFeatureAndSpeakerCommands:
    def test_features_extracts_and_reruns_identically(self, audio, tmp_path):
        config = tmp_path / "front.toml"
        config.write_text(FEATURE_CONFIG)
        out = tmp_path / "feats"
        assert main(["features", "--manifest", str(audio),
                     "--out-dir", str(out), "--config", str(config)]) == 0
        first = feat_bytes(out)
        assert set(first) == {"u1.feat", "u2.feat", "u3.feat"}
        main(["features", "--manifest", str(audio), "--out-dir", str(out),
              "--config", str(config)])
        assert feat_bytes(out) == first

    def test_perturbed_features_reproduce_under_one_seed(self, audio,
                                                         tmp_path):
        config = tmp_path / "front.toml"
        config.write_text(PERTURB_CONFIG)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["features", "--manifest", str(audio),
                         "--out-dir", str(out), "--config", str(config),
                         "--seed", "9"]) == 0
        assert feat_bytes(out_a) == feat_bytes(out_b)

    def test_speaker_training_and_extraction(self, audio, tmp_path, capsys):
        config = tmp_path / "front.toml"
        config.write_text(FEATURE_CONFIG)
        feats = tmp_path / "feats"
        main(["features", "--manifest", str(audio), "--out-dir", str(feats),
              "--config", str(config)])
        ubm = tmp_path / "ubm.bin"
        assert main(["speaker", "train-ubm", "--features-dir", str(feats),
                     "--components", "2", "--iters", "3",
                     "--out", str(ubm), "--seed", "1"]) == 0
        tmat = tmp_path / "tv.bin"
        assert main(["speaker", "train-tmatrix", "--features-dir", str(feats),
                     "--ubm", str(ubm), "--rank", "1", "--iters", "2",
                     "--out", str(tmat), "--seed", "1"]) == 0
        assert main(["speaker", "extract", "--features-dir", str(feats),
                     "--ubm", str(ubm), "--tmatrix", str(tmat)]) == 0
        out = capsys.readouterr().out
        assert "embedded 3 utterances" in out
        _, ivector = read_features(feats / "u1.feat")
        assert ivector is not None and ivector.shape == (1,)


class TestRunCommand:
    def test_run_decode_score_pipeline(self, tmp_path, capsys):
        write_table_model(tmp_path / "am.json")
        write_decode_manifest(tmp_path / "m.tsv")
        config = tmp_path / "pipe.toml"
        config.write_text(
            '[run]\nout_dir = "out"\nstages = ["decode", "score"]\n'
            '[decode]\nmanifest = "m.tsv"\ne2e = ["am.json"]\nbeam = 4\n'
            '[score]\n')
        assert main(["run", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "wer 0.00%" in out
        assert "run report:" in out
        assert (tmp_path / "out" / "run_report.json").is_file()

    def test_run_fusion_pipeline_prints_table(self, tmp_path, capsys):
        write_small_fusion_config(tmp_path / "fusion.toml", n_utterances=60,
                                  lm_utterances=400, lm_epochs=150)
        config = tmp_path / "pipe.toml"
        config.write_text(
            '[run]\nout_dir = "out"\nstages = ["decode", "score"]\n'
            '[decode]\nfusion = "fusion.toml"\n[score]\n')
        assert main(["run", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        for name in ("no-lm", "shallow", "ratio"):
            assert name in out


class TestErrorReporting:
    def test_missing_input_reports_config_code(self, tmp_path, capsys):
        rc = main(["score", "--manifest", str(tmp_path / "none.tsv"),
                   "--hypothesis", str(tmp_path / "none.trn")])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error[E_CONFIG]")

    def test_malformed_data_reports_format_code(self, tmp_path, capsys):
        manifest = write_decode_manifest(tmp_path / "m.tsv")
        bad = tmp_path / "bad.trn"
        bad.write_text("a line without an utterance id\n")
        rc = main(["score", "--manifest", str(manifest),
                   "--hypothesis", str(bad),
                   "--out", str(tmp_path / "s.json")])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error[E_FORMAT]")

    def test_stage_failure_reports_stage_code(self, tmp_path, capsys):
        write_table_model(tmp_path / "am.json")
        write_decode_manifest(tmp_path / "m.tsv")
        rows = (tmp_path / "m.tsv").read_text().rstrip("\n").split("\n")
        rows.append("\t".join(["u9", "-", "s9", "c9", "A", "0", "x"]))
        (tmp_path / "wide.tsv").write_text("\n".join(rows) + "\n")
        config = tmp_path / "pipe.toml"
        config.write_text(
            '[run]\nout_dir = "out"\nstages = ["decode", "score"]\n'
            '[decode]\nmanifest = "m.tsv"\ne2e = ["am.json"]\nbeam = 4\n'
            '[score]\nmanifest = "wide.tsv"\n')
        rc = main(["run", "--config", str(config)])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error[E_STAGE]")
        assert "score" in err and "u9" in err

    def test_unknown_subcommand_exits_two(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["bogus"])
        assert excinfo.value.code == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert "beamfuse" in capsys.readouterr().out
