"""Pipeline runner: validation order, stage wiring, determinism."""

import json

import pytest

from beamfuse.errors import ConfigError, StageError
from beamfuse.features import read_features
from beamfuse.manifest import read_trn
from beamfuse.runner import STAGE_ORDER, run_pipeline
from pipeline_assets import (
    build_speaker_models,
    write_audio_corpus,
    write_context_assets,
    write_small_fusion_config,
    write_table_model,
)

FULL_CONFIG = """\
[run]
out_dir = "{out}"
stages = ["features", "speaker", "decode", "score"]
seed = 5

[features]
manifest = "audio/m.tsv"
out_dir = "feats"
sample_rate_hz = 8000
n_mels = 8
fmax_hz = 4000.0

[speaker]
ubm = "models/ubm.bin"
tmatrix = "models/tv.bin"

[decode]
manifest = "audio/m.tsv"
e2e = ["models/am.json"]
out = "hyp.trn"
beam = 4

[score]
"""


@pytest.fixture(scope="module")
def tree(tmp_path_factory):
    """Audio corpus, table model, and speaker models shared by the tests."""
    root = tmp_path_factory.mktemp("pipeline")
    manifest = write_audio_corpus(root / "audio")
    write_table_model(root / "models" / "am.json")
    build_speaker_models(manifest, root / "models" / "ubm.bin",
                         root / "models" / "tv.bin")
    return root


def write_config(tree, name, text):
    path = tree / name
    path.write_text(text)
    return path


def snapshot(out_dir):
    return {str(p.relative_to(out_dir)): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file()}


class TestFullPipeline:
    def test_all_stages_produce_artifacts(self, tree):
        config = write_config(tree, "full.toml",
                              FULL_CONFIG.format(out="out-full"))
        report = run_pipeline(config)
        assert report["stages"] == list(STAGE_ORDER)
        out = tree / "out-full"
        for artifact in ("feats/u1.feat", "feats/u2.feat", "feats/u3.feat",
                         "hyp.trn", "hyp.trn.json", "score.json",
                         "run_report.json"):
            assert (out / artifact).is_file(), artifact
        _, ivector = read_features(out / "feats" / "u1.feat")
        assert ivector is not None and ivector.shape == (2,)
        assert report["results"]["score"]["corpus"]["hyp"]["wer"] == 0.0
        assert report["results"]["decode"]["n_utterances"] == 3

    def test_report_file_matches_return_value(self, tree):
        config = write_config(tree, "full2.toml",
                              FULL_CONFIG.format(out="out-report"))
        report = run_pipeline(config)
        on_disk = json.loads((tree / "out-report" / "run_report.json")
                             .read_text())
        assert on_disk == report
        assert on_disk["versions"]["beamfuse"]
        assert on_disk["config"]["run"]["seed"] == 5

    def test_rerun_is_byte_identical(self, tree):
        config = write_config(tree, "full3.toml",
                              FULL_CONFIG.format(out="out-rerun"))
        run_pipeline(config)
        first = snapshot(tree / "out-rerun")
        run_pipeline(config)
        assert snapshot(tree / "out-rerun") == first
        assert "run_report.json" in first and "hyp.trn" in first

    def test_seed_override_wins(self, tree):
        config = write_config(tree, "full4.toml",
                              FULL_CONFIG.format(out="out-seed"))
        report = run_pipeline(config, seed=42)
        assert report["seed"] == 42


class TestValidation:
    def test_missing_model_fails_before_any_stage(self, tree):
        text = FULL_CONFIG.format(out="out-missing").replace(
            "models/am.json", "models/absent.json")
        config = write_config(tree, "missing.toml", text)
        with pytest.raises(ConfigError, match="absent.json"):
            run_pipeline(config)
        assert not (tree / "out-missing").exists()

    def test_stage_failure_names_stage_and_cause(self, tree, tmp_path):
        corrupt = tmp_path / "models"
        corrupt.mkdir()
        (corrupt / "ubm.bin").write_bytes(b"garbage")
        (corrupt / "tv.bin").write_bytes(
            (tree / "models" / "tv.bin").read_bytes())
        text = FULL_CONFIG.format(out="out-corrupt").replace(
            "models/ubm.bin", f"{corrupt}/ubm.bin").replace(
            "models/tv.bin", f"{corrupt}/tv.bin")
        config = write_config(tree, "corrupt.toml", text)
        with pytest.raises(StageError, match="stage 'speaker'.*not a UBM1"):
            run_pipeline(config)

    def test_out_of_order_stages_rejected(self, tree):
        text = FULL_CONFIG.format(out="x").replace(
            '["features", "speaker", "decode", "score"]',
            '["score", "decode"]')
        config = write_config(tree, "order.toml", text)
        with pytest.raises(ConfigError, match="order"):
            run_pipeline(config)

    def test_unknown_stage_rejected(self, tree):
        text = FULL_CONFIG.format(out="x").replace(
            '"features", ', '"rescoring", ')
        config = write_config(tree, "unknown.toml", text)
        with pytest.raises(ConfigError, match="rescoring"):
            run_pipeline(config)

    def test_requested_stage_needs_its_section(self, tree):
        config = write_config(tree, "nosec.toml", (
            '[run]\nout_dir = "x"\nstages = ["score"]\n'))
        with pytest.raises(ConfigError, match=r"\[score\] section"):
            run_pipeline(config)

    def test_unknown_top_level_section_rejected(self, tree):
        config = write_config(tree, "topsec.toml", (
            FULL_CONFIG.format(out="x") + "\n[rescore]\nbeam = 2\n"))
        with pytest.raises(ConfigError, match="rescore"):
            run_pipeline(config)

    def test_speaker_alone_needs_features_dir(self, tree):
        config = write_config(tree, "spk.toml", (
            '[run]\nout_dir = "x"\nstages = ["speaker"]\n'
            '[speaker]\nubm = "models/ubm.bin"\ntmatrix = "models/tv.bin"\n'))
        with pytest.raises(ConfigError, match="features_dir"):
            run_pipeline(config)

    def test_weight_count_mismatch_rejected(self, tree):
        config = write_config(tree, "wmis.toml", (
            '[run]\nout_dir = "x"\nstages = ["decode"]\n'
            '[decode]\nmanifest = "audio/m.tsv"\ne2e = ["models/am.json"]\n'
            '[decode.weights]\nlam_e2e = [1.0, 0.5]\n'))
        with pytest.raises(ConfigError, match="lam_e2e"):
            run_pipeline(config)


class TestDecodeScoreOnly:
    def test_score_defaults_to_decode_manifest(self, tree):
        config = write_config(tree, "ds.toml", (
            '[run]\nout_dir = "out-ds"\nstages = ["decode", "score"]\n'
            '[decode]\nmanifest = "audio/m.tsv"\ne2e = ["models/am.json"]\n'
            'beam = 4\n[score]\n'))
        report = run_pipeline(config)
        assert report["results"]["score"]["corpus"]["hyp"]["wer"] == 0.0
        hyps = read_trn(tree / "out-ds" / "hyp.trn")
        assert hyps == {"u1": ["x", "y"], "u2": ["y"], "u3": ["x", "y"]}

    def test_sidecar_carries_nbest_breakdowns(self, tree):
        config = write_config(tree, "nb.toml", (
            '[run]\nout_dir = "out-nb"\nstages = ["decode"]\n'
            '[decode]\nmanifest = "audio/m.tsv"\ne2e = ["models/am.json"]\n'
            'beam = 4\nnbest = 2\n'))
        run_pipeline(config)
        doc = json.loads((tree / "out-nb" / "hyp.trn.json").read_text())
        entries = doc["utterances"]["u1"]
        assert len(entries) == 2
        assert entries[0]["total"] >= entries[1]["total"]
        assert "e2e0" in entries[0]["breakdown"]

    def test_score_standalone_with_trn_references(self, tree):
        ref = tree / "refs.trn"
        ref.write_text("x y (u1)\ny (u2)\nx y (u3)\n")
        hyp = tree / "hyps.trn"
        hyp.write_text("x y (u1)\nx (u2)\nx y (u3)\n")
        config = write_config(tree, "sc.toml", (
            '[run]\nout_dir = "out-sc"\nstages = ["score"]\n'
            '[score]\nreferences = "refs.trn"\nhypothesis = "hyps.trn"\n'))
        report = run_pipeline(config)
        counts = report["results"]["score"]["corpus"]["hyp"]
        assert counts["substitutions"] == 1
        assert counts["wer"] == pytest.approx(0.2)

    def test_score_alone_without_inputs_rejected(self, tree):
        config = write_config(tree, "sc2.toml", (
            '[run]\nout_dir = "x"\nstages = ["score"]\n[score]\n'))
        with pytest.raises(ConfigError, match="decode stage"):
            run_pipeline(config)


class TestCrossUtteranceContext:
    def test_context_flips_ambiguous_turn(self, tree):
        assets = write_context_assets(tree / "ctx")
        base = ('[run]\nout_dir = "{out}"\nstages = ["decode"]\n'
                '[decode]\nmanifest = "ctx/m.tsv"\ne2e = ["ctx/am.json"]\n'
                'lm = ["ctx/lm.arpa"]\nbeam = 4\ncontext_words = {words}\n'
                '[decode.weights]\nlam_e2e = [1.0]\nlam_lm = [1.0]\n')
        assert assets["manifest"].is_file()
        run_pipeline(write_config(tree, "ctx0.toml",
                                  base.format(out="out-ctx0", words=0)))
        run_pipeline(write_config(tree, "ctx1.toml",
                                  base.format(out="out-ctx1", words=10)))
        without = read_trn(tree / "out-ctx0" / "hyp.trn")
        with_ctx = read_trn(tree / "out-ctx1" / "hyp.trn")
        assert without["c1"] == ["y"] and with_ctx["c1"] == ["y"]
        assert without["c2"] == ["y"]
        assert with_ctx["c2"] == ["x"]

    def test_context_without_lms_changes_nothing(self, tree):
        base = ('[run]\nout_dir = "{out}"\nstages = ["decode"]\n'
                '[decode]\nmanifest = "audio/m.tsv"\ne2e = ["models/am.json"]\n'
                'beam = 4\ncontext_words = {words}\n')
        run_pipeline(write_config(tree, "nc0.toml",
                                  base.format(out="out-nc0", words=0)))
        run_pipeline(write_config(tree, "nc1.toml",
                                  base.format(out="out-nc1", words=25)))
        assert ((tree / "out-nc0" / "hyp.trn").read_bytes()
                == (tree / "out-nc1" / "hyp.trn").read_bytes())


class TestFusionPipeline:
    def test_synthetic_run_emits_three_way_table(self, tree):
        write_small_fusion_config(tree / "fusion_small.toml",
                                  n_utterances=120)
        config = write_config(tree, "fp.toml", (
            '[run]\nout_dir = "out-fp"\nstages = ["decode", "score"]\n'
            '[decode]\nfusion = "fusion_small.toml"\n[score]\n'))
        report = run_pipeline(config)
        out = tree / "out-fp"
        for name in ("ref.trn", "hyp-no-lm.trn", "hyp-shallow.trn",
                     "hyp-ratio.trn"):
            assert (out / name).is_file()
        score = report["results"]["score"]
        assert set(score["corpus"]) == {"no-lm", "shallow", "ratio"}
        wers = {name: counts["wer"] for name, counts in score["corpus"].items()}
        assert wers["ratio"] < wers["shallow"] < wers["no-lm"]
        table = score["table"]
        for name in ("no-lm", "shallow", "ratio"):
            assert name in table

    def test_fusion_mode_rejects_table_keys(self, tree):
        write_small_fusion_config(tree / "fusion_small2.toml")
        config = write_config(tree, "fp2.toml", (
            '[run]\nout_dir = "x"\nstages = ["decode"]\n'
            '[decode]\nfusion = "fusion_small2.toml"\nbeam = 4\n'))
        with pytest.raises(ConfigError, match="fusion mode"):
            run_pipeline(config)

    def test_decode_needs_exactly_one_source(self, tree):
        config = write_config(tree, "fp3.toml", (
            '[run]\nout_dir = "x"\nstages = ["decode"]\n'
            '[decode]\nfusion = "fusion_small.toml"\n'
            'manifest = "audio/m.tsv"\n'))
        with pytest.raises(ConfigError, match="exactly one"):
            run_pipeline(config)
