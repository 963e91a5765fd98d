"""Config-driven pipeline runs: features -> speaker -> decode -> score.

run_pipeline reads a TOML config, validates everything it can before
touching any data (stage names and order, required keys, referenced
input files), executes the requested stages in order, and writes a JSON
run report next to the artifacts.  With fixed seeds a rerun produces
byte-identical outputs.

Config layout::

    [run]
    out_dir = "runs/demo"       # artifacts land here (config-relative)
    stages = ["features", "speaker", "decode", "score"]
    seed = 0                    # optional, default 0

    [features]
    manifest = "data/train.tsv" # wav paths, resolved against the manifest
    out_dir = "feats"           # within run.out_dir, default "feats"
    # any FeatureConfig key (n_mels = 20, compression = "root7", ...)
    # optional [features.perturb] table with PerturbConfig keys and an
    # optional specaugment sub-table

    [speaker]
    ubm = "models/ubm.bin"
    tmatrix = "models/tv.bin"
    features_dir = "feats"      # defaults to the features stage output

    [decode]                    # table-model flavor
    manifest = "data/eval.tsv"
    e2e = ["models/am.json"]
    lm = ["models/lm.arpa"]     # optional
    out = "hyp.trn"
    beam = 16
    max_len = 64
    nbest = 1
    context_words = 0           # > 0 conditions LMs on earlier 1-bests
    [decode.weights]            # FusionWeights keys
    lam_e2e = [1.0]
    lam_lm = [0.4]

    [decode]                    # synthetic flavor (instead of the above)
    fusion = "configs/fusion_mismatch.toml"

    [score]
    manifest = "data/eval.tsv"  # or references = "ref.trn"
    hypothesis = "hyp.trn"      # optional when the decode stage ran
    out = "score.json"

Input paths resolve against the config file's directory; outputs go
under [run].out_dir.  Wav paths inside a manifest resolve against the
manifest's own directory.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .configio import read_toml
from .errors import ConfigError, DataFormatError, StageError
from .features import (
    FeatureConfig,
    PerturbConfig,
    SpecAugmentConfig,
    append_ivector,
    extract_pipeline,
    read_features,
    read_wav,
    write_features,
)
from .fusion import FusionWeights, decode
from .harness.evaluate import SYSTEMS, FusionComparison, eval_fusion_from_config
from .manifest import load_manifest, read_trn, write_trn
from .scorers import build_cross_utterance_context, load_table_scorer, read_arpa
from .speaker import accumulate_stats, extract_ivector, read_tmatrix, read_ubm
from .wer import WerReport, score_utterances, tokenize

STAGE_ORDER = ("features", "speaker", "decode", "score")

logger = logging.getLogger("beamfuse.runner")


@dataclass(frozen=True)
class _Context:
    config_dir: Path
    out_dir: Path
    seed: int
    threads: int


def _thread_map(fn, items, threads: int) -> list:
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _as_path_list(value) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return list(value)
    raise ConfigError(f"expected a path or list of paths, got {value!r}")


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} {str(path)!r} does not exist")
    return path


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"[{where}] has unknown keys {unknown}")


def _jsonable(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def _report_dict(report: WerReport) -> dict:
    return {
        "substitutions": report.substitutions,
        "deletions": report.deletions,
        "insertions": report.insertions,
        "ref_words": report.ref_words,
        "wer": report.wer,
    }


# ---------------------------------------------------------------- features

_FEATURES_KEYS = {"manifest", "out_dir", "perturb"}


def _perturb_from_dict(doc: dict) -> PerturbConfig:
    doc = dict(doc)
    spec = doc.pop("specaugment", {})
    try:
        augment = SpecAugmentConfig(**spec)
        for key in ("sem_threshold_db_range", "hec_percentile_range"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return PerturbConfig(specaugment=augment, **doc)
    except TypeError as exc:
        raise ConfigError(f"[features.perturb]: {exc}") from None


def _plan_features(section: dict, ctx: _Context, prior: dict) -> dict:
    if "manifest" not in section:
        raise ConfigError("[features] needs a manifest key")
    manifest_path = _require_file(ctx.config_dir / section["manifest"],
                                  "features manifest")
    perturb = None
    if "perturb" in section:
        perturb = _perturb_from_dict(section["perturb"])
    cfg_keys = {k: v for k, v in section.items() if k not in _FEATURES_KEYS}
    try:
        cfg = FeatureConfig(**cfg_keys)
    except TypeError as exc:
        raise ConfigError(f"[features]: {exc}") from None
    out_name = section.get("out_dir", "feats")
    return {"manifest_path": manifest_path, "cfg": cfg, "perturb": perturb,
            "out_dir": ctx.out_dir / out_name, "out_name": out_name}


def _run_features(plan: dict, ctx: _Context) -> dict:
    manifest = load_manifest(plan["manifest_path"])
    cfg: FeatureConfig = plan["cfg"]
    perturb = plan["perturb"]
    out_dir: Path = plan["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    audio_base = plan["manifest_path"].parent

    def extract_one(item):
        index, record = item
        samples, rate = read_wav(audio_base / record.path)
        if rate != cfg.sample_rate_hz:
            raise DataFormatError(
                f"{record.path}: sample rate {rate} does not match the "
                f"configured {cfg.sample_rate_hz}")
        rng = np.random.default_rng([ctx.seed, index]) if perturb else None
        feats = extract_pipeline(samples, cfg, perturb, rng)
        write_features(out_dir / f"{record.utt_id}.feat", feats)
        return feats.n_frames

    frames = _thread_map(extract_one, enumerate(manifest), ctx.threads)
    return {"n_utterances": len(manifest), "frames": int(sum(frames)),
            "out_dir": plan["out_name"]}


# ----------------------------------------------------------------- speaker

_SPEAKER_KEYS = {"ubm", "tmatrix", "features_dir"}


def _plan_speaker(section: dict, ctx: _Context, prior: dict) -> dict:
    _check_keys(section, _SPEAKER_KEYS, "speaker")
    for key in ("ubm", "tmatrix"):
        if key not in section:
            raise ConfigError(f"[speaker] needs a {key} key")
    ubm_path = _require_file(ctx.config_dir / section["ubm"], "UBM file")
    tmat_path = _require_file(ctx.config_dir / section["tmatrix"],
                              "total-variability file")
    if "features_dir" in section:
        feat_dir = ctx.config_dir / section["features_dir"]
        if not feat_dir.is_dir():
            raise ConfigError(f"features_dir {str(feat_dir)!r} does not exist")
    elif "features" in prior:
        feat_dir = prior["features"]["out_dir"]
    else:
        raise ConfigError("[speaker] needs features_dir when the features "
                          "stage is not part of the run")
    return {"ubm_path": ubm_path, "tmat_path": tmat_path, "feat_dir": feat_dir}


def _run_speaker(plan: dict, ctx: _Context) -> dict:
    ubm = read_ubm(plan["ubm_path"])
    tmat = read_tmatrix(plan["tmat_path"])
    paths = sorted(plan["feat_dir"].glob("*.feat"))
    if not paths:
        raise DataFormatError(f"{plan['feat_dir']}: no .feat files to embed")

    def embed_one(path: Path) -> float:
        feats, _ = read_features(path)
        stats = accumulate_stats(ubm, feats.data)
        ivector = extract_ivector(tmat, ubm, stats)
        append_ivector(path, ivector)
        return float(np.linalg.norm(ivector))

    norms = _thread_map(embed_one, paths, ctx.threads)
    return {"n_utterances": len(paths), "rank": tmat.rank,
            "mean_ivector_norm": float(np.mean(norms))}


# ------------------------------------------------------------------ decode

_DECODE_KEYS = {"fusion", "manifest", "e2e", "lm", "weights", "out", "beam",
                "max_len", "nbest", "context_words"}


def _plan_decode(section: dict, ctx: _Context, prior: dict) -> dict:
    _check_keys(section, _DECODE_KEYS, "decode")
    if ("fusion" in section) == ("manifest" in section):
        raise ConfigError("[decode] needs exactly one of fusion (synthetic "
                          "comparison) or manifest (table models)")
    if "fusion" in section:
        extras = sorted(set(section) - {"fusion"})
        if extras:
            raise ConfigError(f"[decode] fusion mode does not take {extras}")
        fusion_path = _require_file(ctx.config_dir / section["fusion"],
                                    "fusion config")
        fusion_config = read_toml(fusion_path)
        for part in ("source", "target", "eval"):
            if part not in fusion_config:
                raise ConfigError(f"fusion config {str(fusion_path)!r} is "
                                  f"missing the [{part}] section")
        return {"mode": "fusion", "fusion_config": fusion_config,
                "outputs": {name: f"hyp-{name}.trn" for name in SYSTEMS},
                "references": "ref.trn"}

    manifest_path = _require_file(ctx.config_dir / section["manifest"],
                                  "decode manifest")
    if "e2e" not in section:
        raise ConfigError("[decode] needs at least one e2e table model")
    e2e = [_require_file(ctx.config_dir / p, "table model")
           for p in _as_path_list(section["e2e"])]
    lm = [_require_file(ctx.config_dir / p, "LM file")
          for p in _as_path_list(section.get("lm", []))]
    try:
        weights = FusionWeights(**section.get("weights", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[decode.weights]: {exc}") from None
    if len(weights.lam_e2e) != len(e2e):
        raise ConfigError(f"lam_e2e has {len(weights.lam_e2e)} entries for "
                          f"{len(e2e)} table models")
    if len(weights.lam_lm) != len(lm):
        raise ConfigError(f"lam_lm has {len(weights.lam_lm)} entries for "
                          f"{len(lm)} LM files")
    beam = int(section.get("beam", 16))
    max_len = int(section.get("max_len", 64))
    nbest = int(section.get("nbest", 1))
    context_words = int(section.get("context_words", 0))
    if min(beam, max_len, nbest) < 1:
        raise ConfigError("beam, max_len and nbest must all be >= 1")
    if context_words < 0:
        raise ConfigError("context_words must be >= 0")
    return {"mode": "tables", "manifest_path": manifest_path, "e2e": e2e,
            "lm": lm, "weights": weights, "beam": beam, "max_len": max_len,
            "nbest": nbest, "context_words": context_words,
            "out": section.get("out", "hyp.trn")}


def _run_decode_fusion(plan: dict, ctx: _Context) -> dict:
    comparison = eval_fusion_from_config(plan["fusion_config"],
                                         threads=ctx.threads)
    order = list(comparison.references)
    write_trn(ctx.out_dir / plan["references"],
              [(utt_id, comparison.references[utt_id]) for utt_id in order])
    for name, filename in plan["outputs"].items():
        hyps = comparison.hypotheses[name]
        write_trn(ctx.out_dir / filename,
                  [(utt_id, hyps[utt_id]) for utt_id in order])
    return {"mode": "fusion", "n_utterances": comparison.n_utterances,
            "references": plan["references"], "hypotheses": plan["outputs"]}


def _run_decode_tables(plan: dict, ctx: _Context) -> dict:
    manifest = load_manifest(plan["manifest_path"])
    models = [load_table_scorer(path) for path in plan["e2e"]]
    lms = [read_arpa(path) for path in plan["lm"]]
    weights: FusionWeights = plan["weights"]
    vocab = models[0].vocab
    limit = plan["context_words"]

    def decode_record(record, context_ids):
        nbest = decode(models, lms, weights, acoustics=record.utt_id,
                       context=context_ids, beam=plan["beam"],
                       max_len=plan["max_len"], nbest=plan["nbest"])
        entries = []
        for entry in nbest:
            tokens = entry.tokens
            if tokens and tokens[-1] == vocab.eos_id:
                tokens = tokens[:-1]
            entries.append({
                "words": vocab.decode(tokens),
                "total": _jsonable(entry.total),
                "breakdown": {k: _jsonable(v)
                              for k, v in sorted(entry.breakdown.items())},
                "unterminated": entry.unterminated,
            })
        return entries

    details: dict[str, list[dict]] = {}
    if limit > 0:
        groups: dict[tuple, list] = {}
        for record in manifest:
            groups.setdefault((record.conversation, record.channel),
                              []).append(record)
        streams = [sorted(records, key=lambda r: r.order)
                   for _, records in sorted(groups.items())]

        def decode_stream(records):
            out = {}
            history: list[list[str]] = []
            for record in records:
                words = build_cross_utterance_context(history, len(history),
                                                      limit)
                out[record.utt_id] = decode_record(record,
                                                   vocab.encode(words))
                history.append(out[record.utt_id][0]["words"])
            return out

        for part in _thread_map(decode_stream, streams, ctx.threads):
            details.update(part)
    else:
        pairs = _thread_map(
            lambda record: (record.utt_id, decode_record(record, ())),
            manifest, ctx.threads)
        details = dict(pairs)

    out_path = ctx.out_dir / plan["out"]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_trn(out_path, [(r.utt_id, details[r.utt_id][0]["words"])
                         for r in manifest])
    sidecar = out_path.with_name(out_path.name + ".json")
    sidecar.write_text(json.dumps({"utterances": details}, sort_keys=True,
                                  indent=2) + "\n", encoding="utf-8")
    return {"mode": "tables", "n_utterances": len(manifest),
            "hypotheses": plan["out"], "details": plan["out"] + ".json"}


def _run_decode(plan: dict, ctx: _Context) -> dict:
    if plan["mode"] == "fusion":
        return _run_decode_fusion(plan, ctx)
    return _run_decode_tables(plan, ctx)


# ------------------------------------------------------------------- score

_SCORE_KEYS = {"manifest", "references", "hypothesis", "out"}


def _plan_score(section: dict, ctx: _Context, prior: dict) -> dict:
    _check_keys(section, _SCORE_KEYS, "score")
    if "manifest" in section and "references" in section:
        raise ConfigError("[score] takes manifest or references, not both")

    decode_plan = prior.get("decode")
    refs: tuple[str, object]
    if "manifest" in section:
        refs = ("manifest", _require_file(ctx.config_dir / section["manifest"],
                                          "score manifest"))
    elif "references" in section:
        refs = ("trn", _require_file(ctx.config_dir / section["references"],
                                     "reference file"))
    elif decode_plan is not None and decode_plan["mode"] == "fusion":
        refs = ("produced_trn", decode_plan["references"])
    elif decode_plan is not None:
        refs = ("manifest", decode_plan["manifest_path"])
    else:
        raise ConfigError("[score] needs manifest or references when the "
                          "decode stage is not part of the run")

    if "hypothesis" in section:
        hyps = [("hyp", ("file", _require_file(
            ctx.config_dir / section["hypothesis"], "hypothesis file")))]
    elif decode_plan is None:
        raise ConfigError("[score] needs a hypothesis file when the decode "
                          "stage is not part of the run")
    elif decode_plan["mode"] == "fusion":
        hyps = [(name, ("produced", filename))
                for name, filename in decode_plan["outputs"].items()]
    else:
        hyps = [("hyp", ("produced", decode_plan["out"]))]
    return {"refs": refs, "hyps": hyps, "out": section.get("out", "score.json")}


def _run_score(plan: dict, ctx: _Context) -> dict:
    kind, source = plan["refs"]
    if kind == "manifest":
        manifest = load_manifest(source)
        references = {r.utt_id: tokenize(r.transcript) for r in manifest}
    elif kind == "trn":
        references = read_trn(source)
    else:
        references = read_trn(ctx.out_dir / source)

    corpus: dict[str, WerReport] = {}
    per_utterance: dict[str, dict] = {}
    for name, (origin, location) in plan["hyps"]:
        path = location if origin == "file" else ctx.out_dir / location
        hypotheses = read_trn(path)
        total, by_utt = score_utterances(references, hypotheses)
        corpus[name] = total
        per_utterance[name] = {utt_id: _report_dict(r)
                               for utt_id, r in by_utt.items()}

    out_path = ctx.out_dir / plan["out"]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"corpus": {name: _report_dict(r) for name, r in corpus.items()},
               "per_utterance": per_utterance}
    out_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")

    result = {"out": plan["out"],
              "corpus": {name: _report_dict(r) for name, r in corpus.items()}}
    if set(corpus) == set(SYSTEMS):
        comparison = FusionComparison(reports=corpus,
                                      n_utterances=len(references))
        result["table"] = comparison.table()
    return result


# ---------------------------------------------------------------- pipeline

_PLANNERS = {"features": _plan_features, "speaker": _plan_speaker,
             "decode": _plan_decode, "score": _plan_score}
_RUNNERS = {"features": _run_features, "speaker": _run_speaker,
            "decode": _run_decode, "score": _run_score}


def _parse_stages(run_section: dict) -> tuple[str, ...]:
    stages = run_section.get("stages")
    if not isinstance(stages, list) or not stages:
        raise ConfigError("[run] needs a non-empty stages list")
    unknown = sorted(set(stages) - set(STAGE_ORDER))
    if unknown:
        raise ConfigError(f"unknown stages {unknown}; valid stages are "
                          f"{list(STAGE_ORDER)}")
    if len(set(stages)) != len(stages):
        raise ConfigError("stages must not repeat")
    canonical = [name for name in STAGE_ORDER if name in stages]
    if list(stages) != canonical:
        raise ConfigError(f"stages must appear in the order {canonical}")
    return tuple(stages)


def run_pipeline(config_path, *, seed: int | None = None,
                 threads: int = 1) -> dict:
    """Validate and execute the run described by a pipeline config.

    seed overrides [run].seed when given.  Returns the run report, which
    is also written to out_dir/run_report.json.  Any failure inside a
    stage is re-raised as a StageError naming the stage; configuration
    and missing-file problems surface as ConfigError before any stage
    has run.
    """
    config_path = Path(config_path)
    config = read_toml(config_path)
    _check_keys(config, {"run", *STAGE_ORDER}, "pipeline config")
    if "run" not in config:
        raise ConfigError("pipeline config needs a [run] section")
    run_section = config["run"]
    _check_keys(run_section, {"out_dir", "stages", "seed"}, "run")
    if "out_dir" not in run_section:
        raise ConfigError("[run] needs an out_dir key")
    stages = _parse_stages(run_section)
    run_seed = int(run_section.get("seed", 0)) if seed is None else int(seed)

    ctx = _Context(config_dir=config_path.parent,
                   out_dir=config_path.parent / run_section["out_dir"],
                   seed=run_seed, threads=max(1, int(threads)))

    plans: dict[str, dict] = {}
    for name in stages:
        if name not in config:
            raise ConfigError(f"stage {name!r} is requested but the "
                              f"[{name}] section is missing")
        plans[name] = _PLANNERS[name](config[name], ctx, plans)

    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, dict] = {}
    for name in stages:
        logger.info("stage %s: starting", name)
        try:
            results[name] = _RUNNERS[name](plans[name], ctx)
        except Exception as exc:
            raise StageError(name, exc) from exc
        logger.info("stage %s: done", name)

    report = {
        "tool": "beamfuse",
        "versions": {"beamfuse": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "seed": run_seed,
        "threads": ctx.threads,
        "stages": list(stages),
        "config": config,
        "results": results,
    }
    (ctx.out_dir / "run_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return report
