"""Command-line entry point.

Every failure path prints one ``error[CODE] message`` line to stderr and
exits nonzero, so wrappers can branch on the bracketed code without
parsing prose.  The codes are E_CONFIG (bad flags, config values, or
referenced paths), E_FORMAT (malformed data files), E_STAGE (a pipeline
stage failed), and E_INTERNAL (a bug worth reporting).
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .configio import read_toml
from .errors import DataFormatError, ToolkitError
from .harness import (
    corpus_manifest,
    eval_fusion_from_config,
    generate,
    load_task,
    read_corpus,
    train_toy_lm,
    write_corpus,
)
from .manifest import save_manifest, write_trn
from .runner import (
    _Context,
    _plan_decode,
    _plan_features,
    _plan_score,
    _run_decode,
    _run_features,
    _run_score,
    _run_speaker,
    run_pipeline,
)
from .scorers import write_arpa
from .speaker import (
    accumulate_stats,
    read_ubm,
    train_tmatrix,
    train_ubm,
    write_tmatrix,
    write_ubm,
)
from .features import read_features

def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _cwd_context(args, out_dir=".") -> _Context:
    return _Context(config_dir=Path.cwd(), out_dir=Path(out_dir),
                    seed=_seed(args), threads=args.threads)


def _feature_frames(features_dir: str) -> list[tuple[Path, np.ndarray]]:
    paths = sorted(Path(features_dir).glob("*.feat"))
    if not paths:
        raise DataFormatError(f"{features_dir}: no .feat files")
    return [(path, read_features(path)[0].data) for path in paths]


# ------------------------------------------------------------- subcommands

def cmd_features(args) -> None:
    section = dict(read_toml(args.config)) if args.config else {}
    section["manifest"] = args.manifest
    section["out_dir"] = "."
    ctx = _cwd_context(args, args.out_dir)
    plan = _plan_features(section, ctx, {})
    result = _run_features(plan, ctx)
    print(f"wrote {result['n_utterances']} feature files "
          f"({result['frames']} frames) to {args.out_dir}")


def cmd_speaker_train_ubm(args) -> None:
    frames = np.concatenate([data for _, data in
                             _feature_frames(args.features_dir)])
    ubm = train_ubm(frames, n_components=args.components, iters=args.iters,
                    seed=_seed(args))
    write_ubm(args.out, ubm)
    print(f"trained {args.components}-component UBM on {frames.shape[0]} "
          f"frames; final log-likelihood/frame "
          f"{ubm.log_likelihoods[-1] / frames.shape[0]:.4f}; wrote {args.out}")


def cmd_speaker_train_tmatrix(args) -> None:
    ubm = read_ubm(args.ubm)
    stats = [accumulate_stats(ubm, data)
             for _, data in _feature_frames(args.features_dir)]
    tmat = train_tmatrix(stats, ubm, rank=args.rank, iters=args.iters,
                         seed=_seed(args))
    write_tmatrix(args.out, tmat)
    print(f"trained rank-{args.rank} subspace on {len(stats)} utterances; "
          f"final objective {tmat.objectives[-1]:.4f}; wrote {args.out}")


def cmd_speaker_extract(args) -> None:
    ctx = _cwd_context(args)
    plan = {"ubm_path": Path(args.ubm), "tmat_path": Path(args.tmatrix),
            "feat_dir": Path(args.features_dir)}
    result = _run_speaker(plan, ctx)
    print(f"embedded {result['n_utterances']} utterances at rank "
          f"{result['rank']} (mean i-vector norm "
          f"{result['mean_ivector_norm']:.4f})")


def cmd_decode(args) -> None:
    section = {"manifest": args.manifest, "e2e": args.e2e, "lm": args.lm,
               "out": args.out, "beam": args.beam, "max_len": args.max_len,
               "nbest": args.nbest, "context_words": args.context_words}
    if args.weights:
        doc = read_toml(args.weights)
        section["weights"] = doc.get("weights", doc)
    ctx = _cwd_context(args)
    plan = _plan_decode(section, ctx, {})
    result = _run_decode(plan, ctx)
    print(f"decoded {result['n_utterances']} utterances to "
          f"{result['hypotheses']} (details in {result['details']})")


def cmd_score(args) -> None:
    section = {"hypothesis": args.hypothesis, "out": args.out}
    if args.references:
        section["references"] = args.references
    else:
        section["manifest"] = args.manifest
    ctx = _cwd_context(args)
    plan = _plan_score(section, ctx, {})
    result = _run_score(plan, ctx)
    for name, counts in result["corpus"].items():
        prefix = "" if name == "hyp" else f"{name}: "
        print(f"{prefix}wer {100.0 * counts['wer']:.2f}% "
              f"(S={counts['substitutions']} D={counts['deletions']} "
              f"I={counts['insertions']} N={counts['ref_words']}); "
              f"wrote {result['out']}")


def cmd_harness_generate(args) -> None:
    task = load_task(args.task)
    corpus = generate(task, seed=_seed(args), n_utterances=args.n,
                      utts_per_conversation=args.utts_per_conversation)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(out_dir / "corpus.jsonl", corpus)
    save_manifest(out_dir / "manifest.tsv",
                  corpus_manifest(corpus, "corpus.jsonl"))
    write_trn(out_dir / "ref.trn", [(u.utt_id, u.labels) for u in corpus])
    words = sum(len(u.labels) for u in corpus)
    print(f"sampled {len(corpus)} utterances ({words} labels) into "
          f"{args.out_dir}")


def cmd_harness_train_lm(args) -> None:
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise DataFormatError(f"{args.corpus}: no utterances")
    lm = train_toy_lm([u.labels for u in corpus], optimizer=args.optimizer,
                      epochs=args.epochs, seed=_seed(args), lr=args.lr,
                      weight_decay=args.weight_decay)
    write_arpa(args.out, lm.to_arpa_tables())
    print(f"trained bigram LM on {len(corpus)} utterances "
          f"({args.optimizer}, {args.epochs} epochs); final loss "
          f"{lm.loss_history[-1]:.4f}; wrote {args.out}")


def cmd_harness_eval_fusion(args) -> None:
    comparison = eval_fusion_from_config(read_toml(args.config),
                                         threads=args.threads)
    print(comparison.table())


def cmd_run(args) -> None:
    report = run_pipeline(args.config, seed=args.seed, threads=args.threads)
    for stage in report["stages"]:
        result = report["results"][stage]
        if "table" in result:
            print(result["table"])
        elif "corpus" in result:
            for name, counts in result["corpus"].items():
                print(f"{stage}/{name}: wer {100.0 * counts['wer']:.2f}%")
        else:
            print(f"{stage}: done ({result.get('n_utterances', '-')} "
                  f"utterances)")
    out_dir = Path(args.config).parent / report["config"]["run"]["out_dir"]
    print(f"run report: {out_dir / 'run_report.json'}")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=None,
                        help="random seed (default: per-config, else 0)")
    shared.add_argument("--threads", type=int, default=1,
                        help="worker threads for per-utterance work")
    shared.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])

    parser = argparse.ArgumentParser(
        prog="beamfuse",
        description="Log-linear fusion beam decoding toolkit")
    parser.add_argument("--version", action="version",
                        version=f"beamfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", parents=[shared],
                       help="extract Mel features for every manifest row")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", default=None,
                   help="TOML with front-end keys and optional [perturb]")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("speaker", parents=[shared],
                       help="background model and i-vector tools")
    speaker_sub = p.add_subparsers(dest="speaker_command", required=True)

    q = speaker_sub.add_parser("train-ubm", parents=[shared])
    q.add_argument("--features-dir", required=True)
    q.add_argument("--components", type=int, required=True)
    q.add_argument("--iters", type=int, default=10)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_speaker_train_ubm)

    q = speaker_sub.add_parser("train-tmatrix", parents=[shared])
    q.add_argument("--features-dir", required=True)
    q.add_argument("--ubm", required=True)
    q.add_argument("--rank", type=int, required=True)
    q.add_argument("--iters", type=int, default=10)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_speaker_train_tmatrix)

    q = speaker_sub.add_parser("extract", parents=[shared])
    q.add_argument("--features-dir", required=True)
    q.add_argument("--ubm", required=True)
    q.add_argument("--tmatrix", required=True)
    q.set_defaults(func=cmd_speaker_extract)

    p = sub.add_parser("decode", parents=[shared],
                       help="beam decoding with fused table models and LMs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--e2e", action="append", required=True,
                   help="table model JSON (repeatable)")
    p.add_argument("--lm", action="append", default=[],
                   help="ARPA LM, positive or negative weight (repeatable)")
    p.add_argument("--weights", default=None,
                   help="TOML file of FusionWeights keys")
    p.add_argument("--out", default="hyp.trn")
    p.add_argument("--beam", type=int, default=16)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--nbest", type=int, default=1)
    p.add_argument("--context-words", type=int, default=0,
                   help="condition LMs on this many words of earlier "
                        "1-bests from the same conversation channel")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", parents=[shared],
                       help="word error rate of a hypothesis file")
    refs = p.add_mutually_exclusive_group(required=True)
    refs.add_argument("--manifest")
    refs.add_argument("--references", help="reference trn file")
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--out", default="score.json")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("harness", parents=[shared],
                       help="synthetic tasks with exact posteriors")
    harness_sub = p.add_subparsers(dest="harness_command", required=True)

    q = harness_sub.add_parser("generate", parents=[shared])
    q.add_argument("--task", required=True, help="task TOML")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--utts-per-conversation", type=int, default=4)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(func=cmd_harness_generate)

    q = harness_sub.add_parser("train-lm", parents=[shared])
    q.add_argument("--corpus", required=True, help="corpus.jsonl")
    q.add_argument("--optimizer", choices=["sgd", "adamw"], default="adamw")
    q.add_argument("--epochs", type=int, default=500)
    q.add_argument("--lr", type=float, default=None)
    q.add_argument("--weight-decay", type=float, default=0.0)
    q.add_argument("--out", required=True, help="output ARPA path")
    q.set_defaults(func=cmd_harness_train_lm)

    q = harness_sub.add_parser("eval-fusion", parents=[shared])
    q.add_argument("--config", required=True,
                   help="TOML with [source], [target], and [eval]")
    q.set_defaults(func=cmd_harness_eval_fusion)

    p = sub.add_parser("run", parents=[shared],
                       help="execute a multi-stage pipeline config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ToolkitError as exc:
        print(f"error[{exc.code}] {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error[E_CONFIG] {exc}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover - bug reporting path
        traceback.print_exc()
        print("error[E_INTERNAL] unexpected failure", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
