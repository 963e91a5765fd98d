"""Persistence for sampled corpora.

A corpus is stored as one JSON object per line so large corpora stream
without loading everything up front, and so individual utterances stay
human-readable.  corpus_manifest derives the tab-separated manifest view
that the decoding and scoring tools consume, with every row's path
column pointing back at the shared JSON-lines file.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DataFormatError
from ..manifest import Manifest, ManifestRecord
from .hmm import Utterance


def write_corpus(path, corpus: Iterable[Utterance]) -> None:
    lines = []
    for utt in corpus:
        lines.append(json.dumps({
            "id": utt.utt_id,
            "conversation": utt.conversation,
            "channel": utt.channel,
            "order": utt.order,
            "labels": list(utt.labels),
            "symbols": [int(s) for s in utt.symbols],
        }, sort_keys=True))
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_corpus(path) -> list[Utterance]:
    utterances = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
        try:
            utt = Utterance(
                utt_id=str(doc["id"]),
                labels=tuple(str(w) for w in doc["labels"]),
                symbols=tuple(int(s) for s in doc["symbols"]),
                conversation=str(doc["conversation"]),
                channel=str(doc["channel"]),
                order=int(doc["order"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}:{lineno}: bad utterance record "
                                  f"({exc})") from None
        if utt.utt_id in seen:
            raise DataFormatError(f"{path}:{lineno}: duplicate utterance id "
                                  f"{utt.utt_id!r}")
        seen.add(utt.utt_id)
        utterances.append(utt)
    return utterances


def corpus_manifest(corpus: Sequence[Utterance], corpus_path) -> Manifest:
    """Manifest view of a sampled corpus.

    Synthetic corpora have no per-utterance audio, so the path column
    points at the shared corpus file and the speaker is the conversation
    channel (one synthetic speaker per side of each conversation).
    """
    records = [ManifestRecord(
        utt_id=u.utt_id,
        path=str(corpus_path),
        speaker=f"{u.conversation}-{u.channel}",
        conversation=u.conversation,
        channel=u.channel,
        order=u.order,
        transcript=u.transcript,
    ) for u in corpus]
    return Manifest(records)
