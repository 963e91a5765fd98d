"""Tab-separated corpus manifests and hypothesis transcription files.

A manifest row carries everything the pipeline needs to know about one
utterance: where its audio or features live, who spoke it, and where it
sits in its conversation.  The (conversation, channel, order) triple
gives a total order per channel, which is what cross-utterance context
conditioning consumes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataFormatError

COLUMNS = ("id", "path", "speaker", "conversation", "channel", "order",
           "transcript")

_TRN_LINE = re.compile(r"^(?P<words>.*?)\s*\((?P<utt>[^()\s]+)\)\s*$")


@dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    path: str
    speaker: str
    conversation: str
    channel: str
    order: int
    transcript: str


@dataclass
class Manifest:
    records: list[ManifestRecord]

    def __post_init__(self):
        self.by_id = {}
        for record in self.records:
            if record.utt_id in self.by_id:
                raise DataFormatError(f"duplicate utterance id {record.utt_id!r}")
            self.by_id[record.utt_id] = record
        slots = {}
        for record in self.records:
            key = (record.conversation, record.channel, record.order)
            if key in slots:
                raise DataFormatError(
                    f"order {record.order} appears twice in conversation "
                    f"{record.conversation!r} channel {record.channel!r} "
                    f"({slots[key]!r} and {record.utt_id!r})")
            slots[key] = record.utt_id

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def channel_history(self, utt_id: str) -> list[ManifestRecord]:
        """Records on the same conversation channel with a smaller order
        index, sorted by order; the context source for this utterance."""
        anchor = self.by_id[utt_id]
        earlier = [r for r in self.records
                   if r.conversation == anchor.conversation
                   and r.channel == anchor.channel
                   and r.order < anchor.order]
        return sorted(earlier, key=lambda r: r.order)


def speed_perturbed(record: ManifestRecord, rate: float) -> ManifestRecord:
    """Relabel a rate-perturbed copy as its own speaker.

    Tempo changes shift pitch and pace enough that treating the copy as a
    new speaker keeps speaker statistics honest; the utterance id gets the
    same suffix so ids stay unique when originals and copies are mixed.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    suffix = f"sp{rate:g}"
    return replace(record,
                   utt_id=f"{record.utt_id}#{suffix}",
                   speaker=f"{record.speaker}#{suffix}")


def _parse_order(value: str, line_no: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataFormatError(f"line {line_no}: order {value!r} is not an "
                              f"integer") from None


def load_manifest(path: str | Path) -> Manifest:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty manifest")
    header = lines[0].split("\t")
    if tuple(header) != COLUMNS:
        raise DataFormatError(f"{path}: header {header} does not match "
                              f"{list(COLUMNS)}")
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(COLUMNS):
            raise DataFormatError(f"{path}: line {line_no}: expected "
                                  f"{len(COLUMNS)} fields, got {len(fields)}")
        utt_id, file_path, speaker, conversation, channel, order, text = fields
        records.append(ManifestRecord(
            utt_id=utt_id, path=file_path, speaker=speaker,
            conversation=conversation, channel=channel,
            order=_parse_order(order, line_no), transcript=text))
    try:
        return Manifest(records)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def save_manifest(path: str | Path, records: Iterable[ManifestRecord]) -> None:
    rows = ["\t".join(COLUMNS)]
    for r in records:
        for field in (r.utt_id, r.path, r.speaker, r.conversation, r.channel,
                      r.transcript):
            if "\t" in field or "\n" in field:
                raise ValueError(f"field {field!r} contains a tab or newline")
        rows.append("\t".join([r.utt_id, r.path, r.speaker, r.conversation,
                               r.channel, str(r.order), r.transcript]))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_trn(path: str | Path) -> dict[str, list[str]]:
    """Parse 'word word ... (utt-id)' lines into an id-keyed dict."""
    out: dict[str, list[str]] = {}
    for line_no, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        match = _TRN_LINE.match(line)
        if match is None:
            raise DataFormatError(f"{path}: line {line_no}: expected "
                                  f"'words (utt-id)', got {line!r}")
        utt_id = match.group("utt")
        if utt_id in out:
            raise DataFormatError(f"{path}: line {line_no}: duplicate "
                                  f"utterance id {utt_id!r}")
        out[utt_id] = match.group("words").split()
    return out


def write_trn(path: str | Path, entries: Sequence[tuple[str, Sequence[str]]]) -> None:
    """Write hypotheses in manifest order as 'word word ... (utt-id)'."""
    lines = []
    for utt_id, words in entries:
        lines.append(f"{' '.join(words)} ({utt_id})".strip())
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")
