"""Append-only log of classical announcements made during a session.

Every public utterance (measurement outcomes, decoy positions, state
reveals, receipts, correlation bits) lands here in order.  The transcript is
what an eavesdropper sees, what golden-file tests freeze, and what the
ordering validator inspects: private data must never appear before the
protocol step that discloses it.

Stage numbering: 1 = swap round, 2 = verification round, 3 = decode round.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from .quantum import BellLabel


class TranscriptOrderError(Exception):
    """An announcement appeared before the step that permits it."""


@dataclass(frozen=True)
class BMOAnnouncement:
    """Measurement-node outcome announcement for one measured pair."""

    stage: int
    index: int
    outcome: BellLabel


@dataclass(frozen=True)
class Receipt:
    """Acknowledgement that all qubits of a round arrived (ideal broadcast)."""

    stage: int


@dataclass(frozen=True)
class DecoyPositions:
    """Owner's disclosure of where verification qubits sit in a sequence.

    ``split_positions`` are slots holding the traveling half of a split
    pair; ``whole_positions`` pairs up the two slots of each whole pair.
    """

    owner: str
    stage: int
    split_positions: tuple[int, ...] = ()
    whole_positions: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class InitialStateReveal:
    """Owner's disclosure of prepared Bell labels, keyed by reference index.

    ``kind`` is "decoy" for verification pairs and "message" for entangled
    message pairs (the latter only ever for indices the protocol allows).
    """

    owner: str
    stage: int
    kind: str
    labels: tuple[tuple[int, BellLabel], ...]


@dataclass(frozen=True)
class CorrelationRecord:
    """Publicly compared computational-basis bits for one checked slot."""

    stage: int
    index: int
    bits: tuple[int, int]


Event = Union[BMOAnnouncement, Receipt, DecoyPositions, InitialStateReveal, CorrelationRecord]


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    actor: str
    event: Event


def _payload(event: Event) -> str:
    if isinstance(event, BMOAnnouncement):
        return f"index={event.index} outcome={event.outcome.value}"
    if isinstance(event, Receipt):
        return "-"
    if isinstance(event, DecoyPositions):
        split = ",".join(str(p) for p in event.split_positions) or "-"
        whole = ",".join(f"{i}:{j}" for i, j in event.whole_positions) or "-"
        return f"split={split} whole={whole}"
    if isinstance(event, InitialStateReveal):
        labels = ",".join(f"{i}:{lab.value}" for i, lab in event.labels) or "-"
        return f"kind={event.kind} labels={labels}"
    if isinstance(event, CorrelationRecord):
        return f"index={event.index} bits={event.bits[0]},{event.bits[1]}"
    raise TypeError(f"unknown event type {type(event)!r}")  # pragma: no cover


_KIND_NAMES = {
    BMOAnnouncement: "bmo",
    Receipt: "receipt",
    DecoyPositions: "decoy_positions",
    InitialStateReveal: "state_reveal",
    CorrelationRecord: "correlation",
}


class Transcript:
    """Ordered, append-only announcement log with monotone sequence numbers."""

    def __init__(self) -> None:
        self._entries: list[TranscriptEntry] = []

    def append(self, actor: str, event: Event) -> TranscriptEntry:
        entry = TranscriptEntry(seq=len(self._entries), actor=actor, event=event)
        self._entries.append(entry)
        return entry

    def __iter__(self) -> Iterator[TranscriptEntry]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def events(self, kind: type) -> list[TranscriptEntry]:
        return [e for e in self._entries if isinstance(e.event, kind)]

    def serialize(self) -> str:
        """One announcement per line: seq, stage, actor, kind, payload."""
        lines = []
        for e in self._entries:
            kind = _KIND_NAMES[type(e.event)]
            lines.append(
                f"{e.seq}\t{e.event.stage}\t{e.actor}\t{kind}\t{_payload(e.event)}"
            )
        return "\n".join(lines) + ("\n" if lines else "")


def validate_order(
    transcript: Transcript,
    allowed_message_reveals: dict[str, set[int]] | None = None,
) -> None:
    """Structural check that no private data is announced early.

    Rules enforced:
      * sequence numbers strictly increase;
      * stage-1 decoy positions and stage-1 state reveals come after every
        stage-1 outcome announcement (the measurement node commits first);
      * stage-2 positions come only after the stage-2 receipt;
      * stage-2 outcome announcements come after stage-2 positions, and
        stage-2 decoy-label reveals only after those outcomes (so a dishonest
        node cannot tailor fake announcements to the labels);
      * message-pair label reveals are restricted to the per-owner index sets
        in ``allowed_message_reveals`` (empty set when the owner's choice
        must stay private, as for the receiver's pairs used for decoding).
    """
    allowed = allowed_message_reveals or {}
    last = -1
    for entry in transcript:
        if entry.seq <= last:
            raise TranscriptOrderError("sequence numbers must increase")
        last = entry.seq

    def seqs(event_type: type, **attrs) -> list[int]:
        out = []
        for e in transcript.events(event_type):
            if all(getattr(e.event, k) == v for k, v in attrs.items()):
                out.append(e.seq)
        return out

    bmo1 = seqs(BMOAnnouncement, stage=1)
    pos1 = seqs(DecoyPositions, stage=1)
    if bmo1 and pos1 and min(pos1) < max(bmo1):
        raise TranscriptOrderError("stage-1 positions announced before all stage-1 outcomes")
    reveals1 = seqs(InitialStateReveal, stage=1, kind="decoy")
    if bmo1 and reveals1 and min(reveals1) < max(bmo1):
        raise TranscriptOrderError("stage-1 decoy labels revealed before all stage-1 outcomes")

    receipts2 = seqs(Receipt, stage=2)
    pos2 = seqs(DecoyPositions, stage=2)
    if pos2:
        if not receipts2:
            raise TranscriptOrderError("stage-2 positions announced without a receipt")
        if min(pos2) < min(receipts2):
            raise TranscriptOrderError("stage-2 positions announced before the receipt")
    bmo2 = seqs(BMOAnnouncement, stage=2)
    if bmo2 and pos2 and min(bmo2) < max(pos2):
        raise TranscriptOrderError("stage-2 outcomes announced before positions")
    reveals2 = seqs(InitialStateReveal, stage=2, kind="decoy")
    if bmo2 and reveals2 and min(reveals2) < max(bmo2):
        raise TranscriptOrderError("stage-2 decoy labels revealed before all stage-2 outcomes")

    for e in transcript.events(InitialStateReveal):
        if e.event.kind != "message":
            continue
        permitted = allowed.get(e.event.owner, set())
        for index, _lab in e.event.labels:
            if index not in permitted:
                raise TranscriptOrderError(
                    f"{e.event.owner} revealed a private message-pair label (index {index})"
                )
        if bmo1 and e.seq < max(bmo1):
            raise TranscriptOrderError("message-pair label revealed before stage-1 outcomes")
