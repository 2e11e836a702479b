"""Transcript serialization, ordering rules, and the golden replay."""
import pytest

from osbmdi.protocol import Mode, SessionConfig, run_session
from osbmdi.quantum import BellLabel
from osbmdi.transcript import (
    BMOAnnouncement,
    CorrelationRecord,
    DecoyPositions,
    InitialStateReveal,
    Receipt,
    Transcript,
    TranscriptOrderError,
    validate_order,
)

PSIP = BellLabel.PSI_PLUS


def test_entries_get_monotone_sequence_numbers():
    t = Transcript()
    a = t.append("charlie", BMOAnnouncement(1, 0, PSIP))
    b = t.append("alice", DecoyPositions("alice", 1, split_positions=(1,)))
    assert (a.seq, b.seq) == (0, 1)
    assert len(t) == 2


def test_serialization_one_line_per_entry():
    t = Transcript()
    t.append("charlie", BMOAnnouncement(1, 3, PSIP))
    t.append("charlie", Receipt(2))
    t.append("alice", DecoyPositions("alice", 2, split_positions=(0, 4), whole_positions=((1, 2),)))
    t.append("bob", InitialStateReveal("bob", 2, "decoy", ((0, PSIP),)))
    t.append("alice", CorrelationRecord(2, 4, (0, 1)))
    lines = t.serialize().splitlines()
    assert lines[0] == "0\t1\tcharlie\tbmo\tindex=3 outcome=psi+"
    assert lines[1] == "1\t2\tcharlie\treceipt\t-"
    assert lines[2] == "2\t2\talice\tdecoy_positions\tsplit=0,4 whole=1:2"
    assert lines[3] == "3\t2\tbob\tstate_reveal\tkind=decoy labels=0:psi+"
    assert lines[4] == "4\t2\talice\tcorrelation\tindex=4 bits=0,1"


def test_validator_accepts_correct_order():
    t = Transcript()
    t.append("charlie", BMOAnnouncement(1, 0, PSIP))
    t.append("alice", DecoyPositions("alice", 1, split_positions=(0,)))
    t.append("alice", InitialStateReveal("alice", 1, "decoy", ((0, PSIP),)))
    t.append("charlie", Receipt(2))
    t.append("alice", DecoyPositions("alice", 2, whole_positions=((0, 1),)))
    t.append("charlie", BMOAnnouncement(2, 0, PSIP))
    t.append("alice", InitialStateReveal("alice", 2, "decoy", ((0, PSIP),)))
    validate_order(t)


def test_validator_rejects_positions_before_outcomes():
    t = Transcript()
    t.append("alice", DecoyPositions("alice", 1, split_positions=(0,)))
    t.append("charlie", BMOAnnouncement(1, 0, PSIP))
    with pytest.raises(TranscriptOrderError):
        validate_order(t)


def test_validator_rejects_stage2_positions_without_receipt():
    t = Transcript()
    t.append("alice", DecoyPositions("alice", 2, split_positions=(0,)))
    with pytest.raises(TranscriptOrderError):
        validate_order(t)


def test_validator_rejects_stage2_reveal_before_outcomes():
    t = Transcript()
    t.append("charlie", Receipt(2))
    t.append("alice", DecoyPositions("alice", 2, whole_positions=((0, 1),)))
    t.append("alice", InitialStateReveal("alice", 2, "decoy", ((0, PSIP),)))
    t.append("charlie", BMOAnnouncement(2, 0, PSIP))
    with pytest.raises(TranscriptOrderError):
        validate_order(t)


def test_validator_rejects_private_message_reveal():
    t = Transcript()
    t.append("charlie", BMOAnnouncement(1, 0, PSIP))
    t.append("bob", InitialStateReveal("bob", 1, "message", ((2, PSIP),)))
    with pytest.raises(TranscriptOrderError):
        validate_order(t, {"bob": {0, 1}})
    validate_order(t, {"bob": {2}})


# Frozen replay of a tiny honest session.  Any change to the announcement
# schema, the per-session stream derivation, or the order in which the
# session consumes randomness will show up here.
GOLDEN = """0\t1\tcharlie\tbmo\tindex=0 outcome=psi+
1\t1\tcharlie\tbmo\tindex=1 outcome=psi+
2\t1\tcharlie\tbmo\tindex=2 outcome=psi+
3\t1\talice\tdecoy_positions\tsplit=1 whole=-
4\t1\tbob\tdecoy_positions\tsplit=0 whole=-
5\t1\talice\tstate_reveal\tkind=decoy labels=0:psi+
6\t1\tbob\tstate_reveal\tkind=decoy labels=0:psi+
7\t1\tbob\tstate_reveal\tkind=message labels=0:psi+
8\t1\talice\tcorrelation\tindex=0 bits=0,0
9\t1\talice\tcorrelation\tindex=1 bits=1,1
10\t2\tcharlie\treceipt\t-
11\t2\talice\tdecoy_positions\tsplit=- whole=0:1
12\t2\tbob\tdecoy_positions\tsplit=- whole=0:2
13\t2\tcharlie\tbmo\tindex=0 outcome=psi+
14\t2\tcharlie\tbmo\tindex=0 outcome=psi+
15\t2\talice\tstate_reveal\tkind=decoy labels=0:psi+
16\t2\tbob\tstate_reveal\tkind=decoy labels=0:psi+
17\t3\tcharlie\tbmo\tindex=0 outcome=psi+
"""


def test_golden_transcript_replay():
    rep = run_session(SessionConfig(n_pairs=2, master_seed=123), 0)
    assert rep.transcript.serialize() == GOLDEN


def test_session_transcripts_validate_in_all_modes():
    for mode in Mode:
        rep = run_session(SessionConfig(n_pairs=8, mode=mode, master_seed=5), 1)
        validate_order(rep.transcript, {"bob": set(range(8)), "alice": set()})
