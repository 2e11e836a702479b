"""Party state machines for the direct-messaging, dialogue and key modes.

A session runs three rounds through an untrusted measurement node:

  round 1 (swap):     both parties send their entangled travel halves, with
                      split verification pairs interleaved; the node measures
                      aligned slots pairwise and announces outcomes, swapping
                      entanglement onto the home qubits;
  round 2 (verify):   encoded home sequences travel with whole verification
                      pairs and m split pairs interleaved; whole pairs must
                      come back in their prepared label, splits must show the
                      prepared correlation;
  round 3 (decode):   the node measures aligned message qubits and announces;
                      receivers invert the Pauli frame to read the symbols.

Slot alignment is by index: the node pairs the i-th slot of each extended
sequence, which is the only rule both senders can anticipate.  Cases I-III
(at least one side contributed a verification half) feed the correlation
checks; case IV carries the message.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adversary import AttackSpec, EveState, apply_leg_attack, fake_bmo_outcome, measure_ancillas
from .analysis import NoiseSpec
from .quantum import (
    BellLabel,
    PauliLabel,
    QuantumError,
    QubitArena,
    frame_correction,
    make_bell,
    pauli_frame,
    swapped_home_label,
)
from .transcript import (
    BMOAnnouncement,
    CorrelationRecord,
    DecoyPositions,
    InitialStateReveal,
    Receipt,
    Transcript,
    validate_order,
)


class ProtocolError(Exception):
    """Protocol-level failure (sequence mismatch, impossible payload)."""


class ConfigError(ValueError):
    """Session configuration is invalid."""


class DecodeIntegrityError(ProtocolError):
    """Announcements are inconsistent with the known preparations."""


class Mode(str, enum.Enum):
    QSDC = "qsdc"
    QD = "qd"
    QKD = "qkd"


class CaseTag(str, enum.Enum):
    """Classification of one aligned swap-round slot by its two slot kinds."""

    CASE_I = "I"      # verification half on both sides
    CASE_II = "II"    # entangled on the sender side, verification on the other
    CASE_III = "III"  # verification on the sender side, entangled on the other
    CASE_IV = "IV"    # entangled on both sides: carries the message


class SlotKind(str, enum.Enum):
    ENTANGLED = "E"
    DECOY_PARTNER = "d"


@dataclass(frozen=True)
class DecoyPolicy:
    """How verification-pair labels are chosen: one fixed label, or an
    independent draw per pair from a label set (kept private until revealed)."""

    kind: str = "fixed"
    labels: tuple[BellLabel, ...] = (BellLabel.PSI_PLUS,)

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "random"):
            raise ConfigError(f"unknown decoy policy kind {self.kind!r}")
        if not self.labels:
            raise ConfigError("decoy policy needs at least one label")
        if self.kind == "fixed" and len(self.labels) != 1:
            raise ConfigError("fixed decoy policy takes exactly one label")

    def draw(self, rng: np.random.Generator) -> BellLabel:
        if self.kind == "fixed":
            return self.labels[0]
        return self.labels[int(rng.integers(len(self.labels)))]

    @classmethod
    def parse(cls, text: str) -> "DecoyPolicy":
        kind, _, labels = text.partition(":")
        if not labels:
            raise ConfigError("decoy policy syntax is fixed:LABEL or random:L1,L2,...")
        return cls(kind.strip(), tuple(BellLabel.parse(t.strip()) for t in labels.split(",")))

    def describe(self) -> str:
        return f"{self.kind}:" + ",".join(lab.value for lab in self.labels)


@dataclass(frozen=True)
class SessionConfig:
    """Everything one session needs; value-identical configs replay exactly."""

    n_pairs: int = 8
    mode: Mode = Mode.QSDC
    alice_state_set: tuple[BellLabel, ...] = (BellLabel.PSI_PLUS,)
    bob_state_set: tuple[BellLabel, ...] = (BellLabel.PSI_PLUS, BellLabel.PSI_MINUS)
    decoy_policy: DecoyPolicy = DecoyPolicy()
    attack: AttackSpec | None = None
    noise: NoiseSpec | None = None
    error_threshold: float = 0.0
    master_seed: int = 0
    use_cases_ii_iii: bool = False
    m_split_decoys: int | None = None

    def __post_init__(self) -> None:
        if self.n_pairs <= 0 or self.n_pairs % 2:
            raise ConfigError("n_pairs must be a positive even integer")
        if not isinstance(self.mode, Mode):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.alice_state_set or not self.bob_state_set:
            raise ConfigError("state sets must be nonempty")
        if not 0.0 <= self.error_threshold <= 1.0:
            raise ConfigError("error_threshold must lie in [0, 1]")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.m_split_decoys is not None and not (
            0 <= self.m_split_decoys <= self.n_pairs // 2
        ):
            raise ConfigError("m_split_decoys must lie in [0, n_pairs/2]")

    @property
    def stage1_decoy_count(self) -> int:
        return self.n_pairs // 2

    @property
    def split_decoy_count(self) -> int:
        if self.m_split_decoys is None:
            return self.n_pairs // 4
        return self.m_split_decoys

    @property
    def whole_decoy_count(self) -> int:
        return self.n_pairs // 2 - self.split_decoy_count


# --- sequence machinery -------------------------------------------------------


@dataclass(frozen=True)
class Entangled:
    ref: int


@dataclass(frozen=True)
class DecoyPartner:
    """Traveling half of a split verification pair (the other half stays home)."""

    ref: int


@dataclass(frozen=True)
class DecoyWholeHalf:
    ref: int
    half: int


@dataclass
class ExtendedSequence:
    """A party's travel sequence with verification qubits interleaved.

    ``slots`` is the owner's private layout; ``occupants`` is what actually
    arrived at the measurement node (attacks may substitute or permute).
    """

    owner: str
    slots: list[tuple[str, object]]
    occupants: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.slots)

    def qubits(self) -> list[str]:
        return [q for q, _ in self.slots]

    def split_positions(self) -> tuple[int, ...]:
        return tuple(i for i, (_, tag) in enumerate(self.slots) if isinstance(tag, DecoyPartner))

    def whole_positions(self) -> tuple[tuple[int, int], ...]:
        halves: dict[int, dict[int, int]] = {}
        for i, (_, tag) in enumerate(self.slots):
            if isinstance(tag, DecoyWholeHalf):
                halves.setdefault(tag.ref, {})[tag.half] = i
        return tuple((pos[0], pos[1]) for _, pos in sorted(halves.items()))

    def message_positions(self) -> tuple[int, ...]:
        return tuple(i for i, (_, tag) in enumerate(self.slots) if isinstance(tag, Entangled))


def insert_decoys(
    base: Sequence[tuple[str, object]],
    decoys: Sequence[tuple[str, object]],
    rng: np.random.Generator,
) -> list[tuple[str, object]]:
    """Uniformly interleave decoy items into a base sequence.

    Every position set is equally likely (the insertion preserves both
    relative orders), and the owner can recover the positions exactly from
    the returned slot tags.
    """
    total = len(base) + len(decoys)
    if not decoys:
        return list(base)
    chosen = set(rng.choice(total, size=len(decoys), replace=False).tolist())
    slots: list[tuple[str, object]] = []
    b_i = d_i = 0
    for i in range(total):
        if i in chosen:
            slots.append(decoys[d_i])
            d_i += 1
        else:
            slots.append(base[b_i])
            b_i += 1
    return slots


def classify_cases(
    pos_a: Sequence[int], pos_b: Sequence[int], length: int
) -> list[CaseTag]:
    """Per-slot case tags from the two announced position sets."""
    set_a, set_b = set(pos_a), set(pos_b)
    out = []
    for i in range(length):
        a_decoy, b_decoy = i in set_a, i in set_b
        if a_decoy and b_decoy:
            out.append(CaseTag.CASE_I)
        elif b_decoy:
            out.append(CaseTag.CASE_II)
        elif a_decoy:
            out.append(CaseTag.CASE_III)
        else:
            out.append(CaseTag.CASE_IV)
    return out


def correlation_check(
    announced: BellLabel,
    alice_bit: int,
    bob_bit: int,
    alice_label: BellLabel,
    bob_label: BellLabel,
) -> bool:
    """Parity test of two home bits against the implied post-swap label."""
    expected = swapped_home_label(alice_label, bob_label, announced)
    return (alice_bit == bob_bit) == expected.correlated


def decode_message(
    alice_init: BellLabel,
    bob_init: BellLabel,
    bmo1: BellLabel,
    bmo2: BellLabel,
    own_encoding: PauliLabel | None = None,
    decode_side: int = 0,
) -> PauliLabel:
    """Recover an encoding operator from the two announcements.

    ``decode_side`` selects whose operator is recovered (0 = the qubit from
    the first party's sequence, 1 = the second's); in dialogue mode the
    decoder supplies its own operator, applied on the opposite side.
    """
    shared = swapped_home_label(alice_init, bob_init, bmo1)
    if own_encoding is not None:
        shared = pauli_frame(shared, own_encoding, side=1 - decode_side)
    try:
        return frame_correction(shared, bmo2, side=decode_side)
    except QuantumError as exc:  # pragma: no cover - defensive
        raise DecodeIntegrityError(str(exc)) from exc


# --- session data -------------------------------------------------------------


@dataclass
class MessagePair:
    index: int
    home: str
    travel: str
    label: BellLabel


@dataclass
class Decoy:
    index: int
    q1: str  # home half for split pairs
    q2: str
    label: BellLabel
    split: bool


@dataclass
class PartyState:
    name: str
    pairs: list[MessagePair] = field(default_factory=list)
    s1_decoys: list[Decoy] = field(default_factory=list)
    s2_whole: list[Decoy] = field(default_factory=list)
    s2_split: list[Decoy] = field(default_factory=list)
    seq1: ExtendedSequence | None = None
    seq2: ExtendedSequence | None = None


@dataclass
class CharlieState:
    fake_stages: frozenset[int] = frozenset()


@dataclass
class PairGroup:
    """One aligned swap-round slot: the joined view of both contributions."""

    id: int
    a_home: str
    a_travel: str
    b_home: str
    b_travel: str
    kind_a: SlotKind
    kind_b: SlotKind
    alice_init: BellLabel
    bob_init: BellLabel
    case: CaseTag
    a_ref: int
    b_ref: int
    bmo1: BellLabel | None = None
    bmo2: BellLabel | None = None


@dataclass
class SessionReport:
    """Everything observable about one finished (or aborted) session."""

    mode: str
    n_pairs: int
    session_index: int
    aborted: bool
    abort_stage: str | None
    case_counts: dict[str, int]
    stage1_checks: int
    stage1_failures: int
    stage2_gv_checks: int
    stage2_gv_failures: int
    stage2_split_checks: int
    stage2_split_failures: int
    sent_symbols: dict[str, tuple[int, ...]]
    decoded_symbols: dict[str, tuple[int, ...]]
    transcript: Transcript
    eve_views: tuple = ()
    nested: tuple = ()

    @property
    def stage1_rate(self) -> float:
        return self.stage1_failures / self.stage1_checks if self.stage1_checks else 0.0

    @property
    def stage2_rate(self) -> float:
        total = self.stage2_gv_checks + self.stage2_split_checks
        fails = self.stage2_gv_failures + self.stage2_split_failures
        return fails / total if total else 0.0

    @property
    def symbols_total(self) -> int:
        return sum(len(v) for v in self.sent_symbols.values())

    @property
    def symbols_correct(self) -> int:
        correct = 0
        for sender, sent in self.sent_symbols.items():
            decoder = "bob" if sender == "alice" else "alice"
            got = self.decoded_symbols.get(decoder, ())
            correct += sum(1 for s, g in zip(sent, got) if s == g)
        return correct

    @property
    def symbol_accuracy(self) -> float:
        total = self.symbols_total
        return self.symbols_correct / total if total else 1.0


class _Abort(Exception):
    def __init__(self, stage: str, rate: float) -> None:
        super().__init__(f"abort at {stage} (error rate {rate:.4g})")
        self.stage = stage
        self.rate = rate


def _pack_bits_to_symbols(bits: Sequence[int]) -> list[int]:
    padded = list(bits) + [0] * (-len(bits) % 2)
    return [2 * padded[i] + padded[i + 1] for i in range(0, len(padded), 2)]


def _unpack_symbols_to_bits(symbols: Sequence[int]) -> list[int]:
    out = []
    for s in symbols:
        out.extend(((s >> 1) & 1, s & 1))
    return out


def _bits_per_choice(set_size: int) -> int:
    return (set_size - 1).bit_length()


class Session:
    """One protocol execution driven by a single deterministic stream.

    All randomness (preparation draws, insertion positions, measurement
    sampling, attack sampling) comes from ``rng`` in a fixed order, so a
    session is a pure function of (config, stream).
    """

    def __init__(
        self,
        cfg: SessionConfig,
        rng: np.random.Generator,
        session_index: int = 0,
        payload: Sequence[int] | None = None,
        attack_enabled: bool = True,
    ) -> None:
        self.cfg = cfg
        self.rng = rng
        self.session_index = session_index
        self.payload = None if payload is None else list(payload)
        self.attack = cfg.attack if attack_enabled else None
        self.arena = QubitArena()
        self.transcript = Transcript()
        self.eve = EveState()
        self.alice = PartyState("alice")
        self.bob = PartyState("bob")
        fake = frozenset()
        if self.attack is not None and self.attack.strategy == "fake_bmo":
            fake = self.attack.fake_stages
        self.charlie = CharlieState(fake_stages=fake)
        self.groups: list[PairGroup] = []
        self.survivors: list[PairGroup] = []
        self.sent: dict[str, tuple[int, ...]] = {}
        self.decoded: dict[str, tuple[int, ...]] = {}
        self.case_counts = {tag.value: 0 for tag in CaseTag}
        self.s1_checks = self.s1_fails = 0
        self.gv_checks = self.gv_fails = 0
        self.split_checks = self.split_fails = 0
        self.eve_views: list = []
        self.nested_reports: list[SessionReport] = []
        # decoders' knowledge of the partner's initial labels (per pair index)
        self.alice_knows_bob: list[BellLabel] | None = None
        self.bob_knows_alice: list[BellLabel] | None = None

    # -- public ------------------------------------------------------------

    def run(self) -> SessionReport:
        aborted, abort_stage = False, None
        try:
            self._prepare()
            if self.cfg.mode is Mode.QD:
                self._nested_shares()
            self._stage1()
            self._stage1_checks()
            self._encode_and_send()
            self._stage2_checks()
            self._decode_round()
        except _Abort as signal:
            aborted, abort_stage = True, signal.stage
        measure_ancillas(self.arena, self.eve, self.rng)
        self._attach_ancilla_bits()
        report = SessionReport(
            mode=self.cfg.mode.value,
            n_pairs=self.cfg.n_pairs,
            session_index=self.session_index,
            aborted=aborted,
            abort_stage=abort_stage,
            case_counts=dict(self.case_counts),
            stage1_checks=self.s1_checks,
            stage1_failures=self.s1_fails,
            stage2_gv_checks=self.gv_checks,
            stage2_gv_failures=self.gv_fails,
            stage2_split_checks=self.split_checks,
            stage2_split_failures=self.split_fails,
            sent_symbols=dict(self.sent),
            decoded_symbols=dict(self.decoded),
            transcript=self.transcript,
            eve_views=tuple(self.eve_views),
            nested=tuple(self.nested_reports),
        )
        self._validate_transcript()
        return report

    # -- preparation ---------------------------------------------------------

    def _draw_label(self, label_set: tuple[BellLabel, ...]) -> BellLabel:
        if len(label_set) == 1:
            return label_set[0]
        return label_set[int(self.rng.integers(len(label_set)))]

    def _prepare(self) -> None:
        cfg = self.cfg
        for party, state_set in (
            (self.alice, cfg.alice_state_set),
            (self.bob, cfg.bob_state_set),
        ):
            p = party.name[0]
            for i in range(cfg.n_pairs):
                label = self._draw_label(state_set)
                home, travel = f"{p}m{i}h", f"{p}m{i}t"
                self.arena.add_state(make_bell(label, home, travel), party.name)
                party.pairs.append(MessagePair(i, home, travel, label))
            for i in range(cfg.stage1_decoy_count):
                label = cfg.decoy_policy.draw(self.rng)
                q1, q2 = f"{p}d{i}h", f"{p}d{i}t"
                self.arena.add_state(make_bell(label, q1, q2), party.name)
                party.s1_decoys.append(Decoy(i, q1, q2, label, split=True))
            for i in range(cfg.whole_decoy_count):
                label = cfg.decoy_policy.draw(self.rng)
                q1, q2 = f"{p}w{i}a", f"{p}w{i}b"
                self.arena.add_state(make_bell(label, q1, q2), party.name)
                party.s2_whole.append(Decoy(i, q1, q2, label, split=False))
            for i in range(cfg.split_decoy_count):
                label = cfg.decoy_policy.draw(self.rng)
                q1, q2 = f"{p}s{i}h", f"{p}s{i}t"
                self.arena.add_state(make_bell(label, q1, q2), party.name)
                party.s2_split.append(Decoy(i, q1, q2, label, split=True))
        if len(cfg.bob_state_set) == 1:
            self.alice_knows_bob = [cfg.bob_state_set[0]] * cfg.n_pairs
        if len(cfg.alice_state_set) == 1:
            self.bob_knows_alice = [cfg.alice_state_set[0]] * cfg.n_pairs

    # -- dialogue preliminaries ----------------------------------------------

    def _nested_shares(self) -> None:
        """Dialogue step 1: each party with a private choice set transmits its
        prepared labels to the other through a nested direct-message session.

        One choice costs ceil(log2(set size)) bits; the nested session is
        sized at n_pairs * bits_per_choice, whose guaranteed case-IV floor of
        half the pair count always covers the payload.
        """
        cfg = self.cfg
        plans = []
        if len(cfg.bob_state_set) > 1:
            plans.append(("bob", cfg.bob_state_set, [p.label for p in self.bob.pairs]))
        if len(cfg.alice_state_set) > 1:
            plans.append(("alice", cfg.alice_state_set, [p.label for p in self.alice.pairs]))
        for owner, state_set, labels in plans:
            bpc = _bits_per_choice(len(state_set))
            bits: list[int] = []
            for lab in labels:
                idx = state_set.index(lab)
                bits.extend((idx >> (bpc - 1 - k)) & 1 for k in range(bpc))
            payload = _pack_bits_to_symbols(bits)
            nested_cfg = SessionConfig(
                n_pairs=cfg.n_pairs * bpc,
                mode=Mode.QSDC,
                decoy_policy=cfg.decoy_policy,
                noise=cfg.noise,
                error_threshold=cfg.error_threshold,
                master_seed=cfg.master_seed,
            )
            child = np.random.default_rng(int(self.rng.integers(2**63)))
            nested = Session(nested_cfg, child, self.session_index, payload=payload)
            rep = nested.run()
            self.nested_reports.append(rep)
            if rep.aborted:
                raise _Abort("nested", 1.0)
            decoded_bits = _unpack_symbols_to_bits(rep.decoded_symbols["bob"])
            known = []
            for i in range(cfg.n_pairs):
                idx = 0
                for k in range(bpc):
                    idx = (idx << 1) | decoded_bits[i * bpc + k]
                known.append(state_set[idx % len(state_set)])
            if owner == "bob":
                self.alice_knows_bob = known
            else:
                self.bob_knows_alice = known

    # -- round 1: swap ---------------------------------------------------------

    def _transmit(self, leg: str, party: PartyState, qubits: list[str]) -> list[str]:
        for q in qubits:
            self.arena.transfer(q, "channel", expect=party.name)
            if self.cfg.noise is not None:
                self.arena.apply_unitary(q, self.cfg.noise.matrix())
        arrived = apply_leg_attack(self.attack, self.arena, self.eve, leg, qubits, self.rng)
        for q in arrived:
            self.arena.transfer(q, "charlie")
        return arrived

    def _stage1(self) -> None:
        for party in (self.alice, self.bob):
            base = [(p.travel, Entangled(p.index)) for p in party.pairs]
            decoys = [(d.q2, DecoyPartner(d.index)) for d in party.s1_decoys]
            party.seq1 = ExtendedSequence(party.name, insert_decoys(base, decoys, self.rng))
        a_seq, b_seq = self.alice.seq1, self.bob.seq1
        a_seq.occupants = self._transmit("stage1_alice", self.alice, a_seq.qubits())
        b_seq.occupants = self._transmit("stage1_bob", self.bob, b_seq.qubits())
        if len(a_seq) != len(b_seq):
            raise ProtocolError("swap-round sequences differ in length")
        self.bmo1: list[BellLabel] = []
        fake = 1 in self.charlie.fake_stages
        for i in range(len(a_seq)):
            if fake:
                outcome = fake_bmo_outcome(self.rng)
            else:
                outcome = self.arena.bell_measure(a_seq.occupants[i], b_seq.occupants[i], self.rng)
            self.transcript.append("charlie", BMOAnnouncement(1, i, outcome))
            self.bmo1.append(outcome)

    def _build_groups(self) -> None:
        a_tags = dict(enumerate(tag for _, tag in self.alice.seq1.slots))
        b_tags = dict(enumerate(tag for _, tag in self.bob.seq1.slots))
        cases = classify_cases(
            self.alice.seq1.split_positions(),
            self.bob.seq1.split_positions(),
            len(self.alice.seq1),
        )
        for i, case in enumerate(cases):
            a_tag, b_tag = a_tags[i], b_tags[i]
            if isinstance(a_tag, Entangled):
                ap = self.alice.pairs[a_tag.ref]
                a_home, a_travel, a_label, a_kind, a_ref = ap.home, ap.travel, ap.label, SlotKind.ENTANGLED, ap.index
            else:
                ad = self.alice.s1_decoys[a_tag.ref]
                a_home, a_travel, a_label, a_kind, a_ref = ad.q1, ad.q2, ad.label, SlotKind.DECOY_PARTNER, ad.index
            if isinstance(b_tag, Entangled):
                bp = self.bob.pairs[b_tag.ref]
                b_home, b_travel, b_label, b_kind, b_ref = bp.home, bp.travel, bp.label, SlotKind.ENTANGLED, bp.index
            else:
                bd = self.bob.s1_decoys[b_tag.ref]
                b_home, b_travel, b_label, b_kind, b_ref = bd.q1, bd.q2, bd.label, SlotKind.DECOY_PARTNER, bd.index
            group = PairGroup(
                id=i,
                a_home=a_home,
                a_travel=a_travel,
                b_home=b_home,
                b_travel=b_travel,
                kind_a=a_kind,
                kind_b=b_kind,
                alice_init=a_label,
                bob_init=b_label,
                case=case,
                a_ref=a_ref,
                b_ref=b_ref,
                bmo1=self.bmo1[i],
            )
            self.groups.append(group)
            self.case_counts[case.value] += 1

    def _stage1_checks(self) -> None:
        for party in (self.alice, self.bob):
            self.transcript.append(
                party.name,
                DecoyPositions(party.name, 1, split_positions=party.seq1.split_positions()),
            )
        for party in (self.alice, self.bob):
            labels = tuple((d.index, d.label) for d in party.s1_decoys)
            self.transcript.append(
                party.name, InitialStateReveal(party.name, 1, "decoy", labels)
            )
        self._build_groups()
        use_msg = self.cfg.use_cases_ii_iii
        checked = [
            g
            for g in self.groups
            if g.case is not CaseTag.CASE_IV
            and not (use_msg and g.case in (CaseTag.CASE_II, CaseTag.CASE_III))
        ]
        case3 = tuple(
            (g.b_ref, g.bob_init) for g in checked if g.case is CaseTag.CASE_III
        )
        if case3:
            self.transcript.append(
                "bob", InitialStateReveal("bob", 1, "message", case3)
            )
        if len(self.cfg.alice_state_set) > 1:
            case2 = tuple(
                (g.a_ref, g.alice_init) for g in checked if g.case is CaseTag.CASE_II
            )
            if case2:
                self.transcript.append(
                    "alice", InitialStateReveal("alice", 1, "message", case2)
                )
        for g in checked:
            a_bit = self.arena.comp_measure(g.a_home, self.rng)
            b_bit = self.arena.comp_measure(g.b_home, self.rng)
            self.transcript.append("alice", CorrelationRecord(1, g.id, (a_bit, b_bit)))
            ok = correlation_check(g.bmo1, a_bit, b_bit, g.alice_init, g.bob_init)
            self.s1_checks += 1
            self.s1_fails += 0 if ok else 1
        rate = self.s1_fails / self.s1_checks if self.s1_checks else 0.0
        if rate > self.cfg.error_threshold:
            raise _Abort("stage1", rate)

    # -- round 2: encode, send, verify -----------------------------------------

    def _survivor_groups(self) -> list[PairGroup]:
        keep = {CaseTag.CASE_IV}
        if self.cfg.use_cases_ii_iii:
            keep |= {CaseTag.CASE_II, CaseTag.CASE_III}
        return [g for g in self.groups if g.case in keep]

    def _encode_and_send(self) -> None:
        cfg = self.cfg
        self.survivors = self._survivor_groups()
        n_sym = len(self.survivors)
        if self.payload is not None:
            if len(self.payload) > n_sym:
                raise ProtocolError(
                    f"payload of {len(self.payload)} symbols exceeds capacity {n_sym}"
                )
            symbols_a = tuple(self.payload + [0] * (n_sym - len(self.payload)))
        else:
            symbols_a = tuple(int(v) for v in self.rng.integers(0, 4, size=n_sym))
        self.sent["alice"] = symbols_a
        self.enc_a = [PauliLabel.from_symbol(s) for s in symbols_a]
        for g, op in zip(self.survivors, self.enc_a):
            self.arena.apply_pauli(g.a_home, op)
        if cfg.mode is Mode.QD:
            symbols_b = tuple(int(v) for v in self.rng.integers(0, 4, size=n_sym))
            self.sent["bob"] = symbols_b
            self.enc_b = [PauliLabel.from_symbol(s) for s in symbols_b]
            for g, op in zip(self.survivors, self.enc_b):
                self.arena.apply_pauli(g.b_home, op)
        for party, side in ((self.alice, "a"), (self.bob, "b")):
            base = [
                (g.a_home if side == "a" else g.b_home, Entangled(k))
                for k, g in enumerate(self.survivors)
            ]
            decoys: list[tuple[str, object]] = []
            for d in party.s2_whole:
                decoys.append((d.q1, DecoyWholeHalf(d.index, 0)))
                decoys.append((d.q2, DecoyWholeHalf(d.index, 1)))
            for d in party.s2_split:
                decoys.append((d.q2, DecoyPartner(d.index)))
            party.seq2 = ExtendedSequence(party.name, insert_decoys(base, decoys, self.rng))
            leg = "stage2_alice" if party is self.alice else "stage2_bob"
            party.seq2.occupants = self._transmit(leg, party, party.seq2.qubits())

    def _stage2_checks(self) -> None:
        self.transcript.append("charlie", Receipt(2))
        for party in (self.alice, self.bob):
            self.transcript.append(
                party.name,
                DecoyPositions(
                    party.name,
                    2,
                    split_positions=party.seq2.split_positions(),
                    whole_positions=party.seq2.whole_positions(),
                ),
            )
        fake = 2 in self.charlie.fake_stages
        for party in (self.alice, self.bob):
            occupants = party.seq2.occupants
            for d, (i, j) in zip(party.s2_whole, party.seq2.whole_positions()):
                if fake:
                    outcome = fake_bmo_outcome(self.rng)
                else:
                    outcome = self.arena.bell_measure(occupants[i], occupants[j], self.rng)
                self.transcript.append("charlie", BMOAnnouncement(2, i, outcome))
                self.gv_checks += 1
                self.gv_fails += 0 if outcome is d.label else 1
            for d, pos in zip(party.s2_split, party.seq2.split_positions()):
                if fake:
                    c_bit = int(self.rng.integers(2))
                else:
                    c_bit = self.arena.comp_measure(occupants[pos], self.rng)
                o_bit = self.arena.comp_measure(d.q1, self.rng)
                self.transcript.append("charlie", CorrelationRecord(2, pos, (c_bit, o_bit)))
                self.split_checks += 1
                ok = (c_bit == o_bit) == d.label.correlated
                self.split_fails += 0 if ok else 1
        for party in (self.alice, self.bob):
            labels = tuple(
                (d.index, d.label) for d in (*party.s2_whole, *party.s2_split)
            )
            self.transcript.append(
                party.name, InitialStateReveal(party.name, 2, "decoy", labels)
            )
        total = self.gv_checks + self.split_checks
        fails = self.gv_fails + self.split_fails
        rate = fails / total if total else 0.0
        if rate > self.cfg.error_threshold:
            raise _Abort("stage2", rate)

    # -- round 3: decode ---------------------------------------------------------

    def _decode_round(self) -> None:
        cfg = self.cfg
        if cfg.mode is not Mode.QD and len(cfg.alice_state_set) > 1:
            # the sender's choices are disclosed for decoding once the swap
            # round is committed; the receiver's stay private
            labels = tuple(
                (g.a_ref, g.alice_init)
                for g in self.survivors
                if g.kind_a is SlotKind.ENTANGLED
            )
            self.transcript.append(
                "alice", InitialStateReveal("alice", 3, "message", labels)
            )
            self.bob_knows_alice = [p.label for p in self.alice.pairs]
        a_msg = [self.alice.seq2.occupants[p] for p in self.alice.seq2.message_positions()]
        b_msg = [self.bob.seq2.occupants[p] for p in self.bob.seq2.message_positions()]
        decoded_by_bob: list[int] = []
        decoded_by_alice: list[int] = []
        for k, g in enumerate(self.survivors):
            outcome = self.arena.bell_measure(a_msg[k], b_msg[k], self.rng)
            self.transcript.append("charlie", BMOAnnouncement(3, k, outcome))
            g.bmo2 = outcome
            alice_init_for_bob = (
                g.alice_init
                if g.kind_a is SlotKind.DECOY_PARTNER
                else self.bob_knows_alice[g.a_ref]
            )
            bob_init_for_alice = (
                g.bob_init
                if g.kind_b is SlotKind.DECOY_PARTNER
                else (self.alice_knows_bob[g.b_ref] if self.alice_knows_bob else None)
            )
            own_b = self.enc_b[k] if cfg.mode is Mode.QD else None
            decoded_by_bob.append(
                decode_message(
                    alice_init_for_bob, g.bob_init, g.bmo1, outcome,
                    own_encoding=own_b, decode_side=0,
                ).symbol
            )
            if cfg.mode is Mode.QD:
                decoded_by_alice.append(
                    decode_message(
                        g.alice_init, bob_init_for_alice, g.bmo1, outcome,
                        own_encoding=self.enc_a[k], decode_side=1,
                    ).symbol
                )
            self.eve_views.append([g.bmo1.value, outcome.value, []])
        self.decoded["bob"] = tuple(decoded_by_bob)
        if cfg.mode is Mode.QD:
            self.decoded["alice"] = tuple(decoded_by_alice)

    # -- wrap-up -------------------------------------------------------------------

    def _attach_ancilla_bits(self) -> None:
        pos_to_survivor = {}
        if self.alice.seq2 is not None:
            for k, p in enumerate(self.alice.seq2.message_positions()):
                pos_to_survivor[("stage2_alice", p)] = k
        if self.bob.seq2 is not None:
            for k, p in enumerate(self.bob.seq2.message_positions()):
                pos_to_survivor[("stage2_bob", p)] = k
        for note in self.eve.notes:
            if note.get("kind") != "ancilla":
                continue
            key = (note["leg"], note["slot"])
            survivor = pos_to_survivor.get(key)
            if survivor is not None and survivor < len(self.eve_views):
                self.eve_views[survivor][2].append(note["bit"])
        self.eve_views = [
            (bmo1, bmo2, tuple(bits)) for bmo1, bmo2, bits in self.eve_views
        ]

    def _validate_transcript(self) -> None:
        allowed: dict[str, set[int]] = {"alice": set(), "bob": set()}
        for g in self.groups:
            if g.case is CaseTag.CASE_III and g.kind_b is SlotKind.ENTANGLED:
                allowed["bob"].add(g.b_ref)
        if len(self.cfg.alice_state_set) > 1:
            allowed["alice"] = {p.index for p in self.alice.pairs}
        validate_order(self.transcript, allowed)


def session_rng(master_seed: int, session_index: int) -> np.random.Generator:
    """Per-session stream derived deterministically from (seed, index)."""
    return np.random.default_rng([master_seed, session_index])


def prepare_session(
    cfg: SessionConfig, session_index: int = 0
) -> tuple[PartyState, PartyState, CharlieState, Transcript]:
    """Build the prepared (pre-transmission) party states for inspection."""
    session = Session(cfg, session_rng(cfg.master_seed, session_index), session_index)
    session._prepare()
    return session.alice, session.bob, session.charlie, session.transcript


def run_session(cfg: SessionConfig, session_index: int = 0) -> SessionReport:
    """Execute one full session under its deterministic per-session stream."""
    session = Session(cfg, session_rng(cfg.master_seed, session_index), session_index)
    return session.run()


def run_batch(
    cfg: SessionConfig, sessions: int, workers: int = 1
) -> list[SessionReport]:
    """Run independent sessions; results are ordered by session index, so the
    outcome does not depend on scheduling."""
    if workers <= 1:
        return [run_session(cfg, i) for i in range(sessions)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_session, cfg, i) for i in range(sessions)]
        return [f.result() for f in futures]


# Reference decode table for the baseline configuration (sender fixed on
# psi+, responder choosing psi+ or psi-): for each responder label and each
# swap-round announcement, the shared label and the decode-round announcement
# produced by each of the four encodings.  Kept as literal data so the frame
# algebra can be diffed against it.
DECODE_REFERENCE: tuple = (
    # (bob_init, bmo1, shared, (bmo2 for I, X, iY, Z))
    (BellLabel.PSI_PLUS, BellLabel.PSI_PLUS, BellLabel.PSI_PLUS,
     (BellLabel.PSI_PLUS, BellLabel.PHI_PLUS, BellLabel.PHI_MINUS, BellLabel.PSI_MINUS)),
    (BellLabel.PSI_PLUS, BellLabel.PHI_PLUS, BellLabel.PHI_PLUS,
     (BellLabel.PHI_PLUS, BellLabel.PSI_PLUS, BellLabel.PSI_MINUS, BellLabel.PHI_MINUS)),
    (BellLabel.PSI_PLUS, BellLabel.PHI_MINUS, BellLabel.PHI_MINUS,
     (BellLabel.PHI_MINUS, BellLabel.PSI_MINUS, BellLabel.PSI_PLUS, BellLabel.PHI_PLUS)),
    (BellLabel.PSI_PLUS, BellLabel.PSI_MINUS, BellLabel.PSI_MINUS,
     (BellLabel.PSI_MINUS, BellLabel.PHI_MINUS, BellLabel.PHI_PLUS, BellLabel.PSI_PLUS)),
    (BellLabel.PSI_MINUS, BellLabel.PSI_MINUS, BellLabel.PSI_PLUS,
     (BellLabel.PSI_PLUS, BellLabel.PHI_PLUS, BellLabel.PHI_MINUS, BellLabel.PSI_MINUS)),
    (BellLabel.PSI_MINUS, BellLabel.PHI_MINUS, BellLabel.PHI_PLUS,
     (BellLabel.PHI_PLUS, BellLabel.PSI_PLUS, BellLabel.PSI_MINUS, BellLabel.PHI_MINUS)),
    (BellLabel.PSI_MINUS, BellLabel.PHI_PLUS, BellLabel.PHI_MINUS,
     (BellLabel.PHI_MINUS, BellLabel.PSI_MINUS, BellLabel.PSI_PLUS, BellLabel.PHI_PLUS)),
    (BellLabel.PSI_MINUS, BellLabel.PSI_PLUS, BellLabel.PSI_MINUS,
     (BellLabel.PSI_MINUS, BellLabel.PHI_MINUS, BellLabel.PHI_PLUS, BellLabel.PSI_PLUS)),
)


def decode_table_rows() -> list[tuple]:
    """Reproduce the reference decode table from the frame algebra."""
    rows = []
    for bob_init in (BellLabel.PSI_PLUS, BellLabel.PSI_MINUS):
        for _, bmo1, _, _ in (r for r in DECODE_REFERENCE if r[0] is bob_init):
            shared = swapped_home_label(BellLabel.PSI_PLUS, bob_init, bmo1)
            outcomes = tuple(pauli_frame(shared, p, side=0) for p in PauliLabel)
            rows.append((bob_init, bmo1, shared, outcomes))
    return rows
