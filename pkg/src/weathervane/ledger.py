"""Deterministic governance ledger for community-submitted forecast models.

Re-implements the contract semantics as a single-writer state machine: role
and reputation accounting, model submission keyed by content id, score voting
weighted by voter reputation, quorum-triggered finalization, and promotion of
the best finalized model to primary status.

Every operation validates all of its preconditions before touching state
(checks happen strictly before effects), so a rejected transaction can never
leave a partial write behind; :func:`apply` turns domain errors into
``access_denied`` events without changing the digest-covered state.

All consensus arithmetic is integer-only. Scores are basis points in
``0..10_000`` and the weighted average is computed with arbitrary-precision
integers, so no vote weighting can overflow.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Sequence, Union

from . import _wire
from .cas import Cid
from .errors import (
    AlreadyVoted,
    DuplicateAccount,
    DuplicateCid,
    EmptyVoteSet,
    InvalidParams,
    InvalidScore,
    LedgerError,
    MalformedState,
    SelfVote,
    Unauthorized,
    UnknownModel,
    VotingClosed,
    ZeroTotalReputation,
)

SCORE_SCALE_BP = 10_000
MODEL_KINDS = ("regression", "classification")

STATE_MAGIC = b"WFL1"
_ACCOUNT_ID_LEN = 32


class Role(IntEnum):
    """Authority ladder; higher value strictly dominates lower."""

    USER = 0
    CLIENT = 1
    ADMIN = 2
    OWNER = 3


class ModelStatus(Enum):
    OPEN = "open"
    FINALIZED = "finalized"
    PRIMARY = "primary"
    REJECTED = "rejected"


def account_id(label: str) -> str:
    """Derive a canonical 32-byte account id (lowercase hex) from a label."""
    return hashlib.sha256(label.encode("utf-8")).hexdigest()


def _check_account_id(value: str) -> str:
    if len(value) != 2 * _ACCOUNT_ID_LEN or value != value.lower():
        raise ValueError("account id must be 64 lowercase hex characters")
    bytes.fromhex(value)
    return value


@dataclass(frozen=True)
class LedgerParams:
    """Protocol constants; every value is an exact integer.

    ``vote_eligibility_min`` is the minimum reputation a voter must hold for
    its score to be accepted. ``quorum_reputation`` is the cumulative counted
    reputation that freezes a model's vote set and triggers scoring.
    """

    vote_eligibility_min: int = 10
    quorum_reputation: int = 100
    reject_threshold_bp: int = 2500
    promotion_bonus: int = 10
    participation_bonus: int = 1
    rejection_penalty: int = 5
    admin_initial_reputation: int = 100
    score_scale_bp: int = SCORE_SCALE_BP

    def __post_init__(self):
        if self.vote_eligibility_min > self.quorum_reputation:
            raise InvalidParams("vote_eligibility_min must not exceed quorum_reputation")
        if not 0 <= self.reject_threshold_bp <= SCORE_SCALE_BP:
            raise InvalidParams("reject_threshold_bp must lie in 0..10000")
        if self.score_scale_bp != SCORE_SCALE_BP:
            raise InvalidParams("score_scale_bp is fixed at 10000")
        for name in ("vote_eligibility_min", "quorum_reputation", "promotion_bonus",
                     "participation_bonus", "rejection_penalty", "admin_initial_reputation"):
            if getattr(self, name) < 0:
                raise InvalidParams(f"{name} must be non-negative")
        if self.quorum_reputation <= 0:
            raise InvalidParams("quorum_reputation must be positive")


@dataclass
class Account:
    id: str
    role: Role
    reputation: int


@dataclass(frozen=True)
class Vote:
    voter: str
    score_bp: int
    voter_reputation_at_cast: int
    sequence_index: int


@dataclass
class ModelRecord:
    model_id: int
    cid: Cid
    submitter: str
    kind: str
    status: ModelStatus
    votes: list[Vote]
    final_score_bp: int | None
    submitted_at: int


@dataclass
class Event:
    """One entry of the append-only event log; unset fields stay ``None``."""

    kind: str
    sequence_index: int
    account: str | None = None
    model_id: int | None = None
    final_score_bp: int | None = None
    old_reputation: int | None = None
    new_reputation: int | None = None
    reason: str | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "sequence_index": self.sequence_index}
        for name in ("account", "model_id", "final_score_bp",
                     "old_reputation", "new_reputation", "reason"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


@dataclass
class LedgerState:
    params: LedgerParams
    accounts: dict[str, Account] = field(default_factory=dict)
    models: dict[int, ModelRecord] = field(default_factory=dict)
    primary: dict[str, int] = field(default_factory=dict)
    next_sequence: int = 0
    event_log: list[Event] = field(default_factory=list)

    def primary_record(self, kind: str) -> ModelRecord | None:
        model_id = self.primary.get(kind)
        return None if model_id is None else self.models[model_id]


# --- transactions (tagged form consumed by apply) ---------------------------

@dataclass(frozen=True)
class AddAdmin:
    caller: str
    account: str


@dataclass(frozen=True)
class AddClient:
    caller: str
    account: str


@dataclass(frozen=True)
class SubmitModel:
    caller: str
    cid: Cid
    kind: str


@dataclass(frozen=True)
class CastScore:
    caller: str
    model_id: int
    score_bp: int


Transaction = Union[AddAdmin, AddClient, SubmitModel, CastScore]


# --- operations -------------------------------------------------------------

def genesis(owner: str, params: LedgerParams | None = None) -> LedgerState:
    """Create a ledger with the deploying owner as its only account."""
    params = params if params is not None else LedgerParams()
    _check_account_id(owner)
    state = LedgerState(params=params)
    state.accounts[owner] = Account(owner, Role.OWNER, params.admin_initial_reputation)
    return state


def add_admin(state: LedgerState, caller: str, new_admin: str) -> Event:
    """Register ``new_admin`` with admin role and the initial admin reputation.

    Only the owner may add admins. Mutates ``state`` in place and returns the
    emitted event.
    """
    acct = state.accounts.get(caller)
    if acct is None or acct.role is not Role.OWNER:
        raise Unauthorized("only the owner may add admins")
    if new_admin in state.accounts:
        raise DuplicateAccount(f"account {new_admin[:12]}… already registered")
    _check_account_id(new_admin)

    seq = state.next_sequence
    state.accounts[new_admin] = Account(new_admin, Role.ADMIN,
                                        state.params.admin_initial_reputation)
    event = Event("admin_added", seq, account=new_admin)
    state.event_log.append(event)
    state.next_sequence += 1
    return event


def add_client(state: LedgerState, caller: str, new_client: str) -> Event:
    """Register ``new_client`` with client role and zero reputation.

    The registered account is always the argument, never the caller; the
    caller's own record is left untouched.
    """
    acct = state.accounts.get(caller)
    if acct is None or acct.role not in (Role.ADMIN, Role.OWNER):
        raise Unauthorized("only admins or the owner may add clients")
    if new_client in state.accounts:
        raise DuplicateAccount(f"account {new_client[:12]}… already registered")
    _check_account_id(new_client)

    seq = state.next_sequence
    state.accounts[new_client] = Account(new_client, Role.CLIENT, 0)
    event = Event("client_added", seq, account=new_client)
    state.event_log.append(event)
    state.next_sequence += 1
    return event


def submit_model(state: LedgerState, caller: str, cid: Cid, kind: str) -> tuple[int, Event]:
    """Record a model submission; only registered clients may submit."""
    acct = state.accounts.get(caller)
    if acct is None or acct.role is not Role.CLIENT:
        raise Unauthorized("only registered clients may submit models")
    if kind not in MODEL_KINDS:
        raise InvalidScore(f"unknown model kind {kind!r}")
    if any(rec.cid == cid for rec in state.models.values()):
        raise DuplicateCid(f"cid {cid.text} already submitted")

    seq = state.next_sequence
    model_id = max(state.models, default=-1) + 1
    state.models[model_id] = ModelRecord(
        model_id=model_id, cid=cid, submitter=caller, kind=kind,
        status=ModelStatus.OPEN, votes=[], final_score_bp=None, submitted_at=seq,
    )
    event = Event("model_submitted", seq, account=caller, model_id=model_id)
    state.event_log.append(event)
    state.next_sequence += 1
    return model_id, event


def weighted_final_score(votes: Sequence[tuple[int, int]]) -> int:
    """Reputation-weighted mean score, floored: ``Σ(rep·score) // Σrep``.

    Pure function over ``(reputation, score_bp)`` pairs. Python integers are
    unbounded, so the sum of products cannot overflow regardless of operand
    magnitude.
    """
    if len(votes) == 0:
        raise EmptyVoteSet("cannot score an empty vote set")
    total = sum(rep for rep, _ in votes)
    if total <= 0:
        raise ZeroTotalReputation("total reputation of the vote set is zero")
    return sum(rep * score for rep, score in votes) // total


def cast_score(state: LedgerState, caller: str, model_id: int, score_bp: int) -> list[Event]:
    """Cast a score on an open model; finalize and maybe promote on quorum.

    The vote is weighted by the caller's reputation at cast time. Once the
    cumulative counted reputation reaches the quorum, the vote set freezes:
    the final score is the floored reputation-weighted mean, the submitter's
    reputation is updated, and the model is promoted to primary if its final
    score clears the reject threshold and strictly beats the incumbent.
    Later votes are rejected with ``VotingClosed`` and change nothing.
    """
    params = state.params
    acct = state.accounts.get(caller)
    if acct is None or acct.role not in (Role.CLIENT, Role.ADMIN, Role.OWNER):
        raise Unauthorized("caller may not vote")
    rec = state.models.get(model_id)
    if rec is None:
        raise UnknownModel(f"no model {model_id}")
    if rec.status is not ModelStatus.OPEN:
        raise VotingClosed(f"model {model_id} is {rec.status.value}; future scores are ignored")
    if not 0 <= score_bp <= SCORE_SCALE_BP:
        raise InvalidScore(f"score {score_bp} outside 0..{SCORE_SCALE_BP}")
    if acct.reputation < params.vote_eligibility_min:
        raise Unauthorized(
            f"reputation {acct.reputation} below eligibility minimum "
            f"{params.vote_eligibility_min}")
    if caller == rec.submitter:
        raise SelfVote("submitters may not score their own model")
    if any(v.voter == caller for v in rec.votes):
        raise AlreadyVoted("one vote per voter per model")

    seq = state.next_sequence
    vote = Vote(caller, score_bp, acct.reputation, seq)
    rec.votes.append(vote)
    events = [Event("score_cast", seq, account=caller, model_id=model_id)]

    counted = sum(v.voter_reputation_at_cast for v in rec.votes)
    if counted >= params.quorum_reputation:
        final = weighted_final_score(
            [(v.voter_reputation_at_cast, v.score_bp) for v in rec.votes])
        rec.final_score_bp = final
        rec.status = ModelStatus.FINALIZED
        events.append(Event("model_finalized", seq, model_id=model_id,
                            final_score_bp=final))

        promoted = False
        if final >= params.reject_threshold_bp:
            incumbent_id = state.primary.get(rec.kind)
            incumbent = None if incumbent_id is None else state.models[incumbent_id]
            if incumbent is None or final > incumbent.final_score_bp:
                if incumbent is not None:
                    incumbent.status = ModelStatus.FINALIZED
                rec.status = ModelStatus.PRIMARY
                state.primary[rec.kind] = model_id
                promoted = True
                events.append(Event("model_promoted", seq, model_id=model_id,
                                    final_score_bp=final))
        else:
            rec.status = ModelStatus.REJECTED
            events.append(Event("model_rejected", seq, model_id=model_id,
                                final_score_bp=final))

        submitter = state.accounts[rec.submitter]
        old = submitter.reputation
        if promoted:
            new = old + params.promotion_bonus
        elif final >= params.reject_threshold_bp:
            new = old + params.participation_bonus
        else:
            new = max(0, old - params.rejection_penalty)  # saturating
        submitter.reputation = new
        events.append(Event("reputation_changed", seq, account=rec.submitter,
                            model_id=model_id, old_reputation=old, new_reputation=new))

    state.event_log.extend(events)
    state.next_sequence += 1
    return events


def apply(state: LedgerState, tx: Transaction) -> list[Event]:
    """Apply one tagged transaction atomically.

    On success the full effect lands and ``next_sequence`` advances by one.
    On a domain error nothing digest-covered changes; a single
    ``access_denied`` event is appended and returned.
    """
    try:
        if isinstance(tx, AddAdmin):
            return [add_admin(state, tx.caller, tx.account)]
        if isinstance(tx, AddClient):
            return [add_client(state, tx.caller, tx.account)]
        if isinstance(tx, SubmitModel):
            _, event = submit_model(state, tx.caller, tx.cid, tx.kind)
            return [event]
        if isinstance(tx, CastScore):
            return cast_score(state, tx.caller, tx.model_id, tx.score_bp)
        raise TypeError(f"unknown transaction type {type(tx).__name__}")
    except LedgerError as exc:
        event = Event("access_denied", state.next_sequence,
                      account=getattr(tx, "caller", None),
                      model_id=getattr(tx, "model_id", None),
                      reason=exc.code)
        state.event_log.append(event)
        return [event]


# --- canonical serialization and digests -------------------------------------

def _encode_params(params: LedgerParams) -> bytes:
    return b"".join(_wire.u64(v) for v in (
        params.vote_eligibility_min, params.quorum_reputation,
        params.reject_threshold_bp, params.promotion_bonus,
        params.participation_bonus, params.rejection_penalty,
        params.admin_initial_reputation, params.score_scale_bp,
    ))


def _encode_vote(vote: Vote, with_sequence: bool) -> bytes:
    out = [bytes.fromhex(vote.voter), _wire.u32(vote.score_bp),
           _wire.u64(vote.voter_reputation_at_cast)]
    if with_sequence:
        out.append(_wire.u64(vote.sequence_index))
    return b"".join(out)


_KIND_TAGS = {kind: i for i, kind in enumerate(MODEL_KINDS)}
_STATUS_TAGS = {status: i for i, status in enumerate(ModelStatus)}


def _encode_model(rec: ModelRecord, with_sequence: bool) -> bytes:
    out = [
        _wire.u64(rec.model_id),
        rec.cid.digest,
        bytes.fromhex(rec.submitter),
        _wire.u8(_KIND_TAGS[rec.kind]),
        _wire.u8(_STATUS_TAGS[rec.status]),
    ]
    if with_sequence:
        out.append(_wire.u64(rec.submitted_at))
    if rec.final_score_bp is None:
        out.append(_wire.u8(0))
    else:
        out.append(_wire.u8(1))
        out.append(_wire.u32(rec.final_score_bp))
    out.append(_wire.u32(len(rec.votes)))
    out.extend(_encode_vote(v, with_sequence) for v in rec.votes)
    return b"".join(out)


def _encode_models_block(state: LedgerState, with_sequence: bool) -> bytes:
    out = [_wire.u32(len(state.models))]
    out.extend(_encode_model(state.models[mid], with_sequence)
               for mid in sorted(state.models))
    return b"".join(out)


def _encode_primary_block(state: LedgerState) -> bytes:
    entries = sorted((_KIND_TAGS[kind], mid) for kind, mid in state.primary.items())
    return _wire.u8(len(entries)) + b"".join(
        _wire.u8(tag) + _wire.u64(mid) for tag, mid in entries)


def _encode_accounts_block(state: LedgerState) -> bytes:
    out = [_wire.u32(len(state.accounts))]
    for acct_id in sorted(state.accounts):
        acct = state.accounts[acct_id]
        out.append(bytes.fromhex(acct_id))
        out.append(_wire.u8(int(acct.role)))
        out.append(_wire.u64(acct.reputation))
    return b"".join(out)


def _encode_core(state: LedgerState) -> bytes:
    return (_encode_params(state.params)
            + _encode_accounts_block(state)
            + _encode_models_block(state, with_sequence=True)
            + _encode_primary_block(state))


def state_digest(state: LedgerState) -> bytes:
    """SHA-256 over the canonical encoding of params, accounts, models, and
    primary pointers. The event log and the transaction counter are excluded,
    so a rejected transaction (which only appends an ``access_denied`` event)
    leaves the digest unchanged.
    """
    return hashlib.sha256(STATE_MAGIC + _encode_core(state)).digest()


def consensus_digest(state: LedgerState) -> bytes:
    """Digest of consensus-meaningful content only: models with their votes
    (voter, score, weight) and primary pointers. Sequence stamps and the
    account registry are excluded, so runs that differ only by extra inert
    registrations and denied transactions compare equal.
    """
    body = (_encode_models_block(state, with_sequence=False)
            + _encode_primary_block(state))
    return hashlib.sha256(b"WFC1" + body).digest()


_EVENT_KIND_TAGS = {
    "admin_added": 0, "client_added": 1, "model_submitted": 2, "score_cast": 3,
    "model_finalized": 4, "model_promoted": 5, "model_rejected": 6,
    "reputation_changed": 7, "access_denied": 8,
}
_EVENT_KIND_NAMES = {v: k for k, v in _EVENT_KIND_TAGS.items()}


def _encode_event(event: Event) -> bytes:
    flags = ((event.account is not None) << 0
             | (event.model_id is not None) << 1
             | (event.final_score_bp is not None) << 2
             | (event.old_reputation is not None) << 3
             | (event.reason is not None) << 4)
    out = [_wire.u8(_EVENT_KIND_TAGS[event.kind]),
           _wire.u64(event.sequence_index), _wire.u8(flags)]
    if event.account is not None:
        out.append(bytes.fromhex(event.account))
    if event.model_id is not None:
        out.append(_wire.u64(event.model_id))
    if event.final_score_bp is not None:
        out.append(_wire.u32(event.final_score_bp))
    if event.old_reputation is not None:
        out.append(_wire.u64(event.old_reputation))
        out.append(_wire.u64(event.new_reputation))
    if event.reason is not None:
        out.append(_wire.text(event.reason))
    return b"".join(out)


def encode_state(state: LedgerState) -> bytes:
    """Full canonical binary encoding (magic ``WFL1``), fit for persistence."""
    out = [STATE_MAGIC, _encode_core(state), _wire.u64(state.next_sequence),
           _wire.u32(len(state.event_log))]
    out.extend(_encode_event(e) for e in state.event_log)
    return b"".join(out)


def decode_state(data: bytes) -> LedgerState:
    """Inverse of :func:`encode_state`; raises ``MalformedState`` on bad bytes."""
    reader = _wire.Reader(data)
    try:
        if reader.take(4) != STATE_MAGIC:
            raise MalformedState("bad magic; not a WFL1 ledger state")
        params = LedgerParams(*(reader.u64() for _ in range(8)))
        state = LedgerState(params=params)

        for _ in range(reader.u32()):
            acct_id = reader.take(32).hex()
            role = Role(reader.u8())
            state.accounts[acct_id] = Account(acct_id, role, reader.u64())

        kinds = {v: k for k, v in _KIND_TAGS.items()}
        statuses = {v: k for k, v in _STATUS_TAGS.items()}
        for _ in range(reader.u32()):
            model_id = reader.u64()
            cid = Cid(reader.take(32))
            submitter = reader.take(32).hex()
            kind = kinds[reader.u8()]
            status = statuses[reader.u8()]
            submitted_at = reader.u64()
            final = reader.u32() if reader.u8() else None
            votes = [Vote(reader.take(32).hex(), reader.u32(), reader.u64(), reader.u64())
                     for _ in range(reader.u32())]
            state.models[model_id] = ModelRecord(model_id, cid, submitter, kind,
                                                 status, votes, final, submitted_at)

        for _ in range(reader.u8()):
            state.primary[kinds[reader.u8()]] = reader.u64()

        state.next_sequence = reader.u64()
        for _ in range(reader.u32()):
            kind = _EVENT_KIND_NAMES[reader.u8()]
            seq = reader.u64()
            flags = reader.u8()
            event = Event(kind, seq)
            if flags & 1:
                event.account = reader.take(32).hex()
            if flags & 2:
                event.model_id = reader.u64()
            if flags & 4:
                event.final_score_bp = reader.u32()
            if flags & 8:
                event.old_reputation = reader.u64()
                event.new_reputation = reader.u64()
            if flags & 16:
                event.reason = reader.text()
            state.event_log.append(event)

        if not reader.eof():
            raise MalformedState("trailing bytes after ledger state")
    except (_wire.WireError, KeyError, ValueError, InvalidParams) as exc:
        raise MalformedState(f"cannot decode ledger state: {exc}") from exc
    return state


def events_jsonl(events: Iterable[Event]) -> str:
    """Event log as JSON lines, one event per line."""
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in events)
