"""Simulated network, party scheduler and exact branch enumeration.

Parties are state machines stepped round-robin.  Every message goes through a
registered :class:`ChannelSpec`; qubits change custody only through
``QubitTransfer`` messages on quantum channels.  All randomness (client
choices, trusted-center secrets, measurement outcomes) is drawn through a
:class:`Chooser`, which either samples from per-party seeded generators or
hands control to :func:`enumerate_runs` for exhaustive, Born-weighted
branching.
"""

from __future__ import annotations

import copy
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from .angle import Angle
from .qstate import PRUNE, RegisterPool, draw

__all__ = [
    "Party",
    "ChannelSpec",
    "Message",
    "Network",
    "Chooser",
    "NeedChoice",
    "Machine",
    "World",
    "ConfigError",
    "CustodyError",
    "DeadlockError",
    "run_schedule",
    "enumerate_runs",
    "adversary_view",
    "canonical_view",
    "transcript_json",
    "trial_seed",
    "ALL_TAGS",
]


class Party(str, Enum):
    TC = "TrustedCenter"
    CLIENT = "Client"
    SERVER1 = "Server1"
    SERVER2 = "Server2"
    SERVER3 = "Server3"


PARTY_ORDER = tuple(Party)

ALL_TAGS = frozenset({"secret", "client", "rsp", "compute"})


class ConfigError(ValueError):
    pass


class CustodyError(RuntimeError):
    pass


class DeadlockError(RuntimeError):
    pass


# -- channels and messages ---------------------------------------------------

@dataclass(frozen=True)
class ChannelSpec:
    src: Party
    dst: Party
    kind: str = "classical"  # or "quantum"
    private: bool = False


def _is_bit(v) -> bool:
    return v in (0, 1)


_KINDS: dict[str, Callable[[object], bool]] = {
    "AngleList": lambda p: isinstance(p, tuple) and all(isinstance(a, Angle) for a in p),
    "BitList": lambda p: isinstance(p, tuple) and all(_is_bit(b) for b in p),
    "DeltaMsg": lambda p: isinstance(p, tuple) and len(p) == 2 and isinstance(p[1], Angle),
    "MeasureReply": lambda p: isinstance(p, tuple) and len(p) == 2 and _is_bit(p[1]),
    "QubitTransfer": lambda p: isinstance(p, tuple) and all(isinstance(q, int) for q in p),
    "SecretPackage": lambda p: isinstance(p, tuple) and len(p) == 2,
    "PairList": lambda p: isinstance(p, tuple) and all(len(t) == 2 for t in p),
    "IndexList": lambda p: isinstance(p, tuple) and all(isinstance(i, int) for i in p),
}
QUANTUM_KINDS = {"QubitTransfer"}


@dataclass(frozen=True)
class Message:
    seq: int
    channel: ChannelSpec
    kind: str
    payload: tuple

    @property
    def src(self) -> Party:
        return self.channel.src

    @property
    def dst(self) -> Party:
        return self.channel.dst


def _jsonable(payload):
    if isinstance(payload, Angle):
        return payload.eighths
    if isinstance(payload, (tuple, list)):
        return [_jsonable(p) for p in payload]
    if isinstance(payload, Enum):
        return payload.value
    return payload


def transcript_json(transcript: Iterable[Message]) -> list[dict]:
    return [
        {
            "seq": m.seq,
            "from": m.src.value,
            "to": m.dst.value,
            "kind": m.kind,
            "private": m.channel.private,
            "payload": _jsonable(m.payload),
        }
        for m in transcript
    ]


def visible(m: Message, coalition) -> bool:
    return m.src in coalition or m.dst in coalition or not m.channel.private


def adversary_view(transcript: Iterable[Message], coalition, custody_log=None):
    """Messages a coalition observes.

    That is every message sent or received by a member, plus everything on a
    non-private channel.  With ``custody_log`` (``(seq, qubit, src, dst)``
    tuples) the custody history of qubits the coalition ever held is returned
    alongside.
    """
    coalition = frozenset(coalition)
    msgs = [m for m in transcript if visible(m, coalition)]
    if custody_log is None:
        return msgs
    held = {q for _, q, s, d in custody_log if s in coalition or d in coalition}
    return msgs, [e for e in custody_log if e[1] in held]


def _canon_payload(kind: str, payload, labels: dict):
    if kind == "QubitTransfer":
        out = []
        for q in payload:
            if q not in labels:
                labels[q] = len(labels)
            out.append(labels[q])
        return tuple(out)
    return _jsonable_tuple(payload)


def _jsonable_tuple(p):
    if isinstance(p, Angle):
        return p.eighths
    if isinstance(p, tuple):
        return tuple(_jsonable_tuple(x) for x in p)
    return p


def canonical_view(transcript: Iterable[Message], coalition) -> tuple:
    """Hashable, label-free form of a coalition view.

    Sequence numbers are dropped and simulator qubit ids are replaced by their
    order of first appearance, since neither is observable.
    """
    labels: dict[int, int] = {}
    return tuple(
        (m.src.value, m.dst.value, m.kind, _canon_payload(m.kind, m.payload, labels))
        for m in transcript
        if visible(m, frozenset(coalition))
    )


class Network:
    """Reliable in-order channels with custody tracking.

    ``record`` is ``"full"`` (keep every :class:`Message`), ``None`` (keep
    nothing) or a coalition (keep only its canonical view, as used by the
    enumerator).
    """

    def __init__(self, channels: Iterable[ChannelSpec], record="full"):
        self.channels: dict[tuple, ChannelSpec] = {}
        for c in channels:
            self.channels[(c.src, c.dst, c.kind)] = c
        self.queues: dict[tuple[Party, Party], list[Message]] = {}
        self.custody: dict[int, Party] = {}
        self.custody_log: list[tuple] = []
        self.transcript: list[Message] = []
        self.seq = 0
        self.coalition = None if record in ("full", None) else frozenset(record)
        self.keep_full = record == "full"
        self.view: tuple = ()
        self._labels: dict[int, int] = {}

    def channel(self, src: Party, dst: Party, kind: str) -> ChannelSpec:
        c = self.channels.get((src, dst, kind))
        if c is None:
            raise ConfigError(f"no {kind} channel {src.value} -> {dst.value}")
        return c

    # custody
    def assign(self, party: Party, *qubits: int) -> None:
        for q in qubits:
            self.custody[q] = party
            if self.keep_full:
                self.custody_log.append((self.seq, q, None, party))

    def require(self, party: Party, *qubits: int) -> None:
        for q in qubits:
            owner = self.custody.get(q)
            if owner is not party:
                raise CustodyError(f"{party.value} acted on qubit {q} held by {owner and owner.value}")

    def send(self, src: Party, dst: Party, kind: str, payload) -> Message:
        check = _KINDS.get(kind)
        if check is None or not check(payload):
            raise ConfigError(f"payload does not match message kind {kind}")
        chan = self.channel(src, dst, "quantum" if kind in QUANTUM_KINDS else "classical")
        if kind in QUANTUM_KINDS:
            self.require(src, *payload)
            for q in payload:
                self.custody[q] = dst
                if self.keep_full:
                    self.custody_log.append((self.seq, q, src, dst))
        msg = Message(self.seq, chan, kind, payload)
        self.seq += 1
        self.queues.setdefault((src, dst), []).append(msg)
        if self.keep_full:
            self.transcript.append(msg)
        elif self.coalition is not None and visible(msg, self.coalition):
            self.view += ((src.value, dst.value, kind, _canon_payload(kind, payload, self._labels)),)
        return msg

    def peek(self, dst: Party, src: Party, kind: str):
        q = self.queues.get((src, dst))
        if q and q[0].kind == kind:
            return q[0].payload
        return None

    def recv(self, dst: Party, src: Party, kind: str):
        q = self.queues.get((src, dst))
        if q and q[0].kind == kind:
            return q.pop(0).payload
        return None

    def clone(self) -> Network:
        new = copy.copy(self)
        new.queues = {k: list(v) for k, v in self.queues.items() if v}
        new.custody = dict(self.custody)
        new.custody_log = list(self.custody_log)
        new.transcript = list(self.transcript)
        new._labels = dict(self._labels)
        return new

    def key(self) -> tuple:
        queues = tuple(
            (k[0].value, k[1].value, tuple((m.kind, m.payload) for m in v))
            for k, v in sorted(self.queues.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))
            if v
        )
        if self.keep_full:
            hist = tuple((m.src.value, m.dst.value, m.kind, m.payload) for m in self.transcript)
            return queues, hist
        return queues, self.view


# -- randomness --------------------------------------------------------------

class NeedChoice(Exception):
    """Raised by an enumerating :class:`Chooser` at an undecided branch."""

    def __init__(self, options):
        super().__init__(f"{len(options)} options")
        self.options = options


def trial_seed(master: int, index: int) -> int:
    """Deterministic per-trial seed mixed from the master seed and trial index."""
    ss = np.random.SeedSequence(int(master) & (2**64 - 1), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


class Chooser:
    """Source of every random decision in a run.

    Tags in ``enumerate`` are branched over exhaustively (see
    :func:`enumerate_runs`); all other tags are sampled from a generator
    private to the drawing party, derived from ``seed``.
    """

    def __init__(self, seed: int = 0, enumerate: Iterable[str] = ()):
        self.seed = int(seed)
        self.enum = frozenset(enumerate)
        self.rngs: dict[Party, np.random.Generator] = {}
        self.pending: list[int] = []
        self.made: list[int] = []
        self.weight = 1.0

    def rng(self, party: Party) -> np.random.Generator:
        g = self.rngs.get(party)
        if g is None:
            ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(PARTY_ORDER.index(party),))
            g = self.rngs[party] = np.random.default_rng(ss)
        return g

    def pick(self, party: Party, probs, tag: str) -> int:
        if tag in self.enum:
            if self.pending:
                k = self.pending.pop(0)
                self.made.append(k)
                self.weight *= probs[k]
                return k
            raise NeedChoice([(i, p) for i, p in enumerate(probs) if p > PRUNE])
        return draw(probs, self.rng(party))

    def clone(self) -> Chooser:
        new = copy.copy(self)
        new.rngs = {p: copy.deepcopy(g) for p, g in self.rngs.items()} if self.rngs else {}
        new.pending = list(self.pending)
        new.made = []
        return new

    def key(self) -> tuple:
        out = []
        for p in sorted(self.rngs, key=lambda p: p.value):
            st = self.rngs[p].bit_generator.state
            out.append((p.value, st["state"]["state"], st["has_uint32"], st["uinteger"]))
        return tuple(out)


@dataclass
class PartyRandom:
    """A chooser bound to one party; passed to qstate measurement calls."""

    chooser: Chooser
    party: Party

    def pick(self, probs, tag=None) -> int:
        return self.chooser.pick(self.party, probs, tag or "compute")

    def bit(self, tag: str, p: float = 0.5) -> int:
        return self.pick((1.0 - p, p), tag)

    def below(self, k: int, tag: str) -> int:
        return self.pick((1.0 / k,) * k, tag)


# -- machines and worlds -----------------------------------------------------

class Machine:
    """Base party machine.

    ``step`` performs one atomic action and returns ``True``, or returns
    ``False`` without side effects when the expected input is missing.
    Attributes named in ``static`` are configuration shared by all branches
    and excluded from :meth:`key`.
    """

    party: Party
    static: tuple[str, ...] = ("cfg",)
    done: bool = False

    def step(self, w: World) -> bool:  # pragma: no cover - abstract
        raise NotImplementedError

    def waiting_on(self) -> str:
        return getattr(self, "phase", "?")

    def clone(self) -> Machine:
        new = object.__new__(type(self))
        d = new.__dict__
        for k, v in self.__dict__.items():
            if type(v) in _MUTABLE and k not in self.static:
                v = type(v)(v)
            d[k] = v
        d["_kc"] = None
        return new

    def key(self) -> tuple:
        # cached: enumeration only mutates freshly cloned machines
        kc = getattr(self, "_kc", None)
        if kc is None:
            kc = self._kc = tuple(
                (k, _freeze(v))
                for k, v in sorted(vars(self).items())
                if k not in self.static and not k.startswith("_")
            )
        return kc


_MUTABLE = (list, dict, set)


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    if isinstance(v, dict):
        return tuple(sorted((k, _freeze(x)) for k, x in v.items()))
    if isinstance(v, set):
        return frozenset(v)
    return v


@dataclass
class World:
    pool: RegisterPool
    net: Network
    machines: dict[Party, Machine]
    chooser: Chooser
    ptr: int = 0
    ticks: int = 0
    hooks: dict = field(default_factory=dict)

    def rand(self, party: Party) -> PartyRandom:
        return PartyRandom(self.chooser, party)

    def done(self) -> bool:
        return all(m.done for m in self.machines.values())

    def clone(self) -> World:
        return World(
            self.pool.fork(),
            self.net.clone(),
            dict(self.machines),  # machines are cloned on write, see tick()
            self.chooser.clone(),
            self.ptr,
            self.ticks,
            self.hooks,
        )

    def key(self) -> tuple:
        return (
            self.ptr,
            tuple(m.key() for m in self.machines.values()),
            self.net.key(),
            self.pool.key(),
            self.chooser.key(),
        )


def _order(w: World) -> list[Party]:
    return [p for p in PARTY_ORDER if p in w.machines]


def tick(w: World) -> bool:
    """Step the next ready machine in round-robin party order."""
    order = _order(w)
    n = len(order)
    for k in range(n):
        i = (w.ptr + k) % n
        m = w.machines[order[i]]
        if m.done:
            continue
        fresh = w.machines[order[i]] = m.clone()
        if fresh.step(w):
            w.ptr = (i + 1) % n
            w.ticks += 1
            return True
        w.machines[order[i]] = m  # no side effects; keep the cached key
    return False


def _deadlock(w: World) -> DeadlockError:
    waiting = ", ".join(f"{p.value} waiting on {m.waiting_on()}" for p, m in w.machines.items() if not m.done)
    return DeadlockError(f"deadlock: {waiting}")


def run_schedule(w: World, max_ticks: int = 10**7) -> list[Message]:
    while not w.done():
        if not tick(w):
            raise _deadlock(w)
        if w.ticks > max_ticks:
            raise DeadlockError("tick budget exhausted")
    return w.net.transcript


def enumerate_runs(world: World, extract: Callable[[World], object], merge: bool = True) -> dict:
    """Exhaustively branch over every enumerated choice.

    Returns ``{extract(final_world): probability}``.  Branches are explored
    breadth-first by tick count; worlds whose complete state (machines,
    queues, recorded view, quantum state up to global phase, generator
    states) coincides are merged and their weights added, which is exact
    because such worlds have identical futures.
    """
    result: dict = {}
    buckets: dict[int, dict] = {}
    heap: list[int] = []
    counter = [0]

    def push(w: World, pending: tuple, weight: float, key=None) -> None:
        t = w.ticks
        if t not in buckets:
            buckets[t] = {}
            heapq.heappush(heap, t)
        if merge:
            k = (key if key is not None else w.key(), pending)
        else:
            counter[0] += 1
            k = counter[0]
        slot = buckets[t].get(k)
        if slot is None:
            buckets[t][k] = [w, pending, weight]
        else:
            slot[2] += weight

    push(world, (), 1.0)
    while heap:
        t = heap[0]
        bucket = buckets[t]
        if not bucket:
            heapq.heappop(heap)
            del buckets[t]
            continue
        k, (base, pending, weight) = bucket.popitem()
        if base.done():
            out = extract(base)
            result[out] = result.get(out, 0.0) + weight
            continue
        w = base.clone()
        ch = w.chooser
        ch.pending = list(pending)
        ch.made = []
        ch.weight = 1.0
        try:
            progressed = tick(w)
        except NeedChoice as nc:
            bkey = k[0] if merge else None
            for idx, _ in nc.options:
                push(base, tuple(ch.made) + (idx,), weight, bkey)
            continue
        if not progressed:
            raise _deadlock(w)
        push(w, (), weight * ch.weight)
    return result
