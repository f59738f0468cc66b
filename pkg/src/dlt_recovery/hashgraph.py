"""Stake-weighted hashgraph consensus.

One :class:`Hashgraph` is one replica's store.  Events are inserted after
their parents; rounds and witness flags are fixed at insertion, while fame
elections and the consensus order advance in :meth:`Hashgraph.update`.

Ancestry is kept as a Python-int bitset per event (bit ``i`` = the event
inserted ``i``-th in this store), which makes ancestor and descendant tests
constant-time bit lookups.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DomainError, InvalidEventError, OrphanEventError, UnknownEventError
from .scenario import RecoveryImpact

ZERO_ID = bytes(32)
COIN_PERIOD = 10


@dataclass(frozen=True)
class Transaction:
    role: str
    flight_id: int
    queue_position: int
    stake_entropy: float
    impact: RecoveryImpact

    def __post_init__(self):
        if self.flight_id < 0 or self.queue_position < 0:
            raise DomainError("flight_id and queue_position must be non-negative")

    def encode(self) -> bytes:
        role = self.role.encode("utf-8")
        i = self.impact
        return (struct.pack(">I", len(role)) + role
                + struct.pack(">qqd", self.flight_id, self.queue_position, self.stake_entropy)
                + struct.pack(">qqqq", i.tactical_delay_min, i.turnaround_min,
                              i.block_time_min, i.strategic_delay_min))


def encode_event(creator: int, self_parent: bytes | None, other_parent: bytes | None,
                 timestamp: int, payload: Sequence[Transaction]) -> bytes:
    """Canonical bytes hashed for the id and signed by the creator."""
    out = [struct.pack(">Q", creator), self_parent or ZERO_ID, other_parent or ZERO_ID,
           struct.pack(">qI", timestamp, len(payload))]
    for tx in payload:
        b = tx.encode()
        out.append(struct.pack(">I", len(b)) + b)
    return b"".join(out)


def sign(key: bytes, message: bytes) -> bytes:
    return hmac.new(key, message, hashlib.sha256).digest()


def agent_key(seed: int, creator: int) -> bytes:
    """Simulated key material for ``creator``."""
    return hashlib.sha256(b"dlt-recovery/key" + struct.pack(">qQ", seed, creator)).digest()


@dataclass(frozen=True)
class Event:
    creator: int
    self_parent: bytes | None
    other_parent: bytes | None
    timestamp: int
    payload: tuple[Transaction, ...]
    signature: bytes
    id: bytes

    @classmethod
    def create(cls, key: bytes, creator: int, self_parent: bytes | None,
               other_parent: bytes | None, timestamp: int,
               payload: Iterable[Transaction] = ()) -> "Event":
        payload = tuple(payload)
        msg = encode_event(creator, self_parent, other_parent, timestamp, payload)
        return cls(creator, self_parent, other_parent, timestamp, payload,
                   sign(key, msg), hashlib.sha256(msg).digest())

    def encode(self) -> bytes:
        return encode_event(self.creator, self.self_parent, self.other_parent,
                            self.timestamp, self.payload)

    @property
    def coin(self) -> int:
        """Middle bit of the signature."""
        return (int.from_bytes(self.signature, "big") >> (len(self.signature) * 4)) & 1


class AddressBook:
    """Fixed stake per creator for one consensus epoch."""

    def __init__(self, stakes: Mapping[int, int]):
        if not stakes:
            raise DomainError("address book is empty")
        for c, s in stakes.items():
            if not isinstance(s, int) or s < 1:
                raise DomainError(f"stake of {c} must be a positive integer, got {s!r}")
        self.stakes = dict(stakes)
        self.total = sum(self.stakes.values())

    def __contains__(self, creator) -> bool:
        return creator in self.stakes

    def __getitem__(self, creator) -> int:
        return self.stakes[creator]

    def __len__(self):
        return len(self.stakes)

    def supermajority(self, stake: int) -> bool:
        """Strictly more than two thirds of the total stake."""
        return 3 * stake > 2 * self.total


class Fame(enum.Enum):
    FAMOUS = "F"
    NOT_FAMOUS = "N"
    UNDECIDED = "U"


@dataclass(frozen=True)
class RoundInfo:
    round_created: int
    is_witness: bool
    fame: Fame
    round_received: int | None
    consensus_timestamp: int | None
    consensus_position: int | None


@dataclass(frozen=True)
class OrderedTransaction:
    position: int
    index: int
    transaction: Transaction
    event_id: bytes
    consensus_timestamp: int
    famous_witness: bool


@dataclass
class _ForkGroup:
    creator: int
    members: list[int] = field(default_factory=list)
    mask: int = 0


class Hashgraph:
    """A replica's event store and consensus state.

    ``keys`` maps each creator to its (simulated) signing key.  ``verify``
    can be switched off to build deliberately corrupted stores in tests.
    """

    def __init__(self, book: AddressBook, keys: Mapping[int, bytes], *,
                 coin_period: int = COIN_PERIOD, verify: bool = True):
        self.book = book
        self.keys = dict(keys)
        self.coin_period = coin_period
        self.verify = verify

        self._events: list[Event] = []
        self._idx: dict[bytes, int] = {}
        self._creator: list[int] = []
        self._sp: list[int] = []
        self._op: list[int] = []
        self._seq: list[int] = []
        self._anc: list[int] = []
        self._forkseen: list[frozenset] = []
        self._top: list[dict[int, int]] = []
        self._round: list[int] = []
        self._witness: list[bool] = []

        self._siblings: dict[tuple[int, int], _ForkGroup] = {}
        self._fork_groups: list[_ForkGroup] = []
        self.forks: list[tuple[bytes, bytes]] = []

        self._wit: dict[int, list[int]] = {}
        self._max_round = 0
        self._undecided: set[int] = set()
        self._fame: dict[int, bool] = {}
        self._fame_round: dict[int, int] = {}
        self._votes: dict[tuple[int, int], bool] = {}
        self._ss: dict[int, list[int]] = {}

        self._decided = 0
        self._ufw: dict[int, list[int]] = {}
        self._rr: dict[int, int] = {}
        self._cts: dict[int, int] = {}
        self._pos: dict[int, int] = {}
        self._order: list[int] = []
        self._pending = 0
        self.transactions_ordered = 0

    # -- storage ------------------------------------------------------------

    def __len__(self):
        return len(self._events)

    def __contains__(self, event_id: bytes) -> bool:
        return event_id in self._idx

    @property
    def events(self) -> list[Event]:
        """Events in insertion order, which is topological."""
        return self._events

    def get(self, event_id: bytes) -> Event:
        return self._events[self._i(event_id)]

    def _i(self, event_id: bytes) -> int:
        try:
            return self._idx[event_id]
        except KeyError:
            raise UnknownEventError(f"unknown event {event_id.hex()[:16]}") from None

    def _check(self, ev: Event) -> None:
        if ev.creator not in self.book:
            raise InvalidEventError(f"creator {ev.creator} is not a member")
        msg = ev.encode()
        if hashlib.sha256(msg).digest() != ev.id:
            raise InvalidEventError("event id does not match its contents")
        key = self.keys.get(ev.creator)
        if key is None or not hmac.compare_digest(sign(key, msg), ev.signature):
            raise InvalidEventError("bad signature")

    def insert(self, ev: Event) -> bool:
        """Add ``ev``; returns False if it was already present.

        Raises :class:`OrphanEventError` when a parent is missing and
        :class:`InvalidEventError` on a bad hash, signature or parent creator.
        """
        if ev.id in self._idx:
            return False
        if self.verify:
            self._check(ev)
        if ev.self_parent is None and ev.other_parent is not None:
            raise InvalidEventError("an event without a self-parent cannot have an other-parent")
        parents = [p for p in (ev.self_parent, ev.other_parent) if p is not None]
        missing = [p for p in parents if p not in self._idx]
        if missing:
            raise OrphanEventError(f"missing parent {missing[0].hex()[:16]}")
        sp = self._idx[ev.self_parent] if ev.self_parent is not None else -1
        op = self._idx[ev.other_parent] if ev.other_parent is not None else -1
        if sp >= 0 and self._creator[sp] != ev.creator:
            raise InvalidEventError("self-parent has a different creator")
        if op >= 0 and self._creator[op] == ev.creator:
            raise InvalidEventError("other-parent has the same creator")

        i = len(self._events)
        self._events.append(ev)
        self._idx[ev.id] = i
        self._creator.append(ev.creator)
        self._sp.append(sp)
        self._op.append(op)
        self._seq.append(self._seq[sp] + 1 if sp >= 0 else 0)
        anc = 1 << i
        for p in (sp, op):
            if p >= 0:
                anc |= self._anc[p]
        self._anc.append(anc)
        self._pending |= 1 << i

        self._record_fork(i, ev.creator, sp)
        seen = set()
        for p in (sp, op):
            if p >= 0:
                seen |= self._forkseen[p]
        for g in self._fork_groups:
            if g.creator not in seen and (anc & g.mask).bit_count() >= 2:
                seen.add(g.creator)
        self._forkseen.append(frozenset(seen))

        top = dict(self._top[sp]) if sp >= 0 else {}
        if op >= 0:
            for c, e in self._top[op].items():
                if c not in top or self._seq[e] > self._seq[top[c]]:
                    top[c] = e
        top[ev.creator] = i
        self._top.append(top)

        self._assign_round(i, sp, op)
        return True

    def insert_many(self, events: Iterable[Event]) -> int:
        return sum(self.insert(ev) for ev in events)

    def _record_fork(self, i: int, creator: int, sp: int) -> None:
        g = self._siblings.get((creator, sp))
        if g is None:
            self._siblings[(creator, sp)] = _ForkGroup(creator, [i], 1 << i)
            return
        for j in g.members:
            self.forks.append((self._events[j].id, self._events[i].id))
        if len(g.members) == 1:
            self._fork_groups.append(g)
        g.members.append(i)
        g.mask |= 1 << i

    def forks_by(self, creator: int) -> list[tuple[bytes, bytes]]:
        return [(a, b) for a, b in self.forks if self.get(a).creator == creator]

    # -- ancestry -----------------------------------------------------------

    def _is_anc(self, x: int, y: int) -> bool:
        return bool((self._anc[y] >> x) & 1)

    def is_ancestor(self, x: bytes, y: bytes) -> bool:
        """True if ``x`` is ``y`` or reachable from ``y`` through parents."""
        return self._is_anc(self._i(x), self._i(y))

    def is_self_ancestor(self, x: bytes, y: bytes) -> bool:
        ix, iy = self._i(x), self._i(y)
        while iy >= 0 and self._seq[iy] >= self._seq[ix]:
            if iy == ix:
                return True
            iy = self._sp[iy]
        return False

    def _sees(self, x: int, y: int) -> bool:
        return self._is_anc(y, x) and self._creator[y] not in self._forkseen[x]

    def sees(self, x: bytes, y: bytes) -> bool:
        """``x`` sees ``y``: y is an ancestor and x's ancestry holds no fork by y's creator."""
        return self._sees(self._i(x), self._i(y))

    def _strongly_sees(self, x: int, y: int) -> bool:
        if not self._is_anc(y, x):
            return False
        # x sees exactly the events of creators not forked in its ancestry,
        # and each such creator's events there form a chain.  Fork sightings
        # only accumulate along a chain, so the earliest chain member that
        # descends from y is the one most likely to see y.
        forked = self._forkseen[x]
        cy = self._creator[y]
        stake = 0
        for c, z in self._top[x].items():
            if c in forked or not self._is_anc(y, z):
                continue
            if cy in forked:
                while self._sp[z] >= 0 and self._is_anc(y, self._sp[z]):
                    z = self._sp[z]
                if cy in self._forkseen[z]:
                    continue
            stake += self.book[c]
        return self.book.supermajority(stake)

    def strongly_sees(self, x: bytes, y: bytes) -> bool:
        return self._strongly_sees(self._i(x), self._i(y))

    # -- rounds -------------------------------------------------------------

    def _assign_round(self, i: int, sp: int, op: int) -> None:
        if sp < 0 and op < 0:
            r = 1
        else:
            r = max(self._round[p] for p in (sp, op) if p >= 0)
            creators = set()
            for w in self._wit.get(r, ()):
                c = self._creator[w]
                if c not in creators and self._strongly_sees(i, w):
                    creators.add(c)
            if self.book.supermajority(sum(self.book[c] for c in creators)):
                r += 1
        self._round.append(r)
        witness = sp < 0 or self._round[sp] < r
        self._witness.append(witness)
        if witness:
            self._wit.setdefault(r, []).append(i)
            self._undecided.add(i)
            self._max_round = max(self._max_round, r)

    def round_created(self, event_id: bytes) -> int:
        return self._round[self._i(event_id)]

    def is_witness(self, event_id: bytes) -> bool:
        return self._witness[self._i(event_id)]

    def witnesses(self, r: int) -> list[bytes]:
        return [self._events[w].id for w in self._wit.get(r, ())]

    @property
    def max_round(self) -> int:
        return self._max_round

    # -- fame ---------------------------------------------------------------

    def _strongly_seen_prev(self, y: int) -> list[int]:
        s = self._ss.get(y)
        if s is None:
            s = [w for w in self._wit.get(self._round[y] - 1, ()) if self._strongly_sees(y, w)]
            self._ss[y] = s
        return s

    def _elect(self, x: int) -> None:
        rx = self._round[x]
        for ry in range(rx + 1, self._max_round + 1):
            d = ry - rx
            for y in self._wit.get(ry, ()):
                key = (y, x)
                if key in self._votes:
                    # a vote depends only on y's ancestry; had it decided, we
                    # would not be here
                    continue
                if d == 1:
                    self._votes[key] = self._sees(y, x)
                    continue
                yes = no = 0
                for w in self._strongly_seen_prev(y):
                    if self._votes[(w, x)]:
                        yes += self.book[self._creator[w]]
                    else:
                        no += self.book[self._creator[w]]
                v = yes >= no
                t = yes if v else no
                strong = self.book.supermajority(t)
                if d % self.coin_period:
                    self._votes[key] = v
                    if strong:
                        self._fame[x] = v
                        self._fame_round[x] = ry
                        self._undecided.discard(x)
                        return
                else:
                    self._votes[key] = v if strong else bool(self._events[y].coin)

    def _decide_fame(self) -> None:
        # includes late witnesses of already frozen rounds; their fame is
        # reported but never changes a frozen round's famous set
        for x in sorted(self._undecided, key=lambda i: (self._round[i], i)):
            if self._round[x] + 2 <= self._max_round:
                self._elect(x)

    def fame(self, event_id: bytes) -> Fame:
        return self._fame_of(self._i(event_id))

    def _fame_of(self, i: int) -> Fame:
        if not self._witness[i]:
            return Fame.NOT_FAMOUS
        if i not in self._fame:
            return Fame.UNDECIDED
        return Fame.FAMOUS if self._fame[i] else Fame.NOT_FAMOUS

    def fame_decision_round(self, event_id: bytes) -> int | None:
        """Round of the witness whose vote decided this witness's fame."""
        return self._fame_round.get(self._i(event_id))

    def _is_famous(self, i: int) -> bool:
        return self._fame.get(i, False)

    # -- ordering -----------------------------------------------------------

    def update(self) -> list[bytes]:
        """Advance fame elections and the consensus order; return newly ordered ids."""
        self._decide_fame()
        new: list[int] = []
        while True:
            r = self._decided + 1
            wits = self._wit.get(r)
            if not wits or any(w not in self._fame for w in wits):
                break
            famous = [w for w in wits if self._fame[w]]
            per_creator: dict[int, int] = {}
            for w in famous:
                per_creator[self._creator[w]] = per_creator.get(self._creator[w], 0) + 1
            ufw = [w for w in famous if per_creator[self._creator[w]] == 1]
            self._ufw[r] = ufw
            self._decided = r
            if ufw:
                new += self._receive_round(r, ufw)
        return [self._events[i].id for i in new]

    def _receive_round(self, r: int, ufw: list[int]) -> list[int]:
        common = -1
        for w in ufw:
            common &= self._anc[w]
        cand = common & self._pending
        self._pending &= ~cand
        whitening = 0
        for w in ufw:
            whitening ^= int.from_bytes(self._events[w].signature, "big")
        batch = []
        while cand:
            low = cand & -cand
            x = low.bit_length() - 1
            cand ^= low
            ts = self._median_timestamp(x, ufw)
            self._rr[x] = r
            self._cts[x] = ts
            key = int.from_bytes(self._events[x].id, "big") ^ whitening
            batch.append((ts, key, x))
        batch.sort()
        out = []
        for _, _, x in batch:
            self._pos[x] = len(self._order)
            self._order.append(x)
            self.transactions_ordered += len(self._events[x].payload)
            out.append(x)
        return out

    def _median_timestamp(self, x: int, ufw: list[int]) -> int:
        basket = []
        for w in ufw:
            z = w
            while self._sp[z] >= 0 and self._is_anc(x, self._sp[z]):
                z = self._sp[z]
            basket.append((self._events[z].timestamp, self.book[self._creator[w]]))
        return weighted_lower_median(basket)

    def round_received(self, event_id: bytes) -> int | None:
        return self._rr.get(self._i(event_id))

    def consensus_timestamp(self, event_id: bytes) -> int | None:
        return self._cts.get(self._i(event_id))

    def consensus_position(self, event_id: bytes) -> int | None:
        return self._pos.get(self._i(event_id))

    @property
    def decided_round(self) -> int:
        """Every round up to this one has all known witnesses' fame decided."""
        return self._decided

    def unique_famous_witnesses(self, r: int) -> list[bytes] | None:
        u = self._ufw.get(r)
        return None if u is None else [self._events[w].id for w in u]

    def round_info(self, event_id: bytes) -> RoundInfo:
        i = self._i(event_id)
        return RoundInfo(self._round[i], self._witness[i], self._fame_of(i),
                         self._rr.get(i), self._cts.get(i), self._pos.get(i))

    def ordered_ids(self) -> list[bytes]:
        return [self._events[i].id for i in self._order]

    def decided_prefix(self) -> list[tuple[bytes, int, int, int]]:
        """``(id, position, round_received, consensus_timestamp)`` in order."""
        return [(self._events[i].id, self._pos[i], self._rr[i], self._cts[i])
                for i in self._order]

    def consensus_order(self) -> list[OrderedTransaction]:
        out = []
        for x in self._order:
            ev = self._events[x]
            famous = self._is_famous(x)
            for k, tx in enumerate(ev.payload):
                out.append(OrderedTransaction(self._pos[x], k, tx, ev.id, self._cts[x], famous))
        return out

    def famous_witnesses_ordered(self, r: int) -> bool:
        """All famous witnesses of round ``r`` hold a consensus position."""
        if r not in self._ufw:
            return False
        famous = [w for w in self._wit[r] if self._fame.get(w)]
        return bool(famous) and all(w in self._pos for w in famous)

    def parents_of(self, event_id: bytes) -> tuple[bytes | None, bytes | None]:
        ev = self.get(event_id)
        return ev.self_parent, ev.other_parent

    def export_graph(self) -> str:
        """One ``EVENT`` line per event in topological order."""
        def opt(v):
            return "-" if v is None else str(v)

        lines = []
        for i, ev in enumerate(self._events):
            lines.append(" ".join([
                "EVENT", ev.id.hex(), str(ev.creator),
                ev.self_parent.hex() if ev.self_parent else "-",
                ev.other_parent.hex() if ev.other_parent else "-",
                str(ev.timestamp), str(self._round[i]),
                "1" if self._witness[i] else "0",
                self._fame_of(i).value,
                opt(self._rr.get(i)), opt(self._cts.get(i)), opt(self._pos.get(i)),
            ]))
        return "\n".join(lines) + ("\n" if lines else "")


def weighted_lower_median(basket: Sequence[tuple[int, int]]) -> int:
    """Lower median of timestamps each repeated ``weight`` times."""
    items = sorted(basket)
    total = sum(w for _, w in items)
    if total <= 0:
        raise DomainError("empty timestamp basket")
    target = (total - 1) // 2
    seen = 0
    for ts, w in items:
        seen += w
        if seen > target:
            return ts
    raise AssertionError("unreachable")


def consistent(p: Hashgraph, q: Hashgraph) -> bool:
    """Every event held by both stores has the same ancestor sub-DAG in each.

    Both stores are closed under ancestry, so it suffices that each common
    event has identical parent edges in both: the ancestor sub-DAGs then
    agree by induction.
    """
    for ev in p.events:
        if ev.id in q:
            other = q.get(ev.id)
            if (ev.self_parent, ev.other_parent) != (other.self_parent, other.other_parent):
                return False
            if ev.creator != other.creator:
                return False
    return True


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low
