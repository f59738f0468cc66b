import dataclasses
import random

import pytest

from dlt_recovery.errors import (
    DomainError,
    InvalidEventError,
    OrphanEventError,
    UnknownEventError,
)
from dlt_recovery.hashgraph import (
    AddressBook,
    Event,
    Fame,
    Hashgraph,
    Transaction,
    agent_key,
    consistent,
    weighted_lower_median,
)
from dlt_recovery.scenario import RecoveryImpact

from oracles import BruteHashgraph, random_dag


def fixture_dag(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 6)
    m = rng.randint(n, 50)
    stakes = {c: rng.randint(1, 5) for c in range(n)} if seed % 2 else None
    forkers = (0,) if seed % 3 == 0 and n > 1 else ()
    return random_dag(n, m, seed, stakes, forkers)


def compare_with_oracle(dag):
    hg = dag.store()
    hg.update()
    bh = BruteHashgraph(dag)
    ids = bh.order
    for x in ids:
        assert hg.round_created(x) == bh.round(x)
        assert hg.is_witness(x) == bh.is_witness(x)
        for y in ids:
            assert hg.sees(x, y) == bh.sees(x, y)
            assert hg.strongly_sees(x, y) == bh.strongly_sees(x, y)
    fame = bh.fame()
    for x in ids:
        if bh.is_witness(x):
            want = Fame.UNDECIDED if x not in fame else (
                Fame.FAMOUS if fame[x] else Fame.NOT_FAMOUS)
            assert hg.fame(x) == want
    cons, order = bh.consensus()
    assert hg.ordered_ids() == order
    for x, (r, ts) in cons.items():
        assert (hg.round_received(x), hg.consensus_timestamp(x)) == (r, ts)
    return hg


class Chain:
    """Hand-built DAG; comments call agents 0..3 a, b, c, d."""

    def __init__(self, n=4, stakes=None):
        self.keys = {c: agent_key(0, c) for c in range(n)}
        self.stakes = stakes or {c: 1 for c in range(n)}
        self.events = []
        self.head = {}
        self.t = 0
        for c in range(n):
            self.add(c, None)

    def add(self, creator, other):
        """New event by ``creator`` on its head, syncing from ``other``'s head."""
        self.t += 1
        sp = self.head.get(creator)
        op = self.head[other].id if other is not None else None
        ev = Event.create(self.keys[creator], creator, sp.id if sp else None, op, self.t)
        self.events.append(ev)
        self.head[creator] = ev
        return ev

    def store(self):
        hg = Hashgraph(AddressBook(self.stakes), self.keys)
        hg.insert_many(self.events)
        return hg


# -- oracle equivalence ----------------------------------------------------


@pytest.mark.parametrize("seed", range(120))
def test_matches_definition_oracle(seed):
    compare_with_oracle(fixture_dag(seed))


def test_oracle_fixtures_exercise_ordering():
    ordered = sum(bool(BruteHashgraph(fixture_dag(s)).consensus()[1]) for s in range(60))
    assert ordered >= 10


# -- insertion -------------------------------------------------------------


def test_genesis_accepted_and_duplicates_ignored():
    ch = Chain()
    hg = ch.store()
    assert len(hg) == 4
    assert hg.insert(ch.events[0]) is False
    assert len(hg) == 4


def test_orphan_rejected():
    ch = Chain()
    ch.add(1, 0)
    hg = Hashgraph(AddressBook(ch.stakes), ch.keys)
    hg.insert(ch.events[1])
    with pytest.raises(OrphanEventError):
        hg.insert(ch.events[4])


def test_tampered_event_rejected():
    ch = Chain()
    ev = ch.add(1, 0)
    hg = Hashgraph(AddressBook(ch.stakes), ch.keys)
    hg.insert_many(ch.events[:4])
    with pytest.raises(InvalidEventError):
        hg.insert(dataclasses.replace(ev, timestamp=ev.timestamp + 1))
    with pytest.raises(InvalidEventError):
        hg.insert(dataclasses.replace(ev, signature=bytes(32)))
    forged = Event.create(agent_key(99, 1), 1, ev.self_parent, ev.other_parent, 5)
    with pytest.raises(InvalidEventError):
        hg.insert(forged)


def test_parent_creator_rules():
    ch = Chain()
    hg = ch.store()
    a0, b0 = ch.events[0], ch.events[1]
    with pytest.raises(InvalidEventError):
        hg.insert(Event.create(ch.keys[0], 0, b0.id, None, 9))
    with pytest.raises(InvalidEventError):
        hg.insert(Event.create(ch.keys[0], 0, a0.id, a0.id, 9))
    with pytest.raises(InvalidEventError):
        hg.insert(Event.create(ch.keys[0], 0, None, b0.id, 9))
    with pytest.raises(InvalidEventError):
        hg.insert(Event.create(agent_key(0, 7), 7, None, None, 9))


def test_fork_recorded():
    ch = Chain()
    a0 = ch.events[0]
    e1 = Event.create(ch.keys[0], 0, a0.id, ch.events[1].id, 10)
    e2 = Event.create(ch.keys[0], 0, a0.id, ch.events[2].id, 11)
    hg = ch.store()
    hg.insert_many([e1, e2])
    assert hg.forks == [(e1.id, e2.id)]
    assert hg.forks_by(0) == [(e1.id, e2.id)]
    assert hg.forks_by(1) == []
    merge = Event.create(ch.keys[3], 3, ch.events[3].id, e2.id, 12)
    tip = Event.create(ch.keys[2], 2, ch.events[2].id, e1.id, 13)
    join = Event.create(ch.keys[3], 3, merge.id, tip.id, 14)
    hg.insert_many([merge, tip, join])
    assert hg.sees(merge.id, a0.id)
    assert not hg.sees(join.id, a0.id)
    assert hg.sees(join.id, ch.events[1].id)


def test_unknown_event():
    hg = Chain().store()
    with pytest.raises(UnknownEventError):
        hg.round_created(b"\x00" * 32)


def test_address_book_rejects_bad_stakes():
    with pytest.raises(DomainError):
        AddressBook({})
    with pytest.raises(DomainError):
        AddressBook({0: 0})


# -- ancestry and rounds ---------------------------------------------------


def test_ancestry_examples():
    ch = Chain()
    a0, b0 = ch.events[0], ch.events[1]
    b1 = ch.add(1, 0)
    c1 = ch.add(2, 1)
    hg = ch.store()
    assert hg.is_ancestor(a0.id, c1.id)
    assert hg.is_ancestor(c1.id, c1.id)
    assert not hg.is_ancestor(c1.id, a0.id)
    assert hg.is_self_ancestor(b0.id, b1.id)
    assert not hg.is_self_ancestor(a0.id, b1.id)


def test_two_of_four_is_not_strong():
    ch = Chain()
    b1 = ch.add(1, 0)
    hg = ch.store()
    assert hg.sees(b1.id, ch.events[0].id)
    assert not hg.strongly_sees(b1.id, ch.events[0].id)


def test_round_advances_on_supermajority():
    ch = Chain()
    a0, b0, c0, d0 = ch.events
    ch.add(1, 0)
    ch.add(2, 1)
    ch.add(3, 2)
    a1 = ch.add(0, 3)
    hg = ch.store()
    for g in (a0, b0, c0, d0):
        assert hg.round_created(g.id) == 1 and hg.is_witness(g.id)
    assert [hg.strongly_sees(a1.id, g.id) for g in (a0, b0, c0, d0)] == [True, True, True, False]
    assert hg.round_created(a1.id) == 2
    assert hg.is_witness(a1.id)
    assert hg.witnesses(2) == [a1.id]
    for e in ch.events[4:7]:
        assert hg.round_created(e.id) == 1 and not hg.is_witness(e.id)


@pytest.mark.parametrize("stakes, expected", [
    (None, 1),
    ({0: 3, 1: 3, 2: 1, 3: 1}, 2),
])
def test_round_stake_weighted(stakes, expected):
    # only a and b talk; that is a supermajority once they hold 6 of 8
    ch = Chain(stakes=stakes)
    ch.add(1, 0)
    a1 = ch.add(0, 1)
    assert ch.store().round_created(a1.id) == expected


# -- fame and order --------------------------------------------------------


def test_lower_median_examples():
    assert weighted_lower_median([(10, 1), (20, 2), (30, 1)]) == 20
    assert weighted_lower_median([(10, 1), (20, 1)]) == 10
    assert weighted_lower_median([(30, 5), (10, 1), (20, 1)]) == 30
    with pytest.raises(DomainError):
        weighted_lower_median([])


def test_single_agent_ledger_orders_everything_but_the_tail():
    dag = random_dag(1, 12, seed=5)
    hg = dag.store()
    hg.update()
    ids = [e.id for e in dag.events]
    assert [hg.round_created(x) for x in ids] == list(range(1, 13))
    order = hg.ordered_ids()
    assert order == ids[:len(order)]
    assert len(order) >= 9
    assert all(hg.consensus_timestamp(x) == dag.events[k].timestamp for k, x in enumerate(order))


def test_insertion_order_does_not_change_consensus():
    for seed in range(20):
        dag = random_dag(5, 60, seed, forkers=(0,) if seed % 2 else ())
        ref = dag.store()
        ref.update()
        # a different valid topological order
        rng = random.Random(seed)
        pending = list(dag.events)
        have, shuffled = set(), []
        while pending:
            ready = [e for e in pending
                     if all(p is None or p in have for p in (e.self_parent, e.other_parent))]
            e = rng.choice(ready)
            pending.remove(e)
            have.add(e.id)
            shuffled.append(e)
        other = dag.store(shuffled)
        other.update()
        assert other.decided_prefix() == ref.decided_prefix()


def test_incremental_updates_match_bulk():
    dag = random_dag(4, 200, seed=8, stakes={0: 3, 1: 1, 2: 2, 3: 1})
    bulk = dag.store()
    bulk.update()
    inc = Hashgraph(dag.book(), dag.keys)
    seen = []
    for ev in dag.events:
        inc.insert(ev)
        inc.update()
        prefix = inc.decided_prefix()
        assert prefix[:len(seen)] == seen
        seen = prefix
    assert seen == bulk.decided_prefix()
    assert len(seen) > 100


def test_consensus_order_lists_transactions():
    impact = RecoveryImpact(1, 2, 3, 4)
    txs = [Transaction("NAS", k, k, 1.5, impact) for k in range(2)]
    dag = random_dag(3, 60, seed=2, payload=txs)
    hg = dag.store()
    hg.update()
    rows = hg.consensus_order()
    assert len(rows) == 2 * len(hg.ordered_ids()) == hg.transactions_ordered
    assert [r.index for r in rows[:4]] == [0, 1, 0, 1]
    assert rows[0].transaction == txs[0]
    positions = [r.position for r in rows]
    assert positions == sorted(positions)


def test_consistent_stores():
    dag = random_dag(4, 40, seed=3)
    assert consistent(dag.store(), dag.store(dag.events[:25]))
    liar = Hashgraph(dag.book(), dag.keys, verify=False)
    liar.insert_many(dag.events[:4])
    victim = dag.events[10]
    # same id, different parents: only possible without verification
    fake = dataclasses.replace(victim, other_parent=None, self_parent=None)
    liar.insert(fake)
    assert not consistent(dag.store(), liar)


def test_export_format():
    dag = random_dag(4, 80, seed=1)
    hg = dag.store()
    hg.update()
    lines = hg.export_graph().splitlines()
    assert len(lines) == 80
    for ev, line in zip(dag.events, lines):
        f = line.split()
        assert len(f) == 12 and f[0] == "EVENT"
        assert f[1] == ev.id.hex()
        assert int(f[6]) == hg.round_created(ev.id)
        assert f[8] in "FNU"
        pos = hg.consensus_position(ev.id)
        assert f[11] == ("-" if pos is None else str(pos))
