"""Seeded discrete-event simulation of agents gossiping hashgraph events.

Every agent keeps its own :class:`~dlt_recovery.hashgraph.Hashgraph` replica.
At each sync timer an agent picks a random peer and pushes everything the
peer lacks; the receiver then records the sync as a new event carrying its
next queued disruption resolutions.  All randomness flows from one
``random.Random(config.seed)`` so a configuration replays exactly.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, TextIO

import numpy as np

from .errors import ConfigurationError, InfiniteStakeError, NoAdmissiblePathError
from .hashgraph import AddressBook, Event, Hashgraph, Transaction, agent_key, consistent
from .scenario import (
    ROLES,
    Disruption,
    ImpactStub,
    RecoveryImpact,
    SimConfig,
    generate_queues,
    role_id,
)
from .stake import PositionWeights, StakeRecord, compute_stake
from .utfm import (
    PseudocountConfig,
    Utfm,
    baum_welch_train,
    sample_corpus,
    standard_model,
    uniform_init,
)

log = logging.getLogger(__name__)

# size of the flight-swap reference data set the role pseudocounts are
# calibrated against; counts are rescaled to the synthetic corpus size
REFERENCE_CORPUS_SIZE = 620_000
TRAINING_SEQUENCES = 200
TRAINING_LENGTH = 12


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@lru_cache(maxsize=64)
def _trained_model(role: str, alphabet: tuple[str, ...], counts: tuple[int, int, int],
                   model_seed: int) -> Utfm:
    seed = _derive_seed("utfm", model_seed, role)
    generator = standard_model(alphabet, np.random.default_rng(seed), concentration=0.5)
    corpus = sample_corpus(generator, TRAINING_SEQUENCES, TRAINING_LENGTH, seed + 1)
    priors = PseudocountConfig(*counts).scaled(
        TRAINING_SEQUENCES * TRAINING_LENGTH / REFERENCE_CORPUS_SIZE)
    start = uniform_init(standard_model(alphabet), seed + 2)
    return baum_welch_train(start, corpus, priors, tol=1e-4, max_iter=25).model


def role_model(role: str, alphabet: Sequence[str], pseudocounts: PseudocountConfig,
               model_seed: int) -> Utfm:
    """The role's UTFM, trained on a synthetic corpus drawn from a role-seeded generator."""
    pc = pseudocounts
    return _trained_model(role, tuple(alphabet), (pc.tactical, pc.operational, pc.strategic),
                          model_seed)


@dataclass
class AgentState:
    role: str
    creator: int
    key: bytes
    store: Hashgraph
    model: Utfm
    pseudocounts: PseudocountConfig
    weights: PositionWeights
    stake: int
    stake_record: StakeRecord | None
    queue: list[Disruption]
    behavior: str | None = None
    head: bytes | None = None
    drained: int = 0
    syncs: int = 0

    @property
    def honest(self) -> bool:
        return self.behavior is None


@dataclass(frozen=True)
class RecoveryPlanEntry:
    consensus_position: int
    famous_witness: bool
    flight_id: int
    role: str
    impact: RecoveryImpact
    stake: int
    consensus_timestamp_ms: int


@dataclass(frozen=True)
class SimReport:
    agents: tuple[str, ...]
    seed: int
    stakes: dict
    events_created: int
    transactions_queued: int
    transactions_ordered: int
    rounds_decided: int
    time_to_first_consensus_ms: int | None
    end_time_ms: int
    quiescent: bool
    sync_counts: dict
    forks_recorded: int
    report_replica: str
    order_digest: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


@dataclass
class SimResult:
    report: SimReport
    agents: dict[str, AgentState]
    transcript: list[str] = field(default_factory=list)

    @property
    def stores(self) -> dict[str, Hashgraph]:
        return {r: a.store for r, a in self.agents.items()}

    @property
    def honest_stores(self) -> dict[str, Hashgraph]:
        return {r: a.store for r, a in self.agents.items() if a.honest}

    @property
    def report_store(self) -> Hashgraph:
        return self.agents[self.report.report_replica].store

    def recovery_plan(self) -> list[RecoveryPlanEntry]:
        stakes = self.report.stakes
        return [
            RecoveryPlanEntry(k, o.famous_witness, o.transaction.flight_id, o.transaction.role,
                              o.transaction.impact, stakes[o.transaction.role],
                              o.consensus_timestamp)
            for k, o in enumerate(self.report_store.consensus_order())
        ]


def _default_criteria(alphabet: Sequence[str]) -> tuple[str, ...]:
    return (alphabet[0],) * TRAINING_LENGTH


def _stake_of(role: str, model: Utfm, criteria: Sequence[str],
              weights: PositionWeights) -> StakeRecord:
    try:
        return compute_stake(role, model, criteria, weights)
    except (NoAdmissiblePathError, InfiniteStakeError) as exc:
        raise ConfigurationError(f"cannot derive a stake for {role}: {exc}") from None


def build_agents(config: SimConfig, weights: PositionWeights = PositionWeights()
                 ) -> dict[str, AgentState]:
    queues = generate_queues(config.queue_sizes, config.alphabet, config.seed)
    agents: dict[str, AgentState] = {}
    for role in config.agents:
        model = role_model(role, config.alphabet, config.pseudocounts[role], config.model_seed)
        queue = queues.get(role, [])
        if config.stakes is not None:
            record, stake = None, config.stakes[role]
        else:
            criteria = queue[0].criteria if queue else _default_criteria(config.alphabet)
            record = _stake_of(role, model, criteria, weights)
            stake = record.stake
        cid = role_id(role)
        agents[role] = AgentState(role, cid, agent_key(config.seed, cid), None, model,
                                  config.pseudocounts[role], weights, stake, record, queue,
                                  config.adversaries.get(role))
    book = AddressBook({a.creator: a.stake for a in agents.values()})
    keys = {a.creator: a.key for a in agents.values()}
    adv = sum(a.stake for a in agents.values() if not a.honest)
    if 3 * adv >= book.total and adv:
        raise ConfigurationError(
            f"adversarial stake {adv}/{book.total} is not below one third of the total")
    for a in agents.values():
        a.store = Hashgraph(book, keys)
    return agents


class _Simulation:
    def __init__(self, config: SimConfig, transcript: TextIO | None):
        self.config = config
        self.rng = random.Random(config.seed)
        self.agents = build_agents(config)
        self.order = list(config.agents)
        self.impacts = ImpactStub(config.seed)
        self.transcript = transcript
        self.lines: list[str] = []
        self.heap: list = []
        self.seq = 0
        self.cursor: dict[tuple[str, str], int] = {}
        self.events_created = 0
        self.first_consensus: int | None = None
        self.total_tx = sum(len(a.queue) for a in self.agents.values())

    def push(self, t: int, kind: str, *data) -> None:
        heapq.heappush(self.heap, (t, self.seq, kind, data))
        self.seq += 1

    def drain(self, a: AgentState) -> tuple[Transaction, ...]:
        batch = a.queue[a.drained:a.drained + self.config.tx_per_event]
        a.drained += len(batch)
        out = []
        for d in batch:
            ice = _stake_of(a.role, a.model, d.criteria, a.weights).ice
            out.append(Transaction(d.role, d.flight_id, d.queue_position, ice,
                                   self.impacts.predict(d)))
        return tuple(out)

    def create(self, a: AgentState, other_parent: bytes | None, t: int) -> bytes:
        ev = Event.create(a.key, a.creator, a.head, other_parent, t, self.drain(a))
        a.store.insert(ev)
        self.events_created += 1
        if a.behavior == "fork" and a.head is not None:
            twin = Event.create(a.key, a.creator, a.head, other_parent, t + 1, ())
            a.store.insert(twin)
            self.events_created += 1
        a.head = ev.id
        return ev.id

    def log_sync(self, t, src, dst, n, new_id) -> None:
        # creator ids keep every field a single token; role names contain spaces
        src, dst = self.agents[src].creator, self.agents[dst].creator
        line = f"SYNC {t} {src} {dst} {n} {new_id.hex()}"
        self.lines.append(line)
        if self.transcript is not None:
            self.transcript.write(line + "\n")

    def on_timer(self, t: int, role: str) -> None:
        a = self.agents[role]
        self.push(t + self.config.sync_interval_ms, "timer", role)
        if a.behavior == "withhold":
            return
        peer = self.rng.choice([r for r in self.order if r != role])
        latency = self.config.latency.draw(self.rng)
        a.syncs += 1
        self.push(t + latency, "deliver", role, peer, len(a.store), a.head)

    def on_deliver(self, t: int, src: str, dst: str, k: int, head: bytes) -> None:
        sender, receiver = self.agents[src], self.agents[dst]
        start = self.cursor.get((src, dst), 0)
        missing = [ev for ev in sender.store.events[start:k] if ev.id not in receiver.store]
        receiver.store.insert_many(missing)
        self.cursor[(src, dst)] = max(start, k)
        new_id = self.create(receiver, head, t)
        receiver.store.update()
        self.log_sync(t, src, dst, len(missing), new_id)
        if self.first_consensus is None and receiver.honest \
                and receiver.store.famous_witnesses_ordered(1):
            self.first_consensus = t

    def quiescent(self) -> bool:
        if self.first_consensus is None:
            return False
        if any(a.drained < len(a.queue) for a in self.agents.values()):
            return False
        return all(a.store.transactions_ordered >= self.total_tx
                   for a in self.agents.values() if a.honest)

    def run(self, stop_at_first_consensus: bool, max_events: int | None) -> SimResult:
        for role in self.order:
            self.create(self.agents[role], None, 0)
        for role in self.order:
            self.push(self.rng.randint(1, self.config.sync_interval_ms), "timer", role)
        t = 0
        done = False
        while self.heap and not done:
            t, _, kind, data = heapq.heappop(self.heap)
            if t > self.config.max_time_ms:
                t = self.config.max_time_ms
                break
            if kind == "timer":
                self.on_timer(t, *data)
                continue
            self.on_deliver(t, *data)
            if stop_at_first_consensus and self.first_consensus is not None:
                done = True
            elif max_events is not None and self.events_created >= max_events:
                done = True
            elif self.quiescent():
                done = True
        return SimResult(self.report(t), self.agents, self.lines)

    def report(self, end: int) -> SimReport:
        honest = [a for a in self.agents.values() if a.honest]
        best = max(honest, key=lambda a: len(a.store.ordered_ids()))
        h = hashlib.sha256()
        for eid in best.store.ordered_ids():
            h.update(eid)
        return SimReport(
            agents=tuple(self.order),
            seed=self.config.seed,
            stakes={a.role: a.stake for a in self.agents.values()},
            events_created=self.events_created,
            transactions_queued=self.total_tx,
            transactions_ordered=best.store.transactions_ordered,
            rounds_decided=best.store.decided_round,
            time_to_first_consensus_ms=self.first_consensus,
            end_time_ms=end,
            quiescent=self.quiescent(),
            sync_counts={a.role: a.syncs for a in self.agents.values()},
            forks_recorded=len(best.store.forks),
            report_replica=best.role,
            order_digest=h.hexdigest(),
        )


def run(config: SimConfig, transcript: TextIO | None = None, *,
        stop_at_first_consensus: bool = False, max_events: int | None = None) -> SimResult:
    """Simulate until every queued resolution is ordered on every honest replica.

    The run also stops at ``config.max_time_ms`` of simulated time, at the
    first consensus when ``stop_at_first_consensus`` is set, or once
    ``max_events`` events have been created.
    """
    return _Simulation(config, transcript).run(stop_at_first_consensus, max_events)


@dataclass(frozen=True)
class Disagreement:
    first: str
    second: str
    detail: str


def check_agreement(stores: dict[str, Hashgraph]) -> list[Disagreement]:
    """Pairwise audit: consistent replicas must share their decided prefix."""
    out = []
    names = list(stores)
    for i, p in enumerate(names):
        for q in names[i + 1:]:
            a, b = stores[p], stores[q]
            if not consistent(a, b):
                out.append(Disagreement(p, q, "inconsistent stores"))
                continue
            pa, pb = a.decided_prefix(), b.decided_prefix()
            n = min(len(pa), len(pb))
            if pa[:n] != pb[:n]:
                k = next(j for j in range(n) if pa[j] != pb[j])
                out.append(Disagreement(p, q, f"decided prefixes differ at position {k}"))
    return out


@dataclass(frozen=True)
class ScalingPoint:
    n_roles: int
    time_to_first_consensus_ms: int | None


def membership(base: SimConfig, n: int) -> tuple[str, ...]:
    """The first ``n`` of the base agents in alphabetical role order."""
    ordered = sorted(base.agents, key=ROLES.index)
    if n > len(ordered):
        raise ConfigurationError(f"base scenario has only {len(ordered)} agents, {n} requested")
    return tuple(ordered[:n])


def scaling_experiment(base: SimConfig, roles: Sequence[int] = range(4, 12),
                       runner: Callable[..., SimResult] = run) -> list[ScalingPoint]:
    points = []
    for n in roles:
        cfg = base.replace(agents=membership(base, n))
        res = runner(cfg, stop_at_first_consensus=True)
        points.append(ScalingPoint(n, res.report.time_to_first_consensus_ms))
        log.info("%d roles: first consensus at %s ms", n, points[-1].time_to_first_consensus_ms)
    return points


def choose_adversaries(config: SimConfig, stake_fraction: float,
                       stakes: dict[str, int]) -> list[str]:
    """Agents, taken from the end of the membership, whose stake fits the fraction."""
    if not 0 < stake_fraction < 1 / 3:
        raise ConfigurationError(
            f"adversarial stake fraction {stake_fraction} is outside the fault model (< 1/3)")
    total = sum(stakes.values())
    chosen, acc = [], 0
    for role in reversed(config.agents):
        if (acc + stakes[role]) / total > stake_fraction:
            break
        chosen.append(role)
        acc += stakes[role]
    if not chosen:
        raise ConfigurationError(
            f"no agent's stake fits within an adversarial fraction of {stake_fraction}")
    return chosen


def inject_adversary(config: SimConfig, behavior: str, stake_fraction: float,
                     **run_kwargs) -> SimResult:
    """Run ``config`` with agents behaving as ``behavior`` up to ``stake_fraction`` of stake."""
    if config.stakes is not None:
        stakes = dict(config.stakes)
    else:
        stakes = {r: a.stake for r, a in build_agents(config).items()}
    chosen = choose_adversaries(config, stake_fraction, stakes)
    cfg = config.replace(stakes=stakes, adversaries={r: behavior for r in chosen})
    return run(cfg, **run_kwargs)
