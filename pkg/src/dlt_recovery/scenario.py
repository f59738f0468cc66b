"""Scenario data: functional roles, disruption queues, the recovery-impact
stub, the passenger cost model and the scenario file format."""

from __future__ import annotations

import configparser
import hashlib
import logging
import random
import re
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from .errors import ConfigurationError, ScenarioError
from .utfm import DEFAULT_ALPHABET, Phase, PseudocountConfig

log = logging.getLogger(__name__)

ROLES = (
    "Customer Hold",
    "Dispatch CSC",
    "Flight Operations",
    "Fuel Management",
    "Ground Operations",
    "Inflight",
    "Maintenance",
    "NAS",
    "Security",
    "Technology",
    "Weather",
)

# tactical, operational, strategic prior counts per role
ROLE_PSEUDOCOUNTS = {
    "Customer Hold": (1906, 11289, 3222),
    "Dispatch CSC": (1988, 3160, 4792),
    "Flight Operations": (6365, 10580, 2682),
    "Fuel Management": (603, 1180, 228),
    "Ground Operations": (8146, 48827, 5748),
    "Inflight": (4751, 25423, 3505),
    "Maintenance": (6985, 4901, 4648),
    "NAS": (2221, 2774, 1184),
    "Security": (850, 955, 145),
    "Technology": (869, 2206, 397),
    "Weather": (1483, 597, 1065),
}
# informational only; the counts behind these are not published
ROLE_INHERENT_LIKELIHOOD = {
    "Customer Hold": (0.041, 0.243, 0.069),
    "Dispatch CSC": (0.115, 0.183, 0.277),
    "Flight Operations": (0.177, 0.294, 0.074),
    "Fuel Management": (0.126, 0.246, 0.048),
    "Ground Operations": (0.049, 0.293, 0.034),
    "Inflight": (0.060, 0.323, 0.045),
    "Maintenance": (0.211, 0.148, 0.140),
    "NAS": (0.099, 0.124, 0.053),
    "Security": (0.291, 0.326, 0.050),
    "Technology": (0.098, 0.249, 0.045),
    "Weather": (0.118, 0.048, 0.085),
}

ROLE_QUEUE_SIZES = {
    "Customer Hold": 469,
    "Dispatch CSC": 175,
    "Flight Operations": 364,
    "Fuel Management": 49,
    "Ground Operations": 1684,
    "Inflight": 795,
    "Maintenance": 336,
    "NAS": 227,
    "Security": 30,
    "Technology": 90,
    "Weather": 127,
}
# The per-role rows above add up to 4346.
STATED_TOTAL_DISRUPTIONS = 4364

# position, famous witness, flight id, role, tactical, turnaround, block, strategic
REFERENCE_PLAN_ROWS = (
    (0, False, 1536, "Fuel Management", 61, 18, 126, 26),
    (1, False, 3222, "Dispatch CSC", 41, 22, 93, 8),
    (2, True, 2201, "Fuel Management", 7, 17, 247, 33),
    (3, True, 11670, "Flight Operations", 35, 1, 106, -14),
    (4, True, 12388, "Dispatch CSC", 17, 8, 294, 39),
    (5, False, 15693, "Dispatch CSC", 22, 1, 106, 6),
    (6, False, 34464, "Flight Operations", 55, 10, 96, 6),
    (7, False, 15505, "Dispatch CSC", 0, 3, 287, 40),
    (8, True, 13753, "Ground Operations", -20, 41, 339, 38),
    (9, False, 5905, "Dispatch CSC", 51, 24, 103, 8),
)


def role_id(role: str) -> int:
    try:
        return ROLES.index(role)
    except ValueError:
        raise ScenarioError(f"unknown functional role {role!r}") from None


def default_pseudocounts(role: str) -> PseudocountConfig:
    return PseudocountConfig(*ROLE_PSEUDOCOUNTS[role])


@dataclass(frozen=True)
class RecoveryImpact:
    """Minutes; negative delays mean earlier than planned."""

    tactical_delay_min: int
    turnaround_min: int
    block_time_min: int
    strategic_delay_min: int

    def __post_init__(self):
        if self.turnaround_min < 0 or self.block_time_min < 0:
            raise ScenarioError("turnaround and block time cannot be negative")


@dataclass(frozen=True)
class Disruption:
    flight_id: int
    role: str
    tactical: tuple[str, ...]
    operational: tuple[str, ...]
    strategic: tuple[str, ...]
    queue_position: int

    @property
    def criteria(self) -> tuple[str, ...]:
        return self.tactical + self.operational + self.strategic

    def criteria_for(self, phase: Phase) -> tuple[str, ...]:
        return getattr(self, phase.value)


@dataclass(frozen=True)
class CostModel:
    passenger_value_per_hour: float = 47.0

    def __post_init__(self):
        if not self.passenger_value_per_hour > 0:
            raise ScenarioError("passenger value per hour must be positive")


def passenger_cost(plan: Sequence[RecoveryImpact], model: CostModel = CostModel()) -> float:
    """Value of the total tactical and strategic delay for a passenger on every flight."""
    if not plan:
        raise ScenarioError("cannot cost an empty recovery plan")
    minutes = sum(i.tactical_delay_min + i.strategic_delay_min for i in plan)
    return minutes / 60.0 * model.passenger_value_per_hour


def reference_plan_impacts() -> list[RecoveryImpact]:
    return [RecoveryImpact(*row[4:]) for row in REFERENCE_PLAN_ROWS]


class ImpactModel(Protocol):
    def predict(self, d: Disruption) -> RecoveryImpact: ...


@dataclass(frozen=True)
class ImpactStub:
    """Deterministic stand-in for the recovery-impact predictor.

    Each field is drawn uniformly from its inclusive range using a generator
    seeded by ``(seed, role, flight_id)``.
    """

    seed: int = 0
    tactical: tuple[int, int] = (-20, 61)
    turnaround: tuple[int, int] = (1, 41)
    block_time: tuple[int, int] = (93, 339)
    strategic: tuple[int, int] = (-14, 40)

    def predict(self, d: Disruption) -> RecoveryImpact:
        digest = hashlib.sha256(f"{self.seed}|{d.role}|{d.flight_id}".encode()).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        return RecoveryImpact(
            rng.randint(*self.tactical),
            rng.randint(*self.turnaround),
            rng.randint(*self.block_time),
            rng.randint(*self.strategic),
        )


def predict_impact(params: ImpactModel, d: Disruption) -> RecoveryImpact:
    return params.predict(d)


def generate_queues(sizes: Mapping[str, int], alphabet: Sequence[str] = DEFAULT_ALPHABET,
                    seed: int = 0, criteria_length: int = 4) -> dict[str, list[Disruption]]:
    """Synthetic disruptions per role with scenario-unique flight ids."""
    for role, n in sizes.items():
        role_id(role)
        if n < 0:
            raise ScenarioError(f"queue size of {role} is negative")
    total = sum(sizes.values())
    if dict(sizes) == ROLE_QUEUE_SIZES:
        log.info("per-role queue sizes total %d; the stated scenario total is %d",
                 total, STATED_TOTAL_DISRUPTIONS)
    rng = random.Random(seed)
    ids = rng.sample(range(1, max(40000, 2 * total)), total)
    out: dict[str, list[Disruption]] = {}
    k = 0
    for role in sorted(sizes, key=ROLES.index):
        queue = []
        for pos in range(1, sizes[role] + 1):
            parts = [tuple(rng.choice(alphabet) for _ in range(criteria_length)) for _ in range(3)]
            queue.append(Disruption(ids[k], role, *parts, queue_position=pos))
            k += 1
        out[role] = queue
    return out


# ---------------------------------------------------------------------------
# Simulation configuration

BEHAVIORS = ("fork", "withhold")


@dataclass(frozen=True)
class LatencyModel:
    kind: str = "uniform"
    low_ms: int = 10
    high_ms: int = 50

    def __post_init__(self):
        if self.kind not in ("constant", "uniform"):
            raise ConfigurationError(f"unknown latency model {self.kind!r}")
        if self.low_ms < 0 or self.high_ms < self.low_ms:
            raise ConfigurationError("latency bounds must satisfy 0 <= low <= high")
        if self.kind == "constant" and self.high_ms != self.low_ms:
            object.__setattr__(self, "high_ms", self.low_ms)

    def draw(self, rng: random.Random) -> int:
        if self.kind == "constant":
            return self.low_ms
        return rng.randint(self.low_ms, self.high_ms)


@dataclass(frozen=True)
class SimConfig:
    agents: tuple[str, ...]
    seed: int = 0
    latency: LatencyModel = LatencyModel()
    sync_interval_ms: int = 100
    max_time_ms: int = 600_000
    queue_sizes: Mapping[str, int] = field(default_factory=dict)
    tx_per_event: int = 5
    alphabet: tuple[str, ...] = DEFAULT_ALPHABET
    pseudocounts: Mapping[str, PseudocountConfig] = field(default_factory=dict)
    model_seed: int = 2016
    stakes: Mapping[str, int] | None = None
    adversaries: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        sizes = {r: ROLE_QUEUE_SIZES[r] for r in self.agents if r in ROLE_QUEUE_SIZES}
        sizes.update(self.queue_sizes)
        object.__setattr__(self, "queue_sizes", sizes)
        pcs = {r: default_pseudocounts(r) for r in self.agents if r in ROLE_PSEUDOCOUNTS}
        pcs.update(self.pseudocounts)
        object.__setattr__(self, "pseudocounts", pcs)
        if self.stakes is not None:
            object.__setattr__(self, "stakes", dict(self.stakes))
        object.__setattr__(self, "adversaries", dict(self.adversaries))
        self.validate()

    def validate(self) -> None:
        if len(self.agents) < 2:
            raise ConfigurationError("at least two agents are required")
        if len(set(self.agents)) != len(self.agents):
            raise ConfigurationError("duplicate agent")
        for r in self.agents:
            if r not in ROLES:
                raise ConfigurationError(f"unknown functional role {r!r}")
        for r, n in self.queue_sizes.items():
            if r not in self.agents:
                raise ConfigurationError(f"queue given for non-member {r!r}")
            if n < 0:
                raise ConfigurationError(f"negative queue size for {r!r}")
        if self.sync_interval_ms < 1 or self.max_time_ms < 0 or self.tx_per_event < 1:
            raise ConfigurationError("sync interval and tx_per_event must be >= 1")
        if not self.alphabet or len(set(self.alphabet)) != len(self.alphabet):
            raise ConfigurationError("alphabet must be non-empty and unique")
        if self.stakes is not None:
            if set(self.stakes) != set(self.agents):
                raise ConfigurationError("stakes must name exactly the agents")
            if any(not isinstance(s, int) or s < 1 for s in self.stakes.values()):
                raise ConfigurationError("stakes must be positive integers")
        for r, b in self.adversaries.items():
            if r not in self.agents:
                raise ConfigurationError(f"adversary {r!r} is not an agent")
            if b not in BEHAVIORS:
                raise ConfigurationError(f"unknown adversary behaviour {b!r}")

    def replace(self, **changes) -> "SimConfig":
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if "agents" in changes:
            agents = set(changes["agents"])
            for key in ("queue_sizes", "pseudocounts"):
                if key not in changes:
                    fields[key] = {r: v for r, v in fields[key].items() if r in agents}
            if "stakes" not in changes and fields["stakes"] is not None:
                fields["stakes"] = {r: v for r, v in fields["stakes"].items() if r in agents}
            if "adversaries" not in changes:
                fields["adversaries"] = {r: v for r, v in fields["adversaries"].items()
                                         if r in agents}
        fields.update(changes)
        return SimConfig(**fields)


@dataclass(frozen=True)
class Scenario:
    config: SimConfig
    cost: CostModel = CostModel()

    @property
    def alphabet(self) -> tuple[str, ...]:
        return self.config.alphabet

    @property
    def pseudocounts(self) -> Mapping[str, PseudocountConfig]:
        return self.config.pseudocounts

    def queues(self) -> dict[str, list[Disruption]]:
        return generate_queues(self.config.queue_sizes, self.alphabet, self.config.seed)


# ---------------------------------------------------------------------------
# Scenario file format

_SIM_KEYS = {
    "seed": int, "model_seed": int, "latency_model": str, "latency_min_ms": int,
    "latency_max_ms": int, "sync_interval_ms": int, "max_time_ms": int, "tx_per_event": int,
}
_SECTIONS = ("agents", "queues", "pseudocounts", "alphabet", "sim", "cost", "stakes", "adversaries")


def _line_of(text: str, section: str, key: str | None = None) -> int:
    current = None
    for n, raw in enumerate(text.splitlines(), 1):
        ln = re.split(r"\s#", raw, maxsplit=1)[0].strip()
        m = re.fullmatch(r"\[(.+)\]", ln)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", ln, maxsplit=1)[0].strip()
            if k == key:
                return n
    return 0


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from None

    def err(section, key, msg):
        n = _line_of(text, section, key)
        where = f"line {n}: " if n else ""
        field_ = f"[{section}]" + (f" {key}" if key else "")
        return ScenarioError(f"{where}{field_}: {msg}")

    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise err(sec, None, "unknown section")

    def as_int(section, key, value):
        try:
            return int(value.strip())
        except ValueError:
            raise err(section, key, f"expected a decimal integer, got {value!r}") from None

    def check_role(section, key, role):
        if role not in ROLES:
            raise err(section, key, f"unknown functional role {role!r}")

    if not cp.has_section("agents"):
        raise ScenarioError("missing [agents] section")
    agent_keys = list(cp["agents"])
    if agent_keys != ["roles"]:
        bad = [k for k in agent_keys if k != "roles"]
        raise err("agents", bad[0] if bad else None,
                  "unknown key" if bad else "missing 'roles' list")
    agents = _split_list(cp["agents"]["roles"])
    for r in agents:
        check_role("agents", "roles", r)

    queues = {}
    if cp.has_section("queues"):
        for role, v in cp["queues"].items():
            check_role("queues", role, role)
            queues[role] = as_int("queues", role, v)

    pcs: dict[str, dict[str, int]] = {}
    if cp.has_section("pseudocounts"):
        for key, v in cp["pseudocounts"].items():
            role, _, phase = key.rpartition(".")
            check_role("pseudocounts", key, role)
            if phase not in ("tactical", "operational", "strategic"):
                raise err("pseudocounts", key, f"unknown phase {phase!r}")
            pcs.setdefault(role, {})[phase] = as_int("pseudocounts", key, v)
    pseudocounts = {}
    for role, counts in pcs.items():
        base = ROLE_PSEUDOCOUNTS.get(role, (0, 0, 0))
        pseudocounts[role] = PseudocountConfig(
            counts.get("tactical", base[0]), counts.get("operational", base[1]),
            counts.get("strategic", base[2]))

    alphabet = DEFAULT_ALPHABET
    if cp.has_section("alphabet"):
        for key in cp["alphabet"]:
            if key != "symbols":
                raise err("alphabet", key, "unknown key")
        if "symbols" in cp["alphabet"]:
            alphabet = tuple(_split_list(cp["alphabet"]["symbols"]))

    sim: dict = {}
    if cp.has_section("sim"):
        for key, v in cp["sim"].items():
            if key not in _SIM_KEYS:
                raise err("sim", key, "unknown key")
            sim[key] = v.strip() if _SIM_KEYS[key] is str else as_int("sim", key, v)

    rate = 47.0
    if cp.has_section("cost"):
        for key, v in cp["cost"].items():
            if key != "rate":
                raise err("cost", key, "unknown key")
            try:
                rate = float(v)
            except ValueError:
                raise err("cost", key, f"expected a number, got {v!r}") from None

    stakes = None
    if cp.has_section("stakes"):
        stakes = {}
        for role, v in cp["stakes"].items():
            check_role("stakes", role, role)
            stakes[role] = as_int("stakes", role, v)

    adversaries = {}
    if cp.has_section("adversaries"):
        for role, v in cp["adversaries"].items():
            check_role("adversaries", role, role)
            adversaries[role] = v.strip()

    try:
        latency = LatencyModel(
            sim.get("latency_model", "uniform"),
            sim.get("latency_min_ms", 10),
            sim.get("latency_max_ms", sim.get("latency_min_ms", 10)
                    if sim.get("latency_model") == "constant" else 50),
        )
        config = SimConfig(
            agents=tuple(agents),
            seed=sim.get("seed", 0),
            latency=latency,
            sync_interval_ms=sim.get("sync_interval_ms", 100),
            max_time_ms=sim.get("max_time_ms", 600_000),
            queue_sizes=queues,
            tx_per_event=sim.get("tx_per_event", 5),
            alphabet=alphabet,
            pseudocounts=pseudocounts,
            model_seed=sim.get("model_seed", 2016),
            stakes=stakes,
            adversaries=adversaries,
        )
        return Scenario(config, CostModel(rate))
    except (ConfigurationError, ScenarioError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from None


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text)


def write_scenario(scenario: Scenario) -> str:
    c = scenario.config
    out = ["[agents]", "roles = " + ", ".join(c.agents), "", "[queues]"]
    out += [f"{r} = {n}" for r, n in c.queue_sizes.items()]
    out += ["", "[pseudocounts]"]
    for r, pc in c.pseudocounts.items():
        out += [f"{r}.tactical = {pc.tactical}", f"{r}.operational = {pc.operational}",
                f"{r}.strategic = {pc.strategic}"]
    out += ["", "[alphabet]", "symbols = " + ", ".join(c.alphabet), "", "[sim]",
            f"seed = {c.seed}", f"model_seed = {c.model_seed}",
            f"latency_model = {c.latency.kind}", f"latency_min_ms = {c.latency.low_ms}",
            f"latency_max_ms = {c.latency.high_ms}", f"sync_interval_ms = {c.sync_interval_ms}",
            f"max_time_ms = {c.max_time_ms}", f"tx_per_event = {c.tx_per_event}",
            "", "[cost]", f"rate = {scenario.cost.passenger_value_per_hour!r}"]
    if c.stakes is not None:
        out += ["", "[stakes]"] + [f"{r} = {s}" for r, s in c.stakes.items()]
    if c.adversaries:
        out += ["", "[adversaries]"] + [f"{r} = {b}" for r, b in c.adversaries.items()]
    return "\n".join(out) + "\n"
