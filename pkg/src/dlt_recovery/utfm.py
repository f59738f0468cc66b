"""Probabilistic finite state machines for recovery uncertainty.

A :class:`Utfm` reads input criteria one symbol at a time.  At state ``s``
the specialist supplies symbol ``a`` with probability ``emissions[s, a]``
and the machine then moves to ``s'`` with probability
``transitions[a, s, s']``.  Each ``(a, s)`` row of the transition tensor is
either all zero (no successor) or a distribution.

Traces and acceptance are conditional on the input: a trace's probability
is the initial probability of its first state times the product of the
symbol-labelled transition probabilities.  Emissions only enter the
generative likelihood used for Baum-Welch training and for sampling.

All probability arithmetic that can underflow is done in log2 space, with
``-inf`` standing for probability zero.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    ModelFormatError,
    NoAdmissiblePathError,
    NumericalError,
    UndefinedDistributionError,
)

log = logging.getLogger(__name__)

TOL = 1e-9
# slack used when comparing log2 path scores for ties
TIE_EPS = 1e-12


class Phase(enum.Enum):
    TACTICAL = "tactical"
    OPERATIONAL = "operational"
    STRATEGIC = "strategic"

    @classmethod
    def parse(cls, text: str) -> "Phase":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise DomainError(f"unknown phase {text!r}") from None


# Turnaround, Taxi-Out, Enroute, Taxi-In for each phase.
STATE_NAMES = (
    "TAS", "TOS", "ES", "TIS",
    "TAD", "TOD", "ED", "TID",
    "TAO", "TOO", "EO", "TIO",
)
STATE_PHASE = {
    name: (Phase.TACTICAL, Phase.OPERATIONAL, Phase.STRATEGIC)[i // 4]
    for i, name in enumerate(STATE_NAMES)
}
DEFAULT_ALPHABET = tuple(f"a{i}" for i in range(8))


def standard_support() -> np.ndarray:
    """Allowed state-to-state edges of the 12-state model.

    Within a phase states run left to right with self-loops; every state
    can step to the same flight stage of the next phase, and the last
    stage of a phase can step to the first stage of the next one.
    """
    n = len(STATE_NAMES)
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        phase, stage = divmod(i, 4)
        mask[i, i] = True
        if stage < 3:
            mask[i, i + 1] = True
        if phase < 2:
            mask[i, i + 4] = True
            if stage == 3:
                mask[i, (phase + 1) * 4] = True
    return mask


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Utfm:
    """Immutable model.  Arrays are indexed by position in ``states``/``alphabet``.

    Shapes: ``initial`` (S,), ``transitions`` (A, S, S), ``emissions`` (S, A).
    Construction does not validate; use :func:`validate`.
    """

    states: tuple[str, ...]
    phases: tuple[Phase, ...]
    alphabet: tuple[str, ...]
    initial: np.ndarray
    transitions: np.ndarray
    emissions: np.ndarray
    accept: frozenset[str]
    _sidx: dict = field(init=False, repr=False, compare=False)
    _aidx: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "accept", frozenset(self.accept))
        object.__setattr__(self, "initial", _readonly(self.initial))
        object.__setattr__(self, "transitions", _readonly(self.transitions))
        object.__setattr__(self, "emissions", _readonly(self.emissions))
        S, A = len(self.states), len(self.alphabet)
        if len(self.phases) != S:
            raise DomainError("one phase per state required")
        if len(set(self.states)) != S:
            raise DomainError("state names must be unique")
        if A == 0 or len(set(self.alphabet)) != A:
            raise DomainError("alphabet must be non-empty with unique symbols")
        if self.initial.shape != (S,):
            raise DomainError(f"initial must have shape ({S},)")
        if self.transitions.shape != (A, S, S):
            raise DomainError(f"transitions must have shape ({A}, {S}, {S})")
        if self.emissions.shape != (S, A):
            raise DomainError(f"emissions must have shape ({S}, {A})")
        object.__setattr__(self, "_sidx", {s: i for i, s in enumerate(self.states)})
        object.__setattr__(self, "_aidx", {a: i for i, a in enumerate(self.alphabet)})

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, name: str) -> int:
        try:
            return self._sidx[name]
        except KeyError:
            raise DomainError(f"unknown state {name!r}") from None

    def symbol_index(self, symbol: str) -> int:
        try:
            return self._aidx[symbol]
        except KeyError:
            raise DomainError(f"symbol {symbol!r} not in alphabet") from None

    def encode(self, symbols: Iterable[str]) -> np.ndarray:
        return np.array([self.symbol_index(a) for a in symbols], dtype=np.intp)

    def phase_of(self, state: str) -> Phase:
        return self.phases[self.state_index(state)]

    @property
    def accept_mask(self) -> np.ndarray:
        return np.array([s in self.accept for s in self.states])

    def successors(self, state: str, symbol: str) -> dict[str, float]:
        """The set Delta(state, symbol) with its probabilities."""
        row = self.transitions[self.symbol_index(symbol), self.state_index(state)]
        return {self.states[j]: float(p) for j, p in enumerate(row) if p > 0}

    def replace(self, **changes) -> "Utfm":
        fields = dict(
            states=self.states, phases=self.phases, alphabet=self.alphabet,
            initial=self.initial, transitions=self.transitions,
            emissions=self.emissions, accept=self.accept,
        )
        fields.update(changes)
        return Utfm(**fields)

    @classmethod
    def from_mappings(
        cls,
        states: Sequence[str],
        alphabet: Sequence[str],
        initial: Mapping[str, float],
        transitions: Mapping[tuple[str, str], Mapping[str, float]],
        emissions: Mapping[str, Mapping[str, float]] | None = None,
        accept: Iterable[str] | None = None,
        phases: Sequence[Phase] | None = None,
    ) -> "Utfm":
        """Build a model from sparse dictionaries.

        ``transitions`` maps ``(state, symbol)`` to successor probabilities.
        Missing emissions default to uniform; missing ``phases`` are looked up
        among the 12 standard state names.  ``accept`` defaults to the
        strategic states.
        """
        states = tuple(states)
        alphabet = tuple(alphabet)
        if phases is None:
            try:
                phases = [STATE_PHASE[s] for s in states]
            except KeyError as exc:
                raise DomainError(f"no phase known for state {exc.args[0]!r}") from None
        sidx = {s: i for i, s in enumerate(states)}
        aidx = {a: i for i, a in enumerate(alphabet)}
        S, A = len(states), len(alphabet)

        def si(s):
            if s not in sidx:
                raise DomainError(f"unknown state {s!r}")
            return sidx[s]

        def ai(a):
            if a not in aidx:
                raise DomainError(f"symbol {a!r} not in alphabet")
            return aidx[a]

        pi = np.zeros(S)
        for s, p in initial.items():
            pi[si(s)] = p
        T = np.zeros((A, S, S))
        for (s, a), row in transitions.items():
            for s2, p in row.items():
                T[ai(a), si(s), si(s2)] = p
        if emissions is None:
            B = np.full((S, A), 1.0 / A)
        else:
            B = np.zeros((S, A))
            for s, row in emissions.items():
                for a, p in row.items():
                    B[si(s), ai(a)] = p
        if accept is None:
            accept = [s for s, ph in zip(states, phases) if ph is Phase.STRATEGIC]
        return cls(states, tuple(phases), alphabet, pi, T, B, frozenset(accept))


@dataclass(frozen=True)
class Violation:
    where: str
    deviation: float

    def __str__(self):
        return f"{self.where}: deviation {self.deviation:.3g}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate(model: Utfm) -> ValidationReport:
    """Check every stochasticity invariant and return the violations found."""
    out: list[Violation] = []

    def check_range(name, arr):
        lo, hi = float(np.min(arr, initial=0.0)), float(np.max(arr, initial=0.0))
        if not np.all(np.isfinite(arr)):
            out.append(Violation(f"{name} contains non-finite values", math.inf))
        if lo < 0:
            out.append(Violation(f"{name} has negative probability", -lo))
        if hi > 1:
            out.append(Violation(f"{name} has probability above 1", hi - 1))

    check_range("initial", model.initial)
    check_range("transitions", model.transitions)
    check_range("emissions", model.emissions)

    dev = abs(float(model.initial.sum()) - 1.0)
    if dev > TOL:
        out.append(Violation("initial", dev))
    for i, s in enumerate(model.states):
        dev = abs(float(model.emissions[i].sum()) - 1.0)
        if dev > TOL:
            out.append(Violation(f"emissions[{s}]", dev))
    sums = model.transitions.sum(axis=2)
    for a_i, a in enumerate(model.alphabet):
        for s_i, s in enumerate(model.states):
            total = float(sums[a_i, s_i])
            if not np.any(model.transitions[a_i, s_i]):
                continue
            if abs(total - 1.0) > TOL:
                out.append(Violation(f"transitions[{s}, {a}]", abs(total - 1.0)))
    if not model.accept:
        out.append(Violation("accept states empty", 1.0))
    for s in sorted(model.accept - set(model.states)):
        out.append(Violation(f"accept state {s!r} not declared", 1.0))
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class Trace:
    """A state path ``s0, x1, s1, ..., xk, sk`` with its log2 probability."""

    states: tuple[str, ...]
    symbols: tuple[str, ...]
    log2_probability: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(self.states) != len(self.symbols) + 1:
            raise DomainError("a trace needs exactly one more state than symbols")
        if self.log2_probability > 0:
            raise DomainError("log2 probability must be <= 0")

    @property
    def path(self) -> tuple[str, ...]:
        out = [self.states[0]]
        for a, s in zip(self.symbols, self.states[1:]):
            out += [a, s]
        return tuple(out)

    @property
    def probability(self) -> float:
        return 2.0 ** self.log2_probability

    @property
    def transitions(self) -> int:
        return len(self.symbols)


def _log2(x):
    with np.errstate(divide="ignore"):
        return np.log2(x)


def trace_log2_probability(model: Utfm, trace: Trace) -> float:
    idx = [model.state_index(s) for s in trace.states]
    syms = model.encode(trace.symbols)
    lp = float(_log2(model.initial[idx[0]]))
    for a, s, s2 in zip(syms, idx, idx[1:]):
        lp += float(_log2(model.transitions[a, s, s2]))
    return lp


def trace_probability(model: Utfm, trace: Trace) -> float:
    """Initial probability of the first state times each step's probability.

    A step outside ``Delta(s, a)`` has probability zero, and so does the trace.
    """
    return float(2.0 ** trace_log2_probability(model, trace))


def _forward_log2(model: Utfm, syms: np.ndarray, mask: np.ndarray | None) -> float:
    alpha = model.initial.astype(float).copy()
    logscale = 0.0
    for a in syms:
        alpha = alpha @ model.transitions[a]
        z = alpha.sum()
        if z <= 0:
            return -math.inf
        alpha /= z
        logscale += math.log2(z)
    end = alpha[mask].sum() if mask is not None else alpha.sum()
    if end <= 0:
        return -math.inf
    return logscale + math.log2(end)


def acceptance_log2_probability(model: Utfm, x: Sequence[str]) -> float:
    return _forward_log2(model, model.encode(x), model.accept_mask)


def acceptance_probability(model: Utfm, x: Sequence[str]) -> float:
    """Total probability of traces for ``x`` that end in an accept state."""
    p = 2.0 ** acceptance_log2_probability(model, x)
    return min(1.0, float(p))


def viterbi_decode(model: Utfm, x: Sequence[str], *, require_accept: bool = False) -> Trace:
    """Most probable trace for ``x``.

    Among equally probable traces the one whose state-index sequence is
    lexicographically smallest wins.  This is done by running the recursion
    backwards (best completion from each state) and then choosing states
    greedily from the front.
    """
    syms = model.encode(x)
    if len(syms) == 0:
        raise DomainError("viterbi_decode needs a non-empty input")
    logT = _log2(model.transitions)
    S = model.n_states
    k = len(syms)
    # best[t][s]: max log2 probability of finishing from state s at time t
    best = np.empty((k + 1, S))
    if require_accept:
        best[k] = np.where(model.accept_mask, 0.0, -np.inf)
    else:
        best[k] = 0.0
    for t in range(k, 0, -1):
        best[t - 1] = np.max(logT[syms[t - 1]] + best[t][None, :], axis=1)

    def pick(scores):
        top = np.max(scores)
        if top == -np.inf:
            raise NoAdmissiblePathError("no admissible path for the input")
        return int(np.flatnonzero(scores >= top - TIE_EPS)[0])

    start = _log2(model.initial) + best[0]
    s = pick(start)
    path = [s]
    lp = float(_log2(model.initial[s]))
    for t in range(1, k + 1):
        a = syms[t - 1]
        s2 = pick(logT[a, s] + best[t])
        lp += float(logT[a, s, s2])
        path.append(s2)
        s = s2
    return Trace(tuple(model.states[i] for i in path), tuple(x), min(lp, 0.0))


# ---------------------------------------------------------------------------
# Pseudocount smoothing


@dataclass(frozen=True)
class ResolutionDistribution:
    outcomes: Mapping

    def __post_init__(self):
        object.__setattr__(self, "outcomes", dict(self.outcomes))
        for r, p in self.outcomes.items():
            if not (0.0 <= p <= 1.0):
                raise DomainError(f"probability of {r!r} outside [0, 1]: {p}")
        total = sum(self.outcomes.values())
        if abs(total - 1.0) > TOL:
            raise DomainError(f"probabilities sum to {total}, not 1")

    def __getitem__(self, key):
        return self.outcomes[key]

    def values(self):
        return self.outcomes.values()


@dataclass(frozen=True)
class PseudocountConfig:
    """Prior counts per phase, plus optional per-symbol emission overrides."""

    tactical: int = 0
    operational: int = 0
    strategic: int = 0
    features: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "features", dict(self.features))
        counts = [self.tactical, self.operational, self.strategic, *self.features.values()]
        if any(c < 0 for c in counts):
            raise DomainError("pseudocounts must be non-negative")

    def for_phase(self, phase: Phase) -> int:
        return {
            Phase.TACTICAL: self.tactical,
            Phase.OPERATIONAL: self.operational,
            Phase.STRATEGIC: self.strategic,
        }[phase]

    @property
    def is_zero(self) -> bool:
        return not (self.tactical or self.operational or self.strategic
                    or any(self.features.values()))

    def scaled(self, factor: float) -> "PseudocountConfig":
        """Counts scaled by ``factor`` and rounded, keeping nonzero counts >= 1."""
        def sc(c):
            return 0 if c == 0 else max(1, round(c * factor))
        return PseudocountConfig(
            sc(self.tactical), sc(self.operational), sc(self.strategic),
            {k: sc(v) for k, v in self.features.items()},
        )


def pseudocount_probability(observed: Mapping, priors) -> ResolutionDistribution:
    """Smoothed estimate ``(n_i + c_i) / sum_j (n_j + c_j)``.

    ``priors`` is a per-value mapping (missing values count 0), a single count
    applied to every value, or a :class:`PseudocountConfig` whose per-feature
    counts are used.
    """
    if isinstance(priors, PseudocountConfig):
        priors = priors.features
    values = list(observed)
    if isinstance(priors, Mapping):
        values += [v for v in priors if v not in observed]
        c = {v: priors.get(v, 0) for v in values}
    else:
        c = {v: priors for v in values}
    n = {v: observed.get(v, 0) for v in values}
    if any(n[v] < 0 or c[v] < 0 for v in values):
        raise DomainError("counts must be non-negative")
    total = sum(n[v] + c[v] for v in values)
    if total <= 0:
        raise UndefinedDistributionError("all counts and pseudocounts are zero")
    return ResolutionDistribution({v: (n[v] + c[v]) / total for v in values})


def prior_knowledge_factor(c: int) -> float:
    """How much more likely a value seen once is than one never seen."""
    if c <= 0:
        raise DomainError("prior knowledge factor needs a positive pseudocount")
    return (1 + c) / c


def inherent_likelihood(c: int, total: int) -> float:
    """Fraction of a ``total``-instance data set that a pseudocount ``c`` stands for."""
    if total <= 0 or not 0 <= c <= total:
        raise DomainError("need 0 <= c <= total and total > 0")
    return c / total


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainingCorpus:
    sequences: tuple[tuple[str, ...], ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        seqs = tuple(tuple(s) for s in self.sequences)
        object.__setattr__(self, "sequences", seqs)
        if self.weights is None:
            object.__setattr__(self, "weights", (1.0,) * len(seqs))
        else:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(seqs) or any(not (x > 0) for x in w):
                raise DomainError("one positive weight per sequence required")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.sequences)

    def symbols(self) -> set[str]:
        return {a for s in self.sequences for a in s}


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    log_likelihood: float
    # log-likelihood plus the log prior implied by the pseudocounts; this is
    # the quantity EM with pseudocounts never decreases
    objective: float


@dataclass(frozen=True)
class TrainingResult:
    model: Utfm
    initial_log_likelihood: float
    initial_objective: float
    log: tuple[IterationRecord, ...]
    converged: bool


class _Groups:
    """Corpus sequences bucketed by length as integer arrays."""

    def __init__(self, model: Utfm, corpus: TrainingCorpus):
        buckets: dict[int, list] = {}
        for seq, w in zip(corpus.sequences, corpus.weights):
            buckets.setdefault(len(seq), []).append((model.encode(seq), w))
        self.groups = [
            (np.array([e for e, _ in items], dtype=np.intp).reshape(len(items), L),
             np.array([w for _, w in items]))
            for L, items in sorted(buckets.items())
        ]


def _estep(model: Utfm, groups: _Groups, accumulate: bool):
    """Forward-backward over all groups; returns (log2 likelihood, counts)."""
    pi, T, B = model.initial, model.transitions, model.emissions
    S, A = model.n_states, len(model.alphabet)
    init_c = np.zeros(S)
    trans_c = np.zeros((A, S, S))
    emit_c = np.zeros((S, A))
    total_ll = 0.0
    for X, w in groups.groups:
        N, L = X.shape
        alpha = np.empty((L + 1, N, S))
        scale = np.ones((L + 1, N))
        alpha[0] = pi
        with np.errstate(divide="ignore"):
            for t in range(1, L + 1):
                a = X[:, t - 1]
                pre = alpha[t - 1] * B[:, a].T
                nxt = np.einsum("ns,nsk->nk", pre, T[a])
                z = nxt.sum(axis=1)
                if np.any(z <= 0) or not np.all(np.isfinite(z)):
                    raise NumericalError("a training sequence has zero likelihood under the model")
                scale[t] = z
                alpha[t] = nxt / z[:, None]
        total_ll += float(np.sum(w * np.log2(scale).sum(axis=0)))
        if not accumulate:
            continue
        beta = np.ones((N, S))
        for t in range(L, 0, -1):
            a = X[:, t - 1]
            emit = B[:, a].T
            Ta = T[a]
            xi = (alpha[t - 1] * emit)[:, :, None] * Ta * beta[:, None, :] / scale[t][:, None, None]
            xi *= w[:, None, None]
            np.add.at(trans_c, a, xi)
            np.add.at(emit_c.T, a, xi.sum(axis=2))
            beta = np.einsum("nsk,nk->ns", Ta, beta) * emit / scale[t][:, None]
        gamma0 = alpha[0] * beta
        init_c += (w[:, None] * gamma0).sum(axis=0)
    if not math.isfinite(total_ll):
        raise NumericalError("non-finite corpus log-likelihood")
    return total_ll, (init_c, trans_c, emit_c)


def _prior_arrays(model: Utfm, priors: PseudocountConfig, support_T, support_pi):
    A = len(model.alphabet)
    per_state = np.array([priors.for_phase(p) for p in model.phases], dtype=float)
    c_pi = np.where(support_pi, per_state, 0.0)
    c_T = np.where(support_T, per_state[None, :, None], 0.0)
    c_B = np.repeat(per_state[:, None], A, axis=1)
    for sym, c in priors.features.items():
        if sym in model._aidx:
            c_B[:, model._aidx[sym]] = c
    return c_pi, c_T, c_B


def _log_prior(model: Utfm, c_pi, c_T, c_B) -> float:
    total = 0.0
    for c, theta in ((c_pi, model.initial), (c_T, model.transitions), (c_B, model.emissions)):
        m = c > 0
        if np.any(m):
            with np.errstate(divide="ignore"):
                total += float(np.sum(c[m] * np.log2(theta[m])))
    return total


def _normalize(counts, fallback, axis):
    z = counts.sum(axis=axis, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(z > 0, counts / np.where(z > 0, z, 1), fallback)
    return out


def baum_welch_train(
    model: Utfm,
    corpus: TrainingCorpus,
    priors: PseudocountConfig | None = None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> TrainingResult:
    """Expectation maximisation with pseudocounts added to expected counts.

    Zero entries of ``model.initial`` and ``model.transitions`` are structural
    and stay zero.  Every emission may become positive.  The log records, per
    iteration, the log2 likelihood of the corpus under the updated model and
    the penalised objective; training stops once the objective improves by
    less than ``tol`` or after ``max_iter`` iterations.  Only a local optimum
    is reached.
    """
    priors = priors or PseudocountConfig()
    if len(corpus) == 0:
        raise DomainError("training corpus is empty")
    if tol <= 0 or max_iter < 1:
        raise DomainError("tol must be > 0 and max_iter >= 1")
    unknown = corpus.symbols() - set(model.alphabet)
    if unknown:
        raise DomainError(f"corpus symbols outside the alphabet: {sorted(unknown)}")
    report = validate(model)
    if not report.ok:
        raise DomainError(f"initial model invalid: {report.violations[0]}")

    groups = _Groups(model, corpus)
    support_pi = model.initial > 0
    support_T = model.transitions > 0
    c_pi, c_T, c_B = _prior_arrays(model, priors, support_T, support_pi)

    ll, counts = _estep(model, groups, accumulate=True)
    obj = ll + _log_prior(model, c_pi, c_T, c_B)
    init_ll, init_obj = ll, obj
    records: list[IterationRecord] = []
    converged = False
    for it in range(1, max_iter + 1):
        init_c, trans_c, emit_c = counts
        pi = _normalize(np.where(support_pi, init_c, 0.0) + c_pi, model.initial, axis=0)
        T = _normalize(np.where(support_T, trans_c, 0.0) + c_T, model.transitions, axis=2)
        B = _normalize(emit_c + c_B, model.emissions, axis=1)
        model = model.replace(initial=pi, transitions=T, emissions=B)
        ll, counts = _estep(model, groups, accumulate=it < max_iter)
        new_obj = ll + _log_prior(model, c_pi, c_T, c_B)
        records.append(IterationRecord(it, ll, new_obj))
        log.debug("baum-welch iteration %d: log2 L = %.6f", it, ll)
        if new_obj - obj < tol:
            converged = True
            obj = new_obj
            break
        obj = new_obj
    return TrainingResult(model, init_ll, init_obj, tuple(records), converged)


def corpus_log2_likelihood(model: Utfm, corpus: TrainingCorpus) -> float:
    ll, _ = _estep(model, _Groups(model, corpus), accumulate=False)
    return ll


# ---------------------------------------------------------------------------
# Construction and sampling


def standard_model(
    alphabet: Sequence[str] = DEFAULT_ALPHABET,
    rng: np.random.Generator | None = None,
    concentration: float = 1.0,
) -> Utfm:
    """12-state model on the standard topology, starting at TAS.

    With ``rng`` the distributions are Dirichlet draws; otherwise uniform
    over the allowed edges.
    """
    S, A = len(STATE_NAMES), len(alphabet)
    support = standard_support()
    pi = np.zeros(S)
    pi[0] = 1.0
    T = np.zeros((A, S, S))
    B = np.zeros((S, A))
    for s in range(S):
        succ = np.flatnonzero(support[s])
        for a in range(A):
            if rng is None:
                T[a, s, succ] = 1.0 / len(succ)
            else:
                T[a, s, succ] = rng.dirichlet(np.full(len(succ), concentration))
        B[s] = np.full(A, 1.0 / A) if rng is None else rng.dirichlet(np.full(A, concentration))
    phases = [STATE_PHASE[s] for s in STATE_NAMES]
    accept = [s for s in STATE_NAMES if STATE_PHASE[s] is Phase.STRATEGIC]
    return Utfm(STATE_NAMES, phases, tuple(alphabet), pi, T, B, frozenset(accept))


def uniform_init(model: Utfm, seed: int = 0, noise: float = 1e-3) -> Utfm:
    """Uniform distributions over ``model``'s support, perturbed by seeded noise."""
    rng = np.random.default_rng(seed)

    def perturb(support, axis):
        base = support.astype(float)
        base = base * (1.0 + noise * rng.uniform(-1.0, 1.0, size=base.shape))
        return _normalize(base, 0.0, axis)

    return model.replace(
        initial=perturb(model.initial > 0, 0),
        transitions=perturb(model.transitions > 0, 2),
        emissions=perturb(np.ones_like(model.emissions, dtype=bool), 1),
    )


def sample(model: Utfm, length: int, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Draw ``(states, symbols)`` from the generative process."""
    s = int(rng.choice(model.n_states, p=model.initial))
    states, symbols = [model.states[s]], []
    for _ in range(length):
        a = int(rng.choice(len(model.alphabet), p=model.emissions[s]))
        row = model.transitions[a, s]
        if not np.any(row):
            raise DomainError(f"no successor for ({model.states[s]}, {model.alphabet[a]})")
        s = int(rng.choice(model.n_states, p=row / row.sum()))
        symbols.append(model.alphabet[a])
        states.append(model.states[s])
    return states, symbols


def sample_corpus(model: Utfm, n: int, length: int, seed: int) -> TrainingCorpus:
    rng = np.random.default_rng(seed)
    return TrainingCorpus(tuple(tuple(sample(model, length, rng)[1]) for _ in range(n)))


# ---------------------------------------------------------------------------
# Text serialisation

HEADER = "UTFM v1"


def _fmt(p: float) -> str:
    return f"{p:.12g}"


def dumps(model: Utfm) -> str:
    lines = [HEADER]
    for s, ph in zip(model.states, model.phases):
        tail = " ACCEPT" if s in model.accept else ""
        lines.append(f"STATE {s} {ph.value}{tail}")
    for i, s in enumerate(model.states):
        lines.append(f"INIT {s} {_fmt(model.initial[i])}")
    for a_i, a in enumerate(model.alphabet):
        for s_i, s in enumerate(model.states):
            for s2_i in np.flatnonzero(model.transitions[a_i, s_i]):
                p = model.transitions[a_i, s_i, s2_i]
                lines.append(f"TRANS {s} {a} {model.states[s2_i]} {_fmt(p)}")
    for s_i, s in enumerate(model.states):
        for a_i, a in enumerate(model.alphabet):
            lines.append(f"EMIT {s} {a} {_fmt(model.emissions[s_i, a_i])}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Utfm:
    """Parse the text format; the result must pass :func:`validate`."""
    lines = [ln.strip() for ln in text.splitlines()]
    body = [(n, ln) for n, ln in enumerate(lines, 1) if ln and not ln.startswith("#")]
    if not body or body[0][1] != HEADER:
        raise ModelFormatError(f"line 1: expected header {HEADER!r}")
    states, phases, accept = [], [], []
    alphabet: list[str] = []
    init, trans, emit = {}, {}, {}

    def prob(n, tok):
        try:
            return float(tok)
        except ValueError:
            raise ModelFormatError(f"line {n}: bad probability {tok!r}") from None

    def sym(a):
        if a not in alphabet:
            alphabet.append(a)

    for n, ln in body[1:]:
        tok = ln.split()
        kind = tok[0]
        if kind == "STATE" and len(tok) in (3, 4):
            if len(tok) == 4 and tok[3] != "ACCEPT":
                raise ModelFormatError(f"line {n}: unexpected {tok[3]!r}")
            try:
                phases.append(Phase.parse(tok[2]))
            except DomainError as exc:
                raise ModelFormatError(f"line {n}: {exc}") from None
            states.append(tok[1])
            if len(tok) == 4:
                accept.append(tok[1])
        elif kind == "INIT" and len(tok) == 3:
            init[tok[1]] = prob(n, tok[2])
        elif kind == "TRANS" and len(tok) == 5:
            sym(tok[2])
            trans.setdefault((tok[1], tok[2]), {})[tok[3]] = prob(n, tok[4])
        elif kind == "EMIT" and len(tok) == 4:
            sym(tok[2])
            emit.setdefault(tok[1], {})[tok[2]] = prob(n, tok[3])
        else:
            raise ModelFormatError(f"line {n}: cannot parse {ln!r}")
    try:
        model = Utfm.from_mappings(states, alphabet, init, trans, emit, accept, phases)
    except DomainError as exc:
        raise ModelFormatError(str(exc)) from None
    report = validate(model)
    if not report.ok:
        raise ModelFormatError(f"model fails validation: {report.violations[0]}")
    return model


def load(path) -> Utfm:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dump(model: Utfm, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model))
