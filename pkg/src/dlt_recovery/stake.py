"""Voting stake of a functional role from its decoded resolution trace."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DomainError, InfiniteStakeError
from .utfm import STATE_PHASE, Phase, ResolutionDistribution, Trace, Utfm, viterbi_decode


@dataclass(frozen=True)
class PositionWeights:
    tactical: int = 1
    operational: int = 4
    strategic: int = 2

    def __post_init__(self):
        if min(self.tactical, self.operational, self.strategic) < 1:
            raise DomainError("position weights must be >= 1")

    def weight(self, phase: Phase) -> int:
        return {
            Phase.TACTICAL: self.tactical,
            Phase.OPERATIONAL: self.operational,
            Phase.STRATEGIC: self.strategic,
        }[phase]

    def scaled(self, k: int) -> "PositionWeights":
        return PositionWeights(self.tactical * k, self.operational * k, self.strategic * k)


@dataclass(frozen=True)
class StakeRecord:
    role: str
    trace_log2_prob: float
    weight_sum: int
    transitions: int
    ice: float
    stake: int


def trace_entropy(dist: ResolutionDistribution) -> float:
    """Shannon entropy in bits; zero-probability outcomes contribute nothing."""
    return -sum(p * math.log2(p) for p in dist.values() if p > 0) + 0.0


def _phase(state: str, phases) -> Phase:
    if phases is not None:
        return phases[state]
    try:
        return STATE_PHASE[state]
    except KeyError:
        raise DomainError(f"no phase known for state {state!r}") from None


def path_weight_sum(trace: Trace, weights: PositionWeights = PositionWeights(),
                    phases=None) -> tuple[int, int]:
    """``(S, N)``: summed position weights over the path and its transition count.

    The trace must run from a tactical state to a strategic one.  ``phases``
    maps state name to :class:`Phase` for non-standard state names.
    """
    first, last = _phase(trace.states[0], phases), _phase(trace.states[-1], phases)
    if first is not Phase.TACTICAL:
        raise DomainError(f"trace starts in {first.value} state {trace.states[0]}")
    if last is not Phase.STRATEGIC:
        raise DomainError(f"trace ends in {last.value} state {trace.states[-1]}, not an outcome state")
    S = sum(weights.weight(_phase(s, phases)) for s in trace.states)
    return S, trace.transitions


def information_cross_entropy(trace: Trace, weights: PositionWeights = PositionWeights(),
                              phases=None) -> float:
    """``-S * log2 t`` for the trace's probability ``t``."""
    if not math.isfinite(trace.log2_probability):
        raise InfiniteStakeError("zero-probability trace has unbounded cross entropy")
    S, _ = path_weight_sum(trace, weights, phases)
    return -S * trace.log2_probability + 0.0


def voting_stake(ice: float) -> int:
    """``floor(ice)``, but never below 1 since stake must be a positive integer."""
    if not math.isfinite(ice) or ice < 0:
        raise DomainError(f"cross entropy must be finite and non-negative, got {ice}")
    return max(1, math.floor(ice))


def compute_stake(role: str, model: Utfm, criteria: Sequence[str],
                  weights: PositionWeights = PositionWeights()) -> StakeRecord:
    """Stake from the Viterbi trace of ``criteria`` that ends in an accept state."""
    trace = viterbi_decode(model, criteria, require_accept=True)
    phases = dict(zip(model.states, model.phases))
    S, N = path_weight_sum(trace, weights, phases)
    ice = information_cross_entropy(trace, weights, phases)
    return StakeRecord(role, trace.log2_probability, S, N, ice, voting_stake(ice))
