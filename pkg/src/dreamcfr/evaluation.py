"""Exact and sampled evaluation of policy profiles.

``best_response`` computes an exact exploiting strategy by dynamic
programming over the exploiter's infostates: histories sharing an
infostate are carried together with their opponent-and-chance reach
weights, so maximizing the group's weighted value at each decision is a
true best response. ``exploitability`` sums both seats' best-response
values; a Nash profile scores zero and no profile scores less.

``head_to_head`` estimates chips per hand by Monte Carlo play with seat
alternation. In duplicate mode hands are played in mirrored pairs that
reuse one card stream and one action stream per seat, which cancels deal
luck exactly: a policy against itself scores exactly zero.

``variance_probe`` measures the spread of sampled value estimates per
(history, action) cell across repeated traversals, the quantity a good
baseline is supposed to shrink.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FeasibilityError
from .games import Action, Game, GameState, InfostateKey, NodeKind
from .sampling import (
    BaselineFn,
    PolicyFn,
    SamplingPolicySpec,
    es_traverse,
    os_traverse,
    zero_baseline,
)


# -- policy adapters --------------------------------------------------------


class UniformPolicy:
    def __call__(self, state: GameState, agent: int, legal: Sequence[Action]) -> np.ndarray:
        return np.full(len(legal), 1.0 / len(legal))


class AlwaysCallPolicy:
    def __call__(self, state: GameState, agent: int, legal: Sequence[Action]) -> np.ndarray:
        probs = np.zeros(len(legal))
        probs[list(legal).index(Action.CALL)] = 1.0
        return probs


class FoldOrCallPolicy:
    """Folds whenever folding is legal, otherwise checks/calls."""

    def __call__(self, state: GameState, agent: int, legal: Sequence[Action]) -> np.ndarray:
        probs = np.zeros(len(legal))
        target = Action.FOLD if Action.FOLD in legal else Action.CALL
        probs[list(legal).index(target)] = 1.0
        return probs


class TabularPolicy:
    """Looks up a profile dict; unseen infostates fall back to uniform."""

    def __init__(self, game: Game, profile: Dict[InfostateKey, Sequence[float]]):
        self.game = game
        self.profile = profile

    def __call__(self, state: GameState, agent: int, legal: Sequence[Action]) -> np.ndarray:
        probs = self.profile.get(self.game.infostate_key(state, agent))
        if probs is None:
            return np.full(len(legal), 1.0 / len(legal))
        return np.asarray(probs, dtype=float)


# -- exact full-tree values --------------------------------------------------


@dataclass
class TreeValues:
    """Seat-0 expected values under a fixed profile, keyed by full history."""

    values: Dict[tuple, float]
    action_values: Dict[tuple, np.ndarray]


def expected_values(game: Game, policy: PolicyFn) -> TreeValues:
    """Exact recursion over every history; seat 1's values are the negations."""
    if not getattr(game, "enumerable", True):
        raise FeasibilityError(f"game {game.id!r} is too large to enumerate")
    values: Dict[tuple, float] = {}
    action_values: Dict[tuple, np.ndarray] = {}

    def walk(state: GameState) -> float:
        kind = game.node_kind(state)
        jkey = game.joint_key(state)
        if kind is NodeKind.TERMINAL:
            v = game.terminal_reward(state, 0)
        elif kind is NodeKind.CHANCE:
            v = sum(o.prob * walk(game.apply(state, o)) for o in game.chance_outcomes(state))
        else:
            legal = game.legal_actions(state)
            pi = np.asarray(policy(state, state.to_act, legal), dtype=float)
            vals = np.asarray([walk(game.apply(state, a)) for a in legal])
            action_values[jkey] = vals
            v = float(pi @ vals)
        values[jkey] = v
        return v

    walk(game.initial_state())
    return TreeValues(values, action_values)


class OracleBaseline:
    """Exact per-(history, action) values for one traverser; zero variance left."""

    def __init__(self, game: Game, policy: PolicyFn, traverser: int):
        self.game = game
        self.sign = 1.0 if traverser == 0 else -1.0
        self._tv = expected_values(game, policy)

    def __call__(self, state: GameState, legal: Sequence[Action]) -> np.ndarray:
        return self.sign * self._tv.action_values[self.game.joint_key(state)]


# -- best response ------------------------------------------------------------


@dataclass
class BestResponse:
    value: float  # exploiter's expected chips at the root
    policy: Dict[InfostateKey, int]  # chosen index into the legal-action list


def best_response(game: Game, policy: PolicyFn, exploiter: int) -> BestResponse:
    """Exact best response of ``exploiter`` against ``policy``'s other seat."""
    if not getattr(game, "enumerable", True):
        raise FeasibilityError(f"game {game.id!r} is too large for exact best response")
    chosen: Dict[InfostateKey, int] = {}

    def solve(group: List[Tuple[GameState, float]]) -> float:
        state0 = group[0][0]
        kind = game.node_kind(state0)
        if kind is NodeKind.TERMINAL:
            return sum(w * game.terminal_reward(s, exploiter) for s, w in group)
        if kind is NodeKind.CHANCE:
            children = [
                (game.apply(s, o), w * o.prob)
                for s, w in group
                for o in game.chance_outcomes(s)
            ]
            return sum(solve(sub) for sub in _partition(game, exploiter, children))
        actor = state0.to_act
        if actor != exploiter:
            children = []
            for s, w in group:
                legal = game.legal_actions(s)
                pi = np.asarray(policy(s, actor, legal), dtype=float)
                children.extend((game.apply(s, a), w * p) for a, p in zip(legal, pi))
            return sum(solve(sub) for sub in _partition(game, exploiter, children))
        legal = game.legal_actions(state0)
        best_val, best_a = -np.inf, 0
        for idx, a in enumerate(legal):
            val = solve([(game.apply(s, a), w) for s, w in group])
            if val > best_val:
                best_val, best_a = val, idx
        chosen[game.infostate_key(state0, exploiter)] = best_a
        return best_val

    value = solve([(game.initial_state(), 1.0)])
    return BestResponse(value, chosen)


def _partition(game: Game, agent: int, children: List[Tuple[GameState, float]]):
    groups: Dict[tuple, List[Tuple[GameState, float]]] = {}
    for state, w in children:
        k = (game.node_kind(state).value, game.infostate_key(state, agent))
        groups.setdefault(k, []).append((state, w))
    return groups.values()


@dataclass
class ExploitabilityResult:
    br_values: Tuple[float, float]  # per-seat best-response values, chips
    total_chips: float
    total_mbb: float  # per game, thousandths of the big blind
    big_blind: int


def exploitability(game: Game, policy: PolicyFn) -> ExploitabilityResult:
    """Sum of both seats' best-response values; zero exactly at equilibrium."""
    br0 = best_response(game, policy, 0).value
    br1 = best_response(game, policy, 1).value
    total = br0 + br1
    bb = getattr(game, "big_blind", 100)
    return ExploitabilityResult((br0, br1), total, total / bb * 1000.0, bb)


def chips_to_mbb(chips: float, big_blind: int = 100) -> float:
    return chips / big_blind * 1000.0


# -- head to head --------------------------------------------------------------


@dataclass
class MatchResult:
    mean_chips: float  # per hand, from the first policy's perspective
    ci_low: float
    ci_high: float
    hands: int


def _play_hand(game: Game, seat_policies, chance_rng, act_rngs) -> float:
    state = game.initial_state()
    while True:
        kind = game.node_kind(state)
        if kind is NodeKind.TERMINAL:
            return game.terminal_reward(state, 0)
        if kind is NodeKind.CHANCE:
            state = game.apply(state, game.sample_chance(state, chance_rng))
            continue
        seat = state.to_act
        legal = game.legal_actions(state)
        pi = np.asarray(seat_policies[seat](state, seat, legal), dtype=float)
        r = act_rngs[seat].random()
        acc = 0.0
        idx = len(legal) - 1
        for j, p in enumerate(pi):
            acc += p
            if r < acc:
                idx = j
                break
        state = game.apply(state, legal[idx])


def head_to_head(
    game: Game,
    policy_a: PolicyFn,
    policy_b: PolicyFn,
    hands: int,
    seed: int = 0,
    duplicate: bool = True,
) -> MatchResult:
    """Monte Carlo match; returns policy A's mean chips per hand with 95% CI.

    Duplicate mode plays hands in seat-swapped pairs: both orderings of a
    pair replay the same card stream and the same per-seat action
    streams, so results negate exactly when the policies are swapped.
    ``hands`` is rounded up to a whole number of pairs.
    """
    if hands < 2:
        raise ValueError("need at least 2 hands")

    def rngs(j: int):
        return tuple(
            np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, j, s])))
            for s in range(3)
        )

    samples: List[float] = []
    if duplicate:
        pairs = (hands + 1) // 2
        for j in range(pairs):
            chance, a0, a1 = rngs(j)
            r1 = _play_hand(game, (policy_a, policy_b), chance, (a0, a1))
            chance, a0, a1 = rngs(j)
            r2 = _play_hand(game, (policy_b, policy_a), chance, (a0, a1))
            samples.append((r1 - r2) / 2.0)
        played = pairs * 2
    else:
        for j in range(hands):
            chance, a0, a1 = rngs(j)
            if j % 2 == 0:
                samples.append(_play_hand(game, (policy_a, policy_b), chance, (a0, a1)))
            else:
                samples.append(-_play_hand(game, (policy_b, policy_a), chance, (a0, a1)))
        played = hands

    arr = np.asarray(samples)
    mean = float(arr.mean())
    half = 1.96 * float(arr.std(ddof=1)) / np.sqrt(len(arr)) if len(arr) > 1 else np.inf
    return MatchResult(mean, mean - half, mean + half, played)


# -- estimator variance ---------------------------------------------------------


@dataclass
class VarianceReport:
    aggregate: float  # visit-weighted mean of per-(history, action) variances
    cells: Dict[tuple, Tuple[int, float, float]]  # (count, mean, variance)
    traversals: int


_ESTIMATORS = ("os", "os-tabular-baseline", "os-learned-baseline", "os-oracle-baseline", "es")


def variance_probe(
    game: Game,
    policy: PolicyFn,
    estimator: str,
    traversals: int,
    rng: np.random.Generator,
    baseline: Optional[BaselineFn] = None,
    traverser: int = 0,
    epsilon: float = 0.5,
) -> VarianceReport:
    """Spread of a sampled estimator's per-(history, action) estimates.

    Runs independent traversals under a fixed profile and groups the
    traverser's action-value estimates by the exact history where they
    were produced. Cells visited fewer than twice cannot show spread and
    are skipped by the aggregate.
    """
    if estimator not in _ESTIMATORS:
        raise ValueError(f"estimator must be one of {_ESTIMATORS}")
    if estimator == "os":
        bl: Optional[BaselineFn] = zero_baseline
    elif estimator == "os-oracle-baseline":
        bl = OracleBaseline(game, policy, traverser)
    elif estimator == "es":
        bl = None
    else:
        if baseline is None:
            raise ValueError(f"{estimator} needs an explicit baseline")
        bl = baseline

    samples: Dict[tuple, List[float]] = {}
    spec = SamplingPolicySpec(traverser, epsilon)
    for _ in range(traversals):
        if estimator == "es":
            for rec in es_traverse(game, policy, traverser, rng).records:
                hkey = game.joint_key(rec.state)
                for a, v in zip(rec.legal, rec.values):
                    samples.setdefault((hkey, int(a)), []).append(float(v))
        else:
            for step in os_traverse(game, policy, spec, bl, rng).steps:
                if step.actor != traverser:
                    continue
                hkey = game.joint_key(step.state)
                for a, v in zip(step.legal, step.vtilde):
                    samples.setdefault((hkey, int(a)), []).append(float(v))

    cells: Dict[tuple, Tuple[int, float, float]] = {}
    num = den = 0.0
    for cell, vals in samples.items():
        arr = np.asarray(vals)
        var = float(arr.var(ddof=1)) if len(arr) > 1 else 0.0
        cells[cell] = (len(arr), float(arr.mean()), var)
        if len(arr) > 1:
            num += len(arr) * var
            den += len(arr)
    return VarianceReport(num / den if den else 0.0, cells, traversals)
