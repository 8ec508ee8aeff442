"""Tabular counterfactual regret minimization over an explicit game tree.

The tree is built once per game and reused across iterations; regret and
average-policy tables are keyed by infostate. Per-node vectors are plain
Python lists because the action sets are tiny (two or three moves) and
list arithmetic is several times faster than small-array work here.

Iteration ``t`` starts at 1. Linear weighting multiplies both the regret
and the average-policy increments by ``t``; alternating updates touch
only agent ``t % 2`` on iteration ``t``.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FeasibilityError
from .games import CHANCE, Action, Game, InfostateKey, NodeKind

_DECISION, _CHANCE, _TERMINAL = 0, 1, 2

UNIFORM = "uniform"
ARGMAX = "argmax"


def regret_matching(values, mode: str = UNIFORM) -> np.ndarray:
    """Distribution proportional to positive parts of ``values``.

    When no entry is positive, Uniform mode spreads mass evenly and
    Argmax mode puts all mass on the largest entry (first on ties).
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite regrets {v}")
    pos = np.maximum(v, 0.0)
    total = pos.sum()
    if total > 0.0:
        return pos / total
    out = np.zeros_like(v)
    if mode == UNIFORM:
        out[:] = 1.0 / v.size
    elif mode == ARGMAX:
        out[int(np.argmax(v))] = 1.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


class RegretTable(dict):
    """InfostateKey -> cumulative regret list; missing keys read as zeros."""

    def vector(self, key: InfostateKey, n: int) -> List[float]:
        v = self.get(key)
        if v is None:
            v = [0.0] * n
            self[key] = v
        return v

    def add(self, key: InfostateKey, increment: Sequence[float], weight: float = 1.0) -> None:
        v = self.vector(key, len(increment))
        for a, inc in enumerate(increment):
            v[a] += weight * inc


class AvgPolicyAccumulator:
    """Reach-weighted policy sums used to form the average policy."""

    def __init__(self):
        self.policy_sum: Dict[InfostateKey, List[float]] = {}
        self.weight_sum: Dict[InfostateKey, float] = {}

    def add(self, key: InfostateKey, probs: Sequence[float], weight: float) -> None:
        sums = self.policy_sum.get(key)
        if sums is None:
            sums = [0.0] * len(probs)
            self.policy_sum[key] = sums
            self.weight_sum[key] = 0.0
        for a, p in enumerate(probs):
            sums[a] += weight * p
        self.weight_sum[key] += weight


def average_policy(acc: AvgPolicyAccumulator) -> Dict[InfostateKey, List[float]]:
    """Normalized average policy; zero-weight keys fall back to uniform."""
    profile: Dict[InfostateKey, List[float]] = {}
    for key, sums in acc.policy_sum.items():
        w = acc.weight_sum[key]
        if w > 0.0:
            profile[key] = [s / w for s in sums]
        else:
            profile[key] = [1.0 / len(sums)] * len(sums)
    return profile


class TreeNode:
    __slots__ = ("kind", "actor", "key", "legal", "children", "probs", "reward0")

    def __init__(self, kind, actor=None, key=None, legal=None, children=None, probs=None, reward0=0.0):
        self.kind = kind
        self.actor = actor
        self.key = key
        self.legal = legal
        self.children = children
        self.probs = probs
        self.reward0 = reward0


class GameTree:
    def __init__(self, game: Game, root: TreeNode, counts: Tuple[int, int, int]):
        self.game = game
        self.root = root
        self.n_decision, self.n_chance, self.n_terminal = counts

    @property
    def n_histories(self) -> int:
        return self.n_decision + self.n_chance + self.n_terminal


def build_tree(game: Game) -> GameTree:
    """Expand the full history tree; only for games small enough to hold."""
    if not getattr(game, "enumerable", True):
        raise FeasibilityError(f"game {game.id!r} is too large to enumerate")
    counts = [0, 0, 0]

    def expand(state) -> TreeNode:
        kind = game.node_kind(state)
        if kind is NodeKind.TERMINAL:
            counts[_TERMINAL] += 1
            return TreeNode(_TERMINAL, reward0=game.terminal_reward(state, 0))
        if kind is NodeKind.CHANCE:
            counts[_CHANCE] += 1
            outs = game.chance_outcomes(state)
            return TreeNode(
                _CHANCE,
                children=[expand(game.apply(state, o)) for o in outs],
                probs=[o.prob for o in outs],
            )
        counts[_DECISION] += 1
        actor = state.to_act
        legal = game.legal_actions(state)
        return TreeNode(
            _DECISION,
            actor=actor,
            key=game.infostate_key(state, actor),
            legal=tuple(legal),
            children=[expand(game.apply(state, a)) for a in legal],
        )

    root = expand(game.initial_state())
    return GameTree(game, root, tuple(counts))


def _match_list(reg: List[float], fallback: str = UNIFORM) -> List[float]:
    # regret matching on plain lists for the hot loop
    total = 0.0
    for x in reg:
        if x > 0.0:
            total += x
    if total > 0.0:
        return [x / total if x > 0.0 else 0.0 for x in reg]
    n = len(reg)
    if fallback == ARGMAX:
        out = [0.0] * n
        out[max(range(n), key=reg.__getitem__)] = 1.0
        return out
    return [1.0 / n] * n


def cfr_iteration(
    tree: GameTree,
    regrets: Tuple[RegretTable, RegretTable],
    acc: Tuple[AvgPolicyAccumulator, AvgPolicyAccumulator],
    t: int,
    weighting: str = "vanilla",
    updates: str = "simultaneous",
    fallback: str = UNIFORM,
) -> Tuple[float, float]:
    """One CFR sweep; returns both agents' expected value under pi^t.

    ``fallback`` picks the all-nonpositive-regret behavior: spread evenly
    or commit to the highest-regret action.
    """
    if weighting not in ("vanilla", "linear"):
        raise ValueError(f"unknown weighting {weighting!r}")
    if updates not in ("simultaneous", "alternating"):
        raise ValueError(f"unknown updates {updates!r}")
    if fallback not in (UNIFORM, ARGMAX):
        raise ValueError(f"unknown fallback {fallback!r}")
    w = float(t) if weighting == "linear" else 1.0
    if updates == "simultaneous":
        update = (True, True)
    else:
        i = t % 2
        update = (i == 0, i == 1)
    # policy snapshot for this sweep: an infostate's strategy is fixed at its
    # first visit, so regret updates made mid-sweep cannot leak into pi^t
    sigmas: Dict[InfostateKey, List[float]] = {}

    def walk(node: TreeNode, r0: float, r1: float, rc: float) -> float:
        if node.kind == _TERMINAL:
            return node.reward0
        if node.kind == _CHANCE:
            v = 0.0
            for p, child in zip(node.probs, node.children):
                v += p * walk(child, r0, r1, rc * p)
            return v
        i = node.actor
        n = len(node.children)
        reg = regrets[i].vector(node.key, n)
        sigma = sigmas.get(node.key)
        if sigma is None:
            sigma = sigmas[node.key] = _match_list(reg, fallback)
        # no reach pruning: infostates straddle pruned and unpruned histories,
        # and skipping some would skew the average-policy visit weighting
        if i == 0:
            vals = [walk(c, r0 * sigma[a], r1, rc) for a, c in enumerate(node.children)]
        else:
            vals = [walk(c, r0, r1 * sigma[a], rc) for a, c in enumerate(node.children)]
        v0 = 0.0
        for a in range(n):
            v0 += sigma[a] * vals[a]
        if update[i]:
            ext = (r1 if i == 0 else r0) * rc
            sign = 1.0 if i == 0 else -1.0
            vi = sign * v0
            for a in range(n):
                reg[a] += w * ext * (sign * vals[a] - vi)
            my_reach = r0 if i == 0 else r1
            acc[i].add(node.key, sigma, w * my_reach)
        return v0

    v0 = walk(tree.root, 1.0, 1.0, 1.0)
    return v0, -v0


def run_cfr(
    tree: GameTree,
    iterations: int,
    weighting: str = "vanilla",
    updates: str = "simultaneous",
    fallback: str = UNIFORM,
    callback: Optional[Callable[[int, Dict[InfostateKey, List[float]]], bool]] = None,
    callback_every: int = 0,
) -> Tuple[Tuple[RegretTable, RegretTable], Tuple[AvgPolicyAccumulator, AvgPolicyAccumulator]]:
    """Run ``iterations`` sweeps; the callback may return True to stop early."""
    regrets = (RegretTable(), RegretTable())
    acc = (AvgPolicyAccumulator(), AvgPolicyAccumulator())
    for t in range(1, iterations + 1):
        cfr_iteration(tree, regrets, acc, t, weighting, updates, fallback)
        if callback is not None and callback_every and t % callback_every == 0:
            if callback(t, {}):
                break
    return regrets, acc


def tree_expected_value(
    tree: GameTree, policy: Callable[[InfostateKey, Tuple[Action, ...], int], Sequence[float]]
) -> float:
    """Seat-0 expected value of the profile given by ``policy``."""

    def walk(node: TreeNode) -> float:
        if node.kind == _TERMINAL:
            return node.reward0
        if node.kind == _CHANCE:
            return sum(p * walk(c) for p, c in zip(node.probs, node.children))
        probs = policy(node.key, node.legal, node.actor)
        return sum(p * walk(c) for p, c in zip(probs, node.children))

    return walk(tree.root)
