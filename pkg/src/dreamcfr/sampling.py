"""Sampled game traversals and variance-reducing baselines.

Outcome sampling walks a single trajectory: every decision node draws
one action (the traverser explores with an epsilon-uniform mix of its
policy, everyone else samples their policy directly) and every chance
node draws one outcome. On the unwind each decision node's action
values are estimated from a baseline ``b`` and the sampled child's
estimate ``v``:

* sampled action ``a``: ``b(h, a) + (v - b(h, a)) / p(a)`` where ``p``
  is the actor's sampling probability,
* unsampled actions: ``b(h, a)``,
* node estimate: policy-weighted sum of the action estimates,
* terminal: the traverser's realized reward.

Corrections apply at both players' decision nodes but never at chance
nodes, so any finite baseline leaves every infostate's expected estimate
unchanged while a baseline close to the true action values removes the
sampling variance below the deal. A zero baseline recovers plain
outcome sampling.

External sampling explores all of the traverser's actions recursively
and samples single continuations for the opponent and chance; its
action-value estimates need no correction terms.
"""

from __future__ import annotations

from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import SamplingError
from .games import Action, Game, GameState, InfostateKey, NodeKind

PolicyFn = Callable[[GameState, int, Sequence[Action]], np.ndarray]
BaselineFn = Callable[[GameState, Sequence[Action]], np.ndarray]


class SamplingPolicySpec(NamedTuple):
    traverser: int
    epsilon: float


def sampling_policy(pi: np.ndarray, epsilon: float, is_traverser: bool) -> np.ndarray:
    """Exploration mix: epsilon-uniform for the traverser, pi for others."""
    pi = np.asarray(pi, dtype=float)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    if pi.ndim != 1 or pi.size == 0 or not np.all(np.isfinite(pi)):
        raise ValueError(f"bad policy vector {pi}")
    if np.any(pi < -1e-12) or abs(pi.sum() - 1.0) > 1e-9:
        raise ValueError(f"policy is not a distribution: {pi}")
    if not is_traverser:
        return pi
    return epsilon / pi.size + (1.0 - epsilon) * pi


class GeneratorSampler:
    """Draws categorical indices from a numpy Generator."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def pick(self, probs: np.ndarray) -> int:
        total = float(np.sum(probs))
        if not np.isfinite(total) or abs(total - 1.0) > 1e-6 or np.any(probs < 0):
            raise SamplingError(f"bad distribution (sum {total})")
        r = self.rng.random() * total
        acc = 0.0
        for i, p in enumerate(probs):
            acc += p
            if r < acc:
                return i
        return len(probs) - 1


class ScriptedSampler:
    """Replays a fixed list of branch indices and records each draw.

    Used to enumerate every possible trajectory of a sampled traversal:
    run once to learn the branch widths, then sweep scripts. ``trace``
    holds (n_choices, index, probability) per draw.
    """

    def __init__(self, script: Sequence[int] = ()):
        self.script = list(script)
        self.pos = 0
        self.trace: List[Tuple[int, int, float]] = []

    def pick(self, probs: np.ndarray) -> int:
        idx = self.script[self.pos] if self.pos < len(self.script) else 0
        self.pos += 1
        self.trace.append((len(probs), idx, float(probs[idx])))
        return idx

    @property
    def probability(self) -> float:
        p = 1.0
        for _, _, q in self.trace:
            p *= q
        return p


def _as_sampler(rng):
    if hasattr(rng, "pick"):
        return rng
    return GeneratorSampler(rng)


def zero_baseline(state: GameState, legal: Sequence[Action]) -> np.ndarray:
    return np.zeros(len(legal))


class BaselineTable:
    """Running-average action values keyed by (full history, action tag)."""

    def __init__(self, game: Game):
        self.game = game
        self.mean: Dict[tuple, float] = {}
        self.count: Dict[tuple, int] = {}

    def __call__(self, state: GameState, legal: Sequence[Action]) -> np.ndarray:
        hkey = self.game.joint_key(state)
        return np.asarray([self.mean.get((hkey, int(a)), 0.0) for a in legal])


def baseline_update(table: BaselineTable, history_key: tuple, action: Action, observed: float) -> None:
    """Fold one observed child value into the running mean for (history, action)."""
    k = (history_key, int(action))
    n = table.count.get(k, 0) + 1
    table.count[k] = n
    m = table.mean.get(k, 0.0)
    table.mean[k] = m + (observed - m) / n


class OsStep(NamedTuple):
    """One visited decision node, in play order."""

    state: GameState
    key: InfostateKey
    actor: int
    legal: Tuple[Action, ...]
    action_index: int
    xi_prob: float
    pi: np.ndarray
    reach_i: float  # traverser's sampling reach to this node (actions only)
    chance_reach: float  # product of sampled chance-outcome probabilities to this node
    vtilde: np.ndarray  # per-legal-action value estimates
    node_value: float
    child_value: float  # estimate below the sampled action, feeds baseline updates


class OsTraversal(NamedTuple):
    steps: List[OsStep]
    terminal_reward: float
    terminal_state: GameState
    values: Dict[InfostateKey, Tuple[np.ndarray, float]]
    nodes_touched: int
    root_value: float


def os_traverse(
    game: Game,
    policy: PolicyFn,
    spec: SamplingPolicySpec,
    baseline: Optional[BaselineFn],
    rng,
) -> OsTraversal:
    """Walk one outcome-sampled trajectory and estimate values on unwind.

    ``values`` maps each of the traverser's visited infostates to its
    per-action estimates and their policy-weighted node estimate. The
    baseline is read, never written; apply ``baseline_update`` from the
    returned steps afterwards if a running average is being maintained.
    """
    sampler = _as_sampler(rng)
    if baseline is None:
        baseline = zero_baseline
    i = spec.traverser
    steps: List[OsStep] = []
    values: Dict[InfostateKey, Tuple[np.ndarray, float]] = {}
    touched = 0
    terminal_holder: List[GameState] = []

    def walk(state: GameState, reach_i: float, reach_c: float) -> float:
        nonlocal touched
        touched += 1
        kind = game.node_kind(state)
        if kind is NodeKind.TERMINAL:
            terminal_holder.append(state)
            return game.terminal_reward(state, i)
        if kind is NodeKind.CHANCE:
            outcome = _draw_chance(game, state, sampler)
            return walk(game.apply(state, outcome), reach_i, reach_c * outcome.prob)
        actor = state.to_act
        legal = tuple(game.legal_actions(state))
        pi = np.asarray(policy(state, actor, legal), dtype=float)
        xi = sampling_policy(pi, spec.epsilon, actor == i)
        k = sampler.pick(xi)
        if xi[k] <= 0.0:
            raise SamplingError(f"sampled zero-probability action {legal[k]!r}")
        child_reach = reach_i * xi[k] if actor == i else reach_i
        child_value = walk(game.apply(state, legal[k]), child_reach, reach_c)
        b = np.asarray(baseline(state, legal), dtype=float)
        if not np.all(np.isfinite(b)):
            raise SamplingError(f"baseline returned non-finite values {b}")
        vtilde = b.copy()
        vtilde[k] = b[k] + (child_value - b[k]) / xi[k]
        node_value = float(pi @ vtilde)
        key = game.infostate_key(state, actor)
        steps.append(
            OsStep(state, key, actor, legal, k, float(xi[k]), pi, reach_i, reach_c, vtilde, node_value, child_value)
        )
        if actor == i:
            values[key] = (vtilde, node_value)
        return node_value

    root_value = walk(game.initial_state(), 1.0, 1.0)
    steps.reverse()
    return OsTraversal(steps, game.terminal_reward(terminal_holder[0], i), terminal_holder[0], values, touched, root_value)


def _draw_chance(game: Game, state: GameState, sampler):
    if not getattr(game, "enumerable", True) and isinstance(sampler, GeneratorSampler):
        return game.sample_chance(state, sampler.rng)
    outs = game.chance_outcomes(state)
    k = sampler.pick(np.asarray([o.prob for o in outs]))
    return outs[k]


class EsRecord(NamedTuple):
    state: GameState
    key: InfostateKey
    legal: Tuple[Action, ...]
    values: np.ndarray  # per-action sampled values for the traverser
    node_value: float


class EsTraversal(NamedTuple):
    records: List[EsRecord]
    nodes_touched: int
    root_value: float


def es_traverse(game: Game, policy: PolicyFn, traverser: int, rng) -> EsTraversal:
    """External sampling: explore all traverser actions, sample everyone else."""
    sampler = _as_sampler(rng)
    records: List[EsRecord] = []
    touched = 0

    def walk(state: GameState) -> float:
        nonlocal touched
        touched += 1
        kind = game.node_kind(state)
        if kind is NodeKind.TERMINAL:
            return game.terminal_reward(state, traverser)
        if kind is NodeKind.CHANCE:
            return walk(game.apply(state, _draw_chance(game, state, sampler)))
        actor = state.to_act
        legal = tuple(game.legal_actions(state))
        pi = np.asarray(policy(state, actor, legal), dtype=float)
        if actor != traverser:
            k = sampler.pick(pi)
            return walk(game.apply(state, legal[k]))
        vals = np.asarray([walk(game.apply(state, a)) for a in legal])
        node_value = float(pi @ vals)
        records.append(EsRecord(state, game.infostate_key(state, actor), legal, vals, node_value))
        return node_value

    root_value = walk(game.initial_state())
    records.reverse()
    return EsTraversal(records, touched, root_value)
