"""Self-play training loops built on sampled traversals and small networks.

Three algorithms share one driver:

* ``dream``: outcome-sampled traversals with a learned history-value
  baseline. Each iteration the traverser (agent t mod 2) collects
  advantage samples weighted by its inverse sample reach, transitions
  between its consecutive decision points, and opponent policy samples;
  the history-value net trains by expected SARSA on the transition ring
  and the advantage net trains on the reservoir, then joins the model
  archive.
* ``os-sdcfr``: the same loop with a zero baseline and no value net.
  With identical seeds its collected samples match a dream run whose
  value net outputs exactly zero.
* ``es-sdcfr``: external-sampling collection (all traverser actions
  explored, no importance weights), same advantage training and archive.

The archive supports exact average-policy queries: a key's average is
the reach-weighted mixture of every archived model's policy there,
which reproduces the play distribution of sampling one model per hand.

Per-iteration randomness comes from named streams seeded by
(seed, iteration, purpose), so a resumed run consumes exactly the
numbers the uninterrupted run would have.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .buffers import LINEAR, UNIFORM, CircularBuffer, ModelArchive, ReservoirBuffer
from .encoding import (
    NUM_ACTION_SLOTS,
    encode_infostate,
    encode_joint,
    infostate_dim,
    joint_dim,
    legal_mask,
    pad_to_slots,
    take_slots,
)
from .errors import ConfigError, SamplingError, TrainingDivergedError
from .games import (
    Action,
    Game,
    GameState,
    InfostateKey,
    NodeKind,
    infostate_legal,
    make_game,
    own_decision_prefixes,
)
from .nets import (
    MLPParams,
    TrainBatch,
    adam_init,
    adam_step,
    clip_grad_norm,
    default_dims,
    forward,
    loss_and_grads,
    masked_softmax,
    mlp_init,
    softmax_loss_and_grads,
    train,
)
from .sampling import SamplingPolicySpec, es_traverse, os_traverse, zero_baseline
from .tabular import ARGMAX, regret_matching, build_tree

log = logging.getLogger(__name__)

DREAM = "dream"
OS_SDCFR = "os-sdcfr"
ES_SDCFR = "es-sdcfr"
ALGORITHMS = (DREAM, OS_SDCFR, ES_SDCFR)

RESET_ALWAYS = "always"
RESET_NEVER = "never"
RESET_EVERY10 = "every10"
RESET_MODES = (RESET_ALWAYS, RESET_NEVER, RESET_EVERY10)

VANILLA = "vanilla"
WEIGHTINGS = (VANILLA, "linear")

# purpose tags for per-iteration random streams
INIT, COLLECT, QTRAIN, DTRAIN, AVGTRAIN, EVAL = range(6)


def rng_stream(seed: int, iteration: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (iteration, purpose) slot of a run."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(iteration), int(purpose)]))


@dataclass(frozen=True)
class TrainerConfig:
    game: str = "leduc"
    algorithm: str = DREAM
    epsilon: float = 0.5
    traversals: int = 900
    weighting: str = "linear"
    reset_mode: str = RESET_ALWAYS
    iterations: int = 40
    seed: int = 0
    adv_capacity: int = 2_000_000
    q_capacity: int = 200_000
    avg_capacity: int = 2_000_000
    q_batches: int = 1000
    q_batch_size: int = 512
    d_batches: int = 3000
    d_finetune_batches: int = 500
    d_batch_size: int = 2048
    avg_batches: int = 4000
    avg_batch_size: int = 2048
    lr: float = 0.001
    clip: float = 1.0
    hidden: int = 64
    n_hidden: int = 3
    stored_pi: bool = False  # regress value targets on collection-time policies instead

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.reset_mode not in RESET_MODES:
            raise ConfigError(f"reset_mode must be one of {RESET_MODES}, got {self.reset_mode!r}")
        counts = {
            "traversals": self.traversals,
            "iterations": self.iterations,
            "adv_capacity": self.adv_capacity,
            "q_capacity": self.q_capacity,
            "avg_capacity": self.avg_capacity,
            "q_batches": self.q_batches,
            "q_batch_size": self.q_batch_size,
            "d_batches": self.d_batches,
            "d_finetune_batches": self.d_finetune_batches,
            "d_batch_size": self.d_batch_size,
            "avg_batches": self.avg_batches,
            "avg_batch_size": self.avg_batch_size,
            "hidden": self.hidden,
            "n_hidden": self.n_hidden,
        }
        for name, value in counts.items():
            if int(value) <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.algorithm in (DREAM, OS_SDCFR) and not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in (0, 1] for {self.algorithm}, got {self.epsilon}")
        if self.lr <= 0 or self.clip <= 0:
            raise ConfigError("lr and clip must be positive")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


def policy_from_advantages(adv) -> np.ndarray:
    """Positive-part normalization of predicted advantages; all-negative
    vectors put probability one on the largest entry."""
    adv = np.asarray(adv, dtype=float)
    if adv.ndim != 1 or adv.size == 0 or not np.all(np.isfinite(adv)):
        raise TrainingDivergedError(f"advantage head produced unusable values {adv}")
    return regret_matching(adv, mode=ARGMAX)


def masked_regret_matching(values: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Row-wise policy_from_advantages over action slots, masked to legal ones."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    m = np.atleast_2d(masks) > 0
    if np.any(~np.isfinite(np.where(m, values, 0.0))):
        raise TrainingDivergedError("advantage head produced non-finite values")
    pos = np.where(m, np.maximum(values, 0.0), 0.0)
    total = pos.sum(axis=1, keepdims=True)
    arg = np.argmax(np.where(m, values, -np.inf), axis=1)
    fallback = np.zeros_like(pos)
    fallback[np.arange(len(fallback)), arg] = 1.0
    return np.where(total > 0.0, pos / np.where(total > 0.0, total, 1.0), fallback)


class AdvantagePolicy:
    """The current iterate's policy: regret-matched advantage-net outputs."""

    def __init__(self, game: Game, params_by_agent: Sequence[MLPParams]):
        self.game = game
        self.params = params_by_agent

    def __call__(self, state: GameState, actor: int, legal: Sequence[Action]) -> np.ndarray:
        x = encode_infostate(self.game, self.game.infostate_key(state, actor))
        return policy_from_advantages(take_slots(legal, forward(self.params[actor], x)))


class AvgNetPolicy:
    """Softmax policy head over a trained average-policy network."""

    def __init__(self, game: Game, params_by_agent: Sequence[MLPParams]):
        self.game = game
        self.params = params_by_agent

    def __call__(self, state: GameState, actor: int, legal: Sequence[Action]) -> np.ndarray:
        x = encode_infostate(self.game, self.game.infostate_key(state, actor))
        logits = forward(self.params[actor], x)
        probs = masked_softmax(logits[None, :], legal_mask(legal)[None, :])[0]
        return take_slots(legal, probs)


def q_baseline(game: Game, params: MLPParams) -> Callable:
    """History-value net as a baseline source over full-knowledge features."""

    def baseline(state: GameState, legal: Sequence[Action]) -> np.ndarray:
        return take_slots(legal, forward(params, encode_joint(game, state)))

    return baseline


# -- collection ---------------------------------------------------------------


def advantage_fields(game: Game) -> Tuple[Tuple[str, int], ...]:
    return (
        ("features", infostate_dim(game)),
        ("targets", NUM_ACTION_SLOTS),
        ("masks", NUM_ACTION_SLOTS),
        ("weight", 1),
        ("iteration", 1),
    )


def q_transition_fields(game: Game) -> Tuple[Tuple[str, int], ...]:
    return (
        ("joint", joint_dim(game)),
        ("action", 1),
        ("next_joint", joint_dim(game)),
        ("next_infostate", infostate_dim(game)),
        ("next_pi", NUM_ACTION_SLOTS),
        ("next_mask", NUM_ACTION_SLOTS),
        ("reward", 1),
        ("terminal", 1),
    )


def avg_policy_fields(game: Game) -> Tuple[Tuple[str, int], ...]:
    return (
        ("features", infostate_dim(game)),
        ("policy", NUM_ACTION_SLOTS),
        ("masks", NUM_ACTION_SLOTS),
        ("weight", 1),
        ("iteration", 1),
    )


class CollectResult(NamedTuple):
    adv_rows: List[dict]
    q_rows: List[dict]
    avg_rows: List[dict]  # opponent decision points, for average-policy training
    nodes_touched: int


def dream_collect(
    game: Game,
    t: int,
    traverser: int,
    policy,
    baseline,
    traversals: int,
    epsilon: float,
    rng,
    collect_q: bool = True,
    collect_avg: bool = True,
) -> CollectResult:
    """Run outcome-sampled trajectories and turn them into training rows.

    Advantage rows hold the sampled immediate advantages at the
    traverser's decision points with weight 1/(own sample reach);
    transition rows connect each of those points to the traverser's
    next one (or the terminal), carrying the reward realized between
    them, which is zero everywhere except at the end of the game.
    """
    spec = SamplingPolicySpec(traverser, epsilon)
    adv_rows: List[dict] = []
    q_rows: List[dict] = []
    avg_rows: List[dict] = []
    nodes = 0
    s_dim = NUM_ACTION_SLOTS
    for _ in range(traversals):
        tr = os_traverse(game, policy, spec, baseline, rng)
        nodes += tr.nodes_touched
        mine = []
        for step in tr.steps:
            if step.actor == traverser:
                mine.append(step)
                adv_rows.append(
                    dict(
                        features=encode_infostate(game, step.key),
                        targets=pad_to_slots(step.legal, step.vtilde - step.node_value),
                        masks=legal_mask(step.legal),
                        weight=1.0 / step.reach_i,
                        iteration=float(t),
                    )
                )
            elif collect_avg:
                avg_rows.append(
                    dict(
                        features=encode_infostate(game, step.key),
                        policy=pad_to_slots(step.legal, step.pi),
                        masks=legal_mask(step.legal),
                        weight=1.0 / (step.reach_i * step.chance_reach),
                        iteration=float(t),
                    )
                )
        if not collect_q:
            continue
        for here, nxt in zip(mine, mine[1:]):
            q_rows.append(
                dict(
                    joint=encode_joint(game, here.state),
                    action=float(int(here.legal[here.action_index])),
                    next_joint=encode_joint(game, nxt.state),
                    next_infostate=encode_infostate(game, nxt.key),
                    next_pi=pad_to_slots(nxt.legal, nxt.pi),
                    next_mask=legal_mask(nxt.legal),
                    reward=0.0,
                    terminal=0.0,
                )
            )
        if mine:
            last = mine[-1]
            joint = encode_joint(game, last.state)
            q_rows.append(
                dict(
                    joint=joint,
                    action=float(int(last.legal[last.action_index])),
                    next_joint=np.zeros_like(joint),
                    next_infostate=np.zeros(infostate_dim(game)),
                    next_pi=np.zeros(s_dim),
                    next_mask=np.zeros(s_dim),
                    reward=tr.terminal_reward,
                    terminal=1.0,
                )
            )
    return CollectResult(adv_rows, q_rows, avg_rows, nodes)


def es_collect(game: Game, t: int, traverser: int, policy, traversals: int, rng):
    """External-sampling advantage rows: unweighted, all actions explored."""
    rows: List[dict] = []
    nodes = 0
    for _ in range(traversals):
        tr = es_traverse(game, policy, traverser, rng)
        nodes += tr.nodes_touched
        for rec in tr.records:
            rows.append(
                dict(
                    features=encode_infostate(game, rec.key),
                    targets=pad_to_slots(rec.legal, rec.values - rec.node_value),
                    masks=legal_mask(rec.legal),
                    weight=1.0,
                    iteration=float(t),
                )
            )
    return rows, nodes


# -- value-net targets --------------------------------------------------------


class QTransition(NamedTuple):
    """One segment between a traverser decision point and the next (or terminal)."""

    joint: np.ndarray
    action: int
    next_joint: np.ndarray
    next_infostate: np.ndarray
    next_pi: np.ndarray
    next_mask: np.ndarray
    reward: float
    terminal: bool


PiSource = Union[MLPParams, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _pi_rows(source: PiSource, features: np.ndarray, masks: np.ndarray) -> np.ndarray:
    if isinstance(source, MLPParams):
        return masked_regret_matching(forward(source, features), masks)
    return np.atleast_2d(np.asarray(source(features, masks), dtype=float))


def q_target(tr: QTransition, pi_source: PiSource, q_params: MLPParams) -> float:
    """Expected-SARSA regression target for one transition."""
    if tr.terminal:
        return float(tr.reward)
    pi = _pi_rows(pi_source, tr.next_infostate[None, :], tr.next_mask[None, :])[0]
    q = forward(q_params, tr.next_joint)
    return float(tr.reward + np.sum(pi * q * (np.asarray(tr.next_mask) > 0)))


def _q_targets_batch(
    q_params: MLPParams,
    pi_source: PiSource,
    reward: np.ndarray,
    terminal: np.ndarray,
    next_joint: np.ndarray,
    next_infostate: np.ndarray,
    next_pi: np.ndarray,
    next_mask: np.ndarray,
    stored_pi: bool,
) -> np.ndarray:
    out = reward.copy()
    live = terminal < 0.5
    if np.any(live):
        if stored_pi:
            pi = next_pi[live]
        else:
            pi = _pi_rows(pi_source, next_infostate[live], next_mask[live])
        q = forward(q_params, next_joint[live])
        out[live] += np.sum(pi * q * (next_mask[live] > 0), axis=1)
    return out


def train_q(
    q_params: MLPParams,
    pi_source: PiSource,
    buf: CircularBuffer,
    n_batches: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    clip: float = 1.0,
    stored_pi: bool = False,
) -> Tuple[MLPParams, float]:
    """Fine-tune the history-value net by expected SARSA on the transition ring.

    Bootstrap values come from the live parameters, recomputed every
    minibatch. Returns the updated net and the last minibatch loss.
    """
    if len(buf) == 0:
        log.warning("empty transition buffer: skipping value training")
        return q_params, float("nan")
    state = adam_init(q_params)
    loss = float("nan")
    for _ in range(n_batches):
        idx = rng.integers(0, len(buf), size=batch_size)
        action = buf.column("action", idx).ravel().astype(int)
        targets = _q_targets_batch(
            q_params,
            pi_source,
            buf.column("reward", idx).ravel(),
            buf.column("terminal", idx).ravel(),
            buf.column("next_joint", idx),
            buf.column("next_infostate", idx),
            buf.column("next_pi", idx),
            buf.column("next_mask", idx),
            stored_pi,
        )
        rows = np.arange(batch_size)
        tmat = np.zeros((batch_size, NUM_ACTION_SLOTS))
        tmat[rows, action] = targets
        mmat = np.zeros((batch_size, NUM_ACTION_SLOTS))
        mmat[rows, action] = 1.0
        batch = TrainBatch(buf.column("joint", idx), tmat, mmat, np.ones(batch_size))
        loss, grads = loss_and_grads(q_params, batch)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"value-net loss became {loss}")
        grads, _ = clip_grad_norm(grads, clip)
        q_params, state = adam_step(q_params, state, grads, lr)
    return q_params, float(loss)


# -- buffer views -------------------------------------------------------------


class AdvantageView:
    """Batch source over an advantage reservoir; linear mode scales loss
    weights by the sample's iteration number."""

    def __init__(self, buf: ReservoirBuffer, linear: bool):
        self.buf = buf
        self.linear = linear

    def __len__(self) -> int:
        return len(self.buf)

    def batch(self, idx: np.ndarray) -> TrainBatch:
        w = self.buf.column("weight", idx).ravel()
        if self.linear:
            w = w * self.buf.column("iteration", idx).ravel()
        return TrainBatch(
            self.buf.column("features", idx),
            self.buf.column("targets", idx),
            self.buf.column("masks", idx),
            w,
        )


class AvgPolicyView:
    def __init__(self, buf: ReservoirBuffer):
        self.buf = buf

    def __len__(self) -> int:
        return len(self.buf)

    def batch(self, idx: np.ndarray) -> TrainBatch:
        return TrainBatch(
            self.buf.column("features", idx),
            self.buf.column("policy", idx),
            self.buf.column("masks", idx),
            self.buf.column("weight", idx).ravel(),
        )


def train_avg_net(
    params: MLPParams,
    buf: ReservoirBuffer,
    n_batches: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    clip: float = 1.0,
) -> MLPParams:
    """Fit the softmax policy head to sampled policy vectors."""
    if len(buf) == 0:
        raise ValueError("average-policy buffer is empty")
    result = train(
        params,
        AvgPolicyView(buf),
        n_batches,
        batch_size,
        lr,
        rng,
        loss_fn=softmax_loss_and_grads,
        clip=clip,
    )
    return result.params


# -- the iteration driver -----------------------------------------------------


@dataclass
class IterationReport:
    iteration: int
    traverser: int
    nodes_touched: int
    adv_sizes: Tuple[int, int]
    q_sizes: Tuple[int, int]
    avg_sizes: Tuple[int, int]
    q_loss: float
    d_loss: float
    wall_time: float


def _reset_schedule(mode: str, t: int, scratch: int, finetune: int) -> Tuple[bool, int]:
    if mode == RESET_ALWAYS:
        return True, scratch
    if mode == RESET_NEVER:
        return False, finetune
    if t % 10 == 0:
        return True, scratch
    return False, finetune


class DreamTrainer:
    """Owns the nets, buffers, and archive of one training run."""

    def __init__(self, config: TrainerConfig, archive_dir: Optional[str] = None):
        config.validate()
        self.config = config
        self.game = make_game(config.game)
        rng = rng_stream(config.seed, 0, INIT)
        adv_dims = default_dims(infostate_dim(self.game), config.hidden, config.n_hidden)
        q_dims = default_dims(joint_dim(self.game), config.hidden, config.n_hidden)
        self.adv_nets = [mlp_init(adv_dims, rng, config.game) for _ in range(2)]
        self.q_nets = [mlp_init(q_dims, rng, config.game) for _ in range(2)]
        self.adv_buffers = [
            ReservoirBuffer(config.adv_capacity, advantage_fields(self.game)) for _ in range(2)
        ]
        self.q_buffers = [
            CircularBuffer(config.q_capacity, q_transition_fields(self.game)) for _ in range(2)
        ]
        self.avg_buffers = [
            ReservoirBuffer(config.avg_capacity, avg_policy_fields(self.game)) for _ in range(2)
        ]
        self.archive = ModelArchive(2, archive_dir)
        self.avg_nets: List[Optional[MLPParams]] = [None, None]
        self.t = 0  # last completed iteration

    def policy(self) -> AdvantagePolicy:
        return AdvantagePolicy(self.game, self.adv_nets)

    def iteration(self) -> IterationReport:
        cfg = self.config
        t = self.t + 1
        i = t % 2
        started = time.perf_counter()
        rng_c = rng_stream(cfg.seed, t, COLLECT)
        policy = self.policy()
        if cfg.algorithm == ES_SDCFR:
            adv_rows, nodes = es_collect(self.game, t, i, policy, cfg.traversals, rng_c)
            q_rows, avg_rows = [], []
        else:
            baseline = (
                q_baseline(self.game, self.q_nets[i]) if cfg.algorithm == DREAM else zero_baseline
            )
            adv_rows, q_rows, avg_rows, nodes = dream_collect(
                self.game,
                t,
                i,
                policy,
                baseline,
                cfg.traversals,
                cfg.epsilon,
                rng_c,
                collect_q=cfg.algorithm == DREAM,
            )
        for row in adv_rows:
            self.adv_buffers[i].add(rng_c, **row)
        for row in q_rows:
            self.q_buffers[i].add(**row)
        for row in avg_rows:
            self.avg_buffers[1 - i].add(rng_c, **row)

        q_loss = float("nan")
        if cfg.algorithm == DREAM:
            self.q_nets[i], q_loss = train_q(
                self.q_nets[i],
                self.adv_nets[i],
                self.q_buffers[i],
                cfg.q_batches,
                cfg.q_batch_size,
                cfg.lr,
                rng_stream(cfg.seed, t, QTRAIN),
                clip=cfg.clip,
                stored_pi=cfg.stored_pi,
            )
        reset, n_batches = _reset_schedule(
            cfg.reset_mode, t, cfg.d_batches, cfg.d_finetune_batches
        )
        result = train(
            self.adv_nets[i],
            AdvantageView(self.adv_buffers[i], cfg.weighting == LINEAR),
            n_batches,
            cfg.d_batch_size,
            cfg.lr,
            rng_stream(cfg.seed, t, DTRAIN),
            reset=reset,
            clip=cfg.clip,
        )
        self.adv_nets[i] = result.params
        self.archive.append(i, t, result.params)
        self.t = t
        return IterationReport(
            iteration=t,
            traverser=i,
            nodes_touched=nodes,
            adv_sizes=(len(self.adv_buffers[0]), len(self.adv_buffers[1])),
            q_sizes=(len(self.q_buffers[0]), len(self.q_buffers[1])),
            avg_sizes=(len(self.avg_buffers[0]), len(self.avg_buffers[1])),
            q_loss=q_loss,
            d_loss=result.final_loss,
            wall_time=time.perf_counter() - started,
        )

    def fit_avg_nets(self) -> None:
        """Train both agents' average-policy nets from their sample reservoirs."""
        cfg = self.config
        dims = default_dims(infostate_dim(self.game), cfg.hidden, cfg.n_hidden)
        rng = rng_stream(cfg.seed, self.t, AVGTRAIN)
        for agent in range(2):
            params = mlp_init(dims, rng, cfg.game)
            self.avg_nets[agent] = train_avg_net(
                params,
                self.avg_buffers[agent],
                cfg.avg_batches,
                cfg.avg_batch_size,
                cfg.lr,
                rng,
                clip=cfg.clip,
            )


# -- archive averaging --------------------------------------------------------


def average_policy_at(
    game: Game,
    archive: ModelArchive,
    agent: int,
    key: InfostateKey,
    weighting: str = UNIFORM,
) -> np.ndarray:
    """Average policy across archived models at one infostate.

    Each model contributes its policy weighted by the agent's own reach
    probability of the key under that model (times the iteration number
    in linear mode). All-zero total reach falls back to uniform.
    """
    models = archive.models(agent)
    if not models:
        raise SamplingError(f"archive holds no models for agent {agent}")
    prefixes = own_decision_prefixes(game, key)
    legal = infostate_legal(game, key)
    num = np.zeros(len(legal))
    den = 0.0
    for t, params in models:
        w = float(t) if weighting == LINEAR else 1.0
        reach = 1.0
        for pkey, plegal, act in prefixes:
            probs = policy_from_advantages(
                take_slots(plegal, forward(params, encode_infostate(game, pkey)))
            )
            reach *= float(probs[plegal.index(act)])
        pi = policy_from_advantages(take_slots(legal, forward(params, encode_infostate(game, key))))
        num += w * reach * pi
        den += w * reach
    if den <= 0.0:
        return np.full(len(legal), 1.0 / len(legal))
    return num / den


def archive_average_profile(
    game: Game, archive: ModelArchive, weighting: str = UNIFORM
) -> Dict[InfostateKey, np.ndarray]:
    """Tabulate average_policy_at over every reachable infostate at once."""
    tree = build_tree(game)
    keys_by_agent: List[Dict[InfostateKey, tuple]] = [{}, {}]
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.children:
            stack.extend(node.children)
        if node.key is not None:
            keys_by_agent[node.actor].setdefault(node.key, node.legal)
    profile: Dict[InfostateKey, np.ndarray] = {}
    for agent in (0, 1):
        if not archive.models(agent):
            continue
        keys = list(keys_by_agent[agent])
        legals = [keys_by_agent[agent][k] for k in keys]
        feats = np.stack([encode_infostate(game, k) for k in keys])
        masks = np.stack([legal_mask(l) for l in legals])
        index = {k: j for j, k in enumerate(keys)}
        prefix_lists = [own_decision_prefixes(game, k) for k in keys]
        nums = [np.zeros(len(l)) for l in legals]
        dens = np.zeros(len(keys))
        for t, params in archive.models(agent):
            w = float(t) if weighting == LINEAR else 1.0
            pis = masked_regret_matching(forward(params, feats), masks)
            for j in range(len(keys)):
                reach = 1.0
                for pkey, _plegal, act in prefix_lists[j]:
                    reach *= pis[index[pkey], int(act)]
                nums[j] += w * reach * take_slots(legals[j], pis[j])
                dens[j] += w * reach
        for j, k in enumerate(keys):
            if dens[j] <= 0.0:
                profile[k] = np.full(len(legals[j]), 1.0 / len(legals[j]))
            else:
                profile[k] = nums[j] / dens[j]
    return profile


class ArchiveAveragePolicy:
    """Plays the archive's average policy, computed on demand per infostate."""

    def __init__(self, game: Game, archive: ModelArchive, weighting: str = UNIFORM):
        self.game = game
        self.archive = archive
        self.weighting = weighting
        self._cache: Dict[InfostateKey, np.ndarray] = {}

    def __call__(self, state: GameState, actor: int, legal: Sequence[Action]) -> np.ndarray:
        # an agent with nothing archived yet plays uniform, matching the
        # missing-key fallback the tabulated average gets from TabularPolicy
        if not self.archive.models(actor):
            return np.full(len(legal), 1.0 / len(legal))
        key = self.game.infostate_key(state, actor)
        probs = self._cache.get(key)
        if probs is None:
            probs = average_policy_at(self.game, self.archive, actor, key, self.weighting)
            self._cache[key] = probs
        return probs


# -- checkpoints --------------------------------------------------------------


def _put_net(blobs: Dict[str, np.ndarray], prefix: str, params: MLPParams) -> None:
    for j, (w, b) in enumerate(zip(params.weights, params.biases)):
        blobs[f"{prefix}_w{j}"] = w
        blobs[f"{prefix}_b{j}"] = b


def _get_net(z, prefix: str, game_id: str) -> MLPParams:
    weights, biases = [], []
    j = 0
    while f"{prefix}_w{j}" in z:
        weights.append(np.array(z[f"{prefix}_w{j}"]))
        biases.append(np.array(z[f"{prefix}_b{j}"]))
        j += 1
    dims = (weights[0].shape[0],) + tuple(w.shape[1] for w in weights)
    return MLPParams(dims, weights, biases, game_id)


def save_checkpoint(trainer: DreamTrainer, path) -> None:
    """Full training state except the archive, which lives in its directory."""
    blobs: Dict[str, np.ndarray] = {
        "config": np.frombuffer(
            json.dumps(asdict(trainer.config), sort_keys=True).encode(), dtype=np.uint8
        ).copy(),
        "t": np.asarray(trainer.t),
    }
    for i in range(2):
        _put_net(blobs, f"adv{i}", trainer.adv_nets[i])
        _put_net(blobs, f"q{i}", trainer.q_nets[i])
        for name, arr in trainer.adv_buffers[i].to_state().items():
            blobs[f"advbuf{i}_{name}"] = arr
        for name, arr in trainer.q_buffers[i].to_state().items():
            blobs[f"qbuf{i}_{name}"] = arr
        for name, arr in trainer.avg_buffers[i].to_state().items():
            blobs[f"avgbuf{i}_{name}"] = arr
    np.savez(path, **blobs)


def load_checkpoint(path, archive: Optional[ModelArchive] = None) -> DreamTrainer:
    """Rebuild a trainer from save_checkpoint output; resumes bit-exactly."""
    z = np.load(path)
    config = TrainerConfig(**json.loads(bytes(z["config"]).decode()))
    trainer = DreamTrainer(config)
    trainer.t = int(z["t"])
    for i in range(2):
        trainer.adv_nets[i] = _get_net(z, f"adv{i}", config.game)
        trainer.q_nets[i] = _get_net(z, f"q{i}", config.game)
        trainer.adv_buffers[i].from_state(
            {k: z[f"advbuf{i}_{k}"] for k in ("data", "size", "counter")}
        )
        trainer.q_buffers[i].from_state(
            {k: z[f"qbuf{i}_{k}"] for k in ("data", "size", "cursor")}
        )
        trainer.avg_buffers[i].from_state(
            {k: z[f"avgbuf{i}_{k}"] for k in ("data", "size", "counter")}
        )
    if archive is not None:
        trainer.archive = archive
    return trainer
