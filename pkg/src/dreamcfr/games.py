"""Two-player zero-sum betting games with a shared sequential-betting engine.

Three games are provided, all limit poker variants played heads-up:

* ``kuhn``: 3-card deck (J/Q/K, one suit), one card each, both players
  ante 100 chips, one betting round with a 100-chip bet and at most one
  raise. Higher card wins the showdown.
* ``leduc``: 6-card deck (J/Q/K in two suits), one card each, both
  players ante 50 chips, two betting rounds with at most two raises per
  round. Raises add 100 chips in round one and 200 in round two. One
  public card is revealed between rounds; a player whose card matches
  the public rank wins, otherwise the higher rank wins and equal ranks
  split the pot.
* ``fhp``: 52-card deck, two private cards each. Player 1 posts a
  50-chip blind, player 2 a 100-chip blind. Two betting rounds with at
  most three raises of 100 chips each. Player 1 acts first in round one,
  player 2 in round two. Three community cards are revealed between
  rounds; the best five-card hand (two private plus the three community
  cards) wins.

All games share one move grammar. A player facing more chips than they
have contributed may fold; calling matches the opponent's contribution
(a check when nothing is outstanding); raising adds a fixed amount on
top of the call. A betting round ends when a player calls and both
players have acted this round; forced antes/blinds do not count as
having acted. Folding ends the game immediately and the folder forfeits
their contribution. Rewards are chip deltas and sum to zero.

Chance is modelled explicitly: the root node deals all private cards as
a single outcome (one ordered pair of hands), and each later reveal is
one outcome containing every new public card. States are immutable;
``apply`` returns a new state and never mutates its argument.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from math import comb
from typing import List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np

from .cards import Card, five_card_rank, full_deck, kuhn_deck, leduc_deck
from .errors import IllegalActionError, InvalidStateError, WrongNodeError

CHANCE = -1
TERMINAL = -2


class Action(IntEnum):
    """Move tags; also the fixed slot order used by network heads."""

    FOLD = 0
    CALL = 1
    RAISE = 2

    def __repr__(self) -> str:
        return self.name


class NodeKind(Enum):
    DECISION = "decision"
    CHANCE = "chance"
    TERMINAL = "terminal"


class ChanceOutcome(NamedTuple):
    """One chance event: ``kind`` is 'deal' or 'board'.

    For a deal, ``cards`` is (seat-0 hand, seat-1 hand), each hand a
    sorted tuple. For a board reveal it is the sorted tuple of newly
    revealed cards. ``prob`` is the outcome's probability.
    """

    kind: str
    cards: tuple
    prob: float


class InfostateKey(NamedTuple):
    """What one agent has observed: own cards, public cards, all actions.

    Hashable and totally ordered. ``bets`` is a tuple of per-round
    action tuples, so the round structure is unambiguous.
    """

    agent: int
    private: Tuple[Card, ...]
    board: Tuple[Card, ...]
    bets: Tuple[Tuple[Action, ...], ...]


@dataclass(frozen=True, slots=True)
class GameState:
    """Immutable game state. ``to_act`` is a seat, CHANCE, or TERMINAL."""

    private: tuple  # per-seat hands once dealt, () before the deal
    board: Tuple[Card, ...]
    rnd: int
    bets: Tuple[Tuple[Action, ...], ...]
    contribs: Tuple[int, int]
    raises: int
    to_act: int
    folded: Optional[int] = None


class Game(Protocol):
    """Structural interface each game implements (and toy test games may too)."""

    id: str

    def initial_state(self) -> GameState: ...

    def node_kind(self, state: GameState) -> NodeKind: ...

    def legal_actions(self, state: GameState) -> List[Action]: ...

    def chance_outcomes(self, state: GameState) -> List[ChanceOutcome]: ...

    def sample_chance(self, state: GameState, rng: np.random.Generator) -> ChanceOutcome: ...

    def apply(self, state: GameState, move) -> GameState: ...

    def terminal_reward(self, state: GameState, agent: int) -> float: ...

    def infostate_key(self, state: GameState, agent: int) -> InfostateKey: ...


class SequentialPokerGame:
    """Shared betting engine; subclasses fix the deck and showdown rule.

    Parameters mirror the rules table: per-round bet sizes and raise
    caps, cards revealed before each round, forced initial contributions
    and the first seat to act per round.
    """

    id: str = ""
    enumerable: bool = True  # small enough for full tree walks

    def __init__(
        self,
        deck: Sequence[Card],
        n_private: int,
        board_counts: Tuple[int, ...],
        bet_sizes: Tuple[int, ...],
        raise_caps: Tuple[int, ...],
        initial_contribs: Tuple[int, int],
        first_to_act: Tuple[int, ...],
        big_blind: int = 100,
    ):
        self.deck = tuple(deck)
        self.n_private = n_private
        self.board_counts = board_counts
        self.bet_sizes = bet_sizes
        self.raise_caps = raise_caps
        self.initial_contribs = initial_contribs
        self.first_to_act = first_to_act
        self.big_blind = big_blind
        self.n_rounds = len(bet_sizes)
        # largest possible single-seat contribution, used to normalize features
        self.max_contrib = max(initial_contribs) + sum(
            c * b for c, b in zip(raise_caps, bet_sizes)
        )

    # -- node taxonomy ----------------------------------------------------

    def initial_state(self) -> GameState:
        return GameState(
            private=(),
            board=(),
            rnd=0,
            bets=(),
            contribs=self.initial_contribs,
            raises=0,
            to_act=CHANCE,
        )

    def node_kind(self, state: GameState) -> NodeKind:
        self._check_state(state)
        if state.to_act == TERMINAL:
            return NodeKind.TERMINAL
        if state.to_act == CHANCE:
            return NodeKind.CHANCE
        return NodeKind.DECISION

    def _check_state(self, state: GameState) -> None:
        if state.to_act not in (0, 1, CHANCE, TERMINAL):
            raise InvalidStateError(f"bad to_act {state.to_act!r}")
        if min(state.contribs) < 0:
            raise InvalidStateError(f"negative contribution {state.contribs}")
        if not 0 <= state.rnd < self.n_rounds:
            raise InvalidStateError(f"round {state.rnd} out of range")
        if state.raises > self.raise_caps[state.rnd]:
            raise InvalidStateError(
                f"{state.raises} raises exceed cap {self.raise_caps[state.rnd]}"
            )

    # -- decisions ---------------------------------------------------------

    def legal_actions(self, state: GameState) -> List[Action]:
        if self.node_kind(state) is not NodeKind.DECISION:
            raise WrongNodeError("legal_actions at a non-decision node")
        me = state.to_act
        facing = state.contribs[1 - me] - state.contribs[me]
        acts: List[Action] = []
        if facing > 0:
            acts.append(Action.FOLD)
        acts.append(Action.CALL)
        if state.raises < self.raise_caps[state.rnd]:
            acts.append(Action.RAISE)
        return acts

    def apply(self, state: GameState, move) -> GameState:
        kind = self.node_kind(state)
        if kind is NodeKind.TERMINAL:
            raise WrongNodeError("apply at a terminal node")
        if kind is NodeKind.CHANCE:
            if not isinstance(move, ChanceOutcome):
                raise IllegalActionError(f"chance node needs a ChanceOutcome, got {move!r}")
            return self._apply_chance(state, move)
        if not isinstance(move, Action):
            raise IllegalActionError(f"decision node needs an Action, got {move!r}")
        if move not in self.legal_actions(state):
            raise IllegalActionError(f"{move!r} is not legal here")
        return self._apply_action(state, move)

    def _apply_chance(self, state: GameState, outcome: ChanceOutcome) -> GameState:
        if outcome.kind == "deal":
            if state.private:
                raise IllegalActionError("cards already dealt")
            return replace(
                state,
                private=outcome.cards,
                bets=((),),
                to_act=self.first_to_act[0],
            )
        nxt = state.rnd + 1
        return replace(
            state,
            board=state.board + outcome.cards,
            rnd=nxt,
            bets=state.bets + ((),),
            raises=0,
            to_act=self.first_to_act[nxt],
        )

    def _apply_action(self, state: GameState, action: Action) -> GameState:
        me = state.to_act
        opp = 1 - me
        facing = state.contribs[opp] - state.contribs[me]
        bets = state.bets[:-1] + (state.bets[-1] + (action,),)

        if action is Action.FOLD:
            return replace(state, bets=bets, to_act=TERMINAL, folded=me)

        if action is Action.CALL:
            contribs = list(state.contribs)
            contribs[me] += facing
            acted_before = len(state.bets[state.rnd]) > 0
            if acted_before:  # a call after any action closes the round
                if state.rnd == self.n_rounds - 1:
                    to_act = TERMINAL
                else:
                    to_act = CHANCE
                return replace(state, bets=bets, contribs=tuple(contribs), to_act=to_act)
            return replace(state, bets=bets, contribs=tuple(contribs), to_act=opp)

        contribs = list(state.contribs)
        contribs[me] = state.contribs[opp] + self.bet_sizes[state.rnd]
        return replace(
            state,
            bets=bets,
            contribs=tuple(contribs),
            raises=state.raises + 1,
            to_act=opp,
        )

    # -- chance ------------------------------------------------------------

    def chance_outcomes(self, state: GameState) -> List[ChanceOutcome]:
        """Every outcome at this chance node with its probability.

        The root deal enumerates ordered pairs of hands; this is large
        for the 52-card game, where sampling should be used instead.
        """
        if self.node_kind(state) is not NodeKind.CHANCE:
            raise WrongNodeError("chance_outcomes at a non-chance node")
        if not state.private:
            k = self.n_private
            n_deals = comb(len(self.deck), k) * comb(len(self.deck) - k, k)
            p = 1.0 / n_deals
            outs = []
            for h0 in itertools.combinations(self.deck, k):
                rest = [c for c in self.deck if c not in h0]
                for h1 in itertools.combinations(rest, k):
                    outs.append(ChanceOutcome("deal", (h0, h1), p))
            return outs
        used = set(state.board) | {c for hand in state.private for c in hand}
        remaining = [c for c in self.deck if c not in used]
        k = self.board_counts[state.rnd + 1]
        p = 1.0 / comb(len(remaining), k)
        return [
            ChanceOutcome("board", combo, p)
            for combo in itertools.combinations(remaining, k)
        ]

    def sample_chance(self, state: GameState, rng: np.random.Generator) -> ChanceOutcome:
        """Draw one outcome uniformly without materializing the outcome list."""
        if self.node_kind(state) is not NodeKind.CHANCE:
            raise WrongNodeError("sample_chance at a non-chance node")
        if not state.private:
            k = self.n_private
            picks = rng.choice(len(self.deck), size=2 * k, replace=False)
            h0 = tuple(sorted(self.deck[i] for i in picks[:k]))
            h1 = tuple(sorted(self.deck[i] for i in picks[k:]))
            n_deals = comb(len(self.deck), k) * comb(len(self.deck) - k, k)
            return ChanceOutcome("deal", (h0, h1), 1.0 / n_deals)
        used = set(state.board) | {c for hand in state.private for c in hand}
        remaining = [c for c in self.deck if c not in used]
        k = self.board_counts[state.rnd + 1]
        picks = rng.choice(len(remaining), size=k, replace=False)
        combo = tuple(sorted(remaining[i] for i in picks))
        return ChanceOutcome("board", combo, 1.0 / comb(len(remaining), k))

    # -- payoffs -----------------------------------------------------------

    def terminal_reward(self, state: GameState, agent: int) -> float:
        if self.node_kind(state) is not NodeKind.TERMINAL:
            raise WrongNodeError("terminal_reward at a non-terminal node")
        if state.folded is not None:
            lost = state.contribs[state.folded]
            return float(-lost if agent == state.folded else lost)
        winner = self._showdown_winner(state)
        if winner is None:
            return 0.0
        pot_share = state.contribs[1 - winner]  # equal contributions at showdown
        return float(pot_share if agent == winner else -pot_share)

    def _showdown_winner(self, state: GameState) -> Optional[int]:
        raise NotImplementedError

    # -- observations ------------------------------------------------------

    def infostate_key(self, state: GameState, agent: int) -> InfostateKey:
        if not state.private:
            raise WrongNodeError("no infostate before the deal")
        return InfostateKey(agent, state.private[agent], state.board, state.bets)

    def joint_key(self, state: GameState) -> tuple:
        """Identity of the full history: both hands, board, all actions."""
        return (state.private, state.board, state.bets)


class KuhnGame(SequentialPokerGame):
    id = "kuhn"

    def __init__(self):
        super().__init__(
            deck=kuhn_deck(),
            n_private=1,
            board_counts=(0,),
            bet_sizes=(100,),
            raise_caps=(1,),
            initial_contribs=(100, 100),
            first_to_act=(0,),
        )

    def _showdown_winner(self, state: GameState) -> Optional[int]:
        r0, r1 = state.private[0][0].rank, state.private[1][0].rank
        return 0 if r0 > r1 else 1


class LeducGame(SequentialPokerGame):
    id = "leduc"

    def __init__(self):
        super().__init__(
            deck=leduc_deck(),
            n_private=1,
            board_counts=(0, 1),
            bet_sizes=(100, 200),
            raise_caps=(2, 2),
            initial_contribs=(50, 50),
            first_to_act=(0, 0),
        )

    def _showdown_winner(self, state: GameState) -> Optional[int]:
        public = state.board[0].rank
        r0, r1 = state.private[0][0].rank, state.private[1][0].rank
        if r0 == public:
            return 0
        if r1 == public:
            return 1
        if r0 == r1:
            return None
        return 0 if r0 > r1 else 1


class FhpGame(SequentialPokerGame):
    """Limit hold'em cut after the flop round; too large to enumerate."""

    id = "fhp"
    enumerable = False

    def __init__(self):
        super().__init__(
            deck=full_deck(),
            n_private=2,
            board_counts=(0, 3),
            bet_sizes=(100, 100),
            raise_caps=(3, 3),
            initial_contribs=(50, 100),
            first_to_act=(0, 1),
        )

    def _showdown_winner(self, state: GameState) -> Optional[int]:
        r0 = five_card_rank(state.private[0] + state.board)
        r1 = five_card_rank(state.private[1] + state.board)
        if r0 == r1:
            return None
        return 0 if r0 > r1 else 1


_GAMES = {"kuhn": KuhnGame, "leduc": LeducGame, "fhp": FhpGame}


def make_game(name: str) -> SequentialPokerGame:
    try:
        return _GAMES[name]()
    except KeyError:
        raise ValueError(f"unknown game {name!r}; choose from {sorted(_GAMES)}") from None


def cumulative_board(game: SequentialPokerGame, rnd: int) -> int:
    """Number of public cards visible during betting round ``rnd``."""
    return sum(game.board_counts[: rnd + 1])


class BettingStep(NamedTuple):
    actor: int
    legal: Tuple[Action, ...]
    action: Action
    rnd: int


def replay_betting(game: SequentialPokerGame, bets) -> List[BettingStep]:
    """Re-derive actors and legal moves for an action record, cards unseen.

    Betting structure is card-independent: seats alternate from the
    round's first actor and legality depends only on contributions and
    the raise count.
    """
    contribs = list(game.initial_contribs)
    steps: List[BettingStep] = []
    for rnd, round_actions in enumerate(bets):
        actor = game.first_to_act[rnd]
        raises = 0
        for act in round_actions:
            facing = contribs[1 - actor] - contribs[actor]
            legal: List[Action] = []
            if facing > 0:
                legal.append(Action.FOLD)
            legal.append(Action.CALL)
            if raises < game.raise_caps[rnd]:
                legal.append(Action.RAISE)
            steps.append(BettingStep(actor, tuple(legal), act, rnd))
            if act is Action.RAISE:
                contribs[actor] = contribs[1 - actor] + game.bet_sizes[rnd]
                raises += 1
            elif act is Action.CALL:
                contribs[actor] = contribs[1 - actor]
            actor = 1 - actor
    return steps


def own_decision_prefixes(
    game: SequentialPokerGame, key: InfostateKey
) -> List[Tuple[InfostateKey, Tuple[Action, ...], Action]]:
    """The agent's earlier decision points along ``key``'s action record.

    Returns (prefix key, legal actions there, action chosen) triples in
    order. Used to reconstruct an agent's reach probability for a key
    from that agent's policy alone.
    """
    out = []
    steps = replay_betting(game, key.bets)
    taken: List[Tuple[Action, ...]] = [()]
    for step in steps:
        while len(taken) <= step.rnd:
            taken.append(())
        if step.actor == key.agent:
            prefix = InfostateKey(
                key.agent,
                key.private,
                key.board[: cumulative_board(game, step.rnd)],
                tuple(taken),
            )
            out.append((prefix, step.legal, step.action))
        taken[step.rnd] = taken[step.rnd] + (step.action,)
    return out


def infostate_legal(game: SequentialPokerGame, key: InfostateKey) -> Tuple[Action, ...]:
    """Legal actions at the decision the key's agent is facing."""
    contribs = list(game.initial_contribs)
    actor = game.first_to_act[0]
    raises = 0
    for rnd, round_actions in enumerate(key.bets):
        actor = game.first_to_act[rnd]
        raises = 0
        for act in round_actions:
            if act is Action.RAISE:
                contribs[actor] = contribs[1 - actor] + game.bet_sizes[rnd]
                raises += 1
            elif act is Action.CALL:
                contribs[actor] = contribs[1 - actor]
            actor = 1 - actor
    if actor != key.agent:
        raise InvalidStateError(f"agent {key.agent} is not to act after {key.bets}")
    legal: List[Action] = []
    if contribs[1 - actor] - contribs[actor] > 0:
        legal.append(Action.FOLD)
    legal.append(Action.CALL)
    if raises < game.raise_caps[len(key.bets) - 1]:
        legal.append(Action.RAISE)
    return tuple(legal)


class FixedCardsGame:
    """A game with every chance event pinned to predetermined cards.

    Betting and payoffs are untouched; only the chance distributions
    collapse to probability one on the given deal and board cards.
    Useful for conditioning estimators on a single deal.
    """

    enumerable = True

    def __init__(self, base: SequentialPokerGame, deal, boards: Sequence[Tuple[Card, ...]] = ()):
        hands = tuple(tuple(sorted(h)) for h in deal)
        flat = [c for h in hands for c in h] + [c for b in boards for c in b]
        if len(set(flat)) != len(flat) or any(c not in base.deck for c in flat):
            raise ValueError("pinned cards must be distinct members of the deck")
        self.base = base
        self.deal = hands
        self.boards = tuple(tuple(sorted(b)) for b in boards)

    def chance_outcomes(self, state: GameState) -> List[ChanceOutcome]:
        if not state.private:
            return [ChanceOutcome("deal", self.deal, 1.0)]
        return [ChanceOutcome("board", self.boards[state.rnd], 1.0)]

    def sample_chance(self, state: GameState, rng) -> ChanceOutcome:
        return self.chance_outcomes(state)[0]

    def __getattr__(self, name):
        return getattr(self.base, name)
