"""Fixed-length feature vectors for infostates and full histories.

Layout per game, in order: multi-hot of the agent's private cards over
the deck; multi-hot of revealed public cards (all zero while undealt,
omitted entirely for the one-round game); one-hot action slots for every
(round, step) position holding the action tag played there; both seats'
pot contributions scaled by the game's largest possible contribution.

The joint (full-history) encoding is the seat-0 infostate vector with
seat-1's private multi-hot appended, so both hands plus all public
information appear exactly once.
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .games import Action, GameState, InfostateKey, SequentialPokerGame

NUM_ACTION_SLOTS = len(Action)


def _blocks(game: SequentialPokerGame):
    deck = len(game.deck)
    private = deck
    board = deck if sum(game.board_counts) > 0 else 0
    bets = sum((cap + 2) * NUM_ACTION_SLOTS for cap in game.raise_caps)
    return private, board, bets


def infostate_dim(game: SequentialPokerGame) -> int:
    private, board, bets = _blocks(game)
    return private + board + bets + 2


def joint_dim(game: SequentialPokerGame) -> int:
    return infostate_dim(game) + len(game.deck)


def encode_infostate(game: SequentialPokerGame, key: InfostateKey) -> np.ndarray:
    """Deterministic feature vector for one agent's observations."""
    private, board, bets = _blocks(game)
    vec = np.zeros(private + board + bets + 2)
    index = {card: i for i, card in enumerate(game.deck)}
    for c in key.private:
        vec[index[c]] = 1.0
    if board:
        for c in key.board:
            vec[private + index[c]] = 1.0
    base = private + board
    for rnd, round_actions in enumerate(key.bets):
        offset = base + sum(
            (cap + 2) * NUM_ACTION_SLOTS for cap in game.raise_caps[:rnd]
        )
        for step, act in enumerate(round_actions):
            vec[offset + step * NUM_ACTION_SLOTS + int(act)] = 1.0
    contribs = _replay_contribs(game, key.bets)
    vec[-2] = contribs[0] / game.max_contrib
    vec[-1] = contribs[1] / game.max_contrib
    return vec


def _replay_contribs(game: SequentialPokerGame, bets) -> List[int]:
    contribs = list(game.initial_contribs)
    for rnd, round_actions in enumerate(bets):
        actor = game.first_to_act[rnd]
        for act in round_actions:
            if act is Action.RAISE:
                contribs[actor] = contribs[1 - actor] + game.bet_sizes[rnd]
            elif act is Action.CALL:
                contribs[actor] = contribs[1 - actor]
            actor = 1 - actor
    return contribs


def encode_joint(game: SequentialPokerGame, state: GameState) -> np.ndarray:
    """Feature vector of the full history: seat-0 view plus seat-1's hand."""
    vec0 = encode_infostate(game, game.infostate_key(state, 0))
    tail = np.zeros(len(game.deck))
    index = {card: i for i, card in enumerate(game.deck)}
    for c in state.private[1]:
        tail[index[c]] = 1.0
    return np.concatenate([vec0, tail])


def legal_mask(legal: Sequence[Action]) -> np.ndarray:
    """0/1 vector over the fixed action slots."""
    mask = np.zeros(NUM_ACTION_SLOTS)
    for a in legal:
        mask[int(a)] = 1.0
    return mask


def pad_to_slots(legal: Sequence[Action], values: Sequence[float]) -> np.ndarray:
    """Scatter per-legal-action values into the fixed slot layout."""
    out = np.zeros(NUM_ACTION_SLOTS)
    for a, v in zip(legal, values):
        out[int(a)] = v
    return out


def take_slots(legal: Sequence[Action], padded: np.ndarray) -> np.ndarray:
    """Gather the legal actions' entries from a slot-layout vector."""
    return np.asarray([padded[int(a)] for a in legal])
