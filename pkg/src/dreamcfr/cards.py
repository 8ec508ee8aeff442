"""Cards, decks, and showdown hand ranking.

Three deck layouts are used by the games in this package:

* 3-card deck, one suit, ranks jack/queen/king (smallest game)
* 6-card deck, ranks jack/queen/king in two suits
* standard 52-card deck, ranks 2..14 (ace high) in four suits
"""

from __future__ import annotations

from typing import List, NamedTuple, Sequence, Tuple

JACK, QUEEN, KING = 11, 12, 13
ACE = 14


class Card(NamedTuple):
    rank: int
    suit: int

    def __repr__(self) -> str:
        return f"{_RANK_CHARS.get(self.rank, str(self.rank))}{_SUIT_CHARS[self.suit]}"


_RANK_CHARS = {10: "T", JACK: "J", QUEEN: "Q", KING: "K", ACE: "A"}
_SUIT_CHARS = "abcd"


def kuhn_deck() -> List[Card]:
    return [Card(r, 0) for r in (JACK, QUEEN, KING)]


def leduc_deck() -> List[Card]:
    return [Card(r, s) for r in (JACK, QUEEN, KING) for s in (0, 1)]


def full_deck() -> List[Card]:
    return [Card(r, s) for r in range(2, ACE + 1) for s in range(4)]


def five_card_rank(cards: Sequence[Card]) -> Tuple[int, ...]:
    """Rank a 5-card hand as a tuple; larger tuples beat smaller ones.

    The first element is the hand category (8 straight flush down to
    0 high card), the rest are tiebreak ranks in decreasing significance.
    Two hands tie exactly when their tuples are equal. The ace plays low
    in the 5-high straight.
    """
    if len(cards) != 5:
        raise ValueError(f"expected 5 cards, got {len(cards)}")
    ranks = sorted((c.rank for c in cards), reverse=True)
    flush = len({c.suit for c in cards}) == 1
    straight_high = _straight_high(ranks)

    counts: dict[int, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    # sort by multiplicity then rank so e.g. a full house reads (3-group, 2-group)
    groups = sorted(counts.items(), key=lambda kv: (kv[1], kv[0]), reverse=True)
    shape = tuple(n for _, n in groups)
    by_group = tuple(r for r, _ in groups)

    if flush and straight_high:
        return (8, straight_high)
    if shape == (4, 1):
        return (7,) + by_group
    if shape == (3, 2):
        return (6,) + by_group
    if flush:
        return (5,) + tuple(ranks)
    if straight_high:
        return (4, straight_high)
    if shape == (3, 1, 1):
        return (3,) + by_group
    if shape == (2, 2, 1):
        return (2,) + by_group
    if shape == (2, 1, 1, 1):
        return (1,) + by_group
    return (0,) + tuple(ranks)


def _straight_high(ranks_desc: Sequence[int]) -> int:
    """High card of the straight formed by the 5 ranks, or 0 if none."""
    rs = ranks_desc
    if len(set(rs)) != 5:
        return 0
    if rs[0] - rs[4] == 4:
        return rs[0]
    if rs[0] == ACE and rs[1] == 5 and rs[1] - rs[4] == 3:
        return 5  # wheel: A-2-3-4-5
    return 0
