"""Three-card hand evaluation for the 40-card deck.

A showdown hand is the best 3-card combination out of the 4 available
cards (2 private + 2 community).  Category order, strongest first:

    straight flush > three of a kind > straight > flush > pair > high card

Straights use consecutive rank indices, so the Ace plays high only
(9-T-A is a straight, A-2-3 is not).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .cards import NUM_CARDS, RANK_CHARS, check_distinct, rank_of, suit_of


class Category(IntEnum):
    HIGH_CARD = 0
    PAIR = 1
    FLUSH = 2
    STRAIGHT = 3
    THREE_OF_A_KIND = 4
    STRAIGHT_FLUSH = 5


def rank3_value(cards: Sequence[int]) -> int:
    """Packed strength of a 3-card hand; larger beats smaller.

    Layout: category in bits 12+, then up to three tiebreak ranks in
    4-bit fields, most significant first.
    """
    rs = sorted((rank_of(c) for c in cards), reverse=True)
    flush = suit_of(cards[0]) == suit_of(cards[1]) == suit_of(cards[2])
    straight = rs[0] == rs[1] + 1 == rs[2] + 2
    if straight and flush:
        cat, tb = Category.STRAIGHT_FLUSH, (rs[0], 0, 0)
    elif rs[0] == rs[1] == rs[2]:
        cat, tb = Category.THREE_OF_A_KIND, (rs[0], 0, 0)
    elif straight:
        cat, tb = Category.STRAIGHT, (rs[0], 0, 0)
    elif flush:
        cat, tb = Category.FLUSH, (rs[0], rs[1], rs[2])
    elif rs[0] == rs[1]:
        cat, tb = Category.PAIR, (rs[0], rs[2], 0)
    elif rs[1] == rs[2]:
        cat, tb = Category.PAIR, (rs[1], rs[0], 0)
    else:
        cat, tb = Category.HIGH_CARD, (rs[0], rs[1], rs[2])
    return (int(cat) << 12) | (tb[0] << 8) | (tb[1] << 4) | tb[2]


@dataclass(frozen=True, order=True)
class HandRank:
    """Comparable showdown rank: category plus tiebreak ranks."""

    value: int

    @property
    def category(self) -> Category:
        return Category(self.value >> 12)

    @property
    def tiebreaks(self) -> tuple[int, ...]:
        tb = ((self.value >> 8) & 0xF, (self.value >> 4) & 0xF, self.value & 0xF)
        n = {
            Category.STRAIGHT_FLUSH: 1,
            Category.THREE_OF_A_KIND: 1,
            Category.STRAIGHT: 1,
            Category.FLUSH: 3,
            Category.PAIR: 2,
            Category.HIGH_CARD: 3,
        }[self.category]
        return tb[:n]

    def __str__(self) -> str:
        name = self.category.name.lower().replace("_", " ")
        ranks = "".join(RANK_CHARS[r] for r in self.tiebreaks)
        return f"{name}({ranks})"


@lru_cache(maxsize=1)
def trip_table() -> np.ndarray:
    """rank3_value for every sorted card triple, as TRIP[a, b, c] with a<b<c."""
    t = np.zeros((NUM_CARDS, NUM_CARDS, NUM_CARDS), dtype=np.int32)
    for a, b, c in itertools.combinations(range(NUM_CARDS), 3):
        t[a, b, c] = rank3_value((a, b, c))
    return t


def strength4(a, b, x, y) -> np.ndarray:
    """Best 3-of-4 strength; accepts scalars or broadcastable int arrays."""
    trip = trip_table()
    cs = np.sort(np.stack(np.broadcast_arrays(a, b, x, y), axis=-1), axis=-1)
    s0, s1, s2, s3 = cs[..., 0], cs[..., 1], cs[..., 2], cs[..., 3]
    return np.maximum.reduce(
        [trip[s0, s1, s2], trip[s0, s1, s3], trip[s0, s2, s3], trip[s1, s2, s3]]
    )


def evaluate_hand(cards: Iterable[int]) -> HandRank:
    """Evaluate 2 private + 2 community cards; all four must be distinct."""
    cs = list(cards)
    if len(cs) != 4:
        raise ValueError("evaluate_hand expects exactly 4 cards")
    check_distinct(cs)
    return HandRank(int(strength4(cs[0], cs[1], cs[2], cs[3])))
