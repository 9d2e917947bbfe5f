"""Cards and deck for Numeral211 Hold'em: 40 cards, 10 ranks x 4 suits.

Cards are encoded as integers 0..39 with rank-major, suit-minor ordering:
``card = rank * 4 + suit``.  All hot paths work on these integers; the
``Card`` wrapper exists for parsing, printing and API clarity.
"""

from __future__ import annotations

import itertools
from enum import IntEnum
from typing import Iterable, NamedTuple

import numpy as np

NUM_RANKS = 10
NUM_SUITS = 4
NUM_CARDS = NUM_RANKS * NUM_SUITS
NUM_PAIRS = NUM_CARDS * (NUM_CARDS - 1) // 2  # 780 private-hand combos

RANK_CHARS = "23456789TA"  # index 0..9; T is the ten, Ace is high
SUIT_CHARS = "shcd"  # spades, hearts, clubs, diamonds


class Rank(IntEnum):
    TWO = 0
    THREE = 1
    FOUR = 2
    FIVE = 3
    SIX = 4
    SEVEN = 5
    EIGHT = 6
    NINE = 7
    TEN = 8
    ACE = 9


class Suit(IntEnum):
    SPADES = 0
    HEARTS = 1
    CLUBS = 2
    DIAMONDS = 3


class Card(NamedTuple):
    rank: Rank
    suit: Suit

    @property
    def index(self) -> int:
        return int(self.rank) * NUM_SUITS + int(self.suit)

    @classmethod
    def from_index(cls, index: int) -> "Card":
        if not 0 <= index < NUM_CARDS:
            raise ValueError(f"card index out of range: {index}")
        return cls(Rank(index // NUM_SUITS), Suit(index % NUM_SUITS))

    @classmethod
    def parse(cls, text: str) -> "Card":
        """Parse strings like 'As', 'Th', '2d'."""
        text = text.strip()
        if len(text) != 2:
            raise ValueError(f"bad card string: {text!r}")
        try:
            r = RANK_CHARS.index(text[0].upper())
            s = SUIT_CHARS.index(text[1].lower())
        except ValueError:
            raise ValueError(f"bad card string: {text!r}") from None
        return cls(Rank(r), Suit(s))

    def __str__(self) -> str:
        return RANK_CHARS[self.rank] + SUIT_CHARS[self.suit]


def card_str(index: int) -> str:
    return RANK_CHARS[index // NUM_SUITS] + SUIT_CHARS[index % NUM_SUITS]


def parse_cards(text: str) -> tuple[int, ...]:
    """Parse a card list into card indices.

    Accepts separators (spaces/commas) or run-together pairs: 'As Ah',
    'As,Ah' and 'AsAh' all parse to the same two cards.
    """
    out = []
    for tok in text.replace(",", " ").split():
        if len(tok) % 2 != 0:
            raise ValueError(f"bad card list: {tok!r}")
        out.extend(Card.parse(tok[i : i + 2]).index for i in range(0, len(tok), 2))
    return tuple(out)


def rank_of(index: int) -> int:
    return index // NUM_SUITS


def suit_of(index: int) -> int:
    return index % NUM_SUITS


def full_deck() -> list[int]:
    return list(range(NUM_CARDS))


def check_distinct(cards: Iterable[int]) -> None:
    cs = list(cards)
    if len(set(cs)) != len(cs):
        raise ValueError(f"duplicate cards: {[card_str(c) for c in cs]}")


# ---------------------------------------------------------------------------
# Unordered-pair indexing.  PAIRS[i] lists the i-th combo (a < b); PAIR_INDEX
# maps (a, b) in either order back to i.  Used as the dense hand index by the
# feature builder, the solver and the evaluator.

PAIRS = np.array(list(itertools.combinations(range(NUM_CARDS), 2)), dtype=np.int16)

PAIR_INDEX = np.full((NUM_CARDS, NUM_CARDS), -1, dtype=np.int32)
for _i, (_a, _b) in enumerate(PAIRS):
    PAIR_INDEX[_a, _b] = _i
    PAIR_INDEX[_b, _a] = _i
del _i, _a, _b


def pair_index(a: int, b: int) -> int:
    i = int(PAIR_INDEX[a, b])
    if i < 0:
        raise ValueError("not a valid card pair")
    return i
