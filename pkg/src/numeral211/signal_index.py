"""Canonical per-phase observation indexing under suit isomorphism.

A player's observation at phase r is their private pair plus the first
r-1 board cards (the board stays ordered: the phase-2 card is
distinguished from the phase-3 card).  Two observations are equivalent
iff one of the 24 suit permutations, applied jointly to private cards
and board, maps one to the other.  Each equivalence class gets a dense
integer index per phase; those indices are the universe every
downstream table (features, abstractions, strategies) is keyed by.

The canonical representative is the lexicographically smallest image
under the 24 permutations, comparing the tuple (low private card, high
private card, board...) with the rank-major suit-minor card encoding.
"""

from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass

import numpy as np

from .cards import NUM_CARDS, NUM_SUITS, PAIR_INDEX, PAIRS, card_str, check_distinct

RAW_COUNTS = {1: 780, 2: 780 * 38, 3: 780 * 38 * 37}

SUIT_PERMS = np.array(list(itertools.permutations(range(NUM_SUITS))), dtype=np.int64)

# PERM_MAPS[p, card] = image of card under suit permutation p
PERM_MAPS = np.empty((len(SUIT_PERMS), NUM_CARDS), dtype=np.int64)
for _p, _perm in enumerate(SUIT_PERMS):
    for _c in range(NUM_CARDS):
        PERM_MAPS[_p, _c] = (_c // NUM_SUITS) * NUM_SUITS + _perm[_c % NUM_SUITS]
del _p, _perm, _c


def _pack(cols: list[np.ndarray]) -> np.ndarray:
    code = cols[0].astype(np.int64)
    for c in cols[1:]:
        code = code * 64 + c
    return code


def canonical_codes(a, b, board_cols=()) -> np.ndarray:
    """Vectorized canonical code of observations (a, b | board...).

    ``a``/``b`` are private-card arrays (any order), ``board_cols`` the
    board cards as separate arrays.  Returns the min packed code over
    all 24 suit permutations, with the private pair sorted after
    permutation.
    """
    a = np.atleast_1d(np.asarray(a, dtype=np.int64))
    b = np.atleast_1d(np.asarray(b, dtype=np.int64))
    board_cols = [np.atleast_1d(np.asarray(c, dtype=np.int64)) for c in board_cols]
    best = None
    for p in range(len(PERM_MAPS)):
        m = PERM_MAPS[p]
        ma, mb = m[a], m[b]
        cols = [np.minimum(ma, mb), np.maximum(ma, mb)] + [m[c] for c in board_cols]
        code = _pack(cols)
        best = code if best is None else np.minimum(best, code)
    return best


def canonical_tuple(private: tuple[int, int], board: tuple[int, ...]) -> tuple[int, ...]:
    """Canonical representative cards of a single raw observation."""
    check_distinct(private + board)
    code = int(canonical_codes(private[0], private[1], [np.array([c]) for c in board])[0])
    return _decode(code, 2 + len(board))


def _decode(code: int, n: int) -> tuple[int, ...]:
    out = []
    for _ in range(n):
        out.append(int(code % 64))
        code //= 64
    return tuple(out[::-1])


@dataclass(frozen=True)
class ObservationKey:
    """Canonical observation: phase, representative cards, dense index."""

    phase: int
    private: tuple[int, int]
    board: tuple[int, ...]
    index: int

    def __str__(self) -> str:
        pc = "".join(card_str(c) for c in self.private)
        bc = "".join(card_str(c) for c in self.board)
        return f"ph{self.phase}#{self.index}({pc}|{bc or '-'})"


class SignalIndex:
    """Immutable canonical-observation tables for all three phases."""

    def __init__(self) -> None:
        self.codes: dict[int, np.ndarray] = {}
        self.reps: dict[int, np.ndarray] = {}
        self.mult: dict[int, np.ndarray] = {}
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self) -> None:
        pr = PAIRS.astype(np.int64)

        # phase 1: private pairs only
        c1 = canonical_codes(pr[:, 0], pr[:, 1])
        self.codes[1], inv1 = np.unique(c1, return_inverse=True)
        self.mult[1] = np.bincount(inv1)
        self.key1_of_pair = inv1.astype(np.int32)

        # phase 2: pair + first board card
        a = np.repeat(pr[:, 0], NUM_CARDS)
        b = np.repeat(pr[:, 1], NUM_CARDS)
        x = np.tile(np.arange(NUM_CARDS, dtype=np.int64), len(pr))
        ok = (x != a) & (x != b)
        a2, b2, x2 = a[ok], b[ok], x[ok]
        c2 = canonical_codes(a2, b2, [x2])
        self.codes[2], inv2 = np.unique(c2, return_inverse=True)
        self.mult[2] = np.bincount(inv2)
        self.key2_of = np.full((NUM_CARDS, len(pr)), -1, dtype=np.int32)
        self.key2_of[x2, PAIR_INDEX[a2, b2]] = inv2

        # phase 3: pair + ordered two-card board
        a3 = np.repeat(a2, NUM_CARDS)
        b3 = np.repeat(b2, NUM_CARDS)
        x3 = np.repeat(x2, NUM_CARDS)
        y3 = np.tile(np.arange(NUM_CARDS, dtype=np.int64), len(a2))
        ok = (y3 != a3) & (y3 != b3) & (y3 != x3)
        a3, b3, x3, y3 = a3[ok], b3[ok], x3[ok], y3[ok]
        c3 = canonical_codes(a3, b3, [x3, y3])
        self.codes[3], inv3 = np.unique(c3, return_inverse=True)
        self.mult[3] = np.bincount(inv3)
        self.key3_of = np.full((NUM_CARDS, NUM_CARDS, len(pr)), -1, dtype=np.int32)
        self.key3_of[x3, y3, PAIR_INDEX[a3, b3]] = inv3

        for phase, width in ((1, 2), (2, 3), (3, 4)):
            codes = self.codes[phase]
            rep = np.empty((len(codes), width), dtype=np.int16)
            c = codes.copy()
            for j in range(width - 1, -1, -1):
                rep[:, j] = c % 64
                c //= 64
            self.reps[phase] = rep

        # ancestor maps: truncate the representative's board, re-canonicalize
        r3, r2 = self.reps[3], self.reps[2]
        self.anc2_of_3 = self._lookup_codes(
            2, canonical_codes(r3[:, 0], r3[:, 1], [r3[:, 2]])
        )
        self.anc1_of_3 = self._lookup_codes(1, canonical_codes(r3[:, 0], r3[:, 1]))
        self.anc1_of_2 = self._lookup_codes(1, canonical_codes(r2[:, 0], r2[:, 1]))

        # successor maps: next-card columns in ascending card order
        self.next_cards: dict[int, np.ndarray] = {}
        self.succ: dict[int, np.ndarray] = {}
        for phase, n_next in ((1, 38), (2, 37)):
            rep = self.reps[phase]
            k = len(rep)
            cand = np.tile(np.arange(NUM_CARDS, dtype=np.int64), (k, 1))
            keep = np.ones((k, NUM_CARDS), dtype=bool)
            for j in range(rep.shape[1]):
                keep &= cand != rep[:, j : j + 1]
            nxt = cand[keep].reshape(k, n_next)
            cols = [np.repeat(rep[:, j].astype(np.int64), n_next) for j in range(rep.shape[1])]
            codes = canonical_codes(
                cols[0], cols[1], cols[2:] + [nxt.ravel()]
            )
            self.succ[phase] = self._lookup_codes(phase + 1, codes).reshape(k, n_next)
            self.next_cards[phase] = nxt.astype(np.int16)

    def _lookup_codes(self, phase: int, codes: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.codes[phase], codes)
        if not np.all(self.codes[phase][pos] == codes):
            raise AssertionError("canonical code missing from index")
        return pos.astype(np.int32)

    # -- queries -----------------------------------------------------------

    def count(self, phase: int) -> int:
        return len(self.codes[phase])

    def multiplicity(self, phase: int) -> np.ndarray:
        return self.mult[phase]

    def observation(self, phase: int, index: int) -> ObservationKey:
        rep = self.reps[phase][index]
        return ObservationKey(
            phase, (int(rep[0]), int(rep[1])), tuple(int(c) for c in rep[2:]), int(index)
        )

    def key_index(self, private: tuple[int, int], board: tuple[int, ...]) -> int:
        """Dense index of the observation's equivalence class."""
        check_distinct(private + board)
        p = PAIR_INDEX[private[0], private[1]]
        if len(board) == 0:
            return int(self.key1_of_pair[p])
        if len(board) == 1:
            return int(self.key2_of[board[0], p])
        if len(board) == 2:
            return int(self.key3_of[board[0], board[1], p])
        raise ValueError("board longer than 2 cards")

    def canonicalize(self, private: tuple[int, int], board: tuple[int, ...] = ()) -> ObservationKey:
        phase = 1 + len(board)
        return self.observation(phase, self.key_index(private, board))

    def ancestor_map(self, phase: int, target_phase: int) -> np.ndarray:
        """Vector map from phase keys to their target-phase ancestor keys."""
        if not 1 <= target_phase < phase:
            raise ValueError("ancestor requires target_phase < phase")
        if (phase, target_phase) == (3, 2):
            return self.anc2_of_3
        if (phase, target_phase) == (3, 1):
            return self.anc1_of_3
        return self.anc1_of_2

    def ancestor(self, key: ObservationKey, target_phase: int) -> ObservationKey:
        idx = self.ancestor_map(key.phase, target_phase)[key.index]
        return self.observation(target_phase, int(idx))

    def successor_map(self, phase: int) -> np.ndarray:
        """(K, n_next) next-phase key index per possible next board card."""
        if phase not in (1, 2):
            raise ValueError("successors exist for phases 1 and 2 only")
        return self.succ[phase]

    def enumerate_observations(self, phase: int):
        """Yield (ObservationKey, multiplicity) in dense-index order."""
        mult = self.mult[phase]
        for i in range(self.count(phase)):
            yield self.observation(phase, i), int(mult[i])


_INDEX_CACHE: SignalIndex | None = None


def get_signal_index() -> SignalIndex:
    global _INDEX_CACHE
    if _INDEX_CACHE is None:
        _INDEX_CACHE = SignalIndex()
    return _INDEX_CACHE


# ---------------------------------------------------------------------------
# Persistence: one flat binary file per phase, plus CSV export.

SIGX_MAGIC = b"N211SIGX"
SIGX_VERSION = 1


def save_index_phase(index: SignalIndex, phase: int, path) -> None:
    """Fixed-width records: 4 canonical card bytes (0xFF pad) + u32 index."""
    rep = index.reps[phase]
    with open(path, "wb") as f:
        f.write(SIGX_MAGIC)
        f.write(struct.pack("<IBQ", SIGX_VERSION, phase, len(rep)))
        rec = np.full((len(rep), 4), 0xFF, dtype=np.uint8)
        rec[:, : rep.shape[1]] = rep.astype(np.uint8)
        out = np.zeros(
            len(rep), dtype=np.dtype([("cards", "u1", 4), ("index", "<u4")])
        )
        out["cards"] = rec
        out["index"] = np.arange(len(rep), dtype=np.uint32)
        f.write(out.tobytes())


def load_index_phase(path) -> tuple[int, np.ndarray]:
    """Returns (phase, representative card rows) from a saved index file."""
    with open(path, "rb") as f:
        if f.read(8) != SIGX_MAGIC:
            raise ValueError(f"{path}: not a signal index file")
        version, phase, count = struct.unpack("<IBQ", f.read(13))
        if version != SIGX_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        raw = np.frombuffer(
            f.read(), dtype=np.dtype([("cards", "u1", 4), ("index", "<u4")])
        )
    if len(raw) != count or not np.array_equal(
        raw["index"], np.arange(count, dtype=np.uint32)
    ):
        raise ValueError(f"{path}: corrupt record block")
    width = 2 + (phase - 1)
    return phase, raw["cards"][:, :width].astype(np.int16)


def export_index_csv(index: SignalIndex, phase: int, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["phase", "index", "cards", "multiplicity"])
        for key, mult in index.enumerate_observations(phase):
            cards = " ".join(card_str(c) for c in key.private + key.board)
            w.writerow([phase, key.index, cards, mult])
