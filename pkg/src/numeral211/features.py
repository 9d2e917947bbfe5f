"""Exact winrate features and outcome-isomorphism classes.

Everything that feeds an equivalence-class count is kept in integer
arithmetic: a winrate triple is stored as (loss, tie, win) counts over a
fixed per-phase enumeration denominator, so equality of features is
exact.  Floats only appear at the clustering boundary (see emd.py /
abstraction.py).

Per-phase denominators under uniform dealing:
    phase 3: C(36,2) = 630 opponent pairs
    phase 2: 37 next cards x 630 = 23310
    phase 1: 38 x 37 x 630 = 885780
A phase-r triple is the exact sum of its 37 (or 38) successor triples,
which is how the non-final phases are built.
"""

from __future__ import annotations

import csv
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .cards import NUM_CARDS, NUM_PAIRS, PAIR_INDEX, PAIRS
from .hands import strength4
from .signal_index import ObservationKey, SignalIndex, get_signal_index

OPP_PAIRS_FINAL = 630  # C(36, 2)
DENOM = {3: 630, 2: 37 * 630, 1: 38 * 37 * 630}


@dataclass(frozen=True)
class Pawf:
    """Exact (loss, tie, win) probability triple of one observation."""

    loss: Fraction
    tie: Fraction
    win: Fraction

    def __post_init__(self):
        if self.loss + self.tie + self.win != 1:
            raise ValueError("winrate triple must sum to 1")
        if min(self.loss, self.tie, self.win) < 0:
            raise ValueError("winrate components must be non-negative")

    @classmethod
    def from_counts(cls, counts, denom: int) -> "Pawf":
        l, t, w = (int(c) for c in counts)
        return cls(Fraction(l, denom), Fraction(t, denom), Fraction(w, denom))

    def as_floats(self) -> tuple[float, float, float]:
        return (float(self.loss), float(self.tie), float(self.win))

    @property
    def equity(self) -> Fraction:
        return self.win - self.loss


@dataclass(frozen=True)
class Krwf:
    """Winrate triples along the ancestor chain: phases r, r-1, ..., r-k."""

    phase: int
    recall: int
    entries: tuple[Pawf, ...]

    def __post_init__(self):
        if len(self.entries) != self.recall + 1:
            raise ValueError("recall depth and entry count disagree")


@dataclass(frozen=True)
class OutcomeClassId:
    """Outcome-isomorphism class handle (history-free, or with recall k)."""

    phase: int
    recall: int
    index: int


def _board_chunk(bounds, win_t, tie_t):
    """Fill win/tie opponent counts for a contiguous range of boards."""
    lo, hi = bounds
    pairs = PAIRS.astype(np.int64)
    for bi in range(lo, hi):
        x, y = int(pairs[bi, 0]), int(pairs[bi, 1])
        ok = (
            (pairs[:, 0] != x)
            & (pairs[:, 0] != y)
            & (pairs[:, 1] != x)
            & (pairs[:, 1] != y)
        )
        hp = pairs[ok]  # 703 private hands off this board
        s = strength4(hp[:, 0], hp[:, 1], x, y)
        uniq, inv = np.unique(s, return_inverse=True)
        cnt = np.bincount(inv)
        below = np.concatenate(([0], np.cumsum(cnt)[:-1]))
        # per-card histograms give the card-removal correction: an opponent
        # cannot hold either of the hero's cards
        per_card = np.zeros((NUM_CARDS, len(uniq)), dtype=np.int32)
        np.add.at(per_card, (hp[:, 0], inv), 1)
        np.add.at(per_card, (hp[:, 1], inv), 1)
        below_card = np.cumsum(per_card, axis=1) - per_card
        wins = below[inv] - below_card[hp[:, 0], inv] - below_card[hp[:, 1], inv]
        ties = cnt[inv] - per_card[hp[:, 0], inv] - per_card[hp[:, 1], inv] + 1
        gi = PAIR_INDEX[hp[:, 0], hp[:, 1]]
        win_t[bi, gi] = wins
        tie_t[bi, gi] = ties


@lru_cache(maxsize=1)
def board_tables() -> tuple[np.ndarray, np.ndarray]:
    """(win, tie) opponent counts per (unordered board, private pair).

    Entry [b, h] counts opponents among the 630 pairs disjoint from hand h
    that lose to / tie with h on board b; -1 marks invalid combinations.
    """
    return build_board_tables()


def build_board_tables(workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    win_t = np.full((NUM_PAIRS, NUM_PAIRS), -1, dtype=np.int16)
    tie_t = np.full((NUM_PAIRS, NUM_PAIRS), -1, dtype=np.int16)
    if workers <= 1:
        _board_chunk((0, NUM_PAIRS), win_t, tie_t)
    else:
        # chunks write disjoint rows, so the final layout is schedule-independent
        edges = np.linspace(0, NUM_PAIRS, workers + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(
                ex.map(
                    lambda b: _board_chunk(b, win_t, tie_t),
                    zip(edges[:-1], edges[1:]),
                )
            )
    return win_t, tie_t


class FeatureSet:
    """All winrate features and outcome classes over a signal index."""

    def __init__(self, index: SignalIndex | None = None, workers: int = 1):
        self.index = index or get_signal_index()
        self._build(workers)

    def _build(self, workers: int) -> None:
        idx = self.index
        win_t, tie_t = (
            board_tables() if workers <= 1 else build_board_tables(workers)
        )

        # phase 3 from the board tables, phases 2 and 1 by successor sums
        rep3 = idx.reps[3].astype(np.int64)
        b3 = PAIR_INDEX[rep3[:, 2], rep3[:, 3]]
        h3 = PAIR_INDEX[rep3[:, 0], rep3[:, 1]]
        w = win_t[b3, h3].astype(np.int64)
        t = tie_t[b3, h3].astype(np.int64)
        pawf3 = np.stack([OPP_PAIRS_FINAL - w - t, t, w], axis=1)
        pawf2 = pawf3[idx.successor_map(2)].sum(axis=1)
        pawf1 = pawf2[idx.successor_map(1)].sum(axis=1)
        self.pawf_counts = {1: pawf1, 2: pawf2, 3: pawf3}

        # outcome classes, bottom-up: the final phase is the winrate triple,
        # earlier phases the sorted multiset of successor class ids
        self.paoi: dict[int, np.ndarray] = {}
        self.paoi[3] = self._row_classes(pawf3)
        for phase in (2, 1):
            succ_ids = self.paoi[phase + 1][idx.successor_map(phase)]
            self.paoi[phase] = self._row_classes(np.sort(succ_ids, axis=1))

    @staticmethod
    def _row_classes(rows: np.ndarray) -> np.ndarray:
        _, ids = np.unique(rows, axis=0, return_inverse=True)
        return ids.astype(np.int32)

    # -- feature access ----------------------------------------------------

    def krwf_counts(self, phase: int, k: int) -> tuple[np.ndarray, tuple[int, ...]]:
        """Stacked (K, 3*(k+1)) counts for phases r..r-k plus their denominators."""
        if not 0 <= k < phase:
            raise ValueError(f"recall {k} invalid at phase {phase}")
        blocks = [self.pawf_counts[phase]]
        denoms = [DENOM[phase]]
        for t in range(1, k + 1):
            anc = self.index.ancestor_map(phase, phase - t)
            blocks.append(self.pawf_counts[phase - t][anc])
            denoms.append(DENOM[phase - t])
        return np.hstack(blocks), tuple(denoms)

    def krwf_histograms(self, phase: int, k: int) -> np.ndarray:
        """(K, k+1, 3) float histograms, one (loss, tie, win) row per recall slot."""
        counts, denoms = self.krwf_counts(phase, k)
        h = counts.reshape(len(counts), k + 1, 3).astype(np.float64)
        return h / np.asarray(denoms, dtype=np.float64)[None, :, None]

    def compute_pawf(self, key: ObservationKey) -> Pawf:
        return Pawf.from_counts(self.pawf_counts[key.phase][key.index], DENOM[key.phase])

    def compute_krwf(self, key: ObservationKey, k: int) -> Krwf:
        if not 0 <= k < key.phase:
            raise ValueError(f"recall {k} invalid at phase {key.phase}")
        entries = [self.compute_pawf(key)]
        for t in range(1, k + 1):
            entries.append(self.compute_pawf(self.index.ancestor(key, key.phase - t)))
        return Krwf(key.phase, k, tuple(entries))

    def equity(self, key: ObservationKey) -> Fraction:
        return self.compute_pawf(key).equity

    def equity_array(self, phase: int) -> np.ndarray:
        counts = self.pawf_counts[phase]
        return (counts[:, 2] - counts[:, 0]) / float(DENOM[phase])

    # -- equivalence-class counting -----------------------------------------

    def krwi_class(self, phase: int, k: int) -> np.ndarray:
        counts, _ = self.krwf_counts(phase, k)
        return self._row_classes(counts)

    def count_krwi_classes(self, phase: int, k: int) -> int:
        return int(self.krwi_class(phase, k).max()) + 1

    def kroi_class(self, phase: int, k: int) -> np.ndarray:
        if not 0 <= k < phase:
            raise ValueError(f"recall {k} invalid at phase {phase}")
        cols = [self.paoi[phase]]
        for t in range(1, k + 1):
            anc = self.index.ancestor_map(phase, phase - t)
            cols.append(self.paoi[phase - t][anc])
        return self._row_classes(np.stack(cols, axis=1))

    def count_kroi_classes(self, phase: int, k: int) -> int:
        return int(self.kroi_class(phase, k).max()) + 1

    def compute_outcome_class(self, key: ObservationKey, k: int) -> OutcomeClassId:
        return OutcomeClassId(key.phase, k, int(self.kroi_class(key.phase, k)[key.index]))

    def table3(self) -> dict:
        """Class counts in the published comparison layout."""
        li = {p: self.index.count(p) for p in (1, 2, 3)}
        cells = []
        for phase in (1, 2, 3):
            for k in range(phase):
                rwi = self.count_krwi_classes(phase, k)
                roi = self.count_kroi_classes(phase, k)
                cells.append(
                    {
                        "phase": phase,
                        "recall": k,
                        "krwi": rwi,
                        "kroi": roi,
                        "wo_pct": round(100.0 * rwi / roi, 2),
                    }
                )
        return {"li": li, "cells": cells}


_FEATURES_CACHE: FeatureSet | None = None


def get_features() -> FeatureSet:
    global _FEATURES_CACHE
    if _FEATURES_CACHE is None:
        _FEATURES_CACHE = FeatureSet()
    return _FEATURES_CACHE


# ---------------------------------------------------------------------------
# Persistence: one file per (phase, k), fixed-width integer records.

KRWF_MAGIC = b"N211KRWF"
KRWF_VERSION = 1


def save_feature_table(features: FeatureSet, phase: int, k: int, path) -> None:
    counts, denoms = features.krwf_counts(phase, k)
    with open(path, "wb") as f:
        f.write(KRWF_MAGIC)
        f.write(struct.pack("<IBBQ", KRWF_VERSION, phase, k, len(counts)))
        f.write(struct.pack(f"<{k + 1}Q", *denoms))
        f.write(counts.astype("<u8").tobytes())


def load_feature_table(path) -> tuple[int, int, tuple[int, ...], np.ndarray]:
    with open(path, "rb") as f:
        if f.read(8) != KRWF_MAGIC:
            raise ValueError(f"{path}: not a feature table")
        version, phase, k, count = struct.unpack("<IBBQ", f.read(14))
        if version != KRWF_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        denoms = struct.unpack(f"<{k + 1}Q", f.read(8 * (k + 1)))
        counts = np.frombuffer(f.read(), dtype="<u8").reshape(count, 3 * (k + 1))
    return phase, k, denoms, counts.astype(np.int64)


def export_features_csv(features: FeatureSet, phase: int, k: int, path) -> None:
    counts, denoms = features.krwf_counts(phase, k)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["index"]
        for t in range(k + 1):
            header += [f"loss_{t}", f"tie_{t}", f"win_{t}", f"denom_{t}"]
        w.writerow(header)
        for i, row in enumerate(counts):
            out = [i]
            for t in range(k + 1):
                out += [int(row[3 * t]), int(row[3 * t + 1]), int(row[3 * t + 2]), denoms[t]]
            w.writerow(out)
