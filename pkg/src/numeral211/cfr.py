"""Chance-sampled Monte Carlo CFR over the full betting tree.

Each iteration samples one complete deal, walks every betting line of
the game for one traverser (players alternate iteration by iteration),
applies vanilla regret matching, and accumulates the average strategy
with plain (unweighted) sums.  The walk is compiled with numba: the
static tree is stored in flat preorder arrays (children always follow
their parent), so reaches sweep forward and values sweep backward with
no recursion.

Infosets are (bucket under the player's abstraction map, betting
sequence slot); the walk touches raw cards only through the bucket
lookup, which is what makes the abstraction consistency property hold
by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

from .abstraction import AbstractionMap
from .cards import PAIR_INDEX
from .game import GameTree, game_tree
from .hands import strength4
from .signal_index import SignalIndex, get_signal_index
from .storage import read_container, write_container

CHECKPOINT_MAGIC = b"N211STRA"
CHECKPOINT_VERSION = 1


def regret_matching(cumulative_regrets) -> np.ndarray:
    """Positive-part normalization; uniform when nothing is positive."""
    r = np.asarray(cumulative_regrets, dtype=np.float64)
    pos = np.clip(r, 0.0, None)
    total = pos.sum()
    if total <= 0.0:
        return np.full(len(r), 1.0 / len(r))
    return pos / total


@njit(cache=True, fastmath=True)
def _cfr_batch(
    node_player, node_pp, s3, n_act, child, leaf_u1, leaf_stake,
    regret_flat, ssum_flat, base6, stride6,
    lb, sign, start_parity, root_vals,
):
    """One batch of chance-sampled iterations on flattened tables.

    Tables for all (player, phase) pairs live in one flat array; a
    node's regret row starts at base6[pp] + bucket * stride6[pp] + s3
    where pp = player * 3 + phase - 1 and lb[d, pp] is the sampled
    deal's bucket.  Children follow parents in the node order, so a
    forward sweep fixes strategies and reaches and a backward sweep
    folds values up and applies the traverser's updates.
    """
    n_nodes = node_pp.shape[0]
    batch = lb.shape[0]
    sigma = np.empty((n_nodes, 3))
    pi_s = np.empty(n_nodes)
    pi_o = np.empty(n_nodes)
    vals = np.empty(n_nodes)
    off = np.empty(6, dtype=np.int64)
    for d in range(batch):
        t = (start_parity + d) & 1
        sd = sign[d]
        for k in range(6):
            off[k] = base6[k] + lb[d, k] * stride6[k]
        # forward sweep: strategies from current regrets, reach products
        pi_s[0] = 1.0
        pi_o[0] = 1.0
        for n in range(n_nodes):
            na = n_act[n]
            base = off[node_pp[n]] + s3[n]
            tot = 0.0
            for a in range(na):
                x = regret_flat[base + a]
                if x > 0.0:
                    tot += x
            if tot > 0.0:
                inv = 1.0 / tot
                for a in range(na):
                    x = regret_flat[base + a]
                    sigma[n, a] = x * inv if x > 0.0 else 0.0
            else:
                inv = 1.0 / na
                for a in range(na):
                    sigma[n, a] = inv
            mine = node_player[n] == t
            for a in range(na):
                c = child[n, a]
                if c >= 0:
                    if mine:
                        pi_s[c] = pi_s[n] * sigma[n, a]
                        pi_o[c] = pi_o[n]
                    else:
                        pi_s[c] = pi_s[n]
                        pi_o[c] = pi_o[n] * sigma[n, a]
        # backward sweep: traverser-perspective values, regret and
        # average-strategy accumulation at the traverser's nodes
        for n in range(n_nodes - 1, -1, -1):
            na = n_act[n]
            v = 0.0
            if node_player[n] == t:
                base = off[node_pp[n]] + s3[n]
                va0 = 0.0
                va1 = 0.0
                va2 = 0.0
                for a in range(na):
                    c = child[n, a]
                    if c >= 0:
                        va = vals[c]
                    else:
                        l = -c - 1
                        u1 = leaf_u1[l] + sd * leaf_stake[l]
                        va = u1 if t == 0 else -u1
                    if a == 0:
                        va0 = va
                    elif a == 1:
                        va1 = va
                    else:
                        va2 = va
                    v += sigma[n, a] * va
                po = pi_o[n]
                ps = pi_s[n]
                regret_flat[base] += po * (va0 - v)
                ssum_flat[base] += ps * sigma[n, 0]
                regret_flat[base + 1] += po * (va1 - v)
                ssum_flat[base + 1] += ps * sigma[n, 1]
                if na == 3:
                    regret_flat[base + 2] += po * (va2 - v)
                    ssum_flat[base + 2] += ps * sigma[n, 2]
            else:
                for a in range(na):
                    c = child[n, a]
                    if c >= 0:
                        va = vals[c]
                    else:
                        l = -c - 1
                        u1 = leaf_u1[l] + sd * leaf_stake[l]
                        va = u1 if t == 0 else -u1
                    v += sigma[n, a] * va
            vals[n] = v
        root_vals[d] = vals[0]


def _slot_action_counts(tree: GameTree) -> dict[tuple[int, int], np.ndarray]:
    """Legal-action count per (player, phase) strategy slot."""
    out = {}
    for p in (0, 1):
        for ph in (1, 2, 3):
            n = int(tree.slots_per_phase[p, ph])
            counts = np.zeros(n, dtype=np.int8)
            sel = (tree.actor == p) & (tree.phase == ph)
            counts[tree.slot[sel]] = tree.n_actions[sel]
            out[(p, ph)] = counts
    return out


@dataclass
class RegretTable:
    """Cumulative regrets and average-strategy weights for one player.

    Arrays are views into the solver's flat tables.
    """

    regret: dict[int, np.ndarray]  # phase -> (buckets, slots, 3)
    strat_sum: dict[int, np.ndarray]


@dataclass
class StrategyProfile:
    """Normalized average strategies of both players plus their maps."""

    probs: dict[tuple[int, int], np.ndarray]  # (player, phase) -> (buckets, slots, 3)
    maps: tuple[AbstractionMap, AbstractionMap]
    meta: dict = field(default_factory=dict)

    def distribution(self, player: int, phase: int, bucket: int, slot: int) -> np.ndarray:
        return self.probs[(player, phase)][bucket, slot]


def _normalize_avg_into(out: np.ndarray, ssum: np.ndarray, action_counts: np.ndarray,
                        chunk: int = 2048) -> np.ndarray:
    """Row-normalize into ``out``; unvisited infosets get uniform over legal.

    Chunked over buckets to keep temporaries small (the unabstracted
    phase-3 table is ~600 MB, so whole-array expressions are not an
    option on small machines).
    """
    na = action_counts.astype(np.int32)
    legal = (np.arange(3)[None, :] < na[:, None]).astype(ssum.dtype)
    uniform = legal / np.maximum(na, 1)[:, None]
    unvisited = 0
    for lo in range(0, ssum.shape[0], chunk):
        hi = min(ssum.shape[0], lo + chunk)
        block = ssum[lo:hi]
        totals = block.sum(axis=2, keepdims=True)
        visited = totals[..., 0] > 0
        np.divide(block, np.where(totals > 0, totals, 1.0), out=out[lo:hi])
        out[lo:hi][~visited] = uniform[np.nonzero(~visited)[1]]
        out[lo:hi] *= legal[None, :, :]
        unvisited += int((~visited).sum())
    if unvisited:
        log.debug("%d infoset rows unvisited; uniform fallback applied", unvisited)
    return out


def _deal_batch(rng: np.random.Generator, size: int):
    order = np.argsort(rng.random((size, 40)), axis=1, kind="stable")
    return order[:, :6].astype(np.int16)


class Solver:
    """CSMCCFR driver bound to a pair of abstraction maps."""

    def __init__(
        self,
        map_p1: AbstractionMap,
        map_p2: AbstractionMap,
        seed: int = 0,
        batch_size: int = 8192,
        index: SignalIndex | None = None,
        table_dtype=np.float64,
    ):
        self.index = index or get_signal_index()
        for m in (map_p1, map_p2):
            if set(m.phases) != {1, 2, 3}:
                raise ValueError("abstraction map must cover phases 1..3")
            m.validate(self.index)
        self.maps = (map_p1, map_p2)
        self.tree = game_tree()
        self.table_dtype = np.dtype(table_dtype)
        self.seed = seed
        self.batch_size = int(batch_size)
        self.rng = np.random.default_rng(seed)
        self.iterations_done = 0
        self._action_counts = _slot_action_counts(self.tree)
        self.last_mean_value = 0.0
        self._allocate_tables()
        self._node_player = self.tree.actor.astype(np.int8)
        self._node_pp = (self.tree.actor * 3 + self.tree.phase - 1).astype(np.int8)
        self._s3 = (self.tree.slot.astype(np.int64)) * 3
        self._leaf_u1 = self.tree.leaf_u1.astype(np.int64)
        self._leaf_stake = self.tree.leaf_stake.astype(np.int64)

    def _allocate_tables(self) -> None:
        base6 = np.zeros(6, dtype=np.int64)
        stride6 = np.zeros(6, dtype=np.int64)
        sizes = []
        for p in (0, 1):
            for ph in (1, 2, 3):
                pp = p * 3 + ph - 1
                slots = int(self.tree.slots_per_phase[p, ph])
                stride6[pp] = slots * 3
                sizes.append(self.maps[p].bucket_count(ph) * slots * 3)
        base6[1:] = np.cumsum(sizes)[:-1]
        total = int(np.sum(sizes))
        self.regret_flat = np.zeros(total, dtype=self.table_dtype)
        self.ssum_flat = np.zeros(total, dtype=self.table_dtype)
        self._base6, self._stride6 = base6, stride6
        tables = []
        for p in (0, 1):
            regret, ssum = {}, {}
            for ph in (1, 2, 3):
                pp = p * 3 + ph - 1
                buckets = self.maps[p].bucket_count(ph)
                slots = int(self.tree.slots_per_phase[p, ph])
                sl = slice(int(base6[pp]), int(base6[pp]) + buckets * slots * 3)
                regret[ph] = self.regret_flat[sl].reshape(buckets, slots, 3)
                ssum[ph] = self.ssum_flat[sl].reshape(buckets, slots, 3)
            tables.append(RegretTable(regret, ssum))
        self.tables = tuple(tables)

    def _buckets_for(self, deals: np.ndarray) -> np.ndarray:
        """(B, 6) bucket per (player*3 + phase - 1) column."""
        idx = self.index
        b1 = deals[:, 4].astype(np.int64)
        b2 = deals[:, 5].astype(np.int64)
        out = np.empty((len(deals), 6), dtype=np.int64)
        for player in (0, 1):
            pair = PAIR_INDEX[deals[:, 2 * player], deals[:, 2 * player + 1]]
            amap = self.maps[player]
            out[:, 3 * player] = amap.phases[1][idx.key1_of_pair[pair]]
            out[:, 3 * player + 1] = amap.phases[2][idx.key2_of[b1, pair]]
            out[:, 3 * player + 2] = amap.phases[3][idx.key3_of[b1, b2, pair]]
        return out

    def run(self, iterations: int) -> None:
        """Advance the solve by ``iterations`` sampled deals."""
        tree = self.tree
        done = 0
        while done < iterations:
            b = min(self.batch_size, iterations - done)
            deals = _deal_batch(self.rng, b)
            lb = self._buckets_for(deals)
            s1 = strength4(deals[:, 0], deals[:, 1], deals[:, 4], deals[:, 5])
            s2 = strength4(deals[:, 2], deals[:, 3], deals[:, 4], deals[:, 5])
            sign = np.sign(s1 - s2).astype(np.int64)
            root_vals = np.empty(b)
            _cfr_batch(
                self._node_player, self._node_pp, self._s3,
                tree.n_actions, tree.child, self._leaf_u1, self._leaf_stake,
                self.regret_flat, self.ssum_flat, self._base6, self._stride6,
                lb, sign, self.iterations_done & 1, root_vals,
            )
            self.last_mean_value = float(root_vals.mean())
            self.iterations_done += b
            done += b

    def average_profile(self, reuse: StrategyProfile | None = None) -> StrategyProfile:
        """Normalized average strategy; pass ``reuse`` to refill its buffers."""
        probs = reuse.probs if reuse is not None else {}
        for p in (0, 1):
            for ph in (1, 2, 3):
                ssum = self.tables[p].strat_sum[ph]
                if (p, ph) not in probs:
                    probs[(p, ph)] = np.empty_like(ssum)
                _normalize_avg_into(probs[(p, ph)], ssum, self._action_counts[(p, ph)])
        meta = {
            "iterations": self.iterations_done,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "abstraction_hashes": [m.content_hash() for m in self.maps],
        }
        return StrategyProfile(probs, self.maps, meta)

    # -- checkpoints --------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        arrays = {}
        for p in (0, 1):
            for ph in (1, 2, 3):
                arrays[f"regret_{p}_{ph}"] = self.tables[p].regret[ph]
                arrays[f"ssum_{p}_{ph}"] = self.tables[p].strat_sum[ph]
                arrays[f"map_{p}_{ph}"] = self.maps[p].phases[ph].astype(np.uint32)
        meta = {
            "iterations": self.iterations_done,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "table_dtype": self.table_dtype.name,
            "abstraction_hashes": [m.content_hash() for m in self.maps],
        }
        write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, meta, arrays)

    @classmethod
    def load_checkpoint(cls, path) -> "Solver":
        _, meta, arrays = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        maps = []
        for p in (0, 1):
            phases = {
                ph: arrays[f"map_{p}_{ph}"].astype(np.int32) for ph in (1, 2, 3)
            }
            maps.append(AbstractionMap(phases, {"restored": True}))
        solver = cls(maps[0], maps[1], seed=meta["seed"], batch_size=meta["batch_size"],
                     table_dtype=np.dtype(meta.get("table_dtype", "float64")))
        for p in (0, 1):
            for ph in (1, 2, 3):
                solver.tables[p].regret[ph][:] = arrays[f"regret_{p}_{ph}"]
                solver.tables[p].strat_sum[ph][:] = arrays[f"ssum_{p}_{ph}"]
        solver.iterations_done = meta["iterations"]
        # note: the RNG stream restarts from the seed; resuming a checkpoint
        # replays the same deal sequence only from a fresh solver
        return solver


def solve(
    abstraction_p1: AbstractionMap,
    abstraction_p2: AbstractionMap,
    iterations: int,
    seed: int = 0,
    batch_size: int = 8192,
    checkpoint_iters=(),
    on_checkpoint=None,
) -> StrategyProfile:
    """Run CSMCCFR and return the normalized average strategy profile.

    ``checkpoint_iters`` are cumulative iteration counts at which
    ``on_checkpoint(iterations, solver)`` is invoked (used by the
    experiment harness to trace exploitability curves).
    """
    solver = Solver(abstraction_p1, abstraction_p2, seed=seed, batch_size=batch_size)
    marks = sorted(set(int(c) for c in checkpoint_iters if 0 < c <= iterations))
    prev = 0
    for mark in marks:
        solver.run(mark - prev)
        prev = mark
        if on_checkpoint is not None:
            on_checkpoint(mark, solver)
    solver.run(iterations - prev)
    return solver.average_profile()


# ---------------------------------------------------------------------------
# Induced full-game strategies.


@dataclass
class InducedStrategy:
    """Bucket-level strategy lifted to every canonical observation.

    Lookups stay lazy: evaluator code asks for (phase, key indices,
    slot) and the answer is gathered straight from the bucket tables,
    so the 62020-key phase never has to be materialized.
    """

    player: int
    assign: dict[int, np.ndarray]  # phase -> key index -> bucket
    probs: dict[int, np.ndarray]  # phase -> (buckets, slots, 3)

    def gather(self, phase: int, key_indices: np.ndarray, slot: int) -> np.ndarray:
        return self.probs[phase][self.assign[phase][key_indices], slot]

    def distribution(self, phase: int, key_index: int, slot: int) -> np.ndarray:
        return self.probs[phase][self.assign[phase][key_index], slot]


def induce_full_strategy(profile: StrategyProfile, player: int) -> InducedStrategy:
    amap = profile.maps[player]
    return InducedStrategy(
        player,
        {ph: amap.phases[ph] for ph in (1, 2, 3)},
        {ph: profile.probs[(player, ph)] for ph in (1, 2, 3)},
    )


def single_player_strategy(
    solver: "Solver", player: int, reuse: InducedStrategy | None = None
) -> InducedStrategy:
    """Induced average strategy of one player, normalizing only their tables.

    Materializing one side at a time keeps the peak footprint of
    unabstracted evaluations at ~0.6 GB instead of 1.2 GB.
    """
    probs = reuse.probs if reuse is not None else {}
    for ph in (1, 2, 3):
        ssum = solver.tables[player].strat_sum[ph]
        if ph not in probs or probs[ph].shape != ssum.shape:
            probs[ph] = np.empty_like(ssum)
        _normalize_avg_into(probs[ph], ssum, solver._action_counts[(player, ph)])
    amap = solver.maps[player]
    return InducedStrategy(player, {ph: amap.phases[ph] for ph in (1, 2, 3)}, probs)


def concat_asymmetric(
    profile_1: StrategyProfile, profile_2: StrategyProfile
) -> tuple[InducedStrategy, InducedStrategy]:
    """Player 1's strategy from the first solve, player 2's from the second."""
    return induce_full_strategy(profile_1, 0), induce_full_strategy(profile_2, 1)


def uniform_strategy(player: int, index: SignalIndex | None = None) -> InducedStrategy:
    """Uniform-over-legal-actions behavior at every infoset."""
    index = index or get_signal_index()
    tree = game_tree()
    counts = _slot_action_counts(tree)
    assign, probs = {}, {}
    for ph in (1, 2, 3):
        assign[ph] = np.zeros(index.count(ph), dtype=np.int32)
        na = counts[(player, ph)]
        legal = np.arange(3)[None, :] < na[:, None]
        probs[ph] = (legal / np.maximum(na, 1)[:, None])[None, :, :]
    return InducedStrategy(player, assign, probs)
