"""Exact best response and exploitability on the unabstracted game.

The fixed player's strategy enters as an InducedStrategy (bucket tables
plus key maps); the responder is computed exactly by sweeping the
public tree while carrying, per public state, a reach vector over all
780 opponent private hands.  Showdown sums use strength-sorted prefix
scans with per-card corrections for card removal, so no 780x780 pairing
matrices appear anywhere.  Values are accumulated as unnormalized
count-weighted sums and divided once by the number of consistent
(hand, opponent hand, ordered board) combinations.

Exploitability in milli-antes per game uses the zero-sum cancellation
eps = (br_vs_p1 + br_vs_p2) / 2, so the (unknown) game value is never
needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .betting import ANTE
from .cards import NUM_CARDS, NUM_PAIRS, PAIR_INDEX, PAIRS
from .cfr import InducedStrategy
from .game import game_tree
from .hands import strength4
from .signal_index import get_signal_index

EPS_FLOOR = 1e-7  # numerical floor on epsilon, in antes

# consistent (opponent hand, ordered board) combos per responder hand
_NORMALIZER = 703.0 * 36.0 * 35.0


@dataclass
class ExploitabilityReport:
    br_value_vs_p1: float  # chips/game earned by a best responder against sigma_1
    br_value_vs_p2: float
    epsilon_chips: float
    epsilon_mbg: float
    meta: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "br_value_vs_p1": self.br_value_vs_p1,
            "br_value_vs_p2": self.br_value_vs_p2,
            "epsilon_chips": self.epsilon_chips,
            "epsilon_mbg": self.epsilon_mbg,
        }


@lru_cache(maxsize=1)
def _showdown_tables():
    """Per unordered board: hands sorted by strength, tie-group starts."""
    pairs = PAIRS.astype(np.int64)
    order_tab = np.zeros((NUM_PAIRS, 703), dtype=np.int32)
    gstart_tab = np.zeros((NUM_PAIRS, 703), dtype=np.int32)
    for bi in range(NUM_PAIRS):
        x, y = int(pairs[bi, 0]), int(pairs[bi, 1])
        ok = (
            (pairs[:, 0] != x)
            & (pairs[:, 0] != y)
            & (pairs[:, 1] != x)
            & (pairs[:, 1] != y)
        )
        hands = np.flatnonzero(ok)
        s = strength4(pairs[hands, 0], pairs[hands, 1], x, y)
        o = np.argsort(s, kind="stable")
        order_tab[bi] = hands[o]
        ss = s[o]
        starts = np.zeros(703, dtype=np.int32)
        for i in range(1, 703):
            starts[i] = starts[i - 1] if ss[i] == ss[i - 1] else i
        gstart_tab[bi] = starts
    return order_tab, gstart_tab


@lru_cache(maxsize=1)
def _card_incidence():
    """(780, 40) 0/1 matrix: hand contains card; for fold-mass sums."""
    inc = np.zeros((NUM_PAIRS, NUM_CARDS))
    inc[np.arange(NUM_PAIRS), PAIRS[:, 0]] = 1.0
    inc[np.arange(NUM_PAIRS), PAIRS[:, 1]] = 1.0
    return inc


@njit(cache=True)
def _phase3_sweep(
    node_lo, actor, slot, n_act, child, leaf_kind, leaf_u1, leaf_stake,
    responder, entry_reach, bucket_tab, f_probs3,
    pair_a, pair_b, pair_idx, order_tab, gstart_tab,
    collect, pol_rows, pol3, out,
):
    """Best-response values of one phase-3 betting subtree, all boards.

    entry_reach: (40, 780) fixed-player reach per phase-2 card b1 (hands
    holding b1 already zeroed).  out: (40, 780) accumulated responder
    values per b1, masked and summed over the phase-3 card b2.
    """
    n_hands = entry_reach.shape[1]
    reach_w = np.empty((10, n_hands))
    sigma_w = np.empty((10, n_hands, 3))
    val_w = np.empty((10, n_hands))
    leaf_val = np.empty(n_hands)
    scard = np.empty(NUM_CARDS)
    gcard = np.empty(NUM_CARDS)
    grp_card = np.empty(NUM_CARDS)
    win_buf = np.empty(703)
    tie_buf = np.empty(703)
    out[:, :] = 0.0
    for b1 in range(NUM_CARDS):
        row_max = 0.0
        for h in range(n_hands):
            if entry_reach[b1, h] > row_max:
                row_max = entry_reach[b1, h]
        if row_max <= 0.0:
            continue
        for b2 in range(NUM_CARDS):
            if b2 == b1:
                continue
            bp = pair_idx[b1, b2]
            board_code = b1 * NUM_CARDS + b2
            for h in range(n_hands):
                re = entry_reach[b1, h]
                if pair_a[h] == b2 or pair_b[h] == b2:
                    re = 0.0
                reach_w[0, h] = re
            # forward: gate fixed-player actions, copy responder reaches
            for j in range(10):
                n = node_lo + j
                na = n_act[n]
                mine = actor[n] == responder
                if not mine:
                    for h in range(n_hands):
                        if reach_w[j, h] > 0.0:
                            bkt = bucket_tab[board_code, h]
                            for a in range(na):
                                sigma_w[j, h, a] = f_probs3[bkt, slot[n], a]
                        else:
                            for a in range(na):
                                sigma_w[j, h, a] = 0.0
                for a in range(na):
                    c = child[n, a]
                    if c >= 0:
                        cj = c - node_lo
                        if mine:
                            for h in range(n_hands):
                                reach_w[cj, h] = reach_w[j, h]
                        else:
                            for h in range(n_hands):
                                reach_w[cj, h] = reach_w[j, h] * sigma_w[j, h, a]
            # backward: leaf masses, responder maxima, fixed-player sums
            for j in range(9, -1, -1):
                n = node_lo + j
                na = n_act[n]
                mine = actor[n] == responder
                for a in range(na):
                    c = child[n, a]
                    if c >= 0:
                        cj = c - node_lo
                        for h in range(n_hands):
                            leaf_val[h] = val_w[cj, h]
                    else:
                        l = -c - 1
                        # reach at the leaf: gated if the fixed player acted
                        for h in range(n_hands):
                            re = reach_w[j, h]
                            if not mine:
                                re *= sigma_w[j, h, a]
                            leaf_val[h] = re
                        t_sum = 0.0
                        for cc in range(NUM_CARDS):
                            scard[cc] = 0.0
                        for h in range(n_hands):
                            re = leaf_val[h]
                            t_sum += re
                            scard[pair_a[h]] += re
                            scard[pair_b[h]] += re
                        if leaf_kind[l] == 0:  # fold: +/- commitment x mass
                            u_r = leaf_u1[l] if responder == 0 else -leaf_u1[l]
                            for h in range(n_hands):
                                re = leaf_val[h]
                                mass = t_sum - scard[pair_a[h]] - scard[pair_b[h]] + re
                                leaf_val[h] = u_r * mass
                        else:  # showdown: stake x (win mass - loss mass)
                            stake = float(leaf_stake[l])
                            cum_total = 0.0
                            for cc in range(NUM_CARDS):
                                gcard[cc] = 0.0
                                grp_card[cc] = 0.0
                            pos = 0
                            while pos < 703:
                                g0 = pos
                                g1 = pos + 1
                                while g1 < 703 and gstart_tab[bp, g1] == g0:
                                    g1 += 1
                                grp_total = 0.0
                                for i in range(g0, g1):
                                    hh = order_tab[bp, i]
                                    re = leaf_val[hh]
                                    grp_total += re
                                    grp_card[pair_a[hh]] += re
                                    grp_card[pair_b[hh]] += re
                                for i in range(g0, g1):
                                    hh = order_tab[bp, i]
                                    a_c = pair_a[hh]
                                    b_c = pair_b[hh]
                                    win_buf[i] = cum_total - gcard[a_c] - gcard[b_c]
                                    tie_buf[i] = (
                                        grp_total
                                        - grp_card[a_c]
                                        - grp_card[b_c]
                                        + leaf_val[hh]
                                    )
                                for i in range(g0, g1):
                                    hh = order_tab[bp, i]
                                    re = leaf_val[hh]
                                    cum_total += re
                                    gcard[pair_a[hh]] += re
                                    gcard[pair_b[hh]] += re
                                    grp_card[pair_a[hh]] = 0.0
                                    grp_card[pair_b[hh]] = 0.0
                                pos = g1
                            for i in range(703):
                                hh = order_tab[bp, i]
                                re = leaf_val[hh]
                                total_dis = (
                                    t_sum - scard[pair_a[hh]] - scard[pair_b[hh]] + re
                                )
                                leaf_val[hh] = stake * (
                                    2.0 * win_buf[i] + tie_buf[i] - total_dis
                                )
                            for h in range(n_hands):
                                if (
                                    pair_a[h] == b1
                                    or pair_b[h] == b1
                                    or pair_a[h] == b2
                                    or pair_b[h] == b2
                                ):
                                    leaf_val[h] = 0.0
                    if a == 0:
                        for h in range(n_hands):
                            val_w[j, h] = leaf_val[h]
                        if mine and collect:
                            for h in range(n_hands):
                                pol3[pol_rows[n], board_code, h] = 0
                    elif mine:
                        if collect:
                            for h in range(n_hands):
                                if leaf_val[h] > val_w[j, h]:
                                    val_w[j, h] = leaf_val[h]
                                    pol3[pol_rows[n], board_code, h] = a
                        else:
                            for h in range(n_hands):
                                if leaf_val[h] > val_w[j, h]:
                                    val_w[j, h] = leaf_val[h]
                    else:
                        for h in range(n_hands):
                            val_w[j, h] += leaf_val[h]
            # accumulate subtree root values, masking responder hands on board
            for h in range(n_hands):
                if pair_a[h] == b1 or pair_b[h] == b1 or pair_a[h] == b2 or pair_b[h] == b2:
                    continue
                out[b1, h] += val_w[0, h]


@dataclass
class BRPolicy:
    """Argmax actions of the best responder, for Monte Carlo cross-checks."""

    responder: int
    node_rows: np.ndarray  # (num_nodes,) row into the per-phase tables, -1 if not ours
    pol1: np.ndarray  # (rows1, 780)
    pol2: np.ndarray  # (rows2, 40, 780)
    pol3: np.ndarray  # (rows3, 1600, 780)


def _fold_mass(reach: np.ndarray) -> np.ndarray:
    """Disjoint-opponent mass per responder hand; reach (..., 780)."""
    inc = _card_incidence()
    s = reach @ inc  # (..., 40) per-card sums
    total = reach.sum(axis=-1, keepdims=True)
    return total - s[..., PAIRS[:, 0]] - s[..., PAIRS[:, 1]] + reach


def best_response_value(
    strategy: InducedStrategy,
    responder: int,
    forced_prefix: tuple[int, ...] = (),
    collect_policy: bool = False,
):
    """Exact expected chips/game of a best responder against ``strategy``.

    ``forced_prefix`` freezes the first actions from the root (for both
    sides), evaluating the restricted game instead; used by oracle
    tests.  With ``collect_policy`` the responder's argmax tables are
    returned as well.
    """
    if strategy.player == responder:
        raise ValueError("responder must differ from the fixed player")
    tree = game_tree()
    index = get_signal_index()
    order_tab, gstart_tab = _showdown_tables()

    f = strategy.player
    keys1 = index.key1_of_pair
    keys2 = index.key2_of  # (40, 780)
    probs1 = strategy.probs[1][strategy.assign[1][keys1]]  # (780, slots, 3)
    probs2 = strategy.probs[2][strategy.assign[2][keys2]]  # (40, 780, slots, 3)
    bucket3 = strategy.assign[3][index.key3_of].reshape(
        NUM_CARDS * NUM_CARDS, NUM_PAIRS
    )  # indexed by b1*40+b2; junk where invalid, masked by zero reach
    f_probs3 = strategy.probs[3]

    node_rows = np.full(tree.num_nodes, -1, dtype=np.int32)
    for ph in (1, 2, 3):
        sel = np.flatnonzero((tree.actor == responder) & (tree.phase == ph))
        node_rows[sel] = np.arange(len(sel), dtype=np.int32)
    if collect_policy:
        pol1 = np.full((5, NUM_PAIRS), -1, dtype=np.int8)
        pol2 = np.full((45, NUM_CARDS, NUM_PAIRS), -1, dtype=np.int8)
        pol3 = np.full((405, NUM_CARDS * NUM_CARDS, NUM_PAIRS), -1, dtype=np.int8)
    else:
        pol1 = np.full((1, 1), -1, dtype=np.int8)
        pol2 = np.full((1, 1, 1), -1, dtype=np.int8)
        pol3 = np.full((1, 1, 1), -1, dtype=np.int8)

    pair_a = PAIRS[:, 0].astype(np.int64)
    pair_b = PAIRS[:, 1].astype(np.int64)
    leaf_u1 = tree.leaf_u1.astype(np.int64)
    leaf_stake = tree.leaf_stake.astype(np.int64)

    def phase3_values(node: int, entry_reach: np.ndarray) -> np.ndarray:
        out = np.empty_like(entry_reach)
        _phase3_sweep(
            node, tree.actor, tree.slot, tree.n_actions, tree.child,
            tree.leaf_kind, leaf_u1, leaf_stake,
            responder, entry_reach, bucket3, f_probs3,
            pair_a, pair_b, PAIR_INDEX.astype(np.int64), order_tab, gstart_tab,
            collect_policy, node_rows, pol3, out,
        )
        return out

    def leaf_value_12(leaf: int, reach: np.ndarray) -> np.ndarray:
        # only fold leaves exist before phase 3
        u_r = leaf_u1[leaf] if responder == 0 else -leaf_u1[leaf]
        return u_r * _fold_mass(reach)

    def walk2(node: int, reach: np.ndarray) -> np.ndarray:
        """Phase-2 subtree, vectorized over the 40 phase-2 cards."""
        mine = tree.actor[node] == responder
        na = int(tree.n_actions[node])
        sl = int(tree.slot[node])
        vals = None
        sig = None if mine else probs2[:, :, sl, :]
        for a in range(na):
            c = int(tree.child[node, a])
            if c >= 0 and tree.phase[c] == 3:
                er = reach if mine else reach * sig[:, :, a]
                v = phase3_values(c, er)
            elif c >= 0:
                v = walk2(c, reach if mine else reach * sig[:, :, a])
            else:
                leaf = -c - 1
                v = leaf_value_12(leaf, reach if mine else reach * sig[:, :, a])
            if vals is None:
                vals = v
                if mine and collect_policy:
                    pol2[node_rows[node]][:] = 0
            elif mine:
                if collect_policy:
                    improve = v > vals
                    pol2[node_rows[node]][improve] = a
                vals = np.maximum(vals, v)
            else:
                vals = vals + v
        return vals

    board1_mask = np.ones((NUM_CARDS, NUM_PAIRS))
    board1_mask[PAIRS[:, 0], np.arange(NUM_PAIRS)] = 0.0
    board1_mask[PAIRS[:, 1], np.arange(NUM_PAIRS)] = 0.0

    def walk1(node: int, reach: np.ndarray, prefix: tuple[int, ...]) -> np.ndarray:
        mine = tree.actor[node] == responder
        na = int(tree.n_actions[node])
        sl = int(tree.slot[node])
        sig = None if mine else probs1[:, sl, :]
        actions = range(na) if not prefix else (prefix[0],)
        rest = prefix[1:] if prefix else ()
        vals = None
        for a in actions:
            c = int(tree.child[node, a])
            if prefix:
                child_reach = reach  # frozen action: taken with probability 1
            else:
                child_reach = reach if mine else reach * sig[:, a]
            if c >= 0 and tree.phase[c] == 2:
                er = child_reach[None, :] * board1_mask  # (40, 780)
                v2 = walk2(c, er)
                v = (v2 * board1_mask).sum(axis=0)
            elif c >= 0:
                v = walk1(c, child_reach, rest)
            else:
                v = leaf_value_12(-c - 1, child_reach)
            if vals is None:
                vals = v
                if mine and collect_policy and not prefix:
                    pol1[node_rows[node]][:] = 0
            elif mine:
                if collect_policy:
                    pol1[node_rows[node]][v > vals] = a
                vals = np.maximum(vals, v)
            else:
                vals = vals + v
        return vals

    root_reach = np.ones(NUM_PAIRS)
    v = walk1(0, root_reach, tuple(forced_prefix))
    value = float(v.sum()) / (NUM_PAIRS * _NORMALIZER)
    if collect_policy:
        return value, BRPolicy(responder, node_rows, pol1, pol2, pol3)
    return value


def exploitability(
    strategy_p1: InducedStrategy, strategy_p2: InducedStrategy, meta: dict | None = None
) -> ExploitabilityReport:
    """Mean best-response gain against the profile, in chips and mb/g."""
    br_vs_p1 = best_response_value(strategy_p1, responder=1)
    br_vs_p2 = best_response_value(strategy_p2, responder=0)
    eps_chips = 0.5 * (br_vs_p1 + br_vs_p2)
    eps_mbg = eps_chips / ANTE * 1000.0
    if eps_mbg < -EPS_FLOOR * 1000.0:
        raise AssertionError(f"negative exploitability {eps_mbg} mb/g")
    return ExploitabilityReport(
        br_vs_p1, br_vs_p2, eps_chips, eps_mbg, dict(meta or {})
    )


def solver_exploitability(solver, meta: dict | None = None,
                          reuse=None) -> ExploitabilityReport:
    """Exploitability of a solver's current average profile.

    Materializes one player's normalized strategy at a time and reuses the
    buffer for the second side when table shapes match, which keeps the
    peak footprint of unabstracted evaluations near the solver tables
    themselves rather than doubling them.
    """
    from .cfr import single_player_strategy

    s = single_player_strategy(solver, 0, reuse=reuse)
    br_vs_p1 = best_response_value(s, responder=1)
    s = single_player_strategy(solver, 1, reuse=s)
    br_vs_p2 = best_response_value(s, responder=0)
    eps_chips = 0.5 * (br_vs_p1 + br_vs_p2)
    eps_mbg = eps_chips / ANTE * 1000.0
    return ExploitabilityReport(
        br_vs_p1, br_vs_p2, eps_chips, eps_mbg, dict(meta or {})
    )
