import os

import numpy as np
import pytest

from numeral211.betting import ANTE
from numeral211.cards import NUM_CARDS, NUM_PAIRS, PAIRS
from numeral211.cfr import (
    InducedStrategy,
    Solver,
    induce_full_strategy,
    single_player_strategy,
    solve,
    uniform_strategy,
)
from numeral211.evaluator import (
    best_response_value,
    exploitability,
    solver_exploitability,
)
from numeral211.game import game_tree
from numeral211.hands import strength4

# frozen exact golden: exploitability of the uniform-random profile
UNIFORM_BR_VS_P1 = 16.516133264098652
UNIFORM_BR_VS_P2 = 23.123801242575652
UNIFORM_EPS_MBG = 3963.993450667431


def always_action0(player, index):
    """'Check when possible, fold to any bet': always the first legal action."""
    u = uniform_strategy(player, index)
    probs = {}
    for ph in (1, 2, 3):
        p = np.zeros_like(u.probs[ph])
        p[:, :, 0] = 1.0
        probs[ph] = p
    return InducedStrategy(player, u.assign, probs)


# ---------------------------------------------------------------------------
# Naive oracle: explicit pairing matrices, no sorting tricks, no numba.


def naive_best_response(strategy: InducedStrategy, responder: int,
                        prefix: tuple[int, ...]) -> float:
    from numeral211.signal_index import get_signal_index

    tree = game_tree()
    index = get_signal_index()
    f = strategy.player
    pairs = PAIRS.astype(np.int64)
    disjoint = (
        (pairs[:, 0][:, None] != pairs[:, 0][None, :])
        & (pairs[:, 0][:, None] != pairs[:, 1][None, :])
        & (pairs[:, 1][:, None] != pairs[:, 0][None, :])
        & (pairs[:, 1][:, None] != pairs[:, 1][None, :])
    ).astype(np.float64)

    def sigma_rows(phase, board, slot):
        if phase == 1:
            keys = index.key1_of_pair
        elif phase == 2:
            keys = index.key2_of[board[0]]
        else:
            keys = index.key3_of[board[0], board[1]]
        return strategy.probs[phase][strategy.assign[phase][keys], slot]

    def hand_mask(board):
        ok = np.ones(NUM_PAIRS)
        for c in board:
            ok *= (pairs[:, 0] != c) & (pairs[:, 1] != c)
        return ok

    def walk(node, board, reach, prefix):
        mine = tree.actor[node] == responder
        na = int(tree.n_actions[node])
        slot = int(tree.slot[node])
        acts = (prefix[0],) if prefix else list(range(na))
        rest = prefix[1:] if prefix else ()
        sig = None if mine else sigma_rows(int(tree.phase[node]), board, slot)
        vals = None
        for a in acts:
            if prefix:
                r_a = reach
            else:
                r_a = reach if mine else reach * sig[:, a]
            c = int(tree.child[node, a])
            if c >= 0 and tree.phase[c] > tree.phase[node]:
                v = np.zeros(NUM_PAIRS)
                for card in range(NUM_CARDS):
                    if card in board:
                        continue
                    nb = board + (card,)
                    mask = hand_mask((card,))
                    v += walk(c, nb, r_a * mask, rest) * mask
            elif c >= 0:
                v = walk(c, board, r_a, rest)
            else:
                leaf = -c - 1
                if tree.leaf_kind[leaf] == 0:
                    u_r = int(tree.leaf_u1[leaf]) * (1 if responder == 0 else -1)
                    v = u_r * (disjoint @ r_a)
                else:
                    s = strength4(
                        pairs[:, 0], pairs[:, 1],
                        np.full(NUM_PAIRS, board[0]), np.full(NUM_PAIRS, board[1]),
                    ).astype(np.int64)
                    sign = np.sign(s[:, None] - s[None, :]).astype(np.float64)
                    v = int(tree.leaf_stake[leaf]) * ((sign * disjoint) @ r_a)
                    v *= hand_mask(board)
            if vals is None:
                vals = v
            elif mine:
                vals = np.maximum(vals, v)
            else:
                vals = vals + v
        return vals

    v = walk(0, (), np.ones(NUM_PAIRS), tuple(prefix))
    return float(v.sum()) / (NUM_PAIRS * 703.0 * 36.0 * 35.0)


def test_always_fold_exact_values(index):
    """A bet steals the ante from a never-calling opponent: value exactly 5."""
    assert best_response_value(always_action0(0, index), responder=1) == 5.0
    assert best_response_value(always_action0(1, index), responder=0) == 5.0


def test_uniform_profile_golden():
    br1 = best_response_value(uniform_strategy(0), responder=1)
    br2 = best_response_value(uniform_strategy(1), responder=0)
    assert br1 == pytest.approx(UNIFORM_BR_VS_P1, abs=1e-9)
    assert br2 == pytest.approx(UNIFORM_BR_VS_P2, abs=1e-9)
    rep = exploitability(uniform_strategy(0), uniform_strategy(1))
    assert rep.epsilon_mbg == pytest.approx(UNIFORM_EPS_MBG, abs=1e-6)
    assert rep.epsilon_mbg > 0
    assert rep.epsilon_chips == pytest.approx((br1 + br2) / 2)
    assert rep.row()["epsilon_mbg"] == rep.epsilon_mbg


def test_exploitability_nonnegative_and_finite(features, li_map):
    from numeral211.abstraction import build_ehs, merge_maps, passthrough_map

    amap = merge_maps([
        passthrough_map("li", 1, features),
        build_ehs(2, 30, 5, features),
        build_ehs(3, 40, 6, features),
    ])
    prof_a = solve(amap, li_map, iterations=30_000, seed=5, batch_size=4096)
    prof_b = solve(li_map, amap, iterations=30_000, seed=6, batch_size=4096)
    from numeral211.cfr import concat_asymmetric

    s1, s2 = concat_asymmetric(prof_a, prof_b)
    rep = exploitability(s1, s2)
    assert np.isfinite(rep.epsilon_mbg)
    assert rep.epsilon_mbg >= -1e-4  # numerical floor in mb/g


@pytest.mark.parametrize("responder", [0, 1])
def test_naive_agreement_restricted_two_checks(features, responder):
    """Vectorized vs naive best response, first two actions frozen to check."""
    amap = _small_map(features)
    prof = solve(amap, amap, iterations=20_000, seed=11, batch_size=4096)
    fixed = induce_full_strategy(prof, 1 - responder)
    prefix = (0, 0)
    fast = best_response_value(fixed, responder=responder, forced_prefix=prefix)
    slow = naive_best_response(fixed, responder=responder, prefix=prefix)
    assert fast == pytest.approx(slow, abs=1e-9)


@pytest.mark.slow
def test_naive_agreement_restricted_one_check(features):
    """Spec-scale variant: only the first betting action frozen."""
    amap = _small_map(features)
    prof = solve(amap, amap, iterations=20_000, seed=12, batch_size=4096)
    fixed = induce_full_strategy(prof, 0)
    fast = best_response_value(fixed, responder=1, forced_prefix=(0,))
    slow = naive_best_response(fixed, responder=1, prefix=(0,))
    assert fast == pytest.approx(slow, abs=1e-9)


def _small_map(features):
    from numeral211.abstraction import build_ehs, merge_maps, passthrough_map

    return merge_maps([
        passthrough_map("li", 1, features),
        build_ehs(2, 25, 7, features),
        build_ehs(3, 35, 8, features),
    ])


# ---------------------------------------------------------------------------
# Monte Carlo cross-check of the best-response value.


def mc_rollout_value(policy, n_samples: int, seed: int) -> tuple[float, float]:
    """Play the extracted argmax policy against the uniform player.

    Vectorized state machine over the betting tree; returns (mean, sem)
    of the responder's chips per game.
    """
    tree = game_tree()
    from numeral211.cards import PAIR_INDEX

    responder = policy.responder
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    chunk = 1_000_000
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        done += b
        order = np.argsort(rng.random((b, NUM_CARDS)), axis=1, kind="stable")
        deals = order[:, :6].astype(np.int16)
        pair_r = PAIR_INDEX[deals[:, 2 * responder], deals[:, 2 * responder + 1]]
        s1 = strength4(deals[:, 0], deals[:, 1], deals[:, 4], deals[:, 5])
        s2 = strength4(deals[:, 2], deals[:, 3], deals[:, 4], deals[:, 5])
        sign = np.sign(s1 - s2).astype(np.int64)
        node = np.zeros(b, dtype=np.int64)
        active = np.ones(b, dtype=bool)
        u_r = np.zeros(b)
        b1 = deals[:, 4].astype(np.int64)
        b2 = deals[:, 5].astype(np.int64)
        board_code = b1 * NUM_CARDS + b2
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            na = tree.n_actions[nd].astype(np.int64)
            actor = tree.actor[nd]
            act = np.empty(len(idx), dtype=np.int64)
            is_resp = actor == responder
            # responder rows: argmax tables
            if is_resp.any():
                rows = idx[is_resp]
                nn = node[rows]
                ph = tree.phase[nn]
                prow = policy.node_rows[nn]
                a = np.empty(len(rows), dtype=np.int64)
                for phase, table in ((1, policy.pol1), (2, policy.pol2), (3, policy.pol3)):
                    m = ph == phase
                    if not m.any():
                        continue
                    if phase == 1:
                        a[m] = table[prow[m], pair_r[rows][m]]
                    elif phase == 2:
                        a[m] = table[prow[m], b1[rows][m], pair_r[rows][m]]
                    else:
                        a[m] = table[prow[m], board_code[rows][m], pair_r[rows][m]]
                act[is_resp] = a
            # uniform rows: random legal action
            if (~is_resp).any():
                rows = np.flatnonzero(~is_resp)
                act[rows] = (rng.random(len(rows)) * na[rows]).astype(np.int64)
            child = tree.child[nd, act]
            leaf = child < 0
            if leaf.any():
                l = -child[leaf] - 1
                u1 = tree.leaf_u1[l] + sign[idx[leaf]] * tree.leaf_stake[l]
                u_r[idx[leaf]] = u1 if responder == 0 else -u1
                active[idx[leaf]] = False
            node[idx[~leaf]] = child[~leaf]
        total += float(u_r.sum())
        total_sq += float((u_r ** 2).sum())
    mean = total / n_samples
    var = total_sq / n_samples - mean ** 2
    return mean, float(np.sqrt(var / n_samples))


@pytest.mark.slow
def test_monte_carlo_cross_check_vs_uniform():
    n = int(os.environ.get("N211_MC_SAMPLES", 10_000_000))
    value, policy = best_response_value(
        uniform_strategy(0), responder=1, collect_policy=True
    )
    assert value == pytest.approx(UNIFORM_BR_VS_P1, abs=1e-9)
    mean, sem = mc_rollout_value(policy, n, seed=424242)
    assert abs(mean - value) <= 3.0 * sem, (mean, value, sem)
