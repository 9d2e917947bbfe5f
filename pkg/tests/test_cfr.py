import numpy as np
import pytest

from numeral211.abstraction import build_ehs, merge_maps, passthrough_map
from numeral211.betting import BettingState, PhaseEnd, apply_action, initial_betting_state, legal_actions
from numeral211.cfr import (
    Solver,
    _deal_batch,
    concat_asymmetric,
    induce_full_strategy,
    regret_matching,
    single_player_strategy,
    solve,
    uniform_strategy,
)
from numeral211.game import game_tree
from numeral211.hands import strength4


def small_maps(features):
    m1 = merge_maps([
        passthrough_map("li", 1, features),
        build_ehs(2, 40, 1, features),
        build_ehs(3, 60, 2, features),
    ])
    m2 = merge_maps([
        passthrough_map("pawi", 1, features),
        build_ehs(2, 30, 3, features),
        build_ehs(3, 50, 4, features),
    ])
    return m1, m2


def test_regret_matching_examples():
    assert np.allclose(regret_matching([-1.0, -2.0]), [0.5, 0.5])
    assert np.allclose(regret_matching([3.0, 1.0]), [0.75, 0.25])
    assert np.allclose(regret_matching([0.0, 5.0, 0.0]), [0.0, 1.0, 0.0])


def test_zero_iterations_gives_uniform(features):
    m1, m2 = small_maps(features)
    prof = solve(m1, m2, iterations=0, seed=1)
    tree = game_tree()
    for p in (0, 1):
        for ph in (1, 2, 3):
            probs = prof.probs[(p, ph)]
            sel = (tree.actor == p) & (tree.phase == ph)
            for slot, na in zip(tree.slot[sel], tree.n_actions[sel]):
                want = np.zeros(3)
                want[:na] = 1.0 / na
                assert np.allclose(probs[:, slot, :], want[None, :])


class ReferenceCFR:
    """Dict-keyed chance-sampled CFR over the betting engine (oracle)."""

    def __init__(self, maps, index):
        self.maps = maps
        self.index = index
        self.regrets = {}
        self.ssum = {}

    def bucket(self, player, phase, deal):
        pair = (int(deal[2 * player]), int(deal[2 * player + 1]))
        board = tuple(int(c) for c in deal[4 : 4 + phase - 1])
        return int(self.maps[player].phases[phase][self.index.key_index(pair, board)])

    def sigma(self, key, n):
        r = self.regrets.get(key)
        if r is None:
            return [1.0 / n] * n
        pos = [max(x, 0.0) for x in r]
        t = sum(pos)
        return [x / t for x in pos] if t > 0 else [1.0 / n] * n

    def walk(self, state, trace, deal, sign, t, pi_s, pi_o, update=True):
        p = state.to_act
        acts = legal_actions(state)
        key = (p, state.phase, self.bucket(p, state.phase, deal), trace)
        sig = self.sigma(key, len(acts))
        vals = []
        for i, a in enumerate(acts):
            out = apply_action(state, a)
            sub = trace + str(a)
            ps = pi_s * (sig[i] if p == t else 1.0)
            po = pi_o * (sig[i] if p != t else 1.0)
            if isinstance(out, PhaseEnd):
                if out.kind == "fold" or state.phase == 3:
                    st = out.state
                    if st.folded is not None:
                        amt = st.committed[st.folded]
                        u1 = -amt if st.folded == 0 else amt
                    else:
                        u1 = sign * st.committed[0]
                    vals.append(u1 if t == 0 else -u1)
                else:
                    nxt = BettingState(
                        phase=state.phase + 1, history=(),
                        committed=out.state.committed, to_act=1,
                    )
                    vals.append(self.walk(nxt, sub + "/", deal, sign, t, ps, po, update))
            else:
                vals.append(self.walk(out, sub, deal, sign, t, ps, po, update))
        v = sum(s * va for s, va in zip(sig, vals))
        if update and p == t:
            r = self.regrets.setdefault(key, [0.0] * len(acts))
            s_ = self.ssum.setdefault(key, [0.0] * len(acts))
            for i in range(len(acts)):
                r[i] += pi_o * (vals[i] - v)
                s_[i] += pi_s * sig[i]
        return v


def test_kernel_matches_reference_cfr(features, index):
    maps = small_maps(features)
    n_iters, seed = 300, 123
    ref = ReferenceCFR(maps, index)
    rng = np.random.default_rng(seed)
    deals = _deal_batch(rng, n_iters)
    signs = np.sign(
        strength4(deals[:, 0], deals[:, 1], deals[:, 4], deals[:, 5])
        - strength4(deals[:, 2], deals[:, 3], deals[:, 4], deals[:, 5])
    ).astype(int)
    for d in range(n_iters):
        ref.walk(initial_betting_state(1), "", deals[d], int(signs[d]), d & 1, 1.0, 1.0)

    solver = Solver(*maps, seed=seed, batch_size=n_iters)
    solver.run(n_iters)

    tree = game_tree()
    slot_of = {
        (int(tree.actor[n]), int(tree.phase[n]), tree.node_label[n]): int(tree.slot[n])
        for n in range(tree.num_nodes)
    }
    worst = 0.0
    for (p, ph, b, trace), r in ref.regrets.items():
        slot = slot_of[(p, ph, trace)]
        got_r = solver.tables[p].regret[ph][b, slot]
        got_s = solver.tables[p].strat_sum[ph][b, slot]
        s_ = ref.ssum[(p, ph, b, trace)]
        for i in range(len(r)):
            worst = max(worst, abs(r[i] - got_r[i]), abs(s_[i] - got_s[i]))
    assert worst < 1e-8


def test_root_values_zero_sum(features, index):
    """With fixed tables, the two players' root values are exact negatives."""
    maps = small_maps(features)
    ref = ReferenceCFR(maps, index)
    rng = np.random.default_rng(7)
    deals = _deal_batch(rng, 60)
    signs = np.sign(
        strength4(deals[:, 0], deals[:, 1], deals[:, 4], deals[:, 5])
        - strength4(deals[:, 2], deals[:, 3], deals[:, 4], deals[:, 5])
    ).astype(int)
    # some training first so strategies are non-uniform
    for d in range(40):
        ref.walk(initial_betting_state(1), "", deals[d], int(signs[d]), d & 1, 1.0, 1.0)
    for d in range(40, 60):
        v0 = ref.walk(initial_betting_state(1), "", deals[d], int(signs[d]), 0, 1.0, 1.0, update=False)
        v1 = ref.walk(initial_betting_state(1), "", deals[d], int(signs[d]), 1, 1.0, 1.0, update=False)
        assert v0 + v1 == pytest.approx(0.0, abs=1e-12)


def test_fixed_seed_bitwise_reproducible(features):
    m1, m2 = small_maps(features)
    s1 = Solver(m1, m2, seed=99, batch_size=512)
    s1.run(2048)
    s2 = Solver(m1, m2, seed=99, batch_size=512)
    s2.run(2048)
    assert s1.regret_flat.tobytes() == s2.regret_flat.tobytes()
    assert s1.ssum_flat.tobytes() == s2.ssum_flat.tobytes()
    s3 = Solver(m1, m2, seed=100, batch_size=512)
    s3.run(2048)
    assert s1.regret_flat.tobytes() != s3.regret_flat.tobytes()


def test_checkpoint_roundtrip_and_determinism(features, tmp_path):
    m1, m2 = small_maps(features)
    solver = Solver(m1, m2, seed=5, batch_size=256)
    solver.run(1024)
    p1, p2 = tmp_path / "a.ck", tmp_path / "b.ck"
    solver.save_checkpoint(p1)
    solver.save_checkpoint(p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = Solver.load_checkpoint(p1)
    assert back.iterations_done == 1024
    assert back.regret_flat.tobytes() == solver.regret_flat.tobytes()
    assert back.ssum_flat.tobytes() == solver.ssum_flat.tobytes()
    for p in (0, 1):
        for ph in (1, 2, 3):
            assert np.array_equal(back.maps[p].phases[ph], solver.maps[p].phases[ph])


def test_induced_strategy_semantics(features, li_map):
    m1, m2 = small_maps(features)
    prof = solve(m1, m2, iterations=3000, seed=2, batch_size=512)
    ind = induce_full_strategy(prof, 0)
    # identity abstraction: induced rows equal profile rows
    prof_li = solve(li_map, m2, iterations=1000, seed=2, batch_size=512)
    ind_li = induce_full_strategy(prof_li, 0)
    for key in (0, 37, 99):
        assert np.array_equal(
            ind_li.distribution(1, key, 0), prof_li.probs[(0, 1)][key, 0]
        )
    # two keys in one bucket answer identically at equal betting slots
    assign = m1.phases[3]
    b = assign[0]
    same = np.flatnonzero(assign == b)[:2]
    assert np.array_equal(
        ind.distribution(3, int(same[0]), 7), ind.distribution(3, int(same[1]), 7)
    )
    # induced rows stay normalized over legal actions
    tree = game_tree()
    sel = (tree.actor == 0) & (tree.phase == 2)
    for slot, na in zip(tree.slot[sel][:5], tree.n_actions[sel][:5]):
        rows = ind.gather(2, np.arange(50), int(slot))
        assert np.allclose(rows.sum(axis=1), 1.0)
        assert np.all(rows[:, na:] == 0)


def test_concat_asymmetric(features, li_map):
    m1, _ = small_maps(features)
    prof_a = solve(m1, li_map, iterations=2000, seed=3, batch_size=512)
    prof_b = solve(li_map, m1, iterations=2000, seed=4, batch_size=512)
    s1, s2 = concat_asymmetric(prof_a, prof_b)
    assert s1.player == 0 and s2.player == 1
    assert s1.probs[3] is prof_a.probs[(0, 3)]
    assert s2.probs[3] is prof_b.probs[(1, 3)]
    rows = s1.gather(1, np.arange(100), 0)
    assert np.allclose(rows.sum(axis=1), 1.0)


def test_uniform_strategy_rows(index):
    u = uniform_strategy(0, index)
    assert np.allclose(u.gather(1, np.arange(100), 0).sum(axis=1), 1.0)
    tree = game_tree()
    sel = (tree.actor == 0) & (tree.phase == 3)
    slot = int(tree.slot[sel][0])
    na = int(tree.n_actions[sel][0])
    row = u.distribution(3, 123, slot)
    assert np.allclose(row[:na], 1.0 / na) and np.all(row[na:] == 0)


def test_single_player_strategy_matches_profile(features):
    m1, m2 = small_maps(features)
    solver = Solver(m1, m2, seed=8, batch_size=512)
    solver.run(2048)
    prof = solver.average_profile()
    sp = single_player_strategy(solver, 0)
    for ph in (1, 2, 3):
        assert np.allclose(sp.probs[ph], prof.probs[(0, ph)])
