"""Whole-game assembly for Numeral211 Hold'em.

Combines the per-phase betting engine into a single static tree (betting
sequences only; chance is handled by the caller), and computes terminal
utilities.  The tree is the shared backbone of the CFR solver and the
best-response evaluator: node ``slot`` ids index their strategy tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .betting import (
    ANTE,
    Action,
    BettingState,
    PhaseEnd,
    apply_action,
    initial_betting_state,
    legal_actions,
)
from .cards import card_str, check_distinct
from .hands import HandRank, evaluate_hand


class Deal(NamedTuple):
    """One full dealing of cards: private pairs plus the ordered board."""

    p1: tuple[int, int]
    p2: tuple[int, int]
    board: tuple[int, ...]  # up to 2 cards; phase-2 card first

    def validate(self) -> None:
        check_distinct(self.p1 + self.p2 + self.board)
        if len(self.p1) != 2 or len(self.p2) != 2 or len(self.board) > 2:
            raise ValueError("malformed deal")

    def __str__(self) -> str:
        fmt = lambda cs: "".join(card_str(c) for c in cs)
        return f"P1:{fmt(self.p1)} P2:{fmt(self.p2)} board:{fmt(self.board)}"


def terminal_utility(deal: Deal, terminal: BettingState) -> tuple[int, int]:
    """Chip outcome (u1, u2) at a terminal betting state; zero-sum.

    A fold forfeits the folder's total commitment to the opponent.  A
    showdown (after phase 3) awards the loser's commitment to the winner;
    equal hands push.
    """
    deal.validate()
    if terminal.folded is not None:
        loser = terminal.folded
        amount = terminal.committed[loser]
        u1 = -amount if loser == 0 else amount
        return (u1, -u1)
    if terminal.phase != 3 or len(deal.board) != 2:
        raise ValueError("showdown requires a completed phase-3 state")
    r1 = evaluate_hand(deal.p1 + deal.board)
    r2 = evaluate_hand(deal.p2 + deal.board)
    if r1 == r2:
        return (0, 0)
    # commitments are equal at a showdown; winner nets the loser's stake
    stake = terminal.committed[0]
    u1 = stake if r1 > r2 else -stake
    return (u1, -u1)


def showdown_rank(private: tuple[int, int], board: tuple[int, ...]) -> HandRank:
    return evaluate_hand(private + board)


# ---------------------------------------------------------------------------
# Static full-game betting tree.

FOLD_LEAF = 0
SHOWDOWN_LEAF = 1


@dataclass
class GameTree:
    """Flattened betting tree across the three phases.

    ``child[n, a] >= 0`` is a decision-node index, ``< 0`` encodes leaf
    ``-(child + 1)``.  ``slot`` numbers the decision nodes per (actor,
    phase) and is the row index of all strategy/regret tables.
    """

    actor: np.ndarray  # (N,) int8
    phase: np.ndarray  # (N,) int8
    slot: np.ndarray  # (N,) int32
    n_actions: np.ndarray  # (N,) int8
    child: np.ndarray  # (N, 3) int32
    action_codes: np.ndarray  # (N, 3) int8, Action order as in _ACTION_CODE
    leaf_kind: np.ndarray  # (L,) int8
    leaf_phase: np.ndarray  # (L,) int8
    leaf_u1: np.ndarray  # (L,) int32: fold leaves only, chips for player 1
    leaf_stake: np.ndarray  # (L,) int32: showdown leaves, per-player commitment
    slots_per_phase: np.ndarray  # (2, 4) int32: decision rows per (player, phase)
    node_label: list[str] = field(default_factory=list)
    leaf_label: list[str] = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return len(self.actor)

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_kind)


_ACTION_CODE = {a: i for i, a in enumerate(Action)}
ACTION_BY_CODE = list(Action)


def build_game_tree() -> GameTree:
    """Enumerate every betting line of the full game once."""
    actor: list[int] = []
    phase: list[int] = []
    slot: list[int] = []
    n_actions: list[int] = []
    child: list[list[int]] = []
    action_codes: list[list[int]] = []
    node_label: list[str] = []
    leaf_kind: list[int] = []
    leaf_phase: list[int] = []
    leaf_u1: list[int] = []
    leaf_stake: list[int] = []
    leaf_label: list[str] = []
    slot_counter = np.zeros((2, 4), dtype=np.int32)

    def add_leaf(end: PhaseEnd, label: str) -> int:
        state = end.state
        if end.kind == "fold":
            loser = state.folded
            amount = state.committed[loser]
            leaf_kind.append(FOLD_LEAF)
            leaf_u1.append(-amount if loser == 0 else amount)
            leaf_stake.append(0)
        else:
            leaf_kind.append(SHOWDOWN_LEAF)
            leaf_u1.append(0)
            leaf_stake.append(state.committed[0])
        leaf_phase.append(state.phase)
        leaf_label.append(label)
        return len(leaf_kind) - 1

    def rec(state: BettingState, label: str) -> int:
        idx = len(actor)
        p = state.to_act
        acts = legal_actions(state)
        actor.append(p)
        phase.append(state.phase)
        slot.append(int(slot_counter[p, state.phase]))
        slot_counter[p, state.phase] += 1
        n_actions.append(len(acts))
        child.append([0, 0, 0])
        action_codes.append([-1, -1, -1])
        node_label.append(label)
        for ai, a in enumerate(acts):
            out = apply_action(state, a)
            sub = label + str(a)
            action_codes[idx][ai] = _ACTION_CODE[a]
            if isinstance(out, PhaseEnd):
                if out.kind == "fold":
                    child[idx][ai] = -(add_leaf(out, sub) + 1)
                elif state.phase == 3:
                    child[idx][ai] = -(add_leaf(out, sub) + 1)
                else:
                    nxt = initial_betting_state(
                        state.phase + 1, out.state.pot
                    )
                    # commitments carry across the phase boundary
                    nxt = BettingState(
                        phase=nxt.phase,
                        history=(),
                        committed=out.state.committed,
                        to_act=nxt.to_act,
                    )
                    child[idx][ai] = rec(nxt, sub + "/")
            else:
                child[idx][ai] = rec(out, sub)
        return idx

    rec(initial_betting_state(1), "")
    return GameTree(
        actor=np.array(actor, dtype=np.int8),
        phase=np.array(phase, dtype=np.int8),
        slot=np.array(slot, dtype=np.int32),
        n_actions=np.array(n_actions, dtype=np.int8),
        child=np.array(child, dtype=np.int32),
        action_codes=np.array(action_codes, dtype=np.int8),
        leaf_kind=np.array(leaf_kind, dtype=np.int8),
        leaf_phase=np.array(leaf_phase, dtype=np.int8),
        leaf_u1=np.array(leaf_u1, dtype=np.int32),
        leaf_stake=np.array(leaf_stake, dtype=np.int32),
        slots_per_phase=slot_counter,
        node_label=node_label,
        leaf_label=leaf_label,
    )


_TREE_CACHE: GameTree | None = None


def game_tree() -> GameTree:
    global _TREE_CACHE
    if _TREE_CACHE is None:
        _TREE_CACHE = build_game_tree()
    return _TREE_CACHE


def format_tree(tree: GameTree | None = None) -> str:
    """Human-readable dump of the betting tree (debug CLI)."""
    tree = tree or game_tree()
    lines = []
    for i in range(tree.num_nodes):
        acts = "".join(
            str(ACTION_BY_CODE[c]) for c in tree.action_codes[i] if c >= 0
        )
        lines.append(
            f"node {i:4d} phase {tree.phase[i]} P{tree.actor[i] + 1} "
            f"slot {tree.slot[i]:3d} [{acts}] {tree.node_label[i] or '<root>'}"
        )
    lines.append(
        f"{tree.num_nodes} decision nodes, {tree.num_leaves} terminal lines"
    )
    return "\n".join(lines)
