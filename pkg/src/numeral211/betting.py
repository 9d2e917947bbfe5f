"""Fixed-limit betting for one phase of Numeral211 Hold'em.

Rules: the first actor may check or bet a fixed amount (10 in phase 1,
20 in phases 2 and 3); once a bet is in, players fold, call, or raise by
the same fixed increment, with at most 3 raises per phase (the opening
bet does not count toward the cap).  The phase ends when both players
check or one calls; a fold ends the game.  Player 1 acts first in
phase 1, player 2 in phases 2 and 3.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum


ANTE = 5
NUM_PHASES = 3
MAX_RAISES = 3


def bet_size(phase: int) -> int:
    return 10 if phase == 1 else 20


def first_actor(phase: int) -> int:
    # player ids are 0 (Player 1) and 1 (Player 2)
    return 0 if phase == 1 else 1


class Action(Enum):
    CHECK = "k"
    BET = "b"
    FOLD = "f"
    CALL = "c"
    RAISE = "r"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class BettingState:
    phase: int
    history: tuple[Action, ...]  # actions taken in this phase so far
    committed: tuple[int, int]  # total chips each player has put in, antes included
    to_act: int
    raises: int = 0
    folded: int | None = None

    @property
    def pot(self) -> int:
        return self.committed[0] + self.committed[1]

    @property
    def facing_bet(self) -> bool:
        return self.committed[0] != self.committed[1]


@dataclass(frozen=True)
class PhaseEnd:
    """Outcome of the last action of a phase: advance to next phase or fold."""

    kind: str  # "advance" or "fold"
    state: BettingState

    @property
    def folder(self) -> int | None:
        return self.state.folded


def initial_betting_state(phase: int, carried_pot: int = 2 * ANTE) -> BettingState:
    """State at the start of a betting phase.

    ``carried_pot`` is the pot entering the phase; both players have always
    committed equally at a phase boundary (phases only advance on check-check
    or call), so it must be even.  At phase 1 it is the two antes.
    """
    if phase not in (1, 2, 3):
        raise ValueError(f"phase out of range: {phase}")
    if phase == 1 and carried_pot != 2 * ANTE:
        raise ValueError("phase 1 starts from the two antes")
    if carried_pot % 2 != 0:
        raise ValueError("carried pot must split evenly between the players")
    half = carried_pot // 2
    return BettingState(
        phase=phase, history=(), committed=(half, half), to_act=first_actor(phase)
    )


def legal_actions(state: BettingState) -> tuple[Action, ...]:
    if state.folded is not None:
        raise ValueError("no actions at a fold terminal")
    if not state.facing_bet:
        if len(state.history) >= 2 and state.history[-1] is Action.CHECK:
            raise ValueError("phase already ended (check, check)")
        if state.history and state.history[-1] in (Action.CALL,):
            raise ValueError("phase already ended (call)")
        return (Action.CHECK, Action.BET)
    if state.raises < MAX_RAISES:
        return (Action.FOLD, Action.CALL, Action.RAISE)
    return (Action.FOLD, Action.CALL)


def apply_action(state: BettingState, action: Action) -> BettingState | PhaseEnd:
    """Apply one action; returns the next state, or PhaseEnd when the phase is over."""
    if action not in legal_actions(state):
        raise ValueError(f"illegal action {action} at {state.history}")
    me = state.to_act
    opp = 1 - me
    commit = list(state.committed)
    to_call = commit[opp] - commit[me]
    step = bet_size(state.phase)
    raises = state.raises

    if action is Action.FOLD:
        final = replace(
            state, history=state.history + (action,), folded=me, to_act=opp
        )
        return PhaseEnd("fold", final)
    if action is Action.CHECK:
        pass
    elif action is Action.BET:
        commit[me] += step
    elif action is Action.CALL:
        commit[me] += to_call
    elif action is Action.RAISE:
        commit[me] += to_call + step
        raises += 1

    nxt = BettingState(
        phase=state.phase,
        history=state.history + (action,),
        committed=(commit[0], commit[1]),
        to_act=opp,
        raises=raises,
    )
    both_checked = action is Action.CHECK and len(nxt.history) == 2
    if action is Action.CALL or both_checked:
        return PhaseEnd("advance", nxt)
    return nxt


def walk_phase(phase: int, carried_pot: int = 2 * ANTE):
    """Enumerate the phase's betting tree.

    Returns (nodes, terminals): ``nodes`` is a list of decision states in
    preorder; ``terminals`` a list of PhaseEnd in discovery order.
    """
    nodes: list[BettingState] = []
    terminals: list[PhaseEnd] = []

    def rec(state: BettingState) -> None:
        nodes.append(state)
        for a in legal_actions(state):
            out = apply_action(state, a)
            if isinstance(out, PhaseEnd):
                terminals.append(out)
            else:
                rec(out)

    rec(initial_betting_state(phase, carried_pot))
    return nodes, terminals
