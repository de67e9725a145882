"""Top-down transition system with generative constrained decoding.

States are immutable; the stack and the action history are persistent linked
lists of ``(head, tail)`` pairs so successors share structure with their
parents.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .treebank import (
    GEN,
    NT,
    REDUCE,
    REDUCE_X,
    SHIFT,
    Action,
    ActionSequence,
    Inventory,
    Kind,
    Node,
    Sentence,
    Tree,
)


class TransitionError(ValueError):
    pass


class Mode(enum.Enum):
    DISCRIMINATIVE = "discriminative"
    GENERATIVE_CONSTRAINED = "generative"


class _Open:
    """Open-nonterminal marker on the stack."""

    __slots__ = ("label",)

    def __init__(self, label: str):
        self.label = label

    def __repr__(self) -> str:
        return f"Open({self.label})"

    def __eq__(self, other) -> bool:
        return isinstance(other, _Open) and other.label == self.label

    def __hash__(self) -> int:
        return hash(("_Open", self.label))


@dataclass(frozen=True)
class Constraints:
    labels: tuple[str, ...]
    max_open_nts: int = 100
    inventory: Inventory = Inventory.UNLABELED_REDUCE
    mode: Mode = Mode.GENERATIVE_CONSTRAINED
    require_label_match: bool = False
    nt_actions: tuple[Action, ...] = field(init=False, repr=False, compare=False)
    reduce_actions: tuple[Action, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.max_open_nts < 1:
            raise ValueError("max_open_nts must be >= 1")
        if not self.labels:
            raise ValueError("need at least one nonterminal label")
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "nt_actions", tuple(NT(x) for x in labels))
        if self.inventory == Inventory.LABELED_REDUCE:
            reduces = tuple(REDUCE_X(x) for x in labels)
        else:
            reduces = (REDUCE,)
        object.__setattr__(self, "reduce_actions", reduces)


class ParserState(NamedTuple):
    stack: Optional[tuple]  # linked list (item, rest); items are _Open or Tree/str
    open_count: int
    words_done: int
    struct_since_word: int
    history: Optional[tuple]  # linked list (action, rest), most recent first
    n_actions: int
    finished: bool

    @property
    def last_action(self) -> Action | None:
        return self.history[0] if self.history else None

    def recent_actions(self, n: int) -> tuple[Action, ...]:
        """The last ``n`` actions, oldest first."""
        out = []
        h = self.history
        while h is not None and len(out) < n:
            out.append(h[0])
            h = h[1]
        return tuple(reversed(out))

    def actions(self, inventory: Inventory = Inventory.UNLABELED_REDUCE) -> ActionSequence:
        return ActionSequence(self.recent_actions(self.n_actions), inventory)

    def stack_items(self) -> list:
        out = []
        s = self.stack
        while s is not None:
            out.append(s[0])
            s = s[1]
        return out[::-1]

    def top_is_open(self) -> bool:
        return self.stack is not None and isinstance(self.stack[0], _Open)

    def current_label(self) -> str | None:
        """Label of the innermost open constituent."""
        s = self.stack
        while s is not None:
            if isinstance(s[0], _Open):
                return s[0].label
            s = s[1]
        return None

    def tree(self) -> Tree:
        if not self.finished:
            raise TransitionError("state is not final")
        return self.stack[0]


def initial_state(sentence: Sentence) -> ParserState:
    return ParserState(None, 0, 0, 0, None, 0, False)


def is_final(state: ParserState) -> bool:
    return state.finished


def legal_actions(state: ParserState, sentence: Sentence, c: Constraints) -> tuple[Action, ...]:
    """Legal actions in canonical order: NTs (label order), the word action, REDUCEs."""
    if state.finished:
        raise TransitionError("no actions from a final state")
    n = len(sentence)
    out: list[Action] = []
    words_left = state.words_done < n
    if words_left and state.open_count < c.max_open_nts:
        out.extend(c.nt_actions)
    if words_left and state.open_count >= 1:
        if c.mode == Mode.DISCRIMINATIVE:
            out.append(SHIFT)
        else:
            out.append(GEN(sentence[state.words_done]))
    if (
        state.open_count >= 1
        and not state.top_is_open()
        and (state.open_count > 1 or not words_left)
    ):
        if c.inventory == Inventory.LABELED_REDUCE and c.require_label_match:
            out.append(REDUCE_X(state.current_label()))
        else:
            out.extend(c.reduce_actions)
    return tuple(out)


def _check(state: ParserState, action: Action, sentence: Sentence, c: Constraints) -> None:
    if state.finished:
        raise TransitionError(f"{action} applied to a final state")
    n = len(sentence)
    k = action.kind
    if k == Kind.NT:
        if state.words_done >= n:
            raise TransitionError(f"{action}: all words already generated")
        if state.open_count >= c.max_open_nts:
            raise TransitionError(f"{action}: open-nonterminal limit {c.max_open_nts} reached")
        if action.symbol not in c.labels:
            raise TransitionError(f"{action}: unknown label")
    elif k in (Kind.GEN, Kind.SHIFT):
        if state.words_done >= n:
            raise TransitionError(f"{action}: all words already generated")
        if state.open_count < 1:
            raise TransitionError(f"{action}: no open constituent")
        if k == Kind.GEN and action.symbol != sentence[state.words_done]:
            raise TransitionError(
                f"{action}: next word is {sentence[state.words_done]!r}"
            )
    else:
        if state.open_count < 1:
            raise TransitionError("REDUCE with no open constituent")
        if state.top_is_open():
            raise TransitionError("REDUCE on an empty constituent")
        if state.open_count == 1 and state.words_done < n:
            raise TransitionError("REDUCE of the root before all words are generated")
        labeled = c.inventory == Inventory.LABELED_REDUCE
        if labeled != (action.symbol is not None):
            raise TransitionError(f"{action} does not match inventory {c.inventory.value}")
        if labeled:
            if action.symbol not in c.labels:
                raise TransitionError(f"{action}: unknown label")
            if c.require_label_match and action.symbol != state.current_label():
                raise TransitionError(f"{action}: label does not match open {state.current_label()}")


def advance(state: ParserState, action: Action, sentence: Sentence) -> ParserState:
    """Apply ``action`` without legality checks (callers pass legal actions only)."""
    k = action.kind
    history = (action, state.history)
    if k == Kind.NT:
        return ParserState(
            (_Open(action.symbol), state.stack),
            state.open_count + 1,
            state.words_done,
            state.struct_since_word + 1,
            history,
            state.n_actions + 1,
            False,
        )
    if k == Kind.GEN or k == Kind.SHIFT:
        return ParserState(
            (sentence[state.words_done], state.stack),
            state.open_count,
            state.words_done + 1,
            0,
            history,
            state.n_actions + 1,
            False,
        )
    children: list[Node] = []
    s = state.stack
    while not isinstance(s[0], _Open):
        children.append(s[0])
        s = s[1]
    label = action.symbol if action.symbol is not None else s[0].label
    node = Tree(label, tuple(reversed(children)))
    stack = (node, s[1])
    open_count = state.open_count - 1
    finished = open_count == 0 and state.words_done == len(sentence) and stack[1] is None
    return ParserState(
        stack,
        open_count,
        state.words_done,
        state.struct_since_word + 1,
        history,
        state.n_actions + 1,
        finished,
    )


def apply(state: ParserState, action: Action, sentence: Sentence, c: Constraints) -> ParserState:
    _check(state, action, sentence, c)
    return advance(state, action, sentence)


def replay(actions, sentence: Sentence, c: Constraints) -> ParserState:
    state = initial_state(sentence)
    for a in actions:
        state = apply(state, a, sentence, c)
    return state
