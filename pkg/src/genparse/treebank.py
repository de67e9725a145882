"""Bracketed trees, sentences and the top-down action alphabet.

Trees are immutable: an internal node is a :class:`Tree` and a leaf is a
plain ``str`` word.  Action sequences follow the depth-first, left-to-right
traversal used by top-down transition parsers: ``NT(X)`` on entering a node,
``GEN(w)`` (or ``SHIFT``) for each word and ``REDUCE`` (or ``REDUCE(X)``) on
leaving a node.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence, Union

logger = logging.getLogger(__name__)

ROOT_WRAPPER = "TOP"


class ParseError(ValueError):
    """Malformed bracketed input.  ``offset`` is a character offset into the text."""

    def __init__(self, message: str, offset: int, line: int | None = None):
        self.offset = offset
        self.line = line
        where = f"offset {offset}" if line is None else f"line {line}, offset {offset}"
        super().__init__(f"{message} at {where}")


@dataclass(frozen=True)
class Tree:
    label: str
    children: tuple[Union["Tree", str], ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError(f"constituent {self.label!r} has no children")

    def leaves(self) -> list[str]:
        out: list[str] = []
        stack: list[Tree | str] = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, str):
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out

    def internal_count(self) -> int:
        return sum(1 for _ in self.subtrees())

    def subtrees(self) -> Iterator["Tree"]:
        stack: list[Tree | str] = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Tree):
                yield node
                stack.extend(reversed(node.children))

    def labels(self) -> set[str]:
        return {t.label for t in self.subtrees()}

    def __str__(self) -> str:
        return serialize(self)


Node = Union[Tree, str]


@dataclass(frozen=True)
class Sentence:
    words: tuple[str, ...]

    def __post_init__(self):
        if not self.words:
            raise ValueError("sentence must contain at least one word")
        for w in self.words:
            if not w or any(c.isspace() for c in w):
                raise ValueError(f"invalid word {w!r}")

    def __len__(self) -> int:
        return len(self.words)

    def __getitem__(self, i):
        return self.words[i]

    def __iter__(self):
        return iter(self.words)

    @classmethod
    def of(cls, words: Sequence[str] | str) -> "Sentence":
        if isinstance(words, str):
            words = words.split()
        return cls(tuple(words))

    @classmethod
    def from_tree(cls, tree: Tree) -> "Sentence":
        return cls(tuple(tree.leaves()))


class Inventory(enum.Enum):
    UNLABELED_REDUCE = "unlabeled"
    LABELED_REDUCE = "labeled"


class Kind(enum.IntEnum):
    NT = 0
    GEN = 1
    SHIFT = 2
    REDUCE = 3


@dataclass(frozen=True, order=True)
class Action:
    kind: Kind
    symbol: str | None = None
    text: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        needs = self.kind in (Kind.NT, Kind.GEN)
        if needs and not self.symbol:
            raise ValueError(f"{self.kind.name} requires a symbol")
        if self.kind == Kind.SHIFT and self.symbol is not None:
            raise ValueError("SHIFT carries no word")
        text = self.kind.name if self.symbol is None else f"{self.kind.name}({self.symbol})"
        object.__setattr__(self, "text", text)

    def __str__(self) -> str:
        return self.text

    __repr__ = __str__

    @property
    def is_structural(self) -> bool:
        return self.kind in (Kind.NT, Kind.REDUCE)

    @property
    def is_word(self) -> bool:
        return self.kind in (Kind.GEN, Kind.SHIFT)

    @classmethod
    def parse(cls, text: str) -> "Action":
        text = text.strip()
        if text.endswith(")") and "(" in text:
            head, _, rest = text.partition("(")
            return cls(Kind[head], rest[:-1])
        return cls(Kind[text])


def NT(label: str) -> Action:
    return Action(Kind.NT, label)


def GEN(word: str) -> Action:
    return Action(Kind.GEN, word)


SHIFT = Action(Kind.SHIFT)
REDUCE = Action(Kind.REDUCE)


def REDUCE_X(label: str) -> Action:
    return Action(Kind.REDUCE, label)


@dataclass(frozen=True)
class ActionSequence:
    actions: tuple[Action, ...]
    inventory: Inventory = Inventory.UNLABELED_REDUCE

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, i):
        return self.actions[i]

    def __str__(self) -> str:
        return " ".join(map(str, self.actions))


# ---------------------------------------------------------------------------
# reading and writing


def _tokenize(text: str) -> Iterator[tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            yield c, i
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j], i
            i = j


def _read_one(tokens: list[tuple[str, int]], pos: int, end_offset: int, is_root: bool) -> tuple[Tree, int]:
    # tokens[pos] is "("
    open_offset = tokens[pos][1]
    pos += 1
    if pos >= len(tokens):
        raise ParseError("unbalanced parentheses", end_offset)
    tok, off = tokens[pos]
    if tok == ")":
        raise ParseError("empty constituent", off)
    if tok == "(":
        if not is_root:
            raise ParseError("missing constituent label", off)
        label = ROOT_WRAPPER
    else:
        label = tok
        pos += 1
    children: list[Node] = []
    while True:
        if pos >= len(tokens):
            raise ParseError("unbalanced parentheses", end_offset)
        tok, off = tokens[pos]
        if tok == ")":
            pos += 1
            break
        if tok == "(":
            child, pos = _read_one(tokens, pos, end_offset, False)
            children.append(child)
        else:
            children.append(tok)
            pos += 1
    if not children:
        raise ParseError(f"empty constituent {label!r}", open_offset)
    return Tree(label, tuple(children)), pos


def _strip_preterminals(node: Node) -> Node:
    if isinstance(node, str):
        return node
    if len(node.children) == 1 and isinstance(node.children[0], str):
        return node.children[0]
    return Tree(node.label, tuple(_strip_preterminals(c) for c in node.children))


def strip_preterminals(tree: Tree) -> Tree:
    """Remove unary preterminal layers ``(TAG word)`` -> ``word``.

    A preterminal directly under the root is kept if removing it would leave
    the root with no internal structure to hang on to; the root itself is
    never replaced by a leaf.
    """
    if len(tree.children) == 1 and isinstance(tree.children[0], str):
        return tree
    return Tree(tree.label, tuple(_strip_preterminals(c) for c in tree.children))


def parse_bracketed(text: str, *, strip_pos: bool = False) -> Tree:
    tokens = list(_tokenize(text))
    if not tokens:
        raise ParseError("empty input", 0)
    if tokens[0][0] != "(":
        raise ParseError("expected '('", tokens[0][1])
    tree, pos = _read_one(tokens, 0, len(text), True)
    if pos != len(tokens):
        raise ParseError("trailing garbage", tokens[pos][1])
    return strip_preterminals(tree) if strip_pos else tree


def parse_many(text: str, *, strip_pos: bool = False) -> list[Tree]:
    """Read a stream of trees that may each span several lines."""
    tokens = list(_tokenize(text))
    trees, pos = [], 0
    while pos < len(tokens):
        if tokens[pos][0] != "(":
            raise ParseError("expected '('", tokens[pos][1])
        tree, pos = _read_one(tokens, pos, len(text), True)
        trees.append(strip_preterminals(tree) if strip_pos else tree)
    return trees


def serialize(tree: Node) -> str:
    if isinstance(tree, str):
        return tree
    parts: list[str] = []

    def walk(node: Node) -> None:
        if isinstance(node, str):
            parts.append(" " + node)
            return
        parts.append(" (" + node.label)
        for c in node.children:
            walk(c)
        parts.append(")")

    walk(tree)
    return "".join(parts)[1:]


def read_corpus(
    path: str | Path,
    *,
    on_error: str = "abort",
    multiline: bool = False,
    strip_pos: bool = False,
) -> list[tuple[Sentence, Tree]]:
    """Read ``(sentence, tree)`` pairs, one tree per line.

    ``on_error`` is ``"abort"`` (raise the first :class:`ParseError`, tagged
    with its 1-based line number) or ``"skip"`` (log a warning and continue).
    With ``multiline=True`` the file is read as a stream of trees instead.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', not {on_error!r}")
    text = Path(path).read_text(encoding="utf-8")
    if multiline:
        return [(Sentence.from_tree(t), t) for t in parse_many(text, strip_pos=strip_pos)]
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            tree = parse_bracketed(line, strip_pos=strip_pos)
        except ParseError as e:
            err = ParseError(str(e).rsplit(" at ", 1)[0], e.offset, lineno)
            if on_error == "abort":
                raise err from None
            logger.warning("%s: skipping malformed tree: %s", path, err)
            continue
        pairs.append((Sentence.from_tree(tree), tree))
    return pairs


def write_corpus(path: str | Path, trees: Sequence[Tree]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in trees:
            f.write(serialize(t) + "\n")


# ---------------------------------------------------------------------------
# trees <-> actions


def tree_to_actions(
    tree: Tree,
    inventory: Inventory = Inventory.UNLABELED_REDUCE,
    *,
    shift: bool = False,
) -> ActionSequence:
    """Depth-first, left-to-right traversal of ``tree``.

    With ``shift=True`` words are emitted as bare ``SHIFT`` (discriminative
    style) instead of ``GEN(word)``.
    """
    out: list[Action] = []
    labeled = inventory == Inventory.LABELED_REDUCE

    def walk(node: Node) -> None:
        if isinstance(node, str):
            out.append(SHIFT if shift else GEN(node))
            return
        out.append(NT(node.label))
        for c in node.children:
            walk(c)
        out.append(REDUCE_X(node.label) if labeled else REDUCE)

    walk(tree)
    return ActionSequence(tuple(out), inventory)


def actions_to_tree(seq: ActionSequence | Sequence[Action], sentence: Sentence | None = None) -> Tree:
    """Replay ``seq`` through the transition system and return the finished tree.

    ``sentence`` is needed only when the sequence uses ``SHIFT``.
    """
    from .transition import Constraints, Mode, TransitionError, apply, initial_state

    actions = seq.actions if isinstance(seq, ActionSequence) else tuple(seq)
    if isinstance(seq, ActionSequence):
        inventory = seq.inventory
    else:
        inventory = (
            Inventory.LABELED_REDUCE
            if any(a.kind == Kind.REDUCE and a.symbol for a in actions)
            else Inventory.UNLABELED_REDUCE
        )
    if sentence is None:
        if any(a.kind == Kind.SHIFT for a in actions):
            raise ValueError("SHIFT sequences need the sentence")
        words = tuple(a.symbol for a in actions if a.kind == Kind.GEN)
        if not words:
            raise TransitionError("sequence generates no words: empty constituent")
        sentence = Sentence(words)
    labels = tuple(sorted({a.symbol for a in actions if a.kind in (Kind.NT, Kind.REDUCE) and a.symbol}))
    c = Constraints(
        labels=labels,
        max_open_nts=max(1, len(actions)),
        inventory=inventory,
        mode=Mode.GENERATIVE_CONSTRAINED,
    )
    state = initial_state(sentence)
    for i, a in enumerate(actions):
        if state.finished:
            raise TransitionError(f"action {i} ({a}) after completion")
        state = apply(state, a, sentence, c)
    if not state.finished:
        raise TransitionError(
            f"sequence ends with {state.open_count} open constituent(s) "
            f"and {state.words_done}/{len(sentence)} words"
        )
    return state.tree()
