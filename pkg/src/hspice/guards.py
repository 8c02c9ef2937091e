"""Guard expressions attached to pattern steps.

Grammar::

    guard   := disj
    disj    := conj ('or' conj)*
    conj    := cmp ('and' cmp)*
    cmp     := arith OP arith | '(' disj ')'       OP in < <= = == >= >
    arith   := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | atom
    atom    := NUMBER | 'attr' '(' NAME ')' | 'bound' '(' INT ',' NAME ')'
             | 'abs' '(' arith ')' | '(' arith ')'

``attr(x)`` reads attribute ``x`` of the event being matched, ``bound(i, x)``
reads attribute ``x`` of the event bound to step ``i`` of the same pattern.
A zero denominator or a missing attribute makes the guard false.
"""
from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

from .events import Event


class GuardSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos} in {text!r}")
        self.text = text
        self.pos = pos


class _NoValue(Exception):
    """Internal: expression has no value (zero division, missing attribute)."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Attr:
    name: str


@dataclass(frozen=True)
class Bound:
    step: int
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' | 'abs'
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Logic:
    op: str  # 'and' | 'or'
    parts: tuple["Cond", ...]


Expr = Union[Const, Attr, Bound, Unary, Binary]
Cond = Union[Compare, Logic]

_CMP = {"<": operator.lt, "<=": operator.le, "=": operator.eq, "==": operator.eq,
        ">=": operator.ge, ">": operator.gt}
_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?|([A-Za-z_][A-Za-z0-9_]*)|(<=|>=|==|[-+*/(),<>=]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise GuardSyntaxError("unexpected character", text, pos)
        start = m.start(m.lastindex) if m.lastindex else m.start()
        if m.group(1) is not None:
            tokens.append(("num", m.group(0).strip(), start))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), start))
        else:
            tokens.append(("op", m.group(3), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise GuardSyntaxError(f"expected {want!r}, got {got!r}", self.text, tok[2])
        self.i += 1
        return tok

    def error(self, message):
        raise GuardSyntaxError(message, self.text, self.peek()[2])

    def parse(self) -> Cond:
        cond = self.disj()
        if self.peek()[0] != "end":
            self.error(f"unexpected {self.peek()[1]!r}")
        return cond

    def disj(self) -> Cond:
        parts = [self.conj()]
        while self.peek() == ("name", "or", self.peek()[2]):
            self.take()
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Logic("or", tuple(parts))

    def conj(self) -> Cond:
        parts = [self.cmp()]
        while self.peek() == ("name", "and", self.peek()[2]):
            self.take()
            parts.append(self.cmp())
        return parts[0] if len(parts) == 1 else Logic("and", tuple(parts))

    def cmp(self) -> Cond:
        # A parenthesis may open either a nested condition or an arithmetic term.
        if self.peek()[1] == "(":
            save = self.i
            self.take()
            try:
                inner = self.disj()
                self.take("op", ")")
                if self.peek()[1] not in _CMP:
                    return inner
            except GuardSyntaxError:
                pass
            self.i = save
        left = self.arith()
        tok = self.peek()
        if tok[1] not in _CMP:
            self.error("expected comparison operator")
        self.take()
        return Compare(tok[1], left, self.arith())

    def arith(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.atom()

    def atom(self) -> Expr:
        kind, value, pos = self.peek()
        if kind == "num":
            self.take()
            return Const(float(value))
        if value == "(":
            self.take()
            node = self.arith()
            self.take("op", ")")
            return node
        if kind == "name":
            self.take()
            self.take("op", "(")
            if value == "attr":
                name = self.take("name")[1]
                self.take("op", ")")
                return Attr(name)
            if value == "bound":
                step_tok = self.take("num")
                if not step_tok[1].isdigit():
                    raise GuardSyntaxError("step index must be an integer", self.text, step_tok[2])
                self.take("op", ",")
                name = self.take("name")[1]
                self.take("op", ")")
                return Bound(int(step_tok[1]), name)
            if value == "abs":
                node = self.arith()
                self.take("op", ")")
                return Unary("abs", node)
            raise GuardSyntaxError(f"unknown function {value!r}", self.text, pos)
        self.error(f"unexpected {value or 'end of input'!r}")


def _bound_steps(node) -> set[int]:
    if isinstance(node, Bound):
        return {node.step}
    if isinstance(node, Unary):
        return _bound_steps(node.arg)
    if isinstance(node, (Binary, Compare)):
        return _bound_steps(node.left) | _bound_steps(node.right)
    if isinstance(node, Logic):
        return set().union(*(_bound_steps(p) for p in node.parts))
    return set()


def _eval(node, event: Event, bound: Mapping[int, Event]) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Attr):
        try:
            return event.attributes[node.name]
        except KeyError:
            raise _NoValue from None
    if isinstance(node, Bound):
        try:
            return bound[node.step].attributes[node.name]
        except KeyError:
            raise _NoValue from None
    if isinstance(node, Unary):
        v = _eval(node.arg, event, bound)
        return -v if node.op == "neg" else abs(v)
    a = _eval(node.left, event, bound)
    b = _eval(node.right, event, bound)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if b == 0:
        raise _NoValue
    return a / b


def _holds(cond, event: Event, bound: Mapping[int, Event]) -> bool:
    if isinstance(cond, Logic):
        if cond.op == "and":
            return all(_holds(p, event, bound) for p in cond.parts)
        return any(_holds(p, event, bound) for p in cond.parts)
    try:
        return _CMP[cond.op](_eval(cond.left, event, bound), _eval(cond.right, event, bound))
    except _NoValue:
        return False


GuardFn = Callable[[Event, Sequence[Event]], bool]


def _compile_expr(node, slot: Mapping[int, int]):
    if isinstance(node, Const):
        v = node.value
        return lambda ev, b: v
    if isinstance(node, Attr):
        name = node.name

        def get(ev, b):
            try:
                return ev.attributes[name]
            except KeyError:
                raise _NoValue from None
        return get
    if isinstance(node, Bound):
        idx, name = slot[node.step], node.name

        def get_bound(ev, b):
            try:
                return b[idx].attributes[name]
            except KeyError:
                raise _NoValue from None
        return get_bound
    if isinstance(node, Unary):
        f = _compile_expr(node.arg, slot)
        if node.op == "neg":
            return lambda ev, b: -f(ev, b)
        return lambda ev, b: abs(f(ev, b))
    lf, rf = _compile_expr(node.left, slot), _compile_expr(node.right, slot)
    if node.op == "+":
        return lambda ev, b: lf(ev, b) + rf(ev, b)
    if node.op == "-":
        return lambda ev, b: lf(ev, b) - rf(ev, b)
    if node.op == "*":
        return lambda ev, b: lf(ev, b) * rf(ev, b)

    def div(ev, b):
        d = rf(ev, b)
        if d == 0:
            raise _NoValue
        return lf(ev, b) / d
    return div


def _compile_cond(cond, slot: Mapping[int, int]) -> GuardFn:
    if isinstance(cond, Logic):
        parts = [_compile_cond(p, slot) for p in cond.parts]
        if cond.op == "and":
            return lambda ev, b: all(p(ev, b) for p in parts)
        return lambda ev, b: any(p(ev, b) for p in parts)
    op = _CMP[cond.op]
    lf, rf = _compile_expr(cond.left, slot), _compile_expr(cond.right, slot)

    def test(ev, b):
        try:
            return op(lf(ev, b), rf(ev, b))
        except _NoValue:
            return False
    return test


class Guard:
    """A parsed guard. Evaluate with :meth:`holds` or compile for the matcher."""

    def __init__(self, text: str):
        self.text = text.strip()
        self.tree: Cond = _Parser(self.text).parse()
        self.bound_steps = frozenset(_bound_steps(self.tree))

    def __repr__(self):
        return f"Guard({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Guard) and other.tree == self.tree

    def __hash__(self):
        return hash(self.tree)

    def holds(self, event: Event, bound: Mapping[int, Event] | None = None) -> bool:
        """Interpret the guard; ``bound`` maps step index to bound event."""
        return _holds(self.tree, event, bound or {})

    def compile(self, slot_of_step: Mapping[int, int]) -> GuardFn:
        """Closure over ``(event, bindings)`` where bindings is indexed by slot."""
        return _compile_cond(self.tree, slot_of_step)
