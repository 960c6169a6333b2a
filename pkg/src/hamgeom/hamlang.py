"""A small expression language for Hamiltonians.

Grammar (EBNF)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = ("-" | "+") unary | power ;
    power    = atom { "^" exponent } ;
    exponent = ["-"] INTEGER | "(" ["-"] INTEGER ")" ;
    atom     = NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")" ;
    FUNC     = "sin" | "cos" | "exp" | "log" | "sqrt" ;
    IDENT    = "q1" .. "qn" | "p1" .. "pn" | parameter name ;

Precedence is ``^`` > unary minus > ``* /`` > ``+ -``; binary operators
associate to the left, so ``-q1^2`` is ``-(q1^2)`` and ``q1^2^3`` is
``(q1^2)^3``. Exponents are integers so jets stay exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import jets
from .errors import ParseError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "q", "p" or "param"
    index: int = -1
    name: str = ""


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Const, Var, Unary, Binary, Pow, Call]

_TOKEN = re.compile(
    r"""(?P<ws>[ \t\r]+)|(?P<nl>\n)
      |(?P<num>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
      |(?P<ident>[A-Za-z_][A-Za-z_0-9]*)
      |(?P<op>[-+*/^(),])""",
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source):
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source, n, params):
        self.toks = _tokenize(source)
        self.i = 0
        self.n = n
        self.params = frozenset(params)

    @property
    def tok(self):
        return self.toks[self.i]

    def _err(self, msg, tok=None, cls=ParseError):
        tok = tok or self.tok
        return cls(msg, tok.line, tok.col)

    def _take(self, text=None):
        tok = self.tok
        if text is not None and tok.text != text:
            want = repr(text)
            got = "end of input" if tok.kind == "end" else repr(tok.text)
            raise self._err(f"expected {want}, found {got}")
        self.i += 1
        return tok

    def parse(self):
        if self.tok.kind == "end":
            raise self._err("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self._err(f"unexpected {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self._take().text
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self._take().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.text == "-":
            self._take()
            return Unary("-", self.unary())
        if self.tok.text == "+":
            self._take()
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        while self.tok.text == "^":
            self._take()
            node = Pow(node, self.exponent())
        return node

    def exponent(self):
        paren = self.tok.text == "("
        if paren:
            self._take()
        sign = 1
        if self.tok.text == "-":
            self._take()
            sign = -1
        tok = self.tok
        if tok.kind != "num" or not re.fullmatch(r"\d+", tok.text):
            if tok.kind == "end":
                raise self._err("missing exponent")
            raise self._err(f"non-integer exponent {tok.text!r}")
        self._take()
        if paren:
            self._take(")")
        return sign * int(tok.text)

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self._take()
            return Const(float(tok.text))
        if tok.kind == "ident":
            self._take()
            if tok.text in FUNCTIONS:
                self._take("(")
                arg = self.expr()
                self._take(")")
                return Call(tok.text, arg)
            return self._resolve(tok)
        if tok.text == "(":
            self._take()
            node = self.expr()
            self._take(")")
            return node
        if tok.kind == "end":
            raise self._err("unexpected end of input")
        raise self._err(f"unexpected {tok.text!r}")

    def _resolve(self, tok):
        name = tok.text
        m = re.fullmatch(r"([qp])([1-9]\d*)", name)
        if m and int(m.group(2)) <= self.n:
            return Var(m.group(1), int(m.group(2)) - 1)
        if name in self.params:
            return Var("param", name=name)
        raise self._err(f"unknown identifier {name!r}", tok, UnknownIdentifierError)


def parse(source: str, n: int, params=()) -> Node:
    """Parse ``source`` into an AST over ``q1..qn``, ``p1..pn`` and ``params``."""
    if not source or not source.strip():
        raise ParseError("empty expression", 1, 1)
    return _Parser(source, n, params).parse()


def unparse(node: Node) -> str:
    """Canonical, fully parenthesized text form (a parse/unparse fixpoint)."""
    if isinstance(node, Const):
        v = float(node.value)
        return repr(v) if v >= 0 else f"(-{repr(-v)})"
    if isinstance(node, Var):
        return node.name if node.kind == "param" else f"{node.kind}{node.index + 1}"
    if isinstance(node, Unary):
        return f"(-{unparse(node.operand)})"
    if isinstance(node, Binary):
        return f"({unparse(node.left)} {node.op} {unparse(node.right)})"
    if isinstance(node, Pow):
        return f"({unparse(node.base)} ^ {node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({unparse(node.arg)})"
    raise TypeError(f"not an AST node: {node!r}")


_FUNCS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "log": jets.log, "sqrt": jets.sqrt}


def evaluate(node: Node, q, p, params):
    """Evaluate on arbitrary jet/scalar inputs; ``q``/``p`` are sequences."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        if node.kind == "q":
            return q[node.index]
        if node.kind == "p":
            if p is None:
                raise UnknownIdentifierError(f"momentum p{node.index + 1} in a q-only field")
            return p[node.index]
        return params[node.name]
    if isinstance(node, Unary):
        return -evaluate(node.operand, q, p, params)
    if isinstance(node, Binary):
        a = evaluate(node.left, q, p, params)
        b = evaluate(node.right, q, p, params)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if not isinstance(b, jets.Jet) and np.any(np.asarray(b) == 0):
            raise jets.JetDomainError("division by zero")
        return a / b
    if isinstance(node, Pow):
        base = evaluate(node.base, q, p, params)
        if isinstance(base, jets.Jet):
            return base ** node.exponent
        base = np.asarray(base, dtype=float)
        if node.exponent < 0 and np.any(base == 0):
            raise jets.JetDomainError("division by zero")
        return base ** float(node.exponent)
    if isinstance(node, Call):
        return _FUNCS[node.func](evaluate(node.arg, q, p, params))
    raise TypeError(f"not an AST node: {node!r}")


def eval_ast(node: Node, point, params, order: int) -> jets.Jet:
    """Jet of the expression in the 2n phase variables ``(q, p)`` at ``point``."""
    q = np.asarray(point.q, dtype=float)
    p = np.asarray(point.p, dtype=float)
    z = np.concatenate([q, p], axis=-1)
    n = q.shape[-1]
    zj = jets.jet_variables(z, order)
    out = evaluate(node, zj[:n], zj[n:], dict(params))
    if not isinstance(out, jets.Jet):
        out = jets.Jet.constant(np.broadcast_to(out, z.shape[:-1]), zj[0].space)
    return out


def variables(node: Node):
    """Set of ``Var`` nodes referenced by ``node``."""
    out = set()
    stack = [node]
    while stack:
        x = stack.pop()
        if isinstance(x, Var):
            out.add(x)
        elif isinstance(x, Unary):
            stack.append(x.operand)
        elif isinstance(x, Binary):
            stack.extend((x.left, x.right))
        elif isinstance(x, Pow):
            stack.append(x.base)
        elif isinstance(x, Call):
            stack.append(x.arg)
    return out
