"""Linear temporal logic over finite proposition sets.

Formulas are immutable trees.  The core connectives are true, atoms,
negation, conjunction, next and until; disjunction, implication,
eventually and always are derived and kept as first-class nodes so that
formulas print the way they were written.  Release exists only as the
dual of until for negation normal form and has no concrete syntax.

Words are ultimately periodic (lasso) sequences of letters, each letter a
set of proposition names.  ``eval_lasso`` decides satisfaction directly on
the lasso by fixpoint iteration, independently of any automaton
construction, which makes it usable as an oracle for the translation in
:mod:`ltlcoord.buchi`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator


class Formula:
    """Base class for formula nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueConst(Formula):
    """The constant true."""


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Release(Formula):
    """Dual of until, used in negation normal form only."""

    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula


@dataclass(frozen=True)
class Always(Formula):
    operand: Formula


TRUE = TrueConst()
FALSE = Not(TRUE)


@dataclass(frozen=True)
class AtomicProposition:
    """A named service proposition owned by one agent."""

    name: str
    owner: int


class LtlSyntaxError(ValueError):
    """Raised on malformed formula text; ``position`` is a 0-based offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UndeclaredAtomError(LtlSyntaxError):
    """Raised when a formula references an atom outside the declared set."""


# ---------------------------------------------------------------------------
# parsing


_KEYWORDS = {"true", "X", "U", "F", "G"}

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<arrow>->)"
    r"|(?P<sym>[!&|()])"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "ident", "arrow", "sym", "end"
    text: str
    pos: int


def _tokenize(text):
    tokens = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise LtlSyntaxError(f"unexpected character {text[i]!r}", i)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), i))
        i = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent parser.

    Binding strength, loosest first: ``->`` (right associative), ``|``,
    ``&``, ``U`` (right associative), then the unary prefixes
    ``! X F G``.
    """

    def __init__(self, tokens, declared):
        self.tokens = tokens
        self.k = 0
        self.declared = declared  # None means accept any atom

    def peek(self):
        return self.tokens[self.k]

    def advance(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def parse(self):
        f = self.parse_implies()
        tok = self.peek()
        if tok.kind != "end":
            raise LtlSyntaxError(f"unexpected {tok.text!r}", tok.pos)
        return f

    def parse_implies(self):
        left = self.parse_or()
        if self.peek().kind == "arrow":
            self.advance()
            return Implies(left, self.parse_implies())
        return left

    def parse_or(self):
        f = self.parse_and()
        while self.peek().text == "|":
            self.advance()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self):
        f = self.parse_until()
        while self.peek().text == "&":
            self.advance()
            f = And(f, self.parse_until())
        return f

    def parse_until(self):
        left = self.parse_unary()
        tok = self.peek()
        if tok.kind == "ident" and tok.text == "U":
            self.advance()
            return Until(left, self.parse_until())
        return left

    def parse_unary(self):
        tok = self.peek()
        if tok.text == "!":
            self.advance()
            return Not(self.parse_unary())
        if tok.kind == "ident" and tok.text in ("X", "F", "G"):
            self.advance()
            op = {"X": Next, "F": Eventually, "G": Always}[tok.text]
            return op(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self):
        tok = self.advance()
        if tok.text == "(":
            f = self.parse_implies()
            closing = self.advance()
            if closing.text != ")":
                raise LtlSyntaxError("expected ')'", closing.pos)
            return f
        if tok.kind == "ident":
            if tok.text == "true":
                return TRUE
            if tok.text in _KEYWORDS:
                raise LtlSyntaxError(f"unexpected operator {tok.text!r}", tok.pos)
            if self.declared is not None and tok.text not in self.declared:
                raise UndeclaredAtomError(f"undeclared atom {tok.text!r}", tok.pos)
            return Atom(tok.text)
        raise LtlSyntaxError(
            f"expected formula, found {tok.text!r}" if tok.text else "unexpected end of input",
            tok.pos,
        )


def parse_ltl(text, props=None):
    """Parse formula text.

    ``props`` restricts the admissible atoms; entries may be plain names
    or :class:`AtomicProposition`.  With ``props=None`` any identifier is
    accepted, which callers use to discover the referenced atoms first.
    """
    declared = None
    if props is not None:
        declared = {p.name if isinstance(p, AtomicProposition) else p for p in props}
    return _Parser(_tokenize(text), declared).parse()


# ---------------------------------------------------------------------------
# printing


# Binding strength per node kind; unary nodes and leaves never need parens
# around themselves.
_PREC = {Implies: 1, Or: 2, And: 3, Until: 4, Release: 4}
_RIGHT_ASSOC = (Implies, Until, Release)


def format_formula(f):
    """Render ``f`` with minimal parentheses.

    The output reparses to a structurally identical formula, except for
    :class:`Release` which has no concrete syntax and is printed with an
    ``R`` infix for debugging only.
    """
    return _fmt(f, 0)


def _fmt(f, parent_prec):
    match f:
        case TrueConst():
            return "true"
        case Atom(name):
            return name
        case Not(g):
            return "!" + _fmt(g, 5)
        case Next(g):
            return "X " + _fmt(g, 5)
        case Eventually(g):
            return "F " + _fmt(g, 5)
        case Always(g):
            return "G " + _fmt(g, 5)
        case And(a, b) | Or(a, b) | Implies(a, b) | Until(a, b) | Release(a, b):
            prec = _PREC[type(f)]
            sym = {And: "&", Or: "|", Implies: "->", Until: "U", Release: "R"}[type(f)]
            if type(f) in _RIGHT_ASSOC:
                left = _fmt(a, prec + 1)
                right = _fmt(b, prec)
            else:
                left = _fmt(a, prec)
                right = _fmt(b, prec + 1)
            out = f"{left} {sym} {right}"
            return f"({out})" if prec < parent_prec else out
    raise TypeError(f"not a formula: {f!r}")


def atoms(f):
    """The set of atom names occurring in ``f``."""
    match f:
        case TrueConst():
            return frozenset()
        case Atom(name):
            return frozenset({name})
        case Not(g) | Next(g) | Eventually(g) | Always(g):
            return atoms(g)
        case And(a, b) | Or(a, b) | Implies(a, b) | Until(a, b) | Release(a, b):
            return atoms(a) | atoms(b)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# rewriting


def to_core(f):
    """Rewrite to the core connectives true, atom, !, &, X, U.

    F a     becomes  true U a
    G a     becomes  !(true U !a)
    a | b   becomes  !(!a & !b)
    a -> b  becomes  !(a & !b)
    """
    match f:
        case TrueConst() | Atom(_):
            return f
        case Not(g):
            return Not(to_core(g))
        case And(a, b):
            return And(to_core(a), to_core(b))
        case Or(a, b):
            return Not(And(Not(to_core(a)), Not(to_core(b))))
        case Implies(a, b):
            return Not(And(to_core(a), Not(to_core(b))))
        case Next(g):
            return Next(to_core(g))
        case Until(a, b):
            return Until(to_core(a), to_core(b))
        case Eventually(g):
            return Until(TRUE, to_core(g))
        case Always(g):
            return Not(Until(TRUE, Not(to_core(g))))
        case Release(a, b):
            # not user syntax, but keep the rewrite total
            return Not(Until(Not(to_core(a)), Not(to_core(b))))
    raise TypeError(f"not a formula: {f!r}")


def to_nnf(f):
    """Push negations inward until they sit on atoms or the true constant.

    The result uses true, !true, atoms and negated atoms, &, |, X, U and
    R.  Derived connectives are expanded on the way, so any formula is
    accepted.
    """
    match f:
        case TrueConst() | Atom(_):
            return f
        case And(a, b):
            return And(to_nnf(a), to_nnf(b))
        case Or(a, b):
            return Or(to_nnf(a), to_nnf(b))
        case Next(g):
            return Next(to_nnf(g))
        case Until(a, b):
            return Until(to_nnf(a), to_nnf(b))
        case Release(a, b):
            return Release(to_nnf(a), to_nnf(b))
        case Implies(a, b):
            return to_nnf(Or(Not(a), b))
        case Eventually(g):
            return Until(TRUE, to_nnf(g))
        case Always(g):
            return Release(FALSE, to_nnf(g))
        case Not(g):
            return _nnf_neg(g)
    raise TypeError(f"not a formula: {f!r}")


def _nnf_neg(f):
    """Negation normal form of ``!f``."""
    match f:
        case TrueConst() | Atom(_):
            return Not(f)
        case Not(g):
            return to_nnf(g)
        case And(a, b):
            return Or(_nnf_neg(a), _nnf_neg(b))
        case Or(a, b):
            return And(_nnf_neg(a), _nnf_neg(b))
        case Implies(a, b):
            return And(to_nnf(a), _nnf_neg(b))
        case Next(g):
            return Next(_nnf_neg(g))
        case Until(a, b):
            return Release(_nnf_neg(a), _nnf_neg(b))
        case Release(a, b):
            return Until(_nnf_neg(a), _nnf_neg(b))
        case Eventually(g):
            return Release(FALSE, _nnf_neg(g))
        case Always(g):
            return Until(TRUE, _nnf_neg(g))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# lasso words and evaluation


@dataclass(frozen=True)
class LassoWord:
    """The infinite word stem . period^omega; letters are sets of atom names."""

    stem: tuple = ()
    period: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "stem", tuple(frozenset(s) for s in self.stem))
        object.__setattr__(self, "period", tuple(frozenset(s) for s in self.period))
        if not self.period:
            raise ValueError("lasso period must be nonempty")

    def letter(self, i):
        """Letter at absolute position ``i`` of the infinite word."""
        if i < len(self.stem):
            return self.stem[i]
        return self.period[(i - len(self.stem)) % len(self.period)]


def eval_lasso(f, word):
    """Whether ``word`` satisfies ``f`` at position 0.

    The word has finitely many distinct suffixes, one per stem position
    plus one per period position, so the truth of every subformula is a
    finite bit vector over those positions.  Boolean and next connectives
    are pointwise; until and eventually are least fixpoints (start all
    false, iterate to stability) and release and always are greatest
    fixpoints (start all true).  Least versus greatest matters only on
    the loop, where it encodes "the promise must be kept" for until.
    """
    letters = word.stem + word.period
    n = len(letters)
    loop = len(word.stem)
    succ = [i + 1 for i in range(n)]
    succ[n - 1] = loop
    memo = {}

    def sat(g):
        got = memo.get(g)
        if got is not None:
            return got
        match g:
            case TrueConst():
                vals = [True] * n
            case Atom(name):
                vals = [name in letters[i] for i in range(n)]
            case Not(h):
                vals = [not x for x in sat(h)]
            case And(a, b):
                va, vb = sat(a), sat(b)
                vals = [x and y for x, y in zip(va, vb)]
            case Or(a, b):
                va, vb = sat(a), sat(b)
                vals = [x or y for x, y in zip(va, vb)]
            case Implies(a, b):
                va, vb = sat(a), sat(b)
                vals = [(not x) or y for x, y in zip(va, vb)]
            case Next(h):
                vh = sat(h)
                vals = [vh[succ[i]] for i in range(n)]
            case Until(a, b):
                vals = _lfp(sat(a), sat(b), succ)
            case Eventually(h):
                vals = _lfp([True] * n, sat(h), succ)
            case Release(a, b):
                vals = _gfp(sat(a), sat(b), succ)
            case Always(h):
                vals = _gfp([False] * n, sat(h), succ)
            case _:
                raise TypeError(f"not a formula: {g!r}")
        memo[g] = vals
        return vals

    return sat(f)[0]


def _lfp(va, vb, succ):
    """Least fixpoint of U[p] = b[p] or (a[p] and U[succ(p)])."""
    n = len(succ)
    vals = [False] * n
    changed = True
    while changed:
        changed = False
        for p in range(n):
            new = vb[p] or (va[p] and vals[succ[p]])
            if new and not vals[p]:
                vals[p] = True
                changed = True
    return vals


def _gfp(va, vb, succ):
    """Greatest fixpoint of R[p] = b[p] and (a[p] or R[succ(p)])."""
    n = len(succ)
    vals = [True] * n
    changed = True
    while changed:
        changed = False
        for p in range(n):
            new = vb[p] and (va[p] or vals[succ[p]])
            if not new and vals[p]:
                vals[p] = False
                changed = True
    return vals
