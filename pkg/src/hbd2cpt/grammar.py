"""Parser for the canonical expression and term text grammar.

The grammar is the same one `expr.to_text` and `transformer.pretty` emit:

    term   := par (';' par)*                 -- serial, left associative
    par    := prim ('||' prim)*              -- parallel, left associative
    prim   := 'feedback' '(' term ')' | '(' term ')' | 'Id' ['(' sorts ')']
            | '{' vars ':' expr '}'          -- assert
            | '[' vars '->' rhs ']'          -- update (functional/relational)
            | NAME ['(' literal ')']         -- reference / displayed atom

Variable lists are comma-separated names with optional `:Sort` annotations
(Real is the default); `()` is the empty list.  Expressions use the usual
infix operators with `exists v:Sort . body` quantifiers and `n/d` rationals.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import List, Optional, Tuple

from . import expr as ex
from . import transformer as tf
from .errors import TextSyntaxError
from .expr import Expr, Var
from .transformer import Term, VarList

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:/\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*'*)
  | (?P<op>\|\||->|=>|<=|!=|[-+*/=<>(){}\[\],:;.!])
""", re.VERBOSE)

_KEYWORDS = {"true", "false", "not", "and", "or", "ite", "exists", "forall",
             "feedback", "Id"}


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.toks: List[Tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise TextSyntaxError(f"unexpected character {text[pos]!r}", pos)
            pos = m.end()
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, m.group(), m.start()))
        self.i = 0

    def peek(self, k: int = 0) -> Tuple[str, str, int]:
        j = self.i + k
        if j < len(self.toks):
            return self.toks[j]
        return ("eof", "", len(self.text))

    def next(self) -> Tuple[str, str, int]:
        t = self.peek()
        self.i += 1
        return t

    def accept(self, value: str) -> bool:
        if self.peek()[1] == value:
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> None:
        kind, got, pos = self.next()
        if got != value:
            raise TextSyntaxError(f"expected {value!r}, got {got!r}", pos)


def _parse_sort(ts: _Tokens) -> ex.Sort:
    kind, name, pos = ts.next()
    if name not in ex.SORTS_BY_NAME:
        raise TextSyntaxError(f"unknown sort {name!r}", pos)
    return ex.SORTS_BY_NAME[name]


# ---------------------------------------------------------------------------
# expressions


def _parse_var(ts: _Tokens, default: ex.Sort = ex.REAL) -> Var:
    kind, name, pos = ts.next()
    if kind != "name":
        raise TextSyntaxError(f"expected variable name, got {name!r}", pos)
    sort = default
    if ts.accept(":"):
        sort = _parse_sort(ts)
    return Var(name, sort)


def _parse_expr(ts: _Tokens, scope: dict) -> Expr:
    return _parse_implies(ts, scope)


def _parse_implies(ts: _Tokens, scope: dict) -> Expr:
    lhs = _parse_or(ts, scope)
    if ts.accept("=>"):
        return ex.implies(lhs, _parse_implies(ts, scope))
    return lhs


def _parse_or(ts: _Tokens, scope: dict) -> Expr:
    e = _parse_and(ts, scope)
    while ts.peek()[1] == "or":
        ts.next()
        e = ex.or_(e, _parse_and(ts, scope))
    return e


def _parse_and(ts: _Tokens, scope: dict) -> Expr:
    e = _parse_not(ts, scope)
    while ts.peek()[1] == "and":
        ts.next()
        e = ex.and_(e, _parse_not(ts, scope))
    return e


def _parse_not(ts: _Tokens, scope: dict) -> Expr:
    if ts.peek()[1] == "not":
        ts.next()
        return ex.not_(_parse_not(ts, scope))
    return _parse_cmp(ts, scope)


_CMP = {"=": ex.eq, "!=": ex.ne, "<": ex.lt, "<=": ex.le}


def _parse_cmp(ts: _Tokens, scope: dict) -> Expr:
    e = _parse_sum(ts, scope)
    sym = ts.peek()[1]
    if sym in _CMP:
        ts.next()
        return _CMP[sym](e, _parse_sum(ts, scope))
    return e


def _parse_sum(ts: _Tokens, scope: dict) -> Expr:
    e = _parse_product(ts, scope)
    while ts.peek()[1] in ("+", "-"):
        op = ts.next()[1]
        rhs = _parse_product(ts, scope)
        e = ex.add(e, rhs) if op == "+" else ex.sub(e, rhs)
    return e


def _parse_product(ts: _Tokens, scope: dict) -> Expr:
    e = _parse_factor(ts, scope)
    while ts.peek()[1] in ("*", "/"):
        op = ts.next()[1]
        rhs = _parse_factor(ts, scope)
        e = ex.mul(e, rhs) if op == "*" else ex.div(e, rhs)
    return e


def _parse_factor(ts: _Tokens, scope: dict) -> Expr:
    kind, value, pos = ts.peek()
    if value == "-":
        ts.next()
        k2, v2, _ = ts.peek()
        if k2 == "number":  # fold the sign into the literal
            ts.next()
            return ex.lit(-Fraction(v2))
        return ex.neg(_parse_factor(ts, scope))
    if value == "(":
        ts.next()
        e = _parse_expr(ts, scope)
        ts.expect(")")
        return e
    if kind == "number":
        ts.next()
        return ex.lit(Fraction(value))
    if value == "true":
        ts.next()
        return ex.TRUE
    if value == "false":
        ts.next()
        return ex.FALSE
    if value == "ite":
        ts.next()
        ts.expect("(")
        c = _parse_expr(ts, scope)
        ts.expect(",")
        t = _parse_expr(ts, scope)
        ts.expect(",")
        f = _parse_expr(ts, scope)
        ts.expect(")")
        return ex.ite(c, t, f)
    if value in ("exists", "forall"):
        ts.next()
        v = _parse_var(ts)
        ts.expect(".")
        inner = dict(scope)
        inner[v.name] = v
        body = _parse_expr(ts, inner)
        return ex.exists(v, body) if value == "exists" else ex.forall(v, body)
    if kind == "name":
        ts.next()
        v = scope.get(value)
        if v is None:
            v = Var(value, ex.REAL)
        return ex.var_ref(v)
    raise TextSyntaxError(f"unexpected token {value!r} in expression", pos)


def parse_expr(text: str, vars: Optional[dict] = None) -> Expr:
    """Parse an expression; free names default to Real unless `vars` says
    otherwise (a name -> Var mapping)."""
    ts = _Tokens(text)
    e = _parse_expr(ts, dict(vars or {}))
    kind, got, pos = ts.peek()
    if kind != "eof":
        raise TextSyntaxError(f"trailing input {got!r}", pos)
    return e


# ---------------------------------------------------------------------------
# terms


def _parse_varlist(ts: _Tokens, closers: Tuple[str, ...]) -> VarList:
    if ts.peek()[1] == "(" and ts.peek(1)[1] == ")":
        ts.next()
        ts.next()
        return tf.EMPTY
    vars = [_parse_var(ts)]
    while ts.accept(","):
        vars.append(_parse_var(ts))
    return VarList(tuple(vars))


def _scope_of(vl: VarList, *more: VarList) -> dict:
    scope = {v.name: v for v in vl}
    for m in more:
        scope.update({v.name: v for v in m})
    return scope


def _parse_update(ts: _Tokens) -> tf.Atom:
    ts.expect("[")
    ins = _parse_varlist(ts, ("->",))
    ts.expect("->")
    if ts.peek()[1] == "(" and ts.peek(1)[1] == ")":  # [ins -> ()]
        ts.next()
        ts.next()
        ts.expect("]")
        return tf.update_func(ins, tf.EMPTY, ())
    scope = _scope_of(ins)
    items = [_parse_expr(ts, scope)]
    while ts.accept(","):
        items.append(_parse_expr(ts, scope))
    if ts.accept(":"):
        outs = []
        for e in items:
            if e.op != "var":
                raise TextSyntaxError("relational update needs plain output names",
                                      ts.peek()[2])
            outs.append(e.var)
        out_vl = VarList(tuple(outs))
        rel = _parse_expr(ts, _scope_of(ins, out_vl))
        ts.expect("]")
        return tf.update_rel(ins, out_vl, rel)
    ts.expect("]")
    outs = tf._derive_out_names(ins, [f"o{i + 1}" for i in range(len(items))])
    outs = VarList(tuple(Var(v.name, b.sort) for v, b in zip(outs, items)))
    return tf.Atom(ins, outs, ex.TRUE, bodies=tuple(items))


def _parse_prim(ts: _Tokens) -> Term:
    kind, value, pos = ts.peek()
    if value == "feedback":
        ts.next()
        ts.expect("(")
        inner = _parse_term_inner(ts)
        ts.expect(")")
        return tf.Feedback(inner)
    if value == "(":
        ts.next()
        inner = _parse_term_inner(ts)
        ts.expect(")")
        return inner
    if value == "Id":
        ts.next()
        if ts.accept("("):
            sorts = [_parse_sort(ts)]
            while ts.accept(","):
                sorts.append(_parse_sort(ts))
            ts.expect(")")
            sig = VarList(tuple(Var(f"_{i + 1}", s) for i, s in enumerate(sorts)))
            return tf.IdT(sig)
        return tf.IdT(None)
    if value == "{":
        ts.next()
        ins = _parse_varlist(ts, (":",))
        ts.expect(":")
        pred = _parse_expr(ts, _scope_of(ins))
        ts.expect("}")
        return tf.AssertT(ins, pred)
    if value == "[":
        return _parse_update(ts)
    if kind == "name":
        ts.next()
        name = value
        if ts.peek()[1] == "(":  # displayed parameter, e.g. Const(1)
            ts.next()
            k2, v2, p2 = ts.next()
            inner = v2
            if v2 == "-":
                k3, v3, _ = ts.next()
                inner = f"-{v3}"
            ts.expect(")")
            name = f"{name}({inner})"
        return tf.NamedRef(name)
    raise TextSyntaxError(f"unexpected token {value!r} in term", pos)


def _parse_par(ts: _Tokens) -> Term:
    t = _parse_prim(ts)
    while ts.accept("||"):
        t = tf.Parallel(t, _parse_prim(ts))
    return t


def _parse_term_inner(ts: _Tokens) -> Term:
    t = _parse_par(ts)
    while ts.accept(";"):
        t = tf.Serial(t, _parse_par(ts))
    return t


def parse_term(text: str) -> Term:
    ts = _Tokens(text)
    t = _parse_term_inner(ts)
    kind, got, pos = ts.peek()
    if kind != "eof":
        raise TextSyntaxError(f"trailing input {got!r}", pos)
    return t
