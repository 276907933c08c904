"""Typed expression/formula AST: substitution, evaluation, logical simplification.

Values are exact rationals (`fractions.Fraction`) or booleans; the symbolic
layer never touches floating point.  Evaluation of quantifiers enumerates an
explicit finite carrier per sort, supplied by the caller.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .errors import DivisionByZero, SortMismatch, UnboundVariable

log = logging.getLogger(__name__)

Value = Union[Fraction, bool]


@dataclass(frozen=True)
class Sort:
    kind: str

    def __repr__(self) -> str:
        return self.kind


BOOL = Sort("Bool")
INT = Sort("Int")
REAL = Sort("Real")
UNIT = Sort("Unit")
NUMERIC = (INT, REAL)

SORTS_BY_NAME = {"Bool": BOOL, "Int": INT, "Real": REAL, "Unit": UNIT}


@dataclass(frozen=True)
class Var:
    name: str
    sort: Sort = REAL

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("variable names must be nonempty")

    def __repr__(self) -> str:
        return f"{self.name}:{self.sort.kind}"


class Expr:
    """Immutable expression node.

    `op` is one of: var lit neg add sub mul div eq ne lt le and or not
    implies ite exists forall.  `args` holds child expressions; `var` the
    referenced/bound variable; `value` the literal payload.
    """

    __slots__ = ("op", "args", "var", "value", "sort", "_hash", "_fvs")

    def __init__(self, op: str, args: tuple = (), var: Optional[Var] = None,
                 value: Optional[Value] = None, sort: Sort = BOOL):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "sort", sort)
        object.__setattr__(self, "_hash", hash((op, args, var, value)))
        object.__setattr__(self, "_fvs", None)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("Expr is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return (self.op == other.op and self.var == other.var
                and self.value == other.value and self.args == other.args)

    def __repr__(self) -> str:
        return to_text(self)

    def free_vars(self) -> frozenset:
        fvs = self._fvs
        if fvs is None:
            if self.op == "var":
                fvs = frozenset((self.var,))
            elif self.op in ("exists", "forall"):
                fvs = self.args[0].free_vars() - {self.var}
            else:
                fvs = frozenset().union(*(a.free_vars() for a in self.args)) \
                    if self.args else frozenset()
            object.__setattr__(self, "_fvs", fvs)
        return fvs


def free_vars(e: Expr) -> frozenset:
    return e.free_vars()


def node_count(e: Expr) -> int:
    return 1 + sum(node_count(a) for a in e.args)


def quantifier_count(e: Expr) -> int:
    own = 1 if e.op in ("exists", "forall") else 0
    return own + sum(quantifier_count(a) for a in e.args)


# ---------------------------------------------------------------------------
# constructors


TRUE = Expr("lit", value=True, sort=BOOL)
FALSE = Expr("lit", value=False, sort=BOOL)


def var_ref(v: Var) -> Expr:
    return Expr("var", var=v, sort=v.sort)


def lit(value: Union[Value, int, str], sort: Optional[Sort] = None) -> Expr:
    if isinstance(value, bool):
        return TRUE if value else FALSE
    value = Fraction(value)
    return Expr("lit", value=value, sort=sort or REAL)


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise SortMismatch(msg)


def _numeric2(op: str, a: Expr, b: Expr) -> Expr:
    _need(a.sort in NUMERIC and a.sort == b.sort,
          f"{op}: operands must share a numeric sort, got {a.sort}/{b.sort}")
    return Expr(op, (a, b), sort=a.sort)


def neg(a: Expr) -> Expr:
    _need(a.sort in NUMERIC, f"neg: numeric operand required, got {a.sort}")
    return Expr("neg", (a,), sort=a.sort)


def add(a: Expr, b: Expr) -> Expr:
    return _numeric2("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    return _numeric2("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    return _numeric2("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    _need(a.sort == REAL and b.sort == REAL,
          f"div: Real operands required, got {a.sort}/{b.sort}")
    return Expr("div", (a, b), sort=REAL)


def eq(a: Expr, b: Expr) -> Expr:
    _need(a.sort == b.sort and a.sort != UNIT,
          f"eq: comparable operands required, got {a.sort}/{b.sort}")
    return Expr("eq", (a, b), sort=BOOL)


def ne(a: Expr, b: Expr) -> Expr:
    _need(a.sort == b.sort and a.sort != UNIT,
          f"ne: comparable operands required, got {a.sort}/{b.sort}")
    return Expr("ne", (a, b), sort=BOOL)


def lt(a: Expr, b: Expr) -> Expr:
    _need(a.sort in NUMERIC and a.sort == b.sort,
          f"lt: numeric operands required, got {a.sort}/{b.sort}")
    return Expr("lt", (a, b), sort=BOOL)


def le(a: Expr, b: Expr) -> Expr:
    _need(a.sort in NUMERIC and a.sort == b.sort,
          f"le: numeric operands required, got {a.sort}/{b.sort}")
    return Expr("le", (a, b), sort=BOOL)


def _bool2(op: str, a: Expr, b: Expr) -> Expr:
    _need(a.sort == BOOL and b.sort == BOOL,
          f"{op}: Bool operands required, got {a.sort}/{b.sort}")
    return Expr(op, (a, b), sort=BOOL)


def and_(a: Expr, b: Expr) -> Expr:
    return _bool2("and", a, b)


def or_(a: Expr, b: Expr) -> Expr:
    return _bool2("or", a, b)


def implies(a: Expr, b: Expr) -> Expr:
    return _bool2("implies", a, b)


def not_(a: Expr) -> Expr:
    _need(a.sort == BOOL, f"not: Bool operand required, got {a.sort}")
    return Expr("not", (a,), sort=BOOL)


def ite(c: Expr, t: Expr, f: Expr) -> Expr:
    _need(c.sort == BOOL, f"ite: Bool condition required, got {c.sort}")
    _need(t.sort == f.sort, f"ite: branches must share a sort, got {t.sort}/{f.sort}")
    return Expr("ite", (c, t, f), sort=t.sort)


def exists(v: Var, body: Expr) -> Expr:
    _need(body.sort == BOOL, "exists: Bool body required")
    return Expr("exists", (body,), var=v, sort=BOOL)


def forall(v: Var, body: Expr) -> Expr:
    _need(body.sort == BOOL, "forall: Bool body required")
    return Expr("forall", (body,), var=v, sort=BOOL)


def conj(parts: Iterable[Expr]) -> Expr:
    acc: Optional[Expr] = None
    for p in parts:
        acc = p if acc is None else and_(acc, p)
    return acc if acc is not None else TRUE


def disj(parts: Iterable[Expr]) -> Expr:
    acc: Optional[Expr] = None
    for p in parts:
        acc = p if acc is None else or_(acc, p)
    return acc if acc is not None else FALSE


def conjuncts(e: Expr) -> list:
    if e.op == "and":
        return conjuncts(e.args[0]) + conjuncts(e.args[1])
    return [e]


def disjuncts(e: Expr) -> list:
    if e.op == "or":
        return disjuncts(e.args[0]) + disjuncts(e.args[1])
    return [e]


def _rebuild(e: Expr, args: tuple) -> Expr:
    if args == e.args:
        return e
    return Expr(e.op, args, var=e.var, value=e.value, sort=e.sort)


# ---------------------------------------------------------------------------
# fresh names

_fresh_counter = 0


def fresh_name(base: str) -> str:
    global _fresh_counter
    _fresh_counter += 1
    return f"{base}_{_fresh_counter}"


def reset_fresh_names() -> None:
    global _fresh_counter
    _fresh_counter = 0


# ---------------------------------------------------------------------------
# substitution


def substitute(e: Expr, subst: Mapping[Var, Expr]) -> Expr:
    """Capture-avoiding simultaneous substitution of variables by expressions."""
    cleaned = {}
    for v, r in subst.items():
        if v.sort != r.sort:
            raise SortMismatch(f"substitute: {v} := expression of sort {r.sort}")
        if not (r.op == "var" and r.var == v):
            cleaned[v] = r
    return _subst(e, cleaned)


def _subst(e: Expr, s: Mapping[Var, Expr]) -> Expr:
    if not s:
        return e
    op = e.op
    if op == "var":
        return s.get(e.var, e)
    if op == "lit":
        return e
    if op in ("exists", "forall"):
        v = e.var
        body = e.args[0]
        live = {k: r for k, r in s.items() if k != v and k in body.free_vars()}
        if not live:
            return e
        if any(v in r.free_vars() for r in live.values()):
            nv = Var(fresh_name(v.name), v.sort)
            body = _subst(body, {v: var_ref(nv)})
            v = nv
        return Expr(op, (_subst(body, live),), var=v, sort=BOOL)
    return _rebuild(e, tuple(_subst(a, s) for a in e.args))


# ---------------------------------------------------------------------------
# evaluation


class Domain:
    """Finite carrier per sort, for quantifier enumeration.

    Defined here so `eval_expr` does not depend on the oracle module; the
    oracle's DomainConfig satisfies the same `carrier(sort)` protocol.
    """

    def __init__(self, real: Sequence[Value] = (), int_: Sequence[Value] = (),
                 bool_: Sequence[Value] = (False, True)):
        self._c = {REAL: tuple(Fraction(v) for v in real),
                   INT: tuple(Fraction(v) for v in int_),
                   BOOL: tuple(bool_), UNIT: ((),)}

    def carrier(self, sort: Sort) -> tuple:
        return self._c[sort]


def eval_expr(e: Expr, env: Mapping[Var, Value], dom=None) -> Value:
    """Standard semantics; boolean connectives short-circuit left to right.

    `dom` (anything with a `carrier(sort)` method) is required as soon as a
    quantifier is encountered.
    """
    op = e.op
    if op == "var":
        try:
            return env[e.var]
        except KeyError:
            raise UnboundVariable(f"unbound variable {e.var!r}") from None
    if op == "lit":
        return e.value
    if op == "and":
        return bool(eval_expr(e.args[0], env, dom)) and bool(eval_expr(e.args[1], env, dom))
    if op == "or":
        return bool(eval_expr(e.args[0], env, dom)) or bool(eval_expr(e.args[1], env, dom))
    if op == "implies":
        return (not eval_expr(e.args[0], env, dom)) or bool(eval_expr(e.args[1], env, dom))
    if op == "not":
        return not eval_expr(e.args[0], env, dom)
    if op == "ite":
        if eval_expr(e.args[0], env, dom):
            return eval_expr(e.args[1], env, dom)
        return eval_expr(e.args[2], env, dom)
    if op in ("exists", "forall"):
        if dom is None:
            raise ValueError("quantifier evaluation requires a finite domain")
        carrier = dom.carrier(e.var.sort)
        body = e.args[0]
        inner = dict(env)
        if op == "exists":
            for val in carrier:
                inner[e.var] = val
                if eval_expr(body, inner, dom):
                    return True
            return False
        for val in carrier:
            inner[e.var] = val
            if not eval_expr(body, inner, dom):
                return False
        return True
    a = eval_expr(e.args[0], env, dom)
    if op == "neg":
        return -a
    b = eval_expr(e.args[1], env, dom)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if b == 0:
            raise DivisionByZero()
        return a / b
    if op == "eq":
        return a == b
    if op == "ne":
        return a != b
    if op == "lt":
        return a < b
    if op == "le":
        return a <= b
    raise AssertionError(f"unknown op {op}")  # pragma: no cover


# ---------------------------------------------------------------------------
# simplification

DEFAULT_REWRITE_BUDGET = 100_000


def _div_free(e: Expr) -> bool:
    if e.op == "div":
        return False
    return all(_div_free(a) for a in e.args)


def _is_varref(e: Expr) -> bool:
    return e.op == "var"


def _one_point_exists(v: Var, body: Expr) -> Optional[Expr]:
    # exists v . (... and v = t and ...)  ->  (...)[t/v]   when v not free in t
    parts = conjuncts(body)
    for i, c in enumerate(parts):
        if c.op != "eq":
            continue
        for lhs, rhs in ((c.args[0], c.args[1]), (c.args[1], c.args[0])):
            if _is_varref(lhs) and lhs.var == v and v not in rhs.free_vars():
                rest = parts[:i] + parts[i + 1:]
                if not rest:
                    return TRUE
                return substitute(conj(rest), {v: rhs})
    return None


def _one_point_forall(v: Var, body: Expr) -> Optional[Expr]:
    # forall v . (... or v != t or ...)  ->  (...)[t/v]   when v not free in t
    parts = disjuncts(body)
    for i, c in enumerate(parts):
        if c.op != "ne":
            continue
        for lhs, rhs in ((c.args[0], c.args[1]), (c.args[1], c.args[0])):
            if _is_varref(lhs) and lhs.var == v and v not in rhs.free_vars():
                rest = parts[:i] + parts[i + 1:]
                if not rest:
                    return FALSE
                return substitute(disj(rest), {v: rhs})
    return None


_NEG_CMP = {"eq": "ne", "ne": "eq"}


def _local(e: Expr) -> Optional[Expr]:
    """One local rewrite at the root of `e`, or None if none applies.

    Every rule preserves evaluation on all environments (including
    short-circuit and division-by-zero behaviour); rules that would erase a
    subterm require it to be division-free.
    """
    op = e.op
    args = e.args

    if op == "neg":
        (a,) = args
        if a.op == "lit":
            return lit(-a.value, a.sort)
        if a.op == "neg":
            return a.args[0]
        return None

    if op in ("add", "sub", "mul", "div"):
        a, b = args
        if a.op == "lit" and b.op == "lit":
            if op == "add":
                return lit(a.value + b.value, e.sort)
            if op == "sub":
                return lit(a.value - b.value, e.sort)
            if op == "mul":
                return lit(a.value * b.value, e.sort)
            if b.value != 0:  # keep symbolic division by a zero literal
                return lit(a.value / b.value, e.sort)
            return None
        if op == "add":
            if a.op == "lit" and a.value == 0:
                return b
            if b.op == "lit" and b.value == 0:
                return a
        elif op == "sub":
            if b.op == "lit" and b.value == 0:
                return a
            if a == b and _div_free(a):
                return lit(0, e.sort)
        elif op == "mul":
            if a.op == "lit" and a.value == 1:
                return b
            if b.op == "lit" and b.value == 1:
                return a
            if a.op == "lit" and a.value == 0 and _div_free(b):
                return a
            if b.op == "lit" and b.value == 0 and _div_free(a):
                return b
        elif op == "div":
            if b.op == "lit" and b.value == 1:
                return a
        return None

    if op in ("eq", "ne", "lt", "le"):
        a, b = args
        if a.op == "lit" and b.op == "lit":
            res = {"eq": a.value == b.value, "ne": a.value != b.value,
                   "lt": a.value < b.value, "le": a.value <= b.value}[op]
            return TRUE if res else FALSE
        if a == b and _div_free(a):
            return TRUE if op in ("eq", "le") else FALSE
        return None

    if op == "not":
        (a,) = args
        if a is TRUE or a == TRUE:
            return FALSE
        if a == FALSE:
            return TRUE
        if a.op == "not":
            return a.args[0]
        if a.op in _NEG_CMP:
            return Expr(_NEG_CMP[a.op], a.args, sort=BOOL)
        if a.op == "lt":  # not (x < y) -> y <= x
            return le(a.args[1], a.args[0])
        if a.op == "le":
            return lt(a.args[1], a.args[0])
        if a.op == "and":  # push negation inward
            return or_(not_(a.args[0]), not_(a.args[1]))
        if a.op == "or":
            return and_(not_(a.args[0]), not_(a.args[1]))
        return None

    if op == "implies":
        a, b = args
        return or_(not_(a), b)

    if op == "and":
        a, b = args
        if a == TRUE:
            return b
        if b == TRUE:
            return a
        if a == FALSE:
            return a
        if b == FALSE and _div_free(a):
            return b
        parts = conjuncts(e)
        seen: list = []
        for p in parts:
            if p not in seen:
                seen.append(p)
        for p in seen:
            if Expr("not", (p,), sort=BOOL) in seen and _div_free(conj(seen)):
                return FALSE
        if len(seen) != len(parts):
            return conj(seen)
        return None

    if op == "or":
        a, b = args
        if a == FALSE:
            return b
        if b == FALSE:
            return a
        if a == TRUE:
            return a
        if b == TRUE and _div_free(a):
            return b
        parts = disjuncts(e)
        seen = []
        for p in parts:
            if p not in seen:
                seen.append(p)
        for p in seen:
            if Expr("not", (p,), sort=BOOL) in seen and _div_free(disj(seen)):
                return TRUE
        if len(seen) != len(parts):
            return disj(seen)
        return None

    if op == "ite":
        c, t, f = args
        if c == TRUE:
            return t
        if c == FALSE:
            return f
        if t == f and _div_free(c):
            return t
        return None

    if op in ("exists", "forall"):
        v = e.var
        body = args[0]
        if v not in body.free_vars():
            return body
        if op == "exists":
            got = _one_point_exists(v, body)
            if got is not None:
                return got
            if body.op == "or":  # distribute to enable one-point per branch
                return or_(exists(v, body.args[0]), exists(v, body.args[1]))
            if body.op == "and":  # miniscope: pull out v-independent conjuncts
                dep, indep = [], []
                for c in conjuncts(body):
                    (dep if v in c.free_vars() else indep).append(c)
                if indep:
                    return and_(conj(indep), exists(v, conj(dep)))
        else:
            got = _one_point_forall(v, body)
            if got is not None:
                return got
            if body.op == "and":
                return and_(forall(v, body.args[0]), forall(v, body.args[1]))
            if body.op == "or":
                dep, indep = [], []
                for c in disjuncts(body):
                    (dep if v in c.free_vars() else indep).append(c)
                if indep:
                    return or_(disj(indep), forall(v, disj(dep)))
        return None

    return None


class _Budget:
    __slots__ = ("left", "exhausted")

    def __init__(self, steps: int):
        self.left = steps
        self.exhausted = False

    def spend(self) -> bool:
        if self.left <= 0:
            self.exhausted = True
            return False
        self.left -= 1
        return True


def _simp_pass(e: Expr, budget: _Budget) -> Expr:
    if e.op in ("var", "lit"):
        return e
    e = _rebuild(e, tuple(_simp_pass(a, budget) for a in e.args))
    while True:
        got = _local(e)
        if got is None or got == e or not budget.spend():
            return e
        e = got


def simplify_formula(e: Expr, max_steps: int = DEFAULT_REWRITE_BUDGET) -> Expr:
    """Rewrite `e` to a fixed point of the local rule set.

    Total: when the step budget is exhausted the current (equivalent) term is
    returned and a warning is logged.
    """
    budget = _Budget(max_steps)
    while True:
        e2 = _simp_pass(e, budget)
        if e2 == e or budget.exhausted:
            if budget.exhausted:
                log.warning("simplify_formula: rewrite budget exhausted")
            return e2
        e = e2


# ---------------------------------------------------------------------------
# canonical text


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/", "eq": "=", "ne": "!=",
          "lt": "<", "le": "<=", "and": "and", "or": "or", "implies": "=>"}


def to_text(e: Expr, parens: bool = False) -> str:
    """Canonical rendering: every binary node fully parenthesised except at
    the top level; quantifiers as `exists v:Sort . body`."""
    op = e.op
    if op == "var":
        return e.var.name
    if op == "lit":
        return format_value(e.value)
    if op == "neg":
        return f"-{to_text(e.args[0], True)}"
    if op == "not":
        return f"not {to_text(e.args[0], True)}"
    if op == "ite":
        c, t, f = (to_text(a) for a in e.args)
        return f"ite({c}, {t}, {f})"
    if op in ("exists", "forall"):
        body = to_text(e.args[0])
        txt = f"{op} {e.var.name}:{e.var.sort.kind} . {body}"
        return f"({txt})" if parens else txt
    sym = _INFIX[op]
    txt = f"{to_text(e.args[0], True)} {sym} {to_text(e.args[1], True)}"
    return f"({txt})" if parens else txt
