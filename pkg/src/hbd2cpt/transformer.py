"""Composite predicate-transformer terms: signatures, constructors, printing.

A term is built from atomic transformers (assert/update) with serial (`;`,
data flows left to right), parallel (`||`) and feedback composition.
`feedback` always connects the first output to the first input; multi-wire
feedback is expressed by iterating it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Tuple

from . import expr as ex
from .errors import ArityMismatch, NoFeedbackVars, SortMismatch, UnknownVariable, UnresolvedRef
from .expr import Expr, Sort, Var


@dataclass(frozen=True)
class VarList:
    vars: Tuple[Var, ...]

    def __post_init__(self) -> None:
        names = [v.name for v in self.vars]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate names in variable list: {names}")

    def __iter__(self):
        return iter(self.vars)

    def __len__(self) -> int:
        return len(self.vars)

    def __getitem__(self, i: int) -> Var:
        return self.vars[i]

    def __add__(self, other: "VarList") -> "VarList":
        return VarList(self.vars + other.vars)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.vars)

    @property
    def sorts(self) -> Tuple[Sort, ...]:
        return tuple(v.sort for v in self.vars)

    def lookup(self, name: str) -> Var:
        for v in self.vars:
            if v.name == name:
                return v
        raise UnknownVariable(f"no variable named {name!r} in {self.names}")


def varlist(*vars: Var) -> VarList:
    return VarList(tuple(vars))


EMPTY = VarList(())


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Atom(Term):
    """A single transformer `{pre} ; [update]` with explicit port lists.

    Functional atoms carry one body expression per output (over the inputs);
    relational atoms carry a relation over inputs and outputs.  This type
    doubles as the simplifier's normal form.
    """

    inputs: VarList
    outputs: VarList
    pre: Expr
    bodies: Optional[Tuple[Expr, ...]] = None
    rel: Optional[Expr] = None
    display: Optional[str] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if (self.bodies is None) == (self.rel is None):
            raise ValueError("exactly one of bodies/rel must be given")
        in_names = set(self.inputs.names)
        if in_names & set(self.outputs.names):
            raise ValueError("input/output port names must be distinct")
        if self.pre.sort != ex.BOOL:
            raise SortMismatch("precondition must be Bool")
        if not self.pre.free_vars() <= set(self.inputs):
            raise ValueError("precondition mentions non-input variables")
        if self.bodies is not None:
            if len(self.bodies) != len(self.outputs):
                raise ArityMismatch(
                    f"{len(self.bodies)} bodies for {len(self.outputs)} outputs")
            allowed = set(self.inputs)
            for b, o in zip(self.bodies, self.outputs):
                if b.sort != o.sort:
                    raise SortMismatch(f"body for {o} has sort {b.sort}")
                if not b.free_vars() <= allowed:
                    raise ValueError(f"body for {o} mentions non-input variables")
        else:
            if self.rel.sort != ex.BOOL:
                raise SortMismatch("relation must be Bool")
            if not self.rel.free_vars() <= set(self.inputs) | set(self.outputs):
                raise ValueError("relation mentions unknown variables")

    @property
    def functional(self) -> bool:
        return self.bodies is not None

    def relation(self) -> Expr:
        """The relation as a formula; for functional atoms `/\\ out_i = body_i`."""
        if self.rel is not None:
            return self.rel
        return ex.conj(ex.eq(ex.var_ref(o), b) for o, b in zip(self.outputs, self.bodies))


AtomicPT = Atom


@dataclass(frozen=True)
class AssertT(Term):
    """`{vars : pred}` — partial identity restricted to pred."""

    inputs: VarList
    pred: Expr

    def __post_init__(self) -> None:
        if self.pred.sort != ex.BOOL:
            raise SortMismatch("assert predicate must be Bool")
        if not self.pred.free_vars() <= set(self.inputs):
            raise ValueError("assert predicate mentions non-input variables")


@dataclass(frozen=True)
class IdT(Term):
    """Identity; `sig=None` is the polymorphic form produced by the parser."""

    sig: Optional[VarList] = None


@dataclass(frozen=True)
class Serial(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Parallel(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Feedback(Term):
    body: Term


@dataclass(frozen=True)
class NamedRef(Term):
    name: str


Signature = Tuple[Tuple[Sort, ...], Tuple[Sort, ...]]


def signature(t: Term, defs: Optional[Mapping[str, "Atom"]] = None) -> Signature:
    """Input/output sorts of `t`, checking composition interfaces."""
    if isinstance(t, Atom):
        return t.inputs.sorts, t.outputs.sorts
    if isinstance(t, AssertT):
        s = t.inputs.sorts
        return s, s
    if isinstance(t, IdT):
        if t.sig is None:
            raise UnresolvedRef("polymorphic Id has no fixed signature")
        return t.sig.sorts, t.sig.sorts
    if isinstance(t, NamedRef):
        if defs is None or t.name not in defs:
            raise UnresolvedRef(f"unresolved reference {t.name!r}")
        d = defs[t.name]
        return d.inputs.sorts, d.outputs.sorts
    if isinstance(t, Serial):
        li, lo = signature(t.left, defs)
        ri, ro = signature(t.right, defs)
        if lo != ri:
            raise ArityMismatch(
                f"serial interface mismatch: {lo} feeds {ri}", location=pretty(t))
        return li, ro
    if isinstance(t, Parallel):
        li, lo = signature(t.left, defs)
        ri, ro = signature(t.right, defs)
        return li + ri, lo + ro
    if isinstance(t, Feedback):
        bi, bo = signature(t.body, defs)
        if not bi or not bo:
            raise ArityMismatch("feedback needs at least one input and one output",
                                location=pretty(t))
        if bi[0] != bo[0]:
            raise SortMismatch(
                f"feedback first-port sorts differ: {bi[0]} vs {bo[0]}")
        return bi[1:], bo[1:]
    raise AssertionError(f"unknown term {t!r}")  # pragma: no cover


def serial(left: Term, right: Term, defs: Optional[Mapping[str, Atom]] = None) -> Serial:
    t = Serial(left, right)
    try:
        signature(t, defs)
    except UnresolvedRef:
        if defs is not None:
            raise
    return t


def parallel(left: Term, right: Term) -> Parallel:
    return Parallel(left, right)


def feedback(body: Term, defs: Optional[Mapping[str, Atom]] = None) -> Feedback:
    t = Feedback(body)
    try:
        signature(t, defs)
    except UnresolvedRef:
        if defs is not None:
            raise
    return t


def serial_chain(terms: Sequence[Term]) -> Term:
    acc = terms[0]
    for t in terms[1:]:
        acc = Serial(acc, t)
    return acc


def parallel_chain(terms: Sequence[Term]) -> Term:
    acc = terms[0]
    for t in terms[1:]:
        acc = Parallel(acc, t)
    return acc


def update_func(inputs: VarList, outputs: VarList, bodies: Sequence[Expr],
                pre: Expr = ex.TRUE, display: Optional[str] = None) -> Atom:
    return Atom(inputs, outputs, pre, bodies=tuple(bodies), display=display)


def update_rel(inputs: VarList, outputs: VarList, rel: Expr,
               pre: Expr = ex.TRUE, display: Optional[str] = None) -> Atom:
    return Atom(inputs, outputs, pre, rel=rel, display=display)


def identity_atom(sig: VarList) -> Atom:
    outs = _derive_out_names(sig, [v.name for v in sig])
    return Atom(sig, outs, ex.TRUE, bodies=tuple(ex.var_ref(v) for v in sig))


def is_identity(t: Term) -> bool:
    """True for Id nodes and atoms that denote the identity update."""
    if isinstance(t, IdT):
        return True
    if isinstance(t, Atom):
        return (t.functional and t.pre == ex.TRUE
                and len(t.inputs) == len(t.outputs)
                and all(b.op == "var" and b.var == v
                        for b, v in zip(t.bodies, t.inputs)))
    return False


def _derive_out_names(inputs: VarList, wanted: Sequence[str]) -> VarList:
    """Output variable list with `wanted` names, renamed where a name would
    collide with an input or an earlier output."""
    taken = set(n for n in inputs.names)
    out = []
    sorts = {v.name: v.sort for v in inputs}
    for i, name in enumerate(wanted):
        candidate = name
        k = 2
        while candidate in taken:
            candidate = f"{name}_{k}"
            k += 1
        taken.add(candidate)
        out.append(Var(candidate, sorts.get(name, ex.REAL)))
    return VarList(tuple(out))


def reroute(src: VarList, dst: Sequence) -> Atom:
    """Wiring transformer `[src -> dst]`: each target position reads the
    source variable of the same name.  Duplication and dropping are allowed."""
    names = [d.name if isinstance(d, Var) else d for d in dst]
    bodies = tuple(ex.var_ref(src.lookup(n)) for n in names)
    outs = _derive_out_names(src, names)
    return Atom(src, outs, ex.TRUE, bodies=bodies)


def is_reroute(t: Term) -> bool:
    return isinstance(t, Atom) and t.functional and t.pre == ex.TRUE and \
        all(b.op == "var" for b in t.bodies) and t.display is None


# ---------------------------------------------------------------------------
# printing


def _fmt_vars(vl: VarList) -> str:
    if len(vl) == 0:
        return "()"
    parts = []
    for v in vl:
        parts.append(v.name if v.sort == ex.REAL else f"{v.name}:{v.sort.kind}")
    return ",".join(parts)


def _fmt_atom(a: Atom) -> str:
    if a.display is not None:
        return a.display
    if a.functional:
        upd = f"[{_fmt_vars(a.inputs)} -> " + \
              ", ".join(ex.to_text(b) for b in a.bodies) + "]"
        if len(a.outputs) == 0:
            upd = f"[{_fmt_vars(a.inputs)} -> ()]"
    else:
        upd = f"[{_fmt_vars(a.inputs)} -> {_fmt_vars(a.outputs)} : {ex.to_text(a.rel)}]"
    if a.pre == ex.TRUE:
        return upd
    return f"({{{_fmt_vars(a.inputs)} : {ex.to_text(a.pre)}}} ; {upd})"


def _pp(t: Term, top: bool) -> str:
    if isinstance(t, Atom):
        s = _fmt_atom(t)
        if top and s.startswith("(") and s.endswith(")"):
            return s[1:-1]
        return s
    if isinstance(t, AssertT):
        return f"{{{_fmt_vars(t.inputs)} : {ex.to_text(t.pred)}}}"
    if isinstance(t, IdT):
        return "Id"
    if isinstance(t, NamedRef):
        return t.name
    if isinstance(t, Feedback):
        return f"feedback({_pp(t.body, True)})"
    if isinstance(t, Serial):
        s = f"{_pp(t.left, False)} ; {_pp(t.right, False)}"
    elif isinstance(t, Parallel):
        s = f"{_pp(t.left, False)} || {_pp(t.right, False)}"
    else:  # pragma: no cover
        raise AssertionError(f"unknown term {t!r}")
    return s if top else f"({s})"


def pretty(t: Term) -> str:
    """Deterministic canonical rendering; the character count of this string
    is the unit of the text-length metrics."""
    return _pp(t, True)


def count_feedbacks(t: Term) -> int:
    if isinstance(t, Feedback):
        return 1 + count_feedbacks(t.body)
    if isinstance(t, (Serial, Parallel)):
        return count_feedbacks(t.left) + count_feedbacks(t.right)
    return 0


def walk(t: Term):
    yield t
    if isinstance(t, (Serial, Parallel)):
        yield from walk(t.left)
        yield from walk(t.right)
    elif isinstance(t, Feedback):
        yield from walk(t.body)
