"""Catalog of atomic block kinds and their instantiation as atomic transformers.

Port convention: a block's transformer takes (data inputs + current state)
to (data outputs + next state).  The next-state variable is the state name
primed.  All kinds are functional; Div alone carries a nontrivial
precondition (nonzero divisor).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from . import expr as ex
from .errors import ArityMismatch, MissingParam
from .expr import Expr, Var
from .transformer import Atom, VarList

DEFAULT_DT = Fraction(1, 100)

# params fed to builders: plain dict with Fraction/int/str values
Params = Dict[str, object]


@dataclass(frozen=True)
class BlockKind:
    name: str
    n_in: int
    n_out: int                    # -1: fanout parameter decides
    has_state: bool
    required_params: Tuple[str, ...] = ()
    optional_params: Tuple[str, ...] = ()

    def in_arity(self, params: Params) -> int:
        return self.n_in

    def out_arity(self, params: Params) -> int:
        if self.n_out == -1:
            return int(params.get("fanout", 2))
        return self.n_out


def _frac(params: Params, key: str, default=None) -> Fraction:
    if key in params:
        return Fraction(str(params[key]))
    if default is None:
        raise MissingParam(f"missing required parameter {key!r}")
    return Fraction(default)


def _build(kind: BlockKind, params: Params, ins: List[Expr], state: Optional[Expr],
           dt: Fraction) -> Tuple[Expr, List[Expr], Optional[Expr]]:
    """(pre, data output bodies, next-state body) for one block instance."""
    name = kind.name
    if name == "Constant":
        return ex.TRUE, [ex.lit(_frac(params, "value"))], None
    if name == "Add":
        return ex.TRUE, [ex.add(ins[0], ins[1])], None
    if name == "Sub":
        return ex.TRUE, [ex.sub(ins[0], ins[1])], None
    if name == "Gain":
        return ex.TRUE, [ex.mul(ex.lit(_frac(params, "k")), ins[0])], None
    if name == "Product":
        return ex.TRUE, [ex.mul(ins[0], ins[1])], None
    if name == "Div":
        return ex.ne(ins[1], ex.lit(0)), [ex.div(ins[0], ins[1])], None
    if name == "Min":
        return ex.TRUE, [ex.ite(ex.le(ins[0], ins[1]), ins[0], ins[1])], None
    if name == "Max":
        return ex.TRUE, [ex.ite(ex.le(ins[0], ins[1]), ins[1], ins[0])], None
    if name == "Switch":
        thr = ex.lit(_frac(params, "threshold", 0))
        return ex.TRUE, [ex.ite(ex.le(thr, ins[1]), ins[0], ins[2])], None
    if name == "RelationalOp":
        op = str(params.get("op", "le"))
        table = {"eq": ex.eq, "ne": ex.ne, "lt": ex.lt, "le": ex.le,
                 "gt": lambda a, b: ex.lt(b, a), "ge": lambda a, b: ex.le(b, a)}
        if op not in table:
            raise MissingParam(f"RelationalOp: unknown op {op!r}")
        return ex.TRUE, [table[op](ins[0], ins[1])], None
    if name == "UnitDelay":
        return ex.TRUE, [state], ins[0]
    if name == "Integrator":
        step = _frac(params, "dt", None) if "dt" in params else dt
        return ex.TRUE, [state], ex.add(state, ex.mul(ins[0], ex.lit(step)))
    if name == "Split":
        return ex.TRUE, [ins[0]] * kind.out_arity(params), None
    if name in ("Scope", "Id"):
        return ex.TRUE, [ins[0]], None
    raise AssertionError(f"unknown kind {name}")  # pragma: no cover


_STATE_PARAMS = ("init", "state_name")

KINDS: Dict[str, BlockKind] = {k.name: k for k in [
    BlockKind("Constant", 0, 1, False, required_params=("value",)),
    BlockKind("Add", 2, 1, False),
    BlockKind("Sub", 2, 1, False),
    BlockKind("Gain", 1, 1, False, required_params=("k",)),
    BlockKind("Product", 2, 1, False),
    BlockKind("Div", 2, 1, False),
    BlockKind("Min", 2, 1, False),
    BlockKind("Max", 2, 1, False),
    BlockKind("Switch", 3, 1, False, optional_params=("threshold",)),
    BlockKind("RelationalOp", 2, 1, False, optional_params=("op",)),
    BlockKind("UnitDelay", 1, 1, True, optional_params=_STATE_PARAMS),
    BlockKind("Integrator", 1, 1, True, optional_params=("dt",) + _STATE_PARAMS),
    BlockKind("Split", 1, -1, False, optional_params=("fanout",)),
    BlockKind("Scope", 1, 1, False),
    BlockKind("Id", 1, 1, False),
]}


def out_sort(kind: BlockKind, index: int) -> ex.Sort:
    return ex.BOOL if kind.name == "RelationalOp" else ex.REAL


def feedthrough(kind: BlockKind, params: Params) -> List[frozenset]:
    """Per data output: set of input indices it instantaneously depends on."""
    if kind.has_state:
        return [frozenset()]
    n_in = kind.in_arity(params)
    return [frozenset(range(n_in)) if kind.name != "Split" else frozenset({0})
            for _ in range(kind.out_arity(params))]


def display_name(kind: BlockKind, params: Params) -> str:
    if kind.name == "Constant":
        return f"Const({ex.format_value(_frac(params, 'value'))})"
    if kind.name == "Gain":
        return f"Gain({ex.format_value(_frac(params, 'k'))})"
    if kind.name == "Integrator":
        if "dt" in params:
            return f"Integrator({ex.format_value(_frac(params, 'dt'))})"
        return "Integrator"
    return kind.name


def check_params(kind: BlockKind, params: Params) -> Optional[str]:
    """Returns a complaint string for malformed parameters, else None."""
    for p in kind.required_params:
        if p not in params:
            return f"missing required parameter {p!r}"
    known = set(kind.required_params) | set(kind.optional_params)
    for p in params:
        if p not in known:
            return f"unknown parameter {p!r}"
    if kind.name == "Split":
        k = params.get("fanout", 2)
        if not isinstance(k, int) or k < 2:
            return "fanout must be an integer >= 2"
    if kind.name == "RelationalOp":
        if str(params.get("op", "le")) not in ("eq", "ne", "lt", "le", "gt", "ge"):
            return f"unknown op {params.get('op')!r}"
    return None


def instantiate(kind_name: str, params: Params, in_names: Sequence[str],
                out_names: Sequence[str], state_name: Optional[str] = None,
                dt: Fraction = DEFAULT_DT) -> Atom:
    """The block's atomic transformer with ports renamed to the given wires;
    current state appended to inputs, next state to outputs."""
    kind = KINDS[kind_name]
    if len(in_names) != kind.in_arity(params):
        raise ArityMismatch(f"{kind_name}: expected {kind.in_arity(params)} inputs, "
                            f"got {list(in_names)}")
    if len(out_names) != kind.out_arity(params):
        raise ArityMismatch(f"{kind_name}: expected {kind.out_arity(params)} outputs, "
                            f"got {list(out_names)}")
    err = check_params(kind, params)
    if err:
        raise MissingParam(f"{kind_name}: {err}")
    in_vars = [Var(n) for n in in_names]
    state_var = None
    if kind.has_state:
        if not state_name:
            raise MissingParam(f"{kind_name}: a state variable name is required")
        state_var = Var(state_name)
        in_vars.append(state_var)
    pre, bodies, next_state = _build(
        kind, params, [ex.var_ref(v) for v in in_vars],
        ex.var_ref(state_var) if state_var is not None else None, dt)
    taken = {v.name for v in in_vars}
    out_vars = []
    for i, n in enumerate(out_names):
        name = n
        k = 2
        while name in taken:  # self-loop wire: keep the atom's ports distinct
            name = f"{n}_{k}"
            k += 1
        taken.add(name)
        out_vars.append(Var(name, out_sort(kind, i)))
    if kind.has_state:
        out_vars.append(Var(state_name + "'"))
        bodies = bodies + [next_state]
    return Atom(VarList(tuple(in_vars)), VarList(tuple(out_vars)), pre,
                bodies=tuple(bodies), display=display_name(kind, params))


# ---------------------------------------------------------------------------
# single-output decomposition (the feedbackless strategy's building blocks)

_ABBREV = {"UnitDelay": "ud", "Split": "splt", "Integrator": "intg"}


@dataclass(frozen=True)
class Piece:
    """One single-output fragment of a block.

    `target` is `("out", i)` for data output i or `("state",)` for the
    next-state function; `in_idxs` are the data inputs it reads."""

    target: tuple
    in_idxs: Tuple[int, ...]
    uses_state: bool


def pieces(kind: BlockKind, params: Params) -> List[Piece]:
    result = []
    ft = feedthrough(kind, params)
    for i in range(kind.out_arity(params)):
        result.append(Piece(("out", i), tuple(sorted(ft[i])), kind.has_state))
    if kind.has_state:
        uses_state = kind.name == "Integrator"
        result.append(Piece(("state",), (0,), uses_state))
    return result


def piece_atom(kind_name: str, params: Params, piece: Piece,
               in_names: Sequence[str], out_name: str,
               state_name: Optional[str] = None, dt: Fraction = DEFAULT_DT) -> Atom:
    """Atomic transformer for one piece, over exactly the wires it reads."""
    kind = KINDS[kind_name]
    full_ins = [Var(in_names[list(piece.in_idxs).index(i)]) if i in piece.in_idxs
                else Var(f"_u{i}") for i in range(kind.in_arity(params))]
    state_var = Var(state_name) if kind.has_state else None
    pre, bodies, next_state = _build(
        kind, params, [ex.var_ref(v) for v in full_ins],
        ex.var_ref(state_var) if state_var is not None else None, dt)
    if pre != ex.TRUE:
        raise ArityMismatch(f"{kind_name}: cannot decompose a guarded block")
    if piece.target == ("state",):
        body = next_state
        idx = 1
        out_sort_ = ex.REAL
    else:
        i = piece.target[1]
        body = bodies[i]
        idx = i + 1 if not kind.has_state else 2
        out_sort_ = out_sort(kind, i)
    atom_ins = [full_ins[i] for i in piece.in_idxs]
    if piece.uses_state:
        atom_ins.append(state_var)
    ins = VarList(tuple(atom_ins))
    out_base = out_name
    k = 2
    while out_base in ins.names:
        out_base = f"{out_name}_{k}"
        k += 1
    out = Var(out_base, out_sort_)
    abbrev = _ABBREV.get(kind_name, kind_name.lower())
    if body.op == "var" and len(ins) == 1:
        label = f"Id_{abbrev}{idx}"
    elif kind.has_state or kind.name == "Split":
        label = f"{abbrev.capitalize()}{idx}"
    else:
        label = display_name(kind, params)
    return Atom(ins, VarList((out,)), ex.TRUE, bodies=(body,), display=label)


def manifest() -> dict:
    """Machine-readable catalog: arities, parameters, feedthrough sets."""
    out = {}
    for kind in KINDS.values():
        entry = {
            "inputs": kind.n_in,
            "outputs": "fanout" if kind.n_out == -1 else kind.n_out,
            "state": int(kind.has_state),
            "required_params": list(kind.required_params),
            "optional_params": list(kind.optional_params),
        }
        if kind.n_out != -1:
            entry["feedthrough"] = [sorted(s) for s in feedthrough(kind, {})]
        out[kind.name] = entry
    return out
