"""Diagram-to-term translation: feedback-parallel, incremental, feedbackless.

All three strategies work over *components*: a term plus named port lists
(wire names, with each stateful block's current/next state threaded as extra
ports).  Wiring is by name matching; the produced terms are positional, with
explicit rerouting transformers where port orders have to change.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from . import blocklib, hbd
from . import expr as ex
from . import transformer as tf
from .errors import AlgebraicLoopError, NoFeedbackVars
from .expr import Var
from .hbd import BlockInstance, Diagram
from .transformer import (Atom, Feedback, IdT, NamedRef, Parallel, Serial, Term,
                          VarList, parallel_chain, reroute)


@dataclass(frozen=True)
class Component:
    ins: VarList
    outs: VarList
    cpt: Term


@dataclass
class Definition:
    name: str
    term: Term
    ins: VarList
    outs: VarList
    states: Tuple[str, ...] = ()
    next_states: Tuple[str, ...] = ()
    canon_ins: Tuple[str, ...] = ()
    canon_outs: Tuple[str, ...] = ()

    # signature() duck-typing
    @property
    def inputs(self) -> VarList:
        return self.ins

    @property
    def outputs(self) -> VarList:
        return self.outs


@dataclass(frozen=True)
class TranslationOptions:
    strategy: str = "it"  # fp | it | nfbt
    flat: bool = False
    io: bool = False
    id_elim: bool = True


@dataclass
class TranslationUnit:
    definitions: List[Definition]
    top: str
    options: TranslationOptions

    def definition(self, name: str) -> Definition:
        for d in self.definitions:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def top_definition(self) -> Definition:
        return self.definition(self.top)


def render_unit(unit: TranslationUnit) -> str:
    return "\n".join(f"def {d.name} = {tf.pretty(d.term)}" for d in unit.definitions)


# ---------------------------------------------------------------------------
# name-list operations (order preserved from the first operand)


def _inter(a: VarList, b: VarList) -> VarList:
    names = set(b.names)
    return VarList(tuple(v for v in a if v.name in names))


def _minus(a: VarList, b: VarList) -> VarList:
    names = set(b.names)
    return VarList(tuple(v for v in a if v.name not in names))


def _is_identity_wiring(src: VarList, dst: VarList) -> bool:
    return src.names == dst.names


def _seq(*terms: Term) -> Term:
    return tf.serial_chain(list(terms))


# ---------------------------------------------------------------------------
# composition algorithms


def parallel_comp(a: Component, b: Component) -> Component:
    return Component(a.ins + b.ins, a.outs + b.outs, Parallel(a.cpt, b.cpt))


def serial_comp(a: Component, b: Component) -> Component:
    """Feed `a` into `b`; unmatched ports ride along in parallel identities.

    When `b`'s inputs occur contiguously and in order within the available
    outputs, the identities are placed around `b` directly and no rerouting
    transformer is needed; otherwise a rerouting update re-orders the middle
    interface.
    """
    b_unc_in = _minus(b.ins, a.outs)
    a_unc_out = _minus(a.outs, b.ins)
    res_in = a.ins + b_unc_in
    full_src = a.outs + b_unc_in
    cpt_a = a.cpt if len(b_unc_in) == 0 else Parallel(a.cpt, IdT(b_unc_in))

    src_names = full_src.names
    bin_names = b.ins.names
    pos = -1
    if bin_names:
        for i in range(len(src_names) - len(bin_names) + 1):
            if src_names[i:i + len(bin_names)] == bin_names:
                pos = i
                break
    if pos >= 0:
        pre = VarList(full_src.vars[:pos])
        post = VarList(full_src.vars[pos + len(bin_names):])
        factors: List[Term] = []
        if len(pre):
            factors.append(IdT(pre))
        factors.append(b.cpt)
        if len(post):
            factors.append(IdT(post))
        return Component(res_in, pre + b.outs + post,
                         _seq(cpt_a, parallel_chain(factors)))

    mid_dst = b.ins + a_unc_out
    parts: List[Term] = [cpt_a]
    if not _is_identity_wiring(full_src, mid_dst):
        parts.append(reroute(full_src, mid_dst.names))
    parts.append(b.cpt if len(a_unc_out) == 0 else Parallel(b.cpt, IdT(a_unc_out)))
    return Component(res_in, b.outs + a_unc_out, _seq(*parts))


def feedback_comp(a: Component) -> Component:
    """Close every wire that is both an input and an output of `a`, moving the
    feedback variables to the front and applying feedback once per wire."""
    fdbv = _inter(a.ins, a.outs)
    if len(fdbv) == 0:
        raise NoFeedbackVars(f"no common ports in {a.ins.names}/{a.outs.names}")
    res_in = _minus(a.ins, fdbv)
    res_out = _minus(a.outs, fdbv)
    parts: List[Term] = []
    src = fdbv + res_in
    if not _is_identity_wiring(src, a.ins):
        parts.append(reroute(src, a.ins.names))
    parts.append(a.cpt)
    dst = fdbv + res_out
    if not _is_identity_wiring(a.outs, dst):
        parts.append(reroute(a.outs, dst.names))
    term: Term = _seq(*parts) if len(parts) > 1 else parts[0]
    for _ in range(len(fdbv)):
        term = Feedback(term)
    return Component(res_in, res_out, term)


def compose(a: Component, b: Component) -> Component:
    """Pick the composition maximizing eliminated wires: parallel when
    disconnected, else serial in the lighter back-wire orientation, wrapped
    in feedback when back wires remain."""
    a2b = _inter(a.outs, b.ins)
    b2a = _inter(b.outs, a.ins)
    if len(a2b) == 0 and len(b2a) == 0:
        return parallel_comp(a, b)
    if len(b2a) <= len(a2b):
        res = serial_comp(a, b)
        return feedback_comp(res) if len(b2a) else res
    res = serial_comp(b, a)
    return feedback_comp(res) if len(a2b) else res


# ---------------------------------------------------------------------------
# translation context


class _Ctx:
    def __init__(self, dt: Fraction):
        self.dt = dt
        self.states: Set[str] = set()
        self.defs: List[Definition] = []
        self.def_names: Set[str] = set()
        self.icc = 0

    def state_name_for(self, b: BlockInstance) -> str:
        return str(b.params.get("state_name", f"{b.id}.s"))

    def add_def(self, d: Definition) -> Definition:
        name = d.name
        k = 2
        while name in self.def_names:
            name = f"{d.name}_{k}"
            k += 1
        d.name = name
        self.def_names.add(name)
        self.defs.append(d)
        return d

    def def_map(self) -> Dict[str, Definition]:
        return {d.name: d for d in self.defs}


def _wire_var(name: str, sorts: Mapping[str, ex.Sort]) -> Var:
    return Var(name, sorts.get(name, ex.REAL))


def _basic_component(b: BlockInstance, ctx: _Ctx, sorts: Mapping[str, ex.Sort]) -> Component:
    state = None
    if blocklib.KINDS[b.kind].has_state:
        state = ctx.state_name_for(b)
        ctx.states.add(state)
    atom = blocklib.instantiate(b.kind, b.params, b.ins, b.outs,
                                state_name=state, dt=ctx.dt)
    ins = [_wire_var(w, sorts) for w in b.ins]
    outs = [_wire_var(w, sorts) for w in b.outs]
    if state is not None:
        ins.append(Var(state))
        outs.append(Var(state + "'"))
    return Component(VarList(tuple(ins)), VarList(tuple(outs)), atom)


def _subsystem_component(b: BlockInstance, d: Definition, ctx: _Ctx,
                         sorts: Mapping[str, ex.Sort]) -> Component:
    states = set(d.states)
    ins: List[Var] = []
    wires = iter(b.ins)
    for v in d.ins:
        if v.name in states:
            name = f"{b.id}.{v.name}"
            ctx.states.add(name)
            ins.append(Var(name, v.sort))
        else:
            ins.append(_wire_var(next(wires), sorts))
    outs: List[Var] = []
    wires = iter(b.outs)
    next_states = set(d.next_states)
    for v in d.outs:
        if v.name in next_states:
            outs.append(Var(f"{b.id}.{v.name[:-1]}'", v.sort))
        else:
            outs.append(_wire_var(next(wires), sorts))
    return Component(VarList(tuple(ins)), VarList(tuple(outs)), NamedRef(d.name))


def _mk_definition(name: str, comp: Component, ctx: _Ctx,
                   diagram: Optional[Diagram]) -> Definition:
    states = tuple(n for n in comp.ins.names if n in ctx.states)
    next_states = tuple(n for n in comp.outs.names
                        if n.endswith("'") and n[:-1] in ctx.states)
    if diagram is not None:
        declared_in = [w for w in diagram.inputs if w in comp.ins.names]
        ext_out = [w for w in hbd.external_outputs(diagram) if w in comp.outs.names]
        canon_ins = tuple(declared_in) + tuple(sorted(states))
        canon_outs = tuple(ext_out) + tuple(sorted(next_states))
    else:
        canon_ins = comp.ins.names
        canon_outs = comp.outs.names
    return Definition(name=name, term=comp.cpt, ins=comp.ins, outs=comp.outs,
                      states=states, next_states=next_states,
                      canon_ins=canon_ins, canon_outs=canon_outs)


# ---------------------------------------------------------------------------
# strategies (one island at a time)


def _island_components(island: Diagram, ctx: _Ctx, sorts: Mapping[str, ex.Sort],
                       sub_defs: Mapping[str, Definition]) -> List[Component]:
    comps = []
    for b in hbd.toposort(island):
        if b.is_subsystem:
            comps.append(_subsystem_component(b, sub_defs[b.id], ctx, sorts))
        else:
            comps.append(_basic_component(b, ctx, sorts))
    return comps


def translate_fp(comps: Sequence[Component]) -> Component:
    """Parallel composition of every block, then feedback per internal wire."""
    acc = comps[0]
    for c in comps[1:]:
        acc = parallel_comp(acc, c)
    fdbv = _inter(acc.ins, acc.outs)
    return feedback_comp(acc) if len(fdbv) else acc


def translate_it(comps: Sequence[Component], ctx: _Ctx, io: bool) -> Component:
    """Fold the pairwise composition over the dataflow order; with `io`,
    every intermediate composition is named and referenced."""
    acc = comps[0]
    for c in comps[1:]:
        acc = compose(acc, c)
        if io:
            ctx.icc += 1
            d = ctx.add_def(Definition(name=f"ICC{ctx.icc}", term=acc.cpt,
                                       ins=acc.ins, outs=acc.outs))
            d.states = tuple(n for n in acc.ins.names if n in ctx.states)
            d.next_states = tuple(n for n in acc.outs.names
                                  if n.endswith("'") and n[:-1] in ctx.states)
            d.canon_ins = acc.ins.names
            d.canon_outs = acc.outs.names
            acc = Component(acc.ins, acc.outs, NamedRef(d.name))
    return acc


def translate_nfbt(island: Diagram, ctx: _Ctx, sorts: Mapping[str, ex.Sort],
                   id_elim: bool = True) -> Component:
    """Feedback-free translation.

    Every stateful block splits into an output-from-state part and a
    next-state part; every multi-output block splits per output.  Each
    external output and next-state variable then gets a serial/parallel
    chain over its dependency cone, and the chains run in parallel behind a
    rerouting transformer that fans out the shared sources.
    """
    produced: Dict[str, tuple] = {}   # wire -> (block, piece)
    state_piece: Dict[str, tuple] = {}  # block id -> (block, piece)
    for b in island.blocks:
        kind = blocklib.KINDS[b.kind]
        for piece in blocklib.pieces(kind, b.params):
            if piece.target == ("state",):
                state_piece[b.id] = (b, piece)
            else:
                produced[b.outs[piece.target[1]]] = (b, piece)

    def source_var(name: str) -> Var:
        return Var(name) if name in ctx.states else _wire_var(name, sorts)

    def apply_piece(b: BlockInstance, piece: blocklib.Piece,
                    stack: Tuple[tuple, ...]) -> Tuple[Term, List[Var]]:
        key = (b.id, piece.target)
        if key in stack:
            raise AlgebraicLoopError(
                f"instantaneous cycle through {b.id} (feedbackless translation "
                f"requires an algebraic-loop-free diagram)")
        stack = stack + (key,)
        in_wires = [b.ins[i] for i in piece.in_idxs]
        state = ctx.state_name_for(b) if blocklib.KINDS[b.kind].has_state else None
        if piece.target == ("state",):
            out_name = state + "'"
        else:
            out_name = b.outs[piece.target[1]]
        atom = blocklib.piece_atom(b.kind, b.params, piece, in_wires, out_name,
                                   state_name=state, dt=ctx.dt)
        children: List[Tuple[Optional[Term], List[Var]]] = []
        for w in in_wires:
            children.append(build_chain(w, stack))
        if piece.uses_state:
            children.append((None, [Var(state)]))
        if not children:
            return atom, []
        if all(t is None for t, _ in children):
            return atom, [v for _, vs in children for v in vs]
        factors = [t if t is not None else IdT(VarList(tuple(vs)))
                   for t, vs in children]
        sources = [v for _, vs in children for v in vs]
        return Serial(parallel_chain(factors), atom), sources

    def build_chain(wire: str, stack: Tuple[tuple, ...]) -> Tuple[Optional[Term], List[Var]]:
        if wire in island.inputs:
            return None, [source_var(wire)]
        b, piece = produced[wire]
        return apply_piece(b, piece, stack)

    targets: List[Tuple[Term, List[Var], Var]] = []
    for w in hbd.external_outputs(island):
        term, sources = build_chain(w, ())
        if term is None:  # pass-through wire
            term = IdT(VarList((source_var(w),)))
        targets.append((term, sources, _wire_var(w, sorts)))
    for b in hbd.toposort(island):
        if b.id in state_piece:
            blk, piece = state_piece[b.id]
            state = ctx.state_name_for(blk)
            ctx.states.add(state)
            term, sources = apply_piece(blk, piece, ())
            targets.append((term, sources, Var(state + "'")))

    all_sources = [v for _, vs, _ in targets for v in vs]
    lead: List[Var] = []
    for v in all_sources:
        if all(v.name != u.name for u in lead):
            lead.append(v)
    body = parallel_chain([t for t, _, _ in targets])
    if [v.name for v in lead] != [v.name for v in all_sources]:
        body = Serial(reroute(VarList(tuple(lead)), [v.name for v in all_sources]),
                      body)
    if id_elim:
        body = eliminate_ids(body)
    return Component(VarList(tuple(lead)),
                     VarList(tuple(o for _, _, o in targets)), body)


def eliminate_ids(t: Term) -> Term:
    """Identity laws: identity atoms become Id, `Id ; A = A ; Id = A`, and
    adjacent parallel identities merge."""
    if isinstance(t, Serial):
        left = eliminate_ids(t.left)
        right = eliminate_ids(t.right)
        if isinstance(left, IdT):
            return right
        if isinstance(right, IdT):
            return left
        return Serial(left, right)
    if isinstance(t, Parallel):
        left = eliminate_ids(t.left)
        right = eliminate_ids(t.right)
        if isinstance(left, IdT) and isinstance(right, IdT):
            if left.sig is not None and right.sig is not None:
                return IdT(left.sig + right.sig)
        return Parallel(left, right)
    if isinstance(t, Feedback):
        return Feedback(eliminate_ids(t.body))
    if isinstance(t, Atom) and tf.is_identity(t):
        return IdT(t.inputs)
    return t


# ---------------------------------------------------------------------------
# whole-model translation


def translate_model(d: Diagram, opts: TranslationOptions) -> TranslationUnit:
    """Translate a validated diagram bottom-up into named definitions.

    Hierarchical translation names one definition per subsystem; the `flat`
    option flattens first; `io` names the incremental strategy's
    intermediate compositions.  The feedbackless strategy always works on
    the flattened diagram and ignores `flat`/`io`.
    """
    diags = [x for x in hbd.validate(d) if x.severity == "error"]
    if diags:
        raise ValueError("diagram has errors:\n" +
                         "\n".join(str(x) for x in diags))
    ctx = _Ctx(dt=d.dt())

    def translate_islands(diag: Diagram, sub_defs: Mapping[str, Definition]) -> Component:
        def data_out_sorts(b: BlockInstance) -> List[ex.Sort]:
            sub = sub_defs[b.id]
            skip = set(sub.next_states)
            return [v.sort for v in sub.outs if v.name not in skip]

        sorts = hbd.wire_sorts(diag, sub_out_sorts=data_out_sorts)
        isls = hbd.islands(diag)
        comps = []
        for isl in isls:
            if opts.strategy == "nfbt":
                comps.append(translate_nfbt(isl, ctx, sorts, id_elim=opts.id_elim))
            else:
                blocks = _island_components(isl, ctx, sorts, sub_defs)
                if opts.strategy == "fp":
                    comps.append(translate_fp(blocks))
                else:
                    comps.append(translate_it(blocks, ctx, opts.io))
        acc = comps[0]
        for c in comps[1:]:
            acc = parallel_comp(acc, c)
        return acc

    def translate_diagram(diag: Diagram) -> Definition:
        sub_defs: Dict[str, Definition] = {}
        for b in diag.blocks:
            if b.is_subsystem:
                sub_defs[b.id] = translate_diagram(b.subsystem)
        comp = translate_islands(diag, sub_defs)
        return ctx.add_def(_mk_definition(diag.name, comp, ctx, diag))

    if opts.strategy == "nfbt" or opts.flat:
        flat = hbd.flatten(d)
        comp = translate_islands(flat, {})
        top = ctx.add_def(_mk_definition(flat.name, comp, ctx, flat))
    else:
        top = translate_diagram(d)
    return TranslationUnit(definitions=ctx.defs, top=top.name, options=opts)
