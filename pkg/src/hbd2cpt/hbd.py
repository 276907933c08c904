"""Hierarchical block diagrams: file format, validation, flattening, ordering.

Diagram files are JSON documents::

    {"name": ..., "params": {...}, "inputs": [...], "outputs": [...],
     "blocks": [{"id": ..., "kind": ... | "subsystem": {...},
                 "params": {...}, "in": [...], "out": [...]}, ...]}

Wires connect by name: an output port name equal to an input port name is a
wire.  A width suffix `w[n]` expands into `w_1 .. w_n`.  An output feeding
k > 1 inputs is normalized at parse time into an explicit k-ary Split block
with fresh wires `w_1 .. w_k`; after normalization every wire is produced
once and consumed at most once (unconsumed wires act as implicit external
outputs).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from . import blocklib
from .errors import CycleError, DiagramSyntaxError, SchemaError


@dataclass
class BlockInstance:
    id: str
    kind: Optional[str] = None
    subsystem: Optional["Diagram"] = None
    params: dict = field(default_factory=dict)
    ins: List[str] = field(default_factory=list)
    outs: List[str] = field(default_factory=list)

    @property
    def is_subsystem(self) -> bool:
        return self.subsystem is not None


@dataclass
class Diagram:
    name: str
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    blocks: List[BlockInstance] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def block(self, id: str) -> BlockInstance:
        for b in self.blocks:
            if b.id == id:
                return b
        raise KeyError(id)

    def dt(self) -> Fraction:
        if "dt" in self.params:
            return Fraction(str(self.params["dt"]))
        return blocklib.DEFAULT_DT


@dataclass
class Diagnostic:
    severity: str  # error | warning
    code: str      # AlgebraicLoop | UnsupportedBlock | MalformedBlock | DanglingPort | DuplicateWire
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.code} at {self.location}: {self.message}"


def _expand_widths(names: Iterable[str], path: str) -> List[str]:
    out: List[str] = []
    for n in names:
        if not isinstance(n, str) or not n:
            raise SchemaError("port names must be nonempty strings", path)
        if n.endswith("]") and "[" in n:
            base, _, width = n[:-1].partition("[")
            try:
                k = int(width)
            except ValueError:
                raise SchemaError(f"bad width in {n!r}", path) from None
            if k < 1:
                raise SchemaError(f"bad width in {n!r}", path)
            out.extend(f"{base}_{i}" for i in range(1, k + 1))
        else:
            out.append(n)
    return out


def _parse_block(raw: dict, path: str) -> BlockInstance:
    if not isinstance(raw, dict):
        raise SchemaError("block entry must be an object", path)
    if "id" not in raw or not isinstance(raw["id"], str) or not raw["id"]:
        raise SchemaError("block needs a nonempty string id", path)
    bid = raw["id"]
    here = f"{path}/{bid}"
    known = {"id", "kind", "subsystem", "params", "in", "out"}
    for key in raw:
        if key not in known:
            raise SchemaError(f"unknown key {key!r}", here)
    if ("kind" in raw) == ("subsystem" in raw):
        raise SchemaError("block needs exactly one of kind/subsystem", here)
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise SchemaError("params must be an object", here)
    ins = _expand_widths(raw.get("in", []), here)
    outs = _expand_widths(raw.get("out", []), here)
    sub = None
    if "subsystem" in raw:
        sub = _parse_dict(raw["subsystem"], here)
    return BlockInstance(id=bid, kind=raw.get("kind"), subsystem=sub,
                         params=dict(params), ins=ins, outs=outs)


def _parse_dict(raw: dict, path: str) -> Diagram:
    if not isinstance(raw, dict):
        raise SchemaError("diagram must be an object", path)
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("diagram needs a nonempty name", path)
    here = f"{path}/{name}" if path else name
    known = {"name", "params", "inputs", "outputs", "blocks"}
    for key in raw:
        if key not in known:
            raise SchemaError(f"unknown key {key!r}", here)
    d = Diagram(name=name,
                inputs=_expand_widths(raw.get("inputs", []), here),
                outputs=_expand_widths(raw.get("outputs", []), here),
                params=dict(raw.get("params", {})))
    seen: Set[str] = set()
    for braw in raw.get("blocks", []):
        b = _parse_block(braw, here)
        if b.id in seen:
            raise SchemaError(f"duplicate block id {b.id!r}", here)
        seen.add(b.id)
        d.blocks.append(b)
    _normalize_fanout(d)
    return d


def parse(text: str) -> Diagram:
    """Parse a diagram file; fan-out and width normalization applied."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise DiagramSyntaxError(e.msg, e.lineno, e.colno) from None
    return _parse_dict(raw, "")


def load(path: str) -> Diagram:
    with open(path, "r", encoding="utf-8") as f:
        return parse(f.read())


def _normalize_fanout(d: Diagram) -> None:
    """Insert an explicit k-ary Split behind every output feeding k>1 inputs."""
    consumers: Dict[str, List[tuple]] = {}
    for b in d.blocks:
        for i, w in enumerate(b.ins):
            consumers.setdefault(w, []).append(("block", b.id, i))
    for i, w in enumerate(d.outputs):
        consumers.setdefault(w, []).append(("output", i))
    existing = {w for b in d.blocks for w in b.ins + b.outs} | set(d.inputs) | set(d.outputs)
    ids = {b.id for b in d.blocks}
    new_blocks: List[BlockInstance] = []
    for wire, cons in sorted(consumers.items()):
        if len(cons) < 2:
            continue
        cons = sorted(cons)  # deterministic: block consumers by (id, port), then outputs
        split_id = f"{wire}_split"
        k = 2
        while split_id in ids:
            split_id = f"{wire}_split{k}"
            k += 1
        ids.add(split_id)
        branches = []
        for j in range(len(cons)):
            w = f"{wire}_{j + 1}"
            k = 2
            while w in existing:
                w = f"{wire}_{j + 1}_{k}"
                k += 1
            existing.add(w)
            branches.append(w)
        new_blocks.append(BlockInstance(id=split_id, kind="Split",
                                        params={"fanout": len(cons)},
                                        ins=[wire], outs=branches))
        for (entry, branch) in zip(cons, branches):
            if entry[0] == "block":
                _, bid, idx = entry
                d.block(bid).ins[idx] = branch
            else:
                _, idx = entry
                d.outputs[idx] = branch
    d.blocks.extend(new_blocks)


# ---------------------------------------------------------------------------
# validation


def _producers(d: Diagram) -> Dict[str, List[str]]:
    prod: Dict[str, List[str]] = {}
    for b in d.blocks:
        for w in b.outs:
            prod.setdefault(w, []).append(b.id)
    return prod


def _block_arities(b: BlockInstance) -> Optional[Tuple[int, int]]:
    if b.is_subsystem:
        return len(b.subsystem.inputs), len(b.subsystem.outputs)
    kind = blocklib.KINDS.get(b.kind)
    if kind is None:
        return None
    return kind.in_arity(b.params), kind.out_arity(b.params)


def validate(d: Diagram, _path: str = "") -> List[Diagnostic]:
    """All diagnostics for `d`, including algebraic-loop detection over the
    flattened diagram."""
    here = _path or d.name
    out: List[Diagnostic] = []
    state_names: Set[str] = set()
    all_wires = {w for b in d.blocks for w in b.ins + b.outs}
    for b in d.blocks:
        loc = f"{here}/{b.id}"
        if b.is_subsystem:
            out.extend(validate(b.subsystem, f"{loc}"))
        elif b.kind not in blocklib.KINDS:
            out.append(Diagnostic("error", "UnsupportedBlock", loc,
                                  f"unknown block kind {b.kind!r}"))
            continue
        else:
            complaint = blocklib.check_params(blocklib.KINDS[b.kind], b.params)
            if complaint:
                out.append(Diagnostic("error", "MalformedBlock", loc, complaint))
                continue
            if blocklib.KINDS[b.kind].has_state:
                sn = b.params.get("state_name", f"{b.id}.s")
                if sn in state_names or sn in all_wires:
                    out.append(Diagnostic("error", "MalformedBlock", loc,
                                          f"state name {sn!r} clashes"))
                state_names.add(sn)
        arities = _block_arities(b)
        if arities is not None:
            n_in, n_out = arities
            if len(b.ins) != n_in or len(b.outs) != n_out:
                out.append(Diagnostic(
                    "error", "MalformedBlock", loc,
                    f"expected {n_in} inputs/{n_out} outputs, "
                    f"got {len(b.ins)}/{len(b.outs)}"))
    prod = _producers(d)
    for w, ps in sorted(prod.items()):
        drivers = list(ps) + (["<external input>"] if w in d.inputs else [])
        if len(drivers) > 1:
            out.append(Diagnostic("error", "DuplicateWire", f"{here}/{w}",
                                  f"wire {w!r} driven by {sorted(drivers)}"))
    consumed: Set[str] = set()
    for b in d.blocks:
        for i, w in enumerate(b.ins):
            consumed.add(w)
            if w not in prod and w not in d.inputs:
                out.append(Diagnostic("error", "DanglingPort", f"{here}/{b.id}.in[{i}]",
                                      f"input wire {w!r} has no producer"))
    for w in d.outputs:
        if w not in prod:
            out.append(Diagnostic("error", "DanglingPort", f"{here}/{w}",
                                  f"declared output {w!r} is not produced"))
    for w in d.inputs:
        if w not in consumed and w not in d.outputs:
            out.append(Diagnostic("warning", "DanglingPort", f"{here}/{w}",
                                  f"declared input {w!r} is never used"))
    if not _path and not any(x.severity == "error" for x in out):
        out.extend(_loop_diagnostics(flatten(d)))
    return out


def _loop_diagnostics(flat: Diagram) -> List[Diagnostic]:
    """Cycles of the instantaneous-dependency graph (edges only through
    inputs some output feeds through)."""
    prod_of = {w: b.id for b in flat.blocks for w in b.outs}
    succs: Dict[str, Set[str]] = {b.id: set() for b in flat.blocks}
    for b in flat.blocks:
        kind = blocklib.KINDS.get(b.kind or "")
        if kind is None:
            continue
        ft = blocklib.feedthrough(kind, b.params)
        through = set().union(*ft) if ft else set()
        for i, w in enumerate(b.ins):
            if i in through and w in prod_of:
                succs[prod_of[w]].add(b.id)
    sccs = _tarjan(succs)
    out = []
    for comp in sccs:
        if len(comp) > 1 or (len(comp) == 1 and comp[0] in succs[comp[0]]):
            members = ", ".join(sorted(comp))
            out.append(Diagnostic("error", "AlgebraicLoop",
                                  f"{flat.name}/{{{members}}}",
                                  f"instantaneous cycle through blocks {{{members}}}"))
    return out


def _tarjan(succs: Dict[str, Set[str]]) -> List[List[str]]:
    index: Dict[str, int] = {}
    low: Dict[str, int] = {}
    on_stack: Set[str] = set()
    stack: List[str] = []
    result: List[List[str]] = []
    counter = [0]

    def visit(v: str) -> None:
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for w in sorted(succs[v]):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            result.append(sorted(comp))

    for v in sorted(succs):
        if v not in index:
            visit(v)
    return result


# ---------------------------------------------------------------------------
# flattening, islands, ordering


def flatten(d: Diagram) -> Diagram:
    """Inline all subsystems; inner block ids, wires and state names are
    prefixed with the instance path to stay unique."""
    flat = Diagram(name=d.name, inputs=list(d.inputs), outputs=list(d.outputs),
                   params=dict(d.params))
    for b in d.blocks:
        if not b.is_subsystem:
            flat.blocks.append(BlockInstance(id=b.id, kind=b.kind,
                                             params=dict(b.params),
                                             ins=list(b.ins), outs=list(b.outs)))
            continue
        inner = flatten(b.subsystem)
        alias = dict(zip(inner.inputs, b.ins))
        alias.update(zip(inner.outputs, b.outs))

        def rename(w: str) -> str:
            return alias[w] if w in alias else f"{b.id}.{w}"

        for ib in inner.blocks:
            params = dict(ib.params)
            if "state_name" in params:
                params["state_name"] = f"{b.id}.{params['state_name']}"
            flat.blocks.append(BlockInstance(
                id=f"{b.id}.{ib.id}", kind=ib.kind, params=params,
                ins=[rename(w) for w in ib.ins],
                outs=[rename(w) for w in ib.outs]))
    return flat


def external_outputs(d: Diagram) -> List[str]:
    """Declared outputs followed by implicit ones (produced, never consumed)."""
    consumed = {w for b in d.blocks for w in b.ins} | set(d.outputs)
    implicit = []
    for b in d.blocks:
        for w in b.outs:
            if w not in consumed:
                implicit.append(w)
    return list(d.outputs) + implicit


def islands(d: Diagram) -> List[Diagram]:
    """Connected components of the undirected wire graph, ordered by their
    smallest block id."""
    by_wire: Dict[str, List[str]] = {}
    for b in d.blocks:
        for w in b.ins + b.outs:
            by_wire.setdefault(w, []).append(b.id)
    adj: Dict[str, Set[str]] = {b.id: set() for b in d.blocks}
    for members in by_wire.values():
        for a in members:
            adj[a].update(m for m in members if m != a)
    unseen = set(adj)
    comps: List[List[str]] = []
    while unseen:
        start = min(unseen)
        comp = {start}
        frontier = [start]
        while frontier:
            nxt = frontier.pop()
            for m in adj[nxt]:
                if m not in comp:
                    comp.add(m)
                    frontier.append(m)
        unseen -= comp
        comps.append(sorted(comp))
    comps.sort(key=lambda c: c[0])
    result = []
    for i, comp in enumerate(comps):
        blocks = [b for b in d.blocks if b.id in set(comp)]
        wires = {w for b in blocks for w in b.ins + b.outs}
        name = d.name if len(comps) == 1 else f"{d.name}_i{i + 1}"
        result.append(Diagram(name=name,
                              inputs=[w for w in d.inputs if w in wires],
                              outputs=[w for w in d.outputs if w in wires],
                              blocks=blocks, params=dict(d.params)))
    return result


def toposort(d: Diagram) -> List[BlockInstance]:
    """Deterministic dataflow order: Kahn's algorithm over the wire graph
    from the diagram's sources, entering each broken loop at the block that
    consumes an external input (ties: fewest unsatisfied inputs, then id).

    Mirrors the order used by the incremental translation; it is not an
    evaluation schedule (the entry block of a loop is emitted before the
    wire that feeds it back).
    """
    import heapq

    satisfied: Set[str] = set(d.inputs)
    remaining = {b.id: b for b in d.blocks}
    order: List[BlockInstance] = []
    ready: List[str] = []

    def is_ready(b: BlockInstance) -> bool:
        return all(w in satisfied for w in b.ins)

    for b in d.blocks:
        if is_ready(b):
            heapq.heappush(ready, b.id)
    while remaining:
        if not ready:
            def key(b: BlockInstance):
                ext = sum(1 for w in b.ins if w in d.inputs)
                missing = sum(1 for w in b.ins if w not in satisfied)
                return (-ext, missing, b.id)
            entry = min((remaining[i] for i in remaining), key=key)
            heapq.heappush(ready, entry.id)
        bid = heapq.heappop(ready)
        if bid not in remaining:
            continue
        b = remaining.pop(bid)
        order.append(b)
        for w in b.outs:
            satisfied.add(w)
        for other in remaining.values():
            if is_ready(other) and other.id not in ready:
                heapq.heappush(ready, other.id)
    return order


def wire_sorts(d: Diagram, sub_out_sorts=None) -> Dict[str, "object"]:
    """Sort of every wire (producer decides; external inputs are Real).

    `sub_out_sorts(instance) -> sorts` resolves subsystem output sorts."""
    from . import expr as ex
    sorts: Dict[str, object] = {w: ex.REAL for w in d.inputs}
    for b in d.blocks:
        if b.is_subsystem:
            outs = sub_out_sorts(b) if sub_out_sorts else [ex.REAL] * len(b.outs)
            for w, s in zip(b.outs, outs):
                sorts[w] = s
        else:
            kind = blocklib.KINDS[b.kind]
            for i, w in enumerate(b.outs):
                sorts[w] = blocklib.out_sort(kind, i)
    return sorts
