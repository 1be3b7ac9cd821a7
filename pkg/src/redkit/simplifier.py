"""Rewriting branched Linear/ReLU/Sum graphs into sequential chains.

The pass works on blocks: a Sum layer fed exclusively by Linear layers whose
only consumer it is. Every network is first encoded into such blocks, then
blocks are eliminated back-to-front. A block whose inputs are all distinct
non-Sum layers either dissolves (single input) or is replaced by one
selector-Linear/ReLU/Linear triple that concatenates its input signals:
blocked ReLU layers contribute their pre-activations (their ReLU moves into
the new layer), passthrough layers contribute their outputs, shifted into the
nonnegative range when they come straight from the input box.

The result computes the same function over the given input region and is a
plain alternating Linear/ReLU chain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import Box
from .errors import ContractError, InternalInvariantError, StructuralError
from .netir import (
    KIND_INPUT,
    KIND_LINEAR,
    KIND_RELU,
    KIND_SUM,
    Layer,
    Network,
    as_sequential,
)
from .reducer import collapse_adjacent_linear


@dataclass(frozen=True)
class SumLinearBlockView:
    """A Sum layer together with the Linear layers that feed it (in order)."""

    sum_id: int
    linear_ids: tuple[int, ...]


@dataclass
class SimplifyStats:
    constructions: int = 0
    linearizations: int = 0
    normalization_rewrites: int = 0
    layer_budget: int = 0


class _Graph:
    """Mutable scratch representation used by the rewriting passes."""

    def __init__(self):
        self.kind: dict[int, str] = {}
        self.width: dict[int, int] = {}
        self.weight: dict[int, np.ndarray] = {}
        self.bias: dict[int, np.ndarray] = {}
        self.preds: dict[int, list[int]] = {}
        self.input_id: int | None = None
        self.output_id: int | None = None
        self._next = 0

    @classmethod
    def from_network(cls, net: Network) -> "_Graph":
        g = cls()
        for l in net.layers:
            g.kind[l.id] = l.kind
            g.width[l.id] = l.width
            if l.kind == KIND_LINEAR:
                g.weight[l.id] = np.array(l.weight)
                g.bias[l.id] = np.array(l.bias)
            g.preds[l.id] = list(net.preds[l.id])
        g.input_id = net.input_id
        g.output_id = net.output_id
        g._next = max(g.kind) + 1
        return g

    def to_network(self) -> Network:
        layers = []
        arcs = []
        for i in sorted(self.kind):
            if self.kind[i] == KIND_LINEAR:
                layers.append(Layer(i, KIND_LINEAR, self.width[i], self.weight[i], self.bias[i]))
            else:
                layers.append(Layer(i, self.kind[i], self.width[i]))
            for p in self.preds[i]:
                arcs.append((p, i))
        return Network(layers, arcs, self.input_id, self.output_id)

    def add(self, kind, width, weight=None, bias=None, preds=()) -> int:
        i = self._next
        self._next += 1
        self.kind[i] = kind
        self.width[i] = int(width)
        if kind == KIND_LINEAR:
            self.weight[i] = np.asarray(weight, dtype=np.float64)
            self.bias[i] = np.asarray(bias, dtype=np.float64)
        self.preds[i] = list(preds)
        return i

    def remove(self, i: int):
        del self.kind[i], self.width[i], self.preds[i]
        self.weight.pop(i, None)
        self.bias.pop(i, None)

    def succs_map(self) -> dict[int, list[int]]:
        s: dict[int, list[int]] = {i: [] for i in self.kind}
        for i in sorted(self.kind):
            for p in self.preds[i]:
                s[p].append(i)
        return s

    def consumers(self, i: int) -> list[int]:
        return [c for c in sorted(self.kind) if i in self.preds[c]]

    def replace_pred(self, consumer: int, old: int, new_ids: list[int]):
        out: list[int] = []
        for p in self.preds[consumer]:
            if p == old:
                out.extend(new_ids)
            else:
                out.append(p)
        self.preds[consumer] = out

    def sums(self) -> list[int]:
        return sorted(i for i, k in self.kind.items() if k == KIND_SUM)


def _initialize(g: _Graph):
    """Encode every layer into block form.

    Original Sum layers get an identity Linear per incoming arc; every Linear
    then gets a private trailing Sum that takes over its consumers.
    """
    original_sums = g.sums()
    original_linears = sorted(i for i, k in g.kind.items() if k == KIND_LINEAR)
    for sid in original_sums:
        w = g.width[sid]
        new_preds = []
        for p in g.preds[sid]:
            ident = g.add(KIND_LINEAR, w, np.eye(w), np.zeros(w), preds=[p])
            new_preds.append(ident)
        g.preds[sid] = new_preds
    for lid in original_linears:
        s = g.add(KIND_SUM, g.width[lid], preds=[lid])
        for c in g.consumers(lid):
            if c != s:
                g.replace_pred(c, lid, [s])
        if g.output_id == lid:
            g.output_id = s


def _block_view(g: _Graph, sid: int) -> SumLinearBlockView:
    if g.kind.get(sid) != KIND_SUM:
        raise ContractError(f"layer {sid} is not a sum layer")
    members = tuple(g.preds[sid])
    succs = g.succs_map()
    for m in members:
        if g.kind[m] != KIND_LINEAR:
            raise StructuralError(f"block {sid}: predecessor {m} is not linear")
        if succs[m] != [sid]:
            raise StructuralError(f"block {sid}: linear {m} feeds layers outside the block")
    return SumLinearBlockView(sid, members)


def _last_block(g: _Graph) -> int:
    """The unique block with no path to another block; asserted unique."""
    sums = g.sums()
    succs = g.succs_map()
    last = []
    for sid in sums:
        seen = set()
        stack = list(succs[sid])
        reaches_sum = False
        while stack:
            i = stack.pop()
            if i in seen:
                continue
            seen.add(i)
            if g.kind[i] == KIND_SUM:
                reaches_sum = True
                break
            stack.extend(succs[i])
        if not reaches_sum:
            last.append(sid)
    if len(last) != 1:
        raise InternalInvariantError(f"expected exactly one final block, found {last}")
    return last[0]


def _normalize(g: _Graph, sid: int) -> int:
    """Rewrite the block until its linears have pairwise-distinct non-Sum preds.

    A member whose predecessor is another block's Sum is replaced by one
    composed Linear per inner member (weights M_outer @ M_inner; the outer
    bias rides on the first); inner blocks left without consumers are
    deleted. Members sharing a predecessor are merged by summing parameters.
    """
    rewrites = 0
    while True:
        target = None
        for l in g.preds[sid]:
            p = g.preds[l][0]
            if g.kind[p] == KIND_SUM:
                target = (l, p)
                break
        if target is not None:
            l, p = target
            Mj, Bj = g.weight[l], g.bias[l]
            inner = list(g.preds[p])
            new_ids = []
            for i, il in enumerate(inner):
                Wn = Mj @ g.weight[il]
                Bn = Mj @ g.bias[il] + (Bj if i == 0 else 0.0)
                new_ids.append(g.add(KIND_LINEAR, Wn.shape[0], Wn, Bn, preds=[g.preds[il][0]]))
            g.replace_pred(sid, l, new_ids)
            g.remove(l)
            if not g.succs_map().get(p):
                for il in inner:
                    g.remove(il)
                g.remove(p)
            rewrites += 1
            continue
        seen: dict[int, int] = {}
        merged = False
        for l in list(g.preds[sid]):
            p = g.preds[l][0]
            if p in seen:
                keep = seen[p]
                g.weight[keep] = g.weight[keep] + g.weight[l]
                g.bias[keep] = g.bias[keep] + g.bias[l]
                g.preds[sid] = [q for q in g.preds[sid] if q != l]
                g.remove(l)
                merged = True
                rewrites += 1
            else:
                seen[p] = l
        if not merged:
            return rewrites


def _rewire_consumers(g: _Graph, old: int, new: int):
    for c in g.consumers(old):
        g.replace_pred(c, old, [new])
    if g.output_id == old:
        g.output_id = new


def _construct(g: _Graph, sid: int, box: Box | None):
    """Replace a multi-input block by a selector Linear, ReLU, Linear triple."""
    members = list(g.preds[sid])
    by_pred: dict[int, int] = {}
    for l in members:
        p = g.preds[l][0]
        if p in by_pred:
            raise InternalInvariantError(f"block {sid} not normalized: duplicate predecessor {p}")
        by_pred[p] = l
    ins = list(by_pred)
    if len(ins) <= 1:
        raise ContractError(f"block {sid} has a single input; use linearize")
    succs = g.succs_map()
    member_set = set(members)
    blocked = [
        p
        for p in ins
        if g.kind[p] == KIND_RELU and all(c in member_set for c in succs[p])
    ]
    passthrough = [p for p in ins if p not in blocked]
    for p in passthrough:
        if g.kind[p] not in (KIND_RELU, KIND_INPUT):
            raise InternalInvariantError(f"block {sid}: unexpected input kind {g.kind[p]}")
    if not blocked:
        raise InternalInvariantError(f"block {sid}: no blocked relu among inputs {ins}")
    order = sorted(blocked) + sorted(passthrough)
    widths = [g.width[q] for q in order]
    total = int(sum(widths))
    offsets = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    shift_all = np.zeros(total)
    sel_ids = []
    for pos, q in enumerate(order):
        off, w = offsets[pos], widths[pos]
        if q in blocked:
            src = g.preds[q][0]
        else:
            src = q
        sel = np.zeros((total, g.width[src]))
        sel[off : off + w, :] = np.eye(w)
        sb = np.zeros(total)
        if q not in blocked and g.kind[q] == KIND_INPUT:
            if box is None:
                raise ContractError(
                    "the input layer feeds a residual block; an input box is required "
                    "to shift its passthrough into the nonnegative range"
                )
            sh = np.maximum(0.0, -box.lower)
            sb[off : off + w] = sh
            shift_all[off : off + w] = sh
        sel_ids.append(g.add(KIND_LINEAR, total, sel, sb, preds=[src]))
    new_sum = g.add(KIND_SUM, total, preds=sel_ids)
    new_relu = g.add(KIND_RELU, total, preds=[new_sum])
    out_w = g.width[sid]
    Ml = np.zeros((out_w, total))
    Bl = np.zeros(out_w)
    for pos, q in enumerate(order):
        off, w = offsets[pos], widths[pos]
        m = by_pred[q]
        Ml[:, off : off + w] = g.weight[m]
        Bl += g.bias[m]
    Bl -= Ml @ shift_all
    new_lin = g.add(KIND_LINEAR, out_w, Ml, Bl, preds=[new_relu])
    _rewire_consumers(g, sid, new_lin)
    for l in members:
        g.remove(l)
    g.remove(sid)
    for r in blocked:
        g.remove(r)


def _linearize(g: _Graph, sid: int):
    """Dissolve a single-input block: its lone linear takes the Sum's place."""
    members = g.preds[sid]
    if len(members) != 1:
        raise ContractError(f"block {sid} has {len(members)} members; linearize needs one")
    _rewire_consumers(g, sid, members[0])
    g.remove(sid)


# ---------------------------------------------------------------------------
# public network-level surface


def initialization(net: Network) -> Network:
    """Block-encode a network (identity Linears under Sums, a Sum per Linear)."""
    g = _Graph.from_network(net)
    _initialize(g)
    return g.to_network()


def find_blocks(net: Network) -> list[SumLinearBlockView]:
    g = _Graph.from_network(net)
    return [_block_view(g, sid) for sid in g.sums()]


def last_block(net: Network) -> SumLinearBlockView:
    g = _Graph.from_network(net)
    return _block_view(g, _last_block(g))


def normalize_block(net: Network, sum_id: int) -> Network:
    g = _Graph.from_network(net)
    _block_view(g, sum_id)
    _normalize(g, sum_id)
    return g.to_network()


def linear_layer_construction(net: Network, sum_id: int, box: Box | None = None) -> Network:
    g = _Graph.from_network(net)
    _block_view(g, sum_id)
    _construct(g, sum_id, box)
    return g.to_network()


def linearize(net: Network, sum_id: int) -> Network:
    g = _Graph.from_network(net)
    _block_view(g, sum_id)
    _linearize(g, sum_id)
    return g.to_network()


def simplify(net: Network, box: Box | None = None) -> tuple[Network, SimplifyStats]:
    """Flatten any supported network into an alternating Linear/ReLU chain.

    Works back-to-front: the final block is normalized, then constructed away
    (several inputs) or dissolved (one input). Termination is budgeted by the
    encoded network's layer count; exceeding it is a bug, not an input error.
    The box is only needed when the input layer itself feeds a block through
    a passthrough path. Equivalence holds over the box (everywhere, when no
    input passthrough occurred).
    """
    g = _Graph.from_network(net)
    _initialize(g)
    stats = SimplifyStats(layer_budget=len(g.kind))
    while True:
        if not g.sums():
            break
        sid = _last_block(g)
        stats.normalization_rewrites += _normalize(g, sid)
        members = g.preds[sid]
        ins = {g.preds[l][0] for l in members}
        if len(ins) > 1:
            _construct(g, sid, box)
            stats.constructions += 1
            if stats.constructions > stats.layer_budget:
                raise InternalInvariantError(
                    f"construction count {stats.constructions} exceeded the layer "
                    f"budget {stats.layer_budget}"
                )
        else:
            _linearize(g, sid)
            stats.linearizations += 1
    out = collapse_adjacent_linear(g.to_network())
    as_sequential(out)
    return out, stats
