"""Elimination of provably stable ReLU neurons from sequential networks.

Given pre-activation bounds, neurons that never activate are dropped and
neurons that always activate are folded into the following linear layer: the
activated block of X composes with the columns of Z it feeds, a bias shift
keeps the replacement pre-activations nonnegative (so the interposed ReLU is
the identity on them), and Z's bias absorbs the opposite shift. The result
computes the same function over the input box with fewer ReLU neurons.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bounds import BoundsTable, Box, compute_bounds, crown_backward
from .errors import ContractError, InternalInvariantError
from .netir import (
    KIND_LINEAR,
    KIND_RELU,
    Layer,
    Network,
    NetworkBuilder,
    as_sequential,
)


@dataclass(frozen=True)
class LayerPartition:
    """Index partition of one ReLU layer: deactivated / activated / unstable."""

    deactivated: np.ndarray
    activated: np.ndarray
    unstable: np.ndarray
    width: int

    def __post_init__(self):
        d = np.asarray(self.deactivated, dtype=np.int64)
        a = np.asarray(self.activated, dtype=np.int64)
        u = np.asarray(self.unstable, dtype=np.int64)
        object.__setattr__(self, "deactivated", d)
        object.__setattr__(self, "activated", a)
        object.__setattr__(self, "unstable", u)
        merged = np.concatenate([d, a, u])
        if len(np.unique(merged)) != self.width or len(merged) != self.width:
            raise ContractError("partition classes must cover each neuron exactly once")

    @property
    def n_stable(self) -> int:
        return len(self.deactivated) + len(self.activated)


def classify(table: BoundsTable, tol: float = 0.0) -> list[LayerPartition]:
    """Partition every hidden layer's neurons by pre-activation sign.

    tol widens both stability tests symmetrically; any nonzero value is
    unsound and exists only for experiments. Deactivation wins when a bound
    pair satisfies both tests (the l = u = 0 case).
    """
    if tol < 0:
        raise ContractError("tol must be nonnegative")
    parts = []
    for k in range(len(table.linear_ids) - 1):
        lo, hi = table.pre_activation(k)
        idx = np.arange(lo.shape[0])
        deact = hi <= tol
        act = (~deact) & (lo >= -tol)
        unstable = ~(deact | act)
        parts.append(LayerPartition(idx[deact], idx[act], idx[unstable], lo.shape[0]))
    return parts


@dataclass(frozen=True)
class ReductionPlan:
    """Everything needed to audit one layer's rewrite.

    merge_weight/merge_bias are the composed rows replacing the activated
    block (empty when merging was skipped); shift is the nonnegativity
    correction added to the new rows' biases and subtracted, through Z's
    columns, from Z's bias. kept lists surviving original neuron indices in
    their output order after the merged rows.
    """

    partition: LayerPartition
    merged: bool
    merge_weight: np.ndarray
    merge_bias: np.ndarray
    shift: np.ndarray
    kept: np.ndarray
    width_before: int
    width_after: int


def _interval_lower(W, b, v_lo, v_hi):
    lo, _ = kernels.interval_affine(W, b, v_lo, v_hi)
    return lo


def reduce_layer(
    x: Layer,
    y: Layer,
    z: Layer,
    part: LayerPartition,
    v_range: tuple[np.ndarray, np.ndarray],
    pre_lb: np.ndarray,
    merge_lower=None,
) -> tuple[Layer | None, Layer | None, Layer, ReductionPlan]:
    """Rewrite the block V -> X(linear) -> Y(relu) -> Z(linear).

    v_range bounds V's output (the box, or clamped bounds for a ReLU V);
    pre_lb is X's known pre-activation lower bound vector, used for in-place
    stabilization shifts when merging is skipped. merge_lower optionally
    supplies a tighter lower-bounding function for merged rows. Returns
    (X', Y', Z', plan); X' and Y' are None when the hidden layer vanished
    (caller splices a single linear computing the constant Z bias).
    """
    if x.kind != KIND_LINEAR or z.kind != KIND_LINEAR or y.kind != KIND_RELU:
        raise ContractError("reduce_layer expects linear, relu, linear layers")
    if part.width != x.width:
        raise ContractError(f"partition width {part.width} != layer width {x.width}")
    D, A, U = part.deactivated, part.activated, part.unstable
    n = z.width
    v_lo, v_hi = v_range
    if len(A) > n:
        merge_w = z.weight[:, A] @ x.weight[A, :]
        merge_b = z.weight[:, A] @ x.bias[A]
        if merge_lower is not None:
            lo = merge_lower(merge_w, merge_b)
        else:
            lo = _interval_lower(merge_w, merge_b, v_lo, v_hi)
        shift = np.maximum(0.0, -lo)
        new_w = np.vstack([merge_w, x.weight[U, :]])
        new_b = np.concatenate([merge_b + shift, x.bias[U]])
        z_w = np.hstack([np.eye(n), z.weight[:, U]])
        z_b = z.bias - shift
        plan = ReductionPlan(part, True, merge_w, merge_b, shift, np.sort(U), x.width, new_w.shape[0])
    else:
        kept = np.sort(np.concatenate([A, U])).astype(np.int64)
        shift_vec = np.zeros(len(kept))
        in_a = np.isin(kept, A)
        shift_vec[in_a] = np.maximum(0.0, -pre_lb[kept[in_a]])
        new_w = x.weight[kept, :]
        new_b = x.bias[kept] + shift_vec
        z_w = z.weight[:, kept]
        z_b = z.bias - z.weight[:, kept] @ shift_vec
        plan = ReductionPlan(
            part,
            False,
            np.empty((0, x.in_width)),
            np.empty(0),
            shift_vec,
            kept,
            x.width,
            len(kept),
        )
    if new_w.shape[0] == 0:
        z_only = Layer(z.id, KIND_LINEAR, n, np.zeros((n, x.in_width)), z_b)
        return None, None, z_only, plan
    x2 = Layer(x.id, KIND_LINEAR, new_w.shape[0], new_w, new_b)
    y2 = Layer(y.id, KIND_RELU, new_w.shape[0])
    z2 = Layer(z.id, KIND_LINEAR, n, z_w, z_b)
    return x2, y2, z2, plan


@dataclass
class ReductionReport:
    """Per-layer reduction audit plus totals; serializes to CSV."""

    method: str
    rows: list[dict] = field(default_factory=list)
    relu_before: int = 0
    relu_after: int = 0
    wall_time_s: float = 0.0

    def add_layer(self, index: int, plan: ReductionPlan):
        p = plan.partition
        self.rows.append(
            {
                "layer": index,
                "width_before": plan.width_before,
                "n_deactivated": len(p.deactivated),
                "n_activated": len(p.activated),
                "n_unstable": len(p.unstable),
                "width_after": plan.width_after,
                "merged": int(plan.merged),
            }
        )

    @property
    def ratio(self) -> float:
        """ReLU count before reduction over the count after; >= 1 on success."""
        return self.relu_before / self.relu_after if self.relu_after else float("inf")

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [
            "layer",
            "width_before",
            "n_deactivated",
            "n_activated",
            "n_unstable",
            "width_after",
            "merged",
        ]
        w = csv.DictWriter(buf, fieldnames=names)
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        buf.write(
            f"# totals: relu_before={self.relu_before} relu_after={self.relu_after} "
            f"ratio={self.ratio:.4f} method={self.method} wall_time_s={self.wall_time_s:.4f}\n"
        )
        return buf.getvalue()


def _seq_to_network(input_width: int, items: list[tuple[str, object]]) -> Network:
    """items: ordered ('linear', (W, b)) / ('relu', width) chain entries."""
    b = NetworkBuilder()
    cur = b.add_input(input_width)
    for kind, payload in items:
        if kind == KIND_LINEAR:
            W, bias = payload
            cur = b.add_linear(cur, W, bias)
        else:
            cur = b.add_relu(cur, payload)
    return b.build()


def collapse_adjacent_linear(net: Network) -> Network:
    """Compose consecutive linear layers (W2 W1, W2 b1 + b2) to a fixpoint."""
    items = _chain_items(net)
    changed = True
    while changed:
        changed = False
        out: list[tuple[str, object]] = []
        i = 0
        while i < len(items):
            kind, payload = items[i]
            if (
                kind == KIND_LINEAR
                and i + 1 < len(items)
                and items[i + 1][0] == KIND_LINEAR
            ):
                W1, b1 = payload
                W2, b2 = items[i + 1][1]
                out.append((KIND_LINEAR, (W2 @ W1, W2 @ b1 + b2)))
                i += 2
                changed = True
            else:
                out.append((kind, payload))
                i += 1
        items = out
    return _seq_to_network(net.input_layer.width, items)


def _chain_items(net: Network) -> list[tuple[str, object]]:
    """Flatten a chain-shaped network into collapse-friendly items.

    Unlike as_sequential this accepts consecutive linear layers.
    """
    from .netir import topo_order

    items: list[tuple[str, object]] = []
    order = topo_order(net)
    prev = net.input_id
    for i in order[1:]:
        layer = net.by_id[i]
        if net.preds[i] != (prev,):
            raise ContractError("collapse_adjacent_linear expects a chain-shaped network")
        if layer.kind == KIND_LINEAR:
            items.append((KIND_LINEAR, (np.array(layer.weight), np.array(layer.bias))))
        elif layer.kind == KIND_RELU:
            items.append((KIND_RELU, layer.width))
        else:
            raise ContractError("collapse_adjacent_linear expects linear/relu layers only")
        prev = i
    return items


def reduce_network(
    net: Network,
    box: Box,
    method: str = "crown",
    tol: float = 0.0,
    alpha_rule: str = "adaptive",
    shift_method: str = "interval",
    table: BoundsTable | None = None,
    partitions: list[LayerPartition] | None = None,
) -> tuple[Network, ReductionReport]:
    """Drop/merge every provably stable neuron; returns (network, report).

    Layers are processed from the last hidden layer backwards so each rewrite
    only touches the already-rewritten suffix, keeping earlier layers' bounds
    valid. shift_method 'crown' recomputes merged-row lower bounds with a
    backward pass over the prefix network for smaller shifts; 'interval' uses
    the predecessor range directly.
    """
    if shift_method not in ("interval", "crown"):
        raise ContractError(f"shift_method must be 'interval' or 'crown', got {shift_method!r}")
    t0 = time.perf_counter()
    seq = as_sequential(net)
    if seq.ends_with_relu:
        raise ContractError("reduce_network expects an affine-ended sequential network")
    if table is None:
        table = compute_bounds(net, box, method, alpha_rule)
    if partitions is None:
        partitions = classify(table, tol)
    n_hidden = len(seq.linears) - 1
    if len(partitions) != n_hidden:
        raise ContractError(f"expected {n_hidden} partitions, got {len(partitions)}")

    report = ReductionReport(method=method)
    report.relu_before = sum(l.width for l in seq.relus)

    # mutable chain: [('linear', (W, b)) / ('relu', width), ...]
    items: list[tuple[str, object]] = [
        (KIND_LINEAR, (np.array(l.weight), np.array(l.bias))) for l in seq.linears
    ]
    chain: list[tuple[str, object]] = []
    for k, it in enumerate(items):
        chain.append(it)
        if k < len(seq.relus):
            chain.append((KIND_RELU, seq.relus[k].width))

    for k in range(n_hidden - 1, -1, -1):
        xi = 2 * k  # chain positions: linear at 2k, relu 2k+1, next linear 2k+2
        Wx, bx = chain[xi][1]
        Wz, bz = chain[xi + 2][1]
        x = Layer(0, KIND_LINEAR, Wx.shape[0], Wx, bx)
        y = Layer(1, KIND_RELU, Wx.shape[0])
        z = Layer(2, KIND_LINEAR, Wz.shape[0], Wz, bz)
        if k == 0:
            v_range = (box.lower, box.upper)
        else:
            v_range = table.post_activation(k - 1)
        pre_lb = table.pre_activation(k)[0]
        merge_lower = None
        if shift_method == "crown" and k > 0:
            prefix = chain[: xi]

            def merge_lower(mw, mb, _prefix=tuple(prefix)):
                pre_net = _seq_to_network(
                    net.input_layer.width, list(_prefix) + [(KIND_LINEAR, (mw, mb))]
                )
                t = crown_backward(pre_net, box, alpha_rule)
                return t.output_bounds()[0]

        x2, y2, z2, plan = reduce_layer(x, y, z, partitions[k], v_range, pre_lb, merge_lower)
        report.add_layer(k, plan)
        if x2 is None:
            chain[xi : xi + 3] = [(KIND_LINEAR, (np.array(z2.weight), np.array(z2.bias)))]
        else:
            chain[xi] = (KIND_LINEAR, (np.array(x2.weight), np.array(x2.bias)))
            chain[xi + 1] = (KIND_RELU, x2.width)
            chain[xi + 2] = (KIND_LINEAR, (np.array(z2.weight), np.array(z2.bias)))

    reduced = _seq_to_network(net.input_layer.width, chain)
    reduced = collapse_adjacent_linear(reduced)
    out_seq = as_sequential(reduced)
    report.relu_after = sum(l.width for l in out_seq.relus)
    if report.relu_after > report.relu_before:
        raise InternalInvariantError("reduction increased the ReLU count")
    report.wall_time_s = time.perf_counter() - t0
    return reduced, report
