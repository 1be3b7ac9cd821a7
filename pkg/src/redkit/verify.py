"""Margin verification: one-shot bounding and branch-and-bound on ReLU signs.

A property holds when every margin row stays nonnegative over the box. The
certificate threshold is nonnegative rather than strictly positive, so a
margin that attains exactly zero still counts as proved; counterexamples are
points with a strictly negative margin.

Branching never splits the input box. A split pins one unstable ReLU to a
sign and rewrites the network with the same layer surgery the reducer uses:
the deactivated branch drops the neuron, the activated branch shifts it into
the provably-active regime and compensates downstream. Each branch network
equals the original on its sign region, so bounds on the branch are sound
there.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bounds import Box, BoundsTable, compute_bounds, margin_lower_bounds
from .equivalence import sample_equivalence
from .errors import ContractError
from .netir import Network, as_sequential, forward_batch, from_sequential
from .reducer import LayerPartition, reduce_layer
from .specio import MODE_ANY, PropertySpec

VERIFIED = "verified"
UNKNOWN = "unknown"
TIMED_OUT = "timeout"


@dataclass(frozen=True)
class Verdict:
    """Outcome of one verification run.

    bound is the worst certified margin lower bound seen across processed
    leaves; for non-verified outcomes it includes the failing leaf and is
    only informative, not a certificate.
    """

    status: str
    bound: float
    splits: int
    wall_time_s: float
    note: str = ""

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED


def _affine_ended(net: Network) -> Network:
    seq = as_sequential(net)
    if not seq.ends_with_relu:
        return net
    # relu-ended chains get an identity readout so margins compose linearly
    wb = [(l.weight, l.bias) for l in seq.linears]
    wb.append((np.eye(seq.relus[-1].width), np.zeros(seq.relus[-1].width)))
    return from_sequential(wb, seq.input.width)


def verify_incomplete(
    net: Network,
    spec: PropertySpec,
    method: str = "crown",
    alpha_rule: str = "adaptive",
) -> Verdict:
    """Single bounding pass; verified iff every margin bound is >= 0."""
    t0 = time.monotonic()
    if spec.rows.shape[0] == 0:
        return Verdict(VERIFIED, np.inf, 0, time.monotonic() - t0, "no constraints")
    net = _affine_ended(net)
    lo = margin_lower_bounds(net, spec.box, spec.rows, spec.offsets, method, alpha_rule)
    bound = float(lo.min())
    status = VERIFIED if bound >= 0.0 else UNKNOWN
    return Verdict(status, bound, 0, time.monotonic() - t0)


def _exact_affine_margin(net: Network, table: BoundsTable, spec: PropertySpec) -> float | None:
    """Exact margin minimum when every neuron is stable; None otherwise.

    With all signs fixed the network is affine on the box, so composing the
    margin rows through sign masks and taking the interval minimum of the
    resulting affine map is exact, regardless of which (possibly loose)
    method produced the table.
    """
    seq = as_sequential(net)
    last = seq.linears[-1]
    A = spec.rows @ last.weight
    const = spec.rows @ last.bias + spec.offsets
    for k in range(len(seq.relus) - 1, -1, -1):
        lo, hi = table.pre_activation(k)
        if ((lo < 0.0) & (hi > 0.0)).any():
            return None
        passthrough = (lo >= 0.0) & (hi > 0.0)  # deactivated wins the l = u = 0 tie
        A = A * passthrough[None, :].astype(np.float64)
        prev = seq.linears[k]
        const = const + A @ prev.bias
        A = A @ prev.weight
    Ap, An = np.maximum(A, 0.0), np.minimum(A, 0.0)
    lows = Ap @ spec.box.lower + An @ spec.box.upper + const
    return float(lows.min())


def _widest_unstable(table: BoundsTable) -> tuple[int, int] | None:
    """Unstable neuron with the widest pre-activation interval.

    Ties break toward the lowest (layer, neuron): with strict improvement
    required, the earliest candidate of maximal width wins.
    """
    best = None
    best_w = 0.0
    for k in range(len(table.linear_ids) - 1):
        lo, hi = table.pre_activation(k)
        unstable = (lo < 0.0) & (hi > 0.0)
        if not unstable.any():
            continue
        widths = np.where(unstable, hi - lo, -np.inf)
        j = int(np.argmax(widths))
        if widths[j] > best_w:
            best_w = float(widths[j])
            best = (k, j)
    return best


def force_split(
    net: Network, k: int, j: int, branch: str, table: BoundsTable, box: Box
) -> Network:
    """Pin hidden layer k's neuron j to a sign and rewrite the chain."""
    seq = as_sequential(net)
    if not 0 <= k < len(seq.relus):
        raise ContractError(f"no hidden layer {k} to split")
    x, y, z = seq.linears[k], seq.relus[k], seq.linears[k + 1]
    others = np.setdiff1d(np.arange(x.width), [j])
    if branch == "deactivate":
        part = LayerPartition(np.array([j]), np.empty(0, np.int64), others, x.width)
    elif branch == "activate":
        part = LayerPartition(np.empty(0, np.int64), np.array([j]), others, x.width)
    else:
        raise ContractError(f"branch must be 'deactivate' or 'activate', got {branch!r}")
    v_range = (box.lower, box.upper) if k == 0 else table.post_activation(k - 1)
    pre_lb, _ = table.pre_activation(k)
    x2, y2, z2, _plan = reduce_layer(x, y, z, part, v_range, pre_lb)
    wb = [(l.weight, l.bias) for l in seq.linears]
    if x2 is None:
        wb[k : k + 2] = [(z2.weight, z2.bias)]
    else:
        wb[k] = (x2.weight, x2.bias)
        wb[k + 1] = (z2.weight, z2.bias)
    return from_sequential(wb, seq.input.width)


def bab_verify(
    net: Network,
    spec: PropertySpec,
    method: str = "crown",
    alpha_rule: str = "adaptive",
    timeout: float = 60.0,
    max_splits: int = 100_000,
) -> Verdict:
    """Depth-first sign branching until every leaf's margins certify.

    The deactivated child is explored first. splits counts branch events;
    each adds two leaves. A leaf with no unstable neuron left is affine on
    the box, so its margins are re-bounded exactly before giving up; a
    negative exact bound ends the search with unknown (the leaf's sign
    region may be empty, so no counterexample is claimed). The reported
    bound is the worst bound among closed leaves, plus the failing leaf's
    for non-verified outcomes.
    """
    t0 = time.monotonic()
    if spec.rows.shape[0] == 0:
        return Verdict(VERIFIED, np.inf, 0, time.monotonic() - t0, "no constraints")
    root = _affine_ended(net)
    stack: list[Network] = [root]
    splits = 0
    worst = np.inf

    def done(status: str, bound: float, note: str = "") -> Verdict:
        return Verdict(status, float(bound), splits, time.monotonic() - t0, note)

    while stack:
        if time.monotonic() - t0 > timeout:
            return done(TIMED_OUT, worst, f"{len(stack)} open branches")
        cur = stack.pop()
        table = compute_bounds(cur, spec.box, method, alpha_rule)
        lo = margin_lower_bounds(
            cur, spec.box, spec.rows, spec.offsets, method, alpha_rule, table=table
        )
        m = float(lo.min())
        if m >= 0.0:
            worst = min(worst, m)
            continue
        cand = _widest_unstable(table)
        if cand is None:
            exact = _exact_affine_margin(cur, table, spec)
            if exact is None:  # pragma: no cover - unstable set was just empty
                return done(UNKNOWN, min(worst, m), "no split candidate")
            if exact >= 0.0:
                worst = min(worst, exact)
                continue
            return done(UNKNOWN, min(worst, exact), "affine leaf bound is negative")
        if splits >= max_splits:
            return done(UNKNOWN, min(worst, m), "split budget exhausted")
        splits += 1
        k, j = cand
        stack.append(force_split(cur, k, j, "activate", table, spec.box))
        stack.append(force_split(cur, k, j, "deactivate", table, spec.box))
    return done(VERIFIED, worst)


def find_grid_counterexample(
    net: Network, spec: PropertySpec, budget: int = 4096, seed: int = 0
) -> np.ndarray | None:
    """Cheap falsification: box-filling grid plus random samples.

    Returns an input with a strictly negative margin (any-mode: some row;
    all-mode: every row), or None. Absence of a hit proves nothing.
    """
    if budget < 1:
        raise ContractError("budget must be positive")
    box = spec.box
    d = box.dim
    rng = np.random.default_rng(seed)
    chunks = [box.lower[None, :] + box.widths[None, :] * 0.5]
    g = max(int(budget ** (1.0 / d)), 1)
    while g > 1 and g**d > budget:
        g -= 1
    if g >= 2:
        axes = [np.linspace(box.lower[i], box.upper[i], g) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        chunks.append(np.stack([m.ravel() for m in mesh], axis=1))
    used = sum(len(c) for c in chunks)
    if used < budget:
        chunks.append(box.sample(budget - used, rng))
    xs = np.vstack(chunks)
    for start in range(0, len(xs), 8192):
        batch = xs[start : start + 8192]
        ys = forward_batch(net, batch)
        margins = ys @ spec.rows.T + spec.offsets[None, :]
        bad = (margins < 0).any(axis=1) if spec.mode == MODE_ANY else (margins < 0).all(axis=1)
        hits = np.nonzero(bad)[0]
        if len(hits):
            return batch[hits[0]].copy()
    return None


def bench_pair(
    original: Network,
    reduced: Network,
    spec: PropertySpec,
    method: str = "crown",
    alpha_rule: str = "adaptive",
    timeout: float = 60.0,
    max_splits: int = 100_000,
    repeats: int = 3,
    equiv_tol: float = 1e-3,
) -> dict:
    """Time identical verification runs on a network and its reduced twin.

    Refuses to compare networks that disagree on sampled points (the timing
    would be meaningless). Returns per-variant rows with median wall time and
    an agreement flag: the reduced variant must never lose a verdict the
    original achieved.
    """
    eq = sample_equivalence(original, reduced, spec.box, n=200, seed=7)
    if not eq.within(equiv_tol):
        raise ContractError(
            f"networks differ by {eq.max_abs_diff:.3g} on the box; refusing to benchmark"
        )
    rows = []
    verdicts = {}
    for label, net in (("original", original), ("reduced", reduced)):
        times = []
        verdict = None
        for _ in range(max(repeats, 1)):
            verdict = bab_verify(net, spec, method, alpha_rule, timeout, max_splits)
            times.append(verdict.wall_time_s)
        verdicts[label] = verdict
        rows.append(
            {
                "property": spec.name,
                "variant": label,
                "status": verdict.status,
                "median_time_s": float(np.median(times)),
                "splits": verdict.splits,
                "bound": verdict.bound,
            }
        )
    agreement = not (verdicts["original"].verified and not verdicts["reduced"].verified)
    return {"rows": rows, "agreement": agreement, "equiv_max_diff": eq.max_abs_diff}
