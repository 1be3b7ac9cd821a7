"""Bound propagation over sequential ReLU networks.

Two methods share one table format: interval (forward ranges, cheap and
loose) and a backward linear-relaxation pass (per-neuron slope/intercept
lines, tighter). Bounds are always sound: every concrete pre-activation lies
inside the reported range.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError
from .netir import Network, SequentialView, as_sequential

ALPHA_RULES = ("adaptive", "zero", "one")


@dataclass(frozen=True)
class Box:
    """Axis-aligned input region [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).copy()
        hi = np.asarray(self.upper, dtype=np.float64).copy()
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ContractError(f"box bounds must be equal-length vectors, got {lo.shape}, {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ContractError("box bounds must be finite")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ContractError(f"box dimension {bad}: lower {lo[bad]} exceeds upper {hi[bad]}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.uniform(size=(n, self.dim))
        return self.lower + u * self.widths

    def corners(self, cap: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """All 2^d corners when they fit in cap, else cap random corners."""
        d = self.dim
        if d <= 30 and 2**d <= cap:
            bits = ((np.arange(2**d)[:, None] >> np.arange(d)[None, :]) & 1).astype(np.float64)
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            bits = rng.integers(0, 2, size=(cap, d)).astype(np.float64)
        return self.lower + bits * self.widths


@dataclass
class _ReluRelaxation:
    """Per-neuron bounding lines over a pre-activation range [l, u].

    Upper line passes through (l, 0) and (u, u) when unstable; lower line has
    slope alpha in {0, 1} and intercept 0. Stable neurons use the exact
    identity/zero lines.
    """

    slope_lo: np.ndarray
    slope_up: np.ndarray
    icpt_up: np.ndarray


def _relax(lo: np.ndarray, hi: np.ndarray, alpha_rule: str) -> _ReluRelaxation:
    deact = hi <= 0.0  # includes the degenerate l == u == 0 case
    act = (~deact) & (lo >= 0.0)
    unstable = ~(deact | act)
    slope_up = np.zeros_like(lo)
    slope_up[act] = 1.0
    denom = np.where(unstable, hi - lo, 1.0)
    slope_up = np.where(unstable, hi / denom, slope_up)
    icpt_up = np.where(unstable, -lo * hi / denom, 0.0)
    if alpha_rule == "adaptive":
        alpha = (hi >= -lo).astype(np.float64)
    elif alpha_rule == "zero":
        alpha = np.zeros_like(lo)
    elif alpha_rule == "one":
        alpha = np.ones_like(lo)
    else:
        raise ContractError(f"alpha_rule must be one of {ALPHA_RULES}, got {alpha_rule!r}")
    slope_lo = np.where(unstable, alpha, np.where(act, 1.0, 0.0))
    return _ReluRelaxation(slope_lo, slope_up, icpt_up)


@dataclass
class BoundsTable:
    """Pre-activation ranges per linear layer, in input-to-output order.

    lower/upper are keyed by linear layer id; linear_ids preserves order. The
    last entry doubles as the output range.
    """

    method: str
    linear_ids: list[int]
    lower: dict[int, np.ndarray]
    upper: dict[int, np.ndarray]
    relaxations: list[_ReluRelaxation] = field(default_factory=list, repr=False)

    def output_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        last = self.linear_ids[-1]
        return self.lower[last], self.upper[last]

    def pre_activation(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        lid = self.linear_ids[index]
        return self.lower[lid], self.upper[lid]

    def post_activation(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.pre_activation(index)
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)

    def rows(self) -> list[tuple[int, int, float, float, str]]:
        """CSV-ready (layer_index, neuron_index, lower, upper, method) rows."""
        out = []
        for k, lid in enumerate(self.linear_ids):
            lo, hi = self.lower[lid], self.upper[lid]
            for j in range(lo.shape[0]):
                out.append((k, j, float(lo[j]), float(hi[j]), self.method))
        return out


def _check_box(seq: SequentialView, box: Box):
    if box.dim != seq.input.width:
        raise ContractError(
            f"box dimension {box.dim} does not match input width {seq.input.width}"
        )


def interval_forward(net: Network, box: Box) -> BoundsTable:
    """Forward interval propagation; exact for the first linear layer."""
    seq = as_sequential(net)
    _check_box(seq, box)
    lo, hi = box.lower, box.upper
    lower: dict[int, np.ndarray] = {}
    upper: dict[int, np.ndarray] = {}
    for k, lin in enumerate(seq.linears):
        lo, hi = kernels.interval_affine(lin.weight, lin.bias, lo, hi)
        lower[lin.id] = lo
        upper[lin.id] = hi
        if k < len(seq.relus):
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return BoundsTable("interval", [l.id for l in seq.linears], lower, upper)


def _backward_from(seq: SequentialView, k: int, A, const, relaxations, box: Box, upper_pass: bool):
    """Push a coefficient row set from just after linear k down to the input box."""
    for j in range(k - 1, -1, -1):
        r = relaxations[j]
        A, const = kernels.relu_backward(A, const, r.slope_lo, r.slope_up, r.icpt_up, upper_pass)
        prev = seq.linears[j]
        const = const + A @ prev.bias
        A = A @ prev.weight
    lo, hi = kernels.interval_affine(A, const, box.lower, box.upper)
    return hi if upper_pass else lo


def crown_backward(net: Network, box: Box, alpha_rule: str = "adaptive") -> BoundsTable:
    """Progressive backward substitution with per-neuron linear relaxations.

    Layer k's bounds reuse the relaxations of layers 1..k-1, which were
    computed from their own (already final) bounds. Each layer is also
    intersected with the running interval bounds: both are sound, and the
    backward pass alone can lose to plain intervals in correlated corners.
    First-layer bounds coincide bit-for-bit with interval_forward.
    """
    seq = as_sequential(net)
    _check_box(seq, box)
    lower: dict[int, np.ndarray] = {}
    upper: dict[int, np.ndarray] = {}
    relaxations: list[_ReluRelaxation] = []
    ivl_lo, ivl_hi = box.lower, box.upper
    for k, lin in enumerate(seq.linears):
        lo = _backward_from(seq, k, lin.weight, lin.bias, relaxations, box, upper_pass=False)
        hi = _backward_from(seq, k, lin.weight, lin.bias, relaxations, box, upper_pass=True)
        ilo, ihi = kernels.interval_affine(lin.weight, lin.bias, ivl_lo, ivl_hi)
        lo, hi = np.maximum(lo, ilo), np.minimum(hi, ihi)
        lower[lin.id] = lo
        upper[lin.id] = hi
        if k < len(seq.relus):
            relaxations.append(_relax(lo, hi, alpha_rule))
            ivl_lo, ivl_hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return BoundsTable("crown", [l.id for l in seq.linears], lower, upper, relaxations)


def compute_bounds(net: Network, box: Box, method: str, alpha_rule: str = "adaptive") -> BoundsTable:
    if method == "interval":
        return interval_forward(net, box)
    if method == "crown":
        return crown_backward(net, box, alpha_rule)
    raise ContractError(f"method must be 'interval' or 'crown', got {method!r}")


def margin_lower_bounds(
    net: Network,
    box: Box,
    C,
    d=None,
    method: str = "crown",
    alpha_rule: str = "adaptive",
    table: BoundsTable | None = None,
) -> np.ndarray:
    """Sound lower bounds of the margins C y + d over the box.

    The margin rows are composed into the final linear layer before bounding;
    bounding outputs separately and then combining would discard correlations
    and is strictly looser.
    """
    seq = as_sequential(net)
    if seq.ends_with_relu:
        raise ContractError("margins need an affine-ended network")
    _check_box(seq, box)
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    out_w = seq.linears[-1].width
    if C.shape[1] != out_w:
        raise ContractError(f"margin rows have {C.shape[1]} entries, output width is {out_w}")
    d = np.zeros(C.shape[0]) if d is None else np.asarray(d, dtype=np.float64).reshape(-1)
    last = seq.linears[-1]
    A = C @ last.weight
    const = C @ last.bias + d
    k = len(seq.linears) - 1
    if method == "interval":
        if k == 0:
            lo, _ = kernels.interval_affine(A, const, box.lower, box.upper)
            return lo
        if table is None or table.method != "interval":
            table = interval_forward(net, box)
        zlo, zhi = table.post_activation(k - 1)
        lo, _ = kernels.interval_affine(A, const, zlo, zhi)
        return lo
    if method == "crown":
        if k == 0:
            lo, _ = kernels.interval_affine(A, const, box.lower, box.upper)
            return lo
        if table is None or table.method != "crown" or len(table.relaxations) < k:
            table = crown_backward(net, box, alpha_rule)
        return _backward_from(seq, k, A, const, table.relaxations, box, upper_pass=False)
    raise ContractError(f"method must be 'interval' or 'crown', got {method!r}")


def margin_lower_bound(
    net: Network,
    box: Box,
    c,
    d: float = 0.0,
    method: str = "crown",
    alpha_rule: str = "adaptive",
    table: BoundsTable | None = None,
) -> float:
    """Single-margin convenience wrapper around margin_lower_bounds."""
    v = margin_lower_bounds(net, box, np.atleast_2d(c), [d], method, alpha_rule, table)
    return float(v[0])
