import numpy as np
import pytest

from redkit import (
    Box,
    LayerPartition,
    NetworkBuilder,
    as_sequential,
    classify,
    collapse_adjacent_linear,
    compute_bounds,
    forward,
    from_sequential,
    grid_equivalence,
    interval_forward,
    reduce_layer,
    reduce_network,
    sample_equivalence,
)
from conftest import (
    FIG4_B1,
    FIG4_B2,
    FIG4_W1,
    FIG4_W2,
    box_samples,
    build_fig1,
)


def _relu_widths(net):
    return [l.width for l in as_sequential(net).relus]


# classification


def test_classify_fig1(fig1_net, unit_box):
    (part,) = classify(interval_forward(fig1_net, unit_box))
    assert part.deactivated.tolist() == [0]
    assert part.activated.tolist() == [1, 2, 3]
    assert part.unstable.tolist() == [4]
    assert part.width == 5


def test_classify_partition_disjoint_and_complete(fig1_net, unit_box):
    (part,) = classify(interval_forward(fig1_net, unit_box))
    all_idx = np.concatenate([part.deactivated, part.activated, part.unstable])
    assert sorted(all_idx.tolist()) == list(range(5))


def test_classify_boundary_goes_stable():
    # u == 0 counts as deactivated; l == 0 as activated (tol 0)
    b = NetworkBuilder()
    i = b.add_input(1)
    l1 = b.add_linear(i, np.array([[1.0], [1.0]]), np.array([-1.0, 1.0]))
    r = b.add_relu(l1, 2)
    l2 = b.add_linear(r, np.eye(2), np.zeros(2))
    net = b.build(l2)
    box = Box(np.array([-1.0]), np.array([0.0]))
    # pre-acts: x-1 in [-2,-1] deactivated; x+1 in [0,1] activated
    (part,) = classify(interval_forward(net, box))
    assert part.deactivated.tolist() == [0]
    assert part.activated.tolist() == [1]


def test_classify_tol_never_loosens_soundness(fig1_net, unit_box):
    (strict,) = classify(interval_forward(fig1_net, unit_box), tol=0.0)
    assert strict.unstable.tolist() == [4]


# reduce_layer


def _fig1_layers(net):
    seq = as_sequential(net)
    return seq.linears[0], seq.relus[0], seq.linears[1]


def test_reduce_layer_fig1_merge_values(fig1_net, unit_box):
    x, y, z = _fig1_layers(fig1_net)
    (part,) = classify(interval_forward(fig1_net, unit_box))
    pre_lb = interval_forward(fig1_net, unit_box).pre_activation(0)[0]
    x2, y2, z2, plan = reduce_layer(
        x, y, z, part, (unit_box.lower, unit_box.upper), pre_lb
    )
    assert plan.merged
    np.testing.assert_array_equal(plan.merge_weight, np.array([[1.0, -1.0], [3.0, 1.0]]))
    np.testing.assert_array_equal(plan.shift, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(x2.weight, FIG4_W1)
    np.testing.assert_array_equal(x2.bias, FIG4_B1)
    np.testing.assert_array_equal(z2.weight, FIG4_W2)
    np.testing.assert_array_equal(z2.bias, FIG4_B2)
    assert y2.width == 3
    assert plan.width_before == 5 and plan.width_after == 3


def test_reduce_layer_empty_partition_is_identity(fig1_net, unit_box):
    x, y, z = _fig1_layers(fig1_net)
    part = LayerPartition(
        np.empty(0, np.int64), np.empty(0, np.int64), np.arange(5), 5
    )
    pre_lb = interval_forward(fig1_net, unit_box).pre_activation(0)[0]
    x2, y2, z2, plan = reduce_layer(
        x, y, z, part, (unit_box.lower, unit_box.upper), pre_lb
    )
    assert not plan.merged
    np.testing.assert_array_equal(x2.weight, x.weight)
    np.testing.assert_array_equal(x2.bias, x.bias)
    np.testing.assert_array_equal(z2.weight, z.weight)
    np.testing.assert_array_equal(z2.bias, z.bias)


def test_reduce_layer_planted_segment_equivalence():
    # random 6-wide middle layer with a planted partition; compare the
    # v -> z segment before/after on samples
    rng = np.random.default_rng(3)
    q, m, n = 4, 6, 3
    X = rng.normal(size=(m, q))
    bx = rng.normal(size=m)
    Z = rng.normal(size=(n, m))
    bz = rng.normal(size=n)
    v_lo, v_hi = np.zeros(q), np.ones(q)
    # plant: rows 0,1 deactivated, rows 2,3,4,5 activated -> merge (|A|=4 > n)
    bx[0] = -(np.maximum(X[0], 0) @ v_hi) - 0.5
    bx[1] = -(np.maximum(X[1], 0) @ v_hi) - 0.5
    for j in (2, 3, 4, 5):
        bx[j] = -(np.minimum(X[j], 0) @ v_hi) + 0.5
    # v_lo is all zeros, so only v_hi contributes to the interval ends
    lo = np.minimum(X, 0) @ v_hi + bx
    hi = np.maximum(X, 0) @ v_hi + bx
    part = LayerPartition(np.array([0, 1]), np.array([2, 3, 4, 5]), np.empty(0, np.int64), m)

    from redkit.netir import Layer
    from redkit.netir import KIND_LINEAR, KIND_RELU

    x = Layer(1, KIND_LINEAR, m, X, bx)
    y = Layer(2, KIND_RELU, m)
    z = Layer(3, KIND_LINEAR, n, Z, bz)
    x2, y2, z2, plan = reduce_layer(x, y, z, part, (v_lo, v_hi), lo)
    assert plan.merged and x2.width == n
    for v in rng.uniform(v_lo, v_hi, size=(1000, q)):
        before = Z @ np.maximum(X @ v + bx, 0.0) + bz
        after = z2.weight @ np.maximum(x2.weight @ v + x2.bias, 0.0) + z2.bias
        np.testing.assert_allclose(after, before, atol=1e-9)


def test_reduce_layer_merged_preactivations_nonnegative():
    rng = np.random.default_rng(8)
    net = build_fig1()
    box = Box(-np.ones(2), np.ones(2))
    reduced, _ = reduce_network(net, box, method="interval")
    seq = as_sequential(reduced)
    for v in rng.uniform(box.lower, box.upper, size=(1000, 2)):
        pre = seq.linears[0].weight @ v + seq.linears[0].bias
        assert np.all(pre[:2] >= -1e-12)  # the two merged rows


# reduce_network


def test_reduce_network_fig1_golden(fig1_net, unit_box):
    reduced, report = reduce_network(fig1_net, unit_box, method="interval")
    assert report.relu_before == 5 and report.relu_after == 3
    seq = as_sequential(reduced)
    np.testing.assert_array_equal(seq.linears[0].weight, FIG4_W1)
    np.testing.assert_array_equal(seq.linears[0].bias, FIG4_B1)
    np.testing.assert_array_equal(seq.linears[1].weight, FIG4_W2)
    np.testing.assert_array_equal(seq.linears[1].bias, FIG4_B2)


def test_reduce_network_fig1_grid_equivalence(fig1_net, unit_box):
    reduced, _ = reduce_network(fig1_net, unit_box, method="interval")
    rep = grid_equivalence(fig1_net, reduced, unit_box, points_per_dim=21)
    assert rep.samples == 441
    assert rep.max_abs_diff <= 1e-9


def test_reduce_network_crown_same_result_here(fig1_net, unit_box):
    reduced, report = reduce_network(fig1_net, unit_box, method="crown")
    assert report.relu_after == 3


def test_reduce_all_unstable_unchanged():
    # weights small, biases zero: every neuron straddles 0
    rng = np.random.default_rng(1)
    net = from_sequential(
        [
            (rng.normal(size=(6, 2)), np.zeros(6)),
            (rng.normal(size=(2, 6)), np.zeros(2)),
        ],
        2,
    )
    box = Box(-np.ones(2), np.ones(2))
    reduced, report = reduce_network(net, box, method="interval")
    assert report.relu_before == report.relu_after == 6
    assert report.ratio == 1.0
    rep = sample_equivalence(net, reduced, box, n=200, seed=0)
    assert rep.max_abs_diff == 0.0


def test_reduce_fully_deactivated_collapses():
    W1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    b1 = np.array([-10.0, -10.0])
    W2 = np.array([[1.0, 1.0]])
    b2 = np.array([0.5])
    net = from_sequential([(W1, b1), (W2, b2)], 2)
    box = Box(-np.ones(2), np.ones(2))
    reduced, report = reduce_network(net, box, method="interval")
    assert report.relu_after == 0
    seq = as_sequential(reduced)
    assert len(seq.relus) == 0
    for x in box_samples(box, 50, seed=2):
        np.testing.assert_allclose(forward(reduced, x), forward(net, x), atol=1e-12)
        np.testing.assert_allclose(forward(reduced, x), [0.5], atol=1e-12)


def test_reduce_keeps_small_activated_sets():
    # |A| <= n: merging cannot shrink, activated rows stay in place
    rng = np.random.default_rng(4)
    W1 = rng.normal(size=(3, 4))
    b1 = np.array([10.0, 10.0, 0.0])  # rows 0,1 activated, row 2 unstable
    W2 = rng.normal(size=(3, 3))
    b2 = rng.normal(size=3)
    net = from_sequential([(W1, b1), (W2, b2)], 4)
    box = Box(-np.ones(4), np.ones(4))
    reduced, report = reduce_network(net, box, method="interval")
    row = report.rows[0]
    assert row["n_activated"] == 2 and not row["merged"]
    assert report.relu_after == 3
    rep = sample_equivalence(net, reduced, box, n=500, seed=1)
    assert rep.max_abs_diff <= 1e-9


def test_reduce_idempotent(fig1_net, unit_box):
    once, r1 = reduce_network(fig1_net, unit_box, method="interval")
    twice, r2 = reduce_network(once, unit_box, method="interval")
    assert r2.relu_after <= r1.relu_after
    rep = sample_equivalence(once, twice, unit_box, n=500, seed=5)
    assert rep.max_abs_diff <= 1e-9


def test_reduce_monotone_size(fig1_net, unit_box):
    _, report = reduce_network(fig1_net, unit_box, method="interval")
    for row in report.rows:
        assert row["width_after"] <= row["width_before"]


def test_reduction_report_csv(fig1_net, unit_box):
    _, report = reduce_network(fig1_net, unit_box, method="interval")
    text = report.to_csv()
    assert "layer,width_before,n_deactivated,n_activated,n_unstable,width_after" in text
    assert "relu_before=5" in text and "relu_after=3" in text
    assert f"ratio={5/3:.4f}" in text


def test_reduction_ratio_before_over_after(fig1_net, unit_box):
    _, report = reduce_network(fig1_net, unit_box, method="interval")
    assert report.ratio == pytest.approx(5 / 3)


def test_reduce_with_supplied_partitions(fig1_net, unit_box):
    # forcing everything unstable disables all rewriting
    parts = [LayerPartition(np.empty(0, np.int64), np.empty(0, np.int64), np.arange(5), 5)]
    reduced, report = reduce_network(fig1_net, unit_box, partitions=parts)
    assert report.relu_after == 5


# collapse_adjacent_linear


def test_collapse_two_linears():
    b = NetworkBuilder()
    i = b.add_input(1)
    l1 = b.add_linear(i, np.array([[2.0]]), np.array([1.0]))
    l2 = b.add_linear(l1, np.array([[3.0]]), np.array([0.0]))
    net = collapse_adjacent_linear(b.build(l2))
    seq = as_sequential(net)
    assert len(seq.linears) == 1
    np.testing.assert_array_equal(seq.linears[0].weight, [[6.0]])
    np.testing.assert_array_equal(seq.linears[0].bias, [3.0])


def test_collapse_identity_chain():
    b = NetworkBuilder()
    i = b.add_input(3)
    l1 = b.add_linear(i, np.eye(3), np.zeros(3))
    l2 = b.add_linear(l1, np.eye(3), np.zeros(3))
    net = collapse_adjacent_linear(b.build(l2))
    seq = as_sequential(net)
    assert len(seq.linears) == 1
    np.testing.assert_array_equal(seq.linears[0].weight, np.eye(3))


def test_collapse_preserves_forward():
    rng = np.random.default_rng(9)
    net = from_sequential(
        [
            (rng.normal(size=(5, 3)), rng.normal(size=5)),
            (rng.normal(size=(4, 5)), rng.normal(size=4)),
        ],
        3,
    )
    # from_sequential inserts a relu between; build raw chain instead
    b = NetworkBuilder()
    i = b.add_input(3)
    W1, b1 = rng.normal(size=(5, 3)), rng.normal(size=5)
    W2, b2 = rng.normal(size=(4, 5)), rng.normal(size=4)
    l1 = b.add_linear(i, W1, b1)
    l2 = b.add_linear(l1, W2, b2)
    raw = b.build(l2)
    folded = collapse_adjacent_linear(raw)
    for x in np.random.default_rng(0).uniform(-1, 1, size=(100, 3)):
        np.testing.assert_allclose(forward(folded, x), forward(raw, x), atol=1e-12)
