"""Shared fixtures: the worked-example pair, a residual block, onnx helpers.

All golden numbers here were derived by hand from the network definitions
(x3 = -x1-x2-2, x4 = x1+x2+3, x5 = x1-x2+2, x6 = x1+x2+2, x7 = -x1+x2;
y1 = x8-x9+x10+x11-x12, y2 = x8+x9+x10+x11+x12 over the ReLU outputs) and
are frozen so regressions surface as value diffs, not re-derivations.
"""
from __future__ import annotations

import numpy as np
import pytest

from redkit import Box, NetworkBuilder, conv_to_matrix
from redkit import kernels

# original example network
FIG1_W1 = np.array(
    [
        [-1.0, -1.0],
        [1.0, 1.0],
        [1.0, -1.0],
        [1.0, 1.0],
        [-1.0, 1.0],
    ]
)
FIG1_B1 = np.array([-2.0, 3.0, 2.0, 2.0, 0.0])
FIG1_W2 = np.array([[1.0, -1.0, 1.0, 1.0, -1.0], [1.0, 1.0, 1.0, 1.0, 1.0]])
FIG1_B2 = np.zeros(2)

# pre-activation boxes over [-1,1]^2, exact (affine rows)
FIG1_PRE_LO = np.array([-4.0, 1.0, 0.0, 0.0, -2.0])
FIG1_PRE_HI = np.array([0.0, 5.0, 4.0, 4.0, 2.0])

# reduced network: m1 = x1-x2+2, m2 = 3x1+x2+7, kept x7 = -x1+x2
FIG4_W1 = np.array([[1.0, -1.0], [3.0, 1.0], [-1.0, 1.0]])
FIG4_B1 = np.array([2.0, 7.0, 0.0])
FIG4_W2 = np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 1.0]])
FIG4_B2 = np.array([-1.0, 0.0])


def build_fig1():
    b = NetworkBuilder()
    i = b.add_input(2)
    l1 = b.add_linear(i, FIG1_W1, FIG1_B1)
    r1 = b.add_relu(l1, 5)
    l2 = b.add_linear(r1, FIG1_W2, FIG1_B2)
    return b.build(l2)


def build_fig4():
    b = NetworkBuilder()
    i = b.add_input(2)
    l1 = b.add_linear(i, FIG4_W1, FIG4_B1)
    r1 = b.add_relu(l1, 3)
    l2 = b.add_linear(r1, FIG4_W2, FIG4_B2)
    return b.build(l2)


@pytest.fixture(scope="session")
def fig1_net():
    return build_fig1()


@pytest.fixture(scope="session")
def fig4_net():
    return build_fig4()


@pytest.fixture(scope="session")
def unit_box():
    return Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))


def build_residual_block(channels: int = 4, side: int = 4, seed: int = 0):
    """Input(3ch) -> conv1 -> ReLU -> conv2 -> Sum <- conv3 <- Input.

    conv2 and conv3 outputs share the 3 x side x side shape so the Sum is
    well formed. Returns (net, box, parts) where parts carries the unrolled
    conv matrices for structural assertions.
    """
    rng = np.random.default_rng(seed)
    in_shape = (3, side, side)
    k1 = rng.normal(scale=0.5, size=(channels, 3, 3, 3))
    c1 = rng.normal(scale=0.1, size=channels)
    k2 = rng.normal(scale=0.5, size=(3, channels, 3, 3))
    c2 = rng.normal(scale=0.1, size=3)
    k3 = rng.normal(scale=0.5, size=(3, 3, 3, 3))
    c3 = rng.normal(scale=0.1, size=3)
    M1, B1, mid_shape = conv_to_matrix(k1, c1, in_shape, pads=(1, 1, 1, 1))
    M2, B2, _ = conv_to_matrix(k2, c2, mid_shape, pads=(1, 1, 1, 1))
    M3, B3, _ = conv_to_matrix(k3, c3, in_shape, pads=(1, 1, 1, 1))

    d = 3 * side * side
    b = NetworkBuilder()
    i = b.add_input(d)
    l1 = b.add_linear(i, M1, B1)
    r1 = b.add_relu(l1, M1.shape[0])
    l2 = b.add_linear(r1, M2, B2)
    l3 = b.add_linear(i, M3, B3)
    s = b.add_sum([l2, l3], d)
    net = b.build(s)
    box = Box(-np.ones(d), np.ones(d))
    return net, box, {"M1": M1, "B1": B1, "M2": M2, "B2": B2, "M3": M3, "B3": B3}


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # absorb jit compilation outside any timed assertion
    kernels.warmup()


def box_samples(box: Box, n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(box.lower, box.upper, size=(n, box.lower.shape[0]))
