"""Pure numpy periodic stencil kernels (fallback for the compiled module)."""
import numpy as np


def laplacian2(u, h):
    return (np.roll(u, 1, 0) + np.roll(u, -1, 0) + np.roll(u, 1, 1) + np.roll(u, -1, 1) - 4.0 * u) / (h * h)


def laplacian3(u, h):
    s = np.roll(u, 1, 0) + np.roll(u, -1, 0)
    s += np.roll(u, 1, 1) + np.roll(u, -1, 1)
    s += np.roll(u, 1, 2) + np.roll(u, -1, 2)
    return (s - 6.0 * u) / (h * h)


def backward_diff(u, axis, h):
    return (u - np.roll(u, 1, axis)) / h


def forward_diff(u, axis, h):
    return (np.roll(u, -1, axis) - u) / h


def divergence2(v0, v1, h):
    return (np.roll(v0, -1, 0) - v0 + np.roll(v1, -1, 1) - v1) / h


def divergence3(v0, v1, v2, h):
    return (np.roll(v0, -1, 0) - v0 + np.roll(v1, -1, 1) - v1 + np.roll(v2, -1, 2) - v2) / h
