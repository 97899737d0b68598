"""Shared test oracles: finite differences, relative error, stub generators."""

import numpy as np
import pytest

from hivae import benchmark as B
from hivae.tabular import ColumnSpec, HeterogeneousTable, MissingMask, Schema


def finite_difference(value_fn, tensors, step=1e-4):
    """Central-difference gradient of value_fn() w.r.t. each tensor's entries.

    value_fn must rebuild its computation from the tensors' current values so
    the probe sees the perturbed parameters.
    """
    grads = []
    for t in tensors:
        flat = t.values.ravel()
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = value_fn()
            flat[i] = orig - step
            fm = value_fn()
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * step)
        grads.append(g.reshape(t.values.shape))
    return grads


def max_rel_err(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    num = np.abs(analytic - numeric)
    den = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((num / den).max())


class StubRng:
    """Deterministic stand-in for numpy Generator: fixed normal/uniform fills."""

    def __init__(self, normal=0.0, uniform=0.5):
        self._normal = normal
        self._uniform = uniform

    def standard_normal(self, shape):
        return np.full(shape, self._normal)

    def random(self, shape):
        return np.full(shape, self._uniform)


@pytest.fixture
def mixed_schema():
    return Schema(
        (
            ColumnSpec("r", "real"),
            ColumnSpec("p", "pos"),
            ColumnSpec("n", "count"),
            ColumnSpec("c", "cat", 3),
            ColumnSpec("o", "ordinal", 4),
        )
    )


@pytest.fixture
def mixed_table(mixed_schema):
    rng = np.random.default_rng(42)
    n = 12
    cells = np.column_stack(
        [
            rng.normal(1.0, 2.0, n),
            np.exp(rng.normal(0.0, 0.5, n)),
            rng.poisson(3.0, n).astype(float),
            rng.integers(0, 3, n).astype(float),
            rng.integers(0, 4, n).astype(float),
        ]
    )
    table = HeterogeneousTable(mixed_schema, cells)
    observed = rng.random((n, 5)) >= 0.25
    observed[0] = True  # keep one fully observed row around
    return table, MissingMask(observed)


@pytest.fixture
def small_synthetic():
    table = B.synthetic_table(40, seed=5)
    mask = B.generate_mcar_mask(table, 0.25, seed=6)
    return table, mask
