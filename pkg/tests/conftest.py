"""Shared fixtures: deterministic RNGs and small reusable models."""

import numpy as np
import pytest

from swerve import LayerSpec, Model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_classifier(resolution=8, rng_seed=0, dtype=np.float32) -> Model:
    """A deliberately small stack (conv, relu, pool, dense, softmax) that is
    cheap enough for grid searches and exhaustive gradient checks."""
    specs = [
        LayerSpec("conv", filters=4, size=3, stride=1, padding="same"),
        LayerSpec("relu"),
        LayerSpec("maxpool"),
        LayerSpec("flatten"),
        LayerSpec("dense", units=3),
        LayerSpec("softmax"),
    ]
    return Model("custom", "classify", resolution, specs, rng_seed=rng_seed, dtype=dtype)


def tiny_regressor(resolution=8, rng_seed=0, dtype=np.float32) -> Model:
    specs = [
        LayerSpec("conv", filters=4, size=3, stride=1, padding="same"),
        LayerSpec("relu"),
        LayerSpec("maxpool"),
        LayerSpec("flatten"),
        LayerSpec("dense", units=1),
    ]
    return Model("custom", "regress", resolution, specs, rng_seed=rng_seed, dtype=dtype)


def linear_classifier(resolution=4, rng_seed=0, dtype=np.float32) -> Model:
    """Flatten + dense + softmax: convex in its single weight matrix."""
    specs = [
        LayerSpec("flatten"),
        LayerSpec("dense", units=3),
        LayerSpec("softmax"),
    ]
    return Model("custom", "classify", resolution, specs, rng_seed=rng_seed, dtype=dtype)
