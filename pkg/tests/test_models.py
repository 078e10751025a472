"""Architecture construction and inference helpers: shape arithmetic,
parameter counts, resolution rules, seeding, and the softmax boundary."""

import numpy as np
import pytest

from swerve import (
    LayerSpec,
    Model,
    NVIDIA_MIN_RESOLUTION,
    Tensor,
    build_epoch,
    build_nvidia,
    epoch_specs,
    logits,
    nvidia_specs,
    predict_direction,
    predict_scalar,
    probabilities,
)

from conftest import tiny_classifier, tiny_regressor


def image(rng, resolution):
    return rng.random((resolution, resolution, 3), dtype=np.float32)


# -- spec stacks -------------------------------------------------------------------


def test_epoch_spec_stack_shape():
    specs = epoch_specs("classify")
    kinds = [s.kind for s in specs]
    assert kinds.count("conv") == 3
    assert kinds.count("maxpool") == 3
    assert kinds.count("dropout") == 4
    assert kinds[-1] == "softmax"
    assert [s.filters for s in specs if s.kind == "conv"] == [32, 64, 128]
    assert all(s.padding == "same" and s.size == 3 for s in specs if s.kind == "conv")
    assert [s.fraction for s in specs if s.kind == "dropout"] == [0.25, 0.25, 0.5, 0.5]


def test_epoch_regress_head_is_single_unit():
    specs = epoch_specs("regress")
    assert specs[-1].kind == "dense" and specs[-1].units == 1
    assert "softmax" not in [s.kind for s in specs]


def test_nvidia_spec_stack_shape():
    specs = nvidia_specs("classify")
    kinds = [s.kind for s in specs]
    assert kinds[0] == "batchnorm"
    convs = [s for s in specs if s.kind == "conv"]
    assert [(s.filters, s.size, s.stride) for s in convs] == [
        (24, 5, 2),
        (36, 5, 2),
        (48, 5, 2),
        (64, 3, 1),
        (64, 3, 1),
    ]
    assert all(s.padding == "valid" for s in convs)
    dense_units = [s.units for s in specs if s.kind == "dense"]
    assert dense_units == [582, 100, 50, 10, 3]


# -- construction rules ------------------------------------------------------------


def test_epoch_parameter_count_at_64():
    model = build_epoch("classify", 64)
    # conv 864+18432+73728, dense (8*8*128)*1024+1024, head 1024*3+3
    assert model.num_parameters == 864 + 18432 + 73728 + 8192 * 1024 + 1024 + 3075


def test_epoch_resolution_must_divide_by_8():
    for bad in (7, 12, 63):
        with pytest.raises(ValueError, match="divisible by 8"):
            build_epoch("classify", bad)
    smallest = build_epoch("classify", 8)
    assert _first_dense_width(smallest) == 1 * 1 * 128
    assert smallest.output_width == 3


def _first_dense_width(model) -> int:
    return next(t for t in model.params.values() if t.ndim == 2).shape[0]


def test_nvidia_minimum_resolution_is_tight():
    for bad in (32, 60, NVIDIA_MIN_RESOLUTION - 1):
        with pytest.raises(ValueError, match="at least"):
            build_nvidia("classify", bad)
    model = build_nvidia("classify", NVIDIA_MIN_RESOLUTION)
    assert _first_dense_width(model) == 1 * 1 * 64


def test_nvidia_flatten_width_at_128():
    model = build_nvidia("regress", 128)
    assert _first_dense_width(model) == 9 * 9 * 64
    assert model.output_width == 1
    first_dense = next(t for n, t in model.params.items() if t.ndim == 2 and t.shape[1] == 582)
    assert first_dense.shape == (5184, 582)


def test_same_seed_reproduces_parameters():
    a = build_epoch("classify", 16, rng_seed=5)
    b = build_epoch("classify", 16, rng_seed=5)
    c = build_epoch("classify", 16, rng_seed=6)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name].data, b.params[name].data)
    assert any(not np.array_equal(a.params[n].data, c.params[n].data) for n in a.params)


def test_unknown_layer_kind_rejected():
    with pytest.raises(ValueError, match="unknown layer kind"):
        Model("custom", "classify", 8, [LayerSpec("flatten"), LayerSpec("attention")])


def test_running_stats_are_not_trainable():
    model = build_nvidia("classify", 64)
    assert model.params["layer00.running_mean"].requires_grad is False
    assert model.params["layer00.running_var"].requires_grad is False
    assert model.params["layer00.gamma"].requires_grad is True


# -- forward -----------------------------------------------------------------------


def test_forward_returns_logits_by_default(rng):
    model = build_epoch("classify", 16)
    x = image(rng, 16)
    raw = model.forward(Tensor(x)).data
    soft = model.forward(Tensor(x), through_softmax=True).data
    assert raw.shape == (3,) and soft.shape == (3,)
    assert not np.allclose(raw, soft)
    assert soft.sum() == pytest.approx(1.0, abs=1e-5)
    np.testing.assert_array_equal(np.argsort(raw), np.argsort(soft))


def test_forward_batch_and_single_agree(rng):
    model = tiny_classifier(8)
    x = rng.random((2, 8, 8, 3), dtype=np.float32)
    batch = model.forward(Tensor(x)).data
    np.testing.assert_allclose(model.forward(Tensor(x[0])).data, batch[0], rtol=1e-5)


def test_forward_rejects_wrong_resolution(rng):
    model = tiny_classifier(8)
    with pytest.raises(ValueError, match="resolution"):
        model.forward(Tensor(rng.random((9, 9, 3), dtype=np.float32)))


def test_forward_rejects_wrong_dtype(rng):
    model = tiny_classifier(8)
    with pytest.raises(TypeError, match="dtype"):
        model.forward(Tensor(rng.random((8, 8, 3)), dtype=np.float64))


def test_train_mode_dropout_needs_rng(rng):
    model = build_epoch("classify", 16)
    x = Tensor(image(rng, 16))
    with pytest.raises(ValueError, match="rng"):
        model.forward(x, mode="train")
    out = model.forward(x, mode="train", rng=np.random.default_rng(0))
    assert out.shape == (3,)


def test_infer_mode_is_deterministic(rng):
    model = build_nvidia("classify", 64)
    x = Tensor(image(rng, 64))
    np.testing.assert_array_equal(model.forward(x).data, model.forward(x).data)


def test_set_trainable_skips_running_stats():
    model = build_nvidia("classify", 64)
    model.set_trainable(False)
    assert all(not t.requires_grad for t in model.params.values())
    model.set_trainable(True)
    assert model.params["layer00.running_mean"].requires_grad is False
    assert model.params["layer01.w"].requires_grad is True


# -- inference helpers -------------------------------------------------------------


def test_logits_does_not_build_a_graph(rng):
    model = tiny_classifier(8)
    out = logits(model, image(rng, 8))
    assert not out.requires_grad
    assert out.shape == (3,)


def test_probabilities_classification_only(rng):
    model = tiny_classifier(8)
    p = probabilities(model, image(rng, 8))
    assert p.shape == (3,)
    assert p.sum() == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        probabilities(tiny_regressor(8), image(rng, 8))


def test_predict_direction_matches_argmax(rng):
    model = tiny_classifier(8)
    x = image(rng, 8)
    label, probs = predict_direction(model, x)
    assert label == ("left", "straight", "right")[int(np.argmax(probs))]


def test_predict_scalar_returns_float(rng):
    model = tiny_regressor(8)
    value = predict_scalar(model, image(rng, 8))
    assert isinstance(value, float)


def test_image_range_validated(rng):
    model = tiny_classifier(8)
    bad = image(rng, 8) + 2.0
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        probabilities(model, bad)
