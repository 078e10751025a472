"""The two steering CNN architectures, with classification and regression heads.

"epoch" is the small three-conv stack (32/64/128 filters of 3x3, same padding,
a 2x2 pool after each conv, 1024-unit dense). "nvidia" is the deeper five-conv
stack behind an input batchnorm (24/36/48 filters of 5x5 at stride 2, then
two 64-filter 3x3 convs, dense 582/100/50/10, valid padding). Classification
heads end in a 3-way softmax; `logits` stops just before it. Regression heads
end in a single linear unit.

Models evaluate at any resolution the layer arithmetic admits; both builders
validate that up front and report their parameter count when constructed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import layers
from .autodiff import Tensor, no_grad
from .data import LABELS

log = logging.getLogger(__name__)

ARCHITECTURES = ("epoch", "nvidia", "custom")
HEADS = ("classify", "regress")
NVIDIA_MIN_RESOLUTION = 61  # smallest square input the five valid convs admit


@dataclass(frozen=True)
class LayerSpec:
    """One layer of an architecture; only the fields its kind uses are meaningful."""

    kind: str  # conv | maxpool | dropout | dense | batchnorm | relu | softmax | flatten
    filters: int = 0
    size: int = 0
    stride: int = 1
    padding: str = "valid"
    fraction: float = 0.0
    units: int = 0


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Model:
    """Ordered LayerSpecs plus their parameter tensors.

    params maps "layerNN.field" names to Tensors in spec order; batchnorm
    running statistics live there too, flagged requires_grad=False. Parameters
    are read-only during evaluation, so concurrent forward passes over shared
    weights are safe; training updates and weight loading need exclusive
    access (in-process concurrent attackers should each deep-copy the model).
    """

    def __init__(self, arch: str, head: str, resolution, specs, rng_seed=0, dtype=np.float32):
        if arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch!r}, expected one of {ARCHITECTURES}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}, expected one of {HEADS}")
        h, w = (resolution, resolution) if isinstance(resolution, (int, np.integer)) else resolution
        self.arch = arch
        self.head = head
        self.resolution = (int(h), int(w))
        self.specs: tuple[LayerSpec, ...] = tuple(specs)
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng(rng_seed), np.dtype(dtype))
        log.info(
            "built %s (%s head) at %dx%d: %d trainable parameters",
            arch, head, self.resolution[0], self.resolution[1], self.num_parameters,
        )

    # -- construction ------------------------------------------------------------

    def _init_params(self, rng: np.random.Generator, dtype) -> None:
        h, w = self.resolution
        c = 3
        flat: int | None = None
        for i, spec in enumerate(self.specs):
            name = f"layer{i:02d}"
            if spec.kind == "conv":
                if flat is not None:
                    raise ValueError(f"{name}: conv after flatten")
                fan_in = spec.size * spec.size * c
                self.params[f"{name}.w"] = Tensor(
                    _he_uniform(rng, (spec.size, spec.size, c, spec.filters), fan_in, dtype),
                    requires_grad=True,
                )
                h = layers.conv_output_size(h, spec.size, spec.stride, spec.padding)
                w = layers.conv_output_size(w, spec.size, spec.stride, spec.padding)
                if h < 1 or w < 1:
                    raise ValueError(f"{name}: conv output collapsed to {h}x{w}")
                c = spec.filters
            elif spec.kind == "batchnorm":
                if flat is not None:
                    raise ValueError(f"{name}: batchnorm after flatten is unsupported")
                self.params[f"{name}.gamma"] = Tensor(np.ones(c, dtype=dtype), requires_grad=True)
                self.params[f"{name}.beta"] = Tensor(np.zeros(c, dtype=dtype), requires_grad=True)
                self.params[f"{name}.running_mean"] = Tensor(np.zeros(c, dtype=dtype))
                self.params[f"{name}.running_var"] = Tensor(np.ones(c, dtype=dtype))
            elif spec.kind == "maxpool":
                if h % 2 or w % 2:
                    raise ValueError(f"{name}: maxpool needs even spatial dims, got {h}x{w}")
                h, w = h // 2, w // 2
            elif spec.kind == "flatten":
                flat = h * w * c
            elif spec.kind == "dense":
                if flat is None:
                    raise ValueError(f"{name}: dense before flatten")
                self.params[f"{name}.w"] = Tensor(_he_uniform(rng, (flat, spec.units), flat, dtype), requires_grad=True)
                self.params[f"{name}.b"] = Tensor(np.zeros(spec.units, dtype=dtype), requires_grad=True)
                flat = spec.units
            elif spec.kind in ("relu", "dropout", "softmax"):
                pass
            else:
                raise ValueError(f"{name}: unknown layer kind {spec.kind!r}")
        self.output_width = flat

    @property
    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values() if t.requires_grad)

    @property
    def dtype(self):
        if not self.params:
            return np.dtype(np.float32)
        return next(iter(self.params.values())).dtype

    def trainable_params(self) -> list[Tensor]:
        return [t for t in self.params.values() if t.requires_grad]

    # -- evaluation ---------------------------------------------------------------

    def forward(self, x: Tensor, mode: str = "infer", rng=None, through_softmax: bool = False) -> Tensor:
        """Run the layer stack. Returns logits (classification) or the scalar
        prediction (regression); softmax applies only when through_softmax."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        expected = (*self.resolution, 3)
        if x.shape[-3:] != expected or x.ndim not in (3, 4):
            raise ValueError(f"forward: input shape {x.shape} does not match model resolution {expected}")
        if x.dtype != self.dtype:
            raise TypeError(f"forward: input dtype {x.dtype} does not match model dtype {self.dtype}")
        out = x
        for i, spec in enumerate(self.specs):
            name = f"layer{i:02d}"
            if spec.kind == "conv":
                out = layers.conv2d(out, self.params[f"{name}.w"], stride=spec.stride, padding=spec.padding)
            elif spec.kind == "batchnorm":
                out = layers.batch_norm(
                    out,
                    self.params[f"{name}.gamma"],
                    self.params[f"{name}.beta"],
                    self.params[f"{name}.running_mean"],
                    self.params[f"{name}.running_var"],
                    mode=mode,
                )
            elif spec.kind == "maxpool":
                out = layers.maxpool2x2(out)
            elif spec.kind == "flatten":
                if out.ndim == 4:
                    out = out.reshape(out.shape[0], out.shape[1] * out.shape[2] * out.shape[3])
                else:
                    out = out.reshape(out.size)
            elif spec.kind == "dense":
                out = layers.dense(out, self.params[f"{name}.w"], self.params[f"{name}.b"])
            elif spec.kind == "relu":
                out = out.relu()
            elif spec.kind == "dropout":
                out = layers.dropout(out, spec.fraction, mode=mode, rng=rng)
            elif spec.kind == "softmax":
                if through_softmax:
                    out = layers.softmax(out)
        return out

    def set_trainable(self, flag: bool) -> None:
        """Toggle requires_grad on the learned parameters (running stats stay off)."""
        for name, t in self.params.items():
            if not name.endswith(("running_mean", "running_var")):
                t.requires_grad = bool(flag)


# -- architecture definitions ---------------------------------------------------------


def _head_specs(head: str) -> list[LayerSpec]:
    if head == "classify":
        return [LayerSpec("dense", units=3), LayerSpec("softmax")]
    return [LayerSpec("dense", units=1)]


def epoch_specs(head: str) -> list[LayerSpec]:
    specs = []
    for filters, fraction in ((32, 0.25), (64, 0.25), (128, 0.5)):
        specs += [
            LayerSpec("conv", filters=filters, size=3, stride=1, padding="same"),
            LayerSpec("relu"),
            LayerSpec("maxpool"),
            LayerSpec("dropout", fraction=fraction),
        ]
    specs += [
        LayerSpec("flatten"),
        LayerSpec("dense", units=1024),
        LayerSpec("relu"),
        LayerSpec("dropout", fraction=0.5),
    ]
    return specs + _head_specs(head)


def nvidia_specs(head: str) -> list[LayerSpec]:
    specs = [LayerSpec("batchnorm")]
    for filters, size, stride in ((24, 5, 2), (36, 5, 2), (48, 5, 2), (64, 3, 1), (64, 3, 1)):
        specs += [
            LayerSpec("conv", filters=filters, size=size, stride=stride, padding="valid"),
            LayerSpec("relu"),
        ]
    specs.append(LayerSpec("flatten"))
    for units in (582, 100, 50, 10):
        specs += [LayerSpec("dense", units=units), LayerSpec("relu")]
    return specs + _head_specs(head)


def build_epoch(head: str, input_resolution, rng_seed=0, dtype=np.float32) -> Model:
    """Three same-padded 3x3 convs (32/64/128) each pooled 2x2, dense 1024, head.
    Resolution must be divisible by 8 so the three pools stay even."""
    h, w = (input_resolution, input_resolution) if isinstance(input_resolution, (int, np.integer)) else input_resolution
    if h % 8 or w % 8 or h < 8 or w < 8:
        raise ValueError(f"epoch architecture needs a resolution divisible by 8, got {h}x{w}")
    return Model("epoch", head, (h, w), epoch_specs(head), rng_seed=rng_seed, dtype=dtype)


def build_nvidia(head: str, input_resolution, rng_seed=0, dtype=np.float32) -> Model:
    """Batchnorm, three 5x5 stride-2 convs (24/36/48), two 3x3 convs (64/64),
    dense 582/100/50/10, head; all valid padding."""
    h, w = (input_resolution, input_resolution) if isinstance(input_resolution, (int, np.integer)) else input_resolution
    if h < NVIDIA_MIN_RESOLUTION or w < NVIDIA_MIN_RESOLUTION:
        raise ValueError(
            f"nvidia architecture needs at least {NVIDIA_MIN_RESOLUTION}x{NVIDIA_MIN_RESOLUTION} input, got {h}x{w}"
        )
    return Model("nvidia", head, (h, w), nvidia_specs(head), rng_seed=rng_seed, dtype=dtype)


# -- inference helpers -----------------------------------------------------------------


def _check_image(model: Model, image) -> Tensor:
    x = image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=model.dtype))
    if x.shape != (*model.resolution, 3):
        raise ValueError(f"image shape {x.shape} does not match model resolution {(*model.resolution, 3)}")
    if x.data.min() < 0.0 or x.data.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return x


def logits(model: Model, image) -> Tensor:
    """Pre-softmax class scores (classification) or the scalar prediction
    (regression), in infer mode with no graph recorded."""
    x = _check_image(model, image)
    with no_grad():
        return model.forward(x, mode="infer")


def probabilities(model: Model, image) -> np.ndarray:
    if model.head != "classify":
        raise ValueError("probabilities: model has no classification head")
    x = _check_image(model, image)
    with no_grad():
        return model.forward(x, mode="infer", through_softmax=True).data


def predict_direction(model: Model, image) -> tuple[str, np.ndarray]:
    """Argmax direction plus the full probability vector; ties break to the
    lowest class index (left < straight < right)."""
    if model.head != "classify":
        raise ValueError("predict_direction: model has no classification head")
    probs = probabilities(model, image)
    return LABELS[int(np.argmax(probs))], probs


def predict_scalar(model: Model, image) -> float:
    if model.head != "regress":
        raise ValueError("predict_scalar: model has no regression head")
    return float(logits(model, image).data.reshape(()))
