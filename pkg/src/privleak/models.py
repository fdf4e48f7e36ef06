"""Feedforward models: the consensual-task classifier with feature taps, and
the adversary head that reads a tapped feature.

A tap names the post-activation output of an intermediate layer. Running the
classifier always executes the same op sequence whether or not a tap is
requested, so publishing a tapped feature adds no inference cost.

Model files use the PRIVNET1 container: an 8-byte magic line, a length-
prefixed UTF-8 header describing the architecture, then the parameters as
flat little-endian float64 in registration order. Round-trips are
bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from privleak.autodiff import Tape, Tensor, affine, relu, softmax
from privleak.errors import ConfigError, ContractError, FormatError
from privleak.rng import Stream

RELU = "relu"
NONE = "none"
_ACTIVATIONS = (RELU, NONE)

_MAGIC = b"PRIVNET1\n"


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str = RELU

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError(f"layer width must be positive, got {self.width}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")


class _Feedforward:
    """Shared parameter plumbing for both model kinds."""

    def __init__(self, input_dim, specs, weights, biases):
        self.input_dim = int(input_dim)
        self.specs = tuple(specs)
        self.weights = weights
        self.biases = biases

    @property
    def num_layers(self) -> int:
        return len(self.specs)

    def parameters(self) -> list[np.ndarray]:
        """Weight and bias arrays in registration order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def parameter_count(self) -> int:
        count = 0
        fan_in = self.input_dim
        for spec in self.specs:
            count += fan_in * spec.width + spec.width
            fan_in = spec.width
        return count


class ClassifierModel(_Feedforward):
    def __init__(self, input_dim, specs, tap_indices, weights, biases):
        super().__init__(input_dim, specs, weights, biases)
        self.tap_indices = tuple(sorted(int(t) for t in tap_indices))

    @property
    def num_classes(self) -> int:
        return self.specs[-1].width

    def feature_width(self, tap: int) -> int:
        if tap not in self.tap_indices:
            raise ContractError(f"tap {tap} is not registered (have {self.tap_indices})")
        return self.specs[tap - 1].width


class AdversaryModel(_Feedforward):
    def __init__(self, input_dim, specs, tap_index, weights, biases):
        super().__init__(input_dim, specs, weights, biases)
        self.tap_index = int(tap_index)

    @property
    def num_private_classes(self) -> int:
        return self.specs[-1].width


def _init_layers(input_dim, specs, stream: Stream):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)), weights then bias per
    layer, all drawn from the given stream."""
    weights, biases = [], []
    fan_in = input_dim
    for spec in specs:
        bound = math.sqrt(6.0 / (fan_in + spec.width))
        weights.append(stream.uniform(-bound, bound, (fan_in, spec.width)))
        biases.append(stream.uniform(-bound, bound, (spec.width,)))
        fan_in = spec.width
    return weights, biases


def _validated_specs(layer_specs):
    specs = tuple(layer_specs)
    if not specs:
        raise ConfigError("a model needs at least one layer")
    return specs


def build_classifier(input_dim, layer_specs, num_classes, tap_indices, stream: Stream) -> ClassifierModel:
    """Fresh classifier with parameters drawn from the stream.

    The final layer must have activation none and width num_classes; taps
    must name intermediate layers only.
    """
    specs = _validated_specs(layer_specs)
    if input_dim < 1:
        raise ConfigError(f"input_dim must be positive, got {input_dim}")
    if specs[-1].activation != NONE:
        raise ConfigError("the final classifier layer must emit raw logits (activation none)")
    if specs[-1].width != num_classes:
        raise ConfigError(
            f"final layer width {specs[-1].width} must equal the class count {num_classes}")
    taps = tuple(sorted(int(t) for t in tap_indices))
    for t in taps:
        if not (1 <= t <= len(specs) - 1):
            raise ConfigError(
                f"tap {t} out of range; taps name intermediate layers 1..{len(specs) - 1}")
    if len(set(taps)) != len(taps):
        raise ConfigError("duplicate tap index")
    weights, biases = _init_layers(input_dim, specs, stream)
    return ClassifierModel(input_dim, specs, taps, weights, biases)


def build_adversary(input_dim, layer_specs, num_private_classes, tap_index, stream: Stream) -> AdversaryModel:
    """Fresh adversary reading a feature of width input_dim; its final layer
    emits num_private_classes logits, softmax is applied by adversary_forward."""
    specs = _validated_specs(layer_specs)
    if input_dim < 1:
        raise ConfigError(f"input_dim must be positive, got {input_dim}")
    if specs[-1].activation != NONE:
        raise ConfigError("the final adversary layer must emit raw logits (activation none)")
    if specs[-1].width != num_private_classes:
        raise ConfigError(
            f"final layer width {specs[-1].width} must equal the private class count {num_private_classes}")
    if num_private_classes < 2:
        raise ConfigError("need at least 2 private classes")
    weights, biases = _init_layers(input_dim, specs, stream)
    return AdversaryModel(input_dim, specs, tap_index, weights, biases)


def bind_parameters(model, tape: Tape, trainable: bool = False) -> list[Tensor]:
    """Put the model's parameters on a tape, registered when trainable."""
    make = tape.parameter if trainable else tape.constant
    return [make(arr) for arr in model.parameters()]


def _run_layers(specs, bound, x: Tensor, tap: int | None):
    h = x
    feature = None
    for i, spec in enumerate(specs):
        h = affine(h, bound[2 * i], bound[2 * i + 1])
        if spec.activation == RELU:
            h = relu(h)
        if tap is not None and i + 1 == tap:
            feature = h
    return feature, h


def forward_with_tap(model: ClassifierModel, batch, tap: int, tape: Tape | None = None,
                     bound: list[Tensor] | None = None):
    """Run the classifier, returning (tapped feature, logits) on one tape.

    The logits are bitwise identical to a plain forward pass regardless of
    which registered tap is requested.
    """
    if tap not in model.tap_indices:
        raise ContractError(f"tap {tap} is not registered (have {model.tap_indices})")
    if tape is None:
        tape = Tape()
    if bound is None:
        bound = bind_parameters(model, tape)
    x = batch if isinstance(batch, Tensor) else tape.constant(batch)
    feature, logits = _run_layers(model.specs, bound, x, tap)
    return feature, logits


def classifier_logits(model: ClassifierModel, batch, tape: Tape | None = None,
                      bound: list[Tensor] | None = None) -> Tensor:
    """Plain forward pass to logits."""
    if tape is None:
        tape = Tape()
    if bound is None:
        bound = bind_parameters(model, tape)
    x = batch if isinstance(batch, Tensor) else tape.constant(batch)
    _, logits = _run_layers(model.specs, bound, x, None)
    return logits


def adversary_logits(model: AdversaryModel, feature, tape: Tape | None = None,
                     bound: list[Tensor] | None = None) -> Tensor:
    if tape is None:
        tape = Tape()
    if bound is None:
        bound = bind_parameters(model, tape)
    x = feature if isinstance(feature, Tensor) else tape.constant(feature)
    _, logits = _run_layers(model.specs, bound, x, None)
    return logits


def adversary_forward(model: AdversaryModel, feature, tape: Tape | None = None,
                      bound: list[Tensor] | None = None) -> Tensor:
    """Adversary confidences: softmax over its logits."""
    if tape is None:
        tape = Tape()
    logits = adversary_logits(model, feature, tape, bound)
    return softmax(logits)


def tap_features(model: ClassifierModel, xs: np.ndarray, tap: int) -> np.ndarray:
    """Feature values at a tap, outside any training tape."""
    feature, _ = forward_with_tap(model, xs, tap)
    return feature.data


def predict_consensual(model: ClassifierModel, xs: np.ndarray) -> np.ndarray:
    """argmax of the classifier logits."""
    return np.argmax(classifier_logits(model, xs).data, axis=1)


def predict_private(model: AdversaryModel, features: np.ndarray) -> np.ndarray:
    """argmax of the adversary confidences."""
    return np.argmax(adversary_forward(model, features).data, axis=1)


def _header_lines(model) -> list[str]:
    if isinstance(model, ClassifierModel):
        lines = ["kind classifier", f"input_dim {model.input_dim}"]
        lines += [f"layer {s.width} {s.activation}" for s in model.specs]
        lines.append(f"num_classes {model.num_classes}")
        lines.append("taps " + " ".join(str(t) for t in model.tap_indices))
    elif isinstance(model, AdversaryModel):
        lines = ["kind adversary", f"input_dim {model.input_dim}"]
        lines += [f"layer {s.width} {s.activation}" for s in model.specs]
        lines.append(f"num_private_classes {model.num_private_classes}")
        lines.append(f"tap_index {model.tap_index}")
    else:
        raise ContractError(f"cannot serialize {type(model).__name__}")
    return lines


def save_model(model, path) -> None:
    """Write a PRIVNET1 file; loading it back is bit-identical."""
    header = ("\n".join(_header_lines(model)) + "\n").encode("utf-8")
    flat = np.concatenate([arr.reshape(-1) for arr in model.parameters()])
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(f"{len(header)}\n".encode("ascii"))
        fh.write(header)
        fh.write(flat.astype("<f8").tobytes())


def _parse_header(text: str):
    fields = {}
    specs = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "layer":
            if len(parts) != 3:
                raise FormatError(f"bad layer line {line!r}")
            try:
                specs.append(LayerSpec(int(parts[1]), parts[2]))
            except (ValueError, ConfigError) as exc:
                raise FormatError(f"bad layer line {line!r}: {exc}") from exc
        else:
            fields[parts[0]] = parts[1:]
    return fields, specs


def load_model(path):
    """Read a PRIVNET1 file back into a ClassifierModel or AdversaryModel."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_MAGIC):
        raise FormatError("not a PRIVNET1 model file")
    rest = blob[len(_MAGIC):]
    newline = rest.find(b"\n")
    if newline < 0:
        raise FormatError("truncated model file: missing header length")
    try:
        header_len = int(rest[:newline])
    except ValueError as exc:
        raise FormatError("corrupt header length") from exc
    body = rest[newline + 1:]
    if header_len < 0 or header_len > len(body):
        raise FormatError("corrupt header length")
    try:
        header = body[:header_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("header is not valid UTF-8") from exc
    fields, specs = _parse_header(header)
    if not specs or "kind" not in fields or "input_dim" not in fields:
        raise FormatError("header is missing required fields")
    kind = fields["kind"][0]
    try:
        input_dim = int(fields["input_dim"][0])
    except (ValueError, IndexError) as exc:
        raise FormatError("bad input_dim") from exc

    param_bytes = body[header_len:]
    count = 0
    fan_in = input_dim
    for spec in specs:
        count += fan_in * spec.width + spec.width
        fan_in = spec.width
    if len(param_bytes) != 8 * count:
        raise FormatError(
            f"parameter payload is {len(param_bytes)} bytes, expected {8 * count}; "
            "file is truncated or padded")
    flat = np.frombuffer(param_bytes, dtype="<f8").astype(np.float64)

    weights, biases = [], []
    offset = 0
    fan_in = input_dim
    for spec in specs:
        w = flat[offset:offset + fan_in * spec.width].reshape(fan_in, spec.width).copy()
        offset += fan_in * spec.width
        b = flat[offset:offset + spec.width].copy()
        offset += spec.width
        weights.append(w)
        biases.append(b)
        fan_in = spec.width

    if kind == "classifier":
        if "taps" not in fields or "num_classes" not in fields:
            raise FormatError("classifier header is missing taps or num_classes")
        taps = tuple(int(t) for t in fields["taps"])
        if int(fields["num_classes"][0]) != specs[-1].width:
            raise FormatError("num_classes disagrees with the final layer width")
        return ClassifierModel(input_dim, specs, taps, weights, biases)
    if kind == "adversary":
        if "tap_index" not in fields or "num_private_classes" not in fields:
            raise FormatError("adversary header is missing tap_index or num_private_classes")
        if int(fields["num_private_classes"][0]) != specs[-1].width:
            raise FormatError("num_private_classes disagrees with the final layer width")
        return AdversaryModel(input_dim, specs, int(fields["tap_index"][0]), weights, biases)
    raise FormatError(f"unknown model kind {kind!r}")
