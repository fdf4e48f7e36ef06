"""Training protocols.

train_baseline fits the classifier on the consensual task alone.
train_private co-trains an adversary that reads a tapped feature: each batch
first updates the adversary on detached features (cross-entropy on the
private label), then updates the classifier on (1 - lam) * task loss +
lam * privacy term, with gradients flowing through the frozen adversary into
every layer before the tap. train_attack fits a fresh adversary against a
frozen classifier, which is the leakage audit.

All randomness comes from named substreams of the master seed: "classifier"
covers classifier init and batch order, "adversary" covers adversary init,
and attacks root their own stream at the attack seed. Because the substreams
are isolated, a confusion run with lam = 0 consumes the classifier stream
exactly like the baseline and reproduces its parameter trajectory bit for
bit.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from privleak import losses
from privleak.autodiff import AdamState, Tape, adam_step, backward, softmax
from privleak.data import LabeledDataset, index_batches
from privleak.errors import ConfigError, ContractError, DivergenceError, FormatError, NumericError
from privleak.losses import LossKind
from privleak.models import (
    AdversaryModel,
    ClassifierModel,
    adversary_logits,
    bind_parameters,
    build_adversary,
    build_classifier,
    forward_with_tap,
    load_model,
    predict_consensual,
    predict_private,
    save_model,
    tap_features,
)
from privleak.rng import Stream


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on besides data and architecture."""

    loss: LossKind
    tap: int
    epochs: int = 200
    batch_size: int = 128
    lr: float = 0.001
    adversary_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.adversary_steps < 1:
            raise ConfigError(f"adversary_steps must be at least 1, got {self.adversary_steps}")
        if self.tap < 1:
            raise ConfigError(f"tap must be a positive layer index, got {self.tap}")


@dataclass
class RunArtifacts:
    """What a training run leaves behind: the models, per-epoch curves and a
    provenance record that uniquely identifies the run."""

    classifier: ClassifierModel
    adversary: AdversaryModel | None
    curves: list[dict]
    provenance: dict


def _config_digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _arch_summary(input_dim, specs, extra):
    return {
        "input_dim": int(input_dim),
        "layers": [[s.width, s.activation] for s in specs],
        **extra,
    }


def _provenance(config: TrainConfig, train: LabeledDataset, clf_summary, adv_summary):
    payload = {
        "loss_kind": config.loss.kind,
        "lambda": config.loss.lam,
        "tap": config.tap,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "lr": config.lr,
        "adversary_steps": config.adversary_steps,
        "seed": config.seed,
        "classifier": clf_summary,
        "adversary": adv_summary,
        "dataset_fingerprint": train.fingerprint(),
    }
    payload["config_hash"] = _config_digest(payload)
    return payload


def _check_data(train: LabeledDataset, test: LabeledDataset):
    if len(train) == 0:
        raise ContractError("training split is empty")
    if len(test) == 0:
        raise ContractError("test split is empty")
    if train.dim != test.dim:
        raise ContractError("train and test dimensionality disagree")


def _utility(classifier, test: LabeledDataset) -> float:
    return float(np.mean(predict_consensual(classifier, test.xs) == test.ys))


def _known_accuracy(classifier, adversary, tap, test: LabeledDataset) -> float:
    feats = tap_features(classifier, test.xs, tap)
    return float(np.mean(predict_private(adversary, feats) == test.ss))


def _scalar(loss_tensor, epoch: int) -> float:
    val = float(loss_tensor.data)
    if not np.isfinite(val):
        raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
    return val


def train_baseline(classifier_arch, train: LabeledDataset, test: LabeledDataset,
                   config: TrainConfig) -> RunArtifacts:
    """Fit the classifier on cross-entropy alone.

    classifier_arch is (input_dim, layer_specs, tap_indices); taps are built
    into the model so a later audit can read its features, but nothing reads
    them during baseline training.
    """
    if config.loss.kind != losses.CROSS_ENTROPY_ONLY:
        raise ContractError("train_baseline runs the cross_entropy_only objective")
    _check_data(train, test)
    input_dim, layer_specs, tap_indices = classifier_arch
    if train.dim != input_dim:
        raise ConfigError(f"dataset dimension {train.dim} does not match input_dim {input_dim}")

    root = Stream(config.seed)
    cstream = root.substream("classifier")
    classifier = build_classifier(input_dim, layer_specs, train.num_consensual,
                                  tap_indices, cstream)
    state = AdamState(classifier.parameters(), lr=config.lr)

    curves = []
    for epoch in range(1, config.epochs + 1):
        loss_total = 0.0
        for idx in index_batches(len(train), config.batch_size, cstream):
            xb, yb = train.xs[idx], train.ys[idx]
            tape = Tape()
            bound = bind_parameters(classifier, tape, trainable=True)
            try:
                logits = forward_with_tap(classifier, xb, config.tap, tape, bound)[1]
                loss = losses.cross_entropy(logits, yb)
                grads = backward(tape, loss)
            except NumericError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch) from exc
            loss_total += _scalar(loss, epoch) * len(idx)
            adam_step(classifier.parameters(), grads, state)
        curves.append({
            "epoch": epoch,
            "train_loss": loss_total / len(train),
            "utility": _utility(classifier, test),
            "known_adv_acc": None,
        })

    provenance = _provenance(
        config, train,
        _arch_summary(input_dim, classifier.specs, {"taps": list(classifier.tap_indices)}),
        None)
    return RunArtifacts(classifier, None, curves, provenance)


def train_private(classifier_arch, adversary_layers, train: LabeledDataset,
                  test: LabeledDataset, config: TrainConfig) -> RunArtifacts:
    """Co-train the classifier and an adversary reading the tapped feature.

    Per batch: (a) adversary_steps updates of the adversary on detached
    features, minimizing cross-entropy on the private label; (b) one update
    of the classifier on the combined loss, with the adversary frozen but
    differentiated through. Confusion runs push adversary confidences toward
    uniform; adversarial runs maximize the adversary's cross-entropy.
    """
    if config.loss.kind not in (losses.CONFUSION, losses.ADVERSARIAL):
        raise ContractError("train_private runs the confusion or adversarial objective")
    _check_data(train, test)
    input_dim, layer_specs, tap_indices = classifier_arch
    if train.dim != input_dim:
        raise ConfigError(f"dataset dimension {train.dim} does not match input_dim {input_dim}")

    root = Stream(config.seed)
    cstream = root.substream("classifier")
    astream = root.substream("adversary")
    classifier = build_classifier(input_dim, layer_specs, train.num_consensual,
                                  tap_indices, cstream)
    adversary = build_adversary(classifier.feature_width(config.tap), adversary_layers,
                                train.num_private, config.tap, astream)
    c_state = AdamState(classifier.parameters(), lr=config.lr)
    a_state = AdamState(adversary.parameters(), lr=config.lr)
    lam = config.loss.lam
    confusion = config.loss.kind == losses.CONFUSION

    curves = []
    for epoch in range(1, config.epochs + 1):
        loss_total = 0.0
        for idx in index_batches(len(train), config.batch_size, cstream):
            xb, yb, sb = train.xs[idx], train.ys[idx], train.ss[idx]

            # (a) adversary on detached features
            feats = tap_features(classifier, xb, config.tap)
            for _ in range(config.adversary_steps):
                tape = Tape()
                bound = bind_parameters(adversary, tape, trainable=True)
                try:
                    logits = adversary_logits(adversary, feats, tape, bound)
                    adv_loss = losses.cross_entropy(logits, sb)
                    grads = backward(tape, adv_loss)
                except NumericError as exc:
                    raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch) from exc
                _scalar(adv_loss, epoch)
                adam_step(adversary.parameters(), grads, a_state)

            # (b) classifier against the frozen adversary
            tape = Tape()
            bound = bind_parameters(classifier, tape, trainable=True)
            frozen = bind_parameters(adversary, tape, trainable=False)
            try:
                feature, logits = forward_with_tap(classifier, xb, config.tap, tape, bound)
                task = losses.cross_entropy(logits, yb)
                adv_out = adversary_logits(adversary, feature, tape, frozen)
                if confusion:
                    privacy = losses.confusion_loss(softmax(adv_out))
                else:
                    privacy = losses.adversarial_loss(adv_out, sb)
                total = losses.combined_loss(task, privacy, lam)
                grads = backward(tape, total)
            except NumericError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch) from exc
            loss_total += _scalar(total, epoch) * len(idx)
            adam_step(classifier.parameters(), grads, c_state)

        curves.append({
            "epoch": epoch,
            "train_loss": loss_total / len(train),
            "utility": _utility(classifier, test),
            "known_adv_acc": _known_accuracy(classifier, adversary, config.tap, test),
        })

    provenance = _provenance(
        config, train,
        _arch_summary(input_dim, classifier.specs, {"taps": list(classifier.tap_indices)}),
        _arch_summary(classifier.feature_width(config.tap), adversary.specs,
                      {"tap_index": config.tap}))
    return RunArtifacts(classifier, adversary, curves, provenance)


def train_attack(classifier: ClassifierModel, tap: int, adversary_layers,
                 train: LabeledDataset, test: LabeledDataset, config: TrainConfig,
                 attack_seed: int) -> AdversaryModel:
    """Leakage audit: train a fresh adversary on the frozen classifier's
    tapped features. The classifier is never touched; only config.epochs,
    batch_size and lr are read from the config."""
    _check_data(train, test)
    width = classifier.feature_width(tap)

    stream = Stream(attack_seed).substream("attack")
    adversary = build_adversary(width, adversary_layers, train.num_private, tap, stream)
    state = AdamState(adversary.parameters(), lr=config.lr)

    # the classifier is frozen, so features are fixed for the whole audit
    feats = tap_features(classifier, train.xs, tap)

    for epoch in range(1, config.epochs + 1):
        for idx in index_batches(len(train), config.batch_size, stream):
            tape = Tape()
            bound = bind_parameters(adversary, tape, trainable=True)
            try:
                logits = adversary_logits(adversary, feats[idx], tape, bound)
                loss = losses.cross_entropy(logits, train.ss[idx])
                grads = backward(tape, loss)
            except NumericError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch) from exc
            _scalar(loss, epoch)
            adam_step(adversary.parameters(), grads, state)
    return adversary


_CURVE_COLUMNS = ("epoch", "train_loss", "utility", "known_adv_acc")


def save_run(run: RunArtifacts, dirpath) -> None:
    """Persist a run directory: classifier.model, adversary.model when
    present, curves.csv and provenance.json. Byte-identical for identical
    runs."""
    os.makedirs(dirpath, exist_ok=True)
    save_model(run.classifier, os.path.join(dirpath, "classifier.model"))
    if run.adversary is not None:
        save_model(run.adversary, os.path.join(dirpath, "adversary.model"))
    with open(os.path.join(dirpath, "curves.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_CURVE_COLUMNS) + "\n")
        for row in run.curves:
            known = row["known_adv_acc"]
            fh.write(f"{row['epoch']},{row['train_loss']!r},{row['utility']!r},"
                     + ("" if known is None else repr(known)) + "\n")
    with open(os.path.join(dirpath, "provenance.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(run.provenance, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_run(dirpath) -> RunArtifacts:
    """Read a run directory back; inverse of save_run."""
    classifier = load_model(os.path.join(dirpath, "classifier.model"))
    if not isinstance(classifier, ClassifierModel):
        raise FormatError("classifier.model does not hold a classifier")
    adversary = None
    adv_path = os.path.join(dirpath, "adversary.model")
    if os.path.exists(adv_path):
        adversary = load_model(adv_path)
        if not isinstance(adversary, AdversaryModel):
            raise FormatError("adversary.model does not hold an adversary")
    curves = []
    with open(os.path.join(dirpath, "curves.csv"), "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != ",".join(_CURVE_COLUMNS):
        raise FormatError("curves.csv header is malformed")
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != 4:
            raise FormatError(f"curves.csv row has {len(cells)} cells")
        curves.append({
            "epoch": int(cells[0]),
            "train_loss": float(cells[1]),
            "utility": float(cells[2]),
            "known_adv_acc": None if cells[3] == "" else float(cells[3]),
        })
    with open(os.path.join(dirpath, "provenance.json"), "r", encoding="utf-8") as fh:
        provenance = json.load(fh)
    return RunArtifacts(classifier, adversary, curves, provenance)
