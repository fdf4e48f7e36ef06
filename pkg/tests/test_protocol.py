"""Training protocol tests.

The central reduction: a confusion run with lam = 0 must reproduce the
baseline classifier bit for bit, because the zero-weighted privacy branch is
skipped in backward and the classifier substream is isolated from the
adversary substream.
"""

import hashlib
import json

import numpy as np
import pytest

from privleak.data import LabeledDataset, SyntheticSpec, generate_synthetic
from privleak.errors import ConfigError, ContractError, DivergenceError, FormatError
from privleak.losses import (ADVERSARIAL, CONFUSION, CROSS_ENTROPY_ONLY, LossKind)
from privleak.models import ClassifierModel, LayerSpec, load_model, predict_private, save_model
from privleak.protocol import (RunArtifacts, TrainConfig, load_run, save_run,
                               train_attack, train_baseline, train_private)

ARCH = (12, [LayerSpec(10), LayerSpec(8), LayerSpec(3, "none")], (1, 2))
ADV_LAYERS = [LayerSpec(6), LayerSpec(2, "none")]


def tiny_data(seed=42, noise=0.5, n_train=300, n_test=100, entanglement=0.8):
    spec = SyntheticSpec(d=12, num_consensual=3, num_private=2, n_train=n_train,
                         n_test=n_test, noise=noise, entanglement=entanglement,
                         seed=seed)
    return generate_synthetic(spec)


def params_digest(model) -> str:
    h = hashlib.sha256()
    for arr in model.parameters():
        h.update(arr.tobytes())
    return h.hexdigest()


def test_zero_weight_confusion_reduces_to_baseline_bitwise():
    train, test = tiny_data()
    base_cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=3,
                           batch_size=64, seed=5)
    conf_cfg = TrainConfig(LossKind(CONFUSION, 0.0), tap=1, epochs=3,
                           batch_size=64, seed=5)
    base = train_baseline(ARCH, train, test, base_cfg)
    conf = train_private(ARCH, ADV_LAYERS, train, test, conf_cfg)
    assert params_digest(base.classifier) == params_digest(conf.classifier)
    for rb, rc in zip(base.curves, conf.curves):
        assert rb["utility"] == rc["utility"]


def test_baseline_solves_separable_data_perfectly():
    train, test = tiny_data(noise=0.0, entanglement=0.0, n_train=240, n_test=120)
    cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=25,
                      batch_size=32, seed=0)
    run = train_baseline(ARCH, train, test, cfg)
    assert run.curves[-1]["utility"] == 1.0
    assert run.adversary is None
    assert run.curves[-1]["known_adv_acc"] is None


def test_training_is_seed_deterministic():
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CONFUSION, 0.5), tap=2, epochs=2, batch_size=64, seed=9)
    a = train_private(ARCH, ADV_LAYERS, train, test, cfg)
    b = train_private(ARCH, ADV_LAYERS, train, test, cfg)
    assert params_digest(a.classifier) == params_digest(b.classifier)
    assert params_digest(a.adversary) == params_digest(b.adversary)
    assert a.curves == b.curves
    other = train_private(ARCH, ADV_LAYERS, train, test,
                          TrainConfig(LossKind(CONFUSION, 0.5), tap=2, epochs=2,
                                      batch_size=64, seed=10))
    assert params_digest(other.classifier) != params_digest(a.classifier)


def test_private_run_records_known_adversary_curve():
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CONFUSION, 0.625), tap=2, epochs=2, batch_size=64, seed=1)
    run = train_private(ARCH, ADV_LAYERS, train, test, cfg)
    assert run.adversary is not None
    assert len(run.curves) == 2
    assert [row["epoch"] for row in run.curves] == [1, 2]
    for row in run.curves:
        assert 0.0 <= row["utility"] <= 1.0
        assert 0.0 <= row["known_adv_acc"] <= 1.0
        assert np.isfinite(row["train_loss"])


def test_adversarial_objective_runs():
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(ADVERSARIAL, 0.3), tap=1, epochs=2, batch_size=64, seed=2)
    run = train_private(ARCH, ADV_LAYERS, train, test, cfg)
    assert run.provenance["loss_kind"] == ADVERSARIAL
    assert run.provenance["lambda"] == 0.3


def test_adversary_steps_change_the_adversary():
    train, test = tiny_data()
    one = train_private(ARCH, ADV_LAYERS, train, test,
                        TrainConfig(LossKind(CONFUSION, 0.5), tap=1, epochs=1,
                                    batch_size=64, seed=3, adversary_steps=1))
    two = train_private(ARCH, ADV_LAYERS, train, test,
                        TrainConfig(LossKind(CONFUSION, 0.5), tap=1, epochs=1,
                                    batch_size=64, seed=3, adversary_steps=2))
    assert params_digest(one.adversary) != params_digest(two.adversary)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(LossKind(CONFUSION, 0.5), tap=1, epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(LossKind(CONFUSION, 0.5), tap=1, batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(LossKind(CONFUSION, 0.5), tap=1, lr=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(LossKind(CONFUSION, 0.5), tap=1, adversary_steps=0)
    with pytest.raises(ConfigError):
        TrainConfig(LossKind(CONFUSION, 0.5), tap=0)


def test_protocols_reject_mismatched_objectives_and_data():
    train, test = tiny_data()
    with pytest.raises(ContractError):
        train_baseline(ARCH, train, test,
                       TrainConfig(LossKind(CONFUSION, 0.5), tap=1, epochs=1))
    with pytest.raises(ContractError):
        train_private(ARCH, ADV_LAYERS, train, test,
                      TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=1))
    with pytest.raises(ConfigError):
        train_baseline((11, ARCH[1], ARCH[2]), train, test,
                       TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=1))
    empty = LabeledDataset(np.zeros((0, 12)), np.zeros(0, dtype=np.int64),
                           np.zeros(0, dtype=np.int64), 3, 2)
    with pytest.raises(ContractError):
        train_baseline(ARCH, empty, test,
                       TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=1))


def test_attack_leaves_the_classifier_untouched():
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=2, batch_size=64, seed=4)
    run = train_baseline(ARCH, train, test, cfg)
    before = params_digest(run.classifier)
    attack_cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=3,
                             batch_size=64, seed=0)
    adv = train_attack(run.classifier, 1, ADV_LAYERS, train, test, attack_cfg,
                       attack_seed=17)
    assert params_digest(run.classifier) == before
    assert adv.num_private_classes == 2
    assert adv.tap_index == 1


def test_attack_is_seed_deterministic_and_seed_sensitive():
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=1, batch_size=64, seed=4)
    run = train_baseline(ARCH, train, test, cfg)
    a = train_attack(run.classifier, 1, ADV_LAYERS, train, test, cfg, attack_seed=1)
    b = train_attack(run.classifier, 1, ADV_LAYERS, train, test, cfg, attack_seed=1)
    c = train_attack(run.classifier, 1, ADV_LAYERS, train, test, cfg, attack_seed=2)
    assert params_digest(a) == params_digest(b)
    assert params_digest(a) != params_digest(c)


def test_attack_on_constant_features_learns_the_majority_class():
    # zero first-layer weights make every tapped feature identical, so the
    # best any adversary can do is predict the majority private label
    rng = np.random.default_rng(0)
    n = 400
    xs = rng.standard_normal((n, 6))
    ys = rng.integers(0, 2, size=n)
    ss = (rng.random(n) < 0.3).astype(np.int64)  # class 0 is the 70% majority
    train = LabeledDataset(xs[:300], ys[:300], ss[:300], 2, 2)
    test = LabeledDataset(xs[300:], ys[300:], ss[300:], 2, 2)

    specs = (LayerSpec(4), LayerSpec(2, "none"))
    weights = [np.zeros((6, 4)), np.zeros((4, 2))]
    biases = [np.array([1.0, 2.0, 0.5, 0.0]), np.zeros(2)]
    frozen = ClassifierModel(6, specs, (1,), weights, biases)

    cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=40,
                      batch_size=50, lr=0.05)
    adv = train_attack(frozen, 1, [LayerSpec(3), LayerSpec(2, "none")],
                       train, test, cfg, attack_seed=3)
    from privleak.models import tap_features
    preds = predict_private(adv, tap_features(frozen, test.xs, 1))
    assert (preds == preds[0]).all()  # constant input, constant prediction
    majority = np.bincount(train.ss).argmax()
    expect = float(np.mean(test.ss == majority))
    got = float(np.mean(preds == test.ss))
    assert got == expect


def test_divergence_reports_the_epoch():
    train, test = tiny_data(n_train=120, n_test=40)
    cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=4,
                      batch_size=64, lr=1e200, seed=0)
    with pytest.raises(DivergenceError) as info:
        train_baseline(ARCH, train, test, cfg)
    assert info.value.epoch is not None
    assert f"epoch {info.value.epoch}" in str(info.value)


def test_provenance_identifies_the_run():
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CONFUSION, 0.625), tap=2, epochs=1, batch_size=64, seed=6)
    run = train_private(ARCH, ADV_LAYERS, train, test, cfg)
    prov = run.provenance
    assert prov["dataset_fingerprint"] == train.fingerprint()
    assert prov["tap"] == 2
    assert prov["seed"] == 6
    payload = {k: v for k, v in prov.items() if k != "config_hash"}
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    assert prov["config_hash"] == digest


def test_save_load_run_round_trip(tmp_path):
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CONFUSION, 0.5), tap=1, epochs=2, batch_size=64, seed=7)
    run = train_private(ARCH, ADV_LAYERS, train, test, cfg)
    save_run(run, tmp_path / "run")
    back = load_run(tmp_path / "run")
    assert params_digest(back.classifier) == params_digest(run.classifier)
    assert params_digest(back.adversary) == params_digest(run.adversary)
    assert back.curves == run.curves
    assert back.provenance == run.provenance


def test_save_run_is_byte_stable(tmp_path):
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CROSS_ENTROPY_ONLY), tap=1, epochs=2, batch_size=64, seed=8)
    run = train_baseline(ARCH, train, test, cfg)
    save_run(run, tmp_path / "a")
    save_run(run, tmp_path / "b")
    for name in ("classifier.model", "curves.csv", "provenance.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert not (tmp_path / "a" / "adversary.model").exists()


def test_load_run_rejects_corrupted_directories(tmp_path):
    train, test = tiny_data()
    cfg = TrainConfig(LossKind(CONFUSION, 0.5), tap=1, epochs=1, batch_size=64, seed=7)
    run = train_private(ARCH, ADV_LAYERS, train, test, cfg)
    save_run(run, tmp_path / "run")

    curves = tmp_path / "run" / "curves.csv"
    original = curves.read_text()
    curves.write_text("epoch,bogus\n1,2\n")
    with pytest.raises(FormatError):
        load_run(tmp_path / "run")
    curves.write_text(original)

    # an adversary file in the classifier slot must be rejected
    save_model(run.adversary, tmp_path / "run" / "classifier.model")
    with pytest.raises(FormatError):
        load_run(tmp_path / "run")
