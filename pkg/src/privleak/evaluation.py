"""Evaluation: accuracy, robustness, full reports and the privacy/utility
sweep over the mixing weight.

Robustness is the relative change of a leakage accuracy against the leakage
measured on the original (baseline) network, in percent: negative is good.
Reports quote percentages to 2 decimals; everything internal stays full
precision.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from privleak import losses, protocol
from privleak.data import LabeledDataset
from privleak.errors import ContractError, FormatError
from privleak.losses import LossKind
from privleak.models import predict_consensual, predict_private, tap_features
from privleak.protocol import RunArtifacts, TrainConfig
from privleak.rng import derive_seed

# Published operating points of a full-scale face-attribute deployment of
# this training scheme (mixing weight -> utility %, known-adversary %,
# unknown-adversary %). Documentation data, not a test target.
REFERENCE_SWEEP = {
    0.125: (90.78, 19.20, 61.47),
    0.250: (90.45, 20.47, 61.83),
    0.375: (90.84, 19.98, 62.03),
    0.500: (89.99, 20.18, 61.29),
    0.625: (89.83, 19.95, 58.92),
    0.750: (88.85, 20.44, 59.81),
    0.875: (87.19, 20.05, 59.29),
}


def accuracy(predictions, truth) -> float:
    """Fraction of positions where predictions and truth agree."""
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.shape != t.shape or p.ndim != 1:
        raise ContractError("predictions and truth must be equal-length vectors")
    if p.size == 0:
        raise ContractError("accuracy of an empty set is undefined")
    return float(np.mean(p == t))


def robustness(acc_private: float, acc_original: float) -> float:
    """Relative leakage change in percent: 100 * (private - original) / original."""
    if acc_original <= 0:
        raise ContractError("reference accuracy must be positive")
    return 100.0 * (acc_private - acc_original) / acc_original


_REPORT_REQUIRED = ("utility", "privacy_unknown", "chance_level", "lambda",
                    "tap", "loss_kind", "seed", "attack_seed")
_REPORT_OPTIONAL = ("privacy_known", "robustness_known_pct", "robustness_unknown_pct")


@dataclass(frozen=True)
class EvalReport:
    """One run's scorecard. Percentages live on a 0..100 scale; known-
    adversary and robustness fields are None when not applicable."""

    utility: float
    privacy_known: float | None
    privacy_unknown: float
    robustness_known_pct: float | None
    robustness_unknown_pct: float | None
    chance_level: float
    lam: float
    tap: int
    loss_kind: str
    seed: int
    attack_seed: int

    def __post_init__(self):
        for name in ("utility", "privacy_known", "privacy_unknown", "chance_level"):
            val = getattr(self, name)
            if val is not None and not (0.0 <= val <= 100.0):
                raise ContractError(f"{name} must lie in [0, 100], got {val}")

    def to_json(self) -> str:
        payload = {
            "utility": round(self.utility, 2),
            "privacy_unknown": round(self.privacy_unknown, 2),
            "chance_level": round(self.chance_level, 2),
            "lambda": self.lam,
            "tap": self.tap,
            "loss_kind": self.loss_kind,
            "seed": self.seed,
            "attack_seed": self.attack_seed,
        }
        if self.privacy_known is not None:
            payload["privacy_known"] = round(self.privacy_known, 2)
        if self.robustness_known_pct is not None:
            payload["robustness_known_pct"] = round(self.robustness_known_pct, 2)
        if self.robustness_unknown_pct is not None:
            payload["robustness_unknown_pct"] = round(self.robustness_unknown_pct, 2)
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"report is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise FormatError("report must be a JSON object")
        unknown = set(payload) - set(_REPORT_REQUIRED) - set(_REPORT_OPTIONAL)
        if unknown:
            raise FormatError(f"report has unknown keys: {sorted(unknown)}")
        missing = set(_REPORT_REQUIRED) - set(payload)
        if missing:
            raise FormatError(f"report is missing keys: {sorted(missing)}")
        return EvalReport(
            utility=float(payload["utility"]),
            privacy_known=(None if "privacy_known" not in payload
                           else float(payload["privacy_known"])),
            privacy_unknown=float(payload["privacy_unknown"]),
            robustness_known_pct=(None if "robustness_known_pct" not in payload
                                  else float(payload["robustness_known_pct"])),
            robustness_unknown_pct=(None if "robustness_unknown_pct" not in payload
                                    else float(payload["robustness_unknown_pct"])),
            chance_level=float(payload["chance_level"]),
            lam=float(payload["lambda"]),
            tap=int(payload["tap"]),
            loss_kind=str(payload["loss_kind"]),
            seed=int(payload["seed"]),
            attack_seed=int(payload["attack_seed"]),
        )


def evaluate(run: RunArtifacts, train: LabeledDataset, test: LabeledDataset,
             attack_layers, attack_config: TrainConfig, attack_seed: int,
             baseline: EvalReport | None = None, retrain_known: bool = False) -> EvalReport:
    """Score a run: consensual utility, known-adversary accuracy (when the
    run co-trained one), a fresh unknown-adversary audit, and robustness
    against the baseline's leakage when a baseline report is supplied.

    By default the known-adversary number comes from the co-trained adversary
    itself; retrain_known swaps in a freshly trained adversary of the same
    architecture on a derived seed.
    """
    if test is None or len(test) == 0:
        raise ContractError("evaluation needs a non-empty test split")
    prov = run.provenance
    tap = int(prov["tap"])

    utility = 100.0 * accuracy(predict_consensual(run.classifier, test.xs), test.ys)

    privacy_known = None
    if run.adversary is not None:
        feats = tap_features(run.classifier, test.xs, tap)
        known = run.adversary
        if retrain_known:
            known = protocol.train_attack(run.classifier, tap, list(run.adversary.specs),
                                          train, test, attack_config,
                                          derive_seed(attack_seed, "retrain-known"))
        privacy_known = 100.0 * accuracy(predict_private(known, feats), test.ss)

    attacker = protocol.train_attack(run.classifier, tap, attack_layers,
                                     train, test, attack_config, attack_seed)
    feats = tap_features(run.classifier, test.xs, tap)
    privacy_unknown = 100.0 * accuracy(predict_private(attacker, feats), test.ss)

    robustness_known = None
    robustness_unknown = None
    if baseline is not None:
        reference = baseline.privacy_unknown
        if privacy_known is not None:
            robustness_known = robustness(privacy_known, reference)
        robustness_unknown = robustness(privacy_unknown, reference)

    return EvalReport(
        utility=utility,
        privacy_known=privacy_known,
        privacy_unknown=privacy_unknown,
        robustness_known_pct=robustness_known,
        robustness_unknown_pct=robustness_unknown,
        chance_level=100.0 / test.num_private,
        lam=float(prov["lambda"]),
        tap=tap,
        loss_kind=str(prov["loss_kind"]),
        seed=int(prov["seed"]),
        attack_seed=attack_seed,
    )


@dataclass(frozen=True)
class SweepRow:
    lam: float
    utility: float
    known_adv_acc: float | None
    unknown_adv_acc: float


@dataclass(frozen=True)
class SweepResult:
    """Rows of (lambda, utility %, known %, unknown %), sorted by lambda."""

    rows: tuple[SweepRow, ...]

    def __post_init__(self):
        lams = [r.lam for r in self.rows]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ContractError("sweep rows must be sorted by strictly increasing lambda")

    def to_csv(self) -> str:
        out = ["lambda,utility,known_adv_acc,unknown_adv_acc"]
        for r in self.rows:
            known = "" if r.known_adv_acc is None else f"{r.known_adv_acc:.2f}"
            out.append(f"{r.lam!r},{r.utility:.2f},{known},{r.unknown_adv_acc:.2f}")
        return "\n".join(out) + "\n"


def _sweep_point(args) -> SweepRow:
    (lam, classifier_arch, adversary_layers, train, test,
     base, attack_layers, attack_cfg, attack_seed) = args
    try:
        if lam == 0.0:
            cfg = TrainConfig(loss=LossKind(losses.CROSS_ENTROPY_ONLY), tap=base.tap,
                              epochs=base.epochs, batch_size=base.batch_size, lr=base.lr,
                              adversary_steps=base.adversary_steps, seed=base.seed)
            run = protocol.train_baseline(classifier_arch, train, test, cfg)
        else:
            cfg = TrainConfig(loss=LossKind(losses.CONFUSION, lam), tap=base.tap,
                              epochs=base.epochs, batch_size=base.batch_size, lr=base.lr,
                              adversary_steps=base.adversary_steps, seed=base.seed)
            run = protocol.train_private(classifier_arch, adversary_layers, train, test, cfg)
        report = evaluate(run, train, test, attack_layers, attack_cfg, attack_seed)
    except Exception as exc:
        try:
            wrapped = type(exc)(f"sweep point lambda={lam}: {exc}")
        except TypeError:
            raise
        raise wrapped from exc
    return SweepRow(lam, report.utility, report.privacy_known, report.privacy_unknown)


def lambda_sweep(lams, classifier_arch, adversary_layers, train: LabeledDataset,
                 test: LabeledDataset, config: TrainConfig, attack_layers,
                 attack_config: TrainConfig, attack_seed: int, jobs: int = 1) -> SweepResult:
    """Train and audit one run per mixing weight.

    lam = 0 runs the baseline instead of a confusion run, so its row has no
    known-adversary column. Every run reuses the same master seed, making
    rows differ only in the weight. jobs > 1 distributes runs over processes;
    results are identical to a sequential sweep.
    """
    lams = [float(l) for l in lams]
    if not lams:
        raise ContractError("sweep needs at least one lambda")
    if len(set(lams)) != len(lams):
        raise ContractError("sweep lambdas must be distinct")
    for lam in lams:
        if not (0.0 <= lam <= 1.0):
            raise ContractError(f"lambda {lam} outside [0, 1]")

    work = [(lam, classifier_arch, adversary_layers, train, test, config,
             attack_layers, attack_config, attack_seed) for lam in sorted(lams)]
    if jobs < 1:
        raise ContractError(f"jobs must be positive, got {jobs}")
    if jobs == 1 or len(work) == 1:
        rows = [_sweep_point(item) for item in work]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
            rows = list(pool.map(_sweep_point, work))
    return SweepResult(tuple(rows))
