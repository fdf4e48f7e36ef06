"""Command line interface.

Subcommands: gen-data, train, attack, eval, sweep. Every option can also be
supplied through --config FILE holding flat `key = value` lines (keys are the
flag names with dashes replaced by underscores); explicit flags win. The
training master seed falls back to the PRIVLEAK_SEED environment variable
when neither flag nor config provides one.

Exit codes: 0 success, 1 I/O failure, 2 config or contract violation,
3 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from privleak import evaluation, losses, protocol
from privleak.data import LabeledDataset, SyntheticSpec, generate_synthetic, load_csv, save_csv
from privleak.errors import (
    ConfigError,
    ContractError,
    DimensionError,
    DivergenceError,
    FormatError,
    ParseError,
)
from privleak.evaluation import EvalReport, evaluate, lambda_sweep
from privleak.losses import LossKind
from privleak.models import NONE, RELU, LayerSpec, save_model, tap_features, predict_private
from privleak.protocol import TrainConfig, load_run, save_run, train_attack, train_baseline, train_private

_ENV_SEED = "PRIVLEAK_SEED"


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _str(text):
    return text


def _int_list(text):
    items = [t for t in str(text).split(",") if t.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return [int(t) for t in items]


def _float_list(text):
    items = [t for t in str(text).split(",") if t.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return [float(t) for t in items]


def _flag(text):
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


class Opt:
    def __init__(self, name, conv, default=None, required=False, help=""):
        self.name = name
        self.conv = conv
        self.default = default
        self.required = required
        self.help = help

    @property
    def flag(self):
        return "--" + self.name.replace("_", "-")


_DATASET_OPTS = [
    Opt("train_csv", _str, help="training split CSV (pairs with --test-csv)"),
    Opt("test_csv", _str, help="test split CSV"),
    Opt("synthetic", _flag, help="generate data in memory instead of reading CSVs"),
    Opt("d", _int, help="synthetic: feature dimension"),
    Opt("D", _int, help="synthetic: consensual class count"),
    Opt("K", _int, help="synthetic: private class count"),
    Opt("n_train", _int, help="synthetic: training examples"),
    Opt("n_test", _int, help="synthetic: test examples"),
    Opt("alpha_y", _float, default=1.5, help="synthetic: consensual signal scale"),
    Opt("alpha_s", _float, default=1.0, help="synthetic: private signal scale"),
    Opt("noise", _float, default=0.5, help="synthetic: gaussian sigma"),
    Opt("entanglement", _float, default=0.0, help="synthetic: private-into-consensual mixing"),
    Opt("data_seed", _int, default=0, help="synthetic: dataset seed"),
]

_ARCH_OPTS = [
    Opt("classifier_hidden", _int_list, default=[64, 32],
        help="classifier hidden widths, e.g. 64,32 (relu); the logits layer is appended"),
    Opt("adversary_hidden", _int_list, default=[16],
        help="adversary hidden widths (relu); the private logits layer is appended"),
    Opt("taps", _int_list, help="tap indices to register (default: middle and penultimate)"),
    Opt("tap", _int, help="tap to train or audit against (default: first registered tap)"),
]

_TRAIN_OPTS = [
    Opt("loss", _str, default="ce", help="ce | confusion | adversarial"),
    Opt("lambda", _float, default=0.5, help="privacy weight in [0, 1]"),
    Opt("epochs", _int, default=200),
    Opt("batch_size", _int, default=128),
    Opt("lr", _float, default=0.001),
    Opt("adversary_steps", _int, default=1, help="adversary updates per classifier update"),
    Opt("seed", _int, help=f"master seed (default: ${_ENV_SEED} or 0)"),
]

_ATTACK_OPTS = [
    Opt("attack_seed", _int, default=1, help="seed of the audit adversary"),
    Opt("attack_epochs", _int, default=40),
    Opt("attack_batch_size", _int, default=128),
    Opt("attack_lr", _float, default=0.001),
]

_COMMANDS = {
    "gen-data": [
        Opt("d", _int, required=True), Opt("D", _int, required=True),
        Opt("K", _int, required=True),
        Opt("n_train", _int, required=True), Opt("n_test", _int, required=True),
        Opt("alpha_y", _float, default=1.5), Opt("alpha_s", _float, default=1.0),
        Opt("noise", _float, default=0.5), Opt("entanglement", _float, default=0.0),
        Opt("seed", _int, help=f"dataset seed (default: ${_ENV_SEED} or 0)"),
        Opt("out", _str, required=True, help="output directory"),
    ],
    "train": _DATASET_OPTS + _ARCH_OPTS + _TRAIN_OPTS + [
        Opt("out", _str, required=True, help="run directory to write"),
    ],
    "attack": _DATASET_OPTS + [
        Opt("run", _str, required=True, help="run directory to audit"),
        Opt("tap", _int, help="tap to audit (default: the run's trained tap)"),
        Opt("adversary_hidden", _int_list, default=[16]),
    ] + _ATTACK_OPTS + [
        Opt("out", _str, help="attacker model path (default: RUN/attack_SEED.model)"),
    ],
    "eval": _DATASET_OPTS + [
        Opt("run", _str, required=True, help="run directory to score"),
        Opt("adversary_hidden", _int_list, default=[16]),
        Opt("baseline", _str, help="baseline report.json for robustness"),
        Opt("retrain_known", _flag, help="re-train the known adversary instead of reusing it"),
        Opt("out", _str, help="report path (default: RUN/report.json)"),
    ] + _ATTACK_OPTS,
    "sweep": _DATASET_OPTS + _ARCH_OPTS + _TRAIN_OPTS + _ATTACK_OPTS + [
        Opt("lambdas", _float_list, required=True, help="comma-separated mixing weights"),
        Opt("jobs", _int, default=1, help="parallel runs (results match sequential)"),
        Opt("out", _str, required=True, help="sweep CSV path"),
    ],
}

_HELP = {
    "gen-data": "generate a synthetic dataset and write train/test CSVs",
    "train": "train a baseline or privacy run and write a run directory",
    "attack": "audit a run's tapped features with a fresh adversary",
    "eval": "score a run (utility, leakage, robustness) as JSON",
    "sweep": "train and audit one run per mixing weight, writing a CSV",
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="privleak",
                                     description="privacy-preserving feature learning")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in _COMMANDS.items():
        p = sub.add_parser(command, help=_HELP[command])
        p.add_argument("--config", help="flat key = value file; flags win")
        seen = set()
        for opt in opts:
            if opt.name in seen:
                continue
            seen.add(opt.name)
            if opt.conv is _flag:
                p.add_argument(opt.flag, dest=opt.name, action="store_const", const=True,
                               default=None, help=opt.help)
            else:
                p.add_argument(opt.flag, dest=opt.name, type=str, default=None, help=opt.help)
    return parser


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    table = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path} line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        table[key.strip()] = val.strip()
    return table


def _resolve(args, command):
    """Merge flags over config over defaults; returns {name: value}."""
    opts = {}
    for opt in _COMMANDS[command]:
        opts.setdefault(opt.name, opt)
    table = _read_config_file(args.config) if args.config else {}
    unknown = set(table) - set(opts)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    vals = {}
    for name, opt in opts.items():
        raw = getattr(args, name)
        if raw is not None:
            source = raw
        elif name in table:
            source = table[name]
        else:
            vals[name] = opt.default
            continue
        if isinstance(source, str):
            try:
                vals[name] = opt.conv(source)
            except ValueError as exc:
                raise ConfigError(f"bad value for {opt.flag}: {exc}") from exc
        else:
            vals[name] = source

    if "seed" in opts and vals.get("seed") is None:
        env = os.environ.get(_ENV_SEED)
        if env is not None:
            try:
                vals["seed"] = int(env)
            except ValueError as exc:
                raise ConfigError(f"${_ENV_SEED} must be an integer, got {env!r}") from exc
        else:
            vals["seed"] = 0

    missing = [opt.flag for name, opt in opts.items()
               if opt.required and vals.get(name) is None]
    if missing:
        raise ConfigError(f"missing required options: {' '.join(sorted(missing))}")

    for name in ("train_csv", "test_csv", "run", "baseline"):
        path = vals.get(name)
        if path is not None and not os.path.exists(path):
            raise ConfigError(f"{name.replace('_', '-')} path {path} does not exist")
    return vals


def _resolve_dataset(vals):
    if vals.get("train_csv") or vals.get("test_csv"):
        if not (vals.get("train_csv") and vals.get("test_csv")):
            raise ConfigError("--train-csv and --test-csv must be given together")
        train = load_csv(vals["train_csv"])
        test = load_csv(vals["test_csv"])
        big_d = max(train.num_consensual, test.num_consensual)
        big_k = max(train.num_private, test.num_private)
        train = LabeledDataset(train.xs, train.ys, train.ss, big_d, big_k)
        test = LabeledDataset(test.xs, test.ys, test.ss, big_d, big_k)
        return train, test
    if vals.get("synthetic"):
        for need in ("d", "D", "K", "n_train", "n_test"):
            if vals.get(need) is None:
                raise ConfigError(f"--synthetic needs --{need}")
        spec = SyntheticSpec(d=vals["d"], num_consensual=vals["D"], num_private=vals["K"],
                             n_train=vals["n_train"], n_test=vals["n_test"],
                             alpha_y=vals["alpha_y"], alpha_s=vals["alpha_s"],
                             noise=vals["noise"], entanglement=vals["entanglement"],
                             seed=vals["data_seed"])
        return generate_synthetic(spec)
    raise ConfigError("no dataset source: pass --train-csv/--test-csv or --synthetic")


def _default_taps(num_layers):
    return tuple(sorted({max(1, num_layers // 2), num_layers - 1}))


def _classifier_arch(vals, input_dim, num_classes):
    hidden = vals["classifier_hidden"]
    if not hidden:
        raise ConfigError("classifier needs at least one hidden layer")
    specs = tuple([LayerSpec(w, RELU) for w in hidden] + [LayerSpec(num_classes, NONE)])
    taps = tuple(vals["taps"]) if vals.get("taps") else _default_taps(len(specs))
    return input_dim, specs, taps


def _adversary_layers(vals, num_private):
    return tuple([LayerSpec(w, RELU) for w in vals["adversary_hidden"]]
                 + [LayerSpec(num_private, NONE)])


_LOSS_NAMES = {
    "ce": losses.CROSS_ENTROPY_ONLY,
    losses.CROSS_ENTROPY_ONLY: losses.CROSS_ENTROPY_ONLY,
    losses.CONFUSION: losses.CONFUSION,
    losses.ADVERSARIAL: losses.ADVERSARIAL,
}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _cmd_gen_data(vals):
    spec = SyntheticSpec(d=vals["d"], num_consensual=vals["D"], num_private=vals["K"],
                         n_train=vals["n_train"], n_test=vals["n_test"],
                         alpha_y=vals["alpha_y"], alpha_s=vals["alpha_s"],
                         noise=vals["noise"], entanglement=vals["entanglement"],
                         seed=vals["seed"])
    train, test = generate_synthetic(spec)
    out = vals["out"]
    os.makedirs(out, exist_ok=True)
    paths = {"train": os.path.join(out, "train.csv"), "test": os.path.join(out, "test.csv")}
    save_csv(train, paths["train"])
    save_csv(test, paths["test"])

    payload = {name: str(getattr(spec, field)) for name, field in [
        ("d", "d"), ("D", "num_consensual"), ("K", "num_private"),
        ("n_train", "n_train"), ("n_test", "n_test"), ("alpha_y", "alpha_y"),
        ("alpha_s", "alpha_s"), ("noise", "noise"), ("entanglement", "entanglement"),
        ("seed", "seed")]}
    manifest = {
        "config_hash": hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest(),
        "spec": payload,
        "files": {name: _sha256(path) for name, path in paths.items()},
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for name in ("train", "test"):
        print(f"wrote {paths[name]} sha256={manifest['files'][name]}")
    return 0


def _train_config(vals, kind, lam, tap):
    return TrainConfig(loss=LossKind(kind, lam), tap=tap, epochs=vals["epochs"],
                       batch_size=vals["batch_size"], lr=vals["lr"],
                       adversary_steps=vals["adversary_steps"], seed=vals["seed"])


def _attack_config(vals, tap):
    return TrainConfig(loss=LossKind(losses.CROSS_ENTROPY_ONLY), tap=tap,
                       epochs=vals["attack_epochs"], batch_size=vals["attack_batch_size"],
                       lr=vals["attack_lr"], seed=vals["attack_seed"])


def _cmd_train(vals):
    train, test = _resolve_dataset(vals)
    arch = _classifier_arch(vals, train.dim, train.num_consensual)
    tap = vals["tap"] if vals.get("tap") is not None else arch[2][0]
    if vals["loss"] not in _LOSS_NAMES:
        raise ConfigError(f"--loss must be ce, confusion or adversarial, got {vals['loss']!r}")
    kind = _LOSS_NAMES[vals["loss"]]
    lam = 0.0 if kind == losses.CROSS_ENTROPY_ONLY else vals["lambda"]
    config = _train_config(vals, kind, lam, tap)
    if kind == losses.CROSS_ENTROPY_ONLY:
        run = train_baseline(arch, train, test, config)
    else:
        run = train_private(arch, _adversary_layers(vals, train.num_private), train, test, config)
    save_run(run, vals["out"])
    last = run.curves[-1]
    print(f"run saved to {vals['out']}")
    print(f"utility {100 * last['utility']:.2f}% (chance {100 / train.num_consensual:.2f}%)")
    if last["known_adv_acc"] is not None:
        print(f"known adversary {100 * last['known_adv_acc']:.2f}% "
              f"(chance {100 / train.num_private:.2f}%)")
    return 0


def _cmd_attack(vals):
    train, test = _resolve_dataset(vals)
    run = load_run(vals["run"])
    tap = vals["tap"] if vals.get("tap") is not None else int(run.provenance["tap"])
    config = _attack_config(vals, tap)
    attacker = train_attack(run.classifier, tap, _adversary_layers(vals, train.num_private),
                            train, test, config, vals["attack_seed"])
    feats = tap_features(run.classifier, test.xs, tap)
    acc = evaluation.accuracy(predict_private(attacker, feats), test.ss)
    out = vals["out"] or os.path.join(vals["run"], f"attack_{vals['attack_seed']}.model")
    save_model(attacker, out)
    print(f"wrote {out}")
    print(f"attack accuracy {100 * acc:.2f}% (chance {100 / train.num_private:.2f}%)")
    return 0


def _cmd_eval(vals):
    train, test = _resolve_dataset(vals)
    run = load_run(vals["run"])
    tap = int(run.provenance["tap"])
    baseline = None
    if vals.get("baseline"):
        with open(vals["baseline"], "r", encoding="utf-8") as fh:
            baseline = EvalReport.from_json(fh.read())
    report = evaluate(run, train, test, _adversary_layers(vals, train.num_private),
                      _attack_config(vals, tap), vals["attack_seed"], baseline=baseline,
                      retrain_known=bool(vals.get("retrain_known")))
    text = report.to_json()
    out = vals["out"] or os.path.join(vals["run"], "report.json")
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def _cmd_sweep(vals):
    train, test = _resolve_dataset(vals)
    arch = _classifier_arch(vals, train.dim, train.num_consensual)
    tap = vals["tap"] if vals.get("tap") is not None else arch[2][0]
    config = _train_config(vals, losses.CONFUSION, 0.0, tap)
    result = lambda_sweep(vals["lambdas"], arch, _adversary_layers(vals, train.num_private),
                          train, test, config, _adversary_layers(vals, train.num_private),
                          _attack_config(vals, tap), vals["attack_seed"], jobs=vals["jobs"])
    text = result.to_csv()
    with open(vals["out"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


_DISPATCH = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "attack": _cmd_attack,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        vals = _resolve(args, args.command)
        return _DISPATCH[args.command](vals)
    except (ConfigError, ContractError, DimensionError, ParseError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry():
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    main_entry()
