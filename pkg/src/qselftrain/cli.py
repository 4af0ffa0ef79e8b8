"""Command-line entry point: ``qselftrain <command> [options]``.

Exit codes: 0 success, 1 numeric failure, 2 user or config error.
"""

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .crf import CRFTagger
from .data import Sentence, SyntheticSpec, gen_synthetic, parse_conll, write_conll
from .dqn import QNetwork
from .embeddings import load_embeddings, save_embeddings
from .exceptions import NumericError, RejectedInputError
from .metrics import entity_f1
from .selftrain import (
    STRATEGIES, RunConfig, bandit_states, greedy_accuracy, initial_set, run_dqn_selftrain,
    run_no_sl, run_rd, run_tsl, selection_report, train_bandit, train_dqn,
)

logger = logging.getLogger("qselftrain")

EPISODE_COLUMNS = ("episode", "steps", "acceptances", "cumulative_reward")


@dataclass
class ExperimentConfig:
    """Everything one command needs; loaded from JSON, then overridden by flags.

    Data comes either from CoNLL/embedding ``paths`` (keys ``train``, ``dev``,
    ``test``, ``unlabeled``, ``embeddings``) or, when ``paths`` is empty, from
    the synthetic generator configured by ``synthetic``.
    """

    paths: dict = field(default_factory=dict)
    synthetic: dict = field(default_factory=dict)
    run: RunConfig = field(default_factory=RunConfig)
    tagger: dict = field(default_factory=dict)
    strategies: tuple = STRATEGIES
    network: str = None
    out: str = "runs"

    def __post_init__(self):
        self.strategies = tuple(self.strategies)
        if not self.strategies:
            raise RejectedInputError("strategy set is empty")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise RejectedInputError(f"unknown strategies {sorted(unknown)}")

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RejectedInputError(f"{path}: invalid JSON ({exc})") from None
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise RejectedInputError(f"unknown config keys {sorted(extra)}")
        try:
            raw["run"] = RunConfig(**raw.get("run", {}))
        except TypeError as exc:
            raise RejectedInputError(f"run config: {exc}") from None
        return cls(**raw)

    def to_dict(self):
        out = asdict(self)
        out["strategies"] = list(self.strategies)
        return out


@dataclass
class Data:
    train: list
    dev: list
    test: list
    unlabeled: list
    embeddings: object
    informative: list = None


def load_data(cfg):
    if not cfg.paths:
        try:
            spec = SyntheticSpec(**cfg.synthetic)
        except TypeError as exc:
            raise RejectedInputError(f"synthetic config: {exc}") from None
        d = gen_synthetic(spec)
        return Data(list(d.train), list(d.dev), list(d.test), list(d.unlabeled),
                    d.embeddings, d.informative)
    paths = cfg.paths
    for key in ("train", "dev", "embeddings"):
        if key not in paths:
            raise RejectedInputError(f"missing data path {key!r}")
    emb = load_embeddings(paths["embeddings"])
    part = {k: list(parse_conll(paths[k])) if paths.get(k) else []
            for k in ("train", "dev", "test", "unlabeled")}
    # the pool is treated as unlabeled even when the file carries tags
    return Data(part["train"], part["dev"], part["test"], part["unlabeled"], emb)


def _tokens_tags(sentences):
    return [s.tokens for s in sentences], [s.tags for s in sentences]


def make_tagger(cfg, emb):
    params = dict(cfg.tagger)
    params.setdefault("random_state", cfg.run.seed)
    try:
        return CRFTagger(embeddings=emb, **params)
    except TypeError as exc:
        raise RejectedInputError(f"tagger config: {exc}") from None


def _labels(data):
    tags = {t for s in data.train + data.dev + data.test for t in s.tags}
    ents = sorted({t[2:] for t in tags if t != "O"})
    return ["O"] + [f"{p}-{e}" for e in ents for p in "BI"]


def fit_initial_tagger(cfg, data, sentences):
    tagger = make_tagger(cfg, data.embeddings)
    tagger.set_params(labels=tagger.labels or _labels(data))
    return tagger.fit(*_tokens_tags(sentences), eval_set=_tokens_tags(data.dev))


def _scores(tagger, sentences):
    if not sentences:
        return None
    X, y = _tokens_tags(sentences)
    return {k: v._asdict() for k, v in entity_f1(y, tagger.predict(X)).items()}


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_episodes(path, log):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPISODE_COLUMNS)
        for row in log:
            writer.writerow([row["episode"], row["steps"], row["acceptances"],
                             repr(row["cumulative_reward"])])


def _out_dir(cfg):
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RejectedInputError(f"cannot create output directory {out}: {exc}") from None
    return out


# -- commands -------------------------------------------------------------


def cmd_gen_synthetic(cfg, args):
    spec = SyntheticSpec(**cfg.synthetic)
    d = gen_synthetic(spec)
    out = _out_dir(cfg)
    for name in ("train", "dev", "test"):
        write_conll(getattr(d, name), out / f"{name}.conll")
    write_conll([Sentence(s.tokens) for s in d.unlabeled], out / "unlabeled.conll")
    write_conll(d.unlabeled, out / "unlabeled_gold.conll")
    save_embeddings(d.embeddings, out / "embeddings.txt")
    spec.to_json(out / "spec.json")
    print(f"wrote synthetic corpus {spec.digest()} to {out}")
    return 0


def cmd_train_tagger(cfg, args):
    data = load_data(cfg)
    out = _out_dir(cfg)
    tagger = fit_initial_tagger(cfg, data, data.train)
    tagger.save(out / "tagger.bin")
    metrics = {"dev": _scores(tagger, data.dev), "test": _scores(tagger, data.test)}
    _write_json(out / "metrics.json", metrics)
    print(json.dumps({k: v["micro"]["f1"] if v else None for k, v in metrics.items()}))
    return 0


def cmd_train_dqn(cfg, args):
    data = load_data(cfg)
    out = _out_dir(cfg)
    if args.bandit:
        return _bandit(cfg, data, out)
    if not data.unlabeled:
        raise RejectedInputError("train-dqn needs an unlabeled pool")
    init = initial_set(data.train, cfg.run)
    tagger = fit_initial_tagger(cfg, data, init)
    log = []
    net = train_dqn(data.unlabeled, data.dev, init, cfg.run, tagger, data.embeddings, log=log)
    net.save(out / "qnet.bin")
    _write_episodes(out / "episodes.csv", log)
    print(f"trained {len(log)} episodes; network in {out / 'qnet.bin'}")
    return 0


def _bandit(cfg, data, out):
    if data.informative is None:
        raise RejectedInputError("--bandit needs the synthetic corpus (its informative flags)")
    init = initial_set(data.train, cfg.run)
    tagger = fit_initial_tagger(cfg, data, init)
    run = replace(cfg.run, gamma=0.0)
    net = QNetwork(data.embeddings.dim, len(tagger.tagset_), run.hp_mode, seed=run.seed)
    states = bandit_states(data.unlabeled, tagger, data.embeddings, net)
    half = len(states) // 2
    good = np.asarray(data.informative, dtype=bool)
    train_bandit(states[:half], good[:half], run, net=net)
    acc = greedy_accuracy(net, states[half:], good[half:])
    net.save(out / "qnet.bin")
    _write_json(out / "bandit.json", {"held_out": len(states) - half, "accuracy": acc})
    print(json.dumps({"bandit_accuracy": acc}))
    return 0


def _run_strategy(name, cfg, data, init, tagger, net_holder):
    run = cfg.run
    if name == "no_sl":
        return run_no_sl(init, data.dev, data.unlabeled, run, tagger, data.test)
    if name == "rd":
        return run_rd(init, data.dev, data.unlabeled, run, tagger, data.test)
    if name == "tsl":
        return run_tsl(init, data.dev, data.unlabeled, run, tagger, data.test)
    net = net_holder.get("net")
    if net is None:
        log = []
        net = train_dqn(data.unlabeled, data.dev, init, run, tagger, data.embeddings, log=log)
        net_holder.update(net=net, log=log)
    return run_dqn_selftrain(net, init, data.dev, data.unlabeled, run, tagger,
                             data.embeddings, data.test)


def _compare(cfg, strategies, jobs):
    data = load_data(cfg)
    out = _out_dir(cfg)
    net_holder = {}
    if "dqn" in strategies:
        if cfg.network:
            net_holder["net"] = QNetwork.load(cfg.network)
        elif cfg.run.episodes == 0:
            raise RejectedInputError("strategy dqn needs --network or --episodes > 0")
    init = initial_set(data.train, cfg.run)
    tagger = fit_initial_tagger(cfg, data, init)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = [pool.submit(_run_strategy, s, cfg, data, init, tagger, net_holder)
                   for s in strategies]
        results = [f.result() for f in futures]

    reference = [s.tags for s in data.train]
    # the output location is not part of the experiment, so runs into different
    # directories stay byte-identical
    config = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    summary = {"config": config, "strategies": {}, "table": []}
    for name, res in zip(strategies, results):
        sub = out / name
        sub.mkdir(exist_ok=True)
        res.write(sub)
        report = selection_report(res, reference)
        summary["strategies"][name] = report
        summary["table"].append([name, report["final_dev"], report["final_test"]])
    if "log" in net_holder:
        _write_episodes(out / "episodes.csv", net_holder["log"])
        net_holder["net"].save(out / "qnet.bin")
    _write_json(out / "summary.json", summary)
    return summary


def _print_table(summary):
    print(f"{'strategy':<8} {'dev F1':>8} {'test F1':>8}")
    for name, dev, test in summary["table"]:
        fmt = lambda x: f"{100 * x:8.2f}" if x is not None else f"{'-':>8}"  # noqa: E731
        print(f"{name:<8} {fmt(dev)} {fmt(test)}")


def cmd_compare(cfg, args):
    _print_table(_compare(cfg, cfg.strategies, args.jobs))
    return 0


def cmd_selftrain(cfg, args):
    _print_table(_compare(cfg, (args.strategy,), 1))
    return 0


def cmd_eval(cfg, args):
    if not args.model:
        raise RejectedInputError("eval needs --model")
    data = load_data(cfg)
    tagger = CRFTagger.load(args.model, data.embeddings)
    split = getattr(data, args.split)
    if not split or split[0].tags is None:
        raise RejectedInputError(f"split {args.split!r} has no gold tags")
    scores = _scores(tagger, split)
    print(json.dumps(scores, sort_keys=True))
    if args.out:
        _write_json(_out_dir(cfg) / "metrics.json", scores)
    return 0


COMMANDS = {
    "train-tagger": cmd_train_tagger,
    "train-dqn": cmd_train_dqn,
    "selftrain": cmd_selftrain,
    "compare": cmd_compare,
    "gen-synthetic": cmd_gen_synthetic,
    "eval": cmd_eval,
}


def _epsilon_schedule(text):
    try:
        start, end, frac = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected START,END,FRACTION, e.g. 1.0,0.1,0.3")
    return start, end, frac


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--train")
    common.add_argument("--dev")
    common.add_argument("--test")
    common.add_argument("--unlabeled")
    common.add_argument("--embeddings")
    common.add_argument("--budget", type=int)
    common.add_argument("--episodes", type=int)
    common.add_argument("--gamma", type=float)
    common.add_argument("--epsilon-schedule", type=_epsilon_schedule, metavar="START,END,FRAC")
    common.add_argument("--target-network", action="store_true", default=None)
    common.add_argument("--hp-mode", choices=("full", "predicted"))
    common.add_argument("--no-episode-reset", action="store_true")
    common.add_argument("--retrain-from-scratch", action="store_true", default=None)
    common.add_argument("--stale-confidence", type=int, metavar="K",
                        help="refresh TSL confidences every K acceptances (0 = always)")
    common.add_argument("--mode", choices=("in_domain", "cross_domain"))
    common.add_argument("--network", help="trained Q-network file")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qselftrain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train-tagger", parents=[common], help="train the CRF tagger")
    p = sub.add_parser("train-dqn", parents=[common], help="learn the selection Q-network")
    p.add_argument("--bandit", action="store_true",
                   help="run the contextual-bandit sanity task instead")
    p = sub.add_parser("selftrain", parents=[common], help="run one selection strategy")
    p.add_argument("--strategy", choices=STRATEGIES, default="dqn")
    p = sub.add_parser("compare", parents=[common], help="run several strategies side by side")
    p.add_argument("--strategies", help="comma-separated subset of " + ",".join(STRATEGIES))
    p.add_argument("--jobs", type=int, default=1, help="parallel worker threads")
    sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic corpus")
    p = sub.add_parser("eval", parents=[common], help="score a saved tagger")
    p.add_argument("--model", help="tagger file from train-tagger")
    p.add_argument("--split", choices=("dev", "test", "train"), default="test")
    return parser


def resolve_config(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    paths = dict(cfg.paths)
    for key in ("train", "dev", "test", "unlabeled", "embeddings"):
        if getattr(args, key):
            paths[key] = getattr(args, key)
    run = {}
    for key in ("seed", "budget", "episodes", "gamma", "target_network", "hp_mode",
                "retrain_from_scratch", "stale_confidence", "mode"):
        value = getattr(args, key)
        if value is not None:
            run[key] = value
    if args.no_episode_reset:
        run["episode_reset"] = False
    if args.epsilon_schedule:
        run["epsilon_start"], run["epsilon_end"], run["epsilon_fraction"] = args.epsilon_schedule
    synthetic = dict(cfg.synthetic)
    if args.command == "gen-synthetic" and args.seed is not None:
        synthetic["seed"] = args.seed
    strategies = cfg.strategies
    if getattr(args, "strategies", None):
        strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    return ExperimentConfig(
        paths=paths, synthetic=synthetic, run=replace(cfg.run, **run), tagger=cfg.tagger,
        strategies=strategies, network=args.network or cfg.network,
        out=args.out or cfg.out,
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (RejectedInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
