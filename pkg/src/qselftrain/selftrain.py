"""Self-training drivers: random (RD), confidence-based (TSL) and Q-network selection.

All drivers stream the unlabeled pool, add accepted sentences with their
predicted tags to the working training set, retrain the tagger and record
the dev (and optionally test) score after every acceptance.
"""

import copy
import json
import logging
import zlib
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_sentences, substream
from .crf import CRFTagger
from .data import Sentence, stream
from .dqn import (
    ACCEPT, QNetwork, ReplayBuffer, Transition, dqn_train_step, q_forward, select_action,
)
from .exceptions import RejectedInputError
from .metrics import (
    LearningCurve, bio_spans, kl_divergence, micro_f1_spans, tag_distribution,
)
from .nn import Optimizer, OptimizerConfig
from .state import HP_MODES, build_state

logger = logging.getLogger(__name__)

STRATEGIES = ("no_sl", "rd", "tsl", "dqn")


@dataclass
class RunConfig:
    budget: int = 200
    episodes: int = 200
    reward_threshold: float = 0.001
    reward_window: int = 10
    seed: int = 0
    mode: str = "in_domain"
    init_size: int = 100
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_fraction: float = 0.3
    replay_capacity: int = 10000
    batch_size: int = 32
    dqn_learning_rate: float = 1e-3
    target_network: bool = False
    target_sync: int = 100
    hp_mode: str = "full"
    episode_reset: bool = True
    episode_budget: int = 20
    retrain_from_scratch: bool = False
    stale_confidence: int = 0
    significance_mode: str = "all"
    reward_scale: float = 1.0

    def __post_init__(self):
        if self.budget < 0:
            raise RejectedInputError("budget must be >= 0")
        if self.reward_window < 1:
            raise RejectedInputError("reward_window must be >= 1")
        if self.mode not in ("in_domain", "cross_domain"):
            raise RejectedInputError(f"unknown mode {self.mode!r}")
        if self.hp_mode not in HP_MODES:
            raise RejectedInputError(f"unknown hp_mode {self.hp_mode!r}")
        if self.significance_mode not in ("all", "mean"):
            raise RejectedInputError("significance_mode must be 'all' or 'mean'")
        if not 0.0 <= self.gamma <= 1.0:
            raise RejectedInputError("gamma must lie in [0, 1]")
        if self.episodes < 0:
            raise RejectedInputError("episodes must be >= 0")
        if not self.reward_scale > 0:
            raise RejectedInputError("reward_scale must be positive")

    def epsilon(self, episode):
        """Linear decay from ``epsilon_start`` to ``epsilon_end`` over the first
        ``epsilon_fraction`` of the episodes, constant afterwards."""
        horizon = self.epsilon_fraction * self.episodes
        if horizon <= 0:
            return self.epsilon_end
        frac = min(1.0, episode / horizon)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass
class RunResult:
    curve: LearningCurve
    selected: list = field(default_factory=list)
    tagger: CRFTagger = None
    strategy: str = ""

    @property
    def final_dev(self):
        return self.curve[-1].dev_score

    @property
    def final_test(self):
        return self.curve[-1].test_score

    def write(self, out_dir):
        """Write ``curve.csv`` and ``selected.jsonl`` into ``out_dir``."""
        self.curve.to_csv(out_dir / "curve.csv")
        with open(out_dir / "selected.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.selected:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def subseed(seed, name):
    return (int(seed) ^ zlib.crc32(name.encode())) & 0xFFFFFFFF


def significance_test(rewards, window, threshold, mode="all"):
    """True while the episode should continue.

    Stops once ``window`` actions have been taken and the latest ``window``
    reward magnitudes are all below ``threshold`` (or, with ``mode="mean"``,
    their mean magnitude is).
    """
    if len(rewards) < window:
        return True
    recent = np.abs(np.asarray(rewards[-window:], dtype=np.float64))
    if mode == "mean":
        return not recent.mean() < threshold
    return not np.all(recent < threshold)


def initial_set(labeled, cfg):
    """In-domain runs start from ``init_size`` random gold sentences; cross-domain
    runs start from the whole source set."""
    labeled = check_sentences(labeled, require_tags=True, name="labeled set")
    if cfg.mode == "cross_domain" or len(labeled) <= cfg.init_size:
        return list(labeled)
    idx = substream(cfg.seed, "init-sample").choice(len(labeled), cfg.init_size, replace=False)
    return [labeled[i] for i in sorted(idx)]


class DevScorer:
    """Entity F1 of a tagger on a fixed gold set (tokens and gold spans cached)."""

    def __init__(self, sentences):
        self.X = [s.tokens for s in sentences]
        self.y = [s.tags for s in sentences]
        self._spans = [set(bio_spans(t)) for t in self.y]

    def __call__(self, tagger):
        return micro_f1_spans(self._spans, tagger.predict(self.X)) if self.X else None


class _Learner:
    """Working training set plus the tagger trained on it."""

    def __init__(self, tagger, train, dev, test, cfg, rng):
        # the feature cache is read-only per token tuple, so copies share it
        cache = tagger.__dict__.get("_feature_cache", {})
        self.tagger = copy.deepcopy(tagger, {id(cache): cache})
        self.train = list(train)
        self.dev = dev
        self.dev_score = DevScorer(dev)
        self.test_score = DevScorer(test or [])
        self.cfg = cfg
        self.rng = rng

    def retrain(self):
        X = [s.tokens for s in self.train]
        y = [s.tags for s in self.train]
        if self.cfg.retrain_from_scratch:
            fresh = CRFTagger(**self.tagger.get_params())
            self.tagger = fresh.fit(X, y, eval_set=(self.dev_score.X, self.dev_score.y))
        else:
            self.tagger.partial_fit(X, y, rng=self.rng)

    def accept(self, sentence, tags):
        self.train.append(Sentence(sentence.tokens, tuple(tags)))
        self.retrain()


def _start(labeled, dev, unlabeled, cfg, tagger):
    labeled = check_sentences(labeled, require_tags=True, name="labeled set")
    check_sentences(dev, require_tags=True, name="dev set", allow_empty=True)
    unlabeled = check_sentences(unlabeled, name="unlabeled pool", allow_empty=True)
    if tagger is None:
        raise RejectedInputError("an initial tagger trained on the labeled set is required")
    return labeled, unlabeled


def _record_initial(learner):
    curve = LearningCurve()
    curve.record(0, 0, learner.dev_score(learner.tagger), learner.test_score(learner.tagger))
    return curve


def _accept_and_record(learner, curve, selected, step, sentence, tags, conf, qvalue=None):
    learner.accept(sentence, tags)
    accepted = len(selected) + 1
    curve.record(step, accepted, learner.dev_score(learner.tagger),
                 learner.test_score(learner.tagger), conf, ACCEPT)
    selected.append({
        "step": step,
        "tokens": list(sentence.tokens),
        "tags": list(tags),
        "gold": list(sentence.tags) if sentence.tags is not None else None,
        "confidence": conf,
        "qvalues": None if qvalue is None else [float(q) for q in qvalue],
    })


def run_no_sl(labeled, dev, unlabeled, cfg, tagger, test=None):
    """The initial tagger alone: a single-point curve."""
    labeled, _ = _start(labeled, dev, unlabeled, cfg, tagger)
    learner = _Learner(tagger, labeled, dev, test, cfg, None)
    return RunResult(_record_initial(learner), [], learner.tagger, "no_sl")


def run_rd(labeled, dev, unlabeled, cfg, tagger, test=None):
    """Accept the first ``budget`` sentences of a seeded random stream."""
    labeled, unlabeled = _start(labeled, dev, unlabeled, cfg, tagger)
    learner = _Learner(tagger, labeled, dev, test, cfg, substream(cfg.seed, "tagger-retrain"))
    curve, selected = _record_initial(learner), []
    for step, x in enumerate(stream(unlabeled, subseed(cfg.seed, "stream-shuffle")), 1):
        if len(selected) >= cfg.budget:
            break
        tags, conf, _, _ = learner.tagger.analyse(x.tokens)
        _accept_and_record(learner, curve, selected, step, x, tags, conf)
    return RunResult(curve, selected, learner.tagger, "rd")


def run_tsl(labeled, dev, unlabeled, cfg, tagger, test=None):
    """Repeatedly accept the most confident remaining sentence.

    Ties go to the earliest sentence in the shuffled stream. With
    ``cfg.stale_confidence = k > 0`` confidences are refreshed only every
    ``k`` acceptances.
    """
    labeled, unlabeled = _start(labeled, dev, unlabeled, cfg, tagger)
    learner = _Learner(tagger, labeled, dev, test, cfg, substream(cfg.seed, "tagger-retrain"))
    curve, selected = _record_initial(learner), []
    pool = list(stream(unlabeled, subseed(cfg.seed, "stream-shuffle")))
    conf = None
    step = 0
    while len(selected) < cfg.budget and pool:
        step += 1
        if conf is None or not cfg.stale_confidence or len(selected) % cfg.stale_confidence == 0:
            conf = learner.tagger.confidence([s.tokens for s in pool])
        best = int(np.argmax(conf))
        x = pool.pop(best)
        best_conf = float(conf[best])
        conf = np.delete(conf, best)
        tags = learner.tagger.predict([x.tokens])[0]
        _accept_and_record(learner, curve, selected, step, x, tags, best_conf)
    return RunResult(curve, selected, learner.tagger, "tsl")


def run_dqn_selftrain(net, labeled, dev, unlabeled, cfg, tagger, emb, test=None):
    """Greedy streaming selection: accept iff Q(s, accept) > Q(s, reject)."""
    labeled, unlabeled = _start(labeled, dev, unlabeled, cfg, tagger)
    learner = _Learner(tagger, labeled, dev, test, cfg, substream(cfg.seed, "tagger-retrain"))
    curve, selected = _record_initial(learner), []
    for step, x in enumerate(stream(unlabeled, subseed(cfg.seed, "stream-shuffle")), 1):
        if len(selected) >= cfg.budget:
            break
        state, tags = build_state(x, learner.tagger, emb, net, encode=False)
        q = q_forward(net, state)
        if select_action(q, 0.0, None) == ACCEPT:
            _accept_and_record(learner, curve, selected, step, x, tags, state.h_c, q)
    return RunResult(curve, selected, learner.tagger, "dqn")


def train_dqn(unlabeled, dev, init, cfg, tagger, emb, net=None, score_fn=None, log=None):
    """Learn the selection Q-network by self-training episodes.

    Each episode starts from ``init`` and ``tagger`` (trained on ``init``),
    streams a fresh shuffle of ``unlabeled``, and ends when the significance
    test fires, the stream runs out, or ``cfg.episode_budget`` acceptances
    have been made. The reward of an acceptance is the change in
    ``score_fn(tagger)`` (dev entity F1 by default); rejections earn 0.

    ``log``, when given, receives one dict per episode with keys
    ``episode, steps, acceptances, cumulative_reward``.
    """
    unlabeled = check_sentences(unlabeled, name="unlabeled pool")
    init = check_sentences(init, require_tags=True, name="initial set")
    if net is None:
        net = QNetwork(emb.dim, len(tagger.tagset_), cfg.hp_mode, seed=cfg.seed)
    score_fn = score_fn or DevScorer(dev)
    replay = ReplayBuffer(cfg.replay_capacity, substream(cfg.seed, "replay"))
    eps_rng = substream(cfg.seed, "epsilon")
    shuffle_rng = substream(cfg.seed, "episode-shuffle")
    retrain_rng = substream(cfg.seed, "tagger-retrain")
    opt = Optimizer(OptimizerConfig("adam", cfg.dqn_learning_rate))
    target = net.copy() if cfg.target_network else None
    updates = 0

    def learn():
        nonlocal updates
        batch = replay.sample(cfg.batch_size)
        dqn_train_step(net, batch, cfg.gamma, opt, target)
        updates += 1
        if target is not None and updates % cfg.target_sync == 0:
            target.params = {k: v.copy() for k, v in net.params.items()}

    learner = None
    for episode in range(cfg.episodes):
        if learner is None or cfg.episode_reset:
            learner = _Learner(tagger, init, dev, None, cfg, retrain_rng)
        else:
            learner.retrain()
        score = score_fn(learner.tagger)
        eps = cfg.epsilon(episode)
        rewards, pending, accepted = [], None, 0
        for i in shuffle_rng.permutation(len(unlabeled)):
            x = unlabeled[i]
            state, tags = build_state(x, learner.tagger, emb, net, encode=False)
            if pending is not None:
                replay.push(Transition(*pending, next_state=state, terminal=False))
                learn()
            action = select_action(q_forward(net, state), eps, eps_rng)
            reward = 0.0
            if action == ACCEPT:
                learner.accept(x, tags)
                new = score_fn(learner.tagger)
                reward = new - score
                score = new
                accepted += 1
            rewards.append(reward)
            pending = (state, action, cfg.reward_scale * reward)
            if not significance_test(rewards, cfg.reward_window, cfg.reward_threshold,
                                     cfg.significance_mode):
                break
            if cfg.episode_budget is not None and accepted >= cfg.episode_budget:
                break
        if pending is not None:
            replay.push(Transition(*pending, next_state=pending[0], terminal=True))
            learn()
        row = {"episode": episode, "steps": len(rewards), "acceptances": accepted,
               "cumulative_reward": float(np.sum(rewards))}
        logger.debug("episode %(episode)d: %(steps)d steps, %(acceptances)d accepted", row)
        if log is not None:
            log.append(row)
    return net


def train_bandit(states, good, cfg, net=None, steps=2000):
    """Contextual-bandit sanity task on fixed states.

    Accepting a good state pays +0.1, accepting a bad one -0.1, rejecting 0.
    Each step draws a random state, acts epsilon-greedily (epsilon decaying
    over the first ``epsilon_fraction`` of steps), stores a terminal
    transition and takes one replay update.
    """
    if net is None:
        s0 = states[0]
        net = QNetwork(s0.embedded.shape[1], len(s0.h_t), cfg.hp_mode, seed=cfg.seed)
    replay = ReplayBuffer(cfg.replay_capacity, substream(cfg.seed, "replay"))
    rng = substream(cfg.seed, "bandit-draw")
    eps_rng = substream(cfg.seed, "epsilon")
    opt = Optimizer(OptimizerConfig("adam", cfg.dqn_learning_rate))
    horizon = max(1.0, cfg.epsilon_fraction * steps)
    for t in range(steps):
        i = int(rng.integers(len(states)))
        eps = cfg.epsilon_start + min(1.0, t / horizon) * (cfg.epsilon_end - cfg.epsilon_start)
        action = select_action(q_forward(net, states[i]), eps, eps_rng)
        reward = (0.1 if good[i] else -0.1) if action == ACCEPT else 0.0
        replay.push(Transition(states[i], action, reward, states[i], True))
        dqn_train_step(net, replay.sample(cfg.batch_size), cfg.gamma, opt)
    return net


def bandit_states(sentences, tagger, emb, net):
    """States of ``sentences`` under a fixed tagger, for the bandit task."""
    return [build_state(s, tagger, emb, net)[0] for s in sentences]


def greedy_accuracy(net, states, good):
    q, _ = net.forward(states)
    return float(np.mean((q[:, 1] > q[:, 0]) == np.asarray(good, dtype=bool)))


def run_cross_domain(source, dev, unlabeled, cfg, tagger, emb, test=None, log=None):
    """Train the Q-network from the source set, then self-train on the target pool."""
    if not list(unlabeled):
        raise RejectedInputError("target unlabeled pool is empty")
    net = train_dqn(unlabeled, dev, source, cfg, tagger, emb, log=log)
    return run_dqn_selftrain(net, source, dev, unlabeled, cfg, tagger, emb, test), net


class SelfTrainingTagger(BaseEstimator):
    """Self-training wrapper around :class:`~qselftrain.crf.CRFTagger`.

    Follows :class:`sklearn.semi_supervised.SelfTrainingClassifier`'s
    convention: ``fit(X, y)`` treats sentences whose ``y`` entry is ``None``
    as the unlabeled pool.

    Parameters
    ----------
    base_tagger : CRFTagger
        Unfitted prototype; cloned and trained on the initial labeled set.
    strategy : {"no_sl", "rd", "tsl", "dqn"}
    config : RunConfig, optional
    q_network : QNetwork, optional
        Pre-trained selector for ``strategy="dqn"``; trained inline when omitted.
    """

    def __init__(self, base_tagger=None, strategy="dqn", config=None, q_network=None):
        self.base_tagger = base_tagger
        self.strategy = strategy
        self.config = config
        self.q_network = q_network

    def fit(self, X, y, eval_set=None, test_set=None):
        if self.strategy not in STRATEGIES:
            raise RejectedInputError(f"unknown strategy {self.strategy!r}")
        if eval_set is None:
            raise RejectedInputError("a dev set is required for rewards and model selection")
        cfg = self.config or RunConfig()
        X, y = list(X), list(y)
        labeled = [Sentence(x, t) for x, t in zip(X, y) if t is not None]
        pool = [Sentence(x) for x, t in zip(X, y) if t is None]
        dev = [Sentence(x, t) for x, t in zip(*eval_set)]
        test = [Sentence(x, t) for x, t in zip(*test_set)] if test_set else None
        init = initial_set(labeled, cfg)
        base = CRFTagger(**self.base_tagger.get_params())
        base.fit([s.tokens for s in init], [s.tags for s in init],
                 eval_set=([s.tokens for s in dev], [s.tags for s in dev]))
        emb = base.embeddings
        self.q_network_ = None
        if self.strategy == "no_sl":
            self.result_ = run_no_sl(init, dev, pool, cfg, base, test)
        elif self.strategy == "rd":
            self.result_ = run_rd(init, dev, pool, cfg, base, test)
        elif self.strategy == "tsl":
            self.result_ = run_tsl(init, dev, pool, cfg, base, test)
        else:
            net = self.q_network
            if net is None:
                self.episode_log_ = []
                net = train_dqn(pool, dev, init, cfg, base, emb, log=self.episode_log_)
            self.q_network_ = net
            self.result_ = run_dqn_selftrain(net, init, dev, pool, cfg, base, emb, test)
        self.tagger_ = self.result_.tagger
        return self

    def predict(self, X):
        check_is_fitted(self, "tagger_")
        return self.tagger_.predict(X)

    def score(self, X, y):
        check_is_fitted(self, "tagger_")
        return self.tagger_.score(X, y)


def selection_report(result, reference_tags):
    """Final scores and what the strategy selected.

    ``entity_fraction`` is the share of accepted sentences whose gold tags
    (when known, else predicted tags) contain an entity span;
    ``kl_to_reference`` compares the entity-type distribution of the
    accepted predicted tags with that of ``reference_tags``.
    """
    sel = result.selected
    tagged = [rec["tags"] for rec in sel]
    gold = [rec["gold"] if rec["gold"] is not None else rec["tags"] for rec in sel]
    dist = tag_distribution(tagged)
    return {
        "final_dev": result.final_dev,
        "final_test": result.final_test,
        "accepted": len(sel),
        "steps": result.curve[-1].step,
        "entity_fraction": float(np.mean([bool(bio_spans(g)) for g in gold])) if sel else None,
        "tag_distribution": dist,
        "kl_to_reference": kl_divergence(dist, tag_distribution(reference_tags)),
    }
