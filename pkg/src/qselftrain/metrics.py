"""Entity-span F1, token accuracy, learning curves and tag distributions."""

import csv
import math
from collections import Counter, namedtuple

from .exceptions import RejectedInputError

PRF = namedtuple("PRF", "precision recall f1")

CURVE_COLUMNS = ("step", "accepted_count", "dev_metric", "test_metric", "confidence", "action")


def bio_spans(tags):
    """Extract ``(start, end, type)`` spans, ``end`` exclusive.

    An ``I-X`` that does not continue an open ``X`` span starts a new one, as
    conlleval does.
    """
    spans = []
    start, etype = None, None
    for i, tag in enumerate(list(tags) + ["O"]):
        prefix, _, kind = tag.partition("-")
        continues = prefix == "I" and start is not None and kind == etype
        if start is not None and not continues:
            spans.append((start, i, etype))
            start, etype = None, None
        if prefix == "B" or (prefix == "I" and not continues):
            start, etype = i, kind
    return spans


def _prf(tp, n_pred, n_gold):
    if n_pred == 0 and n_gold == 0:
        return PRF(1.0, 1.0, 1.0)
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


def entity_f1(gold, pred):
    """Exact-match span scores per entity type plus ``"micro"``.

    ``gold`` and ``pred`` are parallel lists of tag sequences. When neither
    side has any span the scores are all 1.
    """
    gold, pred = list(gold), list(pred)
    if len(gold) != len(pred):
        raise RejectedInputError(f"{len(gold)} gold vs {len(pred)} predicted sequences")
    tp, n_gold, n_pred = Counter(), Counter(), Counter()
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise RejectedInputError("gold and predicted sequence lengths differ")
        gs, ps = set(bio_spans(g)), set(bio_spans(p))
        for span in gs:
            n_gold[span[2]] += 1
        for span in ps:
            n_pred[span[2]] += 1
            if span in gs:
                tp[span[2]] += 1
    scores = {t: _prf(tp[t], n_pred[t], n_gold[t]) for t in sorted(set(n_gold) | set(n_pred))}
    scores["micro"] = _prf(sum(tp.values()), sum(n_pred.values()), sum(n_gold.values()))
    return scores


def micro_f1(gold, pred):
    return entity_f1(gold, pred)["micro"].f1


def micro_f1_spans(gold_spans, pred):
    """``micro_f1`` against gold given as precomputed span sets, one per sentence."""
    if len(gold_spans) != len(pred):
        raise RejectedInputError(f"{len(gold_spans)} gold vs {len(pred)} predicted sequences")
    tp = n_pred = 0
    for gs, p in zip(gold_spans, pred):
        ps = set(bio_spans(p))
        n_pred += len(ps)
        tp += len(ps & gs)
    return _prf(tp, n_pred, sum(len(gs) for gs in gold_spans)).f1


def token_accuracy(gold, pred):
    gold, pred = list(gold), list(pred)
    if len(gold) != len(pred):
        raise RejectedInputError("sequence counts differ")
    total = hits = 0
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise RejectedInputError("gold and predicted sequence lengths differ")
        total += len(g)
        hits += sum(a == b for a, b in zip(g, p))
    if total == 0:
        raise RejectedInputError("no tokens to score")
    return hits / total


def tag_distribution(tagged):
    """Relative frequency of entity types over all spans in ``tagged``.

    Returns an empty dict when there are no spans.
    """
    counts = Counter(span[2] for tags in tagged for span in bio_spans(tags))
    total = sum(counts.values())
    return {t: c / total for t, c in sorted(counts.items())} if total else {}


def kl_divergence(dist, reference, smoothing=1e-9):
    """KL(dist || reference) after adding ``smoothing`` to every type."""
    types = sorted(set(dist) | set(reference))
    if not types:
        return 0.0
    p = [dist.get(t, 0.0) + smoothing for t in types]
    q = [reference.get(t, 0.0) + smoothing for t in types]
    zp, zq = sum(p), sum(q)
    return max(0.0, sum(pi / zp * math.log((pi / zp) / (qi / zq)) for pi, qi in zip(p, q)))


CurvePoint = namedtuple(
    "CurvePoint", "step accepted dev_score test_score confidence action",
    defaults=(None, None),
)


class LearningCurve:
    """Append-only sequence of evaluation points with increasing steps."""

    def __init__(self):
        self.points = []

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def record(self, step, accepted, dev, test, confidence=None, action=None):
        if self.points and step <= self.points[-1].step:
            raise RejectedInputError(
                f"step {step} does not follow last step {self.points[-1].step}"
            )
        self.points.append(CurvePoint(step, accepted, dev, test, confidence, action))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_COLUMNS)
            for p in self.points:
                w.writerow([p.step, p.accepted, _fmt(p.dev_score), _fmt(p.test_score),
                            _fmt(p.confidence), "" if p.action is None else p.action])

    @classmethod
    def from_csv(cls, path):
        curve = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                curve.record(int(row["step"]), int(row["accepted_count"]),
                             _parse(row["dev_metric"]), _parse(row["test_metric"]),
                             _parse(row["confidence"]),
                             int(row["action"]) if row["action"] else None)
        return curve


def record(curve, step, accepted, dev, test):
    curve.record(step, accepted, dev, test)


def _fmt(x):
    return "" if x is None else repr(float(x))


def _parse(s):
    return float(s) if s else None
