"""Answer-level F1/EM metrics and the method-comparison harness.

Normalization follows the standard extractive-QA evaluation semantics:
lowercase, strip punctuation, drop the articles a/an/the, collapse
whitespace. F1 is the harmonic mean of bag-of-token precision and recall
with multiplicity; EM is exact string equality after normalization.
"""

import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field, replace

from .corpus import DomainTag, UnlabeledExample, split_by_article
from .utils import parallel_map, stable_seed

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


class EvalError(Exception):
    pass


def normalize_answer(text):
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def f1_em(prediction, gold):
    """(token F1, exact match) of two answer strings; both-empty is a match."""
    p = normalize_answer(prediction)
    g = normalize_answer(gold)
    em = 1.0 if p == g else 0.0
    p_toks, g_toks = p.split(), g.split()
    if not p_toks and not g_toks:
        return 1.0, 1.0
    common = Counter(p_toks) & Counter(g_toks)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0, em
    precision = overlap / len(p_toks)
    recall = overlap / len(g_toks)
    return 2 * precision * recall / (precision + recall), em


def f1_em_max(prediction, golds):
    """Max-over-golds variant for datasets with several reference answers."""
    if not golds:
        raise EvalError("no gold answers")
    pairs = [f1_em(prediction, g) for g in golds]
    return max(f[0] for f in pairs), max(f[1] for f in pairs)


def evaluate(reader, instances, tag=None):
    """Mean (F1, EM) of the reader's argmax spans against gold answers."""
    if not instances:
        raise EvalError("nothing to evaluate")

    def score(x):
        pred = reader.predict_span(x.paragraph, x.question, tag)
        j, k = pred.span
        text = " ".join(x.paragraph_tokens[j - 1:k])
        return f1_em(text, x.answer_text())

    pairs = parallel_map(score, instances)
    n = len(pairs)
    return (sum(p[0] for p in pairs) / n, sum(p[1] for p in pairs) / n)


@dataclass
class ReportRow:
    rate: float
    u_size: int
    method: str
    dev_f1: float | None = None
    test_f1: float | None = None
    test_em: float | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    """Per-cell results of a (rate, |U|, method) comparison grid."""
    rows: list = field(default_factory=list)

    def to_json(self):
        return {"rows": [vars(r).copy() for r in self.rows]}

    @classmethod
    def from_json(cls, obj):
        return cls(rows=[ReportRow(**r) for r in obj["rows"]])

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1)

    def render(self):
        from .trainer import METHODS
        header = f"{'method':<18} {'rate':>5} {'|U|':>7} {'dev F1':>8} {'test F1':>8} {'test EM':>8}"
        lines = [header, "-" * len(header)]
        order = {m: i for i, m in enumerate(METHODS)}
        for r in sorted(self.rows,
                        key=lambda r: (r.rate, r.u_size, order.get(r.method, 99))):
            if r.error is not None:
                lines.append(f"{r.method:<18} {r.rate:>5.2f} {r.u_size:>7} "
                             f"failed: {r.error}")
                continue
            lines.append(f"{r.method:<18} {r.rate:>5.2f} {r.u_size:>7} "
                         f"{r.dev_f1:>8.4f} {r.test_f1:>8.4f} {r.test_em:>8.4f}")
        return "\n".join(lines)


def strip_labels(instances):
    """Turn labeled instances into answer-span-only examples."""
    return [UnlabeledExample(paragraph=x.paragraph, span=x.span,
                             article_id=x.article_id,
                             paragraph_tokens=x.paragraph_tokens)
            for x in instances]


def compare_methods(train_instances, dev, test, grid, base_config, vocab,
                    seed=0, log=None):
    """Train and evaluate every (rate, u_size, method) cell of the grid.

    Splits are paired: every method at the same rate sees the identical
    labeled/unlabeled partition. Cell failures are recorded in the report
    and the remaining cells still run.
    """
    from .trainer import Trainer  # deferred: trainer uses evaluate()

    report = MetricsReport()
    splits = {}
    for rate, u_size, method in grid:
        row = ReportRow(rate=rate, u_size=u_size, method=method)
        try:
            if rate not in splits:
                splits[rate] = split_by_article(
                    train_instances, rate, seed=stable_seed(seed, "split", rate))
            labeled, rest = splits[rate]
            unlabeled = strip_labels(rest)
            if u_size:
                unlabeled = unlabeled[:u_size]
            row.u_size = len(unlabeled)
            cfg = replace(base_config, method=method, labeling_rate=rate,
                          seed=stable_seed(seed, "train", rate, method))
            trainer = Trainer(cfg, vocab, labeled, unlabeled, dev)
            result = trainer.run()
            trainer.reader.store.load_values(result.best_values)
            tag = DomainTag.D_TRUE if cfg.uses_tags else None
            f1, em = evaluate(trainer.reader, test, tag=tag)
            row.dev_f1, row.test_f1, row.test_em = result.best_dev_f1, f1, em
        except Exception as exc:  # record and keep going
            row.error = f"{type(exc).__name__}: {exc}"
        if log is not None:
            log(row)
        report.rows.append(row)
    return report
