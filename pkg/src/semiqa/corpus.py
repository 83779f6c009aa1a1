"""Tokenization, vocabulary, dataset ingestion, splits, and domain tags.

Token spans are 1-based inclusive throughout: an answer (j, k) covers
paragraph tokens p_j..p_k with 1 <= j <= k <= T.
"""

import json
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

log = logging.getLogger(__name__)


class CorpusError(Exception):
    """Malformed input data or an invalid dataset operation."""


# Reserved vocabulary ids, stable across save/load.
PAD_ID, UNK_ID, EOS_ID, D_TRUE_ID, D_GEN_ID = 0, 1, 2, 3, 4
PAD, UNK, EOS = "<pad>", "<unk>", "<eos>"
D_TRUE_TOKEN, D_GEN_TOKEN = "<d_true>", "<d_gen>"
RESERVED = [PAD, UNK, EOS, D_TRUE_TOKEN, D_GEN_TOKEN]


class DomainTag(Enum):
    D_TRUE = "d_true"
    D_GEN = "d_gen"

    @property
    def token(self):
        return D_TRUE_TOKEN if self is DomainTag.D_TRUE else D_GEN_TOKEN

    @property
    def token_id(self):
        return D_TRUE_ID if self is DomainTag.D_TRUE else D_GEN_ID


_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_DIGIT_RE = re.compile(r"\d")


def normalize_token(tok):
    """Lowercase and mask every decimal digit to '0', without splitting."""
    return _DIGIT_RE.sub("0", tok.lower())


def tokenize(text):
    """Lowercased tokens; punctuation split off; digits masked to '0'."""
    return [normalize_token(m.group()) for m in _TOKEN_RE.finditer(text)]


def tokenize_with_offsets(text):
    """Tokens plus their (start, end) character offsets in the raw text."""
    toks, spans = [], []
    for m in _TOKEN_RE.finditer(text):
        toks.append(normalize_token(m.group()))
        spans.append((m.start(), m.end()))
    return toks, spans


class Vocabulary:
    """Bijective token <-> id map with a fixed reserved-id block."""

    def __init__(self, tokens=()):
        self._token_to_id = {}
        self._id_to_token = list(RESERVED)
        for i, tok in enumerate(RESERVED):
            self._token_to_id[tok] = i
        for tok in tokens:
            self.add(tok)

    @classmethod
    def build(cls, token_seqs, min_count=2):
        """Vocabulary over training sequences; tokens rarer than min_count map to UNK."""
        counts = {}
        for seq in token_seqs:
            for tok in seq:
                counts[tok] = counts.get(tok, 0) + 1
        kept = sorted(t for t, c in counts.items() if c >= min_count and t not in RESERVED)
        return cls(kept)

    def add(self, tok):
        if tok in self._token_to_id:
            return self._token_to_id[tok]
        self._token_to_id[tok] = len(self._id_to_token)
        self._id_to_token.append(tok)
        return self._token_to_id[tok]

    def id(self, tok):
        return self._token_to_id.get(tok, UNK_ID)

    def token(self, idx):
        return self._id_to_token[idx]

    def encode(self, toks):
        return [self.id(t) for t in toks]

    def __contains__(self, tok):
        return tok in self._token_to_id

    def __len__(self):
        return len(self._id_to_token)

    def to_json(self):
        return {"tokens": self._id_to_token[len(RESERVED):]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["tokens"])


@dataclass
class QAInstance:
    """One (question, answer, paragraph) triple.

    ``paragraph`` and ``question`` are token-id sequences under the bundle
    vocabulary; the parallel ``*_tokens`` lists keep surface forms for the
    copy mechanism and answer detokenization. ``span`` is 1-based inclusive.
    """
    paragraph: list
    question: list
    span: tuple
    article_id: str
    paragraph_tokens: list = field(default_factory=list)
    question_tokens: list = field(default_factory=list)
    tag: DomainTag | None = None

    def __post_init__(self):
        j, k = self.span
        t = len(self.paragraph)
        if not (1 <= j <= k <= t):
            raise CorpusError(f"invalid span ({j},{k}) for paragraph of length {t}")

    @property
    def answer_tokens(self):
        j, k = self.span
        return self.paragraph_tokens[j - 1:k]

    def answer_text(self):
        return " ".join(self.answer_tokens)


@dataclass
class UnlabeledExample:
    """A paragraph with a candidate answer span but no question."""
    paragraph: list
    span: tuple
    article_id: str
    paragraph_tokens: list = field(default_factory=list)
    answer_type: str | None = None

    def __post_init__(self):
        j, k = self.span
        if not (1 <= j <= k <= len(self.paragraph)):
            raise CorpusError(f"invalid span ({j},{k}) for paragraph of length {len(self.paragraph)}")


@dataclass
class DatasetBundle:
    """Labeled set L, unlabeled set U, and generated set U_G with one vocabulary."""
    labeled: list
    unlabeled: list
    generated: list
    vocab: Vocabulary
    labeling_rate: float | None = None

    def save(self, path):
        obj = {
            "vocab": self.vocab.to_json(),
            "labeling_rate": self.labeling_rate,
            "labeled": [_instance_to_json(x) for x in self.labeled],
            "unlabeled": [_unlabeled_to_json(x) for x in self.unlabeled],
            "generated": [_instance_to_json(x) for x in self.generated],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(obj, f)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
        vocab = Vocabulary.from_json(obj["vocab"])
        return cls(
            labeled=[_instance_from_json(x) for x in obj["labeled"]],
            unlabeled=[_unlabeled_from_json(x) for x in obj["unlabeled"]],
            generated=[_instance_from_json(x) for x in obj["generated"]],
            vocab=vocab,
            labeling_rate=obj.get("labeling_rate"),
        )


def _instance_to_json(x):
    return {
        "paragraph": x.paragraph, "question": x.question, "span": list(x.span),
        "article_id": x.article_id, "paragraph_tokens": x.paragraph_tokens,
        "question_tokens": x.question_tokens,
        "tag": x.tag.value if x.tag else None,
    }


def _instance_from_json(o):
    return QAInstance(
        paragraph=o["paragraph"], question=o["question"], span=tuple(o["span"]),
        article_id=o["article_id"], paragraph_tokens=o["paragraph_tokens"],
        question_tokens=o["question_tokens"],
        tag=DomainTag(o["tag"]) if o.get("tag") else None,
    )


def _unlabeled_to_json(x):
    return {
        "paragraph": x.paragraph, "span": list(x.span), "article_id": x.article_id,
        "paragraph_tokens": x.paragraph_tokens, "answer_type": x.answer_type,
    }


def _unlabeled_from_json(o):
    return UnlabeledExample(
        paragraph=o["paragraph"], span=tuple(o["span"]), article_id=o["article_id"],
        paragraph_tokens=o["paragraph_tokens"], answer_type=o.get("answer_type"),
    )


@dataclass
class LoadStats:
    loaded: int = 0
    skipped: int = 0


def load_squad_raw(path):
    """Parse a SQuAD v1.1-style JSON file into surface-token instances.

    Character-offset answers are aligned to 1-based token spans; instances
    whose alignment fails are dropped and counted. Returns (instances, stats)
    where each raw instance is a dict with paragraph_tokens, question_tokens,
    span, article_id.
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CorpusError(f"cannot read dataset {path}: {e}") from e

    out, stats = [], LoadStats()
    try:
        articles = data["data"]
    except (TypeError, KeyError) as e:
        raise CorpusError(f"{path}: missing top-level 'data' list") from e
    for art in articles:
        title = art.get("title", "untitled")
        for para in art.get("paragraphs", []):
            context = para["context"]
            toks, offs = tokenize_with_offsets(context)
            if not toks:
                continue
            for qa in para.get("qas", []):
                question = tokenize(qa["question"])
                ans = qa["answers"][0] if qa.get("answers") else None
                if ans is None or not question:
                    stats.skipped += 1
                    continue
                span = align_answer(toks, offs, ans["answer_start"], ans["text"])
                if span is None:
                    stats.skipped += 1
                    log.warning("answer %r not found at offset %s in article %r",
                                ans["text"], ans["answer_start"], title)
                    continue
                out.append({
                    "paragraph_tokens": toks, "question_tokens": question,
                    "span": span, "article_id": title,
                })
                stats.loaded += 1
    return out, stats


def align_answer(tokens, offsets, answer_start, answer_text):
    """Map a character-offset answer onto a 1-based token span, or None."""
    start, end = answer_start, answer_start + len(answer_text)
    covered = [i for i, (s, e) in enumerate(offsets) if s < end and e > start]
    if not covered:
        return None
    j, k = covered[0], covered[-1]
    if tokens[j:k + 1] != tokenize(answer_text):
        return None
    return (j + 1, k + 1)


def build_bundle(raw_instances, min_count=2, vocab=None, labeling_rate=None):
    """Encode raw surface instances into a DatasetBundle.L under one vocabulary."""
    if vocab is None:
        seqs = [r["paragraph_tokens"] for r in raw_instances]
        seqs += [r["question_tokens"] for r in raw_instances]
        vocab = Vocabulary.build(seqs, min_count=min_count)
    labeled = [
        QAInstance(
            paragraph=vocab.encode(r["paragraph_tokens"]),
            question=vocab.encode(r["question_tokens"]),
            span=tuple(r["span"]),
            article_id=r["article_id"],
            paragraph_tokens=list(r["paragraph_tokens"]),
            question_tokens=list(r["question_tokens"]),
        )
        for r in raw_instances
    ]
    return DatasetBundle(labeled=labeled, unlabeled=[], generated=[], vocab=vocab,
                         labeling_rate=labeling_rate)


def load_labeled(path, min_count=2, vocab=None):
    """SQuAD-style JSON -> (DatasetBundle with L populated, LoadStats)."""
    raw, stats = load_squad_raw(path)
    return build_bundle(raw, min_count=min_count, vocab=vocab), stats


def load_unlabeled(path, vocab):
    """JSON-lines unlabeled corpus -> list of UnlabeledExample.

    Record schema: {"article_id", "tokens": [...], "answers": [{"start",
    "end", "type"}]} with 1-based inclusive spans.
    """
    out = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                toks = rec["tokens"]
                for ans in rec["answers"]:
                    out.append(UnlabeledExample(
                        paragraph=vocab.encode(toks),
                        span=(ans["start"], ans["end"]),
                        article_id=rec["article_id"],
                        paragraph_tokens=list(toks),
                        answer_type=ans.get("type"),
                    ))
            except (KeyError, TypeError, json.JSONDecodeError, CorpusError) as e:
                raise CorpusError(f"{path}:{ln}: bad unlabeled record: {e}") from e
    return out


def split_by_article(instances, rate, seed=0):
    """Article-disjoint split targeting rate * len(instances) on the first side.

    Articles are shuffled by seed and greedily assigned to the selected side
    while that keeps its size closer to the target. Returns (selected, rest).
    """
    if not (0.0 < rate <= 0.9):
        raise CorpusError(f"labeling rate {rate} outside (0, 0.9]; 10% of the "
                          "labeled data is reserved for the test split")
    by_article = {}
    for inst in instances:
        by_article.setdefault(inst.article_id, []).append(inst)
    articles = sorted(by_article)
    rng = np.random.default_rng(seed)
    rng.shuffle(articles)

    target = rate * len(instances)
    selected, rest, size = [], [], 0
    for art in articles:
        group = by_article[art]
        if abs(size + len(group) - target) < abs(size - target):
            selected.extend(group)
            size += len(group)
        else:
            rest.extend(group)
    return selected, rest


def append_domain_tag(instance, tag):
    """Append the tag token to the end of both question and paragraph.

    The answer span is unchanged; original lengths are recoverable by
    dropping the final token. Tagging an already tagged instance is an error.
    """
    if instance.tag is not None:
        raise CorpusError("instance already carries a domain tag")
    return replace(
        instance,
        paragraph=instance.paragraph + [tag.token_id],
        question=instance.question + [tag.token_id],
        paragraph_tokens=instance.paragraph_tokens + [tag.token],
        question_tokens=instance.question_tokens + [tag.token],
        tag=tag,
    )


def context_question(paragraph, span, window=5):
    """Window of tokens around the answer: (p_{j-W}..p_{j-1}, p_{k+1}..p_{k+W}).

    Works on any token list (ids or surface); clipped at the boundaries, so
    the result has at most 2 * window elements.
    """
    if window < 1:
        raise CorpusError("window must be >= 1")
    j, k = span
    left = paragraph[max(0, j - 1 - window):j - 1]
    right = paragraph[k:k + window]
    return list(left) + list(right)


def load_embeddings(path, vocab, dim):
    """Optional plain-text embedding file: token then dim decimals per line.

    Returns (matrix len(vocab) x dim, hit count). Rows for tokens absent from
    the file are zero; callers overlay their own init for those.
    """
    mat = np.zeros((len(vocab), dim))
    hits = 0
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise CorpusError(f"{path}:{ln}: expected token + {dim} values")
            tok = parts[0]
            if tok in vocab:
                mat[vocab.id(tok)] = [float(v) for v in parts[1:]]
                hits += 1
    return mat, hits
