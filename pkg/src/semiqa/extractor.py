"""Rule-based answer extraction over POS/NER-tagged paragraphs.

Turns pre-tagged text into typed candidate answer spans (phrase-pattern
chunking plus NER run merging) and subsamples them per paragraph to match a
target answer-type distribution. Tagging itself happens upstream; this layer
only consumes the standard token/POS/NER column format.
"""

import bisect
import json
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .corpus import normalize_token
from .utils import parallel_map, stable_seed

MAX_PARAGRAPH_TOKENS = 850
DEFAULT_SAMPLE_COUNT = 5

ANSWER_TYPES = (
    "Date", "Other Numeric", "Person", "Location", "Other Entity",
    "Common Noun Phrase", "Adjective Phrase", "Verb Phrase", "Clause", "Other",
)


class ExtractError(Exception):
    """Bad tagged input or an invalid extraction configuration."""


@dataclass
class TaggedParagraph:
    tokens: list
    pos: list
    ner: list
    article_id: str

    def __post_init__(self):
        if not (len(self.tokens) == len(self.pos) == len(self.ner)):
            raise ExtractError(
                f"token/pos/ner length mismatch in article {self.article_id!r}: "
                f"{len(self.tokens)}/{len(self.pos)}/{len(self.ner)}")


@dataclass(frozen=True)
class AnswerCandidate:
    span: tuple
    answer_type: str


@dataclass
class Rule:
    answer_type: str
    pattern: str
    regex: re.Pattern


@dataclass
class Grammar:
    pos_tags: frozenset
    rules: list
    ner_map: dict
    ner_labels: frozenset
    type_distribution: dict


_ELEMENT_RE = re.compile(r"(\(([A-Z$.,:#-]+(?:\|[A-Z$.,:#-]+)*)\)|[A-Z$.,:#-]+)([?*+]?)")


def _prefix_regex(prefix):
    return f"<{re.escape(prefix)}[^>]*>"


def compile_pattern(pattern):
    """POS-prefix pattern -> regex over the encoded '<TAG><TAG>...' string."""
    out, pos = [], 0
    for part in pattern.split():
        m = _ELEMENT_RE.fullmatch(part)
        if not m:
            raise ExtractError(f"bad grammar pattern element {part!r}")
        body, alts, quant = m.group(1), m.group(2), m.group(3)
        if alts:
            piece = "(?:" + "|".join(_prefix_regex(a) for a in alts.split("|")) + ")"
        else:
            piece = f"(?:{_prefix_regex(body)})"
        out.append(piece + quant)
    return re.compile("".join(out))


def load_grammar(path=None):
    """Load the rule set; defaults to the grammar data file shipped in-package."""
    if path is None:
        text = resources.files("semiqa.data").joinpath("grammar.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    try:
        obj = json.loads(text)
        rules = [Rule(r["type"], r["pattern"], compile_pattern(r["pattern"]))
                 for r in obj["rules"]]
        grammar = Grammar(
            pos_tags=frozenset(obj["pos_tags"]),
            rules=rules,
            ner_map=dict(obj["ner_map"]),
            ner_labels=frozenset(obj["ner_labels"]),
            type_distribution={k: float(v) for k, v in obj["type_distribution"].items()},
        )
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ExtractError(f"bad grammar file: {e}") from e
    for t in list(grammar.ner_map.values()) + list(grammar.type_distribution):
        if t not in ANSWER_TYPES:
            raise ExtractError(f"unknown answer type {t!r} in grammar file")
    validate_distribution(grammar.type_distribution)
    return grammar


def validate_distribution(dist):
    if any(v < 0 for v in dist.values()):
        raise ExtractError("type distribution has negative mass")
    total = sum(dist.values())
    if abs(total - 1.0) > 1e-9:
        raise ExtractError(f"type distribution sums to {total!r}, not 1")


def _crossing(a, b):
    overlap = a[0] <= b[1] and b[0] <= a[1]
    nested = (a[0] >= b[0] and a[1] <= b[1]) or (b[0] >= a[0] and b[1] <= a[1])
    return overlap and not nested


def chunk_phrases(paragraph, grammar):
    """Phrase-pattern candidates: maximal non-crossing spans, rule order wins.

    Each rule scans left to right taking greedy non-overlapping matches; a
    match is kept unless it crosses (overlaps without nesting) a span already
    accepted by an earlier rule. Spans are 1-based inclusive.
    """
    for tag in paragraph.pos:
        if tag not in grammar.pos_tags:
            raise ExtractError(f"unknown POS label {tag!r} in article "
                               f"{paragraph.article_id!r}")
    encoded_parts = [f"<{t}>" for t in paragraph.pos]
    starts = []
    off = 0
    for part in encoded_parts:
        starts.append(off)
        off += len(part)
    encoded = "".join(encoded_parts)

    accepted, out = [], []
    for rule in grammar.rules:
        for m in rule.regex.finditer(encoded):
            if m.start() == m.end():
                continue
            first = bisect.bisect_right(starts, m.start()) - 1
            last = bisect.bisect_right(starts, m.end() - 1) - 1
            span = (first + 1, last + 1)
            if any(_crossing(span, a) for a in accepted):
                continue
            accepted.append(span)
            out.append(AnswerCandidate(span, rule.answer_type))
    return out


def ner_merge(paragraph, grammar):
    """Candidates from maximal runs of identical non-O NER labels."""
    out = []
    i, n = 0, len(paragraph.ner)
    while i < n:
        label = paragraph.ner[i]
        j = i
        while j + 1 < n and paragraph.ner[j + 1] == label:
            j += 1
        if label != "O":
            if label not in grammar.ner_map:
                raise ExtractError(f"unknown NER label {label!r} in article "
                                   f"{paragraph.article_id!r}")
            out.append(AnswerCandidate((i + 1, j + 1), grammar.ner_map[label]))
        i = j + 1
    return out


def subsample_answers(candidates, distribution, count=DEFAULT_SAMPLE_COUNT, seed=0):
    """Pick up to `count` candidates without replacement.

    Each draw picks a type with probability proportional to the target
    distribution renormalized over types still present, then a uniform
    candidate within that type. If every present type has zero target mass
    the type choice falls back to uniform. Deterministic given seed.
    """
    if count < 1:
        raise ExtractError(f"sample count must be >= 1, got {count}")
    validate_distribution(distribution)
    pool = {}
    for cand in sorted(set(candidates), key=lambda c: (c.span, c.answer_type)):
        pool.setdefault(cand.answer_type, []).append(cand)
    rng = np.random.default_rng(seed)
    picked = []
    while len(picked) < count and pool:
        present = sorted(pool)
        weights = np.array([distribution.get(t, 0.0) for t in present])
        total = weights.sum()
        probs = weights / total if total > 0 else np.full(len(present), 1.0 / len(present))
        t = present[rng.choice(len(present), p=probs)]
        group = pool[t]
        picked.append(group.pop(int(rng.integers(len(group)))))
        if not group:
            del pool[t]
    return picked


_ARTICLE_RE = re.compile(r"#\s*article:\s*(\S+)")


def read_tagged(path):
    """Parse token<TAB>POS<TAB>NER lines into TaggedParagraph records.

    Paragraphs are separated by blank lines; '# article:<id>' comment lines
    set the article for subsequent paragraphs. Tokens are normalized
    (lowercased, digits masked) so output matches the corpus tokenizer.
    """
    paragraphs = []
    article = "untitled"
    toks, pos, ner = [], [], []

    def flush():
        if toks:
            paragraphs.append(TaggedParagraph(list(toks), list(pos), list(ner), article))
            toks.clear()
            pos.clear()
            ner.clear()

    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                m = _ARTICLE_RE.match(line)
                if m:
                    flush()
                    article = m.group(1)
                continue
            if not line.strip():
                flush()
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ExtractError(f"{path}:{ln}: expected token<TAB>POS<TAB>NER, "
                                   f"got {len(fields)} fields")
            toks.append(normalize_token(fields[0]))
            pos.append(fields[1])
            ner.append(fields[2])
    flush()
    return paragraphs


@dataclass
class ExtractStats:
    paragraphs_read: int = 0
    paragraphs_filtered: int = 0
    paragraphs_empty: int = 0
    paragraphs_emitted: int = 0
    answers_emitted: int = 0
    type_counts: dict = field(default_factory=lambda: {t: 0 for t in ANSWER_TYPES})

    def to_json(self):
        return {
            "paragraphs_read": self.paragraphs_read,
            "paragraphs_filtered": self.paragraphs_filtered,
            "paragraphs_empty": self.paragraphs_empty,
            "paragraphs_emitted": self.paragraphs_emitted,
            "answers_emitted": self.answers_emitted,
            "type_counts": dict(self.type_counts),
        }


def extract_corpus(paragraphs, grammar=None, distribution=None,
                   count=DEFAULT_SAMPLE_COUNT, seed=0, threads=None):
    """Full pipeline over TaggedParagraph records -> (records, stats).

    Filters paragraphs of >= 850 tokens, chunks and NER-merges the rest, and
    subsamples candidates per paragraph with a seed derived from (global
    seed, article id, per-article paragraph index), so results do not depend
    on processing order. Records use the unlabeled JSON-lines schema.
    """
    grammar = grammar or load_grammar()
    dist = distribution if distribution is not None else grammar.type_distribution
    validate_distribution(dist)

    items, next_index = [], {}
    for para in paragraphs:
        i = next_index.get(para.article_id, 0)
        next_index[para.article_id] = i + 1
        items.append((para, i))

    def work(item):
        para, index = item
        if len(para.tokens) >= MAX_PARAGRAPH_TOKENS:
            return None
        cands = chunk_phrases(para, grammar) + ner_merge(para, grammar)
        return subsample_answers(cands, dist, count,
                                 seed=stable_seed(seed, para.article_id, index))

    stats = ExtractStats()
    records = []
    for (para, _), picked in zip(items, parallel_map(work, items, threads)):
        stats.paragraphs_read += 1
        if picked is None:
            stats.paragraphs_filtered += 1
            continue
        if not picked:
            stats.paragraphs_empty += 1
            continue
        stats.paragraphs_emitted += 1
        answers = []
        for c in sorted(picked, key=lambda c: (c.span, c.answer_type)):
            stats.type_counts[c.answer_type] += 1
            stats.answers_emitted += 1
            answers.append({"start": c.span[0], "end": c.span[1], "type": c.answer_type})
        records.append({"article_id": para.article_id, "tokens": para.tokens,
                        "answers": answers})
    return records, stats


def write_unlabeled(records, path):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
