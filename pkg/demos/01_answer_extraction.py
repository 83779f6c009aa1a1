"""Walk three POS/NER-tagged paragraphs through answer extraction.

Candidates come from two sources: grammar-rule phrase chunking over POS
tags, and merging of adjacent NER labels into typed runs. A type-balanced
subsample (at most five per paragraph) becomes the unlabeled corpus.
"""

import json
import tempfile
from pathlib import Path

from semiqa.extractor import (
    TaggedParagraph, chunk_phrases, extract_corpus, load_grammar, ner_merge,
    subsample_answers, write_unlabeled,
)

grammar = load_grammar()

bridge = TaggedParagraph(
    tokens="the old bridge opened in 0000 and cost 00 dollars .".split(),
    pos="DT JJ NN VBD IN CD CC VBD CD NNS .".split(),
    ner=["O", "O", "O", "O", "O", "Date", "O", "O", "Money", "Money", "O"],
    article_id="bridge")

court = TaggedParagraph(
    tokens="the supreme court ruled quickly , which surprised everyone .".split(),
    pos="DT NNP NNP VBD RB , WDT VBD NN .".split(),
    ner=["O", "Organization", "Organization", "O", "O", "O", "O", "O", "O", "O"],
    article_id="court")

print("== phrase chunking (POS grammar rules) ==")
for cand in chunk_phrases(bridge, grammar):
    j, k = cand.span
    print(f"  {cand.answer_type:<20} {' '.join(bridge.tokens[j - 1:k])!r}")

print("\n== NER run merging ==")
for para in (bridge, court):
    for cand in ner_merge(para, grammar):
        j, k = cand.span
        print(f"  {cand.answer_type:<20} {' '.join(para.tokens[j - 1:k])!r}")

# a paragraph can easily produce a dozen candidates; the subsample keeps
# five, preferring types that are rare relative to the target distribution
cands = chunk_phrases(bridge, grammar) + ner_merge(bridge, grammar)
kept = subsample_answers(cands, grammar.type_distribution, count=5, seed=0)
print(f"\n== subsample: {len(cands)} candidates -> {len(kept)} kept ==")
for cand in kept:
    print(f"  {cand.span} {cand.answer_type}")

print("\n== full pipeline to JSONL ==")
records, stats = extract_corpus([bridge, court], grammar, seed=0)
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "unlabeled.jsonl"
    write_unlabeled(records, out)
    for line in out.read_text().splitlines():
        rec = json.loads(line)
        print(f"  {rec['article_id']}: {len(rec['answers'])} answers")
print(f"paragraphs read={stats.paragraphs_read} "
      f"answers emitted={stats.answers_emitted}")
