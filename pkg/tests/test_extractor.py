"""Answer extraction: chunking, NER merging, subsampling, pipeline."""

import collections
import json

import pytest
from hypothesis import given, settings, strategies as st

from semiqa.extractor import (
    ANSWER_TYPES, AnswerCandidate, ExtractError, Grammar, Rule,
    TaggedParagraph, chunk_phrases, compile_pattern, extract_corpus,
    load_grammar, ner_merge, read_tagged, subsample_answers,
    validate_distribution, write_unlabeled,
)
from semiqa.utils import resolve_threads, stable_seed

GRAMMAR = load_grammar()


def _para(pos, ner=None, tokens=None, article="a1"):
    n = len(pos)
    return TaggedParagraph(tokens or [f"w{i}" for i in range(n)],
                           list(pos), ner or ["O"] * n, article)


def _only_rule(answer_type):
    rules = [r for r in GRAMMAR.rules if r.answer_type == answer_type]
    return Grammar(GRAMMAR.pos_tags, rules, GRAMMAR.ner_map,
                   GRAMMAR.ner_labels, GRAMMAR.type_distribution)


def test_grammar_file_is_consistent():
    assert GRAMMAR.pos_tags and GRAMMAR.rules
    assert set(GRAMMAR.type_distribution) == set(ANSWER_TYPES)
    assert abs(sum(GRAMMAR.type_distribution.values()) - 1.0) < 1e-9
    assert set(GRAMMAR.ner_map.values()) <= set(ANSWER_TYPES)
    assert GRAMMAR.ner_map["Money"] == "Other Numeric"
    assert GRAMMAR.ner_map["Percent"] == "Other Numeric"
    assert GRAMMAR.ner_map["Organization"] == "Other Entity"
    assert GRAMMAR.ner_map["Time"] == "Date"


def test_single_np_rule():
    out = chunk_phrases(_para(["DT", "JJ", "NN"]), _only_rule("Common Noun Phrase"))
    assert out == [AnswerCandidate((1, 3), "Common Noun Phrase")]


def test_single_vp_rule():
    out = chunk_phrases(_para(["VBZ", "VBN"]), _only_rule("Verb Phrase"))
    assert out == [AnswerCandidate((1, 2), "Verb Phrase")]


def test_unknown_pos_label_is_named():
    with pytest.raises(ExtractError, match="XX"):
        chunk_phrases(_para(["NN", "XX"]), GRAMMAR)


def test_prefix_matches_whole_tags_only():
    # WDT must not be eaten by the DT element, NNP must extend NN
    out = chunk_phrases(_para(["WDT", "NNP"]), _only_rule("Common Noun Phrase"))
    assert out == [AnswerCandidate((2, 2), "Common Noun Phrase")]


def test_crossing_match_is_rejected_nested_is_kept():
    rules = [Rule("Other", "NN VB", compile_pattern("NN VB")),
             Rule("Other Entity", "VB NN", compile_pattern("VB NN")),
             Rule("Clause", "NN VB NN", compile_pattern("NN VB NN"))]
    g = Grammar(GRAMMAR.pos_tags, rules, GRAMMAR.ner_map,
                GRAMMAR.ner_labels, GRAMMAR.type_distribution)
    out = chunk_phrases(_para(["NN", "VB", "NN"]), g)
    # (2,3) crosses accepted (1,2); (1,3) contains it and stays
    assert out == [AnswerCandidate((1, 2), "Other"),
                   AnswerCandidate((1, 3), "Clause")]


# 50-token sentence, spans derived by hand-running each pattern in rule
# order (greedy left-to-right, crossing rejected against accepted spans):
#   1 DT   2 JJ   3 NN   4 VBZ  5 IN   6 DT   7 JJ   8 NN   9 .   10 PRP
#  11 MD  12 VB  13 RB  14 JJ  15 ,   16 WDT 17 VBZ 18 DT  19 NN  20 .
#  21 NNP 22 VBD 23 JJ  24 IN  25 CD  26 ,   27 CC  28 PRP 29 VBD 30 IN
#  31 DT  32 NN  33 NN  34 .   35 WP  36 MD  37 VB  38 .   39 RB  40 JJ
#  41 NNS 42 VBP 43 RB  44 .   45 EX  46 VBZ 47 DT  48 JJ  49 NN  50 .
# Noun-phrase pass: (1,3) (6,8) (18,19) (21,21) (31,33) (40,41) (47,49).
# Verb pass: (4,4) (11,12) (17,17) (22,22) (29,29) (36,37) (42,42) (46,46).
# Adjective pass: (2,2) (7,7) nested in accepted spans, (13,14), (23,23),
#   (39,40) REJECTED (crosses accepted (40,41)), (48,48).
# Clause pass: (16,17) and (35,37); anchors at 5, 24, 30 find no verb.
FIFTY_POS = ("DT JJ NN VBZ IN DT JJ NN . PRP MD VB RB JJ , WDT VBZ DT NN . "
             "NNP VBD JJ IN CD , CC PRP VBD IN DT NN NN . WP MD VB . RB JJ "
             "NNS VBP RB . EX VBZ DT JJ NN .").split()


def test_fifty_token_hand_simulation():
    assert len(FIFTY_POS) == 50
    out = chunk_phrases(_para(FIFTY_POS), GRAMMAR)
    by_type = collections.defaultdict(list)
    for cand in out:
        by_type[cand.answer_type].append(cand.span)
    assert by_type["Common Noun Phrase"] == [
        (1, 3), (6, 8), (18, 19), (21, 21), (31, 33), (40, 41), (47, 49)]
    assert by_type["Verb Phrase"] == [
        (4, 4), (11, 12), (17, 17), (22, 22), (29, 29), (36, 37), (42, 42), (46, 46)]
    assert by_type["Adjective Phrase"] == [(2, 2), (7, 7), (13, 14), (23, 23), (48, 48)]
    assert by_type["Clause"] == [(16, 17), (35, 37)]
    assert len(out) == 22


def test_ner_money_run():
    out = ner_merge(_para(["NN"] * 4, ner=["O", "Money", "Money", "O"]), GRAMMAR)
    assert out == [AnswerCandidate((2, 3), "Other Numeric")]


def test_ner_organization_run():
    out = ner_merge(_para(["NN"] * 2, ner=["Organization", "Organization"]), GRAMMAR)
    assert out == [AnswerCandidate((1, 2), "Other Entity")]


def test_ner_all_o_empty():
    assert ner_merge(_para(["NN"] * 3), GRAMMAR) == []


def test_ner_adjacent_distinct_labels_stay_separate():
    out = ner_merge(_para(["NN"] * 3, ner=["Money", "Percent", "Time"]), GRAMMAR)
    assert out == [AnswerCandidate((1, 1), "Other Numeric"),
                   AnswerCandidate((2, 2), "Other Numeric"),
                   AnswerCandidate((3, 3), "Date")]


def test_ner_unknown_label():
    with pytest.raises(ExtractError, match="Misc"):
        ner_merge(_para(["NN"], ner=["Misc"]), GRAMMAR)


POS_TAG_LIST = sorted(GRAMMAR.pos_tags)
NER_LABEL_LIST = sorted(GRAMMAR.ner_labels)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(POS_TAG_LIST), min_size=1, max_size=25))
def test_chunk_spans_valid_and_noncrossing(pos):
    out = chunk_phrases(_para(pos), GRAMMAR)
    spans = [c.span for c in out]
    for j, k in spans:
        assert 1 <= j <= k <= len(pos)
    for a in spans:
        for b in spans:
            if a is not b:
                overlap = a[0] <= b[1] and b[0] <= a[1]
                nested = ((a[0] >= b[0] and a[1] <= b[1])
                          or (b[0] >= a[0] and b[1] <= a[1]))
                assert not overlap or nested


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(NER_LABEL_LIST), min_size=1, max_size=25))
def test_ner_runs_maximal_and_disjoint(ner):
    out = ner_merge(_para(["NN"] * len(ner), ner=ner), GRAMMAR)
    last_end = 0
    for cand in out:
        j, k = cand.span
        assert j > last_end  # disjoint, in order
        labels = set(ner[j - 1:k])
        assert len(labels) == 1 and "O" not in labels
        if j >= 2:
            assert ner[j - 2] != ner[j - 1]  # maximal on the left
        if k < len(ner):
            assert ner[k] != ner[k - 1]  # maximal on the right
        last_end = k


def _cands(spec_pairs):
    return [AnswerCandidate((i + 1, i + 1), t)
            for i, t in enumerate(spec_pairs)]


def test_subsample_returns_all_when_fewer_than_count():
    cands = _cands(["Date", "Person", "Clause"])
    out = subsample_answers(cands, GRAMMAR.type_distribution, count=5, seed=1)
    assert sorted(out, key=lambda c: c.span) == cands


def test_subsample_degenerate_distribution_prefers_type_until_exhausted():
    cands = _cands(["Date", "Date", "Person", "Person"])
    dist = {t: 0.0 for t in ANSWER_TYPES}
    dist["Date"] = 1.0
    out = subsample_answers(cands, dist, count=4, seed=9)
    assert [c.answer_type for c in out[:2]] == ["Date", "Date"]
    assert [c.answer_type for c in out[2:]] == ["Person", "Person"]


def test_subsample_never_duplicates_and_respects_count():
    cands = _cands(["Person"] * 7 + ["Date"] * 7)
    for seed in range(8):
        out = subsample_answers(cands, GRAMMAR.type_distribution, count=5, seed=seed)
        assert len(out) == 5
        assert len(set(out)) == 5


def test_subsample_deterministic_and_order_insensitive():
    cands = _cands(["Person", "Date", "Clause", "Date", "Person", "Other"])
    a = subsample_answers(cands, GRAMMAR.type_distribution, count=3, seed=42)
    b = subsample_answers(list(reversed(cands)), GRAMMAR.type_distribution,
                          count=3, seed=42)
    assert a == b


def test_subsample_rejects_bad_distribution():
    with pytest.raises(ExtractError):
        subsample_answers(_cands(["Date"]), {"Date": 0.5}, count=1, seed=0)
    with pytest.raises(ExtractError):
        validate_distribution({"Date": 1.5, "Person": -0.5})
    with pytest.raises(ExtractError):
        subsample_answers(_cands(["Date"]), GRAMMAR.type_distribution, count=0)


def test_subsample_type_frequencies_track_target():
    # 20k paragraphs, 5 candidates of every type each: no type exhausts
    # often, so selected-type frequencies approach the target distribution
    base = []
    for t in ANSWER_TYPES:
        base.extend(AnswerCandidate((i + 1, i + 1), t) for i in range(5))
    counts = collections.Counter()
    n_paragraphs = 20_000
    for p in range(n_paragraphs):
        for c in subsample_answers(base, GRAMMAR.type_distribution, count=5, seed=p):
            counts[c.answer_type] += 1
    total = sum(counts.values())
    assert total == 5 * n_paragraphs
    for t in ANSWER_TYPES:
        assert abs(counts[t] / total - GRAMMAR.type_distribution[t]) < 0.02


TSV = """\
# article:art1
The\tDT\tO
bridge\tNN\tO
opened\tVBD\tO
in\tIN\tO
1976\tCD\tDate
.\t.\tO

It\tPRP\tO
cost\tVBD\tO
5\tCD\tMoney
dollars\tNNS\tMoney
.\t.\tO
# article:art2
Nice\tJJ\tO
days\tNNS\tO
.\t.\tO
"""


def test_read_tagged_parses_articles_and_normalizes(tmp_path):
    p = tmp_path / "in.tsv"
    p.write_text(TSV)
    paras = read_tagged(p)
    assert [q.article_id for q in paras] == ["art1", "art1", "art2"]
    assert paras[0].tokens == ["the", "bridge", "opened", "in", "0000", "."]
    assert paras[1].ner[2] == "Money"
    assert paras[2].tokens == ["nice", "days", "."]


def test_read_tagged_bad_line_number(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("ok\tNN\tO\nbroken line\n")
    with pytest.raises(ExtractError, match=r"bad\.tsv:2"):
        read_tagged(p)


def test_extract_corpus_filters_long_paragraphs():
    long_para = _para(["NN"] * 900)
    short_para = _para(["DT", "NN"], article="a2")
    records, stats = extract_corpus([long_para, short_para], GRAMMAR, seed=3)
    assert stats.paragraphs_read == 2
    assert stats.paragraphs_filtered == 1
    assert stats.paragraphs_emitted == 1
    assert len(records) == 1
    assert records[0]["article_id"] == "a2"
    assert records[0]["answers"][0]["type"] == "Common Noun Phrase"
    assert stats.type_counts["Common Noun Phrase"] == 1


def test_extract_corpus_boundary_849_kept_850_dropped():
    keep = _para(["NN"] * 849, article="k")
    drop = _para(["NN"] * 850, article="d")
    records, stats = extract_corpus([keep, drop], GRAMMAR)
    assert stats.paragraphs_filtered == 1
    assert [r["article_id"] for r in records] == ["k"]


def test_extract_corpus_empty_stream_zeroed_report():
    records, stats = extract_corpus([], GRAMMAR)
    assert records == []
    assert stats.paragraphs_read == 0 and stats.answers_emitted == 0
    assert all(v == 0 for v in stats.type_counts.values())


def _fixture_paragraphs(n=30):
    out = []
    for i in range(n):
        pos = ["DT", "JJ", "NN", "VBZ", "IN", "DT", "NN"] * 2
        ner = ["O"] * 10 + ["Person", "Person", "O", "O"]
        out.append(TaggedParagraph([f"w{j}" for j in range(14)], pos, ner,
                                   f"art{i % 5}"))
    return out


def test_extract_corpus_deterministic_replay():
    a = extract_corpus(_fixture_paragraphs(), GRAMMAR, seed=7)
    b = extract_corpus(_fixture_paragraphs(), GRAMMAR, seed=7)
    assert a[0] == b[0]
    assert a[1].to_json() == b[1].to_json()


def test_extract_corpus_threaded_matches_sequential(monkeypatch):
    seq = extract_corpus(_fixture_paragraphs(), GRAMMAR, seed=7, threads=1)
    monkeypatch.setenv("GDAN_THREADS", "4")
    par = extract_corpus(_fixture_paragraphs(), GRAMMAR, seed=7, threads=4)
    assert seq[0] == par[0]


def test_resolve_threads_env_cap(monkeypatch):
    monkeypatch.setenv("GDAN_THREADS", "2")
    assert resolve_threads(8) == 2
    assert resolve_threads() == 2
    monkeypatch.delenv("GDAN_THREADS")
    assert resolve_threads() == 1
    assert resolve_threads(3) == 3


def test_stable_seed_distinguishes_inputs():
    s = {stable_seed(0, "a", 0), stable_seed(0, "a", 1),
         stable_seed(0, "b", 0), stable_seed(1, "a", 0)}
    assert len(s) == 4
    assert stable_seed(0, "a", 0) == stable_seed(0, "a", 0)


def test_write_unlabeled_roundtrips_through_loader(tmp_path):
    records, _ = extract_corpus(_fixture_paragraphs(5), GRAMMAR, seed=1)
    path = tmp_path / "u.jsonl"
    write_unlabeled(records, path)
    from semiqa.corpus import Vocabulary, load_unlabeled
    vocab = Vocabulary([f"w{j}" for j in range(14)])
    examples = load_unlabeled(path, vocab)
    assert examples
    assert all(1 <= e.span[0] <= e.span[1] <= 14 for e in examples)
    lines = path.read_text().strip().split("\n")
    assert all(json.loads(x)["article_id"].startswith("art") for x in lines)
