"""Metrics, evaluation loop, and the comparison harness."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiqa.corpus import Vocabulary
from semiqa.evaluator import (
    EvalError, MetricsReport, ReportRow, compare_methods, evaluate, f1_em,
    f1_em_max, normalize_answer, strip_labels,
)
from semiqa.numerics import GradTape, neg
from semiqa.reader import Reader
from semiqa.trainer import TrainConfig

from _synth import synth_splits

_text = st.text(alphabet=st.characters(codec="ascii"), max_size=40)


def test_normalize_examples():
    assert normalize_answer("The Answer!") == "answer"
    assert normalize_answer("") == ""
    assert normalize_answer("a  U.S.   base") == "us base"


@settings(max_examples=300, deadline=None)
@given(_text)
def test_normalize_idempotent(s):
    once = normalize_answer(s)
    assert normalize_answer(once) == once


def test_f1_em_identical():
    assert f1_em("same words here", "same words here") == (1.0, 1.0)


def test_f1_em_hand_case():
    f1, em = f1_em("the cat", "cat sat")
    assert abs(f1 - 2 / 3) < 1e-12
    assert em == 0.0


def test_f1_em_disjoint():
    assert f1_em("alpha beta", "gamma delta") == (0.0, 0.0)


def test_f1_em_both_empty_after_normalization():
    assert f1_em("the", "an") == (1.0, 1.0)


def test_f1_em_multiplicity():
    # "cat cat" vs "cat": overlap counts each token at most min multiplicity
    f1, em = f1_em("cat cat", "cat")
    assert abs(f1 - 2 * (1 / 2) * 1 / (1 / 2 + 1)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(_text, _text)
def test_f1_em_symmetric(a, b):
    f_ab, em_ab = f1_em(a, b)
    f_ba, em_ba = f1_em(b, a)
    assert abs(f_ab - f_ba) < 1e-12
    assert em_ab == em_ba


@settings(max_examples=200, deadline=None)
@given(_text, _text)
def test_f1_at_least_em(a, b):
    f1, em = f1_em(a, b)
    assert 0.0 <= em <= f1 <= 1.0 + 1e-12


def test_f1_em_max_over_golds():
    f1, em = f1_em_max("cat", ["dog", "the cat"])
    assert (f1, em) == (1.0, 1.0)
    with pytest.raises(EvalError):
        f1_em_max("cat", [])


def _memorize(reader, instances, steps=400, lr=0.5):
    for _ in range(steps):
        with GradTape() as tape:
            loss = neg(reader.d_loss(instances))
            reader.store.zero_grad()
            tape.backward(loss)
        reader.store.sgd_step(lr)
        if math.exp(-loss.item()) > 0.9:
            break
    return reader


def test_evaluate_memorized_reader_is_perfect():
    train, dev, test, vocab = synth_splits(seed=3, n_train=3, n_dev=1, n_test=1)
    reader = Reader(vocab_size=len(vocab), embed_dim=8, hidden_dim=8,
                    layers=1, seed=0)
    _memorize(reader, train)
    f1, em = evaluate(reader, train)
    assert (f1, em) == (1.0, 1.0)


def test_evaluate_untrained_reader_bounds():
    train, dev, test, vocab = synth_splits(seed=4, n_train=8, n_dev=1, n_test=1)
    reader = Reader(vocab_size=len(vocab), embed_dim=6, hidden_dim=6,
                    layers=1, seed=1)
    f1, em = evaluate(reader, train)
    assert 0.0 <= em <= f1 <= 1.0
    assert evaluate(reader, train) == (f1, em)  # deterministic
    with pytest.raises(EvalError):
        evaluate(reader, [])


def test_report_roundtrip_and_render_order():
    rows = [ReportRow(rate=0.1, u_size=50, method="gen+domain+adv",
                      dev_f1=0.5, test_f1=0.4, test_em=0.3),
            ReportRow(rate=0.1, u_size=50, method="sl",
                      dev_f1=0.3, test_f1=0.2, test_em=0.1),
            ReportRow(rate=0.1, u_size=50, method="context",
                      error="TrainerError: boom")]
    report = MetricsReport(rows=rows)
    again = MetricsReport.from_json(report.to_json())
    assert [vars(r) for r in again.rows] == [vars(r) for r in rows]
    text = report.render()
    lines = [ln for ln in text.splitlines() if not ln.startswith(("method", "-"))]
    assert lines[0].startswith("sl")
    assert lines[1].startswith("context") and "failed" in lines[1]
    assert lines[2].startswith("gen+domain+adv")
    for r in again.rows:
        if r.error is None:
            assert 0.0 <= r.test_em <= r.test_f1 <= 1.0


def _tiny_config(**kw):
    args = dict(method="sl", labeling_rate=0.5, t_d=8, t_g=4, lr_d=0.3,
                lr_g=0.05, pretrain_epochs=2, batch_size=8, patience=2,
                max_outer_iters=2, layers=1, hidden_dim=8, embed_dim=6,
                gen_hidden_dim=8, gen_embed_dim=6, gen_max_len=10, window=3)
    args.update(kw)
    return TrainConfig(**args)


def test_compare_single_cell_and_failure_recording():
    train, dev, test, vocab = synth_splits(seed=5, n_train=40, n_dev=6,
                                           n_test=6)
    grid = [(0.5, 0, "sl"), (0.5, 0, "nonsense-method")]
    report = compare_methods(train, dev, test, grid, _tiny_config(), vocab,
                             seed=9)
    assert len(report.rows) == 2
    ok, bad = report.rows
    assert ok.error is None
    assert 0.0 <= ok.test_em <= ok.test_f1 <= 1.0
    assert ok.dev_f1 is not None
    assert bad.error is not None and "nonsense-method" in bad.error


def test_compare_uses_paired_splits():
    train, dev, test, vocab = synth_splits(seed=6, n_train=40, n_dev=6,
                                           n_test=6)
    grid = [(0.5, 0, "sl"), (0.5, 0, "context")]
    seen = []
    report = compare_methods(train, dev, test, grid, _tiny_config(), vocab,
                             seed=1, log=lambda row: seen.append(row.u_size))
    assert seen[0] == seen[1]  # same rest-split feeds both methods
    assert all(r.error is None for r in report.rows)


def test_strip_labels_keeps_span_and_article():
    train, _, _, vocab = synth_splits(seed=7, n_train=4, n_dev=1, n_test=1)
    stripped = strip_labels(train)
    for ex, inst in zip(stripped, train):
        assert ex.span == inst.span
        assert ex.article_id == inst.article_id
        assert ex.paragraph == inst.paragraph
        assert not hasattr(ex, "question")
