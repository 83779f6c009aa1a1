"""Templated synthetic QA corpus and closed-form REINFORCE helpers.

Paragraphs state two attribute facts about an entity; questions ask for
one of them and the answer is the single value token. Entities, attrs,
and values are alphabetic words so digit masking never merges them.
"""

import json
import string

import numpy as np

from semiqa.corpus import EOS_ID, QAInstance, Vocabulary
from semiqa.generator import Generator, ParagraphTypes
from semiqa.numerics import GradTape, pick


def _word(prefix, i):
    a, b = divmod(i, 26)
    return prefix + string.ascii_lowercase[a] + string.ascii_lowercase[b]


def synth_splits(seed=0, n_train=100, n_dev=30, n_test=30, per_article=5,
                 n_attrs=20, n_entities=30, n_values=40):
    """Generate (train, dev, test, vocab); articles are disjoint across splits."""
    rng = np.random.default_rng(seed)
    attrs = [_word("attr", i) for i in range(n_attrs)]
    entities = [_word("ent", i) for i in range(n_entities)]
    values = [_word("val", i) for i in range(n_values)]

    def make(count, art_prefix):
        out = []
        for i in range(count):
            ent = entities[int(rng.integers(n_entities))]
            a1, a2 = (attrs[int(j)] for j in
                      rng.choice(n_attrs, size=2, replace=False))
            v1, v2 = (values[int(rng.integers(n_values))] for _ in range(2))
            para = (f"the {a1} of the {ent} is {v1} . "
                    f"the {a2} of the {ent} is {v2} .").split()
            fact = int(rng.integers(2))
            attr, pos = (a1, 7) if fact == 0 else (a2, 15)
            question = f"what is the {attr} of the {ent}".split()
            out.append((para, question, (pos, pos),
                        f"{art_prefix}{i // per_article}"))
        return out

    raw = {"train": make(n_train, "tr"), "dev": make(n_dev, "dv"),
           "test": make(n_test, "ts")}
    vocab = Vocabulary.build(
        [p for split in raw.values() for p, q, s, a in split]
        + [q for split in raw.values() for p, q, s, a in split], min_count=1)

    def encode(split):
        return [QAInstance(paragraph=vocab.encode(p), question=vocab.encode(q),
                           span=s, article_id=a, paragraph_tokens=p,
                           question_tokens=q)
                for p, q, s, a in split]

    return encode(raw["train"]), encode(raw["dev"]), encode(raw["test"]), vocab


def typed_value_splits(seed=0, n_train=2000, n_dev=300, n_test=500,
                       per_article=5, n_attrs=8, n_entities=54,
                       vals_per_attr=16):
    """Two-fact corpus whose answers are typed by attribute.

    Each attribute owns a disjoint value pool, so the question->answer-type
    correlation is a first-order embedding statistic (compare when->date,
    who->person in natural data), while two facts per paragraph keep the
    question necessary. Default sizes put the vocabulary at exactly 200.
    """
    rng = np.random.default_rng(seed)
    attrs = [_word("attr", i) for i in range(n_attrs)]
    entities = [_word("ent", i) for i in range(n_entities)]
    pools = {a: [_word(f"{a}v", i) for i in range(vals_per_attr)]
             for a in attrs}

    def make(count, art_prefix):
        out = []
        for i in range(count):
            ent = entities[int(rng.integers(n_entities))]
            a1, a2 = (attrs[int(j)] for j in
                      rng.choice(n_attrs, size=2, replace=False))
            v1 = pools[a1][int(rng.integers(vals_per_attr))]
            v2 = pools[a2][int(rng.integers(vals_per_attr))]
            para = (f"the {ent} {a1} is {v1} . "
                    f"the {ent} {a2} is {v2} .").split()
            fact = int(rng.integers(2))
            attr, pos = (a1, 5) if fact == 0 else (a2, 11)
            question = f"what is the {attr} of the {ent}".split()
            out.append((para, question, (pos, pos),
                        f"{art_prefix}{i // per_article}"))
        return out

    raw = {"train": make(n_train, "tr"), "dev": make(n_dev, "dv"),
           "test": make(n_test, "ts")}
    vocab = Vocabulary.build(
        [p for split in raw.values() for p, q, s, a in split]
        + [q for split in raw.values() for p, q, s, a in split], min_count=1)

    def encode(split):
        return [QAInstance(paragraph=vocab.encode(p), question=vocab.encode(q),
                           span=s, article_id=a, paragraph_tokens=p,
                           question_tokens=q)
                for p, q, s, a in split]

    return encode(raw["train"]), encode(raw["dev"]), encode(raw["test"]), vocab


def reinforce_estimates(n_samples, gen_seed=7):
    """Single-step policy task with an exactly differentiable objective.

    The policy picks one symbol from p_overall over a one-token paragraph
    ["a"]; reward is 1.0 for emitting "a" and 0.5 otherwise, so E[reward] =
    0.5 + 0.5 * p_overall["a"] and its gradient is computable by backprop
    directly. The 0.5 offset is shared by every outcome, which is exactly
    the component a reward baseline exists to cancel. Returns (exact_grad,
    rewards, per_sample_score_grads) as flat arrays.
    """
    vocab = Vocabulary(["a", "b"])
    g = Generator(vocab, embed_dim=3, hidden_dim=4, max_len=1, seed=gen_seed)
    ids, toks, span = vocab.encode(["a"]), ["a"], (1, 1)
    types = ParagraphTypes(vocab, toks)
    names = g.store.names()

    def flat_grads():
        return np.concatenate([g.store[n].grad.ravel() for n in names])

    with GradTape() as tape:
        h = g.encode(ids, span)
        step = g.decode_step(g.init_state(h), h, EOS_ID, types)
        expected_reward = pick(step.p_overall, types.ext_id("a")) * 0.5
        g.store.zero_grad()
        tape.backward(expected_reward)
    exact = flat_grads()

    rewards = np.empty(n_samples)
    grads = np.empty((n_samples, exact.size))
    for i in range(n_samples):
        s = g.sample_question(ids, toks, span, max_len=1, seed=i)
        rewards[i] = 1.0 if s.tokens == ["a"] else 0.5
        with GradTape() as tape:
            lp = g.sequence_log_prob(ids, toks, span, s.tokens, ended=s.ended)
            g.store.zero_grad()
            tape.backward(lp)
        grads[i] = flat_grads()
    return exact, rewards, grads


def strip_wall(trace):
    return [{k: v for k, v in rec.items() if k != "wall_ms"} for rec in trace]


def squad_json(instances):
    """SQuAD v1.1-style payload reproducing surface-token instances.

    Contexts are single-space joins, so character offsets recover the
    original token spans exactly.
    """
    articles = {}
    for x in instances:
        context = " ".join(x.paragraph_tokens)
        j, k = x.span
        start = sum(len(t) + 1 for t in x.paragraph_tokens[:j - 1])
        articles.setdefault(x.article_id, {}).setdefault(context, []).append({
            "question": " ".join(x.question_tokens),
            "answers": [{"answer_start": start,
                         "text": " ".join(x.paragraph_tokens[j - 1:k])}],
        })
    return {"version": "1.1", "data": [
        {"title": art, "paragraphs": [{"context": ctx, "qas": qas}
                                      for ctx, qas in paras.items()]}
        for art, paras in articles.items()]}


def unlabeled_jsonl(instances, answer_type="Other Entity"):
    """Unlabeled-corpus JSON lines carrying each instance's answer span."""
    lines = []
    for x in instances:
        j, k = x.span
        lines.append(json.dumps({
            "article_id": x.article_id, "tokens": x.paragraph_tokens,
            "answers": [{"start": j, "end": k, "type": answer_type}]}))
    return "\n".join(lines) + "\n"
