"""Question generation model G: P(question | paragraph, answer span).

Sequence-to-sequence with a copy mechanism. The encoder reads the paragraph
with a 0/1 answer-position feature appended to each word embedding; the
decoder is a GRU with bilinear attention over encoder states whose output
mixes a vocabulary softmax with a copy distribution over paragraph token
types:

    p_overall = g_t * p_vocab + (1 - g_t) * p_copy,   g_t = sigmoid(w_g . h_t)

p_copy lives on an extended id space: the vocabulary followed by one id per
out-of-vocabulary surface type present in the paragraph, so copied tokens
keep their surface form even when unknown to the vocabulary.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import EOS_ID, UNK_ID
from .numerics import (
    GRUCell, ParamStore, Tensor, add_n, bi_gru, concat, constant, gather_rows,
    log, matmul, narrow, pick, pick_row, scatter_sum, sigmoid, softmax, sub,
)


class GeneratorError(Exception):
    """Invalid generator input or configuration."""


def collapse_repeats(tokens):
    """Delete second copies of adjacent duplicated n-grams, n = 4 down to 1.

    Applied repeatedly until nothing changes; the result is a fixed point
    (idempotent post-processing of decoded questions).
    """
    toks = list(tokens)
    changed = True
    while changed:
        changed = False
        for n in range(4, 0, -1):
            i = 0
            while i + 2 * n <= len(toks):
                if toks[i:i + n] == toks[i + n:i + 2 * n]:
                    del toks[i + n:i + 2 * n]
                    changed = True
                else:
                    i += 1
    return toks


@dataclass
class GenerationSample:
    """One decoded question with its log-probability bookkeeping.

    ``tokens`` holds surface forms without the end marker; ``step_log_probs``
    includes the end-marker step when the sequence stopped by itself, so
    ``total`` is the full sequence log-probability.
    """
    tokens: list
    step_log_probs: list
    total: float
    sampled: bool
    ended: bool


@dataclass
class DecodeStep:
    p_overall: Tensor
    gate: Tensor
    state: Tensor
    p_vocab: Tensor
    p_positions: Tensor
    context: Tensor


@dataclass
class MleResult:
    loss: Tensor
    steps: int
    unk_mapped: int


class ParagraphTypes:
    """Extended id space for one paragraph: vocabulary + OOV surface types."""

    def __init__(self, vocab, surfaces):
        self.vocab = vocab
        self.oov = []
        index = {}
        self.position_ids = []
        for tok in surfaces:
            if tok in vocab:
                self.position_ids.append(vocab.id(tok))
            else:
                if tok not in index:
                    index[tok] = len(vocab) + len(self.oov)
                    self.oov.append(tok)
                self.position_ids.append(index[tok])
        self.size = len(vocab) + len(self.oov)

    def token(self, ext_id):
        if ext_id < len(self.vocab):
            return self.vocab.token(ext_id)
        return self.oov[ext_id - len(self.vocab)]

    def ext_id(self, tok):
        """Extended id of a surface token, or UNK when nowhere to be found."""
        if tok in self.vocab:
            return self.vocab.id(tok)
        base = len(self.vocab)
        for i, o in enumerate(self.oov):
            if o == tok:
                return base + i
        return UNK_ID

    def embed_id(self, ext_id):
        return ext_id if ext_id < len(self.vocab) else UNK_ID


class Generator:
    """Answer-conditioned question generator with copy mechanism."""

    def __init__(self, vocab, embed_dim=32, hidden_dim=64, max_len=20, seed=0):
        if hidden_dim % 2:
            raise GeneratorError("hidden_dim must be even (one half per direction)")
        self.vocab = vocab
        self.config = {"embed_dim": embed_dim, "hidden_dim": hidden_dim,
                       "max_len": max_len}
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.max_len = max_len

        v = len(vocab)
        store = ParamStore(seed)
        self.emb = store.add("emb", (v, embed_dim))
        half = hidden_dim // 2
        self.enc_cells = (GRUCell(store, "enc.fwd", embed_dim + 1, half),
                          GRUCell(store, "enc.bwd", embed_dim + 1, half))
        self.dec = GRUCell(store, "dec", embed_dim + hidden_dim, hidden_dim)
        self.w_att = store.add("w_att", (hidden_dim, hidden_dim))
        self.w_copy = store.add("w_copy", (hidden_dim, hidden_dim))
        self.w_g = store.add("w_g", (hidden_dim,))
        self.w_init = store.add("w_init", (hidden_dim, hidden_dim))
        self.b_init = store.add("b_init", (hidden_dim,), init="zeros")
        self.w_out = store.add("w_out", (v, 2 * hidden_dim))
        self.b_out = store.add("b_out", (v,), init="zeros")
        self.store = store

    def _check(self, p_ids, span):
        if len(p_ids) == 0:
            raise GeneratorError("empty paragraph")
        arr = np.asarray(p_ids)
        if arr.min() < 0 or arr.max() >= len(self.vocab):
            raise GeneratorError("paragraph token id outside the vocabulary")
        j, k = span
        if not (1 <= j <= k <= len(p_ids)):
            raise GeneratorError(
                f"answer span ({j},{k}) out of range for {len(p_ids)} tokens")

    def encode(self, p_ids, span):
        """Encoder states, one row per paragraph token.

        Each input is the word embedding with a 0/1 feature appended; the
        feature is 1 exactly on the answer span.
        """
        self._check(p_ids, span)
        j, k = span
        rows = gather_rows(self.emb, list(p_ids))
        xs = []
        for t in range(len(p_ids)):
            feat = 1.0 if j - 1 <= t <= k - 1 else 0.0
            xs.append(concat([pick_row(rows, t), constant([feat])]))
        return bi_gru(xs, *self.enc_cells)

    def init_state(self, h_enc):
        """Decoder start state: affine map of the final encoder state."""
        half = self.hidden_dim // 2
        fwd_last = narrow(pick_row(h_enc, h_enc.shape[0] - 1), 0, 0, half)
        bwd_first = narrow(pick_row(h_enc, 0), 0, half, half)
        final = concat([fwd_last, bwd_first])
        return matmul(self.w_init, final) + self.b_init

    def decode_step(self, state, h_enc, prev_ext_id, types):
        """One decoder step given the previous token's extended id."""
        att = softmax(matmul(h_enc, matmul(state, self.w_att)))
        context = matmul(att, h_enc)
        prev_emb = pick_row(self.emb, types.embed_id(prev_ext_id))
        new_state = self.dec.step(concat([prev_emb, context]), state)

        gate = sigmoid(matmul(self.w_g, new_state))
        p_vocab = softmax(matmul(self.w_out, concat([new_state, context])) + self.b_out)
        p_positions = softmax(matmul(h_enc, matmul(new_state, self.w_copy)))
        p_copy = scatter_sum(p_positions, types.position_ids, types.size)

        gen_part = p_vocab * gate
        if types.oov:
            gen_part = concat([gen_part, constant(np.zeros(len(types.oov)))])
        p_overall = gen_part + p_copy * sub(1.0, gate)
        return DecodeStep(p_overall, gate, new_state, p_vocab, p_positions, context)

    def _run(self, p_ids, surfaces, span, max_len, next_ext_id):
        """Shared decode loop; next_ext_id(step_index, p_overall) picks tokens.

        The same code path serves sampling, greedy decoding, and teacher
        forcing, so re-scoring a sampled sequence reproduces its per-step
        log-probabilities bit for bit.
        """
        if max_len < 1:
            raise GeneratorError("max_len must be >= 1")
        if len(surfaces) != len(p_ids):
            raise GeneratorError("paragraph ids and surface tokens differ in length")
        types = ParagraphTypes(self.vocab, surfaces)
        h_enc = self.encode(p_ids, span)
        state = self.init_state(h_enc)
        prev = EOS_ID
        ext_ids, log_probs = [], []
        ended = False
        for t in range(max_len):
            step = self.decode_step(state, h_enc, prev, types)
            ext = next_ext_id(t, step.p_overall)
            log_probs.append(log(pick(step.p_overall, ext)))
            if ext == EOS_ID:
                ended = True
                break
            ext_ids.append(ext)
            state = step.state
            prev = ext
        return types, ext_ids, log_probs, ended

    def sample_question(self, p_ids, surfaces, span, max_len=None, seed=0):
        """Ancestral sampling from p_overall; deterministic per seed."""
        max_len = self.max_len if max_len is None else max_len
        rng = np.random.default_rng(seed)

        def pick_next(t, p_overall):
            cum = np.cumsum(p_overall.data)
            return min(int(np.searchsorted(cum, rng.random(), side="right")),
                       len(cum) - 1)

        types, ext_ids, log_probs, ended = self._run(
            p_ids, surfaces, span, max_len, pick_next)
        values = [lp.item() for lp in log_probs]
        return GenerationSample(
            tokens=[types.token(e) for e in ext_ids],
            step_log_probs=values, total=float(sum(values)),
            sampled=True, ended=ended)

    def greedy_sample(self, p_ids, surfaces, span, max_len=None):
        """Argmax decoding with the same bookkeeping as sampling."""
        max_len = self.max_len if max_len is None else max_len

        def pick_next(t, p_overall):
            return int(np.argmax(p_overall.data))

        types, ext_ids, log_probs, ended = self._run(
            p_ids, surfaces, span, max_len, pick_next)
        values = [lp.item() for lp in log_probs]
        return GenerationSample(
            tokens=[types.token(e) for e in ext_ids],
            step_log_probs=values, total=float(sum(values)),
            sampled=False, ended=ended)

    def greedy_question(self, p_ids, surfaces, span, max_len=None):
        """Greedy decode, then collapse adjacent repeated n-grams."""
        return collapse_repeats(self.greedy_sample(p_ids, surfaces, span,
                                                   max_len).tokens)

    def score_question(self, p_ids, surfaces, span, question_tokens, ended=True):
        """Teacher-forced log P of a question; mirrors generation exactly.

        Gold tokens absent from both the vocabulary and the paragraph map to
        UNK and are counted. Returns (per-step log-prob Tensors, unk count).
        """
        types = ParagraphTypes(self.vocab, surfaces)
        targets, unk = [], 0
        for tok in question_tokens:
            ext = types.ext_id(tok)
            if ext == UNK_ID and tok != self.vocab.token(UNK_ID):
                unk += 1
            targets.append(ext)
        if ended:
            targets.append(EOS_ID)
        if not targets:
            raise GeneratorError("nothing to score: empty unterminated question")

        def pick_next(t, p_overall):
            return targets[t]

        _, _, log_probs, _ = self._run(p_ids, surfaces, span,
                                       len(targets), pick_next)
        return log_probs, unk

    def sequence_log_prob(self, p_ids, surfaces, span, question_tokens, ended=True):
        log_probs, _ = self.score_question(p_ids, surfaces, span,
                                           question_tokens, ended)
        total = add_n(log_probs) if len(log_probs) > 1 else log_probs[0]
        return total

    def mle_loss(self, batch):
        """Teacher-forcing NLL, averaged over instances (minimize).

        Each instance contributes -sum_t log P(q_t), with the end marker as
        the final step.
        """
        if not batch:
            raise GeneratorError("empty batch")
        terms, steps, unk_total = [], 0, 0
        for inst in batch:
            log_probs, unk = self.score_question(
                inst.paragraph, inst.paragraph_tokens, inst.span,
                inst.question_tokens, ended=True)
            total = add_n(log_probs) if len(log_probs) > 1 else log_probs[0]
            terms.append(total)
            steps += len(log_probs)
            unk_total += unk
        summed = add_n(terms) if len(terms) > 1 else terms[0]
        loss = summed * (-1.0 / len(batch))
        return MleResult(loss, steps, unk_total)
