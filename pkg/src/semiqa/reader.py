"""Span-prediction model D: multi-layer gated-attention reader.

Computes P(answer span | paragraph, question). Both sequences are encoded
with bidirectional GRUs; K attention layers gate the paragraph representation
by the question; two independent heads produce start/end distributions over
paragraph positions. An optional domain tag token is appended to both inputs
and its position is masked out of the prediction support.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import D_GEN_ID, D_TRUE_ID
from .numerics import (
    GRUCell, ParamStore, bi_gru, gather_rows, log, masked_softmax, matmul,
    pick, pick_row, row_softmax, transpose, add_n, mul,
)

TAG_IDS = (D_TRUE_ID, D_GEN_ID)


class ReaderError(Exception):
    """Invalid reader input or configuration."""


def ga_layer(h_p, h_q):
    """Gated attention: row i becomes sum_j alpha_ij (h_q[j] * h_p[i]).

    alpha_i is the softmax over question positions of <h_q[j], h_p[i]>.
    Output keeps the paragraph shape T x d.
    """
    if h_p.data.ndim != 2 or h_q.data.ndim != 2:
        raise ReaderError("ga_layer expects 2-D inputs")
    if h_p.shape[1] != h_q.shape[1]:
        raise ReaderError(
            f"ga_layer width mismatch: paragraph d={h_p.shape[1]}, "
            f"question d={h_q.shape[1]}")
    alpha = row_softmax(matmul(h_p, transpose(h_q)))
    return mul(matmul(alpha, h_q), h_p)


def decode_span(start, end, span_max):
    """Argmax span (1-based, inclusive) of start[j] * end[k].

    Constraints: j <= k and k - j < span_max. Ties prefer the shorter span,
    then the smaller start index.
    """
    t = len(start)
    if t == 0 or len(end) != t:
        raise ReaderError("decode_span needs equal-length distributions")
    best, best_key = None, None
    for j in range(t):
        for k in range(j, min(j + span_max, t)):
            key = (start[j] * end[k], -(k - j), -j)
            if best_key is None or key > best_key:
                best_key, best = key, (j + 1, k + 1)
    return best


@dataclass
class SpanPrediction:
    start: np.ndarray
    end: np.ndarray
    span: tuple


def span_objective(start, end, span):
    """log start[j] + log end[k] for a 1-based inclusive span (j, k)."""
    j, k = span
    return log(pick(start, j - 1)) + log(pick(end, k - 1))


class Reader:
    """Gated-attention span reader with domain-tag masking."""

    def __init__(self, vocab_size, embed_dim=32, hidden_dim=64, layers=2,
                 span_max=15, max_paragraph=850, seed=0, embeddings=None):
        if layers < 1:
            raise ReaderError("need at least one attention layer")
        if hidden_dim % 2:
            raise ReaderError("hidden_dim must be even (one half per direction)")
        if vocab_size <= max(TAG_IDS):
            raise ReaderError("vocabulary too small for the reserved tokens")
        self.config = {
            "vocab_size": vocab_size, "embed_dim": embed_dim,
            "hidden_dim": hidden_dim, "layers": layers, "span_max": span_max,
            "max_paragraph": max_paragraph,
        }
        self.vocab_size = vocab_size
        self.layers = layers
        self.span_max = span_max
        self.max_paragraph = max_paragraph

        store = ParamStore(seed)
        self.emb = store.add("emb", (vocab_size, embed_dim))
        if embeddings is not None:
            if np.shape(embeddings) != (vocab_size, embed_dim):
                raise ReaderError("pretrained embedding shape mismatch")
            self.emb.data[...] = embeddings
        half = hidden_dim // 2
        self.p_cells = (GRUCell(store, "p_enc.fwd", embed_dim, half),
                        GRUCell(store, "p_enc.bwd", embed_dim, half))
        self.q_cells = (GRUCell(store, "q_enc.fwd", embed_dim, half),
                        GRUCell(store, "q_enc.bwd", embed_dim, half))
        self.re_cells = [
            (GRUCell(store, f"re{k}.fwd", hidden_dim, half),
             GRUCell(store, f"re{k}.bwd", hidden_dim, half))
            for k in range(1, layers)
        ]
        self.w_start = store.add("w_start", (hidden_dim,))
        self.w_end = store.add("w_end", (hidden_dim,))
        self.store = store

    @classmethod
    def from_config(cls, config, seed=0):
        return cls(**config, seed=seed)

    def _check_ids(self, ids, what):
        if len(ids) == 0:
            raise ReaderError(f"empty {what}")
        arr = np.asarray(ids)
        if arr.min() < 0 or arr.max() >= self.vocab_size:
            raise ReaderError(f"{what} token id outside the vocabulary")

    def _embed_seq(self, ids):
        rows = gather_rows(self.emb, list(ids))
        return [pick_row(rows, t) for t in range(len(ids))]

    def forward(self, p_ids, q_ids, tag=None):
        """Start/end distributions over paragraph positions.

        Returns (start_probs, end_probs, keep) where keep marks positions a
        span may use; domain-tag positions are masked to exactly zero.
        """
        p_ids, q_ids = list(p_ids), list(q_ids)
        if tag is not None:
            if p_ids and p_ids[-1] in TAG_IDS:
                raise ReaderError("instance already carries a domain tag")
            p_ids = p_ids + [tag.token_id]
            q_ids = q_ids + [tag.token_id]
        self._check_ids(p_ids, "paragraph")
        self._check_ids(q_ids, "question")
        if len(p_ids) > self.max_paragraph:
            raise ReaderError(
                f"paragraph of {len(p_ids)} tokens exceeds the configured "
                f"maximum {self.max_paragraph}")

        h_p = bi_gru(self._embed_seq(p_ids), *self.p_cells)
        h_q = bi_gru(self._embed_seq(q_ids), *self.q_cells)
        for k in range(self.layers):
            h_p = ga_layer(h_p, h_q)
            if k < self.layers - 1:
                fwd, bwd = self.re_cells[k]
                h_p = bi_gru([pick_row(h_p, t) for t in range(len(p_ids))], fwd, bwd)

        keep = np.array([i not in TAG_IDS for i in p_ids])
        start = masked_softmax(matmul(h_p, self.w_start), keep)
        end = masked_softmax(matmul(h_p, self.w_end), keep)
        return start, end, keep

    def predict_span(self, p_ids, q_ids, tag=None):
        start, end, _ = self.forward(p_ids, q_ids, tag)
        s, e = start.data.copy(), end.data.copy()
        return SpanPrediction(s, e, decode_span(s, e, self.span_max))

    def span_log_prob(self, p_ids, q_ids, span, tag=None):
        """log P(start = j) + log P(end = k) for one instance."""
        start, end, keep = self.forward(p_ids, q_ids, tag)
        j, k = span
        if not (1 <= j <= k <= len(keep)):
            raise ReaderError(f"gold span ({j},{k}) outside the paragraph")
        if not (keep[j - 1] and keep[k - 1]):
            raise ReaderError("gold span touches a masked domain-tag position")
        return span_objective(start, end, span)

    def d_loss(self, batch, tag=None):
        """Objective J: per-instance average span log-likelihood (maximize)."""
        if not batch:
            raise ReaderError("empty batch")
        terms = [self.span_log_prob(x.paragraph, x.question, x.span, tag)
                 for x in batch]
        total = add_n(terms) if len(terms) > 1 else terms[0]
        return total * (1.0 / len(terms))
