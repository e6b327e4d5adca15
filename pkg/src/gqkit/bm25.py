"""Okapi BM25 over a small in-memory collection (a document's sentences)."""
from __future__ import annotations

import math
from collections import Counter

from .textutil import word_tokens


class BM25:
    """BM25 ranking with k1/b parameters; idf = ln(1 + (N - df + 0.5)/(df + 0.5))."""

    def __init__(self, docs: list[str], k1: float = 1.5, b: float = 0.75):
        if not docs:
            raise ValueError("BM25 collection must be non-empty")
        self.k1 = k1
        self.b = b
        self._term_freqs = [Counter(word_tokens(d)) for d in docs]
        self._doc_lens = [sum(tf.values()) for tf in self._term_freqs]
        self.n_docs = len(docs)
        self.avgdl = sum(self._doc_lens) / self.n_docs
        df: Counter = Counter()
        for tf in self._term_freqs:
            df.update(tf.keys())
        self._idf = {
            t: math.log(1.0 + (self.n_docs - n + 0.5) / (n + 0.5)) for t, n in df.items()
        }

    def score(self, query: str, index: int) -> float:
        """Score of the 0-based collection document `index` against `query`."""
        tf = self._term_freqs[index]
        dl = self._doc_lens[index]
        norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl) if self.avgdl > 0 else self.k1
        s = 0.0
        for t in word_tokens(query):
            f = tf.get(t)
            if not f:
                continue
            s += self._idf[t] * f * (self.k1 + 1.0) / (f + norm)
        return s

    def scores(self, query: str) -> list[float]:
        return [self.score(query, i) for i in range(self.n_docs)]

    def best(self, query: str) -> int:
        """0-based index of the top-scoring document; ties go to the lower index."""
        best_i, best_s = 0, float("-inf")
        for i, s in enumerate(self.scores(query)):
            if s > best_s:
                best_i, best_s = i, s
        return best_i
