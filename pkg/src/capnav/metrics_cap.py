"""Multi-reference caption metrics: BLEU-1..4, ROUGE-L, CIDEr-D.

Tokenization: lowercase, ASCII punctuation stripped, whitespace split.
BLEU uses clipped counts, closest-reference brevity penalty and no
smoothing. ROUGE-L is the LCS F-measure with beta = 1.2, max over
references. CIDEr-D uses n = 1..4 TF-IDF vectors with clipped similarity,
a length gaussian (sigma = 6) and the conventional x10 scale.
"""

from __future__ import annotations

import math
import string
from collections import Counter, defaultdict
from typing import Sequence

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

TokenSeq = list[str]


def tokenize(text) -> TokenSeq:
    """Normalize a caption (or pass through an existing token list)."""
    if isinstance(text, str):
        return text.lower().translate(_PUNCT_TABLE).split()
    return [str(t) for t in text]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate, refs: Sequence, max_n: int = 4) -> list[float]:
    """Cumulative BLEU-1..max_n for one candidate against its references."""
    if not refs:
        raise ValueError("BLEU needs at least one reference")
    cand = tokenize(candidate)
    ref_tokens = [tokenize(r) for r in refs]
    if not cand:
        return [0.0] * max_n

    c = len(cand)
    # closest reference length, ties to the shorter
    r = min((abs(len(t) - c), len(t)) for t in ref_tokens)[1]
    bp = 1.0 if c > r else (math.exp(1.0 - r / c) if c > 0 else 0.0)

    precisions = []
    for n in range(1, max_n + 1):
        counts = _ngrams(cand, n)
        if not counts:
            precisions.append(0.0)
            continue
        max_ref = Counter()
        for t in ref_tokens:
            for gram, k in _ngrams(t, n).items():
                if k > max_ref[gram]:
                    max_ref[gram] = k
        clipped = sum(min(k, max_ref[gram]) for gram, k in counts.items())
        precisions.append(clipped / sum(counts.values()))

    scores = []
    for n in range(1, max_n + 1):
        if any(p == 0.0 for p in precisions[:n]):
            scores.append(0.0)
        else:
            scores.append(bp * math.exp(sum(math.log(p) for p in precisions[:n]) / n))
    return scores


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, refs: Sequence, beta: float = 1.2) -> float:
    """LCS F-measure, max over references."""
    if not refs:
        raise ValueError("ROUGE-L needs at least one reference")
    cand = tokenize(candidate)
    if not cand:
        return 0.0
    best = 0.0
    for ref in refs:
        rt = tokenize(ref)
        if not rt:
            continue
        lcs = _lcs_len(cand, rt)
        if lcs == 0:
            continue
        p = lcs / len(cand)
        r = lcs / len(rt)
        best = max(best, ((1 + beta**2) * r * p) / (r + beta**2 * p))
    return best


class CorpusIdf:
    """Reference-corpus document frequencies for n-grams up to `max_n`."""

    def __init__(self, refs_corpus: Sequence[Sequence], max_n: int = 4):
        if len(refs_corpus) < 2:
            raise ValueError("CIDEr needs a corpus of at least 2 items for a usable IDF")
        self.max_n = max_n
        self.corpus_size = len(refs_corpus)
        self.df: dict[tuple, float] = defaultdict(float)
        for refs in refs_corpus:
            seen = set()
            for ref in refs:
                tokens = tokenize(ref)
                for n in range(1, max_n + 1):
                    seen.update(_ngrams(tokens, n).keys())
            for gram in seen:
                self.df[gram] += 1.0

    def vector(self, tokens: Sequence[str]):
        """Per-n TF-IDF maps, norms, and the token length."""
        log_n = math.log(self.corpus_size)
        vecs = [defaultdict(float) for _ in range(self.max_n)]
        norms = [0.0] * self.max_n
        for n in range(1, self.max_n + 1):
            for gram, tf in _ngrams(tokens, n).items():
                idf = log_n - math.log(max(1.0, self.df[gram]))
                vecs[n - 1][gram] = tf * idf
                norms[n - 1] += (tf * idf) ** 2
        return vecs, [math.sqrt(v) for v in norms], len(tokens)


def cider_d(
    candidates: Sequence,
    references: Sequence[Sequence],
    max_n: int = 4,
    sigma: float = 6.0,
    idf: CorpusIdf | None = None,
) -> tuple[float, list[float]]:
    """CIDEr-D over a corpus: (mean score, per-item scores), x10 scale."""
    if len(candidates) != len(references):
        raise ValueError("need one reference list per candidate")
    idf = idf or CorpusIdf(references, max_n)
    scores = []
    for cand, refs in zip(candidates, references):
        if not refs:
            raise ValueError("CIDEr needs at least one reference per item")
        cvecs, cnorms, clen = idf.vector(tokenize(cand))
        per_n = [0.0] * max_n
        for ref in refs:
            rvecs, rnorms, rlen = idf.vector(tokenize(ref))
            delta = float(clen - rlen)
            gauss = math.exp(-(delta**2) / (2.0 * sigma**2))
            for n in range(max_n):
                val = 0.0
                for gram, cw in cvecs[n].items():
                    val += min(cw, rvecs[n][gram]) * rvecs[n][gram]
                if cnorms[n] != 0.0 and rnorms[n] != 0.0:
                    val /= cnorms[n] * rnorms[n]
                per_n[n] += val * gauss
        score = sum(per_n) / max_n / len(refs)
        scores.append(score * 10.0)
    return (sum(scores) / len(scores) if scores else 0.0), scores


def penalized(scores, l_gt: float, l_pred: float):
    """Scale metric value(s) by r = L_gt / max(L_gt, L_pred)."""
    if l_gt <= 0.0:
        raise ValueError("ground-truth trajectory length must be positive")
    r = l_gt / max(l_gt, l_pred)
    if isinstance(scores, dict):
        return {k: v * r for k, v in scores.items()}
    if isinstance(scores, (list, tuple)):
        return type(scores)(v * r for v in scores)
    return scores * r
